use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bundle::{component_q, global_action, TrainedBundle};
use super::learner::{Batch, FlowLedger, Learner, StepLosses};
use super::methods::{Due, MethodRegistry};
use super::AgentError;
use crate::config::{ConfigError, RunConfig};
use crate::envs::{make_env, EpisodeStep};
use crate::replay::ReplayBuffer;

const EVAL_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// One line of `train_log.csv`, written when an episode ends. Loss fields
/// average the updates since the previous line.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub episode_return: f64,
    pub loss_interv: Option<f64>,
    pub loss_reward: Option<f64>,
    pub loss_sparse: Option<f64>,
    pub loss_orth: Option<f64>,
    pub td_loss: Option<f64>,
    pub epsilon: f64,
}

pub const LOG_HEADER: [&str; 8] = [
    "step",
    "episode_return",
    "loss_interv",
    "loss_reward",
    "loss_sparse",
    "loss_orth",
    "td_loss",
    "epsilon",
];

impl LogRow {
    pub fn fields(&self) -> [String; 8] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.step.to_string(),
            self.episode_return.to_string(),
            opt(self.loss_interv),
            opt(self.loss_reward),
            opt(self.loss_sparse),
            opt(self.loss_orth),
            opt(self.td_loss),
            self.epsilon.to_string(),
        ]
    }
}

#[derive(Default)]
struct Running {
    sums: [f64; 5],
    counts: [u32; 5],
}

impl Running {
    fn add(&mut self, l: &StepLosses) {
        for (i, v) in [l.interv, l.reward, l.sparse, l.orth, l.td].into_iter().enumerate() {
            if let Some(v) = v {
                self.sums[i] += v;
                self.counts[i] += 1;
            }
        }
    }

    fn take(&mut self) -> [Option<f64>; 5] {
        let out = std::array::from_fn(|i| {
            (self.counts[i] > 0).then(|| self.sums[i] / self.counts[i] as f64)
        });
        *self = Running::default();
        out
    }
}

/// Output of a training run.
pub struct TrainRun {
    pub bundle: TrainedBundle,
    pub log: Vec<LogRow>,
    pub flow: FlowLedger,
    pub sync_steps: Vec<u64>,
}

/// Trains `cfg.method` on `cfg.env` with seed `cfg.seed()`.
///
/// Acts ε-greedily on the summed component Q, stores every transition,
/// and after `learning_start` runs the method's update blocks on their
/// periods n1..n4. Targets are synchronised every `target_sync` steps.
pub fn train(cfg: &RunConfig) -> Result<TrainRun, AgentError> {
    cfg.validate()?;
    let registry = MethodRegistry::builtin();
    let method = registry
        .get(&cfg.method)
        .ok_or_else(|| ConfigError::Inconsistent(format!("unknown method {:?}", cfg.method)))?;
    let spec = method.spec();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
    let mut env = make_env(&cfg.env, &cfg.env_settings())?;
    let bundle = TrainedBundle::new(cfg, env.as_ref(), &mut rng)?;
    let mut learner = Learner::new(bundle);
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let actions = env.action_count();

    let mut state = env.reset(rng.next_u64());
    let mut episode_return = 0.0;
    let mut running = Running::default();
    let mut log = Vec::new();

    for step in 0..cfg.total_steps {
        let eps = cfg.epsilon_at(step);
        let action = if rng.gen::<f64>() < eps {
            rng.gen_range(0..actions)
        } else {
            global_action(&component_q(&learner.bundle, &state))
        };
        let out = env.step(action)?;
        episode_return += out.reward.total;
        let finished = out.done || out.truncated;
        replay.push(EpisodeStep {
            state: std::mem::replace(&mut state, out.state.clone()),
            action,
            reward: out.reward,
            next_state: out.state,
            done: out.done,
        });

        let t = step + 1;
        if t >= cfg.learning_start && replay.len() >= cfg.batch_size {
            let due = Due {
                distill: t % cfg.n1 == 0,
                orthogonality: t % cfg.n2 == 0,
                td_full: t % cfg.n3 == 0,
                td_component: t % cfg.n4 == 0,
            };
            if due.any() {
                let steps = replay.sample(cfg.batch_size, &mut rng)?;
                let mut batch = Batch::new(&learner.bundle, &steps);
                if due.distill && spec.masks {
                    batch = batch.with_interventions(
                        &learner.bundle,
                        env.as_ref(),
                        &steps,
                        cfg.eps_intervention,
                        &mut rng,
                    )?;
                }
                let losses = method.update(&mut learner, &batch, due)?;
                running.add(&losses);
            }
        }
        if t % cfg.target_sync == 0 {
            learner.sync_targets(t);
        }

        if finished {
            let [li, lr, ls, lo, lt] = running.take();
            log.push(LogRow {
                step: t,
                episode_return,
                loss_interv: li,
                loss_reward: lr,
                loss_sparse: ls,
                loss_orth: lo,
                td_loss: lt,
                epsilon: eps,
            });
            episode_return = 0.0;
            state = env.reset(rng.next_u64());
        }
    }

    let flow = learner.flow.clone();
    let sync_steps = learner.sync_steps.clone();
    let mut bundle = learner.into_bundle();
    bundle.steps = cfg.total_steps;
    Ok(TrainRun {
        bundle,
        log,
        flow,
        sync_steps,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub returns: Vec<f64>,
    pub mean_return: f64,
}

/// Greedy rollouts of a frozen bundle.
pub fn evaluate(bundle: &TrainedBundle, episodes: usize, seed: u64) -> Result<EvalReport, AgentError> {
    let cfg = &bundle.config;
    let mut env = make_env(&cfg.env, &cfg.env_settings())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ EVAL_SALT);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = env.reset(rng.next_u64());
        let mut ret = 0.0;
        loop {
            let a = global_action(&component_q(bundle, &s));
            let out = env.step(a)?;
            ret += out.reward.total;
            if out.done || out.truncated {
                break;
            }
            s = out.state;
        }
        returns.push(ret);
    }
    let mean_return = if returns.is_empty() {
        0.0
    } else {
        returns.iter().sum::<f64>() / returns.len() as f64
    };
    Ok(EvalReport {
        returns,
        mean_return,
    })
}

/// States visited by greedy rollouts, for metrics: up to `max_states`
/// from `episodes` episodes, in visiting order.
pub fn greedy_states(
    bundle: &TrainedBundle,
    episodes: usize,
    max_states: usize,
    seed: u64,
) -> Result<Vec<crate::envs::State>, AgentError> {
    let cfg = &bundle.config;
    let mut env = make_env(&cfg.env, &cfg.env_settings())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ EVAL_SALT ^ 1);
    let mut out = Vec::new();
    for _ in 0..episodes {
        let mut s = env.reset(rng.next_u64());
        loop {
            if out.len() >= max_states {
                return Ok(out);
            }
            out.push(s.clone());
            let a = global_action(&component_q(bundle, &s));
            let step = env.step(a)?;
            if step.done || step.truncated {
                break;
            }
            s = step.state;
        }
    }
    Ok(out)
}
