//! Tabular set-ups shared by the oracle and acceptance tests.

#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cdrl_core::agents::{AgentError, Batch, GroupKind, Learner, TrainedBundle};
use cdrl_core::approx::{Layer, Network};
use cdrl_core::config::RunConfig;
use cdrl_core::envs::{ChainEnv, EpisodeStep, RewardVector};

pub type TdUpdate = fn(&mut Learner, &Batch) -> Result<f64, AgentError>;

/// Exact Q-values of a chain: the total-reward optimum and each channel
/// evaluated under the greedy total-reward policy (ties to the lower
/// action). Indexed `[s][a]`, channels `[i][s][a]`.
pub struct ChainOracle {
    pub total: Vec<[f64; 2]>,
    pub channels: Vec<Vec<[f64; 2]>>,
}

pub fn chain_oracle(env: &ChainEnv, gamma: f64) -> ChainOracle {
    let n = env.len();
    let sweep = |q: &mut Vec<[f64; 2]>, reward: &dyn Fn(usize, usize) -> f64, next: &dyn Fn(&[[f64; 2]], usize) -> f64| {
        for _ in 0..10_000 {
            let old = q.clone();
            for s in 0..n - 1 {
                for a in 0..2 {
                    let (s2, _, done) = env.transition(s, a);
                    let boot = if done { 0.0 } else { gamma * next(&old, s2) };
                    q[s][a] = reward(s, a) + boot;
                }
            }
            let delta = q
                .iter()
                .zip(&old)
                .flat_map(|(x, y)| [(x[0] - y[0]).abs(), (x[1] - y[1]).abs()])
                .fold(0.0, f64::max);
            if delta < 1e-13 {
                break;
            }
        }
    };
    let total_r = |s: usize, a: usize| env.transition(s, a).1.iter().sum::<f64>();
    let mut total = vec![[0.0; 2]; n];
    sweep(&mut total, &total_r, &|q, s| q[s][0].max(q[s][1]));
    let policy: Vec<usize> = total.iter().map(|q| usize::from(q[1] > q[0])).collect();
    let channels = (0..2)
        .map(|i| {
            let mut q = vec![[0.0; 2]; n];
            let r = move |s: usize, a: usize| env.transition(s, a).1[i];
            sweep(&mut q, &r, &|q, s| q[s][policy[s]]);
            q
        })
        .collect();
    ChainOracle { total, channels }
}

/// One transition per non-terminal (state, action) pair.
pub fn chain_steps(env: &ChainEnv) -> Vec<EpisodeStep> {
    let mut out = Vec::new();
    for s in 0..env.len() - 1 {
        for a in 0..2 {
            let (s2, r, done) = env.transition(s, a);
            out.push(EpisodeStep {
                state: env.one_hot(s),
                action: a,
                reward: RewardVector::new(r.to_vec()),
                next_state: env.one_hot(s2),
                done,
            });
        }
    }
    out
}

/// Linear map from the one-hot state to action values: a lookup table.
fn table(n: usize, rng: &mut ChaCha8Rng) -> Network {
    let mut net = Network::new(vec![n], vec![Layer::Linear { fan_in: n, fan_out: 2 }], rng).unwrap();
    for arr in net.params_mut().arrays_mut() {
        arr.values.fill(0.0);
    }
    net
}

/// ReLU network that reproduces `r(s, a)` exactly on one-hot inputs:
/// hidden unit `(s, a)` fires only when both indicators are set.
fn exact_reward_head(env: &ChainEnv, channel: usize, rng: &mut ChaCha8Rng) -> Network {
    let n = env.len();
    let hidden = 2 * n;
    let layers = vec![
        Layer::Linear { fan_in: n + 2, fan_out: hidden },
        Layer::Relu,
        Layer::Linear { fan_in: hidden, fan_out: 1 },
    ];
    let mut net = Network::new(vec![n + 2], layers, rng).unwrap();
    let arrays = net.params_mut().arrays_mut();
    let (w1, rest) = arrays.split_at_mut(1);
    w1[0].values.fill(0.0);
    rest[0].values.fill(-1.0);
    rest[1].values.fill(0.0);
    rest[2].values.fill(0.0);
    for s in 0..n {
        for a in 0..2 {
            let j = 2 * s + a;
            w1[0].values[j * (n + 2) + s] = 1.0;
            w1[0].values[j * (n + 2) + n + a] = 1.0;
            if s < n - 1 {
                rest[1].values[j] = env.transition(s, a).1[channel] as f32;
            }
        }
    }
    net
}

/// Learner with table Q-heads on an `n`-state chain. Methods with reward
/// heads get exact, frozen ones.
pub fn tabular_learner(n: usize, method: &str, gamma: f64, lr: f64) -> (Learner, ChainEnv) {
    let env = ChainEnv::new(n, 50).unwrap();
    let mut cfg = RunConfig::defaults_for("chain");
    cfg.method = method.into();
    cfg.chain_length = n;
    cfg.gamma = gamma;
    cfg.lr = lr;
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let mut bundle = TrainedBundle::new(&cfg, &env, &mut rng).unwrap();
    bundle.q_heads = (0..bundle.k).map(|_| table(n, &mut rng)).collect();
    bundle.target_q = bundle.q_heads.clone();
    let exact_rewards = !bundle.reward_heads.is_empty();
    if exact_rewards {
        bundle.reward_heads = (0..bundle.k).map(|i| exact_reward_head(&env, i, &mut rng)).collect();
    }
    let mut learner = Learner::new(bundle);
    if exact_rewards {
        learner.freeze(GroupKind::RewardHead);
    }
    (learner, env)
}

/// Full-coverage updates with periodic target syncs and a geometric
/// learning-rate decay from `lr` to `lr / 1000`.
pub fn fit_tabular(learner: &mut Learner, env: &ChainEnv, update: TdUpdate, iterations: usize) {
    let steps = chain_steps(env);
    let refs: Vec<&EpisodeStep> = steps.iter().collect();
    let batch = Batch::new(&learner.bundle, &refs);
    let lr0 = learner.bundle.config.lr;
    for it in 0..iterations {
        if it % 25 == 0 {
            learner.sync_targets(it as u64);
        }
        let frac = it as f64 / iterations as f64;
        learner.set_lr(lr0 * 1e-3f64.powf(frac));
        update(learner, &batch).unwrap();
    }
}

/// Learned `[i][s][a]` component Q-values over the non-terminal states.
pub fn learned_q(learner: &Learner, env: &ChainEnv) -> Vec<Vec<[f64; 2]>> {
    let k = learner.bundle.k;
    let mut out = vec![Vec::new(); k];
    for s in 0..env.len() - 1 {
        let q = cdrl_core::agents::component_q(&learner.bundle, &env.one_hot(s));
        for i in 0..k {
            out[i].push([q[i][0], q[i][1]]);
        }
    }
    out
}

pub fn max_abs_diff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| [(x[0] - y[0]).abs(), (x[1] - y[1]).abs()])
        .fold(0.0, f64::max)
}
