//! Finite-difference checks of every trained network against every loss
//! that reaches it, on both input kinds.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bundle::{Graph, Group, TrainedBundle};
use super::methods::MethodTag;
use super::AgentError;
use crate::approx::gradcheck::{check_gradients, GradCheckReport, FD_TOLERANCE};
use crate::approx::{Tensor, Var};
use crate::config::RunConfig;
use crate::distill::{intervene, losses};
use crate::envs::{make_env, State};

const BATCH: usize = 3;
const COORDS_PER_DRAW: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuiteLoss {
    Sparsity,
    Orthogonality,
    Intervention,
    RewardFidelity,
    RewardComponents,
    TdFull,
    TdComponent,
}

impl SuiteLoss {
    pub fn name(self) -> &'static str {
        match self {
            SuiteLoss::Sparsity => "sparsity",
            SuiteLoss::Orthogonality => "orthogonality",
            SuiteLoss::Intervention => "intervention",
            SuiteLoss::RewardFidelity => "reward_fidelity",
            SuiteLoss::RewardComponents => "reward_components",
            SuiteLoss::TdFull => "td_full",
            SuiteLoss::TdComponent => "td_component",
        }
    }
}

/// Method whose bundle carries the networks each loss trains.
const CASES: [(SuiteLoss, MethodTag); 8] = [
    (SuiteLoss::Sparsity, MethodTag::RMask),
    (SuiteLoss::Orthogonality, MethodTag::RMask),
    (SuiteLoss::Intervention, MethodTag::QMask),
    (SuiteLoss::RewardFidelity, MethodTag::RMask),
    (SuiteLoss::RewardComponents, MethodTag::RdPred),
    (SuiteLoss::TdFull, MethodTag::RMask),
    (SuiteLoss::TdComponent, MethodTag::RdPredU),
    (SuiteLoss::TdComponent, MethodTag::QMask),
];

#[derive(Clone, Debug)]
pub struct GradCase {
    pub env: String,
    pub method: MethodTag,
    pub loss: SuiteLoss,
    /// Networks receiving gradient, e.g. `encoder+masker+q_head`.
    pub networks: String,
    pub draws: usize,
    pub report: GradCheckReport,
}

impl GradCase {
    pub fn passed(&self) -> bool {
        self.report.passed(FD_TOLERANCE)
    }
}

fn suite_config(env: &str, method: MethodTag) -> RunConfig {
    let mut cfg = RunConfig::defaults_for(env);
    cfg.method = method.to_string();
    cfg.hidden = 8;
    cfg
}

fn batch_tensor(bundle: &TrainedBundle, states: &[State]) -> Tensor {
    bundle.encode_batch(states.iter())
}

fn build_loss(
    g: &mut Graph,
    bundle: &TrainedBundle,
    loss: SuiteLoss,
    x: &Tensor,
    x_inter: &Tensor,
    actions: &[usize],
    targets: &[Vec<f64>],
) -> Var {
    let spec = bundle.spec();
    let feat = g.features(x);
    let k = bundle.k;
    match loss {
        SuiteLoss::Sparsity => {
            let masks = g.masks(feat);
            losses::sparsity(&mut g.tape, &masks, bundle.config.sparsity_weights())
        }
        SuiteLoss::Orthogonality => {
            let masks = g.masks(feat);
            losses::orthogonality(&mut g.tape, &masks)
        }
        SuiteLoss::Intervention => {
            let fi = g.features(x_inter);
            losses::intervention_similarity(&mut g.tape, feat, fi).expect("non-degenerate features")
        }
        SuiteLoss::RewardFidelity | SuiteLoss::RewardComponents => {
            let (sub, _) = spec.reward_heads.expect("reward heads");
            let inputs = g.substrate(feat, sub);
            let preds = g.rewards(&inputs, actions);
            if loss == SuiteLoss::RewardFidelity {
                let total: Vec<f64> = (0..actions.len())
                    .map(|b| targets.iter().map(|t| t[b]).sum())
                    .collect();
                losses::reward_fidelity(&mut g.tape, &preds, &total).expect("matching shapes")
            } else {
                losses::reward_components(&mut g.tape, &preds, targets)
            }
        }
        SuiteLoss::TdFull | SuiteLoss::TdComponent => {
            let inputs = g.substrate(feat, spec.q_substrate);
            let q = g.q_values(&inputs);
            let taken: Vec<Var> = q.iter().map(|&v| g.tape.gather(v, actions)).collect();
            let n = actions.len();
            if loss == SuiteLoss::TdFull {
                let sum = g.tape.add_all(&taken);
                let y: Vec<f64> = (0..n).map(|b| targets.iter().map(|t| t[b]).sum()).collect();
                let yv = g.tape.constant(Tensor::new(vec![n], y).expect("target shape"));
                let d = g.tape.sub(sum, yv);
                let sq = g.tape.square(d);
                g.tape.mean(sq)
            } else {
                let terms: Vec<Var> = taken
                    .iter()
                    .zip(targets)
                    .map(|(&t, y)| {
                        let yv = g.tape.constant(Tensor::new(vec![n], y.clone()).expect("target shape"));
                        let d = g.tape.sub(t, yv);
                        let sq = g.tape.square(d);
                        g.tape.mean(sq)
                    })
                    .collect();
                let total = g.tape.add_all(&terms);
                g.tape.scale(total, 1.0 / k as f64)
            }
        }
    }
}

/// Runs one case over `draws` fresh parameter and input draws.
pub fn check_case(
    env_id: &str,
    method: MethodTag,
    loss: SuiteLoss,
    draws: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GradCase, AgentError> {
    let cfg = suite_config(env_id, method);
    let env = make_env(env_id, &cfg.env_settings())?;
    let mut report = GradCheckReport::default();
    let mut touched: Vec<Group> = Vec::new();
    for _ in 0..draws {
        let bundle = TrainedBundle::new(&cfg, env.as_ref(), rng)?;
        let mut fresh = make_env(env_id, &cfg.env_settings())?;
        let states: Vec<State> = (0..BATCH).map(|_| fresh.reset(rng.next_u64())).collect();
        let inter: Vec<State> = states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let clean = &states[(i + 1) % BATCH];
                intervene(env.as_ref(), s, clean, cfg.eps_intervention, rng)
            })
            .collect::<Result<_, _>>()?;
        let x = batch_tensor(&bundle, &states);
        let xi = batch_tensor(&bundle, &inter);
        let actions: Vec<usize> = (0..BATCH).map(|_| rng.gen_range(0..bundle.action_count)).collect();
        let targets: Vec<Vec<f64>> = (0..bundle.k)
            .map(|_| (0..BATCH).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();

        let slots = 1 + 3 * bundle.k;
        let groups: Vec<Group> = (0..slots).map(|s| Group::from_slot(s, bundle.k)).collect();
        let params: Vec<Vec<Tensor>> = groups
            .iter()
            .map(|&g| {
                bundle.network(g).map_or_else(Vec::new, |n| {
                    n.params().arrays().iter().map(|a| a.to_tensor()).collect()
                })
            })
            .collect();
        let r = check_gradients(
            &params,
            |tape, vars| {
                let mut g = Graph::prebound(bundle.online(), std::mem::take(tape), vars);
                let l = build_loss(&mut g, &bundle, loss, &x, &xi, &actions, &targets);
                *tape = g.tape;
                l
            },
            COORDS_PER_DRAW,
            rng,
        )?;
        // Which groups the loss reaches, from a plain backward pass.
        let mut tape = crate::approx::Tape::new();
        let vars: Vec<Vec<Var>> = groups
            .iter()
            .enumerate()
            .map(|(slot, &g)| bundle.network(g).map_or_else(Vec::new, |n| n.bind(&mut tape, slot)))
            .collect();
        let mut g = Graph::prebound(bundle.online(), tape, &vars);
        let l = build_loss(&mut g, &bundle, loss, &x, &xi, &actions, &targets);
        let grads = g.tape.backward(l)?;
        for (slot, &g) in groups.iter().enumerate() {
            if !grads.slot(slot).is_empty() && !touched.contains(&g) {
                touched.push(g);
            }
        }
        report.merge(&r);
    }
    Ok(GradCase {
        env: env_id.to_string(),
        method,
        loss,
        networks: label(&touched),
        draws,
        report,
    })
}

/// `encoder+masker+...` in network order.
fn label(groups: &[Group]) -> String {
    let rank = |g: &Group| match g {
        Group::Encoder => 0,
        Group::Masker(_) => 1,
        Group::RewardHead(_) => 2,
        Group::QHead(_) => 3,
    };
    let mut ranks: Vec<usize> = groups.iter().map(rank).collect();
    ranks.sort_unstable();
    ranks.dedup();
    ranks
        .iter()
        .map(|&r| ["encoder", "masker", "reward_head", "q_head"][r])
        .collect::<Vec<_>>()
        .join("+")
}

/// Every network × loss pairing on the vector and pixel environments.
/// Vector states have no encoder, so the intervention term has no
/// parameters there and is checked on pixels only.
pub fn gradient_suite(draws: usize, seed: u64) -> Result<Vec<GradCase>, AgentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for env in ["monster_treasure", "pixel_grid"] {
        for (loss, method) in CASES {
            if loss == SuiteLoss::Intervention && env == "monster_treasure" {
                continue;
            }
            out.push(check_case(env, method, loss, draws, &mut rng)?);
        }
    }
    Ok(out)
}
