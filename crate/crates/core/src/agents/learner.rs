use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::bundle::{argmax, Graph, Group, GroupKind, TrainedBundle};
use super::methods::{MethodTag, RewardTarget};
use super::AgentError;
use crate::approx::{AdamState, Gradients, Tensor, Var};
use crate::distill::{intervene, losses};
use crate::envs::{EpisodeStep, Environment};

/// Update blocks, as recorded in the gradient-flow ledger.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Block {
    /// Intervention, reward sufficiency and sparsity terms.
    Distill,
    /// Reward heads regressed on observed rewards.
    RewardModel,
    Orthogonality,
    TdFull,
    TdComponent,
    TdGround,
}

/// Which parameter groups received a nonzero gradient from which block.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlowLedger {
    pub entries: BTreeMap<GroupKind, BTreeSet<Block>>,
}

impl FlowLedger {
    pub fn record(&mut self, kind: GroupKind, block: Block) {
        self.entries.entry(kind).or_default().insert(block);
    }

    pub fn groups(&self) -> BTreeSet<GroupKind> {
        self.entries.keys().copied().collect()
    }

    pub fn blocks(&self, kind: GroupKind) -> BTreeSet<Block> {
        self.entries.get(&kind).cloned().unwrap_or_default()
    }
}

/// A sampled minibatch, already encoded for the networks.
#[derive(Clone, Debug)]
pub struct Batch {
    pub states: Tensor,
    pub next_states: Tensor,
    /// Intervened copies of `states`.
    pub intervened: Option<Tensor>,
    pub actions: Vec<usize>,
    /// `rewards[i][b]` is channel `i` of sample `b`.
    pub rewards: Vec<Vec<f64>>,
    pub totals: Vec<f64>,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn new(bundle: &TrainedBundle, steps: &[&EpisodeStep]) -> Batch {
        let k = bundle.k;
        Batch {
            states: bundle.encode_batch(steps.iter().map(|s| &s.state)),
            next_states: bundle.encode_batch(steps.iter().map(|s| &s.next_state)),
            intervened: None,
            actions: steps.iter().map(|s| s.action).collect(),
            rewards: (0..k)
                .map(|i| steps.iter().map(|s| s.reward.components[i]).collect())
                .collect(),
            totals: steps.iter().map(|s| s.reward.total).collect(),
            dones: steps.iter().map(|s| s.done).collect(),
        }
    }

    /// Adds intervened states; each sample's clean reference comes from
    /// another sample of the batch.
    pub fn with_interventions(
        mut self,
        bundle: &TrainedBundle,
        env: &dyn Environment,
        steps: &[&EpisodeStep],
        eps: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Batch, AgentError> {
        let n = steps.len();
        let mut out = Vec::with_capacity(n);
        for (b, s) in steps.iter().enumerate() {
            let other = if n > 1 {
                (b + rng.gen_range(1..n)) % n
            } else {
                b
            };
            out.push(intervene(env, &s.state, &steps[other].state, eps, rng)?);
        }
        self.intervened = Some(bundle.encode_batch(out.iter()));
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Loss values of the blocks run at one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLosses {
    /// Mean cosine similarity between ψ(s) and ψ(s_inter).
    pub interv: Option<f64>,
    pub reward: Option<f64>,
    pub sparse: Option<f64>,
    pub orth: Option<f64>,
    pub td: Option<f64>,
}

impl StepLosses {
    pub fn add_td(&mut self, v: f64) {
        self.td = Some(self.td.unwrap_or(0.0) + v);
    }
}

/// A bundle under training: optimizer state, frozen groups and the
/// gradient-flow ledger.
pub struct Learner {
    pub bundle: TrainedBundle,
    adams: BTreeMap<Group, AdamState>,
    frozen: BTreeSet<Group>,
    pub flow: FlowLedger,
    /// Environment steps at which targets were synchronised.
    pub sync_steps: Vec<u64>,
}

impl Learner {
    pub fn new(bundle: TrainedBundle) -> Self {
        let lr = bundle.config.lr;
        let adams = bundle
            .groups()
            .into_iter()
            .map(|g| {
                let net = bundle.network(g).expect("listed group exists");
                (g, AdamState::new(net.params(), lr))
            })
            .collect();
        Learner {
            bundle,
            adams,
            frozen: BTreeSet::new(),
            flow: FlowLedger::default(),
            sync_steps: Vec::new(),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        for a in self.adams.values_mut() {
            a.lr = lr;
        }
    }

    /// Stops updates of every group of `kind`.
    pub fn freeze(&mut self, kind: GroupKind) {
        for g in self.bundle.groups() {
            if g.kind() == kind {
                self.frozen.insert(g);
            }
        }
    }

    pub fn into_bundle(self) -> TrainedBundle {
        self.bundle
    }

    pub fn sync_targets(&mut self, step: u64) {
        self.bundle.sync_targets();
        self.sync_steps.push(step);
    }

    fn gamma(&self) -> f64 {
        self.bundle.config.gamma
    }

    fn apply(&mut self, grads: &Gradients, block: Block) -> Result<(), AgentError> {
        let k = self.bundle.k;
        for slot in grads.slots() {
            let g = Group::from_slot(slot, k);
            if self.frozen.contains(&g) {
                continue;
            }
            if grads.l2_norm(slot) > 0.0 {
                self.flow.record(g.kind(), block);
            }
            let net = self.bundle.network_mut(g).expect("bound group exists");
            let per_array = grads.slot(slot);
            let mut view: Vec<Option<&[f64]>> = vec![None; net.params().len()];
            for (idx, gr) in per_array {
                view[idx] = Some(gr);
            }
            let adam = self.adams.get_mut(&g).expect("optimizer per group");
            adam.step(net.params_mut(), &view)?;
        }
        Ok(())
    }

    /// `γ·(1−done)·Q^i_target(s′, a*)` per channel, with `a*` the argmax of
    /// the summed online Q at `s′`.
    fn bootstrap(&self, batch: &Batch) -> Vec<Vec<f64>> {
        let sub = self.bundle.spec().q_substrate;
        let mut online = Graph::new(self.bundle.online());
        let feat = online.features(&batch.next_states);
        let inputs = online.substrate(feat, sub);
        let q = online.q_values(&inputs);
        let qs: Vec<Vec<Vec<f64>>> = q.iter().map(|&v| online.rows(v)).collect();
        let a_star: Vec<usize> = (0..batch.len())
            .map(|b| {
                let sums: Vec<f64> = (0..self.bundle.action_count)
                    .map(|a| qs.iter().map(|qi| qi[b][a]).sum())
                    .collect();
                argmax(&sums)
            })
            .collect();

        let mut target = Graph::new(self.bundle.target());
        let feat = target.features(&batch.next_states);
        let inputs = target.substrate(feat, sub);
        let q = target.q_values(&inputs);
        let g = self.gamma();
        q.iter()
            .map(|&v| {
                let rows = target.rows(v);
                (0..batch.len())
                    .map(|b| {
                        if batch.dones[b] {
                            0.0
                        } else {
                            g * rows[b][a_star[b]]
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Online `Q^i(s, a)` per channel, `[B]` each.
    fn taken_q(&self, g: &mut Graph, batch: &Batch) -> Vec<Var> {
        let feat = g.features(&batch.states);
        let inputs = g.substrate(feat, self.bundle.spec().q_substrate);
        let q = g.q_values(&inputs);
        q.iter().map(|&v| g.tape.gather(v, &batch.actions)).collect()
    }

    fn td_full_inner(&mut self, batch: &Batch) -> Result<f64, AgentError> {
        let boot = self.bootstrap(batch);
        let y: Vec<f64> = (0..batch.len())
            .map(|b| batch.totals[b] + boot.iter().map(|c| c[b]).sum::<f64>())
            .collect();
        let mut g = Graph::new(self.bundle.online());
        let taken = self.taken_q(&mut g, batch);
        let qsum = g.tape.add_all(&taken);
        let yv = g.tape.constant(Tensor::new(vec![y.len()], y).expect("target shape"));
        let d = g.tape.sub(qsum, yv);
        let sq = g.tape.square(d);
        let loss = g.tape.mean(sq);
        let value = g.tape.value(loss).scalar();
        let grads = g.tape.backward(loss)?;
        drop(g);
        self.apply(&grads, Block::TdFull)?;
        Ok(value)
    }

    fn td_channels_inner(
        &mut self,
        batch: &Batch,
        rewards: &[Vec<f64>],
        block: Block,
    ) -> Result<f64, AgentError> {
        let boot = self.bootstrap(batch);
        let k = self.bundle.k;
        let mut g = Graph::new(self.bundle.online());
        let taken = self.taken_q(&mut g, batch);
        let terms: Vec<Var> = (0..k)
            .map(|i| {
                let y: Vec<f64> = (0..batch.len())
                    .map(|b| rewards[i][b] + boot[i][b])
                    .collect();
                let yv = g.tape.constant(Tensor::new(vec![y.len()], y).expect("target shape"));
                let d = g.tape.sub(taken[i], yv);
                let sq = g.tape.square(d);
                g.tape.mean(sq)
            })
            .collect();
        let total = g.tape.add_all(&terms);
        let loss = g.tape.scale(total, 1.0 / k as f64);
        let value = g.tape.value(loss).scalar();
        let grads = g.tape.backward(loss)?;
        drop(g);
        self.apply(&grads, block)?;
        Ok(value)
    }

    /// Detached reward-head predictions for the taken actions.
    fn predicted_rewards(&self, batch: &Batch) -> Vec<Vec<f64>> {
        let (sub, _) = self
            .bundle
            .spec()
            .reward_heads
            .expect("reward heads present");
        let mut g = Graph::new(self.bundle.online());
        let feat = g.features(&batch.states);
        let inputs = g.substrate(feat, sub);
        let preds = g.rewards(&inputs, &batch.actions);
        preds
            .iter()
            .map(|&v| g.tape.value(v).data().to_vec())
            .collect()
    }

    /// Intervention, reward sufficiency (R-Mask) and sparsity in one step.
    pub fn distill_step(
        &mut self,
        batch: &Batch,
        fidelity: bool,
        sparsity: bool,
        out: &mut StepLosses,
    ) -> Result<(), AgentError> {
        let cfg = self.bundle.config.clone();
        let mut g = Graph::new(self.bundle.online());
        let feat = g.features(&batch.states);
        let mut terms = Vec::new();
        if let Some(inter) = &batch.intervened {
            let fi = g.features(inter);
            match losses::intervention_similarity(&mut g.tape, feat, fi) {
                Ok(sim) => {
                    out.interv = Some(g.tape.value(sim).scalar());
                    terms.push(g.tape.scale(sim, -cfg.w_interv));
                }
                Err(e) => log::warn!("intervention term skipped: {e}"),
            }
        }
        if fidelity || sparsity {
            let masks = g.masks(feat);
            if fidelity {
                let alphas = g.alphas(&masks, feat);
                let preds = g.rewards(&alphas, &batch.actions);
                let fid = losses::reward_fidelity(&mut g.tape, &preds, &batch.totals)?;
                out.reward = Some(g.tape.value(fid).scalar());
                terms.push(g.tape.scale(fid, cfg.w_reward));
            }
            if sparsity {
                let sp = losses::sparsity(&mut g.tape, &masks, cfg.sparsity_weights());
                out.sparse = Some(g.tape.value(sp).scalar());
                terms.push(g.tape.scale(sp, cfg.w_sparse));
            }
        }
        if terms.is_empty() {
            return Ok(());
        }
        let loss = g.tape.add_all(&terms);
        let grads = g.tape.backward(loss)?;
        drop(g);
        self.apply(&grads, Block::Distill)
    }

    /// Pairwise mask overlap, weighted by `w_orth`. Returns the unweighted
    /// overlap.
    pub fn orthogonality_step(&mut self, batch: &Batch) -> Result<f64, AgentError> {
        let w = self.bundle.config.w_orth;
        let mut g = Graph::new(self.bundle.online());
        let feat = g.features(&batch.states);
        let masks = g.masks(feat);
        let orth = losses::orthogonality(&mut g.tape, &masks);
        let value = g.tape.value(orth).scalar();
        let loss = g.tape.scale(orth, w);
        let grads = g.tape.backward(loss)?;
        drop(g);
        self.apply(&grads, Block::Orthogonality)?;
        Ok(value)
    }

    /// Full-state reward heads: per-channel regression on sub-rewards, or
    /// their sum tied to the total reward.
    pub fn reward_model_step(&mut self, batch: &Batch) -> Result<f64, AgentError> {
        let Some((sub, target)) = self.bundle.spec().reward_heads else {
            return Err(AgentError::WrongMethod {
                op: "reward_model_step",
                method: self.bundle.method,
            });
        };
        let w = self.bundle.config.w_reward;
        let mut g = Graph::new(self.bundle.online());
        let feat = g.features(&batch.states);
        let inputs = g.substrate(feat, sub);
        let preds = g.rewards(&inputs, &batch.actions);
        let l = match target {
            RewardTarget::SubRewards => losses::reward_components(&mut g.tape, &preds, &batch.rewards),
            RewardTarget::Total => losses::reward_fidelity(&mut g.tape, &preds, &batch.totals)?,
        };
        let value = g.tape.value(l).scalar();
        let loss = g.tape.scale(l, w);
        let grads = g.tape.backward(loss)?;
        drop(g);
        self.apply(&grads, Block::RewardModel)?;
        Ok(value)
    }
}

fn require(l: &Learner, op: &'static str, allowed: &[MethodTag]) -> Result<(), AgentError> {
    if allowed.contains(&l.bundle.method) {
        Ok(())
    } else {
        Err(AgentError::WrongMethod {
            op,
            method: l.bundle.method,
        })
    }
}

/// Q-learning on the total reward through the summed component heads:
/// `δ = r + γ Σ_i Q^i_target(s′, a*) − Σ_i Q^i(s, a)`. Returns the mean
/// squared δ before the update.
pub fn td_update_full(l: &mut Learner, batch: &Batch) -> Result<f64, AgentError> {
    use MethodTag::*;
    require(l, "td_update_full", &[Rd, RdPred, RdPredU, RMask, RMaskLite])?;
    l.td_full_inner(batch)
}

/// Per-channel TD with the reward heads' (detached) predictions as
/// rewards: `δ_i = r_θ^i + γ Q^i_target(s′, a*) − Q^i(s, a)`.
pub fn td_update_component(l: &mut Learner, batch: &Batch) -> Result<f64, AgentError> {
    use MethodTag::*;
    require(l, "td_update_component", &[RdPredU, RMask, RMaskLite])?;
    let r = l.predicted_rewards(batch);
    l.td_channels_inner(batch, &r, Block::TdComponent)
}

/// Per-channel TD with ground-truth sub-rewards on the method's substrate
/// (masked factors for Q-Mask, the full state for RD and RD-pred).
pub fn td_update_ground(l: &mut Learner, batch: &Batch) -> Result<f64, AgentError> {
    use MethodTag::*;
    require(l, "td_update_ground", &[Rd, RdPred, QMask, QMaskLite])?;
    let r = batch.rewards.clone();
    l.td_channels_inner(batch, &r, Block::TdGround)
}
