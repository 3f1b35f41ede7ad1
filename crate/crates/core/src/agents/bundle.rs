use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::methods::{MethodSpec, MethodTag, Substrate};
use super::AgentError;
use crate::approx::{Layer, Network, ParamSet, Tape, Tensor, Var};
use crate::config::RunConfig;
use crate::envs::{make_env, Environment, InputEncoding, State};

/// Parameter groups of a bundle. Each maps to one tape slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    Encoder,
    Masker(usize),
    RewardHead(usize),
    QHead(usize),
}

impl Group {
    pub fn slot(self, k: usize) -> usize {
        match self {
            Group::Encoder => 0,
            Group::Masker(i) => 1 + i,
            Group::RewardHead(i) => 1 + k + i,
            Group::QHead(i) => 1 + 2 * k + i,
        }
    }

    pub fn from_slot(slot: usize, k: usize) -> Group {
        match slot {
            0 => Group::Encoder,
            s if s <= k => Group::Masker(s - 1),
            s if s <= 2 * k => Group::RewardHead(s - 1 - k),
            s => Group::QHead(s - 1 - 2 * k),
        }
    }

    /// The group with the channel index dropped.
    pub fn kind(self) -> GroupKind {
        match self {
            Group::Encoder => GroupKind::Encoder,
            Group::Masker(_) => GroupKind::Masker,
            Group::RewardHead(_) => GroupKind::RewardHead,
            Group::QHead(_) => GroupKind::QHead,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupKind {
    Encoder,
    Masker,
    RewardHead,
    QHead,
}

/// Encoder ψ, maskers Ψ^i, reward heads θ^i, Q-heads φ^i and their
/// targets, for one method and environment.
#[derive(Clone, Debug)]
pub struct TrainedBundle {
    pub method: MethodTag,
    pub config: RunConfig,
    pub action_count: usize,
    pub k: usize,
    pub input_shape: Vec<usize>,
    pub encoding: InputEncoding,
    /// Absent for vector states, where ψ is the identity.
    pub encoder: Option<Network>,
    pub maskers: Vec<Network>,
    pub reward_heads: Vec<Network>,
    pub q_heads: Vec<Network>,
    pub target_encoder: Option<Network>,
    /// Present only when the Q-heads consume masked factors.
    pub target_maskers: Vec<Network>,
    pub target_q: Vec<Network>,
    pub steps: u64,
}

fn pixel_encoder(channels: usize, rng: &mut ChaCha8Rng) -> Result<Network, AgentError> {
    let layers = vec![
        Layer::Conv {
            in_ch: channels,
            out_ch: 8,
            kernel: 8,
            stride: 4,
            pad: 2,
        },
        Layer::Relu,
        Layer::Conv {
            in_ch: 8,
            out_ch: 16,
            kernel: 4,
            stride: 2,
            pad: 1,
        },
        Layer::Relu,
        Layer::Conv {
            in_ch: 16,
            out_ch: 16,
            kernel: 3,
            stride: 1,
            pad: 1,
        },
        Layer::Relu,
    ];
    Ok(Network::new(
        vec![channels, crate::envs::PIXEL_SIDE, crate::envs::PIXEL_SIDE],
        layers,
        rng,
    )?)
}

/// Feature-map masker: one conv block, a 1×1 conv to a single channel and
/// a sigmoid, giving one weight per feature-map cell.
fn pixel_masker(fshape: &[usize], rng: &mut ChaCha8Rng) -> Result<Network, AgentError> {
    let c = fshape[0];
    let layers = vec![
        Layer::Conv {
            in_ch: c,
            out_ch: c,
            kernel: 3,
            stride: 1,
            pad: 1,
        },
        Layer::Relu,
        Layer::Conv {
            in_ch: c,
            out_ch: 1,
            kernel: 1,
            stride: 1,
            pad: 0,
        },
        Layer::Sigmoid,
        Layer::Flatten,
    ];
    Ok(Network::new(fshape.to_vec(), layers, rng)?)
}

impl TrainedBundle {
    /// Fresh, untrained parts for `cfg.method` on `env`.
    pub fn new(
        cfg: &RunConfig,
        env: &dyn Environment,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, AgentError> {
        let method: MethodTag = cfg
            .method
            .parse()
            .map_err(|e: String| crate::config::ConfigError::Inconsistent(e))?;
        let spec = method.spec();
        let input_shape = env.input_shape();
        let (k, a) = (env.reward_channels(), env.action_count());
        let h = cfg.hidden;

        let encoder = if input_shape.len() == 3 {
            Some(pixel_encoder(input_shape[0], rng)?)
        } else {
            None
        };
        let fshape = match &encoder {
            Some(e) => e.output_shape()?,
            None => input_shape.clone(),
        };
        let f: usize = fshape.iter().product();

        let mut maskers = Vec::new();
        if spec.masks {
            for _ in 0..k {
                let mut m = if encoder.is_some() {
                    pixel_masker(&fshape, rng)?
                } else {
                    Network::mlp(&[f, h, h, f], true, rng)?
                };
                m.set_output_bias(1.0);
                maskers.push(m);
            }
        }
        let mut reward_heads = Vec::new();
        if spec.reward_heads.is_some() {
            for _ in 0..k {
                reward_heads.push(Network::mlp(&[f + a, h, h, 1], false, rng)?);
            }
        }
        let mut q_heads = Vec::new();
        for _ in 0..k {
            q_heads.push(Network::mlp(&[f, h, h, a], false, rng)?);
        }
        let target_maskers = if spec.q_substrate == Substrate::Masked {
            maskers.clone()
        } else {
            Vec::new()
        };
        Ok(TrainedBundle {
            method,
            config: cfg.clone(),
            action_count: a,
            k,
            input_shape,
            encoding: env.input_encoding(),
            target_encoder: encoder.clone(),
            encoder,
            maskers,
            reward_heads,
            target_q: q_heads.clone(),
            q_heads,
            target_maskers,
            steps: 0,
        })
    }

    /// Builds the architecture for `cfg` and fills it from `params`.
    pub fn from_params(cfg: &RunConfig, params: &ParamSet) -> Result<Self, AgentError> {
        let env = make_env(&cfg.env, &cfg.env_settings())?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = TrainedBundle::new(cfg, env.as_ref(), &mut rng)?;
        let load = |net: &mut Network, prefix: String| -> Result<(), AgentError> {
            let p = params.take_prefixed(&prefix);
            *net = net.clone().with_params(p)?;
            Ok(())
        };
        if let Some(e) = b.encoder.as_mut() {
            load(e, "enc.".into())?;
        }
        if let Some(e) = b.target_encoder.as_mut() {
            load(e, "tenc.".into())?;
        }
        for (i, n) in b.maskers.iter_mut().enumerate() {
            load(n, format!("mask{i}."))?;
        }
        for (i, n) in b.target_maskers.iter_mut().enumerate() {
            load(n, format!("tmask{i}."))?;
        }
        for (i, n) in b.reward_heads.iter_mut().enumerate() {
            load(n, format!("rew{i}."))?;
        }
        for (i, n) in b.q_heads.iter_mut().enumerate() {
            load(n, format!("q{i}."))?;
        }
        for (i, n) in b.target_q.iter_mut().enumerate() {
            load(n, format!("tq{i}."))?;
        }
        let expected = b.to_params()?.len();
        if expected != params.len() {
            return Err(crate::approx::ApproxError::Format(format!(
                "checkpoint holds {} arrays, {} expected for {}",
                params.len(),
                expected,
                cfg.method
            ))
            .into());
        }
        b.steps = cfg.total_steps;
        Ok(b)
    }

    /// All parameters, prefixed by part.
    pub fn to_params(&self) -> Result<ParamSet, AgentError> {
        let mut p = ParamSet::new();
        if let Some(e) = &self.encoder {
            p.extend_prefixed("enc.", e.params())?;
        }
        if let Some(e) = &self.target_encoder {
            p.extend_prefixed("tenc.", e.params())?;
        }
        for (i, n) in self.maskers.iter().enumerate() {
            p.extend_prefixed(&format!("mask{i}."), n.params())?;
        }
        for (i, n) in self.target_maskers.iter().enumerate() {
            p.extend_prefixed(&format!("tmask{i}."), n.params())?;
        }
        for (i, n) in self.reward_heads.iter().enumerate() {
            p.extend_prefixed(&format!("rew{i}."), n.params())?;
        }
        for (i, n) in self.q_heads.iter().enumerate() {
            p.extend_prefixed(&format!("q{i}."), n.params())?;
        }
        for (i, n) in self.target_q.iter().enumerate() {
            p.extend_prefixed(&format!("tq{i}."), n.params())?;
        }
        Ok(p)
    }

    pub fn spec(&self) -> MethodSpec {
        self.method.spec()
    }

    pub fn has_masks(&self) -> bool {
        !self.maskers.is_empty()
    }

    pub fn network(&self, g: Group) -> Option<&Network> {
        match g {
            Group::Encoder => self.encoder.as_ref(),
            Group::Masker(i) => self.maskers.get(i),
            Group::RewardHead(i) => self.reward_heads.get(i),
            Group::QHead(i) => self.q_heads.get(i),
        }
    }

    pub fn network_mut(&mut self, g: Group) -> Option<&mut Network> {
        match g {
            Group::Encoder => self.encoder.as_mut(),
            Group::Masker(i) => self.maskers.get_mut(i),
            Group::RewardHead(i) => self.reward_heads.get_mut(i),
            Group::QHead(i) => self.q_heads.get_mut(i),
        }
    }

    /// Groups that exist in this bundle.
    pub fn groups(&self) -> Vec<Group> {
        let mut g = Vec::new();
        if self.encoder.is_some() {
            g.push(Group::Encoder);
        }
        g.extend((0..self.maskers.len()).map(Group::Masker));
        g.extend((0..self.reward_heads.len()).map(Group::RewardHead));
        g.extend((0..self.q_heads.len()).map(Group::QHead));
        g
    }

    /// Copies online parameters into the targets.
    pub fn sync_targets(&mut self) {
        if let (Some(t), Some(s)) = (self.target_encoder.as_mut(), self.encoder.as_ref()) {
            t.params_mut().copy_from(s.params()).expect("same architecture");
        }
        for (t, s) in self.target_maskers.iter_mut().zip(&self.maskers) {
            t.params_mut().copy_from(s.params()).expect("same architecture");
        }
        for (t, s) in self.target_q.iter_mut().zip(&self.q_heads) {
            t.params_mut().copy_from(s.params()).expect("same architecture");
        }
    }

    /// Network input batch `[B, input_shape...]`.
    pub fn encode_batch<'a>(&self, states: impl IntoIterator<Item = &'a State>) -> Tensor {
        let rows: Vec<Vec<f64>> = states
            .into_iter()
            .map(|s| s.encode(self.encoding))
            .collect();
        Tensor::stack(&rows, &self.input_shape).expect("state matches env input shape")
    }

    pub(crate) fn online(&self) -> NetView<'_> {
        NetView {
            encoder: self.encoder.as_ref(),
            maskers: &self.maskers,
            rewards: &self.reward_heads,
            q: &self.q_heads,
            k: self.k,
            actions: self.action_count,
        }
    }

    pub(crate) fn target(&self) -> NetView<'_> {
        NetView {
            encoder: self.target_encoder.as_ref(),
            maskers: &self.target_maskers,
            rewards: &[],
            q: &self.target_q,
            k: self.k,
            actions: self.action_count,
        }
    }

    /// Everything a single state yields: features, masks and the Q matrix
    /// on the method's substrate.
    pub fn inspect(&self, state: &State) -> StateView {
        let x = self.encode_batch([state]);
        let mut g = Graph::new(self.online());
        let feat = g.features(&x);
        let masks = if self.has_masks() {
            let m = g.masks(feat);
            Some(m.iter().map(|&v| g.tape.value(v).data().to_vec()).collect())
        } else {
            None
        };
        let inputs = g.substrate(feat, self.spec().q_substrate);
        let q = g.q_values(&inputs);
        StateView {
            features: g.tape.value(feat).data().to_vec(),
            masks,
            q: q.iter().map(|&v| g.tape.value(v).data().to_vec()).collect(),
        }
    }

    /// Q-heads evaluated on the unmasked features and on each channel's
    /// masked factor; `None` without maskers.
    pub fn q_full_and_masked(&self, state: &State) -> Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        if !self.has_masks() {
            return None;
        }
        let x = self.encode_batch([state]);
        let mut g = Graph::new(self.online());
        let feat = g.features(&x);
        let full = g.substrate(feat, Substrate::Full);
        let masked = g.substrate(feat, Substrate::Masked);
        let qf = g.q_values(&full);
        let qm = g.q_values(&masked);
        let rows = |g: &Graph, v: &[Var]| -> Vec<Vec<f64>> {
            v.iter().map(|&x| g.tape.value(x).data().to_vec()).collect()
        };
        Some((rows(&g, &qf), rows(&g, &qm)))
    }

    /// Reward-head predictions `K × |A|`, or `None` without reward heads.
    pub fn reward_predictions(&self, state: &State) -> Option<Vec<Vec<f64>>> {
        let (sub, _) = self.spec().reward_heads?;
        let a = self.action_count;
        let x = self.encode_batch(std::iter::repeat(state).take(a));
        let mut g = Graph::new(self.online());
        let feat = g.features(&x);
        let inputs = g.substrate(feat, sub);
        let actions: Vec<usize> = (0..a).collect();
        let preds = g.rewards(&inputs, &actions);
        Some(
            preds
                .iter()
                .map(|&v| g.tape.value(v).data().to_vec())
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateView {
    pub features: Vec<f64>,
    /// Per-channel masks at substrate resolution.
    pub masks: Option<Vec<Vec<f64>>>,
    /// `K × |A|` component Q-values.
    pub q: Vec<Vec<f64>>,
}

/// `K × |A|` component Q-values of `state`.
pub fn component_q(bundle: &TrainedBundle, state: &State) -> Vec<Vec<f64>> {
    bundle.inspect(state).q
}

/// Argmax of the column sums; ties go to the lowest action index.
pub fn global_action(q: &[Vec<f64>]) -> usize {
    let a = q.first().map_or(0, Vec::len);
    let sums: Vec<f64> = (0..a).map(|j| q.iter().map(|row| row[j]).sum()).collect();
    argmax(&sums)
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Borrowed view of one set of networks (online or target).
#[derive(Clone, Copy)]
pub(crate) struct NetView<'a> {
    pub encoder: Option<&'a Network>,
    pub maskers: &'a [Network],
    pub rewards: &'a [Network],
    pub q: &'a [Network],
    pub k: usize,
    pub actions: usize,
}

/// A tape plus lazily bound parameters of a [`NetView`].
pub(crate) struct Graph<'a> {
    pub nets: NetView<'a>,
    pub tape: Tape,
    bound: HashMap<usize, Vec<Var>>,
}

impl<'a> Graph<'a> {
    pub fn new(nets: NetView<'a>) -> Self {
        Graph {
            nets,
            tape: Tape::new(),
            bound: HashMap::new(),
        }
    }

    /// Graph over `tape` whose parameters are already bound, `vars[slot]`
    /// per group slot.
    pub fn prebound(nets: NetView<'a>, tape: Tape, vars: &[Vec<Var>]) -> Self {
        Graph {
            nets,
            tape,
            bound: vars.iter().cloned().enumerate().collect(),
        }
    }

    fn run(&mut self, g: Group, x: Var) -> Var {
        let net = match g {
            Group::Encoder => self.nets.encoder.expect("encoder present"),
            Group::Masker(i) => &self.nets.maskers[i],
            Group::RewardHead(i) => &self.nets.rewards[i],
            Group::QHead(i) => &self.nets.q[i],
        };
        let slot = g.slot(self.nets.k);
        let tape = &mut self.tape;
        let params = self
            .bound
            .entry(slot)
            .or_insert_with(|| net.bind(tape, slot))
            .clone();
        net.forward_with(&mut self.tape, &params, x)
            .expect("network input shape")
    }

    /// ψ(x), flattened to `[B, F]`.
    pub fn features(&mut self, x: &Tensor) -> Var {
        let xv = self.tape.constant(x.clone());
        match self.nets.encoder {
            Some(_) => {
                let f = self.run(Group::Encoder, xv);
                self.tape.flatten(f)
            }
            None => {
                if x.shape().len() == 2 {
                    xv
                } else {
                    self.tape.flatten(xv)
                }
            }
        }
    }

    /// One `[B, P]` mask per channel.
    pub fn masks(&mut self, feat: Var) -> Vec<Var> {
        (0..self.nets.maskers.len())
            .map(|i| self.run(Group::Masker(i), feat))
            .collect()
    }

    /// Per-channel Q/reward inputs: the features themselves or
    /// `m^i ⊙ ψ(s)`.
    pub fn substrate(&mut self, feat: Var, sub: Substrate) -> Vec<Var> {
        match sub {
            Substrate::Full => vec![feat; self.nets.k],
            Substrate::Masked => {
                let masks = self.masks(feat);
                self.alphas(&masks, feat)
            }
        }
    }

    pub fn alphas(&mut self, masks: &[Var], feat: Var) -> Vec<Var> {
        masks.iter().map(|&m| self.tape.mask_tile(m, feat)).collect()
    }

    /// `[B, |A|]` per channel.
    pub fn q_values(&mut self, inputs: &[Var]) -> Vec<Var> {
        inputs
            .iter()
            .enumerate()
            .map(|(i, &x)| self.run(Group::QHead(i), x))
            .collect()
    }

    /// `[B]` predicted reward per channel for the given actions.
    pub fn rewards(&mut self, inputs: &[Var], actions: &[usize]) -> Vec<Var> {
        let a = self.nets.actions;
        let mut onehot = Tensor::zeros(&[actions.len(), a]);
        for (r, &act) in actions.iter().enumerate() {
            onehot.data_mut()[r * a + act] = 1.0;
        }
        let oh = self.tape.constant(onehot);
        inputs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let xin = self.tape.concat(x, oh);
                let y = self.run(Group::RewardHead(i), xin);
                self.tape.reshape(y, &[actions.len()])
            })
            .collect()
    }

    pub fn rows(&self, v: Var) -> Vec<Vec<f64>> {
        let t = self.tape.value(v);
        (0..t.batch()).map(|r| t.row(r).to_vec()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvSettings;
    use rand::Rng;

    fn bundle(method: &str, env: &str) -> (TrainedBundle, Box<dyn Environment>) {
        let mut cfg = RunConfig::defaults_for(env);
        cfg.method = method.into();
        let e = make_env(env, &EnvSettings::defaults_for(env)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        (TrainedBundle::new(&cfg, e.as_ref(), &mut rng).unwrap(), e)
    }

    #[test]
    fn parts_follow_method_matrix() {
        for tag in MethodTag::ALL {
            let (b, _) = bundle(tag.as_str(), "monster_treasure");
            let s = tag.spec();
            assert_eq!(b.maskers.len(), if s.masks { 2 } else { 0 }, "{tag}");
            assert_eq!(b.reward_heads.len(), if s.reward_heads.is_some() { 2 } else { 0 });
            assert_eq!(b.q_heads.len(), 2);
            assert!(b.encoder.is_none());
        }
        let (p, _) = bundle("r_mask", "pixel_grid");
        assert!(p.encoder.is_some());
        assert_eq!(p.encoder.as_ref().unwrap().output_shape().unwrap(), vec![16, 4, 4]);
        assert_eq!(p.maskers[0].output_shape().unwrap(), vec![16]);
    }

    #[test]
    fn zero_output_heads_give_zero_matrix() {
        let (mut b, mut e) = bundle("q_mask", "monster_treasure");
        for q in &mut b.q_heads {
            let n = q.params().len();
            q.params_mut().arrays_mut()[n - 2].values.fill(0.0);
            q.params_mut().arrays_mut()[n - 1].values.fill(0.0);
        }
        let s = e.reset(3);
        let q = component_q(&b, &s);
        assert_eq!(q.len(), 2);
        assert!(q.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn masked_rows_depend_only_on_their_masker() {
        let (mut b, mut e) = bundle("q_mask", "monster_treasure");
        let s = e.reset(5);
        let before = component_q(&b, &s);
        let last = b.maskers[1].params().len() - 1;
        b.maskers[1].params_mut().arrays_mut()[last].values.fill(-3.0);
        let after = component_q(&b, &s);
        assert_eq!(before[0], after[0]);
        assert_ne!(before[1], after[1]);
    }

    #[test]
    fn rd_substrate_is_full_state() {
        let (b, mut e) = bundle("rd", "monster_treasure");
        let s = e.reset(2);
        let q = component_q(&b, &s);
        let x = b.encode_batch([&s]);
        for i in 0..2 {
            assert_eq!(q[i], b.q_heads[i].eval(&x).unwrap().data().to_vec());
        }
    }

    #[test]
    fn global_action_matches_column_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let k = rng.gen_range(1..4);
            let a = rng.gen_range(2..6);
            let q: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..a).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let mut best = (0, f64::NEG_INFINITY);
            for j in 0..a {
                let s: f64 = q.iter().map(|r| r[j]).sum();
                if s > best.1 {
                    best = (j, s);
                }
            }
            assert_eq!(global_action(&q), best.0);
            let scaled: Vec<Vec<f64>> =
                q.iter().map(|r| r.iter().map(|v| v * 3.7).collect()).collect();
            assert_eq!(global_action(&scaled), best.0);
        }
        assert_eq!(global_action(&[vec![1.0, 1.0, 0.0]]), 0);
        assert_eq!(global_action(&[vec![0.0; 4], vec![0.1, 0.5, 0.2, 0.5]]), 1);
    }

    #[test]
    fn checkpoint_params_rebuild_identical_bundle() {
        for tag in MethodTag::ALL {
            let (b, mut e) = bundle(tag.as_str(), "monster_treasure");
            let p = b.to_params().unwrap();
            let back = TrainedBundle::from_params(&b.config, &p).unwrap();
            let s = e.reset(9);
            assert_eq!(component_q(&b, &s), component_q(&back, &s));
            assert_eq!(back.to_params().unwrap(), p);
        }
    }

    #[test]
    fn reward_predictions_shape() {
        let (b, mut e) = bundle("r_mask", "monster_treasure");
        let s = e.reset(1);
        let r = b.reward_predictions(&s).unwrap();
        assert_eq!((r.len(), r[0].len()), (2, 4));
        let (rd, _) = bundle("rd", "monster_treasure");
        assert!(rd.reward_predictions(&s).is_none());
    }
}
