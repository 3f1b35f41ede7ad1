use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::learner::{Batch, Learner, StepLosses};
use super::AgentError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MethodTag {
    Rd,
    RdPred,
    RdPredU,
    QMask,
    QMaskLite,
    RMask,
    RMaskLite,
}

impl MethodTag {
    pub const ALL: [MethodTag; 7] = [
        MethodTag::Rd,
        MethodTag::RdPred,
        MethodTag::RdPredU,
        MethodTag::QMask,
        MethodTag::QMaskLite,
        MethodTag::RMask,
        MethodTag::RMaskLite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodTag::Rd => "rd",
            MethodTag::RdPred => "rd_pred",
            MethodTag::RdPredU => "rd_pred_u",
            MethodTag::QMask => "q_mask",
            MethodTag::QMaskLite => "q_mask_lite",
            MethodTag::RMask => "r_mask",
            MethodTag::RMaskLite => "r_mask_lite",
        }
    }

    pub fn spec(self) -> MethodSpec {
        MethodRegistry::builtin()
            .get(self.as_str())
            .expect("every tag is registered")
            .spec()
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// What a network consumes: the whole (encoded) state or the masked
/// factor of its own channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Substrate {
    Full,
    Masked,
}

/// Supervision of the reward heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardTarget {
    /// Each head regresses its own ground-truth sub-reward.
    SubRewards,
    /// Only the sum of the heads is tied to the total reward.
    Total,
}

/// Which parts a method owns and how they are wired.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MethodSpec {
    pub masks: bool,
    pub q_substrate: Substrate,
    pub reward_heads: Option<(Substrate, RewardTarget)>,
    /// Component TD targets use the environment's sub-rewards.
    pub known_sub_rewards: bool,
    /// Sparsity and orthogonality objectives are active.
    pub desiderata: bool,
}

/// Update blocks that fall due at one environment step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Due {
    pub distill: bool,
    pub orthogonality: bool,
    pub td_full: bool,
    pub td_component: bool,
}

impl Due {
    pub fn any(&self) -> bool {
        self.distill || self.orthogonality || self.td_full || self.td_component
    }
}

/// A training method: the parts it owns and the updates it runs.
pub trait Method: Send + Sync {
    fn tag(&self) -> MethodTag;
    fn spec(&self) -> MethodSpec;
    fn update(&self, learner: &mut Learner, batch: &Batch, due: Due)
        -> Result<StepLosses, AgentError>;
}

/// Plain reward decomposition, optionally with full-state reward heads.
struct Decomposed {
    tag: MethodTag,
    reward: Option<RewardTarget>,
}

impl Method for Decomposed {
    fn tag(&self) -> MethodTag {
        self.tag
    }

    fn spec(&self) -> MethodSpec {
        MethodSpec {
            masks: false,
            q_substrate: Substrate::Full,
            reward_heads: self.reward.map(|t| (Substrate::Full, t)),
            known_sub_rewards: self.reward != Some(RewardTarget::Total),
            desiderata: false,
        }
    }

    fn update(&self, l: &mut Learner, batch: &Batch, due: Due) -> Result<StepLosses, AgentError> {
        let mut out = StepLosses::default();
        if due.distill && self.reward.is_some() {
            out.reward = Some(l.reward_model_step(batch)?);
        }
        if self.reward == Some(RewardTarget::Total) {
            if due.td_full {
                out.add_td(super::td_update_full(l, batch)?);
            }
            if due.td_component {
                out.add_td(super::td_update_component(l, batch)?);
            }
        } else if due.td_component {
            out.add_td(super::td_update_ground(l, batch)?);
        }
        Ok(out)
    }
}

/// Masked component Q-functions trained on ground-truth sub-rewards.
struct QMask {
    lite: bool,
}

impl Method for QMask {
    fn tag(&self) -> MethodTag {
        if self.lite {
            MethodTag::QMaskLite
        } else {
            MethodTag::QMask
        }
    }

    fn spec(&self) -> MethodSpec {
        MethodSpec {
            masks: true,
            q_substrate: Substrate::Masked,
            reward_heads: None,
            known_sub_rewards: true,
            desiderata: !self.lite,
        }
    }

    fn update(&self, l: &mut Learner, batch: &Batch, due: Due) -> Result<StepLosses, AgentError> {
        let mut out = StepLosses::default();
        if due.distill {
            l.distill_step(batch, false, !self.lite, &mut out)?;
        }
        if due.orthogonality && !self.lite {
            out.orth = Some(l.orthogonality_step(batch)?);
        }
        if due.td_component {
            out.add_td(super::td_update_ground(l, batch)?);
        }
        Ok(out)
    }
}

/// Masks shaped by reward sufficiency; Q-heads see the full state.
struct RMask {
    lite: bool,
}

impl Method for RMask {
    fn tag(&self) -> MethodTag {
        if self.lite {
            MethodTag::RMaskLite
        } else {
            MethodTag::RMask
        }
    }

    fn spec(&self) -> MethodSpec {
        MethodSpec {
            masks: true,
            q_substrate: Substrate::Full,
            reward_heads: Some((Substrate::Masked, RewardTarget::Total)),
            known_sub_rewards: false,
            desiderata: !self.lite,
        }
    }

    fn update(&self, l: &mut Learner, batch: &Batch, due: Due) -> Result<StepLosses, AgentError> {
        let mut out = StepLosses::default();
        if due.distill {
            l.distill_step(batch, true, !self.lite, &mut out)?;
        }
        if due.orthogonality && !self.lite {
            out.orth = Some(l.orthogonality_step(batch)?);
        }
        if due.td_full {
            out.add_td(super::td_update_full(l, batch)?);
        }
        if due.td_component {
            out.add_td(super::td_update_component(l, batch)?);
        }
        Ok(out)
    }
}

/// Name → method table.
pub struct MethodRegistry {
    methods: BTreeMap<&'static str, Box<dyn Method>>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        MethodRegistry {
            methods: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = MethodRegistry::empty();
        r.register(Box::new(Decomposed {
            tag: MethodTag::Rd,
            reward: None,
        }));
        r.register(Box::new(Decomposed {
            tag: MethodTag::RdPred,
            reward: Some(RewardTarget::SubRewards),
        }));
        r.register(Box::new(Decomposed {
            tag: MethodTag::RdPredU,
            reward: Some(RewardTarget::Total),
        }));
        r.register(Box::new(QMask { lite: false }));
        r.register(Box::new(QMask { lite: true }));
        r.register(Box::new(RMask { lite: false }));
        r.register(Box::new(RMask { lite: true }));
        r
    }

    pub fn register(&mut self, method: Box<dyn Method>) {
        self.methods.insert(method.tag().as_str(), method);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Method> {
        self.methods.get(name).map(|m| m.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.keys().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_tag_registered_under_its_name() {
        let r = MethodRegistry::builtin();
        assert_eq!(r.names().len(), 7);
        for t in MethodTag::ALL {
            assert_eq!(r.get(t.as_str()).unwrap().tag(), t);
            assert_eq!(t.as_str().parse::<MethodTag>().unwrap(), t);
        }
        assert!(r.get("dqn").is_none());
    }

    #[test]
    fn method_matrix() {
        use RewardTarget::*;
        use Substrate::*;
        let rows = [
            (MethodTag::Rd, false, Full, None, true, false),
            (MethodTag::RdPred, false, Full, Some((Full, SubRewards)), true, false),
            (MethodTag::RdPredU, false, Full, Some((Full, Total)), false, false),
            (MethodTag::QMask, true, Masked, None, true, true),
            (MethodTag::QMaskLite, true, Masked, None, true, false),
            (MethodTag::RMask, true, Full, Some((Masked, Total)), false, true),
            (MethodTag::RMaskLite, true, Full, Some((Masked, Total)), false, false),
        ];
        for (tag, masks, q, rew, known, des) in rows {
            let s = tag.spec();
            assert_eq!(s.masks, masks, "{tag}");
            assert_eq!(s.q_substrate, q, "{tag}");
            assert_eq!(s.reward_heads, rew, "{tag}");
            assert_eq!(s.known_sub_rewards, known, "{tag}");
            assert_eq!(s.desiderata, des, "{tag}");
        }
    }
}
