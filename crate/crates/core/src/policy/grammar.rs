//! Decision grammar and feature layout.
//!
//! An output is factorized into 2 to 4 decisions, each a softmax over the
//! allowed rows of one slot matrix:
//!
//! | decision  | slot       | features                    | allowed rows                       |
//! |-----------|------------|-----------------------------|------------------------------------|
//! | first     | `action`   | base                        | feasible actions, KNOW if unmasked |
//! | cont      | `cont`     | base + prefix(a)            | STOP, REFL if unmasked and \|A\|>1 |
//! | template  | `template` | base + prefix(a)            | all templates                      |
//! | revise    | `action`   | base + refl + prefix(a)     | feasible minus `a`                 |
//! | post-know | `action`   | base + know + advice bits   | feasible actions                   |

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::templates::TEMPLATES;
use super::{DecodeMode, PolicyError};
use crate::minienv::view::{base_feature_dim, vocab};
use crate::minienv::EnvKind;

pub const STOP: usize = 0;
pub const REFL: usize = 1;
pub const N_TEMPLATES: usize = TEMPLATES.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    Action,
    Cont,
    Template,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Action, Slot::Cont, Slot::Template];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Slot::Action => "action",
            Slot::Cont => "cont",
            Slot::Template => "template",
        }
    }
}

/// Feature layout: `[base | refl | know | success | advice(n) | prefix(n)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Layout {
    pub base: usize,
    pub n_actions: usize,
}

impl Layout {
    pub fn for_env(env: EnvKind) -> Self {
        Self { base: base_feature_dim(env), n_actions: vocab(env).len() }
    }

    pub fn dim(&self) -> usize {
        self.base + 3 + 2 * self.n_actions
    }

    pub fn refl_bit(&self) -> usize {
        self.base
    }

    pub fn know_bit(&self) -> usize {
        self.base + 1
    }

    pub fn success_bit(&self) -> usize {
        self.base + 2
    }

    pub fn advice(&self, a: usize) -> usize {
        self.base + 3 + a
    }

    pub fn prefix(&self, a: usize) -> usize {
        self.base + 3 + self.n_actions + a
    }

    /// Row of KNOW in the action slot.
    pub fn know_row(&self) -> usize {
        self.n_actions
    }

    pub fn rows(&self, slot: Slot) -> usize {
        match slot {
            Slot::Action => self.n_actions + 1,
            Slot::Cont => 2,
            Slot::Template => N_TEMPLATES,
        }
    }

    /// Short digest identifying this grammar; stored with saved params.
    pub fn grammar_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("base={};actions={};cont=2;templates={}", self.base, self.n_actions, N_TEMPLATES));
        for t in TEMPLATES {
            h.update(t.as_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// One softmax decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub slot: Slot,
    /// Active binary features, sorted.
    pub features: Vec<usize>,
    /// Rows the softmax ranges over, ascending.
    pub allowed: Vec<usize>,
    pub chosen: usize,
}

/// Id-level content of an output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Choices {
    Fast { action: usize },
    Slow { first: usize, template: usize, revised: usize },
    Know { advice: Option<usize>, success: bool, action: usize },
}

impl Choices {
    pub fn final_action(&self) -> usize {
        match *self {
            Choices::Fast { action } | Choices::Know { action, .. } => action,
            Choices::Slow { revised, .. } => revised,
        }
    }
}

/// Everything the grammar needs from a history: base features and the
/// feasible action ids. Kept separate from `History` so it can be
/// generated directly in tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionContext {
    pub layout: Layout,
    pub base: Vec<usize>,
    pub feasible: Vec<usize>,
}

impl DecisionContext {
    pub fn new(layout: Layout, mut base: Vec<usize>, mut feasible: Vec<usize>) -> Self {
        base.sort_unstable();
        base.dedup();
        feasible.sort_unstable();
        feasible.dedup();
        debug_assert!(base.iter().all(|i| *i < layout.base));
        debug_assert!(feasible.iter().all(|i| *i < layout.n_actions));
        Self { layout, base, feasible }
    }

    pub fn first_allowed(&self, mode: DecodeMode) -> Vec<usize> {
        if mode == DecodeMode::ForceKnow {
            return vec![self.layout.know_row()];
        }
        let mut v = self.feasible.clone();
        if mode.allows_know() {
            v.push(self.layout.know_row());
        }
        v
    }

    pub fn cont_allowed(&self, mode: DecodeMode) -> Vec<usize> {
        if mode.allows_refl() && self.feasible.len() >= 2 {
            vec![STOP, REFL]
        } else {
            vec![STOP]
        }
    }

    pub fn revise_allowed(&self, first: usize) -> Vec<usize> {
        self.feasible.iter().copied().filter(|a| *a != first).collect()
    }

    fn with(&self, extra: &[usize]) -> Vec<usize> {
        let mut f = self.base.clone();
        f.extend_from_slice(extra);
        f
    }

    pub fn first_features(&self) -> Vec<usize> {
        self.base.clone()
    }

    pub fn prefix_features(&self, first: usize) -> Vec<usize> {
        self.with(&[self.layout.prefix(first)])
    }

    pub fn revise_features(&self, first: usize) -> Vec<usize> {
        self.with(&[self.layout.refl_bit(), self.layout.prefix(first)])
    }

    pub fn post_know_features(&self, advice: Option<usize>, success: bool) -> Vec<usize> {
        let l = &self.layout;
        let mut extra = vec![l.know_bit()];
        if success {
            extra.push(l.success_bit());
        }
        if let Some(a) = advice.filter(|a| *a < l.n_actions) {
            extra.push(l.advice(a));
        }
        self.with(&extra)
    }

    /// Factorize `c` into decisions, checking it against the mask.
    pub fn encode(&self, c: &Choices, mode: DecodeMode) -> Result<Vec<Decision>, PolicyError> {
        let dec = |slot, features, allowed: Vec<usize>, chosen: usize, what: &str| {
            if allowed.contains(&chosen) {
                Ok(Decision { slot, features, allowed, chosen })
            } else {
                Err(PolicyError::Grammar(format!("{what} {chosen} not allowed under {mode}")))
            }
        };
        let out = match *c {
            Choices::Fast { action } => vec![
                dec(Slot::Action, self.first_features(), self.first_allowed(mode), action, "action")?,
                dec(Slot::Cont, self.prefix_features(action), self.cont_allowed(mode), STOP, "STOP")?,
            ],
            Choices::Slow { first, template, revised } => vec![
                dec(Slot::Action, self.first_features(), self.first_allowed(mode), first, "action")?,
                dec(Slot::Cont, self.prefix_features(first), self.cont_allowed(mode), REFL, "REFL")?,
                dec(Slot::Template, self.prefix_features(first), (0..N_TEMPLATES).collect(), template, "template")?,
                dec(Slot::Action, self.revise_features(first), self.revise_allowed(first), revised, "revised action")?,
            ],
            Choices::Know { advice, success, action } => vec![
                dec(Slot::Action, self.first_features(), self.first_allowed(mode), self.layout.know_row(), "KNOW")?,
                dec(Slot::Action, self.post_know_features(advice, success), self.feasible.clone(), action, "action")?,
            ],
        };
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> DecisionContext {
        DecisionContext::new(Layout { base: 4, n_actions: 3 }, vec![0, 2], vec![0, 2])
    }

    #[test]
    fn shapes_have_two_to_four_decisions() {
        let c = ctx();
        assert_eq!(c.encode(&Choices::Fast { action: 2 }, DecodeMode::Free).unwrap().len(), 2);
        assert_eq!(c.encode(&Choices::Slow { first: 0, template: 3, revised: 2 }, DecodeMode::Free).unwrap().len(), 4);
        let k = Choices::Know { advice: Some(1), success: false, action: 0 };
        assert_eq!(c.encode(&k, DecodeMode::Free).unwrap().len(), 2);
    }

    #[test]
    fn masks_reject_forbidden_shapes() {
        let c = ctx();
        let k = Choices::Know { advice: None, success: true, action: 0 };
        assert!(c.encode(&k, DecodeMode::NoKnow).is_err());
        assert!(c.encode(&Choices::Slow { first: 0, template: 0, revised: 2 }, DecodeMode::NoRefl).is_err());
        assert!(c.encode(&Choices::Fast { action: 0 }, DecodeMode::ForceKnow).is_err());
        // infeasible action
        assert!(c.encode(&Choices::Fast { action: 1 }, DecodeMode::Free).is_err());
        // revision must differ
        assert!(c.encode(&Choices::Slow { first: 0, template: 0, revised: 0 }, DecodeMode::Free).is_err());
    }

    #[test]
    fn feature_offsets_are_disjoint() {
        let l = Layout { base: 4, n_actions: 3 };
        let mut all = vec![l.refl_bit(), l.know_bit(), l.success_bit()];
        all.extend((0..3).map(|a| l.advice(a)));
        all.extend((0..3).map(|a| l.prefix(a)));
        assert_eq!(all, (4..l.dim()).collect::<Vec<_>>());
    }

    #[test]
    fn env_dims_fit_gradient_harness() {
        for env in [EnvKind::MiniHouse, EnvKind::MiniShop] {
            assert!(Layout::for_env(env).dim() <= 64);
        }
    }
}
