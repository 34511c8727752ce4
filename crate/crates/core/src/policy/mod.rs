//! Agents and the decision grammar they emit.
//!
//! Every output `y` is one of three shapes:
//!
//! ```text
//! a STOP            fast thinking
//! a REFL r a'       slow thinking (reflect with template r, then revise)
//! KNOW a            knowledgeable thinking (knowledge text injected after KNOW)
//! ```

pub mod grammar;
pub mod linear;
pub mod params;
pub mod remote;
pub mod scripted;
pub mod templates;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::minienv::view::{vocab, ActionKind, ActionSpace, Belief};
use crate::minienv::{Action, EnvKind, History};

pub use grammar::{Choices, Decision, DecisionContext, Layout, Slot};
pub use linear::LinearPolicy;
pub use params::Params;
pub use scripted::{Scripted, ScriptedKind};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("output is not valid under the grammar: {0}")]
    Grammar(String),
    #[error("rethink needs at least two actions, got {0}")]
    SingletonSpace(usize),
    #[error("competence {0} outside [0, 1]")]
    Competence(f64),
    #[error("knowledge provider failed: {0}")]
    Provider(String),
    #[error("no gold action for this history")]
    NoGold,
    #[error("params shape mismatch: {0}")]
    Shape(String),
    #[error("params file: {0}")]
    Format(String),
    #[error("remote policy: {0}")]
    Remote(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Situation label of one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Situation {
    Fast,
    Slow,
    Knowledgeable,
}

impl fmt::Display for Situation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Grammar masks applied at decode time (and at scoring time).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecodeMode {
    Free,
    NoRefl,
    NoKnow,
    FastOnly,
    ForceKnow,
}

impl DecodeMode {
    pub const ALL: [DecodeMode; 5] =
        [DecodeMode::Free, DecodeMode::NoRefl, DecodeMode::NoKnow, DecodeMode::FastOnly, DecodeMode::ForceKnow];

    pub fn allows_refl(self) -> bool {
        matches!(self, DecodeMode::Free | DecodeMode::NoKnow)
    }

    pub fn allows_know(self) -> bool {
        matches!(self, DecodeMode::Free | DecodeMode::NoRefl | DecodeMode::ForceKnow)
    }

    pub fn name(self) -> &'static str {
        match self {
            DecodeMode::Free => "free",
            DecodeMode::NoRefl => "noret",
            DecodeMode::NoKnow => "noknow",
            DecodeMode::FastOnly => "fastonly",
            DecodeMode::ForceKnow => "forceknow",
        }
    }
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecodeMode {
    type Err = PolicyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DecodeMode::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| PolicyError::Parse(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub template_id: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeRef {
    /// Knowledge base entry the text came from, when known.
    pub entry_id: Option<String>,
    pub text: String,
}

/// A decoded or labeled output `y`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredOutput {
    pub situation: Situation,
    pub first_action: Action,
    pub reflection: Option<Reflection>,
    pub knowledge: Option<KnowledgeRef>,
    pub final_action: Action,
}

impl StructuredOutput {
    pub fn fast(a: Action) -> Self {
        Self { situation: Situation::Fast, first_action: a.clone(), reflection: None, knowledge: None, final_action: a }
    }

    pub fn slow(first: Action, reflection: Reflection, revised: Action) -> Self {
        Self {
            situation: Situation::Slow,
            first_action: first,
            reflection: Some(reflection),
            knowledge: None,
            final_action: revised,
        }
    }

    pub fn knowledgeable(knowledge: KnowledgeRef, a: Action) -> Self {
        Self {
            situation: Situation::Knowledgeable,
            first_action: a.clone(),
            reflection: None,
            knowledge: Some(knowledge),
            final_action: a,
        }
    }

    /// Check the shape invariants of the three situations.
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::Grammar(m.to_string()));
        match self.situation {
            Situation::Fast => {
                if self.first_action != self.final_action || self.reflection.is_some() || self.knowledge.is_some() {
                    return bad("fast output must be a single action");
                }
            }
            Situation::Slow => {
                if self.reflection.is_none() || self.knowledge.is_some() {
                    return bad("slow output needs a reflection and no knowledge");
                }
                if self.first_action == self.final_action {
                    return bad("slow output must revise its first action");
                }
            }
            Situation::Knowledgeable => {
                if self.knowledge.is_none() || self.reflection.is_some() {
                    return bad("knowledgeable output needs knowledge and no reflection");
                }
                if self.first_action != self.final_action {
                    return bad("knowledgeable output commits one action");
                }
            }
        }
        Ok(())
    }

    /// Number of grammar decisions, the length used for normalization.
    pub fn decisions(&self) -> usize {
        match self.situation {
            Situation::Fast | Situation::Knowledgeable => 2,
            Situation::Slow => 4,
        }
    }
}

/// Source of knowledge text when a policy emits KNOW.
pub trait KnowledgeProvider {
    fn provide(&mut self, history: &History) -> Result<KnowledgeRef, PolicyError>;
}

/// Provider that always fails; for modes where KNOW is masked.
pub struct NoKnowledge;

impl KnowledgeProvider for NoKnowledge {
    fn provide(&mut self, _: &History) -> Result<KnowledgeRef, PolicyError> {
        Err(PolicyError::Provider("no knowledge base available".into()))
    }
}

/// Everything an agent may look at for one step.
#[derive(Debug, Clone)]
pub struct StepInput<'a> {
    pub history: &'a History,
    pub belief: Belief,
    pub space: ActionSpace,
    /// Gold action id, used only by scripted agents.
    pub gold: Option<usize>,
}

impl<'a> StepInput<'a> {
    pub fn new(history: &'a History) -> Self {
        let belief = Belief::from_history(history);
        let space = belief.action_space();
        let gold = belief.gold_id();
        Self { history, belief, space, gold }
    }

    pub fn env(&self) -> EnvKind {
        self.belief.env_kind()
    }

    pub fn gold_action(&self) -> Option<&Action> {
        self.space.action(self.gold?)
    }

    pub fn kind_of(&self, a: &Action) -> Option<ActionKind> {
        self.space.id_of(a).map(|i| vocab(self.env())[i])
    }

    pub fn context(&self) -> DecisionContext {
        DecisionContext::new(Layout::for_env(self.env()), self.belief.features(), self.space.ids().collect())
    }
}

/// The agent contract shared by trained, scripted and remote policies.
pub trait Agent: Sync {
    /// First-attempt action.
    fn predict(&self, step: &StepInput) -> Result<Action, PolicyError>;

    /// Rethink after `wrong`: reflection text and a revised action.
    fn rethink(&self, step: &StepInput, wrong: &Action) -> Result<(String, Action), PolicyError>;

    /// Produce a full structured output under a grammar mask.
    fn decode(
        &self,
        step: &StepInput,
        mode: DecodeMode,
        provider: &mut dyn KnowledgeProvider,
    ) -> Result<StructuredOutput, PolicyError>;
}
