//! Scripted agents with known competence, used as probes and in tests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::templates::{instantiate, template_for};
use super::{Agent, DecodeMode, KnowledgeProvider, PolicyError, Reflection, StepInput, StructuredOutput};
use crate::minienv::{hash_unit, Action, TaskType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScriptedKind {
    AlwaysGold,
    WrongThenGold,
    AlwaysWrong,
    /// Probability of a correct prediction (and, independently, of a correct
    /// rethink) per task type. Types missing from the map use 0.5.
    Competence(BTreeMap<TaskType, f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scripted {
    kind: ScriptedKind,
    seed: u64,
}

impl Scripted {
    pub fn new(kind: ScriptedKind, seed: u64) -> Result<Self, PolicyError> {
        if let ScriptedKind::Competence(m) = &kind {
            if let Some(p) = m.values().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(PolicyError::Competence(*p));
            }
        }
        Ok(Self { kind, seed })
    }

    pub fn kind(&self) -> &ScriptedKind {
        &self.kind
    }

    fn coin(&self, step: &StepInput, label: &str) -> f64 {
        let t = &step.history.task;
        hash_unit(&[
            &self.seed.to_le_bytes(),
            t.id.as_bytes(),
            &(step.history.len() as u64).to_le_bytes(),
            label.as_bytes(),
        ])
    }

    fn competence(&self, t: TaskType) -> f64 {
        match &self.kind {
            ScriptedKind::Competence(m) => m.get(&t).copied().unwrap_or(0.5),
            ScriptedKind::AlwaysGold => 1.0,
            _ => 0.0,
        }
    }

    fn gold<'s>(&self, step: &'s StepInput) -> Result<&'s Action, PolicyError> {
        step.gold_action().ok_or(PolicyError::NoGold)
    }

    /// A feasible non-gold action, avoiding `avoid` when possible.
    fn wrong(&self, step: &StepInput, avoid: Option<&Action>, label: &str) -> Result<Action, PolicyError> {
        let gold = self.gold(step)?;
        let wrongs: Vec<&Action> = step.space.entries.iter().map(|(_, a)| a).filter(|a| *a != gold).collect();
        let pool: Vec<&Action> = wrongs.iter().copied().filter(|a| Some(*a) != avoid).collect();
        let pool = if pool.is_empty() { wrongs } else { pool };
        if pool.is_empty() {
            return Err(PolicyError::SingletonSpace(step.space.len()));
        }
        let i = (self.coin(step, label) * pool.len() as f64) as usize;
        Ok(pool[i.min(pool.len() - 1)].clone())
    }

    fn reflection(&self, step: &StepInput, wrong: &Action, revised: &Action) -> String {
        instantiate(template_for(step.kind_of(revised)), wrong, revised)
    }
}

impl Agent for Scripted {
    fn predict(&self, step: &StepInput) -> Result<Action, PolicyError> {
        let correct = match &self.kind {
            ScriptedKind::AlwaysGold => true,
            ScriptedKind::WrongThenGold | ScriptedKind::AlwaysWrong => false,
            ScriptedKind::Competence(_) => self.coin(step, "predict") < self.competence(step.history.task.task_type),
        };
        if correct {
            self.gold(step).cloned()
        } else {
            self.wrong(step, None, "wrong")
        }
    }

    fn rethink(&self, step: &StepInput, wrong: &Action) -> Result<(String, Action), PolicyError> {
        if step.space.len() < 2 {
            return Err(PolicyError::SingletonSpace(step.space.len()));
        }
        let correct = match &self.kind {
            ScriptedKind::AlwaysGold | ScriptedKind::WrongThenGold => true,
            ScriptedKind::AlwaysWrong => false,
            ScriptedKind::Competence(_) => self.coin(step, "rethink") < self.competence(step.history.task.task_type),
        };
        let revised = if correct && self.gold(step)? != wrong {
            self.gold(step)?.clone()
        } else {
            self.wrong(step, Some(wrong), "rewrong")?
        };
        Ok((self.reflection(step, wrong, &revised), revised))
    }

    fn decode(
        &self,
        step: &StepInput,
        mode: DecodeMode,
        provider: &mut dyn KnowledgeProvider,
    ) -> Result<StructuredOutput, PolicyError> {
        let gold = self.gold(step)?.clone();
        if mode == DecodeMode::ForceKnow {
            return Ok(StructuredOutput::knowledgeable(provider.provide(step.history)?, gold));
        }
        let a = self.predict(step)?;
        if a == gold {
            return Ok(StructuredOutput::fast(a));
        }
        let (text, revised) = self.rethink(step, &a)?;
        let slow = |revised: Action, text: String| {
            let t = template_for(step.kind_of(&revised));
            StructuredOutput::slow(a.clone(), Reflection { template_id: t, text }, revised)
        };
        if mode.allows_refl() && revised == gold {
            return Ok(slow(revised, text));
        }
        if mode.allows_know() {
            // knowledge always repairs a scripted agent
            return Ok(StructuredOutput::knowledgeable(provider.provide(step.history)?, gold));
        }
        if mode.allows_refl() && revised != a {
            return Ok(slow(revised, text));
        }
        Ok(StructuredOutput::fast(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn competence_outside_unit_interval_rejected() {
        let m = BTreeMap::from([(TaskType::Put, 1.5)]);
        assert!(matches!(Scripted::new(ScriptedKind::Competence(m), 0), Err(PolicyError::Competence(_))));
        let m = BTreeMap::from([(TaskType::Put, -0.1)]);
        assert!(Scripted::new(ScriptedKind::Competence(m), 0).is_err());
        let m = BTreeMap::from([(TaskType::Put, 0.3)]);
        assert!(Scripted::new(ScriptedKind::Competence(m), 0).is_ok());
    }
}
