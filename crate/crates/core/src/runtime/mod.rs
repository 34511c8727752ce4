//! Self-aware inference: decode one output per step, commit its final action,
//! and account for reflection and knowledge use.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::{KnowledgeBase, Selector};
use crate::minienv::{step as env_step, Action, History, Task, TaskType, WorldState};
use crate::policy::{Agent, DecodeMode, NoKnowledge, PolicyError, Situation, StepInput};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("empty task set")]
    NoTasks,
    #[error("train and test types overlap: {0:?}")]
    Overlap(Vec<TaskType>),
    #[error("task {0} has a type outside the test split")]
    OutsideSplit(String),
    #[error("test seeds also appear in training: {0:?}")]
    SeedLeak(Vec<u64>),
    #[error("bad split `{0}`")]
    Split(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub committed_action: Action,
    pub situation: Situation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knowledge_used: Option<String>,
    pub reflected: bool,
    /// First attempt, when the step reflected.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_action: Option<Action>,
    pub observation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task_id: String,
    pub task_type: TaskType,
    pub reward: f64,
    pub steps: usize,
    pub knowledge_steps: usize,
    pub reflection_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Selector invocations; equals `knowledge_steps`.
    pub selector_calls: usize,
    pub trace: Vec<StepOutcome>,
}

/// Decode, commit the final action, and append it to `history`.
/// Returns the outcome plus the environment's reward and done flag.
pub fn run_step(
    policy: &dyn Agent,
    history: &mut History,
    state: &mut WorldState,
    kb: Option<&KnowledgeBase>,
    mode: DecodeMode,
) -> Result<(StepOutcome, f64, bool, usize), RuntimeError> {
    let input = StepInput::new(history);
    let (y, calls) = match kb {
        Some(kb) => {
            let mut sel = Selector::new(kb);
            let y = policy.decode(&input, mode, &mut sel)?;
            (y, sel.calls)
        }
        None => (policy.decode(&input, mode, &mut NoKnowledge)?, 0),
    };
    y.validate()?;
    let task = history.task.clone();
    let (next, obs, reward, done) = env_step(state, &task.goal, &y.final_action);
    *state = next;
    let outcome = StepOutcome {
        committed_action: y.final_action.clone(),
        situation: y.situation,
        knowledge_used: y.knowledge.as_ref().map(|k| k.entry_id.clone().unwrap_or_default()),
        reflected: y.situation == Situation::Slow,
        first_action: (y.situation == Situation::Slow).then(|| y.first_action.clone()),
        observation: obs.text.clone(),
    };
    history.push(y.final_action, obs);
    Ok((outcome, reward, done, calls))
}

pub fn run_episode(policy: &dyn Agent, task: &Arc<Task>, kb: Option<&KnowledgeBase>, mode: DecodeMode) -> EpisodeResult {
    let mut history = History::new(task.clone());
    let mut state = task.initial_state.clone();
    let mut r = EpisodeResult {
        task_id: task.id.clone(),
        task_type: task.task_type,
        reward: 0.0,
        steps: 0,
        knowledge_steps: 0,
        reflection_steps: 0,
        error: None,
        selector_calls: 0,
        trace: Vec::new(),
    };
    let cap = task.env_kind.step_cap();
    while r.steps < cap {
        match run_step(policy, &mut history, &mut state, kb, mode) {
            Ok((o, reward, done, calls)) => {
                r.steps += 1;
                r.selector_calls += calls;
                r.knowledge_steps += usize::from(o.situation == Situation::Knowledgeable);
                r.reflection_steps += usize::from(o.reflected);
                r.trace.push(o);
                if done {
                    r.reward = reward;
                    break;
                }
            }
            Err(e) => {
                r.error = Some(e.to_string());
                r.reward = 0.0;
                break;
            }
        }
    }
    r
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Percentage of `part` in `total`, rounded to two decimals.
pub fn percent(part: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        round2(100.0 * part as f64 / total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub mode: String,
    /// Mean reward per task type, in task-type order.
    pub per_type: BTreeMap<TaskType, f64>,
    pub all: f64,
    pub know_pct: f64,
    pub refl_pct: f64,
    pub errored: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<String>,
}

impl Report {
    pub fn from_episodes(mode: DecodeMode, eps: &[EpisodeResult]) -> Self {
        let mut sums: BTreeMap<TaskType, (f64, usize)> = BTreeMap::new();
        for e in eps {
            let s = sums.entry(e.task_type).or_default();
            s.0 += e.reward;
            s.1 += 1;
        }
        let steps = eps.iter().map(|e| e.steps).sum();
        Report {
            mode: mode.name().to_string(),
            per_type: sums.into_iter().map(|(t, (s, n))| (t, s / n as f64)).collect(),
            all: eps.iter().map(|e| e.reward).sum::<f64>() / eps.len().max(1) as f64,
            know_pct: percent(eps.iter().map(|e| e.knowledge_steps).sum(), steps),
            refl_pct: percent(eps.iter().map(|e| e.reflection_steps).sum(), steps),
            errored: eps.iter().filter(|e| e.error.is_some()).map(|e| e.task_id.clone()).collect(),
            episodes: None,
        }
    }

    pub fn know_pct_text(&self) -> String {
        format!("{:.2}%", self.know_pct)
    }
}

/// Run every task; results come back in task order.
pub fn run_all(
    policy: &dyn Agent,
    tasks: &[Arc<Task>],
    kb: Option<&KnowledgeBase>,
    mode: DecodeMode,
) -> Vec<EpisodeResult> {
    tasks.par_iter().map(|t| run_episode(policy, t, kb, mode)).collect()
}

pub fn evaluate(
    policy: &dyn Agent,
    tasks: &[Arc<Task>],
    kb: Option<&KnowledgeBase>,
    mode: DecodeMode,
) -> Result<(Report, Vec<EpisodeResult>), RuntimeError> {
    if tasks.is_empty() {
        return Err(RuntimeError::NoTasks);
    }
    let eps = run_all(policy, tasks, kb, mode);
    for e in eps.iter().filter(|e| e.error.is_some()) {
        log::warn!("episode {} failed: {}", e.task_id, e.error.as_deref().unwrap_or_default());
    }
    Ok((Report::from_episodes(mode, &eps), eps))
}

/// Train/test task-type split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<TaskType>,
    pub test: Vec<TaskType>,
}

impl Split {
    /// Simple types for training, the rest for testing.
    pub fn house_default() -> Self {
        Split {
            train: vec![TaskType::Put, TaskType::Clean, TaskType::Examine],
            test: vec![TaskType::Heat, TaskType::Cool, TaskType::PutTwo],
        }
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        let a: BTreeSet<_> = self.train.iter().collect();
        let both: Vec<TaskType> = self.test.iter().filter(|t| a.contains(t)).copied().collect();
        if !both.is_empty() {
            return Err(RuntimeError::Overlap(both));
        }
        if self.test.is_empty() || self.train.is_empty() {
            return Err(RuntimeError::Split("both sides need at least one type".into()));
        }
        Ok(())
    }

    /// Parse `train=Put,Clean test=Heat,Cool`.
    pub fn parse(s: &str) -> Result<Self, RuntimeError> {
        let bad = || RuntimeError::Split(s.to_string());
        let mut train = None;
        let mut test = None;
        for part in s.split_whitespace() {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            let types = v
                .split(',')
                .filter(|x| !x.is_empty())
                .map(|x| x.parse::<TaskType>().map_err(|_| bad()))
                .collect::<Result<Vec<_>, _>>()?;
            match k {
                "train" => train = Some(types),
                "test" => test = Some(types),
                _ => return Err(bad()),
            }
        }
        let split = Split { train: train.ok_or_else(bad)?, test: test.ok_or_else(bad)? };
        split.validate()?;
        Ok(split)
    }
}

/// Evaluate on test-type tasks whose seeds never occur in training.
pub fn generalization_eval(
    policy: &dyn Agent,
    kb: Option<&KnowledgeBase>,
    mode: DecodeMode,
    split: &Split,
    train_tasks: &[Arc<Task>],
    test_tasks: &[Arc<Task>],
) -> Result<(Report, Vec<EpisodeResult>), RuntimeError> {
    split.validate()?;
    if test_tasks.is_empty() {
        return Err(RuntimeError::NoTasks);
    }
    if let Some(t) = test_tasks.iter().find(|t| !split.test.contains(&t.task_type)) {
        return Err(RuntimeError::OutsideSplit(t.id.clone()));
    }
    let seen: BTreeSet<u64> = train_tasks.iter().map(|t| t.seed).collect();
    let leak: Vec<u64> = test_tasks.iter().map(|t| t.seed).filter(|s| seen.contains(s)).collect();
    if !leak.is_empty() {
        return Err(RuntimeError::SeedLeak(leak));
    }
    evaluate(policy, test_tasks, kb, mode)
}
