//! JSONL records for the two datasets.
//!
//! Records carry text, not histories; histories are rebuilt from the task set
//! by replaying gold prefixes and checked against the stored digest.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::text::{leading_label, parse};
use super::{LabelError, PairSample, SelfAwareSample};
use crate::minienv::view::gold_steps;
use crate::minienv::{History, Task};
use crate::policy::Situation;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfRecord {
    pub task_id: String,
    pub step: usize,
    pub history_digest: String,
    pub label: Situation,
    pub canonical_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub task_id: String,
    pub step: usize,
    pub chosen_text: String,
    pub rejected_text: String,
}

impl From<&SelfAwareSample> for SelfRecord {
    fn from(s: &SelfAwareSample) -> Self {
        Self {
            task_id: s.task_id.clone(),
            step: s.step,
            history_digest: s.history.digest(),
            label: s.label(),
            canonical_text: s.canonical_text(),
            knowledge_id: s.output.knowledge.as_ref().and_then(|k| k.entry_id.clone()),
        }
    }
}

impl From<&PairSample> for PairRecord {
    fn from(p: &PairSample) -> Self {
        Self {
            task_id: p.task_id.clone(),
            step: p.step,
            chosen_text: super::render(&p.chosen),
            rejected_text: super::render(&p.rejected),
        }
    }
}

/// Rebuilds gold-prefix histories on demand.
pub struct HistoryIndex {
    tasks: HashMap<String, Arc<Task>>,
    cache: HashMap<String, Vec<History>>,
}

impl HistoryIndex {
    pub fn new(tasks: &[Arc<Task>]) -> Self {
        Self { tasks: tasks.iter().map(|t| (t.id.clone(), t.clone())).collect(), cache: HashMap::new() }
    }

    pub fn history(&mut self, task_id: &str, step: usize) -> Result<History, LabelError> {
        let bad = |m: &str| LabelError::Record { task_id: task_id.to_string(), step, message: m.to_string() };
        if !self.cache.contains_key(task_id) {
            let task = self.tasks.get(task_id).ok_or_else(|| bad("task not in the task set"))?;
            let hs = gold_steps(task)?.into_iter().map(|(h, _)| h).collect();
            self.cache.insert(task_id.to_string(), hs);
        }
        self.cache[task_id].get(step).cloned().ok_or_else(|| bad("step beyond the gold trajectory"))
    }
}

pub fn sample_from_record(r: &SelfRecord, index: &mut HistoryIndex) -> Result<SelfAwareSample, LabelError> {
    let bad = |m: String| LabelError::Record { task_id: r.task_id.clone(), step: r.step, message: m };
    let history = index.history(&r.task_id, r.step)?;
    if history.digest() != r.history_digest {
        return Err(bad(format!("history digest {} does not match {}", history.digest(), r.history_digest)));
    }
    let mut output = parse(&r.canonical_text)?;
    if output.situation != r.label || leading_label(&r.canonical_text) != r.label {
        return Err(bad(format!("label {} disagrees with the text", r.label)));
    }
    if let Some(k) = output.knowledge.as_mut() {
        k.entry_id = r.knowledge_id.clone();
    }
    Ok(SelfAwareSample { task_id: r.task_id.clone(), step: r.step, history, output })
}

pub fn pair_from_record(r: &PairRecord, index: &mut HistoryIndex) -> Result<PairSample, LabelError> {
    let history = index.history(&r.task_id, r.step)?;
    Ok(PairSample {
        task_id: r.task_id.clone(),
        step: r.step,
        history,
        chosen: parse(&r.chosen_text)?,
        rejected: parse(&r.rejected_text)?,
    })
}

pub fn samples_from_records(rs: &[SelfRecord], tasks: &[Arc<Task>]) -> Result<Vec<SelfAwareSample>, LabelError> {
    let mut index = HistoryIndex::new(tasks);
    rs.iter().map(|r| sample_from_record(r, &mut index)).collect()
}

pub fn pairs_from_records(rs: &[PairRecord], tasks: &[Arc<Task>]) -> Result<Vec<PairSample>, LabelError> {
    let mut index = HistoryIndex::new(tasks);
    rs.iter().map(|r| pair_from_record(r, &mut index)).collect()
}
