//! Knowledge system: step-level pair mining, rule generation, consolidation
//! under an entry cap, and rule selection.

pub mod rules;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::minienv::view::{gold_steps, ActionKind, Belief, StateKey};
use crate::minienv::{Action, EnvError, EnvKind, History, Task, TaskType};
use crate::policy::{Agent, KnowledgeProvider, KnowledgeRef, PolicyError, StepInput};

/// Entry caps per environment.
pub const HOUSE_CAP: usize = 24;
pub const SHOP_CAP: usize = 10;

pub fn default_cap(env: EnvKind) -> usize {
    match env {
        EnvKind::MiniHouse => HOUSE_CAP,
        EnvKind::MiniShop => SHOP_CAP,
    }
}

/// Default number of mined pairs per task type.
pub fn default_per_type(env: EnvKind) -> usize {
    match env {
        EnvKind::MiniHouse => 6,
        EnvKind::MiniShop => 20,
    }
}

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("knowledge base is empty")]
    EmptyBase,
    #[error("no step pairs to learn from")]
    NoPairs,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("knowledge base file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A history where the prior policy disagreed with the gold action.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPair {
    pub history: History,
    pub win_action: Action,
    pub loss_action: Action,
    pub task_id: String,
    pub step: usize,
    pub key: StateKey,
    pub win_kind: ActionKind,
    pub loss_kind: Option<ActionKind>,
    /// The gold action ends the trajectory.
    pub completes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntryKind {
    Error,
    SuccessProcess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub id: String,
    pub rule_text: String,
    pub kind: EntryKind,
    pub condition_key: StateKey,
    pub advice_action_class: ActionKind,
    pub example: String,
    pub task_id: String,
}

impl KnowledgeEntry {
    /// Numeric part of `rule_N`, for ordering.
    pub fn number(&self) -> u64 {
        self.id.strip_prefix("rule_").and_then(|n| n.parse().ok()).unwrap_or(u64::MAX)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub cap: usize,
    pub entries: Vec<KnowledgeEntry>,
}

impl KnowledgeBase {
    pub fn new(cap: usize, entries: Vec<KnowledgeEntry>) -> Self {
        Self { cap, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&KnowledgeEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("knowledge base serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, KnowledgeError> {
        let kb: KnowledgeBase = serde_json::from_str(s).map_err(|e| KnowledgeError::Format(e.to_string()))?;
        let ids: BTreeSet<&str> = kb.entries.iter().map(|e| e.id.as_str()).collect();
        if ids.len() != kb.entries.len() {
            return Err(KnowledgeError::Format("duplicate entry ids".into()));
        }
        Ok(kb)
    }

    pub fn save(&self, path: &Path) -> Result<(), KnowledgeError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Walk gold trajectories and keep histories where `prior` errs, at most
/// `per_type` per task type. A first pass takes at most one pair per state
/// key so rules cover distinct situations; a second pass fills the quota in
/// task order. Tasks are visited in the given order.
pub fn mine_pairs(tasks: &[Arc<Task>], prior: &dyn Agent, per_type: usize) -> Result<Vec<StepPair>, KnowledgeError> {
    let mut candidates = Vec::new();
    for task in tasks {
        let steps = gold_steps(task)?;
        let n = steps.len();
        for (i, (h, gold)) in steps.into_iter().enumerate() {
            let input = StepInput::new(&h);
            let pred = prior.predict(&input)?;
            if pred == gold {
                continue;
            }
            let win_kind = input.kind_of(&gold).expect("gold is in the action space");
            let loss_kind = input.kind_of(&pred);
            candidates.push(StepPair {
                key: input.belief.state_key(),
                history: h,
                win_action: gold,
                loss_action: pred,
                task_id: task.id.clone(),
                step: i,
                win_kind,
                loss_kind,
                completes: i + 1 == n,
            });
        }
    }
    let mut take = vec![false; candidates.len()];
    let mut counts: std::collections::BTreeMap<TaskType, usize> = Default::default();
    let mut seen: BTreeSet<StateKey> = BTreeSet::new();
    for (i, p) in candidates.iter().enumerate() {
        let c = counts.entry(p.key.task_type).or_insert(0);
        if *c < per_type && seen.insert(p.key) {
            take[i] = true;
            *c += 1;
        }
    }
    for (i, p) in candidates.iter().enumerate() {
        let c = counts.entry(p.key.task_type).or_insert(0);
        if !take[i] && *c < per_type {
            take[i] = true;
            *c += 1;
        }
    }
    let out: Vec<StepPair> = candidates.into_iter().zip(take).filter(|(_, t)| *t).map(|(p, _)| p).collect();
    let want = per_type * tasks.iter().map(|t| t.task_type).collect::<BTreeSet<_>>().len();
    if out.len() < want {
        log::warn!("mined {} pairs, fewer than the {} requested", out.len(), want);
    }
    Ok(out)
}

fn pair_example(p: &StepPair) -> String {
    format!("{} step {}: chose `{}` over `{}`", p.task_id, p.step, p.win_action, p.loss_action)
}

/// One Error rule per pair, plus a Success Process rule whenever the pair's
/// gold action completes its trajectory. Ids are `rule_1, rule_2, ...`.
pub fn generate_rules(pairs: &[StepPair]) -> Vec<KnowledgeEntry> {
    let mut out = Vec::new();
    for p in pairs {
        out.push(KnowledgeEntry {
            id: String::new(),
            rule_text: rules::error_rule(&p.key, p.win_kind, p.loss_kind),
            kind: EntryKind::Error,
            condition_key: p.key,
            advice_action_class: p.win_kind,
            example: pair_example(p),
            task_id: p.task_id.clone(),
        });
        if p.completes {
            out.push(KnowledgeEntry {
                id: String::new(),
                rule_text: rules::success_rule(p.key.task_type),
                kind: EntryKind::SuccessProcess,
                condition_key: p.key,
                advice_action_class: p.win_kind,
                example: pair_example(p),
                task_id: p.task_id.clone(),
            });
        }
    }
    for (i, e) in out.iter_mut().enumerate() {
        e.id = format!("rule_{}", i + 1);
    }
    out
}

/// Deduplicate Error rules by condition key, then drop Error rules from the
/// most recent end until the cap holds. Success Process rules are never
/// merged and are dropped only when no Error rule is left.
pub fn consolidate(base: &KnowledgeBase) -> KnowledgeBase {
    let mut entries = base.entries.clone();
    entries.sort_by_key(|e| e.number());
    let mut kept: Vec<KnowledgeEntry> = Vec::with_capacity(entries.len());
    for e in entries {
        if e.kind == EntryKind::Error {
            if let Some(k) =
                kept.iter_mut().find(|k| k.kind == EntryKind::Error && k.condition_key == e.condition_key)
            {
                if !k.example.split('\n').any(|x| x == e.example) {
                    k.example.push('\n');
                    k.example.push_str(&e.example);
                }
                continue;
            }
        }
        kept.push(e);
    }
    for kind in [EntryKind::Error, EntryKind::SuccessProcess] {
        while kept.len() > base.cap {
            match kept.iter().rposition(|e| e.kind == kind) {
                Some(i) => {
                    kept.remove(i);
                }
                None => break,
            }
        }
    }
    KnowledgeBase { cap: base.cap, entries: kept }
}

/// Selection mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    Inference,
    TrainContrast { win: ActionKind, loss: Option<ActionKind> },
}

/// Relevance score of one entry for a state key.
pub fn score(e: &KnowledgeEntry, key: &StateKey, mode: SelectMode) -> u32 {
    let c = &e.condition_key;
    let mut s = 0;
    if c.task_type == key.task_type {
        s += 2;
    }
    if c.phase == key.phase {
        s += 1;
    }
    if c.holding == key.holding {
        s += 1;
    }
    if let SelectMode::TrainContrast { win, loss } = mode {
        if e.advice_action_class == win {
            s += 2;
        }
        if let Some(l) = loss {
            if rules::warns_against(&e.rule_text, key.task_type, l) {
                s += 1;
            }
        }
    }
    s
}

/// Highest-scoring entry; ties go to the lowest id.
pub fn select_by_key<'a>(
    base: &'a KnowledgeBase,
    key: &StateKey,
    mode: SelectMode,
) -> Result<&'a KnowledgeEntry, KnowledgeError> {
    base.entries
        .iter()
        .max_by(|a, b| score(a, key, mode).cmp(&score(b, key, mode)).then(b.number().cmp(&a.number())))
        .ok_or(KnowledgeError::EmptyBase)
}

pub fn select<'a>(
    base: &'a KnowledgeBase,
    history: &History,
    mode: SelectMode,
) -> Result<&'a KnowledgeEntry, KnowledgeError> {
    select_by_key(base, &Belief::from_history(history).state_key(), mode)
}

/// Inference-time provider backed by a knowledge base. Counts its calls.
pub struct Selector<'a> {
    pub base: &'a KnowledgeBase,
    pub calls: usize,
}

impl<'a> Selector<'a> {
    pub fn new(base: &'a KnowledgeBase) -> Self {
        Self { base, calls: 0 }
    }
}

impl KnowledgeProvider for Selector<'_> {
    fn provide(&mut self, history: &History) -> Result<KnowledgeRef, PolicyError> {
        self.calls += 1;
        let e = select(self.base, history, SelectMode::Inference).map_err(|e| PolicyError::Provider(e.to_string()))?;
        Ok(KnowledgeRef { entry_id: Some(e.id.clone()), text: e.rule_text.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minienv::view::{HoldingClass, Phase};

    pub(crate) fn entry(n: u64, kind: EntryKind, key: StateKey, advice: ActionKind) -> KnowledgeEntry {
        KnowledgeEntry {
            id: format!("rule_{n}"),
            rule_text: match kind {
                EntryKind::Error => rules::error_rule(&key, advice, None),
                EntryKind::SuccessProcess => rules::success_rule(key.task_type),
            },
            kind,
            condition_key: key,
            advice_action_class: advice,
            example: format!("ex{n}"),
            task_id: "t".into(),
        }
    }

    fn key(t: TaskType, phase: Phase, holding: HoldingClass) -> StateKey {
        StateKey { task_type: t, phase, holding }
    }

    #[test]
    fn single_entry_selected() {
        let k = key(TaskType::Put, Phase::Seeking, HoldingClass::None);
        let kb = KnowledgeBase::new(24, vec![entry(1, EntryKind::Error, k, ActionKind::Explore)]);
        let other = key(TaskType::Heat, Phase::AtTarget, HoldingClass::Goal);
        assert_eq!(select_by_key(&kb, &other, SelectMode::Inference).unwrap().id, "rule_1");
    }

    #[test]
    fn dominance_and_ties() {
        let want = key(TaskType::Cool, Phase::Holding, HoldingClass::Goal);
        let kb = KnowledgeBase::new(
            24,
            vec![
                entry(1, EntryKind::Error, key(TaskType::Put, Phase::Seeking, HoldingClass::None), ActionKind::Explore),
                entry(2, EntryKind::Error, key(TaskType::Cool, Phase::Holding, HoldingClass::Other), ActionKind::UseTool),
            ],
        );
        assert_eq!(select_by_key(&kb, &want, SelectMode::Inference).unwrap().id, "rule_2");
        let tie = KnowledgeBase::new(
            24,
            vec![
                entry(7, EntryKind::Error, want, ActionKind::GoToTool),
                entry(3, EntryKind::Error, want, ActionKind::UseTool),
            ],
        );
        assert_eq!(select_by_key(&tie, &want, SelectMode::Inference).unwrap().id, "rule_3");
        let c = SelectMode::TrainContrast { win: ActionKind::GoToTool, loss: None };
        assert_eq!(select_by_key(&tie, &want, c).unwrap().id, "rule_7");
    }

    #[test]
    fn empty_base_rejected() {
        let kb = KnowledgeBase::new(24, vec![]);
        let k = key(TaskType::Put, Phase::Seeking, HoldingClass::None);
        assert!(matches!(select_by_key(&kb, &k, SelectMode::Inference), Err(KnowledgeError::EmptyBase)));
    }

    #[test]
    fn consolidation_merges_duplicate_keys() {
        let k = key(TaskType::Put, Phase::Seeking, HoldingClass::None);
        let kb = KnowledgeBase::new(
            24,
            vec![entry(1, EntryKind::Error, k, ActionKind::Explore), entry(2, EntryKind::Error, k, ActionKind::Open)],
        );
        let c = consolidate(&kb);
        assert_eq!(c.len(), 1);
        assert_eq!(c.entries[0].id, "rule_1");
        assert_eq!(c.entries[0].example, "ex1\nex2");
    }

    #[test]
    fn unchanged_when_small_and_unique() {
        let kb = KnowledgeBase::new(
            24,
            vec![
                entry(1, EntryKind::Error, key(TaskType::Put, Phase::Seeking, HoldingClass::None), ActionKind::Explore),
                entry(2, EntryKind::SuccessProcess, key(TaskType::Put, Phase::AtTarget, HoldingClass::Goal), ActionKind::PutHere),
            ],
        );
        assert_eq!(consolidate(&kb), kb);
    }

    #[test]
    fn json_roundtrip() {
        let kb = KnowledgeBase::new(
            10,
            vec![entry(4, EntryKind::Error, key(TaskType::Purchase, Phase::Seeking, HoldingClass::None), ActionKind::SearchGoal)],
        );
        assert_eq!(KnowledgeBase::from_json(&kb.to_json()).unwrap(), kb);
    }
}
