//! Situation labels and the two training datasets.
//!
//! `classify` applies the criterion to one gold step: the probe's first
//! prediction is right (fast), right after one rethink (slow), or neither
//! (knowledgeable). `build_self_dataset` walks every gold trajectory and
//! renders targets with special tokens; `mine_negatives` collects the
//! reference policy's wrong outputs as rejected samples.

pub mod records;
pub mod text;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::{select, KnowledgeBase, KnowledgeError, SelectMode, Selector};
use crate::minienv::view::{gold_steps, ActionKind};
use crate::minienv::{seeded_rng, Action, EnvError, History, Task};
use crate::policy::templates::{instantiate, template_for};
use crate::policy::{Agent, DecodeMode, KnowledgeRef, PolicyError, Reflection, Situation, StepInput, StructuredOutput};

pub use text::{leading_label, parse, render, ParseError};

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("a knowledgeable sample needs a non-empty knowledge base")]
    EmptyBase,
    #[error("mix fraction {0} outside [0, 1]")]
    Fraction(f64),
    #[error("bad mix `{0}`, expected relative:P or absolute:P")]
    Mix(String),
    #[error("unknown data mode `{0}`")]
    Mode(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("record {task_id} step {step}: {message}")]
    Record { task_id: String, step: usize, message: String },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
}

/// What the probe did on one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Intermediates {
    pub predicted: Action,
    /// Rethink text and revised action; absent when the first try was right.
    pub rethink: Option<(String, Action)>,
}

/// The situation criterion.
pub fn classify(history: &History, gold: &Action, probe: &dyn Agent) -> Result<(Situation, Intermediates), PolicyError> {
    let step = StepInput::new(history);
    let predicted = probe.predict(&step)?;
    if &predicted == gold {
        return Ok((Situation::Fast, Intermediates { predicted, rethink: None }));
    }
    let (ret, revised) = probe.rethink(&step, &predicted)?;
    let label = if &revised == gold { Situation::Slow } else { Situation::Knowledgeable };
    Ok((label, Intermediates { predicted, rethink: Some((ret, revised)) }))
}

/// Which situations the dataset keeps apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataMode {
    Full,
    /// Slow cases become knowledgeable.
    NoRet,
    /// Knowledgeable cases become slow, reflecting straight onto gold.
    NoKnow,
    /// Gold actions only.
    NoAll,
    /// Every sample is knowledgeable.
    FullKnow,
}

impl DataMode {
    pub const ALL: [DataMode; 5] = [DataMode::Full, DataMode::NoRet, DataMode::NoKnow, DataMode::NoAll, DataMode::FullKnow];

    pub fn name(self) -> &'static str {
        match self {
            DataMode::Full => "full",
            DataMode::NoRet => "noret",
            DataMode::NoKnow => "noknow",
            DataMode::NoAll => "noall",
            DataMode::FullKnow => "fullknow",
        }
    }

    /// Decode mode matching what the data teaches.
    pub fn decode_mode(self) -> DecodeMode {
        match self {
            DataMode::Full => DecodeMode::Free,
            DataMode::NoRet => DecodeMode::NoRefl,
            DataMode::NoKnow => DecodeMode::NoKnow,
            DataMode::NoAll => DecodeMode::FastOnly,
            DataMode::FullKnow => DecodeMode::ForceKnow,
        }
    }

    /// Inverse of [`DataMode::decode_mode`].
    pub fn for_decode(m: DecodeMode) -> Self {
        DataMode::ALL.into_iter().find(|d| d.decode_mode() == m).expect("bijection")
    }
}

impl fmt::Display for DataMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DataMode {
    type Err = LabelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DataMode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| LabelError::Mode(s.to_string()))
    }
}

/// Data-scaling mix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "p", rename_all = "lowercase")]
pub enum Mix {
    /// Keep `ceil(p N)` self-aware samples and nothing else.
    Absolute(f64),
    /// Keep `ceil(p N)` self-aware samples; the rest fall back to gold actions.
    Relative(f64),
}

impl Mix {
    pub fn fraction(self) -> f64 {
        match self {
            Mix::Absolute(p) | Mix::Relative(p) => p,
        }
    }

    /// `ceil(p n)`, forgiving float noise such as `0.4 * 1000`.
    pub fn count(self, n: usize) -> usize {
        let x = self.fraction() * n as f64;
        ((x - 1e-9).ceil().max(0.0) as usize).min(n)
    }
}

impl FromStr for Mix {
    type Err = LabelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, p) = s.split_once(':').ok_or_else(|| LabelError::Mix(s.to_string()))?;
        let p: f64 = p.trim().parse().map_err(|_| LabelError::Mix(s.to_string()))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(LabelError::Fraction(p));
        }
        match kind.trim() {
            "absolute" => Ok(Mix::Absolute(p)),
            "relative" => Ok(Mix::Relative(p)),
            _ => Err(LabelError::Mix(s.to_string())),
        }
    }
}

impl fmt::Display for Mix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mix::Absolute(p) => write!(f, "absolute:{p}"),
            Mix::Relative(p) => write!(f, "relative:{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub mode: DataMode,
    pub mix: Option<Mix>,
    /// Seeds the mix subsample.
    pub seed: u64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self { mode: DataMode::Full, mix: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfAwareSample {
    pub task_id: String,
    pub step: usize,
    pub history: History,
    pub output: StructuredOutput,
}

impl SelfAwareSample {
    pub fn label(&self) -> Situation {
        self.output.situation
    }

    pub fn canonical_text(&self) -> String {
        render(&self.output)
    }

    pub fn gold(&self) -> &Action {
        &self.output.final_action
    }

    pub fn id(&self) -> String {
        format!("{}#{}", self.task_id, self.step)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub task_id: String,
    pub step: usize,
    pub history: History,
    pub chosen: StructuredOutput,
    pub rejected: StructuredOutput,
}

impl PairSample {
    pub fn id(&self) -> String {
        format!("{}#{}", self.task_id, self.step)
    }
}

fn reflect(step: &StepInput, wrong: &Action, revised: &Action) -> Reflection {
    let t = template_for(step.kind_of(revised));
    Reflection { template_id: t, text: instantiate(t, wrong, revised) }
}

fn knowledge(
    kb: Option<&KnowledgeBase>,
    history: &History,
    win: ActionKind,
    loss: Option<ActionKind>,
) -> Result<KnowledgeRef, LabelError> {
    let kb = kb.filter(|k| !k.is_empty()).ok_or(LabelError::EmptyBase)?;
    let e = select(kb, history, SelectMode::TrainContrast { win, loss })?;
    Ok(KnowledgeRef { entry_id: Some(e.id.clone()), text: e.rule_text.clone() })
}

/// Target output for one gold step under a data mode.
pub fn target(
    history: &History,
    gold: &Action,
    label: Situation,
    inter: &Intermediates,
    mode: DataMode,
    kb: Option<&KnowledgeBase>,
) -> Result<StructuredOutput, LabelError> {
    let step = StepInput::new(history);
    let win = step
        .kind_of(gold)
        .ok_or_else(|| PolicyError::Grammar(format!("gold `{gold}` is not in the action space")))?;
    // the action the knowledge should talk the agent out of
    let loss_action = inter.rethink.as_ref().map(|(_, a)| a).filter(|a| *a != gold).unwrap_or(&inter.predicted);
    let loss = Some(loss_action).filter(|a| *a != gold).and_then(|a| step.kind_of(a));
    let know = || -> Result<StructuredOutput, LabelError> {
        Ok(StructuredOutput::knowledgeable(knowledge(kb, history, win, loss)?, gold.clone()))
    };
    // the probe's own rethink text is the canonical template for scripted and
    // linear probes, so the text is always re-rendered from the template
    let slow = || StructuredOutput::slow(inter.predicted.clone(), reflect(&step, &inter.predicted, gold), gold.clone());
    let fast = || StructuredOutput::fast(gold.clone());
    Ok(match mode {
        DataMode::NoAll => fast(),
        DataMode::FullKnow => know()?,
        _ => match (label, mode) {
            (Situation::Fast, _) => fast(),
            (Situation::Slow, DataMode::NoRet) => know()?,
            (Situation::Slow, _) => slow(),
            (Situation::Knowledgeable, DataMode::NoKnow) => slow(),
            (Situation::Knowledgeable, _) => know()?,
        },
    })
}

fn label_task(
    task: &Arc<Task>,
    probe: &dyn Agent,
    kb: Option<&KnowledgeBase>,
    mode: DataMode,
) -> Result<Vec<SelfAwareSample>, LabelError> {
    let mut out = Vec::new();
    for (i, (h, gold)) in gold_steps(task)?.into_iter().enumerate() {
        let (label, inter) = classify(&h, &gold, probe)?;
        let output = target(&h, &gold, label, &inter, mode, kb)?;
        out.push(SelfAwareSample { task_id: task.id.clone(), step: i, history: h, output });
    }
    Ok(out)
}

/// Label every gold step of every task; output is ordered by task, then step.
pub fn build_self_dataset(
    tasks: &[Arc<Task>],
    probe: &dyn Agent,
    kb: Option<&KnowledgeBase>,
    options: DatasetOptions,
) -> Result<Vec<SelfAwareSample>, LabelError> {
    let per_task: Vec<Result<Vec<SelfAwareSample>, LabelError>> =
        tasks.par_iter().map(|t| label_task(t, probe, kb, options.mode)).collect();
    let mut all = Vec::new();
    for r in per_task {
        all.extend(r?);
    }
    let Some(mix) = options.mix else { return Ok(all) };
    if !(0.0..=1.0).contains(&mix.fraction()) {
        return Err(LabelError::Fraction(mix.fraction()));
    }
    let n = all.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(options.seed, "mix"));
    let mut keep = vec![false; n];
    for &i in &idx[..mix.count(n)] {
        keep[i] = true;
    }
    Ok(match mix {
        Mix::Absolute(_) => all.into_iter().zip(keep).filter(|(_, k)| *k).map(|(s, _)| s).collect(),
        Mix::Relative(_) => all
            .into_iter()
            .zip(keep)
            .map(|(mut s, k)| {
                if !k {
                    s.output = StructuredOutput::fast(s.output.final_action.clone());
                }
                s
            })
            .collect(),
    })
}

/// Greedy-decode `reference` on each history under `mode` and keep its wrong
/// outputs. The full method mines under `DecodeMode::Free`.
pub fn mine_negatives(
    data: &[SelfAwareSample],
    reference: &dyn Agent,
    kb: Option<&KnowledgeBase>,
    mode: DecodeMode,
) -> Result<Vec<PairSample>, LabelError> {
    let empty = KnowledgeBase::new(1, Vec::new());
    let kb = kb.unwrap_or(&empty);
    let found: Vec<Result<Option<PairSample>, LabelError>> = data
        .par_iter()
        .map(|s| {
            let step = StepInput::new(&s.history);
            let mut sel = Selector::new(kb);
            let y = reference.decode(&step, mode, &mut sel)?;
            if &y.final_action == s.gold() {
                return Ok(None);
            }
            Ok(Some(PairSample {
                task_id: s.task_id.clone(),
                step: s.step,
                history: s.history.clone(),
                chosen: s.output.clone(),
                rejected: y,
            }))
        })
        .collect();
    let mut out = Vec::new();
    for r in found {
        if let Some(p) = r? {
            out.push(p);
        }
    }
    if out.is_empty() {
        log::warn!("reference policy made no mistakes; the pair set is empty");
    }
    Ok(out)
}

/// Count of each label.
pub fn label_counts(data: &[SelfAwareSample]) -> [usize; 3] {
    let mut c = [0; 3];
    for s in data {
        c[s.label() as usize] += 1;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minienv::{generate_task, EnvKind, TaskType};
    use crate::policy::{Scripted, ScriptedKind};

    fn tasks(n: u64) -> Vec<Arc<Task>> {
        (0..n).map(|s| Arc::new(generate_task(EnvKind::MiniHouse, TaskType::Put, s).unwrap())).collect()
    }

    #[test]
    fn scripted_probes_hit_their_label() {
        let ts = tasks(3);
        for (kind, want) in [
            (ScriptedKind::AlwaysGold, Situation::Fast),
            (ScriptedKind::WrongThenGold, Situation::Slow),
            (ScriptedKind::AlwaysWrong, Situation::Knowledgeable),
        ] {
            let p = Scripted::new(kind, 1).unwrap();
            for t in &ts {
                for (h, g) in gold_steps(t).unwrap() {
                    assert_eq!(classify(&h, &g, &p).unwrap().0, want);
                }
            }
        }
    }

    #[test]
    fn knowledgeable_needs_a_base() {
        let p = Scripted::new(ScriptedKind::AlwaysWrong, 1).unwrap();
        let r = build_self_dataset(&tasks(1), &p, None, DatasetOptions::default());
        assert!(matches!(r, Err(LabelError::EmptyBase)));
    }

    #[test]
    fn mix_count_is_ceiling() {
        assert_eq!(Mix::Relative(0.4).count(1000), 400);
        assert_eq!(Mix::Absolute(0.25).count(10), 3);
        assert_eq!(Mix::Absolute(0.0).count(10), 0);
        assert_eq!(Mix::Absolute(1.0).count(7), 7);
        assert_eq!("relative:0.4".parse::<Mix>().unwrap(), Mix::Relative(0.4));
        assert!("relative:1.4".parse::<Mix>().is_err());
        assert!("half:0.4".parse::<Mix>().is_err());
    }
}
