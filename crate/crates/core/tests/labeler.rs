mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use knowself::knowledge::KnowledgeBase;
use knowself::labeler::records::{pairs_from_records, samples_from_records, PairRecord, SelfRecord};
use knowself::labeler::{
    build_self_dataset, label_counts, leading_label, mine_negatives, parse, render, DataMode, DatasetOptions, Mix,
};
use knowself::minienv::view::gold_steps;
use knowself::minienv::{Action, Task, TaskType};
use knowself::pipeline::{build_kb, PipelineConfig};
use knowself::policy::{
    Agent, DecodeMode, KnowledgeProvider, PolicyError, Scripted, ScriptedKind, Situation, StepInput, StructuredOutput,
};
use proptest::prelude::*;

use common::*;

fn kb_for(tasks: &[Arc<Task>]) -> KnowledgeBase {
    build_kb(&PipelineConfig::house(), tasks).unwrap()
}

fn competence(p: f64, seed: u64) -> Scripted {
    let m: BTreeMap<TaskType, f64> = TaskType::HOUSE.iter().map(|t| (*t, p)).collect();
    Scripted::new(ScriptedKind::Competence(m), seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn render_parse_roundtrip(seed in 0u64..1_000_000) {
        let y = random_output(&mut rng(seed));
        let text = render(&y);
        prop_assert_eq!(leading_label(&text), y.situation);
        let back = parse(&text).unwrap();
        prop_assert_eq!(&back, &y);
        prop_assert_eq!(render(&back), text);
    }

    #[test]
    fn mix_count_is_ceiling(p in 0.0f64..=1.0, n in 0usize..5000) {
        let c = Mix::Relative(p).count(n);
        prop_assert!(c <= n);
        prop_assert!(c as f64 + 1e-6 >= p * n as f64);
        prop_assert!((c as f64) < p * n as f64 + 1.0);
    }
}

#[test]
fn competence_labels_match_an_independent_recount() {
    let tasks = house_mix(24, 700);
    let kb = kb_for(&tasks);
    let probe = competence(0.6, 5);
    let data = build_self_dataset(&tasks, &probe, Some(&kb), DatasetOptions::default()).unwrap();
    let mut want = [0usize; 3];
    for t in &tasks {
        for (h, gold) in gold_steps(t).unwrap() {
            let step = StepInput::new(&h);
            let a = probe.predict(&step).unwrap();
            let label = if a == gold {
                Situation::Fast
            } else if probe.rethink(&step, &a).unwrap().1 == gold {
                Situation::Slow
            } else {
                Situation::Knowledgeable
            };
            want[label as usize] += 1;
        }
    }
    assert_eq!(label_counts(&data), want);
    assert_eq!(data.len(), total_gold_steps(&tasks));
    assert!(want.iter().all(|n| *n > 0), "{want:?}");
    // every final action is gold
    for s in &data {
        assert_eq!(&s.output.final_action, s.gold());
    }
}

#[test]
fn mix_arithmetic_on_datasets() {
    let tasks = house_mix(12, 50);
    let kb = kb_for(&tasks);
    let probe = competence(0.5, 1);
    let n = total_gold_steps(&tasks);
    let full = build_self_dataset(&tasks, &probe, Some(&kb), DatasetOptions::default()).unwrap();
    for p in [0.0, 0.25, 0.4, 1.0] {
        let abs = DatasetOptions { mix: Some(Mix::Absolute(p)), ..Default::default() };
        let rel = DatasetOptions { mix: Some(Mix::Relative(p)), ..Default::default() };
        let a = build_self_dataset(&tasks, &probe, Some(&kb), abs).unwrap();
        let r = build_self_dataset(&tasks, &probe, Some(&kb), rel).unwrap();
        let k = (p * n as f64).ceil() as usize;
        assert_eq!(a.len(), k);
        assert_eq!(r.len(), n);
        let unchanged = r.iter().zip(&full).filter(|(x, y)| x.output == y.output).count();
        let converted_fast = full.iter().filter(|s| s.label() == Situation::Fast).count();
        assert!(unchanged >= k && unchanged <= k + converted_fast);
        assert!(r.iter().zip(&full).all(|(x, y)| x.output.final_action == y.output.final_action));
    }
    assert!("relative:1.5".parse::<Mix>().is_err());
    assert_eq!("absolute:0.4".parse::<Mix>().unwrap(), Mix::Absolute(0.4));
}

#[test]
fn no_all_is_the_gold_dataset() {
    let tasks = house_mix(12, 90);
    let opts = DatasetOptions { mode: DataMode::NoAll, ..Default::default() };
    let data = build_self_dataset(&tasks, &competence(0.3, 2), None, opts).unwrap();
    let gold: Vec<Action> = tasks.iter().flat_map(|t| gold_steps(t).unwrap().into_iter().map(|x| x.1)).collect();
    assert_eq!(data.len(), gold.len());
    for (s, g) in data.iter().zip(&gold) {
        assert_eq!(s.output, StructuredOutput::fast(g.clone()));
    }
}

#[test]
fn full_know_is_all_knowledge() {
    let tasks = house_mix(12, 90);
    let kb = kb_for(&tasks);
    let opts = DatasetOptions { mode: DataMode::FullKnow, ..Default::default() };
    let data = build_self_dataset(&tasks, &competence(0.9, 2), Some(&kb), opts).unwrap();
    assert!(data.iter().all(|s| s.label() == Situation::Knowledgeable));
    let no_base = build_self_dataset(&tasks, &competence(0.9, 2), None, opts);
    assert!(no_base.is_err());
}

#[test]
fn ablation_modes_drop_their_label() {
    let tasks = house_mix(12, 20);
    let kb = kb_for(&tasks);
    let probe = competence(0.4, 3);
    let count = |mode| {
        let opts = DatasetOptions { mode, ..Default::default() };
        label_counts(&build_self_dataset(&tasks, &probe, Some(&kb), opts).unwrap())
    };
    let full = count(DataMode::Full);
    let noret = count(DataMode::NoRet);
    let noknow = count(DataMode::NoKnow);
    assert_eq!(noret, [full[0], 0, full[1] + full[2]]);
    assert_eq!(noknow, [full[0], full[1] + full[2], 0]);
}

/// Gold everywhere except one step, where it commits a wrong action.
struct GoldExcept {
    task: String,
    step: usize,
}

impl Agent for GoldExcept {
    fn predict(&self, s: &StepInput) -> Result<Action, PolicyError> {
        let gold = s.gold_action().ok_or(PolicyError::NoGold)?;
        if s.history.task.id == self.task && s.history.len() == self.step {
            return Ok(s.space.entries.iter().map(|(_, a)| a).find(|a| *a != gold).unwrap().clone());
        }
        Ok(gold.clone())
    }

    fn rethink(&self, s: &StepInput, _: &Action) -> Result<(String, Action), PolicyError> {
        Ok(("again".into(), s.gold_action().ok_or(PolicyError::NoGold)?.clone()))
    }

    fn decode(&self, s: &StepInput, _: DecodeMode, _: &mut dyn KnowledgeProvider) -> Result<StructuredOutput, PolicyError> {
        Ok(StructuredOutput::fast(self.predict(s)?))
    }
}

#[test]
fn negatives_are_exactly_the_reference_mistakes() {
    let tasks = house_mix(6, 10);
    let kb = kb_for(&tasks);
    let data = build_self_dataset(&tasks, &competence(0.5, 4), Some(&kb), DatasetOptions::default()).unwrap();
    let gold = Scripted::new(ScriptedKind::AlwaysGold, 0).unwrap();
    assert!(mine_negatives(&data, &gold, Some(&kb), DecodeMode::Free).unwrap().is_empty());
    let target = &data[7];
    let one = GoldExcept { task: target.task_id.clone(), step: target.step };
    let pairs = mine_negatives(&data, &one, Some(&kb), DecodeMode::Free).unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].id(), target.id());
    assert_eq!(pairs[0].chosen, target.output);
    assert_ne!(&pairs[0].rejected.final_action, target.gold());
}

#[test]
fn records_roundtrip_through_jsonl() {
    let tasks = house_mix(6, 33);
    let kb = kb_for(&tasks);
    let data = build_self_dataset(&tasks, &competence(0.5, 8), Some(&kb), DatasetOptions::default()).unwrap();
    let recs: Vec<SelfRecord> = data.iter().map(SelfRecord::from).collect();
    let mut buf = Vec::new();
    knowself::minienv::write_jsonl(&mut buf, &recs).unwrap();
    let back: Vec<SelfRecord> = knowself::minienv::read_jsonl(&buf[..]).unwrap();
    assert_eq!(samples_from_records(&back, &tasks).unwrap(), data);

    let one = GoldExcept { task: data[3].task_id.clone(), step: data[3].step };
    let pairs = mine_negatives(&data, &one, Some(&kb), DecodeMode::Free).unwrap();
    let prs: Vec<PairRecord> = pairs.iter().map(PairRecord::from).collect();
    assert_eq!(pairs_from_records(&prs, &tasks).unwrap(), pairs);

    // a tampered digest is caught
    let mut bad = recs[2].clone();
    bad.history_digest = "deadbeef".into();
    assert!(samples_from_records(&[bad], &tasks).is_err());
}
