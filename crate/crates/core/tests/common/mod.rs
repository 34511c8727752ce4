//! Generators and small agents shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use knowself::minienv::view::{gold_steps, ActionKind, HoldingClass, Phase, StateKey};
use knowself::minienv::{generate_task, Action, EnvKind, Task, TaskType, Verb};
use knowself::knowledge::rules::{error_rule, success_rule};
use knowself::policy::grammar::{Choices, Decision, DecisionContext, N_TEMPLATES};
use knowself::policy::templates::instantiate;
use knowself::policy::{
    Agent, DecodeMode, KnowledgeProvider, KnowledgeRef, Layout, Params, PolicyError, Reflection, Slot, StepInput,
    StructuredOutput,
};
use knowself::trainer::{Encoded, EncodedPair};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tasks(t: TaskType, seeds: std::ops::Range<u64>) -> Vec<Arc<Task>> {
    seeds.map(|s| Arc::new(generate_task(t.env_kind(), t, s).unwrap())).collect()
}

/// Tasks of every house type, round robin.
pub fn house_mix(n: usize, offset: u64) -> Vec<Arc<Task>> {
    (0..n)
        .map(|i| {
            let t = TaskType::HOUSE[i % 6];
            Arc::new(generate_task(EnvKind::MiniHouse, t, offset + i as u64).unwrap())
        })
        .collect()
}

pub fn total_gold_steps(ts: &[Arc<Task>]) -> usize {
    ts.iter().map(|t| gold_steps(t).unwrap().len()).sum()
}

const OBJECTS: [&str; 6] = ["apple", "mug", "spoon", "cd", "pen", "lettuce"];
const PLACES: [&str; 6] = ["drawer", "shelf", "countertop", "fridge", "sinkbasin", "desk"];
const WORDS: [&str; 6] = ["red", "large", "canvas backpack", "item 3", "blue mug", "small"];

fn name(rng: &mut ChaCha8Rng, pool: &[&str]) -> String {
    format!("{} {}", pool.choose(rng).unwrap(), rng.gen_range(1..5))
}

pub fn random_action(rng: &mut ChaCha8Rng) -> Action {
    let verbs = [
        Verb::GoTo,
        Verb::Open,
        Verb::Close,
        Verb::Take,
        Verb::Put,
        Verb::Use,
        Verb::Clean,
        Verb::Heat,
        Verb::Cool,
        Verb::Click,
        Verb::Search,
        Verb::Buy,
    ];
    let v = *verbs.choose(rng).unwrap();
    let args = match v {
        Verb::Buy => vec![],
        Verb::Click | Verb::Search => vec![WORDS.choose(rng).unwrap().to_string()],
        Verb::GoTo | Verb::Open | Verb::Close => vec![name(rng, &PLACES)],
        Verb::Use => vec![name(rng, &["desklamp"])],
        _ => vec![name(rng, &OBJECTS), name(rng, &PLACES)],
    };
    Action::new(v, args)
}

pub fn random_rule(rng: &mut ChaCha8Rng) -> String {
    let t = *TaskType::HOUSE.choose(rng).unwrap();
    if rng.gen_bool(0.2) {
        return success_rule(t);
    }
    let phase = *[Phase::Seeking, Phase::Holding, Phase::AtTarget, Phase::PostProcess].choose(rng).unwrap();
    let holding = *[HoldingClass::None, HoldingClass::Goal, HoldingClass::Other].choose(rng).unwrap();
    let kinds = [
        ActionKind::TakeGoal,
        ActionKind::PutHere,
        ActionKind::UseTool,
        ActionKind::Open,
        ActionKind::GoToTool,
        ActionKind::GoToTarget,
        ActionKind::Explore,
    ];
    let win = *kinds.choose(rng).unwrap();
    let loss = if rng.gen_bool(0.7) { Some(*kinds.choose(rng).unwrap()) } else { None };
    error_rule(&StateKey { task_type: t, phase, holding }, win, loss)
}

/// Any valid output shape with random content.
pub fn random_output(rng: &mut ChaCha8Rng) -> StructuredOutput {
    match rng.gen_range(0..3) {
        0 => StructuredOutput::fast(random_action(rng)),
        1 => {
            let a = random_action(rng);
            let mut b = random_action(rng);
            while b == a {
                b = random_action(rng);
            }
            let t = rng.gen_range(0..N_TEMPLATES);
            StructuredOutput::slow(a.clone(), Reflection { template_id: t, text: instantiate(t, &a, &b) }, b)
        }
        _ => StructuredOutput::knowledgeable(KnowledgeRef { entry_id: None, text: random_rule(rng) }, random_action(rng)),
    }
}

pub fn random_layout(rng: &mut ChaCha8Rng) -> Layout {
    Layout { base: rng.gen_range(2..=20), n_actions: rng.gen_range(2..=8) }
}

pub fn random_context(rng: &mut ChaCha8Rng, l: Layout) -> DecisionContext {
    let mut base = vec![0];
    base.extend((1..l.base).filter(|_| rng.gen_bool(0.35)));
    let mut all: Vec<usize> = (0..l.n_actions).collect();
    all.shuffle(rng);
    let k = rng.gen_range(2..=l.n_actions);
    DecisionContext::new(l, base, all[..k].to_vec())
}

pub fn random_choices(rng: &mut ChaCha8Rng, ctx: &DecisionContext) -> Choices {
    let f = &ctx.feasible;
    let a = *f.choose(rng).unwrap();
    match rng.gen_range(0..3) {
        0 => Choices::Fast { action: a },
        1 => {
            let r = *ctx.revise_allowed(a).choose(rng).unwrap();
            Choices::Slow { first: a, template: rng.gen_range(0..N_TEMPLATES), revised: r }
        }
        _ => Choices::Know {
            advice: if rng.gen_bool(0.7) { Some(rng.gen_range(0..ctx.layout.n_actions)) } else { None },
            success: rng.gen_bool(0.3),
            action: a,
        },
    }
}

pub fn random_decisions(rng: &mut ChaCha8Rng, ctx: &DecisionContext) -> Vec<Decision> {
    ctx.encode(&random_choices(rng, ctx), DecodeMode::Free).unwrap()
}

pub fn random_batch(rng: &mut ChaCha8Rng, l: Layout, n: usize) -> Vec<Encoded> {
    (0..n)
        .map(|i| {
            let ctx = random_context(rng, l);
            Encoded { id: format!("s{i}"), decisions: random_decisions(rng, &ctx) }
        })
        .collect()
}

pub fn random_pairs(rng: &mut ChaCha8Rng, l: Layout, n: usize) -> Vec<EncodedPair> {
    (0..n)
        .map(|i| {
            let ctx = random_context(rng, l);
            EncodedPair {
                id: format!("p{i}"),
                chosen: random_decisions(rng, &ctx),
                rejected: random_decisions(rng, &ctx),
            }
        })
        .collect()
}

/// Relative error with the denominator floored at 1e-3.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Largest relative error between `grad` and central differences of `f`.
pub fn fd_max_rel_err(p: &Params, grad: &Params, h: f64, f: impl Fn(&Params) -> f64) -> f64 {
    let mut q = p.clone();
    let mut worst: f64 = 0.0;
    for s in Slot::ALL {
        for i in 0..p.slot(s).data.len() {
            let x = q.slot(s).data[i];
            q.slot_mut(s).data[i] = x + h;
            let up = f(&q);
            q.slot_mut(s).data[i] = x - h;
            let down = f(&q);
            q.slot_mut(s).data[i] = x;
            worst = worst.max(rel_err((up - down) / (2.0 * h), grad.slot(s).data[i]));
        }
    }
    worst
}

/// Gold every step; emits KNOW on the listed `(task id, step)` pairs.
pub struct KnowAt {
    pub at: BTreeSet<(String, usize)>,
}

impl Agent for KnowAt {
    fn predict(&self, step: &StepInput) -> Result<Action, PolicyError> {
        step.gold_action().cloned().ok_or(PolicyError::NoGold)
    }

    fn rethink(&self, step: &StepInput, _: &Action) -> Result<(String, Action), PolicyError> {
        Ok(("again".into(), self.predict(step)?))
    }

    fn decode(
        &self,
        step: &StepInput,
        mode: DecodeMode,
        provider: &mut dyn KnowledgeProvider,
    ) -> Result<StructuredOutput, PolicyError> {
        let gold = self.predict(step)?;
        let key = (step.history.task.id.clone(), step.history.len());
        if mode == DecodeMode::ForceKnow || (mode.allows_know() && self.at.contains(&key)) {
            return Ok(StructuredOutput::knowledgeable(provider.provide(step.history)?, gold));
        }
        Ok(StructuredOutput::fast(gold))
    }
}

/// Always emits a fixed wrong first action and reflects onto gold.
pub struct SlowGold;

impl Agent for SlowGold {
    fn predict(&self, step: &StepInput) -> Result<Action, PolicyError> {
        let gold = step.gold_action().ok_or(PolicyError::NoGold)?;
        Ok(step.space.entries.iter().map(|(_, a)| a).find(|a| *a != gold).cloned().unwrap())
    }

    fn rethink(&self, step: &StepInput, _: &Action) -> Result<(String, Action), PolicyError> {
        Ok(("reconsider".into(), step.gold_action().cloned().ok_or(PolicyError::NoGold)?))
    }

    fn decode(&self, step: &StepInput, _: DecodeMode, _: &mut dyn KnowledgeProvider) -> Result<StructuredOutput, PolicyError> {
        let a = self.predict(step)?;
        let (t, g) = self.rethink(step, &a)?;
        Ok(StructuredOutput::slow(a, Reflection { template_id: 7, text: t }, g))
    }
}
