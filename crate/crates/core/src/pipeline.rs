//! Pipeline configuration and the experiments built from it.
//!
//! Task seeds are derived from the world seed: training task `i` uses
//! `world * 1_000_000 + i` and evaluation task `i` uses
//! `world * 1_000_000 + 500_000 + i`, so the two sets never share a seed.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::knowledge::{consolidate, default_cap, default_per_type, generate_rules, mine_pairs, KnowledgeBase, KnowledgeError};
use crate::labeler::{build_self_dataset, mine_negatives, DataMode, DatasetOptions, LabelError, Mix, PairSample, SelfAwareSample};
use crate::minienv::{generate_task, EnvError, EnvKind, Task, TaskType};
use crate::policy::{DecodeMode, Layout, LinearPolicy, Params, PolicyError, Scripted, ScriptedKind};
use crate::runtime::{evaluate, generalization_eval, EpisodeResult, Report, RuntimeError, Split};
use crate::trainer::{encode_pairs, encode_samples, train_stage1, train_stage2, TrainConfig, TrainError, Trained};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub world: u64,
    pub probe: u64,
    pub train: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    pub train_tasks: usize,
    pub eval_tasks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbConfig {
    pub cap: usize,
    pub per_type: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub env: EnvKind,
    pub seeds: Seeds,
    pub sizes: Sizes,
    /// Probe competence per task type; missing types use 0.5.
    pub competence: BTreeMap<TaskType, f64>,
    pub kb: KbConfig,
    pub train: TrainConfig,
    pub data_mode: DataMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix: Option<String>,
    pub eval_modes: Vec<String>,
    /// Restrict training tasks to some types (and evaluation to the rest).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

impl PipelineConfig {
    /// Reference MiniHouse configuration.
    pub fn house() -> Self {
        Self {
            env: EnvKind::MiniHouse,
            seeds: Seeds { world: 7, probe: 11, train: 13 },
            sizes: Sizes { train_tasks: 300, eval_tasks: 60 },
            competence: BTreeMap::from([
                (TaskType::Put, 0.8),
                (TaskType::Clean, 0.4),
                (TaskType::Heat, 0.4),
                (TaskType::Cool, 0.4),
                (TaskType::Examine, 0.7),
                (TaskType::PutTwo, 0.4),
            ]),
            kb: KbConfig { cap: default_cap(EnvKind::MiniHouse), per_type: default_per_type(EnvKind::MiniHouse) },
            train: TrainConfig { seed: 13, ..TrainConfig::default() },
            data_mode: DataMode::Full,
            mix: None,
            eval_modes: vec!["free".into()],
            split: None,
        }
    }

    pub fn shop() -> Self {
        Self {
            env: EnvKind::MiniShop,
            competence: BTreeMap::from([(TaskType::Purchase, 0.5)]),
            kb: KbConfig { cap: default_cap(EnvKind::MiniShop), per_type: default_per_type(EnvKind::MiniShop) },
            ..Self::house()
        }
    }

    pub fn from_toml(s: &str) -> Result<Self, PipelineError> {
        let c: Self = toml::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Stable hash of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(&Sha256::digest(self.to_toml().as_bytes())[..12])
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.sizes.train_tasks == 0 || self.sizes.eval_tasks == 0 {
            return bad("task counts must be positive".into());
        }
        if self.sizes.train_tasks >= 500_000 || self.sizes.eval_tasks >= 500_000 {
            return bad("task counts must stay below 500000".into());
        }
        if self.kb.cap == 0 {
            return bad("kb cap must be positive".into());
        }
        if let Some((t, _)) = self.competence.iter().find(|(t, _)| t.env_kind() != self.env) {
            return bad(format!("competence for {t}, which is not a {} task", self.env));
        }
        Scripted::new(ScriptedKind::Competence(self.competence.clone()), 0)?;
        self.train.validate()?;
        self.mix()?;
        self.decode_modes()?;
        self.split()?;
        Ok(())
    }

    pub fn mix(&self) -> Result<Option<Mix>, PipelineError> {
        Ok(self.mix.as_deref().map(str::parse).transpose()?)
    }

    pub fn decode_modes(&self) -> Result<Vec<DecodeMode>, PipelineError> {
        Ok(self.eval_modes.iter().map(|m| m.parse()).collect::<Result<_, _>>()?)
    }

    pub fn split(&self) -> Result<Option<Split>, PipelineError> {
        Ok(self.split.as_deref().map(Split::parse).transpose()?)
    }

    pub fn probe(&self) -> Scripted {
        Scripted::new(ScriptedKind::Competence(self.competence.clone()), self.seeds.probe).expect("validated")
    }

    /// Untrained agent used to mine knowledge pairs; an independent coin stream.
    pub fn prior(&self) -> Scripted {
        Scripted::new(ScriptedKind::Competence(self.competence.clone()), self.seeds.probe ^ 0x9e37_79b9)
            .expect("validated")
    }

    fn types(&self, which: Option<&[TaskType]>) -> Vec<TaskType> {
        which.map(<[TaskType]>::to_vec).unwrap_or_else(|| self.env.task_types().to_vec())
    }

    fn tasks(&self, types: &[TaskType], n: usize, offset: u64) -> Result<Vec<Arc<Task>>, PipelineError> {
        let base = self.seeds.world.wrapping_mul(1_000_000).wrapping_add(offset);
        (0..n)
            .map(|i| {
                let t = types[i % types.len()];
                Ok(Arc::new(generate_task(self.env, t, base.wrapping_add(i as u64))?))
            })
            .collect()
    }

    pub fn train_tasks(&self) -> Result<Vec<Arc<Task>>, PipelineError> {
        let split = self.split()?;
        self.tasks(&self.types(split.as_ref().map(|s| s.train.as_slice())), self.sizes.train_tasks, 0)
    }

    pub fn eval_tasks(&self) -> Result<Vec<Arc<Task>>, PipelineError> {
        let split = self.split()?;
        self.tasks(&self.types(split.as_ref().map(|s| s.test.as_slice())), self.sizes.eval_tasks, 500_000)
    }
}

/// Mine pairs with the prior agent, write rules, consolidate.
pub fn build_kb(cfg: &PipelineConfig, tasks: &[Arc<Task>]) -> Result<KnowledgeBase, PipelineError> {
    let pairs = mine_pairs(tasks, &cfg.prior(), cfg.kb.per_type)?;
    Ok(consolidate(&KnowledgeBase::new(cfg.kb.cap, generate_rules(&pairs))))
}

pub fn label(
    cfg: &PipelineConfig,
    tasks: &[Arc<Task>],
    kb: &KnowledgeBase,
    mode: DataMode,
) -> Result<Vec<SelfAwareSample>, PipelineError> {
    let options = DatasetOptions { mode, mix: cfg.mix()?, seed: cfg.seeds.train };
    Ok(build_self_dataset(tasks, &cfg.probe(), Some(kb), options)?)
}

pub fn sft(cfg: &PipelineConfig, data: &[SelfAwareSample], mode: DataMode) -> Result<Trained, PipelineError> {
    let enc = encode_samples(data, mode.decode_mode())?;
    Ok(train_stage1(&cfg.train, Layout::for_env(cfg.env), &enc)?)
}

pub fn pairs(
    data: &[SelfAwareSample],
    reference: &Params,
    kb: &KnowledgeBase,
    mode: DataMode,
) -> Result<Vec<PairSample>, PipelineError> {
    Ok(mine_negatives(data, &LinearPolicy::new(reference.clone()), Some(kb), mode.decode_mode())?)
}

pub fn rpo(
    cfg: &PipelineConfig,
    reference: &Params,
    pairs: &[PairSample],
    mode: DataMode,
    alpha: f64,
) -> Result<Trained, PipelineError> {
    let enc = encode_pairs(pairs, mode.decode_mode())?;
    let train = TrainConfig { alpha, ..cfg.train };
    Ok(train_stage2(&train, reference, &enc)?)
}

/// Shared inputs of every variant.
pub struct World {
    pub train: Vec<Arc<Task>>,
    pub eval: Vec<Arc<Task>>,
    pub kb: KnowledgeBase,
}

impl World {
    pub fn build(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let train = cfg.train_tasks()?;
        let eval = cfg.eval_tasks()?;
        let kb = build_kb(cfg, &train)?;
        Ok(Self { train, eval, kb })
    }
}

/// Everything one trained variant produced.
pub struct VariantRun {
    pub mode: DataMode,
    pub data: Vec<SelfAwareSample>,
    pub reference: Trained,
    pub pairs: Vec<PairSample>,
    /// Stage-2 result; `None` when the variant stops after stage 1.
    pub policy: Option<Trained>,
}

impl VariantRun {
    pub fn final_params(&self) -> &Params {
        self.policy.as_ref().map(|t| &t.params).unwrap_or(&self.reference.params)
    }
}

/// Train one variant. `with_stage2 = false` stops after supervised training.
pub fn train_variant(
    cfg: &PipelineConfig,
    world: &World,
    mode: DataMode,
    with_stage2: bool,
) -> Result<VariantRun, PipelineError> {
    let data = label(cfg, &world.train, &world.kb, mode)?;
    let reference = sft(cfg, &data, mode)?;
    let (pairs, policy) = if with_stage2 {
        let p = pairs(&data, &reference.params, &world.kb, mode)?;
        let t = rpo(cfg, &reference.params, &p, mode, cfg.train.alpha)?;
        (p, Some(t))
    } else {
        (Vec::new(), None)
    };
    Ok(VariantRun { mode, data, reference, pairs, policy })
}

pub fn eval_params(
    cfg: &PipelineConfig,
    world: &World,
    params: &Params,
    mode: DecodeMode,
) -> Result<(Report, Vec<EpisodeResult>), PipelineError> {
    let policy = LinearPolicy::new(params.clone());
    Ok(match cfg.split()? {
        Some(split) => generalization_eval(&policy, Some(&world.kb), mode, &split, &world.train, &world.eval)?,
        None => evaluate(&policy, &world.eval, Some(&world.kb), mode)?,
    })
}

/// Ablation rows in display order.
pub const ABLATIONS: [(&str, DataMode); 5] = [
    ("knowself", DataMode::Full),
    ("w/o ret", DataMode::NoRet),
    ("w/o know", DataMode::NoKnow),
    ("w/o all", DataMode::NoAll),
    ("w/ full know", DataMode::FullKnow),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub data_mode: DataMode,
    pub report: Report,
}

/// The gold-only row stops after supervised training; the others run both stages.
pub fn ablate(cfg: &PipelineConfig, world: &World) -> Result<Vec<AblationRow>, PipelineError> {
    ABLATIONS
        .iter()
        .map(|&(name, mode)| {
            let run = train_variant(cfg, world, mode, mode != DataMode::NoAll)?;
            let (report, _) = eval_params(cfg, world, run.final_params(), mode.decode_mode())?;
            Ok(AblationRow { name: name.to_string(), data_mode: mode, report })
        })
        .collect()
}

/// Text table with one column per task type plus All, Know% and Refl%.
pub fn render_table(env: EnvKind, rows: &[(String, Report)]) -> String {
    let types = env.task_types();
    let mut head = vec![format!("{:<14}", "method")];
    head.extend(types.iter().map(|t| format!("{:>8}", t.to_string())));
    head.push(format!("{:>8}", "All"));
    head.push(format!("{:>8}", "Know%"));
    head.push(format!("{:>8}", "Refl%"));
    let mut out = head.join(" ");
    out.push('\n');
    for (name, r) in rows {
        let mut line = vec![format!("{name:<14}")];
        for t in types {
            line.push(match r.per_type.get(t) {
                Some(v) => format!("{:>8.2}", 100.0 * v),
                None => format!("{:>8}", "-"),
            });
        }
        line.push(format!("{:>8.2}", 100.0 * r.all));
        line.push(format!("{:>8}", format!("{:.2}%", r.know_pct)));
        line.push(format!("{:>8}", format!("{:.2}%", r.refl_pct)));
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_toml_roundtrip() {
        let c = PipelineConfig::house();
        let back = PipelineConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn train_and_eval_seeds_disjoint() {
        let mut c = PipelineConfig::house();
        c.sizes = Sizes { train_tasks: 12, eval_tasks: 6 };
        let a: Vec<u64> = c.train_tasks().unwrap().iter().map(|t| t.seed).collect();
        let b: Vec<u64> = c.eval_tasks().unwrap().iter().map(|t| t.seed).collect();
        assert!(a.iter().all(|s| !b.contains(s)));
    }

    #[test]
    fn rejects_foreign_competence() {
        let mut c = PipelineConfig::house();
        c.competence.insert(TaskType::Purchase, 0.5);
        assert!(c.validate().is_err());
    }
}
