//! Two-stage training of the linear policy.
//!
//! Stage 1 fits the self-aware targets by supervised learning and yields the
//! reference snapshot. Stage 2 starts from that snapshot and minimizes the
//! RPO loss on chosen/rejected pairs against the frozen reference.

pub mod losses;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeler::{PairSample, SelfAwareSample};
use crate::minienv::seeded_rng;
use crate::policy::linear::choices_of;
use crate::policy::{DecodeMode, Layout, Params, PolicyError, StepInput, StructuredOutput};
use crate::minienv::History;

pub use losses::{dpo_loss, margin, nll_loss, rpo_loss, sft_loss, Encoded, EncodedPair, LossReport};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite value on sample {0}")]
    NonFinite(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("stage {stage} diverged at epoch {epoch} step {step}; last finite loss {last_loss}")]
    Diverged { stage: u8, epoch: usize, step: usize, last_loss: f64 },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("no training data")]
    NoData,
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub beta: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage1: StageConfig { lr: 0.05, batch: 8, epochs: 3 },
            stage2: StageConfig { lr: 0.005, batch: 3, epochs: 1 },
            beta: 0.5,
            alpha: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be non-negative");
        }
        for (name, s) in [("stage1", self.stage1), ("stage2", self.stage2)] {
            if s.epochs == 0 || s.batch == 0 {
                return Err(TrainError::Config(format!("{name}: epochs and batch must be at least 1")));
            }
            if !(s.lr > 0.0 && s.lr.is_finite()) {
                return Err(TrainError::Config(format!("{name}: lr must be positive")));
            }
        }
        Ok(())
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub stage: u8,
    pub epoch: usize,
    pub step: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sft: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dpo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nll: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rpo: Option<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub params: Params,
    pub metrics: Vec<MetricRecord>,
}

impl Trained {
    /// Mean logged loss per epoch (sft for stage 1, rpo for stage 2).
    pub fn epoch_means(&self) -> Vec<f64> {
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for m in &self.metrics {
            if sums.len() <= m.epoch {
                sums.resize(m.epoch + 1, (0.0, 0));
            }
            let v = m.sft.or(m.rpo).unwrap_or(0.0);
            sums[m.epoch].0 += v;
            sums[m.epoch].1 += 1;
        }
        sums.into_iter().map(|(s, n)| s / n.max(1) as f64).collect()
    }
}

/// Decisions of `y` for `history` under `mode`.
pub fn encode(history: &History, y: &StructuredOutput, mode: DecodeMode) -> Result<Vec<crate::policy::Decision>, PolicyError> {
    let step = StepInput::new(history);
    step.context().encode(&choices_of(&step, y)?, mode)
}

pub fn encode_samples(data: &[SelfAwareSample], mode: DecodeMode) -> Result<Vec<Encoded>, TrainError> {
    data.iter()
        .map(|s| Ok(Encoded { id: s.id(), decisions: encode(&s.history, &s.output, mode)? }))
        .collect()
}

pub fn encode_pairs(data: &[PairSample], mode: DecodeMode) -> Result<Vec<EncodedPair>, TrainError> {
    data.iter()
        .map(|p| {
            Ok(EncodedPair {
                id: p.id(),
                chosen: encode(&p.history, &p.chosen, mode)?,
                rejected: encode(&p.history, &p.rejected, mode)?,
            })
        })
        .collect()
}

fn batches(n: usize, batch: usize, seed: u64, label: &str) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(seed, label));
    idx.chunks(batch).map(<[usize]>::to_vec).collect()
}

/// Supervised stage; starts from zero weights and returns the reference snapshot.
pub fn train_stage1(cfg: &TrainConfig, layout: Layout, data: &[Encoded]) -> Result<Trained, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::NoData);
    }
    let mut p = Params::zeros(layout);
    let mut metrics = Vec::new();
    let mut last = f64::NAN;
    let mut step = 0;
    for epoch in 0..cfg.stage1.epochs {
        for b in batches(data.len(), cfg.stage1.batch, cfg.seed, &format!("stage1/{epoch}")) {
            let batch: Vec<Encoded> = b.iter().map(|&i| data[i].clone()).collect();
            let diverged = || TrainError::Diverged { stage: 1, epoch, step, last_loss: last };
            let (loss, g) = sft_loss(&p, &batch).map_err(|e| match e {
                TrainError::NonFinite(_) => diverged(),
                e => e,
            })?;
            p.axpy(-cfg.stage1.lr, &g);
            if !p.is_finite() {
                return Err(diverged());
            }
            last = loss;
            metrics.push(MetricRecord {
                stage: 1,
                epoch,
                step,
                sft: Some(loss),
                dpo: None,
                nll: None,
                rpo: None,
                grad_norm: g.norm(),
            });
            step += 1;
        }
    }
    p.tag = Some("reference".into());
    Ok(Trained { params: p, metrics })
}

/// Preference stage against the frozen `reference`. An empty pair set
/// returns the reference unchanged.
pub fn train_stage2(cfg: &TrainConfig, reference: &Params, data: &[EncodedPair]) -> Result<Trained, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        log::warn!("no preference pairs; stage 2 is the identity");
        return Ok(Trained { params: reference.clone(), metrics: Vec::new() });
    }
    let mut p = reference.clone();
    let mut metrics = Vec::new();
    let mut last = f64::NAN;
    let mut step = 0;
    for epoch in 0..cfg.stage2.epochs {
        for b in batches(data.len(), cfg.stage2.batch, cfg.seed, &format!("stage2/{epoch}")) {
            let batch: Vec<EncodedPair> = b.iter().map(|&i| data[i].clone()).collect();
            let diverged = || TrainError::Diverged { stage: 2, epoch, step, last_loss: last };
            let (r, g) = rpo_loss(&p, reference, &batch, cfg.beta, cfg.alpha).map_err(|e| match e {
                TrainError::NonFinite(_) => diverged(),
                e => e,
            })?;
            p.axpy(-cfg.stage2.lr, &g);
            if !p.is_finite() {
                return Err(diverged());
            }
            last = r.rpo;
            metrics.push(MetricRecord {
                stage: 2,
                epoch,
                step,
                sft: None,
                dpo: Some(r.dpo),
                nll: Some(r.nll),
                rpo: Some(r.rpo),
                grad_norm: r.grad_norm,
            });
            step += 1;
        }
    }
    p.tag = Some(if cfg.alpha == 0.0 { "dpo".into() } else { "rpo".into() });
    Ok(Trained { params: p, metrics })
}
