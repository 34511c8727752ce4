//! Losses with exact gradients over pre-encoded decision sequences.
//!
//! ```text
//! sft  = -mean log pi(y|h)
//! dpo  = -mean log sigmoid(m),  m = beta [(lp(y) - lp_ref(y)) - (lp(y^p) - lp_ref(y^p))]
//! nll  = -mean lp(y) / |y|
//! rpo  = dpo + alpha nll
//! ```

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::policy::grammar::Decision;
use crate::policy::linear::{add_logprob_grad, sequence_logprob};
use crate::policy::Params;

/// One target sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub id: String,
    pub decisions: Vec<Decision>,
}

/// Chosen and rejected sequences for the same history.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair {
    pub id: String,
    pub chosen: Vec<Decision>,
    pub rejected: Vec<Decision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub sft: f64,
    pub dpo: f64,
    pub nll: f64,
    pub rpo: f64,
    pub grad_norm: f64,
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Check that every decision indexes inside `p`.
pub fn check_fits(p: &Params, id: &str, ds: &[Decision]) -> Result<(), TrainError> {
    for d in ds {
        let m = p.slot(d.slot);
        let row_ok = d.allowed.iter().all(|r| *r < m.rows) && d.allowed.contains(&d.chosen);
        if !row_ok || d.features.iter().any(|f| *f >= m.cols) {
            return Err(TrainError::Shape(format!("sample {id} does not fit the params ({:?} slot)", d.slot)));
        }
    }
    Ok(())
}

fn finite(id: &str, v: f64) -> Result<f64, TrainError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(TrainError::NonFinite(id.to_string()))
    }
}

fn empty<T>(batch: &[T]) -> Result<(), TrainError> {
    if batch.is_empty() {
        Err(TrainError::EmptyBatch)
    } else {
        Ok(())
    }
}

pub fn sft_loss(p: &Params, batch: &[Encoded]) -> Result<(f64, Params), TrainError> {
    empty(batch)?;
    let n = batch.len() as f64;
    let mut g = Params::zeros(p.layout);
    let mut loss = 0.0;
    for s in batch {
        check_fits(p, &s.id, &s.decisions)?;
        loss -= finite(&s.id, sequence_logprob(p, &s.decisions))? / n;
        add_logprob_grad(p, &s.decisions, -1.0 / n, &mut g);
    }
    if !g.is_finite() {
        return Err(TrainError::NonFinite(batch[0].id.clone()));
    }
    Ok((loss, g))
}

/// Per-pair margin `m`.
pub fn margin(p: &Params, reference: &Params, pair: &EncodedPair, beta: f64) -> f64 {
    let dw = sequence_logprob(p, &pair.chosen) - sequence_logprob(reference, &pair.chosen);
    let dl = sequence_logprob(p, &pair.rejected) - sequence_logprob(reference, &pair.rejected);
    beta * (dw - dl)
}

pub fn dpo_loss(p: &Params, reference: &Params, batch: &[EncodedPair], beta: f64) -> Result<(f64, Params), TrainError> {
    p.check_shape(reference).map_err(|e| TrainError::Shape(e.to_string()))?;
    empty(batch)?;
    let n = batch.len() as f64;
    let mut g = Params::zeros(p.layout);
    let mut loss = 0.0;
    for s in batch {
        check_fits(p, &s.id, &s.chosen)?;
        check_fits(p, &s.id, &s.rejected)?;
        let m = finite(&s.id, margin(p, reference, s, beta))?;
        loss += softplus(-m) / n;
        // d softplus(-m)/dm = -sigmoid(-m)
        let c = -sigmoid(-m) * beta / n;
        add_logprob_grad(p, &s.chosen, c, &mut g);
        add_logprob_grad(p, &s.rejected, -c, &mut g);
    }
    if !g.is_finite() {
        return Err(TrainError::NonFinite(batch[0].id.clone()));
    }
    Ok((loss, g))
}

pub fn nll_loss(p: &Params, batch: &[EncodedPair]) -> Result<(f64, Params), TrainError> {
    empty(batch)?;
    let n = batch.len() as f64;
    let mut g = Params::zeros(p.layout);
    let mut loss = 0.0;
    for s in batch {
        check_fits(p, &s.id, &s.chosen)?;
        let len = s.chosen.len() as f64;
        loss -= finite(&s.id, sequence_logprob(p, &s.chosen))? / len / n;
        add_logprob_grad(p, &s.chosen, -1.0 / len / n, &mut g);
    }
    Ok((loss, g))
}

/// RPO loss and gradient. The report's `sft` field is left at zero.
pub fn rpo_loss(
    p: &Params,
    reference: &Params,
    batch: &[EncodedPair],
    beta: f64,
    alpha: f64,
) -> Result<(LossReport, Params), TrainError> {
    let (dpo, mut g) = dpo_loss(p, reference, batch, beta)?;
    let (nll, gn) = nll_loss(p, batch)?;
    g.axpy(alpha, &gn);
    let report = LossReport { sft: 0.0, dpo, nll, rpo: dpo + alpha * nll, grad_norm: g.norm() };
    Ok((report, g))
}
