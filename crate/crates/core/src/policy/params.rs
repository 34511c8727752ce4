//! Per-slot weight matrices and their bit-exact JSON form.
//!
//! Each `f64` is stored as the 16 hex digits of its IEEE-754 bit pattern
//! (big-endian, lower case), so save/load never rounds.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grammar::{Layout, Slot};
use super::PolicyError;

pub const PARAMS_VERSION: &str = "knowself-params/1";

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    /// `W[r] . x` for a binary sparse `x`.
    #[inline]
    pub fn row_dot(&self, r: usize, features: &[usize]) -> f64 {
        let row = &self.data[r * self.cols..(r + 1) * self.cols];
        features.iter().map(|&i| row[i]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub layout: Layout,
    /// Indexed by [`Slot::index`].
    pub slots: [Matrix; 3],
    /// Free-form provenance tag, e.g. `reference` for a stage-1 snapshot.
    pub tag: Option<String>,
}

impl Params {
    pub fn zeros(layout: Layout) -> Self {
        let m = |s: Slot| Matrix::zeros(layout.rows(s), layout.dim());
        Self { layout, slots: [m(Slot::Action), m(Slot::Cont), m(Slot::Template)], tag: None }
    }

    /// Entries drawn uniformly from `[-scale, scale]`.
    pub fn random(layout: Layout, rng: &mut impl Rng, scale: f64) -> Self {
        let mut p = Self::zeros(layout);
        for m in &mut p.slots {
            for x in &mut m.data {
                *x = rng.gen_range(-scale..=scale);
            }
        }
        p
    }

    pub fn slot(&self, s: Slot) -> &Matrix {
        &self.slots[s.index()]
    }

    pub fn slot_mut(&mut self, s: Slot) -> &mut Matrix {
        &mut self.slots[s.index()]
    }

    pub fn same_shape(&self, other: &Params) -> bool {
        self.layout == other.layout
    }

    pub fn check_shape(&self, other: &Params) -> Result<(), PolicyError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(PolicyError::Shape(format!("{:?} vs {:?}", self.layout, other.layout)))
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.slots.iter().flat_map(|m| m.data.iter())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.slots.iter_mut().flat_map(|m| m.data.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.slots.iter().map(|m| m.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Params) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in self.values_mut() {
            *a *= alpha;
        }
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|x| x.is_finite())
    }

    pub fn to_json(&self) -> String {
        let doc = ParamsDoc {
            version: PARAMS_VERSION.to_string(),
            grammar_hash: self.layout.grammar_hash(),
            base: self.layout.base,
            n_actions: self.layout.n_actions,
            tag: self.tag.clone(),
            slots: Slot::ALL
                .iter()
                .map(|s| {
                    let m = self.slot(*s);
                    SlotDoc {
                        name: s.name().to_string(),
                        rows: m.rows,
                        cols: m.cols,
                        data: m.data.iter().map(|x| format!("{:016x}", x.to_bits())).collect(),
                    }
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("params serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, PolicyError> {
        let bad = |m: String| PolicyError::Format(m);
        let doc: ParamsDoc = serde_json::from_str(s).map_err(|e| bad(e.to_string()))?;
        if doc.version != PARAMS_VERSION {
            return Err(bad(format!("unsupported version {}", doc.version)));
        }
        let layout = Layout { base: doc.base, n_actions: doc.n_actions };
        if doc.grammar_hash != layout.grammar_hash() {
            return Err(bad(format!("grammar hash {} does not match this build", doc.grammar_hash)));
        }
        let mut p = Params::zeros(layout);
        p.tag = doc.tag;
        if doc.slots.len() != 3 {
            return Err(bad(format!("expected 3 slots, found {}", doc.slots.len())));
        }
        for (s, d) in Slot::ALL.iter().zip(doc.slots) {
            let m = p.slot_mut(*s);
            if d.name != s.name() || d.rows != m.rows || d.cols != m.cols || d.data.len() != m.data.len() {
                return Err(bad(format!("slot {} has the wrong shape", d.name)));
            }
            for (x, h) in m.data.iter_mut().zip(&d.data) {
                let bits = u64::from_str_radix(h, 16).map_err(|_| bad(format!("bad float `{h}`")))?;
                *x = f64::from_bits(bits);
            }
        }
        if !p.is_finite() {
            return Err(bad("non-finite entry".into()));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsDoc {
    version: String,
    grammar_hash: String,
    base: usize,
    n_actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<String>,
    slots: Vec<SlotDoc>,
}

#[derive(Serialize, Deserialize)]
struct SlotDoc {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<String>,
}
