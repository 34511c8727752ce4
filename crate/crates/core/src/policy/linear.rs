//! Linear-softmax policy over the decision grammar.
//!
//! `log pi(y | h) = sum_i [ W_slot(i)[d_i] . phi_i - logsumexp_{r in allowed_i} W_slot(i)[r] . phi_i ]`

use super::grammar::{Choices, Decision, DecisionContext, Slot, N_TEMPLATES, REFL};
use super::params::Params;
use super::templates::{instantiate, template_for};
use super::{
    Agent, DecodeMode, KnowledgeProvider, PolicyError, Reflection, Situation, StepInput, StructuredOutput,
};
use crate::knowledge::rules::read_signal;
use crate::minienv::Action;

fn logits(p: &Params, d_slot: Slot, features: &[usize], allowed: &[usize]) -> Vec<f64> {
    let m = p.slot(d_slot);
    allowed.iter().map(|&r| m.row_dot(r, features)).collect()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let mx = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    mx + xs.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// Log-probability of one decision.
pub fn decision_logprob(p: &Params, d: &Decision) -> f64 {
    let l = logits(p, d.slot, &d.features, &d.allowed);
    let k = d.allowed.iter().position(|r| *r == d.chosen).expect("chosen row is allowed");
    l[k] - log_sum_exp(&l)
}

/// Log-probability of a decision sequence.
pub fn sequence_logprob(p: &Params, ds: &[Decision]) -> f64 {
    ds.iter().map(|d| decision_logprob(p, d)).sum()
}

/// `g += scale * d/dW log pi(ds)`.
pub fn add_logprob_grad(p: &Params, ds: &[Decision], scale: f64, g: &mut Params) {
    for d in ds {
        let l = logits(p, d.slot, &d.features, &d.allowed);
        let lse = log_sum_exp(&l);
        let m = g.slot_mut(d.slot);
        for (k, &r) in d.allowed.iter().enumerate() {
            let coef = scale * (f64::from(u8::from(r == d.chosen)) - (l[k] - lse).exp());
            for &i in &d.features {
                m.add(r, i, coef);
            }
        }
    }
}

/// Greedy choice; ties go to the lowest row.
pub fn argmax(p: &Params, slot: Slot, features: &[usize], allowed: &[usize]) -> Option<usize> {
    let l = logits(p, slot, features, allowed);
    let mut best: Option<(usize, f64)> = None;
    for (k, &r) in allowed.iter().enumerate() {
        if best.is_none_or(|(_, v)| l[k] > v) {
            best = Some((r, l[k]));
        }
    }
    best.map(|(r, _)| r)
}

/// Map an output onto grammar ids for this step.
pub fn choices_of(step: &StepInput, y: &StructuredOutput) -> Result<Choices, PolicyError> {
    y.validate()?;
    let id = |a: &Action| {
        step.space.id_of(a).ok_or_else(|| PolicyError::Grammar(format!("action `{a}` is not available here")))
    };
    Ok(match y.situation {
        Situation::Fast => Choices::Fast { action: id(&y.final_action)? },
        Situation::Slow => {
            let r = y.reflection.as_ref().expect("validated");
            if r.template_id >= N_TEMPLATES {
                return Err(PolicyError::Grammar(format!("template {} out of range", r.template_id)));
            }
            Choices::Slow { first: id(&y.first_action)?, template: r.template_id, revised: id(&y.final_action)? }
        }
        Situation::Knowledgeable => {
            let sig = read_signal(&y.knowledge.as_ref().expect("validated").text);
            Choices::Know {
                advice: sig.advice.and_then(|k| k.id(step.env())),
                success: sig.success_process,
                action: id(&y.final_action)?,
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy {
    pub params: Params,
}

impl LinearPolicy {
    pub fn new(params: Params) -> Self {
        Self { params }
    }

    fn context(&self, step: &StepInput) -> Result<DecisionContext, PolicyError> {
        let ctx = step.context();
        if ctx.layout != self.params.layout {
            return Err(PolicyError::Shape(format!(
                "params built for {:?}, history needs {:?}",
                self.params.layout, ctx.layout
            )));
        }
        Ok(ctx)
    }

    /// `log pi(y | h)` under a grammar mask; knowledge text is teacher-forced from `y`.
    pub fn logprob(&self, step: &StepInput, y: &StructuredOutput, mode: DecodeMode) -> Result<f64, PolicyError> {
        let ctx = self.context(step)?;
        let ds = ctx.encode(&choices_of(step, y)?, mode)?;
        Ok(sequence_logprob(&self.params, &ds))
    }

    fn action(step: &StepInput, id: usize) -> Action {
        step.space.action(id).expect("feasible id").clone()
    }

    fn revise(&self, ctx: &DecisionContext, first: usize) -> Option<usize> {
        argmax(&self.params, Slot::Action, &ctx.revise_features(first), &ctx.revise_allowed(first))
    }
}

impl Agent for LinearPolicy {
    fn predict(&self, step: &StepInput) -> Result<Action, PolicyError> {
        let ctx = self.context(step)?;
        let a = argmax(&self.params, Slot::Action, &ctx.first_features(), &ctx.feasible)
            .ok_or_else(|| PolicyError::Grammar("empty action space".into()))?;
        Ok(Self::action(step, a))
    }

    fn rethink(&self, step: &StepInput, wrong: &Action) -> Result<(String, Action), PolicyError> {
        let ctx = self.context(step)?;
        if ctx.feasible.len() < 2 {
            return Err(PolicyError::SingletonSpace(ctx.feasible.len()));
        }
        let w = step
            .space
            .id_of(wrong)
            .ok_or_else(|| PolicyError::Grammar(format!("action `{wrong}` is not available here")))?;
        let r = self.revise(&ctx, w).expect("at least one alternative");
        let revised = Self::action(step, r);
        let t = template_for(step.kind_of(&revised));
        Ok((instantiate(t, wrong, &revised), revised))
    }

    fn decode(
        &self,
        step: &StepInput,
        mode: DecodeMode,
        provider: &mut dyn KnowledgeProvider,
    ) -> Result<StructuredOutput, PolicyError> {
        let ctx = self.context(step)?;
        let p = &self.params;
        let empty = || PolicyError::Grammar("empty action space".into());
        let first = argmax(p, Slot::Action, &ctx.first_features(), &ctx.first_allowed(mode)).ok_or_else(empty)?;
        if first == ctx.layout.know_row() {
            let k = provider.provide(step.history)?;
            let sig = read_signal(&k.text);
            let feats = ctx.post_know_features(sig.advice.and_then(|a| a.id(step.env())), sig.success_process);
            let a = argmax(p, Slot::Action, &feats, &ctx.feasible).ok_or_else(empty)?;
            return Ok(StructuredOutput::knowledgeable(k, Self::action(step, a)));
        }
        let cont = argmax(p, Slot::Cont, &ctx.prefix_features(first), &ctx.cont_allowed(mode)).expect("STOP allowed");
        let a = Self::action(step, first);
        if cont != REFL {
            return Ok(StructuredOutput::fast(a));
        }
        let all: Vec<usize> = (0..N_TEMPLATES).collect();
        let t = argmax(p, Slot::Template, &ctx.prefix_features(first), &all).expect("templates");
        let r = self.revise(&ctx, first).expect("REFL requires two actions");
        let revised = Self::action(step, r);
        let text = instantiate(t, &a, &revised);
        Ok(StructuredOutput::slow(a, Reflection { template_id: t, text }, revised))
    }
}
