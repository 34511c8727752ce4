mod common;

use knowself::minienv::view::gold_steps;
use knowself::minienv::EnvKind;
use knowself::policy::grammar::{Choices, DecisionContext, N_TEMPLATES};
use knowself::policy::linear::sequence_logprob;
use knowself::policy::{
    Agent, DecodeMode, Layout, LinearPolicy, NoKnowledge, Params, Situation, StepInput,
};
use knowself::knowledge::{KnowledgeBase, Selector};
use proptest::prelude::*;

use common::*;

/// Every output the grammar can emit under `mode`, knowledge fields held fixed.
fn all_choices(ctx: &DecisionContext, mode: DecodeMode, advice: Option<usize>, success: bool) -> Vec<Choices> {
    let mut out = Vec::new();
    if mode != DecodeMode::ForceKnow {
        for &a in &ctx.feasible {
            out.push(Choices::Fast { action: a });
            if mode.allows_refl() {
                for t in 0..N_TEMPLATES {
                    for r in ctx.revise_allowed(a) {
                        out.push(Choices::Slow { first: a, template: t, revised: r });
                    }
                }
            }
        }
    }
    if mode.allows_know() {
        for &a in &ctx.feasible {
            out.push(Choices::Know { advice, success, action: a });
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sequence_probabilities_sum_to_one(seed in 0u64..100_000, mi in 0usize..5) {
        let mut r = rng(seed);
        let mut l = random_layout(&mut r);
        l.n_actions = l.n_actions.min(5);
        let ctx = random_context(&mut r, l);
        let p = Params::random(l, &mut r, 1.5);
        let mode = DecodeMode::ALL[mi];
        let total: f64 = all_choices(&ctx, mode, Some(0), seed % 2 == 0)
            .iter()
            .map(|c| sequence_logprob(&p, &ctx.encode(c, mode).unwrap()).exp())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "total {}", total);
    }

    #[test]
    fn params_json_is_bit_exact(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let l = random_layout(&mut r);
        let mut p = Params::random(l, &mut r, 3.0);
        p.tag = Some("x".into());
        let q = Params::from_json(&p.to_json()).unwrap();
        prop_assert_eq!(q.len(), p.len());
        prop_assert!(p.values().zip(q.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(q.tag, p.tag);
    }
}

#[test]
fn rethink_never_returns_the_wrong_action() {
    let mut r = rng(9);
    let p = Params::random(Layout::for_env(EnvKind::MiniHouse), &mut r, 1.0);
    let pol = LinearPolicy::new(p);
    for t in house_mix(12, 300) {
        for (h, _) in gold_steps(&t).unwrap() {
            let step = StepInput::new(&h);
            if step.space.len() < 2 {
                continue;
            }
            let wrong = pol.predict(&step).unwrap();
            let (_, revised) = pol.rethink(&step, &wrong).unwrap();
            assert_ne!(revised, wrong);
            assert!(step.space.id_of(&revised).is_some());
        }
    }
}

#[test]
fn decode_respects_masks() {
    let mut r = rng(4);
    let kb = KnowledgeBase::new(24, Vec::new());
    for _ in 0..6 {
        let p = Params::random(Layout::for_env(EnvKind::MiniHouse), &mut r, 4.0);
        let pol = LinearPolicy::new(p);
        for t in house_mix(6, 40) {
            for (h, _) in gold_steps(&t).unwrap().into_iter().take(6) {
                let step = StepInput::new(&h);
                for mode in [DecodeMode::NoKnow, DecodeMode::FastOnly] {
                    let y = pol.decode(&step, mode, &mut NoKnowledge).unwrap();
                    assert_ne!(y.situation, Situation::Knowledgeable);
                    if mode == DecodeMode::FastOnly {
                        assert_eq!(y.situation, Situation::Fast);
                    }
                }
                let y = pol.decode(&step, DecodeMode::NoRefl, &mut Selector::new(&kb));
                if let Ok(y) = y {
                    assert_ne!(y.situation, Situation::Slow);
                }
            }
        }
    }
}

#[test]
fn wrong_layout_is_rejected() {
    let pol = LinearPolicy::new(Params::zeros(Layout::for_env(EnvKind::MiniShop)));
    let t = &house_mix(1, 0)[0];
    let (h, _) = &gold_steps(t).unwrap()[0];
    assert!(pol.predict(&StepInput::new(h)).is_err());
}

#[test]
fn params_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    let p = Params::random(Layout::for_env(EnvKind::MiniShop), &mut rng(1), 1.0);
    p.save(&path).unwrap();
    assert_eq!(Params::load(&path).unwrap(), p);
    std::fs::write(&path, "{\"version\":\"other\"}").unwrap();
    assert!(Params::load(&path).is_err());
}
