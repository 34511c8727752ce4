//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on failure.
//!
//! Tolerances are pinned here. The end-to-end reward values were produced by
//! the first run on the reference seeds and are asserted as regressions.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use knowself::knowledge::{consolidate, generate_rules, mine_pairs, EntryKind, KnowledgeBase};
use knowself::labeler::records::{samples_from_records, PairRecord, SelfRecord};
use knowself::labeler::{classify, parse, render, DataMode, SelfAwareSample};
use knowself::minienv::view::gold_steps;
use knowself::minienv::{write_jsonl, EnvKind, Task, TaskType};
use knowself::pipeline::{eval_params, rpo, train_variant, PipelineConfig, VariantRun, World};
use knowself::policy::{DecodeMode, Params, Scripted, ScriptedKind, Situation};
use knowself::runtime::{evaluate, Report};
use knowself::trainer::{dpo_loss, nll_loss, rpo_loss, sft_loss};

use common::*;
use rand::Rng;

// pinned tolerances
const DPO_IDENTITY_TOL: f64 = 1e-9;
const FD_STEP: f64 = 1e-5;
const FD_MAX_REL: f64 = 1e-4;
const ADDITIVITY_TOL: f64 = 1e-12;
const REWARD_TOL: f64 = 1e-9;

// pinned regression values on the reference seeds (rewards in [0, 1])
const PIN_KNOWSELF_ALL: f64 = 0.95;
const PIN_SFT_ONLY_ALL: f64 = 0.95;
const PIN_DPO_ONLY_ALL: f64 = 0.95;
const PIN_NOALL_ALL: f64 = 0.5;
const PIN_KNOWSELF_KNOW_PCT: f64 = 32.47;
const PIN_GEN_KNOWSELF: f64 = 1.0 / 3.0;
const PIN_GEN_NOALL: f64 = 1.0 / 3.0;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> Vec<u8> {
    let mut v = Vec::new();
    write_jsonl(&mut v, items).unwrap();
    v
}

struct Reference {
    world: World,
    full: VariantRun,
    elapsed: Duration,
}

fn reference() -> &'static Reference {
    static R: OnceLock<Reference> = OnceLock::new();
    R.get_or_init(|| {
        let t = Instant::now();
        let cfg = PipelineConfig::house();
        let world = World::build(&cfg).unwrap();
        let full = train_variant(&cfg, &world, DataMode::Full, true).unwrap();
        Reference { world, full, elapsed: t.elapsed() }
    })
}

fn gold_step_pool(min: usize) -> Vec<(Arc<Task>, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while out.len() < min {
        let t = house_mix(1, 10_000 + i).pop().unwrap();
        for s in 0..gold_steps(&t).unwrap().len() {
            out.push((t.clone(), s));
        }
        i += 1;
    }
    out.truncate(min);
    out
}

fn c1_criterion() -> Outcome {
    let t0 = Instant::now();
    let pool = gold_step_pool(500);
    let mut detail = Vec::new();
    let mut ok = true;
    for (kind, want) in [
        (ScriptedKind::AlwaysGold, Situation::Fast),
        (ScriptedKind::WrongThenGold, Situation::Slow),
        (ScriptedKind::AlwaysWrong, Situation::Knowledgeable),
    ] {
        let probe = Scripted::new(kind.clone(), 3).unwrap();
        let mut hits = 0;
        let mut cache: Option<(String, Vec<_>)> = None;
        for (t, s) in &pool {
            if cache.as_ref().map(|c| &c.0) != Some(&t.id) {
                cache = Some((t.id.clone(), gold_steps(t).unwrap()));
            }
            let (h, g) = &cache.as_ref().unwrap().1[*s];
            hits += usize::from(classify(h, g, &probe).unwrap().0 == want);
        }
        ok &= hits == pool.len();
        detail.push(format!("{kind:?}->{want} {hits}/{}", pool.len()));
    }
    let el = t0.elapsed();
    check(ok && el < Duration::from_secs(5), format!("{} in {:.2?} (limit 5s)", detail.join(", "), el))
}

fn c2_dpo_identity() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let l = random_layout(&mut r);
        let p = Params::random(l, &mut r, 1.0);
        let n = r.gen_range(1..6);
        let batch = random_pairs(&mut r, l, n);
        for beta in [0.1, 0.5, 2.0] {
            let (loss, _) = dpo_loss(&p, &p, &batch, beta).unwrap();
            worst = worst.max((loss - std::f64::consts::LN_2).abs());
        }
    }
    check(worst < DPO_IDENTITY_TOL, format!("max |L - ln 2| = {worst:.3e} over 20 batches x 3 betas (tol {DPO_IDENTITY_TOL:e})"))
}

fn c3_gradients() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(3);
    let mut worst = [0.0f64; 4];
    let mut max_dim = 0;
    for _ in 0..50 {
        let l = random_layout(&mut r);
        max_dim = max_dim.max(l.dim());
        let p = Params::random(l, &mut r, 0.5);
        let q = Params::random(l, &mut r, 0.5);
        let batch = random_batch(&mut r, l, 3);
        let pairs = random_pairs(&mut r, l, 3);
        let beta = [0.1, 0.5, 2.0][r.gen_range(0..3)];
        let alpha = [0.0, 0.5, 1.0][r.gen_range(0..3)];
        let (_, g) = sft_loss(&p, &batch).unwrap();
        worst[0] = worst[0].max(fd_max_rel_err(&p, &g, FD_STEP, |x| sft_loss(x, &batch).unwrap().0));
        let (_, g) = dpo_loss(&p, &q, &pairs, beta).unwrap();
        worst[1] = worst[1].max(fd_max_rel_err(&p, &g, FD_STEP, |x| dpo_loss(x, &q, &pairs, beta).unwrap().0));
        let (_, g) = nll_loss(&p, &pairs).unwrap();
        worst[2] = worst[2].max(fd_max_rel_err(&p, &g, FD_STEP, |x| nll_loss(x, &pairs).unwrap().0));
        let (_, g) = rpo_loss(&p, &q, &pairs, beta, alpha).unwrap();
        worst[3] = worst[3].max(fd_max_rel_err(&p, &g, FD_STEP, |x| rpo_loss(x, &q, &pairs, beta, alpha).unwrap().0.rpo));
    }
    let el = t0.elapsed();
    let ok = worst.iter().all(|w| *w < FD_MAX_REL) && max_dim <= 64 && el < Duration::from_secs(60);
    check(
        ok,
        format!(
            "max rel err sft {:.1e} dpo {:.1e} nll {:.1e} rpo {:.1e} (tol {FD_MAX_REL:e}, step {FD_STEP:e}), dim <= {max_dim}, {el:.2?}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn c4_additivity() -> Outcome {
    let r = reference();
    let cfg = PipelineConfig::house();
    let ms = &r.full.policy.as_ref().unwrap().metrics;
    let worst = ms
        .iter()
        .map(|m| (m.rpo.unwrap() - (m.dpo.unwrap() + cfg.train.alpha * m.nll.unwrap())).abs())
        .fold(0.0f64, f64::max);
    check(!ms.is_empty() && worst < ADDITIVITY_TOL, format!("{} stage-2 steps, max |rpo - (dpo + a nll)| = {worst:.1e}", ms.len()))
}

fn c5_roundtrips() -> Outcome {
    let mut r = rng(5);
    let mut bad = Vec::new();
    for i in 0..1000 {
        let y = random_output(&mut r);
        let text = render(&y);
        let back = parse(&text).map_err(|e| format!("sample {i}: {e}"))?;
        if back != y || render(&back) != text {
            bad.push(i);
        }
        let rec = SelfRecord {
            task_id: format!("t{i}"),
            step: i,
            history_digest: "00".into(),
            label: y.situation,
            canonical_text: text.clone(),
            knowledge_id: None,
        };
        let s = serde_json::to_string(&rec).unwrap();
        if serde_json::from_str::<SelfRecord>(&s).unwrap() != rec {
            bad.push(i);
        }
    }
    let mut pair_bad = 0;
    for i in 0..1000 {
        let (a, b) = (random_output(&mut r), random_output(&mut r));
        let rec = PairRecord { task_id: format!("t{i}"), step: i, chosen_text: render(&a), rejected_text: render(&b) };
        let back: PairRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
        let ok = back == rec
            && parse(&back.chosen_text).ok() == Some(a)
            && parse(&back.rejected_text).ok() == Some(b);
        pair_bad += usize::from(!ok);
    }
    // real samples through records, with histories rebuilt from tasks
    let rf = reference();
    let some: Vec<SelfAwareSample> = rf.full.data.iter().take(400).cloned().collect();
    let recs: Vec<SelfRecord> = some.iter().map(SelfRecord::from).collect();
    let rebuilt = samples_from_records(&recs, &rf.world.train).map_err(|e| e.to_string())?;
    let records_ok = rebuilt == some;
    let kb = &rf.world.kb;
    let kb_ok = KnowledgeBase::from_json(&kb.to_json()).map(|k| &k == kb).unwrap_or(false);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("params.json");
    let p = &rf.full.reference.params;
    p.save(&path).unwrap();
    let q = Params::load(&path).unwrap();
    let bits_ok = p.values().zip(q.values()).all(|(a, b)| a.to_bits() == b.to_bits()) && q.len() == p.len();
    check(
        bad.is_empty() && pair_bad == 0 && records_ok && kb_ok && bits_ok,
        format!(
            "outputs 1000 ({} bad), pairs 1000 ({pair_bad} bad), D_self records {} ({}), kb {} entries ({}), params bit-exact {}",
            bad.len(),
            recs.len(),
            if records_ok { "identical" } else { "differ" },
            kb.len(),
            if kb_ok { "identical" } else { "differ" },
            bits_ok
        ),
    )
}

/// Tasks whose gold lengths add up to exactly 20.
fn twenty_steps() -> Vec<Arc<Task>> {
    let pool = tasks(TaskType::Put, 0..40);
    let lens: Vec<usize> = pool.iter().map(|t| gold_steps(t).unwrap().len()).collect();
    for i in 0..pool.len() {
        for j in i + 1..pool.len() {
            for k in j + 1..pool.len() {
                if lens[i] + lens[j] + lens[k] == 20 {
                    return vec![pool[i].clone(), pool[j].clone(), pool[k].clone()];
                }
            }
        }
    }
    panic!("no three put tasks with 20 gold steps in total");
}

fn c6_dispatch_metrics() -> Outcome {
    let kb = &reference().world.kb;
    let ts = twenty_steps();
    let mixed = KnowAt { at: ts.iter().map(|t| (t.id.clone(), 0)).collect() };
    let (force, _) = evaluate(&mixed, &ts, Some(kb), DecodeMode::ForceKnow).unwrap();
    let (fast, _) = evaluate(&mixed, &ts, Some(kb), DecodeMode::FastOnly).unwrap();
    let (free, eps) = evaluate(&mixed, &ts, Some(kb), DecodeMode::Free).unwrap();
    let steps: usize = eps.iter().map(|e| e.steps).sum();
    let ok = force.know_pct_text() == "100.00%"
        && fast.know_pct_text() == "0.00%"
        && format!("{:.2}%", fast.refl_pct) == "0.00%"
        && steps == 20
        && free.know_pct_text() == "15.00%";
    check(
        ok,
        format!(
            "forceknow {}, fastonly {} / refl {:.2}%, mixed {} over {steps} steps",
            force.know_pct_text(),
            fast.know_pct_text(),
            fast.refl_pct,
            free.know_pct_text()
        ),
    )
}

fn c7_kb_cap() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for cfg in [PipelineConfig::house(), PipelineConfig::shop()] {
        let ts: Vec<Arc<Task>> = cfg.train_tasks().unwrap().into_iter().take(120).collect();
        let pairs = mine_pairs(&ts, &cfg.prior(), 20).unwrap();
        let raw = KnowledgeBase::new(cfg.kb.cap, generate_rules(&pairs));
        let once = consolidate(&raw);
        let twice = consolidate(&once);
        let limit = if cfg.env == EnvKind::MiniHouse { 24 } else { 10 };
        let errors_left = once.entries.iter().any(|e| e.kind == EntryKind::Error);
        let kept: BTreeSet<&str> = once.entries.iter().map(|e| e.id.as_str()).collect();
        let sp_dropped = raw.entries.iter().any(|e| e.kind == EntryKind::SuccessProcess && !kept.contains(e.id.as_str()));
        let good = once.len() <= limit && twice == once && !(sp_dropped && errors_left);
        ok &= good;
        lines.push(format!("{} raw {} -> {} (cap {limit}), idempotent {}", cfg.env, raw.len(), once.len(), twice == once));
    }
    check(ok, lines.join("; "))
}

fn c8_end_to_end() -> Outcome {
    let t0 = Instant::now();
    let rf = reference();
    let cfg = PipelineConfig::house();
    let w = &rf.world;
    let (knowself, _) = eval_params(&cfg, w, rf.full.final_params(), DecodeMode::Free).unwrap();
    let (sft_only, _) = eval_params(&cfg, w, &rf.full.reference.params, DecodeMode::Free).unwrap();
    let dpo = rpo(&cfg, &rf.full.reference.params, &rf.full.pairs, DataMode::Full, 0.0).unwrap();
    let (dpo_only, _) = eval_params(&cfg, w, &dpo.params, DecodeMode::Free).unwrap();
    let noall = train_variant(&cfg, w, DataMode::NoAll, false).unwrap();
    let (gold_only, _) = eval_params(&cfg, w, noall.final_params(), DecodeMode::FastOnly).unwrap();
    let fullknow = train_variant(&cfg, w, DataMode::FullKnow, true).unwrap();
    let (fk, _) = eval_params(&cfg, w, fullknow.final_params(), DecodeMode::ForceKnow).unwrap();
    let elapsed = t0.elapsed() + rf.elapsed;
    let a = knowself.all >= gold_only.all;
    let b = knowself.know_pct < 50.0 && knowself.know_pct < fk.know_pct && fk.know_pct == 100.0;
    let c = knowself.all >= sft_only.all && dpo_only.all <= knowself.all;
    let pins = (knowself.all - PIN_KNOWSELF_ALL).abs() < REWARD_TOL
        && (sft_only.all - PIN_SFT_ONLY_ALL).abs() < REWARD_TOL
        && (dpo_only.all - PIN_DPO_ONLY_ALL).abs() < REWARD_TOL
        && (gold_only.all - PIN_NOALL_ALL).abs() < REWARD_TOL
        && (knowself.know_pct - PIN_KNOWSELF_KNOW_PCT).abs() < 1e-9;
    let r = |x: &Report| format!("{:.4}", x.all);
    check(
        a && b && c && pins && elapsed < Duration::from_secs(300),
        format!(
            "(a) knowself {} >= w/o all {}: {a}; (b) know% {:.2} < 50 and < full-know {:.2}: {b}; \
             (c) rpo {} >= sft {} and dpo(a=0) {} <= rpo: {c}; pins {pins}; {elapsed:.2?}",
            r(&knowself),
            r(&gold_only),
            knowself.know_pct,
            fk.know_pct,
            r(&knowself),
            r(&sft_only),
            r(&dpo_only),
        ),
    )
}

fn c9_generalization() -> Outcome {
    let mut cfg = PipelineConfig::house();
    cfg.split = Some("train=Put,Clean,Examine test=Heat,Cool,PutTwo".into());
    let w = World::build(&cfg).unwrap();
    let train_seeds: BTreeSet<u64> = w.train.iter().map(|t| t.seed).collect();
    let disjoint = w.eval.iter().all(|t| !train_seeds.contains(&t.seed));
    let ks = train_variant(&cfg, &w, DataMode::Full, true).unwrap();
    let (rk, _) = eval_params(&cfg, &w, ks.final_params(), DecodeMode::Free).unwrap();
    let na = train_variant(&cfg, &w, DataMode::NoAll, false).unwrap();
    let (rn, _) = eval_params(&cfg, &w, na.final_params(), DecodeMode::FastOnly).unwrap();
    let types: Vec<TaskType> = rk.per_type.keys().copied().collect();
    let only_test = types == vec![TaskType::Heat, TaskType::Cool, TaskType::PutTwo];
    let pins = (rk.all - PIN_GEN_KNOWSELF).abs() < REWARD_TOL && (rn.all - PIN_GEN_NOALL).abs() < REWARD_TOL;
    check(
        only_test && disjoint && rk.all >= rn.all && pins,
        format!(
            "types {types:?}, seeds disjoint {disjoint}, knowself {:.4} >= w/o all {:.4}: {}, pins {pins}",
            rk.all,
            rn.all,
            rk.all >= rn.all
        ),
    )
}

fn artifacts(cfg: &PipelineConfig) -> [Vec<u8>; 5] {
    let w = World::build(cfg).unwrap();
    let run = train_variant(cfg, &w, DataMode::Full, true).unwrap();
    let (report, eps) = eval_params(cfg, &w, run.final_params(), DecodeMode::Free).unwrap();
    let d_self: Vec<SelfRecord> = run.data.iter().map(SelfRecord::from).collect();
    let d_pair: Vec<PairRecord> = run.pairs.iter().map(PairRecord::from).collect();
    [
        jsonl(&d_self),
        jsonl(&d_pair),
        run.final_params().to_json().into_bytes(),
        serde_json::to_vec(&report).unwrap(),
        jsonl(&eps),
    ]
}

fn c10_determinism() -> Outcome {
    let cfg = PipelineConfig::house();
    let a = artifacts(&cfg);
    let b = artifacts(&cfg);
    let names = ["D_self", "D_pair", "params", "report", "episodes"];
    let same: Vec<bool> = a.iter().zip(&b).map(|(x, y)| x == y).collect();
    let detail = names.iter().zip(&same).map(|(n, s)| format!("{n} {}", if *s { "identical" } else { "DIFFER" }));
    check(same.iter().all(|s| *s), detail.collect::<Vec<_>>().join(", "))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("criterion exactness", c1_criterion),
        ("DPO identity", c2_dpo_identity),
        ("gradient correctness", c3_gradients),
        ("loss additivity", c4_additivity),
        ("serialization round-trips", c5_roundtrips),
        ("dispatch and metric exactness", c6_dispatch_metrics),
        ("knowledge base cap", c7_kb_cap),
        ("end-to-end directional experiment", c8_end_to_end),
        ("generalization harness", c9_generalization),
        ("determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match out {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
