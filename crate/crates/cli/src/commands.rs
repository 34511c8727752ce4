//! One function per subcommand. Each reads its inputs through the store,
//! writes its outputs, and leaves a manifest behind.

use std::collections::BTreeMap;
use std::sync::Arc;

use knowself::knowledge::KnowledgeBase;
use knowself::labeler::records::{pairs_from_records, samples_from_records, PairRecord, SelfRecord};
use knowself::labeler::{label_counts, PairSample, SelfAwareSample};
use knowself::minienv::Task;
use knowself::pipeline::{self, render_table, AblationRow, World};
use knowself::policy::{DecodeMode, LinearPolicy, Params};
use knowself::runtime::{evaluate, generalization_eval, EpisodeResult, Report};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::store::{self, Store};
use crate::Resolved;

fn open(r: &Resolved) -> Store {
    Store::new(r.home.clone(), r.cfg.hash(), r.force)
}

fn args(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn tasks(s: &mut Store, name: &str) -> Result<Vec<Arc<Task>>, CliError> {
    Ok(s.read_jsonl::<Task>(name)?.into_iter().map(Arc::new).collect())
}

fn params(s: &mut Store, name: &str) -> Result<Params, CliError> {
    let bytes = s.read(name)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::Invalid(format!("corrupt artifact {name}")))?;
    Params::from_json(&text).map_err(|e| CliError::Invalid(format!("corrupt artifact {name}: {e}")))
}

fn kb(s: &mut Store) -> Result<KnowledgeBase, CliError> {
    let bytes = s.read(store::KB)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::Invalid(format!("corrupt artifact {}", store::KB)))?;
    KnowledgeBase::from_json(&text).map_err(|e| CliError::Invalid(format!("corrupt artifact {}: {e}", store::KB)))
}

fn d_self(s: &mut Store, train: &[Arc<Task>]) -> Result<Vec<SelfAwareSample>, CliError> {
    let recs: Vec<SelfRecord> = s.read_jsonl(store::D_SELF)?;
    Ok(samples_from_records(&recs, train)?)
}

fn d_pair(s: &mut Store, train: &[Arc<Task>]) -> Result<Vec<PairSample>, CliError> {
    let recs: Vec<PairRecord> = s.read_jsonl(store::PAIRS)?;
    Ok(pairs_from_records(&recs, train)?)
}

pub fn gen_tasks(r: &Resolved) -> Result<(), CliError> {
    let mut s = open(r);
    let train = r.cfg.train_tasks()?;
    let eval = r.cfg.eval_tasks()?;
    s.write(store::CONFIG, r.cfg.to_toml().as_bytes())?;
    let as_tasks = |v: &[Arc<Task>]| v.iter().map(|t| (**t).clone()).collect::<Vec<Task>>();
    s.write_jsonl(store::TRAIN_TASKS, &as_tasks(&train))?;
    s.write_jsonl(store::EVAL_TASKS, &as_tasks(&eval))?;
    s.finish("gen-tasks", "gen-tasks", BTreeMap::new())?;
    println!("{} training and {} evaluation {} tasks (config {})", train.len(), eval.len(), r.cfg.env, r.cfg.hash());
    Ok(())
}

pub fn build_kb(r: &Resolved) -> Result<(), CliError> {
    let mut s = open(r);
    let train = tasks(&mut s, store::TRAIN_TASKS)?;
    let base = pipeline::build_kb(&r.cfg, &train)?;
    s.write(store::KB, base.to_json().as_bytes())?;
    s.finish("build-kb", "build-kb", BTreeMap::new())?;
    println!("knowledge base: {} rules (cap {})", base.len(), base.cap);
    Ok(())
}

pub fn label(r: &Resolved) -> Result<(), CliError> {
    let mut s = open(r);
    let train = tasks(&mut s, store::TRAIN_TASKS)?;
    let base = kb(&mut s)?;
    let data = pipeline::label(&r.cfg, &train, &base, r.cfg.data_mode)?;
    let recs: Vec<SelfRecord> = data.iter().map(SelfRecord::from).collect();
    s.write_jsonl(store::D_SELF, &recs)?;
    s.finish("label", "label", args(&[("data_mode", r.cfg.data_mode.to_string())]))?;
    let [fast, slow, know] = label_counts(&data);
    println!("{} samples: fast {fast}, slow {slow}, knowledgeable {know}", data.len());
    Ok(())
}

pub fn train_sft(r: &Resolved) -> Result<(), CliError> {
    let mut s = open(r);
    let train = tasks(&mut s, store::TRAIN_TASKS)?;
    let data = d_self(&mut s, &train)?;
    let t = pipeline::sft(&r.cfg, &data, r.cfg.data_mode)?;
    s.write(store::REFERENCE, t.params.to_json().as_bytes())?;
    s.write_jsonl(store::STAGE1_METRICS, &t.metrics)?;
    s.finish("train-sft", "train-sft", BTreeMap::new())?;
    let means: Vec<String> = t.epoch_means().iter().map(|m| format!("{m:.4}")).collect();
    println!("stage 1: {} steps, epoch mean loss {}", t.metrics.len(), means.join(" -> "));
    Ok(())
}

pub fn mine_pairs(r: &Resolved) -> Result<(), CliError> {
    let mut s = open(r);
    let train = tasks(&mut s, store::TRAIN_TASKS)?;
    let data = d_self(&mut s, &train)?;
    let reference = params(&mut s, store::REFERENCE)?;
    let base = kb(&mut s)?;
    let pairs = pipeline::pairs(&data, &reference, &base, r.cfg.data_mode)?;
    let recs: Vec<PairRecord> = pairs.iter().map(PairRecord::from).collect();
    s.write_jsonl(store::PAIRS, &recs)?;
    s.finish("mine-pairs", "mine-pairs", BTreeMap::new())?;
    println!("{} preference pairs from {} samples", pairs.len(), data.len());
    Ok(())
}

pub fn train_rpo(r: &Resolved) -> Result<(), CliError> {
    let mut s = open(r);
    let train = tasks(&mut s, store::TRAIN_TASKS)?;
    let pairs = d_pair(&mut s, &train)?;
    let reference = params(&mut s, store::REFERENCE)?;
    let t = pipeline::rpo(&r.cfg, &reference, &pairs, r.cfg.data_mode, r.cfg.train.alpha)?;
    s.write(store::POLICY, t.params.to_json().as_bytes())?;
    s.write_jsonl(store::STAGE2_METRICS, &t.metrics)?;
    s.finish("train-rpo", "train-rpo", BTreeMap::new())?;
    match t.metrics.last() {
        Some(m) => println!(
            "stage 2: {} steps, last rpo {:.4} (dpo {:.4}, nll {:.4})",
            t.metrics.len(),
            m.rpo.unwrap_or(f64::NAN),
            m.dpo.unwrap_or(f64::NAN),
            m.nll.unwrap_or(f64::NAN)
        ),
        None => println!("stage 2: no pairs, policy equals the reference"),
    }
    Ok(())
}

/// Modes to run or summarize: `--mode` if given, else the config's list.
fn eval_modes(r: &Resolved) -> Result<Vec<DecodeMode>, CliError> {
    match r.mode {
        Some(m) => Ok(vec![m]),
        None => Ok(r.cfg.decode_modes()?),
    }
}

pub fn run(r: &Resolved, which: &str, only: Option<&str>) -> Result<(), CliError> {
    let mut s = open(r);
    let train = tasks(&mut s, store::TRAIN_TASKS)?;
    let mut eval = tasks(&mut s, store::EVAL_TASKS)?;
    if let Some(id) = only {
        eval.retain(|t| t.id == id);
        if eval.is_empty() {
            return Err(CliError::Usage(format!("no evaluation task with id `{id}`")));
        }
    }
    let name = if which == "reference" { store::REFERENCE } else { store::POLICY };
    let policy = LinearPolicy::new(params(&mut s, name)?);
    let base = kb(&mut s)?;
    let split = r.cfg.split()?;
    let modes = eval_modes(r)?;
    for &mode in &modes {
        let (rep, eps) = match &split {
            Some(sp) => generalization_eval(&policy, Some(&base), mode, sp, &train, &eval)?,
            None => evaluate(&policy, &eval, Some(&base), mode)?,
        };
        s.write_jsonl(&store::episodes(mode.name()), &eps)?;
        println!("{mode}: {} episodes, avg reward {:.4}, Know% {}", eps.len(), rep.all, rep.know_pct_text());
        if only.is_some() {
            for (i, st) in eps[0].trace.iter().enumerate() {
                println!("  {i:>2} [{}] {} -> {}", st.situation, st.committed_action, st.observation);
            }
        }
    }
    let mode_list = modes.iter().map(|m| m.name()).collect::<Vec<_>>().join(",");
    let mut a = args(&[("params", which.to_string()), ("modes", mode_list.clone())]);
    if let Some(id) = only {
        a.insert("task".into(), id.to_string());
    }
    s.finish(&format!("run.{}", mode_list.replace(',', "+")), "run", a)?;
    Ok(())
}

pub fn eval(r: &Resolved) -> Result<(), CliError> {
    let mut s = open(r);
    let modes = eval_modes(r)?;
    for &mode in &modes {
        let ep_name = store::episodes(mode.name());
        let eps: Vec<EpisodeResult> = s.read_jsonl(&ep_name)?;
        if eps.is_empty() {
            return Err(CliError::Invalid(format!("artifact {ep_name} has no episodes")));
        }
        let mut rep = Report::from_episodes(mode, &eps);
        rep.episodes = Some(ep_name);
        s.write_json(&store::report_json(mode.name()), &rep)?;
        let table = render_table(r.cfg.env, &[(mode.name().to_string(), rep)]);
        s.write(&store::report_txt(mode.name()), table.as_bytes())?;
        print!("{table}");
    }
    let mode_list = modes.iter().map(|m| m.name()).collect::<Vec<_>>().join("+");
    s.finish(&format!("eval.{mode_list}"), "eval", BTreeMap::new())?;
    Ok(())
}

pub fn ablate(r: &Resolved) -> Result<(), CliError> {
    let mut s = open(r);
    let world = World::build(&r.cfg)?;
    s.write(store::CONFIG, r.cfg.to_toml().as_bytes())?;
    let rows = pipeline::ablate(&r.cfg, &world)?;
    s.write_json(store::ABLATION_JSON, &rows)?;
    let table = render_table(r.cfg.env, &rows.iter().map(|x| (x.name.clone(), x.report.clone())).collect::<Vec<_>>());
    s.write(store::ABLATION_TXT, table.as_bytes())?;
    s.finish("ablate", "ablate", BTreeMap::new())?;
    print!("{table}");
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Combined {
    env: String,
    config_hash: String,
    rows: Vec<(String, Report)>,
}

pub fn report(r: &Resolved, json: bool) -> Result<(), CliError> {
    let mut s = open(r);
    let mut rows: Vec<(String, Report)> = Vec::new();
    for mode in knowself::policy::DecodeMode::ALL {
        let name = store::report_json(mode.name());
        if s.path(&name).exists() {
            rows.push((mode.name().to_string(), s.read_json(&name)?));
        }
    }
    if s.path(store::ABLATION_JSON).exists() {
        let ab: Vec<AblationRow> = s.read_json(store::ABLATION_JSON)?;
        rows.extend(ab.into_iter().map(|x| (x.name, x.report)));
    }
    if rows.is_empty() {
        return Err(CliError::Missing(format!("{} or {}", store::report_json("<mode>"), store::ABLATION_JSON)));
    }
    let table = render_table(r.cfg.env, &rows);
    let combined = Combined { env: r.cfg.env.to_string(), config_hash: r.cfg.hash(), rows };
    s.write("report.txt", table.as_bytes())?;
    s.write_json("report.json", &combined)?;
    s.finish("report", "report", BTreeMap::new())?;
    if json {
        println!("{}", serde_json::to_string_pretty(&combined).map_err(|e| CliError::Runtime(e.to_string()))?);
    } else {
        print!("{table}");
    }
    Ok(())
}
