//! `knowself` command line: runs the pipeline one stage at a time, writing
//! each artifact under the output root together with a manifest.

mod commands;
mod error;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use knowself::labeler::Mix;
use knowself::pipeline::PipelineConfig;
use knowself::policy::DecodeMode;
use knowself::runtime::Split;

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "knowself", version, about = "Situation-aware agent pipeline on simulated text worlds")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Pipeline config (TOML). Defaults to the run's saved config, then the MiniHouse preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root; defaults to $KNOWSELF_HOME, then ./knowself-out.
    #[arg(long, global = true)]
    pub home: Option<PathBuf>,
    /// World seed used for task generation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Grammar mode: sets the data mode for data and training commands, the decode mode for run/eval.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Data scaling, `relative:P` or `absolute:P`.
    #[arg(long, global = true)]
    pub mix: Option<String>,
    /// Task-type split, e.g. `train=Put,Clean,Examine test=Heat,Cool,PutTwo`.
    #[arg(long, global = true)]
    pub split: Option<String>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Accept artifacts built under a different config.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate training and evaluation tasks.
    GenTasks,
    /// Mine prior mistakes and build the knowledge base.
    BuildKb,
    /// Label gold steps into the self-aware dataset.
    Label,
    /// Supervised stage; writes the reference policy.
    TrainSft,
    /// Collect the reference policy's mistakes as preference pairs.
    MinePairs,
    /// Preference stage on top of the reference policy.
    TrainRpo,
    /// Run the trained policy on the evaluation tasks.
    Run {
        /// Which weights to run.
        #[arg(long, default_value = "policy", value_parser = ["policy", "reference"])]
        params: String,
        /// Only this task id.
        #[arg(long)]
        task: Option<String>,
    },
    /// Summarize episode logs into a report.
    Eval,
    /// Train and evaluate every ablation.
    Ablate,
    /// Render all reports as one table.
    Report {
        /// Print JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
}

/// Flags parsed and checked; the config with overrides applied.
pub struct Resolved {
    pub cfg: PipelineConfig,
    pub home: PathBuf,
    pub mode: Option<DecodeMode>,
    pub force: bool,
}

fn invalid(e: knowself::pipeline::PipelineError) -> CliError {
    CliError::Invalid(e.to_string())
}

fn resolve(g: &Global, data_command: bool) -> Result<Resolved, CliError> {
    let home = g
        .home
        .clone()
        .or_else(|| std::env::var_os("KNOWSELF_HOME").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("knowself-out"));
    let saved = home.join(store::CONFIG);
    let mut cfg = match &g.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|_| CliError::Missing(p.display().to_string()))?;
            PipelineConfig::from_toml(&text).map_err(invalid)?
        }
        None if saved.exists() => {
            let text = std::fs::read_to_string(&saved).map_err(|e| CliError::Runtime(e.to_string()))?;
            PipelineConfig::from_toml(&text).map_err(invalid)?
        }
        None => PipelineConfig::house(),
    };
    let mode = g
        .mode
        .as_deref()
        .map(|m| m.parse::<DecodeMode>().map_err(|e| CliError::Usage(e.to_string())))
        .transpose()?;
    if let Some(s) = g.seed {
        cfg.seeds.world = s;
    }
    if let Some(m) = &g.mix {
        m.parse::<Mix>().map_err(|e| CliError::Usage(e.to_string()))?;
        cfg.mix = Some(m.clone());
    }
    if let Some(s) = &g.split {
        Split::parse(s).map_err(|e| CliError::Usage(e.to_string()))?;
        cfg.split = Some(s.clone());
    }
    if let (Some(m), true) = (mode, data_command) {
        cfg.data_mode = knowself::labeler::DataMode::for_decode(m);
    }
    cfg.validate().map_err(invalid)?;
    if let Some(n) = g.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(Resolved { cfg, home, mode, force: g.force })
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let data_command = !matches!(cli.command, Command::Run { .. } | Command::Eval | Command::Report { .. });
    let r = resolve(&cli.global, data_command)?;
    match cli.command {
        Command::GenTasks => commands::gen_tasks(&r),
        Command::BuildKb => commands::build_kb(&r),
        Command::Label => commands::label(&r),
        Command::TrainSft => commands::train_sft(&r),
        Command::MinePairs => commands::mine_pairs(&r),
        Command::TrainRpo => commands::train_rpo(&r),
        Command::Run { params, task } => commands::run(&r, &params, task.as_deref()),
        Command::Eval => commands::eval(&r),
        Command::Ablate => commands::ablate(&r),
        Command::Report { json } => commands::report(&r, json),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
