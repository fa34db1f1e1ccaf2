use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use editbench::editors::EditorKind;
use editbench::protocol::{self, EvalArgs, ReportFormat, RunConfig};
use editbench::tinylm::io;

#[derive(Parser)]
#[command(name = "editbench", version, about = "Edit a small transformer and measure neighborhood specificity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic fact world.
    GenWorld {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on a fact world.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        world: PathBuf,
    },
    /// Edit and evaluate every selected case.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// A world file or a CounterFact-style JSON array.
        #[arg(long)]
        dataset: PathBuf,
        /// Case ids, e.g. `0-19` or `3,5,8`.
        #[arg(long, default_value = "all")]
        cases: String,
        #[arg(long)]
        editor: Option<EditorKind>,
        #[arg(long)]
        bootstrap_n: Option<usize>,
        #[arg(long)]
        level: Option<f64>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Seconds since the epoch recorded in the manifest.
        #[arg(long)]
        timestamp: Option<u64>,
    },
    /// Rewrite a CounterFact file with the edit prepended to every
    /// neighborhood prompt.
    GenPlus {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Re-aggregate a record file.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        records: PathBuf,
        /// json, csv or both.
        #[arg(long, default_value = "both")]
        format: ReportFormat,
    },
    /// Finite-difference check of the analytic gradients.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Defaults to a fresh model built from `--seed`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        coords: usize,
    },
}

fn load_config(common: &Common) -> editbench::Result<RunConfig> {
    match &common.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> editbench::Result<u8> {
    match cli.command {
        Command::GenWorld { common } => {
            let world = protocol::cmd_gen_world(common.seed, &load_config(&common)?, &common.out)?;
            println!(
                "world seed {}: {} facts, {} cases, {} corpus lines, {} neighborhood prompts validated",
                world.seed,
                world.facts.len(),
                world.cases.len(),
                world.corpus.len(),
                world.validation.neighborhood_prompts_checked
            );
            Ok(0)
        }
        Command::Train { common, world } => {
            let s = protocol::cmd_train(&world, &load_config(&common)?, common.seed, &common.out)?;
            println!(
                "trained {} ({} params): final loss {:.4}, recall {}/{}",
                s.model.label,
                s.model.n_params,
                s.epoch_losses.last().copied().unwrap_or(f64::NAN),
                s.recall_hits,
                s.recall_total
            );
            if s.passed() {
                Ok(0)
            } else {
                eprintln!("recall {:.3} below the required {:.3}", s.recall, s.min_recall);
                Ok(2)
            }
        }
        Command::Eval { common, checkpoint, dataset, cases, editor, bootstrap_n, level, threads, timestamp } => {
            let mut config = load_config(&common)?;
            if let Some(n) = bootstrap_n {
                config.metrics.bootstrap_n = n;
            }
            if let Some(l) = level {
                config.metrics.level = l;
            }
            let args = EvalArgs {
                checkpoint: &checkpoint,
                dataset: &dataset,
                config: &config,
                editor,
                cases: protocol::parse_cases(&cases)?,
                seed: common.seed,
                threads,
                timestamp,
                out: &common.out,
            };
            let (run, table) = protocol::cmd_eval(&args)?;
            for line in table.iter().flat_map(protocol::summarize) {
                println!("{line}");
            }
            let ok = run.efficacy.iter().filter(|e| e.report.success).count();
            if !run.efficacy.is_empty() {
                println!("efficacy {ok}/{}", run.efficacy.len());
            }
            for f in &run.failures {
                eprintln!("case {} failed: {}", f.case_id, f.error);
            }
            if run.failed() {
                eprintln!("{} of {} cases failed", run.failures.len(), run.manifest.cases.len());
                return Ok(3);
            }
            Ok(0)
        }
        Command::GenPlus { common, input } => {
            let s = protocol::cmd_gen_plus(&input, &common.out)?;
            if !s.already_prefixed.is_empty() {
                eprintln!(
                    "warning: {} case(s) already carry the edit prefix and were prefixed again: {:?}",
                    s.already_prefixed.len(),
                    s.already_prefixed
                );
            }
            println!("{} cases transformed", s.cases);
            Ok(0)
        }
        Command::Report { common, records, format } => {
            let table = protocol::cmd_report(&records, format, &common.out)?;
            for line in protocol::summarize(&table) {
                println!("{line}");
            }
            Ok(0)
        }
        Command::Gradcheck { common, checkpoint, coords } => {
            let ckpt = match checkpoint {
                Some(p) => io::load(p)?,
                None => protocol::fresh_model(common.seed)?,
            };
            let reports = protocol::cmd_gradcheck(&ckpt, coords, common.seed)?;
            let mut worst: f64 = 0.0;
            for r in &reports {
                println!("{:<32} max relative error {:.3e} ({} coordinates)", r.target, r.max_relative_error, r.coordinates);
                worst = worst.max(r.max_relative_error);
            }
            let passed = reports.iter().all(|r| r.passed());
            println!("{} (max {:.3e})", if passed { "PASS" } else { "FAIL" }, worst);
            Ok(if passed { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
