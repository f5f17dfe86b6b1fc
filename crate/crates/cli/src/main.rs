use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use monoforge::filter::BudgetUnit;
use monoforge::pipeline::{plan_run, run_pipeline, PipelineConfig, RunOptions};
use monoforge::Error;

mod stages;

/// Exit status for configuration and validation errors.
const EXIT_CONFIG: u8 = 2;
/// Exit status when a stage fails after work has started.
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "monoforge", version, about = "Synthetic monolingual corpus pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured pipeline end to end.
    Run(RunArgs),
    /// Normalize raw documents into a clean manifest.
    Clean(stages::CleanArgs),
    /// Train a language-ID model or filter a manifest with one.
    Lid {
        #[command(subcommand)]
        cmd: stages::LidCmd,
    },
    /// Drop documents that match a toxic word list.
    Toxicity(stages::ToxicityArgs),
    /// Remove repeated paragraphs.
    Dedup(stages::DedupArgs),
    /// Merge deduplicated manifests of one language.
    Merge(stages::MergeArgs),
    Tokenizer {
        #[command(subcommand)]
        cmd: stages::TokenizerCmd,
    },
    Lm {
        #[command(subcommand)]
        cmd: stages::LmCmd,
    },
    /// Translate a merged manifest into the target language.
    Translate(stages::TranslateArgs),
    Filter {
        #[command(subcommand)]
        cmd: stages::FilterCmd,
    },
    /// Compute a token budget, optionally checking a manifest against it.
    Budget(stages::BudgetArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `run.out_dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Skip stages completed by an earlier run of the same config.
    #[arg(long)]
    resume: bool,
    /// Validate the config and print the plan without running anything.
    #[arg(long)]
    dry_run: bool,
    /// Stop after this stage.
    #[arg(long)]
    until: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Unit {
    Word,
    Bpe,
}

impl From<Unit> for BudgetUnit {
    fn from(u: Unit) -> Self {
        match u {
            Unit::Word => BudgetUnit::Word,
            Unit::Bpe => BudgetUnit::Bpe,
        }
    }
}

/// A failure tagged with the exit status it maps to.
pub struct Failure {
    code: u8,
    error: Error,
}

impl Failure {
    pub fn config(error: Error) -> Self {
        Self { code: EXIT_CONFIG, error }
    }
}

impl<E: Into<Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = match error {
            Error::Config(_) => EXIT_CONFIG,
            _ => EXIT_STAGE,
        };
        Self { code, error }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

pub fn print_json<T: serde::Serialize>(value: &T) -> CliResult {
    println!("{}", serde_json::to_string_pretty(value).map_err(Error::from)?);
    Ok(())
}

fn run(args: RunArgs) -> CliResult {
    let mut cfg = PipelineConfig::load(&args.config).map_err(Failure::config)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(dir) = args.out_dir {
        cfg.run.out_dir = dir;
    }
    if args.until.is_some() {
        cfg.run.until = args.until;
    }
    if args.dry_run {
        let plan = plan_run(&cfg, args.resume).map_err(Failure::config)?;
        return print_json(&plan);
    }
    let opts = RunOptions {
        resume: args.resume,
        ..Default::default()
    };
    let report = run_pipeline(&cfg, &opts)?;
    print_json(&report)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Clean(a) => stages::clean(a),
        Command::Lid { cmd } => stages::lid(cmd),
        Command::Toxicity(a) => stages::toxicity(a),
        Command::Dedup(a) => stages::dedup(a),
        Command::Merge(a) => stages::merge(a),
        Command::Tokenizer { cmd } => stages::tokenizer(cmd),
        Command::Lm { cmd } => stages::lm(cmd),
        Command::Translate(a) => stages::translate(a),
        Command::Filter { cmd } => stages::filter(cmd),
        Command::Budget(a) => stages::budget(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
