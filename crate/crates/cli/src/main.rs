use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use perspectives_cli::{execute, CliError, Command, Overrides, PipelineConfig};
use perspectives_core::model::Variant;

#[derive(Parser)]
#[command(name = "perspectives", version, about = "Per-annotator perspective modelling pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Pipeline configuration (TOML).
    #[arg(long, short, global = true, default_value = "perspectives.toml")]
    config: PathBuf,
    /// Train a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Train a single variant.
    #[arg(long, global = true, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Contrastive loss weight.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Worker threads for seeds and bootstrap iterations.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write each seed's epoch batch plans as plan.json.
    #[arg(long, global = true)]
    dump_plan: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Generate a synthetic corpus from the [synth] section.
    Synth,
    /// Filter and split the annotations.
    Prep,
    /// Train every configured variant over every seed.
    Train,
    /// Score checkpoints on the test split.
    Eval,
    /// Nearest-neighbour homophily of learned annotator representations.
    Homophily,
    /// Consolidated markdown report.
    Report,
    /// All stages in order.
    Run,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse::<Variant>().map_err(|e| e.to_string())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    cfg.apply(&Overrides {
        seed: cli.seed,
        variant: cli.variant,
        lambda: cli.lambda,
    })?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cmd = match cli.command {
        Cmd::Synth => Command::Synth,
        Cmd::Prep => Command::Prep,
        Cmd::Train => Command::Train,
        Cmd::Eval => Command::Eval,
        Cmd::Homophily => Command::Homophily,
        Cmd::Report => Command::Report,
        Cmd::Run => Command::Run,
    };
    execute(cmd, &cfg, cli.dump_plan)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
