//! Config-driven pipeline commands over `perspectives-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use config::{Overrides, PipelineConfig};
pub use error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Prep,
    Train,
    Eval,
    Homophily,
    Report,
    /// Every stage in order; `synth` only when the config has a `[synth]` section.
    Run,
}

pub fn execute(cmd: Command, cfg: &PipelineConfig, dump_plan: bool) -> CliResult<()> {
    match cmd {
        Command::Synth => commands::cmd_synth(cfg),
        Command::Prep => commands::cmd_prep(cfg).map(drop),
        Command::Train => commands::cmd_train(cfg, dump_plan).map(drop),
        Command::Eval => commands::cmd_eval(cfg).map(drop),
        Command::Homophily => commands::cmd_homophily(cfg).map(drop),
        Command::Report => {
            let out = report::cmd_report(cfg)?;
            for g in &out.gaps {
                eprintln!("warning: {g}");
            }
            Ok(())
        }
        Command::Run => {
            if cfg.synth.is_some() {
                commands::cmd_synth(cfg)?;
            }
            commands::cmd_prep(cfg)?;
            commands::cmd_train(cfg, dump_plan)?;
            commands::cmd_eval(cfg)?;
            if cfg.train.variants.contains(&perspectives_core::model::Variant::SocioContrastive) {
                commands::cmd_homophily(cfg)?;
            }
            execute(Command::Report, cfg, dump_plan)
        }
    }
}
