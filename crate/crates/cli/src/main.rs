use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psps_cli::commands::{self, Overrides};
use psps_cli::core::simulate::PolicyKind;
use psps_cli::{CliError, Exit};

/// Plan and evaluate wildfire de-energization switching policies.
#[derive(Parser)]
#[command(name = "psps", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Training seed for `train`, master evaluation seed otherwise.
    #[arg(long)]
    seed: Option<u64>,
    /// Solver backend: highs or enumeration.
    #[arg(long, env = psps_cli::config::SOLVER_ENV)]
    backend: Option<String>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            backend: self.backend.clone(),
            workers: self.workers,
            output_dir: self.out.clone(),
            ..Overrides::default()
        }
    }
}

#[derive(Subcommand)]
enum Verb {
    /// Train value functions for the DDU policy and the non-DDU baseline.
    Train(Common),
    /// Evaluate all policies on paired Monte Carlo scenarios.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Candidate law driving failures: worst_case, nominal or an index.
        #[arg(long)]
        eval_model: Option<String>,
        #[arg(long)]
        scenarios: Option<usize>,
    },
    /// Replay one scenario hour by hour.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "ddu")]
        policy: PolicyKind,
        #[arg(long, default_value_t = 0)]
        scenario: u64,
        #[arg(long)]
        eval_model: Option<String>,
    },
    /// Print the metrics table and training summaries.
    Report(Common),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Exit::Usage.code() as u8 } else { 0 });
        }
    };
    let mut out = std::io::stdout();
    let result: Result<Exit, CliError> = match &cli.verb {
        Verb::Train(c) => commands::train(&c.config, &c.overrides(), &mut out),
        Verb::Evaluate {
            common,
            eval_model,
            scenarios,
        } => {
            let ov = Overrides {
                eval_model: eval_model.clone(),
                n_scenarios: *scenarios,
                ..common.overrides()
            };
            commands::evaluate(&common.config, &ov, &mut out)
        }
        Verb::Simulate {
            common,
            policy,
            scenario,
            eval_model,
        } => {
            let ov = Overrides {
                eval_model: eval_model.clone(),
                ..common.overrides()
            };
            commands::simulate(&common.config, &ov, *policy, *scenario, &mut out)
        }
        Verb::Report(c) => commands::report(&c.config, &c.overrides(), &mut out),
    };
    match result {
        Ok(exit) => ExitCode::from(exit.code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit.code() as u8)
        }
    }
}
