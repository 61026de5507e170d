use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use feff_cli::{error_line, exit_code, run_command, Command, Verb};
use feff_core::statics::SweepParameter;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VerbArg {
    Validate,
    Significance,
    Solve,
    Sweep,
    Liquidation,
    Simulate,
    ReproducePaper,
}

impl From<VerbArg> for Verb {
    fn from(v: VerbArg) -> Self {
        match v {
            VerbArg::Validate => Verb::Validate,
            VerbArg::Significance => Verb::Significance,
            VerbArg::Solve => Verb::Solve,
            VerbArg::Sweep => Verb::Sweep,
            VerbArg::Liquidation => Verb::Liquidation,
            VerbArg::Simulate => Verb::Simulate,
            VerbArg::ReproducePaper => Verb::ReproducePaper,
        }
    }
}

/// Fire-sale externalities: significance, efficient holdings, sweeps and
/// simulations. Outputs are written as files under the output directory.
#[derive(Debug, Parser)]
#[command(name = "feff", version)]
struct Cli {
    #[arg(value_enum)]
    verb: VerbArg,

    /// Builtin scenario (L, I, H, B) or path to a JSON scenario file.
    #[arg(short, long, default_value = "L")]
    scenario: String,

    #[arg(short, long, default_value = "out")]
    output_dir: PathBuf,

    /// Seed for every random draw; defaults to the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Dotted-path override such as `assets.sigma2.0=0.3`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Monte Carlo worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,

    /// Sweep a single parameter: sigma1_sq, mu2 or v2.
    #[arg(long)]
    parameter: Option<SweepParameter>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = Command {
        verb: cli.verb.into(),
        scenario: cli.scenario,
        output_dir: cli.output_dir,
        seed: cli.seed,
        overrides: cli.overrides,
        workers: cli.workers,
        parameter: cli.parameter,
    };
    match run_command(&cmd) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {}", error_line(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
