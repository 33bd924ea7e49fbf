use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use perihom::config::{Mode, RunConfig};
use perihom::harness::{self, EXIT_CONFIG, EXIT_INVARIANT};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Cell,
    Micro,
    Macro,
    Converge,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Cell => Mode::Cell,
            ModeArg::Micro => Mode::Micro,
            ModeArg::Macro => Mode::Macro,
            ModeArg::Converge => Mode::Converge,
        }
    }
}

/// Cell problems, pore-scale and upscaled thermo-diffusion with aggregation.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    mode: ModeArg,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Exit with status 4 when an invariant audit fails.
    #[arg(long)]
    strict: bool,
    /// Worker threads (0 picks the machine default).
    #[arg(long, default_value_t = 0)]
    parallel: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.parallel > 0 {
        harness::configure_threads(cli.parallel);
    }
    let mode: Mode = cli.mode.into();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let base = cli.config.parent().map(PathBuf::from).unwrap_or_default();
    match harness::run(mode, &cfg, &text, &base, &cli.out) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for row in &outcome.converge {
                println!("eps={} error={:e} ratio={}", row.epsilon, row.error, row.ratio);
            }
            if let Some(t) = &outcome.tensors {
                if mode == Mode::Cell {
                    print!("{}", t.report());
                }
            }
            let violations = outcome.violations();
            for v in &violations {
                eprintln!("violation: {v}");
            }
            println!("{} files written to {}", outcome.files.len(), cli.out.display());
            if cli.strict && !violations.is_empty() {
                return ExitCode::from(EXIT_INVARIANT as u8);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::exit_code(&e) as u8)
        }
    }
}
