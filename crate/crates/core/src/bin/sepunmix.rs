use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use sepunmix::experiments::{self, write_outputs, ExperimentConfig, ExperimentKind, Scale};
use sepunmix::Error;

const EXIT_INVARIANT: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_RUNTIME: u8 = 1;

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

/// Runs one experiment and writes `<out>/<experiment>/data.csv` and `manifest.json`.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// coherence, tail-decay, basin-ls, basin-vp, stability,
    /// convergence-region, traces or self-check
    experiment: String,
    /// JSON experiment configuration
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "desk")]
    scale: ScaleArg,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_INVARIANT),
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn run(args: &Args) -> sepunmix::Result<bool> {
    let kind = ExperimentKind::parse(&args.experiment)?;
    let scale = match args.scale {
        ScaleArg::Desk => Scale::Desk,
        ScaleArg::Paper => Scale::Paper,
    };
    let mut cfg = ExperimentConfig::load(&args.config)?.at_scale(scale);
    cfg.seed = args.seed;
    cfg.validate()?;
    let out = experiments::run(kind, &cfg)?;
    let dir = write_outputs(&args.out, kind, &cfg, scale, &out.data)?;
    if kind == ExperimentKind::SelfCheck {
        for r in out.data.rows.iter().filter(|r| r.quantity == "passed") {
            eprintln!("{:28} {}", r.config, if r.value == 1.0 { "ok" } else { "FAILED" });
        }
    }
    println!("{}", dir.display());
    Ok(out.passed)
}
