//! `diabatic` command-line harness.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure, 1 for
//! I/O problems writing results. Failures print one JSON line on stderr.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Context, Failure};
use config::ExperimentConfig;
use diabatic::Cache;

#[derive(Parser, Debug)]
#[command(name = "diabatic", version, about = "Closed-system annealing experiments on engineered MWIS instances")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Result cache directory; overrides `cache` in the config.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Record that the run is fully deterministic. No command draws random
    /// numbers, so this only marks the provenance header.
    #[arg(long, global = true)]
    seedless: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Low-lying spectrum on an s grid and its gap minima.
    Spectrum,
    /// Optimal catalyst strength per instance.
    Jstar,
    /// Final GS fidelity over t_a × ΔJxx.
    Grid,
    /// Peak widths and decay rates per instance size.
    Scaling,
    /// Numeric fidelities against the Landau-Zener prediction.
    Lz,
    /// Second-order perturbative crossing prediction.
    PcPredict,
    /// Brute-force cross-checks of the reduced model.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Jstar => "jstar",
            Command::Grid => "grid",
            Command::Scaling => "scaling",
            Command::Lz => "lz",
            Command::PcPredict => "pc-predict",
            Command::Validate => "validate",
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let config_path = cli.config.as_ref().ok_or_else(|| Failure::Config("--config is required".into()))?;
    let cfg = ExperimentConfig::load(config_path)?;
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::Config(format!("cannot size the thread pool: {e}")))?;
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.raw.out.as_ref().map(|p| cfg.base_dir.join(p)))
        .unwrap_or_else(|| PathBuf::from("out").join(cli.command.name()));
    let cache_dir = cli.cache.clone().or_else(|| cfg.raw.cache.as_ref().map(|p| cfg.base_dir.join(p)));
    let cache = cache_dir.map(Cache::new).transpose()?;
    let ctx = Context {
        cfg,
        cache,
        seedless: cli.seedless,
    };

    let (outputs, passed) = match cli.command {
        Command::Spectrum => (commands::spectrum(&ctx)?, true),
        Command::Jstar => (commands::jstar(&ctx)?, true),
        Command::Grid => (commands::grid(&ctx)?, true),
        Command::Scaling => (commands::scaling(&ctx)?, true),
        Command::Lz => (commands::lz(&ctx)?, true),
        Command::PcPredict => (commands::pc_predict(&ctx)?, true),
        Command::Validate => commands::validate(&ctx)?,
    };
    let written = outputs.commit(&out_dir).map_err(|e| Failure::Io(format!("writing to {}: {e}", out_dir.display())))?;
    for p in written {
        println!("{}", p.display());
    }
    if passed {
        Ok(())
    } else {
        Err(Failure::Numerical("validation checks failed; see validate.csv".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let line = serde_json::json!({
                "error": f.kind(),
                "exit_code": f.exit_code(),
                "command": cli.command.name(),
                "message": f.message(),
            });
            eprintln!("{line}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
