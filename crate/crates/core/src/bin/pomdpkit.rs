use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pomdpkit::scenario::{load_config, run_scenario, write_artifacts, ScenarioError};

/// Run a filtering, detection, game or search scenario from a JSON config.
#[derive(Parser, Debug)]
#[command(name = "pomdpkit", version)]
struct Args {
    /// Scenario config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Changes wall time only.
    #[arg(long)]
    threads: Option<usize>,
}

fn run(args: Args) -> Result<(), ScenarioError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    let artifacts = run_scenario(&cfg)?;
    let manifest = write_artifacts(&cfg.out_dir, &cfg, &artifacts)?;
    for f in &manifest.files {
        println!("{}  {}", f.sha256, cfg.out_dir.join(&f.name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    #[cfg(feature = "parallel")]
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("pomdpkit: cannot set thread count: {e}");
            return ExitCode::from(2);
        }
    }
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pomdpkit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
