use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use log::info;
use zrplab_core::experiments::{run_experiment, ExperimentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    HydroCompare,
    LocalEquilibrium,
    CesaroMarginal,
    Convergence,
    CurrentChecks,
    Condensation,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::HydroCompare => "hydro_compare",
            Kind::LocalEquilibrium => "local_equilibrium",
            Kind::CesaroMarginal => "cesaro_marginal",
            Kind::Convergence => "convergence",
            Kind::CurrentChecks => "current_checks",
            Kind::Condensation => "condensation",
        }
    }
}

/// Run a zero-range process experiment and write report.json plus CSV tables.
#[derive(Debug, Parser)]
#[command(name = "zrplab", version)]
struct Args {
    /// Experiment kind; must match the config.
    experiment: Kind,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Replica count (overrides the config).
    #[arg(long)]
    replicas: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn run(args: &Args) -> Result<bool> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg = ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    if cfg.kind() != args.experiment.name() {
        bail!("config describes `{}`, not `{}`", cfg.kind(), args.experiment.name());
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.replicas {
        cfg.replicas = r;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = args.threads {
        pool = pool.num_threads(k);
    }
    let pool = pool.build().context("building the thread pool")?;
    info!("{} with seed {} and {} replicas on {} threads", cfg.kind(), cfg.seed, cfg.replicas, pool.current_num_threads());

    let out = pool.install(|| run_experiment(&cfg))?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    fs::write(args.out.join("config.json"), cfg.to_json())?;
    fs::write(args.out.join("report.json"), serde_json::to_string_pretty(&out.report)?)?;
    for t in &out.tables {
        fs::write(args.out.join(&t.name), &t.csv)?;
    }
    for c in &out.report.checks {
        info!("{} {}: {} in [{}, {}]", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.lower, c.upper);
    }
    info!("wrote {} files to {}", out.tables.len() + 2, args.out.display());
    Ok(out.report.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
