use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mfl_harness::persist::persist_study;
use mfl_harness::result::METRIC_NOTE;
use mfl_harness::studies::run_study;
use mfl_harness::{ExperimentConfig, HarnessError, StudyKind, OUT_DIR_ENV};

#[derive(Parser, Debug)]
#[command(name = "mfl", version, about = "Mean-field limit experiments: N-body, Hartree and hierarchy numerics")]
struct Cli {
    /// TOML configuration; defaults are used for everything it omits only if it is absent
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory (overrides the configuration and MFL_OUT_DIR)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// worker threads; 0 or absent means all cores
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// dotted `key=value` applied after the configuration file, repeatable
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// print the effective configuration and exit
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    study: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Hartree evolution diagnostics
    Hartree,
    /// N-body evolution diagnostics for every N
    Nbody,
    /// reduced density matrix distances to the Hartree products as N grows
    Convergence,
    /// full versus cutoff dynamics over the cutoff radii
    CutoffStudy,
    /// product versus regularized data over the smoothing parameters
    SmoothingStudy,
    /// finite and infinite hierarchy residuals
    HierarchyResidual,
    /// operator inequalities and trace calculus checks
    Opcheck,
}

impl Command {
    fn kind(self) -> StudyKind {
        match self {
            Command::Hartree => StudyKind::Hartree,
            Command::Nbody => StudyKind::Nbody,
            Command::Convergence => StudyKind::Convergence,
            Command::CutoffStudy => StudyKind::CutoffStudy,
            Command::SmoothingStudy => StudyKind::SmoothingStudy,
            Command::HierarchyResidual => StudyKind::HierarchyResidual,
            Command::Opcheck => StudyKind::Opcheck,
        }
    }
}

fn configure(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.study = cli.study.kind();
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(out) = &cli.out {
        return out.clone();
    }
    if !cfg.output_dir.as_os_str().is_empty() {
        return cfg.output_dir.clone();
    }
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("results"))
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let cfg = configure(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    }
    let dir = output_dir(cli, &cfg);
    println!("# {} | config {}", cfg.study.name(), &cfg.digest()[..16]);
    println!("# {METRIC_NOTE}");
    let result = run_study(&cfg)?;
    let files = persist_study(&result, &cfg, &dir)?;
    println!(
        "# {} rows in {:.1} s -> {} (+ {})",
        result.rows.len(),
        result.wall_clock_seconds,
        files.csv.display(),
        files.sidecar.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mfl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
