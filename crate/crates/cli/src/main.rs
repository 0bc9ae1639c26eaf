use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use helmdg::check::{run_checks, DEFAULT_SEED};
use helmdg::config::{StudyConfig, StudyKind};
use helmdg::error::{DriverError, Result, EXIT_CONFIG, EXIT_NUMERICAL};
use helmdg::study::{run_adaptive, run_gamma_study, run_solve, run_stability_sweep, run_study, StudyOutput};

/// IPDG Helmholtz solver and study driver.
///
/// Exit status: 0 on success, 2 on configuration or input errors, 3 on
/// numerical failures. `HELMDG_THREADS` caps the worker threads.
#[derive(Parser)]
#[command(name = "helmdg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once on the initial mesh; writes solve.csv and estimator.csv.
    Solve { config: PathBuf },
    /// Run the study named by `[study] kind`.
    Study { config: PathBuf },
    /// Adaptive loop with Dörfler marking, whatever the configured kind.
    Adapt { config: PathBuf },
    /// Approximation-factor scaling under uniform refinement.
    Gamma { config: PathBuf },
    /// Frequency sweep on a fixed mesh.
    Sweep { config: PathBuf },
    /// Run the built-in invariant suite and print its log.
    Check {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("HELMDG_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| DriverError::Config(format!("HELMDG_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| DriverError::Config(format!("thread pool: {e}")))
}

fn study(config: &PathBuf, kind: Option<StudyKind>) -> Result<()> {
    let mut cfg = StudyConfig::load(config)?;
    if let Some(k) = kind {
        cfg.kind = k;
    }
    let out: StudyOutput = match kind {
        None => run_study(&cfg)?,
        Some(StudyKind::Adaptive) => run_adaptive(&cfg)?,
        Some(StudyKind::GammaBaScaling) => run_gamma_study(&cfg)?,
        Some(StudyKind::StabilitySweep) => run_stability_sweep(&cfg, cfg.resonances)?,
        Some(StudyKind::UniformConvergence) => run_study(&cfg)?,
    };
    out.write(&cfg.output_dir, cfg.kind.name())?;
    println!("wrote {}", cfg.output_dir.join(format!("{}.csv", cfg.kind.name())).display());
    Ok(())
}

fn run(cli: Cli) -> Result<i32> {
    init_threads()?;
    match cli.command {
        Command::Solve { config } => {
            let cfg = StudyConfig::load(&config)?;
            run_solve(&cfg)?.write(&cfg.output_dir, "solve")?;
            println!("wrote {}", cfg.output_dir.join("solve.csv").display());
        }
        Command::Study { config } => study(&config, None)?,
        Command::Adapt { config } => study(&config, Some(StudyKind::Adaptive))?,
        Command::Gamma { config } => study(&config, Some(StudyKind::GammaBaScaling))?,
        Command::Sweep { config } => study(&config, Some(StudyKind::StabilitySweep))?,
        Command::Check { seed } => {
            let rep = run_checks(seed)?;
            print!("{}", rep.log);
            return Ok(if rep.passed() { 0 } else { EXIT_NUMERICAL });
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("helmdg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
