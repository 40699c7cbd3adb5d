use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use aswarz::harness::{parse_preconditioners, run_experiment_with, ExperimentConfig, Problem, Refinement};

/// Condition numbers and GMRES counts of multilevel diagonal preconditioners
/// for the hypersingular integral equation.
#[derive(Debug, Parser)]
#[command(name = "aswarz", version)]
struct Cli {
    /// lshape, lshape-artificial or slit
    #[arg(long, default_value = "slit")]
    problem: String,

    /// uniform, artificial or adaptive
    #[arg(long, default_value = "uniform")]
    refine: String,

    /// Comma-separated subset of lmld,gmld,hb,diag,none
    #[arg(long, default_value = "lmld,gmld,hb,diag")]
    precond: String,

    /// Finest level L; levels 0..=L are computed
    #[arg(long, default_value_t = 6)]
    levels: usize,

    /// Relative GMRES tolerance on the preconditioned residual
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,

    /// Dörfler fraction for adaptive refinement
    #[arg(long, default_value_t = 0.5)]
    theta: f64,

    /// Stop before any level with more unknowns than this
    #[arg(long)]
    max_dofs: Option<usize>,

    /// Compute extreme eigenvalues and condition numbers
    #[arg(long)]
    spectra: bool,

    /// Compute spectra even above 4000 unknowns
    #[arg(long)]
    force_spectra: bool,

    /// CSV output path (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("ASWARZ_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| format!("ASWARZ_THREADS must be a positive integer, got '{value}'"))?;
    if n == 0 {
        return Err("ASWARZ_THREADS must be a positive integer, got 0".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(cli: Cli) -> aswarz::Result<bool> {
    let problem: Problem = cli.problem.parse()?;
    let refinement: Refinement = cli.refine.parse()?;
    let mut cfg = ExperimentConfig::new(problem, refinement, cli.levels);
    cfg.preconditioners = parse_preconditioners(&cli.precond)?;
    cfg.tol = cli.tol;
    cfg.theta = cli.theta;
    cfg.max_dofs = cli.max_dofs.unwrap_or(usize::MAX);
    cfg.spectra = cli.spectra || cli.force_spectra;
    cfg.force_spectra = cli.force_spectra;
    cfg.out_path = cli.out.clone();

    let outcome = run_experiment_with(&cfg, |row| {
        let r = &row.report;
        eprintln!(
            "level {:>3}  N {:>6}  {:<5} iterations {:>4}  true residual {:.2e}  cond {}  assembly {:.1} ms  solve {:.1} ms",
            r.level,
            r.n_dofs,
            row.precond.name(),
            r.iterations.unwrap_or(0),
            r.true_residual,
            r.cond.map(|c| format!("{c:.4e}")).unwrap_or_else(|| "-".into()),
            row.assembly_ms,
            r.wall_time_ms,
        );
    })?;
    if cli.out.is_none() {
        print!("{}", aswarz::harness::to_csv(&outcome.rows));
    }
    if outcome.stopped_early {
        eprintln!("stopped early: next level exceeds {} unknowns", cfg.max_dofs);
    }
    Ok(!outcome.stopped_early)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
