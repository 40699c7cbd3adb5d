//! Experiment driver: refinement loop, solves, spectra and CSV output.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;

use crate::assembly::{assemble_hypersingular, assemble_rhs_lshape, assemble_rhs_slit, NeumannData};
use crate::error::{Error, Result};
use crate::mesh::{estimate_and_mark, BoundaryGeometry, BoundaryMesh, MeshHierarchy};
use crate::precond::{build_preconditioner, PreconditionerKind};
use crate::solve::{direct_solve, gmres, spectrum, SolveReport};

/// `⟨f, u⟩` for the slit with `f = 1` and `u(x) = 2 √(1 - x²)`.
pub const SLIT_EXACT_ENERGY: f64 = std::f64::consts::PI;

/// Spectra are skipped above this many unknowns unless forced.
pub const SPECTRA_DOF_LIMIT: usize = 4000;

pub const CSV_HEADER: &str =
    "problem,precond,level,n_dofs,h_min,h_max,lambda_min,lambda_max,cond,iterations,converged,energy_error,time_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Lshape,
    LshapeArtificial,
    Slit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refinement {
    Uniform,
    Artificial,
    Adaptive,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Self::Lshape => "lshape",
            Self::LshapeArtificial => "lshape-artificial",
            Self::Slit => "slit",
        }
    }

    pub fn is_closed(self) -> bool {
        self != Self::Slit
    }

    fn initial_mesh(self) -> Result<BoundaryMesh> {
        let geometry = match self {
            Self::Lshape | Self::LshapeArtificial => BoundaryGeometry::lshape(),
            Self::Slit => BoundaryGeometry::slit(),
        };
        BoundaryMesh::initial(geometry, 1.0)
    }
}

impl Refinement {
    pub fn name(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Artificial => "artificial",
            Self::Adaptive => "adaptive",
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Refinement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Self::Lshape, Self::LshapeArtificial, Self::Slit]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown problem '{s}'")))
    }
}

impl FromStr for Refinement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Self::Uniform, Self::Artificial, Self::Adaptive]
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown refinement '{s}'")))
    }
}

/// Comma-separated preconditioner names.
pub fn parse_preconditioners(list: &str) -> Result<Vec<PreconditionerKind>> {
    let kinds = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>>>()?;
    if kinds.is_empty() {
        return Err(Error::InvalidParameter("no preconditioner requested".into()));
    }
    Ok(kinds)
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub refinement: Refinement,
    pub preconditioners: Vec<PreconditionerKind>,
    /// Finest level `L`; levels `0..=L` are computed.
    pub levels: usize,
    pub tol: f64,
    pub theta: f64,
    pub max_dofs: usize,
    pub spectra: bool,
    /// Compute spectra even above [`SPECTRA_DOF_LIMIT`].
    pub force_spectra: bool,
    pub out_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(problem: Problem, refinement: Refinement, levels: usize) -> Self {
        Self {
            problem,
            refinement,
            preconditioners: vec![
                PreconditionerKind::Lmld,
                PreconditionerKind::Gmld,
                PreconditionerKind::Hb,
                PreconditionerKind::Diag,
            ],
            levels,
            tol: 1e-8,
            theta: 0.5,
            max_dofs: usize::MAX,
            spectra: false,
            force_spectra: false,
            out_path: None,
        }
    }

    /// Checks ranges and applies the problem-implied refinement.
    pub fn validated(mut self) -> Result<Self> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidParameter(format!("tolerance {} outside (0, 1)", self.tol)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidParameter(format!("theta {} outside (0, 1]", self.theta)));
        }
        if self.preconditioners.is_empty() {
            return Err(Error::InvalidParameter("no preconditioner requested".into()));
        }
        if self.problem == Problem::LshapeArtificial {
            self.refinement = Refinement::Artificial;
        }
        if self.problem == Problem::Slit && self.refinement == Refinement::Artificial {
            return Err(Error::InvalidParameter("the slit has no corner for artificial refinement".into()));
        }
        Ok(self)
    }
}

/// One CSV row.
#[derive(Debug, Clone)]
pub struct ExperimentRow {
    pub problem: Problem,
    pub precond: PreconditionerKind,
    pub report: SolveReport,
    pub energy_error: Option<f64>,
    /// Assembly time of the level, for transparency; not part of the CSV.
    pub assembly_ms: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<ExperimentRow>,
    /// Set when the run stopped because the next level exceeded `max_dofs`.
    pub stopped_early: bool,
}

impl ExperimentOutcome {
    /// Rows of one preconditioner, in level order.
    pub fn series(&self, kind: PreconditionerKind) -> Vec<&ExperimentRow> {
        self.rows.iter().filter(|r| r.precond == kind).collect()
    }
}

/// `√(π - ⟨b, x⟩)`, the energy error of the slit Galerkin solution.
pub fn energy_error_slit(solution: &DVector<f64>, rhs: &DVector<f64>) -> Result<f64> {
    if solution.len() != rhs.len() {
        return Err(Error::DimensionMismatch {
            expected: rhs.len(),
            got: solution.len(),
        });
    }
    let energy = rhs.dot(solution);
    if energy > SLIT_EXACT_ENERGY + 1e-8 {
        return Err(Error::EnergyAboveExact {
            energy,
            exact: SLIT_EXACT_ENERGY,
        });
    }
    Ok((SLIT_EXACT_ENERGY - energy).max(0.0).sqrt())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl ExperimentRow {
    pub fn csv_line(&self) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{},{:e},{:e},{},{},{},{},{},{},{:.3}",
            self.problem,
            self.precond,
            r.level,
            r.n_dofs,
            r.h_min,
            r.h_max,
            fmt_opt(r.lambda_min),
            fmt_opt(r.lambda_max),
            fmt_opt(r.cond),
            r.iterations.map(|i| i.to_string()).unwrap_or_default(),
            r.converged,
            fmt_opt(self.energy_error),
            r.wall_time_ms,
        )
    }
}

pub fn to_csv(rows: &[ExperimentRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.csv_line());
    }
    out
}

/// Runs the level loop, calling `progress` after each row.
pub fn run_experiment_with<F: FnMut(&ExperimentRow)>(
    cfg: &ExperimentConfig,
    mut progress: F,
) -> Result<ExperimentOutcome> {
    let cfg = cfg.clone().validated()?;
    let closed = cfg.problem.is_closed();
    let data = closed.then(NeumannData::lshape);
    let mut hier = MeshHierarchy::new(cfg.problem.initial_mesh()?);
    let mut rows = Vec::new();
    let mut stopped_early = false;
    let mut marked: Vec<usize> = Vec::new();

    for level in 0..=cfg.levels {
        if level > 0 {
            match cfg.refinement {
                Refinement::Uniform => {
                    hier.refine_uniform()?;
                }
                Refinement::Artificial => {
                    hier.refine_artificial_corner()?;
                }
                Refinement::Adaptive => {
                    hier.refine(&marked)?;
                }
            }
        }
        let mesh = hier.finest();
        if mesh.num_dofs() > cfg.max_dofs {
            stopped_early = true;
            break;
        }

        let start = Instant::now();
        let mut system = assemble_hypersingular(mesh, closed)?;
        let rhs = match &data {
            Some(d) => assemble_rhs_lshape(mesh, d)?,
            None => assemble_rhs_slit(mesh)?,
        };
        system = system.with_rhs(rhs)?;
        let assembly_ms = start.elapsed().as_secs_f64() * 1e3;

        let (x_direct, _) = direct_solve(&system.matrix, &system.rhs)?;
        let energy_error = if closed {
            None
        } else {
            Some(energy_error_slit(&x_direct, &system.rhs)?)
        };
        if cfg.refinement == Refinement::Adaptive && level < cfg.levels {
            marked = estimate_and_mark(mesh, x_direct.as_slice(), cfg.theta)?;
        }

        let with_spectra = cfg.spectra && (cfg.force_spectra || mesh.num_dofs() <= SPECTRA_DOF_LIMIT);
        for &kind in &cfg.preconditioners {
            let precond = build_preconditioner(kind, &hier, &system.matrix)?;
            let (_, mut report) = gmres(&system.matrix, &precond, &system.rhs, cfg.tol, None)?;
            report.level = level;
            report.h_min = mesh.h_min();
            report.h_max = mesh.h_max();
            if with_spectra {
                let (lo, hi) = spectrum(&system.matrix, &precond)?;
                report.set_spectrum(lo, hi);
            }
            let row = ExperimentRow {
                problem: cfg.problem,
                precond: kind,
                report,
                energy_error,
                assembly_ms,
            };
            progress(&row);
            rows.push(row);
        }
    }

    if let Some(path) = &cfg.out_path {
        std::fs::write(path, to_csv(&rows))?;
    }
    Ok(ExperimentOutcome { rows, stopped_early })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    run_experiment_with(cfg, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slit_level_zero_is_one_by_one() {
        let mut cfg = ExperimentConfig::new(Problem::Slit, Refinement::Uniform, 0);
        cfg.preconditioners = PreconditionerKind::ALL.to_vec();
        cfg.spectra = true;
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 5);
        for row in &out.rows {
            assert_eq!(row.report.n_dofs, 1);
            assert!(row.report.converged);
            let kind = row.precond;
            if kind != PreconditionerKind::None {
                assert!((row.report.cond.unwrap() - 1.0).abs() < 1e-14, "{kind}");
            } else {
                assert_eq!(row.report.cond, Some(1.0));
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::new(Problem::LshapeArtificial, Refinement::Uniform, 2);
        cfg = cfg.validated().unwrap();
        assert_eq!(cfg.refinement, Refinement::Artificial);
        let mut bad = ExperimentConfig::new(Problem::Slit, Refinement::Uniform, 2);
        bad.tol = 1.0;
        assert!(bad.validated().is_err());
        let bad = ExperimentConfig::new(Problem::Slit, Refinement::Artificial, 2);
        assert!(bad.validated().is_err());
    }

    #[test]
    fn energy_error_bound() {
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let x = DVector::from_vec(vec![1.0, 1.0]);
        assert!((energy_error_slit(&x, &b).unwrap() - (SLIT_EXACT_ENERGY - 2.0).sqrt()).abs() < 1e-15);
        let x = DVector::from_vec(vec![2.0, 2.0]);
        assert!(matches!(energy_error_slit(&x, &b), Err(Error::EnergyAboveExact { .. })));
    }

    #[test]
    fn csv_rows_have_every_column() {
        let cfg = ExperimentConfig::new(Problem::Slit, Refinement::Uniform, 1);
        let out = run_experiment(&cfg).unwrap();
        let csv = to_csv(&out.rows);
        let cols = CSV_HEADER.split(',').count();
        for line in csv.lines() {
            assert_eq!(line.split(',').count(), cols, "{line}");
        }
        // spectra not requested: empty fields
        assert!(csv.lines().nth(1).unwrap().contains(",,,"));
    }

    #[test]
    fn preconditioner_list_parsing() {
        let kinds = parse_preconditioners("lmld,hb").unwrap();
        assert_eq!(kinds, vec![PreconditionerKind::Lmld, PreconditionerKind::Hb]);
        assert!(parse_preconditioners("").is_err());
        assert!(parse_preconditioners("lmld,xyz").is_err());
    }
}
