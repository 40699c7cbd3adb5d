//! Left-preconditioned GMRES, Cholesky solves and extreme eigenvalues of
//! preconditioned operators.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::precond::{preconditioned_operator, Preconditioner};

/// Outcome of one solve; the mesh-dependent fields are filled by the caller.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    pub level: usize,
    pub n_dofs: usize,
    pub h_min: f64,
    pub h_max: f64,
    /// GMRES iterations; `None` for the direct solver.
    pub iterations: Option<usize>,
    pub converged: bool,
    /// `‖B⁻¹(b - A x_k)‖ / ‖B⁻¹ b‖` for `k = 0, 1, ...`.
    pub residual_history: Vec<f64>,
    /// `‖b - A x‖ / ‖b‖` of the returned solution.
    pub true_residual: f64,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub cond: Option<f64>,
    pub wall_time_ms: f64,
}

impl SolveReport {
    pub fn set_spectrum(&mut self, lambda_min: f64, lambda_max: f64) {
        self.lambda_min = Some(lambda_min);
        self.lambda_max = Some(lambda_max);
        self.cond = Some(lambda_max / lambda_min);
    }
}

fn check_system(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<()> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: matrix.ncols(),
        });
    }
    if rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    Ok(())
}

fn relative_residual(matrix: &DMatrix<f64>, rhs: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let bn = rhs.norm();
    let r = rhs - matrix * x;
    if bn == 0.0 {
        r.norm()
    } else {
        r.norm() / bn
    }
}

/// Givens rotation `(c, s)` with `c a + s b = r`, `-s a + c b = 0`.
fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// Full GMRES on `B⁻¹ A x = B⁻¹ b` from `x_0 = 0`.
///
/// Stops once the preconditioned relative residual drops to `tol`, or after
/// `max_iter` steps (default `4 N`) with `converged = false`.
pub fn gmres(
    matrix: &DMatrix<f64>,
    precond: &Preconditioner,
    rhs: &DVector<f64>,
    tol: f64,
    max_iter: Option<usize>,
) -> Result<(DVector<f64>, SolveReport)> {
    check_system(matrix, rhs)?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    let op = preconditioned_operator(precond, matrix)?;
    let n = matrix.nrows();
    let max_iter = max_iter.unwrap_or(4 * n);
    let start = Instant::now();

    let r0 = precond.apply_inverse(rhs)?;
    let beta = r0.norm();
    let mut report = SolveReport {
        n_dofs: n,
        residual_history: vec![1.0],
        ..SolveReport::default()
    };
    if beta == 0.0 {
        report.iterations = Some(0);
        report.converged = true;
        report.residual_history = vec![0.0];
        report.true_residual = relative_residual(matrix, rhs, &DVector::zeros(n));
        report.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
        return Ok((DVector::zeros(n), report));
    }

    let mut basis: Vec<DVector<f64>> = vec![r0 / beta];
    // columns of the Hessenberg matrix, already rotated to upper triangular form
    let mut hess: Vec<Vec<f64>> = Vec::new();
    let mut rotations: Vec<(f64, f64)> = Vec::new();
    let mut g = vec![beta];
    let mut converged = false;

    for k in 0..max_iter {
        let mut w = op.apply(&basis[k])?;
        let mut h = vec![0.0; k + 2];
        for _ in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let c = v.dot(&w);
                w.axpy(-c, v, 1.0);
                h[i] += c;
            }
        }
        let h_next = w.norm();
        h[k + 1] = h_next;

        for (i, &(c, s)) in rotations.iter().enumerate() {
            let (a, b) = (h[i], h[i + 1]);
            h[i] = c * a + s * b;
            h[i + 1] = -s * a + c * b;
        }
        let (c, s) = givens(h[k], h[k + 1]);
        h[k] = c * h[k] + s * h[k + 1];
        h[k + 1] = 0.0;
        rotations.push((c, s));
        let gk = g[k];
        g[k] = c * gk;
        g.push(-s * gk);
        hess.push(h);

        let rel = g[k + 1].abs() / beta;
        report.residual_history.push(rel);
        if rel <= tol || h_next == 0.0 {
            converged = rel <= tol || h_next == 0.0;
            break;
        }
        basis.push(w / h_next);
    }

    // back substitution on the rotated Hessenberg system
    let m = hess.len();
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = g[i];
        for j in i + 1..m {
            s -= hess[j][i] * y[j];
        }
        y[i] = s / hess[i][i];
    }
    let mut x = DVector::zeros(n);
    for (v, &yi) in basis.iter().zip(&y) {
        x.axpy(yi, v, 1.0);
    }

    report.iterations = Some(m);
    report.converged = converged;
    report.true_residual = relative_residual(matrix, rhs, &x);
    report.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((x, report))
}

/// Cholesky solve of an SPD system.
pub fn direct_solve(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, SolveReport)> {
    check_system(matrix, rhs)?;
    let start = Instant::now();
    let chol = matrix.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let x = chol.solve(rhs);
    let report = SolveReport {
        n_dofs: matrix.nrows(),
        converged: true,
        true_residual: relative_residual(matrix, rhs, &x),
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        ..SolveReport::default()
    };
    Ok((x, report))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Extreme eigenvalues `(λ_min, λ_max)` of `B⁻¹ A`, computed as those of the
/// symmetric matrix `S A S` with `S = (B⁻¹)^{1/2}`.
pub fn spectrum(matrix: &DMatrix<f64>, precond: &Preconditioner) -> Result<(f64, f64)> {
    preconditioned_operator(precond, matrix)?;
    let n = matrix.nrows();
    if n == 0 {
        return Err(Error::InvalidParameter("empty system".into()));
    }
    let binv = symmetrize(&precond.dense_inverse());
    let eig = binv.symmetric_eigen();
    let smallest = eig.eigenvalues.min();
    if !(smallest > 0.0) {
        return Err(Error::IndefinitePreconditioner(smallest));
    }
    let sqrt_vals = eig.eigenvalues.map(f64::sqrt);
    let s = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    let sas = symmetrize(&(&s * matrix * &s));
    let vals = sas.symmetric_eigenvalues();
    Ok((vals.min(), vals.max()))
}
