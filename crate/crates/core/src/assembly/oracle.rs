//! Verification oracle for the Galerkin matrix.
//!
//! Computes segment-pair log integrals as iterated one-dimensional adaptive
//! Gauss integrals, splitting the inner integral at the foot point of the
//! outer evaluation point and the outer integral where the other segment's
//! endpoints project. Every piece is integrated after the substitution
//! `s = a + (b - a) φ(u)`, `φ(u) = u³(10 - 15u + 6u²)`, whose derivative
//! vanishes to second order at both ends and flattens the logarithmic endpoint
//! behaviour. Nothing here uses the closed-form antiderivatives.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryMesh, Point};

use super::quadrature::Adaptive;
use super::{hat_derivatives, SINGLE_LAYER_SCALE};

/// `f` receives the nearer piece end and the offset from it separately, so
/// that distances to a breakpoint keep full relative precision.
fn smoothed<F: FnMut(f64, f64) -> f64>(rule: &Adaptive, a: f64, b: f64, breaks: &[f64], f: &mut F) -> Result<f64> {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = 0.0;
    let mut lo = a;
    for &hi in cuts.iter().chain(std::iter::once(&b)) {
        let h = hi - lo;
        let phi = |u: f64| u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
        let mut g = |u: f64| {
            let dphi = 30.0 * u * u * (1.0 - u) * (1.0 - u);
            if dphi == 0.0 {
                0.0
            } else if u <= 0.5 {
                f(lo, h * phi(u)) * h * dphi
            } else {
                f(hi, -h * phi(1.0 - u)) * h * dphi
            }
        };
        total += rule.integrate(0.0, 1.0, &mut g)?;
        lo = hi;
    }
    Ok(total)
}

/// `∫_A ∫_B log|x - y|` by nested adaptive quadrature.
pub fn oracle_log_integral(a0: Point, a1: Point, b0: Point, b1: Point, max_depth: usize) -> Result<f64> {
    let la = (a1 - a0).norm();
    let lb = (b1 - b0).norm();
    let u = (a1 - a0) / la;
    let v = (b1 - b0) / lb;
    let inner_rule = Adaptive {
        abs_tol: 1e-16 * lb,
        rel_tol: 1e-14,
        max_depth,
    };
    let outer_rule = Adaptive {
        abs_tol: 1e-15 * la * lb,
        rel_tol: 1e-13,
        max_depth,
    };

    let project_a = |p: Point| (p - a0).dot(&u).clamp(0.0, la);
    let mut outer_breaks = vec![project_a(b0), project_a(b1)];
    // closest approach of B's line to A, for nearly touching pairs
    let cross = u.x * v.y - u.y * v.x;
    if cross.abs() > 1e-12 {
        let w = b0 - a0;
        let s = (w.x * v.y - w.y * v.x) / cross;
        outer_breaks.push(s.clamp(0.0, la));
    }

    let mut inner_failure = None;
    let mut outer = |lo: f64, off: f64| {
        let x = a0 + u * (lo + off);
        let foot = (x - b0).dot(&v).clamp(0.0, lb);
        let mut f = |lo: f64, off: f64| ((x - (b0 + v * lo)) - v * off).norm().ln();
        match smoothed(&inner_rule, 0.0, lb, &[foot], &mut f) {
            Ok(val) => val,
            Err(Error::QuadratureNotConverged { estimate }) => {
                inner_failure = Some(estimate);
                estimate
            }
            Err(_) => f64::NAN,
        }
    };
    let value = smoothed(&outer_rule, 0.0, la, &outer_breaks, &mut outer)?;
    if inner_failure.is_some() {
        return Err(Error::QuadratureNotConverged { estimate: value });
    }
    Ok(value)
}

/// One Galerkin entry `⟨V η_k', η_j'⟩ (+ ⟨η_k,1⟩⟨η_j,1⟩ if `stabilize`)`
/// for free-node indices `j`, `k`.
pub fn quadrature_oracle_entry(
    mesh: &BoundaryMesh,
    j: usize,
    k: usize,
    stabilize: bool,
    max_depth: usize,
) -> Result<f64> {
    let n = mesh.num_dofs();
    for idx in [j, k] {
        if idx >= n {
            return Err(Error::DimensionMismatch { expected: n, got: idx });
        }
    }
    let zj = mesh.free_nodes()[j];
    let zk = mesh.free_nodes()[k];
    let mut value = 0.0;
    for (ej, cj) in hat_derivatives(mesh, zj) {
        for (ek, ck) in hat_derivatives(mesh, zk) {
            let (a0, a1) = mesh.element_endpoints(ej);
            let (b0, b1) = mesh.element_endpoints(ek);
            value += cj * ck * SINGLE_LAYER_SCALE * oracle_log_integral(a0, a1, b0, b1, max_depth)?;
        }
    }
    if stabilize {
        value += 0.5 * mesh.patch_length(zj) * 0.5 * mesh.patch_length(zk);
    }
    Ok(value)
}

/// The full Galerkin matrix from the oracle, computing each element pair once.
pub fn quadrature_oracle_matrix(mesh: &BoundaryMesh, stabilize: bool, max_depth: usize) -> Result<DMatrix<f64>> {
    let m = mesh.num_elements();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let (a0, a1) = mesh.element_endpoints(i);
            (i..m)
                .map(|j| {
                    let (b0, b1) = mesh.element_endpoints(j);
                    oracle_log_integral(a0, a1, b0, b1, max_depth).map(|v| SINGLE_LAYER_SCALE * v)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let pair = |a: usize, b: usize| {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        rows[lo][hi - lo]
    };

    let n = mesh.num_dofs();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let zj = mesh.free_nodes()[j];
        for k in 0..n {
            let zk = mesh.free_nodes()[k];
            let mut value = 0.0;
            for (ej, cj) in hat_derivatives(mesh, zj) {
                for (ek, ck) in hat_derivatives(mesh, zk) {
                    value += cj * ck * pair(ej, ek);
                }
            }
            if stabilize {
                value += 0.25 * mesh.patch_length(zj) * mesh.patch_length(zk);
            }
            out[(j, k)] = value;
        }
    }
    Ok(out)
}
