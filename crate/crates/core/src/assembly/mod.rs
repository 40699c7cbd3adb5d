//! Galerkin discretisation of the hypersingular operator with piecewise
//! linear hat functions.
//!
//! Entries are computed through `⟨W u, v⟩ = ⟨V u', v'⟩`, where `'` is the
//! arclength derivative along the curve orientation and `V` is the
//! single-layer operator with kernel `-log|x - y| / 2π`. On an open arc this
//! holds for functions vanishing at the tips, which is the case for the hats
//! of interior nodes.

mod logint;
mod oracle;
pub mod quadrature;
mod rhs;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::BoundaryMesh;

pub use logint::{log_integral, log_integral_closed_form, log_integral_gauss, segment_distance};
pub use oracle::{oracle_log_integral, quadrature_oracle_entry, quadrature_oracle_matrix};
pub use rhs::{
    assemble_rhs_lshape, assemble_rhs_slit, lshape_potential, lshape_potential_gradient, NeumannData,
};

/// `-1/2π`, the factor in front of the logarithmic kernel.
pub const SINGLE_LAYER_SCALE: f64 = -1.0 / (2.0 * std::f64::consts::PI);

/// Dense Galerkin matrix and load vector on one mesh.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub stabilized: bool,
    /// `⟨η_j, 1⟩` for every free node.
    pub mass: DVector<f64>,
}

impl GalerkinSystem {
    pub fn num_dofs(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn with_rhs(mut self, rhs: DVector<f64>) -> Result<Self> {
        if rhs.len() != self.num_dofs() {
            return Err(Error::DimensionMismatch {
                expected: self.num_dofs(),
                got: rhs.len(),
            });
        }
        self.rhs = rhs;
        Ok(self)
    }
}

/// Arclength derivatives of the hat at node `z` on its (at most two) elements.
pub(crate) fn hat_derivatives(mesh: &BoundaryMesh, z: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
    let [ending, starting] = mesh.node_elements(z);
    ending
        .map(|e| (e, 1.0 / mesh.element_len(e)))
        .into_iter()
        .chain(starting.map(|e| (e, -1.0 / mesh.element_len(e))))
}

/// `-1/2π ∫_T ∫_T' log|x - y|` for every element pair, as an `M × M` matrix.
pub fn single_layer_elements(mesh: &BoundaryMesh) -> DMatrix<f64> {
    let m = mesh.num_elements();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let (a0, a1) = mesh.element_endpoints(i);
            (i..m)
                .map(|j| {
                    let (b0, b1) = mesh.element_endpoints(j);
                    SINGLE_LAYER_SCALE * log_integral(a0, a1, b0, b1)
                })
                .collect()
        })
        .collect();
    let mut g = DMatrix::zeros(m, m);
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            g[(i, i + off)] = v;
            g[(i + off, i)] = v;
        }
    }
    g
}

/// `⟨η_j, 1⟩_Γ` per free node.
pub fn mass_vector(mesh: &BoundaryMesh) -> DVector<f64> {
    DVector::from_iterator(
        mesh.num_dofs(),
        mesh.free_nodes().iter().map(|&z| 0.5 * mesh.patch_length(z)),
    )
}

/// The matrix `⟨W η_k, η_j⟩ (+ ⟨η_k,1⟩⟨η_j,1⟩)` over the free nodes of `mesh`.
/// The returned system has a zero right-hand side.
pub fn assemble_hypersingular(mesh: &BoundaryMesh, stabilize: bool) -> Result<GalerkinSystem> {
    if let Some(e) = mesh.element_lengths().iter().position(|&h| !(h > 0.0)) {
        return Err(Error::DegenerateElement(e));
    }
    let g = single_layer_elements(mesh);
    let n = mesh.num_dofs();
    let mass = mass_vector(mesh);
    let derivs: Vec<Vec<(usize, f64)>> = mesh
        .free_nodes()
        .iter()
        .map(|&z| hat_derivatives(mesh, z).collect())
        .collect();

    let mut matrix = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in j..n {
            let mut v = 0.0;
            for &(ej, cj) in &derivs[j] {
                for &(ek, ck) in &derivs[k] {
                    v += cj * ck * g[(ej, ek)];
                }
            }
            if stabilize {
                v += mass[j] * mass[k];
            }
            matrix[(j, k)] = v;
            matrix[(k, j)] = v;
        }
    }
    Ok(GalerkinSystem {
        matrix,
        rhs: DVector::zeros(n),
        stabilized: stabilize,
        mass,
    })
}

/// `printf("%.17g")`.
pub fn format_g17(x: f64) -> String {
    const PREC: i32 = 17;
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", (PREC - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..PREC).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim(mantissa), sign, exp.abs())
    } else {
        let decimals = (PREC - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x))
    }
}

/// Row-major plain text, `%.17g` values separated by single spaces.
pub fn export_matrix(matrix: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..matrix.nrows() {
        for j in 0..matrix.ncols() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", format_g17(matrix[(i, j)]));
        }
        out.push('\n');
    }
    out
}
