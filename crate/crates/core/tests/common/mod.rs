//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use aswarz::assembly::assemble_hypersingular;
use aswarz::mesh::{BoundaryGeometry, BoundaryMesh, MeshHierarchy, Point};
use aswarz::precond::{active_nodes, PreconditionerKind};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn lshape_mesh() -> BoundaryMesh {
    BoundaryMesh::initial(BoundaryGeometry::lshape(), 1.0).unwrap()
}

pub fn slit_mesh() -> BoundaryMesh {
    BoundaryMesh::initial(BoundaryGeometry::slit(), 1.0).unwrap()
}

/// Hierarchy with `steps` refinements, each marking a random nonempty subset.
pub fn random_hierarchy(initial: BoundaryMesh, steps: usize, seed: u64) -> MeshHierarchy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hier = MeshHierarchy::new(initial);
    for _ in 0..steps {
        let m = hier.finest().num_elements();
        let p: f64 = rng.random_range(0.05..0.5);
        let mut marked: Vec<usize> = (0..m).filter(|_| rng.random_bool(p)).collect();
        if marked.is_empty() {
            marked.push(rng.random_range(0..m));
        }
        hier.refine(&marked).unwrap();
    }
    hier
}

pub fn uniform_hierarchy(initial: BoundaryMesh, steps: usize) -> MeshHierarchy {
    let mut hier = MeshHierarchy::new(initial);
    for _ in 0..steps {
        hier.refine_uniform().unwrap();
    }
    hier
}

pub fn artificial_hierarchy(steps: usize) -> MeshHierarchy {
    let mut hier = MeshHierarchy::new(lshape_mesh());
    for _ in 0..steps {
        hier.refine_artificial_corner().unwrap();
    }
    hier
}

/// Small hierarchies of both geometries and all refinement styles.
pub fn corpus() -> Vec<(String, MeshHierarchy)> {
    let mut out = vec![
        ("lshape-uniform-2".to_string(), uniform_hierarchy(lshape_mesh(), 2)),
        ("lshape-artificial-6".to_string(), artificial_hierarchy(6)),
        ("slit-uniform-3".to_string(), uniform_hierarchy(slit_mesh(), 3)),
        ("lshape-single".to_string(), MeshHierarchy::new(lshape_mesh())),
    ];
    for seed in 0..4 {
        out.push((format!("lshape-random-{seed}"), random_hierarchy(lshape_mesh(), 4, seed)));
        out.push((format!("slit-random-{seed}"), random_hierarchy(slit_mesh(), 5, 100 + seed)));
    }
    let mut degenerate = uniform_hierarchy(lshape_mesh(), 1);
    degenerate.push_unchanged();
    degenerate.push_unchanged();
    out.push(("lshape-unchanged".to_string(), degenerate));
    out
}

pub fn fine_matrix(hier: &MeshHierarchy) -> DMatrix<f64> {
    let mesh = hier.finest();
    assemble_hypersingular(mesh, mesh.is_closed()).unwrap().matrix
}

fn on_segment(p: Point, a: Point, b: Point) -> Option<f64> {
    let d = b - a;
    let t = (p - a).dot(&d) / d.norm_squared();
    let off = (p - (a + d * t)).norm();
    (off <= 1e-12 * d.norm() && (-1e-12..=1.0 + 1e-12).contains(&t)).then_some(t.clamp(0.0, 1.0))
}

/// `η_z(p)` for the hat of node `z` on `mesh`, by locating `p` on an element.
pub fn hat_value(mesh: &BoundaryMesh, z: usize, p: Point) -> f64 {
    for e in 0..mesh.num_elements() {
        let [a, b] = mesh.element(e);
        if a != z && b != z {
            continue;
        }
        let (pa, pb) = mesh.element_endpoints(e);
        if let Some(t) = on_segment(p, pa, pb) {
            return if a == z { 1.0 - t } else { t };
        }
    }
    0.0
}

/// Dense prolongation from level `from` to level `to` by pointwise hat evaluation.
pub fn dense_prolongation(hier: &MeshHierarchy, from: usize, to: usize, nodes: &[usize]) -> DMatrix<f64> {
    let coarse = hier.mesh(from);
    let fine = hier.mesh(to);
    DMatrix::from_fn(fine.num_dofs(), nodes.len(), |i, j| {
        hat_value(coarse, nodes[j], fine.node(fine.free_nodes()[i]))
    })
}

/// Diagonal entries of the Galerkin matrix assembled on level `level` itself.
pub fn level_diagonals(hier: &MeshHierarchy, level: usize, nodes: &[usize]) -> Vec<f64> {
    let mesh = hier.mesh(level);
    let a = assemble_hypersingular(mesh, mesh.is_closed()).unwrap().matrix;
    nodes.iter().map(|&z| a[(mesh.dof(z).unwrap(), mesh.dof(z).unwrap())]).collect()
}

/// `Σ_ℓ I_ℓ D_ℓ⁻¹ I_ℓᵀ` from dense pieces.
pub fn dense_inverse_oracle(kind: PreconditionerKind, hier: &MeshHierarchy) -> DMatrix<f64> {
    let top = hier.finest_level();
    let n = hier.finest().num_dofs();
    if kind == PreconditionerKind::None {
        return DMatrix::identity(n, n);
    }
    let mut out = DMatrix::zeros(n, n);
    for level in 0..=top {
        let nodes = active_nodes(kind, hier, level);
        if nodes.is_empty() {
            continue;
        }
        let i = dense_prolongation(hier, level, top, &nodes);
        let d = DVector::from_vec(level_diagonals(hier, level, &nodes));
        out += &i * DMatrix::from_diagonal(&d.map(|v| 1.0 / v)) * i.transpose();
    }
    out
}

/// `Σ_ℓ Σ_{z ∈ Ñ_ℓ} ⟨⟨v, η_z⟩⟩ ⟨⟨w, η_z⟩⟩ / ⟨⟨η_z, η_z⟩⟩`, i.e. `⟨⟨P v, w⟩⟩` for
/// the sum of one-dimensional energy projections onto the active hats.
pub fn projection_sum(
    kind: PreconditionerKind,
    hier: &MeshHierarchy,
    a_fine: &DMatrix<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> f64 {
    let top = hier.finest_level();
    let ax = a_fine * x;
    let ay = a_fine * y;
    let mut total = 0.0;
    for level in 0..=top {
        let nodes = active_nodes(kind, hier, level);
        if nodes.is_empty() {
            continue;
        }
        let hats = dense_prolongation(hier, level, top, &nodes);
        let norms = level_diagonals(hier, level, &nodes);
        for (j, norm2) in norms.iter().enumerate() {
            let c = hats.column(j);
            total += ax.dot(&c) * ay.dot(&c) / norm2;
        }
    }
    total
}

fn patch(mesh: &BoundaryMesh, z: usize) -> BTreeSet<[u64; 4]> {
    (0..mesh.num_elements())
        .filter(|&e| mesh.element(e).contains(&z))
        .map(|e| {
            let (a, b) = mesh.element_endpoints(e);
            [a.x.to_bits(), a.y.to_bits(), b.x.to_bits(), b.y.to_bits()]
        })
        .collect()
}

/// Ñ_ℓ by literal patch comparison: new free nodes, plus old free nodes whose
/// patch of elements differs from the previous level.
pub fn ntilde_by_patches(hier: &MeshHierarchy, level: usize) -> Vec<usize> {
    let fine = hier.mesh(level);
    if level == 0 {
        return fine.free_nodes().to_vec();
    }
    let coarse = hier.mesh(level - 1);
    fine.free_nodes()
        .iter()
        .copied()
        .filter(|&z| z >= coarse.num_nodes() || patch(fine, z) != patch(coarse, z))
        .collect()
}

/// GMRES with twice-applied classical Gram–Schmidt and an SVD least-squares
/// solve per step; returns the iteration count and the final solution.
pub fn reference_gmres(
    a: &DMatrix<f64>,
    binv: &DMatrix<f64>,
    b: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> (usize, DVector<f64>) {
    let n = a.nrows();
    let op = binv * a;
    let r0 = binv * b;
    let beta = r0.norm();
    let mut v = DMatrix::<f64>::zeros(n, max_iter + 1);
    v.set_column(0, &(&r0 / beta));
    let mut h = DMatrix::<f64>::zeros(max_iter + 1, max_iter);
    for k in 0..max_iter {
        let mut w = &op * v.column(k);
        for _ in 0..2 {
            let basis = v.columns(0, k + 1);
            let coeffs = basis.transpose() * &w;
            w -= basis * &coeffs;
            for i in 0..=k {
                h[(i, k)] += coeffs[i];
            }
        }
        let hn = w.norm();
        h[(k + 1, k)] = hn;
        let hk = h.view((0, 0), (k + 2, k + 1)).clone_owned();
        let mut rhs = DVector::zeros(k + 2);
        rhs[0] = beta;
        let y = hk.clone().svd(true, true).solve(&rhs, 1e-300).unwrap();
        let res = (&rhs - &hk * &y).norm() / beta;
        if res <= tol || hn == 0.0 {
            let x = v.columns(0, k + 1) * y;
            return (k + 1, x);
        }
        v.set_column(k + 1, &(w / hn));
    }
    panic!("reference GMRES did not converge in {max_iter} steps");
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
