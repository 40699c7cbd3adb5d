//! Multilevel diagonal preconditioners built on a mesh hierarchy.
//!
//! Every kind has the form `B⁻¹ = Σ_ℓ Σ_{z ∈ S_ℓ} d_z⁻¹ c_{ℓ,z} c_{ℓ,z}ᵀ`,
//! where `c_{ℓ,z}` is the hat of node `z` on level `ℓ` written in the finest
//! nodal basis and `d_z = c_{ℓ,z}ᵀ A c_{ℓ,z}`. The kinds differ only in the
//! active sets `S_ℓ`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh::MeshHierarchy;

/// Sparse column over finest-level degrees of freedom, sorted by index.
pub type SparseColumn = Vec<(usize, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PreconditionerKind {
    /// Local multilevel diagonal: `S_ℓ = Ñ_ℓ`.
    Lmld,
    /// Global multilevel diagonal: `S_ℓ` = all free nodes of level `ℓ`.
    Gmld,
    /// Hierarchical basis: `S_ℓ` = free nodes new on level `ℓ`.
    Hb,
    /// Diagonal scaling on the finest level.
    Diag,
    /// Identity.
    None,
}

impl PreconditionerKind {
    pub const ALL: [PreconditionerKind; 5] = [Self::Lmld, Self::Gmld, Self::Hb, Self::Diag, Self::None];

    pub fn name(self) -> &'static str {
        match self {
            Self::Lmld => "lmld",
            Self::Gmld => "gmld",
            Self::Hb => "hb",
            Self::Diag => "diag",
            Self::None => "none",
        }
    }
}

impl fmt::Display for PreconditionerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PreconditionerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown preconditioner '{s}'")))
    }
}

/// Hats of the free nodes of level `from_level`, expressed in the nodal basis
/// of level `to_level`.
#[derive(Debug, Clone)]
pub struct Prolongation {
    pub from_level: usize,
    pub to_level: usize,
    /// Coarse free node ids, in the coarse free-node order.
    pub coarse_nodes: Vec<usize>,
    /// One column per coarse free node, indexed by fine degrees of freedom.
    pub columns: Vec<SparseColumn>,
}

impl Prolongation {
    /// Dense `N_to × N_from` matrix.
    pub fn to_dense(&self, fine_dofs: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(fine_dofs, self.columns.len());
        for (j, col) in self.columns.iter().enumerate() {
            for &(i, v) in col {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Parent node to `(child, [a, b])` for the midpoints created at one level.
type ChildMap = HashMap<usize, Vec<(usize, [usize; 2])>>;

/// Children created by each refinement step, keyed by parent node.
fn children_by_parent(hier: &MeshHierarchy, level: usize) -> ChildMap {
    let mut map: HashMap<usize, Vec<(usize, [usize; 2])>> = HashMap::new();
    for nn in &hier.record(level).new_nodes {
        for &p in &nn.parents {
            map.entry(p).or_default().push((nn.node, nn.parents));
        }
    }
    map
}

/// Coefficients of the level-`from` hat at `z` after repeated midpoint
/// interpolation up to level `to`, keyed by node id.
fn prolong_node(children: &[ChildMap], z: usize) -> BTreeMap<usize, f64> {
    let mut coef = BTreeMap::from([(z, 1.0)]);
    for step in children {
        let mut added = Vec::new();
        for node in coef.keys() {
            if let Some(kids) = step.get(node) {
                added.extend(kids.iter().copied());
            }
        }
        for (m, [a, b]) in added {
            if coef.contains_key(&m) {
                continue;
            }
            let v = 0.5 * (coef.get(&a).copied().unwrap_or(0.0) + coef.get(&b).copied().unwrap_or(0.0));
            coef.insert(m, v);
        }
    }
    coef
}

/// Prolongation from level `from` to level `to >= from`.
pub fn build_prolongation(hier: &MeshHierarchy, from: usize, to: usize) -> Result<Prolongation> {
    let top = hier.finest_level();
    if from > to || to > top {
        return Err(Error::InvalidParameter(format!(
            "prolongation {from} -> {to} outside levels 0..={top}"
        )));
    }
    let children: Vec<_> = (from + 1..=to).map(|l| children_by_parent(hier, l)).collect();
    let coarse = hier.mesh(from);
    let fine = hier.mesh(to);
    let columns = coarse
        .free_nodes()
        .iter()
        .map(|&z| {
            prolong_node(&children, z)
                .into_iter()
                .filter(|&(_, v)| v != 0.0)
                .filter_map(|(node, v)| fine.dof(node).map(|i| (i, v)))
                .collect()
        })
        .collect();
    Ok(Prolongation {
        from_level: from,
        to_level: to,
        coarse_nodes: coarse.free_nodes().to_vec(),
        columns,
    })
}

/// Prolongations from every level to the finest one.
pub fn build_prolongations(hier: &MeshHierarchy) -> Vec<Prolongation> {
    let top = hier.finest_level();
    (0..=top)
        .map(|l| build_prolongation(hier, l, top).expect("levels in range"))
        .collect()
}

/// The active nodes of one level with their prolonged hats and inverse diagonals.
#[derive(Debug, Clone)]
pub struct LevelBlock {
    pub level: usize,
    pub nodes: Vec<usize>,
    pub columns: Vec<SparseColumn>,
    pub inv_diag: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Preconditioner {
    kind: PreconditionerKind,
    n_dofs: usize,
    blocks: Vec<LevelBlock>,
}

/// `cᵀ A c` for a sparse column.
fn quadratic_form(matrix: &DMatrix<f64>, col: &SparseColumn) -> f64 {
    let mut total = 0.0;
    for &(i, ci) in col {
        let mut row = 0.0;
        for &(j, cj) in col {
            row += matrix[(i, j)] * cj;
        }
        total += ci * row;
    }
    total
}

/// Active node set of `kind` on level `level`.
pub fn active_nodes(kind: PreconditionerKind, hier: &MeshHierarchy, level: usize) -> Vec<usize> {
    let top = hier.finest_level();
    match kind {
        PreconditionerKind::Lmld => hier.ntilde(level).to_vec(),
        PreconditionerKind::Gmld => hier.mesh(level).free_nodes().to_vec(),
        PreconditionerKind::Hb => hier.new_free_nodes(level),
        PreconditionerKind::Diag if level == top => hier.mesh(level).free_nodes().to_vec(),
        PreconditionerKind::Diag | PreconditionerKind::None => Vec::new(),
    }
}

/// Builds `kind` on `hier` from the matrix assembled on the finest level.
pub fn build_preconditioner(
    kind: PreconditionerKind,
    hier: &MeshHierarchy,
    fine_matrix: &DMatrix<f64>,
) -> Result<Preconditioner> {
    let n = hier.finest().num_dofs();
    if fine_matrix.nrows() != n || fine_matrix.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: fine_matrix.nrows(),
        });
    }
    let top = hier.finest_level();
    let mut blocks = Vec::new();
    if kind != PreconditionerKind::None {
        for level in 0..=top {
            let nodes = active_nodes(kind, hier, level);
            if nodes.is_empty() {
                continue;
            }
            let prolong = build_prolongation(hier, level, top)?;
            let position: HashMap<usize, usize> =
                prolong.coarse_nodes.iter().enumerate().map(|(j, &z)| (z, j)).collect();
            let mut columns = Vec::with_capacity(nodes.len());
            let mut inv_diag = Vec::with_capacity(nodes.len());
            for &z in &nodes {
                let col = prolong.columns[position[&z]].clone();
                let d = quadratic_form(fine_matrix, &col);
                if !(d > 0.0) {
                    return Err(Error::NonPositiveDiagonal { level, node: z, value: d });
                }
                columns.push(col);
                inv_diag.push(1.0 / d);
            }
            blocks.push(LevelBlock {
                level,
                nodes,
                columns,
                inv_diag,
            });
        }
    }
    Ok(Preconditioner { kind, n_dofs: n, blocks })
}

impl Preconditioner {
    /// Assembles a preconditioner from explicit blocks, e.g. a spectral
    /// decomposition. Columns must index `0..n_dofs` and diagonals be positive.
    pub fn from_blocks(kind: PreconditionerKind, n_dofs: usize, blocks: Vec<LevelBlock>) -> Result<Self> {
        if kind == PreconditionerKind::None && !blocks.is_empty() {
            return Err(Error::InvalidParameter("identity preconditioner takes no blocks".into()));
        }
        for block in &blocks {
            if block.columns.len() != block.inv_diag.len() {
                return Err(Error::DimensionMismatch {
                    expected: block.columns.len(),
                    got: block.inv_diag.len(),
                });
            }
            if let Some(&(i, _)) = block.columns.iter().flatten().find(|&&(i, _)| i >= n_dofs) {
                return Err(Error::DimensionMismatch { expected: n_dofs, got: i });
            }
            if let Some((j, &d)) = block.inv_diag.iter().enumerate().find(|&(_, &d)| !(d > 0.0)) {
                return Err(Error::NonPositiveDiagonal {
                    level: block.level,
                    node: block.nodes.get(j).copied().unwrap_or(j),
                    value: d,
                });
            }
        }
        Ok(Self { kind, n_dofs, blocks })
    }

    pub fn kind(&self) -> PreconditionerKind {
        self.kind
    }

    pub fn num_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn blocks(&self) -> &[LevelBlock] {
        &self.blocks
    }

    /// Total number of one-dimensional subspace corrections.
    pub fn num_active(&self) -> usize {
        self.blocks.iter().map(|b| b.nodes.len()).sum()
    }

    /// `B⁻¹ r`.
    pub fn apply_inverse(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        if r.len() != self.n_dofs {
            return Err(Error::DimensionMismatch {
                expected: self.n_dofs,
                got: r.len(),
            });
        }
        if self.kind == PreconditionerKind::None {
            return Ok(r.clone());
        }
        let mut out = DVector::zeros(self.n_dofs);
        for block in &self.blocks {
            for (col, &dinv) in block.columns.iter().zip(&block.inv_diag) {
                let gathered: f64 = col.iter().map(|&(i, c)| c * r[i]).sum();
                let s = gathered * dinv;
                for &(i, c) in col {
                    out[i] += s * c;
                }
            }
        }
        Ok(out)
    }

    /// Dense `B⁻¹`, column by column from unit vectors.
    pub fn dense_inverse(&self) -> DMatrix<f64> {
        let n = self.n_dofs;
        let mut m = DMatrix::zeros(n, n);
        let mut e = DVector::zeros(n);
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply_inverse(&e).expect("length matches");
            m.set_column(j, &col);
            e[j] = 0.0;
        }
        m
    }
}

/// `x ↦ B⁻¹ A x`.
#[derive(Debug, Clone, Copy)]
pub struct PreconditionedOperator<'a> {
    pub precond: &'a Preconditioner,
    pub matrix: &'a DMatrix<f64>,
}

pub fn preconditioned_operator<'a>(
    precond: &'a Preconditioner,
    matrix: &'a DMatrix<f64>,
) -> Result<PreconditionedOperator<'a>> {
    if matrix.nrows() != precond.num_dofs() || matrix.ncols() != precond.num_dofs() {
        return Err(Error::DimensionMismatch {
            expected: precond.num_dofs(),
            got: matrix.nrows(),
        });
    }
    Ok(PreconditionedOperator { precond, matrix })
}

impl PreconditionedOperator<'_> {
    pub fn num_dofs(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.num_dofs() {
            return Err(Error::DimensionMismatch {
                expected: self.num_dofs(),
                got: x.len(),
            });
        }
        self.precond.apply_inverse(&(self.matrix * x))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.precond.dense_inverse() * self.matrix
    }
}
