//! Polygonal boundaries, 1D bisection refinement and the level hierarchy.
//!
//! Node indices are global and stable: a node created at level `ℓ` keeps its
//! index on every finer level, and new nodes are always appended. Elements are
//! stored in curve order, so the neighbours of element `i` are `i - 1` and
//! `i + 1` (cyclically on closed curves).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::Vector2;

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

/// Relative slack used when comparing element lengths in the closure rule.
const LENGTH_RATIO_SLACK: f64 = 1e-10;

/// A polygonal curve in the plane, either closed or an open arc.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGeometry {
    vertices: Vec<Point>,
    closed: bool,
    corner_index: Option<usize>,
}

impl BoundaryGeometry {
    /// Validates that consecutive vertices are distinct and that the polyline
    /// does not intersect itself.
    pub fn new(vertices: Vec<Point>, closed: bool, corner_index: Option<usize>) -> Result<Self> {
        let min_vertices = if closed { 3 } else { 2 };
        if vertices.len() < min_vertices {
            return Err(Error::InvalidGeometry(format!(
                "need at least {min_vertices} vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(c) = corner_index {
            if c >= vertices.len() {
                return Err(Error::InvalidGeometry(format!("corner index {c} out of range")));
            }
        }
        let geometry = Self {
            vertices,
            closed,
            corner_index,
        };
        for s in 0..geometry.num_sides() {
            let (a, b) = geometry.side(s);
            if (b - a).norm() == 0.0 {
                return Err(Error::InvalidGeometry(format!("side {s} has zero length")));
            }
        }
        geometry.check_simple()?;
        Ok(geometry)
    }

    /// The boundary of `(-1,1)² \ [-1,0]²`, counterclockwise, with the
    /// reentrant corner at the origin.
    pub fn lshape() -> Self {
        let vertices = vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, -1.0),
            Point::new(1.0, -1.0),
            Point::new(1.0, 1.0),
            Point::new(-1.0, 1.0),
            Point::new(-1.0, 0.0),
        ];
        Self::new(vertices, true, Some(0)).expect("L-shape is a simple polygon")
    }

    /// The open slit `(-1,1) × {0}`.
    pub fn slit() -> Self {
        let vertices = vec![Point::new(-1.0, 0.0), Point::new(1.0, 0.0)];
        Self::new(vertices, false, None).expect("slit is a simple arc")
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn corner_index(&self) -> Option<usize> {
        self.corner_index
    }

    pub fn corner(&self) -> Option<Point> {
        self.corner_index.map(|i| self.vertices[i])
    }

    pub fn num_sides(&self) -> usize {
        if self.closed {
            self.vertices.len()
        } else {
            self.vertices.len() - 1
        }
    }

    /// Endpoints of polygon side `s`, in traversal order.
    pub fn side(&self, s: usize) -> (Point, Point) {
        let n = self.vertices.len();
        (self.vertices[s], self.vertices[(s + 1) % n])
    }

    /// Unit normal of side `s`, obtained by rotating the tangent clockwise.
    /// For counterclockwise closed polygons this is the outward normal.
    pub fn side_normal(&self, s: usize) -> Point {
        let (a, b) = self.side(s);
        let t = (b - a).normalize();
        Point::new(t.y, -t.x)
    }

    pub fn length(&self) -> f64 {
        (0..self.num_sides())
            .map(|s| {
                let (a, b) = self.side(s);
                (b - a).norm()
            })
            .sum()
    }

    fn sides_adjacent(&self, s: usize, t: usize) -> bool {
        let m = self.num_sides();
        let next = |i: usize| if self.closed { (i + 1) % m } else { i + 1 };
        next(s) == t || next(t) == s
    }

    fn check_simple(&self) -> Result<()> {
        let m = self.num_sides();
        for s in 0..m {
            for t in (s + 1)..m {
                let (a0, a1) = self.side(s);
                let (b0, b1) = self.side(t);
                if self.sides_adjacent(s, t) {
                    // Adjacent sides may only share their common vertex.
                    let da = a1 - a0;
                    let db = b1 - b0;
                    let cross = da.x * db.y - da.y * db.x;
                    if cross.abs() <= 1e-14 * da.norm() * db.norm() && da.dot(&db) < 0.0 {
                        return Err(Error::InvalidGeometry(format!(
                            "sides {s} and {t} fold back onto each other"
                        )));
                    }
                } else if segments_intersect(a0, a1, b0, b1) {
                    return Err(Error::InvalidGeometry(format!("sides {s} and {t} intersect")));
                }
            }
        }
        Ok(())
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(a0: Point, a1: Point, b0: Point, b1: Point) -> bool {
    let d1 = orient(b0, b1, a0);
    let d2 = orient(b0, b1, a1);
    let d3 = orient(a0, a1, b0);
    let d4 = orient(a0, a1, b1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(b0, b1, a0))
        || (d2 == 0.0 && on_segment(b0, b1, a1))
        || (d3 == 0.0 && on_segment(a0, a1, b0))
        || (d4 == 0.0 && on_segment(a0, a1, b1))
}

/// One refinement level: straight elements in curve order on a fixed geometry.
#[derive(Debug, Clone)]
pub struct BoundaryMesh {
    geometry: Arc<BoundaryGeometry>,
    nodes: Vec<Point>,
    elements: Vec<[usize; 2]>,
    element_side: Vec<usize>,
    element_len: Vec<f64>,
    /// For every node: (element ending at it, element starting at it).
    node_elements: Vec<[Option<usize>; 2]>,
    free_nodes: Vec<usize>,
    dof_of_node: Vec<Option<usize>>,
    corner_node: Option<usize>,
}

impl BoundaryMesh {
    /// Splits every polygon side into `ceil(len / max_len)` elements of equal
    /// length. With `max_len = 1` this gives 8 elements on the L-shape and 2
    /// on the slit.
    pub fn initial(geometry: BoundaryGeometry, max_len: f64) -> Result<Self> {
        if !(max_len > 0.0) {
            return Err(Error::InvalidParameter(format!("max_len must be positive, got {max_len}")));
        }
        let geometry = Arc::new(geometry);
        let sides = geometry.num_sides();
        let mut nodes = vec![geometry.vertices()[0]];
        let mut vertex_node = vec![0];
        let mut elements = Vec::new();
        let mut element_side = Vec::new();

        for s in 0..sides {
            let (a, b) = geometry.side(s);
            let parts = ((b - a).norm() / max_len - 1e-12).ceil().max(1.0) as usize;
            let mut prev = vertex_node[s];
            for p in 1..=parts {
                let next = if p == parts && geometry.is_closed() && s + 1 == sides {
                    0
                } else {
                    let pt = if p == parts { b } else { a + (b - a) * (p as f64 / parts as f64) };
                    nodes.push(pt);
                    nodes.len() - 1
                };
                elements.push([prev, next]);
                element_side.push(s);
                prev = next;
            }
            vertex_node.push(prev);
        }
        let corner_node = geometry.corner_index().map(|c| vertex_node[c]);
        Self::from_parts(geometry, nodes, elements, element_side, corner_node)
    }

    fn from_parts(
        geometry: Arc<BoundaryGeometry>,
        nodes: Vec<Point>,
        elements: Vec<[usize; 2]>,
        element_side: Vec<usize>,
        corner_node: Option<usize>,
    ) -> Result<Self> {
        let element_len: Vec<f64> = elements
            .iter()
            .map(|&[a, b]| (nodes[b] - nodes[a]).norm())
            .collect();
        if let Some(e) = element_len.iter().position(|&h| !(h > 0.0)) {
            return Err(Error::DegenerateElement(e));
        }
        let mut node_elements = vec![[None, None]; nodes.len()];
        for (e, &[a, b]) in elements.iter().enumerate() {
            node_elements[a][1] = Some(e);
            node_elements[b][0] = Some(e);
        }
        let free_nodes: Vec<usize> = if geometry.is_closed() {
            (0..nodes.len()).collect()
        } else {
            (0..nodes.len())
                .filter(|&z| node_elements[z][0].is_some() && node_elements[z][1].is_some())
                .collect()
        };
        let mut dof_of_node = vec![None; nodes.len()];
        for (dof, &z) in free_nodes.iter().enumerate() {
            dof_of_node[z] = Some(dof);
        }
        Ok(Self {
            geometry,
            nodes,
            elements,
            element_side,
            element_len,
            node_elements,
            free_nodes,
            dof_of_node,
            corner_node,
        })
    }

    pub fn geometry(&self) -> &BoundaryGeometry {
        &self.geometry
    }

    pub fn is_closed(&self) -> bool {
        self.geometry.is_closed()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, z: usize) -> Point {
        self.nodes[z]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn elements(&self) -> &[[usize; 2]] {
        &self.elements
    }

    pub fn element(&self, e: usize) -> [usize; 2] {
        self.elements[e]
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Polygon side carrying element `e`.
    pub fn element_side(&self, e: usize) -> usize {
        self.element_side[e]
    }

    pub fn element_len(&self, e: usize) -> f64 {
        self.element_len[e]
    }

    pub fn element_lengths(&self) -> &[f64] {
        &self.element_len
    }

    pub fn element_endpoints(&self, e: usize) -> (Point, Point) {
        let [a, b] = self.elements[e];
        (self.nodes[a], self.nodes[b])
    }

    /// Elements incident to `z`: the one ending at `z` and the one starting there.
    pub fn node_elements(&self, z: usize) -> [Option<usize>; 2] {
        self.node_elements[z]
    }

    /// The nodes adjacent to `z` along the curve (previous, next).
    pub fn node_neighbors(&self, z: usize) -> [Option<usize>; 2] {
        let [prev, next] = self.node_elements[z];
        [prev.map(|e| self.elements[e][0]), next.map(|e| self.elements[e][1])]
    }

    /// Element neighbours of `e` along the curve (previous, next).
    pub fn element_neighbors(&self, e: usize) -> [Option<usize>; 2] {
        let [a, b] = self.elements[e];
        [self.node_elements[a][0], self.node_elements[b][1]]
    }

    /// Degrees of freedom: every node on a closed curve, interior nodes on an arc.
    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn num_dofs(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn dof(&self, z: usize) -> Option<usize> {
        self.dof_of_node.get(z).copied().flatten()
    }

    pub fn is_free(&self, z: usize) -> bool {
        self.dof(z).is_some()
    }

    pub fn corner_node(&self) -> Option<usize> {
        self.corner_node
    }

    pub fn h_min(&self) -> f64 {
        self.element_len.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        self.element_len.iter().copied().fold(0.0, f64::max)
    }

    /// Length of the support of the hat function at `z`.
    pub fn patch_length(&self, z: usize) -> f64 {
        self.node_elements[z]
            .iter()
            .flatten()
            .map(|&e| self.element_len[e])
            .sum()
    }

    /// Shortest element incident to `z`.
    pub fn node_h(&self, z: usize) -> f64 {
        self.node_elements[z]
            .iter()
            .flatten()
            .map(|&e| self.element_len[e])
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest ratio `h(T) / h(T')` over touching element pairs.
    pub fn max_neighbor_ratio(&self) -> f64 {
        let mut worst: f64 = 1.0;
        for e in 0..self.num_elements() {
            for n in self.element_neighbors(e).into_iter().flatten() {
                worst = worst.max(self.element_len[e] / self.element_len[n]);
            }
        }
        worst
    }

    /// Plain-text dump: `n <id> <x> <y>` per node, then `e <id> <a> <b>` per element.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "n {i} {} {}", p.x, p.y);
        }
        for (i, [a, b]) in self.elements.iter().enumerate() {
            let _ = writeln!(out, "e {i} {a} {b}");
        }
        out
    }
}

/// A node created by bisecting the element `parents[0] -- parents[1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NewNode {
    pub node: usize,
    pub parents: [usize; 2],
}

/// Bookkeeping for one refinement step `ℓ-1 → ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementRecord {
    pub parent_level: usize,
    /// Indices of bisected elements of the parent mesh (sorted).
    pub bisected_elements: Vec<usize>,
    pub new_nodes: Vec<NewNode>,
    /// New free nodes plus the old free nodes whose patch shrank (sorted node ids).
    pub ntilde: Vec<usize>,
}

/// Bisects every marked element plus whatever the ratio-2 closure requires.
///
/// After closure, touching elements differ in length by at most a factor 2,
/// provided the input mesh satisfied the same bound.
pub fn refine(mesh: &BoundaryMesh, marked: &[usize]) -> Result<(BoundaryMesh, RefinementRecord)> {
    if marked.is_empty() {
        return Err(Error::NothingToRefine);
    }
    let m = mesh.num_elements();
    let mut bisect = vec![false; m];
    for &e in marked {
        if e >= m {
            return Err(Error::ElementOutOfRange { index: e, len: m });
        }
        bisect[e] = true;
    }

    let resulting_len = |bisect: &[bool], e: usize| {
        if bisect[e] {
            mesh.element_len(e) / 2.0
        } else {
            mesh.element_len(e)
        }
    };
    let mut changed = true;
    while changed {
        changed = false;
        for e in 0..m {
            if bisect[e] {
                continue;
            }
            let len = mesh.element_len(e);
            let too_long = mesh
                .element_neighbors(e)
                .into_iter()
                .flatten()
                .any(|n| len > 2.0 * resulting_len(&bisect, n) * (1.0 + LENGTH_RATIO_SLACK));
            if too_long {
                bisect[e] = true;
                changed = true;
            }
        }
    }

    let mut nodes = mesh.nodes.clone();
    let mut elements = Vec::with_capacity(2 * m);
    let mut element_side = Vec::with_capacity(2 * m);
    let mut new_nodes = Vec::new();
    let mut bisected_elements = Vec::new();
    for e in 0..m {
        let [a, b] = mesh.elements[e];
        let side = mesh.element_side[e];
        if bisect[e] {
            let mid = nodes.len();
            nodes.push((mesh.nodes[a] + mesh.nodes[b]) * 0.5);
            new_nodes.push(NewNode {
                node: mid,
                parents: [a, b],
            });
            bisected_elements.push(e);
            elements.push([a, mid]);
            elements.push([mid, b]);
            element_side.push(side);
            element_side.push(side);
        } else {
            elements.push([a, b]);
            element_side.push(side);
        }
    }
    let fine = BoundaryMesh::from_parts(
        mesh.geometry.clone(),
        nodes,
        elements,
        element_side,
        mesh.corner_node,
    )?;

    let mut ntilde = BTreeSet::new();
    for nn in &new_nodes {
        if fine.is_free(nn.node) {
            ntilde.insert(nn.node);
        }
        for &p in &nn.parents {
            if mesh.is_free(p) {
                ntilde.insert(p);
            }
        }
    }
    let record = RefinementRecord {
        parent_level: 0,
        bisected_elements,
        new_nodes,
        ntilde: ntilde.into_iter().collect(),
    };
    Ok((fine, record))
}

/// The nested sequence `T_0, ..., T_L` with per-level bookkeeping.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    levels: Vec<BoundaryMesh>,
    records: Vec<RefinementRecord>,
    ntilde: Vec<Vec<usize>>,
    node_h: Vec<Vec<f64>>,
    node_level: Vec<Vec<u32>>,
    h0_hat: f64,
}

impl MeshHierarchy {
    pub fn new(initial: BoundaryMesh) -> Self {
        let h0_hat = initial.h_max();
        let ntilde0 = initial.free_nodes().to_vec();
        let mut hier = Self {
            levels: Vec::new(),
            records: Vec::new(),
            ntilde: vec![ntilde0],
            node_h: Vec::new(),
            node_level: Vec::new(),
            h0_hat,
        };
        hier.push_level_data(&initial);
        hier.levels.push(initial);
        hier
    }

    fn push_level_data(&mut self, mesh: &BoundaryMesh) {
        let node_h: Vec<f64> = (0..mesh.num_nodes()).map(|z| mesh.node_h(z)).collect();
        let node_level = node_h
            .iter()
            .map(|&h| ((self.h0_hat / h).log2() + 1e-9).floor().max(0.0) as u32)
            .collect();
        self.node_h.push(node_h);
        self.node_level.push(node_level);
    }

    fn push(&mut self, mesh: BoundaryMesh, mut record: RefinementRecord) {
        record.parent_level = self.finest_level();
        self.push_level_data(&mesh);
        self.ntilde.push(record.ntilde.clone());
        self.records.push(record);
        self.levels.push(mesh);
    }

    /// Appends `refine(finest, marked)` as a new level.
    pub fn refine(&mut self, marked: &[usize]) -> Result<&RefinementRecord> {
        let (mesh, record) = refine(self.finest(), marked)?;
        self.push(mesh, record);
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn refine_uniform(&mut self) -> Result<&RefinementRecord> {
        let all: Vec<usize> = (0..self.finest().num_elements()).collect();
        self.refine(&all)
    }

    /// Bisects exactly the two elements touching the distinguished corner.
    pub fn refine_artificial_corner(&mut self) -> Result<&RefinementRecord> {
        let mesh = self.finest();
        let corner = mesh.corner_node().ok_or(Error::NoCorner)?;
        let marked: Vec<usize> = mesh.node_elements(corner).into_iter().flatten().collect();
        self.refine(&marked)
    }

    /// Appends a copy of the finest mesh with no element bisected.
    pub fn push_unchanged(&mut self) {
        let mesh = self.finest().clone();
        let record = RefinementRecord {
            parent_level: 0,
            bisected_elements: Vec::new(),
            new_nodes: Vec::new(),
            ntilde: Vec::new(),
        };
        self.push(mesh, record);
    }

    /// `L`, the index of the finest level.
    pub fn finest_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn mesh(&self, level: usize) -> &BoundaryMesh {
        &self.levels[level]
    }

    pub fn levels(&self) -> &[BoundaryMesh] {
        &self.levels
    }

    pub fn finest(&self) -> &BoundaryMesh {
        self.levels.last().expect("hierarchy is never empty")
    }

    /// Record of the step producing level `level` (requires `level >= 1`).
    pub fn record(&self, level: usize) -> &RefinementRecord {
        &self.records[level - 1]
    }

    pub fn records(&self) -> &[RefinementRecord] {
        &self.records
    }

    /// Ñ_ℓ as sorted node ids; all free nodes for `ℓ = 0`.
    pub fn ntilde(&self, level: usize) -> &[usize] {
        &self.ntilde[level]
    }

    /// Free nodes of level `level` that do not exist on level `level - 1`.
    pub fn new_free_nodes(&self, level: usize) -> Vec<usize> {
        if level == 0 {
            return self.levels[0].free_nodes().to_vec();
        }
        let mesh = &self.levels[level];
        self.records[level - 1]
            .new_nodes
            .iter()
            .map(|n| n.node)
            .filter(|&z| mesh.is_free(z))
            .collect()
    }

    /// Shortest incident element length per node of level `level`.
    pub fn node_h(&self, level: usize) -> &[f64] {
        &self.node_h[level]
    }

    /// `floor(log(h_ℓ(z)/ĥ_0) / log(1/2))` per node; diagnostic only.
    pub fn node_level(&self, level: usize) -> &[u32] {
        &self.node_level[level]
    }

    /// Finest-level node and element lines followed by one `ntilde` line per level.
    pub fn dump(&self) -> String {
        let mut out = self.finest().dump();
        for ids in &self.ntilde {
            out.push_str("ntilde");
            for id in ids {
                let _ = write!(out, " {id}");
            }
            out.push('\n');
        }
        out
    }
}

/// Squared indicators `μ_T² = h_T ‖u' - A u'‖²_{L²(T)}` per element, where `u'`
/// is the elementwise arclength derivative of the discrete solution with nodal
/// coefficients `coeffs` (zero at non-free nodes) and `A` averages `u'` at the
/// nodes and interpolates linearly.
pub fn error_indicators(mesh: &BoundaryMesh, coeffs: &[f64]) -> Result<Vec<f64>> {
    if coeffs.len() != mesh.num_dofs() {
        return Err(Error::DimensionMismatch {
            expected: mesh.num_dofs(),
            got: coeffs.len(),
        });
    }
    let value = |z: usize| mesh.dof(z).map_or(0.0, |j| coeffs[j]);
    let slope: Vec<f64> = (0..mesh.num_elements())
        .map(|e| {
            let [a, b] = mesh.element(e);
            (value(b) - value(a)) / mesh.element_len(e)
        })
        .collect();
    let averaged = |z: usize| {
        let incident: Vec<f64> = mesh.node_elements(z).into_iter().flatten().map(|e| slope[e]).collect();
        incident.iter().sum::<f64>() / incident.len() as f64
    };
    Ok((0..mesh.num_elements())
        .map(|e| {
            let [a, b] = mesh.element(e);
            let h = mesh.element_len(e);
            let c = slope[e];
            let (da, db) = (c - averaged(a), c - averaged(b));
            // ∫_T (linear from da to db)² = h (da² + da db + db²) / 3
            h * h * (da * da + da * db + db * db) / 3.0
        })
        .collect())
}

/// Smallest set of elements whose indicators carry a `theta` fraction of the
/// total, largest indicators first (ties by element index).
pub fn dorfler_mark(indicators: &[f64], theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidParameter(format!("marking fraction {theta} outside (0, 1]")));
    }
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&i, &j| indicators[j].total_cmp(&indicators[i]).then(i.cmp(&j)));
    let total: f64 = order.iter().map(|&i| indicators[i]).sum();
    if total <= 0.0 {
        return Ok(Vec::new());
    }
    let mut marked = Vec::new();
    let mut acc = 0.0;
    for &i in &order {
        if acc >= theta * total {
            break;
        }
        acc += indicators[i];
        marked.push(i);
    }
    marked.sort_unstable();
    Ok(marked)
}

/// Dörfler marking driven by [`error_indicators`].
pub fn estimate_and_mark(mesh: &BoundaryMesh, coeffs: &[f64], theta: f64) -> Result<Vec<usize>> {
    dorfler_mark(&error_indicators(mesh, coeffs)?, theta)
}
