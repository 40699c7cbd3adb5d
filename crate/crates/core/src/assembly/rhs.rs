//! Load vectors for the slit (`f = 1`) and the L-shape Neumann problem
//! (`f = (1/2 - K') ∂_n w` with `w = r^{2/3} cos(2θ/3)`).

use std::f64::consts::{FRAC_PI_4, PI};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryGeometry, BoundaryMesh, Point};

use super::quadrature::gauss8;

/// Dyadic layers of the element quadrature toward a polygon vertex.
const CORNER_LAYERS: usize = 40;
/// Dyadic layers of the side quadrature for `K'` toward each side end.
const SIDE_LAYERS: usize = 60;

/// `rhs_j = ⟨1, η_j⟩`, half the length of the patch of node `j`.
pub fn assemble_rhs_slit(mesh: &BoundaryMesh) -> Result<DVector<f64>> {
    if mesh.is_closed() {
        return Err(Error::SlitRhsOnClosedMesh);
    }
    Ok(DVector::from_iterator(
        mesh.num_dofs(),
        mesh.free_nodes().iter().map(|&z| 0.5 * mesh.patch_length(z)),
    ))
}

type Evaluator = dyn Fn(Point, Point) -> f64 + Send + Sync;

/// Neumann data `φ(x) = n(x)·∇w(x)` given as a function of the point and the
/// outward normal there.
pub struct NeumannData {
    evaluator: Box<Evaluator>,
    singular_point: Option<Point>,
}

impl std::fmt::Debug for NeumannData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NeumannData")
            .field("singular_point", &self.singular_point)
            .finish_non_exhaustive()
    }
}

impl NeumannData {
    pub fn new<F>(evaluator: F, singular_point: Option<Point>) -> Self
    where
        F: Fn(Point, Point) -> f64 + Send + Sync + 'static,
    {
        Self {
            evaluator: Box::new(evaluator),
            singular_point,
        }
    }

    /// Data for `w = r^{2/3} cos(2θ/3)` on the L-shape, `θ` measured from the
    /// bisector of the domain so that the branch cut lies in the excluded
    /// quadrant.
    pub fn lshape() -> Self {
        Self::new(|x, n| n.dot(&lshape_potential_gradient(x)), Some(Point::zeros()))
    }

    pub fn singular_point(&self) -> Option<Point> {
        self.singular_point
    }

    pub fn eval(&self, x: Point, normal: Point) -> Result<f64> {
        let v = (self.evaluator)(x, normal);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteData(x.x, x.y))
        }
    }
}

/// Polar angle relative to the bisector direction `(1, 1)`, in `(-π, π]`.
fn lshape_angle(x: Point) -> f64 {
    let mut theta = x.y.atan2(x.x) - FRAC_PI_4;
    if theta <= -PI {
        theta += 2.0 * PI;
    }
    theta
}

/// `w(x) = r^{2/3} cos(2θ/3)`.
pub fn lshape_potential(x: Point) -> f64 {
    let r = x.norm();
    r.powf(2.0 / 3.0) * (2.0 * lshape_angle(x) / 3.0).cos()
}

/// `∇w`, from `∂_r w = (2/3) r^{-1/3} cos(2θ/3)` and
/// `r^{-1} ∂_θ w = -(2/3) r^{-1/3} sin(2θ/3)`. Not finite at the origin.
pub fn lshape_potential_gradient(x: Point) -> Point {
    let r = x.norm();
    let theta = lshape_angle(x);
    let scale = 2.0 / 3.0 * r.powf(-1.0 / 3.0);
    let er = x / r;
    let etheta = Point::new(-er.y, er.x);
    er * (scale * (2.0 * theta / 3.0).cos()) - etheta * (scale * (2.0 * theta / 3.0).sin())
}

/// Quadrature of `φ ds` on one polygon side, graded toward both vertices.
struct SideRule {
    side: usize,
    points: Vec<Point>,
    /// `w_i φ(y_i)` including the side length.
    weighted_data: Vec<f64>,
}

impl SideRule {
    fn new(geometry: &BoundaryGeometry, data: &NeumannData, side: usize) -> Result<Self> {
        let (y0, y1) = geometry.side(side);
        let len = (y1 - y0).norm();
        let normal = geometry.side_normal(side);
        let mut points = Vec::new();
        let mut weighted_data = Vec::new();
        for q in element_rule([true, true], SIDE_LAYERS) {
            let y = q.on_segment(y0, y1);
            points.push(y);
            weighted_data.push(q.w * len * data.eval(y, normal)?);
        }
        Ok(Self {
            side,
            points,
            weighted_data,
        })
    }
}

/// `(K'φ)(x) = ∫_Γ ∂_{n_x} G(x - y) φ(y) ds_y` for `x` on side `side_x`.
/// The side containing `x` contributes nothing.
fn adjoint_double_layer(geometry: &BoundaryGeometry, sides: &[SideRule], x: Point, side_x: usize) -> f64 {
    let nx = geometry.side_normal(side_x);
    let mut total = 0.0;
    for rule in sides.iter().filter(|r| r.side != side_x) {
        for (y, &wd) in rule.points.iter().zip(&rule.weighted_data) {
            let d = x - y;
            let r2 = d.norm_squared();
            if r2 > 0.0 {
                total += d.dot(&nx) / r2 * wd;
            }
        }
    }
    -total / (2.0 * PI)
}

/// A point of a rule on `[0, 1]`: `t`, `1 - t` (each exact where it is
/// small) and the weight.
#[derive(Debug, Clone, Copy)]
struct RulePoint {
    t: f64,
    s: f64,
    w: f64,
}

impl RulePoint {
    fn on_segment(&self, p0: Point, p1: Point) -> Point {
        if self.t <= 0.5 {
            p0 + (p1 - p0) * self.t
        } else {
            p1 + (p0 - p1) * self.s
        }
    }
}

/// Offsets from `0` and weights of a rule on `[0, 1]` graded dyadically with
/// `layers` levels toward `0`.
fn graded_toward_zero(layers: usize) -> Vec<(f64, f64)> {
    let g = gauss8();
    let mut out = Vec::new();
    let mut hi: f64 = 1.0;
    for k in 0..=layers {
        let lo = if k == layers { 0.0 } else { 0.5 * hi };
        for (&t, &w) in g.points.iter().zip(&g.weights) {
            out.push((lo + (hi - lo) * t, (hi - lo) * w));
        }
        hi = lo;
    }
    out
}

/// Quadrature on `[0, 1]`, graded dyadically with `layers` levels toward the
/// ends flagged in `graded`.
fn element_rule(graded: [bool; 2], layers: usize) -> Vec<RulePoint> {
    let from_start = |t: f64, w: f64| RulePoint { t, s: 1.0 - t, w };
    let from_end = |s: f64, w: f64| RulePoint { t: 1.0 - s, s, w };
    match graded {
        [false, false] => {
            let g = gauss8();
            g.points.iter().zip(&g.weights).map(|(&t, &w)| from_start(t, w)).collect()
        }
        [true, false] => graded_toward_zero(layers).into_iter().map(|(t, w)| from_start(t, w)).collect(),
        [false, true] => graded_toward_zero(layers).into_iter().map(|(s, w)| from_end(s, w)).collect(),
        [true, true] => {
            let half = graded_toward_zero(layers);
            half.iter()
                .map(|&(t, w)| from_start(0.5 * t, 0.5 * w))
                .chain(half.iter().map(|&(s, w)| from_end(0.5 * s, 0.5 * w)))
                .collect()
        }
    }
}

/// `rhs_j = ⟨(1/2 - K') φ, η_j⟩` on a closed polygon, with the exact data
/// evaluated at every quadrature point.
pub fn assemble_rhs_lshape(mesh: &BoundaryMesh, data: &NeumannData) -> Result<DVector<f64>> {
    if !mesh.is_closed() {
        return Err(Error::RhsRequiresClosedMesh);
    }
    let geometry = mesh.geometry();
    let sides = (0..geometry.num_sides())
        .map(|s| SideRule::new(geometry, data, s))
        .collect::<Result<Vec<_>>>()?;
    let is_vertex = |p: Point| geometry.vertices().contains(&p)
        || data.singular_point().is_some_and(|s| s == p);

    let per_element: Vec<(f64, f64)> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let (p0, p1) = mesh.element_endpoints(e);
            let h = mesh.element_len(e);
            let side = mesh.element_side(e);
            let normal = geometry.side_normal(side);
            let mut load_a = 0.0;
            let mut load_b = 0.0;
            for q in element_rule([is_vertex(p0), is_vertex(p1)], CORNER_LAYERS) {
                let x = q.on_segment(p0, p1);
                let phi = data.eval(x, normal)?;
                let g = 0.5 * phi - adjoint_double_layer(geometry, &sides, x, side);
                load_a += q.w * h * q.s * g;
                load_b += q.w * h * q.t * g;
            }
            Ok((load_a, load_b))
        })
        .collect::<Result<_>>()?;

    let mut rhs = DVector::zeros(mesh.num_dofs());
    for (e, (la, lb)) in per_element.into_iter().enumerate() {
        let [a, b] = mesh.element(e);
        if let Some(j) = mesh.dof(a) {
            rhs[j] += la;
        }
        if let Some(j) = mesh.dof(b) {
            rhs[j] += lb;
        }
    }
    Ok(rhs)
}
