//! Gauss–Legendre rules and a bisecting adaptive integrator.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Computes the `n`-point rule by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss rule needs at least one point");
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // map [-1, 1] -> [0, 1]
            points[i] = 0.5 * (1.0 - x);
            points[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `∫_a^b f`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let h = b - a;
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(a + h * t))
            .sum::<f64>()
            * h
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

pub fn gauss8() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| GaussRule::new(8))
}

pub fn gauss10() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| GaussRule::new(10))
}

pub fn gauss16() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| GaussRule::new(16))
}

/// Adaptive integration by recursive bisection.
///
/// An interval is accepted once the 10-point Gauss value on it agrees with the
/// sum over its two halves to `max(abs_tol, rel_tol·|value|)`. The tolerance is
/// not split between children, so chains of intervals shrinking toward an
/// integrable endpoint singularity terminate.
#[derive(Debug, Clone, Copy)]
pub struct Adaptive {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: usize,
}

impl Adaptive {
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, f: &mut F) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        let rule = gauss10();
        let whole = rule.integrate(a, b, &mut *f);
        let mut failed = false;
        let value = self.recurse(rule, a, b, whole, 0, f, &mut failed);
        if failed {
            Err(Error::QuadratureNotConverged { estimate: value })
        } else {
            Ok(value)
        }
    }

    /// Integrates over `[a, b]` split at the given interior breakpoints.
    pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        breaks: &[f64],
        f: &mut F,
    ) -> Result<f64> {
        let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut total = 0.0;
        let mut lo = a;
        for &c in cuts.iter().chain(std::iter::once(&b)) {
            total += self.integrate(lo, c, f)?;
            lo = c;
        }
        Ok(total)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: FnMut(f64) -> f64>(
        &self,
        rule: &GaussRule,
        a: f64,
        b: f64,
        whole: f64,
        depth: usize,
        f: &mut F,
        failed: &mut bool,
    ) -> f64 {
        if *failed {
            return whole;
        }
        let m = 0.5 * (a + b);
        let left = rule.integrate(a, m, &mut *f);
        let right = rule.integrate(m, b, &mut *f);
        let split = left + right;
        let tol = self.abs_tol.max(self.rel_tol * split.abs());
        if (split - whole).abs() <= tol {
            return split;
        }
        if depth >= self.max_depth || m <= a || m >= b {
            *failed = true;
            return split;
        }
        self.recurse(rule, a, m, left, depth + 1, f, failed)
            + self.recurse(rule, m, b, right, depth + 1, f, failed)
    }
}
