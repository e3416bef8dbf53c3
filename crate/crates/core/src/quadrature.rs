//! Composite Gauss-Legendre quadrature with adaptive bisection.
//!
//! Everything in the crate that integrates goes through [`integrate`]: the
//! interval is first cut at caller-supplied breakpoints (where the integrand
//! has jumps or kinks), every piece is split into `panels` equal panels, and
//! each panel is bisected until the 32-point rule on the panel agrees with the
//! rule applied to its two halves.
//!
//! Integrable endpoint singularities are handled by a polynomial grading
//! substitution `x = a + h u^m`, which turns `(x - a)^p` with `p > -1` into a
//! smooth (or much milder) integrand in `u`.

use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the rule by Newton iteration on the Legendre polynomial,
    /// starting from the Chebyshev-like initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Applies the rule to `f` on `[a, b]`.
    #[inline]
    pub fn apply<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// The 32-point rule used for every adaptive panel.
pub static GL32: LazyLock<GaussLegendre> = LazyLock::new(|| GaussLegendre::new(32));

/// Variable in which a shell-pair integral is carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureMethod {
    /// Integrate in the polar angle between the two points; the spherical
    /// Jacobian becomes `sin^(d-2)` and the kernel has no endpoint singularity.
    #[default]
    GaussPhi,
    /// Integrate in the distance `t` directly, grading toward the support
    /// endpoints where the kernel blows up for `d = 2`.
    GaussT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub method: QuadratureMethod,
    /// Equal panels per breakpoint interval before adaptive bisection.
    pub panels: usize,
    pub tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { method: QuadratureMethod::GaussPhi, panels: 1, tol: 1e-10 }
    }
}

impl QuadratureSpec {
    pub fn with_method(self, method: QuadratureMethod) -> Self {
        QuadratureSpec { method, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.panels == 0 {
            return Err(Error::precondition("quadrature needs at least one panel"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::precondition(format!("quadrature tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Endpoint grading for integrable singularities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Grading {
    pub left: bool,
    pub right: bool,
}

impl Grading {
    pub const NONE: Grading = Grading { left: false, right: false };
    pub const LEFT: Grading = Grading { left: true, right: false };
    pub const RIGHT: Grading = Grading { left: false, right: true };
    pub const BOTH: Grading = Grading { left: true, right: true };
}

const GRADING_POWER: i32 = 6;
const MAX_DEPTH: usize = 56;

/// Integrates `f` over `[a, b]`, cutting at every breakpoint strictly inside.
///
/// Breakpoints outside `(a, b)` are ignored, so callers can pass the raw list
/// of potential breakpoints mapped into the integration variable.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], spec: &QuadratureSpec) -> Result<f64> {
    integrate_graded(f, a, b, breaks, spec, Grading::NONE)
}

/// Like [`integrate`], with grading at the outer endpoints `a` and/or `b`.
pub fn integrate_graded<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    spec: &QuadratureSpec,
    grading: Grading,
) -> Result<f64> {
    if b < a {
        return Ok(-integrate_graded(f, b, a, breaks, spec, Grading { left: grading.right, right: grading.left })?);
    }
    if b == a {
        return Ok(0.0);
    }
    let mut cuts = Vec::with_capacity(breaks.len() + 2);
    cuts.push(a);
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b && x.is_finite()).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    cuts.extend(inner);
    cuts.push(b);

    let n = cuts.len() - 1;
    let mut pieces: Vec<(f64, f64, Grading)> = Vec::with_capacity(n);
    for k in 0..n {
        let g = Grading { left: grading.left && k == 0, right: grading.right && k == n - 1 };
        pieces.push((cuts[k], cuts[k + 1], g));
    }
    integrate_pieces(&f, &pieces, spec, b - a)
}

fn integrate_pieces<F: Fn(f64) -> f64>(
    f: &F,
    pieces: &[(f64, f64, Grading)],
    spec: &QuadratureSpec,
    total_len: f64,
) -> Result<f64> {
    // Panels are expressed on the unit interval of each (possibly graded)
    // substitution so that one adaptive driver serves all cases.
    let mut panels: Vec<Panel> = Vec::new();
    for &(lo, hi, g) in pieces {
        let len = hi - lo;
        if len <= 0.0 {
            continue;
        }
        let subs: Vec<(f64, f64, Grading)> = match (g.left, g.right) {
            (true, true) => {
                let mid = 0.5 * (lo + hi);
                vec![(lo, mid, Grading::LEFT), (mid, hi, Grading::RIGHT)]
            }
            _ => vec![(lo, hi, g)],
        };
        for (sa, sb, sg) in subs {
            let map = if sg.left {
                Map::GradedLeft { a: sa, h: sb - sa }
            } else if sg.right {
                Map::GradedRight { b: sb, h: sb - sa }
            } else {
                Map::Linear
            };
            let (u0, u1) = match map {
                Map::Linear => (sa, sb),
                _ => (0.0, 1.0),
            };
            let w = (sb - sa) / total_len;
            let step = (u1 - u0) / spec.panels as f64;
            for p in 0..spec.panels {
                let pa = u0 + step * p as f64;
                let pb = if p + 1 == spec.panels { u1 } else { pa + step };
                panels.push(Panel { a: pa, b: pb, map, weight: w / spec.panels as f64 });
            }
        }
    }

    let rule = &*GL32;
    let estimates: Vec<f64> = panels.iter().map(|p| p.apply(rule, f)).collect();
    let scale = estimates.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    if !scale.is_finite() {
        return Ok(estimates.iter().sum());
    }

    // panels whose disagreement is far below the rounding level of the whole
    // integral are accepted; bisecting them further only chases noise
    let floor = 1e-4 * f64::EPSILON * scale;
    let mut total = 0.0;
    for (p, est) in panels.iter().zip(estimates) {
        total += adapt(f, rule, p, est, spec.tol * scale * p.weight, spec.tol, floor, 0)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
enum Map {
    Linear,
    GradedLeft { a: f64, h: f64 },
    GradedRight { b: f64, h: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    map: Map,
    /// Share of the tolerance budget owned by this panel.
    weight: f64,
}

impl Panel {
    fn apply<F: Fn(f64) -> f64>(&self, rule: &GaussLegendre, f: &F) -> f64 {
        eval_mapped(rule, f, self.map, self.a, self.b)
    }

    fn halves(&self) -> (Panel, Panel) {
        let mid = 0.5 * (self.a + self.b);
        (
            Panel { a: self.a, b: mid, weight: 0.5 * self.weight, ..*self },
            Panel { a: mid, b: self.b, weight: 0.5 * self.weight, ..*self },
        )
    }
}

fn eval_mapped<F: Fn(f64) -> f64>(rule: &GaussLegendre, f: &F, map: Map, a: f64, b: f64) -> f64 {
    let m = GRADING_POWER;
    match map {
        Map::Linear => rule.apply(f, a, b),
        Map::GradedLeft { a: x0, h } => rule.apply(
            &|u: f64| {
                let um1 = u.powi(m - 1);
                f(x0 + h * um1 * u) * (m as f64) * h * um1
            },
            a,
            b,
        ),
        // `x1 - h u^m` rounds to `x1` once `h u^m` drops below half an ulp of
        // `x1`; a sample that lands on a singular endpoint is dropped. The
        // lost mass is of order `ulp(x1)^{1/2}` for an inverse square root,
        // so integrands singular at their right end should be reflected.
        Map::GradedRight { b: x1, h } => rule.apply(
            &|u: f64| {
                let um1 = u.powi(m - 1);
                let v = f(x1 - h * um1 * u);
                if v.is_finite() {
                    v * (m as f64) * h * um1
                } else {
                    0.0
                }
            },
            a,
            b,
        ),
    }
}

/// A panel is accepted when the bisection changes its value by less than its
/// share `tol` of the budget, or by less than `rel` times its own magnitude.
/// Either way the accepted errors sum to at most `rel` times the integral of
/// `|f|`; the relative test keeps a steep peak missed by the coarse pass from
/// driving its neighbours to rounding level.
#[allow(clippy::too_many_arguments)]
fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    rule: &GaussLegendre,
    panel: &Panel,
    whole: f64,
    tol: f64,
    rel: f64,
    floor: f64,
    depth: usize,
) -> Result<f64> {
    let (left, right) = panel.halves();
    let l = left.apply(rule, f);
    let r = right.apply(rule, f);
    let refined = l + r;
    let err = (refined - whole).abs();
    if err <= tol.max(floor).max(rel * (l.abs() + r.abs())) || !refined.is_finite() {
        return Ok(refined);
    }
    let width = (panel.b - panel.a).abs();
    if depth >= MAX_DEPTH || width <= f64::EPSILON * panel.a.abs().max(panel.b.abs()).max(1e-300) {
        // Give the panel a generous final allowance before declaring failure:
        // deep panels of a graded map are tiny in absolute terms.
        if err <= 1e3 * tol {
            return Ok(refined);
        }
        return Err(Error::Quadrature { a: panel.a, b: panel.b, estimate: err, tol });
    }
    Ok(adapt(f, rule, &left, l, 0.5 * tol, rel, floor, depth + 1)?
        + adapt(f, rule, &right, r, 0.5 * tol, rel, floor, depth + 1)?)
}
