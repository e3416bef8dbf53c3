//! Symmetry-breaking certificates.
//!
//! If some competitor measure has energy strictly below a lower bound valid
//! for every radial probability measure, no minimizer is radial. Three
//! certificates are provided:
//!
//! * [`certify_prototype`]: the prototype well `W_eps` against `d + 1` Dirac
//!   masses at the vertices of the unit simplex.
//! * [`certify_general`]: `W = W_eps + W1` with `W1 >= 0` radial, against the
//!   same masses spread over balls of radius `eta`. The competitor energy is
//!   bounded by `-d/(2(d+1)) + lhs/2`, with `lhs` the sup over `|x| < 1 + eta`
//!   of the average of `W1` over `B(x; eta)`; radial energies are bounded
//!   below by the prototype bound since `W1 >= 0`.
//! * [`certify_composite`]: the smooth composite potential, whose excess over
//!   `W_eps` plays the role of `W1`, plus a check of its attractive-repulsive
//!   shape.
//!
//! Every report stores `margin = radial_lower_bound - competitor_energy` and
//! `passed = margin > slack`. For the general and composite kinds this makes
//! `margin = (condition_rhs - condition_lhs) / 2` with
//! `condition_rhs = d/(d+1) - 1/(2(1 - c0))`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{default_shape_grid, verify_shape, Composite, Excess, RadialFunction, RadialPotential, ShapeReport};
use crate::quadrature::QuadratureSpec;
use crate::radial_energy::{
    annulus_excess_bound, ball_average, ball_average_caps, power_law_ball_average_bound, radial_lower_bound,
    shell_ratio, BoundMode, BoundReport, SearchSpec,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Absolute slack required on top of a zero margin.
pub const DEFAULT_SLACK: f64 = 1e-9;

/// Threshold below which the prototype certificate is guaranteed to pass
/// with the analytic kernel bound.
pub fn epsilon0(dim: usize) -> Result<f64> {
    if dim < 2 {
        return Err(Error::domain(format!("dimension must be at least 2, got {dim}")));
    }
    if dim == 2 {
        Ok((5.0 * PI / (44.0 * 2f64.sqrt())).powi(2))
    } else {
        let d = dim as f64;
        Ok((d - 1.0) / (32.0 * d * shell_ratio(dim)))
    }
}

/// `-d / (2(d+1))`, the prototype energy of `d + 1` equal masses at the
/// vertices of the unit simplex.
pub fn simplex_energy_prototype(dim: usize) -> f64 {
    let d = dim as f64;
    -d / (2.0 * (d + 1.0))
}

/// `d/(d+1) - 1/(2(1 - c0))`.
pub fn general_condition_rhs(dim: usize, c0: f64) -> f64 {
    let d = dim as f64;
    d / (d + 1.0) - 0.5 / (1.0 - c0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Prototype,
    General,
    Composite,
}

/// Where and how the ball-average sup was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LhsSearch {
    pub argmax: f64,
    pub grid_max: f64,
    pub inflation: f64,
    pub grid_step: f64,
    pub final_step: f64,
    pub grid_points: usize,
    /// Upper end of the searched range, `(1 + eta)(1 - 1e-12)`.
    pub x_max: f64,
    /// Ball average at the argmax recomputed by shell decomposition.
    pub shell_form_value: f64,
}

/// Long-range check `E[competitor] < W_inf / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExistenceCheck {
    pub competitor_energy: f64,
    pub half_far_value: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub schema_version: u32,
    pub kind: CertificateKind,
    pub dim: usize,
    pub eps: f64,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub power_s: Option<f64>,
    pub c0: f64,
    pub radial_lower_bound: f64,
    /// Exact for the prototype kind; an upper bound otherwise.
    pub competitor_energy: f64,
    pub condition_lhs: Option<f64>,
    pub condition_rhs: Option<f64>,
    pub margin: f64,
    pub slack: f64,
    pub passed: bool,
    /// Prototype kind: the kernel sup and the threshold `(d-1)/d` it must stay below.
    pub kernel_sup: f64,
    pub kernel_sup_threshold: f64,
    pub lhs_search: Option<LhsSearch>,
    /// Composite kind: the sum of the power-law and annulus ball-average bounds.
    pub proof_chain_bound: Option<f64>,
    pub w1_min: Option<f64>,
    pub shape: Option<ShapeReport>,
    pub shape_error: Option<String>,
    pub shape_passed: Option<bool>,
    pub existence: Option<ExistenceCheck>,
    pub notes: Vec<String>,
    pub audit: BoundReport,
    /// Fully resolved settings of the run that produced the report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

impl CertificateReport {
    /// `passed` as implied by the stored fields.
    pub fn recompute_passed(&self) -> bool {
        self.margin > self.slack && self.shape_passed.unwrap_or(true)
    }

    /// Checks that stored derived fields agree with each other.
    pub fn is_consistent(&self) -> bool {
        let margin_ok = (self.margin - (self.radial_lower_bound - self.competitor_energy)).abs() <= 1e-15;
        let cond_ok = match (self.condition_lhs, self.condition_rhs) {
            (Some(l), Some(r)) => (self.margin - 0.5 * (r - l)).abs() <= 1e-12,
            (None, None) => true,
            _ => false,
        };
        margin_ok && cond_ok && self.passed == self.recompute_passed()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: CertificateReport = serde_json::from_str(text)?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(Error::domain(format!(
                "unsupported report schema version {} (expected {SCHEMA_VERSION})",
                r.schema_version
            )));
        }
        Ok(r)
    }
}

/// Settings shared by all certificates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub mode: BoundMode,
    pub quadrature: QuadratureSpec,
    pub search: SearchSpec,
    pub slack: f64,
    /// Step of the grid over `|x|` in the ball-average sup.
    pub lhs_grid_step: f64,
    pub lhs_refinements: usize,
    /// Step of the nonnegativity scan of `W1`.
    pub w1_grid_step: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            mode: BoundMode::NumericSup,
            quadrature: QuadratureSpec::default(),
            search: SearchSpec::default(),
            slack: DEFAULT_SLACK,
            lhs_grid_step: 1e-3,
            lhs_refinements: 3,
            w1_grid_step: 1e-4,
        }
    }
}

impl CertifyOptions {
    pub fn with_mode(self, mode: BoundMode) -> Self {
        CertifyOptions { mode, ..self }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    Ok(())
}

fn base_report(kind: CertificateKind, dim: usize, eps: f64, bound: BoundReport, competitor: f64, slack: f64) -> CertificateReport {
    let margin = bound.lower_bound - competitor;
    CertificateReport {
        schema_version: SCHEMA_VERSION,
        kind,
        dim,
        eps,
        eta: None,
        alpha: None,
        beta: None,
        power_s: None,
        c0: bound.c0,
        radial_lower_bound: bound.lower_bound,
        competitor_energy: competitor,
        condition_lhs: None,
        condition_rhs: None,
        margin,
        slack,
        passed: margin > slack,
        kernel_sup: bound.sup_value,
        kernel_sup_threshold: (dim as f64 - 1.0) / dim as f64,
        lhs_search: None,
        proof_chain_bound: None,
        w1_min: None,
        shape: None,
        shape_error: None,
        shape_passed: None,
        existence: None,
        notes: Vec::new(),
        audit: bound,
        run_config: None,
    }
}

/// Prototype well against simplex Dirac masses.
pub fn certify_prototype(eps: f64, dim: usize, opts: &CertifyOptions) -> Result<CertificateReport> {
    check_eps(eps)?;
    let bound = radial_lower_bound(eps, dim, opts.mode, &opts.quadrature, &opts.search)?;
    let mut rep = base_report(CertificateKind::Prototype, dim, eps, bound, simplex_energy_prototype(dim), opts.slack);
    if (rep.kernel_sup < rep.kernel_sup_threshold) != (rep.margin > 0.0) {
        rep.notes.push("kernel sup test and margin sign disagree at rounding level".into());
    }
    Ok(rep)
}

/// Sup of the ball average of `w1` over `|x| in [0, 1 + eta)`.
pub fn ball_average_sup<W: RadialFunction + ?Sized>(
    w1: &W,
    eta: f64,
    dim: usize,
    opts: &CertifyOptions,
) -> Result<(f64, LhsSearch)> {
    let q = &opts.quadrature;
    let h = opts.lhs_grid_step;
    if !(h > 0.0) {
        return Err(Error::precondition("ball-average grid step must be positive"));
    }
    let x_max = (1.0 + eta) * (1.0 - 1e-12);
    let n = (x_max / h).floor() as usize;
    let mut xs: Vec<f64> = (0..=n).map(|k| k as f64 * h).filter(|&x| x < x_max).collect();
    xs.push(x_max);
    let avg = |x: f64| ball_average_caps(w1, x, eta, dim, q);
    let vals: Vec<f64> = xs.iter().map(|&x| avg(x)).collect::<Result<_>>()?;
    let mut grid_points = xs.len();

    // refine around the three best local grid maxima
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = Vec::new();
    for &k in &order {
        if picked.len() == 3 {
            break;
        }
        if picked.iter().all(|&p| p.abs_diff(k) > 2) {
            picked.push(k);
        }
    }
    let mut best = (f64::NEG_INFINITY, 0.0);
    let mut step = h;
    for &k in &picked {
        let (mut cx, mut cv) = (xs[k], vals[k]);
        step = h;
        for _ in 0..opts.lhs_refinements {
            let fine = step / 10.0;
            for i in -10i32..=10 {
                let x = (cx + i as f64 * fine).clamp(0.0, x_max);
                let v = avg(x)?;
                grid_points += 1;
                if v > cv {
                    (cx, cv) = (x, v);
                }
            }
            step = fine;
        }
        if cv > best.0 {
            best = (cv, cx);
        }
    }
    let (grid_max, argmax) = best;
    let mut inflation: f64 = 0.0;
    for x in [argmax - step, argmax + step] {
        let v = avg(x.clamp(0.0, x_max))?;
        inflation = inflation.max((v - grid_max).abs());
        grid_points += 1;
    }
    let tight = QuadratureSpec { tol: q.tol.min(1e-12), ..*q };
    let shell_form_value = ball_average(w1, argmax, eta, dim, &tight)?;
    Ok((
        grid_max + inflation,
        LhsSearch { argmax, grid_max, inflation, grid_step: h, final_step: step, grid_points, x_max, shell_form_value },
    ))
}

fn general_report<W: RadialFunction + ?Sized>(
    kind: CertificateKind,
    w1: &W,
    eps: f64,
    eta: f64,
    dim: usize,
    opts: &CertifyOptions,
) -> Result<CertificateReport> {
    check_eps(eps)?;
    let e0 = epsilon0(dim)?;
    if !(eps < e0) {
        return Err(Error::precondition(format!("eps = {eps} must be below epsilon0({dim}) = {e0}")));
    }
    if !(eta > 0.0 && eta <= 0.5 * eps) {
        return Err(Error::precondition(format!("eta = {eta} must lie in (0, eps/2] = (0, {}]", 0.5 * eps)));
    }
    // W1 only enters through balls of radius eta around |x| < 1 + eta
    let reach = 1.0 + 2.0 * eta;
    let steps = (reach / opts.w1_grid_step).ceil() as usize;
    let w1_min = (1..=steps)
        .map(|k| w1.value((k as f64 * opts.w1_grid_step).min(reach)))
        .fold(f64::INFINITY, f64::min);
    if w1_min < -1e-12 {
        return Err(Error::precondition(format!("W1 must be nonnegative; found {w1_min:e} on (0, {reach}]")));
    }
    let bound = radial_lower_bound(eps, dim, opts.mode, &opts.quadrature, &opts.search)?;
    let (lhs, search) = ball_average_sup(w1, eta, dim, opts)?;
    let rhs = general_condition_rhs(dim, bound.c0);
    let competitor = simplex_energy_prototype(dim) + 0.5 * lhs;
    let mut rep = base_report(kind, dim, eps, bound, competitor, opts.slack);
    rep.eta = Some(eta);
    rep.condition_lhs = Some(lhs);
    rep.condition_rhs = Some(rhs);
    rep.lhs_search = Some(search);
    rep.w1_min = Some(w1_min);
    Ok(rep)
}

/// `W_eps + W1` against simplex balls of radius `eta`.
pub fn certify_general<W: RadialFunction + ?Sized>(
    w1: &W,
    eps: f64,
    eta: f64,
    dim: usize,
    opts: &CertifyOptions,
) -> Result<CertificateReport> {
    general_report(CertificateKind::General, w1, eps, eta, dim, opts)
}

/// The composite potential with `eta = eps / 2` unless overridden.
///
/// `alpha = 0` is accepted for diagnosis: the report fails its shape check.
pub fn certify_composite(
    eps: f64,
    alpha: f64,
    beta: f64,
    power_s: f64,
    dim: usize,
    eta: Option<f64>,
    opts: &CertifyOptions,
) -> Result<CertificateReport> {
    let c = if alpha == 0.0 {
        Composite::new_unchecked_alpha(eps, alpha, beta, power_s, dim)?
    } else {
        Composite::new(eps, alpha, beta, power_s, dim)?
    };
    let eta = eta.unwrap_or(0.5 * eps);
    let w1 = Excess { composite: c };
    let mut rep = general_report(CertificateKind::Composite, &w1, eps, eta, dim, opts)?;
    rep.alpha = Some(alpha);
    rep.beta = Some(beta);
    rep.power_s = Some(power_s);
    rep.proof_chain_bound =
        Some(power_law_ball_average_bound(alpha, power_s, eta, dim) + annulus_excess_bound(beta, eta, eps, dim));

    let (step, r_far) = default_shape_grid(&c);
    match verify_shape(&RadialPotential::Composite(c), step, r_far) {
        Ok(s) => {
            rep.shape = Some(s);
            rep.shape_passed = Some(alpha > 0.0);
        }
        Err(e) => {
            rep.shape_error = Some(e.to_string());
            rep.shape_passed = Some(false);
        }
    }
    if alpha == 0.0 {
        rep.notes.push("alpha = 0: no short-range repulsion, shape check failed by definition".into());
    }
    let half_far = 0.5 * c.far_value();
    rep.existence = Some(ExistenceCheck {
        competitor_energy: rep.competitor_energy,
        half_far_value: half_far,
        holds: rep.competitor_energy < half_far,
    });
    rep.passed = rep.recompute_passed();
    Ok(rep)
}

/// Geometric schedule `alpha_k = alpha0 * alpha_factor^k`, `beta_k = beta0 * beta_factor^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaBetaSchedule {
    pub alpha0: f64,
    pub beta0: f64,
    pub alpha_factor: f64,
    pub beta_factor: f64,
    pub alpha_min: f64,
}

impl AlphaBetaSchedule {
    /// Halve both from `alpha = 0.1`, `beta = eps / 2`.
    pub fn tied(eps: f64) -> Self {
        AlphaBetaSchedule { alpha0: 0.1, beta0: 0.5 * eps, alpha_factor: 0.5, beta_factor: 0.5, alpha_min: 1e-12 }
    }
}

/// One tried pair and why it was rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub alpha: f64,
    pub beta: f64,
    pub margin: Option<f64>,
    pub passed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaBetaSearch {
    pub alpha: f64,
    pub beta: f64,
    pub report: CertificateReport,
    pub trail: Vec<SearchStep>,
}

/// Shrinks `(alpha, beta)` along the schedule until the composite
/// certificate passes; the first passing pair is the largest tested one.
pub fn search_alpha_beta(
    eps: f64,
    power_s: f64,
    dim: usize,
    schedule: &AlphaBetaSchedule,
    opts: &CertifyOptions,
) -> Result<AlphaBetaSearch> {
    check_eps(eps)?;
    let e0 = epsilon0(dim)?;
    if !(eps < e0) {
        return Err(Error::precondition(format!("eps = {eps} must be below epsilon0({dim}) = {e0}")));
    }
    let d = dim as f64;
    if !(power_s > d - 2.0 && power_s < d) {
        return Err(Error::precondition(format!("power_s must lie in ({}, {d}), got {power_s}", d - 2.0)));
    }
    let (mut alpha, mut beta) = (schedule.alpha0, schedule.beta0);
    let mut trail = Vec::new();
    while alpha >= schedule.alpha_min {
        match certify_composite(eps, alpha, beta, power_s, dim, None, opts) {
            Ok(rep) => {
                trail.push(SearchStep { alpha, beta, margin: Some(rep.margin), passed: rep.passed, error: None });
                if rep.passed {
                    return Ok(AlphaBetaSearch { alpha, beta, report: rep, trail });
                }
            }
            Err(Error::Domain(msg)) => {
                // beta too small for the ramp floor to be representable
                trail.push(SearchStep { alpha, beta, margin: None, passed: false, error: Some(msg.clone()) });
                return Err(Error::SearchExhausted(format!(
                    "composite construction failed at alpha = {alpha}, beta = {beta}: {msg}"
                )));
            }
            Err(e) => return Err(e),
        }
        alpha *= schedule.alpha_factor;
        beta *= schedule.beta_factor;
    }
    Err(Error::SearchExhausted(format!("no passing pair with alpha >= {}", schedule.alpha_min)))
}
