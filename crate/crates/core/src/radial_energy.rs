//! Energies of radial measures via shell decomposition.
//!
//! For points uniformly distributed on spheres of radii `r` and `s` in `R^d`,
//! the distance `t = |x - y|` has density
//!
//! ```text
//! K_{r,s}(t) = (|S^{d-2}| / |S^{d-1}|) (1 - ((r^2 + s^2 - t^2) / (2rs))^2)^{(d-3)/2} t / (rs)
//! ```
//!
//! on `(|r - s|, r + s)`. The shell-pair energy is `W~(r, s) = ∫ K_{r,s}(t) w(t) dt`,
//! and the energy of `sum_i w_i delta_(r_i)` is `1/2 sum_ij w_i w_j W~(r_i, r_j)`.
//!
//! Integrals are computed in the angle `phi` between the two points, where
//! `t^2 = r^2 + s^2 - 2rs cos(phi)` and the density becomes
//! `sin^{d-2}(phi)` up to normalization.
//!
//! The module also provides the sup of `∫_{1-eps}^{1+eps} K_{r,s}` over
//! `r >= s >= (1 - eps)/2`, the resulting lower bound `-1/(4(1 - c0))` on
//! the prototype energy of radial measures, and ball averages of radial
//! functions.

use std::cell::RefCell;
use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{validate_profile, MollifiedBallMeasure, RadialProfile};
use crate::potential::RadialFunction;
use crate::quadrature::{integrate, integrate_graded, Grading, QuadratureMethod, QuadratureSpec, GL32};
use crate::sampling::{chunked_moments, in_ball, unit_vector, McEstimate};

/// `|S^n|`, the surface area of the unit sphere in `R^{n+1}`.
pub fn surface_area(n: usize) -> f64 {
    let h = (n as f64 + 1.0) / 2.0;
    2.0 * (h * PI.ln() - libm::lgamma(h)).exp()
}

/// `|B(0;1)|` in `R^d`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    surface_area(dim - 1) / dim as f64
}

/// `|S^{d-2}| / |S^{d-1}|`.
pub fn shell_ratio(dim: usize) -> f64 {
    if dim == 2 {
        return 1.0 / PI;
    }
    let (a, b) = ((dim as f64 - 1.0) / 2.0, dim as f64 / 2.0);
    (libm::lgamma(b) - libm::lgamma(a)).exp() / PI.sqrt()
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::domain(format!("dimension must be at least 2, got {dim}")));
    }
    Ok(())
}

/// `∫_0^theta sin^n`, exact for `n <= 1` and by a 32-point rule otherwise
/// (the integrand is a trigonometric polynomial of degree `n`).
pub fn sin_power_integral(n: usize, theta: f64) -> f64 {
    match n {
        0 => theta,
        1 => {
            let h = (0.5 * theta).sin();
            2.0 * h * h
        }
        _ => GL32.apply(&|x: f64| x.sin().powi(n as i32), 0.0, theta),
    }
}

/// Angle `phi` in `[0, pi]` with `|r e - s e'| = t` for unit vectors at angle `phi`.
///
/// Uses `t^2 = (r - s)^2 + 4rs sin^2(phi/2)` near `0` and the mirrored form
/// near `pi` to avoid cancellation.
pub fn angle_of_distance(r: f64, s: f64, t: f64) -> f64 {
    let lo = (r - s).abs();
    let hi = r + s;
    if t <= lo {
        return 0.0;
    }
    if t >= hi {
        return PI;
    }
    let x = ((t - lo) * (t + lo) / (4.0 * r * s)).sqrt();
    if x < std::f64::consts::FRAC_1_SQRT_2 {
        2.0 * x.min(1.0).asin()
    } else {
        let y = ((hi - t) * (hi + t) / (4.0 * r * s)).sqrt();
        PI - 2.0 * y.min(1.0).asin()
    }
}

/// Distance between points on spheres of radii `r`, `s` at angle `phi`.
#[inline]
pub fn distance_of_angle(r: f64, s: f64, phi: f64) -> f64 {
    let h = (0.5 * phi).sin();
    ((r - s) * (r - s) + 4.0 * r * s * h * h).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub r: f64,
    pub s: f64,
    pub dim: usize,
}

impl KernelParams {
    pub fn new(r: f64, s: f64, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if !(r >= 0.0 && s >= 0.0 && r.is_finite() && s.is_finite()) {
            return Err(Error::domain(format!("shell radii must be finite and nonnegative, got ({r}, {s})")));
        }
        Ok(KernelParams { r: r.max(s), s: r.min(s), dim })
    }

    fn require_positive(&self) -> Result<()> {
        if !(self.s > 0.0) {
            return Err(Error::domain("kernel needs both radii positive"));
        }
        Ok(())
    }

    pub fn support(&self) -> (f64, f64) {
        (self.r - self.s, self.r + self.s)
    }
}

/// `K_{r,s}(t)`; zero outside the support and `+inf` at its ends for `d = 2`.
pub fn kernel_eval(kp: &KernelParams, t: f64) -> Result<f64> {
    kp.require_positive()?;
    let (lo, hi) = kp.support();
    if t < lo || t > hi {
        return Ok(0.0);
    }
    Ok(kernel_at_offsets(kp, t, t - lo, hi - t))
}

/// `K_{r,s}(t)` given `dl = t - lo` and `dh = hi - t` separately, so that
/// callers integrating toward an endpoint can pass the offset exactly.
fn kernel_at_offsets(kp: &KernelParams, t: f64, dl: f64, dh: f64) -> f64 {
    let (lo, hi) = kp.support();
    let (r, s) = (kp.r, kp.s);
    let ratio = shell_ratio(kp.dim);
    if kp.dim == 2 {
        // 2t / sqrt((t^2 - lo^2)(hi^2 - t^2)), factored so that lo = 0 stays finite
        if t == 0.0 {
            return ratio * 2.0 / hi;
        }
        return ratio * 2.0 * t / (dl.sqrt() * (t + lo).sqrt() * dh.sqrt() * (hi + t).sqrt());
    }
    let rs2 = 2.0 * r * s;
    // 1 - c^2 = (1 - c)(1 + c) with c = (r^2 + s^2 - t^2) / (2rs)
    let one_minus_c2 = (dl * (t + lo) / rs2) * (dh * (hi + t) / rs2);
    let shape = one_minus_c2.max(0.0).powf((kp.dim as f64 - 3.0) / 2.0);
    ratio * shape * t / (r * s)
}

/// `∫_a^b K_{r,s}(t) g(t) dt` in the distance variable, `lo <= a < b <= hi`.
///
/// Halves that touch a support endpoint are integrated in the offset from
/// that endpoint with grading, which handles the `d = 2` singularity without
/// cancellation in `hi - t`.
fn integrate_in_t<G: Fn(f64) -> f64>(
    kp: &KernelParams,
    g: G,
    a: f64,
    b: f64,
    breaks: &[f64],
    q: &QuadratureSpec,
) -> Result<f64> {
    let (lo, hi) = kp.support();
    let mid = 0.5 * (a + b);
    let kg = |t: f64, dl: f64, dh: f64| {
        let k = kernel_at_offsets(kp, t, dl, dh);
        if k == 0.0 || !k.is_finite() {
            0.0
        } else {
            k * g(t)
        }
    };
    let left = if a == lo {
        let br: Vec<f64> = breaks.iter().map(|&x| x - lo).collect();
        integrate_graded(|d: f64| kg(lo + d, d, hi - lo - d), 0.0, mid - lo, &br, q, Grading::LEFT)?
    } else {
        integrate(|t: f64| kg(t, t - lo, hi - t), a, mid, breaks, q)?
    };
    let right = if b == hi {
        let br: Vec<f64> = breaks.iter().map(|&x| hi - x).collect();
        integrate_graded(|d: f64| kg(hi - d, hi - lo - d, d), 0.0, hi - mid, &br, q, Grading::LEFT)?
    } else {
        integrate(|t: f64| kg(t, t - lo, hi - t), mid, b, breaks, q)?
    };
    Ok(left + right)
}

/// Captures the first error raised inside an integrand closure.
struct ErrorSlot(RefCell<Option<Error>>);

impl ErrorSlot {
    fn new() -> Self {
        ErrorSlot(RefCell::new(None))
    }

    fn catch(&self, v: Result<f64>) -> f64 {
        match v {
            Ok(x) => x,
            Err(e) => {
                self.0.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    }

}

/// `∫_a^b K_{r,s}(t) dt`.
pub fn kernel_partial_integral(kp: &KernelParams, a: f64, b: f64, q: &QuadratureSpec) -> Result<f64> {
    kp.require_positive()?;
    q.validate()?;
    if a > b {
        return Err(Error::domain(format!("integration bounds out of order: [{a}, {b}]")));
    }
    let (lo, hi) = kp.support();
    let (a, b) = (a.max(lo), b.min(hi));
    if a >= b {
        return Ok(0.0);
    }
    let n = kp.dim - 2;
    match q.method {
        QuadratureMethod::GaussPhi => {
            let (pa, pb) = (angle_of_distance(kp.r, kp.s, a), angle_of_distance(kp.r, kp.s, b));
            let v = integrate(|p: f64| p.sin().powi(n as i32), pa, pb, &[], q)?;
            Ok(shell_ratio(kp.dim) * v)
        }
        QuadratureMethod::GaussT => integrate_in_t(kp, |_| 1.0, a, b, &[], q),
    }
}

/// The shell-pair energy `W~(r, s)`.
///
/// `W~(r, 0) = w(r)` and `W~(0, 0) = w(0)`. For `w ~ r^{-p}` at the origin
/// with `p >= d - 1`, `W~(r, r)` diverges and `+inf` is returned.
pub fn tilde_w<W: RadialFunction + ?Sized>(w: &W, r: f64, s: f64, dim: usize, q: &QuadratureSpec) -> Result<f64> {
    let kp = KernelParams::new(r, s, dim)?;
    q.validate()?;
    let (r, s) = (kp.r, kp.s);
    if s == 0.0 {
        return Ok(w.value(r));
    }
    let singular = w.origin_singularity();
    if r == s {
        if let Some(p) = singular {
            if p >= dim as f64 - 1.0 {
                return Ok(f64::INFINITY);
            }
        }
    }
    let (lo, hi) = kp.support();
    let n = (dim - 2) as i32;
    let breaks: Vec<f64> = w.breakpoints().into_iter().filter(|&b| b > lo && b < hi).collect();
    let v = match q.method {
        QuadratureMethod::GaussPhi => {
            let phis: Vec<f64> = breaks.iter().map(|&b| angle_of_distance(r, s, b)).collect();
            let f = |p: f64| w.value(distance_of_angle(r, s, p)) * p.sin().powi(n);
            let g = Grading { left: singular.is_some(), right: false };
            integrate_graded(f, 0.0, PI, &phis, q, g)? * shell_ratio(dim)
        }
        QuadratureMethod::GaussT => integrate_in_t(&kp, |t| w.value(t), lo, hi, &breaks, q)?,
    };
    Ok(v)
}

/// Monte Carlo estimate of `W~(r, s)`: one point is fixed at `r e_1`, the
/// other is uniform on the sphere of radius `s`.
pub fn tilde_w_mc_oracle<W: RadialFunction + ?Sized>(
    w: &W,
    r: f64,
    s: f64,
    dim: usize,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let kp = KernelParams::new(r, s, dim)?;
    if n_samples == 0 {
        return Err(Error::domain("Monte Carlo needs at least one sample"));
    }
    if kp.s == 0.0 {
        return Ok(McEstimate { estimate: w.value(kp.r), stderr: 0.0, samples: n_samples as u64 });
    }
    let (r, s) = (kp.r, kp.s);
    let m = chunked_moments(n_samples, seed, 0, |rng| {
        let mut y = vec![0.0; dim];
        unit_vector(rng, &mut y);
        // |r e1 - s y|^2 = (r - s)^2 + 2rs(1 - y_1)
        let t = ((r - s) * (r - s) + 2.0 * r * s * (1.0 - y[0])).max(0.0).sqrt();
        w.value(t)
    });
    Ok(McEstimate { estimate: m.mean, stderr: m.stderr(), samples: m.count })
}

/// `1/2 sum_ij w_i w_j W~(r_i, r_j)` for a radial profile in `R^dim`.
pub fn radial_energy<W: RadialFunction + ?Sized>(
    w: &W,
    profile: &RadialProfile,
    dim: usize,
    q: &QuadratureSpec,
) -> Result<f64> {
    if !validate_profile(profile) {
        return Err(Error::InvalidMeasure("radial profile is not a probability measure".into()));
    }
    check_dim(dim)?;
    let nodes = &profile.nodes;
    let rows: Vec<Result<f64>> = (0..nodes.len())
        .into_par_iter()
        .map(|i| {
            let mut row = 0.5 * nodes[i].weight * nodes[i].weight * tilde_w(w, nodes[i].radius, nodes[i].radius, dim, q)?;
            for nj in &nodes[i + 1..] {
                row += nodes[i].weight * nj.weight * tilde_w(w, nodes[i].radius, nj.radius, dim, q)?;
            }
            Ok(row)
        })
        .collect();
    let mut total = 0.0;
    for r in rows {
        total += r?;
    }
    Ok(total)
}

/// Monte Carlo energy of a union of uniform balls, self-interaction included.
///
/// Each unordered pair of balls `(i, j)` gets its own deterministic stream;
/// `samples_per_pair` draws of `(x, y)` estimate `E w(|x - y|)`.
pub fn mollified_energy_mc<W: RadialFunction + ?Sized>(
    w: &W,
    m: &MollifiedBallMeasure,
    samples_per_pair: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples_per_pair == 0 {
        return Err(Error::domain("Monte Carlo needs at least one sample per pair"));
    }
    let (centers, weights, eta, dim) = (m.centers(), m.weights(), m.eta(), m.dim());
    let n = centers.len();
    let mut estimate = 0.0;
    let mut var = 0.0;
    let mut stream = 0u64;
    for i in 0..n {
        for j in i..n {
            let (ci, cj) = (&centers[i], &centers[j]);
            let mo = chunked_moments(samples_per_pair, seed, stream, |rng| {
                let mut x = vec![0.0; dim];
                let mut y = vec![0.0; dim];
                in_ball(rng, eta, &mut x);
                in_ball(rng, eta, &mut y);
                let d2: f64 = (0..dim).map(|k| (ci[k] + x[k] - cj[k] - y[k]).powi(2)).sum();
                w.value(d2.sqrt())
            });
            stream += 1;
            let coef = if i == j { 0.5 * weights[i] * weights[i] } else { weights[i] * weights[j] };
            estimate += coef * mo.mean;
            var += coef * coef * mo.stderr().powi(2);
        }
    }
    Ok(McEstimate { estimate, stderr: var.sqrt(), samples: (samples_per_pair * n * (n + 1) / 2) as u64 })
}

/// Grid search parameters for [`kernel_sup`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    /// Initial truncation of the `s` range; doubled until the tail bound is
    /// below the incumbent maximum.
    pub s_max_initial: f64,
    pub max_doublings: usize,
    pub coarse_step: f64,
    pub refinements: usize,
    pub refine_factor: usize,
    /// Local maxima of the coarse grid that are refined.
    pub candidates: usize,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec {
            s_max_initial: 5.0,
            max_doublings: 6,
            coarse_step: 0.01,
            refinements: 3,
            refine_factor: 10,
            candidates: 5,
        }
    }
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_max_initial > 0.0 && self.coarse_step > 0.0) || self.refine_factor < 2 || self.candidates == 0 {
            return Err(Error::precondition(format!("invalid search spec {self:?}")));
        }
        Ok(())
    }

    pub fn final_step(&self) -> f64 {
        self.coarse_step / (self.refine_factor as f64).powi(self.refinements as i32)
    }
}

/// Audit record of a [`kernel_sup`] run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSupReport {
    pub eps: f64,
    pub dim: usize,
    /// Grid maximum plus the safety inflation; the value used downstream.
    pub sup_value: f64,
    pub grid_max: f64,
    pub inflation: f64,
    pub argmax: (f64, f64),
    pub s_min: f64,
    pub s_max: f64,
    /// Upper bound on `F(r, s)` for all `r >= s >= s_max`.
    pub tail_bound: f64,
    pub tail_rule: String,
    pub doublings: usize,
    pub coarse_step: f64,
    pub final_step: f64,
    pub refinements: usize,
    pub candidates: usize,
    pub grid_points: usize,
    pub quadrature: QuadratureSpec,
}

fn tail_bound(eps: f64, dim: usize, s_max: f64) -> (f64, &'static str) {
    if dim == 2 {
        ((2.0 * 2f64.sqrt() / PI) * eps.sqrt() / s_max, "(2 sqrt2 / pi) sqrt(eps) / sqrt(rs), rs >= s_max^2")
    } else {
        (shell_ratio(dim) * 2.0 * eps / (s_max * s_max), "ratio * 2 eps / (rs), rs >= s_max^2")
    }
}

/// Numerical sup of `F(r, s) = ∫_{1-eps}^{1+eps} K_{r,s}` over `r >= s >= (1 - eps)/2`.
///
/// Works in `(s, u = r - s)`: `F` vanishes for `u >= 1 + eps`, so only
/// `s <= s_max` is searched and the region `s > s_max` is covered by the
/// analytic tail bound. A coarse grid is followed by nested refinement around
/// the best local maxima; the result is inflated by the largest change of `F`
/// between the final argmax and its grid neighbours.
pub fn kernel_sup(eps: f64, dim: usize, q: &QuadratureSpec, search: &SearchSpec) -> Result<KernelSupReport> {
    check_dim(dim)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    q.validate()?;
    search.validate()?;
    let s_min = 0.5 * (1.0 - eps);
    let u_max = 1.0 + eps;
    let f = |s: f64, u: f64| -> Result<f64> {
        let kp = KernelParams { r: s + u, s, dim };
        kernel_partial_integral(&kp, 1.0 - eps, 1.0 + eps, q)
    };

    let mut s_max = search.s_max_initial.max(s_min + search.coarse_step);
    for doublings in 0..=search.max_doublings {
        let h = search.coarse_step;
        let ns = ((s_max - s_min) / h).ceil() as usize + 1;
        let nu = (u_max / h).ceil() as usize + 1;
        let s_at = |i: usize| (s_min + i as f64 * h).min(s_max);
        let u_at = |j: usize| (j as f64 * h).min(u_max);
        let values: Vec<f64> = (0..ns * nu)
            .into_par_iter()
            .map(|k| f(s_at(k / nu), u_at(k % nu)))
            .collect::<Result<_>>()?;
        let mut grid_points = values.len();

        // best coarse points, suppressing neighbours of already chosen ones
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        let mut picked: Vec<usize> = Vec::new();
        for &k in &order {
            if picked.len() == search.candidates {
                break;
            }
            let far = picked.iter().all(|&p| {
                let (di, dj) = ((p / nu).abs_diff(k / nu), (p % nu).abs_diff(k % nu));
                di.max(dj) > 3
            });
            if far {
                picked.push(k);
            }
        }

        let clamp_s = |s: f64| s.clamp(s_min, s_max);
        let clamp_u = |u: f64| u.clamp(0.0, u_max);
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        let m = search.refine_factor as i64;
        for &k in &picked {
            let (mut cs, mut cu) = (s_at(k / nu), u_at(k % nu));
            let mut cv = values[k];
            let mut step = h;
            for _ in 0..search.refinements {
                let fine = step / search.refine_factor as f64;
                let pts: Vec<(f64, f64)> = (-m..=m)
                    .flat_map(|i| (-m..=m).map(move |j| (i, j)))
                    .map(|(i, j)| (clamp_s(cs + i as f64 * fine), clamp_u(cu + j as f64 * fine)))
                    .collect();
                let vals: Vec<f64> = pts.par_iter().map(|&(s, u)| f(s, u)).collect::<Result<_>>()?;
                grid_points += pts.len();
                for (p, v) in pts.iter().zip(vals) {
                    if v > cv {
                        (cs, cu, cv) = (p.0, p.1, v);
                    }
                }
                step = fine;
            }
            if cv > best.0 {
                best = (cv, cs, cu);
            }
        }

        let (grid_max, bs, bu) = best;
        let fine = search.final_step();
        let mut inflation: f64 = 0.0;
        for (i, j) in [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] {
            let v = f(clamp_s(bs + i as f64 * fine), clamp_u(bu + j as f64 * fine))?;
            inflation = inflation.max((v - grid_max).abs());
        }
        grid_points += 8;

        let (tail, rule) = tail_bound(eps, dim, s_max);
        if tail < grid_max {
            return Ok(KernelSupReport {
                eps,
                dim,
                sup_value: grid_max + inflation,
                grid_max,
                inflation,
                argmax: (bs + bu, bs),
                s_min,
                s_max,
                tail_bound: tail,
                tail_rule: rule.to_string(),
                doublings,
                coarse_step: h,
                final_step: fine,
                refinements: search.refinements,
                candidates: picked.len(),
                grid_points,
                quadrature: *q,
            });
        }
        s_max *= 2.0;
    }
    Err(Error::SearchInconclusive(format!(
        "tail bound still above the grid maximum at s_max = {s_max}; raise max_doublings"
    )))
}

/// Analytic upper bound on the sup of `∫_{1-eps}^{1+eps} K_{r,s}`.
///
/// `d = 2` (requires `eps <= 1/11`): `(22 sqrt2 / (5 pi)) sqrt(eps)`;
/// `d >= 3`: `(|S^{d-2}| / |S^{d-1}|) 8 eps / (1 - eps)^2`.
pub fn krs_analytic_bound(eps: f64, dim: usize) -> Result<f64> {
    check_dim(dim)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    if dim == 2 {
        if eps > 1.0 / 11.0 {
            return Err(Error::domain(format!("the planar bound needs eps <= 1/11, got {eps}")));
        }
        Ok(22.0 * 2f64.sqrt() / (5.0 * PI) * eps.sqrt())
    } else {
        Ok(shell_ratio(dim) * 8.0 * eps / ((1.0 - eps) * (1.0 - eps)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    #[default]
    NumericSup,
    Analytic,
}

impl std::str::FromStr for BoundMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "numeric_sup" | "numeric-sup" | "numeric" => Ok(BoundMode::NumericSup),
            "analytic" => Ok(BoundMode::Analytic),
            other => Err(Error::domain(format!("unknown bound mode `{other}`"))),
        }
    }
}

/// Lower bound on the prototype energy of radial probability measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub eps: f64,
    pub dim: usize,
    pub c0: f64,
    pub sup_value: f64,
    /// `None` when the analytic bound does not apply (`d = 2`, `eps > 1/11`).
    pub analytic_bound: Option<f64>,
    pub lower_bound: f64,
    pub method: BoundMode,
    pub sup_report: Option<KernelSupReport>,
}

/// `-1 / (4 (1 - c0))`.
pub fn lower_bound_from_c0(c0: f64) -> f64 {
    -1.0 / (4.0 * (1.0 - c0))
}

pub fn radial_lower_bound(
    eps: f64,
    dim: usize,
    mode: BoundMode,
    q: &QuadratureSpec,
    search: &SearchSpec,
) -> Result<BoundReport> {
    check_dim(dim)?;
    let analytic = krs_analytic_bound(eps, dim);
    let (sup_value, sup_report) = match mode {
        BoundMode::Analytic => (krs_analytic_bound(eps, dim)?, None),
        BoundMode::NumericSup => {
            let rep = kernel_sup(eps, dim, q, search)?;
            (rep.sup_value, Some(rep))
        }
    };
    let c0 = 0.5 * sup_value;
    if !(c0 < 1.0) {
        return Err(Error::domain(format!("c0 = {c0} must be below 1")));
    }
    Ok(BoundReport {
        eps,
        dim,
        c0,
        sup_value,
        analytic_bound: analytic.ok(),
        lower_bound: lower_bound_from_c0(c0),
        method: mode,
        sup_report,
    })
}

/// Average of a radial `w` over the ball `B(x; eta)` with `|x| = x_norm`,
/// by shell decomposition around `x`:
/// `(|S^{d-1}| / |B(0;eta)|) ∫_0^eta t^{d-1} W~(x_norm, t) dt`.
pub fn ball_average<W: RadialFunction + ?Sized>(
    w: &W,
    x_norm: f64,
    eta: f64,
    dim: usize,
    q: &QuadratureSpec,
) -> Result<f64> {
    check_ball(x_norm, eta, dim)?;
    q.validate()?;
    let n = (dim - 1) as i32;
    let scale = dim as f64 / eta.powi(dim as i32);
    let singular = w.origin_singularity().is_some();
    let slot = ErrorSlot::new();
    let f = |t: f64| {
        let v = slot.catch(tilde_w(w, x_norm, t, dim, q));
        if v == 0.0 {
            0.0
        } else {
            t.powi(n) * v
        }
    };
    let mut breaks = Vec::new();
    for b in w.breakpoints() {
        breaks.extend([b - x_norm, x_norm - b, b + x_norm]);
    }
    let total = if x_norm > 0.0 && x_norm < eta {
        let g = Grading { left: false, right: singular };
        let left = integrate_graded(&f, 0.0, x_norm, &breaks, q, g);
        let left = slot.finish_ref(left)?;
        let g = Grading { left: singular, right: false };
        left + slot.finish_ref(integrate_graded(&f, x_norm, eta, &breaks, q, g))?
    } else {
        let g = Grading { left: singular && x_norm == 0.0, right: singular && x_norm == eta };
        slot.finish_ref(integrate_graded(&f, 0.0, eta, &breaks, q, g))?
    };
    Ok(scale * total)
}

impl ErrorSlot {
    fn finish_ref(&self, v: Result<f64>) -> Result<f64> {
        match self.0.borrow_mut().take() {
            Some(e) => Err(e),
            None => v,
        }
    }
}

fn check_ball(x_norm: f64, eta: f64, dim: usize) -> Result<()> {
    check_dim(dim)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::domain(format!("ball radius must be positive, got {eta}")));
    }
    if !(x_norm >= 0.0 && x_norm.is_finite()) {
        return Err(Error::domain(format!("ball center norm must be nonnegative, got {x_norm}")));
    }
    Ok(())
}

/// Fraction of the sphere of radius `rho` (centered at the origin) lying in
/// `B(x; eta)`, `|x| = x_norm`.
pub fn cap_fraction(rho: f64, x_norm: f64, eta: f64, dim: usize) -> f64 {
    if rho + x_norm <= eta {
        return 1.0;
    }
    if rho >= x_norm + eta || rho <= x_norm - eta {
        return 0.0;
    }
    let theta = angle_of_distance(rho, x_norm, eta);
    (shell_ratio(dim) * sin_power_integral(dim - 2, theta)).min(1.0)
}

/// Same quantity as [`ball_average`], integrating over spheres centered at
/// the origin instead:
/// `(|S^{d-1}| / |B(0;eta)|) ∫ rho^{d-1} w(rho) cap(rho) drho`,
/// with `cap` from [`cap_fraction`]. A single quadrature, so much cheaper.
pub fn ball_average_caps<W: RadialFunction + ?Sized>(
    w: &W,
    x_norm: f64,
    eta: f64,
    dim: usize,
    q: &QuadratureSpec,
) -> Result<f64> {
    check_ball(x_norm, eta, dim)?;
    q.validate()?;
    let n = (dim - 1) as i32;
    let scale = dim as f64 / eta.powi(dim as i32);
    let singular = w.origin_singularity().is_some();
    let f = |rho: f64| {
        let c = cap_fraction(rho, x_norm, eta, dim);
        if c == 0.0 {
            0.0
        } else {
            rho.powi(n) * w.value(rho) * c
        }
    };
    let breaks = w.breakpoints();
    let hi = x_norm + eta;
    // the cap fraction has square-root behaviour where it leaves 0 or reaches 1
    let mut segments: Vec<(f64, f64, Grading)> = Vec::new();
    if x_norm >= eta {
        segments.push((x_norm - eta, hi, Grading::BOTH));
    } else {
        let full = eta - x_norm;
        segments.push((0.0, full, Grading { left: singular, right: x_norm > 0.0 }));
        if x_norm > 0.0 {
            segments.push((full, hi, Grading::BOTH));
        }
    }
    let mut total = 0.0;
    for (a, b, g) in segments {
        if b > a {
            total += integrate_graded(&f, a, b, &breaks, q, g)?;
        }
    }
    Ok(scale * total)
}

/// `alpha |S^{d-1}| eta^{-s} / ((d - s) |B(0;1)|)`: the average of
/// `alpha |y|^{-s}` over `B(0; eta)`, which dominates its average over any
/// ball of radius `eta`.
pub fn power_law_ball_average_bound(alpha: f64, power_s: f64, eta: f64, dim: usize) -> f64 {
    let d = dim as f64;
    alpha * surface_area(dim - 1) * eta.powf(-power_s) / ((d - power_s) * unit_ball_volume(dim))
}

/// `beta |S^{d-1}| 2 (1 + eps)^{d-1} / |B(0;eta)|`: bounds the average over a
/// ball of radius `eta` of a function with values in `[0, 1]` supported on
/// the two shells `1 - eps < r < 1 - eps + beta` and `1 + eps - beta < r < 1 + eps`.
pub fn annulus_excess_bound(beta: f64, eta: f64, eps: f64, dim: usize) -> f64 {
    let ball = unit_ball_volume(dim) * eta.powi(dim as i32);
    beta * surface_area(dim - 1) * 2.0 * (1.0 + eps).powi(dim as i32 - 1) / ball
}

/// Uniform random radial profile with `1..=max_nodes` shells of radius at most `r_max`.
pub fn random_profile<R: Rng + ?Sized>(rng: &mut R, max_nodes: usize, r_max: f64) -> RadialProfile {
    let n = rng.random_range(1..=max_nodes.max(1));
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    let mut nodes: Vec<crate::measures::ShellNode> = raw
        .iter()
        .map(|&w| crate::measures::ShellNode { radius: rng.random::<f64>() * r_max, weight: w / total })
        .collect();
    // absorb the rounding of the normalization into the last weight
    let sum: f64 = nodes.iter().map(|n| n.weight).sum();
    if let Some(last) = nodes.last_mut() {
        last.weight += 1.0 - sum;
    }
    RadialProfile { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{rho_star_eta, Competitor, ShellNode};
    use crate::potential::{Composite, Excess, PowerLaw, Prototype, Tabulated};
    use crate::sampling::chunk_rng;
    use proptest::prelude::*;

    fn q() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn qt() -> QuadratureSpec {
        QuadratureSpec::default().with_method(QuadratureMethod::GaussT)
    }

    #[test]
    fn shell_pair_reaching_into_the_outer_ramp() {
        // t_max = r + s sits just past 1 + eps, where w grows by ~37 decades;
        // this pair used to stall the adaptive driver for minutes
        let w = Composite::new(0.05, 0.00625, 0.0015625, 0.5, 2).unwrap();
        let (r, s) = (0.4857582112383455, 0.5648343826069949);
        let a = tilde_w(&w, r, s, 2, &q()).unwrap();
        let b = tilde_w(&w, r, s, 2, &qt()).unwrap();
        assert!(a > 1e35 && ((a - b) / a).abs() < 1e-8, "{a:e} vs {b:e}");
        let mc = tilde_w_mc_oracle(&w, r, s, 2, 1 << 20, 5).unwrap();
        assert!((mc.estimate - a).abs() <= 4.0 * mc.stderr, "{a:e} vs {:e} +/- {:e}", mc.estimate, mc.stderr);
    }

    #[test]
    fn surface_areas() {
        assert!((surface_area(0) - 2.0).abs() < 1e-14);
        assert!((surface_area(1) - 2.0 * PI).abs() < 1e-13);
        assert!((surface_area(2) - 4.0 * PI).abs() < 1e-13);
        assert!((surface_area(3) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-13);
        for d in 2..=10 {
            let direct = surface_area(d - 2) / surface_area(d - 1);
            assert!((shell_ratio(d) - direct).abs() < 1e-14 * direct);
        }
        assert!((shell_ratio(3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn angles_round_trip() {
        for &(r, s) in &[(1.0, 0.3), (2.0, 2.0), (0.5, 1e-3), (10.0, 9.999)] {
            for k in 0..=20 {
                let phi = PI * k as f64 / 20.0;
                let t = distance_of_angle(r, s, phi);
                let back = angle_of_distance(r, s, t);
                assert!((back - phi).abs() < 1e-7, "r={r} s={s} phi={phi} back={back}");
            }
        }
    }

    #[test]
    fn kernel_values() {
        let kp = KernelParams::new(1.0, 1.0, 3).unwrap();
        assert!((kernel_eval(&kp, 1.0).unwrap() - 0.5).abs() < 1e-15);
        // d = 3 closed form t / (2rs) on (0.7, 1.3)
        let kp = KernelParams::new(1.0, 0.3, 3).unwrap();
        assert!((kernel_eval(&kp, 1.0).unwrap() - 1.0 / 0.6).abs() < 1e-14);
        assert_eq!(kernel_eval(&kp, 0.5).unwrap(), 0.0);
        assert_eq!(kernel_eval(&kp, 0.69).unwrap(), 0.0);
        assert_eq!(kernel_eval(&kp, 1.31).unwrap(), 0.0);
        let kp2 = KernelParams::new(1.0, 0.3, 2).unwrap();
        assert_eq!(kernel_eval(&kp2, 0.7).unwrap(), f64::INFINITY);
        assert!(kernel_eval(&KernelParams::new(1.0, 0.0, 2).unwrap(), 1.0).is_err());
        // symmetric in (r, s)
        let a = kernel_eval(&KernelParams::new(0.4, 1.1, 5).unwrap(), 1.0).unwrap();
        let b = kernel_eval(&KernelParams::new(1.1, 0.4, 5).unwrap(), 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kernel_is_a_density() {
        for d in 2..=8 {
            for &(r, s) in &[(1.0, 1.0), (0.3, 2.0), (5.0, 0.1)] {
                let kp = KernelParams::new(r, s, d).unwrap();
                let (lo, hi) = kp.support();
                for qq in [q(), qt()] {
                    let v = kernel_partial_integral(&kp, lo, hi, &qq).unwrap();
                    assert!((v - 1.0).abs() < 1e-10, "d={d} r={r} s={s} {qq:?}: {v}");
                }
            }
        }
    }

    #[test]
    fn kernel_partial_integral_d3_closed_form() {
        let kp = KernelParams::new(1.0, 1.0, 3).unwrap();
        let v = kernel_partial_integral(&kp, 0.9, 1.1, &q()).unwrap();
        assert!((v - 0.1).abs() < 1e-13);
        let kp = KernelParams::new(2.0, 0.5, 3).unwrap();
        assert_eq!(kernel_partial_integral(&kp, 0.1, 1.4, &q()).unwrap(), 0.0);
        assert_eq!(kernel_partial_integral(&kp, 2.6, 3.0, &q()).unwrap(), 0.0);
        assert!(kernel_partial_integral(&kp, 1.0, 0.5, &q()).is_err());
    }

    #[test]
    fn tilde_w_prototype_examples() {
        let p = Prototype::new(0.1).unwrap();
        assert_eq!(tilde_w(&p, 0.2, 0.2, 3, &q()).unwrap(), 0.0);
        let v = tilde_w(&p, 1.0, 1.0, 3, &q()).unwrap();
        assert!((v + 0.1).abs() < 1e-12, "{v}");
        let vt = tilde_w(&p, 1.0, 1.0, 3, &qt()).unwrap();
        assert!((vt + 0.1).abs() < 1e-10, "{vt}");
        assert_eq!(tilde_w(&p, 2.0, 0.0, 3, &q()).unwrap(), 0.0);
        assert_eq!(tilde_w(&p, 0.0, 1.0, 2, &q()).unwrap(), -1.0);
        assert_eq!(tilde_w(&p, 0.0, 0.0, 2, &q()).unwrap(), 0.0);
    }

    #[test]
    fn tilde_w_d3_prototype_closed_form() {
        // for d = 3, W~ = -(b^2 - a^2) / (4rs) with [a, b] = [1-eps, 1+eps] ∩ support
        let p = Prototype::new(0.2).unwrap();
        for &(r, s) in &[(0.7, 0.5), (1.3, 0.4), (2.0, 1.9), (0.45, 0.45)] {
            let (lo, hi) = ((r - s as f64).abs(), r + s);
            let (a, b) = (lo.max(0.8), hi.min(1.2));
            let exact = if a < b { -(b * b - a * a) / (4.0 * r * s) } else { 0.0 };
            let v = tilde_w(&p, r, s, 3, &q()).unwrap();
            assert!((v - exact).abs() < 1e-12, "({r}, {s}): {v} vs {exact}");
        }
    }

    #[test]
    fn tilde_w_methods_agree_on_composite() {
        let c = Composite::new(0.05, 0.01, 0.02, 0.5, 2).unwrap();
        for &(r, s) in &[(0.6, 0.5), (1.0, 0.2), (0.7, 0.7), (1.9, 1.2)] {
            let a = tilde_w(&c, r, s, 2, &q()).unwrap();
            let b = tilde_w(&c, r, s, 2, &qt()).unwrap();
            assert!((a - b).abs() < 1e-7 * a.abs().max(1.0), "({r}, {s}): {a} vs {b}");
        }
    }

    #[test]
    fn tilde_w_singular_diagonal() {
        // d = 3, w = r^{-1}: W~(r, r) = ∫_0^{2r} t/(2r^2) t^{-1} dt = 1/r
        let w = PowerLaw { coeff: 1.0, exponent: 1.0 };
        let v = tilde_w(&w, 0.8, 0.8, 3, &q()).unwrap();
        assert!((v - 1.25).abs() < 1e-10, "{v}");
        // exponent >= d - 1 diverges on the diagonal
        let w2 = PowerLaw { coeff: 1.0, exponent: 1.5 };
        assert_eq!(tilde_w(&w2, 1.0, 1.0, 2, &q()).unwrap(), f64::INFINITY);
        assert!(tilde_w(&w2, 1.0, 0.9, 2, &q()).unwrap().is_finite());
    }

    #[test]
    fn tilde_w_coulomb_in_three_dimensions() {
        // Newton's theorem: the shell average of 1/|x - y| is 1/max(r, s)
        let w = PowerLaw { coeff: 1.0, exponent: 1.0 };
        for &(r, s) in &[(1.0, 0.5), (0.3, 2.0), (1.0, 0.999)] {
            let v = tilde_w(&w, r, s, 3, &q()).unwrap();
            assert!((v - 1.0 / f64::max(r, s)).abs() < 1e-10, "({r}, {s}): {v}");
        }
    }

    #[test]
    fn mc_oracle_matches_quadrature() {
        let p = Prototype::new(0.1).unwrap();
        let est = tilde_w_mc_oracle(&p, 1.0, 1.0, 3, 200_000, 11).unwrap();
        assert!((est.estimate + 0.1).abs() < 4.0 * est.stderr, "{est:?}");
        let exact = tilde_w_mc_oracle(&p, 2.0, 0.0, 3, 10, 1).unwrap();
        assert_eq!((exact.estimate, exact.stderr), (0.0, 0.0));
        let c = Tabulated::constant(2.5);
        let est = tilde_w_mc_oracle(&c, 1.0, 0.7, 4, 10_000, 3).unwrap();
        assert_eq!((est.estimate, est.stderr), (2.5, 0.0));
    }

    #[test]
    fn radial_energy_examples() {
        let p = Prototype::new(0.1).unwrap();
        let one = RadialProfile::single(1.0).unwrap();
        let e = radial_energy(&p, &one, 3, &q()).unwrap();
        assert!((e + 0.05).abs() < 1e-12);
        let origin = RadialProfile::single(0.0).unwrap();
        assert_eq!(radial_energy(&p, &origin, 2, &q()).unwrap(), 0.0);
        let two = RadialProfile::new(vec![
            ShellNode { radius: 1.0, weight: 0.5 },
            ShellNode { radius: 0.0, weight: 0.5 },
        ])
        .unwrap();
        let w11 = tilde_w(&p, 1.0, 1.0, 2, &q()).unwrap();
        let e = radial_energy(&p, &two, 2, &q()).unwrap();
        assert!((e - (-0.25 + w11 / 8.0)).abs() < 1e-14);
        let bad = RadialProfile { nodes: vec![ShellNode { radius: 1.0, weight: 0.7 }] };
        assert!(radial_energy(&p, &bad, 2, &q()).is_err());
    }

    #[test]
    fn analytic_bounds() {
        let b = krs_analytic_bound(0.05, 2).unwrap();
        assert!((b - 0.442_897_066_519_486).abs() < 1e-12);
        let b3 = krs_analytic_bound(0.04, 3).unwrap();
        assert!((b3 - 0.5 * 8.0 * 0.04 / (0.96 * 0.96)).abs() < 1e-15);
        assert!((b3 - 0.173_611).abs() < 1e-6);
        assert!(matches!(krs_analytic_bound(0.2, 2), Err(Error::Domain(_))));
        assert!(krs_analytic_bound(1.0 / 11.0, 2).is_ok());
    }

    #[test]
    fn analytic_lower_bound_d2() {
        let rep = radial_lower_bound(0.05, 2, BoundMode::Analytic, &q(), &SearchSpec::default()).unwrap();
        assert!((rep.c0 - 0.221_448_533_259_743).abs() < 1e-12);
        assert!((rep.lower_bound - (-0.321_109_150)).abs() < 1e-8);
        assert!((rep.lower_bound - lower_bound_from_c0(rep.c0)).abs() == 0.0);
        assert!(rep.sup_report.is_none());
        let json = serde_json::to_string(&rep).unwrap();
        let back: BoundReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn kernel_sup_is_dominated_by_analytic_bound() {
        let s = SearchSpec::default();
        for &(d, eps) in &[(2usize, 0.05), (3, 0.04)] {
            let rep = kernel_sup(eps, d, &q(), &s).unwrap();
            let bound = krs_analytic_bound(eps, d).unwrap();
            assert!(rep.sup_value <= bound + 1e-9, "d={d}: {} > {bound}", rep.sup_value);
            assert!(rep.sup_value > 0.0 && rep.sup_value <= 1.0);
            assert!(rep.tail_bound < rep.grid_max);
            assert!(rep.final_step < 1e-4);
            let (r, ss) = rep.argmax;
            assert!(r >= ss && ss >= rep.s_min - 1e-15);
            let kp = KernelParams::new(r, ss, d).unwrap();
            let at = kernel_partial_integral(&kp, 1.0 - eps, 1.0 + eps, &q()).unwrap();
            assert!((at - rep.grid_max).abs() < 1e-12);
        }
    }

    #[test]
    fn numeric_bound_is_tighter() {
        let s = SearchSpec::default();
        let num = radial_lower_bound(0.05, 2, BoundMode::NumericSup, &q(), &s).unwrap();
        let ana = radial_lower_bound(0.05, 2, BoundMode::Analytic, &q(), &s).unwrap();
        assert!(num.lower_bound >= ana.lower_bound);
        assert!(num.c0 <= 0.5);
        assert_eq!(num.analytic_bound, Some(ana.sup_value));
        // no analytic bound in the plane beyond eps = 1/11
        let wide = radial_lower_bound(0.3, 2, BoundMode::NumericSup, &q(), &s).unwrap();
        assert!(wide.analytic_bound.is_none());
        assert!(radial_lower_bound(0.3, 2, BoundMode::Analytic, &q(), &s).is_err());
    }

    #[test]
    fn random_profiles_respect_lower_bound() {
        let p = Prototype::new(0.05).unwrap();
        let bound = radial_lower_bound(0.05, 2, BoundMode::Analytic, &q(), &SearchSpec::default()).unwrap();
        let mut rng = chunk_rng(5, 0, 0);
        for _ in 0..40 {
            let prof = random_profile(&mut rng, 8, 1.5);
            assert!(validate_profile(&prof));
            let e = radial_energy(&p, &prof, 2, &q()).unwrap();
            assert!(e >= bound.lower_bound, "{e} < {}", bound.lower_bound);
        }
    }

    #[test]
    fn ball_average_of_constant_and_disjoint_support() {
        let c = Tabulated::constant(3.0);
        for &x in &[0.0, 0.01, 0.5] {
            let v = ball_average(&c, x, 0.025, 2, &q()).unwrap();
            assert!((v - 3.0).abs() < 1e-10, "{v}");
            let v = ball_average_caps(&c, x, 0.025, 3, &q()).unwrap();
            assert!((v - 3.0).abs() < 1e-10, "{v}");
        }
        // supported on r >= 1: a ball around x = 0.5 of radius 0.1 sees nothing
        let step = Tabulated::new(vec![0.999_999, 1.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(ball_average(&step, 0.5, 0.1, 2, &q()).unwrap(), 0.0);
        assert_eq!(ball_average_caps(&step, 0.5, 0.1, 2, &q()).unwrap(), 0.0);
    }

    #[test]
    fn ball_average_of_power_law_at_origin() {
        for &(d, s) in &[(2usize, 0.5), (3, 1.5), (3, 2.5)] {
            let w = PowerLaw { coeff: 0.7, exponent: s };
            let exact = power_law_ball_average_bound(0.7, s, 0.025, d);
            // same quantity written with |S^{d-1}| = d |B(0;1)|
            assert!((exact - 0.7 * d as f64 * 0.025f64.powf(-s) / (d as f64 - s)).abs() < 1e-12 * exact);
            let a = ball_average(&w, 0.0, 0.025, d, &q()).unwrap();
            let b = ball_average_caps(&w, 0.0, 0.025, d, &q()).unwrap();
            assert!((a - exact).abs() < 1e-8 * exact, "d={d} s={s}: {a} vs {exact}");
            assert!((b - exact).abs() < 1e-8 * exact, "d={d} s={s}: {b} vs {exact}");
        }
    }

    #[test]
    fn ball_average_forms_agree_on_composite_excess() {
        let c = Composite::new(0.05, 0.00625, 0.003125, 0.5, 2).unwrap();
        let w1 = Excess { composite: c };
        // the shell form has square-root kinks in its outer integrand, so it
        // needs a tighter tolerance to match the cap form
        let tight = QuadratureSpec { tol: 1e-12, ..q() };
        for &x in &[0.0, 0.01, 0.0125, 0.3, 0.96, 1.0, 1.02] {
            let a = ball_average(&w1, x, 0.025, 2, &tight).unwrap();
            let b = ball_average_caps(&w1, x, 0.025, 2, &q()).unwrap();
            assert!((a - b).abs() < 1e-9 * a.abs().max(1e-3), "x={x}: {a} vs {b}");
            assert!(a >= 0.0);
        }
    }

    #[test]
    fn ball_average_power_law_bound_dominates_off_center() {
        let w = PowerLaw { coeff: 1.0, exponent: 0.5 };
        let bound = power_law_ball_average_bound(1.0, 0.5, 0.025, 2);
        for &x in &[0.005, 0.02, 0.1, 0.9] {
            let v = ball_average_caps(&w, x, 0.025, 2, &q()).unwrap();
            assert!(v <= bound * (1.0 + 1e-12), "x={x}");
        }
    }

    #[test]
    fn annulus_bound_dominates_shell_indicator() {
        let (eps, beta, eta) = (0.05, 0.004, 0.025);
        let shells = Tabulated::new(
            vec![1.0 - eps, 1.0 - eps + 1e-12, 1.0 - eps + beta, 1.0 - eps + beta + 1e-12,
                 1.0 + eps - beta - 1e-12, 1.0 + eps - beta, 1.0 + eps - 1e-12, 1.0 + eps],
            vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0],
        )
        .unwrap();
        let bound = annulus_excess_bound(beta, eta, eps, 2);
        for &x in &[0.95, 0.97, 1.0, 1.03, 1.0249] {
            let v = ball_average_caps(&shells, x, eta, 2, &q()).unwrap();
            assert!(v <= bound, "x={x}: {v} > {bound}");
        }
    }

    #[test]
    fn mollified_prototype_energy_matches_dirac() {
        let p = Prototype::new(0.1).unwrap();
        let Competitor::Balls(m) = rho_star_eta(3, 0.04).unwrap() else { panic!() };
        let est = mollified_energy_mc(&p, &m, 4096, 1).unwrap();
        assert!((est.estimate + 0.375).abs() < 1e-12 + 4.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn mollified_energy_converges_to_dirac_energy() {
        // Lipschitz test potential: w(r) = r, energy error is first order in eta
        let lin = Tabulated::new(vec![0.0, 10.0], vec![0.0, 10.0]).unwrap();
        let Competitor::Dirac(dirac) = rho_star_eta(2, 0.0).unwrap() else { panic!() };
        let e0 = dirac.energy(&lin);
        let mut errs = Vec::new();
        for eta in [1e-2, 1e-3] {
            let Competitor::Balls(m) = rho_star_eta(2, eta).unwrap() else { panic!() };
            let est = mollified_energy_mc(&lin, &m, 200_000, 2).unwrap();
            let err = (est.estimate - e0).abs();
            assert!(err < 2.0 * eta, "eta={eta}: err {err}");
            errs.push(err);
        }
        assert!(errs[1] < errs[0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kernel_normalization(r in 0.1f64..10.0, s in 0.1f64..10.0, d in 2usize..=8) {
            let kp = KernelParams::new(r, s, d).unwrap();
            let (lo, hi) = kp.support();
            let v = kernel_partial_integral(&kp, lo, hi, &q()).unwrap();
            prop_assert!((v - 1.0).abs() < 1e-10);
        }

        #[test]
        fn tilde_w_is_symmetric(r in 0.0f64..3.0, s in 0.0f64..3.0, d in 2usize..=5) {
            let p = Prototype::new(0.1).unwrap();
            let a = tilde_w(&p, r, s, d, &q()).unwrap();
            let b = tilde_w(&p, s, r, d, &q()).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
        }

        #[test]
        fn lower_bound_monotone_in_c0(a in 0.0f64..0.99, b in 0.0f64..0.99) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(lower_bound_from_c0(hi) <= lower_bound_from_c0(lo));
        }

        #[test]
        fn d3_partial_integral_closed_form(r in 0.1f64..5.0, s in 0.1f64..5.0, x in 0.0f64..1.0, y in 0.0f64..1.0) {
            let kp = KernelParams::new(r, s, 3).unwrap();
            let (lo, hi) = kp.support();
            let (a, b) = (lo + x.min(y) * (hi - lo), lo + x.max(y) * (hi - lo));
            let v = kernel_partial_integral(&kp, a, b, &q()).unwrap();
            let exact = (b * b - a * a) / (4.0 * r * s);
            prop_assert!((v - exact).abs() < 1e-10);
        }
    }
}
