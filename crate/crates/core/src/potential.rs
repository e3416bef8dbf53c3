//! Radial interaction potentials.
//!
//! Three families are supported:
//!
//! * [`Prototype`]: the indicator well `-1` on `|r - 1| <= eps`, `0` elsewhere.
//! * [`Composite`]: a smooth potential, singular only at the origin, built as
//!   `alpha r^{-s} (1 - phi(4r - 7)) + w2(r)` where `w2` is a five-piece
//!   smoothed version of the prototype well that climbs to a large plateau at
//!   long range.
//! * [`Tabulated`]: linear interpolation of sampled values.
//!
//! The bump `psi(x) = exp(-1/(1 - x^2))` and its normalized primitive `phi`
//! are exposed as [`psi`] and [`phi`].

use std::fmt::Write as _;
use std::path::Path;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// `Z = ∫_{-1}^{1} exp(-1/(1-x^2)) dx`.
///
/// Frozen from an adaptive Gauss-Legendre integration at tolerance 1e-13
/// (split at 0, graded toward both endpoints); an independent high-precision
/// evaluation agrees to all printed digits: 0.443993816168079437823...
/// `tests::psi_integral_matches_adaptive_quadrature` recomputes it.
pub const PSI_INTEGRAL: f64 = 0.443_993_816_168_079_4;

/// Smooth bump supported on `[-1, 1]`.
#[inline]
pub fn psi(x: f64) -> f64 {
    let q = 1.0 - x * x;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

/// `phi'(x) = psi(x) / Z`.
#[inline]
pub fn phi_prime(x: f64) -> f64 {
    psi(x) / PSI_INTEGRAL
}

/// Normalized primitive of [`psi`]: `0` on `(-inf, -1]`, `1` on `[1, inf)`,
/// and `phi(-x) = 1 - phi(x)`.
pub fn phi(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= -1.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else if x > 0.0 {
        1.0 - PHI_TABLE.left_mass(-x) / PSI_INTEGRAL
    } else {
        PHI_TABLE.left_mass(x) / PSI_INTEGRAL
    }
}

/// Unnormalized mass `∫_{-1}^{x} psi` for `x <= 0`.
///
/// On `[-1 + TAIL_WIDTH, 0]` the mass comes from a cumulative table over
/// `BODY_PANELS` panels plus an 8-point rule on the partial panel. Closer to
/// `-1`, `psi` varies too fast (relative to its size) for a uniform table, so
/// the mass is written as `exp(-W(u)) g(u)` with `u = 1 + x`,
/// `W = 1/(u(2-u))`, and the smooth factor `g` is tabulated instead.
struct PhiTable {
    body_start: f64,
    body_step: f64,
    body_cum: Vec<f64>,
    tail_step: f64,
    tail_g: Vec<f64>,
    tail_dg: Vec<f64>,
    gl8: GaussLegendre,
}

const BODY_PANELS: usize = 10_000;
const TAIL_WIDTH: f64 = 0.1;
const TAIL_NODES: usize = 20_000;

static PHI_TABLE: LazyLock<PhiTable> = LazyLock::new(PhiTable::build);

/// `W(u) = 1/(u(2-u))`, so that `psi(-1 + u) = exp(-W(u))`.
#[inline]
fn tail_exponent(u: f64) -> f64 {
    1.0 / (u * (2.0 - u))
}

/// `g(u) = exp(W(u)) ∫_0^u psi(-1+v) dv`, evaluated through the substitution
/// `w = W(v)`, which turns the mass into `exp(-W) ∫_0^∞ e^{-y} h(W + y) dy`
/// with `h(w) = (1 - 1/w)^{-1/2} / (2 w^2)`.
fn tail_factor_direct(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    let big_w = tail_exponent(u);
    let h = |w: f64| 0.5 / (w * w * (1.0 - 1.0 / w).sqrt());
    let rule = &*crate::quadrature::GL32;
    let f = |y: f64| (-y).exp() * h(big_w + y);
    let cuts = [0.0, 0.5, 2.0, 6.0, 14.0, 30.0, 60.0];
    cuts.windows(2).map(|c| rule.apply(&f, c[0], c[1])).sum()
}

impl PhiTable {
    fn build() -> Self {
        let tail_step = TAIL_WIDTH / TAIL_NODES as f64;
        let mut tail_g = Vec::with_capacity(TAIL_NODES + 1);
        let mut tail_dg = Vec::with_capacity(TAIL_NODES + 1);
        for k in 0..=TAIL_NODES {
            let u = k as f64 * tail_step;
            let g = tail_factor_direct(u);
            // g' = 1 - lambda g with lambda = -W'(u); at u = 0 both g and g' vanish.
            let dg = if u == 0.0 {
                0.0
            } else {
                let lambda = (2.0 - 2.0 * u) / (u * u * (2.0 - u) * (2.0 - u));
                1.0 - lambda * g
            };
            tail_g.push(g);
            tail_dg.push(dg);
        }

        let gl8 = GaussLegendre::new(8);
        let body_start = -1.0 + TAIL_WIDTH;
        let body_step = (0.0 - body_start) / BODY_PANELS as f64;
        let mut body_cum = Vec::with_capacity(BODY_PANELS + 1);
        let start_mass = (-tail_exponent(TAIL_WIDTH)).exp() * tail_g[TAIL_NODES];
        body_cum.push(start_mass);
        // compensated running sum; plain accumulation drifts by ~1e-14 over the table
        let (mut acc, mut carry) = (start_mass, 0.0);
        for k in 0..BODY_PANELS {
            let a = body_start + k as f64 * body_step;
            let b = if k + 1 == BODY_PANELS { 0.0 } else { body_start + (k + 1) as f64 * body_step };
            let y = gl8.apply(&psi, a, b) - carry;
            let t = acc + y;
            carry = (t - acc) - y;
            acc = t;
            body_cum.push(acc);
        }
        PhiTable { body_start, body_step, body_cum, tail_step, tail_g, tail_dg, gl8 }
    }

    fn left_mass(&self, x: f64) -> f64 {
        debug_assert!(x <= 0.0);
        let u = 1.0 + x;
        if u <= 0.0 {
            return 0.0;
        }
        if x < self.body_start {
            let pos = u / self.tail_step;
            let k = (pos.floor() as usize).min(TAIL_NODES - 1);
            let t = pos - k as f64;
            let h = self.tail_step;
            let (g0, g1) = (self.tail_g[k], self.tail_g[k + 1]);
            let (d0, d1) = (self.tail_dg[k] * h, self.tail_dg[k + 1] * h);
            // cubic Hermite
            let t2 = t * t;
            let t3 = t2 * t;
            let g = (2.0 * t3 - 3.0 * t2 + 1.0) * g0
                + (t3 - 2.0 * t2 + t) * d0
                + (-2.0 * t3 + 3.0 * t2) * g1
                + (t3 - t2) * d1;
            return (-tail_exponent(u)).exp() * g;
        }
        let pos = (x - self.body_start) / self.body_step;
        let k = (pos.floor() as usize).min(BODY_PANELS - 1);
        let a = self.body_start + k as f64 * self.body_step;
        self.body_cum[k] + self.gl8.apply(&psi, a, x)
    }
}

/// A radial function `w(r)` in the form the quadrature routines need.
pub trait RadialFunction: Sync {
    fn value(&self, r: f64) -> f64;

    /// Radii where `w` jumps, has a kink, or changes formula.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Exponent `p` when `w(r) ~ r^{-p}` blows up as `r -> 0`.
    fn origin_singularity(&self) -> Option<f64> {
        None
    }

    fn singular_at_origin(&self) -> bool {
        self.origin_singularity().is_some()
    }
}

impl<T: RadialFunction + ?Sized> RadialFunction for &T {
    fn value(&self, r: f64) -> f64 {
        (**self).value(r)
    }
    fn breakpoints(&self) -> Vec<f64> {
        (**self).breakpoints()
    }
    fn origin_singularity(&self) -> Option<f64> {
        (**self).origin_singularity()
    }
}

/// Width of the window around `1 ± eps` where the prototype's derivative is
/// reported as undefined.
pub const JUMP_WINDOW: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub eps: f64,
}

impl Prototype {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::domain(format!("prototype eps must lie in (0, 1), got {eps}")));
        }
        Ok(Prototype { eps })
    }
}

impl RadialFunction for Prototype {
    #[inline]
    fn value(&self, r: f64) -> f64 {
        if (r - 1.0).abs() <= self.eps {
            -1.0
        } else {
            0.0
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![1.0 - self.eps, 1.0 + self.eps]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeParams {
    pub eps: f64,
    pub alpha: f64,
    pub beta: f64,
    pub power_s: f64,
    pub dim: usize,
}

/// Smooth attractive-repulsive potential
/// `w(r) = alpha r^{-s} (1 - phi(4r - 7)) + w2(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CompositeParams", into = "CompositeParams")]
pub struct Composite {
    pub eps: f64,
    pub alpha: f64,
    pub beta: f64,
    pub power_s: f64,
    pub dim: usize,
    /// `phi(-1 + beta)`, the normalizer of the long-range ramp.
    floor: f64,
}

impl From<Composite> for CompositeParams {
    fn from(c: Composite) -> Self {
        CompositeParams { eps: c.eps, alpha: c.alpha, beta: c.beta, power_s: c.power_s, dim: c.dim }
    }
}

impl TryFrom<CompositeParams> for Composite {
    type Error = Error;
    fn try_from(p: CompositeParams) -> Result<Self> {
        Composite::new(p.eps, p.alpha, p.beta, p.power_s, p.dim)
    }
}

impl Composite {
    /// Requires `0 < beta < eps < 1/2`, `alpha > 0` and `d - 2 < s < d`.
    pub fn new(eps: f64, alpha: f64, beta: f64, power_s: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::domain(format!("composite alpha must be positive, got {alpha}")));
        }
        Self::new_unchecked_alpha(eps, alpha, beta, power_s, dim)
    }

    /// Same validation as [`Composite::new`] except that `alpha = 0` is
    /// accepted, which yields the degenerate potential without short-range
    /// repulsion.
    pub fn new_unchecked_alpha(eps: f64, alpha: f64, beta: f64, power_s: f64, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::domain(format!("dimension must be at least 2, got {dim}")));
        }
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::domain(format!("composite eps must lie in (0, 1/2), got {eps}")));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::domain(format!("composite alpha must be nonnegative, got {alpha}")));
        }
        if !(beta > 0.0 && beta < eps) {
            return Err(Error::domain(format!("composite beta must lie in (0, eps) = (0, {eps}), got {beta}")));
        }
        let d = dim as f64;
        if !(power_s > d - 2.0 && power_s < d) {
            return Err(Error::domain(format!("power_s must lie in ({}, {}), got {power_s}", d - 2.0, d)));
        }
        let floor = phi(-1.0 + beta);
        if !(floor > f64::MIN_POSITIVE) || !(1.0 / floor).is_finite() {
            return Err(Error::domain(format!(
                "beta = {beta} is too small: phi(-1 + beta) = {floor:e} is not representable as a normal float"
            )));
        }
        Ok(Composite { eps, alpha, beta, power_s, dim, floor })
    }

    /// `phi(-1 + beta)`.
    pub fn ramp_floor(&self) -> f64 {
        self.floor
    }

    /// Long-range value `-1 + 1/phi(-1 + beta)`.
    pub fn far_value(&self) -> f64 {
        -1.0 + 1.0 / self.floor
    }

    /// Radius beyond which the potential is constant.
    pub fn plateau_start(&self) -> f64 {
        3.0 + self.eps - self.beta
    }

    /// The `alpha r^{-s} (1 - phi(4r - 7))` part.
    #[inline]
    pub fn repulsive_part(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return f64::INFINITY;
        }
        if self.alpha == 0.0 || r >= 2.0 {
            return 0.0;
        }
        self.alpha * r.powf(-self.power_s) * (1.0 - phi(4.0 * r - 7.0))
    }

    fn repulsive_derivative(&self, r: f64) -> f64 {
        if self.alpha == 0.0 || r >= 2.0 {
            return 0.0;
        }
        let s = self.power_s;
        let rs = r.powf(-s);
        let cut = 1.0 - phi(4.0 * r - 7.0);
        self.alpha * (-s * rs / r * cut - 4.0 * rs * phi_prime(4.0 * r - 7.0))
    }

    /// The five-piece well `w2`.
    #[inline]
    pub fn well_part(&self, r: f64) -> f64 {
        self.w2_pieces().value(r)
    }

    pub fn w2_pieces(&self) -> PieceTable {
        let (e, b) = (self.eps, self.beta);
        PieceTable {
            joins: vec![1.0 - e, 1.0 - e + b, 1.0 + e - b, 3.0 + e - b],
            pieces: vec![
                Piece::Level(0.0),
                Piece::InnerRamp { center: 1.0 - e + 0.5 * b, half_width: 0.5 * b },
                Piece::Level(-1.0),
                Piece::OuterRamp { shift: 2.0 + e - b, floor: self.floor },
                Piece::Level(-1.0 + 1.0 / self.floor),
            ],
        }
    }

    pub fn derivative(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::domain(format!("composite potential is singular at r = {r}")));
        }
        Ok(self.repulsive_derivative(r) + self.w2_pieces().derivative(r))
    }
}

impl RadialFunction for Composite {
    #[inline]
    fn value(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return if self.alpha > 0.0 { f64::INFINITY } else { 0.0 };
        }
        self.repulsive_part(r) + self.well_part(r)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let (e, b) = (self.eps, self.beta);
        vec![1.0 - e, 1.0 - e + b, 1.0 + e - b, 1.0 + e, 1.5, 1.75, 2.0, 2.0 + e - b, 3.0 + e - b]
    }

    fn origin_singularity(&self) -> Option<f64> {
        (self.alpha > 0.0).then_some(self.power_s)
    }
}

/// One formula of a piecewise radial profile. Each piece can be evaluated
/// anywhere, which is what lets [`PieceTable::join_mismatch`] compare the
/// left and right formulas at a join.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Piece {
    Level(f64),
    /// `-phi((r - center) / half_width)`
    InnerRamp { center: f64, half_width: f64 },
    /// `-1 + phi(r - shift) / floor`
    OuterRamp { shift: f64, floor: f64 },
}

impl Piece {
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            Piece::Level(v) => v,
            Piece::InnerRamp { center, half_width } => -phi((r - center) / half_width),
            Piece::OuterRamp { shift, floor } => -1.0 + phi(r - shift) / floor,
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            Piece::Level(_) => 0.0,
            Piece::InnerRamp { center, half_width } => -phi_prime((r - center) / half_width) / half_width,
            Piece::OuterRamp { shift, floor } => phi_prime(r - shift) / floor,
        }
    }
}

/// Piecewise profile: `pieces[k]` applies on `(joins[k-1], joins[k]]`-style
/// intervals, with the convention of the composite well (closed middle
/// piece, open ramps).
#[derive(Debug, Clone, PartialEq)]
pub struct PieceTable {
    pub joins: Vec<f64>,
    pub pieces: Vec<Piece>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinMismatch {
    pub value: f64,
    pub derivative: f64,
    /// Joins whose relative value or derivative mismatch exceeds the tolerances.
    pub offending: Vec<f64>,
}

impl PieceTable {
    fn index(&self, r: f64) -> usize {
        // (-inf, j0], (j0, j1), [j1, j2], (j2, j3), [j3, inf)
        let j = &self.joins;
        if r <= j[0] {
            0
        } else if r < j[1] {
            1
        } else if r <= j[2] {
            2
        } else if r < j[3] {
            3
        } else {
            4
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.pieces[self.index(r)].value(r)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        self.pieces[self.index(r)].derivative(r)
    }

    /// Largest relative mismatch (scaled by `max(1, |.|)`) in value and first
    /// derivative between neighboring formulas at each join.
    pub fn join_mismatch(&self, value_tol: f64, derivative_tol: f64) -> JoinMismatch {
        let mut out = JoinMismatch { value: 0.0, derivative: 0.0, offending: Vec::new() };
        for (k, &r) in self.joins.iter().enumerate() {
            let (left, right) = (self.pieces[k], self.pieces[k + 1]);
            let (vl, vr) = (left.value(r), right.value(r));
            let (dl, dr) = (left.derivative(r), right.derivative(r));
            let dv = (vl - vr).abs() / vl.abs().max(vr.abs()).max(1.0);
            let dd = (dl - dr).abs() / dl.abs().max(dr.abs()).max(1.0);
            out.value = out.value.max(dv);
            out.derivative = out.derivative.max(dd);
            if dv > value_tol || dd > derivative_tol {
                out.offending.push(r);
            }
        }
        out
    }
}

/// Linear interpolation of `(radius, value)` samples with constant
/// extrapolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TabulatedData", into = "TabulatedData")]
pub struct Tabulated {
    radii: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabulatedData {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl From<Tabulated> for TabulatedData {
    fn from(t: Tabulated) -> Self {
        TabulatedData { radii: t.radii, values: t.values }
    }
}

impl TryFrom<TabulatedData> for Tabulated {
    type Error = Error;
    fn try_from(d: TabulatedData) -> Result<Self> {
        Tabulated::new(d.radii, d.values)
    }
}

impl Tabulated {
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::domain("tabulated potential needs at least one sample"));
        }
        if radii.len() != values.len() {
            return Err(Error::domain(format!(
                "tabulated potential has {} radii but {} values",
                radii.len(),
                values.len()
            )));
        }
        if radii.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::domain("tabulated potential contains non-finite entries"));
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("tabulated radii must be strictly increasing"));
        }
        Ok(Tabulated { radii, values })
    }

    /// Constant potential `w = c`.
    pub fn constant(c: f64) -> Self {
        Tabulated { radii: vec![0.0], values: vec![c] }
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Reads a two-column `radius,value` CSV (commas or whitespace; a
    /// non-numeric first line is treated as a header).
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut radii = Vec::new();
        let mut values = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|c| !c.is_empty()).collect();
            let parsed: Option<Vec<f64>> = cols.iter().map(|c| c.parse().ok()).collect();
            match parsed {
                Some(v) if v.len() == 2 => {
                    radii.push(v[0]);
                    values.push(v[1]);
                }
                None if radii.is_empty() && i == 0 => continue,
                _ => return Err(Error::parse(i + 1, format!("expected two numeric columns, got {line:?}"))),
            }
        }
        Tabulated::new(radii, values)
    }
}

impl RadialFunction for Tabulated {
    fn value(&self, r: f64) -> f64 {
        let (x, y) = (&self.radii, &self.values);
        if r <= x[0] {
            return y[0];
        }
        let n = x.len();
        if r >= x[n - 1] {
            return y[n - 1];
        }
        let k = x.partition_point(|&v| v <= r) - 1;
        let t = (r - x[k]) / (x[k + 1] - x[k]);
        y[k] + t * (y[k + 1] - y[k])
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.radii.clone()
    }
}

/// `coeff * r^{-exponent}`; used for ball-average bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLaw {
    pub coeff: f64,
    pub exponent: f64,
}

impl RadialFunction for PowerLaw {
    fn value(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return f64::INFINITY;
        }
        self.coeff * r.powf(-self.exponent)
    }

    fn origin_singularity(&self) -> Option<f64> {
        (self.exponent > 0.0).then_some(self.exponent)
    }
}

/// `W1 = W_composite - W_eps`: the nonnegative excess of a composite potential
/// over the prototype well with the same `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excess {
    pub composite: Composite,
}

impl RadialFunction for Excess {
    fn value(&self, r: f64) -> f64 {
        let base = Prototype { eps: self.composite.eps };
        self.composite.value(r) - base.value(r)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.composite.breakpoints()
    }

    fn origin_singularity(&self) -> Option<f64> {
        self.composite.origin_singularity()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum RadialPotential {
    Prototype(Prototype),
    Composite(Composite),
    Tabulated(Tabulated),
}

impl From<Prototype> for RadialPotential {
    fn from(p: Prototype) -> Self {
        RadialPotential::Prototype(p)
    }
}

impl From<Composite> for RadialPotential {
    fn from(p: Composite) -> Self {
        RadialPotential::Composite(p)
    }
}

impl From<Tabulated> for RadialPotential {
    fn from(p: Tabulated) -> Self {
        RadialPotential::Tabulated(p)
    }
}

/// Step of the central difference used for tabulated derivatives.
const TABULATED_FD_STEP: f64 = 1e-7;

impl RadialPotential {
    pub fn prototype(eps: f64) -> Result<Self> {
        Ok(Prototype::new(eps)?.into())
    }

    pub fn composite(eps: f64, alpha: f64, beta: f64, power_s: f64, dim: usize) -> Result<Self> {
        Ok(Composite::new(eps, alpha, beta, power_s, dim)?.into())
    }

    pub fn name(&self) -> &'static str {
        match self {
            RadialPotential::Prototype(_) => "prototype",
            RadialPotential::Composite(_) => "composite",
            RadialPotential::Tabulated(_) => "tabulated",
        }
    }

    /// Evaluates `w(r)`, rejecting radii where the potential is undefined.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if r.is_nan() || r < 0.0 {
            return Err(Error::domain(format!("radius must be nonnegative, got {r}")));
        }
        match self {
            RadialPotential::Composite(c) if r <= 0.0 && c.alpha > 0.0 => {
                Err(Error::domain("composite potential is singular at r = 0"))
            }
            _ => Ok(self.value(r)),
        }
    }

    /// `w'(r)`.
    pub fn derivative(&self, r: f64) -> Result<f64> {
        if r.is_nan() || r <= 0.0 {
            return Err(Error::domain(format!("derivative needs r > 0, got {r}")));
        }
        match self {
            RadialPotential::Prototype(p) => {
                if (r - (1.0 - p.eps)).abs() <= JUMP_WINDOW || (r - (1.0 + p.eps)).abs() <= JUMP_WINDOW {
                    Err(Error::NonDifferentiable { r })
                } else {
                    Ok(0.0)
                }
            }
            RadialPotential::Composite(c) => c.derivative(r),
            RadialPotential::Tabulated(t) => {
                let h = TABULATED_FD_STEP.min(0.5 * r);
                Ok((t.value(r + h) - t.value(r - h)) / (2.0 * h))
            }
        }
    }

    /// Whether the potential is differentiable away from the origin.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, RadialPotential::Prototype(_))
    }

    /// The `eps` of the prototype well underlying the potential, if any.
    pub fn well_eps(&self) -> Option<f64> {
        match self {
            RadialPotential::Prototype(p) => Some(p.eps),
            RadialPotential::Composite(c) => Some(c.eps),
            RadialPotential::Tabulated(_) => None,
        }
    }

    /// Parses the `key = value` config block. Tabulated potentials either
    /// inline `radii`/`values` as comma-separated lists or point `file` at a
    /// two-column CSV, resolved relative to `base_dir`.
    pub fn from_config_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, format!("expected `key = value`, got {line:?}")))?;
            let key = k.trim().to_ascii_lowercase();
            if entries.iter().any(|(_, existing, _)| *existing == key) {
                return Err(Error::parse(i + 1, format!("duplicate key {key:?}")));
            }
            entries.push((i + 1, key, v.trim().to_string()));
        }
        let get = |key: &str| entries.iter().find(|(_, k, _)| k == key);
        let num = |key: &str| -> Result<f64> {
            let (line, _, v) = get(key).ok_or_else(|| Error::parse(0, format!("missing key {key:?}")))?;
            v.parse().map_err(|_| Error::parse(*line, format!("{key} is not a number: {v:?}")))
        };
        let (_, _, variant) = get("variant").ok_or_else(|| Error::parse(0, "missing key \"variant\""))?;
        let allowed: &[&str] = match variant.as_str() {
            "prototype" => &["variant", "eps"],
            "composite" => &["variant", "eps", "alpha", "beta", "power_s", "dim"],
            "tabulated" => &["variant", "file", "radii", "values"],
            other => return Err(Error::parse(0, format!("unknown variant {other:?}"))),
        };
        if let Some((line, k, _)) = entries.iter().find(|(_, k, _)| !allowed.contains(&k.as_str())) {
            return Err(Error::parse(*line, format!("unknown key {k:?} for variant {variant}")));
        }
        match variant.as_str() {
            "prototype" => RadialPotential::prototype(num("eps")?),
            "composite" => {
                let dim = num("dim")?;
                if dim.fract() != 0.0 || dim < 0.0 {
                    return Err(Error::parse(0, format!("dim must be an integer, got {dim}")));
                }
                RadialPotential::composite(num("eps")?, num("alpha")?, num("beta")?, num("power_s")?, dim as usize)
            }
            _ => {
                if let Some((_, _, file)) = get("file") {
                    let path = match base_dir {
                        Some(dir) => dir.join(file),
                        None => file.into(),
                    };
                    return Ok(Tabulated::from_csv(path)?.into());
                }
                let list = |key: &str| -> Result<Vec<f64>> {
                    let (line, _, v) = get(key).ok_or_else(|| Error::parse(0, format!("missing key {key:?}")))?;
                    v.split(',')
                        .map(|x| x.trim().parse().map_err(|_| Error::parse(*line, format!("bad number in {key}: {x:?}"))))
                        .collect()
                };
                Ok(Tabulated::new(list("radii")?, list("values")?)?.into())
            }
        }
    }

    pub fn from_config_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_config_str(&text, path.parent())
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        match self {
            RadialPotential::Prototype(p) => {
                let _ = writeln!(out, "variant = prototype\neps = {}", p.eps);
            }
            RadialPotential::Composite(c) => {
                let _ = writeln!(
                    out,
                    "variant = composite\neps = {}\nalpha = {}\nbeta = {}\npower_s = {}\ndim = {}",
                    c.eps, c.alpha, c.beta, c.power_s, c.dim
                );
            }
            RadialPotential::Tabulated(t) => {
                let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
                let _ = writeln!(out, "variant = tabulated\nradii = {}\nvalues = {}", join(&t.radii), join(&t.values));
            }
        }
        out
    }
}

impl RadialFunction for RadialPotential {
    #[inline]
    fn value(&self, r: f64) -> f64 {
        match self {
            RadialPotential::Prototype(p) => p.value(r),
            RadialPotential::Composite(c) => c.value(r),
            RadialPotential::Tabulated(t) => t.value(r),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            RadialPotential::Prototype(p) => p.breakpoints(),
            RadialPotential::Composite(c) => c.breakpoints(),
            RadialPotential::Tabulated(t) => t.breakpoints(),
        }
    }

    fn origin_singularity(&self) -> Option<f64> {
        match self {
            RadialPotential::Composite(c) => c.origin_singularity(),
            _ => None,
        }
    }
}

/// Result of [`verify_shape`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeReport {
    /// Unique zero of `w'`, separating repulsion from attraction.
    pub r0: f64,
    pub repulsive_verified: bool,
    pub attractive_verified: bool,
    pub grid_resolution: f64,
    pub r_far: f64,
    pub join_max_mismatch: f64,
    pub join_max_derivative_mismatch: f64,
}

/// Tolerance for the `w' >= 0` check beyond `r0`.
pub const ATTRACTIVE_TOL: f64 = 1e-12;
pub const JOIN_VALUE_TOL: f64 = 1e-9;
pub const JOIN_DERIVATIVE_TOL: f64 = 1e-7;

/// Default scan settings for [`verify_shape`]: step `1e-3` out to one unit past
/// the plateau start.
pub fn default_shape_grid(c: &Composite) -> (f64, f64) {
    (1e-3, c.plateau_start() + 1.0)
}

/// Checks that a composite potential is repulsive (`w' < 0`) up to a unique
/// radius `r0 ∈ (1 + eps - beta, 3/2)` and attractive (`w' >= 0`) beyond it,
/// and that the pieces of the well join in value and slope.
pub fn verify_shape(p: &RadialPotential, grid_step: f64, r_far: f64) -> Result<ShapeReport> {
    let RadialPotential::Composite(c) = p else {
        return Err(Error::precondition(format!("shape verification needs a composite potential, got {}", p.name())));
    };
    verify_composite_shape(c, &c.w2_pieces(), grid_step, r_far)
}

/// [`verify_shape`] against an explicit well table, so a modified table can be
/// checked against the same scan.
pub fn verify_composite_shape(c: &Composite, table: &PieceTable, grid_step: f64, r_far: f64) -> Result<ShapeReport> {
    if !(grid_step > 0.0) || !(r_far > grid_step) {
        return Err(Error::precondition(format!("bad shape grid: step {grid_step}, r_far {r_far}")));
    }
    let deriv = |r: f64| c.repulsive_derivative(r) + table.derivative(r);
    let n = (r_far / grid_step).floor() as usize;
    let grid: Vec<(f64, f64)> = (1..=n)
        .map(|k| {
            let r = k as f64 * grid_step;
            (r, deriv(r))
        })
        .collect();

    let Some(first_up) = grid.iter().position(|&(_, d)| d >= 0.0) else {
        return Err(Error::ShapeViolation {
            reason: "derivative never becomes nonnegative: no attractive range".into(),
            radii: vec![],
        });
    };
    let r0 = if first_up == 0 {
        grid[0].0
    } else {
        let (mut lo, mut hi) = (grid[first_up - 1].0, grid[first_up].0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if deriv(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };

    let repulsive_verified = grid[..first_up].iter().all(|&(_, d)| d < 0.0);
    let violations: Vec<f64> = grid[first_up..].iter().filter(|&&(_, d)| d < -ATTRACTIVE_TOL).map(|&(r, _)| r).collect();
    let attractive_verified = violations.is_empty();
    if !attractive_verified {
        return Err(Error::ShapeViolation {
            reason: format!("derivative changes sign more than once (first zero near r0 = {r0})"),
            radii: violations.into_iter().take(32).collect(),
        });
    }
    let window = (1.0 + c.eps - c.beta, 1.5);
    if !(r0 > window.0 && r0 < window.1) {
        return Err(Error::ShapeViolation {
            reason: format!("sign change r0 = {r0} outside ({}, {})", window.0, window.1),
            radii: vec![r0],
        });
    }
    let joins = table.join_mismatch(JOIN_VALUE_TOL, JOIN_DERIVATIVE_TOL);
    if !joins.offending.is_empty() {
        return Err(Error::ShapeViolation { reason: "pieces of the well do not join smoothly".into(), radii: joins.offending });
    }
    Ok(ShapeReport {
        r0,
        repulsive_verified,
        attractive_verified,
        grid_resolution: grid_step,
        r_far,
        join_max_mismatch: joins.value,
        join_max_derivative_mismatch: joins.derivative,
    })
}
