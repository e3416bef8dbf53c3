//! Particle gradient descent for smooth potentials.
//!
//! A configuration of `N` points stands for the empirical measure with
//! atoms of mass `1/N`. Self-interaction is excluded throughout, so the
//! energy is `(1/(2N^2)) sum_{i != j} w(|x_i - x_j|)`.

use std::path::PathBuf;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{distance, MeasureFile};
use crate::potential::{RadialFunction, RadialPotential};
use crate::quadrature::QuadratureSpec;
use crate::radial_energy::tilde_w;
use crate::sampling::{chunk_rng, in_ball};

/// Pairs closer than this count as coincident.
pub const COINCIDENT_TOL: f64 = 1e-12;

/// Relative energy change, per square root of the pair count, treated as
/// rounding noise by the line search.
const ROUNDOFF_ENERGY: f64 = 64.0 * f64::EPSILON;

/// Largest particle displacement of a first trial step.
const MAX_MOVE: f64 = 0.25;

/// Step halvings tried per search direction.
const MAX_BACKTRACKS: usize = 50;

/// `N` equal-mass particles in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleConfiguration {
    dim: usize,
    positions: Vec<Vec<f64>>,
}

impl ParticleConfiguration {
    pub fn new(dim: usize, positions: Vec<Vec<f64>>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidMeasure("dimension must be at least 2".into()));
        }
        if positions.is_empty() {
            return Err(Error::InvalidMeasure("configuration has no particles".into()));
        }
        for (i, p) in positions.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::InvalidMeasure(format!(
                    "particle {i} has {} coordinates, expected {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidMeasure(format!("particle {i} is not finite")));
            }
        }
        Ok(ParticleConfiguration { dim, positions })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn centroid(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut c = vec![0.0; self.dim];
        for p in &self.positions {
            for (ck, pk) in c.iter_mut().zip(p) {
                *ck += pk;
            }
        }
        c.iter_mut().for_each(|v| *v /= n);
        c
    }

    /// Smallest pairwise distance and the pair attaining it.
    pub fn min_pair_distance(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let d = distance(&self.positions[i], &self.positions[j]);
                if best.is_none_or(|b| d < b.2) {
                    best = Some((i, j, d));
                }
            }
        }
        best
    }

    /// Applies `x -> m x` for a `dim x dim` row-major matrix.
    pub fn transformed(&self, m: &[Vec<f64>]) -> Result<Self> {
        let pos = self
            .positions
            .iter()
            .map(|p| m.iter().map(|row| row.iter().zip(p).map(|(a, b)| a * b).sum()).collect())
            .collect();
        ParticleConfiguration::new(self.dim, pos)
    }
}

/// `(1/(2N^2)) sum_{i != j} w(|x_i - x_j|)`.
///
/// Rows are summed in parallel and combined in index order.
pub fn particle_energy(p: &RadialPotential, c: &ParticleConfiguration) -> Result<f64> {
    energy_parts(p, c).map(|(e, _)| e)
}

/// The energy and `(1/N^2) sum_{i<j} |w|`, the scale of its rounding error.
fn energy_parts(p: &RadialPotential, c: &ParticleConfiguration) -> Result<(f64, f64)> {
    let pos = c.positions();
    let n = pos.len();
    let singular = p.singular_at_origin();
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut row, mut abs) = (0.0, 0.0);
            for j in i + 1..n {
                let d = distance(&pos[i], &pos[j]);
                if singular && d < COINCIDENT_TOL {
                    return Err(Error::CoincidentParticles { i, j, distance: d });
                }
                let w = p.value(d);
                row += w;
                abs += w.abs();
            }
            Ok((row, abs))
        })
        .collect::<Result<_>>()?;
    let n2 = n as f64 * n as f64;
    let (pairs, abs) = rows.iter().fold((0.0, 0.0), |(a, b), (r, s)| (a + r, b + s));
    Ok((pairs / n2, abs / n2))
}

/// `dE/dx_i = (1/N^2) sum_{j != i} w'(|x_i - x_j|) (x_i - x_j) / |x_i - x_j|`.
pub fn particle_gradient(p: &RadialPotential, c: &ParticleConfiguration) -> Result<Vec<Vec<f64>>> {
    let pos = c.positions();
    let n = pos.len();
    let dim = c.dim();
    let scale = 1.0 / (n as f64 * n as f64);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = vec![0.0; dim];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = distance(&pos[i], &pos[j]);
                if d < COINCIDENT_TOL {
                    if p.singular_at_origin() {
                        return Err(Error::CoincidentParticles { i: i.min(j), j: i.max(j), distance: d });
                    }
                    continue;
                }
                let f = p.derivative(d)? / d;
                for k in 0..dim {
                    g[k] += f * (pos[i][k] - pos[j][k]);
                }
            }
            g.iter_mut().for_each(|v| *v *= scale);
            Ok(g)
        })
        .collect()
}

#[cfg(test)]
fn max_norm(g: &[Vec<f64>]) -> f64 {
    g.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    Gaussian { scale: f64 },
    UniformBall { radius: f64 },
    FromFile { path: PathBuf },
}

/// Search direction of [`gradient_descent`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Direction {
    Steepest,
    /// L-BFGS with the given number of stored correction pairs.
    Lbfgs { memory: usize },
}

impl Default for Direction {
    fn default() -> Self {
        Direction::Lbfgs { memory: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescentSpec {
    pub n_particles: usize,
    pub max_iters: usize,
    /// Upper limit of the trial step.
    pub step0: f64,
    pub shrink: f64,
    pub armijo: f64,
    pub grad_tol: f64,
    pub seed: u64,
    pub init: Init,
    #[serde(default)]
    pub direction: Direction,
}

impl DescentSpec {
    /// Defaults for dimension `dim`: `30 (d + 1)` particles from a unit Gaussian.
    pub fn for_dim(dim: usize) -> Self {
        DescentSpec {
            n_particles: 30 * (dim + 1),
            max_iters: 20_000,
            step0: 1e3,
            shrink: 0.5,
            armijo: 1e-4,
            grad_tol: 1e-9,
            seed: 0,
            init: Init::Gaussian { scale: 1.0 },
            direction: Direction::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if self.max_iters == 0 || !positive(self.step0) || !positive(self.grad_tol) {
            return Err(Error::precondition("max_iters, step0 and grad_tol must be positive"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) || !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::precondition("shrink and armijo must lie in (0, 1)"));
        }
        match self.init {
            Init::Gaussian { scale: x } | Init::UniformBall { radius: x } if !positive(x) => {
                Err(Error::precondition("initial scale must be positive"))
            }
            Init::FromFile { .. } => Ok(()),
            _ if self.n_particles < 2 => Err(Error::precondition("need at least 2 particles")),
            _ => Ok(()),
        }
    }

    /// The starting configuration.
    pub fn initial(&self, dim: usize) -> Result<ParticleConfiguration> {
        let mut rng = chunk_rng(self.seed, 0, 0);
        let positions = match &self.init {
            Init::Gaussian { scale } => (0..self.n_particles)
                .map(|_| (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
                .collect(),
            Init::UniformBall { radius } => (0..self.n_particles)
                .map(|_| {
                    let mut v = vec![0.0; dim];
                    in_ball(&mut rng, *radius, &mut v);
                    v
                })
                .collect(),
            Init::FromFile { path } => {
                return match MeasureFile::read(path)? {
                    MeasureFile::Particles(c) if c.dim() == dim => Ok(c),
                    MeasureFile::Particles(c) => Err(Error::precondition(format!(
                        "initial configuration has dimension {}, expected {dim}",
                        c.dim()
                    ))),
                    other => Err(Error::precondition(format!(
                        "initial configuration must be a particles file, got {}",
                        other.kind()
                    ))),
                };
            }
        };
        ParticleConfiguration::new(dim, positions)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
}

pub const TRACE_HEADER: &str = "iter,energy,grad_norm,step";

pub fn trace_to_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        out.push_str(&format!("{},{:?},{:?},{:?}\n", r.iter, r.energy, r.grad_norm, r.step));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    /// The line search could not decrease the energy any further.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentResult {
    pub config: ParticleConfiguration,
    pub trace: Vec<TraceRow>,
    pub stop: StopReason,
}

impl DescentResult {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::GradientTolerance
    }

    pub fn energy(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.energy)
    }
}

fn flat(g: &[Vec<f64>]) -> Vec<f64> {
    g.iter().flatten().copied().collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn step_along(c: &ParticleConfiguration, dir: &[f64], t: f64) -> ParticleConfiguration {
    let dim = c.dim();
    let positions = c
        .positions()
        .iter()
        .zip(dir.chunks(dim))
        .map(|(x, dx)| x.iter().zip(dx).map(|(a, b)| a + t * b).collect())
        .collect();
    ParticleConfiguration { dim, positions }
}

/// Limited-memory BFGS history of position and gradient differences.
struct History {
    memory: usize,
    pairs: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl History {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        // skip pairs that would break positive definiteness
        if self.memory == 0 || !(sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt()) {
            return;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// `-H g` by the two-loop recursion.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut a = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let ai = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qk, yk)| *qk -= ai * yk);
            a.push(ai);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), ai) in self.pairs.iter().zip(a.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qk, sk)| *qk += (ai - b) * sk);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

/// Descent with Armijo backtracking along steepest-descent or L-BFGS
/// directions.
///
/// Trial steps with coincident particles or a non-finite energy are shrunk
/// like any other rejected step. Once the required decrease is below
/// rounding level, a trial is accepted if the energy does not rise and the
/// gradient shrinks. Stops when the largest per-particle gradient norm drops
/// below `grad_tol`.
pub fn gradient_descent(p: &RadialPotential, dim: usize, spec: &DescentSpec) -> Result<DescentResult> {
    if !p.is_smooth() {
        return Err(Error::precondition(format!(
            "{} potential is not differentiable; minimize a composite or tabulated surrogate",
            p.name()
        )));
    }
    spec.validate()?;
    let mut c = spec.initial(dim)?;
    if c.len() < 2 {
        return Err(Error::precondition("need at least 2 particles"));
    }
    let memory = match spec.direction {
        Direction::Steepest => 0,
        Direction::Lbfgs { memory } => memory,
    };
    let mut history = History { memory, pairs: Default::default() };
    let mut e = particle_energy(p, &c)?;
    let mut g = flat(&particle_gradient(p, &c)?);
    let mut gn = max_norm_flat(&g, dim);
    let mut trace = vec![TraceRow { iter: 0, energy: e, grad_norm: gn, step: 0.0 }];
    let mut t_prev = spec.step0;
    let mut stop = StopReason::MaxIterations;
    for iter in 1..=spec.max_iters {
        if gn < spec.grad_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        // L-BFGS first, then steepest descent from the previous step and
        // finally from step0, so one tiny step cannot stall the run
        let mut attempts: Vec<(bool, f64)> = Vec::with_capacity(3);
        if !history.pairs.is_empty() {
            attempts.push((true, 1.0));
        }
        attempts.push((false, (2.0 * t_prev).min(spec.step0)));
        if 2.0 * t_prev < spec.step0 {
            attempts.push((false, spec.step0));
        }
        let mut accepted = None;
        for (quasi_newton, t0) in attempts {
            let mut dir = if quasi_newton { history.direction(&g) } else { g.iter().map(|x| -x).collect() };
            let mut slope = dot(&g, &dir);
            if !(slope < 0.0) {
                dir = g.iter().map(|x| -x).collect();
                slope = -dot(&g, &g);
            }
            if let Some(found) = line_search(p, spec, &c, e, euclid(&g), &dir, slope, t0)? {
                accepted = Some((found, dir));
                break;
            }
            history.pairs.clear();
        }
        let Some(((next, en, gt, t), dir)) = accepted else {
            stop = StopReason::Stalled;
            break;
        };
        if let Some((i, j, d)) = next.min_pair_distance() {
            if d < COINCIDENT_TOL {
                return Err(Error::CoincidentParticles { i, j, distance: d });
            }
        }
        let g_next = match gt {
            Some(gt) => gt,
            None => flat(&particle_gradient(p, &next)?),
        };
        let s_k: Vec<f64> = dir.iter().map(|x| t * x).collect();
        let y_k: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        history.push(s_k, y_k);
        c = next;
        e = en;
        g = g_next;
        gn = max_norm_flat(&g, dim);
        t_prev = t;
        trace.push(TraceRow { iter, energy: e, grad_norm: gn, step: t });
    }
    if stop == StopReason::MaxIterations && gn < spec.grad_tol {
        stop = StopReason::GradientTolerance;
    }
    Ok(DescentResult { config: c, trace, stop })
}

/// Backtracks from `t0` along `dir`; returns the accepted configuration,
/// its energy, its gradient when already computed, and the step. `g_norm` is
/// the Euclidean norm of the current gradient.
#[allow(clippy::too_many_arguments)]
fn line_search(
    p: &RadialPotential,
    spec: &DescentSpec,
    c: &ParticleConfiguration,
    e: f64,
    g_norm: f64,
    dir: &[f64],
    slope: f64,
    t0: f64,
) -> Result<Option<(ParticleConfiguration, f64, Option<Vec<f64>>, f64)>> {
    let dmax = dir.chunks(c.dim()).map(euclid).fold(0.0, f64::max);
    let mut t = if dmax > 0.0 { t0.min(MAX_MOVE / dmax) } else { t0 };
    for _ in 0..MAX_BACKTRACKS {
        let trial = step_along(c, dir, t);
        let decrease = -spec.armijo * t * slope;
        match energy_parts(p, &trial) {
            Ok((et, scale)) => {
                // below the rounding level of the pair sum the Armijo test is
                // blind; require a smaller gradient at no higher energy instead
                let pairs = (c.len() * (c.len() - 1) / 2) as f64;
                let noise = decrease <= ROUNDOFF_ENERGY * pairs.sqrt() * scale.max(f64::MIN_POSITIVE);
                if !noise && et.is_finite() && et <= e - decrease {
                    return Ok(Some((trial, et, None, t)));
                }
                if noise && et <= e {
                    match particle_gradient(p, &trial) {
                        Ok(gt) if euclid(&flat(&gt)) < g_norm => return Ok(Some((trial, et, Some(flat(&gt)), t))),
                        Ok(_) | Err(Error::CoincidentParticles { .. }) => {}
                        Err(err) => return Err(err),
                    }
                }
            }
            Err(Error::CoincidentParticles { .. }) => {}
            Err(err) => return Err(err),
        }
        t *= spec.shrink;
    }
    Ok(None)
}

fn euclid(g: &[f64]) -> f64 {
    dot(g, g).sqrt()
}

fn max_norm_flat(g: &[f64], dim: usize) -> f64 {
    g.chunks(dim).map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

/// Energy of the radial symmetrization about the centroid: each particle is
/// replaced by the uniform shell through it, with `i = j` terms excluded.
pub fn radialize_energy(p: &RadialPotential, c: &ParticleConfiguration, q: &QuadratureSpec) -> Result<f64> {
    let n = c.len();
    if n < 2 {
        return Ok(0.0);
    }
    let centre = c.centroid();
    let radii: Vec<f64> = c.positions().iter().map(|x| distance(x, &centre)).collect();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| (i + 1..n).map(|j| tilde_w(p, radii[i], radii[j], c.dim(), q)).sum::<Result<f64>>())
        .collect::<Result<_>>()?;
    Ok(rows.iter().sum::<f64>() / (n as f64 * n as f64))
}

/// Number of connected components when particles closer than `threshold`
/// are linked (single linkage).
pub fn cluster_count(c: &ParticleConfiguration, threshold: f64) -> usize {
    let n = c.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut count = n;
    for i in 0..n {
        for j in i + 1..n {
            if distance(&c.positions()[i], &c.positions()[j]) < threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                    count -= 1;
                }
            }
        }
    }
    count
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryDiagnostics {
    pub particle_energy: f64,
    pub radialized_energy: f64,
    /// `radialized_energy - particle_energy`.
    pub radial_gap: f64,
    pub cluster_count: usize,
    pub cluster_radius_threshold: f64,
    /// The radial lower bound compared against, if one applies.
    pub radial_lower_bound: Option<f64>,
    pub below_radial_bound: bool,
}

impl AsymmetryDiagnostics {
    pub fn is_consistent(&self) -> bool {
        self.radial_gap == self.radialized_energy - self.particle_energy
            && self.below_radial_bound == self.radial_lower_bound.is_some_and(|b| self.particle_energy < b)
    }
}

pub const DEFAULT_CLUSTER_THRESHOLD: f64 = 0.2;

/// Energies, radial gap and cluster structure of `c`. `radial_bound` is the
/// lower bound valid for radial measures under `p`, typically taken from a
/// certificate for the same potential.
pub fn diagnose(
    p: &RadialPotential,
    c: &ParticleConfiguration,
    q: &QuadratureSpec,
    cluster_radius_threshold: f64,
    radial_bound: Option<f64>,
) -> Result<AsymmetryDiagnostics> {
    if !(cluster_radius_threshold > 0.0) {
        return Err(Error::precondition("cluster threshold must be positive"));
    }
    let particle_energy = particle_energy(p, c)?;
    let radialized_energy = radialize_energy(p, c, q)?;
    Ok(AsymmetryDiagnostics {
        particle_energy,
        radialized_energy,
        radial_gap: radialized_energy - particle_energy,
        cluster_count: cluster_count(c, cluster_radius_threshold),
        cluster_radius_threshold,
        radial_lower_bound: radial_bound,
        below_radial_bound: radial_bound.is_some_and(|b| particle_energy < b),
    })
}
