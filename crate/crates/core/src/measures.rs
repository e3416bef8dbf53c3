//! Competitor measures: simplex Dirac configurations, their mollified
//! (small-ball) versions, and radial shell profiles.
//!
//! All measures share a line-oriented text format:
//!
//! ```text
//! # comments and blank lines are ignored
//! kind balls          # dirac | balls | radial | particles
//! dim 2
//! eta 0.025           # balls only
//! 0.5 -0.28867513459481287 0.3333333333333333
//! ...
//! ```
//!
//! Data rows are `x_1 .. x_d weight` for `dirac` and `balls`, `radius weight`
//! for `radial`, and `x_1 .. x_d` for `particles` (equal weights).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minimizer::ParticleConfiguration;
use crate::potential::RadialFunction;

/// Tolerance on the total mass of a probability measure.
pub const MASS_TOL: f64 = 1e-12;

/// `d + 1` vertices of a regular simplex with unit edges, centered at the origin.
///
/// Built recursively: the simplex in `R^k` is lifted into `R^{k+1}` and the new
/// vertex is placed on the `(k+1)`-th axis, after which everything is shifted
/// along that axis to restore a zero centroid.
pub fn unit_simplex_vertices(dim: usize) -> Result<Vec<Vec<f64>>> {
    if dim < 1 {
        return Err(Error::Domain("simplex dimension must be at least 1".into()));
    }
    let mut verts: Vec<Vec<f64>> = vec![vec![-0.5], vec![0.5]];
    // circumradius of the current k-simplex with unit edges
    let mut r2: f64 = 0.25;
    for k in 1..dim {
        let h = (1.0 - r2).sqrt();
        let n_old = (k + 1) as f64;
        for v in verts.iter_mut() {
            v.push(-h / (n_old + 1.0));
        }
        let mut apex = vec![0.0; k];
        apex.push(h * n_old / (n_old + 1.0));
        verts.push(apex);
        let kk = (k + 1) as f64;
        r2 = kk / (2.0 * (kk + 1.0));
    }
    Ok(verts)
}

fn check_point(p: &[f64], dim: usize, what: &str) -> Result<()> {
    if p.len() != dim {
        return Err(Error::InvalidMeasure(format!(
            "{what} has {} coordinates, expected {dim}",
            p.len()
        )));
    }
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidMeasure(format!("{what} is not finite")));
    }
    Ok(())
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidMeasure("measure has no atoms".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidMeasure(format!("weight {w} is not positive")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidMeasure(format!("total mass {total} is not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub position: Vec<f64>,
    pub weight: f64,
}

/// A finite sum of weighted Dirac masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    dim: usize,
    atoms: Vec<Atom>,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidMeasure("dimension must be at least 2".into()));
        }
        for (i, a) in atoms.iter().enumerate() {
            check_point(&a.position, dim, &format!("atom {i}"))?;
        }
        check_weights(&atoms.iter().map(|a| a.weight).collect::<Vec<_>>())?;
        Ok(DiscreteMeasure { dim, atoms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `1/2 sum_{i != j} m_i m_j w(|x_i - x_j|)`; self-interaction is excluded.
    ///
    /// With equal weights the pair values are summed first and divided by
    /// `n^2` once, which makes integer pair sums exact.
    pub fn energy<W: RadialFunction + ?Sized>(&self, w: &W) -> f64 {
        let n = self.atoms.len();
        let first = self.atoms.first().map_or(0.0, |a| a.weight);
        if n > 0 && self.atoms.iter().all(|a| a.weight == first) && first * n as f64 == 1.0 {
            let mut pairs = 0.0;
            for (i, a) in self.atoms.iter().enumerate() {
                for b in &self.atoms[i + 1..] {
                    pairs += w.value(distance(&a.position, &b.position));
                }
            }
            return pairs / (n as f64 * n as f64);
        }
        let mut total = 0.0;
        for (i, a) in self.atoms.iter().enumerate() {
            for b in &self.atoms[i + 1..] {
                total += a.weight * b.weight * w.value(distance(&a.position, &b.position));
            }
        }
        total
    }
}

/// Equal-weight uniform balls of radius `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifiedBallMeasure {
    dim: usize,
    centers: Vec<Vec<f64>>,
    eta: f64,
    weights: Vec<f64>,
}

impl MollifiedBallMeasure {
    pub fn new(dim: usize, centers: Vec<Vec<f64>>, eta: f64, weights: Vec<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidMeasure("dimension must be at least 2".into()));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidMeasure(format!("ball radius {eta} is not positive")));
        }
        if centers.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} centers but {} weights",
                centers.len(),
                weights.len()
            )));
        }
        for (i, c) in centers.iter().enumerate() {
            check_point(c, dim, &format!("center {i}"))?;
        }
        check_weights(&weights)?;
        Ok(MollifiedBallMeasure { dim, centers, eta, weights })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The Dirac measure obtained as `eta -> 0`.
    pub fn centers_as_diracs(&self) -> DiscreteMeasure {
        DiscreteMeasure {
            dim: self.dim,
            atoms: self
                .centers
                .iter()
                .zip(&self.weights)
                .map(|(c, &w)| Atom { position: c.clone(), weight: w })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellNode {
    pub radius: f64,
    pub weight: f64,
}

/// `sum_i w_i delta_(r_i)`, with `delta_(t)` the uniform unit mass on the
/// sphere of radius `t` (a Dirac mass at the origin when `t = 0`).
///
/// Fields are public so that invalid profiles can be represented and
/// rejected by [`validate_profile`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub nodes: Vec<ShellNode>,
}

impl RadialProfile {
    pub fn new(nodes: Vec<ShellNode>) -> Result<Self> {
        let p = RadialProfile { nodes };
        if validate_profile(&p) {
            Ok(p)
        } else {
            Err(Error::InvalidMeasure(
                "radial profile needs positive weights summing to 1 and nonnegative radii".into(),
            ))
        }
    }

    pub fn single(radius: f64) -> Result<Self> {
        Self::new(vec![ShellNode { radius, weight: 1.0 }])
    }
}

/// True iff all weights are positive, they sum to 1 within [`MASS_TOL`] and
/// all radii are finite and nonnegative.
pub fn validate_profile(p: &RadialProfile) -> bool {
    !p.nodes.is_empty()
        && p.nodes
            .iter()
            .all(|n| n.weight > 0.0 && n.weight.is_finite() && n.radius >= 0.0 && n.radius.is_finite())
        && (p.nodes.iter().map(|n| n.weight).sum::<f64>() - 1.0).abs() <= MASS_TOL
}

/// The simplex competitor: Dirac masses when `eta = 0`, balls of radius `eta` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Competitor {
    Dirac(DiscreteMeasure),
    Balls(MollifiedBallMeasure),
}

/// Equal masses `1/(d+1)` at the vertices of the unit simplex, spread over
/// balls of radius `eta` when `eta > 0`.
pub fn rho_star_eta(dim: usize, eta: f64) -> Result<Competitor> {
    if dim < 2 {
        return Err(Error::Domain("dimension must be at least 2".into()));
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Domain(format!("ball radius {eta} must be nonnegative")));
    }
    let verts = unit_simplex_vertices(dim)?;
    let w = 1.0 / (dim as f64 + 1.0);
    if eta == 0.0 {
        let atoms = verts.into_iter().map(|position| Atom { position, weight: w }).collect();
        Ok(Competitor::Dirac(DiscreteMeasure::new(dim, atoms)?))
    } else {
        let n = verts.len();
        Ok(Competitor::Balls(MollifiedBallMeasure::new(dim, verts, eta, vec![w; n])?))
    }
}

/// Any measure that can be stored in the text format.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureFile {
    Dirac(DiscreteMeasure),
    Balls(MollifiedBallMeasure),
    Radial { dim: Option<usize>, profile: RadialProfile },
    Particles(ParticleConfiguration),
}

impl From<Competitor> for MeasureFile {
    fn from(c: Competitor) -> Self {
        match c {
            Competitor::Dirac(m) => MeasureFile::Dirac(m),
            Competitor::Balls(m) => MeasureFile::Balls(m),
        }
    }
}

impl MeasureFile {
    pub fn kind(&self) -> &'static str {
        match self {
            MeasureFile::Dirac(_) => "dirac",
            MeasureFile::Balls(_) => "balls",
            MeasureFile::Radial { .. } => "radial",
            MeasureFile::Particles(_) => "particles",
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            MeasureFile::Dirac(m) => Some(m.dim()),
            MeasureFile::Balls(m) => Some(m.dim()),
            MeasureFile::Radial { dim, .. } => *dim,
            MeasureFile::Particles(c) => Some(c.dim()),
        }
    }

    /// Serializes with shortest round-trip float formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "kind {}", self.kind());
        if let Some(d) = self.dim() {
            let _ = writeln!(out, "dim {d}");
        }
        let row = |out: &mut String, xs: &[f64], w: Option<f64>| {
            let mut fields: Vec<String> = xs.iter().map(|x| format!("{x:?}")).collect();
            if let Some(w) = w {
                fields.push(format!("{w:?}"));
            }
            let _ = writeln!(out, "{}", fields.join(" "));
        };
        match self {
            MeasureFile::Dirac(m) => {
                for a in m.atoms() {
                    row(&mut out, &a.position, Some(a.weight));
                }
            }
            MeasureFile::Balls(m) => {
                let _ = writeln!(out, "eta {:?}", m.eta());
                for (c, w) in m.centers().iter().zip(m.weights()) {
                    row(&mut out, c, Some(*w));
                }
            }
            MeasureFile::Radial { profile, .. } => {
                for n in &profile.nodes {
                    row(&mut out, &[n.radius], Some(n.weight));
                }
            }
            MeasureFile::Particles(c) => {
                for p in c.positions() {
                    row(&mut out, p, None);
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kind: Option<(usize, String)> = None;
        let mut dim: Option<usize> = None;
        let mut eta: Option<f64> = None;
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let head = fields.next().unwrap_or("");
            let rest: Vec<&str> = fields.collect();
            let header_value = |name: &str| -> Result<&str> {
                if !rows.is_empty() {
                    return Err(parse(line_no, format!("header `{name}` after data rows")));
                }
                match rest.as_slice() {
                    [v] => Ok(*v),
                    _ => Err(parse(line_no, format!("header `{name}` takes exactly one value"))),
                }
            };
            match head {
                "kind" => {
                    let v = header_value("kind")?;
                    if kind.is_some() {
                        return Err(parse(line_no, "duplicate header `kind`"));
                    }
                    kind = Some((line_no, v.to_string()));
                }
                "dim" => {
                    let v = header_value("dim")?;
                    if dim.is_some() {
                        return Err(parse(line_no, "duplicate header `dim`"));
                    }
                    dim = Some(v.parse().map_err(|_| parse(line_no, format!("bad dimension `{v}`")))?);
                }
                "eta" => {
                    let v = header_value("eta")?;
                    if eta.is_some() {
                        return Err(parse(line_no, "duplicate header `eta`"));
                    }
                    eta = Some(v.parse().map_err(|_| parse(line_no, format!("bad eta `{v}`")))?);
                }
                _ => {
                    let vals = line
                        .split_whitespace()
                        .map(|f| {
                            f.parse::<f64>()
                                .map_err(|_| parse(line_no, format!("bad number `{f}`")))
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    rows.push((line_no, vals));
                }
            }
        }
        let (kind_line, kind) = kind.ok_or_else(|| parse(1, "missing header `kind`"))?;
        let need_dim = || dim.ok_or_else(|| parse(kind_line, "missing header `dim`"));
        let check_len = |rows: &[(usize, Vec<f64>)], n: usize| -> Result<()> {
            for (line, r) in rows {
                if r.len() != n {
                    return Err(parse(*line, format!("expected {n} fields, found {}", r.len())));
                }
            }
            Ok(())
        };
        if eta.is_some() && kind != "balls" {
            return Err(parse(kind_line, format!("header `eta` is not allowed for kind `{kind}`")));
        }
        match kind.as_str() {
            "dirac" => {
                let d = need_dim()?;
                check_len(&rows, d + 1)?;
                let atoms = rows
                    .into_iter()
                    .map(|(_, mut r)| {
                        let weight = r.pop().unwrap_or(0.0);
                        Atom { position: r, weight }
                    })
                    .collect();
                Ok(MeasureFile::Dirac(DiscreteMeasure::new(d, atoms)?))
            }
            "balls" => {
                let d = need_dim()?;
                let eta = eta.ok_or_else(|| parse(kind_line, "missing header `eta`"))?;
                check_len(&rows, d + 1)?;
                let (centers, weights): (Vec<Vec<f64>>, Vec<f64>) = rows
                    .into_iter()
                    .map(|(_, mut r)| {
                        let w = r.pop().unwrap_or(0.0);
                        (r, w)
                    })
                    .unzip();
                Ok(MeasureFile::Balls(MollifiedBallMeasure::new(d, centers, eta, weights)?))
            }
            "radial" => {
                check_len(&rows, 2)?;
                let nodes = rows
                    .into_iter()
                    .map(|(_, r)| ShellNode { radius: r[0], weight: r[1] })
                    .collect();
                Ok(MeasureFile::Radial { dim, profile: RadialProfile::new(nodes)? })
            }
            "particles" => {
                let d = need_dim()?;
                check_len(&rows, d)?;
                let positions = rows.into_iter().map(|(_, r)| r).collect();
                Ok(MeasureFile::Particles(ParticleConfiguration::new(d, positions)?))
            }
            other => Err(parse(kind_line, format!("unknown measure kind `{other}`"))),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse(line: usize, msg: impl Into<String>) -> Error {
    Error::parse(line, msg)
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Prototype;
    use proptest::prelude::*;

    fn centroid(v: &[Vec<f64>]) -> Vec<f64> {
        let d = v[0].len();
        (0..d).map(|k| v.iter().map(|p| p[k]).sum::<f64>() / v.len() as f64).collect()
    }

    #[test]
    fn simplex_has_unit_edges_and_zero_centroid() {
        for dim in 1..=10 {
            let v = unit_simplex_vertices(dim).unwrap();
            assert_eq!(v.len(), dim + 1);
            for p in &v {
                assert_eq!(p.len(), dim);
            }
            for i in 0..v.len() {
                for j in i + 1..v.len() {
                    let dist = distance(&v[i], &v[j]);
                    assert!((dist - 1.0).abs() < 1e-12, "dim {dim}: |v{i} - v{j}| = {dist}");
                }
            }
            let c = centroid(&v);
            assert!(c.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-12);
        }
    }

    #[test]
    fn triangle_and_tetrahedron_circumradius() {
        // circumradius of the unit regular k-simplex is sqrt(k / (2(k+1)))
        for (dim, r) in [(2usize, (1.0f64 / 3.0).sqrt()), (3, (3.0f64 / 8.0).sqrt())] {
            for p in unit_simplex_vertices(dim).unwrap() {
                let n = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((n - r).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn five_simplex_pairwise_distances() {
        let v = unit_simplex_vertices(5).unwrap();
        assert_eq!(v.len(), 6);
        let mut pairs = 0;
        for i in 0..6 {
            for j in i + 1..6 {
                assert!((distance(&v[i], &v[j]) - 1.0).abs() < 1e-12);
                pairs += 1;
            }
        }
        assert_eq!(pairs, 15);
    }

    #[test]
    fn competitor_construction() {
        match rho_star_eta(2, 0.0).unwrap() {
            Competitor::Dirac(m) => {
                assert_eq!(m.atoms().len(), 3);
                assert!(m.atoms().iter().all(|a| a.weight == 1.0 / 3.0));
                assert!((m.total_mass() - 1.0).abs() < 1e-15);
            }
            _ => panic!("expected Dirac measure"),
        }
        match rho_star_eta(3, 0.02).unwrap() {
            Competitor::Balls(m) => {
                assert_eq!(m.centers().len(), 4);
                assert_eq!(m.eta(), 0.02);
                assert!(m.weights().iter().all(|&w| w == 0.25));
            }
            _ => panic!("expected balls"),
        }
        assert!(rho_star_eta(2, -0.1).is_err());
        assert!(rho_star_eta(1, 0.0).is_err());
    }

    #[test]
    fn dirac_total_mass_is_one_for_all_dims() {
        for d in 2..=10 {
            let Competitor::Dirac(m) = rho_star_eta(d, 0.0).unwrap() else { panic!() };
            assert!((m.total_mass() - 1.0).abs() <= 1e-15, "d = {d}");
        }
    }

    #[test]
    fn simplex_dirac_energy_under_prototype() {
        let w = Prototype::new(0.1).unwrap();
        for d in 2..=6 {
            let Competitor::Dirac(m) = rho_star_eta(d, 0.0).unwrap() else { panic!() };
            let expected = -(d as f64) / (2.0 * (d as f64 + 1.0));
            assert!((m.energy(&w) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn profile_validation() {
        let node = |radius, weight| ShellNode { radius, weight };
        assert!(validate_profile(&RadialProfile { nodes: vec![node(0.0, 1.0)] }));
        assert!(validate_profile(&RadialProfile { nodes: vec![node(1.0, 0.5), node(2.0, 0.5)] }));
        assert!(!validate_profile(&RadialProfile { nodes: vec![node(1.0, 0.7), node(2.0, 0.7)] }));
        assert!(!validate_profile(&RadialProfile { nodes: vec![node(-1.0, 1.0)] }));
        assert!(!validate_profile(&RadialProfile { nodes: vec![node(1.0, 1.5), node(2.0, -0.5)] }));
        assert!(!validate_profile(&RadialProfile { nodes: vec![] }));
        assert!(RadialProfile::new(vec![node(1.0, 0.7)]).is_err());
    }

    #[test]
    fn invalid_measures_are_rejected() {
        let atom = |x: f64, w| Atom { position: vec![x, 0.0], weight: w };
        assert!(DiscreteMeasure::new(2, vec![atom(0.0, 0.5), atom(1.0, 0.4)]).is_err());
        assert!(DiscreteMeasure::new(2, vec![atom(0.0, 1.2), atom(1.0, -0.2)]).is_err());
        assert!(DiscreteMeasure::new(
            2,
            vec![Atom { position: vec![0.0], weight: 1.0 }]
        )
        .is_err());
        assert!(MollifiedBallMeasure::new(2, vec![vec![0.0, 0.0]], 0.0, vec![1.0]).is_err());
        assert!(MollifiedBallMeasure::new(2, vec![vec![0.0, 0.0]], 0.1, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn text_round_trip() {
        for m in [rho_star_eta(3, 0.0).unwrap(), rho_star_eta(2, 0.025).unwrap()] {
            let f = MeasureFile::from(m);
            let back = MeasureFile::parse(&f.to_text()).unwrap();
            assert_eq!(back, f);
        }
        let radial = MeasureFile::Radial {
            dim: Some(2),
            profile: RadialProfile::new(vec![
                ShellNode { radius: 0.0, weight: 0.25 },
                ShellNode { radius: 1.0 / 3.0, weight: 0.75 },
            ])
            .unwrap(),
        };
        assert_eq!(MeasureFile::parse(&radial.to_text()).unwrap(), radial);
        let particles = MeasureFile::Particles(
            ParticleConfiguration::new(2, vec![vec![0.1, 0.2], vec![-0.3, 1e-17]]).unwrap(),
        );
        assert_eq!(MeasureFile::parse(&particles.to_text()).unwrap(), particles);
    }

    #[test]
    fn parser_accepts_comments_and_reports_line_numbers() {
        let text = "# simplex\nkind dirac\ndim 2\n\n0 0 0.5  # first\n1 0 0.5\n";
        let MeasureFile::Dirac(m) = MeasureFile::parse(text).unwrap() else { panic!() };
        assert_eq!(m.atoms().len(), 2);

        let bad = "kind dirac\ndim 2\n0 0 0.5\n1 x 0.5\n";
        match MeasureFile::parse(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let short = "kind balls\ndim 2\neta 0.1\n0 0\n";
        assert!(matches!(MeasureFile::parse(short), Err(Error::Parse { line: 4, .. })));
        assert!(matches!(MeasureFile::parse("dim 2\n0 0 1\n"), Err(Error::Parse { .. })));
        assert!(MeasureFile::parse("kind blob\ndim 2\n").is_err());
        assert!(MeasureFile::parse("kind balls\ndim 2\n0 0 1\n").is_err());
        assert!(MeasureFile::parse("kind dirac\ndim 2\neta 0.1\n0 0 1\n").is_err());
        assert!(MeasureFile::parse("kind dirac\ndim 2\ndim 3\n0 0 1\n").is_err());
    }

    proptest! {
        #[test]
        fn simplex_invariants(dim in 2usize..=10) {
            let v = unit_simplex_vertices(dim).unwrap();
            for i in 0..v.len() {
                for j in i + 1..v.len() {
                    prop_assert!((distance(&v[i], &v[j]) - 1.0).abs() < 1e-12);
                }
            }
            let c = centroid(&v);
            prop_assert!(c.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-12);
        }
    }
}
