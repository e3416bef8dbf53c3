use symbreak::certificate::{certify_composite, CertifyOptions};
use symbreak::measures::{unit_simplex_vertices, MeasureFile};
use symbreak::minimizer::{diagnose, gradient_descent, DescentSpec, Init, ParticleConfiguration};
use symbreak::sampling::{chunk_rng, in_ball};
use symbreak::{QuadratureSpec, RadialPotential};

const EPS: f64 = 0.05;
const ALPHA: f64 = 0.00625;
const BETA: f64 = 0.0015625;

#[test]
fn smaller_parameters_keep_the_certificate() {
    let opts = CertifyOptions::default();
    let base = certify_composite(EPS, ALPHA, BETA, 0.5, 2, None, &opts).unwrap();
    let half = certify_composite(EPS, ALPHA / 2.0, BETA / 2.0, 0.5, 2, None, &opts).unwrap();
    assert!(base.passed && half.passed);
    // less repulsion and a steeper ramp only shrink the ball averages
    assert!(half.condition_lhs.unwrap() <= base.condition_lhs.unwrap());
    assert!(half.margin >= base.margin);
}

/// Three small blobs at the simplex vertices stay clustered under descent
/// and end below the radial bound.
#[test]
fn clustered_start_stays_below_the_radial_bound() {
    let p = RadialPotential::composite(EPS, ALPHA, BETA, 0.5, 2).unwrap();
    let report = certify_composite(EPS, ALPHA, BETA, 0.5, 2, None, &CertifyOptions::default()).unwrap();
    let mut rng = chunk_rng(3, 0, 0);
    let mut pos = Vec::new();
    for v in unit_simplex_vertices(2).unwrap() {
        for _ in 0..5 {
            let mut x = vec![0.0; 2];
            in_ball(&mut rng, 0.02, &mut x);
            pos.push(vec![v[0] + x[0], v[1] + x[1]]);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let start = dir.path().join("blobs.txt");
    MeasureFile::Particles(ParticleConfiguration::new(2, pos).unwrap()).write(&start).unwrap();

    let mut spec = DescentSpec::for_dim(2);
    spec.max_iters = 2000;
    spec.init = Init::FromFile { path: start };
    let res = gradient_descent(&p, 2, &spec).unwrap();
    assert!(res.trace.windows(2).all(|w| w[1].energy <= w[0].energy));
    let diag = diagnose(&p, &res.config, &QuadratureSpec::default(), 0.2, Some(report.radial_lower_bound)).unwrap();
    assert_eq!(diag.cluster_count, 3);
    assert!(diag.below_radial_bound, "{} vs {}", diag.particle_energy, report.radial_lower_bound);
    assert!(diag.is_consistent());
}
