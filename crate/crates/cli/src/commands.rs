use std::fs;
use std::path::PathBuf;

use serde_json::json;
use symbreak::certificate::{
    certify_composite, certify_general, certify_prototype, search_alpha_beta, AlphaBetaSchedule, CertificateReport,
    CertifyOptions,
};
use symbreak::measures::{rho_star_eta, MeasureFile};
use symbreak::minimizer::{
    diagnose, gradient_descent, particle_energy, trace_to_csv, DescentSpec, Direction, Init,
    DEFAULT_CLUSTER_THRESHOLD,
};
use symbreak::radial_energy::{
    kernel_sup, krs_analytic_bound, mollified_energy_mc, radial_energy, radial_lower_bound, BoundMode, SearchSpec,
};
use symbreak::{Error, QuadratureMethod, QuadratureSpec, RadialPotential};

use crate::config::{output_dir, pick, FileConfig, Global};
use crate::{CertifyCommand, Cli, Command, CommonCert, EnergyArgs, KernelSupArgs, MinimizeArgs, SampleArgs};

pub enum Outcome {
    Success,
    Failed,
    Usage(String),
    Collapse(String),
}

impl From<Error> for Outcome {
    fn from(e: Error) -> Self {
        match e {
            Error::CoincidentParticles { .. } => Outcome::Collapse(e.to_string()),
            Error::SearchExhausted(_) | Error::SearchInconclusive(_) | Error::Quadrature { .. } => {
                eprintln!("inconclusive: {e}");
                Outcome::Failed
            }
            other => Outcome::Usage(other.to_string()),
        }
    }
}

type Run<T> = std::result::Result<T, Outcome>;

fn usage<T>(msg: impl Into<String>) -> Run<T> {
    Err(Outcome::Usage(msg.into()))
}

fn required<T>(v: Option<T>, name: &str) -> Run<T> {
    match v {
        Some(v) => Ok(v),
        None => usage(format!("missing required option --{name}")),
    }
}

pub fn run(cli: Cli) -> Outcome {
    match dispatch(cli) {
        Ok(o) | Err(o) => o,
    }
}

fn dispatch(cli: Cli) -> Run<Outcome> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path).map_err(Outcome::Usage)?,
        None => FileConfig::default(),
    };
    let g = &file.global;
    let method = match pick(cli.quad_method.clone(), g.quad_method.clone()).as_deref() {
        None | Some("gauss_phi") | Some("gauss-phi") => QuadratureMethod::GaussPhi,
        Some("gauss_t") | Some("gauss-t") => QuadratureMethod::GaussT,
        Some(other) => return usage(format!("unknown quadrature method `{other}`")),
    };
    let quadrature = QuadratureSpec {
        method,
        panels: g.quad_panels.unwrap_or(1),
        tol: pick(cli.quad_tol, g.quad_tol).unwrap_or(QuadratureSpec::default().tol),
    };
    quadrature.validate()?;
    let global = Global {
        output_dir: output_dir(cli.output_dir.clone(), g.output_dir.clone()),
        seed: pick(cli.seed, g.seed).unwrap_or(0),
        threads: pick(cli.threads, g.threads),
        quadrature,
    };
    if let Some(n) = global.threads {
        if n == 0 {
            return usage("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Outcome::Usage(format!("cannot size thread pool: {e}")))?;
    }
    match cli.command {
        Command::Certify(c) => cmd_certify(c, &file, &global),
        Command::Energy(a) => cmd_energy(a, &file, &global),
        Command::KernelSup(a) => cmd_kernel_sup(a, &file, &global),
        Command::Minimize(a) => cmd_minimize(a, &file, &global),
        Command::PotentialSample(a) => cmd_potential_sample(a, &file, &global),
    }
}

/// A config file path, or an inline block with `;` separating `key=value` pairs.
fn load_potential(spec: &str) -> Run<RadialPotential> {
    let p = if spec.contains('=') {
        RadialPotential::from_config_str(&spec.replace(';', "\n"), None)
    } else {
        RadialPotential::from_config_file(spec)
    };
    Ok(p?)
}

fn write_output(global: &Global, name: &str, contents: &str) -> Run<PathBuf> {
    let dir = &global.output_dir;
    fs::create_dir_all(dir).map_err(|e| Outcome::Usage(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Outcome::Usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn json_text(v: &impl serde::Serialize) -> Run<String> {
    serde_json::to_string_pretty(v).map_err(|e| Outcome::Usage(e.to_string()))
}

fn cert_options(common: &CommonCert, file: &FileConfig, global: &Global) -> Run<CertifyOptions> {
    let mode: BoundMode = match pick(common.mode.clone(), file.certify.mode.clone()) {
        Some(m) => m.parse()?,
        None => BoundMode::default(),
    };
    let defaults = CertifyOptions::default();
    let slack = pick(common.slack, file.certify.slack).unwrap_or(defaults.slack);
    if !(slack >= 0.0) {
        return usage("--slack must be nonnegative");
    }
    Ok(CertifyOptions { mode, quadrature: global.quadrature, slack, ..defaults })
}

fn cmd_certify(cmd: CertifyCommand, file: &FileConfig, global: &Global) -> Run<Outcome> {
    let t = &file.certify;
    let common = match &cmd {
        CertifyCommand::Prototype(c) => c,
        CertifyCommand::General { common, .. }
        | CertifyCommand::Composite { common, .. }
        | CertifyCommand::Search { common, .. } => common,
    };
    let dim = pick(common.dim, t.dim).unwrap_or(2);
    let eps = required(pick(common.eps, t.eps), "eps")?;
    let opts = cert_options(common, file, global)?;
    let default_s = dim as f64 - 1.5;
    let mut resolved = json!({
        "global": global,
        "dim": dim,
        "eps": eps,
        "mode": opts.mode,
        "slack": opts.slack,
    });
    let (mut report, extra): (CertificateReport, Option<(String, String)>) = match cmd {
        CertifyCommand::Prototype(_) => (certify_prototype(eps, dim, &opts)?, None),
        CertifyCommand::General { w1, eta, .. } => {
            let spec = required(pick(w1, t.w1.clone()), "w1")?;
            let w1 = load_potential(&spec)?;
            let eta = pick(eta, t.eta).unwrap_or(0.5 * eps);
            resolved["w1"] = json!(spec);
            resolved["eta"] = json!(eta);
            (certify_general(&w1, eps, eta, dim, &opts)?, None)
        }
        CertifyCommand::Composite { alpha, beta, power_s, eta, search: false, .. } => {
            let alpha = required(pick(alpha, t.alpha), "alpha")?;
            let beta = required(pick(beta, t.beta), "beta")?;
            let s = pick(power_s, t.power_s).unwrap_or(default_s);
            let eta = pick(eta, t.eta);
            resolved["alpha"] = json!(alpha);
            resolved["beta"] = json!(beta);
            resolved["power_s"] = json!(s);
            resolved["eta"] = json!(eta.unwrap_or(0.5 * eps));
            (certify_composite(eps, alpha, beta, s, dim, eta, &opts)?, None)
        }
        CertifyCommand::Composite { power_s, search: true, .. } | CertifyCommand::Search { power_s, .. } => {
            let s = pick(power_s, t.power_s).unwrap_or(default_s);
            let schedule = AlphaBetaSchedule::tied(eps);
            resolved["power_s"] = json!(s);
            resolved["schedule"] = json!(schedule);
            let found = search_alpha_beta(eps, s, dim, &schedule, &opts)?;
            println!("search: alpha = {}, beta = {} after {} trials", found.alpha, found.beta, found.trail.len());
            let trail = json_text(&found.trail)?;
            (found.report, Some(("alpha_beta_search.json".to_string(), trail)))
        }
    };
    report.run_config = Some(resolved);
    print_verdict(&report);
    if let Some((name, text)) = extra {
        write_output(global, &name, &text)?;
    }
    let kind = serde_json::to_value(report.kind).ok().and_then(|v| v.as_str().map(str::to_string));
    let name = format!("certificate_{}.json", kind.unwrap_or_else(|| "report".into()));
    let path = write_output(global, &name, &report.to_json()?)?;
    println!("report: {}", path.display());
    Ok(if report.passed { Outcome::Success } else { Outcome::Failed })
}

fn print_verdict(r: &CertificateReport) {
    println!("certificate: {:?}, d = {}, eps = {}, bound mode {:?}", r.kind, r.dim, r.eps, r.audit.method);
    if let (Some(a), Some(b)) = (r.alpha, r.beta) {
        println!("  alpha = {a}, beta = {b}, power_s = {}", r.power_s.unwrap_or(f64::NAN));
    }
    println!("  radial lower bound   {:.12}", r.radial_lower_bound);
    println!("  competitor energy    {:.12}", r.competitor_energy);
    if let (Some(l), Some(rhs)) = (r.condition_lhs, r.condition_rhs) {
        println!("  condition lhs        {l:.12}");
        println!("  condition rhs        {rhs:.12}");
    }
    println!("  margin               {:.12} (slack {:e})", r.margin, r.slack);
    if let Some(ok) = r.shape_passed {
        println!("  shape check          {}", if ok { "passed" } else { "failed" });
    }
    if r.passed {
        println!("verdict: PASSED, no minimizer is radially symmetric");
    } else {
        println!("verdict: NOT CERTIFIED, inconclusive (this does not show that a radial minimizer exists)");
    }
}

fn cmd_energy(a: EnergyArgs, file: &FileConfig, global: &Global) -> Run<Outcome> {
    let t = &file.energy;
    let spec = required(pick(a.potential, t.potential.clone()), "potential")?;
    let p = load_potential(&spec)?;
    let dim = pick(a.dim, t.dim);
    let measure = match (pick(a.measure, t.measure.clone()), a.competitor.as_deref()) {
        (Some(path), _) => MeasureFile::read(&path)?,
        (None, Some(kind)) => {
            let dim = required(dim, "dim")?;
            let eta = match kind {
                "dirac" => 0.0,
                "balls" => required(a.eta, "eta")?,
                other => return usage(format!("unknown competitor `{other}` (dirac or balls)")),
            };
            MeasureFile::from(rho_star_eta(dim, eta)?)
        }
        (None, None) => return usage("give --measure FILE or --competitor dirac|balls"),
    };
    let samples = pick(a.samples, t.samples).unwrap_or(200_000);
    let (method, energy, stderr) = match &measure {
        MeasureFile::Dirac(m) => ("exact", m.energy(&p), None),
        MeasureFile::Particles(c) => ("exact", particle_energy(&p, c)?, None),
        MeasureFile::Balls(m) => {
            let est = mollified_energy_mc(&p, m, samples, global.seed)?;
            ("monte_carlo", est.estimate, Some(est.stderr))
        }
        MeasureFile::Radial { dim: file_dim, profile } => {
            let d = match (file_dim, dim) {
                (Some(f), Some(d)) if *f != d => {
                    return usage(format!("--dim {d} contradicts the file's dim {f}"));
                }
                (Some(f), _) => *f,
                (None, Some(d)) => d,
                (None, None) => return usage("radial measure without `dim` header needs --dim"),
            };
            ("quadrature", radial_energy(&p, profile, d, &global.quadrature)?, None)
        }
    };
    match stderr {
        Some(se) => println!("energy = {energy:?} +/- {se:e} ({samples} samples per pair)"),
        None => println!("energy = {energy:?}"),
    }
    let out = json!({
        "measure_kind": measure.kind(),
        "potential": p.to_config_string(),
        "method": method,
        "energy": energy,
        "stderr": stderr,
        "run_config": { "global": global, "samples": samples },
    });
    write_output(global, "energy.json", &json_text(&out)?)?;
    Ok(Outcome::Success)
}

fn cmd_kernel_sup(a: KernelSupArgs, file: &FileConfig, global: &Global) -> Run<Outcome> {
    let t = &file.kernel_sup;
    let dim = pick(a.dim, t.dim).unwrap_or(2);
    let eps = required(pick(a.eps, t.eps), "eps")?;
    let d = SearchSpec::default();
    let search = SearchSpec {
        s_max_initial: pick(a.s_max, t.s_max).unwrap_or(d.s_max_initial),
        coarse_step: pick(a.coarse_step, t.coarse_step).unwrap_or(d.coarse_step),
        refinements: pick(a.refinements, t.refinements).unwrap_or(d.refinements),
        ..d
    };
    let rep = kernel_sup(eps, dim, &global.quadrature, &search)?;
    println!("numeric sup     {:.12} at (r, s) = ({:.6}, {:.6})", rep.sup_value, rep.argmax.0, rep.argmax.1);
    println!("  grid max {:.12}, inflation {:e}, s_max {}", rep.grid_max, rep.inflation, rep.s_max);
    let analytic = krs_analytic_bound(eps, dim);
    match &analytic {
        Ok(b) => {
            println!("analytic bound  {b:.12}");
            let ok = rep.sup_value <= b + 1e-9;
            println!("numeric sup {} analytic bound", if ok { "<=" } else { "EXCEEDS" });
        }
        Err(e) => println!("analytic bound  unavailable ({e})"),
    }
    let out = json!({
        "report": rep,
        "analytic_bound": analytic.as_ref().ok(),
        "analytic_note": analytic.as_ref().err().map(|e| e.to_string()),
        "run_config": { "global": global, "search": search },
    });
    let path = write_output(global, "kernel_sup.json", &json_text(&out)?)?;
    println!("report: {}", path.display());
    Ok(Outcome::Success)
}

fn parse_init(s: &str) -> Run<Init> {
    let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
    let num = || arg.parse::<f64>().map_err(|_| Outcome::Usage(format!("bad number in --init `{s}`")));
    match kind {
        "gaussian" => Ok(Init::Gaussian { scale: if arg.is_empty() { 1.0 } else { num()? } }),
        "ball" => Ok(Init::UniformBall { radius: num()? }),
        "file" if !arg.is_empty() => Ok(Init::FromFile { path: PathBuf::from(arg) }),
        _ => usage(format!("bad --init `{s}` (gaussian:SCALE, ball:RADIUS or file:PATH)")),
    }
}

fn cmd_minimize(a: MinimizeArgs, file: &FileConfig, global: &Global) -> Run<Outcome> {
    let t = &file.minimize;
    let dim = pick(a.dim, t.dim).unwrap_or(2);
    let spec_text = required(pick(a.potential, t.potential.clone()), "potential")?;
    let p = load_potential(&spec_text)?;
    let mut spec = DescentSpec::for_dim(dim);
    spec.seed = global.seed;
    spec.n_particles = pick(a.n, t.n).unwrap_or(spec.n_particles);
    spec.max_iters = pick(a.max_iters, t.max_iters).unwrap_or(spec.max_iters);
    spec.step0 = pick(a.step0, t.step0).unwrap_or(spec.step0);
    spec.grad_tol = pick(a.grad_tol, t.grad_tol).unwrap_or(spec.grad_tol);
    if let Some(init) = pick(a.init, t.init.clone()) {
        spec.init = parse_init(&init)?;
    }
    spec.direction = match pick(a.direction, t.direction.clone()).as_deref() {
        None | Some("lbfgs") => Direction::default(),
        Some("steepest") => Direction::Steepest,
        Some(other) => return usage(format!("unknown direction `{other}` (lbfgs or steepest)")),
    };
    let threshold = pick(a.threshold, t.threshold).unwrap_or(DEFAULT_CLUSTER_THRESHOLD);
    let bound = match (pick(a.radial_bound, t.radial_bound), p.well_eps()) {
        (Some(b), _) => Some(b),
        (None, Some(eps)) => {
            let b = radial_lower_bound(eps, dim, BoundMode::NumericSup, &global.quadrature, &SearchSpec::default())?;
            Some(b.lower_bound)
        }
        (None, None) => None,
    };
    let res = gradient_descent(&p, dim, &spec)?;
    let diag = diagnose(&p, &res.config, &global.quadrature, threshold, bound)?;
    let trace = write_output(global, "trace.csv", &trace_to_csv(&res.trace))?;
    write_output(global, "final_config.txt", &MeasureFile::Particles(res.config.clone()).to_text())?;
    let out = json!({
        "stop": res.stop,
        "iterations": res.trace.last().map_or(0, |r| r.iter),
        "diagnostics": diag,
        "run_config": { "global": global, "descent": spec, "potential": p.to_config_string() },
    });
    write_output(global, "diagnostics.json", &json_text(&out)?)?;
    println!("stop: {:?} after {} iterations", res.stop, res.trace.last().map_or(0, |r| r.iter));
    println!("particle energy    {}", fmt_energy(diag.particle_energy));
    println!("radialized energy  {}", fmt_energy(diag.radialized_energy));
    println!("radial gap         {:.6e}", diag.radial_gap);
    println!("clusters           {} (threshold {})", diag.cluster_count, threshold);
    match diag.radial_lower_bound {
        Some(b) => println!("below radial bound {} (bound {b:.12})", diag.below_radial_bound),
        None => println!("below radial bound n/a (no bound for this potential)"),
    }
    println!("trace: {}", trace.display());
    Ok(Outcome::Success)
}

/// Fixed point near the well, scientific notation on the outer ramp.
fn fmt_energy(e: f64) -> String {
    if e.abs() < 1e6 {
        format!("{e:.12}")
    } else {
        format!("{e:.6e}")
    }
}

fn cmd_potential_sample(a: SampleArgs, file: &FileConfig, global: &Global) -> Run<Outcome> {
    let t = &file.potential_sample;
    let p = load_potential(&required(pick(a.potential, t.potential.clone()), "potential")?)?;
    let r_min = required(pick(a.r_min, t.r_min), "r-min")?;
    let r_max = required(pick(a.r_max, t.r_max), "r-max")?;
    let step = required(pick(a.step, t.step), "step")?;
    if !(step > 0.0 && step.is_finite()) {
        return usage(format!("step must be positive, got {step}"));
    }
    if !(r_min >= 0.0 && r_max > r_min && r_max.is_finite()) {
        return usage(format!("need 0 <= r-min < r-max, got [{r_min}, {r_max}]"));
    }
    let n = ((r_max - r_min) / step * (1.0 + 1e-12)).floor() as usize;
    let mut csv = String::from("r,w,dw\n");
    for k in 0..=n {
        let r = r_min + k as f64 * step;
        let w = p.eval(r)?;
        let dw = p.derivative(r).unwrap_or(f64::NAN);
        csv.push_str(&format!("{r:?},{w:?},{dw:?}\n"));
    }
    let path = write_output(global, "potential_sample.csv", &csv)?;
    println!("{} rows written to {}", n + 1, path.display());
    Ok(Outcome::Success)
}
