use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use symbreak::certificate::CertificateReport;
use symbreak::measures::MeasureFile;

const COMPOSITE: &str = "variant=composite;eps=0.05;alpha=0.00625;beta=0.0015625;power_s=0.5;dim=2";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symbreak"))
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .env_remove("SYMBREAK_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn prototype_certificate_passes_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["certify", "prototype", "--dim", "2", "--eps", "0.05", "--mode", "analytic"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("PASSED"));
    let text = fs::read_to_string(dir.path().join("certificate_prototype.json")).unwrap();
    let report = CertificateReport::from_json(&text).unwrap();
    assert!(report.passed && report.is_consistent());
    assert!((report.margin - 0.012224).abs() < 1e-5);
    assert_eq!(report.run_config.as_ref().unwrap()["eps"], 0.05);
    assert_eq!(CertificateReport::from_json(&report.to_json().unwrap()).unwrap(), report);
}

#[test]
fn analytic_mode_outside_its_range_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["certify", "prototype", "--dim", "2", "--eps", "0.2", "--mode", "analytic"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn composite_search_and_failing_pair() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["certify", "composite", "--dim", "2", "--eps", "0.05", "--power-s", "0.5", "--search"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("alpha = 0.00625, beta = 0.0015625"));
    assert!(dir.path().join("alpha_beta_search.json").exists());
    let report =
        CertificateReport::from_json(&fs::read_to_string(dir.path().join("certificate_composite.json")).unwrap())
            .unwrap();
    assert!(report.passed && report.shape_passed == Some(true));

    let o = run(
        dir.path(),
        &["certify", "composite", "--dim", "2", "--eps", "0.05", "--alpha", "0.1", "--beta", "0.025", "--power-s", "0.5"],
    );
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("NOT CERTIFIED"));
}

#[test]
fn simplex_energy_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["energy", "--competitor", "dirac", "--dim", "3", "--potential", "variant=prototype;eps=0.1"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "energy = -0.375");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("energy.json")).unwrap()).unwrap();
    assert_eq!(json["energy"], -0.375);
    assert_eq!(json["method"], "exact");
}

#[test]
fn monte_carlo_energy_depends_only_on_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["energy", "--competitor", "balls", "--eta", "0.3", "--dim", "2", "--potential", COMPOSITE];
    let with_seed = |seed: &str| {
        let mut a = args.to_vec();
        a.extend(["--seed", seed, "--samples", "5000"]);
        let o = run(dir.path(), &a);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    let (a, b, c) = (with_seed("4"), with_seed("4"), with_seed("5"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    let mut threads = args.to_vec();
    threads.extend(["--seed", "4", "--samples", "5000", "--threads", "3"]);
    assert_eq!(stdout(&run(dir.path(), &threads)), a);
}

#[test]
fn potential_sample_writes_csv_and_rejects_bad_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let proto = "variant=prototype;eps=0.1";
    let o = run(dir.path(), &["potential-sample", "--potential", proto, "--r-min", "0.8", "--r-max", "1.0", "--step", "0.05"]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("potential_sample.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "r,w,dw");
    assert_eq!(rows.len(), 6);
    assert!(rows[1].starts_with("0.8,0.0,"));
    // 0.8 + 2 * 0.05 lands within the jump window around 1 - eps
    assert!(rows[3].ends_with(",NaN"), "{}", rows[3]);

    for bad in [["0.8", "1.0", "-0.1"], ["0.8", "1.0", "0"], ["1.0", "0.8", "0.1"], ["-1", "1.0", "0.1"]] {
        let o = run(
            dir.path(),
            &["potential-sample", "--potential", proto, "--r-min", bad[0], "--r-max", bad[1], "--step", bad[2]],
        );
        assert_eq!(code(&o), 2, "{bad:?}");
    }
}

#[test]
fn malformed_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["certify", "prototype", "--dim", "2"],
        vec!["certify", "prototype", "--dim", "1", "--eps", "0.05"],
        vec!["certify", "prototype", "--dim", "2", "--eps", "0.05", "--mode", "exact"],
        vec!["certify", "composite", "--dim", "2", "--eps", "0.05", "--alpha", "0.1", "--beta", "0.06"],
        vec!["energy", "--competitor", "dirac", "--dim", "2", "--potential", "variant=nonsense"],
        vec!["energy", "--competitor", "dirac", "--dim", "2", "--potential", "/does/not/exist.toml"],
        vec!["energy", "--measure", "/does/not/exist.txt", "--potential", "variant=prototype;eps=0.1"],
        vec!["kernel-sup", "--dim", "2", "--eps", "1.5"],
        vec!["minimize", "--dim", "2", "--potential", COMPOSITE, "--init", "cube:1"],
        vec!["certify", "prototype", "--dim", "2", "--eps", "0.05", "--quad-method", "simpson"],
    ];
    for args in cases {
        let o = run(dir.path(), &args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn config_file_is_read_and_flags_take_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("from_config");
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!("[global]\noutput_dir = {:?}\n\n[certify]\ndim = 2\neps = 0.05\nmode = \"analytic\"\n", out_a),
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_symbreak"))
        .args(["certify", "prototype", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out_a.join("certificate_prototype.json").exists());

    // the flag overrides eps from the file; 0.2 is outside the analytic range
    let o = run(dir.path(), &["certify", "prototype", "--eps", "0.2", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);

    fs::write(&cfg, "[certify]\nepsilon = 0.05\n").unwrap();
    let o = run(dir.path(), &["certify", "prototype", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn output_dir_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_symbreak"))
        .args(["kernel-sup", "--dim", "3", "--eps", "0.04"])
        .env("SYMBREAK_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("kernel_sup.json").exists());
    assert!(stdout(&o).contains("numeric sup <= analytic bound"));
}

#[test]
fn kernel_sup_reports_unavailable_analytic_bound() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["kernel-sup", "--dim", "2", "--eps", "0.2"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("analytic bound  unavailable"));
}

#[test]
fn minimize_writes_trace_configuration_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["minimize", "--dim", "2", "--n", "6", "--max-iters", "300", "--init", "ball:0.5", "--potential", COMPOSITE],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("iter,energy,grad_norm,step"));
    let energies: Vec<f64> = trace.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(energies.windows(2).all(|w| w[1] <= w[0]));
    match MeasureFile::read(&dir.path().join("final_config.txt")).unwrap() {
        MeasureFile::Particles(c) => assert_eq!(c.len(), 6),
        other => panic!("unexpected {}", other.kind()),
    }
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["diagnostics"]["particle_energy"].as_f64(), energies.last().copied());
    assert!(diag["diagnostics"]["radial_lower_bound"].as_f64().unwrap() < -0.29);
}

#[test]
fn minimize_rejects_the_prototype_and_reports_collapse() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["minimize", "--dim", "2", "--potential", "variant=prototype;eps=0.1"]);
    assert_eq!(code(&o), 2);

    let start = dir.path().join("start.txt");
    fs::write(&start, "kind particles\ndim 2\n0.1 0.2\n0.1 0.2\n0.9 0.0\n").unwrap();
    let init = format!("file:{}", start.display());
    let o = run(dir.path(), &["minimize", "--dim", "2", "--potential", COMPOSITE, "--init", &init]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn kernel_sup_prints_the_analytic_bound_next_to_the_numeric_sup() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["kernel-sup", "--dim", "3", "--eps", "0.04"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("analytic bound  0.173611"), "{}", stdout(&o));
    let o = run(dir.path(), &["kernel-sup", "--dim", "2", "--eps", "0.5"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("unavailable"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("kernel_sup.json")).unwrap()).unwrap();
    assert!(json["analytic_bound"].is_null() && json["analytic_note"].is_string());
}

#[test]
fn general_certificate_with_zero_excess_matches_the_prototype() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["--dim", "2", "--eps", "0.05", "--mode", "analytic"];
    let o = run(dir.path(), &[&["certify", "prototype"][..], &base].concat());
    assert_eq!(code(&o), 0);
    let o = run(dir.path(), &[&["certify", "general", "--w1", "variant=tabulated;radii=0,5;values=0,0"][..], &base].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let read = |name: &str| {
        CertificateReport::from_json(&fs::read_to_string(dir.path().join(name)).unwrap()).unwrap()
    };
    let (p, g) = (read("certificate_prototype.json"), read("certificate_general.json"));
    assert!((p.margin - g.margin).abs() < 1e-10);
}

#[test]
fn two_particles_converge() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["minimize", "--dim", "2", "--n", "2", "--init", "ball:0.5", "--potential", COMPOSITE]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["stop"], "gradient_tolerance");
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let grad: f64 = trace.lines().last().unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(grad < 1e-9);
}

#[test]
fn potential_sample_reaches_the_plateau_and_steps_for_the_prototype() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["potential-sample", "--potential", COMPOSITE, "--r-min", "0.05", "--r-max", "4", "--step", "1e-3"]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("potential_sample.csv")).unwrap();
    let rows: Vec<Vec<f64>> =
        csv.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3951);
    let symbreak::RadialPotential::Composite(c) = symbreak::RadialPotential::from_config_str(&COMPOSITE.replace(';', "\n"), None).unwrap() else {
        unreachable!()
    };
    for row in rows.iter().filter(|r| r[0] >= 3.0 + 0.05 - 0.0015625) {
        assert_eq!(row[1], c.far_value());
        assert_eq!(row[2], 0.0);
    }

    let o = run(dir.path(), &["potential-sample", "--potential", "variant=prototype;eps=0.1", "--r-min", "0", "--r-max", "2", "--step", "0.01"]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("potential_sample.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| {
        let w: f64 = l.split(',').nth(1).unwrap().parse().unwrap();
        w == 0.0 || w == -1.0
    }));
}

#[test]
fn mollified_and_radial_energies() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["energy", "--competitor", "balls", "--eta", "0.04", "--dim", "3", "--potential", "variant=prototype;eps=0.1"],
    );
    assert_eq!(code(&o), 0);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("energy.json")).unwrap()).unwrap();
    let (e, se) = (json["energy"].as_f64().unwrap(), json["stderr"].as_f64().unwrap());
    assert!((e + 0.375).abs() <= 4.0 * se + 1e-15, "{e} +/- {se}");

    let file = dir.path().join("shells.txt");
    fs::write(&file, "kind radial\ndim 2\n0.3 0.25\n0.55 0.5\n0.9 0.25\n").unwrap();
    let o = run(dir.path(), &["energy", "--measure", file.to_str().unwrap(), "--potential", "variant=prototype;eps=0.1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cli: f64 = stdout(&o).trim().strip_prefix("energy = ").unwrap().parse().unwrap();
    let MeasureFile::Radial { profile, .. } = MeasureFile::read(&file).unwrap() else { unreachable!() };
    let p = symbreak::RadialPotential::prototype(0.1).unwrap();
    let lib = symbreak::radial_energy::radial_energy(&p, &profile, 2, &symbreak::QuadratureSpec::default()).unwrap();
    assert_eq!(cli, lib);
    let o = run(dir.path(), &["energy", "--measure", file.to_str().unwrap(), "--dim", "3", "--potential", "variant=prototype;eps=0.1"]);
    assert_eq!(code(&o), 2);
}
