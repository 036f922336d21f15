use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bimembrane"));
    c.env_remove("BIMEMBRANE_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn check<'a>(checks: &'a Value, name: &str) -> &'a Value {
    checks["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap()
}

#[test]
fn plane_preset_solves_and_diagnoses() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = run(&["solve", "--preset", "plane", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["u.grid", "v.grid", "energy_trace.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["converged"], true);
    assert_eq!(summary["config"]["params"]["lambda_u"], 0.7);
    assert!(summary["config"]["solve"]["delta_schedule"].is_array());

    let o = run(&["diagnose", "--preset", "plane", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["boundary.csv", "flatness_trace.csv", "frequency_trace.csv", "checks.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let checks = json(&dir.path().join("checks.json"));
    assert!(checks["bernoulli_max_residual"].as_f64().unwrap() <= 0.05);
    let c0 = (7.0f64 / 3.0).sqrt();
    for c in checks["proportionality_c"].as_array().unwrap() {
        assert!((c.as_f64().unwrap() / c0 - 1.0).abs() <= 0.05);
    }
    assert_eq!(check(&checks, "bernoulli")["status"], "pass");
    // the solve section survives the diagnose run
    assert_eq!(json(&dir.path().join("summary.json"))["converged"], true);
}

#[test]
fn lambda_sum_violation_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--preset", "plane", "--set", "params.lambda_u=0.9", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("params.lambda_u"));
    assert!(!dir.path().join("u.grid").exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--preset", "plane", "--set", "solve.sweeps=3", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sweeps"));
    let o = run(&["solve", "--preset", "plane", "--set", "grid.hh=0.1", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid"));
}

#[test]
fn rerun_is_bit_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = run(&["solve", "--preset", "perturbed_plane", "--set", "grid.h=0.03125", "--out", &out_arg(d.path())]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["u.grid", "v.grid", "energy_trace.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn threads_do_not_change_results() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (d, t) in [(&a, "0"), (&b, "4")] {
        let o = run(&["solve", "--preset", "plane", "--set", "grid.h=0.03125", "--threads", t, "--out", &out_arg(d.path())]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(fs::read(a.path().join("u.grid")).unwrap(), fs::read(b.path().join("u.grid")).unwrap());
}

#[test]
fn zero_fields_give_vacuous_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    assert_eq!(code(&run(&["solve", "--preset", "zero", "--out", &out])), 0);
    let o = run(&["diagnose", "--preset", "zero", "--out", &out]);
    assert_eq!(code(&o), 0);
    let checks = json(&dir.path().join("checks.json"));
    assert_eq!(checks["samples"], 0);
    for c in checks["checks"].as_array().unwrap() {
        assert_eq!(c["status"], "vacuous", "{c}");
    }
}

#[test]
fn planted_three_halves_passes_lower_bound() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["frequency", "--preset", "planted_1_5", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let f = json(&dir.path().join("frequency.json"));
    assert_eq!(f["lower_bound"]["pass"], true);
    assert!((f["lower_bound"]["min_ntilde"].as_f64().unwrap() - 1.5).abs() <= 0.05);
    assert!(dir.path().join("frequency_trace.csv").exists());
}

#[test]
fn failed_required_check_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = run(&["diagnose", "--preset", "planted_1", "--set", r#"diagnostics.required=["frequency_lower_bound"]"#, "--out", &out]);
    assert_eq!(code(&o), 4);
    let checks = json(&dir.path().join("checks.json"));
    assert_eq!(checks["required_failed"][0], "frequency_lower_bound");
}

#[test]
fn missing_or_corrupt_grids_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    assert_eq!(code(&run(&["diagnose", "--preset", "plane", "--out", &out])), 3);
    fs::write(dir.path().join("u.grid"), "garbage\n").unwrap();
    fs::write(dir.path().join("v.grid"), "garbage\n").unwrap();
    assert_eq!(code(&run(&["diagnose", "--preset", "plane", "--out", &out])), 3);
}

#[test]
fn config_file_and_env_output_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"grid":{"h":0.0625,"half_width":1.0},"domain":{"kind":"disk","radius":1.0},
            "params":{"lambda_u":0.6,"lambda_v":0.4},"boundary":{"preset":{"name":"plane","angle":0.2}},
            "solve":{"relax_sweeps":20}}"#,
    )
    .unwrap();
    let env_out = dir.path().join("from_env");
    let o = bin()
        .args(["solve", "--config", cfg.to_str().unwrap()])
        .env("BIMEMBRANE_OUT", &env_out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&env_out.join("summary.json"));
    assert_eq!(summary["config"]["solve"]["relax_sweeps"], 20);
    assert_eq!(summary["config"]["output_dir"], env_out.to_str().unwrap());

    fs::write(&cfg, "{not json").unwrap();
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn transmission_symmetric_fields_are_equal() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["linearized", "--preset", "transmission_symmetric", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(dir.path().join("h.grid")).unwrap(), fs::read(dir.path().join("w.grid")).unwrap());
}

#[test]
fn separated_two_membrane_audit_within_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["linearized", "--preset", "two_membrane_separated", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("complementarity.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x,gap,dn_h,dn_w,flux_sum,audit");
    let mut n = 0;
    for l in lines {
        let cols: Vec<f64> = l.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cols[1] > 0.0, "contact at {l}");
        assert!(cols[5] <= 1e-6, "{l}");
        n += 1;
    }
    assert!(n > 50);
}

#[test]
fn signorini_refinement_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["linearized", "--preset", "signorini", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let errs: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(errs.len(), 3);
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn preset_list_names_every_preset() {
    let o = run(&["preset", "list"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["plane", "one_phase", "perturbed_plane", "planted_1_5", "signorini", "transmission_symmetric"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
    assert_eq!(code(&run(&["preset", "show", "nope"])), 2);
}
