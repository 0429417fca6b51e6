use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"{
    "model": { "family": "gaussian_mean", "d": 2, "rho": 0.5 },
    "psi_star": [0.3, -0.2],
    "domain": { "center": [0.0, 0.0], "radius": 2.0 },
    "estimator": { "kind": "online", "c": 1.0, "beta": 0.7, "m": 2 },
    "n_grid": [32, 64, 128],
    "replications": 4,
    "root_seed": 3
}"#;

fn cdest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdest")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn rates_writes_reports_and_fits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.json", SMALL);
    let out_dir = dir.path().join("out");
    let out = cdest(&["rates", "--config", &cfg, "--out-dir", out_dir.to_str().unwrap()]);
    let v = stdout_json(&out);
    assert_eq!(v["fits"].as_array().unwrap().len(), 2);
    assert_eq!(v["points"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("n,estimator,stat,value,stderr,replications,seed\n"));
    assert!(out_dir.join("report.json").exists());
    assert!(out_dir.join("report.svg").exists());

    let quiet = dir.path().join("quiet");
    let out = cdest(&["rates", "--config", &cfg, "--out-dir", quiet.to_str().unwrap(), "--no-svg"]);
    assert!(out.status.success());
    assert!(!quiet.join("report.svg").exists());
    assert_eq!(std::fs::read_to_string(quiet.join("report.csv")).unwrap(), csv, "same seed, same bytes");
}

#[test]
fn seed_and_worker_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.json", SMALL);
    let run = |extra: &[&str], sub: &str| {
        let out_dir = dir.path().join(sub);
        let mut args = vec!["rates", "--config", &cfg, "--out-dir", out_dir.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert!(cdest(&args).status.success());
        std::fs::read_to_string(out_dir.join("report.csv")).unwrap()
    };
    let one = run(&["--workers", "1"], "w1");
    let three = run(&["--workers", "3"], "w3");
    assert_eq!(one, three);
    let other = run(&["--seed", "4"], "s4");
    assert_ne!(one, other);
    assert!(other.contains(",4\n"));
}

#[test]
fn invalid_configs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_json = write(dir.path(), "bad.json", "{ not json");
    assert_eq!(cdest(&["rates", "--config", &bad_json]).status.code(), Some(2));
    let decreasing = write(dir.path(), "dec.json", &SMALL.replace("[32, 64, 128]", "[64, 32]"));
    assert_eq!(cdest(&["variance", "--config", &decreasing]).status.code(), Some(2));
    let outside = write(dir.path(), "out.json", &SMALL.replace("[0.3, -0.2]", "[3.0, 0.0]"));
    assert_eq!(cdest(&["fit", "--config", &outside]).status.code(), Some(2));
    assert_eq!(cdest(&["rates"]).status.code(), Some(2));
    assert_eq!(cdest(&["rates", "--config", "/nonexistent/cfg.json"]).status.code(), Some(2));
}

#[test]
fn fit_and_variance_print_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.json", SMALL);
    let v = stdout_json(&cdest(&["fit", "--config", &cfg, "--n", "50"]));
    assert_eq!(v["n"], 50);
    assert_eq!(v["updates"], 50);
    assert_eq!(v["final_iterate"].as_array().unwrap().len(), 2);

    let v = stdout_json(&cdest(&["variance", "--config", &cfg]));
    // Σ = [[1, .5], [.5, 1]]: tr(Σ⁻¹) = 2 / 0.75.
    assert!((v["inverse_fisher_trace"].as_f64().unwrap() - 2.0 / 0.75).abs() < 1e-12);
    assert!(v["points"][0]["variance_ratio"]["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn constants_reports_theory_alpha_and_norms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "b.json",
        r#"{
            "model": { "family": "boltzmann", "d": 2 },
            "psi_star": [0.1, -0.1, 0.2],
            "domain": { "center": [0, 0, 0], "radius": 0.5 },
            "estimator": { "kind": "full_batch", "c": 0.1, "beta": 0.0, "m": 3, "epochs": 2 },
            "n_grid": [8], "replications": 1, "root_seed": 1, "grid_resolution": 3
        }"#,
    );
    let v = stdout_json(&cdest(&["constants", "--config", &cfg]));
    for key in ["mu", "l", "sigma", "c_chi"] {
        assert!(v["theory"][key].as_f64().unwrap() > 0.0, "{key}");
    }
    let alpha = v["alpha"]["value"].as_f64().unwrap();
    assert!(alpha > 0.0 && alpha < 1.0);
    assert!(v["logz_norms"]["norm3"].as_f64().unwrap() > 0.0);
    assert_eq!(v["bound_constants"]["m"], 3);

    // m = 0 leaves mu_tilde = mu − sigma C_chi, negative here.
    let out = cdest(&["constants", "--config", &cfg, "--m", "0"]);
    assert!(out.status.success());
    assert_eq!(cdest(&["constants", "--config", &cfg, "--m", "0", "--strict"]).status.code(), Some(3));
}

#[test]
fn bounds_from_explicit_constants() {
    let base = [
        "bounds", "--mu", "0.5", "--l", "1.5", "--sigma", "1.5", "--c-chi", "2", "--alpha", "0.5", "--m", "20",
        "--norm1", "1", "--norm2", "1", "--beta", "1", "--n", "100,1000", "--delta0", "0.1",
    ];
    let mut args = base.to_vec();
    args.extend_from_slice(&["--c", "8"]);
    let v = stdout_json(&cdest(&args));
    let values = v["values"].as_array().unwrap();
    assert_eq!(values.len(), 2);
    let b0 = values[0]["bound"]["total"].as_f64().unwrap();
    let b1 = values[1]["bound"]["total"].as_f64().unwrap();
    assert!(b0 > b1 && b1 > 0.0);

    let offline_tail = ["--offline", "--batch-size", "10", "--epochs", "50", "--sigma-offline", "0.1"];
    let mut offline = base.to_vec();
    offline.extend_from_slice(&["--c", "0.05"]);
    offline.extend_from_slice(&offline_tail);
    let v = stdout_json(&cdest(&offline));
    assert!(v["values"][0]["sqrt_delta_bound"].as_f64().unwrap() > 0.0);

    // A large step overflows the offline exponentials; reported as a string.
    let mut huge = args.clone();
    huge.extend_from_slice(&offline_tail);
    let v = stdout_json(&cdest(&huge));
    assert_eq!(v["values"][0]["sqrt_delta_bound"], "inf");

    // m = 0: mu_tilde = 0.5 − 1.5 · 2 < 0.
    let mut violated: Vec<&str> = base.iter().map(|&a| if a == "20" { "0" } else { a }).collect();
    violated.extend_from_slice(&["--c", "8"]);
    let out = cdest(&violated);
    assert!(out.status.success());
    assert!(stdout_json(&out)["values"][0]["bound"].is_null());
    violated.push("--strict");
    assert_eq!(cdest(&violated).status.code(), Some(3));

    assert_eq!(cdest(&["bounds", "--mu", "0.5"]).status.code(), Some(2));
}
