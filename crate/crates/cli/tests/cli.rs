use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn mnar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mnar"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn model() -> Value {
    json!({
        "regression": {"beta0": 2.0, "beta": [-2.0], "sigma_y": 2.0},
        "covariates": [{"type": "normal", "mean": 0.0, "sd": 4.0}],
        "mechanism": {"w_terms": ["one", {"x": 0}], "z_terms": ["y"], "lambda": [-2.0, 0.4], "psi": [-0.15]},
        "link": "logit"
    })
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn type_one_config(dir: &Path) -> PathBuf {
    let mut m = model();
    m["mechanism"]["psi"] = json!([0.0]);
    write(
        dir,
        "t1.json",
        &json!({
            "model": m,
            "schemes": [{"type": "random"}, {"type": "top_k"}],
            "c1_grid": [0.3, 0.8],
            "replications": 30,
            "n": 300,
            "seed": 5
        }),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn design_prints_region_and_value() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "d.json", &json!({"model": model(), "search": {"starts": 4}}));
    let out = mnar(&["design", "--config", s(&cfg), "--c1", "0.3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["bounds", "c1", "c2", "criterion", "value", "slack"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["c1"], 0.3);
    assert_eq!(v["criterion"], "ncp");
    assert!(v["slack"].as_f64().unwrap() > -1e-8);
}

#[test]
fn same_seed_gives_identical_csv_and_manifest_reproduces() {
    let dir = TempDir::new().unwrap();
    let cfg = type_one_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    assert_eq!(mnar(&["type-one", "--config", s(&cfg), "--out", s(&a)]).status.code(), Some(0));
    assert_eq!(
        mnar(&["type-one", "--config", s(&cfg), "--out", s(&b), "--jobs", "1"]).status.code(),
        Some(0)
    );
    let csv_a = std::fs::read(a.join("type_one.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("type_one.csv")).unwrap());
    let header = String::from_utf8(csv_a.clone()).unwrap();
    assert!(header.starts_with("c1,design,rate,se,mse_psi_1,discarded\n"));
    assert_eq!(header.lines().count(), 5);

    let manifest = a.join("manifest.json");
    let out = mnar(&["type-one", "--config", s(&manifest), "--out", s(&c)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(csv_a, std::fs::read(c.join("type_one.csv")).unwrap());
    let m: Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    assert_eq!(m["command"], "type-one");
    assert_eq!(m["seed"], 5);
}

#[test]
fn flags_override_config() {
    let dir = TempDir::new().unwrap();
    let cfg = type_one_config(dir.path());
    let base = mnar(&["type-one", "--config", s(&cfg)]);
    let reseeded = mnar(&["type-one", "--config", s(&cfg), "--seed", "99", "--reps", "20", "--c1", "0.5"]);
    assert_eq!(reseeded.status.code(), Some(0));
    let text = String::from_utf8(reseeded.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().skip(1).all(|l| l.starts_with("0.5,")));
    assert_ne!(base.stdout, text.into_bytes());
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(mnar(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(mnar(&["design", "--config", "/nonexistent.json", "--c1", "0.3"]).status.code(), Some(1));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(mnar(&["type-one", "--config", s(&bad)]).status.code(), Some(1));
    let unknown_field = write(dir.path(), "u.json", &json!({"model": model(), "colour": 1}));
    assert_eq!(mnar(&["design", "--config", s(&unknown_field), "--c1", "0.3"]).status.code(), Some(1));
    let m = write(dir.path(), "m.json", &model());
    assert_eq!(mnar(&["design", "--config", s(&m), "--c1", "1.5"]).status.code(), Some(1));
    // Type-one studies need a MAR model.
    let mnar_model = write(
        dir.path(),
        "x.json",
        &json!({"model": model(), "c1_grid": [0.5], "replications": 5, "n": 100}),
    );
    assert_eq!(mnar(&["type-one", "--config", s(&mnar_model)]).status.code(), Some(1));
    // A manifest is only accepted by the command that wrote it.
    let cfg = type_one_config(dir.path());
    let out = dir.path().join("o");
    assert_eq!(mnar(&["type-one", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(0));
    assert_eq!(
        mnar(&["power-curve", "--config", s(&out.join("manifest.json"))]).status.code(),
        Some(1)
    );
}

#[test]
fn numerical_failures_exit_with_two() {
    let dir = TempDir::new().unwrap();
    // A region this small cannot hold the recovered rows.
    let cfg = write(
        dir.path(),
        "e.json",
        &json!({"model": model(), "region": {"dims": [{"intervals": [[20.0, 21.0]]}]}, "c2": 1.0}),
    );
    let out = mnar(&["criterion-eval", "--config", s(&cfg), "--c1", "0.5"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn criterion_eval_reports_both_criteria() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "m.json", &model());
    let out = mnar(&["criterion-eval", "--config", s(&cfg), "--c1", "1.0"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["noncentrality"]["c_star"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(v["asymptotic_variance"].as_f64().unwrap() > 0.0);
    let p = v["approx_power"].as_f64().unwrap();
    assert!(p > 0.05 && p < 1.0);
}

#[test]
fn real_data_from_csv() {
    use rand::{Rng, SeedableRng};
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("scores.csv");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut text = String::from("log_income,math\n");
    for i in 0..400 {
        let x: f64 = 10.0 + 2.0 * rng.random::<f64>();
        let y = 69.0 + 3.0 * x + 13.0 * (rng.random::<f64>() - 0.5);
        if i % 50 == 0 {
            text.push_str(&format!("{x},\n"));
        } else {
            text.push_str(&format!("{x},{y}\n"));
        }
    }
    std::fs::write(&csv, text).unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write(
        dir.path(),
        "r.json",
        &json!({"csv": "scores.csv", "x_columns": ["log_income"], "y_column": "math",
                "schemes": [{"type": "random"}], "c1_grid": [0.5], "replications": 10}),
    );
    let out = mnar(&["real-data", "--config", s(&cfg), "--scenario", "A", "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let body = std::fs::read_to_string(out_dir.join("real_data.csv")).unwrap();
    assert!(body.starts_with("c1,design,rate,se,mse_psi_1,discarded\n"));
    assert_eq!(body.lines().count(), 2);

    // Without a scenario the mechanism is undefined.
    let out = mnar(&["real-data", "--csv", s(&csv), "--reps", "2"]);
    assert_eq!(out.status.code(), Some(1));
}
