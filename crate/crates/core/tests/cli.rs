use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn swsgd(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swsgd"))
        .args(args)
        .current_dir(dir)
        .env_remove("SWSGD_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn files_with(dir: &Path, suffix: &str) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(suffix))
        .collect();
    names.sort();
    names
}

const QUAD: &str = "\
name = quad
problem = quadratic
p = 2
noise = gaussian
theta0 = 1, 1
a = 0.05
alpha = 0.501
iterations = 200
reps = 20
r_u = 1
r_b = 10
intersect = unbiased, biased
c_reference = initial

[arm]
label = biased
estimator = offset
b = 1, 1

[arm]
label = unbiased
";

#[test]
fn quick_reproduction_writes_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = swsgd(
        &["reproduce", "fig2.1", "--quick", "--seed", "42", "--out", "d", "--quiet", "--iters", "2000"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d = tmp.path().join("d");
    assert_eq!(files_with(&d, ".csv").len(), 4);
    assert_eq!(files_with(&d, ".gp").len(), 4);
    assert_eq!(files_with(&d, ".summary.json").len(), 4);
}

#[test]
fn repeated_runs_write_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    for dir in ["a", "b"] {
        let out = swsgd(
            &["reproduce", "fig4_2", "--reps", "20", "--iters", "500", "--out", dir, "--quiet"],
            tmp.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let names = [files_with(&tmp.path().join("a"), ".csv"), files_with(&tmp.path().join("a"), ".summary.json")].concat();
    assert_eq!(names.len(), 8);
    for name in names {
        let a = fs::read(tmp.path().join("a").join(&name)).unwrap();
        let b = fs::read(tmp.path().join("b").join(&name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn run_echoes_a_config_that_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("quad.cfg"), QUAD).unwrap();
    let out = swsgd(&["run", "--config", "quad.cfg", "--out", "a", "--quiet"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("a/quad.summary.json")).unwrap()).unwrap();
    fs::write(tmp.path().join("echo.cfg"), summary["config"].as_str().unwrap()).unwrap();
    let again = swsgd(&["run", "--config", "echo.cfg", "--out", "b", "--quiet"], tmp.path());
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    for name in ["quad.csv", "quad.summary.json", "quad.gp"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(name)).unwrap(),
            fs::read(tmp.path().join("b").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn intersect_without_a_crossing_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("quad.cfg"), QUAD).unwrap();
    let out = swsgd(&["intersect", "--config", "quad.cfg"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no intersection"));

    fs::write(tmp.path().join("cross.cfg"), QUAD.replace("r_u = 1", "r_u = 100")).unwrap();
    let out = swsgd(&["intersect", "--config", "cross.cfg"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("k* = "));
}

#[test]
fn inadmissible_gain_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.cfg"), QUAD.replace("alpha = 0.501", "alpha = 0.4")).unwrap();
    let out = swsgd(&["run", "--config", "bad.cfg"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Condition 3"), "{err}");
    assert!(err.contains("line 7"), "{err}");
}

#[test]
fn analyze_predicts_additive_noise_mse() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "name = add\nproblem = quadratic\np = 2\nnoise = additive\nc = 1\ntheta0 = 1, 1\n\
               a = 0.1\nalpha = 0.501\niterations = 10000\n[arm]\nlabel = unbiased\n";
    fs::write(tmp.path().join("add.cfg"), cfg).unwrap();
    let out = swsgd(&["analyze", "--config", "add.cfg", "--k", "10000", "--out", "o"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("o/add.analysis.json")).unwrap()).unwrap();
    let arm = &doc["arms"][0];
    let trace = arm["prediction"]["trace"].as_f64().unwrap();
    assert!((trace - 2.0 * 0.1 / 4.0).abs() < 1e-12);
    let point = &arm["predicted_mse"][0];
    assert_eq!(point[0].as_u64(), Some(10_000));
    let expected = 0.05 / 10_000f64.powf(0.501);
    assert!((point[1].as_f64().unwrap() - expected).abs() <= 1e-12 * expected);
}
