use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use circspline::sim::Scenario;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_circspline"));
    c.env_remove("CIRCSPLINE_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_angles(path: &Path, xs: &[f64]) {
    let text: String = xs.iter().map(|x| format!("{x:.17}\n")).collect();
    fs::write(path, text).unwrap();
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn estimate_uniform_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("uniform.txt");
    write_angles(&input, Scenario::Uniform.sample(500, 11).unwrap().angles());
    let out = dir.path().join("est.json");
    let o = run(&["estimate", "--input", input.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out);
    assert_eq!(v["schema_version"], 1);
    let dens = v["density"].as_array().unwrap();
    assert_eq!(dens.len(), 1024);
    let integral: f64 = dens.iter().map(|p| p[1].as_f64().unwrap()).sum::<f64>() * TAU / dens.len() as f64;
    assert!((integral - 1.0).abs() < 1e-6, "{integral}");
    assert!(dens.iter().all(|p| p[1].as_f64().unwrap() >= 0.0));
    assert!(v["diagnostics"]["lambda"].as_f64().unwrap() > 0.0);
}

#[test]
fn detect_finds_both_outliers() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("mix.txt");
    write_angles(&input, Scenario::eps_mixture(0.05).sample(1000, 2024).unwrap().angles());
    let out = dir.path().join("report.json");
    let o = run(&["detect", "--input", input.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out);
    let outliers: Vec<(f64, f64)> = v["features"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|f| f["kind"] == "outlier")
        .map(|f| {
            (
                f["interval"]["start"].as_f64().unwrap(),
                f["interval"]["len"].as_f64().unwrap(),
            )
        })
        .collect();
    assert_eq!(outliers.len(), 2, "{v}");
    for target in [0.75 * PI, 1.25 * PI] {
        assert!(outliers.iter().any(|&(s, l)| s <= target && target <= s + l));
    }
}

#[test]
fn simulate_writes_documented_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim.csv");
    let o = run(&[
        "simulate",
        "--scenario",
        "piecewise_uniform",
        "--methods",
        "kde,uniform",
        "--n",
        "200",
        "--replicates",
        "4",
        "--seed",
        "1",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "scenario,method,n,replicates,mise_mean,mise_stderr,failures");
    assert_eq!(lines.count(), 2);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("g.csv");
    fs::write(&input, "start_deg,end_deg,count\n0,19,40\n200,219,30\n").unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let i = input.to_str().unwrap();
    let o = run(&["estimate", "--input", i, "--grouped", "--seed", "5", "--output", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = bin()
        .args(["estimate", "--input", i, "--grouped", "--output", b.to_str().unwrap()])
        .env("CIRCSPLINE_SEED", "5")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(json(&a)["input"]["n"], 70);
}

#[test]
fn plot_data_marks_features() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("tri.txt");
    write_angles(&input, Scenario::UnifTriangular.sample(800, 3).unwrap().angles());
    let est = dir.path().join("est.json");
    let curve = dir.path().join("curve.csv");
    assert!(run(&["estimate", "-i", input.to_str().unwrap(), "-o", est.to_str().unwrap()])
        .status
        .success());
    let o = run(&["plot-data", "--from", est.to_str().unwrap(), "--out", curve.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&curve).unwrap();
    assert!(text.starts_with("x,density,is_feature_boundary\n"));
    assert_eq!(text.lines().count(), 1025);
    assert!(text.lines().skip(1).any(|l| l.ends_with(",1")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "1.0\n2.0\nabc\n").unwrap();
    let out = dir.path().join("o.json");
    let o = run(&["estimate", "--input", bad.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    assert!(!out.exists());

    assert_eq!(run(&["estimate", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let good = dir.path().join("good.txt");
    write_angles(&good, &[0.1, 0.2, 0.3]);
    let o = run(&["estimate", "-i", good.to_str().unwrap(), "--alpha", "2", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let grouped = dir.path().join("g.csv");
    fs::write(&grouped, "0,19,5\n10,29,5\n").unwrap();
    let o = run(&["estimate", "-i", grouped.to_str().unwrap(), "--grouped", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["bench", "--replicates", "2", "--seed", "3", "--output-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t1 = fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    assert!(t1.starts_with("n,eps,mise,mise_stderr,percent_increase\n"));
    assert_eq!(t1.lines().count(), 1 + 12);
    let t2 = fs::read_to_string(dir.path().join("table2.csv")).unwrap();
    assert_eq!(t2.lines().count(), 1 + 30);
}
