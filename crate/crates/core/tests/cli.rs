use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kernmetric::embeddings::gram;
use kernmetric::io::{read_matrix, read_points};
use kernmetric::kernels::make_radial_hilbert;
use kernmetric::phi::PhiProfile;
use kernmetric::spaces::PointSpace;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kernmetric"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const GAUSS_R2: &str = r#"{"space":{"type":"euclidean","dim":2},"phi":{"family":"gaussian","alpha":0.5},"rule":{"kind":"radial_hilbert"}}"#;

fn constants(value: f64, rows: usize, cols: usize) -> String {
    let row = vec![value.to_string(); cols].join(",");
    (0..rows).map(|_| format!("{row}\n")).collect()
}

#[test]
fn gram_two_points_matches_closed_form() {
    let d = TempDir::new().unwrap();
    write(d.path(), "k.json", GAUSS_R2);
    write(d.path(), "p.csv", "0,0\n1,1\n");
    let o = run(&["gram", "--kernel", "k.json", "--points", "p.csv", "--out", "g.csv"], d.path());
    assert_eq!(code(&o), 0, "{o:?}");
    let g = read_matrix(&d.path().join("g.csv")).unwrap();
    assert_eq!(g.shape(), (2, 2));
    assert_eq!(g[(0, 0)], 1.0);
    assert_eq!(g[(0, 1)], (-1.0f64).exp());
    assert_eq!(g[(1, 0)], g[(0, 1)]);
}

#[test]
fn gram_round_trip_is_bit_exact() {
    let d = TempDir::new().unwrap();
    let body: String = (0..15).map(|i| format!("{},{}\n", (i as f64 * 0.37).sin(), 1.0 / (i as f64 + 3.0))).collect();
    write(d.path(), "p.csv", &body);
    let o = run(&["gram", "--points", "p.csv", "--out", "g.csv"], d.path());
    assert_eq!(code(&o), 0, "{o:?}");
    let space = PointSpace::Euclidean { dim: 2 };
    let k = make_radial_hilbert(PhiProfile::Gaussian { alpha: 0.5 }, space.clone()).unwrap();
    let pts = read_points(&d.path().join("p.csv"), &space).unwrap();
    let expected = gram(&k, &pts).unwrap().into_entries();
    assert_eq!(read_matrix(&d.path().join("g.csv")).unwrap(), expected);
}

#[test]
fn gram_error_codes() {
    let d = TempDir::new().unwrap();
    write(d.path(), "bad.csv", "0,0\n1,oops\n");
    let o = run(&["gram", "--points", "bad.csv", "--out", "g.csv"], d.path());
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.csv:2"), "{err}");

    write(d.path(), "grid.csv", "node,weight\n0,0.25\n0.5,0.5\n1,0.25\n");
    write(d.path(), "f.csv", "1,2\n3,4\n");
    let o = run(&["gram", "--points", "f.csv", "--grid", "grid.csv", "--out", "g.csv"], d.path());
    assert_eq!(code(&o), 3);

    write(d.path(), "k.json", GAUSS_R2);
    write(d.path(), "p3.csv", "1,2,3\n");
    let o = run(&["gram", "--kernel", "k.json", "--points", "p3.csv", "--out", "g.csv"], d.path());
    assert_eq!(code(&o), 3);

    write(d.path(), "broken.json", "{\"rule\":");
    let o = run(&["gram", "--kernel", "broken.json", "--points", "p3.csv", "--out", "g.csv"], d.path());
    assert_eq!(code(&o), 2);

    assert!(!d.path().join("g.csv").exists());
}

#[test]
fn gram_on_functions_with_grid() {
    let d = TempDir::new().unwrap();
    write(d.path(), "grid.csv", "node,weight\n0,0.25\n0.5,0.5\n1,0.25\n");
    write(d.path(), "f.csv", "0,0,0\n1,1,1\n");
    let o = run(&["gram", "--points", "f.csv", "--grid", "grid.csv", "--out", "g.csv"], d.path());
    assert_eq!(code(&o), 0, "{o:?}");
    let g = read_matrix(&d.path().join("g.csv")).unwrap();
    assert_eq!(g[(0, 1)], (-0.5f64).exp());
}

#[test]
fn test2_separated_constants_reject() {
    let d = TempDir::new().unwrap();
    write(d.path(), "grid.csv", "node,weight\n0,0.25\n0.5,0.5\n1,0.25\n");
    write(d.path(), "x.csv", &constants(0.0, 20, 3));
    write(d.path(), "y.csv", &constants(1.0, 20, 3));
    let o = run(
        &["test2", "--x", "x.csv", "--y", "y.csv", "--grid", "grid.csv", "--perms", "99", "--out", "t.json"],
        d.path(),
    );
    assert_eq!(code(&o), 0, "{o:?}");
    assert!(stdout(&o).contains("REJECT") && !stdout(&o).contains("FAIL-TO-REJECT"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("t.json")).unwrap()).unwrap();
    assert_eq!(v["p_value"], 0.01);
    assert_eq!(v["n_permutations"], 99);
    assert_eq!(v["estimator"], "u_statistic");
}

#[test]
fn test2_identical_files_rarely_reject() {
    let d = TempDir::new().unwrap();
    let body: String = (0..12).map(|i| format!("{}\n", (i as f64 * 1.3).cos())).collect();
    write(d.path(), "x.csv", &body);
    let mut accepted = 0;
    for seed in 0..100 {
        let s = seed.to_string();
        let o = run(&["test2", "--x", "x.csv", "--y", "x.csv", "--perms", "99", "--seed", &s, "--out", "t.json"], d.path());
        assert_eq!(code(&o), 0);
        if stdout(&o).contains("FAIL-TO-REJECT") {
            accepted += 1;
        }
    }
    assert!(accepted >= 90, "only {accepted} of 100 runs had p > alpha");
}

#[test]
fn test2_usage_and_data_errors() {
    let d = TempDir::new().unwrap();
    write(d.path(), "x.csv", "0\n1\n2\n");
    write(d.path(), "one.csv", "0\n");
    let o = run(&["test2", "--x", "x.csv", "--y", "x.csv", "--perms", "0", "--out", "t.json"], d.path());
    assert_eq!(code(&o), 2);
    let o = run(&["test2", "--x", "x.csv", "--y", "one.csv", "--out", "t.json"], d.path());
    assert_eq!(code(&o), 3);
    let o = run(&["test2", "--x", "x.csv", "--y", "x.csv", "--alpha", "1.5", "--out", "t.json"], d.path());
    assert_eq!(code(&o), 2);
    let o = run(&["test2", "--x", "x.csv", "--out", "t.json"], d.path());
    assert_eq!(code(&o), 2);
    let o = run(&["frobnicate"], d.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn test2_is_deterministic_given_seed() {
    let d = TempDir::new().unwrap();
    write(d.path(), "x.csv", "0\n0.5\n1\n1.5\n2\n");
    write(d.path(), "y.csv", "0.2\n0.9\n1.1\n2.5\n3\n");
    let args = |out: &'static str| ["test2", "--x", "x.csv", "--y", "y.csv", "--seed", "42", "--out", out];
    assert_eq!(code(&run(&args("a.json"), d.path())), 0);
    assert_eq!(code(&run(&args("b.json"), d.path())), 0);
    assert_eq!(fs::read(d.path().join("a.json")).unwrap(), fs::read(d.path().join("b.json")).unwrap());
}

#[test]
fn score_examples() {
    let d = TempDir::new().unwrap();
    write(d.path(), "k.json", GAUSS_R2);
    write(d.path(), "dirac.csv", "x1,x2,weight\n1,1,1\n");
    write(d.path(), "obs.csv", "1,1\n0,0\n");
    let o = run(&["score", "--kernel", "k.json", "--forecast", "dirac.csv", "--obs", "obs.csv", "--out", "s.csv"], d.path());
    assert_eq!(code(&o), 0, "{o:?}");
    let text = fs::read_to_string(d.path().join("s.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "observation,score");
    let value = |line: &str| line.split(',').nth(1).unwrap().parse::<f64>().unwrap();
    assert_eq!(value(lines[1]), 0.0);
    assert!((value(lines[2]) - 0.6321206).abs() < 1e-7);
    assert!(lines[3].starts_with("mean,"));
    assert!((value(lines[3]) - 0.6321206 / 2.0).abs() < 1e-7);
}

#[test]
fn score_rejects_non_probability_forecast() {
    let d = TempDir::new().unwrap();
    write(d.path(), "neg.csv", "x1,weight\n0,1.5\n1,-0.5\n");
    write(d.path(), "obs.csv", "0\n");
    let o = run(&["score", "--forecast", "neg.csv", "--obs", "obs.csv", "--out", "s.csv"], d.path());
    assert_eq!(code(&o), 3);
    write(d.path(), "half.csv", "x1,weight\n0,0.5\n");
    let o = run(&["score", "--forecast", "half.csv", "--obs", "obs.csv", "--out", "s.csv"], d.path());
    assert_eq!(code(&o), 3);
}

#[test]
fn score_with_separate_weight_file() {
    let d = TempDir::new().unwrap();
    write(d.path(), "f.csv", "0\n2\n");
    write(d.path(), "w.csv", "weight\n0.5\n0.5\n");
    write(d.path(), "obs.csv", "0\n");
    let o = run(
        &["score", "--forecast", "f.csv", "--forecast-weights", "w.csv", "--obs", "obs.csv", "--out", "s.csv"],
        d.path(),
    );
    assert_eq!(code(&o), 0, "{o:?}");
    // ½k(x,x) + ½E k(X,X') - E k(X,x) with k = exp(-t/2)
    let e2 = (-2.0f64).exp();
    let expected = 0.5 + 0.5 * (0.5 + 0.5 * e2) - (0.5 + 0.5 * e2);
    let text = fs::read_to_string(d.path().join("s.csv")).unwrap();
    let got: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((got - expected).abs() < 1e-15);
}

#[test]
fn mmd_report() {
    let d = TempDir::new().unwrap();
    write(d.path(), "x.csv", "0\n1\n");
    write(d.path(), "y.csv", "0.5\n1.5\n");
    let o = run(&["mmd", "--x", "x.csv", "--y", "y.csv", "--out", "m.json"], d.path());
    assert_eq!(code(&o), 0, "{o:?}");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("m.json")).unwrap()).unwrap();
    let gamma = v["mmd"].as_f64().unwrap();
    assert!((v["divergence"].as_f64().unwrap() - 0.5 * gamma * gamma).abs() < 1e-15);
    let k = |t: f64| (-t * t / 2.0).exp();
    let expected = (1.0 + k(1.0)) - 0.5 * (3.0 * k(0.5) + k(1.5));
    assert!((v["mmd_squared"].as_f64().unwrap() - expected).abs() < 1e-14);
}

#[test]
fn power_curves() {
    let d = TempDir::new().unwrap();
    write(
        d.path(),
        "const.json",
        r#"{"generator":"function","m":11,"n_x":20,"n_y":20,"noise":0.0,"shifts":[1.0]}"#,
    );
    let o = run(&["power", "--scenario", "const.json", "--trials", "10", "--perms", "99", "--out", "p.csv"], d.path());
    assert_eq!(code(&o), 0, "{o:?}");
    let text = fs::read_to_string(d.path().join("p.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("shift,rejection_rate,trials,mc_stderr"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(row, vec![1.0, 1.0, 10.0, 0.0]);

    write(d.path(), "null.json", r#"{"generator":"euclidean","dim":1,"n_x":20,"n_y":20,"shifts":[0.0]}"#);
    let args = ["power", "--scenario", "null.json", "--trials", "1000", "--perms", "99", "--seed", "3", "--out", "n.csv"];
    let o = run(&args, d.path());
    assert_eq!(code(&o), 0, "{o:?}");
    let text = fs::read_to_string(d.path().join("n.csv")).unwrap();
    let rate: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((0.03..=0.07).contains(&rate), "null rejection rate {rate}");

    let again = ["power", "--scenario", "const.json", "--trials", "10", "--perms", "99", "--out", "p2.csv"];
    assert_eq!(code(&run(&again, d.path())), 0);
    assert_eq!(fs::read(d.path().join("p.csv")).unwrap(), fs::read(d.path().join("p2.csv")).unwrap());
}

#[test]
fn power_usage_errors() {
    let d = TempDir::new().unwrap();
    write(d.path(), "s.json", r#"{"generator":"euclidean","dim":1,"n_x":5,"n_y":5,"shifts":[0.0]}"#);
    let o = run(&["power", "--scenario", "s.json", "--trials", "0", "--out", "p.csv"], d.path());
    assert_eq!(code(&o), 2);
    write(d.path(), "bad.json", r#"{"generator":"euclidean","dim":1,"n_x":1,"n_y":5,"shifts":[0.0]}"#);
    let o = run(&["power", "--scenario", "bad.json", "--trials", "5", "--out", "p.csv"], d.path());
    assert_eq!(code(&o), 2);
    write(d.path(), "unknown.json", r#"{"generator":"martian","shifts":[0.0]}"#);
    let o = run(&["power", "--scenario", "unknown.json", "--trials", "5", "--out", "p.csv"], d.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn selfcheck_passes_and_detects_faults() {
    let d = TempDir::new().unwrap();
    let o = run(&["selfcheck"], d.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let out = stdout(&o);
    let passes = out.lines().filter(|l| l.starts_with("PASS")).count();
    assert!(passes >= 20, "{out}");
    assert!(!out.contains("FAIL"));

    let o = run(&["selfcheck", "--inject-fault"], d.path());
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn config_file_sets_flags_and_cli_overrides() {
    let d = TempDir::new().unwrap();
    write(d.path(), "x.csv", "0\n0.5\n1\n1.5\n");
    write(d.path(), "y.csv", "3\n3.5\n4\n4.5\n");
    write(
        d.path(),
        "run.json",
        r#"{"command":"test2","x":"x.csv","y":"y.csv","perms":19,"seed":1,"out":"from_config.json"}"#,
    );
    let o = run(&["--config", "run.json"], d.path());
    assert_eq!(code(&o), 0, "{o:?}");
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("from_config.json")).unwrap()).unwrap();
    assert_eq!(v["n_permutations"], 19);

    let o = run(&["--config", "run.json", "--perms", "39", "--out", "override.json"], d.path());
    assert_eq!(code(&o), 0, "{o:?}");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("override.json")).unwrap()).unwrap();
    assert_eq!(v["n_permutations"], 39);
    assert_eq!(v["seed"], 1);

    write(d.path(), "typo.json", r#"{"command":"test2","permz":5}"#);
    assert_eq!(code(&run(&["--config", "typo.json"], d.path())), 2);
}

#[test]
fn measure_valued_points() {
    let d = TempDir::new().unwrap();
    write(
        d.path(),
        "k.json",
        r#"{"phi":{"family":"gaussian","alpha":1.0},"rule":{"kind":"quantile_monge"},
            "space":{"type":"measure_points","base":{"type":"euclidean","dim":1}}}"#,
    );
    write(d.path(), "m.csv", "id,x1,weight\n0,0,0.5\n0,1,0.5\n1,2,1\n");
    let o = run(&["gram", "--kernel", "k.json", "--points", "m.csv", "--out", "g.csv"], d.path());
    assert_eq!(code(&o), 0, "{o:?}");
    let g = read_matrix(&d.path().join("g.csv")).unwrap();
    // W₂² between ½δ₀ + ½δ₁ and δ₂ is (4 + 1)/2
    assert!((g[(0, 1)] - (-2.5f64).exp()).abs() < 1e-15);
}

#[test]
fn help_exits_zero() {
    let d = TempDir::new().unwrap();
    let o = run(&["--help"], d.path());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("--kernel"));
}
