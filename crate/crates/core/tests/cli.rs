//! End-to-end runs of the command-line front end through `execute` and
//! `main_with_args`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use rot_infer::cli::{execute, main_with_args, Cli};
use rot_infer::inference::{normal_ci, AvgSliced, Statistic};
use rot_infer::measures::{sample_sphere, SampleMatrix, SeedPolicy};
use serde_json::Value;
use tempfile::TempDir;

fn write_csv(dir: &Path, name: &str, rows: &[[f64; 2]]) -> PathBuf {
    let mut s = String::new();
    for r in rows {
        s.push_str(&format!("{},{}\n", r[0], r[1]));
    }
    let path = dir.join(name);
    fs::write(&path, s).unwrap();
    path
}

fn grid(n: usize, shift: f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            [t + shift, (7.0 * t).fract()]
        })
        .collect()
}

struct Data {
    dir: TempDir,
    x: PathBuf,
    y: PathBuf,
}

fn data(n: usize) -> Data {
    let dir = tempfile::tempdir().unwrap();
    let x = write_csv(dir.path(), "x.csv", &grid(n, 0.0));
    let y = write_csv(dir.path(), "y.csv", &grid(n, 0.4));
    Data { dir, x, y }
}

fn run(args: &[&str]) -> (i32, String) {
    let cli = Cli::try_parse_from(std::iter::once("rot-infer").chain(args.iter().copied())).unwrap();
    let mut out = Vec::new();
    let code = execute(&cli, &mut out).unwrap();
    (code, String::from_utf8(out).unwrap())
}

fn json(args: &[&str]) -> Value {
    let (code, out) = run(args);
    assert_eq!(code, 0);
    serde_json::from_str(&out).unwrap()
}

fn exit_code(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("rot-infer").chain(args.iter().copied()))
}

#[test]
fn dist_reports_each_kind() {
    let d = data(40);
    let (x, y) = (d.x.to_str().unwrap(), d.y.to_str().unwrap());
    for kind in ["plain", "sliced-avg", "sliced-max", "entropic"] {
        let v = json(&["dist", "--kind", kind, "--k", "20", "--no-timing", x, y]);
        assert_eq!(v["kind"], kind);
        assert!(v["value"].as_f64().unwrap() > 0.0, "{kind}");
        assert!(v["wall_time_ms"].is_null());
        assert_eq!(v["n_x"], 40);
        assert_eq!(v["dim"], 2);
    }
    let v = json(&["dist", "--kind", "smooth", "--sigma", "0.1", "--reps", "4", x, y]);
    assert_eq!(v["smooth"]["rep_values"].as_array().unwrap().len(), 4);
    assert!(v["wall_time_ms"].is_u64());
}

#[test]
fn plain_matches_translation() {
    let d = data(30);
    let v = json(&["dist", "--kind", "plain", "--p", "2", d.x.to_str().unwrap(), d.y.to_str().unwrap()]);
    assert!((v["value"].as_f64().unwrap() - 0.16).abs() < 1e-12);
    assert!((v["value_pth_root"].as_f64().unwrap() - 0.4).abs() < 1e-12);
}

#[test]
fn floats_keep_seventeen_digits() {
    let d = data(20);
    let (_, out) = run(&["dist", "--kind", "entropic", "--no-timing", d.x.to_str().unwrap(), d.y.to_str().unwrap()]);
    let line = out.lines().find(|l| l.trim_start().starts_with("\"value\"")).unwrap();
    let digits = line.split(':').nth(1).unwrap().trim().trim_end_matches(',');
    let mantissa = digits.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{digits}");
}

#[test]
fn output_file_replaces_stdout() {
    let d = data(20);
    let out = d.dir.path().join("o.json");
    let (code, text) = run(&[
        "dist", "--kind", "plain", "--out", out.to_str().unwrap(), d.x.to_str().unwrap(), d.y.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(text.is_empty());
    let v: Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["kind"], "plain");
}

#[test]
fn normal_ci_reproduces_library() {
    let d = data(60);
    let (x, y) = (d.x.to_str().unwrap(), d.y.to_str().unwrap());
    let v = json(&["ci", "--kind", "sliced-avg", "--k", "30", "--method", "normal", "--seed", "5", x, y]);
    let xs = SampleMatrix::read_csv(&d.x).unwrap();
    let ys = SampleMatrix::read_csv(&d.y).unwrap();
    let dirs = sample_sphere(2, 30, &SeedPolicy::new(5).child(1)).unwrap();
    let (t, var) = AvgSliced::new(2.0, dirs).eval_with_variance(&xs, Some(&ys)).unwrap();
    let (lo, hi) = normal_ci(t, var.unwrap(), 60, 0.95).unwrap();
    assert_eq!(v["value"].as_f64().unwrap(), t);
    assert_eq!(v["ci_lo"].as_f64().unwrap(), lo);
    assert_eq!(v["ci_hi"].as_f64().unwrap(), hi);
    assert_eq!(v["method"], "normal");
}

#[test]
fn ci_methods_bracket_the_estimate() {
    let d = data(50);
    let (x, y) = (d.x.to_str().unwrap(), d.y.to_str().unwrap());
    let v = json(&["ci", "--kind", "entropic", "--b", "150", x, y]);
    assert_eq!(v["method"], "bootstrap");
    assert_eq!(v["b"], 150);
    assert!(v["ci_lo"].as_f64().unwrap() <= v["ci_hi"].as_f64().unwrap());

    let v = json(&["ci", "--kind", "sliced-max", "--k", "10", "--b", "120", x, y]);
    assert_eq!(v["method"], "subsample");
    assert_eq!(v["m"], 14);
    assert!(v["corrected_estimate"].is_f64());
}

#[test]
fn identical_samples_give_zero_width_interval() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![[0.5, 0.5]; 30];
    let x = write_csv(dir.path(), "x.csv", &rows);
    let v = json(&["ci", "--kind", "plain", "--b", "100", x.to_str().unwrap(), x.to_str().unwrap()]);
    assert_eq!(v["value"].as_f64().unwrap(), 0.0);
    assert_eq!(v["ci_lo"].as_f64().unwrap(), 0.0);
    assert_eq!(v["ci_hi"].as_f64().unwrap(), 0.0);
}

#[test]
fn clt_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("clt");
    let args = [
        "clt", "--experiment", "eot-discrete", "--n", "100", "--reps", "40", "--seed", "3", "--out-dir",
        out_dir.to_str().unwrap(),
    ];
    let (_, first) = run(&args);
    let csv1 = fs::read(out_dir.join("replicates.csv")).unwrap();
    let (_, second) = run(&args);
    let csv2 = fs::read(out_dir.join("replicates.csv")).unwrap();
    assert_eq!(first, second);
    assert_eq!(csv1, csv2);
    assert_eq!(csv1.iter().filter(|&&b| b == b'\n').count(), 41);
    assert!(out_dir.join("qq.svg").exists());
    assert!(out_dir.join("histogram.svg").exists());
}

#[test]
fn thread_count_does_not_change_results() {
    let d = data(40);
    let (x, y) = (d.x.to_str().unwrap(), d.y.to_str().unwrap());
    let base = ["ci", "--kind", "sliced-avg", "--k", "25", "--b", "100", "--no-timing", x, y];
    let (_, one) = run(&[&["--threads", "1"][..], &base[..]].concat());
    let (_, three) = run(&[&["--threads", "3"][..], &base[..]].concat());
    assert_eq!(one, three);
}

#[test]
fn point_mass_experiment_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("pm");
    let v = json(&["clt", "--experiment", "point-mass", "--n", "50", "--reps", "20", "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(v["degenerate"], true);
    assert!(!out_dir.join("qq.svg").exists());
}

#[test]
fn exit_codes() {
    let d = data(10);
    let (x, y) = (d.x.to_str().unwrap(), d.y.to_str().unwrap());
    assert_eq!(exit_code(&["--help"]), 0);
    assert_eq!(exit_code(&["dist"]), 2);
    assert_eq!(exit_code(&["dist", "--kind", "smooth", x, y]), 2);
    assert_eq!(exit_code(&["dist", "--kind", "plain", "--eps", "0.5", x, y]), 2);
    assert_eq!(exit_code(&["dist", "--kind", "plain", x, "/nonexistent/y.csv"]), 2);
    assert_eq!(exit_code(&["ci", "--kind", "plain", "--b", "20", x, y]), 2);
    assert_eq!(exit_code(&["--threads", "0", "dist", "--kind", "plain", x, y]), 2);

    let bad = d.dir.path().join("bad.csv");
    fs::write(&bad, "1,2\n3\n").unwrap();
    assert_eq!(exit_code(&["dist", "--kind", "plain", x, bad.to_str().unwrap()]), 2);

    let out = d.dir.path().join("o.json");
    assert_eq!(exit_code(&["dist", "--kind", "plain", "--out", out.to_str().unwrap(), x, y]), 0);
}

#[test]
fn selftest_passes() {
    let (code, out) = run(&["selftest"]);
    assert_eq!(code, 0, "{out}");
    assert!(!out.contains("FAIL"));
}
