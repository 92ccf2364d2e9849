use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use serde_json::Value;
use stablepca::simulate::wishart_instance;
use stablepca::{solve, SolveOptions};
use stablepca_cli::report::{add_solve_report, read_matrix, read_report, Report};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stablepca"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn crossing(dir: &Path) {
    write(dir, "a.csv", "2,0\n0,1\n");
    write(dir, "b.csv", "1,0\n0,2\n");
}

/// Three small sources with a header row, written deterministically.
fn sample_dir(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    fs::create_dir(&data).unwrap();
    for (l, scale) in [(0usize, 1.0f64), (1, 0.5), (2, 2.0)] {
        let mut body = String::from("x1,x2,x3,x4\n");
        for i in 0..40 {
            let t = (i * 7 + l * 3) as f64;
            body.push_str(&format!(
                "{},{},{},{}\n",
                t.sin() * 2.0,
                (t * 0.3).cos() * scale,
                (t * 1.7).sin() * 0.5,
                (t * 0.9).cos() * scale * 0.2
            ));
        }
        fs::write(data.join(format!("src{l}.csv")), body).unwrap();
    }
    data
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn crossing_report_flags_non_tight_rounding() {
    let dir = tempfile::tempdir().unwrap();
    crossing(dir.path());
    let o = run(dir.path(), &["fit", "--k", "1", "--moments", "a.csv", "b.csv", "--out", "r.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = read_report(&dir.path().join("r.json")).unwrap();
    assert_eq!(v["tight"], Value::Bool(false));
    assert!((v["tau"].as_f64().unwrap() - 0.5).abs() <= 1e-6);
    assert!((v["relaxed_value"].as_f64().unwrap() - 1.5).abs() <= 1e-9);
    assert_eq!(v["p_rounded_csv"], "r.P.csv");
    let m = read_matrix(&dir.path().join("r.json"), &v["m_avg"]).unwrap();
    assert!((m - DMatrix::identity(2, 2) * 0.5).amax() <= 1e-8);
    assert!(dir.path().join("r.M.csv").exists());

    let o = run(dir.path(), &["dual", "--k", "1", "--moments", "a.csv", "b.csv", "--out", "d.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let d = read_report(&dir.path().join("d.json")).unwrap();
    assert!(d["eigengap"].is_number());
    assert_eq!(d["tight"], Value::Bool(false));
    assert_eq!(d["step"]["rule"], "inverse_sqrt");
}

#[test]
fn solve_report_round_trips_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    // d = 70 exercises the sibling-CSV path for both matrices.
    for (d, name) in [(6usize, "small.json"), (70, "large.json")] {
        let m = wishart_instance(d, 3, 11).unwrap();
        let r = solve(&m, 2, 20, &SolveOptions::default()).unwrap();
        let path = dir.path().join(name);
        let mut report = Report::new(&path);
        add_solve_report(&mut report, &r);
        report.write().unwrap();

        let v = read_report(&path).unwrap();
        assert_eq!(v["tau"].as_f64().unwrap().to_bits(), r.tau.to_bits());
        assert_eq!(v["gap"].as_f64().unwrap().to_bits(), r.gap.to_bits());
        let w: Vec<u64> = v["weights"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap().to_bits())
            .collect();
        let expect: Vec<u64> = r.omega_avg.as_slice().iter().map(|x| x.to_bits()).collect();
        assert_eq!(w, expect);
        assert_eq!(&read_matrix(&path, &v["m_avg"]).unwrap(), r.m_avg.matrix());
        assert_eq!(&read_matrix(&path, &v["p_rounded"]).unwrap(), r.p_rounded.matrix());
        assert_eq!(v["m_avg"].get("csv").is_some(), d > 64);
    }
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = sample_dir(dir.path());
    let data = data.to_str().unwrap();
    for out in ["one.json", "two.json"] {
        let o = run(dir.path(), &["fit", "--k", "2", "--T", "120", "--center", "--input", data, "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let single = bin()
        .current_dir(dir.path())
        .env("ROBUST_MSPCA_THREADS", "1")
        .args(["fit", "--k", "2", "--T", "120", "--center", "--input", data, "--out", "three.json"])
        .output()
        .unwrap();
    assert!(single.status.success(), "{}", stderr(&single));
    let read = |f: &str| fs::read(dir.path().join(f)).unwrap();
    // Only the CSV file names embedded in the report differ.
    let strip = |f: &str, stem: &str| String::from_utf8(read(f)).unwrap().replace(stem, "X");
    assert_eq!(strip("one.json", "one"), strip("two.json", "two"));
    assert_eq!(strip("one.json", "one"), strip("three.json", "three"));
    assert_eq!(read("one.P.csv"), read("two.P.csv"));
    assert_eq!(read("one.M.csv"), read("three.M.csv"));

    let v = read_report(&dir.path().join("one.json")).unwrap();
    assert_eq!(v["sources"], serde_json::json!(["src0", "src1", "src2"]));
    assert_eq!(v["sample_sizes"], serde_json::json!([40, 40, 40]));
    assert_eq!(v["center"], Value::Bool(true));
    assert!(v.get("wall_time").is_none());

    for out in ["s1.csv", "s2.csv"] {
        let o = run(dir.path(), &["simulate", "--scenario", "settings", "--T", "100", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(read("s1.csv"), read("s2.csv"));
}

#[test]
fn single_file_layout_matches_per_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = sample_dir(dir.path());
    let mut combined = String::from("site,x1,x2,x3,x4\n");
    for l in 0..3 {
        let body = fs::read_to_string(data.join(format!("src{l}.csv"))).unwrap();
        for line in body.lines().skip(1) {
            combined.push_str(&format!("src{l},{line}\n"));
        }
    }
    write(dir.path(), "all.csv", &combined);
    let data = data.to_str().unwrap();
    let o = run(dir.path(), &["fit", "--k", "1", "--T", "50", "--input", data, "--out", "a.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(
        dir.path(),
        &["fit", "--k", "1", "--T", "50", "--input", "all.csv", "--source-column", "site", "--out", "b.json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let a = read_report(&dir.path().join("a.json")).unwrap();
    let b = read_report(&dir.path().join("b.json")).unwrap();
    assert_eq!(a["tau"], b["tau"]);
    assert_eq!(a["weights"], b["weights"]);
    assert_eq!(a["sources"], b["sources"]);
}

#[test]
fn variants_and_step_overrides_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    crossing(dir.path());
    let o = run(
        dir.path(),
        &[
            "fit", "--k", "1", "--T", "30", "--variant", "fair", "--eta-m", "0.1", "--eta-omega", "0.2",
            "--moments", "a.csv", "b.csv", "--out", "f.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v = read_report(&dir.path().join("f.json")).unwrap();
    assert_eq!(v["variant"], "fair");
    assert_eq!(v["steps"]["eta_m"].as_f64(), Some(0.1));
    assert_eq!(v["steps"]["eta_omega"].as_f64(), Some(0.2));

    let o = run(
        dir.path(),
        &["dual", "--k", "1", "--T", "40", "--dual-eta", "0.05", "--moments", "a.csv", "b.csv", "--out", "d.json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let d = read_report(&dir.path().join("d.json")).unwrap();
    assert_eq!(d["step"]["rule"], "constant");
    assert_eq!(d["iterations"], 40);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    crossing(dir.path());
    for args in [
        vec!["fit", "--k", "1", "--moments", "a.csv"],
        vec!["fit", "--k", "0", "--moments", "a.csv", "--out", "r.json"],
        vec!["fit", "--k", "1", "--variant", "huber", "--moments", "a.csv", "--out", "r.json"],
        vec!["simulate", "--scenario", "table9", "--out", "x.csv"],
        vec!["frobnicate"],
    ] {
        let o = run(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).contains("Usage") || stderr(&o).contains("usage"), "{args:?}");
    }
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn runtime_errors_exit_1_without_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    crossing(dir.path());
    write(dir.path(), "neg.csv", "1,0\n0,-1\n");
    write(dir.path(), "rect.csv", "1,0,0\n0,1,0\n");
    write(dir.path(), "keep.json", "previous\n");
    let cases: [(&[&str], &str); 5] = [
        (&["fit", "--k", "1", "--moments", "neg.csv", "--out", "r.json"], "InvalidMatrix"),
        (&["fit", "--k", "1", "--moments", "rect.csv", "--out", "r.json"], "ShapeError"),
        (&["fit", "--k", "5", "--moments", "a.csv", "b.csv", "--out", "r.json"], "InvalidRank"),
        (&["dual", "--k", "1", "--input", "missing.csv", "--out", "r.json"], "IoError"),
        (&["fit", "--k", "5", "--moments", "a.csv", "--out", "keep.json"], "InvalidRank"),
    ];
    for (args, kind) in cases {
        let o = run(dir.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(stderr(&o).contains(kind), "{args:?}: {}", stderr(&o));
    }
    assert!(!dir.path().join("r.json").exists());
    assert!(!dir.path().join("r.P.csv").exists());
    assert_eq!(fs::read_to_string(dir.path().join("keep.json")).unwrap(), "previous\n");

    let o = bin()
        .current_dir(dir.path())
        .env("ROBUST_MSPCA_THREADS", "zero")
        .args(["fit", "--k", "1", "--moments", "a.csv", "--out", "r.json"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn certificate_grid_writes_table_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "simulate", "--scenario", "certificate-grid", "--dims", "8,10", "--ns", "100,300", "--reps", "2",
            "--T", "40", "--out", "grid.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "d\\n,100,300");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("8,") && lines[2].starts_with("10,"));
    let rows = fs::read_to_string(dir.path().join("grid.rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2 * 2);
}

#[test]
fn factor_and_convergence_scenarios_run_small() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "simulate", "--scenario", "factor", "--sources", "2,3", "--dims", "12", "--ns", "200", "--reps", "1",
            "--T", "30", "--out", "f.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let body = fs::read_to_string(dir.path().join("f.csv")).unwrap();
    assert!(body.starts_with("scenario,cell,key,replication,method,metric,value\n"));
    assert!(body.contains("recovery_error") && body.contains("ood_ev"));

    let o = run(
        dir.path(),
        &[
            "simulate", "--scenario", "convergence", "--dims", "10", "--ns", "100", "--sources", "2", "--reps", "1",
            "--T", "30", "--out", "c.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(dir.path().join("c.csv")).unwrap().contains("objective_gap"));

    let o = run(dir.path(), &["simulate", "--scenario", "factor", "--dims", "10,20", "--out", "g.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("g.csv").exists());
}

#[test]
fn bench_writes_one_row_per_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["bench", "--dims", "10,20", "--T", "5", "--out", "b.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let body = fs::read_to_string(dir.path().join("b.csv")).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[0], "d,iterations,total_seconds,per_iteration_seconds");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("10,5,") && lines[2].starts_with("20,5,"));
}
