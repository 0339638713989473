//! End-to-end runs of the `sparsefun` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sparsefun::io::{load_model, save_model, write_dataset};
use sparsefun::sim::{generate_dataset, SimCase, SimConfig};
use sparsefun::{Curve, LongitudinalSample};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparsefun")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(p).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

struct Fitted {
    dir: tempfile::TempDir,
    data: PathBuf,
    model: PathBuf,
}

fn fitted(n: usize, seed: u64) -> Fitted {
    let dir = tempfile::tempdir().unwrap();
    let d = generate_dataset(&SimConfig::new(SimCase::One, n, 8.0, 1, seed), 0).unwrap();
    let data = dir.path().join("data.csv");
    write_dataset(std::fs::File::create(&data).unwrap(), &d.x, &d.y, None).unwrap();
    let model = dir.path().join("model.json");
    let out = bin(&["fit", path(&data), "-m", path(&model), "--lambda", "1e-4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    Fitted { dir, data, model }
}

#[test]
fn fit_writes_model_and_report() {
    let f = fitted(30, 1);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.model.with_extension("report.json")).unwrap()).unwrap();
    let r = &report["report"];
    assert!(r["j1"].as_u64().unwrap() >= 1 && r["j2"].as_u64().unwrap() >= 1);
    assert_eq!(r["lambdas"]["cross"].as_f64(), Some(1e-4));
    assert!(!r["sigma_sq"].as_array().unwrap().is_empty());
    assert_eq!(report["provenance"]["tool_version"], env!("CARGO_PKG_VERSION"));
    assert!(report["provenance"]["command"].as_array().unwrap().iter().any(|a| a == "--lambda"));
}

#[test]
fn beta_grid_of_two() {
    let f = fitted(30, 2);
    let out = f.dir.path().join("beta.csv");
    assert!(bin(&["eval-grid", path(&f.model), "--what", "beta", "-g", "2", "-o", path(&out)]).status.success());
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap().is_finite()));
}

#[test]
fn crosscov_orientations_are_transposes() {
    let f = fitted(30, 3);
    let (xy, yx) = (f.dir.path().join("xy.csv"), f.dir.path().join("yx.csv"));
    assert!(bin(&["eval-grid", path(&f.model), "--what", "crosscov", "-g", "7", "-o", path(&xy)]).status.success());
    assert!(bin(&["eval-grid", path(&f.model), "--what", "crosscov-yx", "-g", "7", "-o", path(&yx)]).status.success());
    let (a, b) = (csv_rows(&xy), csv_rows(&yx));
    for i in 0..7 {
        for j in 0..7 {
            let (r, q) = (&a[i * 7 + j], &b[j * 7 + i]);
            assert_eq!((&r[0], &r[1]), (&q[1], &q[0]));
            let (u, v): (f64, f64) = (r[2].parse().unwrap(), q[2].parse().unwrap());
            assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
        }
    }
}

#[test]
fn leading_singular_pair_integrates_to_one() {
    let f = fitted(40, 4);
    let g = 101;
    let out = f.dir.path().join("sv.csv");
    let gs = g.to_string();
    assert!(bin(&["eval-grid", path(&f.model), "--what", "singular", "-g", &gs, "-o", path(&out)]).status.success());
    let rows: Vec<Vec<String>> = csv_rows(&out).into_iter().filter(|r| r[0] == "1").collect();
    assert_eq!(rows.len(), g);
    let col = |c: usize| -> Vec<f64> { rows.iter().map(|r| r[c].parse().unwrap()).collect() };
    let trap = |x: &[f64], y: &[f64]| -> f64 {
        x.windows(2).zip(y.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] * y[0] + y[1] * y[1])).sum()
    };
    let (s, psi, t, phi) = (col(2), col(3), col(4), col(5));
    let tol = 2.0 / g as f64;
    assert!((trap(&s, &psi) - 1.0).abs() <= tol, "psi norm {}", trap(&s, &psi));
    assert!((trap(&t, &phi) - 1.0).abs() <= tol, "phi norm {}", trap(&t, &phi));
}

#[test]
fn eval_rejects_unknown_target() {
    let f = fitted(20, 5);
    let out = bin(&["eval-grid", path(&f.model), "--what", "surface"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_inputs_exit_with_input_code_and_no_model() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("dup.csv", "subject_id,process,time,value\nsubject_id,process,time,value\na,X,0.1,1\na,Y,0.2,2\n"),
        ("missing.csv", "subject_id,process,value\na,X,1\na,Y,2\n"),
        ("empty.csv", ""),
        ("nan.csv", "subject_id,process,time,value\na,X,0.1,NaN\na,Y,0.2,2\n"),
    ];
    for (name, text) in cases {
        let data = dir.path().join(name);
        std::fs::write(&data, text).unwrap();
        let model = dir.path().join(format!("{name}.json"));
        let out = bin(&["fit", path(&data), "-m", path(&model)]);
        assert_eq!(out.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!model.exists(), "{name} produced a model");
    }
    let data = dir.path().join("dup.csv");
    let err = String::from_utf8_lossy(&bin(&["fit", path(&data), "-m", "x.json"]).stderr).to_string();
    assert!(err.contains("row 2"), "{err}");
}

#[test]
fn prediction_rows() {
    let f = fitted(30, 6);
    let d = generate_dataset(&SimConfig::new(SimCase::One, 2, 8.0, 1, 77), 0).unwrap();
    let a = d.x[0].clone();
    let b = LongitudinalSample { subject_id: "twin".into(), ..a.clone() };
    let y_only = LongitudinalSample { subject_id: "no-x".into(), ..d.y[1].clone() };
    let new = f.dir.path().join("new.csv");
    write_dataset(std::fs::File::create(&new).unwrap(), &[a, b], &[y_only], None).unwrap();
    let out = f.dir.path().join("pred.csv");
    let res = bin(&["predict", path(&f.model), path(&new), "-g", "9", "-o", path(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let rows = csv_rows(&out);
    let of = |id: &str| -> Vec<Vec<String>> { rows.iter().filter(|r| r[0] == id).cloned().collect() };
    let (first, twin, missing) = (of("0001"), of("twin"), of("no-x"));
    assert_eq!(first.len(), 9);
    for (p, q) in first.iter().zip(&twin) {
        assert_eq!(p[1..], q[1..]);
    }
    assert_eq!(missing.len(), 1);
    assert!(missing[0][3].starts_with("error"));
}

#[test]
fn empty_beta_predicts_the_mean() {
    let f = fitted(30, 7);
    let mut file = load_model(&f.model).unwrap();
    file.model.beta = file.model.beta.truncated(0, 0);
    let empty = f.dir.path().join("empty.json");
    save_model(&empty, &file).unwrap();
    let out = f.dir.path().join("pred.csv");
    assert!(bin(&["predict", path(&empty), path(&f.data), "-g", "5", "-o", path(&out)]).status.success());
    let rows = csv_rows(&out);
    assert!(!rows.is_empty());
    for r in rows {
        let t: f64 = r[1].parse().unwrap();
        let v: f64 = r[2].parse().unwrap();
        assert_eq!(v, file.model.mu_y.value(t));
    }
}

#[test]
fn subject_order_does_not_change_beta() {
    let f = fitted(30, 8);
    let text = std::fs::read_to_string(&f.data).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let header = lines.remove(0);
    lines.reverse();
    let permuted = f.dir.path().join("permuted.csv");
    std::fs::write(&permuted, format!("{header}\n{}\n", lines.join("\n"))).unwrap();
    let model = f.dir.path().join("permuted.json");
    assert!(bin(&["fit", path(&permuted), "-m", path(&model), "--lambda", "1e-4"]).status.success());
    let grid = |m: &Path, name: &str| {
        let out = f.dir.path().join(name);
        assert!(bin(&["eval-grid", path(m), "--what", "beta", "-g", "11", "-o", path(&out)]).status.success());
        std::fs::read(out).unwrap()
    };
    assert_eq!(grid(&f.model, "a.csv"), grid(&model, "b.csv"));
}

#[test]
fn noiseless_dump_has_zero_noise() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("dump.csv");
    let table = dir.path().join("table.csv");
    let out = bin(&[
        "simulate", "--case", "1", "--n", "10", "--stn", "inf", "--seed", "3", "--lambda", "1e-3", "--dump",
        path(&dump), "-o", path(&table),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dump);
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[4].parse::<f64>().unwrap() == 0.0));
    let reps = csv_rows(&table);
    assert_eq!(reps.len(), 1);
    assert_eq!(reps[0][3], "inf");
    assert_eq!(reps[0][6], "ok");
}

#[test]
fn simulate_usage_errors() {
    for args in [
        &["simulate", "--case", "3", "--n", "10", "--stn", "2"][..],
        &["simulate", "--case", "1", "--n", "10", "--stn", "-1"][..],
        &["simulate", "--case", "1", "--n", "0", "--stn", "2"][..],
    ] {
        assert_eq!(bin(args).status.code(), Some(2), "{args:?}");
    }
}
