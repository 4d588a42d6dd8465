use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lorentz(args: &[&str], config: Option<&str>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lorentz"));
    cmd.args(args).arg("--out").arg(out).env_remove("LORENTZ_OUT");
    if let Some(c) = config {
        let p = out.with_extension("json");
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(&p, c).unwrap();
        cmd.arg("--config").arg(p);
    }
    cmd.output().unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), String::from_utf8_lossy(&o.stderr));
}

fn json(p: PathBuf) -> serde_json::Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

/// Every result file of a run directory, with the manifest timestamp removed.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let name = p.strip_prefix(dir).unwrap().display().to_string();
            let mut bytes = fs::read(&p).unwrap();
            if name == "manifest.json" {
                let mut m: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                m.as_object_mut().unwrap().remove("timestamp_unix");
                bytes = serde_json::to_vec(&m).unwrap();
            }
            files.push((name, bytes));
        }
    }
    files.sort();
    files
}

#[test]
fn zeta_without_obstacles_is_zero_for_every_method() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("z");
    let cfg = r#"{"zeta": {"rho": 0.0, "mc": {"eps": 0.01, "n_traj": 20}}}"#;
    ok(&lorentz(&["zeta"], Some(cfg), &out));
    let rep = json(out.join("zeta.json"));
    let entries = rep["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 4);
    for e in entries {
        assert_eq!(e["value"].as_f64().unwrap(), 0.0, "{e}");
        assert!(e["ratio_to_reference"].is_null());
    }
    let csv = fs::read_to_string(out.join("zeta.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "method,value,uncertainty,ratio_to_reference");
    for l in lines {
        assert_eq!(l.split(',').nth(1).unwrap(), "0");
    }
    assert!(out.join("manifest.json").exists() && out.join("summary.txt").exists());
}

#[test]
fn simulate_without_obstacles_is_a_straight_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    ok(&lorentz(&["simulate", "--rho", "0", "--horizon", "0.5"], None, &out));
    let text = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut rows = text.lines();
    assert_eq!(rows.next().unwrap(), "t,x,y,vx,vy,angle");
    let mut n = 0;
    for r in rows {
        let v: Vec<f64> = r.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[1] - v[0]).abs() < 1e-15 && v[2] == 0.0 && v[3] == 1.0 && v[4] == 0.0 && v[5] == 0.0, "{r}");
        n += 1;
    }
    assert!(n >= 2);
    let res = json(out.join("result.json"));
    assert_eq!(res["stop_time"].as_f64().unwrap(), 0.5);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let runs: [(&[&str], Option<&str>); 4] = [
        (&["simulate", "--eps", "0.01", "--alpha", "0.3", "--horizon", "0.3", "--seed", "5"], None),
        (&["law", "--n-traj", "24", "--eps", "0.03,0.02,0.01", "--alpha", "0.3"], Some(r#"{"law": {"ensemble": {"times": [0.1, 0.2]}}}"#)),
        (&["boltzmann", "--eps", "0.01", "--n-samples", "500"], None),
        (&["scatter-table"], Some(r#"{"scatter-table": {"eps": 0.01, "order": 64, "cross_section_points": 21}}"#)),
    ];
    for (k, (args, cfg)) in runs.iter().enumerate() {
        let a = tmp.path().join(format!("a{k}"));
        let b = tmp.path().join(format!("b{k}"));
        ok(&lorentz(args, *cfg, &a));
        ok(&lorentz(args, *cfg, &b));
        let (sa, sb) = (snapshot(&a), snapshot(&b));
        assert_eq!(sa.len(), sb.len());
        for (x, y) in sa.iter().zip(&sb) {
            assert_eq!(x.0, y.0);
            assert!(x.1 == y.1, "{:?}: {} differs", args, x.0);
        }
        // a rerun into the same directory reuses cached cells and reproduces the files
        ok(&lorentz(args, *cfg, &a));
        assert_eq!(snapshot(&a), sb);
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["doublets", "--n-traj", "16", "--eps", "0.03,0.01", "--alpha", "0.4"];
    let cfg = r#"{"doublets": {"ensemble": {"times": [0.2]}}}"#;
    let a = tmp.path().join("w1");
    let b = tmp.path().join("w4");
    ok(&lorentz(&[&args[..], &["--workers", "1"]].concat(), Some(cfg), &a));
    ok(&lorentz(&[&args[..], &["--workers", "4"]].concat(), Some(cfg), &b));
    for f in ["doublets.csv", "doublets.json", "cells.csv", "samples.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn unknown_keys_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    for cfg in [r#"{"zeta": {"rhoo": 1.0}}"#, r#"{"zetta": {}}"#, r#"{"simulate": {"step": {"steps": 3}}}"#] {
        let out = tmp.path().join("bad");
        let o = lorentz(&["zeta"], Some(cfg), &out);
        assert_eq!(o.status.code(), Some(2), "{cfg}");
        let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
        assert_eq!(err["error"], "usage");
        assert_eq!(json(out.join("error.json"))["exit_code"], 2);
    }
    let o = lorentz(&["zeta", "--no-such-flag"], None, &tmp.path().join("x"));
    assert_eq!(o.status.code(), Some(2));
    let o = lorentz(&["simulate", "--alpha", "0.9"], None, &tmp.path().join("y"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("n");
    let cfg = r#"{"simulate": {"rho": 3.0, "eps": 0.01, "alpha": 0.1, "cutoffs": {"kind": "disabled"}, "step": {"steps_per_radius": 2, "kink_substeps": 1, "samples_per_unit_time": 16, "energy_abort": 1e-6}}}"#;
    let o = lorentz(&["simulate"], Some(cfg), &out);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(out.join("error.json"))["error"], "numerical");
}

#[test]
fn flags_override_config_and_manifest_records_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("m");
    let cfg = r#"{"seed": 9, "landau": {"zeta": 0.5, "t": 0.2, "order": 16, "grid": 64}}"#;
    ok(&lorentz(&["landau", "--zeta", "0.25", "--seed", "3"], Some(cfg), &out));
    let m = json(out.join("manifest.json"));
    assert_eq!(m["config"]["seed"], 3);
    assert_eq!(m["config"]["params"]["zeta"], 0.25);
    assert_eq!(m["config"]["params"]["t"], 0.2);
    assert_eq!(m["config"]["params"]["mode"], "velocity");
    assert!(m["config"]["params"]["resolution"]["nx"].is_u64());
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    let d = fs::read_to_string(out.join("density.csv")).unwrap();
    assert_eq!(d.lines().next().unwrap(), "theta,value");
    assert_eq!(d.lines().count(), 65);
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_lorentz"))
        .args(["landau", "--phase", "--t", "0.1"])
        .env("LORENTZ_OUT", &out)
        .output()
        .unwrap();
    ok(&o);
    let r = json(out.join("result.json"));
    assert!(r["report"]["max_mass_drift"].as_f64().unwrap() < 1e-10);
}
