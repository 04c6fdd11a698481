use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ionlab::dispersion::{d2lambda, dlambda, lambda};
use ionlab::field::C64;
use ionlab::paley::{energy_norm, NormParams};
use ionlab::{fieldio, Grid, SpectralField};
use serde_json::Value;
use sha2::{Digest, Sha256};

fn ionlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ionlab")).current_dir(dir).env_remove("IONLAB_OUT_DIR").args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

#[test]
fn resonance_report_is_byte_identical_across_runs() {
    let d = tempfile::tempdir().unwrap();
    let args = ["resonance", "verify", "--lemma", "time", "--samples", "1000", "--seed", "1"];
    assert_eq!(code(&ionlab(d.path(), &args)), 0);
    let a = (fs::read(d.path().join("report.json")).unwrap(), fs::read(d.path().join("report.json.manifest.json")).unwrap());
    assert_eq!(code(&ionlab(d.path(), &args)), 0);
    let b = (fs::read(d.path().join("report.json")).unwrap(), fs::read(d.path().join("report.json.manifest.json")).unwrap());
    assert_eq!(a, b);
    let r = json(&d.path().join("report.json"));
    for key in ["lemma", "samples", "min_ratio", "argmin", "window", "seed"] {
        assert!(r.get(key).is_some(), "{key}");
    }
    assert_eq!(r["seed"], 1);
    let m = json(&d.path().join("report.json.manifest.json"));
    assert_eq!(m["seed"], 1);
    let digest = format!("{:x}", Sha256::digest(&a.0));
    assert_eq!(m["outputs"][0]["sha256"], digest.as_str());

    let other = ["resonance", "verify", "--lemma", "time", "--samples", "1000", "--seed", "2", "--out", "r2.json"];
    assert_eq!(code(&ionlab(d.path(), &other)), 0);
    let m2 = json(&d.path().join("r2.json.manifest.json"));
    assert_ne!(m["config_hash"], m2["config_hash"]);
}

#[test]
fn malformed_configs_exit_2_without_files() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("bad.json"), r#"{"grid": 32, "bogus": 1}"#).unwrap();
    fs::write(d.path().join("broken.json"), r#"{"grid": 32,"#).unwrap();
    fs::write(d.path().join("odd.json"), r#"{"grid": 48}"#).unwrap();
    for cfg in ["bad.json", "broken.json", "odd.json"] {
        let o = ionlab(d.path(), &["simulate", "--config", cfg, "--out", "run"]);
        assert_eq!(code(&o), 2, "{cfg}: {}", String::from_utf8_lossy(&o.stderr));
    }
    fs::write(d.path().join("exp.json"), r#"{"subcommand": "dispersion", "params": {"points": 3, "extra": 1}, "out": "x.csv"}"#).unwrap();
    fs::write(d.path().join("exp2.json"), r#"{"subcommand": "dispersion", "out": "x.csv", "colour": 1}"#).unwrap();
    fs::write(d.path().join("exp3.json"), r#"{"subcommand": "decay", "params": {"k": 0, "gamma0_shell": 1}, "out": "x.csv"}"#).unwrap();
    for cfg in ["exp.json", "exp2.json", "exp3.json"] {
        assert_eq!(code(&ionlab(d.path(), &["run", "--config", cfg])), 2, "{cfg}");
    }
    assert_eq!(code(&ionlab(d.path(), &["dispersion", "--points", "1"])), 2);
    assert_eq!(code(&ionlab(d.path(), &["resonance", "verify", "--lemma", "bogus"])), 2);
    assert_eq!(
        listing(d.path()),
        ["bad.json", "broken.json", "exp.json", "exp2.json", "exp3.json", "odd.json"]
    );
}

#[test]
fn vacuum_amplitude_exits_3_with_flagged_record() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid": 32, "domain_length": 20, "initial_data": {"amplitude": 0.9, "normalization": "sup_density"}}"#;
    fs::write(d.path().join("vac.json"), cfg).unwrap();
    let o = ionlab(d.path(), &["simulate", "--config", "vac.json", "--out", "out"]);
    assert_eq!(code(&o), 3);
    let csv = fs::read_to_string(d.path().join("out/diagnostics.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let flag = last.rsplit(',').next().unwrap();
    assert!(flag.contains("guard"), "{last}");
    let m = json(&d.path().join("out/run-manifest.json"));
    assert_eq!(m["status"], "numeric_guard");
}

#[test]
fn simulation_outputs_replay_exactly() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid": 64, "domain_length": 32, "dt": 0.2, "t_end": 1.0, "diagnostics_every": 2, "snapshot_every": 5,
        "norm_params": {"N1": 1.5, "N2": 1.0, "N3": 0.5},
        "initial_data": {"amplitude": 0.001, "normalization": "sup_density", "shape": {"kind": "band", "k_min": 0.4, "k_max": 1.4}, "envelope": 2.5, "seed": 5}}"#;
    fs::write(d.path().join("c.json"), cfg).unwrap();
    for out in ["a", "b"] {
        let o = ionlab(d.path(), &["simulate", "--config", "c.json", "--out", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let files = listing(&d.path().join("a"));
    assert_eq!(
        files,
        [
            "diagnostics.csv",
            "run-manifest.json",
            "snapshot_000000_psi.field",
            "snapshot_000000_rho.field",
            "snapshot_000005_psi.field",
            "snapshot_000005_rho.field"
        ]
    );
    for f in &files {
        assert_eq!(fs::read(d.path().join("a").join(f)).unwrap(), fs::read(d.path().join("b").join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(d.path().join("a/diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,mass,hamiltonian,l2_u,energy_norm,z_norm,sup_n,sup_gradpsi,flag");
    assert_eq!(csv.lines().count(), 1 + 4);
    let snap = fieldio::decode(&fs::read(d.path().join("a/snapshot_000005_rho.field")).unwrap()).unwrap();
    assert_eq!(snap.grid().n, 64);
    let m = json(&d.path().join("a/run-manifest.json"));
    assert_eq!(m["seed"], 5);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 5);
    assert_eq!(m["config"]["initial_data"]["seed"], 5);

    // seed flag overrides the config seed and changes the hash
    let o = ionlab(d.path(), &["simulate", "--config", "c.json", "--out", "c", "--seed", "6"]);
    assert_eq!(code(&o), 0);
    let mc = json(&d.path().join("c/run-manifest.json"));
    assert_eq!(mc["seed"], 6);
    assert_ne!(mc["config_hash"], m["config_hash"]);
}

#[test]
fn dispersion_table_and_sidecar() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&ionlab(d.path(), &["dispersion", "--x-min", "0.5", "--x-max", "2.5", "--points", "5"])), 0);
    let csv = fs::read_to_string(d.path().join("dispersion.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,lambda,dlambda,d2lambda"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert_eq!([r[1], r[2], r[3]], [lambda(r[0]), dlambda(r[0]), d2lambda(r[0])]);
    }
    let m = json(&d.path().join("dispersion.csv.manifest.json"));
    assert!((m["results"]["gamma0"].as_f64().unwrap() - (1.0 + 7f64.sqrt()).sqrt()).abs() < 1e-15);
    assert_eq!(m["results"]["space_roots"].as_array().unwrap().len(), 3);
}

#[test]
fn out_dir_override_relocates_relative_paths() {
    let d = tempfile::tempdir().unwrap();
    let target = d.path().join("elsewhere");
    let o = Command::new(env!("CARGO_BIN_EXE_ionlab"))
        .current_dir(d.path())
        .env("IONLAB_OUT_DIR", &target)
        .args(["dispersion", "--points", "3", "--out", "t.csv"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(target.join("t.csv").exists() && target.join("t.csv.manifest.json").exists());
    assert!(!d.path().join("t.csv").exists());
}

#[test]
fn norms_of_field_file() {
    let d = tempfile::tempdir().unwrap();
    let g = Grid::new(128, 60.0).unwrap();
    let f = SpectralField::from_fn(g, |[a, b]| C64::from_polar((-(a * a + b * b) / 18.0).exp(), 0.8 * a));
    fs::write(d.path().join("f.field"), fieldio::encode(&f)).unwrap();
    fs::write(d.path().join("p.json"), r#"{"N0": 4, "N1": 2, "N2": 1.5, "N3": 1}"#).unwrap();
    let o = ionlab(d.path(), &["norms", "--in", "f.field", "--params", "p.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&d.path().join("norms.json"));
    let np = NormParams { n0: 4.0, n1: 2.0, n2: 1.5, n3: 1.0, ..Default::default() };
    let want = energy_norm(&f, &np, 2).unwrap();
    assert!((v["energy_norm"].as_f64().unwrap() / want - 1.0).abs() < 1e-14);
    assert_eq!(v["grid"], 128);
    assert!(v["z_norm"].as_f64().unwrap() > 0.0);

    fs::write(d.path().join("junk.field"), b"not a field").unwrap();
    assert_eq!(code(&ionlab(d.path(), &["norms", "--in", "junk.field", "--out", "j.json"])), 2);
    assert_eq!(code(&ionlab(d.path(), &["norms", "--in", "missing.field", "--out", "j.json"])), 4);
    assert!(!d.path().join("j.json").exists());
}

#[test]
fn decay_csv_and_wrap_guard() {
    let d = tempfile::tempdir().unwrap();
    let o = ionlab(d.path(), &["decay", "--k", "0", "--tmin", "5", "--tmax", "20", "--count", "4", "--grid", "1024", "--domain-length", "400"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(d.path().join("decay.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,supnorm,l2norm"));
    assert_eq!(csv.lines().count(), 5);
    let m = json(&d.path().join("decay.csv.manifest.json"));
    assert!(m["results"]["late_fit"]["slope"].as_f64().unwrap() < 0.0);

    // below the no-wrap size: rejected up front
    let o = ionlab(d.path(), &["decay", "--k", "0", "--tmax", "40", "--count", "4", "--grid", "256", "--domain-length", "60", "--out", "w.csv"]);
    assert_eq!(code(&o), 2);
    // minimal box, but the shell's tails still reach the boundary strip
    let o = ionlab(d.path(), &["decay", "--k", "0", "--tmin", "10", "--tmax", "100", "--count", "6", "--grid", "1024", "--out", "w.csv"]);
    assert_eq!(code(&o), 3);
    assert!(!d.path().join("w.csv").exists());
}

#[test]
fn unwritable_output_exits_4() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("file"), b"x").unwrap();
    let o = ionlab(d.path(), &["dispersion", "--points", "3", "--out", "file/sub.csv"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn experiment_config_matches_flag_invocation() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("e.json"),
        r#"{"subcommand": "resonance", "params": {"lemma": "time", "samples": 500}, "seed": 3, "out": "e.json.out"}"#,
    )
    .unwrap();
    assert_eq!(code(&ionlab(d.path(), &["run", "--config", "e.json"])), 0);
    let args = ["resonance", "verify", "--lemma", "time", "--samples", "500", "--seed", "3", "--out", "f.json"];
    assert_eq!(code(&ionlab(d.path(), &args)), 0);
    assert_eq!(fs::read(d.path().join("e.json.out")).unwrap(), fs::read(d.path().join("f.json")).unwrap());
    let (a, b) = (json(&d.path().join("e.json.out.manifest.json")), json(&d.path().join("f.json.manifest.json")));
    assert_eq!(a["config_hash"], b["config_hash"]);
}

#[test]
fn help_lists_flags() {
    let d = tempfile::tempdir().unwrap();
    let o = ionlab(d.path(), &["decay", "--help"]);
    assert_eq!(code(&o), 0);
    let h = String::from_utf8_lossy(&o.stdout);
    for f in ["--k", "--gamma0-shell", "--tmax", "--grid", "--out"] {
        assert!(h.contains(f), "{f}");
    }
    let o = ionlab(d.path(), &["resonance", "verify", "--help"]);
    let h = String::from_utf8_lossy(&o.stdout);
    for f in ["--lemma", "--samples", "--seed", "--out"] {
        assert!(h.contains(f), "{f}");
    }
}
