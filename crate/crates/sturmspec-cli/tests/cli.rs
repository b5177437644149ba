use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sturmspec")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn bad_inputs_exit_with_code_two() {
    for args in [
        &["bands", "--V", "3"][..],
        &["bands", "--depth", "0"],
        &["dims", "--tol", "0.5"],
        &["bands", "--prefix", "1,x"],
        &["asymptotics", "--kappa-max", "1"],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn weak_coupling_warns_but_runs() {
    let out = run(&["bands", "--V", "10", "--depth", "3"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn asymptotics_table_has_one_row_per_kappa() {
    let out = run(&["asymptotics", "--kappa-max", "8", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# sturmspec asymptotics table=inequalities config="));
    assert_eq!(lines[1], "kappa,rho_hat,varrho,rho,hat_below_varrho,varrho_below_rho,tied");
    let rows: Vec<Vec<&str>> = lines[2..].iter().filter(|l| !l.starts_with('#')).map(|l| l.split(',').collect()).collect();
    let data: Vec<&Vec<&str>> = rows.iter().filter(|r| r.len() == 7 && r[0].parse::<u32>().is_ok()).collect();
    assert_eq!(data.len(), 8);
    for r in data {
        let tied = r[0] == "2";
        assert_eq!(r[6], if tied { "true" } else { "false" }, "{r:?}");
        assert_eq!(r[4], if tied { "false" } else { "true" }, "{r:?}");
    }
}

#[test]
fn cached_trees_are_reused_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().to_str().unwrap();
    let args = ["bands", "--depth", "5", "--cache-dir", cache];
    let first = json(&run(&args));
    let second = json(&run(&args));
    assert_eq!(first["cache"], "miss");
    assert_eq!(second["cache"], "hit");
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("cache");
        v
    };
    assert_eq!(strip(first), strip(second));
    let entries: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1);
}

#[test]
fn corrupt_cache_entries_are_rebuilt() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().to_str().unwrap();
    let args = ["bands", "--depth", "4", "--cache-dir", cache];
    let clean = json(&run(&args));
    let entry = fs::read_dir(dir.path()).unwrap().next().unwrap().unwrap().path();
    fs::write(&entry, "{ not json").unwrap();
    let out = run(&args);
    assert!(String::from_utf8_lossy(&out.stderr).contains("ignoring cache entry"));
    let rebuilt = json(&out);
    assert_eq!(rebuilt["cache"], "stale");
    assert_eq!(rebuilt["tree"], clean["tree"]);
    assert_eq!(json(&run(&args))["cache"], "hit");
}

#[test]
fn verify_passes_for_the_silver_mean() {
    let out = run(&["verify", "--kappa", "2", "--depth", "7", "--format", "csv"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(!text.contains(",false,"), "{text}");
}

#[test]
fn multifractal_anchors_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let v = json(&run(&["multifractal", "--depth", "6", "--out-dir", out_dir]));
    assert_eq!(v["tau_at_zero"], v["s_hat_plain"]);
    assert_eq!(v["tau_at_one"].as_f64().unwrap(), 0.0);
    assert!((v["tau_star_max"].as_f64().unwrap() - v["tau_at_zero"].as_f64().unwrap()).abs() < 1e-6);
    for name in ["multifractal.json", "multifractal_tau.csv", "multifractal_tau_star.csv"] {
        assert!(Path::new(out_dir).join(name).exists(), "{name}");
    }
    let tau = fs::read_to_string(dir.path().join("multifractal_tau.csv")).unwrap();
    let mut lines = tau.lines();
    assert!(lines.next().unwrap().starts_with("# sturmspec multifractal table=tau config="));
    assert_eq!(lines.next(), Some("q,tau"));
    assert_eq!(lines.clone().count(), 101);
    assert!(lines.any(|l| l.starts_with("-4.8,")));
}

#[test]
fn prefix_vectors_agree() {
    let v = json(&run(&["dims", "--depth", "8", "--compare-prefix-vectors"]));
    let dev = v["prefix_deviation"]["max"].as_f64().unwrap();
    assert!(dev < 0.01, "{dev}");
    let e = &v["estimates"];
    assert!(e["gamma_hat"]["value"].as_f64() < e["d_hat"]["value"].as_f64());
}

#[test]
fn dos_reports_a_stochastic_matrix() {
    let v = json(&run(&["dos", "--kappa", "3", "--depth", "4"]));
    for row in v["transition_matrix"].as_array().unwrap() {
        let s: f64 = row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
    let p = v["stationary"].as_array().unwrap();
    assert_eq!(p.len(), 8);
}

#[test]
fn config_hash_tracks_inputs() {
    let a = json(&run(&["asymptotics", "--kappa-max", "4"]));
    let b = json(&run(&["asymptotics", "--kappa-max", "5"]));
    let c = json(&run(&["asymptotics", "--kappa-max", "4"]));
    assert_ne!(a["config"]["hash"], b["config"]["hash"]);
    assert_eq!(a["config"]["hash"], c["config"]["hash"]);
}
