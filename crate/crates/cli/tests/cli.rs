use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const ENV_VARS: [&str; 14] = [
    "CVQKD_CONFIG",
    "CVQKD_BETA",
    "CVQKD_KAPPA",
    "CVQKD_BUDGET",
    "CVQKD_SEED",
    "CVQKD_OUT",
    "CVQKD_FORMAT",
    "CVQKD_D_MIN",
    "CVQKD_D_MAX",
    "CVQKD_D_STEP",
    "CVQKD_RECEIVER",
    "CVQKD_COPIES",
    "CVQKD_DISTANCE",
    "CVQKD_ALPHA2",
];

fn cvqkd(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cvqkd"));
    for v in ENV_VARS {
        cmd.env_remove(v);
    }
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

#[test]
fn sweep_files_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let out = cvqkd(
            &[
                "sweep", "--d-min", "0", "--d-max", "40", "--d-step", "20", "--budget", "quick",
                "--seed", "9", "--receiver", "pgm,kor", "--copies", "8", "--out", path.to_str().unwrap(),
            ],
            &[],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        path
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let meta = |p: &Path| std::fs::read(format!("{}.meta.json", p.display())).unwrap();
    assert_eq!(meta(&a), meta(&b));
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 3);
    assert!(text.lines().next().unwrap().starts_with("d,T,receiver,K,I_AB,chi_BE"));
    let m: Value = serde_json::from_slice(&meta(&a)).unwrap();
    assert_eq!(m["seed"], 9);
}

#[test]
fn heterodyne_row_at_zero_distance() {
    let out = cvqkd(
        &["sweep", "--d-min", "0", "--d-max", "0", "--receiver", "het", "--budget", "quick", "--format", "json"],
        &[],
    );
    let v = json(&out);
    let row = &v["rows"][0];
    let (k, i) = (row["K"].as_f64().unwrap(), row["I_AB"].as_f64().unwrap());
    assert_eq!(row["receiver"], "het");
    assert!((k - 0.95 * i).abs() < 1e-9, "K = {k}, I = {i}");
    assert!(row["chi_BE"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn point_reports_ratio_and_seed() {
    let v = json(&cvqkd(&["point", "--receiver", "het", "--distance", "0", "--budget", "quick"], &[]));
    assert_eq!(v["chi_BE"].as_f64().unwrap(), 0.0);
    assert_eq!(v["ratio_vs_het"].as_f64().unwrap(), 1.0);
    let v = json(&cvqkd(&["point", "--receiver", "pgm", "--distance", "5", "--budget", "quick"], &[]));
    assert!(v["ratio_vs_het"].as_f64().unwrap() > 1.4);
    assert_eq!(v["seed"], 0);
}

#[test]
fn configuration_errors_exit_one() {
    for args in [
        vec!["point", "--beta", "2"],
        vec!["point", "--budget", "lavish"],
        vec!["sweep", "--d-min", "10", "--d-max", "0"],
        vec!["sweep", "--receiver", "ff:2"],
        vec!["wigner", "--receiver", "het"],
        vec!["nonsense"],
    ] {
        let out = cvqkd(&args, &[]);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "colour = red\n").unwrap();
    let out = cvqkd(&["point", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_two() {
    // 900 km leaves T ~ 1e-18, below the Gram singularity floor
    let out = cvqkd(&["point", "--receiver", "pgm", "--distance", "900", "--budget", "quick"], &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("missing").join("out.csv");
    let out = cvqkd(
        &["sweep", "--d-max", "0", "--receiver", "het", "--budget", "quick", "--out", bad.to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_environment_and_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "beta = 0.8\nbudget = quick\ndistance = 5\nreceivers = pgm\n").unwrap();
    let c = cfg.to_str().unwrap();
    let beta = |out: Output| json(&out)["beta"].as_f64().unwrap();

    assert_eq!(beta(cvqkd(&["point", "--config", c], &[])), 0.8);
    assert_eq!(beta(cvqkd(&["point", "--config", c], &[("CVQKD_BETA", "0.85")])), 0.85);
    assert_eq!(beta(cvqkd(&["point", "--config", c, "--beta", "0.9"], &[("CVQKD_BETA", "0.85")])), 0.9);
    assert_eq!(beta(cvqkd(&["point"], &[("CVQKD_CONFIG", c)])), 0.8);

    let v = json(&cvqkd(&["point", "--config", c], &[]));
    assert_eq!(v["d"], 5.0);
    assert_eq!(v["receiver"], "pgm");
}

#[test]
fn wigner_map_shows_negativity() {
    let v = json(&cvqkd(
        &["wigner", "--receiver", "pgm", "--distance", "30", "--format", "json", "--nodes", "161"],
        &[],
    ));
    let d = &v["diagnostics"];
    assert!(d["min_W"].as_f64().unwrap() < 0.0);
    assert!(d["imaginary_residue"].as_f64().unwrap() < 1e-10);
    assert_eq!(v["W"].as_array().unwrap().len(), 161);
    assert_eq!(d["receiver"], "pgm");
}

#[test]
fn vacuum_map_integrates_to_four() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vac.csv");
    let out = cvqkd(&["wigner", "--vacuum", "--out", path.to_str().unwrap()], &[]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1 + 321 * 321);
    let meta: Value = serde_json::from_slice(&std::fs::read(format!("{}.meta.json", path.display())).unwrap()).unwrap();
    assert!((meta["integral"].as_f64().unwrap() - 4.0).abs() < 1e-4);
    assert!(!meta["boundary_warning"].as_bool().unwrap());
}

#[test]
fn selftest_passes() {
    let out = cvqkd(&["selftest", "--seed", "3"], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}
