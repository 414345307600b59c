use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nabfront(workdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nabfront"))
        .arg("--workdir")
        .arg(workdir)
        .args(args)
        .output()
        .expect("spawn nabfront")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const SMALL_SIM: &str = "n = 4\ntau = 100\nt_end = 150\ncheckpoints = 3 # log spaced\n";

#[test]
fn params_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = nabfront(dir.path(), &["params"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.starts_with("name,value\n"));
    assert!(s.contains("gamma,1/9\n"));
    assert!(s.contains("delta,2/1\n"));

    let o = nabfront(dir.path(), &["params", "--n", "6", "--format", "json"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["n"], 6);
    assert!((v["delta_prime"].as_f64().unwrap() - 4.2).abs() < 1e-12);
}

#[test]
fn unsupported_order_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["params", "--n", "3"][..],
        &["pipeline", "--n", "3"],
        &["profile", "eta", "--n", "2"],
    ] {
        let o = nabfront(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).contains("n >= 4"), "{}", stderr(&o));
    }
    // nothing was solved or cached
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn bad_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = nabfront(dir.path(), &["params", "--format", "xml"]);
    assert_eq!(o.status.code(), Some(2));
    let o = nabfront(dir.path(), &["front", "--scale", "sideways"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn profiles_are_cached_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let eta = dir.path().join("out/eta.csv");
    let o = nabfront(
        dir.path(),
        &[
            "profile",
            "eta",
            "--out",
            eta.to_str().unwrap(),
            "--threads",
            "1",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let archive = dir.path().join("profiles_n4.archive");
    assert!(archive.exists());
    let text = std::fs::read_to_string(&eta).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("z [1],eta [1],eta_z [1],eta_zz [1]"));
    let first: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|c| c.parse().unwrap())
        .collect();
    assert_eq!(first[0], 0.0);
    assert_eq!(first[2], -1.0 / std::f64::consts::PI.sqrt());
    let side: Value =
        serde_json::from_str(&std::fs::read_to_string(eta.with_extension("json")).unwrap())
            .unwrap();
    assert_eq!(side["schema"], 1);
    assert_eq!(side["eta0"].as_f64(), Some(first[1]));

    let before = std::fs::read(&archive).unwrap();
    let a = nabfront(dir.path(), &["profile", "phi2", "--threads", "1"]);
    let fresh = tempfile::tempdir().unwrap();
    let b = nabfront(fresh.path(), &["profile", "phi2", "--threads", "3"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(std::fs::read(&archive).unwrap(), before);
    assert_eq!(
        std::fs::read(fresh.path().join("profiles_n4.archive")).unwrap(),
        before
    );
}

#[test]
fn mu2_front_and_inhomo() {
    let dir = tempfile::tempdir().unwrap();
    let o = nabfront(dir.path(), &["profile", "mu2", "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["columns"][1], "m");
    assert!(v["meta"]["xi_star"].as_f64().unwrap() > 0.0);

    let o = nabfront(
        dir.path(),
        &["front", "--scale", "diffusive", "--points", "4"],
    );
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(s.lines().count(), 5);
    assert!(s.starts_with("y [1],front [1]\n"));

    let o = nabfront(
        dir.path(),
        &["inhomo", "--t-list", "1e2,1e3,1e4", "--format", "json"],
    );
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let slope = v["meta"]["slope"].as_f64().unwrap();
    assert!((slope + 13.0 / 9.0).abs() < 0.1, "slope {slope}");
}

#[test]
fn assemble_and_potential() {
    let dir = tempfile::tempdir().unwrap();
    let o = nabfront(dir.path(), &["assemble", "--t", "100", "--points", "11"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.starts_with("x [1],ubar [1],phi [1],v_inf [1]\n"));
    assert_eq!(s.lines().count(), 12);
    let o = nabfront(dir.path(), &["assemble", "--t", "0.5"]);
    assert_eq!(o.status.code(), Some(2));

    let o = nabfront(
        dir.path(),
        &[
            "potential",
            "--t",
            "100",
            "--points",
            "50",
            "--format",
            "json",
        ],
    );
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 50);
    assert_eq!(v["meta"]["scan"]["points"], 50);
}

#[test]
fn simulate_writes_report_and_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    std::fs::write(&cfg, SMALL_SIM).unwrap();
    let report = dir.path().join("report.json");
    let fields = dir.path().join("fields.csv");
    let o = nabfront(
        dir.path(),
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
            "--fields",
            fields.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(r["schema"].as_u64().is_some());
    let cps = r["checkpoints"].as_array().unwrap();
    assert_eq!(cps.len(), 3);
    let f = std::fs::read_to_string(&fields).unwrap();
    assert!(f.starts_with("t [1],x [1],v [1],v_inf [1],front [1]\n"));
    let points = r["points"].as_u64().unwrap() as usize;
    assert_eq!(f.lines().count(), 1 + 3 * points);
}

#[test]
fn simulate_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    std::fs::write(&cfg, "n = 4\nspeed = 3\n").unwrap();
    let o = nabfront(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("speed"));

    std::fs::write(&cfg, SMALL_SIM).unwrap();
    let o = nabfront(
        dir.path(),
        &["--n", "5", "simulate", "--config", cfg.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2));

    let o = nabfront(
        dir.path(),
        &["simulate", "--config", "/nonexistent/sim.cfg"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn corrupt_archive_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    assert!(nabfront(dir.path(), &["profile", "eta"]).status.success());
    let path = dir.path().join("profiles_n4.archive");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    let o = nabfront(dir.path(), &["profile", "eta"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("byte"), "{}", stderr(&o));
}

#[test]
fn pipeline_caches_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    std::fs::write(&cfg, SMALL_SIM).unwrap();
    let args = ["pipeline", "--config", cfg.to_str().unwrap()];
    let first = nabfront(dir.path(), &args);
    // The short run cannot reach its decay window, so a metric fails.
    assert_eq!(first.status.code(), Some(4), "{}", stderr(&first));
    let table = stderr(&first);
    assert!(table.contains("stage eta       ran"));
    assert!(table.contains("slope of log N(t)"));
    let csv = stdout(&first);
    assert!(csv.starts_with("stage,metric,value[1],target,status\n"));
    let archive = std::fs::read(dir.path().join("profiles_n4.archive")).unwrap();

    let second = nabfront(dir.path(), &args);
    assert_eq!(second.status.code(), Some(4));
    let table = stderr(&second);
    for stage in [
        "params", "eta", "mu2", "phi2", "assemble", "inhomo", "simulate",
    ] {
        assert!(
            table.contains(&format!("stage {stage:<9} cached")),
            "{table}"
        );
    }
    assert_eq!(stdout(&second), csv);
    assert_eq!(
        std::fs::read(dir.path().join("profiles_n4.archive")).unwrap(),
        archive
    );

    let json = nabfront(
        dir.path(),
        &[
            "pipeline",
            "--config",
            cfg.to_str().unwrap(),
            "--format",
            "json",
        ],
    );
    let v: Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["all_pass"], false);
}
