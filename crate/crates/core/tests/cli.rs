use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bandlab(args: &[&str], config: Option<(&Path, &str)>) -> Output {
    if let Some((path, text)) = config {
        fs::write(path, text).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_bandlab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_writes_documented_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let out = dir.path().join("out");
    let o = bandlab(
        &[
            "solve",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        Some((
            &cfg,
            r#"{"grid": {"x_min": 0.5, "x_max": 3.5, "x_count": 7, "eta": 0.01}}"#,
        )),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let text = fs::read_to_string(out.join("result.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "bandlab/solve@1,x,eta,re_m,im_m,density,residual,iterations,converged"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 7);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row[0], k.to_string());
        assert_eq!(row[8], "true");
        let x: f64 = row[1].parse().unwrap();
        let im_m: f64 = row[4].parse().unwrap();
        let density: f64 = row[5].parse().unwrap();
        assert!((x - (0.5 + 0.5 * k as f64)).abs() < 1e-12);
        assert!((density - im_m / std::f64::consts::PI).abs() < 1e-15);
        assert!(row[6].parse::<f64>().unwrap() < 1e-12);
    }

    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["schema"], "bandlab/manifest@1");
    assert_eq!(manifest["mode"], "solve");
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["config"]["grid"]["x_count"], 7);
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["non_converged"], 0);
}

#[test]
fn manifest_replays_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let text = r#"{"n": 80, "bandwidth": {"fixed": 6}, "h": [[1.0, 0.5], [4.0, 0.5]],
                  "dist": "rademacher", "grid": {"x_min": 0, "x_max": 6, "x_count": 13, "eta": 0.2}}"#;
    let o = bandlab(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            a.to_str().unwrap(),
            "--seed",
            "5",
        ],
        Some((&cfg, text)),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = a.join("manifest.json");
    let o = bandlab(
        &[
            "simulate",
            "--config",
            manifest.to_str().unwrap(),
            "--out",
            b.to_str().unwrap(),
            "--threads",
            "2",
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["result.csv", "eigenvalues.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(read_json(&b.join("manifest.json"))["seed"], 5);

    let eig = fs::read_to_string(a.join("eigenvalues.csv")).unwrap();
    assert_eq!(eig.lines().count(), 81);
    let trace: f64 = eig
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    let summary = read_json(&a.join("summary.json"));
    assert!((trace - summary["trace"].as_f64().unwrap()).abs() < 1e-9 * trace);
}

#[test]
fn seed_changes_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let text = r#"{"n": 40, "bandwidth": {"fixed": 3}, "grid": {"x_min": 0, "x_max": 4, "x_count": 5, "eta": 0.5}}"#;
    fs::write(&cfg, text).unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = bandlab(
            &[
                "simulate",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                seed,
            ],
            None,
        );
        assert!(o.status.success());
        fs::read(out.join("eigenvalues.csv")).unwrap()
    };
    assert_ne!(run("1", "s1"), run("2", "s2"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let out = dir.path().join("out");
    let (cfg_s, out_s) = (cfg.to_str().unwrap(), out.to_str().unwrap());

    let o = bandlab(
        &["solve", "--config", cfg_s, "--out", out_s],
        Some((&cfg, r#"{"sigmaa": 1}"#)),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigmaa"));

    let o = bandlab(
        &["verify", "--config", cfg_s, "--out", out_s],
        Some((&cfg, r#"{"n": 20}"#)),
    );
    assert_eq!(o.status.code(), Some(2));

    let o = bandlab(&["solve", "--tol=0", "--out", out_s], None);
    assert_eq!(o.status.code(), Some(2));

    let missing = dir.path().join("missing.json");
    let o = bandlab(&["solve", "--config", missing.to_str().unwrap(), "--out", out_s], None);
    assert_eq!(o.status.code(), Some(4));

    let o = bandlab(
        &["solve", "--config", cfg_s, "--out", out_s],
        Some((
            &cfg,
            r#"{"max_iter": 2, "grid": {"x_min": 0.5, "x_max": 3.5, "x_count": 4, "eta": 0.001}}"#,
        )),
    );
    assert_eq!(o.status.code(), Some(3));
    let text = fs::read_to_string(out.join("result.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",false")));
    let manifest = read_json(&out.join("manifest.json"));
    assert!(manifest["status"].as_str().unwrap().contains("did not converge"));
}

#[test]
fn verify_writes_pass_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let out = dir.path().join("out");
    let o = bandlab(
        &[
            "verify",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        Some((
            &cfg,
            r#"{"n": 40, "bandwidth": {"fixed": 4}, "h": [[1.0, 0.5], [4.0, 0.5]], "trials": 5,
                "check": {"kind": "truncation", "alpha": 1.5}}"#,
        )),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["truncated"], 20);
    let text = fs::read_to_string(out.join("result.csv")).unwrap();
    assert!(text.starts_with("bandlab/verify-truncation@1,trial,distance,bound,within_bound\n"));
    assert_eq!(text.lines().count(), 6);
}
