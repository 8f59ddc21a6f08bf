use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

/// Runs the binary with `cmdline` split on whitespace.
fn trajanon(cmdline: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trajanon"))
        .args(cmdline.split_whitespace())
        .output()
        .expect("binary runs")
}

fn ok(cmdline: &str) -> Output {
    let out = trajanon(cmdline);
    assert!(
        out.status.success(),
        "{cmdline} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_run_compare() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.csv");
    let corpus = corpus.display();
    ok(&format!("synth --out {corpus} --trajectories 40 --users 8 --seed 3"));

    let plain = dir.path().join("plain");
    let parted = dir.path().join("parted");
    let common = format!("run --input {corpus} --format csv --k 2 --height 8 --seed 1");
    let out = ok(&format!("{common} --out-dir {}", plain.display()));
    let stdout: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stdout["k"], 2);
    ok(&format!(
        "{common} --partition on --m 5 --labels --sample-size 1,3 --threads 2 --out-dir {}",
        parted.display()
    ));

    for d in [&plain, &parted] {
        let report = json(&d.join("report.json"));
        assert_eq!(report["attack_success_rate"], 0.0);
        assert!(report["min_cluster_size"].as_u64().unwrap() >= 2);
        let attack = json(&d.join("attack.json"));
        for a in attack.as_array().unwrap() {
            for key in ["k", "sample_size", "seed", "success_rate", "per_user"] {
                assert!(a.get(key).is_some(), "attack.json lacks {key}");
            }
        }
        let published = fs::read_to_string(d.join("published.csv")).unwrap();
        assert!(published.starts_with("pseudonym,seq,x_node,y_node,lon_lo,lon_hi,lat_lo,lat_hi\n"));
    }
    assert!(!plain.join("labels.csv").exists());
    assert!(parted.join("labels.csv").exists());
    let parted_report = json(&parted.join("report.json"));
    assert_eq!(parted_report["partition"], true);
    assert_eq!(parted_report["threads"], 2);
    assert_eq!(parted_report["attack"].as_array().unwrap().len(), 2);

    let (ra, rb) = (plain.join("report.json"), parted.join("report.json"));
    let cmp = ok(&format!("compare {} {}", ra.display(), rb.display()));
    let table = String::from_utf8(cmp.stdout).unwrap();
    assert!(table.contains("loss per cluster"), "{table}");

    let cmp = ok(&format!("compare --json {} {}", ra.display(), ra.display()));
    let v: Value = serde_json::from_slice(&cmp.stdout).unwrap();
    assert_eq!(v["total_reduction_pct"], 0.0);
}

#[test]
fn kmeans_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.csv");
    ok(&format!("synth --out {} --trajectories 24 --users 6", corpus.display()));
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        ok(&format!(
            "run --input {} --format csv --k 3 --algo kmeans --height 7 --seed 9 --out-dir {}",
            corpus.display(),
            out.display()
        ));
        let mut r = json(&out.join("report.json"));
        r["stage_seconds"] = Value::Null;
        reports.push((r, fs::read_to_string(out.join("published.csv")).unwrap()));
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0].0["algorithm"], "iterative-kmeans");
}

#[test]
fn plt_and_taxi_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let header = "Geolife trajectory\nWGS 84\nAltitude is in Feet\nReserved 3\n0,2,255,My Track,0,0,2,8421376\n0\n";
    for user in ["000", "001", "002"] {
        let traj_dir = dir.path().join("Data").join(user).join("Trajectory");
        fs::create_dir_all(&traj_dir).unwrap();
        let mut body = header.to_string();
        for i in 0..4 {
            body.push_str(&format!(
                "39.99{i}5,116.30{i}5,0,100,39000.0,2008-10-23,02:53:{:02}\n",
                i * 5
            ));
        }
        fs::write(traj_dir.join("20081023025304.plt"), body).unwrap();
    }
    let out = ok(&format!(
        "run --input {} --format plt-dir --k 3 --out-dir {}",
        dir.path().join("Data").display(),
        dir.path().join("o1").display()
    ));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["trajectories_before_partition"], 3);
    assert_eq!(r["total_information_loss"], 0);

    let taxi = dir.path().join("taxi.txt");
    let mut rows = String::new();
    for id in 1..=2 {
        for s in 0..3 {
            rows.push_str(&format!("{id},2008-02-02 15:3{s}:00,116.30{s}1,39.99{s}1\n"));
        }
    }
    fs::write(&taxi, rows).unwrap();
    let out = ok(&format!(
        "run --input {} --format taxi-log --k 2 --out-dir {}",
        taxi.display(),
        dir.path().join("o2").display()
    ));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["cluster_count"], 1);
}

#[test]
fn errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.csv");
    ok(&format!("synth --out {} --trajectories 3 --users 3", corpus.display()));
    let o = dir.path().join("o");
    let run = |rest: &str| {
        trajanon(&format!(
            "run --input {} --format csv --out-dir {} {rest}",
            corpus.display(),
            o.display()
        ))
    };

    let out = run("--k 5");
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
    assert!(!run("--k 1").status.success());
    assert!(!run("--k 2 --bbox 1,0,0,1").status.success());

    let out = trajanon("run --input /nonexistent.csv --format csv --k 2");
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonexistent"));

    assert!(run("--k 2").status.success());
    let a = dir.path().join("a.json");
    let mut r = json(&o.join("report.json"));
    fs::write(&a, r.to_string()).unwrap();
    r["k"] = 4.into();
    let b = dir.path().join("b.json");
    fs::write(&b, r.to_string()).unwrap();
    let out = trajanon(&format!("compare {} {}", a.display(), b.display()));
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("k differs"));
}
