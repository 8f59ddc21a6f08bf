use std::collections::BTreeSet;
use std::fs::File;

use trajanon::pipeline::{run, run_dataset};
use trajanon::synthetic::{road_network_tracks, SyntheticConfig};
use trajanon::trajectory::{build_dataset, read_csv, write_csv, DEFAULT_MIN_LEN};
use trajanon::{Algorithm, BoundingBox, InputFormat, PartitionConfig, RunConfig, RunReport, TrajId};

fn corpus(n: usize, seed: u64, height: u32) -> Vec<trajanon::Trajectory> {
    let bbox = BoundingBox::default();
    let cfg = SyntheticConfig {
        trajectories: n,
        users: n / 3,
        seed,
        ..Default::default()
    };
    let tracks = road_network_tracks(&bbox, &cfg).unwrap();
    build_dataset(&tracks, &bbox, &bbox.grids(height).unwrap(), DEFAULT_MIN_LEN)
}

fn member_sets(clusters: &[trajanon::Cluster]) -> BTreeSet<BTreeSet<TrajId>> {
    clusters.iter().map(|c| c.member_ids.clone()).collect()
}

#[test]
fn uniform_labels_leave_clusters_unchanged() {
    let data = corpus(30, 5, 8);
    for algorithm in [Algorithm::AdaptiveDbscan, Algorithm::IterativeKmeans] {
        let mut cfg = RunConfig::new("", InputFormat::Csv, 3);
        cfg.height = 8;
        cfg.algorithm = algorithm;
        let off = run_dataset(&data, &cfg).unwrap();
        cfg.partition = Some(PartitionConfig {
            m: 1,
            ..PartitionConfig::for_bbox(&cfg.bbox)
        });
        let on = run_dataset(&data, &cfg).unwrap();

        // One label everywhere: one segment per trajectory, real points only.
        assert_eq!(on.trajectories.len(), data.len());
        for (seg, orig) in on.trajectories.iter().zip(&data) {
            assert_eq!(seg.points, orig.points);
        }
        assert_eq!(member_sets(&on.clusters), member_sets(&off.clusters), "{algorithm}");
        assert_eq!(on.report.total_information_loss, off.report.total_information_loss);
    }
}

#[test]
fn file_run_writes_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(45, 2, 9);
    let input = dir.path().join("in.csv");
    write_csv(File::create(&input).unwrap(), &data).unwrap();

    let mut cfg = RunConfig::new(&input, InputFormat::Csv, 3);
    cfg.height = 9;
    cfg.seed = 4;
    cfg.partition = Some(PartitionConfig::for_bbox(&cfg.bbox));
    cfg.out_dir = Some(dir.path().join("out"));
    cfg.write_labels = true;
    let report = run(&cfg).unwrap();

    let out = dir.path().join("out");
    let saved: RunReport = serde_json::from_reader(File::open(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(saved, report);
    assert_eq!(report.trajectories_before_partition, data.len());
    assert!(report.trajectories_after_partition >= data.len());
    assert!(report.min_cluster_size >= 3);
    assert_eq!(report.attack_success_rate, 0.0);
    let avg = report.total_information_loss as f64 / report.cluster_count as f64;
    assert!((report.avg_loss_per_cluster - avg).abs() < 1e-9);

    let mut published = csv::Reader::from_path(out.join("published.csv")).unwrap();
    let pseudonyms: BTreeSet<u32> = published.records().map(|r| r.unwrap()[0].parse().unwrap()).collect();
    assert_eq!(pseudonyms.len(), report.trajectories_after_partition);

    let labels = csv::Reader::from_path(out.join("labels.csv"))
        .unwrap()
        .into_records()
        .count();
    assert!(labels >= data.iter().map(|t| t.points.len()).sum::<usize>());

    // The CSV round trip feeds the same dataset back in.
    let again = read_csv(File::open(&input).unwrap(), &cfg.bbox.grids(9).unwrap()).unwrap();
    assert_eq!(again, data);
}

#[test]
fn errors_carry_stage_labels() {
    let mut cfg = RunConfig::new("/definitely/missing.csv", InputFormat::Csv, 2);
    let err = run(&cfg).unwrap_err().to_string();
    assert!(err.starts_with("ingest:"), "{err}");

    cfg.partition = Some(PartitionConfig {
        m: 10_000,
        ..PartitionConfig::for_bbox(&cfg.bbox)
    });
    let err = run_dataset(&corpus(6, 0, 10), &cfg).unwrap_err().to_string();
    assert!(err.starts_with("partition:"), "{err}");
}
