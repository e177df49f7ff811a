use std::path::Path;
use std::process::Command;

use proptest::prelude::*;

use rmor::linalg::{svd_thin, DenseMatrix};
use rmor::pod::SnapshotMatrix;

use rmor_cli::config::{Method, RunConfig, TestId};
use rmor_cli::harness::{cmd_bench, cmd_simulate, BenchReport};
use rmor_cli::io::{load_matrix_csv, load_snapshots, save_matrix_csv, save_snapshots};

fn small(out: &Path) -> RunConfig {
    RunConfig {
        test: TestId::Parabolic,
        grid: 10,
        snapshots: 60,
        rank: 4,
        nl_rank: 4,
        out: out.to_path_buf(),
        ..Default::default()
    }
}

fn errors(report: &BenchReport) -> Vec<Option<f64>> {
    report.rows.iter().map(|r| r.rel_frob_err).collect()
}

#[test]
fn pod_at_numerical_rank_reproduces_the_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small(dir.path());
    let states = rmor_cli::harness::prepare(&config).unwrap().snapshots.states;
    config.rank = svd_thin(states.data()).unwrap().numerical_rank();
    config.methods = vec![Method::Pod];
    let report = cmd_bench(&config).unwrap();
    let err = report.row(Method::Pod).unwrap().rel_frob_err.unwrap();
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn bench_is_reproducible_and_cpod_tracks_pod() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path());
    let a = cmd_bench(&config).unwrap();
    let b = cmd_bench(&config).unwrap();
    assert_eq!(errors(&a), errors(&b));
    assert_eq!(a.failures(), 0);
    let pod = a.row(Method::Pod).unwrap().rel_frob_err.unwrap();
    let cpod = a.row(Method::Cpod).unwrap().rel_frob_err.unwrap();
    assert!(cpod <= 2.0 * pod, "{cpod} vs {pod}");
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + Method::ALL.len());
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("bench.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), Method::ALL.len());
}

#[test]
fn simulated_snapshots_feed_later_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path());
    cmd_simulate(&config).unwrap();
    let fresh = cmd_bench(&config).unwrap();
    let reused = cmd_bench(&RunConfig {
        input: Some(dir.path().to_path_buf()),
        ..config
    })
    .unwrap();
    assert_eq!(errors(&fresh), errors(&reused));
}

#[test]
fn matrix_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let m = DenseMatrix::from_fn(7, 3, |i, j| (i as f64 - 2.5) * 10f64.powi(j as i32 - 1) + 1e-17);
    save_matrix_csv(&path, &m).unwrap();
    assert_eq!(load_matrix_csv(&path).unwrap(), m);
}

fn rmor() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rmor"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let ok = rmor()
        .args(["bench", "--grid", "8", "--snapshots", "30", "--rank", "3", "--nl-rank", "3", "--out", out])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(dir.path().join("bench.csv").exists());

    let bad = rmor().args(["bench", "--rank", "0", "--out", out]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let bad = rmor().args(["rom", "--methods", "SVD", "--out", out]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));

    // DMD at a rank above the data's numerical rank fails and is recorded.
    let failed = rmor()
        .args(["bench", "--grid", "4", "--snapshots", "40", "--rank", "30", "--methods", "DMD", "--out", out])
        .output()
        .unwrap();
    assert_eq!(failed.status.code(), Some(1));
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert!(csv.contains("error"), "{csv}");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"grid": 8, "snapshots": 30, "rank": 3, "nl_rank": 3, "dims": [40, 80]}"#).unwrap();
    let out = dir.path().join("scaling");
    let run = rmor()
        .args(["scaling", "--config", cfg.to_str().unwrap(), "--dims", "60", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let csv = std::fs::read_to_string(out.join("scaling.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("60,"));
}

#[test]
fn elliptic_bench_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        test: TestId::Elliptic,
        grid: 10,
        snapshots: 25,
        rank: 5,
        nl_rank: 5,
        held_out: 3,
        methods: vec![Method::Pod, Method::PodDeim],
        out: dir.path().to_path_buf(),
        ..Default::default()
    };
    let report = cmd_bench(&config).unwrap();
    assert_eq!(report.failures(), 0);
    assert!(report.rows.iter().all(|r| r.rel_frob_err.unwrap() < 5e-2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn snapshot_files_round_trip(
        n in 1usize..12,
        m in 1usize..8,
        seed in any::<u64>(),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.rmor");
        let mut state = seed;
        let data = DenseMatrix::from_fn(n, m, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            f64::from_bits((state >> 12) | 0x3ff0_0000_0000_0000) - 1.5
        });
        let snap = SnapshotMatrix::from_times(data, (0..m).map(|j| 0.5 * j as f64).collect()).unwrap();
        save_snapshots(&path, &snap).unwrap();
        let back = load_snapshots(&path).unwrap();
        prop_assert_eq!(back.data(), snap.data());
        prop_assert_eq!(back.weights(), snap.weights());
    }
}
