use std::fs;
use std::path::{Path, PathBuf};

use invlab::bundle::{BUNDLE_HASH, INDEX, REPORTS};
use invlab::config::Config;
use invlab::execute::RunStatus;
use invlab::plan::{plan_sweep, SweepPlan};
use invlab::sweep::{analyze_stored, run_sweep, ExecOptions, SweepOutcome, MANIFEST};

const SMALL: &str = "\
[sweep]
viscosities = 2e-2, 1e-2, 5e-3
euler = true
t_end = 0.1
cadence = 0.01
dt = 0.01
seed = 3

[domain]
n = 16

[initial]
kind = random
kmax = 3
";

fn plan(text: &str, out: &Path) -> SweepPlan {
    plan_sweep(&Config::parse(text).unwrap(), out.to_path_buf()).unwrap()
}

fn sweep(text: &str, out: &Path, workers: usize, resume: bool) -> SweepOutcome {
    run_sweep(&plan(text, out), ExecOptions { workers, resume }).unwrap()
}

/// Every file under `reports/` plus the index, by relative path.
fn report_files(out: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<(PathBuf, Vec<u8>)> = fs::read_dir(out.join(REPORTS))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.strip_prefix(out).unwrap().to_path_buf(), fs::read(&p).unwrap())
        })
        .collect();
    files.push((INDEX.into(), fs::read(out.join(INDEX)).unwrap()));
    files.sort();
    files
}

fn first_snapshot(out: &Path, run: &str) -> PathBuf {
    let mut snaps: Vec<PathBuf> = fs::read_dir(out.join("runs").join(run))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "ivlb"))
        .collect();
    snaps.sort();
    snaps.remove(0)
}

#[test]
fn reruns_are_byte_identical_for_any_worker_count() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = sweep(SMALL, a.path(), 1, false);
    let second = sweep(SMALL, b.path(), 3, false);
    assert!(!first.partial());
    assert_eq!(first.bundle.hash, second.bundle.hash);
    assert_eq!(report_files(a.path()), report_files(b.path()));
    let stored = fs::read_to_string(a.path().join(BUNDLE_HASH)).unwrap();
    assert_eq!(stored.trim(), first.bundle.hash);

    let reseeded = SMALL.replace("seed = 3", "seed = 4");
    let c = tempfile::tempdir().unwrap();
    assert_ne!(sweep(&reseeded, c.path(), 2, false).bundle.hash, first.bundle.hash);
}

#[test]
fn resume_reuses_intact_runs_and_recomputes_damaged_ones() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let fresh = sweep(SMALL, out, 2, false);
    let ids: Vec<String> = fresh.records.iter().map(|r| r.run.id.clone()).collect();

    let resumed = sweep(SMALL, out, 2, true);
    assert!(resumed.records.iter().all(|r| r.resumed));
    assert_eq!(resumed.bundle.hash, fresh.bundle.hash);

    // A flipped payload byte fails the checksum; a missing manifest marks
    // a run interrupted before completion.
    let snap = first_snapshot(out, &ids[0]);
    let mut bytes = fs::read(&snap).unwrap();
    bytes[80] ^= 1;
    fs::write(&snap, bytes).unwrap();
    fs::remove_file(out.join("runs").join(&ids[2]).join(MANIFEST)).unwrap();

    let repaired = sweep(SMALL, out, 2, true);
    let reused: Vec<bool> = repaired.records.iter().map(|r| r.resumed).collect();
    assert_eq!(reused, vec![false, true, false, true]);
    assert_eq!(repaired.bundle.hash, fresh.bundle.hash);

    // A different configuration never reuses stored runs.
    let other = SMALL.replace("t_end = 0.1", "t_end = 0.05");
    assert!(sweep(&other, out, 2, true).records.iter().all(|r| !r.resumed));
}

#[test]
fn analysis_of_stored_snapshots_matches_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let fresh = sweep(SMALL, dir.path(), 2, false);
    let files = report_files(dir.path());
    let again = analyze_stored(&plan(SMALL, dir.path()), 2).unwrap();
    assert_eq!(again.bundle.hash, fresh.bundle.hash);
    assert_eq!(report_files(dir.path()), files);
}

#[test]
fn missing_runs_make_the_analysis_partial() {
    let dir = tempfile::tempdir().unwrap();
    let fresh = sweep(SMALL, dir.path(), 2, false);
    let id = &fresh.records[1].run.id;
    fs::remove_dir_all(dir.path().join("runs").join(id)).unwrap();
    let again = analyze_stored(&plan(SMALL, dir.path()), 2).unwrap();
    assert!(again.partial());
    assert!(matches!(again.records[1].status, RunStatus::Missing(_)));
    assert!(again.bundle.index.partial);
    assert_eq!(again.bundle.index.runs[1].status, "missing");
}

#[test]
fn single_run_has_no_cross_run_tables() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("viscosities = 2e-2, 1e-2, 5e-3", "viscosities = 1e-2").replace("euler = true", "euler = false");
    let out = sweep(&text, dir.path(), 1, false);
    assert!(!out.partial());
    assert_eq!(out.records.len(), 1);
    for name in ["runs.csv", "diagnostics.csv", "weak.csv", "structure.csv"] {
        assert!(out.bundle.table(name).is_some(), "{name}");
    }
    for name in ["cross_distance.csv", "euler_distance.csv", "weak_series.csv", "nphi_deltas.csv"] {
        assert!(out.bundle.table(name).is_none(), "{name}");
        assert!(!dir.path().join(REPORTS).join(name).exists(), "{name}");
    }
}

#[test]
fn blow_up_is_recorded_and_the_bundle_marked_partial() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("kmax = 3", "kmax = 3\namplitude = 1e9");
    let out = sweep(&text, dir.path(), 2, false);
    assert!(out.partial());
    assert!(out.records.iter().all(|r| matches!(r.status, RunStatus::Failed(_))));
    let index: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join(INDEX)).unwrap()).unwrap();
    assert_eq!(index["partial"], true);
    assert_eq!(index["runs"][0]["status"], "failed");
    assert!(index["runs"][0]["detail"].as_str().unwrap().contains("blow-up"));
}

#[test]
fn channel_sweep_writes_kato_tables() {
    let dir = tempfile::tempdir().unwrap();
    let text = "\
[sweep]
geometry = channel
viscosities = 1e-2, 5e-3
t_end = 0.1
cadence = 0.02
dt = 2e-3

[domain]
nx = 8
ny = 32
";
    let out = sweep(text, dir.path(), 2, false);
    assert!(!out.partial());
    let kato = out.bundle.table("kato.csv").unwrap();
    assert_eq!(kato.rows.len(), 2);
    let strips = out.bundle.table("kato_strips.csv").unwrap();
    assert_eq!(strips.rows.len(), 2 * 3);
    assert!(out.bundle.table("weak.csv").is_none());
}
