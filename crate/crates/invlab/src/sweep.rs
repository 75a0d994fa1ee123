//! Sweep execution: a worker pool over runs under a memory budget, snapshot
//! persistence with per-run manifests, resume, and the analysis passes.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze_run, analyze_sweep, Analysis, SweepAnalysis};
use crate::bundle::{write_bundle, BundleSummary};
use crate::error::{io_at, InvlabError, Result};
use crate::execute::{simulate, trajectory_from, RunStatus};
use crate::plan::{RunPlan, SweepPlan};
use crate::report::{blob_hash, tree_hash};
use crate::snapshot::{persist_snapshot, Snapshot};

pub const MANIFEST: &str = "manifest.json";

/// One stored snapshot of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub file: String,
    pub t: f64,
    /// Git-style blob hash of the file.
    pub blob: String,
}

/// Written after every snapshot of a run is on disk; its presence with
/// matching checksums marks the run as reusable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub id: String,
    pub nu: f64,
    pub nx: usize,
    pub ny: usize,
    pub config_hash: String,
    pub status: String,
    pub detail: String,
    pub content_hash: String,
    pub snapshots: Vec<SnapshotEntry>,
}

/// Outcome of one run after its analysis pass.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run: RunPlan,
    pub status: RunStatus,
    /// Tree hash over the run's snapshot blobs.
    pub content_hash: String,
    pub snapshots: Vec<SnapshotEntry>,
    /// `None` for failed or missing runs, or when analysis itself failed
    /// (see `analysis_error`).
    pub analysis: Option<Analysis>,
    pub analysis_error: Option<String>,
    /// Reused from disk rather than recomputed.
    pub resumed: bool,
}

impl RunRecord {
    /// Complete and analysed.
    pub fn usable(&self) -> bool {
        self.status == RunStatus::Complete && self.analysis.is_some()
    }
}

/// Result of a sweep or of a re-analysis.
#[derive(Debug)]
pub struct SweepOutcome {
    pub records: Vec<RunRecord>,
    pub sweep: SweepAnalysis,
    pub bundle: BundleSummary,
}

impl SweepOutcome {
    /// Some run failed, is missing, or could not be analysed.
    pub fn partial(&self) -> bool {
        self.bundle.partial
    }
}

/// How a sweep is executed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecOptions {
    pub workers: usize,
    /// Reuse runs whose manifest and snapshot checksums are intact.
    pub resume: bool,
}

/// Counting semaphore over bytes. A request larger than the cap waits until
/// nothing else holds the budget and then runs alone.
pub struct MemoryBudget {
    cap: u64,
    used: Mutex<u64>,
    freed: Condvar,
}

pub struct BudgetGuard<'a> {
    budget: &'a MemoryBudget,
    amount: u64,
}

impl MemoryBudget {
    pub fn new(cap: u64) -> MemoryBudget {
        MemoryBudget {
            cap: cap.max(1),
            used: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self, bytes: u64) -> BudgetGuard<'_> {
        let amount = bytes.clamp(1, self.cap);
        let mut used = self.used.lock().expect("budget lock");
        while *used + amount > self.cap {
            used = self.freed.wait(used).expect("budget lock");
        }
        *used += amount;
        BudgetGuard { budget: self, amount }
    }

    pub fn in_use(&self) -> u64 {
        *self.used.lock().expect("budget lock")
    }
}

impl Drop for BudgetGuard<'_> {
    fn drop(&mut self) {
        let mut used = self.budget.used.lock().expect("budget lock");
        *used -= self.amount;
        self.budget.freed.notify_all();
    }
}

fn run_dir(plan: &SweepPlan, run: &RunPlan) -> PathBuf {
    plan.output.join("runs").join(&run.id)
}

fn read_manifest(dir: &Path) -> Option<RunManifest> {
    let text = fs::read(dir.join(MANIFEST)).ok()?;
    serde_json::from_slice(&text).ok()
}

/// Loads every snapshot listed in a manifest, verifying each blob hash.
pub fn load_run_snapshots(dir: &Path, manifest: &RunManifest) -> Result<Vec<Snapshot>> {
    let mut out = Vec::with_capacity(manifest.snapshots.len());
    for e in &manifest.snapshots {
        let path = dir.join(&e.file);
        let bytes = fs::read(&path).map_err(io_at(&path))?;
        if blob_hash(&bytes) != e.blob {
            return Err(InvlabError::Invalid(format!("{}: content hash does not match the manifest", path.display())));
        }
        out.push(Snapshot::decode(&bytes)?);
    }
    let names = manifest.snapshots.iter().map(|e| (e.file.as_str(), e.blob.as_str()));
    if tree_hash(names) != manifest.content_hash {
        return Err(InvlabError::Invalid(format!("{}: manifest content hash is inconsistent", dir.display())));
    }
    Ok(out)
}

/// Stored, complete history of `run` if its manifest and every checksum
/// match the current plan.
fn reusable(plan: &SweepPlan, run: &RunPlan) -> Option<(RunManifest, Vec<Snapshot>)> {
    let dir = run_dir(plan, run);
    let m = read_manifest(&dir)?;
    let fits = m.id == run.id
        && m.nu == run.nu
        && m.nx == run.grid.nx
        && m.ny == run.grid.ny
        && m.config_hash == plan.config_hash
        && m.status == RunStatus::Complete.label()
        && m.snapshots.len() == plan.cadence_points();
    if !fits {
        return None;
    }
    let snaps = load_run_snapshots(&dir, &m).ok()?;
    Some((m, snaps))
}

/// Integrates a run and stores it: snapshots first, the manifest last.
fn compute_and_store(plan: &SweepPlan, run: &RunPlan) -> Result<(RunManifest, Vec<Snapshot>, RunStatus)> {
    let dir = run_dir(plan, run);
    fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    let manifest_path = dir.join(MANIFEST);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(io_at(&manifest_path))?;
    }
    let (snaps, status) = simulate(plan, run)?;
    let mut entries = Vec::with_capacity(snaps.len());
    for (k, s) in snaps.iter().enumerate() {
        let file = format!("snap_{k:05}.ivlb");
        let bytes = persist_snapshot(s, &dir.join(&file))?;
        entries.push(SnapshotEntry {
            file,
            t: s.t,
            blob: blob_hash(&bytes),
        });
    }
    let content_hash = tree_hash(entries.iter().map(|e| (e.file.as_str(), e.blob.as_str())));
    let manifest = RunManifest {
        id: run.id.clone(),
        nu: run.nu,
        nx: run.grid.nx,
        ny: run.grid.ny,
        config_hash: plan.config_hash.clone(),
        status: status.label().into(),
        detail: status.detail().into(),
        content_hash,
        snapshots: entries,
    };
    let text = serde_json::to_vec_pretty(&manifest).map_err(|e| InvlabError::Invalid(e.to_string()))?;
    let tmp = dir.join("manifest.json.tmp");
    fs::write(&tmp, text).map_err(io_at(&tmp))?;
    fs::rename(&tmp, &manifest_path).map_err(io_at(&manifest_path))?;
    Ok((manifest, snaps, status))
}

fn analysed(plan: &SweepPlan, run: &RunPlan, manifest: RunManifest, snaps: Vec<Snapshot>, status: RunStatus, resumed: bool) -> RunRecord {
    let (analysis, analysis_error) = if status == RunStatus::Complete {
        match trajectory_from(plan, run, &snaps).and_then(|data| {
            drop(snaps);
            analyze_run(plan, &data)
        }) {
            Ok(a) => (Some(a), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    RunRecord {
        run: run.clone(),
        status,
        content_hash: manifest.content_hash,
        snapshots: manifest.snapshots,
        analysis,
        analysis_error,
        resumed,
    }
}

fn execute_one(plan: &SweepPlan, run: &RunPlan, resume: bool, budget: &MemoryBudget) -> Result<RunRecord> {
    let _guard = budget.acquire(plan.footprint_bytes(run));
    if resume {
        if let Some((m, snaps)) = reusable(plan, run) {
            eprintln!("{}: reusing stored run", run.id);
            return Ok(analysed(plan, run, m, snaps, RunStatus::Complete, true));
        }
    }
    let (m, snaps, status) = compute_and_store(plan, run)?;
    match &status {
        RunStatus::Complete => eprintln!("{}: complete, {} snapshots", run.id, snaps.len()),
        other => eprintln!("{}: {} ({})", run.id, other.label(), other.detail()),
    }
    Ok(analysed(plan, run, m, snaps, status, false))
}

fn finish(plan: &SweepPlan, records: Vec<RunRecord>) -> Result<SweepOutcome> {
    let usable: Vec<_> = records
        .iter()
        .filter(|r| r.usable())
        .map(|r| (&r.run, r.analysis.as_ref().expect("usable run has analysis")))
        .collect();
    let sweep = analyze_sweep(plan, &usable)?;
    let bundle = write_bundle(plan, &records, &sweep)?;
    Ok(SweepOutcome { records, sweep, bundle })
}

/// Executes every run of the plan (in parallel up to `workers`, within the
/// memory budget), runs the analysis passes and writes the report bundle.
/// A failed run is recorded and the sweep continues; the bundle is then
/// marked partial.
pub fn run_sweep(plan: &SweepPlan, options: ExecOptions) -> Result<SweepOutcome> {
    fs::create_dir_all(&plan.output).map_err(io_at(&plan.output))?;
    let budget = MemoryBudget::new(plan.config.sweep.memory_mb.saturating_mul(1 << 20));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| InvlabError::Invalid(format!("worker pool: {e}")))?;
    let results: Vec<Result<RunRecord>> =
        pool.install(|| plan.runs.par_iter().map(|r| execute_one(plan, r, options.resume, &budget)).collect());
    let records = results.into_iter().collect::<Result<Vec<_>>>()?;
    finish(plan, records)
}

/// Re-runs the analysis passes on stored snapshots without integrating.
/// Runs without a valid stored history are reported as missing.
pub fn analyze_stored(plan: &SweepPlan, workers: usize) -> Result<SweepOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| InvlabError::Invalid(format!("worker pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| {
        plan.runs
            .par_iter()
            .map(|run| {
                let dir = run_dir(plan, run);
                let loaded = read_manifest(&dir)
                    .ok_or_else(|| "no manifest".to_string())
                    .and_then(|m| load_run_snapshots(&dir, &m).map(|s| (m, s)).map_err(|e| e.to_string()));
                match loaded {
                    Ok((m, snaps)) => {
                        let status = if m.status == RunStatus::Complete.label() {
                            RunStatus::Complete
                        } else {
                            RunStatus::Failed(m.detail.clone())
                        };
                        analysed(plan, run, m, snaps, status, true)
                    }
                    Err(why) => RunRecord {
                        run: run.clone(),
                        status: RunStatus::Missing(why),
                        content_hash: String::new(),
                        snapshots: Vec::new(),
                        analysis: None,
                        analysis_error: None,
                        resumed: false,
                    },
                }
            })
            .collect()
    });
    finish(plan, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU64, Ordering};
    use std::sync::Arc;

    #[test]
    fn budget_serialises_oversized_requests() {
        let budget = Arc::new(MemoryBudget::new(100));
        let peak = Arc::new(AtomicU64::new(0));
        let handles: Vec<_> = [60u64, 70, 500, 30]
            .into_iter()
            .map(|need| {
                let (b, p) = (budget.clone(), peak.clone());
                std::thread::spawn(move || {
                    let _g = b.acquire(need);
                    p.fetch_max(b.in_use(), Ordering::SeqCst);
                    std::thread::sleep(std::time::Duration::from_millis(20));
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 100);
        assert_eq!(budget.in_use(), 0);
    }
}
