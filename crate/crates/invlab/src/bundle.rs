//! Report bundle: one CSV per table under `reports/`, a JSON index with run
//! metadata and verdicts, and a bundle hash over all of them. Every row
//! carries a run id and the content hash of the snapshots it was computed
//! from; sweep-level rows use the id `sweep` and the tree hash over all runs.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::analysis::{Analysis, CrossDistance, SweepAnalysis};
use crate::error::{io_at, InvlabError, Result};
use crate::execute::RunStatus;
use crate::plan::SweepPlan;
use crate::report::{num, opt_num, sha256_hex, tree_hash, Table};
use crate::sweep::RunRecord;

pub const INDEX: &str = "index.json";
pub const BUNDLE_HASH: &str = "bundle.sha256";
pub const REPORTS: &str = "reports";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunIndex {
    pub id: String,
    pub nu: f64,
    pub nx: usize,
    pub ny: usize,
    pub status: String,
    pub detail: String,
    pub analysis_error: Option<String>,
    pub content_hash: String,
    pub snapshots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableIndex {
    pub file: String,
    pub rows: usize,
    pub sha256: String,
}

/// A pass/fail statement about the sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub check: String,
    /// Region or test function the verdict is about, if any.
    pub subject: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Index {
    pub format: u32,
    pub config_hash: String,
    pub geometry: String,
    pub partial: bool,
    pub sweep_hash: String,
    pub runs: Vec<RunIndex>,
    pub tables: Vec<TableIndex>,
    pub verdicts: Vec<Verdict>,
}

/// What was written.
#[derive(Debug, Clone)]
pub struct BundleSummary {
    pub index: Index,
    /// Tree hash over `index.json` and every table.
    pub hash: String,
    pub partial: bool,
    pub tables: Vec<Table>,
}

impl BundleSummary {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

fn id_hash(r: &RunRecord) -> [String; 3] {
    [r.run.id.clone(), r.content_hash.clone(), num(r.run.nu)]
}

fn with_prefix(prefix: [String; 3], rest: Vec<String>) -> Vec<String> {
    prefix.into_iter().chain(rest).collect()
}

fn runs_table(records: &[RunRecord]) -> Table {
    let mut t = Table::new(
        "runs.csv",
        &["run_id", "content_hash", "nu", "nx", "ny", "status", "detail", "analysis_error", "snapshots", "t_last"],
    );
    for r in records {
        t.push(with_prefix(
            id_hash(r),
            vec![
                r.run.grid.nx.to_string(),
                r.run.grid.ny.to_string(),
                r.status.label().into(),
                r.status.detail().into(),
                r.analysis_error.clone().unwrap_or_default(),
                r.snapshots.len().to_string(),
                r.snapshots.last().map_or_else(String::new, |s| num(s.t)),
            ],
        ));
    }
    t
}

fn torus_tables(plan: &SweepPlan, records: &[RunRecord]) -> Vec<Table> {
    let regions: Vec<&str> = plan.regions.iter().map(|k| k.name.as_str()).collect();
    let mut head = vec!["run_id", "content_hash", "nu", "t", "energy", "enstrophy", "grad_norm_sq"];
    let local: Vec<String> = regions.iter().map(|k| format!("local_enstrophy_{k}")).collect();
    head.extend(local.iter().map(|s| s.as_str()));
    let mut diag = Table::new("diagnostics.csv", &head);

    let mut head = vec!["run_id", "content_hash", "nu", "eps", "eta", "u_rms", "reynolds"];
    let sups: Vec<String> = regions.iter().map(|k| format!("sup_local_enstrophy_{k}")).collect();
    head.extend(sups.iter().map(|s| s.as_str()));
    let mut summary = Table::new("run_summary.csv", &head);

    let mut structure = Table::new("structure.csv", &["run_id", "content_hash", "nu", "region", "rho", "s2", "samples"]);
    let mut scaling = Table::new(
        "scaling.csv",
        &[
            "run_id",
            "content_hash",
            "nu",
            "region",
            "exponent",
            "prefactor",
            "r_min",
            "r_max",
            "points",
            "residual",
            "max_log_residual",
            "error",
        ],
    );
    let mut commutator = Table::new(
        "commutator.csv",
        &["run_id", "content_hash", "nu", "region", "r", "t", "l1", "shell_increment", "ratio"],
    );
    let mut weak = Table::new(
        "weak.csv",
        &[
            "run_id",
            "content_hash",
            "nu",
            "phi",
            "time_term",
            "n_phi",
            "forcing_term",
            "residual",
            "viscous",
            "relative_gap",
            "warnings",
        ],
    );
    for r in records {
        let Some(Analysis::Torus(a)) = &r.analysis else { continue };
        for row in &a.record.rows {
            let mut cells = vec![num(row.t), num(row.energy), num(row.enstrophy), num(row.grad_norm_sq)];
            cells.extend(row.local_enstrophy.iter().map(|v| num(*v)));
            diag.push(with_prefix(id_hash(r), cells));
        }
        let mut cells = vec![num(a.record.eps), opt_num(a.record.eta), num(a.record.u_rms), opt_num(a.record.reynolds)];
        cells.extend(a.record.sup_local_enstrophy.iter().map(|v| num(*v)));
        summary.push(with_prefix(id_hash(r), cells));
        for (table, fit) in a.structure.iter().zip(&a.fits) {
            for ((rho, s), c) in table.radii.iter().zip(&table.values).zip(&table.counts) {
                structure.push(with_prefix(id_hash(r), vec![table.region.clone(), num(*rho), num(*s), c.to_string()]));
            }
            let cells = match fit {
                Ok(f) => vec![
                    table.region.clone(),
                    num(f.exponent),
                    num(f.prefactor),
                    num(f.r_min),
                    num(f.r_max),
                    f.points.to_string(),
                    num(f.residual),
                    num(f.max_log_residual),
                    f.warnings.join("; "),
                ],
                Err(e) => {
                    let mut v = vec![table.region.clone()];
                    v.extend(std::iter::repeat_n(String::new(), 7));
                    v.push(e.clone());
                    v
                }
            };
            scaling.push(with_prefix(id_hash(r), cells));
        }
        for c in &a.commutators {
            let ratio = if c.shell > 0.0 { num(c.l1 / c.shell) } else { String::new() };
            commutator.push(with_prefix(
                id_hash(r),
                vec![c.region.clone(), num(c.r), num(c.t), num(c.l1), num(c.shell), ratio],
            ));
        }
        for p in &a.weak {
            let scale = p.viscous.abs().max(p.residual.abs());
            let gap = if scale > 0.0 { (p.residual - p.viscous).abs() / scale } else { 0.0 };
            weak.push(with_prefix(
                id_hash(r),
                vec![
                    p.name.clone(),
                    num(p.time_term),
                    num(p.n_phi),
                    num(p.forcing_term),
                    num(p.residual),
                    num(p.viscous),
                    num(gap),
                    p.warnings.join("; "),
                ],
            ));
        }
    }
    vec![diag, summary, structure, scaling, commutator, weak]
}

fn channel_tables(records: &[RunRecord]) -> Vec<Table> {
    let mut diag = Table::new(
        "channel_diagnostics.csv",
        &["run_id", "content_hash", "nu", "t", "energy", "enstrophy", "wall_slip", "divergence_max"],
    );
    let mut kato = Table::new(
        "kato.csv",
        &[
            "run_id",
            "content_hash",
            "nu",
            "t_end",
            "d_tot",
            "d_tot_enstrophy",
            "d_tot_exact",
            "d_tot_rel_err",
            "energy_balance",
            "wall_slip",
            "sup_distance",
        ],
    );
    let mut strips = Table::new(
        "kato_strips.csv",
        &["run_id", "content_hash", "nu", "c", "width", "d_strip", "under_resolved"],
    );
    let mut probes = Table::new("kato_probes.csv", &["run_id", "content_hash", "nu", "probe", "max_abs_gap"]);
    for r in records {
        let Some(Analysis::Channel(a)) = &r.analysis else { continue };
        for row in &a.series {
            diag.push(with_prefix(
                id_hash(r),
                vec![num(row.t), num(row.energy), num(row.enstrophy), num(row.wall_slip), num(row.divergence_max)],
            ));
        }
        let k = &a.kato;
        let rel = a.exact_d_tot.map(|e| (k.d_tot - e).abs() / e.abs().max(f64::MIN_POSITIVE));
        kato.push(with_prefix(
            id_hash(r),
            vec![
                num(k.t_end),
                num(k.d_tot),
                num(k.d_tot_enstrophy),
                opt_num(a.exact_d_tot),
                opt_num(rel),
                num(k.energy_balance),
                num(k.wall_slip),
                opt_num(k.sup_distance),
            ],
        ));
        for s in &k.strips {
            strips.push(with_prefix(
                id_hash(r),
                vec![num(s.c), num(s.width), num(s.value), s.under_resolved.to_string()],
            ));
        }
        for p in &k.probe_gaps {
            probes.push(with_prefix(id_hash(r), vec![p.name.clone(), num(p.max_abs)]));
        }
    }
    vec![diag, kato, strips, probes]
}

fn distance_table(name: &str, rows: &[CrossDistance], usable: &[&RunRecord]) -> Table {
    let mut t = Table::new(
        name,
        &[
            "run_id",
            "content_hash",
            "nu",
            "run_id_other",
            "content_hash_other",
            "nu_other",
            "region",
            "nx",
            "ny",
            "h_minus1",
        ],
    );
    for d in rows {
        let (a, b) = (usable[d.a], usable[d.b]);
        t.push(with_prefix(
            id_hash(a),
            vec![
                b.run.id.clone(),
                b.content_hash.clone(),
                num(b.run.nu),
                d.region.clone().unwrap_or_else(|| "global".into()),
                d.nx.to_string(),
                d.ny.to_string(),
                num(d.distance),
            ],
        ));
    }
    t
}

fn sweep_tables(sweep: &SweepAnalysis, usable: &[&RunRecord], sweep_hash: &str) -> Vec<Table> {
    let mut out = Vec::new();
    if let Some(w) = &sweep.weak {
        let mut series = Table::new(
            "weak_series.csv",
            &[
                "run_id",
                "content_hash",
                "phi",
                "slope",
                "residual_decreasing",
                "deltas_decreasing",
                "consistent",
            ],
        );
        let mut deltas = Table::new(
            "nphi_deltas.csv",
            &[
                "run_id",
                "content_hash",
                "nu",
                "run_id_other",
                "content_hash_other",
                "nu_other",
                "phi",
                "n_phi",
                "n_phi_other",
                "delta",
            ],
        );
        for s in &w.series {
            series.push(vec![
                "sweep".into(),
                sweep_hash.into(),
                s.name.clone(),
                opt_num(s.slope),
                s.residual_decreasing.to_string(),
                s.deltas_decreasing.to_string(),
                s.consistent.to_string(),
            ]);
            for (n, d) in s.deltas.iter().enumerate() {
                let (a, b) = (usable[n], usable[n + 1]);
                deltas.push(with_prefix(
                    id_hash(a),
                    vec![
                        b.run.id.clone(),
                        b.content_hash.clone(),
                        num(b.run.nu),
                        s.name.clone(),
                        num(s.n_phi[n]),
                        num(s.n_phi[n + 1]),
                        num(*d),
                    ],
                ));
            }
        }
        out.push(series);
        out.push(deltas);
    }
    out.push(distance_table("cross_distance.csv", &sweep.cross, usable));
    out.push(distance_table("euler_distance.csv", &sweep.to_euler, usable));
    out
}

fn verdicts(sweep: &SweepAnalysis) -> Vec<Verdict> {
    let mut v = Vec::new();
    for (region, b) in &sweep.boundedness {
        v.push(Verdict {
            check: "local_enstrophy_bounded".into(),
            subject: region.clone(),
            passed: b.supported,
            value: Some(b.relative_band).filter(|x| x.is_finite()),
            detail: b.detail.clone(),
        });
    }
    for (region, b) in &sweep.inherited {
        v.push(match b {
            Ok(b) => Verdict {
                check: "inherited_structure_bound".into(),
                subject: region.clone(),
                passed: b.satisfied,
                value: Some(b.exponent),
                detail: format!(
                    "E_K = {} at rho_ref = {}, {} shells checked, {} violations",
                    b.constant,
                    b.rho_ref,
                    b.checked,
                    b.violations.len()
                ),
            },
            Err(e) => Verdict {
                check: "inherited_structure_bound".into(),
                subject: region.clone(),
                passed: false,
                value: None,
                detail: e.clone(),
            },
        });
    }
    if let Some(w) = &sweep.weak {
        for s in &w.series {
            v.push(Verdict {
                check: "weak_residual_scaling".into(),
                subject: s.name.clone(),
                passed: s.consistent,
                value: s.slope,
                detail: format!(
                    "log-log slope {} (band [0.8, 1.2]), |R_Phi| decreasing: {}",
                    s.slope.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}")),
                    s.residual_decreasing
                ),
            });
            v.push(Verdict {
                check: "nphi_deltas_decreasing".into(),
                subject: s.name.clone(),
                passed: s.deltas_decreasing,
                value: s.deltas.last().copied(),
                detail: format!("{} successive differences", s.deltas.len()),
            });
        }
    }
    if let Some(d) = sweep.euler_decreasing {
        v.push(Verdict {
            check: "euler_distance_decreasing".into(),
            subject: "global".into(),
            passed: d,
            value: None,
            detail: "H^-1 distance of the final fields to the inviscid run".into(),
        });
    }
    if let Some(m) = sweep.kato_monotone {
        v.push(Verdict {
            check: "kato_monotone".into(),
            subject: "d_tot and d_strip".into(),
            passed: m,
            value: None,
            detail: "strictly decreasing over runs at or below kato.monotone_below".into(),
        });
    }
    v
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_at(&tmp))?;
    fs::rename(&tmp, path).map_err(io_at(path))
}

/// Builds every table and the index, and writes them under the plan's
/// output directory through this single writer.
pub fn write_bundle(plan: &SweepPlan, records: &[RunRecord], sweep: &SweepAnalysis) -> Result<BundleSummary> {
    let sweep_hash = tree_hash(records.iter().map(|r| (r.run.id.as_str(), r.content_hash.as_str())));
    let usable: Vec<&RunRecord> = records.iter().filter(|r| r.usable()).collect();
    let mut tables = vec![runs_table(records)];
    match plan.geometry {
        crate::config::Geometry::Torus => tables.extend(torus_tables(plan, records)),
        crate::config::Geometry::Channel => tables.extend(channel_tables(records)),
    }
    tables.extend(sweep_tables(sweep, &usable, &sweep_hash));
    tables.retain(|t| !t.is_empty());

    let dir = plan.output.join(REPORTS);
    // tables that are no longer produced must not linger from an earlier bundle
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(io_at(&dir))?;
    }
    fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    let mut table_index = Vec::with_capacity(tables.len());
    for t in &tables {
        let bytes = t.to_csv()?;
        write_file(&dir.join(&t.name), &bytes)?;
        table_index.push(TableIndex {
            file: format!("{REPORTS}/{}", t.name),
            rows: t.rows.len(),
            sha256: sha256_hex(&bytes),
        });
    }

    let partial = records.iter().any(|r| !r.usable());
    let index = Index {
        format: 1,
        config_hash: plan.config_hash.clone(),
        geometry: match plan.geometry {
            crate::config::Geometry::Torus => "torus".into(),
            crate::config::Geometry::Channel => "channel".into(),
        },
        partial,
        sweep_hash,
        runs: records
            .iter()
            .map(|r| RunIndex {
                id: r.run.id.clone(),
                nu: r.run.nu,
                nx: r.run.grid.nx,
                ny: r.run.grid.ny,
                status: r.status.label().into(),
                detail: r.status.detail().into(),
                analysis_error: r.analysis_error.clone(),
                content_hash: r.content_hash.clone(),
                snapshots: r.snapshots.len(),
            })
            .collect(),
        tables: table_index,
        verdicts: verdicts(sweep),
    };
    let mut json = serde_json::to_vec_pretty(&index).map_err(|e| InvlabError::Report {
        table: INDEX.into(),
        message: e.to_string(),
    })?;
    json.push(b'\n');
    write_file(&plan.output.join(INDEX), &json)?;
    write_file(&plan.output.join("config.ini"), plan.config.to_text().as_bytes())?;

    let mut entries: Vec<(String, String)> = index.tables.iter().map(|t| (t.file.clone(), t.sha256.clone())).collect();
    entries.push((INDEX.into(), sha256_hex(&json)));
    entries.sort();
    let hash = tree_hash(entries.iter().map(|(a, b)| (a.as_str(), b.as_str())));
    write_file(&plan.output.join(BUNDLE_HASH), format!("{hash}\n").as_bytes())?;

    if records.iter().any(|r| matches!(r.status, RunStatus::Failed(_))) {
        eprintln!("bundle is partial: at least one run failed");
    }
    Ok(BundleSummary {
        index,
        hash,
        partial,
        tables,
    })
}
