//! End-to-end acceptance suite. Prints one `criterion N: PASS|FAIL` line per
//! criterion (bypassing the test harness capture) and fails if any does.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;
use std::thread;

use invlab::snapshot::{load_snapshot, Snapshot};
use invlab::validate::{exit_code, Check};
use invlab_core::diagnostics::{fit_scaling, structure_function, synthetic_power_law_velocity, StructureOptions};
use invlab_core::forcing::ForcingSpec;
use invlab_core::spectral::{self, Grid};
use invlab_core::time::{self, Trajectory};
use invlab_core::CompactRegion;

const BIN: &str = env!("CARGO_BIN_EXE_invlab");

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

struct Verdict {
    criterion: u8,
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(criterion: u8, failures: Vec<String>, summary: String) -> Verdict {
        Verdict {
            criterion,
            passed: failures.is_empty(),
            detail: if failures.is_empty() { summary } else { failures.join("; ") },
        }
    }
}

fn announce(v: &Verdict) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "criterion {}: {}  {}",
        v.criterion,
        if v.passed { "PASS" } else { "FAIL" },
        v.detail
    );
}

fn invlab(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("INVLAB_WORKERS")
        .output()
        .expect("spawn invlab")
}

fn sweep(config: &Path, out: &Path, workers: usize) -> Output {
    invlab(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--workers",
        &workers.to_string(),
    ])
}

type Row = HashMap<String, String>;

fn table(out: &Path, name: &str) -> Vec<Row> {
    let path = out.join("reports").join(name);
    let mut r = csv::Reader::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    r.records()
        .map(|rec| header.iter().cloned().zip(rec.unwrap().iter().map(String::from)).collect())
        .collect()
}

fn f(row: &Row, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("column {key} = {:?}", row[key]))
}

fn index(out: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(out.join("index.json")).unwrap()).unwrap()
}

fn verdicts<'a>(index: &'a serde_json::Value, check: &str) -> Vec<&'a serde_json::Value> {
    index["verdicts"].as_array().unwrap().iter().filter(|v| v["check"] == check).collect()
}

/// Criteria 1 to 4 from the `validate` subcommand output.
fn from_validate(out: &Output) -> Vec<Verdict> {
    let text = String::from_utf8_lossy(&out.stdout);
    (1..=4)
        .map(|n| {
            let tag = format!("[{n}]");
            let lines: Vec<&str> = text.lines().filter(|l| l.trim_start().starts_with(&tag)).collect();
            let passed = text.lines().any(|l| l == format!("criterion {n}: PASS"));
            let detail = lines
                .iter()
                .map(|l| l.trim_start().trim_start_matches(&tag).split_whitespace().collect::<Vec<_>>().join(" "))
                .collect::<Vec<_>>()
                .join("; ");
            Verdict {
                criterion: n,
                passed: passed && !lines.is_empty(),
                detail,
            }
        })
        .collect()
}

/// Relative gap `|R - V| / max(|R|, |V|)` over the viscous runs and the
/// log-log slope of `|R_Phi|` against `nu`.
fn criterion_5(out: &Path) -> Verdict {
    let weak = table(out, "weak.csv");
    let mut failures = Vec::new();
    let viscous: Vec<&Row> = weak.iter().filter(|r| f(r, "nu") > 0.0).collect();
    let worst = viscous.iter().map(|r| f(r, "relative_gap")).fold(0.0, f64::max);
    if viscous.len() != 4 * 5 {
        failures.push(format!("expected 20 viscous pairings, got {}", viscous.len()));
    }
    if !(worst <= 1e-6) {
        failures.push(format!("max relative gap {worst:.3e} > 1e-6"));
    }
    let series = table(out, "weak_series.csv");
    let slopes: Vec<f64> = series.iter().map(|r| f(r, "slope")).collect();
    for (r, s) in series.iter().zip(&slopes) {
        if !(0.8..=1.2).contains(s) {
            failures.push(format!("{} slope {s:.4}", r["phi"]));
        }
    }
    if series.len() != 5 {
        failures.push(format!("expected 5 test functions, got {}", series.len()));
    }
    let (lo, hi) = slopes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    Verdict::new(5, failures, format!("max rel. gap {worst:.2e}, slopes in [{lo:.3}, {hi:.3}]"))
}

fn criterion_6(out: &Path) -> Verdict {
    let deltas = table(out, "nphi_deltas.csv");
    let mut by_phi: Vec<(String, Vec<f64>)> = Vec::new();
    for r in &deltas {
        match by_phi.iter_mut().find(|(p, _)| *p == r["phi"]) {
            Some((_, d)) => d.push(f(r, "delta")),
            None => by_phi.push((r["phi"].clone(), vec![f(r, "delta")])),
        }
    }
    let mut failures = Vec::new();
    for (phi, d) in &by_phi {
        if d.len() < 3 || d.windows(2).any(|w| !(w[1] < w[0])) {
            failures.push(format!("{phi}: {d:?}"));
        }
    }
    if by_phi.len() != 5 {
        failures.push(format!("expected 5 test functions, got {}", by_phi.len()));
    }
    let n = by_phi.first().map_or(0, |(_, d)| d.len());
    Verdict::new(6, failures, format!("{} test functions, {n} successive differences each, strictly decreasing", by_phi.len()))
}

/// Bilinear point evaluation summed over every grid node, the reference
/// for the interpolated shifts in the structure function.
fn brute_force_s2(u1: &[f64], u2: &[f64], g: &Grid, nodes: &[(usize, usize, f64)], dirs: &[[f64; 2]], rho: f64) -> f64 {
    let (nx, ny) = (g.nx(), g.ny());
    let hat = |d: f64, n: usize| {
        let d = (d + n as f64 / 2.0).rem_euclid(n as f64) - n as f64 / 2.0;
        (1.0 - d.abs()).max(0.0)
    };
    let (mut acc, mut wsum) = (0.0, 0.0);
    for d in dirs {
        for &(i, j, w) in nodes {
            let (px, py) = ((g.x(i) + rho * d[0]) / g.dx(), (g.y(j) + rho * d[1]) / g.dy());
            let (mut a, mut b) = (0.0, 0.0);
            for q in 0..ny {
                for p in 0..nx {
                    let h = hat(px - p as f64, nx) * hat(py - q as f64, ny);
                    a += h * u1[q * nx + p];
                    b += h * u2[q * nx + p];
                }
            }
            let idx = j * nx + i;
            acc += w * ((a - u1[idx]).powi(2) + (b - u2[idx]).powi(2));
            wsum += w;
        }
    }
    acc / wsum
}

fn single_time(g: Grid, seed: u64) -> Trajectory {
    let u = synthetic_power_law_velocity(&g, -5.0 / 3.0, seed);
    let w = spectral::vorticity_from_velocity(&u).unwrap();
    let snap = time::Snapshot { t: 0.0, omega: Some(w) };
    Trajectory::from_snapshots(0.0, g, Arc::new(ForcingSpec::none()), 1.0, vec![snap]).unwrap()
}

fn criterion_7() -> Verdict {
    let mut failures = Vec::new();
    let g = Grid::square(32).unwrap();
    let traj = single_time(g, 7);
    let region = CompactRegion::periodic("K", 1.0, 4.0, 2.0, 5.5, g.lx(), g.ly()).unwrap();
    let opts = StructureOptions::uniform(6);
    let radii = [0.13, 0.4, 0.75, 1.1];
    let t = structure_function(&traj, 2.0, &region, &radii, &opts).unwrap();
    let u = traj.velocities().unwrap().remove(0).1;
    let (u1, u2) = (u.u1.physical_values(), u.u2.physical_values());
    let nodes = region.weighted_nodes(&g);
    let mut worst = 0.0_f64;
    for (k, &rho) in radii.iter().enumerate() {
        let bf = brute_force_s2(&u1, &u2, &g, &nodes, &opts.directions, rho);
        worst = worst.max((t.values[k] - bf).abs() / bf);
    }
    if !(worst <= 1e-10) {
        failures.push(format!("brute-force rel. gap {worst:.3e}"));
    }

    let g = Grid::square(512).unwrap();
    let traj = single_time(g, 2024);
    let (lo, hi) = (10.0 * g.dx(), 100.0 * g.dx());
    let radii: Vec<f64> = (0..8).map(|i| lo * (hi / lo).powf(i as f64 / 7.0)).collect();
    let t = structure_function(&traj, 2.0, &CompactRegion::whole(&g), &radii, &StructureOptions::default()).unwrap();
    let fit = fit_scaling(&t, lo, hi).unwrap();
    if !(0.57..=0.77).contains(&fit.exponent) {
        failures.push(format!("fitted exponent {:.4}", fit.exponent));
    }
    Verdict::new(7, failures, format!("brute-force rel. gap {worst:.2e}, fitted 2 zeta_2 = {:.4}", fit.exponent))
}

fn criterion_8(out: &Path) -> Verdict {
    let mut failures = Vec::new();
    let summary = table(out, "run_summary.csv");
    let viscous: Vec<&Row> = summary.iter().filter(|r| f(r, "nu") > 0.0).collect();
    let last3 = &viscous[viscous.len().saturating_sub(3)..];
    let mut spread = Vec::new();
    for col in summary[0].keys().filter(|k| k.starts_with("sup_local_enstrophy_")) {
        let v: Vec<f64> = last3.iter().map(|r| f(r, col)).collect();
        let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), &x| (a.min(x), b.max(x)));
        let s = (hi - lo) / hi;
        if !(s <= 0.1) {
            failures.push(format!("{col} varies by {s:.3}"));
        }
        spread.push(s);
    }
    let idx = index(out);
    let bounded = verdicts(&idx, "local_enstrophy_bounded");
    let inherited = verdicts(&idx, "inherited_structure_bound");
    if bounded.is_empty() || inherited.is_empty() {
        failures.push("verdicts missing from the index".into());
    }
    for v in bounded.iter().chain(&inherited) {
        if v["passed"] != true {
            failures.push(format!("{} {}: {}", v["check"], v["subject"], v["detail"]));
        }
    }
    let max_spread = spread.iter().copied().fold(0.0, f64::max);
    let shells: Vec<String> = inherited.iter().map(|v| v["detail"].as_str().unwrap_or("").to_string()).collect();
    Verdict::new(
        8,
        failures,
        format!("local enstrophy spread {max_spread:.2e} over the last three nu; {}", shells.join("; ")),
    )
}

fn criterion_9(out: &Path) -> Verdict {
    let mut failures = Vec::new();
    let kato = table(out, "kato.csv");
    let worst = kato.iter().map(|r| f(r, "d_tot_rel_err")).fold(0.0, f64::max);
    if kato.len() < 3 {
        failures.push(format!("only {} channel runs", kato.len()));
    }
    if !(worst <= 1e-3) {
        failures.push(format!("D_tot rel. error {worst:.3e}"));
    }
    let d_tot: Vec<f64> = kato.iter().filter(|r| f(r, "nu") <= 1e-2).map(|r| f(r, "d_tot")).collect();
    if d_tot.windows(2).any(|w| !(w[1] < w[0])) {
        failures.push(format!("D_tot not decreasing: {d_tot:?}"));
    }
    let strips = table(out, "kato_strips.csv");
    let mut cs: Vec<String> = strips.iter().map(|r| r["c"].clone()).collect();
    cs.sort_by(|x, y| x.parse::<f64>().unwrap().total_cmp(&y.parse().unwrap()));
    cs.dedup();
    for c in &cs {
        let d: Vec<f64> = strips
            .iter()
            .filter(|r| &r["c"] == c && f(r, "nu") <= 1e-2)
            .map(|r| f(r, "d_strip"))
            .collect();
        if d.windows(2).any(|w| !(w[1] < w[0])) {
            failures.push(format!("D_strip(c = {c}) not decreasing: {d:?}"));
        }
    }
    let idx = index(out);
    for v in verdicts(&idx, "kato_monotone") {
        if v["passed"] != true {
            failures.push(format!("kato_monotone: {}", v["detail"]));
        }
    }
    Verdict::new(
        9,
        failures,
        format!("D_tot max rel. error {worst:.2e}; D_tot and D_strip(c) decreasing for c in {{{}}}", cs.join(", ")),
    )
}

fn snapshots_of(out: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    for run in std::fs::read_dir(out.join("runs")).unwrap() {
        for f in std::fs::read_dir(run.unwrap().path()).unwrap() {
            let p = f.unwrap().path();
            if p.extension().is_some_and(|x| x == "ivlb") {
                files.push(p);
            }
        }
    }
    files.sort();
    files
}

fn criterion_10(a: &Path, b: &Path, validate: &Output) -> Verdict {
    let mut failures = Vec::new();
    let (ha, hb) = (
        std::fs::read_to_string(a.join("bundle.sha256")).unwrap_or_default(),
        std::fs::read_to_string(b.join("bundle.sha256")).unwrap_or_default(),
    );
    if ha.trim().is_empty() || ha != hb {
        failures.push(format!("bundle hashes differ: {} vs {}", ha.trim(), hb.trim()));
    }
    let files = snapshots_of(a);
    let mut checked = 0;
    for p in files.iter().step_by(97) {
        let bytes = std::fs::read(p).unwrap();
        let snap: Snapshot = load_snapshot(p).unwrap();
        if snap.encode().unwrap() != bytes {
            failures.push(format!("{} does not re-encode bit-exactly", p.display()));
        }
        let other = b.join(p.strip_prefix(a).unwrap());
        if std::fs::read(&other).ok().as_deref() != Some(&bytes[..]) {
            failures.push(format!("{} differs between reruns", other.display()));
        }
        checked += 1;
    }
    let inspect = invlab(&["inspect", files[0].to_str().unwrap()]);
    if !inspect.status.success() || !String::from_utf8_lossy(&inspect.stdout).contains("nu") {
        failures.push("inspect failed".into());
    }
    if !validate.status.success() {
        failures.push(format!("validate exited with {:?}", validate.status.code()));
    }
    let failing = [Check::at_most(1, "x", 2.0, 1.0)];
    if exit_code(&failing) == 0 {
        failures.push("a failed check maps to exit status 0".into());
    }
    Verdict::new(
        10,
        failures,
        format!(
            "bundle hash {} identical on rerun; {checked} snapshots re-encode bit-exactly; validate exit 0",
            &ha.trim()[..12.min(ha.trim().len())]
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, ch) = (dir.path().join("kolmogorov_a"), dir.path().join("kolmogorov_b"), dir.path().join("channel"));

    let validate = thread::spawn(|| invlab(&["validate"]));
    let sweep_a = {
        let a = a.clone();
        thread::spawn(move || sweep(&config("kolmogorov_sweep.ini"), &a, 3))
    };
    let sweep_b = {
        let b = b.clone();
        thread::spawn(move || sweep(&config("kolmogorov_sweep.ini"), &b, 2))
    };
    let channel = sweep(&config("channel_kato.ini"), &ch, 2);
    let c7 = criterion_7();

    let validate = validate.join().unwrap();
    let (sa, sb) = (sweep_a.join().unwrap(), sweep_b.join().unwrap());
    for (name, o) in [("kolmogorov sweep", &sa), ("kolmogorov rerun", &sb), ("channel sweep", &channel)] {
        assert!(o.status.success(), "{name} failed: {}", String::from_utf8_lossy(&o.stderr));
    }

    let mut all = from_validate(&validate);
    all.push(criterion_5(&a));
    all.push(criterion_6(&a));
    all.push(c7);
    all.push(criterion_8(&a));
    all.push(criterion_9(&ch));
    all.push(criterion_10(&a, &b, &validate));
    for v in &all {
        announce(v);
    }
    let failed: Vec<u8> = all.iter().filter(|v| !v.passed).map(|v| v.criterion).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}\n{}", String::from_utf8_lossy(&validate.stdout));
}
