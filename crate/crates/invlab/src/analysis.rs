//! Analysis passes: per-run diagnostics, then comparisons across the sweep.

use invlab_core::channel::{
    exact_channel_dissipation, exact_channel_trajectory, kato_diagnostics, kato_monotone, ChannelFields, ChannelProbe,
    ChannelTrajectory, KatoReport,
};
use invlab_core::channel::integrate_profile;
use invlab_core::diagnostics::{
    boundedness_verdict, diagnostics_record, fit_scaling_for_run, h_minus1_distance, inherited_bound,
    structure_function, BoundednessVerdict, DiagnosticsRecord, InheritedBound, RunScaling, ScalingFit,
    StructureFunctionTable, StructureOptions,
};
use invlab_core::mollify::{commutator_tensor, make_mollifier, max_shell_increment, KernelProfile};
use invlab_core::spectral::{self, ScalarField};
use invlab_core::time::Trajectory;
use invlab_core::weak::{nphi_convergence, weak_pairings, WeakPairings, WeakResidualReport};

use crate::config::{ForcingKindConfig, InitialKind, KatoReference};
use crate::error::Result;
use crate::execute::RunData;
use crate::plan::{RunPlan, SweepPlan};

/// Commutator size against the shell increment that bounds it, at the final
/// time of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutatorRow {
    pub region: String,
    pub r: f64,
    pub t: f64,
    /// `int_K |rho_r(u, u)|_F`.
    pub l1: f64,
    /// `max int_K |u(x - y) - u(x)|^2` over the shell `r < |y| < 2r`.
    pub shell: f64,
}

#[derive(Debug, Clone)]
pub struct TorusAnalysis {
    pub record: DiagnosticsRecord,
    /// One `s_2` table per region.
    pub structure: Vec<StructureFunctionTable>,
    pub fits: Vec<std::result::Result<ScalingFit, String>>,
    pub weak: Vec<WeakPairings>,
    pub commutators: Vec<CommutatorRow>,
    pub final_omega: ScalarField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRow {
    pub t: f64,
    pub energy: f64,
    pub enstrophy: f64,
    pub wall_slip: f64,
    pub divergence_max: f64,
}

#[derive(Debug, Clone)]
pub struct ChannelAnalysis {
    pub series: Vec<ChannelRow>,
    pub kato: KatoReport,
    /// Closed-form `D_tot` when the run reproduces the exact Kolmogorov
    /// solution.
    pub exact_d_tot: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum Analysis {
    Torus(Box<TorusAnalysis>),
    Channel(Box<ChannelAnalysis>),
}

/// Evenly strided sub-history with at most `count` cadence points, always
/// keeping the first and last.
fn strided(traj: &Trajectory, count: usize) -> Result<Trajectory> {
    let n = traj.len();
    let picks: Vec<usize> = if n <= count {
        (0..n).collect()
    } else {
        let mut v: Vec<usize> = (0..count).map(|k| (k * (n - 1) + (count - 1) / 2) / (count - 1)).collect();
        v.dedup();
        v
    };
    let snaps = picks.iter().map(|&i| traj.snapshots[i].clone()).collect();
    let cadence = traj.meta.cadence * ((n.max(2) - 1) as f64 / (picks.len().max(2) - 1) as f64);
    Ok(Trajectory::from_snapshots(traj.nu(), traj.meta.grid, traj.forcing.clone(), cadence, snaps)?)
}

fn analyze_torus(plan: &SweepPlan, traj: &Trajectory) -> Result<TorusAnalysis> {
    let g = &plan.config.diagnostics;
    let record = diagnostics_record(traj, &plan.regions)?;

    let sub = strided(traj, g.structure_samples)?;
    let options = StructureOptions::uniform(g.directions);
    let eta = record.eta.unwrap_or(0.0);
    let mut structure = Vec::with_capacity(plan.regions.len());
    let mut fits = Vec::with_capacity(plan.regions.len());
    for region in &plan.regions {
        let table = structure_function(&sub, 2.0, region, &plan.shells, &options)?;
        fits.push(fit_scaling_for_run(&table, plan.fit_range.0, plan.fit_range.1, eta).map_err(|e| e.to_string()));
        structure.push(table);
    }

    let mut weak = Vec::with_capacity(plan.battery.len());
    if !plan.battery.is_empty() {
        let history = traj.velocities()?;
        for tf in &plan.battery {
            weak.push(weak_pairings(&history, traj.nu(), &traj.forcing, tf)?);
        }
    }

    let (t, final_omega) = traj
        .vorticities()?
        .last()
        .map(|(t, w)| (*t, (*w).clone()))
        .ok_or_else(|| crate::error::InvlabError::Invalid("empty trajectory".into()))?;
    let (u, _) = spectral::velocity_from_vorticity(&final_omega);
    let mut commutators = Vec::new();
    for &r in &g.radii {
        let m = make_mollifier(r, KernelProfile::DefaultBump, u.grid())?;
        let rho = commutator_tensor(&u, &u, &m)?;
        for region in &plan.regions {
            commutators.push(CommutatorRow {
                region: region.name.clone(),
                r,
                t,
                l1: rho.l1_on(region),
                shell: max_shell_increment(&u, &m, region),
            });
        }
    }

    Ok(TorusAnalysis {
        record,
        structure,
        fits,
        weak,
        commutators,
        final_omega,
    })
}

/// Whether the channel run starts on the exact Kolmogorov solution through
/// the origin, so closed forms apply.
fn channel_exact(plan: &SweepPlan) -> Option<(u32, f64)> {
    let c = &plan.config;
    (c.forcing.kind == ForcingKindConfig::Kolmogorov && c.initial.kind == InitialKind::Kolmogorov && c.initial.y0 == 0.0)
        .then_some((c.forcing.k, c.forcing.amplitude))
}

fn analyze_channel(plan: &SweepPlan, traj: &ChannelTrajectory) -> Result<ChannelAnalysis> {
    let g = &traj.grid;
    let series = traj
        .snapshots
        .iter()
        .map(|(t, w)| {
            let f = ChannelFields::new(g, w);
            ChannelRow {
                t: *t,
                energy: integrate_profile(g, &f.energy_profile()),
                enstrophy: integrate_profile(g, &f.enstrophy_profile()),
                wall_slip: f.wall_slip(),
                divergence_max: f.divergence_max(),
            }
        })
        .collect();
    let exact = channel_exact(plan);
    let reference = match (plan.config.kato.reference, exact) {
        (KatoReference::Exact, Some((k, a))) => Some(exact_channel_trajectory(&traj.times(), 0.0, k, a, g)?),
        _ => None,
    };
    let kato = kato_diagnostics(traj, &plan.config.kato.strips, reference.as_ref(), &ChannelProbe::defaults(g))?;
    let t_end = traj.snapshots.last().map_or(0.0, |s| s.0);
    let exact_d_tot = exact.map(|(k, a)| exact_channel_dissipation(traj.nu, k, a, t_end, g));
    Ok(ChannelAnalysis {
        series,
        kato,
        exact_d_tot,
    })
}

/// Per-run analysis pass.
pub fn analyze_run(plan: &SweepPlan, data: &RunData) -> Result<Analysis> {
    Ok(match data {
        RunData::Torus(t) => Analysis::Torus(Box::new(analyze_torus(plan, t)?)),
        RunData::Channel(c) => Analysis::Channel(Box::new(analyze_channel(plan, c)?)),
    })
}

/// `H^{-1}` distance between the final fields of two runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossDistance {
    /// Indices into the analysed runs.
    pub a: usize,
    pub b: usize,
    /// `None` for the unmasked distance.
    pub region: Option<String>,
    pub distance: f64,
    /// Common grid size after resampling.
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone)]
pub struct SweepAnalysis {
    pub boundedness: Vec<(String, BoundednessVerdict)>,
    pub inherited: Vec<(String, std::result::Result<InheritedBound, String>)>,
    pub weak: Option<WeakResidualReport>,
    /// Consecutive pairs in sweep order.
    pub cross: Vec<CrossDistance>,
    /// Every viscous run against the inviscid run.
    pub to_euler: Vec<CrossDistance>,
    /// Unmasked distance to the inviscid run decreases along the sweep.
    pub euler_decreasing: Option<bool>,
    pub kato_monotone: Option<bool>,
}

/// Resamples both fields to the coarser grid of the pair and measures
/// their velocity difference.
fn distances(plan: &SweepPlan, a: usize, wa: &ScalarField, b: usize, wb: &ScalarField) -> Result<Vec<CrossDistance>> {
    let (ga, gb) = (*wa.grid(), *wb.grid());
    let target = if ga.nx() * ga.ny() <= gb.nx() * gb.ny() { ga } else { gb };
    let ua = spectral::velocity_from_vorticity(&spectral::resample(wa, target)?).0;
    let ub = spectral::velocity_from_vorticity(&spectral::resample(wb, target)?).0;
    let mut out = vec![CrossDistance {
        a,
        b,
        region: None,
        distance: h_minus1_distance(&ua, &ub, None)?,
        nx: target.nx(),
        ny: target.ny(),
    }];
    for k in &plan.regions {
        out.push(CrossDistance {
            a,
            b,
            region: Some(k.name.clone()),
            distance: h_minus1_distance(&ua, &ub, Some(k))?,
            nx: target.nx(),
            ny: target.ny(),
        });
    }
    Ok(out)
}

/// Cross-run pass over the analysed runs, given as `(run, analysis)` in sweep
/// order.
pub fn analyze_sweep(plan: &SweepPlan, runs: &[(&RunPlan, &Analysis)]) -> Result<SweepAnalysis> {
    let torus: Vec<(usize, &RunPlan, &TorusAnalysis)> = runs
        .iter()
        .enumerate()
        .filter_map(|(i, (r, a))| match a {
            Analysis::Torus(t) => Some((i, *r, t.as_ref())),
            Analysis::Channel(_) => None,
        })
        .collect();
    let channel: Vec<&ChannelAnalysis> = runs
        .iter()
        .filter_map(|(_, a)| match a {
            Analysis::Channel(c) => Some(c.as_ref()),
            Analysis::Torus(_) => None,
        })
        .collect();

    let mut boundedness = Vec::new();
    let mut inherited = Vec::new();
    if !torus.is_empty() {
        for (k, region) in plan.regions.iter().enumerate() {
            let values: Vec<f64> = torus.iter().map(|(_, _, t)| t.record.sup_local_enstrophy[k]).collect();
            boundedness.push((region.name.clone(), boundedness_verdict(&values, plan.config.diagnostics.slack)));
            let scalings: Vec<RunScaling> = torus
                .iter()
                .filter_map(|(_, r, t)| {
                    t.fits[k].as_ref().ok().map(|fit| RunScaling {
                        nu: r.nu,
                        table: &t.structure[k],
                        fit,
                        eta: t.record.eta.unwrap_or(0.0),
                    })
                })
                .collect();
            inherited.push((region.name.clone(), inherited_bound(&scalings).map_err(|e| e.to_string())));
        }
    }

    let weak = if torus.len() >= 2 && !plan.battery.is_empty() {
        let series: Vec<(f64, Vec<WeakPairings>)> = torus.iter().map(|(_, r, t)| (r.nu, t.weak.clone())).collect();
        Some(nphi_convergence(&series)?)
    } else {
        None
    };

    let mut cross = Vec::new();
    for w in torus.windows(2) {
        cross.extend(distances(plan, w[0].0, &w[0].2.final_omega, w[1].0, &w[1].2.final_omega)?);
    }
    let mut to_euler = Vec::new();
    let mut euler_decreasing = None;
    if let Some((ie, _, euler)) = torus.iter().find(|(_, r, _)| r.nu == 0.0) {
        for (i, r, t) in &torus {
            if r.nu > 0.0 {
                to_euler.extend(distances(plan, *i, &t.final_omega, *ie, &euler.final_omega)?);
            }
        }
        let global: Vec<f64> = to_euler.iter().filter(|d| d.region.is_none()).map(|d| d.distance).collect();
        if global.len() >= 2 {
            euler_decreasing = Some(global.windows(2).all(|w| w[1] < w[0]));
        }
    }

    let kato = if channel.is_empty() {
        None
    } else {
        let reports: Vec<KatoReport> = channel.iter().map(|c| c.kato.clone()).collect();
        Some(kato_monotone(&reports, plan.config.kato.monotone_below))
    };

    Ok(SweepAnalysis {
        boundedness,
        inherited,
        weak,
        cross,
        to_euler,
        euler_decreasing,
        kato_monotone: kato,
    })
}
