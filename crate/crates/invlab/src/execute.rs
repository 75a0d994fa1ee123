//! Executing one planned run and converting between trajectories and
//! snapshot files.

use std::f64::consts::PI;
use std::sync::Arc;

use invlab_core::channel::{
    channel_kolmogorov_forcing, channel_run, exact_channel_kolmogorov, ChannelConfig, ChannelForcing, ChannelGrid,
    ChannelSolver, ChannelState, ChannelTrajectory,
};
use invlab_core::forcing::{exact_kolmogorov_vorticity, kolmogorov_forcing, ForcingSpec};
use invlab_core::spectral::{Grid, ScalarField};
use invlab_core::time::{self, Integrator, IntegratorConfig, RunOptions, State, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Config, ForcingKindConfig, Geometry, InitialKind};
use crate::error::{InvlabError, Result};
use crate::plan::{RunPlan, SweepPlan};
use crate::snapshot::{Field, GridKind, Snapshot};

/// Name of the stored vorticity field.
pub const OMEGA: &str = "omega";

/// Solution history of one run.
#[derive(Debug, Clone)]
pub enum RunData {
    Torus(Trajectory),
    Channel(ChannelTrajectory),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Complete,
    /// Integration stopped early; the history up to the failure is kept.
    Failed(String),
    /// No stored history was found (analysis-only mode).
    Missing(String),
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Complete => "complete",
            RunStatus::Failed(_) => "failed",
            RunStatus::Missing(_) => "missing",
        }
    }

    pub fn detail(&self) -> &str {
        match self {
            RunStatus::Complete => "",
            RunStatus::Failed(d) | RunStatus::Missing(d) => d,
        }
    }
}

/// Periodic forcing from the configuration.
pub fn torus_forcing(config: &Config) -> Result<ForcingSpec> {
    Ok(match config.forcing.kind {
        ForcingKindConfig::None => ForcingSpec::none(),
        ForcingKindConfig::Kolmogorov => kolmogorov_forcing(config.forcing.k, config.forcing.amplitude)?,
    })
}

/// Channel forcing from the configuration.
pub fn channel_forcing(config: &Config) -> Result<ChannelForcing> {
    Ok(match config.forcing.kind {
        ForcingKindConfig::None => ChannelForcing::None,
        ForcingKindConfig::Kolmogorov => channel_kolmogorov_forcing(config.forcing.k, config.forcing.amplitude)?,
    })
}

/// Coefficients `(mx, my, a, b)` of the seeded random vorticity
/// `sum a cos(k . x) + b sin(k . x)` over one half-plane of `1 <= |m| <= kmax`,
/// amplitude decaying like `1 / |m|`. Independent of the grid, so every run
/// of a sweep starts from the same continuous field.
pub fn random_modes(kmax: usize, amplitude: f64, seed: u64) -> Vec<(i64, i64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = kmax as i64;
    let mut out = Vec::new();
    for my in 0..=k {
        for mx in -k..=k {
            let r2 = mx * mx + my * my;
            if r2 == 0 || r2 > k * k || (my == 0 && mx < 0) {
                continue;
            }
            let scale = amplitude / (r2 as f64).sqrt();
            let a = rng.random_range(-1.0..1.0) * scale;
            let b = rng.random_range(-1.0..1.0) * scale;
            out.push((mx, my, a, b));
        }
    }
    out
}

/// Initial vorticity of a periodic run on `grid`.
pub fn torus_initial(config: &Config, run: &RunPlan, grid: &Grid) -> ScalarField {
    let i = &config.initial;
    let (k, a) = (config.forcing.k, config.forcing.amplitude);
    let (kx, ky) = (2.0 * PI / grid.lx(), 2.0 * PI / grid.ly());
    match i.kind {
        InitialKind::Zero => ScalarField::zeros(*grid),
        InitialKind::Kolmogorov => exact_kolmogorov_vorticity(0.0, run.nu, k, a, i.y0, grid),
        InitialKind::Perturbed => {
            let base = exact_kolmogorov_vorticity(0.0, run.nu, k, a, i.y0, grid).physical_values();
            let d = i.perturbation;
            let mut p = ScalarField::from_fn(*grid, |x, y| {
                d * ((kx * x + ky * y).cos() + 0.5 * (2.0 * kx * x - ky * y).sin())
            })
            .physical_values();
            for (v, b) in p.iter_mut().zip(base) {
                *v += b;
            }
            ScalarField::from_values(*grid, p).expect("grid-sized values")
        }
        InitialKind::Random => random_field(grid, i.kmax, i.amplitude, run.seed),
    }
}

/// The field of [`random_modes`] sampled on `grid`.
pub fn random_field(grid: &Grid, kmax: usize, amplitude: f64, seed: u64) -> ScalarField {
    let modes = random_modes(kmax, amplitude, seed);
    let (kx, ky) = (2.0 * PI / grid.lx(), 2.0 * PI / grid.ly());
    ScalarField::from_fn(*grid, |x, y| {
        modes
            .iter()
            .map(|&(mx, my, a, b)| {
                let ph = mx as f64 * kx * x + my as f64 * ky * y;
                a * ph.cos() + b * ph.sin()
            })
            .sum()
    })
}

/// Initial state of a channel run.
pub fn channel_initial(config: &Config, run: &RunPlan, grid: &ChannelGrid) -> Result<ChannelState> {
    let forcing = channel_forcing(config)?;
    let mut s = match config.initial.kind {
        InitialKind::Kolmogorov => {
            exact_channel_kolmogorov(0.0, run.nu, config.forcing.k, config.forcing.amplitude, config.initial.y0, grid)?
        }
        _ => ChannelState::zeros(*grid, run.nu, forcing),
    };
    s.forcing = forcing;
    Ok(s)
}

fn torus_grid(run: &RunPlan) -> Result<Grid> {
    Ok(Grid::new(run.grid.nx, run.grid.ny, run.grid.lx, run.grid.ly)?)
}

fn channel_grid(run: &RunPlan) -> Result<ChannelGrid> {
    Ok(ChannelGrid::with_size(run.grid.nx, run.grid.ny, run.grid.lx, run.grid.ly)?)
}

fn snapshot(kind: GridKind, run: &RunPlan, t: f64, values: Vec<f64>) -> Snapshot {
    Snapshot {
        kind,
        nx: run.grid.nx as u32,
        ny: run.grid.ny as u32,
        lx: run.grid.lx,
        ly: run.grid.ly,
        nu: run.nu,
        t,
        fields: vec![Field {
            name: OMEGA.into(),
            values,
        }],
    }
}

/// Integrates one run. A blow-up or step failure is not an error: the
/// history up to it comes back with a failed status.
pub fn simulate(plan: &SweepPlan, run: &RunPlan) -> Result<(Vec<Snapshot>, RunStatus)> {
    let c = &plan.config;
    let s = &c.sweep;
    match plan.geometry {
        Geometry::Torus => {
            let grid = torus_grid(run)?;
            let forcing = torus_forcing(c)?;
            let config = IntegratorConfig {
                cfl: s.cfl,
                dt_max: s.dt_max,
                ..IntegratorConfig::default()
            };
            let mut integ = Integrator::new(grid, run.nu, &forcing, config)?;
            let s0 = State::new(torus_initial(c, run, &grid), 0.0, run.nu, Arc::new(forcing))?;
            let options = RunOptions {
                dt: s.dt,
                keep_snapshots: true,
            };
            let (traj, status) = match time::run(&mut integ, s0, s.t_end, s.cadence, &mut [], options) {
                Ok(t) => (t, RunStatus::Complete),
                Err(e) => (*e.partial, RunStatus::Failed(e.error.to_string())),
            };
            let snaps = traj
                .snapshots
                .into_iter()
                .filter_map(|sn| sn.omega.map(|w| snapshot(GridKind::Torus, run, sn.t, w.physical_values())))
                .collect();
            Ok((snaps, status))
        }
        Geometry::Channel => {
            let grid = channel_grid(run)?;
            let s0 = channel_initial(c, run, &grid)?;
            let config = ChannelConfig {
                cfl: s.cfl,
                dt_max: s.dt_max,
                ..ChannelConfig::default()
            };
            let mut solver = ChannelSolver::for_state(&s0, config)?;
            let (traj, status) = match channel_run(&mut solver, &s0, s.t_end, s.cadence, s.dt) {
                Ok(t) => (t, RunStatus::Complete),
                Err(e) => (*e.partial, RunStatus::Failed(e.error.to_string())),
            };
            let snaps = traj
                .snapshots
                .into_iter()
                .map(|(t, w)| snapshot(GridKind::Channel, run, t, w))
                .collect();
            Ok((snaps, status))
        }
    }
}

/// Rebuilds a run's history from its snapshots, checking that they belong to
/// the planned run.
pub fn trajectory_from(plan: &SweepPlan, run: &RunPlan, snaps: &[Snapshot]) -> Result<RunData> {
    let kind = match plan.geometry {
        Geometry::Torus => GridKind::Torus,
        Geometry::Channel => GridKind::Channel,
    };
    let len = run.grid.field_len(plan.geometry);
    let mut fields = Vec::with_capacity(snaps.len());
    for sn in snaps {
        let matches = sn.kind == kind
            && sn.nx as usize == run.grid.nx
            && sn.ny as usize == run.grid.ny
            && sn.lx == run.grid.lx
            && sn.ly == run.grid.ly
            && sn.nu == run.nu;
        let omega = sn.field(OMEGA).filter(|w| w.len() == len);
        match (matches, omega) {
            (true, Some(w)) => fields.push((sn.t, w.to_vec())),
            _ => {
                return Err(InvlabError::Invalid(format!(
                    "snapshot at t = {} does not match run {} ({} {}x{}, nu = {})",
                    sn.t,
                    run.id,
                    kind.name(),
                    run.grid.nx,
                    run.grid.ny,
                    run.nu
                )))
            }
        }
    }
    match plan.geometry {
        Geometry::Torus => {
            let grid = torus_grid(run)?;
            let forcing = Arc::new(torus_forcing(&plan.config)?);
            let snapshots = fields
                .into_iter()
                .map(|(t, w)| {
                    Ok(time::Snapshot {
                        t,
                        omega: Some(ScalarField::from_values(grid, w)?),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RunData::Torus(Trajectory::from_snapshots(
                run.nu,
                grid,
                forcing,
                plan.config.sweep.cadence,
                snapshots,
            )?))
        }
        Geometry::Channel => Ok(RunData::Channel(ChannelTrajectory {
            grid: channel_grid(run)?,
            nu: run.nu,
            forcing: channel_forcing(&plan.config)?,
            snapshots: fields,
        })),
    }
}
