//! Sweep planning: per-run grids from the resolution rule, shared regions,
//! shells and test functions.

use std::path::PathBuf;

use invlab_core::weak::{default_battery, TestFunction};
use invlab_core::CompactRegion;

use crate::config::{Config, ConfigError, Geometry};

/// Grid of one run. For the channel `ny` counts wall-normal intervals, so a
/// field holds `nx * (ny + 1)` values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPlan {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl GridPlan {
    /// Values per stored field.
    pub fn field_len(&self, geometry: Geometry) -> usize {
        match geometry {
            Geometry::Torus => self.nx * self.ny,
            Geometry::Channel => self.nx * (self.ny + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    /// Position in sweep order.
    pub index: usize,
    /// Directory-safe identifier, unique within the sweep.
    pub id: String,
    pub nu: f64,
    pub grid: GridPlan,
    /// Seed of the initial data. Identical across the sweep so every
    /// viscosity starts from the same field.
    pub seed: u64,
    /// Kolmogorov-scale estimate behind the grid choice (viscous periodic
    /// runs under the resolution rule).
    pub eta_est: Option<f64>,
}

/// Fully resolved sweep.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub config: Config,
    pub config_hash: String,
    pub geometry: Geometry,
    /// Decreasing viscosity, an inviscid run last if requested.
    pub runs: Vec<RunPlan>,
    pub regions: Vec<CompactRegion>,
    /// Structure-function shell radii, shared by all runs.
    pub shells: Vec<f64>,
    pub fit_range: (f64, f64),
    pub battery: Vec<TestFunction>,
    pub output: PathBuf,
}

/// `eta_est = nu^{3/4} eps^{-1/4}`.
pub fn eta_estimate(nu: f64, eps_guess: f64) -> f64 {
    nu.powf(0.75) * eps_guess.powf(-0.25)
}

/// Smallest power of two `N >= max(n_min, ceil(c_res * l / eta))`.
pub fn resolution(l: f64, eta: f64, n_min: usize, c_res: f64) -> usize {
    let need = (c_res * l / eta).ceil();
    let need = if need.is_finite() && need > 0.0 { need as usize } else { usize::MAX / 4 };
    need.max(n_min).next_power_of_two()
}

/// Conventional name of a centred region covering `fraction` of each axis.
pub fn region_name(fraction: f64) -> String {
    match fraction {
        0.5 => "K_half".into(),
        0.75 => "K_three_quarter".into(),
        1.0 => "K_whole".into(),
        f => format!("K_{f}"),
    }
}

fn run_id(index: usize, nu: f64) -> String {
    if nu == 0.0 {
        format!("run{index:02}_euler")
    } else {
        format!("run{index:02}_nu{nu:e}")
    }
}

/// `count` geometrically spaced radii from `a` to `b`.
fn geometric(a: f64, b: f64, count: usize) -> Vec<f64> {
    let ratio = (b / a).powf(1.0 / (count - 1) as f64);
    (0..count).map(|i| if i + 1 == count { b } else { a * ratio.powi(i as i32) }).collect()
}

/// Shell radii (geometric between the configured or default ends) and the
/// fit range. The default lower end is two cells of the coarsest grid, the
/// default upper end a quarter of the shorter side.
fn shell_layout(config: &Config, runs: &[RunPlan]) -> Result<(Vec<f64>, (f64, f64)), ConfigError> {
    let g = &config.diagnostics;
    let d = &config.domain;
    let coarsest = runs.iter().map(|r| r.grid.nx).min().unwrap_or(config.sweep.n_min);
    let shell_min = g.shell_min.unwrap_or(2.0 * d.lx / coarsest as f64);
    let shell_max = g.shell_max.unwrap_or(d.lx.min(d.ly) / 4.0);
    if !(shell_min < shell_max) {
        return Err(ConfigError {
            key: "diagnostics.shell_min".into(),
            line: None,
            message: format!("shell range [{shell_min}, {shell_max}] is empty"),
        });
    }
    let shells = geometric(shell_min, shell_max, g.shells);
    Ok((shells, (g.fit_min.unwrap_or(shell_min), g.fit_max.unwrap_or(shell_max))))
}

/// Resolves a validated configuration into runs and shared analysis inputs.
pub fn plan_sweep(config: &Config, output: PathBuf) -> Result<SweepPlan, ConfigError> {
    config.validate()?;
    let s = &config.sweep;
    let d = &config.domain;
    let geometry = s.geometry;
    let mut runs = Vec::new();
    let mut nus = s.viscosities.clone();
    if s.euler {
        nus.push(0.0);
    }
    for (index, &nu) in nus.iter().enumerate() {
        let (grid, eta_est) = match geometry {
            Geometry::Channel => (
                GridPlan {
                    nx: d.nx,
                    ny: d.ny,
                    lx: d.lx,
                    ly: d.ly,
                },
                None,
            ),
            Geometry::Torus => match d.n {
                Some(n) => (
                    GridPlan {
                        nx: n,
                        ny: n,
                        lx: d.lx,
                        ly: d.ly,
                    },
                    None,
                ),
                None if nu > 0.0 => {
                    let eta = eta_estimate(nu, s.eps_guess);
                    let grid = GridPlan {
                        nx: resolution(d.lx, eta, s.n_min, s.c_res),
                        ny: resolution(d.ly, eta, s.n_min, s.c_res),
                        lx: d.lx,
                        ly: d.ly,
                    };
                    (grid, Some(eta))
                }
                // the inviscid run uses the finest viscous grid
                None => (runs.last().map_or(
                    GridPlan {
                        nx: s.n_min,
                        ny: s.n_min,
                        lx: d.lx,
                        ly: d.ly,
                    },
                    |r: &RunPlan| r.grid,
                ), None),
            },
        };
        runs.push(RunPlan {
            index,
            id: run_id(index, nu),
            nu,
            grid,
            seed: s.seed,
            eta_est,
        });
    }

    let periodic = geometry == Geometry::Torus;
    let mut regions = Vec::new();
    for &f in &config.diagnostics.regions {
        let r = CompactRegion::centered(&region_name(f), f, d.lx, d.ly, periodic).map_err(|e| ConfigError {
            key: "diagnostics.regions".into(),
            line: None,
            message: e.to_string(),
        })?;
        regions.push(r);
    }

    let (shells, fit_range) = if periodic { shell_layout(config, &runs)? } else { (Vec::new(), (0.0, 0.0)) };

    let battery = if periodic && config.weak.enabled {
        default_battery(d.lx, d.ly, s.t_end, s.seed).map_err(|e| ConfigError {
            key: "weak.enabled".into(),
            line: None,
            message: e.to_string(),
        })?
    } else {
        Vec::new()
    };

    Ok(SweepPlan {
        config: config.clone(),
        config_hash: config.hash(),
        geometry,
        runs,
        regions,
        shells,
        fit_range,
        battery,
        output,
    })
}

impl SweepPlan {
    /// Number of stored cadence points per run, including the initial one.
    pub fn cadence_points(&self) -> usize {
        (self.config.sweep.t_end / self.config.sweep.cadence).round() as usize + 1
    }

    /// Projected peak bytes of one run: its retained history, the velocity
    /// copies made during analysis, and solver workspace.
    pub fn footprint_bytes(&self, run: &RunPlan) -> u64 {
        let field = run.grid.field_len(self.geometry) as u64 * 8;
        let history = self.cadence_points() as u64 * field;
        3 * history + 96 * field
    }

    /// Keeps only the first run (single-run mode).
    pub fn first_only(mut self) -> SweepPlan {
        self.runs.truncate(1);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    fn plan(text: &str) -> SweepPlan {
        plan_sweep(&Config::parse(text).unwrap(), PathBuf::from("out")).unwrap()
    }

    #[test]
    fn resolution_rule_values() {
        // eta(1e-2) = 0.0316, 2 * 2pi / eta = 397.4 -> 512
        // eta(1e-3) = 0.00562, 2 * 2pi / eta = 2234.5 -> 4096
        let p = plan("[sweep]\nviscosities = 1e-2, 1e-3\neps_guess = 1\n");
        let n: Vec<usize> = p.runs.iter().map(|r| r.grid.nx).collect();
        assert_eq!(n, vec![512, 4096]);
        assert!((p.runs[0].eta_est.unwrap() - 0.031_622_776_601_683_79).abs() < 1e-15);
        // large viscosity hits the floor
        assert_eq!(resolution(2.0 * std::f64::consts::PI, 1.0, 64, 2.0), 64);
    }

    #[test]
    fn resolution_rule_bound_holds() {
        for &nu in &[1.0, 0.3, 1e-1, 3e-2, 1e-2, 3e-3] {
            for &eps in &[0.1, 1.0, 10.0] {
                let eta = eta_estimate(nu, eps);
                let n = resolution(6.0, eta, 64, 2.0);
                assert!(n.is_power_of_two());
                assert!(n >= 64 && n as f64 >= (2.0 * 6.0 / eta).ceil());
                assert!(n / 2 < 64 || ((n / 2) as f64) < (2.0 * 6.0 / eta).ceil());
            }
        }
    }

    #[test]
    fn euler_run_takes_finest_grid() {
        let p = plan("[sweep]\nviscosities = 1e-1, 1e-2\neuler = true\n");
        assert_eq!(p.runs.len(), 3);
        assert_eq!(p.runs[2].nu, 0.0);
        assert_eq!(p.runs[2].grid, p.runs[1].grid);
        assert_eq!(p.runs[2].id, "run02_euler");
        assert_eq!(p.runs[0].id, "run00_nu1e-1");
    }

    #[test]
    fn fixed_grid_and_shared_inputs() {
        let p = plan("[sweep]\nviscosities = 1e-2, 3e-3\nseed = 9\n[domain]\nn = 32\n");
        assert!(p.runs.iter().all(|r| r.grid.nx == 32 && r.seed == 9));
        assert_eq!(p.regions.len(), 2);
        assert_eq!(p.regions[0].name, "K_half");
        assert_eq!(p.battery.len(), 5);
        assert_eq!(p.shells.len(), 8);
        assert!(p.shells.windows(2).all(|w| w[1] > w[0]));
        assert!((p.shells[0] - 2.0 * p.config.domain.lx / 32.0).abs() < 1e-12);
    }

    #[test]
    fn channel_plan_uses_configured_grid() {
        let p = plan("[sweep]\ngeometry = channel\nviscosities = 1e-2\n[domain]\nny = 64\n");
        assert_eq!(p.runs[0].grid.ny, 64);
        assert_eq!(p.runs[0].grid.field_len(Geometry::Channel), 16 * 65);
        assert!(p.battery.is_empty());
    }
}
