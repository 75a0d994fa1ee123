//! Numerical self-checks run by `invlab validate`: exact Kolmogorov
//! solutions on both geometries, discrete identities on random fields and
//! the energy and enstrophy budgets.

use std::sync::Arc;

use invlab_core::channel::{channel_run, exact_channel_kolmogorov, ChannelConfig, ChannelGrid, ChannelSolver};
use invlab_core::diagnostics::{energy, enstrophy, grad_norm_sq};
use invlab_core::forcing::{exact_kolmogorov_vorticity, kolmogorov_forcing, ForcingSpec};
use invlab_core::mollify::{self, KernelProfile};
use invlab_core::spectral::{self, Grid, ScalarField};
use invlab_core::time::{self, Integrator, IntegratorConfig, RunOptions, State};

use crate::error::{InvlabError, Result};
use crate::execute::random_field;

/// Outcome of one numerical check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    /// Acceptance criterion the check belongs to (1 to 4).
    pub criterion: u8,
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value` is finite and at most `tolerance`.
    pub fn at_most(criterion: u8, name: impl Into<String>, value: f64, tolerance: f64) -> Check {
        Check {
            criterion,
            name: name.into(),
            value,
            tolerance,
            passed: value.is_finite() && value <= tolerance,
        }
    }

    fn failed(criterion: u8, name: impl Into<String>, err: &InvlabError) -> Check {
        Check {
            criterion,
            name: format!("{}: {err}", name.into()),
            value: f64::NAN,
            tolerance: 0.0,
            passed: false,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "  [{}] {:<52} {:>11.4e} <= {:.1e}  {}",
            self.criterion,
            self.name,
            self.value,
            self.tolerance,
            if self.passed { "ok" } else { "FAIL" }
        )
    }
}

/// Per-criterion verdicts in criterion order.
pub fn summarize(checks: &[Check]) -> Vec<(u8, bool)> {
    let mut out: Vec<(u8, bool)> = Vec::new();
    for c in checks {
        match out.iter_mut().find(|(n, _)| *n == c.criterion) {
            Some((_, ok)) => *ok &= c.passed,
            None => out.push((c.criterion, c.passed)),
        }
    }
    out.sort_by_key(|(n, _)| *n);
    out
}

/// Process exit status for a finished battery: 0 when every criterion
/// passed, 2 otherwise.
pub fn exit_code(checks: &[Check]) -> u8 {
    if !checks.is_empty() && checks.iter().all(|c| c.passed) {
        0
    } else {
        2
    }
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn max_diff(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    Ok(a.axpby(1.0, b, -1.0)?.max_abs())
}

/// Relative L2 velocity error of the periodic Kolmogorov flow at `t = 1`
/// (`N = 64`, `dt = 1e-3`).
pub fn kolmogorov_torus_error(nu: f64) -> Result<f64> {
    let (k, a, t_end) = (1, 1.0, 1.0);
    let grid = Grid::square(64)?;
    let forcing = kolmogorov_forcing(k, a)?;
    let mut integ = Integrator::new(grid, nu, &forcing, IntegratorConfig::default())?;
    let s0 = State::new(exact_kolmogorov_vorticity(0.0, nu, k, a, 0.0, &grid), 0.0, nu, Arc::new(forcing))?;
    let options = RunOptions {
        dt: Some(1e-3),
        keep_snapshots: true,
    };
    let traj = time::run(&mut integ, s0, t_end, t_end, &mut [], options).map_err(|e| InvlabError::Invalid(e.error.to_string()))?;
    let last = traj.snapshots.last().and_then(|s| s.omega.as_ref()).ok_or_else(|| {
        InvlabError::Invalid("Kolmogorov run kept no final state".into())
    })?;
    let (u, _) = spectral::velocity_from_vorticity(last);
    let (ue, _) = spectral::velocity_from_vorticity(&exact_kolmogorov_vorticity(t_end, nu, k, a, 0.0, &grid));
    let num = u.axpby(1.0, &ue, -1.0)?.norm_sq();
    Ok((num / ue.norm_sq()).sqrt())
}

/// Relative L2 vorticity error of the channel Kolmogorov flow at `t = 1`
/// with `ny` wall-normal intervals (`nu = 0.1`, `k = 2`, `dt = 2e-3`).
pub fn kolmogorov_channel_error(ny: usize) -> Result<f64> {
    let (nu, k, a) = (0.1, 2, 1.0);
    let g = ChannelGrid::new(8, ny)?;
    let s0 = exact_channel_kolmogorov(0.0, nu, k, a, 0.0, &g)?;
    let mut solver = ChannelSolver::for_state(&s0, ChannelConfig::default())?;
    let traj = channel_run(&mut solver, &s0, 1.0, 0.5, Some(2e-3)).map_err(|e| InvlabError::Invalid(e.error.to_string()))?;
    let exact = exact_channel_kolmogorov(1.0, nu, k, a, 0.0, &g)?;
    let (_, w) = traj
        .snapshots
        .last()
        .ok_or_else(|| InvlabError::Invalid("channel run kept no final state".into()))?;
    Ok(rel_l2(w, &exact.omega))
}

/// Exact Kolmogorov flow on the torus, viscous and inviscid.
pub fn criterion_1() -> Vec<Check> {
    [(0.1, "torus Kolmogorov rel. velocity error, nu = 0.1"), (0.0, "torus Kolmogorov rel. velocity error, nu = 0")]
        .into_iter()
        .map(|(nu, name)| match kolmogorov_torus_error(nu) {
            Ok(e) => Check::at_most(1, name, e, 1e-6),
            Err(e) => Check::failed(1, name, &e),
        })
        .collect()
}

/// Exact Kolmogorov flow in the channel and second-order convergence in `ny`.
pub fn criterion_2() -> Vec<Check> {
    let coarse = kolmogorov_channel_error(64);
    let fine = kolmogorov_channel_error(128);
    let mut out = Vec::new();
    match &fine {
        Ok(e) => out.push(Check::at_most(2, "channel Kolmogorov rel. error, ny = 128", *e, 1e-3)),
        Err(e) => out.push(Check::failed(2, "channel Kolmogorov, ny = 128", e)),
    }
    match (coarse, fine) {
        (Ok(c), Ok(f)) => {
            let ratio = c / f;
            out.push(Check::at_most(2, format!("|e64 / e128 - 4| (ratio {ratio:.3})"), (ratio - 4.0).abs(), 0.5));
        }
        (Err(e), _) | (_, Err(e)) => out.push(Check::failed(2, "channel Kolmogorov, ny = 64", &e)),
    }
    out
}

/// Worst case over `samples` seeded random fields of each discrete identity.
pub fn criterion_3(seed: u64, samples: usize) -> Vec<Check> {
    match identity_residuals(seed, samples) {
        Ok(r) => vec![
            Check::at_most(3, "rel. gap int omega^2 vs int |grad u|^2", r[0], 1e-10),
            Check::at_most(3, "rel. gap advective vs conservative nonlinearity", r[1], 1e-10),
            Check::at_most(3, "rel. gap commutator vs filter identity", r[2], 1e-8),
            Check::at_most(3, "rel. spectral round-trip error", r[3], 1e-12),
            Check::at_most(3, "rel. max |div perp-grad psi|", r[4], 1e-10),
        ],
        Err(e) => vec![Check::failed(3, "discrete identities", &e)],
    }
}

fn identity_residuals(seed: u64, samples: usize) -> Result<[f64; 5]> {
    let g = Grid::square(64)?;
    let m = mollify::make_mollifier(0.3, KernelProfile::DefaultBump, &g)?;
    let mut worst = [0.0_f64; 5];
    for i in 0..samples as u64 {
        let s = seed.wrapping_mul(1_000_003).wrapping_add(i);
        let omega = random_field(&g, 6, 1.0, s);
        let other = random_field(&g, 6, 1.0, s ^ 0x9e37_79b9_7f4a_7c15);
        let (u, psi) = spectral::velocity_from_vorticity(&omega);

        let z = enstrophy(&omega);
        let enst = (z - grad_norm_sq(&u)).abs() / z;

        let adv = spectral::nonlinear_term(&u, &omega)?;
        let cons = spectral::nonlinear_term_conservative(&u)?;
        let nonlinear = max_diff(&adv, &cons)? / adv.max_abs().max(f64::MIN_POSITIVE);

        let direct = mollify::commutator(&omega, &other, &m)?;
        let via = mollify::commutator_via_filters(&omega, &other, &m)?;
        let comm = max_diff(direct.get(0, 0), &via)? / (1.0 + omega.max_abs() * other.max_abs());

        let back = spectral::to_physical(&spectral::to_spectral(&omega.physical())?)?;
        let round = max_diff(&back, &omega.physical())? / omega.max_abs();

        let perp = spectral::perp_gradient(&psi.psi);
        let div = spectral::divergence(&perp)?.max_abs() / perp.max_magnitude();

        for (w, r) in worst.iter_mut().zip([enst, nonlinear, comm, round, div]) {
            *w = w.max(r);
        }
    }
    Ok(worst)
}

/// Composite Simpson rule on uniform samples (even number of intervals).
fn simpson(h: f64, y: &[f64]) -> f64 {
    let n = y.len() - 1;
    debug_assert!(n.is_multiple_of(2) && n > 0);
    let inner: f64 = y[1..n].iter().enumerate().map(|(i, v)| if i % 2 == 0 { 4.0 * v } else { 2.0 * v }).sum();
    h / 3.0 * (y[0] + inner + y[n])
}

/// Unforced run from seeded random data, sampling energy and enstrophy at
/// every cadence point.
fn budget_series(n: usize, nu: f64, cadence: f64, seed: u64) -> Result<Vec<(f64, f64, f64)>> {
    let grid = Grid::square(n)?;
    let forcing = ForcingSpec::none();
    let mut integ = Integrator::new(grid, nu, &forcing, IntegratorConfig::default())?;
    let s0 = State::new(random_field(&grid, 4, 0.5, seed), 0.0, nu, Arc::new(forcing))?;
    let mut series = Vec::new();
    let mut sink = |s: &State| {
        series.push((s.t, energy(&s.velocity()), enstrophy(&s.omega)));
        Ok(())
    };
    let options = RunOptions {
        dt: Some(1e-3),
        keep_snapshots: false,
    };
    time::run(&mut integ, s0, 1.0, cadence, &mut [&mut sink], options).map_err(|e| InvlabError::Invalid(e.error.to_string()))?;
    Ok(series)
}

/// Energy and enstrophy conservation without viscosity, and the viscous
/// energy law `E(T) - E(0) = -2 nu int Z dt`.
pub fn criterion_4(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    match budget_series(256, 0.0, 0.1, seed) {
        Ok(s) => {
            let (first, last) = (s[0], s[s.len() - 1]);
            out.push(Check::at_most(4, "inviscid rel. energy drift, N = 256", (last.1 - first.1).abs() / first.1, 1e-6));
            out.push(Check::at_most(4, "inviscid rel. enstrophy drift, N = 256", (last.2 - first.2).abs() / first.2, 1e-6));
        }
        Err(e) => out.push(Check::failed(4, "inviscid run", &e)),
    }
    let (nu, cadence) = (1e-2, 1e-3);
    match budget_series(128, nu, cadence, seed) {
        Ok(s) => {
            let z: Vec<f64> = s.iter().map(|r| r.2).collect();
            let dissipated = 2.0 * nu * simpson(cadence, &z);
            let change = s[s.len() - 1].1 - s[0].1;
            out.push(Check::at_most(4, "viscous energy-law rel. residual, N = 128", (change + dissipated).abs() / dissipated, 1e-5));
        }
        Err(e) => out.push(Check::failed(4, "viscous run", &e)),
    }
    out
}

/// Runs criteria 1 to 4 concurrently and returns their checks in order.
pub fn run_all(seed: u64) -> Vec<Check> {
    let (a, b, c, d) = std::thread::scope(|s| {
        let h1 = s.spawn(criterion_1);
        let h2 = s.spawn(criterion_2);
        let h3 = s.spawn(move || criterion_3(seed, 10));
        let h4 = s.spawn(move || criterion_4(seed));
        (h1.join(), h2.join(), h3.join(), h4.join())
    });
    [(1, a), (2, b), (3, c), (4, d)]
        .into_iter()
        .flat_map(|(n, r)| {
            r.unwrap_or_else(|_| vec![Check::failed(n, "check", &InvlabError::Invalid("panicked".into()))])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_for_cubics() {
        let h = 0.25;
        let y: Vec<f64> = (0..=8).map(|i| (i as f64 * h).powi(3)).collect();
        assert!((simpson(h, &y) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn summary_folds_checks_per_criterion() {
        let checks = [
            Check::at_most(2, "a", 1.0, 2.0),
            Check::at_most(1, "b", 1.0, 2.0),
            Check::at_most(2, "c", 3.0, 2.0),
            Check::at_most(1, "d", f64::NAN, 2.0),
        ];
        assert_eq!(summarize(&checks), vec![(1, false), (2, false)]);
        assert_eq!(exit_code(&checks), 2);
        assert_eq!(exit_code(&checks[..2]), 0);
        assert_eq!(exit_code(&[]), 2);
    }

    #[test]
    fn identities_hold_on_one_field() {
        for c in criterion_3(7, 1) {
            assert!(c.passed, "{}", c.line());
        }
    }
}
