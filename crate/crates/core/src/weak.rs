//! Divergence-free, compactly supported test functions
//! `Phi(x, t) = theta(t) perp psi(x)` and the distributional Euler pairings:
//! the nonlinear flux `N_Phi = int int (u (x) u) : grad Phi`, the residual
//! `R_Phi = (u, Phi_t) + N_Phi + (f, Phi)` and the viscous pairing
//! `-nu int int u . lap Phi`.
//!
//! Pointwise values of `Phi` and its derivatives are analytic. Pairings with
//! grid fields use the exact Fourier projection of `psi` onto the modes the
//! solver resolves (`|m| <= n/3` per axis); every pairing is then an exact
//! integral for band-limited fields, so discrete integration by parts and
//! `div Phi = 0` hold to rounding.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::trapezoid_weights;
use crate::error::{Error, Result};
use crate::fft;
use crate::forcing::ForcingSpec;
use crate::mollify::{self, MollifierSpec};
use crate::region::CompactRegion;
use crate::spectral::{self, Axis, Grid, ScalarField, VectorField};
use crate::time::Trajectory;

/// `b(s) = exp(sigma - sigma / (1 - s^2))` and its first three derivatives;
/// zero for `|s| >= 1`.
pub fn bump_derivatives(s: f64, sigma: f64) -> [f64; 4] {
    if s.abs() >= 1.0 {
        return [0.0; 4];
    }
    let d = 1.0 - s * s;
    let b = (sigma - sigma / d).exp();
    let q1 = -2.0 * sigma * s / (d * d);
    let q2 = -2.0 * sigma * (1.0 + 3.0 * s * s) / (d * d * d);
    let q3 = -24.0 * sigma * s * (1.0 + s * s) / (d * d * d * d);
    [b, q1 * b, (q2 + q1 * q1) * b, (q3 + 3.0 * q1 * q2 + q1 * q1 * q1) * b]
}

/// Derivatives (in `s`) of `b(s) cos(m pi s)`.
fn profile_derivatives(s: f64, sigma: f64, m: u32) -> [f64; 4] {
    let b = bump_derivatives(s, sigma);
    if m == 0 {
        return b;
    }
    let w = m as f64 * std::f64::consts::PI;
    let (sn, cs) = (w * s).sin_cos();
    let c = [cs, -w * sn, -w * w * cs, w * w * w * sn];
    [
        b[0] * c[0],
        b[1] * c[0] + b[0] * c[1],
        b[2] * c[0] + 2.0 * b[1] * c[1] + b[0] * c[2],
        b[3] * c[0] + 3.0 * b[2] * c[1] + 3.0 * b[1] * c[2] + b[0] * c[3],
    ]
}

/// `Phi = theta(t) perp psi(x)` with `psi(x, y) = X(x) Y(y)` a product of
/// bumps rescaled to the support box; `X` optionally carries an oscillation
/// `cos(m pi s)` giving interior sign changes.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub name: String,
    pub support: CompactRegion,
    pub t1: f64,
    pub t2: f64,
    pub sigma: f64,
    pub oscillation: u32,
}

/// Builds a test function supported in `support x (t1, t2)`.
pub fn make_test_function(support: CompactRegion, tspan: (f64, f64), sigma: f64) -> Result<TestFunction> {
    let (t1, t2) = tspan;
    if !(t1.is_finite() && t2.is_finite() && t2 > t1) {
        return Err(Error::InvalidArgument(format!("degenerate time span [{t1}, {t2}]")));
    }
    if !(support.width() > 0.0 && support.height() > 0.0) {
        return Err(Error::InvalidArgument(format!("degenerate support box {}", support.name)));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("smoothness scale {sigma} must be positive")));
    }
    Ok(TestFunction {
        name: support.name.clone(),
        support,
        t1,
        t2,
        sigma,
        oscillation: 0,
    })
}

impl TestFunction {
    pub fn with_oscillation(mut self, m: u32) -> Self {
        self.oscillation = m;
        self
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    fn half_widths(&self) -> (f64, f64) {
        (self.support.width() / 2.0, self.support.height() / 2.0)
    }

    fn centre(&self) -> (f64, f64) {
        ((self.support.x0 + self.support.x1) / 2.0, (self.support.y0 + self.support.y1) / 2.0)
    }

    /// Physical-space derivatives `X^(n)(x)`.
    fn x_profile(&self, x: f64) -> [f64; 4] {
        let (hx, _) = self.half_widths();
        let d = profile_derivatives((x - self.centre().0) / hx, self.sigma, self.oscillation);
        [d[0], d[1] / hx, d[2] / (hx * hx), d[3] / (hx * hx * hx)]
    }

    fn y_profile(&self, y: f64) -> [f64; 4] {
        let (_, hy) = self.half_widths();
        let d = bump_derivatives((y - self.centre().1) / hy, self.sigma);
        [d[0], d[1] / hy, d[2] / (hy * hy), d[3] / (hy * hy * hy)]
    }

    /// `theta(t)` and `theta'(t)`; `theta` peaks at one mid-span.
    pub fn time_profile(&self, t: f64) -> (f64, f64) {
        let h = (self.t2 - self.t1) / 2.0;
        let d = bump_derivatives((t - (self.t1 + self.t2) / 2.0) / h, 1.0);
        (d[0], d[1] / h)
    }

    pub fn psi(&self, x: f64, y: f64) -> f64 {
        self.x_profile(x)[0] * self.y_profile(y)[0]
    }

    /// `Phi(x, t) = theta(t) (-d2 psi, d1 psi)`.
    pub fn phi(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let (a, b) = (self.x_profile(x), self.y_profile(y));
        let th = self.time_profile(t).0;
        [-th * a[0] * b[1], th * a[1] * b[0]]
    }

    /// `G[i][j] = d_j Phi_i`.
    pub fn grad_phi(&self, x: f64, y: f64, t: f64) -> [[f64; 2]; 2] {
        let (a, b) = (self.x_profile(x), self.y_profile(y));
        let th = self.time_profile(t).0;
        [
            [-th * a[1] * b[1], -th * a[0] * b[2]],
            [th * a[2] * b[0], th * a[1] * b[1]],
        ]
    }

    pub fn lap_phi(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let (a, b) = (self.x_profile(x), self.y_profile(y));
        let th = self.time_profile(t).0;
        [
            -th * (a[2] * b[1] + a[0] * b[3]),
            th * (a[3] * b[0] + a[1] * b[2]),
        ]
    }

    /// `sup_x |grad grad Phi|_F` at peak `theta`, sampled on a dense lattice
    /// over the support.
    pub fn hessian_sup(&self) -> f64 {
        let n = 400;
        let mut best = 0.0_f64;
        for q in 0..=n {
            let y = self.support.y0 + self.support.height() * q as f64 / n as f64;
            let b = self.y_profile(y);
            for p in 0..=n {
                let x = self.support.x0 + self.support.width() * p as f64 / n as f64;
                let a = self.x_profile(x);
                // d_k d_j Phi_i for Phi = (-X Y', X' Y)
                let h = [
                    -a[2] * b[1],
                    -a[1] * b[2],
                    -a[1] * b[2],
                    -a[0] * b[3],
                    a[3] * b[0],
                    a[2] * b[1],
                    a[2] * b[1],
                    a[1] * b[2],
                ];
                best = best.max(h.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
        }
        best
    }

    /// Fourier projection of `psi` onto the resolved modes of `grid`, with
    /// the spatial parts of `Phi`, `grad Phi` and `lap Phi`.
    pub fn project(&self, grid: &Grid) -> Result<ProjectedTestFunction> {
        let s = &self.support;
        if s.x0 < 0.0 || s.x1 > grid.lx() || s.y0 < 0.0 || s.y1 > grid.ly() {
            return Err(Error::InvalidArgument(format!(
                "support of {} leaves the {} x {} domain",
                self.name,
                grid.lx(),
                grid.ly()
            )));
        }
        let cx = project_1d(|x| self.x_profile(x)[0], grid.lx(), grid.nx());
        let cy = project_1d(|y| self.y_profile(y)[0], grid.ly(), grid.ny());
        let mut c = vec![Complex64::default(); grid.len()];
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                if spectral::dealias_mask(grid, i, j) {
                    c[j * grid.nx() + i] = cx[i] * cy[j];
                }
            }
        }
        let psi = ScalarField::from_coefficients(*grid, c)?;
        let phi = spectral::perp_gradient(&psi);
        let d = |f: &ScalarField, a: Axis| spectral::spectral_derivative(f, a, 1);
        let grad = [d(&phi.u1, Axis::X), d(&phi.u1, Axis::Y), d(&phi.u2, Axis::X), d(&phi.u2, Axis::Y)];
        let lap = VectorField {
            u1: spectral::laplacian(&phi.u1),
            u2: spectral::laplacian(&phi.u2),
            divergence_free: true,
        };
        Ok(ProjectedTestFunction {
            grid: *grid,
            psi,
            phi,
            grad,
            lap,
        })
    }
}

/// Fourier coefficients (normalised, FFT ordering) of a smooth periodic
/// function on `[0, l)`, from dense oversampling; only `|m| <= n/3` kept.
fn project_1d(f: impl Fn(f64) -> f64, l: f64, n: usize) -> Vec<Complex64> {
    let m = 8192usize.max(16 * n);
    let mut buf: Vec<Complex64> = (0..m).map(|i| Complex64::new(f(l * i as f64 / m as f64), 0.0)).collect();
    fft::forward_1d(&mut buf);
    (0..n)
        .map(|i| {
            let k = fft::mode(i, n);
            if (k.unsigned_abs() as f64) > n as f64 / 3.0 {
                Complex64::default()
            } else {
                buf[k.rem_euclid(m as i64) as usize]
            }
        })
        .collect()
}

/// Spatial parts of a test function on a grid (all spectral).
#[derive(Debug, Clone)]
pub struct ProjectedTestFunction {
    pub grid: Grid,
    pub psi: ScalarField,
    /// `perp psi`.
    pub phi: VectorField,
    /// `[d1 Phi_1, d2 Phi_1, d1 Phi_2, d2 Phi_2]`.
    pub grad: [ScalarField; 4],
    pub lap: VectorField,
}

/// `int a b dx` by Parseval; exact for band-limited fields.
fn pair(a: &ScalarField, b: &ScalarField) -> f64 {
    let (ca, cb) = (a.spectral_coefficients(), b.spectral_coefficients());
    a.grid().area() * ca.iter().zip(&cb).map(|(x, y)| (x * y.conj()).re).sum::<f64>()
}

impl ProjectedTestFunction {
    /// `int u . perp psi dx`.
    pub fn pair_velocity(&self, u: &VectorField) -> Result<f64> {
        self.grid.check_same(u.grid())?;
        Ok(pair(&u.u1, &self.phi.u1) + pair(&u.u2, &self.phi.u2))
    }

    /// `int (u (x) u) : grad perp psi dx`, products evaluated alias-free.
    pub fn pair_flux(&self, u: &VectorField) -> Result<f64> {
        self.grid.check_same(u.grid())?;
        let p = spectral::padded_product;
        let (u11, u12, u22) = (p(&u.u1, &u.u1)?, p(&u.u1, &u.u2)?, p(&u.u2, &u.u2)?);
        Ok(pair(&u11, &self.grad[0]) + pair(&u12, &self.grad[1]) + pair(&u12, &self.grad[2]) + pair(&u22, &self.grad[3]))
    }

    /// `int (a (x) b) : G dx` for a tensor of precomputed components and a
    /// gradient-like tensor `G` (row-major `[11, 12, 21, 22]`).
    fn pair_tensor(comps: &[ScalarField; 4], g: &[ScalarField; 4]) -> f64 {
        comps.iter().zip(g).map(|(a, b)| pair(a, b)).sum()
    }

    /// `int u . lap perp psi dx`.
    pub fn pair_laplacian(&self, u: &VectorField) -> Result<f64> {
        self.grid.check_same(u.grid())?;
        Ok(pair(&u.u1, &self.lap.u1) + pair(&u.u2, &self.lap.u2))
    }
}

/// Default battery of five test functions: boxes and time windows spread
/// over the domain and `[0, t_end]`, one with an interior sign change. Box
/// centres are jittered reproducibly from `seed`.
pub fn default_battery(lx: f64, ly: f64, t_end: f64, seed: u64) -> Result<Vec<TestFunction>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (centre x, centre y, half width x, half width y, t1, t2, sigma, oscillation) in domain / span units
    let layout = [
        ("phi_centre", 0.50, 0.50, 0.25, 0.25, 0.10, 0.90, 1.0, 0),
        ("phi_lower_left", 0.30, 0.30, 0.18, 0.20, 0.20, 0.80, 1.0, 0),
        ("phi_upper_right", 0.70, 0.72, 0.15, 0.15, 0.10, 0.60, 1.0, 0),
        ("phi_oscillating", 0.50, 0.45, 0.30, 0.22, 0.30, 0.90, 1.0, 2),
        ("phi_wide", 0.50, 0.50, 0.40, 0.35, 0.05, 0.95, 2.0, 0),
    ];
    let mut out = Vec::with_capacity(layout.len());
    for (name, cx, cy, hx, hy, a, b, sigma, m) in layout {
        let jx = rng.random_range(-0.03..0.03);
        let jy = rng.random_range(-0.03..0.03);
        let (cx, cy) = ((cx + jx) * lx, (cy + jy) * ly);
        let (hx, hy) = (hx * lx, hy * ly);
        let support = CompactRegion::interior(name, cx - hx, cx + hx, cy - hy, cy + hy, lx, ly)?;
        out.push(make_test_function(support, (a * t_end, b * t_end), sigma)?.with_oscillation(m).named(name));
    }
    Ok(out)
}

/// All weak-form pairings of one run with one test function.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakPairings {
    pub name: String,
    /// `(u, Phi_t)`.
    pub time_term: f64,
    /// `N_Phi`.
    pub n_phi: f64,
    /// `(f, Phi)`.
    pub forcing_term: f64,
    /// `R_Phi = time_term + n_phi + forcing_term`.
    pub residual: f64,
    /// `-nu int int u . lap Phi`.
    pub viscous: f64,
    pub warnings: Vec<String>,
}

/// Velocity history at cadence points.
pub type VelocityHistory = [(f64, VectorField)];

fn check_coverage(times: &[f64], tf: &TestFunction) -> Result<Vec<String>> {
    let (first, last) = (times[0], times[times.len() - 1]);
    if first > tf.t1 + 1e-12 || last < tf.t2 - 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "trajectory [{first}, {last}] does not cover the support [{}, {}] of {}",
            tf.t1, tf.t2, tf.name
        )));
    }
    let gap = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let mut warnings = Vec::new();
    if gap > (tf.t2 - tf.t1) / 8.0 {
        warnings.push(format!(
            "cadence gap {gap} exceeds (T1 - t1)/8 = {} for {}; time quadrature is inaccurate",
            (tf.t2 - tf.t1) / 8.0,
            tf.name
        ));
    }
    Ok(warnings)
}

/// Evaluates every pairing of a velocity history against `tf`, with time
/// integrals by the trapezoid rule on the history's times.
pub fn weak_pairings(
    history: &VelocityHistory,
    nu: f64,
    forcing: &ForcingSpec,
    tf: &TestFunction,
) -> Result<WeakPairings> {
    if history.is_empty() {
        return Err(Error::InvalidArgument("empty history".into()));
    }
    let times: Vec<f64> = history.iter().map(|h| h.0).collect();
    let warnings = check_coverage(&times, tf)?;
    let grid = *history[0].1.grid();
    let proj = tf.project(&grid)?;
    let f_pair = if forcing.is_zero() {
        0.0
    } else {
        proj.pair_velocity(&forcing.velocity(&grid)?)?
    };
    let w = trapezoid_weights(&times);
    let (mut time_term, mut n_phi, mut theta_int, mut lap) = (0.0, 0.0, 0.0, 0.0);
    for ((t, u), wt) in history.iter().zip(&w) {
        let (th, dth) = tf.time_profile(*t);
        if th == 0.0 && dth == 0.0 {
            continue;
        }
        time_term += wt * dth * proj.pair_velocity(u)?;
        n_phi += wt * th * proj.pair_flux(u)?;
        lap += wt * th * proj.pair_laplacian(u)?;
        theta_int += wt * th;
    }
    let forcing_term = f_pair * theta_int;
    Ok(WeakPairings {
        name: tf.name.clone(),
        time_term,
        n_phi,
        forcing_term,
        residual: time_term + n_phi + forcing_term,
        viscous: -nu * lap,
        warnings,
    })
}

/// `N_Phi` of a trajectory.
pub fn nonlinear_flux(traj: &Trajectory, tf: &TestFunction) -> Result<f64> {
    Ok(weak_pairings(&traj.velocities()?, traj.nu(), &ForcingSpec::none(), tf)?.n_phi)
}

/// `(R_Phi, -nu int int u . lap Phi)` of a trajectory.
pub fn euler_residual(traj: &Trajectory, forcing: &ForcingSpec, tf: &TestFunction) -> Result<(f64, f64)> {
    let p = weak_pairings(&traj.velocities()?, traj.nu(), forcing, tf)?;
    Ok((p.residual, p.viscous))
}

/// Per-test-function series across a viscosity sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiSeries {
    pub name: String,
    /// Viscosities in sweep order (decreasing).
    pub nus: Vec<f64>,
    pub n_phi: Vec<f64>,
    pub residual: Vec<f64>,
    pub viscous: Vec<f64>,
    /// `|N_Phi(nu_n) - N_Phi(nu_{n+1})|`.
    pub deltas: Vec<f64>,
    /// Log-log slope of `|R_Phi|` against `nu` over the viscous runs.
    pub slope: Option<f64>,
    pub residual_decreasing: bool,
    pub deltas_decreasing: bool,
    /// `|R_Phi|` decreasing and slope in `[0.8, 1.2]`.
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakResidualReport {
    pub series: Vec<PhiSeries>,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Tabulates `N_Phi`, its successive differences and `R_Phi` across a sweep.
/// `runs` holds `(nu, pairings per test function)` in sweep order; every run
/// must list the same test functions.
pub fn nphi_convergence(runs: &[(f64, Vec<WeakPairings>)]) -> Result<WeakResidualReport> {
    if runs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two runs".into()));
    }
    let names: Vec<&str> = runs[0].1.iter().map(|p| p.name.as_str()).collect();
    for (nu, ps) in runs {
        if ps.iter().map(|p| p.name.as_str()).ne(names.iter().copied()) {
            return Err(Error::InvalidArgument(format!("run nu = {nu} has a different test-function list")));
        }
    }
    let mut series = Vec::with_capacity(names.len());
    for (k, name) in names.iter().enumerate() {
        let nus: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let n_phi: Vec<f64> = runs.iter().map(|r| r.1[k].n_phi).collect();
        let residual: Vec<f64> = runs.iter().map(|r| r.1[k].residual).collect();
        let viscous: Vec<f64> = runs.iter().map(|r| r.1[k].viscous).collect();
        let deltas: Vec<f64> = n_phi.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
        let (vnu, vres): (Vec<f64>, Vec<f64>) = nus
            .iter()
            .zip(&residual)
            .filter(|(nu, _)| **nu > 0.0)
            .map(|(nu, r)| (*nu, r.abs()))
            .unzip();
        let slope = loglog_slope(&vnu, &vres);
        let residual_decreasing = vres.windows(2).all(|w| w[1] < w[0]);
        let deltas_decreasing = deltas.windows(2).all(|w| w[1] < w[0]);
        let consistent = residual_decreasing && slope.is_some_and(|s| (0.8..=1.2).contains(&s));
        series.push(PhiSeries {
            name: name.to_string(),
            nus,
            n_phi,
            residual,
            viscous,
            deltas,
            slope,
            residual_decreasing,
            deltas_decreasing,
            consistent,
        });
    }
    Ok(WeakResidualReport { series })
}

/// Terms of `N_Phi = int (u_r (x) u_r) : grad Phi + int rho_r(u, u) : grad Phi +
/// int (u (x) u) : (grad Phi - (grad Phi)_r)` at one instant (spatial part,
/// `theta = 1`). Evaluated on a grid of twice the resolution so the filtered
/// products stay alias-free.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredFlux {
    pub n_phi: f64,
    pub filtered: f64,
    pub commutator: f64,
    pub remainder: f64,
    /// `int (u (x) u) : (grad Phi)_r` and `int (u (x) u)_r : grad Phi`.
    pub adjoint_pair: (f64, f64),
    /// `r C_Phi E` with `E = int_K |u|^2` over the support dilated by `2r`.
    pub remainder_bound: f64,
}

/// `C_Phi = (sum_n w_n |z_n|) sup |grad grad Phi|_F`.
pub fn c_phi(tf: &TestFunction, m: &MollifierSpec) -> f64 {
    m.first_moment() * tf.hessian_sup()
}

pub fn filtered_flux(u: &VectorField, tf: &TestFunction, r: f64) -> Result<FilteredFlux> {
    let g = *u.grid();
    let fine = Grid::new(2 * g.nx(), 2 * g.ny(), g.lx(), g.ly())?;
    let up = |f: &ScalarField| spectral::resample(&f.spectral(), fine);
    let uf = VectorField {
        u1: up(&u.u1)?,
        u2: up(&u.u2)?,
        divergence_free: u.divergence_free,
    };
    // the test function stays at the coarse grid's resolved band
    let coarse = tf.project(&g)?;
    let grad: Vec<ScalarField> = coarse.grad.iter().map(up).collect::<Result<_>>()?;
    let grad: [ScalarField; 4] = grad.try_into().expect("four components");
    let m = mollify::make_mollifier(r, mollify::KernelProfile::DefaultBump, &fine)?;
    let comps = |a: &VectorField, b: &VectorField| -> Result<[ScalarField; 4]> {
        Ok([
            a.u1.product(&b.u1)?,
            a.u1.product(&b.u2)?,
            a.u2.product(&b.u1)?,
            a.u2.product(&b.u2)?,
        ])
    };
    let uu = comps(&uf, &uf)?;
    let n_phi = ProjectedTestFunction::pair_tensor(&uu, &grad);
    let ur = mollify::filter_vector(&uf, &m);
    let filtered = ProjectedTestFunction::pair_tensor(&comps(&ur, &ur)?, &grad);
    let rho = mollify::commutator_tensor(&uf, &uf, &m)?;
    let rho_c: [ScalarField; 4] = [rho.get(0, 0).clone(), rho.get(0, 1).clone(), rho.get(1, 0).clone(), rho.get(1, 1).clone()];
    let commutator = ProjectedTestFunction::pair_tensor(&rho_c, &grad);
    let grad_r: [ScalarField; 4] = grad.clone().map(|c| mollify::filter(&c, &m));
    let diff: [ScalarField; 4] = [0, 1, 2, 3].map(|k| grad[k].axpby(1.0, &grad_r[k], -1.0).expect("same grid"));
    let remainder = ProjectedTestFunction::pair_tensor(&uu, &diff);
    let uu_r: [ScalarField; 4] = uu.clone().map(|c| mollify::filter(&c, &m));
    let adjoint_pair = (
        ProjectedTestFunction::pair_tensor(&uu, &grad_r),
        ProjectedTestFunction::pair_tensor(&uu_r, &grad),
    );
    let s = &tf.support;
    let k = CompactRegion::periodic(
        "support_dilated",
        s.x0 - 2.0 * r,
        s.x1 + 2.0 * r,
        s.y0 - 2.0 * r,
        s.y1 + 2.0 * r,
        g.lx(),
        g.ly(),
    )?;
    let w = k.cell_weights(&fine);
    let (a, b) = (uf.u1.physical_values(), uf.u2.physical_values());
    let e: f64 = (0..fine.len()).map(|p| w[p] * (a[p] * a[p] + b[p] * b[p])).sum::<f64>() * fine.cell_area();
    Ok(FilteredFlux {
        n_phi,
        filtered,
        commutator,
        remainder,
        adjoint_pair,
        remainder_bound: r * c_phi(tf, &m) * e,
    })
}
