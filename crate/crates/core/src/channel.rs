//! No-slip channel solver (periodic in `x`, walls at `y = 0` and `y = ly`) in
//! vorticity-streamfunction form, and the Kato dissipation diagnostics.
//!
//! Fourier in `x`, second-order central differences on `ny + 1` uniformly
//! spaced wall-normal nodes. The viscous term is Crank-Nicolson, advection is
//! Adams-Bashforth-2 (forward Euler on the first step). Wall vorticity follows
//! Thom's closure `omega_wall = 2 psi_adj / dy^2` (the sign for
//! `omega = lap psi`), imposed implicitly: per `x` mode the closure couples the
//! two wall values to the interior solve through a rank-2 correction of the
//! tridiagonal system.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftDirection;
use thiserror::Error;

use crate::error::{Error, Result};
use crate::forcing::exact_kolmogorov_coefficient;
use crate::weak::bump_derivatives;

/// `nx` Fourier nodes on `[0, lx)` and `ny + 1` nodes on `[0, ly]`; nodes `0`
/// and `ny` lie on the walls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGrid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl ChannelGrid {
    /// Channel `[0, 2 pi) x [0, pi]`.
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        ChannelGrid::with_size(nx, ny, 2.0 * PI, PI)
    }

    pub fn with_size(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || !nx.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("nx = {nx} must be even and >= 4")));
        }
        if ny < 4 {
            return Err(Error::InvalidGrid(format!("ny = {ny} must be >= 4")));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!("domain {lx} x {ly} must be positive")));
        }
        Ok(ChannelGrid { nx, ny, lx, ly })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Number of wall-normal intervals.
    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn rows(&self) -> usize {
        self.ny + 1
    }

    pub fn len(&self) -> usize {
        self.nx * self.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        if j == self.ny {
            self.ly
        } else {
            j as f64 * self.dy()
        }
    }

    /// Signed wavenumber of FFT index `i`.
    pub fn kx(&self, i: usize) -> f64 {
        crate::fft::mode(i, self.nx) as f64 * 2.0 * PI / self.lx
    }

    fn keep(&self, i: usize) -> bool {
        (crate::fft::mode(i, self.nx).unsigned_abs() as f64) <= self.nx as f64 / 3.0
    }

    /// Trapezoid weights in `y` (including `dy`).
    pub fn y_weights(&self) -> Vec<f64> {
        let dy = self.dy();
        (0..self.rows())
            .map(|j| if j == 0 || j == self.ny { dy / 2.0 } else { dy })
            .collect()
    }

    fn check_same(&self, other: &ChannelGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Time-constant channel forcing.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ChannelForcing {
    #[default]
    None,
    /// `f = (a sin(k y), 0)` with even `k`, so the mean flux vanishes.
    Kolmogorov { k: u32, amplitude: f64 },
}

/// Kolmogorov channel forcing. The streamfunction vanishes on both walls,
/// which fixes the net flux to zero, so `k` must be even.
pub fn channel_kolmogorov_forcing(k: u32, amplitude: f64) -> Result<ChannelForcing> {
    if k == 0 || !k.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "channel Kolmogorov wavenumber must be even and positive (got {k}): odd modes carry net flux"
        )));
    }
    if !amplitude.is_finite() {
        return Err(Error::InvalidArgument("amplitude must be finite".into()));
    }
    Ok(ChannelForcing::Kolmogorov { k, amplitude })
}

impl ChannelForcing {
    pub fn id(&self) -> String {
        match self {
            ChannelForcing::None => "none".into(),
            ChannelForcing::Kolmogorov { k, amplitude } => format!("kolmogorov(k={k},a={amplitude})"),
        }
    }

    /// `f1` as a function of `y` (`f2 = 0`).
    fn f1(&self, y: f64) -> f64 {
        match *self {
            ChannelForcing::None => 0.0,
            ChannelForcing::Kolmogorov { k, amplitude } => amplitude * (k as f64 * y).sin(),
        }
    }

    /// Vorticity source `g = -d_y f1` as a function of `y`.
    fn g(&self, y: f64) -> f64 {
        match *self {
            ChannelForcing::None => 0.0,
            ChannelForcing::Kolmogorov { k, amplitude } => {
                let k = k as f64;
                -amplitude * k * (k * y).cos()
            }
        }
    }
}

/// Row-wise transforms along `x` (normalised forward).
struct RowFft {
    nx: usize,
    fwd: Arc<dyn rustfft::Fft<f64>>,
    inv: Arc<dyn rustfft::Fft<f64>>,
}

impl RowFft {
    fn new(nx: usize) -> Self {
        RowFft {
            nx,
            fwd: crate::fft::plan(nx, FftDirection::Forward),
            inv: crate::fft::plan(nx, FftDirection::Inverse),
        }
    }

    fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut c);
        let s = 1.0 / self.nx as f64;
        c.iter_mut().for_each(|v| *v *= s);
        c
    }

    fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut c = coeffs.to_vec();
        self.inv.process(&mut c);
        c.iter().map(|v| v.re).collect()
    }
}

/// Constant-coefficient symmetric tridiagonal matrix `(off, diag, off)`,
/// LU-factored by the Thomas algorithm.
#[derive(Debug, Clone)]
struct Tridiag {
    off: f64,
    cp: Vec<f64>,
    inv: Vec<f64>,
}

impl Tridiag {
    fn new(diag: f64, off: f64, n: usize) -> Self {
        let mut cp = vec![0.0; n];
        let mut inv = vec![0.0; n];
        inv[0] = 1.0 / diag;
        cp[0] = off * inv[0];
        for i in 1..n {
            let den = diag - off * cp[i - 1];
            inv[i] = 1.0 / den;
            cp[i] = off * inv[i];
        }
        Tridiag { off, cp, inv }
    }

    fn solve<T>(&self, x: &mut [T])
    where
        T: Copy + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let n = x.len();
        x[0] = x[0] * self.inv[0];
        for i in 1..n {
            x[i] = (x[i] - x[i - 1] * self.off) * self.inv[i];
        }
        for i in (0..n - 1).rev() {
            x[i] = x[i] - x[i + 1] * self.cp[i];
        }
    }
}

/// Per-mode Dirichlet Poisson operators `d_yy - kx^2` on the interior nodes.
fn poisson_factors(g: &ChannelGrid) -> Vec<Tridiag> {
    let dy2 = g.dy() * g.dy();
    (0..g.nx)
        .map(|i| Tridiag::new(-2.0 / dy2 - g.kx(i).powi(2), 1.0 / dy2, g.ny - 1))
        .collect()
}

/// Streamfunction coefficients (all rows, zero on the walls) from vorticity
/// coefficients.
fn solve_psi(g: &ChannelGrid, poisson: &[Tridiag], w: &[Complex64]) -> Vec<Complex64> {
    let (nx, ny) = (g.nx, g.ny);
    let mut psi = vec![Complex64::default(); g.len()];
    let mut col = vec![Complex64::default(); ny - 1];
    for i in 0..nx {
        if !g.keep(i) {
            continue;
        }
        for j in 1..ny {
            col[j - 1] = w[j * nx + i];
        }
        poisson[i].solve(&mut col);
        for j in 1..ny {
            psi[j * nx + i] = col[j - 1];
        }
    }
    psi
}

/// Channel vorticity (physical, row-major `j * nx + i`, `j = 0..=ny`) at a
/// time.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub grid: ChannelGrid,
    pub omega: Vec<f64>,
    pub t: f64,
    pub nu: f64,
    pub forcing: ChannelForcing,
    /// Advection coefficients and step size of the previous step (for AB2).
    prev_nonlinear: Option<(f64, Vec<Complex64>)>,
}

impl ChannelState {
    pub fn new(grid: ChannelGrid, omega: Vec<f64>, t: f64, nu: f64, forcing: ChannelForcing) -> Result<Self> {
        if omega.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "channel vorticity has {} values, grid needs {}",
                omega.len(),
                grid.len()
            )));
        }
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(Error::InvalidArgument(format!("viscosity {nu} must be non-negative")));
        }
        Ok(ChannelState {
            grid,
            omega,
            t,
            nu,
            forcing,
            prev_nonlinear: None,
        })
    }

    pub fn zeros(grid: ChannelGrid, nu: f64, forcing: ChannelForcing) -> Self {
        ChannelState::new(grid, vec![0.0; grid.len()], 0.0, nu, forcing).expect("consistent sizes")
    }

    pub fn max_abs_omega(&self) -> f64 {
        self.omega.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Per-row diagnostics of this state.
    pub fn fields(&self) -> ChannelFields {
        ChannelFields::new(&self.grid, &self.omega)
    }
}

/// Spectral representation of a channel snapshot with its streamfunction and
/// velocity.
#[derive(Debug, Clone)]
pub struct ChannelFields {
    pub grid: ChannelGrid,
    pub omega: Vec<Complex64>,
    pub psi: Vec<Complex64>,
    /// `u1 = -d_y psi` (central differences, zero on the walls).
    pub u1: Vec<Complex64>,
    /// `u2 = d_x psi`.
    pub u2: Vec<Complex64>,
}

impl ChannelFields {
    pub fn new(grid: &ChannelGrid, omega: &[f64]) -> Self {
        let g = *grid;
        let fft = RowFft::new(g.nx);
        let mut w = vec![Complex64::default(); g.len()];
        for j in 0..g.rows() {
            let row = fft.forward(&omega[j * g.nx..(j + 1) * g.nx]);
            for i in 0..g.nx {
                if g.keep(i) {
                    w[j * g.nx + i] = row[i];
                }
            }
        }
        let psi = solve_psi(&g, &poisson_factors(&g), &w);
        let (u1, u2) = velocity_coefficients(&g, &psi);
        ChannelFields {
            grid: g,
            omega: w,
            psi,
            u1,
            u2,
        }
    }

    /// Physical velocity at the nodes.
    pub fn velocity(&self) -> (Vec<f64>, Vec<f64>) {
        let g = self.grid;
        let fft = RowFft::new(g.nx);
        let mut a = Vec::with_capacity(g.len());
        let mut b = Vec::with_capacity(g.len());
        for j in 0..g.rows() {
            a.extend(fft.inverse(&self.u1[j * g.nx..(j + 1) * g.nx]));
            b.extend(fft.inverse(&self.u2[j * g.nx..(j + 1) * g.nx]));
        }
        (a, b)
    }

    /// `int |f|^2 dx` per row for a spectral row field (Parseval).
    fn row_norms(&self, f: &[Complex64]) -> Vec<f64> {
        let g = self.grid;
        (0..g.rows())
            .map(|j| g.lx * f[j * g.nx..(j + 1) * g.nx].iter().map(|c| c.norm_sqr()).sum::<f64>())
            .collect()
    }

    /// `int |u|^2 dx` per row.
    pub fn energy_profile(&self) -> Vec<f64> {
        let a = self.row_norms(&self.u1);
        let b = self.row_norms(&self.u2);
        a.iter().zip(&b).map(|(x, y)| x + y).collect()
    }

    /// `int omega^2 dx` per row.
    pub fn enstrophy_profile(&self) -> Vec<f64> {
        self.row_norms(&self.omega)
    }

    /// `int |grad u|^2 dx` per row, with `d_y u1 = -(omega + kx^2 psi)` and
    /// second-order differences for `d_y psi` (one-sided on the walls).
    pub fn gradient_profile(&self) -> Vec<f64> {
        let g = self.grid;
        let (nx, ny, dy) = (g.nx, g.ny, g.dy());
        let mut out = vec![0.0; g.rows()];
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..nx {
                let p = |jj: usize| self.psi[jj * nx + i];
                let dpsi = if j == 0 {
                    (p(0) * -3.0 + p(1) * 4.0 - p(2)) / (2.0 * dy)
                } else if j == ny {
                    (p(ny) * 3.0 - p(ny - 1) * 4.0 + p(ny - 2)) / (2.0 * dy)
                } else {
                    (p(j + 1) - p(j - 1)) / (2.0 * dy)
                };
                let k = g.kx(i);
                let ik = Complex64::new(0.0, k);
                let d1u1 = -(ik * dpsi);
                let d2u1 = -(self.omega[j * nx + i] + p(j) * (k * k));
                let d1u2 = -(p(j) * (k * k));
                let d2u2 = ik * dpsi;
                acc += d1u1.norm_sqr() + d2u1.norm_sqr() + d1u2.norm_sqr() + d2u2.norm_sqr();
            }
            *o = g.lx * acc;
        }
        out
    }

    /// Largest tangential wall velocity `|d_y psi|` from one-sided second
    /// order differences (the closure's `O(dy^2)` slip residual).
    pub fn wall_slip(&self) -> f64 {
        let g = self.grid;
        let (nx, ny, dy) = (g.nx, g.ny, g.dy());
        let fft = RowFft::new(nx);
        let mut lo = vec![Complex64::default(); nx];
        let mut hi = vec![Complex64::default(); nx];
        for i in 0..nx {
            let p = |jj: usize| self.psi[jj * nx + i];
            lo[i] = (p(0) * -3.0 + p(1) * 4.0 - p(2)) / (2.0 * dy);
            hi[i] = (p(ny) * 3.0 - p(ny - 1) * 4.0 + p(ny - 2)) / (2.0 * dy);
        }
        fft.inverse(&lo)
            .into_iter()
            .chain(fft.inverse(&hi))
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest wall-normal velocity on the walls (zero by construction).
    pub fn wall_normal(&self) -> f64 {
        let g = self.grid;
        let top = g.ny * g.nx;
        self.u2[..g.nx]
            .iter()
            .chain(&self.u2[top..top + g.nx])
            .fold(0.0, |m, c| m.max(c.norm()))
    }

    /// Discrete divergence `d_x u1 + delta_y u2` at interior nodes.
    pub fn divergence_max(&self) -> f64 {
        let g = self.grid;
        let (nx, ny, dy) = (g.nx, g.ny, g.dy());
        let mut m = 0.0_f64;
        for j in 1..ny {
            for i in 0..nx {
                let ik = Complex64::new(0.0, g.kx(i));
                let d = ik * self.u1[j * nx + i] + (self.u2[(j + 1) * nx + i] - self.u2[(j - 1) * nx + i]) / (2.0 * dy);
                m = m.max(d.norm());
            }
        }
        m
    }

    /// `int f . u dx` for a forcing depending on `y` only.
    pub fn forcing_work(&self, f: &ChannelForcing) -> f64 {
        let g = self.grid;
        let w = g.y_weights();
        (0..g.rows()).map(|j| w[j] * g.lx * f.f1(g.y(j)) * self.u1[j * g.nx].re).sum()
    }
}

fn velocity_coefficients(g: &ChannelGrid, psi: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let (nx, ny, dy) = (g.nx, g.ny, g.dy());
    let mut u1 = vec![Complex64::default(); g.len()];
    let mut u2 = vec![Complex64::default(); g.len()];
    for j in 1..ny {
        for i in 0..nx {
            u1[j * nx + i] = -(psi[(j + 1) * nx + i] - psi[(j - 1) * nx + i]) / (2.0 * dy);
            u2[j * nx + i] = Complex64::new(0.0, g.kx(i)) * psi[j * nx + i];
        }
    }
    (u1, u2)
}

/// `int_0^ly p(y) dy` of nodal values by the trapezoid rule.
pub fn integrate_profile(g: &ChannelGrid, p: &[f64]) -> f64 {
    g.y_weights().iter().zip(p).map(|(w, v)| w * v).sum()
}

/// Exact integral of the piecewise-linear interpolant of `p` over `[0, w]`.
fn linear_integral_from_wall(dy: f64, p: &[f64], w: f64) -> f64 {
    let mut acc = 0.0;
    let mut y = 0.0;
    let mut j = 0;
    while y < w && j + 1 < p.len() {
        let seg = (w - y).min(dy);
        let s = seg / dy;
        // linear from p[j] to p[j + 1], integrated over [0, s] of the cell
        acc += dy * (p[j] * s + (p[j + 1] - p[j]) * s * s / 2.0);
        y += dy;
        j += 1;
    }
    acc
}

/// Knobs of the channel integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub cfl: f64,
    pub u_floor: f64,
    pub dt_max: f64,
    pub enforce_cfl: bool,
    pub nonlinear: bool,
    pub blowup_threshold: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            cfl: 0.5,
            u_floor: 1e-8,
            dt_max: 1e-2,
            enforce_cfl: true,
            nonlinear: true,
            blowup_threshold: 1e8,
        }
    }
}

#[derive(Debug, Error)]
pub enum ChannelStepError {
    #[error("blow-up at t = {t}: {reason}")]
    BlowUp {
        t: f64,
        reason: String,
        last_valid: Box<ChannelState>,
    },
    #[error(transparent)]
    Core(#[from] Error),
}

/// Per-mode factors of one Crank-Nicolson step size.
struct StepFactors {
    helmholtz: Vec<Tridiag>,
    /// `A^{-1} e_first`, `A^{-1} e_last`.
    z: Vec<(Vec<f64>, Vec<f64>)>,
    /// Inverse of the 2x2 wall closure matrix.
    closure: Vec<[[f64; 2]; 2]>,
    alpha: f64,
}

/// Channel integrator with cached factorisations.
pub struct ChannelSolver {
    grid: ChannelGrid,
    nu: f64,
    config: ChannelConfig,
    fft: RowFft,
    poisson: Vec<Tridiag>,
    source: Vec<Complex64>,
    cache: HashMap<u64, Arc<StepFactors>>,
}

impl ChannelSolver {
    pub fn new(grid: ChannelGrid, nu: f64, forcing: ChannelForcing, config: ChannelConfig) -> Result<Self> {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(Error::InvalidArgument(format!("viscosity {nu} must be non-negative")));
        }
        let fft = RowFft::new(grid.nx);
        let mut source = vec![Complex64::default(); grid.len()];
        for j in 0..grid.rows() {
            // g depends on y only: a mean-mode source
            source[j * grid.nx] = Complex64::new(forcing.g(grid.y(j)), 0.0);
        }
        Ok(ChannelSolver {
            grid,
            nu,
            config,
            fft,
            poisson: poisson_factors(&grid),
            source,
            cache: HashMap::new(),
        })
    }

    pub fn for_state(s: &ChannelState, config: ChannelConfig) -> Result<Self> {
        ChannelSolver::new(s.grid, s.nu, s.forcing, config)
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    fn factors(&mut self, dt: f64) -> Arc<StepFactors> {
        if let Some(f) = self.cache.get(&dt.to_bits()) {
            return f.clone();
        }
        let g = self.grid;
        let (ny, dy2) = (g.ny, g.dy() * g.dy());
        let n = ny - 1;
        let alpha = self.nu * dt / (2.0 * dy2);
        let beta = 2.0 / dy2;
        let mut helmholtz = Vec::with_capacity(g.nx);
        let mut z = Vec::with_capacity(g.nx);
        let mut closure = Vec::with_capacity(g.nx);
        for i in 0..g.nx {
            let k2 = g.kx(i).powi(2);
            let a = Tridiag::new(1.0 + 2.0 * alpha + 0.5 * self.nu * dt * k2, -alpha, n);
            let unit = |first: bool| {
                let mut e = vec![0.0; n];
                e[if first { 0 } else { n - 1 }] = 1.0;
                a.solve(&mut e);
                e
            };
            let (z1, z2) = (unit(true), unit(false));
            let (mut p1, mut p2) = (z1.clone(), z2.clone());
            self.poisson[i].solve(&mut p1);
            self.poisson[i].solve(&mut p2);
            let ba = beta * alpha;
            let m = [[1.0 - ba * p1[0], -ba * p2[0]], [-ba * p1[n - 1], 1.0 - ba * p2[n - 1]]];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            closure.push([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]);
            helmholtz.push(a);
            z.push((z1, z2));
        }
        let f = Arc::new(StepFactors {
            helmholtz,
            z,
            closure,
            alpha,
        });
        if self.cache.len() >= 4 {
            self.cache.clear();
        }
        self.cache.insert(dt.to_bits(), f.clone());
        f
    }

    fn transform(&self, omega: &[f64]) -> Vec<Complex64> {
        let g = self.grid;
        let mut w = vec![Complex64::default(); g.len()];
        for j in 0..g.rows() {
            let row = self.fft.forward(&omega[j * g.nx..(j + 1) * g.nx]);
            for i in 0..g.nx {
                if g.keep(i) {
                    w[j * g.nx + i] = row[i];
                }
            }
        }
        w
    }

    /// Dealiased `u . grad omega` at interior rows and the largest speed.
    fn advection(&self, w: &[Complex64], psi: &[Complex64]) -> (Vec<Complex64>, f64) {
        let g = self.grid;
        let (nx, ny, dy) = (g.nx, g.ny, g.dy());
        let (u1, u2) = velocity_coefficients(&g, psi);
        let mut out = vec![Complex64::default(); g.len()];
        let mut umax = 0.0_f64;
        let mut wx = vec![Complex64::default(); nx];
        let mut wy = vec![Complex64::default(); nx];
        for j in 1..ny {
            for i in 0..nx {
                wx[i] = Complex64::new(0.0, g.kx(i)) * w[j * nx + i];
                wy[i] = (w[(j + 1) * nx + i] - w[(j - 1) * nx + i]) / (2.0 * dy);
            }
            let a = self.fft.inverse(&u1[j * nx..(j + 1) * nx]);
            let b = self.fft.inverse(&u2[j * nx..(j + 1) * nx]);
            let cx = self.fft.inverse(&wx);
            let cy = self.fft.inverse(&wy);
            let prod: Vec<f64> = (0..nx)
                .map(|i| {
                    umax = umax.max((a[i] * a[i] + b[i] * b[i]).sqrt());
                    a[i] * cx[i] + b[i] * cy[i]
                })
                .collect();
            let c = self.fft.forward(&prod);
            for i in 0..nx {
                if g.keep(i) {
                    out[j * nx + i] = c[i];
                }
            }
        }
        (out, umax)
    }

    fn cfl_bound(&self, umax: f64) -> f64 {
        let h = self.grid.dx().min(self.grid.dy());
        (self.config.cfl * h / umax.max(self.config.u_floor)).min(self.config.dt_max)
    }

    /// Largest admissible step from the advective CFL condition.
    pub fn cfl_dt(&self, s: &ChannelState) -> f64 {
        let f = s.fields();
        let (a, b) = f.velocity();
        let umax = a.iter().zip(&b).fold(0.0_f64, |m, (x, y)| m.max((x * x + y * y).sqrt()));
        self.cfl_bound(umax)
    }

    /// One Crank-Nicolson / Adams-Bashforth-2 step.
    pub fn step(&mut self, s: &ChannelState, dt: f64) -> std::result::Result<ChannelState, ChannelStepError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt = {dt} must be positive")).into());
        }
        self.grid.check_same(&s.grid)?;
        let g = self.grid;
        let (nx, ny, dy2) = (g.nx, g.ny, g.dy() * g.dy());
        let w = self.transform(&s.omega);
        let psi = solve_psi(&g, &self.poisson, &w);
        let (adv, umax) = if self.config.nonlinear {
            self.advection(&w, &psi)
        } else {
            (vec![Complex64::default(); g.len()], 0.0)
        };
        if self.config.enforce_cfl {
            let bound = self.cfl_bound(umax);
            if dt > bound * (1.0 + 1e-12) {
                return Err(Error::StepTooLarge { dt, bound }.into());
            }
        }
        // variable-step AB2 extrapolation
        let extrap: Vec<Complex64> = match &s.prev_nonlinear {
            Some((dt_prev, prev)) => {
                let r = dt / (2.0 * dt_prev);
                adv.iter().zip(prev).map(|(a, p)| a * (1.0 + r) - p * r).collect()
            }
            None => adv.clone(),
        };
        let f = self.factors(dt);
        let n = ny - 1;
        let beta = 2.0 / dy2;
        let mut out = vec![Complex64::default(); g.len()];
        let mut col = vec![Complex64::default(); n];
        for i in 0..nx {
            if !g.keep(i) {
                continue;
            }
            let k2 = g.kx(i).powi(2);
            let at = |j: usize| w[j * nx + i];
            for j in 1..ny {
                let lap = (at(j - 1) - at(j) * 2.0 + at(j + 1)) / dy2 - at(j) * k2;
                col[j - 1] = at(j) + lap * (0.5 * self.nu * dt) - extrap[j * nx + i] * dt + self.source[j * nx + i] * dt;
            }
            f.helmholtz[i].solve(&mut col);
            let mut s_end = col.clone();
            self.poisson[i].solve(&mut s_end);
            let rhs = [s_end[0] * beta, s_end[n - 1] * beta];
            let c = &f.closure[i];
            let w0 = rhs[0] * c[0][0] + rhs[1] * c[0][1];
            let w1 = rhs[0] * c[1][0] + rhs[1] * c[1][1];
            let (z1, z2) = &f.z[i];
            out[i] = w0;
            out[ny * nx + i] = w1;
            for j in 1..ny {
                out[j * nx + i] = col[j - 1] + (w0 * z1[j - 1] + w1 * z2[j - 1]) * f.alpha;
            }
        }
        let mut omega = Vec::with_capacity(g.len());
        for j in 0..g.rows() {
            omega.extend(self.fft.inverse(&out[j * nx..(j + 1) * nx]));
        }
        let t_new = s.t + dt;
        let blowup = |reason: String| ChannelStepError::BlowUp {
            t: t_new,
            reason,
            last_valid: Box::new(s.clone()),
        };
        if omega.iter().any(|v| !v.is_finite()) {
            return Err(blowup("non-finite vorticity".into()));
        }
        let m = omega.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if m > self.config.blowup_threshold {
            return Err(blowup(format!("||omega||_inf = {m:e}")));
        }
        Ok(ChannelState {
            grid: g,
            omega,
            t: t_new,
            nu: s.nu,
            forcing: s.forcing,
            prev_nonlinear: Some((dt, adv)),
        })
    }
}

/// Single step with a fresh solver and default configuration.
pub fn channel_step(s: &ChannelState, dt: f64) -> std::result::Result<ChannelState, ChannelStepError> {
    ChannelSolver::for_state(s, ChannelConfig::default())?.step(s, dt)
}

/// Vorticity snapshots of a channel run at cadence points.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrajectory {
    pub grid: ChannelGrid,
    pub nu: f64,
    pub forcing: ChannelForcing,
    pub snapshots: Vec<(f64, Vec<f64>)>,
}

impl ChannelTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.0).collect()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn last_state(&self) -> Option<ChannelState> {
        let (t, w) = self.snapshots.last()?;
        ChannelState::new(self.grid, w.clone(), *t, self.nu, self.forcing).ok()
    }
}

#[derive(Debug, Error)]
#[error("{error}")]
pub struct ChannelRunError {
    pub error: ChannelStepError,
    pub partial: Box<ChannelTrajectory>,
}

/// Integrates to `t_end`, recording the initial state and every cadence
/// point (steps shrink to land on them). `dt = None` uses the CFL step.
pub fn channel_run(
    solver: &mut ChannelSolver,
    s0: &ChannelState,
    t_end: f64,
    cadence: f64,
    dt: Option<f64>,
) -> std::result::Result<ChannelTrajectory, ChannelRunError> {
    let mut traj = ChannelTrajectory {
        grid: s0.grid,
        nu: s0.nu,
        forcing: s0.forcing,
        snapshots: vec![(s0.t, s0.omega.clone())],
    };
    let fail = |e: ChannelStepError, traj: ChannelTrajectory| ChannelRunError {
        error: e,
        partial: Box::new(traj),
    };
    if !(cadence > 0.0 && t_end >= s0.t) {
        return Err(fail(
            Error::InvalidArgument(format!("cadence {cadence} / end time {t_end} invalid")).into(),
            traj,
        ));
    }
    let mut s = s0.clone();
    let n_marks = ((t_end - s0.t) / cadence - 1e-9).ceil().max(0.0) as usize;
    for m in 1..=n_marks {
        let target = (s0.t + m as f64 * cadence).min(t_end);
        while s.t < target - 1e-12 * target.abs().max(1.0) {
            let base = match dt {
                Some(d) => d,
                None => solver.cfl_dt(&s),
            };
            let h = base.min(target - s.t);
            // avoid a sliver step just before the mark
            let h = if target - s.t - h < 1e-9 * base { target - s.t } else { h };
            match solver.step(&s, h) {
                Ok(next) => s = next,
                Err(e) => return Err(fail(e, traj)),
            }
        }
        s.t = target;
        traj.snapshots.push((s.t, s.omega.clone()));
    }
    Ok(traj)
}

/// Exact channel Kolmogorov state `omega = -y(t) a k cos(k y)` at every node.
pub fn exact_channel_kolmogorov(
    t: f64,
    nu: f64,
    k: u32,
    amplitude: f64,
    y0: f64,
    grid: &ChannelGrid,
) -> Result<ChannelState> {
    let forcing = channel_kolmogorov_forcing(k, amplitude)?;
    let kf = k as f64;
    let yt = exact_kolmogorov_coefficient(t, nu, kf * kf, y0);
    let mut omega = Vec::with_capacity(grid.len());
    for j in 0..grid.rows() {
        let v = -yt * amplitude * kf * (kf * grid.y(j)).cos();
        omega.extend(std::iter::repeat_n(v, grid.nx));
    }
    ChannelState::new(*grid, omega, t, nu, forcing)
}

/// Exact Kolmogorov channel trajectory sampled at `times`.
pub fn exact_channel_trajectory(
    times: &[f64],
    nu: f64,
    k: u32,
    amplitude: f64,
    grid: &ChannelGrid,
) -> Result<ChannelTrajectory> {
    let snapshots = times
        .iter()
        .map(|&t| Ok((t, exact_channel_kolmogorov(t, nu, k, amplitude, 0.0, grid)?.omega)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelTrajectory {
        grid: *grid,
        nu,
        forcing: channel_kolmogorov_forcing(k, amplitude)?,
        snapshots,
    })
}

/// Smooth compactly supported probe `phi = (c1, c2) b(x) b(y)` on a box in
/// the channel interior.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProbe {
    pub name: String,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub components: [f64; 2],
}

impl ChannelProbe {
    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        let sx = (2.0 * x - self.x0 - self.x1) / (self.x1 - self.x0);
        let sy = (2.0 * y - self.y0 - self.y1) / (self.y1 - self.y0);
        let b = bump_derivatives(sx, 1.0)[0] * bump_derivatives(sy, 1.0)[0];
        [self.components[0] * b, self.components[1] * b]
    }

    /// Default probes on the `[0, 2 pi) x [0, pi]` channel.
    pub fn defaults(g: &ChannelGrid) -> Vec<ChannelProbe> {
        let (lx, ly) = (g.lx, g.ly);
        let p = |name: &str, x0: f64, x1: f64, y0: f64, y1: f64, c: [f64; 2]| ChannelProbe {
            name: name.into(),
            x0: x0 * lx,
            x1: x1 * lx,
            y0: y0 * ly,
            y1: y1 * ly,
            components: c,
        };
        vec![
            p("probe_centre_u1", 0.3, 0.7, 0.3, 0.7, [1.0, 0.0]),
            p("probe_centre_u2", 0.3, 0.7, 0.3, 0.7, [0.0, 1.0]),
            p("probe_near_wall", 0.1, 0.5, 0.05, 0.35, [1.0, 1.0]),
        ]
    }
}

/// `D_strip(c)` for one strip constant.
#[derive(Debug, Clone, PartialEq)]
pub struct StripDissipation {
    pub c: f64,
    /// `c nu`, capped at half the channel height.
    pub width: f64,
    pub value: f64,
    /// The strip is thinner than one cell; `value` is the one-cell integral.
    pub under_resolved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGap {
    pub name: String,
    /// `<u(t) - u_ref(t), phi>` at every snapshot time.
    pub gaps: Vec<f64>,
    pub max_abs: f64,
}

/// Kato diagnostics of one channel run.
#[derive(Debug, Clone, PartialEq)]
pub struct KatoReport {
    pub nu: f64,
    pub t_end: f64,
    /// `nu int_0^T ||grad u||^2 dt`.
    pub d_tot: f64,
    /// The same integral with `||omega||^2` (equal under no-slip).
    pub d_tot_enstrophy: f64,
    pub strips: Vec<StripDissipation>,
    /// `|E(T) - E(0) - int (2 f.u - 2 nu ||omega||^2) dt|`, relative.
    pub energy_balance: f64,
    pub wall_slip: f64,
    /// `||u(t) - u_ref(t)||_2` per snapshot, when a reference is given.
    pub distances: Vec<f64>,
    pub sup_distance: Option<f64>,
    pub probe_gaps: Vec<ProbeGap>,
}

/// Trapezoid-in-time integral of nodal values.
fn trapezoid(times: &[f64], v: &[f64]) -> f64 {
    crate::diagnostics::trapezoid_weights(times).iter().zip(v).map(|(w, x)| w * x).sum()
}

/// Kato's four criteria for a channel run: total and strip dissipation, and
/// (with a reference on the same grid and times) strong and weak distances.
pub fn kato_diagnostics(
    traj: &ChannelTrajectory,
    strip_constants: &[f64],
    reference: Option<&ChannelTrajectory>,
    probes: &[ChannelProbe],
) -> Result<KatoReport> {
    if traj.is_empty() {
        return Err(Error::InvalidArgument("empty channel trajectory".into()));
    }
    if let Some(r) = reference {
        traj.grid.check_same(&r.grid)?;
        let same = r.len() == traj.len()
            && r.snapshots.iter().zip(&traj.snapshots).all(|(a, b)| (a.0 - b.0).abs() <= 1e-9);
        if !same {
            return Err(Error::InvalidArgument("reference snapshot times differ from the run".into()));
        }
    }
    let g = traj.grid;
    let times = traj.times();
    let fields: Vec<ChannelFields> = traj.snapshots.iter().map(|(_, w)| ChannelFields::new(&g, w)).collect();
    let grads: Vec<Vec<f64>> = fields.iter().map(|f| f.gradient_profile()).collect();
    let grad_tot: Vec<f64> = grads.iter().map(|p| integrate_profile(&g, p)).collect();
    let ens: Vec<f64> = fields.iter().map(|f| integrate_profile(&g, &f.enstrophy_profile())).collect();
    let nu = traj.nu;
    let d_tot = nu * trapezoid(&times, &grad_tot);
    let d_tot_enstrophy = nu * trapezoid(&times, &ens);

    let half = g.ly / 2.0;
    let mut strips = Vec::with_capacity(strip_constants.len());
    for &c in strip_constants {
        let width = (c * nu).min(half);
        let under_resolved = width < g.dy();
        let w = if under_resolved { g.dy() } else { width };
        let per_time: Vec<f64> = grads
            .iter()
            .map(|p| {
                let rev: Vec<f64> = p.iter().rev().copied().collect();
                linear_integral_from_wall(g.dy(), p, w) + linear_integral_from_wall(g.dy(), &rev, w)
            })
            .collect();
        strips.push(StripDissipation {
            c,
            width,
            value: nu * trapezoid(&times, &per_time),
            under_resolved,
        });
    }

    let energy: Vec<f64> = fields.iter().map(|f| integrate_profile(&g, &f.energy_profile())).collect();
    let work: Vec<f64> = fields.iter().map(|f| 2.0 * f.forcing_work(&traj.forcing)).collect();
    let diss: Vec<f64> = ens.iter().map(|z| 2.0 * nu * z).collect();
    let de = energy[energy.len() - 1] - energy[0];
    let (wi, di) = (trapezoid(&times, &work), trapezoid(&times, &diss));
    let scale = de.abs().max(wi.abs()).max(di.abs());
    let energy_balance = if scale > 0.0 { (de - wi + di).abs() / scale } else { 0.0 };
    let wall_slip = fields.iter().map(|f| f.wall_slip()).fold(0.0, f64::max);

    let mut distances = Vec::new();
    let mut probe_gaps = Vec::new();
    if let Some(r) = reference {
        let mut gaps = vec![Vec::with_capacity(times.len()); probes.len()];
        let yw = g.y_weights();
        let probe_vals: Vec<Vec<[f64; 2]>> = probes
            .iter()
            .map(|p| (0..g.len()).map(|q| p.eval(g.x(q % g.nx), g.y(q / g.nx))).collect())
            .collect();
        for (f, (_, wr)) in fields.iter().zip(&r.snapshots) {
            let fr = ChannelFields::new(&g, wr);
            let (a, b) = f.velocity();
            let (ar, br) = fr.velocity();
            let mut d2 = 0.0;
            for q in 0..g.len() {
                let w = yw[q / g.nx] * g.dx();
                d2 += w * ((a[q] - ar[q]).powi(2) + (b[q] - br[q]).powi(2));
            }
            distances.push(d2.sqrt());
            for (k, pv) in probe_vals.iter().enumerate() {
                let mut s = 0.0;
                for q in 0..g.len() {
                    let w = yw[q / g.nx] * g.dx();
                    s += w * ((a[q] - ar[q]) * pv[q][0] + (b[q] - br[q]) * pv[q][1]);
                }
                gaps[k].push(s);
            }
        }
        for (p, gp) in probes.iter().zip(gaps) {
            let max_abs = gp.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            probe_gaps.push(ProbeGap {
                name: p.name.clone(),
                gaps: gp,
                max_abs,
            });
        }
    }
    let sup_distance = reference.map(|_| distances.iter().copied().fold(0.0, f64::max));
    Ok(KatoReport {
        nu,
        t_end: *times.last().expect("non-empty"),
        d_tot,
        d_tot_enstrophy,
        strips,
        energy_balance,
        wall_slip,
        distances,
        sup_distance,
        probe_gaps,
    })
}

/// Closed-form `D_tot = nu lambda a^2 (lx ly / 2) int_0^T y^2 dt` of the exact
/// Kolmogorov channel solution (`nu lambda a^2 pi^2 int y^2` on the default
/// channel).
pub fn exact_channel_dissipation(nu: f64, k: u32, amplitude: f64, t_end: f64, grid: &ChannelGrid) -> f64 {
    let lambda = (k as f64).powi(2);
    nu * lambda * amplitude * amplitude * grid.lx * grid.ly / 2.0
        * crate::forcing::exact_kolmogorov_y2_integral(t_end, nu, lambda, 0.0)
}

/// Whether `D_tot` and every `D_strip(c)` decrease strictly along the runs
/// with `nu <= nu0`, ordered by decreasing viscosity.
pub fn kato_monotone(reports: &[KatoReport], nu0: f64) -> bool {
    let mut rs: Vec<&KatoReport> = reports.iter().filter(|r| r.nu <= nu0).collect();
    rs.sort_by(|a, b| b.nu.total_cmp(&a.nu));
    rs.windows(2).all(|w| {
        w[1].d_tot < w[0].d_tot
            && w[0].strips.len() == w[1].strips.len()
            && w[0].strips.iter().zip(&w[1].strips).all(|(a, b)| b.value < a.value)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        num / den
    }

    fn kolmogorov_error(ny: usize) -> f64 {
        let g = ChannelGrid::new(8, ny).unwrap();
        let nu = 0.1;
        let s0 = exact_channel_kolmogorov(0.0, nu, 2, 1.0, 0.0, &g).unwrap();
        let mut solver = ChannelSolver::for_state(&s0, ChannelConfig::default()).unwrap();
        let traj = channel_run(&mut solver, &s0, 1.0, 0.5, Some(2e-3)).unwrap();
        let exact = exact_channel_kolmogorov(1.0, nu, 2, 1.0, 0.0, &g).unwrap();
        let (t, w) = traj.snapshots.last().unwrap();
        assert!((t - 1.0).abs() < 1e-12);
        rel_err(w, &exact.omega)
    }

    #[test]
    fn kolmogorov_channel_converges_second_order() {
        let e64 = kolmogorov_error(64);
        let e128 = kolmogorov_error(128);
        assert!(e128 <= 1e-3, "{e128}");
        let ratio = e64 / e128;
        assert!((3.5..=4.5).contains(&ratio), "{e64} {e128} {ratio}");
    }

    #[test]
    fn zero_stays_zero() {
        let g = ChannelGrid::new(16, 32).unwrap();
        let s0 = ChannelState::zeros(g, 0.01, ChannelForcing::None);
        let mut solver = ChannelSolver::for_state(&s0, ChannelConfig::default()).unwrap();
        let traj = channel_run(&mut solver, &s0, 0.1, 0.05, None).unwrap();
        assert!(traj.snapshots.iter().all(|(_, w)| w.iter().all(|&v| v == 0.0)));
        assert_eq!(traj.times(), vec![0.0, 0.05, 0.1]);
    }

    #[test]
    fn odd_wavenumbers_rejected() {
        assert!(channel_kolmogorov_forcing(1, 1.0).is_err());
        assert!(channel_kolmogorov_forcing(0, 1.0).is_err());
        assert!(channel_kolmogorov_forcing(4, 1.0).is_ok());
        assert!(ChannelGrid::new(6, 3).is_err());
    }

    #[test]
    fn exact_state_has_no_slip_and_zero_divergence() {
        let g = ChannelGrid::new(16, 64).unwrap();
        let s = exact_channel_kolmogorov(0.7, 0.05, 2, 1.0, 0.0, &g).unwrap();
        let f = s.fields();
        assert!(f.wall_normal() <= 1e-12);
        assert!(f.divergence_max() <= 1e-12);
        // the one-sided slip estimate is O(dy^2)
        assert!(f.wall_slip() < 10.0 * g.dy() * g.dy());
    }

    fn wall_mode_state(g: &ChannelGrid) -> ChannelState {
        // psi = sin^2(y) cos(x) has psi = d_y psi = 0 on the walls
        let mut w = Vec::with_capacity(g.len());
        for j in 0..g.rows() {
            let y = g.y(j);
            for i in 0..g.nx() {
                let x = g.x(i);
                w.push(x.cos() * (2.0 * (2.0 * y).cos() - y.sin().powi(2)));
            }
        }
        ChannelState::new(*g, w, 0.0, 0.01, ChannelForcing::None).unwrap()
    }

    #[test]
    fn gradient_and_enstrophy_quadratures_agree() {
        let g = ChannelGrid::new(16, 128).unwrap();
        let f = wall_mode_state(&g).fields();
        let grad = integrate_profile(&g, &f.gradient_profile());
        let ens = integrate_profile(&g, &f.enstrophy_profile());
        assert!((grad - ens).abs() <= 1e-3 * ens, "{grad} vs {ens}");
        // analytic value: int omega^2 = pi * int_0^pi (2 cos 2y - sin^2 y)^2 dy = pi * 27 pi / 8
        let exact = PI * 27.0 * PI / 8.0;
        assert!((ens - exact).abs() <= 1e-3 * exact, "{ens} vs {exact}");
    }

    #[test]
    fn energy_balance_holds_for_nonlinear_run() {
        let g = ChannelGrid::new(16, 128).unwrap();
        let mut s0 = wall_mode_state(&g);
        s0.nu = 0.05;
        s0.forcing = channel_kolmogorov_forcing(2, 1.0).unwrap();
        let mut solver = ChannelSolver::for_state(&s0, ChannelConfig::default()).unwrap();
        let traj = channel_run(&mut solver, &s0, 0.5, 0.01, Some(2e-3)).unwrap();
        let rep = kato_diagnostics(&traj, &[1.0, 5.0, 25.0], None, &[]).unwrap();
        assert!(rep.energy_balance <= 1e-3, "{}", rep.energy_balance);
        assert!(rep.wall_slip < 1e-2);
    }

    #[test]
    fn blow_up_is_reported_with_last_valid_state() {
        let g = ChannelGrid::new(16, 32).unwrap();
        let s0 = wall_mode_state(&g);
        let config = ChannelConfig {
            blowup_threshold: 1e-3,
            ..ChannelConfig::default()
        };
        let mut solver = ChannelSolver::for_state(&s0, config).unwrap();
        match solver.step(&s0, 1e-3) {
            Err(ChannelStepError::BlowUp { last_valid, .. }) => assert_eq!(last_valid.t, 0.0),
            other => panic!("expected blow-up, got {other:?}"),
        }
        assert!(matches!(
            ChannelSolver::for_state(&s0, ChannelConfig::default()).unwrap().step(&s0, 10.0),
            Err(ChannelStepError::Core(Error::StepTooLarge { .. }))
        ));
    }

    #[test]
    fn kato_on_exact_solution() {
        let g = ChannelGrid::new(8, 128).unwrap();
        let times: Vec<f64> = (0..=200).map(|i| i as f64 * 0.005).collect();
        let mut prev: Option<KatoReport> = None;
        let mut reports = Vec::new();
        for nu in [1e-2, 3e-3, 1e-3] {
            let traj = exact_channel_trajectory(&times, nu, 2, 1.0, &g).unwrap();
            let rep = kato_diagnostics(&traj, &[1.0, 5.0, 25.0], Some(&traj), &ChannelProbe::defaults(&g)).unwrap();
            let exact = exact_channel_dissipation(nu, 2, 1.0, 1.0, &g);
            assert!((rep.d_tot - exact).abs() <= 1e-3 * exact, "{} vs {exact}", rep.d_tot);
            assert!((rep.d_tot_enstrophy - exact).abs() <= 1e-3 * exact);
            assert!(rep.strips.windows(2).all(|w| w[0].value <= w[1].value));
            assert!(rep.strips.iter().all(|s| s.value >= 0.0 && s.value <= rep.d_tot));
            assert_eq!(rep.sup_distance, Some(0.0));
            assert!(rep.probe_gaps.iter().all(|p| p.max_abs == 0.0));
            if let Some(p) = &prev {
                assert!(rep.d_tot < p.d_tot);
            }
            prev = Some(rep.clone());
            reports.push(rep);
        }
        assert!(kato_monotone(&reports, 1e-2));
        assert!(reports[2].strips[0].under_resolved);
    }

    #[test]
    fn strip_integral_is_exact_for_linear_profiles() {
        let p: Vec<f64> = (0..=10).map(|j| 1.0 + 2.0 * j as f64 * 0.1).collect();
        // int_0^w (1 + 2y) dy
        for w in [0.05, 0.1, 0.37, 1.0] {
            let v = linear_integral_from_wall(0.1, &p, w);
            assert!((v - (w + w * w)).abs() < 1e-14, "{w}: {v}");
        }
    }

    #[test]
    fn reference_distance_detects_difference() {
        let g = ChannelGrid::new(8, 32).unwrap();
        let times = [0.0, 0.5, 1.0];
        let a = exact_channel_trajectory(&times, 0.01, 2, 1.0, &g).unwrap();
        let b = exact_channel_trajectory(&times, 0.0, 2, 1.0, &g).unwrap();
        let rep = kato_diagnostics(&a, &[1.0], Some(&b), &ChannelProbe::defaults(&g)).unwrap();
        assert_eq!(rep.distances[0], 0.0);
        assert!(rep.sup_distance.unwrap() > 0.0);
        assert!(rep.probe_gaps.iter().any(|p| p.max_abs > 0.0));
        let short = exact_channel_trajectory(&times[..2], 0.0, 2, 1.0, &g).unwrap();
        assert!(kato_diagnostics(&a, &[1.0], Some(&short), &[]).is_err());
    }
}
