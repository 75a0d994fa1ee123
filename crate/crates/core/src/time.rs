//! Time integration of the periodic vorticity equation
//! `d_t omega + u . grad omega - nu lap omega = g`.
//!
//! The default scheme is the Cox-Matthews exponential RK4: the viscous term is
//! integrated exactly per Fourier mode and the nonlinear term (plus forcing) is
//! treated by four explicit stages. With `nu = 0` every exponential factor is
//! one and the scheme is classical RK4.

use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::error::{Error, Result};
use crate::fft;
use crate::forcing::ForcingSpec;
use crate::spectral::{self, Grid, ScalarField, VectorField, Wavenumbers};

/// Solution state: vorticity (zero mean, stored spectrally), time, viscosity and
/// the forcing it is driven by.
#[derive(Debug, Clone)]
pub struct State {
    pub omega: ScalarField,
    pub t: f64,
    pub nu: f64,
    pub forcing: Arc<ForcingSpec>,
    /// Mean vorticity removed when the state was built.
    pub projected_mean: f64,
}

impl State {
    pub fn new(omega: ScalarField, t: f64, nu: f64, forcing: Arc<ForcingSpec>) -> Result<Self> {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(Error::InvalidArgument(format!("viscosity {nu} must be >= 0")));
        }
        if !t.is_finite() {
            return Err(Error::InvalidArgument(format!("time {t} must be finite")));
        }
        let mut c = omega.spectral_coefficients();
        let projected_mean = c[0].re;
        c[0] = Complex64::default();
        Ok(State {
            omega: ScalarField::from_coefficients(*omega.grid(), c)?,
            t,
            nu,
            forcing,
            projected_mean,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.omega.grid()
    }

    pub fn velocity(&self) -> VectorField {
        spectral::velocity_from_vorticity(&self.omega).0
    }
}

/// Knobs of the periodic integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub cfl: f64,
    pub u_floor: f64,
    /// Upper bound on any step, also the cap for quiescent fields.
    pub dt_max: f64,
    /// Reject steps above [`Integrator::cfl_dt`].
    pub enforce_cfl: bool,
    /// Switch off `u . grad omega` (linear runs).
    pub nonlinear: bool,
    pub dealiasing: spectral::Dealiasing,
    /// `||omega||_inf` above this is treated as blow-up.
    pub blowup_threshold: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            cfl: 0.5,
            u_floor: 1e-8,
            dt_max: 1e-2,
            enforce_cfl: true,
            nonlinear: true,
            dealiasing: spectral::Dealiasing::TwoThirds,
            blowup_threshold: 1e8,
        }
    }
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("blow-up at t = {t}: {reason}")]
    BlowUp {
        t: f64,
        reason: String,
        last_valid: Box<State>,
    },
    #[error(transparent)]
    Core(#[from] Error),
}

/// `phi_1, phi_2, phi_3` of the exponential integrator, with
/// `phi_k(z) = sum_n z^n / (n + k)!`.
pub fn phi_functions(z: f64) -> (f64, f64, f64) {
    if z.abs() < 2.0 {
        // Taylor: 40 terms are far past double precision for |z| < 2.
        let (mut p1, mut p2, mut p3) = (0.0, 0.0, 0.0);
        let mut term = 1.0; // z^n / n!
        let mut fact = [1.0, 1.0, 2.0, 6.0]; // (n+k)! / n! built incrementally below
        for n in 0..40u32 {
            let nf = n as f64;
            if n > 0 {
                term *= z / nf;
                fact = [1.0, nf + 1.0, (nf + 1.0) * (nf + 2.0), (nf + 1.0) * (nf + 2.0) * (nf + 3.0)];
            }
            p1 += term / fact[1];
            p2 += term / fact[2];
            p3 += term / fact[3];
        }
        (p1, p2, p3)
    } else {
        let p1 = z.exp_m1() / z;
        let p2 = (p1 - 1.0) / z;
        let p3 = (p2 - 0.5) / z;
        (p1, p2, p3)
    }
}

#[derive(Debug, Clone)]
struct EtdCoefficients {
    dt_bits: u64,
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
}

impl EtdCoefficients {
    fn new(k2: &[f64], nu: f64, h: f64) -> Self {
        let n = k2.len();
        let mut c = EtdCoefficients {
            dt_bits: h.to_bits(),
            e: Vec::with_capacity(n),
            e2: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            f3: Vec::with_capacity(n),
        };
        for &kk in k2 {
            let z = -nu * kk * h;
            let (p1, p2, p3) = phi_functions(z);
            let (h1, _, _) = phi_functions(z / 2.0);
            c.e.push(z.exp());
            c.e2.push((z / 2.0).exp());
            c.q.push(0.5 * h * h1);
            c.f1.push(h * (p1 - 3.0 * p2 + 4.0 * p3));
            c.f2.push(h * (p2 - 2.0 * p3));
            c.f3.push(h * (-p2 + 4.0 * p3));
        }
        c
    }
}

/// Per-run integrator: caches wavenumbers, the forcing source and the
/// exponential coefficients of recently used step sizes.
#[derive(Debug, Clone)]
pub struct Integrator {
    grid: Grid,
    nu: f64,
    config: IntegratorConfig,
    wn: Wavenumbers,
    source: Vec<Complex64>,
    cache: Vec<EtdCoefficients>,
}

impl Integrator {
    pub fn new(grid: Grid, nu: f64, forcing: &ForcingSpec, config: IntegratorConfig) -> Result<Self> {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(Error::InvalidArgument(format!("viscosity {nu} must be >= 0")));
        }
        let mut source = forcing.vorticity_source(&grid)?.spectral_coefficients();
        source[0] = Complex64::default();
        Ok(Integrator {
            grid,
            nu,
            wn: Wavenumbers::new(&grid),
            config,
            source,
            cache: Vec::new(),
        })
    }

    pub fn for_state(s: &State, config: IntegratorConfig) -> Result<Self> {
        Integrator::new(*s.grid(), s.nu, &s.forcing, config)
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    fn coefficients(&mut self, h: f64) -> &EtdCoefficients {
        let bits = h.to_bits();
        if let Some(pos) = self.cache.iter().position(|c| c.dt_bits == bits) {
            return &self.cache[pos];
        }
        if self.cache.len() >= 4 {
            self.cache.remove(0);
        }
        self.cache.push(EtdCoefficients::new(&self.wn.k2, self.nu, h));
        self.cache.last().expect("just pushed")
    }

    /// `-P(u . grad omega) + g` for spectral vorticity `w`; returns `max |u|`
    /// over the nodes as a by-product.
    fn rhs(&self, w: &[Complex64], out: &mut [Complex64]) -> f64 {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        if !self.config.nonlinear {
            out.copy_from_slice(&self.source);
            return self.max_speed(w);
        }
        if self.config.dealiasing == spectral::Dealiasing::Padded {
            let omega = ScalarField::from_coefficients(*g, w.to_vec()).expect("grid-sized buffer");
            let (u, _) = spectral::velocity_from_vorticity(&omega);
            let adv = spectral::nonlinear_term_with(&u, &omega, spectral::Dealiasing::Padded)
                .expect("same grid")
                .spectral_coefficients();
            for idx in 0..nx * ny {
                out[idx] = self.source[idx] - adv[idx];
            }
            out[0] = Complex64::default();
            return u.max_magnitude();
        }
        let mut vel = vec![Complex64::default(); nx * ny];
        let mut grad = vec![Complex64::default(); nx * ny];
        let i = Complex64::new(0.0, 1.0);
        for j in 0..ny {
            let ky = self.wn.ky_odd[j];
            for ix in 0..nx {
                let idx = j * nx + ix;
                if !self.wn.keep[idx] || self.wn.k2[idx] == 0.0 {
                    continue;
                }
                let kx = self.wn.kx_odd[ix];
                let wk = w[idx];
                let inv = 1.0 / self.wn.k2[idx];
                let u1 = i * ky * wk * inv;
                let u2 = -i * kx * wk * inv;
                let wx = i * kx * wk;
                let wy = i * ky * wk;
                // pack two real fields per complex transform
                vel[idx] = u1 + i * u2;
                grad[idx] = wx + i * wy;
            }
        }
        fft::inverse(&mut vel, nx, ny);
        fft::inverse(&mut grad, nx, ny);
        let mut umax = 0.0_f64;
        for (v, d) in vel.iter_mut().zip(&grad) {
            umax = umax.max(v.norm());
            *v = Complex64::new(v.re * d.re + v.im * d.im, 0.0);
        }
        fft::forward(&mut vel, nx, ny);
        for idx in 0..nx * ny {
            let adv = if self.wn.keep[idx] { vel[idx] } else { Complex64::default() };
            out[idx] = self.source[idx] - adv;
        }
        out[0] = Complex64::default();
        umax
    }

    fn max_speed(&self, w: &[Complex64]) -> f64 {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let i = Complex64::new(0.0, 1.0);
        let mut vel = vec![Complex64::default(); nx * ny];
        for j in 0..ny {
            for ix in 0..nx {
                let idx = j * nx + ix;
                if self.wn.k2[idx] == 0.0 {
                    continue;
                }
                let inv = 1.0 / self.wn.k2[idx];
                let u1 = i * self.wn.ky_odd[j] * w[idx] * inv;
                let u2 = -i * self.wn.kx_odd[ix] * w[idx] * inv;
                vel[idx] = u1 + i * u2;
            }
        }
        fft::inverse(&mut vel, nx, ny);
        vel.iter().fold(0.0_f64, |m, v| m.max(v.norm()))
    }

    /// `C_cfl min(dx, dy) / max(||u||_inf, u_floor)`, capped by `dt_max`.
    pub fn cfl_dt(&self, s: &State) -> f64 {
        let umax = self.max_speed(&s.omega.spectral_coefficients());
        self.cfl_dt_for_speed(umax)
    }

    fn cfl_dt_for_speed(&self, umax: f64) -> f64 {
        let h = self.grid.dx().min(self.grid.dy());
        (self.config.cfl * h / umax.max(self.config.u_floor)).min(self.config.dt_max)
    }

    /// One exponential RK4 step of size `dt`.
    pub fn step(&mut self, s: &State, dt: f64) -> std::result::Result<State, StepError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt = {dt} must be positive")).into());
        }
        if self.grid != *s.grid() {
            return Err(Error::GridMismatch("state grid differs from integrator grid".into()).into());
        }
        let v = s.omega.spectral_coefficients();
        let n = v.len();
        let mut nv = vec![Complex64::default(); n];
        let umax = self.rhs(&v, &mut nv);
        if self.config.enforce_cfl {
            let bound = self.cfl_dt_for_speed(umax);
            if dt > bound * (1.0 + 1e-12) {
                return Err(Error::StepTooLarge { dt, bound }.into());
            }
        }
        let c = self.coefficients(dt).clone();
        let mut a = vec![Complex64::default(); n];
        for k in 0..n {
            a[k] = v[k] * c.e2[k] + nv[k] * c.q[k];
        }
        let mut na = vec![Complex64::default(); n];
        self.rhs(&a, &mut na);
        let mut b = vec![Complex64::default(); n];
        for k in 0..n {
            b[k] = v[k] * c.e2[k] + na[k] * c.q[k];
        }
        let mut nb = vec![Complex64::default(); n];
        self.rhs(&b, &mut nb);
        let mut cc = vec![Complex64::default(); n];
        for k in 0..n {
            cc[k] = a[k] * c.e2[k] + (nb[k] * 2.0 - nv[k]) * c.q[k];
        }
        let mut nc = vec![Complex64::default(); n];
        self.rhs(&cc, &mut nc);
        let mut out = vec![Complex64::default(); n];
        let mut bound = 0.0;
        let mut finite = true;
        for k in 0..n {
            out[k] = v[k] * c.e[k]
                + nv[k] * c.f1[k]
                + (na[k] + nb[k]) * (2.0 * c.f2[k])
                + nc[k] * c.f3[k];
            finite &= out[k].re.is_finite() && out[k].im.is_finite();
            bound += out[k].norm();
        }
        out[0] = Complex64::default();
        let t_new = s.t + dt;
        let blowup = |reason: String| StepError::BlowUp {
            t: t_new,
            reason,
            last_valid: Box::new(s.clone()),
        };
        if !finite {
            return Err(blowup("non-finite vorticity".into()));
        }
        let omega = ScalarField::from_coefficients(self.grid, out)?;
        // sum |c_k| bounds the sup norm; only synthesise when it is inconclusive
        if bound > self.config.blowup_threshold {
            let m = omega.max_abs();
            if m > self.config.blowup_threshold {
                return Err(blowup(format!("||omega||_inf = {m:e}")));
            }
        }
        Ok(State {
            omega,
            t: t_new,
            nu: s.nu,
            forcing: s.forcing.clone(),
            projected_mean: 0.0,
        })
    }
}

/// Single step with a fresh integrator built from the state.
pub fn step(s: &State, dt: f64, config: &IntegratorConfig) -> std::result::Result<State, StepError> {
    Integrator::for_state(s, config.clone())?.step(s, dt)
}

/// CFL step bound for a state under `config`.
pub fn cfl_dt(s: &State, config: &IntegratorConfig) -> Result<f64> {
    Ok(Integrator::for_state(s, config.clone())?.cfl_dt(s))
}

/// Receives the state at every cadence point of a run.
pub trait Sink {
    fn record(&mut self, state: &State) -> std::result::Result<(), String>;
}

impl<F: FnMut(&State) -> std::result::Result<(), String>> Sink for F {
    fn record(&mut self, state: &State) -> std::result::Result<(), String> {
        self(state)
    }
}

/// One cadence point. `omega` is `None` when the run did not retain snapshots
/// (they went to a sink instead).
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub omega: Option<ScalarField>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub nu: f64,
    pub grid: Grid,
    pub forcing_id: String,
    pub scheme: String,
    pub cadence: f64,
    pub dt_history: Vec<f64>,
}

/// Cadence-sampled solution history of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub meta: RunMeta,
    pub forcing: Arc<ForcingSpec>,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn nu(&self) -> f64 {
        self.meta.nu
    }

    pub fn t_end(&self) -> f64 {
        self.snapshots.last().map_or(0.0, |s| s.t)
    }

    /// Vorticity at every cadence point; errors if any snapshot was not kept.
    pub fn vorticities(&self) -> Result<Vec<(f64, &ScalarField)>> {
        self.snapshots
            .iter()
            .map(|s| s.omega.as_ref().map(|w| (s.t, w)).ok_or(Error::MissingSnapshot(s.t)))
            .collect()
    }

    /// Velocity at every cadence point.
    pub fn velocities(&self) -> Result<Vec<(f64, VectorField)>> {
        Ok(self
            .vorticities()?
            .into_iter()
            .map(|(t, w)| (t, spectral::velocity_from_vorticity(w).0))
            .collect())
    }

    /// Builds a trajectory from externally produced snapshots (e.g. reloaded
    /// from disk or sampled from a closed form).
    pub fn from_snapshots(
        nu: f64,
        grid: Grid,
        forcing: Arc<ForcingSpec>,
        cadence: f64,
        snapshots: Vec<Snapshot>,
    ) -> Result<Self> {
        if snapshots.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidArgument("snapshot times must increase".into()));
        }
        Ok(Trajectory {
            meta: RunMeta {
                nu,
                grid,
                forcing_id: forcing.id(),
                scheme: "external".into(),
                cadence,
                dt_history: Vec::new(),
            },
            forcing,
            snapshots,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Target step; `None` uses the CFL bound (capped by `dt_max`) each step.
    pub dt: Option<f64>,
    pub keep_snapshots: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            dt: None,
            keep_snapshots: true,
        }
    }
}

/// A failed run: the error and everything integrated before it.
#[derive(Debug, Error)]
#[error("run failed: {error}")]
pub struct RunError {
    pub error: StepError,
    pub partial: Box<Trajectory>,
}

/// Integrates from `s0` to `t_end`, landing exactly on every cadence point
/// (the last substep before a cadence point is shortened). Sinks see the
/// initial state and every cadence state.
pub fn run(
    integrator: &mut Integrator,
    s0: State,
    t_end: f64,
    cadence: f64,
    sinks: &mut [&mut dyn Sink],
    options: RunOptions,
) -> std::result::Result<Trajectory, RunError> {
    let mut traj = Trajectory {
        meta: RunMeta {
            nu: s0.nu,
            grid: *s0.grid(),
            forcing_id: s0.forcing.id(),
            scheme: "etdrk4".into(),
            cadence,
            dt_history: Vec::new(),
        },
        forcing: s0.forcing.clone(),
        snapshots: Vec::new(),
    };
    let fail = |error: StepError, traj: Trajectory| RunError {
        error,
        partial: Box::new(traj),
    };
    let span = t_end - s0.t;
    if !(span >= 0.0) || !(cadence > 0.0) {
        return Err(fail(
            Error::InvalidArgument(format!("need t_end >= t0 and cadence > 0 (span {span}, cadence {cadence})")).into(),
            traj,
        ));
    }
    let intervals = (span / cadence).round() as usize;
    if (intervals as f64 * cadence - span).abs() > 1e-9 * span.max(cadence) {
        return Err(fail(
            Error::InvalidArgument(format!("span {span} is not a multiple of cadence {cadence}")).into(),
            traj,
        ));
    }
    let record = |state: &State, traj: &mut Trajectory, sinks: &mut [&mut dyn Sink]| {
        for sink in sinks.iter_mut() {
            sink.record(state).map_err(Error::Sink)?;
        }
        traj.snapshots.push(Snapshot {
            t: state.t,
            omega: options.keep_snapshots.then(|| state.omega.clone()),
        });
        Ok::<(), Error>(())
    };
    if let Err(e) = record(&s0, &mut traj, sinks) {
        return Err(fail(e.into(), traj));
    }
    let t0 = s0.t;
    let mut s = s0;
    for m in 1..=intervals {
        let target = if m == intervals {
            t_end
        } else {
            t0 + span * m as f64 / intervals as f64
        };
        loop {
            let remaining = target - s.t;
            if remaining <= 0.0 {
                break;
            }
            let mut h = match options.dt {
                Some(dt) => dt,
                None => integrator.cfl_dt(&s),
            };
            if options.dt.is_some() && integrator.config.enforce_cfl {
                h = h.min(integrator.cfl_dt(&s));
            }
            let landing = remaining <= h * (1.0 + 1e-9);
            if landing {
                h = remaining;
            }
            match integrator.step(&s, h) {
                Ok(mut next) => {
                    if landing {
                        next.t = target;
                    }
                    traj.meta.dt_history.push(h);
                    s = next;
                }
                Err(e) => return Err(fail(e, traj)),
            }
            if landing {
                break;
            }
        }
        if let Err(e) = record(&s, &mut traj, sinks) {
            return Err(fail(e.into(), traj));
        }
    }
    Ok(traj)
}
