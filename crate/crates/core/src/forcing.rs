//! Body forces, with Kolmogorov (Stokes eigenfunction) forcing and its closed
//! form solution `u(t) = y(t) f`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::spectral::{self, Grid, ScalarField, VectorField};
use crate::time::State;

/// Spatial structure of a time-constant body force.
#[derive(Debug, Clone, PartialEq)]
pub enum ForcingKind {
    None,
    /// `f = (a sin(k y), 0)`.
    Kolmogorov { k: u32, amplitude: f64 },
    /// User supplied force, either as a velocity-form field or directly as a
    /// vorticity source.
    Custom(CustomForcing),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CustomForcing {
    Velocity(VectorField),
    Vorticity(ScalarField),
}

/// Only constant-in-time forcing is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeProfile {
    #[default]
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSpec {
    pub kind: ForcingKind,
    pub profile: TimeProfile,
}

impl Default for ForcingSpec {
    fn default() -> Self {
        ForcingSpec::none()
    }
}

impl ForcingSpec {
    pub fn none() -> Self {
        ForcingSpec {
            kind: ForcingKind::None,
            profile: TimeProfile::Constant,
        }
    }

    pub fn custom(c: CustomForcing) -> Self {
        ForcingSpec {
            kind: ForcingKind::Custom(c),
            profile: TimeProfile::Constant,
        }
    }

    /// Short identifier used in run metadata.
    pub fn id(&self) -> String {
        match &self.kind {
            ForcingKind::None => "none".into(),
            ForcingKind::Kolmogorov { k, amplitude } => format!("kolmogorov(k={k},a={amplitude})"),
            ForcingKind::Custom(_) => "custom".into(),
        }
    }

    /// Stokes eigenvalue `lambda = k^2` for Kolmogorov forcing.
    pub fn eigenvalue(&self) -> Option<f64> {
        match self.kind {
            ForcingKind::Kolmogorov { k, .. } => Some((k as f64).powi(2)),
            _ => None,
        }
    }

    /// Velocity-form force on the grid. A vorticity-only custom source is
    /// lifted through `f = perp lap^{-1} g`, which fixes `f` up to a gradient.
    pub fn velocity(&self, grid: &Grid) -> Result<VectorField> {
        match &self.kind {
            ForcingKind::None => Ok(VectorField::zeros(*grid)),
            ForcingKind::Kolmogorov { k, amplitude } => {
                let (k, a) = (*k as f64, *amplitude);
                let mut f = VectorField::from_fn(*grid, |_, y| (a * (k * y).sin(), 0.0));
                f.divergence_free = true;
                Ok(f)
            }
            ForcingKind::Custom(CustomForcing::Velocity(f)) => {
                grid.check_same(f.grid())?;
                Ok(f.clone())
            }
            ForcingKind::Custom(CustomForcing::Vorticity(g)) => {
                grid.check_same(g.grid())?;
                Ok(spectral::velocity_from_vorticity(g).0)
            }
        }
    }

    /// Vorticity source `g = perp . f`, derived spectrally from the velocity
    /// form. Spectral representation.
    pub fn vorticity_source(&self, grid: &Grid) -> Result<ScalarField> {
        match &self.kind {
            ForcingKind::None => Ok(ScalarField::zeros(*grid).spectral()),
            ForcingKind::Custom(CustomForcing::Vorticity(g)) => {
                grid.check_same(g.grid())?;
                Ok(g.spectral())
            }
            _ => Ok(spectral::vorticity_from_velocity(&self.velocity(grid)?)?.spectral()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            ForcingKind::None => true,
            ForcingKind::Kolmogorov { amplitude, .. } => *amplitude == 0.0,
            ForcingKind::Custom(_) => false,
        }
    }
}

/// Kolmogorov forcing `f = (a sin(k y), 0)`, eigenvalue `k^2`, vorticity source
/// `g = -a k cos(k y)`. Rejects `k = 0`.
pub fn kolmogorov_forcing(k: u32, amplitude: f64) -> Result<ForcingSpec> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "Kolmogorov wavenumber must be >= 1".into(),
        ));
    }
    if !amplitude.is_finite() {
        return Err(Error::InvalidArgument("amplitude must be finite".into()));
    }
    Ok(ForcingSpec {
        kind: ForcingKind::Kolmogorov { k, amplitude },
        profile: TimeProfile::Constant,
    })
}

/// `(1 - exp(-z)) / z` without cancellation; equals 1 at `z = 0`.
fn one_minus_exp_over(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - z / 2.0 + z * z / 6.0
    } else {
        -(-z).exp_m1() / z
    }
}

/// Closed-form amplitude of the Kolmogorov solution `u(t) = y(t) f`:
/// `y(t) = y0 e^{-nu lambda t} + (1 - e^{-nu lambda t}) / (nu lambda)`,
/// and `y0 + t` in the inviscid case.
pub fn exact_kolmogorov_coefficient(t: f64, nu: f64, lambda: f64, y0: f64) -> f64 {
    assert!(lambda > 0.0, "eigenvalue must be positive");
    assert!(nu >= 0.0, "viscosity must be non-negative");
    let z = nu * lambda * t;
    if z == 0.0 {
        return y0 + t;
    }
    y0 * (-z).exp() + t * one_minus_exp_over(z)
}

/// Time derivative of [`exact_kolmogorov_coefficient`]: `y' = 1 - nu lambda y`.
pub fn exact_kolmogorov_rate(t: f64, nu: f64, lambda: f64, y0: f64) -> f64 {
    1.0 - nu * lambda * exact_kolmogorov_coefficient(t, nu, lambda, y0)
}

/// `int_0^T y(t)^2 dt` in closed form.
pub fn exact_kolmogorov_y2_integral(t_end: f64, nu: f64, lambda: f64, y0: f64) -> f64 {
    let c = nu * lambda;
    if c == 0.0 {
        return ((y0 + t_end).powi(3) - y0.powi(3)) / 3.0;
    }
    // y = A + B e^{-ct}
    let a = 1.0 / c;
    let b = y0 - a;
    let e1 = t_end * one_minus_exp_over(c * t_end);
    let e2 = t_end * one_minus_exp_over(2.0 * c * t_end);
    a * a * t_end + 2.0 * a * b * e1 + b * b * e2
}

/// Exact Kolmogorov vorticity `omega = -y(t) a k cos(k y)` on a periodic grid.
pub fn exact_kolmogorov_vorticity(
    t: f64,
    nu: f64,
    k: u32,
    amplitude: f64,
    y0: f64,
    grid: &Grid,
) -> ScalarField {
    let kf = k as f64;
    let yt = exact_kolmogorov_coefficient(t, nu, kf * kf, y0);
    ScalarField::from_fn(*grid, |_, y| -yt * amplitude * kf * (kf * y).cos())
}

/// Exact Kolmogorov state at time `t`, driven by the matching forcing.
pub fn exact_kolmogorov_state(
    t: f64,
    nu: f64,
    k: u32,
    amplitude: f64,
    y0: f64,
    grid: &Grid,
) -> Result<State> {
    let forcing = Arc::new(kolmogorov_forcing(k, amplitude)?);
    State::new(exact_kolmogorov_vorticity(t, nu, k, amplitude, y0, grid), t, nu, forcing)
}

/// `int |f|^2 dx` for Kolmogorov forcing on a `lx x ly` box whose height is a
/// multiple of half a period: `a^2 lx ly / 2`.
pub fn kolmogorov_forcing_norm_sq(amplitude: f64, lx: f64, ly: f64) -> f64 {
    amplitude * amplitude * lx * ly / 2.0
}

/// Channel `[0, 2pi) x [0, pi]` area.
pub const CHANNEL_AREA: f64 = 2.0 * PI * PI;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{laplacian, Axis};

    #[test]
    fn k1_source_is_minus_cos() {
        let g = Grid::square(32).unwrap();
        let f = kolmogorov_forcing(1, 1.0).unwrap();
        assert_eq!(f.eigenvalue(), Some(1.0));
        let src = f.vorticity_source(&g).unwrap();
        let expect = ScalarField::from_fn(g, |_, y| -y.cos());
        let d = src.axpby(1.0, &expect, -1.0).unwrap();
        assert!(d.max_abs() < 1e-13);
    }

    #[test]
    fn zero_amplitude_is_zero_forcing() {
        let g = Grid::square(16).unwrap();
        let f = kolmogorov_forcing(2, 0.0).unwrap();
        assert!(f.is_zero());
        assert_eq!(f.velocity(&g).unwrap().max_magnitude(), 0.0);
        assert!(f.vorticity_source(&g).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn k0_rejected() {
        assert!(kolmogorov_forcing(0, 1.0).is_err());
    }

    #[test]
    fn forcing_is_stokes_eigenfunction() {
        let g = Grid::square(32).unwrap();
        let f = kolmogorov_forcing(3, 2.0).unwrap().velocity(&g).unwrap();
        for comp in [&f.u1, &f.u2] {
            let r = laplacian(comp).axpby(1.0, comp, 9.0).unwrap();
            assert!(r.max_abs() < 1e-12 * 9.0 * 2.0);
        }
        let div = spectral::divergence(&f).unwrap();
        assert!(div.max_abs() < 1e-12);
        let _ = Axis::X;
    }

    #[test]
    fn closed_form_examples() {
        let y = exact_kolmogorov_coefficient(1.0, 0.1, 1.0, 0.0);
        assert!((y - 10.0 * (1.0 - (-0.1_f64).exp())).abs() < 1e-15);
        assert!((y - 0.951_625_819_640_404_3).abs() < 1e-15);
        assert_eq!(exact_kolmogorov_coefficient(3.0, 0.0, 1.0, 2.0), 5.0);
        let y = exact_kolmogorov_coefficient(1e4, 0.01, 1.0, 0.0);
        assert!((y - 100.0).abs() < 1e-12);
    }

    #[test]
    fn small_viscosity_is_continuous_with_euler() {
        let e = exact_kolmogorov_coefficient(2.0, 0.0, 4.0, 0.5);
        let v = exact_kolmogorov_coefficient(2.0, 1e-14, 4.0, 0.5);
        assert!((e - v).abs() < 1e-12);
    }

    #[test]
    fn y2_integral_matches_simpson() {
        for &(nu, lam, y0, t) in &[(0.1, 1.0, 0.0, 1.0), (0.05, 4.0, 0.7, 2.0), (0.0, 1.0, 1.0, 1.5)] {
            let n = 2000;
            let h = t / n as f64;
            let mut s = 0.0;
            for i in 0..=n {
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                s += w * exact_kolmogorov_coefficient(i as f64 * h, nu, lam, y0).powi(2);
            }
            s *= h / 3.0;
            let exact = exact_kolmogorov_y2_integral(t, nu, lam, y0);
            assert!((s - exact).abs() < 1e-12 * exact.abs().max(1.0), "{s} vs {exact}");
        }
    }

    #[test]
    fn exact_state_energy() {
        let g = Grid::square(32).unwrap();
        let (t, nu, k, a, y0) = (0.7, 0.05, 2, 1.5, 0.3);
        let w = exact_kolmogorov_vorticity(t, nu, k, a, y0, &g);
        let (u, _) = spectral::velocity_from_vorticity(&w);
        let y = exact_kolmogorov_coefficient(t, nu, 4.0, y0);
        let e = y * y * kolmogorov_forcing_norm_sq(a, g.lx(), g.ly());
        assert!((u.norm_sq() - e).abs() < 1e-12 * e);
        let w0 = exact_kolmogorov_vorticity(0.0, nu, k, a, y0, &g);
        let expect = ScalarField::from_fn(g, |_, yy| -y0 * a * 2.0 * (2.0 * yy).cos());
        assert!(w0.axpby(1.0, &expect, -1.0).unwrap().max_abs() < 1e-14);
    }
}
