//! Fields on the doubly periodic rectangle and the spectral operators acting on
//! them.
//!
//! Values are stored row-major with `x` fastest: index `j * nx + i` holds the
//! sample at `(x_i, y_j) = (i dx, j dy)`. Spectral fields hold normalised
//! Fourier coefficients in FFT order, so a constant field `c` has the single
//! coefficient `c` at mode `(0, 0)`.
//!
//! Orientation: `perp = (-d2, d1)`, `u = perp psi`, `omega = d1 u2 - d2 u1 = lap psi`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;

/// Uniform grid on the periodic rectangle `[0, lx) x [0, ly)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl Grid {
    /// Both mode counts must be even and at least 8, lengths positive.
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 8 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "{name} = {n} must be even and >= 8"
                )));
            }
        }
        for (name, l) in [("lx", lx), ("ly", ly)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("{name} = {l} must be positive")));
            }
        }
        Ok(Grid { nx, ny, lx, ly })
    }

    /// `n x n` grid on `[0, 2pi)^2`.
    pub fn square(n: usize) -> Result<Self> {
        Grid::new(n, n, 2.0 * PI, 2.0 * PI)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
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
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy()
    }
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    /// Angular wavenumber of FFT column `i`.
    pub fn kx(&self, i: usize) -> f64 {
        2.0 * PI / self.lx * fft::mode(i, self.nx) as f64
    }
    /// Angular wavenumber of FFT row `j`.
    pub fn ky(&self, j: usize) -> f64 {
        2.0 * PI / self.ly * fft::mode(j, self.ny) as f64
    }
    pub fn is_nyquist_x(&self, i: usize) -> bool {
        i == self.nx / 2
    }
    pub fn is_nyquist_y(&self, j: usize) -> bool {
        j == self.ny / 2
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Physical,
    Spectral,
}

impl Representation {
    fn name(self) -> &'static str {
        match self {
            Representation::Physical => "physical",
            Representation::Spectral => "spectral",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Data {
    Physical(Vec<f64>),
    Spectral(Vec<Complex64>),
}

/// A real scalar field in either physical or spectral representation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    data: Data,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        ScalarField {
            grid,
            data: Data::Physical(vec![0.0; grid.len()]),
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField {
            grid,
            data: Data::Physical(vec![c; grid.len()]),
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(ScalarField {
            grid,
            data: Data::Physical(values),
        })
    }

    /// Samples `f(x, y)` at the grid nodes.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut v = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                v.push(f(grid.x(i), y));
            }
        }
        ScalarField {
            grid,
            data: Data::Physical(v),
        }
    }

    pub fn from_coefficients(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        Ok(ScalarField {
            grid,
            data: Data::Spectral(coeffs),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn representation(&self) -> Representation {
        match self.data {
            Data::Physical(_) => Representation::Physical,
            Data::Spectral(_) => Representation::Spectral,
        }
    }

    /// Physical values; errors for a spectral field.
    pub fn values(&self) -> Result<&[f64]> {
        match &self.data {
            Data::Physical(v) => Ok(v),
            Data::Spectral(_) => Err(Error::Representation {
                expected: "physical",
                found: "spectral",
            }),
        }
    }

    /// Fourier coefficients; errors for a physical field.
    pub fn coefficients(&self) -> Result<&[Complex64]> {
        match &self.data {
            Data::Spectral(c) => Ok(c),
            Data::Physical(_) => Err(Error::Representation {
                expected: "spectral",
                found: "physical",
            }),
        }
    }

    /// Physical values, transforming if needed.
    pub fn physical_values(&self) -> Vec<f64> {
        match &self.data {
            Data::Physical(v) => v.clone(),
            Data::Spectral(c) => synthesize(&self.grid, c.clone()),
        }
    }

    /// Fourier coefficients, transforming if needed.
    pub fn spectral_coefficients(&self) -> Vec<Complex64> {
        match &self.data {
            Data::Spectral(c) => c.clone(),
            Data::Physical(v) => analyze(&self.grid, v),
        }
    }

    /// Same field in physical representation (clones if already physical).
    pub fn physical(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            data: Data::Physical(self.physical_values()),
        }
    }

    /// Same field in spectral representation (clones if already spectral).
    pub fn spectral(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            data: Data::Spectral(self.spectral_coefficients()),
        }
    }

    pub(crate) fn in_representation(self, repr: Representation) -> ScalarField {
        if self.representation() == repr {
            return self;
        }
        match repr {
            Representation::Physical => self.physical(),
            Representation::Spectral => self.spectral(),
        }
    }

    /// Maximum absolute physical value.
    pub fn max_abs(&self) -> f64 {
        self.with_values(|v| v.iter().fold(0.0_f64, |m, x| m.max(x.abs())))
    }

    /// Spatial mean (the zero mode).
    pub fn mean(&self) -> f64 {
        match &self.data {
            Data::Spectral(c) => c[0].re,
            Data::Physical(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }

    /// Trapezoidal (uniform-grid) quadrature of the field over the domain.
    pub fn integral(&self) -> f64 {
        self.mean() * self.grid.area()
    }

    /// `int f^2 dx` by the trapezoidal rule.
    pub fn norm_sq(&self) -> f64 {
        self.with_values(|v| v.iter().map(|x| x * x).sum::<f64>()) * self.grid.cell_area()
    }

    /// `int f g dx` by the trapezoidal rule.
    pub fn inner(&self, other: &ScalarField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let a = self.physical_values();
        let b = other.physical_values();
        Ok(a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() * self.grid.cell_area())
    }

    /// Checks `c(-k) = conj(c(k))` up to `tol` (absolute).
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let c = self.spectral_coefficients();
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        for j in 0..ny {
            for i in 0..nx {
                let a = c[j * nx + i];
                let b = c[((ny - j) % ny) * nx + (nx - i) % nx].conj();
                if (a - b).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Pointwise `a * self + b * other`, in the representation of `self`.
    pub fn axpby(&self, a: f64, other: &ScalarField, b: f64) -> Result<ScalarField> {
        self.grid.check_same(&other.grid)?;
        Ok(match &self.data {
            Data::Physical(v) => {
                let w = other.physical_values();
                ScalarField {
                    grid: self.grid,
                    data: Data::Physical(v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect()),
                }
            }
            Data::Spectral(v) => {
                let w = other.spectral_coefficients();
                ScalarField {
                    grid: self.grid,
                    data: Data::Spectral(v.iter().zip(&w).map(|(x, y)| x * a + y * b).collect()),
                }
            }
        })
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        let data = match &self.data {
            Data::Physical(v) => Data::Physical(v.iter().map(|x| x * s).collect()),
            Data::Spectral(v) => Data::Spectral(v.iter().map(|x| x * s).collect()),
        };
        ScalarField {
            grid: self.grid,
            data,
        }
    }

    /// Pointwise product, physical representation.
    pub fn product(&self, other: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(&other.grid)?;
        let a = self.physical_values();
        let b = other.physical_values();
        ScalarField::from_values(self.grid, a.iter().zip(&b).map(|(x, y)| x * y).collect())
    }

    fn with_values<R>(&self, f: impl FnOnce(&[f64]) -> R) -> R {
        match &self.data {
            Data::Physical(v) => f(v),
            Data::Spectral(c) => f(&synthesize(&self.grid, c.clone())),
        }
    }
}

/// Velocity-like pair of scalar fields on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub u1: ScalarField,
    pub u2: ScalarField,
    /// Set when the field was built to be solenoidal (e.g. from a streamfunction).
    pub divergence_free: bool,
}

impl VectorField {
    pub fn new(u1: ScalarField, u2: ScalarField) -> Result<Self> {
        u1.grid.check_same(&u2.grid)?;
        Ok(VectorField {
            u1,
            u2,
            divergence_free: false,
        })
    }

    pub fn zeros(grid: Grid) -> Self {
        VectorField {
            u1: ScalarField::zeros(grid),
            u2: ScalarField::zeros(grid),
            divergence_free: true,
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        VectorField {
            u1: ScalarField::from_fn(grid, |x, y| f(x, y).0),
            u2: ScalarField::from_fn(grid, |x, y| f(x, y).1),
            divergence_free: false,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.u1.grid()
    }

    pub fn physical(&self) -> VectorField {
        VectorField {
            u1: self.u1.physical(),
            u2: self.u2.physical(),
            divergence_free: self.divergence_free,
        }
    }

    /// `int |u|^2 dx`.
    pub fn norm_sq(&self) -> f64 {
        self.u1.norm_sq() + self.u2.norm_sq()
    }

    /// Maximum of `|u|` over the nodes.
    pub fn max_magnitude(&self) -> f64 {
        let a = self.u1.physical_values();
        let b = self.u2.physical_values();
        a.iter()
            .zip(&b)
            .fold(0.0_f64, |m, (x, y)| m.max((x * x + y * y).sqrt()))
    }

    pub fn axpby(&self, a: f64, other: &VectorField, b: f64) -> Result<VectorField> {
        Ok(VectorField {
            u1: self.u1.axpby(a, &other.u1, b)?,
            u2: self.u2.axpby(a, &other.u2, b)?,
            divergence_free: self.divergence_free && other.divergence_free,
        })
    }

    /// `int u . v dx`.
    pub fn inner(&self, other: &VectorField) -> Result<f64> {
        Ok(self.u1.inner(&other.u1)? + self.u2.inner(&other.u2)?)
    }
}

fn analyze(grid: &Grid, v: &[f64]) -> Vec<Complex64> {
    let mut c: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft::forward(&mut c, grid.nx, grid.ny);
    c
}

fn synthesize(grid: &Grid, mut c: Vec<Complex64>) -> Vec<f64> {
    fft::inverse(&mut c, grid.nx, grid.ny);
    c.into_iter().map(|z| z.re).collect()
}

/// Physical -> spectral. Errors if the field is already spectral.
pub fn to_spectral(f: &ScalarField) -> Result<ScalarField> {
    match &f.data {
        Data::Physical(v) => Ok(ScalarField {
            grid: f.grid,
            data: Data::Spectral(analyze(&f.grid, v)),
        }),
        Data::Spectral(_) => Err(Error::Representation {
            expected: Representation::Physical.name(),
            found: Representation::Spectral.name(),
        }),
    }
}

/// Spectral -> physical. Errors if the field is already physical.
pub fn to_physical(f: &ScalarField) -> Result<ScalarField> {
    match &f.data {
        Data::Spectral(c) => Ok(ScalarField {
            grid: f.grid,
            data: Data::Physical(synthesize(&f.grid, c.clone())),
        }),
        Data::Physical(_) => Err(Error::Representation {
            expected: Representation::Spectral.name(),
            found: Representation::Physical.name(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Applies a diagonal Fourier multiplier `m(i, j)` and returns the result in
/// the representation of the input.
pub(crate) fn apply_multiplier(
    f: &ScalarField,
    m: impl Fn(usize, usize) -> Complex64,
) -> ScalarField {
    let g = f.grid;
    let mut c = f.spectral_coefficients();
    for j in 0..g.ny {
        for i in 0..g.nx {
            c[j * g.nx + i] *= m(i, j);
        }
    }
    ScalarField {
        grid: g,
        data: Data::Spectral(c),
    }
    .in_representation(f.representation())
}

fn ik_power(k: f64, order: u32) -> Complex64 {
    Complex64::new(0.0, k).powu(order)
}

/// `d^order f / d axis^order` by multiplication with `(i k)^order`. For odd
/// orders the Nyquist mode of that axis is dropped to keep the result real.
pub fn spectral_derivative(f: &ScalarField, axis: Axis, order: u32) -> ScalarField {
    let g = f.grid;
    let odd = order % 2 == 1;
    apply_multiplier(f, |i, j| match axis {
        Axis::X => {
            if odd && g.is_nyquist_x(i) {
                Complex64::default()
            } else {
                ik_power(g.kx(i), order)
            }
        }
        Axis::Y => {
            if odd && g.is_nyquist_y(j) {
                Complex64::default()
            } else {
                ik_power(g.ky(j), order)
            }
        }
    })
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    let g = f.grid;
    apply_multiplier(f, |i, j| {
        Complex64::new(-(g.kx(i).powi(2) + g.ky(j).powi(2)), 0.0)
    })
}

/// Result of inverting `lap psi = omega`.
#[derive(Debug, Clone)]
pub struct Streamfunction {
    pub psi: ScalarField,
    /// Mean of the input vorticity, projected out before inversion.
    pub removed_mean: f64,
    /// True when `|removed_mean| > 1e-10 * ||omega||_inf`.
    pub mean_warning: bool,
}

/// Solves `lap psi = omega` with zero-mean `psi`. A nonzero input mean is
/// projected out and reported.
pub fn solve_streamfunction(omega: &ScalarField) -> Streamfunction {
    let g = omega.grid;
    let removed_mean = omega.mean();
    let scale = omega.max_abs();
    let psi = apply_multiplier(omega, |i, j| {
        let k2 = g.kx(i).powi(2) + g.ky(j).powi(2);
        if k2 == 0.0 {
            Complex64::default()
        } else {
            Complex64::new(-1.0 / k2, 0.0)
        }
    });
    Streamfunction {
        psi,
        removed_mean,
        mean_warning: removed_mean.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE),
    }
}

/// `u = perp psi = (-d2 psi, d1 psi)`.
pub fn perp_gradient(psi: &ScalarField) -> VectorField {
    VectorField {
        u1: spectral_derivative(psi, Axis::Y, 1).scaled(-1.0),
        u2: spectral_derivative(psi, Axis::X, 1),
        divergence_free: true,
    }
}

/// Velocity `u = perp psi` with `lap psi = omega`; also returns the
/// streamfunction diagnostics (mean removal).
pub fn velocity_from_vorticity(omega: &ScalarField) -> (VectorField, Streamfunction) {
    let sf = solve_streamfunction(omega);
    (perp_gradient(&sf.psi), sf)
}

/// `omega = d1 u2 - d2 u1`, in the representation of `u.u1`.
pub fn vorticity_from_velocity(u: &VectorField) -> Result<ScalarField> {
    spectral_derivative(&u.u2, Axis::X, 1).axpby(1.0, &spectral_derivative(&u.u1, Axis::Y, 1), -1.0)
}

/// `d1 u1 + d2 u2`.
pub fn divergence(u: &VectorField) -> Result<ScalarField> {
    spectral_derivative(&u.u1, Axis::X, 1).axpby(1.0, &spectral_derivative(&u.u2, Axis::Y, 1), 1.0)
}

/// Keeps a mode iff `|m| <= n / 3` on both axes.
pub(crate) fn dealias_mask(g: &Grid, i: usize, j: usize) -> bool {
    let mx = fft::mode(i, g.nx).unsigned_abs() as f64;
    let my = fft::mode(j, g.ny).unsigned_abs() as f64;
    mx <= g.nx as f64 / 3.0 && my <= g.ny as f64 / 3.0
}

/// Two-thirds rule: zeroes modes with `|m_x| > nx/3` or `|m_y| > ny/3`.
/// Always returns a spectral field.
pub fn dealias(f: &ScalarField) -> ScalarField {
    let g = f.grid;
    let mut c = f.spectral_coefficients();
    for j in 0..g.ny {
        for i in 0..g.nx {
            if !dealias_mask(&g, i, j) {
                c[j * g.nx + i] = Complex64::default();
            }
        }
    }
    ScalarField {
        grid: g,
        data: Data::Spectral(c),
    }
}

/// How quadratic products are protected against aliasing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dealiasing {
    /// Truncate inputs and product to `|m| <= n/3`.
    #[default]
    TwoThirds,
    /// Evaluate the product on a `3n/2` grid and truncate back to `n`.
    Padded,
}

/// Spectral truncation or zero padding onto `target`. Modes with
/// `|m| < min(n, n') / 2` are copied; everything else (including both
/// Nyquist lines) is zero. Domain lengths must agree.
pub fn resample(f: &ScalarField, target: Grid) -> Result<ScalarField> {
    let g = f.grid;
    if (g.lx - target.lx).abs() > 1e-12 * g.lx || (g.ly - target.ly).abs() > 1e-12 * g.ly {
        return Err(Error::GridMismatch(format!(
            "cannot resample between domains {g:?} and {target:?}"
        )));
    }
    let src = f.spectral_coefficients();
    let mut dst = vec![Complex64::default(); target.len()];
    let half_x = (g.nx.min(target.nx) / 2) as i64;
    let half_y = (g.ny.min(target.ny) / 2) as i64;
    for j in 0..g.ny {
        let my = fft::mode(j, g.ny);
        if my.abs() >= half_y {
            continue;
        }
        let tj = my.rem_euclid(target.ny as i64) as usize;
        for i in 0..g.nx {
            let mx = fft::mode(i, g.nx);
            if mx.abs() >= half_x {
                continue;
            }
            let ti = mx.rem_euclid(target.nx as i64) as usize;
            dst[tj * target.nx + ti] = src[j * g.nx + i];
        }
    }
    Ok(ScalarField {
        grid: target,
        data: Data::Spectral(dst),
    }
    .in_representation(f.representation()))
}

/// Product `a b` evaluated on the `3n/2` padded grid and truncated back.
/// Exact (alias free) for inputs band-limited below their Nyquist modes.
pub fn padded_product(a: &ScalarField, b: &ScalarField) -> Result<ScalarField> {
    a.grid.check_same(&b.grid)?;
    let g = a.grid;
    let big = Grid::new(3 * g.nx / 2 + (3 * g.nx / 2) % 2, 3 * g.ny / 2 + (3 * g.ny / 2) % 2, g.lx, g.ly)?;
    let ap = resample(&a.spectral(), big)?.physical();
    let bp = resample(&b.spectral(), big)?.physical();
    let prod = ap.product(&bp)?;
    resample(&prod.spectral(), g)
}

fn dealiased_product(a: &ScalarField, b: &ScalarField, mode: Dealiasing) -> Result<ScalarField> {
    match mode {
        Dealiasing::TwoThirds => {
            let p = dealias(a).physical().product(&dealias(b).physical())?;
            Ok(dealias(&p))
        }
        Dealiasing::Padded => padded_product(a, b),
    }
}

/// Advective form `u1 d1 omega + u2 d2 omega` with 2/3-rule dealiasing.
/// Returned in spectral representation.
pub fn nonlinear_term(u: &VectorField, omega: &ScalarField) -> Result<ScalarField> {
    nonlinear_term_with(u, omega, Dealiasing::TwoThirds)
}

pub fn nonlinear_term_with(
    u: &VectorField,
    omega: &ScalarField,
    mode: Dealiasing,
) -> Result<ScalarField> {
    u.grid().check_same(omega.grid())?;
    let wx = spectral_derivative(&omega.spectral(), Axis::X, 1);
    let wy = spectral_derivative(&omega.spectral(), Axis::Y, 1);
    let a = dealiased_product(&u.u1, &wx, mode)?;
    let b = dealiased_product(&u.u2, &wy, mode)?;
    a.axpby(1.0, &b, 1.0)
}

/// Double-divergence form `d1 d2 (u2^2 - u1^2) + (d1^2 - d2^2)(u1 u2)`,
/// dealiased; equal to the advective form for solenoidal band-limited `u`.
pub fn nonlinear_term_conservative(u: &VectorField) -> Result<ScalarField> {
    nonlinear_term_conservative_with(u, Dealiasing::TwoThirds)
}

pub fn nonlinear_term_conservative_with(u: &VectorField, mode: Dealiasing) -> Result<ScalarField> {
    let u11 = dealiased_product(&u.u1, &u.u1, mode)?;
    let u22 = dealiased_product(&u.u2, &u.u2, mode)?;
    let u12 = dealiased_product(&u.u1, &u.u2, mode)?;
    let diff = u22.axpby(1.0, &u11, -1.0)?;
    let mixed = spectral_derivative(&spectral_derivative(&diff, Axis::X, 1), Axis::Y, 1);
    let xx = spectral_derivative(&u12, Axis::X, 2);
    let yy = spectral_derivative(&u12, Axis::Y, 2);
    mixed.axpby(1.0, &xx.axpby(1.0, &yy, -1.0)?, 1.0)
}

/// Precomputed wavenumber tables used by the time stepper's inner loop.
#[derive(Debug, Clone)]
pub(crate) struct Wavenumbers {
    /// `kx` with the Nyquist entry zeroed (odd derivatives).
    pub kx_odd: Vec<f64>,
    pub ky_odd: Vec<f64>,
    /// `kx^2 + ky^2`, row-major.
    pub k2: Vec<f64>,
    pub keep: Vec<bool>,
}

impl Wavenumbers {
    pub fn new(g: &Grid) -> Self {
        let kx: Vec<f64> = (0..g.nx).map(|i| g.kx(i)).collect();
        let ky: Vec<f64> = (0..g.ny).map(|j| g.ky(j)).collect();
        let kx_odd = (0..g.nx)
            .map(|i| if g.is_nyquist_x(i) { 0.0 } else { kx[i] })
            .collect();
        let ky_odd = (0..g.ny)
            .map(|j| if g.is_nyquist_y(j) { 0.0 } else { ky[j] })
            .collect();
        let mut k2 = Vec::with_capacity(g.len());
        let mut keep = Vec::with_capacity(g.len());
        for j in 0..g.ny {
            for i in 0..g.nx {
                k2.push(kx[i] * kx[i] + ky[j] * ky[j]);
                keep.push(dealias_mask(g, i, j));
            }
        }
        Wavenumbers {
            kx_odd,
            ky_odd,
            k2,
            keep,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g32() -> Grid {
        Grid::square(32).unwrap()
    }

    fn max_diff(a: &ScalarField, b: &ScalarField) -> f64 {
        let x = a.physical_values();
        let y = b.physical_values();
        x.iter().zip(&y).fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()))
    }

    #[test]
    fn grid_rejects_odd_or_small() {
        assert!(Grid::new(7, 8, 1.0, 1.0).is_err());
        assert!(Grid::new(6, 8, 1.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 0.0, 1.0).is_err());
        let g = Grid::new(8, 16, 2.0, 4.0).unwrap();
        assert_eq!(g.dx(), 0.25);
        assert_eq!(g.dy(), 0.25);
    }

    #[test]
    fn constant_field_has_only_zero_mode() {
        let f = ScalarField::constant(g32(), 2.5);
        let s = to_spectral(&f).unwrap();
        let c = s.coefficients().unwrap();
        assert!((c[0].re - 2.5).abs() < 1e-14);
        assert!(c[1..].iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn single_sine_has_two_conjugate_modes() {
        let g = g32();
        let s = to_spectral(&ScalarField::from_fn(g, |x, _| x.sin())).unwrap();
        let c = s.coefficients().unwrap();
        let plus = c[g.index(1, 0)];
        let minus = c[g.index(31, 0)];
        assert!((plus - Complex64::new(0.0, -0.5)).norm() < 1e-14);
        assert!((minus - plus.conj()).norm() < 1e-14);
        let nonzero = c.iter().filter(|z| z.norm() > 1e-12).count();
        assert_eq!(nonzero, 2);
        assert!(s.is_hermitian(1e-14));
    }

    #[test]
    fn representation_mismatch_is_an_error() {
        let f = ScalarField::zeros(g32());
        assert!(to_physical(&f).is_err());
        let s = to_spectral(&f).unwrap();
        assert!(to_spectral(&s).is_err());
    }

    #[test]
    fn derivatives_of_trig_fields() {
        let g = g32();
        let d = spectral_derivative(&ScalarField::from_fn(g, |x, _| x.sin()), Axis::X, 1);
        assert!(max_diff(&d, &ScalarField::from_fn(g, |x, _| x.cos())) < 1e-12);
        let c = spectral_derivative(&ScalarField::constant(g, 3.0), Axis::Y, 1);
        assert!(c.max_abs() < 1e-14);
        let f = ScalarField::from_fn(g, |x, y| x.sin() * y.sin());
        let dxy = spectral_derivative(&spectral_derivative(&f, Axis::X, 1), Axis::Y, 1);
        assert!(max_diff(&dxy, &ScalarField::from_fn(g, |x, y| x.cos() * y.cos())) < 1e-12);
    }

    #[test]
    fn streamfunction_examples() {
        let g = g32();
        let sf = solve_streamfunction(&ScalarField::from_fn(g, |_, y| -y.cos()));
        assert!(max_diff(&sf.psi, &ScalarField::from_fn(g, |_, y| y.cos())) < 1e-12);
        assert!(!sf.mean_warning);
        let z = solve_streamfunction(&ScalarField::zeros(g));
        assert_eq!(z.psi.max_abs(), 0.0);
        let sf = solve_streamfunction(&ScalarField::from_fn(g, |x, y| -2.0 * x.sin() * y.sin()));
        assert!(max_diff(&sf.psi, &ScalarField::from_fn(g, |x, y| x.sin() * y.sin())) < 1e-12);
    }

    #[test]
    fn nonzero_mean_is_reported_not_dropped_silently() {
        let g = g32();
        let sf = solve_streamfunction(&ScalarField::from_fn(g, |x, _| 0.5 + x.cos()));
        assert!(sf.mean_warning);
        assert!((sf.removed_mean - 0.5).abs() < 1e-14);
        assert!(max_diff(&sf.psi, &ScalarField::from_fn(g, |x, _| -x.cos())) < 1e-12);
    }

    #[test]
    fn velocity_and_curl_examples() {
        let g = g32();
        let (u, _) = velocity_from_vorticity(&ScalarField::from_fn(g, |_, y| -y.cos()));
        assert!(u.divergence_free);
        assert!(max_diff(&u.u1, &ScalarField::from_fn(g, |_, y| y.sin())) < 1e-12);
        assert!(u.u2.max_abs() < 1e-12);
        let w = vorticity_from_velocity(&VectorField::from_fn(g, |_, y| (y.sin(), 0.0))).unwrap();
        assert!(max_diff(&w, &ScalarField::from_fn(g, |_, y| -y.cos())) < 1e-12);
        let w = vorticity_from_velocity(&VectorField::from_fn(g, |_, _| (1.0, -2.0))).unwrap();
        assert!(w.max_abs() < 1e-13);
        let psi = ScalarField::from_fn(g, |x, y| x.sin() * y.sin());
        let w = vorticity_from_velocity(&perp_gradient(&psi)).unwrap();
        assert!(max_diff(&w, &ScalarField::from_fn(g, |x, y| -2.0 * x.sin() * y.sin())) < 1e-12);
    }

    #[test]
    fn nonlinear_term_examples() {
        let g = g32();
        let omega = ScalarField::from_fn(g, |_, y| -y.cos());
        let (u, _) = velocity_from_vorticity(&omega);
        assert!(nonlinear_term(&u, &omega).unwrap().max_abs() < 1e-14);

        let omega = ScalarField::from_fn(g, |x, y| (2.0 * x).sin() + (x + y).cos());
        let c = VectorField::from_fn(g, |_, _| (0.7, -1.3));
        let n = nonlinear_term(&c, &omega).unwrap();
        let expect = ScalarField::from_fn(g, |x, y| {
            0.7 * (2.0 * (2.0 * x).cos() - (x + y).sin()) + 1.3 * (x + y).sin()
        });
        assert!(max_diff(&n, &expect) < 1e-12);
    }

    #[test]
    fn dealias_examples() {
        let g = g32();
        let band = ScalarField::from_fn(g, |x, y| (3.0 * x).cos() + (10.0 * y).sin());
        assert!(max_diff(&dealias(&band), &band) < 1e-13);
        let high = ScalarField::from_fn(g, |x, _| (15.0 * x).cos());
        assert!(dealias(&high).max_abs() < 1e-14);
    }

    #[test]
    fn resample_round_trip_of_band_limited_field() {
        let g = g32();
        let fine = Grid::square(64).unwrap();
        let f = ScalarField::from_fn(g, |x, y| (3.0 * x).sin() * (2.0 * y).cos() + 0.25);
        let up = resample(&f, fine).unwrap();
        let expect = ScalarField::from_fn(fine, |x, y| (3.0 * x).sin() * (2.0 * y).cos() + 0.25);
        assert!(max_diff(&up, &expect) < 1e-13);
        let down = resample(&up, g).unwrap();
        assert!(max_diff(&down, &f) < 1e-13);
    }
}
