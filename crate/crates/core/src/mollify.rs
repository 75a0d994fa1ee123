//! Annulus-supported mollifier `j`, filtered fields
//! `u_r(x) = int j(z) u(x - r z) dz` and the commutator
//! `rho_r(u, v) = int j(z) (u(x - r z) - u(x)) (v(x - r z) - v(x)) dz - (u - u_r)(v - v_r)`,
//! which satisfies `(uv)_r - u_r v_r = rho_r(u, v)`.
//!
//! The integral over the annulus `1 < |z| < 2` is a polar tensor-product
//! trapezoid rule, normalised discretely so constants are reproduced to
//! rounding. Off-grid values `u(x - r z)` come from a [`Sampler`].

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::region::CompactRegion;
use crate::spectral::{Grid, ScalarField, VectorField};

/// Radial shape of the kernel on `1 < |z| < 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelProfile {
    /// `exp(-1 / ((|z| - 1)(2 - |z|)))`.
    #[default]
    DefaultBump,
}

impl KernelProfile {
    /// Unnormalised profile value at radius `s`; zero off the open annulus.
    pub fn eval(self, s: f64) -> f64 {
        match self {
            KernelProfile::DefaultBump => {
                if s <= 1.0 || s >= 2.0 {
                    0.0
                } else {
                    (-1.0 / ((s - 1.0) * (2.0 - s))).exp()
                }
            }
        }
    }
}

/// How `u(x - r z)` is evaluated between grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampler {
    /// Trigonometric interpolation: exact for band-limited fields, so products
    /// of fields band-limited to a quarter of the grid commute with sampling.
    #[default]
    Spectral,
    /// Periodic bilinear interpolation of the nodal values (second order in
    /// the grid spacing).
    Bilinear,
}

/// One quadrature node `z` with weight `w = j(z) dA` (weights sum to one).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadNode {
    pub z: [f64; 2],
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MollifierSpec {
    pub r: f64,
    pub profile: KernelProfile,
    pub sampler: Sampler,
    /// `c` in `j = c * profile`, fixed by discrete normalisation.
    pub normalization: f64,
    pub nodes: Vec<QuadNode>,
}

/// Default quadrature: 32 interior radial nodes, 64 angles.
pub const RADIAL_NODES: usize = 32;
pub const ANGULAR_NODES: usize = 64;

impl MollifierSpec {
    /// Normalised kernel `j(z)`.
    pub fn j(&self, z: [f64; 2]) -> f64 {
        self.normalization * self.profile.eval(z[0].hypot(z[1]))
    }

    pub fn with_sampler(mut self, sampler: Sampler) -> Self {
        self.sampler = sampler;
        self
    }

    /// Discrete first moment `sum w |z|`, in `(1, 2)`.
    pub fn first_moment(&self) -> f64 {
        self.nodes.iter().map(|n| n.w * n.z[0].hypot(n.z[1])).sum()
    }

    /// Discrete Fourier symbol `sum w cos(r k . z)` of the filter.
    pub fn symbol(&self, kx: f64, ky: f64) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.w * (self.r * (kx * n.z[0] + ky * n.z[1])).cos())
            .sum()
    }
}

/// Builds the mollifier at radius `r` for fields on `grid`. Rejects radii
/// with `2r >= min(lx, ly) / 2`, where the annulus would wrap onto itself.
pub fn make_mollifier(r: f64, profile: KernelProfile, grid: &Grid) -> Result<MollifierSpec> {
    make_mollifier_with(r, profile, grid, RADIAL_NODES, ANGULAR_NODES)
}

pub fn make_mollifier_with(
    r: f64,
    profile: KernelProfile,
    grid: &Grid,
    radial: usize,
    angular: usize,
) -> Result<MollifierSpec> {
    let bound = grid.lx().min(grid.ly()) / 2.0;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("mollifier radius {r} must be positive")));
    }
    if 2.0 * r >= bound {
        return Err(Error::InvalidArgument(format!(
            "mollifier radius {r} violates 2r < min(lx, ly)/2 = {bound}"
        )));
    }
    if radial == 0 || angular < 2 || !angular.is_multiple_of(2) {
        return Err(Error::InvalidArgument("need radial >= 1 and an even angular count".into()));
    }
    let hr = 1.0 / (radial + 1) as f64;
    let ht = 2.0 * PI / angular as f64;
    let mut nodes = Vec::with_capacity(radial * angular);
    let mut total = 0.0;
    for i in 1..=radial {
        let s = 1.0 + i as f64 * hr;
        let w = profile.eval(s) * s * hr * ht;
        for a in 0..angular {
            let theta = a as f64 * ht;
            nodes.push(QuadNode {
                z: [s * theta.cos(), s * theta.sin()],
                w,
            });
            total += w;
        }
    }
    for n in &mut nodes {
        n.w /= total;
    }
    Ok(MollifierSpec {
        r,
        profile,
        sampler: Sampler::Spectral,
        normalization: 1.0 / total,
        nodes,
    })
}

/// Nodal values of `u(x + s)` by trigonometric interpolation; the Nyquist
/// lines are dropped since their shift is not real-representable.
pub fn shift_spectral(coeffs: &[Complex64], grid: &Grid, s: [f64; 2]) -> Vec<f64> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let ex: Vec<Complex64> = (0..nx)
        .map(|i| {
            if grid.is_nyquist_x(i) {
                Complex64::default()
            } else {
                Complex64::from_polar(1.0, grid.kx(i) * s[0])
            }
        })
        .collect();
    let mut buf = vec![Complex64::default(); nx * ny];
    for j in 0..ny {
        if grid.is_nyquist_y(j) {
            continue;
        }
        let ey = Complex64::from_polar(1.0, grid.ky(j) * s[1]);
        for i in 0..nx {
            buf[j * nx + i] = coeffs[j * nx + i] * ex[i] * ey;
        }
    }
    fft::inverse(&mut buf, nx, ny);
    buf.into_iter().map(|c| c.re).collect()
}

/// Periodic bilinear interpolation of nodal values at the point `(x, y)`.
pub fn bilinear_at(values: &[f64], grid: &Grid, x: f64, y: f64) -> f64 {
    let (nx, ny) = (grid.nx(), grid.ny());
    let fx = (x / grid.dx()).rem_euclid(nx as f64);
    let fy = (y / grid.dy()).rem_euclid(ny as f64);
    let i0 = (fx.floor() as usize) % nx;
    let j0 = (fy.floor() as usize) % ny;
    let (ax, ay) = (fx - fx.floor(), fy - fy.floor());
    let (i1, j1) = ((i0 + 1) % nx, (j0 + 1) % ny);
    (1.0 - ay) * ((1.0 - ax) * values[j0 * nx + i0] + ax * values[j0 * nx + i1])
        + ay * ((1.0 - ax) * values[j1 * nx + i0] + ax * values[j1 * nx + i1])
}

/// Nodal values of `u(x + s)` by periodic bilinear interpolation.
pub fn shift_bilinear(values: &[f64], grid: &Grid, s: [f64; 2]) -> Vec<f64> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let fx = (s[0] / grid.dx()).rem_euclid(nx as f64);
    let fy = (s[1] / grid.dy()).rem_euclid(ny as f64);
    let (di, dj) = (fx.floor() as usize % nx, fy.floor() as usize % ny);
    let (ax, ay) = (fx - fx.floor(), fy - fy.floor());
    let mut out = vec![0.0; nx * ny];
    for j in 0..ny {
        let j0 = (j + dj) % ny;
        let j1 = (j0 + 1) % ny;
        for i in 0..nx {
            let i0 = (i + di) % nx;
            let i1 = (i0 + 1) % nx;
            out[j * nx + i] = (1.0 - ay) * ((1.0 - ax) * values[j0 * nx + i0] + ax * values[j0 * nx + i1])
                + ay * ((1.0 - ax) * values[j1 * nx + i0] + ax * values[j1 * nx + i1]);
        }
    }
    out
}

/// Source data for repeated shifts of one field.
struct Shifter<'a> {
    grid: &'a Grid,
    sampler: Sampler,
    values: Vec<f64>,
    coeffs: Vec<Complex64>,
}

impl<'a> Shifter<'a> {
    fn new(f: &'a ScalarField, sampler: Sampler) -> Self {
        Shifter {
            grid: f.grid(),
            sampler,
            values: f.physical_values(),
            coeffs: match sampler {
                Sampler::Spectral => f.spectral_coefficients(),
                Sampler::Bilinear => Vec::new(),
            },
        }
    }

    /// Nodal values of `u(x - r z)`.
    fn sample(&self, r: f64, z: [f64; 2]) -> Vec<f64> {
        let s = [-r * z[0], -r * z[1]];
        match self.sampler {
            Sampler::Spectral => shift_spectral(&self.coeffs, self.grid, s),
            Sampler::Bilinear => shift_bilinear(&self.values, self.grid, s),
        }
    }
}

/// `u_r` for a periodic scalar field; keeps the input representation.
pub fn filter(u: &ScalarField, m: &MollifierSpec) -> ScalarField {
    let g = *u.grid();
    let out = match m.sampler {
        Sampler::Spectral => {
            // sum_n w_n u(x - r z_n) is diagonal in Fourier space
            let mut c = u.spectral_coefficients();
            let sym_x = |i: usize| if g.is_nyquist_x(i) { None } else { Some(g.kx(i)) };
            for j in 0..g.ny() {
                for i in 0..g.nx() {
                    let idx = j * g.nx() + i;
                    c[idx] = match (sym_x(i), g.is_nyquist_y(j)) {
                        (Some(kx), false) => c[idx] * m.symbol(kx, g.ky(j)),
                        _ => Complex64::default(),
                    };
                }
            }
            ScalarField::from_coefficients(g, c).expect("grid-sized buffer")
        }
        Sampler::Bilinear => {
            let sh = Shifter::new(u, m.sampler);
            let mut acc = vec![0.0; g.len()];
            for n in &m.nodes {
                for (a, v) in acc.iter_mut().zip(sh.sample(m.r, n.z)) {
                    *a += n.w * v;
                }
            }
            ScalarField::from_values(g, acc).expect("grid-sized buffer")
        }
    };
    out.in_representation(u.representation())
}

/// Component-wise `u_r`.
pub fn filter_vector(u: &VectorField, m: &MollifierSpec) -> VectorField {
    VectorField {
        u1: filter(&u.u1, m),
        u2: filter(&u.u2, m),
        divergence_free: u.divergence_free && m.sampler == Sampler::Spectral,
    }
}

/// [`filter`] for use on a region `K`: the filter reaches `2r` beyond `K`,
/// so a bounded-domain region must keep that margin.
pub fn filter_in(u: &ScalarField, m: &MollifierSpec, region: &CompactRegion) -> Result<ScalarField> {
    region.check_margin(2.0 * m.r)?;
    Ok(filter(u, m))
}

/// `rho_r` evaluated component-wise: `components[i * cols + j] = rho_r(u_i, v_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutatorField {
    pub grid: Grid,
    pub r: f64,
    pub rows: usize,
    pub cols: usize,
    pub components: Vec<ScalarField>,
}

impl CommutatorField {
    pub fn get(&self, i: usize, j: usize) -> &ScalarField {
        &self.components[i * self.cols + j]
    }

    /// Pointwise Frobenius norm.
    pub fn frobenius(&self) -> Vec<f64> {
        let vals: Vec<Vec<f64>> = self.components.iter().map(|c| c.physical_values()).collect();
        (0..self.grid.len())
            .map(|p| vals.iter().map(|v| v[p] * v[p]).sum::<f64>().sqrt())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.frobenius().into_iter().fold(0.0, f64::max)
    }

    /// `int_K |rho|_F dx` with cell-overlap weights.
    pub fn l1_on(&self, region: &CompactRegion) -> f64 {
        let w = region.cell_weights(&self.grid);
        self.frobenius().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell_area()
    }
}

fn commutator_components(us: &[&ScalarField], vs: &[&ScalarField], m: &MollifierSpec) -> Result<CommutatorField> {
    let g = *us[0].grid();
    for f in us.iter().chain(vs) {
        g.check_same(f.grid())?;
    }
    let su: Vec<Shifter> = us.iter().map(|f| Shifter::new(f, m.sampler)).collect();
    let sv: Vec<Shifter> = vs.iter().map(|f| Shifter::new(f, m.sampler)).collect();
    let (rows, cols) = (us.len(), vs.len());
    let n = g.len();
    let mut cross = vec![vec![0.0; n]; rows * cols];
    let mut ur = vec![vec![0.0; n]; rows];
    let mut vr = vec![vec![0.0; n]; cols];
    for node in &m.nodes {
        let du: Vec<Vec<f64>> = su
            .iter()
            .map(|s| s.sample(m.r, node.z).iter().zip(&s.values).map(|(a, b)| a - b).collect())
            .collect();
        let dv: Vec<Vec<f64>> = sv
            .iter()
            .map(|s| s.sample(m.r, node.z).iter().zip(&s.values).map(|(a, b)| a - b).collect())
            .collect();
        for (a, d) in ur.iter_mut().zip(&du) {
            for (x, y) in a.iter_mut().zip(d) {
                *x += node.w * y;
            }
        }
        for (a, d) in vr.iter_mut().zip(&dv) {
            for (x, y) in a.iter_mut().zip(d) {
                *x += node.w * y;
            }
        }
        for i in 0..rows {
            for j in 0..cols {
                let c = &mut cross[i * cols + j];
                for p in 0..n {
                    c[p] += node.w * du[i][p] * dv[j][p];
                }
            }
        }
    }
    // ur, vr hold u_r - u and v_r - v
    let mut components = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let vals: Vec<f64> = (0..n).map(|p| cross[i * cols + j][p] - ur[i][p] * vr[j][p]).collect();
            components.push(ScalarField::from_values(g, vals)?);
        }
    }
    Ok(CommutatorField {
        grid: g,
        r: m.r,
        rows,
        cols,
        components,
    })
}

/// `rho_r(u, v)` for scalar fields, evaluated from its defining integral.
pub fn commutator(u: &ScalarField, v: &ScalarField, m: &MollifierSpec) -> Result<CommutatorField> {
    commutator_components(&[u], &[v], m)
}

/// Tensor commutator `rho_r(u_i, v_j)` for vector fields.
pub fn commutator_tensor(u: &VectorField, v: &VectorField, m: &MollifierSpec) -> Result<CommutatorField> {
    commutator_components(&[&u.u1, &u.u2], &[&v.u1, &v.u2], m)
}

/// `(uv)_r - u_r v_r`, computed from filters alone.
pub fn commutator_via_filters(u: &ScalarField, v: &ScalarField, m: &MollifierSpec) -> Result<ScalarField> {
    let uv = u.product(v)?;
    let lhs = filter(&uv, m).physical();
    let prod = filter(u, m).product(&filter(v, m))?;
    lhs.axpby(1.0, &prod, -1.0)
}

/// `max_n int_K |u(x - r z_n) - u(x)|^2 dx` over the quadrature shifts, all of
/// which lie in the shell `r < |y| < 2r`.
pub fn max_shell_increment(u: &VectorField, m: &MollifierSpec, region: &CompactRegion) -> f64 {
    let g = *u.grid();
    let w = region.cell_weights(&g);
    let s1 = Shifter::new(&u.u1, m.sampler);
    let s2 = Shifter::new(&u.u2, m.sampler);
    let mut best = 0.0_f64;
    for node in &m.nodes {
        let a = s1.sample(m.r, node.z);
        let b = s2.sample(m.r, node.z);
        let mut acc = 0.0;
        for p in 0..g.len() {
            let d1 = a[p] - s1.values[p];
            let d2 = b[p] - s2.values[p];
            acc += w[p] * (d1 * d1 + d2 * d2);
        }
        best = best.max(acc * g.cell_area());
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g64() -> Grid {
        Grid::square(64).unwrap()
    }

    #[test]
    fn kernel_normalised_symmetric_and_supported() {
        for r in [0.05, 0.3, 1.2] {
            let m = make_mollifier(r, KernelProfile::DefaultBump, &g64()).unwrap();
            let s: f64 = m.nodes.iter().map(|n| n.w).sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert_eq!(m.nodes.len(), RADIAL_NODES * ANGULAR_NODES);
            for n in &m.nodes {
                assert!(n.w >= 0.0);
                assert_eq!(m.j(n.z), m.j([-n.z[0], -n.z[1]]));
            }
        }
        let m = make_mollifier(0.1, KernelProfile::DefaultBump, &g64()).unwrap();
        assert_eq!(m.j([1.0, 0.0]), 0.0);
        assert_eq!(m.j([0.0, 2.0]), 0.0);
        assert_eq!(m.j([0.3, 0.2]), 0.0);
        assert!(m.j([1.5, 0.0]) > 0.0);
    }

    #[test]
    fn radius_bound_enforced() {
        let g = g64();
        let err = make_mollifier(PI / 2.0, KernelProfile::DefaultBump, &g).unwrap_err();
        assert!(err.to_string().contains("2r < min(lx, ly)/2"));
        assert!(make_mollifier(PI / 2.0 - 1e-3, KernelProfile::DefaultBump, &g).is_ok());
    }

    #[test]
    fn constant_reproduced() {
        let g = g64();
        let c = ScalarField::constant(g, 3.25);
        for sampler in [Sampler::Spectral, Sampler::Bilinear] {
            let m = make_mollifier(0.2, KernelProfile::DefaultBump, &g).unwrap().with_sampler(sampler);
            let f = filter(&c, &m);
            assert!(f.physical_values().iter().all(|v| (v - 3.25).abs() < 1e-12));
        }
    }

    /// Radial symbol by dense Simpson quadrature of the continuous kernel:
    /// `int j(s) J0(r k s) s ds dtheta`, with the angular integral done by a
    /// dense trapezoid rule.
    fn dense_symbol(r: f64, k: f64) -> f64 {
        let nr = 4000;
        let nt = 512;
        let h = 1.0 / nr as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..=nr {
            let s = 1.0 + i as f64 * h;
            let sw = if i == 0 || i == nr { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let p = KernelProfile::DefaultBump.eval(s) * s * sw;
            let mut ang = 0.0;
            for a in 0..nt {
                let th = 2.0 * PI * a as f64 / nt as f64;
                ang += (r * k * s * th.cos()).cos();
            }
            num += p * ang / nt as f64;
            den += p;
        }
        num / den
    }

    #[test]
    fn single_mode_matches_dense_quadrature() {
        let g = g64();
        let r = 0.1;
        let m = make_mollifier(r, KernelProfile::DefaultBump, &g).unwrap();
        let u = ScalarField::from_fn(g, |x, _| x.cos());
        let f = filter(&u, &m);
        let jhat = dense_symbol(r, 1.0);
        let expect = u.scaled(jhat);
        assert!(f.axpby(1.0, &expect, -1.0).unwrap().max_abs() < 1e-8);
        let us = ScalarField::from_fn(g, |x, _| x.sin());
        let fs = filter(&us, &m);
        assert!(fs.axpby(1.0, &us.scaled(jhat), -1.0).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn filter_error_is_second_order_in_r() {
        let g = g64();
        let u = ScalarField::from_fn(g, |x, y| (x + 2.0 * y).sin() + 0.5 * (3.0 * x).cos());
        let err = |r: f64| {
            let m = make_mollifier(r, KernelProfile::DefaultBump, &g).unwrap();
            filter(&u, &m).axpby(1.0, &u, -1.0).unwrap().norm_sq().sqrt()
        };
        let rs = [0.2, 0.1, 0.05, 0.025];
        let es: Vec<f64> = rs.iter().map(|&r| err(r)).collect();
        for w in es.windows(2) {
            assert!(w[1] < w[0]);
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.95, "order {order}");
        }
    }

    #[test]
    fn spectral_and_bilinear_filters_agree_at_resolution() {
        let g = Grid::square(128).unwrap();
        let u = ScalarField::from_fn(g, |x, y| (x - y).sin());
        let m = make_mollifier(0.3, KernelProfile::DefaultBump, &g).unwrap();
        let a = filter(&u, &m);
        let b = filter(&u, &m.clone().with_sampler(Sampler::Bilinear));
        // bilinear error ~ h^2 / 8
        assert!(a.axpby(1.0, &b, -1.0).unwrap().max_abs() < 2e-3);
    }

    #[test]
    fn commutator_examples() {
        let g = g64();
        let m = make_mollifier(0.1, KernelProfile::DefaultBump, &g).unwrap();
        let c = ScalarField::constant(g, 2.0);
        let v = ScalarField::from_fn(g, |x, y| (x + y).sin());
        let rho = commutator(&c, &v, &m).unwrap();
        assert!(rho.max_abs() < 1e-13);

        let s = ScalarField::from_fn(g, |x, _| x.sin());
        let rho = commutator(&s, &s, &m).unwrap();
        let lhs = commutator_via_filters(&s, &s, &m).unwrap();
        let d = rho.get(0, 0).axpby(1.0, &lhs, -1.0).unwrap().max_abs();
        assert!(d < 1e-8, "{d}");
        assert!(rho.get(0, 0).max_abs() > 1e-5);
    }

    #[test]
    fn shear_commutator_scales_like_r_squared() {
        let g = g64();
        let u = VectorField::from_fn(g, |_, y| (2.0 * y.sin(), 0.0));
        let norm = |r: f64| {
            let m = make_mollifier(r, KernelProfile::DefaultBump, &g).unwrap();
            commutator_tensor(&u, &u, &m).unwrap().max_abs()
        };
        let ratio = norm(0.2) / norm(0.1);
        assert!((ratio - 4.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn filter_in_checks_margin() {
        let g = g64();
        let m = make_mollifier(0.2, KernelProfile::DefaultBump, &g).unwrap();
        let k = CompactRegion::interior("K", 0.3, 1.0, 0.3, 1.0, g.lx(), g.ly()).unwrap();
        let u = ScalarField::zeros(g);
        let e = filter_in(&u, &m, &k).unwrap_err();
        assert!(matches!(e, Error::Margin { ref region, .. } if region == "K"));
        let ok = CompactRegion::interior("K2", 1.0, 2.0, 1.0, 2.0, g.lx(), g.ly()).unwrap();
        assert!(filter_in(&u, &m, &ok).is_ok());
    }
}
