//! Two-dimensional complex FFTs over row-major `ny x nx` buffers.
//!
//! Plans are cached process-wide behind a mutex; the plans themselves are
//! immutable and shared, and every call allocates its own scratch so concurrent
//! transforms never touch shared mutable state.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

type PlanKey = (usize, bool);

fn planner() -> &'static Mutex<(FftPlanner<f64>, HashMap<PlanKey, Arc<dyn Fft<f64>>>)> {
    static PLANNER: OnceLock<Mutex<(FftPlanner<f64>, HashMap<PlanKey, Arc<dyn Fft<f64>>>)>> =
        OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())))
}

pub(crate) fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    let forward = direction == FftDirection::Forward;
    let mut guard = planner().lock().expect("fft planner poisoned");
    let (planner, cache) = &mut *guard;
    cache
        .entry((len, forward))
        .or_insert_with(|| planner.plan_fft(len, direction))
        .clone()
}

fn transform(data: &mut [Complex64], nx: usize, ny: usize, direction: FftDirection) {
    debug_assert_eq!(data.len(), nx * ny);
    let fx = plan(nx, direction);
    let fy = plan(ny, direction);
    let mut scratch =
        vec![Complex64::default(); fx.get_inplace_scratch_len().max(fy.get_inplace_scratch_len())];
    // rows are contiguous: one batched call
    fx.process_with_scratch(data, &mut scratch[..fx.get_inplace_scratch_len()]);
    // columns through a transposed buffer
    let mut t = vec![Complex64::default(); nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            t[i * ny + j] = data[j * nx + i];
        }
    }
    fy.process_with_scratch(&mut t, &mut scratch[..fy.get_inplace_scratch_len()]);
    for i in 0..nx {
        for j in 0..ny {
            data[j * nx + i] = t[i * ny + j];
        }
    }
}

/// Forward transform normalised so the result holds Fourier coefficients:
/// `f(x) = sum_k c_k exp(i k.x)`.
pub(crate) fn forward(data: &mut [Complex64], nx: usize, ny: usize) {
    transform(data, nx, ny, FftDirection::Forward);
    let scale = 1.0 / (nx * ny) as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Inverse of [`forward`] (synthesis from Fourier coefficients).
pub(crate) fn inverse(data: &mut [Complex64], nx: usize, ny: usize) {
    transform(data, nx, ny, FftDirection::Inverse);
}

/// 1-D forward transform with the same normalisation as [`forward`].
pub(crate) fn forward_1d(data: &mut [Complex64]) {
    let n = data.len();
    plan(n, FftDirection::Forward).process(data);
    let scale = 1.0 / n as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Signed mode number for FFT index `i` on an axis of length `n`; the Nyquist
/// index maps to `+n/2`.
#[inline]
pub(crate) fn mode(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}
