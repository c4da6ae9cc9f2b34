//! Dense and banded linear algebra kernels.

pub mod banded;
pub mod expm;
pub mod lyapunov;

pub use banded::{BandLu, BandMatrix};
pub use expm::expm;
pub use lyapunov::{lyapunov_residual, solve_lyapunov, LyapunovSolver};

use nalgebra::{Complex, DMatrix};

use crate::scalar::Real;

/// `(M + Mᵀ) / 2`.
pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

pub fn eigenvalues<T: Real>(m: &DMatrix<T>) -> Vec<Complex<T>> {
    m.complex_eigenvalues().iter().copied().collect()
}

/// Largest real part among the eigenvalues.
pub fn spectral_abscissa<T: Real>(m: &DMatrix<T>) -> T {
    eigenvalues(m)
        .into_iter()
        .map(|z| z.re)
        .fold(T::min_value().unwrap(), |a, b| a.max(b))
}

pub fn is_hurwitz<T: Real>(m: &DMatrix<T>) -> bool {
    m.nrows() == 0 || spectral_abscissa(m) < T::zero()
}

/// Largest absolute entry.
pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter()
        .fold(T::zero(), |a, v| a.max(nalgebra::ComplexField::abs(*v)))
}

/// Relative max-norm difference `‖a − b‖_max / ‖b‖_max` (absolute when `b = 0`).
pub fn rel_max_diff<T: Real>(a: &[T], b: &[T]) -> T {
    let abs = nalgebra::ComplexField::abs;
    let scale = b.iter().fold(T::zero(), |m, v| m.max(abs(*v)));
    let diff = a
        .iter()
        .zip(b)
        .fold(T::zero(), |m, (x, y)| m.max(abs(*x - *y)));
    if scale > T::zero() {
        diff / scale
    } else {
        diff
    }
}
