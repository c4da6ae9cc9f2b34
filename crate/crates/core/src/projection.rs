//! Change of variables onto the mass-zero subspace.
//!
//! With `ρ̂ = ρ∞ / 1ᵀρ∞`, the matrices are
//! `R = [[I, ρ̂']; [−1ᵀ, ρ̂_n]]` and `R⁻¹ = [[I, 0]; [1ᵀ, 1]] − [[ρ̂' 1ᵀ]; [0]]`,
//! where `ρ̂'` holds the first `n − 1` entries. `RQ = [I; −1ᵀ]` and
//! `QᵀR⁻¹ = [I, 0] − ρ̂' 1ᵀ`, so every product below is formed in O(n²)
//! without building `R` or `R⁻¹`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::BilinearModel;
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct ProjectedModel<T: Real> {
    pub a: DMatrix<T>,
    pub n_ops: Vec<DMatrix<T>>,
    pub b: DMatrix<T>,
    /// Stationary density scaled to unit entry sum.
    pub rho_hat: DVector<T>,
    pub hbar: T,
    /// Largest entry of the blocks that must vanish (last row of `R⁻¹AR`, `R⁻¹N_jR`, `R⁻¹B`, last column of `R⁻¹AR`).
    pub zero_block_residual: T,
}

/// Relative tolerance on the vanishing blocks, scaled by `‖A‖_∞`.
pub const ZERO_BLOCK_TOL: f64 = 1e-10;

/// `M [I; −1ᵀ]`: subtract the last column from the others.
fn times_rq<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let n = m.nrows();
    let last = m.column(n - 1).clone_owned();
    let mut out = m.columns(0, n - 1).clone_owned();
    for mut c in out.column_iter_mut() {
        c -= &last;
    }
    out
}

/// `Qᵀ R⁻¹ M` for an `n × k` matrix: rows `0..n−1` minus `ρ̂'` times the column sums.
fn qt_rinv_times<T: Real>(rho_hat: &DVector<T>, m: &DMatrix<T>) -> DMatrix<T> {
    let n = m.nrows();
    let sums = m.row_sum();
    let mut out = m.rows(0, n - 1).clone_owned();
    for j in 0..m.ncols() {
        for i in 0..n - 1 {
            out[(i, j)] -= rho_hat[i] * sums[j];
        }
    }
    out
}

fn norm_inf<T: Real>(m: &DMatrix<T>) -> T {
    m.row_iter()
        .map(|r| r.iter().fold(T::zero(), |s, v| s + nalgebra::ComplexField::abs(*v)))
        .fold(T::zero(), |a, b| a.max(b))
}

/// Projects the model; fails when the vanishing blocks exceed `1e-10 ‖A‖_∞`.
pub fn project<T: Real>(model: &BilinearModel<T>) -> Result<ProjectedModel<T>> {
    let n = model.n();
    if n < 2 {
        return Err(Error::InvalidArgument("projection needs n ≥ 2".into()));
    }
    let rho_hat = &model.rho_inf / model.rho_inf.sum();
    let a = model.a_dense();
    let abs = nalgebra::ComplexField::abs;
    let mut resid = T::zero();

    let a_rq = times_rq(&a);
    resid = resid.max(a_rq.row_sum().amax());
    // last column of R⁻¹ A R is R⁻¹ A ρ̂
    let a_rho = &a * &rho_hat;
    let s = a_rho.sum();
    for i in 0..n - 1 {
        resid = resid.max(abs(a_rho[i] - rho_hat[i] * s));
    }
    resid = resid.max(abs(s));
    let a_t = qt_rinv_times(&rho_hat, &a_rq);

    let mut n_ops = Vec::with_capacity(model.m());
    for j in 0..model.m() {
        let nr = times_rq(&model.n_dense(j));
        resid = resid.max(nr.row_sum().amax());
        n_ops.push(qt_rinv_times(&rho_hat, &nr));
    }
    resid = resid.max(model.b.row_sum().amax());
    let b = qt_rinv_times(&rho_hat, &model.b);

    let tol = T::lit(ZERO_BLOCK_TOL) * norm_inf(&a);
    if resid > tol {
        return Err(Error::ProjectionResidual { residual: resid.as_f64(), tol: tol.as_f64() });
    }
    Ok(ProjectedModel { a: a_t, n_ops, b, rho_hat, hbar: model.grid.hbar, zero_block_residual: resid })
}

impl<T: Real> ProjectedModel<T> {
    /// Full dimension `n`; the projected state has `n − 1` entries.
    pub fn n(&self) -> usize {
        self.rho_hat.len()
    }

    pub fn m(&self) -> usize {
        self.n_ops.len()
    }

    /// `ỹ = Qᵀ R⁻¹ y`.
    pub fn project_state(&self, y: &DVector<T>) -> DVector<T> {
        let n = self.n();
        let s = y.sum();
        DVector::from_fn(n - 1, |i, _| y[i] - self.rho_hat[i] * s)
    }

    /// `y = R Q ỹ`.
    pub fn lift(&self, yt: &DVector<T>) -> DVector<T> {
        let n = self.n();
        let mut y = DVector::zeros(n);
        y.rows_mut(0, n - 1).copy_from(yt);
        y[n - 1] = -yt.sum();
        y
    }

    /// `C̃ ỹ = √h̄ R Q ỹ`.
    pub fn output(&self, yt: &DVector<T>) -> DVector<T> {
        self.lift(yt) * self.hbar.sqrt()
    }

    /// `C̃ = √h̄ R Q` as a dense `n × (n − 1)` matrix.
    pub fn c_matrix(&self) -> DMatrix<T> {
        let n = self.n();
        let sq = self.hbar.sqrt();
        DMatrix::from_fn(n, n - 1, |i, j| {
            if i == j {
                sq
            } else if i == n - 1 {
                -sq
            } else {
                T::zero()
            }
        })
    }

    /// `C̃ᵀ C̃ = h̄ (I + 11ᵀ)`.
    pub fn ctc(&self) -> DMatrix<T> {
        let k = self.n() - 1;
        DMatrix::from_fn(k, k, |i, j| if i == j { self.hbar * T::lit(2.0) } else { self.hbar })
    }

    /// Dense `R`.
    pub fn r_matrix(&self) -> DMatrix<T> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            if j == n - 1 {
                self.rho_hat[i]
            } else if i == j {
                T::one()
            } else if i == n - 1 {
                -T::one()
            } else {
                T::zero()
            }
        })
    }

    /// Dense `R⁻¹` from its closed form.
    pub fn r_inv_matrix(&self) -> DMatrix<T> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            if i == n - 1 {
                T::one()
            } else if i == j {
                T::one() - self.rho_hat[i]
            } else {
                -self.rho_hat[i]
            }
        })
    }
}
