//! Bilinear balanced truncation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::LyapunovSolver;
use crate::projection::ProjectedModel;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `Ã X + X Ãᵀ + Σ Ñ_j X Ñ_jᵀ + B̃B̃ᵀ = 0`
    Reach,
    /// `Ãᵀ Y + Y Ã + Σ Ñ_jᵀ Y Ñ_j + C̃ᵀC̃ = 0`
    Observe,
}

impl Side {
    fn name(self) -> &'static str {
        match self {
            Side::Reach => "reach",
            Side::Observe => "observe",
        }
    }
}

/// One converged Gramian with its iteration record.
#[derive(Clone, Debug)]
pub struct Gramian<T: Real> {
    pub matrix: DMatrix<T>,
    pub iterations: usize,
    pub residual: T,
    pub history: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct GramianPair<T: Real> {
    pub x: Gramian<T>,
    pub y: Gramian<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum TruncationRule {
    Rank { r: usize },
    /// Smallest `r` with `σ_{r+1} / σ_1 < eps`.
    Threshold { eps: f64 },
}

#[derive(Clone, Debug)]
pub struct ReducedModel<T: Real> {
    pub r: usize,
    pub a: DMatrix<T>,
    pub n_ops: Vec<DMatrix<T>>,
    pub b: DMatrix<T>,
    /// `C_r = C̃ V_r` (`n × r`).
    pub c: DMatrix<T>,
    /// `C_rᵀ C_r`.
    pub ctc: DMatrix<T>,
    pub v: DMatrix<T>,
    pub w: DMatrix<T>,
    /// Singular values of `S_X S_Yᵀ`, padded with zeros to length `n − 1`.
    pub sigma: Vec<T>,
    pub y0: DVector<T>,
}

impl<T: Real> ReducedModel<T> {
    pub fn m(&self) -> usize {
        self.n_ops.len()
    }

    /// `W_rᵀ ỹ`.
    pub fn reduce_state(&self, yt: &DVector<T>) -> DVector<T> {
        self.w.tr_mul(yt)
    }

    /// Untruncated model (`V = W = I`), used for comparisons against the projected system.
    pub fn identity(proj: &ProjectedModel<T>, y0_tilde: &DVector<T>) -> Self {
        let k = proj.n() - 1;
        let id = DMatrix::identity(k, k);
        Self {
            r: k,
            a: proj.a.clone(),
            n_ops: proj.n_ops.clone(),
            b: proj.b.clone(),
            c: proj.c_matrix(),
            ctc: proj.ctc(),
            v: id.clone(),
            w: id,
            sigma: Vec::new(),
            y0: y0_tilde.clone(),
        }
    }

    /// Same reduced operators with a different initial state.
    pub fn with_initial_state(&self, y0: DVector<T>) -> Self {
        Self { y0, ..self.clone() }
    }
}

/// Defaults for the fixed point.
pub const DEFAULT_GRAMIAN_EPS: f64 = 1e-6;
pub const DEFAULT_GRAMIAN_MAX_ITER: usize = 200;

/// Fixed-point iteration for one Gramian, reusing the Schur form in `solver`.
///
/// Since each iterate solves `Ã X_i + X_i Ãᵀ = −(Q + Σ Ñ X_{i−1} Ñᵀ)` exactly,
/// the residual of the generalized equation equals `‖Σ Ñ (X_i − X_{i−1}) Ñᵀ‖_F / ‖Q‖_F`.
pub fn gramian_fixed_point<T: Real>(
    proj: &ProjectedModel<T>,
    solver: &LyapunovSolver<T>,
    side: Side,
    eps: T,
    max_iter: usize,
) -> Result<Gramian<T>> {
    let q = match side {
        Side::Reach => &proj.b * proj.b.transpose(),
        Side::Observe => proj.ctc(),
    };
    let qn = q.norm();
    let solve = |rhs: &DMatrix<T>| match side {
        Side::Reach => solver.solve(rhs),
        Side::Observe => solver.solve_transposed(rhs),
    };
    let coupling = |x: &DMatrix<T>| -> DMatrix<T> {
        let k = x.nrows();
        let mut acc = DMatrix::zeros(k, k);
        for nj in &proj.n_ops {
            match side {
                Side::Reach => acc += nj * x * nj.transpose(),
                Side::Observe => acc += nj.transpose() * x * nj,
            }
        }
        acc
    };
    if qn == T::zero() {
        let k = q.nrows();
        return Ok(Gramian { matrix: DMatrix::zeros(k, k), iterations: 0, residual: T::zero(), history: vec![] });
    }
    let mut x = solve(&q)?;
    let mut prev_coupling = coupling(&x);
    let mut history = Vec::new();
    let mut residual = prev_coupling.norm() / qn;
    history.push(residual);
    let mut iterations = 1;
    while residual > eps {
        if iterations >= max_iter || !residual.is_finite() {
            return Err(Error::FixedPointDiverged {
                side: side.name(),
                history: history.iter().map(|v| v.as_f64()).collect(),
            });
        }
        let x_new = solve(&(&q + &prev_coupling))?;
        let c_new = coupling(&x_new);
        residual = (&c_new - &prev_coupling).norm() / qn;
        history.push(residual);
        log::debug!("gramian {} iteration {}: residual {:e}", side.name(), iterations + 1, residual.as_f64());
        x = x_new;
        prev_coupling = c_new;
        iterations += 1;
    }
    Ok(Gramian { matrix: x, iterations, residual, history })
}

/// Both Gramians with a shared Schur decomposition of `Ã`.
pub fn gramians<T: Real>(proj: &ProjectedModel<T>, eps: T, max_iter: usize) -> Result<GramianPair<T>> {
    let solver = LyapunovSolver::new(&proj.a)?;
    let x = gramian_fixed_point(proj, &solver, Side::Reach, eps, max_iter)?;
    let y = gramian_fixed_point(proj, &solver, Side::Observe, eps, max_iter)?;
    Ok(GramianPair { x, y })
}

/// `S` with `SᵀS = G` from the eigendecomposition of a PSD matrix; negative
/// and negligible eigenvalues (below `k·ε·λ_max`) are dropped.
pub fn psd_factor<T: Real>(g: &DMatrix<T>) -> DMatrix<T> {
    let k = g.nrows();
    let eig = crate::linalg::symmetrize(g).symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(T::zero(), |m, v| m.max(*v));
    let cut = lmax * T::eps() * T::from_count(k.max(1));
    let keep: Vec<usize> = (0..k).filter(|&i| eig.eigenvalues[i] > cut).collect();
    let mut s = DMatrix::zeros(keep.len(), k);
    for (row, &i) in keep.iter().enumerate() {
        let sq = eig.eigenvalues[i].sqrt();
        for c in 0..k {
            s[(row, c)] = sq * eig.eigenvectors[(c, i)];
        }
    }
    s
}

/// Balancing transformation and truncation.
pub fn balance_truncate<T: Real>(
    x: &DMatrix<T>,
    y: &DMatrix<T>,
    proj: &ProjectedModel<T>,
    rule: TruncationRule,
    y0_tilde: &DVector<T>,
) -> Result<ReducedModel<T>> {
    let k = proj.n() - 1;
    if x.nrows() != k || y.nrows() != k || y0_tilde.len() != k {
        return Err(Error::DimensionMismatch("Gramians and initial state must match the projected model".into()));
    }
    let sx = psd_factor(x);
    let sy = psd_factor(y);
    let prod = &sx * sy.transpose();
    let svd = prod.svd(true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    let mut sigma: Vec<T> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let s1 = sigma.first().copied().unwrap_or(T::zero());
    let numerical_rank = sigma
        .iter()
        .filter(|s| **s > s1 * T::eps() * T::from_count(k.max(1)) && **s > T::zero())
        .count();
    let r = match rule {
        TruncationRule::Rank { r } => r,
        TruncationRule::Threshold { eps } => {
            let eps = T::lit(eps);
            (1..=sigma.len()).find(|&r| r == sigma.len() || sigma[r] < eps * s1).unwrap_or(sigma.len())
        }
    };
    if r == 0 || r > numerical_rank {
        return Err(Error::RankDeficient { requested: r, available: numerical_rank });
    }
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut ur = DMatrix::zeros(u.nrows(), r);
    let mut vr = DMatrix::zeros(vt.ncols(), r);
    for (c, &i) in order.iter().take(r).enumerate() {
        let scale = T::one() / sigma[c].sqrt();
        ur.set_column(c, &(u.column(i) * scale));
        vr.set_column(c, &(vt.row(i).transpose() * scale));
    }
    let v = sx.transpose() * ur;
    let w = sy.transpose() * vr;
    sigma.resize(k, T::zero());
    Ok(petrov_galerkin(proj, v, w, sigma, y0_tilde))
}

fn petrov_galerkin<T: Real>(
    proj: &ProjectedModel<T>,
    v: DMatrix<T>,
    w: DMatrix<T>,
    sigma: Vec<T>,
    y0_tilde: &DVector<T>,
) -> ReducedModel<T> {
    let r = v.ncols();
    let a = w.tr_mul(&(&proj.a * &v));
    let n_ops = proj.n_ops.iter().map(|nj| w.tr_mul(&(nj * &v))).collect();
    let b = w.tr_mul(&proj.b);
    // C̃ V = √h̄ [V; −1ᵀV]
    let n = proj.n();
    let sq = proj.hbar.sqrt();
    let col_sums = v.row_sum();
    let mut c = DMatrix::zeros(n, r);
    c.rows_mut(0, n - 1).copy_from(&(&v * sq));
    for j in 0..r {
        c[(n - 1, j)] = -col_sums[j] * sq;
    }
    let ctc = c.tr_mul(&c);
    let y0 = w.tr_mul(y0_tilde);
    ReducedModel { r, a, n_ops, b, c, ctc, v, w, sigma, y0 }
}

/// Residual of the generalized Lyapunov equation for a Gramian.
pub fn gramian_residual<T: Real>(proj: &ProjectedModel<T>, g: &DMatrix<T>, side: Side) -> T {
    let (a, q) = match side {
        Side::Reach => (proj.a.clone(), &proj.b * proj.b.transpose()),
        Side::Observe => (proj.a.transpose(), proj.ctc()),
    };
    let ag = &a * g;
    let mut r = &ag + ag.transpose() + &q;
    for nj in &proj.n_ops {
        match side {
            Side::Reach => r += nj * g * nj.transpose(),
            Side::Observe => r += nj.transpose() * g * nj,
        }
    }
    r.norm() / q.norm()
}
