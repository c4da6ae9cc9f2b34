//! Algebraic Riccati equation `AᵀΠ + ΠA − (1/β) Π B Bᵀ Π + CᵀC = 0`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{solve_lyapunov, spectral_abscissa, symmetrize};
use crate::reduction::ReducedModel;
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct RiccatiSolution<T: Real> {
    pub pi: DMatrix<T>,
    /// `A − (1/β) B Bᵀ Π`.
    pub a_cl: DMatrix<T>,
    /// `‖AᵀΠ + ΠA − ΠGΠ + Q‖_F / ‖Q‖_F`.
    pub residual: T,
    pub beta: T,
    /// Newton–Kleinman steps spent after the sign-function start.
    pub newton_steps: usize,
}

const SIGN_MAX_ITER: usize = 100;
const NEWTON_MAX_ITER: usize = 30;

pub fn care_residual<T: Real>(a: &DMatrix<T>, g: &DMatrix<T>, q: &DMatrix<T>, pi: &DMatrix<T>) -> DMatrix<T> {
    let api = a.tr_mul(pi);
    &api + api.transpose() - pi * g * pi + q
}

fn rel_residual<T: Real>(a: &DMatrix<T>, g: &DMatrix<T>, q: &DMatrix<T>, pi: &DMatrix<T>) -> T {
    let qn = q.norm();
    let r = care_residual(a, g, q, pi).norm();
    if qn > T::zero() {
        r / qn
    } else {
        r
    }
}

/// Matrix sign function by Newton's iteration with determinant scaling.
fn matrix_sign<T: Real>(h: &DMatrix<T>) -> Option<DMatrix<T>> {
    let n = h.nrows();
    let mut z = h.clone();
    let tol = T::lit(100.0) * T::from_count(n) * T::eps();
    for _ in 0..SIGN_MAX_ITER {
        let lu = z.clone().lu();
        let zinv = lu.try_inverse()?;
        let det = z.clone().lu().determinant().abs();
        let c = if det > T::zero() && det.is_finite() {
            det.powf(-T::one() / T::from_count(n))
        } else {
            T::one()
        };
        let c = if c.is_finite() && c > T::zero() { c } else { T::one() };
        let next = (&z * c + &zinv / c) * T::lit(0.5);
        let change = (&next - &z).norm() / next.norm();
        z = next;
        if !change.is_finite() {
            return None;
        }
        if change < tol {
            return Some(z);
        }
    }
    // Scaling can stall the last digits; accept if the iterate is an involution.
    let id = DMatrix::identity(n, n);
    let defect = (&z * &z - &id).norm() / T::from_count(n).sqrt();
    (defect < T::lit(1e-8)).then_some(z)
}

/// Stabilizing solution from the stable invariant subspace of the Hamiltonian.
fn sign_start<T: Real>(a: &DMatrix<T>, g: &DMatrix<T>, q: &DMatrix<T>) -> Option<DMatrix<T>> {
    let r = a.nrows();
    let mut h = DMatrix::zeros(2 * r, 2 * r);
    h.view_mut((0, 0), (r, r)).copy_from(a);
    h.view_mut((0, r), (r, r)).copy_from(&(-g));
    h.view_mut((r, 0), (r, r)).copy_from(&(-q));
    h.view_mut((r, r), (r, r)).copy_from(&(-a.transpose()));
    let w = matrix_sign(&h)?;
    let id = DMatrix::<T>::identity(r, r);
    let mut lhs = DMatrix::zeros(2 * r, r);
    lhs.view_mut((0, 0), (r, r)).copy_from(&w.view((0, r), (r, r)));
    lhs.view_mut((r, 0), (r, r)).copy_from(&(w.view((r, r), (r, r)) + &id));
    let mut rhs = DMatrix::zeros(2 * r, r);
    rhs.view_mut((0, 0), (r, r)).copy_from(&(-(w.view((0, 0), (r, r)) + &id)));
    rhs.view_mut((r, 0), (r, r)).copy_from(&(-w.view((r, 0), (r, r))));
    let pi = lhs.svd(true, true).solve(&rhs, T::eps() * T::lit(10.0)).ok()?;
    pi.iter().all(|v| v.is_finite()).then(|| symmetrize(&pi))
}

/// Newton–Kleinman step: `(A − GΠ)ᵀ X + X (A − GΠ) + Q + ΠGΠ = 0`.
fn kleinman_step<T: Real>(a: &DMatrix<T>, g: &DMatrix<T>, q: &DMatrix<T>, pi: &DMatrix<T>) -> Result<DMatrix<T>> {
    let acl = a - g * pi;
    let rhs = q + pi * g * pi;
    solve_lyapunov(&acl.transpose(), &rhs)
}

/// Solve with weight `Q = CᵀC` supplied directly.
pub fn solve_care_q<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, q: &DMatrix<T>, beta: T) -> Result<RiccatiSolution<T>> {
    let r = a.nrows();
    if beta <= T::zero() {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {}", beta.as_f64())));
    }
    if a.ncols() != r || b.nrows() != r || q.shape() != (r, r) {
        return Err(Error::DimensionMismatch("Riccati operands".into()));
    }
    let g = b * b.transpose() / beta;
    if q.norm() == T::zero() && spectral_abscissa(a) < T::zero() {
        return Ok(RiccatiSolution {
            pi: DMatrix::zeros(r, r),
            a_cl: a.clone(),
            residual: T::zero(),
            beta,
            newton_steps: 0,
        });
    }
    let mut pi = match sign_start(a, &g, q) {
        Some(p) => p,
        None => {
            log::warn!("sign-function start failed; Newton–Kleinman from zero gain");
            if spectral_abscissa(a) >= T::zero() {
                return Err(Error::NotHurwitz(spectral_abscissa(a).as_f64()));
            }
            DMatrix::zeros(r, r)
        }
    };
    if spectral_abscissa(&(a - &g * &pi)) >= T::zero() {
        // Not the stabilizing branch; restart from the zero gain.
        if spectral_abscissa(a) >= T::zero() {
            return Err(Error::NotHurwitz(spectral_abscissa(a).as_f64()));
        }
        pi = DMatrix::zeros(r, r);
    }
    let mut res = rel_residual(a, &g, q, &pi);
    let mut steps = 0;
    while steps < NEWTON_MAX_ITER {
        let next = kleinman_step(a, &g, q, &pi)?;
        let next_res = rel_residual(a, &g, q, &next);
        steps += 1;
        let improved = next_res < res;
        if improved || res > T::lit(1e-6) {
            pi = next;
            res = next_res;
        }
        if !improved && res < T::lit(1e-6) {
            break;
        }
    }
    let a_cl = a - &g * &pi;
    let abscissa = spectral_abscissa(&a_cl);
    if abscissa >= T::zero() {
        return Err(Error::NotHurwitz(abscissa.as_f64()));
    }
    let tol = T::lit(1e-9);
    if res > tol || !res.is_finite() {
        return Err(Error::NoConvergence { what: "riccati", iterations: steps, residual: res.as_f64() });
    }
    log::debug!("riccati: residual {:e} after {} Newton steps", res.as_f64(), steps);
    Ok(RiccatiSolution { pi, a_cl, residual: res, beta, newton_steps: steps })
}

pub fn solve_care<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, c: &DMatrix<T>, beta: T) -> Result<RiccatiSolution<T>> {
    solve_care_q(a, b, &c.tr_mul(c), beta)
}

/// Riccati solution for a reduced model, using its stored `C_rᵀC_r`.
pub fn solve_reduced<T: Real>(red: &ReducedModel<T>, beta: T) -> Result<RiccatiSolution<T>> {
    solve_care_q(&red.a, &red.b, &red.ctc, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lyapunov::tests::random_stable;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_closed_form() {
        let s = solve_care(&m1(-1.0), &m1(1.0), &m1(1.0), 1.0).unwrap();
        assert!((s.pi[(0, 0)] - (2f64.sqrt() - 1.0)).abs() < 1e-12);
        assert!((s.a_cl[(0, 0)] + 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_output_weight() {
        let a = random_stable(4, 3);
        let b = DMatrix::from_element(4, 1, 1.0);
        let s = solve_care(&a, &b, &DMatrix::zeros(2, 4), 1.0).unwrap();
        assert_eq!(s.pi, DMatrix::zeros(4, 4));
        assert_eq!(s.a_cl, a);
    }

    #[test]
    fn random_stable_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..5 {
            let a = random_stable(6, 100 + seed);
            let b = DMatrix::from_fn(6, 2, |_, _| rng.gen_range(-1.0..1.0));
            let c = DMatrix::from_fn(3, 6, |_, _| rng.gen_range(-1.0..1.0));
            let s = solve_care(&a, &b, &c, 0.1).unwrap();
            assert!(s.residual <= 1e-9);
            assert!(spectral_abscissa(&s.a_cl) < 0.0);
            assert!((&s.pi - s.pi.transpose()).amax() < 1e-10);
            assert!(s.pi.clone().symmetric_eigenvalues().min() > -1e-10);
        }
    }

    #[test]
    fn unstable_but_stabilizable() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, -2.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let s = solve_care(&a, &b, &DMatrix::identity(2, 2), 1.0).unwrap();
        assert!(s.residual < 1e-9);
        assert!(spectral_abscissa(&s.a_cl) < 0.0);
    }

    #[test]
    fn weak_control_limit_is_lyapunov() {
        let a = random_stable(5, 7);
        let b = DMatrix::from_fn(5, 1, |i, _| 1.0 / (1.0 + i as f64));
        let c = DMatrix::identity(5, 5);
        let s = solve_care(&a, &b, &c, 1e6).unwrap();
        let lyap = solve_lyapunov(&a.transpose(), &DMatrix::identity(5, 5)).unwrap();
        assert!((&s.pi - &lyap).norm() / lyap.norm() < 1e-4);
    }

    #[test]
    fn rejects_nonpositive_beta() {
        assert!(solve_care(&m1(-1.0), &m1(1.0), &m1(1.0), 0.0).is_err());
    }
}
