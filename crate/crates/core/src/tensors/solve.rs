//! Tensor-structured Lyapunov equations `Σ_i T(…, A z_i, …) = R`.

use nalgebra::DMatrix;

use super::quadrature::{build_quadrature, QuadratureRule};
use super::rhs::{assemble_rhs, expected_term_count};
use super::Tensor;
use crate::control::FeedbackLaw;
use crate::error::{Error, Result};
use crate::linalg::expm;
use crate::reduction::ReducedModel;
use crate::riccati::RiccatiSolution;
use crate::scalar::Real;

/// Largest `r^k` accepted by the dense Kronecker solve.
pub const DIRECT_SIZE_GUARD: usize = 4096;
pub const RESIDUAL_TOL: f64 = 1e-6;
const REFINE_TARGET: f64 = 1e-12;
const MAX_REFINE: usize = 8;

/// `Σ_i` (slot `i` of `t` transformed by `Aᵀ`), i.e. the Kronecker sum acting on `vec(t)`.
pub fn gen_lyapunov_apply<T: Real>(a: &DMatrix<T>, t: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros(t.order(), t.dim());
    let mut buf = Tensor::zeros(t.order(), t.dim());
    for slot in 0..t.order() {
        // the kernel takes the transpose of the applied matrix
        t.mode_product_into(a, slot, &mut buf);
        out.axpy(T::one(), &buf);
    }
    out
}

/// Cached `e^{t_i Aᵀ}` for a fixed rule.
pub struct SeparableInverse<T: Real> {
    rule: QuadratureRule<T>,
    /// Transposes of the exponentials (the mode-product kernel's convention),
    /// with the node weight; `None` for nodes whose contribution is negligible.
    factors: Vec<Option<(T, DMatrix<T>)>>,
}

impl<T: Real> SeparableInverse<T> {
    pub fn new(a: &DMatrix<T>, rule: QuadratureRule<T>) -> Result<Self> {
        let at = a.transpose();
        let k = rule.order as i32;
        let scale = T::one() / (T::from_count(rule.order) * rule.lambda_max);
        let mut factors = Vec::with_capacity(rule.len());
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            let e = expm(&(&at * *t))?;
            let bound = *w * e.norm().powi(k);
            if bound < T::lit(1e-18) * scale {
                factors.push(None);
            } else {
                factors.push(Some((*w, e.transpose())));
            }
        }
        Ok(Self { rule, factors })
    }

    pub fn rule(&self) -> &QuadratureRule<T> {
        &self.rule
    }

    pub fn active_nodes(&self) -> usize {
        self.factors.iter().filter(|f| f.is_some()).count()
    }

    /// `−Σ_i w_i (⊗ e^{t_i Aᵀ}) rhs`, accumulated in node order.
    pub fn apply(&self, rhs: &Tensor<T>) -> Tensor<T> {
        let (k, r) = (rhs.order(), rhs.dim());
        let mut out = Tensor::zeros(k, r);
        let mut cur = Tensor::zeros(k, r);
        let mut next = Tensor::zeros(k, r);
        for (w, et) in self.factors.iter().flatten() {
            cur.as_mut_slice().copy_from_slice(rhs.as_slice());
            for slot in 0..k {
                cur.mode_product_into(et, slot, &mut next);
                std::mem::swap(&mut cur, &mut next);
            }
            out.axpy(-*w, &cur);
        }
        out
    }
}

fn rel_residual<T: Real>(a: &DMatrix<T>, t: &Tensor<T>, rhs: &Tensor<T>) -> (Tensor<T>, T) {
    let mut res = rhs.clone();
    res.axpy(-T::one(), &gen_lyapunov_apply(a, t));
    let scale = rhs.norm();
    let rel = if scale > T::zero() { res.norm() / scale } else { res.norm() };
    (res, rel)
}

/// Quadrature solve with iterative refinement on the residual; the result is symmetrized.
pub fn solve_with<T: Real>(a: &DMatrix<T>, rhs: &Tensor<T>, inv: &SeparableInverse<T>) -> Result<Tensor<T>> {
    if rhs.norm() == T::zero() {
        return Ok(Tensor::zeros(rhs.order(), rhs.dim()));
    }
    let mut t = inv.apply(rhs);
    let (mut res, mut rel) = rel_residual(a, &t, rhs);
    let mut sweeps = 0;
    while rel > T::lit(REFINE_TARGET) && sweeps < MAX_REFINE {
        let corr = inv.apply(&res);
        let mut cand = t.clone();
        cand.axpy(T::one(), &corr);
        let (cres, crel) = rel_residual(a, &cand, rhs);
        sweeps += 1;
        if !(crel < rel) {
            break;
        }
        t = cand;
        res = cres;
        rel = crel;
    }
    log::debug!("tensor order {}: residual {:e} after {} refinement sweeps", rhs.order(), rel.as_f64(), sweeps);
    if !(rel <= T::lit(RESIDUAL_TOL)) {
        return Err(Error::TensorResidual { order: rhs.order(), residual: rel.as_f64(), tol: RESIDUAL_TOL });
    }
    Ok(t.symmetrize())
}

/// Solve `Σ_i T(…, A z_i, …) = rhs` with the separable approximate inverse.
pub fn solve_gen_lyapunov<T: Real>(a: &DMatrix<T>, rhs: &Tensor<T>, rule: &QuadratureRule<T>) -> Result<Tensor<T>> {
    let inv = SeparableInverse::new(a, rule.clone())?;
    solve_with(a, rhs, &inv)
}

/// Dense Kronecker assembly and LU solve, for small instances.
pub fn solve_gen_lyapunov_direct<T: Real>(a: &DMatrix<T>, rhs: &Tensor<T>) -> Result<Tensor<T>> {
    let (k, r) = (rhs.order(), rhs.dim());
    let size = rhs.len();
    if size > DIRECT_SIZE_GUARD {
        return Err(Error::SizeGuard { what: "direct tensor solve", size, limit: DIRECT_SIZE_GUARD });
    }
    let mut l = DMatrix::<T>::zeros(size, size);
    for row in 0..size {
        let mut stride = 1;
        for _ in 0..k {
            let a_digit = (row / stride) % r;
            let base = row - a_digit * stride;
            for b in 0..r {
                l[(row, base + b * stride)] += a[(b, a_digit)];
            }
            stride *= r;
        }
    }
    let lu = l.lu();
    let sol = lu.solve(&nalgebra::DVector::from_column_slice(rhs.as_slice())).ok_or_else(|| Error::Singular("Kronecker sum operator".into()))?;
    Tensor::from_vec(k, r, sol.as_slice().to_vec())
}

/// `T_2 = Π` and `T_3 … T_p` for a reduced model and its Riccati solution.
pub fn feedback_tensors<T: Real>(
    red: &ReducedModel<T>,
    ric: &RiccatiSolution<T>,
    p: usize,
    l: usize,
) -> Result<FeedbackLaw<T>> {
    if p < 2 {
        return Err(Error::InvalidArgument(format!("feedback degree must be at least 2, got {p}")));
    }
    let r = red.r;
    let mut tensors: Vec<Option<Tensor<T>>> = vec![None, None, Some(Tensor::from_matrix(&ric.pi))];
    if p >= 3 {
        let rule = build_quadrature(l, &ric.a_cl, p)?;
        let inv = SeparableInverse::new(&ric.a_cl, rule)?;
        log::info!("quadrature: {} of {} nodes active", inv.active_nodes(), inv.rule().len());
        for k in 3..=p {
            let mut total = Tensor::zeros(k, r);
            for j in 0..red.m() {
                let (rj, count) = assemble_rhs(k, &tensors, &red.n_ops[j], &red.b.column(j).into_owned())?;
                debug_assert_eq!(count, expected_term_count(k));
                log::info!("order {k}, control {j}: {count} terms in the right-hand side");
                total.axpy(T::one(), &rj);
            }
            total.scale_mut(T::one() / (T::lit(2.0) * ric.beta));
            let t = solve_with(&ric.a_cl, &total, &inv)?;
            tensors.push(Some(t));
        }
    }
    Ok(FeedbackLaw::new(ric.beta, tensors, red.n_ops.clone(), red.b.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lyapunov::tests::random_stable;
    use crate::linalg::solve_lyapunov;
    use crate::tensors::quadrature::DEFAULT_L;
    use crate::tensors::tests::random_tensor;

    #[test]
    fn negative_identity_halves() {
        let a = -DMatrix::<f64>::identity(2, 2);
        let rhs = random_tensor(2, 2, 1).symmetrize();
        let rule = build_quadrature(DEFAULT_L, &a, 2).unwrap();
        let t = solve_gen_lyapunov(&a, &rhs, &rule).unwrap();
        assert!(t.rel_max_diff(&rhs.clone().scaled(-0.5)) < 1e-10);
    }

    #[test]
    fn order_two_matches_matrix_lyapunov() {
        let a = random_stable(5, 2);
        let rhs = random_tensor(2, 5, 3).symmetrize();
        let rule = build_quadrature(DEFAULT_L, &a, 2).unwrap();
        let t = solve_gen_lyapunov(&a, &rhs, &rule).unwrap();
        // T(Az1, z2) + T(z1, Az2) = R  ⇔  Aᵀ T + T A = R
        let x = solve_lyapunov(&a.transpose(), &(-rhs.to_matrix())).unwrap();
        assert!(t.rel_max_diff(&Tensor::from_matrix(&x)) < 1e-8);
    }

    #[test]
    fn diagonal_direct_closed_form() {
        let lam = [1.0, 3.0];
        let a = -DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lam.to_vec()));
        let rhs = random_tensor(2, 2, 4);
        let t = solve_gen_lyapunov_direct(&a, &rhs).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((t.get(&[i, j]) + rhs.get(&[i, j]) / (lam[i] + lam[j])).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn direct_residual_and_agreement() {
        let a = random_stable(2, 5);
        let rhs = random_tensor(3, 2, 6).symmetrize();
        let direct = solve_gen_lyapunov_direct(&a, &rhs).unwrap();
        let mut res = gen_lyapunov_apply(&a, &direct);
        res.axpy(-1.0, &rhs);
        assert!(res.norm() / rhs.norm() <= 1e-12);
        for (r, k, seed) in [(3, 3, 7), (4, 3, 8), (5, 3, 9), (3, 4, 10)] {
            let a = random_stable(r, seed);
            let rhs = random_tensor(k, r, seed + 50).symmetrize();
            let rule = build_quadrature(DEFAULT_L, &a, k).unwrap();
            let q = solve_gen_lyapunov(&a, &rhs, &rule).unwrap();
            let d = solve_gen_lyapunov_direct(&a, &rhs).unwrap();
            assert!(q.rel_max_diff(&d) < 1e-6, "r={r} k={k}");
        }
    }

    #[test]
    fn size_guard() {
        let a = -DMatrix::<f64>::identity(9, 9);
        let rhs = Tensor::zeros(4, 9);
        assert!(matches!(solve_gen_lyapunov_direct(&a, &rhs), Err(Error::SizeGuard { .. })));
    }
}
