//! Right-hand sides of the tensor equations.

use nalgebra::{DMatrix, DVector};

use super::{binomial, sym_product, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Contractions shared by the right-hand sides of one control direction.
pub struct RhsTerms<T: Real> {
    /// `c[i] = T_{i+1}(B, ·, …)` of order `i`; index 0 unused.
    pub c: Vec<Option<Tensor<T>>>,
    /// `g[i] = (1/i) Σ_ℓ T_i(…, N ·, …)` of order `i`; indices 0, 1 unused.
    pub g: Vec<Option<Tensor<T>>>,
}

/// `tensors[k]` holds `T_k` for `k ≥ 2`; lower entries are ignored.
fn lookup<T: Real>(tensors: &[Option<Tensor<T>>], k: usize) -> Result<&Tensor<T>> {
    tensors.get(k).and_then(|t| t.as_ref()).ok_or(Error::MissingTensor(k))
}

impl<T: Real> RhsTerms<T> {
    /// Contractions needed for order `k`, using `T_2 … T_{k−1}`.
    pub fn new(k: usize, tensors: &[Option<Tensor<T>>], n: &DMatrix<T>, b: &DVector<T>) -> Result<Self> {
        let mut c = vec![None; k];
        let mut g = vec![None; k];
        for i in 1..=k.saturating_sub(2) {
            c[i] = Some(lookup(tensors, i + 1)?.contract_first(b));
        }
        for i in 2..k {
            let t = lookup(tensors, i)?;
            let mut acc = Tensor::zeros(i, t.dim());
            let mut buf = Tensor::zeros(i, t.dim());
            for slot in 0..i {
                // applying Nᵀ in a slot; the kernel takes the transpose of the applied matrix
                t.mode_product_into(n, slot, &mut buf);
                acc.axpy(T::one(), &buf);
            }
            g[i] = Some(acc.scaled(T::one() / T::from_count(i)));
        }
        Ok(Self { c, g })
    }
}

/// `R_{j,k}` for one control direction, together with the number of
/// elementary terms summed.
pub fn assemble_rhs<T: Real>(
    k: usize,
    tensors: &[Option<Tensor<T>>],
    n: &DMatrix<T>,
    b: &DVector<T>,
) -> Result<(Tensor<T>, usize)> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!("right-hand sides start at order 3, got {k}")));
    }
    let terms = RhsTerms::new(k, tensors, n, b)?;
    let c = |i: usize| terms.c[i].as_ref().expect("contraction present");
    let g = |i: usize| terms.g[i].as_ref().expect("mode sum present");
    let kk = T::from_count(k);
    let mut out = sym_product(c(1), g(k - 1))?.scaled(T::lit(2.0) * kk * (kk - T::one()));
    // G_{k−1} sums k − 1 mode products
    let mut count = k - 1;
    for i in 2..=k.saturating_sub(2) {
        let mut left = c(i).clone();
        left.axpy(T::from_count(i), g(i));
        let mut right = c(k - i).clone();
        right.axpy(T::from_count(k - i), g(k - i));
        let coef = binomial(k, i);
        out.axpy(T::from_count(coef), &sym_product(&left, &right)?);
        count += coef;
    }
    Ok((out, count))
}

/// Predicted term count `(k − 1) + Σ_{i=2}^{k−2} C(k, i)`.
pub fn expected_term_count(k: usize) -> usize {
    (k - 1) + (2..=k.saturating_sub(2)).map(|i| binomial(k, i)).sum::<usize>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensors::tests::random_tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `k! · [t^k] (Σ_n a_n t^n)²` where `a_n t^n` collects the degree-`n`
    /// part of `DV_{k−1}(ty)(N ty + B)` without the unknown `T_k`.
    fn polynomial_oracle(k: usize, tensors: &[Option<Tensor<f64>>], n: &DMatrix<f64>, b: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let fact = |m: usize| (1..=m).product::<usize>() as f64;
        let ny = n * y;
        let mut a = vec![0.0; k];
        for i in 2..k {
            let t = tensors[i].as_ref().unwrap();
            // T_i(B, y, …) t^{i−1} / (i−1)!  and  T_i(N y, y, …) t^i / (i−1)!
            let with_b = t.contract_last_repeated(y, i - 1).as_vector().dot(b);
            let with_n = t.contract_last_repeated(y, i - 1).as_vector().dot(&ny);
            a[i - 1] += with_b / fact(i - 1);
            a[i] += with_n / fact(i - 1);
        }
        let mut coef = 0.0;
        for p in 1..k {
            coef += a[p] * a[k - p];
        }
        fact(k) * coef
    }

    fn random_family(r: usize, upto: usize, seed: u64) -> Vec<Option<Tensor<f64>>> {
        let mut v = vec![None, None];
        for k in 2..=upto {
            v.push(Some(random_tensor(k, r, seed + k as u64).symmetrize()));
        }
        v
    }

    #[test]
    fn order_three_is_single_product() {
        let r = 3;
        let fam = random_family(r, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = DMatrix::from_fn(r, r, |_, _| rng.gen_range(-1.0..1.0));
        let b = DVector::from_fn(r, |_, _| rng.gen_range(-1.0..1.0));
        let (rhs, count) = assemble_rhs(3, &fam, &n, &b).unwrap();
        assert_eq!(count, 2);
        assert_eq!(expected_term_count(3), 2);
        // R(y,y,y) = 12 (Bᵀ Π y)((N y)ᵀ Π y)
        let pi = fam[2].as_ref().unwrap().to_matrix();
        let y = DVector::from_fn(r, |_, _| rng.gen_range(-1.0..1.0));
        let want = 12.0 * b.dot(&(&pi * &y)) * (&n * &y).dot(&(&pi * &y));
        assert!((rhs.eval_diagonal(&y) - want).abs() < 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn matches_polynomial_identity() {
        for (k, r) in [(3, 2), (4, 3), (5, 3), (6, 2), (7, 2)] {
            let fam = random_family(r, k - 1, 10 * k as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
            let n = DMatrix::from_fn(r, r, |_, _| rng.gen_range(-1.0..1.0));
            let b = DVector::from_fn(r, |_, _| rng.gen_range(-1.0..1.0));
            let (rhs, count) = assemble_rhs(k, &fam, &n, &b).unwrap();
            assert_eq!(count, expected_term_count(k));
            assert!(rhs.symmetry_defect() < 1e-12);
            for _ in 0..5 {
                let y = DVector::from_fn(r, |_, _| rng.gen_range(-1.0..1.0));
                let want = polynomial_oracle(k, &fam, &n, &b, &y);
                let got = rhs.eval_diagonal(&y);
                assert!((got - want).abs() < 1e-10 * want.abs().max(1.0), "k={k}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn order_four_has_one_middle_term() {
        assert_eq!(expected_term_count(4), 3 + 6);
    }

    #[test]
    fn missing_lower_order_is_reported() {
        let fam = vec![None, None, Some(random_tensor(2, 2, 1))];
        let n = DMatrix::identity(2, 2);
        let b = DVector::from_element(2, 1.0);
        assert!(matches!(assemble_rhs(4, &fam, &n, &b), Err(Error::MissingTensor(3))));
    }
}
