#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use polyfeedback::reduction::ReducedModel;
use polyfeedback::tensors::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random matrix shifted so that its spectral abscissa is `-margin`.
pub fn random_hurwitz(r: usize, margin: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(r, r, |_, _| rng.gen_range(-1.0..1.0));
    let shift = m.clone().complex_eigenvalues().iter().map(|z| z.re).fold(f64::MIN, f64::max);
    m - DMatrix::identity(r, r) * (shift + margin)
}

pub fn random_vector(r: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(r, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_tensor(k: usize, r: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let data = (0..r.pow(k as u32)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(k, r, data).unwrap()
}

/// Stable bilinear system with `m` controls and output dimension 2.
pub fn random_bilinear(r: usize, m: usize, coupling: f64, rng: &mut ChaCha8Rng) -> ReducedModel<f64> {
    let a = random_hurwitz(r, 0.5, rng);
    let n_ops = (0..m).map(|_| DMatrix::from_fn(r, r, |_, _| coupling * rng.gen_range(-1.0..1.0))).collect();
    let b = DMatrix::from_fn(r, m, |_, _| rng.gen_range(-1.0..1.0));
    let c = DMatrix::from_fn(2, r, |_, _| rng.gen_range(-1.0..1.0));
    ReducedModel {
        r,
        ctc: c.tr_mul(&c),
        c,
        a,
        n_ops,
        b,
        v: DMatrix::identity(r, r),
        w: DMatrix::identity(r, r),
        sigma: vec![],
        y0: random_vector(r, rng),
    }
}
