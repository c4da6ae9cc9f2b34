//! Exponential sums `1/x ≈ Σ w_i e^{−t_i x}`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_L: usize = 50;
const SWEEP_TOL: f64 = 1e-8;
const SWEEP_POINTS: usize = 400;
/// Widest eigenvalue sector the rule is tuned for.
const MAX_SECTOR: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct QuadratureRule<T: Real> {
    pub l: usize,
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
    /// Smallest real part of the spectrum of `−A`.
    pub lambda_min: T,
    /// Largest modulus in the spectrum of `−A`.
    pub lambda_max: T,
    /// Tensor order the interval `[λ_min, k λ_max]` was sized for.
    pub order: usize,
    /// Half-angle of the eigenvalue sector the step was tuned for.
    pub sector: f64,
    /// Worst relative error of the scalar sweep over the interval.
    pub sweep_error: f64,
}

impl<T: Real> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn approx_inverse(&self, x: T) -> T {
        self.nodes.iter().zip(&self.weights).fold(T::zero(), |acc, (t, w)| acc + *w * (-*t * x).exp())
    }

    pub fn interval(&self) -> (T, T) {
        (self.lambda_min, self.lambda_max * T::from_count(self.order))
    }
}

struct Layout {
    s_min: f64,
    step: f64,
}

/// Trapezoid rule in `s` for `∫ e^{s − x e^s} ds = 1/x` on normalized `x ∈ [1, ratio]`.
fn layout(l: usize, ratio: f64, eps: f64, sector: f64) -> Layout {
    let s_min = (eps / ratio).ln();
    let s_max = ((1.0 / eps).ln() / sector.cos()).ln() + 0.3;
    Layout { s_min, step: (s_max - s_min) / (2 * l) as f64 }
}

fn discretization_error(step: f64, sector: f64) -> f64 {
    let strip = std::f64::consts::FRAC_PI_2 - sector;
    (-2.0 * std::f64::consts::PI * strip * 0.95 / step).exp()
}

fn best_layout(l: usize, ratio: f64, sector: f64) -> Layout {
    // Balance truncation against discretization: smallest ε the step allows.
    let mut best = layout(l, ratio, 1e-2, sector);
    let mut exp = 2.0;
    while exp <= 16.0 {
        let eps = 10f64.powf(-exp);
        let cand = layout(l, ratio, eps, sector);
        if discretization_error(cand.step, sector) > eps {
            break;
        }
        best = cand;
        exp += 0.25;
    }
    best
}

fn sweep(nodes: &[f64], weights: &[f64], ratio: f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..=SWEEP_POINTS {
        let x = ratio.powf(i as f64 / SWEEP_POINTS as f64);
        let approx: f64 = nodes.iter().zip(weights).map(|(t, w)| w * (-t * x).exp()).sum();
        worst = worst.max((approx * x - 1.0).abs());
    }
    worst
}

fn nodes_for(l: usize, lay: &Layout) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(2 * l + 1);
    let mut weights = Vec::with_capacity(2 * l + 1);
    for i in 0..=2 * l {
        let e = (lay.s_min + lay.step * i as f64).exp();
        nodes.push(e);
        weights.push(lay.step * e);
    }
    (nodes, weights)
}

/// Rule with `2l + 1` nodes for the spectrum of order-`k` Kronecker sums of `A` (Hurwitz).
pub fn build_quadrature<T: Real>(l: usize, a: &DMatrix<T>, k: usize) -> Result<QuadratureRule<T>> {
    if l == 0 || k == 0 {
        return Err(Error::InvalidArgument("quadrature needs l ≥ 1 and k ≥ 1".into()));
    }
    let eig = crate::linalg::eigenvalues(a);
    let mut lmin = f64::INFINITY;
    let mut lmax = 0.0f64;
    let mut sector = 0.0f64;
    for z in &eig {
        let (re, im) = (-z.re.as_f64(), -z.im.as_f64());
        lmin = lmin.min(re);
        lmax = lmax.max(re.hypot(im));
        if re > 0.0 {
            sector = sector.max(im.abs().atan2(re));
        }
    }
    if !(lmin > 0.0) {
        return Err(Error::NotHurwitz(-lmin));
    }
    build_quadrature_interval(l, lmin, lmax, k, sector)
}

/// Rule for a given spectral enclosure.
pub fn build_quadrature_interval<T: Real>(
    l: usize,
    lambda_min: f64,
    lambda_max: f64,
    k: usize,
    sector: f64,
) -> Result<QuadratureRule<T>> {
    let ratio = (k as f64 * lambda_max / lambda_min).max(1.0);
    let mut chosen = None;
    for sec in [sector.min(MAX_SECTOR), 0.0] {
        let lay = best_layout(l, ratio, sec);
        let (nodes, weights) = nodes_for(l, &lay);
        let err = sweep(&nodes, &weights, ratio);
        if err <= SWEEP_TOL {
            chosen = Some((nodes, weights, sec, err));
            break;
        }
        if chosen.is_none() || sec == 0.0 {
            chosen = Some((nodes, weights, sec, err));
        }
    }
    let (nodes, weights, sec, err) = chosen.expect("at least one layout");
    if err > SWEEP_TOL {
        return Err(Error::Quadrature { error: err, lo: lambda_min, hi: k as f64 * lambda_max });
    }
    log::debug!(
        "quadrature: l = {l}, interval [{lambda_min:e}, {:e}], sector {sec:.3}, sweep error {err:e}",
        k as f64 * lambda_max
    );
    let scale = 1.0 / lambda_min;
    Ok(QuadratureRule {
        l,
        nodes: nodes.iter().map(|t| T::lit(t * scale)).collect(),
        weights: weights.iter().map(|w| T::lit(w * scale)).collect(),
        lambda_min: T::lit(lambda_min),
        lambda_max: T::lit(lambda_max),
        order: k,
        sector: sec,
        sweep_error: err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_and_endpoints() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -30.0, -400.0]));
        let rule: QuadratureRule<f64> = build_quadrature(DEFAULT_L, &a, 4).unwrap();
        assert_eq!(rule.len(), 101);
        assert!((rule.approx_inverse(1.0) - 1.0).abs() < 1e-8);
        let (lo, hi) = rule.interval();
        assert!((rule.approx_inverse(lo) * lo - 1.0).abs() < 1e-8);
        assert!((rule.approx_inverse(hi) * hi - 1.0).abs() < 1e-8);
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(rule.nodes[0] > 0.0 && rule.weights.iter().all(|w| *w > 0.0));
    }

    #[test]
    fn complex_sector_is_resolved() {
        let rule: QuadratureRule<f64> = build_quadrature_interval(50, 1.0, 20.0, 3, 0.6).unwrap();
        for (re, im) in [(1.0f64, 0.5f64), (3.0, 2.0), (10.0, 6.0)] {
            let x = nalgebra::Complex::new(re, im);
            let approx: nalgebra::Complex<f64> =
                rule.nodes.iter().zip(&rule.weights).map(|(t, w)| (-x * *t).exp() * *w).sum();
            assert!((approx * x - 1.0).norm() < 1e-6, "{re}+{im}i");
        }
    }

    #[test]
    fn rejects_unstable_matrices() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 0.1]));
        assert!(matches!(build_quadrature::<f64>(50, &a, 2), Err(Error::NotHurwitz(_))));
    }

    #[test]
    fn too_few_nodes_fail_the_sweep() {
        assert!(matches!(
            build_quadrature_interval::<f64>(3, 1.0, 1e6, 5, 0.0),
            Err(Error::Quadrature { .. })
        ));
    }
}
