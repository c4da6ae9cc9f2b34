//! Initial probability densities.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Grid;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Initial density descriptor. Every variant is normalized to unit mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// The stationary density itself (zero deviation).
    Stationary,
    Uniform,
    /// Gaussian bump with per-axis standard deviations.
    Gaussian { center: Vec<f64>, width: Vec<f64> },
    /// Isotropic Gaussian whose width is chosen so that `‖ρ0 − ρ∞‖_{L²}` hits `target_l2`.
    GaussianTarget { center: Vec<f64>, target_l2: f64 },
    /// `ρ∞ (1 + amplitude ξ)` clipped at zero, with ξ a seeded random cosine series of unit max-norm.
    RandomPerturbation {
        seed: u64,
        amplitude: f64,
        #[serde(default = "default_modes")]
        modes: usize,
    },
    /// Random perturbation with the amplitude chosen to hit `target_l2`.
    RandomPerturbationTarget {
        seed: u64,
        target_l2: f64,
        #[serde(default = "default_modes")]
        modes: usize,
    },
}

fn default_modes() -> usize {
    6
}

fn normalized<T: Real>(grid: &Grid<T>, mut v: DVector<T>) -> Result<DVector<T>> {
    let mass = grid.integral(&v);
    if !(mass > T::zero()) {
        return Err(Error::InvalidArgument("initial density has no mass on the grid".into()));
    }
    v /= mass;
    Ok(v)
}

fn check_center<T: Real>(grid: &Grid<T>, center: &[f64]) -> Result<()> {
    if center.len() != grid.dim() {
        return Err(Error::InvalidArgument("center dimension differs from the grid".into()));
    }
    for (c, a) in center.iter().zip(&grid.axes) {
        if *c < a.lo.as_f64() || *c > a.hi.as_f64() {
            return Err(Error::InvalidArgument(format!("center {c} outside the domain")));
        }
    }
    Ok(())
}

fn gaussian<T: Real>(grid: &Grid<T>, center: &[f64], width: &[f64]) -> Result<DVector<T>> {
    check_center(grid, center)?;
    if width.len() != grid.dim() || width.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidArgument("gaussian widths must be positive, one per axis".into()));
    }
    let v = DVector::from_fn(grid.n(), |i, _| {
        let p = grid.point(i);
        let q: f64 = p.iter().zip(center).zip(width).map(|((x, c), w)| (x.as_f64() - c).powi(2) / (2.0 * w * w)).sum();
        T::lit((-q).exp())
    });
    normalized(grid, v)
}

/// Cosine series with random coefficients decaying like 1/(k1 + k2), scaled to max-norm 1.
fn random_field<T: Real>(grid: &Grid<T>, seed: u64, modes: usize) -> DVector<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = grid.dim();
    let k2max = if d == 2 { modes } else { 0 };
    let mut coeffs = Vec::new();
    for k1 in 0..=modes {
        for k2 in 0..=k2max {
            if k1 + k2 == 0 {
                continue;
            }
            let c: f64 = rng.gen_range(-1.0..1.0) / (k1 + k2) as f64;
            coeffs.push((k1, k2, c));
        }
    }
    let mut xi: Vec<f64> = (0..grid.n())
        .map(|i| {
            let p = grid.point(i);
            let arg = |ax: usize, k: usize| {
                let a = &grid.axes[ax];
                let s = (p[ax].as_f64() - a.lo.as_f64()) / (a.hi - a.lo).as_f64();
                (std::f64::consts::PI * k as f64 * s).cos()
            };
            coeffs
                .iter()
                .map(|&(k1, k2, c)| c * arg(0, k1) * if d == 2 { arg(1, k2) } else { 1.0 })
                .sum()
        })
        .collect();
    let mx = xi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if mx > 0.0 {
        xi.iter_mut().for_each(|v| *v /= mx);
    }
    DVector::from_iterator(grid.n(), xi.into_iter().map(T::lit))
}

fn perturbed<T: Real>(grid: &Grid<T>, rho_inf: &DVector<T>, xi: &DVector<T>, amp: f64) -> Result<DVector<T>> {
    let amp = T::lit(amp);
    let v = DVector::from_fn(grid.n(), |i, _| (rho_inf[i] * (T::one() + amp * xi[i])).max(T::zero()));
    normalized(grid, v)
}

/// Bisection for a monotone-in-bracket scalar problem `f(s) = target` on `[lo, hi]`.
fn solve_scalar(mut lo: f64, mut hi: f64, target: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let flo = f(lo)? - target;
    let fhi = f(hi)? - target;
    if flo.signum() == fhi.signum() {
        return Err(Error::InvalidArgument(format!(
            "target L2 distance {target} not attainable in the calibration bracket"
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)? - target;
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

impl InitialCondition {
    /// Evaluates the density on `grid`.
    pub fn build<T: Real>(&self, grid: &Grid<T>, rho_inf: &DVector<T>) -> Result<DVector<T>> {
        let dist = |v: &DVector<T>| grid.l2_norm(&(v - rho_inf)).as_f64();
        match self {
            InitialCondition::Stationary => Ok(rho_inf.clone()),
            InitialCondition::Uniform => normalized(grid, DVector::from_element(grid.n(), T::one())),
            InitialCondition::Gaussian { center, width } => gaussian(grid, center, width),
            InitialCondition::GaussianTarget { center, target_l2 } => {
                check_center(grid, center)?;
                // distance decreases from a spike towards a broad bump; scan for the first crossing
                let h = grid.axes.iter().map(|a| a.h.as_f64()).fold(f64::MAX, f64::min);
                let span = grid.axes.iter().map(|a| (a.hi - a.lo).as_f64()).fold(0.0, f64::max);
                let f = |w: f64| gaussian(grid, center, &vec![w; grid.dim()]).map(|v| dist(&v));
                let mut lo = h;
                let mut flo = f(lo)? - target_l2;
                let steps = 200;
                for s in 1..=steps {
                    let w = h * (span / h).powf(s as f64 / steps as f64);
                    let fw = f(w)? - target_l2;
                    if fw.signum() != flo.signum() {
                        let width = solve_scalar(lo, w, *target_l2, f)?;
                        return gaussian(grid, center, &vec![width; grid.dim()]);
                    }
                    lo = w;
                    flo = fw;
                }
                Err(Error::InvalidArgument(format!("target L2 distance {target_l2} not attainable by a Gaussian")))
            }
            InitialCondition::RandomPerturbation { seed, amplitude, modes } => {
                if *amplitude < 0.0 {
                    return Err(Error::InvalidArgument("amplitude must be non-negative".into()));
                }
                perturbed(grid, rho_inf, &random_field(grid, *seed, *modes), *amplitude)
            }
            InitialCondition::RandomPerturbationTarget { seed, target_l2, modes } => {
                let xi = random_field(grid, *seed, *modes);
                let f = |a: f64| perturbed(grid, rho_inf, &xi, a).map(|v| dist(&v));
                let mut hi = 1.0;
                while f(hi)? < *target_l2 {
                    hi *= 2.0;
                    if hi > 1e6 {
                        return Err(Error::InvalidArgument(format!(
                            "target L2 distance {target_l2} not attainable by a perturbation"
                        )));
                    }
                }
                let amp = solve_scalar(0.0, hi, *target_l2, f)?;
                perturbed(grid, rho_inf, &xi, amp)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_model, PotentialSpec};

    fn model() -> (Grid<f64>, DVector<f64>) {
        let g = Grid::<f64>::new(&[(-6.0, 6.0)], &[200]).unwrap();
        let m = assemble_model(&g, &PotentialSpec::triple_well_1d(), 1.0).unwrap();
        (g, m.rho_inf)
    }

    #[test]
    fn uniform_is_one_twelfth() {
        let (g, r) = model();
        let u = InitialCondition::Uniform.build(&g, &r).unwrap();
        assert!(u.iter().all(|v| (v - 1.0 / 12.0).abs() < 1e-14));
    }

    #[test]
    fn gaussian_target_hits_distance() {
        let (g, r) = model();
        let ic = InitialCondition::GaussianTarget { center: vec![0.0], target_l2: 0.57 };
        let v = ic.build(&g, &r).unwrap();
        assert!((g.l2_norm(&(&v - &r)) - 0.57).abs() < 1e-9);
        assert!((g.integral(&v) - 1.0).abs() < 1e-12);
        assert!(v.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn random_perturbation_is_deterministic_and_normalized() {
        let (g, r) = model();
        let ic = InitialCondition::RandomPerturbation { seed: 7, amplitude: 0.8, modes: 6 };
        let a = ic.build(&g, &r).unwrap();
        let b = ic.build(&g, &r).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| *x >= 0.0));
        assert!((g.integral(&a) - 1.0).abs() < 1e-12);
        let c = InitialCondition::RandomPerturbation { seed: 8, amplitude: 0.8, modes: 6 }.build(&g, &r).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn perturbation_target() {
        let g = Grid::<f64>::new(&[(-6.0, 6.0), (-6.5, 5.5)], &[16, 16]).unwrap();
        let m = assemble_model(&g, &PotentialSpec::four_well_2d(), 0.25).unwrap();
        let ic = InitialCondition::RandomPerturbationTarget { seed: 3, target_l2: 0.18, modes: 4 };
        let v = ic.build(&g, &m.rho_inf).unwrap();
        assert!((g.l2_norm(&(&v - &m.rho_inf)) - 0.18).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_parameters() {
        let (g, r) = model();
        assert!(InitialCondition::Gaussian { center: vec![7.0], width: vec![1.0] }.build(&g, &r).is_err());
        assert!(InitialCondition::Gaussian { center: vec![0.0], width: vec![0.0] }.build(&g, &r).is_err());
    }
}
