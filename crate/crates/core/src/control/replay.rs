use nalgebra::DVector;

use super::{CubicSpline, SimOptions, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{BandLu, BandMatrix};
use crate::model::BilinearModel;
use crate::ode::{integrate, OdeSystem};
use crate::scalar::Real;

/// Full model driven by an interpolated open-loop control.
pub struct FullReplay<'a, T: Real> {
    pub model: &'a BilinearModel<T>,
    pub controls: Vec<CubicSpline<T>>,
}

impl<T: Real> FullReplay<'_, T> {
    fn u(&self, t: T) -> Vec<T> {
        self.controls.iter().map(|s| s.eval(t)).collect()
    }
}

impl<T: Real> OdeSystem<T> for FullReplay<'_, T> {
    type Solver = BandLu<T>;

    fn dim(&self) -> usize {
        self.model.n()
    }

    fn rhs(&self, t: T, y: &DVector<T>, out: &mut DVector<T>) {
        out.copy_from(&self.model.rhs(&self.u(t), y));
    }

    fn iteration_matrix(&self, t: T, _y: &DVector<T>, h_gamma: T) -> Result<BandLu<T>> {
        let a = &self.model.a_band;
        let mut m = BandMatrix::identity(a.dim(), a.lower(), a.upper());
        m.axpy(-h_gamma, a);
        for (j, uj) in self.u(t).into_iter().enumerate() {
            m.axpy(-h_gamma * uj, &self.model.n_band[j]);
        }
        BandLu::new(&m)
    }
}

/// Replays sampled controls (`times`, `controls`) on the full model from `y0`
/// (deviation from the stationary density) over `[0, horizon]`.
pub fn replay_full<T: Real>(
    model: &BilinearModel<T>,
    times: &[T],
    controls: &[DVector<T>],
    y0: &DVector<T>,
    horizon: T,
    opts: &SimOptions,
) -> Result<Trajectory<T>> {
    if times.len() != controls.len() || times.len() < 2 {
        return Err(Error::InvalidArgument("control samples and times must match".into()));
    }
    let (lo, hi) = (times[0], *times.last().unwrap());
    if lo > T::zero() || hi < horizon * (T::one() - T::lit(1e-12)) {
        return Err(Error::OutOfRange { t: horizon.as_f64(), lo: lo.as_f64(), hi: hi.as_f64() });
    }
    if y0.len() != model.n() {
        return Err(Error::DimensionMismatch("replay initial state".into()));
    }
    let m = model.m();
    let splines = (0..m)
        .map(|j| CubicSpline::new(times.to_vec(), controls.iter().map(|u| u[j]).collect()))
        .collect::<Result<Vec<_>>>()?;
    let sys = FullReplay { model, controls: splines };
    let sample_times = opts.sample_times(horizon);
    let sol = integrate(&sys, y0, &sample_times, &opts.integrator())?;
    let hbar = model.grid.hbar;
    let controls = sol.times.iter().map(|t| DVector::from_vec(sys.u(*t))).collect();
    let output_sq = sol.states.iter().map(|y| hbar * y.norm_squared()).collect();
    Ok(Trajectory { times: sol.times, states: sol.states, controls, output_sq, divergence: sol.divergence })
}

/// Largest `|h̄ 1ᵀ y(t) − h̄ 1ᵀ y(0)|` along a full trajectory.
pub fn mass_drift<T: Real>(traj: &Trajectory<T>, hbar: T) -> T {
    let m0 = traj.states[0].sum() * hbar;
    traj.states.iter().fold(T::zero(), |acc, y| acc.max((y.sum() * hbar - m0).abs()))
}
