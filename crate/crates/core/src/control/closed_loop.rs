use nalgebra::{DMatrix, DVector};

use super::{FeedbackLaw, SimOptions, Trajectory};
use crate::error::{Error, Result};
use crate::ode::{integrate, DenseLu, Divergence, OdeSystem};
use crate::reduction::ReducedModel;
use crate::scalar::Real;

/// `ẏ = A y + Σ_j (N_j y + B_j) u_j(y)` with `u = u_p(y)`.
pub struct ClosedLoop<'a, T: Real> {
    pub red: &'a ReducedModel<T>,
    pub law: &'a FeedbackLaw<T>,
}

impl<T: Real> ClosedLoop<'_, T> {
    fn field(&self, y: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let mut out = &self.red.a * y;
        for j in 0..u.len() {
            out.axpy(u[j], &(&self.red.n_ops[j] * y + self.red.b.column(j)), T::one());
        }
        out
    }
}

impl<T: Real> OdeSystem<T> for ClosedLoop<'_, T> {
    type Solver = DenseLu<T>;

    fn dim(&self) -> usize {
        self.red.r
    }

    fn rhs(&self, _t: T, y: &DVector<T>, out: &mut DVector<T>) {
        let u = self.law.eval(y);
        out.copy_from(&self.field(y, &u));
    }

    fn iteration_matrix(&self, _t: T, y: &DVector<T>, h_gamma: T) -> Result<DenseLu<T>> {
        let (u, du) = self.law.eval_with_jacobian(y);
        let mut jac = self.red.a.clone();
        for j in 0..u.len() {
            jac += &self.red.n_ops[j] * u[j];
            let w = &self.red.n_ops[j] * y + self.red.b.column(j);
            jac += &w * du.row(j);
        }
        let r = self.red.r;
        DenseLu::new(DMatrix::identity(r, r) - jac * h_gamma)
    }
}

/// Reduced closed loop on `[0, horizon]`, sampled uniformly.
pub fn simulate_closed_loop<T: Real>(
    red: &ReducedModel<T>,
    law: &FeedbackLaw<T>,
    y0: &DVector<T>,
    horizon: T,
    opts: &SimOptions,
) -> Result<Trajectory<T>> {
    if !(horizon > T::zero()) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    if y0.len() != red.r || law.dim() != red.r {
        return Err(Error::DimensionMismatch("closed-loop state and law dimensions".into()));
    }
    let sys = ClosedLoop { red, law };
    let times = opts.sample_times(horizon);
    let sol = integrate(&sys, y0, &times, &opts.integrator())?;
    let controls: Vec<DVector<T>> = sol.states.iter().map(|y| law.eval(y)).collect();
    let output_sq = sol.states.iter().map(|y| y.dot(&(&red.ctc * y))).collect();
    let mut divergence = sol.divergence;
    if let (None, Some(ratio)) = (divergence, opts.stall_ratio) {
        let end = sol.states.last().unwrap().norm();
        if end > T::lit(ratio) * y0.norm() {
            divergence = Some((horizon, Divergence::Stalled));
        }
    }
    if let Some((t, kind)) = divergence {
        log::info!("closed loop diverged ({kind:?}) at t = {}", t.as_f64());
    }
    Ok(Trajectory { times: sol.times, states: sol.states, controls, output_sq, divergence })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::cost;
    use crate::linalg::{expm, lyapunov::tests::random_stable};
    use crate::riccati::solve_care_q;
    use crate::tensors::Tensor;

    fn linear_model(r: usize) -> ReducedModel<f64> {
        let a = random_stable(r, 21);
        let b = DMatrix::from_fn(r, 1, |i, _| 1.0 - 0.3 * i as f64);
        let c = DMatrix::identity(r, r);
        ReducedModel {
            r,
            a,
            n_ops: vec![DMatrix::zeros(r, r)],
            b,
            ctc: c.clone(),
            c,
            v: DMatrix::identity(r, r),
            w: DMatrix::identity(r, r),
            sigma: vec![],
            y0: DVector::from_element(r, 0.3),
        }
    }

    #[test]
    fn nontrivial_equilibrium_is_flagged() {
        // ẏ = a y − (1 − 3y)² y nearly stops at y = 1/3
        let red = ReducedModel {
            r: 1,
            a: DMatrix::from_element(1, 1, -0.01),
            n_ops: vec![DMatrix::from_element(1, 1, -3.0)],
            b: DMatrix::from_element(1, 1, 1.0),
            c: DMatrix::from_element(1, 1, 1.0),
            ctc: DMatrix::from_element(1, 1, 1.0),
            v: DMatrix::identity(1, 1),
            w: DMatrix::identity(1, 1),
            sigma: vec![],
            y0: DVector::from_element(1, 1.0),
        };
        let law = FeedbackLaw::new(1.0, vec![None, None, Some(Tensor::from_matrix(&DMatrix::from_element(1, 1, 1.0)))], red.n_ops.clone(), red.b.clone());
        let opts = SimOptions { intervals: 100, ..Default::default() };
        let tr = simulate_closed_loop(&red, &law, &red.y0, 20.0, &opts).unwrap();
        assert!(matches!(tr.divergence, Some((_, Divergence::Stalled))));
        assert!(cost(&tr, 1.0f64).is_infinite());
        let plain = simulate_closed_loop(&red, &law, &red.y0, 20.0, &SimOptions { stall_ratio: None, ..opts }).unwrap();
        assert!(!plain.diverged());
    }

    #[test]
    fn zero_initial_state_stays_put() {
        let red = linear_model(3);
        let ric = solve_care_q(&red.a, &red.b, &red.ctc, 1.0).unwrap();
        let law = FeedbackLaw::new(1.0, vec![None, None, Some(Tensor::from_matrix(&ric.pi))], red.n_ops.clone(), red.b.clone());
        let tr = simulate_closed_loop(&red, &law, &DVector::zeros(3), 5.0, &SimOptions { intervals: 50, ..Default::default() }).unwrap();
        assert!(tr.states.iter().all(|s| s.norm() == 0.0));
        assert!(tr.controls.iter().all(|u| u.norm() == 0.0));
        assert_eq!(cost(&tr, 1.0), 0.0);
    }

    #[test]
    fn linear_closed_loop_matches_exponential_and_riccati_cost() {
        let red = linear_model(4);
        let beta = 0.5;
        let ric = solve_care_q(&red.a, &red.b, &red.ctc, beta).unwrap();
        let law = FeedbackLaw::new(beta, vec![None, None, Some(Tensor::from_matrix(&ric.pi))], red.n_ops.clone(), red.b.clone());
        let opts = SimOptions { intervals: 4000, ..Default::default() };
        let tr = simulate_closed_loop(&red, &law, &red.y0, 40.0, &opts).unwrap();
        for (t, y) in tr.times.iter().zip(&tr.states).step_by(371) {
            let exact = expm(&(&ric.a_cl * *t)).unwrap() * &red.y0;
            assert!((y - &exact).norm() <= 1e-6 * red.y0.norm());
        }
        let j = cost(&tr, beta);
        let value = 0.5 * red.y0.dot(&(&ric.pi * &red.y0));
        assert!((j - value).abs() < 1e-6 * value, "{j} vs {value}, spectral abscissa {}", crate::linalg::spectral_abscissa(&ric.a_cl));
    }
}
