//! Open-loop optimal control on the reduced model by steepest descent with
//! Armijo backtracking.
//!
//! States follow Crank–Nicolson on a uniform grid with piecewise-linear
//! controls; the cost uses the trapezoid rule on the same grid and the
//! gradient is the exact derivative of that discrete cost.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::Trajectory;
use crate::error::{Error, Result};
use crate::reduction::ReducedModel;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(default)]
pub struct ArmijoParams {
    /// Initial step `C`.
    pub c: f64,
    pub theta: f64,
    pub sigma: f64,
    /// Stop once `‖∇J‖_{L²(0,T)} ≤ delta`.
    pub delta: f64,
    pub horizon: f64,
    /// Number of time intervals.
    pub intervals: usize,
    pub max_iter: usize,
    pub max_backtracks: usize,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        Self { c: 500.0, theta: 0.7, sigma: 0.05, delta: 3e-4, horizon: 20.0, intervals: 2000, max_iter: 2000, max_backtracks: 60 }
    }
}

impl ArmijoParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.c > 0.0
            && self.theta > 0.0
            && self.theta < 1.0
            && self.sigma > 0.0
            && self.sigma < 1.0
            && self.delta > 0.0
            && self.horizon > 0.0
            && self.intervals >= 2;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Armijo parameters {self:?}")))
        }
    }
}

/// Nodal controls with their cost and gradient norm.
#[derive(Clone, Debug)]
pub struct ControlIterate<T: Real> {
    pub times: Vec<T>,
    pub u: Vec<DVector<T>>,
    pub cost: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Real> ControlIterate<T> {
    /// Piecewise-linear controls and their state trajectory on the problem grid.
    pub fn trajectory(&self, problem: &OpenLoop<'_, T>) -> Result<Trajectory<T>> {
        let states = problem.forward(&self.u)?;
        let output_sq = states.iter().map(|y| y.dot(&(&problem.red.ctc * y))).collect();
        Ok(Trajectory { times: self.times.clone(), states, controls: self.u.clone(), output_sq, divergence: None })
    }
}

/// Discretized open-loop problem for a fixed initial state and weight.
pub struct OpenLoop<'a, T: Real> {
    pub red: &'a ReducedModel<T>,
    pub y0: DVector<T>,
    pub beta: T,
    pub horizon: T,
    pub intervals: usize,
}

impl<'a, T: Real> OpenLoop<'a, T> {
    pub fn new(red: &'a ReducedModel<T>, y0: DVector<T>, beta: T, horizon: T, intervals: usize) -> Self {
        Self { red, y0, beta, horizon, intervals }
    }

    pub fn step(&self) -> T {
        self.horizon / T::from_count(self.intervals)
    }

    pub fn times(&self) -> Vec<T> {
        (0..=self.intervals).map(|k| self.step() * T::from_count(k)).collect()
    }

    /// Trapezoid weight of node `k`.
    pub fn weight(&self, k: usize) -> T {
        if k == 0 || k == self.intervals {
            self.step() * T::lit(0.5)
        } else {
            self.step()
        }
    }

    pub fn zero_control(&self) -> Vec<DVector<T>> {
        vec![DVector::zeros(self.red.m()); self.intervals + 1]
    }

    /// Controls sampled at the grid nodes from any trajectory with uniform samples on `[0, T]`.
    pub fn resample(&self, times: &[T], controls: &[DVector<T>]) -> Result<Vec<DVector<T>>> {
        let splines = (0..self.red.m())
            .map(|j| crate::control::CubicSpline::new(times.to_vec(), controls.iter().map(|u| u[j]).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.times().iter().map(|t| DVector::from_iterator(splines.len(), splines.iter().map(|s| s.eval(*t)))).collect())
    }

    fn generator(&self, u: &DVector<T>) -> DMatrix<T> {
        let mut m = self.red.a.clone();
        for j in 0..u.len() {
            m += &self.red.n_ops[j] * u[j];
        }
        m
    }

    fn check(&self, u: &[DVector<T>]) -> Result<()> {
        if u.len() != self.intervals + 1 || u.iter().any(|v| v.len() != self.red.m()) {
            return Err(Error::DimensionMismatch(format!(
                "expected {} control nodes of size {}",
                self.intervals + 1,
                self.red.m()
            )));
        }
        Ok(())
    }

    /// Crank–Nicolson states at the grid nodes.
    pub fn forward(&self, u: &[DVector<T>]) -> Result<Vec<DVector<T>>> {
        self.check(u)?;
        let r = self.red.r;
        let h2 = self.step() * T::lit(0.5);
        let id = DMatrix::<T>::identity(r, r);
        let limit = T::lit(1e6) * self.y0.norm().max(T::lit(1e-300));
        let mut states = Vec::with_capacity(self.intervals + 1);
        states.push(self.y0.clone());
        let mut m_prev = self.generator(&u[0]);
        for k in 0..self.intervals {
            let m_next = self.generator(&u[k + 1]);
            let y = &states[k];
            let mut rhs = y + &m_prev * y * h2;
            rhs += &self.red.b * (&u[k] + &u[k + 1]) * h2;
            let lhs = &id - &m_next * h2;
            let next = lhs.lu().solve(&rhs).ok_or_else(|| Error::Singular("Crank–Nicolson step".into()))?;
            if !(next.norm() <= limit) {
                return Err(Error::BlowUp { t: (self.step() * T::from_count(k + 1)).as_f64() });
            }
            states.push(next);
            m_prev = m_next;
        }
        Ok(states)
    }

    fn cost_of(&self, u: &[DVector<T>], states: &[DVector<T>]) -> T {
        let half = T::lit(0.5);
        (0..=self.intervals).fold(T::zero(), |acc, k| {
            let y = &states[k];
            acc + self.weight(k) * (half * y.dot(&(&self.red.ctc * y)) + half * self.beta * u[k].norm_squared())
        })
    }

    /// Discrete cost; `+∞` if the state blows up.
    pub fn cost(&self, u: &[DVector<T>]) -> Result<T> {
        match self.forward(u) {
            Ok(states) => Ok(self.cost_of(u, &states)),
            Err(Error::BlowUp { .. }) => Ok(T::max_value().unwrap()),
            Err(e) => Err(e),
        }
    }

    /// Cost, `L²` gradient at the nodes, and its `L²(0,T)` norm.
    pub fn gradient(&self, u: &[DVector<T>]) -> Result<(T, Vec<DVector<T>>, T)> {
        let states = self.forward(u)?;
        let cost = self.cost_of(u, &states);
        let r = self.red.r;
        let kk = self.intervals;
        let h2 = self.step() * T::lit(0.5);
        let id = DMatrix::<T>::identity(r, r);
        // λ_k for k = 1..=K, with λ_0 = λ_{K+1} = 0
        let mut lambda = vec![DVector::zeros(r); kk + 2];
        for k in (1..=kk).rev() {
            let mk = self.generator(&u[k]);
            let mut rhs = &self.red.ctc * &states[k] * self.weight(k);
            if k < kk {
                rhs += (&id + &mk * h2).tr_mul(&lambda[k + 1]);
            }
            let lhs_t = (&id - &mk * h2).transpose();
            lambda[k] = lhs_t.lu().solve(&rhs).ok_or_else(|| Error::Singular("adjoint step".into()))?;
        }
        let mut grad = Vec::with_capacity(kk + 1);
        let mut norm_sq = T::zero();
        for k in 0..=kk {
            let lam = &lambda[k] + &lambda[k + 1];
            let w = self.weight(k);
            let g = DVector::from_fn(self.red.m(), |j, _| {
                let dir = &self.red.n_ops[j] * &states[k] + self.red.b.column(j);
                (w * self.beta * u[k][j] + h2 * lam.dot(&dir)) / w
            });
            norm_sq += w * g.norm_squared();
            grad.push(g);
        }
        Ok((cost, grad, norm_sq.sqrt()))
    }
}

/// Steepest descent with Armijo steps `C θ^j`.
pub fn optimize<T: Real>(
    problem: &OpenLoop<'_, T>,
    params: &ArmijoParams,
    u_init: Option<Vec<DVector<T>>>,
) -> Result<ControlIterate<T>> {
    params.validate()?;
    let mut u = u_init.unwrap_or_else(|| problem.zero_control());
    problem.check(&u)?;
    let delta = T::lit(params.delta);
    let (mut cost, mut grad, mut gnorm) = problem.gradient(&u)?;
    let mut iterations = 0;
    while gnorm > delta {
        if iterations >= params.max_iter {
            log::warn!(
                "open-loop descent stopped after {iterations} iterations with gradient norm {:e}",
                gnorm.as_f64()
            );
            return Ok(ControlIterate { times: problem.times(), u, cost, grad_norm: gnorm, iterations, converged: false });
        }
        let mut step = T::lit(params.c);
        let theta = T::lit(params.theta);
        let sigma = T::lit(params.sigma);
        let mut accepted = None;
        let mut best_trial = T::max_value().unwrap();
        for _ in 0..=params.max_backtracks {
            let trial: Vec<DVector<T>> = u.iter().zip(&grad).map(|(a, g)| a - g * step).collect();
            let c = problem.cost(&trial)?;
            if c <= cost - sigma * step * gnorm * gnorm {
                accepted = Some(trial);
                break;
            }
            best_trial = best_trial.min(c);
            step *= theta;
        }
        let Some(next) = accepted else {
            // No decrease is resolvable in floating point: the iterate is stationary to rounding.
            if best_trial - cost <= T::lit(64.0) * T::eps() * cost.abs() {
                log::warn!(
                    "open-loop descent reached rounding level after {iterations} iterations (gradient norm {:e})",
                    gnorm.as_f64()
                );
                return Ok(ControlIterate { times: problem.times(), u, cost, grad_norm: gnorm, iterations, converged: false });
            }
            return Err(Error::LineSearch { iteration: iterations, cost: cost.as_f64(), grad_norm: gnorm.as_f64() });
        };
        u = next;
        (cost, grad, gnorm) = problem.gradient(&u)?;
        iterations += 1;
        log::trace!("descent {iterations}: cost {:e}, gradient {:e}", cost.as_f64(), gnorm.as_f64());
    }
    log::debug!("open loop converged in {iterations} iterations, cost {:e}", cost.as_f64());
    Ok(ControlIterate { times: problem.times(), u, cost, grad_norm: gnorm, iterations, converged: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lyapunov::tests::random_stable;
    use crate::riccati::solve_care_q;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bilinear(r: usize, seed: u64, coupling: f64) -> ReducedModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_stable(r, seed);
        let n = DMatrix::from_fn(r, r, |_, _| coupling * rng.gen_range(-1.0..1.0));
        let b = DMatrix::from_fn(r, 1, |_, _| rng.gen_range(-1.0..1.0));
        let c = DMatrix::from_fn(2, r, |_, _| rng.gen_range(-1.0..1.0));
        ReducedModel {
            r,
            ctc: c.tr_mul(&c),
            c,
            a,
            n_ops: vec![n],
            b,
            v: DMatrix::identity(r, r),
            w: DMatrix::identity(r, r),
            sigma: vec![],
            y0: DVector::from_fn(r, |_, _| rng.gen_range(-1.0..1.0)),
        }
    }

    #[test]
    fn directional_derivative_matches_gradient() {
        let red = bilinear(3, 5, 0.5);
        let p = OpenLoop::new(&red, red.y0.clone(), 0.1, 5.0, 200);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u: Vec<_> = (0..=200).map(|_| DVector::from_element(1, rng.gen_range(-0.5..0.5))).collect();
        let v: Vec<_> = (0..=200).map(|_| DVector::from_element(1, rng.gen_range(-1.0..1.0))).collect();
        let (_, g, _) = p.gradient(&u).unwrap();
        let inner: f64 = (0..=200).map(|k| p.weight(k) * g[k].dot(&v[k])).sum();
        let eps = 1e-5;
        let plus: Vec<_> = u.iter().zip(&v).map(|(a, b)| a + b * eps).collect();
        let minus: Vec<_> = u.iter().zip(&v).map(|(a, b)| a - b * eps).collect();
        let fd = (p.cost(&plus).unwrap() - p.cost(&minus).unwrap()) / (2.0 * eps);
        assert!((fd - inner).abs() <= 1e-4 * inner.abs(), "{fd} vs {inner}");
    }

    #[test]
    fn zero_state_is_optimal_immediately() {
        let red = bilinear(3, 6, 0.3);
        let p = OpenLoop::new(&red, DVector::zeros(3), 1.0, 5.0, 100);
        let it = optimize(&p, &ArmijoParams { horizon: 5.0, intervals: 100, ..Default::default() }, None).unwrap();
        assert_eq!(it.iterations, 0);
        assert!(it.u.iter().all(|v| v.norm() == 0.0));
        assert_eq!(it.cost, 0.0);
    }

    #[test]
    fn linear_quadratic_matches_riccati_value() {
        let red = bilinear(3, 7, 0.0);
        let beta = 1.0;
        let p = OpenLoop::new(&red, red.y0.clone(), beta, 30.0, 3000);
        let params = ArmijoParams { c: 1.0, delta: 1e-7, horizon: 30.0, intervals: 3000, max_iter: 20000, ..Default::default() };
        let it = optimize(&p, &params, None).unwrap();
        assert!(it.converged);
        let ric = solve_care_q(&red.a, &red.b, &red.ctc, beta).unwrap();
        let value = 0.5 * red.y0.dot(&(&ric.pi * &red.y0));
        assert!((it.cost - value).abs() <= 1e-4 * value, "{} vs {value}", it.cost);
    }

    #[test]
    fn descent_never_increases_cost() {
        let red = bilinear(4, 8, 0.4);
        let p = OpenLoop::new(&red, red.y0.clone(), 0.5, 5.0, 100);
        let start = p.cost(&p.zero_control()).unwrap();
        let params = ArmijoParams { horizon: 5.0, intervals: 100, max_iter: 50, delta: 1e-10, ..Default::default() };
        let it = optimize(&p, &params, None).unwrap();
        assert!(it.cost <= start);
        let again = optimize(&p, &params, Some(it.u.clone())).unwrap();
        assert!(again.cost <= it.cost);
    }
}
