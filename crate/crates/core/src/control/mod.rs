//! Polynomial feedback laws, closed-loop simulation and cost evaluation.

use nalgebra::{DMatrix, DVector};

use crate::ode::Divergence;
use crate::scalar::Real;
use crate::tensors::Tensor;

mod closed_loop;
mod replay;
mod spline;

pub use closed_loop::{simulate_closed_loop, ClosedLoop};
pub use replay::{mass_drift, replay_full, FullReplay};
pub use spline::CubicSpline;

/// Sample count and integrator tolerances for simulations.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize, schemars::JsonSchema)]
#[serde(default)]
pub struct SimOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Number of uniform sample intervals on `[0, T]` (kept even for Simpson's rule).
    pub intervals: usize,
    pub blowup_factor: f64,
    /// A closed loop ending with `‖y(T)‖ > stall_ratio · ‖y(0)‖` is flagged as divergent.
    pub stall_ratio: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, intervals: 2000, blowup_factor: 1e6, stall_ratio: Some(0.1) }
    }
}

impl SimOptions {
    pub(crate) fn sample_times<T: Real>(&self, horizon: T) -> Vec<T> {
        let n = self.intervals + self.intervals % 2;
        (0..=n).map(|i| horizon * T::from_count(i) / T::from_count(n)).collect()
    }

    pub(crate) fn integrator<T: Real>(&self) -> crate::ode::IntegratorOptions<T> {
        crate::ode::IntegratorOptions {
            rtol: T::lit(self.rtol),
            atol: T::lit(self.atol),
            blowup_factor: T::lit(self.blowup_factor),
            ..Default::default()
        }
    }
}

/// `u_p(y) = −(1/β) Σ_k (1/(k−1)!) T_k(N y + B, y, …, y)` on the reduced space.
#[derive(Clone, Debug)]
pub struct FeedbackLaw<T: Real> {
    pub beta: T,
    /// `tensors[k]` is `T_k`; entries below 2 are empty.
    tensors: Vec<Option<Tensor<T>>>,
    pub n_ops: Vec<DMatrix<T>>,
    pub b: DMatrix<T>,
}

fn factorial<T: Real>(k: usize) -> T {
    (1..=k).fold(T::one(), |acc, i| acc * T::from_count(i))
}

impl<T: Real> FeedbackLaw<T> {
    pub fn new(beta: T, tensors: Vec<Option<Tensor<T>>>, n_ops: Vec<DMatrix<T>>, b: DMatrix<T>) -> Self {
        Self { beta, tensors, n_ops, b }
    }

    pub fn degree(&self) -> usize {
        self.tensors.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn tensor(&self, k: usize) -> Option<&Tensor<T>> {
        self.tensors.get(k).and_then(|t| t.as_ref())
    }

    pub fn tensors(&self) -> impl Iterator<Item = (usize, &Tensor<T>)> {
        self.tensors.iter().enumerate().filter_map(|(k, t)| t.as_ref().map(|t| (k, t)))
    }

    /// Law of lower degree sharing the same tensors.
    pub fn truncated(&self, p: usize) -> Self {
        assert!(p >= 2 && p <= self.degree(), "degree {p} not available");
        Self { beta: self.beta, tensors: self.tensors[..=p].to_vec(), n_ops: self.n_ops.clone(), b: self.b.clone() }
    }

    /// `V_p(y) = Σ_k T_k(y, …, y) / k!`.
    pub fn value(&self, y: &DVector<T>) -> T {
        self.tensors().fold(T::zero(), |acc, (k, t)| acc + t.eval_diagonal(y) / factorial::<T>(k))
    }

    /// `M_k = T_k(·, ·, y, …, y)` for every order.
    fn partials(&self, y: &DVector<T>) -> Vec<(usize, DMatrix<T>)> {
        self.tensors().map(|(k, t)| (k, t.contract_last_repeated(y, k - 2).to_matrix())).collect()
    }

    /// `∇V_p(y)` and optionally the Hessian.
    fn derivatives(&self, y: &DVector<T>, hessian: bool) -> (DVector<T>, Option<DMatrix<T>>) {
        let r = self.dim();
        let mut g = DVector::zeros(r);
        let mut h = hessian.then(|| DMatrix::zeros(r, r));
        for (k, mk) in self.partials(y) {
            let f = factorial::<T>(k - 2);
            g.axpy(T::one() / (f * T::from_count(k - 1)), &(&mk * y), T::one());
            if let Some(h) = h.as_mut() {
                *h += &mk / f;
            }
        }
        (g, h)
    }

    /// `∇V_p(y)`.
    pub fn value_gradient(&self, y: &DVector<T>) -> DVector<T> {
        self.derivatives(y, false).0
    }

    pub fn eval(&self, y: &DVector<T>) -> DVector<T> {
        let g = self.value_gradient(y);
        let scale = -T::one() / self.beta;
        DVector::from_fn(self.m(), |j, _| {
            let w = &self.n_ops[j] * y + self.b.column(j);
            w.dot(&g) * scale
        })
    }

    /// Controls and their Jacobian `∂u/∂y` (`m × r`).
    pub fn eval_with_jacobian(&self, y: &DVector<T>) -> (DVector<T>, DMatrix<T>) {
        let (g, h) = self.derivatives(y, true);
        let h = h.expect("Hessian requested");
        let scale = -T::one() / self.beta;
        let m = self.m();
        let mut u = DVector::zeros(m);
        let mut jac = DMatrix::zeros(m, self.dim());
        for j in 0..m {
            let w = &self.n_ops[j] * y + self.b.column(j);
            u[j] = w.dot(&g) * scale;
            let row = (self.n_ops[j].tr_mul(&g) + &h * &w) * scale;
            jac.set_row(j, &row.transpose());
        }
        (u, jac)
    }
}

/// Time-sampled state, control and output of a simulation.
#[derive(Clone, Debug)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<DVector<T>>,
    pub controls: Vec<DVector<T>>,
    /// `‖output‖²` at each sample.
    pub output_sq: Vec<T>,
    pub divergence: Option<(T, Divergence)>,
}

impl<T: Real> Trajectory<T> {
    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    pub fn final_norm(&self) -> T {
        self.states.last().map(|s| s.norm()).unwrap_or(T::zero())
    }

    pub fn horizon(&self) -> T {
        *self.times.last().unwrap()
    }

    /// Running cost `½‖output‖² + (β/2)‖u‖²` per sample.
    pub fn integrand(&self, beta: T) -> Vec<T> {
        let half = T::lit(0.5);
        self.output_sq.iter().zip(&self.controls).map(|(o, u)| half * *o + half * beta * u.norm_squared()).collect()
    }

    /// Control samples of one component.
    pub fn control_component(&self, j: usize) -> Vec<T> {
        self.controls.iter().map(|u| u[j]).collect()
    }
}

/// Composite Simpson rule on uniform samples (trapezoid on a trailing odd interval).
pub fn simpson<T: Real>(h: T, f: &[T]) -> T {
    let n = f.len();
    if n < 2 {
        return T::zero();
    }
    let intervals = n - 1;
    let even = intervals - intervals % 2;
    let mut s = T::zero();
    let mut i = 0;
    while i < even {
        s += f[i] + T::lit(4.0) * f[i + 1] + f[i + 2];
        i += 2;
    }
    let mut total = s * h / T::lit(3.0);
    if even < intervals {
        total += (f[n - 2] + f[n - 1]) * h * T::lit(0.5);
    }
    total
}

/// `J = ½∫‖output‖² + (β/2)∫‖u‖²`, or `+∞` for a divergent run.
pub fn cost<T: Real>(traj: &Trajectory<T>, beta: T) -> T {
    if traj.diverged() {
        return T::max_value().unwrap() * T::lit(2.0);
    }
    let h = traj.times[1] - traj.times[0];
    simpson(h, &traj.integrand(beta))
}

/// `‖u − v‖_{L²(0,T)}` for controls on the same uniform grid.
pub fn control_distance<T: Real>(a: &Trajectory<T>, b: &Trajectory<T>) -> T {
    assert_eq!(a.times.len(), b.times.len(), "controls on different grids");
    let diff: Vec<T> = a.controls.iter().zip(&b.controls).map(|(u, v)| (u - v).norm_squared()).collect();
    simpson(a.times[1] - a.times[0], &diff).max(T::zero()).sqrt()
}

/// `‖u‖_{L²(0,T)}`.
pub fn control_norm<T: Real>(a: &Trajectory<T>) -> T {
    let sq: Vec<T> = a.controls.iter().map(|u| u.norm_squared()).collect();
    simpson(a.times[1] - a.times[0], &sq).max(T::zero()).sqrt()
}
