//! Adaptive L-stable SDIRK integrator (order 4, embedded order 3) with dense output.
//!
//! Coefficients follow the SDIRK4 scheme of Hairer and Wanner with γ = 1/4.
//! Stage equations are solved by simplified Newton with the iteration matrix
//! `I − hγ J` supplied by the system, factored once per step attempt.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::BandLu;
use crate::scalar::Real;

const STAGES: usize = 5;
const GAMMA: f64 = 0.25;
const A: [[f64; STAGES]; STAGES] = [
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [0.5, 0.25, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.25, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25],
];
const B_HAT: [f64; STAGES] = [59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0];
const C: [f64; STAGES] = [0.25, 0.75, 11.0 / 20.0, 0.5, 1.0];

/// Factored linear operator.
pub trait LinearSolve<T> {
    fn solve_in_place(&self, b: &mut DVector<T>);
}

impl<T: Real> LinearSolve<T> for BandLu<T> {
    fn solve_in_place(&self, b: &mut DVector<T>) {
        BandLu::solve_in_place(self, b.as_mut_slice());
    }
}

/// Dense LU factors.
pub struct DenseLu<T: Real>(nalgebra::linalg::LU<T, nalgebra::Dyn, nalgebra::Dyn>);

impl<T: Real> DenseLu<T> {
    pub fn new(m: DMatrix<T>) -> Result<Self> {
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(Error::Singular("dense iteration matrix".into()));
        }
        Ok(Self(lu))
    }
}

impl<T: Real> LinearSolve<T> for DenseLu<T> {
    fn solve_in_place(&self, b: &mut DVector<T>) {
        self.0.solve_mut(b);
    }
}

/// First-order system `y' = f(t, y)` with an analytic Jacobian.
pub trait OdeSystem<T: Real> {
    type Solver: LinearSolve<T>;

    fn dim(&self) -> usize;

    fn rhs(&self, t: T, y: &DVector<T>, out: &mut DVector<T>);

    /// Factors `I − hγ ∂f/∂y(t, y)`.
    fn iteration_matrix(&self, t: T, y: &DVector<T>, h_gamma: T) -> Result<Self::Solver>;
}

#[derive(Clone, Debug)]
pub struct IntegratorOptions<T> {
    pub rtol: T,
    pub atol: T,
    pub h_init: Option<T>,
    pub h_max: Option<T>,
    pub max_steps: usize,
    /// Divergence is flagged once `‖y‖ > blowup_factor · ‖y(t0)‖`.
    pub blowup_factor: T,
}

impl<T: Real> Default for IntegratorOptions<T> {
    fn default() -> Self {
        Self {
            rtol: T::lit(1e-8),
            atol: T::lit(1e-10),
            h_init: None,
            h_max: None,
            max_steps: 2_000_000,
            blowup_factor: T::lit(1e6),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Divergence {
    BlowUp,
    StepUnderflow,
    /// Integration finished but the state did not approach the origin
    /// (set by callers that expect decay, never by the integrator).
    Stalled,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub newton_failures: usize,
    pub rhs_evals: usize,
    pub factorizations: usize,
}

/// Samples of an integration run at the requested output times.
///
/// After a divergence the samples end at the last output time reached.
#[derive(Clone, Debug)]
pub struct Solution<T> {
    pub times: Vec<T>,
    pub states: Vec<DVector<T>>,
    pub divergence: Option<(T, Divergence)>,
    pub stats: Stats,
}

fn weighted_rms<T: Real>(v: &DVector<T>, y0: &DVector<T>, y1: &DVector<T>, o: &IntegratorOptions<T>) -> T {
    let n = v.len();
    if n == 0 {
        return T::zero();
    }
    let abs = nalgebra::ComplexField::abs;
    let mut s = T::zero();
    for i in 0..n {
        let sc = o.atol + o.rtol * abs(y0[i]).max(abs(y1[i]));
        let q = v[i] / sc;
        s += q * q;
    }
    (s / T::from_count(n)).sqrt()
}

fn hermite<T: Real>(theta: T, h: T, y0: &DVector<T>, f0: &DVector<T>, y1: &DVector<T>, f1: &DVector<T>) -> DVector<T> {
    let one = T::one();
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = two * t3 - three * t2 + one;
    let h10 = t3 - two * t2 + theta;
    let h01 = -two * t3 + three * t2;
    let h11 = t3 - t2;
    y0 * h00 + f0 * (h10 * h) + y1 * h01 + f1 * (h11 * h)
}

/// Integrates `sys` from `sample_times[0]` to the last sample time.
///
/// `sample_times` must be strictly increasing with at least two entries.
pub fn integrate<T: Real, S: OdeSystem<T>>(
    sys: &S,
    y0: &DVector<T>,
    sample_times: &[T],
    opts: &IntegratorOptions<T>,
) -> Result<Solution<T>> {
    if sample_times.len() < 2 {
        return Err(Error::InvalidArgument("need at least two sample times".into()));
    }
    if sample_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("sample times must increase strictly".into()));
    }
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::DimensionMismatch(format!("initial state has length {}, system {}", y0.len(), n)));
    }
    let t0 = sample_times[0];
    let t_end = *sample_times.last().unwrap();
    let span = t_end - t0;
    let mut stats = Stats::default();
    let mut times = vec![t0];
    let mut states = vec![y0.clone()];
    let mut next_sample = 1;

    let y0_norm = y0.norm();
    let blowup = if y0_norm > T::zero() { opts.blowup_factor * y0_norm } else { T::max_value().unwrap() };

    let mut t = t0;
    let mut y = y0.clone();
    let mut f = DVector::zeros(n);
    sys.rhs(t, &y, &mut f);
    stats.rhs_evals += 1;

    let h_max = opts.h_max.unwrap_or(span);
    let mut h = match opts.h_init {
        Some(h) => h,
        None => {
            let d0 = weighted_rms(&y, &y, &y, opts);
            let d1 = weighted_rms(&f, &y, &y, opts);
            if d0 > T::lit(1e-5) && d1 > T::lit(1e-5) {
                T::lit(0.01) * d0 / d1
            } else {
                T::lit(1e-6) * span.max(T::one())
            }
        }
    }
    .min(h_max)
    .min(span * T::lit(0.1));

    let gamma = T::lit(GAMMA);
    let a: Vec<Vec<T>> = A.iter().map(|r| r.iter().map(|v| T::lit(*v)).collect()).collect();
    let e: Vec<T> = (0..STAGES).map(|i| T::lit(A[STAGES - 1][i] - B_HAT[i])).collect();
    let c: Vec<T> = C.iter().map(|v| T::lit(*v)).collect();
    let newton_tol = T::lit(0.03);
    let mut k: Vec<DVector<T>> = vec![DVector::zeros(n); STAGES];
    let mut fz = DVector::zeros(n);
    let mut last_rejected = false;

    while t < t_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::Integrator(format!("maximum step count {} reached at t = {}", opts.max_steps, t.as_f64())));
        }
        let remaining = t_end - t;
        if h >= remaining || h * T::lit(1.05) >= remaining {
            h = remaining;
        }
        if h <= T::lit(1e-14) * (t.abs() + span) {
            return Ok(Solution { times, states, divergence: Some((t, Divergence::StepUnderflow)), stats });
        }
        let hg = h * gamma;
        let w = sys.iteration_matrix(t, &y, hg)?;
        stats.factorizations += 1;

        let mut newton_ok = true;
        let mut z = y.clone();
        for i in 0..STAGES {
            let mut base = y.clone();
            for j in 0..i {
                base.axpy(h * a[i][j], &k[j], T::one());
            }
            let guess = if i == 0 { &f } else { &k[i - 1] };
            z.copy_from(&base);
            z.axpy(hg, guess, T::one());
            let ti = t + c[i] * h;
            let mut prev = T::zero();
            let mut converged = false;
            for it in 0..8 {
                sys.rhs(ti, &z, &mut fz);
                stats.rhs_evals += 1;
                // g = base + hγ f(z) − z ; W Δ = g
                let mut delta = &base - &z;
                delta.axpy(hg, &fz, T::one());
                w.solve_in_place(&mut delta);
                let dn = weighted_rms(&delta, &y, &z, opts);
                z += &delta;
                if !dn.is_finite() {
                    break;
                }
                if dn <= newton_tol * T::lit(0.1) || (it > 0 && dn <= newton_tol && dn < prev) {
                    converged = true;
                    break;
                }
                if it > 0 && dn > prev * T::lit(0.9) && prev > T::zero() {
                    break;
                }
                prev = dn;
            }
            if !converged {
                newton_ok = false;
                break;
            }
            let mut ki = &z - &base;
            ki /= hg;
            k[i] = ki;
        }
        if !newton_ok {
            stats.newton_failures += 1;
            stats.rejected += 1;
            h *= T::lit(0.25);
            last_rejected = true;
            continue;
        }
        let mut err = DVector::zeros(n);
        for i in 0..STAGES {
            err.axpy(h * e[i], &k[i], T::one());
        }
        w.solve_in_place(&mut err);
        let en = weighted_rms(&err, &y, &z, opts);
        if !en.is_finite() || en > T::one() {
            stats.rejected += 1;
            let fac = if en.is_finite() {
                (T::lit(0.9) * en.powf(T::lit(-0.25))).max(T::lit(0.2))
            } else {
                T::lit(0.2)
            };
            h *= fac;
            last_rejected = true;
            continue;
        }
        stats.accepted += 1;
        let t_new = if h == remaining { t_end } else { t + h };
        let f_new = k[STAGES - 1].clone();
        while next_sample < sample_times.len() && sample_times[next_sample] <= t_new {
            let s = sample_times[next_sample];
            let ys = if s == t_new { z.clone() } else { hermite((s - t) / h, h, &y, &f, &z, &f_new) };
            times.push(s);
            states.push(ys);
            next_sample += 1;
        }
        t = t_new;
        y.copy_from(&z);
        f = f_new;
        if !(y.norm() <= blowup) {
            return Ok(Solution { times, states, divergence: Some((t, Divergence::BlowUp)), stats });
        }
        let mut fac = T::lit(0.9) * en.max(T::lit(1e-10)).powf(T::lit(-0.25));
        fac = fac.min(T::lit(5.0)).max(T::lit(0.2));
        if last_rejected {
            fac = fac.min(T::one());
        }
        last_rejected = false;
        h = (h * fac).min(h_max);
    }
    Ok(Solution { times, states, divergence: None, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tableau_order_conditions() {
        let b = A[4];
        for i in 0..STAGES {
            let row: f64 = A[i].iter().sum();
            assert!((row - C[i]).abs() < 1e-15);
            assert_eq!(A[i][i], GAMMA);
        }
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        let ac: Vec<f64> = (0..STAGES).map(|i| dot(&A[i], &C)).collect();
        let c2: Vec<f64> = C.iter().map(|c| c * c).collect();
        let ac2: Vec<f64> = (0..STAGES).map(|i| dot(&A[i], &c2)).collect();
        let aac: Vec<f64> = (0..STAGES).map(|i| dot(&A[i], &ac)).collect();
        let c3: Vec<f64> = C.iter().map(|c| c * c * c).collect();
        let cac: Vec<f64> = (0..STAGES).map(|i| C[i] * ac[i]).collect();
        let conds = [
            (b.iter().sum::<f64>(), 1.0),
            (dot(&b, &C), 0.5),
            (dot(&b, &c2), 1.0 / 3.0),
            (dot(&b, &ac), 1.0 / 6.0),
            (dot(&b, &c3), 0.25),
            (dot(&b, &cac), 0.125),
            (dot(&b, &ac2), 1.0 / 12.0),
            (dot(&b, &aac), 1.0 / 24.0),
        ];
        for (got, want) in conds {
            assert!((got - want).abs() < 1e-13, "{got} vs {want}");
        }
        // embedded method has order 3
        assert!((B_HAT.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((dot(&B_HAT, &C) - 0.5).abs() < 1e-14);
        assert!((dot(&B_HAT, &c2) - 1.0 / 3.0).abs() < 1e-14);
        assert!((dot(&B_HAT, &ac) - 1.0 / 6.0).abs() < 1e-14);
    }

    struct Linear {
        a: DMatrix<f64>,
    }

    impl OdeSystem<f64> for Linear {
        type Solver = DenseLu<f64>;
        fn dim(&self) -> usize {
            self.a.nrows()
        }
        fn rhs(&self, _t: f64, y: &DVector<f64>, out: &mut DVector<f64>) {
            out.gemv(1.0, &self.a, y, 0.0);
        }
        fn iteration_matrix(&self, _t: f64, _y: &DVector<f64>, hg: f64) -> Result<DenseLu<f64>> {
            DenseLu::new(DMatrix::identity(self.dim(), self.dim()) - &self.a * hg)
        }
    }

    #[test]
    fn stiff_linear_matches_expm() {
        let a = DMatrix::from_row_slice(3, 3, &[-1000.0, 1.0, 0.0, 0.0, -1.0, 2.0, 0.0, -2.0, -1.0]);
        let sys = Linear { a: a.clone() };
        let y0 = DVector::from_vec(vec![1.0, 1.0, 0.5]);
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.25).collect();
        let sol = integrate(&sys, &y0, &times, &IntegratorOptions::default()).unwrap();
        assert!(sol.divergence.is_none());
        assert_eq!(sol.times.len(), times.len());
        for (t, y) in sol.times.iter().zip(&sol.states) {
            let exact = crate::linalg::expm(&(&a * *t)).unwrap() * &y0;
            assert!((y - &exact).amax() < 1e-7, "t = {t}");
        }
        assert!(sol.stats.accepted < 1500, "{:?}", sol.stats);
    }

    struct Blow;
    impl OdeSystem<f64> for Blow {
        type Solver = DenseLu<f64>;
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &DVector<f64>, out: &mut DVector<f64>) {
            out[0] = y[0] * y[0];
        }
        fn iteration_matrix(&self, _t: f64, y: &DVector<f64>, hg: f64) -> Result<DenseLu<f64>> {
            DenseLu::new(DMatrix::from_element(1, 1, 1.0 - 2.0 * hg * y[0]))
        }
    }

    #[test]
    fn finite_time_blowup_is_flagged() {
        let times: Vec<f64> = (0..=40).map(|i| i as f64 * 0.05).collect();
        let sol = integrate(&Blow, &DVector::from_element(1, 1.0), &times, &IntegratorOptions::default()).unwrap();
        let (t, _) = sol.divergence.expect("must diverge");
        assert!(t < 1.0 + 1e-3 && t > 0.99);
        assert!(sol.times.last().unwrap() < &1.0);
    }

    #[test]
    fn logistic_accuracy() {
        struct Logistic;
        impl OdeSystem<f64> for Logistic {
            type Solver = DenseLu<f64>;
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, _t: f64, y: &DVector<f64>, out: &mut DVector<f64>) {
                out[0] = y[0] * (1.0 - y[0]);
            }
            fn iteration_matrix(&self, _t: f64, y: &DVector<f64>, hg: f64) -> Result<DenseLu<f64>> {
                DenseLu::new(DMatrix::from_element(1, 1, 1.0 - hg * (1.0 - 2.0 * y[0])))
            }
        }
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let sol = integrate(&Logistic, &DVector::from_element(1, 0.1), &times, &IntegratorOptions::default()).unwrap();
        for (t, y) in sol.times.iter().zip(&sol.states) {
            let exact = 1.0 / (1.0 + 9.0 * (-t).exp());
            assert!((y[0] - exact).abs() < 1e-7, "t = {t}: {} vs {exact}", y[0]);
        }
    }
}
