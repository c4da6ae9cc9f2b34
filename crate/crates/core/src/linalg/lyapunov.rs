//! Dense Lyapunov and Sylvester solvers (Bartels-Stewart on a real Schur form).
//!
//! The triangular Sylvester stage is recursive: the larger dimension is split
//! at a block boundary, the coupling is removed with a matrix product, and
//! blocks of at most `BASE` rows and columns are finished by substitution.

use nalgebra::{ComplexField, DMatrix};

use crate::error::{Error, Result};
use crate::scalar::Real;

const BASE: usize = 48;

/// Cached real Schur form `A = U T Uᵀ` used for repeated Lyapunov solves.
#[derive(Clone, Debug)]
pub struct LyapunovSolver<T: Real> {
    u: DMatrix<T>,
    t: DMatrix<T>,
    // P Tᵀ P with P the reversal permutation, for the transposed equation
    s: DMatrix<T>,
    abscissa: T,
}

impl<T: Real> LyapunovSolver<T> {
    /// Computes the Schur form of `a`; fails when `a` is not Hurwitz.
    pub fn new(a: &DMatrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "Lyapunov operator must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let schur = nalgebra::linalg::Schur::try_new(a.clone(), T::eps(), 0).ok_or(
            Error::NoConvergence {
                what: "real Schur decomposition",
                iterations: 0,
                residual: f64::NAN,
            },
        )?;
        let (u, mut t) = schur.unpack();
        clean_subdiagonal(&mut t)?;
        let abscissa = quasi_triangular_abscissa(&t);
        if abscissa >= T::zero() || !abscissa.is_finite() {
            return Err(Error::NotHurwitz(abscissa.as_f64()));
        }
        let s = DMatrix::from_fn(n, n, |i, j| t[(n - 1 - j, n - 1 - i)]);
        Ok(Self { u, t, s, abscissa })
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    /// Largest real part of the eigenvalues of A.
    pub fn spectral_abscissa(&self) -> T {
        self.abscissa
    }

    /// Solves `A X + X Aᵀ + Q = 0`.
    pub fn solve(&self, q: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.check(q)?;
        let mut c = self.u.transpose() * q * &self.u;
        c.neg_mut();
        sylvester_quasi_triangular(&self.t, &self.t, &mut c)?;
        let x = &self.u * c * self.u.transpose();
        Ok(super::symmetrize(&x))
    }

    /// Solves `Aᵀ X + X A + Q = 0`.
    pub fn solve_transposed(&self, q: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.check(q)?;
        let n = self.dim();
        let c = self.u.transpose() * q * &self.u;
        // Tᵀ Z + Z T = -C  <=>  S W + W Sᵀ = -P C P with W = P Z P
        let mut w = DMatrix::from_fn(n, n, |i, j| -c[(n - 1 - i, n - 1 - j)]);
        sylvester_quasi_triangular(&self.s, &self.s, &mut w)?;
        let z = DMatrix::from_fn(n, n, |i, j| w[(n - 1 - i, n - 1 - j)]);
        let x = &self.u * z * self.u.transpose();
        Ok(super::symmetrize(&x))
    }

    fn check(&self, q: &DMatrix<T>) -> Result<()> {
        if q.nrows() != self.dim() || q.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side is {}x{}, operator is {}",
                q.nrows(),
                q.ncols(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Relative residual `‖A X + X Aᵀ + Q‖_F / ‖Q‖_F`.
pub fn lyapunov_residual<T: Real>(a: &DMatrix<T>, x: &DMatrix<T>, q: &DMatrix<T>) -> T {
    let ax = a * x;
    let r = &ax + ax.transpose() + q;
    let qn = q.norm();
    if qn == T::zero() {
        r.norm()
    } else {
        r.norm() / qn
    }
}

/// Solves `A X + X Aᵀ + Q = 0` for Hurwitz `A`, with one refinement step when
/// the first residual exceeds `1e-12`.
pub fn solve_lyapunov<T: Real>(a: &DMatrix<T>, q: &DMatrix<T>) -> Result<DMatrix<T>> {
    let solver = LyapunovSolver::new(a)?;
    let mut x = solver.solve(q)?;
    let res = lyapunov_residual(a, &x, q);
    if res > T::lit(1e-12) {
        let ax = a * &x;
        let r = &ax + ax.transpose() + q;
        x += solver.solve(&r)?;
    }
    Ok(x)
}

fn clean_subdiagonal<T: Real>(t: &mut DMatrix<T>) -> Result<()> {
    let n = t.nrows();
    for j in 0..n {
        for i in j + 2..n {
            t[(i, j)] = T::zero();
        }
    }
    for i in 1..n {
        let s = t[(i, i - 1)];
        if s != T::zero() {
            let scale = ComplexField::abs(t[(i, i)]) + ComplexField::abs(t[(i - 1, i - 1)]);
            if ComplexField::abs(s) <= T::eps() * scale {
                t[(i, i - 1)] = T::zero();
            }
        }
    }
    for i in 2..n {
        if t[(i, i - 1)] != T::zero() && t[(i - 1, i - 2)] != T::zero() {
            return Err(Error::NoConvergence {
                what: "real Schur decomposition (unreduced 3x3 block)",
                iterations: 0,
                residual: t[(i, i - 1)].as_f64(),
            });
        }
    }
    Ok(())
}

fn quasi_triangular_abscissa<T: Real>(t: &DMatrix<T>) -> T {
    let n = t.nrows();
    let mut best = T::min_value().unwrap_or(-T::max_value().unwrap());
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != T::zero() {
            let re = (t[(i, i)] + t[(i + 1, i + 1)]) * T::lit(0.5);
            let det = t[(i, i)] * t[(i + 1, i + 1)] - t[(i, i + 1)] * t[(i + 1, i)];
            let disc = re * re - det;
            let top = if disc > T::zero() { re + disc.sqrt() } else { re };
            best = best.max(top);
            i += 2;
        } else {
            best = best.max(t[(i, i)]);
            i += 1;
        }
    }
    best
}

/// Solves `A X + X Bᵀ = C` in place for upper quasi-triangular `A`, `B`.
pub fn sylvester_quasi_triangular<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &mut DMatrix<T>,
) -> Result<()> {
    let split_a = block_starts(a);
    let split_b = block_starts(b);
    let ctx = Tri {
        a,
        b,
        split_a: &split_a,
        split_b: &split_b,
    };
    let (m, n) = (c.nrows(), c.ncols());
    ctx.recurse(c, 0, m, 0, n)
}

fn block_starts<T: Real>(t: &DMatrix<T>) -> Vec<bool> {
    let n = t.nrows();
    (0..=n)
        .map(|i| i == 0 || i == n || t[(i, i - 1)] == T::zero())
        .collect()
}

struct Tri<'a, T: Real> {
    a: &'a DMatrix<T>,
    b: &'a DMatrix<T>,
    split_a: &'a [bool],
    split_b: &'a [bool],
}

fn middle(split: &[bool], lo: usize, hi: usize) -> usize {
    let mut mid = (lo + hi) / 2;
    if !split[mid] {
        mid += 1;
    }
    mid
}

impl<'a, T: Real> Tri<'a, T> {
    fn recurse(&self, x: &mut DMatrix<T>, r0: usize, r1: usize, c0: usize, c1: usize) -> Result<()> {
        let (m, n) = (r1 - r0, c1 - c0);
        if m == 0 || n == 0 {
            return Ok(());
        }
        if m > BASE && m >= n {
            let mid = middle(self.split_a, r0, r1);
            self.recurse(x, mid, r1, c0, c1)?;
            let x2 = x.view((mid, c0), (r1 - mid, n)).clone_owned();
            let a12 = self.a.view((r0, mid), (mid - r0, r1 - mid));
            x.view_mut((r0, c0), (mid - r0, n))
                .gemm(-T::one(), &a12, &x2, T::one());
            self.recurse(x, r0, mid, c0, c1)
        } else if n > BASE {
            let mid = middle(self.split_b, c0, c1);
            self.recurse(x, r0, r1, mid, c1)?;
            let x2 = x.view((r0, mid), (m, c1 - mid)).clone_owned();
            let b12 = self.b.view((c0, mid), (mid - c0, c1 - mid));
            x.view_mut((r0, c0), (m, mid - c0))
                .gemm(-T::one(), &x2, &b12.transpose(), T::one());
            self.recurse(x, r0, r1, c0, mid)
        } else {
            self.base(x, r0, r1, c0, c1)
        }
    }

    fn base(&self, x: &mut DMatrix<T>, r0: usize, r1: usize, c0: usize, c1: usize) -> Result<()> {
        let (a, b) = (self.a, self.b);
        let lda = a.nrows();
        let ldx = x.nrows();
        let a_data = a.as_slice();
        let xs = x.as_mut_slice();
        let mut jend = c1;
        while jend > c0 {
            let q = if jend - 1 > c0 && !self.split_b[jend - 1] { 2 } else { 1 };
            let j = jend - q;
            let mut iend = r1;
            while iend > r0 {
                let p = if iend - 1 > r0 && !self.split_a[iend - 1] { 2 } else { 1 };
                let i = iend - p;
                if p == 1 && q == 1 {
                    let d = a_data[i * lda + i] + b[(j, j)];
                    if d == T::zero() {
                        return Err(Error::Singular("Sylvester operator has a zero eigenvalue".into()));
                    }
                    xs[j * ldx + i] /= d;
                } else {
                    let mut rhs = [T::zero(); 4];
                    let mut mat = [T::zero(); 16];
                    for jj in 0..q {
                        for ii in 0..p {
                            let row = ii + p * jj;
                            rhs[row] = xs[(j + jj) * ldx + i + ii];
                            for l in 0..p {
                                mat[row * 4 + (l + p * jj)] += a_data[(i + l) * lda + i + ii];
                            }
                            for mm in 0..q {
                                mat[row * 4 + (ii + p * mm)] += b[(j + jj, j + mm)];
                            }
                        }
                    }
                    solve_small(p * q, &mut mat, &mut rhs)?;
                    for jj in 0..q {
                        for ii in 0..p {
                            xs[(j + jj) * ldx + i + ii] = rhs[ii + p * jj];
                        }
                    }
                }
                // rows above: x[r0..i, col] -= A[r0..i, i..iend] * x[i..iend, col]
                for jj in j..jend {
                    for ii in i..iend {
                        let v = xs[jj * ldx + ii];
                        if v != T::zero() {
                            let acol = &a_data[ii * lda + r0..ii * lda + i];
                            let xcol = &mut xs[jj * ldx + r0..jj * ldx + i];
                            for (xe, ae) in xcol.iter_mut().zip(acol) {
                                *xe -= *ae * v;
                            }
                        }
                    }
                }
                iend = i;
            }
            // columns to the left: x[:, kk] -= x[:, j..jend] * B[kk, j..jend]ᵀ
            for jj in j..jend {
                let (left, right) = xs.split_at_mut(j * ldx);
                let src = &right[(jj - j) * ldx + r0..(jj - j) * ldx + r1];
                for kk in c0..j {
                    let bkj = b[(kk, jj)];
                    if bkj != T::zero() {
                        let dst = &mut left[kk * ldx + r0..kk * ldx + r1];
                        for (de, se) in dst.iter_mut().zip(src) {
                            *de -= *se * bkj;
                        }
                    }
                }
            }
            jend = j;
        }
        Ok(())
    }
}

/// Gaussian elimination with partial pivoting on a row-major 4-stride block.
fn solve_small<T: Real>(n: usize, m: &mut [T; 16], rhs: &mut [T; 4]) -> Result<()> {
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if ComplexField::abs(m[i * 4 + k]) > ComplexField::abs(m[p * 4 + k]) {
                p = i;
            }
        }
        if m[p * 4 + k] == T::zero() {
            return Err(Error::Singular("Sylvester operator is singular".into()));
        }
        if p != k {
            for j in 0..n {
                m.swap(k * 4 + j, p * 4 + j);
            }
            rhs.swap(k, p);
        }
        for i in k + 1..n {
            let f = m[i * 4 + k] / m[k * 4 + k];
            for j in k..n {
                let v = m[k * 4 + j];
                m[i * 4 + j] -= f * v;
            }
            let v = rhs[k];
            rhs[i] -= f * v;
        }
    }
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for j in i + 1..n {
            s -= m[i * 4 + j] * rhs[j];
        }
        rhs[i] = s / m[i * 4 + i];
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_stable(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let shift = m.clone().complex_eigenvalues().iter().map(|z| z.re).fold(f64::MIN, f64::max);
        m - DMatrix::identity(n, n) * (shift + 0.5)
    }

    #[test]
    fn scalar_and_diagonal() {
        let x = solve_lyapunov(&DMatrix::from_element(1, 1, -1.0), &DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -2.0]));
        let x = solve_lyapunov(&a, &DMatrix::identity(2, 2)).unwrap();
        assert!((x[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((x[(1, 1)] - 0.25).abs() < 1e-15);
        assert!(x[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn random_residuals() {
        for (n, seed) in [(5, 1), (13, 2), (60, 3), (150, 4)] {
            let a = random_stable(n, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let g = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
            let q = &g * g.transpose();
            let x = solve_lyapunov(&a, &q).unwrap();
            assert!(lyapunov_residual(&a, &x, &q) <= 1e-10, "n={n}");
            let solver = LyapunovSolver::new(&a).unwrap();
            let y = solver.solve_transposed(&q).unwrap();
            assert!(lyapunov_residual(&a.transpose(), &y, &q) <= 1e-10, "n={n}");
        }
    }

    #[test]
    fn rectangular_sylvester() {
        let a = random_stable(70, 7);
        let b = random_stable(55, 8);
        let sa = nalgebra::linalg::Schur::new(a).unpack().1;
        let sb = nalgebra::linalg::Schur::new(b).unpack().1;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = DMatrix::from_fn(70, 55, |_, _| rng.gen_range(-1.0..1.0));
        let mut x = c.clone();
        let mut ta = sa.clone();
        let mut tb = sb.clone();
        clean_subdiagonal(&mut ta).unwrap();
        clean_subdiagonal(&mut tb).unwrap();
        sylvester_quasi_triangular(&ta, &tb, &mut x).unwrap();
        let r = &ta * &x + &x * tb.transpose() - &c;
        assert!(r.norm() <= 1e-11 * c.norm());
    }

    #[test]
    fn rejects_unstable() {
        let a = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 0.0, -1.0]);
        assert!(matches!(LyapunovSolver::new(&a), Err(Error::NotHurwitz(_))));
    }
}
