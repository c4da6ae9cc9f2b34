//! Band storage and LU factorization with partial pivoting.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square band matrix with `kl` sub- and `ku` super-diagonals, stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    // row i holds columns i-kl ..= i+ku at offsets 0..kl+ku+1
    data: Vec<T>,
}

impl<T: Real> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![T::zero(); n * (kl + ku + 1)],
        }
    }

    pub fn identity(n: usize, kl: usize, ku: usize) -> Self {
        let mut m = Self::zeros(n, kl, ku);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> usize {
        self.kl
    }

    pub fn upper(&self) -> usize {
        self.ku
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i < self.n && j < self.n && self.in_band(i, j) {
            self.data[self.offset(i, j)]
        } else {
            T::zero()
        }
    }

    /// Panics when `(i, j)` is outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let o = self.offset(i, j);
        self.data[o] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let o = self.offset(i, j);
        self.data[o] += v;
    }

    /// `self += alpha * other`, both with identical band shape.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        assert_eq!((self.n, self.kl, self.ku), (other.n, other.kl, other.ku));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * *b;
        }
    }

    pub fn scale(&mut self, alpha: T) {
        for a in self.data.iter_mut() {
            *a *= alpha;
        }
    }

    pub fn mul_vec(&self, x: &DVector<T>) -> DVector<T> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut s = T::zero();
            for j in lo..=hi {
                s += self.data[self.offset(i, j)] * x[j];
            }
            y[i] = s;
        }
        y
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, v| m.max(nalgebra::ComplexField::abs(*v)))
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<T> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }
}

/// LU factors of a band matrix, `P A = L U`, with U widened to `kl + ku` super-diagonals.
#[derive(Clone, Debug)]
pub struct BandLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    // row i holds columns i-kl ..= i+kl+ku
    u: Vec<T>,
    l: Vec<T>,
    piv: Vec<usize>,
    perturbed: usize,
}

impl<T: Real> BandLu<T> {
    /// Factors `a`, failing on an exactly zero pivot.
    pub fn new(a: &BandMatrix<T>) -> Result<Self> {
        Self::factor(a, None)
    }

    /// Factors `a`, replacing pivots smaller than `floor` in magnitude by `floor`.
    ///
    /// Used for shift-free inverse iteration on a singular matrix.
    pub fn new_regularized(a: &BandMatrix<T>, floor: T) -> Result<Self> {
        Self::factor(a, Some(floor))
    }

    fn factor(a: &BandMatrix<T>, floor: Option<T>) -> Result<Self> {
        let (n, kl, ku) = (a.n, a.kl, a.ku);
        let width = 2 * kl + ku + 1;
        let mut u = vec![T::zero(); n * width];
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(n.saturating_sub(1));
            for j in lo..=hi {
                u[i * width + (j + kl - i)] = a.get(i, j);
            }
        }
        let at = |i: usize, j: usize| i * width + (j + kl - i);
        let mut l = vec![T::zero(); n * kl.max(1)];
        let mut piv = vec![0usize; n];
        let mut perturbed = 0;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = nalgebra::ComplexField::abs(u[at(k, k)]);
            for i in k + 1..=last_row {
                let v = nalgebra::ComplexField::abs(u[at(i, k)]);
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    u.swap(at(k, j), at(p, j));
                }
            }
            let mut pivot = u[at(k, k)];
            match floor {
                Some(f) if nalgebra::ComplexField::abs(pivot) < f => {
                    pivot = if pivot < T::zero() { -f } else { f };
                    u[at(k, k)] = pivot;
                    perturbed += 1;
                }
                None if pivot == T::zero() => {
                    return Err(Error::Singular(format!("zero pivot in column {k}")));
                }
                _ => {}
            }
            for i in k + 1..=last_row {
                let m = u[at(i, k)] / pivot;
                l[k * kl + (i - k - 1)] = m;
                u[at(i, k)] = T::zero();
                if m != T::zero() {
                    for j in k + 1..=last_col {
                        let ukj = u[at(k, j)];
                        u[at(i, j)] -= m * ukj;
                    }
                }
            }
        }
        Ok(Self {
            n,
            kl,
            ku,
            width,
            u,
            l,
            piv,
            perturbed,
        })
    }

    /// Number of pivots replaced by the regularization floor.
    pub fn perturbed_pivots(&self) -> usize {
        self.perturbed
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let (n, kl, ku, w) = (self.n, self.kl, self.ku, self.width);
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            let last_row = (k + kl).min(n - 1);
            for i in k + 1..=last_row {
                b[i] -= self.l[k * kl + (i - k - 1)] * bk;
            }
        }
        for i in (0..n).rev() {
            let hi = (i + kl + ku).min(n - 1);
            let row = &self.u[i * w..(i + 1) * w];
            let mut s = b[i];
            for j in i + 1..=hi {
                s -= row[j + kl - i] * b[j];
            }
            b[i] = s / row[kl];
        }
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }
}
