//! Dense multilinear forms and the feedback-tensor recursion.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub mod quadrature;
pub mod rhs;
pub mod solve;

pub use quadrature::{build_quadrature, QuadratureRule};
pub use rhs::{assemble_rhs, RhsTerms};
pub use solve::{feedback_tensors, gen_lyapunov_apply, solve_gen_lyapunov, solve_gen_lyapunov_direct, DIRECT_SIZE_GUARD};

/// Order-`k` form on `ℝ^r`, stored as a full row-major `r^k` array
/// (the last index runs fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Real> {
    order: usize,
    dim: usize,
    data: Vec<T>,
}

pub type SymmetricTensor<T> = Tensor<T>;
pub type RhsTensor<T> = Tensor<T>;

fn checked_len(dim: usize, order: usize) -> Result<usize> {
    let mut len = 1usize;
    for _ in 0..order {
        len = len.checked_mul(dim).ok_or_else(|| Error::SizeGuard {
            what: "tensor",
            size: usize::MAX,
            limit: usize::MAX,
        })?;
    }
    Ok(len)
}

impl<T: Real> Tensor<T> {
    pub fn zeros(order: usize, dim: usize) -> Self {
        let len = checked_len(dim, order).expect("tensor size overflows usize");
        Self { order, dim, data: vec![T::zero(); len] }
    }

    pub fn from_vec(order: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != checked_len(dim, order)? {
            return Err(Error::DimensionMismatch(format!(
                "tensor of order {order} and dimension {dim} needs {} entries, got {}",
                dim.pow(order as u32),
                data.len()
            )));
        }
        Ok(Self { order, dim, data })
    }

    pub fn from_vector(v: &DVector<T>) -> Self {
        Self { order: 1, dim: v.len(), data: v.iter().copied().collect() }
    }

    pub fn from_matrix(m: &DMatrix<T>) -> Self {
        let r = m.nrows();
        assert_eq!(r, m.ncols(), "order-2 tensors need a square matrix");
        let mut data = Vec::with_capacity(r * r);
        for i in 0..r {
            for j in 0..r {
                data.push(m[(i, j)]);
            }
        }
        Self { order: 2, dim: r, data }
    }

    pub fn to_matrix(&self) -> DMatrix<T> {
        assert_eq!(self.order, 2);
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order);
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: T) {
        let f = self.flat_index(idx);
        self.data[f] = v;
    }

    /// Digits of a flat index, most significant first.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.order];
        for slot in (0..self.order).rev() {
            idx[slot] = flat % self.dim;
            flat /= self.dim;
        }
        idx
    }

    fn stride(&self, slot: usize) -> usize {
        self.dim.pow((self.order - 1 - slot) as u32)
    }

    pub fn norm(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, v| acc + *v * *v).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn scale_mut(&mut self, alpha: T) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }

    pub fn scaled(mut self, alpha: T) -> Self {
        self.scale_mut(alpha);
        self
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: T, other: &Tensor<T>) {
        assert_eq!((self.order, self.dim), (other.order, other.dim), "tensor shapes differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * *b;
        }
    }

    /// Relative max-norm distance `max|a − b| / max(max|b|, tiny)`.
    pub fn rel_max_diff(&self, other: &Tensor<T>) -> T {
        let scale = other.max_abs().max(T::lit(f64::MIN_POSITIVE));
        let diff = self.data.iter().zip(&other.data).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        diff / scale
    }

    /// Apply `m` along `slot`: `out[.., a, ..] = Σ_b m[a, b] self[.., b, ..]`.
    pub fn mode_product(&self, m: &DMatrix<T>, slot: usize) -> Tensor<T> {
        let mut out = Tensor { order: self.order, dim: self.dim, data: vec![T::zero(); self.data.len()] };
        let mt = m.transpose();
        self.mode_product_into(&mt, slot, &mut out);
        out
    }

    /// Same as `mode_product` with the transpose of the matrix already formed.
    pub(crate) fn mode_product_into(&self, mt: &DMatrix<T>, slot: usize, out: &mut Tensor<T>) {
        let r = self.dim;
        assert!(slot < self.order && mt.nrows() == r && mt.ncols() == r);
        let post = self.stride(slot);
        let block = post * r;
        for (src, dst) in self.data.chunks_exact(block).zip(out.data.chunks_exact_mut(block)) {
            // a row-major r × post block is a column-major post × r matrix
            let x = DMatrixView::from_slice(src, post, r);
            let mut y = DMatrixViewMut::from_slice(dst, post, r);
            y.gemm(T::one(), &x, mt, T::zero());
        }
    }

    /// Apply `m` along every slot.
    pub fn mode_product_all(&self, m: &DMatrix<T>) -> Tensor<T> {
        let mt = m.transpose();
        let mut cur = self.clone();
        let mut next = Tensor { order: self.order, dim: self.dim, data: vec![T::zero(); self.data.len()] };
        for slot in 0..self.order {
            cur.mode_product_into(&mt, slot, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// `T(v, ·, …, ·)`, an order `k − 1` tensor.
    pub fn contract_first(&self, v: &DVector<T>) -> Tensor<T> {
        assert!(self.order >= 1 && v.len() == self.dim);
        let post = self.data.len() / self.dim;
        let x = DMatrixView::from_slice(&self.data, post, self.dim);
        let out = x * v;
        Tensor { order: self.order - 1, dim: self.dim, data: out.as_slice().to_vec() }
    }

    /// `T(·, …, ·, v)`, an order `k − 1` tensor.
    pub fn contract_last(&self, v: &DVector<T>) -> Tensor<T> {
        assert!(self.order >= 1 && v.len() == self.dim);
        let pre = self.data.len() / self.dim;
        let z = DMatrixView::from_slice(&self.data, self.dim, pre);
        let out = z.tr_mul(v);
        Tensor { order: self.order - 1, dim: self.dim, data: out.as_slice().to_vec() }
    }

    /// Contract the trailing `times` slots with the same vector.
    pub fn contract_last_repeated(&self, v: &DVector<T>, times: usize) -> Tensor<T> {
        assert!(times <= self.order);
        let mut data = self.data.clone();
        let mut len = data.len();
        for _ in 0..times {
            let pre = len / self.dim;
            let out = DMatrixView::from_slice(&data[..len], self.dim, pre).tr_mul(v);
            data[..pre].copy_from_slice(out.as_slice());
            len = pre;
        }
        data.truncate(len);
        Tensor { order: self.order - times, dim: self.dim, data }
    }

    /// Multilinear evaluation `T(z_1, …, z_k)`.
    pub fn eval(&self, zs: &[&DVector<T>]) -> T {
        assert_eq!(zs.len(), self.order);
        if self.order == 0 {
            return self.data[0];
        }
        let mut cur = self.contract_last(zs[self.order - 1]);
        for z in zs[..self.order - 1].iter().rev() {
            cur = cur.contract_last(z);
        }
        cur.data[0]
    }

    /// `T(y, …, y)`.
    pub fn eval_diagonal(&self, y: &DVector<T>) -> T {
        self.contract_last_repeated(y, self.order).data.first().copied().unwrap_or(T::zero())
    }

    pub fn as_vector(&self) -> DVectorView<'_, T> {
        DVectorView::from_slice(&self.data, self.data.len())
    }

    /// Exchange two slots.
    pub fn swap_slots(&self, a: usize, b: usize) -> Tensor<T> {
        if a == b {
            return self.clone();
        }
        let (sa, sb) = (self.stride(a), self.stride(b));
        let r = self.dim;
        let mut out = vec![T::zero(); self.data.len()];
        for (idx, o) in out.iter_mut().enumerate() {
            let da = (idx / sa) % r;
            let db = (idx / sb) % r;
            let src = idx + db * sa + da * sb - da * sa - db * sb;
            *o = self.data[src];
        }
        Tensor { order: self.order, dim: self.dim, data: out }
    }

    /// Average over all `k!` slot permutations, built up one slot at a time:
    /// a form symmetric in its first `m − 1` slots is averaged over the `m`
    /// transpositions `(j m)`.
    pub fn symmetrize(&self) -> Tensor<T> {
        let mut cur = self.clone();
        for m in 2..=self.order {
            let mut acc = cur.clone();
            for j in 0..m - 1 {
                acc.axpy(T::one(), &cur.swap_slots(j, m - 1));
            }
            acc.scale_mut(T::one() / T::from_count(m));
            cur = acc;
        }
        cur
    }

    /// Largest `|T(σ idx) − T(idx)|` over adjacent transpositions, relative to `max|T|`.
    pub fn symmetry_defect(&self) -> T {
        if self.max_abs() == T::zero() {
            return T::zero();
        }
        (0..self.order.saturating_sub(1))
            .map(|s| self.swap_slots(s, s + 1).rel_max_diff(self))
            .fold(T::zero(), |a, b| a.max(b))
    }
}

/// All `size`-element subsets of `0..n`, as sorted position lists, in lexicographic order.
pub fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for p in start..n {
            if n - p < size - cur.len() {
                break;
            }
            cur.push(p);
            rec(p + 1, n, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, size, &mut Vec::with_capacity(size), &mut out);
    out
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// `Sym_{i,j}(S ⊗ T)`: the average of `S(z_P) T(z_{P^c})` over all position
/// sets `P` of size `i`, each side keeping the original argument order.
pub fn sym_product<T: Real>(s: &Tensor<T>, t: &Tensor<T>) -> Result<Tensor<T>> {
    if s.dim != t.dim {
        return Err(Error::DimensionMismatch(format!("sym_product of dimensions {} and {}", s.dim, t.dim)));
    }
    let (i, j, r) = (s.order, t.order, s.dim);
    let k = i + j;
    let mut out = Tensor::zeros(k, r);
    let sets = subsets(k, i);
    // per subset, the weight of each position's digit in the S and T indices
    let weights: Vec<(Vec<usize>, Vec<usize>)> = sets
        .iter()
        .map(|set| {
            let mut ws = vec![0; k];
            let mut wt = vec![0; k];
            let (mut rs, mut rt) = (0, 0);
            for p in 0..k {
                if set.contains(&p) {
                    rs += 1;
                    ws[p] = r.pow((i - rs) as u32);
                } else {
                    rt += 1;
                    wt[p] = r.pow((j - rt) as u32);
                }
            }
            (ws, wt)
        })
        .collect();
    let norm = T::one() / T::from_count(sets.len());
    let mut digits = vec![0usize; k];
    for flat in 0..out.data.len() {
        let mut rest = flat;
        for p in (0..k).rev() {
            digits[p] = rest % r;
            rest /= r;
        }
        let mut acc = T::zero();
        for (ws, wt) in &weights {
            let mut si = 0;
            let mut ti = 0;
            for p in 0..k {
                si += digits[p] * ws[p];
                ti += digits[p] * wt[p];
            }
            acc += s.data[si] * t.data[ti];
        }
        out.data[flat] = acc * norm;
    }
    Ok(out)
}

/// `u ⊗ v ⊗ …` for vectors.
pub fn outer<T: Real>(vs: &[&DVector<T>]) -> Tensor<T> {
    let r = vs[0].len();
    let mut cur = Tensor { order: 0, dim: r, data: vec![T::one()] };
    for v in vs {
        let mut data = Vec::with_capacity(cur.data.len() * r);
        for a in &cur.data {
            for b in v.iter() {
                data.push(*a * *b);
            }
        }
        cur = Tensor { order: cur.order + 1, dim: r, data };
    }
    cur
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_tensor(order: usize, dim: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dim.pow(order as u32);
        Tensor::from_vec(order, dim, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_vec(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn layout_is_row_major() {
        let t = Tensor::from_vec(3, 2, (0..8).map(|v| v as f64).collect()).unwrap();
        assert_eq!(t.get(&[1, 0, 1]), 5.0);
        assert_eq!(t.multi_index(6), vec![1, 1, 0]);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(Tensor::from_matrix(&m).to_matrix(), m);
        assert!(Tensor::<f64>::from_vec(2, 3, vec![0.0; 8]).is_err());
    }

    #[test]
    fn mode_product_matches_loops() {
        let t = random_tensor(3, 3, 1);
        let m = DMatrix::from_fn(3, 3, |i, j| (i as f64) - 2.0 * (j as f64) + 0.5);
        for slot in 0..3 {
            let out = t.mode_product(&m, slot);
            for flat in 0..27 {
                let idx = t.multi_index(flat);
                let mut want = 0.0;
                for b in 0..3 {
                    let mut src = idx.clone();
                    src[slot] = b;
                    want += m[(idx[slot], b)] * t.get(&src);
                }
                assert!((out.get(&idx) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn evaluation_and_contractions_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_tensor(4, 3, 3);
        let zs: Vec<_> = (0..4).map(|_| random_vec(3, &mut rng)).collect();
        let refs: Vec<_> = zs.iter().collect();
        let mut brute = 0.0;
        for flat in 0..81 {
            let idx = t.multi_index(flat);
            brute += t.get(&idx) * (0..4).map(|s| zs[s][idx[s]]).product::<f64>();
        }
        assert!((t.eval(&refs) - brute).abs() < 1e-12);
        let first = t.contract_first(&zs[0]);
        assert!((first.eval(&[&zs[1], &zs[2], &zs[3]]) - brute).abs() < 1e-12);
        let y = &zs[0];
        let d = t.contract_last_repeated(y, 2);
        assert!((d.eval(&[y, y]) - t.eval_diagonal(y)).abs() < 1e-12);
    }

    #[test]
    fn sym_product_two_vectors() {
        let u = Tensor::from_vector(&DVector::from_vec(vec![1.0, 2.0]));
        let v = Tensor::from_vector(&DVector::from_vec(vec![3.0, -1.0]));
        let s = sym_product(&u, &v).unwrap().to_matrix();
        let (uu, vv) = (DVector::from_vec(vec![1.0, 2.0]), DVector::from_vec(vec![3.0, -1.0]));
        let want = (&uu * vv.transpose() + &vv * uu.transpose()) * 0.5;
        assert!((s - want).amax() < 1e-15);
    }

    #[test]
    fn sym_product_vector_and_symmetric_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_vec(3, &mut rng);
        let w = random_tensor(2, 3, 5).symmetrize();
        let s = sym_product(&Tensor::from_vector(&u), &w).unwrap();
        for flat in 0..27 {
            let [a, b, c] = <[usize; 3]>::try_from(s.multi_index(flat)).unwrap();
            let want = (u[a] * w.get(&[b, c]) + u[b] * w.get(&[a, c]) + u[c] * w.get(&[a, b])) / 3.0;
            assert!((s.get(&[a, b, c]) - want).abs() < 1e-14);
        }
        assert!(s.symmetry_defect() < 1e-14);
    }

    #[test]
    fn sym_product_of_matrices_is_shuffle_invariant() {
        let p = random_tensor(2, 3, 6).symmetrize();
        let s = sym_product(&p, &p).unwrap();
        assert!(s.symmetry_defect() < 1e-14);
        let q = random_tensor(2, 3, 7);
        let raw = sym_product(&q, &random_tensor(2, 3, 8)).unwrap();
        // unsymmetric factors: averaging over shuffles only
        let full = raw.symmetrize();
        assert!(full.symmetry_defect() < 1e-14);
        assert_eq!(subsets(4, 2).len(), 6);
    }

    #[test]
    fn symmetrize_matches_permutation_average() {
        let t = random_tensor(4, 2, 9);
        let s = t.symmetrize();
        let perms = permutations(4);
        assert_eq!(perms.len(), 24);
        for flat in 0..16 {
            let idx = t.multi_index(flat);
            let avg = perms
                .iter()
                .map(|p| t.get(&p.iter().map(|&q| idx[q]).collect::<Vec<_>>()))
                .sum::<f64>()
                / 24.0;
            assert!((s.get(&idx) - avg).abs() < 1e-14);
        }
    }

    #[test]
    fn binomials_and_outer() {
        assert_eq!(binomial(7, 3), 35);
        assert_eq!(binomial(4, 5), 0);
        let u = DVector::from_vec(vec![1.0, 2.0]);
        let o = outer(&[&u, &u]);
        assert_eq!(o.as_slice(), &[1.0, 2.0, 2.0, 4.0]);
    }
}
