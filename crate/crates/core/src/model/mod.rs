//! Finite-difference bilinear model of the controlled Fokker-Planck equation
//! on a box with reflecting walls.
//!
//! Cell-centered grid, natural ordering (first axis fastest). The generator
//! `A*φ = νΔφ − ∇G·∇φ` is discretized with upwind advection decided per face;
//! `A` is its transpose, so columns of `A` sum to zero. The control operators
//! are in flux form `(F_{i+½} − F_{i−½})/h` with `F = ρ̄ ∂α/∂x` at interior faces.

pub mod initial;
pub mod potential;

pub use initial::InitialCondition;
pub use potential::{GroundTerm, PotentialSpec, ShapeFunction};

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};
use crate::linalg::{BandLu, BandMatrix};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Axis<T> {
    pub lo: T,
    pub hi: T,
    pub count: usize,
    pub h: T,
}

impl<T: Real> Axis<T> {
    pub fn center(&self, i: usize) -> T {
        self.lo + (T::from_count(i) + T::lit(0.5)) * self.h
    }

    /// Coordinate of the face between cells `i` and `i + 1`.
    pub fn face(&self, i: usize) -> T {
        self.lo + T::from_count(i + 1) * self.h
    }
}

/// Cell-centered tensor grid in one or two dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    pub axes: Vec<Axis<T>>,
    pub hbar: T,
}

impl<T: Real> Grid<T> {
    pub fn new(bounds: &[(T, T)], counts: &[usize]) -> Result<Self> {
        if bounds.len() != counts.len() || !(1..=2).contains(&bounds.len()) {
            return Err(Error::InvalidArgument(format!(
                "grid needs 1 or 2 axes with matching bounds and counts, got {} and {}",
                bounds.len(),
                counts.len()
            )));
        }
        let mut axes = Vec::new();
        let mut hbar = T::one();
        for (&(lo, hi), &count) in bounds.iter().zip(counts) {
            if count < 3 {
                return Err(Error::InvalidArgument(format!("cell count must be at least 3, got {count}")));
            }
            if !(hi > lo) {
                return Err(Error::InvalidArgument(format!("degenerate interval [{}, {}]", lo.as_f64(), hi.as_f64())));
            }
            let h = (hi - lo) / T::from_count(count);
            hbar *= h;
            axes.push(Axis { lo, hi, count, h });
        }
        Ok(Self { axes, hbar })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn n(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    /// Distance in the linear index between neighbors along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.axes[..axis].iter().map(|a| a.count).product()
    }

    pub fn bandwidth(&self) -> usize {
        self.stride(self.dim() - 1)
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        let n0 = self.axes[0].count;
        [idx % n0, idx / n0]
    }

    pub fn point(&self, idx: usize) -> Vec<T> {
        let mi = self.multi_index(idx);
        self.axes.iter().enumerate().map(|(k, a)| a.center(mi[k])).collect()
    }

    pub fn points(&self) -> Vec<Vec<T>> {
        (0..self.n()).map(|i| self.point(i)).collect()
    }

    /// Volume of the domain.
    pub fn measure(&self) -> T {
        self.axes.iter().fold(T::one(), |m, a| m * (a.hi - a.lo))
    }

    /// Discrete L² norm `sqrt(h̄ Σ v_i²)`.
    pub fn l2_norm(&self, v: &DVector<T>) -> T {
        (self.hbar * v.norm_squared()).sqrt()
    }

    /// Discrete integral `h̄ Σ v_i`.
    pub fn integral(&self, v: &DVector<T>) -> T {
        self.hbar * v.sum()
    }
}

/// Discretized plant `ẏ = A y + Σ_j u_j (N_j y + B_j)` around the stationary density.
#[derive(Clone, Debug)]
pub struct BilinearModel<T: Real> {
    pub grid: Grid<T>,
    pub nu: T,
    pub a: CsrMatrix<T>,
    pub n_ops: Vec<CsrMatrix<T>>,
    pub b: DMatrix<T>,
    pub rho_inf: DVector<T>,
    pub a_band: BandMatrix<T>,
    pub n_band: Vec<BandMatrix<T>>,
}

impl<T: Real> BilinearModel<T> {
    pub fn n(&self) -> usize {
        self.rho_inf.len()
    }

    pub fn m(&self) -> usize {
        self.n_ops.len()
    }

    pub fn a_dense(&self) -> DMatrix<T> {
        self.a_band.to_dense()
    }

    pub fn n_dense(&self, j: usize) -> DMatrix<T> {
        self.n_band[j].to_dense()
    }

    /// `(A + Σ_j u_j N_j) y + B u`.
    pub fn rhs(&self, u: &[T], y: &DVector<T>) -> DVector<T> {
        let mut out = self.a_band.mul_vec(y);
        for (j, uj) in u.iter().enumerate() {
            if *uj != T::zero() {
                out.axpy(*uj, &self.n_band[j].mul_vec(y), T::one());
                out.axpy(*uj, &self.b.column(j), T::one());
            }
        }
        out
    }
}

/// Converts a band matrix to CSR, keeping only nonzero entries.
pub fn band_to_csr<T: Real>(m: &BandMatrix<T>) -> CsrMatrix<T> {
    let n = m.dim();
    let mut coo = CooMatrix::new(n, n);
    for i in 0..n {
        let lo = i.saturating_sub(m.lower());
        let hi = (i + m.upper()).min(n - 1);
        for j in lo..=hi {
            let v = m.get(i, j);
            if v != T::zero() {
                coo.push(i, j, v);
            }
        }
    }
    CsrMatrix::from(&coo)
}

/// Converts a CSR matrix to band storage with the smallest enclosing band.
pub fn csr_to_band<T: Real>(m: &CsrMatrix<T>) -> BandMatrix<T> {
    let n = m.nrows();
    let (mut kl, mut ku) = (0, 0);
    for (i, j, _) in m.triplet_iter() {
        if i > j {
            kl = kl.max(i - j);
        } else {
            ku = ku.max(j - i);
        }
    }
    let mut b = BandMatrix::zeros(n, kl, ku);
    for (i, j, v) in m.triplet_iter() {
        b.add(i, j, *v);
    }
    b
}

fn coords<T: Real>(p: &[T]) -> Vec<f64> {
    p.iter().map(|v| v.as_f64()).collect()
}

/// Assembles `A`, `N_j`, `B` and the stationary density.
pub fn assemble_model<T: Real>(grid: &Grid<T>, pot: &PotentialSpec, nu: T) -> Result<BilinearModel<T>> {
    pot.validate()?;
    if pot.dim != grid.dim() {
        return Err(Error::DimensionMismatch(format!(
            "potential has dimension {}, grid {}",
            pot.dim,
            grid.dim()
        )));
    }
    if !(nu > T::zero()) {
        return Err(Error::InvalidArgument("diffusion coefficient must be positive".into()));
    }
    check_shape_walls(grid, pot)?;
    let n = grid.n();
    let bw = grid.bandwidth();
    let mut a = BandMatrix::zeros(n, bw, bw);
    let mut n_band: Vec<BandMatrix<T>> = (0..pot.controls()).map(|_| BandMatrix::zeros(n, bw, bw)).collect();
    let half = T::lit(0.5);

    for idx in 0..n {
        let mi = grid.multi_index(idx);
        let centre = grid.point(idx);
        for (ax, axis) in grid.axes.iter().enumerate() {
            let i = mi[ax];
            if i + 1 == axis.count {
                continue;
            }
            // face between idx and its upper neighbor along `ax`
            let nb = idx + grid.stride(ax);
            let mut face = centre.clone();
            face[ax] = axis.face(i);
            let fx = coords(&face);
            let drift = -T::lit(pot.ground_partial(&fx, ax));
            let diff = nu / (axis.h * axis.h);
            let up = diff + drift.max(T::zero()) / axis.h;
            let down = diff + (-drift).max(T::zero()) / axis.h;
            // generator rates idx -> nb and nb -> idx, stored transposed
            a.add(nb, idx, up);
            a.add(idx, idx, -up);
            a.add(idx, nb, down);
            a.add(nb, nb, -down);
            for (j, nj) in n_band.iter_mut().enumerate() {
                let w = T::lit(pot.shape_partial(j, &fx, ax)) * half / axis.h;
                if w != T::zero() {
                    nj.add(idx, idx, w);
                    nj.add(idx, nb, w);
                    nj.add(nb, idx, -w);
                    nj.add(nb, nb, -w);
                }
            }
        }
    }
    let a_csr = band_to_csr(&a);
    let rho_inf = stationary_density_band(&a, grid.hbar)?;
    let mut b = DMatrix::zeros(n, n_band.len());
    for (j, nj) in n_band.iter().enumerate() {
        b.set_column(j, &nj.mul_vec(&rho_inf));
    }
    Ok(BilinearModel {
        grid: grid.clone(),
        nu,
        a: a_csr,
        n_ops: n_band.iter().map(band_to_csr).collect(),
        b,
        rho_inf,
        a_band: a,
        n_band,
    })
}

fn check_shape_walls<T: Real>(grid: &Grid<T>, pot: &PotentialSpec) -> Result<()> {
    for (j, s) in pot.shapes.iter().enumerate() {
        let ax = s.axis();
        let axis = &grid.axes[ax];
        for wall in [axis.lo, axis.hi] {
            let d = s.eval_1d(wall.as_f64()).1;
            if d.abs() > 1e-10 {
                return Err(Error::Config(format!(
                    "shape function {j} has normal derivative {d:e} at the wall x = {}",
                    wall.as_f64()
                )));
            }
        }
    }
    Ok(())
}

/// Null vector of `A` by inverse iteration, normalized to `h̄ 1ᵀρ = 1`.
pub fn stationary_density<T: Real>(a: &CsrMatrix<T>, hbar: T) -> Result<DVector<T>> {
    stationary_density_band(&csr_to_band(a), hbar)
}

const DENSITY_TOL: f64 = 1e-12;
const DENSITY_MAX_ITER: usize = 500;

fn stationary_density_band<T: Real>(a: &BandMatrix<T>, hbar: T) -> Result<DVector<T>> {
    let n = a.dim();
    let floor = T::eps() * a.max_abs();
    let lu = BandLu::new_regularized(a, floor)?;
    let normalize = |v: &mut DVector<T>| -> bool {
        let s = hbar * v.sum();
        if s == T::zero() || !s.is_finite() {
            return false;
        }
        *v /= s;
        true
    };
    let mut x = DVector::from_element(n, T::one());
    normalize(&mut x);
    let mut diff = T::max_value().unwrap();
    for _ in 0..DENSITY_MAX_ITER {
        let mut y = x.clone();
        lu.solve_in_place(y.as_mut_slice());
        if !normalize(&mut y) {
            return Err(Error::Singular("inverse iteration produced a zero-mass iterate".into()));
        }
        diff = (&y - &x).amax();
        x = y;
        if diff < T::lit(DENSITY_TOL) {
            for (index, v) in x.iter().enumerate() {
                if !(*v > T::zero()) {
                    return Err(Error::NonPositiveDensity { index, value: v.as_f64() });
                }
            }
            return Ok(x);
        }
    }
    Err(Error::NoConvergence {
        what: "inverse iteration for the stationary density",
        iterations: DENSITY_MAX_ITER,
        residual: diff.as_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(n: usize) -> (Grid<f64>, PotentialSpec) {
        let g = Grid::<f64>::new(&[(-6.0, 6.0)], &[n]).unwrap();
        let mut p = PotentialSpec::triple_well_1d();
        p.ground.clear();
        (g, p)
    }

    #[test]
    fn grid_examples() {
        let g = Grid::<f64>::new(&[(-6.0, 6.0)], &[100]).unwrap();
        assert!((g.axes[0].h - 0.12).abs() < 1e-15 && (g.hbar - 0.12).abs() < 1e-15);
        let g = Grid::<f64>::new(&[(-6.0, 6.0)], &[3]).unwrap();
        assert_eq!(g.points(), vec![vec![-4.0], vec![0.0], vec![4.0]]);
        let g = Grid::<f64>::new(&[(-6.0, 6.0), (-6.5, 5.5)], &[50, 50]).unwrap();
        assert_eq!(g.n(), 2500);
        assert!((g.hbar * 2500.0 - g.measure()).abs() < 1e-12);
        assert!(Grid::<f64>::new(&[(-1.0, 1.0)], &[2]).is_err());
        assert!(Grid::<f64>::new(&[(1.0, 1.0)], &[5]).is_err());
    }

    #[test]
    fn zero_potential_gives_symmetric_laplacian() {
        let (g, p) = flat(40);
        let m = assemble_model(&g, &p, 1.0).unwrap();
        let a = m.a_dense();
        assert_eq!(a, a.transpose());
        for v in m.rho_inf.iter() {
            assert!((v - 1.0 / 12.0).abs() < 1e-12);
        }
        assert!((a[(0, 0)] + 1.0 / (0.3 * 0.3)).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_kernel() {
        let mut coo = CooMatrix::<f64>::new(2, 2);
        coo.push(0, 0, -1.0);
        coo.push(0, 1, 1.0);
        coo.push(1, 0, 1.0);
        coo.push(1, 1, -1.0);
        let rho = stationary_density(&CsrMatrix::from(&coo), 1.0).unwrap();
        assert!((rho[0] - 0.5).abs() < 1e-15 && (rho[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mass_conservation_and_positivity_2d() {
        let g = Grid::<f64>::new(&[(-6.0, 6.0), (-6.5, 5.5)], &[12, 10]).unwrap();
        let m = assemble_model(&g, &PotentialSpec::four_well_2d(), 0.25).unwrap();
        let ones = DVector::from_element(g.n(), 1.0);
        let scale = m.a_band.max_abs();
        assert!((m.a_dense().transpose() * &ones).amax() <= 1e-12 * scale);
        for j in 0..2 {
            assert!((m.n_dense(j).transpose() * &ones).amax() == 0.0);
            assert!(m.b.column(j).sum().abs() < 1e-12);
        }
        assert!(m.rho_inf.iter().all(|v| *v > 0.0));
        assert!((g.integral(&m.rho_inf) - 1.0).abs() < 1e-12);
        assert!((m.a_dense() * &m.rho_inf).amax() < 1e-10 * scale);
    }

    #[test]
    fn triple_well_density_has_three_modes() {
        let g = Grid::<f64>::new(&[(-6.0, 6.0)], &[200]).unwrap();
        let m = assemble_model(&g, &PotentialSpec::triple_well_1d(), 1.0).unwrap();
        let r = &m.rho_inf;
        let peaks: Vec<usize> = (1..199).filter(|&i| r[i] > r[i - 1] && r[i] >= r[i + 1]).collect();
        assert_eq!(peaks.len(), 3, "{peaks:?}");
        let best = peaks.iter().copied().max_by(|a, b| r[*a].partial_cmp(&r[*b]).unwrap()).unwrap();
        assert!((g.point(best)[0] + 3.85).abs() < 0.1);
    }

    #[test]
    fn density_matches_dense_null_space() {
        let g = Grid::<f64>::new(&[(-6.0, 6.0)], &[100]).unwrap();
        let m = assemble_model(&g, &PotentialSpec::triple_well_1d(), 1.0).unwrap();
        let svd = m.a_dense().svd(false, true);
        let vt = svd.v_t.unwrap();
        let k = svd.singular_values.imin();
        let mut v: DVector<f64> = vt.row(k).transpose();
        v /= g.integral(&v);
        assert!((v - &m.rho_inf).amax() < 1e-8);
    }

    #[test]
    fn upwind_consistency_first_order() {
        // residual of A*φ against νφ'' − G'φ' for φ = cos(πx/6)
        let pot = PotentialSpec::triple_well_1d();
        let mut errs = Vec::new();
        for n in [100, 200, 400] {
            let g = Grid::<f64>::new(&[(-6.0, 6.0)], &[n]).unwrap();
            let m = assemble_model(&g, &pot, 1.0).unwrap();
            let k = std::f64::consts::PI / 6.0;
            let phi = DVector::from_fn(n, |i, _| (k * g.point(i)[0]).cos());
            let astar = m.a_dense().transpose();
            let lphi = astar * &phi;
            let exact = DVector::from_fn(n, |i, _| {
                let x = g.point(i)[0];
                -k * k * (k * x).cos() + pot.ground_partial(&[x], 0) * k * (k * x).sin()
            });
            let mut d = lphi - exact;
            d[0] = 0.0;
            d[n - 1] = 0.0;
            errs.push(g.l2_norm(&d));
        }
        assert!(errs[1] < 0.6 * errs[0] && errs[2] < 0.6 * errs[1], "{errs:?}");
    }

    #[test]
    fn deterministic_assembly() {
        let g = Grid::<f64>::new(&[(-6.0, 6.0)], &[50]).unwrap();
        let a = assemble_model(&g, &PotentialSpec::triple_well_1d(), 1.0).unwrap();
        let b = assemble_model(&g, &PotentialSpec::triple_well_1d(), 1.0).unwrap();
        assert_eq!(a.a_band, b.a_band);
        assert_eq!(a.rho_inf, b.rho_inf);
    }
}
