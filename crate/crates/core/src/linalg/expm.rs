//! Matrix exponential by scaling and squaring with diagonal Padé approximants.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

// 1-norm bounds below which the degree-m approximant is accurate to double precision
const THETA: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
    (13, 5.371920351148152e0),
];

fn pade_coefficients(m: usize) -> Vec<f64> {
    // c_j = (2m-j)! m! / ((2m)! j! (m-j)!), rescaled so that c_m = 1
    let mut c = vec![1.0f64; m + 1];
    for j in 1..=m {
        c[j] = c[j - 1] * ((m - j + 1) as f64) / ((j as f64) * ((2 * m - j + 1) as f64));
    }
    let last = c[m];
    c.iter().map(|v| v / last).collect()
}

fn norm1<T: Real>(a: &DMatrix<T>) -> T {
    a.column_iter()
        .map(|c| c.iter().fold(T::zero(), |s, v| s + nalgebra::ComplexField::abs(*v)))
        .fold(T::zero(), |m, v| m.max(v))
}

/// Computes `exp(a)`.
pub fn expm<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch("expm of a non-square matrix".into()));
    }
    let n = a.nrows();
    let id = DMatrix::<T>::identity(n, n);
    if n == 0 {
        return Ok(id);
    }
    let nrm = norm1(a).as_f64();
    if !nrm.is_finite() {
        return Err(Error::InvalidArgument("expm of a non-finite matrix".into()));
    }
    for &(m, theta) in &THETA[..4] {
        if nrm <= theta {
            return pade(a, m, &id);
        }
    }
    let theta13 = THETA[4].1;
    let s = if nrm > theta13 {
        (nrm / theta13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a * T::lit(0.5f64.powi(s));
    let mut r = pade(&scaled, 13, &id)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade<T: Real>(a: &DMatrix<T>, m: usize, id: &DMatrix<T>) -> Result<DMatrix<T>> {
    let b: Vec<T> = pade_coefficients(m).into_iter().map(T::lit).collect();
    let a2 = a * a;
    let (u, v) = if m == 13 {
        let a4 = &a2 * &a2;
        let a6 = &a4 * &a2;
        let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
            + &a6 * b[7]
            + &a4 * b[5]
            + &a2 * b[3]
            + id * b[1];
        let u = a * u_inner;
        let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
            + &a6 * b[6]
            + &a4 * b[4]
            + &a2 * b[2]
            + id * b[0];
        (u, v)
    } else {
        let mut pw = id.clone();
        let mut u_inner = id * b[1];
        let mut v = id * b[0];
        for k in 1..=m / 2 {
            pw = &pw * &a2;
            v += &pw * b[2 * k];
            if 2 * k < m {
                u_inner += &pw * b[2 * k + 1];
            }
        }
        (a * u_inner, v)
    };
    let p = &v + &u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::Singular("Padé denominator in expm".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients_match_known_table() {
        let b = pade_coefficients(13);
        let scale = 64764752532480000.0 / b[0];
        let known = [64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0, 129060195264000.0];
        for (k, v) in known.iter().enumerate() {
            assert!((b[k] * scale - v).abs() / v < 1e-14);
        }
        assert_eq!(pade_coefficients(3), vec![120.0, 60.0, 12.0, 1.0]);
    }

    #[test]
    fn diagonal_and_rotation() {
        for scale in [1e-3f64, 0.1, 0.8, 2.0, 4.0, 50.0] {
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-scale, 0.5 * scale, -2.0 * scale]));
            let e = expm(&d).unwrap();
            for i in 0..3 {
                let want = d[(i, i)].exp();
                assert!((e[(i, i)] - want).abs() <= 1e-13 * want.max(1.0), "{scale}");
            }
            let r = DMatrix::from_row_slice(2, 2, &[0.0, scale, -scale, 0.0]);
            let e = expm(&r).unwrap();
            assert!((e[(0, 0)] - scale.cos()).abs() < 1e-12 * scale.max(1.0));
            assert!((e[(0, 1)] - scale.sin()).abs() < 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn jordan_block() {
        let a = DMatrix::from_row_slice(2, 2, &[-3.0, 1.0, 0.0, -3.0]);
        let e = expm(&(a * 2.0)).unwrap();
        let w = (-6.0f64).exp();
        assert!((e[(0, 0)] - w).abs() < 1e-15);
        assert!((e[(0, 1)] - 2.0 * w).abs() < 1e-15);
    }

    #[test]
    fn semigroup_property() {
        let a = super::super::lyapunov::tests::random_stable(6, 11);
        let e1 = expm(&(&a * 0.7)).unwrap();
        let e2 = expm(&(&a * 1.4)).unwrap();
        assert!((&e1 * &e1 - &e2).norm() < 1e-12 * e2.norm().max(1.0));
    }
}
