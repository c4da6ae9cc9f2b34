//! Analytic ground potentials and control shape functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One additive term of the ground potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GroundTerm {
    /// `Σ_k c_k (x_axis − center)^k`.
    Polynomial {
        axis: usize,
        #[serde(default)]
        center: f64,
        coefficients: Vec<f64>,
    },
    /// `amplitude · exp(−Σ_i (x_i − c_i)² / (2 w_i²))`.
    Gaussian {
        amplitude: f64,
        center: Vec<f64>,
        width: Vec<f64>,
    },
}

/// Control shape function depending on a single coordinate.
///
/// Linear (`slope·x + offset`) on `inner`, constant `plateau` values outside
/// `outer`, joined by quintic Hermite blends that match value, slope and
/// curvature at both ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ShapeFunction {
    Ramp {
        axis: usize,
        slope: f64,
        #[serde(default)]
        offset: f64,
        inner: [f64; 2],
        outer: [f64; 2],
        plateau: [f64; 2],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct PotentialSpec {
    pub dim: usize,
    pub ground: Vec<GroundTerm>,
    pub shapes: Vec<ShapeFunction>,
}

const HERMITE5: [[f64; 6]; 6] = [
    [1.0, 0.0, 0.0, -10.0, 15.0, -6.0],
    [0.0, 1.0, 0.0, -6.0, 8.0, -3.0],
    [0.0, 0.0, 0.5, -1.5, 1.5, -0.5],
    [0.0, 0.0, 0.0, 0.5, -1.0, 0.5],
    [0.0, 0.0, 0.0, -4.0, 7.0, -3.0],
    [0.0, 0.0, 0.0, 10.0, -15.0, 6.0],
];

/// Value and first derivative of the quintic matching `(p, v, a)` at `x0` and `x1`.
fn quintic_blend(x: f64, x0: f64, x1: f64, left: [f64; 3], right: [f64; 3]) -> (f64, f64) {
    let l = x1 - x0;
    let s = (x - x0) / l;
    let w = [left[0], left[1] * l, left[2] * l * l, right[2] * l * l, right[1] * l, right[0]];
    let mut coef = [0.0; 6];
    for (b, wb) in HERMITE5.iter().zip(w) {
        for k in 0..6 {
            coef[k] += wb * b[k];
        }
    }
    let mut v = 0.0;
    let mut d = 0.0;
    for k in (0..6).rev() {
        v = v * s + coef[k];
        if k > 0 {
            d = d * s + k as f64 * coef[k];
        }
    }
    (v, d / l)
}

impl ShapeFunction {
    pub fn axis(&self) -> usize {
        match self {
            ShapeFunction::Ramp { axis, .. } => *axis,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ShapeFunction::Ramp { axis, inner, outer, .. } => {
                if *axis >= dim {
                    return Err(Error::Config(format!("shape axis {axis} out of range for dimension {dim}")));
                }
                if !(outer[0] < inner[0] && inner[0] < inner[1] && inner[1] < outer[1]) {
                    return Err(Error::Config(format!(
                        "ramp intervals must nest: outer {outer:?}, inner {inner:?}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Value and derivative along the shape's axis at coordinate `s`.
    pub fn eval_1d(&self, s: f64) -> (f64, f64) {
        match self {
            ShapeFunction::Ramp { slope, offset, inner, outer, plateau, .. } => {
                let lin = |x: f64| slope * x + offset;
                if s <= outer[0] {
                    (plateau[0], 0.0)
                } else if s < inner[0] {
                    quintic_blend(s, outer[0], inner[0], [plateau[0], 0.0, 0.0], [lin(inner[0]), *slope, 0.0])
                } else if s <= inner[1] {
                    (lin(s), *slope)
                } else if s < outer[1] {
                    quintic_blend(s, inner[1], outer[1], [lin(inner[1]), *slope, 0.0], [plateau[1], 0.0, 0.0])
                } else {
                    (plateau[1], 0.0)
                }
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.eval_1d(x[self.axis()]).0
    }

    /// Gradient, written into `g` (length = dimension).
    pub fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g.iter_mut().for_each(|v| *v = 0.0);
        g[self.axis()] = self.eval_1d(x[self.axis()]).1;
    }
}

impl GroundTerm {
    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            GroundTerm::Polynomial { axis, .. } if *axis >= dim => {
                Err(Error::Config(format!("polynomial axis {axis} out of range for dimension {dim}")))
            }
            GroundTerm::Gaussian { center, width, .. } if center.len() != dim || width.len() != dim => {
                Err(Error::Config("gaussian center/width length must equal the dimension".into()))
            }
            GroundTerm::Gaussian { width, .. } if width.iter().any(|w| *w <= 0.0) => {
                Err(Error::Config("gaussian widths must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            GroundTerm::Polynomial { axis, center, coefficients } => {
                let s = x[*axis] - center;
                coefficients.iter().rev().fold(0.0, |acc, c| acc * s + c)
            }
            GroundTerm::Gaussian { amplitude, center, width } => {
                let q: f64 = x.iter().zip(center).zip(width).map(|((xi, ci), wi)| (xi - ci).powi(2) / (2.0 * wi * wi)).sum();
                amplitude * (-q).exp()
            }
        }
    }

    fn add_gradient(&self, x: &[f64], g: &mut [f64]) {
        match self {
            GroundTerm::Polynomial { axis, center, coefficients } => {
                let s = x[*axis] - center;
                let mut acc = 0.0;
                for k in (1..coefficients.len()).rev() {
                    acc = acc * s + k as f64 * coefficients[k];
                }
                g[*axis] += acc;
            }
            GroundTerm::Gaussian { center, width, .. } => {
                let v = self.value(x);
                for i in 0..x.len() {
                    g[i] -= v * (x[i] - center[i]) / (width[i] * width[i]);
                }
            }
        }
    }
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(Error::Config(format!("dimension must be 1 or 2, got {}", self.dim)));
        }
        if self.shapes.is_empty() {
            return Err(Error::Config("at least one control shape function is required".into()));
        }
        for t in &self.ground {
            t.validate(self.dim)?;
        }
        for s in &self.shapes {
            s.validate(self.dim)?;
        }
        Ok(())
    }

    pub fn controls(&self) -> usize {
        self.shapes.len()
    }

    pub fn ground(&self, x: &[f64]) -> f64 {
        self.ground.iter().map(|t| t.value(x)).sum()
    }

    pub fn ground_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for t in &self.ground {
            t.add_gradient(x, &mut g);
        }
        g
    }

    /// Partial derivative of G along `axis`.
    pub fn ground_partial(&self, x: &[f64], axis: usize) -> f64 {
        self.ground_gradient(x)[axis]
    }

    pub fn shape(&self, j: usize, x: &[f64]) -> f64 {
        self.shapes[j].value(x)
    }

    pub fn shape_partial(&self, j: usize, x: &[f64], axis: usize) -> f64 {
        let s = &self.shapes[j];
        if s.axis() == axis {
            s.eval_1d(x[axis]).1
        } else {
            0.0
        }
    }

    /// Triple-well ground potential on (−6, 6) with minima near −3.85, −0.12,
    /// 3.78, maxima near −2.24 and 2.43, and barrier `G(−2.24) − G(−0.12) = 1.11`;
    /// one ramp control of slope 1/12 with plateaus ±1/2.
    pub fn triple_well_1d() -> Self {
        let roots = [-3.85, -2.24, -0.12, 2.43, 3.78];
        let coefficients = well_polynomial(&roots, (-2.24, -0.12), 1.11);
        Self {
            dim: 1,
            ground: vec![GroundTerm::Polynomial { axis: 0, center: 0.0, coefficients }],
            shapes: vec![ShapeFunction::Ramp {
                axis: 0,
                slope: 1.0 / 12.0,
                offset: 0.0,
                inner: [-5.8, 5.8],
                outer: [-5.9, 5.9],
                plateau: [-0.5, 0.5],
            }],
        }
    }

    /// Separable four-well ground potential on (−6, 6) × (−6.5, 5.5).
    ///
    /// Each axis carries an asymmetric quartic double well: along x₁ the minima
    /// sit at −2.87 and 2.45 (deeper), along x₂ at −3.76 (deeper) and 2.515.
    /// Barriers are 1.0 above the deeper minimum and the shallow well is 0.15
    /// higher, so the global minimizer is near (2.45, −3.76).
    pub fn four_well_2d() -> Self {
        let w1 = double_well(-2.87, 2.45, 1.0, 0.15);
        let w2 = double_well(2.515, -3.76, 1.0, 0.15);
        Self {
            dim: 2,
            ground: vec![
                GroundTerm::Polynomial { axis: 0, center: 0.0, coefficients: w1 },
                GroundTerm::Polynomial { axis: 1, center: 0.0, coefficients: w2 },
            ],
            shapes: vec![
                ShapeFunction::Ramp {
                    axis: 0,
                    slope: 1.0 / 12.0,
                    offset: 0.0,
                    inner: [-5.8, 5.8],
                    outer: [-6.0, 6.0],
                    plateau: [-0.5, 0.5],
                },
                ShapeFunction::Ramp {
                    axis: 1,
                    slope: 1.0 / 12.0,
                    offset: 0.0,
                    inner: [-6.3, 5.3],
                    outer: [-6.5, 5.5],
                    plateau: [-6.5 / 12.0, 5.5 / 12.0],
                },
            ],
        }
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

/// Antiderivative (vanishing at 0) of `Π (x − r_i)`, scaled so that
/// `G(pair.0) − G(pair.1) = height`.
fn well_polynomial(roots: &[f64], pair: (f64, f64), height: f64) -> Vec<f64> {
    let mut d = vec![1.0];
    for r in roots {
        d = poly_mul(&d, &[-r, 1.0]);
    }
    let mut g = vec![0.0];
    g.extend(d.iter().enumerate().map(|(k, c)| c / (k + 1) as f64));
    let scale = height / (poly_eval(&g, pair.0) - poly_eval(&g, pair.1));
    g.iter().map(|c| c * scale).collect()
}

/// Quartic with minima at `shallow` and `deep`, barrier `height` above the deep
/// minimum and the shallow minimum `asym` above it.
fn double_well(shallow: f64, deep: f64, height: f64, asym: f64) -> Vec<f64> {
    let build = |m: f64| {
        let g = well_polynomial(&[shallow, m, deep], (m, deep), height);
        (poly_eval(&g, shallow) - poly_eval(&g, deep) - asym, g)
    };
    let (mut a, mut b) = if shallow < deep { (shallow, deep) } else { (deep, shallow) };
    a += 1e-3 * (b - a);
    b -= 1e-3 * (b - a);
    let fa = build(a).0;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = build(m).0;
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    build(0.5 * (a + b)).1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triple_well_critical_points() {
        let p = PotentialSpec::triple_well_1d();
        let g = |x: f64| p.ground(&[x]);
        let dg = |x: f64| p.ground_partial(&[x], 0);
        for r in [-3.85, -2.24, -0.12, 2.43, 3.78] {
            assert!(dg(r).abs() < 1e-12);
        }
        assert!((g(-2.24) - g(-0.12) - 1.11).abs() < 1e-12);
        assert!(g(-3.85) < g(-0.12) && g(-3.85) < g(3.78));
        if let GroundTerm::Polynomial { coefficients, .. } = &p.ground[0] {
            assert!((coefficients[6] * 6.0 - 0.015037681020729846).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut p = PotentialSpec::four_well_2d();
        p.ground.push(GroundTerm::Gaussian { amplitude: 0.3, center: vec![0.5, -1.0], width: vec![1.0, 2.0] });
        for x in [[0.3, -0.7], [-4.0, 2.0], [1.5, 5.0]] {
            let g = p.ground_gradient(&x);
            for ax in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[ax] += 1e-6;
                xm[ax] -= 1e-6;
                let fd = (p.ground(&xp) - p.ground(&xm)) / 2e-6;
                assert!((fd - g[ax]).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn four_well_minima() {
        let p = PotentialSpec::four_well_2d();
        for (x, y) in [(2.45, -3.76), (-2.87, -3.76), (-2.87, 2.515), (2.45, 2.515)] {
            let g = p.ground_gradient(&[x, y]);
            assert!(g[0].abs() < 1e-10 && g[1].abs() < 1e-10);
        }
        let ga = p.ground(&[2.45, -3.76]);
        for q in [[-2.87, -3.76], [-2.87, 2.515], [2.45, 2.515]] {
            assert!(p.ground(&q) > ga);
        }
    }

    #[test]
    fn ramp_is_c2_and_flat_at_the_walls() {
        for s in PotentialSpec::four_well_2d().shapes.iter().chain(&PotentialSpec::triple_well_1d().shapes) {
            let ShapeFunction::Ramp { inner, outer, .. } = s;
            {
                for knot in [inner[0], inner[1], outer[0], outer[1]] {
                    let e = 1e-7;
                    let (vl, dl) = s.eval_1d(knot - e);
                    let (vr, dr) = s.eval_1d(knot + e);
                    assert!((vl - vr).abs() < 1e-6);
                    assert!((dl - dr).abs() < 1e-5);
                    let (_, dll) = s.eval_1d(knot - 1e-5);
                    let (_, drr) = s.eval_1d(knot + 1e-5);
                    assert!(((dl - dll) / 1e-5 - (drr - dr) / 1e-5).abs() < 2e-2);
                }
                assert_eq!(s.eval_1d(outer[0]).1, 0.0);
                assert_eq!(s.eval_1d(outer[1]).1, 0.0);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let p = PotentialSpec::four_well_2d();
        let s = serde_json::to_string(&p).unwrap();
        let q: PotentialSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
        assert!(q.validate().is_ok());
    }
}
