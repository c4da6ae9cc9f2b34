//! File formats: Matrix Market for matrices, CSV for vectors, tables and
//! trajectories, and a flat little-endian layout for tensors.
//!
//! Tensor binary layout: `u64` order `k`, `u64` dimension `r`, then `r^k`
//! `f64` values in row-major order (last index fastest), all little-endian.
//! A JSON sidecar with the same stem and extension `.json` holds
//! [`TensorMeta`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::control::Trajectory;
use crate::error::{Error, Result};
use crate::tensors::Tensor;

/// Token written for non-finite table entries.
pub const INF_TOKEN: &str = "inf";

pub fn write_sparse_mm(path: &Path, m: &CsrMatrix<f64>) -> Result<()> {
    let coo = CooMatrix::from(m);
    nalgebra_sparse::io::save_to_matrix_market_file(&coo, path)?;
    Ok(())
}

/// Dense matrices are written in coordinate format with every entry present.
pub fn write_dense_mm(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut coo = CooMatrix::new(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            coo.push(i, j, m[(i, j)]);
        }
    }
    nalgebra_sparse::io::save_to_matrix_market_file(&coo, path)?;
    Ok(())
}

pub fn read_mm(path: &Path) -> Result<CooMatrix<f64>> {
    nalgebra_sparse::io::load_coo_from_matrix_market_file(path)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

pub fn read_dense_mm(path: &Path) -> Result<DMatrix<f64>> {
    let coo = read_mm(path)?;
    let mut d = DMatrix::zeros(coo.nrows(), coo.ncols());
    for (i, j, v) in coo.triplet_iter() {
        d[(i, j)] += *v;
    }
    Ok(d)
}

/// Formats a float for CSV, using [`INF_TOKEN`] for infinities.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { INF_TOKEN.to_string() } else { format!("-{INF_TOKEN}") }
    } else {
        format!("{v:e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    match s.trim() {
        INF_TOKEN => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => t
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("not a number: {t:?}"))),
    }
}

/// Writes one or more equally long columns under the given headers.
pub fn write_columns(path: &Path, headers: &[&str], cols: &[&[f64]]) -> Result<()> {
    if headers.len() != cols.len() {
        return Err(Error::DimensionMismatch("headers and columns".into()));
    }
    let rows = cols.first().map_or(0, |c| c.len());
    if cols.iter().any(|c| c.len() != rows) {
        return Err(Error::DimensionMismatch("columns of unequal length".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(headers)?;
    for i in 0..rows {
        w.write_record(cols.iter().map(|c| fmt_f64(c[i])))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut cols = vec![Vec::new(); headers.len()];
    for rec in r.records() {
        let rec = rec?;
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            c.push(parse_f64(field)?);
        }
    }
    Ok((headers, cols))
}

pub fn write_vector(path: &Path, name: &str, v: &DVector<f64>) -> Result<()> {
    write_columns(path, &[name], &[v.as_slice()])
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let (_, cols) = read_columns(path)?;
    match cols.as_slice() {
        [c] => Ok(DVector::from_vec(c.clone())),
        _ => Err(Error::InvalidArgument(format!("{}: expected a single column", path.display()))),
    }
}

/// Rectangular table with a label column, as used for cost and distance tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub row_label: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl Table {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut head = vec![self.row_label.clone()];
        head.extend(self.columns.iter().cloned());
        w.write_record(&head)?;
        for (label, vals) in &self.rows {
            if vals.len() != self.columns.len() {
                return Err(Error::DimensionMismatch(format!("table row {label}")));
            }
            let mut rec = vec![label.clone()];
            rec.extend(vals.iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trajectory dump: `t`, state components `y1..`, controls `u1..`, output term and full integrand.
pub fn write_trajectory(path: &Path, traj: &Trajectory<f64>, beta: f64, with_states: bool) -> Result<()> {
    let m = traj.controls.first().map_or(0, |u| u.len());
    let dim = if with_states { traj.states.first().map_or(0, |y| y.len()) } else { 0 };
    let integrand = traj.integrand(beta);
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["t".to_string()];
    head.extend((1..=dim).map(|i| format!("y{i}")));
    head.extend((1..=m).map(|j| format!("u{j}")));
    head.push("output_sq".into());
    head.push("integrand".into());
    w.write_record(&head)?;
    for (i, t) in traj.times.iter().enumerate() {
        let mut rec = vec![fmt_f64(*t)];
        if dim > 0 {
            rec.extend(traj.states[i].iter().map(|v| fmt_f64(*v)));
        }
        rec.extend(traj.controls[i].iter().map(|v| fmt_f64(*v)));
        rec.push(traj.output_sq.get(i).map_or(String::new(), |v| fmt_f64(*v)));
        rec.push(integrand.get(i).map_or(String::new(), |v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Control samples `t, u1..um`.
pub fn write_controls(path: &Path, times: &[f64], u: &[DVector<f64>]) -> Result<()> {
    let m = u.first().map_or(0, |v| v.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["t".to_string()];
    head.extend((1..=m).map(|j| format!("u{j}")));
    w.write_record(&head)?;
    for (t, ui) in times.iter().zip(u) {
        let mut rec = vec![fmt_f64(*t)];
        rec.extend(ui.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_controls(path: &Path) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let (headers, cols) = read_columns(path)?;
    if headers.first().map(String::as_str) != Some("t") {
        return Err(Error::InvalidArgument(format!("{}: first column must be t", path.display())));
    }
    let times = cols[0].clone();
    let u = (0..times.len())
        .map(|i| DVector::from_iterator(cols.len() - 1, cols[1..].iter().map(|c| c[i])))
        .collect();
    Ok((times, u))
}

/// Sidecar metadata for a stored tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub order: usize,
    pub dim: usize,
    pub layout: String,
    pub beta: Option<f64>,
    pub symmetry_defect: f64,
}

pub fn write_tensor<W: Write>(mut w: W, t: &Tensor<f64>) -> Result<()> {
    w.write_all(&(t.order() as u64).to_le_bytes())?;
    w.write_all(&(t.dim() as u64).to_le_bytes())?;
    for v in t.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<Tensor<f64>> {
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let order = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let dim = u64::from_le_bytes(word) as usize;
    let len = u32::try_from(order)
        .ok()
        .and_then(|k| dim.checked_pow(k))
        .ok_or_else(|| Error::InvalidArgument(format!("tensor header k = {order}, r = {dim} overflows")))?;
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::from_vec(order, dim, data)
}

/// Writes `<stem>.bin` and `<stem>.json`.
pub fn save_tensor(dir: &Path, stem: &str, t: &Tensor<f64>, beta: Option<f64>) -> Result<()> {
    let f = BufWriter::new(File::create(dir.join(format!("{stem}.bin")))?);
    write_tensor(f, t)?;
    let meta = TensorMeta {
        order: t.order(),
        dim: t.dim(),
        layout: "u64le order, u64le dim, f64le row-major payload".into(),
        beta,
        symmetry_defect: t.symmetry_defect(),
    };
    std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_tensor(path: &Path) -> Result<Tensor<f64>> {
    read_tensor(BufReader::new(File::open(path)?))
}
