//! Feedback controls of reduced models against a reference model.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::{law_for, Plant};
use super::report::Provenance;
use crate::control::{control_distance, control_norm, simpson, simulate_closed_loop, Trajectory};
use crate::error::{Error, Result, StageExt};
use crate::io::fmt_f64;
use crate::reduction::{ReducedModel, TruncationRule};

/// Largest `n` for which the unreduced projected model gets its own feedback tensors.
pub const UNREDUCED_LIMIT: usize = 200;
/// Degrees compared.
pub const COMPARE_P_MAX: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub beta: f64,
    pub p: usize,
    pub r: usize,
    /// `‖u_r − u_ref‖ / ‖u_ref‖` in `L²(0,T)`; `null` when either loop diverged.
    pub control_deviation: Option<f64>,
    /// Relative `L²(0,T)` deviation of the output norms.
    pub output_deviation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub name: String,
    pub provenance: Provenance,
    pub n: usize,
    /// `"unreduced"` or `"r=<rank>"`.
    pub reference: String,
    pub entries: Vec<ComparisonEntry>,
}

fn relative_l2(a: &[f64], b: &[f64], h: f64) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).collect();
    let base: Vec<f64> = b.iter().map(|y| y * y).collect();
    let den = simpson(h, &base).sqrt();
    let num = simpson(h, &diff).max(0.0).sqrt();
    if den > 0.0 { num / den } else { num }
}

/// Closed loops of degree `p ≤ 3` on each rank in `ranks`, measured against
/// the unreduced projected model when `n ≤ 200` and the largest rank otherwise.
pub fn compare_reduction(cfg: &ExperimentConfig, ranks: &[usize]) -> Result<Comparison> {
    cfg.validate()?;
    if ranks.is_empty() {
        return Err(Error::Config("compare-reduction needs at least one rank".into()));
    }
    let plant = Plant::build(cfg)?;
    let n = plant.model.n();
    let g = plant.gramians(cfg)?;
    let mut ranks = ranks.to_vec();
    ranks.sort_unstable();
    ranks.dedup();
    let models = ranks
        .iter()
        .map(|&r| plant.reduce(&g, TruncationRule::Rank { r }))
        .collect::<Result<Vec<_>>>()?;
    let (reference, label) = if n <= UNREDUCED_LIMIT {
        (ReducedModel::identity(&plant.proj, &plant.y0_tilde), "unreduced".to_string())
    } else {
        let last = models.last().unwrap().clone();
        let label = format!("r={}", last.r);
        (last, label)
    };
    let p_max = cfg.law.p_max.min(COMPARE_P_MAX);
    let mut entries = Vec::new();
    let mut overlays = Vec::new();
    for &beta in &cfg.law.betas {
        let (_, ref_law) = law_for(&reference, beta, p_max, cfg.law.l)?;
        let laws = models.iter().map(|red| law_for(red, beta, p_max, cfg.law.l)).collect::<Result<Vec<_>>>()?;
        for p in 2..=p_max {
            let ref_tr = simulate_closed_loop(&reference, &ref_law.truncated(p), &reference.y0, cfg.horizon, &cfg.simulation)
                .stage("closed loop")?;
            let ref_out: Vec<f64> = ref_tr.output_sq.iter().map(|v| v.max(0.0).sqrt()).collect();
            let h = ref_tr.times[1] - ref_tr.times[0];
            let mut curves: Vec<(String, Trajectory<f64>)> = vec![(label.clone(), ref_tr.clone())];
            for (red, (_, law)) in models.iter().zip(&laws) {
                let tr = simulate_closed_loop(red, &law.truncated(p), &red.y0, cfg.horizon, &cfg.simulation).stage("closed loop")?;
                let ok = !tr.diverged() && !ref_tr.diverged();
                let control_deviation = ok.then(|| {
                    let base = control_norm(&ref_tr);
                    let d = control_distance(&tr, &ref_tr);
                    if base > 0.0 { d / base } else { d }
                });
                let output_deviation = ok.then(|| {
                    let out: Vec<f64> = tr.output_sq.iter().map(|v| v.max(0.0).sqrt()).collect();
                    relative_l2(&out, &ref_out, h)
                });
                log::info!(
                    "β = {beta:e}, p = {p}, r = {}: control deviation {:?}, output deviation {:?}",
                    red.r,
                    control_deviation,
                    output_deviation
                );
                entries.push(ComparisonEntry { beta, p, r: red.r, control_deviation, output_deviation });
                curves.push((format!("r={}", red.r), tr));
            }
            overlays.push((beta, p, curves));
        }
    }
    let cmp = Comparison { name: cfg.name.clone(), provenance: Provenance::new(cfg), n, reference: label, entries };
    if let Some(dir) = &cfg.output_dir {
        let d = dir.join("comparison");
        std::fs::create_dir_all(&d)?;
        std::fs::write(dir.join("comparison.json"), serde_json::to_string_pretty(&cmp)? + "\n")?;
        for (beta, p, curves) in &overlays {
            write_overlay(&d.join(format!("beta{beta:e}_p{p}.csv")), curves)?;
        }
    }
    Ok(cmp)
}

/// `t`, then control and output columns per model.
fn write_overlay(path: &std::path::Path, curves: &[(String, Trajectory<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["t".to_string()];
    for (name, tr) in curves {
        let m = tr.controls.first().map_or(0, |u| u.len());
        head.extend((1..=m).map(|j| format!("u{j} {name}")));
        head.push(format!("output {name}"));
    }
    w.write_record(&head)?;
    let times = &curves[0].1.times;
    for (i, t) in times.iter().enumerate() {
        let mut rec = vec![fmt_f64(*t)];
        for (_, tr) in curves {
            let m = tr.controls.first().map_or(0, |u| u.len());
            match tr.controls.get(i) {
                Some(u) => rec.extend(u.iter().map(|v| fmt_f64(*v))),
                None => rec.extend((0..m).map(|_| String::new())),
            }
            rec.push(tr.output_sq.get(i).map_or(String::new(), |v| fmt_f64(v.max(0.0).sqrt())));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
