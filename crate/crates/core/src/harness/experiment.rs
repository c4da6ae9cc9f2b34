//! Pipeline orchestration: model → projection → reduction → Riccati →
//! tensors → closed loops → full replay → open-loop benchmark.

use std::path::Path;

use nalgebra::DVector;

use super::config::ExperimentConfig;
use super::report::{BetaRow, LawRow, ModelSummary, OptimumRow, Provenance, ReductionSummary, Report};
use crate::control::{control_distance, cost, mass_drift, replay_full, simulate_closed_loop, FeedbackLaw, Trajectory};
use crate::error::{Result, StageExt};
use crate::io::{save_tensor, write_controls, write_dense_mm, write_sparse_mm, write_trajectory, write_vector};
use crate::model::{assemble_model, BilinearModel};
use crate::openloop::{optimize, ArmijoParams, ControlIterate, OpenLoop};
use crate::projection::{project, ProjectedModel};
use crate::reduction::{balance_truncate, gramians, GramianPair, ReducedModel, TruncationRule};
use crate::riccati::{solve_reduced, RiccatiSolution};
use crate::tensors::feedback_tensors;

/// Full-order stages shared by every subcommand.
pub struct Plant {
    pub model: BilinearModel<f64>,
    pub proj: ProjectedModel<f64>,
    /// `ρ0 − ρ∞`.
    pub y0: DVector<f64>,
    /// Projected initial state.
    pub y0_tilde: DVector<f64>,
}

impl Plant {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let grid = cfg.model.grid().stage("model")?;
        let pot = cfg.model.potential.resolve().stage("model")?;
        let model = assemble_model(&grid, &pot, cfg.model.nu).stage("model")?;
        let rho0 = cfg.initial_condition.build(&model.grid, &model.rho_inf).stage("initial condition")?;
        let y0 = &rho0 - &model.rho_inf;
        let proj = project(&model).stage("projection")?;
        let y0_tilde = proj.project_state(&y0);
        log::info!("model: n = {}, m = {}, ‖ρ0 − ρ∞‖ = {:.4}", model.n(), model.m(), model.grid.l2_norm(&y0));
        Ok(Self { model, proj, y0, y0_tilde })
    }

    pub fn gramians(&self, cfg: &ExperimentConfig) -> Result<GramianPair<f64>> {
        let g = gramians(&self.proj, cfg.reduction.gramian_eps, cfg.reduction.max_iter).stage("gramians")?;
        log::info!(
            "gramians: {} / {} iterations, residuals {:e} / {:e}",
            g.x.iterations,
            g.y.iterations,
            g.x.residual,
            g.y.residual
        );
        Ok(g)
    }

    pub fn reduce(&self, g: &GramianPair<f64>, rule: TruncationRule) -> Result<ReducedModel<f64>> {
        let red = balance_truncate(&g.x.matrix, &g.y.matrix, &self.proj, rule, &self.y0_tilde).stage("balancing")?;
        log::info!("reduced model: r = {}, ‖y0r‖ = {:.4}", red.r, red.y0.norm());
        Ok(red)
    }

    /// Uncontrolled full-model cost on `[0, T]`.
    pub fn uncontrolled(&self, cfg: &ExperimentConfig) -> Result<Trajectory<f64>> {
        let m = self.model.m();
        replay_full(&self.model, &[0.0, cfg.horizon], &[DVector::zeros(m), DVector::zeros(m)], &self.y0, cfg.horizon, &cfg.simulation)
            .stage("replay")
    }

    pub fn replay(&self, cfg: &ExperimentConfig, times: &[f64], controls: &[DVector<f64>]) -> Result<Trajectory<f64>> {
        replay_full(&self.model, times, controls, &self.y0, cfg.horizon, &cfg.simulation).stage("replay")
    }
}

/// Riccati solution and feedback tensors for one β.
pub fn law_for(red: &ReducedModel<f64>, beta: f64, p: usize, l: usize) -> Result<(RiccatiSolution<f64>, FeedbackLaw<f64>)> {
    let ric = solve_reduced(red, beta).stage("riccati")?;
    log::info!("riccati β = {beta:e}: residual {:e}", ric.residual);
    let law = feedback_tensors(red, &ric, p, l).stage("tensors")?;
    Ok((ric, law))
}

fn beta_tag(beta: f64) -> String {
    format!("beta{beta:e}")
}

/// Trajectories kept for output next to the report.
struct Artifacts {
    files: Vec<(String, Trajectory<f64>, f64, bool)>,
    controls: Vec<(String, Vec<f64>, Vec<DVector<f64>>)>,
}

impl Artifacts {
    fn write(&self, dir: &Path) -> Result<()> {
        let tdir = dir.join("trajectories");
        std::fs::create_dir_all(&tdir)?;
        for (name, tr, beta, states) in &self.files {
            write_trajectory(&tdir.join(format!("{name}.csv")), tr, *beta, *states)?;
        }
        for (name, times, u) in &self.controls {
            write_controls(&tdir.join(format!("{name}.csv")), times, u)?;
        }
        Ok(())
    }
}

/// Runs the whole study described by `cfg`; writes outputs when `cfg.output_dir` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let plant = Plant::build(cfg)?;
    let g = plant.gramians(cfg)?;
    let red = plant.reduce(&g, cfg.reduction.rule)?;
    let (report, artifacts) = sweep(cfg, &plant, &g, &red)?;
    if let Some(dir) = &cfg.output_dir {
        report.write(dir).stage("output")?;
        artifacts.write(dir).stage("output")?;
    }
    Ok(report)
}

fn sweep(
    cfg: &ExperimentConfig,
    plant: &Plant,
    g: &GramianPair<f64>,
    red: &ReducedModel<f64>,
) -> Result<(Report, Artifacts)> {
    let hbar = plant.model.grid.hbar;
    let mut art = Artifacts { files: vec![], controls: vec![] };
    let uncontrolled_cost = if cfg.replay { Some(cost(&plant.uncontrolled(cfg)?, 0.0)) } else { None };
    let armijo = cfg.armijo();
    let intervals = armijo.as_ref().map_or(cfg.simulation.intervals, |a| a.intervals);
    let mut rows = Vec::new();
    for &beta in &cfg.law.betas {
        let (ric, law) = law_for(red, beta, cfg.law.p_max, cfg.law.l)?;
        let problem = OpenLoop::new(red, red.y0.clone(), beta, cfg.horizon, intervals);
        let tag = beta_tag(beta);
        let mut laws = Vec::new();
        // controls of each finite closed loop on the open-loop grid
        let mut resampled: Vec<Option<Vec<DVector<f64>>>> = Vec::new();
        for p in 2..=cfg.law.p_max {
            let lp = law.truncated(p);
            let tr = simulate_closed_loop(red, &lp, &red.y0, cfg.horizon, &cfg.simulation).stage("closed loop")?;
            let value_at_y0 = lp.value(&red.y0);
            let final_norm = tr.final_norm();
            let mut row = LawRow {
                p,
                cost: None,
                cost_reduced: None,
                cost_discrete: None,
                diverged: tr.diverged(),
                divergence: tr.divergence.map(|(t, kind)| format!("{kind:?} at t = {t}")),
                distance: None,
                value_at_y0,
                final_norm,
                mass_drift: None,
            };
            if tr.diverged() {
                resampled.push(None);
            } else {
                row.cost_reduced = Some(cost(&tr, beta));
                row.cost = row.cost_reduced;
                if cfg.replay {
                    let full = plant.replay(cfg, &tr.times, &tr.controls)?;
                    row.mass_drift = Some(mass_drift(&full, hbar));
                    row.cost = Some(cost(&full, beta));
                    art.files.push((format!("{tag}_p{p}_full"), full, beta, false));
                }
                let u = problem.resample(&tr.times, &tr.controls).stage("open loop")?;
                row.cost_discrete = Some(problem.cost(&u).stage("open loop")?);
                resampled.push(Some(u));
            }
            log::info!(
                "β = {beta:e}, p = {p}: J = {}, diverged = {}",
                row.cost.map_or("inf".into(), |c| format!("{c:.5}")),
                row.diverged
            );
            art.files.push((format!("{tag}_p{p}"), tr, beta, true));
            laws.push(row);
        }
        let optimum = match &armijo {
            None => None,
            Some(params) => {
                let (it, warm_start, refinements) = benchmark(&problem, params, &laws, &resampled)?;
                let opt_tr = it.trajectory(&problem).stage("open loop")?;
                for (row, u) in laws.iter_mut().zip(&resampled) {
                    if let Some(u) = u {
                        let up = Trajectory { times: it.times.clone(), states: vec![], controls: u.clone(), output_sq: vec![], divergence: None };
                        row.distance = Some(control_distance(&up, &opt_tr));
                        if let Some(c) = row.cost_discrete {
                            if it.cost > c + 1e-6 {
                                log::warn!("β = {beta:e}: optimum {:e} above J(u_{}) = {c:e}", it.cost, row.p);
                            }
                        }
                    }
                }
                let (full_cost, drift) = if cfg.replay {
                    let full = plant.replay(cfg, &it.times, &it.u)?;
                    let c = cost(&full, beta);
                    let d = mass_drift(&full, hbar);
                    art.files.push((format!("{tag}_opt_full"), full, beta, false));
                    (Some(c), Some(d))
                } else {
                    (None, None)
                };
                log::info!("β = {beta:e}: J(u_opt) = {:.5} after {} iterations", it.cost, it.iterations);
                art.controls.push((format!("{tag}_uopt"), it.times.clone(), it.u.clone()));
                art.files.push((format!("{tag}_opt"), opt_tr, beta, true));
                Some(OptimumRow {
                    cost: full_cost,
                    cost_discrete: it.cost,
                    iterations: it.iterations,
                    grad_norm: it.grad_norm,
                    converged: it.converged,
                    warm_start,
                    refinements,
                    mass_drift: drift,
                })
            }
        };
        rows.push(BetaRow { beta, riccati_residual: ric.residual, newton_steps: ric.newton_steps, laws, optimum });
    }
    let report = Report {
        name: cfg.name.clone(),
        provenance: Provenance::new(cfg),
        model: ModelSummary {
            n: plant.model.n(),
            m: plant.model.m(),
            dim: plant.model.grid.dim(),
            hbar,
            initial_distance: plant.model.grid.l2_norm(&plant.y0),
            uncontrolled_cost,
        },
        reduction: ReductionSummary {
            r: red.r,
            gramian_iterations: [g.x.iterations, g.y.iterations],
            gramian_residuals: [g.x.residual, g.y.residual],
            reduced_initial_norm: red.y0.norm(),
            singular_values: red.sigma.clone(),
        },
        rows,
    };
    Ok((report, art))
}

/// Open-loop optimum started from `U_2`. While some `U_p` is cheaper than
/// the result by more than `1e-6`, descent resumes from the cheaper of the
/// two with a tenfold smaller gradient tolerance (at most four times).
fn benchmark(
    problem: &OpenLoop<'_, f64>,
    params: &ArmijoParams,
    laws: &[LawRow],
    resampled: &[Option<Vec<DVector<f64>>>],
) -> Result<(ControlIterate<f64>, Option<usize>, usize)> {
    let candidates: Vec<(usize, f64, &Vec<DVector<f64>>)> = laws
        .iter()
        .zip(resampled)
        .filter_map(|(row, u)| Some((row.p, row.cost_discrete?, u.as_ref()?)))
        .collect();
    let first = candidates.iter().find(|c| c.0 == 2).or(candidates.first());
    let mut warm_start = first.map(|c| c.0);
    let mut it = optimize(problem, params, first.map(|c| c.2.clone())).stage("open loop")?;
    let best = candidates.iter().min_by(|a, b| a.1.total_cmp(&b.1));
    let mut params = params.clone();
    let mut refinements = 0;
    while let Some(&(p, c, u)) = best {
        if it.cost <= c + 1e-6 || refinements == 4 {
            break;
        }
        refinements += 1;
        params.delta /= 10.0;
        let start = if c < it.cost {
            warm_start = Some(p);
            u.clone()
        } else {
            it.u.clone()
        };
        log::info!("open loop: J(u_{p}) = {c:e} below optimum {:e}, refining with δ = {:e}", it.cost, params.delta);
        it = optimize(problem, &params, Some(start)).stage("open loop")?;
    }
    Ok((it, warm_start, refinements))
}

/// Matrices of the full and projected models (`build-model`).
pub fn export_model(cfg: &ExperimentConfig, dir: &Path) -> Result<Plant> {
    let plant = Plant::build(cfg)?;
    let d = dir.join("model");
    std::fs::create_dir_all(&d)?;
    let m = &plant.model;
    write_sparse_mm(&d.join("A.mtx"), &m.a)?;
    for (j, n) in m.n_ops.iter().enumerate() {
        write_sparse_mm(&d.join(format!("N{}.mtx", j + 1)), n)?;
    }
    write_dense_mm(&d.join("B.mtx"), &m.b)?;
    write_vector(&d.join("rho_inf.csv"), "rho_inf", &m.rho_inf)?;
    write_vector(&d.join("y0.csv"), "y0", &plant.y0)?;
    let p = &plant.proj;
    write_dense_mm(&d.join("A_proj.mtx"), &p.a)?;
    for (j, n) in p.n_ops.iter().enumerate() {
        write_dense_mm(&d.join(format!("N{}_proj.mtx", j + 1)), n)?;
    }
    write_dense_mm(&d.join("B_proj.mtx"), &p.b)?;
    write_dense_mm(&d.join("C_proj.mtx"), &p.c_matrix())?;
    Ok(plant)
}

/// Reduced matrices and singular values (`reduce`).
pub fn export_reduced(cfg: &ExperimentConfig, dir: &Path) -> Result<ReducedModel<f64>> {
    let plant = Plant::build(cfg)?;
    let g = plant.gramians(cfg)?;
    let red = plant.reduce(&g, cfg.reduction.rule)?;
    write_reduced(&red, dir)?;
    Ok(red)
}

fn write_reduced(red: &ReducedModel<f64>, dir: &Path) -> Result<()> {
    let d = dir.join("reduced");
    std::fs::create_dir_all(&d)?;
    write_dense_mm(&d.join("A_r.mtx"), &red.a)?;
    for (j, n) in red.n_ops.iter().enumerate() {
        write_dense_mm(&d.join(format!("N{}_r.mtx", j + 1)), n)?;
    }
    write_dense_mm(&d.join("B_r.mtx"), &red.b)?;
    write_dense_mm(&d.join("C_r.mtx"), &red.c)?;
    write_dense_mm(&d.join("V_r.mtx"), &red.v)?;
    write_dense_mm(&d.join("W_r.mtx"), &red.w)?;
    write_vector(&d.join("y0_r.csv"), "y0_r", &red.y0)?;
    let index: Vec<f64> = (1..=red.sigma.len()).map(|i| i as f64).collect();
    crate::io::write_columns(&dir.join("singular_values.csv"), &["index", "sigma"], &[&index, &red.sigma])?;
    Ok(())
}

/// Riccati solutions and feedback tensors for every β (`tensors`).
pub fn export_tensors(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let plant = Plant::build(cfg)?;
    let g = plant.gramians(cfg)?;
    let red = plant.reduce(&g, cfg.reduction.rule)?;
    write_reduced(&red, dir)?;
    for &beta in &cfg.law.betas {
        let (ric, law) = law_for(&red, beta, cfg.law.p_max, cfg.law.l)?;
        let d = dir.join("tensors").join(beta_tag(beta));
        std::fs::create_dir_all(&d)?;
        write_dense_mm(&d.join("Pi.mtx"), &ric.pi)?;
        for (k, t) in law.tensors() {
            save_tensor(&d, &format!("T{k}"), t, Some(beta))?;
        }
    }
    Ok(())
}
