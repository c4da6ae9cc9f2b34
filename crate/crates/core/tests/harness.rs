use polyfeedback::harness::{compare_reduction, run_experiment, ExperimentConfig};

fn small(name: &str, ic: &str, betas: &str, p_max: usize) -> ExperimentConfig {
    let json = format!(
        r#"{{
            "name": "{name}",
            "model": {{"bounds": [[-6.0, 6.0]], "counts": [100], "potential": "triple_well_1d", "nu": 1.0}},
            "reduction": {{"rule": {{"rule": "threshold", "eps": 1e-3}}}},
            "law": {{"p_max": {p_max}, "betas": {betas}}},
            "initial_condition": {ic},
            "horizon": 20.0
        }}"#
    );
    serde_json::from_str(&json).unwrap()
}

fn centered() -> ExperimentConfig {
    small("centered", r#"{"kind": "gaussian_target", "center": [0.0], "target_l2": 0.57}"#, "[1e-3, 1e-4]", 4)
}

#[test]
fn zero_initial_state_costs_nothing() {
    let cfg = small("still", r#"{"kind": "stationary"}"#, "[1e-3]", 3);
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.model.uncontrolled_cost, Some(0.0));
    for row in &report.rows {
        for law in &row.laws {
            assert!(!law.diverged);
            assert_eq!(law.cost, Some(0.0));
            assert_eq!(law.distance, Some(0.0));
            assert_eq!(law.value_at_y0, 0.0);
        }
        let opt = row.optimum.as_ref().unwrap();
        assert_eq!(opt.cost_discrete, 0.0);
        assert_eq!(opt.iterations, 0);
    }
}

#[test]
fn tables_and_invariants_on_centered_case() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = centered();
    cfg.output_dir = Some(dir.path().to_path_buf());
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.reduction.r, 8);
    assert_eq!(report.reduction.singular_values.len(), 99);
    for row in &report.rows {
        let opt = row.optimum.as_ref().unwrap();
        assert!(opt.converged);
        for law in &row.laws {
            let c = law.cost_discrete.unwrap();
            assert!(opt.cost_discrete <= c + 1e-6, "β {}: optimum {} above J(u_{}) = {c}", row.beta, opt.cost_discrete, law.p);
            assert!(law.mass_drift.unwrap() <= 1e-9);
        }
        assert!(opt.mass_drift.unwrap() <= 1e-9);
    }
    // well-converged row: costs non-increasing in p up to 2%
    let row = &report.rows[0];
    for w in row.laws.windows(2) {
        assert!(w[1].cost.unwrap() <= 1.02 * w[0].cost.unwrap());
    }
    for f in ["report.json", "singular_values.csv", "tables/cost.csv", "tables/distance.csv", "tables/value.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let cost = std::fs::read_to_string(dir.path().join("tables/cost.csv")).unwrap();
    let lines: Vec<&str> = cost.lines().collect();
    assert_eq!(lines[0], "beta,p2,p3,p4,opt");
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l.split(',').count() == 5));
    let traj = dir.path().join("trajectories/beta1e-4_p3.csv");
    let text = std::fs::read_to_string(traj).unwrap();
    assert!(text.starts_with("t,y1,"));
    assert_eq!(text.lines().count(), 2002);
    assert!(dir.path().join("trajectories/beta1e-4_uopt.csv").is_file());
}

#[test]
fn reports_are_reproducible() {
    let cfg = centered();
    let a = run_experiment(&cfg).unwrap().to_json().unwrap();
    let b = run_experiment(&cfg).unwrap().to_json().unwrap();
    assert_eq!(a, b);
    assert!(a.contains(&cfg.hash()));
}

#[test]
fn far_initial_state_and_small_weight_give_infinite_entries() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("right", r#"{"kind": "gaussian_target", "center": [3.78], "target_l2": 0.76}"#, "[1e-4]", 6);
    cfg.openloop = None;
    cfg.output_dir = Some(dir.path().to_path_buf());
    let report = run_experiment(&cfg).unwrap();
    let laws = &report.rows[0].laws;
    assert!(!laws[0].diverged);
    assert!(laws.iter().any(|l| l.diverged && l.cost.is_none()));
    let cost = std::fs::read_to_string(dir.path().join("tables/cost.csv")).unwrap();
    assert!(cost.lines().next().unwrap().ends_with("p6"));
    assert!(cost.contains(",inf"));
    let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert!(json.contains("\"diverged\": true") && json.contains("\"cost\": null"));
}

#[test]
fn comparison_against_unreduced_model() {
    let mut cfg = small("compare", r#"{"kind": "gaussian_target", "center": [0.0], "target_l2": 0.57}"#, "[1e-4]", 3);
    cfg.model.counts = vec![30];
    let cmp = compare_reduction(&cfg, &[6, 29]).unwrap();
    assert_eq!(cmp.reference, "unreduced");
    assert_eq!(cmp.entries.len(), 4);
    for e in &cmp.entries {
        let d = e.control_deviation.unwrap();
        if e.r == 29 {
            assert!(d <= 1e-8, "p = {}: deviation {d:e}", e.p);
        } else {
            assert!(d > 1e-8);
        }
    }
}
