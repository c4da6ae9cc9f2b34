//! Experiment configuration and the shipped test-case presets.

use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::SimOptions;
use crate::error::{Error, Result};
use crate::model::{Grid, InitialCondition, PotentialSpec};
use crate::openloop::ArmijoParams;
use crate::reduction::{TruncationRule, DEFAULT_GRAMIAN_EPS, DEFAULT_GRAMIAN_MAX_ITER};
use crate::tensors::quadrature::DEFAULT_L;

/// Built-in ground potentials.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum PotentialPreset {
    #[serde(rename = "triple_well_1d")]
    TripleWell1d,
    #[serde(rename = "four_well_2d")]
    FourWell2d,
}

/// A preset name, a path to a JSON [`PotentialSpec`], or an inline spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum PotentialChoice {
    Preset(PotentialPreset),
    File { file: PathBuf },
    Inline(PotentialSpec),
}

impl PotentialChoice {
    pub fn resolve(&self) -> Result<PotentialSpec> {
        let spec = match self {
            PotentialChoice::Preset(PotentialPreset::TripleWell1d) => PotentialSpec::triple_well_1d(),
            PotentialChoice::Preset(PotentialPreset::FourWell2d) => PotentialSpec::four_well_2d(),
            PotentialChoice::File { file } => {
                let text = std::fs::read_to_string(file)
                    .map_err(|e| Error::Config(format!("potential file {}: {e}", file.display())))?;
                serde_json::from_str(&text)?
            }
            PotentialChoice::Inline(spec) => spec.clone(),
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `[lo, hi]` per axis.
    pub bounds: Vec<[f64; 2]>,
    /// Cells per axis; `n` is their product.
    pub counts: Vec<usize>,
    pub potential: PotentialChoice,
    pub nu: f64,
}

impl ModelConfig {
    pub fn grid(&self) -> Result<Grid<f64>> {
        let bounds: Vec<(f64, f64)> = self.bounds.iter().map(|b| (b[0], b[1])).collect();
        Grid::new(&bounds, &self.counts).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn n(&self) -> usize {
        self.counts.iter().product()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionConfig {
    pub rule: TruncationRule,
    /// Relative residual stopping the Gramian fixed points.
    pub gramian_eps: f64,
    pub max_iter: usize,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self { rule: TruncationRule::Threshold { eps: 1e-3 }, gramian_eps: DEFAULT_GRAMIAN_EPS, max_iter: DEFAULT_GRAMIAN_MAX_ITER }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    pub p_max: usize,
    /// Quadrature half-width.
    #[serde(default = "default_l")]
    pub l: usize,
    pub betas: Vec<f64>,
}

fn default_l() -> usize {
    DEFAULT_L
}

fn yes() -> bool {
    true
}

fn default_openloop() -> Option<ArmijoParams> {
    Some(ArmijoParams::default())
}

/// Everything needed to reproduce one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: ModelConfig,
    #[serde(default)]
    pub reduction: ReductionConfig,
    pub law: LawConfig,
    pub initial_condition: InitialCondition,
    /// Final time `T` for simulation, cost and the open-loop problem.
    pub horizon: f64,
    #[serde(default)]
    pub simulation: SimOptions,
    /// Open-loop benchmark parameters; `null` skips the optimization. Its
    /// `horizon` is overwritten by the top-level one.
    #[serde(default = "default_openloop")]
    pub openloop: Option<ArmijoParams>,
    /// Replay every generated control on the full model.
    #[serde(default = "yes")]
    pub replay: bool,
    /// Ranks used by `compare-reduction`.
    #[serde(default)]
    pub compare_ranks: Vec<usize>,
    /// Where outputs are written; not part of the provenance hash.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Recorded in the provenance block; presets use it to seed random initial conditions.
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    /// Reads a config and resolves relative file references against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let PotentialChoice::File { file } = &mut cfg.model.potential {
            if file.is_relative() {
                *file = base.join(&*file);
            }
        }
        if let Some(dir) = &mut cfg.output_dir {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let m = &self.model;
        if m.bounds.len() != m.counts.len() || !(1..=2).contains(&m.counts.len()) {
            return bad("model needs one or two axes with matching bounds and counts".into());
        }
        if m.bounds.iter().any(|b| !(b[0] < b[1])) {
            return bad("every axis needs lo < hi".into());
        }
        if !(m.nu > 0.0) {
            return bad(format!("nu must be positive, got {}", m.nu));
        }
        if let PotentialChoice::File { file } = &m.potential {
            if !file.is_file() {
                return bad(format!("potential file {} does not exist", file.display()));
            }
        }
        let pot = m.potential.resolve()?;
        if pot.dim != m.counts.len() {
            return bad(format!("potential is {}-dimensional but the grid has {} axes", pot.dim, m.counts.len()));
        }
        match self.reduction.rule {
            TruncationRule::Rank { r: 0 } => return bad("rank must be positive".into()),
            TruncationRule::Threshold { eps } if !(eps > 0.0 && eps < 1.0) => {
                return bad(format!("threshold must lie in (0, 1), got {eps}"))
            }
            _ => {}
        }
        if !(self.reduction.gramian_eps > 0.0) || self.reduction.max_iter == 0 {
            return bad("gramian_eps and max_iter must be positive".into());
        }
        if self.law.p_max < 2 {
            return bad(format!("p_max must be at least 2, got {}", self.law.p_max));
        }
        if self.law.l == 0 {
            return bad("quadrature size l must be positive".into());
        }
        if self.law.betas.is_empty() || self.law.betas.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return bad("betas must be a non-empty list of positive numbers".into());
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        let s = &self.simulation;
        if !(s.rtol > 0.0 && s.atol > 0.0 && s.blowup_factor > 1.0) || s.intervals < 2 {
            return bad("simulation tolerances must be positive, blowup_factor > 1 and intervals >= 2".into());
        }
        if let Some(a) = &self.openloop {
            a.validate()?;
        }
        Ok(())
    }

    /// Armijo parameters with the experiment horizon.
    pub fn armijo(&self) -> Option<ArmijoParams> {
        self.openloop.clone().map(|mut a| {
            a.horizon = self.horizon;
            a
        })
    }

    /// SHA-256 of the canonical JSON form, ignoring `output_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// JSON schema of [`ExperimentConfig`].
pub fn config_schema() -> String {
    let schema = schemars::schema_for!(ExperimentConfig);
    serde_json::to_string_pretty(&schema).expect("schema serializes") + "\n"
}

pub const PRESETS: [&str; 5] = ["tc1", "tc2", "tc3", "tc4", "tc5"];

fn one_d(name: &str, ic: InitialCondition, betas: Vec<f64>) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        model: ModelConfig {
            bounds: vec![[-6.0, 6.0]],
            counts: vec![1000],
            potential: PotentialChoice::Preset(PotentialPreset::TripleWell1d),
            nu: 1.0,
        },
        reduction: ReductionConfig { rule: TruncationRule::Threshold { eps: 1e-6 }, ..Default::default() },
        law: LawConfig { p_max: 6, l: DEFAULT_L, betas },
        initial_condition: ic,
        horizon: 20.0,
        simulation: SimOptions::default(),
        openloop: default_openloop(),
        replay: true,
        compare_ranks: vec![9, 21],
        output_dir: None,
        seed: 0,
    }
}

fn two_d(name: &str, ic: InitialCondition, betas: Vec<f64>, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        model: ModelConfig {
            bounds: vec![[-6.0, 6.0], [-6.5, 5.5]],
            counts: vec![50, 50],
            potential: PotentialChoice::Preset(PotentialPreset::FourWell2d),
            nu: 0.25,
        },
        reduction: ReductionConfig { rule: TruncationRule::Threshold { eps: 1e-4 }, ..Default::default() },
        law: LawConfig { p_max: 4, l: DEFAULT_L, betas },
        initial_condition: ic,
        horizon: 200.0,
        simulation: SimOptions::default(),
        openloop: default_openloop(),
        replay: true,
        compare_ranks: vec![],
        output_dir: None,
        seed,
    }
}

/// Test cases 1–5: three 1D initial densities, then two 2D ones.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let fine = vec![1e-3, 5e-4, 1e-4, 5e-5, 1e-5];
    Ok(match name {
        "tc1" => one_d("tc1-uniform", InitialCondition::Uniform, vec![1e-3, 1e-4, 1e-5]),
        "tc2" => one_d("tc2-centered", InitialCondition::GaussianTarget { center: vec![0.0], target_l2: 0.57 }, fine),
        "tc3" => one_d("tc3-right", InitialCondition::GaussianTarget { center: vec![3.78], target_l2: 0.76 }, fine),
        "tc4" => {
            let seed = 7;
            two_d("tc4-random", InitialCondition::RandomPerturbationTarget { seed, target_l2: 0.18, modes: 6 }, fine, seed)
        }
        "tc5" => two_d(
            "tc5-second-well",
            InitialCondition::GaussianTarget { center: vec![-2.86, -3.75], target_l2: 0.63 },
            vec![1e-1, 5e-2, 1e-2, 5e-3, 1e-3],
            0,
        ),
        other => return Err(Error::Config(format!("unknown preset {other:?}, expected one of {PRESETS:?}"))),
    })
}
