use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polyfeedback::harness::{self, ExperimentConfig};
use polyfeedback::Error;

/// Polynomial feedback laws for the controlled Fokker-Planck equation.
///
/// Every subcommand reads an experiment config (JSON, see
/// `configs/experiment.schema.json`) and writes into its `output_dir`,
/// or into `--out` when given.
#[derive(Parser)]
#[command(name = "polyfeedback", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config file.
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the discretized model and export A, N_j, B, ρ∞ and the projected matrices.
    BuildModel(Common),
    /// Compute Gramians, balance and truncate; export reduced matrices and singular values.
    Reduce(Common),
    /// Solve the Riccati equation and the feedback tensors for every β.
    Tensors(Common),
    /// Closed-loop sweep over β and p without the open-loop benchmark.
    ClosedLoop(Common),
    /// Open-loop optimum per β, warm-started from the degree-2 feedback control.
    OpenLoop(Common),
    /// Full study: closed loops, replays, open-loop optimum and tables.
    Experiment(Common),
    /// Compare feedback controls of several reduced orders against a reference.
    CompareReduction {
        #[command(flatten)]
        common: Common,
        /// Reduced orders, overriding `compare_ranks` of the config.
        #[arg(long, value_delimiter = ',')]
        ranks: Vec<usize>,
    },
    /// Print the JSON schema of the config format.
    Schema,
    /// Print the config of a shipped test case (tc1 … tc5).
    Preset { name: String },
}

fn load(common: &Common) -> polyfeedback::Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::from_file(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    cfg.output_dir = Some(dir.clone());
    std::fs::create_dir_all(&dir)?;
    Ok((cfg, dir))
}

fn print_table(dir: &Path, report: &harness::Report) {
    println!("{}: n = {}, r = {}", report.name, report.model.n, report.reduction.r);
    if let Some(j0) = report.model.uncontrolled_cost {
        println!("J(0) = {j0:.4}");
    }
    for row in &report.rows {
        let costs: Vec<String> = row
            .laws
            .iter()
            .map(|l| l.cost.map_or("inf".to_string(), |c| format!("{c:.4}")))
            .collect();
        let opt = row.optimum.as_ref().map_or(String::new(), |o| format!(" | opt {:.4}", o.cost.unwrap_or(o.cost_discrete)));
        println!("β = {:e}: {}{opt}", row.beta, costs.join(" "));
    }
    println!("outputs in {}", dir.display());
}

fn run(cli: Cli) -> polyfeedback::Result<()> {
    match cli.command {
        Command::BuildModel(c) => {
            let (cfg, dir) = load(&c)?;
            let plant = harness::export_model(&cfg, &dir)?;
            println!("n = {}, m = {}; matrices in {}", plant.model.n(), plant.model.m(), dir.join("model").display());
        }
        Command::Reduce(c) => {
            let (cfg, dir) = load(&c)?;
            let red = harness::export_reduced(&cfg, &dir)?;
            println!("r = {}; reduced matrices in {}", red.r, dir.join("reduced").display());
        }
        Command::Tensors(c) => {
            let (cfg, dir) = load(&c)?;
            harness::export_tensors(&cfg, &dir)?;
            println!("tensors in {}", dir.join("tensors").display());
        }
        Command::ClosedLoop(c) => {
            let (mut cfg, dir) = load(&c)?;
            cfg.openloop = None;
            let report = harness::run_experiment(&cfg)?;
            print_table(&dir, &report);
        }
        Command::OpenLoop(c) => {
            let (mut cfg, dir) = load(&c)?;
            cfg.law.p_max = 2;
            let report = harness::run_experiment(&cfg)?;
            print_table(&dir, &report);
        }
        Command::Experiment(c) => {
            let (cfg, dir) = load(&c)?;
            let report = harness::run_experiment(&cfg)?;
            print_table(&dir, &report);
        }
        Command::CompareReduction { common, ranks } => {
            let (cfg, dir) = load(&common)?;
            let ranks = if ranks.is_empty() { cfg.compare_ranks.clone() } else { ranks };
            let cmp = harness::compare_reduction(&cfg, &ranks)?;
            println!("reference: {}", cmp.reference);
            for e in &cmp.entries {
                let fmt = |v: Option<f64>| v.map_or("inf".to_string(), |d| format!("{d:.3e}"));
                println!(
                    "β = {:e}, p = {}, r = {}: control {}, output {}",
                    e.beta,
                    e.p,
                    e.r,
                    fmt(e.control_deviation),
                    fmt(e.output_deviation)
                );
            }
            println!("outputs in {}", dir.display());
        }
        Command::Schema => print!("{}", harness::config_schema()),
        Command::Preset { name } => {
            let cfg = harness::preset(&name)?;
            println!("{}", serde_json::to_string_pretty(&cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if is_config(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn is_config(e: &Error) -> bool {
    e.is_config() || matches!(e, Error::Io(_))
}
