//! Batch runner for the reduced-order control experiments.
//!
//! Exit status: 0 on success, 2 on invalid input or configuration,
//! 3 when a numerical method fails, 1 for anything else (I/O).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use pmreduce::pde::{compute_steady_state, fmt12, SteadyOptions, SteadySign, Trajectory};
use pmreduce::pm::{build_pm, parameterization_defect};
use pmreduce::scenario::{
    apply_overrides, config_to_toml, export_results, parse_config, preset, run_scenario, summary_json, sweep_csv,
    sweep_targets, ModelChoice, Range, ScenarioConfig,
};
use pmreduce::spectral::{EigenData, Grid, ModalBasis, NormKind};

#[derive(Parser)]
#[command(name = "pmreduce", version, about = "Reduced-order suboptimal control of a Burgers-type PDE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Preset name (sect5_h1, sect5_galerkin2, sect5_galerkin_m, sect6_h2, sect7_terminal, sect7_tracking).
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted override, e.g. `model.m=4`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ScenarioArgs {
    fn resolve(&self, fallback: &str) -> Result<ScenarioConfig> {
        let base = match (&self.scenario, &self.config) {
            (_, Some(path)) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                parse_config(&text)?
            }
            (Some(name), None) => preset(name)?,
            (None, None) => preset(fallback)?,
        };
        Ok(apply_overrides(&base, &self.overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve a reduced problem, drive the PDE and write all outputs.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
        /// Keep every n-th time level in trajectory.csv.
        #[arg(long, default_value_t = 10)]
        stride: usize,
    },
    /// Target-deformation sweep over (σ₁, σ₂).
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "0.2:0.7:6")]
        sigma1: String,
        #[arg(long, default_value = "0.01:0.5:6")]
        sigma2: String,
        /// `kind:m` entries; defaults to the scenario's sweep list.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parameterization defect of a stored trajectory.
    Defect {
        /// Trajectory CSV (t,x,y) as written by `run`.
        #[arg(long)]
        traj: PathBuf,
        /// Manifold registry name (zero, h1_2d, h1_m, h2_2d).
        #[arg(long)]
        pm: String,
        /// Resolved dimension.
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value = "h1")]
        norm: String,
        #[arg(long)]
        n_max: Option<usize>,
        /// Parameters come from this scenario.
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Write `t,Q_t` here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Nontrivial steady state of the uncontrolled PDE.
    Steady {
        #[arg(long, allow_hyphen_values = true)]
        sign: String,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Write `x,y` here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the resolved configuration as TOML.
    Show {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
}

fn write_or_print(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scenario, out, stride } => {
            let cfg = scenario.resolve("sect5_h1")?;
            let result = run_scenario(&cfg)?;
            export_results(&result, &out, stride)?;
            let summary = summary_json(&result)?;
            println!("scenario      {}", cfg.name);
            println!("model         {} (m = {})", cfg.model.kind, cfg.model.m);
            println!("cost J        {}", summary["cost"]);
            println!("relative err  {}", summary["relative_target_error"]);
            println!("defect Q      {}", summary["defect"]);
            println!("high-mode E   {}", summary["high_mode_energy"]);
            if let Some(b) = &result.bound {
                println!("second-mode bound holds: {}", b.holds);
            }
            println!("outputs in    {}", out.display());
        }
        Command::Sweep { scenario, sigma1, sigma2, models, out } => {
            let cfg = scenario.resolve("sect6_h2")?;
            let names = if models.is_empty() {
                cfg.sweep.as_ref().map(|s| s.models.clone()).unwrap_or_else(|| vec![format!("{}:{}", cfg.model.kind, cfg.model.m)])
            } else {
                models
            };
            let choices = names.iter().map(|n| ModelChoice::parse(n)).collect::<pmreduce::Result<Vec<_>>>()?;
            let records = sweep_targets(&cfg, Range::parse(&sigma1)?, Range::parse(&sigma2)?, &choices)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("sweep.csv"), sweep_csv(&records))?;
            fs::write(out.join("config.toml"), config_to_toml(&cfg)?)?;
            let failed = records.iter().filter(|r| r.error.is_some()).count();
            println!("{} runs, {} failed; results in {}", records.len(), failed, out.join("sweep.csv").display());
        }
        Command::Defect { traj, pm, m, norm, n_max, scenario, out } => {
            let cfg = scenario.resolve("sect5_h1")?;
            let text = fs::read_to_string(&traj).with_context(|| format!("reading {}", traj.display()))?;
            let trajectory = Trajectory::read_csv(&text, cfg.params.length)?;
            let params = cfg.spectral_params()?;
            let eigen = EigenData::new(&params, m, 2 * m.max(2))?;
            let h = build_pm(&pm, &eigen, m)?;
            let n_max = n_max.unwrap_or(trajectory.grid().intervals() / 2);
            let curve = parameterization_defect(&trajectory, h.as_ref(), m, NormKind::parse(&norm)?, n_max)?;
            let mut buf = Vec::new();
            curve.write_csv(&mut buf)?;
            write_or_print(&out, &String::from_utf8(buf)?)?;
            eprintln!("Q = {}", fmt12(curve.q));
        }
        Command::Steady { sign, scenario, out } => {
            let cfg = scenario.resolve("sect5_h1")?;
            let sign = SteadySign::parse(&sign)?;
            let params = cfg.spectral_params()?;
            let grid = Grid::new(cfg.grid.intervals, cfg.params.length)?;
            let y = compute_steady_state(sign, &params, grid, SteadyOptions::default())?;
            let mut text = String::from("x,y\n0,0\n");
            for (j, v) in y.values().iter().enumerate() {
                text.push_str(&format!("{},{}\n", fmt12(grid.node(j + 1)), fmt12(*v)));
            }
            text.push_str(&format!("{},0\n", fmt12(grid.length())));
            write_or_print(&out, &text)?;
            let modes = ModalBasis::new(grid).analyze(y.values());
            eprintln!("<y, e_n>, n = 1..3: {}, {}, {}", fmt12(modes.mode(1)), fmt12(modes.mode(2)), fmt12(modes.mode(3)));
        }
        Command::Show { scenario } => {
            let cfg = scenario.resolve("sect5_h1")?;
            cfg.validate()?;
            print!("{}", config_to_toml(&cfg)?);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<pmreduce::Error>() {
        Some(e) if e.is_validation() => 2,
        Some(e) if e.is_numeric() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
