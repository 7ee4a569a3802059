//! Experiment configuration, named presets, single runs, target sweeps and
//! result export.
//!
//! Configurations are TOML documents. Any leaf can be overridden with a
//! dotted `key=value` assignment, for example `model.m=4` or
//! `cost.control_weight=0.5`.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{defect_report, DefectReport};
use crate::error::{Error, Result};
use crate::ocp::{synthesize_suboptimal, write_solution_csv, BvpOptions, OcpProblem, PdeInputs, SynthesisOutcome};
use crate::pde::{compute_steady_state, fmt12, reflect, ControlOperator, PdeGrid, SteadyOptions, SteadySign};
use crate::pm::{build_pm, default_n_max};
use crate::reduced::{appendix_b_bound, build_model, BoundReport, CostSpec, H1TwoModeModel};
use crate::spectral::{EigenData, Grid, GridField, ModalBasis, ModalCoeffs, SpectralParams};

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub nu: f64,
    pub gamma: f64,
    /// `λ / λ_c`.
    pub lambda_factor: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub intervals: usize,
    pub dt: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Reduced-model registry name.
    pub kind: String,
    pub m: usize,
    pub operator: ControlOperator,
}

/// `y₀ = scale · y^{sign}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub sign: SteadySign,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// `Y = Σ_i factors[i]·⟨y^{signs[i]}, e_i⟩ e_i` with steady states of
    /// the scenario's own parameters.
    ModalCombination { factors: Vec<f64>, signs: Vec<SteadySign> },
    Explicit { coefficients: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKindName {
    Terminal,
    Tracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub kind: CostKindName,
    pub control_weight: f64,
    #[serde(default)]
    pub terminal_weight: f64,
    pub target: TargetSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Manifold whose defect is reported (registry name).
    pub defect_pm: String,
    pub defect_m: usize,
    /// Highest retained mode; `intervals / 2` when absent.
    #[serde(default)]
    pub n_max: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// `kind:m` entries, e.g. `galerkin:16`.
    pub models: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub params: ParamsConfig,
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub initial: InitialConfig,
    pub cost: CostConfig,
    #[serde(default)]
    pub solver: BvpOptions,
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

/// Preset names accepted by [`preset`].
pub const PRESETS: [&str; 6] =
    ["sect5_h1", "sect5_galerkin2", "sect5_galerkin_m", "sect6_h2", "sect7_terminal", "sect7_tracking"];

fn globally_distributed(name: &str, kind: &str, m: usize, factors: [f64; 2], signs: [SteadySign; 2]) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        params: ParamsConfig { nu: 1.0, gamma: 2.5, lambda_factor: 3.0, length: 1.3 * PI },
        grid: GridConfig { intervals: 251, dt: 1e-3, horizon: 3.0 },
        model: ModelConfig { kind: kind.to_string(), m, operator: ControlOperator::Identity },
        initial: InitialConfig { sign: SteadySign::Plus, scale: 1.0 },
        cost: CostConfig {
            kind: CostKindName::Terminal,
            control_weight: 1.0,
            terminal_weight: 20.0,
            target: TargetSpec::ModalCombination { factors: factors.to_vec(), signs: signs.to_vec() },
        },
        solver: BvpOptions::default(),
        diagnostics: DiagnosticsConfig { defect_pm: "h1_2d".into(), defect_m: 2, n_max: None },
        sweep: None,
    }
}

fn locally_distributed(name: &str, nu: f64, lambda_factor: f64, scale: f64, cost: CostConfig) -> ScenarioConfig {
    let length = 1.3 * PI;
    ScenarioConfig {
        name: name.to_string(),
        params: ParamsConfig { nu, gamma: 2.5, lambda_factor, length },
        grid: GridConfig { intervals: 251, dt: 1e-3, horizon: 3.0 },
        model: ModelConfig {
            kind: "h1_local".into(),
            m: 4,
            operator: ControlOperator::Indicator { a: 0.2 * length, b: 0.8 * length },
        },
        initial: InitialConfig { sign: SteadySign::Plus, scale },
        cost,
        solver: BvpOptions::default(),
        diagnostics: DiagnosticsConfig { defect_pm: "h1_m".into(), defect_m: 4, n_max: None },
        sweep: None,
    }
}

/// Named configuration reproducing one of the reference experiments.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    use SteadySign::{Minus, Plus};
    let sect5_target = ([-0.1, 1.6], [Minus, Minus]);
    let sect7_target = TargetSpec::ModalCombination { factors: vec![-0.1, 1.6], signs: vec![Minus, Minus] };
    let cfg = match name {
        "sect5_h1" => globally_distributed(name, "h1_2d", 2, sect5_target.0, sect5_target.1),
        "sect5_galerkin2" => globally_distributed(name, "galerkin", 2, sect5_target.0, sect5_target.1),
        "sect5_galerkin_m" => globally_distributed(name, "galerkin", 16, sect5_target.0, sect5_target.1),
        "sect6_h2" => {
            let mut c = globally_distributed(name, "h2_2d", 2, [-0.3, -0.1], [Plus, Plus]);
            c.diagnostics.defect_pm = "h2_2d".into();
            c.sweep = Some(SweepConfig { models: vec!["h1_2d:2".into(), "h2_2d:2".into(), "galerkin:16".into()] });
            c
        }
        "sect7_terminal" => locally_distributed(
            name,
            0.25,
            7.0,
            0.5,
            CostConfig { kind: CostKindName::Terminal, control_weight: 1.0, terminal_weight: 20.0, target: sect7_target },
        ),
        "sect7_tracking" => locally_distributed(
            name,
            0.2,
            3.0,
            0.8,
            CostConfig { kind: CostKindName::Tracking, control_weight: 0.02, terminal_weight: 0.0, target: sect7_target },
        ),
        other => {
            return Err(config_err(format!("unknown scenario '{other}' (presets: {})", PRESETS.join(", "))));
        }
    };
    Ok(cfg)
}

/// Applies `section.key=value` overrides. Values are parsed as TOML
/// literals, falling back to plain strings.
pub fn apply_overrides(cfg: &ScenarioConfig, overrides: &[String]) -> Result<ScenarioConfig> {
    if overrides.is_empty() {
        return Ok(cfg.clone());
    }
    let mut doc = toml::Value::try_from(cfg).map_err(|e| Error::Serialize(e.to_string()))?;
    for item in overrides {
        let (path, raw) = item.split_once('=').ok_or_else(|| config_err(format!("override '{item}' is not key=value")))?;
        let value = parse_literal(raw.trim());
        let keys: Vec<&str> = path.trim().split('.').collect();
        let mut node = &mut doc;
        for key in &keys[..keys.len() - 1] {
            let table = node.as_table_mut().ok_or_else(|| config_err(format!("'{path}' does not name a table")))?;
            node = table.entry(key.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        }
        let table = node.as_table_mut().ok_or_else(|| config_err(format!("'{path}' does not name a table")))?;
        table.insert(keys[keys.len() - 1].to_string(), value);
    }
    doc.try_into().map_err(|e: toml::de::Error| config_err(e.to_string()))
}

fn parse_literal(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: toml::Value,
    }
    toml::from_str::<Wrap>(&format!("v = {raw}")).map(|w| w.v).unwrap_or_else(|_| toml::Value::String(raw.to_string()))
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    toml::from_str(text).map_err(|e| config_err(e.to_string()))
}

pub fn config_to_toml(cfg: &ScenarioConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Serialize(e.to_string()))
}

impl ScenarioConfig {
    pub fn spectral_params(&self) -> Result<SpectralParams> {
        let p = &self.params;
        SpectralParams::with_critical_factor(p.nu, p.gamma, p.lambda_factor, p.length)
    }

    /// Checks everything that can be checked without numerics.
    pub fn validate(&self) -> Result<()> {
        let params = self.spectral_params()?;
        let grid = Grid::new(self.grid.intervals, self.params.length)?;
        PdeGrid::new(grid, self.grid.dt, self.grid.horizon)?;
        let m = self.model.m;
        if m == 0 || 2 * m > grid.interior() {
            return Err(config_err(format!("model.m = {m} does not fit the grid")));
        }
        self.model.operator.validate(m, self.params.length)?;
        if !(self.cost.control_weight > 0.0) {
            return Err(config_err("cost.control_weight must be positive"));
        }
        match self.cost.kind {
            CostKindName::Terminal if !(self.cost.terminal_weight > 0.0) => {
                return Err(config_err("terminal cost needs cost.terminal_weight > 0"));
            }
            _ => {}
        }
        match &self.cost.target {
            TargetSpec::ModalCombination { factors, signs } => {
                if factors.is_empty() || factors.len() != signs.len() {
                    return Err(config_err("target factors and signs must have equal nonzero length"));
                }
                if params.lambda() <= params.lambda_c() {
                    return Err(config_err("a steady-state target needs λ > λ_c"));
                }
            }
            TargetSpec::Explicit { coefficients } => {
                if coefficients.iter().all(|c| *c == 0.0) {
                    return Err(config_err("target must be nonzero"));
                }
            }
        }
        if !self.initial.scale.is_finite() {
            return Err(config_err("initial.scale must be finite"));
        }
        let n_max = self.n_max();
        if n_max <= self.diagnostics.defect_m.max(m) || n_max > grid.interior() {
            return Err(config_err(format!("diagnostics.n_max = {n_max} out of range")));
        }
        let eigen = EigenData::new(&params, self.diagnostics.defect_m, 2 * self.diagnostics.defect_m.max(2))?;
        build_pm(&self.diagnostics.defect_pm, &eigen, self.diagnostics.defect_m)?;
        Ok(())
    }

    pub fn n_max(&self) -> usize {
        self.diagnostics.n_max.unwrap_or_else(|| default_n_max(self.grid.intervals))
    }
}

/// Steady states and the resolved target for one parameter set.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub plus: GridField,
    pub minus: GridField,
    pub initial: GridField,
    pub target: ModalCoeffs,
}

/// `y⁺` and `y⁻ = −y⁺(l − x)`. The one-sided convection stencil breaks
/// the discrete reflection symmetry slightly, so the negative branch is
/// taken as the exact mirror image rather than marched separately.
fn steady_pair(params: &SpectralParams, grid: Grid) -> Result<(GridField, GridField)> {
    let plus = compute_steady_state(SteadySign::Plus, params, grid, SteadyOptions::default())?;
    let minus = reflect(&plus);
    Ok((plus, minus))
}

fn resolve_target(spec: &TargetSpec, plus: &ModalCoeffs, minus: &ModalCoeffs) -> ModalCoeffs {
    match spec {
        TargetSpec::ModalCombination { factors, signs } => ModalCoeffs(
            factors
                .iter()
                .zip(signs)
                .enumerate()
                .map(|(i, (f, s))| {
                    let source = if *s == SteadySign::Plus { plus } else { minus };
                    f * source.mode(i + 1)
                })
                .collect(),
        ),
        TargetSpec::Explicit { coefficients } => ModalCoeffs(coefficients.clone()),
    }
}

pub fn prepare(cfg: &ScenarioConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let params = cfg.spectral_params()?;
    let grid = Grid::new(cfg.grid.intervals, cfg.params.length)?;
    let (plus, minus) = steady_pair(&params, grid)?;
    Ok(finish_prepare(cfg, plus, minus))
}

fn finish_prepare(cfg: &ScenarioConfig, plus: GridField, minus: GridField) -> PreparedData {
    let basis = ModalBasis::new(plus.grid());
    let target = resolve_target(&cfg.cost.target, &basis.analyze(plus.values()), &basis.analyze(minus.values()));
    let source = if cfg.initial.sign == SteadySign::Plus { &plus } else { &minus };
    let initial = GridField::new(source.grid(), source.values().iter().map(|v| cfg.initial.scale * v).collect())
        .expect("same grid");
    PreparedData { plus, minus, initial, target }
}

/// One finished run.
#[derive(Debug)]
pub struct RunResult {
    pub config: ScenarioConfig,
    pub target: ModalCoeffs,
    pub outcome: SynthesisOutcome,
    pub report: DefectReport,
    /// Only for the two-mode `h¹` model.
    pub bound: Option<BoundReport>,
}

impl RunResult {
    pub fn cost(&self) -> f64 {
        self.outcome.cost
    }
    pub fn relative_target_error(&self) -> f64 {
        self.outcome.relative_target_error
    }
}

fn with_context(cfg: &ScenarioConfig, err: Error) -> Error {
    match err {
        Error::NewtonFailure(msg) => Error::NewtonFailure(format!("scenario {}: {msg}", cfg.name)),
        Error::Config(msg) => Error::Config(format!("scenario {}: {msg}", cfg.name)),
        Error::InvalidArgument(msg) => Error::InvalidArgument(format!("scenario {}: {msg}", cfg.name)),
        other => other,
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunResult> {
    let data = prepare(cfg).map_err(|e| with_context(cfg, e))?;
    run_prepared(cfg, &data).map_err(|e| with_context(cfg, e))
}

/// Runs with steady states and target already resolved.
pub fn run_prepared(cfg: &ScenarioConfig, data: &PreparedData) -> Result<RunResult> {
    cfg.validate()?;
    let params = cfg.spectral_params()?;
    let grid = Grid::new(cfg.grid.intervals, cfg.params.length)?;
    let pde_grid = PdeGrid::new(grid, cfg.grid.dt, cfg.grid.horizon)?;
    let m = cfg.model.m;
    let control = cfg.model.operator.reduced_matrix(m, cfg.params.length)?;
    let model = build_model(&cfg.model.kind, &params, m, control.clone())?;
    let cost = match cfg.cost.kind {
        CostKindName::Terminal => CostSpec::terminal(cfg.cost.control_weight, cfg.cost.terminal_weight, data.target.clone())?,
        CostKindName::Tracking => CostSpec::tracking(cfg.cost.control_weight, data.target.clone())?,
    };
    let basis = ModalBasis::new(grid);
    let y0_modes = basis.analyze(data.initial.values());
    let problem = OcpProblem::new(model, cost, cfg.grid.horizon, y0_modes.as_slice()[..m].to_vec())?;
    let inputs = PdeInputs { params: &params, grid: &pde_grid, initial: &data.initial, operator: &cfg.model.operator };
    let outcome = synthesize_suboptimal(&problem, &inputs, &cfg.solver)?;

    let dm = cfg.diagnostics.defect_m;
    let eigen = EigenData::new(&params, dm, 2 * dm.max(2))?;
    let pm = build_pm(&cfg.diagnostics.defect_pm, &eigen, dm)?;
    let report = defect_report(&outcome.trajectory, pm.as_ref(), dm, cfg.n_max(), outcome.cost, &data.target)?;

    let bound = if cfg.model.kind == "h1_2d" {
        let eigen2 = EigenData::new(&params, 2, 4)?;
        let h1 = H1TwoModeModel::new(&eigen2, control)?;
        let sol = &outcome.solution;
        Some(appendix_b_bound(&h1, &sol.mesh, &sol.states, outcome.control.signal.values())?)
    } else {
        None
    };
    Ok(RunResult { config: cfg.clone(), target: data.target.clone(), outcome, report, bound })
}

/// Rounds to the 12 significant digits used in every output file.
fn r12(v: f64) -> serde_json::Value {
    fmt12(v).parse::<f64>().ok().and_then(serde_json::Number::from_f64).map_or(serde_json::Value::Null, serde_json::Value::Number)
}

/// Summary document; `provenance` echoes the resolved configuration.
pub fn summary_json(result: &RunResult) -> Result<serde_json::Value> {
    let sol = &result.outcome.solution;
    let rep = &result.report;
    let bound = result.bound.map(|b| {
        serde_json::json!({
            "radius": r12(b.radius),
            "control_integral": r12(b.control_integral),
            "bound": r12(b.bound),
            "max_abs_second_mode": r12(b.max_abs_second_mode),
            "holds": b.holds,
        })
    });
    let config = serde_json::to_value(&result.config).map_err(|e| Error::Serialize(e.to_string()))?;
    Ok(serde_json::json!({
        "scenario": result.config.name,
        "model": result.outcome.control.model,
        "cost_kind": result.outcome.control.cost,
        "cost": r12(result.outcome.cost),
        "reduced_cost": r12(result.outcome.reduced_cost),
        "relative_target_error": r12(result.outcome.relative_target_error),
        "defect": r12(rep.q),
        "is_parameterizing": rep.is_parameterizing,
        "high_mode_energy": r12(rep.high_mode_energy),
        "target": result.target.as_slice().iter().map(|v| r12(*v)).collect::<Vec<_>>(),
        "bvp": {
            "nodes": sol.mesh.len(),
            "residual": r12(sol.residual_norm),
            "newton_iterations": sol.newton_iterations,
            "refinements": sol.refinements,
            "control_change": r12(sol.control_change),
        },
        "bound": bound,
        "provenance": { "config": config },
    }))
}

/// Writes `summary.json`, `profile.csv`, `defect.csv`, `energy.csv`,
/// `solution.csv`, `trajectory.csv` and `modal.csv` (every `stride`-th
/// step; modes up to `n_max`) into `dir`.
pub fn export_results(result: &RunResult, dir: &Path, stride: usize) -> Result<()> {
    fs::create_dir_all(dir)?;
    let summary = summary_json(result)?;
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Serialize(e.to_string()))?;
    fs::write(dir.join("summary.json"), text + "\n")?;

    let traj = &result.outcome.trajectory;
    let grid = traj.grid();
    let y_target = ModalBasis::new(grid).synthesize(result.target.as_slice());
    let final_state = traj.final_state();
    let mut profile = String::from("x,y_T,Y_target\n");
    profile.push_str(&format!("{},0,0\n", fmt12(0.0)));
    for (j, (y, t)) in final_state.values().iter().zip(&y_target).enumerate() {
        profile.push_str(&format!("{},{},{}\n", fmt12(grid.node(j + 1)), fmt12(*y), fmt12(*t)));
    }
    profile.push_str(&format!("{},0,0\n", fmt12(grid.length())));
    fs::write(dir.join("profile.csv"), profile)?;

    let mut buf = Vec::new();
    result.report.write_defect_csv(&mut buf)?;
    fs::write(dir.join("defect.csv"), &buf)?;
    buf.clear();
    result.report.write_energy_csv(&mut buf)?;
    fs::write(dir.join("energy.csv"), &buf)?;
    buf.clear();
    write_solution_csv(&mut buf, &result.outcome.solution, &result.outcome.control.signal)?;
    fs::write(dir.join("solution.csv"), &buf)?;
    buf.clear();
    traj.write_csv(&mut buf, stride.max(1))?;
    fs::write(dir.join("trajectory.csv"), &buf)?;
    buf.clear();
    traj.write_modal_csv(&mut buf, result.config.n_max(), stride.max(1))?;
    fs::write(dir.join("modal.csv"), &buf)?;
    Ok(())
}

/// `start:end:count` with inclusive ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

impl Range {
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let bad = || config_err(format!("range '{text}' must be start:end:count"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let end: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if count == 0 || !start.is_finite() || !end.is_finite() || (count == 1 && start != end) {
            return Err(bad());
        }
        Ok(Self { start, end, count })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        (0..self.count).map(|k| self.start + (self.end - self.start) * k as f64 / (self.count - 1) as f64).collect()
    }
}

/// Model entry of a sweep: registry name and dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelChoice {
    pub kind: String,
    pub m: usize,
}

impl ModelChoice {
    pub fn parse(text: &str) -> Result<Self> {
        let (kind, m) = text.split_once(':').ok_or_else(|| config_err(format!("model '{text}' must be kind:m")))?;
        let m = m.trim().parse().map_err(|_| config_err(format!("bad dimension in '{text}'")))?;
        Ok(Self { kind: kind.trim().to_string(), m })
    }

    pub fn label(&self) -> String {
        format!("{}:{}", self.kind, self.m)
    }
}

/// One sweep cell for one model; failures are kept, not raised.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub sigma1: f64,
    pub sigma2: f64,
    pub model: String,
    pub cost: Option<f64>,
    pub relative_error: Option<f64>,
    pub error: Option<String>,
}

/// Target `Y = −σ₁⟨y⁺,e₁⟩e₁ − σ₂⟨y⁺,e₂⟩e₂` over a grid of `(σ₁, σ₂)`.
/// Cells run concurrently; records come back in row-major order.
pub fn sweep_targets(base: &ScenarioConfig, sigma1: Range, sigma2: Range, models: &[ModelChoice]) -> Result<Vec<SweepRecord>> {
    if models.is_empty() {
        return Err(config_err("sweep needs at least one model"));
    }
    base.validate()?;
    let params = base.spectral_params()?;
    let grid = Grid::new(base.grid.intervals, base.params.length)?;
    let (plus, minus) = steady_pair(&params, grid)?;
    let mut jobs = Vec::new();
    for s1 in sigma1.values() {
        for s2 in sigma2.values() {
            for model in models {
                let mut cfg = base.clone();
                cfg.model.kind = model.kind.clone();
                cfg.model.m = model.m;
                cfg.cost.target = TargetSpec::ModalCombination {
                    factors: vec![-s1, -s2],
                    signs: vec![SteadySign::Plus, SteadySign::Plus],
                };
                cfg.name = format!("{}[{},{},{}]", base.name, fmt12(s1), fmt12(s2), model.label());
                jobs.push((s1, s2, model.label(), cfg));
            }
        }
    }
    let records = jobs
        .into_par_iter()
        .map(|(s1, s2, label, cfg)| {
            let data = finish_prepare(&cfg, plus.clone(), minus.clone());
            match run_prepared(&cfg, &data) {
                Ok(r) => SweepRecord {
                    sigma1: s1,
                    sigma2: s2,
                    model: label,
                    cost: Some(r.cost()),
                    relative_error: Some(r.relative_target_error()),
                    error: None,
                },
                Err(e) => SweepRecord { sigma1: s1, sigma2: s2, model: label, cost: None, relative_error: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    Ok(records)
}

/// Long-format CSV `sigma1,sigma2,model,J,rel_err,error`.
pub fn sweep_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from("sigma1,sigma2,model,J,rel_err,error\n");
    let num = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), fmt12);
    for r in records {
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        out.push_str(&format!("{},{},{},{},{},{}\n", fmt12(r.sigma1), fmt12(r.sigma2), r.model, num(r.cost), num(r.relative_error), err));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            preset(name).unwrap().validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(preset("sect9").is_err());
    }

    #[test]
    fn toml_roundtrip() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            assert_eq!(parse_config(&config_to_toml(&cfg).unwrap()).unwrap(), cfg);
        }
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = preset("sect7_terminal").unwrap();
        let out = apply_overrides(
            &cfg,
            &["model.m=6".into(), "cost.control_weight=0.5".into(), "model.operator.kind=identity".into(), "solver.scheme=trapezoid".into()],
        )
        .unwrap();
        assert_eq!(out.model.m, 6);
        assert_eq!(out.cost.control_weight, 0.5);
        assert_eq!(out.model.operator, ControlOperator::Identity);
        assert_eq!(out.solver.scheme, "trapezoid");
        assert!(apply_overrides(&cfg, &["model.bogus=1".into()]).is_err());
        assert!(apply_overrides(&cfg, &["no_equals".into()]).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = preset("sect5_h1").unwrap();
        cfg.cost.control_weight = 0.0;
        assert!(cfg.validate().unwrap_err().is_validation());
        let mut cfg = preset("sect5_h1").unwrap();
        cfg.model.m = 3;
        assert!(cfg.validate().is_ok());
        cfg.model.m = 200;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(Range::parse("0.2:0.7:6").unwrap().values().len(), 6);
        assert_eq!(Range::parse("0.3:0.3:1").unwrap().values(), vec![0.3]);
        assert!(Range::parse("0.2:0.7").is_err());
        assert!(Range::parse("0.2:0.7:0").is_err());
        assert_eq!(ModelChoice::parse("galerkin:16").unwrap(), ModelChoice { kind: "galerkin".into(), m: 16 });
    }
}
