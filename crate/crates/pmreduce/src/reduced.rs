//! Reduced state and costate vector fields in modal coordinates.
//!
//! Every model exposes `f(z, v)` with `v = Mᵀu` already applied, and the
//! adjoint action `Σ_j p_j ∂f_j/∂z_i`. The costate drift is assembled from
//! that and the gradient of the running state cost, so terminal and
//! tracking costs share one code path.

use serde::{Deserialize, Serialize};

use crate::dense::Matrix;
use crate::error::{invalid, Result};
use crate::pm::{H1MultiMode, H1TwoMode, H1TwoModeCoeffs, H2TwoMode, PmFunction, ZeroPm};
use crate::spectral::{EigenData, ModalCoeffs, SpectralParams};

/// Shared data: eigenvalues, `α`, control coupling `M` and `MᵀM`.
#[derive(Debug, Clone)]
pub struct ModelCore {
    m: usize,
    betas: Vec<f64>,
    alpha: f64,
    control: Matrix,
    gram: Matrix,
}

impl ModelCore {
    pub fn new(eigen: &EigenData, m: usize, control: Matrix) -> Result<Self> {
        if m == 0 {
            return Err(invalid("reduced dimension must be at least 1"));
        }
        if eigen.n_max() < 2 * m {
            return Err(invalid(format!("eigen data must hold at least {} modes", 2 * m)));
        }
        if !control.is_square() || control.rows() != m {
            return Err(invalid(format!("control matrix must be {m}x{m}")));
        }
        if control.max_abs() == 0.0 {
            return Err(invalid("control matrix must be nonzero"));
        }
        let gram = control.transpose().mul(&control);
        Ok(Self { m, betas: eigen.betas()[..2 * m].to_vec(), alpha: eigen.alpha(), control, gram })
    }

    pub fn dim(&self) -> usize {
        self.m
    }
    /// `β_n`, 1-based, `n ≤ 2m`.
    pub fn beta(&self, n: usize) -> f64 {
        self.betas[n - 1]
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn control(&self) -> &Matrix {
        &self.control
    }
    /// `MᵀM`, mapping costates to forcing in `v* = −(1/μ₁)MᵀMp`.
    pub fn gram(&self) -> &Matrix {
        &self.gram
    }
}

pub trait ReducedModel: Send + Sync {
    fn name(&self) -> &'static str;
    fn core(&self) -> &ModelCore;
    fn pm(&self) -> &dyn PmFunction;
    /// `ż = f(z, v)`.
    fn field(&self, z: &[f64], v: &[f64]) -> Vec<f64>;
    /// `(Σ_j p_j ∂f_j/∂z_i)_i`; independent of `v`.
    fn field_adjoint(&self, z: &[f64], p: &[f64]) -> Vec<f64>;

    fn dim(&self) -> usize {
        self.core().dim()
    }
}

/// Terminal payoff or tracking, with the control weight `μ₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostKind {
    TerminalPayoff { terminal_weight: f64 },
    Tracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub kind: CostKind,
    pub control_weight: f64,
    /// Target modal coefficients from mode 1; missing modes are zero.
    pub target: ModalCoeffs,
    /// Whether the running cost includes `½‖y‖²` (or `½‖y − Y‖²`).
    pub running_state: bool,
}

impl CostSpec {
    pub fn terminal(control_weight: f64, terminal_weight: f64, target: ModalCoeffs) -> Result<Self> {
        if !(control_weight > 0.0) {
            return Err(invalid("control weight must be positive"));
        }
        if !(terminal_weight >= 0.0) {
            return Err(invalid("terminal weight must be nonnegative"));
        }
        Ok(Self {
            kind: CostKind::TerminalPayoff { terminal_weight },
            control_weight,
            target,
            running_state: true,
        })
    }

    pub fn tracking(control_weight: f64, target: ModalCoeffs) -> Result<Self> {
        if !(control_weight > 0.0) {
            return Err(invalid("control weight must be positive"));
        }
        Ok(Self { kind: CostKind::Tracking, control_weight, target, running_state: true })
    }

    /// Drops the running state term (used for the zero-cost sanity check).
    pub fn without_running_state(mut self) -> Self {
        self.running_state = false;
        self
    }

    pub fn terminal_weight(&self) -> f64 {
        match self.kind {
            CostKind::TerminalPayoff { terminal_weight } => terminal_weight,
            CostKind::Tracking => 0.0,
        }
    }

    pub fn is_tracking(&self) -> bool {
        matches!(self.kind, CostKind::Tracking)
    }

    /// Target seen by the running cost: `Y` for tracking, zero otherwise.
    fn running_target(&self, n: usize) -> f64 {
        if self.is_tracking() { self.target.mode(n) } else { 0.0 }
    }
}

/// `½‖z + h(z) − Y_run‖²` with `Y_run` the running target.
pub fn running_state_cost(model: &dyn ReducedModel, cost: &CostSpec, z: &[f64]) -> f64 {
    if !cost.running_state {
        return 0.0;
    }
    let m = model.dim();
    let h = model.pm().eval(z);
    let low: f64 = (1..=m).map(|i| (z[i - 1] - cost.running_target(i)).powi(2)).sum();
    let high: f64 = h.iter().enumerate().map(|(k, hn)| (hn - cost.running_target(m + 1 + k)).powi(2)).sum();
    0.5 * (low + high)
}

/// Gradient of [`running_state_cost`] through the manifold.
pub fn running_state_gradient(model: &dyn ReducedModel, cost: &CostSpec, z: &[f64]) -> Vec<f64> {
    let m = model.dim();
    if !cost.running_state {
        return vec![0.0; m];
    }
    let h = model.pm().eval(z);
    let jac = model.pm().jacobian(z);
    (1..=m)
        .map(|i| {
            let mut g = z[i - 1] - cost.running_target(i);
            for (k, hn) in h.iter().enumerate() {
                g += (hn - cost.running_target(m + 1 + k)) * jac[k][i - 1];
            }
            g
        })
        .collect()
}

/// Hamiltonian `G(z) + (μ₁/2)‖u‖² + pᵀf(z, Mᵀu)`.
pub fn hamiltonian(model: &dyn ReducedModel, cost: &CostSpec, z: &[f64], p: &[f64], u: &[f64]) -> f64 {
    let v = model.core().control().apply_transpose(u);
    let f = model.field(z, &v);
    running_state_cost(model, cost, z)
        + 0.5 * cost.control_weight * u.iter().map(|x| x * x).sum::<f64>()
        + p.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>()
}

/// Costate drift `−∇_z H`.
pub fn costate_rf(model: &dyn ReducedModel, cost: &CostSpec, z: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    let m = model.dim();
    if z.len() != m || p.len() != m {
        return Err(invalid(format!("state and costate must have dimension {m}")));
    }
    let grad = running_state_gradient(model, cost, z);
    let adj = model.field_adjoint(z, p);
    Ok(grad.iter().zip(&adj).map(|(g, a)| -g - a).collect())
}

/// Two-mode one-layer model with the closed-form field.
pub struct H1TwoModeModel {
    core: ModelCore,
    pm: H1TwoMode,
}

impl H1TwoModeModel {
    pub fn new(eigen: &EigenData, control: Matrix) -> Result<Self> {
        Ok(Self { core: ModelCore::new(eigen, 2, control)?, pm: H1TwoMode::new(eigen)? })
    }
    pub fn coeffs(&self) -> H1TwoModeCoeffs {
        self.pm.coeffs()
    }
}

impl ReducedModel for H1TwoModeModel {
    fn name(&self) -> &'static str {
        "h1_2d"
    }
    fn core(&self) -> &ModelCore {
        &self.core
    }
    fn pm(&self) -> &dyn PmFunction {
        &self.pm
    }
    fn field(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        let (a, c) = (self.core.alpha, self.pm.coeffs());
        let (a1, a2) = (c.cross, c.square);
        let (z1, z2) = (z[0], z[1]);
        vec![
            self.core.beta(1) * z1 + a * (z1 * z2 + a1 * z1 * z2 * z2 + a1 * a2 * z1 * z2.powi(3)) + v[0],
            self.core.beta(2) * z2 + a * (-z1 * z1 + 2.0 * a1 * z1 * z1 * z2 + 2.0 * a2 * z2.powi(3)) + v[1],
        ]
    }
    fn field_adjoint(&self, z: &[f64], p: &[f64]) -> Vec<f64> {
        let (a, c) = (self.core.alpha, self.pm.coeffs());
        let (a1, a2) = (c.cross, c.square);
        let (z1, z2, p1, p2) = (z[0], z[1], p[0], p[1]);
        vec![
            self.core.beta(1) * p1 + a * p1 * z2 - 2.0 * a * p2 * z1 + a * a1 * p1 * z2 * z2
                + 4.0 * a * a1 * p2 * z1 * z2
                + a * a1 * a2 * p1 * z2.powi(3),
            self.core.beta(2) * p2 + a * p1 * z1 + 2.0 * a * a1 * p1 * z1 * z2 + 2.0 * a * a1 * p2 * z1 * z1
                + 6.0 * a * a2 * p2 * z2 * z2
                + 3.0 * a * a1 * a2 * p1 * z1 * z2 * z2,
        ]
    }
}

/// Two-mode two-layer model.
pub struct H2TwoModeModel {
    core: ModelCore,
    pm: H2TwoMode,
}

impl H2TwoModeModel {
    pub fn new(eigen: &EigenData, control: Matrix) -> Result<Self> {
        Ok(Self { core: ModelCore::new(eigen, 2, control)?, pm: H2TwoMode::new(eigen)? })
    }
    pub fn with_pm(eigen: &EigenData, control: Matrix, pm: H2TwoMode) -> Result<Self> {
        Ok(Self { core: ModelCore::new(eigen, 2, control)?, pm })
    }
}

impl ReducedModel for H2TwoModeModel {
    fn name(&self) -> &'static str {
        "h2_2d"
    }
    fn core(&self) -> &ModelCore {
        &self.core
    }
    fn pm(&self) -> &dyn PmFunction {
        &self.pm
    }
    fn field(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        let a = self.core.alpha;
        let h = self.pm.eval(z);
        let (z1, z2, h3, h4) = (z[0], z[1], h[0], h[1]);
        vec![
            self.core.beta(1) * z1 + a * (z1 * z2 + z2 * h3 + h3 * h4) + v[0],
            self.core.beta(2) * z2 - a * z1 * z1 + 2.0 * a * (z1 * h3 + z2 * h4) + v[1],
        ]
    }
    fn field_adjoint(&self, z: &[f64], p: &[f64]) -> Vec<f64> {
        let a = self.core.alpha;
        let h = self.pm.eval(z);
        let d = self.pm.jacobian(z);
        let (z1, z2, h3, h4, p1, p2) = (z[0], z[1], h[0], h[1], p[0], p[1]);
        let (h3_1, h3_2, h4_1, h4_2) = (d[0][0], d[0][1], d[1][0], d[1][1]);
        vec![
            p1 * (self.core.beta(1) + a * z2 + a * z2 * h3_1 + a * h3_1 * h4 + a * h3 * h4_1)
                + 2.0 * a * p2 * (-z1 + h3 + z1 * h3_1 + z2 * h4_1),
            a * p1 * (z1 + h3 + z2 * h3_2 + h3_2 * h4 + h3 * h4_2)
                + p2 * (self.core.beta(2) + 2.0 * a * z1 * h3_2 + 2.0 * a * h4 + 2.0 * a * z2 * h4_2),
        ]
    }
}

/// Low-low interaction group `iα(−Σ ω z_j z_{i−j} + Σ z_j z_{j−i})`.
fn low_low(core: &ModelCore, z: &[f64], i: usize) -> f64 {
    let m = core.m;
    let zz = |k: usize| z[k - 1];
    let mut s = 0.0;
    for j in 1..=i / 2 {
        let omega = if i % 2 == 0 && 2 * j == i { 0.5 } else { 1.0 };
        s -= omega * zz(j) * zz(i - j);
    }
    for j in i + 1..=m {
        s += zz(j) * zz(j - i);
    }
    i as f64 * core.alpha * s
}

/// `∂/∂z_i` of the bracket in [`low_low`] for row `j` (without `jα`).
fn low_low_partial(m: usize, z: &[f64], j: usize, i: usize) -> f64 {
    let zz = |k: usize| z[k - 1];
    let mut d = 0.0;
    if i > j {
        d += zz(i - j);
    }
    if i < j {
        d -= zz(j - i);
    }
    if i + j <= m {
        d += zz(i + j);
    }
    d
}

/// `m`-mode Galerkin truncation (low-low interactions only).
pub struct GalerkinModel {
    core: ModelCore,
    pm: ZeroPm,
}

impl GalerkinModel {
    pub fn new(eigen: &EigenData, m: usize, control: Matrix) -> Result<Self> {
        Ok(Self { core: ModelCore::new(eigen, m, control)?, pm: ZeroPm::new(m) })
    }
}

impl ReducedModel for GalerkinModel {
    fn name(&self) -> &'static str {
        "galerkin"
    }
    fn core(&self) -> &ModelCore {
        &self.core
    }
    fn pm(&self) -> &dyn PmFunction {
        &self.pm
    }
    fn field(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        (1..=self.core.m).map(|i| self.core.beta(i) * z[i - 1] + low_low(&self.core, z, i) + v[i - 1]).collect()
    }
    fn field_adjoint(&self, z: &[f64], p: &[f64]) -> Vec<f64> {
        let m = self.core.m;
        (1..=m)
            .map(|i| {
                let mut s = self.core.beta(i) * p[i - 1];
                for j in 1..=m {
                    s += p[j - 1] * j as f64 * self.core.alpha * low_low_partial(m, z, j, i);
                }
                s
            })
            .collect()
    }
}

/// `m`-mode model closed by a manifold on modes `m+1..=2m`, written as the
/// low-low, low-high and high-high interaction groups.
pub struct LocalH1Model {
    core: ModelCore,
    pm: Box<dyn PmFunction>,
}

impl LocalH1Model {
    pub fn new(eigen: &EigenData, m: usize, control: Matrix) -> Result<Self> {
        let pm = Box::new(H1MultiMode::new(eigen, m)?);
        Self::with_pm(eigen, m, control, pm)
    }

    /// Any manifold supported on modes `m+1..=2m`.
    pub fn with_pm(eigen: &EigenData, m: usize, control: Matrix, pm: Box<dyn PmFunction>) -> Result<Self> {
        if pm.low_dim() != m || pm.n_high() > m {
            return Err(invalid("manifold must map m modes into modes m+1..=2m"));
        }
        Ok(Self { core: ModelCore::new(eigen, m, control)?, pm })
    }

    /// `h^{(n)}` from a padded evaluation (zero outside `m+1..=2m`).
    fn padded(&self, z: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let m = self.core.m;
        let mut h = self.pm.eval(z);
        let mut d = self.pm.jacobian(z);
        h.resize(m, 0.0);
        d.resize(m, vec![0.0; m]);
        (h, d)
    }
}

impl ReducedModel for LocalH1Model {
    fn name(&self) -> &'static str {
        "h1_local"
    }
    fn core(&self) -> &ModelCore {
        &self.core
    }
    fn pm(&self) -> &dyn PmFunction {
        self.pm.as_ref()
    }
    fn field(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        let m = self.core.m;
        let (h, _) = self.padded(z);
        let hn = |n: usize| h[n - m - 1];
        (1..=m)
            .map(|i| {
                let ia = i as f64 * self.core.alpha;
                let low_high: f64 = (m - i + 1..=m).map(|j| z[j - 1] * hn(j + i)).sum();
                let high_high: f64 = (m + 1..=2 * m - i).map(|n| hn(n) * hn(n + i)).sum();
                self.core.beta(i) * z[i - 1] + low_low(&self.core, z, i) + ia * low_high + ia * high_high + v[i - 1]
            })
            .collect()
    }
    fn field_adjoint(&self, z: &[f64], p: &[f64]) -> Vec<f64> {
        let m = self.core.m;
        let (h, d) = self.padded(z);
        let hn = |n: usize| h[n - m - 1];
        let dh = |n: usize, i: usize| d[n - m - 1][i - 1];
        (1..=m)
            .map(|i| {
                let mut s = self.core.beta(i) * p[i - 1];
                for j in 1..=m {
                    let ia = low_low_partial(m, z, j, i);
                    let mut ib: f64 = (m - j + 1..=m).map(|k| z[k - 1] * dh(k + j, i)).sum();
                    if i + j > m {
                        ib += hn(i + j);
                    }
                    let ic: f64 =
                        (m + 1..=2 * m - j).map(|n| dh(n, i) * hn(n + j) + hn(n) * dh(n + j, i)).sum();
                    s += p[j - 1] * j as f64 * self.core.alpha * (ia + ib + ic);
                }
                s
            })
            .collect()
    }
}

/// Named reduced-model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    H1TwoMode,
    H2TwoMode,
    H1Local,
    Galerkin,
}

type ModelBuilder = fn(&EigenData, usize, Matrix) -> Result<Box<dyn ReducedModel>>;

fn require_two(m: usize) -> Result<()> {
    if m != 2 {
        return Err(invalid(format!("this model is two-dimensional, got m = {m}")));
    }
    Ok(())
}

/// Name → constructor table consulted by [`build_model`].
pub const MODEL_REGISTRY: &[(&str, ModelKind, ModelBuilder)] = &[
    ("h1_2d", ModelKind::H1TwoMode, |e, m, c| {
        require_two(m)?;
        Ok(Box::new(H1TwoModeModel::new(e, c)?))
    }),
    ("h2_2d", ModelKind::H2TwoMode, |e, m, c| {
        require_two(m)?;
        Ok(Box::new(H2TwoModeModel::new(e, c)?))
    }),
    ("h1_local", ModelKind::H1Local, |e, m, c| Ok(Box::new(LocalH1Model::new(e, m, c)?))),
    ("galerkin", ModelKind::Galerkin, |e, m, c| Ok(Box::new(GalerkinModel::new(e, m, c)?))),
];

impl ModelKind {
    pub fn parse(name: &str) -> Result<Self> {
        MODEL_REGISTRY.iter().find(|(n, _, _)| *n == name).map(|(_, k, _)| *k).ok_or_else(|| {
            let known: Vec<&str> = MODEL_REGISTRY.iter().map(|(n, _, _)| *n).collect();
            invalid(format!("unknown reduced model '{name}' (known: {})", known.join(", ")))
        })
    }

    pub fn name(self) -> &'static str {
        MODEL_REGISTRY.iter().find(|(_, k, _)| *k == self).map(|(n, _, _)| *n).unwrap()
    }

    pub fn build(self, params: &SpectralParams, m: usize, control: Matrix) -> Result<Box<dyn ReducedModel>> {
        let eigen = EigenData::new(params, m.max(1), 2 * m.max(2))?;
        let (_, _, builder) = MODEL_REGISTRY.iter().find(|(_, k, _)| *k == self).unwrap();
        builder(&eigen, m, control)
    }
}

pub fn build_model(name: &str, params: &SpectralParams, m: usize, control: Matrix) -> Result<Box<dyn ReducedModel>> {
    ModelKind::parse(name)?.build(params, m, control)
}

/// Outcome of the a-priori bound on the second mode of the two-mode model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub radius: f64,
    pub control_integral: f64,
    pub bound: f64,
    pub max_abs_second_mode: f64,
    pub holds: bool,
}

/// Checks `|z₂(t)| ≤ e^{C/R}·R` along a solved two-mode trajectory, with
/// `R = max{|z₂(0)|, α/|2αα₂|, √(|β₂|/|2αα₂|)}` and `C = ∫|(Mᵀu)₂| dt`
/// by the trapezoid rule on `times`.
pub fn appendix_b_bound(
    model: &H1TwoModeModel,
    times: &[f64],
    states: &[Vec<f64>],
    controls: &[Vec<f64>],
) -> Result<BoundReport> {
    if times.len() != states.len() || times.len() != controls.len() || times.is_empty() {
        return Err(invalid("times, states and controls must have equal nonzero length"));
    }
    let a = model.core.alpha;
    let a2 = model.coeffs().square;
    let denom = (2.0 * a * a2).abs();
    let mut radius = states[0][1].abs();
    if denom > 0.0 {
        radius = radius.max(a / denom).max((model.core.beta(2).abs() / denom).sqrt());
    }
    let forcing: Vec<f64> = controls.iter().map(|u| model.core.control.apply_transpose(u)[1].abs()).collect();
    let control_integral: f64 =
        times.windows(2).zip(forcing.windows(2)).map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1])).sum();
    let bound = if radius > 0.0 { (control_integral / radius).exp() * radius } else { 0.0 };
    let max_abs = states.iter().map(|z| z[1].abs()).fold(0.0, f64::max);
    Ok(BoundReport {
        radius,
        control_integral,
        bound,
        max_abs_second_mode: max_abs,
        holds: max_abs <= bound * (1.0 + 1e-12),
    })
}
