//! Eigenstructure of `ν∂ₓₓ + λ` on `(0, l)` with Dirichlet ends, sine
//! transforms, modal projections and norms.
//!
//! Conventions:
//! - Mode indices are 1-based in every public function; `ModalCoeffs`
//!   stores the coefficient of mode `n` at slot `n - 1`.
//! - The unnormalized DST-I of a vector `y_1..y_{N-1}` is
//!   `Y_k = Σ_j y_j sin(jkπ/N)`. Applying it twice multiplies by `N/2`.
//! - Physical modal coefficients are `c_n = ⟨y, e_n⟩ ≈ δx·√(2/l)·Y_n`
//!   (rectangle rule, exact for the discrete sine basis), and the grid field
//!   is recovered as `y_j = √(2/l)·Σ_n c_n sin(jnπ/N)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Physical parameters of the PDE `y_t = ν y_xx + λ y − γ y y_x + 𝔠u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    nu: f64,
    gamma: f64,
    lambda: f64,
    length: f64,
}

impl SpectralParams {
    pub fn new(nu: f64, gamma: f64, lambda: f64, length: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(invalid(format!("viscosity must be positive, got {nu}")));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(invalid(format!("nonlinearity strength must be nonnegative, got {gamma}")));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(invalid(format!("domain length must be positive, got {length}")));
        }
        if !lambda.is_finite() {
            return Err(invalid("growth parameter must be finite"));
        }
        Ok(Self { nu, gamma, lambda, length })
    }

    /// Builds parameters with `λ = factor·λ_c`.
    pub fn with_critical_factor(nu: f64, gamma: f64, factor: f64, length: f64) -> Result<Self> {
        let probe = Self::new(nu, gamma, 0.0, length)?;
        Self::new(nu, gamma, factor * probe.lambda_c(), length)
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Critical growth value `νπ²/l²` at which `e_1` loses stability.
    pub fn lambda_c(&self) -> f64 {
        self.nu * PI * PI / (self.length * self.length)
    }

    /// `β_n = λ − νn²π²/l²` for `n ≥ 1`.
    pub fn beta(&self, n: usize) -> f64 {
        debug_assert!(n >= 1);
        let k = n as f64 * PI / self.length;
        self.lambda - self.nu * k * k
    }

    /// Interaction constant `α = γπ/(√2 l^{3/2})`.
    pub fn interaction(&self) -> f64 {
        self.gamma * PI / (2f64.sqrt() * self.length.powf(1.5))
    }

    /// `⟨−γ e_i ∂ₓe_j, e_n⟩` for modes `i, j, n ≥ 1`.
    pub fn interaction_coefficient(&self, i: usize, j: usize, n: usize) -> f64 {
        let a = self.interaction();
        let j_f = j as f64;
        let mut value = 0.0;
        if n == i + j {
            value -= a * j_f;
        }
        if n == i.abs_diff(j) && n > 0 {
            let sign = if i > j { 1.0 } else { -1.0 };
            value -= a * j_f * sign;
        }
        value
    }
}

/// `⟨B(w, w), e_k⟩` for `w = Σ_{n ≤ K} w_n e_n` (slot `n − 1` holds `w_n`).
///
/// Closed form of `Σ_{i,j} w_i w_j ⟨−γ e_i ∂ₓe_j, e_k⟩`:
/// `kα(−½ Σ_{i<k} w_i w_{k−i} + Σ_j w_j w_{j+k})`.
pub fn burgers_projection(w: &[f64], k: usize, alpha: f64) -> f64 {
    let big_k = w.len();
    let mut s = 0.0;
    for i in 1..k.min(big_k + 1) {
        if k - i <= big_k {
            s -= 0.5 * w[i - 1] * w[k - i - 1];
        }
    }
    for j in 1..=big_k.saturating_sub(k) {
        s += w[j - 1] * w[j + k - 1];
    }
    k as f64 * alpha * s
}

/// Checked eigenvalue evaluation.
pub fn eigenvalue_beta(params: &SpectralParams, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("mode index must be at least 1"));
    }
    Ok(params.beta(n))
}

/// Eigenvalues `β_1..β_{n_max}` with the resolved dimension and `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenData {
    m_modes: usize,
    betas: Vec<f64>,
    alpha: f64,
}

impl EigenData {
    pub fn new(params: &SpectralParams, m_modes: usize, n_max: usize) -> Result<Self> {
        if m_modes == 0 {
            return Err(invalid("resolved dimension must be at least 1"));
        }
        if n_max < m_modes {
            return Err(invalid("n_max must not be below the resolved dimension"));
        }
        let betas = (1..=n_max).map(|n| params.beta(n)).collect();
        Ok(Self { m_modes, betas, alpha: params.interaction() })
    }

    pub fn m_modes(&self) -> usize {
        self.m_modes
    }
    pub fn n_max(&self) -> usize {
        self.betas.len()
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// `β_n`, 1-based. Panics past `n_max`.
    pub fn beta(&self, n: usize) -> f64 {
        self.betas[n - 1]
    }
}

/// Uniform grid on `[0, l]` with `intervals` cells; unknowns live on the
/// interior nodes `x_j = j·δx`, `j = 1..intervals−1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    intervals: usize,
    length: f64,
}

impl Grid {
    pub fn new(intervals: usize, length: f64) -> Result<Self> {
        if intervals < 2 {
            return Err(invalid(format!("grid needs at least 2 intervals, got {intervals}")));
        }
        if !(length > 0.0) {
            return Err(invalid("grid length must be positive"));
        }
        Ok(Self { intervals, length })
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }
    pub fn interior(&self) -> usize {
        self.intervals - 1
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn dx(&self) -> f64 {
        self.length / self.intervals as f64
    }
    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.dx()
    }

    /// Factor turning the unnormalized DST of grid values into `⟨y, e_n⟩`.
    pub fn analysis_scale(&self) -> f64 {
        self.dx() * (2.0 / self.length).sqrt()
    }

    /// Factor turning the unnormalized DST of modal coefficients into grid values.
    pub fn synthesis_scale(&self) -> f64 {
        (2.0 / self.length).sqrt()
    }
}

/// Values at the interior nodes; the Dirichlet endpoints are implicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Grid,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.interior() {
            return Err(invalid(format!(
                "field has {} values, grid has {} interior nodes",
                values.len(),
                grid.interior()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.interior()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = (1..grid.intervals()).map(|j| f(grid.node(j))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Discrete L² norm `(δx Σ y_j²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.dx() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Coefficients on the sine basis; slot `k` holds mode `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalCoeffs(pub Vec<f64>);

impl ModalCoeffs {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    /// Coefficient of mode `n` (1-based); zero past the stored range.
    pub fn mode(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        self.0.get(n - 1).copied().unwrap_or(0.0)
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// `√(2/l)·sin(nπx/l)` sampled at the interior nodes.
pub fn eigenmode_grid(n: usize, grid: Grid) -> Result<GridField> {
    if n == 0 {
        return Err(invalid("mode index must be at least 1"));
    }
    let scale = grid.synthesis_scale();
    let k = n as f64 * PI / grid.length();
    Ok(GridField::from_fn(grid, |x| scale * (k * x).sin()))
}

/// A DST-I implementation of fixed length.
pub trait SineTransform: Send + Sync {
    fn name(&self) -> &'static str;
    /// Number of transformed values (`N − 1`).
    fn len(&self) -> usize;
    /// Unnormalized DST-I of `input` into `output`.
    fn apply(&self, input: &[f64], output: &mut [f64]);
}

/// O(N²) reference transform with a precomputed sine table.
pub struct DirectSine {
    n: usize,
    table: Vec<f64>,
}

impl DirectSine {
    pub fn new(intervals: usize) -> Self {
        let n = intervals - 1;
        let mut table = vec![0.0; n * n];
        for j in 1..=n {
            for k in 1..=n {
                // reduce jk mod 2N before evaluating, keeps the argument small
                let r = (j * k) % (2 * intervals);
                table[(j - 1) * n + (k - 1)] = (PI * r as f64 / intervals as f64).sin();
            }
        }
        Self { n, table }
    }
}

impl SineTransform for DirectSine {
    fn name(&self) -> &'static str {
        "direct"
    }
    fn len(&self) -> usize {
        self.n
    }
    fn apply(&self, input: &[f64], output: &mut [f64]) {
        for (k, out) in output.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, x) in input.iter().enumerate() {
                acc += x * self.table[j * self.n + k];
            }
            *out = acc;
        }
    }
}

/// DST-I through a complex FFT of the odd extension (length `2N`).
pub struct FastSine {
    intervals: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl FastSine {
    pub fn new(intervals: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(2 * intervals);
        Self { intervals, fft }
    }
}

impl SineTransform for FastSine {
    fn name(&self) -> &'static str {
        "fft"
    }
    fn len(&self) -> usize {
        self.intervals - 1
    }
    fn apply(&self, input: &[f64], output: &mut [f64]) {
        let n = self.intervals;
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * n];
        for (j, x) in input.iter().enumerate() {
            buf[j + 1].re = *x;
            buf[2 * n - 1 - j].re = -*x;
        }
        self.fft.process(&mut buf);
        for (k, out) in output.iter_mut().enumerate() {
            *out = -0.5 * buf[k + 1].im;
        }
    }
}

/// Transform backends selectable by name.
pub fn sine_transform(name: &str, intervals: usize) -> Result<Box<dyn SineTransform>> {
    if intervals < 2 {
        return Err(invalid("sine transform needs at least 2 intervals"));
    }
    match name {
        "direct" => Ok(Box::new(DirectSine::new(intervals))),
        "fft" => Ok(Box::new(FastSine::new(intervals))),
        other => Err(invalid(format!("unknown sine transform '{other}' (expected direct or fft)"))),
    }
}

/// Unnormalized DST-I of a grid field (reference summation).
pub fn dst_forward(field: &GridField) -> Vec<f64> {
    let t = DirectSine::new(field.grid().intervals());
    let mut out = vec![0.0; t.len()];
    t.apply(field.values(), &mut out);
    out
}

/// Inverse of [`dst_forward`]: `(2/N)·DST`.
pub fn dst_inverse(transformed: &[f64], grid: Grid) -> Result<GridField> {
    if transformed.len() != grid.interior() {
        return Err(invalid("transform length does not match the grid"));
    }
    let t = DirectSine::new(grid.intervals());
    let mut out = vec![0.0; t.len()];
    t.apply(transformed, &mut out);
    let s = 2.0 / grid.intervals() as f64;
    out.iter_mut().for_each(|v| *v *= s);
    GridField::new(grid, out)
}

/// Grid ↔ modal conversions bound to one grid and transform backend.
pub struct ModalBasis {
    grid: Grid,
    transform: Box<dyn SineTransform>,
}

impl ModalBasis {
    pub fn new(grid: Grid) -> Self {
        Self { grid, transform: Box::new(FastSine::new(grid.intervals())) }
    }

    pub fn with_transform(grid: Grid, transform: Box<dyn SineTransform>) -> Result<Self> {
        if transform.len() != grid.interior() {
            return Err(invalid("transform length does not match the grid"));
        }
        Ok(Self { grid, transform })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// All `N − 1` coefficients `⟨y, e_n⟩`.
    pub fn analyze(&self, values: &[f64]) -> ModalCoeffs {
        let mut out = vec![0.0; self.grid.interior()];
        self.transform.apply(values, &mut out);
        let s = self.grid.analysis_scale();
        out.iter_mut().for_each(|v| *v *= s);
        ModalCoeffs(out)
    }

    /// Grid values of `Σ c_n e_n`; missing coefficients are zero.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.grid.interior();
        let mut padded = vec![0.0; n];
        let used = coeffs.len().min(n);
        padded[..used].copy_from_slice(&coeffs[..used]);
        let mut out = vec![0.0; n];
        self.transform.apply(&padded, &mut out);
        let s = self.grid.synthesis_scale();
        out.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn transform(&self) -> &dyn SineTransform {
        self.transform.as_ref()
    }
}

/// Input accepted by [`project_modes`].
pub enum Projectable<'a> {
    Field(&'a GridField),
    Modal(&'a ModalCoeffs),
}

/// Splits into the low modes `1..=m` and the high modes `m+1..`.
pub fn project_modes(y: Projectable<'_>, m: usize) -> Result<(ModalCoeffs, ModalCoeffs)> {
    if m == 0 {
        return Err(invalid("cut index must be at least 1"));
    }
    let all = match y {
        Projectable::Field(f) => ModalBasis::new(f.grid()).analyze(f.values()),
        Projectable::Modal(c) => c.clone(),
    };
    if m > all.len() {
        return Err(invalid(format!("cut index {m} exceeds the {} available modes", all.len())));
    }
    let high = all.0[m..].to_vec();
    let mut low = all.0;
    low.truncate(m);
    Ok((ModalCoeffs(low), ModalCoeffs(high)))
}

/// Norm used for defects and high-mode energies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    L2,
    /// `‖v‖² + ‖v_x‖²`.
    #[default]
    H1,
    /// `‖v_x‖²` only.
    H1Seminorm,
}

impl NormKind {
    /// Weight of mode `n` in the squared norm.
    pub fn weight(self, n: usize, length: f64) -> f64 {
        let k = n as f64 * PI / length;
        match self {
            NormKind::L2 => 1.0,
            NormKind::H1 => 1.0 + k * k,
            NormKind::H1Seminorm => k * k,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(NormKind::L2),
            "h1" => Ok(NormKind::H1),
            "h1_seminorm" => Ok(NormKind::H1Seminorm),
            other => Err(invalid(format!("unknown norm kind '{other}'"))),
        }
    }
}

/// Squared norm of coefficients whose first slot is mode `first_mode`.
pub fn modal_norm_sq(coeffs: &[f64], first_mode: usize, length: f64, kind: NormKind) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| kind.weight(first_mode + k, length) * c * c)
        .sum()
}

/// Full `H¹(0,l)` norm `(Σ (1 + n²π²/l²) c_n²)^{1/2}` of coefficients from mode 1.
pub fn h1_sobolev_norm(c: &ModalCoeffs, params: &SpectralParams) -> f64 {
    modal_norm_sq(c.as_slice(), 1, params.length(), NormKind::H1).sqrt()
}
