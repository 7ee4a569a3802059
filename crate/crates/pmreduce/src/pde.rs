//! Semi-implicit finite-difference integrator for the full PDE, steady
//! states, and control operators acting on the grid.
//!
//! One step solves `((1−λδt)I − νδt·A) y⁺ = y − (γ/2)δt·∇_d(y²) + δt·f`
//! where `A` is the three-point Laplacian and `∇_d` the forward difference
//! `((y_{j+1})² − (y_j)²)/δx` with `y_N = 0`. The linear solve is diagonal in
//! the discrete sine basis.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::banded::BandedMatrix;
use crate::dense::Matrix;
use crate::error::{invalid, Error, Result};
use crate::spectral::{eigenmode_grid, Grid, GridField, ModalBasis, ModalCoeffs, SpectralParams};

/// Magnitude beyond which an integration is declared blown up.
pub const BLOW_UP_LIMIT: f64 = 1e8;

/// Spatial grid plus time step and horizon.
///
/// The horizon is rounded to the nearest whole number of steps; `horizon()`
/// returns the rounded value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeGrid {
    grid: Grid,
    dt: f64,
    steps: usize,
}

impl PdeGrid {
    pub fn new(grid: Grid, dt: f64, horizon: f64) -> Result<Self> {
        if grid.intervals() < 4 {
            return Err(invalid("PDE grid needs at least 4 intervals"));
        }
        if !(dt > 0.0) || !(horizon > 0.0) {
            return Err(invalid("time step and horizon must be positive"));
        }
        let steps = (horizon / dt).round() as usize;
        if steps == 0 {
            return Err(invalid("horizon shorter than one time step"));
        }
        Ok(Self { grid, dt, steps })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }
}

/// How a low-mode control `u = Σ u_j e_j` enters the PDE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlOperator {
    Identity,
    /// Low-mode coupling: the forcing is `Σ_i (Mᵀu)_i e_i`.
    LowModeMatrix { matrix: Matrix },
    /// Pointwise multiplication by the indicator of `[a, b]`.
    Indicator { a: f64, b: f64 },
}

impl ControlOperator {
    pub fn validate(&self, m: usize, length: f64) -> Result<()> {
        match self {
            ControlOperator::Identity => Ok(()),
            ControlOperator::LowModeMatrix { matrix } => {
                if !matrix.is_square() || matrix.rows() != m {
                    return Err(invalid(format!("control matrix must be {m}x{m}")));
                }
                if matrix.max_abs() == 0.0 {
                    return Err(invalid("control matrix must be nonzero"));
                }
                Ok(())
            }
            ControlOperator::Indicator { a, b } => {
                if !(0.0 <= *a && a < b && *b <= length) {
                    return Err(invalid(format!("indicator support [{a}, {b}] must satisfy 0 <= a < b <= l")));
                }
                Ok(())
            }
        }
    }

    /// The `m×m` matrix `M` with forcing coefficients `v = Mᵀu`.
    pub fn reduced_matrix(&self, m: usize, length: f64) -> Result<Matrix> {
        self.validate(m, length)?;
        Ok(match self {
            ControlOperator::Identity => Matrix::identity(m),
            ControlOperator::LowModeMatrix { matrix } => matrix.clone(),
            ControlOperator::Indicator { a, b } => indicator_matrix(*a, *b, m, length)?,
        })
    }
}

/// `M(i,j) = ∫_a^b (2/l) sin(iπx/l) sin(jπx/l) dx`, closed form.
pub fn indicator_matrix(a: f64, b: f64, m: usize, length: f64) -> Result<Matrix> {
    if !(0.0 <= a && a < b && b <= length) {
        return Err(invalid(format!("indicator support [{a}, {b}] must satisfy 0 <= a < b <= l")));
    }
    let k = PI / length;
    // antiderivative of (1/l)·cos(q k x)
    let cos_int = |q: i64, x: f64| -> f64 {
        if q == 0 {
            x / length
        } else {
            (q as f64 * k * x).sin() / (q as f64 * k * length)
        }
    };
    let mut out = Matrix::zeros(m, m);
    for i in 1..=m as i64 {
        for j in 1..=m as i64 {
            let v = (cos_int(i - j, b) - cos_int(i - j, a)) - (cos_int(i + j, b) - cos_int(i + j, a));
            out.set(i as usize - 1, j as usize - 1, v);
        }
    }
    Ok(out)
}

/// Low-mode control coefficients on a time mesh, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    mesh: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl ControlSignal {
    pub fn new(mesh: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if mesh.len() < 2 || mesh.len() != values.len() {
            return Err(invalid("control mesh needs at least two nodes and one value per node"));
        }
        if mesh.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("control mesh must be strictly increasing"));
        }
        let m = values[0].len();
        if values.iter().any(|v| v.len() != m) {
            return Err(invalid("control values must have a common dimension"));
        }
        Ok(Self { mesh, values })
    }

    pub fn zero(m: usize, horizon: f64) -> Self {
        Self { mesh: vec![0.0, horizon], values: vec![vec![0.0; m]; 2] }
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }
    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }
    pub fn start(&self) -> f64 {
        self.mesh[0]
    }
    pub fn end(&self) -> f64 {
        *self.mesh.last().unwrap()
    }

    /// Linear interpolation, clamped to the end values outside the mesh.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let n = self.mesh.len();
        if t <= self.mesh[0] {
            return self.values[0].clone();
        }
        if t >= self.mesh[n - 1] {
            return self.values[n - 1].clone();
        }
        let k = self.mesh.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.mesh[k], self.mesh[k + 1]);
        let w = (t - t0) / (t1 - t0);
        self.values[k]
            .iter()
            .zip(&self.values[k + 1])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    /// `∫ ‖u‖² dt` by the trapezoid rule on the control mesh.
    pub fn l2_norm_sq(&self) -> f64 {
        self.mesh
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, v)| {
                let a: f64 = v[0].iter().map(|x| x * x).sum();
                let b: f64 = v[1].iter().map(|x| x * x).sum();
                0.5 * (t[1] - t[0]) * (a + b)
            })
            .sum()
    }
}

/// Semi-implicit stepper bound to one parameter set and grid.
pub struct PdeStepper {
    params: SpectralParams,
    grid: Grid,
    dt: f64,
    basis: ModalBasis,
    inv_factor: Vec<f64>,
}

impl PdeStepper {
    pub fn new(params: SpectralParams, grid: Grid, dt: f64) -> Result<Self> {
        Self::with_basis(params, ModalBasis::new(grid), dt)
    }

    pub fn with_basis(params: SpectralParams, basis: ModalBasis, dt: f64) -> Result<Self> {
        let grid = basis.grid();
        let dx = grid.dx();
        let n = grid.intervals();
        let mut inv_factor = Vec::with_capacity(grid.interior());
        for k in 1..n {
            let mu = 2.0 / (dx * dx) * ((k as f64 * PI / n as f64).cos() - 1.0);
            let factor = 1.0 - params.lambda() * dt - params.nu() * dt * mu;
            if factor.abs() < 1e-14 {
                return Err(Error::SingularStep { mode: k });
            }
            // sine-basis normalization 2/N folded in
            inv_factor.push(2.0 / n as f64 / factor);
        }
        Ok(Self { params, grid, dt, basis, inv_factor })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn basis(&self) -> &ModalBasis {
        &self.basis
    }

    /// Right-hand side `y − (γ/2)δt∇_d(y²) + δt f`.
    fn explicit_part(&self, y: &[f64], forcing: &[f64], out: &mut [f64]) {
        let n = y.len();
        let c = 0.5 * self.params.gamma() * self.dt / self.grid.dx();
        for j in 0..n {
            let next = if j + 1 < n { y[j + 1] * y[j + 1] } else { 0.0 };
            out[j] = y[j] - c * (next - y[j] * y[j]) + self.dt * forcing[j];
        }
    }

    /// One step from `y` with grid forcing `forcing`, written into `out`.
    pub fn step_into(&self, y: &[f64], forcing: &[f64], out: &mut [f64]) {
        let n = y.len();
        let mut rhs = vec![0.0; n];
        self.explicit_part(y, forcing, &mut rhs);
        let mut spec = vec![0.0; n];
        let t = self.basis.transform();
        t.apply(&rhs, &mut spec);
        spec.iter_mut().zip(&self.inv_factor).for_each(|(s, f)| *s *= f);
        t.apply(&spec, out);
    }

    /// Discrete steady residual `νΔ_d y + λy − (γ/2)∇_d(y²)`.
    pub fn steady_residual(&self, y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let dx = self.grid.dx();
        let (nu, lam, g) = (self.params.nu(), self.params.lambda(), self.params.gamma());
        (0..n)
            .map(|j| {
                let left = if j > 0 { y[j - 1] } else { 0.0 };
                let right = if j + 1 < n { y[j + 1] } else { 0.0 };
                nu * (left - 2.0 * y[j] + right) / (dx * dx) + lam * y[j]
                    - 0.5 * g * (right * right - y[j] * y[j]) / dx
            })
            .collect()
    }
}

/// One semi-implicit step (free-function form).
pub fn semi_implicit_step(
    y: &GridField,
    forcing: &GridField,
    params: &SpectralParams,
    dt: f64,
) -> Result<GridField> {
    if y.grid() != forcing.grid() {
        return Err(invalid("state and forcing live on different grids"));
    }
    let stepper = PdeStepper::new(*params, y.grid(), dt)?;
    let mut out = vec![0.0; y.values().len()];
    stepper.step_into(y.values(), forcing.values(), &mut out);
    GridField::new(y.grid(), out)
}

/// Grid forcing produced by a control operator from low-mode coefficients.
pub struct ForcingMap {
    modes: Vec<Vec<f64>>,
    weights: Option<Vec<f64>>,
    coupling: Option<Matrix>,
}

impl ForcingMap {
    pub fn new(op: &ControlOperator, m: usize, grid: Grid) -> Result<Self> {
        op.validate(m, grid.length())?;
        let modes = (1..=m).map(|n| eigenmode_grid(n, grid).map(GridField::into_values)).collect::<Result<_>>()?;
        let (weights, coupling) = match op {
            ControlOperator::Identity => (None, None),
            ControlOperator::LowModeMatrix { matrix } => (None, Some(matrix.clone())),
            ControlOperator::Indicator { a, b } => {
                let w = (1..grid.intervals())
                    .map(|j| {
                        let x = grid.node(j);
                        if x >= *a && x <= *b { 1.0 } else { 0.0 }
                    })
                    .collect();
                (Some(w), None)
            }
        };
        Ok(Self { modes, weights, coupling })
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let coeffs = match &self.coupling {
            Some(mat) => mat.apply_transpose(u),
            None => u.to_vec(),
        };
        out.iter_mut().for_each(|v| *v = 0.0);
        for (c, mode) in coeffs.iter().zip(&self.modes) {
            if *c != 0.0 {
                out.iter_mut().zip(mode).for_each(|(o, e)| *o += c * e);
            }
        }
        if let Some(w) = &self.weights {
            out.iter_mut().zip(w).for_each(|(o, w)| *o *= w);
        }
    }
}

/// PDE states on a uniform time grid.
#[derive(Debug)]
pub struct Trajectory {
    grid: Grid,
    dt: f64,
    states: Vec<Vec<f64>>,
    modal: OnceLock<Vec<ModalCoeffs>>,
}

impl Trajectory {
    pub fn from_states(grid: Grid, dt: f64, states: Vec<Vec<f64>>) -> Result<Self> {
        if states.is_empty() || states.iter().any(|s| s.len() != grid.interior()) {
            return Err(invalid("trajectory states must match the grid"));
        }
        Ok(Self { grid, dt, states, modal: OnceLock::new() })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn len(&self) -> usize {
        self.states.len()
    }
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }
    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|n| self.time(n)).collect()
    }
    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n]
    }
    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }
    pub fn final_state(&self) -> GridField {
        GridField::new(self.grid, self.states.last().unwrap().clone()).unwrap()
    }

    /// All modal coefficients at every stored time (computed once).
    pub fn modal(&self) -> &[ModalCoeffs] {
        self.modal.get_or_init(|| {
            let basis = ModalBasis::new(self.grid);
            self.states.iter().map(|s| basis.analyze(s)).collect()
        })
    }

    /// Long-format CSV `t,x,y`; `stride` thins the time axis.
    pub fn write_csv<W: Write>(&self, mut w: W, stride: usize) -> Result<()> {
        writeln!(w, "t,x,y")?;
        let stride = stride.max(1);
        for (n, s) in self.states.iter().enumerate().step_by(stride) {
            let t = self.time(n);
            writeln!(w, "{},{},{}", fmt12(t), fmt12(0.0), fmt12(0.0))?;
            for (j, v) in s.iter().enumerate() {
                writeln!(w, "{},{},{}", fmt12(t), fmt12(self.grid.node(j + 1)), fmt12(*v))?;
            }
            writeln!(w, "{},{},{}", fmt12(t), fmt12(self.grid.length()), fmt12(0.0))?;
        }
        Ok(())
    }

    /// Compact modal CSV `t,n,coefficient` for modes `1..=n_max`.
    pub fn write_modal_csv<W: Write>(&self, mut w: W, n_max: usize, stride: usize) -> Result<()> {
        writeln!(w, "t,n,coefficient")?;
        for (n, c) in self.modal().iter().enumerate().step_by(stride.max(1)) {
            for k in 1..=n_max.min(c.len()) {
                writeln!(w, "{},{},{}", fmt12(self.time(n)), k, fmt12(c.mode(k)))?;
            }
        }
        Ok(())
    }

    /// Reads the long-format CSV written by [`Trajectory::write_csv`] (stride 1).
    pub fn read_csv(text: &str, length: f64) -> Result<Self> {
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let f: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| invalid(format!("bad trajectory line {}: {e}", i + 1)))?;
            if f.len() != 3 {
                return Err(invalid(format!("trajectory line {} needs 3 fields", i + 1)));
            }
            rows.push((f[0], f[1], f[2]));
        }
        let mut times: Vec<f64> = Vec::new();
        let mut states: Vec<Vec<f64>> = Vec::new();
        for (t, x, y) in rows {
            if times.last().is_none_or(|&last| (t - last).abs() > 1e-12) {
                times.push(t);
                states.push(Vec::new());
            }
            let on_boundary = x.abs() < 1e-12 || (x - length).abs() < 1e-9;
            if !on_boundary {
                states.last_mut().unwrap().push(y);
            }
        }
        if times.len() < 2 {
            return Err(invalid("trajectory needs at least two time levels"));
        }
        let interior = states[0].len();
        let grid = Grid::new(interior + 1, length)?;
        let dt = times[1] - times[0];
        Self::from_states(grid, dt, states)
    }
}

/// Integrates from `y0` driven by `op` applied to `control`.
///
/// The control is evaluated at `t_n` for the step `n → n+1`.
pub fn integrate_pde(
    y0: &GridField,
    control: &ControlSignal,
    op: &ControlOperator,
    params: &SpectralParams,
    pde_grid: &PdeGrid,
) -> Result<Trajectory> {
    if y0.grid() != pde_grid.grid() {
        return Err(invalid("initial datum is not on the PDE grid"));
    }
    let stepper = PdeStepper::new(*params, pde_grid.grid(), pde_grid.dt())?;
    let forcing_map = ForcingMap::new(op, control.dim(), pde_grid.grid())?;
    let n = pde_grid.grid().interior();
    let mut states = Vec::with_capacity(pde_grid.steps() + 1);
    states.push(y0.values().to_vec());
    let mut forcing = vec![0.0; n];
    for step in 0..pde_grid.steps() {
        let t = pde_grid.time(step);
        forcing_map.apply(&control.eval(t), &mut forcing);
        let mut next = vec![0.0; n];
        stepper.step_into(&states[step], &forcing, &mut next);
        if next.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP_LIMIT) {
            return Err(Error::BlowUp { step: step + 1, time: pde_grid.time(step + 1) });
        }
        states.push(next);
    }
    Trajectory::from_states(pde_grid.grid(), pde_grid.dt(), states)
}

/// Branch of the pitchfork pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadySign {
    Plus,
    Minus,
}

impl SteadySign {
    pub fn value(self) -> f64 {
        match self {
            SteadySign::Plus => 1.0,
            SteadySign::Minus => -1.0,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "+" | "plus" => Ok(SteadySign::Plus),
            "-" | "minus" => Ok(SteadySign::Minus),
            other => Err(invalid(format!("steady-state sign must be + or -, got '{other}'"))),
        }
    }
}

/// Options for [`compute_steady_state`].
#[derive(Debug, Clone, Copy)]
pub struct SteadyOptions {
    pub dt: f64,
    pub march_tol: f64,
    pub max_march_steps: usize,
    pub residual_tol: f64,
    pub max_newton: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self { dt: 1e-3, march_tol: 1e-8, max_march_steps: 2_000_000, residual_tol: 1e-10, max_newton: 50 }
    }
}

/// Nontrivial steady state reached from `±0.1·e_1`, polished by Newton.
pub fn compute_steady_state(
    sign: SteadySign,
    params: &SpectralParams,
    grid: Grid,
    opts: SteadyOptions,
) -> Result<GridField> {
    if params.lambda() <= params.lambda_c() {
        return Err(invalid("no nontrivial steady state for λ ≤ λ_c"));
    }
    let stepper = PdeStepper::new(*params, grid, opts.dt)?;
    let n = grid.interior();
    let e1 = eigenmode_grid(1, grid)?;
    let mut y: Vec<f64> = e1.values().iter().map(|v| 0.1 * sign.value() * v).collect();
    let zero = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..opts.max_march_steps {
        stepper.step_into(&y, &zero, &mut next);
        let change = y.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut y, &mut next);
        if !change.is_finite() {
            return Err(Error::BlowUp { step: 0, time: 0.0 });
        }
        if change / opts.dt < opts.march_tol {
            break;
        }
    }
    newton_polish(&stepper, params, &mut y, opts)?;
    GridField::new(grid, y)
}

fn newton_polish(stepper: &PdeStepper, params: &SpectralParams, y: &mut [f64], opts: SteadyOptions) -> Result<()> {
    let n = y.len();
    let dx = stepper.grid().dx();
    let (nu, lam, g) = (params.nu(), params.lambda(), params.gamma());
    for _ in 0..=opts.max_newton {
        let r = stepper.steady_residual(y);
        let norm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm <= opts.residual_tol {
            return Ok(());
        }
        let mut jac = BandedMatrix::zeros(n, 1, 1);
        for j in 0..n {
            if j > 0 {
                jac.set(j, j - 1, nu / (dx * dx));
            }
            jac.set(j, j, -2.0 * nu / (dx * dx) + lam + g * y[j] / dx);
            if j + 1 < n {
                jac.set(j, j + 1, nu / (dx * dx) - g * y[j + 1] / dx);
            }
        }
        let lu = jac.factor().map_err(|_| Error::NewtonFailure("singular steady-state Jacobian".into()))?;
        let mut delta = r;
        lu.solve_in_place(&mut delta);
        y.iter_mut().zip(&delta).for_each(|(v, d)| *v -= d);
    }
    Err(Error::NewtonFailure(format!("steady state not polished in {} iterations", opts.max_newton)))
}

/// `x ↦ −y(l − x)` on the interior nodes.
pub fn reflect(field: &GridField) -> GridField {
    let mut v: Vec<f64> = field.values().iter().rev().map(|x| -x).collect();
    v.shrink_to_fit();
    GridField::new(field.grid(), v).unwrap()
}

/// Formats with 12 significant digits.
pub fn fmt12(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let s = format!("{:.11e}", v);
    // normalize to a compact but lossless-at-12-digits form
    match s.parse::<f64>() {
        Ok(x) if (1e-4..1e12).contains(&x.abs()) => {
            let digits = 11 - x.abs().log10().floor() as i32;
            let out = format!("{:.*}", digits.max(0) as usize, x);
            trim_zeros(out)
        }
        _ => s,
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        t.to_string()
    } else {
        s
    }
}
