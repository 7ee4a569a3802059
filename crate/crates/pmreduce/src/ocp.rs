//! Pontryagin boundary-value problems for the reduced models, a banded
//! collocation solver, and the pipeline that drives the full PDE with the
//! synthesized control.
//!
//! The BVP unknown at each node is `x = (z, p)` of length `2m`. Boundary
//! conditions are separated: `z(0) = z₀` and `p(T) = w·(z(T) − Y)` with
//! `w = μ₂` for terminal payoff and `w = 0` for tracking.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::BandedMatrix;
use crate::dense::Matrix;
use crate::diagnostics::target_relative_error;
use crate::error::{invalid, Error, Result};
use crate::pde::{fmt12, integrate_pde, ControlOperator, ControlSignal, PdeGrid, Trajectory};
use crate::pm::PmFunction;
use crate::reduced::{costate_rf, running_state_cost, CostSpec, ReducedModel};
use crate::spectral::{GridField, ModalCoeffs, SpectralParams};

/// Autonomous first-order system `x' = F(x)`.
pub trait TwoPointDynamics: Sync {
    fn dim(&self) -> usize;
    fn rhs(&self, x: &[f64]) -> Vec<f64>;

    /// Row-major `∂F/∂x`; central differences unless overridden.
    fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut jac = vec![0.0; n * n];
        let mut xp = x.to_vec();
        for c in 0..n {
            let step = 6e-6 * x[c].abs().max(1.0);
            let orig = xp[c];
            xp[c] = orig + step;
            let fp = self.rhs(&xp);
            xp[c] = orig - step;
            let fm = self.rhs(&xp);
            xp[c] = orig;
            for r in 0..n {
                jac[r * n + c] = (fp[r] - fm[r]) / (2.0 * step);
            }
        }
        jac
    }
}

/// `z(0) = initial`, `p(T) = terminal_weight·(z(T) − terminal_target)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitBoundary {
    pub initial: Vec<f64>,
    pub terminal_weight: f64,
    pub terminal_target: Vec<f64>,
}

/// A two-point problem in the `(z, p)` layout.
pub struct TwoPointProblem<'a> {
    pub dynamics: &'a dyn TwoPointDynamics,
    pub boundary: SplitBoundary,
    pub horizon: f64,
}

/// Reduced optimal control problem.
pub struct OcpProblem {
    pub model: Box<dyn ReducedModel>,
    pub cost: CostSpec,
    pub horizon: f64,
    pub initial: Vec<f64>,
}

impl OcpProblem {
    pub fn new(model: Box<dyn ReducedModel>, cost: CostSpec, horizon: f64, initial: Vec<f64>) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(invalid("horizon must be positive"));
        }
        if initial.len() != model.dim() {
            return Err(invalid(format!("initial state must have dimension {}", model.dim())));
        }
        Ok(Self { model, cost, horizon, initial })
    }
}

/// `(f(z, v*(p)), g(z, p))` with `v* = −(1/μ₁)MᵀMp`.
pub struct PmpDynamics<'a> {
    model: &'a dyn ReducedModel,
    cost: &'a CostSpec,
}

impl<'a> PmpDynamics<'a> {
    pub fn new(model: &'a dyn ReducedModel, cost: &'a CostSpec) -> Self {
        Self { model, cost }
    }

    fn optimal_forcing(&self, p: &[f64]) -> Vec<f64> {
        let mu1 = self.cost.control_weight;
        self.model.core().gram().apply(p).into_iter().map(|v| -v / mu1).collect()
    }
}

impl TwoPointDynamics for PmpDynamics<'_> {
    fn dim(&self) -> usize {
        2 * self.model.dim()
    }

    fn rhs(&self, x: &[f64]) -> Vec<f64> {
        let m = self.model.dim();
        let (z, p) = x.split_at(m);
        let mut out = self.model.field(z, &self.optimal_forcing(p));
        out.extend(costate_rf(self.model, self.cost, z, p).expect("dimensions checked at assembly"));
        out
    }

    /// State blocks exact (through the adjoint action), `∂g/∂z` by central
    /// differences.
    fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        let m = self.model.dim();
        let n = 2 * m;
        let (z, p) = x.split_at(m);
        let mut jac = vec![0.0; n * n];
        let mut unit = vec![0.0; m];
        for j in 0..m {
            unit[j] = 1.0;
            let col = self.model.field_adjoint(z, &unit);
            unit[j] = 0.0;
            for i in 0..m {
                // ∂f_j/∂z_i, and ∂g_i/∂p_j = −∂f_j/∂z_i
                jac[j * n + i] = col[i];
                jac[(m + i) * n + m + j] = -col[i];
            }
        }
        let gram = self.model.core().gram();
        let mu1 = self.cost.control_weight;
        for i in 0..m {
            for j in 0..m {
                jac[i * n + m + j] = -gram.get(i, j) / mu1;
            }
        }
        let mut zp = z.to_vec();
        for k in 0..m {
            let step = 6e-6 * z[k].abs().max(1.0);
            let orig = zp[k];
            zp[k] = orig + step;
            let gp = costate_rf(self.model, self.cost, &zp, p).unwrap();
            zp[k] = orig - step;
            let gm = costate_rf(self.model, self.cost, &zp, p).unwrap();
            zp[k] = orig;
            for i in 0..m {
                jac[(m + i) * n + k] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        jac
    }
}

/// Builds the boundary data for a reduced problem.
pub fn assemble_pmp_bvp(problem: &OcpProblem) -> Result<(PmpDynamics<'_>, SplitBoundary)> {
    let m = problem.model.dim();
    let target: Vec<f64> = (1..=m).map(|i| problem.cost.target.mode(i)).collect();
    let boundary = SplitBoundary {
        initial: problem.initial.clone(),
        terminal_weight: problem.cost.terminal_weight(),
        terminal_target: target,
    };
    Ok((PmpDynamics::new(problem.model.as_ref(), &problem.cost), boundary))
}

/// One-interval collocation residual and its Jacobian blocks.
pub trait CollocationRule: Send + Sync {
    fn name(&self) -> &'static str;
    fn order(&self) -> usize;
    /// Residual on `[x0, x1]` with step `h`, given `F` at both ends.
    fn residual(&self, dynamics: &dyn TwoPointDynamics, h: f64, ends: IntervalEnds<'_>) -> Vec<f64>;
    /// `(∂R/∂x0, ∂R/∂x1)`, row-major; needs end Jacobians.
    fn blocks(&self, dynamics: &dyn TwoPointDynamics, h: f64, ends: IntervalEnds<'_>, j0: &[f64], j1: &[f64]) -> (Vec<f64>, Vec<f64>);
}

#[derive(Clone, Copy)]
pub struct IntervalEnds<'a> {
    pub x0: &'a [f64],
    pub f0: &'a [f64],
    pub x1: &'a [f64],
    pub f1: &'a [f64],
}

/// Second-order trapezoidal rule.
pub struct Trapezoid;

impl CollocationRule for Trapezoid {
    fn name(&self) -> &'static str {
        "trapezoid"
    }
    fn order(&self) -> usize {
        2
    }
    fn residual(&self, _d: &dyn TwoPointDynamics, h: f64, e: IntervalEnds<'_>) -> Vec<f64> {
        (0..e.x0.len()).map(|i| e.x1[i] - e.x0[i] - 0.5 * h * (e.f0[i] + e.f1[i])).collect()
    }
    fn blocks(&self, _d: &dyn TwoPointDynamics, h: f64, e: IntervalEnds<'_>, j0: &[f64], j1: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = e.x0.len();
        let mut a: Vec<f64> = j0.iter().map(|v| -0.5 * h * v).collect();
        let mut b: Vec<f64> = j1.iter().map(|v| -0.5 * h * v).collect();
        for i in 0..n {
            a[i * n + i] -= 1.0;
            b[i * n + i] += 1.0;
        }
        (a, b)
    }
}

/// Fourth-order three-stage Lobatto IIIA (Hermite–Simpson) rule.
pub struct Simpson;

impl Simpson {
    fn midpoint(h: f64, e: &IntervalEnds<'_>) -> Vec<f64> {
        (0..e.x0.len()).map(|i| 0.5 * (e.x0[i] + e.x1[i]) + h / 8.0 * (e.f0[i] - e.f1[i])).collect()
    }
}

impl CollocationRule for Simpson {
    fn name(&self) -> &'static str {
        "simpson"
    }
    fn order(&self) -> usize {
        4
    }
    fn residual(&self, d: &dyn TwoPointDynamics, h: f64, e: IntervalEnds<'_>) -> Vec<f64> {
        let fm = d.rhs(&Self::midpoint(h, &e));
        (0..e.x0.len()).map(|i| e.x1[i] - e.x0[i] - h / 6.0 * (e.f0[i] + 4.0 * fm[i] + e.f1[i])).collect()
    }
    fn blocks(&self, d: &dyn TwoPointDynamics, h: f64, e: IntervalEnds<'_>, j0: &[f64], j1: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = e.x0.len();
        let jm = d.jacobian(&Self::midpoint(h, &e));
        // ∂x_mid/∂x0 = ½I + (h/8)J0, ∂x_mid/∂x1 = ½I − (h/8)J1
        let chain = |jend: &[f64], sign: f64| -> Vec<f64> {
            let mut out = vec![0.0; n * n];
            for r in 0..n {
                for c in 0..n {
                    let mut s = 0.5 * jm[r * n + c];
                    for k in 0..n {
                        s += sign * h / 8.0 * jm[r * n + k] * jend[k * n + c];
                    }
                    out[r * n + c] = s;
                }
            }
            out
        };
        let c0 = chain(j0, 1.0);
        let c1 = chain(j1, -1.0);
        let mut a = vec![0.0; n * n];
        let mut b = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                a[r * n + c] = -h / 6.0 * (j0[r * n + c] + 4.0 * c0[r * n + c]);
                b[r * n + c] = -h / 6.0 * (j1[r * n + c] + 4.0 * c1[r * n + c]);
            }
            a[r * n + r] -= 1.0;
            b[r * n + r] += 1.0;
        }
        (a, b)
    }
}

/// Collocation rules selectable by name.
pub fn collocation_rule(name: &str) -> Result<Box<dyn CollocationRule>> {
    match name {
        "simpson" => Ok(Box::new(Simpson)),
        "trapezoid" => Ok(Box::new(Trapezoid)),
        other => Err(invalid(format!("unknown collocation rule '{other}' (expected simpson or trapezoid)"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvpOptions {
    /// Relative change of the control's L² norm that stops refinement.
    pub tol: f64,
    pub initial_nodes: usize,
    pub max_nodes: usize,
    /// Max-norm of the collocation residual accepted by Newton.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub scheme: String,
}

impl Default for BvpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            initial_nodes: 201,
            max_nodes: 3201,
            newton_tol: 1e-10,
            max_newton: 50,
            scheme: "simpson".to_string(),
        }
    }
}

/// Converged collocation solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvpSolution {
    pub mesh: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub costates: Vec<Vec<f64>>,
    pub residual_norm: f64,
    pub newton_iterations: usize,
    pub refinements: usize,
    pub control_change: f64,
}

impl BvpSolution {
    pub fn dim(&self) -> usize {
        self.states[0].len()
    }
}

struct MeshSolve {
    nodes: Vec<Vec<f64>>,
    residual: f64,
    iterations: usize,
}

fn boundary_residuals(b: &SplitBoundary, first: &[f64], last: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = b.initial.len();
    let left = (0..m).map(|i| first[i] - b.initial[i]).collect();
    let right = (0..m).map(|i| last[m + i] - b.terminal_weight * (last[i] - b.terminal_target[i])).collect();
    (left, right)
}

fn full_residual(
    problem: &TwoPointProblem<'_>,
    rule: &dyn CollocationRule,
    mesh: &[f64],
    nodes: &[Vec<f64>],
    rhs: &[Vec<f64>],
) -> Vec<f64> {
    let n = problem.dynamics.dim();
    let m = n / 2;
    let intervals: Vec<Vec<f64>> = (0..mesh.len() - 1)
        .into_par_iter()
        .map(|k| {
            let ends = IntervalEnds { x0: &nodes[k], f0: &rhs[k], x1: &nodes[k + 1], f1: &rhs[k + 1] };
            rule.residual(problem.dynamics, mesh[k + 1] - mesh[k], ends)
        })
        .collect();
    let (left, right) = boundary_residuals(&problem.boundary, &nodes[0], nodes.last().unwrap());
    let mut out = Vec::with_capacity(mesh.len() * n);
    out.extend(left);
    for r in intervals {
        out.extend(r);
    }
    out.extend(right);
    debug_assert_eq!(out.len(), mesh.len() * n);
    let _ = m;
    out
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn newton_on_mesh(
    problem: &TwoPointProblem<'_>,
    rule: &dyn CollocationRule,
    mesh: &[f64],
    mut nodes: Vec<Vec<f64>>,
    opts: &BvpOptions,
) -> Result<MeshSolve> {
    let d = problem.dynamics;
    let n = d.dim();
    let m = n / 2;
    let count = mesh.len();
    let eval_rhs = |nodes: &[Vec<f64>]| -> Vec<Vec<f64>> { nodes.par_iter().map(|x| d.rhs(x)).collect() };
    let mut rhs = eval_rhs(&nodes);
    let mut res = full_residual(problem, rule, mesh, &nodes, &rhs);
    let mut iterations = 0;
    let flatten = |nodes: &[Vec<f64>]| nodes.concat();
    loop {
        let rnorm = max_abs(&res);
        if !rnorm.is_finite() {
            return Err(Error::BvpNonConvergence { nodes: count, residual: rnorm, iterations, last_iterate: flatten(&nodes) });
        }
        if rnorm <= opts.newton_tol {
            return Ok(MeshSolve { nodes, residual: rnorm, iterations });
        }
        if iterations >= opts.max_newton {
            return Err(Error::BvpNonConvergence { nodes: count, residual: rnorm, iterations, last_iterate: flatten(&nodes) });
        }
        iterations += 1;

        let jacs: Vec<Vec<f64>> = nodes.par_iter().map(|x| d.jacobian(x)).collect();
        let blocks: Vec<(Vec<f64>, Vec<f64>)> = (0..count - 1)
            .into_par_iter()
            .map(|k| {
                let ends = IntervalEnds { x0: &nodes[k], f0: &rhs[k], x1: &nodes[k + 1], f1: &rhs[k + 1] };
                rule.blocks(d, mesh[k + 1] - mesh[k], ends, &jacs[k], &jacs[k + 1])
            })
            .collect();
        let band = 3 * m - 1;
        let mut jac = BandedMatrix::zeros(count * n, band, band);
        for i in 0..m {
            jac.set(i, i, 1.0);
        }
        for (k, (a, b)) in blocks.iter().enumerate() {
            let row0 = m + k * n;
            for r in 0..n {
                for c in 0..n {
                    let av = a[r * n + c];
                    if av != 0.0 {
                        jac.set(row0 + r, k * n + c, av);
                    }
                    let bv = b[r * n + c];
                    if bv != 0.0 {
                        jac.set(row0 + r, (k + 1) * n + c, bv);
                    }
                }
            }
        }
        let last_row = m + (count - 1) * n;
        let last_col = (count - 1) * n;
        let w = problem.boundary.terminal_weight;
        for i in 0..m {
            jac.set(last_row + i, last_col + m + i, 1.0);
            if w != 0.0 {
                jac.set(last_row + i, last_col + i, -w);
            }
        }
        let lu = jac.factor().map_err(|_| Error::BvpNonConvergence {
            nodes: count,
            residual: rnorm,
            iterations,
            last_iterate: flatten(&nodes),
        })?;
        let mut step: Vec<f64> = res.iter().map(|r| -r).collect();
        lu.solve_in_place(&mut step);

        let current = l2(&res);
        let mut accepted = false;
        let mut damping = 1.0;
        for _ in 0..=8 {
            let trial: Vec<Vec<f64>> = nodes
                .iter()
                .enumerate()
                .map(|(k, x)| x.iter().enumerate().map(|(i, v)| v + damping * step[k * n + i]).collect())
                .collect();
            let trial_rhs = eval_rhs(&trial);
            let trial_res = full_residual(problem, rule, mesh, &trial, &trial_rhs);
            let tn = l2(&trial_res);
            if tn.is_finite() && (tn < current || max_abs(&trial_res) <= opts.newton_tol) {
                nodes = trial;
                rhs = trial_rhs;
                res = trial_res;
                accepted = true;
                break;
            }
            damping *= 0.5;
        }
        if !accepted {
            let step_size = max_abs(&step);
            let scale = 1.0 + nodes.iter().map(|x| max_abs(x)).fold(0.0, f64::max);
            // a step at round-off level means the residual floor was reached
            if step_size <= 1e-13 * scale && rnorm <= 1e3 * opts.newton_tol {
                return Ok(MeshSolve { nodes, residual: rnorm, iterations });
            }
            return Err(Error::BvpNonConvergence { nodes: count, residual: rnorm, iterations, last_iterate: flatten(&nodes) });
        }
    }
}

fn uniform_mesh(horizon: f64, nodes: usize) -> Vec<f64> {
    (0..nodes).map(|k| horizon * k as f64 / (nodes - 1) as f64).collect()
}

/// Uncontrolled state flow (RK4 with stiffness-aware substeps) and zero costate.
fn default_guess(problem: &TwoPointProblem<'_>, mesh: &[f64]) -> Vec<Vec<f64>> {
    let n = problem.dynamics.dim();
    let m = n / 2;
    let mut x = problem.boundary.initial.clone();
    x.resize(n, 0.0);
    let z0 = x.clone();
    let spectral_radius = {
        let j = problem.dynamics.jacobian(&z0);
        (0..m).map(|i| (0..m).map(|c| j[i * n + c].abs()).sum::<f64>()).fold(0.0, f64::max)
    };
    let flow = |y: &[f64]| -> Vec<f64> {
        let mut full = y.to_vec();
        full.resize(n, 0.0);
        let mut f = problem.dynamics.rhs(&full);
        f.truncate(m);
        f
    };
    let mut out = vec![x.clone()];
    let mut z = problem.boundary.initial.clone();
    let mut ok = true;
    for k in 0..mesh.len() - 1 {
        let h_mesh = mesh[k + 1] - mesh[k];
        let sub = ((spectral_radius * h_mesh).ceil() as usize).clamp(1, 1000);
        let h = h_mesh / sub as f64;
        for _ in 0..sub {
            let k1 = flow(&z);
            let t: Vec<f64> = z.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
            let k2 = flow(&t);
            let t: Vec<f64> = z.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
            let k3 = flow(&t);
            let t: Vec<f64> = z.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
            let k4 = flow(&t);
            for i in 0..m {
                z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        if z.iter().any(|v| !v.is_finite() || v.abs() > 1e6) {
            ok = false;
            break;
        }
        let mut node = z.clone();
        node.resize(n, 0.0);
        out.push(node);
    }
    if !ok {
        return vec![z0; mesh.len()];
    }
    out
}

/// Doubles the mesh, filling midpoints with the cubic Hermite interpolant.
fn refine_guess(d: &dyn TwoPointDynamics, mesh: &[f64], nodes: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut new_mesh = Vec::with_capacity(2 * mesh.len() - 1);
    let mut new_nodes = Vec::with_capacity(2 * mesh.len() - 1);
    for k in 0..mesh.len() - 1 {
        let h = mesh[k + 1] - mesh[k];
        let (f0, f1) = (d.rhs(&nodes[k]), d.rhs(&nodes[k + 1]));
        let mid: Vec<f64> =
            (0..nodes[k].len()).map(|i| 0.5 * (nodes[k][i] + nodes[k + 1][i]) + h / 8.0 * (f0[i] - f1[i])).collect();
        new_mesh.push(mesh[k]);
        new_nodes.push(nodes[k].clone());
        new_mesh.push(0.5 * (mesh[k] + mesh[k + 1]));
        new_nodes.push(if mid.iter().all(|v| v.is_finite()) {
            mid
        } else {
            nodes[k].iter().zip(&nodes[k + 1]).map(|(a, b)| 0.5 * (a + b)).collect()
        });
    }
    new_mesh.push(*mesh.last().unwrap());
    new_nodes.push(nodes.last().unwrap().clone());
    (new_mesh, new_nodes)
}

/// `∫‖q(t)‖²dt` of a per-node quantity on a uniform mesh: composite Simpson
/// for an even interval count (fourth order, like the collocation), the
/// trapezoid rule otherwise.
fn integral_sq(mesh: &[f64], values: &[Vec<f64>]) -> f64 {
    let sq: Vec<f64> = values.iter().map(|v| v.iter().map(|x| x * x).sum()).collect();
    let intervals = mesh.len() - 1;
    if intervals % 2 == 0 {
        let h = (mesh[intervals] - mesh[0]) / intervals as f64;
        let inner: f64 = (1..intervals).map(|k| if k % 2 == 1 { 4.0 * sq[k] } else { 2.0 * sq[k] }).sum();
        h / 3.0 * (sq[0] + inner + sq[intervals])
    } else {
        mesh.windows(2).zip(sq.windows(2)).map(|(t, q)| 0.5 * (t[1] - t[0]) * (q[0] + q[1])).sum()
    }
}

/// Solves with uniform refinement; `control_of` maps a costate to the
/// quantity whose L² norm drives the refinement test.
pub fn solve_bvp_with(
    problem: &TwoPointProblem<'_>,
    opts: &BvpOptions,
    initial_guess: Option<(Vec<f64>, Vec<Vec<f64>>)>,
    control_of: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Result<BvpSolution> {
    let n = problem.dynamics.dim();
    if n == 0 || n % 2 != 0 {
        return Err(invalid("two-point dynamics must have even positive dimension"));
    }
    let m = n / 2;
    let b = &problem.boundary;
    if b.initial.len() != m || b.terminal_target.len() != m {
        return Err(invalid("boundary data must match the half dimension"));
    }
    if !(opts.tol > 0.0) || opts.initial_nodes < 2 || opts.max_nodes < opts.initial_nodes {
        return Err(invalid("solver options need tol > 0 and 2 ≤ initial_nodes ≤ max_nodes"));
    }
    if !(problem.horizon > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    let rule = collocation_rule(&opts.scheme)?;
    let (mut mesh, mut nodes) = match initial_guess {
        Some((mesh, nodes)) => {
            if mesh.len() < 2 || nodes.len() != mesh.len() || nodes.iter().any(|x| x.len() != n) {
                return Err(invalid("initial guess does not match the problem dimension"));
            }
            (mesh, nodes)
        }
        None => {
            let mesh = uniform_mesh(problem.horizon, opts.initial_nodes);
            let nodes = default_guess(problem, &mesh);
            (mesh, nodes)
        }
    };
    let norm_of = |mesh: &[f64], nodes: &[Vec<f64>]| -> f64 {
        let controls: Vec<Vec<f64>> = nodes.iter().map(|x| control_of(&x[m..])).collect();
        integral_sq(mesh, &controls).sqrt()
    };
    let mut solved = newton_on_mesh(problem, rule.as_ref(), &mesh, nodes, opts)?;
    let mut previous = norm_of(&mesh, &solved.nodes);
    let mut refinements = 0;
    loop {
        if 2 * mesh.len() - 1 > opts.max_nodes {
            return Err(Error::RefineLimit { nodes: mesh.len(), change: f64::NAN });
        }
        let (fine_mesh, guess) = refine_guess(problem.dynamics, &mesh, &solved.nodes);
        mesh = fine_mesh;
        nodes = guess;
        solved = newton_on_mesh(problem, rule.as_ref(), &mesh, nodes, opts)?;
        refinements += 1;
        let current = norm_of(&mesh, &solved.nodes);
        // a control at round-off level counts as zero
        let scale = solved.nodes.iter().map(|x| max_abs(&x[..m])).fold(1.0, f64::max);
        let change = (current - previous).abs() / current.max(1e-12 * scale);
        previous = current;
        if change < opts.tol {
            let (states, costates) = solved.nodes.iter().map(|x| (x[..m].to_vec(), x[m..].to_vec())).unzip();
            return Ok(BvpSolution {
                mesh,
                states,
                costates,
                residual_norm: solved.residual,
                newton_iterations: solved.iterations,
                refinements,
                control_change: change,
            });
        }
        if 2 * mesh.len() - 1 > opts.max_nodes {
            return Err(Error::RefineLimit { nodes: mesh.len(), change });
        }
    }
}

/// Solves a reduced optimal control problem.
pub fn solve_bvp(problem: &OcpProblem, opts: &BvpOptions) -> Result<BvpSolution> {
    let (dynamics, boundary) = assemble_pmp_bvp(problem)?;
    let tpp = TwoPointProblem { dynamics: &dynamics, boundary, horizon: problem.horizon };
    let control = problem.model.core().control().clone();
    let mu1 = problem.cost.control_weight;
    let control_of = move |p: &[f64]| -> Vec<f64> { control.apply(p).into_iter().map(|v| -v / mu1).collect() };
    solve_bvp_with(&tpp, opts, None, &control_of)
}

/// Low-mode control `u*_R` on the BVP mesh with its origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticControl {
    pub signal: ControlSignal,
    pub model: String,
    pub cost: String,
}

/// `u* = −(1/μ₁)·M·p*` at every node.
pub fn recover_control(sol: &BvpSolution, control: &Matrix, control_weight: f64) -> Result<ControlSignal> {
    if !(control_weight > 0.0) {
        return Err(invalid("control weight must be positive"));
    }
    let values = sol.costates.iter().map(|p| control.apply(p).into_iter().map(|v| -v / control_weight).collect()).collect();
    ControlSignal::new(sol.mesh.clone(), values)
}

/// `z + h(z)` at every node: low modes followed by the manifold block.
pub fn lift_trajectory(states: &[Vec<f64>], pm: &dyn PmFunction) -> Vec<ModalCoeffs> {
    states
        .iter()
        .map(|z| {
            let mut w = z.clone();
            w.extend(pm.eval(z));
            ModalCoeffs(w)
        })
        .collect()
}

/// Reduced cost `J_R` on the BVP mesh (trapezoid).
pub fn reduced_cost(sol: &BvpSolution, model: &dyn ReducedModel, cost: &CostSpec) -> Result<f64> {
    let u = recover_control(sol, model.core().control(), cost.control_weight)?;
    let running: Vec<f64> = sol
        .states
        .iter()
        .zip(u.values())
        .map(|(z, u)| running_state_cost(model, cost, z) + 0.5 * cost.control_weight * u.iter().map(|x| x * x).sum::<f64>())
        .collect();
    let mut j: f64 = sol.mesh.windows(2).zip(running.windows(2)).map(|(t, r)| 0.5 * (t[1] - t[0]) * (r[0] + r[1])).sum();
    let w = cost.terminal_weight();
    if w > 0.0 {
        let zt = sol.states.last().unwrap();
        j += 0.5 * w * zt.iter().enumerate().map(|(i, z)| (z - cost.target.mode(i + 1)).powi(2)).sum::<f64>();
    }
    Ok(j)
}

/// Cost of a PDE trajectory driven by `u` (grid L² norms, trapezoid in time).
pub fn evaluate_cost(traj: &Trajectory, u: &ControlSignal, cost: &CostSpec) -> Result<f64> {
    let grid = traj.grid();
    let basis = crate::spectral::ModalBasis::new(grid);
    let target = basis.synthesize(cost.target.as_slice());
    let dx = grid.dx();
    let sq_dist = |y: &[f64]| -> f64 { dx * y.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() };
    let sq_norm = |y: &[f64]| -> f64 { dx * y.iter().map(|a| a * a).sum::<f64>() };
    let running: Vec<f64> = (0..traj.len())
        .map(|n| {
            let y = traj.state(n);
            let state = if !cost.running_state {
                0.0
            } else if cost.is_tracking() {
                sq_dist(y)
            } else {
                sq_norm(y)
            };
            let un = u.eval(traj.time(n));
            0.5 * state + 0.5 * cost.control_weight * un.iter().map(|x| x * x).sum::<f64>()
        })
        .collect();
    let dt = traj.dt();
    let mut j: f64 = running.windows(2).map(|r| 0.5 * dt * (r[0] + r[1])).sum();
    let w = cost.terminal_weight();
    if w > 0.0 {
        j += 0.5 * w * sq_dist(traj.state(traj.len() - 1));
    }
    Ok(j)
}

/// Full-model inputs for [`synthesize_suboptimal`].
pub struct PdeInputs<'a> {
    pub params: &'a SpectralParams,
    pub grid: &'a PdeGrid,
    pub initial: &'a GridField,
    pub operator: &'a ControlOperator,
}

/// Everything produced by one end-to-end run.
#[derive(Debug)]
pub struct SynthesisOutcome {
    pub solution: BvpSolution,
    pub control: SyntheticControl,
    pub trajectory: Trajectory,
    pub cost: f64,
    pub reduced_cost: f64,
    pub relative_target_error: f64,
}

/// Solve → recover → drive the PDE → evaluate.
pub fn synthesize_suboptimal(problem: &OcpProblem, pde: &PdeInputs<'_>, opts: &BvpOptions) -> Result<SynthesisOutcome> {
    if (problem.horizon - pde.grid.horizon()).abs() > 0.5 * pde.grid.dt() {
        return Err(invalid("reduced and PDE horizons differ"));
    }
    let solution = solve_bvp(problem, opts)?;
    let signal = recover_control(&solution, problem.model.core().control(), problem.cost.control_weight)?;
    let trajectory = integrate_pde(pde.initial, &signal, pde.operator, pde.params, pde.grid)?;
    let cost = evaluate_cost(&trajectory, &signal, &problem.cost)?;
    let reduced = reduced_cost(&solution, problem.model.as_ref(), &problem.cost)?;
    let relative_target_error = target_relative_error(&trajectory.final_state(), &problem.cost.target)?;
    let kind = if problem.cost.is_tracking() { "tracking" } else { "terminal_payoff" };
    Ok(SynthesisOutcome {
        solution,
        control: SyntheticControl { signal, model: problem.model.name().to_string(), cost: kind.to_string() },
        trajectory,
        cost,
        reduced_cost: reduced,
        relative_target_error,
    })
}

/// CSV `t, z₁..z_m, p₁..p_m, u₁..u_m`.
pub fn write_solution_csv<W: Write>(mut w: W, sol: &BvpSolution, control: &ControlSignal) -> Result<()> {
    let m = sol.dim();
    let mut header = vec!["t".to_string()];
    for prefix in ["z", "p", "u"] {
        header.extend((1..=m).map(|i| format!("{prefix}{i}")));
    }
    writeln!(w, "{}", header.join(","))?;
    for (k, t) in sol.mesh.iter().enumerate() {
        let mut row = vec![fmt12(*t)];
        row.extend(sol.states[k].iter().map(|v| fmt12(*v)));
        row.extend(sol.costates[k].iter().map(|v| fmt12(*v)));
        row.extend(control.values()[k].iter().map(|v| fmt12(*v)));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
