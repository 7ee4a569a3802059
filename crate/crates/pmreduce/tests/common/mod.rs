//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use pmreduce::pm::PmFunction;
use pmreduce::reduced::{hamiltonian, CostSpec, ReducedModel};
use pmreduce::spectral::{burgers_projection, SpectralParams};

pub fn sect5_params() -> SpectralParams {
    SpectralParams::with_critical_factor(1.0, 2.5, 3.0, 1.3 * PI).unwrap()
}

pub fn sect7_params() -> SpectralParams {
    SpectralParams::with_critical_factor(0.25, 2.5, 7.0, 1.3 * PI).unwrap()
}

/// `β_k z_k + ⟨B(w, w), e_k⟩ + v_k` with `w = (z, h(z))`.
pub fn generic_field(params: &SpectralParams, pm: &dyn PmFunction, z: &[f64], v: &[f64]) -> Vec<f64> {
    let mut w = z.to_vec();
    w.extend(pm.eval(z));
    (1..=z.len())
        .map(|k| params.beta(k) * z[k - 1] + burgers_projection(&w, k, params.interaction()) + v[k - 1])
        .collect()
}

/// `−∇_z H` by central differences.
pub fn fd_costate(model: &dyn ReducedModel, cost: &CostSpec, z: &[f64], p: &[f64], u: &[f64], step: f64) -> Vec<f64> {
    (0..z.len())
        .map(|i| {
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[i] += step;
            zm[i] -= step;
            -(hamiltonian(model, cost, &zp, p, u) - hamiltonian(model, cost, &zm, p, u)) / (2.0 * step)
        })
        .collect()
}

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
        m.swap(k, p);
        x.swap(k, p);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..n {
                m[i][j] -= f * m[k][j];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        for j in k + 1..n {
            x[k] -= m[k][j] * x[j];
        }
        x[k] /= m[k][k];
    }
    x
}

/// Scalar LQR `z' = βz − p/μ₁`, `p' = −(z − Y_run) − βp` through the
/// Riccati substitution `p = P z + s`, integrated by RK4.
pub struct RiccatiOracle {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub costates: Vec<f64>,
}

/// `tracking`: running target `y_target`, `p(T) = 0`; otherwise running
/// target 0 and `p(T) = μ₂(z(T) − y_target)`.
pub fn riccati_oracle(
    beta: f64,
    mu1: f64,
    mu2: f64,
    y_target: f64,
    tracking: bool,
    z0: f64,
    horizon: f64,
    steps: usize,
) -> RiccatiOracle {
    let y_run = if tracking { y_target } else { 0.0 };
    let rhs = |x: [f64; 2]| -> [f64; 2] {
        let (pp, s) = (x[0], x[1]);
        [-2.0 * beta * pp + pp * pp / mu1 - 1.0, (pp / mu1 - beta) * s + y_run]
    };
    // backward sweep on a half-step grid
    let fine = 2 * steps;
    let h = horizon / fine as f64;
    let mut ps = vec![[0.0; 2]; fine + 1];
    ps[fine] = if tracking { [0.0, 0.0] } else { [mu2, -mu2 * y_target] };
    for k in (0..fine).rev() {
        let x = ps[k + 1];
        let add = |a: [f64; 2], b: [f64; 2], c: f64| [a[0] + c * b[0], a[1] + c * b[1]];
        let k1 = rhs(x);
        let k2 = rhs(add(x, k1, -0.5 * h));
        let k3 = rhs(add(x, k2, -0.5 * h));
        let k4 = rhs(add(x, k3, -h));
        ps[k] = [
            x[0] - h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x[1] - h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
    }
    let flow = |z: f64, x: [f64; 2]| beta * z - (x[0] * z + x[1]) / mu1;
    let big = 2.0 * h;
    let mut z = z0;
    let mut out = RiccatiOracle { times: vec![0.0], states: vec![z0], costates: vec![ps[0][0] * z0 + ps[0][1]] };
    for k in 0..steps {
        let (a, b, c) = (ps[2 * k], ps[2 * k + 1], ps[2 * k + 2]);
        let k1 = flow(z, a);
        let k2 = flow(z + 0.5 * big * k1, b);
        let k3 = flow(z + 0.5 * big * k2, b);
        let k4 = flow(z + big * k3, c);
        z += big / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.times.push((k + 1) as f64 * big);
        out.states.push(z);
        out.costates.push(c[0] * z + c[1]);
    }
    out
}

/// RK4 of an autonomous vector field with a fixed number of steps.
pub fn rk4_flow(field: impl Fn(&[f64]) -> Vec<f64>, x0: &[f64], horizon: f64, steps: usize) -> Vec<f64> {
    let h = horizon / steps as f64;
    let mut x = x0.to_vec();
    let shifted = |x: &[f64], k: &[f64], c: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    for _ in 0..steps {
        let k1 = field(&x);
        let k2 = field(&shifted(&x, &k1, 0.5 * h));
        let k3 = field(&shifted(&x, &k2, 0.5 * h));
        let k4 = field(&shifted(&x, &k3, h));
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

/// Rotation by `angle`, optionally composed with a reflection.
pub fn orthogonal_2x2(angle: f64, reflect: bool) -> pmreduce::dense::Matrix {
    let (s, c) = angle.sin_cos();
    let rows = if reflect { vec![vec![c, s], vec![s, -c]] } else { vec![vec![c, -s], vec![s, c]] };
    pmreduce::dense::Matrix::from_rows(&rows).unwrap()
}

/// `(1 − λδt)I − νδt·D²` with Dirichlet ends, solved densely.
pub fn dense_step(y: &[f64], f: &[f64], p: &SpectralParams, dx: f64, dt: f64) -> Vec<f64> {
    let n = y.len();
    let mut a = vec![vec![0.0; n]; n];
    let d = p.nu() * dt / (dx * dx);
    for j in 0..n {
        a[j][j] = 1.0 - p.lambda() * dt + 2.0 * d;
        if j > 0 {
            a[j][j - 1] = -d;
        }
        if j + 1 < n {
            a[j][j + 1] = -d;
        }
    }
    let rhs: Vec<f64> = (0..n)
        .map(|j| {
            let next = if j + 1 < n { y[j + 1] * y[j + 1] } else { 0.0 };
            y[j] - 0.5 * p.gamma() * dt / dx * (next - y[j] * y[j]) + dt * f[j]
        })
        .collect();
    dense_solve(&a, &rhs)
}
