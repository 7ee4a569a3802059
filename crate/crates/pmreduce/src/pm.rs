//! Parameterizing manifolds: maps from the resolved modes `1..=m` to the
//! high modes `m+1..`, their non-resonance conditions, a brute-force
//! pullback oracle and the parameterization defect.
//!
//! Every map here outputs coefficients for a contiguous block of high modes
//! starting at `m + 1` (empty for the Galerkin map).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pde::{fmt12, Trajectory};
use crate::spectral::{burgers_projection, EigenData, NormKind, SpectralParams};

/// One non-resonance quantity, e.g. `β1+β2−β4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NrMargin {
    pub label: String,
    /// Mode indices entering the combination; the last one is the target mode.
    pub indices: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NrReport {
    pub satisfied: bool,
    pub margins: Vec<NrMargin>,
}

impl NrReport {
    fn from_margins(margins: Vec<NrMargin>) -> Self {
        let satisfied = margins.iter().all(|m| m.value > 0.0);
        Self { satisfied, margins }
    }

    pub fn min_margin(&self) -> f64 {
        self.margins.iter().map(|m| m.value).fold(f64::INFINITY, f64::min)
    }

    fn require(&self) -> Result<()> {
        match self.margins.iter().find(|m| !(m.value > 0.0)) {
            Some(bad) => Err(Error::Resonance { condition: bad.label.clone(), margin: bad.value }),
            None => Ok(()),
        }
    }
}

fn need_modes(eigen: &EigenData, n: usize) -> Result<()> {
    if eigen.n_max() < n {
        return Err(invalid(format!("eigen data holds {} modes, need {n}", eigen.n_max())));
    }
    Ok(())
}

/// `β_i + β_{n−i} − β_n` over all coupled pairs `i ≤ n − i ≤ m < n`.
pub fn check_nr(eigen: &EigenData, m: usize) -> Result<NrReport> {
    if m == 0 {
        return Err(invalid("resolved dimension must be at least 1"));
    }
    need_modes(eigen, 2 * m)?;
    let mut margins = Vec::new();
    for n in m + 1..=2 * m {
        for i in n - m..=n / 2 {
            let j = n - i;
            margins.push(NrMargin {
                label: format!("β{i}+β{j}−β{n}"),
                indices: vec![i, j, n],
                value: eigen.beta(i) + eigen.beta(j) - eigen.beta(n),
            });
        }
    }
    Ok(NrReport::from_margins(margins))
}

/// The seven conditions under which the two-layer pullback limit exists
/// for `m = 2`; the first four concern mode 3, the last three mode 4.
pub fn check_nr2(eigen: &EigenData) -> Result<NrReport> {
    need_modes(eigen, 4)?;
    let b = |n| eigen.beta(n);
    let rows: [(&str, Vec<usize>, f64); 7] = [
        ("β1+β2−β3", vec![1, 2, 3], b(1) + b(2) - b(3)),
        ("β1+2β2−β3", vec![1, 2, 2, 3], b(1) + 2.0 * b(2) - b(3)),
        ("3β1−β3", vec![1, 1, 1, 3], 3.0 * b(1) - b(3)),
        ("3β1+β2−β3", vec![1, 1, 1, 2, 3], 3.0 * b(1) + b(2) - b(3)),
        ("2β1+β2−β4", vec![1, 1, 2, 4], 2.0 * b(1) + b(2) - b(4)),
        ("4β1−β4", vec![1, 1, 1, 1, 4], 4.0 * b(1) - b(4)),
        ("2β2−β4", vec![2, 2, 4], 2.0 * b(2) - b(4)),
    ];
    let margins = rows
        .into_iter()
        .map(|(label, indices, value)| NrMargin { label: label.to_string(), indices, value })
        .collect();
    Ok(NrReport::from_margins(margins))
}

/// Coefficients of the one-layer two-mode map
/// `h³ = cross·ξ₁ξ₂`, `h⁴ = square·ξ₂²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H1TwoModeCoeffs {
    pub cross: f64,
    pub square: f64,
}

pub fn h1_coeffs_2d(eigen: &EigenData) -> Result<H1TwoModeCoeffs> {
    check_nr(eigen, 2)?.require()?;
    let a = eigen.alpha();
    let b = |n| eigen.beta(n);
    Ok(H1TwoModeCoeffs {
        cross: -3.0 * a / (b(1) + b(2) - b(3)),
        square: -2.0 * a / (2.0 * b(2) - b(4)),
    })
}

/// Coefficients of the two-layer two-mode map, named by monomial:
/// `h³ = xy·ξ₁ξ₂ + x3·ξ₁³ + xy2·ξ₁ξ₂² + x3y·ξ₁³ξ₂` and
/// `h⁴ = y2·ξ₂² + x2y·ξ₁²ξ₂ + x4·ξ₁⁴`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H2TwoModeCoeffs {
    pub xy: f64,
    pub x3: f64,
    pub xy2: f64,
    pub x3y: f64,
    pub y2: f64,
    pub x2y: f64,
    pub x4: f64,
}

impl H2TwoModeCoeffs {
    /// Coefficients confirmed by the pullback oracle.
    pub fn new(eigen: &EigenData) -> Result<Self> {
        check_nr2(eigen)?.require()?;
        let a = eigen.alpha();
        let b = |n| eigen.beta(n);
        let d123 = b(1) + b(2) - b(3);
        let d1223 = b(1) + 2.0 * b(2) - b(3);
        let d1113 = 3.0 * b(1) - b(3);
        let d11123 = 3.0 * b(1) + b(2) - b(3);
        let d1124 = 2.0 * b(1) + b(2) - b(4);
        let d11114 = 4.0 * b(1) - b(4);
        let d224 = 2.0 * b(2) - b(4);
        Ok(Self {
            xy: -3.0 * a / d123,
            x3: -3.0 * a * a / (d1113 * d123),
            xy2: 3.0 * a * a / (d1223 * d123),
            x3y: 6.0 * a.powi(3) * (2.0 * b(1) + b(2) - b(3)) / (d1113 * d123 * d1223 * d11123),
            y2: -2.0 * a / d224,
            x2y: -4.0 * a * a / (d1124 * d224),
            x4: -4.0 * a.powi(3) / (d11114 * d1124 * d224),
        })
    }

    /// Variant with `α` instead of `α²` in the `ξ₁ξ₂²` coefficient and
    /// `β₂ − β₄` in the `ξ₂²` denominator. Both disagree with the pullback
    /// limit; kept for regression comparison only.
    pub fn rejected_variant(eigen: &EigenData) -> Result<Self> {
        let mut c = Self::new(eigen)?;
        let a = eigen.alpha();
        let b = |n| eigen.beta(n);
        c.xy2 = 3.0 * a / ((b(1) + 2.0 * b(2) - b(3)) * (b(1) + b(2) - b(3)));
        c.y2 = -2.0 * a / (b(2) - b(4));
        Ok(c)
    }
}

/// A map from `m` resolved coefficients to the high-mode block `m+1..m+n_high`.
pub trait PmFunction: Send + Sync {
    fn name(&self) -> &'static str;
    fn low_dim(&self) -> usize;
    fn n_high(&self) -> usize;
    /// High-mode coefficients, slot `k` holding mode `m + 1 + k`.
    fn eval(&self, xi: &[f64]) -> Vec<f64>;
    /// `∂h^{m+1+k}/∂ξ_i` at slot `[k][i]`.
    fn jacobian(&self, xi: &[f64]) -> Vec<Vec<f64>>;
}

/// Galerkin closure: no high modes.
#[derive(Debug, Clone, Copy)]
pub struct ZeroPm {
    m: usize,
}

impl ZeroPm {
    pub fn new(m: usize) -> Self {
        Self { m }
    }
}

impl PmFunction for ZeroPm {
    fn name(&self) -> &'static str {
        "zero"
    }
    fn low_dim(&self) -> usize {
        self.m
    }
    fn n_high(&self) -> usize {
        0
    }
    fn eval(&self, _xi: &[f64]) -> Vec<f64> {
        Vec::new()
    }
    fn jacobian(&self, _xi: &[f64]) -> Vec<Vec<f64>> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct H1TwoMode {
    coeffs: H1TwoModeCoeffs,
}

impl H1TwoMode {
    pub fn new(eigen: &EigenData) -> Result<Self> {
        Ok(Self { coeffs: h1_coeffs_2d(eigen)? })
    }
    pub fn from_coeffs(coeffs: H1TwoModeCoeffs) -> Self {
        Self { coeffs }
    }
    pub fn coeffs(&self) -> H1TwoModeCoeffs {
        self.coeffs
    }
}

impl PmFunction for H1TwoMode {
    fn name(&self) -> &'static str {
        "h1_2d"
    }
    fn low_dim(&self) -> usize {
        2
    }
    fn n_high(&self) -> usize {
        2
    }
    fn eval(&self, xi: &[f64]) -> Vec<f64> {
        let (x, y) = (xi[0], xi[1]);
        vec![self.coeffs.cross * x * y, self.coeffs.square * y * y]
    }
    fn jacobian(&self, xi: &[f64]) -> Vec<Vec<f64>> {
        let (x, y) = (xi[0], xi[1]);
        vec![vec![self.coeffs.cross * y, self.coeffs.cross * x], vec![0.0, 2.0 * self.coeffs.square * y]]
    }
}

/// One-layer map for general `m`, using the odd/even split of the pair sum.
#[derive(Debug, Clone)]
pub struct H1MultiMode {
    m: usize,
    alpha: f64,
    /// `β_i + β_{n−i} − β_n` at `[n − m − 1][i − 1]` for `n − m ≤ i ≤ m`.
    denominators: Vec<Vec<f64>>,
}

impl H1MultiMode {
    pub fn new(eigen: &EigenData, m: usize) -> Result<Self> {
        check_nr(eigen, m)?.require()?;
        let denominators = (m + 1..=2 * m)
            .map(|n| {
                (1..=m)
                    .map(|i| if i >= n - m { eigen.beta(i) + eigen.beta(n - i) - eigen.beta(n) } else { f64::NAN })
                    .collect()
            })
            .collect();
        Ok(Self { m, alpha: eigen.alpha(), denominators })
    }

    fn den(&self, n: usize, i: usize) -> f64 {
        self.denominators[n - self.m - 1][i - 1]
    }
}

impl PmFunction for H1MultiMode {
    fn name(&self) -> &'static str {
        "h1_m"
    }
    fn low_dim(&self) -> usize {
        self.m
    }
    fn n_high(&self) -> usize {
        self.m
    }
    fn eval(&self, xi: &[f64]) -> Vec<f64> {
        let m = self.m;
        (m + 1..=2 * m)
            .map(|n| {
                let z = |i: usize| xi[i - 1];
                let nf = n as f64;
                if n % 2 == 1 {
                    let s: f64 = (n - m..=(n - 1) / 2).map(|i| z(i) * z(n - i) / self.den(n, i)).sum();
                    -nf * self.alpha * s
                } else {
                    let half = n / 2;
                    // empty when the lower bound passes (n−2)/2
                    let pairs: f64 = (n - m..=(n - 2) / 2).map(|i| 2.0 * z(i) * z(n - i) / self.den(n, i)).sum();
                    let diag = z(half) * z(half) / self.den(n, half);
                    -0.5 * nf * self.alpha * (pairs + diag)
                }
            })
            .collect()
    }
    fn jacobian(&self, xi: &[f64]) -> Vec<Vec<f64>> {
        let m = self.m;
        (m + 1..=2 * m)
            .map(|n| {
                let mut row = vec![0.0; m];
                for (i, slot) in row.iter_mut().enumerate().skip(n - m - 1) {
                    let i = i + 1;
                    *slot = -(n as f64) * self.alpha * xi[n - i - 1] / self.den(n, i);
                }
                row
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct H2TwoMode {
    coeffs: H2TwoModeCoeffs,
}

impl H2TwoMode {
    pub fn new(eigen: &EigenData) -> Result<Self> {
        Ok(Self { coeffs: H2TwoModeCoeffs::new(eigen)? })
    }
    pub fn from_coeffs(coeffs: H2TwoModeCoeffs) -> Self {
        Self { coeffs }
    }
    pub fn coeffs(&self) -> H2TwoModeCoeffs {
        self.coeffs
    }
}

impl PmFunction for H2TwoMode {
    fn name(&self) -> &'static str {
        "h2_2d"
    }
    fn low_dim(&self) -> usize {
        2
    }
    fn n_high(&self) -> usize {
        2
    }
    fn eval(&self, xi: &[f64]) -> Vec<f64> {
        let c = &self.coeffs;
        let (x, y) = (xi[0], xi[1]);
        vec![
            c.xy * x * y + c.x3 * x.powi(3) + c.xy2 * x * y * y + c.x3y * x.powi(3) * y,
            c.y2 * y * y + c.x2y * x * x * y + c.x4 * x.powi(4),
        ]
    }
    fn jacobian(&self, xi: &[f64]) -> Vec<Vec<f64>> {
        let c = &self.coeffs;
        let (x, y) = (xi[0], xi[1]);
        vec![
            vec![
                c.xy * y + 3.0 * c.x3 * x * x + c.xy2 * y * y + 3.0 * c.x3y * x * x * y,
                c.xy * x + 2.0 * c.xy2 * x * y + c.x3y * x.powi(3),
            ],
            vec![2.0 * c.x2y * x * y + 4.0 * c.x4 * x.powi(3), 2.0 * c.y2 * y + c.x2y * x * x],
        ]
    }
}

/// Named manifold families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmKind {
    Zero,
    H1TwoMode,
    H1Multi,
    H2TwoMode,
}

type PmBuilder = fn(&EigenData, usize) -> Result<Box<dyn PmFunction>>;

fn two_modes_only(m: usize) -> Result<()> {
    if m != 2 {
        return Err(invalid(format!("this manifold is defined for m = 2 only, got m = {m}")));
    }
    Ok(())
}

/// Name → constructor table consulted by [`build_pm`].
pub const PM_REGISTRY: &[(&str, PmKind, PmBuilder)] = &[
    ("zero", PmKind::Zero, |_, m| Ok(Box::new(ZeroPm::new(m)))),
    ("h1_2d", PmKind::H1TwoMode, |e, m| {
        two_modes_only(m)?;
        Ok(Box::new(H1TwoMode::new(e)?))
    }),
    ("h1_m", PmKind::H1Multi, |e, m| Ok(Box::new(H1MultiMode::new(e, m)?))),
    ("h2_2d", PmKind::H2TwoMode, |e, m| {
        two_modes_only(m)?;
        Ok(Box::new(H2TwoMode::new(e)?))
    }),
];

impl PmKind {
    pub fn parse(name: &str) -> Result<Self> {
        PM_REGISTRY
            .iter()
            .find(|(n, _, _)| *n == name)
            .map(|(_, k, _)| *k)
            .ok_or_else(|| {
                let known: Vec<&str> = PM_REGISTRY.iter().map(|(n, _, _)| *n).collect();
                invalid(format!("unknown manifold '{name}' (known: {})", known.join(", ")))
            })
    }

    pub fn name(self) -> &'static str {
        PM_REGISTRY.iter().find(|(_, k, _)| *k == self).map(|(n, _, _)| *n).unwrap()
    }

    pub fn build(self, eigen: &EigenData, m: usize) -> Result<Box<dyn PmFunction>> {
        if m == 0 {
            return Err(invalid("resolved dimension must be at least 1"));
        }
        let (_, _, builder) = PM_REGISTRY.iter().find(|(_, k, _)| *k == self).unwrap();
        builder(eigen, m)
    }
}

pub fn build_pm(name: &str, eigen: &EigenData, m: usize) -> Result<Box<dyn PmFunction>> {
    PmKind::parse(name)?.build(eigen, m)
}

/// Checked evaluation.
pub fn eval_pm(h: &dyn PmFunction, xi: &[f64]) -> Result<Vec<f64>> {
    if xi.len() != h.low_dim() {
        return Err(invalid(format!("manifold expects {} low modes, got {}", h.low_dim(), xi.len())));
    }
    Ok(h.eval(xi))
}

/// Number of backward-forward layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layers {
    One,
    Two,
}

impl Layers {
    pub fn from_count(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Layers::One),
            2 => Ok(Layers::Two),
            other => Err(invalid(format!("layers must be 1 or 2, got {other}"))),
        }
    }
}

/// `∫_s^0 e^{cτ} dτ`, stable near `c = 0`.
fn exp_integral(c: f64, s: f64) -> f64 {
    if (c * s).abs() < 1e-12 {
        -s
    } else {
        -(c * s).exp_m1() / c
    }
}

/// Low-mode backward solution at time `s ≤ 0`.
fn low_modes_at(layers: Layers, xi: &[f64], s: f64, params: &SpectralParams, eigen: &EigenData) -> Vec<f64> {
    let m = xi.len();
    (1..=m)
        .map(|k| {
            let bk = eigen.beta(k);
            let mut inner = xi[k - 1];
            if layers == Layers::Two {
                for i in 1..=m {
                    for j in 1..=m {
                        let coef = params.interaction_coefficient(i, j, k);
                        if coef != 0.0 {
                            let c = eigen.beta(i) + eigen.beta(j) - bk;
                            inner -= coef * xi[i - 1] * xi[j - 1] * exp_integral(c, s);
                        }
                    }
                }
            }
            (bk * s).exp() * inner
        })
        .collect()
}

fn forcing_at(layers: Layers, xi: &[f64], s: f64, params: &SpectralParams, eigen: &EigenData) -> Vec<f64> {
    let m = xi.len();
    let low = low_modes_at(layers, xi, s, params, eigen);
    (m + 1..=2 * m).map(|n| burgers_projection(&low, n, eigen.alpha())).collect()
}

fn pullback_rk4(layers: Layers, xi: &[f64], tau: f64, params: &SpectralParams, eigen: &EigenData, n_steps: usize) -> Vec<f64> {
    let m = xi.len();
    let h = tau / n_steps as f64;
    let betas: Vec<f64> = (m + 1..=2 * m).map(|n| eigen.beta(n)).collect();
    let rhs = |s: f64, y: &[f64]| -> Vec<f64> {
        let f = forcing_at(layers, xi, s, params, eigen);
        y.iter().zip(&betas).zip(&f).map(|((y, b), f)| b * y + f).collect()
    };
    let mut y = vec![0.0; m];
    for step in 0..n_steps {
        let s = -tau + step as f64 * h;
        let k1 = rhs(s, &y);
        let y2: Vec<f64> = y.iter().zip(&k1).map(|(y, k)| y + 0.5 * h * k).collect();
        let k2 = rhs(s + 0.5 * h, &y2);
        let y3: Vec<f64> = y.iter().zip(&k2).map(|(y, k)| y + 0.5 * h * k).collect();
        let k3 = rhs(s + 0.5 * h, &y3);
        let y4: Vec<f64> = y.iter().zip(&k3).map(|(y, k)| y + h * k).collect();
        let k4 = rhs(s + h, &y4);
        for i in 0..m {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

/// Relative change tolerated between `n_steps` and `2·n_steps`.
pub const PULLBACK_REFINE_TOL: f64 = 1e-6;

/// High modes `m+1..=2m` at `s = 0` of the backward-forward system started
/// at `s = −τ`; the low modes are integrated in closed form and the high
/// modes by classical RK4.
pub fn pullback_oracle(
    layers: Layers,
    xi: &[f64],
    tau: f64,
    params: &SpectralParams,
    eigen: &EigenData,
    n_steps: usize,
) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(invalid("pullback horizon must be positive"));
    }
    if xi.is_empty() || n_steps == 0 {
        return Err(invalid("need at least one low mode and one step"));
    }
    need_modes(eigen, 2 * xi.len())?;
    let coarse = pullback_rk4(layers, xi, tau, params, eigen, n_steps);
    let fine = pullback_rk4(layers, xi, tau, params, eigen, 2 * n_steps);
    let diff = coarse.iter().zip(&fine).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let size = fine.iter().map(|b| b * b).sum::<f64>().sqrt();
    if !diff.is_finite() || !size.is_finite() {
        return Err(Error::RefineNeeded { change: f64::INFINITY });
    }
    if diff > PULLBACK_REFINE_TOL * size.max(f64::MIN_POSITIVE) && diff > 0.0 {
        return Err(Error::RefineNeeded { change: diff / size.max(f64::MIN_POSITIVE) });
    }
    Ok(fine)
}

/// Defect ratio and its running curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectCurve {
    pub q: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// `(t, Q(t))` wherever the running denominator is positive.
    pub curve: Vec<(f64, f64)>,
}

impl DefectCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,Q_t")?;
        for (t, q) in &self.curve {
            writeln!(w, "{},{}", fmt12(*t), fmt12(*q))?;
        }
        Ok(())
    }
}

/// Default high-mode cut `Nx/2`.
pub fn default_n_max(intervals: usize) -> usize {
    intervals / 2
}

/// `∫‖y_s − h(y_c)‖² / ∫‖y_s‖²` over modes `m+1..=n_max` with trapezoid
/// quadrature on the trajectory's time grid.
pub fn parameterization_defect(
    traj: &Trajectory,
    h: &dyn PmFunction,
    m: usize,
    norm: NormKind,
    n_max: usize,
) -> Result<DefectCurve> {
    if h.low_dim() != m {
        return Err(invalid(format!("manifold acts on {} modes, defect requested for m = {m}", h.low_dim())));
    }
    let length = traj.grid().length();
    let available = traj.grid().interior();
    if n_max <= m || n_max > available {
        return Err(invalid(format!("high-mode cut {n_max} must lie in ({m}, {available}]")));
    }
    let mut num_pts = Vec::with_capacity(traj.len());
    let mut den_pts = Vec::with_capacity(traj.len());
    for c in traj.modal() {
        let low = &c.as_slice()[..m];
        let hv = h.eval(low);
        let (mut num, mut den) = (0.0, 0.0);
        for n in m + 1..=n_max {
            let w = norm.weight(n, length);
            let y = c.mode(n);
            let k = n - m - 1;
            let param = hv.get(k).copied().unwrap_or(0.0);
            num += w * (y - param).powi(2);
            den += w * y * y;
        }
        num_pts.push(num);
        den_pts.push(den);
    }
    let dt = traj.dt();
    let (mut num_int, mut den_int) = (0.0, 0.0);
    let mut curve = Vec::with_capacity(traj.len());
    for k in 1..traj.len() {
        num_int += 0.5 * dt * (num_pts[k - 1] + num_pts[k]);
        den_int += 0.5 * dt * (den_pts[k - 1] + den_pts[k]);
        if den_int > 0.0 {
            curve.push((traj.time(k), num_int / den_int));
        }
    }
    if !(den_int > 0.0) {
        return Err(Error::UndefinedDefect);
    }
    Ok(DefectCurve { q: num_int / den_int, numerator: num_int, denominator: den_int, curve })
}
