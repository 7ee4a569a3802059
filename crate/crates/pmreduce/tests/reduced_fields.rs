//! Reduced fields against the generic bilinear projection, costates against
//! finite differences of the Hamiltonian, and cross-model identities.

mod common;

use common::{fd_costate, generic_field, sect5_params, sect7_params};
use pmreduce::dense::Matrix;
use pmreduce::pde::indicator_matrix;
use pmreduce::pm::{H1MultiMode, H2TwoMode, H2TwoModeCoeffs, PmFunction, ZeroPm};
use pmreduce::reduced::{
    build_model, costate_rf, CostSpec, GalerkinModel, H1TwoModeModel, H2TwoModeModel, LocalH1Model, ReducedModel,
};
use pmreduce::spectral::{EigenData, ModalCoeffs, SpectralParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-r..r)).collect()
}

fn cases() -> Vec<(SpectralParams, &'static str, usize, Matrix)> {
    let p5 = sect5_params();
    let p7 = sect7_params();
    let loc = |m| indicator_matrix(0.2 * p7.length(), 0.8 * p7.length(), m, p7.length()).unwrap();
    vec![
        (p5, "h1_2d", 2, Matrix::from_rows(&[vec![0.6, 0.8], vec![-0.8, 0.6]]).unwrap()),
        (p5, "h2_2d", 2, Matrix::identity(2)),
        (p5, "galerkin", 2, Matrix::identity(2)),
        (p5, "galerkin", 5, Matrix::identity(5)),
        (p7, "h1_local", 4, loc(4)),
        (p7, "h1_local", 3, loc(3)),
        (p7, "galerkin", 4, loc(4)),
    ]
}

#[test]
fn fields_match_generic_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (p, name, m, c) in cases() {
        let model = build_model(name, &p, m, c).unwrap();
        for _ in 0..50 {
            let z = random_vec(&mut rng, m, 2.0);
            let v = random_vec(&mut rng, m, 1.0);
            let want = generic_field(&p, model.pm(), &z, &v);
            let got = model.field(&z, &v);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12 * (1.0 + w.abs()), "{name} m={m}: {g} vs {w}");
            }
        }
    }
}

#[test]
fn costates_match_hamiltonian_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (p, name, m, c) in cases() {
        let model = build_model(name, &p, m, c).unwrap();
        let target = ModalCoeffs(random_vec(&mut rng, 2 * m, 1.0));
        let costs = [
            CostSpec::terminal(1.0, 20.0, target.clone()).unwrap(),
            CostSpec::tracking(0.02, target.clone()).unwrap(),
        ];
        for cost in &costs {
            for _ in 0..100 {
                let z = random_vec(&mut rng, m, 2.0);
                let q = random_vec(&mut rng, m, 2.0);
                let u = random_vec(&mut rng, m, 1.0);
                let got = costate_rf(model.as_ref(), cost, &z, &q).unwrap();
                let want = fd_costate(model.as_ref(), cost, &z, &q, &u, 1e-6);
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() <= 1e-6 * (1.0 + w.abs()), "{name} m={m} {:?}: {g} vs {w}", cost.kind);
                }
            }
        }
    }
}

#[test]
fn flipped_second_costate_sign_fails_gradient_check() {
    // A +6αα₂p₂z₂² term disagrees with −∇H; the correct sign is −6αα₂p₂z₂².
    let p = sect5_params();
    let e = EigenData::new(&p, 2, 4).unwrap();
    let model = H1TwoModeModel::new(&e, Matrix::identity(2)).unwrap();
    let cost = CostSpec::terminal(1.0, 20.0, ModalCoeffs::zeros(2)).unwrap();
    let (z, q) = ([0.4, -1.1], [0.3, 0.9]);
    let ours = costate_rf(&model, &cost, &z, &q).unwrap();
    let fd = fd_costate(&model, &cost, &z, &q, &[0.0, 0.0], 1e-6);
    let flipped = ours[1] + 12.0 * e.alpha() * model.coeffs().square * q[1] * z[1] * z[1];
    assert!((ours[1] - fd[1]).abs() < 1e-6);
    assert!((flipped - fd[1]).abs() > 1e-2);
}

#[test]
fn local_two_mode_equals_h1_two_mode() {
    let p = sect5_params();
    let e = EigenData::new(&p, 2, 4).unwrap();
    let m_mat = Matrix::from_rows(&[vec![0.3, -1.2], vec![0.5, 0.9]]).unwrap();
    let a = H1TwoModeModel::new(&e, m_mat.clone()).unwrap();
    let b = LocalH1Model::new(&e, 2, m_mat).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let z = random_vec(&mut rng, 2, 2.0);
        let q = random_vec(&mut rng, 2, 2.0);
        let u = random_vec(&mut rng, 2, 2.0);
        let v = a.core().control().apply_transpose(&u);
        for (x, y) in a.field(&z, &v).iter().zip(b.field(&z, &v)) {
            assert!((x - y).abs() <= 1e-13 * (1.0 + x.abs()));
        }
        for (x, y) in a.field_adjoint(&z, &q).iter().zip(b.field_adjoint(&z, &q)) {
            assert!((x - y).abs() <= 1e-13 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn galerkin_equals_local_with_zero_manifold() {
    let p = sect7_params();
    let m = 4;
    let e = EigenData::new(&p, m, 2 * m).unwrap();
    let c = indicator_matrix(0.2 * p.length(), 0.8 * p.length(), m, p.length()).unwrap();
    let g = GalerkinModel::new(&e, m, c.clone()).unwrap();
    let l = LocalH1Model::with_pm(&e, m, c, Box::new(ZeroPm::new(m))).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let z = random_vec(&mut rng, m, 2.0);
        let q = random_vec(&mut rng, m, 2.0);
        let v = random_vec(&mut rng, m, 2.0);
        for (x, y) in g.field(&z, &v).iter().zip(l.field(&z, &v)) {
            assert!((x - y).abs() <= 1e-14 * (1.0 + x.abs()));
        }
        for (x, y) in g.field_adjoint(&z, &q).iter().zip(l.field_adjoint(&z, &q)) {
            assert!((x - y).abs() <= 1e-14 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn two_mode_galerkin_verbatim() {
    let p = sect5_params();
    let e = EigenData::new(&p, 2, 4).unwrap();
    let g = GalerkinModel::new(&e, 2, Matrix::identity(2)).unwrap();
    let (z, v) = ([0.8, -0.6], [0.1, 0.2]);
    let a = p.interaction();
    let want = [p.beta(1) * z[0] + a * z[0] * z[1] + v[0], p.beta(2) * z[1] - a * z[0] * z[0] + v[1]];
    let got = g.field(&z, &v);
    assert!((got[0] - want[0]).abs() < 1e-15 && (got[1] - want[1]).abs() < 1e-15);
}

#[test]
fn first_mode_only_four_modes() {
    // z = c·e₁: the low-low group feeds only mode 2, high modes only via h^{(n)}, n ≤ 8.
    let p = sect7_params();
    let e = EigenData::new(&p, 4, 8).unwrap();
    let model = LocalH1Model::new(&e, 4, Matrix::identity(4)).unwrap();
    let c = 0.7;
    let z = [c, 0.0, 0.0, 0.0];
    assert!(model.pm().eval(&z).iter().all(|h| *h == 0.0));
    let f = model.field(&z, &[0.0; 4]);
    assert!((f[0] - p.beta(1) * c).abs() < 1e-15);
    assert!((f[1] + p.interaction() * c * c).abs() < 1e-15);
    assert_eq!((f[2], f[3]), (0.0, 0.0));
}

#[test]
fn h2_with_only_cross_term_reduces_to_h1_minus_products() {
    let p = sect5_params();
    let e = EigenData::new(&p, 2, 4).unwrap();
    let h1 = H1TwoModeModel::new(&e, Matrix::identity(2)).unwrap();
    let c = h1.coeffs();
    let only_cross = H2TwoModeCoeffs { xy: c.cross, x3: 0.0, xy2: 0.0, x3y: 0.0, y2: 0.0, x2y: 0.0, x4: 0.0 };
    let h2 = H2TwoModeModel::with_pm(&e, Matrix::identity(2), H2TwoMode::from_coeffs(only_cross)).unwrap();
    let a = p.interaction();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..50 {
        let z = random_vec(&mut rng, 2, 2.0);
        let f1 = h1.field(&z, &[0.0, 0.0]);
        let f2 = h2.field(&z, &[0.0, 0.0]);
        let d1 = a * c.cross * c.square * z[0] * z[1].powi(3);
        let d2 = 2.0 * a * c.square * z[1].powi(3);
        assert!((f1[0] - d1 - f2[0]).abs() < 1e-12);
        assert!((f1[1] - d2 - f2[1]).abs() < 1e-12);
    }
}

#[test]
fn multi_mode_manifold_matches_symmetric_pair_sum() {
    // h^{(n)} = −(nα/2) Σ_{i=n−m}^{m} ξ_i ξ_{n−i}/(β_i + β_{n−i} − β_n)
    let p = sect7_params();
    for m in 2..=6 {
        let e = EigenData::new(&p, m, 2 * m).unwrap();
        let h = H1MultiMode::new(&e, m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
        let xi = random_vec(&mut rng, m, 2.0);
        let got = h.eval(&xi);
        for n in m + 1..=2 * m {
            let s: f64 = (n - m..=m)
                .map(|i| xi[i - 1] * xi[n - i - 1] / (p.beta(i) + p.beta(n - i) - p.beta(n)))
                .sum();
            let want = -(n as f64) * p.interaction() / 2.0 * s;
            assert!((got[n - m - 1] - want).abs() < 1e-13 * (1.0 + want.abs()));
        }
    }
}

proptest! {
    #[test]
    fn one_layer_is_quadratic(x in -2.0f64..2.0, y in -2.0f64..2.0, c in -3.0f64..3.0) {
        let p = sect5_params();
        let e = EigenData::new(&p, 2, 4).unwrap();
        let h = pmreduce::pm::H1TwoMode::new(&e).unwrap();
        let base = h.eval(&[x, y]);
        let scaled = h.eval(&[c * x, c * y]);
        for (s, b) in scaled.iter().zip(&base) {
            prop_assert!((s - c * c * b).abs() <= 1e-12 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn origin_equilibrium_for_any_coupling(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, d in 0.1f64..2.0) {
        let p = sect5_params();
        let mat = Matrix::from_rows(&[vec![d, a], vec![b, c]]).unwrap();
        for name in ["h1_2d", "h2_2d", "h1_local", "galerkin"] {
            let model = build_model(name, &p, 2, mat.clone()).unwrap();
            prop_assert_eq!(model.field(&[0.0, 0.0], &[0.0, 0.0]), vec![0.0, 0.0]);
        }
    }
}
