use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use super::*;
use crate::bloch::adjoint_zero_mode;
use crate::kinetics::builtin;
use crate::pattern::{find_pattern, PatternOptions};

fn ctx() -> &'static NormalFormContext {
    static C: OnceLock<NormalFormContext> = OnceLock::new();
    C.get_or_init(|| {
        let p: BTreeMap<String, f64> = [("a".to_string(), 2.0), ("b".to_string(), 3.2)].into_iter().collect();
        let s = builtin("brusselator", &p, &[1.0, 8.0]).unwrap();
        let pat = find_pattern(&s, "b", [2.0, 4.0], 3.2, &PatternOptions::default()).unwrap().1;
        let u_ad = adjoint_zero_mode(&pat, 48).unwrap();
        build_context_with(&pat, &u_ad, 64, MollifierOptions::default()).unwrap()
    })
}

fn translated(ctx: &NormalFormContext, cells: usize, shift: f64) -> LineField {
    let u = &ctx.pattern.profile;
    let d = fieldops::shift(u, shift).axpy(-1.0, u);
    LineField::tiled(&d, cells)
}

fn max_diff(a: &LineField, b: &LineField) -> f64 {
    a.axpy(-1.0, b).norm_inf()
}

#[test]
fn cutoff_values() {
    let c = ctx();
    let x = fieldops::grid(c.n_points());
    let phi = c.phi.component(0);
    for (m, &xm) in x.iter().enumerate() {
        assert!((phi[m] + phi[(c.n_points() - m) % c.n_points()]).abs() < 1e-15 || m == 0);
        if xm.abs() >= 0.5 * PI {
            assert_eq!(phi[m].abs(), 0.5);
        }
        if m > 0 && m < c.n_points() - 1 {
            assert!(phi[m + 1] >= phi[m] - 1e-14, "φ increasing");
        }
    }
    assert_eq!(phi[c.n_points() / 2], 0.0);
    // φ(±0.9π) sits in the flat region
    let i = c.n_points() - 2;
    assert!(x[i] > 0.9 * PI && phi[i] == 0.5);
}

#[test]
fn stencil_sums_to_minus_derivative() {
    let c = ctx();
    let [em, e0, ep] = &c.stencil;
    let sum = em.axpy(1.0, e0).axpy(1.0, ep);
    assert!(sum.axpy(1.0, &c.pattern.profile_dx).values().iter().all(|v| v.abs() < 1e-13));
    assert!((fieldops::inner_product(e0, &c.u_ad).unwrap() + 1.0).abs() < 1e-12);
    assert!(fieldops::inner_product(em, &c.u_ad).unwrap().abs() < 1e-12);
    assert!(fieldops::inner_product(ep, &c.u_ad).unwrap().abs() < 1e-12);
}

#[test]
fn corrector_normalized() {
    let c = ctx();
    assert!((fieldops::inner_product(&c.psi, &c.u_ad).unwrap() - 1.0).abs() < 1e-13);
    let n = c.n_points();
    assert!(c.psi.at(0, 0) == 0.0 && c.psi.at(1, n / 20) == 0.0);
}

#[test]
fn phi_integral_matches_fine_quadrature() {
    let c = ctx();
    let h: Vec<f64> = fieldops::grid(c.n_points()).iter().map(|x| (x).sin() + 0.3 * (2.0 * x).cos()).collect();
    // ∫ φ sin x dx over (-π, π), reference by fine midpoint quadrature of the same φ
    let got = c.phi_integral(&h);
    let fine = 200_000;
    let (mut acc, opts) = (0.0, c.mollifier);
    let w = opts.width * PI;
    let dx = 2.0 * PI / fine as f64;
    // φ(x) = ∫_{-π}^{x} η - ½ with η the normalized bump
    let eta = |y: f64| super::bump(y / w, opts.sharpness);
    let mass: f64 = (0..fine).map(|i| eta(-PI + (i as f64 + 0.5) * dx)).sum::<f64>() * dx;
    let mut cum = 0.0;
    for i in 0..fine {
        let y = -PI + (i as f64 + 0.5) * dx;
        let e = eta(y) / mass;
        let phi = cum + 0.5 * e * dx - 0.5;
        cum += e * dx;
        acc += phi * (y.sin() + 0.3 * (2.0 * y).cos()) * dx;
    }
    assert!((got - acc).abs() < 1e-8, "{got} vs {acc}");
}

#[test]
fn linear_round_trip() {
    let c = ctx();
    let mut rng = StdRng::seed_from_u64(7);
    let v = random_smooth_field(c.n_points(), 6, 2, 1.0, &mut rng);
    let s = linear_decompose(c, &v).unwrap();
    assert!(max_diff(&linear_reconstruct(c, &s).unwrap(), &v) < 1e-12);
    let s2 = linear_decompose(c, &linear_reconstruct(c, &s).unwrap()).unwrap();
    assert!(s2.axpy(-1.0, &s).norm_inf() < 1e-10);
    // E∗θ is globally smooth
    let e = unchop(&stencil_apply(c, &s.theta));
    assert!(e.spectral_tail(0.9) < 1e-8);
    let mut jump = chop(&v);
    jump.cell_mut(2).values_mut()[0] += 1e-3;
    assert!(unchop(&jump).spectral_tail(0.9) > 1e-6);
}

#[test]
fn global_translation_is_pure_phase() {
    let c = ctx();
    let v = translated(c, 5, 0.1);
    let s = decompose(c, &v).unwrap();
    assert!(s.theta.iter().all(|t| (t - 0.1).abs() < 1e-10), "{:?}", s.theta);
    assert!(s.w.norm_inf() < 1e-9, "{}", s.w.norm_inf());
    let n = nonlinear_residual(c, &s).unwrap();
    assert!(n.norm_inf() < 1e-9, "{}", n.norm_inf());
}

#[test]
fn nonlinear_round_trip() {
    let c = ctx();
    let mut rng = StdRng::seed_from_u64(11);
    let s = random_state(c, 6, 0.05, &mut rng);
    let v = reconstruct(c, &s).unwrap();
    assert!(v.spectral_tail(0.9) < 1e-8, "reconstruction is smooth across cells");
    let back = decompose(c, &v).unwrap();
    assert!(back.axpy(-1.0, &s).norm_inf() < 1e-9, "{}", back.axpy(-1.0, &s).norm_inf());
    let v2 = reconstruct(c, &back).unwrap();
    assert!(max_diff(&v, &v2) < 1e-10);
}

#[test]
fn reconstruction_identity() {
    // ⟨W_j + H_j, u_ad(· - θ_j)⟩ = ⟨W_j, u_ad⟩ with H_j = v_j - W_j - (u_θ - u)
    let c = ctx();
    let mut rng = StdRng::seed_from_u64(3);
    let s = random_state(c, 4, 0.1, &mut rng);
    let v = reconstruct(c, &s).unwrap();
    let vm = CellMoments::new(&v, c.pairing_modes());
    for j in 0..4 {
        let t = s.theta[j];
        let lhs = vm.pair(j, c.u_ad_hat(), t) + c.overlap(-t).0;
        assert!(lhs.abs() < 1e-11, "{lhs}");
    }
}

#[test]
fn phase_step_is_local() {
    let c = ctx();
    let mut rng = StdRng::seed_from_u64(5);
    let s = random_state(c, 8, 0.05, &mut rng);
    let mut s2 = s.clone();
    s2.theta[3] += 0.02;
    let d = chop(&reconstruct(c, &s2).unwrap().axpy(-1.0, &reconstruct(c, &s).unwrap()));
    for j in 0..8 {
        let m = fieldops::lp_norm(d.cell(j), fieldops::Norm::Inf);
        if (2..=4).contains(&j) {
            assert!(m > 1e-4);
        } else {
            assert!(m < 1e-13, "cell {j}: {m}");
        }
    }
}

#[test]
fn a_nf_conjugates_and_phase_row_identity() {
    let c = ctx();
    let mut rng = StdRng::seed_from_u64(9);
    let s = random_state(c, 5, 1.0, &mut rng);
    let lhs = linear_reconstruct(c, &apply_a_nf(c, &s).unwrap()).unwrap();
    let rhs = apply_a_ch(c, &linear_reconstruct(c, &s).unwrap()).unwrap();
    assert!(max_diff(&lhs, &rhs) < 1e-9 * rhs.norm_inf().max(1.0));
    let f = phase_functional(c, &rhs).unwrap();
    let a = apply_a_nf(c, &s).unwrap();
    let scale = a.theta_norm_inf().max(1.0);
    for (x, y) in f.iter().zip(&a.theta) {
        assert!((x - y).abs() < 1e-9 * scale, "{x} vs {y}");
    }
}

#[test]
fn residual_is_quadratic() {
    let c = ctx();
    let mut rng = StdRng::seed_from_u64(21);
    let s = random_state(c, 4, 1.0, &mut rng);
    let eps = [1e-2, 1e-3, 1e-4];
    let r: Vec<f64> = eps.iter().map(|&e| nonlinear_residual(c, &s.scaled(e)).unwrap().norm_inf()).collect();
    let slope = (r[0] / r[2]).ln() / (eps[0] / eps[2]).ln();
    assert!((slope - 2.0).abs() < 0.1, "slope {slope}, {r:?}");
}

#[test]
fn out_of_regime_is_reported() {
    let c = ctx();
    let v = translated(c, 3, 1.2);
    assert!(matches!(decompose(c, &v), Err(Error::OutOfRegime(_))));
    let bad = LineField::zeros(32, 2, 2);
    assert!(matches!(decompose(c, &bad), Err(Error::AlignmentError(_))));
}

#[test]
fn precondition_on_normalization() {
    let c = ctx();
    let r = build_context_with(&c.pattern, &c.u_ad.scaled(2.0), 64, MollifierOptions::default());
    assert!(matches!(r, Err(Error::Precondition(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn linear_round_trip_random(seed in any::<u64>(), cells in 1usize..6) {
        let c = ctx();
        let mut rng = StdRng::seed_from_u64(seed);
        let v = random_smooth_field(c.n_points(), cells, 2, 1.0, &mut rng);
        let s = linear_decompose(c, &v).unwrap();
        prop_assert!(max_diff(&linear_reconstruct(c, &s).unwrap(), &v) < 1e-10);
    }

    #[test]
    fn nonlinear_round_trip_random(seed in any::<u64>(), amp in 0.001f64..0.08) {
        let c = ctx();
        let mut rng = StdRng::seed_from_u64(seed);
        let s = random_state(c, 3, amp, &mut rng);
        let back = decompose(c, &reconstruct(c, &s).unwrap()).unwrap();
        prop_assert!(back.axpy(-1.0, &s).norm_inf() < 1e-9);
    }
}

