use std::collections::BTreeMap;
use std::sync::OnceLock;

use super::*;
use crate::bloch::adjoint_zero_mode;
use crate::kinetics::builtin;
use crate::normalform::{build_context_with, MollifierOptions};
use crate::pattern::{find_pattern, PatternOptions};

struct Fixture {
    pat: PatternSolution,
    ctx: NormalFormContext,
}

fn fx() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let p: BTreeMap<String, f64> = [("a".to_string(), 2.0), ("b".to_string(), 3.2)].into_iter().collect();
        let s = builtin("brusselator", &p, &[1.0, 8.0]).unwrap();
        let pat = find_pattern(&s, "b", [2.0, 4.0], 3.2, &PatternOptions::default()).unwrap().1;
        let u_ad = adjoint_zero_mode(&pat, 48).unwrap();
        let ctx = build_context_with(&pat, &u_ad, 64, MollifierOptions::default()).unwrap();
        Fixture { pat: ctx.pattern.clone(), ctx }
    })
}

fn opts(t_end: f64, dt: f64, linearized: bool) -> IntegrateOptions {
    IntegrateOptions { dt, t_end, stride: 1, snapshot_stride: 10, linearized, ..Default::default() }
}

fn bump(cells: usize, amp: f64) -> LineField {
    let params = PerturbationParams { amplitude: amp, ..Default::default() };
    make_perturbation(PerturbationKind::GaussianBump, &params, &fx().pat, cells, 64, 0).unwrap()
}

fn translation(cells: usize, theta: f64) -> LineField {
    let u = &fx().pat.profile;
    LineField::tiled(&fieldops::shift(u, theta).axpy(-1.0, u), cells)
}

#[test]
fn zero_input_stays_zero() {
    let v0 = LineField::zeros(64, 4, 2);
    for lin in [true, false] {
        let tr = integrate(&fx().pat, &v0, &opts(2.0, 0.05, lin)).unwrap();
        assert!(tr.snapshots.iter().all(|s| s.norm_inf() == 0.0));
    }
    let ls = lattice_track(&fx().ctx, &integrate(&fx().pat, &v0, &opts(1.0, 0.05, true)).unwrap(), TrackMode::Nonlinear).unwrap();
    // C(0) = ⟨u_⋆, u_ad⟩ vanishes only to rounding of O(10) Fourier products
    let worst = ls.states.iter().map(|s| s.norm_inf()).fold(0.0, f64::max);
    assert!(worst < 1e-12, "{worst:e}");
}

#[test]
fn translated_pattern_is_steady() {
    let v0 = translation(4, 0.05);
    let tr = integrate(&fx().pat, &v0, &opts(10.0, 0.01, false)).unwrap();
    let s0 = v0.norm_inf();
    let dev = tr.sup_norms.iter().map(|s| (s - s0).abs()).fold(0.0, f64::max);
    assert!(dev < 1e-8, "{dev:e}");
    let ls = lattice_track(&fx().ctx, &tr, TrackMode::Nonlinear).unwrap();
    assert!(ls.truncated.is_none());
    for s in &ls.states {
        assert!(s.theta.iter().all(|t| (t - 0.05).abs() < 1e-8));
        assert!(s.w.norm_inf() < 1e-8);
    }
}

#[test]
fn fourth_order_in_time() {
    let v0 = bump(4, 0.1);
    let run = |dt: f64| integrate(&fx().pat, &v0, &IntegrateOptions { snapshot_stride: 0, ..opts(1.0, dt, false) }).unwrap();
    let (a, b, c) = (run(0.1), run(0.05), run(0.025));
    let e1 = a.last().axpy(-1.0, b.last()).norm_inf();
    let e2 = b.last().axpy(-1.0, c.last()).norm_inf();
    let ratio = e1 / e2;
    assert!((4.0..=64.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn linearized_runs_are_linear() {
    let v0 = bump(4, 0.1);
    let o = IntegrateOptions { snapshot_stride: 0, ..opts(5.0, 0.01, true) };
    let a = integrate(&fx().pat, &v0, &o).unwrap();
    let b = integrate(&fx().pat, &v0.scaled(3.0), &o).unwrap();
    let err = b.last().axpy(-3.0, a.last()).norm_inf() / b.last().norm_inf();
    assert!(err < 1e-9, "{err:e}");
}

#[test]
fn blow_up_is_reported() {
    let v0 = bump(2, 0.1);
    let r = integrate(&fx().pat, &v0, &IntegrateOptions { blowup_factor: 1e-3, ..opts(1.0, 0.01, true) });
    assert!(matches!(r, Err(Error::BlowUp { .. })));
}

#[test]
fn gaussian_mass() {
    let params = PerturbationParams { amplitude: 0.3, width: 1.5, ..Default::default() };
    let v = make_perturbation(PerturbationKind::GaussianBump, &params, &fx().pat, 8, 128, 0).unwrap();
    let h = 2.0 * PI / 128.0;
    let l1 = h * v.values().iter().map(|x| x.abs()).sum::<f64>();
    let exact = 0.3 * 1.5 * (2.0 * PI).sqrt();
    assert!((l1 / exact - 1.0).abs() < 0.02);
    let zero = PerturbationParams { amplitude: 0.0, ..Default::default() };
    for k in [PerturbationKind::GaussianBump, PerturbationKind::PhaseBump, PerturbationKind::RandomLocalized] {
        assert_eq!(make_perturbation(k, &zero, &fx().pat, 4, 64, 1).unwrap().norm_inf(), 0.0);
    }
}

#[test]
fn constant_phase_bump_is_translation() {
    let params = PerturbationParams { amplitude: 0.07, width: 1e9, ..Default::default() };
    let v = make_perturbation(PerturbationKind::PhaseBump, &params, &fx().pat, 4, 64, 0).unwrap();
    assert!(v.axpy(-1.0, &translation(4, 0.07)).norm_inf() < 1e-10);
}

#[test]
fn periodic_evaluation_interpolates() {
    let u = &fx().pat.profile;
    let x = fieldops::grid(64);
    for m in [0, 7, 40] {
        assert!((evaluate_periodic(u, 1, x[m]) - u.at(1, m)).abs() < 1e-12);
    }
}

#[test]
fn random_perturbation_is_seeded() {
    let p = PerturbationParams::default();
    let a = make_perturbation(PerturbationKind::RandomLocalized, &p, &fx().pat, 4, 64, 7).unwrap();
    let b = make_perturbation(PerturbationKind::RandomLocalized, &p, &fx().pat, 4, 64, 7).unwrap();
    let c = make_perturbation(PerturbationKind::RandomLocalized, &p, &fx().pat, 4, 64, 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!((a.norm_inf() - p.amplitude).abs() < 1e-15);
}

#[test]
fn heat_kernel_decay_exponent() {
    let times: Vec<f64> = (0..=800).map(|k| k as f64).collect();
    let series = lattice_heat_series(4096, 0.3, &times);
    let sup: Vec<f64> = series.iter().map(|th| th.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
    let r = measure_decay(&times, &sup, DecayNorm::ThetaInf, [50.0, 800.0]).unwrap();
    assert!((r.exponent - 0.5).abs() <= 0.02, "{r:?}");
    assert!(r.passed);
    let mass: f64 = series[400].iter().sum();
    assert!((mass - 1.0).abs() < 1e-12);
}

#[test]
fn constant_series_has_zero_exponent() {
    let t: Vec<f64> = (0..100).map(|k| k as f64 * 10.0).collect();
    let r = measure_decay(&t, &vec![2.5; 100], DecayNorm::VInf, [10.0, 900.0]).unwrap();
    assert!(r.exponent.abs() < 1e-12 && !r.passed);
    assert!(matches!(measure_decay(&t, &vec![1.0; 100], DecayNorm::VInf, [5.0, 900.0]), Err(Error::WindowError(_))));
    assert!(matches!(measure_decay(&t, &vec![1.0; 100], DecayNorm::VInf, [10.0, 2000.0]), Err(Error::WindowError(_))));
}

#[test]
fn discrete_diffusion_recovered() {
    let times: Vec<f64> = (0..=400).map(|k| 10.0 + k as f64 * 0.25).collect();
    let series = lattice_heat_series(128, 0.3, &times);
    let f = compare_discrete_diffusion(&times, &series, [10.0, 110.0]).unwrap();
    let d = f.d_lat.unwrap();
    assert!((d - 0.3).abs() < 1e-3, "{d}");
    assert!(f.residual_fraction < 1e-2);
    let flat = vec![vec![1.0; 16]; times.len()];
    let g = compare_discrete_diffusion(&times, &flat, [10.0, 110.0]).unwrap();
    assert!(g.indeterminate() && g.residual_fraction == 0.0);
    assert!(matches!(compare_discrete_diffusion(&times[..20], &series[..20], [0.0, 1e3]), Err(Error::WindowError(_))));
}

#[test]
fn wrap_monitor() {
    let v = bump(16, 1.0);
    let c = perturbation_center(16, &PerturbationParams::default());
    assert!(wrap_fraction(&v, c) < 1e-12);
    let flat = LineField::from_fn(64, 16, 1, |_, _| 1.0);
    assert!((wrap_fraction(&flat, c) - 0.5).abs() < 0.01);
}

#[test]
fn short_phase_run_conserves_theta_sum() {
    let params = PerturbationParams { amplitude: 0.02, width: 6.0, ..Default::default() };
    let v0 = make_perturbation(PerturbationKind::PhaseBump, &params, &fx().pat, 16, 64, 0).unwrap();
    let tr = integrate(&fx().pat, &v0, &IntegrateOptions { snapshot_stride: 100, ..opts(60.0, 0.01, true) }).unwrap();
    let ls = lattice_track(&fx().ctx, &tr, TrackMode::Linear).unwrap();
    let drift = theta_sum_drift(&ls.times, &ls.theta_sum(), [10.0, 60.0]).unwrap();
    assert!(drift < 0.02, "{drift}");
}

#[test]
fn exponents_stable_under_grid_refinement() {
    let params = PerturbationParams { amplitude: 1e-2, ..Default::default() };
    let ex = |n: usize| {
        let v0 = make_perturbation(PerturbationKind::GaussianBump, &params, &fx().pat, 8, n, 0).unwrap();
        let tr = integrate(&fx().pat, &v0, &IntegrateOptions { stride: 10, snapshot_stride: 0, ..opts(100.0, 0.01, true) }).unwrap();
        fit::decay_exponent(&tr.norm_times, &tr.sup_norms, 10.0, 100.0).unwrap().slope
    };
    let (a, b) = (ex(64), ex(128));
    assert!((a - b).abs() <= 0.02, "{a} vs {b}");
}
