use std::collections::BTreeMap;
use std::sync::OnceLock;

use proptest::prelude::*;

use super::*;
use crate::bloch::adjoint_zero_mode;
use crate::kinetics::builtin;
use crate::pattern::{find_pattern, PatternOptions};

fn fb() -> &'static FourierBloch {
    static F: OnceLock<FourierBloch> = OnceLock::new();
    F.get_or_init(|| {
        let p: BTreeMap<String, f64> = [("a".to_string(), 2.0), ("b".to_string(), 3.2)].into_iter().collect();
        let s = builtin("brusselator", &p, &[1.0, 8.0]).unwrap();
        let pat = find_pattern(&s, "b", [2.0, 4.0], 3.2, &PatternOptions::default()).unwrap().1;
        let u_ad = adjoint_zero_mode(&pat, 48).unwrap();
        FourierBloch::new(&pat, &u_ad, 48).unwrap()
    })
}

#[test]
fn f_hat_normalization_is_intrinsic() {
    for s in [0.0, 0.1, 0.3, 0.5] {
        let op = fb().assemble(s).unwrap();
        eprintln!("σ={s} F̂Ê raw = {}", op.f_e_raw);
        assert!((op.f_e_raw - ONE).norm() < 1e-8, "σ={s}: {}", op.f_e_raw);
    }
}

#[test]
fn r_vanishes_at_zero_and_annihilates_e_hat() {
    let op = fb().assemble(0.0).unwrap();
    assert!(op.r_row.iter().all(|z| z.norm() == 0.0));
    for s in [0.1, 0.25, 0.4] {
        let op = fb().assemble(s).unwrap();
        eprintln!("σ={s} |RÊ| = {:.3e}", op.r_e());
        assert!(op.r_e() < 1e-10);
    }
}

#[test]
fn block_form_conjugates_to_bloch_matrix() {
    for s in [0.0, 0.05, 0.3] {
        let op = fb().assemble(s).unwrap();
        let c = op.conjugacy_residual();
        let th = op.theta_row_defect();
        let sp = op.spectrum_mismatch().unwrap();
        eprintln!("σ={s} conj={c:.3e} θrow={th:.3e} spec={sp:.3e}");
        assert!(c < 1e-12);
        assert!(sp < 1e-8);
        // integration-by-parts identity; its truncation error grows like ℓ²D at ℓ = M
        assert!(th < 1e-8);
    }
}

#[test]
fn diagonalizer_near_zero() {
    for s in [0.0, 0.05, -0.1] {
        let t = fb().diagonalizer(s).unwrap();
        eprintln!("σ={s} λ={} μ={} res={:.3e} inv={:.3e}", t.lambda, t.mu, t.residual, t.inverse_residual);
        assert!(t.residual <= 1e-8);
        assert!(t.inverse_residual <= 1e-10);
    }
    let t0 = fb().diagonalizer(0.0).unwrap();
    assert!((t0.mu - ONE).norm() < 1e-8);
}

#[test]
fn propagator_identity_and_semigroup() {
    let op = fb().assemble(0.2).unwrap();
    let p = Propagator::new(&op).unwrap();
    let s = p.sample(0.0).unwrap();
    eprintln!("{s:?}");
    assert!((s.l2[0] - 1.0).abs() < 1e-10 && s.l2[1] < 1e-10 && s.l2[2] < 1e-10 && (s.l2[3] - 1.0).abs() < 1e-10);
    let a = p.matrix(1.5).unwrap();
    let b = p.matrix(2.5).unwrap();
    let c = p.matrix(4.0).unwrap();
    let r = (&a * &b - &c).norm_l2() / c.norm_l2();
    eprintln!("semigroup {r:.3e}");
    assert!(r < 1e-10);
}

#[test]
fn away_from_zero_decays() {
    let op = fb().assemble(0.4).unwrap();
    let p = Propagator::new(&op).unwrap();
    let n: Vec<f64> = [10.0, 50.0, 100.0].iter().map(|&t| p.sample(t).unwrap().l2.iter().cloned().fold(0.0, f64::max)).collect();
    eprintln!("{n:?}");
    assert!(n[2] < n[1] && n[1] < n[0]);
}

#[test]
fn envelopes() {
    let grid = EnvelopeGrid::default();
    let samples = fb().propagator_grid(&grid.times, &grid.sigmas).unwrap();
    let rep = envelope_fit(&samples, 0.25, 0.25, [10.0, 1000.0]).unwrap();
    eprintln!("{rep:?}");
    assert!(rep.passed());
}

#[test]
fn sigma_derivative_at_zero_time() {
    let d = sigma_derivative(fb(), 0.0, 0.1, 1e-4).unwrap();
    // M(0, σ) = diag(1, Π(σ)); only the projector moves with σ
    assert!(d.l2[..3].iter().all(|v| *v < 1e-6), "{d:?}");
    let d = sigma_derivative(fb(), 100.0, 0.05, 1e-4).unwrap();
    assert!(d.l2.iter().all(|v| v.is_finite() && *v > 0.0));
}

#[test]
fn envelope_fit_needs_samples() {
    let s = PropagatorSample { t: 1.0, sigma: 0.0, l2: [1.0; 4], l1: [1.0; 4], linf: [1.0; 4] };
    assert!(matches!(envelope_fit(&[s], 0.25, 0.25, [10.0, 1000.0]), Err(Error::GridError(_))));
}

#[test]
fn grid_layout() {
    let g = EnvelopeGrid::default();
    assert_eq!((g.times.len(), g.sigmas.len()), (40, 33));
    assert_eq!(g.sigmas[16], 0.0);
    assert!((g.sigmas[32] - 0.5).abs() < 1e-15 && (g.sigmas[17] - 0.01).abs() < 1e-15);
    assert!((g.times[39] - 1000.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn structural_identities_hold_for_any_sigma(s in -0.5f64..0.5) {
        let op = fb().assemble(s).unwrap();
        prop_assert!(op.r_e() < 1e-10);
        prop_assert!((op.f_e_raw - ONE).norm() < 1e-10);
        prop_assert!(op.conjugacy_residual() < 1e-12);
        // conjugate symmetry of the raw transform
        let e1 = fb().e_hat(s);
        let e2 = fb().e_hat(-s);
        let n = fb().n_species();
        let m = fb().m();
        for l in 0..=2 * m {
            for c in 0..n {
                prop_assert!((e1[l * n + c] - e2[(2 * m - l) * n + c].conj()).norm() < 1e-12);
            }
        }
    }
}
