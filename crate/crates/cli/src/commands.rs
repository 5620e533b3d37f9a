use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use phaselat_core::bloch::{
    critical_branch_auto, diffusion_coefficient_fit, sigma_grid, spectrum_of, verify_spectral_stability, BlochBranch, BlochOperator,
};
use phaselat_core::evolve::{
    compare_discrete_diffusion, integrate, lattice_track, make_perturbation, measure_decay, perturbation_center, theta_sum_drift,
    wrap_fraction, DecayNorm, IntegrateOptions, LatticeSeries, PerturbationKind, PerturbationParams, TrackMode, Trajectory,
};
use phaselat_core::fieldops::{self, Norm};
use phaselat_core::fit::line_fit;
use phaselat_core::fourierbloch::{build_t_dg, envelope_fit, EnvelopeGrid, FourierBloch, Propagator};
use phaselat_core::linalg;
use phaselat_core::normalform::{
    build_context_with, decompose, linear_decompose, linear_reconstruct, nonlinear_residual, random_smooth_field, random_state,
    reconstruct, LatticeState, LineField, MollifierOptions, NormalFormContext,
};
use phaselat_core::pattern::{find_pattern, Onset, PatternOptions, PatternSolution};
use phaselat_core::{builtin, parallel};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::output::{Cell, TaskDir};

/// One pass/fail assertion of a task.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64) -> Check {
        Check { name: name.into(), value, limit, passed: value <= limit }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Check {
        Check { name: name.into(), value, limit, passed: value >= limit }
    }

    fn flag(name: &str, ok: bool) -> Check {
        Check { name: name.into(), value: if ok { 1.0 } else { 0.0 }, limit: 1.0, passed: ok }
    }
}

#[derive(Serialize, Deserialize)]
struct CachedPattern {
    onset: Onset,
    pattern: PatternSolution,
}

/// State shared between tasks of one invocation.
pub struct Session {
    pub cfg: ExperimentConfig,
    cache_dir: Option<PathBuf>,
    pattern: Option<(Onset, PatternSolution)>,
    branch: Option<BlochBranch>,
    ctx: Option<NormalFormContext>,
    run: Option<(Trajectory, LatticeSeries)>,
}

fn read_cache<T: for<'de> Deserialize<'de>>(path: &Path) -> Option<T> {
    let bytes = fs::read(path).ok()?;
    serde_json::from_slice(&bytes).ok()
}

fn write_cache<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_vec(value)?).with_context(|| format!("writing {}", path.display()))
}

impl Session {
    pub fn new(cfg: ExperimentConfig, cache: bool) -> Session {
        let cache_dir = cache.then(|| cfg.output_dir.join("cache").join(cfg.cache_key()));
        Session { cfg, cache_dir, pattern: None, branch: None, ctx: None, run: None }
    }

    fn pattern(&mut self) -> Result<&(Onset, PatternSolution)> {
        if self.pattern.is_none() {
            let path = self.cache_dir.as_ref().map(|d| d.join("pattern.json"));
            let cached: Option<CachedPattern> = path.as_deref().and_then(read_cache);
            let entry = match cached {
                Some(c) => (c.onset, c.pattern),
                None => {
                    let m = &self.cfg.model;
                    let sys = builtin(&m.name, &m.params, &m.diffusion)?;
                    let c = &self.cfg.continuation;
                    let opts = PatternOptions { n_points: self.cfg.numerics.n_points, ..PatternOptions::default() };
                    let (onset, pattern) = find_pattern(&sys, &c.param, c.bracket, c.target, &opts)?;
                    if let Some(p) = &path {
                        write_cache(p, &CachedPattern { onset, pattern: pattern.clone() })?;
                    }
                    (onset, pattern)
                }
            };
            self.pattern = Some(entry);
        }
        Ok(self.pattern.as_ref().expect("set above"))
    }

    fn branch(&mut self) -> Result<&BlochBranch> {
        if self.branch.is_none() {
            let path = self.cache_dir.as_ref().map(|d| d.join("branch.json"));
            let b = match path.as_deref().and_then(read_cache::<BlochBranch>) {
                Some(b) => b,
                None => {
                    let n = &self.cfg.numerics;
                    let (samples, m) = (n.branch_samples, n.m);
                    let b = critical_branch_auto(&self.pattern()?.1, samples, m)?;
                    if let Some(p) = &path {
                        write_cache(p, &b)?;
                    }
                    b
                }
            };
            self.branch = Some(b);
        }
        Ok(self.branch.as_ref().expect("set above"))
    }

    fn context(&mut self) -> Result<&NormalFormContext> {
        if self.ctx.is_none() {
            let u_ad = self.branch()?.u_ad.clone();
            let p = self.pattern()?.1.clone();
            self.ctx = Some(build_context_with(&p, &u_ad, self.cfg.numerics.cell_points, MollifierOptions::default())?);
        }
        Ok(self.ctx.as_ref().expect("set above"))
    }

    fn simulation(&mut self) -> Result<&(Trajectory, LatticeSeries)> {
        if self.run.is_none() {
            let n = self.cfg.numerics.clone();
            let s = self.cfg.simulation.clone();
            let params = perturbation_params(&self.cfg);
            let ctx = self.context()?;
            let v0 = make_perturbation(perturbation_kind(&s.kind)?, &params, &ctx.pattern, n.j, n.cell_points, n.seed)?;
            let opts = IntegrateOptions {
                dt: n.dt,
                t_end: n.t_end,
                stride: n.stride,
                snapshot_stride: n.snapshot_stride,
                linearized: s.linearized,
                ..IntegrateOptions::default()
            };
            let traj = integrate(&ctx.pattern, &v0, &opts)?;
            let mode = if s.linearized { TrackMode::Linear } else { TrackMode::Nonlinear };
            let series = lattice_track(ctx, &traj, mode)?;
            self.run = Some((traj, series));
        }
        Ok(self.run.as_ref().expect("set above"))
    }
}

fn perturbation_kind(name: &str) -> Result<PerturbationKind> {
    Ok(match name {
        "gaussian_bump" => PerturbationKind::GaussianBump,
        "phase_bump" => PerturbationKind::PhaseBump,
        "random_localized" => PerturbationKind::RandomLocalized,
        other => return Err(anyhow!("unknown perturbation `{other}`")),
    })
}

fn perturbation_params(cfg: &ExperimentConfig) -> PerturbationParams {
    let s = &cfg.simulation;
    PerturbationParams { amplitude: s.amplitude, width: s.width, offset: s.offset, direction: s.direction.clone() }
}

fn write_lattice_state(out: &mut TaskDir, s: &LatticeState) -> Result<()> {
    let rows = (0..s.j()).map(|j| {
        let c = s.w.cell(j);
        vec![Cell::I(j as i64), Cell::F(s.theta[j]), Cell::F(fieldops::lp_norm(c, Norm::L2)), Cell::F(fieldops::lp_norm(c, Norm::Inf))]
    });
    out.csv("lattice_state.csv", &["j", "theta_j", "W_L2", "W_Linf"], rows)
}

pub fn run_task(sess: &mut Session, task: &str, out: &mut TaskDir) -> Result<Vec<Check>> {
    match task {
        "find-pattern" => find_pattern_task(sess, out),
        "bloch-spectrum" => bloch_spectrum_task(sess, out),
        "check-stability" => check_stability_task(sess, out),
        "fit-d" => fit_d_task(sess, out),
        "nf-roundtrip" => nf_roundtrip_task(sess, out),
        "semigroup-envelopes" => envelopes_task(sess, out),
        "simulate" => simulate_task(sess, out),
        "decay-report" => decay_report_task(sess, out),
        other => Err(anyhow!("unknown task `{other}`")),
    }
}

fn find_pattern_task(sess: &mut Session, out: &mut TaskDir) -> Result<Vec<Check>> {
    let tol = sess.cfg.tolerances.clone();
    let (onset, p) = sess.pattern()?;
    let x = fieldops::grid(p.n_points());
    let rows = (0..p.n_points()).map(|i| {
        let mut r = vec![Cell::F(x[i])];
        for c in 0..p.n_species() {
            r.push(Cell::F(p.profile.at(c, i)));
        }
        for c in 0..p.n_species() {
            r.push(Cell::F(p.profile_dx.at(c, i)));
        }
        r
    });
    let header: Vec<String> = std::iter::once("x".to_string())
        .chain((0..p.n_species()).map(|c| format!("u{c}")))
        .chain((0..p.n_species()).map(|c| format!("du{c}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let evenness = p.evenness_residual();
    let summary = json!({
        "param_c": onset.param_c,
        "k_c": onset.k_c,
        "wavenumber": p.wavenumber,
        "amplitude": p.amplitude,
        "homogeneous": p.homogeneous,
        "residual_norm": p.residual_norm,
        "evenness_residual": evenness,
        "newton_steps": p.newton_steps,
    });
    let checks = vec![
        Check::at_most("steady residual", p.residual_norm, tol.pattern_residual),
        Check::at_most("evenness residual", evenness, tol.evenness),
    ];
    out.csv("pattern.csv", &header, rows)?;
    out.json("pattern.json", &summary)?;
    Ok(checks)
}

fn bloch_spectrum_task(sess: &mut Session, out: &mut TaskDir) -> Result<Vec<Check>> {
    let n = sess.cfg.numerics.clone();
    let op = BlochOperator::new(&sess.pattern()?.1, n.m)?;
    let grid = sigma_grid(n.sigma_grid);
    let spectra = parallel::map(&grid, |&s| spectrum_of(&op, s));
    let spectra = spectra.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    // the spectrum at -σ is the conjugate of the one at σ
    let last = grid.len() - 1;
    let mut sym: f64 = 0.0;
    for (i, (s, sp)) in grid.iter().zip(&spectra).enumerate() {
        let mirror = &spectra[last - i].values;
        for l in sp.values.iter().take(n.eigenvalues_per_sigma) {
            sym = sym.max(mirror.iter().map(|m| (m.conj() - l).norm()).fold(f64::INFINITY, f64::min));
        }
        for (k, l) in sp.values.iter().take(n.eigenvalues_per_sigma).enumerate() {
            rows.push(vec![Cell::F(*s), Cell::I(k as i64), Cell::F(l.re), Cell::F(l.im), Cell::I(sp.converged[k] as i64)]);
        }
    }
    out.csv("spectrum.csv", &["sigma", "rank", "re", "im", "converged"], rows)?;
    Ok(vec![Check::at_most("conjugate symmetry of the spectrum", sym, 1e-8)])
}

fn check_stability_task(sess: &mut Session, out: &mut TaskDir) -> Result<Vec<Check>> {
    let n = sess.cfg.numerics.clone();
    let r = verify_spectral_stability(&sess.pattern()?.1, n.sigma_grid, n.m)?;
    let rows = r.sigma_grid.iter().zip(&r.top_real_parts).map(|(s, l)| vec![Cell::F(*s), Cell::F(*l)]);
    out.csv("top_real_parts.csv", &["sigma", "re_lambda_top"], rows)?;
    out.json("stability.json", &r)?;
    Ok(vec![
        Check::flag("hypothesis i: Re λ < 0 for σ ≠ 0", r.hypothesis_i_ok),
        Check::flag("hypothesis ii: simple zero eigenvalue along u′", r.hypothesis_ii_ok),
        Check::flag("hypothesis iii: d > 0", r.hypothesis_iii_ok),
        Check::flag("report consistent", r.is_consistent()),
    ])
}

fn fit_d_task(sess: &mut Session, out: &mut TaskDir) -> Result<Vec<Check>> {
    let tol = sess.cfg.tolerances.d_relative;
    let b = sess.branch()?;
    let fit = diffusion_coefficient_fit(b)?;
    let rel = (b.d_fit - b.d_formula).abs() / b.d_formula.abs();
    let rows = (0..b.sigmas.len()).map(|i| {
        let l = b.lambda_at(i);
        vec![Cell::F(b.sigmas[i]), Cell::F(l.re), Cell::F(l.im), Cell::F(b.gaps[i])]
    });
    out.csv("branch.csv", &["sigma", "re_lambda", "im_lambda", "gap"], rows)?;
    out.json(
        "diffusion.json",
        &json!({
            "d_fit": b.d_fit,
            "d_formula": b.d_formula,
            "relative_discrepancy": rel,
            "fit": fit,
            "gamma0": b.gamma0,
            "gamma1": b.gamma1,
            "evenness_residual": b.evenness_residual(),
            "imaginary_residual": b.imaginary_residual(),
            "two_sided_bound": b.two_sided_bound_holds(b.d_fit),
        }),
    )?;
    Ok(vec![
        Check::at_most("relative discrepancy of d", rel, tol),
        Check::flag("d_fit > 0 and d_formula > 0", b.d_fit > 0.0 && b.d_formula > 0.0),
        Check::at_most("branch evenness", b.evenness_residual(), 1e-8),
        Check::at_most("branch imaginary part", b.imaginary_residual(), 1e-8),
        Check::flag("two-sided bound", b.two_sided_bound_holds(b.d_fit)),
    ])
}

fn max_diff(a: &LineField, b: &LineField) -> f64 {
    a.axpy(-1.0, b).norm_inf()
}

fn nf_roundtrip_task(sess: &mut Session, out: &mut TaskDir) -> Result<Vec<Check>> {
    let tol = sess.cfg.tolerances.clone();
    let seed = sess.cfg.numerics.seed;
    let ctx = sess.context()?;
    let np = ctx.n_points();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let (mut lin, mut nl): (f64, f64) = (0.0, 0.0);
    let mut sample_state = None;
    for k in 0..10 {
        let cells = 4 + k % 3;
        let v = random_smooth_field(np, cells, ctx.n_species(), 1.0, &mut rng);
        let s = linear_decompose(ctx, &v)?;
        let el = max_diff(&linear_reconstruct(ctx, &s)?, &v);
        let s = random_state(ctx, cells, 0.05, &mut rng);
        let back = decompose(ctx, &reconstruct(ctx, &s)?)?;
        let en = back.axpy(-1.0, &s).norm_inf();
        rows.push(vec![Cell::I(k as i64), Cell::I(cells as i64), Cell::F(el), Cell::F(en)]);
        lin = lin.max(el);
        nl = nl.max(en);
        sample_state.get_or_insert(back);
    }

    let theta_bar = 0.1;
    let u = &ctx.pattern.profile;
    let tr = LineField::tiled(&fieldops::shift(u, theta_bar).axpy(-1.0, u), 6);
    let s = decompose(ctx, &tr)?;
    let th_err = s.theta.iter().map(|t| (t - theta_bar).abs()).fold(0.0, f64::max);
    let w = s.w.norm_inf();
    let n_tr = nonlinear_residual(ctx, &s)?.norm_inf();

    let base = random_state(ctx, 4, 1.0, &mut rng);
    let eps = [1e-2, 1e-3, 1e-4];
    let mut res = Vec::new();
    for e in eps {
        res.push(nonlinear_residual(ctx, &base.scaled(e))?.norm_inf());
    }
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = res.iter().map(|v| v.ln()).collect();
    let slope = line_fit(&xs, &ys)?.slope;

    out.csv("roundtrip.csv", &["trial", "cells", "linear_error", "nonlinear_error"], rows)?;
    out.csv("residual_scaling.csv", &["epsilon", "residual_inf"], eps.iter().zip(&res).map(|(e, r)| vec![Cell::F(*e), Cell::F(*r)]))?;
    write_lattice_state(out, sample_state.as_ref().expect("ten trials"))?;
    out.json(
        "roundtrip.json",
        &json!({
            "linear_round_trip": lin,
            "nonlinear_round_trip": nl,
            "translation_theta_error": th_err,
            "translation_w_inf": w,
            "translation_residual": n_tr,
            "residual_slope": slope,
        }),
    )?;
    Ok(vec![
        Check::at_most("linear round trip", lin, tol.round_trip_linear),
        Check::at_most("nonlinear round trip", nl, tol.round_trip_nonlinear),
        Check::at_most("translation phase error", th_err, tol.round_trip_linear),
        Check::at_most("translation remainder", w, tol.translation_remainder),
        Check::at_most("translation residual", n_tr, tol.round_trip_nonlinear),
        Check::at_most("|residual slope - 2|", (slope - 2.0).abs(), tol.residual_slope),
    ])
}

fn envelopes_task(sess: &mut Session, out: &mut TaskDir) -> Result<Vec<Check>> {
    let n = sess.cfg.numerics.clone();
    let tol = sess.cfg.tolerances.clone();
    let b = sess.branch()?.clone();
    let fb = FourierBloch::new(&sess.pattern()?.1, &b.u_ad, n.m)?;
    let e = &n.envelope;
    let grid = EnvelopeGrid::standard(e.n_t, e.t_min, e.t_max, e.n_half, e.sigma_min);
    let samples = fb.propagator_grid(&grid.times, &grid.sigmas)?;
    let rep = envelope_fit(&samples, b.gamma0, e.sigma_away, [e.fit_from, e.t_max])?;

    let sigma = 0.5 * b.gamma0;
    let op = fb.assemble(sigma)?;
    let prop = Propagator::new(&op)?;
    let (t1, t2) = (3.0, 7.0);
    let whole = prop.matrix(t1 + t2)?;
    let split = &prop.matrix(t1)? * &prop.matrix(t2)?;
    let semigroup = linalg::norm_fro((&whole - &split).as_ref()) / linalg::norm_fro(whole.as_ref());
    // M(0) is the identity on C × ker F̂: block norms (1, 0, 0, 1)
    let m0 = prop.sample(0.0)?.l2;
    let id = [m0[0] - 1.0, m0[1], m0[2], m0[3] - 1.0].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let dg = build_t_dg(&op)?;

    let rows = samples.iter().map(|s| {
        let mut r = vec![Cell::F(s.t), Cell::F(s.sigma)];
        r.extend(s.l2.iter().map(|v| Cell::F(*v)));
        r.extend(s.l1.iter().map(|v| Cell::F(*v)));
        r.extend(s.linf.iter().map(|v| Cell::F(*v)));
        r
    });
    let header = [
        "t", "sigma", "l2_00", "l2_01", "l2_10", "l2_11", "l1_00", "l1_01", "l1_10", "l1_11", "linf_00", "linf_01", "linf_10", "linf_11",
    ];
    out.csv("envelopes.csv", &header, rows)?;
    out.json(
        "envelopes.json",
        &json!({
            "report": rep,
            "semigroup_sigma": sigma,
            "semigroup_residual": semigroup,
            "identity_residual": id,
            "t_dg_residual": dg.residual,
            "t_dg_inverse_residual": dg.inverse_residual,
            "gamma0": b.gamma0,
        }),
    )?;
    let mut checks: Vec<Check> = (0..4)
        .map(|k| {
            let name = format!("block {k} exponent vs {}", rep.expected[k]);
            Check::at_most(&name, (rep.exponents[k] - rep.expected[k]).abs(), rep.tolerance[k])
        })
        .collect();
    checks.push(Check::flag("gaussian rate c > 0", rep.c_ok));
    checks.push(Check::flag("exponential decay away from σ = 0", rep.gamma2_ok));
    checks.push(Check::at_most("semigroup residual", semigroup, tol.semigroup));
    checks.push(Check::at_most("block norms of M(0) vs (1, 0, 0, 1)", id, tol.semigroup));
    checks.push(Check::at_most("T_dg residual", dg.residual, tol.t_dg));
    Ok(checks)
}

fn simulate_task(sess: &mut Session, out: &mut TaskDir) -> Result<Vec<Check>> {
    let cfg = sess.cfg.clone();
    let (traj, series) = sess.simulation()?;
    let center = perturbation_center(cfg.numerics.j, &perturbation_params(&cfg));
    let wrap = wrap_fraction(traj.last(), center);
    let rows = (0..traj.norm_times.len()).map(|i| vec![Cell::F(traj.norm_times[i]), Cell::F(traj.sup_norms[i]), Cell::F(traj.l1_norms[i])]);
    out.csv("norms.csv", &["t", "v_inf", "v_l1"], rows)?;
    let (th, w, dth, sum) = (series.theta_inf(), series.w_xinf(), series.delta_theta_l2(), series.theta_sum());
    let rows = (0..series.times.len()).map(|i| vec![Cell::F(series.times[i]), Cell::F(th[i]), Cell::F(w[i]), Cell::F(dth[i]), Cell::F(sum[i])]);
    out.csv("lattice_series.csv", &["t", "theta_inf", "W_Xinf", "delta_theta_l2", "theta_sum"], rows)?;
    if let Some(last) = series.states.last() {
        write_lattice_state(out, last)?;
    }
    let t_end = traj.norm_times.last().copied().unwrap_or(0.0);
    out.json(
        "simulate.json",
        &json!({
            "scheme": traj.scheme,
            "linearized": traj.linearized,
            "cells": traj.cells,
            "n_points": traj.n_points,
            "dt": traj.dt,
            "t_end": t_end,
            "initial_inf": traj.sup_norms.first(),
            "final_inf": traj.sup_norms.last(),
            "wrap_fraction": wrap,
            "tracking_truncated": series.truncated,
        }),
    )?;
    Ok(vec![
        Check::at_least("reached T", t_end, cfg.numerics.t_end - 1e-9),
        Check::flag("lattice tracking complete", series.truncated.is_none()),
    ])
}

fn decay_report_task(sess: &mut Session, out: &mut TaskDir) -> Result<Vec<Check>> {
    let cfg = sess.cfg.clone();
    let (traj, series) = sess.simulation()?;
    let win = cfg.simulation.window;
    let reports = [
        measure_decay(&traj.norm_times, &traj.sup_norms, DecayNorm::VInf, win)?,
        measure_decay(&series.times, &series.theta_inf(), DecayNorm::ThetaInf, win)?,
        measure_decay(&series.times, &series.w_xinf(), DecayNorm::WXInf, win)?,
        measure_decay(&series.times, &series.delta_theta_l2(), DecayNorm::DeltaThetaL2, win)?,
    ];
    let thetas: Vec<Vec<f64>> = series.states.iter().map(|s| s.theta.clone()).collect();
    let diff = compare_discrete_diffusion(&series.times, &thetas, cfg.simulation.diffusion_window)?;
    let drift = theta_sum_drift(&series.times, &series.theta_sum(), win)?;
    let d = sess.branch()?.d_fit;
    let d_lat = diff.d_lat.unwrap_or(f64::NAN);
    out.json(
        "decay.json",
        &json!({
            "decay": reports,
            "lattice_diffusion": diff,
            "d": d,
            "lattice_to_continuum_ratio": 4.0 * PI * PI * d_lat / d,
            "theta_sum_drift": drift,
        }),
    )?;
    let mut checks: Vec<Check> = reports
        .iter()
        .map(|r| Check::at_most(&format!("{} exponent vs {}", r.norm, r.target), (r.exponent - r.target).abs(), r.tolerance))
        .collect();
    checks.push(Check::at_most("discrete diffusion residual fraction", diff.residual_fraction, cfg.tolerances.diffusion_residual));
    checks.push(Check::flag("d_lat > 0", d_lat > 0.0));
    checks.push(Check::at_most("relative drift of the phase sum", drift, cfg.tolerances.theta_drift));
    Ok(checks)
}
