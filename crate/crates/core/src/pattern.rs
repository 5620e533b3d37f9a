//! Homogeneous equilibria, Turing onset, and even 2π-periodic patterns.
//!
//! Patterns are computed for the rescaled system `D ↦ k²D`, which places the
//! pattern wavenumber at 1 on the cell `(-π, π)`.

use std::f64::consts::PI;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldops::{self, CellField, Norm};
use crate::kinetics::ReactionSystem;
use crate::linalg;

/// Newton root of `f` starting at `guess`.
pub fn homogeneous_equilibrium(sys: &ReactionSystem, guess: &[f64]) -> Result<Vec<f64>> {
    let n = sys.n();
    let mut u = guess.to_vec();
    let mut f = sys.eval_f(&u)?;
    for _ in 0..50 {
        if f.iter().all(|x| x.abs() <= 1e-12) {
            return Ok(u);
        }
        let j = sys.jac(&u)?;
        let a = Mat::from_fn(n, n, |r, c| j[r * n + c]);
        let step = linalg::solve_real(&a, &f);
        for (ui, si) in u.iter_mut().zip(&step) {
            *ui -= si;
        }
        f = sys.eval_f(&u)?;
    }
    if f.iter().all(|x| x.abs() <= 1e-12) {
        return Ok(u);
    }
    Err(Error::NoConvergence(format!("equilibrium Newton from {guess:?}, residual {f:?}")))
}

/// Eigenvalues of `-k²D + f′(u0)`, sorted by descending real part.
pub fn dispersion_relation(sys: &ReactionSystem, u0: &[f64], k: f64) -> Result<Vec<c64>> {
    let n = sys.n();
    let j = sys.jac(u0)?;
    let a = Mat::from_fn(n, n, |r, c| {
        let d = if r == c { k * k * sys.diffusion[r] } else { 0.0 };
        c64::new(j[r * n + c] - d, 0.0)
    });
    if n == 2 {
        // closed form avoids eigensolver noise for the common case
        let tr = a[(0, 0)] + a[(1, 1)];
        let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        let disc = (tr * tr - det * 4.0).sqrt();
        let (l1, l2) = ((tr + disc) * 0.5, (tr - disc) * 0.5);
        return Ok(if l1.re >= l2.re { vec![l1, l2] } else { vec![l2, l1] });
    }
    Ok(linalg::eig_sorted(a.as_ref())?.0)
}

fn growth(sys: &ReactionSystem, u0: &[f64], k: f64) -> Result<f64> {
    Ok(dispersion_relation(sys, u0, k)?[0].re)
}

/// Maximum over `k > 0` of the leading growth rate and its maximizer.
pub fn max_growth(sys: &ReactionSystem, u0: &[f64]) -> Result<(f64, f64)> {
    let j = sys.jac(u0)?;
    let jmax = j.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let dmin = sys.diffusion.iter().cloned().fold(f64::INFINITY, f64::min);
    let kmax = (4.0 * (1.0 + jmax) / dmin).sqrt();
    let samples = 2000;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 1..=samples {
        let k = kmax * i as f64 / samples as f64;
        let g = growth(sys, u0, k)?;
        if g > best.0 {
            best = (g, k);
        }
    }
    // bisection on the exact derivative inside the bracketing cell
    let h = kmax / samples as f64;
    let (mut a, mut b) = ((best.1 - h).max(1e-12), best.1 + h);
    let (da, db) = (growth_slope(sys, u0, a)?, growth_slope(sys, u0, b)?);
    if da > 0.0 && db < 0.0 {
        while b - a > 4.0 * f64::EPSILON * b {
            let mid = 0.5 * (a + b);
            if growth_slope(sys, u0, mid)? > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let k = 0.5 * (a + b);
        return Ok((growth(sys, u0, k)?, k));
    }
    Ok(best)
}

/// `dλ/dk = -2k (yᵀDx)/(yᵀx)` for the leading eigenvalue with right and left
/// eigenvectors `x`, `y`.
fn growth_slope(sys: &ReactionSystem, u0: &[f64], k: f64) -> Result<f64> {
    let n = sys.n();
    let j = sys.jac(u0)?;
    let a = Mat::from_fn(n, n, |r, c| c64::new(j[r * n + c] - if r == c { k * k * sys.diffusion[r] } else { 0.0 }, 0.0));
    let (vals, x) = linalg::eig_sorted(a.as_ref())?;
    let at: Mat<c64> = a.transpose().to_owned();
    let (lvals, y) = linalg::eig_sorted(at.as_ref())?;
    let il = (0..n).min_by(|&p, &q| (lvals[p] - vals[0]).norm().total_cmp(&(lvals[q] - vals[0]).norm())).expect("n ≥ 1");
    let mut num = c64::new(0.0, 0.0);
    let mut den = c64::new(0.0, 0.0);
    for r in 0..n {
        num += y[(r, il)] * x[(r, 0)] * sys.diffusion[r];
        den += y[(r, il)] * x[(r, 0)];
    }
    Ok((num / den * (-2.0 * k)).re)
}

/// Critical parameter and wavenumber of a Turing instability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Onset {
    pub param_c: f64,
    pub k_c: f64,
}

/// Bisection on `param` for the sign change of the maximal growth rate.
pub fn turing_onset(sys: &ReactionSystem, u0: &[f64], param: &str, bracket: [f64; 2]) -> Result<Onset> {
    let [mut lo, mut hi] = bracket;
    let mut guess = u0.to_vec();
    let eval = |p: f64, guess: &mut Vec<f64>| -> Result<(f64, f64)> {
        let s = sys.with_param(param, p)?;
        let e = homogeneous_equilibrium(&s, guess)?;
        *guess = e.clone();
        max_growth(&s, &e)
    };
    let glo = eval(lo, &mut guess)?.0;
    let ghi = eval(hi, &mut guess)?.0;
    if glo.signum() == ghi.signum() {
        return Err(Error::BracketError { lo, hi });
    }
    let rising = ghi > 0.0;
    while hi - lo > 4.0 * f64::EPSILON * hi.abs().max(lo.abs()) {
        let mid = 0.5 * (lo + hi);
        let g = eval(mid, &mut guess)?.0;
        if (g > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let param_c = 0.5 * (lo + hi);
    let k_c = eval(param_c, &mut guess)?.1;
    Ok(Onset { param_c, k_c })
}

/// Knobs for the pattern solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternOptions {
    /// Collocation points per cell.
    pub n_points: usize,
    /// Cosine modes per species (`0..=n_modes`).
    pub n_modes: usize,
    pub amplitude_min: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Seed amplitude along the critical eigenvector.
    pub seed_eps: f64,
    /// Continuation step cap.
    pub max_step: f64,
    /// Smallest continuation step before giving up.
    pub min_step: f64,
}

impl Default for PatternOptions {
    fn default() -> Self {
        PatternOptions {
            n_points: 256,
            n_modes: 64,
            amplitude_min: 1e-3,
            tol: 1e-12,
            max_iter: 40,
            seed_eps: 0.1,
            max_step: 0.05,
            min_step: 1e-6,
        }
    }
}

/// Even periodic steady state of the rescaled system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSolution {
    pub profile: CellField,
    pub profile_dx: CellField,
    pub profile_dxx: CellField,
    /// System with rescaled diffusion `k²D`.
    pub sys: ReactionSystem,
    /// Physical wavenumber `k` absorbed into the diffusion.
    pub wavenumber: f64,
    pub homogeneous: Vec<f64>,
    /// Cosine coefficients per species.
    pub cos_coeffs: Vec<Vec<f64>>,
    pub residual_norm: f64,
    pub amplitude: f64,
    pub newton_steps: usize,
}

struct CosBasis {
    n_points: usize,
    n_modes: usize,
    // table[m * (K+1) + l] = cos(l x_m)
    table: Vec<f64>,
}

impl CosBasis {
    fn new(n_points: usize, n_modes: usize) -> Self {
        let x = fieldops::grid(n_points);
        let k1 = n_modes + 1;
        let mut table = vec![0.0; n_points * k1];
        for (m, xm) in x.iter().enumerate() {
            for l in 0..k1 {
                table[m * k1 + l] = (l as f64 * xm).cos();
            }
        }
        CosBasis { n_points, n_modes, table }
    }

    fn synth(&self, a: &[f64], weight: impl Fn(usize) -> f64) -> Vec<f64> {
        let k1 = self.n_modes + 1;
        (0..self.n_points)
            .map(|m| (0..k1).map(|l| weight(l) * a[l] * self.table[m * k1 + l]).sum())
            .collect()
    }

    fn project(&self, r: &[f64]) -> Vec<f64> {
        let k1 = self.n_modes + 1;
        let n = self.n_points as f64;
        (0..k1)
            .map(|l| {
                let w = if l == 0 { 1.0 } else { 2.0 };
                w / n * (0..self.n_points).map(|m| r[m] * self.table[m * k1 + l]).sum::<f64>()
            })
            .collect()
    }
}

fn evaluate(sys: &ReactionSystem, basis: &CosBasis, a: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = sys.n();
    let u: Vec<Vec<f64>> = a.iter().map(|ac| basis.synth(ac, |_| 1.0)).collect();
    let uxx: Vec<Vec<f64>> = a.iter().map(|ac| basis.synth(ac, |l| -((l * l) as f64))).collect();
    let mut res = vec![vec![0.0; basis.n_points]; n];
    let mut pt = vec![0.0; n];
    let mut fv = vec![0.0; n];
    for m in 0..basis.n_points {
        for c in 0..n {
            pt[c] = u[c][m];
        }
        sys.f_into(&pt, &mut fv);
        for c in 0..n {
            res[c][m] = sys.diffusion[c] * uxx[c][m] + fv[c];
        }
    }
    (u, res)
}

fn sup(v: &[Vec<f64>]) -> f64 {
    v.iter().flatten().fold(0.0, |m: f64, x| m.max(x.abs()))
}

fn amplitude_of(u: &[Vec<f64>], u0: &[f64]) -> f64 {
    let n = u[0].len();
    let h = 2.0 * PI / n as f64;
    (h * u.iter().zip(u0).map(|(uc, e)| uc.iter().map(|x| (x - e).powi(2)).sum::<f64>()).sum::<f64>()).sqrt()
}

/// Newton solve on the even cosine subspace, seeded by `init` (projected).
///
/// `sys` must already carry the rescaled diffusion; `wavenumber` is recorded
/// as metadata only.
pub fn solve_pattern(
    sys: &ReactionSystem,
    init: &CellField,
    wavenumber: f64,
    opts: &PatternOptions,
) -> Result<PatternSolution> {
    let n = sys.n();
    if init.n_species() != n {
        return Err(Error::ShapeError(format!("init has {} species, system {}", init.n_species(), n)));
    }
    let init = if init.n_points() == opts.n_points { init.clone() } else { fieldops::resample(init, opts.n_points)? };
    let basis = CosBasis::new(opts.n_points, opts.n_modes.min(opts.n_points / 2 - 1));
    let a0: Vec<Vec<f64>> = (0..n).map(|c| basis.project(init.component(c))).collect();
    solve_from_coeffs(sys, a0, wavenumber, opts, &basis)
}

fn solve_from_coeffs(
    sys: &ReactionSystem,
    mut a: Vec<Vec<f64>>,
    wavenumber: f64,
    opts: &PatternOptions,
    basis: &CosBasis,
) -> Result<PatternSolution> {
    let n = sys.n();
    let k1 = basis.n_modes + 1;
    let dim = n * k1;
    let u0 = homogeneous_equilibrium(sys, &sys.equilibrium())?;
    let (mut u, mut res) = evaluate(sys, basis, &a);
    let mut rnorm = sup(&res);
    let mut steps = 0;
    while rnorm > opts.tol {
        if steps >= opts.max_iter {
            return Err(Error::NoConvergence(format!("pattern Newton residual {rnorm:.3e} after {steps} steps")));
        }
        steps += 1;
        let rhs: Vec<f64> = res.iter().flat_map(|r| basis.project(r)).collect();
        let mut jac = Mat::<f64>::zeros(dim, dim);
        let mut jv = vec![0.0; n * n];
        let mut jfield = vec![vec![0.0; basis.n_points]; n * n];
        let mut pt = vec![0.0; n];
        for m in 0..basis.n_points {
            for c in 0..n {
                pt[c] = u[c][m];
            }
            sys.jac_into(&pt, &mut jv);
            for q in 0..n * n {
                jfield[q][m] = jv[q];
            }
        }
        for c in 0..n {
            for cp in 0..n {
                let jc = &jfield[c * n + cp];
                for lp in 0..k1 {
                    let col: Vec<f64> = (0..basis.n_points).map(|m| jc[m] * basis.table[m * k1 + lp]).collect();
                    let proj = basis.project(&col);
                    for l in 0..k1 {
                        jac[(c * k1 + l, cp * k1 + lp)] = proj[l];
                    }
                }
            }
            for l in 0..k1 {
                jac[(c * k1 + l, c * k1 + l)] -= sys.diffusion[c] * (l * l) as f64;
            }
        }
        let delta = linalg::solve_real(&jac, &rhs);
        // backtracking on the sup-norm residual
        let mut t = 1.0;
        loop {
            let trial: Vec<Vec<f64>> =
                (0..n).map(|c| (0..k1).map(|l| a[c][l] - t * delta[c * k1 + l]).collect()).collect();
            let (ut, rt) = evaluate(sys, basis, &trial);
            let rn = sup(&rt);
            if rn < rnorm || t < 1e-3 {
                a = trial;
                u = ut;
                res = rt;
                rnorm = rn;
                break;
            }
            t *= 0.5;
        }
        if !rnorm.is_finite() {
            return Err(Error::NoConvergence("pattern Newton diverged".into()));
        }
    }
    let amplitude = amplitude_of(&u, &u0);
    if amplitude < opts.amplitude_min {
        return Err(Error::CollapsedToHomogeneous(amplitude));
    }
    let mut sol = build_solution(sys, &a, wavenumber, basis.n_points, u0, steps);
    sol.amplitude = amplitude;
    Ok(sol)
}

fn build_solution(
    sys: &ReactionSystem,
    a: &[Vec<f64>],
    wavenumber: f64,
    n_points: usize,
    u0: Vec<f64>,
    steps: usize,
) -> PatternSolution {
    let n = sys.n();
    let x = fieldops::grid(n_points);
    let series = |c: usize, xm: f64, order: u32| -> f64 {
        a[c].iter()
            .enumerate()
            .map(|(l, al)| {
                let lf = l as f64;
                al * match order {
                    0 => (lf * xm).cos(),
                    1 => -lf * (lf * xm).sin(),
                    _ => -lf * lf * (lf * xm).cos(),
                }
            })
            .sum()
    };
    let profile = CellField::from_fn(n_points, n, |c, xm| series(c, xm, 0));
    let profile_dx = CellField::from_fn(n_points, n, |c, xm| series(c, xm, 1));
    let profile_dxx = CellField::from_fn(n_points, n, |c, xm| series(c, xm, 2));
    let mut residual: f64 = 0.0;
    let mut fv = vec![0.0; n];
    for m in 0..x.len() {
        sys.f_into(&profile.point(m), &mut fv);
        for c in 0..n {
            residual = residual.max((sys.diffusion[c] * profile_dxx.at(c, m) + fv[c]).abs());
        }
    }
    let amplitude = {
        let u: Vec<Vec<f64>> = (0..n).map(|c| profile.component(c).to_vec()).collect();
        amplitude_of(&u, &u0)
    };
    PatternSolution {
        profile,
        profile_dx,
        profile_dxx,
        sys: sys.clone(),
        wavenumber,
        homogeneous: u0,
        cos_coeffs: a.to_vec(),
        residual_norm: residual,
        amplitude,
        newton_steps: steps,
    }
}

impl PatternSolution {
    pub fn n_points(&self) -> usize {
        self.profile.n_points()
    }

    pub fn n_species(&self) -> usize {
        self.sys.n()
    }

    /// Max of `|u(x) - u(-x)|` on the grid.
    pub fn evenness_residual(&self) -> f64 {
        self.profile.evenness_residual()
    }

    /// Re-evaluates the cosine series on an `n_points` grid.
    pub fn resample(&self, n_points: usize) -> PatternSolution {
        build_solution(&self.sys, &self.cos_coeffs, self.wavenumber, n_points, self.homogeneous.clone(), self.newton_steps)
    }

    /// Row-major `f′(u_⋆(x_m))` per grid point.
    pub fn jacobian_field(&self) -> Vec<Vec<f64>> {
        (0..self.n_points()).map(|m| self.sys.jac(&self.profile.point(m)).expect("finite profile")).collect()
    }

    /// `‖D u″ + f(u)‖_∞` for an arbitrary field on this grid.
    pub fn steady_residual(sys: &ReactionSystem, u: &CellField) -> Result<f64> {
        let uxx = fieldops::differentiate(u, 2)?;
        let n = sys.n();
        let mut r: f64 = 0.0;
        let mut fv = vec![0.0; n];
        for m in 0..u.n_points() {
            sys.f_into(&u.point(m), &mut fv);
            for c in 0..n {
                r = r.max((sys.diffusion[c] * uxx.at(c, m) + fv[c]).abs());
            }
        }
        Ok(r)
    }

    /// Value of the tracked parameter.
    pub fn param(&self, name: &str) -> Result<f64> {
        self.sys.param(name)
    }

    /// `‖u′‖`-normalized overlap helper: `L²` norm of `u′_⋆`.
    pub fn dx_norm(&self) -> f64 {
        fieldops::lp_norm(&self.profile_dx, Norm::L2)
    }
}

/// Seed `u0 + ε cos(x) w_c` with `w_c` the leading eigenvector of
/// `-D + f′(u0)` for the rescaled system.
pub fn onset_seed(sys: &ReactionSystem, u0: &[f64], eps: f64, n_points: usize) -> Result<CellField> {
    let n = sys.n();
    let j = sys.jac(u0)?;
    let a = Mat::from_fn(n, n, |r, c| c64::new(j[r * n + c] - if r == c { sys.diffusion[r] } else { 0.0 }, 0.0));
    let (_, v) = linalg::eig_sorted(a.as_ref())?;
    let mut w: Vec<f64> = (0..n).map(|r| v[(r, 0)].re).collect();
    if w.iter().all(|x| x.abs() < 1e-14) {
        w = (0..n).map(|r| v[(r, 0)].im).collect();
    }
    let s = w.iter().fold(0.0f64, |m, x| if x.abs() > m.abs() { *x } else { m });
    let w: Vec<f64> = w.iter().map(|x| x / s).collect();
    Ok(CellField::from_fn(n_points, n, |c, x| u0[c] + eps * x.cos() * w[c]))
}

/// Natural-parameter continuation. One entry per target; after a failure the
/// next target restarts from the last converged solution.
pub fn continue_pattern(
    from: &PatternSolution,
    param: &str,
    targets: &[f64],
    opts: &PatternOptions,
) -> Vec<Result<PatternSolution>> {
    let basis = CosBasis::new(from.n_points(), from.cos_coeffs[0].len() - 1);
    let mut current = from.clone();
    let mut out = Vec::with_capacity(targets.len());
    for &target in targets {
        let r = continue_to(&current, param, target, opts, &basis);
        if let Ok(s) = &r {
            current = s.clone();
        }
        out.push(r);
    }
    out
}

fn continue_to(
    from: &PatternSolution,
    param: &str,
    target: f64,
    opts: &PatternOptions,
    basis: &CosBasis,
) -> Result<PatternSolution> {
    let mut current = from.clone();
    let mut p = current.param(param)?;
    if p == target {
        return Ok(current);
    }
    let mut h = (target - p).signum() * (target - p).abs().min(opts.max_step);
    let mut last_err;
    loop {
        let next = if (target - p).abs() <= h.abs() { target } else { p + h };
        let sys = current.sys.with_param(param, next)?;
        match solve_from_coeffs(&sys, current.cos_coeffs.clone(), current.wavenumber, opts, basis) {
            Ok(s) => {
                current = s;
                p = next;
                if p == target {
                    return Ok(current);
                }
                h = (target - p).signum() * opts.max_step.min(2.0 * h.abs()).min((target - p).abs());
            }
            Err(e) => {
                last_err = e;
                h *= 0.5;
                if h.abs() < opts.min_step {
                    break;
                }
            }
        }
    }
    match last_err {
        Error::CollapsedToHomogeneous(a) => Err(Error::CollapsedToHomogeneous(a)),
        e => Err(Error::NoConvergence(format!("continuation to {param} = {target} stalled at {p}: {e}"))),
    }
}

fn projected_residual(sys: &ReactionSystem, basis: &CosBasis, a: &[Vec<f64>]) -> Vec<f64> {
    let (_, res) = evaluate(sys, basis, a);
    res.iter().flat_map(|r| basis.project(r)).collect()
}

/// Point on the bifurcating branch whose first cosine coefficient of species 0
/// equals `eps`; the parameter is an unknown of the Newton system.
fn branch_point(
    sys: &ReactionSystem,
    param: &str,
    seed: &CellField,
    eps: f64,
    wavenumber: f64,
    opts: &PatternOptions,
) -> Result<PatternSolution> {
    let n = sys.n();
    let basis = CosBasis::new(opts.n_points, opts.n_modes.min(opts.n_points / 2 - 1));
    let k1 = basis.n_modes + 1;
    let dim = n * k1 + 1;
    let mut a: Vec<Vec<f64>> = (0..n).map(|c| basis.project(seed.component(c))).collect();
    let mut p = sys.param(param)?;
    for _ in 0..opts.max_iter {
        let s = sys.with_param(param, p)?;
        let mut rhs = projected_residual(&s, &basis, &a);
        rhs.push(a[0][1] - eps);
        let rn = rhs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if rn <= opts.tol {
            return solve_from_coeffs(&s, a, wavenumber, opts, &basis);
        }
        let mut jac = Mat::<f64>::zeros(dim, dim);
        let h = 1e-7;
        for c in 0..n {
            for l in 0..k1 {
                let mut ap = a.clone();
                let mut am = a.clone();
                ap[c][l] += h;
                am[c][l] -= h;
                let rp = projected_residual(&s, &basis, &ap);
                let rm = projected_residual(&s, &basis, &am);
                for i in 0..n * k1 {
                    jac[(i, c * k1 + l)] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
        }
        let hp = 1e-7 * (1.0 + p.abs());
        let rp = projected_residual(&sys.with_param(param, p + hp)?, &basis, &a);
        let rm = projected_residual(&sys.with_param(param, p - hp)?, &basis, &a);
        for i in 0..n * k1 {
            jac[(i, n * k1)] = (rp[i] - rm[i]) / (2.0 * hp);
        }
        jac[(n * k1, 1)] = 1.0;
        let delta = linalg::solve_real(&jac, &rhs);
        for c in 0..n {
            for l in 0..k1 {
                a[c][l] -= delta[c * k1 + l];
            }
        }
        p -= delta[n * k1];
        if !p.is_finite() {
            return Err(Error::NoConvergence("branch point Newton diverged".into()));
        }
    }
    Err(Error::NoConvergence(format!("branch point at amplitude {eps} did not converge")))
}

/// Onset-seeded pattern at `param = target`.
///
/// Computes the Turing onset inside `bracket`, rescales diffusion by `k_c²`,
/// pins a small first-harmonic amplitude to land on the bifurcating branch
/// (the parameter floats), then continues in the parameter to `target`.
pub fn find_pattern(
    sys: &ReactionSystem,
    param: &str,
    bracket: [f64; 2],
    target: f64,
    opts: &PatternOptions,
) -> Result<(Onset, PatternSolution)> {
    let onset = turing_onset(sys, &sys.equilibrium(), param, bracket)?;
    let scaled = sys.with_scaled_diffusion(onset.k_c * onset.k_c);
    let s0 = scaled.with_param(param, onset.param_c)?;
    let u0 = homogeneous_equilibrium(&s0, &s0.equilibrium())?;
    let seed = onset_seed(&s0, &u0, opts.seed_eps, opts.n_points)?;
    let eps = CosBasis::new(opts.n_points, 1).project(seed.component(0))[1];
    let first = branch_point(&s0, param, &seed, eps, onset.k_c, opts)?;
    let mut sols = continue_pattern(&first, param, &[target], opts);
    Ok((onset, sols.pop().expect("one target")?))
}
