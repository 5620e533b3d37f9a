//! Lattice coordinates `s = (θ, W)` for perturbations `v` of the tiled pattern.
//!
//! The nonlinear reconstruction is
//! `v_j = W_j + H¹_j(θ) + c_j ψ(· - θ_j) + u(· - θ_j) - u` with
//! `H¹_j = ½φ(u_{j+1} - u_{j-1}) + ¼(u_{j+1} + u_{j-1} - 2u_j)`, `u_i = u(· - θ_i)`,
//! and `c_j` chosen so that `⟨W_j, u_ad⟩ = 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lattice::{chop, unchop, CellMoments, ChoppedField, LineField};
use super::{trapz, NormalFormContext};
use crate::error::{Error, Result};
use crate::fieldops::{self, CellField};
use crate::parallel;

/// Phase and remainder on each of `J` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeState {
    pub theta: Vec<f64>,
    pub w: ChoppedField,
}

impl LatticeState {
    pub fn zeros(ctx: &NormalFormContext, cells: usize) -> Self {
        LatticeState { theta: vec![0.0; cells], w: ChoppedField::zeros(cells, ctx.n_points(), ctx.n_species()) }
    }

    pub fn j(&self) -> usize {
        self.theta.len()
    }

    pub fn axpy(&self, s: f64, other: &LatticeState) -> LatticeState {
        LatticeState {
            theta: self.theta.iter().zip(&other.theta).map(|(a, b)| a + s * b).collect(),
            w: self.w.axpy(s, &other.w),
        }
    }

    pub fn scaled(&self, s: f64) -> LatticeState {
        LatticeState { theta: self.theta.iter().map(|t| s * t).collect(), w: self.w.scaled(s) }
    }

    /// `max(sup_j |θ_j|, sup_j ‖W_j‖_∞)`.
    pub fn norm_inf(&self) -> f64 {
        self.theta.iter().fold(self.w.norm_inf(), |m, t| m.max(t.abs()))
    }

    pub fn theta_norm_inf(&self) -> f64 {
        self.theta.iter().fold(0.0, |m: f64, t| m.max(t.abs()))
    }
}

fn check_state(ctx: &NormalFormContext, s: &LatticeState) -> Result<()> {
    if s.theta.is_empty() || s.w.j() != s.theta.len() {
        return Err(Error::ShapeError(format!("{} phases for {} cells", s.theta.len(), s.w.j())));
    }
    if s.w.n_points() != ctx.n_points() || s.w.n_species() != ctx.n_species() {
        return Err(Error::ShapeError("remainder grid does not match the context".into()));
    }
    if s.theta.iter().any(|t| !t.is_finite()) || s.w.norm_inf().is_nan() {
        return Err(Error::NonFiniteInput("lattice state".into()));
    }
    Ok(())
}

fn check_line(ctx: &NormalFormContext, v: &LineField) -> Result<()> {
    if v.n_points() != ctx.n_points() || v.n_species() != ctx.n_species() {
        return Err(Error::AlignmentError(format!(
            "field has {} points × {} species per cell, context {} × {}",
            v.n_points(),
            v.n_species(),
            ctx.n_points(),
            ctx.n_species()
        )));
    }
    Ok(())
}

// Profiles translated by one cell phase.
struct Shifted {
    u: CellField,
    du: CellField,
    a: CellField,
    psi: CellField,
    dpsi: CellField,
}

fn shifted(ctx: &NormalFormContext, theta: f64) -> Shifted {
    Shifted {
        u: fieldops::shift(&ctx.pattern.profile, theta),
        du: fieldops::shift(&ctx.pattern.profile_dx, theta),
        a: fieldops::shift(&ctx.u_ad, theta),
        psi: fieldops::shift(&ctx.psi, theta),
        dpsi: fieldops::shift(&ctx.psi_dx, theta),
    }
}

// ½φ(r - l) + ¼(r + l - 2m)
fn stencil_field(ctx: &NormalFormContext, l: &CellField, m: &CellField, r: &CellField) -> CellField {
    let phi = ctx.phi.component(0);
    let mut out = CellField::zeros(ctx.n_points(), ctx.n_species());
    for c in 0..ctx.n_species() {
        let (lc, mc, rc) = (l.component(c), m.component(c), r.component(c));
        for (i, o) in out.component_mut(c).iter_mut().enumerate() {
            *o = 0.5 * phi[i] * (rc[i] - lc[i]) + 0.25 * (rc[i] + lc[i] - 2.0 * mc[i]);
        }
    }
    out
}

// ⟨stencil_field(l, m, r), p⟩ for periodic l, m, r, p, with the φ-weighted
// part integrated exactly.
fn stencil_pair(ctx: &NormalFormContext, l: &CellField, m: &CellField, r: &CellField, p: &CellField) -> f64 {
    let n = ctx.n_points();
    let mut odd = vec![0.0; n];
    let mut even = vec![0.0; n];
    for c in 0..ctx.n_species() {
        let (lc, mc, rc, pc) = (l.component(c), m.component(c), r.component(c), p.component(c));
        for i in 0..n {
            odd[i] += 0.5 * (rc[i] - lc[i]) * pc[i];
            even[i] += 0.25 * (rc[i] + lc[i] - 2.0 * mc[i]) * pc[i];
        }
    }
    ctx.phi_integral(&odd) + trapz(&even)
}

fn dot(a: &CellField, b: &CellField) -> f64 {
    fieldops::inner_product(a, b).expect("cell fields share the context grid")
}

fn scaled_sum(terms: &[(f64, &CellField)]) -> CellField {
    let mut out = terms[0].1.scaled(terms[0].0);
    for (s, f) in &terms[1..] {
        out = out.axpy(*s, f);
    }
    out
}

#[inline]
fn wrap(j: isize, n: usize) -> usize {
    j.rem_euclid(n as isize) as usize
}

/// `T(θ, W)`: the perturbation `v` on the large domain.
pub fn reconstruct(ctx: &NormalFormContext, s: &LatticeState) -> Result<LineField> {
    check_state(ctx, s)?;
    let jn = s.j();
    let sh = parallel::map(&s.theta, |&t| shifted(ctx, t));
    let mom = CellMoments::new(&unchop(&s.w), ctx.pairing_modes());
    let idx: Vec<usize> = (0..jn).collect();
    let cells = parallel::map(&idx, |&j| {
        let (l, m, r) = (&sh[wrap(j as isize - 1, jn)], &sh[j], &sh[(j + 1) % jn]);
        let h1 = stencil_field(ctx, &l.u, &m.u, &r.u);
        let num = -stencil_pair(ctx, &l.u, &m.u, &r.u, &m.a)
            - (mom.pair(j, ctx.u_ad_hat(), s.theta[j]) - mom.pair(j, ctx.u_ad_hat(), 0.0));
        let c = num / dot(&m.psi, &m.a);
        scaled_sum(&[(1.0, s.w.cell(j)), (1.0, &h1), (c, &m.psi), (1.0, &m.u), (-1.0, &ctx.pattern.profile)])
    });
    Ok(unchop(&ChoppedField::from_cells(cells)?))
}

const PHASE_MAX: f64 = 0.5;
const CONSTRAINT_TOL: f64 = 1e-9;

// Root of r(θ) = ⟨v_j, u_ad(· - θ)⟩ + C(-θ) by Newton from the linear guess.
fn solve_phase(ctx: &NormalFormContext, mom: &CellMoments, j: usize) -> Result<f64> {
    let (a, da) = (ctx.u_ad_hat(), ctx.u_ad_dx_hat());
    let mut theta = -mom.pair(j, a, 0.0);
    for _ in 0..60 {
        if !(theta.abs() <= PHASE_MAX) {
            return Err(Error::OutOfRegime(format!("cell {j}: phase {theta:.3} beyond ±{PHASE_MAX}")));
        }
        let (c, dc) = ctx.overlap(-theta);
        let r = mom.pair(j, a, theta) + c;
        let dr = -mom.pair(j, da, theta) - dc;
        if dr.abs() < 1e-8 {
            return Err(Error::OutOfRegime(format!("cell {j}: phase equation degenerate")));
        }
        let step = r / dr;
        theta -= step;
        if step.abs() <= 1e-15 * (1.0 + theta.abs()) {
            break;
        }
    }
    let (c, _) = ctx.overlap(-theta);
    let r = mom.pair(j, a, theta) + c;
    if r.abs() > 1e-12 {
        return Err(Error::NoConvergence(format!("cell {j}: phase residual {r:.3e}")));
    }
    if theta.abs() > PHASE_MAX {
        return Err(Error::OutOfRegime(format!("cell {j}: phase {theta:.3} beyond ±{PHASE_MAX}")));
    }
    Ok(theta)
}

/// `T⁻¹(v)`. Each phase solves a scalar equation local to its cell; the
/// remainders follow once all phases are known.
pub fn decompose(ctx: &NormalFormContext, v: &LineField) -> Result<LatticeState> {
    check_line(ctx, v)?;
    let jn = v.cells();
    let mom = CellMoments::new(v, ctx.pairing_modes());
    let idx: Vec<usize> = (0..jn).collect();
    let theta = parallel::map(&idx, |&j| solve_phase(ctx, &mom, j)).into_iter().collect::<Result<Vec<_>>>()?;
    let sh = parallel::map(&theta, |&t| shifted(ctx, t));
    let vc = chop(v);
    let cells = parallel::map(&idx, |&j| {
        let (l, m, r) = (&sh[wrap(j as isize - 1, jn)], &sh[j], &sh[(j + 1) % jn]);
        let h1 = stencil_field(ctx, &l.u, &m.u, &r.u);
        let num = -stencil_pair(ctx, &l.u, &m.u, &r.u, &ctx.u_ad)
            - (mom.pair(j, ctx.u_ad_hat(), theta[j]) - mom.pair(j, ctx.u_ad_hat(), 0.0));
        let c = num / dot(&m.psi, &ctx.u_ad);
        scaled_sum(&[(1.0, vc.cell(j)), (-1.0, &h1), (-c, &m.psi), (-1.0, &m.u), (1.0, &ctx.pattern.profile)])
    });
    let w = ChoppedField::from_cells(cells)?;
    let wm = CellMoments::new(&unchop(&w), ctx.pairing_modes());
    for j in 0..jn {
        let g = wm.pair(j, ctx.u_ad_hat(), 0.0);
        if g.abs() > CONSTRAINT_TOL {
            return Err(Error::ConstraintViolation(format!("cell {j}: ⟨W_j, u_ad⟩ = {g:.3e}")));
        }
    }
    Ok(LatticeState { theta, w })
}

/// `(E∗θ)_j = E_{-1}θ_{j+1} + E_0θ_j + E_1θ_{j-1}`.
pub fn stencil_apply(ctx: &NormalFormContext, theta: &[f64]) -> ChoppedField {
    let jn = theta.len();
    let [em, e0, ep] = &ctx.stencil;
    let cells = (0..jn)
        .map(|j| scaled_sum(&[(theta[(j + 1) % jn], em), (theta[j], e0), (theta[wrap(j as isize - 1, jn)], ep)]))
        .collect();
    ChoppedField::from_cells(cells).expect("at least one cell")
}

/// `F(v)_j = -⟨v_j, u_ad⟩`, the linearized phase.
pub fn phase_functional(ctx: &NormalFormContext, v: &LineField) -> Result<Vec<f64>> {
    check_line(ctx, v)?;
    let mom = CellMoments::new(v, ctx.pairing_modes());
    Ok((0..v.cells()).map(|j| -mom.pair(j, ctx.u_ad_hat(), 0.0)).collect())
}

/// `L(θ, W) = W + E∗θ`.
pub fn linear_reconstruct(ctx: &NormalFormContext, s: &LatticeState) -> Result<LineField> {
    check_state(ctx, s)?;
    Ok(unchop(&s.w.axpy(1.0, &stencil_apply(ctx, &s.theta))))
}

/// `L⁻¹(v) = (Fv, v - E∗Fv)`.
pub fn linear_decompose(ctx: &NormalFormContext, v: &LineField) -> Result<LatticeState> {
    let theta = phase_functional(ctx, v)?;
    let w = chop(v).axpy(-1.0, &stencil_apply(ctx, &theta));
    Ok(LatticeState { theta, w })
}

/// `A_ch v = D v_XX + f′(u_⋆) v` on the large domain.
pub fn apply_a_ch(ctx: &NormalFormContext, v: &LineField) -> Result<LineField> {
    check_line(ctx, v)?;
    let (n, ns) = (ctx.n_points(), ctx.n_species());
    let len = v.len();
    let vxx = v.differentiate(2);
    let jac = ctx.jacobian_field();
    let mut out = LineField::zeros(n, v.cells(), ns);
    for c in 0..ns {
        let d = ctx.pattern.sys.diffusion[c];
        let o = out.component_mut(c);
        for g in 0..len {
            let row = &jac[g % n][c * ns..(c + 1) * ns];
            o[g] = d * vxx.component(c)[g] + (0..ns).map(|e| row[e] * v.component(e)[g]).sum::<f64>();
        }
    }
    Ok(out)
}

/// Time derivative of the perturbation: `A_ch v + g(u_⋆; v)`.
pub fn rhs(ctx: &NormalFormContext, v: &LineField) -> Result<LineField> {
    let mut out = apply_a_ch(ctx, v)?;
    let (n, ns, len) = (ctx.n_points(), ctx.n_species(), v.len());
    let u = &ctx.pattern.profile;
    let sys = &ctx.pattern.sys;
    let (mut p, mut q, mut g) = (vec![0.0; ns], vec![0.0; ns], vec![0.0; ns]);
    for i in 0..len {
        for c in 0..ns {
            p[c] = u.at(c, i % n);
            q[c] = v.component(c)[i];
        }
        sys.g_into(&p, &q, &mut g);
        for c in 0..ns {
            out.component_mut(c)[i] += g[c];
        }
    }
    Ok(out)
}

/// `A_nf(θ, W) = (δ₊ΓW, A_ch(E∗θ + W) - E∗δ₊ΓW)` with
/// `(ΓW)_j = Σ_c D_c ∂ₓu_ad,c(π) W_{j,c}(-π)`.
pub fn apply_a_nf(ctx: &NormalFormContext, s: &LatticeState) -> Result<LatticeState> {
    let jn = s.j();
    let th = boundary_flux(ctx, &s.w);
    let theta: Vec<f64> = (0..jn).map(|j| th[(j + 1) % jn] - th[j]).collect();
    let acl = chop(&apply_a_ch(ctx, &linear_reconstruct(ctx, s)?)?);
    let w = acl.axpy(-1.0, &stencil_apply(ctx, &theta));
    Ok(LatticeState { theta, w })
}

/// `(ΓW)_j`, the flux through the left edge of each cell.
pub fn boundary_flux(ctx: &NormalFormContext, w: &ChoppedField) -> Vec<f64> {
    let gamma = ctx.boundary_weight();
    w.cells().iter().map(|cell| (0..cell.n_species()).map(|c| gamma[c] * cell.at(c, 0)).sum()).collect()
}

/// `ṡ` for the full nonlinear flow through `s`, from the exact time
/// derivative of the decomposition.
pub fn lattice_velocity(ctx: &NormalFormContext, s: &LatticeState) -> Result<LatticeState> {
    let v = reconstruct(ctx, s)?;
    let vdot = rhs(ctx, &v)?;
    velocity_of(ctx, s, &v, &vdot)
}

fn velocity_of(ctx: &NormalFormContext, s: &LatticeState, v: &LineField, vdot: &LineField) -> Result<LatticeState> {
    let jn = s.j();
    let k = ctx.pairing_modes();
    let (a_hat, da_hat) = (ctx.u_ad_hat(), ctx.u_ad_dx_hat());
    let mv = CellMoments::new(v, k);
    let md = CellMoments::new(vdot, k);
    let sh = parallel::map(&s.theta, |&t| shifted(ctx, t));
    let idx: Vec<usize> = (0..jn).collect();
    let theta_dot = idx
        .iter()
        .map(|&j| {
            let t = s.theta[j];
            let dr = -mv.pair(j, da_hat, t) - ctx.overlap(-t).1;
            if dr.abs() < 1e-8 {
                return Err(Error::OutOfRegime(format!("cell {j}: phase equation degenerate")));
            }
            Ok(-md.pair(j, a_hat, t) / dr)
        })
        .collect::<Result<Vec<f64>>>()?;
    // -u′(· - θ_i) θ̇_i
    let drift: Vec<CellField> = idx.iter().map(|&j| sh[j].du.scaled(-theta_dot[j])).collect();
    let vdc = chop(vdot);
    let a = &ctx.u_ad;
    let cells = parallel::map(&idx, |&j| {
        let (jl, jr) = (wrap(j as isize - 1, jn), (j + 1) % jn);
        let m = &sh[j];
        let (t, td) = (s.theta[j], theta_dot[j]);
        let num = -stencil_pair(ctx, &sh[jl].u, &m.u, &sh[jr].u, a)
            - (mv.pair(j, a_hat, t) - mv.pair(j, a_hat, 0.0));
        let den = dot(&m.psi, a);
        let c = num / den;
        let hdot = stencil_field(ctx, &drift[jl], &drift[j], &drift[jr]);
        let num_dot = -stencil_pair(ctx, &drift[jl], &drift[j], &drift[jr], a)
            - (md.pair(j, a_hat, t) - md.pair(j, a_hat, 0.0))
            + td * mv.pair(j, da_hat, t);
        let den_dot = -td * dot(&m.dpsi, a);
        let c_dot = (num_dot - c * den_dot) / den;
        scaled_sum(&[(1.0, vdc.cell(j)), (-1.0, &hdot), (-c_dot, &m.psi), (c * td, &m.dpsi), (td, &m.du)])
    });
    Ok(LatticeState { theta: theta_dot, w: ChoppedField::from_cells(cells)? })
}

/// `N(s) = ṡ - A_nf s`, the nonlinear part of the lattice flow.
pub fn nonlinear_residual(ctx: &NormalFormContext, s: &LatticeState) -> Result<LatticeState> {
    let sdot = lattice_velocity(ctx, s)?;
    Ok(sdot.axpy(-1.0, &apply_a_nf(ctx, s)?))
}

/// Random state with `|θ_j| ≤ amplitude` and a remainder `W = v - E∗Fv`
/// built from a smooth random `v` of sup norm `amplitude`.
pub fn random_state<R: Rng>(ctx: &NormalFormContext, cells: usize, amplitude: f64, rng: &mut R) -> LatticeState {
    let theta = (0..cells).map(|_| amplitude * rng.gen_range(-1.0..=1.0)).collect();
    let v = random_smooth_field(ctx.n_points(), cells, ctx.n_species(), amplitude, rng);
    let s = linear_decompose(ctx, &v).expect("random field matches the context grid");
    LatticeState { theta, w: s.w }
}

/// Trigonometric polynomial on the large domain with Gaussian-decaying random
/// coefficients (wavenumbers up to 6), scaled to sup norm `amplitude`.
pub fn random_smooth_field<R: Rng>(
    n_points: usize,
    cells: usize,
    n_species: usize,
    amplitude: f64,
    rng: &mut R,
) -> LineField {
    let top = 6 * cells;
    let coeffs: Vec<Vec<(f64, f64)>> = (0..n_species)
        .map(|_| {
            (0..=top)
                .map(|n| {
                    let kappa = n as f64 / cells as f64;
                    let w = (-kappa * kappa / 8.0).exp();
                    (w * rng.gen_range(-1.0..=1.0), w * rng.gen_range(-1.0..=1.0))
                })
                .collect()
        })
        .collect();
    let v = LineField::from_fn(n_points, cells, n_species, |c, x| {
        coeffs[c]
            .iter()
            .enumerate()
            .map(|(n, (p, q))| {
                let kx = n as f64 / cells as f64 * x;
                p * kx.cos() + q * kx.sin()
            })
            .sum()
    });
    let m = v.norm_inf();
    if m > 0.0 {
        v.scaled(amplitude / m)
    } else {
        v
    }
}
