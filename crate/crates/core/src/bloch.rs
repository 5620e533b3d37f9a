//! Bloch operators `B(σ) = D(∂ₓ + iσ)² + f′(u_⋆)` as truncated Fourier
//! matrices, their spectra, the critical branch `λ(σ)` and the diffusion
//! coefficient `d` of its quadratic tangency.
//!
//! Coefficient vectors are indexed `(ℓ + M)·n + c` as in [`FourierField`]. The
//! pairing of two coefficient vectors is `⟨w, v⟩ = (1/2π) Σ w_ℓ·conj(v_ℓ)`,
//! which equals the `L²(0, 2π)` pairing of the synthesized fields.

use std::f64::consts::PI;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldops::{self, CellField, FourierField};
use crate::linalg::{self, CMat, ZERO};
use crate::parallel;
use crate::pattern::PatternSolution;

/// Eigenvalues at `M` and `M/2` closer than this are flagged as converged.
pub const CONVERGENCE_TOL: f64 = 1e-6;
/// Upper bound for the adaptive branch window.
pub const GAMMA0_MAX: f64 = 0.25;

/// `Â_ch(σ)` at truncation order `M`.
#[derive(Debug, Clone)]
pub struct BlochMatrix {
    pub sigma: f64,
    pub m: usize,
    pub n_species: usize,
    pub entries: CMat,
}

impl BlochMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn apply(&self, w: &FourierField) -> Result<FourierField> {
        if w.m() != self.m || w.n_species() != self.n_species {
            return Err(Error::ShapeError(format!("field (M={}, n={}) vs matrix (M={}, n={})", w.m(), w.n_species(), self.m, self.n_species)));
        }
        let out = apply_vec(&self.entries, w.coeffs());
        FourierField::from_coeffs(self.m, self.n_species, out)
    }

    /// Frobenius norm of `A - A^H`.
    pub fn hermitian_residual(&self) -> f64 {
        (&self.entries - self.entries.adjoint()).norm_l2()
    }
}

pub(crate) fn apply_vec(a: &CMat, v: &[c64]) -> Vec<c64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * v[j]).sum()).collect()
}

/// `(1/2π) Σ w_ℓ conj(v_ℓ)`.
pub fn pairing(w: &[c64], v: &[c64]) -> c64 {
    w.iter().zip(v).map(|(a, b)| a * b.conj()).sum::<c64>() / (2.0 * PI)
}

fn vnorm(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Cached Fourier data of `f′(u_⋆)` from which `Â_ch(σ)` is assembled for any σ.
#[derive(Debug, Clone)]
pub struct BlochOperator {
    m: usize,
    n: usize,
    diffusion: Vec<f64>,
    // h[((k + 2M)·n + r)·n + c] = (f′)_{rc} Fourier coefficient k, divided by 2π
    h: Vec<c64>,
}

impl BlochOperator {
    pub fn new(p: &PatternSolution, m: usize) -> Result<Self> {
        if m < 8 {
            return Err(Error::Precondition(format!("truncation order M = {m} < 8")));
        }
        BlochOperator::from_jacobian(&p.sys.diffusion, &p.jacobian_field(), m)
    }

    /// From a sampled coefficient field: `jac[m]` is the row-major `n × n`
    /// matrix at grid point `m`. Modes beyond the grid's `N/2 - 1` are zero.
    pub fn from_jacobian(diffusion: &[f64], jac: &[Vec<f64>], m: usize) -> Result<Self> {
        let n = diffusion.len();
        let np = jac.len();
        if np < 16 || np % 2 != 0 || jac.iter().any(|j| j.len() != n * n) {
            return Err(Error::ShapeError(format!("jacobian field of {np} points for n = {n}")));
        }
        let span = 2 * m;
        let mut h = vec![ZERO; (2 * span + 1) * n * n];
        for q in 0..n * n {
            let samples: Vec<f64> = jac.iter().map(|j| j[q]).collect();
            if samples.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput("jacobian field".into()));
            }
            let s = fieldops::cell_spectrum(&samples);
            let kmax = (span as i64).min(np as i64 / 2 - 1);
            for k in -kmax..=kmax {
                h[(k + span as i64) as usize * n * n + q] = s[fieldops::bin_of(k, np)] / (2.0 * PI);
            }
        }
        Ok(BlochOperator { m, n, diffusion: diffusion.to_vec(), h })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_species(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n * (2 * self.m + 1)
    }

    pub fn diffusion(&self) -> &[f64] {
        &self.diffusion
    }

    /// Coefficient `h_k` entry `(r, c)`.
    pub fn h(&self, k: i64, r: usize, c: usize) -> c64 {
        let span = 2 * self.m as i64;
        if k.abs() > span {
            return ZERO;
        }
        self.h[((k + span) as usize * self.n + r) * self.n + c]
    }

    /// Same data at a lower truncation order.
    pub fn truncated(&self, m: usize) -> BlochOperator {
        let m = m.min(self.m);
        let (n, span_old, span) = (self.n, 2 * self.m as i64, 2 * m as i64);
        let mut h = vec![ZERO; (2 * span as usize + 1) * n * n];
        for k in -span..=span {
            let src = (k + span_old) as usize * n * n;
            let dst = (k + span) as usize * n * n;
            h[dst..dst + n * n].copy_from_slice(&self.h[src..src + n * n]);
        }
        BlochOperator { m, n, diffusion: self.diffusion.clone(), h }
    }

    pub fn matrix(&self, sigma: f64) -> Result<BlochMatrix> {
        if !sigma.is_finite() || sigma.abs() > 0.5 + 1e-12 {
            return Err(Error::Precondition(format!("σ = {sigma} outside [-1/2, 1/2]")));
        }
        let (n, m) = (self.n, self.m as i64);
        let dim = self.dim();
        let entries = Mat::from_fn(dim, dim, |i, j| {
            let (l, r) = ((i / n) as i64 - m, i % n);
            let (k, c) = ((j / n) as i64 - m, j % n);
            let mut z = self.h(l - k, r, c);
            if i == j {
                z -= (sigma + l as f64).powi(2) * self.diffusion[r];
            }
            z
        });
        Ok(BlochMatrix { sigma, m: self.m, n_species: n, entries })
    }

    /// Eigenpairs sorted by descending real part.
    pub fn eig(&self, sigma: f64) -> Result<(Vec<c64>, CMat)> {
        linalg::eig_sorted(self.matrix(sigma)?.entries.as_ref())
    }

    /// Kernel vector of `Â(0)^H` normalized against `du` (Fourier coefficients
    /// of `u′_⋆`) so that `⟨du, â⟩ = 1`.
    pub fn adjoint_kernel(&self, du: &[c64]) -> Result<Vec<c64>> {
        let a0 = self.matrix(0.0)?;
        let adj: CMat = a0.entries.adjoint().to_owned();
        let (vals, vecs) = linalg::eig_sorted(adj.as_ref())?;
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&i, &j| vals[i].norm().total_cmp(&vals[j].norm()));
        let (i0, i1) = (order[0], order[1]);
        if vals[i0].norm() > 1e-6 || vals[i1].norm() < 1e-6 {
            return Err(Error::DegenerateKernel(format!(
                "eigenvalues nearest zero: {:.3e}, {:.3e}",
                vals[i0].norm(),
                vals[i1].norm()
            )));
        }
        let a: Vec<c64> = (0..vecs.nrows()).map(|r| vecs[(r, i0)]).collect();
        let s = pairing(du, &a);
        if s.norm() < 1e-12 {
            return Err(Error::DegenerateKernel("adjoint kernel orthogonal to u′".into()));
        }
        let alpha = c64::new(1.0, 0.0) / s.conj();
        Ok(a.iter().map(|z| z * alpha).collect())
    }
}

pub fn assemble_bloch(p: &PatternSolution, sigma: f64, m: usize) -> Result<BlochMatrix> {
    BlochOperator::new(p, m)?.matrix(sigma)
}

/// Full eigendecomposition with per-eigenvalue truncation-convergence flags.
#[derive(Debug, Clone)]
pub struct BlochSpectrum {
    pub sigma: f64,
    pub m: usize,
    pub values: Vec<c64>,
    pub vectors: CMat,
    /// `values[i]` has a partner within [`CONVERGENCE_TOL`] at order `M/2`.
    pub converged: Vec<bool>,
}

pub fn bloch_spectrum(p: &PatternSolution, sigma: f64, m: usize) -> Result<BlochSpectrum> {
    spectrum_of(&BlochOperator::new(p, m)?, sigma)
}

pub fn spectrum_of(op: &BlochOperator, sigma: f64) -> Result<BlochSpectrum> {
    let (values, vectors) = op.eig(sigma)?;
    let (coarse, _) = op.truncated(op.m() / 2).eig(sigma)?;
    let converged = values.iter().map(|l| coarse.iter().any(|c| (c - l).norm() <= CONVERGENCE_TOL)).collect();
    Ok(BlochSpectrum { sigma, m: op.m(), values, vectors, converged })
}

/// Outcome of the three spectral hypotheses on a σ-grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub hypothesis_i_ok: bool,
    pub hypothesis_ii_ok: bool,
    pub hypothesis_iii_ok: bool,
    /// Max real part over the grid points `σ ≠ 0` (all eigenvalues).
    pub max_real_part_away_from_zero: f64,
    /// `|λ(0)|` of the top eigenvalue.
    pub lambda0: f64,
    /// `|⟨e(0), u′_⋆⟩| / (‖e(0)‖‖u′_⋆‖)`.
    pub overlap0: f64,
    pub gamma1: f64,
    pub gamma0: Option<f64>,
    pub sigma_grid: Vec<f64>,
    /// Top real part at each grid point.
    pub top_real_parts: Vec<f64>,
    pub m: usize,
    pub d_fit: Option<f64>,
    pub d_formula: Option<f64>,
    pub relative_discrepancy: Option<f64>,
}

/// Thresholds shared by the report and its consistency check.
pub const LAMBDA0_TOL: f64 = 1e-8;
pub const OVERLAP_TOL: f64 = 1e-6;

impl StabilityReport {
    /// Booleans agree with the stored margins.
    pub fn is_consistent(&self) -> bool {
        let i = self.max_real_part_away_from_zero < 0.0;
        let ii = self.lambda0 <= LAMBDA0_TOL && self.overlap0 >= 1.0 - OVERLAP_TOL && self.gamma1 > 0.0;
        let iii = matches!(self.d_fit, Some(d) if d > 0.0);
        i == self.hypothesis_i_ok && ii == self.hypothesis_ii_ok && iii == self.hypothesis_iii_ok
    }
}

/// Symmetric σ-grid of `size` points on `[-1/2, 1/2]`.
pub fn sigma_grid(size: usize) -> Vec<f64> {
    let h = 1.0 / (size - 1) as f64;
    (0..size).map(|i| if 2 * i + 1 == size { 0.0 } else { -0.5 + i as f64 * h }).collect()
}

fn truncated_coeffs(f: &CellField, m: usize) -> Result<Vec<c64>> {
    Ok(fieldops::to_fourier(f, m)?.coeffs().to_vec())
}

pub fn verify_spectral_stability(p: &PatternSolution, grid_size: usize, m: usize) -> Result<StabilityReport> {
    if grid_size < 33 || grid_size % 2 == 0 {
        return Err(Error::Precondition(format!("σ-grid size {grid_size} must be odd and ≥ 33")));
    }
    let op = BlochOperator::new(p, m)?;
    let grid = sigma_grid(grid_size);
    let spectra = parallel::map(&grid, |&s| op.eig(s));
    let mut top = Vec::with_capacity(grid.len());
    let mut max_away = f64::NEG_INFINITY;
    let mut zero = None;
    for (s, r) in grid.iter().zip(spectra) {
        let (vals, vecs) = r?;
        top.push(vals[0].re);
        if *s == 0.0 {
            zero = Some((vals, vecs));
        } else {
            max_away = max_away.max(vals[0].re);
        }
    }
    let (vals, vecs) = zero.expect("odd grid contains σ = 0");
    let du = truncated_coeffs(&p.profile_dx, m)?;
    let e0: Vec<c64> = (0..vecs.nrows()).map(|r| vecs[(r, 0)]).collect();
    let overlap0 = pairing(&e0, &du).norm() * 2.0 * PI / (vnorm(&e0) * vnorm(&du));
    let lambda0 = vals[0].norm();
    let gamma1 = -vals[1].re;
    let ii = lambda0 <= LAMBDA0_TOL && overlap0 >= 1.0 - OVERLAP_TOL && gamma1 > 0.0;
    let (mut gamma0, mut d_fit, mut d_formula, mut rel) = (None, None, None, None);
    if ii {
        if let Ok(g0) = select_gamma0(&op, &du, gamma1) {
            gamma0 = Some(g0);
            if let Ok(b) = branch_with(&op, p, g0, 33, gamma1) {
                d_fit = Some(b.d_fit);
                d_formula = Some(b.d_formula);
                rel = Some((b.d_fit - b.d_formula).abs() / b.d_formula.abs());
            }
        }
    }
    Ok(StabilityReport {
        hypothesis_i_ok: max_away < 0.0,
        hypothesis_ii_ok: ii,
        hypothesis_iii_ok: matches!(d_fit, Some(d) if d > 0.0),
        max_real_part_away_from_zero: max_away,
        lambda0,
        overlap0,
        gamma1,
        gamma0,
        sigma_grid: grid,
        top_real_parts: top,
        m,
        d_fit,
        d_formula,
        relative_discrepancy: rel,
    })
}

/// Adjoint zero mode `u_ad` in physical space, `⟨u′_⋆, u_ad⟩ = 1`.
pub fn adjoint_zero_mode(p: &PatternSolution, m: usize) -> Result<CellField> {
    let op = BlochOperator::new(p, m)?;
    let du = truncated_coeffs(&p.profile_dx, m)?;
    let a = op.adjoint_kernel(&du)?;
    let u_ad = physical(&a, m, p.sys.n(), p.n_points())?;
    let odd = u_ad.oddness_residual();
    if odd > 1e-8 {
        return Err(Error::AlignmentError(format!("adjoint zero mode oddness residual {odd:.3e}")));
    }
    Ok(u_ad)
}

fn physical(coeffs: &[c64], m: usize, n: usize, n_points: usize) -> Result<CellField> {
    fieldops::from_fourier(&FourierField::from_coeffs(m, n, coeffs.to_vec())?, n_points)
}

/// Sampled critical eigenvalue curve with right and adjoint eigenvectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochBranch {
    pub sigmas: Vec<f64>,
    pub lambdas: Vec<c64>,
    /// `e(σ)`, gauged so that `e(0) ≈ û′_⋆`.
    pub eigvecs: Vec<FourierField>,
    /// `e*(σ)` with `⟨e(σ), e*(σ)⟩ = 1`.
    pub e_star: Vec<FourierField>,
    pub u_ad: CellField,
    pub u_ad_hat: FourierField,
    pub d_fit: f64,
    pub d_formula: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    /// Gap between `Re λ(σ)` and the rest of the spectrum.
    pub gaps: Vec<f64>,
    pub m: usize,
}

impl BlochBranch {
    pub fn lambda_at(&self, i: usize) -> c64 {
        self.lambdas[i]
    }

    /// `max |λ(σ) - λ(-σ)|` over the (symmetric) grid.
    pub fn evenness_residual(&self) -> f64 {
        let n = self.sigmas.len();
        (0..n).map(|i| (self.lambdas[i] - self.lambdas[n - 1 - i]).norm()).fold(0.0, f64::max)
    }

    pub fn imaginary_residual(&self) -> f64 {
        self.lambdas.iter().map(|l| l.im.abs()).fold(0.0, f64::max)
    }

    /// `max |⟨e(σ), e*(σ)⟩ - 1|`.
    pub fn biorthogonality_residual(&self) -> f64 {
        self.eigvecs
            .iter()
            .zip(&self.e_star)
            .map(|(e, s)| (pairing(e.coeffs(), s.coeffs()) - 1.0).norm())
            .fold(0.0, f64::max)
    }

    /// `-2dσ² < Re λ(σ) < -(d/2)σ²` at every `σ ≠ 0` of the window.
    pub fn two_sided_bound_holds(&self, d: f64) -> bool {
        self.sigmas.iter().zip(&self.lambdas).filter(|(s, _)| **s != 0.0).all(|(s, l)| {
            let s2 = s * s;
            -2.0 * d * s2 < l.re && l.re < -0.5 * d * s2
        })
    }

    pub fn index_of_zero(&self) -> usize {
        self.sigmas.len() / 2
    }
}

struct TrackPoint {
    sigma: f64,
    lambda: c64,
    e: Vec<c64>,
    e_star: Vec<c64>,
    gap: f64,
}

/// Follows the eigenpair of maximal overlap with `prev` along `sigmas`.
fn track(op: &BlochOperator, sigmas: &[f64], start: &[c64], start_lambda: c64) -> Result<Vec<TrackPoint>> {
    let mut prev = start.to_vec();
    let mut prev_l = start_lambda;
    let mut out = Vec::with_capacity(sigmas.len());
    for &s in sigmas {
        let (vals, vecs) = op.eig(s)?;
        let dim = vals.len();
        let pn = vnorm(&prev);
        let overlaps: Vec<f64> = (0..dim)
            .map(|i| (0..dim).map(|r| prev[r].conj() * vecs[(r, i)]).sum::<c64>().norm() / pn)
            .collect();
        let best = overlaps.iter().cloned().fold(0.0, f64::max);
        if best < 0.5 {
            return Err(Error::BranchJump { sigma: s, overlap: best });
        }
        let i = (0..dim)
            .filter(|&i| overlaps[i] >= best - 1e-3)
            .min_by(|&a, &b| (vals[a] - prev_l).norm().total_cmp(&(vals[b] - prev_l).norm()))
            .expect("nonempty");
        let v: Vec<c64> = (0..dim).map(|r| vecs[(r, i)]).collect();
        let proj: c64 = prev.iter().zip(&v).map(|(p, x)| p.conj() * x).sum();
        let alpha = c64::new(pn * pn, 0.0) / proj;
        let e: Vec<c64> = v.iter().map(|x| x * alpha).collect();
        let inv = linalg::inverse(vecs.as_ref());
        let ac = alpha.conj();
        let e_star: Vec<c64> = (0..dim).map(|r| inv[(i, r)].conj() * (2.0 * PI) / ac).collect();
        let rest = (0..dim).filter(|&j| j != i).map(|j| vals[j].re).fold(f64::NEG_INFINITY, f64::max);
        out.push(TrackPoint { sigma: s, lambda: vals[i], e: e.clone(), e_star, gap: vals[i].re - rest });
        prev = e;
        prev_l = vals[i];
    }
    Ok(out)
}

/// Largest `γ₀ ≤ 0.25` (on a grid of step `0.25/32`) such that the branch
/// stays separated from the rest of the spectrum by at least `γ₁/2`.
pub fn select_gamma0(op: &BlochOperator, du: &[c64], gamma1: f64) -> Result<f64> {
    let steps = 32;
    let sigmas: Vec<f64> = (0..=steps).map(|k| GAMMA0_MAX * k as f64 / steps as f64).collect();
    let pts = track(op, &sigmas, du, ZERO)?;
    let mut g0 = 0.0;
    for p in &pts {
        if p.gap < 0.5 * gamma1 {
            break;
        }
        g0 = p.sigma;
    }
    if g0 == 0.0 {
        return Err(Error::OutOfRegime(format!("spectral gap below γ₁/2 = {} at the first step", 0.5 * gamma1)));
    }
    Ok(g0)
}

/// Critical branch on `[-γ₀, γ₀]` with `samples` (odd, ≥ 9) points.
pub fn critical_branch(p: &PatternSolution, gamma0: f64, samples: usize, m: usize) -> Result<BlochBranch> {
    let op = BlochOperator::new(p, m)?;
    let (vals, _) = op.eig(0.0)?;
    branch_with(&op, p, gamma0, samples, -vals[1].re)
}

/// Critical branch on the adaptively chosen window.
pub fn critical_branch_auto(p: &PatternSolution, samples: usize, m: usize) -> Result<BlochBranch> {
    let op = BlochOperator::new(p, m)?;
    let (vals, _) = op.eig(0.0)?;
    let gamma1 = -vals[1].re;
    let du = truncated_coeffs(&p.profile_dx, m)?;
    let g0 = select_gamma0(&op, &du, gamma1)?;
    branch_with(&op, p, g0, samples, gamma1)
}

fn branch_with(op: &BlochOperator, p: &PatternSolution, gamma0: f64, samples: usize, gamma1: f64) -> Result<BlochBranch> {
    if samples < 9 || samples % 2 == 0 {
        return Err(Error::Precondition(format!("branch samples {samples} must be odd and ≥ 9")));
    }
    if !(gamma0 > 0.0 && gamma0 <= 0.5) {
        return Err(Error::Precondition(format!("window half-width {gamma0} not in (0, 1/2]")));
    }
    let m = op.m();
    let n = op.n_species();
    let half = samples / 2;
    let du = truncated_coeffs(&p.profile_dx, m)?;
    let pos: Vec<f64> = (0..=half).map(|k| gamma0 * k as f64 / half as f64).collect();
    let neg: Vec<f64> = pos.iter().map(|s| -s).collect();
    let (right, left) = {
        let both = parallel::map(&[&pos, &neg], |s| track(op, s, &du, ZERO));
        let mut it = both.into_iter();
        (it.next().expect("two")?, it.next().expect("two")?)
    };
    let mut pts: Vec<TrackPoint> = left.into_iter().skip(1).rev().collect();
    pts.extend(right);
    let a = op.adjoint_kernel(&du)?;
    let u_ad = physical(&a, m, n, p.n_points())?;
    let u_ad_hat = FourierField::from_coeffs(m, n, a.clone())?;
    let formula = formula_with(op, p, &a)?;
    let ff = |v: Vec<c64>| FourierField::from_coeffs(m, n, v);
    let sigmas: Vec<f64> = pts.iter().map(|t| t.sigma).collect();
    let lambdas: Vec<c64> = pts.iter().map(|t| t.lambda).collect();
    let gaps = pts.iter().map(|t| t.gap).collect();
    let mut eigvecs = Vec::with_capacity(pts.len());
    let mut e_star = Vec::with_capacity(pts.len());
    for t in pts {
        eigvecs.push(ff(t.e)?);
        e_star.push(ff(t.e_star)?);
    }
    let mut branch = BlochBranch {
        sigmas,
        lambdas,
        eigvecs,
        e_star,
        u_ad,
        u_ad_hat,
        d_fit: f64::NAN,
        d_formula: formula.d,
        gamma0,
        gamma1,
        gaps,
        m,
    };
    branch.d_fit = diffusion_coefficient_fit(&branch)?.d;
    Ok(branch)
}

/// Least-squares fit `λ ≈ -dσ² + c₃σ³ + c₄σ⁴`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchFit {
    pub d: f64,
    pub c3: f64,
    pub c4: f64,
    pub rms: f64,
    /// Half-width of the σ-range used.
    pub window: f64,
}

/// Fits every supplied sample. Residual rms above `1e-3·max|λ|` is a `PoorFit`.
pub fn fit_branch(sigmas: &[f64], lambdas: &[f64]) -> Result<BranchFit> {
    if sigmas.len() < 9 || lambdas.len() != sigmas.len() {
        return Err(Error::WindowError(format!("{} branch samples, need ≥ 9", sigmas.len())));
    }
    let a = Mat::from_fn(sigmas.len(), 3, |i, j| {
        let s = sigmas[i];
        match j {
            0 => -s * s,
            1 => s * s * s,
            _ => s * s * s * s,
        }
    });
    let c = linalg::lstsq_real(&a, lambdas);
    let rms = (sigmas
        .iter()
        .zip(lambdas)
        .map(|(s, l)| (l - (-c[0] * s * s + c[1] * s.powi(3) + c[2] * s.powi(4))).powi(2))
        .sum::<f64>()
        / sigmas.len() as f64)
        .sqrt();
    let scale = lambdas.iter().map(|l| l.abs()).fold(0.0, f64::max);
    if !(rms <= 1e-3 * scale + 1e-14) {
        return Err(Error::PoorFit(format!("branch fit rms {rms:.3e} against max |λ| {scale:.3e}")));
    }
    let window = sigmas.iter().map(|s| s.abs()).fold(0.0, f64::max);
    Ok(BranchFit { d: c[0], c3: c[1], c4: c[2], rms, window })
}

/// Fit on the inner half `|σ| ≤ γ₀/2` of the tracked window, which keeps the
/// sixth-order term of the even branch below the fit's resolution.
pub fn diffusion_coefficient_fit(branch: &BlochBranch) -> Result<BranchFit> {
    let w = 0.5 * branch.gamma0 * (1.0 + 1e-12);
    let (mut s, mut l): (Vec<f64>, Vec<f64>) = branch
        .sigmas
        .iter()
        .zip(&branch.lambdas)
        .filter(|(s, _)| s.abs() <= w)
        .map(|(s, l)| (*s, l.re))
        .unzip();
    if s.len() < 9 {
        s = branch.sigmas.clone();
        l = branch.lambdas.iter().map(|z| z.re).collect();
    }
    fit_branch(&s, &l)
}

/// `d` from the first-order corrector `e₁` of the critical eigenvector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionFormula {
    pub d: f64,
    /// `|⟨-2Du″_⋆, u_ad⟩|`.
    pub fredholm: f64,
    pub e1: CellField,
    pub e1_evenness: f64,
    /// `‖Â(0)e₁ + 2D û″_⋆‖₂`.
    pub e1_residual: f64,
}

pub fn diffusion_coefficient_formula(p: &PatternSolution, u_ad: &CellField, m: usize) -> Result<DiffusionFormula> {
    let op = BlochOperator::new(p, m)?;
    let a = truncated_coeffs(u_ad, m)?;
    formula_with(&op, p, &a)
}

fn formula_with(op: &BlochOperator, p: &PatternSolution, a: &[c64]) -> Result<DiffusionFormula> {
    let (m, n) = (op.m(), op.n_species());
    let dim = op.dim();
    let du = truncated_coeffs(&p.profile_dx, m)?;
    let dduu = truncated_coeffs(&p.profile_dxx, m)?;
    let rhs: Vec<c64> = (0..dim).map(|i| dduu[i] * (-2.0 * op.diffusion()[i % n])).collect();
    let fred = pairing(&rhs, a).norm();
    let scale = (vnorm(&rhs) * vnorm(a) / (2.0 * PI)).max(1.0);
    if fred > 1e-8 * scale {
        return Err(Error::FredholmError(fred));
    }
    let a0 = op.matrix(0.0)?.entries;
    let q = linalg::complement_basis(a);
    let aq = &a0 * &q;
    let b = Mat::from_fn(dim, 1, |i, _| rhs[i]);
    let y = linalg::lstsq(aq.as_ref(), b.as_ref());
    let e1m = &q * &y;
    let e1: Vec<c64> = (0..dim).map(|i| e1m[(i, 0)]).collect();
    let res: Vec<c64> = apply_vec(&a0, &e1).iter().zip(&rhs).map(|(x, r)| x - r).collect();
    let e1_residual = vnorm(&res);
    let mut acc = ZERO;
    for i in 0..dim {
        let l = (i / n) as f64 - m as f64;
        let c = i % n;
        acc += (c64::new(0.0, 2.0 * l) * e1[i] + du[i]) * op.diffusion()[c] * a[i].conj();
    }
    let d = (acc / (2.0 * PI)).re;
    let e1f = physical(&e1, m, n, p.n_points())?;
    let e1_evenness = e1f.evenness_residual();
    if e1_evenness > 1e-8 * fieldops::lp_norm(&e1f, fieldops::Norm::Inf).max(1.0) {
        return Err(Error::AlignmentError(format!("corrector e₁ evenness residual {e1_evenness:.3e}")));
    }
    Ok(DiffusionFormula { d, fredholm: fred, e1: e1f, e1_evenness, e1_residual })
}

/// Eigenvalues of the physical-space collocation discretization of `B(σ)` on
/// `n_points` nodes, sorted by descending real part.
pub fn collocation_spectrum(p: &PatternSolution, sigma: f64, n_points: usize) -> Result<Vec<c64>> {
    let q = p.resample(n_points);
    let n = q.n_species();
    let x = fieldops::grid(n_points);
    let np = n_points as i64;
    // (∂ + iσ)² as a dense Fourier multiplier
    let d2 = Mat::from_fn(n_points, n_points, |i, j| {
        let dx = x[i] - x[j];
        let mut z = ZERO;
        for k in -np / 2..np / 2 {
            z += c64::from_polar(-(k as f64 + sigma).powi(2), k as f64 * dx);
        }
        z / n_points as f64
    });
    let jac = q.jacobian_field();
    let dim = n * n_points;
    let a = Mat::from_fn(dim, dim, |i, j| {
        let (r, mi) = (i / n_points, i % n_points);
        let (c, mj) = (j / n_points, j % n_points);
        let mut z = if r == c { d2[(mi, mj)] * q.sys.diffusion[r] } else { ZERO };
        if mi == mj {
            z += jac[mi][r * n + c];
        }
        z
    });
    Ok(linalg::eig_sorted(a.as_ref())?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::builtin;
    use crate::pattern::{find_pattern, PatternOptions};
    use std::collections::BTreeMap;
    use std::sync::OnceLock;

    fn pattern() -> &'static PatternSolution {
        static P: OnceLock<PatternSolution> = OnceLock::new();
        P.get_or_init(|| {
            let p: BTreeMap<String, f64> = [("a".to_string(), 2.0), ("b".to_string(), 3.2)].into_iter().collect();
            let s = builtin("brusselator", &p, &[1.0, 8.0]).unwrap();
            find_pattern(&s, "b", [2.0, 4.0], 3.2, &PatternOptions::default()).unwrap().1
        })
    }

    fn constant(c: [f64; 4], d: [f64; 2]) -> BlochOperator {
        let jac = vec![c.to_vec(); 32];
        BlochOperator::from_jacobian(&d, &jac, 8).unwrap()
    }

    #[test]
    fn constant_coefficients_block_diagonal() {
        let c = [0.3, -1.2, 0.7, -2.0];
        let d = [1.0, 4.0];
        let op = constant(c, d);
        for &s in &[0.0, 0.17, -0.5] {
            let (vals, _) = op.eig(s).unwrap();
            let mut expect = Vec::new();
            for l in -8i64..=8 {
                let k2 = (s + l as f64).powi(2);
                let a = Mat::from_fn(2, 2, |i, j| c64::new(c[i * 2 + j] - if i == j { k2 * d[i] } else { 0.0 }, 0.0));
                expect.extend(linalg::eig_sorted(a.as_ref()).unwrap().0);
            }
            expect.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
            for (x, y) in vals.iter().zip(&expect) {
                assert!((x - y).norm() < 1e-10 * (1.0 + y.norm()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn hermitian_for_self_adjoint_data() {
        let op = constant([-1.0, 0.4, 0.4, -3.0], [1.0, 1.0]);
        assert!(op.matrix(0.31).unwrap().hermitian_residual() < 1e-14);
        let op = constant([-1.0, 0.4, 0.1, -3.0], [1.0, 1.0]);
        assert!(op.matrix(0.31).unwrap().hermitian_residual() > 0.1);
    }

    #[test]
    fn preconditions() {
        let p = pattern();
        assert!(matches!(assemble_bloch(p, 0.6, 16), Err(Error::Precondition(_))));
        assert!(matches!(assemble_bloch(p, 0.0, 4), Err(Error::Precondition(_))));
        assert!(matches!(verify_spectral_stability(p, 3, 16), Err(Error::Precondition(_))));
        assert!(matches!(verify_spectral_stability(p, 34, 16), Err(Error::Precondition(_))));
    }

    #[test]
    fn zero_mode_at_sigma_zero() {
        let p = pattern();
        let a = assemble_bloch(p, 0.0, 48).unwrap();
        let du = fieldops::to_fourier(&p.profile_dx, 48).unwrap();
        let r = a.apply(&du).unwrap();
        let rn = vnorm(r.coeffs());
        assert!(rn <= 1e-7 * vnorm(du.coeffs()), "{rn}");
        let sp = bloch_spectrum(p, 0.0, 48).unwrap();
        assert!(sp.values[0].norm() <= 1e-8);
        assert!(sp.values[1].re < -0.3);
        assert!(sp.converged[..5].iter().all(|&c| c));
    }

    #[test]
    fn spectrum_symmetries() {
        let p = pattern();
        let op = BlochOperator::new(p, 32).unwrap();
        let (a, _) = op.eig(0.3).unwrap();
        let (b, _) = op.eig(-0.3).unwrap();
        for z in &a {
            let best = b.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-8, "{z}");
        }
        let (half, _) = op.eig(0.5).unwrap();
        assert!(half[0].re < 0.0);
    }

    #[test]
    fn truncation_and_collocation_agree() {
        let p = pattern();
        for &s in &[0.0, 0.21] {
            let (a, _) = BlochOperator::new(p, 24).unwrap().eig(s).unwrap();
            let (b, _) = BlochOperator::new(p, 48).unwrap().eig(s).unwrap();
            let c = collocation_spectrum(p, s, 96).unwrap();
            let nearest = |set: &[c64], z: c64| set.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
            for z in &b[..5] {
                assert!(nearest(&a, *z) <= 1e-6, "{s}: {z}");
                assert!(nearest(&c, *z) <= 1e-6, "{s}: {z}");
            }
        }
    }

    #[test]
    fn adjoint_mode_is_odd_and_normalized() {
        let p = pattern();
        let u_ad = adjoint_zero_mode(p, 48).unwrap();
        assert!(u_ad.oddness_residual() <= 1e-8);
        let ip = fieldops::inner_product(&p.profile_dx, &u_ad).unwrap();
        assert!((ip - 1.0).abs() <= 1e-9, "{ip}");
    }

    #[test]
    fn adjoint_of_self_adjoint_operator() {
        // ∂² + μ + 0.6 cos 2x with μ tuned so that the odd ground mode sits at 0
        let n_points = 64;
        let x = fieldops::grid(n_points);
        let base: Vec<Vec<f64>> = x.iter().map(|x| vec![0.6 * (2.0 * x).cos()]).collect();
        let op = BlochOperator::from_jacobian(&[1.0], &base, 12).unwrap();
        let (vals, vecs) = op.eig(0.0).unwrap();
        let odd = (0..vals.len())
            .find(|&i| {
                let v = |l: i64| vecs[((l + 12) as usize, i)];
                (v(1) + v(-1)).norm() < 1e-8 && v(1).norm() > 0.1
            })
            .unwrap();
        let mu = -vals[odd].re;
        let jac: Vec<Vec<f64>> = base.iter().map(|q| vec![q[0] + mu]).collect();
        let op = BlochOperator::from_jacobian(&[1.0], &jac, 12).unwrap();
        let kernel: Vec<c64> = (0..vecs.nrows()).map(|r| vecs[(r, odd)]).collect();
        let a = op.adjoint_kernel(&kernel).unwrap();
        // self-adjoint: â ∝ kernel, normalized against it
        let s = pairing(&kernel, &kernel);
        for (x, k) in a.iter().zip(&kernel) {
            assert!((x - k / s.conj()).norm() < 1e-8);
        }
        assert!((pairing(&kernel, &a) - 1.0).norm() < 1e-12);
    }

    #[test]
    fn fit_recovers_synthetic_branches() {
        let s: Vec<f64> = (0..17).map(|i| -0.2 + 0.025 * i as f64).collect();
        let l: Vec<f64> = s.iter().map(|s| -3.0 * s * s).collect();
        assert!((fit_branch(&s, &l).unwrap().d - 3.0).abs() < 1e-10);
        let l: Vec<f64> = s.iter().map(|s| -3.0 * s * s + 5.0 * s.powi(4)).collect();
        let f = fit_branch(&s, &l).unwrap();
        assert!((f.d - 3.0).abs() < 1e-8 && (f.c4 - 5.0).abs() < 1e-6);
        let noisy: Vec<f64> = s.iter().enumerate().map(|(i, _)| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(matches!(fit_branch(&s, &noisy), Err(Error::PoorFit(_))));
        assert!(fit_branch(&s[..5], &l[..5]).is_err());
    }

    #[test]
    fn branch_and_diffusion_coefficient() {
        let p = pattern();
        let b = critical_branch_auto(p, 33, 48).unwrap();
        assert!(b.lambdas[b.index_of_zero()].norm() <= 1e-8);
        assert!(b.evenness_residual() <= 1e-8, "{}", b.evenness_residual());
        assert!(b.imaginary_residual() <= 1e-8);
        assert!(b.biorthogonality_residual() <= 1e-8);
        assert!(b.gamma0 > 0.0 && b.gamma0 <= GAMMA0_MAX);
        assert!((b.gamma1 - 0.352450490505).abs() < 1e-8, "{}", b.gamma1);
        // numpy/scipy dense-eigensolver oracle at M = 48
        assert!((b.d_formula - 2.0232375993223).abs() < 1e-8, "{}", b.d_formula);
        assert!((b.d_fit - b.d_formula).abs() <= 1e-3 * b.d_formula);
        assert!(b.two_sided_bound_holds(b.d_formula));
        let f = diffusion_coefficient_formula(p, &b.u_ad, 48).unwrap();
        assert!(f.fredholm <= 1e-8 && f.e1_evenness <= 1e-8);
        assert!((f.d - b.d_formula).abs() < 1e-10);
        let e0 = &b.eigvecs[b.index_of_zero()];
        let du = fieldops::to_fourier(&p.profile_dx, 48).unwrap();
        let diff: Vec<c64> = e0.coeffs().iter().zip(du.coeffs()).map(|(a, b)| a - b).collect();
        assert!(vnorm(&diff) < 1e-8 * vnorm(du.coeffs()));
    }

    #[test]
    fn stability_report() {
        let p = pattern();
        let r = verify_spectral_stability(p, 33, 32).unwrap();
        assert!(r.hypothesis_i_ok && r.hypothesis_ii_ok && r.hypothesis_iii_ok, "{r:?}");
        assert!(r.is_consistent());
        assert!(r.relative_discrepancy.unwrap() <= 1e-3);
        let back: StabilityReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        let mut bad = r.clone();
        bad.hypothesis_i_ok = false;
        assert!(!bad.is_consistent());
    }

    #[test]
    fn eckhaus_unstable_wavenumber() {
        let p = pattern();
        let sys = p.sys.with_scaled_diffusion(0.64);
        let q = crate::pattern::solve_pattern(&sys, &p.profile, 0.8 * p.wavenumber, &PatternOptions::default()).unwrap();
        let r = verify_spectral_stability(&q, 33, 24).unwrap();
        assert!(!r.hypothesis_i_ok);
        assert!(r.max_real_part_away_from_zero > 0.0);
        assert!(r.is_consistent());
        // the instability is a sideband one: positive growth already at the smallest σ
        let (vals, _) = BlochOperator::new(&q, 24).unwrap().eig(1.0 / 32.0).unwrap();
        assert!(vals[0].re > 0.0);
    }
}
