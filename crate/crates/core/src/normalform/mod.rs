//! Lattice phase coordinates: the chopping map, cutoff `φ`, corrector `ψ`,
//! stencil `E`, the nonlinear decomposition `v ↦ (θ, W)` and the linear
//! operator in these coordinates.

mod coords;
mod lattice;

pub use coords::*;
pub use lattice::{chop, chop_values, matching_residual, periodic_coeffs, unchop, CellMoments, ChoppedField, LineField};

use std::f64::consts::PI;

use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldops::{self, CellField};
use crate::pattern::PatternSolution;

/// Shape of the smooth bumps `exp(-c/(1-s²))` behind `φ` and `ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierOptions {
    /// `c` in `exp(-c/(1-s²))`.
    pub sharpness: f64,
    /// Half-width of the `φ` transition, as a fraction of `π`.
    pub width: f64,
    /// Half-width of the support of `ψ`, as a fraction of `π`.
    pub psi_support: f64,
    /// Grid used to compute the Fourier series of the mollifier.
    pub fine_points: usize,
}

impl Default for MollifierOptions {
    fn default() -> Self {
        MollifierOptions { sharpness: 12.0, width: 0.5, psi_support: 0.9, fine_points: 4096 }
    }
}

fn bump(s: f64, c: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-c / (1.0 - s * s)).exp()
    }
}

/// Immutable data shared by every lattice operation.
#[derive(Debug, Clone)]
pub struct NormalFormContext {
    pub pattern: PatternSolution,
    pub u_ad: CellField,
    pub u_ad_dx: CellField,
    /// Odd cutoff, `±1/2` for `|x| ≥ width·π` (one species).
    pub phi: CellField,
    pub psi: CellField,
    pub psi_dx: CellField,
    /// `E_{-1}, E_0, E_1`.
    pub stencil: [CellField; 3],
    pub mollifier: MollifierOptions,
    zeta: Vec<f64>,
    k: usize,
    u_hat: Vec<Vec<c64>>,
    a_hat: Vec<Vec<c64>>,
    da_hat: Vec<Vec<c64>>,
    // C(δ) = ⟨u_⋆(·-δ), u_ad⟩ = Re Σ_m cc[m+K] e^{-imδ}
    cc: Vec<c64>,
    gamma: Vec<f64>,
    jac: Vec<Vec<f64>>,
}

pub fn build_context(p: &PatternSolution, u_ad: &CellField) -> Result<NormalFormContext> {
    build_context_with(p, u_ad, p.n_points(), MollifierOptions::default())
}

/// Context on an `n_points` cell grid (pattern and `u_ad` are resampled).
pub fn build_context_with(
    p: &PatternSolution,
    u_ad: &CellField,
    n_points: usize,
    opts: MollifierOptions,
) -> Result<NormalFormContext> {
    let pattern = if p.n_points() == n_points { p.clone() } else { p.resample(n_points) };
    let mut u_ad = if u_ad.n_points() == n_points { u_ad.clone() } else { fieldops::resample(u_ad, n_points)? };
    let n = pattern.n_species();
    if u_ad.n_species() != n {
        return Err(Error::ShapeError(format!("u_ad has {} species, pattern {n}", u_ad.n_species())));
    }
    let norm = fieldops::inner_product(&pattern.profile_dx, &u_ad)?;
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::Precondition(format!("⟨u′, u_ad⟩ = {norm}, expected 1")));
    }
    u_ad = u_ad.scaled(1.0 / norm);
    if !(opts.width > 0.0 && opts.width < 1.0 && opts.psi_support > 0.0 && opts.psi_support < 1.0) {
        return Err(Error::Precondition("mollifier widths must lie in (0, 1)".into()));
    }
    let x = fieldops::grid(n_points);
    let (phi, zeta) = cutoff(&x, opts)?;
    let eta_psi = CellField::from_fn(n_points, 1, |_, x| bump(x / (opts.psi_support * PI), opts.sharpness));
    let mut weighted = CellField::zeros(n_points, n);
    for c in 0..n {
        let vals: Vec<f64> = eta_psi.component(0).iter().zip(u_ad.component(c)).map(|(e, a)| e * a).collect();
        weighted.component_mut(c).copy_from_slice(&vals);
    }
    let denom = fieldops::inner_product(&weighted, &u_ad)?;
    if denom.abs() < 1e-12 {
        return Err(Error::CorrectorError(format!("⟨η_ψ u_ad, u_ad⟩ = {denom:.3e}")));
    }
    let psi = weighted.scaled(1.0 / denom);
    let psi_dx = fieldops::differentiate(&psi, 1)?;
    let u_ad_dx = fieldops::differentiate(&u_ad, 1)?;
    let du = &pattern.profile_dx;
    let stencil_row = |wpsi: f64, wu: &dyn Fn(usize) -> f64| {
        let mut e = CellField::zeros(n_points, n);
        for c in 0..n {
            for m in 0..n_points {
                e.component_mut(c)[m] = wpsi * psi.at(c, m) + wu(m) * du.at(c, m);
            }
        }
        e
    };
    let ph = phi.component(0);
    let stencil = [
        stencil_row(0.25, &|m| -(0.25 + 0.5 * ph[m])),
        stencil_row(-0.5, &|_| -0.5),
        stencil_row(0.25, &|m| -(0.25 - 0.5 * ph[m])),
    ];
    let k = (n_points / 2 - 1).min(40);
    let u_hat = periodic_coeffs(&pattern.profile, k);
    let a_hat = periodic_coeffs(&u_ad, k);
    let da_hat: Vec<Vec<c64>> = a_hat
        .iter()
        .map(|ac| ac.iter().enumerate().map(|(i, z)| z * c64::new(0.0, i as f64 - k as f64)).collect())
        .collect();
    let cc = (0..2 * k + 1).map(|i| (0..n).map(|c| u_hat[c][i] * a_hat[c][i].conj()).sum::<c64>() / (2.0 * PI)).collect();
    let gamma = (0..n).map(|c| pattern.sys.diffusion[c] * u_ad_dx.at(c, 0)).collect();
    let jac = pattern.jacobian_field();
    Ok(NormalFormContext {
        pattern,
        u_ad,
        u_ad_dx,
        phi,
        psi,
        psi_dx,
        stencil,
        mollifier: opts,
        zeta,
        k,
        u_hat,
        a_hat,
        da_hat,
        cc,
        gamma,
        jac,
    })
}

// φ on the cell grid and ζ = φ - x/2π (periodic and smooth).
fn cutoff(x: &[f64], opts: MollifierOptions) -> Result<(CellField, Vec<f64>)> {
    let nf = opts.fine_points;
    let w = opts.width * PI;
    let fine: Vec<f64> = fieldops::grid(nf).iter().map(|y| bump(y / w, opts.sharpness)).collect();
    let mass = 2.0 * PI / nf as f64 * fine.iter().sum::<f64>();
    if !(mass > 0.0) {
        return Err(Error::CorrectorError("mollifier has no mass on the fine grid".into()));
    }
    let eta_hat = fieldops::cell_spectrum(&fine);
    let n = x.len();
    let half = |xm: f64| -> f64 {
        if xm.abs() >= w {
            return 0.5 * xm.signum();
        }
        let mut z = 0.0;
        for kk in 1..nf / 2 {
            let zk = eta_hat[kk] / mass / c64::new(0.0, kk as f64);
            z += (zk * c64::from_polar(1.0, kk as f64 * xm)).re;
        }
        z / PI + xm / (2.0 * PI)
    };
    let mut phi = vec![0.0; n];
    phi[0] = -0.5;
    for (m, &xm) in x.iter().enumerate().skip(1) {
        let v = half(xm.abs());
        phi[m] = if xm > 0.0 { v } else if xm < 0.0 { -v } else { 0.0 };
    }
    let zeta = x.iter().zip(&phi).map(|(xm, p)| p - xm / (2.0 * PI)).collect();
    Ok((CellField::from_values(n, 1, phi)?, zeta))
}

impl NormalFormContext {
    pub fn n_points(&self) -> usize {
        self.pattern.n_points()
    }

    pub fn n_species(&self) -> usize {
        self.pattern.n_species()
    }

    /// Number of Fourier modes used in cell pairings.
    pub fn pairing_modes(&self) -> usize {
        self.k
    }

    pub fn u_hat(&self) -> &[Vec<c64>] {
        &self.u_hat
    }

    pub fn u_ad_hat(&self) -> &[Vec<c64>] {
        &self.a_hat
    }

    pub fn u_ad_dx_hat(&self) -> &[Vec<c64>] {
        &self.da_hat
    }

    /// `D u′_ad(π)` per species.
    pub fn boundary_weight(&self) -> &[f64] {
        &self.gamma
    }

    /// Row-major `f′(u_⋆(x_m))`.
    pub fn jacobian_field(&self) -> &[Vec<f64>] {
        &self.jac
    }

    /// `C(δ) = ⟨u_⋆(· - δ), u_ad⟩` and its derivative.
    pub fn overlap(&self, delta: f64) -> (f64, f64) {
        let k = self.k as i64;
        let (mut c, mut dc) = (0.0, 0.0);
        for m in -k..=k {
            let z = self.cc[(m + k) as usize] * c64::from_polar(1.0, -(m as f64) * delta);
            c += z.re;
            dc += (z * c64::new(0.0, -(m as f64))).re;
        }
        (c, dc)
    }

    /// `∫ φ h dx` over the cell for periodic `h`, split as
    /// `∫ ζ h + (1/2π) ∫ x h` with the second term summed exactly in Fourier space.
    pub fn phi_integral(&self, h: &[f64]) -> f64 {
        let n = h.len();
        let dx = 2.0 * PI / n as f64;
        let smooth: f64 = dx * self.zeta.iter().zip(h).map(|(z, v)| z * v).sum::<f64>();
        let s = fieldops::dft_real(h);
        let mut lin = c64::new(0.0, 0.0);
        for (k, z) in s.iter().enumerate() {
            let l = fieldops::signed_mode(k, n);
            if l == 0 || 2 * k == n {
                continue;
            }
            lin += z / c64::new(0.0, l as f64);
        }
        smooth + (lin.re * dx) / (2.0 * PI)
    }
}

/// Uniform-grid quadrature, exact for periodic band-limited integrands.
pub(crate) fn trapz(h: &[f64]) -> f64 {
    2.0 * PI / h.len() as f64 * h.iter().sum::<f64>()
}

#[cfg(test)]
mod tests;
