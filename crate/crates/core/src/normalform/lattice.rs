//! Fields on the periodic large domain of `J` cells and their chopped form.
//!
//! The large-domain grid is `X_g = -π + 2πg/N`, `g = 0..JN`; cell `j` holds
//! the points `g = jN..(j+1)N`, i.e. `X = 2πj + x` with `x` on the cell grid.

use std::f64::consts::PI;

use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldops::{self, CellField};

/// Real field with `n` species on `J` cells of `N` points, species-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineField {
    n_points: usize,
    cells: usize,
    n_species: usize,
    values: Vec<f64>,
}

impl LineField {
    pub fn zeros(n_points: usize, cells: usize, n_species: usize) -> Self {
        LineField { n_points, cells, n_species, values: vec![0.0; n_points * cells * n_species] }
    }

    /// `values.len()` must be a multiple of `n_species·n_points`.
    pub fn from_values(n_points: usize, n_species: usize, values: Vec<f64>) -> Result<Self> {
        if n_points < 16 || n_points % 2 != 0 {
            return Err(Error::ShapeError(format!("cell grid size {n_points} must be even and at least 16")));
        }
        let per = n_points * n_species;
        if values.is_empty() || values.len() % per != 0 {
            return Err(Error::AlignmentError(format!(
                "{} values do not tile cells of {n_points} points × {n_species} species",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("line field".into()));
        }
        Ok(LineField { n_points, cells: values.len() / per, n_species, values })
    }

    /// Samples `f(c, X)` on the large-domain grid.
    pub fn from_fn(n_points: usize, cells: usize, n_species: usize, f: impl Fn(usize, f64) -> f64) -> Self {
        let len = n_points * cells;
        let mut values = Vec::with_capacity(len * n_species);
        for c in 0..n_species {
            values.extend((0..len).map(|g| f(c, -PI + 2.0 * PI * g as f64 / n_points as f64)));
        }
        LineField { n_points, cells, n_species, values }
    }

    /// The cell profile repeated on every cell.
    pub fn tiled(cell: &CellField, cells: usize) -> Self {
        let n = cell.n_points();
        let mut values = Vec::with_capacity(n * cells * cell.n_species());
        for c in 0..cell.n_species() {
            for _ in 0..cells {
                values.extend_from_slice(cell.component(c));
            }
        }
        LineField { n_points: n, cells, n_species: cell.n_species(), values }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn len(&self) -> usize {
        self.n_points * self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let l = self.len();
        &self.values[c * l..(c + 1) * l]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let l = self.len();
        &mut self.values[c * l..(c + 1) * l]
    }

    pub fn axpy(&self, s: f64, other: &LineField) -> LineField {
        let mut out = self.clone();
        out.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += s * b);
        out
    }

    pub fn scaled(&self, s: f64) -> LineField {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// `L²` over the whole domain, all species.
    pub fn norm_l2(&self) -> f64 {
        let h = 2.0 * PI / self.n_points as f64;
        (h * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// Spectral `∂ₓ^order` on the large domain (period `2πJ`).
    pub fn differentiate(&self, order: u32) -> LineField {
        let len = self.len();
        let mut out = self.clone();
        for c in 0..self.n_species {
            let mut s = fieldops::dft_real(self.component(c));
            for (k, z) in s.iter_mut().enumerate() {
                let kappa = fieldops::signed_mode(k, len) as f64 / self.cells as f64;
                *z *= match order {
                    1 if 2 * k == len => c64::new(0.0, 0.0),
                    1 => c64::new(0.0, kappa),
                    _ => c64::new(-kappa * kappa, 0.0),
                };
            }
            out.component_mut(c).copy_from_slice(&fieldops::idft_real(s));
        }
        out
    }

    /// Sum of squared spectral amplitudes above `frac·(JN/2)`, relative to the
    /// total; small for fields that are smooth across cell boundaries.
    pub fn spectral_tail(&self, frac: f64) -> f64 {
        let len = self.len();
        let (mut tail, mut total) = (0.0, 0.0);
        for c in 0..self.n_species {
            for (k, z) in fieldops::dft_real(self.component(c)).iter().enumerate() {
                let e = z.norm_sqr();
                total += e;
                if fieldops::signed_mode(k, len).unsigned_abs() as f64 > frac * (len / 2) as f64 {
                    tail += e;
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            (tail / total).sqrt()
        }
    }
}

/// Sequence of cell fields over the periodic lattice `j = 0..J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoppedField {
    cells: Vec<CellField>,
}

impl ChoppedField {
    pub fn zeros(cells: usize, n_points: usize, n_species: usize) -> Self {
        ChoppedField { cells: vec![CellField::zeros(n_points, n_species); cells] }
    }

    pub fn from_cells(cells: Vec<CellField>) -> Result<Self> {
        let first = cells.first().ok_or_else(|| Error::ShapeError("no cells".into()))?;
        let (n, s) = (first.n_points(), first.n_species());
        if cells.iter().any(|c| c.n_points() != n || c.n_species() != s) {
            return Err(Error::ShapeError("cells differ in grid size or species".into()));
        }
        Ok(ChoppedField { cells })
    }

    pub fn j(&self) -> usize {
        self.cells.len()
    }

    pub fn n_points(&self) -> usize {
        self.cells[0].n_points()
    }

    pub fn n_species(&self) -> usize {
        self.cells[0].n_species()
    }

    pub fn cell(&self, j: usize) -> &CellField {
        &self.cells[j]
    }

    pub fn cell_mut(&mut self, j: usize) -> &mut CellField {
        &mut self.cells[j]
    }

    pub fn cells(&self) -> &[CellField] {
        &self.cells
    }

    pub fn axpy(&self, s: f64, other: &ChoppedField) -> ChoppedField {
        ChoppedField { cells: self.cells.iter().zip(&other.cells).map(|(a, b)| a.axpy(s, b)).collect() }
    }

    pub fn scaled(&self, s: f64) -> ChoppedField {
        ChoppedField { cells: self.cells.iter().map(|a| a.scaled(s)).collect() }
    }

    pub fn norm_inf(&self) -> f64 {
        self.cells.iter().map(|c| fieldops::lp_norm(c, fieldops::Norm::Inf)).fold(0.0, f64::max)
    }

    /// `sup_j ‖W_j‖_{L^∞}`; the lattice `X_∞` norm.
    pub fn sup_cell_norm(&self, p: fieldops::Norm) -> f64 {
        self.cells.iter().map(|c| fieldops::lp_norm(c, p)).fold(0.0, f64::max)
    }
}

pub fn chop(v: &LineField) -> ChoppedField {
    let (n, s, len) = (v.n_points, v.n_species, v.len());
    let cells = (0..v.cells)
        .map(|j| {
            let mut vals = Vec::with_capacity(n * s);
            for c in 0..s {
                vals.extend_from_slice(&v.values[c * len + j * n..c * len + (j + 1) * n]);
            }
            CellField::from_values(n, s, vals).expect("shape checked on construction")
        })
        .collect();
    ChoppedField { cells }
}

pub fn unchop(c: &ChoppedField) -> LineField {
    let (n, s, cells) = (c.n_points(), c.n_species(), c.j());
    let mut values = Vec::with_capacity(n * s * cells);
    for sp in 0..s {
        for cell in &c.cells {
            values.extend_from_slice(cell.component(sp));
        }
    }
    LineField { n_points: n, cells, n_species: s, values }
}

/// Chops raw large-domain samples (species-major) after checking alignment.
pub fn chop_values(values: Vec<f64>, n_points: usize, n_species: usize) -> Result<ChoppedField> {
    Ok(chop(&LineField::from_values(n_points, n_species, values)?))
}

/// Cell moments `I[j][c][m] = ∫_{cell j} v_c(2πj + x) e^{imx} dx`, `|m| ≤ K`,
/// exact for the band-limited interpolant of the samples (Nyquist dropped).
#[derive(Debug, Clone)]
pub struct CellMoments {
    k: usize,
    n_species: usize,
    data: Vec<c64>,
}

impl CellMoments {
    pub fn new(v: &LineField, k: usize) -> CellMoments {
        let (cells, n_species, len) = (v.cells, v.n_species, v.len());
        let width = 2 * k + 1;
        let mut data = vec![c64::new(0.0, 0.0); cells * n_species * width];
        let jf = cells as f64;
        let inv = fieldops::fft_inverse(cells);
        for c in 0..n_species {
            let g = fieldops::dft_real(v.component(c));
            // e^{iκπ} sin(πκ) per bin, κ = k/J; shared by every m
            let pre: Vec<(f64, c64, f64)> = (0..len)
                .filter(|&b| 2 * b != len)
                .map(|b| {
                    let kappa = fieldops::signed_mode(b, len) as f64 / jf;
                    (kappa, g[b] * c64::from_polar(1.0, kappa * PI), (PI * kappa).sin())
                })
                .collect();
            let residue: Vec<usize> =
                (0..len).filter(|&b| 2 * b != len).map(|b| fieldops::signed_mode(b, len).rem_euclid(cells as i64) as usize).collect();
            for (mi, m) in (-(k as i64)..=k as i64).enumerate() {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let mut b = vec![c64::new(0.0, 0.0); cells];
                for (&(kappa, gk, sk), &r) in pre.iter().zip(&residue) {
                    let a = kappa + m as f64;
                    let s = if a.abs() < 1e-12 { 2.0 * PI } else { 2.0 * sign * sk / a };
                    b[r] += gk * s;
                }
                inv.process(&mut b);
                for (j, z) in b.iter().enumerate() {
                    data[(j * n_species + c) * width + mi] = z / len as f64;
                }
            }
        }
        CellMoments { k, n_species, data }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, j: usize, c: usize, m: i64) -> c64 {
        self.data[(j * self.n_species + c) * (2 * self.k + 1) + (m + self.k as i64) as usize]
    }

    /// `∫_{cell j} (v_j(x), p(x - θ)) dx` for a periodic `p` with coefficients
    /// `p_hat[c][m + K]`.
    pub fn pair(&self, j: usize, p_hat: &[Vec<c64>], theta: f64) -> f64 {
        let k = self.k as i64;
        let mut acc = c64::new(0.0, 0.0);
        for (c, pc) in p_hat.iter().enumerate() {
            for m in -k..=k {
                acc += pc[(m + k) as usize] * c64::from_polar(1.0, -(m as f64) * theta) * self.get(j, c, m);
            }
        }
        acc.re / (2.0 * PI)
    }
}

/// Coefficients `p̂_m`, `|m| ≤ K`, of each species of a periodic cell field.
pub fn periodic_coeffs(p: &CellField, k: usize) -> Vec<Vec<c64>> {
    let n = p.n_points();
    (0..p.n_species())
        .map(|c| {
            let s = fieldops::cell_spectrum(p.component(c));
            (-(k as i64)..=k as i64).map(|m| s[fieldops::bin_of(m, n)]).collect()
        })
        .collect()
}

/// Degree-9 one-sided extrapolation mismatch at each cell boundary:
/// `max_j |W_j(π⁻) - W_{j+1}(-π)|` and the same for `∂ₓ`, indices mod `J`.
pub fn matching_residual(w: &ChoppedField) -> (f64, f64) {
    let (n, jn) = (w.n_points(), w.j());
    let h = 2.0 * PI / n as f64;
    let q = 10;
    // nodes at t = -(q-i) (left, ending one step before the boundary) and t = i (right, starting on it)
    let left_nodes: Vec<f64> = (0..q).map(|i| -((q - i) as f64)).collect();
    let right_nodes: Vec<f64> = (0..q).map(|i| i as f64).collect();
    let (lw, ldw) = lagrange_weights(&left_nodes);
    let (_, rdw) = lagrange_weights(&right_nodes);
    let (mut r0, mut r1): (f64, f64) = (0.0, 0.0);
    for j in 0..jn {
        let a = w.cell(j);
        let b = w.cell((j + 1) % jn);
        for c in 0..w.n_species() {
            let ac = a.component(c);
            let bc = b.component(c);
            let lv: f64 = (0..q).map(|i| lw[i] * ac[n - q + i]).sum();
            let ld: f64 = (0..q).map(|i| ldw[i] * ac[n - q + i]).sum::<f64>() / h;
            let rv = bc[0];
            let rd: f64 = (0..q).map(|i| rdw[i] * bc[i]).sum::<f64>() / h;
            r0 = r0.max((lv - rv).abs());
            r1 = r1.max((ld - rd).abs());
        }
    }
    (r0, r1)
}

// Weights for value and first derivative at t = 0 of the interpolant through `nodes`.
fn lagrange_weights(nodes: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let q = nodes.len();
    let mut w = vec![0.0; q];
    let mut dw = vec![0.0; q];
    for i in 0..q {
        let denom: f64 = (0..q).filter(|&k| k != i).map(|k| nodes[i] - nodes[k]).product();
        let val: f64 = (0..q).filter(|&k| k != i).map(|k| -nodes[k]).product();
        let mut der = 0.0;
        for l in (0..q).filter(|&l| l != i) {
            der += (0..q).filter(|&k| k != i && k != l).map(|k| -nodes[k]).product::<f64>();
        }
        w[i] = val / denom;
        dw[i] = der / denom;
    }
    (w, dw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chop_examples() {
        let ones = LineField::from_fn(32, 4, 1, |_, _| 1.0);
        let c = chop(&ones);
        assert_eq!(c.j(), 4);
        assert!(c.cells().iter().all(|cell| cell.values().iter().all(|&v| v == 1.0)));
        let p = CellField::from_fn(32, 2, |s, x| (x.cos() + s as f64).exp());
        let t = chop(&LineField::tiled(&p, 5));
        assert!(t.cells().iter().all(|cell| cell == &p));
        assert!(matches!(chop_values(vec![0.0; 70], 32, 1), Err(Error::AlignmentError(_))));
    }

    #[test]
    fn moments_match_direct_quadrature() {
        // smooth global field, cell restrictions are not periodic
        let j = 3;
        let v = LineField::from_fn(64, j, 2, |c, x| (x / 3.0).sin() + 0.3 * c as f64 * (2.0 * x / 3.0 + 0.4).cos());
        let mom = CellMoments::new(&v, 6);
        for cell in 0..j {
            for m in -6i64..=6 {
                // closed-form integral of e^{iκX}·e^{imx} pieces via fine Simpson rule
                let f = |x: f64, c: usize| {
                    let xx = 2.0 * PI * cell as f64 + x;
                    ((xx / 3.0).sin() + 0.3 * c as f64 * (2.0 * xx / 3.0 + 0.4).cos(), c64::from_polar(1.0, m as f64 * x))
                };
                for c in 0..2 {
                    let nn = 4000;
                    let h = 2.0 * PI / nn as f64;
                    let mut acc = c64::new(0.0, 0.0);
                    for i in 0..=nn {
                        let x = -PI + i as f64 * h;
                        let w = if i == 0 || i == nn { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                        let (a, e) = f(x, c);
                        acc += e * a * w;
                    }
                    acc *= h / 3.0;
                    assert!((mom.get(cell, c, m) - acc).norm() < 1e-10, "{cell} {c} {m}");
                }
            }
        }
    }

    #[test]
    fn matching_detects_jumps() {
        let v = LineField::from_fn(64, 4, 1, |_, x| (x / 4.0).sin() + (x / 2.0).cos());
        let c = chop(&v);
        let (a, b) = matching_residual(&c);
        assert!(a < 1e-10 && b < 1e-8, "{a} {b}");
        let mut bad = c.clone();
        bad.cell_mut(2).values_mut()[63] += 1e-3;
        assert!(matching_residual(&bad).0 > 1e-4);
    }

    proptest! {
        #[test]
        fn chop_roundtrip_is_exact(vals in proptest::collection::vec(-1e3f64..1e3, 32 * 3 * 2)) {
            let v = LineField::from_values(32, 2, vals).unwrap();
            prop_assert_eq!(unchop(&chop(&v)), v);
        }

        #[test]
        fn single_cell_moments_are_fourier_coefficients(a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let cell = CellField::from_fn(32, 1, |_, x| a * x.cos() + b * (3.0 * x).sin());
            let mom = CellMoments::new(&LineField::tiled(&cell, 1), 4);
            let hat = periodic_coeffs(&cell, 4);
            for m in -4i64..=4 {
                prop_assert!((mom.get(0, 0, m) - hat[0][(4 - m) as usize]).norm() < 1e-12);
            }
        }
    }
}
