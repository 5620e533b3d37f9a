//! Periodic fields on one cell `(-π, π)`: grids, quadrature, Fourier
//! coefficients, spectral differentiation and norms.
//!
//! Fourier coefficients use the unnormalized integral
//! `ŵ_ℓ = ∫ w(x) e^{-iℓx} dx`; the inverse carries the factor `1/2π`.
//! The grid is `x_m = -π + 2πm/N`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn fft_forward(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub fn fft_inverse(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Signed frequency of FFT bin `k` for length `n`; the Nyquist bin maps to `-n/2`.
#[inline]
pub fn signed_mode(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// FFT bin holding signed mode `l`.
#[inline]
pub fn bin_of(l: i64, n: usize) -> usize {
    l.rem_euclid(n as i64) as usize
}

pub fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|m| -PI + 2.0 * PI * m as f64 / n as f64).collect()
}

/// Unnormalized DFT of a real sequence.
pub fn dft_real(values: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Real part of the inverse DFT including the `1/n` factor.
pub fn idft_real(mut spec: Vec<Complex64>) -> Vec<f64> {
    let n = spec.len();
    fft_inverse(n).process(&mut spec);
    spec.iter().map(|z| z.re / n as f64).collect()
}

/// Real field with `n` species sampled on the uniform cell grid.
///
/// Storage is species-major: component `c` occupies `values[c*N..(c+1)*N]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellField {
    n_points: usize,
    n_species: usize,
    values: Vec<f64>,
}

impl CellField {
    pub fn zeros(n_points: usize, n_species: usize) -> Self {
        CellField { n_points, n_species, values: vec![0.0; n_points * n_species] }
    }

    pub fn from_values(n_points: usize, n_species: usize, values: Vec<f64>) -> Result<Self> {
        if n_points < 16 || n_points % 2 != 0 {
            return Err(Error::ShapeError(format!("grid size {n_points} must be even and at least 16")));
        }
        if values.len() != n_points * n_species {
            return Err(Error::ShapeError(format!(
                "{} values for {n_points} points × {n_species} species",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("cell field".into()));
        }
        Ok(CellField { n_points, n_species, values })
    }

    /// Samples `f(c, x)` on the grid.
    pub fn from_fn(n_points: usize, n_species: usize, f: impl Fn(usize, f64) -> f64) -> Self {
        let x = grid(n_points);
        let mut values = Vec::with_capacity(n_points * n_species);
        for c in 0..n_species {
            values.extend(x.iter().map(|&xm| f(c, xm)));
        }
        CellField { n_points, n_species, values }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.values[c * self.n_points..(c + 1) * self.n_points]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.values[c * self.n_points..(c + 1) * self.n_points]
    }

    /// Value of species `c` at grid point `m`.
    #[inline]
    pub fn at(&self, c: usize, m: usize) -> f64 {
        self.values[c * self.n_points + m]
    }

    /// Point value `u(x_m)` as a vector over species.
    pub fn point(&self, m: usize) -> Vec<f64> {
        (0..self.n_species).map(|c| self.at(c, m)).collect()
    }

    pub fn scaled(&self, s: f64) -> CellField {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &CellField) -> CellField {
        let mut out = self.clone();
        out.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += s * b);
        out
    }

    fn same_shape(&self, other: &CellField) -> Result<()> {
        if self.n_points != other.n_points || self.n_species != other.n_species {
            return Err(Error::ShapeError(format!(
                "{}×{} vs {}×{}",
                self.n_points, self.n_species, other.n_points, other.n_species
            )));
        }
        Ok(())
    }

    /// Max over points of `|u(x) - u(-x)|`.
    pub fn evenness_residual(&self) -> f64 {
        self.parity_residual(1.0)
    }

    /// Max over points of `|u(x) + u(-x)|`.
    pub fn oddness_residual(&self) -> f64 {
        self.parity_residual(-1.0)
    }

    fn parity_residual(&self, sign: f64) -> f64 {
        let n = self.n_points;
        let mut r: f64 = 0.0;
        for c in 0..self.n_species {
            let u = self.component(c);
            // x_m = -π + 2πm/N mirrors to x_{(N-m) mod N}
            for m in 0..n {
                r = r.max((u[m] - sign * u[(n - m) % n]).abs());
            }
        }
        r
    }
}

/// Fourier coefficients `ŵ_ℓ`, `|ℓ| ≤ M`, stored mode-major: entry
/// `(ℓ + M)·n + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierField {
    m: usize,
    n_species: usize,
    coeffs: Vec<Complex64>,
}

impl FourierField {
    pub fn zeros(m: usize, n_species: usize) -> Self {
        FourierField { m, n_species, coeffs: vec![Complex64::new(0.0, 0.0); (2 * m + 1) * n_species] }
    }

    pub fn from_coeffs(m: usize, n_species: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != (2 * m + 1) * n_species {
            return Err(Error::ShapeError(format!("{} coefficients for M = {m}, n = {n_species}", coeffs.len())));
        }
        Ok(FourierField { m, n_species, coeffs })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    #[inline]
    pub fn index(&self, l: i64, c: usize) -> usize {
        (l + self.m as i64) as usize * self.n_species + c
    }

    #[inline]
    pub fn get(&self, l: i64, c: usize) -> Complex64 {
        self.coeffs[self.index(l, c)]
    }

    pub fn set(&mut self, l: i64, c: usize, z: Complex64) {
        let i = self.index(l, c);
        self.coeffs[i] = z;
    }

    /// Max of `|ŵ_{-ℓ} - conj(ŵ_ℓ)|`; zero for real fields.
    pub fn conjugate_symmetry_residual(&self) -> f64 {
        let m = self.m as i64;
        let mut r: f64 = 0.0;
        for l in 0..=m {
            for c in 0..self.n_species {
                r = r.max((self.get(-l, c) - self.get(l, c).conj()).norm());
            }
        }
        r
    }

    /// Evaluates the truncated series at arbitrary points (complex values).
    pub fn eval(&self, c: usize, x: f64) -> Complex64 {
        let m = self.m as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        for l in -m..=m {
            acc += self.get(l, c) * Complex64::from_polar(1.0, l as f64 * x);
        }
        acc / (2.0 * PI)
    }
}

/// Spectrum of one component on the cell grid, in the unnormalized convention,
/// indexed by FFT bin.
pub fn cell_spectrum(u: &[f64]) -> Vec<Complex64> {
    let n = u.len();
    let mut s = dft_real(u);
    let h = 2.0 * PI / n as f64;
    for (k, z) in s.iter_mut().enumerate() {
        // e^{-iℓx_m} = (-1)^ℓ e^{-2πiℓm/N}
        let sign = if signed_mode(k, n) % 2 == 0 { 1.0 } else { -1.0 };
        *z *= h * sign;
    }
    s
}

/// Inverse of [`cell_spectrum`]; real part of the synthesized field.
pub fn cell_synthesize(spec: &[Complex64]) -> Vec<f64> {
    let n = spec.len();
    let h = 2.0 * PI / n as f64;
    let buf: Vec<Complex64> = spec
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let sign = if signed_mode(k, n) % 2 == 0 { 1.0 } else { -1.0 };
            z * (sign / h)
        })
        .collect();
    idft_real(buf)
}

/// Uniform-grid quadrature of `∫ (a(x), b(x)) dx`.
pub fn inner_product(a: &CellField, b: &CellField) -> Result<f64> {
    a.same_shape(b)?;
    let h = 2.0 * PI / a.n_points as f64;
    Ok(h * a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum::<f64>())
}

pub fn to_fourier(a: &CellField, m: usize) -> Result<FourierField> {
    let n = a.n_points;
    if m + 1 > n / 2 {
        return Err(Error::TruncationError { m, n });
    }
    let mut out = FourierField::zeros(m, a.n_species);
    for c in 0..a.n_species {
        let s = cell_spectrum(a.component(c));
        for l in -(m as i64)..=(m as i64) {
            out.set(l, c, s[bin_of(l, n)]);
        }
    }
    Ok(out)
}

/// Synthesizes the real part of the truncated series on an `n`-point grid.
pub fn from_fourier(c: &FourierField, n: usize) -> Result<CellField> {
    Ok(from_fourier_complex(c, n)?.0)
}

/// Synthesizes the series on an `n`-point grid, returning real and imaginary parts.
pub fn from_fourier_complex(c: &FourierField, n: usize) -> Result<(CellField, CellField)> {
    if c.m + 1 > n / 2 {
        return Err(Error::TruncationError { m: c.m, n });
    }
    let mut re = CellField::zeros(n, c.n_species);
    let mut im = CellField::zeros(n, c.n_species);
    let h = 2.0 * PI / n as f64;
    for s in 0..c.n_species {
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for l in -(c.m as i64)..=(c.m as i64) {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            buf[bin_of(l, n)] = c.get(l, s) * (sign / h);
        }
        fft_inverse(n).process(&mut buf);
        for (k, z) in buf.iter().enumerate() {
            re.values[s * n + k] = z.re / n as f64;
            im.values[s * n + k] = z.im / n as f64;
        }
    }
    Ok((re, im))
}

/// Applies the Fourier multiplier `(iℓ)^order`. The Nyquist bin is dropped
/// for odd orders.
pub fn differentiate(a: &CellField, order: u32) -> Result<CellField> {
    if order == 0 || order > 2 {
        return Err(Error::Precondition(format!("derivative order {order} not in {{1, 2}}")));
    }
    let n = a.n_points;
    let mut out = a.clone();
    for c in 0..a.n_species {
        let mut s = dft_real(a.component(c));
        for (k, z) in s.iter_mut().enumerate() {
            let l = signed_mode(k, n) as f64;
            *z *= match order {
                1 if 2 * k == n => Complex64::new(0.0, 0.0),
                1 => Complex64::new(0.0, l),
                _ => Complex64::new(-l * l, 0.0),
            };
        }
        out.component_mut(c).copy_from_slice(&idft_real(s));
    }
    Ok(out)
}

/// Spatial norm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
    Inf,
}

/// `L¹` and `L²` sum over species; `L^∞` is the max over species and points.
pub fn lp_norm(a: &CellField, p: Norm) -> f64 {
    let h = 2.0 * PI / a.n_points as f64;
    match p {
        Norm::L1 => h * a.values.iter().map(|v| v.abs()).sum::<f64>(),
        Norm::L2 => (h * a.values.iter().map(|v| v * v).sum::<f64>()).sqrt(),
        Norm::Inf => a.values.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
    }
}

/// Translate: returns `a(x - theta)` by Fourier phase shift. The Nyquist bin is dropped.
pub fn shift(a: &CellField, theta: f64) -> CellField {
    let n = a.n_points;
    let mut out = a.clone();
    for c in 0..a.n_species {
        let mut s = dft_real(a.component(c));
        for (k, z) in s.iter_mut().enumerate() {
            if 2 * k == n {
                *z = Complex64::new(0.0, 0.0);
            } else {
                *z *= Complex64::from_polar(1.0, -(signed_mode(k, n) as f64) * theta);
            }
        }
        out.component_mut(c).copy_from_slice(&idft_real(s));
    }
    out
}

/// Band-limited interpolation onto an `n_new`-point grid.
pub fn resample(a: &CellField, n_new: usize) -> Result<CellField> {
    let m = (a.n_points.min(n_new) / 2).saturating_sub(1);
    from_fourier(&to_fourier(a, m)?, n_new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn inner_product_examples() {
        let s = CellField::from_fn(64, 1, |_, x| x.sin());
        assert!((inner_product(&s, &s).unwrap() - PI).abs() < 1e-12);
        let e = CellField::from_fn(64, 1, |_, x| x.cos() + 0.3 * (2.0 * x).cos());
        let o = CellField::from_fn(64, 1, |_, x| x.sin() * (1.0 + x.cos()));
        assert!(inner_product(&e, &o).unwrap().abs() < 1e-12);
        let one = CellField::from_fn(64, 1, |_, _| 1.0);
        assert!((inner_product(&one, &one).unwrap() - 2.0 * PI).abs() < 1e-12);
        assert!(inner_product(&one, &CellField::zeros(32, 1)).is_err());
    }

    #[test]
    fn fourier_examples() {
        let c = to_fourier(&CellField::from_fn(64, 1, |_, x| x.cos()), 20).unwrap();
        for l in -20..=20i64 {
            let expect = if l.abs() == 1 { PI } else { 0.0 };
            assert!((c.get(l, 0) - Complex64::new(expect, 0.0)).norm() < 1e-12);
        }
        let one = to_fourier(&CellField::from_fn(64, 1, |_, _| 1.0), 10).unwrap();
        assert!((one.get(0, 0).re - 2.0 * PI).abs() < 1e-12);
        assert!(matches!(to_fourier(&CellField::zeros(64, 1), 32), Err(Error::TruncationError { .. })));
        let s = to_fourier(&CellField::from_fn(64, 1, |_, x| x.sin()), 5).unwrap();
        assert!((s.get(1, 0) - Complex64::new(0.0, -PI)).norm() < 1e-12);
    }

    #[test]
    fn derivative_examples() {
        let s = CellField::from_fn(64, 1, |_, x| x.sin());
        let d = differentiate(&s, 1).unwrap();
        let c = CellField::from_fn(64, 1, |_, x| x.cos());
        assert!(lp_norm(&d.axpy(-1.0, &c), Norm::Inf) < 1e-10);
        let one = CellField::from_fn(64, 1, |_, _| 1.0);
        assert!(lp_norm(&differentiate(&one, 2).unwrap(), Norm::Inf) < 1e-12);
        let c3 = CellField::from_fn(64, 1, |_, x| (3.0 * x).cos());
        let d2 = differentiate(&c3, 2).unwrap();
        assert!(lp_norm(&d2.axpy(9.0, &c3), Norm::Inf) < 1e-10);
    }

    #[test]
    fn norm_examples() {
        let s = CellField::from_fn(64, 1, |_, x| x.sin());
        assert!((lp_norm(&s, Norm::Inf) - 1.0).abs() < 2e-3);
        let z = CellField::zeros(64, 2);
        for p in [Norm::L1, Norm::L2, Norm::Inf] {
            assert_eq!(lp_norm(&z, p), 0.0);
        }
        let one = CellField::from_fn(64, 1, |_, _| 1.0);
        assert!((lp_norm(&one, Norm::L1) - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn shift_and_parity() {
        let u = CellField::from_fn(64, 2, |c, x| (x + c as f64).cos());
        let v = shift(&u, 0.3);
        let w = CellField::from_fn(64, 2, |c, x| (x - 0.3 + c as f64).cos());
        assert!(lp_norm(&v.axpy(-1.0, &w), Norm::Inf) < 1e-12);
        let e = CellField::from_fn(32, 1, |_, x| x.cos());
        assert!(e.evenness_residual() < 1e-14 && e.oddness_residual() > 1.0);
    }

    fn band_limited(coef: &[(f64, f64)], n: usize) -> CellField {
        CellField::from_fn(n, 2, |c, x| {
            coef.iter()
                .enumerate()
                .map(|(l, (a, b))| (a * (l as f64 * x).cos() + b * (l as f64 * x).sin()) * (1.0 + c as f64))
                .sum()
        })
    }

    proptest! {
        #[test]
        fn round_trip_and_parseval(
            ca in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 12),
            cb in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 12),
        ) {
            let a = band_limited(&ca, 64);
            let b = band_limited(&cb, 64);
            let fa = to_fourier(&a, 20).unwrap();
            let fb = to_fourier(&b, 20).unwrap();
            let back = from_fourier(&fa, 64).unwrap();
            prop_assert!(lp_norm(&back.axpy(-1.0, &a), Norm::Inf) < 1e-12);
            prop_assert!(fa.conjugate_symmetry_residual() < 1e-12);
            let direct = inner_product(&a, &b).unwrap();
            let spectral: f64 = fa.coeffs().iter().zip(fb.coeffs()).map(|(x, y)| (x * y.conj()).re).sum::<f64>() / (2.0 * PI);
            prop_assert!((direct - spectral).abs() < 1e-10);
        }

        #[test]
        fn derivative_commutes_with_round_trip(ca in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 10)) {
            let a = band_limited(&ca, 64);
            let via = from_fourier(&to_fourier(&differentiate(&a, 2).unwrap(), 30).unwrap(), 64).unwrap();
            let direct = differentiate(&from_fourier(&to_fourier(&a, 30).unwrap(), 64).unwrap(), 2).unwrap();
            prop_assert!(lp_norm(&via.axpy(-1.0, &direct), Norm::Inf) < 1e-10);
        }
    }
}
