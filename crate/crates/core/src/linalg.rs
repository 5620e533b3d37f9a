//! Dense complex linear algebra on top of `faer`.

use faer::linalg::solvers::DenseSolveCore;
use faer::prelude::*;
use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};

pub type CMat = Mat<c64>;

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };

/// Full eigendecomposition sorted by descending real part (ties by
/// imaginary part). Eigenvectors have unit 2-norm.
pub fn eig_sorted(a: MatRef<'_, c64>) -> Result<(Vec<c64>, CMat)> {
    let n = a.nrows();
    let evd = a.eigen().map_err(|e| Error::EigenError(format!("{e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        s[j].re.partial_cmp(&s[i].re).unwrap_or(std::cmp::Ordering::Equal).then(
            s[j].im.partial_cmp(&s[i].im).unwrap_or(std::cmp::Ordering::Equal),
        )
    });
    if order.iter().any(|&i| !(s[i].re.is_finite() && s[i].im.is_finite())) {
        return Err(Error::EigenError("non-finite eigenvalue".into()));
    }
    let values = order.iter().map(|&i| s[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let nrm = (0..n).map(|r| u[(r, i)].norm_sqr()).sum::<f64>().sqrt();
        for r in 0..n {
            vecs[(r, k)] = u[(r, i)] / nrm;
        }
    }
    Ok((values, vecs))
}

pub fn solve(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    a.partial_piv_lu().solve(b)
}

pub fn inverse(a: MatRef<'_, c64>) -> CMat {
    a.partial_piv_lu().inverse()
}

/// Real dense solve.
pub fn solve_real(a: &Mat<f64>, b: &[f64]) -> Vec<f64> {
    let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let x = a.partial_piv_lu().solve(&rhs);
    (0..b.len()).map(|i| x[(i, 0)]).collect()
}

/// Real least squares `min ‖Ax - b‖` by Householder QR.
pub fn lstsq_real(a: &Mat<f64>, b: &[f64]) -> Vec<f64> {
    let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let x = a.qr().solve_lstsq(&rhs);
    (0..a.ncols()).map(|i| x[(i, 0)]).collect()
}

/// Complex least squares by Householder QR.
pub fn lstsq(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    a.qr().solve_lstsq(b)
}

/// Orthonormal basis (as columns) of `{w : Σ w_k conj(v_k) = 0}`, built from
/// the Householder reflector that maps `v` to a multiple of `e_0`.
pub fn complement_basis(v: &[c64]) -> CMat {
    let n = v.len();
    let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let phase = if v[0].norm() > 0.0 { v[0] / v[0].norm() } else { ONE };
    let mut u: Vec<c64> = v.to_vec();
    u[0] += phase * nrm;
    let uu: f64 = u.iter().map(|z| z.norm_sqr()).sum();
    Mat::from_fn(n, n - 1, |i, j| {
        let k = j + 1;
        let delta = if i == k { ONE } else { ZERO };
        delta - u[i] * u[k].conj() * (2.0 / uu)
    })
}

pub fn scale(a: MatRef<'_, c64>, s: c64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

/// Max column sum.
pub fn norm_1(a: MatRef<'_, c64>) -> f64 {
    (0..a.ncols()).map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Max row sum.
pub fn norm_inf(a: MatRef<'_, c64>) -> f64 {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn norm_fro(a: MatRef<'_, c64>) -> f64 {
    a.norm_l2()
}

/// Largest singular value.
pub fn norm_2(a: MatRef<'_, c64>) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    if a.nrows() == 1 || a.ncols() == 1 {
        return Ok(a.norm_l2());
    }
    let sv = a.singular_values().map_err(|e| Error::EigenError(format!("svd: {e:?}")))?;
    Ok(sv.iter().cloned().fold(0.0, f64::max))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with the degree-13 Padé approximant.
pub fn expm_pade(a: MatRef<'_, c64>) -> Result<CMat> {
    let n = a.nrows();
    let nrm = norm_1(a);
    if !nrm.is_finite() {
        return Err(Error::ExpFailure("non-finite matrix".into()));
    }
    let s = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(s);
    let a1 = self::scale(a, c64::new(scale, 0.0));
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let id = identity(n);
    let b = PADE13;
    let comb = |w6: f64, w4: f64, w2: f64, w0: f64| -> CMat {
        Mat::from_fn(n, n, |i, j| a6[(i, j)] * w6 + a4[(i, j)] * w4 + a2[(i, j)] * w2 + id[(i, j)] * w0)
    };
    let inner_u = comb(b[13], b[11], b[9], 0.0);
    let u_poly: CMat = &a6 * &inner_u + comb(b[7], b[5], b[3], b[1]);
    let u = &a1 * &u_poly;
    let inner_v = comb(b[12], b[10], b[8], 0.0);
    let v: CMat = &a6 * &inner_v + comb(b[6], b[4], b[2], b[0]);
    let p: CMat = &v + &u;
    let q: CMat = &v - &u;
    let mut r = solve(q.as_ref(), p.as_ref());
    for _ in 0..s {
        r = &r * &r;
    }
    if (0..n).any(|i| (0..n).any(|j| !(r[(i, j)].re.is_finite() && r[(i, j)].im.is_finite()))) {
        return Err(Error::ExpFailure("non-finite result".into()));
    }
    Ok(r)
}

/// Cached eigendecomposition `A = V Λ V⁻¹` for repeated exponentials.
pub struct EigenExp {
    pub values: Vec<c64>,
    pub vecs: CMat,
    pub inv: CMat,
    pub cond: f64,
}

impl EigenExp {
    pub fn new(a: MatRef<'_, c64>) -> Result<Self> {
        let (values, vecs) = eig_sorted(a)?;
        let inv = inverse(vecs.as_ref());
        let cond = norm_2(vecs.as_ref())? * norm_2(inv.as_ref())?;
        if !cond.is_finite() {
            return Err(Error::EigenError("singular eigenvector matrix".into()));
        }
        Ok(EigenExp { values, vecs, inv, cond })
    }

    pub fn exp(&self, t: f64) -> CMat {
        let n = self.values.len();
        let d: Vec<c64> = self.values.iter().map(|l| (l * t).exp()).collect();
        let scaled = Mat::from_fn(n, n, |i, j| self.vecs[(i, j)] * d[j]);
        &scaled * &self.inv
    }
}

/// `e^{At}`: eigendecomposition when its basis is well conditioned
/// (`cond ≤ cond_max`), Padé otherwise.
pub fn expm(a: MatRef<'_, c64>, t: f64, cond_max: f64) -> Result<CMat> {
    if let Ok(e) = EigenExp::new(a) {
        if e.cond <= cond_max {
            return Ok(e.exp(t));
        }
    }
    expm_pade(scale(a, c64::new(t, 0.0)).as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix(n: usize) -> CMat {
        Mat::from_fn(n, n, |i, j| {
            c64::new(((i * 7 + j * 3) % 11) as f64 / 11.0 - if i == j { 2.0 + i as f64 } else { 0.0 }, ((i + j) % 3) as f64 * 0.1)
        })
    }

    #[test]
    fn eigenpairs_are_sorted_and_accurate() {
        let a = test_matrix(12);
        let (vals, vecs) = eig_sorted(a.as_ref()).unwrap();
        for w in vals.windows(2) {
            assert!(w[0].re >= w[1].re);
        }
        let r = &a * &vecs - &vecs * Mat::from_fn(12, 12, |i, j| if i == j { vals[i] } else { ZERO });
        assert!(r.norm_l2() < 1e-12);
    }

    #[test]
    fn complement_basis_is_orthonormal() {
        let v: Vec<c64> = (0..7).map(|k| c64::new(k as f64 - 2.5, 0.3 * k as f64)).collect();
        let q = complement_basis(&v);
        let g = q.adjoint() * &q;
        assert!((&g - identity(6)).norm_l2() < 1e-13);
        for j in 0..6 {
            let ip: c64 = (0..7).map(|i| q[(i, j)] * v[i].conj()).sum();
            assert!(ip.norm() < 1e-13);
        }
    }

    #[test]
    fn expm_agrees_between_methods() {
        let a = test_matrix(9);
        let e1 = expm_pade(scale(a.as_ref(), c64::new(3.0, 0.0)).as_ref()).unwrap();
        let e2 = EigenExp::new(a.as_ref()).unwrap().exp(3.0);
        assert!((&e1 - &e2).norm_l2() < 1e-12 * e1.norm_l2().max(1.0));
    }

    #[test]
    fn expm_of_diagonal_and_nilpotent() {
        let d = Mat::from_fn(3, 3, |i, j| if i == j { c64::new(i as f64 - 1.0, 0.5) } else { ZERO });
        let e = expm_pade(d.as_ref()).unwrap();
        for i in 0..3 {
            assert!((e[(i, i)] - c64::new(i as f64 - 1.0, 0.5).exp()).norm() < 1e-14);
        }
        // exp([[0, 1], [0, 0]]) = [[1, 1], [0, 1]]; eigenvectors are degenerate here
        let n = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 1 { c64::new(40.0, 0.0) } else { ZERO });
        let e = expm(n.as_ref(), 1.0, 1e6).unwrap();
        assert!((e[(0, 1)] - c64::new(40.0, 0.0)).norm() < 1e-12);
        assert!((e[(0, 0)] - ONE).norm() < 1e-14);
    }

    #[test]
    fn least_squares_recovers_polynomial() {
        let a = Mat::from_fn(10, 3, |i, j| (i as f64 * 0.3).powi(j as i32));
        let b: Vec<f64> = (0..10).map(|i| 1.0 - 2.0 * (i as f64 * 0.3) + 0.5 * (i as f64 * 0.3).powi(2)).collect();
        let x = lstsq_real(&a, &b);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] + 2.0).abs() < 1e-12 && (x[2] - 0.5).abs() < 1e-12);
    }
}
