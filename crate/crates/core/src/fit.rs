//! Small regression helpers.

use crate::error::{Error, Result};

/// Ordinary least-squares line `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub rms: f64,
}

pub fn line_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::WindowError(format!("{n} points")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::WindowError("abscissae coincide".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>() / n as f64).sqrt();
    Ok(LineFit { slope, intercept, rms })
}

/// Decay exponent `p` of `y ~ C (1+t)^{-p}`, fitted on log-spaced resamples of
/// the points with `t` in `[t0, t1]`.
pub fn decay_exponent(t: &[f64], y: &[f64], t0: f64, t1: f64) -> Result<LineFit> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(a, b)| **a >= t0 && **a <= t1 && **b > 0.0 && b.is_finite())
        .map(|(a, b)| ((1.0 + a).ln(), b.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::WindowError(format!("{} usable points in [{t0}, {t1}]", pts.len())));
    }
    // thin to roughly uniform spacing in log t so late times do not dominate
    let lo = pts.first().unwrap().0;
    let hi = pts.last().unwrap().0;
    let bins = 60usize.min(pts.len());
    let mut xs = Vec::with_capacity(bins);
    let mut ys = Vec::with_capacity(bins);
    let mut next = lo;
    let step = (hi - lo) / bins as f64;
    for &(a, b) in &pts {
        if a >= next {
            xs.push(a);
            ys.push(b);
            next = a + step * 0.999;
        }
    }
    let f = line_fit(&xs, &ys)?;
    Ok(LineFit { slope: -f.slope, ..f })
}
