//! Time integration of the perturbation `v_t = D v_XX + f′(u_⋆)v + g(u_⋆; v)`
//! on `J` periodic pattern cells, perturbation generators, lattice tracking
//! and decay fits.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as c64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rustfft::Fft;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldops::{self, CellField};
use crate::fit;
use crate::normalform::{decompose, linear_decompose, LatticeState, LineField, NormalFormContext};
use crate::pattern::PatternSolution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between norm samples.
    pub stride: usize,
    /// Steps between stored fields; `0` keeps only the initial and final state.
    pub snapshot_stride: usize,
    /// Drop `g` and integrate `v_t = A_ch v`.
    pub linearized: bool,
    /// Blow-up when `‖v‖_∞ > blowup_factor·‖v⁰‖_∞`.
    pub blowup_factor: f64,
    /// Contour nodes for the φ-functions.
    pub contour_points: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            dt: 0.01,
            t_end: 1000.0,
            stride: 10,
            snapshot_stride: 100,
            linearized: true,
            blowup_factor: 1e3,
            contour_points: 32,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub cells: usize,
    pub n_points: usize,
    pub dt: f64,
    pub scheme: String,
    pub linearized: bool,
    /// Norm sample times and `‖v‖_∞`, `‖v‖_{L¹}` at those times.
    pub norm_times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub l1_norms: Vec<f64>,
    pub times: Vec<f64>,
    pub snapshots: Vec<LineField>,
}

impl Trajectory {
    pub fn last(&self) -> &LineField {
        self.snapshots.last().expect("trajectory holds the initial state")
    }
}

/// ETDRK4 coefficients for one species.
struct EtdCoeffs {
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
}

fn etd_coeffs(lin: &[f64], h: f64, m: usize) -> EtdCoeffs {
    let roots: Vec<c64> = (0..m).map(|k| c64::from_polar(1.0, PI * (k as f64 + 0.5) / m as f64)).collect();
    let mut out = EtdCoeffs {
        e: Vec::with_capacity(lin.len()),
        e2: Vec::with_capacity(lin.len()),
        q: Vec::with_capacity(lin.len()),
        f1: Vec::with_capacity(lin.len()),
        f2: Vec::with_capacity(lin.len()),
        f3: Vec::with_capacity(lin.len()),
    };
    for &l in lin {
        let lh = l * h;
        out.e.push(lh.exp());
        out.e2.push((lh / 2.0).exp());
        let (mut q, mut f1, mut f2, mut f3) = (c64::new(0.0, 0.0), c64::new(0.0, 0.0), c64::new(0.0, 0.0), c64::new(0.0, 0.0));
        // mean over the upper half circle; the lower half is the conjugate
        for r in &roots {
            let z = lh + r;
            let ez = z.exp();
            let z3 = z * z * z;
            q += ((z / 2.0).exp() - 1.0) / z;
            f1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
            f2 += (2.0 + z + ez * (z - 2.0)) / z3;
            f3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
        }
        let s = h / m as f64;
        out.q.push(q.re * s);
        out.f1.push(f1.re * s);
        out.f2.push(f2.re * s);
        out.f3.push(f3.re * s);
    }
    out
}

struct Stepper<'a> {
    p: &'a PatternSolution,
    n: usize,
    ns: usize,
    len: usize,
    linearized: bool,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<c64>,
    coeffs: Vec<EtdCoeffs>,
    jac: Vec<Vec<f64>>,
}

impl Stepper<'_> {
    /// Spectra of the species blocks of `phys`; two real species share one
    /// complex transform.
    fn forward_all(&mut self, phys: &[f64], out: &mut [c64], buf: &mut [c64]) {
        let len = self.len;
        let mut c = 0;
        while c < self.ns {
            if c + 1 < self.ns {
                let (a, b) = (&phys[c * len..(c + 1) * len], &phys[(c + 1) * len..(c + 2) * len]);
                for i in 0..len {
                    buf[i] = c64::new(a[i], b[i]);
                }
                self.fwd.process_with_scratch(buf, &mut self.scratch);
                let (lo, hi) = out[c * len..(c + 2) * len].split_at_mut(len);
                for k in 0..len {
                    let zm = buf[(len - k) % len].conj();
                    lo[k] = (buf[k] + zm) * 0.5;
                    hi[k] = (buf[k] - zm) * c64::new(0.0, -0.5);
                }
                c += 2;
            } else {
                let dst = &mut out[c * len..(c + 1) * len];
                for (o, x) in dst.iter_mut().zip(&phys[c * len..(c + 1) * len]) {
                    *o = c64::new(*x, 0.0);
                }
                self.fwd.process_with_scratch(dst, &mut self.scratch);
                c += 1;
            }
        }
    }

    // inverse of forward_all for Hermitian spectra
    fn to_phys(&mut self, spec: &[c64], out: &mut [f64], buf: &mut [c64]) {
        let len = self.len;
        let s = 1.0 / len as f64;
        let mut c = 0;
        while c < self.ns {
            if c + 1 < self.ns {
                let (a, b) = (&spec[c * len..(c + 1) * len], &spec[(c + 1) * len..(c + 2) * len]);
                for k in 0..len {
                    buf[k] = a[k] + c64::new(-b[k].im, b[k].re);
                }
                self.inv.process_with_scratch(buf, &mut self.scratch);
                let (lo, hi) = out[c * len..(c + 2) * len].split_at_mut(len);
                for i in 0..len {
                    lo[i] = buf[i].re * s;
                    hi[i] = buf[i].im * s;
                }
                c += 2;
            } else {
                buf.copy_from_slice(&spec[c * len..(c + 1) * len]);
                self.inv.process_with_scratch(buf, &mut self.scratch);
                for (o, z) in out[c * len..(c + 1) * len].iter_mut().zip(buf.iter()) {
                    *o = z.re * s;
                }
                c += 1;
            }
        }
    }

    // pointwise f′(u_⋆)v (+ g), species-major
    fn reaction(&self, v: &[f64], out: &mut [f64]) {
        let (n, ns, len) = (self.n, self.ns, self.len);
        let (mut pv, mut qv, mut g) = (vec![0.0; ns], vec![0.0; ns], vec![0.0; ns]);
        for i in 0..len {
            let m = i % n;
            let row = &self.jac[m];
            for c in 0..ns {
                qv[c] = v[c * len + i];
            }
            if !self.linearized {
                for c in 0..ns {
                    pv[c] = self.p.profile.at(c, m);
                }
                self.p.sys.g_into(&pv, &qv, &mut g);
            }
            for c in 0..ns {
                let mut acc: f64 = (0..ns).map(|e| row[c * ns + e] * qv[e]).sum();
                if !self.linearized {
                    acc += g[c];
                }
                out[c * len + i] = acc;
            }
        }
    }

    fn nonlinear_hat(&mut self, v: &[f64], phys: &mut [f64], out: &mut [c64], buf: &mut [c64]) {
        self.reaction(v, phys);
        self.forward_all(phys, out, buf);
    }
}

/// Integrates with ETDRK4: `D∂_XX` exactly in Fourier space, the reaction
/// terms explicitly.
pub fn integrate(p: &PatternSolution, v0: &LineField, opts: &IntegrateOptions) -> Result<Trajectory> {
    if !(opts.dt > 0.0) || !(opts.t_end >= 0.0) || opts.stride == 0 {
        return Err(Error::Precondition(format!("dt = {}, T = {}, stride = {}", opts.dt, opts.t_end, opts.stride)));
    }
    let (n, cells, ns) = (v0.n_points(), v0.cells(), v0.n_species());
    let p = if p.n_points() == n { p.clone() } else { p.resample(n) };
    if p.n_species() != ns {
        return Err(Error::AlignmentError(format!("v0 has {ns} species, pattern {}", p.n_species())));
    }
    let len = n * cells;
    let fwd = fieldops::fft_forward(len);
    let inv = fieldops::fft_inverse(len);
    let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
    let coeffs = (0..ns)
        .map(|c| {
            let d = p.sys.diffusion[c];
            let lin: Vec<f64> = (0..len)
                .map(|k| {
                    let kappa = fieldops::signed_mode(k, len) as f64 / cells as f64;
                    -d * kappa * kappa
                })
                .collect();
            etd_coeffs(&lin, opts.dt, opts.contour_points)
        })
        .collect();
    let jac = p.jacobian_field();
    let mut st = Stepper {
        p: &p,
        n,
        ns,
        len,
        linearized: opts.linearized,
        fwd,
        inv,
        scratch: vec![c64::new(0.0, 0.0); scratch_len],
        coeffs,
        jac,
    };

    let total = ns * len;
    let mut v: Vec<f64> = v0.values().to_vec();
    let mut vh = vec![c64::new(0.0, 0.0); total];
    let mut buf = vec![c64::new(0.0, 0.0); len];
    st.forward_all(&v, &mut vh, &mut buf);
    let (mut nv, mut na, mut nb, mut nc) = (vh.clone(), vh.clone(), vh.clone(), vh.clone());
    let (mut ah, mut bh, mut ch) = (vh.clone(), vh.clone(), vh.clone());
    let mut phys = vec![0.0; total];
    let mut tmp = vec![0.0; total];

    let v0_sup = v0.norm_inf();
    let h = 2.0 * PI / n as f64;
    let steps = (opts.t_end / opts.dt).round() as usize;
    let mut traj = Trajectory {
        cells,
        n_points: n,
        dt: opts.dt,
        scheme: "ETDRK4".into(),
        linearized: opts.linearized,
        norm_times: vec![0.0],
        sup_norms: vec![v0_sup],
        l1_norms: vec![h * v.iter().map(|x| x.abs()).sum::<f64>()],
        times: vec![0.0],
        snapshots: vec![v0.clone()],
    };
    for step in 1..=steps {
        let t = step as f64 * opts.dt;
        st.nonlinear_hat(&v, &mut phys, &mut nv, &mut buf);
        for c in 0..ns {
            let k = &st.coeffs[c];
            for i in 0..len {
                let j = c * len + i;
                ah[j] = vh[j] * k.e2[i] + nv[j] * k.q[i];
            }
        }
        st.to_phys(&ah, &mut tmp, &mut buf);
        st.nonlinear_hat(&tmp, &mut phys, &mut na, &mut buf);
        for c in 0..ns {
            let k = &st.coeffs[c];
            for i in 0..len {
                let j = c * len + i;
                bh[j] = vh[j] * k.e2[i] + na[j] * k.q[i];
            }
        }
        st.to_phys(&bh, &mut tmp, &mut buf);
        st.nonlinear_hat(&tmp, &mut phys, &mut nb, &mut buf);
        for c in 0..ns {
            let k = &st.coeffs[c];
            for i in 0..len {
                let j = c * len + i;
                ch[j] = ah[j] * k.e2[i] + (nb[j] * 2.0 - nv[j]) * k.q[i];
            }
        }
        st.to_phys(&ch, &mut tmp, &mut buf);
        st.nonlinear_hat(&tmp, &mut phys, &mut nc, &mut buf);
        for c in 0..ns {
            let k = &st.coeffs[c];
            for i in 0..len {
                let j = c * len + i;
                vh[j] = vh[j] * k.e[i] + nv[j] * k.f1[i] + (na[j] + nb[j]) * (2.0 * k.f2[i]) + nc[j] * k.f3[i];
            }
        }
        st.to_phys(&vh, &mut v, &mut buf);

        let last = step == steps;
        if step % opts.stride == 0 || last {
            let sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if !sup.is_finite() {
                return Err(Error::NonFinite(t));
            }
            if sup > opts.blowup_factor * v0_sup {
                return Err(Error::BlowUp { t, norm: sup });
            }
            traj.norm_times.push(t);
            traj.sup_norms.push(sup);
            traj.l1_norms.push(h * v.iter().map(|x| x.abs()).sum::<f64>());
        }
        if (opts.snapshot_stride > 0 && step % opts.snapshot_stride == 0) || last {
            traj.times.push(t);
            traj.snapshots.push(LineField::from_values(n, ns, v.clone())?);
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    GaussianBump,
    PhaseBump,
    RandomLocalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationParams {
    pub amplitude: f64,
    /// Gaussian width (or phase-bump width) in `X` units.
    pub width: f64,
    /// Centre, relative to the midpoint of cell `J/2`.
    pub offset: f64,
    /// Species weights of the Gaussian bump.
    pub direction: Vec<f64>,
}

impl Default for PerturbationParams {
    fn default() -> Self {
        PerturbationParams { amplitude: 1e-2, width: 1.0, offset: PI / 2.0, direction: vec![1.0, 0.0] }
    }
}

/// Centre `X₀` of generated perturbations on a `J`-cell domain.
pub fn perturbation_center(cells: usize, params: &PerturbationParams) -> f64 {
    2.0 * PI * (cells / 2) as f64 + params.offset
}

/// `u(y) = (1/2π) Σ_m û_m e^{imy}` for a periodic cell field.
pub fn evaluate_periodic(u: &CellField, c: usize, y: f64) -> f64 {
    let s = fieldops::cell_spectrum(u.component(c));
    periodic_eval(&s, y)
}

fn periodic_eval(s: &[c64], y: f64) -> f64 {
    let n = s.len();
    let mut acc = s[0].re;
    for k in 1..n / 2 {
        acc += 2.0 * (s[k] * c64::from_polar(1.0, k as f64 * y)).re;
    }
    acc / (2.0 * PI)
}

pub fn make_perturbation(
    kind: PerturbationKind,
    params: &PerturbationParams,
    p: &PatternSolution,
    cells: usize,
    n_points: usize,
    seed: u64,
) -> Result<LineField> {
    if params.amplitude < 0.0 || !(params.width > 0.0) {
        return Err(Error::Precondition(format!("amplitude {} and width {}", params.amplitude, params.width)));
    }
    let ns = p.n_species();
    let x0 = perturbation_center(cells, params);
    let span = 2.0 * PI * cells as f64;
    // periodic distance to the centre
    let dist = move |x: f64| {
        let d = (x - x0).rem_euclid(span);
        if d > span / 2.0 {
            d - span
        } else {
            d
        }
    };
    let gauss = move |x: f64, w: f64| (-dist(x).powi(2) / (2.0 * w * w)).exp();
    match kind {
        PerturbationKind::GaussianBump => {
            if params.direction.len() != ns {
                return Err(Error::ShapeError(format!("direction has {} entries, {ns} species", params.direction.len())));
            }
            Ok(LineField::from_fn(n_points, cells, ns, |c, x| params.amplitude * params.direction[c] * gauss(x, params.width)))
        }
        PerturbationKind::PhaseBump => {
            let spectra: Vec<Vec<c64>> = (0..ns).map(|c| fieldops::cell_spectrum(p.profile.component(c))).collect();
            Ok(LineField::from_fn(n_points, cells, ns, |c, x| {
                let th = params.amplitude * gauss(x, params.width);
                periodic_eval(&spectra[c], x - th) - periodic_eval(&spectra[c], x)
            }))
        }
        PerturbationKind::RandomLocalized => {
            let mut rng = StdRng::seed_from_u64(seed);
            let len = n_points * cells;
            let mut values = Vec::with_capacity(len * ns);
            for _ in 0..ns {
                let raw: Vec<f64> = (0..len)
                    .map(|g| {
                        let x = -PI + 2.0 * PI * g as f64 / n_points as f64;
                        rng.gen_range(-1.0..1.0) * gauss(x, params.width)
                    })
                    .collect();
                // keep the resolved half of the spectrum
                let mut s = fieldops::dft_real(&raw);
                for (k, z) in s.iter_mut().enumerate() {
                    if fieldops::signed_mode(k, len).unsigned_abs() as usize > len / 4 {
                        *z = c64::new(0.0, 0.0);
                    }
                }
                let smooth = fieldops::idft_real(s);
                let sup = smooth.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let scale = if sup > 0.0 { params.amplitude / sup } else { 0.0 };
                values.extend(smooth.iter().map(|v| v * scale));
            }
            LineField::from_values(n_points, ns, values)
        }
    }
}

/// Fraction of `‖v‖_{L¹}` farther than `πJ/2` from `center` (periodic distance).
pub fn wrap_fraction(v: &LineField, center: f64) -> f64 {
    let (n, cells) = (v.n_points(), v.cells());
    let span = 2.0 * PI * cells as f64;
    let (mut far, mut total) = (0.0, 0.0);
    for c in 0..v.n_species() {
        for (g, val) in v.component(c).iter().enumerate() {
            let x = -PI + 2.0 * PI * g as f64 / n as f64;
            let d = (x - center).rem_euclid(span);
            let d = d.min(span - d);
            total += val.abs();
            if d > PI * cells as f64 / 2.0 {
                far += val.abs();
            }
        }
    }
    if total > 0.0 {
        far / total
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackMode {
    /// `linear_decompose`, exact for linearized runs.
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeSeries {
    pub times: Vec<f64>,
    pub states: Vec<LatticeState>,
    /// Set when decomposition failed; the series stops before that time.
    pub truncated: Option<String>,
}

impl LatticeSeries {
    pub fn theta_inf(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.theta_norm_inf()).collect()
    }

    /// `sup_j ‖W_j‖_∞`.
    pub fn w_xinf(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.w.norm_inf()).collect()
    }

    pub fn delta_theta_l2(&self) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| {
                let j = s.j();
                (0..j).map(|i| (s.theta[(i + 1) % j] - s.theta[i]).powi(2)).sum::<f64>().sqrt()
            })
            .collect()
    }

    pub fn theta_sum(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.theta.iter().sum()).collect()
    }
}

pub fn lattice_track(ctx: &NormalFormContext, traj: &Trajectory, mode: TrackMode) -> Result<LatticeSeries> {
    let mut out = LatticeSeries { times: Vec::new(), states: Vec::new(), truncated: None };
    for (t, v) in traj.times.iter().zip(&traj.snapshots) {
        let s = match mode {
            TrackMode::Linear => linear_decompose(ctx, v),
            TrackMode::Nonlinear => decompose(ctx, v),
        };
        match s {
            Ok(s) => {
                out.times.push(*t);
                out.states.push(s);
            }
            Err(e @ (Error::NoConvergence(_) | Error::OutOfRegime(_) | Error::ConstraintViolation(_))) => {
                out.truncated = Some(format!("t = {t}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayNorm {
    VInf,
    ThetaInf,
    WXInf,
    DeltaThetaL2,
}

impl DecayNorm {
    pub fn target(self) -> f64 {
        match self {
            DecayNorm::VInf | DecayNorm::ThetaInf => 0.5,
            DecayNorm::WXInf => 1.0,
            DecayNorm::DeltaThetaL2 => 0.75,
        }
    }

    pub fn tolerance(self) -> f64 {
        match self {
            DecayNorm::WXInf => 0.15,
            _ => 0.1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DecayNorm::VInf => "v_inf",
            DecayNorm::ThetaInf => "theta_inf",
            DecayNorm::WXInf => "w_xinf",
            DecayNorm::DeltaThetaL2 => "delta_theta_l2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub norm: String,
    pub window: [f64; 2],
    pub exponent: f64,
    pub fit_rms: f64,
    pub target: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Fits `y ~ C(1+t)^{-p}` on `window`.
pub fn measure_decay(times: &[f64], values: &[f64], norm: DecayNorm, window: [f64; 2]) -> Result<DecayReport> {
    measure_decay_against(times, values, norm.name(), window, norm.target(), norm.tolerance())
}

pub fn measure_decay_against(
    times: &[f64],
    values: &[f64],
    name: &str,
    window: [f64; 2],
    target: f64,
    tolerance: f64,
) -> Result<DecayReport> {
    let (lo, hi) = match (times.first(), times.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::WindowError("empty series".into())),
    };
    if window[0] < 10.0 || window[1] <= window[0] || window[0] < lo || window[1] > hi + 1e-9 {
        return Err(Error::WindowError(format!("window {window:?} for series on [{lo}, {hi}]")));
    }
    let f = fit::decay_exponent(times, values, window[0], window[1])?;
    Ok(DecayReport {
        norm: name.to_string(),
        window,
        exponent: f.slope,
        fit_rms: f.rms,
        target,
        tolerance,
        passed: (f.slope - target).abs() <= tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeDiffusionFit {
    /// `None` when `δ²θ` vanishes on the window.
    pub d_lat: Option<f64>,
    /// `‖θ̇ - d_lat δ²θ‖ / ‖θ̇‖` over the window (`0` for a static series).
    pub residual_fraction: f64,
    pub samples: usize,
    pub window: [f64; 2],
}

impl LatticeDiffusionFit {
    pub fn indeterminate(&self) -> bool {
        self.d_lat.is_none()
    }
}

/// Least-squares `d` in `θ̇_j = d(θ_{j+1} - 2θ_j + θ_{j-1})`, with `θ̇` from
/// centred differences of consecutive samples.
pub fn compare_discrete_diffusion(times: &[f64], thetas: &[Vec<f64>], window: [f64; 2]) -> Result<LatticeDiffusionFit> {
    if times.len() != thetas.len() {
        return Err(Error::ShapeError(format!("{} times, {} states", times.len(), thetas.len())));
    }
    let idx: Vec<usize> = (1..times.len().saturating_sub(1))
        .filter(|&i| times[i] >= window[0] && times[i] <= window[1])
        .collect();
    if idx.len() < 50 {
        return Err(Error::WindowError(format!("{} interior samples in {window:?}, need 50", idx.len())));
    }
    let (mut num, mut den, mut rate2) = (0.0, 0.0, 0.0);
    let mut pairs = Vec::with_capacity(idx.len());
    for &i in &idx {
        let th = &thetas[i];
        let j = th.len();
        let dt = times[i + 1] - times[i - 1];
        let rate: Vec<f64> = (0..j).map(|k| (thetas[i + 1][k] - thetas[i - 1][k]) / dt).collect();
        let lap: Vec<f64> = (0..j).map(|k| th[(k + 1) % j] - 2.0 * th[k] + th[(k + j - 1) % j]).collect();
        num += rate.iter().zip(&lap).map(|(a, b)| a * b).sum::<f64>();
        den += lap.iter().map(|b| b * b).sum::<f64>();
        rate2 += rate.iter().map(|a| a * a).sum::<f64>();
        pairs.push((rate, lap));
    }
    let scale = thetas.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if den <= (1e-14 * scale).powi(2) * idx.len() as f64 {
        return Ok(LatticeDiffusionFit {
            d_lat: None,
            residual_fraction: if rate2 > 0.0 { 1.0 } else { 0.0 },
            samples: idx.len(),
            window,
        });
    }
    let d = num / den;
    let res2: f64 = pairs
        .iter()
        .map(|(r, l)| r.iter().zip(l).map(|(a, b)| (a - d * b).powi(2)).sum::<f64>())
        .sum();
    Ok(LatticeDiffusionFit {
        d_lat: Some(d),
        residual_fraction: if rate2 > 0.0 { (res2 / rate2).sqrt() } else { 0.0 },
        samples: idx.len(),
        window,
    })
}

/// `max_t |Σθ(t) - Σθ(t₀)| / |Σθ(t₀)|` over samples in `window`.
pub fn theta_sum_drift(times: &[f64], sums: &[f64], window: [f64; 2]) -> Result<f64> {
    let pts: Vec<f64> = times.iter().zip(sums).filter(|(t, _)| **t >= window[0] && **t <= window[1]).map(|(_, s)| *s).collect();
    if pts.len() < 2 {
        return Err(Error::WindowError(format!("{} samples in {window:?}", pts.len())));
    }
    let base = pts[0];
    if base == 0.0 {
        return Err(Error::WindowError("Σθ vanishes at the start of the window".into()));
    }
    Ok(pts.iter().map(|s| (s - base).abs()).fold(0.0, f64::max) / base.abs())
}

/// `θ_j(t) = Σ_k e^{-2dt(1 - cos κ)} ĉ_k e^{iκj}` on a periodic lattice: the
/// exact solution of `θ̇ = d δ²θ` from a single-site initial condition.
pub fn lattice_heat_kernel(cells: usize, d: f64, t: f64, site: usize) -> Vec<f64> {
    let mut s: Vec<c64> = (0..cells)
        .map(|k| {
            let kappa = 2.0 * PI * k as f64 / cells as f64;
            let phase = c64::from_polar(1.0, -kappa * site as f64);
            phase * (-2.0 * d * t * (1.0 - kappa.cos())).exp()
        })
        .collect();
    fieldops::fft_inverse(cells).process(&mut s);
    s.iter().map(|z| z.re / cells as f64).collect()
}

/// Samples `t ↦ θ(t)` from [`lattice_heat_kernel`].
pub fn lattice_heat_series(cells: usize, d: f64, times: &[f64]) -> Vec<Vec<f64>> {
    times.iter().map(|&t| lattice_heat_kernel(cells, d, t, cells / 2)).collect()
}

#[cfg(test)]
mod tests;
