//! Reaction-diffusion systems `u_t = D u_xx + f(u)` with diagonal diffusion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed-form kinetics shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kinetics {
    /// `f = (a - (b+1)u + u²v, bu - u²v)`.
    Brusselator { a: f64, b: f64 },
    /// `f = (a - u + u²v, b - u²v)`.
    Schnakenberg { a: f64, b: f64 },
    /// `f = (a - bu + u²/(v + reg), u² - cv)`.
    GiererMeinhardt { a: f64, b: f64, c: f64, reg: f64 },
}

/// A reaction-diffusion system with `n` species.
///
/// Immutable once built; parameter changes go through [`ReactionSystem::with_param`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionSystem {
    pub name: String,
    pub diffusion: Vec<f64>,
    pub kinetics: Kinetics,
}

const GM_REG_DEFAULT: f64 = 1e-8;
const GM_C_DEFAULT: f64 = 1.0;

fn take(params: &BTreeMap<String, f64>, key: &str, default: Option<f64>) -> Result<f64> {
    match params.get(key).copied().or(default) {
        Some(v) if v.is_finite() => Ok(v),
        Some(v) => Err(Error::BadParameter(format!("{key} = {v}"))),
        None => Err(Error::BadParameter(format!("missing `{key}`"))),
    }
}

fn check_keys(params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<()> {
    for k in params.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::BadParameter(format!("unexpected parameter `{k}`")));
        }
    }
    Ok(())
}

/// Builds one of the named models.
///
/// Required parameters: `a` and `b` for every model. Gierer-Meinhardt also
/// accepts `c` (inhibitor decay, default 1) and `reg` (denominator
/// regularization, default 1e-8).
pub fn builtin(name: &str, params: &BTreeMap<String, f64>, diffusion: &[f64]) -> Result<ReactionSystem> {
    let kinetics = match name {
        "brusselator" => {
            check_keys(params, &["a", "b"])?;
            Kinetics::Brusselator { a: take(params, "a", None)?, b: take(params, "b", None)? }
        }
        "schnakenberg" => {
            check_keys(params, &["a", "b"])?;
            Kinetics::Schnakenberg { a: take(params, "a", None)?, b: take(params, "b", None)? }
        }
        "gierer_meinhardt" => {
            check_keys(params, &["a", "b", "c", "reg"])?;
            let reg = take(params, "reg", Some(GM_REG_DEFAULT))?;
            if reg < 0.0 {
                return Err(Error::BadParameter(format!("reg = {reg} must be nonnegative")));
            }
            Kinetics::GiererMeinhardt {
                a: take(params, "a", None)?,
                b: take(params, "b", None)?,
                c: take(params, "c", Some(GM_C_DEFAULT))?,
                reg,
            }
        }
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    if diffusion.len() != 2 {
        return Err(Error::BadParameter(format!("{name} needs 2 diffusion coefficients, got {}", diffusion.len())));
    }
    if diffusion.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::BadParameter(format!("diffusion must be positive, got {diffusion:?}")));
    }
    Ok(ReactionSystem { name: name.to_string(), diffusion: diffusion.to_vec(), kinetics })
}

impl ReactionSystem {
    pub fn n(&self) -> usize {
        self.diffusion.len()
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        match self.kinetics {
            Kinetics::Brusselator { a, b } | Kinetics::Schnakenberg { a, b } => {
                m.insert("a".into(), a);
                m.insert("b".into(), b);
            }
            Kinetics::GiererMeinhardt { a, b, c, reg } => {
                m.insert("a".into(), a);
                m.insert("b".into(), b);
                m.insert("c".into(), c);
                m.insert("reg".into(), reg);
            }
        }
        m
    }

    pub fn param(&self, key: &str) -> Result<f64> {
        self.params().get(key).copied().ok_or_else(|| Error::BadParameter(format!("unknown parameter `{key}`")))
    }

    /// Copy with one parameter replaced.
    pub fn with_param(&self, key: &str, value: f64) -> Result<ReactionSystem> {
        let mut p = self.params();
        if !p.contains_key(key) {
            return Err(Error::BadParameter(format!("unknown parameter `{key}`")));
        }
        p.insert(key.to_string(), value);
        builtin(&self.name, &p, &self.diffusion)
    }

    /// Copy with every diffusion coefficient multiplied by `s`.
    pub fn with_scaled_diffusion(&self, s: f64) -> ReactionSystem {
        let mut out = self.clone();
        out.diffusion.iter_mut().for_each(|d| *d *= s);
        out
    }

    /// Homogeneous equilibrium (closed form, polished by Newton for Gierer-Meinhardt).
    pub fn equilibrium(&self) -> Vec<f64> {
        match self.kinetics {
            Kinetics::Brusselator { a, b } => vec![a, b / a],
            Kinetics::Schnakenberg { a, b } => vec![a + b, b / ((a + b) * (a + b))],
            Kinetics::GiererMeinhardt { a, b, c, reg } => {
                // v = u²/c reduces f = 0 to a scalar equation in u
                let mut u = (a + c) / b;
                for _ in 0..50 {
                    let v = u * u / c;
                    let h = a - b * u + c * v / (v + reg);
                    let dh = -b + c * reg * (2.0 * u / c) / ((v + reg) * (v + reg));
                    let step = h / dh;
                    u -= step;
                    if step.abs() <= 1e-16 * u.abs() {
                        break;
                    }
                }
                vec![u, u * u / c]
            }
        }
    }

    /// Evaluates `f(u)` without validation; `u.len()` must be `n`.
    #[inline]
    pub fn f_into(&self, u: &[f64], out: &mut [f64]) {
        match self.kinetics {
            Kinetics::Brusselator { a, b } => {
                let q = u[0] * u[0] * u[1];
                out[0] = a - (b + 1.0) * u[0] + q;
                out[1] = b * u[0] - q;
            }
            Kinetics::Schnakenberg { a, b } => {
                let q = u[0] * u[0] * u[1];
                out[0] = a - u[0] + q;
                out[1] = b - q;
            }
            Kinetics::GiererMeinhardt { a, b, c, reg } => {
                out[0] = a - b * u[0] + u[0] * u[0] / (u[1] + reg);
                out[1] = u[0] * u[0] - c * u[1];
            }
        }
    }

    /// Row-major `n×n` Jacobian `f′(u)`.
    #[inline]
    pub fn jac_into(&self, u: &[f64], out: &mut [f64]) {
        match self.kinetics {
            Kinetics::Brusselator { b, .. } => {
                let uv = 2.0 * u[0] * u[1];
                let uu = u[0] * u[0];
                out[0] = -(b + 1.0) + uv;
                out[1] = uu;
                out[2] = b - uv;
                out[3] = -uu;
            }
            Kinetics::Schnakenberg { .. } => {
                let uv = 2.0 * u[0] * u[1];
                let uu = u[0] * u[0];
                out[0] = -1.0 + uv;
                out[1] = uu;
                out[2] = -uv;
                out[3] = -uu;
            }
            Kinetics::GiererMeinhardt { b, c, reg, .. } => {
                let w = u[1] + reg;
                out[0] = -b + 2.0 * u[0] / w;
                out[1] = -u[0] * u[0] / (w * w);
                out[2] = 2.0 * u[0];
                out[3] = -c;
            }
        }
    }

    /// Remainder `f(p+v) - f(p) - f′(p)v` without validation.
    ///
    /// Polynomial kinetics use the expanded remainder so that tiny `v` do not
    /// suffer cancellation.
    #[inline]
    pub fn g_into(&self, p: &[f64], v: &[f64], out: &mut [f64]) {
        match self.kinetics {
            Kinetics::Brusselator { .. } | Kinetics::Schnakenberg { .. } => {
                // (p0+v0)²(p1+v1) minus its linearization
                let r = v[0] * v[0] * (p[1] + v[1]) + 2.0 * p[0] * v[0] * v[1];
                out[0] = r;
                out[1] = -r;
            }
            Kinetics::GiererMeinhardt { reg, .. } => {
                let wp = p[1] + reg;
                let wq = wp + v[1];
                out[0] = (v[0] * v[0] - 2.0 * p[0] * v[0] * v[1] / wp + p[0] * p[0] * v[1] * v[1] / (wp * wp)) / wq;
                out[1] = v[0] * v[0];
            }
        }
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.n() {
            return Err(Error::ShapeError(format!("expected {} components, got {}", self.n(), u.len())));
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput(format!("{u:?}")));
        }
        Ok(())
    }

    pub fn eval_f(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check(u)?;
        let mut out = vec![0.0; self.n()];
        self.f_into(u, &mut out);
        Ok(out)
    }

    pub fn jac(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check(u)?;
        let n = self.n();
        let mut out = vec![0.0; n * n];
        self.jac_into(u, &mut out);
        Ok(out)
    }

    pub fn eval_g(&self, pattern_value: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check(pattern_value)?;
        self.check(v)?;
        let mut out = vec![0.0; self.n()];
        self.g_into(pattern_value, v, &mut out);
        Ok(out)
    }
}
