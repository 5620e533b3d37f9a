use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Invalid or unreadable configuration; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub diffusion: Vec<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            name: "brusselator".into(),
            params: [("a".to_string(), 2.0), ("b".to_string(), 3.2)].into_iter().collect(),
            diffusion: vec![1.0, 8.0],
        }
    }
}

/// Continuation from the Turing onset to `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationConfig {
    pub param: String,
    pub bracket: [f64; 2],
    pub target: f64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig { param: "b".into(), bracket: [2.0, 4.0], target: 3.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub n_t: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub n_half: usize,
    pub sigma_min: f64,
    /// Lower edge of the fitted time window.
    pub fit_from: f64,
    /// `|σ|` from which exponential decay is fitted.
    pub sigma_away: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig { n_t: 40, t_min: 1.0, t_max: 1000.0, n_half: 16, sigma_min: 0.01, fit_from: 10.0, sigma_away: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    /// Collocation points per cell for the pattern.
    pub n_points: usize,
    /// Bloch truncation order.
    pub m: usize,
    pub sigma_grid: usize,
    pub branch_samples: usize,
    /// Eigenvalues per σ written by `bloch-spectrum`.
    pub eigenvalues_per_sigma: usize,
    /// Points per cell on the large domain.
    pub cell_points: usize,
    pub j: usize,
    pub dt: f64,
    pub t_end: f64,
    pub stride: usize,
    pub snapshot_stride: usize,
    pub seed: u64,
    pub envelope: EnvelopeConfig,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            n_points: 256,
            m: 48,
            sigma_grid: 65,
            branch_samples: 33,
            eigenvalues_per_sigma: 8,
            cell_points: 64,
            j: 64,
            dt: 0.01,
            t_end: 1000.0,
            stride: 10,
            snapshot_stride: 100,
            seed: 1,
            envelope: EnvelopeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub pattern_residual: f64,
    pub evenness: f64,
    pub d_relative: f64,
    pub round_trip_linear: f64,
    pub round_trip_nonlinear: f64,
    pub translation_remainder: f64,
    pub residual_slope: f64,
    pub semigroup: f64,
    pub t_dg: f64,
    pub theta_drift: f64,
    pub diffusion_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            pattern_residual: 1e-9,
            evenness: 1e-9,
            d_relative: 1e-3,
            round_trip_linear: 1e-10,
            round_trip_nonlinear: 1e-9,
            translation_remainder: 1e-8,
            residual_slope: 0.1,
            semigroup: 1e-8,
            t_dg: 1e-8,
            theta_drift: 0.02,
            diffusion_residual: 0.2,
        }
    }
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, f64); 11] {
        [
            ("pattern_residual", self.pattern_residual),
            ("evenness", self.evenness),
            ("d_relative", self.d_relative),
            ("round_trip_linear", self.round_trip_linear),
            ("round_trip_nonlinear", self.round_trip_nonlinear),
            ("translation_remainder", self.translation_remainder),
            ("residual_slope", self.residual_slope),
            ("semigroup", self.semigroup),
            ("t_dg", self.t_dg),
            ("theta_drift", self.theta_drift),
            ("diffusion_residual", self.diffusion_residual),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// `gaussian_bump`, `phase_bump` or `random_localized`.
    pub kind: String,
    pub amplitude: f64,
    pub width: f64,
    pub offset: f64,
    pub direction: Vec<f64>,
    pub linearized: bool,
    pub window: [f64; 2],
    pub diffusion_window: [f64; 2],
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            kind: "gaussian_bump".into(),
            amplitude: 1e-2,
            width: 1.0,
            offset: PI / 2.0,
            direction: vec![1.0, 0.0],
            linearized: true,
            window: [50.0, 800.0],
            diffusion_window: [400.0, 800.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub continuation: ContinuationConfig,
    pub numerics: NumericsConfig,
    pub tolerances: Tolerances,
    pub simulation: SimulationConfig,
    /// Subcommands run by `full-pipeline`, in order.
    pub tasks: Vec<String>,
    pub output_dir: PathBuf,
}

pub const PIPELINE_TASKS: [&str; 8] = [
    "find-pattern",
    "bloch-spectrum",
    "check-stability",
    "fit-d",
    "nf-roundtrip",
    "semigroup-envelopes",
    "simulate",
    "decay-report",
];

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelConfig::default(),
            continuation: ContinuationConfig::default(),
            numerics: NumericsConfig::default(),
            tolerances: Tolerances::default(),
            simulation: SimulationConfig::default(),
            tasks: PIPELINE_TASKS.iter().map(|s| s.to_string()).collect(),
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Command-line values that replace configuration entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub j: Option<usize>,
    pub m: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
            ConfigError(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
        })?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.out {
            self.output_dir = p.clone();
        }
        if let Some(s) = o.seed {
            self.numerics.seed = s;
        }
        if let Some(j) = o.j {
            self.numerics.j = j;
        }
        if let Some(m) = o.m {
            self.numerics.m = m;
        }
        if let Some(dt) = o.dt {
            self.numerics.dt = dt;
        }
        if let Some(t) = o.t_end {
            self.numerics.t_end = t;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (k, v) in self.tolerances.entries() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError(format!("tolerances.{k} must be positive, got {v}")));
            }
        }
        let n = &self.numerics;
        if n.j == 0 || n.m < 4 || n.cell_points < 16 || n.cell_points % 2 != 0 {
            return Err(ConfigError(format!("numerics: J = {}, M = {}, cell_points = {}", n.j, n.m, n.cell_points)));
        }
        if !(n.dt > 0.0) || !(n.t_end > 0.0) || n.stride == 0 {
            return Err(ConfigError(format!("numerics: dt = {}, T = {}, stride = {}", n.dt, n.t_end, n.stride)));
        }
        if n.sigma_grid < 33 || n.sigma_grid % 2 == 0 {
            return Err(ConfigError(format!("numerics.sigma_grid must be odd and ≥ 33, got {}", n.sigma_grid)));
        }
        if !["gaussian_bump", "phase_bump", "random_localized"].contains(&self.simulation.kind.as_str()) {
            return Err(ConfigError(format!("simulation.kind `{}` is not a perturbation class", self.simulation.kind)));
        }
        for t in &self.tasks {
            if !PIPELINE_TASKS.contains(&t.as_str()) {
                return Err(ConfigError(format!("unknown task `{t}`")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    /// Key for cached pattern and branch data.
    pub fn cache_key(&self) -> String {
        let key = (&self.model, &self.continuation, self.numerics.n_points, self.numerics.m, self.numerics.branch_samples);
        hex(&Sha256::digest(serde_json::to_vec(&key).expect("key serializes")))[..16].to_string()
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"numerics": {"j": 8}}"#).unwrap();
        assert_eq!(cfg.numerics.j, 8);
        assert_eq!(cfg.numerics.m, 48);
    }

    #[test]
    fn overrides_change_hash_but_not_cache_key_for_time_settings() {
        let base = ExperimentConfig::default();
        let mut cfg = base.clone();
        cfg.apply(&Overrides { t_end: Some(5.0), j: Some(4), ..Overrides::default() });
        assert_ne!(cfg.hash(), base.hash());
        assert_eq!(cfg.cache_key(), base.cache_key());
        cfg.apply(&Overrides { m: Some(32), ..Overrides::default() });
        assert_ne!(cfg.cache_key(), base.cache_key());
    }

    #[test]
    fn nonpositive_tolerance_is_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.tolerances.semigroup = 0.0;
        assert!(cfg.validate().unwrap_err().0.contains("semigroup"));
    }
}
