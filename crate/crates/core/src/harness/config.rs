//! Experiment configuration.
//!
//! Config files are flat `key = value` text (TOML syntax, no tables).
//! Every key is optional; missing keys take the defaults below.
//!
//! | key                     | default        | meaning |
//! |-------------------------|----------------|---------|
//! | `mu`                    | 0.5            | mean photon number of the input pulses |
//! | `tau_us`                | 27.8           | 1/e memory time |
//! | `larmor_period_us`      | 1.38           | Larmor period |
//! | `envelope`              | `"cos_squared"`| Larmor gate, or `"flat"` |
//! | `target_fidelity`       | 0.9445         | depolarization is calibrated to this mean fidelity |
//! | `p_dep`                 | unset          | explicit depolarization, overrides `target_fidelity` |
//! | `dphi_rad_per_us`       | 0              | differential rail phase drift |
//! | `crosstalk_eps`         | 0              | neighbor depolarization per addressing |
//! | `eta_center`            | 0.18           | efficiency of the central cells |
//! | `eta_edge`              | 0.02           | efficiency of the corner cells |
//! | `efficiency_map_csv`    | unset          | load the map from CSV instead |
//! | `quantum_efficiency`    | 1.0            | detector quantum efficiency |
//! | `dark_click_prob`       | 0              | detector background per gate |
//! | `coupling_efficiency`   | 0.65           | fiber coupling of each path |
//! | `shots`                 | 500            | tomography shots per basis per state |
//! | `resamples`             | 1000           | bootstrap resamples |
//! | `efficiency_shots`      | 100000         | pulses per cell in the efficiency scan |
//! | `storage_time_us`       | 1.38           | storage time of characterization runs |
//! | `analytic`              | false          | expected counts instead of sampling |
//! | `seed`                  | 20211          | master seed |
//! | `timing`                | `"strict"`     | off-Larmor reads: `"strict"` or `"warn"` |
//! | `random_access_slots`   | `"4:1 7:3 10:5"` | `row:k` of qubits 1, 2, 3 |
//! | `random_access_spacing` | 1              | Larmor periods between events |
//! | `workers`               | all cores      | worker threads |
//! | `out_dir`               | `"out"`        | output directory |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::TimingMode;
use crate::memory::{
    calibrate_depolarization, default_efficiency_map, EfficiencyMap, LarmorEnvelope, MemoryParams,
    QubitSlot, DEFAULT_ETA_CENTER, DEFAULT_ETA_EDGE, DEFAULT_LARMOR_PERIOD_US,
    DEFAULT_TARGET_FIDELITY, DEFAULT_TAU_US, DEFAULT_T_REF_US,
};
use crate::photonics::{DetectorModel, DEFAULT_COUPLING_EFFICIENCY};
use crate::tomography::{Acquisition, DEFAULT_RESAMPLES, DEFAULT_SHOTS, MIN_RESAMPLES};

use super::HarnessError;

pub const DEFAULT_MU: f64 = 0.5;
pub const DEFAULT_SEED: u64 = 20211;
pub const DEFAULT_EFFICIENCY_SHOTS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingPolicy {
    #[default]
    Strict,
    Warn,
}

impl From<TimingPolicy> for TimingMode {
    fn from(p: TimingPolicy) -> Self {
        match p {
            TimingPolicy::Strict => TimingMode::Strict,
            TimingPolicy::Warn => TimingMode::Warn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mu: f64,
    pub tau_us: f64,
    pub larmor_period_us: f64,
    pub envelope: LarmorEnvelope,
    pub target_fidelity: f64,
    pub p_dep: Option<f64>,
    pub dphi_rad_per_us: f64,
    pub crosstalk_eps: f64,
    pub eta_center: f64,
    pub eta_edge: f64,
    pub efficiency_map_csv: Option<PathBuf>,
    pub quantum_efficiency: f64,
    pub dark_click_prob: f64,
    pub coupling_efficiency: f64,
    pub shots: u64,
    pub resamples: usize,
    pub efficiency_shots: u64,
    pub storage_time_us: f64,
    pub analytic: bool,
    pub seed: u64,
    pub timing: TimingPolicy,
    pub random_access_slots: String,
    pub random_access_spacing: u32,
    /// Execution detail; excluded from the config hash.
    pub workers: Option<usize>,
    /// Execution detail; excluded from the config hash.
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mu: DEFAULT_MU,
            tau_us: DEFAULT_TAU_US,
            larmor_period_us: DEFAULT_LARMOR_PERIOD_US,
            envelope: LarmorEnvelope::CosSquared,
            target_fidelity: DEFAULT_TARGET_FIDELITY,
            p_dep: None,
            dphi_rad_per_us: 0.0,
            crosstalk_eps: 0.0,
            eta_center: DEFAULT_ETA_CENTER,
            eta_edge: DEFAULT_ETA_EDGE,
            efficiency_map_csv: None,
            quantum_efficiency: 1.0,
            dark_click_prob: 0.0,
            coupling_efficiency: DEFAULT_COUPLING_EFFICIENCY,
            shots: DEFAULT_SHOTS,
            resamples: DEFAULT_RESAMPLES,
            efficiency_shots: DEFAULT_EFFICIENCY_SHOTS,
            storage_time_us: DEFAULT_T_REF_US,
            analytic: false,
            seed: DEFAULT_SEED,
            timing: TimingPolicy::Strict,
            random_access_slots: "4:1 7:3 10:5".into(),
            random_access_spacing: 1,
            workers: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn memory_params(&self) -> Result<MemoryParams, HarnessError> {
        let p_dep = match self.p_dep {
            Some(p) => p,
            None => calibrate_depolarization(self.target_fidelity)?,
        };
        let params = MemoryParams {
            tau_us: self.tau_us,
            larmor_period_us: self.larmor_period_us,
            envelope: self.envelope,
            p_dep,
            dphi_rad_per_us: self.dphi_rad_per_us,
            crosstalk_eps: self.crosstalk_eps,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn detector(&self) -> Result<DetectorModel, HarnessError> {
        Ok(DetectorModel::new(
            self.quantum_efficiency,
            self.dark_click_prob,
            self.coupling_efficiency,
        )?)
    }

    pub fn acquisition(&self) -> Acquisition {
        if self.analytic {
            Acquisition::Analytic { shots: self.shots }
        } else {
            Acquisition::Sampled {
                shots: self.shots,
                resamples: self.resamples,
            }
        }
    }

    /// Parses `random_access_slots`: whitespace-separated `row:k` pairs.
    pub fn random_access_slots(&self) -> Result<Vec<QubitSlot>, HarnessError> {
        self.random_access_slots
            .split_whitespace()
            .map(|tok| {
                let bad = || HarnessError::Config(format!("bad slot `{tok}`, expected row:k"));
                let (r, k) = tok.split_once(':').ok_or_else(bad)?;
                let r = r.parse().map_err(|_| bad())?;
                let k = k.parse().map_err(|_| bad())?;
                Ok(QubitSlot::new(r, k)?)
            })
            .collect()
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(HarnessError::Config(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        if self.shots == 0 || self.efficiency_shots == 0 {
            return Err(HarnessError::Config("shot counts must be positive".into()));
        }
        if !self.analytic && self.resamples < MIN_RESAMPLES {
            return Err(HarnessError::Config(format!(
                "resamples must be at least {MIN_RESAMPLES}"
            )));
        }
        if !(self.storage_time_us.is_finite() && self.storage_time_us >= 0.0) {
            return Err(HarnessError::Config(
                "storage_time_us must be non-negative".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(HarnessError::Config("workers must be positive".into()));
        }
        Ok(())
    }

    /// Validates the configuration and loads or builds the efficiency map.
    pub fn resolve(&self) -> Result<Setup, HarnessError> {
        self.validate()?;
        let params = self.memory_params()?;
        let detector = self.detector()?;
        let (map, map_source) = match &self.efficiency_map_csv {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
                (EfficiencyMap::from_csv(&text)?, text)
            }
            None => {
                let map = default_efficiency_map(self.eta_center, self.eta_edge)?;
                let csv = map.to_csv();
                (map, csv)
            }
        };
        let config_hash = self.hash_with(&map_source);
        Ok(Setup {
            config: self.clone(),
            params,
            detector,
            map,
            config_hash,
        })
    }

    /// SHA-256 over every setting that affects results, plus the map.
    fn hash_with(&self, map_source: &str) -> String {
        let mut hashed = self.clone();
        hashed.workers = None;
        hashed.out_dir = PathBuf::new();
        hashed.efficiency_map_csv = None;
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&hashed).expect("config serializes"));
        h.update(map_source.as_bytes());
        hex::encode(&h.finalize()[..8])
    }
}

/// Validated configuration with everything derived from it.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub params: MemoryParams,
    pub detector: DetectorModel,
    pub map: EfficiencyMap,
    pub config_hash: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn defaults_resolve() {
        let setup = ExperimentConfig::default().resolve().unwrap();
        assert_abs_diff_eq!(setup.params.p_dep, 0.111, epsilon = 1e-12);
        assert_eq!(setup.params.tau_us, 27.8);
        assert_eq!(setup.detector.coupling_efficiency, 0.65);
        assert_eq!(setup.config_hash.len(), 16);
        let slots = setup.config.random_access_slots().unwrap();
        assert_eq!(
            slots,
            vec![
                QubitSlot::new(4, 1).unwrap(),
                QubitSlot::new(7, 3).unwrap(),
                QubitSlot::new(10, 5).unwrap(),
            ]
        );
    }

    #[test]
    fn parses_flat_text() {
        let cfg = ExperimentConfig::from_toml_str(
            "# comment\nmu = 0.7\np_dep = 0.0\nshots = 200\ntiming = \"warn\"\nenvelope = \"flat\"\n",
        )
        .unwrap();
        assert_eq!(cfg.mu, 0.7);
        assert_eq!(cfg.memory_params().unwrap().p_dep, 0.0);
        assert_eq!(cfg.timing, TimingPolicy::Warn);
        assert_eq!(cfg.envelope, LarmorEnvelope::Flat);
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("mu = \"x\"").is_err());
    }

    #[test]
    fn hash_ignores_execution_details() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            workers: Some(3),
            out_dir: "elsewhere".into(),
            ..a.clone()
        };
        let c = ExperimentConfig {
            seed: 1,
            ..a.clone()
        };
        let h = |c: &ExperimentConfig| c.resolve().unwrap().config_hash;
        assert_eq!(h(&a), h(&b));
        assert_ne!(h(&a), h(&c));
    }

    #[test]
    fn shipped_config_matches_defaults() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.toml");
        let cfg = ExperimentConfig::load(Path::new(path)).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            ExperimentConfig {
                mu: 0.0,
                ..Default::default()
            },
            ExperimentConfig {
                shots: 0,
                ..Default::default()
            },
            ExperimentConfig {
                resamples: 10,
                ..Default::default()
            },
            ExperimentConfig {
                target_fidelity: 0.4,
                ..Default::default()
            },
            ExperimentConfig {
                p_dep: Some(1.5),
                ..Default::default()
            },
            ExperimentConfig {
                eta_edge: 0.5,
                ..Default::default()
            },
            ExperimentConfig {
                coupling_efficiency: 2.0,
                ..Default::default()
            },
            ExperimentConfig {
                workers: Some(0),
                ..Default::default()
            },
            ExperimentConfig {
                random_access_slots: "4:9".into(),
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(
                cfg.resolve()
                    .and_then(|_| cfg.random_access_slots())
                    .is_err(),
                "{cfg:?}"
            );
        }
    }
}
