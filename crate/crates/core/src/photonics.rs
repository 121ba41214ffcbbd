//! Weak coherent pulses and threshold single-photon detectors.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qstate::PureQubit;

/// Fiber coupling efficiency of every addressed optical path.
pub const DEFAULT_COUPLING_EFFICIENCY: f64 = 0.65;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhotonicsError {
    #[error("mean photon number must be finite and non-negative, got {0}")]
    BadMeanPhotonNumber(f64),
    #[error("{name} = {value} outside its allowed range")]
    BadDetectorParameter { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentPulse {
    pub mean_photons: f64,
    pub state: PureQubit,
}

impl CoherentPulse {
    pub fn new(mean_photons: f64, state: PureQubit) -> Result<Self, PhotonicsError> {
        if !(mean_photons.is_finite() && mean_photons >= 0.0) {
            return Err(PhotonicsError::BadMeanPhotonNumber(mean_photons));
        }
        Ok(Self {
            mean_photons,
            state,
        })
    }
}

/// Non-number-resolving detector behind the output fiber. Any number of
/// arriving photons yields one click.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub quantum_efficiency: f64,
    /// Background click probability per detection gate.
    pub dark_click_prob: f64,
    pub coupling_efficiency: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            quantum_efficiency: 1.0,
            dark_click_prob: 0.0,
            coupling_efficiency: DEFAULT_COUPLING_EFFICIENCY,
        }
    }
}

impl DetectorModel {
    pub fn new(
        quantum_efficiency: f64,
        dark_click_prob: f64,
        coupling_efficiency: f64,
    ) -> Result<Self, PhotonicsError> {
        let d = Self {
            quantum_efficiency,
            dark_click_prob,
            coupling_efficiency,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), PhotonicsError> {
        let unit = |name, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(PhotonicsError::BadDetectorParameter { name, value })
            }
        };
        unit("quantum_efficiency", self.quantum_efficiency)?;
        unit("coupling_efficiency", self.coupling_efficiency)?;
        if !(0.0..1.0).contains(&self.dark_click_prob) {
            return Err(PhotonicsError::BadDetectorParameter {
                name: "dark_click_prob",
                value: self.dark_click_prob,
            });
        }
        Ok(())
    }

    /// Probability that one photon leaving the memory produces a click.
    pub fn path_efficiency(&self) -> f64 {
        self.quantum_efficiency * self.coupling_efficiency
    }
}

/// Poisson photon number of one pulse.
pub fn sample_photon_number<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> u64 {
    if mu <= 0.0 || !mu.is_finite() {
        return 0;
    }
    match Poisson::new(mu) {
        Ok(p) => p.sample(rng) as u64,
        Err(_) => 0,
    }
}

/// `1 − (1 − dark)·exp(−qe·coupling·m)` for `m` mean photons arriving at
/// the fiber.
pub fn click_probability(mean_photons_at_detector: f64, det: &DetectorModel) -> f64 {
    let m = mean_photons_at_detector.max(0.0);
    let no_click = (1.0 - det.dark_click_prob) * (-det.path_efficiency() * m).exp();
    1.0 - no_click
}

/// One pulse through memory and detector: Poisson photon number, each
/// photon independently retrieved (`eta`) and detected, plus background.
pub fn simulate_click<R: Rng + ?Sized>(
    mu: f64,
    eta: f64,
    det: &DetectorModel,
    rng: &mut R,
) -> bool {
    let n = sample_photon_number(mu, rng);
    let p = (eta * det.path_efficiency()).clamp(0.0, 1.0);
    let detected = if n == 0 || p == 0.0 {
        0
    } else {
        Binomial::new(n, p).map(|b| b.sample(rng)).unwrap_or(0)
    };
    detected > 0 || (det.dark_click_prob > 0.0 && rng.random::<f64>() < det.dark_click_prob)
}
