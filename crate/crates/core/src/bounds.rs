//! Classical (measure-and-prepare) fidelity bounds.
//!
//! A memory only demonstrates quantum storage if its conditional fidelity
//! beats every classical strategy fed with the same input. Three bounds are
//! provided, each tighter on the classical side than the last:
//!
//! * a single photon sampled from the six complementary states: 2/3,
//! * a weak coherent pulse with Poissonian photon number: [`coherent_bound`],
//! * the same pulse when the memory only returns a photon with probability
//!   `η`: [`coherent_bound_with_efficiency`]. The classical device may then
//!   discard the low photon-number events and answer only on the rest.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Photon-number series are summed up to and including this index.
pub const SERIES_CUTOFF: usize = 200;
/// Largest tolerated estimate of the neglected series tail.
pub const TAIL_TOL: f64 = 1e-15;
/// Tolerance on `η_C = η`.
pub const ETA_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("mean photon number must be positive, got {0}")]
    BadMeanPhotonNumber(f64),
    #[error("efficiency must lie in (0, 1], got {0}")]
    BadEfficiency(f64),
    #[error("qubit count must be at least 1")]
    BadQubitCount,
    #[error("photon-number series does not converge below cutoff {cutoff} (tail {tail:e})")]
    NonConvergent { cutoff: usize, tail: f64 },
    #[error("classical efficiency {eta_c} does not reproduce requested {eta}")]
    EfficiencyMismatch { eta: f64, eta_c: f64 },
    #[error("standard deviation must be positive, got {0}")]
    BadStdDev(f64),
    #[error("value {0} outside [0, 1]")]
    OutOfRange(f64),
}

fn check_mu(mu: f64) -> Result<(), BoundsError> {
    if mu.is_finite() && mu > 0.0 {
        Ok(())
    } else {
        Err(BoundsError::BadMeanPhotonNumber(mu))
    }
}

/// `P(μ, n) = e^{−μ} μⁿ / n!`, evaluated in log space.
pub fn poisson_pmf(mu: f64, n: u32) -> Result<f64, BoundsError> {
    check_mu(mu)?;
    let ln_fact: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
    Ok((-mu + n as f64 * mu.ln() - ln_fact).exp())
}

/// `P(μ, 0..=SERIES_CUTOFF)` by forward recurrence, with a check that the
/// discarded tail is negligible.
fn poisson_weights(mu: f64) -> Result<Vec<f64>, BoundsError> {
    check_mu(mu)?;
    let mut w = Vec::with_capacity(SERIES_CUTOFF + 1);
    let mut p = (-mu).exp();
    w.push(p);
    for n in 1..=SERIES_CUTOFF {
        p *= mu / n as f64;
        w.push(p);
    }
    // Geometric majorant of Σ_{n>cutoff} P(μ, n).
    let next = w[SERIES_CUTOFF] * mu / (SERIES_CUTOFF + 1) as f64;
    let ratio = mu / (SERIES_CUTOFF + 2) as f64;
    let tail = if ratio < 1.0 {
        next / (1.0 - ratio)
    } else {
        f64::INFINITY
    };
    if !(tail < TAIL_TOL) || w.iter().any(|x| !x.is_finite()) {
        return Err(BoundsError::NonConvergent {
            cutoff: SERIES_CUTOFF,
            tail,
        });
    }
    Ok(w)
}

/// Suffix sums `s[i] = Σ_{n≥i} w[n]`, accumulated from the small end.
fn suffix_sums(w: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; w.len() + 1];
    for i in (0..w.len()).rev() {
        s[i] = s[i + 1] + w[i];
    }
    s
}

fn photon_fidelity(n: usize) -> f64 {
    (n as f64 + 1.0) / (n as f64 + 2.0)
}

/// Per-input average fidelities `[F̄_U, F̄_D, F̄_+, F̄_−, F̄_σ+, F̄_σ−]` of the
/// measure-and-prepare strategy that measures in the basis
/// `|ψ+⟩ = cos(θ/2)|U⟩ + e^{iφ} sin(θ/2)|D⟩`, `|ψ−⟩ = −sin(θ/2)|U⟩ + e^{iφ} cos(θ/2)|D⟩`
/// and re-prepares the observed basis state.
///
/// Each entry is `Σ_k |⟨ψ_k|in⟩|² · |⟨ψ_k|in⟩|²`: outcome probability times
/// the fidelity of the re-prepared state.
pub fn six_state_components(theta: f64, phi: f64) -> [f64; 6] {
    use crate::qstate::{complementary_states, PureQubit};
    use num_complex::Complex64;

    let (s, c) = (theta / 2.0).sin_cos();
    let e = Complex64::from_polar(1.0, phi);
    let plus = PureQubit::raw_unchecked(Complex64::new(c, 0.0), e * s);
    let minus = PureQubit::raw_unchecked(Complex64::new(-s, 0.0), e * c);
    complementary_states().map(|input| {
        [plus, minus]
            .iter()
            .map(|b| b.inner(&input).norm_sqr().powi(2))
            .sum()
    })
}

/// Equal-weight average of [`six_state_components`]. Independent of the
/// measurement angles: always 2/3.
pub fn six_state_average(theta: f64, phi: f64) -> f64 {
    six_state_components(theta, phi).iter().sum::<f64>() / 6.0
}

/// Optimal classical fidelity `(N + 1) / (N + 2)` for `N` identical copies.
pub fn nqubit_bound(n: u32) -> Result<f64, BoundsError> {
    if n < 1 {
        return Err(BoundsError::BadQubitCount);
    }
    Ok(photon_fidelity(n as usize))
}

/// Classical bound for a weak coherent pulse of mean photon number `mu`,
/// conditioned on at least one photon:
///
/// `F(μ) = [(1 − e^{−μ} − μ + μ²)/μ² − e^{−μ}/2] / (1 − e^{−μ})`.
pub fn coherent_bound(mu: f64) -> Result<f64, BoundsError> {
    check_mu(mu)?;
    let one_minus_p0 = -(-mu).exp_m1();
    let numer = ((one_minus_p0 - mu) + mu * mu) / (mu * mu) - 0.5 * (-mu).exp();
    Ok(numer / one_minus_p0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub mu: f64,
    pub eta: f64,
}

impl BoundParams {
    pub fn new(mu: f64, eta: f64) -> Result<Self, BoundsError> {
        let p = Self { mu, eta };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<(), BoundsError> {
        check_mu(self.mu)?;
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(BoundsError::BadEfficiency(self.eta));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSolution {
    /// Smallest photon number the classical device still answers on.
    pub n_min: u32,
    /// Partial weight given to the `n_min` photon events.
    pub gamma: f64,
    /// Output probability of the classical device; equals the requested `η`.
    pub eta_c: f64,
    pub bound: f64,
}

/// Efficiency-aware classical bound.
///
/// The classical device answers on every event with more than `n_min`
/// photons and on a fraction of the `n_min` events (total weight `γ`), so
/// that its output probability matches the memory efficiency `η`:
///
/// * `n_min = min { i : Σ_{n≥i+1} P(μ,n) ≤ (1 − P(μ,0))·η }`
/// * `γ = (1 − P(μ,0))·η − Σ_{n≥n_min+1} P(μ,n)`, with `0 ≤ γ < P(μ,n_min)`
/// * `F = [F_{n_min}·γ + Σ_{n≥n_min+1} F_n·P(μ,n)] / [γ + Σ_{n≥n_min+1} P(μ,n)]`
///
/// where `F_n = (n + 1)/(n + 2)`.
pub fn coherent_bound_with_efficiency(params: BoundParams) -> Result<BoundSolution, BoundsError> {
    params.validate()?;
    let BoundParams { mu, eta } = params;
    let w = poisson_weights(mu)?;
    let tail = suffix_sums(&w);
    let one_minus_p0 = -(-mu).exp_m1();
    let target = one_minus_p0 * eta;
    // Relative slack absorbs the rounding gap between the summed tail and
    // the closed form of 1 − P(μ, 0) at η = 1.
    let slack = target * 1e-14;

    let n_min = (0..SERIES_CUTOFF)
        .find(|&i| tail[i + 1] <= target + slack)
        .ok_or(BoundsError::NonConvergent {
            cutoff: SERIES_CUTOFF,
            tail: tail[SERIES_CUTOFF],
        })?;
    let upper = tail[n_min + 1];
    let gamma = (target - upper).max(0.0);

    let weighted: f64 = (n_min + 1..=SERIES_CUTOFF)
        .rev()
        .map(|n| photon_fidelity(n) * w[n])
        .sum();
    let denom = gamma + upper;
    let bound = (photon_fidelity(n_min) * gamma + weighted) / denom;

    let eta_c = denom / one_minus_p0;
    if (eta_c - eta).abs() > ETA_MATCH_TOL {
        return Err(BoundsError::EfficiencyMismatch { eta, eta_c });
    }
    Ok(BoundSolution {
        n_min: n_min as u32,
        gamma,
        eta_c,
        bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub difference: f64,
    pub sigmas: f64,
}

/// Gap between a measured fidelity and its classical bound, absolute and in
/// units of the measurement's standard deviation.
pub fn margin(measured_fidelity: f64, bound: f64, std_dev: f64) -> Result<Margin, BoundsError> {
    for v in [measured_fidelity, bound] {
        if !(0.0..=1.0).contains(&v) {
            return Err(BoundsError::OutOfRange(v));
        }
    }
    if !(std_dev > 0.0) || !std_dev.is_finite() {
        return Err(BoundsError::BadStdDev(std_dev));
    }
    let difference = measured_fidelity - bound;
    Ok(Margin {
        difference,
        sigmas: difference / std_dev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Direct evaluation `e^{−μ} μⁿ / n!`, no recurrence, no logs.
    fn pmf_direct(mu: f64, n: u32) -> f64 {
        (-mu).exp() * mu.powi(n as i32) / factorial(n)
    }

    /// Independent brute-force oracle for the efficiency-aware bound: scans
    /// every cutoff `i`, recomputing each partial sum from scratch.
    fn efficiency_bound_oracle(mu: f64, eta: f64) -> (u32, f64, f64) {
        let tail = |from: u32| -> f64 { (from..=100).map(|n| pmf_direct(mu, n)).sum() };
        let budget = (1.0 - pmf_direct(mu, 0)) * eta;
        let mut i = 0;
        while tail(i + 1) > budget * (1.0 + 1e-12) {
            i += 1;
        }
        let gamma = (budget - tail(i + 1)).max(0.0);
        let fid = |n: u32| (n as f64 + 1.0) / (n as f64 + 2.0);
        let num = fid(i) * gamma
            + (i + 1..=100)
                .map(|n| fid(n) * pmf_direct(mu, n))
                .sum::<f64>();
        (i, gamma, num / (gamma + tail(i + 1)))
    }

    #[test]
    fn pmf_values() {
        assert_abs_diff_eq!(
            poisson_pmf(0.5, 0).unwrap(),
            0.606_530_659_712_633_4,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(poisson_pmf(1.0, 1).unwrap(), (-1f64).exp(), epsilon = 1e-15);
        for mu in [0.1, 0.5, 1.0, 4.0, 10.0] {
            let total: f64 = (0..=200).map(|n| poisson_pmf(mu, n).unwrap()).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
        assert!(poisson_pmf(200.0, 200).unwrap().is_finite());
        assert!(matches!(
            poisson_pmf(0.0, 1),
            Err(BoundsError::BadMeanPhotonNumber(_))
        ));
        assert!(matches!(
            poisson_pmf(-1.0, 1),
            Err(BoundsError::BadMeanPhotonNumber(_))
        ));
    }

    /// Per-input fidelities written out term by term in the measurement
    /// angles, independent of the state-vector code path.
    fn literal_components(theta: f64, phi: f64) -> [f64; 6] {
        use num_complex::Complex64 as C;
        let (s, c) = (theta / 2.0).sin_cos();
        let e = C::from_polar(1.0, phi);
        let i = C::i();
        let one = C::new(1.0, 0.0);
        let a = |z: C| z.norm_sqr();
        let fu = c.powi(4) + s.powi(4);
        let fp = a(c * one + e * s).powi(2) / 4.0 + a(c * one - e * s) * a(e * c - s) / 4.0;
        let fm = a(c * one - e * s).powi(2) / 4.0 + a(c * one + e * s) * a(-e * c - s) / 4.0;
        let fsp =
            a(c * one + i * e * s).powi(2) / 4.0 + a(c * one - i * e * s) * a(-i * e * c + s) / 4.0;
        let fsm =
            a(c * one - i * e * s).powi(2) / 4.0 + a(c * one + i * e * s) * a(i * e * c + s) / 4.0;
        [fu, fu, fp, fm, fsp, fsm]
    }

    #[test]
    fn six_state_examples() {
        assert_abs_diff_eq!(six_state_average(0.0, 0.0), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(six_state_average(1.234, 2.345), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(six_state_components(0.0, 0.0)[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn nqubit_values() {
        assert_eq!(nqubit_bound(1).unwrap(), 2.0 / 3.0);
        assert_eq!(nqubit_bound(2).unwrap(), 0.75);
        let seq: Vec<f64> = (1..50).map(|n| nqubit_bound(n).unwrap()).collect();
        assert!(seq.windows(2).all(|w| w[1] > w[0]));
        assert!(1.0 - nqubit_bound(1_000_000).unwrap() < 1e-5);
        assert_eq!(nqubit_bound(0), Err(BoundsError::BadQubitCount));
    }

    #[test]
    fn coherent_bound_values() {
        let f = coherent_bound(0.5).unwrap();
        assert_abs_diff_eq!(f, 0.688, epsilon = 5e-4);
        // First-order term is μ/24, so μ = 1e-4 still sits 4.2e-6 above 2/3.
        assert_abs_diff_eq!(
            coherent_bound(1e-4).unwrap(),
            2.0 / 3.0 + 1e-4 / 24.0,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(coherent_bound(1e-5).unwrap(), 2.0 / 3.0, epsilon = 1e-6);
        for mu in [0.1, 0.25, 0.5, 1.0, 2.0] {
            let series: f64 = (1..=100)
                .map(|n| (n as f64 + 1.0) / (n as f64 + 2.0) * pmf_direct(mu, n))
                .sum::<f64>()
                / (1.0 - pmf_direct(mu, 0));
            assert_abs_diff_eq!(coherent_bound(mu).unwrap(), series, epsilon = 1e-10);
        }
        assert!(coherent_bound(0.0).is_err());
    }

    #[test]
    fn efficiency_bound_spot_values() {
        // Frozen from `efficiency_bound_oracle` and an independent
        // floating-point script before the implementation existed.
        let s = coherent_bound_with_efficiency(BoundParams::new(0.5, 0.18).unwrap()).unwrap();
        assert_eq!(s.n_min, 2);
        assert_abs_diff_eq!(s.bound, 0.761_043_312_780_569_5, epsilon = 1e-9);
        assert_abs_diff_eq!(s.gamma, 0.056_436_803_284_755_3, epsilon = 1e-12);
        let s = coherent_bound_with_efficiency(BoundParams::new(0.5, 0.02).unwrap()).unwrap();
        assert_eq!(s.n_min, 3);
        assert_abs_diff_eq!(s.bound, 0.807_974_318_988_872_5, epsilon = 1e-9);

        let s = coherent_bound_with_efficiency(BoundParams::new(0.5, 1.0).unwrap()).unwrap();
        assert_eq!(s.n_min, 0);
        assert_eq!(s.gamma, 0.0);
        assert_abs_diff_eq!(s.bound, coherent_bound(0.5).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn efficiency_bound_matches_oracle() {
        for mu in [0.1, 0.5, 1.0, 2.0] {
            for eta in [0.01, 0.02, 0.05, 0.18, 0.4, 0.77, 1.0] {
                let s = coherent_bound_with_efficiency(BoundParams::new(mu, eta).unwrap()).unwrap();
                let (n, g, b) = efficiency_bound_oracle(mu, eta);
                assert_eq!(s.n_min, n, "mu={mu} eta={eta}");
                assert_abs_diff_eq!(s.gamma, g, epsilon = 1e-12);
                assert_abs_diff_eq!(s.bound, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn efficiency_bound_rejects_bad_params() {
        assert_eq!(
            BoundParams::new(0.5, 0.0),
            Err(BoundsError::BadEfficiency(0.0))
        );
        assert_eq!(
            BoundParams::new(0.5, 1.01),
            Err(BoundsError::BadEfficiency(1.01))
        );
        assert!(BoundParams::new(-0.5, 0.5).is_err());
        let huge = BoundParams {
            mu: 500.0,
            eta: 0.5,
        };
        assert!(matches!(
            coherent_bound_with_efficiency(huge),
            Err(BoundsError::NonConvergent { .. })
        ));
    }

    #[test]
    fn bound_grid_properties() {
        let mus = [0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0];
        for mu in mus {
            let base = coherent_bound(mu).unwrap();
            let mut prev = f64::INFINITY;
            for k in 1..=100 {
                let eta = k as f64 / 100.0;
                let s = coherent_bound_with_efficiency(BoundParams::new(mu, eta).unwrap()).unwrap();
                let p = poisson_pmf(mu, s.n_min).unwrap();
                assert!(s.gamma >= 0.0 && s.gamma < p, "mu={mu} eta={eta} {s:?}");
                assert!((s.eta_c - eta).abs() <= ETA_MATCH_TOL);
                assert!(s.bound >= 2.0 / 3.0 && s.bound < 1.0);
                assert!(s.bound >= base - 1e-12);
                assert!(s.bound <= prev + 1e-12, "not monotone at mu={mu} eta={eta}");
                prev = s.bound;
            }
        }
    }

    #[test]
    fn coherent_bound_increasing() {
        let vals: Vec<f64> = (1..=500)
            .map(|k| coherent_bound(k as f64 * 0.01).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn margin_examples() {
        let m = margin(0.9445, 0.688, 0.0006).unwrap();
        assert_abs_diff_eq!(m.difference, 0.2565, epsilon = 1e-12);
        assert_eq!(
            margin(0.8, 0.8, 0.01).unwrap(),
            Margin {
                difference: 0.0,
                sigmas: 0.0
            }
        );
        let m = margin(0.872, 0.808, 0.016).unwrap();
        assert_abs_diff_eq!(m.difference, 0.064, epsilon = 1e-12);
        assert_abs_diff_eq!(m.sigmas, 4.0, epsilon = 1e-9);
        assert!(matches!(
            margin(0.9, 0.7, 0.0),
            Err(BoundsError::BadStdDev(_))
        ));
        assert!(matches!(
            margin(1.2, 0.7, 0.1),
            Err(BoundsError::OutOfRange(_))
        ));
    }

    proptest! {
        #[test]
        fn six_state_average_is_two_thirds(theta in -10.0..10.0f64, phi in -10.0..10.0f64) {
            prop_assert!((six_state_average(theta, phi) - 2.0 / 3.0).abs() < 1e-12);
            let lit = literal_components(theta, phi);
            let ours = six_state_components(theta, phi);
            for k in 0..6 {
                prop_assert!((lit[k] - ours[k]).abs() < 1e-12);
            }
        }
    }
}
