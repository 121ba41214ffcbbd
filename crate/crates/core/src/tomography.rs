//! Single-qubit state tomography in the Z, X and Y bases.
//!
//! Reconstruction is linear inversion, `ρ = (I + r·σ)/2` with each Bloch
//! component estimated as `(n+ − n−)/(n+ + n−)`, followed by radial
//! projection back into the Bloch ball when statistical noise pushes `|r|`
//! past one. Fidelity errors come from a bootstrap that redraws each
//! basis' counts binomially.

use std::fmt;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::{EfficiencyMap, MemoryError, MemoryParams, QubitSlot, StoredExcitation};
use crate::qstate::{fidelity, BlochVector, DensityMatrix, InputState, PureQubit, QStateError};

pub const DEFAULT_SHOTS: u64 = 500;
pub const DEFAULT_RESAMPLES: usize = 1000;
pub const MIN_RESAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TomographyError {
    #[error("no counts recorded in the {0} basis")]
    ZeroCounts(Basis),
    #[error("invalid count {0}")]
    BadCount(f64),
    #[error("at least {MIN_RESAMPLES} bootstrap resamples required, got {0}")]
    TooFewResamples(usize),
    #[error("shots must be positive")]
    NoShots,
    #[error("counts CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    State(#[from] QStateError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
    Y,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::Z, Basis::X, Basis::Y];

    /// The `+1` eigenstate: `|U⟩`, `|+⟩` or `|σ+⟩`.
    pub fn plus_state(self) -> PureQubit {
        match self {
            Basis::Z => PureQubit::u(),
            Basis::X => PureQubit::plus(),
            Basis::Y => PureQubit::sigma_plus(),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn component(self, r: &BlochVector) -> f64 {
        match self {
            Basis::Z => r.z,
            Basis::X => r.x,
            Basis::Y => r.y,
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Z => "Z",
            Basis::X => "X",
            Basis::Y => "Y",
        })
    }
}

/// Outcome counts of one basis. Sampled runs hold whole numbers; analytic
/// runs hold expectation values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BasisCounts {
    pub n_plus: f64,
    pub n_minus: f64,
}

impl BasisCounts {
    pub fn new(n_plus: f64, n_minus: f64) -> Result<Self, TomographyError> {
        for v in [n_plus, n_minus] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(TomographyError::BadCount(v));
            }
        }
        Ok(Self { n_plus, n_minus })
    }

    pub fn total(&self) -> f64 {
        self.n_plus + self.n_minus
    }

    fn is_integral(&self) -> bool {
        self.n_plus.fract() == 0.0 && self.n_minus.fract() == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CountsTable {
    pub z: BasisCounts,
    pub x: BasisCounts,
    pub y: BasisCounts,
}

impl CountsTable {
    pub fn get(&self, basis: Basis) -> BasisCounts {
        match basis {
            Basis::Z => self.z,
            Basis::X => self.x,
            Basis::Y => self.y,
        }
    }

    pub fn set(&mut self, basis: Basis, counts: BasisCounts) {
        match basis {
            Basis::Z => self.z = counts,
            Basis::X => self.x = counts,
            Basis::Y => self.y = counts,
        }
    }

    /// Exact expected counts of `shots` measurements per basis.
    pub fn expected(rho: &DensityMatrix, shots: u64) -> Self {
        let mut t = Self::default();
        for b in Basis::ALL {
            let p = fidelity(&b.plus_state(), rho);
            let n = shots as f64;
            t.set(
                b,
                BasisCounts {
                    n_plus: p * n,
                    n_minus: (1.0 - p) * n,
                },
            );
        }
        t
    }

    /// `basis,n_plus,n_minus` header followed by one row per basis.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("basis,n_plus,n_minus\n");
        for b in Basis::ALL {
            let c = self.get(b);
            out.push_str(&format!("{b},{},{}\n", c.n_plus, c.n_minus));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, TomographyError> {
        let mut table = Self::default();
        let mut seen = [false; 3];
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("basis") {
                continue;
            }
            let err = |msg: String| TomographyError::Csv(format!("line {}: {msg}", i + 1));
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err("expected 3 fields".into()));
            }
            let basis = match fields[0] {
                "Z" => Basis::Z,
                "X" => Basis::X,
                "Y" => Basis::Y,
                other => return Err(err(format!("unknown basis `{other}`"))),
            };
            let parse = |s: &str| s.parse::<f64>().map_err(|e| err(e.to_string()));
            table.set(
                basis,
                BasisCounts::new(parse(fields[1])?, parse(fields[2])?)?,
            );
            seen[basis.index()] = true;
        }
        if let Some(b) = Basis::ALL.into_iter().find(|b| !seen[b.index()]) {
            return Err(TomographyError::ZeroCounts(b));
        }
        Ok(table)
    }
}

/// `shots` projective measurements of `rho` in `basis`.
pub fn measure_basis<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    basis: Basis,
    shots: u64,
    rng: &mut R,
) -> Result<BasisCounts, TomographyError> {
    if shots == 0 {
        return Err(TomographyError::NoShots);
    }
    let p = fidelity(&basis.plus_state(), rho);
    let n_plus = Binomial::new(shots, p)
        .expect("probability clamped to [0, 1]")
        .sample(rng);
    Ok(BasisCounts {
        n_plus: n_plus as f64,
        n_minus: (shots - n_plus) as f64,
    })
}

/// Raw linear-inversion Bloch vector; may lie outside the unit ball.
pub fn bloch_estimate(counts: &CountsTable) -> Result<BlochVector, TomographyError> {
    let mut r = [0.0; 3];
    for b in Basis::ALL {
        let c = counts.get(b);
        BasisCounts::new(c.n_plus, c.n_minus)?;
        if c.total() <= 0.0 {
            return Err(TomographyError::ZeroCounts(b));
        }
        r[b.index()] = (c.n_plus - c.n_minus) / c.total();
    }
    Ok(BlochVector::new(r[1], r[2], r[0]))
}

/// Scales `r` onto the unit sphere when it lies outside the Bloch ball.
pub fn project_to_ball(r: BlochVector) -> BlochVector {
    let n = r.norm();
    if n > 1.0 {
        r.scale(1.0 / n)
    } else {
        r
    }
}

pub fn reconstruct(counts: &CountsTable) -> Result<DensityMatrix, TomographyError> {
    let r = project_to_ball(bloch_estimate(counts)?);
    Ok(DensityMatrix::from_bloch(r)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TomographyResult {
    pub rho: DensityMatrix,
    pub fidelity: f64,
    /// Zero when the counts leave no room for fluctuation (e.g. every shot
    /// in one outcome).
    pub std_dev: f64,
}

/// First-order error propagation of the binomial count noise into
/// `F = (1 + r·t)/2`, where `t` is the target's Bloch vector.
pub fn delta_method_std_dev(
    counts: &CountsTable,
    target: &PureQubit,
) -> Result<f64, TomographyError> {
    let r = bloch_estimate(counts)?;
    let t = target.bloch();
    let var: f64 = Basis::ALL
        .iter()
        .map(|&b| {
            let rb = b.component(&r).clamp(-1.0, 1.0);
            let tb = b.component(&t);
            0.25 * tb * tb * (1.0 - rb * rb) / counts.get(b).total()
        })
        .sum();
    Ok(var.sqrt())
}

/// Fidelity of the reconstructed state with `target`, with a bootstrap
/// standard deviation. Fractional (analytic) counts fall back to
/// [`delta_method_std_dev`].
pub fn estimate_fidelity<R: Rng + ?Sized>(
    counts: &CountsTable,
    target: &PureQubit,
    resamples: usize,
    rng: &mut R,
) -> Result<TomographyResult, TomographyError> {
    if resamples < MIN_RESAMPLES {
        return Err(TomographyError::TooFewResamples(resamples));
    }
    let rho = reconstruct(counts)?;
    let f = fidelity(target, &rho);

    let integral = Basis::ALL.iter().all(|&b| counts.get(b).is_integral());
    let std_dev = if integral {
        let mut samples = Vec::with_capacity(resamples);
        for _ in 0..resamples {
            let mut boot = CountsTable::default();
            for b in Basis::ALL {
                let c = counts.get(b);
                let n = c.total() as u64;
                let p = c.n_plus / c.total();
                let k = Binomial::new(n, p).expect("valid binomial").sample(rng);
                boot.set(
                    b,
                    BasisCounts {
                        n_plus: k as f64,
                        n_minus: (n - k) as f64,
                    },
                );
            }
            samples.push(fidelity(target, &reconstruct(&boot)?));
        }
        sample_std(&samples)
    } else {
        delta_method_std_dev(counts, target)?
    };
    Ok(TomographyResult {
        rho,
        fidelity: f,
        std_dev,
    })
}

fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    var.sqrt()
}

/// Memory channel seen by one qubit: map, parameters and storage time.
#[derive(Debug, Clone, Copy)]
pub struct StorageChannel<'a> {
    pub map: &'a EfficiencyMap,
    pub params: &'a MemoryParams,
    pub storage_time_us: f64,
}

impl StorageChannel<'_> {
    /// State retrieved from `slot` after writing `input`, conditioned on a
    /// retrieved photon.
    pub fn transmit(
        &self,
        slot: QubitSlot,
        input: &PureQubit,
    ) -> Result<DensityMatrix, TomographyError> {
        let exc = StoredExcitation {
            slot,
            state: input.to_density(),
            write_time_us: 0.0,
        };
        Ok(exc
            .retrieve(self.storage_time_us, self.map, self.params)?
            .state)
    }
}

/// How tomography counts are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acquisition {
    /// Exact expected counts; errors by first-order propagation.
    Analytic { shots: u64 },
    /// Binomially sampled counts; bootstrap errors.
    Sampled { shots: u64, resamples: usize },
}

impl Acquisition {
    pub fn shots(&self) -> u64 {
        match *self {
            Acquisition::Analytic { shots } | Acquisition::Sampled { shots, .. } => shots,
        }
    }
}

/// Tomography of one stored and retrieved state, with counts and result.
pub fn tomograph_state<F, R>(
    rho: &DensityMatrix,
    target: &PureQubit,
    acquisition: Acquisition,
    mut rng_for: F,
) -> Result<(CountsTable, TomographyResult), TomographyError>
where
    F: FnMut(Option<Basis>) -> R,
    R: Rng,
{
    if acquisition.shots() == 0 {
        return Err(TomographyError::NoShots);
    }
    match acquisition {
        Acquisition::Analytic { shots } => {
            let counts = CountsTable::expected(rho, shots);
            let rho_hat = reconstruct(&counts)?;
            let res = TomographyResult {
                rho: rho_hat,
                fidelity: fidelity(target, &rho_hat),
                std_dev: delta_method_std_dev(&counts, target)?,
            };
            Ok((counts, res))
        }
        Acquisition::Sampled { shots, resamples } => {
            let mut counts = CountsTable::default();
            for b in Basis::ALL {
                counts.set(b, measure_basis(rho, b, shots, &mut rng_for(Some(b)))?);
            }
            let res = estimate_fidelity(&counts, target, resamples, &mut rng_for(None))?;
            Ok((counts, res))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SixStateReport {
    pub mean_fidelity: f64,
    /// `sqrt(Σ σ_k²)/6`
    pub std_dev: f64,
    pub per_state: Vec<TomographyResult>,
}

pub fn combine_six(per_state: Vec<TomographyResult>) -> SixStateReport {
    let n = per_state.len() as f64;
    let mean_fidelity = per_state.iter().map(|r| r.fidelity).sum::<f64>() / n;
    let std_dev = per_state
        .iter()
        .map(|r| r.std_dev * r.std_dev)
        .sum::<f64>()
        .sqrt()
        / n;
    SixStateReport {
        mean_fidelity,
        std_dev,
        per_state,
    }
}

/// Write, store, read and tomograph each of the six complementary inputs
/// on `slot`; equal-weight mean fidelity with propagated error.
///
/// `rng_for(state, basis)` supplies the random stream for the measurement
/// of `basis`, or for the bootstrap when `basis` is `None`.
pub fn average_six_state_fidelity<F, R>(
    channel: &StorageChannel<'_>,
    slot: QubitSlot,
    acquisition: Acquisition,
    mut rng_for: F,
) -> Result<SixStateReport, TomographyError>
where
    F: FnMut(InputState, Option<Basis>) -> R,
    R: Rng,
{
    let mut per_state = Vec::with_capacity(6);
    for input in InputState::ALL {
        let psi = input.state();
        let rho = channel.transmit(slot, &psi)?;
        let (_, res) = tomograph_state(&rho, &psi, acquisition, |b| rng_for(input, b))?;
        per_state.push(res);
    }
    Ok(combine_six(per_state))
}
