//! Dual-rail qubit states.
//!
//! A qubit is carried by one photon spread over two optical rails, `|U⟩` and
//! `|D⟩`. Bloch axes are fixed once for the whole crate:
//!
//! | states      | axis |
//! |-------------|------|
//! | `|U⟩`, `|D⟩`  | ±z   |
//! | `|±⟩`        | ±x   |
//! | `|σ±⟩`       | ±y   |
//!
//! so that `ρ = (I + rx·X + ry·Y + rz·Z) / 2` with the usual Pauli matrices
//! written in the `{|U⟩, |D⟩}` basis.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `|c0|² + |c1|² = 1`.
pub const NORM_TOL: f64 = 1e-12;
/// Tolerance on Hermiticity and unit trace.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues may dip this far below zero before a state is rejected.
pub const EIGEN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QStateError {
    #[error("amplitudes not normalized: |c0|^2 + |c1|^2 = {0}")]
    NotNormalized(f64),
    #[error("matrix is not Hermitian (off-diagonal mismatch {0:e})")]
    NotHermitian(f64),
    #[error("trace is {0}, expected 1")]
    BadTrace(f64),
    #[error("negative eigenvalue {0:e}")]
    NegativeEigenvalue(f64),
    #[error("Bloch vector length {0} exceeds 1")]
    BlochTooLong(f64),
    #[error("depolarizing probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("non-finite entry")]
    NonFinite,
}

/// Pure dual-rail state `c0|U⟩ + c1|D⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PureQubit {
    c0: Complex64,
    c1: Complex64,
}

impl PureQubit {
    pub fn new(c0: Complex64, c1: Complex64) -> Result<Self, QStateError> {
        let norm = c0.norm_sqr() + c1.norm_sqr();
        if !norm.is_finite() {
            return Err(QStateError::NonFinite);
        }
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(QStateError::NotNormalized(norm));
        }
        Ok(Self { c0, c1 })
    }

    /// Rescales arbitrary non-zero amplitudes onto the unit sphere.
    pub fn normalized(c0: Complex64, c1: Complex64) -> Result<Self, QStateError> {
        let norm = (c0.norm_sqr() + c1.norm_sqr()).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(QStateError::NotNormalized(norm * norm));
        }
        Ok(Self {
            c0: c0 / norm,
            c1: c1 / norm,
        })
    }

    pub(crate) const fn raw_unchecked(c0: Complex64, c1: Complex64) -> Self {
        Self { c0, c1 }
    }

    pub fn u() -> Self {
        Self::raw_unchecked(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
    }

    pub fn d() -> Self {
        Self::raw_unchecked(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
    }

    pub fn plus() -> Self {
        Self::raw_unchecked(
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            Complex64::new(FRAC_1_SQRT_2, 0.0),
        )
    }

    pub fn minus() -> Self {
        Self::raw_unchecked(
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            Complex64::new(-FRAC_1_SQRT_2, 0.0),
        )
    }

    pub fn sigma_plus() -> Self {
        Self::raw_unchecked(
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            Complex64::new(0.0, FRAC_1_SQRT_2),
        )
    }

    pub fn sigma_minus() -> Self {
        Self::raw_unchecked(
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            Complex64::new(0.0, -FRAC_1_SQRT_2),
        )
    }

    /// State on the Bloch sphere at polar angle `theta` and azimuth `phi`.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        Self::raw_unchecked(Complex64::new(c, 0.0), Complex64::from_polar(s, phi))
    }

    pub fn c0(&self) -> Complex64 {
        self.c0
    }

    pub fn c1(&self) -> Complex64 {
        self.c1
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &PureQubit) -> Complex64 {
        self.c0.conj() * other.c0 + self.c1.conj() * other.c1
    }

    /// State orthogonal to `self` (up to a global phase).
    pub fn orthogonal(&self) -> Self {
        Self::raw_unchecked(-self.c1.conj(), self.c0.conj())
    }

    pub fn to_density(&self) -> DensityMatrix {
        let (a, b) = (self.c0, self.c1);
        DensityMatrix {
            m: [[a * a.conj(), a * b.conj()], [b * a.conj(), b * b.conj()]],
        }
    }

    pub fn bloch(&self) -> BlochVector {
        self.to_density().bloch()
    }
}

/// The six complementary input states, in the order they are listed here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InputState {
    U,
    D,
    Plus,
    Minus,
    SigmaPlus,
    SigmaMinus,
}

impl InputState {
    pub const ALL: [InputState; 6] = [
        InputState::U,
        InputState::D,
        InputState::Plus,
        InputState::Minus,
        InputState::SigmaPlus,
        InputState::SigmaMinus,
    ];

    pub fn state(self) -> PureQubit {
        match self {
            InputState::U => PureQubit::u(),
            InputState::D => PureQubit::d(),
            InputState::Plus => PureQubit::plus(),
            InputState::Minus => PureQubit::minus(),
            InputState::SigmaPlus => PureQubit::sigma_plus(),
            InputState::SigmaMinus => PureQubit::sigma_minus(),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short label used by text formats: `U`, `D`, `+`, `-`, `s+`, `s-`.
    pub fn label(self) -> &'static str {
        match self {
            InputState::U => "U",
            InputState::D => "D",
            InputState::Plus => "+",
            InputState::Minus => "-",
            InputState::SigmaPlus => "s+",
            InputState::SigmaMinus => "s-",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.label() == label)
    }
}

impl fmt::Display for InputState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// `|U⟩, |D⟩, |+⟩, |−⟩, |σ+⟩, |σ−⟩`. Consecutive pairs form the three
/// mutually unbiased bases Z, X and Y.
pub fn complementary_states() -> [PureQubit; 6] {
    InputState::ALL.map(InputState::state)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &BlochVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Physical single-qubit density matrix. Construction validates
/// Hermiticity, unit trace and positivity, so every value of this type is a
/// legal state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    m: [[Complex64; 2]; 2],
}

impl DensityMatrix {
    pub fn from_matrix(m: [[Complex64; 2]; 2]) -> Result<Self, QStateError> {
        if m.iter()
            .flatten()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(QStateError::NonFinite);
        }
        let herm = (m[0][1] - m[1][0].conj())
            .norm()
            .max(m[0][0].im.abs())
            .max(m[1][1].im.abs());
        if herm > HERMITIAN_TOL {
            return Err(QStateError::NotHermitian(herm));
        }
        let tr = m[0][0].re + m[1][1].re;
        if (tr - 1.0).abs() > HERMITIAN_TOL {
            return Err(QStateError::BadTrace(tr));
        }
        let rho = Self { m };
        let (lo, _) = rho.eigenvalues();
        if lo < -EIGEN_TOL {
            return Err(QStateError::NegativeEigenvalue(lo));
        }
        Ok(rho)
    }

    pub fn maximally_mixed() -> Self {
        let h = Complex64::new(0.5, 0.0);
        let z = Complex64::new(0.0, 0.0);
        Self {
            m: [[h, z], [z, h]],
        }
    }

    /// Inverse of [`DensityMatrix::bloch`]; rejects `|r| > 1`.
    pub fn from_bloch(r: BlochVector) -> Result<Self, QStateError> {
        let n = r.norm();
        if !n.is_finite() {
            return Err(QStateError::NonFinite);
        }
        if n > 1.0 + EIGEN_TOL {
            return Err(QStateError::BlochTooLong(n));
        }
        Ok(Self::from_bloch_unchecked(r))
    }

    fn from_bloch_unchecked(r: BlochVector) -> Self {
        Self {
            m: [
                [
                    Complex64::new(0.5 * (1.0 + r.z), 0.0),
                    Complex64::new(0.5 * r.x, -0.5 * r.y),
                ],
                [
                    Complex64::new(0.5 * r.x, 0.5 * r.y),
                    Complex64::new(0.5 * (1.0 - r.z), 0.0),
                ],
            ],
        }
    }

    pub fn bloch(&self) -> BlochVector {
        BlochVector {
            x: 2.0 * self.m[1][0].re,
            y: 2.0 * self.m[1][0].im,
            z: self.m[0][0].re - self.m[1][1].re,
        }
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.m[row][col]
    }

    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        self.m
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0].re + self.m[1][1].re
    }

    /// `tr(ρ²)`
    pub fn purity(&self) -> f64 {
        let r = self.bloch().norm();
        0.5 * (1.0 + r * r)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.m[0][0].re + self.m[1][1].re);
        let half_diff = 0.5 * (self.m[0][0].re - self.m[1][1].re);
        let radius = (half_diff * half_diff + self.m[0][1].norm_sqr()).sqrt();
        (mean - radius, mean + radius)
    }

    /// Convex combination `a·self + (1 − a)·other`.
    pub fn mix(&self, other: &DensityMatrix, a: f64) -> Result<Self, QStateError> {
        if !(0.0..=1.0).contains(&a) {
            return Err(QStateError::BadProbability(a));
        }
        let mut m = self.m;
        for (row, orow) in m.iter_mut().zip(other.m.iter()) {
            for (z, w) in row.iter_mut().zip(orow.iter()) {
                *z = *z * a + *w * (1.0 - a);
            }
        }
        Ok(Self { m })
    }

    /// `⟨ψ|ρ|ψ⟩`
    pub fn expectation(&self, psi: &PureQubit) -> f64 {
        let (a, b) = (psi.c0, psi.c1);
        let v = a.conj() * (self.m[0][0] * a + self.m[0][1] * b)
            + b.conj() * (self.m[1][0] * a + self.m[1][1] * b);
        v.re
    }
}

/// Storage fidelity `⟨ψ|ρ|ψ⟩`, clamped into `[0, 1]` against rounding.
pub fn fidelity(psi: &PureQubit, rho: &DensityMatrix) -> f64 {
    rho.expectation(psi).clamp(0.0, 1.0)
}

/// Depolarizing channel `(1 − p)·ρ + p·I/2`.
pub fn depolarize(rho: &DensityMatrix, p: f64) -> Result<DensityMatrix, QStateError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(QStateError::BadProbability(p));
    }
    Ok(DensityMatrix::from_bloch_unchecked(
        rho.bloch().scale(1.0 - p),
    ))
}

pub fn bloch_from_density(rho: &DensityMatrix) -> BlochVector {
    rho.bloch()
}

pub fn density_from_bloch(r: BlochVector) -> Result<DensityMatrix, QStateError> {
    DensityMatrix::from_bloch(r)
}
