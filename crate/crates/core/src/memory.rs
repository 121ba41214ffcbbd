//! The 15×14 cell array and its storage channel.
//!
//! Two horizontally adjacent cells (same row, columns `2k` and `2k + 1`)
//! hold the `|U⟩` and `|D⟩` rails of one qubit, giving 105 qubit slots.
//! All channel noise is applied at read time:
//!
//! 1. each rail is attenuated by its own retrieval efficiency, which decays
//!    as `exp(−(t − t_ref)/τ)` and is gated by the Larmor envelope,
//! 2. the `|D⟩` rail picks up a phase `dphi·Δt`,
//! 3. the state is renormalized (we condition on a detected photon) and
//!    depolarized with probability `p_dep`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::photonics::CoherentPulse;
use crate::qstate::{depolarize, BlochVector, DensityMatrix, QStateError};

pub const GRID_ROWS: usize = 15;
pub const GRID_COLS: usize = 14;
pub const SLOTS_PER_ROW: usize = GRID_COLS / 2;
pub const SLOT_COUNT: usize = GRID_ROWS * SLOTS_PER_ROW;

/// 1/e memory time of the atomic ensemble.
pub const DEFAULT_TAU_US: f64 = 27.8;
/// Larmor period of the uncompensated ambient field.
pub const DEFAULT_LARMOR_PERIOD_US: f64 = 1.38;
/// Storage time at which the efficiency map is measured.
pub const DEFAULT_T_REF_US: f64 = 1.38;
pub const DEFAULT_ETA_CENTER: f64 = 0.18;
pub const DEFAULT_ETA_EDGE: f64 = 0.02;
/// Grand-mean conditional fidelity the default depolarization reproduces.
pub const DEFAULT_TARGET_FIDELITY: f64 = 0.9445;

/// How far above `eta_edge` the farthest corner of the default map sits.
const CORNER_OFFSET: f64 = 5e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MemoryError {
    #[error("cell ({row}, {col}) outside the 15x14 grid")]
    OutOfGrid { row: usize, col: usize },
    #[error("slot index {0} outside 0..105")]
    BadSlotIndex(usize),
    #[error("cell ({row}, {col}) is not the U rail of a slot (column must be even)")]
    NotSlotOrigin { row: usize, col: usize },
    #[error("slot {0} already holds an excitation")]
    SlotOccupied(QubitSlot),
    #[error("slot {0} holds no excitation")]
    SlotEmpty(QubitSlot),
    #[error("read at {read_us} us precedes write at {write_us} us")]
    ReadBeforeWrite { write_us: f64, read_us: f64 },
    #[error("efficiency ordering violated: need 0 < edge ({edge}) <= center ({center}) <= 1")]
    BadEfficiencyOrdering { center: f64, edge: f64 },
    #[error("invalid memory parameter {name} = {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("fidelity target {0} must lie in (0.5, 1]")]
    BadTarget(f64),
    #[error("efficiency map CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    State(#[from] QStateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellAddress {
    pub row: usize,
    pub col: usize,
}

impl CellAddress {
    pub fn new(row: usize, col: usize) -> Result<Self, MemoryError> {
        if row >= GRID_ROWS || col >= GRID_COLS {
            return Err(MemoryError::OutOfGrid { row, col });
        }
        Ok(Self { row, col })
    }

    /// Row-major index in `0..210`.
    pub fn index(&self) -> usize {
        self.row * GRID_COLS + self.col
    }

    pub fn all() -> impl Iterator<Item = CellAddress> {
        (0..GRID_ROWS).flat_map(|row| (0..GRID_COLS).map(move |col| CellAddress { row, col }))
    }
}

impl fmt::Display for CellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.row, self.col)
    }
}

/// A pair of column-adjacent cells carrying one dual-rail qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QubitSlot {
    pub u_cell: CellAddress,
    pub d_cell: CellAddress,
}

impl QubitSlot {
    /// Slot `k` (`0..7`) of `row`, i.e. cells `(row, 2k)` and `(row, 2k + 1)`.
    pub fn new(row: usize, k: usize) -> Result<Self, MemoryError> {
        if k >= SLOTS_PER_ROW {
            return Err(MemoryError::OutOfGrid { row, col: 2 * k });
        }
        Ok(Self {
            u_cell: CellAddress::new(row, 2 * k)?,
            d_cell: CellAddress::new(row, 2 * k + 1)?,
        })
    }

    /// The slot whose `|U⟩` rail sits in `cell`.
    pub fn from_u_cell(cell: CellAddress) -> Result<Self, MemoryError> {
        if !cell.col.is_multiple_of(2) {
            return Err(MemoryError::NotSlotOrigin {
                row: cell.row,
                col: cell.col,
            });
        }
        Self::new(cell.row, cell.col / 2)
    }

    pub fn from_index(index: usize) -> Result<Self, MemoryError> {
        if index >= SLOT_COUNT {
            return Err(MemoryError::BadSlotIndex(index));
        }
        Self::new(index / SLOTS_PER_ROW, index % SLOTS_PER_ROW)
    }

    pub fn index(&self) -> usize {
        self.row() * SLOTS_PER_ROW + self.k()
    }

    pub fn row(&self) -> usize {
        self.u_cell.row
    }

    pub fn k(&self) -> usize {
        self.u_cell.col / 2
    }

    /// All 105 slots in index order.
    pub fn all() -> Vec<QubitSlot> {
        (0..SLOT_COUNT)
            .map(|i| Self::from_index(i).expect("index in range"))
            .collect()
    }

    /// Slots sharing a cell edge with this one.
    pub fn neighbors(&self) -> Vec<QubitSlot> {
        let (row, k) = (self.row() as isize, self.k() as isize);
        [(row - 1, k), (row + 1, k), (row, k - 1), (row, k + 1)]
            .into_iter()
            .filter(|&(r, kk)| {
                (0..GRID_ROWS as isize).contains(&r) && (0..SLOTS_PER_ROW as isize).contains(&kk)
            })
            .map(|(r, kk)| Self::new(r as usize, kk as usize).expect("bounds checked"))
            .collect()
    }
}

impl fmt::Display for QubitSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}k{}", self.row(), self.k())
    }
}

/// Per-cell retrieval efficiency measured at storage time `t_ref_us`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyMap {
    eta: Vec<f64>,
    t_ref_us: f64,
}

impl EfficiencyMap {
    pub fn from_rows(rows: Vec<Vec<f64>>, t_ref_us: f64) -> Result<Self, MemoryError> {
        if rows.len() != GRID_ROWS || rows.iter().any(|r| r.len() != GRID_COLS) {
            return Err(MemoryError::Csv(format!(
                "expected {GRID_ROWS} rows of {GRID_COLS} values"
            )));
        }
        let eta: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(bad) = eta.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MemoryError::BadParameter {
                name: "eta",
                value: *bad,
            });
        }
        if !(t_ref_us.is_finite() && t_ref_us >= 0.0) {
            return Err(MemoryError::BadParameter {
                name: "t_ref_us",
                value: t_ref_us,
            });
        }
        Ok(Self { eta, t_ref_us })
    }

    pub fn uniform(eta: f64) -> Result<Self, MemoryError> {
        Self::from_rows(vec![vec![eta; GRID_COLS]; GRID_ROWS], DEFAULT_T_REF_US)
    }

    pub fn get(&self, cell: CellAddress) -> f64 {
        self.eta[cell.index()]
    }

    pub fn t_ref_us(&self) -> f64 {
        self.t_ref_us
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.eta.chunks(GRID_COLS).map(<[f64]>::to_vec).collect()
    }

    /// One header line `# t_ref_us=<t>` followed by 15 lines of 14
    /// comma-separated efficiencies.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# t_ref_us={}\n", self.t_ref_us);
        out.push_str(&grid_csv(&self.rows()));
        out
    }

    /// Parses [`EfficiencyMap::to_csv`] output. Other `#` lines are ignored.
    pub fn from_csv(text: &str) -> Result<Self, MemoryError> {
        let mut t_ref = None;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("t_ref_us=") {
                    t_ref = Some(v.trim().parse::<f64>().map_err(|e| {
                        MemoryError::Csv(format!("line {}: bad t_ref: {e}", lineno + 1))
                    })?);
                }
                continue;
            }
            let row = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| MemoryError::Csv(format!("line {}: {e}", lineno + 1)))?;
            rows.push(row);
        }
        let t_ref = t_ref.ok_or_else(|| MemoryError::Csv("missing t_ref_us header".into()))?;
        Self::from_rows(rows, t_ref)
    }
}

/// Renders a grid of values as CSV, one grid row per line.
pub fn grid_csv(rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Radially symmetric map falling from `eta_center` in the middle of the
/// array to `eta_edge` at the corners:
///
/// `η = eta_edge + (eta_center − eta_edge)·exp(−r²/(2σ²))`
///
/// with `r` the distance from the array center normalized per axis by the
/// half-extent, and `σ` chosen so the corners sit `5e-4` above `eta_edge`.
pub fn default_efficiency_map(
    eta_center: f64,
    eta_edge: f64,
) -> Result<EfficiencyMap, MemoryError> {
    if !(eta_edge > 0.0 && eta_edge <= eta_center && eta_center <= 1.0) {
        return Err(MemoryError::BadEfficiencyOrdering {
            center: eta_center,
            edge: eta_edge,
        });
    }
    let row_c = (GRID_ROWS - 1) as f64 / 2.0;
    let col_c = (GRID_COLS - 1) as f64 / 2.0;
    let r2 = |cell: CellAddress| {
        let dr = (cell.row as f64 - row_c) / row_c;
        let dc = (cell.col as f64 - col_c) / col_c;
        dr * dr + dc * dc
    };
    let r2_max = r2(CellAddress { row: 0, col: 0 });
    let spread = eta_center - eta_edge;
    let two_sigma2 = if spread > CORNER_OFFSET {
        r2_max / (spread / CORNER_OFFSET).ln()
    } else {
        1.0
    };
    let rows = (0..GRID_ROWS)
        .map(|row| {
            (0..GRID_COLS)
                .map(|col| eta_edge + spread * (-r2(CellAddress { row, col }) / two_sigma2).exp())
                .collect()
        })
        .collect();
    EfficiencyMap::from_rows(rows, DEFAULT_T_REF_US)
}

/// Shape of the Larmor-precession gate on retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LarmorEnvelope {
    /// `cos²(π t / T_L)`, maximal at integer multiples of `T_L`.
    #[default]
    CosSquared,
    /// No precession.
    Flat,
}

impl LarmorEnvelope {
    pub fn eval(&self, t_us: f64, period_us: f64) -> f64 {
        match self {
            LarmorEnvelope::CosSquared => (PI * t_us / period_us).cos().powi(2),
            LarmorEnvelope::Flat => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryParams {
    pub tau_us: f64,
    pub larmor_period_us: f64,
    pub envelope: LarmorEnvelope,
    pub p_dep: f64,
    /// Differential phase drift between the rails, rad/μs.
    pub dphi_rad_per_us: f64,
    pub crosstalk_eps: f64,
}

impl Default for MemoryParams {
    fn default() -> Self {
        Self {
            tau_us: DEFAULT_TAU_US,
            larmor_period_us: DEFAULT_LARMOR_PERIOD_US,
            envelope: LarmorEnvelope::CosSquared,
            p_dep: calibrate_depolarization(DEFAULT_TARGET_FIDELITY).expect("valid default target"),
            dphi_rad_per_us: 0.0,
            crosstalk_eps: 0.0,
        }
    }
}

impl MemoryParams {
    pub fn ideal() -> Self {
        Self {
            p_dep: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), MemoryError> {
        let positive = |name, value: f64| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(MemoryError::BadParameter { name, value })
            }
        };
        let unit = |name, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(MemoryError::BadParameter { name, value })
            }
        };
        positive("tau_us", self.tau_us)?;
        positive("larmor_period_us", self.larmor_period_us)?;
        unit("p_dep", self.p_dep)?;
        unit("crosstalk_eps", self.crosstalk_eps)?;
        if !self.dphi_rad_per_us.is_finite() {
            return Err(MemoryError::BadParameter {
                name: "dphi_rad_per_us",
                value: self.dphi_rad_per_us,
            });
        }
        Ok(())
    }
}

/// Efficiency of `cell` after storage time `t_us`:
/// `η_cell · exp(−(t − t_ref)/τ) · L(t)`, clamped to `[0, 1]`.
pub fn retrieval_efficiency(
    map: &EfficiencyMap,
    cell: CellAddress,
    t_us: f64,
    params: &MemoryParams,
) -> f64 {
    let decay = (-(t_us - map.t_ref_us()) / params.tau_us).exp();
    let gate = params.envelope.eval(t_us, params.larmor_period_us);
    (map.get(cell) * decay * gate).clamp(0.0, 1.0)
}

/// Mean of the two rail efficiencies of `slot` after `t_us` of storage.
pub fn slot_efficiency(
    map: &EfficiencyMap,
    slot: QubitSlot,
    t_us: f64,
    params: &MemoryParams,
) -> f64 {
    0.5 * (retrieval_efficiency(map, slot.u_cell, t_us, params)
        + retrieval_efficiency(map, slot.d_cell, t_us, params))
}

/// Depolarization probability whose balanced-rail fidelity `1 − p/2`
/// equals `target`.
pub fn calibrate_depolarization(target_avg_fidelity: f64) -> Result<f64, MemoryError> {
    if !(target_avg_fidelity > 0.5 && target_avg_fidelity <= 1.0) {
        return Err(MemoryError::BadTarget(target_avg_fidelity));
    }
    Ok(2.0 * (1.0 - target_avg_fidelity))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoredExcitation {
    pub slot: QubitSlot,
    pub state: DensityMatrix,
    pub write_time_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Retrieval {
    /// State conditioned on the photon being retrieved. The maximally mixed
    /// state when `retrieval_prob` is zero.
    pub state: DensityMatrix,
    pub retrieval_prob: f64,
    pub storage_time_us: f64,
}

impl StoredExcitation {
    /// Applies the storage channel for a read at `time_us`.
    pub fn retrieve(
        &self,
        time_us: f64,
        map: &EfficiencyMap,
        params: &MemoryParams,
    ) -> Result<Retrieval, MemoryError> {
        if !(time_us >= self.write_time_us) {
            return Err(MemoryError::ReadBeforeWrite {
                write_us: self.write_time_us,
                read_us: time_us,
            });
        }
        let dt = time_us - self.write_time_us;
        let eta_u = retrieval_efficiency(map, self.slot.u_cell, dt, params);
        let eta_d = retrieval_efficiency(map, self.slot.d_cell, dt, params);
        let rho = self.state.matrix();

        // σ = A ρ A†, A = diag(√ηU, √ηD·e^{iφ}).
        let s00 = eta_u * rho[0][0].re;
        let s11 = eta_d * rho[1][1].re;
        let s10 =
            rho[1][0] * Complex64::from_polar((eta_u * eta_d).sqrt(), params.dphi_rad_per_us * dt);
        let prob = s00 + s11;

        let conditional = if prob > 0.0 {
            let r = BlochVector::new(2.0 * s10.re / prob, 2.0 * s10.im / prob, (s00 - s11) / prob);
            // Attenuation never lengthens r; trim rounding excess.
            let n = r.norm();
            let r = if n > 1.0 { r.scale(1.0 / n) } else { r };
            DensityMatrix::from_bloch(r)?
        } else {
            DensityMatrix::maximally_mixed()
        };
        Ok(Retrieval {
            state: depolarize(&conditional, params.p_dep)?,
            retrieval_prob: prob.clamp(0.0, 1.0),
            storage_time_us: dt,
        })
    }
}

/// Occupancy of all 105 slots.
#[derive(Debug, Clone, Default)]
pub struct MemoryArray {
    slots: Vec<Option<StoredExcitation>>,
}

impl MemoryArray {
    pub fn new() -> Self {
        Self {
            slots: vec![None; SLOT_COUNT],
        }
    }

    /// Stores the qubit of `input`; noise-free.
    pub fn write(
        &mut self,
        slot: QubitSlot,
        input: &CoherentPulse,
        time_us: f64,
    ) -> Result<&StoredExcitation, MemoryError> {
        if !(time_us.is_finite() && time_us >= 0.0) {
            return Err(MemoryError::BadParameter {
                name: "write_time_us",
                value: time_us,
            });
        }
        let entry = &mut self.slots[slot.index()];
        if entry.is_some() {
            return Err(MemoryError::SlotOccupied(slot));
        }
        Ok(entry.insert(StoredExcitation {
            slot,
            state: input.state.to_density(),
            write_time_us: time_us,
        }))
    }

    /// Retrieves and frees `slot`.
    pub fn read(
        &mut self,
        slot: QubitSlot,
        time_us: f64,
        map: &EfficiencyMap,
        params: &MemoryParams,
    ) -> Result<Retrieval, MemoryError> {
        let exc = self.slots[slot.index()].ok_or(MemoryError::SlotEmpty(slot))?;
        let out = exc.retrieve(time_us, map, params)?;
        self.slots[slot.index()] = None;
        Ok(out)
    }

    pub fn get(&self, slot: QubitSlot) -> Option<&StoredExcitation> {
        self.slots[slot.index()].as_ref()
    }

    pub fn occupied(&self) -> impl Iterator<Item = &StoredExcitation> {
        self.slots.iter().flatten()
    }

    /// Stray light while `addressed` is driven: every occupied neighboring
    /// slot is depolarized with weight `eps`.
    pub fn apply_crosstalk(&mut self, addressed: QubitSlot, eps: f64) -> Result<(), MemoryError> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(MemoryError::BadParameter {
                name: "crosstalk_eps",
                value: eps,
            });
        }
        if eps == 0.0 {
            return Ok(());
        }
        for n in addressed.neighbors() {
            if let Some(exc) = self.slots[n.index()].as_mut() {
                exc.state = depolarize(&exc.state, eps)?;
            }
        }
        Ok(())
    }
}
