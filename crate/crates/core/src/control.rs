//! AOD addressing and the pulse-program compiler.
//!
//! Crossed AODs steer the control and probe beams onto one cell per RF
//! frequency pair. Rows map to the X axis, columns to Y, both on a 0.6 MHz
//! grid starting at 98.8 MHz.
//!
//! A [`PulseProgram`] lists write and read requests on qubit slots. The
//! compiler turns it into three RF channels (control, write and read AODs)
//! and checks that the program is executable: channels never overlap,
//! every write is read exactly once, and every storage interval is a whole
//! number of Larmor periods.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::memory::{CellAddress, MemoryError, MemoryParams, QubitSlot, GRID_COLS, GRID_ROWS};
use crate::qstate::{InputState, PureQubit};

const FREQ_START_KHZ: i64 = 98_800;
const FREQ_STEP_KHZ: i64 = 600;

pub const FREQ_START_MHZ: f64 = FREQ_START_KHZ as f64 / 1000.0;
pub const FREQ_STEP_MHZ: f64 = FREQ_STEP_KHZ as f64 / 1000.0;
/// Default control/probe pulse length.
pub const DEFAULT_PULSE_DURATION_US: f64 = 0.1;
/// Timing granularity: 1 ns.
pub const TIMING_TOL_US: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("frequency pair ({fx_mhz}, {fy_mhz}) MHz is not on the addressing grid")]
    OffGridFrequency { fx_mhz: f64, fy_mhz: f64 },
    #[error("tone weights not normalized: |w0|^2 + |w1|^2 = {0}")]
    WeightsNotNormalized(f64),
    #[error(
        "{channel} channel: event for {second} at {second_start_us} us overlaps event for {first}"
    )]
    Overlap {
        channel: Channel,
        first: String,
        second: String,
        second_start_us: f64,
    },
    #[error("qubit {0} written twice without an intervening read")]
    DoubleWrite(String),
    #[error("slot {slot} already holds qubit {holder} when {qubit} is written")]
    SlotInUse {
        slot: QubitSlot,
        holder: String,
        qubit: String,
    },
    #[error("read of qubit {0} has no earlier write")]
    UnmatchedRead(String),
    #[error("qubit {0} is written but never read")]
    UnreadWrite(String),
    #[error("qubit {qubit} written to {written} but read from {read}")]
    SlotMismatch {
        qubit: String,
        written: QubitSlot,
        read: QubitSlot,
    },
    #[error("qubit {qubit}: storage time {storage_us} us is not a multiple of the Larmor period {period_us} us")]
    OffLarmor {
        qubit: String,
        storage_us: f64,
        period_us: f64,
    },
    #[error("invalid event for {qubit}: {reason}")]
    BadEvent { qubit: String, reason: String },
    #[error("program line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("slot {0} listed for more than one qubit")]
    DuplicateSlot(QubitSlot),
    #[error("read order is not a permutation of 1..={0}")]
    BadPermutation(usize),
    #[error("spacing must be at least one Larmor period")]
    BadSpacing,
}

fn khz_to_mhz(khz: i64) -> f64 {
    khz as f64 / 1000.0
}

/// RF frequencies `(fx, fy)` in MHz addressing `cell`.
pub fn address_to_frequencies(cell: CellAddress) -> Result<(f64, f64), ControlError> {
    let cell = CellAddress::new(cell.row, cell.col)?;
    Ok((
        khz_to_mhz(FREQ_START_KHZ + FREQ_STEP_KHZ * cell.row as i64),
        khz_to_mhz(FREQ_START_KHZ + FREQ_STEP_KHZ * cell.col as i64),
    ))
}

/// Inverse of [`address_to_frequencies`]; frequencies must sit within
/// 1 kHz of a grid point.
pub fn frequencies_to_address(fx_mhz: f64, fy_mhz: f64) -> Result<CellAddress, ControlError> {
    let off = || ControlError::OffGridFrequency { fx_mhz, fy_mhz };
    let index = |f: f64, n: usize| -> Option<usize> {
        let steps = (f * 1000.0 - FREQ_START_KHZ as f64) / FREQ_STEP_KHZ as f64;
        let k = steps.round();
        let ok = (steps - k).abs() * FREQ_STEP_KHZ as f64 <= 1.0 && k >= 0.0 && (k as usize) < n;
        ok.then_some(k as usize)
    };
    let row = index(fx_mhz, GRID_ROWS).ok_or_else(off)?;
    let col = index(fy_mhz, GRID_COLS).ok_or_else(off)?;
    Ok(CellAddress::new(row, col)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneComponent {
    pub fx_mhz: f64,
    pub fy_mhz: f64,
    pub weight: Complex64,
}

impl Serialize for ToneComponent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            fx_mhz: f64,
            fy_mhz: f64,
            re: f64,
            im: f64,
        }
        Repr {
            fx_mhz: self.fx_mhz,
            fy_mhz: self.fy_mhz,
            re: self.weight.re,
            im: self.weight.im,
        }
        .serialize(s)
    }
}

/// RF drive of one AOD pair. `weights` is set for superposition tones and
/// lists every component with its complex amplitude.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RFTone {
    pub fx_mhz: f64,
    pub fy_mhz: f64,
    pub weights: Option<Vec<ToneComponent>>,
}

impl RFTone {
    pub fn single(cell: CellAddress) -> Result<Self, ControlError> {
        let (fx_mhz, fy_mhz) = address_to_frequencies(cell)?;
        Ok(Self {
            fx_mhz,
            fy_mhz,
            weights: None,
        })
    }
}

/// Tone addressing the two rails of `slot` with amplitudes `(w0, w1)`.
/// Components with zero weight are dropped; a single surviving component
/// gives a plain tone.
pub fn slot_tone(slot: QubitSlot, weights: (Complex64, Complex64)) -> Result<RFTone, ControlError> {
    let (w0, w1) = weights;
    let norm = w0.norm_sqr() + w1.norm_sqr();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
        return Err(ControlError::WeightsNotNormalized(norm));
    }
    let mut components = Vec::with_capacity(2);
    for (cell, w) in [(slot.u_cell, w0), (slot.d_cell, w1)] {
        if w.norm_sqr() > 0.0 {
            let (fx_mhz, fy_mhz) = address_to_frequencies(cell)?;
            components.push(ToneComponent {
                fx_mhz,
                fy_mhz,
                weight: w,
            });
        }
    }
    let first = components[0];
    Ok(RFTone {
        fx_mhz: first.fx_mhz,
        fy_mhz: first.fy_mhz,
        weights: (components.len() > 1).then_some(components),
    })
}

fn balanced_weights() -> (Complex64, Complex64) {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    (h, h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Write,
    Read,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Write => "write",
            EventKind::Read => "read",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramEvent {
    pub kind: EventKind,
    pub qubit_id: String,
    pub slot: QubitSlot,
    pub time_us: f64,
    pub duration_us: f64,
    /// Qubit prepared by a write. Ignored for reads.
    pub state: PureQubit,
}

impl ProgramEvent {
    pub fn write(
        qubit_id: impl Into<String>,
        slot: QubitSlot,
        time_us: f64,
        state: PureQubit,
    ) -> Self {
        Self {
            kind: EventKind::Write,
            qubit_id: qubit_id.into(),
            slot,
            time_us,
            duration_us: DEFAULT_PULSE_DURATION_US,
            state,
        }
    }

    pub fn read(qubit_id: impl Into<String>, slot: QubitSlot, time_us: f64) -> Self {
        Self {
            kind: EventKind::Read,
            qubit_id: qubit_id.into(),
            slot,
            time_us,
            duration_us: DEFAULT_PULSE_DURATION_US,
            state: PureQubit::u(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PulseProgram {
    pub events: Vec<ProgramEvent>,
}

impl PulseProgram {
    /// Parses the line format
    ///
    /// ```text
    /// # comment
    /// write <qubit_id> <row_u>,<col_u> <time_us> [state]
    /// read  <qubit_id> <row_u>,<col_u> <time_us>
    /// ```
    ///
    /// `state` is one of `U D + - s+ s-` and defaults to `U`.
    pub fn parse(text: &str) -> Result<Self, ControlError> {
        let mut events = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ControlError::Parse { line: i + 1, msg };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let kind = match tokens[0] {
                "write" => EventKind::Write,
                "read" => EventKind::Read,
                other => return Err(err(format!("unknown event kind `{other}`"))),
            };
            let max = if kind == EventKind::Write { 5 } else { 4 };
            if tokens.len() < 4 || tokens.len() > max {
                return Err(err(format!(
                    "expected 4{} fields",
                    if max == 5 { "-5" } else { "" }
                )));
            }
            let (row, col) = tokens[2]
                .split_once(',')
                .ok_or_else(|| err(format!("bad address `{}`", tokens[2])))?;
            let row: usize = row
                .trim()
                .parse()
                .map_err(|e| err(format!("bad row: {e}")))?;
            let col: usize = col
                .trim()
                .parse()
                .map_err(|e| err(format!("bad column: {e}")))?;
            let cell = CellAddress::new(row, col).map_err(|e| err(e.to_string()))?;
            let slot = QubitSlot::from_u_cell(cell).map_err(|e| err(e.to_string()))?;
            let time_us: f64 = tokens[3]
                .parse()
                .map_err(|e| err(format!("bad time: {e}")))?;
            let state = match tokens.get(4) {
                Some(label) => InputState::from_label(label)
                    .ok_or_else(|| err(format!("unknown state `{label}`")))?
                    .state(),
                None => PureQubit::u(),
            };
            events.push(ProgramEvent {
                kind,
                qubit_id: tokens[1].to_string(),
                slot,
                time_us,
                duration_us: DEFAULT_PULSE_DURATION_US,
                state,
            });
        }
        Ok(Self { events })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Control,
    Write,
    Read,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Control => "control",
            Channel::Write => "write",
            Channel::Read => "read",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RFEvent {
    pub start_us: f64,
    pub duration_us: f64,
    #[serde(skip)]
    pub qubit_id: String,
    #[serde(flatten)]
    pub tone: RFTone,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RFEventList {
    #[serde(rename = "control_aod")]
    pub control: Vec<RFEvent>,
    #[serde(rename = "write_aod")]
    pub write: Vec<RFEvent>,
    #[serde(rename = "read_aod")]
    pub read: Vec<RFEvent>,
}

impl RFEventList {
    pub fn channel(&self, ch: Channel) -> &[RFEvent] {
        match ch {
            Channel::Control => &self.control,
            Channel::Write => &self.write,
            Channel::Read => &self.read,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimingMode {
    #[default]
    Strict,
    Warn,
}

/// An off-Larmor storage interval accepted in warn mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingWarning {
    pub qubit_id: String,
    pub storage_time_us: f64,
    pub nearest_multiple: u64,
    pub deviation_us: f64,
    /// Larmor envelope at the actual storage time; multiplies the retrieval
    /// efficiency.
    pub efficiency_penalty: f64,
}

/// One write/read pair of the compiled program.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageRecord {
    pub qubit_id: String,
    pub slot: QubitSlot,
    pub state: PureQubit,
    pub write_time_us: f64,
    pub read_time_us: f64,
}

impl StorageRecord {
    pub fn storage_time_us(&self) -> f64 {
        self.read_time_us - self.write_time_us
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompiledProgram {
    #[serde(flatten)]
    pub events: RFEventList,
    pub warnings: Vec<TimingWarning>,
    #[serde(skip)]
    pub storage: Vec<StorageRecord>,
    /// Events in execution order.
    #[serde(skip)]
    pub schedule: Vec<ProgramEvent>,
}

impl CompiledProgram {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("compiled program serializes")
    }
}

fn check_overlaps(channel: Channel, events: &[RFEvent]) -> Result<(), ControlError> {
    for pair in events.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.start_us < a.start_us + a.duration_us - 1e-9 {
            return Err(ControlError::Overlap {
                channel,
                first: a.qubit_id.clone(),
                second: b.qubit_id.clone(),
                second_start_us: b.start_us,
            });
        }
    }
    Ok(())
}

/// Compiles `program` into per-AOD RF schedules.
///
/// Checks, in order: event sanity, per-channel overlap, write/read
/// pairing, and Larmor timing. Off-Larmor intervals are errors in
/// [`TimingMode::Strict`] and warnings in [`TimingMode::Warn`].
pub fn compile(
    program: &PulseProgram,
    params: &MemoryParams,
    mode: TimingMode,
) -> Result<CompiledProgram, ControlError> {
    for ev in &program.events {
        let bad = |reason: &str| ControlError::BadEvent {
            qubit: ev.qubit_id.clone(),
            reason: reason.to_string(),
        };
        if !(ev.time_us.is_finite() && ev.time_us >= 0.0) {
            return Err(bad("time must be finite and non-negative"));
        }
        if !(ev.duration_us.is_finite() && ev.duration_us > 0.0) {
            return Err(bad("duration must be positive"));
        }
        if ev.qubit_id.is_empty() {
            return Err(bad("empty qubit id"));
        }
    }

    let mut schedule = program.events.clone();
    schedule.sort_by(|a, b| a.time_us.total_cmp(&b.time_us));

    let mut list = RFEventList::default();
    for ev in &schedule {
        let rf = |tone: RFTone| RFEvent {
            start_us: ev.time_us,
            duration_us: ev.duration_us,
            qubit_id: ev.qubit_id.clone(),
            tone,
        };
        list.control
            .push(rf(slot_tone(ev.slot, balanced_weights())?));
        match ev.kind {
            EventKind::Write => list
                .write
                .push(rf(slot_tone(ev.slot, (ev.state.c0(), ev.state.c1()))?)),
            EventKind::Read => list.read.push(rf(slot_tone(ev.slot, balanced_weights())?)),
        }
    }
    for ch in [Channel::Control, Channel::Write, Channel::Read] {
        check_overlaps(ch, list.channel(ch))?;
    }

    let period = params.larmor_period_us;
    let mut open: BTreeMap<String, &ProgramEvent> = BTreeMap::new();
    let mut occupancy: BTreeMap<QubitSlot, String> = BTreeMap::new();
    let mut storage = Vec::new();
    let mut warnings = Vec::new();
    for ev in &schedule {
        match ev.kind {
            EventKind::Write => {
                if open.contains_key(&ev.qubit_id) {
                    return Err(ControlError::DoubleWrite(ev.qubit_id.clone()));
                }
                if let Some(holder) = occupancy.get(&ev.slot) {
                    return Err(ControlError::SlotInUse {
                        slot: ev.slot,
                        holder: holder.clone(),
                        qubit: ev.qubit_id.clone(),
                    });
                }
                open.insert(ev.qubit_id.clone(), ev);
                occupancy.insert(ev.slot, ev.qubit_id.clone());
            }
            EventKind::Read => {
                let w = open
                    .remove(&ev.qubit_id)
                    .ok_or_else(|| ControlError::UnmatchedRead(ev.qubit_id.clone()))?;
                if w.slot != ev.slot {
                    return Err(ControlError::SlotMismatch {
                        qubit: ev.qubit_id.clone(),
                        written: w.slot,
                        read: ev.slot,
                    });
                }
                occupancy.remove(&ev.slot);
                let dt = ev.time_us - w.time_us;
                let n = (dt / period).round();
                let deviation = (dt - n * period).abs();
                if n < 1.0 || deviation > TIMING_TOL_US + 1e-9 {
                    match mode {
                        TimingMode::Strict => {
                            return Err(ControlError::OffLarmor {
                                qubit: ev.qubit_id.clone(),
                                storage_us: dt,
                                period_us: period,
                            })
                        }
                        TimingMode::Warn => warnings.push(TimingWarning {
                            qubit_id: ev.qubit_id.clone(),
                            storage_time_us: dt,
                            nearest_multiple: n.max(0.0) as u64,
                            deviation_us: deviation,
                            efficiency_penalty: params.envelope.eval(dt, period),
                        }),
                    }
                }
                storage.push(StorageRecord {
                    qubit_id: ev.qubit_id.clone(),
                    slot: ev.slot,
                    state: w.state,
                    write_time_us: w.time_us,
                    read_time_us: ev.time_us,
                });
            }
        }
    }
    if let Some(w) = open.values().min_by(|a, b| a.time_us.total_cmp(&b.time_us)) {
        return Err(ControlError::UnreadWrite(w.qubit_id.clone()));
    }

    Ok(CompiledProgram {
        events: list,
        warnings,
        storage,
        schedule,
    })
}

/// Builds a program writing `qubits` in listing order and reading them back
/// in `read_order` (1-based qubit labels `q1, q2, ...`). Consecutive events
/// sit `spacing` Larmor periods apart, so every storage time is a whole
/// number of periods.
pub fn random_access_schedule(
    qubits: &[(QubitSlot, PureQubit)],
    read_order: &[usize],
    spacing: u32,
    params: &MemoryParams,
) -> Result<PulseProgram, ControlError> {
    let n = qubits.len();
    for (i, (slot, _)) in qubits.iter().enumerate() {
        if qubits[..i].iter().any(|(s, _)| s == slot) {
            return Err(ControlError::DuplicateSlot(*slot));
        }
    }
    let mut seen = vec![false; n];
    if read_order.len() != n {
        return Err(ControlError::BadPermutation(n));
    }
    for &q in read_order {
        if q == 0 || q > n || seen[q - 1] {
            return Err(ControlError::BadPermutation(n));
        }
        seen[q - 1] = true;
    }
    if spacing == 0 {
        return Err(ControlError::BadSpacing);
    }
    let step = spacing as f64 * params.larmor_period_us;
    let label = |i: usize| format!("q{}", i + 1);
    let mut events: Vec<ProgramEvent> = qubits
        .iter()
        .enumerate()
        .map(|(i, (slot, state))| ProgramEvent::write(label(i), *slot, i as f64 * step, *state))
        .collect();
    for (pos, &q) in read_order.iter().enumerate() {
        let slot = qubits[q - 1].0;
        events.push(ProgramEvent::read(
            label(q - 1),
            slot,
            (n + pos) as f64 * step,
        ));
    }
    Ok(PulseProgram { events })
}
