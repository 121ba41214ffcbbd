//! The experiment runners.
//!
//! Each runner is a pure function of its [`Setup`]: random draws come from
//! streams keyed by what is being simulated (see [`super::rng`]), and
//! results are collected in slot order, so the worker count never changes
//! the output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{
    coherent_bound, coherent_bound_with_efficiency, margin, nqubit_bound, BoundParams,
};
use crate::control::{compile, random_access_schedule, CompiledProgram, EventKind};
use crate::memory::{
    retrieval_efficiency, slot_efficiency, CellAddress, EfficiencyMap, MemoryArray, MemoryParams,
    QubitSlot, Retrieval, GRID_COLS, GRID_ROWS,
};
use crate::photonics::{click_probability, simulate_click, CoherentPulse, DetectorModel};
use crate::qstate::{InputState, PureQubit};
use crate::tomography::{
    average_six_state_fidelity, combine_six, tomograph_state, StorageChannel, TomographyResult,
};

use super::config::Setup;
use super::rng::{stream, Domain, StreamKey};
use super::HarnessError;

/// Per-slot characterization result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRecord {
    pub row: usize,
    pub k: usize,
    pub mean_fidelity: f64,
    pub std_dev: f64,
    /// Mean of the two rail efficiencies at the storage time.
    pub efficiency: f64,
    pub classical_bound: f64,
    pub n_min: u32,
    pub margin: f64,
    /// `None` when the standard deviation is zero.
    pub sigmas: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub slots: usize,
    pub grand_mean_fidelity: f64,
    /// `sqrt(Σ σ²)/slots`
    pub grand_std_error: f64,
    pub min_margin: f64,
    pub min_sigmas: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub summary: Summary,
    pub records: Vec<SlotRecord>,
}

impl RunReport {
    fn from_records(records: Vec<SlotRecord>) -> Self {
        let n = records.len() as f64;
        let grand_mean_fidelity = records.iter().map(|r| r.mean_fidelity).sum::<f64>() / n;
        let grand_std_error = records
            .iter()
            .map(|r| r.std_dev * r.std_dev)
            .sum::<f64>()
            .sqrt()
            / n;
        let min_margin = records
            .iter()
            .map(|r| r.margin)
            .fold(f64::INFINITY, f64::min);
        let min_sigmas = records.iter().filter_map(|r| r.sigmas).reduce(f64::min);
        RunReport {
            summary: Summary {
                slots: records.len(),
                grand_mean_fidelity,
                grand_std_error,
                min_margin,
                min_sigmas,
            },
            records,
        }
    }

    /// `GRID_ROWS × SLOTS_PER_ROW` grid of `f(record)`.
    pub fn grid(&self, f: impl Fn(&SlotRecord) -> f64) -> Vec<Vec<f64>> {
        let mut rows = vec![Vec::new(); GRID_ROWS];
        for r in &self.records {
            rows[r.row].push(f(r));
        }
        rows
    }
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, HarnessError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| HarnessError::Pool(e.to_string()))
}

fn bound_margin(
    mu: f64,
    eta: f64,
    fidelity: f64,
    std_dev: f64,
) -> Result<(crate::bounds::BoundSolution, f64, Option<f64>), HarnessError> {
    let sol = coherent_bound_with_efficiency(BoundParams::new(mu, eta)?)?;
    let diff = fidelity - sol.bound;
    let sigmas = if std_dev > 0.0 {
        Some(margin(fidelity, sol.bound, std_dev)?.sigmas)
    } else {
        None
    };
    Ok((sol, diff, sigmas))
}

/// Six-state fidelity of all 105 slots at the configured storage time,
/// with efficiency-aware classical bounds and margins.
pub fn run_characterization(setup: &Setup) -> Result<RunReport, HarnessError> {
    let cfg = &setup.config;
    let channel = StorageChannel {
        map: &setup.map,
        params: &setup.params,
        storage_time_us: cfg.storage_time_us,
    };
    let acquisition = cfg.acquisition();
    let seed = cfg.seed;

    let one = |slot: QubitSlot| -> Result<SlotRecord, HarnessError> {
        let key = StreamKey::new(Domain::Characterize, slot.index());
        let report = average_six_state_fidelity(&channel, slot, acquisition, |state, basis| {
            stream(seed, key.state(state).basis(basis))
        })?;
        let eta = slot_efficiency(&setup.map, slot, cfg.storage_time_us, &setup.params);
        let (sol, diff, sigmas) = bound_margin(cfg.mu, eta, report.mean_fidelity, report.std_dev)?;
        Ok(SlotRecord {
            row: slot.row(),
            k: slot.k(),
            mean_fidelity: report.mean_fidelity,
            std_dev: report.std_dev,
            efficiency: eta,
            classical_bound: sol.bound,
            n_min: sol.n_min,
            margin: diff,
            sigmas,
        })
    };

    let records = pool(cfg.workers)?.install(|| {
        QubitSlot::all()
            .into_par_iter()
            .map(one)
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(RunReport::from_records(records))
}

/// Intrinsic efficiency inferred from a click probability: inverts
/// `p = 1 − (1 − dark)·exp(−μ·η·qe·coupling)`.
pub fn intrinsic_efficiency(click_prob: f64, mu: f64, det: &DetectorModel) -> f64 {
    let p = click_prob.min(1.0 - f64::EPSILON);
    let eta = -((1.0 - p) / (1.0 - det.dark_click_prob)).ln() / (mu * det.path_efficiency());
    eta.max(0.0)
}

/// Binomial standard error of [`intrinsic_efficiency`] from `shots` pulses.
pub fn efficiency_std_error(click_prob: f64, shots: u64, mu: f64, det: &DetectorModel) -> f64 {
    let p = click_prob.clamp(0.0, 1.0 - f64::EPSILON);
    (p * (1.0 - p) / shots as f64).sqrt() / ((1.0 - p) * mu * det.path_efficiency())
}

/// Efficiency estimates over the 15 × 14 cell grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyScan {
    pub shots: u64,
    pub t_us: f64,
    pub estimates: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
    /// Configured efficiency at `t_us`.
    pub expected: Vec<Vec<f64>>,
}

impl EfficiencyScan {
    pub fn estimate_map(&self) -> Result<EfficiencyMap, HarnessError> {
        Ok(EfficiencyMap::from_rows(self.estimates.clone(), self.t_us)?)
    }
}

/// Pulses each cell with `efficiency_shots` weak coherent pulses retrieved
/// at the reference time and infers the intrinsic efficiency from the click
/// rate. Analytic mode uses the exact click probability.
pub fn run_efficiency_scan(setup: &Setup) -> Result<EfficiencyScan, HarnessError> {
    let cfg = &setup.config;
    let det = &setup.detector;
    let t = setup.map.t_ref_us();
    let shots = cfg.efficiency_shots;

    let one = |cell: CellAddress| -> (f64, f64, f64) {
        let eta = retrieval_efficiency(&setup.map, cell, t, &setup.params);
        let p = if cfg.analytic {
            click_probability(cfg.mu * eta, det)
        } else {
            let mut rng = stream(
                cfg.seed,
                StreamKey::new(Domain::EfficiencyScan, cell.index()),
            );
            let clicks = (0..shots)
                .filter(|_| simulate_click(cfg.mu, eta, det, &mut rng))
                .count();
            clicks as f64 / shots as f64
        };
        (
            intrinsic_efficiency(p, cfg.mu, det),
            efficiency_std_error(p, shots, cfg.mu, det),
            eta,
        )
    };

    let cells: Vec<CellAddress> = CellAddress::all().collect();
    let flat: Vec<(f64, f64, f64)> =
        pool(cfg.workers)?.install(|| cells.into_par_iter().map(one).collect());

    let grid = |pick: fn(&(f64, f64, f64)) -> f64| -> Vec<Vec<f64>> {
        flat.chunks(GRID_COLS)
            .map(|row| row.iter().map(pick).collect())
            .collect()
    };
    Ok(EfficiencyScan {
        shots,
        t_us: t,
        estimates: grid(|c| c.0),
        std_errors: grid(|c| c.1),
        expected: grid(|c| c.2),
    })
}

/// One retrieved qubit of an executed program.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadOutcome {
    pub qubit_id: String,
    pub slot: QubitSlot,
    pub input: PureQubit,
    pub write_time_us: f64,
    pub read_time_us: f64,
    pub retrieval: Retrieval,
}

/// Runs a compiled program on a fresh memory array, event by event. Every
/// addressing depolarizes occupied neighbors by `params.crosstalk_eps`.
pub fn execute_program(
    compiled: &CompiledProgram,
    map: &EfficiencyMap,
    params: &MemoryParams,
    mu: f64,
) -> Result<Vec<ReadOutcome>, HarnessError> {
    let mut array = MemoryArray::new();
    let mut written: BTreeMap<&str, (PureQubit, f64)> = BTreeMap::new();
    let mut out = Vec::new();
    for ev in &compiled.schedule {
        match ev.kind {
            EventKind::Write => {
                array.write(ev.slot, &CoherentPulse::new(mu, ev.state)?, ev.time_us)?;
                written.insert(&ev.qubit_id, (ev.state, ev.time_us));
            }
            EventKind::Read => {
                let retrieval = array.read(ev.slot, ev.time_us, map, params)?;
                let (input, write_time_us) = written[ev.qubit_id.as_str()];
                out.push(ReadOutcome {
                    qubit_id: ev.qubit_id.clone(),
                    slot: ev.slot,
                    input,
                    write_time_us,
                    read_time_us: ev.time_us,
                    retrieval,
                });
            }
        }
        array.apply_crosstalk(ev.slot, params.crosstalk_eps)?;
    }
    Ok(out)
}

/// Per-qubit result of one read order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QubitRow {
    pub order: String,
    pub qubit_id: String,
    pub row: usize,
    pub k: usize,
    pub write_time_us: f64,
    pub read_time_us: f64,
    pub storage_time_us: f64,
    pub efficiency: f64,
    pub mean_fidelity: f64,
    pub std_dev: f64,
    pub single_photon_bound: f64,
    pub coherent_bound: f64,
    pub efficiency_bound: f64,
    pub n_min: u32,
    pub margin: f64,
    pub sigmas: Option<f64>,
}

pub fn order_label(order: &[usize]) -> String {
    order
        .iter()
        .map(|q| q.to_string())
        .collect::<Vec<_>>()
        .join("-")
}

/// Writes the configured qubits, reads them back in each of `orders`, and
/// tomographs every retrieved qubit.
///
/// Each order is run six times. In run `r` qubit `i` carries input state
/// `r + 2i` (mod 6), so every qubit sees all six complementary states and
/// the qubits of one run are in different bases.
pub fn run_random_access(
    setup: &Setup,
    orders: &[Vec<usize>],
) -> Result<Vec<QubitRow>, HarnessError> {
    let cfg = &setup.config;
    let params = &setup.params;
    let slots = cfg.random_access_slots()?;
    let acquisition = cfg.acquisition();
    let single_photon = nqubit_bound(1)?;
    let coherent = coherent_bound(cfg.mu)?;

    let mut rows = Vec::new();
    for (oi, order) in orders.iter().enumerate() {
        let mut per_qubit: Vec<Vec<TomographyResult>> = vec![Vec::new(); slots.len()];
        let mut times = vec![(0.0, 0.0); slots.len()];
        for r in 0..InputState::ALL.len() {
            let inputs: Vec<InputState> = (0..slots.len())
                .map(|i| InputState::ALL[(r + 2 * i) % 6])
                .collect();
            let qubits: Vec<(QubitSlot, PureQubit)> = slots
                .iter()
                .zip(&inputs)
                .map(|(&s, st)| (s, st.state()))
                .collect();
            let program =
                random_access_schedule(&qubits, order, cfg.random_access_spacing, params)?;
            let compiled = compile(&program, params, cfg.timing.into())?;
            for outcome in execute_program(&compiled, &setup.map, params, cfg.mu)? {
                let i = slots
                    .iter()
                    .position(|&s| s == outcome.slot)
                    .expect("outcome slot is configured");
                let state = inputs[i];
                let key = StreamKey::new(Domain::RandomAccess, outcome.slot.index())
                    .state(state)
                    .extra(oi);
                let (_, res) =
                    tomograph_state(&outcome.retrieval.state, &outcome.input, acquisition, |b| {
                        stream(cfg.seed, key.basis(b))
                    })?;
                per_qubit[i].push(res);
                times[i] = (outcome.write_time_us, outcome.read_time_us);
            }
        }

        for (i, results) in per_qubit.into_iter().enumerate() {
            let six = combine_six(results);
            let (write_time_us, read_time_us) = times[i];
            let storage = read_time_us - write_time_us;
            let eta = slot_efficiency(&setup.map, slots[i], storage, params);
            let (sol, diff, sigmas) = bound_margin(cfg.mu, eta, six.mean_fidelity, six.std_dev)?;
            rows.push(QubitRow {
                order: order_label(order),
                qubit_id: format!("q{}", i + 1),
                row: slots[i].row(),
                k: slots[i].k(),
                write_time_us,
                read_time_us,
                storage_time_us: storage,
                efficiency: eta,
                mean_fidelity: six.mean_fidelity,
                std_dev: six.std_dev,
                single_photon_bound: single_photon,
                coherent_bound: coherent,
                efficiency_bound: sol.bound,
                n_min: sol.n_min,
                margin: diff,
                sigmas,
            });
        }
    }
    Ok(rows)
}

/// The read orders of the random-access demonstration.
pub fn default_read_orders() -> Vec<Vec<usize>> {
    vec![vec![1, 2, 3], vec![3, 2, 1], vec![2, 1, 3]]
}

/// `0.01, 0.02, ..., 1.00`
pub fn default_eta_grid() -> Vec<f64> {
    (1..=100).map(|i| i as f64 / 100.0).collect()
}

pub const BOUNDS_CSV_HEADER: &str =
    "label,mu,eta,n_min,gamma,eta_c,bound,coherent_bound,single_photon_bound";

/// Efficiency-aware bounds over `mu_grid × eta_grid` (rows labelled
/// `grid`), then for every slot at its efficiency after the configured
/// storage time (rows labelled `r{row}k{k}`).
pub fn run_bounds_table(
    setup: &Setup,
    mu_grid: &[f64],
    eta_grid: &[f64],
) -> Result<String, HarnessError> {
    if mu_grid.is_empty() || eta_grid.is_empty() {
        return Err(HarnessError::Config(
            "bounds grids must be non-empty".into(),
        ));
    }
    let single = nqubit_bound(1)?;
    let mut csv = String::new();
    writeln!(csv, "{BOUNDS_CSV_HEADER}").unwrap();
    let mut row = |label: &str, mu: f64, eta: f64| -> Result<(), HarnessError> {
        let sol = coherent_bound_with_efficiency(BoundParams::new(mu, eta)?)?;
        let f = coherent_bound(mu)?;
        writeln!(
            csv,
            "{label},{mu},{eta},{},{},{},{},{f},{single}",
            sol.n_min, sol.gamma, sol.eta_c, sol.bound
        )
        .unwrap();
        Ok(())
    };
    for &mu in mu_grid {
        for &eta in eta_grid {
            row("grid", mu, eta)?;
        }
    }
    let cfg = &setup.config;
    for slot in QubitSlot::all() {
        let eta = slot_efficiency(&setup.map, slot, cfg.storage_time_us, &setup.params);
        row(&slot.to_string(), cfg.mu, eta)?;
    }
    Ok(csv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ExperimentConfig;
    use crate::memory::SLOT_COUNT;
    use approx::assert_abs_diff_eq;

    fn setup(cfg: ExperimentConfig) -> Setup {
        cfg.resolve().unwrap()
    }

    fn analytic() -> ExperimentConfig {
        ExperimentConfig {
            analytic: true,
            ..Default::default()
        }
    }

    #[test]
    fn characterization_analytic_default() {
        let report = run_characterization(&setup(analytic())).unwrap();
        assert_eq!(report.records.len(), SLOT_COUNT);
        // Rails of a slot sit at mirrored offsets, so the default map is
        // balanced only near the center; imbalance costs a little fidelity.
        assert!((report.summary.grand_mean_fidelity - 0.9445).abs() < 2e-3);
        assert!(report.summary.min_margin > 0.0);
        assert!(report.summary.min_sigmas.unwrap() >= 4.0);
        let grid = report.grid(|r| r.mean_fidelity);
        assert_eq!(grid.len(), GRID_ROWS);
        assert!(grid.iter().all(|r| r.len() == 7));
    }

    #[test]
    fn characterization_matches_rail_imbalance_closed_form() {
        // Basis states keep 1 − p/2; equator states lose transverse length
        // to the factor 2√(ηU·ηD)/(ηU + ηD).
        let s = setup(analytic());
        let p = s.params.p_dep;
        let report = run_characterization(&s).unwrap();
        let map = s.map.rows();
        for r in &report.records {
            let (a, b) = (map[r.row][2 * r.k], map[r.row][2 * r.k + 1]);
            let c = 2.0 * (a * b).sqrt() / (a + b);
            let f = (2.0 * (1.0 - p / 2.0) + 4.0 * (1.0 + (1.0 - p) * c) / 2.0) / 6.0;
            assert_abs_diff_eq!(r.mean_fidelity, f, epsilon = 1e-12);
        }
    }

    #[test]
    fn homogeneous_channel_gives_equal_margins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.csv");
        std::fs::write(&path, EfficiencyMap::uniform(0.1).unwrap().to_csv()).unwrap();
        let cfg = ExperimentConfig {
            p_dep: Some(0.0),
            efficiency_map_csv: Some(path),
            ..analytic()
        };
        let report = run_characterization(&setup(cfg)).unwrap();
        let m0 = report.records[0].margin;
        for r in &report.records {
            assert_abs_diff_eq!(r.margin, m0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.mean_fidelity, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn efficiency_estimator_inverts_click_model() {
        let det = DetectorModel::new(0.9, 1e-3, 0.65).unwrap();
        for eta in [0.0, 0.02, 0.18, 0.7] {
            let p = click_probability(0.5 * eta, &det);
            assert_abs_diff_eq!(intrinsic_efficiency(p, 0.5, &det), eta, epsilon = 1e-12);
        }
    }

    #[test]
    fn efficiency_scan_zero_map() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.csv");
        std::fs::write(&path, EfficiencyMap::uniform(0.0).unwrap().to_csv()).unwrap();
        let cfg = ExperimentConfig {
            efficiency_map_csv: Some(path),
            efficiency_shots: 2000,
            ..Default::default()
        };
        let scan = run_efficiency_scan(&setup(cfg)).unwrap();
        assert!(scan.estimates.iter().flatten().all(|&e| e == 0.0));
    }

    #[test]
    fn efficiency_scan_analytic_is_exact() {
        let scan = run_efficiency_scan(&setup(analytic())).unwrap();
        for (est, exp) in scan
            .estimates
            .iter()
            .flatten()
            .zip(scan.expected.iter().flatten())
        {
            assert_abs_diff_eq!(est, exp, epsilon = 1e-12);
        }
        let max = scan.expected.iter().flatten().cloned().fold(0.0, f64::max);
        assert!(max > 0.17 && max <= 0.18);
        assert_abs_diff_eq!(scan.expected[0][0], 0.02, epsilon = 1e-3);
    }

    #[test]
    fn random_access_ideal_and_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.csv");
        std::fs::write(&path, EfficiencyMap::uniform(0.1).unwrap().to_csv()).unwrap();
        let ideal = ExperimentConfig {
            p_dep: Some(0.0),
            efficiency_map_csv: Some(path),
            ..analytic()
        };
        let rows = run_random_access(&setup(ideal), &[vec![1, 2, 3]]).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert_abs_diff_eq!(r.mean_fidelity, 1.0, epsilon = 1e-12);
        }

        let rows = run_random_access(&setup(analytic()), &[vec![3, 2, 1]]).unwrap();
        let q1 = &rows[0];
        for other in &rows[1..] {
            assert!(q1.storage_time_us > other.storage_time_us);
            assert!(q1.efficiency < other.efficiency);
        }
        assert!(rows.iter().all(|r| r.margin > 0.0));
    }

    #[test]
    fn bounds_table_rows() {
        let csv = run_bounds_table(&setup(analytic()), &[0.5], &[1.0, 0.18]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], BOUNDS_CSV_HEADER);
        assert_eq!(lines.len(), 1 + 2 + SLOT_COUNT);
        let field = |line: &str, i: usize| line.split(',').nth(i).unwrap().parse::<f64>().unwrap();
        assert!((field(lines[1], 6) - 0.688).abs() < 5e-4);
        assert!((field(lines[2], 6) - 0.761).abs() < 5e-4);
        assert_abs_diff_eq!(field(lines[1], 8), 2.0 / 3.0, epsilon = 1e-15);
        assert!(run_bounds_table(&setup(analytic()), &[], &[0.5]).is_err());
    }
}
