use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use raqm::control::{compile, random_access_schedule, TimingMode};
use raqm::harness::experiments::execute_program;
use raqm::harness::{run_characterization, ExperimentConfig};
use raqm::memory::{slot_efficiency, EfficiencyMap, MemoryParams, QubitSlot, SLOT_COUNT};
use raqm::qstate::{fidelity, InputState};

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        shots: 100,
        resamples: 100,
        ..Default::default()
    }
}

#[test]
fn characterization_independent_of_workers() {
    let one = run_characterization(
        &ExperimentConfig {
            workers: Some(1),
            ..small_config()
        }
        .resolve()
        .unwrap(),
    )
    .unwrap();
    let three = run_characterization(
        &ExperimentConfig {
            workers: Some(3),
            ..small_config()
        }
        .resolve()
        .unwrap(),
    )
    .unwrap();
    assert_eq!(one, three);
}

#[test]
fn default_run_certifies_every_slot() {
    let report = run_characterization(&ExperimentConfig::default().resolve().unwrap()).unwrap();
    assert_eq!(report.records.len(), SLOT_COUNT);
    assert!(report.records.iter().all(|r| r.margin > 0.0));
    assert!(report.summary.min_sigmas.unwrap() >= 4.0);
    assert!(report.records.iter().all(|r| r.std_dev < 0.02));
}

fn distinct_slots(n: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::sample::subsequence((0..SLOT_COUNT).collect::<Vec<_>>(), n).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Under a noiseless memory with balanced rails every read returns the
    // state written to that slot, for any read order.
    #[test]
    fn read_order_preserves_written_states(
        slots in distinct_slots(4),
        states in proptest::collection::vec(0usize..6, 4),
        order in Just(vec![1usize, 2, 3, 4]).prop_shuffle(),
        spacing in 1u32..4,
    ) {
        let params = MemoryParams::ideal();
        let map = EfficiencyMap::uniform(1.0).unwrap();
        let qubits: Vec<_> = slots
            .iter()
            .zip(&states)
            .map(|(&s, &k)| (QubitSlot::from_index(s).unwrap(), InputState::ALL[k].state()))
            .collect();
        let program = random_access_schedule(&qubits, &order, spacing, &params).unwrap();
        let compiled = compile(&program, &params, TimingMode::Strict).unwrap();
        let reads = execute_program(&compiled, &map, &params, 0.5).unwrap();
        prop_assert_eq!(reads.len(), qubits.len());
        for (pos, r) in reads.iter().enumerate() {
            let (slot, psi) = qubits[order[pos] - 1];
            prop_assert_eq!(r.slot, slot);
            assert_abs_diff_eq!(fidelity(&psi, &r.retrieval.state), 1.0, epsilon = 1e-12);
            let dt = r.read_time_us - r.write_time_us;
            assert_abs_diff_eq!(
                r.retrieval.retrieval_prob,
                slot_efficiency(&map, slot, dt, &params),
                epsilon = 1e-12
            );
            let k = (r.read_time_us - r.write_time_us) / params.larmor_period_us;
            assert_abs_diff_eq!(k, k.round(), epsilon = 1e-9);
        }
    }

    // Crosstalk only ever lowers the fidelity of the other stored qubits.
    #[test]
    fn crosstalk_never_helps(eps in 0.0f64..0.2, first in 0usize..3) {
        let slots = ExperimentConfig::default().random_access_slots().unwrap();
        let neighbors = [slots[1], QubitSlot::new(7, 4).unwrap(), QubitSlot::new(7, 2).unwrap()];
        let qubits: Vec<_> = neighbors.iter().map(|&s| (s, InputState::Plus.state())).collect();
        let mut order = vec![1, 2, 3];
        order.rotate_left(first);
        let map = EfficiencyMap::uniform(0.1).unwrap();
        let clean = MemoryParams::ideal();
        let noisy = MemoryParams { crosstalk_eps: eps, ..clean };
        let run = |p: &MemoryParams| {
            let prog = random_access_schedule(&qubits, &order, 1, p).unwrap();
            let compiled = compile(&prog, p, TimingMode::Strict).unwrap();
            execute_program(&compiled, &map, p, 0.5).unwrap()
        };
        for (a, b) in run(&clean).iter().zip(run(&noisy).iter()) {
            let fa = fidelity(&a.input, &a.retrieval.state);
            let fb = fidelity(&b.input, &b.retrieval.state);
            prop_assert!(fb <= fa + 1e-12);
        }
    }
}
