//! Multi-node orchestration: topology planning, the comparator schedule
//! realizing the sorting unitary on `2^t` node registers, and the ledger
//! attributing every gate of a round to the node that executes it.
//!
//! Distribution is simulated in one process. Cross-node two-qubit gates are
//! applied directly and counted: one such gate costs one teleportation event
//! (one ebit plus two classical bits), reported but not simulated.
//!
//! Cost model for depth estimates (whole-register gates are not synthesized,
//! so these are declared equivalents): an XOR oracle over `k` input bits with
//! `m` output bits counts `k * m` depth (one m-bit XOR row per input bit), a
//! comparator on m-bit operands counts `2m + 1`, a QFT on `k` qubits counts
//! `k(k+1)/2`, a Hadamard layer counts 1.

use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instances::Decomposition;
use crate::sieve::PhaseLabel;
use crate::statevector::{run_distributed_round, Backend, RegId, RoundOutput, StateVector};

/// One node's register manifest.
#[derive(Debug, Clone, Serialize)]
pub struct NodeManifest {
    pub id: u64,
    pub oracle_input_width: u32,
    pub output_qubits: u32,
}

/// The coordinator holds the branch, input and sorted registers.
#[derive(Debug, Clone, Serialize)]
pub struct CoordinatorManifest {
    pub branch_qubits: u32,
    pub input_qubits: u32,
    pub sorted_qubits: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeTopology {
    pub t: u32,
    pub nodes: Vec<NodeManifest>,
    pub coordinator: CoordinatorManifest,
}

/// Assigns subfunction `f_w`/`g_w` to node `w` and the shared registers to
/// the coordinator.
pub fn plan(dec: &Decomposition) -> NodeTopology {
    let m = dec.parent().m();
    let nodes = (0..dec.node_count())
        .map(|id| NodeManifest {
            id,
            oracle_input_width: dec.suffix_width(),
            output_qubits: m,
        })
        .collect();
    NodeTopology {
        t: dec.t(),
        nodes,
        coordinator: CoordinatorManifest {
            branch_qubits: 1,
            input_qubits: dec.suffix_width(),
            sorted_qubits: m * dec.node_count() as u32,
        },
    }
}

/// Batcher odd-even mergesort network over a power-of-two element count.
/// Pairs within a layer are disjoint, so a layer executes in one step.
#[derive(Debug, Clone, Serialize)]
pub struct ComparatorSchedule {
    pub element_count: usize,
    pub element_width: u32,
    pub layers: Vec<Vec<(usize, usize)>>,
}

pub fn build_comparator_schedule(count: usize, element_width: u32) -> Result<ComparatorSchedule> {
    if count < 2 || !count.is_power_of_two() {
        return Err(Error::InvalidParameters(format!(
            "comparator schedule needs a power-of-two count >= 2, got {count}"
        )));
    }
    let mut layers = Vec::new();
    let n = count;
    let mut p = 1;
    while p < n {
        let mut k = p;
        while k >= 1 {
            let mut layer = Vec::new();
            let mut j = k % p;
            while j + k < n {
                for i in 0..usize::min(k, n - j - k) {
                    if (i + j) / (2 * p) == (i + j + k) / (2 * p) {
                        layer.push((i + j, i + j + k));
                    }
                }
                j += 2 * k;
            }
            layers.push(layer);
            k /= 2;
        }
        p *= 2;
    }
    Ok(ComparatorSchedule { element_count: count, element_width, layers })
}

impl ComparatorSchedule {
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn comparator_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// Classical compare-and-swap pass; sorts `vals` ascending.
    pub fn apply(&self, vals: &mut [u64]) {
        assert_eq!(vals.len(), self.element_count);
        for layer in &self.layers {
            for &(i, j) in layer {
                if vals[i] > vals[j] {
                    vals.swap(i, j);
                }
            }
        }
    }
}

/// The sorting unitary realized through the comparator schedule instead of a
/// builtin sort: identical action on every basis state.
pub fn apply_usort_via_schedule(
    state: &mut StateVector,
    node_regs: &[RegId],
    sorted: RegId,
    schedule: &ComparatorSchedule,
) -> Result<()> {
    let layout = state.layout().clone();
    let m = layout.width(node_regs[0]);
    if schedule.element_count != node_regs.len() || schedule.element_width != m {
        return Err(Error::WidthMismatch("schedule does not match node registers".into()));
    }
    if layout.width(sorted) != m * node_regs.len() as u32 {
        return Err(Error::WidthMismatch("sorted register width".into()));
    }
    let regs = node_regs.to_vec();
    let s_off = layout.offset(sorted);
    let schedule = schedule.clone();
    state.apply_xor_permutation(move |idx| {
        let mut vals = [0u64; 32];
        for (slot, &r) in regs.iter().enumerate() {
            vals[slot] = layout.value(idx, r);
        }
        schedule.apply(&mut vals[..regs.len()]);
        let mut packed = 0usize;
        for &v in &vals[..regs.len()] {
            packed = (packed << m) | v as usize;
        }
        packed << s_off
    });
    Ok(())
}

/// Declared depth of an XOR oracle over `input_width` input bits with `m`
/// output bits.
pub fn oracle_depth(input_width: u32, m: u32) -> u64 {
    input_width as u64 * m as u64
}

/// Declared depth of one m-bit comparator.
pub fn comparator_depth(m: u32) -> u64 {
    2 * m as u64 + 1
}

/// Declared depth of a QFT on `k` qubits.
pub fn qft_depth(k: u32) -> u64 {
    k as u64 * (k as u64 + 1) / 2
}

/// Per-node counters; monotone over a run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct NodeCounters {
    pub oracle_queries: u64,
    pub local_two_qubit: u64,
    pub cross_node_two_qubit: u64,
    pub qubits: u32,
    pub depth: u64,
}

/// Resource attribution for one run: one entry per worker node plus the
/// coordinator. A monolithic run is a ledger with `t = 0` and no workers.
#[derive(Debug, Clone, Serialize)]
pub struct CommLedger {
    pub n: u32,
    pub m: u32,
    pub t: u32,
    pub rounds: u64,
    pub workers: Vec<NodeCounters>,
    pub coordinator: NodeCounters,
}

impl CommLedger {
    pub fn for_distributed(dec: &Decomposition) -> Self {
        let m = dec.parent().m();
        let workers = (0..dec.node_count())
            .map(|_| NodeCounters { qubits: m, ..Default::default() })
            .collect();
        CommLedger {
            n: dec.parent().n(),
            m,
            t: dec.t(),
            rounds: 0,
            workers,
            coordinator: NodeCounters {
                qubits: 1 + dec.suffix_width() + m * dec.node_count() as u32,
                ..Default::default()
            },
        }
    }

    pub fn for_monolithic(n: u32, m: u32) -> Self {
        CommLedger {
            n,
            m,
            t: 0,
            rounds: 0,
            workers: Vec::new(),
            coordinator: NodeCounters { qubits: 1 + n + m, ..Default::default() },
        }
    }

    /// Counters for one distributed round under the declared cost model;
    /// identical for both backends by construction.
    pub fn record_distributed_round(&mut self, schedule: &ComparatorSchedule, input_width: u32) {
        self.rounds += 1;
        for w in &mut self.workers {
            // compute + uncompute
            w.oracle_queries += 2;
            w.depth += 2 * oracle_depth(input_width, self.m);
        }
        for layer in &schedule.layers {
            for &(i, _j) in layer {
                // node-output registers live on distinct nodes, so every
                // comparator is a cross-node event; attributed to the
                // lower-indexed participant
                self.workers[i].cross_node_two_qubit += 1;
            }
        }
        self.coordinator.depth +=
            1 + schedule.layer_count() as u64 * comparator_depth(self.m) + qft_depth(input_width);
        self.coordinator.local_two_qubit += self.m as u64 * self.workers.len() as u64;
    }

    pub fn record_single_node_round(&mut self, input_width: u32) {
        self.rounds += 1;
        self.coordinator.oracle_queries += 1;
        self.coordinator.depth += 1 + oracle_depth(input_width, self.m) + qft_depth(input_width);
    }

    pub fn total_oracle_queries(&self) -> u64 {
        self.workers.iter().map(|w| w.oracle_queries).sum::<u64>()
            + self.coordinator.oracle_queries
    }

    pub fn total_cross_node(&self) -> u64 {
        self.workers.iter().map(|w| w.cross_node_two_qubit).sum::<u64>()
            + self.coordinator.cross_node_two_qubit
    }

    pub fn total_two_qubit(&self) -> u64 {
        self.workers.iter().map(|w| w.local_two_qubit + w.cross_node_two_qubit).sum::<u64>()
            + self.coordinator.local_two_qubit
            + self.coordinator.cross_node_two_qubit
    }
}

/// Runs one pre-sieve round and attributes its gates in the ledger. The
/// circuit backend executes the full statevector pipeline; the analytic
/// backend samples the label from its verified uniform distribution, with
/// identical ledger entries.
pub fn distributed_round(
    dec: &Decomposition,
    backend: Backend,
    schedule: &ComparatorSchedule,
    rng: &mut impl Rng,
    ledger: &mut CommLedger,
) -> Result<RoundOutput> {
    let out = match backend {
        Backend::Circuit { qubit_cap } => run_distributed_round(dec, qubit_cap, rng)?,
        Backend::Analytic => {
            let modulus = dec.suffix_size();
            let l = rng.random_range(0..modulus);
            RoundOutput {
                label: PhaseLabel::fresh(l, modulus),
                records: Vec::new(),
                branch_fidelity: None,
                sorted_value: None,
            }
        }
    };
    ledger.record_distributed_round(schedule, dec.suffix_width());
    Ok(out)
}

/// Side-by-side resource comparison of a distributed run against a
/// monolithic baseline on the same instance.
#[derive(Debug, Clone, Serialize)]
pub struct ResourceReport {
    pub n: u32,
    pub m: u32,
    pub t: u32,
    pub sorting_network: &'static str,
    pub monolithic_oracle_input_width: u32,
    pub per_node_oracle_input_width: u32,
    pub monolithic: CommLedger,
    pub distributed: CommLedger,
}

pub fn resource_report(distributed: &CommLedger, monolithic: &CommLedger) -> Result<ResourceReport> {
    if distributed.n != monolithic.n || distributed.m != monolithic.m {
        return Err(Error::InvalidParameters(
            "ledgers come from different instances".into(),
        ));
    }
    if distributed.t == 0 {
        return Err(Error::InvalidParameters("first ledger is not distributed".into()));
    }
    let report = ResourceReport {
        n: distributed.n,
        m: distributed.m,
        t: distributed.t,
        sorting_network: "batcher-odd-even-merge",
        monolithic_oracle_input_width: monolithic.n,
        per_node_oracle_input_width: distributed.n - distributed.t,
        monolithic: monolithic.clone(),
        distributed: distributed.clone(),
    };
    assert!(
        report.per_node_oracle_input_width < report.monolithic_oracle_input_width,
        "per-node oracle input must be strictly narrower"
    );
    Ok(report)
}

impl fmt::Display for ResourceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "resources (n={}, m={}, t={}, network={})", self.n, self.m, self.t, self.sorting_network)?;
        writeln!(
            f,
            "{:<14} {:>7} {:>9} {:>9} {:>11} {:>11}",
            "node", "qubits", "oracle", "depth", "local-2q", "cross-2q"
        )?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, c: &NodeCounters| {
            writeln!(
                f,
                "{:<14} {:>7} {:>9} {:>9} {:>11} {:>11}",
                name, c.qubits, c.oracle_queries, c.depth, c.local_two_qubit, c.cross_node_two_qubit
            )
        };
        row(f, "monolithic", &self.monolithic.coordinator)?;
        row(f, "coordinator", &self.distributed.coordinator)?;
        for (i, w) in self.distributed.workers.iter().enumerate() {
            row(f, &format!("node{i}"), w)?;
        }
        writeln!(
            f,
            "oracle input width: monolithic {} vs per-node {}",
            self.monolithic_oracle_input_width, self.per_node_oracle_input_width
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{load_table1, Decomposition};
    use crate::rng;
    use crate::statevector::{RegisterLayout, StateVector};

    #[test]
    fn plan_table1() {
        let inst = load_table1();
        let dec = Decomposition::new(&inst, 1).unwrap();
        let topo = plan(&dec);
        assert_eq!(topo.nodes.len(), 2);
        assert_eq!(topo.nodes[0].oracle_input_width, 2);
        assert_eq!(topo.coordinator.sorted_qubits, 8);
    }

    #[test]
    fn plan_manifest_arithmetic() {
        let mut r = rng::master(4);
        let inst = crate::instances::generate_instance(8, 8, 17, &mut r).unwrap();
        let dec = Decomposition::new(&inst, 2).unwrap();
        let topo = plan(&dec);
        assert_eq!(topo.nodes.len(), 4);
        assert!(topo.nodes.iter().all(|n| n.output_qubits == 8));
        assert_eq!(topo.coordinator.input_qubits, 6);
    }

    #[test]
    fn schedule_shapes() {
        let two = build_comparator_schedule(2, 4).unwrap();
        assert_eq!(two.layer_count(), 1);
        assert_eq!(two.comparator_count(), 1);

        let four = build_comparator_schedule(4, 4).unwrap();
        assert_eq!(four.layer_count(), 3);
        assert_eq!(four.comparator_count(), 5);

        let eight = build_comparator_schedule(8, 4).unwrap();
        assert_eq!(eight.layer_count(), 6);

        assert!(build_comparator_schedule(3, 4).is_err());
        assert!(build_comparator_schedule(1, 4).is_err());
    }

    #[test]
    fn zero_one_principle_exhaustive() {
        for t in 1..=3u32 {
            let count = 1usize << t;
            let schedule = build_comparator_schedule(count, 1).unwrap();
            for word in 0..(1u64 << count) {
                let mut vals: Vec<u64> = (0..count).map(|i| (word >> i) & 1).collect();
                schedule.apply(&mut vals);
                assert!(vals.windows(2).all(|w| w[0] <= w[1]), "count {count} word {word:b}");
            }
        }
    }

    #[test]
    fn schedule_matches_reference_sort_randomized() {
        let mut r = rng::master(9);
        for t in 1..=3u32 {
            let count = 1usize << t;
            let schedule = build_comparator_schedule(count, 8).unwrap();
            for _ in 0..2000 {
                let mut vals: Vec<u64> = (0..count).map(|_| r.random_range(0..256)).collect();
                let mut expect = vals.clone();
                expect.sort_unstable();
                schedule.apply(&mut vals);
                assert_eq!(vals, expect);
            }
        }
    }

    #[test]
    fn layers_have_disjoint_pairs() {
        for t in 1..=4u32 {
            let schedule = build_comparator_schedule(1 << t, 4).unwrap();
            for layer in &schedule.layers {
                let mut touched = std::collections::HashSet::new();
                for &(i, j) in layer {
                    assert!(i < j);
                    assert!(touched.insert(i) && touched.insert(j));
                }
            }
        }
    }

    #[test]
    fn schedule_usort_equals_direct_gate_on_all_basis_states() {
        // n = 4, t = 2, m = 1 keeps the full space enumerable: 4 nodes of
        // 1-bit outputs plus a 4-bit sorted register
        let schedule = build_comparator_schedule(4, 1).unwrap();
        let spec: [(&str, u32); 7] = [
            ("branch", 1),
            ("input", 2),
            ("node0", 1),
            ("node1", 1),
            ("node2", 1),
            ("node3", 1),
            ("sorted", 4),
        ];
        let dims = 1usize << 11;
        for basis in 0..dims {
            let layout = RegisterLayout::new(&spec).unwrap();
            let regs: Vec<RegId> =
                (0..4).map(|i| layout.id(&format!("node{i}")).unwrap()).collect();
            let sorted = layout.id("sorted").unwrap();
            let mut direct = StateVector::zero_state(layout, 12).unwrap();
            direct.set_basis(basis);
            let mut via = direct.clone();
            direct.apply_usort(&regs, sorted).unwrap();
            apply_usort_via_schedule(&mut via, &regs, sorted, &schedule).unwrap();
            assert_eq!(direct.find_single_basis(), via.find_single_basis(), "basis {basis}");
        }
    }

    #[test]
    fn ledger_counts_one_round() {
        let inst = load_table1();
        let dec = Decomposition::new(&inst, 1).unwrap();
        let schedule = build_comparator_schedule(2, 4).unwrap();
        let mut ledger = CommLedger::for_distributed(&dec);
        let mut r = rng::master(21);
        let out = distributed_round(
            &dec,
            Backend::Circuit { qubit_cap: crate::DEFAULT_QUBIT_CAP },
            &schedule,
            &mut r,
            &mut ledger,
        )
        .unwrap();
        assert_eq!(out.label.modulus(), 4);
        assert!(ledger.workers.iter().all(|w| w.oracle_queries == 2));
        assert!(ledger.total_cross_node() >= 1);
        assert_eq!(ledger.rounds, 1);
    }

    #[test]
    fn analytic_round_populates_ledger_identically() {
        let inst = load_table1();
        let dec = Decomposition::new(&inst, 1).unwrap();
        let schedule = build_comparator_schedule(2, 4).unwrap();
        let mut circuit = CommLedger::for_distributed(&dec);
        let mut analytic = CommLedger::for_distributed(&dec);
        let mut r = rng::master(5);
        distributed_round(
            &dec,
            Backend::Circuit { qubit_cap: crate::DEFAULT_QUBIT_CAP },
            &schedule,
            &mut r,
            &mut circuit,
        )
        .unwrap();
        distributed_round(&dec, Backend::Analytic, &schedule, &mut r, &mut analytic).unwrap();
        assert_eq!(serde_json::to_string(&circuit).unwrap(), serde_json::to_string(&analytic).unwrap());
    }

    #[test]
    fn resource_report_widths_and_depth_monotonicity() {
        let mut r = rng::master(2);
        let inst = crate::instances::generate_instance(8, 8, 100, &mut r).unwrap();
        let mut mono = CommLedger::for_monolithic(8, 8);
        mono.record_single_node_round(8);
        let mut depths = Vec::new();
        for t in 1..=3u32 {
            let dec = Decomposition::new(&inst, t).unwrap();
            let schedule = build_comparator_schedule(1 << t, 8).unwrap();
            let mut ledger = CommLedger::for_distributed(&dec);
            ledger.record_distributed_round(&schedule, dec.suffix_width());
            let report = resource_report(&ledger, &mono).unwrap();
            assert_eq!(report.per_node_oracle_input_width, 8 - t);
            assert!(report.per_node_oracle_input_width < report.monolithic_oracle_input_width);
            // per-node oracle-stage depth under the cost model
            depths.push(ledger.workers[0].depth);
        }
        assert!(depths.windows(2).all(|w| w[1] < w[0]), "oracle depth decreasing in t: {depths:?}");
    }

    #[test]
    fn cross_node_events_match_schedule() {
        let inst = {
            let mut r = rng::master(6);
            crate::instances::generate_instance(6, 6, 9, &mut r).unwrap()
        };
        let dec = Decomposition::new(&inst, 2).unwrap();
        let schedule = build_comparator_schedule(4, 6).unwrap();
        let mut ledger = CommLedger::for_distributed(&dec);
        ledger.record_distributed_round(&schedule, dec.suffix_width());
        ledger.record_distributed_round(&schedule, dec.suffix_width());
        assert_eq!(ledger.total_cross_node(), 2 * schedule.comparator_count() as u64);
    }

    #[test]
    fn mismatched_ledgers_are_rejected() {
        let mono = CommLedger::for_monolithic(5, 6);
        let other = CommLedger::for_monolithic(6, 6);
        assert!(resource_report(&other, &mono).is_err());
    }
}
