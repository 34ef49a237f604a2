//! Exact dense simulation of the label-producing circuits.
//!
//! Amplitude indexing is register-major and big-endian: the first register of
//! a layout occupies the most significant bits of the flat index, and within
//! a register the first qubit is the most significant bit. Measurement
//! records are therefore reproducible bit-exactly given the same RNG stream.
//!
//! Oracles and the sorting unitary are applied as whole-register classical
//! XOR gates; their elementary-gate cost is reported separately through the
//! ledger's cost model rather than synthesized gate by gate.

use std::collections::HashSet;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instances::{Decomposition, HiddenShiftInstance};
use crate::sieve::PhaseLabel;

/// Which label source drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Backend {
    /// Full statevector simulation, feasible up to `qubit_cap` total qubits.
    Circuit { qubit_cap: usize },
    /// Labels sampled from their analytically known distribution.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegId(usize);

#[derive(Debug, Clone)]
struct Register {
    name: String,
    width: u32,
    /// Bit position of the register's least significant qubit in the flat index.
    offset: u32,
}

/// Ordered list of named registers covering all qubits exactly once.
#[derive(Debug, Clone)]
pub struct RegisterLayout {
    regs: Vec<Register>,
    total: u32,
}

impl RegisterLayout {
    pub fn new(spec: &[(&str, u32)]) -> Result<Self> {
        if spec.is_empty() || spec.iter().any(|&(_, w)| w == 0) {
            return Err(Error::InvalidParameters("registers must be nonempty".into()));
        }
        let total: u32 = spec.iter().map(|&(_, w)| w).sum();
        let mut regs = Vec::with_capacity(spec.len());
        let mut used = total;
        for &(name, width) in spec {
            used -= width;
            regs.push(Register { name: name.to_string(), width, offset: used });
        }
        Ok(Self { regs, total })
    }

    pub fn id(&self, name: &str) -> Result<RegId> {
        self.regs
            .iter()
            .position(|r| r.name == name)
            .map(RegId)
            .ok_or_else(|| Error::UnknownRegister(name.to_string()))
    }

    pub fn total_qubits(&self) -> u32 {
        self.total
    }

    pub fn width(&self, reg: RegId) -> u32 {
        self.regs[reg.0].width
    }

    pub fn name(&self, reg: RegId) -> &str {
        &self.regs[reg.0].name
    }

    pub(crate) fn offset(&self, reg: RegId) -> u32 {
        self.regs[reg.0].offset
    }

    /// Classical value of `reg` in basis index `idx`.
    pub fn value(&self, idx: usize, reg: RegId) -> u64 {
        let r = &self.regs[reg.0];
        (idx as u64 >> r.offset) & ((1 << r.width) - 1)
    }

    /// Flat index with each listed register set to a value, others zero.
    pub fn index_of(&self, assignments: &[(RegId, u64)]) -> usize {
        let mut idx = 0u64;
        for &(reg, v) in assignments {
            let r = &self.regs[reg.0];
            debug_assert!(v < (1 << r.width));
            idx |= v << r.offset;
        }
        idx as usize
    }
}

/// One projective measurement: register, observed value, Born probability.
#[derive(Debug, Clone, Serialize)]
pub struct MeasurementRecord {
    pub register: String,
    pub value: u64,
    pub probability: f64,
}

/// Dense complex amplitude vector over a register layout.
#[derive(Clone)]
pub struct StateVector {
    layout: RegisterLayout,
    amps: Vec<Complex64>,
}

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

impl StateVector {
    /// The all-zeros basis state. Fails when the layout exceeds `qubit_cap`.
    pub fn zero_state(layout: RegisterLayout, qubit_cap: usize) -> Result<Self> {
        let q = layout.total_qubits() as usize;
        if q > qubit_cap {
            return Err(Error::BackendTooLarge { qubits: q, cap: qubit_cap });
        }
        let mut amps = vec![Complex64::ZERO; 1 << q];
        amps[0] = Complex64::ONE;
        Ok(Self { layout, amps })
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn amplitude(&self, assignments: &[(RegId, u64)]) -> Complex64 {
        self.amps[self.layout.index_of(assignments)]
    }

    /// Resets to the computational basis state `|idx>`.
    pub fn set_basis(&mut self, idx: usize) {
        self.amps.fill(Complex64::ZERO);
        self.amps[idx] = Complex64::ONE;
    }

    /// Index of the single basis state carrying all amplitude; panics if the
    /// state is not a basis state.
    pub fn find_single_basis(&self) -> usize {
        let mut found = None;
        for (idx, amp) in self.amps.iter().enumerate() {
            if amp.norm_sqr() > 1e-20 {
                assert!(found.is_none(), "state is not a basis state");
                assert!((amp.norm() - 1.0).abs() < 1e-10);
                found = Some(idx);
            }
        }
        found.expect("state has no support")
    }

    /// Tensor-product Hadamard on every qubit of `reg`.
    pub fn apply_hadamard_layer(&mut self, reg: RegId) {
        let off = self.layout.offset(reg);
        for b in off..off + self.layout.width(reg) {
            let bit = 1usize << b;
            for idx in 0..self.amps.len() {
                if idx & bit == 0 {
                    let lo = self.amps[idx];
                    let hi = self.amps[idx | bit];
                    self.amps[idx] = (lo + hi) * INV_SQRT2;
                    self.amps[idx | bit] = (lo - hi) * INV_SQRT2;
                }
            }
        }
    }

    /// Applies `|idx> -> |idx ^ mask(idx)>` where `mask` must not depend on
    /// the bits it flips. Such gates are involutions (XOR semantics), so the
    /// permutation decomposes into disjoint transpositions.
    pub(crate) fn apply_xor_permutation(&mut self, mask: impl Fn(usize) -> usize) {
        let nonzero: Vec<usize> = (0..self.amps.len())
            .filter(|&i| self.amps[i] != Complex64::ZERO)
            .collect();
        let mut moved: HashSet<usize> = HashSet::with_capacity(nonzero.len());
        for idx in nonzero {
            if moved.contains(&idx) {
                continue;
            }
            let m = mask(idx);
            if m == 0 {
                continue;
            }
            let partner = idx ^ m;
            debug_assert_eq!(mask(partner), m, "mask must ignore target bits");
            self.amps.swap(idx, partner);
            moved.insert(idx);
            moved.insert(partner);
        }
    }

    /// Oracle of the single-node circuit: XORs `f(x)` (branch 0) or `g(x)`
    /// (branch 1) into the target register. Self-inverse.
    pub fn apply_oracle_single(
        &mut self,
        branch: RegId,
        input: RegId,
        target: RegId,
        inst: &HiddenShiftInstance,
    ) -> Result<()> {
        if self.layout.width(target) != inst.m() || self.layout.width(input) != inst.n() {
            return Err(Error::WidthMismatch(format!(
                "oracle needs input width {} and target width {}",
                inst.n(),
                inst.m()
            )));
        }
        let layout = self.layout.clone();
        let t_off = layout.offset(target);
        self.apply_xor_permutation(|idx| {
            let x = layout.value(idx, input);
            let v = if layout.value(idx, branch) == 0 { inst.f(x) } else { inst.g(x) };
            (v as usize) << t_off
        });
        Ok(())
    }

    /// Distributed oracle: for every node `w`, XORs `f_w(u)` or `g_w(u)` into
    /// node `w`'s target register, conditioned on the branch qubit. All node
    /// queries commute (disjoint targets) and are applied in one pass.
    pub fn apply_oracle_distributed(
        &mut self,
        branch: RegId,
        input: RegId,
        node_targets: &[RegId],
        dec: &Decomposition,
    ) -> Result<()> {
        let m = dec.parent().m();
        if node_targets.len() != dec.node_count() as usize {
            return Err(Error::WidthMismatch("one target register per node".into()));
        }
        if node_targets.iter().any(|&r| self.layout.width(r) != m) {
            return Err(Error::WidthMismatch(format!("node targets must be {m} bits wide")));
        }
        if self.layout.width(input) != dec.suffix_width() {
            return Err(Error::WidthMismatch("input register must be n-t bits wide".into()));
        }
        // precomputed per-branch XOR masks over all node registers at once
        let layout = self.layout.clone();
        let offsets: Vec<u32> = node_targets.iter().map(|&r| layout.offset(r)).collect();
        let masks: Vec<[usize; 2]> = (0..dec.suffix_size())
            .map(|u| {
                let mut mf = 0usize;
                let mut mg = 0usize;
                for (w, &off) in offsets.iter().enumerate() {
                    mf |= (dec.f_w(w as u64, u) as usize) << off;
                    mg |= (dec.g_w(w as u64, u) as usize) << off;
                }
                [mf, mg]
            })
            .collect();
        self.apply_xor_permutation(|idx| {
            let u = layout.value(idx, input) as usize;
            masks[u][layout.value(idx, branch) as usize]
        });
        Ok(())
    }

    /// XORs the ascending sorted concatenation of the node registers into the
    /// sorted register (smallest value in the most significant slot). The
    /// node registers are untouched; the gate is self-inverse.
    pub fn apply_usort(&mut self, node_regs: &[RegId], sorted: RegId) -> Result<()> {
        let m = self.layout.width(node_regs[0]);
        if node_regs.iter().any(|&r| self.layout.width(r) != m) {
            return Err(Error::WidthMismatch("node registers must share a width".into()));
        }
        if self.layout.width(sorted) != m * node_regs.len() as u32 {
            return Err(Error::WidthMismatch(format!(
                "sorted register must be {} bits wide",
                m * node_regs.len() as u32
            )));
        }
        let layout = self.layout.clone();
        let regs = node_regs.to_vec();
        let s_off = layout.offset(sorted);
        self.apply_xor_permutation(|idx| {
            let mut vals = [0u64; 32];
            let count = regs.len();
            for (slot, &r) in regs.iter().enumerate() {
                vals[slot] = layout.value(idx, r);
            }
            vals[..count].sort_unstable();
            let mut packed = 0usize;
            for &v in &vals[..count] {
                packed = (packed << m) | v as usize;
            }
            packed << s_off
        });
        Ok(())
    }

    /// QFT on one register: `|x> -> 2^{-k/2} sum_y e^{2 pi i x y / 2^k} |y>`.
    pub fn apply_qft(&mut self, reg: RegId) {
        self.dft_register(reg, false);
    }

    pub fn apply_qft_inverse(&mut self, reg: RegId) {
        self.dft_register(reg, true);
    }

    fn dft_register(&mut self, reg: RegId, inverse: bool) {
        let k = self.layout.width(reg);
        let off = self.layout.offset(reg);
        let size = 1usize << k;
        let scale = 1.0 / (size as f64).sqrt();
        let mut planner = FftPlanner::new();
        // the QFT's positive-exponent convention matches the FFT's inverse
        let fft = if inverse { planner.plan_fft_forward(size) } else { planner.plan_fft_inverse(size) };
        let above = self.layout.total_qubits() - off - k;
        let mut buf = vec![Complex64::ZERO; size];
        for hi in 0..(1usize << above) {
            for lo in 0..(1usize << off) {
                let base = (hi << (off + k)) | lo;
                for (r, slot) in buf.iter_mut().enumerate() {
                    *slot = self.amps[base | (r << off)];
                }
                fft.process(&mut buf);
                for (r, &slot) in buf.iter().enumerate() {
                    self.amps[base | (r << off)] = slot * scale;
                }
            }
        }
    }

    /// Born-rule measurement of one register with collapse and renormalization.
    pub fn measure(&mut self, reg: RegId, rng: &mut impl Rng) -> MeasurementRecord {
        let width = self.layout.width(reg);
        let mut probs = vec![0.0f64; 1 << width];
        for (idx, amp) in self.amps.iter().enumerate() {
            if *amp != Complex64::ZERO {
                probs[self.layout.value(idx, reg) as usize] += amp.norm_sqr();
            }
        }
        let draw: f64 = rng.random();
        let mut acc = 0.0;
        let mut outcome = probs.len() - 1;
        for (v, &p) in probs.iter().enumerate() {
            acc += p;
            if draw < acc {
                outcome = v;
                break;
            }
        }
        let p = probs[outcome];
        let renorm = 1.0 / p.sqrt();
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            if (idx as u64 >> self.layout.offset(reg)) & ((1 << width) - 1) == outcome as u64 {
                *amp *= renorm;
            } else {
                *amp = Complex64::ZERO;
            }
        }
        MeasurementRecord {
            register: self.layout.name(reg).to_string(),
            value: outcome as u64,
            probability: p,
        }
    }

    /// Errors unless the register's amplitude support is exactly `|0...0>`.
    pub fn assert_register_zero(&self, reg: RegId) -> Result<()> {
        for (idx, amp) in self.amps.iter().enumerate() {
            if amp.norm_sqr() > 1e-24 && self.layout.value(idx, reg) != 0 {
                return Err(Error::VerificationFailed(format!(
                    "register {:?} not uncomputed at index {idx}",
                    self.layout.name(reg)
                )));
            }
        }
        Ok(())
    }

    pub fn check_norm(&self) -> Result<()> {
        let norm = self.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::VerificationFailed(format!("norm drifted to {norm}")));
        }
        Ok(())
    }

    /// Debug dump: one JSON line `{index, re, im}` per amplitude above the
    /// magnitude threshold.
    pub fn dump_json_lines(&self, threshold: f64) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for (idx, amp) in self.amps.iter().enumerate() {
            if amp.norm() > threshold {
                let _ = writeln!(
                    out,
                    "{{\"index\":{idx},\"re\":{},\"im\":{}}}",
                    amp.re, amp.im
                );
            }
        }
        out
    }
}

/// Everything one pre-sieve circuit round produced.
#[derive(Debug)]
pub struct RoundOutput {
    pub label: PhaseLabel,
    pub records: Vec<MeasurementRecord>,
    /// Fidelity of the surviving branch qubit against the analytic phase
    /// state, when the planted shift is known.
    pub branch_fidelity: Option<f64>,
    /// Value observed on the sorted register (distributed rounds only).
    pub sorted_value: Option<u64>,
}

fn branch_state(state: &StateVector, fixed: &[(RegId, u64)], branch: RegId) -> [Complex64; 2] {
    let with = |b: u64| {
        let mut assignments = fixed.to_vec();
        assignments.push((branch, b));
        state.amplitude(&assignments)
    };
    let a0 = with(0);
    let a1 = with(1);
    let norm = (a0.norm_sqr() + a1.norm_sqr()).sqrt();
    [a0 / norm, a1 / norm]
}

/// `|<target|state>|^2` for `target = (|0> + e^{i theta}|1>)/sqrt(2)`,
/// global phase ignored.
fn phase_fidelity(state: [Complex64; 2], theta: f64) -> f64 {
    let target1 = Complex64::from_polar(1.0, theta);
    let overlap = state[0] * INV_SQRT2 + state[1] * target1.conj() * INV_SQRT2;
    overlap.norm_sqr()
}

fn verify_branch(
    state: [Complex64; 2],
    l: u64,
    modulus: u64,
    shift: Option<u64>,
) -> Result<Option<f64>> {
    let Some(s) = shift else { return Ok(None) };
    let theta = 2.0 * std::f64::consts::PI * (l as f64) * (s as f64) / modulus as f64;
    let fid = phase_fidelity(state, theta);
    if fid < 1.0 - 1e-10 {
        return Err(Error::VerificationFailed(format!(
            "branch state fidelity {fid} against l={l}, s={s}, M={modulus}"
        )));
    }
    Ok(Some(fid))
}

/// One full round of the single-oracle circuit: Hadamards, oracle, QFT,
/// measurements. Returns the phase label `(l, M = 2^n)` with the surviving
/// branch-qubit state attached.
pub fn run_single_node_round(
    inst: &HiddenShiftInstance,
    qubit_cap: usize,
    rng: &mut impl Rng,
) -> Result<RoundOutput> {
    let n = inst.n();
    let layout =
        RegisterLayout::new(&[("branch", 1), ("input", n), ("output", inst.m())])?;
    let branch = layout.id("branch")?;
    let input = layout.id("input")?;
    let output = layout.id("output")?;
    let mut state = StateVector::zero_state(layout, qubit_cap)?;

    state.apply_hadamard_layer(branch);
    state.apply_hadamard_layer(input);
    state.apply_oracle_single(branch, input, output, inst)?;
    let rec_output = state.measure(output, rng);
    state.apply_qft(input);
    let rec_input = state.measure(input, rng);
    state.check_norm()?;

    let l = rec_input.value;
    let modulus = 1u64 << n;
    let resid = branch_state(&state, &[(input, l), (output, rec_output.value)], branch);
    let fidelity = verify_branch(resid, l, modulus, inst.hidden_a())?;
    Ok(RoundOutput {
        label: PhaseLabel::fresh(l, modulus).with_branch(resid),
        records: vec![rec_output, rec_input],
        branch_fidelity: fidelity,
        sorted_value: None,
    })
}

/// One full round of the `2^t`-node circuit: Hadamards, per-node oracle,
/// sorting unitary, sorted-register measurement, oracle uncomputation, QFT,
/// input measurement. Returns the label `(l, M = 2^{n-t})`.
pub fn run_distributed_round(
    dec: &Decomposition,
    qubit_cap: usize,
    rng: &mut impl Rng,
) -> Result<RoundOutput> {
    let m = dec.parent().m();
    let nodes = dec.node_count() as usize;
    let node_names: Vec<String> = (0..nodes).map(|w| format!("node{w}")).collect();
    let mut spec: Vec<(&str, u32)> = vec![("branch", 1), ("input", dec.suffix_width())];
    for name in &node_names {
        spec.push((name, m));
    }
    spec.push(("sorted", m * nodes as u32));
    let layout = RegisterLayout::new(&spec)?;
    let branch = layout.id("branch")?;
    let input = layout.id("input")?;
    let node_regs: Vec<RegId> =
        node_names.iter().map(|name| layout.id(name)).collect::<Result<_>>()?;
    let sorted = layout.id("sorted")?;
    let mut state = StateVector::zero_state(layout, qubit_cap)?;

    state.apply_hadamard_layer(branch);
    state.apply_hadamard_layer(input);
    state.apply_oracle_distributed(branch, input, &node_regs, dec)?;
    state.apply_usort(&node_regs, sorted)?;
    let rec_sorted = state.measure(sorted, rng);
    // second oracle application backs the node outputs out to |0...0>
    state.apply_oracle_distributed(branch, input, &node_regs, dec)?;
    for &reg in &node_regs {
        state.assert_register_zero(reg)?;
    }
    state.apply_qft(input);
    let rec_input = state.measure(input, rng);
    state.check_norm()?;

    let l = rec_input.value;
    let modulus = dec.suffix_size();
    let mut fixed: Vec<(RegId, u64)> = vec![(input, l), (sorted, rec_sorted.value)];
    for &reg in &node_regs {
        fixed.push((reg, 0));
    }
    let resid = branch_state(&state, &fixed, branch);
    let fidelity = verify_branch(resid, l, modulus, dec.hidden_a2())?;
    let sorted_value = rec_sorted.value;
    Ok(RoundOutput {
        label: PhaseLabel::fresh(l, modulus).with_branch(resid),
        records: vec![rec_sorted, rec_input],
        branch_fidelity: fidelity,
        sorted_value: Some(sorted_value),
    })
}
