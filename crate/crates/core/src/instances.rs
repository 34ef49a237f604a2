//! Hidden-shift problem instances and their decompositions.
//!
//! An instance is a pair of injective truth tables `f, g` over `Z_{2^n}` with
//! `m`-bit outputs satisfying `f(x) = g(x + a mod 2^n)` for a hidden shift
//! `a`. A [`Decomposition`] splits the domain on a `t`-bit prefix into `2^t`
//! subfunctions `f_w(u) = f(w||u)`, one per node; the [`SortedStringTable`]
//! holds, for each suffix `u`, the ascending concatenation of all node
//! outputs, which pairs up suffixes shifted by the low `n - t` bits of `a`.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A hidden-shift instance over `Z_{2^n}` with `m`-bit outputs.
///
/// Strings are big-endian: the integer value of `w||u` for a `t`-bit prefix
/// `w` is `w * 2^(n-t) + u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HiddenShiftInstance {
    n: u32,
    m: u32,
    f_table: Vec<u64>,
    g_table: Vec<u64>,
    hidden_a: Option<u64>,
}

/// Serialized form: tables as hex strings for hand-editability.
#[derive(Serialize, Deserialize)]
struct InstanceJson {
    n: u32,
    m: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<u64>,
    f: Vec<String>,
    g: Vec<String>,
}

impl HiddenShiftInstance {
    /// Builds an instance from explicit tables, validating shape, injectivity
    /// and (when `hidden_a` is given) the shift relation exhaustively.
    pub fn from_tables(
        n: u32,
        m: u32,
        f_table: Vec<u64>,
        g_table: Vec<u64>,
        hidden_a: Option<u64>,
    ) -> Result<Self> {
        if n == 0 || n > 30 {
            return Err(Error::InvalidParameters(format!("n={n} out of range 1..=30")));
        }
        if m < n || m > 63 {
            return Err(Error::InvalidParameters(format!(
                "m={m} must satisfy n <= m <= 63 (injectivity needs m >= n)"
            )));
        }
        let size = 1usize << n;
        if f_table.len() != size || g_table.len() != size {
            return Err(Error::InvalidParameters(format!(
                "tables must have 2^n = {size} entries"
            )));
        }
        let limit = 1u64 << m;
        for table in [&f_table, &g_table] {
            if table.iter().any(|&v| v >= limit) {
                return Err(Error::InvalidParameters(format!("table value exceeds {m} bits")));
            }
            let mut set = std::collections::HashSet::with_capacity(size);
            if !table.iter().all(|&v| set.insert(v)) {
                return Err(Error::InvalidParameters("table is not injective".into()));
            }
        }
        if let Some(a) = hidden_a {
            if a >= (1 << n) {
                return Err(Error::InvalidParameters(format!("a={a} exceeds {n} bits")));
            }
            for x in 0..size as u64 {
                let shifted = (x + a) & ((1 << n) - 1);
                if f_table[x as usize] != g_table[shifted as usize] {
                    return Err(Error::InvalidParameters(format!(
                        "f({x}) != g({x}+{a} mod 2^{n}): shift relation violated"
                    )));
                }
            }
        }
        Ok(Self { n, m, f_table, g_table, hidden_a })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// Domain size `2^n`.
    pub fn domain_size(&self) -> u64 {
        1 << self.n
    }

    pub fn hidden_a(&self) -> Option<u64> {
        self.hidden_a
    }

    pub fn f(&self, x: u64) -> u64 {
        self.f_table[x as usize]
    }

    pub fn g(&self, x: u64) -> u64 {
        self.g_table[x as usize]
    }

    pub fn f_table(&self) -> &[u64] {
        &self.f_table
    }

    pub fn g_table(&self) -> &[u64] {
        &self.g_table
    }

    /// Forgets the planted shift (for blind-mode testing).
    pub fn blinded(&self) -> Self {
        Self { hidden_a: None, ..self.clone() }
    }

    pub fn to_json(&self) -> String {
        let doc = InstanceJson {
            n: self.n,
            m: self.m,
            a: self.hidden_a,
            f: self.f_table.iter().map(|v| format!("{v:x}")).collect(),
            g: self.g_table.iter().map(|v| format!("{v:x}")).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("instance serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceJson = serde_json::from_str(text)?;
        let parse = |xs: &[String]| -> Result<Vec<u64>> {
            xs.iter()
                .map(|s| {
                    u64::from_str_radix(s, 16)
                        .map_err(|_| Error::InvalidParameters(format!("bad hex value {s:?}")))
                })
                .collect()
        };
        Self::from_tables(doc.n, doc.m, parse(&doc.f)?, parse(&doc.g)?, doc.a)
    }

    /// Aligned-column truth table (binary strings), one row per domain point.
    pub fn format_truth_table(&self) -> String {
        let n = self.n as usize;
        let m = self.m as usize;
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:<m$}  {:<m$}", "x", "g(x)", "f(x)", width = n.max(1));
        for x in 0..self.domain_size() {
            let _ = writeln!(
                out,
                "{:0width$b}  {:0m$b}  {:0m$b}",
                x,
                self.g_table[x as usize],
                self.f_table[x as usize],
                width = n
            );
        }
        out
    }
}

/// Generates a planted instance: `g` is a seeded uniformly random injective
/// map into `m`-bit strings and `f(x) = g(x + a mod 2^n)`.
pub fn generate_instance(n: u32, m: u32, a: u64, rng: &mut impl Rng) -> Result<HiddenShiftInstance> {
    if n == 0 || n > 30 || m < n || m > 63 {
        return Err(Error::InvalidParameters(format!(
            "need 1 <= n <= 30 and n <= m <= 63, got n={n}, m={m}"
        )));
    }
    if a >= (1 << n) {
        return Err(Error::InvalidParameters(format!("a={a} exceeds {n} bits")));
    }
    let size = 1u64 << n;
    let g_table = sample_distinct(size, m, rng);
    let mask = size - 1;
    let f_table: Vec<u64> = (0..size).map(|x| g_table[((x + a) & mask) as usize]).collect();
    HiddenShiftInstance::from_tables(n, m, f_table, g_table, Some(a))
}

/// `count` distinct values from `[0, 2^bits)`, uniform without replacement.
/// Sparse Fisher-Yates: only touched slots of the virtual array are stored.
fn sample_distinct(count: u64, bits: u32, rng: &mut impl Rng) -> Vec<u64> {
    let space = 1u64 << bits;
    let mut swapped: HashMap<u64, u64> = HashMap::new();
    let mut out = Vec::with_capacity(count as usize);
    for i in 0..count {
        let j = rng.random_range(i..space);
        let vj = swapped.get(&j).copied().unwrap_or(j);
        let vi = swapped.get(&i).copied().unwrap_or(i);
        out.push(vj);
        swapped.insert(j, vi);
    }
    out
}

/// The truth tables of the n=3, m=4 reference experiment, hidden shift 7.
pub fn load_table1() -> HiddenShiftInstance {
    let g = vec![0b1001, 0b1100, 0b1010, 0b0101, 0b0111, 0b0011, 0b0001, 0b1000];
    let f = vec![0b1000, 0b1001, 0b1100, 0b1010, 0b0101, 0b0111, 0b0011, 0b0001];
    // from_tables re-verifies f(x) = g(x+7 mod 8) against the embedded data
    HiddenShiftInstance::from_tables(3, 4, f, g, Some(7))
        .expect("embedded reference tables are consistent")
}

/// Per-node views of an instance split on a `t`-bit prefix.
#[derive(Debug, Clone, Copy)]
pub struct Decomposition<'a> {
    inst: &'a HiddenShiftInstance,
    t: u32,
}

impl<'a> Decomposition<'a> {
    pub fn new(inst: &'a HiddenShiftInstance, t: u32) -> Result<Self> {
        if t == 0 || t >= inst.n {
            return Err(Error::InvalidParameters(format!(
                "prefix width t={t} must satisfy 1 <= t < n={}",
                inst.n
            )));
        }
        Ok(Self { inst, t })
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn parent(&self) -> &'a HiddenShiftInstance {
        self.inst
    }

    /// Number of nodes, `2^t`.
    pub fn node_count(&self) -> u64 {
        1 << self.t
    }

    /// Suffix width `n - t` processed by each node.
    pub fn suffix_width(&self) -> u32 {
        self.inst.n - self.t
    }

    pub fn suffix_size(&self) -> u64 {
        1 << self.suffix_width()
    }

    /// `f_w(u) = f(w||u)`.
    pub fn f_w(&self, w: u64, u: u64) -> u64 {
        self.inst.f((w << self.suffix_width()) | u)
    }

    /// `g_w(u) = g(w||u)`.
    pub fn g_w(&self, w: u64, u: u64) -> u64 {
        self.inst.g((w << self.suffix_width()) | u)
    }

    /// Low `n - t` bits of the planted shift, when known.
    pub fn hidden_a2(&self) -> Option<u64> {
        self.inst.hidden_a.map(|a| a & (self.suffix_size() - 1))
    }

    /// Top `t` bits of the planted shift, when known.
    pub fn hidden_a1(&self) -> Option<u64> {
        self.inst.hidden_a.map(|a| a >> self.suffix_width())
    }
}

/// The maps `u -> F(u)` and `v -> G(v)`: ascending sort-and-concatenate of
/// all node outputs for a given suffix.
#[derive(Debug, Clone)]
pub struct SortedStringTable {
    t: u32,
    m: u32,
    f_sorted: Vec<Vec<u64>>,
    g_sorted: Vec<Vec<u64>>,
}

impl SortedStringTable {
    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// Sorted node outputs for suffix `u`, smallest first.
    pub fn f_of(&self, u: u64) -> &[u64] {
        &self.f_sorted[u as usize]
    }

    pub fn g_of(&self, v: u64) -> &[u64] {
        &self.g_sorted[v as usize]
    }

    /// The `2^t * m`-bit string value of `F(u)`, smallest output in the most
    /// significant slot (big-endian concatenation).
    pub fn f_packed(&self, u: u64) -> u128 {
        pack(&self.f_sorted[u as usize], self.m)
    }

    pub fn g_packed(&self, v: u64) -> u128 {
        pack(&self.g_sorted[v as usize], self.m)
    }
}

fn pack(sorted: &[u64], m: u32) -> u128 {
    sorted.iter().fold(0u128, |acc, &v| (acc << m) | v as u128)
}

/// Builds the sorted string tables of a decomposition.
pub fn sorted_strings(dec: &Decomposition) -> SortedStringTable {
    let nodes = dec.node_count();
    let build = |get: &dyn Fn(u64, u64) -> u64| -> Vec<Vec<u64>> {
        (0..dec.suffix_size())
            .map(|u| {
                let mut vals: Vec<u64> = (0..nodes).map(|w| get(w, u)).collect();
                vals.sort_unstable();
                vals
            })
            .collect()
    };
    SortedStringTable {
        t: dec.t(),
        m: dec.parent().m(),
        f_sorted: build(&|w, u| dec.f_w(w, u)),
        g_sorted: build(&|w, u| dec.g_w(w, u)),
    }
}

/// Outcome of the exhaustive pairing check over all `(u, v)`.
#[derive(Debug, Clone, Serialize)]
pub struct Theorem1Report {
    pub pass: bool,
    pub pairs_checked: u64,
    /// First `(u, v)` where `F(u) = G(v) <=> v = u + a2` failed, if any.
    pub counterexample: Option<(u64, u64)>,
    pub a2: u64,
}

/// Exhaustively checks `F(u) = G(v) <=> v = (u + a2) mod 2^(n-t)` for the
/// planted `a2`. Addition wraps: the carry out of the suffix is absorbed by
/// the prefix.
pub fn check_theorem1(dec: &Decomposition) -> Result<Theorem1Report> {
    let a2 = dec.hidden_a2().ok_or(Error::MissingGroundTruth)?;
    Ok(check_theorem1_with(dec, a2))
}

/// Same exhaustive check against an externally supplied `a2`; lets blinded
/// or deliberately corrupted tables be tested against a known shift.
pub fn check_theorem1_with(dec: &Decomposition, a2: u64) -> Theorem1Report {
    let table = sorted_strings(dec);
    let size = dec.suffix_size();
    let mask = size - 1;
    let mut pairs = 0u64;
    for u in 0..size {
        for v in 0..size {
            pairs += 1;
            let equal = table.f_of(u) == table.g_of(v);
            let shifted = v == ((u + a2) & mask);
            if equal != shifted {
                return Theorem1Report {
                    pass: false,
                    pairs_checked: pairs,
                    counterexample: Some((u, v)),
                    a2,
                };
            }
        }
    }
    Theorem1Report { pass: true, pairs_checked: pairs, counterexample: None, a2 }
}

/// One level of the bit-recovery recursion: `f'(x) = f(2x)`,
/// `g'(x) = g(2x + a0)` on a domain of width `n - 1`. When the parent is
/// planted with shift `a`, the child is planted with `(a - a0) / 2`.
pub fn halve_remap(inst: &HiddenShiftInstance, a0: u64) -> Result<HiddenShiftInstance> {
    if inst.n < 2 {
        return Err(Error::InvalidParameters("halve_remap needs n >= 2".into()));
    }
    if a0 > 1 {
        return Err(Error::InvalidParameters(format!("parity bit a0={a0} must be 0 or 1")));
    }
    if let Some(a) = inst.hidden_a {
        if a & 1 != a0 {
            return Err(Error::InvalidParameters(format!(
                "a0={a0} does not match planted parity {}",
                a & 1
            )));
        }
    }
    let mask = inst.domain_size() - 1;
    let half = 1u64 << (inst.n - 1);
    let f: Vec<u64> = (0..half).map(|x| inst.f((2 * x) & mask)).collect();
    let g: Vec<u64> = (0..half).map(|x| inst.g((2 * x + a0) & mask)).collect();
    let child_a = inst.hidden_a.map(|a| (a - a0) / 2);
    HiddenShiftInstance::from_tables(inst.n - 1, inst.m, f, g, child_a)
}

/// The `t`-bit prefix-stage instance built once the suffix shift `a2` is in
/// hand: `F~(w) = f(w||0)`, `G~(w) = g(w||a2)`. Since `0 + a2` never carries,
/// its hidden shift is exactly the top `t` bits of `a`.
pub fn prefix_stage_instance(dec: &Decomposition, a2: u64) -> Result<HiddenShiftInstance> {
    if a2 >= dec.suffix_size() {
        return Err(Error::InvalidParameters(format!(
            "a2={a2} exceeds suffix width {}",
            dec.suffix_width()
        )));
    }
    let nodes = dec.node_count();
    let f: Vec<u64> = (0..nodes).map(|w| dec.f_w(w, 0)).collect();
    let g: Vec<u64> = (0..nodes).map(|w| dec.g_w(w, a2)).collect();
    let a1 = match dec.parent().hidden_a() {
        Some(_) => dec.hidden_a1(),
        None => None,
    };
    HiddenShiftInstance::from_tables(dec.t(), dec.parent().m(), f, g, a1)
}
