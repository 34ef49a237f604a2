//! Statistical and exhaustive checks: brute-force ground truth, chi-square
//! goodness of fit, and the circuit-vs-analytic backend comparison.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::instances::{Decomposition, HiddenShiftInstance};
use crate::rng;
use crate::sieve::sample_label;
use crate::statevector::{run_distributed_round, run_single_node_round};

/// Outcome of one statistical test. `statistic` is the chi-square value;
/// `pass` means the p-value cleared `threshold`.
#[derive(Debug, Clone, Serialize)]
pub struct StatReport {
    pub name: String,
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub samples: u64,
}

fn p_value(chi2: f64, dof: u64) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(dof as f64).unwrap().cdf(chi2)
}

/// Chi-square test of `samples` against the uniform distribution on
/// `0..modulus`. Refuses underpowered inputs (< 16 samples per outcome).
pub fn chi_square_uniform(name: &str, samples: &[u64], modulus: u64) -> Result<StatReport> {
    if !modulus.is_power_of_two() || modulus < 2 {
        return Err(Error::InvalidParameters(format!("bad modulus {modulus}")));
    }
    if (samples.len() as u64) < 16 * modulus {
        return Err(Error::InvalidParameters(format!(
            "{} samples are too few for {} outcomes (need at least {})",
            samples.len(),
            modulus,
            16 * modulus
        )));
    }
    let mut counts = vec![0u64; modulus as usize];
    for &s in samples {
        if s >= modulus {
            return Err(Error::InvalidParameters(format!("sample {s} out of range")));
        }
        counts[s as usize] += 1;
    }
    let expected = samples.len() as f64 / modulus as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dof = modulus - 1;
    let p = p_value(chi2, dof);
    let threshold = 0.001;
    Ok(StatReport {
        name: name.into(),
        statistic: chi2,
        dof,
        p_value: p,
        threshold,
        pass: p > threshold,
        samples: samples.len() as u64,
    })
}

/// Two-sample chi-square test of homogeneity over `0..modulus`.
pub fn chi_square_two_sample(
    name: &str,
    a: &[u64],
    b: &[u64],
    modulus: u64,
) -> Result<StatReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameters("empty sample".into()));
    }
    let mut ca = vec![0f64; modulus as usize];
    let mut cb = vec![0f64; modulus as usize];
    for &s in a {
        ca[s as usize] += 1.0;
    }
    for &s in b {
        cb[s as usize] += 1.0;
    }
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let total = na + nb;
    let mut chi2 = 0.0;
    let mut cells = 0u64;
    for i in 0..modulus as usize {
        let pooled = ca[i] + cb[i];
        if pooled == 0.0 {
            continue;
        }
        cells += 1;
        let ea = na * pooled / total;
        let eb = nb * pooled / total;
        chi2 += (ca[i] - ea).powi(2) / ea + (cb[i] - eb).powi(2) / eb;
    }
    let dof = cells.saturating_sub(1);
    let p = p_value(chi2, dof);
    let threshold = 0.001;
    Ok(StatReport {
        name: name.into(),
        statistic: chi2,
        dof,
        p_value: p,
        threshold,
        pass: p > threshold,
        samples: (a.len() + b.len()) as u64,
    })
}

/// Exhaustively checks every candidate shift against both truth tables.
/// Returns the shift only if exactly one candidate works.
pub fn brute_force_shift(inst: &HiddenShiftInstance) -> Option<u64> {
    let size = inst.domain_size();
    let mut found = None;
    for cand in 0..size {
        if (0..size).all(|x| inst.f(x) == inst.g((x + cand) & (size - 1))) {
            match found {
                None => found = Some(cand),
                Some(_) => return None,
            }
        }
    }
    found
}

/// The circuit-vs-analytic comparison on one instance.
#[derive(Debug, Clone, Serialize)]
pub struct BackendComparison {
    pub rounds: u64,
    pub modulus: u64,
    /// Two-sample test: circuit labels against analytic labels.
    pub label_distribution: StatReport,
    /// Worst branch-qubit fidelity seen; `None` for blinded instances.
    pub min_branch_fidelity: Option<f64>,
    pub fidelity_threshold: f64,
    pub pass: bool,
}

/// Runs `rounds` circuit rounds and `rounds` analytic draws and tests that
/// the label distributions agree. Planted instances additionally get every
/// circuit branch qubit checked against its analytic phase state.
pub fn compare_backends(
    inst: &HiddenShiftInstance,
    t: Option<u32>,
    rounds: u64,
    qubit_cap: usize,
    seed: u64,
) -> Result<BackendComparison> {
    let dec = t.map(|t| Decomposition::new(inst, t)).transpose()?;
    let modulus = match &dec {
        Some(dec) => dec.suffix_size(),
        None => inst.domain_size(),
    };
    let mut circuit_labels = Vec::with_capacity(rounds as usize);
    let mut min_fid: Option<f64> = None;
    for shot in 0..rounds {
        let mut r = rng::stream(seed, &[10, shot]);
        let out = match &dec {
            Some(dec) => run_distributed_round(dec, qubit_cap, &mut r)?,
            None => run_single_node_round(inst, qubit_cap, &mut r)?,
        };
        circuit_labels.push(out.label.value());
        if let Some(fid) = out.branch_fidelity {
            min_fid = Some(min_fid.map_or(fid, |m: f64| m.min(fid)));
        }
    }
    let mut ar = rng::stream(seed, &[11]);
    let analytic_labels: Vec<u64> =
        (0..rounds).map(|_| sample_label(modulus, &mut ar).value()).collect();
    let label_distribution =
        chi_square_two_sample("label-distribution", &circuit_labels, &analytic_labels, modulus)?;
    let fidelity_threshold = 1.0 - 1e-10;
    let fid_ok = match (inst.hidden_a(), min_fid) {
        (Some(_), Some(f)) => f > fidelity_threshold,
        (Some(_), None) => rounds == 0,
        (None, _) => true,
    };
    Ok(BackendComparison {
        rounds,
        modulus,
        pass: label_distribution.pass && fid_ok,
        label_distribution,
        min_branch_fidelity: min_fid,
        fidelity_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate_instance, load_table1};
    use crate::DEFAULT_QUBIT_CAP;
    use rand::Rng;

    #[test]
    fn brute_force_table1() {
        assert_eq!(brute_force_shift(&load_table1()), Some(7));
        assert_eq!(brute_force_shift(&load_table1().blinded()), Some(7));
    }

    #[test]
    fn brute_force_random_instances() {
        for seed in 0..10u64 {
            let mut r = rng::stream(3, &[seed]);
            let a = r.random_range(0..64);
            let inst = generate_instance(6, 8, a, &mut r).unwrap();
            assert_eq!(brute_force_shift(&inst), Some(a));
        }
    }

    #[test]
    fn brute_force_rejects_shiftless_tables() {
        // m > n with distinct images makes a matching shift vanishingly
        // unlikely after swapping two g entries
        let mut r = rng::master(4);
        let inst = generate_instance(5, 9, 11, &mut r).unwrap();
        let mut g = inst.g_table().to_vec();
        g.swap(0, 1);
        let broken =
            HiddenShiftInstance::from_tables(5, 9, inst.f_table().to_vec(), g, None).unwrap();
        assert_eq!(brute_force_shift(&broken), None);
    }

    #[test]
    fn uniform_samples_pass() {
        let mut r = rng::master(5);
        let samples: Vec<u64> = (0..4096).map(|_| r.random_range(0..16)).collect();
        let rep = chi_square_uniform("u", &samples, 16).unwrap();
        assert!(rep.pass, "p = {}", rep.p_value);
        assert_eq!(rep.dof, 15);
    }

    #[test]
    fn constant_samples_fail() {
        let samples = vec![3u64; 1024];
        let rep = chi_square_uniform("c", &samples, 16).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn underpowered_input_is_refused() {
        let samples = vec![0u64; 64];
        assert!(chi_square_uniform("few", &samples, 16).is_err());
    }

    #[test]
    fn two_sample_agrees_on_same_distribution() {
        let mut r = rng::master(6);
        let a: Vec<u64> = (0..2048).map(|_| r.random_range(0..8)).collect();
        let b: Vec<u64> = (0..2048).map(|_| r.random_range(0..8)).collect();
        assert!(chi_square_two_sample("same", &a, &b, 8).unwrap().pass);
    }

    #[test]
    fn two_sample_separates_disjoint_distributions() {
        let a = vec![1u64; 512];
        let b = vec![6u64; 512];
        let rep = chi_square_two_sample("disjoint", &a, &b, 8).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn backends_agree_single_node() {
        let inst = load_table1();
        let cmp = compare_backends(&inst, None, 512, DEFAULT_QUBIT_CAP, 7).unwrap();
        assert!(cmp.pass, "{cmp:?}");
        assert!(cmp.min_branch_fidelity.unwrap() > cmp.fidelity_threshold);
        assert_eq!(cmp.modulus, 8);
    }

    #[test]
    fn backends_agree_distributed() {
        let inst = load_table1();
        let cmp = compare_backends(&inst, Some(1), 128, DEFAULT_QUBIT_CAP, 8).unwrap();
        assert!(cmp.pass, "{cmp:?}");
        assert_eq!(cmp.modulus, 4);
    }
}
