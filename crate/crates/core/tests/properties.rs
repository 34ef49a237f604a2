//! Cross-module properties that don't belong to any single unit.

use proptest::prelude::*;

use dsieve_core::instances::{
    generate_instance, halve_remap, load_table1, sorted_strings, Decomposition,
    HiddenShiftInstance,
};
use dsieve_core::rng;
use dsieve_core::sieve::{recover_shift, run_sieve, sample_label, Mode};
use dsieve_core::statevector::run_distributed_round;
use dsieve_core::verify::brute_force_shift;
use dsieve_core::{Backend, DEFAULT_QUBIT_CAP};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn json_round_trip(seed in any::<u64>(), n in 1u32..=8, extra in 0u32..=4, blind in any::<bool>()) {
        let mut r = rng::master(seed);
        let a = r.random_range(0..(1u64 << n));
        let inst = generate_instance(n, n + extra, a, &mut r).unwrap();
        let inst = if blind { inst.blinded() } else { inst };
        let back = HiddenShiftInstance::from_json(&inst.to_json()).unwrap();
        prop_assert_eq!(back.n(), inst.n());
        prop_assert_eq!(back.m(), inst.m());
        prop_assert_eq!(back.hidden_a(), inst.hidden_a());
        prop_assert_eq!(back.f_table(), inst.f_table());
        prop_assert_eq!(back.g_table(), inst.g_table());
    }

    #[test]
    fn k_fold_halving_strips_low_bits(seed in any::<u64>(), n in 2u32..=9) {
        let mut r = rng::master(seed);
        let a = r.random_range(0..(1u64 << n));
        let mut cur = generate_instance(n, n + 2, a, &mut r).unwrap();
        for k in 0..n - 1 {
            prop_assert_eq!(cur.hidden_a(), Some(a >> k));
            prop_assert_eq!(cur.hidden_a().unwrap() & 1, (a >> k) & 1);
            cur = halve_remap(&cur, (a >> k) & 1).unwrap();
        }
        prop_assert_eq!(cur.hidden_a(), Some(a >> (n - 1)));
    }

    #[test]
    fn planted_shift_relation_is_exhaustive(seed in any::<u64>(), n in 1u32..=8) {
        let mut r = rng::master(seed);
        let a = r.random_range(0..(1u64 << n));
        let inst = generate_instance(n, n + 1, a, &mut r).unwrap();
        let mask = inst.domain_size() - 1;
        for x in 0..inst.domain_size() {
            prop_assert_eq!(inst.f(x), inst.g((x + a) & mask));
        }
    }
}

#[test]
fn modes_agree_on_the_same_instance() {
    for seed in 0..8u64 {
        let mut r = rng::stream(0xA6, &[seed]);
        let a = r.random_range(0..256);
        let inst = generate_instance(8, 10, a, &mut r).unwrap();
        let single =
            recover_shift(&inst, Mode::SingleNode, Backend::Analytic, None, seed).unwrap();
        for t in [1u32, 2, 3] {
            let dist =
                recover_shift(&inst, Mode::Distributed { t }, Backend::Analytic, None, seed)
                    .unwrap();
            assert_eq!(dist.a, single.a, "t={t} seed={seed}");
        }
        assert_eq!(brute_force_shift(&inst), Some(single.a));
    }
}

#[test]
fn measured_sorted_value_is_in_the_string_image() {
    let inst = load_table1();
    let dec = Decomposition::new(&inst, 1).unwrap();
    let table = sorted_strings(&dec);
    let images: Vec<u64> =
        (0..dec.suffix_size()).map(|u| table.f_packed(u) as u64).collect();
    for shot in 0..64u64 {
        let mut r = rng::stream(0xA7, &[shot]);
        let out = run_distributed_round(&dec, DEFAULT_QUBIT_CAP, &mut r).unwrap();
        let observed = out.sorted_value.unwrap();
        assert!(images.contains(&observed), "shot {shot}: {observed:#010b}");
        // the collapsed u0 pairs with v0 = u0 + a2 on the g side
        let u0 = images.iter().position(|&s| s == observed).unwrap() as u64;
        let v0 = (u0 + dec.hidden_a2().unwrap()) & (dec.suffix_size() - 1);
        assert_eq!(table.g_packed(v0) as u64, observed);
    }
}

/// Median fresh labels to sieve success grows like `c * 2^(alpha sqrt k)`;
/// checks monotonicity and a positive fitted slope, not the constant.
#[test]
fn sieve_cost_scaling_in_k() {
    let ks = [4u32, 8, 12, 16, 20];
    let mut medians = Vec::new();
    for &k in &ks {
        let modulus = 1u64 << k;
        let mut costs: Vec<u64> = (0..11u64)
            .map(|trial| {
                let mut r = rng::stream(0xA8, &[k as u64, trial]);
                let (_, stats) = run_sieve(
                    |rng: &mut ChaCha8Rng| Ok(sample_label(modulus, rng)),
                    modulus,
                    u64::MAX,
                    true,
                    &mut r,
                )
                .unwrap();
                stats.fresh_drawn
            })
            .collect();
        costs.sort_unstable();
        medians.push(costs[costs.len() / 2]);
    }
    assert!(
        medians.windows(2).all(|w| w[0] < w[1]),
        "medians not increasing: {medians:?}"
    );
    // least-squares slope of log2(median) against sqrt(k)
    let xs: Vec<f64> = ks.iter().map(|&k| (k as f64).sqrt()).collect();
    let ys: Vec<f64> = medians.iter().map(|&m| (m as f64).log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let slope: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!(slope > 0.0, "fitted alpha {slope} not positive; medians {medians:?}");
}
