mod common;

use common::{pairing_count, random_even_series, rng, words_of_length};
use freemoment::nc::{NCSeries, Word};
use freemoment::sd::{sd_residual, solve_sd, TraceTable};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rand::Rng;

fn config(cases: u32, seed: u64) -> Config {
    Config { cases, rng_seed: RngSeed::Fixed(seed), failure_persistence: None, ..Config::default() }
}

#[test]
fn zero_potential_matches_pairing_oracle() {
    let tau = solve_sd(&NCSeries::zero(1, 12), 12, 3.0, 1e-14).unwrap();
    let catalan = [1.0, 0.0, 1.0, 0.0, 2.0, 0.0, 5.0, 0.0, 14.0, 0.0, 42.0, 0.0, 132.0];
    for (k, &c) in catalan.iter().enumerate() {
        let w = Word::new(vec![0; k]);
        assert_eq!(pairing_count(w.letters()) as f64, c);
        assert!((tau.value(&w).unwrap() - c).abs() < 1e-10, "x^{k}");
    }
    for (n, cap) in [(2, 8), (3, 6)] {
        let tau = solve_sd(&NCSeries::zero(n, cap), cap, 3.0, 1e-14).unwrap();
        for len in 0..=cap {
            for w in words_of_length(n, len) {
                let want = pairing_count(w.letters()) as f64;
                assert!((tau.value(&w).unwrap() - want).abs() < 1e-10, "{w}: {want}");
            }
        }
    }
}

#[test]
fn pairing_oracle_spot_values() {
    assert_eq!(pairing_count(&[0, 1, 0, 1]), 0);
    assert_eq!(pairing_count(&[0, 0, 1, 1]), 1);
    assert_eq!(pairing_count(&[0, 1, 1, 0]), 1);
    assert_eq!(pairing_count(&[0, 0, 0, 0]), 2);
    assert_eq!(pairing_count(&[0, 1, 1, 0, 0, 0]), 2);
}

fn small_even_potential(seed: u64) -> NCSeries {
    let mut r = rng(seed);
    let n = r.gen_range(1..=2);
    let w = random_even_series(&mut r, n, 4, 4).cyclic_symmetrize();
    let w = (&w + &w.adjoint()).scale(0.5);
    let scale = r.gen_range(0.002..0.02) / w.norm_a(1.0).max(1e-300);
    w.scale(scale)
}

proptest! {
    #![proptest_config(config(40, 0x5d))]

    #[test]
    fn even_potential_gives_even_table(seed in any::<u64>()) {
        let w = small_even_potential(seed);
        let tau = solve_sd(&w, 16, 3.0, 1e-13).unwrap();
        prop_assert_eq!(tau.odd_max(), 0.0);
        // The closure drops words past the cap, so only degrees well below it
        // are expected to satisfy every rotation of the equations.
        let res = sd_residual(&tau, &w, 8);
        prop_assert!(res < 1e-8, "{res:e} {}", w.to_json());
    }

    #[test]
    fn tables_are_cyclic_and_reversal_invariant(seed in any::<u64>()) {
        let w = small_even_potential(seed);
        let n = w.n_vars();
        let tau = solve_sd(&w, 10, 3.0, 1e-13).unwrap();
        let mut r = rng(seed ^ 7);
        for _ in 0..50 {
            let len = r.gen_range(0..=10);
            let word = common::random_word(&mut r, n, len);
            let v = tau.value(&word).unwrap();
            prop_assert_eq!(tau.value(&word.reversed()).unwrap(), v);
            for k in 0..len {
                prop_assert_eq!(tau.value(&word.rotated(k)).unwrap(), v);
            }
        }
    }

    #[test]
    fn residual_is_lipschitz_in_the_potential(seed in any::<u64>()) {
        let w = small_even_potential(seed);
        let tau = solve_sd(&w, 10, 3.0, 1e-13).unwrap();
        let base = sd_residual(&tau, &w, 10);
        let (word, _) = w.terms().iter().next().map(|(k, v)| (k.clone(), *v)).unwrap();
        let bump = NCSeries::monomial(w.n_vars(), w.max_degree(), word.clone(), 1.0).unwrap();
        // |τ(P 𝒟_i x_I)| ≤ |I| T^{|P| + |I| - 1} for the words P the residual ranges over.
        let bound = word.len() as f64 * 3f64.powi(9);
        for delta in [1e-6, 1e-4] {
            let mut moved = w.clone();
            moved.axpy(delta, &bump);
            let c = (sd_residual(&tau, &moved, 10) - base).abs() / delta;
            prop_assert!(c <= bound, "C = {c}");
        }
    }
}

#[test]
fn residual_rejects_perturbed_semicircle() {
    let w = NCSeries::zero(2, 4);
    let good = TraceTable::semicircular(2, 8, 3.0);
    assert!(sd_residual(&good, &w, 8) < 1e-14);
    let entries: Vec<(Word, f64)> = good
        .entries()
        .into_iter()
        .map(|(word, v)| if word.len() == 4 { (word, v * 1.01) } else { (word, v) })
        .collect();
    let bad = TraceTable::from_values(2, 8, 3.0, entries).unwrap();
    assert!(sd_residual(&bad, &w, 8) > 1e-3);
}
