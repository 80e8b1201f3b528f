mod common;

use common::{log_energy_lemmas, random_even_measure, random_measure, rng};
use freemoment::measure::{
    displacement_interpolate, hilbert_transform, log_energy, max_correlation, pushforward_monotone, wasserstein2_sq,
    GridMeasure, MonotoneMap, Polynomial,
};
use rand::Rng;

const NODES: usize = 300;

#[test]
fn first_moment_bound_and_strict_displacement_convexity() {
    let gap = log_energy_lemmas(200);
    assert!(gap > 1e-8, "{gap:e}");
}

#[test]
fn translates_are_flat_along_the_geodesic() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let m0 = random_measure(&mut r, NODES);
        let m1 = m0.translate(r.gen_range(-2.0..2.0));
        let l0 = log_energy(&m0);
        assert!((log_energy(&m1) - l0).abs() < 1e-10);
        let mid = displacement_interpolate(&m0, &m1, 0.5).unwrap();
        assert!((log_energy(&mid) - l0).abs() < 1e-8, "seed {seed}");
    }
}

#[test]
fn max_correlation_identity() {
    for seed in 0..50 {
        let mut r = rng(1000 + seed);
        let m1 = random_measure(&mut r, NODES);
        let m2 = random_measure(&mut r, NODES);
        let t = max_correlation(&m1, &m2);
        let want = 0.5 * m1.moment(2) + 0.5 * m2.moment(2) - 0.5 * wasserstein2_sq(&m1, &m2);
        assert!((t - want).abs() < 1e-8, "seed {seed}: {t} vs {want}");
    }
    let sc = GridMeasure::semicircle(2.0).unwrap();
    assert!((max_correlation(&sc, &sc) - 1.0).abs() < 1e-6);
}

#[test]
fn monotone_pushforward_keeps_mass_and_order() {
    let maps = [Polynomial::new(vec![0.0, 0.0, 0.0, 1.0]), Polynomial::new(vec![0.5, 1.0, 0.0, 0.3])];
    for seed in 0..20 {
        let mut r = rng(2000 + seed);
        let m = random_measure(&mut r, NODES);
        for f in &maps {
            let pushed = pushforward_monotone(&m, f).unwrap();
            assert!((pushed.mass() - 1.0).abs() < 1e-10);
            assert!(pushed.quantiles().windows(2).all(|w| w[0] <= w[1]));
            // Every source cell lands with its mass intact, up to tail cells
            // where the restoring midpoint would need a negative density.
            for &x in m.nodes() {
                let (a, b) = (m.cdf(x), pushed.cdf(f.value(x)));
                assert!((a - b).abs() < 1e-12, "seed {seed}, x = {x}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn hilbert_transform_is_odd_for_even_measures() {
    for seed in 0..20 {
        let mut r = rng(3000 + seed);
        let m = random_even_measure(&mut r, NODES);
        let (_, b) = m.support();
        for _ in 0..20 {
            let x = r.gen_range(-1.2 * b..1.2 * b);
            let sum = hilbert_transform(&m, x).unwrap() + hilbert_transform(&m, -x).unwrap();
            assert!(sum.abs() < 1e-12, "seed {seed}, x = {x}: {sum:e}");
        }
    }
}
