//! Generators and brute-force oracles shared by the integration suites.
#![allow(dead_code)]

use std::f64::consts::PI;

use freemoment::gibbs::{free_gibbs_measure, EvenPotential};
use freemoment::measure::{
    displacement_interpolate, log_energy, pushforward_monotone, quantile_levels, GridMeasure, Polynomial,
};
use freemoment::moment::{minimize_f, MomentProblem, ParticleObjective};
use freemoment::nc::{NCSeries, Word};
use freemoment::sd::TraceTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smooth non-atomic measure: a square-root base on a random interval plus
/// up to three power bumps, sampled on `n` Chebyshev nodes.
pub fn random_measure(rng: &mut impl Rng, n: usize) -> GridMeasure {
    let k = rng.gen_range(1..=3);
    let c0: f64 = rng.gen_range(-1.0..1.0);
    let h0: f64 = rng.gen_range(0.5..3.0);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..k)
        .map(|_| {
            (
                rng.gen_range(c0 - h0..c0 + h0),
                rng.gen_range(0.1..1.0) * h0,
                rng.gen_range(0.5..2.5),
                rng.gen_range(0.2..3.0),
            )
        })
        .collect();
    let (a, b) = bumps.iter().fold((c0 - h0, c0 + h0), |(a, b), &(c, h, _, _)| (a.min(c - h), b.max(c + h)));
    let f = move |x: f64| {
        let base = (1.0 - ((x - 0.5 * (a + b)) / (0.5 * (b - a))).powi(2)).max(0.0).sqrt();
        base + bumps.iter().map(|&(c, h, p, w)| w * (1.0 - ((x - c) / h).powi(2)).max(0.0).powf(p)).sum::<f64>()
    };
    GridMeasure::from_fn(a, b, n, f).unwrap()
}

/// Even version of [`random_measure`], symmetric about zero.
pub fn random_even_measure(rng: &mut impl Rng, n: usize) -> GridMeasure {
    let h: f64 = rng.gen_range(0.5..3.0);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..rng.gen_range(1..=2))
        .map(|_| (rng.gen_range(0.0..h), rng.gen_range(0.1..0.8) * h, rng.gen_range(0.5..2.5), rng.gen_range(0.2..3.0)))
        .collect();
    let f = move |x: f64| {
        let bump =
            |y: f64| bumps.iter().map(|&(c, w, p, m)| m * (1.0 - ((y - c) / w).powi(2)).max(0.0).powf(p)).sum::<f64>();
        (1.0 - (x / h).powi(2)).max(0.0).sqrt() + bump(x) + bump(-x)
    };
    let r = h * 2.0;
    GridMeasure::from_fn(-r, r, n, f).unwrap()
}

/// Number of non-crossing pairings of the positions of `word` that only
/// pair equal letters, by enumerating every perfect matching.
pub fn pairing_count(word: &[u8]) -> u64 {
    fn crosses(pairs: &[(usize, usize)], a: usize, b: usize) -> bool {
        pairs.iter().any(|&(c, d)| (c < a && a < d && d < b) || (a < c && c < b && b < d))
    }
    fn go(word: &[u8], used: &mut Vec<bool>, pairs: &mut Vec<(usize, usize)>) -> u64 {
        let Some(first) = used.iter().position(|u| !u) else {
            return 1;
        };
        used[first] = true;
        let mut total = 0;
        for j in first + 1..word.len() {
            if used[j] || word[j] != word[first] || crosses(pairs, first, j) {
                continue;
            }
            used[j] = true;
            pairs.push((first, j));
            total += go(word, used, pairs);
            pairs.pop();
            used[j] = false;
        }
        used[first] = false;
        total
    }
    if word.len() % 2 == 1 {
        return 0;
    }
    go(word, &mut vec![false; word.len()], &mut Vec::new())
}

/// Every word over `n` letters of length `len`.
pub fn words_of_length(n: usize, len: usize) -> Vec<Word> {
    let count = n.pow(len as u32);
    (0..count)
        .map(|mut k| {
            let mut letters = vec![0u8; len];
            for l in letters.iter_mut().rev() {
                *l = (k % n) as u8;
                k /= n;
            }
            Word::new(letters)
        })
        .collect()
}

pub fn random_word(rng: &mut impl Rng, n: usize, len: usize) -> Word {
    Word::new((0..len).map(|_| rng.gen_range(0..n) as u8).collect())
}

/// Series with up to `terms` monomials of length `min_len..=max_len` and
/// small integer coefficients, so that most identities hold bit for bit.
pub fn random_integer_series(
    rng: &mut impl Rng,
    n: usize,
    max_degree: usize,
    min_len: usize,
    terms: usize,
) -> NCSeries {
    let mut s = NCSeries::zero(n, max_degree);
    for _ in 0..rng.gen_range(1..=terms) {
        let len = rng.gen_range(min_len..=max_degree);
        let c = loop {
            let c = rng.gen_range(-5i32..=5);
            if c != 0 {
                break c as f64;
            }
        };
        s.axpy(1.0, &NCSeries::monomial(n, max_degree, random_word(rng, n, len), c).unwrap());
    }
    s
}

/// Even series without constant term and with real coefficients in
/// `[-1, 1]`.
pub fn random_even_series(rng: &mut impl Rng, n: usize, max_degree: usize, terms: usize) -> NCSeries {
    let mut s = NCSeries::zero(n, max_degree);
    for _ in 0..rng.gen_range(1..=terms) {
        let len = 2 * rng.gen_range(1..=max_degree / 2);
        let c = rng.gen_range(-1.0..1.0);
        s.axpy(1.0, &NCSeries::monomial(n, max_degree, random_word(rng, n, len), c).unwrap());
    }
    s
}

/// `S s` rescaled to `‖·‖_a = r`.
pub fn symmetric_with_norm(s: &NCSeries, a: f64, r: f64) -> NCSeries {
    let s = s.cyclic_symmetrize();
    let norm = s.norm_a(a);
    if norm == 0.0 {
        s
    } else {
        s.scale(r / norm)
    }
}

/// Trace table that vanishes on odd words and has random values in
/// `[-T^k, T^k]` on even words of length `k`; not the law of anything.
pub fn random_even_table(rng: &mut impl Rng, n: usize, cap: usize, cutoff: f64) -> TraceTable {
    let entries = TraceTable::semicircular(n, cap, cutoff).entries();
    let values: Vec<(Word, f64)> = entries
        .into_iter()
        .map(|(w, _)| {
            let k = w.len();
            let v = if k == 0 {
                1.0
            } else if k % 2 == 1 {
                0.0
            } else {
                rng.gen_range(-1.0..1.0) * cutoff.powi(k as i32)
            };
            (w, v)
        })
        .collect();
    TraceTable::from_values(n, cap, cutoff, values).unwrap()
}

/// `max |a - b|` over the union of terms.
pub fn series_gap(a: &NCSeries, b: &NCSeries) -> f64 {
    (a - b).terms().values().fold(0.0f64, |m, c| m.max(c.abs()))
}

/// The first-moment bound `L(ρ) ≥ -√(2 ∫|s| dρ)` and the chord inequality
/// for `t ↦ L(ρ_t)` along displacement interpolation, on `pairs` seeded
/// pairs of 300-node measures. Panics on a violation and returns the
/// smallest chord gap, which must stay positive since random pairs are
/// never translates.
pub fn log_energy_lemmas(pairs: u64) -> f64 {
    let mut smallest = f64::INFINITY;
    for seed in 0..pairs {
        let mut r = rng(seed);
        let m0 = random_measure(&mut r, 300);
        let m1 = random_measure(&mut r, 300);
        let (l0, l1) = (log_energy(&m0), log_energy(&m1));
        for (m, l) in [(&m0, l0), (&m1, l1)] {
            let bound = -(2.0 * m.expectation(f64::abs)).sqrt();
            assert!(l >= bound, "seed {seed}: L = {l} < {bound}");
        }
        for t in [0.25, 0.5, 0.75] {
            let mt = displacement_interpolate(&m0, &m1, t).unwrap();
            let gap = (1.0 - t) * l0 + t * l1 - log_energy(&mt);
            assert!(gap > -1e-8, "seed {seed}, t = {t}: chord gap {gap:e}");
            smallest = smallest.min(gap);
        }
    }
    smallest
}

/// `∫ g dν` by the midpoint rule in `x = -r cos θ`, which absorbs the
/// square-root edges of a density on `[-r, r]`.
pub fn theta_integral(r: f64, density: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> f64 {
    let m = 4000;
    (0..m)
        .map(|j| {
            let th = PI * (j as f64 + 0.5) / m as f64;
            let x = -r * th.cos();
            g(x) * density(x) * r * th.sin()
        })
        .sum::<f64>()
        * PI
        / m as f64
}

/// Worst relative gap between the analytic gradient and central differences
/// over 20 seeded 32-particle configurations.
pub fn gradient_check() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut r = rng(seed);
        let target = random_measure(&mut r, 200);
        let obj = ParticleObjective::new(&target, 32);
        let mut q: Vec<f64> = (0..32).map(|_| r.gen_range(-3.0..3.0)).collect();
        q.sort_by(f64::total_cmp);
        let g = obj.gradient(&q);
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..q.len() {
            // Random particles can nearly collide; the step has to resolve
            // the closest neighbour.
            let left = if k > 0 { q[k] - q[k - 1] } else { f64::INFINITY };
            let right = if k + 1 < q.len() { q[k + 1] - q[k] } else { f64::INFINITY };
            let h = 1e-4 * left.min(right);
            let (mut a, mut b) = (q.clone(), q.clone());
            a[k] += h;
            b[k] -= h;
            let fd = (obj.value(&a) - obj.value(&b)) / (2.0 * h);
            worst = worst.max((g[k] - fd).abs() / scale);
        }
    }
    worst
}

/// Solves for `c_# μ` with `μ = (x³)_# ν_{x⁴/4}` and returns the largest
/// gap between the particles and the quantiles of the law of `X/c`,
/// `X ~ ν_{x⁴/4}`.
pub fn scaling_error(c: f64) -> f64 {
    let u = EvenPotential::new(vec![0.0, 0.25]).unwrap();
    let nu = free_gibbs_measure(&u).unwrap().measure;
    let mu = pushforward_monotone(&nu, &Polynomial::monomial(3)).unwrap();
    let sol = minimize_f(&MomentProblem::new(mu.dilate(c).unwrap())).unwrap();
    assert!(sol.converged);
    sol.particles
        .iter()
        .zip(quantile_levels(sol.particles.len()))
        .map(|(q, s)| (q - nu.quantile_raw(s) / c).abs())
        .fold(0.0, f64::max)
}

/// `(n, D, W, τ)` with `W` even and small, `τ` an arbitrary even table
/// bounded by `3^k`.
pub fn transport_setting(seed: u64) -> (usize, usize, NCSeries, TraceTable) {
    let mut r = rng(seed);
    let n = r.gen_range(1..=2);
    let d = 2 * r.gen_range(2..=3);
    let w = random_even_series(&mut r, n, 4, 4).with_max_degree(d);
    let w = symmetric_with_norm(&w, 3.0 + 0.25 + 1.0, r.gen_range(0.0..0.1));
    let tau = random_even_table(&mut r, n, d, 3.0);
    (n, d, w, tau)
}

pub fn ball_point(r: &mut impl Rng, n: usize, d: usize) -> NCSeries {
    let v = random_even_series(r, n, d, 8);
    symmetric_with_norm(&v, 3.0, 0.25 * r.gen_range(0.05..1.0))
}
