//! Equilibrium measures of even polynomial potentials.
//!
//! The density of `ν_u` on `[-r, r]` is read off from the Fourier
//! coefficients of `θ ↦ u'(-r cos θ)`: with `a_n = (1/2π)∫ u'(-r cos θ) cos nθ dθ`
//! one has `ν(-r cos θ) = -(1/π) Σ a_n sin nθ`, and `r` is fixed by the
//! normalisation `r a₁ = -2`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{chebyshev_nodes, hilbert_transform, GridMeasure, DEFAULT_NODES};

const MODULE: &str = "free_gibbs_1d";

/// Densities below this are treated as a genuine sign change.
const NEGATIVE_TOL: f64 = 1e-9;
/// Negative round-off above this is silently clipped.
const CLIP_TOL: f64 = 1e-12;

/// `u(x) = Σ_k c_{2k} x^{2k}` with a positive leading coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvenPotential {
    #[serde(rename = "even_coeffs")]
    coeffs: Vec<f64>,
}

impl EvenPotential {
    /// `coeffs = [c₂, c₄, ...]`. Trailing zeros are dropped.
    pub fn new(mut coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid(MODULE, "potential coefficients must be finite"));
        }
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        match coeffs.last() {
            Some(&c) if c > 0.0 => Ok(EvenPotential { coeffs }),
            _ => Err(Error::invalid(MODULE, "leading coefficient of the potential must be positive")),
        }
    }

    /// From all coefficients `[c₀, c₁, c₂, ...]`; odd terms are rejected and
    /// the constant is ignored.
    pub fn from_dense(dense: &[f64]) -> Result<Self> {
        if dense.iter().skip(1).step_by(2).any(|&c| c != 0.0) {
            return Err(Error::invalid(MODULE, "potential must be even"));
        }
        Self::new(dense.iter().skip(2).step_by(2).copied().collect())
    }

    /// Parses `"c2,c4,..."`.
    pub fn parse(s: &str) -> Result<Self> {
        let coeffs = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::invalid(MODULE, format!("cannot parse coefficient list {s:?}: {e}")))?;
        Self::new(coeffs)
    }

    /// Parses `{"even_coeffs": [c2, c4, ...]}`.
    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            even_coeffs: Vec<f64>,
        }
        let raw: Raw =
            serde_json::from_str(s).map_err(|e| Error::invalid(MODULE, format!("bad potential JSON: {e}")))?;
        Self::new(raw.even_coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        2 * self.coeffs.len()
    }

    pub fn value(&self, x: f64) -> f64 {
        let x2 = x * x;
        self.coeffs.iter().rev().fold(0.0, |acc, &c| (acc + c) * x2)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let x2 = x * x;
        let p = self.coeffs.iter().enumerate().rev().fold(0.0, |acc, (k, &c)| acc * x2 + 2.0 * (k + 1) as f64 * c);
        p * x
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let x2 = x * x;
        self.coeffs.iter().enumerate().rev().fold(0.0, |acc, (k, &c)| {
            let n = 2.0 * (k + 1) as f64;
            acc * x2 + n * (n - 1.0) * c
        })
    }

    /// The potential `x ↦ u(cx)`.
    pub fn dilate(&self, c: f64) -> Result<Self> {
        let c2 = c * c;
        let mut f = 1.0;
        let coeffs = self
            .coeffs
            .iter()
            .map(|&a| {
                f *= c2;
                a * f
            })
            .collect();
        Self::new(coeffs)
    }

    /// `r a₁(r)` in closed form, `-Σ_k 2k c_{2k} binom(2k,k) 4^{-k} r^{2k}`,
    /// and its derivative in `r`.
    fn radius_function(&self, r: f64) -> (f64, f64) {
        let mut val = 0.0;
        let mut der = 0.0;
        let mut central = 1.0; // binom(2k, k) / 4^k
        let mut rp = 1.0;
        for (i, &c) in self.coeffs.iter().enumerate() {
            let k = (i + 1) as f64;
            central *= (2.0 * k - 1.0) / (2.0 * k);
            rp *= r * r;
            val -= 2.0 * k * c * central * rp;
            der -= 4.0 * k * k * c * central * rp / r;
        }
        (val, der)
    }
}

/// `aₙ = (1/2π)∫₀^{2π} u'(-r cos θ) cos nθ dθ` for `n = 0..=n_max`, by the
/// periodic trapezoid rule on `4(n_max + 1)` points (exact for polynomial
/// `u'` of degree at most `n_max`).
pub fn fourier_coefficients(uprime: &dyn Fn(f64) -> f64, r: f64, n_max: usize) -> Result<Vec<f64>> {
    if n_max < 1 {
        return Err(Error::invalid(MODULE, "need at least one Fourier mode"));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::invalid(MODULE, "radius must be positive"));
    }
    let m = 4 * (n_max + 1);
    let samples: Vec<(f64, f64)> = (0..m)
        .map(|j| {
            let th = 2.0 * PI * j as f64 / m as f64;
            (th, uprime(-r * th.cos()))
        })
        .collect();
    Ok((0..=n_max)
        .map(|n| {
            let s: f64 = samples.iter().map(|&(th, v)| v * (n as f64 * th).cos()).sum();
            s / m as f64
        })
        .collect())
}

/// Positive root of `r a₁(r) + 2 = 0`: log-scale bisection on `[1e-6, 1e6]`
/// followed by a Newton polish.
pub fn solve_radius(u: &EvenPotential) -> Result<f64> {
    let g = |r: f64| u.radius_function(r).0 + 2.0;
    let (mut lo, mut hi) = (1e-6f64, 1e6f64);
    let (glo, ghi) = (g(lo), g(hi));
    if !(glo > 0.0 && ghi < 0.0) {
        return Err(Error::regime(MODULE, "no admissible radius in [1e-6, 1e6]"));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut r = (lo * hi).sqrt();
    for _ in 0..10 {
        let (val, der) = u.radius_function(r);
        if der == 0.0 {
            break;
        }
        let next = r - (val + 2.0) / der;
        if !(next.is_finite() && next > 0.0) {
            break;
        }
        r = next;
    }
    Ok(r)
}

/// Output of [`free_gibbs_measure`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsSolution {
    pub radius: f64,
    /// `a₀, ..., a_N`.
    pub fourier: Vec<f64>,
    pub measure: GridMeasure,
}

impl GibbsSolution {
    fn raw_density(&self, x: f64) -> f64 {
        raw_density(self.radius, &self.fourier, x)
    }

    /// `r a₁`; equal to `-2` at a solution.
    pub fn radius_condition(&self) -> f64 {
        self.radius * self.fourier[1]
    }

    /// Total mass implied by the coefficients, `-r a₁ / 2`.
    pub fn mass(&self) -> f64 {
        -0.5 * self.radius_condition()
    }

    /// `∫ x^k dν` from the Fourier representation; exact up to rounding.
    pub fn moment(&self, k: u32) -> f64 {
        let m = 2 * (k as usize + self.fourier.len() + 4);
        let r = self.radius;
        (0..m)
            .map(|j| {
                let th = PI * (j as f64 + 0.5) / m as f64;
                let x = -r * th.cos();
                let nu = -self.fourier.iter().enumerate().map(|(n, &a)| a * (n as f64 * th).sin()).sum::<f64>() / PI;
                x.powi(k as i32) * nu * r * th.sin()
            })
            .sum::<f64>()
            * PI
            / m as f64
    }
}

/// `-(1/π) Σ aₙ sin nθ` at `θ = arccos(-x/r)`, unclipped.
fn raw_density(r: f64, fourier: &[f64], x: f64) -> f64 {
    let th = (-x / r).clamp(-1.0, 1.0).acos();
    -fourier.iter().enumerate().map(|(n, &a)| a * (n as f64 * th).sin()).sum::<f64>() / PI
}

/// Density of the equilibrium measure at an interior point.
pub fn gibbs_density(sol: &GibbsSolution, x: f64) -> Result<f64> {
    if !(x.abs() < sol.radius) {
        return Err(Error::invalid(MODULE, format!("|x| = {} is not inside the support", x.abs())));
    }
    let v = sol.raw_density(x);
    Ok(if (-CLIP_TOL..0.0).contains(&v) { 0.0 } else { v })
}

/// Equilibrium measure of `u`, assembled on the default Chebyshev grid.
pub fn free_gibbs_measure(u: &EvenPotential) -> Result<GibbsSolution> {
    free_gibbs_measure_with(u, DEFAULT_NODES)
}

pub fn free_gibbs_measure_with(u: &EvenPotential, n_nodes: usize) -> Result<GibbsSolution> {
    let radius = solve_radius(u)?;
    let fourier = fourier_coefficients(&|x| u.derivative(x), radius, u.degree())?;
    let condition = radius * fourier[1];
    if (condition + 2.0).abs() > 1e-10 {
        return Err(Error::new(
            crate::ErrorKind::Internal,
            MODULE,
            format!("radius condition r a1 = {condition} not met"),
        ));
    }
    let nodes = chebyshev_nodes(-radius, radius, n_nodes.max(3));
    // Probe between the nodes too so a thin negative dip cannot hide.
    let probe = chebyshev_nodes(-radius, radius, 4 * n_nodes.max(3));
    let min = probe.iter().map(|&x| raw_density(radius, &fourier, x)).fold(f64::INFINITY, f64::min);
    if min < -NEGATIVE_TOL {
        return Err(Error::regime(MODULE, format!("one-cut assumption violated: density reaches {min:.3e}")));
    }
    let last = nodes.len() - 1;
    let density = nodes
        .iter()
        .enumerate()
        .map(|(i, &x)| if i == 0 || i == last { 0.0 } else { raw_density(radius, &fourier, x).max(0.0) })
        .collect();
    let measure = GridMeasure::from_density(nodes, density)?;
    Ok(GibbsSolution { radius, fourier, measure })
}

/// `max |2π H(ν)(x) - u'(x)|` over 181 evenly spaced points of `|x| ≤ 0.9 r`.
pub fn hilbert_residual(measure: &GridMeasure, u: &EvenPotential) -> Result<f64> {
    let (a, b) = measure.support();
    let r = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    let n = 181;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let x = c + 0.9 * r * (2.0 * i as f64 / (n - 1) as f64 - 1.0);
        let h = hilbert_transform(measure, x)?;
        worst = worst.max((2.0 * PI * h - u.derivative(x)).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quartic() -> EvenPotential {
        EvenPotential::new(vec![0.0, 0.25]).unwrap()
    }

    #[test]
    fn potential_evaluation() {
        let u = EvenPotential::new(vec![0.5, 0.25]).unwrap();
        let x = 1.3f64;
        assert!((u.value(x) - (0.5 * x * x + 0.25 * x.powi(4))).abs() < 1e-14);
        assert!((u.derivative(x) - (x + x.powi(3))).abs() < 1e-14);
        assert!((u.second_derivative(x) - (1.0 + 3.0 * x * x)).abs() < 1e-14);
        assert_eq!(u.degree(), 4);
    }

    #[test]
    fn potential_parsing() {
        assert_eq!(EvenPotential::parse("0,0.25").unwrap(), quartic());
        assert_eq!(EvenPotential::from_json(r#"{"even_coeffs":[0,0.25]}"#).unwrap(), quartic());
        assert!(EvenPotential::parse("0.5,-1").is_err());
        assert!(EvenPotential::parse("a").is_err());
        assert!(EvenPotential::from_dense(&[0.0, 0.0, 0.5, 1.0]).is_err());
        assert_eq!(EvenPotential::from_dense(&[3.0, 0.0, 0.0, 0.0, 0.25]).unwrap(), quartic());
    }

    #[test]
    fn fourier_of_cubic() {
        let r = 1.7;
        let a = fourier_coefficients(&|x| x * x * x, r, 6).unwrap();
        let r3 = r * r * r;
        for (n, &an) in a.iter().enumerate() {
            let want = match n {
                1 => -3.0 * r3 / 8.0,
                3 => -r3 / 8.0,
                _ => 0.0,
            };
            assert!((an - want).abs() < 1e-12, "n={n}");
        }
        let lin = fourier_coefficients(&|x| x, r, 3).unwrap();
        assert!((lin[1] + r / 2.0).abs() < 1e-14);
        assert!(fourier_coefficients(&|x| x, r, 0).is_err());
    }

    #[test]
    fn closed_form_radius_function_matches_quadrature() {
        let u = EvenPotential::new(vec![0.3, -0.1, 0.05]).unwrap();
        for r in [0.5, 1.0, 2.5] {
            let a = fourier_coefficients(&|x| u.derivative(x), r, 6).unwrap();
            assert!((u.radius_function(r).0 - r * a[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn radii() {
        let quad = EvenPotential::new(vec![0.5]).unwrap();
        assert!((solve_radius(&quad).unwrap() - 2.0).abs() < 1e-12);
        let r = solve_radius(&quartic()).unwrap();
        assert!((r - 2.0 / 3f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn semicircle_density_and_mass() {
        let sol = free_gibbs_measure(&EvenPotential::new(vec![0.5]).unwrap()).unwrap();
        for i in 1..100 {
            let x = -2.0 + 4.0 * i as f64 / 100.0;
            let want = (4.0 - x * x).sqrt() / (2.0 * PI);
            assert!((gibbs_density(&sol, x).unwrap() - want).abs() < 1e-12);
        }
        assert!((sol.mass() - 1.0).abs() < 1e-12);
        assert!((sol.moment(2) - 1.0).abs() < 1e-12);
        assert!((sol.moment(4) - 2.0).abs() < 1e-12);
        assert!(gibbs_density(&sol, 2.0).is_err());
    }

    #[test]
    fn double_well_guard() {
        // Exactly critical: density x²√(1 - x²/4)/π touches zero at the origin.
        let critical = free_gibbs_measure(&EvenPotential::parse("-1,0.25").unwrap()).unwrap();
        assert!((critical.radius - 2.0).abs() < 1e-12);
        let err = free_gibbs_measure(&EvenPotential::parse("-2,0.25").unwrap()).unwrap_err();
        assert_eq!(err.kind, crate::ErrorKind::Regime);
        assert!(err.message.contains("one-cut"));
    }

    #[test]
    fn residual_detects_wrong_density() {
        let u = EvenPotential::new(vec![0.5]).unwrap();
        let sol = free_gibbs_measure(&u).unwrap();
        assert!(hilbert_residual(&sol.measure, &u).unwrap() < 1e-4);
        let m = &sol.measure;
        let noisy: Vec<f64> = m
            .density()
            .iter()
            .enumerate()
            .map(|(i, d)| d * (1.0 + 0.01 * ((i * 7919) % 13) as f64 / 6.0 - 0.01))
            .collect();
        let bad = GridMeasure::from_density(m.nodes().to_vec(), noisy).unwrap();
        assert!(hilbert_residual(&bad, &u).unwrap() > 1e-2);
    }
}
