//! The inverse problem `μ = (u')_# ν_u` in one variable.
//!
//! `ρ̂` minimises `F(ρ) = L(ρ) + T(ρ, μ)`. The solver represents `ρ` by `m`
//! equal-mass particles at its quantiles, so `T` is linear in the positions
//! and `L` becomes a pairwise logarithmic sum. The potential derivative is
//! then the monotone rearrangement `u' = Q_μ ∘ F_ρ̂`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{
    hilbert_transform, log_energy, max_correlation, pushforward_monotone, quantile_levels, wasserstein2_sq,
    GridMeasure, MonotoneMap, SampledMap,
};

const MODULE: &str = "moment_measure_1d";

/// `L(ρ) + T(ρ, μ)`; `+∞` when `ρ` has atoms.
pub fn functional_f(rho: &GridMeasure, mu: &GridMeasure) -> f64 {
    let l = log_energy(rho);
    if l.is_infinite() {
        return l;
    }
    l + max_correlation(rho, mu)
}

#[derive(Clone, Debug)]
pub struct MomentProblem {
    pub target: GridMeasure,
    pub n_particles: usize,
    pub max_iters: usize,
    /// Initial step length of the backtracking line search.
    pub step_size: f64,
    /// Relative change of the objective below which the solve stops.
    pub tol: f64,
}

impl MomentProblem {
    pub fn new(target: GridMeasure) -> Self {
        MomentProblem { target, n_particles: 512, max_iters: 500, step_size: 1.0, tol: 1e-10 }
    }
}

/// Discrete objective on sorted particle positions `q`:
/// `-(1/m²) Σ_{j≠k} log|q_k - q_j| + Σ_k q_k ∫_{cell k} Q_μ ds`.
#[derive(Clone, Debug)]
pub struct ParticleObjective {
    /// `∫_{((k-1)/m, k/m)} Q_μ ds`, the exact gradient of the coupling term.
    weights: Vec<f64>,
}

impl ParticleObjective {
    /// Uses the target as given; callers centre it when translation
    /// invariance is wanted.
    pub fn new(target: &GridMeasure, m: usize) -> Self {
        let weights = target.quantile_cell_averages(m).into_iter().map(|v| v / m as f64).collect();
        ParticleObjective { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn separation_floor(q: &[f64]) -> f64 {
        let (lo, hi) = q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        1e-9 * (hi - lo).max(f64::MIN_POSITIVE)
    }

    pub fn value(&self, q: &[f64]) -> f64 {
        let m = q.len() as f64;
        let eps = Self::separation_floor(q);
        let mut log_sum = 0.0;
        for k in 0..q.len() {
            for j in k + 1..q.len() {
                log_sum += (q[k] - q[j]).abs().max(eps).ln();
            }
        }
        let coupling: f64 = q.iter().zip(&self.weights).map(|(a, b)| a * b).sum();
        -2.0 * log_sum / (m * m) + coupling
    }

    pub fn gradient(&self, q: &[f64]) -> Vec<f64> {
        let m = q.len() as f64;
        let eps = Self::separation_floor(q);
        let mut g = self.weights.clone();
        for k in 0..q.len() {
            for j in k + 1..q.len() {
                let d = q[k] - q[j];
                let d = if d.abs() < eps { eps.copysign(d) } else { d };
                let f = 2.0 / (m * m * d);
                g[k] -= f;
                g[j] += f;
            }
        }
        g
    }

    /// Hessian of the log term: a weighted graph Laplacian.
    fn hessian(&self, q: &[f64]) -> DMatrix<f64> {
        let n = q.len();
        let m = n as f64;
        let eps = Self::separation_floor(q);
        let mut h = DMatrix::zeros(n, n);
        for k in 0..n {
            for j in k + 1..n {
                let d = (q[k] - q[j]).abs().max(eps);
                let w = 2.0 / (m * m * d * d);
                h[(k, j)] = -w;
                h[(j, k)] = -w;
                h[(k, k)] += w;
                h[(j, j)] += w;
            }
        }
        h
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Residuals {
    /// `max |2π H(ρ̂) - u'|` on the inner 90% of the support.
    pub hilbert: f64,
    /// `W₂(u'_# ρ̂, μ)`.
    pub pushforward_w2: f64,
    /// `|∫ x u'(x) dρ̂ - 1|`.
    pub schwinger_dyson: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentSolution {
    pub rho_hat: GridMeasure,
    pub particles: Vec<f64>,
    pub uprime: SampledMap,
    pub functional_value: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after each accepted step.
    pub history: Vec<f64>,
}

fn newton_direction(obj: &ParticleObjective, q: &[f64], g: &[f64]) -> Option<Vec<f64>> {
    let n = q.len();
    let mut h = obj.hessian(q);
    // Translations are a null direction; pin them with 11ᵀ/n.
    h.iter_mut().for_each(|v| *v += 1.0 / n as f64);
    let chol = h.cholesky()?;
    let d = chol.solve(&DVector::from_column_slice(g));
    let dir: Vec<f64> = d.iter().map(|v| -v).collect();
    let slope: f64 = dir.iter().zip(g).map(|(a, b)| a * b).sum();
    (slope < 0.0 && dir.iter().all(|v| v.is_finite())).then_some(dir)
}

fn center(q: &mut [f64]) {
    let mean = q.iter().sum::<f64>() / q.len() as f64;
    q.iter_mut().for_each(|x| *x -= mean);
}

/// Density of equal-mass particles: `(1/m) / ((q_{k+1} - q_{k-1}) / 2)` at
/// each particle, zero half a gap beyond the extreme particles.
pub fn particle_measure(q: &[f64]) -> Result<GridMeasure> {
    let m = q.len();
    if m < 3 {
        return Err(Error::invalid(MODULE, "need at least three particles"));
    }
    let w = 1.0 / m as f64;
    let mut nodes = Vec::with_capacity(m + 2);
    let mut dens = Vec::with_capacity(m + 2);
    nodes.push(q[0] - 0.5 * (q[1] - q[0]));
    dens.push(0.0);
    for k in 0..m {
        let left = if k == 0 { q[0] - 0.5 * (q[1] - q[0]) } else { q[k - 1] };
        let right = if k == m - 1 { q[m - 1] + 0.5 * (q[m - 1] - q[m - 2]) } else { q[k + 1] };
        nodes.push(q[k]);
        dens.push(w / (0.5 * (right - left)));
    }
    nodes.push(q[m - 1] + 0.5 * (q[m - 1] - q[m - 2]));
    dens.push(0.0);
    Ok(GridMeasure::from_density(nodes, dens)?.centered())
}

/// `u' = Q_μ ∘ F_ρ̂`, sampled at the nodes of `ρ̂`.
pub fn recover_potential_derivative(rho_hat: &GridMeasure, mu: &GridMeasure) -> Result<SampledMap> {
    if rho_hat.has_atoms() {
        return Err(Error::invalid(MODULE, "the minimiser must be non-atomic"));
    }
    let xs = rho_hat.nodes().to_vec();
    let mut ys: Vec<f64> = xs.iter().map(|&x| mu.quantile_raw(rho_hat.cdf(x).clamp(0.0, 1.0))).collect();
    for i in 1..ys.len() {
        ys[i] = ys[i].max(ys[i - 1]);
    }
    SampledMap::new(xs, ys)
}

/// Checks a candidate pair `(ρ̂, u')` against `2π H(ρ̂) = u'` on the inner
/// 90% of the support, `u'_# ρ̂ = μ` and `∫ x u' dρ̂ = 1`.
pub fn verify_solution(rho_hat: &GridMeasure, uprime: &dyn MonotoneMap, mu: &GridMeasure) -> Result<Residuals> {
    let (a, b) = rho_hat.support();
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    let mut hilbert: f64 = 0.0;
    for i in 0..181 {
        let x = c + 0.9 * r * (2.0 * i as f64 / 180.0 - 1.0);
        let h = hilbert_transform(rho_hat, x)?;
        hilbert = hilbert.max((2.0 * std::f64::consts::PI * h - uprime.value(x)).abs());
    }
    let pushed = pushforward_monotone(rho_hat, uprime)?;
    let pushforward_w2 = wasserstein2_sq(&pushed, mu).sqrt();
    let schwinger_dyson = (rho_hat.expectation(|x| x * uprime.value(x)) - 1.0).abs();
    Ok(Residuals { hilbert, pushforward_w2, schwinger_dyson })
}

/// Minimises the particle discretisation of `F` with a Newton-preconditioned
/// descent and backtracking line search.
pub fn minimize_f(problem: &MomentProblem) -> Result<MomentSolution> {
    let mu = &problem.target;
    let m = problem.n_particles;
    if m < 3 {
        return Err(Error::invalid(MODULE, "need at least three particles"));
    }
    let mean = mu.mean();
    let var = mu.moment(2) - mean * mean;
    if !(var > 1e-14 * (1.0 + mean * mean)) {
        return Err(Error::regime(MODULE, "degenerate target: a point mass has no moment-measure potential"));
    }
    let centered = mu.translate(-mean);
    let obj = ParticleObjective::new(&centered, m);

    let init = GridMeasure::semicircle(2.0)?;
    let mut q: Vec<f64> = quantile_levels(m).iter().map(|&s| init.quantile_raw(s)).collect();
    let mut f = obj.value(&q);
    let mut history = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < problem.max_iters {
        iterations += 1;
        let g = obj.gradient(&q);
        let gnorm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let dir = newton_direction(&obj, &q, &g).unwrap_or_else(|| g.iter().map(|v| -v).collect());
        let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut t = problem.step_size;
        let mut accepted = None;
        while t > 1e-16 {
            let mut trial: Vec<f64> = q.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            if trial.windows(2).all(|w| w[1] > w[0]) {
                let ft = obj.value(&trial);
                if ft <= f + 1e-4 * t * slope {
                    trial.sort_by(f64::total_cmp);
                    center(&mut trial);
                    accepted = Some((trial, ft));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((next, fnext)) = accepted else {
            // No decrease is possible along the search direction.
            converged = gnorm < 1e-6;
            break;
        };
        let rel = (f - fnext).abs() / f.abs().max(1.0);
        q = next;
        f = fnext;
        history.push(f);
        let gnorm = obj.gradient(&q).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if rel < problem.tol && gnorm < 1e-6 {
            converged = true;
            break;
        }
    }

    let rho_hat = particle_measure(&q)?;
    let uprime = recover_potential_derivative(&rho_hat, mu)?;
    let residuals = verify_solution(&rho_hat, &uprime, mu)?;
    Ok(MomentSolution {
        functional_value: functional_f(&rho_hat, mu),
        rho_hat,
        particles: q,
        uprime,
        residuals,
        iterations,
        converged,
        history,
    })
}
