//! Free transport from `τ_{½|Y|²+V}` to `τ_{½|X|²+W}` along `Y + 𝒟V(Y)`.
//!
//! With `Ṽ = 𝒮Π𝒩V` the transport condition is the fixed-point equation
//!
//! ```text
//! Ṽ = 𝒮Π[ -W(Y + 𝒟ΣṼ) + ΣṼ - |𝒟ΣṼ|²/2 + (1⊗τ + τ⊗1) Tr log(1 + J𝒟ΣṼ) ]
//! ```
//!
//! where `τ` is the law of `Y`. [`solve_v`] freezes `τ`, iterates the map to
//! a fixed point, recomputes `τ` for the new `V`, and repeats.

use serde::Serialize;

use crate::error::{Error, ErrorKind, Result};
use crate::gibbs::{free_gibbs_measure, EvenPotential};
use crate::nc::{gradient_square, jacobian, trace_contract, MatrixTensor, NCSeries, Word};
use crate::sd::{pushforward_trace, sd_residual, solve_sd_with, SdOptions, TraceTable, DEFAULT_CUTOFF};

const MODULE: &str = "free_transport";

/// Norm radius `A`.
pub const DEFAULT_NORM_RADIUS: f64 = 3.0;
/// Ball radius `R`, just inside `¼`.
pub const DEFAULT_BALL_RADIUS: f64 = 0.24;
/// Inner updates growing this many times in a row count as divergence.
const DIVERGENCE_RUN: usize = 5;
/// Neumann terms below this `‖·‖_{1⊗1}` are dropped.
const LOG_TERM_TOL: f64 = 1e-18;
const LOG_MAX_ORDER: usize = 400;

#[derive(Clone, Debug)]
pub struct TransportProblem {
    pub w: NCSeries,
    /// `A`.
    pub norm_radius: f64,
    /// `R`.
    pub ball_radius: f64,
    /// Truncation degree `D` of `V`.
    pub degree: usize,
    /// Norm cutoff `T` for the trace tables.
    pub cutoff: f64,
    /// Degree cap of the trace tables; must be at least `degree`.
    pub trace_cap: usize,
    pub tol: f64,
    pub sd_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl TransportProblem {
    /// Defaults `A = 3`, `T = 3`, `R = 0.24`; the trace cap leaves room for
    /// the Schwinger-Dyson truncation to settle below `degree`.
    pub fn new(w: NCSeries, degree: usize) -> Self {
        let trace_cap = if w.n_vars() == 1 { (4 * degree).max(40) } else { degree + 12 };
        TransportProblem {
            w,
            norm_radius: DEFAULT_NORM_RADIUS,
            ball_radius: DEFAULT_BALL_RADIUS,
            degree,
            cutoff: DEFAULT_CUTOFF,
            trace_cap,
            tol: 1e-12,
            sd_tol: 1e-14,
            max_outer: 100,
            max_inner: 500,
        }
    }

    /// `‖W‖_{17/4} < 9R/68`, the regime where the contraction is proved.
    pub fn in_guaranteed_regime(&self) -> bool {
        self.w.norm_a(17.0 / 4.0) < 9.0 * self.ball_radius / 68.0
    }

    fn validate(&self) -> Result<()> {
        check_potential(&self.w)?;
        if self.degree < 2 {
            return Err(Error::invalid(MODULE, "truncation degree must be at least 2"));
        }
        if self.trace_cap < self.degree {
            return Err(Error::invalid(MODULE, "trace cap must be at least the truncation degree"));
        }
        if !(self.norm_radius >= 1.0) || !(self.ball_radius > 0.0) {
            return Err(Error::invalid(MODULE, "need A ≥ 1 and R > 0"));
        }
        if !(self.tol > 0.0) || !(self.sd_tol > 0.0) {
            return Err(Error::invalid(MODULE, "tolerances must be positive"));
        }
        Ok(())
    }

    fn sd_options(&self) -> SdOptions {
        SdOptions { cutoff: self.cutoff, tol: self.sd_tol, ..SdOptions::default() }
    }
}

/// Even, self-adjoint, no constant term.
pub fn check_potential(w: &NCSeries) -> Result<()> {
    if !w.is_even() {
        return Err(Error::invalid(MODULE, "W must contain only terms of even degree"));
    }
    if w.constant_term() != 0.0 {
        return Err(Error::invalid(MODULE, "W must have zero constant term"));
    }
    if !w.is_self_adjoint(1e-12) {
        return Err(Error::invalid(MODULE, "W must be self-adjoint"));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// `‖V_{k+1} - V_k‖_A` at exit.
    pub final_update_norm: f64,
    /// Largest ratio of successive inner update norms.
    pub contraction_factor: f64,
    /// Largest word-wise change of `τ_Y` between the last two outer steps.
    pub tau_drift: f64,
    /// `‖W‖_{17/4} < 9R/68`.
    pub guaranteed_regime: bool,
    /// `‖V‖_A ≤ R`.
    pub within_ball: bool,
    /// `"verified"` when both flags above hold, `"unverified regime"` otherwise.
    pub regime: String,
    /// `Σ_i ‖𝒟_i[...]‖_A` of the integrated equation at the solution.
    pub cyclic_residual: f64,
    pub verification: Option<TransportReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TransportSolution {
    pub v: NCSeries,
    pub v_tilde: NCSeries,
    pub tau_y: TraceTable,
    pub transport_map: Vec<NCSeries>,
    pub v_norm: f64,
    pub diagnostics: Diagnostics,
}

/// `(1 ⊗ τ + τ ⊗ 1) Tr log(1 + m)`, summing the Neumann series until its
/// terms vanish under truncation or drop below `1e-18`.
fn log_trace_term(m: &MatrixTensor, tau: &TraceTable, min_order: usize) -> Result<NCSeries> {
    let n = m.size();
    let mut sum = MatrixTensor::zero(n, m.max_degree());
    let mut power = m.clone();
    for k in 1..=LOG_MAX_ORDER {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sum.axpy(sign / k as f64, &power);
        if k >= min_order && power.norm_ab(1.0, 1.0) / (k as f64) < LOG_TERM_TOL {
            break;
        }
        if k == LOG_MAX_ORDER {
            return Err(Error::new(
                ErrorKind::NonConvergence,
                MODULE,
                "log(1 + J𝒟V) series does not converge: J𝒟V is too large",
            ));
        }
        power = power.multiply(m)?;
        if power.is_zero() {
            break;
        }
    }
    trace_contract(&sum.trace(), tau)
}

/// `F(ΣṼ)`, the right-hand side of the fixed-point equation, truncated at
/// `degree`.
pub fn picard_map(v_tilde: &NCSeries, w: &NCSeries, tau: &TraceTable, degree: usize) -> Result<NCSeries> {
    if tau.degree_cap() < degree {
        return Err(Error::invalid(
            MODULE,
            format!("trace cap {} is below the truncation degree {degree}", tau.degree_cap()),
        ));
    }
    let n = w.n_vars();
    if v_tilde.n_vars() != n || tau.n_vars() != n {
        return Err(Error::invalid(MODULE, "V, W and τ disagree on the number of variables"));
    }
    let v = v_tilde.with_max_degree(degree).drop_constant().sigma()?;
    let grad = v.cyclic_gradients();
    let args: Vec<NCSeries> = NCSeries::identity_vars(n, degree).iter().zip(&grad).map(|(y, g)| y + g).collect();

    let mut out = w.substitute(&args, degree)?.scale(-1.0);
    out.axpy(1.0, &v);
    out.axpy(-0.5, &gradient_square(&grad, degree));
    if !v.is_zero() {
        let j = jacobian(&grad)?;
        out.axpy(1.0, &log_trace_term(&j, tau, degree)?);
    }
    Ok(out.drop_constant().cyclic_symmetrize())
}

/// `½ + ‖Σ_i ∂_i W‖_{B⊗B} + R + 4R/(A² - 2R)` with `B = A + R`.
pub fn lipschitz_bound(w: &NCSeries, a: f64, r: f64) -> Result<f64> {
    if !(a >= 1.0) || !(r > 0.0) {
        return Err(Error::invalid(MODULE, "Lipschitz bound needs A ≥ 1 and R > 0"));
    }
    if a * a <= 2.0 * r {
        return Err(Error::invalid(MODULE, format!("Lipschitz bound needs A² > 2R, got A = {a}, R = {r}")));
    }
    let b = a + r;
    let mut sum = crate::nc::TensorSeries::zero(w.n_vars(), w.max_degree());
    for i in 0..w.n_vars() {
        sum.axpy(1.0, &w.difference_quotient(i)?);
    }
    Ok(0.5 + sum.norm_ab(b, b) + r + 4.0 * r / (a * a - 2.0 * r))
}

/// `‖W‖_B + ‖Ṽ‖_A (½ + R + 4R/(A² - 2R))`, a bound on `‖F(ΣṼ)‖_A`.
pub fn picard_norm_bound(w: &NCSeries, v_tilde: &NCSeries, a: f64, r: f64) -> f64 {
    w.norm_a(a + r) + v_tilde.norm_a(a) * (0.5 + r + 4.0 * r / (a * a - 2.0 * r))
}

/// `Σ_i ‖𝒟_i[W(Y+𝒟V) + (𝒩-1)V + |𝒟V|²/2 - (1⊗τ+τ⊗1)Tr log(1+J𝒟V)]‖_A`.
pub fn cyclic_residual(v: &NCSeries, w: &NCSeries, tau: &TraceTable, degree: usize, a: f64) -> Result<f64> {
    let n = w.n_vars();
    let v = v.with_max_degree(degree);
    let grad = v.cyclic_gradients();
    let args: Vec<NCSeries> = NCSeries::identity_vars(n, degree).iter().zip(&grad).map(|(y, g)| y + g).collect();
    let mut e = w.substitute(&args, degree)?;
    e.axpy(1.0, &v.number_op());
    e.axpy(-1.0, &v);
    e.axpy(0.5, &gradient_square(&grad, degree));
    if !v.is_zero() {
        e.axpy(-1.0, &log_trace_term(&jacobian(&grad)?, tau, degree)?);
    }
    Ok(e.cyclic_gradients().iter().map(|g| g.norm_a(a)).fold(0.0, |s, v| s + v))
}

/// Solves for `V` by an outer loop over `τ_Y` and an inner Picard loop.
pub fn solve_v(problem: &TransportProblem) -> Result<TransportSolution> {
    problem.validate()?;
    let (n, d, a) = (problem.w.n_vars(), problem.degree, problem.norm_radius);
    let w = problem.w.with_max_degree(d);
    let opts = problem.sd_options();

    let mut v_tilde = NCSeries::zero(n, d);
    let mut v = NCSeries::zero(n, d);
    let mut tau = solve_sd_with(&v.with_max_degree(problem.trace_cap), problem.trace_cap, &opts)?;
    let mut prev_tau: Option<TraceTable> = None;
    let mut total_inner = 0;
    let mut contraction: f64 = 0.0;
    let mut outer_change = f64::INFINITY;
    let mut outer = 0;
    while outer < problem.max_outer {
        outer += 1;
        let mut last_update = f64::INFINITY;
        let mut growth_run = 0;
        let mut converged = false;
        for _ in 0..problem.max_inner {
            total_inner += 1;
            let next = picard_map(&v_tilde, &w, &tau, d)?;
            let update = (&next - &v_tilde).norm_a(a);
            if !update.is_finite() {
                return Err(divergence("inner Picard update is not finite"));
            }
            if last_update.is_finite() && last_update > 0.0 {
                contraction = contraction.max(update / last_update);
                if update > last_update {
                    growth_run += 1;
                    if growth_run >= DIVERGENCE_RUN {
                        return Err(divergence(&format!(
                            "inner Picard updates grew {DIVERGENCE_RUN} times in a row (last ‖ΔṼ‖_A = {update:.3e})"
                        )));
                    }
                } else {
                    growth_run = 0;
                }
            }
            v_tilde = next;
            last_update = update;
            if update < problem.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::new(
                ErrorKind::NonConvergence,
                MODULE,
                format!("inner Picard loop did not converge in {} steps", problem.max_inner),
            ));
        }
        let v_next = v_tilde.sigma()?;
        outer_change = (&v_next - &v).norm_a(a);
        v = v_next;
        let next_tau = solve_sd_with(&v.with_max_degree(problem.trace_cap), problem.trace_cap, &opts)?;
        prev_tau = Some(std::mem::replace(&mut tau, next_tau));
        if outer_change < problem.tol {
            break;
        }
    }
    if outer_change >= problem.tol {
        return Err(Error::new(
            ErrorKind::NonConvergence,
            MODULE,
            format!("outer loop did not converge in {} steps (‖ΔV‖_A = {outer_change:.3e})", problem.max_outer),
        ));
    }
    let tau_drift = match &prev_tau {
        Some(p) => tau.max_deviation(p, problem.trace_cap)?,
        None => 0.0,
    };
    let v_norm = v.norm_a(a);
    let guaranteed = problem.in_guaranteed_regime();
    let within_ball = v_norm <= problem.ball_radius;
    let grad = v.cyclic_gradients();
    let transport_map = NCSeries::identity_vars(n, d).iter().zip(&grad).map(|(y, g)| y + g).collect();
    let residual = cyclic_residual(&v, &w, &tau, d, a)?;
    Ok(TransportSolution {
        v_tilde: v.number_op(),
        v,
        tau_y: tau,
        transport_map,
        v_norm,
        diagnostics: Diagnostics {
            outer_iterations: outer,
            inner_iterations: total_inner,
            final_update_norm: outer_change,
            contraction_factor: contraction,
            tau_drift,
            guaranteed_regime: guaranteed,
            within_ball,
            regime: if guaranteed && within_ball { "verified" } else { "unverified regime" }.to_string(),
            cyclic_residual: residual,
            verification: None,
        },
    })
}

fn divergence(msg: &str) -> Error {
    Error::new(ErrorKind::NonConvergence, MODULE, format!("divergence: {msg}"))
}

#[derive(Clone, Debug, Serialize)]
pub struct TransportReport {
    pub degree: usize,
    /// `max_w |τ_X(w) - τ_W(w)|` over words up to `degree`, where `τ_X` is
    /// the pushforward of `τ_Y` and `τ_W` solves Schwinger-Dyson for `W`.
    pub deviation: f64,
    /// Schwinger-Dyson residual of the pushforward table against `W`.
    pub sd_residual: f64,
    /// Truncation tail bound of the pushforward table.
    pub pushforward_tail: f64,
    /// One variable only: `max_k |τ_X(x^k) - ∫x^k dν|` against the
    /// equilibrium measure of `½x² + W`.
    pub one_variable_deviation: Option<f64>,
}

/// Pushes `τ_Y` through `Y + 𝒟V` and compares with the law of `W`.
pub fn verify_transport(sol: &TransportSolution, w: &NCSeries, degree: usize) -> Result<TransportReport> {
    compare_pushforward(&sol.tau_y, &sol.transport_map, w, degree)
}

/// As [`verify_transport`] for a bare `V`: solves for `τ_{½|Y|²+V}` at
/// `trace_cap` first.
pub fn verify_potential(
    v: &NCSeries,
    w: &NCSeries,
    degree: usize,
    trace_cap: usize,
    cutoff: f64,
) -> Result<TransportReport> {
    check_potential(w)?;
    if v.n_vars() != w.n_vars() {
        return Err(Error::invalid(MODULE, "V and W disagree on the number of variables"));
    }
    if !v.is_even() || !v.is_self_adjoint(1e-12) {
        return Err(Error::invalid(MODULE, "V must be even and self-adjoint"));
    }
    let opts = SdOptions { cutoff, tol: 1e-14, ..SdOptions::default() };
    let tau_y = solve_sd_with(&v.with_max_degree(trace_cap), trace_cap, &opts)?;
    let d = v.max_degree();
    let map: Vec<NCSeries> =
        NCSeries::identity_vars(v.n_vars(), d).iter().zip(&v.cyclic_gradients()).map(|(y, g)| y + g).collect();
    compare_pushforward(&tau_y, &map, w, degree)
}

fn compare_pushforward(tau_y: &TraceTable, map: &[NCSeries], w: &NCSeries, degree: usize) -> Result<TransportReport> {
    let cap = tau_y.degree_cap();
    let degree = degree.min(cap);
    let tau_x = pushforward_trace(tau_y, map, degree)?;
    let opts = SdOptions { cutoff: tau_y.cutoff(), tol: 1e-14, ..SdOptions::default() };
    let direct = solve_sd_with(&w.with_max_degree(cap), cap, &opts)?;
    let deviation = tau_x.max_deviation(&direct, degree)?;
    let residual = sd_residual(&tau_x, w, degree);
    let one_variable_deviation = if w.n_vars() == 1 { Some(one_variable_gap(&tau_x, w, degree)?) } else { None };
    Ok(TransportReport {
        degree,
        deviation,
        sd_residual: residual,
        pushforward_tail: tau_x.tail_bound(),
        one_variable_deviation,
    })
}

/// Even potential `½x² + W(x)` of a one-variable series.
pub fn one_variable_potential(w: &NCSeries) -> Result<EvenPotential> {
    let mut coeffs = vec![0.0; w.degree() / 2 + 1];
    coeffs[0] = 0.5;
    for (word, &c) in w.terms() {
        if word.len() % 2 == 1 || word.is_empty() {
            return Err(Error::invalid(MODULE, "one-variable potential must be even without constant"));
        }
        coeffs[word.len() / 2 - 1] += c;
    }
    EvenPotential::new(coeffs)
}

fn one_variable_gap(tau_x: &TraceTable, w: &NCSeries, degree: usize) -> Result<f64> {
    let sol = free_gibbs_measure(&one_variable_potential(w)?)?;
    let mut worst: f64 = 0.0;
    for k in 1..=degree {
        let m = tau_x.value(&Word::new(vec![0; k]))?;
        worst = worst.max((m - sol.moment(k as u32)).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(l: &[u8]) -> Word {
        Word::new(l.to_vec())
    }

    #[test]
    fn lipschitz_constant_at_zero_potential() {
        let b = lipschitz_bound(&NCSeries::zero(2, 8), 3.0, 0.25).unwrap();
        assert!((b - 59.0 / 68.0).abs() < 1e-15);
        let tiny = lipschitz_bound(&NCSeries::zero(1, 8), 1e6, 1e-9).unwrap();
        assert!((tiny - 0.5).abs() < 1e-8);
        assert!(lipschitz_bound(&NCSeries::zero(1, 8), 1.0, 0.5).is_err());
    }

    #[test]
    fn picard_map_trivial_cases() {
        let tau = TraceTable::semicircular(1, 12, 3.0);
        let zero = NCSeries::zero(1, 10);
        assert!(picard_map(&zero, &zero, &tau, 10).unwrap().is_zero());
        let quartic = NCSeries::monomial(1, 10, w(&[0; 4]), 0.05).unwrap();
        assert_eq!(picard_map(&zero, &quartic, &tau, 10).unwrap(), quartic.scale(-1.0));
        assert!(picard_map(&zero, &quartic, &TraceTable::semicircular(1, 6, 3.0), 10).is_err());
    }

    #[test]
    fn zero_potential_gives_zero_map() {
        let sol = solve_v(&TransportProblem::new(NCSeries::zero(1, 8), 8)).unwrap();
        assert!(sol.v.is_zero());
        assert_eq!(sol.diagnostics.final_update_norm, 0.0);
        let report = verify_transport(&sol, &NCSeries::zero(1, 8), 8).unwrap();
        assert!(report.deviation < 1e-12);
    }

    #[test]
    fn rejects_odd_potentials() {
        let cubic = NCSeries::monomial(1, 8, w(&[0; 3]), 0.01).unwrap();
        let err = solve_v(&TransportProblem::new(cubic, 8)).unwrap_err();
        assert_eq!(err.message, "W must contain only terms of even degree");
    }

    #[test]
    fn small_quartic_matches_equilibrium_moments() {
        let quartic = NCSeries::monomial(1, 10, w(&[0; 4]), 0.005).unwrap();
        let sol = solve_v(&TransportProblem::new(quartic.clone(), 10)).unwrap();
        assert!(sol.v.is_even());
        assert!(sol.v_norm < 0.5, "{}", sol.v_norm);
        let report = verify_transport(&sol, &quartic, 6).unwrap();
        assert!(report.deviation < 2e-4, "{report:?}");
        assert!(report.one_variable_deviation.unwrap() < 2e-4, "{report:?}");
        assert!(sol.diagnostics.cyclic_residual < 1e-9, "{:?}", sol.diagnostics);
        let again = verify_potential(&sol.v, &quartic, 6, sol.tau_y.degree_cap(), sol.tau_y.cutoff()).unwrap();
        assert!((again.deviation - report.deviation).abs() < 1e-9, "{again:?}");
    }
}
