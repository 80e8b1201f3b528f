use std::f64::consts::PI;

use super::{integrate_quantile_pair, GridMeasure, Piece, MODULE};
use crate::error::{Error, Result};

/// `(1/π) PV∫ dm(t) / (x - t)`.
///
/// The density part is integrated exactly for the piecewise-linear model
/// after subtracting `ρ(x)` over the whole grid, so the only log
/// singularity left is the closed-form `ρ(x) log((x-a)/(b-x))`.
pub fn hilbert_transform(m: &GridMeasure, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::invalid(MODULE, "Hilbert transform needs a finite point"));
    }
    let (lo, hi) = m.support();
    let tiny = 1e-14 * (1.0 + lo.abs().max(hi.abs()));
    let mut atom_part = 0.0;
    for &(a, w) in m.atoms() {
        if (x - a).abs() <= tiny {
            return Err(Error::invalid(MODULE, format!("Hilbert transform evaluated at the atom {a}")));
        }
        atom_part += w / (x - a);
    }
    let nodes = m.nodes();
    let dens = m.density();
    let n = nodes.len();
    if n == 0 {
        return Ok(atom_part / PI);
    }
    let rho_x = m.density_at(x);
    let mut sum = 0.0;
    for i in 1..n {
        let (c0, c1) = (nodes[i - 1], nodes[i]);
        let (d0, d1) = (dens[i - 1], dens[i]);
        let h = c1 - c0;
        let beta = (d1 - d0) / h;
        // Cells containing x contribute only -beta*h: their linear extension
        // at x equals rho(x).
        if x > c1 {
            let amp = d0 + beta * (x - c0) - rho_x;
            sum += amp * (h / (x - c1)).ln_1p();
        } else if x < c0 {
            let amp = d0 + beta * (x - c0) - rho_x;
            sum -= amp * (h / (c0 - x)).ln_1p();
        }
        sum -= beta * h;
    }
    let (a, b) = (nodes[0], nodes[n - 1]);
    if rho_x > 0.0 && x > a && x < b {
        sum += rho_x * ((x - a) / (b - x)).ln();
    } else if rho_x > 0.0 {
        return Ok(f64::INFINITY.copysign(if x <= a { -1.0 } else { 1.0 }));
    }
    Ok((sum + atom_part) / PI)
}

/// Antiderivative of `Φ'' = log|x|` with `Φ(0) = 0`.
fn phi(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        0.5 * x * x * x.abs().ln() - 0.75 * x * x
    }
}

/// Mean of `log|s - t|` over `s ∈ [a, b]`, `t ∈ [c, d]`.
fn rect_log_mean(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let i = phi(b - c) - phi(a - c) - phi(b - d) + phi(a - d);
    i / ((b - a) * (d - c))
}

/// `∬ -log|s - t| dm(s) dm(t)`; `+∞` when `m` has atoms.
///
/// Each cell carries its trapezoid mass spread uniformly. Nearby cell pairs
/// use the exact rectangle average of the logarithm, distant pairs a
/// fourth-order moment expansion around the centre distance.
pub fn log_energy(m: &GridMeasure) -> f64 {
    if m.has_atoms() {
        return f64::INFINITY;
    }
    let nodes = m.nodes();
    let masses = m.cell_masses();
    let cells: Vec<(f64, f64, f64)> =
        (0..masses.len()).filter(|&i| masses[i] > 0.0).map(|i| (nodes[i], nodes[i + 1], masses[i])).collect();
    let mut total = 0.0;
    for (i, &(a, b, wi)) in cells.iter().enumerate() {
        let hi = b - a;
        let mut row = wi * (hi.ln() - 1.5);
        let ci = 0.5 * (a + b);
        let hi2 = hi * hi / 12.0;
        for &(c, d, wj) in &cells[i + 1..] {
            let hj = d - c;
            let dist = 0.5 * (c + d) - ci;
            let mean = if dist < 8.0 * (hi + hj) {
                rect_log_mean(a, b, c, d)
            } else {
                let hj2 = hj * hj / 12.0;
                let u2 = hi2 + hj2;
                let u4 = (hi.powi(4) + hj.powi(4)) / 80.0 + 6.0 * hi2 * hj2;
                let d2 = dist * dist;
                dist.ln() - u2 / (2.0 * d2) - u4 / (4.0 * d2 * d2)
            };
            row += 2.0 * wj * mean;
        }
        total += wi * row;
    }
    -total
}

/// `∫₀¹ (Q₁ - Q₂)² ds`.
pub fn wasserstein2_sq(m1: &GridMeasure, m2: &GridMeasure) -> f64 {
    integrate_quantile_pair(m1, m2, |a, b| (a - b) * (a - b))
}

/// Maximal correlation `∫₀¹ Q₁ Q₂ ds` of the comonotone coupling.
pub fn max_correlation(m1: &GridMeasure, m2: &GridMeasure) -> f64 {
    let t = integrate_quantile_pair(m1, m2, |a, b| a * b);
    debug_assert!({
        let q1 = integrate_quantile_pair(m1, m2, |a, _| a * a);
        let q2 = integrate_quantile_pair(m1, m2, |_, b| b * b);
        let w = wasserstein2_sq(m1, m2);
        (t - (0.5 * q1 + 0.5 * q2 - 0.5 * w)).abs() <= 1e-8 * (1.0 + q1 + q2)
    });
    t
}

/// Point of the quantile path: the last piece before `s` (left limit) or the
/// piece starting at `s`.
fn side_piece(m: &GridMeasure, s: f64, left: bool) -> Piece {
    let pieces = m.pieces();
    let idx = if left {
        pieces.partition_point(|p| p.s_range().1 < s)
    } else {
        pieces.partition_point(|p| p.s_range().1 <= s)
    };
    pieces[idx.min(pieces.len() - 1)]
}

/// The measure with quantile function `(1-t)Q₀ + tQ₁`.
pub fn displacement_interpolate(m0: &GridMeasure, m1: &GridMeasure, t: f64) -> Result<GridMeasure> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(MODULE, format!("interpolation time {t} outside [0,1]")));
    }
    if m0.has_atoms() {
        return Err(Error::invalid(MODULE, "displacement interpolation needs a non-atomic starting measure"));
    }
    if t == 0.0 {
        return Ok(m0.clone());
    }
    if t == 1.0 {
        return Ok(m1.clone());
    }
    let mut breaks: Vec<f64> = m0
        .pieces()
        .iter()
        .chain(m1.pieces())
        .flat_map(|p| {
            let (a, b) = p.s_range();
            [a, b]
        })
        .map(|s| s.clamp(0.0, 1.0))
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let point = |s: f64, left: bool| {
        let p0 = side_piece(m0, s, left);
        let p1 = side_piece(m1, s, left);
        let x = (1.0 - t) * p0.eval(s) + t * p1.eval(s);
        let inv = (1.0 - t) / p0.density_at(s) + t / p1.density_at(s);
        (x, 1.0 / inv)
    };

    let mut nodes: Vec<f64> = Vec::with_capacity(breaks.len() + 8);
    let mut dens: Vec<f64> = Vec::with_capacity(breaks.len() + 8);
    let push = |x: f64, d: f64, nodes: &mut Vec<f64>, dens: &mut Vec<f64>| {
        let d = if d.is_finite() { d.max(0.0) } else { 0.0 };
        match nodes.last() {
            Some(&last) if x <= last => {
                let k = dens.len() - 1;
                dens[k] = dens[k].max(d);
            }
            _ => {
                nodes.push(x);
                dens.push(d);
            }
        }
    };
    for &s in &breaks {
        let (xl, dl) = point(s, true);
        let (xr, dr) = point(s, false);
        let scale = 1.0 + xl.abs().max(xr.abs());
        if xr - xl > 1e-12 * scale {
            // A jump of the quantile path opens an empty gap; pin the density
            // to zero just inside it.
            let eps = 1e-9 * (xr - xl);
            push(xl, dl, &mut nodes, &mut dens);
            push(xl + eps, 0.0, &mut nodes, &mut dens);
            push(xr - eps, 0.0, &mut nodes, &mut dens);
            push(xr, dr, &mut nodes, &mut dens);
        } else {
            push(xr, if s >= 1.0 { dl } else { dr }, &mut nodes, &mut dens);
        }
    }
    GridMeasure::from_density(nodes, dens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc() -> GridMeasure {
        GridMeasure::semicircle(2.0).unwrap()
    }

    #[test]
    fn hilbert_of_semicircle() {
        let m = sc();
        assert!(hilbert_transform(&m, 0.0).unwrap().abs() < 1e-6);
        assert!((hilbert_transform(&m, 1.0).unwrap() - 0.5 / PI).abs() < 1e-4);
        // Off the support the transform is the Cauchy transform itself.
        let outside = (3.0 - 5f64.sqrt()) / (2.0 * PI);
        assert!((hilbert_transform(&m, 3.0).unwrap() - outside).abs() < 1e-6);
        for x in [0.3, 1.1, 1.9, 2.5] {
            let a = hilbert_transform(&m, x).unwrap();
            let b = hilbert_transform(&m, -x).unwrap();
            assert!((a + b).abs() < 1e-8);
        }
    }

    #[test]
    fn hilbert_rejects_atoms() {
        let m = GridMeasure::two_point(1.0).unwrap();
        assert!(hilbert_transform(&m, 1.0).is_err());
        assert!((hilbert_transform(&m, 0.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn log_energy_of_semicircle_and_uniform() {
        assert!((log_energy(&sc()) - 0.25).abs() < 1e-4);
        let u = GridMeasure::from_fn(0.0, 1.0, 400, |_| 1.0).unwrap();
        assert!((log_energy(&u) - 1.5).abs() < 1e-6);
        assert_eq!(log_energy(&GridMeasure::dirac(0.3).unwrap()), f64::INFINITY);
    }

    #[test]
    fn log_energy_translation_invariant() {
        let m = sc();
        assert!((log_energy(&m) - log_energy(&m.translate(3.7))).abs() < 1e-8);
    }

    #[test]
    fn w2_examples() {
        let m = sc();
        assert!(wasserstein2_sq(&m, &m) < 1e-28);
        assert!((wasserstein2_sq(&m, &m.translate(0.5)) - 0.25).abs() < 1e-12);
        let d0 = GridMeasure::dirac(0.0).unwrap();
        let d1 = GridMeasure::dirac(1.0).unwrap();
        assert!((wasserstein2_sq(&d0, &d1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn max_correlation_examples() {
        let m = sc();
        assert_eq!(max_correlation(&m, &GridMeasure::dirac(0.0).unwrap()), 0.0);
        assert!((max_correlation(&m, &m) - m.moment(2)).abs() < 1e-8);
        let tp = GridMeasure::two_point(1.0).unwrap();
        // ∫|x| d(semicircle) = 8 / (3π).
        assert!((max_correlation(&m, &tp) - 8.0 / (3.0 * PI)).abs() < 1e-6);
    }

    #[test]
    fn interpolation_endpoints_and_translation() {
        let m0 = sc();
        let m1 = GridMeasure::from_fn(-1.0, 3.0, 300, |x| (x + 1.0) * (3.0 - x)).unwrap();
        assert_eq!(displacement_interpolate(&m0, &m1, 0.0).unwrap(), m0);
        assert_eq!(displacement_interpolate(&m0, &m1, 1.0).unwrap(), m1);
        let half = displacement_interpolate(&m0, &m0.translate(1.0), 0.5).unwrap();
        assert!((half.mean() - 0.5).abs() < 1e-9);
        assert!(wasserstein2_sq(&half, &m0.translate(0.5)) < 1e-14);
        assert!(displacement_interpolate(&m0, &m1, 1.5).is_err());
        assert!(displacement_interpolate(&GridMeasure::dirac(0.0).unwrap(), &m1, 0.5).is_err());
    }

    #[test]
    fn interpolation_toward_atoms_opens_a_gap() {
        let m0 = sc();
        let tp = GridMeasure::two_point(1.0).unwrap();
        let mid = displacement_interpolate(&m0, &tp, 0.5).unwrap();
        assert!(mid.density_at(0.0) < 1e-6);
        assert!((mid.quantile(0.25).unwrap() - 0.5 * (m0.quantile(0.25).unwrap() - 1.0)).abs() < 1e-4);
    }
}
