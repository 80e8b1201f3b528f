//! Compactly supported probability measures on the real line.
//!
//! A [`GridMeasure`] carries an absolutely continuous part, stored as a
//! piecewise-linear density on a node grid, and/or a list of exact atoms.
//! Everything that needs a quantile function goes through [`Piece`]s, which
//! split `[0, 1]` into atom intervals (constant quantile) and cell intervals
//! (inverse of a quadratic CDF).

mod functionals;
mod io;
mod pushforward;

pub use functionals::{displacement_interpolate, hilbert_transform, log_energy, max_correlation, wasserstein2_sq};
pub use io::MeasureJson;
pub use pushforward::{pushforward_monotone, FnMap, MonotoneMap, Polynomial, SampledMap, SignMap, TransportPlanDiag};

use crate::error::{Error, Result};

pub(crate) const MODULE: &str = "measure1d";

/// Default number of uniform quantile levels stored with each measure.
pub const QUANTILE_LEVELS: usize = 1024;
/// Default node count for densities sampled on Chebyshev grids.
pub const DEFAULT_NODES: usize = 2048;

const MASS_TOL: f64 = 1e-10;
const QUANTILE_TOL: f64 = 1e-8;

/// One monotone piece of the quantile function on `[s0, s1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Piece {
    Atom { s0: f64, s1: f64, x: f64 },
    Cell { s0: f64, s1: f64, x0: f64, x1: f64, d0: f64, d1: f64 },
}

impl Piece {
    pub(crate) fn s_range(&self) -> (f64, f64) {
        match *self {
            Piece::Atom { s0, s1, .. } | Piece::Cell { s0, s1, .. } => (s0, s1),
        }
    }

    /// Quantile at level `s`, assumed to lie in (or very near) this piece.
    pub(crate) fn eval(&self, s: f64) -> f64 {
        match *self {
            Piece::Atom { x, .. } => x,
            Piece::Cell { s0, x0, x1, d0, d1, .. } => {
                let h = x1 - x0;
                let c = (s - s0).max(0.0);
                let a = (d1 - d0) / (2.0 * h);
                let disc = (d0 * d0 + 4.0 * a * c).max(0.0);
                let denom = d0 + disc.sqrt();
                let y = if denom > 0.0 { 2.0 * c / denom } else { 0.0 };
                x0 + y.clamp(0.0, h)
            }
        }
    }

    /// ds/dQ at level `s`, i.e. the density seen by the quantile function.
    /// Atoms report zero width, so the reciprocal is infinite.
    pub(crate) fn density_at(&self, s: f64) -> f64 {
        match *self {
            Piece::Atom { .. } => f64::INFINITY,
            Piece::Cell { x0, x1, d0, d1, .. } => {
                let x = self.eval(s);
                let h = x1 - x0;
                d0 + (d1 - d0) * (x - x0) / h
            }
        }
    }
}

/// A probability measure on a compact interval.
///
/// Serialised through [`MeasureJson`]; reading validates but never rewrites
/// the stored values.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMeasure {
    support: (f64, f64),
    nodes: Vec<f64>,
    density: Vec<f64>,
    atoms: Vec<(f64, f64)>,
    quantiles: Vec<f64>,
    mixed: bool,
    cum: Vec<f64>,
    pieces: Vec<Piece>,
}

/// Uniform quantile levels `s_k = (k + 1/2) / n`.
pub fn quantile_levels(n: usize) -> Vec<f64> {
    (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect()
}

/// `n` Chebyshev-Lobatto points on `[a, b]`, endpoints included exactly.
pub fn chebyshev_nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && b > a);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut x: Vec<f64> =
        (0..n).map(|j| mid - half * (std::f64::consts::PI * j as f64 / (n - 1) as f64).cos()).collect();
    x[0] = a;
    x[n - 1] = b;
    x
}

fn trapezoid_cells(nodes: &[f64], density: &[f64]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(nodes.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for i in 1..nodes.len() {
        acc += 0.5 * (nodes[i] - nodes[i - 1]) * (density[i] + density[i - 1]);
        cum.push(acc);
    }
    cum
}

fn check_grid(nodes: &[f64], density: &[f64]) -> Result<()> {
    if nodes.len() != density.len() {
        return Err(Error::invalid(MODULE, "nodes and density have different lengths"));
    }
    if nodes.len() == 1 {
        return Err(Error::invalid(MODULE, "a density needs at least two nodes"));
    }
    if nodes.iter().chain(density).any(|v| !v.is_finite()) {
        return Err(Error::invalid(MODULE, "non-finite node or density value"));
    }
    if nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(MODULE, "nodes must be strictly increasing"));
    }
    if density.iter().any(|&d| d < 0.0) {
        return Err(Error::invalid(MODULE, "density must be nonnegative"));
    }
    Ok(())
}

fn normalize_atoms(mut atoms: Vec<(f64, f64)>) -> Result<Vec<(f64, f64)>> {
    if atoms.iter().any(|&(x, m)| !x.is_finite() || !m.is_finite() || m < 0.0) {
        return Err(Error::invalid(MODULE, "atoms need finite locations and nonnegative masses"));
    }
    atoms.retain(|&(_, m)| m > 0.0);
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for (x, m) in atoms {
        match merged.last_mut() {
            Some(last) if last.0 == x => last.1 += m,
            _ => merged.push((x, m)),
        }
    }
    Ok(merged)
}

impl GridMeasure {
    /// Absolutely continuous measure from density samples; the density is
    /// rescaled so that its trapezoid mass is exactly one.
    pub fn from_density(nodes: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        Self::mixed(nodes, density, Vec::new())
    }

    /// Samples `f` on `n` Chebyshev nodes of `[a, b]` and normalises.
    pub fn from_fn(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !(b > a) || n < 2 {
            return Err(Error::invalid(MODULE, "need a nondegenerate interval and at least two nodes"));
        }
        let nodes = chebyshev_nodes(a, b, n);
        let density = nodes.iter().map(|&x| f(x).max(0.0)).collect();
        Self::from_density(nodes, density)
    }

    /// Purely atomic measure; masses are rescaled to sum to one.
    pub fn atomic(atoms: Vec<(f64, f64)>) -> Result<Self> {
        Self::mixed(Vec::new(), Vec::new(), atoms)
    }

    /// Density plus atoms, jointly rescaled to total mass one.
    pub fn mixed(nodes: Vec<f64>, mut density: Vec<f64>, atoms: Vec<(f64, f64)>) -> Result<Self> {
        if !nodes.is_empty() {
            check_grid(&nodes, &density)?;
        }
        let mut atoms = normalize_atoms(atoms)?;
        let cont = if nodes.is_empty() { 0.0 } else { *trapezoid_cells(&nodes, &density).last().unwrap() };
        let atom_mass: f64 = atoms.iter().map(|a| a.1).sum();
        let total = cont + atom_mass;
        if !(total > 0.0) {
            return Err(Error::invalid(MODULE, "measure has zero total mass"));
        }
        density.iter_mut().for_each(|d| *d /= total);
        atoms.iter_mut().for_each(|a| a.1 /= total);
        let (nodes, density) = if cont > 0.0 { (nodes, density) } else { (Vec::new(), Vec::new()) };
        let mixed = !nodes.is_empty() && !atoms.is_empty();
        Self::assemble(nodes, density, atoms, mixed, None)
    }

    /// Builds a measure from stored parts without modifying any value. An
    /// empty quantile table is derived from the rest.
    pub fn from_parts(
        support: (f64, f64),
        nodes: Vec<f64>,
        density: Vec<f64>,
        atoms: Vec<(f64, f64)>,
        quantiles: Vec<f64>,
        mixed: bool,
    ) -> Result<Self> {
        if !nodes.is_empty() {
            check_grid(&nodes, &density)?;
        } else if !density.is_empty() {
            return Err(Error::invalid(MODULE, "density given without nodes"));
        }
        if atoms.iter().any(|&(x, m)| !x.is_finite() || !(m > 0.0) || !m.is_finite()) {
            return Err(Error::invalid(MODULE, "atoms need finite locations and positive masses"));
        }
        if atoms.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid(MODULE, "atoms must be sorted by strictly increasing location"));
        }
        if !nodes.is_empty() && !atoms.is_empty() && !mixed {
            return Err(Error::invalid(MODULE, "density and atoms both present but measure not flagged mixed"));
        }
        let quantiles = if quantiles.is_empty() { None } else { Some(quantiles) };
        let m = Self::assemble(nodes, density, atoms, mixed, quantiles)?;
        let (a, b) = support;
        if !(a <= m.support.0 && b >= m.support.1) {
            return Err(Error::invalid(MODULE, "support does not contain the nodes and atoms"));
        }
        Ok(GridMeasure { support, ..m })
    }

    fn assemble(
        nodes: Vec<f64>,
        density: Vec<f64>,
        atoms: Vec<(f64, f64)>,
        mixed: bool,
        quantiles: Option<Vec<f64>>,
    ) -> Result<Self> {
        if nodes.is_empty() && atoms.is_empty() {
            return Err(Error::invalid(MODULE, "empty measure"));
        }
        let cum = if nodes.is_empty() { Vec::new() } else { trapezoid_cells(&nodes, &density) };
        let cont = cum.last().copied().unwrap_or(0.0);
        let total = cont + atoms.iter().map(|a| a.1).sum::<f64>();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(MODULE, format!("total mass {total} differs from 1")));
        }
        let lo = nodes.first().copied().into_iter().chain(atoms.first().map(|a| a.0));
        let hi = nodes.last().copied().into_iter().chain(atoms.last().map(|a| a.0));
        let support = (lo.fold(f64::INFINITY, f64::min), hi.fold(f64::NEG_INFINITY, f64::max));
        let pieces = build_pieces(&nodes, &density, &atoms);
        let mut m = GridMeasure { support, nodes, density, atoms, quantiles: Vec::new(), mixed, cum, pieces };
        let computed: Vec<f64> = quantile_levels(QUANTILE_LEVELS).iter().map(|&s| m.quantile_raw(s)).collect();
        m.quantiles = match quantiles {
            None => computed,
            Some(q) => {
                if q.len() != QUANTILE_LEVELS {
                    return Err(Error::invalid(
                        MODULE,
                        format!("expected {QUANTILE_LEVELS} quantiles, got {}", q.len()),
                    ));
                }
                if q.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::invalid(MODULE, "quantiles must be nondecreasing"));
                }
                let scale = 1.0f64.max(support.1 - support.0);
                if q.iter().zip(&computed).any(|(a, b)| (a - b).abs() > QUANTILE_TOL * scale) {
                    return Err(Error::invalid(MODULE, "quantiles inconsistent with the density CDF"));
                }
                q
            }
        };
        Ok(m)
    }

    /// Semicircle law of the given radius.
    pub fn semicircle(radius: f64) -> Result<Self> {
        let r2 = radius * radius;
        Self::from_fn(-radius, radius, DEFAULT_NODES, |x| (r2 - x * x).max(0.0).sqrt())
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        Self::from_density(vec![a, b], vec![1.0, 1.0])
    }

    pub fn dirac(c: f64) -> Result<Self> {
        Self::atomic(vec![(c, 1.0)])
    }

    /// `½δ₋ₐ + ½δₐ`.
    pub fn two_point(a: f64) -> Result<Self> {
        Self::atomic(vec![(-a, 0.5), (a, 0.5)])
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn quantiles(&self) -> &[f64] {
        &self.quantiles
    }

    pub fn is_mixed(&self) -> bool {
        self.mixed
    }

    pub fn has_atoms(&self) -> bool {
        !self.atoms.is_empty()
    }

    pub(crate) fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Mass of the continuous part of each cell.
    pub fn cell_masses(&self) -> Vec<f64> {
        self.cum.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Total mass: trapezoid mass of the density plus atom masses.
    pub fn mass(&self) -> f64 {
        self.cum.last().copied().unwrap_or(0.0) + self.atoms.iter().map(|a| a.1).sum::<f64>()
    }

    /// `∫ x^k dm` plus the exact atom sum.
    ///
    /// Each cell integrates `x^k` against the linear density exactly (up to
    /// degree 14), so `k = 0` is the trapezoid mass and the moments agree
    /// with quantile-side integrals of the same model.
    pub fn moment(&self, k: u32) -> f64 {
        self.expectation(|x| x.powi(k as i32))
    }

    /// `∫ g dm`, with 8-point Gauss-Legendre on each cell of the piecewise
    /// linear density and the exact atom sum.
    pub fn expectation(&self, g: impl Fn(f64) -> f64) -> f64 {
        let cont: f64 = (1..self.nodes.len())
            .map(|i| {
                let (a, b) = (self.nodes[i - 1], self.nodes[i]);
                let (da, db) = (self.density[i - 1], self.density[i]);
                let half = 0.5 * (b - a);
                let acc: f64 = GAUSS8
                    .iter()
                    .map(|&(t, w)| {
                        let f = 0.5 * (1.0 + t);
                        w * g(a + (b - a) * f) * (da + (db - da) * f)
                    })
                    .sum();
                half * acc
            })
            .sum();
        cont + self.atoms.iter().map(|&(x, m)| m * g(x)).sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    /// Interpolated density of the continuous part; zero off the grid.
    pub fn density_at(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        if n == 0 || x < self.nodes[0] || x > self.nodes[n - 1] {
            return 0.0;
        }
        let i = self.nodes.partition_point(|&t| t <= x).clamp(1, n - 1);
        let (x0, x1) = (self.nodes[i - 1], self.nodes[i]);
        let (d0, d1) = (self.density[i - 1], self.density[i]);
        d0 + (d1 - d0) * (x - x0) / (x1 - x0)
    }

    /// `m((-∞, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().take_while(|a| a.0 <= x).map(|a| a.1).sum();
        let n = self.nodes.len();
        if n == 0 || x <= self.nodes[0] {
            return atoms;
        }
        if x >= self.nodes[n - 1] {
            return atoms + self.cum[n - 1];
        }
        let i = self.nodes.partition_point(|&t| t <= x);
        let (x0, x1) = (self.nodes[i - 1], self.nodes[i]);
        let (d0, d1) = (self.density[i - 1], self.density[i]);
        let y = x - x0;
        atoms + self.cum[i - 1] + d0 * y + 0.5 * (d1 - d0) / (x1 - x0) * y * y
    }

    /// Generalised inverse CDF at `s ∈ (0, 1)`.
    pub fn quantile(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::invalid(MODULE, format!("quantile level {s} outside (0,1)")));
        }
        Ok(self.quantile_raw(s))
    }

    pub(crate) fn piece_index(&self, s: f64) -> usize {
        let i = self.pieces.partition_point(|p| p.s_range().1 < s);
        i.min(self.pieces.len() - 1)
    }

    /// Quantile with `s` clamped to `[0, 1]`; the ends give the extreme
    /// support points.
    pub fn quantile_raw(&self, s: f64) -> f64 {
        self.pieces[self.piece_index(s)].eval(s)
    }

    /// `m ∫ Q(s) ds` over each of the cells `((k-1)/m, k/m)`, `k = 1..=m`.
    pub fn quantile_cell_averages(&self, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; m];
        let mut breaks: Vec<f64> = (0..=m).map(|k| k as f64 / m as f64).collect();
        breaks.extend(self.pieces.iter().map(|p| p.s_range().1.clamp(0.0, 1.0)));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let mut pi = 0;
        for w in breaks.windows(2) {
            let (u, v) = (w[0], w[1]);
            if v <= u {
                continue;
            }
            let mid = 0.5 * (u + v);
            while pi + 1 < self.pieces.len() && self.pieces[pi].s_range().1 < mid {
                pi += 1;
            }
            let p = self.pieces[pi];
            let half = 0.5 * (v - u);
            let integral: f64 = half * GAUSS8.iter().map(|&(t, wt)| wt * p.eval(mid + half * t)).sum::<f64>();
            let k = ((mid * m as f64) as usize).min(m - 1);
            out[k] += integral;
        }
        out.iter_mut().for_each(|v| *v *= m as f64);
        out
    }

    /// Law of `X + c`.
    pub fn translate(&self, c: f64) -> Self {
        let shift = |v: &[f64]| v.iter().map(|x| x + c).collect::<Vec<_>>();
        let nodes = shift(&self.nodes);
        let atoms: Vec<(f64, f64)> = self.atoms.iter().map(|&(x, m)| (x + c, m)).collect();
        let pieces = build_pieces(&nodes, &self.density, &atoms);
        GridMeasure {
            support: (self.support.0 + c, self.support.1 + c),
            nodes,
            density: self.density.clone(),
            atoms,
            quantiles: shift(&self.quantiles),
            mixed: self.mixed,
            cum: self.cum.clone(),
            pieces,
        }
    }

    /// Law of `X - E[X]`.
    pub fn centered(&self) -> Self {
        self.translate(-self.mean())
    }

    /// Law of `cX` for `c > 0`.
    pub fn dilate(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::invalid(MODULE, "dilation factor must be positive"));
        }
        let nodes = self.nodes.iter().map(|x| c * x).collect();
        let density = self.density.iter().map(|d| d / c).collect();
        let atoms = self.atoms.iter().map(|&(x, m)| (c * x, m)).collect();
        Self::assemble(nodes, density, atoms, self.mixed, None)
    }
}

/// Splits the measure into quantile pieces, cutting cells at interior atoms.
fn build_pieces(nodes: &[f64], density: &[f64], atoms: &[(f64, f64)]) -> Vec<Piece> {
    let mut out = Vec::with_capacity(nodes.len() + atoms.len());
    let mut s = 0.0;
    let mut ai = 0;
    let push_atom = |out: &mut Vec<Piece>, s: &mut f64, (x, m): (f64, f64)| {
        out.push(Piece::Atom { s0: *s, s1: *s + m, x });
        *s += m;
    };
    let push_cell = |out: &mut Vec<Piece>, s: &mut f64, x0: f64, x1: f64, d0: f64, d1: f64| {
        let m = 0.5 * (x1 - x0) * (d0 + d1);
        if m > 0.0 {
            out.push(Piece::Cell { s0: *s, s1: *s + m, x0, x1, d0, d1 });
            *s += m;
        }
    };
    for i in 1..nodes.len() {
        let (mut x0, x1) = (nodes[i - 1], nodes[i]);
        let (mut d0, d1) = (density[i - 1], density[i]);
        while ai < atoms.len() && atoms[ai].0 <= x0 {
            push_atom(&mut out, &mut s, atoms[ai]);
            ai += 1;
        }
        while ai < atoms.len() && atoms[ai].0 < x1 {
            let xa = atoms[ai].0;
            let da = d0 + (d1 - d0) * (xa - x0) / (x1 - x0);
            push_cell(&mut out, &mut s, x0, xa, d0, da);
            push_atom(&mut out, &mut s, atoms[ai]);
            ai += 1;
            x0 = xa;
            d0 = da;
        }
        push_cell(&mut out, &mut s, x0, x1, d0, d1);
    }
    while ai < atoms.len() {
        push_atom(&mut out, &mut s, atoms[ai]);
        ai += 1;
    }
    out
}

/// 8-point Gauss-Legendre rule on `[-1, 1]`.
#[allow(clippy::excessive_precision)]
pub(crate) const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

/// `∫₀¹ g(Q₁(s), Q₂(s)) ds`, integrating piecewise over the merged quantile
/// breakpoints of both measures.
pub(crate) fn integrate_quantile_pair(m1: &GridMeasure, m2: &GridMeasure, g: impl Fn(f64, f64) -> f64) -> f64 {
    let mut breaks: Vec<f64> = Vec::with_capacity(m1.pieces.len() + m2.pieces.len() + 2);
    breaks.push(0.0);
    breaks.extend(m1.pieces.iter().map(|p| p.s_range().1));
    breaks.extend(m2.pieces.iter().map(|p| p.s_range().1));
    breaks.push(1.0);
    breaks.iter_mut().for_each(|b| *b = b.clamp(0.0, 1.0));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let (mut i, mut j) = (0usize, 0usize);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (u, v) = (w[0], w[1]);
        if v <= u {
            continue;
        }
        let mid = 0.5 * (u + v);
        while i + 1 < m1.pieces.len() && m1.pieces[i].s_range().1 < mid {
            i += 1;
        }
        while j + 1 < m2.pieces.len() && m2.pieces[j].s_range().1 < mid {
            j += 1;
        }
        let (p1, p2) = (m1.pieces[i], m2.pieces[j]);
        let half = 0.5 * (v - u);
        let mut acc = 0.0;
        for &(t, wt) in &GAUSS8 {
            let s = mid + half * t;
            acc += wt * g(p1.eval(s), p2.eval(s));
        }
        total += half * acc;
    }
    total
}
