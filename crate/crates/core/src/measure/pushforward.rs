use super::{quantile_levels, wasserstein2_sq, GridMeasure, MODULE, QUANTILE_LEVELS};
use crate::error::{Error, Result};

/// A nondecreasing map of the real line.
pub trait MonotoneMap {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    /// Points where the map may be discontinuous.
    fn jumps(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// `Σ c_k x^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial { coeffs }
    }

    pub fn monomial(k: usize) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = 1.0;
        Polynomial { coeffs }
    }
}

impl MonotoneMap for Polynomial {
    fn value(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    fn derivative(&self, x: f64) -> f64 {
        self.coeffs.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
    }
}

/// `scale · sign(x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignMap {
    pub scale: f64,
}

impl MonotoneMap for SignMap {
    fn value(&self, x: f64) -> f64 {
        if x > 0.0 {
            self.scale
        } else if x < 0.0 {
            -self.scale
        } else {
            0.0
        }
    }

    fn derivative(&self, _x: f64) -> f64 {
        0.0
    }

    fn jumps(&self) -> Vec<f64> {
        vec![0.0]
    }
}

/// A map given by closures for the value and the derivative.
pub struct FnMap<F, G> {
    pub f: F,
    pub df: G,
}

impl<F: Fn(f64) -> f64, G: Fn(f64) -> f64> MonotoneMap for FnMap<F, G> {
    fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    fn derivative(&self, x: f64) -> f64 {
        (self.df)(x)
    }
}

/// Piecewise-linear interpolant of nondecreasing samples, held constant
/// outside the sampled range.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SampledMap {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl SampledMap {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::invalid(MODULE, "sampled map needs at least two matching samples"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(MODULE, "sample abscissae must be strictly increasing"));
        }
        if ys.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid(MODULE, "sampled map must be nondecreasing"));
        }
        Ok(SampledMap { xs, ys })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    fn cell(&self, x: f64) -> usize {
        self.xs.partition_point(|&t| t <= x).clamp(1, self.xs.len() - 1)
    }
}

impl MonotoneMap for SampledMap {
    fn value(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.cell(x);
        let t = (x - self.xs[i - 1]) / (self.xs[i] - self.xs[i - 1]);
        self.ys[i - 1] + t * (self.ys[i] - self.ys[i - 1])
    }

    fn derivative(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return 0.0;
        }
        let i = self.cell(x);
        (self.ys[i] - self.ys[i - 1]) / (self.xs[i] - self.xs[i - 1])
    }
}

fn one_sided(f: &dyn MonotoneMap, jumps: &[f64], x: f64, right: bool) -> (f64, f64) {
    if jumps.contains(&x) {
        let dx = 1e-12 * (1.0 + x.abs());
        let xe = if right { x + dx } else { x - dx };
        (f.value(xe), f.derivative(xe))
    } else {
        (f.value(x), f.derivative(x))
    }
}

/// Output node list that keeps abscissae strictly increasing and pins the
/// density to zero across gaps.
struct NodeSink {
    nodes: Vec<f64>,
    dens: Vec<f64>,
}

impl NodeSink {
    fn start(&mut self, y: f64, d: f64) {
        match self.nodes.last().copied() {
            Some(last) if y - last > 1e-13 * (1.0 + y.abs()) => {
                let eps = 1e-9 * (y - last);
                self.push(last + eps, 0.0);
                self.push(y - eps, 0.0);
                self.push(y, d);
            }
            Some(_) => {
                let k = self.dens.len() - 1;
                self.dens[k] = 0.5 * (self.dens[k] + d);
            }
            None => self.push(y, d),
        }
    }

    fn push(&mut self, y: f64, d: f64) {
        match self.nodes.last() {
            Some(&last) if y <= last => {
                let k = self.dens.len() - 1;
                self.dens[k] = self.dens[k].max(d);
            }
            _ => {
                self.nodes.push(y);
                self.dens.push(d);
            }
        }
    }
}

#[derive(Clone, Copy)]
struct CellEnd {
    x: f64,
    d: f64,
    y: f64,
    g: f64,
}

/// Image of one source cell with linear density between its ends. The
/// image density `ρ/f'` is sampled at both ends plus a midpoint whose value
/// restores the cell mass; when that value would be negative the source
/// cell is bisected instead.
fn emit_cell(
    sink: &mut NodeSink,
    atoms: &mut Vec<(f64, f64)>,
    f: &dyn MonotoneMap,
    (a, b): (CellEnd, CellEnd),
    yscale: f64,
    depth: u32,
) {
    let w = 0.5 * (b.x - a.x) * (a.d + b.d);
    let dy = b.y - a.y;
    if dy <= 1e-14 * yscale {
        atoms.push((a.y, w));
        return;
    }
    let fin = |d: f64, g: f64| if g > 0.0 && (d / g).is_finite() { Some(d / g) } else { None };
    let (e0, e1) = match (fin(a.d, a.g), fin(b.d, b.g)) {
        (Some(p), Some(q)) => (p, q),
        (Some(p), None) => (p, (2.0 * w / dy - p).max(0.0)),
        (None, Some(q)) => ((2.0 * w / dy - q).max(0.0), q),
        (None, None) => (w / dy, w / dy),
    };
    let xm = 0.5 * (a.x + b.x);
    let ym = f.value(xm);
    let trap = 0.5 * dy * (e0 + e1);
    let mut mid = None;
    if (trap - w).abs() > 1e-12 * w && ym > a.y && ym < b.y {
        let em = (2.0 * w - (ym - a.y) * e0 - (b.y - ym) * e1) / dy;
        if em < 0.0 && depth < 40 {
            let m = CellEnd { x: xm, d: 0.5 * (a.d + b.d), y: ym, g: f.derivative(xm) };
            emit_cell(sink, atoms, f, (a, m), yscale, depth + 1);
            emit_cell(sink, atoms, f, (m, b), yscale, depth + 1);
            return;
        }
        mid = Some(em.max(0.0));
    }
    sink.start(a.y, e0);
    if let Some(em) = mid {
        sink.push(ym, em);
    }
    sink.push(b.y, e1);
}

/// Law of `f(X)` for `X ~ m` and nondecreasing `f`.
///
/// Cells on which `f` is flat collapse to atoms; elsewhere the density at
/// the image of each node is `ρ(x) / f'(x)`. Each image cell also gets a
/// midpoint node whose density restores the exact cell mass (bisecting the
/// source cell where that needs a negative density), so the output CDF
/// agrees with the input CDF at every node image.
pub fn pushforward_monotone(m: &GridMeasure, f: &dyn MonotoneMap) -> Result<GridMeasure> {
    let jumps = f.jumps();
    let mut atoms: Vec<(f64, f64)> = m.atoms().iter().map(|&(x, w)| (f.value(x), w)).collect();

    // Refine the grid at jump points so no cell straddles a discontinuity.
    let mut nodes = m.nodes().to_vec();
    let mut dens = m.density().to_vec();
    for &j in &jumps {
        if nodes.len() >= 2 && j > nodes[0] && j < nodes[nodes.len() - 1] && !nodes.contains(&j) {
            let i = nodes.partition_point(|&t| t < j);
            let d = m.density_at(j);
            nodes.insert(i, j);
            dens.insert(i, d);
        }
    }

    let (lo, hi) = m.support();
    let yscale = 1.0 + f.value(lo).abs().max(f.value(hi).abs());
    let mut sink = NodeSink { nodes: Vec::new(), dens: Vec::new() };
    for i in 1..nodes.len() {
        let (x0, x1) = (nodes[i - 1], nodes[i]);
        let (d0, d1) = (dens[i - 1], dens[i]);
        let w = 0.5 * (x1 - x0) * (d0 + d1);
        let (y0, g0) = one_sided(f, &jumps, x0, true);
        let (y1, g1) = one_sided(f, &jumps, x1, false);
        let ymid = f.value(0.5 * (x0 + x1));
        let tol = 1e-12 * yscale;
        if y1 < y0 - tol || ymid < y0 - tol || y1 < ymid - tol {
            return Err(Error::invalid(MODULE, format!("map is decreasing on [{x0}, {x1}]")));
        }
        if w <= 0.0 {
            continue;
        }
        let ends = (CellEnd { x: x0, d: d0, y: y0, g: g0 }, CellEnd { x: x1, d: d1, y: y1, g: g1 });
        emit_cell(&mut sink, &mut atoms, f, ends, yscale, 0);
    }

    if sink.nodes.len() < 2 {
        // Whatever continuous mass survived is concentrated at a point.
        let cont: f64 = m.cell_masses().iter().sum();
        if sink.nodes.len() == 1 && cont > 0.0 && atoms.iter().map(|a| a.1).sum::<f64>() < 1.0 - 1e-12 {
            atoms.push((sink.nodes[0], cont));
        }
        return GridMeasure::atomic(atoms);
    }
    GridMeasure::mixed(sink.nodes, sink.dens, atoms)
}

/// The comonotone coupling between two measures, recorded on the stored
/// quantile levels.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlanDiag {
    pub source: GridMeasure,
    pub target: GridMeasure,
    /// `f(Q_source(s_k))` for the monotone map `f` with `f_# source = target`.
    pub map_values: Vec<f64>,
}

impl TransportPlanDiag {
    pub fn comonotone(source: GridMeasure, target: GridMeasure) -> Self {
        let map_values = quantile_levels(QUANTILE_LEVELS).iter().map(|&s| target.quantile_raw(s)).collect();
        TransportPlanDiag { source, target, map_values }
    }

    /// The map sampled at the source quantiles and support endpoints, with
    /// repeated abscissae (atoms of the source) dropped.
    pub fn sampled_map(&self) -> Result<SampledMap> {
        let (a, b) = self.source.support();
        let (c, d) = self.target.support();
        let xs_all = std::iter::once(a).chain(self.source.quantiles().iter().copied()).chain([b]);
        let ys_all = std::iter::once(c).chain(self.map_values.iter().copied()).chain([d]);
        let mut xs = Vec::with_capacity(self.map_values.len() + 2);
        let mut ys = Vec::with_capacity(self.map_values.len() + 2);
        for (x, y) in xs_all.zip(ys_all) {
            if xs.last().is_none_or(|&l| x > l) {
                xs.push(x);
                ys.push(y);
            }
        }
        SampledMap::new(xs, ys)
    }

    /// `W₂²` between the pushforward of the source under the sampled map and
    /// the target.
    pub fn pushforward_error(&self) -> Result<f64> {
        let pushed = pushforward_monotone(&self.source, &self.sampled_map()?)?;
        Ok(wasserstein2_sq(&pushed, &self.target))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_a_no_op() {
        let m = GridMeasure::semicircle(2.0).unwrap();
        let p = pushforward_monotone(&m, &Polynomial::monomial(1)).unwrap();
        assert_eq!(p.nodes(), m.nodes());
        for (a, b) in p.density().iter().zip(m.density()) {
            assert!((a - b).abs() <= 1e-15 * (1.0 + b));
        }
    }

    #[test]
    fn sign_map_makes_two_atoms() {
        let m = GridMeasure::semicircle(2.0).unwrap();
        let p = pushforward_monotone(&m, &SignMap { scale: 0.5 }).unwrap();
        assert_eq!(p.atoms().len(), 2);
        assert!(p.nodes().is_empty());
        assert!((p.atoms()[0].0 + 0.5).abs() < 1e-15 && (p.atoms()[0].1 - 0.5).abs() < 1e-12);
        assert!((p.atoms()[1].0 - 0.5).abs() < 1e-15 && (p.atoms()[1].1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_decreasing_maps() {
        let m = GridMeasure::semicircle(2.0).unwrap();
        assert!(pushforward_monotone(&m, &Polynomial::new(vec![0.0, -1.0])).is_err());
        assert!(pushforward_monotone(&m, &Polynomial::monomial(2)).is_err());
    }

    #[test]
    fn cube_preserves_quantiles() {
        let m = GridMeasure::semicircle(2.0).unwrap();
        let p = pushforward_monotone(&m, &Polynomial::monomial(3)).unwrap();
        assert!((p.mass() - 1.0).abs() < 1e-12);
        for k in 1..20 {
            let s = k as f64 / 20.0;
            let q = m.quantile(s).unwrap().powi(3);
            assert!(
                (p.quantile(s).unwrap() - q).abs() < 1e-4,
                "s={s} {} {q} mass={} n={}",
                p.quantile(s).unwrap(),
                p.mass(),
                p.nodes().len()
            );
        }
    }

    #[test]
    fn comonotone_plan_between_translates() {
        let m = GridMeasure::semicircle(2.0).unwrap();
        let plan = TransportPlanDiag::comonotone(m.clone(), m.translate(1.0));
        for (x, y) in m.quantiles().iter().zip(&plan.map_values) {
            assert!((y - x - 1.0).abs() < 1e-12);
        }
        assert!(plan.pushforward_error().unwrap() < 1e-8);
    }
}
