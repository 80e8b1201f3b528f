//! Elements of `M ⊗ M^op` and square matrices over it.

use std::collections::BTreeMap;
use std::fmt;

use super::{add_term as accumulate, NCSeries, Word, MODULE};
use crate::error::{Error, Result};
use crate::sd::TraceTable;

/// `Σ c · a ⊗ b`, truncated at `|a| + |b| ≤ max_degree`.
///
/// Products follow `M ⊗ M^op`: `(a⊗b)(c⊗d) = ac ⊗ db`.
#[derive(Clone, PartialEq)]
pub struct TensorSeries {
    n_vars: usize,
    max_degree: usize,
    terms: BTreeMap<(Word, Word), f64>,
}

impl fmt::Debug for TensorSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TensorSeries(n={}, D={}; ", self.n_vars, self.max_degree)?;
        if self.terms.is_empty() {
            write!(f, "0")?;
        }
        for (k, ((a, b), c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}·{a}⊗{b}")?;
        }
        write!(f, ")")
    }
}

impl TensorSeries {
    pub fn zero(n_vars: usize, max_degree: usize) -> Self {
        TensorSeries { n_vars, max_degree, terms: BTreeMap::new() }
    }

    /// `c · 1⊗1`.
    pub fn scalar(n_vars: usize, max_degree: usize, c: f64) -> Self {
        let mut t = Self::zero(n_vars, max_degree);
        t.add_term(Word::empty(), Word::empty(), c);
        t
    }

    pub fn from_terms<I>(n_vars: usize, max_degree: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Word, Word, f64)>,
    {
        let mut t = Self::zero(n_vars, max_degree);
        for (a, b, c) in terms {
            if !c.is_finite() {
                return Err(Error::invalid(MODULE, format!("coefficient of {a}⊗{b} is not finite")));
            }
            if a.max_letter().max(b.max_letter()).is_some_and(|l| l as usize >= n_vars) {
                return Err(Error::invalid(MODULE, format!("tensor term {a}⊗{b} uses a variable out of range")));
            }
            t.add_term(a, b, c);
        }
        Ok(t)
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn terms(&self) -> &BTreeMap<(Word, Word), f64> {
        &self.terms
    }

    pub fn coeff(&self, a: &Word, b: &Word) -> f64 {
        self.terms.get(&(a.clone(), b.clone())).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Adds `c · a⊗b` unless it exceeds the degree bound.
    pub fn add_term(&mut self, a: Word, b: Word, c: f64) {
        if a.len() + b.len() <= self.max_degree {
            accumulate(&mut self.terms, (a, b), c);
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.n_vars, self.max_degree);
        for ((a, b), &c) in &self.terms {
            out.add_term(a.clone(), b.clone(), s * c);
        }
        out
    }

    pub fn axpy(&mut self, s: f64, other: &TensorSeries) {
        for ((a, b), &c) in &other.terms {
            self.add_term(a.clone(), b.clone(), s * c);
        }
    }

    /// Product in `M ⊗ M^op`, truncated at the smaller degree bound.
    pub fn multiply(&self, other: &TensorSeries) -> TensorSeries {
        let d = self.max_degree.min(other.max_degree);
        let mut out = Self::zero(self.n_vars, d);
        self.multiply_into(other, 1.0, &mut out);
        out
    }

    fn multiply_into(&self, other: &TensorSeries, s: f64, out: &mut TensorSeries) {
        let d = out.max_degree;
        for ((a, b), &c1) in &self.terms {
            let da = a.len() + b.len();
            if da > d {
                continue;
            }
            for ((c, e), &c2) in &other.terms {
                if da + c.len() + e.len() > d {
                    continue;
                }
                out.add_term(a.concat(c), e.concat(b), s * c1 * c2);
            }
        }
    }

    /// `(a⊗b) # f = a f b`.
    pub fn act(&self, f: &NCSeries, max_degree: usize) -> NCSeries {
        let mut out = NCSeries::zero(f.n_vars(), max_degree);
        for ((a, b), &c) in &self.terms {
            for (w, &cw) in f.terms() {
                let len = a.len() + w.len() + b.len();
                if len <= max_degree {
                    out.add_monomial(a.concat(w).concat(b), c * cw);
                }
            }
        }
        out
    }

    /// `Σ |c| A^{|a|} B^{|b|}`: `A` weighs left legs, `B` right legs.
    pub fn norm_ab(&self, a: f64, b: f64) -> f64 {
        self.terms
            .iter()
            .map(|((l, r), c)| c.abs() * a.powi(l.len() as i32) * b.powi(r.len() as i32))
            .fold(0.0, |s, v| s + v)
    }

    /// Odd total-degree coefficient mass.
    pub fn odd_mass(&self) -> f64 {
        self.terms
            .iter()
            .filter(|((a, b), _)| (a.len() + b.len()) % 2 == 1)
            .map(|(_, c)| c.abs())
            .fold(0.0, |s, v| s + v)
    }
}

/// Applies `1⊗τ + τ⊗1`: `a⊗b ↦ τ(b)·a + τ(a)·b`.
pub fn trace_contract(t: &TensorSeries, tau: &TraceTable) -> Result<NCSeries> {
    let mut out = NCSeries::zero(t.n_vars, t.max_degree);
    for ((a, b), &c) in &t.terms {
        let tb = tau.value(b)?;
        let ta = tau.value(a)?;
        out.add_monomial(a.clone(), c * tb);
        out.add_monomial(b.clone(), c * ta);
    }
    Ok(out)
}

/// `n × n` matrix of tensor series, row-major.
#[derive(Clone, PartialEq)]
pub struct MatrixTensor {
    n: usize,
    entries: Vec<TensorSeries>,
}

impl fmt::Debug for MatrixTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixTensor").field("n", &self.n).field("entries", &self.entries).finish()
    }
}

impl MatrixTensor {
    pub fn from_entries(n: usize, entries: Vec<TensorSeries>) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return Err(Error::invalid(MODULE, format!("a {n}×{n} matrix needs {} entries", n * n)));
        }
        let (nv, d) = (entries[0].n_vars, entries[0].max_degree);
        if entries.iter().any(|e| e.n_vars != nv || e.max_degree != d) {
            return Err(Error::invalid(MODULE, "matrix entries disagree on variables or degree bound"));
        }
        Ok(MatrixTensor { n, entries })
    }

    pub fn zero(n: usize, max_degree: usize) -> Self {
        MatrixTensor { n, entries: vec![TensorSeries::zero(n, max_degree); n * n] }
    }

    /// `1⊗1` on the diagonal.
    pub fn identity(n: usize, max_degree: usize) -> Self {
        let mut m = Self::zero(n, max_degree);
        for i in 0..n {
            m.entries[i * n + i] = TensorSeries::scalar(n, max_degree, 1.0);
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn max_degree(&self) -> usize {
        self.entries[0].max_degree
    }

    pub fn entry(&self, i: usize, j: usize) -> &TensorSeries {
        &self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[TensorSeries] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(TensorSeries::is_zero)
    }

    pub fn scale(&self, s: f64) -> Self {
        MatrixTensor { n: self.n, entries: self.entries.iter().map(|e| e.scale(s)).collect() }
    }

    pub fn axpy(&mut self, s: f64, other: &MatrixTensor) {
        for (e, o) in self.entries.iter_mut().zip(&other.entries) {
            e.axpy(s, o);
        }
    }

    /// Matrix product with entries multiplied in `M ⊗ M^op`.
    pub fn multiply(&self, other: &MatrixTensor) -> Result<MatrixTensor> {
        if self.n != other.n {
            return Err(Error::invalid(MODULE, "matrix sizes differ"));
        }
        let n = self.n;
        let d = self.max_degree().min(other.max_degree());
        let mut out = Self::zero(n, d);
        for i in 0..n {
            for j in 0..n {
                let mut acc = TensorSeries::zero(n, d);
                for k in 0..n {
                    self.entry(i, k).multiply_into(other.entry(k, j), 1.0, &mut acc);
                }
                out.entries[i * n + j] = acc;
            }
        }
        Ok(out)
    }

    /// Sum of the diagonal entries.
    pub fn trace(&self) -> TensorSeries {
        let mut t = TensorSeries::zero(self.n, self.max_degree());
        for i in 0..self.n {
            t.axpy(1.0, self.entry(i, i));
        }
        t
    }

    /// `(M·v)_i = Σ_j M_ij # v_j`.
    pub fn apply(&self, v: &[NCSeries], max_degree: usize) -> Result<Vec<NCSeries>> {
        if v.len() != self.n {
            return Err(Error::invalid(
                MODULE,
                format!("vector of length {} for a {}×{} matrix", v.len(), self.n, self.n),
            ));
        }
        Ok((0..self.n)
            .map(|i| {
                let mut out = NCSeries::zero(self.n, max_degree);
                for (j, vj) in v.iter().enumerate() {
                    out.axpy(1.0, &self.entry(i, j).act(vj, max_degree));
                }
                out
            })
            .collect())
    }

    /// Largest entry norm `‖·‖_{A⊗B}`.
    pub fn norm_ab(&self, a: f64, b: f64) -> f64 {
        self.entries.iter().map(|e| e.norm_ab(a, b)).fold(0.0, f64::max)
    }
}

/// `Σ_{k=1}^{order} (-1)^{k+1} m^k / k`.
pub fn log_neumann(m: &MatrixTensor, order: usize) -> MatrixTensor {
    let mut sum = MatrixTensor::zero(m.n, m.max_degree());
    let mut power = m.clone();
    for k in 1..=order {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sum.axpy(sign / k as f64, &power);
        if k < order {
            power = power.multiply(m).expect("same size");
            if power.is_zero() {
                break;
            }
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(l: &[u8]) -> Word {
        Word::new(l.to_vec())
    }

    #[test]
    fn op_product_reverses_right_legs() {
        let a = TensorSeries::from_terms(2, 6, [(w(&[0]), w(&[1]), 1.0)]).unwrap();
        let b = TensorSeries::from_terms(2, 6, [(w(&[1]), w(&[0]), 2.0)]).unwrap();
        let p = a.multiply(&b);
        assert_eq!(p.len(), 1);
        assert_eq!(p.coeff(&w(&[0, 1]), &w(&[0, 1])), 2.0);
        // Consistent with the action (a⊗b)#f = afb.
        let f = NCSeries::var(2, 6, 0).unwrap();
        assert_eq!(p.act(&f, 6), a.act(&b.act(&f, 6), 6));
    }

    #[test]
    fn log_of_scalar_matches_taylor() {
        let c = 0.3;
        let m = MatrixTensor::from_entries(1, vec![TensorSeries::scalar(1, 4, c)]).unwrap();
        for order in 1..8 {
            let l = log_neumann(&m, order);
            let want: f64 = (1..=order).map(|k| (-1f64).powi(k as i32 + 1) * c.powi(k as i32) / k as f64).sum();
            assert!((l.entry(0, 0).coeff(&w(&[]), &w(&[])) - want).abs() < 1e-15);
        }
        assert!(log_neumann(&MatrixTensor::zero(2, 4), 5).is_zero());
    }

    #[test]
    fn log_stabilises_for_positive_degree() {
        let t = TensorSeries::from_terms(1, 6, [(w(&[0]), w(&[0]), 0.5), (w(&[0, 0]), w(&[]), 0.25)]).unwrap();
        let m = MatrixTensor::from_entries(1, vec![t]).unwrap();
        assert_eq!(log_neumann(&m, 3), log_neumann(&m, 10));
        assert_ne!(log_neumann(&m, 2), log_neumann(&m, 3));
    }

    #[test]
    fn tensor_norm_weights_each_leg() {
        let t = TensorSeries::from_terms(2, 6, [(w(&[0, 1]), w(&[1]), -2.0)]).unwrap();
        assert_eq!(t.norm_ab(3.0, 5.0), 2.0 * 9.0 * 5.0);
    }

    #[test]
    fn contraction_with_semicircle_trace() {
        let tau = TraceTable::semicircular(1, 8, 3.0);
        let one = TensorSeries::scalar(1, 4, 1.0);
        assert_eq!(trace_contract(&one, &tau).unwrap(), NCSeries::constant(1, 4, 2.0));
        let xx = TensorSeries::from_terms(1, 4, [(w(&[0]), w(&[0]), 1.0)]).unwrap();
        assert!(trace_contract(&xx, &tau).unwrap().is_zero());
        let sq = TensorSeries::from_terms(1, 4, [(w(&[0, 0]), w(&[]), 1.0)]).unwrap();
        let want = NCSeries::from_terms(1, 4, [(w(&[0, 0]), 1.0), (w(&[]), 1.0)]).unwrap();
        assert_eq!(trace_contract(&sq, &tau).unwrap(), want);
        let small = TraceTable::semicircular(1, 1, 3.0);
        assert!(trace_contract(&sq, &small).is_err());
    }
}
