//! Noncommutative power series in `n` self-adjoint indeterminates.
//!
//! Series are sparse maps from words to real coefficients, hard-truncated at
//! a maximal degree. Letters are 0-based internally and 1-based in JSON.

mod io;
mod tensor;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

pub use tensor::{log_neumann, trace_contract, MatrixTensor, TensorSeries};

use crate::error::{Error, Result};

pub(crate) const MODULE: &str = "nc_series";

/// Default truncation degree.
pub const DEFAULT_DEGREE: usize = 12;

/// A monomial `x_{i₁} ⋯ x_{i_k}`; the empty word is `1`.
///
/// Words order by length first, then lexicographically.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn new(letters: Vec<u8>) -> Self {
        Word(letters)
    }

    /// From 1-based variable indices.
    pub fn from_one_based(letters: &[usize]) -> Result<Self> {
        letters
            .iter()
            .map(|&l| {
                if l == 0 || l > u8::MAX as usize + 1 {
                    Err(Error::invalid(MODULE, format!("variable index {l} out of range")))
                } else {
                    Ok((l - 1) as u8)
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Word)
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|&l| l as usize + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = Vec::with_capacity(self.len() + other.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn reversed(&self) -> Word {
        Word(self.0.iter().rev().copied().collect())
    }

    /// `w_{k} ⋯ w_{n} w_{1} ⋯ w_{k-1}`.
    pub fn rotated(&self, k: usize) -> Word {
        let k = if self.is_empty() { 0 } else { k % self.len() };
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.0[k..]);
        v.extend_from_slice(&self.0[..k]);
        Word(v)
    }

    /// Smallest rotation of the word or of its reversal: one representative
    /// per class of words with equal trace.
    pub fn canonical_bracelet(&self) -> Word {
        let n = self.len();
        if n <= 1 {
            return self.clone();
        }
        let rev: Vec<u8> = self.0.iter().rev().copied().collect();
        let mut best: Option<Vec<u8>> = None;
        for src in [&self.0, &rev] {
            for k in 0..n {
                let better = match &best {
                    None => true,
                    Some(b) => src[k..].iter().chain(&src[..k]).lt(b.iter()),
                };
                if better {
                    best = Some(src[k..].iter().chain(&src[..k]).copied().collect());
                }
            }
        }
        Word(best.unwrap_or_default())
    }

    pub fn max_letter(&self) -> Option<u8> {
        self.0.iter().copied().max()
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.len().cmp(&other.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "1");
        }
        for (k, l) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, "·")?;
            }
            write!(f, "x{}", l + 1)?;
        }
        Ok(())
    }
}

/// Linear operators acting diagonally on monomials.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymOp {
    /// Cyclic symmetrisation: average over rotations.
    S,
    /// Number operator: multiply a monomial by its degree.
    N,
    /// Inverse of `N` on series without constant term.
    Sigma,
    /// Projection killing the constant term.
    Pi,
}

/// `Σ_w c_w w`, truncated at `max_degree`.
#[derive(Clone, PartialEq)]
pub struct NCSeries {
    n_vars: usize,
    max_degree: usize,
    terms: BTreeMap<Word, f64>,
}

impl fmt::Debug for NCSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NCSeries(n={}, D={}; ", self.n_vars, self.max_degree)?;
        if self.terms.is_empty() {
            write!(f, "0")?;
        }
        for (k, (w, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}·{w}")?;
        }
        write!(f, ")")
    }
}

pub(crate) fn add_term<K: Ord>(terms: &mut BTreeMap<K, f64>, key: K, c: f64) {
    if c == 0.0 {
        return;
    }
    match terms.entry(key) {
        std::collections::btree_map::Entry::Vacant(e) => {
            e.insert(c);
        }
        std::collections::btree_map::Entry::Occupied(mut e) => {
            let v = *e.get() + c;
            if v == 0.0 {
                e.remove();
            } else {
                *e.get_mut() = v;
            }
        }
    }
}

impl NCSeries {
    pub fn zero(n_vars: usize, max_degree: usize) -> Self {
        NCSeries { n_vars, max_degree, terms: BTreeMap::new() }
    }

    pub fn constant(n_vars: usize, max_degree: usize, c: f64) -> Self {
        let mut s = Self::zero(n_vars, max_degree);
        add_term(&mut s.terms, Word::empty(), c);
        s
    }

    /// The indeterminate `x_i` (0-based).
    pub fn var(n_vars: usize, max_degree: usize, i: usize) -> Result<Self> {
        Self::monomial(n_vars, max_degree, Word::new(vec![i as u8]), 1.0)
    }

    /// `(x₁, …, x_n)`.
    pub fn identity_vars(n_vars: usize, max_degree: usize) -> Vec<Self> {
        (0..n_vars)
            .map(|i| {
                let mut s = Self::zero(n_vars, max_degree);
                if max_degree >= 1 {
                    s.terms.insert(Word::new(vec![i as u8]), 1.0);
                }
                s
            })
            .collect()
    }

    pub fn monomial(n_vars: usize, max_degree: usize, word: Word, c: f64) -> Result<Self> {
        Self::from_terms(n_vars, max_degree, [(word, c)])
    }

    /// Collects terms, summing repeated words. Words above `max_degree` are
    /// dropped.
    pub fn from_terms<I>(n_vars: usize, max_degree: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Word, f64)>,
    {
        if n_vars == 0 {
            return Err(Error::invalid(MODULE, "a series needs at least one variable"));
        }
        let mut s = Self::zero(n_vars, max_degree);
        for (w, c) in terms {
            if !c.is_finite() {
                return Err(Error::invalid(MODULE, format!("coefficient of {w} is not finite")));
            }
            if let Some(l) = w.max_letter() {
                if l as usize >= n_vars {
                    return Err(Error::invalid(
                        MODULE,
                        format!("word {w} uses variable {} but the series has {n_vars}", l as usize + 1),
                    ));
                }
            }
            if w.len() <= max_degree {
                add_term(&mut s.terms, w, c);
            }
        }
        Ok(s)
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn terms(&self) -> &BTreeMap<Word, f64> {
        &self.terms
    }

    pub fn coeff(&self, w: &Word) -> f64 {
        self.terms.get(w).copied().unwrap_or(0.0)
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

    /// Length of the longest word present; 0 for the zero series.
    pub fn degree(&self) -> usize {
        self.terms.keys().next_back().map_or(0, Word::len)
    }

    pub fn constant_term(&self) -> f64 {
        self.coeff(&Word::empty())
    }

    /// Re-truncates (or raises the bound without adding terms).
    pub fn with_max_degree(&self, max_degree: usize) -> Self {
        NCSeries {
            n_vars: self.n_vars,
            max_degree,
            terms: self.terms.iter().filter(|(w, _)| w.len() <= max_degree).map(|(w, &c)| (w.clone(), c)).collect(),
        }
    }

    /// Terms of degree exactly `d`.
    pub fn homogeneous_part(&self, d: usize) -> Self {
        NCSeries {
            n_vars: self.n_vars,
            max_degree: self.max_degree,
            terms: self.terms.iter().filter(|(w, _)| w.len() == d).map(|(w, &c)| (w.clone(), c)).collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        let mut s = Self::zero(self.n_vars, self.max_degree);
        for (w, &c) in &self.terms {
            add_term(&mut s.terms, w.clone(), a * c);
        }
        s
    }

    /// `self += a·other`, keeping `self`'s degree bound.
    pub fn axpy(&mut self, a: f64, other: &NCSeries) {
        assert_eq!(self.n_vars, other.n_vars, "series over different numbers of variables");
        for (w, &c) in &other.terms {
            if w.len() <= self.max_degree {
                add_term(&mut self.terms, w.clone(), a * c);
            }
        }
    }

    pub(crate) fn add_monomial(&mut self, w: Word, c: f64) {
        if w.len() <= self.max_degree {
            add_term(&mut self.terms, w, c);
        }
    }

    fn check_same_vars(&self, other: &NCSeries) -> Result<()> {
        if self.n_vars != other.n_vars {
            return Err(Error::invalid(
                MODULE,
                format!("series over {} and {} variables cannot be combined", self.n_vars, other.n_vars),
            ));
        }
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n_vars {
            return Err(Error::invalid(MODULE, format!("variable index {} out of range 1..={}", i + 1, self.n_vars)));
        }
        Ok(())
    }

    /// Concatenation product truncated at the smaller degree bound.
    pub fn multiply(&self, other: &NCSeries) -> Result<NCSeries> {
        self.check_same_vars(other)?;
        Ok(self.product_truncated(other, self.max_degree.min(other.max_degree)))
    }

    pub(crate) fn product_truncated(&self, other: &NCSeries, max_degree: usize) -> NCSeries {
        let mut out = Self::zero(self.n_vars, max_degree);
        for (a, &ca) in &self.terms {
            if a.len() > max_degree {
                break;
            }
            for (b, &cb) in &other.terms {
                if a.len() + b.len() > max_degree {
                    break;
                }
                add_term(&mut out.terms, a.concat(b), ca * cb);
            }
        }
        out
    }

    /// Coefficient-wise adjoint: every word reversed.
    pub fn adjoint(&self) -> NCSeries {
        NCSeries {
            n_vars: self.n_vars,
            max_degree: self.max_degree,
            terms: self.terms.iter().map(|(w, &c)| (w.reversed(), c)).collect(),
        }
    }

    /// Coefficients of `w` and its reversal agree within `tol`.
    pub fn is_self_adjoint(&self, tol: f64) -> bool {
        self.terms.iter().all(|(w, &c)| (c - self.coeff(&w.reversed())).abs() <= tol)
    }

    /// Only even-length words carry coefficients.
    pub fn is_even(&self) -> bool {
        self.terms.keys().all(|w| w.len() % 2 == 0)
    }

    /// `Σ |c_w|` over odd-length words.
    pub fn odd_mass(&self) -> f64 {
        self.terms.iter().filter(|(w, _)| w.len() % 2 == 1).map(|(_, c)| c.abs()).fold(0.0, |s, v| s + v)
    }

    /// `‖f‖_A = Σ |c_w| A^{|w|}`.
    pub fn norm_a(&self, a: f64) -> f64 {
        self.terms.iter().map(|(w, c)| c.abs() * a.powi(w.len() as i32)).fold(0.0, |s, v| s + v)
    }

    /// `𝒟_i`: for each occurrence of `x_i`, the rest of the word read
    /// cyclically starting just after it.
    pub fn cyclic_gradient(&self, i: usize) -> Result<NCSeries> {
        self.check_index(i)?;
        let mut out = Self::zero(self.n_vars, self.max_degree);
        for (w, &c) in &self.terms {
            let l = w.letters();
            for p in 0..l.len() {
                if l[p] as usize == i {
                    let mut v = Vec::with_capacity(l.len() - 1);
                    v.extend_from_slice(&l[p + 1..]);
                    v.extend_from_slice(&l[..p]);
                    add_term(&mut out.terms, Word(v), c);
                }
            }
        }
        Ok(out)
    }

    /// `(𝒟₁f, …, 𝒟_n f)`.
    pub fn cyclic_gradients(&self) -> Vec<NCSeries> {
        (0..self.n_vars).map(|i| self.cyclic_gradient(i).expect("index in range")).collect()
    }

    /// `∂_i`: for each occurrence of `x_i`, prefix ⊗ suffix.
    pub fn difference_quotient(&self, i: usize) -> Result<TensorSeries> {
        self.check_index(i)?;
        let mut out = TensorSeries::zero(self.n_vars, self.max_degree);
        for (w, &c) in &self.terms {
            let l = w.letters();
            for p in 0..l.len() {
                if l[p] as usize == i {
                    out.add_term(Word(l[..p].to_vec()), Word(l[p + 1..].to_vec()), c);
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, op: SymOp) -> Result<NCSeries> {
        let mut out = Self::zero(self.n_vars, self.max_degree);
        for (w, &c) in &self.terms {
            let n = w.len();
            match op {
                SymOp::S => {
                    if n == 0 {
                        add_term(&mut out.terms, w.clone(), c);
                    } else {
                        let share = c / n as f64;
                        for k in 0..n {
                            add_term(&mut out.terms, w.rotated(k), share);
                        }
                    }
                }
                SymOp::N => add_term(&mut out.terms, w.clone(), n as f64 * c),
                SymOp::Sigma => {
                    if n == 0 {
                        return Err(Error::invalid(MODULE, "Σ is undefined on a nonzero constant term"));
                    }
                    add_term(&mut out.terms, w.clone(), c / n as f64);
                }
                SymOp::Pi => {
                    if n > 0 {
                        add_term(&mut out.terms, w.clone(), c);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn cyclic_symmetrize(&self) -> NCSeries {
        self.apply(SymOp::S).expect("S is total")
    }

    pub fn number_op(&self) -> NCSeries {
        self.apply(SymOp::N).expect("N is total")
    }

    pub fn sigma(&self) -> Result<NCSeries> {
        self.apply(SymOp::Sigma)
    }

    pub fn drop_constant(&self) -> NCSeries {
        self.apply(SymOp::Pi).expect("Π is total")
    }

    /// Replaces `x_i` by `args[i]` and truncates at `max_degree`.
    ///
    /// The series is treated as truncated, so arguments must have no
    /// constant term: otherwise the dropped high-degree part of `self` would
    /// feed every lower degree.
    pub fn substitute(&self, args: &[NCSeries], max_degree: usize) -> Result<NCSeries> {
        if let Some(k) = args.iter().position(|a| a.constant_term() != 0.0) {
            return Err(Error::invalid(
                MODULE,
                format!("argument {} has a constant term; substitution into a truncated series is ill-defined", k + 1),
            ));
        }
        self.substitute_polynomial(args, max_degree)
    }

    /// Like [`substitute`](Self::substitute) but treats `self` as an exact
    /// polynomial, so arguments may carry constants.
    pub fn substitute_polynomial(&self, args: &[NCSeries], max_degree: usize) -> Result<NCSeries> {
        if args.len() != self.n_vars {
            return Err(Error::invalid(
                MODULE,
                format!("substitution needs {} arguments, got {}", self.n_vars, args.len()),
            ));
        }
        let n_out = match args.first() {
            Some(a) => a.n_vars,
            None => return Err(Error::invalid(MODULE, "substitution needs at least one argument")),
        };
        if args.iter().any(|a| a.n_vars != n_out) {
            return Err(Error::invalid(MODULE, "substitution arguments disagree on the number of variables"));
        }
        let min_deg: Vec<usize> = args.iter().map(|a| a.terms.keys().next().map_or(usize::MAX, Word::len)).collect();
        let mut cache: HashMap<Vec<u8>, NCSeries> = HashMap::new();
        let mut out = Self::zero(n_out, max_degree);
        for (w, &c) in &self.terms {
            let lower: usize = w.letters().iter().map(|&l| min_deg[l as usize]).fold(0, usize::saturating_add);
            if lower > max_degree {
                continue;
            }
            let p = prefix_product(w.letters(), args, max_degree, &mut cache);
            out.axpy(c, &p);
        }
        Ok(out)
    }
}

/// `args[l₁] ⋯ args[l_k]` with every prefix memoised.
fn prefix_product(
    letters: &[u8],
    args: &[NCSeries],
    max_degree: usize,
    cache: &mut HashMap<Vec<u8>, NCSeries>,
) -> NCSeries {
    if let Some(p) = cache.get(letters) {
        return p.clone();
    }
    let p = match letters.split_last() {
        None => NCSeries::constant(args[0].n_vars, max_degree, 1.0),
        Some((&last, rest)) => {
            let head = prefix_product(rest, args, max_degree, cache);
            head.product_truncated(&args[last as usize], max_degree)
        }
    };
    cache.insert(letters.to_vec(), p.clone());
    p
}

/// `Σ_i g_i g_i`, the square of a gradient vector.
pub fn gradient_square(g: &[NCSeries], max_degree: usize) -> NCSeries {
    let n = g.first().map_or(1, |s| s.n_vars);
    let mut out = NCSeries::zero(n, max_degree);
    for gi in g {
        out.axpy(1.0, &gi.product_truncated(gi, max_degree));
    }
    out
}

/// `J p` with `(Jp)_{ij} = ∂_j p_i`.
pub fn jacobian(p: &[NCSeries]) -> Result<MatrixTensor> {
    let n = match p.first() {
        Some(s) => s.n_vars,
        None => return Err(Error::invalid(MODULE, "Jacobian of an empty vector")),
    };
    if p.len() != n || p.iter().any(|s| s.n_vars != n) {
        return Err(Error::invalid(MODULE, format!("Jacobian needs {n} series in {n} variables, got {}", p.len())));
    }
    let d = p.iter().map(|s| s.max_degree).min().unwrap_or(0);
    let mut entries = Vec::with_capacity(n * n);
    for pi in p {
        for j in 0..n {
            entries.push(pi.with_max_degree(d).difference_quotient(j)?);
        }
    }
    MatrixTensor::from_entries(n, entries)
}

impl Add for &NCSeries {
    type Output = NCSeries;

    /// # Panics
    /// If the variable counts differ.
    fn add(self, rhs: &NCSeries) -> NCSeries {
        let mut out = self.with_max_degree(self.max_degree.min(rhs.max_degree));
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &NCSeries {
    type Output = NCSeries;

    /// # Panics
    /// If the variable counts differ.
    fn sub(self, rhs: &NCSeries) -> NCSeries {
        let mut out = self.with_max_degree(self.max_degree.min(rhs.max_degree));
        out.axpy(-1.0, rhs);
        out
    }
}

impl Neg for &NCSeries {
    type Output = NCSeries;

    fn neg(self) -> NCSeries {
        self.scale(-1.0)
    }
}

impl Mul for &NCSeries {
    type Output = NCSeries;

    /// # Panics
    /// If the variable counts differ; use [`NCSeries::multiply`] to get an
    /// error instead.
    fn mul(self, rhs: &NCSeries) -> NCSeries {
        self.multiply(rhs).expect("series over different numbers of variables")
    }
}

impl Mul<f64> for &NCSeries {
    type Output = NCSeries;

    fn mul(self, a: f64) -> NCSeries {
        self.scale(a)
    }
}
