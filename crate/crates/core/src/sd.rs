//! Truncated Schwinger-Dyson trace tables.
//!
//! A [`TraceTable`] stores one value per class of words under rotation and
//! reversal. [`solve_sd`] finds the law of `½|X|² + W` by damped Jacobi
//! sweeps on `τ(x_i P) = τ⊗τ(∂_i P) - τ(𝒟_i W · P)`.

use std::collections::{BTreeMap, HashMap};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, ErrorKind, Result};
use crate::nc::{NCSeries, Word};

const MODULE: &str = "sd_moments";

/// Default norm cutoff `T`.
pub const DEFAULT_CUTOFF: f64 = 3.0;
/// Default damping of the Jacobi sweep.
pub const DEFAULT_DAMPING: f64 = 0.5;
/// Default sweep limit.
pub const DEFAULT_MAX_SWEEPS: usize = 5000;

/// Packs words of a fixed alphabet into `u64`: letters big-endian, length in
/// the top bits, so integer order on equal lengths is lexicographic order.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Packer {
    bits: u32,
}

const LEN_SHIFT: u32 = 58;

impl Packer {
    fn new(n_vars: usize, cap: usize) -> Result<Self> {
        let bits = (usize::BITS - (n_vars.max(2) - 1).leading_zeros()).max(1);
        if cap as u64 * bits as u64 > LEN_SHIFT as u64 {
            return Err(Error::invalid(
                MODULE,
                format!("degree cap {cap} is too large for a trace table in {n_vars} variables"),
            ));
        }
        Ok(Packer { bits })
    }

    fn code(&self, letters: &[u8]) -> u64 {
        letters.iter().fold(0u64, |acc, &l| (acc << self.bits) | l as u64)
    }

    fn key(&self, len: usize, code: u64) -> u64 {
        ((len as u64) << LEN_SHIFT) | code
    }

    fn unpack(&self, key: u64) -> Vec<u8> {
        let len = (key >> LEN_SHIFT) as usize;
        let mask = (1u64 << self.bits) - 1;
        (0..len).rev().map(|k| ((key >> (k as u32 * self.bits)) & mask) as u8).collect()
    }

    /// Key of the smallest rotation of the word or its reversal.
    fn canonical(&self, letters: &[u8]) -> u64 {
        let len = letters.len();
        if len <= 1 {
            return self.key(len, self.code(letters));
        }
        let total = self.bits * len as u32;
        let mask = if total == 64 { u64::MAX } else { (1u64 << total) - 1 };
        let shift_back = total - self.bits;
        let mut best = u64::MAX;
        for mut c in [self.code(letters), letters.iter().rev().fold(0u64, |acc, &l| (acc << self.bits) | l as u64)] {
            for _ in 0..len {
                best = best.min(c);
                c = ((c << self.bits) | (c >> shift_back)) & mask;
            }
        }
        self.key(len, best)
    }
}

/// `word ↦ τ(word)` for all words up to `degree_cap`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceTable {
    n_vars: usize,
    degree_cap: usize,
    cutoff: f64,
    packer: Packer,
    values: HashMap<u64, f64>,
    tail_bound: f64,
}

impl TraceTable {
    fn empty(n_vars: usize, degree_cap: usize, cutoff: f64) -> Result<Self> {
        if n_vars == 0 {
            return Err(Error::invalid(MODULE, "a trace table needs at least one variable"));
        }
        if !(cutoff > 2.0 && cutoff.is_finite()) {
            return Err(Error::invalid(MODULE, format!("cutoff must exceed 2, got {cutoff}")));
        }
        let packer = Packer::new(n_vars, degree_cap)?;
        let mut values = HashMap::new();
        values.insert(packer.key(0, 0), 1.0);
        Ok(TraceTable { n_vars, degree_cap, cutoff, packer, values, tail_bound: 0.0 })
    }

    /// Moments of `n` free standard semicirculars.
    ///
    /// # Panics
    /// If the cap is too large for the alphabet or `cutoff ≤ 2`.
    pub fn semicircular(n_vars: usize, degree_cap: usize, cutoff: f64) -> Self {
        let zero = NCSeries::zero(n_vars, degree_cap);
        let system = System::build(n_vars, degree_cap, cutoff, &zero).expect("valid semicircular table");
        let mut tau = system.blank.clone();
        system.exact_by_degree(&mut tau);
        system.to_table(&tau, 0.0)
    }

    /// From explicit values; every word up to the cap must be covered and
    /// words in the same class must agree.
    pub fn from_values<I>(n_vars: usize, degree_cap: usize, cutoff: f64, values: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Word, f64)>,
    {
        let mut t = Self::empty(n_vars, degree_cap, cutoff)?;
        let mut seen: HashMap<u64, f64> = HashMap::new();
        for (w, v) in values {
            if w.len() > degree_cap {
                return Err(Error::invalid(MODULE, format!("word {w} exceeds degree cap {degree_cap}")));
            }
            if w.max_letter().is_some_and(|l| l as usize >= n_vars) {
                return Err(Error::invalid(MODULE, format!("word {w} uses a variable out of range")));
            }
            if !v.is_finite() {
                return Err(Error::invalid(MODULE, format!("trace of {w} is not finite")));
            }
            let key = t.packer.canonical(w.letters());
            if let Some(&old) = seen.get(&key) {
                if (old - v).abs() > 1e-12 * (1.0 + old.abs()) {
                    return Err(Error::invalid(MODULE, format!("trace of {w} disagrees with a rotation or reversal")));
                }
            }
            seen.insert(key, v);
        }
        if seen.get(&t.packer.key(0, 0)).is_some_and(|&v| v != 1.0) {
            return Err(Error::invalid(MODULE, "trace of the empty word must be 1"));
        }
        for key in canonical_keys(&t.packer, n_vars, degree_cap) {
            match seen.get(&key) {
                Some(&v) => {
                    t.values.insert(key, v);
                }
                None => {
                    let w = Word::new(t.packer.unpack(key));
                    return Err(Error::invalid(MODULE, format!("trace table is missing the word {w}")));
                }
            }
        }
        Ok(t)
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn degree_cap(&self) -> usize {
        self.degree_cap
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Bound on the contribution of terms dropped by truncation.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// `τ(w)`; errors when `w` is longer than the cap.
    pub fn value(&self, w: &Word) -> Result<f64> {
        self.value_letters(w.letters())
    }

    pub fn value_letters(&self, letters: &[u8]) -> Result<f64> {
        if letters.len() > self.degree_cap {
            return Err(Error::invalid(
                MODULE,
                format!(
                    "trace of a word of length {} requested from a table capped at {}",
                    letters.len(),
                    self.degree_cap
                ),
            ));
        }
        if letters.iter().any(|&l| l as usize >= self.n_vars) {
            return Err(Error::invalid(MODULE, "trace requested for a variable out of range"));
        }
        Ok(self.values.get(&self.packer.canonical(letters)).copied().unwrap_or(0.0))
    }

    /// Canonical words with their values, shortest first.
    pub fn entries(&self) -> Vec<(Word, f64)> {
        let mut keys: Vec<u64> = self.values.keys().copied().collect();
        keys.sort_unstable();
        keys.into_iter().map(|k| (Word::new(self.packer.unpack(k)), self.values[&k])).collect()
    }

    /// `τ` applied linearly to a series.
    pub fn apply(&self, f: &NCSeries) -> Result<f64> {
        let mut s = 0.0;
        for (w, &c) in f.terms() {
            s += c * self.value(w)?;
        }
        Ok(s)
    }

    /// The same trace on words up to `cap`.
    pub fn restrict(&self, cap: usize) -> TraceTable {
        let cap = cap.min(self.degree_cap);
        let mut t = self.clone();
        t.degree_cap = cap;
        t.values.retain(|&k, _| (k >> LEN_SHIFT) as usize <= cap);
        t
    }

    /// Largest `|τ(w)|` over odd-length words.
    pub fn odd_max(&self) -> f64 {
        self.values.iter().filter(|(&k, _)| (k >> LEN_SHIFT) % 2 == 1).map(|(_, v)| v.abs()).fold(0.0, f64::max)
    }

    /// Largest `|τ(w) - σ(w)|` over words up to `cap`.
    pub fn max_deviation(&self, other: &TraceTable, cap: usize) -> Result<f64> {
        if self.n_vars != other.n_vars {
            return Err(Error::invalid(MODULE, "trace tables over different numbers of variables"));
        }
        let cap = cap.min(self.degree_cap).min(other.degree_cap);
        let mut worst: f64 = 0.0;
        for (w, v) in self.entries() {
            if w.len() <= cap {
                worst = worst.max((v - other.value(&w)?).abs());
            }
        }
        Ok(worst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace table serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::invalid(MODULE, format!("bad trace table JSON: {e}")))
    }
}

/// Every canonical key up to `cap`, shortest first.
fn canonical_keys(p: &Packer, n_vars: usize, cap: usize) -> Vec<u64> {
    let mut keys = vec![p.key(0, 0)];
    let mut letters = Vec::with_capacity(cap);
    for len in 1..=cap {
        for mut code in 0..n_vars.pow(len as u32) {
            letters.clear();
            for _ in 0..len {
                letters.push((code % n_vars) as u8);
                code /= n_vars;
            }
            letters.reverse();
            // Canonical words start with their smallest letter; skip the rest
            // cheaply before the full check.
            if letters.iter().any(|&l| l < letters[0]) {
                continue;
            }
            let key = p.key(len, p.code(&letters));
            if p.canonical(&letters) == key {
                keys.push(key);
            }
        }
    }
    keys
}

/// The Schwinger-Dyson equations compiled to index form: one equation per
/// canonical word `x_i P`, expressing it through shorter products and the
/// `𝒟_i W` correction.
struct System {
    n_vars: usize,
    cap: usize,
    cutoff: f64,
    packer: Packer,
    keys: Vec<u64>,
    lengths: Vec<usize>,
    blank: Vec<f64>,
    pair_start: Vec<usize>,
    pairs: Vec<(u32, u32)>,
    lin_start: Vec<usize>,
    lins: Vec<(f64, u32)>,
    dropped: Vec<f64>,
}

impl System {
    fn build(n_vars: usize, cap: usize, cutoff: f64, w: &NCSeries) -> Result<Self> {
        let probe = TraceTable::empty(n_vars, cap, cutoff)?;
        let packer = probe.packer;
        let keys = canonical_keys(&packer, n_vars, cap);
        let index: HashMap<u64, u32> = keys.iter().enumerate().map(|(k, &key)| (key, k as u32)).collect();
        let grads = w.cyclic_gradients();
        let idx = |letters: &[u8]| index[&packer.canonical(letters)];

        let mut sys = System {
            n_vars,
            cap,
            cutoff,
            packer,
            lengths: keys.iter().map(|k| (k >> LEN_SHIFT) as usize).collect(),
            blank: vec![0.0; keys.len()],
            pair_start: vec![0; keys.len() + 1],
            pairs: Vec::new(),
            lin_start: vec![0; keys.len() + 1],
            lins: Vec::new(),
            dropped: vec![0.0; keys.len()],
            keys,
        };
        sys.blank[0] = 1.0;
        let mut buf = Vec::with_capacity(2 * cap + 2);
        for k in 1..sys.keys.len() {
            let letters = packer.unpack(sys.keys[k]);
            let (i, p) = (letters[0], &letters[1..]);
            for (pos, &l) in p.iter().enumerate() {
                if l == i {
                    sys.pairs.push((idx(&p[..pos]), idx(&p[pos + 1..])));
                }
            }
            for (v, &c) in grads[i as usize].terms() {
                let len = v.len() + p.len();
                if len > cap {
                    sys.dropped[k] += c.abs() * cutoff.powi(len as i32);
                    continue;
                }
                buf.clear();
                buf.extend_from_slice(v.letters());
                buf.extend_from_slice(p);
                sys.lins.push((c, idx(&buf)));
            }
            sys.pair_start[k + 1] = sys.pairs.len();
            sys.lin_start[k + 1] = sys.lins.len();
        }
        sys.pair_start[0] = 0;
        sys.lin_start[0] = 0;
        // Index 0 (empty word) carries no equation.
        sys.pair_start[1] = 0;
        sys.lin_start[1] = 0;
        Ok(sys)
    }

    fn rhs(&self, k: usize, tau: &[f64]) -> f64 {
        let mut s = 0.0;
        for &(a, b) in &self.pairs[self.pair_start[k]..self.pair_start[k + 1]] {
            s += tau[a as usize] * tau[b as usize];
        }
        for &(c, j) in &self.lins[self.lin_start[k]..self.lin_start[k + 1]] {
            s -= c * tau[j as usize];
        }
        s
    }

    /// Exact when no `W` terms are present: each degree only needs lower ones.
    fn exact_by_degree(&self, tau: &mut [f64]) {
        for k in 1..self.keys.len() {
            tau[k] = self.rhs(k, tau);
        }
    }

    fn to_table(&self, tau: &[f64], tail_bound: f64) -> TraceTable {
        let mut values = HashMap::with_capacity(self.keys.len());
        for (k, &key) in self.keys.iter().enumerate() {
            values.insert(key, tau[k]);
        }
        TraceTable {
            n_vars: self.n_vars,
            degree_cap: self.cap,
            cutoff: self.cutoff,
            packer: self.packer,
            values,
            tail_bound,
        }
    }
}

/// Options for [`solve_sd_with`].
#[derive(Clone, Debug)]
pub struct SdOptions {
    pub cutoff: f64,
    pub tol: f64,
    pub damping: f64,
    pub max_sweeps: usize,
}

impl Default for SdOptions {
    fn default() -> Self {
        SdOptions { cutoff: DEFAULT_CUTOFF, tol: 1e-12, damping: DEFAULT_DAMPING, max_sweeps: DEFAULT_MAX_SWEEPS }
    }
}

/// Trace table of `½|X|² + W` up to degree `cap`.
pub fn solve_sd(w: &NCSeries, cap: usize, cutoff: f64, tol: f64) -> Result<TraceTable> {
    solve_sd_with(w, cap, &SdOptions { cutoff, tol, ..SdOptions::default() })
}

pub fn solve_sd_with(w: &NCSeries, cap: usize, opts: &SdOptions) -> Result<TraceTable> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::invalid(MODULE, format!("damping must lie in (0, 1], got {}", opts.damping)));
    }
    if !w.is_self_adjoint(1e-12) {
        return Err(Error::invalid(MODULE, "potential must be self-adjoint"));
    }
    let sys = System::build(w.n_vars(), cap, opts.cutoff, w)?;
    let mut tau = sys.blank.clone();
    System::build(w.n_vars(), cap, opts.cutoff, &NCSeries::zero(w.n_vars(), cap))?.exact_by_degree(&mut tau);
    let bounds: Vec<f64> = sys.lengths.iter().map(|&l| opts.cutoff.powi(l as i32)).collect();
    let mut next = tau.clone();
    for _ in 0..opts.max_sweeps {
        let mut change: f64 = 0.0;
        let mut clamped = false;
        for k in 1..tau.len() {
            let target = sys.rhs(k, &tau);
            let mut v = (1.0 - opts.damping) * tau[k] + opts.damping * target;
            if v.abs() > bounds[k] {
                v = v.clamp(-bounds[k], bounds[k]);
                clamped = true;
            }
            change = change.max((v - tau[k]).abs() / (1.0 + v.abs()));
            next[k] = v;
        }
        std::mem::swap(&mut tau, &mut next);
        if !change.is_finite() {
            break;
        }
        if change < opts.tol {
            if clamped {
                return Err(Error::regime(
                    MODULE,
                    format!(
                        "outside perturbative regime: the trace bound T^k with T = {} is active at the fixed point",
                        opts.cutoff
                    ),
                ));
            }
            let tail = sys.dropped.iter().copied().fold(0.0, f64::max);
            return Ok(sys.to_table(&tau, tail));
        }
    }
    Err(Error::new(
        ErrorKind::NonConvergence,
        MODULE,
        format!("Schwinger-Dyson iteration did not converge in {} sweeps", opts.max_sweeps),
    ))
}

/// `max_{P, i} |τ(P·(x_i + 𝒟_i W)) - τ⊗τ(∂_i P)|` over words `P` with
/// `|P| ≤ degree - 1 - deg 𝒟W`, with `degree` capped at the table's cap.
pub fn sd_residual(tau: &TraceTable, w: &NCSeries, degree: usize) -> f64 {
    let degree = degree.min(tau.degree_cap);
    let grads = w.cyclic_gradients();
    let dw = grads.iter().map(NCSeries::degree).max().unwrap_or(0);
    let Some(max_p) = degree.checked_sub(1 + dw) else {
        return 0.0;
    };
    let n = tau.n_vars;
    let t = |l: &[u8]| tau.value_letters(l).expect("within cap");
    let mut worst: f64 = 0.0;
    let mut p: Vec<u8> = Vec::new();
    let mut buf = Vec::new();
    for len in 0..=max_p {
        let total = n.pow(len as u32);
        for code in 0..total {
            p.clear();
            let mut c = code;
            for _ in 0..len {
                p.push((c % n) as u8);
                c /= n;
            }
            for (i, g) in grads.iter().enumerate() {
                buf.clear();
                buf.extend_from_slice(&p);
                buf.push(i as u8);
                let mut lhs = t(&buf);
                for (v, &cv) in g.terms() {
                    buf.clear();
                    buf.extend_from_slice(&p);
                    buf.extend_from_slice(v.letters());
                    lhs += cv * t(&buf);
                }
                let mut rhs = 0.0;
                for pos in 0..p.len() {
                    if p[pos] as usize == i {
                        rhs += t(&p[..pos]) * t(&p[pos + 1..]);
                    }
                }
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    worst
}

/// Relative size below which products are pruned in [`pushforward_trace`].
const PRUNE: f64 = 1e-16;

/// Expansion of a product `f_{i₁} ⋯ f_{i_l}` as `(word, coefficient)` pairs,
/// with the weight dropped while building it.
type Expansion = (Vec<(Vec<u8>, f64)>, f64);

/// Law of `X = f(Y)` on words up to `degree` when `Y ~ tau`.
///
/// Products longer than the table's cap are dropped, as are terms whose
/// weight `|c| T^{|w|}` falls below `1e-16`; the total dropped weight is
/// recorded as the result's tail bound.
pub fn pushforward_trace(tau: &TraceTable, f: &[NCSeries], degree: usize) -> Result<TraceTable> {
    let n = tau.n_vars;
    if f.len() != n || f.iter().any(|s| s.n_vars() != n) {
        return Err(Error::invalid(MODULE, format!("pushforward needs {n} series in {n} variables")));
    }
    if f.iter().any(|s| s.constant_term() != 0.0) {
        return Err(Error::invalid(MODULE, "pushforward components must have zero constant term"));
    }
    if degree > tau.degree_cap {
        return Err(Error::invalid(MODULE, format!("output degree {degree} exceeds the trace cap {}", tau.degree_cap)));
    }
    let cap = tau.degree_cap;
    let t_pow: Vec<f64> = (0..=cap).map(|k| tau.cutoff.powi(k as i32)).collect();
    let out_packer = Packer::new(n, degree)?;
    let keys = canonical_keys(&out_packer, n, degree);
    let mut out = TraceTable::empty(n, degree, tau.cutoff)?;
    let mut tail: f64 = 0.0;
    let mut cache: BTreeMap<Vec<u8>, Expansion> = BTreeMap::new();
    cache.insert(Vec::new(), (vec![(Vec::new(), 1.0)], 0.0));
    for &key in &keys[1..] {
        let letters = out_packer.unpack(key);
        for l in 1..=letters.len() {
            if cache.contains_key(&letters[..l]) {
                continue;
            }
            let (prev, prev_drop) = &cache[&letters[..l - 1]];
            let mut acc: HashMap<Vec<u8>, f64> = HashMap::new();
            let factor = &f[letters[l - 1] as usize];
            // What earlier factors dropped is amplified by at most this norm.
            let mut dropped = prev_drop * factor.norm_a(tau.cutoff);
            for (a, ca) in prev {
                for (b, &cb) in factor.terms() {
                    let len = a.len() + b.len();
                    let c = ca * cb;
                    if len > cap {
                        dropped += c.abs() * tau.cutoff.powi(len as i32);
                        continue;
                    }
                    let mut v = Vec::with_capacity(len);
                    v.extend_from_slice(a);
                    v.extend_from_slice(b.letters());
                    *acc.entry(v).or_insert(0.0) += c;
                }
            }
            let mut terms: Vec<(Vec<u8>, f64)> = Vec::with_capacity(acc.len());
            for (w, c) in acc {
                let weight = c.abs() * t_pow[w.len()];
                if weight < PRUNE {
                    dropped += weight;
                } else {
                    terms.push((w, c));
                }
            }
            terms.sort_by(|x, y| x.0.len().cmp(&y.0.len()).then_with(|| x.0.cmp(&y.0)));
            cache.insert(letters[..l].to_vec(), (terms, dropped));
        }
        let (terms, dropped) = &cache[&letters];
        let mut s = 0.0;
        for (w, c) in terms {
            s += c * tau.value_letters(w)?;
        }
        out.values.insert(key, s);
        tail = tail.max(*dropped);
    }
    out.tail_bound = tail.max(tau.tail_bound);
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ValueJson {
    word: Vec<usize>,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct TableJson {
    n_vars: usize,
    degree_cap: usize,
    cutoff: f64,
    values: Vec<ValueJson>,
    #[serde(default, skip_serializing_if = "is_zero")]
    tail_bound: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl Serialize for TraceTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TableJson {
            n_vars: self.n_vars,
            degree_cap: self.degree_cap,
            cutoff: self.cutoff,
            values: self.entries().into_iter().map(|(w, value)| ValueJson { word: w.one_based(), value }).collect(),
            tail_bound: self.tail_bound,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TraceTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = TableJson::deserialize(d)?;
        let mut t = TraceTable::empty(raw.n_vars, raw.degree_cap, raw.cutoff).map_err(D::Error::custom)?;
        for v in raw.values {
            let w = Word::from_one_based(&v.word).map_err(D::Error::custom)?;
            if w.len() > raw.degree_cap || w.max_letter().is_some_and(|l| l as usize >= raw.n_vars) {
                return Err(D::Error::custom(format!("word {:?} does not fit the table", v.word)));
            }
            let key = t.packer.canonical(w.letters());
            if t.packer.key(w.len(), t.packer.code(w.letters())) != key {
                return Err(D::Error::custom(format!("word {:?} is not in canonical form", v.word)));
            }
            if w.is_empty() && v.value != 1.0 {
                return Err(D::Error::custom("trace of the empty word must be 1"));
            }
            t.values.insert(key, v.value);
        }
        t.tail_bound = raw.tail_bound;
        Ok(t)
    }
}
