//! JSON form of series: words are arrays of 1-based variable indices.

use std::collections::BTreeSet;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{NCSeries, TensorSeries, Word, MODULE};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct TermJson {
    word: Vec<usize>,
    coeff: f64,
}

#[derive(Serialize, Deserialize)]
struct SeriesJson {
    n_vars: usize,
    max_degree: usize,
    terms: Vec<TermJson>,
}

#[derive(Serialize, Deserialize)]
struct TensorTermJson {
    left: Vec<usize>,
    right: Vec<usize>,
    coeff: f64,
}

#[derive(Serialize, Deserialize)]
struct TensorJson {
    n_vars: usize,
    max_degree: usize,
    terms: Vec<TensorTermJson>,
}

fn check_word(w: &[usize], n_vars: usize, max_degree: usize) -> Result<Word> {
    if let Some(&l) = w.iter().find(|&&l| l == 0 || l > n_vars) {
        return Err(Error::invalid(MODULE, format!("variable index {l} outside 1..={n_vars}")));
    }
    if w.len() > max_degree {
        return Err(Error::invalid(MODULE, format!("word {w:?} longer than max_degree {max_degree}")));
    }
    Word::from_one_based(w)
}

impl TryFrom<SeriesJson> for NCSeries {
    type Error = Error;

    fn try_from(raw: SeriesJson) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut terms = Vec::with_capacity(raw.terms.len());
        for t in raw.terms {
            let w = check_word(&t.word, raw.n_vars, raw.max_degree)?;
            if !seen.insert(w.clone()) {
                return Err(Error::invalid(MODULE, format!("word {:?} listed twice", t.word)));
            }
            terms.push((w, t.coeff));
        }
        NCSeries::from_terms(raw.n_vars, raw.max_degree, terms)
    }
}

impl Serialize for NCSeries {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SeriesJson {
            n_vars: self.n_vars,
            max_degree: self.max_degree,
            terms: self.terms.iter().map(|(w, &coeff)| TermJson { word: w.one_based(), coeff }).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for NCSeries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        NCSeries::try_from(SeriesJson::deserialize(d)?).map_err(D::Error::custom)
    }
}

impl Serialize for TensorSeries {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TensorJson {
            n_vars: self.n_vars(),
            max_degree: self.max_degree(),
            terms: self
                .terms()
                .iter()
                .map(|((a, b), &coeff)| TensorTermJson { left: a.one_based(), right: b.one_based(), coeff })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TensorSeries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = TensorJson::deserialize(d)?;
        let mut terms = Vec::with_capacity(raw.terms.len());
        for t in raw.terms {
            let a = check_word(&t.left, raw.n_vars, raw.max_degree).map_err(D::Error::custom)?;
            let b = check_word(&t.right, raw.n_vars, raw.max_degree).map_err(D::Error::custom)?;
            if a.len() + b.len() > raw.max_degree {
                return Err(D::Error::custom(format!("tensor term above max_degree {}", raw.max_degree)));
            }
            terms.push((a, b, t.coeff));
        }
        TensorSeries::from_terms(raw.n_vars, raw.max_degree, terms).map_err(D::Error::custom)
    }
}

impl NCSeries {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("series serialise")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: SeriesJson =
            serde_json::from_str(s).map_err(|e| Error::invalid(MODULE, format!("bad series JSON: {e}")))?;
        NCSeries::try_from(raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_round_trip() {
        let s = NCSeries::from_terms(
            2,
            6,
            [(Word::new(vec![0, 1, 0, 1]), 0.1 + 0.2), (Word::new(vec![1, 1]), -1.0 / 3.0), (Word::empty(), 2.0)],
        )
        .unwrap();
        let json = s.to_json();
        assert!(json.contains("\"word\": [\n        1,\n        2,\n        1,\n        2"));
        assert_eq!(NCSeries::from_json(&json).unwrap(), s);
    }

    #[test]
    fn rejects_bad_series() {
        let bad_index = r#"{"n_vars":1,"max_degree":4,"terms":[{"word":[2],"coeff":1}]}"#;
        assert!(NCSeries::from_json(bad_index).is_err());
        let zero_index = r#"{"n_vars":1,"max_degree":4,"terms":[{"word":[0],"coeff":1}]}"#;
        assert!(NCSeries::from_json(zero_index).is_err());
        let too_long = r#"{"n_vars":1,"max_degree":2,"terms":[{"word":[1,1,1],"coeff":1}]}"#;
        assert!(NCSeries::from_json(too_long).is_err());
        let twice = r#"{"n_vars":1,"max_degree":4,"terms":[{"word":[1],"coeff":1},{"word":[1],"coeff":2}]}"#;
        assert!(NCSeries::from_json(twice).is_err());
    }

    #[test]
    fn tensor_round_trip() {
        let t = TensorSeries::from_terms(2, 5, [(Word::new(vec![0]), Word::new(vec![1, 1]), 1.5)]).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"{"n_vars":2,"max_degree":5,"terms":[{"left":[1],"right":[2,2],"coeff":1.5}]}"#);
        let back: TensorSeries = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }
}
