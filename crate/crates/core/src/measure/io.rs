use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{GridMeasure, MODULE};
use crate::error::{Error, Result};

/// Wire form of a [`GridMeasure`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureJson {
    pub support: [f64; 2],
    #[serde(default)]
    pub nodes: Vec<f64>,
    #[serde(default)]
    pub density: Vec<f64>,
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default)]
    pub quantiles: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub mixed: bool,
}

impl From<&GridMeasure> for MeasureJson {
    fn from(m: &GridMeasure) -> Self {
        MeasureJson {
            support: [m.support.0, m.support.1],
            nodes: m.nodes.clone(),
            density: m.density.clone(),
            atoms: m.atoms.iter().map(|&(x, w)| [x, w]).collect(),
            quantiles: m.quantiles.clone(),
            mixed: m.mixed,
        }
    }
}

impl TryFrom<MeasureJson> for GridMeasure {
    type Error = Error;

    fn try_from(j: MeasureJson) -> Result<Self> {
        let atoms = j.atoms.into_iter().map(|[x, w]| (x, w)).collect();
        GridMeasure::from_parts((j.support[0], j.support[1]), j.nodes, j.density, atoms, j.quantiles, j.mixed)
    }
}

impl Serialize for GridMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = MeasureJson::deserialize(d)?;
        GridMeasure::try_from(j).map_err(serde::de::Error::custom)
    }
}

impl GridMeasure {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("measure serialisation cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: MeasureJson =
            serde_json::from_str(s).map_err(|e| Error::invalid(MODULE, format!("bad measure JSON: {e}")))?;
        GridMeasure::try_from(j)
    }

    /// Two-column `x,density` table of the continuous part.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,density")?;
        for (x, d) in self.nodes.iter().zip(&self.density) {
            writeln!(w, "{x},{d}")?;
        }
        Ok(())
    }
}
