//! JSON documents for matrices, instruments, models and scenarios.
//!
//! Matrices are nested row-major arrays whose entries are `[re, im]` pairs;
//! a bare number is read as a real entry. Outcome labels are object keys and
//! therefore strings; they are parsed as doubles and written in Rust's
//! shortest round-trip notation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dilation::{model_instrument, IndirectModel};
use crate::error::{Error, Result};
use crate::instrument::{luders_instrument, von_neumann_instrument, Instrument, Operation, RawSuperoperator};
use crate::linalg::{c, CMatrix, C64};
use crate::outcome::Outcome;
use crate::quantum::{DensityOperator, Observable};

use super::{MeasurementStep, Scenario};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum EntryJson {
    Pair([f64; 2]),
    Real(f64),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(transparent)]
pub struct MatrixJson(pub Vec<Vec<EntryJson>>);

impl MatrixJson {
    pub fn from_matrix(m: &CMatrix) -> Self {
        MatrixJson(
            m.to_rows()
                .into_iter()
                .map(|row| row.into_iter().map(|z| EntryJson::Pair([z.re, z.im])).collect())
                .collect(),
        )
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        let rows: Vec<Vec<C64>> = self
            .0
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| match *e {
                        EntryJson::Pair([re, im]) => c(re, im),
                        EntryJson::Real(re) => c(re, 0.0),
                    })
                    .collect()
            })
            .collect();
        CMatrix::from_rows(&rows)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OperationJson {
    pub kraus: Vec<MatrixJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MapJson {
    pub superoperator: MatrixJson,
}

/// Any of the accepted instrument forms. Exactly one of `operations`,
/// `maps`, `luders_of`, `von_neumann_of`, `indirect_model` must be present.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InstrumentJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operations: Option<BTreeMap<String, OperationJson>>,
    /// Raw superoperators acting on column-stacked vectors. Accepted only
    /// where non-CP maps make sense (the `check` command).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maps: Option<BTreeMap<String, MapJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub luders_of: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub von_neumann_of: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indirect_model: Option<ModelJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelJson {
    pub system_dim: usize,
    pub probe_dim: usize,
    pub probe_state: MatrixJson,
    pub coupling: MatrixJson,
    pub meter: MatrixJson,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StepJson {
    pub time: f64,
    pub instrument: InstrumentJson,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioJson {
    pub dim: usize,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
    pub initial_state: MatrixJson,
    pub hamiltonian: MatrixJson,
    pub steps: Vec<StepJson>,
}

fn default_hbar() -> f64 {
    1.0
}

/// A parsed instrument document: either a genuine instrument or a family of
/// raw maps that may fail complete positivity.
#[derive(Clone, Debug)]
pub enum InstrumentDoc {
    Instrument(Instrument),
    Maps(BTreeMap<Outcome, RawSuperoperator>),
}

fn check_dim(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Schema(format!("{what} has dimension {found}, expected {expected}")))
    }
}

fn parse_labels<T>(entries: &BTreeMap<String, T>) -> Result<Vec<(Outcome, &T)>> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(entries.len());
    for (key, v) in entries {
        let x: Outcome = key.parse()?;
        if !seen.insert(x) {
            return Err(Error::DuplicateLabel(x));
        }
        out.push((x, v));
    }
    Ok(out)
}

fn form_count(j: &InstrumentJson) -> usize {
    [
        j.operations.is_some(),
        j.maps.is_some(),
        j.luders_of.is_some(),
        j.von_neumann_of.is_some(),
        j.indirect_model.is_some(),
    ]
    .iter()
    .filter(|&&b| b)
    .count()
}

impl InstrumentJson {
    pub fn from_instrument(ins: &Instrument) -> Self {
        let operations = ins
            .operations()
            .iter()
            .map(|(x, op)| {
                (
                    x.to_string(),
                    OperationJson {
                        kraus: op.kraus().iter().map(MatrixJson::from_matrix).collect(),
                    },
                )
            })
            .collect();
        InstrumentJson {
            dim: Some(ins.dim()),
            operations: Some(operations),
            ..Default::default()
        }
    }

    /// Resolves any form to a document.
    pub fn to_doc(&self) -> Result<InstrumentDoc> {
        if form_count(self) != 1 {
            return Err(Error::Schema(
                "instrument needs exactly one of operations, maps, luders_of, von_neumann_of, indirect_model".into(),
            ));
        }
        let declared = self.dim;
        let doc = if let Some(ops) = &self.operations {
            let dim = declared.ok_or_else(|| Error::Schema("operations form requires dim".into()))?;
            let mut operations = BTreeMap::new();
            for (x, op) in parse_labels(ops)? {
                let kraus = op.kraus.iter().map(MatrixJson::to_matrix).collect::<Result<Vec<_>>>()?;
                for k in &kraus {
                    check_dim("Kraus operator", dim, k.rows())?;
                }
                operations.insert(x, Operation::new(kraus)?);
            }
            InstrumentDoc::Instrument(Instrument::new(operations)?)
        } else if let Some(maps) = &self.maps {
            let dim = declared.ok_or_else(|| Error::Schema("maps form requires dim".into()))?;
            let mut out = BTreeMap::new();
            for (x, m) in parse_labels(maps)? {
                let s = m.superoperator.to_matrix()?;
                check_dim("superoperator", dim * dim, s.rows())?;
                out.insert(x, RawSuperoperator::new(dim, s)?);
            }
            if out.is_empty() {
                return Err(Error::EmptyOutcomes);
            }
            InstrumentDoc::Maps(out)
        } else if let Some(a) = &self.luders_of {
            InstrumentDoc::Instrument(luders_instrument(&Observable::new(a.to_matrix()?)?))
        } else if let Some(a) = &self.von_neumann_of {
            InstrumentDoc::Instrument(von_neumann_instrument(&Observable::new(a.to_matrix()?)?)?)
        } else {
            let model = self.indirect_model.as_ref().expect("one form present").to_model()?;
            InstrumentDoc::Instrument(model_instrument(&model)?)
        };
        if let Some(dim) = declared {
            let found = match &doc {
                InstrumentDoc::Instrument(i) => i.dim(),
                InstrumentDoc::Maps(_) => dim,
            };
            check_dim("instrument", dim, found)?;
        }
        Ok(doc)
    }

    /// Resolves to a CP instrument, rejecting the raw-map form.
    pub fn to_instrument(&self) -> Result<Instrument> {
        match self.to_doc()? {
            InstrumentDoc::Instrument(i) => Ok(i),
            InstrumentDoc::Maps(_) => Err(Error::Schema(
                "raw superoperator maps are not accepted here; give Kraus operators".into(),
            )),
        }
    }
}

impl ModelJson {
    pub fn from_model(m: &IndirectModel) -> Self {
        ModelJson {
            system_dim: m.system_dim(),
            probe_dim: m.probe_dim(),
            probe_state: MatrixJson::from_matrix(m.probe_state().matrix()),
            coupling: MatrixJson::from_matrix(m.coupling()),
            meter: MatrixJson::from_matrix(m.meter().matrix()),
        }
    }

    pub fn to_model(&self) -> Result<IndirectModel> {
        IndirectModel::new(
            self.system_dim,
            self.probe_dim,
            DensityOperator::new(self.probe_state.to_matrix()?)?,
            self.coupling.to_matrix()?,
            Observable::new(self.meter.to_matrix()?)?,
        )
    }
}

impl ScenarioJson {
    pub fn to_scenario(&self) -> Result<Scenario> {
        let rho = DensityOperator::new(self.initial_state.to_matrix()?)?;
        check_dim("initial_state", self.dim, rho.dim())?;
        let h = Observable::new(self.hamiltonian.to_matrix()?)?;
        check_dim("hamiltonian", self.dim, h.dim())?;
        let mut steps = Vec::with_capacity(self.steps.len());
        for (k, s) in self.steps.iter().enumerate() {
            let instrument = s.instrument.to_instrument()?;
            check_dim(&format!("instrument of step {}", k + 1), self.dim, instrument.dim())?;
            steps.push(MeasurementStep {
                instrument,
                time: s.time,
            });
        }
        Scenario::new(rho, h, self.hbar, steps)
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    serde_json::from_str::<ScenarioJson>(text)?.to_scenario()
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&read_text(path)?)
}

pub fn parse_instrument_doc(text: &str) -> Result<InstrumentDoc> {
    serde_json::from_str::<InstrumentJson>(text)?.to_doc()
}

pub fn parse_model(text: &str) -> Result<IndirectModel> {
    serde_json::from_str::<ModelJson>(text)?.to_model()
}

/// Pretty JSON with a trailing newline.
pub fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}
