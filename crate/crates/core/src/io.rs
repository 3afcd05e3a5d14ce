//! JSON model files.
//!
//! ```json
//! { "alphabet_size": 2, "f": [0.5, 0.5], "G": [[0.3, 0.7]], "prior": [1.0] }
//! ```
//!
//! A decentralized model replaces `f` and `G` with
//! `"sensors": [{ "f": [..], "G": [[..], ..] }, ..]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DecentralizedModel, Pmf, SignalModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorFile {
    pub f: Vec<f64>,
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub alphabet_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<f64>>,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Vec<f64>>>,
    pub prior: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensors: Option<Vec<SensorFile>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadedModel {
    Centralized(SignalModel),
    Decentralized(DecentralizedModel),
}

fn pmf(name: &str, v: &[f64], n: usize) -> Result<Pmf> {
    if v.len() != n {
        return Err(Error::InvalidModel(format!("{name} has {} entries, alphabet_size is {n}", v.len())));
    }
    Pmf::new(v.to_vec()).map_err(|e| Error::InvalidModel(format!("{name}: {e}")))
}

fn sensor_model(n: usize, f: &[f64], g: &[Vec<f64>], prior: &Pmf, label: &str) -> Result<SignalModel> {
    if g.len() != prior.alphabet_size() {
        return Err(Error::InvalidModel(format!(
            "{label}G has {} pmfs but prior has {} entries",
            g.len(),
            prior.alphabet_size()
        )));
    }
    let post = g
        .iter()
        .enumerate()
        .map(|(i, gi)| pmf(&format!("{label}G[{i}]"), gi, n))
        .collect::<Result<_>>()?;
    SignalModel::new(pmf(&format!("{label}f"), f, n)?, post, prior.clone())
}

impl ModelFile {
    pub fn into_model(self) -> Result<LoadedModel> {
        let n = self.alphabet_size;
        if n < 1 {
            return Err(Error::InvalidModel("alphabet_size must be positive".into()));
        }
        let prior = Pmf::new(self.prior).map_err(|e| Error::InvalidModel(format!("prior: {e}")))?;
        match (self.f, self.g, self.sensors) {
            (Some(f), Some(g), None) => Ok(LoadedModel::Centralized(sensor_model(n, &f, &g, &prior, "")?)),
            (None, None, Some(sensors)) => {
                if sensors.is_empty() {
                    return Err(Error::InvalidModel("sensors array is empty".into()));
                }
                let models = sensors
                    .iter()
                    .enumerate()
                    .map(|(k, s)| sensor_model(n, &s.f, &s.g, &prior, &format!("sensors[{k}].")))
                    .collect::<Result<_>>()?;
                Ok(LoadedModel::Decentralized(DecentralizedModel::new(models)?))
            }
            _ => Err(Error::InvalidModel("give either f and G, or a sensors array".into())),
        }
    }

    pub fn from_model(model: &SignalModel) -> Self {
        ModelFile {
            alphabet_size: model.alphabet_size(),
            f: Some(model.pre().probs().to_vec()),
            g: Some(model.post().iter().map(|p| p.probs().to_vec()).collect()),
            prior: model.prior().probs().to_vec(),
            sensors: None,
        }
    }

    pub fn from_decentralized(dmodel: &DecentralizedModel) -> Self {
        let first = &dmodel.sensors()[0];
        ModelFile {
            alphabet_size: first.alphabet_size(),
            f: None,
            g: None,
            prior: dmodel.prior().probs().to_vec(),
            sensors: Some(
                dmodel
                    .sensors()
                    .iter()
                    .map(|m| SensorFile {
                        f: m.pre().probs().to_vec(),
                        g: m.post().iter().map(|p| p.probs().to_vec()).collect(),
                    })
                    .collect(),
            ),
        }
    }
}

pub fn parse_model(text: &str) -> Result<LoadedModel> {
    serde_json::from_str::<ModelFile>(text)?.into_model()
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    parse_model(&std::fs::read_to_string(path)?)
}

pub fn model_to_json(model: &SignalModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile::from_model(model))?)
}

pub fn decentralized_to_json(dmodel: &DecentralizedModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile::from_decentralized(dmodel))?)
}
