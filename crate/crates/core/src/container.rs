//! Versioned JSON container for [`MixtureModel`].
//!
//! Floats are written with shortest round-trip formatting and parsed back
//! exactly, so a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{MixtureModel, PriorSpec};

pub const FORMAT_TAG: &str = "probattn-model/1";

#[derive(Serialize, Deserialize)]
pub(crate) struct ModelContainer {
    format: String,
    n: usize,
    d: usize,
    m: usize,
    keys: Vec<f64>,
    key_precisions: Vec<f64>,
    value_means: Vec<f64>,
    value_precisions: Vec<f64>,
    prior: PriorSpec,
}

impl From<MixtureModel> for ModelContainer {
    fn from(model: MixtureModel) -> Self {
        ModelContainer {
            format: FORMAT_TAG.to_string(),
            n: model.n(),
            d: model.d(),
            m: model.m(),
            keys: model.keys().as_slice().to_vec(),
            key_precisions: model.key_precisions().to_vec(),
            value_means: model.value_means().as_slice().to_vec(),
            value_precisions: model.value_precisions().to_vec(),
            prior: model.prior().clone(),
        }
    }
}

impl TryFrom<ModelContainer> for MixtureModel {
    type Error = Error;

    fn try_from(c: ModelContainer) -> Result<Self> {
        if c.format != FORMAT_TAG {
            return Err(Error::Format(format!(
                "unsupported model format {:?}, expected {FORMAT_TAG:?}",
                c.format
            )));
        }
        MixtureModel::new(
            Matrix::from_vec(c.n, c.d, c.keys)?,
            c.key_precisions,
            Matrix::from_vec(c.n, c.m, c.value_means)?,
            c.value_precisions,
            c.prior,
        )
    }
}

impl Serialize for MixtureModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelContainer::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for MixtureModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let c = ModelContainer::deserialize(d)?;
        MixtureModel::try_from(c).map_err(serde::de::Error::custom)
    }
}

pub fn to_json(model: &MixtureModel) -> Result<String> {
    Ok(serde_json::to_string(model)?)
}

pub fn from_json(text: &str) -> Result<MixtureModel> {
    Ok(serde_json::from_str(text)?)
}

pub fn save(model: &MixtureModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<MixtureModel> {
    from_json(&fs::read_to_string(path)?)
}
