//! JSON experiment configs. Any key may hold an array to sweep it in a grid.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::corpus::Modality;
use crate::error::{Error, Result};
use crate::fusion::{Fusion, ModelConfig};
use crate::nn::CellKind;
use crate::preprocess::Representation;
use crate::splits::Scheme;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    Many(Vec<T>),
    One(T),
}

impl<T: Clone> OneOrMany<T> {
    fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// `["facial", "audio"]` is one modality set; `[["facial"], ["pose", "audio"]]`
/// sweeps two.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ModalitySets {
    Many(Vec<Vec<Modality>>),
    One(Vec<Modality>),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub scheme: Option<OneOrMany<Scheme>>,
    pub cell: Option<OneOrMany<CellKind>>,
    pub modalities: Option<ModalitySets>,
    pub representation: Option<OneOrMany<Representation>>,
    pub fusion: Option<OneOrMany<Fusion>>,
    pub window: Option<OneOrMany<usize>>,
    pub stride: Option<OneOrMany<usize>>,
    pub hidden: Option<OneOrMany<usize>>,
    pub epochs: Option<OneOrMany<usize>>,
    pub lr: Option<OneOrMany<f64>>,
    pub batch: Option<OneOrMany<usize>>,
    pub seed: Option<OneOrMany<u64>>,
    pub pca_variance: Option<OneOrMany<f64>>,
    pub clip_norm: Option<OneOrMany<f64>>,
}

fn sweep<T: Clone>(
    configs: Vec<ModelConfig>,
    axis: &Option<OneOrMany<T>>,
    set: impl Fn(&mut ModelConfig, T),
) -> Result<Vec<ModelConfig>> {
    let Some(axis) = axis else {
        return Ok(configs);
    };
    let values = axis.values();
    let set = &set;
    if values.is_empty() {
        return Err(Error::InvalidConfig("swept key has no values".into()));
    }
    Ok(configs
        .into_iter()
        .flat_map(|c| {
            values.iter().cloned().map(move |v| {
                let mut c = c.clone();
                set(&mut c, v);
                c
            })
        })
        .collect())
}

impl GridSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        parse_json(text, "config")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// Cartesian product in the order scheme × cell × modalities ×
    /// representation × fusion × remaining keys. Missing `modalities`
    /// defaults to `available`; sets naming unavailable modalities are
    /// rejected.
    pub fn expand(&self, available: &[Modality]) -> Result<Vec<ModelConfig>> {
        let mut configs = vec![ModelConfig::default()];
        configs = sweep(configs, &self.scheme, |c, v| c.scheme = v)?;
        configs = sweep(configs, &self.cell, |c, v| c.cell = v)?;
        let sets = match &self.modalities {
            None => vec![available.to_vec()],
            Some(ModalitySets::One(s)) => vec![s.clone()],
            Some(ModalitySets::Many(s)) => s.clone(),
        };
        for set in &sets {
            if let Some(m) = set.iter().find(|m| !available.contains(m)) {
                return Err(Error::MissingModality(m.to_string()));
            }
        }
        configs = sweep(configs, &Some(OneOrMany::Many(sets)), |c, v| c.modalities = v)?;
        configs = sweep(configs, &self.representation, |c, v| c.representation = v)?;
        configs = sweep(configs, &self.fusion, |c, v| c.fusion = v)?;
        configs = sweep(configs, &self.window, |c, v| c.window = v)?;
        configs = sweep(configs, &self.stride, |c, v| c.stride = v)?;
        configs = sweep(configs, &self.hidden, |c, v| c.hidden = v)?;
        configs = sweep(configs, &self.epochs, |c, v| c.epochs = v)?;
        configs = sweep(configs, &self.lr, |c, v| c.lr = v)?;
        configs = sweep(configs, &self.batch, |c, v| c.batch = v)?;
        configs = sweep(configs, &self.seed, |c, v| c.seed = v)?;
        configs = sweep(configs, &self.pca_variance, |c, v| c.pca_variance = v)?;
        configs = sweep(configs, &self.clip_norm, |c, v| c.clip_norm = Some(v))?;
        for c in &mut configs {
            c.modalities.sort();
            c.validate()?;
        }
        Ok(configs)
    }
}

fn parse_json<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("{what}: {e}")))
}
