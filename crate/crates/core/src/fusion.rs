//! Early, intermediate and late fusion assemblies and their training loop.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Modality;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{
    argmax, backward, clip_global_norm, cross_entropy, AdamConfig, AdamState, CellKind, Example,
    Network, Parameters,
};
use crate::preprocess::{Representation, Window, DEFAULT_PCA_VARIANCE, DEFAULT_STRIDE, DEFAULT_WINDOW};
use crate::rng::{derive_seed, SplitMix64};
use crate::splits::Scheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    Early,
    Intermediate,
    Late,
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fusion::Early => "early",
            Fusion::Intermediate => "intermediate",
            Fusion::Late => "late",
        })
    }
}

/// Everything that determines one experiment, from windowing to training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub scheme: Scheme,
    pub cell: CellKind,
    pub fusion: Fusion,
    pub modalities: Vec<Modality>,
    pub representation: Representation,
    pub window: usize,
    pub stride: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub pca_variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::ErrorDetection,
            cell: CellKind::Lstm,
            fusion: Fusion::Early,
            modalities: Modality::ALL.to_vec(),
            representation: Representation::Normalized,
            window: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
            hidden: 64,
            epochs: 50,
            lr: 1e-3,
            batch: 32,
            seed: 42,
            pca_variance: DEFAULT_PCA_VARIANCE,
            clip_norm: None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.modalities.is_empty() {
            return bad("modalities must be nonempty");
        }
        let mut sorted = self.modalities.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.modalities.len() {
            return bad("modalities must not repeat");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.hidden == 0 || self.batch == 0 || self.window == 0 || self.stride == 0 {
            return bad("hidden, batch, window and stride must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.pca_variance > 0.0 && self.pca_variance <= 1.0) {
            return bad("pca_variance must lie in (0, 1]");
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }

    /// Modalities in canonical order.
    pub fn sorted_modalities(&self) -> Vec<Modality> {
        let mut m = self.modalities.clone();
        m.sort();
        m
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

/// Trained (or freshly initialized) fusion model.
///
/// Early fusion holds one network with one encoder over the concatenated
/// modalities; intermediate fusion one network with an encoder per
/// modality; late fusion one single-encoder network per modality.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub fusion: Fusion,
    pub modalities: Vec<Modality>,
    pub networks: Vec<Network>,
    pub num_classes: usize,
}

/// Network inputs for one window: `[network][encoder]`.
pub type PreparedInputs = Vec<Vec<Matrix>>;

pub fn build_model(cfg: &ModelConfig, dims: &BTreeMap<Modality, usize>) -> Result<Model> {
    cfg.validate()?;
    let modalities = cfg.sorted_modalities();
    let sizes = modalities
        .iter()
        .map(|m| {
            dims.get(m)
                .copied()
                .ok_or_else(|| Error::MissingModality(m.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let classes = cfg.scheme.num_classes();
    let seed = derive_seed(cfg.seed, "model");
    let networks = match cfg.fusion {
        Fusion::Early => {
            let total = sizes.iter().sum();
            vec![Network::init(cfg.cell, &[total], cfg.hidden, classes, &mut SplitMix64::new(seed))]
        }
        Fusion::Intermediate => {
            vec![Network::init(cfg.cell, &sizes, cfg.hidden, classes, &mut SplitMix64::new(seed))]
        }
        Fusion::Late => modalities
            .iter()
            .zip(&sizes)
            .map(|(m, &d)| {
                let mut rng = SplitMix64::new(derive_seed(seed, m.name()));
                Network::init(cfg.cell, &[d], cfg.hidden, classes, &mut rng)
            })
            .collect(),
    };
    Ok(Model {
        fusion: cfg.fusion,
        modalities,
        networks,
        num_classes: classes,
    })
}

impl Model {
    pub fn prepare(&self, window: &Window) -> Result<PreparedInputs> {
        let parts = self
            .modalities
            .iter()
            .map(|&m| window.modality(m))
            .collect::<Result<Vec<_>>>()?;
        Ok(match self.fusion {
            Fusion::Early => vec![vec![Matrix::hconcat(&parts)]],
            Fusion::Intermediate => vec![parts.into_iter().cloned().collect()],
            Fusion::Late => parts.into_iter().map(|x| vec![x.clone()]).collect(),
        })
    }

    pub fn predict_prepared(&self, inputs: &PreparedInputs) -> Result<Vec<f64>> {
        if inputs.len() != self.networks.len() {
            return Err(Error::Shape("prepared inputs do not match model".into()));
        }
        let mut combined = vec![0.0; self.num_classes];
        for (net, groups) in self.networks.iter().zip(inputs) {
            let refs: Vec<&Matrix> = groups.iter().collect();
            let p = net.probabilities(&refs)?;
            for (c, v) in combined.iter_mut().zip(p) {
                *c += v;
            }
        }
        let k = self.networks.len() as f64;
        combined.iter_mut().for_each(|c| *c /= k);
        Ok(combined)
    }

    /// Late fusion without the given modality's submodel. `None` for other
    /// fusion kinds or when it would leave no submodels.
    pub fn without_modality(&self, m: Modality) -> Option<Model> {
        if self.fusion != Fusion::Late {
            return None;
        }
        let idx = self.modalities.iter().position(|&x| x == m)?;
        if self.networks.len() < 2 {
            return None;
        }
        let mut out = self.clone();
        out.modalities.remove(idx);
        out.networks.remove(idx);
        Some(out)
    }

    pub fn is_finite(&self) -> bool {
        self.networks.iter().all(|n| n.is_finite())
    }
}

/// Class probabilities for a transformed window. Late fusion averages the
/// submodels' probability vectors.
pub fn predict(model: &Model, window: &Window) -> Result<Vec<f64>> {
    model.predict_prepared(&model.prepare(window)?)
}

pub fn predict_class(model: &Model, window: &Window) -> Result<usize> {
    Ok(argmax(&predict(model, window)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub initial_train_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainingHistory {
    pub fn final_train_loss(&self) -> f64 {
        self.epochs.last().map_or(self.initial_train_loss, |e| e.train_loss)
    }
}

/// Train every network of a freshly built model. Returns the model holding
/// each network's lowest-validation-loss snapshot and one history per
/// network.
pub fn train_model(
    cfg: &ModelConfig,
    dims: &BTreeMap<Modality, usize>,
    train: &[Window],
    train_labels: &[usize],
    val: &[Window],
    val_labels: &[usize],
) -> Result<(Model, Vec<TrainingHistory>)> {
    if train.is_empty() {
        return Err(Error::Empty("training windows"));
    }
    if train.len() != train_labels.len() || val.len() != val_labels.len() {
        return Err(Error::Shape("windows and labels differ in length".into()));
    }
    let classes = cfg.scheme.num_classes();
    if let Some(&c) = train_labels.iter().chain(val_labels).find(|&&c| c >= classes) {
        return Err(Error::ClassOutOfRange {
            class: c,
            num_classes: classes,
        });
    }
    for c in 0..classes {
        if !train_labels.contains(&c) {
            return Err(Error::InsufficientClass(format!(
                "class {c} missing from training set"
            )));
        }
    }

    let mut model = build_model(cfg, dims)?;
    let train_inputs = train.iter().map(|w| model.prepare(w)).collect::<Result<Vec<_>>>()?;
    let val_inputs = val.iter().map(|w| model.prepare(w)).collect::<Result<Vec<_>>>()?;

    let base_seed = derive_seed(cfg.seed, "train");
    let mut histories = Vec::with_capacity(model.networks.len());
    for (k, net) in model.networks.iter_mut().enumerate() {
        let stream = SplitMix64::new(derive_seed(base_seed, &k.to_string()));
        let train_ex = examples_for(&train_inputs, train_labels, k);
        let val_ex = examples_for(&val_inputs, val_labels, k);
        let (best, history) = train_network(net.clone(), &train_ex, &val_ex, cfg, stream)?;
        *net = best;
        histories.push(history);
    }
    Ok((model, histories))
}

fn examples_for<'a>(inputs: &'a [PreparedInputs], labels: &[usize], k: usize) -> Vec<Example<'a>> {
    inputs
        .iter()
        .zip(labels)
        .map(|(groups, &label)| Example {
            inputs: groups[k].iter().collect(),
            label,
        })
        .collect()
}

fn evaluate(net: &Network, examples: &[Example<'_>]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for ex in examples {
        let p = net.probabilities(&ex.inputs)?;
        loss += cross_entropy(&p, ex.label)?;
        correct += usize::from(argmax(&p) == ex.label);
    }
    let n = examples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

fn train_network(
    mut net: Network,
    train: &[Example<'_>],
    val: &[Example<'_>],
    cfg: &ModelConfig,
    mut rng: SplitMix64,
) -> Result<(Network, TrainingHistory)> {
    let mut adam = AdamState::new(cfg.adam(), &net);
    // Without validation windows, selection falls back to training loss.
    let select_on = if val.is_empty() { train } else { val };
    let initial_train_loss = net.mean_loss(train)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = net.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 1;
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<Example<'_>> = chunk.iter().map(|&i| train[i].clone()).collect();
            let (loss, mut grads) = backward(&net, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("non-finite loss in epoch {epoch}")));
            }
            if let Some(max_norm) = cfg.clip_norm {
                clip_global_norm(&mut grads, max_norm);
            }
            adam.update(&mut net, &grads)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let (val_loss, val_accuracy) = evaluate(&net, select_on)?;
        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best = net.clone();
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            val_accuracy,
        });
    }
    Ok((
        best,
        TrainingHistory {
            initial_train_loss,
            epochs,
            best_epoch,
        },
    ))
}
