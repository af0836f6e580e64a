//! One participant's experiment: label, window, split, fit, train, evaluate.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::corpus::{label_frames, Corpus};
use crate::error::{Error, Result};
use crate::fusion::{predict_class, train_model, Model, ModelConfig, TrainingHistory};
use crate::metrics::{confusion, metric_set, ConfusionMatrix, MetricSet};
use crate::preprocess::{make_windows, FittedTransforms, Window};
use crate::rng::{derive_seed, stable_hash};
use crate::splits::{split, SplitPlan};

/// Seed for everything random inside one participant's fold.
pub fn fold_seed(global_seed: u64, participant_id: &str) -> u64 {
    stable_hash(global_seed, participant_id.as_bytes())
}

/// Windows and split plan for one fold, before any fitting.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub participant_id: String,
    pub seed: u64,
    pub windows: Vec<Window>,
    pub plan: SplitPlan,
}

impl FoldData {
    pub fn subset(&self, indices: &[usize]) -> Vec<Window> {
        indices.iter().map(|&i| self.windows[i].clone()).collect()
    }
}

pub fn prepare_fold(corpus: &Corpus, participant_id: &str, cfg: &ModelConfig) -> Result<FoldData> {
    cfg.validate()?;
    let session = corpus
        .session(participant_id)
        .ok_or_else(|| Error::UnknownParticipant(participant_id.to_string()))?;
    for m in &cfg.modalities {
        if !session.features.contains_key(m) {
            return Err(Error::MissingModality(m.to_string()));
        }
    }
    let labels = label_frames(session);
    let windows = make_windows(session, &labels, cfg.window, cfg.stride)?;
    if windows.is_empty() {
        return Err(Error::InsufficientClass(format!(
            "window {} longer than session ({} frames)",
            cfg.window, session.num_frames
        )));
    }
    let seed = fold_seed(cfg.seed, participant_id);
    let raw: Vec<u8> = windows.iter().map(|w| w.raw_label).collect();
    let plan = split(&raw, cfg.scheme, derive_seed(seed, "split"))?;
    if plan.test.is_empty() {
        return Err(Error::InsufficientClass("empty test set".into()));
    }
    Ok(FoldData {
        participant_id: participant_id.to_string(),
        seed,
        windows,
        plan,
    })
}

#[derive(Debug, Clone)]
pub struct TrainedFold {
    pub transforms: FittedTransforms,
    pub model: Model,
    pub histories: Vec<TrainingHistory>,
    pub checkpoint: Checkpoint,
}

/// Fit transforms on the training partition and train a model. Test
/// windows are never read.
pub fn train_fold(fold: &FoldData, cfg: &ModelConfig) -> Result<TrainedFold> {
    let plan = &fold.plan;
    let train_windows = fold.subset(&plan.train);
    let modalities = cfg.sorted_modalities();
    let transforms =
        FittedTransforms::fit(cfg.representation, &train_windows, &modalities, cfg.pca_variance)?;
    let apply = |ws: Vec<Window>| ws.iter().map(|w| transforms.apply(w)).collect::<Result<Vec<_>>>();
    let train = apply(train_windows)?;
    let val = apply(fold.subset(&plan.val))?;
    let trained_cfg = ModelConfig {
        seed: derive_seed(fold.seed, "model"),
        ..cfg.clone()
    };
    let (model, histories) = train_model(
        &trained_cfg,
        &transforms.output_dims(),
        &train,
        &plan.labels(&plan.train),
        &val,
        &plan.labels(&plan.val),
    )?;
    if !model.is_finite() {
        return Err(Error::Numerical("trained parameters are not finite".into()));
    }
    let checkpoint = Checkpoint {
        config: trained_cfg,
        transforms: transforms.clone(),
        model: model.clone(),
    };
    Ok(TrainedFold {
        transforms,
        model,
        histories,
        checkpoint,
    })
}

/// Predictions and confusion matrix on the fold's test partition.
pub fn evaluate_fold(trained: &TrainedFold, fold: &FoldData) -> Result<(Vec<usize>, ConfusionMatrix)> {
    let plan = &fold.plan;
    let preds = plan
        .test
        .iter()
        .map(|&i| predict_class(&trained.model, &trained.transforms.apply(&fold.windows[i])?))
        .collect::<Result<Vec<_>>>()?;
    let cm = confusion(&preds, &plan.labels(&plan.test), plan.num_classes)?;
    Ok((preds, cm))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub participant_id: String,
    pub config: ModelConfig,
    pub metrics: MetricSet,
    pub confusion: ConfusionMatrix,
    /// Kept epoch per trained network (one entry unless late fusion).
    pub best_epochs: Vec<usize>,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub transform_checksum: String,
    pub checkpoint_checksum: String,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub participant_id: String,
    pub config: ModelConfig,
    pub reason: String,
}

/// One line of `folds.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum FoldRecord {
    Completed(FoldResult),
    Skipped(SkippedFold),
}

impl FoldRecord {
    pub fn participant_id(&self) -> &str {
        match self {
            FoldRecord::Completed(r) => &r.participant_id,
            FoldRecord::Skipped(s) => &s.participant_id,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            FoldRecord::Completed(r) => &r.config,
            FoldRecord::Skipped(s) => &s.config,
        }
    }
}

fn is_skippable(e: &Error) -> bool {
    matches!(
        e,
        Error::InsufficientClass(_) | Error::UnsatisfiableDownsampling { .. }
    )
}

/// Complete fold run. Unsatisfiable split or class requirements become a
/// skipped record; other failures are errors.
pub fn run_fold(corpus: &Corpus, participant_id: &str, cfg: &ModelConfig) -> Result<(FoldRecord, Option<Checkpoint>)> {
    let started = Instant::now();
    let skipped = |e: Error| {
        (
            FoldRecord::Skipped(SkippedFold {
                participant_id: participant_id.to_string(),
                config: cfg.clone(),
                reason: e.to_string(),
            }),
            None,
        )
    };
    let fold = match prepare_fold(corpus, participant_id, cfg) {
        Ok(f) => f,
        Err(e) if is_skippable(&e) => return Ok(skipped(e)),
        Err(e) => return Err(e),
    };
    let trained = match train_fold(&fold, cfg) {
        Ok(t) => t,
        Err(e) if is_skippable(&e) => return Ok(skipped(e)),
        Err(e) => return Err(e),
    };
    let (_, cm) = evaluate_fold(&trained, &fold)?;
    let result = FoldResult {
        participant_id: participant_id.to_string(),
        config: cfg.clone(),
        metrics: metric_set(&cm)?,
        confusion: cm,
        best_epochs: trained.histories.iter().map(|h| h.best_epoch).collect(),
        train_size: fold.plan.train.len(),
        val_size: fold.plan.val.len(),
        test_size: fold.plan.test.len(),
        transform_checksum: format!("{:016x}", trained.transforms.checksum()),
        checkpoint_checksum: format!("{:016x}", trained.checkpoint.checksum()),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok((FoldRecord::Completed(result), Some(trained.checkpoint)))
}
