//! Python bindings. Structured results cross the boundary as JSON and are
//! decoded with Python's `json` module, so they arrive as plain dicts and
//! lists with the same field names as the on-disk records.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use rupture::corpus::{self, Modality};
use rupture::fusion::ModelConfig;
use rupture::harness::{self, GridSpec, ReportFormat};
use rupture::metrics::{self, MetricSet};
use rupture::splits::{self, Scheme};
use rupture::synth::{self, Profile, SynthConfig};

fn to_py(e: rupture::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_json<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_json(obj: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(s) = obj.extract::<String>() {
        return Ok(s);
    }
    obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()
}

fn parse_scheme(key: &str) -> PyResult<Scheme> {
    Scheme::ALL
        .into_iter()
        .find(|s| s.key() == key)
        .ok_or_else(|| PyValueError::new_err(format!("unknown scheme `{key}`")))
}

/// Expand a config dict (or JSON text) that must name a single combination.
fn single_config(corpus: &corpus::Corpus, config: &Bound<'_, PyAny>) -> PyResult<ModelConfig> {
    let spec = GridSpec::from_json(&from_json(config)?).map_err(to_py)?;
    let mut configs = spec.expand(&corpus.common_modalities()).map_err(to_py)?;
    if configs.len() != 1 {
        return Err(PyValueError::new_err(format!(
            "config expands to {} combinations; use run_grid",
            configs.len()
        )));
    }
    Ok(configs.remove(0))
}

/// A validated multimodal corpus.
#[pyclass(frozen, module = "rupture_py")]
struct Corpus {
    inner: corpus::Corpus,
}

#[pymethods]
impl Corpus {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        corpus::load_corpus(path)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    /// Deterministic synthetic corpus; `drift` and `noise` override the
    /// profile defaults.
    #[staticmethod]
    #[pyo3(signature = (participants=5, seed=42, profile="separable", drift=None, noise=None))]
    fn synth(
        participants: usize,
        seed: u64,
        profile: &str,
        drift: Option<f64>,
        noise: Option<f64>,
    ) -> PyResult<Self> {
        let profile: Profile = profile.parse().map_err(to_py)?;
        let mut cfg = SynthConfig::with_profile(profile);
        cfg.participants = participants;
        cfg.seed = seed;
        if let Some(d) = drift {
            cfg.drift = d;
        }
        if let Some(n) = noise {
            cfg.noise_sd = n;
        }
        synth::generate_corpus(&cfg)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        corpus::write_corpus(&self.inner, path).map_err(to_py)
    }

    fn participant_ids(&self) -> Vec<String> {
        self.inner.participant_ids().map(String::from).collect()
    }

    fn common_modalities(&self) -> Vec<&'static str> {
        self.inner.common_modalities().into_iter().map(Modality::name).collect()
    }

    fn num_frames(&self, participant_id: &str) -> PyResult<usize> {
        Ok(self.session(participant_id)?.num_frames)
    }

    fn error_onsets(&self, participant_id: &str) -> PyResult<Vec<usize>> {
        Ok(self.session(participant_id)?.error_onsets.clone())
    }

    /// Per-frame error-stage labels 0..=3.
    fn frame_labels(&self, participant_id: &str) -> PyResult<Vec<u8>> {
        Ok(corpus::label_frames(self.session(participant_id)?).0)
    }

    /// Feature rows of one modality as a list of lists.
    fn features(&self, participant_id: &str, modality: &str) -> PyResult<Vec<Vec<f64>>> {
        let m: Modality = modality.parse().map_err(to_py)?;
        let x = self
            .session(participant_id)?
            .features
            .get(&m)
            .ok_or_else(|| PyValueError::new_err(format!("{participant_id} has no {m} features")))?;
        Ok((0..x.rows()).map(|r| x.row(r).to_vec()).collect())
    }

    fn __len__(&self) -> usize {
        self.inner.sessions().len()
    }

    fn __repr__(&self) -> String {
        format!("Corpus({} sessions)", self.inner.sessions().len())
    }
}

impl Corpus {
    fn session(&self, participant_id: &str) -> PyResult<&corpus::Session> {
        self.inner
            .session(participant_id)
            .ok_or_else(|| PyValueError::new_err(format!("unknown participant `{participant_id}`")))
    }
}

/// Split raw window labels for `scheme`; returns train/val/test indices
/// and the scheme class of every included window.
#[pyfunction]
fn split<'py>(py: Python<'py>, raw_labels: Vec<u8>, scheme: &str, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let plan = splits::split(&raw_labels, parse_scheme(scheme)?, seed).map_err(to_py)?;
    to_json(py, &plan)
}

/// Accuracy and macro precision/recall/F1, plus balanced accuracy.
#[pyfunction]
fn metric_set<'py>(py: Python<'py>, preds: Vec<usize>, labels: Vec<usize>, num_classes: usize) -> PyResult<Bound<'py, PyAny>> {
    let cm = metrics::confusion(&preds, &labels, num_classes).map_err(to_py)?;
    let m = metrics::metric_set(&cm).map_err(to_py)?;
    let out = to_json(py, &m)?;
    out.set_item("balanced_accuracy", metrics::balanced_accuracy(&cm).map_err(to_py)?)?;
    Ok(out)
}

/// Mean ± sample SD of per-fold metric dicts.
#[pyfunction]
fn aggregate<'py>(py: Python<'py>, folds: Vec<Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let sets = folds
        .iter()
        .map(|f| {
            Ok(MetricSet {
                accuracy: f.get_item("accuracy")?.extract()?,
                precision: f.get_item("precision")?.extract()?,
                recall: f.get_item("recall")?.extract()?,
                f1: f.get_item("f1")?.extract()?,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    to_json(py, &metrics::aggregate(&sets).map_err(to_py)?)
}

#[pyfunction]
fn softmax(logits: Vec<f64>) -> Vec<f64> {
    rupture::nn::softmax(&logits)
}

/// Train and evaluate one participant's fold. Returns the fold record.
#[pyfunction]
fn run_fold<'py>(py: Python<'py>, corpus: &Corpus, participant_id: &str, config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = single_config(&corpus.inner, config)?;
    let (record, _) = py
        .detach(|| harness::run_fold(&corpus.inner, participant_id, &cfg))
        .map_err(to_py)?;
    to_json(py, &record)
}

#[derive(Serialize)]
struct ConfigSummary<'a> {
    config: &'a ModelConfig,
    folds: &'a [harness::FoldResult],
    skipped: &'a [harness::SkippedFold],
    aggregate: &'a metrics::AggregateMetrics,
}

/// Run every participant's fold for one configuration.
#[pyfunction]
fn run_config<'py>(py: Python<'py>, corpus: &Corpus, config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = single_config(&corpus.inner, config)?;
    let r = py.detach(|| harness::run_config(&corpus.inner, &cfg)).map_err(to_py)?;
    to_json(
        py,
        &ConfigSummary {
            config: &r.config,
            folds: &r.folds,
            skipped: &r.skipped,
            aggregate: &r.aggregate,
        },
    )
}

/// Run a grid config. With `out`, records, checkpoints and reports are
/// written there and earlier records are reused. Returns the markdown table.
#[pyfunction]
#[pyo3(signature = (corpus, config, out=None))]
fn run_grid(py: Python<'_>, corpus: &Corpus, config: &Bound<'_, PyAny>, out: Option<PathBuf>) -> PyResult<String> {
    let spec = GridSpec::from_json(&from_json(config)?).map_err(to_py)?;
    let configs = spec.expand(&corpus.inner.common_modalities()).map_err(to_py)?;
    py.detach(|| {
        harness::run_grid(&corpus.inner, &configs, out.as_deref())?.render(ReportFormat::Markdown)
    })
    .map_err(to_py)
}

#[pymodule]
fn rupture_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Corpus>()?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(metric_set, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(run_fold, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_grid, m)?)?;
    Ok(())
}
