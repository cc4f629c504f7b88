//! Python bindings: cohorts, models, training, evaluation and analysis.
//!
//! Matrices cross the boundary as nested lists of floats; reports and
//! metrics as plain dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use hscf_core::analysis::{
    confusion_metrics, evaluate_task, group_mean_sfc, stage_difference, stage_pair_report,
    AnalysisReport, ConfusionCounts, ThresholdScope,
};
use hscf_core::data::{
    empirical_group_mean, generate_synthetic_cohort, load_cohort, save_cohort, split_cohort, Stage,
    Task,
};
use hscf_core::gradcheck::{check_model_gradients, GradCheckOptions};
use hscf_core::train::{fit, load_checkpoint, save_checkpoint, TrainConfig, TrainingMeta};
use hscf_core::{HscfError, ModelConfig, Tensor};

fn py_err(e: HscfError) -> PyErr {
    match e {
        HscfError::Io { .. } | HscfError::MissingFile { .. } => PyIOError::new_err(e.to_string()),
        HscfError::Contract(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows())
        .map(|i| (0..t.cols()).map(|j| t.at(i, j)).collect())
        .collect()
}

/// `(sc, fc, volumes)` of one subject.
type SubjectData = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>);

fn parse_task(task: &str) -> PyResult<Task> {
    task.parse()
        .map_err(|e: HscfError| PyValueError::new_err(e.to_string()))
}

/// A labelled set of subjects sharing one ROI atlas.
#[pyclass(module = "hscf", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Cohort {
    inner: hscf_core::data::Cohort,
}

#[pymethods]
impl Cohort {
    /// Synthetic cohort with planted stage effects.
    #[staticmethod]
    #[pyo3(signature = (seed=0, subjects_per_class=76, n_rois=90, signal=0.4))]
    fn generate(
        seed: u64,
        subjects_per_class: usize,
        n_rois: usize,
        signal: f64,
    ) -> PyResult<Self> {
        let inner =
            generate_synthetic_cohort(seed, subjects_per_class, n_rois, signal).map_err(py_err)?;
        Ok(Cohort { inner })
    }

    /// Loads a cohort directory or its `cohort.json` manifest.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Cohort {
            inner: load_cohort(&path).map_err(py_err)?,
        })
    }

    /// Writes the cohort under `dir`; returns the manifest path.
    fn save(&self, dir: PathBuf) -> PyResult<PathBuf> {
        save_cohort(&self.inner, &dir).map_err(py_err)
    }

    #[getter]
    fn n_rois(&self) -> usize {
        self.inner.n_rois()
    }

    #[getter]
    fn roi_names(&self) -> Vec<String> {
        self.inner.atlas.names().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn subject_ids(&self) -> Vec<String> {
        self.inner.subjects.iter().map(|s| s.id.clone()).collect()
    }

    fn labels(&self) -> Vec<String> {
        self.inner
            .subjects
            .iter()
            .map(|s| s.label.to_string())
            .collect()
    }

    /// `(sc, fc, volumes)` of subject `index`.
    fn subject(&self, index: usize) -> PyResult<SubjectData> {
        let s = self
            .inner
            .subjects
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("no subject at index {index}")))?;
        Ok((
            rows(s.sc.weights()),
            rows(s.fc.weights()),
            s.volumes.clone(),
        ))
    }

    /// Stratified `(train, test)` split for a binary task.
    #[pyo3(signature = (task="nc-emci", train_fraction=0.8, seed=0))]
    fn split(&self, task: &str, train_fraction: f64, seed: u64) -> PyResult<(Cohort, Cohort)> {
        let (train, test) =
            split_cohort(&self.inner, parse_task(task)?, train_fraction, seed).map_err(py_err)?;
        Ok((Cohort { inner: train }, Cohort { inner: test }))
    }

    fn __repr__(&self) -> String {
        format!(
            "Cohort(subjects={}, n_rois={})",
            self.inner.len(),
            self.inner.n_rois()
        )
    }
}

/// A trained or freshly initialized fusion model.
#[pyclass(module = "hscf", frozen)]
pub struct Model {
    inner: hscf_core::HscfModel,
    meta: Option<TrainingMeta>,
}

#[pymethods]
impl Model {
    /// Standard-width model with Glorot-initialized weights.
    #[new]
    #[pyo3(signature = (n_rois=90, seed=0))]
    fn new(n_rois: usize, seed: u64) -> PyResult<Self> {
        let inner =
            hscf_core::HscfModel::new(ModelConfig::standard(n_rois), seed).map_err(py_err)?;
        Ok(Model { inner, meta: None })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (inner, meta) = load_checkpoint(&path).map_err(py_err)?;
        Ok(Model {
            inner,
            meta: Some(meta),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let meta = self
            .meta
            .clone()
            .unwrap_or_else(|| TrainingMeta::from_config(&TrainConfig::default()));
        save_checkpoint(&self.inner, &meta, &path).map_err(py_err)
    }

    #[getter]
    fn n_rois(&self) -> usize {
        self.inner.config.n_rois
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.params.iter().map(|(_, t)| t.len()).sum()
    }

    /// Eval-mode forward pass on subject `index`: dict with `a_m`,
    /// `a1_rec`, `a2_rec` and `probs`.
    fn forward(&self, py: Python<'_>, cohort: &Cohort, index: usize) -> PyResult<Py<PyAny>> {
        let subject = cohort
            .inner
            .subjects
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("no subject at index {index}")))?;
        let out = py
            .detach(|| self.inner.forward_eval(subject))
            .map_err(py_err)?;
        #[derive(Serialize)]
        struct Forward {
            a_m: Vec<Vec<f64>>,
            a1_rec: Vec<Vec<f64>>,
            a2_rec: Vec<Vec<f64>>,
            probs: [f64; 2],
        }
        to_py(
            py,
            &Forward {
                a_m: rows(&out.a_m),
                a1_rec: rows(&out.a1_rec),
                a2_rec: rows(&out.a2_rec),
                probs: out.probs,
            },
        )
    }

    /// Metrics on every subject of the task's two stages in `cohort`.
    #[pyo3(signature = (cohort, task="nc-emci"))]
    fn evaluate(&self, py: Python<'_>, cohort: &Cohort, task: &str) -> PyResult<Py<PyAny>> {
        let task = parse_task(task)?;
        let subset = cohort.inner.for_task(task);
        let result = py
            .detach(|| evaluate_task(&self.inner, &subset, task))
            .map_err(py_err)?;
        to_py(py, &result)
    }

    fn __repr__(&self) -> String {
        format!("Model(n_rois={})", self.inner.config.n_rois)
    }
}

/// Trains on `cohort`. `config` is a JSON object with the same keys as the
/// CLI's `--config`; the keyword arguments override it. Returns
/// `(model, report)`.
#[pyfunction]
#[pyo3(signature = (cohort, config=None, epochs=None, seed=None, task=None, lr=None))]
fn train(
    py: Python<'_>,
    cohort: &Cohort,
    config: Option<&str>,
    epochs: Option<usize>,
    seed: Option<u64>,
    task: Option<&str>,
    lr: Option<f64>,
) -> PyResult<(Model, Py<PyAny>)> {
    let mut cfg = match config {
        Some(text) => TrainConfig::from_json(text).map_err(py_err)?,
        None => TrainConfig::default(),
    };
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = task {
        cfg.task = parse_task(t)?;
    }
    if let Some(l) = lr {
        cfg.lr = l;
    }
    let out = py.detach(|| fit(&cfg, &cohort.inner)).map_err(py_err)?;
    let report = to_py(py, &out.report)?;
    let model = Model {
        inner: out.model,
        meta: Some(TrainingMeta::from_config(&cfg)),
    };
    Ok((model, report))
}

/// Accuracy, sensitivity, specificity and F1 from confusion counts.
#[pyfunction]
#[pyo3(signature = (tp, fn_, tn, fp))]
fn metrics(py: Python<'_>, tp: usize, fn_: usize, tn: usize, fp: usize) -> PyResult<Py<PyAny>> {
    let m = confusion_metrics(&ConfusionCounts::new(tp, fn_, tn, fp)).map_err(py_err)?;
    to_py(py, &m)
}

/// Stage-transition report: group means from the inputs, or from the
/// model's fused connectivity when `model` is given.
#[pyfunction]
#[pyo3(signature = (cohort, model=None, quantile=0.75, top_k=5, per_direction=false))]
fn analyze(
    py: Python<'_>,
    cohort: &Cohort,
    model: Option<&Model>,
    quantile: f64,
    top_k: usize,
    per_direction: bool,
) -> PyResult<Py<PyAny>> {
    let scope = if per_direction {
        ThresholdScope::PerDirection
    } else {
        ThresholdScope::Pooled
    };
    let cohort = &cohort.inner;
    let report = py
        .detach(|| -> hscf_core::Result<AnalysisReport> {
            let means = Stage::ALL
                .iter()
                .map(|&s| match model {
                    Some(m) => group_mean_sfc(&m.inner, cohort, s),
                    None => empirical_group_mean(cohort, s),
                })
                .collect::<hscf_core::Result<Vec<_>>>()?;
            let mut pairs = Vec::new();
            for (i, (from, to)) in [(Stage::Nc, Stage::Emci), (Stage::Emci, Stage::Lmci)]
                .into_iter()
                .enumerate()
            {
                let diff = stage_difference(&means[i + 1], &means[i])?;
                pairs.push(stage_pair_report(
                    &diff,
                    from,
                    to,
                    &cohort.atlas,
                    quantile,
                    top_k,
                    scope,
                )?);
            }
            Ok(AnalysisReport {
                task: model.and_then(|m| m.meta.as_ref().and_then(|meta| meta.task)),
                source: if model.is_some() { "model" } else { "input" }.to_string(),
                metrics: None,
                stage_pairs: pairs,
            })
        })
        .map_err(py_err)?;
    to_py(py, &report)
}

/// Finite-difference check of every parameter gradient on a toy model.
#[pyfunction]
#[pyo3(signature = (n_rois=6, seed=0))]
fn gradcheck(py: Python<'_>, n_rois: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let opts = GradCheckOptions {
        n_rois,
        seed,
        ..GradCheckOptions::default()
    };
    let report = py.detach(|| check_model_gradients(&opts)).map_err(py_err)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        passed: bool,
        report: &'a hscf_core::gradcheck::GradCheckReport,
    }
    to_py(
        py,
        &Summary {
            passed: report.passed(),
            report: &report,
        },
    )
}

#[pymodule]
fn hscf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Cohort>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
