//! Mini-batch training with AdamW, checkpoints and run reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{evaluate_task, EvalResult};
use crate::data::{split_cohort, Cohort, Task};
use crate::error::{HscfError, Result};
use crate::losses::{
    cls_var, cos_var, kl_var, rec_var, total_var, LossBreakdown, LossVars, LossWeights,
};
use crate::model::{ForwardVars, HscfModel, LatentNoise, ModelConfig, PreparedSubject};
use crate::tape::{Gradients, ParameterStore, Tape};
use crate::tensor::Tensor;

/// AdamW with decoupled weight decay:
/// `θ ← θ − lr · (m̂ / (sqrt(v̂) + ε) + wd · θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub t: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamState {
    /// β = (0.9, 0.99), ε = 1e-8.
    pub fn new(params: &ParameterStore, lr: f64, weight_decay: f64) -> Self {
        let zeros: BTreeMap<String, Tensor> = params
            .iter()
            .map(|(n, t)| (n.to_string(), t.zeros_like()))
            .collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ParameterStore, grads: &Gradients) -> Result<()> {
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps, wd) = (self.beta1, self.beta2, self.lr, self.eps, self.weight_decay);
        for (name, theta) in params.iter_mut() {
            let g = grads
                .get(name)
                .ok_or_else(|| HscfError::Contract(format!("no gradient for {name}")))?;
            let m = self
                .m
                .get_mut(name)
                .ok_or_else(|| HscfError::Contract(format!("no moment for {name}")))?;
            let v = self
                .v
                .get_mut(name)
                .ok_or_else(|| HscfError::Contract(format!("no moment for {name}")))?;
            if g.shape() != theta.shape() {
                return Err(HscfError::Shape {
                    op: "adam step",
                    left: theta.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            let (m, v) = (m.data_mut(), v.data_mut());
            for (i, (th, &gi)) in theta.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *th -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * *th);
            }
        }
        Ok(())
    }
}

fn default_epochs() -> usize {
    200
}
fn default_batch_size() -> usize {
    8
}
fn default_lr() -> f64 {
    1e-3
}
fn default_weight_decay() -> f64 {
    0.01
}
fn default_eval_every() -> usize {
    10
}
fn default_train_fraction() -> f64 {
    0.8
}
fn default_task() -> Task {
    Task::NcVsEmci
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_task")]
    pub task: Task,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub loss_weights: LossWeights,
    /// Drives the split, initialization, shuffling and sampling noise.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub separate_universal: bool,
    /// Evaluate on the held-out split every this many epochs (and after the
    /// last one). Zero evaluates only after the last epoch.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Layer widths; `n_rois` is taken from the cohort. Standard widths if absent.
    #[serde(default)]
    pub widths: Option<Widths>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widths {
    pub hidden1: usize,
    pub hidden2: usize,
    pub latent: usize,
    pub cls_hidden1: usize,
    pub cls_hidden2: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            task: default_task(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            lr: default_lr(),
            weight_decay: default_weight_decay(),
            loss_weights: LossWeights::default(),
            seed: 0,
            separate_universal: false,
            eval_every: default_eval_every(),
            train_fraction: default_train_fraction(),
            widths: None,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text)
            .map_err(|e| HscfError::json("parsing training config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HscfError::InvalidArgument(msg));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad(format!(
                "train_fraction must be in (0, 1], got {}",
                self.train_fraction
            ));
        }
        self.loss_weights.validate()
    }

    pub fn model_config(&self, n_rois: usize) -> ModelConfig {
        let mut cfg = ModelConfig::standard(n_rois);
        if let Some(w) = self.widths {
            cfg.hidden1 = w.hidden1;
            cfg.hidden2 = w.hidden2;
            cfg.latent = w.latent;
            cfg.cls_hidden1 = w.cls_hidden1;
            cfg.cls_hidden2 = w.cls_hidden2;
        }
        cfg.separate_universal = self.separate_universal;
        cfg
    }
}

/// Records the forward pass and all four losses for one subject.
pub fn subject_loss_var(
    model: &HscfModel,
    tape: &mut Tape,
    subject: &PreparedSubject,
    noise: Option<&LatentNoise>,
    task: Task,
    weights: &LossWeights,
) -> Result<(ForwardVars, LossVars)> {
    let fv = model.forward_var(tape, subject, noise)?;
    let pairs: Vec<_> = (0..4).map(|k| (fv.mu[k], fv.logvar[k])).collect();
    let kl = kl_var(tape, &pairs)?;
    let a1 = tape.constant(subject.sc.clone());
    let a2 = tape.constant(subject.fc.clone());
    let rec = rec_var(tape, fv.a1_rec, fv.a2_rec, a1, a2)?;
    let cos = cos_var(tape, fv.z[1], fv.z[3])?;
    let cls = cls_var(tape, fv.probs, subject.label, task)?;
    let losses = total_var(tape, kl, rec, cos, cls, weights)?;
    Ok((fv, losses))
}

/// Loss values and parameter gradients for one subject.
pub fn subject_gradients(
    model: &HscfModel,
    subject: &PreparedSubject,
    noise: Option<&LatentNoise>,
    task: Task,
    weights: &LossWeights,
) -> Result<(LossBreakdown, Gradients)> {
    let mut tape = Tape::new();
    let (_, losses) = subject_loss_var(model, &mut tape, subject, noise, task, weights)?;
    let grads = tape.backward(losses.total, &model.params)?;
    Ok((losses.breakdown(&tape), grads))
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent stream seed for `(seed, stream, a, b)`.
fn derive_seed(seed: u64, stream: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(splitmix(splitmix(seed) ^ stream) ^ a) ^ b)
}

const SHUFFLE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Sampling noise for training subject `index` in `epoch`.
pub fn subject_noise(seed: u64, epoch: usize, index: usize, config: &ModelConfig) -> LatentNoise {
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(seed, NOISE_STREAM, epoch as u64, index as u64));
    LatentNoise::sample(&mut rng, config.n_rois, config.latent)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Subject-averaged losses over the epoch.
    pub loss: LossBreakdown,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalResult>,
}

/// One pass over `subjects` (sorted by id): seeded shuffle, batches of
/// `batch_size`, one optimizer step per batch on the batch-mean gradient.
/// Per-subject work runs in parallel; gradients are reduced in id order, so
/// the result does not depend on the thread count.
pub fn train_epoch(
    model: &mut HscfModel,
    adam: &mut AdamState,
    subjects: &[PreparedSubject],
    config: &TrainConfig,
    epoch: usize,
) -> Result<(LossBreakdown, usize)> {
    let mut order: Vec<usize> = (0..subjects.len()).collect();
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SHUFFLE_STREAM, epoch as u64, 0));
    order.shuffle(&mut rng);
    let mut total = LossBreakdown::default();
    let mut steps = 0;
    for batch in order.chunks(config.batch_size) {
        let mut sorted = batch.to_vec();
        sorted.sort_unstable();
        let model_ref: &HscfModel = model;
        let results: Vec<(LossBreakdown, Gradients)> = sorted
            .par_iter()
            .map(|&i| {
                let noise = subject_noise(config.seed, epoch, i, &model_ref.config);
                subject_gradients(
                    model_ref,
                    &subjects[i],
                    Some(&noise),
                    config.task,
                    &config.loss_weights,
                )
            })
            .collect::<Result<_>>()?;
        let mut grads = Gradients::zeros_like(&model.params);
        for (loss, g) in &results {
            total.add(loss);
            grads.accumulate(g)?;
        }
        grads.scale(1.0 / results.len() as f64);
        adam.step(&mut model.params, &grads)?;
        steps += 1;
    }
    Ok((total.scaled(1.0 / subjects.len().max(1) as f64), steps))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub epochs: Vec<EpochRecord>,
    /// Held-out metrics after the last epoch, if the test split is non-empty.
    pub final_eval: Option<EvalResult>,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    /// One JSON object per epoch.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(
                &serde_json::to_string(e)
                    .map_err(|err| HscfError::json("encoding epoch record", err))?,
            );
            out.push('\n');
        }
        Ok(out)
    }
}

/// Where a trained model came from; stored alongside the parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub task: Option<Task>,
    pub seed: Option<u64>,
    pub train_fraction: Option<f64>,
    pub epochs: Option<usize>,
}

impl TrainingMeta {
    pub fn from_config(config: &TrainConfig) -> Self {
        TrainingMeta {
            task: Some(config.task),
            seed: Some(config.seed),
            train_fraction: Some(config.train_fraction),
            epochs: Some(config.epochs),
        }
    }
}

pub struct FitOutput {
    pub model: HscfModel,
    pub report: TrainReport,
    pub train: Cohort,
    pub test: Cohort,
}

/// Splits `cohort`, initializes a model and trains it.
pub fn fit(config: &TrainConfig, cohort: &Cohort) -> Result<FitOutput> {
    fit_with(config, cohort, |_| {})
}

/// As [`fit`], calling `on_epoch` after every epoch.
pub fn fit_with(
    config: &TrainConfig,
    cohort: &Cohort,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutput> {
    config.validate()?;
    let start = Instant::now();
    let (train, test) = split_cohort(cohort, config.task, config.train_fraction, config.seed)?;
    let mut model = HscfModel::new(config.model_config(cohort.n_rois()), config.seed)?;
    let prepared: Vec<PreparedSubject> = train
        .subjects
        .par_iter()
        .map(PreparedSubject::new)
        .collect();
    let mut adam = AdamState::new(&model.params, config.lr, config.weight_decay);
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut final_eval = None;
    for epoch in 1..=config.epochs {
        let (loss, steps) = train_epoch(&mut model, &mut adam, &prepared, config, epoch)?;
        if !loss.total.is_finite() {
            return Err(HscfError::Contract(format!(
                "training loss diverged at epoch {epoch}"
            )));
        }
        let due =
            epoch == config.epochs || (config.eval_every > 0 && epoch % config.eval_every == 0);
        let eval = if due && !test.is_empty() {
            Some(evaluate_task(&model, &test, config.task)?)
        } else {
            None
        };
        if epoch == config.epochs {
            final_eval = eval;
        }
        log::info!(
            "epoch {epoch}: total {:.5} kl {:.5} rec {:.5} cos {:.5} cls {:.5}{}",
            loss.total,
            loss.kl,
            loss.rec,
            loss.cos,
            loss.cls,
            eval.map(|e| format!(" test acc {:.4}", e.acc))
                .unwrap_or_default()
        );
        let record = EpochRecord {
            epoch,
            loss,
            steps,
            eval,
        };
        on_epoch(&record);
        epochs.push(record);
    }
    let report = TrainReport {
        config: config.clone(),
        n_train: train.len(),
        n_test: test.len(),
        epochs,
        final_eval,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok(FitOutput {
        model,
        report,
        train,
        test,
    })
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointConfig {
    #[serde(flatten)]
    model: ModelConfig,
    #[serde(flatten)]
    meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: CheckpointConfig,
    params: ParameterStore,
}

/// Serializes a model; floats are written in shortest round-trip form so a
/// reload is bit-exact.
pub fn checkpoint_json(model: &HscfModel, meta: &TrainingMeta) -> Result<String> {
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        config: CheckpointConfig {
            model: model.config.clone(),
            meta: meta.clone(),
        },
        params: model.params.clone(),
    };
    serde_json::to_string(&ckpt).map_err(|e| HscfError::json("encoding checkpoint", e))
}

pub fn save_checkpoint(model: &HscfModel, meta: &TrainingMeta, path: &Path) -> Result<()> {
    let text = checkpoint_json(model, meta)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| HscfError::io(format!("creating {}", parent.display()), e))?;
    }
    fs::write(path, text + "\n")
        .map_err(|e| HscfError::io(format!("writing {}", path.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<(HscfModel, TrainingMeta)> {
    if !path.exists() {
        return Err(HscfError::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let text = fs::read_to_string(path)
        .map_err(|e| HscfError::io(format!("reading {}", path.display()), e))?;
    parse_checkpoint(&text)
}

pub fn parse_checkpoint(text: &str) -> Result<(HscfModel, TrainingMeta)> {
    let ckpt: Checkpoint =
        serde_json::from_str(text).map_err(|e| HscfError::json("parsing checkpoint", e))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(HscfError::InvalidArgument(format!(
            "unsupported checkpoint version {}",
            ckpt.version
        )));
    }
    let model = HscfModel::from_params(ckpt.config.model, ckpt.params)?;
    Ok((model, ckpt.config.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic_cohort;

    fn one_param(value: f64) -> ParameterStore {
        let mut p = ParameterStore::new();
        p.insert("w", Tensor::scalar(value));
        p
    }

    fn grad_of(value: f64) -> Gradients {
        let mut g = Gradients::zeros_like(&one_param(0.0));
        *g.get_mut("w").unwrap() = Tensor::scalar(value);
        g
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = one_param(0.0);
        let mut adam = AdamState::new(&p, 1e-3, 0.0);
        adam.step(&mut p, &grad_of(5.0)).unwrap();
        assert!((p.get("w").unwrap().item() + 1e-3).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut p = one_param(2.0);
        let mut adam = AdamState::new(&p, 1e-3, 0.01);
        adam.step(&mut p, &grad_of(0.0)).unwrap();
        assert!((p.get("w").unwrap().item() - 2.0 * (1.0 - 1e-5)).abs() < 1e-15);
    }

    #[test]
    fn config_defaults_and_unknown_keys() {
        let cfg = TrainConfig::from_json("{}").unwrap();
        assert_eq!(cfg, TrainConfig::default());
        let cfg = TrainConfig::from_json(
            r#"{"task":"emci-lmci","epochs":3,"loss_weights":{"kl":0,"rec":1,"cos":1,"cls":2}}"#,
        )
        .unwrap();
        assert_eq!(cfg.task, Task::EmciVsLmci);
        assert_eq!(cfg.loss_weights.cls, 2.0);
        assert!(TrainConfig::from_json(r#"{"epoch":3}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"batch_size":0}"#).is_err());
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 3,
            eval_every: 1,
            widths: Some(Widths {
                hidden1: 8,
                hidden2: 4,
                latent: 2,
                cls_hidden1: 4,
                cls_hidden2: 2,
            }),
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic_and_checkpoints_round_trip() {
        let cohort = generate_synthetic_cohort(1, 5, 8, 0.4).unwrap();
        let cfg = tiny_config();
        let a = fit(&cfg, &cohort).unwrap();
        let b = fit(&cfg, &cohort).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.report.epochs, b.report.epochs);
        assert_eq!(a.report.epochs.len(), 2);
        assert_eq!(a.report.epochs[0].steps, 3);
        assert!(a.report.final_eval.is_some());

        let meta = TrainingMeta::from_config(&cfg);
        let text = checkpoint_json(&a.model, &meta).unwrap();
        let (model, meta2) = parse_checkpoint(&text).unwrap();
        assert_eq!(model, a.model);
        assert_eq!(meta2, meta);
        assert_eq!(checkpoint_json(&model, &meta2).unwrap(), text);
    }

    #[test]
    fn noise_streams_differ() {
        let cfg = ModelConfig::toy(6);
        assert_ne!(subject_noise(1, 1, 0, &cfg), subject_noise(1, 1, 1, &cfg));
        assert_ne!(subject_noise(1, 1, 0, &cfg), subject_noise(1, 2, 0, &cfg));
        assert_eq!(subject_noise(1, 1, 0, &cfg), subject_noise(1, 1, 0, &cfg));
    }
}
