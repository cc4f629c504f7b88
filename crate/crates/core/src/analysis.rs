//! Classification metrics, group-mean SFC and stage-difference analysis.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Cohort, RoiAtlas, Stage, Task};
use crate::error::{HscfError, Result};
use crate::model::{HscfModel, PreparedSubject};
use crate::tensor::Tensor;

/// Binary confusion counts; the positive class is the later stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl ConfusionCounts {
    pub fn new(tp: usize, fn_: usize, tn: usize, fp: usize) -> Self {
        ConfusionCounts { tp, fn_, tn, fp }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.tn + self.fp
    }

    /// Counts from `(predicted, actual)` class pairs, class 1 positive.
    pub fn tally(pairs: &[(usize, usize)]) -> Self {
        let mut c = ConfusionCounts::default();
        for &(pred, actual) in pairs {
            match (pred == 1, actual == 1) {
                (true, true) => c.tp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
            }
        }
        c
    }
}

/// Fractions in `[0, 1]`. A metric whose denominator is zero is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub sen: Option<f64>,
    pub spe: Option<f64>,
    pub f1: Option<f64>,
}

impl Metrics {
    /// `[acc, sen, spe, f1]` as percentages truncated to two decimals, the
    /// granularity used when reporting against 76-per-class cohorts.
    pub fn percent_truncated(&self) -> [Option<f64>; 4] {
        let t = |v: f64| (v * 10000.0 + 1e-9).floor() / 100.0;
        [
            Some(t(self.acc)),
            self.sen.map(t),
            self.spe.map(t),
            self.f1.map(t),
        ]
    }
}

pub fn confusion_metrics(c: &ConfusionCounts) -> Result<Metrics> {
    let total = c.total();
    if total == 0 {
        return Err(HscfError::InvalidArgument("no evaluated subjects".into()));
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let sen = ratio(c.tp, c.tp + c.fn_);
    let spe = ratio(c.tn, c.tn + c.fp);
    let precision = ratio(c.tp, c.tp + c.fp);
    let f1 = match (precision, sen) {
        (Some(p), Some(s)) if p + s > 0.0 => Some(2.0 * p * s / (p + s)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(Metrics {
        acc: (c.tp + c.tn) as f64 / total as f64,
        sen,
        spe,
        f1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub acc: f64,
    pub sen: Option<f64>,
    pub spe: Option<f64>,
    pub f1: Option<f64>,
    pub counts: ConfusionCounts,
}

impl EvalResult {
    pub fn from_counts(counts: ConfusionCounts) -> Result<Self> {
        let m = confusion_metrics(&counts)?;
        Ok(EvalResult {
            acc: m.acc,
            sen: m.sen,
            spe: m.spe,
            f1: m.f1,
            counts,
        })
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            acc: self.acc,
            sen: self.sen,
            spe: self.spe,
            f1: self.f1,
        }
    }
}

/// Argmax with ties going to class 0 (the earlier stage).
pub fn predict_class(probs: [f64; 2]) -> usize {
    usize::from(probs[1] > probs[0])
}

/// Eval-mode predictions for every subject of the task's two classes.
pub fn predictions(model: &HscfModel, cohort: &Cohort, task: Task) -> Result<Vec<(usize, usize)>> {
    let subjects: Vec<_> = cohort
        .subjects
        .iter()
        .filter_map(|s| task.class_index(s.label).map(|c| (s, c)))
        .collect();
    subjects
        .par_iter()
        .map(|(s, actual)| {
            let out = model.forward_prepared(&PreparedSubject::new(s), None)?;
            Ok((predict_class(out.probs), *actual))
        })
        .collect()
}

pub fn evaluate_task(model: &HscfModel, cohort: &Cohort, task: Task) -> Result<EvalResult> {
    let pairs = predictions(model, cohort, task)?;
    if pairs.is_empty() {
        return Err(HscfError::InvalidArgument(format!(
            "no {} or {} subjects to evaluate",
            task.earlier(),
            task.later()
        )));
    }
    EvalResult::from_counts(ConfusionCounts::tally(&pairs))
}

/// Entrywise mean of the eval-mode fused SFC over the subjects of `stage`.
pub fn group_mean_sfc(model: &HscfModel, cohort: &Cohort, stage: Stage) -> Result<Tensor> {
    let members: Vec<_> = cohort.of_stage(stage).collect();
    if members.is_empty() {
        return Err(HscfError::EmptyClass(stage.to_string()));
    }
    let maps: Vec<Tensor> = members
        .par_iter()
        .map(|s| Ok(model.forward_prepared(&PreparedSubject::new(s), None)?.a_m))
        .collect::<Result<_>>()?;
    mean_of(&maps)
}

/// Entrywise mean of equally shaped tensors, summed in order.
pub fn mean_of(maps: &[Tensor]) -> Result<Tensor> {
    let first = maps
        .first()
        .ok_or_else(|| HscfError::InvalidArgument("mean of no matrices".into()))?;
    let mut acc = first.zeros_like();
    for m in maps {
        acc.add_assign(m)?;
    }
    Ok(acc.scale(1.0 / maps.len() as f64))
}

/// `later − earlier`; positive entries are increased connections.
pub fn stage_difference(mean_later: &Tensor, mean_earlier: &Tensor) -> Result<Tensor> {
    mean_later.sub(mean_earlier)
}

/// One connection `roi_a < roi_b` with its signed change.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectionDelta {
    pub roi_a: usize,
    pub roi_b: usize,
    pub delta: f64,
}

fn upper_triangle(diff: &Tensor) -> Result<Vec<ConnectionDelta>> {
    let shape = diff.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(HscfError::InvalidArgument(format!(
            "difference matrix must be square, got {shape:?}"
        )));
    }
    let n = shape[0];
    Ok((0..n)
        .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
        .map(|(a, b)| ConnectionDelta {
            roi_a: a,
            roi_b: b,
            delta: diff.at(a, b),
        })
        .collect())
}

/// Nearest-rank `q`-quantile: the value at 1-based position `ceil(q·M)` of
/// the ascending sort.
pub fn nearest_rank_quantile(values: &[f64], q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(HscfError::InvalidArgument(format!(
            "quantile must be in (0, 1), got {q}"
        )));
    }
    if values.is_empty() {
        return Err(HscfError::InvalidArgument("quantile of no values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(sorted.len()) - 1])
}

/// How the importance threshold is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdScope {
    /// One quantile over all upper-triangle |delta|.
    #[default]
    Pooled,
    /// Separate quantiles over the positive deltas and over the |negative| deltas.
    PerDirection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdSelection {
    /// Threshold applied to increases (and, when pooled, to everything).
    pub threshold: f64,
    /// Threshold applied to decreases; equals `threshold` when pooled.
    pub threshold_decreased: f64,
    /// Connections strictly above their threshold, in `(roi_a, roi_b)` order.
    pub selected: Vec<ConnectionDelta>,
}

/// Pooled absolute-value nearest-rank threshold; keeps `|delta| > threshold`.
pub fn threshold_quantile(diff: &Tensor, q: f64) -> Result<ThresholdSelection> {
    threshold_quantile_scoped(diff, q, ThresholdScope::Pooled)
}

pub fn threshold_quantile_scoped(
    diff: &Tensor,
    q: f64,
    scope: ThresholdScope,
) -> Result<ThresholdSelection> {
    let entries = upper_triangle(diff)?;
    match scope {
        ThresholdScope::Pooled => {
            let mags: Vec<f64> = entries.iter().map(|e| e.delta.abs()).collect();
            let threshold = nearest_rank_quantile(&mags, q)?;
            Ok(ThresholdSelection {
                threshold,
                threshold_decreased: threshold,
                selected: entries
                    .into_iter()
                    .filter(|e| e.delta.abs() > threshold)
                    .collect(),
            })
        }
        ThresholdScope::PerDirection => {
            let pos: Vec<f64> = entries
                .iter()
                .filter(|e| e.delta > 0.0)
                .map(|e| e.delta)
                .collect();
            let neg: Vec<f64> = entries
                .iter()
                .filter(|e| e.delta < 0.0)
                .map(|e| -e.delta)
                .collect();
            // an empty side selects nothing
            let t_pos = if pos.is_empty() {
                f64::INFINITY
            } else {
                nearest_rank_quantile(&pos, q)?
            };
            let t_neg = if neg.is_empty() {
                f64::INFINITY
            } else {
                nearest_rank_quantile(&neg, q)?
            };
            Ok(ThresholdSelection {
                threshold: t_pos,
                threshold_decreased: t_neg,
                selected: entries
                    .into_iter()
                    .filter(|e| {
                        (e.delta > 0.0 && e.delta > t_pos) || (e.delta < 0.0 && -e.delta > t_neg)
                    })
                    .collect(),
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increased,
    Decreased,
}

/// The `k` strongest strictly positive (increased) or strictly negative
/// (decreased) upper-triangle deltas, strongest first; ties by `(roi_a, roi_b)`.
/// Fewer than `k` are returned when fewer entries have the right sign.
pub fn top_k_connections(
    diff: &Tensor,
    k: usize,
    direction: Direction,
) -> Result<Vec<ConnectionDelta>> {
    let entries = upper_triangle(diff)?;
    if k > entries.len() {
        return Err(HscfError::InvalidArgument(format!(
            "k = {k} exceeds the {} available connections",
            entries.len()
        )));
    }
    Ok(top_k_of(entries, k, direction))
}

fn top_k_of(entries: Vec<ConnectionDelta>, k: usize, direction: Direction) -> Vec<ConnectionDelta> {
    let mut picked: Vec<ConnectionDelta> = entries
        .into_iter()
        .filter(|e| match direction {
            Direction::Increased => e.delta > 0.0,
            Direction::Decreased => e.delta < 0.0,
        })
        .collect();
    picked.sort_by(|x, y| {
        let by_value = match direction {
            Direction::Increased => y.delta.total_cmp(&x.delta),
            Direction::Decreased => x.delta.total_cmp(&y.delta),
        };
        match by_value {
            Ordering::Equal => (x.roi_a, x.roi_b).cmp(&(y.roi_a, y.roi_b)),
            other => other,
        }
    });
    picked.truncate(k);
    picked
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConnection {
    pub a: String,
    pub b: String,
    pub a_index: usize,
    pub b_index: usize,
    pub delta: f64,
}

impl ReportConnection {
    pub fn label(&self) -> String {
        format!("{} - {}", self.a, self.b)
    }

    pub fn to_delta(&self) -> ConnectionDelta {
        ConnectionDelta {
            roi_a: self.a_index,
            roi_b: self.b_index,
            delta: self.delta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagePairReport {
    pub from: Stage,
    pub to: Stage,
    pub quantile: f64,
    pub scope: ThresholdScope,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_decreased: Option<f64>,
    pub selected: usize,
    pub top_k: usize,
    pub increased: Vec<ReportConnection>,
    pub decreased: Vec<ReportConnection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub task: Option<Task>,
    pub source: String,
    pub metrics: Option<EvalResult>,
    pub stage_pairs: Vec<StagePairReport>,
}

fn named(atlas: &RoiAtlas, d: &ConnectionDelta) -> ReportConnection {
    ReportConnection {
        a: atlas.name(d.roi_a).to_string(),
        b: atlas.name(d.roi_b).to_string(),
        a_index: d.roi_a,
        b_index: d.roi_b,
        delta: d.delta,
    }
}

/// Thresholds `diff`, then takes the top-`k` increases and decreases among
/// the selected connections.
pub fn stage_pair_report(
    diff: &Tensor,
    from: Stage,
    to: Stage,
    atlas: &RoiAtlas,
    quantile: f64,
    k: usize,
    scope: ThresholdScope,
) -> Result<StagePairReport> {
    if diff.rows() != atlas.len() {
        return Err(HscfError::RoiMismatch {
            expected: atlas.len(),
            found: diff.rows(),
        });
    }
    let selection = threshold_quantile_scoped(diff, quantile, scope)?;
    let inc = top_k_of(selection.selected.clone(), k, Direction::Increased);
    let dec = top_k_of(selection.selected.clone(), k, Direction::Decreased);
    Ok(StagePairReport {
        from,
        to,
        quantile,
        scope,
        threshold: selection.threshold,
        threshold_decreased: (scope == ThresholdScope::PerDirection)
            .then_some(selection.threshold_decreased),
        selected: selection.selected.len(),
        top_k: k,
        increased: inc.iter().map(|d| named(atlas, d)).collect(),
        decreased: dec.iter().map(|d| named(atlas, d)).collect(),
    })
}

pub fn export_report(report: &AnalysisReport, path: &Path) -> Result<()> {
    let text =
        serde_json::to_string_pretty(report).map_err(|e| HscfError::json("encoding report", e))?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| HscfError::io(format!("creating {}", parent.display()), e))?;
    }
    fs::write(path, text + "\n")
        .map_err(|e| HscfError::io(format!("writing {}", path.display()), e))
}

pub fn read_report(path: &Path) -> Result<AnalysisReport> {
    let text = fs::read_to_string(path)
        .map_err(|e| HscfError::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text)
        .map_err(|e| HscfError::json(format!("parsing {}", path.display()), e))
}

/// Structural checks on a report as parsed from JSON.
pub fn validate_report_json(value: &serde_json::Value) -> std::result::Result<(), String> {
    let obj = value.as_object().ok_or("report is not an object")?;
    for key in ["task", "metrics", "stage_pairs"] {
        if !obj.contains_key(key) {
            return Err(format!("missing key {key}"));
        }
    }
    let pairs = obj["stage_pairs"]
        .as_array()
        .ok_or("stage_pairs is not an array")?;
    for pair in pairs {
        for key in ["from", "to", "threshold"] {
            if pair.get(key).is_none() {
                return Err(format!("stage pair missing {key}"));
            }
        }
        if !pair["threshold"].is_number() {
            return Err("threshold is not a number".into());
        }
        for side in ["increased", "decreased"] {
            let list = pair[side]
                .as_array()
                .ok_or(format!("{side} is not an array"))?;
            for c in list {
                if !(c["a"].is_string() && c["b"].is_string() && c["delta"].is_number()) {
                    return Err(format!("malformed {side} entry {c}"));
                }
                let d = c["delta"].as_f64().unwrap_or(0.0);
                if (side == "increased") != (d > 0.0) {
                    return Err(format!("{side} entry has delta {d}"));
                }
            }
        }
    }
    Ok(())
}
