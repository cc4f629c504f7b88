//! Synthetic NC/EMCI/LMCI cohorts with planted stage effects.
//!
//! Every subject's SC and FC share one latent community structure (dense
//! within blocks, sparse between) and a subject-level shared fluctuation;
//! each modality then adds its own fixed pattern and independent noise.
//! Stage effects are planted on four disjoint edge sets, fixed by `n_rois`
//! alone (see [`PlantedEdges::for_rois`]). Each set is a star around one
//! affected ROI, so a stage change also moves that ROI's total strength:
//!
//! * EMCI = NC + `signal` on `emci_increased`, − `signal` on `emci_decreased`
//! * LMCI = EMCI + `signal` on `lmci_increased`, − `signal` on `lmci_decreased`
//!
//! ROI volumes are a shuffled even grid over a fixed positive range with
//! small per-subject jitter that never changes their order.
//!
//! Planted edges sit at a population mean of 0.5 in NC so a shift of up to
//! 0.5 stays inside `[0, 1]`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::cohort::{Cohort, RoiAtlas, Stage, Subject};
use super::matrix::ConnectivityMatrix;
use crate::error::{HscfError, Result};
use crate::tensor::Tensor;

const WITHIN_COMMUNITY: f64 = 0.6;
const BETWEEN_COMMUNITY: f64 = 0.02;
const PLANTED_BASE: f64 = 0.5;
const MODALITY_PATTERN: f64 = 0.1;
const SHARED_NOISE: f64 = 0.05;
const MODALITY_NOISE: f64 = 0.04;
const VOLUME_RANGE: (f64, f64) = (0.5, 2.0);
/// Per-subject volume noise as a fraction of the grid gap between
/// neighbouring base volumes; below one half, so volume ranks (and thus node
/// features) are identical across subjects.
const VOLUME_JITTER: f64 = 0.4;

pub type Edge = (usize, usize);

/// Upper-triangle `(a, b)` pairs with `a < b` carrying planted stage effects.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlantedEdges {
    pub emci_increased: Vec<(usize, usize)>,
    pub emci_decreased: Vec<(usize, usize)>,
    pub lmci_increased: Vec<(usize, usize)>,
    pub lmci_decreased: Vec<(usize, usize)>,
}

impl PlantedEdges {
    /// Four sets of `min(5, N - 4)` edges, each a star around its own hub
    /// ROI (hubs at `N/8 + k N/4`, `k = 0..4`). A hub's partners are
    /// non-hub ROIs spread evenly around the index circle starting just
    /// after the hub, so the sets are disjoint.
    pub fn for_rois(n_rois: usize) -> Self {
        let n = n_rois;
        let hubs: [usize; 4] = std::array::from_fn(|k| n / 8 + k * n / 4);
        let per_set = 5.min(n.saturating_sub(4));
        let [a, b, c, d] = hubs.map(|h| {
            let others: Vec<usize> = (1..n)
                .map(|d| (h + d) % n)
                .filter(|j| !hubs.contains(j))
                .collect();
            let step = (others.len() / per_set.max(1)).max(1);
            (0..per_set)
                .map(|t| {
                    let j = others[t * step];
                    (h.min(j), h.max(j))
                })
                .collect::<Vec<_>>()
        });
        PlantedEdges {
            emci_increased: a,
            emci_decreased: b,
            lmci_increased: c,
            lmci_decreased: d,
        }
    }

    /// `(increased, decreased)` sets going from `from` to the next stage.
    pub fn transition(&self, from: Stage) -> Option<(&[Edge], &[Edge])> {
        match from {
            Stage::Nc => Some((&self.emci_increased, &self.emci_decreased)),
            Stage::Emci => Some((&self.lmci_increased, &self.lmci_decreased)),
            Stage::Lmci => None,
        }
    }

    fn all(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.emci_increased
            .iter()
            .chain(&self.emci_decreased)
            .chain(&self.lmci_increased)
            .chain(&self.lmci_decreased)
    }
}

pub(crate) fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect()
}

fn community(i: usize, n: usize) -> usize {
    let k = (n / 15).max(2);
    i * k / n
}

/// Population-mean connectivity of `stage` before modality patterns and
/// noise. With `signal == 0` all three stages share the same template.
pub fn stage_template(n_rois: usize, signal: f64, stage: Stage) -> Tensor {
    let planted = PlantedEdges::for_rois(n_rois);
    let mut t = Tensor::zeros(&[n_rois, n_rois]);
    for (i, j) in upper_pairs(n_rois) {
        let v = if community(i, n_rois) == community(j, n_rois) {
            WITHIN_COMMUNITY
        } else {
            BETWEEN_COMMUNITY
        };
        t.set(i, j, v);
    }
    for &(i, j) in planted.all() {
        t.set(i, j, PLANTED_BASE);
    }
    let mut shift = |edges: &[(usize, usize)], delta: f64| {
        for &(i, j) in edges {
            let v = t.at(i, j) + delta;
            t.set(i, j, v);
        }
    };
    if stage >= Stage::Emci {
        shift(&planted.emci_increased, signal);
        shift(&planted.emci_decreased, -signal);
    }
    if stage == Stage::Lmci {
        shift(&planted.lmci_increased, signal);
        shift(&planted.lmci_decreased, -signal);
    }
    for i in 0..n_rois {
        for j in (i + 1)..n_rois {
            let v = t.at(i, j);
            t.set(j, i, v);
        }
    }
    t
}

fn symmetric_uniform(
    rng: &mut ChaCha8Rng,
    n: usize,
    half_width: f64,
    skip: &[(usize, usize)],
) -> Tensor {
    let mut t = Tensor::zeros(&[n, n]);
    for (i, j) in upper_pairs(n) {
        let v = rng.random_range(-half_width..half_width);
        if !skip.contains(&(i, j)) {
            t.set(i, j, v);
            t.set(j, i, v);
        }
    }
    t
}

/// Generates `n_per_class` subjects for each of NC, EMCI and LMCI.
/// Deterministic in all arguments. Subject ids are `<STAGE>_<index>`.
pub fn generate_synthetic_cohort(
    seed: u64,
    n_per_class: usize,
    n_rois: usize,
    signal: f64,
) -> Result<Cohort> {
    if n_per_class < 2 {
        return Err(HscfError::InvalidArgument(format!(
            "need at least 2 subjects per class, got {n_per_class}"
        )));
    }
    if n_rois < 6 {
        return Err(HscfError::InvalidArgument(format!(
            "need at least 6 ROIs, got {n_rois}"
        )));
    }
    if !(0.0..=1.0).contains(&signal) {
        return Err(HscfError::InvalidArgument(format!(
            "signal must be in [0, 1], got {signal}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted: Vec<(usize, usize)> = PlantedEdges::for_rois(n_rois).all().copied().collect();
    let sc_pattern = symmetric_uniform(&mut rng, n_rois, MODALITY_PATTERN, &planted);
    let fc_pattern = symmetric_uniform(&mut rng, n_rois, MODALITY_PATTERN, &planted);
    let gap = (VOLUME_RANGE.1 - VOLUME_RANGE.0) / (n_rois - 1) as f64;
    let mut base_volumes: Vec<f64> = (0..n_rois)
        .map(|i| VOLUME_RANGE.0 + i as f64 * gap)
        .collect();
    base_volumes.shuffle(&mut rng);

    let mut subjects = Vec::with_capacity(3 * n_per_class);
    for stage in Stage::ALL {
        let template = stage_template(n_rois, signal, stage);
        for k in 0..n_per_class {
            let mut sc = Tensor::zeros(&[n_rois, n_rois]);
            let mut fc = Tensor::zeros(&[n_rois, n_rois]);
            for (i, j) in upper_pairs(n_rois) {
                let shared: f64 = SHARED_NOISE * rng.sample::<f64, _>(StandardNormal);
                let e_sc: f64 = MODALITY_NOISE * rng.sample::<f64, _>(StandardNormal);
                let e_fc: f64 = MODALITY_NOISE * rng.sample::<f64, _>(StandardNormal);
                let base = template.at(i, j) + shared;
                let s = (base + sc_pattern.at(i, j) + e_sc).clamp(0.0, 1.0);
                let f = (base + fc_pattern.at(i, j) + e_fc).clamp(0.0, 1.0);
                sc.set(i, j, s);
                sc.set(j, i, s);
                fc.set(i, j, f);
                fc.set(j, i, f);
            }
            let volumes = base_volumes
                .iter()
                .map(|v| v + gap * rng.random_range(-VOLUME_JITTER..VOLUME_JITTER))
                .collect();
            let id = format!("{}_{k:03}", stage.as_str());
            let sc = ConnectivityMatrix::validated(sc, &id, "sc")?;
            let fc = ConnectivityMatrix::validated(fc, &id, "fc")?;
            subjects.push(Subject::new(id, stage, sc, fc, volumes)?);
        }
    }
    Cohort::new(RoiAtlas::default_for(n_rois), subjects)
}

/// Entrywise mean of `0.5 (SC + FC)` over the subjects of `stage`: the
/// empirical (input-side) structural-functional connectivity of a group.
pub fn empirical_group_mean(cohort: &Cohort, stage: Stage) -> Result<Tensor> {
    let n = cohort.n_rois();
    let mut acc = Tensor::zeros(&[n, n]);
    let mut count = 0usize;
    for s in cohort.of_stage(stage) {
        acc.add_assign(&s.sc.weights().add(s.fc.weights())?.scale(0.5))?;
        count += 1;
    }
    if count == 0 {
        return Err(HscfError::EmptyClass(stage.to_string()));
    }
    Ok(acc.scale(1.0 / count as f64))
}
