//! Central finite-difference verification of the tape's backward rules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic_cohort, Task};
use crate::error::{HscfError, Result};
use crate::losses::LossWeights;
use crate::model::{HscfModel, LatentNoise, ModelConfig, PreparedSubject};
use crate::tape::{OpKind, ParameterStore, Tape, Var};
use crate::train::subject_loss_var;

/// Denominator floor so that near-zero gradients are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// A tensor whose largest analytic gradient entry is below this is reported
/// as not exercised: its backward path was never tested.
pub const COVERAGE_FLOOR: f64 = 1e-9;

/// `|a − n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Worst disagreement within one parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCheck {
    pub name: String,
    pub coords: usize,
    pub worst_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub max_abs_gradient: f64,
}

impl ParamCheck {
    pub fn exercised(&self) -> bool {
        self.max_abs_gradient >= COVERAGE_FLOOR
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.exercised() && self.worst_rel_error < tolerance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.worst_rel_error.total_cmp(&b.worst_rel_error))
    }

    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed(self.tolerance))
    }

    pub fn coords(&self) -> usize {
        self.params.iter().map(|p| p.coords).sum()
    }
}

/// Compares the tape gradient of the scalar built by `f` against central
/// differences, coordinate by coordinate. `fault` corrupts one backward rule
/// on the analytic pass only.
pub fn check_closure<F>(
    store: &ParameterStore,
    step: f64,
    tolerance: f64,
    fault: Option<OpKind>,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParameterStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    if let Some(kind) = fault {
        tape.inject_fault(kind);
    }
    let loss = f(&mut tape, store)?;
    let grads = tape.backward(loss, store)?;

    let eval = |s: &ParameterStore| -> Result<f64> {
        let mut t = Tape::new();
        let v = f(&mut t, s)?;
        Ok(t.value(v).item())
    };

    let mut work = store.clone();
    let mut params = Vec::new();
    for (name, value) in store.iter() {
        let analytic = grads
            .get(name)
            .ok_or_else(|| HscfError::Contract(format!("no gradient for {name}")))?;
        let mut worst = ParamCheck {
            name: name.to_string(),
            coords: value.len(),
            worst_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            max_abs_gradient: analytic.data().iter().fold(0.0, |m, g| m.max(g.abs())),
        };
        for i in 0..value.len() {
            let orig = value.data()[i];
            set(&mut work, name, i, orig + step);
            let up = eval(&work)?;
            set(&mut work, name, i, orig - step);
            let down = eval(&work)?;
            set(&mut work, name, i, orig);
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.data()[i];
            let err = relative_error(a, numeric);
            if err > worst.worst_rel_error || i == 0 {
                worst.worst_rel_error = err;
                worst.worst_index = i;
                worst.analytic = a;
                worst.numeric = numeric;
            }
        }
        params.push(worst);
    }
    Ok(GradCheckReport {
        step,
        tolerance,
        params,
    })
}

fn set(store: &mut ParameterStore, name: &str, i: usize, value: f64) {
    if let Some(t) = store.get_mut(name) {
        t.data_mut()[i] = value;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckOptions {
    pub n_rois: usize,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    pub task: Task,
    pub separate_universal: bool,
    pub fault: Option<OpKind>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            n_rois: 6,
            seed: 0,
            step: 1e-5,
            tolerance: 1e-4,
            task: Task::NcVsEmci,
            separate_universal: false,
            fault: None,
        }
    }
}

/// Full-model check: small widths, one synthetic subject, train-mode
/// forward pass with fixed sampling noise, all four losses at weight 1.
///
/// Biases are drawn from U(-0.1, 0.1) instead of starting at zero. With zero
/// biases a dead ReLU layer emits exact zeros, which puts the next ReLU's
/// input exactly on its kink where central differences are meaningless.
pub fn check_model_gradients(opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut config = ModelConfig::toy(opts.n_rois);
    config.separate_universal = opts.separate_universal;
    let mut model = HscfModel::new(config.clone(), opts.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xB1A5);
    for (name, t) in model.params.iter_mut() {
        if name
            .rsplit('.')
            .next()
            .is_some_and(|leaf| leaf.starts_with('b'))
        {
            for v in t.data_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
        }
    }
    let cohort = generate_synthetic_cohort(opts.seed, 2, opts.n_rois, 0.4)?;
    let subject = cohort
        .subjects
        .iter()
        .find(|s| s.label == opts.task.later())
        .ok_or_else(|| HscfError::EmptyClass(opts.task.later().to_string()))?;
    let prepared = PreparedSubject::new(subject);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5EED);
    let noise = LatentNoise::sample(&mut rng, config.n_rois, config.latent);
    let weights = LossWeights::default();
    check_closure(
        &model.params,
        opts.step,
        opts.tolerance,
        opts.fault,
        |tape, params| {
            let m = HscfModel {
                config: config.clone(),
                params: params.clone(),
            };
            let (_, losses) =
                subject_loss_var(&m, tape, &prepared, Some(&noise), opts.task, &weights)?;
            Ok(losses.total)
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn relative_error_definition() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!(relative_error(1e-9, 0.0) < 1e-2);
    }

    #[test]
    fn closure_check_on_quadratic() {
        let mut store = ParameterStore::new();
        store.insert("w", Tensor::vector(vec![0.3, -1.2, 2.0]));
        let report = check_closure(&store, 1e-5, 1e-6, None, |t, s| {
            let w = t.param(s, "w")?;
            let sq = t.square(w);
            Ok(t.sum(sq))
        })
        .unwrap();
        assert!(report.passed(), "{report:?}");
        let broken = check_closure(&store, 1e-5, 1e-6, Some(OpKind::Square), |t, s| {
            let w = t.param(s, "w")?;
            let sq = t.square(w);
            Ok(t.sum(sq))
        })
        .unwrap();
        assert!(!broken.passed());
    }
}
