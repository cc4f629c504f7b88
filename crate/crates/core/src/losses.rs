//! The four training losses and their weighted sum.
//!
//! * KL: closed-form `KL(N(μ, σ²) || N(0, 1))` per latent pair, averaged over
//!   the pair's coordinates, summed over the four pairs.
//! * reconstruction: per-modality mean squared error, summed.
//! * cosine: similarity of the flattened universal representations, taken
//!   literally (a positive weight pushes them apart).
//! * classification: cross-entropy with a `1e-12` floor inside the log.

use serde::{Deserialize, Serialize};

use crate::data::{Stage, Task};
use crate::error::{HscfError, Result};
use crate::model::{LatentPair, LatentRep};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub kl: f64,
    pub rec: f64,
    pub cos: f64,
    pub cls: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            kl: 1.0,
            rec: 1.0,
            cos: 1.0,
            cls: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.kl, self.rec, self.cos, self.cls]
            .iter()
            .all(|w| w.is_finite())
        {
            Ok(())
        } else {
            Err(HscfError::InvalidArgument(format!(
                "loss weights must be finite: {self:?}"
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub kl: f64,
    pub rec: f64,
    pub cos: f64,
    pub cls: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn add(&mut self, other: &LossBreakdown) {
        self.kl += other.kl;
        self.rec += other.rec;
        self.cos += other.cos;
        self.cls += other.cls;
        self.total += other.total;
    }

    pub fn scaled(&self, factor: f64) -> LossBreakdown {
        LossBreakdown {
            kl: self.kl * factor,
            rec: self.rec * factor,
            cos: self.cos * factor,
            cls: self.cls * factor,
            total: self.total * factor,
        }
    }
}

/// Tape handles of the four component losses and the total.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub kl: Var,
    pub rec: Var,
    pub cos: Var,
    pub cls: Var,
    pub total: Var,
}

impl LossVars {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            kl: tape.value(self.kl).item(),
            rec: tape.value(self.rec).item(),
            cos: tape.value(self.cos).item(),
            cls: tape.value(self.cls).item(),
            total: tape.value(self.total).item(),
        }
    }
}

pub fn kl_var(tape: &mut Tape, pairs: &[(Var, Var)]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for &(mu, logvar) in pairs {
        let mu2 = tape.square(mu);
        let var = tape.exp(logvar);
        let t = tape.add(mu2, var)?;
        let t = tape.sub(t, logvar)?;
        let t = tape.add_scalar(t, -1.0);
        let m = tape.mean(t);
        let term = tape.scale(m, 0.5);
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    Ok(total.unwrap_or_else(|| tape.constant(Tensor::scalar(0.0))))
}

pub fn rec_var(tape: &mut Tape, a1_rec: Var, a2_rec: Var, a1: Var, a2: Var) -> Result<Var> {
    let d1 = tape.sub(a1_rec, a1)?;
    let d1 = tape.square(d1);
    let m1 = tape.mean(d1);
    let d2 = tape.sub(a2_rec, a2)?;
    let d2 = tape.square(d2);
    let m2 = tape.mean(d2);
    tape.add(m1, m2)
}

/// Cosine similarity of two flattened representations; 0 when either is the
/// zero vector.
pub fn cos_var(tape: &mut Tape, z_su: Var, z_fu: Var) -> Result<Var> {
    let zero = |t: &Tensor| t.data().iter().all(|&v| v == 0.0);
    if zero(tape.value(z_su)) || zero(tape.value(z_fu)) {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let prod = tape.mul(z_su, z_fu)?;
    let dot = tape.sum(prod);
    let sa = tape.square(z_su);
    let sa = tape.sum(sa);
    let na = tape.sqrt(sa);
    let sb = tape.square(z_fu);
    let sb = tape.sum(sb);
    let nb = tape.sqrt(sb);
    let den = tape.mul(na, nb)?;
    tape.div(dot, den)
}

fn class_of(label: Stage, task: Task) -> Result<usize> {
    task.class_index(label).ok_or_else(|| {
        HscfError::InvalidArgument(format!("label {label} is not part of task {task}"))
    })
}

/// `-Σ y_k ln max(p_k, 1e-12)` for the one-hot `y` of `label`.
pub fn cls_var(tape: &mut Tape, probs: Var, label: Stage, task: Task) -> Result<Var> {
    let class = class_of(label, task)?;
    let shape = tape.value(probs).shape().to_vec();
    let mut y = Tensor::zeros(&shape);
    y.data_mut()[class] = 1.0;
    let y = tape.constant(y);
    let logp = tape.ln_clamped(probs, LOG_FLOOR);
    let picked = tape.mul(logp, y)?;
    let s = tape.sum(picked);
    Ok(tape.scale(s, -1.0))
}

pub fn total_var(
    tape: &mut Tape,
    kl: Var,
    rec: Var,
    cos: Var,
    cls: Var,
    w: &LossWeights,
) -> Result<LossVars> {
    let parts = [(kl, w.kl), (rec, w.rec), (cos, w.cos), (cls, w.cls)];
    let mut total = tape.scale(parts[0].0, parts[0].1);
    for &(v, weight) in &parts[1..] {
        let t = tape.scale(v, weight);
        total = tape.add(total, t)?;
    }
    Ok(LossVars {
        kl,
        rec,
        cos,
        cls,
        total,
    })
}

pub fn kl_loss(pairs: &[LatentPair]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<(Var, Var)> = pairs
        .iter()
        .map(|p| (tape.constant(p.mu.clone()), tape.constant(p.logvar.clone())))
        .collect();
    let v = kl_var(&mut tape, &vars).expect("mu and logvar share a shape");
    tape.value(v).item()
}

pub fn rec_loss(a1_rec: &Tensor, a2_rec: &Tensor, a1: &Tensor, a2: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let vs: Vec<Var> = [a1_rec, a2_rec, a1, a2]
        .iter()
        .map(|t| tape.constant((*t).clone()))
        .collect();
    let v = rec_var(&mut tape, vs[0], vs[1], vs[2], vs[3])?;
    Ok(tape.value(v).item())
}

pub fn cos_loss(z_su: &LatentRep, z_fu: &LatentRep) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(z_su.z.clone());
    let b = tape.constant(z_fu.z.clone());
    let v = cos_var(&mut tape, a, b)?;
    Ok(tape.value(v).item())
}

pub fn cls_loss(probs: &[f64], label: Stage, task: Task) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::vector(probs.to_vec()));
    let v = cls_var(&mut tape, p, label, task)?;
    Ok(tape.value(v).item())
}

pub fn total_loss(kl: f64, rec: f64, cos: f64, cls: f64, weights: &LossWeights) -> LossBreakdown {
    LossBreakdown {
        kl,
        rec,
        cos,
        cls,
        total: weights.kl * kl + weights.rec * rec + weights.cos * cos + weights.cls * cls,
    }
}
