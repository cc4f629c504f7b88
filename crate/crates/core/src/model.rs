//! The fusion network.
//!
//! Four GCN separators map each modality's connectivity plus node features
//! to Gaussian latents (a modality-specific and a universal one per
//! modality). Four inner-product reconstructors decode the sampled latents
//! back to connectivity, and a three-stage fusion module turns the four
//! latents into one structural-functional connectivity matrix, which the
//! GCN classifier consumes together with the node features.
//!
//! By default the universal separator is shared between the two modalities
//! (`sep_su` encodes both SC and FC); `separate_universal` gives FC its own
//! `sep_fu`.
//!
//! Parameter names:
//!
//! | prefix | tensors |
//! |---|---|
//! | `sep_ss`, `sep_su`, `sep_ff`, (`sep_fu`) | `w1` N×h1, `w2` h1×h2, `w_mu` h2×L, `w_logvar` h2×L |
//! | `rec_ss`, `rec_su`, `rec_ff`, `rec_fu` | `w` L×L, `b` 1×L |
//! | `clm_s`, `clm_f`, `clm_fused` | `w1` 2L×L, `b1` 1×L, `w2` L×L, `b2` 1×L |
//! | `cls` | `w1` N×c1, `w2` c1×c2, `w_out` c2×2, `b_out` 1×2 |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{normalize_adjacency, ConnectivityMatrix, NodeFeatureMatrix, Stage, Subject};
use crate::error::{HscfError, Result};
use crate::tape::{ParameterStore, Tape, Var};
use crate::tensor::Tensor;

fn default_hidden1() -> usize {
    64
}
fn default_hidden2() -> usize {
    32
}
fn default_latent() -> usize {
    16
}
fn default_cls_hidden1() -> usize {
    32
}
fn default_cls_hidden2() -> usize {
    16
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_rois: usize,
    #[serde(default = "default_hidden1")]
    pub hidden1: usize,
    #[serde(default = "default_hidden2")]
    pub hidden2: usize,
    #[serde(default = "default_latent")]
    pub latent: usize,
    #[serde(default = "default_cls_hidden1")]
    pub cls_hidden1: usize,
    #[serde(default = "default_cls_hidden2")]
    pub cls_hidden2: usize,
    #[serde(default)]
    pub separate_universal: bool,
}

impl ModelConfig {
    /// Separator widths 64/32/16, classifier widths 32/16.
    pub fn standard(n_rois: usize) -> Self {
        ModelConfig {
            n_rois,
            hidden1: default_hidden1(),
            hidden2: default_hidden2(),
            latent: default_latent(),
            cls_hidden1: default_cls_hidden1(),
            cls_hidden2: default_cls_hidden2(),
            separate_universal: false,
        }
    }

    /// Small widths (8/8/4, classifier 8/8) for gradient checks.
    pub fn toy(n_rois: usize) -> Self {
        ModelConfig {
            n_rois,
            hidden1: 8,
            hidden2: 8,
            latent: 4,
            cls_hidden1: 8,
            cls_hidden2: 8,
            separate_universal: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.n_rois,
            self.hidden1,
            self.hidden2,
            self.latent,
            self.cls_hidden1,
            self.cls_hidden2,
        ];
        if dims.contains(&0) {
            return Err(HscfError::InvalidArgument(format!(
                "model dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Every parameter name with its shape, in name order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (n, h1, h2, l) = (self.n_rois, self.hidden1, self.hidden2, self.latent);
        let mut out = Vec::new();
        let mut seps = vec!["sep_ss", "sep_su", "sep_ff"];
        if self.separate_universal {
            seps.push("sep_fu");
        }
        for p in seps {
            out.push((format!("{p}.w1"), vec![n, h1]));
            out.push((format!("{p}.w2"), vec![h1, h2]));
            out.push((format!("{p}.w_mu"), vec![h2, l]));
            out.push((format!("{p}.w_logvar"), vec![h2, l]));
        }
        for p in ["rec_ss", "rec_su", "rec_ff", "rec_fu"] {
            out.push((format!("{p}.w"), vec![l, l]));
            out.push((format!("{p}.b"), vec![1, l]));
        }
        for p in ["clm_s", "clm_f", "clm_fused"] {
            out.push((format!("{p}.w1"), vec![2 * l, l]));
            out.push((format!("{p}.b1"), vec![1, l]));
            out.push((format!("{p}.w2"), vec![l, l]));
            out.push((format!("{p}.b2"), vec![1, l]));
        }
        out.push(("cls.w1".into(), vec![n, self.cls_hidden1]));
        out.push(("cls.w2".into(), vec![self.cls_hidden1, self.cls_hidden2]));
        out.push(("cls.w_out".into(), vec![self.cls_hidden2, 2]));
        out.push(("cls.b_out".into(), vec![1, 2]));
        out.sort();
        out
    }
}

/// The four latent branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// structural-specific
    Ss,
    /// universal, from SC
    Su,
    /// functional-specific
    Ff,
    /// universal, from FC
    Fu,
}

impl Branch {
    pub const ALL: [Branch; 4] = [Branch::Ss, Branch::Su, Branch::Ff, Branch::Fu];

    fn separator_prefix(self, config: &ModelConfig) -> &'static str {
        match self {
            Branch::Ss => "sep_ss",
            Branch::Su => "sep_su",
            Branch::Ff => "sep_ff",
            Branch::Fu if config.separate_universal => "sep_fu",
            Branch::Fu => "sep_su",
        }
    }

    fn reconstructor_prefix(self) -> &'static str {
        match self {
            Branch::Ss => "rec_ss",
            Branch::Su => "rec_su",
            Branch::Ff => "rec_ff",
            Branch::Fu => "rec_fu",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentPair {
    pub mu: Tensor,
    pub logvar: Tensor,
}

impl LatentPair {
    pub fn sigma(&self) -> Tensor {
        self.logvar.map(|lv| (0.5 * lv).exp())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentRep {
    pub z: Tensor,
}

/// Standard-normal draws for the four reparameterized samples, in branch
/// order ss, su, ff, fu.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentNoise {
    pub eps: [Tensor; 4],
}

impl LatentNoise {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, n_rois: usize, latent: usize) -> Self {
        let mut draw = || {
            let data = (0..n_rois * latent)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            Tensor::from_parts(vec![n_rois, latent], data)
        };
        LatentNoise {
            eps: [draw(), draw(), draw(), draw()],
        }
    }
}

/// Every intermediate of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    /// ss, su, ff, fu
    pub latents: [LatentPair; 4],
    /// ss, su, ff, fu
    pub reps: [LatentRep; 4],
    pub a_s1: Tensor,
    pub a_s2: Tensor,
    pub a_f1: Tensor,
    pub a_f2: Tensor,
    /// reconstructed SC
    pub a1_rec: Tensor,
    /// reconstructed FC
    pub a2_rec: Tensor,
    /// fused structural-functional connectivity
    pub a_m: Tensor,
    /// [earlier stage, later stage]
    pub probs: [f64; 2],
}

/// A subject with its propagation matrices and node features precomputed.
#[derive(Clone, Debug)]
pub struct PreparedSubject {
    pub id: String,
    pub label: Stage,
    pub sc: Tensor,
    pub fc: Tensor,
    pub sc_hat: Tensor,
    pub fc_hat: Tensor,
    pub features: NodeFeatureMatrix,
}

impl PreparedSubject {
    pub fn new(subject: &Subject) -> Self {
        PreparedSubject {
            id: subject.id.clone(),
            label: subject.label,
            sc: subject.sc.weights().clone(),
            fc: subject.fc.weights().clone(),
            sc_hat: normalize_adjacency(&subject.sc),
            fc_hat: normalize_adjacency(&subject.fc),
            features: subject.node_features(),
        }
    }

    pub fn n_rois(&self) -> usize {
        self.sc.rows()
    }
}

/// Tape handles of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub mu: [Var; 4],
    pub logvar: [Var; 4],
    pub z: [Var; 4],
    pub a_s1: Var,
    pub a_s2: Var,
    pub a_f1: Var,
    pub a_f2: Var,
    pub a1_rec: Var,
    pub a2_rec: Var,
    pub a_m: Var,
    pub probs: Var,
}

/// `Â · H · W`, with ReLU iff `activate`. Multiplication order is picked by
/// cost.
pub fn gcn_layer_var(tape: &mut Tape, a_hat: Var, h: Var, w: Var, activate: bool) -> Result<Var> {
    let d_in = tape.value(h).cols();
    let d_out = tape.value(w).cols();
    let out = if d_out <= d_in {
        let hw = tape.matmul(h, w)?;
        tape.matmul(a_hat, hw)?
    } else {
        let ah = tape.matmul(a_hat, h)?;
        tape.matmul(ah, w)?
    };
    Ok(if activate { tape.relu(out) } else { out })
}

/// First GCN layer on one-hot node features: `X · W` is a row gather.
fn gcn_input_layer(
    tape: &mut Tape,
    a_hat: Var,
    x: &NodeFeatureMatrix,
    w: Var,
    activate: bool,
) -> Result<Var> {
    let xw = tape.gather_rows(w, x.columns())?;
    let out = tape.matmul(a_hat, xw)?;
    Ok(if activate { tape.relu(out) } else { out })
}

/// Value-level GCN layer.
pub fn gcn_layer(a_hat: &Tensor, h: &Tensor, w: &Tensor, activate: bool) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (a, h, w) = (
        tape.constant(a_hat.clone()),
        tape.constant(h.clone()),
        tape.constant(w.clone()),
    );
    let out = gcn_layer_var(&mut tape, a, h, w, activate)?;
    Ok(tape.value(out).clone())
}

/// Reparameterized sample `μ + exp(logvar / 2) ⊙ ε`; `μ` when `eps` is `None`.
pub fn sample_latent_var(
    tape: &mut Tape,
    mu: Var,
    logvar: Var,
    eps: Option<&Tensor>,
) -> Result<Var> {
    match eps {
        None => Ok(mu),
        Some(eps) => {
            let half = tape.scale(logvar, 0.5);
            let sigma = tape.exp(half);
            let e = tape.constant(eps.clone());
            let noise = tape.mul(sigma, e)?;
            tape.add(mu, noise)
        }
    }
}

/// Draws `z` for one latent pair. Eval mode returns `μ` unchanged.
pub fn sample_latent<R: Rng + ?Sized>(
    pair: &LatentPair,
    rng: &mut R,
    train_mode: bool,
) -> LatentRep {
    if !train_mode {
        return LatentRep { z: pair.mu.clone() };
    }
    let z = pair
        .mu
        .data()
        .iter()
        .zip(pair.logvar.data())
        .map(|(&m, &lv)| {
            let e: f64 = rng.sample(StandardNormal);
            m + (0.5 * lv).exp() * e
        })
        .collect();
    LatentRep {
        z: Tensor::from_parts(pair.mu.shape().to_vec(), z),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HscfModel {
    pub config: ModelConfig,
    pub params: ParameterStore,
}

impl HscfModel {
    /// Glorot-uniform weights (`±sqrt(6 / (fan_in + fan_out))`), zero biases,
    /// drawn in parameter-name order from a seeded stream.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new();
        for (name, shape) in config.parameter_shapes() {
            let len = shape.iter().product();
            let leaf = name.rsplit('.').next().unwrap_or_default();
            let data = if leaf.starts_with('b') {
                vec![0.0; len]
            } else {
                let s = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                (0..len).map(|_| rng.random_range(-s..=s)).collect()
            };
            params.insert(name, Tensor::from_parts(shape, data));
        }
        Ok(HscfModel { config, params })
    }

    /// Builds a model from existing parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParameterStore) -> Result<Self> {
        config.validate()?;
        let expected = config.parameter_shapes();
        if expected.len() != params.len() {
            return Err(HscfError::InvalidArgument(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in expected {
            match params.get(&name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(HscfError::Shape {
                        op: "load parameter",
                        left: shape,
                        right: t.shape().to_vec(),
                    })
                }
                None => {
                    return Err(HscfError::InvalidArgument(format!(
                        "missing parameter {name}"
                    )))
                }
            }
        }
        Ok(HscfModel { config, params })
    }

    fn p(&self, tape: &mut Tape, name: &str) -> Result<Var> {
        tape.param(&self.params, name)
    }

    fn check_rois(&self, n: usize) -> Result<()> {
        if n != self.config.n_rois {
            return Err(HscfError::RoiMismatch {
                expected: self.config.n_rois,
                found: n,
            });
        }
        Ok(())
    }

    /// Two-layer GCN trunk with split μ / logvar heads (no activation on the heads).
    pub fn separator_var(
        &self,
        tape: &mut Tape,
        branch: Branch,
        a_hat: Var,
        x: &NodeFeatureMatrix,
    ) -> Result<(Var, Var)> {
        let prefix = branch.separator_prefix(&self.config);
        let w1 = self.p(tape, &format!("{prefix}.w1"))?;
        let w2 = self.p(tape, &format!("{prefix}.w2"))?;
        let w_mu = self.p(tape, &format!("{prefix}.w_mu"))?;
        let w_lv = self.p(tape, &format!("{prefix}.w_logvar"))?;
        let h1 = gcn_input_layer(tape, a_hat, x, w1, true)?;
        let h2 = gcn_layer_var(tape, a_hat, h1, w2, true)?;
        // both heads share the propagated trunk output
        let ah2 = tape.matmul(a_hat, h2)?;
        let mu = tape.matmul(ah2, w_mu)?;
        let logvar = tape.matmul(ah2, w_lv)?;
        Ok((mu, logvar))
    }

    /// `sigmoid(H Hᵀ)` with `H = Z W + b`.
    pub fn reconstructor_var(&self, tape: &mut Tape, branch: Branch, z: Var) -> Result<Var> {
        let prefix = branch.reconstructor_prefix();
        let w = self.p(tape, &format!("{prefix}.w"))?;
        let b = self.p(tape, &format!("{prefix}.b"))?;
        let zw = tape.matmul(z, w)?;
        let h = tape.add_row_bias(zw, b)?;
        let hh = tape.matmul_nt(h, h)?;
        Ok(tape.sigmoid(hh))
    }

    /// Two-layer perceptron with ReLU between the layers.
    fn clm_var(&self, tape: &mut Tape, prefix: &str, input: Var) -> Result<Var> {
        let w1 = self.p(tape, &format!("{prefix}.w1"))?;
        let b1 = self.p(tape, &format!("{prefix}.b1"))?;
        let w2 = self.p(tape, &format!("{prefix}.w2"))?;
        let b2 = self.p(tape, &format!("{prefix}.b2"))?;
        let h = tape.matmul(input, w1)?;
        let h = tape.add_row_bias(h, b1)?;
        let h = tape.relu(h);
        let h = tape.matmul(h, w2)?;
        tape.add_row_bias(h, b2)
    }

    /// Three-stage fusion: mean of the universal reps, per-modality mapping
    /// of `[phase1 | specific]`, then a joint mapping of both phase-2 reps.
    /// Returns `sigmoid(F Fᵀ)`.
    pub fn hrf_var(
        &self,
        tape: &mut Tape,
        z_ss: Var,
        z_su: Var,
        z_ff: Var,
        z_fu: Var,
    ) -> Result<Var> {
        let u = tape.add(z_su, z_fu)?;
        let phase1 = tape.scale(u, 0.5);
        let s_in = tape.concat_cols(phase1, z_ss)?;
        let f_in = tape.concat_cols(phase1, z_ff)?;
        let phase2_s = self.clm_var(tape, "clm_s", s_in)?;
        let phase2_f = self.clm_var(tape, "clm_f", f_in)?;
        let joint = tape.concat_cols(phase2_s, phase2_f)?;
        let fused = self.clm_var(tape, "clm_fused", joint)?;
        let ff = tape.matmul_nt(fused, fused)?;
        Ok(tape.sigmoid(ff))
    }

    /// Renormalized `A_m` (diagonal ignored), two ReLU GCN layers, node mean
    /// pooling, dense layer, softmax.
    pub fn classifier_var(&self, tape: &mut Tape, a_m: Var, x: &NodeFeatureMatrix) -> Result<Var> {
        let w1 = self.p(tape, "cls.w1")?;
        let w2 = self.p(tape, "cls.w2")?;
        let w_out = self.p(tape, "cls.w_out")?;
        let b_out = self.p(tape, "cls.b_out")?;
        let a_hat = tape.normalize_adjacency(a_m)?;
        let h1 = gcn_input_layer(tape, a_hat, x, w1, true)?;
        let h2 = gcn_layer_var(tape, a_hat, h1, w2, true)?;
        let pooled = tape.mean_rows(h2)?;
        let logits = tape.matmul(pooled, w_out)?;
        let logits = tape.add_row_bias(logits, b_out)?;
        Ok(tape.softmax(logits))
    }

    /// Records the full forward pass. `noise` selects train mode.
    pub fn forward_var(
        &self,
        tape: &mut Tape,
        subject: &PreparedSubject,
        noise: Option<&LatentNoise>,
    ) -> Result<ForwardVars> {
        self.check_rois(subject.n_rois())?;
        let sc_hat = tape.constant(subject.sc_hat.clone());
        let fc_hat = tape.constant(subject.fc_hat.clone());
        let x = &subject.features;
        let mut mu = Vec::with_capacity(4);
        let mut logvar = Vec::with_capacity(4);
        let mut z = Vec::with_capacity(4);
        for (k, branch) in Branch::ALL.into_iter().enumerate() {
            let a_hat = match branch {
                Branch::Ss | Branch::Su => sc_hat,
                Branch::Ff | Branch::Fu => fc_hat,
            };
            let (m, lv) = self.separator_var(tape, branch, a_hat, x)?;
            z.push(sample_latent_var(tape, m, lv, noise.map(|n| &n.eps[k]))?);
            mu.push(m);
            logvar.push(lv);
        }
        let a_s1 = self.reconstructor_var(tape, Branch::Ss, z[0])?;
        let a_s2 = self.reconstructor_var(tape, Branch::Su, z[1])?;
        let a_f1 = self.reconstructor_var(tape, Branch::Ff, z[2])?;
        let a_f2 = self.reconstructor_var(tape, Branch::Fu, z[3])?;
        let a1_rec = average(tape, a_s1, a_s2)?;
        let a2_rec = average(tape, a_f1, a_f2)?;
        let a_m = self.hrf_var(tape, z[0], z[1], z[2], z[3])?;
        let probs = self.classifier_var(tape, a_m, x)?;
        Ok(ForwardVars {
            mu: [mu[0], mu[1], mu[2], mu[3]],
            logvar: [logvar[0], logvar[1], logvar[2], logvar[3]],
            z: [z[0], z[1], z[2], z[3]],
            a_s1,
            a_s2,
            a_f1,
            a_f2,
            a1_rec,
            a2_rec,
            a_m,
            probs,
        })
    }

    /// Forward pass on a prepared subject; `noise` selects train mode.
    pub fn forward_prepared(
        &self,
        subject: &PreparedSubject,
        noise: Option<&LatentNoise>,
    ) -> Result<ModelOutput> {
        let mut tape = Tape::new();
        let v = self.forward_var(&mut tape, subject, noise)?;
        Ok(collect_output(&tape, &v))
    }

    /// Full forward pass. In train mode the reparameterization noise is drawn
    /// from `rng`; in eval mode `z = μ` and `rng` is untouched.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        subject: &Subject,
        rng: &mut R,
        train_mode: bool,
    ) -> Result<ModelOutput> {
        let prepared = PreparedSubject::new(subject);
        let noise =
            train_mode.then(|| LatentNoise::sample(rng, self.config.n_rois, self.config.latent));
        self.forward_prepared(&prepared, noise.as_ref())
    }

    /// Eval-mode forward pass.
    pub fn forward_eval(&self, subject: &Subject) -> Result<ModelOutput> {
        self.forward_prepared(&PreparedSubject::new(subject), None)
    }

    pub fn separator_forward(
        &self,
        branch: Branch,
        a: &ConnectivityMatrix,
        x: &NodeFeatureMatrix,
    ) -> Result<LatentPair> {
        self.check_rois(a.n_rois())?;
        let mut tape = Tape::new();
        let a_hat = tape.constant(normalize_adjacency(a));
        let (mu, lv) = self.separator_var(&mut tape, branch, a_hat, x)?;
        Ok(LatentPair {
            mu: tape.value(mu).clone(),
            logvar: tape.value(lv).clone(),
        })
    }

    pub fn reconstructor_forward(&self, branch: Branch, z: &LatentRep) -> Result<Tensor> {
        let mut tape = Tape::new();
        let zv = tape.constant(z.z.clone());
        let out = self.reconstructor_var(&mut tape, branch, zv)?;
        Ok(tape.value(out).clone())
    }

    /// `0.5 (R_specific(z_specific) + R_universal(z_universal))`.
    pub fn reconstruct_modality(
        &self,
        z_specific: &LatentRep,
        z_universal: &LatentRep,
        specific: Branch,
        universal: Branch,
    ) -> Result<Tensor> {
        let a = self.reconstructor_forward(specific, z_specific)?;
        let b = self.reconstructor_forward(universal, z_universal)?;
        Ok(a.add(&b)?.scale(0.5))
    }

    pub fn hrf_forward(
        &self,
        z_ss: &LatentRep,
        z_su: &LatentRep,
        z_ff: &LatentRep,
        z_fu: &LatentRep,
    ) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vs: Vec<Var> = [z_ss, z_su, z_ff, z_fu]
            .iter()
            .map(|r| tape.constant(r.z.clone()))
            .collect();
        let out = self.hrf_var(&mut tape, vs[0], vs[1], vs[2], vs[3])?;
        Ok(tape.value(out).clone())
    }

    pub fn classifier_forward(&self, a_m: &Tensor, x: &NodeFeatureMatrix) -> Result<[f64; 2]> {
        self.check_rois(a_m.rows())?;
        let mut tape = Tape::new();
        let a = tape.constant(a_m.clone());
        let p = self.classifier_var(&mut tape, a, x)?;
        let d = tape.value(p).data();
        Ok([d[0], d[1]])
    }
}

fn average(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let s = tape.add(a, b)?;
    Ok(tape.scale(s, 0.5))
}

pub fn collect_output(tape: &Tape, v: &ForwardVars) -> ModelOutput {
    let val = |x: Var| tape.value(x).clone();
    let pair = |k: usize| LatentPair {
        mu: val(v.mu[k]),
        logvar: val(v.logvar[k]),
    };
    let rep = |k: usize| LatentRep { z: val(v.z[k]) };
    let p = tape.value(v.probs).data();
    ModelOutput {
        latents: [pair(0), pair(1), pair(2), pair(3)],
        reps: [rep(0), rep(1), rep(2), rep(3)],
        a_s1: val(v.a_s1),
        a_s2: val(v.a_s2),
        a_f1: val(v.a_f1),
        a_f2: val(v.a_f2),
        a1_rec: val(v.a1_rec),
        a2_rec: val(v.a2_rec),
        a_m: val(v.a_m),
        probs: [p[0], p[1]],
    }
}
