//! Conditional VAE over one-hot tile segments.
//!
//! The encoder sees `x ∥ c` and emits `μ ∥ log σ²`; the decoder sees `z ∥ c`
//! and emits per-position tile logits. The loss is the negative ELBO with a
//! categorical cross-entropy reconstruction term per tile position.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{train, EpochLog, TrainConfig, TrainingSet, TrainOutcome};
pub(crate) use train::stream_rng;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::corpus::SEGMENT_TILES;
use crate::labeling::{LabelVector, Scheme};
use crate::nn::{Activation, Matrix, Mlp, MlpGrads, MlpTrace, NnError};

#[derive(Debug, Error)]
pub enum CvaeError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("label scheme {found} does not match the model's {expected}")]
    SchemeMismatch { expected: Scheme, found: Scheme },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss: {0}")]
    NonFinite(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("unsupported checkpoint version {found} (this build reads {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("checkpoint vocabulary {found:016x} does not match tile map {expected:016x}")]
    VocabMismatch { expected: u64, found: u64 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Hidden-layer widths. Each network has `hidden.len() + 1` dense layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
}

impl Default for Architecture {
    /// Four layers each: in→512→256→128→2·latent and latent+label→128→256→512→out.
    fn default() -> Self {
        Self {
            encoder_hidden: vec![512, 256, 128],
            decoder_hidden: vec![128, 256, 512],
        }
    }
}

/// Shape of a model, independent of its weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub scheme: Scheme,
    pub latent_dim: usize,
    pub vocab_size: usize,
    /// Tile positions per segment (256 for 16×16).
    pub positions: usize,
    pub architecture: Architecture,
}

impl ModelSpec {
    pub fn segments(scheme: Scheme, latent_dim: usize, vocab_size: usize) -> Self {
        Self {
            scheme,
            latent_dim,
            vocab_size,
            positions: SEGMENT_TILES,
            architecture: Architecture::default(),
        }
    }

    pub fn feature_len(&self) -> usize {
        self.positions * self.vocab_size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvaeModel {
    scheme: Scheme,
    latent_dim: usize,
    vocab_size: usize,
    positions: usize,
    pub encoder: Mlp,
    pub decoder: Mlp,
}

/// Per-sample loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ElboTerms {
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
}

/// Gradients for both halves of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct CvaeGrads {
    pub encoder: MlpGrads,
    pub decoder: MlpGrads,
}

impl CvaeGrads {
    pub fn zeros_like(model: &CvaeModel) -> Self {
        Self {
            encoder: MlpGrads::zeros_like(&model.encoder),
            decoder: MlpGrads::zeros_like(&model.decoder),
        }
    }

    pub fn clear(&mut self) {
        self.encoder.clear();
        self.decoder.clear();
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.slices();
        out.extend(self.decoder.slices());
        out
    }
}

impl CvaeModel {
    pub fn init<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Self {
        let label_len = spec.scheme.len();
        let mut enc = vec![spec.feature_len() + label_len];
        enc.extend(&spec.architecture.encoder_hidden);
        enc.push(2 * spec.latent_dim);
        let mut dec = vec![spec.latent_dim + label_len];
        dec.extend(&spec.architecture.decoder_hidden);
        dec.push(spec.feature_len());
        let encoder = Mlp::init(&enc, Activation::Relu, Activation::Identity, rng);
        let decoder = Mlp::init(&dec, Activation::Relu, Activation::Identity, rng);
        Self {
            scheme: spec.scheme,
            latent_dim: spec.latent_dim,
            vocab_size: spec.vocab_size,
            positions: spec.positions,
            encoder,
            decoder,
        }
    }

    /// Assemble from explicit networks, checking every shape invariant.
    pub fn from_parts(
        scheme: Scheme,
        latent_dim: usize,
        vocab_size: usize,
        positions: usize,
        encoder: Mlp,
        decoder: Mlp,
    ) -> Result<Self, CvaeError> {
        let label_len = scheme.len();
        let features = positions * vocab_size;
        let checks = [
            ("encoder input", encoder.inputs(), features + label_len),
            ("encoder output", encoder.outputs(), 2 * latent_dim),
            ("decoder input", decoder.inputs(), latent_dim + label_len),
            ("decoder output", decoder.outputs(), features),
        ];
        for (what, found, expected) in checks {
            if found != expected {
                return Err(CvaeError::ShapeMismatch(format!(
                    "{what} is {found}, expected {expected}"
                )));
            }
        }
        if encoder.layers.last().map(|l| l.activation) != Some(Activation::Identity)
            || decoder.layers.last().map(|l| l.activation) != Some(Activation::Identity)
        {
            return Err(CvaeError::ShapeMismatch(
                "final encoder and decoder layers must be linear".into(),
            ));
        }
        Ok(Self {
            scheme,
            latent_dim,
            vocab_size,
            positions,
            encoder,
            decoder,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    pub fn label_len(&self) -> usize {
        self.scheme.len()
    }

    pub fn feature_len(&self) -> usize {
        self.positions * self.vocab_size
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    pub fn all_finite(&self) -> bool {
        self.encoder.all_finite() && self.decoder.all_finite()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.params_mut();
        out.extend(self.decoder.params_mut());
        out
    }

    pub fn check_label(&self, label: &LabelVector) -> Result<(), CvaeError> {
        if label.scheme() != self.scheme {
            return Err(CvaeError::SchemeMismatch {
                expected: self.scheme,
                found: label.scheme(),
            });
        }
        Ok(())
    }

    /// `(μ, log σ²)` for one input.
    pub fn encode(&self, x: &[f64], label: &LabelVector) -> Result<(Vec<f64>, Vec<f64>), CvaeError> {
        self.check_label(label)?;
        if x.len() != self.feature_len() {
            return Err(CvaeError::ShapeMismatch(format!(
                "feature vector has length {}, expected {}",
                x.len(),
                self.feature_len()
            )));
        }
        let mut input = x.to_vec();
        input.extend(label.to_inputs());
        let out = self
            .encoder
            .predict(&Matrix::from_vec(1, input.len(), input))?
            .into_vec();
        let (mu, logvar) = out.split_at(self.latent_dim);
        Ok((mu.to_vec(), logvar.to_vec()))
    }

    /// Tile logits for one latent vector.
    pub fn decode(&self, z: &[f64], label: &LabelVector) -> Result<Vec<f64>, CvaeError> {
        Ok(self.decode_batch(&[z.to_vec()], label)?.into_vec())
    }

    /// Logits for many latent vectors under one label, one row per vector.
    pub fn decode_batch(&self, zs: &[Vec<f64>], label: &LabelVector) -> Result<Matrix, CvaeError> {
        self.check_label(label)?;
        let width = self.latent_dim + self.label_len();
        let c = label.to_inputs();
        let mut input = Matrix::zeros(zs.len(), width);
        for (i, z) in zs.iter().enumerate() {
            if z.len() != self.latent_dim {
                return Err(CvaeError::ShapeMismatch(format!(
                    "latent vector has length {}, expected {}",
                    z.len(),
                    self.latent_dim
                )));
            }
            let row = input.row_mut(i);
            row[..self.latent_dim].copy_from_slice(z);
            row[self.latent_dim..].copy_from_slice(&c);
        }
        Ok(self.decoder.predict(&input)?)
    }

    /// Forward pass over a batch with fixed noise, returning the mean loss
    /// terms and accumulating the gradient of the mean total into `grads`.
    ///
    /// `x` is B×features, `labels` B×label_len, `noise` B×latent.
    pub fn loss_and_grad(
        &self,
        x: &Matrix,
        labels: &Matrix,
        noise: &Matrix,
        kl_weight: f64,
        grads: &mut CvaeGrads,
    ) -> Result<ElboTerms, CvaeError> {
        let pass = self.forward_pass(x, labels, noise)?;
        let batch = x.rows();
        let scale = 1.0 / batch as f64;
        let (terms, dlogits) = self.loss_terms(x, &pass, kl_weight, scale, true)?;
        let dlogits = dlogits.expect("gradient requested");

        let ddec = self
            .decoder
            .backward(&pass.dec_trace, &dlogits, &mut grads.decoder, true)?
            .expect("input gradient requested");
        let l = self.latent_dim;
        let enc_out = pass.enc_trace.output();
        let mut denc = Matrix::zeros(batch, 2 * l);
        for b in 0..batch {
            let out = enc_out.row(b);
            let eps = noise.row(b);
            let dz = &ddec.row(b)[..l];
            let row = denc.row_mut(b);
            for j in 0..l {
                let mu = out[j];
                let logvar = out[l + j];
                let sigma = (0.5 * logvar).exp();
                row[j] = dz[j] + kl_weight * scale * mu;
                row[l + j] = dz[j] * eps[j] * 0.5 * sigma + kl_weight * scale * 0.5 * (logvar.exp() - 1.0);
            }
        }
        self.encoder.backward(&pass.enc_trace, &denc, &mut grads.encoder, false)?;
        Ok(terms)
    }

    /// Mean loss terms over a batch with fixed noise; no gradients.
    pub fn loss(&self, x: &Matrix, labels: &Matrix, noise: &Matrix, kl_weight: f64) -> Result<ElboTerms, CvaeError> {
        let pass = self.forward_pass(x, labels, noise)?;
        let scale = 1.0 / x.rows() as f64;
        Ok(self.loss_terms(x, &pass, kl_weight, scale, false)?.0)
    }

    fn forward_pass(&self, x: &Matrix, labels: &Matrix, noise: &Matrix) -> Result<ForwardPass, CvaeError> {
        let batch = x.rows();
        let l = self.latent_dim;
        let ll = self.label_len();
        if x.cols() != self.feature_len() || labels.cols() != ll || noise.cols() != l {
            return Err(CvaeError::ShapeMismatch(format!(
                "batch widths x={} c={} eps={}, expected {} {} {}",
                x.cols(),
                labels.cols(),
                noise.cols(),
                self.feature_len(),
                ll,
                l
            )));
        }
        if labels.rows() != batch || noise.rows() != batch || batch == 0 {
            return Err(CvaeError::ShapeMismatch("batch row counts differ or are zero".into()));
        }
        let features = self.feature_len();
        let mut enc_in = Matrix::zeros(batch, features + ll);
        for b in 0..batch {
            let row = enc_in.row_mut(b);
            row[..features].copy_from_slice(x.row(b));
            row[features..].copy_from_slice(labels.row(b));
        }
        let enc_trace = self.encoder.forward(&enc_in)?;
        let mut dec_in = Matrix::zeros(batch, l + ll);
        for b in 0..batch {
            let out = enc_trace.output().row(b);
            let eps = noise.row(b);
            let row = dec_in.row_mut(b);
            for j in 0..l {
                row[j] = out[j] + (0.5 * out[l + j]).exp() * eps[j];
            }
            row[l..].copy_from_slice(labels.row(b));
        }
        let dec_trace = self.decoder.forward(&dec_in)?;
        Ok(ForwardPass { enc_trace, dec_trace })
    }

    fn loss_terms(
        &self,
        x: &Matrix,
        pass: &ForwardPass,
        kl_weight: f64,
        scale: f64,
        with_grad: bool,
    ) -> Result<(ElboTerms, Option<Matrix>), CvaeError> {
        let batch = x.rows();
        let l = self.latent_dim;
        let logits = pass.dec_trace.output();
        let mut dlogits = with_grad.then(|| Matrix::zeros(batch, self.feature_len()));
        let mut recon = 0.0;
        let mut kl = 0.0;
        for b in 0..batch {
            let grad_row = dlogits.as_mut().map(|d| d.row_mut(b));
            recon += categorical_cross_entropy(x.row(b), logits.row(b), self.vocab_size, grad_row, scale);
            let out = pass.enc_trace.output().row(b);
            kl += kl_divergence(&out[..l], &out[l..]);
        }
        let recon = recon * scale;
        let kl = kl * scale;
        let total = recon + kl_weight * kl;
        if !total.is_finite() {
            return Err(CvaeError::NonFinite(format!("recon={recon} kl={kl}")));
        }
        Ok((ElboTerms { recon, kl, total }, dlogits))
    }
}

struct ForwardPass {
    enc_trace: MlpTrace,
    dec_trace: MlpTrace,
}

/// `Σ_pos −Σ_c x·log softmax(logits)` over position blocks of `vocab` channels.
/// When `grad` is given, writes `scale · (softmax·Σx − x)` into it.
fn categorical_cross_entropy(
    x: &[f64],
    logits: &[f64],
    vocab: usize,
    mut grad: Option<&mut [f64]>,
    scale: f64,
) -> f64 {
    let mut loss = 0.0;
    for (pos, (xb, lb)) in x.chunks_exact(vocab).zip(logits.chunks_exact(vocab)).enumerate() {
        let max = lb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = lb.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        let mass: f64 = xb.iter().sum();
        for (&xi, &li) in xb.iter().zip(lb) {
            if xi != 0.0 {
                loss -= xi * (li - log_z);
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            let gb = &mut g[pos * vocab..(pos + 1) * vocab];
            for ((gi, &xi), &li) in gb.iter_mut().zip(xb).zip(lb) {
                *gi = scale * ((li - log_z).exp() * mass - xi);
            }
        }
    }
    loss
}

/// `KL(N(μ, σ²) ‖ N(0, I))`.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}

/// Negative ELBO for a single example.
pub fn elbo_loss(
    x: &[f64],
    logits: &[f64],
    mu: &[f64],
    logvar: &[f64],
    kl_weight: f64,
    vocab_size: usize,
) -> Result<ElboTerms, CvaeError> {
    if x.len() != logits.len() || !x.len().is_multiple_of(vocab_size) || mu.len() != logvar.len() {
        return Err(CvaeError::ShapeMismatch("elbo operand lengths".into()));
    }
    let recon = categorical_cross_entropy(x, logits, vocab_size, None, 1.0);
    let kl = kl_divergence(mu, logvar);
    let total = recon + kl_weight * kl;
    if !recon.is_finite() || !kl.is_finite() {
        return Err(CvaeError::NonFinite(format!("recon={recon} kl={kl}")));
    }
    Ok(ElboTerms { recon, kl, total })
}

/// `z = μ + exp(½ log σ²) ⊙ ε`, `ε ~ N(0, I)`.
pub fn reparameterize<R: Rng + ?Sized>(mu: &[f64], logvar: &[f64], rng: &mut R) -> Vec<f64> {
    mu.iter()
        .zip(logvar)
        .map(|(m, lv)| {
            let eps: f64 = rng.sample(StandardNormal);
            m + (0.5 * lv).exp() * eps
        })
        .collect()
}

/// Standard-normal latent vector.
pub fn sample_prior<R: Rng + ?Sized>(latent_dim: usize, rng: &mut R) -> Vec<f64> {
    (0..latent_dim).map(|_| rng.sample(StandardNormal)).collect()
}
