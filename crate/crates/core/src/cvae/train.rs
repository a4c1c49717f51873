use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Checkpoint, CvaeError, CvaeGrads, CvaeModel, ElboTerms, ModelSpec};
use crate::corpus::{Segment, SEGMENT_SIZE, SEGMENT_TILES};
use crate::labeling::{LabelVector, Scheme};
use crate::nn::{adam_step, AdamConfig, AdamState, LrSchedule, Matrix};
use crate::tiles::TileVocab;

/// RNG streams derived from the run seed.
const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_NOISE: u64 = 3;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: u32,
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub seed: u64,
    pub kl_weight: f64,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl TrainConfig {
    /// 10000 epochs, lr 0.001 decayed by 0.1 every 2500 epochs.
    pub fn elements(seed: u64) -> Self {
        Self::with_epochs(10_000, 2_500, seed)
    }

    pub fn blend(seed: u64) -> Self {
        Self::elements(seed)
    }

    /// 5000 epochs, lr 0.001 decayed by 0.1 every 1250 epochs.
    pub fn patterns(seed: u64) -> Self {
        Self::with_epochs(5_000, 1_250, seed)
    }

    pub fn preset(scheme: Scheme, seed: u64) -> Self {
        match scheme {
            Scheme::PatternsSmb => Self::patterns(seed),
            Scheme::Blend => Self::blend(seed),
            _ => Self::elements(seed),
        }
    }

    fn with_epochs(epochs: u32, decay_every: u32, seed: u64) -> Self {
        Self {
            epochs,
            schedule: LrSchedule {
                base_lr: 0.001,
                decay_factor: 0.1,
                decay_every,
            },
            batch_size: 64,
            seed,
            kl_weight: 1.0,
            adam: AdamConfig::default(),
        }
    }
}

/// Per-epoch training record; `epoch` counts from 0 and losses are per-sample means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: u32,
    pub lr: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Training examples stored as tile channel indices plus labels.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    vocab: TileVocab,
    scheme: Scheme,
    positions: usize,
    tiles: Vec<u8>,
    labels: Vec<LabelVector>,
}

impl TrainingSet {
    pub fn new(vocab: TileVocab, scheme: Scheme, positions: usize) -> Self {
        Self {
            vocab,
            scheme,
            positions,
            tiles: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn from_segments(
        vocab: TileVocab,
        scheme: Scheme,
        examples: impl IntoIterator<Item = (Segment, LabelVector)>,
    ) -> Result<Self, CvaeError> {
        let mut set = Self::new(vocab, scheme, SEGMENT_TILES);
        for (segment, label) in examples {
            set.push_segment(&segment, label)?;
        }
        Ok(set)
    }

    pub fn push_segment(&mut self, segment: &Segment, label: LabelVector) -> Result<(), CvaeError> {
        let mut indices = Vec::with_capacity(SEGMENT_TILES);
        for (pos, &ch) in segment.cells().iter().enumerate() {
            let index = self.vocab.index_of(ch).ok_or_else(|| {
                CvaeError::ShapeMismatch(format!(
                    "tile {:?} at row {} col {} is not in vocabulary {}",
                    ch as char,
                    pos / SEGMENT_SIZE,
                    pos % SEGMENT_SIZE,
                    self.vocab.name()
                ))
            })?;
            indices.push(index as u8);
        }
        self.push_indices(&indices, label)
    }

    /// Add one example given per-position channel indices.
    pub fn push_indices(&mut self, indices: &[u8], label: LabelVector) -> Result<(), CvaeError> {
        if indices.len() != self.positions {
            return Err(CvaeError::ShapeMismatch(format!(
                "example has {} positions, expected {}",
                indices.len(),
                self.positions
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i as usize >= self.vocab.len()) {
            return Err(CvaeError::ShapeMismatch(format!("channel {bad} outside vocabulary")));
        }
        if label.scheme() != self.scheme {
            return Err(CvaeError::SchemeMismatch {
                expected: self.scheme,
                found: label.scheme(),
            });
        }
        self.tiles.extend_from_slice(indices);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn vocab(&self) -> &TileVocab {
        &self.vocab
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    pub fn labels(&self) -> &[LabelVector] {
        &self.labels
    }

    pub fn indices(&self, i: usize) -> &[u8] {
        &self.tiles[i * self.positions..(i + 1) * self.positions]
    }

    /// One-hot inputs and label inputs for the given example indices.
    pub fn batch(&self, rows: &[usize]) -> (Matrix, Matrix) {
        let v = self.vocab.len();
        let mut x = Matrix::zeros(rows.len(), self.positions * v);
        let mut c = Matrix::zeros(rows.len(), self.scheme.len());
        for (r, &i) in rows.iter().enumerate() {
            let xr = x.row_mut(r);
            for (pos, &ch) in self.indices(i).iter().enumerate() {
                xr[pos * v + ch as usize] = 1.0;
            }
            c.row_mut(r).copy_from_slice(&self.labels[i].to_inputs());
        }
        (x, c)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Train a freshly initialised model. `on_epoch` sees each epoch's record as
/// soon as it completes.
pub fn train(
    spec: &ModelSpec,
    data: &TrainingSet,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, CvaeError> {
    if data.is_empty() {
        return Err(CvaeError::EmptyDataset);
    }
    if data.scheme() != spec.scheme {
        return Err(CvaeError::SchemeMismatch {
            expected: spec.scheme,
            found: data.scheme(),
        });
    }
    if data.vocab().len() != spec.vocab_size || data.positions() != spec.positions {
        return Err(CvaeError::ShapeMismatch(format!(
            "dataset is {} positions × {} tiles, model expects {} × {}",
            data.positions(),
            data.vocab().len(),
            spec.positions,
            spec.vocab_size
        )));
    }
    if config.batch_size == 0 {
        return Err(CvaeError::ShapeMismatch("batch size must be positive".into()));
    }

    let mut model = CvaeModel::init(spec, &mut stream_rng(config.seed, STREAM_INIT));
    let mut shuffle_rng = stream_rng(config.seed, STREAM_SHUFFLE);
    let mut noise_rng = stream_rng(config.seed, STREAM_NOISE);
    let mut adam = AdamState::for_params(config.adam, &model.params_mut());
    let mut grads = CvaeGrads::zeros_like(&model);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(config.epochs as usize);
    let mut last = ElboTerms::default();
    info!(
        "training {} on {} examples: {} params, {} epochs, batch {}",
        spec.scheme,
        data.len(),
        model.param_count(),
        config.epochs,
        config.batch_size
    );

    for epoch in 0..config.epochs {
        let lr = config.schedule.lr_at(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut recon_sum = 0.0;
        let mut kl_sum = 0.0;
        for (step, rows) in order.chunks(config.batch_size).enumerate() {
            let (x, c) = data.batch(rows);
            let noise = Matrix::from_vec(
                rows.len(),
                spec.latent_dim,
                (0..rows.len() * spec.latent_dim)
                    .map(|_| noise_rng.sample(StandardNormal))
                    .collect(),
            );
            grads.clear();
            let terms = model
                .loss_and_grad(&x, &c, &noise, config.kl_weight, &mut grads)
                .map_err(|e| match e {
                    CvaeError::NonFinite(msg) => {
                        CvaeError::NonFinite(format!("epoch {epoch} step {step}: {msg}"))
                    }
                    other => other,
                })?;
            adam_step(&mut model.params_mut(), &grads.slices(), &mut adam, lr).map_err(|e| {
                CvaeError::NonFinite(format!("epoch {epoch} step {step}: {e}"))
            })?;
            recon_sum += terms.recon * rows.len() as f64;
            kl_sum += terms.kl * rows.len() as f64;
        }
        let n = data.len() as f64;
        let record = EpochLog {
            epoch,
            lr,
            recon: recon_sum / n,
            kl: kl_sum / n,
        };
        debug!("epoch {epoch}: lr={lr:e} recon={:.4} kl={:.4}", record.recon, record.kl);
        on_epoch(&record);
        last = ElboTerms {
            recon: record.recon,
            kl: record.kl,
            total: record.recon + config.kl_weight * record.kl,
        };
        log.push(record);
    }
    if !model.all_finite() {
        return Err(CvaeError::NonFinite("parameters became non-finite".into()));
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model,
            vocab: data.vocab().clone(),
            config: *config,
            final_terms: last,
        },
        log,
    })
}
