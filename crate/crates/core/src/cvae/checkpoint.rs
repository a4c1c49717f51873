//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "LVLCVAE\0"
//! version      u32      currently 1
//! scheme id    u8
//! vocab name   u16 length + UTF-8 bytes
//! vocab        u16 count, then per tile: char u8, u16 length + UTF-8 name
//! empty tile   u8
//! vocab hash   u64
//! dims         u32 latent, u32 vocab size, u32 positions, u32 label length
//! train config u32 epochs, f64 base lr, f64 decay factor, u32 decay every,
//!              u32 batch size, u64 seed, f64 kl weight, f64 β1, f64 β2, f64 ε
//! final losses f64 recon, f64 kl, f64 total
//! shape table  encoder then decoder: u32 layer count, per layer u32 out,
//!              u32 in, u8 activation (0 identity, 1 relu)
//! parameters   f64 per value: per layer weights (row-major out×in) then
//!              biases; encoder layers first
//! digest       first 8 bytes of SHA-256 over everything above
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{CvaeError, CvaeModel, ElboTerms, TrainConfig};
use crate::labeling::Scheme;
use crate::nn::{Activation, AdamConfig, DenseLayer, LrSchedule, Matrix, Mlp};
use crate::tiles::TileVocab;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LVLCVAE\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model together with everything needed to use and audit it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: CvaeModel,
    pub vocab: TileVocab,
    pub config: TrainConfig,
    pub final_terms: ElboTerms,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.u8(self.model.scheme().id());
        w.string(self.vocab.name());
        w.u16(self.vocab.len() as u16);
        for i in 0..self.vocab.len() {
            w.u8(self.vocab.char_at(i));
            w.string(self.vocab.tile_name(i));
        }
        w.u8(self.vocab.empty_char());
        w.u64(self.vocab.hash());

        let m = &self.model;
        for dim in [m.latent_dim(), m.vocab_size(), m.positions(), m.label_len()] {
            w.u32(dim as u32);
        }
        let c = &self.config;
        w.u32(c.epochs);
        w.f64(c.schedule.base_lr);
        w.f64(c.schedule.decay_factor);
        w.u32(c.schedule.decay_every);
        w.u32(c.batch_size as u32);
        w.u64(c.seed);
        w.f64(c.kl_weight);
        w.f64(c.adam.beta1);
        w.f64(c.adam.beta2);
        w.f64(c.adam.eps);
        w.f64(self.final_terms.recon);
        w.f64(self.final_terms.kl);
        w.f64(self.final_terms.total);

        for net in [&m.encoder, &m.decoder] {
            w.u32(net.layers.len() as u32);
            for layer in &net.layers {
                w.u32(layer.outputs() as u32);
                w.u32(layer.inputs() as u32);
                w.u8(layer.activation.id());
            }
        }
        for net in [&m.encoder, &m.decoder] {
            for p in net.params() {
                for &v in p {
                    w.f64(v);
                }
            }
        }
        let digest = digest8(&w.buf);
        w.bytes(&digest);
        w.buf
    }

    /// Parse a checkpoint. When `expected` is given the stored vocabulary
    /// must match it.
    pub fn from_bytes(bytes: &[u8], expected: Option<&TileVocab>) -> Result<Self, CvaeError> {
        if bytes.len() < CHECKPOINT_MAGIC.len() + 4 + 8 {
            return Err(corrupt("file is too short"));
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(CvaeError::VersionMismatch {
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 8);
        if digest8(body) != trailer {
            return Err(corrupt("digest mismatch (truncated or modified)"));
        }

        let mut r = Reader { buf: body, pos: 12 };
        let scheme_id = r.u8()?;
        let scheme = Scheme::from_id(scheme_id).ok_or_else(|| corrupt(format!("unknown scheme id {scheme_id}")))?;
        let vocab_name = r.string()?;
        let count = r.u16()? as usize;
        let mut tiles = Vec::with_capacity(count);
        for _ in 0..count {
            let ch = r.u8()? as char;
            tiles.push((ch, r.string()?));
        }
        let empty = r.u8()? as char;
        let vocab = TileVocab::new(vocab_name, tiles, empty).map_err(|e| corrupt(e.to_string()))?;
        let stored_hash = r.u64()?;
        if stored_hash != vocab.hash() {
            return Err(corrupt("vocabulary hash does not match stored tiles"));
        }
        if let Some(expected) = expected {
            if expected.hash() != stored_hash {
                return Err(CvaeError::VocabMismatch {
                    expected: expected.hash(),
                    found: stored_hash,
                });
            }
        }

        let latent = r.u32()? as usize;
        let vocab_size = r.u32()? as usize;
        let positions = r.u32()? as usize;
        let label_len = r.u32()? as usize;
        if vocab_size != vocab.len() || label_len != scheme.len() {
            return Err(corrupt("dimension header disagrees with vocabulary or scheme"));
        }
        let config = TrainConfig {
            epochs: r.u32()?,
            schedule: LrSchedule {
                base_lr: r.f64()?,
                decay_factor: r.f64()?,
                decay_every: r.u32()?,
            },
            batch_size: r.u32()? as usize,
            seed: r.u64()?,
            kl_weight: r.f64()?,
            adam: AdamConfig {
                beta1: r.f64()?,
                beta2: r.f64()?,
                eps: r.f64()?,
            },
        };
        let final_terms = ElboTerms {
            recon: r.f64()?,
            kl: r.f64()?,
            total: r.f64()?,
        };

        let mut shapes = Vec::with_capacity(2);
        for _ in 0..2 {
            let n = r.u32()? as usize;
            if n == 0 || n > 64 {
                return Err(corrupt(format!("implausible layer count {n}")));
            }
            let mut layers = Vec::with_capacity(n);
            for _ in 0..n {
                let out = r.u32()? as usize;
                let inp = r.u32()? as usize;
                let act = r.u8()?;
                let act = Activation::from_id(act).ok_or_else(|| corrupt(format!("unknown activation {act}")))?;
                layers.push((out, inp, act));
            }
            shapes.push(layers);
        }
        let total_params: usize = shapes.iter().flatten().map(|(o, i, _)| o * i + o).sum();
        if r.remaining() != total_params * 8 {
            return Err(corrupt(format!(
                "parameter block holds {} bytes, shape table needs {}",
                r.remaining(),
                total_params * 8
            )));
        }
        let mut nets = Vec::with_capacity(2);
        for layers in &shapes {
            let mut dense = Vec::with_capacity(layers.len());
            for &(out, inp, activation) in layers {
                let weights = (0..out * inp).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
                let biases = (0..out).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
                dense.push(DenseLayer {
                    weights: Matrix::from_vec(out, inp, weights),
                    biases,
                    activation,
                });
            }
            nets.push(Mlp::new(dense).map_err(|e| corrupt(e.to_string()))?);
        }
        let decoder = nets.pop().expect("two networks");
        let encoder = nets.pop().expect("two networks");
        let model = CvaeModel::from_parts(scheme, latent, vocab_size, positions, encoder, decoder)
            .map_err(|e| corrupt(e.to_string()))?;
        Ok(Self {
            model,
            vocab,
            config,
            final_terms,
        })
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<(), CvaeError> {
    fs::write(path, checkpoint.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, expected: Option<&TileVocab>) -> Result<Checkpoint, CvaeError> {
    Checkpoint::from_bytes(&fs::read(path)?, expected)
}

fn corrupt(msg: impl Into<String>) -> CvaeError {
    CvaeError::Corrupt(msg.into())
}

fn digest8(bytes: &[u8]) -> [u8; 8] {
    let digest = Sha256::digest(bytes);
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    out
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    fn string(&mut self, s: &str) {
        self.u16(s.len() as u16);
        self.bytes(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CvaeError> {
        let end = self.pos + N;
        if end > self.buf.len() {
            return Err(corrupt("unexpected end of file"));
        }
        let out = self.buf[self.pos..end].try_into().expect("length checked");
        self.pos = end;
        Ok(out)
    }
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
    fn u8(&mut self) -> Result<u8, CvaeError> {
        Ok(self.take::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16, CvaeError> {
        Ok(u16::from_le_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32, CvaeError> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64, CvaeError> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64, CvaeError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
    fn string(&mut self) -> Result<String, CvaeError> {
        let len = self.u16()? as usize;
        if self.pos + len > self.buf.len() {
            return Err(corrupt("unexpected end of file"));
        }
        let s = std::str::from_utf8(&self.buf[self.pos..self.pos + len])
            .map_err(|_| corrupt("invalid UTF-8"))?
            .to_owned();
        self.pos += len;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvae::{Architecture, ModelSpec};
    use crate::labeling::LabelVector;
    use crate::tiles::{Game, TileMap};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_checkpoint() -> Checkpoint {
        let vocab = TileMap::builtin(Game::Ki).vocab().clone();
        let spec = ModelSpec {
            scheme: Scheme::ElementsKi,
            latent_dim: 3,
            vocab_size: vocab.len(),
            positions: 4,
            architecture: Architecture {
                encoder_hidden: vec![5],
                decoder_hidden: vec![6, 7],
            },
        };
        let model = CvaeModel::init(&spec, &mut ChaCha8Rng::seed_from_u64(12));
        Checkpoint {
            model,
            vocab,
            config: TrainConfig::elements(12),
            final_terms: ElboTerms {
                recon: 1.5,
                kl: 0.25,
                total: 1.75,
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample_checkpoint();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes, Some(&ck.vocab)).unwrap();
        assert_eq!(back, ck);
        let label = LabelVector::parse(Scheme::ElementsKi, "1010").unwrap();
        let z = [0.1, -0.4, 2.0];
        let a = ck.model.decode(&z, &label).unwrap();
        let b = back.model.decode(&z, &label).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ck = sample_checkpoint();
        save_checkpoint(&ck, &path).unwrap();
        assert_eq!(load_checkpoint(&path, None).unwrap(), ck);
    }

    #[test]
    fn wrong_vocab_is_rejected() {
        let ck = sample_checkpoint();
        let other = TileMap::builtin(Game::Smb).vocab().clone();
        assert!(matches!(
            Checkpoint::from_bytes(&ck.to_bytes(), Some(&other)),
            Err(CvaeError::VocabMismatch { .. })
        ));
    }

    #[test]
    fn truncation_is_corrupt() {
        let bytes = sample_checkpoint().to_bytes();
        for cut in [0, 5, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(Checkpoint::from_bytes(&bytes[..cut], None), Err(CvaeError::Corrupt(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn flipped_byte_is_corrupt() {
        let mut bytes = sample_checkpoint().to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(Checkpoint::from_bytes(&bytes, None), Err(CvaeError::Corrupt(_))));
    }

    #[test]
    fn future_version_is_rejected() {
        let mut bytes = sample_checkpoint().to_bytes();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes, None),
            Err(CvaeError::VersionMismatch { found: 2, .. })
        ));
    }
}
