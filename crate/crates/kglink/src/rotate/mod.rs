//! RotatE link prediction: complex entity embeddings, relation rotations,
//! self-adversarial negative-sampling loss and an Adam training loop.
//!
//! Every relation coordinate is stored as a phase angle, so the rotation
//! `e^{i*theta}` has modulus exactly 1 by construction. Parameters are held
//! as f64 for accurate gradient checks; checkpoints store f32.

mod loss;
mod train;

pub use loss::{
    negative_batch, positive_loss_term, total_loss, Gradients, NegativeBatch,
};
pub use train::{
    train, write_history, AdamState, EpochRecord, LossMode, TrainConfig, TrainingSet,
};

use std::f64::consts::PI;
use std::io::{self, Read, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kg::Triple;

#[derive(Debug, Error)]
pub enum RotateError {
    #[error("{what} id {id} out of range (count {count})")]
    IdOutOfRange { what: &'static str, id: u32, count: usize },
    #[error("each positive needs at least one negative")]
    EmptyNegatives,
    #[error("link weight {0} outside (0, 1]")]
    BadWeight(f64),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("training set has no positives")]
    EmptyTrainingSet,
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Model parameters: per entity `2*dim` reals (real parts then imaginary
/// parts), per relation `dim` phase angles in `[-pi, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotateParams {
    entity_count: usize,
    relation_count: usize,
    dim: usize,
    margin: f64,
    entities: Vec<f64>,
    phases: Vec<f64>,
}

impl RotateParams {
    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// Real parts `[0, dim)` then imaginary parts `[dim, 2*dim)`.
    pub fn entity(&self, id: usize) -> &[f64] {
        &self.entities[id * 2 * self.dim..(id + 1) * 2 * self.dim]
    }

    pub fn phase(&self, id: usize) -> &[f64] {
        &self.phases[id * self.dim..(id + 1) * self.dim]
    }

    pub(crate) fn entities_mut(&mut self) -> &mut [f64] {
        &mut self.entities
    }

    pub(crate) fn phases_mut(&mut self) -> &mut [f64] {
        &mut self.phases
    }

    pub(crate) fn entities_flat(&self) -> &[f64] {
        &self.entities
    }

    pub(crate) fn phases_flat(&self) -> &[f64] {
        &self.phases
    }

    fn check(&self, triple: &Triple) -> Result<(), RotateError> {
        if triple.head.index() >= self.entity_count {
            return Err(RotateError::IdOutOfRange {
                what: "entity",
                id: triple.head.0,
                count: self.entity_count,
            });
        }
        if triple.tail.index() >= self.entity_count {
            return Err(RotateError::IdOutOfRange {
                what: "entity",
                id: triple.tail.0,
                count: self.entity_count,
            });
        }
        if triple.relation.index() >= self.relation_count {
            return Err(RotateError::IdOutOfRange {
                what: "relation",
                id: triple.relation.0,
                count: self.relation_count,
            });
        }
        Ok(())
    }

    /// Sum over coordinates of `|h_i * e^{i*theta_i} - t_i|`.
    pub(crate) fn distance_unchecked(&self, triple: &Triple) -> f64 {
        let d = self.dim;
        let h = self.entity(triple.head.index());
        let t = self.entity(triple.tail.index());
        let theta = self.phase(triple.relation.index());
        let mut acc = 0.0f64;
        for i in 0..d {
            let (c, s) = (theta[i].cos(), theta[i].sin());
            let rot_re = h[i] * c - h[d + i] * s;
            let rot_im = h[i] * s + h[d + i] * c;
            let dr = rot_re - t[i];
            let di = rot_im - t[d + i];
            acc += (dr * dr + di * di).sqrt();
        }
        acc
    }

    /// Plausibility score `margin - distance`; higher is more plausible.
    pub fn score(&self, triple: &Triple) -> Result<f64, RotateError> {
        self.check(triple)?;
        Ok(self.margin - self.distance_unchecked(triple))
    }

    pub(crate) fn score_unchecked(&self, triple: &Triple) -> f64 {
        self.margin - self.distance_unchecked(triple)
    }
}

/// Draws entity coordinates uniformly from `[-(margin+2)/dim, +(margin+2)/dim]`
/// and relation phases uniformly from `[-pi, pi)`. Deterministic given the
/// seed: entities are filled row by row, then phases.
pub fn init_params(
    entity_count: usize,
    relation_count: usize,
    dim: usize,
    margin: f64,
    seed: u64,
) -> RotateParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = (margin + 2.0) / dim as f64;
    let mut entities = Vec::with_capacity(entity_count * 2 * dim);
    for _ in 0..entity_count * 2 * dim {
        entities.push(rng.random::<f64>() * 2.0 * range - range);
    }
    let mut phases = Vec::with_capacity(relation_count * dim);
    for _ in 0..relation_count * dim {
        phases.push(rng.random::<f64>() * 2.0 * PI - PI);
    }
    RotateParams { entity_count, relation_count, dim, margin, entities, phases }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"RTCK";
const CHECKPOINT_VERSION: u32 = 1;

impl RotateParams {
    /// Binary checkpoint: header `(magic, version, |E|, |R|, dim, margin)`
    /// followed by little-endian f32 arrays, entities then phases.
    /// `load(save(p))` then `save` again reproduces the same bytes.
    pub fn save<W: Write>(&self, writer: &mut W) -> Result<(), RotateError> {
        writer.write_all(CHECKPOINT_MAGIC)?;
        writer.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        writer.write_all(&(self.entity_count as u64).to_le_bytes())?;
        writer.write_all(&(self.relation_count as u64).to_le_bytes())?;
        writer.write_all(&(self.dim as u64).to_le_bytes())?;
        writer.write_all(&self.margin.to_le_bytes())?;
        for &v in &self.entities {
            writer.write_all(&(v as f32).to_le_bytes())?;
        }
        for &v in &self.phases {
            writer.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load<R: Read>(reader: &mut R) -> Result<Self, RotateError> {
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(RotateError::BadCheckpoint("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        reader.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(RotateError::BadCheckpoint(format!("unsupported version {version}")));
        }
        let mut b8 = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> Result<u64, RotateError> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let entity_count = read_u64(reader)? as usize;
        let relation_count = read_u64(reader)? as usize;
        let dim = read_u64(reader)? as usize;
        let mut mb = [0u8; 8];
        reader.read_exact(&mut mb)?;
        let margin = f64::from_le_bytes(mb);
        let read_f32s = |r: &mut R, n: usize| -> Result<Vec<f64>, RotateError> {
            let mut out = Vec::with_capacity(n);
            let mut buf = [0u8; 4];
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                out.push(f32::from_le_bytes(buf) as f64);
            }
            Ok(out)
        };
        let entities = read_f32s(reader, entity_count * 2 * dim)?;
        let phases = read_f32s(reader, relation_count * dim)?;
        Ok(RotateParams { entity_count, relation_count, dim, margin, entities, phases })
    }

    pub fn save_to_path(&self, path: &std::path::Path) -> Result<(), RotateError> {
        let mut w = io::BufWriter::new(std::fs::File::create(path)?);
        self.save(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_from_path(path: &std::path::Path) -> Result<Self, RotateError> {
        let mut r = io::BufReader::new(std::fs::File::open(path)?);
        Self::load(&mut r)
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{EntityId, RelationId};
    use num_complex::Complex64;

    fn triple(h: u32, r: u32, t: u32) -> Triple {
        Triple::new(EntityId(h), RelationId(r), EntityId(t))
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_params(1, 1, 2, 9.0, 1234);
        let b = init_params(1, 1, 2, 9.0, 1234);
        assert_eq!(a, b);
        let c = init_params(1, 1, 2, 9.0, 1235);
        assert_ne!(a, c);
    }

    #[test]
    fn init_ranges() {
        let params = init_params(50, 20, 8, 9.0, 7);
        let range = (9.0 + 2.0) / 8.0;
        for id in 0..50 {
            for &v in params.entity(id) {
                assert!(v >= -range && v <= range);
            }
        }
        for id in 0..20 {
            for &v in params.phase(id) {
                assert!(v >= -PI && v < PI);
            }
        }
    }

    #[test]
    fn init_entity_mean_is_near_zero() {
        // 1e5 uniform draws in [-range, range]: mean 0, se = range/sqrt(3N).
        let dim = 4;
        let entity_count = 12_500; // 12500 * 2 * 4 = 1e5 coordinates
        let params = init_params(entity_count, 0, dim, 2.0, 99);
        let range = (2.0 + 2.0) / dim as f64;
        let coords = params.entities_flat();
        let mean = coords.iter().sum::<f64>() / coords.len() as f64;
        let se = range / (3.0f64 * coords.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} exceeds 3 se {se}");
    }

    #[test]
    fn score_identity_rotation() {
        // d=1, h = t = 1+0i, phase 0: distance 0, score = margin.
        let params = test_support::params_from_raw(
            1,
            9.0,
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0],
        );
        assert_eq!(params.score(&triple(0, 0, 1)).unwrap(), 9.0);
    }

    #[test]
    fn score_half_turn() {
        // Rotating 1+0i by pi gives -1, distance |(-1) - 1| = 2.
        let params = test_support::params_from_raw(
            1,
            9.0,
            vec![1.0, 0.0, 1.0, 0.0],
            vec![PI],
        );
        let score = params.score(&triple(0, 0, 1)).unwrap();
        assert!((score - 7.0).abs() < 1e-12, "score {score}");
    }

    #[test]
    fn score_rejects_bad_ids() {
        let params = init_params(2, 1, 2, 9.0, 0);
        assert!(matches!(
            params.score(&triple(5, 0, 0)),
            Err(RotateError::IdOutOfRange { what: "entity", .. })
        ));
        assert!(matches!(
            params.score(&triple(0, 3, 1)),
            Err(RotateError::IdOutOfRange { what: "relation", .. })
        ));
    }

    #[test]
    fn score_matches_complex_arithmetic_oracle() {
        // Straight-line reimplementation with num-complex.
        let params = init_params(6, 3, 4, 9.0, 21);
        let complex_distance = |t: &Triple| -> f64 {
            let h = params.entity(t.head.index());
            let tl = params.entity(t.tail.index());
            let theta = params.phase(t.relation.index());
            (0..4)
                .map(|i| {
                    let hc = Complex64::new(h[i], h[4 + i]);
                    let tc = Complex64::new(tl[i], tl[4 + i]);
                    let rot = Complex64::from_polar(1.0, theta[i]);
                    (hc * rot - tc).norm()
                })
                .sum()
        };
        for h in 0..6u32 {
            for r in 0..3u32 {
                let t = triple(h, r, (h + 1) % 6);
                let expected = 9.0 - complex_distance(&t);
                let got = params.score(&t).unwrap();
                assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
            }
        }
    }

    #[test]
    fn rotation_preserves_modulus() {
        let params = init_params(4, 2, 8, 9.0, 3);
        for id in 0..4 {
            let e = params.entity(id);
            for r in 0..2 {
                let theta = params.phase(r);
                for i in 0..8 {
                    let (c, s) = (theta[i].cos(), theta[i].sin());
                    let rot_re = e[i] * c - e[8 + i] * s;
                    let rot_im = e[i] * s + e[8 + i] * c;
                    let before = (e[i] * e[i] + e[8 + i] * e[8 + i]).sqrt();
                    let after = (rot_re * rot_re + rot_im * rot_im).sqrt();
                    assert!((before - after).abs() <= 1e-12 * before.max(1.0));
                }
            }
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let params = init_params(5, 3, 4, 9.0, 11);
        let mut bytes = Vec::new();
        params.save(&mut bytes).unwrap();
        let loaded = RotateParams::load(&mut bytes.as_slice()).unwrap();
        let mut bytes2 = Vec::new();
        loaded.save(&mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
        assert_eq!(loaded.entity_count(), 5);
        assert_eq!(loaded.dim(), 4);
        assert_eq!(loaded.margin(), 9.0);
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let err = RotateParams::load(&mut b"NOPE".as_slice()).unwrap_err();
        assert!(matches!(err, RotateError::BadCheckpoint(_) | RotateError::Io(_)));
    }
}
