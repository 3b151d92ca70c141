//! Mini-batch training with a from-scratch Adam optimizer.
//!
//! Each epoch shuffles all positives with the seeded generator, partitions
//! them into batches, samples fresh negatives per batch and applies the
//! weighted-loss gradients. The loop is single-threaded, so a given
//! `(training set, config)` reproduces bit-identical parameters.

use std::collections::HashSet;
use std::io::{self, Write};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{sample_negatives, total_loss, Gradients};
use super::{init_params, RotateError, RotateParams};
use crate::align::LinkedGraph;
use crate::kg::{KnowledgeGraph, Triple};

/// Whether link triples keep their alignment weights or are treated like
/// ordinary triples (all weights 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    Weighted,
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub adversarial_temperature: f64,
    /// Negatives generated per positive.
    pub negatives: usize,
    pub epochs: usize,
    pub loss_mode: LossMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 256,
            batch_size: 512,
            learning_rate: 0.004,
            margin: 9.0,
            adversarial_temperature: 0.34,
            negatives: 33,
            epochs: 200,
            loss_mode: LossMode::Weighted,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RotateError> {
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(RotateError::BadConfig(format!("{what} must be positive")))
            }
        };
        need(self.dim > 0, "dim")?;
        need(self.batch_size > 0, "batch_size")?;
        need(self.learning_rate > 0.0, "learning_rate")?;
        need(self.margin > 0.0, "margin")?;
        need(self.adversarial_temperature > 0.0, "adversarial_temperature")?;
        need(self.negatives > 0, "negatives")?;
        need(self.epochs > 0, "epochs")?;
        Ok(())
    }
}

/// Training positives with per-triple weights plus the known-triple set used
/// to reject false negatives during corruption.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub entity_count: usize,
    pub relation_count: usize,
    pub positives: Vec<Triple>,
    pub weights: Vec<f64>,
    pub known: HashSet<Triple>,
}

impl TrainingSet {
    /// Single-graph training: every triple weighs 1.
    pub fn from_graph(graph: &KnowledgeGraph) -> Self {
        Self {
            entity_count: graph.entity_count(),
            relation_count: graph.relation_count(),
            positives: graph.triples().to_vec(),
            weights: vec![1.0; graph.triples().len()],
            known: graph.triple_set(),
        }
    }

    /// Linked-graph training: domain and general triples weigh 1, link
    /// triples carry their alignment weight.
    pub fn from_linked(linked: &LinkedGraph) -> Self {
        let weighted = linked.weighted_triples();
        Self {
            entity_count: linked.graph.entity_count(),
            relation_count: linked.graph.relation_count(),
            positives: weighted.iter().map(|(t, _)| *t).collect(),
            weights: weighted.iter().map(|(_, w)| *w).collect(),
            known: linked.graph.triple_set(),
        }
    }
}

/// One history line: epoch index, mean loss per positive, wall-clock seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub seconds: f64,
}

/// Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8). Moments are
/// dense over all parameters; untouched coordinates still decay through their
/// momentum, which is the standard dense-update semantics.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u32,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    pub fn new(parameter_count: usize) -> Self {
        Self {
            m: vec![0.0; parameter_count],
            v: vec![0.0; parameter_count],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Applies one update. Entity moments come first in the state vector,
    /// phase moments after. Phases are wrapped back into `[-pi, pi)`.
    pub fn apply(&mut self, params: &mut RotateParams, grads: &Gradients, learning_rate: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let scale = learning_rate / bc1;
        let row_len = 2 * params.dim();
        let entity_count = params.entity_count();
        let dim = params.dim();
        let entity_len = entity_count * row_len;

        {
            let values = params.entities_mut();
            for id in 0..entity_count {
                let row = grads.entities.get(&(id as u32));
                for j in 0..row_len {
                    let idx = id * row_len + j;
                    let g = row.map_or(0.0, |r| r[j]);
                    self.m[idx] = b1 * self.m[idx] + (1.0 - b1) * g;
                    self.v[idx] = b2 * self.v[idx] + (1.0 - b2) * g * g;
                    values[idx] -= scale * self.m[idx] / ((self.v[idx] / bc2).sqrt() + eps);
                }
            }
        }
        {
            let relation_count = params.relation_count();
            let values = params.phases_mut();
            for id in 0..relation_count {
                let row = grads.relations.get(&(id as u32));
                for j in 0..dim {
                    let idx = id * dim + j;
                    let s = entity_len + idx;
                    let g = row.map_or(0.0, |r| r[j]);
                    self.m[s] = b1 * self.m[s] + (1.0 - b1) * g;
                    self.v[s] = b2 * self.v[s] + (1.0 - b2) * g * g;
                    values[idx] -= scale * self.m[s] / ((self.v[s] / bc2).sqrt() + eps);
                    values[idx] = wrap_phase(values[idx]);
                }
            }
        }
    }
}

fn wrap_phase(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can land exactly on 2*pi for inputs just below -pi.
    if wrapped >= PI {
        -PI
    } else {
        wrapped
    }
}

/// Trains RotatE on the given positives. Returns the final parameters and
/// one record per epoch. Aborts with a diagnostic if the loss goes
/// non-finite.
pub fn train(
    set: &TrainingSet,
    config: &TrainConfig,
) -> Result<(RotateParams, Vec<EpochRecord>), RotateError> {
    config.validate()?;
    if set.positives.is_empty() {
        return Err(RotateError::EmptyTrainingSet);
    }
    if set.weights.len() != set.positives.len() {
        return Err(RotateError::BadConfig("one weight per positive required".into()));
    }
    let mut params = init_params(
        set.entity_count,
        set.relation_count,
        config.dim,
        config.margin,
        config.seed,
    );
    for t in &set.positives {
        params.check(t)?;
    }
    let mut adam =
        AdamState::new(params.entities_flat().len() + params.phases_flat().len());
    // Separate stream from init so changing epochs never perturbs the
    // initialization draws.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<u32> = (0..set.positives.len() as u32).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<(Triple, f64)> = chunk
                .iter()
                .map(|&i| (set.positives[i as usize], set.weights[i as usize]))
                .collect();
            let batch_triples: Vec<Triple> = batch.iter().map(|(t, _)| *t).collect();
            let negatives = sample_negatives(
                &set.known,
                set.entity_count,
                &batch_triples,
                config.negatives,
                &mut rng,
            );
            let (loss, grads) = total_loss(
                &params,
                &batch,
                &negatives,
                config.loss_mode,
                config.adversarial_temperature,
            )?;
            if !loss.is_finite() {
                return Err(RotateError::NonFiniteLoss { epoch, batch: batch_index });
            }
            adam.apply(&mut params, &grads, config.learning_rate);
            epoch_loss += loss;
        }
        history.push(EpochRecord {
            epoch,
            mean_loss: epoch_loss / set.positives.len() as f64,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok((params, history))
}

/// Writes history as `epoch \t mean_loss \t seconds` lines.
pub fn write_history<W: Write>(writer: &mut W, history: &[EpochRecord]) -> io::Result<()> {
    for rec in history {
        writeln!(writer, "{}\t{}\t{}", rec.epoch, rec.mean_loss, rec.seconds)?;
    }
    Ok(())
}
