//! Self-adversarial negative sampling loss with analytic gradients.
//!
//! For a positive triple with distance `d` and negatives with distances
//! `d_j`:
//!
//! ```text
//! L = -log sigmoid(margin - d) - sum_j p_j * log sigmoid(d_j - margin)
//! p_j = softmax_j(alpha * (margin - d_j))
//! ```
//!
//! The softmax weights `p_j` are treated as constants during
//! differentiation, matching the detached weights of the reference
//! formulation. All reductions run in f64.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LossMode, RotateError, RotateParams};
use crate::kg::{EntityId, KnowledgeGraph, Triple};

/// Per-positive corruption lists: `per_positive[i]` holds the negatives for
/// positive `i`, each differing from it in exactly the head or the tail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeBatch {
    pub per_positive: Vec<Vec<Triple>>,
}

/// Draws `n` corruptions per positive: a fair coin picks head vs tail, then
/// a uniform replacement entity. Candidates that reproduce a known training
/// triple are re-drawn, up to 100 attempts, after which the last draw is
/// accepted anyway. Deterministic given the seed.
pub fn negative_batch(
    graph: &KnowledgeGraph,
    positives: &[Triple],
    n: usize,
    seed: u64,
) -> NegativeBatch {
    assert!(n >= 1, "need at least one negative per positive");
    let known = graph.triple_set();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_negatives(&known, graph.entity_count(), positives, n, &mut rng)
}

pub(crate) fn sample_negatives(
    known: &std::collections::HashSet<Triple>,
    entity_count: usize,
    positives: &[Triple],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> NegativeBatch {
    let per_positive = positives
        .iter()
        .map(|pos| (0..n).map(|_| corrupt(known, entity_count, pos, rng)).collect())
        .collect();
    NegativeBatch { per_positive }
}

fn corrupt(
    known: &std::collections::HashSet<Triple>,
    entity_count: usize,
    pos: &Triple,
    rng: &mut ChaCha8Rng,
) -> Triple {
    let corrupt_head = rng.random::<bool>();
    let orig = if corrupt_head { pos.head } else { pos.tail };
    let make = |e: EntityId| {
        if corrupt_head {
            Triple::new(e, pos.relation, pos.tail)
        } else {
            Triple::new(pos.head, pos.relation, e)
        }
    };
    let mut fallback = None;
    for _ in 0..100 {
        let e = EntityId(rng.random_range(0..entity_count as u32));
        if e == orig {
            // Identical to the positive: not a corruption at all.
            continue;
        }
        let candidate = make(e);
        fallback = Some(candidate);
        if !known.contains(&candidate) {
            return candidate;
        }
    }
    // Attempts exhausted: accept the last structurally valid draw, or force a
    // different entity so the corruption still differs in exactly one slot.
    fallback.unwrap_or_else(|| {
        if entity_count > 1 {
            make(EntityId((orig.0 + 1) % entity_count as u32))
        } else {
            make(orig)
        }
    })
}

/// Sparse gradient accumulator keyed by entity / relation id. Entity rows
/// have `2*dim` coordinates (real then imaginary), relation rows `dim`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradients {
    pub entities: HashMap<u32, Vec<f64>>,
    pub relations: HashMap<u32, Vec<f64>>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    fn add_entity(&mut self, id: EntityId, grad: &[f64], coeff: f64) {
        let row = self.entities.entry(id.0).or_insert_with(|| vec![0.0; grad.len()]);
        for (acc, &g) in row.iter_mut().zip(grad) {
            *acc += coeff * g;
        }
    }

    fn add_relation(&mut self, id: crate::kg::RelationId, grad: &[f64], coeff: f64) {
        let row = self.relations.entry(id.0).or_insert_with(|| vec![0.0; grad.len()]);
        for (acc, &g) in row.iter_mut().zip(grad) {
            *acc += coeff * g;
        }
    }

    pub fn entity(&self, id: u32) -> Option<&[f64]> {
        self.entities.get(&id).map(|v| v.as_slice())
    }

    pub fn relation(&self, id: u32) -> Option<&[f64]> {
        self.relations.get(&id).map(|v| v.as_slice())
    }
}

/// Gradient of one triple's distance w.r.t. its head, tail and phase rows.
struct TermGrad {
    head: Vec<f64>,
    tail: Vec<f64>,
    phase: Vec<f64>,
}

fn distance_with_grad(params: &RotateParams, triple: &Triple) -> (f64, TermGrad) {
    let d = params.dim();
    let h = params.entity(triple.head.index());
    let t = params.entity(triple.tail.index());
    let theta = params.phase(triple.relation.index());
    let mut dist = 0.0f64;
    let mut g = TermGrad {
        head: vec![0.0; 2 * d],
        tail: vec![0.0; 2 * d],
        phase: vec![0.0; d],
    };
    for i in 0..d {
        let (c, s) = (theta[i].cos(), theta[i].sin());
        let rot_re = h[i] * c - h[d + i] * s;
        let rot_im = h[i] * s + h[d + i] * c;
        let u = rot_re - t[i];
        let v = rot_im - t[d + i];
        let m = (u * u + v * v).sqrt();
        dist += m;
        if m > 0.0 {
            let inv = 1.0 / m;
            g.tail[i] = -u * inv;
            g.tail[d + i] = -v * inv;
            g.head[i] = (u * c + v * s) * inv;
            g.head[d + i] = (-u * s + v * c) * inv;
            g.phase[i] = (-u * rot_im + v * rot_re) * inv;
        }
    }
    (dist, g)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `log(sigmoid(x)) = -softplus(-x)` computed without overflow for large |x|.
fn log_sigmoid(x: f64) -> f64 {
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

/// Detached softmax weights over the negatives' scores:
/// `p_j = softmax_j(alpha * (margin - d_j))`.
pub(crate) fn adversarial_weights(distances: &[f64], alpha: f64, margin: f64) -> Vec<f64> {
    let scores: Vec<f64> = distances.iter().map(|d| alpha * (margin - d)).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Core accumulation shared by the public loss entry points: adds
/// `weight * L` and its gradients for one positive and its negatives.
fn accumulate_term(
    params: &RotateParams,
    positive: &Triple,
    negatives: &[Triple],
    alpha: f64,
    weight: f64,
    grads: &mut Gradients,
) -> f64 {
    let margin = params.margin();
    let (d_pos, g_pos) = distance_with_grad(params, positive);
    let mut value = -log_sigmoid(margin - d_pos);
    let coeff_pos = weight * sigmoid(d_pos - margin);
    grads.add_entity(positive.head, &g_pos.head, coeff_pos);
    grads.add_entity(positive.tail, &g_pos.tail, coeff_pos);
    grads.add_relation(positive.relation, &g_pos.phase, coeff_pos);

    let neg_terms: Vec<(f64, TermGrad)> =
        negatives.iter().map(|n| distance_with_grad(params, n)).collect();
    let distances: Vec<f64> = neg_terms.iter().map(|(d, _)| *d).collect();
    let p = adversarial_weights(&distances, alpha, margin);
    for ((d_neg, g_neg), (p_j, neg)) in neg_terms.iter().zip(p.iter().zip(negatives)) {
        value -= p_j * log_sigmoid(d_neg - margin);
        let coeff = -weight * p_j * sigmoid(margin - d_neg);
        grads.add_entity(neg.head, &g_neg.head, coeff);
        grads.add_entity(neg.tail, &g_neg.tail, coeff);
        grads.add_relation(neg.relation, &g_neg.phase, coeff);
    }
    weight * value
}

/// Loss and analytic gradients for one positive against its negatives. The
/// margin comes from the parameters.
pub fn positive_loss_term(
    params: &RotateParams,
    positive: &Triple,
    negatives: &[Triple],
    alpha: f64,
) -> Result<(f64, Gradients), RotateError> {
    if negatives.is_empty() {
        return Err(RotateError::EmptyNegatives);
    }
    params.check(positive)?;
    for n in negatives {
        params.check(n)?;
    }
    let mut grads = Gradients::new();
    let value = accumulate_term(params, positive, negatives, alpha, 1.0, &mut grads);
    Ok((value, grads))
}

/// Weighted batch loss: plain triples carry weight 1, link triples their
/// alignment weight. `LossMode::Standard` forces every weight to 1; weights
/// outside (0, 1] are rejected in either mode. Weights scale both the loss
/// term and its gradients.
pub fn total_loss(
    params: &RotateParams,
    positives: &[(Triple, f64)],
    negatives: &NegativeBatch,
    mode: LossMode,
    alpha: f64,
) -> Result<(f64, Gradients), RotateError> {
    if negatives.per_positive.len() != positives.len() {
        return Err(RotateError::BadConfig(format!(
            "negative batch covers {} positives, expected {}",
            negatives.per_positive.len(),
            positives.len()
        )));
    }
    let mut grads = Gradients::new();
    let mut total = 0.0f64;
    for ((triple, weight), negs) in positives.iter().zip(&negatives.per_positive) {
        if !(*weight > 0.0 && *weight <= 1.0) {
            return Err(RotateError::BadWeight(*weight));
        }
        if negs.is_empty() {
            return Err(RotateError::EmptyNegatives);
        }
        params.check(triple)?;
        for n in negs {
            params.check(n)?;
        }
        let w = match mode {
            LossMode::Weighted => *weight,
            LossMode::Standard => 1.0,
        };
        total += accumulate_term(params, triple, negs, alpha, w, &mut grads);
    }
    Ok((total, grads))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::{nudge_entity, nudge_phase, params_from_raw};
    use super::super::{init_params, LossMode};
    use super::*;
    use crate::kg::{build_dataset, RelationId};

    fn triple(h: u32, r: u32, t: u32) -> Triple {
        Triple::new(EntityId(h), RelationId(r), EntityId(t))
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(log_sigmoid(800.0).abs() < 1e-15);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
    }

    #[test]
    fn loss_at_margin_is_two_ln_two() {
        // dist(pos) = dist(neg) = margin: L = -2 log sigmoid(0) = 2 ln 2.
        // d=1: h = 1+0i rotated by 0 vs t = 1 + margin (real axis).
        let margin = 9.0;
        let params = params_from_raw(
            1,
            margin,
            vec![1.0, 0.0, 1.0 + margin, 0.0],
            vec![0.0],
        );
        let pos = triple(0, 0, 1);
        let (value, _) = positive_loss_term(&params, &pos, &[pos], 0.34).unwrap();
        assert!((value - 2.0 * std::f64::consts::LN_2).abs() < 1e-12, "value {value}");
    }

    #[test]
    fn equal_distances_get_equal_adversarial_weights() {
        for alpha in [0.1, 0.34, 2.0] {
            let p = adversarial_weights(&[3.7, 3.7], alpha, 9.0);
            assert_eq!(p, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn adversarial_weights_favor_closer_negatives() {
        let p = adversarial_weights(&[1.0, 5.0], 0.34, 9.0);
        assert!(p[0] > p[1]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_negatives_rejected() {
        let params = init_params(2, 1, 2, 9.0, 0);
        let err = positive_loss_term(&params, &triple(0, 0, 1), &[], 0.34).unwrap_err();
        assert!(matches!(err, RotateError::EmptyNegatives));
    }

    #[test]
    fn negatives_differ_in_exactly_one_slot() {
        let ds = build_dataset(
            &[
                ("a".into(), "r".into(), "b".into()),
                ("b".into(), "r".into(), "c".into()),
                ("c".into(), "s".into(), "a".into()),
            ],
            &[],
            &[],
        );
        let positives = ds.graph.triples().to_vec();
        let batch = negative_batch(&ds.graph, &positives, 5, 77);
        assert_eq!(batch.per_positive.len(), positives.len());
        for (pos, negs) in positives.iter().zip(&batch.per_positive) {
            assert_eq!(negs.len(), 5);
            for neg in negs {
                let head_differs = neg.head != pos.head;
                let tail_differs = neg.tail != pos.tail;
                assert_eq!(neg.relation, pos.relation);
                assert!(head_differs ^ tail_differs, "{neg:?} vs {pos:?}");
            }
        }
    }

    #[test]
    fn exhausted_rejection_still_accepts() {
        // Two entities, and every corruption of the positive is a known
        // triple on both sides: sampling must still produce an answer.
        let ds = build_dataset(
            &[
                ("a".into(), "r".into(), "b".into()),
                ("b".into(), "r".into(), "b".into()),
                ("a".into(), "r".into(), "a".into()),
                ("b".into(), "r".into(), "a".into()),
            ],
            &[],
            &[],
        );
        let pos = ds.graph.triples()[0];
        let batch = negative_batch(&ds.graph, &[pos], 3, 5);
        for neg in &batch.per_positive[0] {
            assert_ne!(*neg, pos);
            assert!((neg.head != pos.head) ^ (neg.tail != pos.tail));
        }
    }

    #[test]
    fn corruption_sides_are_balanced() {
        let ds = build_dataset(&[("a".into(), "r".into(), "b".into())], &[], &[]);
        // Large entity pool so corruptions rarely collide with the positive.
        let mut entities: Vec<String> = ds.graph.entity_labels().to_vec();
        for i in 0..100 {
            entities.push(format!("x{i}"));
        }
        let graph = crate::kg::KnowledgeGraph::from_parts(
            entities,
            ds.graph.relation_labels().to_vec(),
            ds.graph.triples().to_vec(),
        );
        let pos = graph.triples()[0];
        let batch = negative_batch(&graph, &[pos], 10_000, 42);
        let heads =
            batch.per_positive[0].iter().filter(|n| n.head != pos.head).count() as f64;
        let freq = heads / 10_000.0;
        // Binomial(1e4, 0.5): se = 0.005, allow 3 se.
        assert!((freq - 0.5).abs() < 0.015, "head-corruption frequency {freq}");
    }

    #[test]
    fn negative_batch_is_deterministic() {
        let ds = build_dataset(
            &[("a".into(), "r".into(), "b".into()), ("b".into(), "r".into(), "c".into())],
            &[],
            &[],
        );
        let positives = ds.graph.triples().to_vec();
        let a = negative_batch(&ds.graph, &positives, 4, 9);
        let b = negative_batch(&ds.graph, &positives, 4, 9);
        assert_eq!(a, b);
    }

    #[test]
    fn weight_scales_term_linearly() {
        let params = init_params(6, 2, 3, 9.0, 31);
        let pos = vec![(triple(0, 0, 1), 1.0), (triple(2, 1, 3), 0.5)];
        let negs = NegativeBatch {
            per_positive: vec![vec![triple(0, 0, 4)], vec![triple(5, 1, 3)]],
        };
        let (weighted, _) =
            total_loss(&params, &pos, &negs, LossMode::Weighted, 0.34).unwrap();
        let (standard, _) =
            total_loss(&params, &pos, &negs, LossMode::Standard, 0.34).unwrap();
        let (term, _) = positive_loss_term(&params, &pos[1].0, &negs.per_positive[1], 0.34)
            .unwrap();
        assert!((standard - weighted - 0.5 * term).abs() < 1e-12);
    }

    #[test]
    fn modes_agree_when_weights_are_one() {
        let params = init_params(8, 3, 4, 9.0, 17);
        let pos: Vec<(Triple, f64)> =
            (0..6).map(|i| (triple(i, i % 3, (i + 1) % 8), 1.0)).collect();
        let triples: Vec<Triple> = pos.iter().map(|p| p.0).collect();
        let graph = crate::kg::KnowledgeGraph::from_parts(
            (0..8).map(|i| format!("e{i}")).collect(),
            (0..3).map(|i| format!("r{i}")).collect(),
            triples.clone(),
        );
        let negs = negative_batch(&graph, &triples, 3, 3);
        let (lw, gw) = total_loss(&params, &pos, &negs, LossMode::Weighted, 0.34).unwrap();
        let (ls, gs) = total_loss(&params, &pos, &negs, LossMode::Standard, 0.34).unwrap();
        assert_eq!(lw, ls);
        assert_eq!(gw, gs);
    }

    #[test]
    fn out_of_range_weight_rejected() {
        let params = init_params(3, 1, 2, 9.0, 1);
        let pos = vec![(triple(0, 0, 1), 1.5)];
        let negs = NegativeBatch { per_positive: vec![vec![triple(0, 0, 2)]] };
        for mode in [LossMode::Weighted, LossMode::Standard] {
            let err = total_loss(&params, &pos, &negs, mode, 0.34).unwrap_err();
            assert!(matches!(err, RotateError::BadWeight(_)));
        }
    }

    /// Central finite differences of the detached objective: softmax weights
    /// are frozen at the base point, matching the analytic gradient's
    /// definition.
    fn fd_check(params: &RotateParams, pos: &Triple, negs: &[Triple], alpha: f64) -> f64 {
        let (_, grads) = positive_loss_term(params, pos, negs, alpha).unwrap();
        let base_p = {
            let d: Vec<f64> = negs.iter().map(|n| params.distance_unchecked(n)).collect();
            adversarial_weights(&d, alpha, params.margin())
        };
        let frozen_value = |p: &RotateParams| -> f64 {
            let margin = p.margin();
            let mut v = -log_sigmoid(margin - p.distance_unchecked(pos));
            for (n, pj) in negs.iter().zip(&base_p) {
                v -= pj * log_sigmoid(p.distance_unchecked(n) - margin);
            }
            v
        };
        let h = 1e-5;
        let mut max_rel = 0.0f64;
        let mut probe = |analytic: f64, plus: f64, minus: f64| {
            let fd = (plus - minus) / (2.0 * h);
            let denom = analytic.abs().max(fd.abs()).max(1e-8);
            max_rel = max_rel.max((analytic - fd).abs() / denom);
        };
        for (&id, row) in &grads.entities {
            for coord in 0..row.len() {
                let mut p1 = params.clone();
                nudge_entity(&mut p1, id as usize, coord, h);
                let mut p2 = params.clone();
                nudge_entity(&mut p2, id as usize, coord, -h);
                probe(row[coord], frozen_value(&p1), frozen_value(&p2));
            }
        }
        for (&id, row) in &grads.relations {
            for coord in 0..row.len() {
                let mut p1 = params.clone();
                nudge_phase(&mut p1, id as usize, coord, h);
                let mut p2 = params.clone();
                nudge_phase(&mut p2, id as usize, coord, -h);
                probe(row[coord], frozen_value(&p1), frozen_value(&p2));
            }
        }
        max_rel
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for case in 0..20 {
            let params = init_params(6, 3, 3, 6.0, 100 + case);
            let pos = triple(rng.random_range(0..6), rng.random_range(0..3), rng.random_range(0..6));
            let negs: Vec<Triple> = (0..3)
                .map(|_| {
                    if rng.random::<bool>() {
                        Triple::new(EntityId(rng.random_range(0..6)), pos.relation, pos.tail)
                    } else {
                        Triple::new(pos.head, pos.relation, EntityId(rng.random_range(0..6)))
                    }
                })
                .collect();
            let max_rel = fd_check(&params, &pos, &negs, 0.34);
            assert!(max_rel < 1e-4, "case {case}: max relative error {max_rel}");
        }
    }
}
