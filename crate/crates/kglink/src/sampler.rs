//! Simulated early-stage graphs: sample a dataset's train split by triples,
//! nodes or relations while preserving val/test coverage.
//!
//! All randomness comes from a `ChaCha8Rng` seeded with the spec's seed;
//! per-element keep decisions are drawn in id order, so a given
//! `(dataset, spec)` always produces the same output on every platform.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{Dataset, EntityId, RelationId, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Triple,
    Node,
    Relation,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Triple => "triple",
            Strategy::Node => "node",
            Strategy::Relation => "relation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub strategy: Strategy,
    /// Keep probability, in (0, 1].
    pub p: f64,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("keep probability must be in (0, 1], got {0}")]
    InvalidP(f64),
    #[error("val/test entity {0:?} has no covering train triple")]
    UncoverableEntity(String),
    #[error("val/test relation {0:?} has no carrying train triple")]
    UncoverableRelation(String),
}

/// A dataset reduced by one sampling strategy. Id tables are shared with the
/// original dataset; only the triple lists shrink.
#[derive(Debug, Clone)]
pub struct SampledDataset {
    pub dataset: Dataset,
    pub spec: SamplingSpec,
    pub preserved_cover: Vec<Triple>,
}

/// Greedy index of the smallest train triple incident to each entity and
/// carrying each relation.
struct MinTripleIndex {
    by_entity: BTreeMap<EntityId, Triple>,
    by_relation: BTreeMap<RelationId, Triple>,
}

impl MinTripleIndex {
    fn build(train: &[Triple]) -> Self {
        let mut by_entity: BTreeMap<EntityId, Triple> = BTreeMap::new();
        let mut by_relation: BTreeMap<RelationId, Triple> = BTreeMap::new();
        let note = |map: &mut BTreeMap<EntityId, Triple>, e: EntityId, t: Triple| {
            map.entry(e).and_modify(|cur| *cur = (*cur).min(t)).or_insert(t);
        };
        for &t in train {
            note(&mut by_entity, t.head, t);
            note(&mut by_entity, t.tail, t);
            by_relation.entry(t.relation).and_modify(|cur| *cur = (*cur).min(t)).or_insert(t);
        }
        Self { by_entity, by_relation }
    }
}

/// Picks train triples guaranteeing that every val/test entity (and, for the
/// triple strategy, every val/test relation) stays represented in a sampled
/// train split. Entities are visited in id order, then relations; each
/// uncovered element contributes its smallest incident train triple.
pub fn preserve_cover(dataset: &Dataset, strategy: Strategy) -> Result<Vec<Triple>, SampleError> {
    assert!(
        matches!(strategy, Strategy::Triple | Strategy::Node),
        "preserve_cover is defined for triple and node strategies"
    );
    let index = MinTripleIndex::build(dataset.graph.triples());
    let mut cover: Vec<Triple> = Vec::new();
    let mut chosen: HashSet<Triple> = HashSet::new();
    let mut covered_entities: BTreeSet<EntityId> = BTreeSet::new();
    let mut covered_relations: BTreeSet<RelationId> = BTreeSet::new();
    let mut push = |t: Triple,
                    cover: &mut Vec<Triple>,
                    covered_entities: &mut BTreeSet<EntityId>,
                    covered_relations: &mut BTreeSet<RelationId>| {
        if chosen.insert(t) {
            cover.push(t);
        }
        covered_entities.insert(t.head);
        covered_entities.insert(t.tail);
        covered_relations.insert(t.relation);
    };

    for entity in dataset.eval_entities() {
        if covered_entities.contains(&entity) {
            continue;
        }
        let triple = index.by_entity.get(&entity).copied().ok_or_else(|| {
            SampleError::UncoverableEntity(dataset.graph.entity_label(entity).to_string())
        })?;
        push(triple, &mut cover, &mut covered_entities, &mut covered_relations);
    }
    if strategy == Strategy::Triple {
        for relation in dataset.eval_relations() {
            if covered_relations.contains(&relation) {
                continue;
            }
            let triple = index.by_relation.get(&relation).copied().ok_or_else(|| {
                SampleError::UncoverableRelation(dataset.graph.relation_label(relation).to_string())
            })?;
            push(triple, &mut cover, &mut covered_entities, &mut covered_relations);
        }
    }
    Ok(cover)
}

/// Cover triple per val/test entity, used by node sampling to find the
/// partner endpoint that must be forced into the sampled entity set.
fn node_cover_assignments(
    dataset: &Dataset,
) -> Result<Vec<(EntityId, Triple)>, SampleError> {
    let index = MinTripleIndex::build(dataset.graph.triples());
    let mut out = Vec::new();
    for entity in dataset.eval_entities() {
        let triple = index.by_entity.get(&entity).copied().ok_or_else(|| {
            SampleError::UncoverableEntity(dataset.graph.entity_label(entity).to_string())
        })?;
        out.push((entity, triple));
    }
    Ok(out)
}

/// Samples the train split according to the spec. Deterministic given
/// `(dataset, spec)`.
pub fn sample(dataset: &Dataset, spec: &SamplingSpec) -> Result<SampledDataset, SampleError> {
    if !(spec.p > 0.0 && spec.p <= 1.0) {
        return Err(SampleError::InvalidP(spec.p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.strategy {
        Strategy::Triple => sample_triples(dataset, spec, &mut rng),
        Strategy::Node => sample_nodes(dataset, spec, &mut rng),
        Strategy::Relation => Ok(sample_relations(dataset, spec, &mut rng)),
    }
}

/// Keeps the preservation cover unconditionally and each remaining triple
/// with the cover-adjusted probability `(p*|T| - |cover|) / (|T| - |cover|)`
/// (clamped at 0), so the expected sampled size is `p*|T|`.
fn sample_triples(
    dataset: &Dataset,
    spec: &SamplingSpec,
    rng: &mut ChaCha8Rng,
) -> Result<SampledDataset, SampleError> {
    let cover = preserve_cover(dataset, Strategy::Triple)?;
    let cover_set: HashSet<Triple> = cover.iter().copied().collect();
    let total = dataset.graph.triples().len();
    let keep_p = if total > cover_set.len() {
        let adjusted =
            (spec.p * total as f64 - cover_set.len() as f64) / (total - cover_set.len()) as f64;
        adjusted.max(0.0)
    } else {
        0.0
    };
    let mut kept = Vec::new();
    for &t in dataset.graph.triples() {
        if cover_set.contains(&t) {
            kept.push(t);
        } else if rng.random::<f64>() < keep_p {
            kept.push(t);
        }
    }
    Ok(assemble(dataset, spec, kept, dataset.val.clone(), dataset.test.clone(), cover))
}

/// Draws an entity set S (one decision per train entity, in id order), forces
/// in each val/test entity's cover partner, and keeps every train triple with
/// at least one endpoint in S or in the val/test entity set.
fn sample_nodes(
    dataset: &Dataset,
    spec: &SamplingSpec,
    rng: &mut ChaCha8Rng,
) -> Result<SampledDataset, SampleError> {
    let assignments = node_cover_assignments(dataset)?;
    let cover: Vec<Triple> = {
        let mut seen = HashSet::new();
        assignments.iter().map(|&(_, t)| t).filter(|t| seen.insert(*t)).collect()
    };
    let train_entities = dataset.graph.entities_in_triples();
    let mut sampled: BTreeSet<EntityId> = BTreeSet::new();
    for &entity in &train_entities {
        if rng.random::<f64>() < spec.p {
            sampled.insert(entity);
        }
    }
    for &(entity, triple) in &assignments {
        let partner = if triple.head == entity { triple.tail } else { triple.head };
        sampled.insert(partner);
    }
    let eval_entities = dataset.eval_entities();
    let keep = |e: EntityId| sampled.contains(&e) || eval_entities.contains(&e);
    let kept: Vec<Triple> = dataset
        .graph
        .triples()
        .iter()
        .copied()
        .filter(|t| keep(t.head) || keep(t.tail))
        .collect();
    Ok(assemble(dataset, spec, kept, dataset.val.clone(), dataset.test.clone(), cover))
}

/// Draws a relation set Q (one decision per relation id) and keeps train
/// triples whose relation is in Q. Val/test cannot be preserved under this
/// strategy; they are filtered to triples whose relation survived and whose
/// endpoints still occur in the sampled train split.
fn sample_relations(dataset: &Dataset, spec: &SamplingSpec, rng: &mut ChaCha8Rng) -> SampledDataset {
    let mut kept_relations: BTreeSet<RelationId> = BTreeSet::new();
    for r in 0..dataset.graph.relation_count() as u32 {
        if rng.random::<f64>() < spec.p {
            kept_relations.insert(RelationId(r));
        }
    }
    let kept: Vec<Triple> = dataset
        .graph
        .triples()
        .iter()
        .copied()
        .filter(|t| kept_relations.contains(&t.relation))
        .collect();
    let surviving: BTreeSet<EntityId> =
        kept.iter().flat_map(|t| [t.head, t.tail]).collect();
    let filter_split = |triples: &[Triple]| -> Vec<Triple> {
        triples
            .iter()
            .copied()
            .filter(|t| {
                kept_relations.contains(&t.relation)
                    && surviving.contains(&t.head)
                    && surviving.contains(&t.tail)
            })
            .collect()
    };
    let val = filter_split(&dataset.val);
    let test = filter_split(&dataset.test);
    assemble(dataset, spec, kept, val, test, Vec::new())
}

fn assemble(
    dataset: &Dataset,
    spec: &SamplingSpec,
    train: Vec<Triple>,
    val: Vec<Triple>,
    test: Vec<Triple>,
    cover: Vec<Triple>,
) -> SampledDataset {
    let graph = crate::kg::KnowledgeGraph::from_parts(
        dataset.graph.entity_labels().to_vec(),
        dataset.graph.relation_labels().to_vec(),
        train,
    );
    SampledDataset {
        dataset: Dataset { graph, val, test },
        spec: *spec,
        preserved_cover: cover,
    }
}

/// Manifest record written next to sampled splits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleManifest {
    pub strategy: Strategy,
    pub p: f64,
    pub seed: u64,
    pub train_triples: usize,
    pub val_triples: usize,
    pub test_triples: usize,
    pub cover_triples: usize,
}

impl SampleManifest {
    pub fn new(sampled: &SampledDataset) -> Self {
        Self {
            strategy: sampled.spec.strategy,
            p: sampled.spec.p,
            seed: sampled.spec.seed,
            train_triples: sampled.dataset.graph.triples().len(),
            val_triples: sampled.dataset.val.len(),
            test_triples: sampled.dataset.test.len(),
            cover_triples: sampled.preserved_cover.len(),
        }
    }
}
