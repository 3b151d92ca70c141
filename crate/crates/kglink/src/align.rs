//! Entity alignment between two graphs, link-triple creation and c-hop
//! cropping of the general-purpose graph.
//!
//! Alignment is exact k-nearest-neighbour search over the representation
//! vectors (full scan); ties are broken by the smaller GKG entity id so the
//! output is deterministic regardless of scheduling.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::embed::ReprMode;
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("representation dimensionality mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("GKG representation set is empty")]
    EmptyGkg,
    #[error("k must be at least 1")]
    BadK,
    #[error("distance must be non-negative, got {0}")]
    NegativeDistance(f64),
    #[error("entity id {0} is not a GKG entity (count {1})")]
    NotAGkgEntity(u32, usize),
    #[error("crop depth must be at least 1 hop")]
    BadCropDepth,
    #[error("{0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Distance metric for the nearest-neighbour search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Cosine,
}

impl Metric {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "euclidean" => Some(Self::Euclidean),
            "cosine" => Some(Self::Cosine),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Euclidean => "euclidean",
            Self::Cosine => "cosine",
        }
    }

    pub fn distance(self, a: &[f32], b: &[f32]) -> f64 {
        match self {
            Metric::Euclidean => {
                let mut acc = 0.0f64;
                for (&x, &y) in a.iter().zip(b) {
                    let d = x as f64 - y as f64;
                    acc += d * d;
                }
                acc.sqrt()
            }
            Metric::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
                for (&x, &y) in a.iter().zip(b) {
                    let (x, y) = (x as f64, y as f64);
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 || nb == 0.0 {
                    // Cosine similarity is undefined for zero vectors; treat
                    // them as maximally dissimilar instead of failing.
                    return 1.0;
                }
                (1.0 - dot / (na.sqrt() * nb.sqrt())).max(0.0)
            }
        }
    }
}

/// Similarity weight attached to a link triple: `1 / (1 + distance)`.
pub fn weight(distance: f64) -> Result<f64, AlignError> {
    if distance < 0.0 {
        return Err(AlignError::NegativeDistance(distance));
    }
    Ok(1.0 / (1.0 + distance))
}

/// One aligned (DKG entity, GKG entity) pair. `weight == 1/(1+distance)` by
/// construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentPair {
    pub dkg: EntityId,
    pub gkg: EntityId,
    pub distance: f64,
    pub weight: f64,
}

impl AlignmentPair {
    pub fn new(dkg: EntityId, gkg: EntityId, distance: f64) -> Result<Self, AlignError> {
        Ok(Self { dkg, gkg, distance, weight: weight(distance)? })
    }
}

/// Max-heap entry ordered by (distance, id); the heap root is the worst
/// candidate currently kept.
struct HeapEntry {
    dist: f64,
    id: u32,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.id.cmp(&other.id))
    }
}

/// For each DKG entity, the `min(k, |GKG|)` nearest GKG entities under the
/// metric, ties broken by smaller GKG id. Results are sorted by
/// `(dkg id, distance, gkg id)` and are exact (full scan per query).
pub fn align(
    dkg_reprs: &[Vec<f32>],
    gkg_reprs: &[Vec<f32>],
    k: usize,
    metric: Metric,
) -> Result<Vec<AlignmentPair>, AlignError> {
    if k == 0 {
        return Err(AlignError::BadK);
    }
    if gkg_reprs.is_empty() {
        return Err(AlignError::EmptyGkg);
    }
    let dim = gkg_reprs[0].len();
    for v in dkg_reprs.iter().chain(gkg_reprs.iter()) {
        if v.len() != dim {
            return Err(AlignError::DimensionMismatch(dim, v.len()));
        }
    }
    let per_query: Vec<Vec<AlignmentPair>> = dkg_reprs
        .par_iter()
        .enumerate()
        .map(|(qi, query)| {
            let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k + 1);
            for (ci, candidate) in gkg_reprs.iter().enumerate() {
                let dist = metric.distance(query, candidate);
                heap.push(HeapEntry { dist, id: ci as u32 });
                if heap.len() > k {
                    heap.pop();
                }
            }
            let mut best: Vec<HeapEntry> = heap.into_vec();
            best.sort_by(|a, b| a.cmp(b));
            best.into_iter()
                .map(|e| {
                    AlignmentPair::new(EntityId(qi as u32), EntityId(e.id), e.dist)
                        .expect("metric distances are non-negative")
                })
                .collect()
        })
        .collect();
    Ok(per_query.into_iter().flatten().collect())
}

/// Result of cropping a GKG: the kept subgraph with re-assigned dense ids,
/// plus the map from original GKG ids to cropped ids for surviving entities.
#[derive(Debug, Clone)]
pub struct CropResult {
    pub graph: KnowledgeGraph,
    pub entity_map: HashMap<EntityId, EntityId>,
}

impl CropResult {
    /// Identity crop: the whole GKG survives with its original ids.
    pub fn uncropped(gkg: &KnowledgeGraph) -> Self {
        let entity_map = gkg.entity_ids().map(|e| (e, e)).collect();
        Self { graph: gkg.clone(), entity_map }
    }
}

/// Restricts the GKG to entities within `c` undirected hops of the aligned
/// set (`None` means no cropping). A triple survives only when both
/// endpoints are kept; relations with no surviving triple are dropped from
/// the relation table.
pub fn crop(
    gkg: &KnowledgeGraph,
    aligned: &BTreeSet<EntityId>,
    c: Option<usize>,
) -> Result<CropResult, AlignError> {
    for &e in aligned {
        if e.index() >= gkg.entity_count() {
            return Err(AlignError::NotAGkgEntity(e.0, gkg.entity_count()));
        }
    }
    let Some(depth) = c else {
        return Ok(CropResult::uncropped(gkg));
    };
    if depth == 0 {
        return Err(AlignError::BadCropDepth);
    }

    let mut adjacency: Vec<Vec<EntityId>> = vec![Vec::new(); gkg.entity_count()];
    for t in gkg.triples() {
        adjacency[t.head.index()].push(t.tail);
        adjacency[t.tail.index()].push(t.head);
    }
    let mut dist: Vec<Option<usize>> = vec![None; gkg.entity_count()];
    let mut queue: VecDeque<EntityId> = VecDeque::new();
    for &e in aligned {
        dist[e.index()] = Some(0);
        queue.push_back(e);
    }
    while let Some(e) = queue.pop_front() {
        let d = dist[e.index()].unwrap();
        if d == depth {
            continue;
        }
        for &n in &adjacency[e.index()] {
            if dist[n.index()].is_none() {
                dist[n.index()] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }

    let mut entity_map: HashMap<EntityId, EntityId> = HashMap::new();
    let mut entities: Vec<String> = Vec::new();
    for e in gkg.entity_ids() {
        if dist[e.index()].is_some() {
            entity_map.insert(e, EntityId(entities.len() as u32));
            entities.push(gkg.entity_label(e).to_string());
        }
    }
    let surviving: Vec<Triple> = gkg
        .triples()
        .iter()
        .filter(|t| entity_map.contains_key(&t.head) && entity_map.contains_key(&t.tail))
        .copied()
        .collect();
    let mut relation_map: HashMap<RelationId, RelationId> = HashMap::new();
    let mut relations: Vec<String> = Vec::new();
    let used: BTreeSet<RelationId> = surviving.iter().map(|t| t.relation).collect();
    for r in used {
        relation_map.insert(r, RelationId(relations.len() as u32));
        relations.push(gkg.relation_label(r).to_string());
    }
    let triples: Vec<Triple> = surviving
        .into_iter()
        .map(|t| Triple::new(entity_map[&t.head], relation_map[&t.relation], entity_map[&t.tail]))
        .collect();
    Ok(CropResult { graph: KnowledgeGraph::from_parts(entities, relations, triples), entity_map })
}

/// Provenance of a union-graph triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripleOrigin {
    Domain,
    General,
    Link,
}

impl TripleOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            TripleOrigin::Domain => "domain",
            TripleOrigin::General => "general",
            TripleOrigin::Link => "link",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "domain" => Some(Self::Domain),
            "general" => Some(Self::General),
            "link" => Some(Self::Link),
            _ => None,
        }
    }
}

impl fmt::Display for TripleOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Union of a DKG and a (cropped) GKG plus directed DKG->GKG link triples.
///
/// Entity ids 0..dkg_entity_count are the DKG namespace in original order;
/// GKG entities follow. The namespaces stay disjoint even when labels
/// collide. The link relation is a fresh id after all DKG and GKG relations.
#[derive(Debug, Clone)]
pub struct LinkedGraph {
    pub graph: KnowledgeGraph,
    pub link_relation: RelationId,
    pub link_triples: Vec<(Triple, f64)>,
    pub origins: Vec<TripleOrigin>,
    pub dkg_entity_count: usize,
    pub dkg_relation_count: usize,
    /// Alignment pairs discarded because their GKG entity was cropped away.
    pub dropped_pairs: usize,
}

fn fresh_link_label(dkg: &KnowledgeGraph, gkg: &KnowledgeGraph) -> String {
    let mut label = "_link".to_string();
    let taken = |l: &str| {
        dkg.relation_labels().iter().any(|r| r == l)
            || gkg.relation_labels().iter().any(|r| r == l)
    };
    while taken(&label) {
        label.insert(0, '_');
    }
    label
}

/// Builds the union graph and one directed link triple per surviving pair
/// (head = DKG entity, tail = GKG entity, relation = fresh link relation).
/// Pairs whose GKG entity did not survive cropping are dropped and counted.
pub fn link(dkg: &KnowledgeGraph, cropped: &CropResult, pairs: &[AlignmentPair]) -> LinkedGraph {
    let gkg = &cropped.graph;
    let entity_offset = dkg.entity_count() as u32;
    let relation_offset = dkg.relation_count() as u32;

    let mut entities: Vec<String> = Vec::with_capacity(dkg.entity_count() + gkg.entity_count());
    entities.extend(dkg.entity_labels().iter().cloned());
    entities.extend(gkg.entity_labels().iter().cloned());
    let mut relations: Vec<String> =
        Vec::with_capacity(dkg.relation_count() + gkg.relation_count() + 1);
    relations.extend(dkg.relation_labels().iter().cloned());
    relations.extend(gkg.relation_labels().iter().cloned());
    let link_relation = RelationId(relations.len() as u32);
    relations.push(fresh_link_label(dkg, gkg));

    let mut triples: Vec<Triple> = Vec::new();
    let mut origins: Vec<TripleOrigin> = Vec::new();
    for &t in dkg.triples() {
        triples.push(t);
        origins.push(TripleOrigin::Domain);
    }
    for &t in gkg.triples() {
        triples.push(Triple::new(
            EntityId(t.head.0 + entity_offset),
            RelationId(t.relation.0 + relation_offset),
            EntityId(t.tail.0 + entity_offset),
        ));
        origins.push(TripleOrigin::General);
    }
    let mut link_triples: Vec<(Triple, f64)> = Vec::new();
    let mut dropped = 0usize;
    for pair in pairs {
        match cropped.entity_map.get(&pair.gkg) {
            Some(&new_id) => {
                let t = Triple::new(
                    pair.dkg,
                    link_relation,
                    EntityId(new_id.0 + entity_offset),
                );
                triples.push(t);
                origins.push(TripleOrigin::Link);
                link_triples.push((t, pair.weight));
            }
            None => dropped += 1,
        }
    }

    LinkedGraph {
        graph: KnowledgeGraph::from_parts(entities, relations, triples),
        link_relation,
        link_triples,
        origins,
        dkg_entity_count: dkg.entity_count(),
        dkg_relation_count: dkg.relation_count(),
        dropped_pairs: dropped,
    }
}

impl LinkedGraph {
    /// Every union triple with its training weight: 1.0 for domain and
    /// general triples, the alignment weight for link triples.
    pub fn weighted_triples(&self) -> Vec<(Triple, f64)> {
        let mut link_iter = self.link_triples.iter();
        self.graph
            .triples()
            .iter()
            .zip(&self.origins)
            .map(|(&t, origin)| match origin {
                TripleOrigin::Link => {
                    let (lt, w) = link_iter.next().expect("origin/link list mismatch");
                    debug_assert_eq!(*lt, t);
                    (t, *w)
                }
                _ => (t, 1.0),
            })
            .collect()
    }
}

const LINKED_TRIPLES: &str = "linked.triples.tsv";
const LINKED_ENTITIES: &str = "linked.entities.tsv";
const LINKED_RELATIONS: &str = "linked.relations.tsv";
const LINKED_ORIGINS: &str = "linked.origins.tsv";
const LINKED_WEIGHTS: &str = "linked.weights.tsv";

impl LinkedGraph {
    /// Serializes the linked graph into a directory: a label triple file plus
    /// entity/relation tables, per-triple origin tags and a link-weight
    /// sidecar (`triple index \t weight`). Labels may repeat across the two
    /// namespaces; origin tags make every line resolvable.
    pub fn write_dir(&self, dir: &Path) -> Result<(), AlignError> {
        let open = |name: &str| -> Result<io::BufWriter<std::fs::File>, AlignError> {
            Ok(io::BufWriter::new(std::fs::File::create(dir.join(name))?))
        };

        let mut w = open(LINKED_ENTITIES)?;
        for (i, label) in self.graph.entity_labels().iter().enumerate() {
            let origin =
                if i < self.dkg_entity_count { TripleOrigin::Domain } else { TripleOrigin::General };
            writeln!(w, "{}\t{}", origin, label)?;
        }
        w.flush()?;

        let mut w = open(LINKED_RELATIONS)?;
        for (i, label) in self.graph.relation_labels().iter().enumerate() {
            let origin = if i == self.link_relation.index() {
                TripleOrigin::Link
            } else if i < self.dkg_relation_count {
                TripleOrigin::Domain
            } else {
                TripleOrigin::General
            };
            writeln!(w, "{}\t{}", origin, label)?;
        }
        w.flush()?;

        let mut w = open(LINKED_TRIPLES)?;
        crate::kg::write_triples(&mut w, &self.graph, self.graph.triples())?;
        w.flush()?;

        let mut w = open(LINKED_ORIGINS)?;
        for origin in &self.origins {
            writeln!(w, "{origin}")?;
        }
        w.flush()?;

        let mut w = open(LINKED_WEIGHTS)?;
        let mut link_iter = self.link_triples.iter();
        for (i, origin) in self.origins.iter().enumerate() {
            if *origin == TripleOrigin::Link {
                let (_, weight) = link_iter.next().expect("origin/link list mismatch");
                writeln!(w, "{i}\t{weight}")?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a linked graph previously written by [`LinkedGraph::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<Self, AlignError> {
        let read_lines = |name: &str| -> Result<Vec<String>, AlignError> {
            let file = std::fs::File::open(dir.join(name))?;
            let mut out = Vec::new();
            for line in io::BufReader::new(file).lines() {
                out.push(line?);
            }
            Ok(out)
        };
        let bad = |msg: String| AlignError::Format(msg);

        let mut entities: Vec<String> = Vec::new();
        let mut dkg_entity_count = 0usize;
        for (i, line) in read_lines(LINKED_ENTITIES)?.iter().enumerate() {
            let (origin, label) = line
                .split_once('\t')
                .ok_or_else(|| bad(format!("{LINKED_ENTITIES}:{}: missing tab", i + 1)))?;
            match TripleOrigin::parse(origin) {
                Some(TripleOrigin::Domain) => dkg_entity_count += 1,
                Some(TripleOrigin::General) => {}
                _ => return Err(bad(format!("{LINKED_ENTITIES}:{}: bad origin", i + 1))),
            }
            entities.push(label.to_string());
        }

        let mut relations: Vec<String> = Vec::new();
        let mut dkg_relation_count = 0usize;
        let mut link_relation: Option<RelationId> = None;
        for (i, line) in read_lines(LINKED_RELATIONS)?.iter().enumerate() {
            let (origin, label) = line
                .split_once('\t')
                .ok_or_else(|| bad(format!("{LINKED_RELATIONS}:{}: missing tab", i + 1)))?;
            match TripleOrigin::parse(origin) {
                Some(TripleOrigin::Domain) => dkg_relation_count += 1,
                Some(TripleOrigin::General) => {}
                Some(TripleOrigin::Link) if link_relation.is_none() => {
                    link_relation = Some(RelationId(i as u32));
                }
                _ => return Err(bad(format!("{LINKED_RELATIONS}:{}: bad origin", i + 1))),
            }
            relations.push(label.to_string());
        }
        let link_relation =
            link_relation.ok_or_else(|| bad("no link relation in relation table".into()))?;

        // Per-namespace label indexes; labels are unique within a namespace.
        let mut domain_entities: HashMap<&str, EntityId> = HashMap::new();
        let mut general_entities: HashMap<&str, EntityId> = HashMap::new();
        for (i, label) in entities.iter().enumerate() {
            let map =
                if i < dkg_entity_count { &mut domain_entities } else { &mut general_entities };
            map.insert(label.as_str(), EntityId(i as u32));
        }
        let mut domain_relations: HashMap<&str, RelationId> = HashMap::new();
        let mut general_relations: HashMap<&str, RelationId> = HashMap::new();
        for (i, label) in relations.iter().enumerate() {
            if RelationId(i as u32) == link_relation {
                continue;
            }
            let map =
                if i < dkg_relation_count { &mut domain_relations } else { &mut general_relations };
            map.insert(label.as_str(), RelationId(i as u32));
        }

        let origin_lines = read_lines(LINKED_ORIGINS)?;
        let triple_lines = read_lines(LINKED_TRIPLES)?;
        if origin_lines.len() != triple_lines.len() {
            return Err(bad(format!(
                "{LINKED_ORIGINS} has {} lines but {LINKED_TRIPLES} has {}",
                origin_lines.len(),
                triple_lines.len()
            )));
        }
        let mut triples: Vec<Triple> = Vec::with_capacity(triple_lines.len());
        let mut origins: Vec<TripleOrigin> = Vec::with_capacity(triple_lines.len());
        let mut link_slots: Vec<usize> = Vec::new();
        for (i, (line, origin)) in triple_lines.iter().zip(&origin_lines).enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad(format!("{LINKED_TRIPLES}:{}: expected 3 fields", i + 1)));
            }
            let origin = TripleOrigin::parse(origin)
                .ok_or_else(|| bad(format!("{LINKED_ORIGINS}:{}: bad origin", i + 1)))?;
            let lookup = |map: &HashMap<&str, EntityId>, label: &str| {
                map.get(label).copied().ok_or_else(|| {
                    bad(format!("{LINKED_TRIPLES}:{}: unknown entity {label:?}", i + 1))
                })
            };
            let triple = match origin {
                TripleOrigin::Domain => Triple::new(
                    lookup(&domain_entities, fields[0])?,
                    *domain_relations.get(fields[1]).ok_or_else(|| {
                        bad(format!("{LINKED_TRIPLES}:{}: unknown relation", i + 1))
                    })?,
                    lookup(&domain_entities, fields[2])?,
                ),
                TripleOrigin::General => Triple::new(
                    lookup(&general_entities, fields[0])?,
                    *general_relations.get(fields[1]).ok_or_else(|| {
                        bad(format!("{LINKED_TRIPLES}:{}: unknown relation", i + 1))
                    })?,
                    lookup(&general_entities, fields[2])?,
                ),
                TripleOrigin::Link => {
                    link_slots.push(i);
                    Triple::new(
                        lookup(&domain_entities, fields[0])?,
                        link_relation,
                        lookup(&general_entities, fields[2])?,
                    )
                }
            };
            triples.push(triple);
            origins.push(origin);
        }

        let mut weights: HashMap<usize, f64> = HashMap::new();
        for (i, line) in read_lines(LINKED_WEIGHTS)?.iter().enumerate() {
            let (idx, w) = line
                .split_once('\t')
                .ok_or_else(|| bad(format!("{LINKED_WEIGHTS}:{}: missing tab", i + 1)))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| bad(format!("{LINKED_WEIGHTS}:{}: bad index", i + 1)))?;
            let w: f64 =
                w.parse().map_err(|_| bad(format!("{LINKED_WEIGHTS}:{}: bad weight", i + 1)))?;
            weights.insert(idx, w);
        }
        let mut link_triples: Vec<(Triple, f64)> = Vec::with_capacity(link_slots.len());
        for slot in link_slots {
            let w = weights
                .get(&slot)
                .copied()
                .ok_or_else(|| bad(format!("link triple {slot} has no weight")))?;
            link_triples.push((triples[slot], w));
        }

        Ok(LinkedGraph {
            graph: KnowledgeGraph::from_parts(entities, relations, triples),
            link_relation,
            link_triples,
            origins,
            dkg_entity_count,
            dkg_relation_count,
            dropped_pairs: 0,
        })
    }
}

/// Header stored with an alignment file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentHeader {
    pub k: usize,
    pub metric: Metric,
    pub mode: ReprMode,
}

/// Writes pairs as `dkg label \t gkg label \t distance \t weight` records
/// under a `# k=.. metric=.. mode=..` header line. Distances and weights use
/// the shortest decimal form that parses back to the exact same float.
pub fn write_alignment<W: Write>(
    writer: &mut W,
    pairs: &[AlignmentPair],
    dkg: &KnowledgeGraph,
    gkg: &KnowledgeGraph,
    header: &AlignmentHeader,
) -> Result<(), AlignError> {
    writeln!(
        writer,
        "# k={} metric={} mode={}",
        header.k,
        header.metric.as_str(),
        header.mode.as_str()
    )?;
    for p in pairs {
        writeln!(
            writer,
            "{}\t{}\t{}\t{}",
            dkg.entity_label(p.dkg),
            gkg.entity_label(p.gkg),
            p.distance,
            p.weight
        )?;
    }
    Ok(())
}

/// Reads an alignment file, resolving labels through the two graphs' tables.
pub fn read_alignment<R: BufRead>(
    reader: R,
    dkg: &KnowledgeGraph,
    gkg: &KnowledgeGraph,
) -> Result<(AlignmentHeader, Vec<AlignmentPair>), AlignError> {
    let bad = |msg: String| AlignError::Format(msg);
    let mut lines = reader.lines();
    let header_line = lines.next().ok_or_else(|| bad("empty alignment file".into()))??;
    let rest = header_line
        .strip_prefix("# ")
        .ok_or_else(|| bad("alignment header must start with '# '".into()))?;
    let mut k = None;
    let mut metric = None;
    let mut mode = None;
    for part in rest.split(' ') {
        match part.split_once('=') {
            Some(("k", v)) => k = v.parse::<usize>().ok(),
            Some(("metric", v)) => metric = Metric::parse(v),
            Some(("mode", v)) => mode = ReprMode::parse(v),
            _ => return Err(bad(format!("bad header field {part:?}"))),
        }
    }
    let header = AlignmentHeader {
        k: k.ok_or_else(|| bad("header missing k".into()))?,
        metric: metric.ok_or_else(|| bad("header missing metric".into()))?,
        mode: mode.ok_or_else(|| bad("header missing mode".into()))?,
    };
    let dkg_index = dkg.entity_index();
    let gkg_index = gkg.entity_index();
    let mut pairs = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad(format!("alignment line {}: expected 4 fields", i + 2)));
        }
        let dkg_id = *dkg_index
            .get(fields[0])
            .ok_or_else(|| bad(format!("alignment line {}: unknown DKG label", i + 2)))?;
        let gkg_id = *gkg_index
            .get(fields[1])
            .ok_or_else(|| bad(format!("alignment line {}: unknown GKG label", i + 2)))?;
        let distance: f64 = fields[2]
            .parse()
            .map_err(|_| bad(format!("alignment line {}: bad distance", i + 2)))?;
        pairs.push(AlignmentPair::new(dkg_id, gkg_id, distance)?);
    }
    Ok((header, pairs))
}
