//! Pretrained word vectors and per-entity alignment representations.
//!
//! An entity's representation concatenates three blocks of the word-vector
//! dimension: the embedding of its own label, the mean embedding over its
//! distinct outgoing neighbours' labels and the mean over its distinct
//! ingoing neighbours' labels. Empty neighbour sets contribute zero blocks.

use std::collections::{BTreeSet, HashMap};
use std::io::{self, BufRead, Read, Write};

use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("line {line}: expected header \"count dim\"")]
    BadHeader { line: usize },
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: non-numeric value {value:?}")]
    BadValue { line: usize, value: String },
    #[error("entity id {0} out of range (graph has {1} entities)")]
    UnknownEntity(u32, usize),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("representation cache: {0}")]
    BadCache(String),
}

/// Token-to-vector table loaded from the standard pretrained text format.
#[derive(Debug, Clone)]
pub struct WordVectorTable {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl WordVectorTable {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: HashMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.vectors.get(token).map(|v| v.as_slice())
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f32>) {
        assert_eq!(vector.len(), self.dim, "vector length must equal table dim");
        self.vectors.insert(token.to_string(), vector);
    }
}

/// Loads word vectors from a text stream: a `count dim` header line followed
/// by `token v1 ... v_dim` lines. Tokens are stored verbatim; a token seen
/// twice keeps its last vector.
pub fn load_word_vectors<R: BufRead>(reader: R) -> Result<WordVectorTable, EmbedError> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(EmbedError::BadHeader { line: 1 }),
    };
    let mut parts = header.split_whitespace();
    let _count: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or(EmbedError::BadHeader { line: 1 })?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or(EmbedError::BadHeader { line: 1 })?;
    if parts.next().is_some() {
        return Err(EmbedError::BadHeader { line: 1 });
    }
    let mut table = WordVectorTable::new(dim);
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let line_no = idx + 2;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let token = match fields.next() {
            Some(t) => t.to_string(),
            None => continue,
        };
        let mut vector = Vec::with_capacity(dim);
        for field in fields {
            let value: f32 = field
                .parse()
                .map_err(|_| EmbedError::BadValue { line: line_no, value: field.to_string() })?;
            vector.push(value);
        }
        if vector.len() != dim {
            return Err(EmbedError::DimensionMismatch {
                line: line_no,
                expected: dim,
                found: vector.len(),
            });
        }
        table.vectors.insert(token, vector);
    }
    Ok(table)
}

/// Mean of the in-vocabulary token vectors of a (normalized) label. Labels
/// are split on single spaces; out-of-vocabulary tokens contribute nothing
/// and an all-OOV label embeds to the zero vector.
pub fn embed_label(table: &WordVectorTable, label: &str) -> Vec<f32> {
    let mut sum = vec![0.0f32; table.dim()];
    let mut hits = 0u32;
    for token in label.split(' ') {
        if let Some(vector) = table.get(token) {
            for (acc, &v) in sum.iter_mut().zip(vector) {
                *acc += v;
            }
            hits += 1;
        }
    }
    if hits > 1 {
        let inv = 1.0 / hits as f32;
        for v in &mut sum {
            *v *= inv;
        }
    }
    sum
}

/// How the three representation blocks are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReprMode {
    /// `[label || mean(outgoing) || mean(ingoing)]`.
    Concat,
    /// Elementwise mean of the three blocks, replicated into the same
    /// `3*dim` layout so both modes feed one downstream pipeline.
    Average,
}

impl ReprMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "concat" => Some(Self::Concat),
            "average" => Some(Self::Average),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Concat => "concat",
            Self::Average => "average",
        }
    }
}

/// Distinct outgoing/ingoing neighbour sets per entity, built once per graph.
pub struct NeighborIndex {
    outgoing: Vec<BTreeSet<EntityId>>,
    ingoing: Vec<BTreeSet<EntityId>>,
}

impl NeighborIndex {
    pub fn build(graph: &KnowledgeGraph) -> Self {
        let n = graph.entity_count();
        let mut outgoing = vec![BTreeSet::new(); n];
        let mut ingoing = vec![BTreeSet::new(); n];
        for t in graph.triples() {
            outgoing[t.head.index()].insert(t.tail);
            ingoing[t.tail.index()].insert(t.head);
        }
        Self { outgoing, ingoing }
    }

    pub fn outgoing(&self, e: EntityId) -> &BTreeSet<EntityId> {
        &self.outgoing[e.index()]
    }

    pub fn ingoing(&self, e: EntityId) -> &BTreeSet<EntityId> {
        &self.ingoing[e.index()]
    }
}

fn mean_block(
    graph: &KnowledgeGraph,
    table: &WordVectorTable,
    neighbours: &BTreeSet<EntityId>,
) -> Vec<f32> {
    let mut sum = vec![0.0f32; table.dim()];
    if neighbours.is_empty() {
        return sum;
    }
    for &n in neighbours {
        let v = embed_label(table, graph.entity_label(n));
        for (acc, x) in sum.iter_mut().zip(v) {
            *acc += x;
        }
    }
    let inv = 1.0 / neighbours.len() as f32;
    for v in &mut sum {
        *v *= inv;
    }
    sum
}

/// Representation of one entity as a `3*dim` vector.
pub fn entity_representation(
    graph: &KnowledgeGraph,
    table: &WordVectorTable,
    entity: EntityId,
    mode: ReprMode,
) -> Result<Vec<f32>, EmbedError> {
    if entity.index() >= graph.entity_count() {
        return Err(EmbedError::UnknownEntity(entity.0, graph.entity_count()));
    }
    let index = NeighborIndex::build(graph);
    Ok(representation_with_index(graph, table, &index, entity, mode))
}

fn representation_with_index(
    graph: &KnowledgeGraph,
    table: &WordVectorTable,
    index: &NeighborIndex,
    entity: EntityId,
    mode: ReprMode,
) -> Vec<f32> {
    let dim = table.dim();
    let label_block = embed_label(table, graph.entity_label(entity));
    let out_block = mean_block(graph, table, index.outgoing(entity));
    let in_block = mean_block(graph, table, index.ingoing(entity));
    match mode {
        ReprMode::Concat => {
            let mut v = Vec::with_capacity(3 * dim);
            v.extend_from_slice(&label_block);
            v.extend_from_slice(&out_block);
            v.extend_from_slice(&in_block);
            v
        }
        ReprMode::Average => {
            let mut block = vec![0.0f32; dim];
            for i in 0..dim {
                block[i] = (label_block[i] + out_block[i] + in_block[i]) / 3.0;
            }
            let mut v = Vec::with_capacity(3 * dim);
            for _ in 0..3 {
                v.extend_from_slice(&block);
            }
            v
        }
    }
}

/// Representations for every entity in the graph's table, indexed by id.
pub fn all_representations(
    graph: &KnowledgeGraph,
    table: &WordVectorTable,
    mode: ReprMode,
) -> Vec<Vec<f32>> {
    let index = NeighborIndex::build(graph);
    graph
        .entity_ids()
        .map(|e| representation_with_index(graph, table, &index, e, mode))
        .collect()
}

const CACHE_MAGIC: &[u8; 4] = b"EREP";
const CACHE_VERSION: u32 = 1;

/// Writes a representation cache: header `(magic, version, vec_len, count)`
/// then one `(entity id, vec_len little-endian f32)` record per entity.
pub fn write_repr_cache<W: Write>(writer: &mut W, reprs: &[Vec<f32>]) -> Result<(), EmbedError> {
    let vec_len = reprs.first().map_or(0, |v| v.len());
    writer.write_all(CACHE_MAGIC)?;
    writer.write_all(&CACHE_VERSION.to_le_bytes())?;
    writer.write_all(&(vec_len as u32).to_le_bytes())?;
    writer.write_all(&(reprs.len() as u64).to_le_bytes())?;
    for (id, vector) in reprs.iter().enumerate() {
        if vector.len() != vec_len {
            return Err(EmbedError::BadCache(format!(
                "entity {id}: vector length {} != {vec_len}",
                vector.len()
            )));
        }
        writer.write_all(&(id as u32).to_le_bytes())?;
        for &v in vector {
            writer.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a representation cache written by [`write_repr_cache`]. Records are
/// required to appear in dense id order.
pub fn read_repr_cache<R: Read>(reader: &mut R) -> Result<Vec<Vec<f32>>, EmbedError> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(EmbedError::BadCache("bad magic".into()));
    }
    let mut u32buf = [0u8; 4];
    reader.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != CACHE_VERSION {
        return Err(EmbedError::BadCache(format!("unsupported version {version}")));
    }
    reader.read_exact(&mut u32buf)?;
    let vec_len = u32::from_le_bytes(u32buf) as usize;
    let mut u64buf = [0u8; 8];
    reader.read_exact(&mut u64buf)?;
    let count = u64::from_le_bytes(u64buf) as usize;
    let mut out = Vec::with_capacity(count);
    for expected in 0..count {
        reader.read_exact(&mut u32buf)?;
        let id = u32::from_le_bytes(u32buf) as usize;
        if id != expected {
            return Err(EmbedError::BadCache(format!("record {expected} has id {id}")));
        }
        let mut vector = Vec::with_capacity(vec_len);
        for _ in 0..vec_len {
            reader.read_exact(&mut u32buf)?;
            vector.push(f32::from_le_bytes(u32buf));
        }
        out.push(vector);
    }
    Ok(out)
}
