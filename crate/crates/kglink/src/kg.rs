//! Multi-relational graph data model, triple-file I/O, label normalization
//! and dataset statistics.
//!
//! Entities and relations are interned into dense 0-based id tables in
//! first-seen order, so a dataset loaded twice from the same bytes gets
//! identical ids.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::path::Path;

use thiserror::Error;

/// Dense 0-based entity id, valid for the graph that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

/// Dense 0-based relation id, valid for the graph that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A directed labelled edge. Ids index the owning graph's tables.
///
/// The derived `Ord` compares `(head, relation, tail)`, which is the tuple
/// order used wherever a deterministic "smallest triple" is needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self { head, relation, tail }
    }
}

/// Raw string triple as read from a file, before interning.
pub type RawTriple = (String, String, String);

/// Field order of a triple file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColumnOrder {
    /// `head \t relation \t tail` (the common dump layout).
    #[default]
    HeadRelationTail,
    /// `head \t tail \t relation`.
    HeadTailRelation,
}

impl ColumnOrder {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hrt" => Some(Self::HeadRelationTail),
            "htr" => Some(Self::HeadTailRelation),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::HeadRelationTail => "hrt",
            Self::HeadTailRelation => "htr",
        }
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: expected 3 tab-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Parses a triple file: UTF-8, one triple per line, fields separated by a
/// single tab, LF line endings. Empty lines and lines starting with `#` are
/// skipped. Returns raw triples in file order.
pub fn parse_triples<R: BufRead>(reader: R, order: ColumnOrder) -> Result<Vec<RawTriple>, ParseError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(ParseError::FieldCount { line: idx + 1, found: fields.len() });
        }
        let triple = match order {
            ColumnOrder::HeadRelationTail => {
                (fields[0].to_string(), fields[1].to_string(), fields[2].to_string())
            }
            ColumnOrder::HeadTailRelation => {
                (fields[0].to_string(), fields[2].to_string(), fields[1].to_string())
            }
        };
        out.push(triple);
    }
    Ok(out)
}

/// Normalizes an entity or relation label: strips a trailing sense suffix of
/// the form `.<pos>.<two digits>` (e.g. `absorb.v.01` becomes `absorb`),
/// replaces underscores with spaces, lowercases and trims.
pub fn normalize_label(raw: &str) -> String {
    let stripped = strip_sense_suffix(raw);
    stripped.replace('_', " ").to_lowercase().trim().to_string()
}

fn strip_sense_suffix(raw: &str) -> &str {
    let parts: Vec<&str> = raw.rsplitn(3, '.').collect();
    if parts.len() == 3 {
        let (index, pos, stem) = (parts[0], parts[1], parts[2]);
        let index_ok = index.len() == 2 && index.bytes().all(|b| b.is_ascii_digit());
        let pos_ok = !pos.is_empty() && pos.bytes().all(|b| b.is_ascii_alphabetic());
        if index_ok && pos_ok && !stem.is_empty() {
            return stem;
        }
    }
    raw
}

/// Interned multi-relational graph: label tables plus a duplicate-free triple
/// list. Immutable after construction; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    entities: Vec<String>,
    relations: Vec<String>,
    triples: Vec<Triple>,
}

impl KnowledgeGraph {
    /// Assembles a graph from pre-built tables. Used when ids are managed by
    /// the caller (e.g. a union graph whose label tables may repeat strings
    /// across namespaces). Panics on out-of-range ids.
    pub fn from_parts(entities: Vec<String>, relations: Vec<String>, triples: Vec<Triple>) -> Self {
        for t in &triples {
            assert!(t.head.index() < entities.len(), "triple head out of range");
            assert!(t.tail.index() < entities.len(), "triple tail out of range");
            assert!(t.relation.index() < relations.len(), "triple relation out of range");
        }
        Self { entities, relations, triples }
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_label(&self, id: EntityId) -> &str {
        &self.entities[id.index()]
    }

    pub fn relation_label(&self, id: RelationId) -> &str {
        &self.relations[id.index()]
    }

    pub fn entity_labels(&self) -> &[String] {
        &self.entities
    }

    pub fn relation_labels(&self) -> &[String] {
        &self.relations
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entities.len() as u32).map(EntityId)
    }

    /// Label-to-id map. Only meaningful for graphs whose labels are unique
    /// (anything built by interning); on duplicate labels the first id wins.
    pub fn entity_index(&self) -> HashMap<&str, EntityId> {
        let mut map = HashMap::with_capacity(self.entities.len());
        for (i, label) in self.entities.iter().enumerate() {
            map.entry(label.as_str()).or_insert(EntityId(i as u32));
        }
        map
    }

    pub fn triple_set(&self) -> HashSet<Triple> {
        self.triples.iter().copied().collect()
    }

    /// Distinct entities that occur in at least one triple.
    pub fn entities_in_triples(&self) -> BTreeSet<EntityId> {
        let mut set = BTreeSet::new();
        for t in &self.triples {
            set.insert(t.head);
            set.insert(t.tail);
        }
        set
    }
}

/// Incremental interning builder for [`KnowledgeGraph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    entities: Vec<String>,
    entity_ids: HashMap<String, EntityId>,
    relations: Vec<String>,
    relation_ids: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    seen: HashSet<Triple>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern_entity(&mut self, label: &str) -> EntityId {
        if let Some(&id) = self.entity_ids.get(label) {
            return id;
        }
        let id = EntityId(self.entities.len() as u32);
        self.entities.push(label.to_string());
        self.entity_ids.insert(label.to_string(), id);
        id
    }

    pub fn intern_relation(&mut self, label: &str) -> RelationId {
        if let Some(&id) = self.relation_ids.get(label) {
            return id;
        }
        let id = RelationId(self.relations.len() as u32);
        self.relations.push(label.to_string());
        self.relation_ids.insert(label.to_string(), id);
        id
    }

    /// Interns a raw triple; duplicates are dropped. Returns the triple and
    /// whether it was newly added.
    pub fn add_raw(&mut self, raw: &RawTriple, normalize: bool) -> (Triple, bool) {
        let (h, r, t) = raw;
        let (h, r, t) = if normalize {
            (normalize_label(h), normalize_label(r), normalize_label(t))
        } else {
            (h.clone(), r.clone(), t.clone())
        };
        let triple = Triple {
            head: self.intern_entity(&h),
            relation: self.intern_relation(&r),
            tail: self.intern_entity(&t),
        };
        let added = self.seen.insert(triple);
        if added {
            self.triples.push(triple);
        }
        (triple, added)
    }

    pub fn build(self) -> KnowledgeGraph {
        KnowledgeGraph {
            entities: self.entities,
            relations: self.relations,
            triples: self.triples,
        }
    }
}

/// A train graph plus val/test triples sharing the train id tables. The
/// tables cover every entity and relation referenced by any split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: KnowledgeGraph,
    pub val: Vec<Triple>,
    pub test: Vec<Triple>,
}

/// Interns the three splits in train -> val -> test order. Labels are
/// normalized and duplicate triples within a split dropped.
pub fn build_dataset(train: &[RawTriple], val: &[RawTriple], test: &[RawTriple]) -> Dataset {
    let mut builder = GraphBuilder::new();
    for raw in train {
        builder.add_raw(raw, true);
    }
    // Val/test share the builder's id tables but keep their own triple lists.
    let mut intern_split = |raws: &[RawTriple]| {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for raw in raws {
            let (h, r, t) = raw;
            let triple = Triple {
                head: builder.intern_entity(&normalize_label(h)),
                relation: builder.intern_relation(&normalize_label(r)),
                tail: builder.intern_entity(&normalize_label(t)),
            };
            if seen.insert(triple) {
                out.push(triple);
            }
        }
        out
    };
    let val = intern_split(val);
    let test = intern_split(test);
    Dataset { graph: builder.build(), val, test }
}

impl Dataset {
    pub fn from_files(
        train: &Path,
        val: &Path,
        test: &Path,
        order: ColumnOrder,
    ) -> Result<Self, ParseError> {
        let read = |p: &Path| -> Result<Vec<RawTriple>, ParseError> {
            let file = std::fs::File::open(p)?;
            parse_triples(io::BufReader::new(file), order)
        };
        Ok(build_dataset(&read(train)?, &read(val)?, &read(test)?))
    }

    /// Distinct entities referenced by val or test triples, in id order.
    pub fn eval_entities(&self) -> BTreeSet<EntityId> {
        let mut set = BTreeSet::new();
        for t in self.val.iter().chain(self.test.iter()) {
            set.insert(t.head);
            set.insert(t.tail);
        }
        set
    }

    /// Distinct relations referenced by val or test triples, in id order.
    pub fn eval_relations(&self) -> BTreeSet<RelationId> {
        self.val.iter().chain(self.test.iter()).map(|t| t.relation).collect()
    }

    /// All known triples across the three splits.
    pub fn all_triples(&self) -> HashSet<Triple> {
        let mut set = self.graph.triple_set();
        set.extend(self.val.iter().copied());
        set.extend(self.test.iter().copied());
        set
    }
}

/// Per-split counts; entity/relation counts are distinct occurrences within
/// that split's triples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct SplitStats {
    pub triples: usize,
    pub entities: usize,
    pub relations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct GraphStats {
    pub train: SplitStats,
    pub val: SplitStats,
    pub test: SplitStats,
}

fn split_stats(triples: &[Triple]) -> SplitStats {
    let mut entities = BTreeSet::new();
    let mut relations = BTreeSet::new();
    for t in triples {
        entities.insert(t.head);
        entities.insert(t.tail);
        relations.insert(t.relation);
    }
    SplitStats { triples: triples.len(), entities: entities.len(), relations: relations.len() }
}

pub fn graph_stats(dataset: &Dataset) -> GraphStats {
    GraphStats {
        train: split_stats(dataset.graph.triples()),
        val: split_stats(&dataset.val),
        test: split_stats(&dataset.test),
    }
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, s) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            writeln!(
                f,
                "split={} triples={} entities={} relations={}",
                name, s.triples, s.entities, s.relations
            )?;
        }
        Ok(())
    }
}

/// Writes triples as labels in the standard file format (head-relation-tail,
/// tab-separated, LF endings).
pub fn write_triples<W: Write>(
    writer: &mut W,
    graph: &KnowledgeGraph,
    triples: &[Triple],
) -> io::Result<()> {
    for t in triples {
        writeln!(
            writer,
            "{}\t{}\t{}",
            graph.entity_label(t.head),
            graph.relation_label(t.relation),
            graph.entity_label(t.tail)
        )?;
    }
    Ok(())
}

pub fn write_triples_to_path(
    path: &Path,
    graph: &KnowledgeGraph,
    triples: &[Triple],
) -> io::Result<()> {
    let mut file = io::BufWriter::new(std::fs::File::create(path)?);
    write_triples(&mut file, graph, triples)?;
    file.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(h: &str, r: &str, t: &str) -> RawTriple {
        (h.to_string(), r.to_string(), t.to_string())
    }

    #[test]
    fn parse_single_line() {
        let got = parse_triples("a\tr\tb\n".as_bytes(), ColumnOrder::HeadRelationTail).unwrap();
        assert_eq!(got, vec![raw("a", "r", "b")]);
    }

    #[test]
    fn parse_empty_input() {
        let got = parse_triples("".as_bytes(), ColumnOrder::HeadRelationTail).unwrap();
        assert!(got.is_empty());
    }

    #[test]
    fn parse_rejects_short_line() {
        let err = parse_triples("a\tr\n".as_bytes(), ColumnOrder::HeadRelationTail).unwrap_err();
        match err {
            ParseError::FieldCount { line, found } => {
                assert_eq!(line, 1);
                assert_eq!(found, 2);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn parse_skips_comments_and_blank_lines() {
        let input = "# header\n\na\tr\tb\n";
        let got = parse_triples(input.as_bytes(), ColumnOrder::HeadRelationTail).unwrap();
        assert_eq!(got, vec![raw("a", "r", "b")]);
    }

    #[test]
    fn parse_head_tail_relation_order() {
        let got = parse_triples("a\tb\tr\n".as_bytes(), ColumnOrder::HeadTailRelation).unwrap();
        assert_eq!(got, vec![raw("a", "r", "b")]);
    }

    #[test]
    fn normalize_strips_sense_suffix() {
        assert_eq!(normalize_label("absorb.v.01"), "absorb");
    }

    #[test]
    fn normalize_identity_case() {
        assert_eq!(normalize_label("car"), "car");
    }

    #[test]
    fn normalize_underscores_and_case() {
        assert_eq!(normalize_label("New_York"), "new york");
    }

    #[test]
    fn normalize_keeps_non_suffix_dots() {
        // Only `.<alpha>.<2 digits>` at the end is an identity suffix.
        assert_eq!(normalize_label("u.s.a"), "u.s.a");
        assert_eq!(normalize_label("version.1.23"), "version.1.23");
        assert_eq!(normalize_label("take_off.v.11"), "take off");
        // No stem left after stripping: leave untouched.
        assert_eq!(normalize_label(".v.01"), ".v.01");
    }

    #[test]
    fn build_dataset_small_example() {
        let ds = build_dataset(&[raw("a", "r", "b")], &[raw("a", "r", "b")], &[]);
        assert_eq!(ds.graph.entity_count(), 2);
        assert_eq!(ds.graph.relation_count(), 1);
        assert_eq!(ds.graph.triples().len(), 1);
        assert_eq!(ds.val.len(), 1);
        assert!(ds.test.is_empty());
    }

    #[test]
    fn build_dataset_dedups_within_split() {
        let ds = build_dataset(&[raw("a", "r", "b"), raw("a", "r", "b")], &[], &[]);
        assert_eq!(ds.graph.triples().len(), 1);
    }

    #[test]
    fn build_dataset_retains_eval_only_entities() {
        let ds = build_dataset(&[raw("a", "r", "b")], &[], &[raw("c", "r", "d")]);
        assert_eq!(ds.graph.entity_count(), 4);
        assert_eq!(ds.test.len(), 1);
        // Interning runs train first, then val, then test.
        assert_eq!(ds.graph.entity_label(EntityId(0)), "a");
        assert_eq!(ds.graph.entity_label(EntityId(2)), "c");
    }

    #[test]
    fn stats_empty_dataset() {
        let ds = build_dataset(&[], &[], &[]);
        let stats = graph_stats(&ds);
        assert_eq!(stats.train, SplitStats { triples: 0, entities: 0, relations: 0 });
        assert_eq!(stats.test, SplitStats { triples: 0, entities: 0, relations: 0 });
    }

    #[test]
    fn stats_counts_per_split() {
        let ds = build_dataset(&[raw("a", "r", "b")], &[raw("a", "r", "b")], &[]);
        let stats = graph_stats(&ds);
        assert_eq!(stats.train, SplitStats { triples: 1, entities: 2, relations: 1 });
        assert_eq!(stats.val, SplitStats { triples: 1, entities: 2, relations: 1 });
        assert_eq!(stats.test, SplitStats { triples: 0, entities: 0, relations: 0 });
    }

    #[test]
    fn stats_display_is_keyed_text() {
        let ds = build_dataset(&[raw("a", "r", "b")], &[], &[]);
        let text = graph_stats(&ds).to_string();
        assert!(text.contains("split=train triples=1 entities=2 relations=1"));
    }

    #[test]
    fn build_is_deterministic() {
        let input = vec![raw("b", "r", "a"), raw("a", "s", "c"), raw("b", "s", "a")];
        let d1 = build_dataset(&input, &[], &[]);
        let d2 = build_dataset(&input, &[], &[]);
        assert_eq!(d1, d2);
    }

    fn label_strategy() -> impl Strategy<Value = String> {
        // Tab-free, non-empty, no leading '#', normalization-stable tokens.
        proptest::string::string_regex("[a-z][a-z0-9 ]{0,8}").unwrap()
    }

    proptest! {
        #[test]
        fn parse_serialize_roundtrip(
            raws in proptest::collection::vec(
                (label_strategy(), label_strategy(), label_strategy()),
                0..40,
            )
        ) {
            let ds = build_dataset(&raws, &[], &[]);
            let mut buf = Vec::new();
            write_triples(&mut buf, &ds.graph, ds.graph.triples()).unwrap();
            let reparsed = parse_triples(buf.as_slice(), ColumnOrder::HeadRelationTail).unwrap();
            let ds2 = build_dataset(&reparsed, &[], &[]);
            // Identical bytes in, identical ids out: dedup already happened on
            // the first pass, so the triple lists match exactly.
            prop_assert_eq!(ds.graph.triples(), ds2.graph.triples());
            prop_assert_eq!(ds.graph.entity_labels(), ds2.graph.entity_labels());
        }

        #[test]
        fn interning_is_bijective(
            raws in proptest::collection::vec(
                (label_strategy(), label_strategy(), label_strategy()),
                1..40,
            )
        ) {
            let ds = build_dataset(&raws, &[], &[]);
            let labels = ds.graph.entity_labels();
            let distinct: HashSet<&String> = labels.iter().collect();
            prop_assert_eq!(distinct.len(), labels.len());
        }
    }
}
