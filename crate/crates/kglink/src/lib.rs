//! Toolkit for enriching a small domain-specific knowledge graph (DKG) with a
//! large general-purpose one (GKG): align entities by text representations,
//! add weighted link triples, train a RotatE link-prediction model on the
//! combined graph and evaluate it with filtered ranking metrics.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`kg`] — graph data model, triple-file I/O, label handling, statistics
//! - [`sampler`] — simulate early-stage graphs by triple/node/relation sampling
//! - [`embed`] — word vectors and per-entity alignment representations
//! - [`align`] — exact kNN alignment, link-triple creation, c-hop cropping
//! - [`rotate`] — RotatE scoring, self-adversarial loss, Adam training loop
//! - [`eval`] — filtered ranking metrics and the link-score ablation
//! - [`synth`] — deterministic generators for benchmark-style toy datasets
//! - [`pipeline`] — config-driven orchestration shared with the CLI

pub mod align;
pub mod embed;
pub mod eval;
pub mod kg;
pub mod pipeline;
pub mod rotate;
pub mod sampler;
pub mod synth;
