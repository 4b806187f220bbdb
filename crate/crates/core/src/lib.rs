//! Footwear size recommendation from co-purchase and clickstream data.
//!
//! Two graphs are built per gender / article-type category:
//!
//! * a brand-brand similarity graph whose weights are dot products of NMF
//!   brand factors learned from importance-weighted user-brand interactions
//!   ([`brand_similarity`]);
//! * a directed multi-edge size graph counting co-purchases at each size
//!   difference in {-1, -0.5, 0, 0.5, 1} ([`size_graph`]).
//!
//! [`wbsr`] answers "wears size `s` in brand `u`, what size in brand `v`?"
//! from a strong direct edge or by marginalizing over one-hop intermediate
//! brands. [`skipgram`] is the SKU-embedding baseline and [`eval`] the
//! synthetic-data evaluation harness.

pub mod brand_similarity;
pub mod bundle;
pub mod catalog;
pub mod error;
pub mod eval;
pub mod size_graph;
pub mod skipgram;
pub mod units;
pub mod wbsr;

/// Version written into every persisted document. Loaders refuse newer ones.
pub const FORMAT_VERSION: u32 = 1;

pub use catalog::{Category, EventKind, Gender, InteractionEvent};
pub use error::{
    GraphError, IngestError, NmfError, PersistError, SizeError, SkipGramError, WbsrError,
};
pub use units::{SizeDelta, UkSize};
pub use wbsr::{Hyperparams, Method, Preference, Recommendation};
