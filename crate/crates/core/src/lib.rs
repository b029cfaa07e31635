//! Corpus-based term set expansion.
//!
//! The pipeline runs corpus ingestion and noun-phrase candidate extraction
//! ([`corpus`]), groups surface variants into term groups ([`termgroup`]),
//! extracts five kinds of contexts for every group mention ([`contexts`]),
//! trains one skip-gram negative-sampling model per context type
//! ([`embedding`]), and expands seed sets by combining per-context
//! centroid similarities with a small MLP ([`mlp`], [`expansion`]).
//! [`eval`] scores rankings with MAP@n.

pub mod contexts;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod expansion;
pub mod mlp;
pub mod stopwords;
pub mod synth;
pub mod termgroup;

pub use contexts::{ContextPair, ContextType};
pub use corpus::{Corpus, Sentence, Token};
pub use embedding::{EmbeddingModel, TrainConfig};
pub use error::{Error, Result};
pub use expansion::{Candidate, ExpansionResult, Scorer, SeedSet};
pub use mlp::MlpModel;
pub use termgroup::{GroupId, Term, TermGroup};
