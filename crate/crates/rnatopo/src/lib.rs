//! File formats and the command line for `rnatopo-core`.
//!
//! * [`corpus`]: tab-separated structure records.
//! * [`lambda_text`]: λ-structures as dot-bracket plus arc label lines.
//! * [`model_json`]: trained models as JSON.
//! * [`cli`]: the `rnatopo` binary.

pub mod cli;
pub mod corpus;
pub mod lambda_text;
pub mod model_json;

pub use rnatopo_core;

/// The bundled toy corpus.
pub const TOY_CORPUS: &str = include_str!("../data/toy_corpus.tsv");
