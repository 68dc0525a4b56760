//! Three-level metadata model, canonical encoding, hashing and lineage.
//!
//! The class names follow the prose description of the model; the
//! reference class diagram was not available, so names and multiplicities
//! are a reconstruction.

pub mod canonical;
pub mod ids;
pub mod lineage;
pub mod types;
pub mod validate;

pub use canonical::{
    canonical_decode, canonical_encode, content_hash, encode_value, format_decimal, is_hex_digest,
    normalize_floats, parse_decimal, Decimal, Digest,
};
pub use ids::Id;
pub use lineage::{lineage_ancestors, LineageGraph};
pub use types::*;
pub use validate::{validate_entity, Catalog, Violation};

use crate::error::Result;
use crate::store::Index;

/// Lineage over every release, action and artefact in a catalog snapshot.
pub fn build_lineage(snapshot: &Index) -> Result<LineageGraph> {
    LineageGraph::build(snapshot.releases(), snapshot.actions(), snapshot.artefacts())
}
