//! Experiment curation engine.
//!
//! The crate is organised around a three-level metadata model (raw content,
//! experimental actions, experiment context) persisted in a single-node
//! lakehouse store: content-addressed blobs plus append-only JSON-lines
//! ledgers. On top of the store sit the extraction/loading pipeline
//! ([`ingest`]), tagging and transformation ([`curate`]), exploration
//! ([`analytics`]) and declarative pipelines with deterministic replay
//! ([`orchestrate`]).
//!
//! Numeric routines in [`analytics`] are generic over [`Scalar`] (`f32` or
//! `f64`). The aliases at the crate root fix the scalar to `f64`, which is
//! what the store and the pipelines use.

pub mod analytics;
pub mod curate;
pub mod error;
pub mod ingest;
pub mod metamodel;
pub mod orchestrate;
pub mod scalar;
pub mod scenarios;
pub mod service;
pub mod store;

pub use error::{Error, Result};
pub use metamodel::{
    canonical_decode, canonical_encode, content_hash, Decimal, Digest, Id, Record, Timestamp,
};
pub use scalar::Scalar;
pub use store::Store;

/// Descriptive statistics over `f64` columns.
pub type Describe = analytics::stats::Describe<f64>;
/// Human-vs-machine agreement with `f64` rates.
pub type AgreementResult = analytics::agreement::AgreementResult<f64>;
/// Dense row-major matrix of `f64`.
pub type Matrix = analytics::matrix::Matrix<f64>;
/// Lloyd k-means outcome over `f64` features.
pub type KMeansResult = analytics::cluster::KMeansResult<f64>;
/// Located epicenter in planar kilometres.
pub type EpicenterSolution = analytics::seismic::EpicenterSolution<f64>;
/// Station observation used by the epicenter solver.
pub type StationObservation = analytics::seismic::StationObservation<f64>;
/// STA/LTA trigger configuration.
pub type StaLtaParams = analytics::seismic::StaLtaParams<f64>;
/// Confidence histogram with `f64` bin edges.
pub type ConfidenceHistogram = analytics::histogram::ConfidenceHistogram<f64>;
