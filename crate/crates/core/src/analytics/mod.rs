//! Exploration over curated data: filters, aggregates, statistics,
//! clustering, agreement, confidence histograms and seismic location.
//!
//! Numeric kernels are generic over [`Scalar`](crate::Scalar).

pub mod agreement;
pub mod bulletin;
pub mod cluster;
pub mod export;
pub mod filter;
pub mod histogram;
pub mod matrix;
pub mod query;
pub mod seismic;
pub mod stats;

pub use agreement::{agreement, paired_labels, TagSource};
pub use bulletin::{build_bulletin, compile_bulletin, compute_events, locate_events, Bulletin, BulletinEvent};
pub use cluster::{adjusted_rand_index, agglomerative, kmeans};
pub use export::{export_as, export_results, ExportFormat, Tabular};
pub use filter::{FilterExpr, Subject};
pub use histogram::{confidence_histogram, tag_confidences, DEFAULT_EDGES, FLAG_BELOW};
pub use query::{aggregate, experiment_releases, query_items, query_releases, AggTable, Cell, Dimension, ItemRow, Measure, QueryResult};
pub use seismic::{locate_epicenter, sp_distance, sta_lta_detect, PhasePick, TriggerInterval};
pub use stats::{correlate, describe, zscore_anomalies};
