//! Extraction and loading: files become cleaned, enriched, profiled and
//! catalogued releases.

pub mod enrich;
pub mod geotemporal;
pub mod load;
pub mod profile;
pub mod signal;
pub mod table;

pub use enrich::{enrich, parse_instant, EnrichReport, EnrichRules, ReliabilityRule};
pub use geotemporal::{resolve_geotemporal, Resolution, RuleTable};
pub use load::{
    create_dataset, load_release, load_release_with, prepare_release, read_release, Descriptors, PreparedRelease,
    ReleasePayload, TextCorpus, TextDocument,
};
pub use profile::{profile_release, ProfileSummary};
pub use signal::{extract_signal, parse_signal, write_signal, SignalBundle, SignalTrace};
pub use table::{clean_dedupe, extract_tabular, parse_tabular, DedupeReport, Dialect, StagedTable};
