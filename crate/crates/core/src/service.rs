//! Composite engine calls shared by the command line and the HTTP service.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::analytics::agreement::{agreement, paired_labels, AgreementResult, TagSource};
use crate::analytics::histogram::{confidence_histogram, tag_confidences, ConfidenceHistogram, DEFAULT_EDGES};
use crate::analytics::query::{experiment_releases, query_items, query_releases, QueryResult};
use crate::analytics::FilterExpr;
use crate::error::{Error, Result};
use crate::ingest::{
    create_dataset, load_release, parse_signal, parse_tabular, Descriptors, Dialect, ReleasePayload, SignalBundle,
    TextCorpus, TextDocument,
};
use crate::metamodel::{build_lineage, Catalog, Dataset, Hemisphere, Id, Release};
use crate::store::Store;

/// Dataset by id, or by name when no id matches.
pub fn resolve_dataset(store: &Store, key: &str) -> Result<Dataset> {
    let index = store.index();
    index
        .dataset(&Id::new(key))
        .or_else(|| index.datasets().find(|d| d.name == key))
        .cloned()
        .ok_or_else(|| Error::not_found("dataset", key))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    #[default]
    Tabular,
    Manifest,
    Signal,
    Text,
}

impl std::str::FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tabular" | "table" | "csv" => Ok(SourceKind::Tabular),
            "manifest" | "media-manifest" => Ok(SourceKind::Manifest),
            "signal" => Ok(SourceKind::Signal),
            "text" => Ok(SourceKind::Text),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

/// Dataset attributes used when an ingest creates the dataset.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewDataset {
    #[serde(default)]
    pub domain: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub hemisphere: Hemisphere,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestRequest {
    /// Dataset id or name.
    pub dataset: String,
    #[serde(default)]
    pub kind: SourceKind,
    #[serde(default)]
    pub delimiter: Option<char>,
    #[serde(default)]
    pub descriptors: Descriptors,
    /// Create the dataset first when it does not exist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub create: Option<NewDataset>,
}

/// One source file: its URI and bytes.
pub type Source = (String, Vec<u8>);

fn single(sources: &[Source], kind: &str) -> Result<Source> {
    match sources {
        [one] => Ok(one.clone()),
        _ => Err(Error::InvalidArgument(format!("{kind} ingest takes exactly one source, got {}", sources.len()))),
    }
}

/// Parses the sources as one payload. Signals take any number of traces;
/// text is one document per non-empty line.
pub fn parse_sources(kind: SourceKind, delimiter: Option<char>, sources: &[Source]) -> Result<ReleasePayload> {
    let dialect = Dialect {
        delimiter: match delimiter {
            Some(c) if c.is_ascii() => c as u8,
            Some(c) => return Err(Error::InvalidArgument(format!("delimiter {c:?} is not ASCII"))),
            None => b',',
        },
        ..Dialect::default()
    };
    Ok(match kind {
        SourceKind::Tabular => {
            let (uri, bytes) = single(sources, "tabular")?;
            ReleasePayload::Table(parse_tabular(&bytes, dialect, &uri)?)
        }
        SourceKind::Manifest => {
            let (uri, bytes) = single(sources, "manifest")?;
            ReleasePayload::Manifest(parse_tabular(&bytes, dialect, &uri)?)
        }
        SourceKind::Signal => {
            if sources.is_empty() {
                return Err(Error::EmptySource("no signal files".into()));
            }
            let traces = sources
                .iter()
                .map(|(uri, bytes)| {
                    let text = std::str::from_utf8(bytes)
                        .map_err(|_| Error::HeaderMalformed(format!("{uri} is not UTF-8")))?;
                    parse_signal(text)
                })
                .collect::<Result<Vec<_>>>()?;
            ReleasePayload::Signal(SignalBundle { traces })
        }
        SourceKind::Text => {
            let (uri, bytes) = single(sources, "text")?;
            let text = String::from_utf8(bytes).map_err(|_| Error::EmptySource(format!("{uri} is not UTF-8")))?;
            let documents: Vec<TextDocument> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| TextDocument { external_id: None, body: l.to_string() })
                .collect();
            if documents.is_empty() {
                return Err(Error::EmptySource(uri));
            }
            ReleasePayload::Text(TextCorpus { documents })
        }
    })
}

pub fn ingest(store: &mut Store, req: &IngestRequest, sources: &[Source]) -> Result<Release> {
    let payload = parse_sources(req.kind, req.delimiter, sources)?;
    let dataset = match (resolve_dataset(store, &req.dataset), &req.create) {
        (Ok(d), _) => d,
        (Err(Error::NotFound { .. }), Some(new)) => {
            create_dataset(store, &req.dataset, &new.domain, &new.description, new.hemisphere)?
        }
        (Err(e), _) => return Err(e),
    };
    load_release(store, &dataset.id, &payload, &req.descriptors)
}

/// Newest release of every dataset, oldest dataset first.
pub fn latest_releases(store: &Store) -> Vec<Release> {
    let index = store.index();
    index
        .datasets()
        .filter_map(|d| index.releases_of(&d.id).last().map(|r| (*r).clone()))
        .collect()
}

/// Releases a scope stands for: a release, an experiment's final releases,
/// or, with no scope, the newest release of every dataset.
pub fn scope_releases(store: &Store, scope: Option<&Id>) -> Result<Vec<Release>> {
    let index = store.index();
    match scope {
        None => Ok(latest_releases(store)),
        Some(id) if id.kind() == "release" => {
            Ok(vec![index.release(id).cloned().ok_or_else(|| Error::not_found("release", id.as_str()))?])
        }
        Some(id) if id.kind() == "experiment" => {
            index.experiment(id).ok_or_else(|| Error::not_found("experiment", id.as_str()))?;
            Ok(experiment_releases(index, id))
        }
        Some(id) => Err(Error::InvalidArgument(format!("{id} is neither a release nor an experiment"))),
    }
}

pub const ALL_SCOPE: &str = "all";

pub fn query(store: &Store, scope: Option<&Id>, filter: &str) -> Result<QueryResult> {
    let filter = FilterExpr::parse(filter)?;
    match scope {
        Some(id) => query_items(store, id, &filter),
        None => query_releases(store, Id::new(ALL_SCOPE), &latest_releases(store), &filter),
    }
}

/// Agreement between two tag sources over every item in scope that both
/// labelled.
pub fn scope_agreement(store: &Store, scope: Option<&Id>, a: &TagSource, b: &TagSource) -> Result<AgreementResult<f64>> {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for r in scope_releases(store, scope)? {
        let (x, y) = paired_labels(store.index(), &r.id, a, b);
        left.extend(x);
        right.extend(y);
    }
    agreement(&left, &right)
}

/// Histogram of every algorithmic confidence recorded in the experiment.
pub fn experiment_histogram(store: &Store, experiment_id: &Id) -> Result<ConfidenceHistogram<f64>> {
    let index = store.index();
    index
        .experiment(experiment_id)
        .ok_or_else(|| Error::not_found("experiment", experiment_id.as_str()))?;
    let tags: Vec<_> = index.tags().filter(|t| &t.experiment_id == experiment_id).collect();
    confidence_histogram(&tag_confidences(&tags), &DEFAULT_EDGES)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LineageView {
    pub node: Id,
    pub ancestors: BTreeSet<Id>,
    pub descendants: BTreeSet<Id>,
    /// Actions listing the node as an output.
    pub producers: Vec<Id>,
}

pub fn lineage(store: &Store, node: &Id) -> Result<LineageView> {
    let graph = build_lineage(store.index())?;
    Ok(LineageView {
        node: node.clone(),
        ancestors: graph.ancestors(node)?,
        descendants: graph.descendants(node)?,
        producers: store.index().producers_of(node).into_iter().map(|a| a.id.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> (tempfile::TempDir, Store) {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::init(dir.path().join("s")).unwrap();
        (dir, store)
    }

    #[test]
    fn ingest_creates_dataset_on_request() {
        let (_d, mut store) = store();
        let mut req = IngestRequest { dataset: "posts".into(), ..Default::default() };
        let src = vec![("a.csv".to_string(), b"id,x\n1,2\n".to_vec())];
        assert_eq!(ingest(&mut store, &req, &src).unwrap_err().code(), "NOT_FOUND");
        req.create = Some(NewDataset::default());
        let r = ingest(&mut store, &req, &src).unwrap();
        assert_eq!(r.version, 1);
        assert_eq!(ingest(&mut store, &req, &src).unwrap().version, 2);
        assert_eq!(latest_releases(&store).len(), 1);
    }

    #[test]
    fn unscoped_query_uses_latest_releases() {
        let (_d, mut store) = store();
        let req = IngestRequest { dataset: "p".into(), create: Some(NewDataset::default()), ..Default::default() };
        ingest(&mut store, &req, &[("a".into(), b"x\n1\n2\n".to_vec())]).unwrap();
        ingest(&mut store, &req, &[("a".into(), b"x\n1\n2\n3\n".to_vec())]).unwrap();
        assert_eq!(query(&store, None, "x > 1").unwrap().rows.len(), 2);
    }

    #[test]
    fn unknown_lineage_node() {
        let (_d, store) = store();
        assert_eq!(lineage(&store, &Id::new("release-nope")).unwrap_err().code(), "UNKNOWN_NODE");
    }
}
