use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{commit_artefact, commit_derived_release, payload_of, release, ActionDraft};
use crate::analytics::matrix::Matrix;
use crate::error::{Error, Result};
use crate::ingest::geotemporal::RuleTable;
use crate::ingest::profile::infer_type;
use crate::ingest::table::is_null;
use crate::ingest::{enrich, Descriptors, EnrichReport, EnrichRules, ReleasePayload, StagedTable};
use crate::metamodel::canonical::decimal_vec;
use crate::metamodel::{canonical_encode, Action, Artefact, Catalog, Decimal, Hemisphere, Id, Release};
use crate::store::Store;

/// Model fields every mapped table must provide or declare absent.
pub const REQUIRED_FIELDS: [&str; 4] = ["external_id", "source", "location", "media_url"];

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaderMapping {
    /// Source column to model field. Unmapped columns keep their names.
    pub mapping: BTreeMap<String, String>,
    #[serde(default)]
    pub absent: Vec<String>,
}

pub fn apply_mapping(table: &StagedTable, mapping: &HeaderMapping) -> Result<StagedTable> {
    for source in mapping.mapping.keys() {
        table.column(source)?;
    }
    let header: Vec<String> = table
        .header
        .iter()
        .map(|h| mapping.mapping.get(h).cloned().unwrap_or_else(|| h.clone()))
        .collect();
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h) {
            return Err(Error::InvalidArgument(format!("mapping produces duplicate column {h}")));
        }
    }
    for field in REQUIRED_FIELDS {
        let mapped = mapping.mapping.values().any(|v| v == field);
        if !mapped && !mapping.absent.iter().any(|a| a == field) {
            return Err(Error::UnmappedRequired(field.to_string()));
        }
    }
    Ok(StagedTable {
        header,
        rows: table.rows.clone(),
        source_uri: table.source_uri.clone(),
    })
}

fn table_of(payload: ReleasePayload, release_id: &Id) -> Result<(StagedTable, bool)> {
    match payload {
        ReleasePayload::Table(t) => Ok((t, false)),
        ReleasePayload::Manifest(t) => Ok((t, true)),
        _ => Err(Error::InvalidArgument(format!("release {release_id} is not tabular"))),
    }
}

pub(crate) fn rewrap(table: StagedTable, manifest: bool) -> ReleasePayload {
    if manifest {
        ReleasePayload::Manifest(table)
    } else {
        ReleasePayload::Table(table)
    }
}

/// Item descriptors for a derived table: model field names when present.
pub(crate) fn table_descriptors(table: &StagedTable) -> Descriptors {
    Descriptors {
        external_id_column: table.has_column("external_id").then(|| "external_id".to_string()),
        media_column: table.has_column("media_url").then(|| "media_url".to_string()),
        ..Default::default()
    }
}

pub fn map_headers(store: &mut Store, release_id: &Id, mapping: &HeaderMapping, experiment_id: &Id) -> Result<(Release, Action)> {
    let source = release(store, release_id)?;
    let (table, manifest) = table_of(payload_of(store, release_id)?, release_id)?;
    let mapped = apply_mapping(&table, mapping)?;
    let draft = ActionDraft::new(store, experiment_id, "map_headers")?
        .param("mapping", serde_json::to_value(mapping)?)
        .input(release_id);
    let descriptors = table_descriptors(&mapped);
    commit_derived_release(store, &source, &rewrap(mapped, manifest), Some(descriptors), draft)
}

pub fn normalize_table(table: &StagedTable, rules: &EnrichRules, table_rules: &RuleTable) -> Result<(StagedTable, EnrichReport)> {
    enrich(table, rules, table_rules)
}

/// Resolves vague time and place columns with the dataset's hemisphere.
/// `rule_text` replaces the bundled rule table when given.
pub fn normalize_geotemporal(
    store: &mut Store,
    release_id: &Id,
    rules: &EnrichRules,
    rule_text: Option<&str>,
    experiment_id: &Id,
) -> Result<(Release, Action, EnrichReport)> {
    let source = release(store, release_id)?;
    let hemisphere = store
        .index()
        .dataset(&source.dataset_id)
        .map_or(Hemisphere::Northern, |d| d.hemisphere);
    let table_rules = match rule_text {
        Some(text) => RuleTable::from_jsonl(text, hemisphere)?,
        None => RuleTable::bundled(hemisphere),
    };
    let (table, manifest) = table_of(payload_of(store, release_id)?, release_id)?;
    let (normalized, report) = normalize_table(&table, rules, &table_rules)?;
    let mut draft = ActionDraft::new(store, experiment_id, "normalize_geotemporal")?
        .param("rules", serde_json::to_value(rules)?)
        .param("hemisphere", serde_json::to_value(hemisphere)?)
        .input(release_id);
    draft.evaluate("resolved", json!(report.resolved));
    draft.evaluate("unresolved", json!(report.unresolved));
    let descriptors = table_descriptors(&normalized);
    let (r, a) = commit_derived_release(store, &source, &rewrap(normalized, manifest), Some(descriptors), draft)?;
    Ok((r, a, report))
}

/// Row-major numeric matrix with the ordinals of the rows it kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub rows: usize,
    pub cols: usize,
    #[serde(with = "decimal_vec")]
    pub data: Vec<f64>,
    pub ordinals: Vec<u64>,
    pub dropped: usize,
}

impl FeatureMatrix {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        canonical_encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn matrix(&self) -> Matrix<f64> {
        Matrix::from_vec(self.rows, self.cols, self.data.clone())
    }

    pub fn structure(&self) -> String {
        format!("feature-matrix {}x{}", self.rows, self.cols)
    }
}

/// Selected numeric columns; rows with a null in any of them are dropped.
pub fn compute_features(table: &StagedTable, columns: &[String]) -> Result<FeatureMatrix> {
    if columns.is_empty() {
        return Err(Error::NonNumericColumn("no columns selected".into()));
    }
    let idx: Vec<usize> = columns.iter().map(|c| table.column(c)).collect::<Result<_>>()?;
    for (&i, name) in idx.iter().zip(columns) {
        let present: Vec<&str> = table.rows.iter().map(|r| r[i].trim()).filter(|c| !c.is_empty()).collect();
        if !infer_type(&present).is_numeric() {
            return Err(Error::NonNumericColumn(name.clone()));
        }
    }
    let mut data = Vec::new();
    let mut ordinals = Vec::new();
    let mut dropped = 0;
    for (n, row) in table.rows.iter().enumerate() {
        if idx.iter().any(|&i| is_null(&row[i])) {
            dropped += 1;
            continue;
        }
        for &i in &idx {
            data.push(row[i].trim().parse::<f64>().expect("numeric column"));
        }
        ordinals.push(n as u64);
    }
    Ok(FeatureMatrix {
        columns: columns.to_vec(),
        rows: ordinals.len(),
        cols: idx.len(),
        data,
        ordinals,
        dropped,
    })
}

pub fn features_metrics(f: &FeatureMatrix) -> BTreeMap<String, Decimal> {
    BTreeMap::from([
        ("rows".to_string(), Decimal(f.rows as f64)),
        ("cols".to_string(), Decimal(f.cols as f64)),
        ("dropped".to_string(), Decimal(f.dropped as f64)),
    ])
}

pub fn prepare_features(store: &mut Store, release_id: &Id, columns: &[String], experiment_id: &Id) -> Result<(Artefact, FeatureMatrix)> {
    let (table, _) = table_of(payload_of(store, release_id)?, release_id)?;
    let features = compute_features(&table, columns)?;
    let mut draft = ActionDraft::new(store, experiment_id, "prepare_features")?
        .param("columns", serde_json::to_value(columns)?)
        .input(release_id);
    draft.evaluate("dropped", json!(features.dropped));
    let (artefact, _) = commit_artefact(
        store,
        &features.structure(),
        &features.to_bytes()?,
        features_metrics(&features),
        draft,
        Vec::new(),
    )?;
    Ok((artefact, features))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jellyfish() -> StagedTable {
        StagedTable::new(
            vec!["ID".into(), "source".into(), "location".into(), "media URL".into()],
            vec![vec!["1".into(), "instagram".into(), "Caravelas".into(), "http://x/1.jpg".into()]],
        )
    }

    fn mapping() -> HeaderMapping {
        HeaderMapping {
            mapping: BTreeMap::from([
                ("ID".to_string(), "external_id".to_string()),
                ("source".to_string(), "source".to_string()),
                ("location".to_string(), "location".to_string()),
                ("media URL".to_string(), "media_url".to_string()),
            ]),
            absent: vec![],
        }
    }

    #[test]
    fn jellyfish_headers_map() {
        let t = apply_mapping(&jellyfish(), &mapping()).unwrap();
        assert_eq!(t.header, vec!["external_id", "source", "location", "media_url"]);
        assert_eq!(t.rows, jellyfish().rows);
    }

    #[test]
    fn identity_mapping_keeps_bytes() {
        let t = apply_mapping(&jellyfish(), &mapping()).unwrap();
        let identity = HeaderMapping {
            mapping: REQUIRED_FIELDS.iter().map(|f| (f.to_string(), f.to_string())).collect(),
            absent: vec![],
        };
        let again = apply_mapping(&t, &identity).unwrap();
        assert_eq!(again.to_bytes().unwrap(), t.to_bytes().unwrap());
    }

    #[test]
    fn unmapped_required_field() {
        let mut m = mapping();
        m.mapping.remove("ID");
        assert!(matches!(apply_mapping(&jellyfish(), &m), Err(Error::UnmappedRequired(f)) if f == "external_id"));
        m.absent.push("external_id".into());
        assert!(apply_mapping(&jellyfish(), &m).is_ok());
    }

    #[test]
    fn features_drop_null_rows() {
        let t = StagedTable::new(
            vec!["a".into(), "b".into(), "s".into()],
            vec![
                vec!["1".into(), "2".into(), "x".into()],
                vec!["3".into(), "".into(), "y".into()],
                vec!["5".into(), "6.5".into(), "z".into()],
                vec!["7".into(), "8".into(), "w".into()],
            ],
        );
        let f = compute_features(&t, &["a".into(), "b".into()]).unwrap();
        assert_eq!((f.rows, f.cols, f.dropped), (3, 2, 1));
        assert_eq!(f.data, vec![1.0, 2.0, 5.0, 6.5, 7.0, 8.0]);
        assert_eq!(f.ordinals, vec![0, 2, 3]);
        assert!(matches!(compute_features(&t, &[]), Err(Error::NonNumericColumn(_))));
        assert!(matches!(compute_features(&t, &["s".into()]), Err(Error::NonNumericColumn(_))));
        let back = FeatureMatrix::from_bytes(&f.to_bytes().unwrap()).unwrap();
        assert_eq!(back, f);
    }
}
