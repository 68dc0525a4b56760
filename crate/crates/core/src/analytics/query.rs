//! Item queries over a release or an experiment, and grouped aggregates.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Serialize, Serializer};

use super::filter::{cell_interval, FilterExpr, Subject};
use crate::curate::effective_status;
use crate::error::{Error, Result};
use crate::ingest::table::is_null;
use crate::ingest::{read_release, ReleasePayload};
use crate::metamodel::{format_decimal, Catalog, Id, Item, Release, TagOrigin, Verdict};
use crate::store::{Index, Store};

/// One item with everything a filter can observe.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ItemRow {
    pub item_id: Id,
    pub release_id: Id,
    pub ordinal: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_id: Option<String>,
    pub fields: BTreeMap<String, String>,
    /// Distinct tag labels, sorted.
    pub tags: Vec<String>,
    /// User-tag authors and annotation authors, sorted.
    pub annotators: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<Verdict>,
}

impl Subject for ItemRow {
    fn field(&self, name: &str) -> Option<&str> {
        self.fields.get(name).map(String::as_str)
    }

    fn has_tag(&self, label: &str) -> bool {
        self.tags.binary_search_by(|t| t.as_str().cmp(label)).is_ok()
    }

    fn has_annotator(&self, member: &str) -> bool {
        self.annotators.binary_search_by(|t| t.as_str().cmp(member)).is_ok()
    }

    fn status(&self) -> Option<Verdict> {
        self.status
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryResult {
    pub scope: Id,
    /// Every field name seen in scope, in first-seen order.
    pub columns: Vec<String>,
    pub rows: Vec<ItemRow>,
}

/// Releases an experiment ended with: outputs of its actions that no other
/// release-producing action of the experiment consumed. Oldest first.
pub fn experiment_releases(index: &Index, experiment_id: &Id) -> Vec<Release> {
    let actions: Vec<_> = index.actions().filter(|a| &a.experiment_id == experiment_id).collect();
    let produced: BTreeSet<&Id> = actions
        .iter()
        .flat_map(|a| a.outputs.iter())
        .filter(|id| id.kind() == "release")
        .collect();
    let consumed: BTreeSet<&Id> = actions
        .iter()
        .filter(|a| a.outputs.iter().any(|o| o.kind() == "release"))
        .flat_map(|a| a.inputs.iter())
        .filter(|id| produced.contains(id))
        .collect();
    let mut out: Vec<Release> = produced
        .difference(&consumed)
        .filter_map(|id| index.release(id).cloned())
        .collect();
    out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
    out
}

fn payload_fields(payload: &ReleasePayload, ordinal: u64) -> Vec<(String, String)> {
    let i = ordinal as usize;
    match payload {
        ReleasePayload::Table(t) | ReleasePayload::Manifest(t) => t
            .rows
            .get(i)
            .map(|row| t.header.iter().cloned().zip(row.iter().cloned()).collect())
            .unwrap_or_default(),
        ReleasePayload::Signal(b) => b
            .traces
            .get(i)
            .map(|tr| {
                vec![
                    ("station_id".to_string(), tr.station_id.clone()),
                    ("channel_id".to_string(), tr.channel_id.clone()),
                    ("axis".to_string(), tr.axis.as_str().to_string()),
                    ("sample_rate_hz".to_string(), tr.sample_rate_hz.to_string()),
                    ("start_time".to_string(), tr.start_time.to_rfc3339()),
                    ("samples".to_string(), tr.samples.len().to_string()),
                ]
            })
            .unwrap_or_default(),
        ReleasePayload::Text(c) => c
            .documents
            .get(i)
            .map(|d| vec![("body".to_string(), d.body.clone())])
            .unwrap_or_default(),
    }
}

fn row_of(index: &Index, item: &Item, payload: &ReleasePayload, annotations: &HashMap<&Id, BTreeSet<String>>) -> ItemRow {
    let mut fields: BTreeMap<String, String> = payload_fields(payload, item.ordinal).into_iter().collect();
    if let Some(ext) = &item.external_id {
        fields.entry("external_id".to_string()).or_insert_with(|| ext.clone());
    }
    let tags = index.tags_of(&item.id);
    let labels: BTreeSet<String> = tags.iter().map(|t| t.label.clone()).collect();
    let mut annotators: BTreeSet<String> = tags
        .iter()
        .filter(|t| t.origin == TagOrigin::User)
        .map(|t| t.author.clone())
        .collect();
    if let Some(a) = annotations.get(&item.id) {
        annotators.extend(a.iter().cloned());
    }
    ItemRow {
        item_id: item.id.clone(),
        release_id: item.release_id.clone(),
        ordinal: item.ordinal,
        external_id: item.external_id.clone(),
        fields,
        tags: labels.into_iter().collect(),
        annotators: annotators.into_iter().collect(),
        status: effective_status(&index.history(&item.id)),
    }
}

/// Every item in scope, unfiltered, with the scope's column order.
pub fn scope_rows(store: &Store, scope: &Id) -> Result<(Vec<String>, Vec<ItemRow>)> {
    let index = store.index();
    let releases = match scope.kind() {
        "release" => vec![index
            .release(scope)
            .cloned()
            .ok_or_else(|| Error::not_found("release", scope.as_str()))?],
        "experiment" => {
            index
                .experiment(scope)
                .ok_or_else(|| Error::not_found("experiment", scope.as_str()))?;
            experiment_releases(index, scope)
        }
        _ => return Err(Error::InvalidArgument(format!("{scope} is neither a release nor an experiment"))),
    };
    release_rows(store, &releases)
}

/// Every item of the given releases, unfiltered.
pub fn release_rows(store: &Store, releases: &[Release]) -> Result<(Vec<String>, Vec<ItemRow>)> {
    let index = store.index();
    let mut annotations: HashMap<&Id, BTreeSet<String>> = HashMap::new();
    for a in index.annotations() {
        annotations.entry(&a.item_id).or_default().insert(a.author_id.to_string());
    }
    let mut columns: Vec<String> = Vec::new();
    let mut rows = Vec::new();
    for release in releases {
        let payload = read_release(store, &release.id)?;
        let header: Vec<String> = match &payload {
            ReleasePayload::Table(t) | ReleasePayload::Manifest(t) => t.header.clone(),
            ReleasePayload::Signal(_) => ["station_id", "channel_id", "axis", "sample_rate_hz", "start_time", "samples"]
                .map(String::from)
                .to_vec(),
            ReleasePayload::Text(_) => vec!["body".to_string()],
        };
        for h in header.into_iter().chain(std::iter::once("external_id".to_string())) {
            if !columns.contains(&h) {
                columns.push(h);
            }
        }
        for item in index.items_of(&release.id) {
            rows.push(row_of(index, item, &payload, &annotations));
        }
    }
    Ok((columns, rows))
}

/// Items satisfying `filter`, in scope order then ordinal order.
pub fn query_items(store: &Store, scope: &Id, filter: &FilterExpr) -> Result<QueryResult> {
    let (columns, rows) = scope_rows(store, scope)?;
    filter_rows(scope.clone(), columns, rows, filter)
}

/// Items of `releases` satisfying `filter`, reported under `scope`.
pub fn query_releases(store: &Store, scope: Id, releases: &[Release], filter: &FilterExpr) -> Result<QueryResult> {
    let (columns, rows) = release_rows(store, releases)?;
    filter_rows(scope, columns, rows, filter)
}

fn filter_rows(scope: Id, columns: Vec<String>, rows: Vec<ItemRow>, filter: &FilterExpr) -> Result<QueryResult> {
    let labels: BTreeSet<String> = rows.iter().flat_map(|r| r.tags.iter().cloned()).collect();
    filter.check(&columns.iter().cloned().collect(), &labels)?;
    Ok(QueryResult {
        scope,
        columns,
        rows: rows.into_iter().filter(|r| filter.matches(r)).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Dimension {
    Column(String),
    /// `YYYY-MM` of the column's start instant.
    Month(String),
    Year(String),
}

impl Dimension {
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        Ok(match call(text) {
            Some(("month", col)) => Dimension::Month(col.to_string()),
            Some(("year", col)) => Dimension::Year(col.to_string()),
            Some((f, _)) => return Err(Error::InvalidArgument(format!("unknown dimension function {f}"))),
            None => Dimension::Column(text.to_string()),
        })
    }

    pub fn name(&self) -> String {
        match self {
            Dimension::Column(c) => c.clone(),
            Dimension::Month(c) => format!("month({c})"),
            Dimension::Year(c) => format!("year({c})"),
        }
    }

    fn column(&self) -> &str {
        match self {
            Dimension::Column(c) | Dimension::Month(c) | Dimension::Year(c) => c,
        }
    }

    fn value(&self, row: &ItemRow) -> String {
        let start = |c: &str| {
            row.field(&format!("{c}_start"))
                .or_else(|| row.field(c))
                .and_then(cell_interval)
                .map(|(a, _)| a)
        };
        match self {
            Dimension::Column(c) => row.field(c).unwrap_or("").to_string(),
            Dimension::Month(c) => start(c).map(|t| t.format("%Y-%m").to_string()).unwrap_or_default(),
            Dimension::Year(c) => start(c).map(|t| t.format("%Y").to_string()).unwrap_or_default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureKind {
    Count,
    Sum,
    Mean,
    Min,
    Max,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Measure {
    pub kind: MeasureKind,
    pub column: Option<String>,
}

fn call(text: &str) -> Option<(&str, &str)> {
    let open = text.find('(')?;
    let inner = text[open + 1..].strip_suffix(')')?;
    Some((&text[..open], inner.trim()))
}

impl Measure {
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text == "count" || text == "count()" {
            return Ok(Measure { kind: MeasureKind::Count, column: None });
        }
        let (f, col) = call(text).ok_or_else(|| Error::InvalidArgument(format!("bad measure {text}")))?;
        let kind = match f {
            "count" => MeasureKind::Count,
            "sum" => MeasureKind::Sum,
            "mean" | "avg" => MeasureKind::Mean,
            "min" => MeasureKind::Min,
            "max" => MeasureKind::Max,
            _ => return Err(Error::InvalidArgument(format!("unknown measure {f}"))),
        };
        Ok(Measure {
            kind,
            column: (!col.is_empty()).then(|| col.to_string()),
        })
    }

    pub fn name(&self) -> String {
        let f = match self.kind {
            MeasureKind::Count => "count",
            MeasureKind::Sum => "sum",
            MeasureKind::Mean => "mean",
            MeasureKind::Min => "min",
            MeasureKind::Max => "max",
        };
        match &self.column {
            Some(c) => format!("{f}({c})"),
            None => f.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Text(String),
    Count(u64),
    Number(f64),
    /// No numeric value in the group.
    Empty,
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Count(n) => n.to_string(),
            Cell::Number(x) => x.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cell::Text(t) => s.serialize_str(t),
            Cell::Count(n) => s.serialize_u64(*n),
            Cell::Number(x) => s.serialize_str(&format_decimal(*x)),
            Cell::Empty => s.serialize_str(""),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

/// One row per distinct dimension tuple, sorted by the tuple. Numeric
/// measures skip null and non-numeric cells.
pub fn aggregate(result: &QueryResult, dims: &[Dimension], measures: &[Measure]) -> Result<AggTable> {
    let known = |c: &str| {
        result.columns.iter().any(|h| h == c)
            || (result.columns.iter().any(|h| *h == format!("{c}_start")))
    };
    for d in dims {
        if !known(d.column()) {
            return Err(Error::UnknownColumn(d.column().to_string()));
        }
    }
    for m in measures {
        match (&m.column, m.kind) {
            (Some(c), _) if !result.columns.contains(c) => return Err(Error::UnknownColumn(c.clone())),
            (None, k) if k != MeasureKind::Count => {
                return Err(Error::InvalidArgument(format!("{} needs a column", m.name())))
            }
            _ => {}
        }
    }
    let mut groups: BTreeMap<Vec<String>, Vec<&ItemRow>> = BTreeMap::new();
    for row in &result.rows {
        groups.entry(dims.iter().map(|d| d.value(row)).collect()).or_default().push(row);
    }
    let columns = dims.iter().map(Dimension::name).chain(measures.iter().map(Measure::name)).collect();
    let rows = groups
        .into_iter()
        .map(|(key, members)| {
            let mut cells: Vec<Cell> = key.into_iter().map(Cell::Text).collect();
            for m in measures {
                let values: Vec<f64> = match &m.column {
                    Some(c) => members
                        .iter()
                        .filter_map(|r| r.field(c))
                        .filter(|v| !is_null(v))
                        .filter_map(|v| v.trim().parse::<f64>().ok())
                        .collect(),
                    None => Vec::new(),
                };
                cells.push(match m.kind {
                    MeasureKind::Count => match &m.column {
                        Some(c) => Cell::Count(members.iter().filter(|r| r.field(c).is_some_and(|v| !is_null(v))).count() as u64),
                        None => Cell::Count(members.len() as u64),
                    },
                    _ if values.is_empty() => Cell::Empty,
                    MeasureKind::Sum => Cell::Number(values.iter().sum()),
                    MeasureKind::Mean => Cell::Number(values.iter().sum::<f64>() / values.len() as f64),
                    MeasureKind::Min => Cell::Number(values.iter().copied().fold(f64::INFINITY, f64::min)),
                    MeasureKind::Max => Cell::Number(values.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
                });
            }
            cells
        })
        .collect();
    Ok(AggTable { columns, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: u64, fields: &[(&str, &str)]) -> ItemRow {
        ItemRow {
            item_id: Id::new(format!("item-{i}")),
            release_id: Id::new("release-x"),
            ordinal: i,
            external_id: None,
            fields: fields.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            tags: vec![],
            annotators: vec![],
            status: None,
        }
    }

    fn result() -> QueryResult {
        QueryResult {
            scope: Id::new("release-x"),
            columns: vec!["seen".into(), "region".into(), "n".into()],
            rows: vec![
                row(0, &[("seen", "2023-01-05"), ("region", "BA"), ("n", "2")]),
                row(1, &[("seen", "2023-01-20"), ("region", "BA"), ("n", "4")]),
                row(2, &[("seen", "2023-02-01T10:00:00Z"), ("region", "SC"), ("n", "")]),
                row(3, &[("seen", ""), ("region", "SC"), ("n", "1")]),
            ],
        }
    }

    #[test]
    fn count_by_month() {
        let t = aggregate(&result(), &[Dimension::parse("month(seen)").unwrap()], &[Measure::parse("count").unwrap()]).unwrap();
        assert_eq!(t.columns, vec!["month(seen)", "count"]);
        let got: Vec<(String, String)> = t.rows.iter().map(|r| (r[0].render(), r[1].render())).collect();
        let want = [("", "1"), ("2023-01", "2"), ("2023-02", "1")];
        assert_eq!(got, want.map(|(a, b)| (a.to_string(), b.to_string())));
    }

    #[test]
    fn measures_and_totals() {
        let ms: Vec<Measure> = ["sum(n)", "mean(n)", "min(n)", "max(n)", "count(n)"].iter().map(|m| Measure::parse(m).unwrap()).collect();
        let t = aggregate(&result(), &[], &ms).unwrap();
        assert_eq!(t.rows.len(), 1);
        let r: Vec<String> = t.rows[0].iter().map(Cell::render).collect();
        assert_eq!(r, vec!["7", &(7.0f64 / 3.0).to_string(), "1", "4", "3"]);
        let by_region = aggregate(&result(), &[Dimension::parse("region").unwrap()], &ms[..1]).unwrap();
        assert_eq!(by_region.rows.len(), 2);
        let empty = QueryResult { rows: vec![], ..result() };
        assert!(aggregate(&empty, &[], &ms).unwrap().rows.is_empty());
        assert!(matches!(aggregate(&result(), &[Dimension::parse("nope").unwrap()], &[]), Err(Error::UnknownColumn(_))));
        assert!(matches!(aggregate(&result(), &[], &[Measure::parse("sum(zz)").unwrap()]), Err(Error::UnknownColumn(_))));
    }
}
