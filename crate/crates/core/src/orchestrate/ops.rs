//! Registered pipeline operations.
//!
//! Every operation is a pure `compute` over payload bytes plus a `commit`
//! that records the result in the store. Replay only runs `compute`.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::analytics::bulletin::compute_events;
use crate::analytics::cluster::{agglomerative, kmeans};
use crate::analytics::seismic::{sta_lta_detect, StaLtaParams};
use crate::curate::review::{commit_review_set, compute_reviews, ReviewSet};
use crate::curate::tagging::{commit_tag_set, compute_ml_labels, compute_rule_tags, compute_user_tags, TagRuleSet, TagSet};
use crate::curate::transform::{apply_mapping, compute_features, normalize_table, rewrap, table_descriptors};
use crate::curate::{commit_artefact, ActionDraft, FeatureMatrix, HeaderMapping};
use crate::error::{Error, Result};
use crate::ingest::load::{next_version, prepare_release, TextCorpus};
use crate::ingest::{
    clean_dedupe, parse_signal, parse_tabular, Descriptors, Dialect, EnrichRules, ReleasePayload, RuleTable,
    SignalBundle, StagedTable,
};
use crate::metamodel::{
    content_hash, encode_value, normalize_floats, parse_decimal, Catalog, ContentKind, Digest, Hemisphere, Id,
    JsonMap, PayloadKind, Provenance, Record,
};
use crate::store::Store;

/// Bytes flowing between steps, with the record that holds them once
/// committed.
#[derive(Clone, Debug, PartialEq)]
pub struct Payload {
    pub kind: PayloadKind,
    pub bytes: Vec<u8>,
    pub record: Option<Id>,
}

impl Payload {
    pub fn new(kind: PayloadKind, bytes: Vec<u8>) -> Self {
        Payload { kind, bytes, record: None }
    }

    pub fn hash(&self) -> Digest {
        content_hash(&self.bytes)
    }

    /// Decodes a table, signal or text payload.
    pub fn release_payload(&self) -> Result<ReleasePayload> {
        Ok(match self.kind {
            PayloadKind::Table => ReleasePayload::Table(StagedTable::from_bytes(&self.bytes)?),
            PayloadKind::Signal => ReleasePayload::Signal(SignalBundle::from_bytes(&self.bytes)?),
            PayloadKind::Text => ReleasePayload::Text(serde_json::from_slice::<TextCorpus>(&self.bytes)?),
            other => return Err(Error::InvalidArgument(format!("{other:?} payload is not release content"))),
        })
    }

    fn table(&self) -> Result<StagedTable> {
        match self.kind {
            PayloadKind::Table => StagedTable::from_bytes(&self.bytes),
            other => Err(Error::InvalidArgument(format!("expected a table, got {other:?}"))),
        }
    }
}

/// Payload kind of stored release content.
pub fn payload_kind(kind: ContentKind) -> PayloadKind {
    match kind {
        ContentKind::Tabular | ContentKind::MediaManifest => PayloadKind::Table,
        ContentKind::Signal => PayloadKind::Signal,
        ContentKind::Text => PayloadKind::Text,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct OpInfo {
    pub name: &'static str,
    pub min_inputs: usize,
    pub max_inputs: usize,
    pub output: PayloadKind,
    pub summary: &'static str,
}

const fn op(name: &'static str, min_inputs: usize, max_inputs: usize, output: PayloadKind, summary: &'static str) -> OpInfo {
    OpInfo { name, min_inputs, max_inputs, output, summary }
}

pub const OPERATIONS: &[OpInfo] = &[
    op("extract_tabular", 1, 1, PayloadKind::Table, "parse delimited text"),
    op("extract_signal", 1, usize::MAX, PayloadKind::Signal, "parse XSAC traces into one bundle"),
    op("clean_dedupe", 1, 1, PayloadKind::Table, "drop duplicate rows by key columns"),
    op("enrich", 1, 1, PayloadKind::Table, "derived time, place and reliability columns"),
    op("load_release", 1, 1, PayloadKind::Table, "load as the next release of a dataset"),
    op("map_headers", 1, 1, PayloadKind::Table, "rename columns to model fields"),
    op("normalize_geotemporal", 1, 1, PayloadKind::Table, "resolve vague time and place values"),
    op("apply_rule_tags", 1, 1, PayloadKind::TagSet, "keyword and regex tagging"),
    op("import_ml_labels", 2, 2, PayloadKind::TagSet, "classifier output from CSV"),
    op("import_user_tags", 2, 2, PayloadKind::TagSet, "manual tags from CSV"),
    op("import_reviews", 2, 2, PayloadKind::ReviewSet, "verdicts from CSV"),
    op("prepare_features", 1, 1, PayloadKind::Matrix, "numeric feature matrix"),
    op("kmeans", 1, 1, PayloadKind::Json, "seeded k-means clustering"),
    op("agglomerative", 1, 1, PayloadKind::Json, "average-linkage clustering"),
    op("sta_lta", 1, 1, PayloadKind::Json, "STA/LTA event triggers per trace"),
    op("locate_events", 1, 1, PayloadKind::Table, "epicenters from phase picks"),
];

pub fn lookup(name: &str) -> Result<&'static OpInfo> {
    OPERATIONS
        .iter()
        .find(|o| o.name == name)
        .ok_or_else(|| Error::UnknownOperation(name.to_string()))
}

/// Result of a pure step.
#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    pub payload: Payload,
    pub structure: String,
    pub evaluation: JsonMap,
}

fn param<T: DeserializeOwned>(params: &JsonMap, key: &str) -> Result<Option<T>> {
    params
        .get(key)
        .map(|v| serde_json::from_value(v.clone()).map_err(|e| Error::InvalidArgument(format!("parameter {key}: {e}"))))
        .transpose()
}

fn required<T: DeserializeOwned>(params: &JsonMap, key: &str) -> Result<T> {
    param(params, key)?.ok_or_else(|| Error::InvalidArgument(format!("missing parameter {key}")))
}

fn number(params: &JsonMap, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(Value::Number(n)) => n.as_f64().ok_or_else(|| Error::InvalidArgument(format!("parameter {key}"))),
        Some(Value::String(s)) => parse_decimal(s).ok_or_else(|| Error::InvalidArgument(format!("parameter {key}: {s:?}"))),
        Some(other) => Err(Error::InvalidArgument(format!("parameter {key}: {other}"))),
    }
}

fn count(params: &JsonMap, key: &str) -> Result<usize> {
    match params.get(key) {
        Some(Value::Number(n)) => n.as_u64().map(|v| v as usize),
        Some(Value::String(s)) => s.trim().parse().ok(),
        _ => None,
    }
    .ok_or_else(|| Error::InvalidArgument(format!("parameter {key} must be a count")))
}

fn text<'a>(params: &'a JsonMap, key: &str) -> Option<&'a str> {
    params.get(key).and_then(Value::as_str)
}

fn hemisphere(params: &JsonMap) -> Result<Hemisphere> {
    Ok(param(params, "hemisphere")?.unwrap_or_default())
}

/// Canonical bytes of any serializable result; floats become decimal strings.
pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_value(value)?;
    normalize_floats(&mut v);
    encode_value(&v)
}

fn expect_kind(p: &Payload, kind: PayloadKind, op: &str) -> Result<()> {
    if p.kind != kind {
        return Err(Error::InvalidArgument(format!("{op} expects a {kind:?} input, got {:?}", p.kind)));
    }
    Ok(())
}

fn table_output(table: &StagedTable, evaluation: JsonMap) -> Result<Output> {
    Ok(Output {
        structure: format!("table {}x{}", table.rows.len(), table.header.len()),
        payload: Payload::new(PayloadKind::Table, table.to_bytes()?),
        evaluation,
    })
}

fn eval(pairs: &[(&str, Value)]) -> JsonMap {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn utf8(p: &Payload) -> Result<&str> {
    std::str::from_utf8(&p.bytes).map_err(|_| Error::InvalidArgument("input is not UTF-8 text".into()))
}

fn features(p: &Payload, op: &str) -> Result<FeatureMatrix> {
    expect_kind(p, PayloadKind::Matrix, op)?;
    FeatureMatrix::from_bytes(&p.bytes)
}

/// Runs the pure part of `op`.
pub fn compute(op: &str, params: &JsonMap, inputs: &[Payload], seed: u64) -> Result<Output> {
    let info = lookup(op)?;
    if inputs.len() < info.min_inputs || inputs.len() > info.max_inputs {
        return Err(Error::InvalidArgument(format!("{op} takes {} to {} inputs, got {}", info.min_inputs, info.max_inputs, inputs.len())));
    }
    let first = &inputs[0];
    match op {
        "extract_tabular" => {
            expect_kind(first, PayloadKind::Raw, op)?;
            let delimiter = text(params, "delimiter").unwrap_or(",");
            let [d] = delimiter.as_bytes() else {
                return Err(Error::InvalidArgument(format!("delimiter {delimiter:?} must be one byte")));
            };
            let dialect = Dialect { delimiter: *d, ..Dialect::default() };
            let t = parse_tabular(&first.bytes, dialect, text(params, "source").unwrap_or(""))?;
            table_output(&t, eval(&[("rows", json!(t.rows.len()))]))
        }
        "extract_signal" => {
            let mut bundle = SignalBundle::default();
            for p in inputs {
                expect_kind(p, PayloadKind::Raw, op)?;
                bundle.traces.push(parse_signal(utf8(p)?)?);
            }
            let samples: usize = bundle.traces.iter().map(|t| t.samples.len()).sum();
            Ok(Output {
                structure: format!("signal {} traces", bundle.traces.len()),
                payload: Payload::new(PayloadKind::Signal, bundle.to_bytes()?),
                evaluation: eval(&[("traces", json!(bundle.traces.len())), ("samples", json!(samples))]),
            })
        }
        "clean_dedupe" => {
            let keys: Vec<String> = param(params, "key_columns")?.unwrap_or_default();
            let (t, report) = clean_dedupe(&first.table()?, &keys)?;
            table_output(&t, eval(&[("kept", json!(report.kept)), ("removed", json!(report.removed))]))
        }
        "enrich" | "normalize_geotemporal" => {
            let rules: EnrichRules = param(params, "rules")?.unwrap_or_default();
            let h = hemisphere(params)?;
            let table_rules = match text(params, "rule_text") {
                Some(t) => RuleTable::from_jsonl(t, h)?,
                None => RuleTable::bundled(h),
            };
            let (t, report) = normalize_table(&first.table()?, &rules, &table_rules)?;
            table_output(
                &t,
                eval(&[
                    ("resolved", json!(report.resolved)),
                    ("unresolved", json!(report.unresolved)),
                    ("graded", json!(report.graded)),
                ]),
            )
        }
        "map_headers" => {
            let mapping: HeaderMapping = required(params, "mapping")?;
            let t = apply_mapping(&first.table()?, &mapping)?;
            table_output(&t, JsonMap::new())
        }
        "load_release" => {
            let payload = first.release_payload()?;
            Ok(Output {
                structure: payload.content_kind().as_str().to_string(),
                payload: Payload::new(first.kind, payload.to_bytes()?),
                evaluation: JsonMap::new(),
            })
        }
        "apply_rule_tags" => {
            let ruleset: TagRuleSet = required(params, "ruleset")?;
            let set = compute_rule_tags(&first.release_payload()?, &ruleset, text(params, "text_column"))?;
            tag_output(set)
        }
        "import_ml_labels" => {
            let model = text(params, "model").unwrap_or("model");
            expect_kind(&inputs[1], PayloadKind::Raw, op)?;
            let set = compute_ml_labels(&first.release_payload()?, &inputs[1].bytes, text(params, "id_column"), model)?;
            tag_output(set)
        }
        "import_user_tags" => {
            expect_kind(&inputs[1], PayloadKind::Raw, op)?;
            let set = compute_user_tags(&first.release_payload()?, &inputs[1].bytes, text(params, "id_column"))?;
            tag_output(set)
        }
        "import_reviews" => {
            expect_kind(&inputs[1], PayloadKind::Raw, op)?;
            let set = compute_reviews(&first.release_payload()?, &inputs[1].bytes, text(params, "id_column"))?;
            let accepted = set.entries.iter().filter(|e| e.verdict == crate::metamodel::Verdict::Accepted).count();
            Ok(Output {
                structure: "review-set".into(),
                evaluation: eval(&[("verdicts", json!(set.entries.len())), ("accepted", json!(accepted))]),
                payload: Payload::new(PayloadKind::ReviewSet, set.to_bytes()?),
            })
        }
        "prepare_features" => {
            let columns: Vec<String> = required(params, "columns")?;
            let f = compute_features(&first.table()?, &columns)?;
            Ok(Output {
                structure: f.structure(),
                evaluation: eval(&[("rows", json!(f.rows)), ("dropped", json!(f.dropped))]),
                payload: Payload::new(PayloadKind::Matrix, f.to_bytes()?),
            })
        }
        "kmeans" => {
            let f = features(first, op)?;
            let k = count(params, "k")?;
            let r = kmeans(&f.matrix(), k, seed)?;
            let body = json!({"method": "kmeans", "k": k, "ordinals": f.ordinals, "result": r});
            Ok(Output {
                structure: format!("clustering kmeans k={k}"),
                evaluation: eval(&[("iterations", json!(r.iterations)), ("converged", json!(r.converged))]),
                payload: Payload::new(PayloadKind::Json, json_bytes(&body)?),
            })
        }
        "agglomerative" => {
            let f = features(first, op)?;
            let k = count(params, "k")?;
            let labels = agglomerative(&f.matrix(), k)?;
            let body = json!({"method": "agglomerative", "k": k, "ordinals": f.ordinals, "assignments": labels});
            Ok(Output {
                structure: format!("clustering agglomerative k={k}"),
                evaluation: JsonMap::new(),
                payload: Payload::new(PayloadKind::Json, json_bytes(&body)?),
            })
        }
        "sta_lta" => {
            expect_kind(first, PayloadKind::Signal, op)?;
            let bundle = SignalBundle::from_bytes(&first.bytes)?;
            let std = StaLtaParams::standard();
            let p = StaLtaParams {
                sta_s: number(params, "sta_s", std.sta_s)?,
                lta_s: number(params, "lta_s", std.lta_s)?,
                on_ratio: number(params, "on_ratio", std.on_ratio)?,
                off_ratio: number(params, "off_ratio", std.off_ratio)?,
            };
            let mut traces = Vec::new();
            let mut total = 0;
            for t in &bundle.traces {
                let intervals = sta_lta_detect(&t.samples, t.sample_rate_hz, &p)?;
                total += intervals.len();
                traces.push(json!({"label": t.label(), "intervals": intervals}));
            }
            Ok(Output {
                structure: "triggers".into(),
                evaluation: eval(&[("intervals", json!(total))]),
                payload: Payload::new(PayloadKind::Json, json_bytes(&json!({ "traces": traces }))?),
            })
        }
        "locate_events" => {
            let vp = number(params, "vp_km_s", crate::analytics::seismic::DEFAULT_VP_KM_S)?;
            let vs = number(params, "vs_km_s", crate::analytics::seismic::DEFAULT_VS_KM_S)?;
            let (events, solutions) = compute_events(&first.table()?, vp, vs)?;
            let degenerate = solutions.iter().filter(|s| s.degenerate).count();
            table_output(&events, eval(&[("events", json!(solutions.len())), ("degenerate", json!(degenerate))]))
        }
        _ => Err(Error::UnknownOperation(op.to_string())),
    }
}

fn tag_output(set: TagSet) -> Result<Output> {
    let counts: JsonMap = set.label_counts().into_iter().map(|(k, v)| (k, json!(v))).collect();
    Ok(Output {
        structure: "tag-set".into(),
        evaluation: eval(&[("tags", json!(set.entries.len())), ("by_label", Value::Object(counts))]),
        payload: Payload::new(PayloadKind::TagSet, set.to_bytes()?),
    })
}

/// Ops whose table output becomes a new release when their input is one.
const TABLE_TRANSFORMS: [&str; 5] = ["clean_dedupe", "enrich", "map_headers", "normalize_geotemporal", "locate_events"];

fn bound_release(store: &Store, p: &Payload, op: &str) -> Result<crate::metamodel::Release> {
    p.record
        .as_ref()
        .and_then(|id| store.index().release(id))
        .cloned()
        .ok_or_else(|| Error::InvalidArgument(format!("{op} needs a loaded release as its first input")))
}

fn descriptors(params: &JsonMap, table: Option<&StagedTable>) -> Result<Descriptors> {
    let mut d = table.map(table_descriptors).unwrap_or_default();
    if let Some(c) = text(params, "external_id_column") {
        d.external_id_column = Some(c.to_string());
    }
    if let Some(c) = text(params, "media_column") {
        d.media_column = Some(c.to_string());
    }
    if let Some(l) = text(params, "license") {
        d.license = l.to_string();
    }
    Ok(d)
}

fn commit_release(
    store: &mut Store,
    dataset: &Id,
    payload: &ReleasePayload,
    mut desc: Descriptors,
    draft: ActionDraft,
) -> Result<Id> {
    desc.provenance = Some(Provenance::Derived { action_id: draft.id.clone() });
    let ingested_on = store.now();
    let version = next_version(store, dataset);
    let prepared = prepare_release(dataset, version, payload, &desc, ingested_on)?;
    let action = draft.finish(store, vec![prepared.release.id.clone()]);
    store.put_blob(&prepared.bytes)?;
    let mut records = prepared.records();
    records.push(Record::from(action.clone()));
    store.append_batch(records)?;
    Ok(prepared.release.id)
}

fn resolve_dataset(store: &Store, reference: &str) -> Result<Id> {
    let index = store.index();
    index
        .datasets()
        .find(|d| d.id.as_str() == reference)
        .or_else(|| index.datasets().find(|d| d.name == reference))
        .map(|d| d.id.clone())
        .ok_or_else(|| Error::not_found("dataset", reference))
}

/// Records a computed step: its action and the release, artefact, tags or
/// verdicts it produced. Returns the action and the record now holding the
/// output.
pub fn commit(store: &mut Store, draft: ActionDraft, op: &str, params: &JsonMap, inputs: &[Payload], output: &Output) -> Result<(Id, Id)> {
    let mut draft = draft;
    for p in inputs {
        if let Some(r) = &p.record {
            draft = draft.input(r);
        }
    }
    for (k, v) in &output.evaluation {
        draft.evaluate(k, v.clone());
    }
    let action_id = draft.id.clone();
    let out = &output.payload;
    let record = match op {
        "load_release" => {
            let dataset = resolve_dataset(store, &required::<String>(params, "dataset")?)?;
            let mut payload = out.release_payload()?;
            if let ReleasePayload::Table(t) = &payload {
                let kind = text(params, "kind").unwrap_or("tabular");
                match ContentKind::parse(kind) {
                    Some(ContentKind::MediaManifest) => payload = ReleasePayload::Manifest(t.clone()),
                    Some(ContentKind::Tabular) => {}
                    _ => return Err(Error::InvalidArgument(format!("kind {kind:?} does not fit a table"))),
                }
            }
            let desc = descriptors(params, None)?;
            commit_release(store, &dataset, &payload, desc, draft)?
        }
        _ if TABLE_TRANSFORMS.contains(&op) && inputs[0].record.as_ref().is_some_and(|r| r.kind() == "release") => {
            let source = bound_release(store, &inputs[0], op)?;
            let table = out.table()?;
            let desc = descriptors(params, Some(&table))?;
            let mut desc = desc;
            if desc.license.is_empty() {
                desc.license = source.license.clone();
            }
            let payload = rewrap(table, source.content_kind == ContentKind::MediaManifest);
            commit_release(store, &source.dataset_id, &payload, desc, draft)?
        }
        "apply_rule_tags" | "import_ml_labels" | "import_user_tags" => {
            let source = bound_release(store, &inputs[0], op)?;
            let set = TagSet::from_bytes(&out.bytes)?;
            let (_, action) = commit_tag_set(store, &source.id, &set, draft)?;
            action.outputs[0].clone()
        }
        "import_reviews" => {
            let source = bound_release(store, &inputs[0], op)?;
            let set = ReviewSet::from_bytes(&out.bytes)?;
            let (_, action) = commit_review_set(store, &source.id, &set, draft)?;
            action.outputs[0].clone()
        }
        _ => {
            let (artefact, _) = commit_artefact(store, &output.structure, &out.bytes, Default::default(), draft, Vec::new())?;
            artefact.id
        }
    };
    Ok((action_id, record))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(text: &str) -> Payload {
        Payload::new(PayloadKind::Raw, text.as_bytes().to_vec())
    }

    #[test]
    fn registry_lookup() {
        assert!(lookup("kmeans").is_ok());
        assert!(matches!(lookup("nope"), Err(Error::UnknownOperation(o)) if o == "nope"));
        let mut names: Vec<_> = OPERATIONS.iter().map(|o| o.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), OPERATIONS.len());
    }

    #[test]
    fn extract_then_dedupe() {
        let t = compute("extract_tabular", &JsonMap::new(), &[raw("id,n\na,1\na,1\nb,2\n")], 0).unwrap();
        let mut params = JsonMap::new();
        params.insert("key_columns".into(), json!(["id"]));
        let d = compute("clean_dedupe", &params, &[t.payload], 0).unwrap();
        assert_eq!(StagedTable::from_bytes(&d.payload.bytes).unwrap().rows.len(), 2);
        assert_eq!(d.evaluation["removed"], json!(1));
    }

    #[test]
    fn arity_and_kind_checks() {
        assert!(compute("extract_tabular", &JsonMap::new(), &[], 0).is_err());
        let t = compute("extract_tabular", &JsonMap::new(), &[raw("a\n1\n")], 0).unwrap();
        assert!(compute("extract_tabular", &JsonMap::new(), &[t.payload], 0).is_err());
    }

    #[test]
    fn kmeans_depends_on_seed_only() {
        let table = raw("x,y\n0,0\n0,1\n10,10\n10,11\n5,5\n");
        let t = compute("extract_tabular", &JsonMap::new(), &[table], 0).unwrap();
        let mut params = JsonMap::new();
        params.insert("columns".into(), json!(["x", "y"]));
        let f = compute("prepare_features", &params, &[t.payload], 0).unwrap();
        let mut k = JsonMap::new();
        k.insert("k".into(), json!(2));
        let a = compute("kmeans", &k, std::slice::from_ref(&f.payload), 7).unwrap();
        let b = compute("kmeans", &k, std::slice::from_ref(&f.payload), 7).unwrap();
        assert_eq!(a.payload.hash(), b.payload.hash());
    }

    #[test]
    fn numbers_accept_decimal_strings() {
        let mut p = JsonMap::new();
        p.insert("vp".into(), json!("6.0000000000000000e0"));
        p.insert("k".into(), json!("3"));
        assert_eq!(number(&p, "vp", 1.0).unwrap(), 6.0);
        assert_eq!(number(&p, "vs", 3.5).unwrap(), 3.5);
        assert_eq!(count(&p, "k").unwrap(), 3);
    }
}
