use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::tagging::external_ids;
use super::{commit_artefact, payload_of, ActionDraft};
use crate::error::{Error, Result};
use crate::ingest::ReleasePayload;
use crate::metamodel::{canonical_encode, Action, Catalog, Id, Record, Seniority, ValidationRecord, Verdict};
use crate::store::{HistoryEntry, Store};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewRequest {
    pub target: Id,
    pub member: Id,
    pub verdict: Verdict,
    #[serde(default)]
    pub comment: String,
    /// Inferred from tag, artefact and experiment targets when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Id>,
    /// History length the reviewer saw; a different current length is a
    /// conflict.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_history: Option<usize>,
}

fn infer_experiment(store: &Store, target: &Id) -> Option<Id> {
    let index = store.index();
    match target.kind() {
        "experiment" => Some(target.clone()),
        "tag" => index.tag(target).map(|t| t.experiment_id.clone()),
        "artefact" => index
            .artefact(target)
            .and_then(|a| index.action(&a.action_id))
            .map(|a| a.experiment_id.clone()),
        "action" => index.action(target).map(|a| a.experiment_id.clone()),
        _ => None,
    }
}

/// Appends a verdict. Any team member may review; publish-level targets
/// (experiments, bulletins) need a senior.
pub fn review(store: &mut Store, req: ReviewRequest) -> Result<ValidationRecord> {
    if !store.index().exists(&req.target) {
        return Err(Error::UnknownTarget(req.target.to_string()));
    }
    let experiment_id = req
        .experiment
        .clone()
        .or_else(|| infer_experiment(store, &req.target))
        .ok_or_else(|| Error::InvalidArgument(format!("no experiment given for {}", req.target)))?;
    let experiment = super::experiment(store, &experiment_id)?;
    let member = experiment.member(&req.member).ok_or_else(|| Error::NotTeamMember {
        member: req.member.to_string(),
        experiment: experiment_id.to_string(),
    })?;
    if store.index().is_publish_level(&req.target) && member.seniority != Seniority::Senior {
        return Err(Error::SeniorRequired(req.target.to_string()));
    }
    if let Some(expected) = req.expected_history {
        let found = store.index().history(&req.target).len();
        if found != expected {
            return Err(Error::Conflict {
                target: req.target.to_string(),
                expected,
                found,
            });
        }
    }
    let record = ValidationRecord {
        id: Id::generate("validation"),
        target: req.target,
        experiment_id,
        validator: req.member,
        verdict: req.verdict,
        comment: req.comment,
        created_at: store.now(),
    };
    store.append(record.clone().into())?;
    Ok(record)
}

/// Tags and verdicts on a target in the order they were recorded.
pub fn tag_history(store: &Store, target: &Id) -> Result<Vec<HistoryEntry>> {
    if !store.index().exists(target) {
        return Err(Error::UnknownTarget(target.to_string()));
    }
    Ok(store.index().history(target))
}

/// The latest verdict in a history, if any.
pub fn effective_status(history: &[HistoryEntry]) -> Option<Verdict> {
    history.iter().rev().find_map(|h| match h {
        HistoryEntry::Validation(v) => Some(v.verdict),
        HistoryEntry::Tag(_) => None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewEntry {
    pub ordinal: u64,
    pub validator: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub comment: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReviewSet {
    pub entries: Vec<ReviewEntry>,
}

impl ReviewSet {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        canonical_encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

/// Verdicts in bulk, CSV `item_external_id,member_id,verdict,comment`,
/// applied in file order.
pub fn compute_reviews(payload: &ReleasePayload, csv_bytes: &[u8], id_column: Option<&str>) -> Result<ReviewSet> {
    let ids = external_ids(payload, id_column)?;
    let mut lookup = std::collections::HashMap::new();
    for (i, id) in ids.iter().enumerate() {
        if let Some(id) = id {
            lookup.entry(id.clone()).or_insert(i as u64);
        }
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv_bytes);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != ["item_external_id", "member_id", "verdict", "comment"] {
        return Err(Error::HeaderMalformed(format!("unexpected review columns {header:?}")));
    }
    let mut entries = Vec::new();
    for r in reader.records() {
        let r = r?;
        let ordinal = *lookup.get(&r[0]).ok_or_else(|| Error::UnknownTarget(r[0].to_string()))?;
        let verdict = Verdict::parse(&r[2]).ok_or_else(|| Error::InvalidArgument(format!("verdict {:?}", &r[2])))?;
        entries.push(ReviewEntry {
            ordinal,
            validator: r[1].to_string(),
            verdict,
            comment: r[3].to_string(),
        });
    }
    Ok(ReviewSet { entries })
}

pub fn commit_review_set(store: &mut Store, release_id: &Id, set: &ReviewSet, mut draft: ActionDraft) -> Result<(Vec<ValidationRecord>, Action)> {
    let experiment = super::experiment(store, &draft.experiment_id)?;
    let mut records = Vec::with_capacity(set.entries.len());
    for e in &set.entries {
        let target = store
            .index()
            .item_at(release_id, e.ordinal)
            .cloned()
            .ok_or_else(|| Error::UnknownTarget(format!("{release_id}#{}", e.ordinal)))?;
        let validator = Id::new(e.validator.clone());
        if experiment.member(&validator).is_none() {
            return Err(Error::NotTeamMember {
                member: e.validator.clone(),
                experiment: experiment.id.to_string(),
            });
        }
        records.push(ValidationRecord {
            id: Id::generate("validation"),
            target,
            experiment_id: experiment.id.clone(),
            validator,
            verdict: e.verdict,
            comment: e.comment.clone(),
            created_at: store.now(),
        });
    }
    let accepted = set.entries.iter().filter(|e| e.verdict == Verdict::Accepted).count();
    draft.evaluate("verdicts", json!(records.len()));
    draft.evaluate("accepted", json!(accepted));
    let draft = draft.manual().input(release_id);
    let extra: Vec<Record> = records.iter().cloned().map(Record::from).collect();
    let (_, action) = commit_artefact(store, "review-set", &set.to_bytes()?, BTreeMap::new(), draft, extra)?;
    Ok((records, action))
}

pub fn import_reviews(
    store: &mut Store,
    release_id: &Id,
    csv_bytes: &[u8],
    experiment_id: &Id,
    id_column: Option<&str>,
) -> Result<(Vec<ValidationRecord>, Action)> {
    let payload = payload_of(store, release_id)?;
    let set = compute_reviews(&payload, csv_bytes, id_column)?;
    let draft = ActionDraft::new(store, experiment_id, "import_reviews")?;
    commit_review_set(store, release_id, &set, draft)
}
