//! Experiments, tagging, review and registered transformations.
//!
//! Each store-facing operation is split into a pure `compute_*` step over
//! payloads and a `commit_*` step that appends records, so pipelines can
//! replay the computation without touching the store.

pub mod experiment;
pub mod review;
pub mod tagging;
pub mod transform;

pub use experiment::{
    constraint_warnings, create_experiment, publish_experiment, ExperimentSpec, MemberSpec,
};
pub use review::{
    compute_reviews, effective_status, import_reviews, review, tag_history, ReviewEntry,
    ReviewRequest, ReviewSet,
};
pub use tagging::{
    apply_rule_tags, apply_user_tag, compute_ml_labels, compute_rule_tags, compute_user_tags,
    import_ml_labels, import_user_tags, match_rules, TagEntry, TagRule, TagRuleSet, TagSet,
};
pub use transform::{
    apply_mapping, compute_features, map_headers, normalize_geotemporal, prepare_features,
    FeatureMatrix, HeaderMapping, REQUIRED_FIELDS,
};

use serde_json::Value;

use crate::error::{Error, Result};
use crate::ingest::{read_release, Descriptors, ReleasePayload};
use crate::metamodel::{
    Action, ActionKind, ActionStatus, Artefact, Catalog, Digest, Experiment, Id, JsonMap,
    Provenance, Record, Release, Timestamp,
};
use crate::store::Store;

pub const EXECUTOR: &str = "xv";

/// An action being assembled; finished once its outputs are known.
#[derive(Clone, Debug)]
pub struct ActionDraft {
    pub id: Id,
    pub experiment_id: Id,
    pub kind: ActionKind,
    pub operation: String,
    pub parameters: JsonMap,
    pub inputs: Vec<Id>,
    pub executor: String,
    pub evaluation: JsonMap,
    pub started_at: Timestamp,
}

impl ActionDraft {
    pub fn new(store: &mut Store, experiment_id: &Id, operation: &str) -> Result<Self> {
        experiment(store, experiment_id)?;
        Ok(ActionDraft {
            id: Id::generate("action"),
            experiment_id: experiment_id.clone(),
            kind: ActionKind::Automated,
            operation: operation.to_string(),
            parameters: JsonMap::new(),
            inputs: Vec::new(),
            executor: EXECUTOR.to_string(),
            evaluation: JsonMap::new(),
            started_at: store.now(),
        })
    }

    pub fn manual(mut self) -> Self {
        self.kind = ActionKind::Manual;
        self
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.parameters.insert(key.to_string(), value.into());
        self
    }

    pub fn input(mut self, id: &Id) -> Self {
        if !self.inputs.contains(id) {
            self.inputs.push(id.clone());
        }
        self
    }

    pub fn evaluate(&mut self, key: &str, value: impl Into<Value>) {
        self.evaluation.insert(key.to_string(), value.into());
    }

    pub fn finish(self, store: &mut Store, outputs: Vec<Id>) -> Action {
        Action {
            id: self.id,
            experiment_id: self.experiment_id,
            kind: self.kind,
            operation: self.operation,
            parameters: self.parameters,
            inputs: self.inputs,
            outputs,
            executor: self.executor,
            evaluation: self.evaluation,
            validation_protocol: String::new(),
            started_at: self.started_at,
            finished_at: store.now(),
            status: ActionStatus::Succeeded,
        }
    }
}

pub(crate) fn experiment(store: &Store, id: &Id) -> Result<Experiment> {
    store
        .index()
        .experiment(id)
        .cloned()
        .ok_or_else(|| Error::not_found("experiment", id.as_str()))
}

pub(crate) fn release(store: &Store, id: &Id) -> Result<Release> {
    store
        .index()
        .release(id)
        .cloned()
        .ok_or_else(|| Error::not_found("release", id.as_str()))
}

/// Loads `payload` as a new version of `source`'s dataset, produced by the
/// drafted action.
pub fn commit_derived_release(
    store: &mut Store,
    source: &Release,
    payload: &ReleasePayload,
    descriptors: Option<Descriptors>,
    draft: ActionDraft,
) -> Result<(Release, Action)> {
    let mut descriptors = descriptors.unwrap_or_default();
    if descriptors.license.is_empty() {
        descriptors.license = source.license.clone();
    }
    descriptors.provenance = Some(Provenance::Derived {
        action_id: draft.id.clone(),
    });
    let dataset = source.dataset_id.clone();
    let ingested_on = match descriptors.ingested_on {
        Some(t) => t,
        None => store.now(),
    };
    let version = crate::ingest::load::next_version(store, &dataset);
    let prepared = crate::ingest::prepare_release(&dataset, version, payload, &descriptors, ingested_on)?;
    let action = draft.finish(store, vec![prepared.release.id.clone()]);
    store.put_blob(&prepared.bytes)?;
    let mut records = prepared.records();
    records.push(action.clone().into());
    store.append_batch(records)?;
    Ok((prepared.release, action))
}

/// Stores `bytes` as an artefact produced by the drafted action.
pub fn commit_artefact(
    store: &mut Store,
    structure: &str,
    bytes: &[u8],
    metrics: std::collections::BTreeMap<String, crate::metamodel::Decimal>,
    draft: ActionDraft,
    extra: Vec<Record>,
) -> Result<(Artefact, Action)> {
    let blob_hash: Digest = store.put_blob(bytes)?;
    let artefact = Artefact {
        id: Id::generate("artefact"),
        action_id: draft.id.clone(),
        structure: structure.to_string(),
        metrics,
        blob_hash,
    };
    let action = draft.finish(store, vec![artefact.id.clone()]);
    let mut records: Vec<Record> = vec![action.clone().into(), artefact.clone().into()];
    records.extend(extra);
    store.append_batch(records)?;
    Ok((artefact, action))
}

pub(crate) fn payload_of(store: &Store, release_id: &Id) -> Result<ReleasePayload> {
    read_release(store, release_id)
}
