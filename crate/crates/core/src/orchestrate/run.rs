//! Pipeline definition, execution and replay.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::ops::{self, payload_kind, Output, Payload};
use crate::curate::ActionDraft;
use crate::error::{Error, Result};
use crate::metamodel::{
    content_hash, normalize_floats, Action, ActionStatus, BoundInput, Catalog, Digest, Id,
    PayloadKind, Pipeline, PipelineStep, RunRecord, RunStatus, StepError, StepRecord, StepStatus,
};
use crate::metamodel::validate::step_reference;
use crate::store::Store;

/// Pipeline file contents. The id gains a `pipeline-` prefix when it lacks
/// one and is generated when absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default)]
    pub steps: Vec<PipelineStep>,
}

impl PipelineSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// What a binding names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Binding {
    /// Output of an earlier step.
    Step(usize),
    /// Bytes supplied by name when the run starts.
    Input(String),
    /// A stored release.
    Release(Id),
}

impl Binding {
    pub fn parse(text: &str) -> Result<Self> {
        if let Some(n) = step_reference(text) {
            return Ok(Binding::Step(n));
        }
        if let Some(name) = text.strip_prefix('@') {
            if !name.is_empty() {
                return Ok(Binding::Input(name.to_string()));
            }
        }
        if text.starts_with("release-") {
            return Ok(Binding::Release(Id::new(text)));
        }
        Err(Error::InvalidArgument(format!("binding {text:?} is neither $N, @name nor a release id")))
    }
}

/// Checks a spec without touching a store.
pub fn validate_spec(spec: &PipelineSpec) -> Result<Pipeline> {
    let id = match &spec.id {
        Some(id) if id.starts_with("pipeline-") => Id::new(id.clone()),
        Some(id) => Id::new(format!("pipeline-{id}")),
        None => Id::generate("pipeline"),
    };
    let mut steps = Vec::with_capacity(spec.steps.len());
    for (i, step) in spec.steps.iter().enumerate() {
        let info = ops::lookup(&step.op)?;
        for b in &step.bind {
            if let Binding::Step(n) = Binding::parse(b)? {
                if n >= i {
                    return Err(Error::ForwardReference { step: i, binding: b.clone() });
                }
            }
        }
        if step.bind.len() < info.min_inputs || step.bind.len() > info.max_inputs {
            return Err(Error::InvalidArgument(format!("step {i} ({}) binds {} inputs", step.op, step.bind.len())));
        }
        let mut params = Value::Object(step.params.clone());
        normalize_floats(&mut params);
        let Value::Object(params) = params else { unreachable!() };
        steps.push(PipelineStep { op: step.op.clone(), params, bind: step.bind.clone() });
    }
    Ok(Pipeline { id, steps })
}

pub fn define_pipeline(store: &mut Store, spec: &PipelineSpec) -> Result<Pipeline> {
    let pipeline = validate_spec(spec)?;
    if store.index().pipeline(&pipeline.id).is_some() {
        return Err(Error::InvalidArgument(format!("pipeline {} already exists", pipeline.id)));
    }
    store.append(pipeline.clone().into())?;
    Ok(pipeline)
}

/// Seed handed to step `index`: the first eight bytes of
/// `sha256(seed_base || index)`, big-endian.
pub fn step_seed(seed_base: &str, index: usize) -> u64 {
    let mut material = seed_base.as_bytes().to_vec();
    material.extend_from_slice(&(index as u64).to_be_bytes());
    content_hash(&material).prefix_u64()
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides the run id as seed material.
    pub seed_base: Option<String>,
}

fn pipeline_of(store: &Store, id: &Id) -> Result<Pipeline> {
    store.index().pipeline(id).cloned().ok_or_else(|| Error::not_found("pipeline", id.as_str()))
}

fn release_payload(store: &Store, id: &Id) -> Result<Payload> {
    let release = store.index().release(id).cloned().ok_or_else(|| Error::not_found("release", id.as_str()))?;
    let bytes = read_blob(store, &release.content_hash)?;
    Ok(Payload { kind: payload_kind(release.content_kind), bytes, record: Some(id.clone()) })
}

/// Blob bytes as stored, without an integrity check.
fn read_blob(store: &Store, digest: &Digest) -> Result<Vec<u8>> {
    store.get_blob(digest).map_err(|e| match e {
        Error::UnknownBlob(d) => Error::MissingBlob(d),
        other => other,
    })
}

fn step_error(e: &Error) -> StepError {
    StepError { code: e.code().to_string(), message: e.to_string() }
}

fn elapsed_us(t: Instant) -> u64 {
    t.elapsed().as_micros().min(u64::MAX as u128) as u64
}

/// Executes every step in order and appends the run record. Step failures
/// stop the run and are recorded rather than returned.
pub fn run_pipeline(
    store: &mut Store,
    pipeline_id: &Id,
    experiment_id: &Id,
    inputs: &BTreeMap<String, Vec<u8>>,
    options: &RunOptions,
) -> Result<RunRecord> {
    let pipeline = pipeline_of(store, pipeline_id)?;
    if store.index().experiment(experiment_id).is_none() {
        return Err(Error::not_found("experiment", experiment_id.as_str()));
    }
    for step in &pipeline.steps {
        for b in &step.bind {
            match Binding::parse(b)? {
                Binding::Input(name) if !inputs.contains_key(&name) => {
                    return Err(Error::InvalidArgument(format!("run input {name} was not supplied")));
                }
                Binding::Release(id) if store.index().release(&id).is_none() => {
                    return Err(Error::not_found("release", id.as_str()));
                }
                _ => {}
            }
        }
    }
    let run_id = Id::generate("run");
    let seed_base = options.seed_base.clone().unwrap_or_else(|| run_id.to_string());
    let started_at = store.now();
    let mut outputs: Vec<Payload> = Vec::new();
    let mut steps = Vec::new();
    let mut failed = false;
    for (i, step) in pipeline.steps.iter().enumerate() {
        let seed = step_seed(&seed_base, i);
        let step_started = store.now();
        let clock = Instant::now();
        let mut bound = Vec::new();
        let mut payloads = Vec::new();
        let result = (|| -> Result<(Id, Output)> {
            for b in &step.bind {
                let p = match Binding::parse(b)? {
                    Binding::Step(n) => outputs[n].clone(),
                    Binding::Input(name) => {
                        let bytes = inputs[&name].clone();
                        store.put_blob(&bytes)?;
                        Payload::new(PayloadKind::Raw, bytes)
                    }
                    Binding::Release(id) => release_payload(store, &id)?,
                };
                bound.push(BoundInput { binding: b.clone(), kind: p.kind, hashes: vec![p.hash()] });
                payloads.push(p);
            }
            let output = ops::compute(&step.op, &step.params, &payloads, seed)?;
            let draft = draft_for(store, experiment_id, &run_id, i, step, seed)?;
            let (action, record) = ops::commit(store, draft, &step.op, &step.params, &payloads, &output)?;
            let mut output = output;
            output.payload.record = Some(record);
            Ok((action, output))
        })();
        let finished_at = store.now();
        let wall_clock_us = elapsed_us(clock);
        match result {
            Ok((action_id, output)) => {
                steps.push(StepRecord {
                    index: i as u64,
                    op: step.op.clone(),
                    action_id: Some(action_id),
                    inputs: bound,
                    output_hashes: vec![output.payload.hash()],
                    seed,
                    started_at: step_started,
                    finished_at,
                    wall_clock_us,
                    status: StepStatus::Succeeded,
                    error: None,
                });
                outputs.push(output.payload);
            }
            Err(e) => {
                let action_id = record_failure(store, experiment_id, &run_id, i, step, seed, &payloads, &e);
                steps.push(StepRecord {
                    index: i as u64,
                    op: step.op.clone(),
                    action_id,
                    inputs: bound,
                    output_hashes: Vec::new(),
                    seed,
                    started_at: step_started,
                    finished_at,
                    wall_clock_us,
                    status: StepStatus::Failed,
                    error: Some(step_error(&e)),
                });
                failed = true;
                break;
            }
        }
    }
    let status = match (failed, steps.len()) {
        (false, _) => RunStatus::Succeeded,
        (true, 1) => RunStatus::Failed,
        (true, _) => RunStatus::Partial,
    };
    let record = RunRecord {
        id: run_id,
        pipeline_id: pipeline.id.clone(),
        experiment_id: experiment_id.clone(),
        seed_base,
        steps,
        status,
        started_at,
        finished_at: store.now(),
    };
    store.append(record.clone().into())?;
    Ok(record)
}

fn draft_for(store: &mut Store, experiment_id: &Id, run_id: &Id, index: usize, step: &PipelineStep, seed: u64) -> Result<ActionDraft> {
    let mut draft = ActionDraft::new(store, experiment_id, &step.op)?;
    draft.parameters = step.params.clone();
    draft.parameters.insert("run_id".into(), json!(run_id));
    draft.parameters.insert("step".into(), json!(index));
    draft.parameters.insert("seed".into(), json!(seed.to_string()));
    Ok(draft)
}

/// Appends a failed action for a step that raised, when the experiment
/// still accepts one.
#[allow(clippy::too_many_arguments)]
fn record_failure(
    store: &mut Store,
    experiment_id: &Id,
    run_id: &Id,
    index: usize,
    step: &PipelineStep,
    seed: u64,
    inputs: &[Payload],
    error: &Error,
) -> Option<Id> {
    let mut draft = draft_for(store, experiment_id, run_id, index, step, seed).ok()?;
    for p in inputs {
        if let Some(r) = p.record.as_ref().filter(|r| store.index().exists(r)) {
            draft = draft.input(r);
        }
    }
    draft.evaluate("error", json!(error.code()));
    let mut action: Action = draft.finish(store, Vec::new());
    action.status = ActionStatus::Failed;
    let id = action.id.clone();
    store.append(action.into()).ok().map(|_| id)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepComparison {
    pub index: u64,
    pub op: String,
    pub recorded: Vec<Digest>,
    pub replayed: Vec<Digest>,
    pub matches: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<StepError>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub run_id: Id,
    pub identical: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_divergent_step: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_divergent_op: Option<String>,
    pub steps: Vec<StepComparison>,
}

/// Recomputes every recorded step from the stored inputs with the recorded
/// parameters and seeds, comparing output hashes. Nothing is written.
pub fn replay(store: &Store, run_id: &Id) -> Result<ReplayReport> {
    let run = store.index().run(run_id).cloned().ok_or_else(|| Error::not_found("run", run_id.as_str()))?;
    let pipeline = pipeline_of(store, &run.pipeline_id)?;
    let mut outputs: Vec<Option<Payload>> = Vec::new();
    let mut comparisons = Vec::new();
    for recorded in &run.steps {
        let i = recorded.index as usize;
        let step = pipeline
            .steps
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("run {run_id} has step {i} beyond its pipeline")))?;
        let mut payloads = Vec::new();
        let mut unavailable = false;
        for (b, input) in step.bind.iter().zip(&recorded.inputs) {
            let p = match Binding::parse(b)? {
                Binding::Step(n) => match outputs.get(n).cloned().flatten() {
                    Some(p) => p,
                    None => {
                        unavailable = true;
                        break;
                    }
                },
                Binding::Input(_) | Binding::Release(_) => {
                    let digest = input
                        .hashes
                        .first()
                        .ok_or_else(|| Error::InvalidArgument(format!("step {i} input {b} has no recorded hash")))?;
                    Payload::new(input.kind, read_blob(store, digest)?)
                }
            };
            payloads.push(p);
        }
        let result = if unavailable || payloads.len() < step.bind.len() {
            Err(Error::InvalidArgument(format!("step {i} lost an input")))
        } else {
            ops::compute(&step.op, &step.params, &payloads, recorded.seed)
        };
        let (replayed, error, payload) = match result {
            Ok(out) => (vec![out.payload.hash()], None, Some(out.payload)),
            Err(e) => (Vec::new(), Some(step_error(&e)), None),
        };
        let matches = replayed == recorded.output_hashes
            && (recorded.status == StepStatus::Succeeded) == error.is_none();
        outputs.push(payload);
        comparisons.push(StepComparison {
            index: recorded.index,
            op: recorded.op.clone(),
            recorded: recorded.output_hashes.clone(),
            replayed,
            matches,
            error,
        });
    }
    let first = comparisons.iter().find(|c| !c.matches);
    Ok(ReplayReport {
        run_id: run.id.clone(),
        identical: first.is_none(),
        first_divergent_step: first.map(|c| c.index),
        first_divergent_op: first.map(|c| c.op.clone()),
        steps: comparisons,
    })
}
