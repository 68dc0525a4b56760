//! Invariant checks for catalog records.
//!
//! Violations are data: a record either yields an empty report or a list
//! naming the offending field and the broken rule.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::canonical::is_hex_digest;
use super::ids::Id;
use super::types::*;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: &str, rule: impl Into<String>) -> Self {
        Violation {
            field: field.to_string(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Read access to the records a validation rule may consult.
pub trait Catalog {
    fn dataset(&self, id: &Id) -> Option<&Dataset>;
    fn release(&self, id: &Id) -> Option<&Release>;
    fn item(&self, id: &Id) -> Option<&Item>;
    fn action(&self, id: &Id) -> Option<&Action>;
    fn artefact(&self, id: &Id) -> Option<&Artefact>;
    fn experiment(&self, id: &Id) -> Option<&Experiment>;
    fn tag(&self, id: &Id) -> Option<&Tag>;
    fn validation(&self, id: &Id) -> Option<&ValidationRecord>;
    fn pipeline(&self, id: &Id) -> Option<&Pipeline>;
    fn member(&self, id: &Id) -> Option<&Member>;
    /// Highest release version recorded for a dataset.
    fn max_version(&self, dataset: &Id) -> Option<u64>;
    /// Item occupying `(release, ordinal)`.
    fn item_at(&self, release: &Id, ordinal: u64) -> Option<&Id>;
    /// Catalogue assignment already recorded for a release.
    fn catalogue_of(&self, release: &Id) -> Option<&Id>;

    /// Whether a record with this id exists, dispatching on the id's kind.
    fn exists(&self, id: &Id) -> bool {
        match id.kind() {
            "dataset" => self.dataset(id).is_some(),
            "release" => self.release(id).is_some(),
            "item" => self.item(id).is_some(),
            "action" => self.action(id).is_some(),
            "artefact" => self.artefact(id).is_some(),
            "experiment" => self.experiment(id).is_some(),
            "tag" => self.tag(id).is_some(),
            "validation" => self.validation(id).is_some(),
            "pipeline" => self.pipeline(id).is_some(),
            "member" => self.member(id).is_some(),
            _ => false,
        }
    }

    /// Experiments and bulletin artefacts need a senior validator.
    fn is_publish_level(&self, target: &Id) -> bool {
        match target.kind() {
            "experiment" => true,
            "artefact" => self.artefact(target).is_some_and(Artefact::is_publish_level),
            _ => false,
        }
    }
}

/// Checks every invariant of `record` against `catalog`.
pub fn validate_entity(record: &Record, catalog: &dyn Catalog) -> Vec<Violation> {
    let mut out = Vec::new();
    let expected_kind = match record {
        Record::Catalogue(_) => "catalogue",
        other => other.kind(),
    };
    if record.id().kind() != expected_kind {
        out.push(Violation::new("id", format!("id must start with {expected_kind}-")));
    }
    match record {
        Record::Dataset(d) => {
            if d.name.trim().is_empty() {
                out.push(Violation::new("name", "name must be non-empty"));
            }
        }
        Record::Release(r) => check_release(r, catalog, &mut out),
        Record::Item(item) => {
            if catalog.release(&item.release_id).is_none() {
                out.push(Violation::new("release_id", "missing parent release"));
            }
            if let Some(other) = catalog.item_at(&item.release_id, item.ordinal) {
                if other != &item.id {
                    out.push(Violation::new("ordinal", "(release_id, ordinal) already taken"));
                }
            }
        }
        Record::Annotation(a) => {
            if catalog.item(&a.item_id).is_none() {
                out.push(Violation::new("item_id", "missing annotated item"));
            }
            if catalog.member(&a.author_id).is_none() {
                out.push(Violation::new("author_id", "unknown author"));
            }
            if a.body.trim().is_empty() {
                out.push(Violation::new("body", "body must be non-empty"));
            }
            if a.kind == AnnotationKind::Media && !is_hex_digest(&a.body) {
                out.push(Violation::new("body", "media annotation body must be a blob digest"));
            }
        }
        Record::Profile(p) => check_profile(p, catalog, &mut out),
        Record::Catalogue(c) => {
            if catalog.release(&c.release_id).is_none() {
                out.push(Violation::new("release_id", "missing catalogued release"));
            }
            if let Some(existing) = catalog.catalogue_of(&c.release_id) {
                if existing != &c.id {
                    out.push(Violation::new("release_id", "release already assigned to a catalogue"));
                }
            }
        }
        Record::Action(a) => check_action(a, catalog, &mut out),
        Record::Artefact(a) => {
            if catalog.action(&a.action_id).is_none() {
                out.push(Violation::new("action_id", "missing producing action"));
            }
            if a.structure.trim().is_empty() {
                out.push(Violation::new("structure", "structure must be non-empty"));
            }
        }
        Record::Experiment(e) => check_experiment(e, catalog, &mut out),
        Record::Tag(t) => check_tag(t, catalog, &mut out),
        Record::Validation(v) => {
            if !catalog.exists(&v.target) {
                out.push(Violation::new("target", "missing validation target"));
            }
            match catalog.experiment(&v.experiment_id) {
                None => out.push(Violation::new("experiment_id", "missing experiment")),
                Some(exp) => match exp.member(&v.validator) {
                    None => out.push(Violation::new("validator", "validator is not a team member")),
                    Some(m) => {
                        if catalog.is_publish_level(&v.target) && m.seniority != Seniority::Senior {
                            out.push(Violation::new(
                                "validator",
                                "publish-level verdicts require a senior validator",
                            ));
                        }
                    }
                },
            }
        }
        Record::Pipeline(p) => {
            for (i, step) in p.steps.iter().enumerate() {
                for b in &step.bind {
                    if let Some(n) = step_reference(b) {
                        if n >= i {
                            out.push(Violation::new(
                                "steps",
                                format!("step {i} binds {b}, which is not an earlier step"),
                            ));
                        }
                    }
                }
            }
        }
        Record::Run(r) => {
            if catalog.pipeline(&r.pipeline_id).is_none() {
                out.push(Violation::new("pipeline_id", "missing pipeline"));
            }
            if catalog.experiment(&r.experiment_id).is_none() {
                out.push(Violation::new("experiment_id", "missing experiment"));
            }
            if r.finished_at < r.started_at {
                out.push(Violation::new("finished_at", "finished_at precedes started_at"));
            }
            for (i, step) in r.steps.iter().enumerate() {
                if step.index != i as u64 {
                    out.push(Violation::new("steps", "step order must match the pipeline"));
                }
            }
        }
    }
    out
}

/// `$N` or `$N.k` bindings refer to step `N`.
pub fn step_reference(binding: &str) -> Option<usize> {
    let rest = binding.strip_prefix('$')?;
    let head = rest.split('.').next()?;
    head.parse().ok()
}

fn check_release(r: &Release, catalog: &dyn Catalog, out: &mut Vec<Violation>) {
    if catalog.dataset(&r.dataset_id).is_none() {
        out.push(Violation::new("dataset_id", "missing parent dataset"));
    }
    if !is_hex_digest(r.content_hash.as_str()) {
        out.push(Violation::new("content_hash", "content_hash must be 64 lowercase hex"));
    }
    if r.version == 0 {
        out.push(Violation::new("version", "version starts at 1"));
    }
    let is_update = catalog.release(&r.id).is_some();
    if !is_update {
        if let Some(max) = catalog.max_version(&r.dataset_id) {
            if r.version <= max {
                out.push(Violation::new("version", format!("version must exceed {max}")));
            }
        }
    }
    if let Provenance::Derived { action_id } = &r.provenance {
        if action_id.kind() != "action" || !catalog.exists(action_id) {
            out.push(Violation::new("provenance", "missing producing action"));
        }
    }
}

fn check_profile(p: &Profile, catalog: &dyn Catalog, out: &mut Vec<Violation>) {
    if catalog.release(&p.release_id).is_none() {
        out.push(Violation::new("release_id", "missing profiled release"));
    }
    for c in &p.columns {
        if c.null_count > p.record_count {
            out.push(Violation::new("columns", format!("{}: null_count exceeds record_count", c.name)));
        }
        if c.inferred_type.is_numeric() && !c.histogram.is_empty() {
            let total: u64 = c.histogram.iter().map(|b| b.count).sum();
            if total != p.record_count - c.null_count.min(p.record_count) {
                out.push(Violation::new(
                    "columns",
                    format!("{}: histogram counts must sum to the non-null count", c.name),
                ));
            }
        }
    }
}

fn check_action(a: &Action, catalog: &dyn Catalog, out: &mut Vec<Violation>) {
    if catalog.experiment(&a.experiment_id).is_none() {
        out.push(Violation::new("experiment_id", "missing experiment"));
    }
    if a.operation.trim().is_empty() {
        out.push(Violation::new("operation", "operation must be named"));
    }
    for input in &a.inputs {
        if !catalog.exists(input) {
            out.push(Violation::new("inputs", format!("missing input {input}")));
        }
    }
    for output in &a.outputs {
        if !catalog.exists(output) {
            out.push(Violation::new("outputs", format!("missing output {output}")));
        }
    }
    if a.finished_at < a.started_at {
        out.push(Violation::new("finished_at", "finished_at precedes started_at"));
    }
}

fn check_experiment(e: &Experiment, catalog: &dyn Catalog, out: &mut Vec<Violation>) {
    if e.name.trim().is_empty() {
        out.push(Violation::new("name", "name must be non-empty"));
    }
    if e.research_question.trim().is_empty() {
        out.push(Violation::new("research_question", "research question must be non-empty"));
    }
    if e.cycle == 0 {
        out.push(Violation::new("cycle", "cycle starts at 1"));
    }
    if e.status == ExperimentStatus::Published && !e.has_senior() {
        out.push(Violation::new("status", "publishing requires a senior member"));
    }
    if let Some(previous) = catalog.experiment(&e.id) {
        if e.cycle < previous.cycle {
            out.push(Violation::new("cycle", "cycle only moves forward"));
        }
    }
    for m in &e.team {
        if m.id.kind() != "member" {
            out.push(Violation::new("team", format!("{} is not a member id", m.id)));
        }
    }
}

fn check_tag(t: &Tag, catalog: &dyn Catalog, out: &mut Vec<Violation>) {
    if t.label.trim().is_empty() {
        out.push(Violation::new("label", "label must be non-empty"));
    }
    match (t.origin, t.confidence) {
        (TagOrigin::Algorithmic, None) => {
            out.push(Violation::new("confidence", "algorithmic tags carry a confidence"))
        }
        (TagOrigin::User, Some(_)) => {
            out.push(Violation::new("confidence", "user tags carry no confidence"))
        }
        (_, Some(c)) if !(0.0..=1.0).contains(&c.get()) => {
            out.push(Violation::new("confidence", "confidence outside [0,1]"))
        }
        _ => {}
    }
    if !catalog.exists(&t.target) {
        out.push(Violation::new("target", "missing tag target"));
    }
    if catalog.experiment(&t.experiment_id).is_none() {
        out.push(Violation::new("experiment_id", "missing experiment"));
    }
}
