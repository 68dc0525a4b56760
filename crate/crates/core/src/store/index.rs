//! In-memory index: a fold over every ledger, rebuildable at any time.

use std::collections::{BTreeMap, HashMap};

use indexmap::IndexMap;
use serde::Serialize;

use crate::metamodel::validate::Catalog;
use crate::metamodel::*;

/// An entry of a target's tag/review history.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "record", rename_all = "snake_case")]
pub enum HistoryEntry {
    Tag(Tag),
    Validation(ValidationRecord),
}

impl HistoryEntry {
    pub fn created_at(&self) -> Timestamp {
        match self {
            HistoryEntry::Tag(t) => t.created_at,
            HistoryEntry::Validation(v) => v.created_at,
        }
    }
}

/// Latest record per id, per kind, plus lookup tables derived from them.
/// Later records with the same id supersede earlier ones.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Index {
    datasets: IndexMap<Id, Dataset>,
    releases: IndexMap<Id, Release>,
    items: IndexMap<Id, Item>,
    annotations: IndexMap<Id, Annotation>,
    profiles: IndexMap<Id, Profile>,
    catalogue: IndexMap<Id, CatalogueAssignment>,
    actions: IndexMap<Id, Action>,
    artefacts: IndexMap<Id, Artefact>,
    experiments: IndexMap<Id, Experiment>,
    tags: IndexMap<Id, Tag>,
    validations: IndexMap<Id, ValidationRecord>,
    pipelines: IndexMap<Id, Pipeline>,
    runs: IndexMap<Id, RunRecord>,

    members: HashMap<Id, Member>,
    max_versions: HashMap<Id, u64>,
    item_slots: HashMap<Id, BTreeMap<u64, Id>>,
    catalogue_by_release: HashMap<Id, Id>,
    profile_by_release: HashMap<Id, Id>,
    tags_by_target: HashMap<Id, Vec<Id>>,
    validations_by_target: HashMap<Id, Vec<Id>>,
}

impl Index {
    pub fn apply(&mut self, record: Record) {
        match record {
            Record::Dataset(r) => {
                self.datasets.insert(r.id.clone(), r);
            }
            Record::Release(r) => {
                let max = self.max_versions.entry(r.dataset_id.clone()).or_insert(0);
                *max = (*max).max(r.version);
                self.releases.insert(r.id.clone(), r);
            }
            Record::Item(r) => {
                if let Some(old) = self.items.get(&r.id) {
                    if let Some(slots) = self.item_slots.get_mut(&old.release_id) {
                        slots.remove(&old.ordinal);
                    }
                }
                self.item_slots
                    .entry(r.release_id.clone())
                    .or_default()
                    .insert(r.ordinal, r.id.clone());
                self.items.insert(r.id.clone(), r);
            }
            Record::Annotation(r) => {
                self.annotations.insert(r.id.clone(), r);
            }
            Record::Profile(r) => {
                self.profile_by_release.insert(r.release_id.clone(), r.id.clone());
                self.profiles.insert(r.id.clone(), r);
            }
            Record::Catalogue(r) => {
                self.catalogue_by_release.insert(r.release_id.clone(), r.id.clone());
                self.catalogue.insert(r.id.clone(), r);
            }
            Record::Action(r) => {
                self.actions.insert(r.id.clone(), r);
            }
            Record::Artefact(r) => {
                self.artefacts.insert(r.id.clone(), r);
            }
            Record::Experiment(r) => {
                for m in &r.team {
                    self.members.insert(m.id.clone(), m.clone());
                }
                self.experiments.insert(r.id.clone(), r);
            }
            Record::Tag(r) => {
                if !self.tags.contains_key(&r.id) {
                    self.tags_by_target.entry(r.target.clone()).or_default().push(r.id.clone());
                }
                self.tags.insert(r.id.clone(), r);
            }
            Record::Validation(r) => {
                if !self.validations.contains_key(&r.id) {
                    self.validations_by_target
                        .entry(r.target.clone())
                        .or_default()
                        .push(r.id.clone());
                }
                self.validations.insert(r.id.clone(), r);
            }
            Record::Pipeline(r) => {
                self.pipelines.insert(r.id.clone(), r);
            }
            Record::Run(r) => {
                self.runs.insert(r.id.clone(), r);
            }
        }
    }

    /// Drops a record from the cache only; ledgers are untouched. Used to
    /// model index damage and by repair tooling.
    pub fn remove(&mut self, id: &Id) -> bool {
        match id.kind() {
            "dataset" => self.datasets.shift_remove(id).is_some(),
            "release" => self.releases.shift_remove(id).is_some(),
            "item" => match self.items.shift_remove(id) {
                Some(item) => {
                    if let Some(slots) = self.item_slots.get_mut(&item.release_id) {
                        slots.remove(&item.ordinal);
                    }
                    true
                }
                None => false,
            },
            "annotation" => self.annotations.shift_remove(id).is_some(),
            "action" => self.actions.shift_remove(id).is_some(),
            "artefact" => self.artefacts.shift_remove(id).is_some(),
            "experiment" => self.experiments.shift_remove(id).is_some(),
            "tag" => self.tags.shift_remove(id).is_some(),
            "validation" => self.validations.shift_remove(id).is_some(),
            "pipeline" => self.pipelines.shift_remove(id).is_some(),
            "run" => self.runs.shift_remove(id).is_some(),
            _ => false,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of distinct records.
    pub fn len(&self) -> usize {
        self.datasets.len()
            + self.releases.len()
            + self.items.len()
            + self.annotations.len()
            + self.profiles.len()
            + self.catalogue.len()
            + self.actions.len()
            + self.artefacts.len()
            + self.experiments.len()
            + self.tags.len()
            + self.validations.len()
            + self.pipelines.len()
            + self.runs.len()
    }

    pub fn datasets(&self) -> impl Iterator<Item = &Dataset> {
        self.datasets.values()
    }
    pub fn releases(&self) -> impl Iterator<Item = &Release> {
        self.releases.values()
    }
    pub fn items(&self) -> impl Iterator<Item = &Item> {
        self.items.values()
    }
    pub fn annotations(&self) -> impl Iterator<Item = &Annotation> {
        self.annotations.values()
    }
    pub fn profiles(&self) -> impl Iterator<Item = &Profile> {
        self.profiles.values()
    }
    pub fn catalogue_assignments(&self) -> impl Iterator<Item = &CatalogueAssignment> {
        self.catalogue.values()
    }
    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.actions.values()
    }
    pub fn artefacts(&self) -> impl Iterator<Item = &Artefact> {
        self.artefacts.values()
    }
    pub fn experiments(&self) -> impl Iterator<Item = &Experiment> {
        self.experiments.values()
    }
    pub fn tags(&self) -> impl Iterator<Item = &Tag> {
        self.tags.values()
    }
    pub fn validations(&self) -> impl Iterator<Item = &ValidationRecord> {
        self.validations.values()
    }
    pub fn pipelines(&self) -> impl Iterator<Item = &Pipeline> {
        self.pipelines.values()
    }
    pub fn runs(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.values()
    }

    pub fn profile(&self, id: &Id) -> Option<&Profile> {
        self.profiles.get(id)
    }

    pub fn profile_of(&self, release: &Id) -> Option<&Profile> {
        self.profile_by_release.get(release).and_then(|id| self.profiles.get(id))
    }

    pub fn catalogue_assignment(&self, release: &Id) -> Option<&CatalogueAssignment> {
        self.catalogue_by_release.get(release).and_then(|id| self.catalogue.get(id))
    }

    pub fn run(&self, id: &Id) -> Option<&RunRecord> {
        self.runs.get(id)
    }

    pub fn annotation(&self, id: &Id) -> Option<&Annotation> {
        self.annotations.get(id)
    }

    /// Items of a release in ordinal order.
    pub fn items_of(&self, release: &Id) -> Vec<&Item> {
        self.item_slots
            .get(release)
            .map(|slots| slots.values().filter_map(|id| self.items.get(id)).collect())
            .unwrap_or_default()
    }

    /// Releases of a dataset in version order.
    pub fn releases_of(&self, dataset: &Id) -> Vec<&Release> {
        let mut out: Vec<&Release> = self.releases.values().filter(|r| &r.dataset_id == dataset).collect();
        out.sort_by_key(|r| r.version);
        out
    }

    pub fn tags_of(&self, target: &Id) -> Vec<&Tag> {
        self.tags_by_target
            .get(target)
            .map(|ids| ids.iter().filter_map(|id| self.tags.get(id)).collect())
            .unwrap_or_default()
    }

    pub fn validations_of(&self, target: &Id) -> Vec<&ValidationRecord> {
        self.validations_by_target
            .get(target)
            .map(|ids| ids.iter().filter_map(|id| self.validations.get(id)).collect())
            .unwrap_or_default()
    }

    /// Tags and validations of a target in append order. The store clock
    /// issues strictly increasing timestamps, so creation time is a total
    /// order across the two ledgers.
    pub fn history(&self, target: &Id) -> Vec<HistoryEntry> {
        let mut out: Vec<HistoryEntry> = self
            .tags_of(target)
            .into_iter()
            .cloned()
            .map(HistoryEntry::Tag)
            .chain(self.validations_of(target).into_iter().cloned().map(HistoryEntry::Validation))
            .collect();
        out.sort_by_key(HistoryEntry::created_at);
        out
    }

    /// Action that lists `record` among its outputs.
    pub fn producers_of(&self, record: &Id) -> Vec<&Action> {
        self.actions.values().filter(|a| a.outputs.contains(record)).collect()
    }

    /// Latest timestamp of any record, for seeding the store clock.
    pub(crate) fn latest_timestamp(&self) -> Option<Timestamp> {
        let stamps = self
            .datasets
            .values()
            .map(|r| r.created_at)
            .chain(self.releases.values().map(|r| r.created_at))
            .chain(self.annotations.values().map(|r| r.created_at))
            .chain(self.actions.values().map(|r| r.finished_at.max(r.started_at)))
            .chain(self.experiments.values().map(|r| r.date))
            .chain(self.tags.values().map(|r| r.created_at))
            .chain(self.validations.values().map(|r| r.created_at))
            .chain(self.runs.values().map(|r| r.finished_at.max(r.started_at)));
        stamps.max()
    }
}

impl Catalog for Index {
    fn dataset(&self, id: &Id) -> Option<&Dataset> {
        self.datasets.get(id)
    }
    fn release(&self, id: &Id) -> Option<&Release> {
        self.releases.get(id)
    }
    fn item(&self, id: &Id) -> Option<&Item> {
        self.items.get(id)
    }
    fn action(&self, id: &Id) -> Option<&Action> {
        self.actions.get(id)
    }
    fn artefact(&self, id: &Id) -> Option<&Artefact> {
        self.artefacts.get(id)
    }
    fn experiment(&self, id: &Id) -> Option<&Experiment> {
        self.experiments.get(id)
    }
    fn tag(&self, id: &Id) -> Option<&Tag> {
        self.tags.get(id)
    }
    fn validation(&self, id: &Id) -> Option<&ValidationRecord> {
        self.validations.get(id)
    }
    fn pipeline(&self, id: &Id) -> Option<&Pipeline> {
        self.pipelines.get(id)
    }
    fn member(&self, id: &Id) -> Option<&Member> {
        self.members.get(id)
    }
    fn max_version(&self, dataset: &Id) -> Option<u64> {
        self.max_versions.get(dataset).copied()
    }
    fn item_at(&self, release: &Id, ordinal: u64) -> Option<&Id> {
        self.item_slots.get(release).and_then(|s| s.get(&ordinal))
    }
    fn catalogue_of(&self, release: &Id) -> Option<&Id> {
        self.catalogue_by_release.get(release)
    }
}

/// A base index seen through a batch of not-yet-committed records.
/// Ids anywhere in the batch count as existing, so a record may reference
/// one appended later in the same batch.
pub(crate) struct Overlay<'a> {
    pub base: &'a Index,
    pub pending: &'a Index,
    pub batch_ids: &'a std::collections::HashSet<Id>,
}

macro_rules! overlay_get {
    ($($name:ident -> $ty:ty),* $(,)?) => {
        $(fn $name(&self, id: &Id) -> Option<&$ty> {
            self.pending.$name(id).or_else(|| self.base.$name(id))
        })*
    };
}

impl Catalog for Overlay<'_> {
    overlay_get!(
        dataset -> Dataset,
        release -> Release,
        item -> Item,
        action -> Action,
        artefact -> Artefact,
        experiment -> Experiment,
        tag -> Tag,
        validation -> ValidationRecord,
        pipeline -> Pipeline,
        member -> Member,
    );

    fn max_version(&self, dataset: &Id) -> Option<u64> {
        match (self.base.max_version(dataset), self.pending.max_version(dataset)) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }

    fn item_at(&self, release: &Id, ordinal: u64) -> Option<&Id> {
        self.pending
            .item_at(release, ordinal)
            .or_else(|| self.base.item_at(release, ordinal))
    }

    fn catalogue_of(&self, release: &Id) -> Option<&Id> {
        self.pending
            .catalogue_of(release)
            .or_else(|| self.base.catalogue_of(release))
    }

    fn exists(&self, id: &Id) -> bool {
        self.batch_ids.contains(id) || exists_in(self.pending, id) || exists_in(self.base, id)
    }
}

fn exists_in(index: &Index, id: &Id) -> bool {
    Catalog::exists(index, id)
}
