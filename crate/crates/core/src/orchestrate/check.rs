//! Store-wide consistency check.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metamodel::{
    AnnotationKind, Catalog, Digest, Id, ItemPayload, LineageGraph, Provenance,
};
use crate::store::Store;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    DanglingReference,
    MissingBlob,
    CorruptBlob,
    OrphanBlob,
    LineageCycle,
    VersionGap,
    MissingProducer,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub subject: String,
    pub detail: String,
}

/// Violations break an invariant; warnings (orphan blobs) do not.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub violations: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ConsistencyReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty() && self.warnings.is_empty()
    }

    fn violation(&mut self, kind: FindingKind, subject: impl ToString, detail: impl Into<String>) {
        self.violations.push(Finding { kind, subject: subject.to_string(), detail: detail.into() });
    }
}

pub fn consistency_check(store: &Store) -> Result<ConsistencyReport> {
    let index = store.index();
    let mut report = ConsistencyReport::default();
    let dangling = |report: &mut ConsistencyReport, from: &Id, field: &str, to: &Id| {
        if !index.exists(to) {
            report.violation(FindingKind::DanglingReference, from, format!("{field} -> {to}"));
        }
    };

    for r in index.releases() {
        dangling(&mut report, &r.id, "dataset_id", &r.dataset_id);
        if let Provenance::Derived { action_id } = &r.provenance {
            dangling(&mut report, &r.id, "provenance.action_id", action_id);
        }
    }
    for item in index.items() {
        dangling(&mut report, &item.id, "release_id", &item.release_id);
    }
    for a in index.annotations() {
        dangling(&mut report, &a.id, "item_id", &a.item_id);
    }
    for p in index.profiles() {
        dangling(&mut report, &p.id, "release_id", &p.release_id);
    }
    for c in index.catalogue_assignments() {
        dangling(&mut report, &c.id, "release_id", &c.release_id);
    }
    for a in index.actions() {
        dangling(&mut report, &a.id, "experiment_id", &a.experiment_id);
        for i in &a.inputs {
            dangling(&mut report, &a.id, "inputs", i);
        }
        for o in &a.outputs {
            dangling(&mut report, &a.id, "outputs", o);
        }
    }
    for a in index.artefacts() {
        dangling(&mut report, &a.id, "action_id", &a.action_id);
    }
    for t in index.tags() {
        dangling(&mut report, &t.id, "target", &t.target);
        dangling(&mut report, &t.id, "experiment_id", &t.experiment_id);
    }
    for v in index.validations() {
        dangling(&mut report, &v.id, "target", &v.target);
        dangling(&mut report, &v.id, "experiment_id", &v.experiment_id);
    }
    for r in index.runs() {
        dangling(&mut report, &r.id, "pipeline_id", &r.pipeline_id);
        dangling(&mut report, &r.id, "experiment_id", &r.experiment_id);
        for s in &r.steps {
            if let Some(a) = &s.action_id {
                dangling(&mut report, &r.id, "steps.action_id", a);
            }
        }
    }

    // Every digest a record points at, with the first record naming it.
    let mut referenced: BTreeMap<Digest, Id> = BTreeMap::new();
    for r in index.releases() {
        referenced.entry(r.content_hash.clone()).or_insert_with(|| r.id.clone());
    }
    for a in index.artefacts() {
        referenced.entry(a.blob_hash.clone()).or_insert_with(|| a.id.clone());
    }
    for item in index.items() {
        if let ItemPayload::Blob { hash } = &item.payload {
            referenced.entry(hash.clone()).or_insert_with(|| item.id.clone());
        }
    }
    for a in index.annotations() {
        if a.kind == AnnotationKind::Media {
            if let Ok(d) = Digest::parse(&a.body) {
                referenced.entry(d).or_insert_with(|| a.id.clone());
            }
        }
    }
    for r in index.runs() {
        for s in &r.steps {
            for d in s.inputs.iter().flat_map(|i| &i.hashes).chain(&s.output_hashes) {
                referenced.entry(d.clone()).or_insert_with(|| r.id.clone());
            }
        }
    }
    let present: BTreeSet<Digest> = store.blobs().list()?.into_iter().collect();
    for (digest, owner) in &referenced {
        if !present.contains(digest) {
            report.violation(FindingKind::MissingBlob, owner, digest.to_string());
        } else if !store.blobs().verify(digest)? {
            report.violation(FindingKind::CorruptBlob, owner, digest.to_string());
        }
    }
    for digest in present.iter().filter(|d| !referenced.contains_key(*d)) {
        report.warnings.push(Finding {
            kind: FindingKind::OrphanBlob,
            subject: digest.to_string(),
            detail: "no record references this blob".into(),
        });
    }

    let graph = LineageGraph::build_unchecked(index.releases(), index.actions(), index.artefacts());
    if let Some(cycle) = graph.find_cycle() {
        let walk: Vec<String> = cycle.iter().map(Id::to_string).collect();
        report.violation(FindingKind::LineageCycle, &cycle[0], walk.join(" -> "));
    }

    for d in index.datasets() {
        let versions: Vec<u64> = index.releases_of(&d.id).iter().map(|r| r.version).collect();
        for (i, v) in versions.iter().enumerate() {
            if *v != i as u64 + 1 {
                report.violation(FindingKind::VersionGap, &d.id, format!("expected version {}, found {v}", i + 1));
                break;
            }
        }
    }

    for r in index.releases() {
        if let Provenance::Derived { action_id } = &r.provenance {
            let produced = index.action(action_id).is_some_and(|a| a.outputs.contains(&r.id));
            if !produced {
                report.violation(FindingKind::MissingProducer, &r.id, format!("action {action_id} does not list it as an output"));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{load_release, Descriptors, ReleasePayload, StagedTable};
    use crate::metamodel::{Dataset, Hemisphere};

    fn store() -> (tempfile::TempDir, Store) {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::init(dir.path().join("s")).unwrap();
        let created_at = store.now();
        let ds = Dataset {
            id: Id::new("dataset-a"),
            name: "a".into(),
            description: String::new(),
            domain: "test".into(),
            hemisphere: Hemisphere::Northern,
            created_at,
        };
        store.append(ds.into()).unwrap();
        let table = StagedTable::new(vec!["x".into()], vec![vec!["1".into()]]);
        load_release(&mut store, &Id::new("dataset-a"), &ReleasePayload::Table(table), &Descriptors::default()).unwrap();
        (dir, store)
    }

    #[test]
    fn fresh_store_is_clean() {
        let (_d, store) = store();
        let report = consistency_check(&store).unwrap();
        assert!(report.is_empty(), "{report:?}");
    }

    #[test]
    fn orphan_blob_is_a_warning() {
        let (_d, store) = store();
        store.put_blob(b"stray").unwrap();
        let report = consistency_check(&store).unwrap();
        assert!(report.is_clean());
        assert_eq!(report.warnings.len(), 1);
        assert_eq!(report.warnings[0].kind, FindingKind::OrphanBlob);
    }

    #[test]
    fn removed_item_leaves_dangling_profile_free_report_but_missing_release_blob_flags() {
        let (_d, mut store) = store();
        let release = store.index().releases().next().unwrap().clone();
        std::fs::remove_file(store.blobs().path_of(&release.content_hash)).unwrap();
        let report = consistency_check(&store).unwrap();
        assert!(report.violations.iter().any(|f| f.kind == FindingKind::MissingBlob));
        store.index_mut().remove(&release.id);
        let report = consistency_check(&store).unwrap();
        assert!(report
            .violations
            .iter()
            .any(|f| f.kind == FindingKind::DanglingReference && f.detail.contains(release.id.as_str())));
    }
}
