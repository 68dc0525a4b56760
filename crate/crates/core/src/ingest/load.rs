//! Loading payloads as catalogued releases.

use serde::{Deserialize, Serialize};

use super::profile::profile_release;
use super::signal::SignalBundle;
use super::table::StagedTable;
use crate::error::{Error, Result};
use crate::metamodel::{
    content_hash, is_hex_digest, CatalogueAssignment, Dataset, Hemisphere, CatalogueKey, ContentKind, Digest, Id, Item,
    ItemPayload, Profile, Provenance, Record, Release, SizeBucket, Timestamp,
};
use crate::store::Store;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_id: Option<String>,
    pub body: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextCorpus {
    pub documents: Vec<TextDocument>,
}

/// Content of a release before it is hashed and stored.
#[derive(Clone, Debug, PartialEq)]
pub enum ReleasePayload {
    Table(StagedTable),
    /// Table whose media column holds blob digests.
    Manifest(StagedTable),
    Signal(SignalBundle),
    Text(TextCorpus),
}

impl ReleasePayload {
    pub fn content_kind(&self) -> ContentKind {
        match self {
            ReleasePayload::Table(_) => ContentKind::Tabular,
            ReleasePayload::Manifest(_) => ContentKind::MediaManifest,
            ReleasePayload::Signal(_) => ContentKind::Signal,
            ReleasePayload::Text(_) => ContentKind::Text,
        }
    }

    /// Canonical bytes; these are what the content hash covers.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        match self {
            ReleasePayload::Table(t) | ReleasePayload::Manifest(t) => t.to_bytes(),
            ReleasePayload::Signal(b) => b.to_bytes(),
            ReleasePayload::Text(c) => crate::metamodel::canonical_encode(c),
        }
    }

    pub fn from_bytes(kind: ContentKind, bytes: &[u8]) -> Result<Self> {
        Ok(match kind {
            ContentKind::Tabular => ReleasePayload::Table(StagedTable::from_bytes(bytes)?),
            ContentKind::MediaManifest => ReleasePayload::Manifest(StagedTable::from_bytes(bytes)?),
            ContentKind::Signal => ReleasePayload::Signal(SignalBundle::from_bytes(bytes)?),
            ContentKind::Text => ReleasePayload::Text(serde_json::from_slice(bytes)?),
        })
    }

    pub fn as_table(&self) -> Option<&StagedTable> {
        match self {
            ReleasePayload::Table(t) | ReleasePayload::Manifest(t) => Some(t),
            _ => None,
        }
    }
}

/// Reads the stored payload of a release.
pub fn read_release(store: &Store, release_id: &Id) -> Result<ReleasePayload> {
    let release = store
        .index()
        .releases()
        .find(|r| &r.id == release_id)
        .ok_or_else(|| Error::not_found("release", release_id.as_str()))?;
    let bytes = store.get_blob(&release.content_hash)?;
    ReleasePayload::from_bytes(release.content_kind, &bytes)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Descriptors {
    #[serde(default)]
    pub license: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    /// Column copied to `Item.external_id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_id_column: Option<String>,
    /// Manifest column holding media blob digests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingested_on: Option<Timestamp>,
}

/// Records a load appends, in order, plus the payload bytes.
#[derive(Clone, Debug)]
pub struct PreparedRelease {
    pub release: Release,
    pub profile: Profile,
    pub catalogue: CatalogueAssignment,
    pub items: Vec<Item>,
    pub bytes: Vec<u8>,
}

impl PreparedRelease {
    pub fn records(&self) -> Vec<Record> {
        let mut out = Vec::with_capacity(self.items.len() + 3);
        out.push(self.release.clone().into());
        out.push(self.profile.clone().into());
        out.push(self.catalogue.clone().into());
        out.extend(self.items.iter().cloned().map(Record::from));
        out
    }
}

pub fn catalogue_key(size_bytes: u64, kind: ContentKind, ingested_on: Timestamp) -> CatalogueKey {
    CatalogueKey {
        day: ingested_on.date_naive(),
        size_bucket: SizeBucket::for_size(size_bytes),
        format: kind,
    }
}

/// Builds the release, its profile, catalogue assignment and items without
/// touching a store.
pub fn prepare_release(
    dataset_id: &Id,
    version: u64,
    payload: &ReleasePayload,
    descriptors: &Descriptors,
    ingested_on: Timestamp,
) -> Result<PreparedRelease> {
    let bytes = payload.to_bytes()?;
    let content_hash = content_hash(&bytes);
    let release_id = Id::generate("release");
    let profile = profile_release(payload).into_profile(Id::generate("profile"), release_id.clone());
    let kind = payload.content_kind();
    let provenance = descriptors.provenance.clone().unwrap_or_else(|| Provenance::External {
        source: match payload.as_table() {
            Some(t) if !t.source_uri.is_empty() => t.source_uri.clone(),
            _ => "unspecified".to_string(),
        },
    });
    let release = Release {
        id: release_id.clone(),
        dataset_id: dataset_id.clone(),
        version,
        license: descriptors.license.clone(),
        size_bytes: bytes.len() as u64,
        provenance,
        content_kind: kind,
        content_hash,
        profile_id: Some(profile.id.clone()),
        created_at: ingested_on,
    };
    let catalogue = CatalogueAssignment {
        id: Id::generate("catalogue"),
        release_id: release_id.clone(),
        catalogue_key: catalogue_key(release.size_bytes, kind, ingested_on),
    };
    let items = build_items(&release_id, payload, descriptors)?;
    Ok(PreparedRelease {
        release,
        profile,
        catalogue,
        items,
        bytes,
    })
}

fn build_items(release_id: &Id, payload: &ReleasePayload, descriptors: &Descriptors) -> Result<Vec<Item>> {
    let item = |ordinal: usize, external_id: Option<String>, payload: ItemPayload| Item {
        id: Id::generate("item"),
        release_id: release_id.clone(),
        ordinal: ordinal as u64,
        external_id,
        payload,
    };
    Ok(match payload {
        ReleasePayload::Table(t) | ReleasePayload::Manifest(t) => {
            let ext = descriptors.external_id_column.as_deref().map(|c| t.column(c)).transpose()?;
            let media = match payload {
                ReleasePayload::Manifest(_) => descriptors.media_column.as_deref().map(|c| t.column(c)).transpose()?,
                _ => None,
            };
            t.rows
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let external_id = ext.map(|c| row[c].clone()).filter(|s| !s.trim().is_empty());
                    let body = match media.map(|c| row[c].trim()) {
                        Some(h) if is_hex_digest(h) => ItemPayload::Blob {
                            hash: Digest::parse(h).expect("checked digest"),
                        },
                        _ => ItemPayload::Row,
                    };
                    item(i, external_id, body)
                })
                .collect()
        }
        ReleasePayload::Signal(b) => b
            .traces
            .iter()
            .enumerate()
            .map(|(i, t)| {
                item(
                    i,
                    Some(t.label()),
                    ItemPayload::Trace {
                        station_id: t.station_id.clone(),
                        channel_id: t.channel_id.clone(),
                        axis: t.axis,
                    },
                )
            })
            .collect(),
        ReleasePayload::Text(c) => c
            .documents
            .iter()
            .enumerate()
            .map(|(i, d)| item(i, d.external_id.clone(), ItemPayload::Text { body: d.body.clone() }))
            .collect(),
    })
}

/// Appends a new dataset.
pub fn create_dataset(store: &mut Store, name: &str, domain: &str, description: &str, hemisphere: Hemisphere) -> Result<Dataset> {
    if store.index().datasets().any(|d| d.name == name) {
        return Err(Error::InvalidArgument(format!("dataset {name} already exists")));
    }
    let dataset = Dataset {
        id: Id::generate("dataset"),
        name: name.to_string(),
        description: description.to_string(),
        domain: domain.to_string(),
        hemisphere,
        created_at: store.now(),
    };
    store.append(dataset.clone().into())?;
    Ok(dataset)
}

/// Next free version for a dataset.
pub fn next_version(store: &Store, dataset_id: &Id) -> u64 {
    store.index().releases_of(dataset_id).last().map_or(1, |r| r.version + 1)
}

/// Stores the payload blob and appends release, profile, catalogue
/// assignment and items as one batch. `extra` records (typically the
/// producing action) join the same batch.
pub fn load_release_with(
    store: &mut Store,
    dataset_id: &Id,
    payload: &ReleasePayload,
    descriptors: &Descriptors,
    extra: Vec<Record>,
) -> Result<PreparedRelease> {
    if store.index().datasets().all(|d| &d.id != dataset_id) {
        return Err(Error::not_found("dataset", dataset_id.as_str()));
    }
    let ingested_on = match descriptors.ingested_on {
        Some(t) => t,
        None => store.now(),
    };
    let version = next_version(store, dataset_id);
    let prepared = prepare_release(dataset_id, version, payload, descriptors, ingested_on)?;
    store.put_blob(&prepared.bytes)?;
    let mut records = prepared.records();
    records.extend(extra);
    store.append_batch(records)?;
    Ok(prepared)
}

pub fn load_release(
    store: &mut Store,
    dataset_id: &Id,
    payload: &ReleasePayload,
    descriptors: &Descriptors,
) -> Result<Release> {
    Ok(load_release_with(store, dataset_id, payload, descriptors, Vec::new())?.release)
}
