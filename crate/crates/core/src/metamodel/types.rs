//! Catalog record types.
//!
//! Level 1 (raw content): [`Dataset`], [`Release`], [`Item`], [`Annotation`],
//! [`Profile`]. Level 2 (experimental specification): [`Action`],
//! [`Artefact`]. Level 3 (experiment context): [`Experiment`], [`Member`].
//! Tagging and review records, pipelines and run records live here too so
//! the store can hold every record kind behind one enum.
//!
//! Artefacts and models are one type; the `structure` descriptor says which.

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::canonical::{Decimal, Digest};
use super::ids::Id;

pub type Timestamp = DateTime<Utc>;
pub type JsonMap = serde_json::Map<String, Value>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hemisphere {
    #[default]
    Northern,
    Southern,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub id: Id,
    pub name: String,
    pub description: String,
    pub domain: String,
    #[serde(default)]
    pub hemisphere: Hemisphere,
    pub created_at: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Provenance {
    External { source: String },
    Derived { action_id: Id },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContentKind {
    Tabular,
    Text,
    Signal,
    MediaManifest,
}

impl ContentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ContentKind::Tabular => "tabular",
            ContentKind::Text => "text",
            ContentKind::Signal => "signal",
            ContentKind::MediaManifest => "media-manifest",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "tabular" => Some(ContentKind::Tabular),
            "text" => Some(ContentKind::Text),
            "signal" => Some(ContentKind::Signal),
            "media-manifest" | "manifest" => Some(ContentKind::MediaManifest),
            _ => None,
        }
    }

    /// Tabular and manifest payloads share the table encoding.
    pub fn is_table(self) -> bool {
        matches!(self, ContentKind::Tabular | ContentKind::MediaManifest)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Release {
    pub id: Id,
    pub dataset_id: Id,
    pub version: u64,
    pub license: String,
    pub size_bytes: u64,
    pub provenance: Provenance,
    pub content_kind: ContentKind,
    pub content_hash: Digest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_id: Option<Id>,
    pub created_at: Timestamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::X => "X",
            Axis::Y => "Y",
            Axis::Z => "Z",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "X" | "x" => Some(Axis::X),
            "Y" | "y" => Some(Axis::Y),
            "Z" | "z" => Some(Axis::Z),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ItemPayload {
    /// Row `ordinal` of a table payload.
    Row,
    Text { body: String },
    Blob { hash: Digest },
    Trace {
        station_id: String,
        channel_id: String,
        axis: Axis,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: Id,
    pub release_id: Id,
    pub ordinal: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_id: Option<String>,
    pub payload: ItemPayload,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationKind {
    Text,
    Media,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: Id,
    pub item_id: Id,
    pub author_id: Id,
    pub kind: AnnotationKind,
    /// Comment text, or a blob digest for media.
    pub body: String,
    pub created_at: Timestamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferredType {
    Boolean,
    Integer,
    Decimal,
    Timestamp,
    Geopoint,
    String,
}

impl InferredType {
    pub fn is_numeric(self) -> bool {
        matches!(self, InferredType::Integer | InferredType::Decimal)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: Decimal,
    pub upper: Decimal,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub name: String,
    pub inferred_type: InferredType,
    pub null_count: u64,
    pub distinct_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<Decimal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<Decimal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Decimal>,
    /// Population standard deviation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stddev: Option<Decimal>,
    #[serde(default)]
    pub histogram: Vec<HistogramBin>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub id: Id,
    pub release_id: Id,
    pub record_count: u64,
    pub columns: Vec<ColumnProfile>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Manual,
    Automated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionStatus {
    Succeeded,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub id: Id,
    pub experiment_id: Id,
    pub kind: ActionKind,
    pub operation: String,
    #[serde(default)]
    pub parameters: JsonMap,
    #[serde(default)]
    pub inputs: Vec<Id>,
    #[serde(default)]
    pub outputs: Vec<Id>,
    pub executor: String,
    #[serde(default)]
    pub evaluation: JsonMap,
    #[serde(default)]
    pub validation_protocol: String,
    pub started_at: Timestamp,
    pub finished_at: Timestamp,
    pub status: ActionStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artefact {
    pub id: Id,
    pub action_id: Id,
    /// Free-form descriptor such as `feature-matrix 546x2` or `bulletin`.
    pub structure: String,
    #[serde(default)]
    pub metrics: BTreeMap<String, Decimal>,
    pub blob_hash: Digest,
}

impl Artefact {
    /// Bulletins and their per-event entries are publish-level targets.
    pub fn is_publish_level(&self) -> bool {
        self.structure.starts_with("bulletin")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Seniority {
    Junior,
    Senior,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub id: Id,
    pub name: String,
    pub role: String,
    pub seniority: Seniority,
    #[serde(default)]
    pub responsibilities: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    #[serde(default)]
    pub selection_criteria: Vec<String>,
    #[serde(default)]
    pub performance_constraints: BTreeMap<String, Decimal>,
    #[serde(default)]
    pub inclusion_rules: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentStatus {
    Draft,
    Active,
    Published,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub id: Id,
    pub name: String,
    pub research_question: String,
    pub date: Timestamp,
    pub team: Vec<Member>,
    #[serde(default)]
    pub settings: ExperimentSettings,
    pub cycle: u32,
    pub status: ExperimentStatus,
}

impl Experiment {
    pub fn member(&self, id: &Id) -> Option<&Member> {
        self.team.iter().find(|m| &m.id == id)
    }

    pub fn has_senior(&self) -> bool {
        self.team.iter().any(|m| m.seniority == Seniority::Senior)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagOrigin {
    Algorithmic,
    User,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tag {
    pub id: Id,
    pub target: Id,
    pub label: String,
    pub origin: TagOrigin,
    /// Member id for user tags, rule-set or model name for algorithmic ones.
    pub author: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<Decimal>,
    pub experiment_id: Id,
    pub created_at: Timestamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accepted => "accepted",
            Verdict::Rejected => "rejected",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "accepted" | "accept" => Some(Verdict::Accepted),
            "rejected" | "reject" => Some(Verdict::Rejected),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub id: Id,
    pub target: Id,
    pub experiment_id: Id,
    pub validator: Id,
    pub verdict: Verdict,
    #[serde(default)]
    pub comment: String,
    pub created_at: Timestamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SizeBucket {
    #[serde(rename = "<1MB")]
    UnderOneMb,
    #[serde(rename = "1-100MB")]
    UpToHundredMb,
    #[serde(rename = ">100MB")]
    OverHundredMb,
}

impl SizeBucket {
    const MB: u64 = 1_000_000;

    pub fn for_size(size_bytes: u64) -> Self {
        if size_bytes < Self::MB {
            SizeBucket::UnderOneMb
        } else if size_bytes <= 100 * Self::MB {
            SizeBucket::UpToHundredMb
        } else {
            SizeBucket::OverHundredMb
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CatalogueKey {
    pub day: NaiveDate,
    pub size_bucket: SizeBucket,
    pub format: ContentKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogueAssignment {
    pub id: Id,
    pub release_id: Id,
    pub catalogue_key: CatalogueKey,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineStep {
    pub op: String,
    #[serde(default)]
    pub params: JsonMap,
    #[serde(default)]
    pub bind: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub id: Id,
    pub steps: Vec<PipelineStep>,
}

/// What a payload flowing between pipeline steps contains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    /// Uninterpreted source bytes (a file).
    Raw,
    Table,
    Signal,
    Text,
    Matrix,
    TagSet,
    ReviewSet,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Succeeded,
    Failed,
    Partial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Succeeded,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInput {
    pub binding: String,
    pub kind: PayloadKind,
    pub hashes: Vec<Digest>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepError {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: u64,
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_id: Option<Id>,
    pub inputs: Vec<BoundInput>,
    pub output_hashes: Vec<Digest>,
    pub seed: u64,
    pub started_at: Timestamp,
    pub finished_at: Timestamp,
    pub wall_clock_us: u64,
    pub status: StepStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<StepError>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: Id,
    pub pipeline_id: Id,
    pub experiment_id: Id,
    /// Material every per-step seed is derived from.
    pub seed_base: String,
    pub steps: Vec<StepRecord>,
    pub status: RunStatus,
    pub started_at: Timestamp,
    pub finished_at: Timestamp,
}

/// Any record the store can hold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum Record {
    Dataset(Dataset),
    Release(Release),
    Item(Item),
    Annotation(Annotation),
    Profile(Profile),
    Catalogue(CatalogueAssignment),
    Action(Action),
    Artefact(Artefact),
    Experiment(Experiment),
    Tag(Tag),
    Validation(ValidationRecord),
    Pipeline(Pipeline),
    Run(RunRecord),
}

impl Record {
    pub fn id(&self) -> &Id {
        match self {
            Record::Dataset(r) => &r.id,
            Record::Release(r) => &r.id,
            Record::Item(r) => &r.id,
            Record::Annotation(r) => &r.id,
            Record::Profile(r) => &r.id,
            Record::Catalogue(r) => &r.id,
            Record::Action(r) => &r.id,
            Record::Artefact(r) => &r.id,
            Record::Experiment(r) => &r.id,
            Record::Tag(r) => &r.id,
            Record::Validation(r) => &r.id,
            Record::Pipeline(r) => &r.id,
            Record::Run(r) => &r.id,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Record::Dataset(_) => "dataset",
            Record::Release(_) => "release",
            Record::Item(_) => "item",
            Record::Annotation(_) => "annotation",
            Record::Profile(_) => "profile",
            Record::Catalogue(_) => "catalogue",
            Record::Action(_) => "action",
            Record::Artefact(_) => "artefact",
            Record::Experiment(_) => "experiment",
            Record::Tag(_) => "tag",
            Record::Validation(_) => "validation",
            Record::Pipeline(_) => "pipeline",
            Record::Run(_) => "run",
        }
    }

    /// Latest timestamp carried by the record, if any.
    pub fn timestamp(&self) -> Option<Timestamp> {
        match self {
            Record::Dataset(r) => Some(r.created_at),
            Record::Release(r) => Some(r.created_at),
            Record::Annotation(r) => Some(r.created_at),
            Record::Action(r) => Some(r.finished_at.max(r.started_at)),
            Record::Experiment(r) => Some(r.date),
            Record::Tag(r) => Some(r.created_at),
            Record::Validation(r) => Some(r.created_at),
            Record::Run(r) => Some(r.finished_at.max(r.started_at)),
            Record::Item(_) | Record::Profile(_) | Record::Catalogue(_) | Record::Artefact(_)
            | Record::Pipeline(_) => None,
        }
    }
}

macro_rules! record_from {
    ($($variant:ident($ty:ty)),* $(,)?) => {
        $(impl From<$ty> for Record {
            fn from(value: $ty) -> Self {
                Record::$variant(value)
            }
        })*
    };
}

record_from!(
    Dataset(Dataset),
    Release(Release),
    Item(Item),
    Annotation(Annotation),
    Profile(Profile),
    Catalogue(CatalogueAssignment),
    Action(Action),
    Artefact(Artefact),
    Experiment(Experiment),
    Tag(Tag),
    Validation(ValidationRecord),
    Pipeline(Pipeline),
    Run(RunRecord),
);
