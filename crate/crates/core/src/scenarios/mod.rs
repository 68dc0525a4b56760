//! Bundled use cases: deterministic source files, pipelines and teams for
//! the jellyfish sightings, seismic bulletin and graffiti survey
//! experiments, and a builder for a store holding all three.

use std::collections::BTreeMap;

use chrono::{Duration, SecondsFormat, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::analytics::bulletin::{compile_bulletin, Bulletin, PICK_COLUMNS};
use crate::curate::{create_experiment, ExperimentSpec, MemberSpec};
use crate::error::Result;
use crate::ingest::{create_dataset, write_signal, SignalTrace, StagedTable};
use crate::metamodel::{Axis, Hemisphere, Id, PipelineStep, RunRecord, Seniority, Timestamp};
use crate::orchestrate::{define_pipeline, run_pipeline, PipelineSpec, RunOptions};
use crate::store::Store;

pub const GRAFFITI_ITEMS: usize = 1050;
pub const GRAFFITI_ACCEPTED: usize = 546;
pub const SEISMIC_EVENTS: usize = 10;
pub const SEISMIC_AGREEING: usize = 9;
pub const TRACE_SAMPLES: usize = 8000;
pub const TRACE_RATE_HZ: f64 = 100.0;
pub const BURST_SAMPLE: usize = 5000;
pub const ML_LOW_CONFIDENCE: f64 = 0.6;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub name: String,
    pub domain: String,
    pub description: String,
    pub hemisphere: Hemisphere,
}

/// Everything needed to run one use case from scratch.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: &'static str,
    pub datasets: Vec<DatasetSpec>,
    pub experiment: ExperimentSpec,
    pub pipeline: PipelineSpec,
    pub inputs: BTreeMap<String, Vec<u8>>,
}

/// Outcome of running a scenario against a store.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub name: &'static str,
    pub experiment_id: Id,
    pub pipeline_id: Id,
    pub run: RunRecord,
}

fn dataset(name: &str, domain: &str, description: &str, hemisphere: Hemisphere) -> DatasetSpec {
    DatasetSpec {
        name: name.into(),
        domain: domain.into(),
        description: description.into(),
        hemisphere,
    }
}

fn member(id: &str, name: &str, role: &str, seniority: Seniority) -> MemberSpec {
    MemberSpec {
        id: Some(Id::new(id)),
        ..MemberSpec::new(name, role, seniority)
    }
}

fn step(op: &str, bind: &[&str], params: serde_json::Value) -> PipelineStep {
    let serde_json::Value::Object(params) = params else {
        panic!("step parameters must be an object");
    };
    PipelineStep {
        op: op.into(),
        params,
        bind: bind.iter().map(|b| b.to_string()).collect(),
    }
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let table = StagedTable::new(header.iter().map(|h| h.to_string()).collect(), rows.to_vec());
    table.to_csv().expect("in-memory csv")
}

fn at(y: i32, m: u32, d: u32) -> Timestamp {
    Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).single().expect("valid date")
}

fn rfc3339(t: Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::Micros, true)
}

// Jellyfish sightings ------------------------------------------------------

pub const JELLYFISH_POSTS: usize = 40;
pub const JELLYFISH_DUPLICATES: usize = 3;
const SPECIES: [(&str, &str); 3] = [
    ("physalia", "Portuguese man o' war stranded on the beach"),
    ("chrysaora", "sea nettle with long orange tentacles"),
    ("aurelia", "moon jelly bloom near the pier"),
];
const PLACES: [&str; 6] = ["Caravelas", "Prado", "Porto Seguro", "Ilheus", "Salvador", "-17.70,-39.25"];
const WHEN: [&str; 5] = ["last summer", "yesterday", "3 days ago", "last week", "this month"];
const SOURCES: [&str; 4] = ["instagram", "inaturalist", "facebook", "news"];

/// Classifier confidence of post `i`: the last five fall below 0.6, three
/// sit in [0.6, 0.8), the rest in [0.8, 1.0).
pub fn jellyfish_confidence(i: usize, rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    let raw = if i >= JELLYFISH_POSTS - 5 {
        0.30 + 0.25 * u
    } else if i >= JELLYFISH_POSTS - 8 {
        0.62 + 0.15 * u
    } else {
        0.81 + 0.18 * u
    };
    (raw * 1000.0).round() / 1000.0
}

pub fn jellyfish() -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a656c6c79);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..JELLYFISH_POSTS {
        let (species, caption) = SPECIES[i % SPECIES.len()];
        let posted = at(2023, 1, 5) + Duration::days(9 * i as i64);
        let caption = if i % 7 == 6 { "strange blob in the water".to_string() } else { caption.to_string() };
        rows.push(vec![
            format!("JF{:03}", i + 1),
            SOURCES[i % SOURCES.len()].to_string(),
            PLACES[i % PLACES.len()].to_string(),
            format!("https://media.example.org/jf/{:03}.jpg", i + 1),
            WHEN[i % WHEN.len()].to_string(),
            rfc3339(posted),
            caption,
        ]);
        let conf = jellyfish_confidence(i, &mut rng);
        labels.push(vec![format!("JF{:03}", i + 1), species.to_string(), format!("{conf:.3}")]);
    }
    for d in 0..JELLYFISH_DUPLICATES {
        let copy = rows[5 * d + 2].clone();
        rows.push(copy);
    }
    let posts = csv_bytes(&["ID", "source", "location", "media URL", "date_text", "posted_at", "caption"], &rows);
    let ml = csv_bytes(&["item_external_id", "label", "confidence"], &labels);

    let ruleset = json!({
        "name": "species-keywords",
        "rules": [
            {"pattern": "physalia|man o' war", "label": "physalia", "confidence": "0.9"},
            {"pattern": "chrysaora|sea nettle", "label": "chrysaora", "confidence": "0.85"},
            {"pattern": "aurelia|moon jelly", "label": "aurelia", "confidence": "0.88"},
        ]
    });
    let pipeline = PipelineSpec {
        id: Some("pipeline-jellyfish".into()),
        steps: vec![
            step("extract_tabular", &["@posts"], json!({"source": "posts.csv"})),
            step("clean_dedupe", &["$0"], json!({"key_columns": ["ID"]})),
            step(
                "enrich",
                &["$1"],
                json!({"rules": {
                    "reliability": [
                        {"column": "source", "equals": "inaturalist", "grade": "A"},
                        {"column": "source", "equals": "news", "grade": "B"}
                    ],
                    "default_grade": "C"
                }}),
            ),
            step(
                "load_release",
                &["$2"],
                json!({"dataset": "jellyfish-posts", "external_id_column": "ID", "license": "CC-BY-4.0"}),
            ),
            step(
                "map_headers",
                &["$3"],
                json!({"mapping": {"mapping": {
                    "ID": "external_id", "source": "source", "location": "location", "media URL": "media_url"
                }}}),
            ),
            step(
                "normalize_geotemporal",
                &["$4"],
                json!({
                    "rules": {"time_columns": ["date_text"], "geo_columns": ["location"], "reference_column": "posted_at"},
                    "hemisphere": "southern"
                }),
            ),
            step("apply_rule_tags", &["$5"], json!({"ruleset": ruleset, "text_column": "caption"})),
            step("import_ml_labels", &["$5", "@ml_labels"], json!({"model": "jellyfish-cnn"})),
        ],
    };
    Scenario {
        name: "jellyfish",
        datasets: vec![dataset(
            "jellyfish-posts",
            "biodiversity",
            "Social media posts reporting jellyfish sightings on the Brazilian coast",
            Hemisphere::Southern,
        )],
        experiment: ExperimentSpec {
            id: Some(Id::new("experiment-jellyfish")),
            name: "Jellyfish sightings".into(),
            date: Some(at(2024, 3, 1)),
            research_question: "Which jellyfish species are reported along the coast, where and when?".into(),
            team: vec![
                member("member-jf-lead", "Marina Costa", "marine biologist", Seniority::Senior),
                member("member-jf-analyst", "Rui Alves", "data analyst", Seniority::Junior),
            ],
            ..Default::default()
        },
        pipeline,
        inputs: BTreeMap::from([("posts".to_string(), posts), ("ml_labels".to_string(), ml)]),
    }
}

// Seismic bulletin ---------------------------------------------------------

/// Station coordinates in planar kilometres.
pub const SEISMIC_STATIONS: [(&str, f64, f64); 6] = [
    ("ST01", 0.0, 0.0),
    ("ST02", 100.0, 0.0),
    ("ST03", 0.0, 100.0),
    ("ST04", 100.0, 100.0),
    ("ST05", 50.0, -20.0),
    ("ST06", -20.0, 50.0),
];
pub const SEISMIC_VP: f64 = 6.0;
pub const SEISMIC_VS: f64 = 3.5;

/// Ground truth of one synthetic event.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticEvent {
    pub event_id: String,
    pub x_km: f64,
    pub y_km: f64,
    pub origin: Timestamp,
    pub stations: Vec<usize>,
    pub magnitude: f64,
    pub year: i32,
}

pub fn seismic_events() -> Vec<SyntheticEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7365_6973);
    (0..SEISMIC_EVENTS)
        .map(|i| {
            let year = 2021 + (i % 3) as i32;
            let n = 3 + i % 4;
            let mut stations: Vec<usize> = (0..SEISMIC_STATIONS.len()).collect();
            for j in (1..stations.len()).rev() {
                stations.swap(j, rng.random_range(0..=j));
            }
            stations.truncate(n);
            stations.sort_unstable();
            SyntheticEvent {
                event_id: format!("EV{:02}", i + 1),
                x_km: (rng.random_range(15.0..85.0f64) * 1000.0).round() / 1000.0,
                y_km: (rng.random_range(15.0..85.0f64) * 1000.0).round() / 1000.0,
                origin: at(year, 1 + (i % 12) as u32, 3 + i as u32) + Duration::seconds(3600 * i as i64),
                stations,
                magnitude: ((1.5 + rng.random_range(0.0..2.5f64)) * 10.0).round() / 10.0,
                year,
            }
        })
        .collect()
}

fn travel(seconds: f64) -> Duration {
    Duration::microseconds((seconds * 1e6).round() as i64)
}

/// Phase picks forward-modelled from the synthetic events.
pub fn seismic_picks() -> StagedTable {
    let mut rows = Vec::new();
    for e in seismic_events() {
        for &s in &e.stations {
            let (name, sx, sy) = SEISMIC_STATIONS[s];
            let d = ((e.x_km - sx).powi(2) + (e.y_km - sy).powi(2)).sqrt();
            let p = e.origin + travel(d / SEISMIC_VP);
            let sa = e.origin + travel(d / SEISMIC_VS);
            let mut row = vec![
                e.event_id.clone(),
                name.to_string(),
                format!("{sx:.3}"),
                format!("{sy:.3}"),
                rfc3339(p),
                rfc3339(sa),
                "analyst-junior".to_string(),
                format!("{:.1}", e.magnitude),
                e.year.to_string(),
            ];
            row.push(format!("{}-{name}", e.event_id));
            rows.push(row);
        }
    }
    let mut header: Vec<String> = PICK_COLUMNS.iter().map(|c| c.to_string()).collect();
    header.push("pick_id".into());
    StagedTable::new(header, rows)
}

/// Event labels from the junior analyst and the classifier; they differ on
/// exactly one event.
pub fn seismic_labels() -> (Vec<String>, Vec<String>) {
    let human: Vec<String> = (0..SEISMIC_EVENTS)
        .map(|i| if i % 4 == 3 { "blast" } else { "earthquake" }.to_string())
        .collect();
    let mut machine = human.clone();
    machine[5] = "blast".to_string();
    (human, machine)
}

/// Events the senior finally accepts; EV04 is first rejected, then accepted.
pub const SEISMIC_BULLETIN: [&str; 7] = ["EV01", "EV02", "EV03", "EV04", "EV06", "EV07", "EV09"];

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Three-component trace with background noise and a burst at
/// [`BURST_SAMPLE`].
pub fn seismic_trace(station: &str, axis: Axis, seed: u64) -> SignalTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..TRACE_SAMPLES)
        .map(|i| {
            let noise = gaussian(&mut rng);
            let burst = if i >= BURST_SAMPLE {
                let t = (i - BURST_SAMPLE) as f64 / TRACE_RATE_HZ;
                40.0 * (-t / 1.5).exp() * (2.0 * std::f64::consts::PI * 5.0 * t).sin()
            } else {
                0.0
            };
            ((noise + burst) * 1e6).round() / 1e6
        })
        .collect();
    SignalTrace {
        station_id: station.to_string(),
        channel_id: format!("HH{}", axis.as_str()),
        axis,
        sample_rate_hz: TRACE_RATE_HZ,
        start_time: at(2021, 3, 1),
        samples,
    }
}

pub fn seismic() -> Scenario {
    let mut inputs = BTreeMap::new();
    let mut trace_bindings = Vec::new();
    for (s, station) in ["ST01", "ST02", "ST03"].iter().enumerate() {
        for (a, axis) in [Axis::Z, Axis::X, Axis::Y].into_iter().enumerate() {
            let name = format!("trace_{}_{}", station.to_lowercase(), axis.as_str().to_lowercase());
            let trace = seismic_trace(station, axis, 1000 + (3 * s + a) as u64);
            inputs.insert(name.clone(), write_signal(&trace).into_bytes());
            trace_bindings.push(format!("@{name}"));
        }
    }
    inputs.insert("picks".into(), seismic_picks().to_csv().expect("in-memory csv"));
    let events = seismic_events();
    let (human, machine) = seismic_labels();
    let junior_rows: Vec<Vec<String>> = events
        .iter()
        .zip(&human)
        .map(|(e, l)| vec![e.event_id.clone(), l.clone(), "member-seis-junior".into()])
        .collect();
    let ml_rows: Vec<Vec<String>> = events
        .iter()
        .zip(&machine)
        .enumerate()
        .map(|(i, (e, l))| vec![e.event_id.clone(), l.clone(), format!("{:.2}", 0.7 + 0.025 * i as f64)])
        .collect();
    let mut review_rows: Vec<Vec<String>> = events
        .iter()
        .map(|e| vec![e.event_id.clone(), "member-seis-junior".into(), "accepted".into(), "looks real".into()])
        .collect();
    for e in &events {
        let accepted = SEISMIC_BULLETIN.contains(&e.event_id.as_str()) && e.event_id != "EV04";
        let verdict = if accepted { "accepted" } else { "rejected" };
        review_rows.push(vec![e.event_id.clone(), "member-seis-senior".into(), verdict.into(), String::new()]);
    }
    review_rows.push(vec!["EV04".into(), "member-seis-senior".into(), "accepted".into(), "re-picked S phase".into()]);
    inputs.insert("junior_labels".into(), csv_bytes(&["item_external_id", "label", "member_id"], &junior_rows));
    inputs.insert("ml_labels".into(), csv_bytes(&["item_external_id", "label", "confidence"], &ml_rows));
    inputs.insert(
        "reviews".into(),
        csv_bytes(&["item_external_id", "member_id", "verdict", "comment"], &review_rows),
    );

    let bindings: Vec<&str> = trace_bindings.iter().map(String::as_str).collect();
    let pipeline = PipelineSpec {
        id: Some("pipeline-seismic".into()),
        steps: vec![
            step("extract_signal", &bindings, json!({})),
            step("load_release", &["$0"], json!({"dataset": "seismic-waveforms", "license": "CC-BY-4.0"})),
            step("sta_lta", &["$1"], json!({"sta_s": 1, "lta_s": 10, "on_ratio": 3, "off_ratio": 1.5})),
            step("extract_tabular", &["@picks"], json!({"source": "picks.csv"})),
            step(
                "load_release",
                &["$3"],
                json!({"dataset": "seismic-picks", "external_id_column": "pick_id", "license": "CC-BY-4.0"}),
            ),
            step("locate_events", &["$4"], json!({"vp_km_s": SEISMIC_VP, "vs_km_s": SEISMIC_VS})),
            step("import_user_tags", &["$5", "@junior_labels"], json!({})),
            step("import_ml_labels", &["$5", "@ml_labels"], json!({"model": "event-classifier"})),
            step("import_reviews", &["$5", "@reviews"], json!({})),
        ],
    };
    Scenario {
        name: "seismic",
        datasets: vec![
            dataset("seismic-waveforms", "seismology", "Three-component station recordings", Hemisphere::Northern),
            dataset("seismic-picks", "seismology", "P and S phase picks per event and station", Hemisphere::Northern),
        ],
        experiment: ExperimentSpec {
            id: Some(Id::new("experiment-seismic")),
            name: "Seismic bulletin".into(),
            date: Some(at(2024, 3, 2)),
            research_question: "Where did the recorded events occur and which belong in the bulletin?".into(),
            team: vec![
                member("member-seis-senior", "Dana Okafor", "seismologist", Seniority::Senior),
                member("member-seis-junior", "Lee Park", "junior analyst", Seniority::Junior),
            ],
            ..Default::default()
        },
        pipeline,
        inputs,
    }
}

// Graffiti survey ----------------------------------------------------------

const STYLES: [&str; 5] = ["tag", "throw-up", "piece", "mural", "stencil"];
const DISTRICTS: [&str; 4] = ["Alfama", "Mouraria", "Graca", "Marvila"];
pub const GRAFFITI_JUNIORS: [&str; 3] = ["member-gr-junior-1", "member-gr-junior-2", "member-gr-junior-3"];
pub const GRAFFITI_SENIOR: &str = "member-gr-senior";
/// Items tagged by the senior in addition to the juniors.
pub const GRAFFITI_SENIOR_TAGS: usize = 300;
const FIRST_PASS_ACCEPTED: usize = 516;

/// Ground-truth cluster of photo `i`: small tags or large murals.
pub fn graffiti_cluster(i: usize) -> usize {
    usize::from(i % 3 == 0)
}

/// Photo ordinals accepted by the first review pass and those flipped from
/// rejected to accepted by the second.
pub fn graffiti_review_plan() -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6166);
    let mut order: Vec<usize> = (0..GRAFFITI_ITEMS).collect();
    for j in (1..order.len()).rev() {
        order.swap(j, rng.random_range(0..=j));
    }
    let mut first: Vec<usize> = order[..FIRST_PASS_ACCEPTED].to_vec();
    let mut flips: Vec<usize> = order[FIRST_PASS_ACCEPTED..FIRST_PASS_ACCEPTED + (GRAFFITI_ACCEPTED - FIRST_PASS_ACCEPTED)].to_vec();
    first.sort_unstable();
    flips.sort_unstable();
    (first, flips)
}

fn photo_id(i: usize) -> String {
    format!("G{:04}", i + 1)
}

pub fn graffiti() -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7374_7265);
    let mut rows = Vec::with_capacity(GRAFFITI_ITEMS);
    for i in 0..GRAFFITI_ITEMS {
        let large = graffiti_cluster(i) == 1;
        let (colours, area) = if large {
            (10.0 + gaussian(&mut rng) * 0.8, 24.0 + gaussian(&mut rng) * 2.0)
        } else {
            (3.0 + gaussian(&mut rng) * 0.8, 2.0 + gaussian(&mut rng) * 0.5)
        };
        let style = if large { STYLES[2 + i % 3] } else { STYLES[i % 2] };
        rows.push(vec![
            photo_id(i),
            format!("https://media.example.org/graffiti/{}.jpg", photo_id(i)),
            format!("{style} on a wall in {}", DISTRICTS[i % DISTRICTS.len()]),
            DISTRICTS[i % DISTRICTS.len()].to_string(),
            format!("{:.3}", colours.max(0.5)),
            format!("{:.3}", area.max(0.1)),
            rfc3339(at(2023, 4, 1) + Duration::minutes(17 * i as i64)),
        ]);
    }
    let manifest = csv_bytes(
        &["photo_id", "media_url", "caption", "district", "colour_count", "area_m2", "taken_at"],
        &rows,
    );
    let mut tag_rows = Vec::new();
    for i in 0..GRAFFITI_ITEMS {
        let style = rows[i][2].split(" on ").next().unwrap_or("tag").to_string();
        tag_rows.push(vec![photo_id(i), style.clone(), GRAFFITI_JUNIORS[i % 3].to_string()]);
        if i % 7 < 2 && tag_rows.iter().filter(|r| r[2] == GRAFFITI_SENIOR).count() < GRAFFITI_SENIOR_TAGS {
            tag_rows.push(vec![photo_id(i), style, GRAFFITI_SENIOR.to_string()]);
        }
    }
    let (first, flips) = graffiti_review_plan();
    let mut review_rows = Vec::new();
    for i in 0..GRAFFITI_ITEMS {
        let verdict = if first.binary_search(&i).is_ok() { "accepted" } else { "rejected" };
        review_rows.push(vec![photo_id(i), GRAFFITI_SENIOR.to_string(), verdict.to_string(), String::new()]);
    }
    for &i in &flips {
        review_rows.push(vec![photo_id(i), GRAFFITI_SENIOR.to_string(), "accepted".into(), "second look".into()]);
    }
    let pipeline = PipelineSpec {
        id: Some("pipeline-graffiti".into()),
        steps: vec![
            step("extract_tabular", &["@manifest"], json!({"source": "manifest.csv"})),
            step(
                "load_release",
                &["$0"],
                json!({"dataset": "graffiti-photos", "external_id_column": "photo_id", "license": "CC-BY-NC-4.0"}),
            ),
            step("import_user_tags", &["$1", "@tags"], json!({"id_column": "photo_id"})),
            step("import_reviews", &["$1", "@reviews"], json!({"id_column": "photo_id"})),
            step("prepare_features", &["$1"], json!({"columns": ["colour_count", "area_m2"]})),
            step("kmeans", &["$4"], json!({"k": 2})),
            step("agglomerative", &["$4"], json!({"k": 2})),
        ],
    };
    Scenario {
        name: "graffiti",
        datasets: vec![dataset(
            "graffiti-photos",
            "urban studies",
            "Photographed street art with measured colour count and area",
            Hemisphere::Northern,
        )],
        experiment: ExperimentSpec {
            id: Some(Id::new("experiment-graffiti")),
            name: "Graffiti survey".into(),
            date: Some(at(2024, 3, 3)),
            research_question: "How is street art distributed across styles and districts?".into(),
            team: vec![
                member(GRAFFITI_SENIOR, "Sam Rocha", "curator", Seniority::Senior),
                member(GRAFFITI_JUNIORS[0], "Ines Moura", "junior analyst", Seniority::Junior),
                member(GRAFFITI_JUNIORS[1], "Tomas Reis", "junior analyst", Seniority::Junior),
                member(GRAFFITI_JUNIORS[2], "Joana Lima", "junior analyst", Seniority::Junior),
            ],
            ..Default::default()
        },
        pipeline,
        inputs: BTreeMap::from([
            ("manifest".to_string(), manifest),
            ("tags".to_string(), csv_bytes(&["item_external_id", "label", "member_id"], &tag_rows)),
            ("reviews".to_string(), csv_bytes(&["item_external_id", "member_id", "verdict", "comment"], &review_rows)),
        ]),
    }
}

pub fn all() -> Vec<Scenario> {
    vec![jellyfish(), seismic(), graffiti()]
}

/// Creates the datasets, experiment and pipeline of a scenario, then runs it.
pub fn run_scenario(store: &mut Store, scenario: &Scenario) -> Result<ScenarioRun> {
    for d in &scenario.datasets {
        create_dataset(store, &d.name, &d.domain, &d.description, d.hemisphere)?;
    }
    let (experiment, _) = create_experiment(store, scenario.experiment.clone())?;
    let pipeline = define_pipeline(store, &scenario.pipeline)?;
    let run = run_pipeline(store, &pipeline.id, &experiment.id, &scenario.inputs, &RunOptions::default())?;
    Ok(ScenarioRun {
        name: scenario.name,
        experiment_id: experiment.id,
        pipeline_id: pipeline.id,
        run,
    })
}

#[derive(Clone, Debug)]
pub struct Demo {
    pub runs: Vec<ScenarioRun>,
    pub bulletin: Bulletin,
}

impl Demo {
    pub fn run(&self, name: &str) -> Option<&ScenarioRun> {
        self.runs.iter().find(|r| r.name == name)
    }
}

/// Runs all three scenarios and compiles the seismic bulletin.
pub fn build_demo(store: &mut Store) -> Result<Demo> {
    let mut runs = Vec::new();
    for s in all() {
        runs.push(run_scenario(store, &s)?);
    }
    let (_, bulletin) = compile_bulletin(store, &Id::new("experiment-seismic"))?;
    Ok(Demo { runs, bulletin })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_deterministic() {
        let a = all();
        let b = all();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.inputs, y.inputs);
            assert_eq!(x.pipeline, y.pipeline);
        }
    }

    #[test]
    fn review_plan_counts() {
        let (first, flips) = graffiti_review_plan();
        assert_eq!(first.len() + flips.len(), GRAFFITI_ACCEPTED);
        assert!(flips.iter().all(|f| first.binary_search(f).is_err()));
    }

    #[test]
    fn labels_agree_on_nine() {
        let (h, m) = seismic_labels();
        assert_eq!(h.iter().zip(&m).filter(|(a, b)| a == b).count(), SEISMIC_AGREEING);
    }

    #[test]
    fn senior_tags_fewer_than_junior() {
        let s = graffiti();
        let text = String::from_utf8(s.inputs["tags"].clone()).unwrap();
        let senior = text.lines().filter(|l| l.ends_with(GRAFFITI_SENIOR)).count();
        let junior = text.lines().skip(1).count() - senior;
        assert_eq!(senior, GRAFFITI_SENIOR_TAGS);
        assert!(junior > senior);
    }
}
