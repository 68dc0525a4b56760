//! `xv` subcommands. Each one calls a single engine operation and renders
//! its result.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use xv_core::analytics::bulletin::compile_bulletin;
use xv_core::analytics::{export_as, TagSource};
use xv_core::curate::{
    apply_rule_tags, apply_user_tag, create_experiment, import_ml_labels, import_reviews, import_user_tags,
    map_headers, normalize_geotemporal, prepare_features, publish_experiment, review, tag_history, ExperimentSpec,
    HeaderMapping, ReviewRequest, TagRuleSet,
};
use xv_core::ingest::{profile_release, read_release, Descriptors, EnrichRules};
use xv_core::metamodel::{Catalog, Hemisphere, Verdict};
use xv_core::orchestrate::{consistency_check, define_pipeline, replay, run_pipeline, PipelineSpec, RunOptions, OPERATIONS};
use xv_core::scenarios::build_demo;
use xv_core::service::{experiment_histogram, ingest, query, scope_agreement, IngestRequest, NewDataset, SourceKind};
use xv_core::{Error, Id, Result, Store};

use crate::export::{export, ExportRequest};
use crate::render::{canonical, Page};

#[derive(Debug, Parser)]
#[command(name = "xv", version, about = "Experiment curation over an append-only lakehouse store")]
pub struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "XV_STORE", default_value = "xv-store")]
    pub store: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create an empty store, optionally loaded with the bundled use cases.
    Init {
        #[arg(long)]
        demo: bool,
    },
    /// Load source files as the next release of a dataset.
    Ingest(IngestArgs),
    /// Show the profile of a release.
    Profile { release: String },
    #[command(subcommand)]
    Experiment(ExperimentCmd),
    #[command(subcommand)]
    Tag(TagCmd),
    #[command(subcommand)]
    Review(ReviewCmd),
    #[command(subcommand)]
    Transform(TransformCmd),
    #[command(subcommand)]
    Pipeline(PipelineCmd),
    /// Run a pipeline.
    Run(RunArgs),
    /// Recompute a run and compare output hashes.
    Replay {
        run: String,
        #[arg(long, default_value = "text")]
        format: String,
    },
    /// Items matching a filter expression.
    Query {
        #[arg(long)]
        scope: Option<String>,
        #[arg(long, default_value = "")]
        filter: String,
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long)]
        offset: Option<usize>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Agreement between two tag sources (`user`, `algorithmic` or an author).
    Agree {
        #[arg(long)]
        scope: Option<String>,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Confidence histogram of an experiment's algorithmic tags.
    Histogram {
        #[arg(long)]
        experiment: String,
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Compile and store the event bulletin of an experiment.
    Bulletin {
        #[arg(long)]
        experiment: String,
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Export a result as CSV or JSON.
    Export(ExportArgs),
    /// Store-wide consistency check.
    Check,
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Dataset id or name.
    #[arg(long)]
    dataset: String,
    /// tabular, manifest, signal or text.
    #[arg(long, default_value = "tabular")]
    kind: String,
    #[arg(long)]
    delimiter: Option<char>,
    #[arg(long, default_value = "")]
    license: String,
    #[arg(long)]
    external_id_column: Option<String>,
    #[arg(long)]
    media_column: Option<String>,
    /// Create the dataset when missing.
    #[arg(long)]
    create: bool,
    #[arg(long, default_value = "")]
    domain: String,
    #[arg(long, default_value = "")]
    description: String,
    #[arg(long, default_value = "northern")]
    hemisphere: String,
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCmd {
    /// Create from a JSON specification.
    Create { spec: PathBuf },
    List,
    Show { id: String },
    /// Senior acceptance that publishes the experiment.
    Publish {
        id: String,
        #[arg(long)]
        member: String,
        #[arg(long, default_value = "")]
        comment: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum TagCmd {
    /// One manual tag.
    Add {
        #[arg(long)]
        target: String,
        #[arg(long)]
        label: String,
        #[arg(long)]
        member: String,
        #[arg(long)]
        experiment: String,
    },
    /// Keyword and regex rules from a JSON rule set.
    Rules {
        #[arg(long)]
        release: String,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        text_column: Option<String>,
    },
    /// Classifier labels from CSV (`item_external_id,label,confidence`).
    ImportMl {
        #[arg(long)]
        release: String,
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        id_column: Option<String>,
    },
    /// Manual tags from CSV (`item_external_id,label,member_id`).
    ImportUser {
        #[arg(long)]
        release: String,
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        id_column: Option<String>,
    },
    /// Tags and verdicts on a target, oldest first.
    History { target: String },
}

#[derive(Debug, Subcommand)]
pub enum ReviewCmd {
    /// Record one verdict.
    Submit {
        #[arg(long)]
        target: String,
        #[arg(long)]
        member: String,
        /// accepted or rejected.
        #[arg(long)]
        verdict: String,
        #[arg(long, default_value = "")]
        comment: String,
        #[arg(long)]
        experiment: Option<String>,
        /// History length last seen; a mismatch is a conflict.
        #[arg(long)]
        expected_history: Option<usize>,
    },
    /// Verdicts from CSV (`item_external_id,member_id,verdict,comment`).
    Import {
        #[arg(long)]
        release: String,
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        id_column: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum TransformCmd {
    /// Rename columns to model fields with a JSON header mapping.
    MapHeaders {
        #[arg(long)]
        release: String,
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long)]
        experiment: String,
    },
    /// Resolve vague time and place columns.
    Normalize {
        #[arg(long)]
        release: String,
        /// JSON enrichment rules.
        #[arg(long)]
        rules: PathBuf,
        /// JSON-lines rule table replacing the bundled one.
        #[arg(long)]
        rule_table: Option<PathBuf>,
        #[arg(long)]
        experiment: String,
    },
    /// Numeric feature matrix from the given columns.
    Features {
        #[arg(long)]
        release: String,
        #[arg(long, value_delimiter = ',', required = true)]
        columns: Vec<String>,
        #[arg(long)]
        experiment: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum PipelineCmd {
    /// Register a pipeline from a JSON specification.
    Define { spec: PathBuf },
    List,
    Show { id: String },
    /// Registered operations.
    Ops,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pipeline: String,
    #[arg(long)]
    experiment: String,
    /// `name=path`, bound as `@name`.
    #[arg(long = "input")]
    inputs: Vec<String>,
    /// Seed material; defaults to the run id.
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// query, histogram, agreement or bulletin.
    #[arg(long, default_value = "query")]
    what: String,
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(long)]
    scope: Option<String>,
    #[arg(long)]
    filter: Option<String>,
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    b: Option<String>,
    /// Write here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code: 0 success, 1 domain error, 2 usage error.
pub fn run(args: Vec<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error[{}]: {e}", e.code());
            1
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&read(path)?)?)
}

fn emit<T: Serialize + ?Sized>(out: &mut dyn Write, data: &T) -> Result<i32> {
    let mut bytes = canonical(data)?;
    bytes.push(b'\n');
    write_bytes(out, &bytes)
}

fn write_bytes(out: &mut dyn Write, bytes: &[u8]) -> Result<i32> {
    out.write_all(bytes).map_err(|e| Error::io("<stdout>", e))?;
    if !bytes.is_empty() && !bytes.ends_with(b"\n") {
        out.write_all(b"\n").map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(0)
}

fn writable(cli: &Cli) -> Result<Store> {
    Store::open(&cli.store)
}

fn readable(cli: &Cli) -> Result<Store> {
    Store::open_read_only(&cli.store)
}

fn parse_hemisphere(text: &str) -> Result<Hemisphere> {
    serde_json::from_value(json!(text)).map_err(|_| Error::InvalidArgument(format!("hemisphere {text:?}")))
}

fn parse_verdict(text: &str) -> Result<Verdict> {
    serde_json::from_value(json!(text)).map_err(|_| Error::InvalidArgument(format!("verdict {text:?}")))
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Init { demo } => {
            let mut store = Store::init(&cli.store)?;
            let mut summary = json!({"store": cli.store.display().to_string()});
            if *demo {
                let demo = build_demo(&mut store)?;
                let runs: Vec<_> = demo
                    .runs
                    .iter()
                    .map(|r| json!({"scenario": r.name, "experiment": r.experiment_id, "run": r.run.id, "status": r.run.status}))
                    .collect();
                summary["runs"] = json!(runs);
                summary["bulletin_events"] = json!(demo.bulletin.events.len());
            }
            emit(out, &summary)
        }
        Command::Ingest(a) => {
            let mut store = writable(cli)?;
            let req = IngestRequest {
                dataset: a.dataset.clone(),
                kind: a.kind.parse::<SourceKind>()?,
                delimiter: a.delimiter,
                descriptors: Descriptors {
                    license: a.license.clone(),
                    external_id_column: a.external_id_column.clone(),
                    media_column: a.media_column.clone(),
                    ..Default::default()
                },
                create: a.create.then(|| NewDataset {
                    domain: a.domain.clone(),
                    description: a.description.clone(),
                    hemisphere: parse_hemisphere(&a.hemisphere).unwrap_or_default(),
                }),
            };
            parse_hemisphere(&a.hemisphere)?;
            let sources = a
                .files
                .iter()
                .map(|p| Ok((p.display().to_string(), read(p)?)))
                .collect::<Result<Vec<_>>>()?;
            emit(out, &ingest(&mut store, &req, &sources)?)
        }
        Command::Profile { release } => {
            let store = readable(cli)?;
            let id = Id::new(release.as_str());
            match store.index().profile_of(&id) {
                Some(p) => emit(out, p),
                None => emit(out, &profile_release(&read_release(&store, &id)?)),
            }
        }
        Command::Experiment(cmd) => experiment_cmd(cli, cmd, out),
        Command::Tag(cmd) => tag_cmd(cli, cmd, out),
        Command::Review(cmd) => review_cmd(cli, cmd, out),
        Command::Transform(cmd) => transform_cmd(cli, cmd, out),
        Command::Pipeline(cmd) => pipeline_cmd(cli, cmd, out),
        Command::Run(a) => {
            let mut store = writable(cli)?;
            let mut inputs = BTreeMap::new();
            for spec in &a.inputs {
                let (name, path) = spec
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidArgument(format!("input {spec:?} is not name=path")))?;
                inputs.insert(name.to_string(), read(Path::new(path))?);
            }
            let opts = RunOptions { seed_base: a.seed.clone() };
            let run = run_pipeline(&mut store, &Id::new(a.pipeline.as_str()), &Id::new(a.experiment.as_str()), &inputs, &opts)?;
            emit(out, &run)
        }
        Command::Replay { run, format } => {
            let store = readable(cli)?;
            let report = replay(&store, &Id::new(run.as_str()))?;
            if format == "json" {
                return emit(out, &report);
            }
            let mut text = format!("run: {}\nidentical: {}\n", report.run_id, report.identical);
            for s in &report.steps {
                let state = if s.matches { "match" } else { "DIVERGED" };
                text.push_str(&format!("step {} {}: {state}\n", s.index, s.op));
            }
            write_bytes(out, text.as_bytes())
        }
        Command::Query { scope, filter, format, offset, limit } => {
            let store = readable(cli)?;
            let mut result = query(&store, scope.as_deref().map(Id::new).as_ref(), filter)?;
            if offset.is_some() || limit.is_some() {
                result.rows = Page::new(*offset, *limit).slice(&result.rows);
            }
            write_bytes(out, &export_as(&result, format)?)
        }
        Command::Agree { scope, a, b, format } => {
            let store = readable(cli)?;
            let scope = scope.as_deref().map(Id::new);
            let r = scope_agreement(&store, scope.as_ref(), &TagSource::parse(a), &TagSource::parse(b))?;
            write_bytes(out, &export_as(&r, format)?)
        }
        Command::Histogram { experiment, format } => {
            let store = readable(cli)?;
            write_bytes(out, &export_as(&experiment_histogram(&store, &Id::new(experiment.as_str()))?, format)?)
        }
        Command::Bulletin { experiment, format } => {
            let mut store = writable(cli)?;
            let (_, bulletin) = compile_bulletin(&mut store, &Id::new(experiment.as_str()))?;
            write_bytes(out, &export_as(&bulletin, format)?)
        }
        Command::Export(a) => {
            let store = readable(cli)?;
            let req = ExportRequest {
                what: a.what.clone(),
                format: a.format.clone(),
                scope: a.scope.clone(),
                filter: a.filter.clone(),
                experiment: a.experiment.clone(),
                a: a.a.clone(),
                b: a.b.clone(),
            };
            let bytes = export(&store, &req)?;
            match &a.output {
                Some(path) => {
                    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
                    emit(out, &json!({"written": path.display().to_string(), "bytes": bytes.len()}))
                }
                None => write_bytes(out, &bytes),
            }
        }
        Command::Check => {
            let store = readable(cli)?;
            let report = consistency_check(&store)?;
            emit(out, &report)?;
            Ok(if report.is_clean() { 0 } else { 1 })
        }
        Command::Serve { bind } => {
            let store = writable(cli)?;
            crate::http::serve_blocking(store, bind)?;
            Ok(0)
        }
    }
}

fn experiment_cmd(cli: &Cli, cmd: &ExperimentCmd, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        ExperimentCmd::Create { spec } => {
            let mut store = writable(cli)?;
            let spec: ExperimentSpec = read_json(spec)?;
            let (experiment, warnings) = create_experiment(&mut store, spec)?;
            emit(out, &json!({"experiment": experiment, "warnings": warnings}))
        }
        ExperimentCmd::List => {
            let store = readable(cli)?;
            let all: Vec<_> = store.index().experiments().cloned().collect();
            emit(out, &all)
        }
        ExperimentCmd::Show { id } => {
            let store = readable(cli)?;
            let e = store.index().experiment(&Id::new(id.as_str())).ok_or_else(|| Error::not_found("experiment", id))?;
            emit(out, e)
        }
        ExperimentCmd::Publish { id, member, comment } => {
            let mut store = writable(cli)?;
            emit(out, &publish_experiment(&mut store, &Id::new(id.as_str()), &Id::new(member.as_str()), comment)?)
        }
    }
}

fn tag_cmd(cli: &Cli, cmd: &TagCmd, out: &mut dyn Write) -> Result<i32> {
    let id = |s: &String| Id::new(s.as_str());
    match cmd {
        TagCmd::Add { target, label, member, experiment } => {
            let mut store = writable(cli)?;
            emit(out, &apply_user_tag(&mut store, &id(target), label, &id(member), &id(experiment))?)
        }
        TagCmd::Rules { release, rules, experiment, text_column } => {
            let mut store = writable(cli)?;
            let ruleset: TagRuleSet = read_json(rules)?;
            let (tags, action) = apply_rule_tags(&mut store, &id(release), &ruleset, &id(experiment), text_column.as_deref())?;
            emit(out, &json!({"action": action.id, "tags": tags.len()}))
        }
        TagCmd::ImportMl { release, file, model, experiment, id_column } => {
            let mut store = writable(cli)?;
            let bytes = read(file)?;
            let (tags, action) =
                import_ml_labels(&mut store, &id(release), &bytes, model, &id(experiment), id_column.as_deref())?;
            emit(out, &json!({"action": action.id, "tags": tags.len()}))
        }
        TagCmd::ImportUser { release, file, experiment, id_column } => {
            let mut store = writable(cli)?;
            let bytes = read(file)?;
            let (tags, action) = import_user_tags(&mut store, &id(release), &bytes, &id(experiment), id_column.as_deref())?;
            emit(out, &json!({"action": action.id, "tags": tags.len()}))
        }
        TagCmd::History { target } => {
            let store = readable(cli)?;
            emit(out, &tag_history(&store, &id(target))?)
        }
    }
}

fn review_cmd(cli: &Cli, cmd: &ReviewCmd, out: &mut dyn Write) -> Result<i32> {
    let mut store = writable(cli)?;
    match cmd {
        ReviewCmd::Submit { target, member, verdict, comment, experiment, expected_history } => {
            let req = ReviewRequest {
                target: Id::new(target.as_str()),
                member: Id::new(member.as_str()),
                verdict: parse_verdict(verdict)?,
                comment: comment.clone(),
                experiment: experiment.as_deref().map(Id::new),
                expected_history: *expected_history,
            };
            emit(out, &review(&mut store, req)?)
        }
        ReviewCmd::Import { release, file, experiment, id_column } => {
            let bytes = read(file)?;
            let (records, action) = import_reviews(
                &mut store,
                &Id::new(release.as_str()),
                &bytes,
                &Id::new(experiment.as_str()),
                id_column.as_deref(),
            )?;
            emit(out, &json!({"action": action.id, "validations": records.len()}))
        }
    }
}

fn transform_cmd(cli: &Cli, cmd: &TransformCmd, out: &mut dyn Write) -> Result<i32> {
    let mut store = writable(cli)?;
    match cmd {
        TransformCmd::MapHeaders { release, mapping, experiment } => {
            let mapping: HeaderMapping = read_json(mapping)?;
            let (r, a) = map_headers(&mut store, &Id::new(release.as_str()), &mapping, &Id::new(experiment.as_str()))?;
            emit(out, &json!({"release": r, "action": a.id}))
        }
        TransformCmd::Normalize { release, rules, rule_table, experiment } => {
            let rules: EnrichRules = read_json(rules)?;
            let table = match rule_table {
                Some(p) => Some(String::from_utf8(read(p)?).map_err(|_| Error::InvalidArgument("rule table is not UTF-8".into()))?),
                None => None,
            };
            let (r, a, report) = normalize_geotemporal(
                &mut store,
                &Id::new(release.as_str()),
                &rules,
                table.as_deref(),
                &Id::new(experiment.as_str()),
            )?;
            emit(out, &json!({"release": r, "action": a.id, "report": report}))
        }
        TransformCmd::Features { release, columns, experiment } => {
            let (artefact, matrix) = prepare_features(&mut store, &Id::new(release.as_str()), columns, &Id::new(experiment.as_str()))?;
            emit(out, &json!({"artefact": artefact, "rows": matrix.rows, "cols": matrix.cols, "dropped": matrix.dropped}))
        }
    }
}

fn pipeline_cmd(cli: &Cli, cmd: &PipelineCmd, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        PipelineCmd::Define { spec } => {
            let mut store = writable(cli)?;
            let text = String::from_utf8(read(spec)?).map_err(|_| Error::InvalidArgument("pipeline is not UTF-8".into()))?;
            emit(out, &define_pipeline(&mut store, &PipelineSpec::from_json(&text)?)?)
        }
        PipelineCmd::List => {
            let store = readable(cli)?;
            let all: Vec<_> = store.index().pipelines().cloned().collect();
            emit(out, &all)
        }
        PipelineCmd::Show { id } => {
            let store = readable(cli)?;
            let p = store.index().pipeline(&Id::new(id.as_str())).ok_or_else(|| Error::not_found("pipeline", id))?;
            emit(out, p)
        }
        PipelineCmd::Ops => emit(out, OPERATIONS),
    }
}
