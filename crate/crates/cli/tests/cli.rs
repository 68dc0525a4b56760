use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde_json::Value;
use xv_core::analytics::export_as;
use xv_core::service::query;
use xv_core::{Id, Store};

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn xv(store: &Path, args: &[&str]) -> Out {
    let mut argv = vec!["xv".to_string(), "--store".to_string(), store.display().to_string()];
    argv.extend(args.iter().map(|a| a.to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = xv_cli::cli::run(argv, &mut out, &mut err);
    Out { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn json(out: &Out) -> Value {
    assert_eq!(out.code, 0, "{}", out.stderr);
    serde_json::from_str(&out.stdout).unwrap()
}

/// One demo store shared by the read-only tests.
fn demo() -> &'static Path {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    let (_, path) = DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demo");
        let out = xv(&path, &["init", "--demo"]);
        assert_eq!(out.code, 0, "{}", out.stderr);
        (dir, path)
    });
    path
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = xv(dir.path(), &["bogus"]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("bogus"));
    assert_eq!(xv(dir.path(), &["query", "--limit", "x"]).code, 2);
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = xv(dir.path(), &["--help"]);
    assert_eq!(out.code, 0);
    assert!(out.stdout.contains("replay"));
}

#[test]
fn domain_errors_exit_one_with_code() {
    let out = xv(demo(), &["replay", "run-missing"]);
    assert_eq!(out.code, 1);
    assert!(out.stderr.starts_with("error[NOT_FOUND]"), "{}", out.stderr);
    let out = xv(demo(), &["query", "--filter", "status = "]);
    assert_eq!(out.code, 1);
    assert!(out.stderr.starts_with("error["));
}

#[test]
fn missing_store_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = xv(&dir.path().join("none"), &["experiment", "list"]);
    assert_eq!(out.code, 1);
}

#[test]
fn init_demo_summary() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&xv(&dir.path().join("s"), &["init", "--demo"]));
    let runs = v["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 3);
    assert!(runs.iter().all(|r| r["status"] == "succeeded"));
    assert!(v["bulletin_events"].as_u64().unwrap() > 0);
}

#[test]
fn experiments_listed() {
    let v = json(&xv(demo(), &["experiment", "list"]));
    let ids: Vec<_> = v.as_array().unwrap().iter().map(|e| e["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["experiment-jellyfish", "experiment-seismic", "experiment-graffiti"]);
}

#[test]
fn query_csv_counts_accepted() {
    let out = xv(demo(), &["query", "--scope", "experiment-graffiti", "--filter", "status = accepted", "--format", "csv"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let lines: Vec<_> = out.stdout.lines().collect();
    assert!(lines[0].starts_with("item_id,"));
    assert_eq!(lines.len(), 1 + 546);
}

#[test]
fn query_matches_direct_call() {
    let filter = "status = accepted and district = Mouraria";
    let out = xv(demo(), &["query", "--scope", "experiment-graffiti", "--filter", filter, "--format", "csv"]);
    let store = Store::open_read_only(demo()).unwrap();
    let direct = query(&store, Some(&Id::new("experiment-graffiti")), filter).unwrap();
    assert!(!direct.rows.is_empty());
    assert_eq!(out.stdout.as_bytes(), &export_as(&direct, "csv").unwrap()[..]);
}

#[test]
fn query_paging() {
    let args = ["query", "--scope", "experiment-graffiti", "--filter", "status = accepted", "--format", "csv"];
    let all = xv(demo(), &args).stdout;
    let mut paged_args = args.to_vec();
    paged_args.extend(["--offset", "10", "--limit", "5"]);
    let paged = xv(demo(), &paged_args).stdout;
    let all: Vec<_> = all.lines().collect();
    let paged: Vec<_> = paged.lines().collect();
    assert_eq!(paged[0], all[0]);
    assert_eq!(&paged[1..], &all[11..16]);
}

#[test]
fn replay_reports_identical() {
    let list = json(&xv(demo(), &["experiment", "show", "experiment-seismic"]));
    assert_eq!(list["id"], "experiment-seismic");
    let store = Store::open_read_only(demo()).unwrap();
    let runs: Vec<_> = store.index().runs().map(|r| r.id.clone()).collect();
    drop(store);
    assert_eq!(runs.len(), 3);
    for run in runs {
        let out = xv(demo(), &["replay", run.as_str()]);
        assert_eq!(out.code, 0, "{}", out.stderr);
        assert!(out.stdout.starts_with(&format!("run: {run}\nidentical: true\n")), "{}", out.stdout);
        assert!(!out.stdout.contains("DIVERGED"));
    }
}

#[test]
fn agreement_on_seismic_labels() {
    let v = json(&xv(demo(), &["agree", "--scope", "experiment-seismic", "--a", "user", "--b", "algorithmic"]));
    assert_eq!(v["n"], 10);
    let p: f64 = v["percent_agreement"].as_str().unwrap().parse().unwrap();
    assert!((p - 0.9).abs() < 1e-12);
}

#[test]
fn histogram_and_check() {
    let v = json(&xv(demo(), &["histogram", "--experiment", "experiment-jellyfish"]));
    assert_eq!(v["bins"].as_array().unwrap().len(), 5);
    let v = json(&xv(demo(), &["check"]));
    assert_eq!(v["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn export_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.csv");
    let v = json(&xv(
        demo(),
        &["export", "--what", "histogram", "--experiment", "experiment-jellyfish", "--format", "csv", "--output", path.to_str().unwrap()],
    ));
    let written = std::fs::read_to_string(&path).unwrap();
    assert_eq!(v["bytes"].as_u64().unwrap() as usize, written.len());
    assert_eq!(written.lines().count(), 1 + 5);
}

#[test]
fn curation_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    assert_eq!(xv(&s, &["init"]).code, 0);
    let csv = dir.path().join("posts.csv");
    std::fs::write(&csv, "post_id,text\np1,a moon jelly near the pier\np2,nothing here\n").unwrap();
    let release = json(&xv(
        &s,
        &["ingest", "--dataset", "posts", "--create", "--external-id-column", "post_id", csv.to_str().unwrap()],
    ));
    assert_eq!(release["version"], 1);

    let spec = dir.path().join("exp.json");
    std::fs::write(
        &spec,
        r#"{"name":"trial","research_question":"what?","team":[
            {"id":"member-s","name":"S","seniority":"senior"},
            {"id":"member-j","name":"J","seniority":"junior"}]}"#,
    )
    .unwrap();
    let exp = json(&xv(&s, &["experiment", "create", spec.to_str().unwrap()]));
    let exp_id = exp["experiment"]["id"].as_str().unwrap().to_string();

    let items = json(&xv(&s, &["query", "--scope", release["id"].as_str().unwrap(), "--filter", "post_id = p1"]));
    let item = items["rows"][0]["item_id"].as_str().unwrap().to_string();

    let tag = json(&xv(&s, &["tag", "add", "--target", &item, "--label", "moon", "--member", "member-j", "--experiment", &exp_id]));
    assert_eq!(tag["label"], "moon");

    let out = xv(&s, &["review", "submit", "--target", &item, "--member", "member-s", "--verdict", "accepted", "--expected-history", "0", "--experiment", &exp_id]);
    assert_eq!(out.code, 1);
    assert!(out.stderr.starts_with("error[CONFLICT]"), "{}", out.stderr);
    let out = xv(&s, &["review", "submit", "--target", &item, "--member", "member-s", "--verdict", "accepted", "--expected-history", "1", "--experiment", &exp_id]);
    assert_eq!(out.code, 0, "{}", out.stderr);

    let history = json(&xv(&s, &["tag", "history", &item]));
    assert_eq!(history.as_array().unwrap().len(), 2);

    let out = xv(&s, &["experiment", "publish", &exp_id, "--member", "member-j"]);
    assert!(out.stderr.starts_with("error[SENIOR_REQUIRED]"), "{}", out.stderr);
    assert_eq!(xv(&s, &["experiment", "publish", &exp_id, "--member", "member-s"]).code, 0);
    assert_eq!(json(&xv(&s, &["check"]))["violations"].as_array().unwrap().len(), 0);
}
