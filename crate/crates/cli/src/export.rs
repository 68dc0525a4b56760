//! Export of analysis results, shared by `xv export` and `GET /export`.

use serde::Deserialize;
use xv_core::analytics::bulletin::build_bulletin;
use xv_core::analytics::{export_as, TagSource};
use xv_core::service::{experiment_histogram, query, scope_agreement};
use xv_core::{Error, Id, Result, Store};

#[derive(Clone, Debug, Default, PartialEq, Eq, Deserialize)]
pub struct ExportRequest {
    /// `query`, `histogram`, `agreement` or `bulletin`.
    #[serde(default = "default_what")]
    pub what: String,
    #[serde(default = "default_format")]
    pub format: String,
    pub scope: Option<String>,
    pub filter: Option<String>,
    pub experiment: Option<String>,
    pub a: Option<String>,
    pub b: Option<String>,
}

fn default_what() -> String {
    "query".into()
}

fn default_format() -> String {
    "json".into()
}

fn need<'a>(v: &'a Option<String>, name: &str) -> Result<&'a str> {
    v.as_deref().ok_or_else(|| Error::InvalidArgument(format!("{name} is required")))
}

pub fn export(store: &Store, req: &ExportRequest) -> Result<Vec<u8>> {
    let scope = req.scope.as_deref().map(Id::new);
    match req.what.as_str() {
        "query" => export_as(&query(store, scope.as_ref(), req.filter.as_deref().unwrap_or(""))?, &req.format),
        "histogram" => export_as(&experiment_histogram(store, &Id::new(need(&req.experiment, "experiment")?))?, &req.format),
        "agreement" => {
            let a = TagSource::parse(need(&req.a, "a")?);
            let b = TagSource::parse(need(&req.b, "b")?);
            export_as(&scope_agreement(store, scope.as_ref(), &a, &b)?, &req.format)
        }
        "bulletin" => export_as(&build_bulletin(store, &Id::new(need(&req.experiment, "experiment")?))?, &req.format),
        other => Err(Error::InvalidArgument(format!("cannot export {other:?}"))),
    }
}
