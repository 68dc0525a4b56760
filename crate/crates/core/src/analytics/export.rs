//! CSV and canonical JSON export of analysis results.

use std::str::FromStr;

use serde::Serialize;

use super::agreement::AgreementResult;
use super::bulletin::Bulletin;
use super::cluster::KMeansResult;
use super::histogram::ConfidenceHistogram;
use super::query::{AggTable, Cell, QueryResult};
use super::seismic::TriggerInterval;
use super::stats::Describe;
use crate::error::{Error, Result};
use crate::metamodel::{encode_value, normalize_floats};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            _ => Err(Error::UnknownFormat(s.to_string())),
        }
    }
}

/// A result with a flat tabular view.
pub trait Tabular {
    fn header(&self) -> Vec<String>;
    fn records(&self) -> Vec<Vec<String>>;
}

pub fn export_results<R: Serialize + Tabular + ?Sized>(result: &R, format: ExportFormat) -> Result<Vec<u8>> {
    match format {
        ExportFormat::Json => {
            let mut value = serde_json::to_value(result)?;
            normalize_floats(&mut value);
            encode_value(&value)
        }
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(result.header())?;
            for r in result.records() {
                w.write_record(r)?;
            }
            w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))
        }
    }
}

/// Parses the format name, then exports.
pub fn export_as<R: Serialize + Tabular + ?Sized>(result: &R, format: &str) -> Result<Vec<u8>> {
    export_results(result, format.parse()?)
}

fn strings<const N: usize>(names: [&str; N]) -> Vec<String> {
    names.map(String::from).to_vec()
}

impl Tabular for AggTable {
    fn header(&self) -> Vec<String> {
        self.columns.clone()
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows.iter().map(|r| r.iter().map(Cell::render).collect()).collect()
    }
}

impl Tabular for QueryResult {
    fn header(&self) -> Vec<String> {
        let mut h = strings(["item_id", "release_id", "ordinal"]);
        h.extend(self.columns.iter().cloned());
        h.extend(strings(["tags", "annotators", "status"]));
        h
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut out = vec![r.item_id.to_string(), r.release_id.to_string(), r.ordinal.to_string()];
                out.extend(self.columns.iter().map(|c| r.fields.get(c).cloned().unwrap_or_default()));
                out.push(r.tags.join(";"));
                out.push(r.annotators.join(";"));
                out.push(r.status.map(|v| v.as_str().to_string()).unwrap_or_default());
                out
            })
            .collect()
    }
}

impl<T: Scalar + Serialize> Tabular for ConfidenceHistogram<T> {
    fn header(&self) -> Vec<String> {
        strings(["lower", "upper", "count"])
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.bins
            .iter()
            .map(|b| vec![b.lower.to_string(), b.upper.to_string(), b.count.to_string()])
            .collect()
    }
}

impl<T: Scalar + Serialize> Tabular for AgreementResult<T> {
    fn header(&self) -> Vec<String> {
        let mut h = vec!["label".to_string()];
        h.extend(self.labels.iter().cloned());
        h
    }

    /// Confusion matrix rows, first rater down, second across.
    fn records(&self) -> Vec<Vec<String>> {
        self.labels
            .iter()
            .zip(&self.confusion)
            .map(|(l, row)| std::iter::once(l.clone()).chain(row.iter().map(u64::to_string)).collect())
            .collect()
    }
}

impl<T: Scalar + Serialize> Tabular for Describe<T> {
    fn header(&self) -> Vec<String> {
        strings(["n", "mean", "min", "max", "median", "stddev", "population_stddev", "trend"])
    }

    fn records(&self) -> Vec<Vec<String>> {
        vec![[
            self.n.to_string(),
            self.mean.to_string(),
            self.min.to_string(),
            self.max.to_string(),
            self.median.to_string(),
            self.stddev.to_string(),
            self.population_stddev.to_string(),
            self.trend.to_string(),
        ]
        .to_vec()]
    }
}

impl<T: Scalar + Serialize> Tabular for KMeansResult<T> {
    fn header(&self) -> Vec<String> {
        strings(["row", "cluster"])
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.assignments
            .iter()
            .enumerate()
            .map(|(i, c)| vec![i.to_string(), c.to_string()])
            .collect()
    }
}

impl Tabular for [TriggerInterval] {
    fn header(&self) -> Vec<String> {
        strings(["start", "end"])
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.iter().map(|t| vec![t.start.to_string(), t.end.to_string()]).collect()
    }
}

impl Tabular for Bulletin {
    fn header(&self) -> Vec<String> {
        strings(["event_id", "stations", "year", "magnitude", "x_km", "y_km", "residual_rms_km", "validated_by"])
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.events
            .iter()
            .map(|e| {
                vec![
                    e.event_id.clone(),
                    e.stations.join(";"),
                    e.year.to_string(),
                    e.magnitude.get().to_string(),
                    e.epicenter.x_km.get().to_string(),
                    e.epicenter.y_km.get().to_string(),
                    e.residual_rms_km.get().to_string(),
                    e.validated_by.to_string(),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> AggTable {
        AggTable {
            columns: vec!["month(seen)".into(), "count".into(), "mean(n)".into()],
            rows: vec![
                vec![Cell::Text("2023-01".into()), Cell::Count(2), Cell::Number(1.5)],
                vec![Cell::Text("2023-02".into()), Cell::Count(1), Cell::Empty],
            ],
        }
    }

    #[test]
    fn csv_header_first() {
        let bytes = export_as(&table(), "csv").unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().next().unwrap(), "month(seen),count,mean(n)");
        assert_eq!(text.lines().nth(1).unwrap(), "2023-01,2,1.5");
    }

    #[test]
    fn json_is_canonical_and_stable() {
        let a = export_as(&table(), "json").unwrap();
        assert_eq!(a, export_as(&table(), "JSON").unwrap());
        assert_eq!(crate::metamodel::canonical_decode(&a).unwrap()["rows"][1][1], 1);
    }

    #[test]
    fn unknown_format() {
        assert!(matches!(export_as(&table(), "xml"), Err(Error::UnknownFormat(f)) if f == "xml"));
    }
}
