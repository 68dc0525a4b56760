//! Column type inference and summary statistics.

use std::collections::HashSet;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::Serialize;

use super::geotemporal::{parse_latlon, valid_latlon};
use super::load::ReleasePayload;
use super::signal::SignalBundle;
use super::table::{is_null, StagedTable};
use crate::metamodel::{ColumnProfile, Decimal, HistogramBin, Id, InferredType, Profile};

pub const HISTOGRAM_BINS: usize = 10;

/// Record count and column summaries of a payload.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileSummary {
    pub record_count: u64,
    pub columns: Vec<ColumnProfile>,
}

impl ProfileSummary {
    pub fn into_profile(self, id: Id, release_id: Id) -> Profile {
        Profile {
            id,
            release_id,
            record_count: self.record_count,
            columns: self.columns,
        }
    }
}

pub fn profile_release(payload: &ReleasePayload) -> ProfileSummary {
    match payload {
        ReleasePayload::Table(t) | ReleasePayload::Manifest(t) => profile_table(t),
        ReleasePayload::Signal(b) => profile_signal(b),
        ReleasePayload::Text(corpus) => {
            let bodies: Vec<&str> = corpus.documents.iter().map(|d| d.body.as_str()).collect();
            ProfileSummary {
                record_count: bodies.len() as u64,
                columns: vec![profile_column("body", &bodies)],
            }
        }
    }
}

pub fn profile_table(table: &StagedTable) -> ProfileSummary {
    let columns = table
        .header
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let cells: Vec<&str> = table.rows.iter().map(|r| r[i].as_str()).collect();
            profile_column(name, &cells)
        })
        .collect();
    ProfileSummary {
        record_count: table.rows.len() as u64,
        columns,
    }
}

/// One decimal column per trace, named `station.channel.axis`. The record
/// count is the longest trace.
pub fn profile_signal(bundle: &SignalBundle) -> ProfileSummary {
    let record_count = bundle.traces.iter().map(|t| t.samples.len()).max().unwrap_or(0) as u64;
    let columns = bundle
        .traces
        .iter()
        .map(|t| {
            let mut c = numeric_profile(&t.label(), InferredType::Decimal, &t.samples, 0);
            c.distinct_count = t.samples.iter().map(|x| x.to_bits()).collect::<HashSet<_>>().len() as u64;
            // Shorter traces have no cell for the trailing rows.
            c.null_count = record_count - t.samples.len() as u64;
            c
        })
        .collect();
    ProfileSummary { record_count, columns }
}

pub fn profile_column(name: &str, cells: &[&str]) -> ColumnProfile {
    let present: Vec<&str> = cells.iter().copied().filter(|c| !is_null(c)).map(str::trim).collect();
    let null_count = (cells.len() - present.len()) as u64;
    let distinct_count = present.iter().collect::<HashSet<_>>().len() as u64;
    let inferred_type = infer_type(&present);
    if inferred_type.is_numeric() {
        let values: Vec<f64> = present.iter().map(|c| c.parse::<f64>().unwrap_or(f64::NAN)).collect();
        let mut c = numeric_profile(name, inferred_type, &values, null_count);
        c.distinct_count = distinct_count;
        c
    } else {
        ColumnProfile {
            name: name.to_string(),
            inferred_type,
            null_count,
            distinct_count,
            min: None,
            max: None,
            mean: None,
            stddev: None,
            histogram: Vec::new(),
        }
    }
}

/// First type in boolean, integer, decimal, timestamp, geopoint that every
/// non-null cell satisfies; string otherwise. An all-null column is string.
pub fn infer_type(present: &[&str]) -> InferredType {
    if present.is_empty() {
        return InferredType::String;
    }
    let trials: [(InferredType, fn(&str) -> bool); 5] = [
        (InferredType::Boolean, is_boolean),
        (InferredType::Integer, is_integer),
        (InferredType::Decimal, is_decimal),
        (InferredType::Timestamp, is_timestamp),
        (InferredType::Geopoint, is_geopoint),
    ];
    trials
        .iter()
        .find(|(_, accepts)| present.iter().all(|c| accepts(c)))
        .map(|(t, _)| *t)
        .unwrap_or(InferredType::String)
}

fn is_boolean(c: &str) -> bool {
    c.eq_ignore_ascii_case("true") || c.eq_ignore_ascii_case("false")
}

fn is_integer(c: &str) -> bool {
    c.parse::<i64>().is_ok()
}

fn is_decimal(c: &str) -> bool {
    let digits = c.bytes().any(|b| b.is_ascii_digit());
    let shape = c.bytes().all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'));
    digits && shape && c.parse::<f64>().is_ok_and(f64::is_finite)
}

pub fn is_timestamp(c: &str) -> bool {
    DateTime::parse_from_rfc3339(c).is_ok()
        || NaiveDateTime::parse_from_str(c, "%Y-%m-%dT%H:%M:%S").is_ok()
        || NaiveDateTime::parse_from_str(c, "%Y-%m-%d %H:%M:%S").is_ok()
        || NaiveDate::parse_from_str(c, "%Y-%m-%d").is_ok()
}

fn is_geopoint(c: &str) -> bool {
    parse_latlon(c).is_some_and(|(lat, lon)| valid_latlon(lat, lon))
}

fn numeric_profile(name: &str, inferred_type: InferredType, values: &[f64], null_count: u64) -> ColumnProfile {
    let mut c = ColumnProfile {
        name: name.to_string(),
        inferred_type,
        null_count,
        distinct_count: 0,
        min: None,
        max: None,
        mean: None,
        stddev: None,
        histogram: Vec::new(),
    };
    if values.is_empty() {
        return c;
    }
    let n = values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    c.min = Some(Decimal(min));
    c.max = Some(Decimal(max));
    c.mean = Some(Decimal(mean));
    c.stddev = Some(Decimal(var.sqrt()));
    c.histogram = histogram(values, min, max);
    c
}

/// Equal-width bins over `[min, max]`; the last bin is closed. A single
/// distinct value yields one bin.
pub fn histogram(values: &[f64], min: f64, max: f64) -> Vec<HistogramBin> {
    if values.is_empty() {
        return Vec::new();
    }
    if max <= min {
        return vec![HistogramBin {
            lower: Decimal(min),
            upper: Decimal(max),
            count: values.len() as u64,
        }];
    }
    let width = (max - min) / HISTOGRAM_BINS as f64;
    let mut counts = [0u64; HISTOGRAM_BINS];
    for &x in values {
        let i = (((x - min) / width).floor() as usize).min(HISTOGRAM_BINS - 1);
        counts[i] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(i, &count)| HistogramBin {
            lower: Decimal(min + width * i as f64),
            upper: Decimal(if i + 1 == HISTOGRAM_BINS { max } else { min + width * (i + 1) as f64 }),
            count,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_column() {
        let c = profile_column("n", &["1", "2", "3"]);
        assert_eq!(c.inferred_type, InferredType::Integer);
        assert_eq!(c.min, Some(Decimal(1.0)));
        assert_eq!(c.max, Some(Decimal(3.0)));
        assert_eq!(c.mean, Some(Decimal(2.0)));
    }

    #[test]
    fn mixed_falls_back_to_string() {
        assert_eq!(profile_column("m", &["1", "x"]).inferred_type, InferredType::String);
    }

    #[test]
    fn population_stddev() {
        let c = profile_column("s", &["2", "4", "4", "4", "5", "5", "7", "9"]);
        assert_eq!(c.stddev, Some(Decimal(2.0)));
    }

    #[test]
    fn trial_order() {
        assert_eq!(infer_type(&["true", "FALSE"]), InferredType::Boolean);
        assert_eq!(infer_type(&["1", "2.5"]), InferredType::Decimal);
        assert_eq!(infer_type(&["2023-01-01", "2023-02-01T10:00:00Z"]), InferredType::Timestamp);
        assert_eq!(infer_type(&["-17.7,-39.2"]), InferredType::Geopoint);
        assert_eq!(infer_type(&["95,10"]), InferredType::String);
        assert_eq!(infer_type(&["nan"]), InferredType::String);
        assert_eq!(infer_type(&[]), InferredType::String);
    }

    #[test]
    fn nulls_are_counted_not_typed() {
        let c = profile_column("n", &["1", "", "  ", "4"]);
        assert_eq!(c.inferred_type, InferredType::Integer);
        assert_eq!(c.null_count, 2);
        let total: u64 = c.histogram.iter().map(|b| b.count).sum();
        assert_eq!(total, 2);
    }

    #[test]
    fn histogram_bins() {
        let values: Vec<f64> = (0..=10).map(f64::from).collect();
        let h = histogram(&values, 0.0, 10.0);
        assert_eq!(h.len(), 10);
        assert_eq!(h.iter().map(|b| b.count).collect::<Vec<_>>(), vec![1, 1, 1, 1, 1, 1, 1, 1, 1, 2]);
        assert_eq!(h[9].upper, Decimal(10.0));
        let single = histogram(&[3.0, 3.0], 3.0, 3.0);
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].count, 2);
    }

    proptest::proptest! {
        #[test]
        fn inference_is_permutation_invariant(
            cells in proptest::collection::vec(proptest::prop_oneof![
                proptest::strategy::Just("1".to_string()),
                proptest::strategy::Just("2.5".to_string()),
                proptest::strategy::Just("true".to_string()),
                proptest::strategy::Just("".to_string()),
                proptest::strategy::Just("2024-01-01".to_string()),
                "[a-z]{1,3}",
            ], 1..20),
            seed in proptest::num::u64::ANY,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let refs: Vec<&str> = cells.iter().map(String::as_str).collect();
            let mut shuffled = refs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = profile_column("c", &refs);
            let b = profile_column("c", &shuffled);
            proptest::prop_assert_eq!(a.inferred_type, b.inferred_type);
            proptest::prop_assert_eq!(a.null_count, b.null_count);
            proptest::prop_assert_eq!(a.distinct_count, b.distinct_count);
            let counts = |c: &ColumnProfile| c.histogram.iter().map(|h| h.count).collect::<Vec<_>>();
            proptest::prop_assert_eq!(counts(&a), counts(&b));
        }
    }
}
