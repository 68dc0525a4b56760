//! Derived columns: resolved time intervals, geopoints and source grades.

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::geotemporal::{Resolution, RuleTable};
use super::table::StagedTable;
use crate::error::Result;
use crate::metamodel::Timestamp;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReliabilityRule {
    pub column: String,
    pub equals: String,
    pub grade: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnrichRules {
    /// Each gains `<col>_start` and `<col>_end`.
    #[serde(default)]
    pub time_columns: Vec<String>,
    /// Each gains `<col>_lat` and `<col>_lon`.
    #[serde(default)]
    pub geo_columns: Vec<String>,
    /// Per-row reference instant for relative expressions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Timestamp>,
    /// First matching rule wins; adds a `reliability` column.
    #[serde(default)]
    pub reliability: Vec<ReliabilityRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_grade: Option<String>,
}

impl EnrichRules {
    pub fn is_empty(&self) -> bool {
        self.time_columns.is_empty() && self.geo_columns.is_empty() && self.reliability.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichReport {
    pub resolved: usize,
    pub unresolved: usize,
    pub graded: usize,
}

pub const RELIABILITY_COLUMN: &str = "reliability";

/// Parses a reference or filter bound: RFC 3339, or a date at midnight UTC.
pub fn parse_instant(text: &str) -> Option<Timestamp> {
    let t = text.trim();
    if let Ok(at) = DateTime::parse_from_rfc3339(t) {
        return Some(at.with_timezone(&Utc));
    }
    NaiveDate::parse_from_str(t, "%Y-%m-%d")
        .ok()
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
}

pub fn enrich(table: &StagedTable, rules: &EnrichRules, geo: &RuleTable) -> Result<(StagedTable, EnrichReport)> {
    let mut report = EnrichReport::default();
    if rules.is_empty() {
        return Ok((table.clone(), report));
    }
    let time_idx: Vec<usize> = rules.time_columns.iter().map(|c| table.column(c)).collect::<Result<_>>()?;
    let geo_idx: Vec<usize> = rules.geo_columns.iter().map(|c| table.column(c)).collect::<Result<_>>()?;
    let ref_idx = rules.reference_column.as_deref().map(|c| table.column(c)).transpose()?;
    let grade_idx: Vec<usize> = rules.reliability.iter().map(|r| table.column(&r.column)).collect::<Result<_>>()?;

    let mut header = table.header.clone();
    for c in &rules.time_columns {
        header.push(format!("{c}_start"));
        header.push(format!("{c}_end"));
    }
    for c in &rules.geo_columns {
        header.push(format!("{c}_lat"));
        header.push(format!("{c}_lon"));
    }
    if !rules.reliability.is_empty() {
        header.push(RELIABILITY_COLUMN.to_string());
    }

    let mut rows = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let reference = ref_idx.and_then(|i| parse_instant(&row[i])).or(rules.reference);
        let mut out = row.clone();
        for &i in &time_idx {
            let resolved = reference.map(|r| geo.resolve(&row[i], r));
            let (start, end) = match resolved {
                Some(Resolution::Interval { start, end }) => (start.to_string(), end.to_string()),
                Some(Resolution::Instant { at }) => {
                    let s = at.to_rfc3339_opts(SecondsFormat::AutoSi, true);
                    (s.clone(), s)
                }
                _ => (String::new(), String::new()),
            };
            tally(&mut report, !start.is_empty());
            out.push(start);
            out.push(end);
        }
        for &i in &geo_idx {
            let resolved = reference.map(|r| geo.resolve(&row[i], r)).unwrap_or_else(|| {
                geo.resolve(&row[i], DateTime::<Utc>::UNIX_EPOCH)
            });
            let (lat, lon) = match resolved {
                Resolution::Location { lat, lon } => (lat.to_string(), lon.to_string()),
                _ => (String::new(), String::new()),
            };
            tally(&mut report, !lat.is_empty());
            out.push(lat);
            out.push(lon);
        }
        if !rules.reliability.is_empty() {
            let grade = rules
                .reliability
                .iter()
                .zip(&grade_idx)
                .find(|(rule, &i)| row[i].trim().eq_ignore_ascii_case(rule.equals.trim()))
                .map(|(rule, _)| rule.grade.clone())
                .or_else(|| rules.default_grade.clone())
                .unwrap_or_default();
            if !grade.is_empty() {
                report.graded += 1;
            }
            out.push(grade);
        }
        rows.push(out);
    }
    Ok((
        StagedTable {
            header,
            rows,
            source_uri: table.source_uri.clone(),
        },
        report,
    ))
}

fn tally(report: &mut EnrichReport, resolved: bool) {
    if resolved {
        report.resolved += 1;
    } else {
        report.unresolved += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::metamodel::Hemisphere;

    fn posts() -> StagedTable {
        StagedTable::new(
            vec!["ID".into(), "source".into(), "when".into(), "posted_at".into(), "location".into()],
            vec![
                vec!["1".into(), "instagram".into(), "last summer".into(), "2023-05-10T09:00:00Z".into(), "Caravelas".into()],
                vec!["2".into(), "Instagram".into(), "sometime ago".into(), "2023-05-10T09:00:00Z".into(), "-17.7,-39.2".into()],
            ],
        )
    }

    fn rules() -> EnrichRules {
        EnrichRules {
            time_columns: vec!["when".into()],
            geo_columns: vec!["location".into()],
            reference_column: Some("posted_at".into()),
            reliability: vec![ReliabilityRule { column: "source".into(), equals: "instagram".into(), grade: "B".into() }],
            ..Default::default()
        }
    }

    #[test]
    fn last_summer_gains_interval() {
        let (t, report) = enrich(&posts(), &rules(), &RuleTable::bundled(Hemisphere::Southern)).unwrap();
        assert_eq!(t.cell(0, "when_start").unwrap(), "2022-12-21");
        assert_eq!(t.cell(0, "when_end").unwrap(), "2023-03-20");
        assert_eq!(t.cell(1, "when_start").unwrap(), "");
        assert_eq!(t.cell(1, "location_lat").unwrap(), "-17.7");
        assert_eq!(report.unresolved, 1);
        assert_eq!(report.resolved, 3);
    }

    #[test]
    fn originals_untouched() {
        let input = posts();
        let (t, _) = enrich(&input, &rules(), &RuleTable::bundled(Hemisphere::Southern)).unwrap();
        for (a, b) in input.rows.iter().zip(&t.rows) {
            assert_eq!(&b[..a.len()], &a[..]);
        }
    }

    #[test]
    fn empty_rules_identity() {
        let input = posts();
        let (t, report) = enrich(&input, &EnrichRules::default(), &RuleTable::bundled(Hemisphere::Southern)).unwrap();
        assert_eq!(t, input);
        assert_eq!(report, EnrichReport::default());
    }

    #[test]
    fn reliability_grade_applies_to_all_rows() {
        let r = EnrichRules { reliability: rules().reliability, ..Default::default() };
        let (t, report) = enrich(&posts(), &r, &RuleTable::bundled(Hemisphere::Southern)).unwrap();
        assert_eq!(t.column_values(RELIABILITY_COLUMN).unwrap(), vec!["B", "B"]);
        assert_eq!(report.graded, 2);
    }

    #[test]
    fn unknown_column_rejected() {
        let r = EnrichRules { time_columns: vec!["nope".into()], ..Default::default() };
        assert!(matches!(
            enrich(&posts(), &r, &RuleTable::empty(Hemisphere::Northern)),
            Err(Error::UnknownColumn(_))
        ));
    }
}
