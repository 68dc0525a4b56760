//! Resolution of vague geo-temporal expressions through a rule table.
//!
//! Each rule is one JSON line `{pattern, kind, resolution}`. Patterns are
//! case-insensitive regexes matched against the whole trimmed value; the
//! resolution is a template that may refer to capture groups as `$1`.
//!
//! Templates:
//!
//! | template                  | kind     | meaning                                   |
//! |---------------------------|----------|-------------------------------------------|
//! | `season:<name>:last|this` | interval | astronomical season in the hemisphere     |
//! | `year:last|this`          | interval | calendar year                             |
//! | `month:last|this`         | interval | calendar month                            |
//! | `days:N`                  | interval | the N days up to and including reference |
//! | `ago:N`                   | interval | the single day N days before reference    |
//! | `date:YYYY-MM-DD`         | interval | one day                                   |
//! | `range:A/B`               | interval | inclusive day range                       |
//! | `now`                     | point    | the reference instant                     |
//! | `instant:<rfc3339>`       | point    | a fixed instant                           |
//! | `geo:lat,lon`             | point    | a location                                |
//!
//! RFC 3339 timestamps, `YYYY-MM-DD`, `YYYY-MM` and `lat,lon` pairs pass
//! through before any rule is consulted. Nothing is guessed: a value no rule
//! matches is [`Resolution::Unresolved`].

use chrono::{DateTime, Datelike, Duration, NaiveDate, Utc};
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metamodel::{Hemisphere, Timestamp};

pub const BUNDLED_RULES: &str = include_str!("../../assets/geotemporal_rules.jsonl");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Interval,
    Point,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RuleLine {
    pattern: String,
    kind: RuleKind,
    resolution: String,
}

#[derive(Clone, Debug)]
pub struct Rule {
    pub pattern: String,
    pub kind: RuleKind,
    pub resolution: String,
    regex: Regex,
}

#[derive(Clone, Debug)]
pub struct RuleTable {
    pub rules: Vec<Rule>,
    pub hemisphere: Hemisphere,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Resolution {
    /// Inclusive day range.
    Interval { start: NaiveDate, end: NaiveDate },
    Instant { at: Timestamp },
    Location { lat: f64, lon: f64 },
    Unresolved,
}

impl Resolution {
    pub fn is_resolved(&self) -> bool {
        !matches!(self, Resolution::Unresolved)
    }
}

impl RuleTable {
    pub fn bundled(hemisphere: Hemisphere) -> Self {
        RuleTable::from_jsonl(BUNDLED_RULES, hemisphere).expect("bundled rule table parses")
    }

    pub fn empty(hemisphere: Hemisphere) -> Self {
        RuleTable {
            rules: Vec::new(),
            hemisphere,
        }
    }

    pub fn from_jsonl(text: &str, hemisphere: Hemisphere) -> Result<Self> {
        let mut rules = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let raw: RuleLine = serde_json::from_str(line)?;
            let regex = RegexBuilder::new(&format!("^(?:{})$", raw.pattern))
                .case_insensitive(true)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("rule {}: {e}", n + 1)))?;
            let expected = template_kind(&raw.resolution)
                .ok_or_else(|| Error::InvalidArgument(format!("rule {}: unknown template {}", n + 1, raw.resolution)))?;
            if expected != raw.kind {
                return Err(Error::InvalidArgument(format!(
                    "rule {}: template {} is not of kind {:?}",
                    n + 1,
                    raw.resolution,
                    raw.kind
                )));
            }
            rules.push(Rule {
                pattern: raw.pattern,
                kind: raw.kind,
                resolution: raw.resolution,
                regex,
            });
        }
        Ok(RuleTable { rules, hemisphere })
    }

    pub fn resolve(&self, value: &str, reference: Timestamp) -> Resolution {
        resolve_geotemporal(value, reference, self)
    }
}

fn template_kind(template: &str) -> Option<RuleKind> {
    let head = template.split(':').next()?;
    match head {
        "season" | "year" | "month" | "days" | "ago" | "date" | "range" => Some(RuleKind::Interval),
        "now" | "instant" | "geo" => Some(RuleKind::Point),
        _ => None,
    }
}

pub fn resolve_geotemporal(value: &str, reference: Timestamp, rules: &RuleTable) -> Resolution {
    let value = value.trim();
    if value.is_empty() {
        return Resolution::Unresolved;
    }
    if let Some(r) = passthrough(value) {
        return r;
    }
    for rule in &rules.rules {
        if let Some(caps) = rule.regex.captures(value) {
            let mut template = String::new();
            caps.expand(&rule.resolution, &mut template);
            return apply_template(&template, reference, rules.hemisphere).unwrap_or(Resolution::Unresolved);
        }
    }
    Resolution::Unresolved
}

fn passthrough(value: &str) -> Option<Resolution> {
    if let Ok(at) = DateTime::parse_from_rfc3339(value) {
        return Some(Resolution::Instant {
            at: at.with_timezone(&Utc),
        });
    }
    if let Ok(day) = NaiveDate::parse_from_str(value, "%Y-%m-%d") {
        return Some(Resolution::Interval { start: day, end: day });
    }
    if value.len() == 7 {
        if let Ok(first) = NaiveDate::parse_from_str(&format!("{value}-01"), "%Y-%m-%d") {
            return Some(month_interval(first.year(), first.month()));
        }
    }
    parse_latlon(value).map(|(lat, lon)| {
        if valid_latlon(lat, lon) {
            Resolution::Location { lat, lon }
        } else {
            Resolution::Unresolved
        }
    })
}

/// Parses `lat,lon` without range checks.
pub fn parse_latlon(text: &str) -> Option<(f64, f64)> {
    let (a, b) = text.split_once(',')?;
    let lat: f64 = a.trim().parse().ok()?;
    let lon: f64 = b.trim().parse().ok()?;
    (lat.is_finite() && lon.is_finite()).then_some((lat, lon))
}

pub fn valid_latlon(lat: f64, lon: f64) -> bool {
    (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)
}

fn apply_template(template: &str, reference: Timestamp, hemisphere: Hemisphere) -> Option<Resolution> {
    let today = reference.date_naive();
    let mut parts = template.splitn(2, ':');
    let head = parts.next()?;
    let rest = parts.next().unwrap_or("");
    match head {
        "season" => {
            let (name, which) = rest.split_once(':')?;
            let (start, end) = season(name, which, today, hemisphere)?;
            Some(Resolution::Interval { start, end })
        }
        "year" => {
            let y = match rest {
                "this" => today.year(),
                "last" => today.year() - 1,
                _ => return None,
            };
            Some(Resolution::Interval {
                start: NaiveDate::from_ymd_opt(y, 1, 1)?,
                end: NaiveDate::from_ymd_opt(y, 12, 31)?,
            })
        }
        "month" => {
            let (y, m) = match rest {
                "this" => (today.year(), today.month()),
                "last" if today.month() == 1 => (today.year() - 1, 12),
                "last" => (today.year(), today.month() - 1),
                _ => return None,
            };
            Some(month_interval(y, m))
        }
        "days" => {
            let n: i64 = rest.parse().ok()?;
            Some(Resolution::Interval {
                start: today - Duration::days(n),
                end: today,
            })
        }
        "ago" => {
            let n: i64 = rest.parse().ok()?;
            let day = today - Duration::days(n);
            Some(Resolution::Interval { start: day, end: day })
        }
        "date" => {
            let day = NaiveDate::parse_from_str(rest, "%Y-%m-%d").ok()?;
            Some(Resolution::Interval { start: day, end: day })
        }
        "range" => {
            let (a, b) = rest.split_once('/')?;
            let start = NaiveDate::parse_from_str(a, "%Y-%m-%d").ok()?;
            let end = NaiveDate::parse_from_str(b, "%Y-%m-%d").ok()?;
            (start <= end).then_some(Resolution::Interval { start, end })
        }
        "now" => Some(Resolution::Instant { at: reference }),
        "instant" => DateTime::parse_from_rfc3339(rest)
            .ok()
            .map(|at| Resolution::Instant { at: at.with_timezone(&Utc) }),
        "geo" => {
            let (lat, lon) = parse_latlon(rest)?;
            valid_latlon(lat, lon).then_some(Resolution::Location { lat, lon })
        }
        _ => None,
    }
}

fn month_interval(y: i32, m: u32) -> Resolution {
    let start = NaiveDate::from_ymd_opt(y, m, 1).expect("valid month");
    let next = if m == 12 {
        NaiveDate::from_ymd_opt(y + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(y, m + 1, 1)
    }
    .expect("valid month");
    Resolution::Interval {
        start,
        end: next - Duration::days(1),
    }
}

/// Boundaries `(start month, start day, end month, end day)`; the end may
/// fall in the following calendar year. Southern seasons are the northern
/// ones shifted by half a year.
fn season_bounds(name: &str, hemisphere: Hemisphere) -> Option<(u32, u32, u32, u32)> {
    const MAR_JUN: (u32, u32, u32, u32) = (3, 21, 6, 20);
    const JUN_SEP: (u32, u32, u32, u32) = (6, 21, 9, 22);
    const SEP_DEC: (u32, u32, u32, u32) = (9, 23, 12, 20);
    const DEC_MAR: (u32, u32, u32, u32) = (12, 21, 3, 20);
    let south = hemisphere == Hemisphere::Southern;
    match name {
        "spring" => Some(if south { SEP_DEC } else { MAR_JUN }),
        "summer" => Some(if south { DEC_MAR } else { JUN_SEP }),
        "autumn" | "fall" => Some(if south { MAR_JUN } else { SEP_DEC }),
        "winter" => Some(if south { JUN_SEP } else { DEC_MAR }),
        _ => None,
    }
}

fn occurrence(bounds: (u32, u32, u32, u32), start_year: i32) -> Option<(NaiveDate, NaiveDate)> {
    let (sm, sd, em, ed) = bounds;
    let start = NaiveDate::from_ymd_opt(start_year, sm, sd)?;
    let end_year = if em < sm { start_year + 1 } else { start_year };
    let end = NaiveDate::from_ymd_opt(end_year, em, ed)?;
    Some((start, end))
}

fn season(name: &str, which: &str, today: NaiveDate, hemisphere: Hemisphere) -> Option<(NaiveDate, NaiveDate)> {
    let bounds = season_bounds(name, hemisphere)?;
    let candidates: Vec<(NaiveDate, NaiveDate)> = (today.year() - 2..=today.year() + 1)
        .filter_map(|y| occurrence(bounds, y))
        .collect();
    match which {
        "this" => candidates.into_iter().find(|(s, e)| *s <= today && today <= *e),
        "last" => candidates.into_iter().filter(|(_, e)| *e < today).max_by_key(|(_, e)| *e),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn at(y: i32, m: u32, day: u32) -> Timestamp {
        Utc.with_ymd_and_hms(y, m, day, 12, 0, 0).unwrap()
    }

    #[test]
    fn last_summer_southern() {
        let rules = RuleTable::bundled(Hemisphere::Southern);
        assert_eq!(
            rules.resolve("last summer", at(2023, 5, 10)),
            Resolution::Interval { start: d(2022, 12, 21), end: d(2023, 3, 20) }
        );
    }

    #[test]
    fn last_summer_northern() {
        let rules = RuleTable::bundled(Hemisphere::Northern);
        assert_eq!(
            rules.resolve("Last Summer", at(2023, 5, 10)),
            Resolution::Interval { start: d(2022, 6, 21), end: d(2022, 9, 22) }
        );
    }

    #[test]
    fn southern_seasons_partition_the_year() {
        let rules = RuleTable::bundled(Hemisphere::Southern);
        let mut day = d(2023, 1, 1);
        while day.year() == 2023 {
            let reference = Utc.from_utc_datetime(&day.and_hms_opt(0, 0, 0).unwrap());
            let hits = ["spring", "summer", "autumn", "winter"]
                .iter()
                .filter(|s| rules.resolve(&format!("this {s}"), reference).is_resolved())
                .count();
            assert_eq!(hits, 1, "{day}");
            day += Duration::days(1);
        }
    }

    #[test]
    fn rfc3339_passes_through() {
        let rules = RuleTable::bundled(Hemisphere::Northern);
        assert_eq!(
            rules.resolve("2023-02-01T10:00:00Z", at(2024, 1, 1)),
            Resolution::Instant { at: Utc.with_ymd_and_hms(2023, 2, 1, 10, 0, 0).unwrap() }
        );
    }

    #[test]
    fn unmatched_is_unresolved() {
        let rules = RuleTable::bundled(Hemisphere::Northern);
        assert_eq!(rules.resolve("sometime ago", at(2023, 1, 1)), Resolution::Unresolved);
        assert_eq!(rules.resolve("", at(2023, 1, 1)), Resolution::Unresolved);
    }

    #[test]
    fn coordinates_are_range_checked() {
        let rules = RuleTable::empty(Hemisphere::Northern);
        assert_eq!(
            rules.resolve("-17.7, -39.2", at(2023, 1, 1)),
            Resolution::Location { lat: -17.7, lon: -39.2 }
        );
        assert_eq!(rules.resolve("95.0,10.0", at(2023, 1, 1)), Resolution::Unresolved);
        assert_eq!(rules.resolve("10.0,-181", at(2023, 1, 1)), Resolution::Unresolved);
    }

    #[test]
    fn captures_and_calendar_templates() {
        let rules = RuleTable::bundled(Hemisphere::Northern);
        let r = at(2023, 3, 15);
        assert_eq!(rules.resolve("3 days ago", r), Resolution::Interval { start: d(2023, 3, 12), end: d(2023, 3, 12) });
        assert_eq!(rules.resolve("last month", at(2023, 1, 5)), Resolution::Interval { start: d(2022, 12, 1), end: d(2022, 12, 31) });
        assert_eq!(rules.resolve("2024-02", r), Resolution::Interval { start: d(2024, 2, 1), end: d(2024, 2, 29) });
        assert_eq!(rules.resolve("last year", r), Resolution::Interval { start: d(2022, 1, 1), end: d(2022, 12, 31) });
        assert!(matches!(rules.resolve("Caravelas, BA", r), Resolution::Location { .. }));
    }

    #[test]
    fn kind_must_match_template() {
        let bad = r#"{"pattern":"x","kind":"point","resolution":"year:last"}"#;
        assert!(RuleTable::from_jsonl(bad, Hemisphere::Northern).is_err());
        let unknown = r#"{"pattern":"x","kind":"point","resolution":"moon:full"}"#;
        assert!(RuleTable::from_jsonl(unknown, Hemisphere::Northern).is_err());
    }

    proptest::proptest! {
        #[test]
        fn last_season_ends_before_reference(days in 0i64..20_000, idx in 0usize..4, south in proptest::bool::ANY) {
            let hemisphere = if south { Hemisphere::Southern } else { Hemisphere::Northern };
            let rules = RuleTable::bundled(hemisphere);
            let reference = Utc.with_ymd_and_hms(1990, 1, 1, 0, 0, 0).unwrap() + Duration::days(days);
            let name = ["spring", "summer", "autumn", "winter"][idx];
            match rules.resolve(&format!("last {name}"), reference) {
                Resolution::Interval { start, end } => {
                    proptest::prop_assert!(end < reference.date_naive());
                    proptest::prop_assert!(start < end);
                    proptest::prop_assert!((end - start).num_days() < 100);
                }
                other => proptest::prop_assert!(false, "{:?}", other),
            }
        }
    }
}
