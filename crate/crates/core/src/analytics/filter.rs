//! Filter expressions over catalogued items.
//!
//! ```text
//! expr      := or
//! or        := and ("OR" and)*
//! and       := unary ("AND" unary)*
//! unary     := "NOT" unary | "(" expr ")" | predicate
//! predicate := "time(" col ")" "in" "[" bound "," bound "]"
//!            | "geo(" col ")" "in" "bbox(" lat_min "," lon_min "," lat_max "," lon_max ")"
//!            | "tag" "=" label
//!            | "annotator" "=" member
//!            | "status" "=" ("accepted" | "rejected" | "pending")
//!            | col cmp literal          cmp := = != < <= > >= ~
//! ```
//!
//! Keywords are case-insensitive. Names and literals are bare words or
//! double-quoted strings. `~` is a case-insensitive substring match.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::enrich::parse_instant;
use crate::ingest::geotemporal::parse_latlon;
use crate::metamodel::Verdict;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Contains,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Contains => "~",
        }
    }
}

/// Review state of an item: its latest verdict, or none.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusFilter {
    Accepted,
    Rejected,
    Pending,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterExpr {
    All,
    And(Box<FilterExpr>, Box<FilterExpr>),
    Or(Box<FilterExpr>, Box<FilterExpr>),
    Not(Box<FilterExpr>),
    Compare { column: String, op: CmpOp, value: String },
    /// Inclusive interval; the item's own interval must overlap it.
    Time { column: String, from: NaiveDateTime, to: NaiveDateTime },
    Geo { column: String, lat_min: f64, lon_min: f64, lat_max: f64, lon_max: f64 },
    Tag(String),
    Annotator(String),
    Status(StatusFilter),
}

/// What a filter can observe about one item.
pub trait Subject {
    fn field(&self, name: &str) -> Option<&str>;
    fn has_tag(&self, label: &str) -> bool;
    fn has_annotator(&self, member: &str) -> bool;
    fn status(&self) -> Option<Verdict>;
}

const KEYWORDS: [&str; 8] = ["and", "or", "not", "tag", "annotator", "status", "time", "geo"];

fn quote(s: &str) -> String {
    let keyword = KEYWORDS.iter().any(|k| s.eq_ignore_ascii_case(k));
    if !keyword && !s.is_empty() && s.chars().all(|c| !c.is_whitespace() && !"()[],=!<>~\"".contains(c)) {
        s.to_string()
    } else {
        format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

impl fmt::Display for FilterExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterExpr::All => Ok(()),
            FilterExpr::And(a, b) => write!(f, "({a} AND {b})"),
            FilterExpr::Or(a, b) => write!(f, "({a} OR {b})"),
            FilterExpr::Not(a) => write!(f, "NOT {a}"),
            FilterExpr::Compare { column, op, value } => write!(f, "{} {} {}", quote(column), op.symbol(), quote(value)),
            FilterExpr::Time { column, from, to } => write!(
                f,
                "time({}) in [{}, {}]",
                quote(column),
                from.format("%Y-%m-%dT%H:%M:%S%.fZ"),
                to.format("%Y-%m-%dT%H:%M:%S%.fZ")
            ),
            FilterExpr::Geo { column, lat_min, lon_min, lat_max, lon_max } => {
                write!(f, "geo({}) in bbox({lat_min}, {lon_min}, {lat_max}, {lon_max})", quote(column))
            }
            FilterExpr::Tag(l) => write!(f, "tag = {}", quote(l)),
            FilterExpr::Annotator(m) => write!(f, "annotator = {}", quote(m)),
            FilterExpr::Status(s) => write!(
                f,
                "status = {}",
                match s {
                    StatusFilter::Accepted => "accepted",
                    StatusFilter::Rejected => "rejected",
                    StatusFilter::Pending => "pending",
                }
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Open,
    Close,
    LBracket,
    RBracket,
    Comma,
    Op(CmpOp),
    Word(String),
    Quoted(String),
}

fn tokenize(text: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        let simple = match (c, next) {
            ('(', _) => Some((Tok::Open, 1)),
            (')', _) => Some((Tok::Close, 1)),
            ('[', _) => Some((Tok::LBracket, 1)),
            (']', _) => Some((Tok::RBracket, 1)),
            (',', _) => Some((Tok::Comma, 1)),
            ('~', _) => Some((Tok::Op(CmpOp::Contains), 1)),
            ('=', Some('=')) => Some((Tok::Op(CmpOp::Eq), 2)),
            ('=', _) => Some((Tok::Op(CmpOp::Eq), 1)),
            ('!', Some('=')) => Some((Tok::Op(CmpOp::Ne), 2)),
            ('<', Some('=')) => Some((Tok::Op(CmpOp::Le), 2)),
            ('>', Some('=')) => Some((Tok::Op(CmpOp::Ge), 2)),
            ('<', _) => Some((Tok::Op(CmpOp::Lt), 1)),
            ('>', _) => Some((Tok::Op(CmpOp::Gt), 1)),
            _ => None,
        };
        if let Some((tok, width)) = simple {
            out.push(tok);
            i += width;
            continue;
        }
        match c {
            c if c.is_whitespace() => i += 1,
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(Error::FilterParse("unterminated string".into())),
                        Some('"') => break,
                        Some('\\') if i + 1 < chars.len() => {
                            s.push(chars[i + 1]);
                            i += 2;
                        }
                        Some(ch) => {
                            s.push(*ch);
                            i += 1;
                        }
                    }
                }
                i += 1;
                out.push(Tok::Quoted(s));
            }
            '!' => return Err(Error::FilterParse("expected != ".into())),
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && !"()[],=!<>~\"".contains(chars[i]) {
                    i += 1;
                }
                out.push(Tok::Word(chars[start..i].iter().collect()));
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

fn keyword(tok: Option<&Tok>, kw: &str) -> bool {
    matches!(tok, Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: Tok) -> Result<()> {
        match self.bump() {
            Some(t) if t == tok => Ok(()),
            other => Err(Error::FilterParse(format!("expected {tok:?}, found {other:?}"))),
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if keyword(self.peek(), kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::FilterParse(format!("expected {kw}, found {:?}", self.peek())))
        }
    }

    fn text(&mut self) -> Result<String> {
        match self.bump() {
            Some(Tok::Word(w)) | Some(Tok::Quoted(w)) => Ok(w),
            other => Err(Error::FilterParse(format!("expected a name or literal, found {other:?}"))),
        }
    }

    fn number(&mut self) -> Result<f64> {
        let t = self.text()?;
        t.parse().map_err(|_| Error::FilterParse(format!("expected a number, found {t}")))
    }

    fn or(&mut self) -> Result<FilterExpr> {
        let mut left = self.and()?;
        while keyword(self.peek(), "or") {
            self.pos += 1;
            left = FilterExpr::Or(Box::new(left), Box::new(self.and()?));
        }
        Ok(left)
    }

    fn and(&mut self) -> Result<FilterExpr> {
        let mut left = self.unary()?;
        while keyword(self.peek(), "and") {
            self.pos += 1;
            left = FilterExpr::And(Box::new(left), Box::new(self.unary()?));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<FilterExpr> {
        if keyword(self.peek(), "not") {
            self.pos += 1;
            return Ok(FilterExpr::Not(Box::new(self.unary()?)));
        }
        if self.peek() == Some(&Tok::Open) {
            self.pos += 1;
            let e = self.or()?;
            self.expect(Tok::Close)?;
            return Ok(e);
        }
        self.predicate()
    }

    fn predicate(&mut self) -> Result<FilterExpr> {
        let call = self.peek_at(1) == Some(&Tok::Open);
        if call && keyword(self.peek(), "time") {
            self.pos += 2;
            let column = self.text()?;
            self.expect(Tok::Close)?;
            self.expect_kw("in")?;
            self.expect(Tok::LBracket)?;
            let a = self.text()?;
            self.expect(Tok::Comma)?;
            let b = self.text()?;
            self.expect(Tok::RBracket)?;
            let (from, _) = bound(&a)?;
            let (_, to) = bound(&b)?;
            return Ok(FilterExpr::Time { column, from, to });
        }
        if call && keyword(self.peek(), "geo") {
            self.pos += 2;
            let column = self.text()?;
            self.expect(Tok::Close)?;
            self.expect_kw("in")?;
            self.expect_kw("bbox")?;
            self.expect(Tok::Open)?;
            let mut v = [0.0; 4];
            for (k, slot) in v.iter_mut().enumerate() {
                if k > 0 {
                    self.expect(Tok::Comma)?;
                }
                *slot = self.number()?;
            }
            self.expect(Tok::Close)?;
            if v[0] > v[2] || v[1] > v[3] {
                return Err(Error::FilterParse("bbox minimum exceeds maximum".into()));
            }
            return Ok(FilterExpr::Geo {
                column,
                lat_min: v[0],
                lon_min: v[1],
                lat_max: v[2],
                lon_max: v[3],
            });
        }
        let bare = matches!(self.peek(), Some(Tok::Word(_)));
        let name = self.text()?;
        let op = match self.bump() {
            Some(Tok::Op(op)) => op,
            other => return Err(Error::FilterParse(format!("expected a comparison after {name}, found {other:?}"))),
        };
        let value = self.text()?;
        let special = bare && op == CmpOp::Eq;
        Ok(match name.to_ascii_lowercase().as_str() {
            "tag" if special => FilterExpr::Tag(value),
            "annotator" if special => FilterExpr::Annotator(value),
            "status" if special => FilterExpr::Status(match value.to_ascii_lowercase().as_str() {
                "accepted" | "accept" => StatusFilter::Accepted,
                "rejected" | "reject" => StatusFilter::Rejected,
                "pending" | "none" => StatusFilter::Pending,
                other => return Err(Error::FilterParse(format!("unknown status {other}"))),
            }),
            _ => FilterExpr::Compare { column: name, op, value },
        })
    }
}

/// First and last instant covered by a bound: a year, a month, a day or an
/// RFC 3339 instant.
pub fn bound(text: &str) -> Result<(NaiveDateTime, NaiveDateTime)> {
    let bad = || Error::FilterParse(format!("bad time bound {text}"));
    let day_end = |d: NaiveDate| d.and_time(NaiveTime::from_hms_nano_opt(23, 59, 59, 999_999_999).expect("valid time"));
    let parts: Vec<&str> = text.split('-').collect();
    if let Ok(d) = NaiveDate::parse_from_str(text, "%Y-%m-%d") {
        return Ok((d.and_time(NaiveTime::MIN), day_end(d)));
    }
    if parts.len() == 2 && parts[0].len() == 4 {
        let y: i32 = parts[0].parse().map_err(|_| bad())?;
        let m: u32 = parts[1].parse().map_err(|_| bad())?;
        let first = NaiveDate::from_ymd_opt(y, m, 1).ok_or_else(bad)?;
        let next = if m == 12 {
            NaiveDate::from_ymd_opt(y + 1, 1, 1)
        } else {
            NaiveDate::from_ymd_opt(y, m + 1, 1)
        }
        .ok_or_else(bad)?;
        return Ok((first.and_time(NaiveTime::MIN), day_end(next.pred_opt().ok_or_else(bad)?)));
    }
    if parts.len() == 1 && text.len() == 4 {
        let y: i32 = text.parse().map_err(|_| bad())?;
        let first = NaiveDate::from_ymd_opt(y, 1, 1).ok_or_else(bad)?;
        let last = NaiveDate::from_ymd_opt(y, 12, 31).ok_or_else(bad)?;
        return Ok((first.and_time(NaiveTime::MIN), day_end(last)));
    }
    if let Ok(t) = chrono::DateTime::parse_from_rfc3339(text) {
        let t = t.naive_utc();
        return Ok((t, t));
    }
    Err(bad())
}

/// Interval covered by a cell; dates cover the whole day.
pub(crate) fn cell_interval(text: &str) -> Option<(NaiveDateTime, NaiveDateTime)> {
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    if text.len() == 10 {
        if let Ok(d) = NaiveDate::parse_from_str(text, "%Y-%m-%d") {
            return bound(&format!("{:04}-{:02}-{:02}", d.year(), d.month(), d.day())).ok();
        }
    }
    parse_instant(text).map(|t| (t.naive_utc(), t.naive_utc()))
}

impl FilterExpr {
    pub fn parse(text: &str) -> Result<FilterExpr> {
        let toks = tokenize(text)?;
        if toks.is_empty() {
            return Ok(FilterExpr::All);
        }
        let mut p = Parser { toks, pos: 0 };
        let e = p.or()?;
        if p.pos != p.toks.len() {
            return Err(Error::FilterParse(format!("unexpected {:?}", p.toks[p.pos])));
        }
        Ok(e)
    }

    /// Columns and labels the expression needs, checked against what the
    /// queried scope offers.
    pub fn check(&self, columns: &BTreeSet<String>, labels: &BTreeSet<String>) -> Result<()> {
        let has = |c: &str| columns.contains(c);
        match self {
            FilterExpr::All | FilterExpr::Annotator(_) | FilterExpr::Status(_) => Ok(()),
            FilterExpr::And(a, b) | FilterExpr::Or(a, b) => {
                a.check(columns, labels)?;
                b.check(columns, labels)
            }
            FilterExpr::Not(a) => a.check(columns, labels),
            FilterExpr::Compare { column, .. } => {
                if has(column) {
                    Ok(())
                } else {
                    Err(Error::UnknownColumn(column.clone()))
                }
            }
            FilterExpr::Time { column, .. } => {
                if has(column) || (has(&format!("{column}_start")) && has(&format!("{column}_end"))) {
                    Ok(())
                } else {
                    Err(Error::UnknownColumn(column.clone()))
                }
            }
            FilterExpr::Geo { column, .. } => {
                if has(column) || (has(&format!("{column}_lat")) && has(&format!("{column}_lon"))) {
                    Ok(())
                } else {
                    Err(Error::UnknownColumn(column.clone()))
                }
            }
            FilterExpr::Tag(l) => {
                if labels.contains(l) {
                    Ok(())
                } else {
                    Err(Error::UnknownLabel(l.clone()))
                }
            }
        }
    }

    pub fn matches(&self, s: &dyn Subject) -> bool {
        match self {
            FilterExpr::All => true,
            FilterExpr::And(a, b) => a.matches(s) && b.matches(s),
            FilterExpr::Or(a, b) => a.matches(s) || b.matches(s),
            FilterExpr::Not(a) => !a.matches(s),
            FilterExpr::Compare { column, op, value } => s.field(column).is_some_and(|cell| compare(cell, *op, value)),
            FilterExpr::Time { column, from, to } => {
                let span = match (s.field(&format!("{column}_start")), s.field(&format!("{column}_end"))) {
                    (Some(a), Some(b)) => cell_interval(a).zip(cell_interval(b)).map(|(a, b)| (a.0, b.1)),
                    _ => s.field(column).and_then(cell_interval),
                };
                span.is_some_and(|(a, b)| a <= *to && b >= *from)
            }
            FilterExpr::Geo { column, lat_min, lon_min, lat_max, lon_max } => {
                let point = match (s.field(&format!("{column}_lat")), s.field(&format!("{column}_lon"))) {
                    (Some(a), Some(b)) => a.trim().parse::<f64>().ok().zip(b.trim().parse::<f64>().ok()),
                    _ => s.field(column).and_then(parse_latlon),
                };
                point.is_some_and(|(lat, lon)| lat >= *lat_min && lat <= *lat_max && lon >= *lon_min && lon <= *lon_max)
            }
            FilterExpr::Tag(l) => s.has_tag(l),
            FilterExpr::Annotator(m) => s.has_annotator(m),
            FilterExpr::Status(want) => match (want, s.status()) {
                (StatusFilter::Accepted, Some(Verdict::Accepted)) => true,
                (StatusFilter::Rejected, Some(Verdict::Rejected)) => true,
                (StatusFilter::Pending, None) => true,
                _ => false,
            },
        }
    }
}

/// Numeric when both sides parse as numbers, text otherwise.
fn compare(cell: &str, op: CmpOp, value: &str) -> bool {
    let cell = cell.trim();
    if op == CmpOp::Contains {
        return cell.to_lowercase().contains(&value.to_lowercase());
    }
    let ord = match (cell.parse::<f64>(), value.parse::<f64>()) {
        (Ok(a), Ok(b)) => match a.partial_cmp(&b) {
            Some(o) => o,
            None => return false,
        },
        _ => cell.cmp(value),
    };
    use std::cmp::Ordering::*;
    match op {
        CmpOp::Eq => ord == Equal,
        CmpOp::Ne => ord != Equal,
        CmpOp::Lt => ord == Less,
        CmpOp::Le => ord != Greater,
        CmpOp::Gt => ord == Greater,
        CmpOp::Ge => ord != Less,
        CmpOp::Contains => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[derive(Default)]
    struct Row {
        fields: BTreeMap<String, String>,
        tags: Vec<String>,
        annotators: Vec<String>,
        status: Option<Verdict>,
    }

    impl Subject for Row {
        fn field(&self, name: &str) -> Option<&str> {
            self.fields.get(name).map(String::as_str)
        }
        fn has_tag(&self, label: &str) -> bool {
            self.tags.iter().any(|t| t == label)
        }
        fn has_annotator(&self, member: &str) -> bool {
            self.annotators.iter().any(|t| t == member)
        }
        fn status(&self) -> Option<Verdict> {
            self.status
        }
    }

    fn row(pairs: &[(&str, &str)]) -> Row {
        Row {
            fields: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn parses_and_matches() {
        let r = row(&[("x", "5"), ("name", "Aurelia aurita"), ("seen_start", "2023-01-10"), ("seen_end", "2023-01-12"), ("place", "-17.7,-39.2")]);
        let yes = [
            "x > 1",
            "x >= 5 AND x <= 5",
            "name ~ AURELIA",
            "NOT x = 4",
            "time(seen) in [2023-01, 2023-03]",
            "time(seen) in [2023-01-12, 2023-02-01]",
            "geo(place) in bbox(-20, -41, -15, -38)",
            "(x < 0 OR name = \"Aurelia aurita\") and status = pending",
        ];
        for f in yes {
            assert!(FilterExpr::parse(f).unwrap().matches(&r), "{f}");
        }
        let no = ["x > 1 AND x < 0", "time(seen) in [2023-01-13, 2023-12]", "geo(place) in bbox(0, 0, 1, 1)", "tag = x"];
        for f in no {
            assert!(!FilterExpr::parse(f).unwrap().matches(&r), "{f}");
        }
        assert_eq!(FilterExpr::parse("  ").unwrap(), FilterExpr::All);
    }

    #[test]
    fn parse_errors() {
        for bad in ["x >", "(x = 1", "time(x) in [2023-13, 2024]", "x = 1 y", "status = maybe", "\"open"] {
            assert!(matches!(FilterExpr::parse(bad), Err(Error::FilterParse(_))), "{bad}");
        }
    }

    #[test]
    fn check_reports_unknowns() {
        let cols: BTreeSet<String> = ["x".to_string(), "t_start".into(), "t_end".into()].into();
        let labels: BTreeSet<String> = ["graffiti".to_string()].into();
        assert!(FilterExpr::parse("x = 1 AND time(t) in [2020, 2021] AND tag = graffiti").unwrap().check(&cols, &labels).is_ok());
        assert!(matches!(FilterExpr::parse("y = 1").unwrap().check(&cols, &labels), Err(Error::UnknownColumn(c)) if c == "y"));
        assert!(matches!(FilterExpr::parse("tag = nope").unwrap().check(&cols, &labels), Err(Error::UnknownLabel(_))));
    }

    proptest::proptest! {
        #[test]
        fn display_round_trips(a in -5i32..5, b in -5i32..5, word in "[a-z ]{1,6}", negate: bool) {
            let text = format!("x > {a} AND (y <= {b} OR name ~ \"{word}\")");
            let text = if negate { format!("NOT ({text})") } else { text };
            let e = FilterExpr::parse(&text).unwrap();
            proptest::prop_assert_eq!(FilterExpr::parse(&e.to_string()).unwrap(), e);
        }

        #[test]
        fn or_is_union(x in -10i32..10, lo in -10i32..10, hi in -10i32..10) {
            let r = row(&[("x", &x.to_string())]);
            let f1 = FilterExpr::parse(&format!("x < {lo}")).unwrap();
            let f2 = FilterExpr::parse(&format!("x > {hi}")).unwrap();
            let both = FilterExpr::Or(Box::new(f1.clone()), Box::new(f2.clone()));
            proptest::prop_assert_eq!(both.matches(&r), f1.matches(&r) || f2.matches(&r));
        }
    }
}
