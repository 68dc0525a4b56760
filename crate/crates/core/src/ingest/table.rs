//! Delimited-text extraction and row cleaning.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metamodel::canonical_encode;

/// CSV dialect; defaults to `,` and `"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialect {
    pub delimiter: u8,
    pub quote: u8,
}

impl Default for Dialect {
    fn default() -> Self {
        Dialect {
            delimiter: b',',
            quote: b'"',
        }
    }
}

/// Extracted rows with the header taken from the first record.
///
/// The payload identity of a table is `{header, rows}`; the source URI is
/// provenance and stays out of the encoding.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagedTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    #[serde(skip)]
    pub source_uri: String,
}

impl StagedTable {
    pub fn new(header: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        StagedTable {
            header,
            rows,
            source_uri: String::new(),
        }
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.header.iter().any(|h| h == name)
    }

    /// Cells of one column, top to bottom.
    pub fn column_values(&self, name: &str) -> Result<Vec<&str>> {
        let i = self.column(name)?;
        Ok(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn cell(&self, row: usize, name: &str) -> Result<&str> {
        let i = self.column(name)?;
        self.rows
            .get(row)
            .map(|r| r[i].as_str())
            .ok_or_else(|| Error::InvalidArgument(format!("row {row} out of range")))
    }

    /// Canonical payload bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        canonical_encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let table: StagedTable = serde_json::from_slice(bytes)?;
        table.check_arity()?;
        Ok(table)
    }

    fn check_arity(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.header.len() {
                return Err(Error::RaggedRow(i + 2));
            }
        }
        Ok(())
    }

    /// Renders RFC-4180 CSV with a header row.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer.write_record(&self.header)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        writer
            .into_inner()
            .map_err(|e| Error::InvalidArgument(format!("csv writer: {e}")))
    }
}

/// A cell counts as null when it is empty after trimming.
pub fn is_null(cell: &str) -> bool {
    cell.trim().is_empty()
}

/// Parses delimited text; the first record is the header.
pub fn parse_tabular(bytes: &[u8], dialect: Dialect, source_uri: &str) -> Result<StagedTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(dialect.delimiter)
        .quote(dialect.quote)
        .from_reader(bytes);
    let mut records = reader.records();
    let header: Vec<String> = match records.next() {
        None => return Err(Error::EmptySource(source_uri.to_string())),
        Some(r) => r?.iter().map(|s| s.trim_start_matches('\u{feff}').to_string()).collect(),
    };
    let mut rows = Vec::new();
    for (i, record) in records.enumerate() {
        let record = record?;
        if record.len() != header.len() {
            // 1-based file row, header included.
            return Err(Error::RaggedRow(i + 2));
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(StagedTable {
        header,
        rows,
        source_uri: source_uri.to_string(),
    })
}

pub fn extract_tabular(path: impl AsRef<Path>, dialect: Dialect) -> Result<StagedTable> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_tabular(&bytes, dialect, &path.display().to_string())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupeReport {
    pub kept: usize,
    pub removed: usize,
}

/// Keeps the first row for each key, preserving order. An empty key list
/// compares whole rows.
pub fn clean_dedupe(table: &StagedTable, key_columns: &[String]) -> Result<(StagedTable, DedupeReport)> {
    let keys: Vec<usize> = key_columns
        .iter()
        .map(|c| table.column(c))
        .collect::<Result<_>>()?;
    let mut seen: HashSet<Vec<&str>> = HashSet::new();
    let mut rows = Vec::new();
    for row in &table.rows {
        let key: Vec<&str> = if keys.is_empty() {
            row.iter().map(String::as_str).collect()
        } else {
            keys.iter().map(|&i| row[i].as_str()).collect()
        };
        if seen.insert(key) {
            rows.push(row.clone());
        }
    }
    let report = DedupeReport {
        kept: rows.len(),
        removed: table.rows.len() - rows.len(),
    };
    Ok((
        StagedTable {
            header: table.header.clone(),
            rows,
            source_uri: table.source_uri.clone(),
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[&[&str]]) -> StagedTable {
        StagedTable::new(
            vec!["id".into(), "v".into()],
            rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        )
    }

    #[test]
    fn header_and_one_row() {
        let t = parse_tabular(b"ID,source,location,media_url\n1,instagram,Caravelas,http://x/1.jpg\n", Dialect::default(), "t").unwrap();
        assert_eq!(t.header, vec!["ID", "source", "location", "media_url"]);
        assert_eq!(t.rows.len(), 1);
    }

    #[test]
    fn empty_source() {
        assert!(matches!(parse_tabular(b"", Dialect::default(), "e"), Err(Error::EmptySource(_))));
    }

    #[test]
    fn quoted_delimiter_stays_in_cell() {
        let t = parse_tabular(b"a\n\"a,b\"\n", Dialect::default(), "q").unwrap();
        assert_eq!(t.rows, vec![vec!["a,b".to_string()]]);
    }

    #[test]
    fn custom_dialect() {
        let d = Dialect { delimiter: b';', quote: b'\'' };
        let t = parse_tabular(b"a;b\n'x;y';2\n", d, "q").unwrap();
        assert_eq!(t.rows[0], vec!["x;y", "2"]);
    }

    #[test]
    fn ragged_row_reports_file_row() {
        match parse_tabular(b"a,b\n1,2\n3\n", Dialect::default(), "r") {
            Err(Error::RaggedRow(row)) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn identical_rows_dedupe() {
        let (t, r) = clean_dedupe(&table(&[&["1", "a"], &["1", "a"]]), &[]).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(r.removed, 1);
    }

    #[test]
    fn distinct_rows_untouched() {
        let input = table(&[&["1", "a"], &["2", "b"]]);
        let (t, r) = clean_dedupe(&input, &["id".into()]).unwrap();
        assert_eq!(t, input);
        assert_eq!(r.removed, 0);
    }

    #[test]
    fn five_rows_two_duplicate_keys() {
        // keys 1,2,1,3,2 -> first occurrences of 1,2,3
        let input = table(&[&["1", "a"], &["2", "b"], &["1", "c"], &["3", "d"], &["2", "e"]]);
        let (t, r) = clean_dedupe(&input, &["id".into()]).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(r.removed, 2);
        assert_eq!(t.rows[2], vec!["3", "d"]);
    }

    #[test]
    fn unknown_key_column() {
        assert!(matches!(
            clean_dedupe(&table(&[]), &["nope".into()]),
            Err(Error::UnknownColumn(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn dedupe_is_idempotent(rows in proptest::collection::vec((0u8..4, 0u8..3), 0..30)) {
            let input = StagedTable::new(
                vec!["k".into(), "v".into()],
                rows.iter().map(|(k, v)| vec![k.to_string(), v.to_string()]).collect(),
            );
            let keys = vec!["k".to_string()];
            let (once, _) = clean_dedupe(&input, &keys).unwrap();
            let (twice, report) = clean_dedupe(&once, &keys).unwrap();
            proptest::prop_assert_eq!(once, twice);
            proptest::prop_assert_eq!(report.removed, 0);
        }

        #[test]
        fn csv_round_trip(cells in proptest::collection::vec("[a-z,\" ]{0,6}", 1..8)) {
            let t = StagedTable::new(vec!["c".into()], cells.iter().map(|c| vec![c.clone()]).collect());
            let bytes = t.to_csv().unwrap();
            let back = parse_tabular(&bytes, Dialect::default(), "rt").unwrap();
            proptest::prop_assert_eq!(back.rows, t.rows);
        }
    }
}
