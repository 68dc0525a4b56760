//! Append-only JSON-lines ledgers.
//!
//! A line is the canonical encoding of `{body, checksum, kind, seq}`
//! followed by `\n`, where `checksum` is the SHA-256 of the canonical body.
//! A final segment without its newline is a torn write.

use std::fmt;
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::metamodel::{canonical_encode, content_hash, encode_value, Record};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ledger {
    Datasets,
    Releases,
    Items,
    Actions,
    Artefacts,
    Experiments,
    Tags,
    Validations,
    Runs,
    Annotations,
}

impl Ledger {
    pub const ALL: [Ledger; 10] = [
        Ledger::Datasets,
        Ledger::Releases,
        Ledger::Items,
        Ledger::Actions,
        Ledger::Artefacts,
        Ledger::Experiments,
        Ledger::Tags,
        Ledger::Validations,
        Ledger::Runs,
        Ledger::Annotations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ledger::Datasets => "datasets",
            Ledger::Releases => "releases",
            Ledger::Items => "items",
            Ledger::Actions => "actions",
            Ledger::Artefacts => "artefacts",
            Ledger::Experiments => "experiments",
            Ledger::Tags => "tags",
            Ledger::Validations => "validations",
            Ledger::Runs => "runs",
            Ledger::Annotations => "annotations",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ledger::ALL
            .into_iter()
            .find(|l| l.name() == name)
            .ok_or_else(|| Error::UnknownLedger(name.to_string()))
    }

    /// Ledger a record kind is written to. Profiles and catalogue
    /// assignments ride with releases; pipelines ride with runs.
    pub fn for_record(record: &Record) -> Self {
        match record {
            Record::Dataset(_) => Ledger::Datasets,
            Record::Release(_) | Record::Profile(_) | Record::Catalogue(_) => Ledger::Releases,
            Record::Item(_) => Ledger::Items,
            Record::Annotation(_) => Ledger::Annotations,
            Record::Action(_) => Ledger::Actions,
            Record::Artefact(_) => Ledger::Artefacts,
            Record::Experiment(_) => Ledger::Experiments,
            Record::Tag(_) => Ledger::Tags,
            Record::Validation(_) => Ledger::Validations,
            Record::Pipeline(_) | Record::Run(_) => Ledger::Runs,
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.jsonl", self.name())
    }
}

impl fmt::Display for Ledger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Encodes one ledger line, newline included.
pub fn encode_line(seq: u64, record: &Record) -> Result<Vec<u8>> {
    let tagged = serde_json::to_value(record)?;
    let kind = tagged["kind"].clone();
    let body = tagged["body"].clone();
    let checksum = content_hash(&encode_value(&body)?);
    let line = json!({"seq": seq, "kind": kind, "body": body, "checksum": checksum.as_str()});
    let mut bytes = encode_value(&line)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Parses one line (without its newline), verifying canonical form and
/// checksum.
pub fn decode_line(line: &[u8]) -> std::result::Result<(u64, Record), String> {
    let value: Value = serde_json::from_slice(line).map_err(|e| format!("unparseable: {e}"))?;
    let reencoded = encode_value(&value).map_err(|e| e.to_string())?;
    if reencoded != line {
        return Err("not canonically encoded".into());
    }
    let seq = value["seq"].as_u64().ok_or("missing seq")?;
    let checksum = value["checksum"].as_str().ok_or("missing checksum")?;
    let body = value.get("body").ok_or("missing body")?;
    let body_bytes = encode_value(body).map_err(|e| e.to_string())?;
    if content_hash(&body_bytes).as_str() != checksum {
        return Err("checksum mismatch".into());
    }
    let record: Record = serde_json::from_value(json!({"kind": value["kind"], "body": body}))
        .map_err(|e| format!("body does not decode: {e}"))?;
    Ok((seq, record))
}

/// Outcome of reading a ledger file.
#[derive(Debug, Default)]
pub struct Scan {
    pub records: Vec<(u64, Record)>,
    /// Byte length of the intact prefix.
    pub valid_len: u64,
    /// A damaged final line, if any: (1-based line number, reason).
    pub torn_tail: Option<(usize, String)>,
}

/// Reads `bytes` as a ledger. A damaged line that is not the last one is
/// corruption, not a crash.
pub fn scan_bytes(ledger: Ledger, bytes: &[u8]) -> Result<Scan> {
    let mut scan = Scan::default();
    let mut offset = 0usize;
    let mut line_no = 0usize;
    let mut last_seq = 0u64;
    while offset < bytes.len() {
        line_no += 1;
        let rest = &bytes[offset..];
        let (line, terminated) = match rest.iter().position(|b| *b == b'\n') {
            Some(end) => (&rest[..end], true),
            None => (rest, false),
        };
        let is_last = offset + line.len() + usize::from(terminated) >= bytes.len();
        let parsed = if terminated {
            decode_line(line).and_then(|(seq, record)| {
                if seq <= last_seq {
                    Err(format!("seq {seq} does not increase past {last_seq}"))
                } else {
                    Ok((seq, record))
                }
            })
        } else {
            Err("missing line terminator".to_string())
        };
        match parsed {
            Ok((seq, record)) => {
                last_seq = seq;
                scan.records.push((seq, record));
                offset += line.len() + 1;
                scan.valid_len = offset as u64;
            }
            Err(reason) if is_last => {
                scan.torn_tail = Some((line_no, reason));
                break;
            }
            Err(reason) => {
                return Err(Error::CorruptionMidLedger {
                    ledger: ledger.name().to_string(),
                    line: line_no,
                    reason,
                })
            }
        }
    }
    Ok(scan)
}

pub fn scan_file(ledger: Ledger, path: &Path) -> Result<Scan> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(Error::io(path, e)),
    };
    scan_bytes(ledger, &bytes)
}

/// Canonical body bytes of a record, the material its checksum covers.
pub fn body_bytes(record: &Record) -> Result<Vec<u8>> {
    let tagged = serde_json::to_value(record)?;
    canonical_encode(&tagged["body"])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metamodel::*;
    use chrono::TimeZone;

    fn dataset(n: u32) -> Record {
        Record::Dataset(Dataset {
            id: Id::new(format!("dataset-{n}")),
            name: format!("d{n}"),
            description: String::new(),
            domain: "test".into(),
            hemisphere: Hemisphere::Northern,
            created_at: chrono::Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, n).unwrap(),
        })
    }

    fn ledger_of(n: u32) -> Vec<u8> {
        (1..=n).flat_map(|i| encode_line(u64::from(i), &dataset(i)).unwrap()).collect()
    }

    #[test]
    fn line_is_canonical_with_sorted_fields() {
        let line = encode_line(1, &dataset(1)).unwrap();
        let text = String::from_utf8(line).unwrap();
        assert!(text.starts_with(r#"{"body":{"created_at":"#));
        assert!(text.contains(r#","kind":"dataset","seq":1}"#));
        assert!(text.ends_with("}\n"));
    }

    #[test]
    fn clean_ledger_scans_fully() {
        let bytes = ledger_of(5);
        let scan = scan_bytes(Ledger::Datasets, &bytes).unwrap();
        assert_eq!(scan.records.len(), 5);
        assert!(scan.torn_tail.is_none());
        assert_eq!(scan.valid_len as usize, bytes.len());
    }

    #[test]
    fn truncated_tail_is_dropped() {
        let bytes = ledger_of(3);
        let scan = scan_bytes(Ledger::Datasets, &bytes[..bytes.len() - 7]).unwrap();
        assert_eq!(scan.records.len(), 2);
        assert_eq!(scan.torn_tail.as_ref().unwrap().0, 3);
    }

    #[test]
    fn missing_newline_counts_as_torn() {
        let bytes = ledger_of(2);
        let scan = scan_bytes(Ledger::Datasets, &bytes[..bytes.len() - 1]).unwrap();
        assert_eq!(scan.records.len(), 1);
    }

    #[test]
    fn bad_checksum_mid_ledger_is_corruption() {
        let mut lines: Vec<Vec<u8>> = (1..=5).map(|i| encode_line(i, &dataset(i as u32)).unwrap()).collect();
        let text = String::from_utf8(lines[2].clone()).unwrap();
        let pos = text.find("\"checksum\":\"").unwrap() + 12;
        let mut tampered = text.into_bytes();
        tampered[pos] = if tampered[pos] == b'0' { b'1' } else { b'0' };
        lines[2] = tampered;
        let bytes: Vec<u8> = lines.concat();
        match scan_bytes(Ledger::Datasets, &bytes) {
            Err(Error::CorruptionMidLedger { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected corruption, got {other:?}"),
        }
    }

    #[test]
    fn unknown_ledger_name() {
        assert!(matches!(Ledger::parse("widgets"), Err(Error::UnknownLedger(_))));
        assert_eq!(Ledger::parse("tags").unwrap(), Ledger::Tags);
    }
}
