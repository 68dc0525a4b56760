//! Canonical byte encoding and content hashing.
//!
//! The encoding is JSON restricted to maps, lists, text, integers and
//! booleans. Map keys are sorted by code point, there is no whitespace, and
//! list order is preserved. Floating point numbers are rejected: callers
//! carry them as [`Decimal`], which serializes to a 17-significant-digit
//! decimal string.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};

/// Encodes any serializable record canonically.
pub fn canonical_encode<T: Serialize + ?Sized>(record: &T) -> Result<Vec<u8>> {
    let value = serde_json::to_value(record)?;
    encode_value(&value)
}

/// Encodes an already-built JSON value canonically.
pub fn encode_value(value: &Value) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(64);
    write_value(value, &mut out)?;
    Ok(out)
}

fn write_value(value: &Value, out: &mut Vec<u8>) -> Result<()> {
    match value {
        Value::Null => return Err(Error::Encoding("null is not encodable".into())),
        Value::Bool(b) => out.extend_from_slice(if *b { b"true" } else { b"false" }),
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                out.extend_from_slice(n.to_string().as_bytes());
            } else {
                return Err(Error::Encoding(format!(
                    "float {n} must be carried as a decimal string"
                )));
            }
        }
        Value::String(s) => serde_json::to_writer(&mut *out, s)?,
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out)?;
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            // UTF-8 byte order equals code point order.
            keys.sort();
            out.push(b'{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                serde_json::to_writer(&mut *out, key)?;
                out.push(b':');
                write_value(&map[key], out)?;
            }
            out.push(b'}');
        }
    }
    Ok(())
}

/// Decodes canonical bytes, rejecting anything that would not re-encode to
/// the same bytes.
pub fn canonical_decode(bytes: &[u8]) -> Result<Value> {
    let value: Value = serde_json::from_slice(bytes)?;
    let again = encode_value(&value)?;
    if again != bytes {
        return Err(Error::Encoding("input is not in canonical form".into()));
    }
    Ok(value)
}

/// Lowercase hex SHA-256.
pub fn content_hash(bytes: &[u8]) -> Digest {
    Digest(hex::encode(Sha256::digest(bytes)))
}

/// Replaces every non-integer number in `value` with its decimal-string
/// form so that user-supplied JSON (pipeline specs, rule files) becomes
/// encodable.
pub fn normalize_floats(value: &mut Value) {
    match value {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => {
            let f = n.as_f64().unwrap_or(f64::NAN);
            *value = Value::String(format_decimal(f));
        }
        Value::Array(items) => items.iter_mut().for_each(normalize_floats),
        Value::Object(map) => map.values_mut().for_each(normalize_floats),
        _ => {}
    }
}

/// 64-character lowercase hex SHA-256 digest.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Digest(String);

impl Digest {
    pub fn parse(text: &str) -> Result<Self> {
        if is_hex_digest(text) {
            Ok(Digest(text.to_string()))
        } else {
            Err(Error::InvalidArgument(format!("{text} is not a sha-256 digest")))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// First 64 bits, big-endian. Used to derive seeds.
    pub fn prefix_u64(&self) -> u64 {
        let bytes = hex::decode(&self.0[..16]).unwrap_or_default();
        bytes.iter().fold(0u64, |acc, b| (acc << 8) | u64::from(*b))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn is_hex_digest(text: &str) -> bool {
    text.len() == 64 && text.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Formats a float with 17 significant digits, which round-trips any `f64`.
pub fn format_decimal(value: f64) -> String {
    if value.is_nan() {
        "NaN".to_string()
    } else if value.is_infinite() {
        if value > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{value:.16e}")
    }
}

pub fn parse_decimal(text: &str) -> Option<f64> {
    match text {
        "NaN" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => {
            let t = text.trim();
            let looks_numeric = !t.is_empty()
                && t.bytes().all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'))
                && t.bytes().any(|b| b.is_ascii_digit());
            if looks_numeric {
                t.parse::<f64>().ok()
            } else {
                None
            }
        }
    }
}

/// A float that enters hashed material only as a decimal string.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct Decimal(pub f64);

impl Decimal {
    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<f64> for Decimal {
    fn from(value: f64) -> Self {
        Decimal(value)
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&format_decimal(self.0))
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct DecimalVisitor;

        impl Visitor<'_> for DecimalVisitor {
            type Value = Decimal;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a decimal string or a number")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Decimal, E> {
                parse_decimal(v)
                    .map(Decimal)
                    .ok_or_else(|| E::custom(format!("{v:?} is not a decimal")))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Decimal, E> {
                Ok(Decimal(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Decimal, E> {
                Ok(Decimal(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Decimal, E> {
                Ok(Decimal(v as f64))
            }
        }

        deserializer.deserialize_any(DecimalVisitor)
    }
}

/// Serde adapter storing an `f64` field as a decimal string.
pub mod decimal_f64 {
    use super::Decimal;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
        Decimal(*value).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Decimal::deserialize(d)?.0)
    }
}

/// Serde adapter storing a `Vec<f64>` as decimal strings.
pub mod decimal_vec {
    use super::Decimal;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&Decimal(*v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Decimal>::deserialize(d)?.into_iter().map(|x| x.0).collect())
    }
}
