//! Canonical JSON rendering and pagination shared by both front ends.

use serde::Serialize;
use serde_json::{json, Value};
use xv_core::metamodel::{encode_value, normalize_floats};
use xv_core::{Error, Result};

pub const DEFAULT_LIMIT: usize = 100;

pub fn value<T: Serialize + ?Sized>(data: &T) -> Result<Value> {
    let mut v = serde_json::to_value(data)?;
    normalize_floats(&mut v);
    Ok(v)
}

pub fn canonical<T: Serialize + ?Sized>(data: &T) -> Result<Vec<u8>> {
    encode_value(&value(data)?)
}

/// `{status: "ok", data}`.
pub fn ok_envelope(data: Value) -> Value {
    json!({"status": "ok", "data": data})
}

/// `{status: "error", error: {code, message}}`.
pub fn error_envelope(e: &Error) -> Value {
    json!({"status": "error", "error": {"code": e.code(), "message": e.to_string()}})
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Page {
    pub offset: usize,
    pub limit: usize,
}

impl Default for Page {
    fn default() -> Self {
        Page { offset: 0, limit: DEFAULT_LIMIT }
    }
}

impl Page {
    pub fn new(offset: Option<usize>, limit: Option<usize>) -> Self {
        Page { offset: offset.unwrap_or(0), limit: limit.unwrap_or(DEFAULT_LIMIT) }
    }

    pub fn slice<T: Clone>(&self, all: &[T]) -> Vec<T> {
        all.iter().skip(self.offset).take(self.limit).cloned().collect()
    }

    /// `{total, offset, limit, items}`.
    pub fn wrap<T: Serialize + Clone>(&self, all: &[T]) -> Result<Value> {
        Ok(json!({
            "total": all.len(),
            "offset": self.offset,
            "limit": self.limit,
            "items": value(&self.slice(all))?,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn page_past_the_end_is_empty() {
        let all: Vec<u32> = (0..5).collect();
        assert_eq!(Page::new(Some(3), Some(10)).slice(&all), vec![3, 4]);
        assert!(Page::new(Some(9), None).slice(&all).is_empty());
        let v = Page::new(None, Some(2)).wrap(&all).unwrap();
        assert_eq!(v["total"], 5);
        assert_eq!(v["items"], json!([0, 1]));
    }

    #[test]
    fn floats_render_as_strings() {
        assert_eq!(canonical(&json!({"b": 0.5, "a": 1})).unwrap(), br#"{"a":1,"b":"5.0000000000000000e-1"}"#.to_vec());
    }

    #[test]
    fn error_envelope_carries_code() {
        let v = error_envelope(&Error::InvalidArgument("x".into()));
        assert_eq!(v["error"]["code"], "INVALID_ARGUMENT");
    }
}
