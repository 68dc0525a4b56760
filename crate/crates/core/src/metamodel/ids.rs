use std::fmt;

use serde::{Deserialize, Serialize};

/// Text identifier of the form `kind-<base32 of 10 random bytes>`.
///
/// Uniqueness is the store's job; the generator only draws entropy.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Id(String);

impl Id {
    pub fn generate(kind: &str) -> Self {
        let bytes: [u8; 10] = rand::random();
        let token = data_encoding::BASE32_NOPAD.encode(&bytes).to_ascii_lowercase();
        Id(format!("{kind}-{token}"))
    }

    /// Wraps an existing identifier without checking its shape.
    pub fn new(text: impl Into<String>) -> Self {
        Id(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The `kind` prefix, e.g. `release` for `release-abc`.
    pub fn kind(&self) -> &str {
        self.0.split_once('-').map(|(k, _)| k).unwrap_or("")
    }
}

impl fmt::Display for Id {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Id {
    fn from(value: &str) -> Self {
        Id(value.to_string())
    }
}

impl From<String> for Id {
    fn from(value: String) -> Self {
        Id(value)
    }
}

impl AsRef<str> for Id {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_shape() {
        let id = Id::generate("release");
        assert_eq!(id.kind(), "release");
        let token = id.as_str().strip_prefix("release-").unwrap();
        assert_eq!(token.len(), 16);
        assert!(token.bytes().all(|b| b.is_ascii_lowercase() || (b'2'..=b'7').contains(&b)));
        assert_ne!(Id::generate("release"), id);
    }
}
