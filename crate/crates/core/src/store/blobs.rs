//! Content-addressed blob zone laid out as `blobs/<first2hex>/<digest>`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metamodel::{content_hash, is_hex_digest, Digest};

#[derive(Clone, Debug)]
pub struct BlobZone {
    root: PathBuf,
}

impl BlobZone {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        BlobZone { root: root.into() }
    }

    pub fn path_of(&self, digest: &Digest) -> PathBuf {
        let d = digest.as_str();
        self.root.join(&d[..2]).join(d)
    }

    /// Stores `bytes` under their digest. Writing the same bytes twice
    /// leaves one file.
    pub fn put(&self, bytes: &[u8], durable: bool) -> Result<Digest> {
        let digest = content_hash(bytes);
        let path = self.path_of(&digest);
        if path.exists() {
            return Ok(digest);
        }
        let dir = path.parent().expect("blob path has a parent");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tmp = dir.join(format!(".{}.tmp", digest.as_str()));
        {
            let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
            if durable {
                f.sync_all().map_err(|e| Error::io(&tmp, e))?;
            }
        }
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(digest)
    }

    /// Reads the stored bytes as they are on disk; integrity is checked by
    /// [`BlobZone::verify`].
    pub fn get(&self, digest: &Digest) -> Result<Vec<u8>> {
        let path = self.path_of(digest);
        match fs::read(&path) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(Error::UnknownBlob(digest.to_string()))
            }
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn contains(&self, digest: &Digest) -> bool {
        self.path_of(digest).is_file()
    }

    /// Whether the stored bytes still hash to their name.
    pub fn verify(&self, digest: &Digest) -> Result<bool> {
        Ok(&content_hash(&self.get(digest)?) == digest)
    }

    /// Every digest present, sorted.
    pub fn list(&self) -> Result<Vec<Digest>> {
        let mut out = Vec::new();
        if !self.root.exists() {
            return Ok(out);
        }
        for shard in read_dir(&self.root)? {
            if !shard.is_dir() {
                continue;
            }
            for entry in read_dir(&shard)? {
                if let Some(name) = entry.file_name().and_then(|n| n.to_str()) {
                    if is_hex_digest(name) {
                        out.push(Digest::parse(name)?);
                    }
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

fn read_dir(path: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for entry in entries {
        out.push(entry.map_err(|e| Error::io(path, e))?.path());
    }
    Ok(out)
}
