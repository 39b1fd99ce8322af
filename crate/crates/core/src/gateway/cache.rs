use std::io::Write;
use std::path::{Path, PathBuf};

use super::{CachedReply, GatewayError};

/// One JSON file per cache key, named by the key. Writes go to a temporary
/// file in the same directory and are renamed into place.
#[derive(Clone, Debug)]
pub struct DiskCache {
    dir: PathBuf,
}

fn io_err(e: impl std::fmt::Display) -> GatewayError {
    GatewayError::Cache(e.to_string())
}

impl DiskCache {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, GatewayError> {
        std::fs::create_dir_all(dir.as_ref()).map_err(io_err)?;
        Ok(DiskCache {
            dir: dir.as_ref().to_path_buf(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> Result<PathBuf, GatewayError> {
        if key.is_empty() || !key.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(GatewayError::Cache(format!("bad key {key:?}")));
        }
        Ok(self.dir.join(key))
    }

    pub fn get(&self, key: &str) -> Result<Option<CachedReply>, GatewayError> {
        match std::fs::read(self.path(key)?) {
            Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(io_err),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(e)),
        }
    }

    pub fn put(&self, key: &str, reply: &CachedReply) -> Result<(), GatewayError> {
        let path = self.path(key)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io_err)?;
        serde_json::to_writer(&mut tmp, reply).map_err(io_err)?;
        tmp.flush().map_err(io_err)?;
        tmp.persist(path).map_err(io_err)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        std::fs::read_dir(&self.dir)
            .map(|d| {
                d.filter_map(Result::ok)
                    .filter(|e| e.file_name().to_str().is_some_and(|n| n.bytes().all(|b| b.is_ascii_hexdigit())))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
