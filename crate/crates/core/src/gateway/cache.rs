use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;

use super::{ChatResponse, GatewayError};

/// One recorded exchange, stored at `<root>/<key[..2]>/<key>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    #[serde(skip)]
    pub key: String,
    pub request: Value,
    pub response: ChatResponse,
    pub recorded_at: String,
}

#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Cache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2.min(key.len())]).join(format!("{key}.json"))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.path_for(key).is_file()
    }

    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>, GatewayError> {
        Ok(self.read_json::<CacheEntry>(key)?.map(|mut e| {
            e.key = key.to_string();
            e
        }))
    }

    pub fn put(&self, entry: &CacheEntry) -> Result<(), GatewayError> {
        self.write_json(&entry.key, entry)
    }

    pub(crate) fn read_json<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, GatewayError> {
        let path = self.path_for(key);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path, e)),
        };
        serde_json::from_str(&text).map(Some).map_err(|e| GatewayError::Cache {
            path,
            message: e.to_string(),
        })
    }

    /// Write-temp-then-rename; concurrent writers of one key are last-wins.
    pub(crate) fn write_json<T: Serialize>(&self, key: &str, value: &T) -> Result<(), GatewayError> {
        let path = self.path_for(key);
        let dir = path.parent().expect("cache path has a parent");
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let mut body = serde_json::to_string_pretty(value).expect("cache entry serializes");
        body.push('\n');
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
        tmp.write_all(body.as_bytes()).map_err(|e| io_err(tmp.path(), e))?;
        tmp.persist(&path).map_err(|e| io_err(&path, e.error))?;
        Ok(())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> GatewayError {
    GatewayError::Cache {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}
