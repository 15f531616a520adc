use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CACHE_FORMAT: &str = "plan-harvest-cache";
pub const DIGEST_ALGORITHM: &str = "sha256";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cache {path}: bad header: {message}")]
    Header { path: PathBuf, message: String },
    #[error("cache {path}: record {record}: {message}")]
    Corrupt {
        path: PathBuf,
        record: usize,
        message: String,
    },
    #[error("cache {path} does not exist")]
    Missing { path: PathBuf },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheHeader {
    format: String,
    version: u32,
    digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompletionRecord {
    pub prompt_digest: String,
    pub completion: String,
    /// Seconds since the Unix epoch at recording time.
    pub timestamp: u64,
    pub engine: String,
}

impl CompletionRecord {
    pub fn now(prompt_digest: String, completion: String, engine: String) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            prompt_digest,
            completion,
            timestamp,
            engine,
        }
    }
}

/// Line-delimited completion store keyed by prompt digest.
///
/// The first line is a JSON header naming the digest algorithm; each further
/// line is one [`CompletionRecord`]. Reads are concurrent; every insert
/// rewrites the file (sorted by digest) under a write lock.
pub struct ReplayCache {
    path: PathBuf,
    records: RwLock<BTreeMap<String, CompletionRecord>>,
    write_lock: Mutex<()>,
}

impl ReplayCache {
    /// Loads an existing cache file.
    pub fn load(path: &Path) -> Result<Self, CacheError> {
        if !path.exists() {
            return Err(CacheError::Missing {
                path: path.to_path_buf(),
            });
        }
        let text = fs::read_to_string(path).map_err(|source| CacheError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let records = parse(path, &text)?;
        Ok(Self {
            path: path.to_path_buf(),
            records: RwLock::new(records),
            write_lock: Mutex::new(()),
        })
    }

    /// Loads `path` if it exists, otherwise starts an empty cache there.
    pub fn open(path: &Path) -> Result<Self, CacheError> {
        if path.exists() {
            return Self::load(path);
        }
        Ok(Self {
            path: path.to_path_buf(),
            records: RwLock::new(BTreeMap::new()),
            write_lock: Mutex::new(()),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, digest: &str) -> Option<CompletionRecord> {
        self.records.read().unwrap().get(digest).cloned()
    }

    pub fn contains(&self, digest: &str) -> bool {
        self.records.read().unwrap().contains_key(digest)
    }

    pub fn len(&self) -> usize {
        self.records.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds or replaces the record for its digest and persists the cache.
    pub fn insert(&self, record: CompletionRecord) -> Result<(), CacheError> {
        let _guard = self.write_lock.lock().unwrap();
        let snapshot = {
            let mut records = self.records.write().unwrap();
            records.insert(record.prompt_digest.clone(), record);
            render(&records)
        };
        self.persist(&snapshot)
    }

    fn persist(&self, contents: &str) -> Result<(), CacheError> {
        let io_err = |source| CacheError::Io {
            path: self.path.clone(),
            source,
        };
        if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        let mut tmp = self.path.clone().into_os_string();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        {
            let mut file = fs::File::create(&tmp).map_err(io_err)?;
            file.write_all(contents.as_bytes()).map_err(io_err)?;
            file.sync_all().map_err(io_err)?;
        }
        fs::rename(&tmp, &self.path).map_err(io_err)
    }
}

fn header_line() -> String {
    serde_json::to_string(&CacheHeader {
        format: CACHE_FORMAT.into(),
        version: CACHE_VERSION,
        digest: DIGEST_ALGORITHM.into(),
    })
    .expect("header serializes")
}

fn render(records: &BTreeMap<String, CompletionRecord>) -> String {
    let mut out = header_line();
    out.push('\n');
    for record in records.values() {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

fn parse(path: &Path, text: &str) -> Result<BTreeMap<String, CompletionRecord>, CacheError> {
    let mut lines = text.lines();
    let header_err = |message: String| CacheError::Header {
        path: path.to_path_buf(),
        message,
    };
    let header: CacheHeader =
        serde_json::from_str(lines.next().unwrap_or("")).map_err(|e| header_err(e.to_string()))?;
    if header.format != CACHE_FORMAT || header.version != CACHE_VERSION {
        return Err(header_err(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    if header.digest != DIGEST_ALGORITHM {
        return Err(header_err(format!("unsupported digest {}", header.digest)));
    }

    let mut records = BTreeMap::new();
    for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let record_no = i + 1;
        let corrupt = |message: String| CacheError::Corrupt {
            path: path.to_path_buf(),
            record: record_no,
            message,
        };
        let record: CompletionRecord =
            serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
        if record.prompt_digest.len() != 64
            || !record.prompt_digest.bytes().all(|b| b.is_ascii_hexdigit())
        {
            return Err(corrupt(format!(
                "malformed digest `{}`",
                record.prompt_digest
            )));
        }
        if records.contains_key(&record.prompt_digest) {
            return Err(corrupt(format!(
                "duplicate digest {}",
                record.prompt_digest
            )));
        }
        records.insert(record.prompt_digest.clone(), record);
    }
    Ok(records)
}
