//! On-disk state: the authority key and an append-only log of accepted
//! uploads, one JSON document per line.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use contain_core::certify::AuthorityKeyPair;
use contain_core::wire::InfectedUpload;
use contain_core::Timestamp;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STATE_DIR_ENV: &str = "CONTAIN_STATE_DIR";
pub const DEFAULT_STATE_DIR: &str = "contain-state";
pub const LOG_FILE: &str = "uploads.jsonl";
pub const AUTHORITY_FILE: &str = "authority.key";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
}

impl StoreError {
    fn io(path: &Path, source: io::Error) -> Self {
        StoreError::Io { path: path.to_path_buf(), source }
    }
}

/// `$CONTAIN_STATE_DIR`, or `./contain-state`.
pub fn state_dir_from_env() -> PathBuf {
    std::env::var_os(STATE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_STATE_DIR))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogEntry {
    pub received_at: Timestamp,
    pub upload: InfectedUpload,
}

#[derive(Debug)]
pub struct UploadLog {
    path: PathBuf,
    file: File,
}

impl UploadLog {
    /// Opens (or creates) the log and returns the entries already in it.
    ///
    /// A final line without a newline is a write interrupted by a crash; it
    /// is cut off the file. Any other unreadable line is an error.
    pub fn open(path: impl Into<PathBuf>) -> Result<(Self, Vec<LogEntry>), StoreError> {
        let path = path.into();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| StoreError::io(&path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| StoreError::io(&path, e))?;

        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < bytes.len() {
            tracing::warn!(path = %path.display(), bytes = bytes.len() - complete, "dropping torn log tail");
            file.set_len(complete as u64).map_err(|e| StoreError::io(&path, e))?;
            file.sync_all().map_err(|e| StoreError::io(&path, e))?;
        }

        let mut entries = Vec::new();
        for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let entry = serde_json::from_slice(line).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            entries.push(entry);
        }
        Ok((UploadLog { path, file }, entries))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one entry and waits for it to reach the disk.
    pub fn append(&mut self, entry: &LogEntry) -> io::Result<()> {
        let mut line = serde_json::to_vec(entry).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()
    }
}

/// Loads `authority.key` from `dir`, creating the directory and a fresh key
/// if needed. Returns whether the key was created.
pub fn load_or_create_authority(dir: &Path) -> Result<(AuthorityKeyPair, bool), StoreError> {
    fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
    let path = dir.join(AUTHORITY_FILE);
    match fs::read_to_string(&path) {
        Ok(text) => {
            let corrupt = |reason: &str| StoreError::Corrupt { path: path.clone(), line: 1, reason: reason.into() };
            let bytes = STANDARD.decode(text.trim()).map_err(|_| corrupt("not base64"))?;
            let seed: [u8; 32] = bytes.try_into().map_err(|_| corrupt("expected a 32-byte seed"))?;
            Ok((AuthorityKeyPair::from_seed(seed), false))
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            let key = AuthorityKeyPair::generate(&mut rand::rngs::OsRng)
                .map_err(|e| StoreError::io(&path, io::Error::other(e.to_string())))?;
            write_secret(&path, format!("{}\n", STANDARD.encode(key.seed())).as_bytes())
                .map_err(|e| StoreError::io(&path, e))?;
            Ok((key, true))
        }
        Err(e) => Err(StoreError::io(&path, e)),
    }
}

fn write_secret(path: &Path, contents: &[u8]) -> io::Result<()> {
    let mut opts = OpenOptions::new();
    opts.write(true).create_new(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts.open(path)?;
    f.write_all(contents)?;
    f.sync_all()
}
