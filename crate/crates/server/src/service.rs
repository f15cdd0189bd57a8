//! Thread-safe wrapper around [`VerificationServer`] that owns the upload
//! log and a wall clock.

use std::io;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use contain_core::certify::AuthorityPublicKey;
use contain_core::wire::{ExposureQuery, ExposureResponse, InfectedUpload, PublishedBundle};
use contain_core::Timestamp;

use crate::state::{PublicationMode, ServerError, SubmitOutcome, VerificationServer};
use crate::store::{LogEntry, StoreError, UploadLog, LOG_FILE};

pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

pub fn system_clock() -> Timestamp {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    Timestamp(secs)
}

/// What kind of request reached the server. No addresses or bodies are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RequestKind {
    Upload,
    Published,
    Check,
    Authority,
}

pub struct Service {
    state: RwLock<VerificationServer>,
    log: Option<Mutex<UploadLog>>,
    requests: Mutex<Vec<RequestKind>>,
    clock: Clock,
}

impl Service {
    /// A server that forgets everything on exit.
    pub fn in_memory(authority: AuthorityPublicKey, mode: PublicationMode) -> Self {
        Service {
            state: RwLock::new(VerificationServer::new(authority, mode)),
            log: None,
            requests: Mutex::new(Vec::new()),
            clock: Arc::new(system_clock),
        }
    }

    /// Opens the upload log in `dir` and replays it. Each entry is checked
    /// again as of the time it was first received.
    pub fn open(dir: &Path, authority: AuthorityPublicKey, mode: PublicationMode) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir).map_err(|source| StoreError::Io { path: dir.to_path_buf(), source })?;
        let (log, entries) = UploadLog::open(dir.join(LOG_FILE))?;
        let mut state = VerificationServer::new(authority, mode);
        for (i, entry) in entries.into_iter().enumerate() {
            if let Err(reason) = state.validate(&entry.upload, entry.received_at) {
                return Err(StoreError::Corrupt {
                    path: log.path().to_path_buf(),
                    line: i + 1,
                    reason: format!("logged upload no longer verifies: {reason}"),
                });
            }
            state.apply(entry.upload);
        }
        tracing::info!(version = state.version(), "replayed upload log");
        Ok(Service {
            state: RwLock::new(state),
            log: Some(Mutex::new(log)),
            requests: Mutex::new(Vec::new()),
            clock: Arc::new(system_clock),
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn configure_publication_mode(&self, mode: PublicationMode) -> Result<(), ServerError> {
        self.write().configure_publication_mode(mode)
    }

    pub fn start_serving(&self) {
        self.write().start_serving();
    }

    /// Read access to the state, for inspection.
    pub fn state(&self) -> RwLockReadGuard<'_, VerificationServer> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, VerificationServer> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn record(&self, kind: RequestKind) {
        self.requests.lock().unwrap_or_else(|e| e.into_inner()).push(kind);
    }

    /// Kinds of every request received so far, in arrival order.
    pub fn requests(&self) -> Vec<RequestKind> {
        self.requests.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Validates, logs, then publishes. A log write failure leaves the
    /// state untouched.
    pub fn submit(&self, upload: InfectedUpload) -> io::Result<SubmitOutcome> {
        let now = (self.clock)();
        let mut state = self.write();
        if let Err(reason) = state.validate(&upload, now) {
            return Ok(SubmitOutcome::Rejected(reason));
        }
        if let Some(log) = &self.log {
            let entry = LogEntry { received_at: now, upload };
            log.lock().unwrap_or_else(|e| e.into_inner()).append(&entry)?;
            return Ok(SubmitOutcome::Accepted { version: state.apply(entry.upload) });
        }
        Ok(SubmitOutcome::Accepted { version: state.apply(upload) })
    }

    pub fn published(&self, since: u64) -> PublishedBundle {
        self.state().get_published(since)
    }

    pub fn check(&self, query: &ExposureQuery) -> ExposureResponse {
        self.state().private_exposure_query(query)
    }

    pub fn authority(&self) -> AuthorityPublicKey {
        *self.state().authority()
    }
}
