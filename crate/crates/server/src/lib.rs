//! Verification server: accepts certified uploads from infected users,
//! publishes them without identities, and answers private exposure checks.
//!
//! [`state`] is the pure state machine, [`service`] adds locking and the
//! upload log, [`http`] puts it on the wire.

pub mod http;
pub mod service;
pub mod state;
pub mod store;

pub use http::{router, serve, serve_with_shutdown, AuthorityResponse, UploadResponse};
pub use service::{RequestKind, Service};
pub use state::{PublicationMode, RejectReason, ServerError, SubmitOutcome, VerificationServer};
pub use store::{load_or_create_authority, state_dir_from_env, StoreError};
