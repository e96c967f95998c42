//! Listening-test service: participant sessions, quality-stratified batches
//! of five stimuli, rating capture and export.
//!
//! [`Store`] holds the protocol state and is usable without HTTP; [`router`]
//! exposes it as a JSON API.

mod api;
mod store;
mod tiers;

pub use api::{router, serve, AppState, ADMIN_TOKEN_ENV};
pub use store::{export_jsonl, Batch, RatingSubmission, Store, BATCH_SIZE};
pub use tiers::{assign_tiers, TierPriors, N_TIERS};

use std::path::PathBuf;

use esmos_core::ratings::RatingError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("unknown stimulus {0:?}")]
    UnknownStimulus(String),
    #[error("stimulus {0:?} was not issued to this session")]
    NotIssued(String),
    #[error("stimulus {0:?} already rated in this session")]
    Duplicate(String),
    #[error("no stimuli left to present in session {0:?}")]
    Exhausted(String),
    #[error("no prior quality estimate for stimulus {0:?}")]
    NoPrior(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Rating(#[from] RatingError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Log { path: PathBuf, line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, ServiceError>;
