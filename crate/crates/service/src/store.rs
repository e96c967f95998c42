//! Session state with an append-only JSONL event log.
//!
//! Every mutation is appended to the log before it is applied in memory, and
//! [`Store::open`] replays the log to rebuild state after a restart.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use esmos_core::ratings::{ParticipantInfo, Rating, RatingRecord};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tiers::{inventory, N_TIERS};
use crate::{Result, ServiceError};

pub const BATCH_SIZE: usize = N_TIERS as usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    SessionCreated {
        session_id: String,
        seed: u64,
        info: ParticipantInfo,
        created_at: DateTime<Utc>,
    },
    BatchIssued {
        session_id: String,
        batch_index: u32,
        stimuli: Vec<String>,
    },
    RatingSubmitted {
        rating: Rating,
    },
}

/// Rating as sent by a client. The session comes from the URL; the batch
/// index and timestamp are filled in by the server when absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatingSubmission {
    pub stimulus_id: String,
    pub score: i64,
    pub listen_ms: i64,
    pub response_ms: i64,
    #[serde(default)]
    pub session_id: Option<String>,
    #[serde(default)]
    pub batch_index: Option<u32>,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub batch_index: u32,
    pub stimuli: Vec<String>,
}

#[derive(Debug)]
struct Session {
    info: ParticipantInfo,
    seed: u64,
    batches: Vec<Vec<String>>,
    /// stimulus id → batch index
    issued: HashMap<String, u32>,
    rated: HashSet<String>,
}

impl Session {
    fn open_batch(&self) -> Option<Batch> {
        let (i, last) = self.batches.iter().enumerate().next_back()?;
        (!last.iter().all(|s| self.rated.contains(s)))
            .then(|| Batch { batch_index: i as u32, stimuli: last.clone() })
    }
}

#[derive(Debug)]
struct Inner {
    sessions: HashMap<String, Session>,
    ratings: Vec<Rating>,
    n_created: u64,
    log: Option<File>,
    log_path: Option<PathBuf>,
}

impl Inner {
    fn append(&mut self, event: &Event) -> Result<()> {
        if let (Some(file), Some(path)) = (self.log.as_mut(), self.log_path.as_ref()) {
            let mut line = serde_json::to_vec(event).expect("events serialize");
            line.push(b'\n');
            let io = |source| ServiceError::Io { path: path.clone(), source };
            file.write_all(&line).map_err(io)?;
            file.flush().map_err(io)?;
        }
        Ok(())
    }

    fn apply(&mut self, event: Event) {
        match event {
            Event::SessionCreated { session_id, seed, info, .. } => {
                self.n_created += 1;
                self.sessions.insert(
                    session_id,
                    Session { info, seed, batches: Vec::new(), issued: HashMap::new(), rated: HashSet::new() },
                );
            }
            Event::BatchIssued { session_id, batch_index, stimuli } => {
                if let Some(s) = self.sessions.get_mut(&session_id) {
                    for id in &stimuli {
                        s.issued.insert(id.clone(), batch_index);
                    }
                    s.batches.push(stimuli);
                }
            }
            Event::RatingSubmitted { rating } => {
                if let Some(s) = self.sessions.get_mut(&rating.session_id) {
                    s.rated.insert(rating.stimulus_id.clone());
                }
                self.ratings.push(rating);
            }
        }
    }

    fn record(&mut self, event: Event) -> Result<()> {
        self.append(&event)?;
        self.apply(event);
        Ok(())
    }
}

/// Thread-safe store shared by the HTTP handlers.
///
/// All mutations go through one mutex, so per-session updates are serialized
/// and log lines from concurrent sessions never interleave.
#[derive(Debug)]
pub struct Store {
    seed: u64,
    tiers: BTreeMap<u8, Vec<String>>,
    inner: Mutex<Inner>,
}

impl Store {
    /// In-memory store; nothing is persisted.
    pub fn in_memory(tiers: &BTreeMap<String, u8>, seed: u64) -> Self {
        Self {
            seed,
            tiers: inventory(tiers),
            inner: Mutex::new(Inner {
                sessions: HashMap::new(),
                ratings: Vec::new(),
                n_created: 0,
                log: None,
                log_path: None,
            }),
        }
    }

    /// Opens (or creates) the event log at `path` and replays it.
    pub fn open(path: &Path, tiers: &BTreeMap<String, u8>, seed: u64) -> Result<Self> {
        let io = |source| ServiceError::Io { path: path.to_path_buf(), source };
        let store = Self::in_memory(tiers, seed);
        {
            let mut inner = store.inner.lock().expect("store mutex poisoned");
            if path.exists() {
                let reader = BufReader::new(File::open(path).map_err(io)?);
                for (i, line) in reader.lines().enumerate() {
                    let line = line.map_err(io)?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let event: Event = serde_json::from_str(&line).map_err(|e| ServiceError::Log {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                    inner.apply(event);
                }
            }
            inner.log = Some(OpenOptions::new().create(true).append(true).open(path).map_err(io)?);
            inner.log_path = Some(path.to_path_buf());
        }
        Ok(store)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().expect("store mutex poisoned")
    }

    pub fn create_session(&self, info: ParticipantInfo) -> Result<String> {
        info.validate()?;
        let mut inner = self.lock();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(inner.n_created);
        let session_id = loop {
            let id = format!("{:016x}{:016x}", rng.next_u64(), rng.next_u64());
            if !inner.sessions.contains_key(&id) {
                break id;
            }
        };
        let seed = rng.gen();
        inner.record(Event::SessionCreated { session_id: session_id.clone(), seed, info, created_at: Utc::now() })?;
        Ok(session_id)
    }

    /// Returns the session's open batch if some of it is still unrated,
    /// otherwise issues a new one: one stimulus per quality tier, drawn
    /// without replacement within the session and shuffled.
    pub fn next_batch(&self, session_id: &str) -> Result<Batch> {
        let mut inner = self.lock();
        let session =
            inner.sessions.get(session_id).ok_or_else(|| ServiceError::UnknownSession(session_id.into()))?;
        if let Some(open) = session.open_batch() {
            return Ok(open);
        }
        let batch_index = session.batches.len() as u32;
        let mut rng = ChaCha8Rng::seed_from_u64(session.seed);
        rng.set_stream(u64::from(batch_index));

        let mut picked: Vec<String> = Vec::with_capacity(BATCH_SIZE);
        for tier in 1..=N_TIERS {
            let available = |t: u8| -> Vec<&String> {
                self.tiers[&t]
                    .iter()
                    .filter(|id| !session.issued.contains_key(*id) && !picked.contains(id))
                    .collect()
            };
            let mut candidates = available(tier);
            if candidates.is_empty() {
                let fallback = nearest_tiers(tier).find_map(|t| {
                    let c = available(t);
                    (!c.is_empty()).then_some((t, c))
                });
                let Some((t, c)) = fallback else { break };
                tracing::warn!(session_id, tier, fallback = t, "tier exhausted, using nearest nonempty tier");
                candidates = c;
            }
            let choice = candidates[rng.gen_range(0..candidates.len())].clone();
            picked.push(choice);
        }
        if picked.is_empty() {
            return Err(ServiceError::Exhausted(session_id.into()));
        }
        picked.shuffle(&mut rng);
        inner.record(Event::BatchIssued {
            session_id: session_id.into(),
            batch_index,
            stimuli: picked.clone(),
        })?;
        Ok(Batch { batch_index, stimuli: picked })
    }

    pub fn submit_rating(&self, session_id: &str, sub: RatingSubmission) -> Result<Rating> {
        let mut inner = self.lock();
        let session =
            inner.sessions.get(session_id).ok_or_else(|| ServiceError::UnknownSession(session_id.into()))?;
        if sub.session_id.as_deref().is_some_and(|s| s != session_id) {
            return Err(ServiceError::Invalid("session_id does not match the URL".into()));
        }
        let score = u8::try_from(sub.score)
            .ok()
            .filter(|s| (1..=5).contains(s))
            .ok_or(ServiceError::Rating(esmos_core::ratings::RatingError::ScoreOutOfRange(sub.score)))?;
        if sub.listen_ms < 0 || sub.response_ms < 0 {
            return Err(ServiceError::Invalid("listen_ms and response_ms must be non-negative".into()));
        }
        let &batch_index =
            session.issued.get(&sub.stimulus_id).ok_or_else(|| ServiceError::NotIssued(sub.stimulus_id.clone()))?;
        if sub.batch_index.is_some_and(|b| b != batch_index) {
            return Err(ServiceError::Invalid(format!(
                "stimulus {} was issued in batch {batch_index}",
                sub.stimulus_id
            )));
        }
        if session.rated.contains(&sub.stimulus_id) {
            return Err(ServiceError::Duplicate(sub.stimulus_id));
        }
        let rating = Rating {
            session_id: session_id.into(),
            stimulus_id: sub.stimulus_id,
            score,
            listen_ms: sub.listen_ms as u64,
            response_ms: sub.response_ms as u64,
            batch_index,
            timestamp: sub.timestamp.unwrap_or_else(Utc::now),
        };
        inner.record(Event::RatingSubmitted { rating: rating.clone() })?;
        Ok(rating)
    }

    /// All ratings joined with demographics, ordered by timestamp.
    pub fn export(&self) -> Vec<RatingRecord> {
        let inner = self.lock();
        let mut rows: Vec<RatingRecord> = inner
            .ratings
            .iter()
            .filter_map(|r| {
                let s = inner.sessions.get(&r.session_id)?;
                Some(RatingRecord { rating: r.clone(), participant: s.info.clone() })
            })
            .collect();
        rows.sort_by(|a, b| {
            (a.rating.timestamp, &a.rating.session_id, &a.rating.stimulus_id).cmp(&(
                b.rating.timestamp,
                &b.rating.session_id,
                &b.rating.stimulus_id,
            ))
        });
        rows
    }

    pub fn n_sessions(&self) -> usize {
        self.lock().sessions.len()
    }
}

/// Tiers ordered by distance from `tier`, lower first on ties.
fn nearest_tiers(tier: u8) -> impl Iterator<Item = u8> {
    (1..N_TIERS).flat_map(move |d| [tier.checked_sub(d), tier.checked_add(d)]).flatten().filter(|t| (1..=N_TIERS).contains(t))
}

/// Serializes export rows as JSONL.
pub fn export_jsonl(rows: &[RatingRecord]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}
