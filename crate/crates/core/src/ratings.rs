//! Listening-test records and post-hoc validity filtering.
//!
//! The HTTP session machinery lives in the service crate; this module holds
//! the data it persists and the rules applied to exported ratings.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Manifest;

#[derive(Debug, Error)]
pub enum RatingError {
    #[error("score {0} outside 1..=5")]
    ScoreOutOfRange(i64),
    #[error("invalid participant info: {0}")]
    InvalidParticipant(String),
    #[error("rating references unknown stimulus {0:?}")]
    DanglingStimulus(String),
    #[error("invalid validation rules: {0}")]
    InvalidRules(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, RatingError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParticipantGender {
    M,
    F,
    #[serde(rename = "unspecified")]
    Unspecified,
}

/// Self-reported demographics collected before the test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantInfo {
    pub age: u32,
    pub gender: ParticipantGender,
    pub nationality: String,
    /// Familiarity with virtual assistants and synthetic voices, 1..=5.
    pub familiarity: u8,
    pub self_reported_normal_hearing: bool,
}

impl ParticipantInfo {
    pub fn validate(&self) -> Result<()> {
        if self.age == 0 {
            return Err(RatingError::InvalidParticipant("age must be positive".into()));
        }
        if !(1..=5).contains(&self.familiarity) {
            return Err(RatingError::InvalidParticipant(format!(
                "familiarity {} outside 1..=5",
                self.familiarity
            )));
        }
        Ok(())
    }
}

/// One participant's judgment of one stimulus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub session_id: String,
    pub stimulus_id: String,
    pub score: u8,
    /// Total playback time observed by the client.
    pub listen_ms: u64,
    /// From presentation of the stimulus to submission.
    pub response_ms: u64,
    pub batch_index: u32,
    pub timestamp: DateTime<Utc>,
}

impl Rating {
    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.score) {
            return Err(RatingError::ScoreOutOfRange(i64::from(self.score)));
        }
        Ok(())
    }
}

/// Export row: a rating joined with its participant's demographics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    #[serde(flatten)]
    pub rating: Rating,
    #[serde(flatten)]
    pub participant: ParticipantInfo,
}

impl Borrow<Rating> for RatingRecord {
    fn borrow(&self) -> &Rating {
        &self.rating
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let io = |source| RatingError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let io = |source| RatingError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| RatingError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(row);
    }
    Ok(out)
}

/// Reads the rating fields of a ratings JSONL file (demographics, if present,
/// are ignored).
pub fn read_ratings(path: &Path) -> Result<Vec<Rating>> {
    let rows: Vec<Rating> = read_jsonl(path)?;
    for r in &rows {
        r.validate()?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanComparison {
    /// Exclude when a human stimulus scored at most the augmented one.
    #[default]
    AtMost,
    /// Exclude only on an exact tie.
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanAggregation {
    /// Any (human, augmented) pair within the session.
    #[default]
    AnyPair,
    /// Mean human score against mean augmented score.
    Mean,
}

/// Post-hoc exclusion rules. Each rule can be switched off independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationRules {
    /// Minimum response time as a fraction of the clip duration; `None`
    /// disables the timing rule.
    pub min_response_fraction: Option<f64>,
    pub exclude_human_eq_augmented: bool,
    #[serde(default)]
    pub human_comparison: HumanComparison,
    #[serde(default)]
    pub human_aggregation: HumanAggregation,
}

impl Default for ValidationRules {
    fn default() -> Self {
        Self {
            min_response_fraction: Some(0.5),
            exclude_human_eq_augmented: true,
            human_comparison: HumanComparison::AtMost,
            human_aggregation: HumanAggregation::AnyPair,
        }
    }
}

impl ValidationRules {
    pub fn disabled() -> Self {
        Self { min_response_fraction: None, exclude_human_eq_augmented: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.min_response_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(RatingError::InvalidRules(format!(
                    "min_response_fraction {f} outside (0, 1]"
                )));
            }
        }
        Ok(())
    }

    fn human_fails(&self, human: f64, augmented: f64) -> bool {
        match self.human_comparison {
            HumanComparison::AtMost => human <= augmented,
            HumanComparison::Equal => human == augmented,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionRule {
    Timing,
    HumanNotAboveAugmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub session_id: String,
    pub stimulus_id: String,
    pub rule: ExclusionRule,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub n_input: usize,
    pub n_valid: usize,
    pub by_rule: BTreeMap<ExclusionRule, usize>,
    pub excluded_sessions: Vec<String>,
    pub exclusions: Vec<Exclusion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome<R> {
    pub valid: Vec<R>,
    pub report: ExclusionReport,
}

/// Applies the timing rule, then the participant rule, to a set of ratings.
///
/// The timing rule drops any rating answered faster than
/// `min_response_fraction × duration`. The participant rule is evaluated on
/// the ratings that survived timing: if, within one session, a human-voice
/// stimulus scored no higher than an augmented stimulus, every remaining
/// rating of that session is dropped. Each dropped rating is attributed to
/// exactly one rule, in that order. Output preserves input order.
pub fn filter_ratings<R>(
    ratings: &[R],
    manifest: &Manifest,
    rules: &ValidationRules,
) -> Result<FilterOutcome<R>>
where
    R: Borrow<Rating> + Clone,
{
    rules.validate()?;
    let mut exclusions = Vec::new();
    let mut timing_ok = Vec::with_capacity(ratings.len());
    for item in ratings {
        let r: &Rating = item.borrow();
        let stim = manifest
            .get(&r.stimulus_id)
            .ok_or_else(|| RatingError::DanglingStimulus(r.stimulus_id.clone()))?;
        if let Some(frac) = rules.min_response_fraction {
            let min_ms = frac * stim.duration_s * 1000.0;
            if (r.response_ms as f64) < min_ms {
                exclusions.push(Exclusion {
                    session_id: r.session_id.clone(),
                    stimulus_id: r.stimulus_id.clone(),
                    rule: ExclusionRule::Timing,
                    detail: format!("response {} ms < {:.0} ms", r.response_ms, min_ms),
                });
                continue;
            }
        }
        timing_ok.push(item);
    }

    let mut flagged: BTreeMap<&str, String> = BTreeMap::new();
    if rules.exclude_human_eq_augmented {
        let mut per_session: HashMap<&str, (Vec<f64>, Vec<f64>)> = HashMap::new();
        for item in &timing_ok {
            let r: &Rating = (*item).borrow();
            let stim = manifest.get(&r.stimulus_id).expect("checked above");
            let entry = per_session.entry(r.session_id.as_str()).or_default();
            if stim.is_human() {
                entry.0.push(f64::from(r.score));
            } else if stim.is_augmented() {
                entry.1.push(f64::from(r.score));
            }
        }
        for (session, (human, augmented)) in per_session {
            if human.is_empty() || augmented.is_empty() {
                continue;
            }
            let hit = match rules.human_aggregation {
                HumanAggregation::AnyPair => human
                    .iter()
                    .find_map(|h| augmented.iter().find(|a| rules.human_fails(*h, **a)).map(|a| (*h, *a))),
                HumanAggregation::Mean => {
                    let mh = human.iter().sum::<f64>() / human.len() as f64;
                    let ma = augmented.iter().sum::<f64>() / augmented.len() as f64;
                    rules.human_fails(mh, ma).then_some((mh, ma))
                }
            };
            if let Some((h, a)) = hit {
                flagged.insert(session, format!("human {h} vs augmented {a}"));
            }
        }
    }

    let mut valid = Vec::with_capacity(timing_ok.len());
    for item in timing_ok {
        let r: &Rating = item.borrow();
        match flagged.get(r.session_id.as_str()) {
            Some(detail) => exclusions.push(Exclusion {
                session_id: r.session_id.clone(),
                stimulus_id: r.stimulus_id.clone(),
                rule: ExclusionRule::HumanNotAboveAugmented,
                detail: detail.clone(),
            }),
            None => valid.push(item.clone()),
        }
    }

    let mut by_rule = BTreeMap::new();
    for e in &exclusions {
        *by_rule.entry(e.rule).or_insert(0) += 1;
    }
    let report = ExclusionReport {
        n_input: ratings.len(),
        n_valid: valid.len(),
        by_rule,
        excluded_sessions: flagged.keys().map(|s| s.to_string()).collect(),
        exclusions,
    };
    Ok(FilterOutcome { valid, report })
}

/// Mean score and count per stimulus.
pub fn per_stimulus_mos<R: Borrow<Rating>>(ratings: &[R]) -> BTreeMap<String, (f64, usize)> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for item in ratings {
        let r = item.borrow();
        let e = acc.entry(r.stimulus_id.clone()).or_insert((0.0, 0));
        e.0 += f64::from(r.score);
        e.1 += 1;
    }
    for v in acc.values_mut() {
        v.0 /= v.1 as f64;
    }
    acc
}
