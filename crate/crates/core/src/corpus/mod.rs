//! Stimulus manifests, augmentation, speaker-disjoint splits and corpus
//! descriptive statistics.

mod augment;
mod split;
mod summary;

pub use augment::{
    plan_augmentation, run_augmentation, AugmentationJob, AugmentationMethod, AugmentationPlan,
};
pub use split::{speakers_per_split, split_by_speaker, Split, SplitAssignment, SplitRatios};
pub use summary::{corpus_stats, CorpusStats};

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::DspError;

/// `system_id` used for natural (non-synthesized) speech.
pub const HUMAN_SYSTEM: &str = "human";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: duplicate stimulus_id {id:?}")]
    Duplicate { line: usize, id: String },
    #[error("stimulus {stimulus:?} references unknown or augmented source {source_id:?}")]
    DanglingSource { stimulus: String, source_id: String },
    #[error("unknown stimulus {0:?}")]
    UnknownStimulus(String),
    #[error("insufficient eligible speakers: {0}")]
    InsufficientSpeakers(String),
    #[error("need at least 3 speaker groups to split, found {0}")]
    TooFewGroups(usize),
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("split violates disjointness: {0}")]
    NotDisjoint(String),
    #[error("source audio missing: {0}")]
    MissingAudio(PathBuf),
    #[error("augmenting {job}: {source}")]
    Dsp {
        job: String,
        #[source]
        source: DspError,
    },
}

pub type Result<T> = std::result::Result<T, CorpusError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Augmentation {
    #[default]
    None,
    Vtlp,
    Gl,
}

/// One audio sample and its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub stimulus_id: String,
    /// Relative to the audio root.
    pub audio_path: PathBuf,
    pub system_id: String,
    pub speaker_id: String,
    pub gender: Gender,
    /// BCP-47 tag, e.g. `es-AR`.
    pub dialect: String,
    #[serde(default)]
    pub augmentation: Augmentation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_stimulus_id: Option<String>,
    pub text: String,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_tier: Option<u8>,
}

impl Stimulus {
    pub fn is_human(&self) -> bool {
        self.system_id == HUMAN_SYSTEM && self.augmentation == Augmentation::None
    }

    pub fn is_augmented(&self) -> bool {
        self.augmentation != Augmentation::None
    }

    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.stimulus_id.is_empty() {
            return Err("stimulus_id is empty".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if let Some(t) = self.quality_tier {
            if !(1..=5).contains(&t) {
                return Err(format!("quality_tier must be in 1..=5, got {t}"));
            }
        }
        if self.is_augmented() && self.source_stimulus_id.is_none() {
            return Err("augmented stimulus requires source_stimulus_id".into());
        }
        Ok(())
    }
}

/// Validated, immutable list of stimuli with an id index.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    stimuli: Vec<Stimulus>,
    index: HashMap<String, usize>,
}

impl Manifest {
    /// Validates every stimulus, rejects duplicate ids, and checks that
    /// augmented entries point at an existing non-augmented source.
    pub fn new(stimuli: Vec<Stimulus>) -> Result<Self> {
        let mut index = HashMap::with_capacity(stimuli.len());
        for (i, s) in stimuli.iter().enumerate() {
            s.validate().map_err(|message| CorpusError::Schema { line: i + 1, message })?;
            if index.insert(s.stimulus_id.clone(), i).is_some() {
                return Err(CorpusError::Duplicate { line: i + 1, id: s.stimulus_id.clone() });
            }
        }
        for s in &stimuli {
            if let Some(src) = &s.source_stimulus_id {
                let ok = index.get(src).is_some_and(|&j| !stimuli[j].is_augmented());
                if !ok {
                    return Err(CorpusError::DanglingSource {
                        stimulus: s.stimulus_id.clone(),
                        source_id: src.clone(),
                    });
                }
            }
        }
        Ok(Self { stimuli, index })
    }

    pub fn stimuli(&self) -> &[Stimulus] {
        &self.stimuli
    }

    pub fn len(&self) -> usize {
        self.stimuli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stimuli.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Stimulus> {
        self.index.get(id).map(|&i| &self.stimuli[i])
    }

    /// Returns a new manifest with `extra` appended.
    pub fn extended(&self, extra: impl IntoIterator<Item = Stimulus>) -> Result<Self> {
        let mut all = self.stimuli.clone();
        all.extend(extra);
        Self::new(all)
    }

    pub fn speakers(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.stimuli.iter().map(|s| s.speaker_id.as_str()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut stimuli = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| CorpusError::Schema { line: line_no, message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let s: Stimulus = serde_json::from_str(&line)
                .map_err(|e| CorpusError::Schema { line: line_no, message: e.to_string() })?;
            s.validate().map_err(|message| CorpusError::Schema { line: line_no, message })?;
            if index.insert(s.stimulus_id.clone(), line_no).is_some() {
                return Err(CorpusError::Duplicate { line: line_no, id: s.stimulus_id });
            }
            stimuli.push(s);
        }
        Self::new(stimuli)
    }
}

/// Reads a JSONL manifest, one stimulus object per line.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let file = File::open(path).map_err(io_err(path))?;
    Manifest::parse(BufReader::new(file))
}

pub fn write_manifest(path: &Path, stimuli: &[Stimulus]) -> Result<()> {
    write_jsonl(path, stimuli)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| CorpusError::Schema { line: i + 1, message: e.to_string() })?,
        );
    }
    Ok(out)
}
