use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Gender, Manifest, Stimulus};
use crate::ratings::Rating;
use crate::stats::mean_sd;

/// Descriptive statistics of a corpus (or of its rated subset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_stimuli: usize,
    pub n_ratings: Option<usize>,
    pub n_speakers: usize,
    pub total_minutes: f64,
    pub duration_mean_s: f64,
    pub duration_sd_s: f64,
    pub words_mean: f64,
    pub words_sd: f64,
    pub speakers_by_gender: BTreeMap<Gender, usize>,
    pub speakers_by_dialect: BTreeMap<String, usize>,
    pub stimuli_by_system: BTreeMap<String, usize>,
}

/// Summarizes `manifest`. When `ratings` is given, only stimuli that received
/// at least one rating are counted.
pub fn corpus_stats(manifest: &Manifest, ratings: Option<&[Rating]>) -> CorpusStats {
    let rated: Option<BTreeSet<&str>> =
        ratings.map(|rs| rs.iter().map(|r| r.stimulus_id.as_str()).collect());
    let included: Vec<&Stimulus> = manifest
        .stimuli()
        .iter()
        .filter(|s| rated.as_ref().is_none_or(|set| set.contains(s.stimulus_id.as_str())))
        .collect();

    let durations: Vec<f64> = included.iter().map(|s| s.duration_s).collect();
    let words: Vec<f64> = included.iter().map(|s| s.word_count() as f64).collect();
    let (duration_mean_s, duration_sd_s) = mean_sd(&durations);
    let (words_mean, words_sd) = mean_sd(&words);

    let mut speakers: BTreeMap<&str, &Stimulus> = BTreeMap::new();
    let mut stimuli_by_system = BTreeMap::new();
    for s in &included {
        speakers.entry(s.speaker_id.as_str()).or_insert(s);
        *stimuli_by_system.entry(s.system_id.clone()).or_insert(0) += 1;
    }
    let mut speakers_by_gender = BTreeMap::new();
    let mut speakers_by_dialect = BTreeMap::new();
    for s in speakers.values() {
        *speakers_by_gender.entry(s.gender).or_insert(0) += 1;
        *speakers_by_dialect.entry(s.dialect.clone()).or_insert(0) += 1;
    }

    CorpusStats {
        n_stimuli: included.len(),
        n_ratings: ratings.map(<[Rating]>::len),
        n_speakers: speakers.len(),
        total_minutes: durations.iter().sum::<f64>() / 60.0,
        duration_mean_s,
        duration_sd_s,
        words_mean,
        words_sd,
        speakers_by_gender,
        speakers_by_dialect,
        stimuli_by_system,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::testing::stimulus;

    #[test]
    fn single_stimulus() {
        let mut s = stimulus("a", "polly", "p1", Gender::F);
        s.text = "uno dos  tres cuatro".into();
        let m = Manifest::new(vec![s]).unwrap();
        let st = corpus_stats(&m, None);
        assert_eq!(st.n_stimuli, 1);
        assert!((st.total_minutes - 2.0 / 60.0).abs() < 1e-12);
        assert_eq!(st.words_mean, 4.0);
        assert_eq!(st.words_sd, 0.0);
        assert_eq!(st.duration_sd_s, 0.0);
    }

    #[test]
    fn totals_match_group_counts() {
        let m = Manifest::new(vec![
            stimulus("a", "polly", "p1", Gender::F),
            stimulus("b", "polly", "p1", Gender::F),
            stimulus("c", "azure", "z1", Gender::M),
            stimulus("d", "human", "h1", Gender::M),
        ])
        .unwrap();
        let st = corpus_stats(&m, None);
        assert_eq!(st.stimuli_by_system.values().sum::<usize>(), st.n_stimuli);
        assert_eq!(st.speakers_by_gender.values().sum::<usize>(), st.n_speakers);
        assert_eq!(st.speakers_by_dialect.values().sum::<usize>(), st.n_speakers);
        assert_eq!(st.speakers_by_gender[&Gender::M], 2);
    }

    #[test]
    fn restricted_to_rated() {
        let m = Manifest::new(vec![
            stimulus("a", "polly", "p1", Gender::F),
            stimulus("b", "azure", "z1", Gender::M),
        ])
        .unwrap();
        let r = Rating {
            session_id: "s".into(),
            stimulus_id: "b".into(),
            score: 3,
            listen_ms: 1,
            response_ms: 1,
            batch_index: 0,
            timestamp: chrono::Utc::now(),
        };
        let st = corpus_stats(&m, Some(&[r.clone(), r]));
        assert_eq!(st.n_stimuli, 1);
        assert_eq!(st.n_ratings, Some(2));
        assert_eq!(st.stimuli_by_system.keys().collect::<Vec<_>>(), vec!["azure"]);
    }
}
