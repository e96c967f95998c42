use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{mean_sd, Result, StatsError};
use crate::corpus::{Augmentation, Manifest, Stimulus};
use crate::ratings::Rating;

/// Column key used when aggregating ratings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    /// TTS system (or `human`). Augmented stimuli form their own group,
    /// `<system>+vtlp` / `<system>+gl`.
    #[default]
    System,
    /// Voice; augmented voices already carry a suffixed speaker id.
    Speaker,
}

impl GroupBy {
    pub fn key(self, s: &Stimulus) -> String {
        match self {
            GroupBy::Speaker => s.speaker_id.clone(),
            GroupBy::System => match s.augmentation {
                Augmentation::None => s.system_id.clone(),
                Augmentation::Vtlp => format!("{}+vtlp", s.system_id),
                Augmentation::Gl => format!("{}+gl", s.system_id),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

/// Scores per group, keyed by [`GroupBy::key`].
pub fn group_scores(
    ratings: &[Rating],
    manifest: &Manifest,
    by: GroupBy,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in ratings {
        let s = manifest
            .get(&r.stimulus_id)
            .ok_or_else(|| StatsError::Invalid(format!("unknown stimulus {:?}", r.stimulus_id)))?;
        out.entry(by.key(s)).or_default().push(f64::from(r.score));
    }
    Ok(out)
}

/// Mean, sample sd and count per group, sorted by mean descending (ties by
/// group id).
pub fn mos_table(groups: &BTreeMap<String, Vec<f64>>) -> Result<Vec<GroupStats>> {
    if groups.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut table = Vec::with_capacity(groups.len());
    for (group, scores) in groups {
        if scores.is_empty() {
            return Err(StatsError::Invalid(format!("group {group:?} has no ratings")));
        }
        let (mean, sd) = mean_sd(scores);
        table.push(GroupStats { group: group.clone(), mean, sd, n: scores.len() });
    }
    table.sort_by(|a, b| b.mean.total_cmp(&a.mean).then_with(|| a.group.cmp(&b.group)));
    Ok(table)
}

/// Equal-frequency bins over group-level MOS.
///
/// Groups are ordered by ascending mean (ties by group id) and the `i`-th
/// of `n` goes to bin `i * k / n`, so bin 0 holds the lowest MOS and bin
/// sizes differ by at most one.
pub fn bin_by_mos(table: &[GroupStats], k: usize) -> Result<BTreeMap<String, usize>> {
    if k < 2 {
        return Err(StatsError::Invalid(format!("need at least 2 bins, got {k}")));
    }
    if k > table.len() {
        return Err(StatsError::Invalid(format!("{k} bins for {} groups", table.len())));
    }
    let mut order: Vec<&GroupStats> = table.iter().collect();
    order.sort_by(|a, b| a.mean.total_cmp(&b.mean).then_with(|| a.group.cmp(&b.group)));
    let n = order.len();
    Ok(order.iter().enumerate().map(|(i, g)| (g.group.clone(), i * k / n)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn groups(pairs: &[(&str, &[f64])]) -> BTreeMap<String, Vec<f64>> {
        pairs.iter().map(|(g, v)| (g.to_string(), v.to_vec())).collect()
    }

    #[test]
    fn single_group_mean_and_sd() {
        let t = mos_table(&groups(&[("a", &[3.0, 5.0])])).unwrap();
        assert_eq!(t[0].mean, 4.0);
        assert!((t[0].sd - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(t[0].n, 2);
    }

    #[test]
    fn equal_scores_and_singletons_have_zero_sd() {
        let t = mos_table(&groups(&[("a", &[4.0, 4.0, 4.0]), ("b", &[2.0])])).unwrap();
        assert!(t.iter().all(|g| g.sd == 0.0));
        assert_eq!(t[0].group, "a");
    }

    #[test]
    fn empty_rejected() {
        assert_eq!(mos_table(&BTreeMap::new()), Err(StatsError::Empty));
    }

    #[test]
    fn ten_groups_five_bins() {
        let table: Vec<GroupStats> = (0..10)
            .map(|i| GroupStats { group: format!("g{i}"), mean: i as f64 * 0.4 + 1.0, sd: 0.0, n: 1 })
            .collect();
        let bins = bin_by_mos(&table, 5).unwrap();
        let mut sizes = [0; 5];
        for b in bins.values() {
            sizes[*b] += 1;
        }
        assert_eq!(sizes, [2; 5]);
        let mut by_mean: Vec<&GroupStats> = table.iter().collect();
        by_mean.sort_by(|a, b| a.mean.total_cmp(&b.mean));
        let idx: Vec<usize> = by_mean.iter().map(|g| bins[&g.group]).collect();
        assert!(idx.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn bin_count_errors() {
        let table = vec![GroupStats { group: "a".into(), mean: 1.0, sd: 0.0, n: 1 }];
        assert!(bin_by_mos(&table, 2).is_err());
        assert!(bin_by_mos(&table, 1).is_err());
    }
}
