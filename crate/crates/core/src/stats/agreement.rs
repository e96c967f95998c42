use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{GroupBy, Result, StatsError};
use crate::corpus::Manifest;
use crate::ratings::Rating;

/// Raters × groups score matrix with missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    raters: Vec<String>,
    groups: Vec<String>,
    /// Row-major, one row per rater.
    cells: Vec<Option<f64>>,
}

impl RatingMatrix {
    pub fn new(raters: Vec<String>, groups: Vec<String>, cells: Vec<Option<f64>>) -> Result<Self> {
        if raters.len() < 2 || groups.len() < 2 {
            return Err(StatsError::Invalid(format!(
                "need at least 2 raters and 2 groups, got {} x {}",
                raters.len(),
                groups.len()
            )));
        }
        if cells.len() != raters.len() * groups.len() {
            return Err(StatsError::LengthMismatch(cells.len(), raters.len() * groups.len()));
        }
        if let Some(v) = cells.iter().flatten().find(|v| !(1.0..=5.0).contains(*v)) {
            return Err(StatsError::Invalid(format!("cell value {v} outside [1, 5]")));
        }
        Ok(Self { raters, groups, cells })
    }

    /// Builds a matrix from rows of optional scores with generated ids.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n_groups = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_groups) {
            return Err(StatsError::Invalid("ragged rows".into()));
        }
        Self::new(
            (0..rows.len()).map(|i| format!("r{i}")).collect(),
            (0..n_groups).map(|j| format!("g{j}")).collect(),
            rows.iter().flatten().copied().collect(),
        )
    }

    /// One row per session, one column per group; a cell is the mean of that
    /// rater's scores for stimuli in the group.
    pub fn from_ratings(ratings: &[Rating], manifest: &Manifest, by: GroupBy) -> Result<Self> {
        let mut acc: BTreeMap<(&str, String), (f64, usize)> = BTreeMap::new();
        let mut raters = BTreeMap::new();
        let mut groups = BTreeMap::new();
        for r in ratings {
            let s = manifest
                .get(&r.stimulus_id)
                .ok_or_else(|| StatsError::Invalid(format!("unknown stimulus {:?}", r.stimulus_id)))?;
            let g = by.key(s);
            raters.insert(r.session_id.as_str(), ());
            groups.insert(g.clone(), ());
            let e = acc.entry((r.session_id.as_str(), g)).or_insert((0.0, 0));
            e.0 += f64::from(r.score);
            e.1 += 1;
        }
        let rater_ids: Vec<String> = raters.keys().map(|s| s.to_string()).collect();
        let group_ids: Vec<String> = groups.into_keys().collect();
        let mut cells = Vec::with_capacity(rater_ids.len() * group_ids.len());
        for r in &rater_ids {
            for g in &group_ids {
                cells.push(acc.get(&(r.as_str(), g.clone())).map(|(s, n)| s / *n as f64));
            }
        }
        Self::new(rater_ids, group_ids, cells)
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn n_raters(&self) -> usize {
        self.raters.len()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn get(&self, rater: usize, group: usize) -> Option<f64> {
        self.cells[rater * self.groups.len() + group]
    }

    /// Present values of one group column.
    pub fn column(&self, group: usize) -> Vec<f64> {
        (0..self.n_raters()).filter_map(|r| self.get(r, group)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMetric {
    #[default]
    Interval,
    Ordinal,
}

/// Ordinal distance table over sorted distinct values.
struct OrdinalScale {
    values: Vec<f64>,
    counts: Vec<f64>,
    cumulative: Vec<f64>,
}

impl OrdinalScale {
    fn new(all: &[f64]) -> Self {
        let mut sorted = all.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut values: Vec<f64> = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        for v in sorted {
            if values.last() == Some(&v) {
                *counts.last_mut().expect("nonempty") += 1.0;
            } else {
                values.push(v);
                counts.push(1.0);
            }
        }
        let mut cumulative = Vec::with_capacity(counts.len());
        let mut run = 0.0;
        for c in &counts {
            run += c;
            cumulative.push(run);
        }
        Self { values, counts, cumulative }
    }

    fn index(&self, v: f64) -> usize {
        self.values.binary_search_by(|x| x.total_cmp(&v)).expect("value from the same data")
    }

    fn delta(&self, a: usize, b: usize) -> f64 {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let below = if lo == 0 { 0.0 } else { self.cumulative[lo - 1] };
        let d = self.cumulative[hi] - below - (self.counts[lo] + self.counts[hi]) / 2.0;
        d * d
    }
}

/// Krippendorff's alpha with groups as units and raters as coders.
///
/// Units with fewer than two values are not pairable and are dropped.
/// `alpha = 1 - D_o / D_e`, where `D_o` averages within-unit disagreement
/// weighted by `1 / (m_u - 1)` and `D_e` is the disagreement between all
/// pairable values regardless of unit.
pub fn krippendorff_alpha(matrix: &RatingMatrix, metric: AlphaMetric) -> Result<f64> {
    let units: Vec<Vec<f64>> = (0..matrix.n_groups())
        .map(|g| matrix.column(g))
        .filter(|c| c.len() >= 2)
        .collect();
    let all: Vec<f64> = units.iter().flatten().copied().collect();
    let n = all.len() as f64;
    if units.is_empty() {
        return Err(StatsError::NoPairableValues);
    }

    let (observed, expected) = match metric {
        AlphaMetric::Interval => {
            // sum over ordered pairs i != j of (a_i - a_j)^2 = 2 (m S2 - S1^2)
            let pair_sum = |xs: &[f64]| {
                let m = xs.len() as f64;
                let s1: f64 = xs.iter().sum();
                let s2: f64 = xs.iter().map(|x| x * x).sum();
                2.0 * (m * s2 - s1 * s1)
            };
            let observed: f64 =
                units.iter().map(|u| pair_sum(u) / (u.len() as f64 - 1.0)).sum::<f64>() / n;
            let expected = pair_sum(&all) / (n * (n - 1.0));
            (observed, expected)
        }
        AlphaMetric::Ordinal => {
            let scale = OrdinalScale::new(&all);
            let mut observed = 0.0;
            for u in &units {
                let idx: Vec<usize> = u.iter().map(|v| scale.index(*v)).collect();
                let mut s = 0.0;
                for (i, &a) in idx.iter().enumerate() {
                    for &b in &idx[i + 1..] {
                        s += 2.0 * scale.delta(a, b);
                    }
                }
                observed += s / (u.len() as f64 - 1.0);
            }
            observed /= n;
            let mut expected = 0.0;
            for a in 0..scale.values.len() {
                for b in a + 1..scale.values.len() {
                    expected += 2.0 * scale.counts[a] * scale.counts[b] * scale.delta(a, b);
                }
            }
            expected /= n * (n - 1.0);
            (observed, expected)
        }
    };
    if expected <= 0.0 {
        return Err(StatsError::Constant("Krippendorff's alpha"));
    }
    Ok(1.0 - observed / expected)
}

/// Two-way ANOVA decomposition behind ICC(2,1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IccAnova {
    /// Number of targets (groups).
    pub n: usize,
    /// Number of raters.
    pub k: usize,
    pub ms_rows: f64,
    pub ms_cols: f64,
    pub ms_error: f64,
    pub icc: f64,
}

/// ICC(2,1) after imputing missing cells with their group mean.
///
/// Groups are the targets (n) and raters the judges (k):
/// `(MSR - MSE) / (MSR + (k-1) MSE + k (MSC - MSE) / n)`.
pub fn icc_anova(matrix: &RatingMatrix) -> Result<IccAnova> {
    let n = matrix.n_groups();
    let k = matrix.n_raters();
    let mut table = vec![0.0; n * k];
    for g in 0..n {
        let col = matrix.column(g);
        if col.is_empty() {
            return Err(StatsError::EmptyColumn(matrix.groups()[g].clone()));
        }
        let fill = col.iter().sum::<f64>() / col.len() as f64;
        for r in 0..k {
            table[g * k + r] = matrix.get(r, g).unwrap_or(fill);
        }
    }

    let (nf, kf) = (n as f64, k as f64);
    let grand = table.iter().sum::<f64>() / (nf * kf);
    let target_means: Vec<f64> =
        (0..n).map(|g| table[g * k..(g + 1) * k].iter().sum::<f64>() / kf).collect();
    let rater_means: Vec<f64> =
        (0..k).map(|r| (0..n).map(|g| table[g * k + r]).sum::<f64>() / nf).collect();
    let ss_total: f64 = table.iter().map(|y| (y - grand).powi(2)).sum();
    let ss_rows = kf * target_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_cols = nf * rater_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_error = (ss_total - ss_rows - ss_cols).max(0.0);

    let ms_rows = ss_rows / (nf - 1.0);
    let ms_cols = ss_cols / (kf - 1.0);
    let ms_error = ss_error / ((nf - 1.0) * (kf - 1.0));
    let denom = ms_rows + (kf - 1.0) * ms_error + kf * (ms_cols - ms_error) / nf;
    if denom.abs() < 1e-300 {
        return Err(StatsError::Constant("ICC(2,1)"));
    }
    Ok(IccAnova { n, k, ms_rows, ms_cols, ms_error, icc: (ms_rows - ms_error) / denom })
}

pub fn icc_2_1(matrix: &RatingMatrix) -> Result<f64> {
    icc_anova(matrix).map(|a| a.icc)
}
