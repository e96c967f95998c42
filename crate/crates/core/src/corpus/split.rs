use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Manifest, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    /// 3139 / 393 / 392, rounded.
    fn default() -> Self {
        Self { train: 0.8, val: 0.1, test: 0.1 }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<[f64; 3]> {
        let r = [self.train, self.val, self.test];
        if r.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(CorpusError::InvalidRatios(format!("{r:?}: all must be positive")));
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(CorpusError::InvalidRatios(format!("{r:?} sums to {sum}")));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SplitRow {
    stimulus_id: String,
    split: Split,
}

/// Total, disjoint map from stimulus id to split.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitAssignment {
    assignments: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn from_map(assignments: BTreeMap<String, Split>) -> Self {
        Self { assignments }
    }

    pub fn get(&self, stimulus_id: &str) -> Option<Split> {
        self.assignments.get(stimulus_id).copied()
    }

    pub fn ids(&self, split: Split) -> impl Iterator<Item = &str> {
        self.assignments.iter().filter(move |(_, s)| **s == split).map(|(k, _)| k.as_str())
    }

    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for s in self.assignments.values() {
            c[*s as usize] += 1;
        }
        c
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Checks totality over `manifest` and that no speaker or system spans
    /// two splits.
    pub fn validate(&self, manifest: &Manifest) -> Result<()> {
        let mut speaker: HashMap<&str, Split> = HashMap::new();
        let mut system: HashMap<&str, Split> = HashMap::new();
        for s in manifest.stimuli() {
            let split = self
                .get(&s.stimulus_id)
                .ok_or_else(|| CorpusError::NotDisjoint(format!("{} unassigned", s.stimulus_id)))?;
            for (map, key, what) in [
                (&mut speaker, s.speaker_id.as_str(), "speaker"),
                (&mut system, s.system_id.as_str(), "system"),
            ] {
                let prev = *map.entry(key).or_insert(split);
                if prev != split {
                    return Err(CorpusError::NotDisjoint(format!(
                        "{what} {key:?} in both {prev:?} and {split:?}"
                    )));
                }
            }
        }
        if self.len() != manifest.len() {
            return Err(CorpusError::NotDisjoint("assignment covers unknown stimuli".into()));
        }
        Ok(())
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let rows: Vec<SplitRow> = self
            .assignments
            .iter()
            .map(|(k, v)| SplitRow { stimulus_id: k.clone(), split: *v })
            .collect();
        super::write_jsonl(path, &rows)
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let rows: Vec<SplitRow> = super::read_jsonl(path)?;
        Ok(Self { assignments: rows.into_iter().map(|r| (r.stimulus_id, r.split)).collect() })
    }
}

/// Minimal union-find over string keys.
struct Components {
    parent: Vec<usize>,
    ids: HashMap<String, usize>,
}

impl Components {
    fn new() -> Self {
        Self { parent: Vec::new(), ids: HashMap::new() }
    }

    fn node(&mut self, key: String) -> usize {
        let next = self.parent.len();
        let id = *self.ids.entry(key).or_insert(next);
        if id == next {
            self.parent.push(next);
        }
        id
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Speaker- and system-disjoint train/val/test split.
///
/// Stimuli are grouped into connected components of the speaker–system
/// relation (augmented speakers share their source's system, so they travel
/// with it). Groups are visited largest first, equal sizes in seeded random
/// order, and each goes to the split furthest below its target count.
pub fn split_by_speaker(
    manifest: &Manifest,
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitAssignment> {
    let ratios = ratios.validate()?;
    let mut uf = Components::new();
    let mut stimulus_node = Vec::with_capacity(manifest.len());
    for s in manifest.stimuli() {
        let sp = uf.node(format!("speaker:{}", s.speaker_id));
        let sy = uf.node(format!("system:{}", s.system_id));
        uf.union(sp, sy);
        stimulus_node.push(sp);
    }
    let mut groups: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    let mut labels: HashMap<usize, String> = HashMap::new();
    for (s, &node) in manifest.stimuli().iter().zip(&stimulus_node) {
        let root = uf.find(node);
        let label = labels.entry(root).or_insert_with(|| s.system_id.clone()).clone();
        groups.entry(label).or_default().push(&s.stimulus_id);
    }
    if groups.len() < 3 {
        return Err(CorpusError::TooFewGroups(groups.len()));
    }

    let mut order: Vec<(String, Vec<&str>)> = groups.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order.sort_by_key(|(_, members)| std::cmp::Reverse(members.len()));

    let total = manifest.len() as f64;
    let targets: Vec<f64> = ratios.iter().map(|r| r * total).collect();
    let mut filled = [0usize; 3];
    let mut placed: [Vec<usize>; 3] = Default::default();
    for (gi, (_, members)) in order.iter().enumerate() {
        let best = (0..3)
            .max_by(|&a, &b| {
                let da = targets[a] - filled[a] as f64;
                let db = targets[b] - filled[b] as f64;
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .unwrap_or(0);
        filled[best] += members.len();
        placed[best].push(gi);
    }

    // Every split must receive at least one group.
    while let Some(empty) = (0..3).find(|&i| placed[i].is_empty()) {
        let donor = (0..3).max_by_key(|&i| placed[i].len()).unwrap_or(0);
        let (pos, _) = placed[donor]
            .iter()
            .enumerate()
            .min_by_key(|(_, &g)| order[g].1.len())
            .ok_or(CorpusError::TooFewGroups(order.len()))?;
        let g = placed[donor].remove(pos);
        placed[empty].push(g);
    }

    let mut assignments = BTreeMap::new();
    for (split_idx, gs) in placed.iter().enumerate() {
        for &g in gs {
            for id in &order[g].1 {
                assignments.insert((*id).to_string(), Split::ALL[split_idx]);
            }
        }
    }
    let out = SplitAssignment { assignments };
    out.validate(manifest)?;
    Ok(out)
}

/// Distinct speakers per split, for reporting.
pub fn speakers_per_split(
    assignment: &SplitAssignment,
    manifest: &Manifest,
) -> [BTreeSet<String>; 3] {
    let mut out: [BTreeSet<String>; 3] = Default::default();
    for s in manifest.stimuli() {
        if let Some(split) = assignment.get(&s.stimulus_id) {
            out[split as usize].insert(s.speaker_id.clone());
        }
    }
    out
}
