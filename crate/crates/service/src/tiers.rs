//! Quality tiers used to stratify listening-test batches.

use std::collections::BTreeMap;

use esmos_core::corpus::Manifest;

use crate::{Result, ServiceError};

pub const N_TIERS: u8 = 5;

/// Where prior quality estimates come from. An explicit `quality_tier` in
/// the manifest always wins; otherwise a per-stimulus pilot MOS, then the
/// stimulus' system-level prior.
#[derive(Debug, Clone, Default)]
pub struct TierPriors {
    pub pilot: BTreeMap<String, f64>,
    pub system: BTreeMap<String, f64>,
}

/// Assigns each stimulus a tier in `1..=5`.
///
/// Stimuli without an explicit tier are ranked by prior MOS and cut into five
/// equal-count quantile bins. Tied priors share their mid-rank, so every
/// stimulus of a system with a single system-level prior lands in one tier.
pub fn assign_tiers(manifest: &Manifest, priors: &TierPriors) -> Result<BTreeMap<String, u8>> {
    let mut tiers = BTreeMap::new();
    let mut ranked: Vec<(f64, &str)> = Vec::new();
    for s in manifest.stimuli() {
        if let Some(t) = s.quality_tier {
            tiers.insert(s.stimulus_id.clone(), t);
            continue;
        }
        let prior = priors
            .pilot
            .get(&s.stimulus_id)
            .or_else(|| priors.system.get(&s.system_id))
            .copied()
            .ok_or_else(|| ServiceError::NoPrior(s.stimulus_id.clone()))?;
        if !prior.is_finite() {
            return Err(ServiceError::NoPrior(s.stimulus_id.clone()));
        }
        ranked.push((prior, &s.stimulus_id));
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));

    let n = ranked.len() as f64;
    let mut i = 0;
    while i < ranked.len() {
        let mut j = i;
        while j < ranked.len() && ranked[j].0 == ranked[i].0 {
            j += 1;
        }
        let mid = (i + j - 1) as f64 / 2.0;
        let tier = 1 + ((f64::from(N_TIERS) * mid / n) as u8).min(N_TIERS - 1);
        for (_, id) in &ranked[i..j] {
            tiers.insert((*id).to_string(), tier);
        }
        i = j;
    }
    Ok(tiers)
}

/// Stimulus ids grouped by tier, each list sorted.
pub(crate) fn inventory(tiers: &BTreeMap<String, u8>) -> BTreeMap<u8, Vec<String>> {
    let mut inv: BTreeMap<u8, Vec<String>> = (1..=N_TIERS).map(|t| (t, Vec::new())).collect();
    for (id, &t) in tiers {
        inv.entry(t).or_default().push(id.clone());
    }
    inv
}
