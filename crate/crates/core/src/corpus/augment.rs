use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{io_err, Augmentation, CorpusError, Manifest, Result, Stimulus};
use crate::dsp::{self, GriffinLim, StftParams, CANONICAL_SAMPLE_RATE};
use crate::exec::Execution;

/// How many speakers and samples each augmentation receives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub vtlp_speakers: usize,
    pub gl_tts_speakers: usize,
    pub gl_human_speakers: usize,
    pub samples_per_speaker: usize,
    pub vtlp_factor_range: (f64, f64),
    pub gl_iters: usize,
    pub stft: StftParams,
}

impl Default for AugmentationPlan {
    fn default() -> Self {
        Self {
            vtlp_speakers: 4,
            gl_tts_speakers: 1,
            gl_human_speakers: 1,
            samples_per_speaker: 100,
            vtlp_factor_range: (0.9, 1.1),
            gl_iters: 32,
            stft: StftParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum AugmentationMethod {
    Vtlp { factor: f64 },
    Gl { n_iters: usize, seed: u64 },
}

impl AugmentationMethod {
    fn tag(&self) -> Augmentation {
        match self {
            AugmentationMethod::Vtlp { .. } => Augmentation::Vtlp,
            AugmentationMethod::Gl { .. } => Augmentation::Gl,
        }
    }

    fn suffix(&self) -> &'static str {
        match self {
            AugmentationMethod::Vtlp { .. } => "VTLP",
            AugmentationMethod::Gl { .. } => "GL",
        }
    }
}

/// One augmented output: which source, how, and where it lands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationJob {
    pub source_stimulus_id: String,
    pub output_stimulus_id: String,
    pub output_speaker_id: String,
    pub output_audio_path: PathBuf,
    #[serde(flatten)]
    pub method: AugmentationMethod,
    #[serde(default)]
    pub stft: StftParams,
}

impl AugmentationJob {
    pub fn write_jsonl(path: &Path, jobs: &[AugmentationJob]) -> Result<()> {
        super::write_jsonl(path, jobs)
    }

    pub fn read_jsonl(path: &Path) -> Result<Vec<AugmentationJob>> {
        super::read_jsonl(path)
    }
}

/// Speakers with at least `min` unaugmented stimuli, ids sorted.
fn eligible(manifest: &Manifest, human: bool, min: usize) -> BTreeMap<&str, Vec<&Stimulus>> {
    let mut by_speaker: BTreeMap<&str, Vec<&Stimulus>> = BTreeMap::new();
    for s in manifest.stimuli() {
        if !s.is_augmented() && s.is_human() == human {
            by_speaker.entry(s.speaker_id.as_str()).or_default().push(s);
        }
    }
    by_speaker.retain(|_, v| v.len() >= min);
    by_speaker
}

fn make_job(source: &Stimulus, method: AugmentationMethod, stft: StftParams) -> AugmentationJob {
    let output_stimulus_id = format!("{}_{}", source.stimulus_id, method.suffix().to_lowercase());
    AugmentationJob {
        source_stimulus_id: source.stimulus_id.clone(),
        output_speaker_id: format!("{}-{}", source.speaker_id, method.suffix()),
        output_audio_path: PathBuf::from("augmented").join(format!("{output_stimulus_id}.wav")),
        output_stimulus_id,
        method,
        stft,
    }
}

/// Chooses speakers and samples for VTLP and Griffin-Lim augmentation.
///
/// Eligible TTS speakers (and, separately, human speakers) are shuffled with
/// the seeded rng; the first `vtlp_speakers` TTS speakers get VTLP, the
/// next `gl_tts_speakers` get Griffin-Lim, and `gl_human_speakers` humans get
/// Griffin-Lim. From each chosen speaker `samples_per_speaker` stimuli are
/// drawn without replacement.
pub fn plan_augmentation(
    manifest: &Manifest,
    plan: &AugmentationPlan,
    seed: u64,
) -> Result<Vec<AugmentationJob>> {
    let n = plan.samples_per_speaker;
    let tts = eligible(manifest, false, n);
    let humans = eligible(manifest, true, n);
    let tts_needed = plan.vtlp_speakers + plan.gl_tts_speakers;
    if tts.len() < tts_needed {
        return Err(CorpusError::InsufficientSpeakers(format!(
            "{tts_needed} TTS speakers with >= {n} samples required, found {}",
            tts.len()
        )));
    }
    if humans.len() < plan.gl_human_speakers {
        return Err(CorpusError::InsufficientSpeakers(format!(
            "{} human speakers with >= {n} samples required, found {}",
            plan.gl_human_speakers,
            humans.len()
        )));
    }
    let (lo, hi) = plan.vtlp_factor_range;
    if !(lo <= hi && lo > 0.0) {
        return Err(CorpusError::InvalidRatios(format!("bad VTLP factor range {lo}..{hi}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tts_ids: Vec<&str> = tts.keys().copied().collect();
    tts_ids.shuffle(&mut rng);
    let mut human_ids: Vec<&str> = humans.keys().copied().collect();
    human_ids.shuffle(&mut rng);

    let pick = |pool: &[&Stimulus], rng: &mut ChaCha8Rng| -> Vec<Stimulus> {
        let mut chosen: Vec<&Stimulus> = pool.choose_multiple(rng, n).copied().collect();
        chosen.sort_by(|a, b| a.stimulus_id.cmp(&b.stimulus_id));
        chosen.into_iter().cloned().collect()
    };

    let mut jobs = Vec::new();
    for speaker in &tts_ids[..plan.vtlp_speakers] {
        for s in pick(&tts[speaker], &mut rng) {
            let factor = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
            jobs.push(make_job(&s, AugmentationMethod::Vtlp { factor }, plan.stft));
        }
    }
    let gl_speakers = tts_ids[plan.vtlp_speakers..tts_needed]
        .iter()
        .map(|sp| &tts[sp])
        .chain(human_ids[..plan.gl_human_speakers].iter().map(|sp| &humans[sp]));
    for pool in gl_speakers {
        for s in pick(pool, &mut rng) {
            let method = AugmentationMethod::Gl { n_iters: plan.gl_iters, seed: rng.gen() };
            jobs.push(make_job(&s, method, plan.stft));
        }
    }
    Ok(jobs)
}

fn run_job(job: &AugmentationJob, manifest: &Manifest, audio_root: &Path) -> Result<Stimulus> {
    let source = manifest
        .get(&job.source_stimulus_id)
        .ok_or_else(|| CorpusError::UnknownStimulus(job.source_stimulus_id.clone()))?;
    let src_path = audio_root.join(&source.audio_path);
    if !src_path.is_file() {
        return Err(CorpusError::MissingAudio(src_path));
    }
    let dsp_err = |source| CorpusError::Dsp { job: job.output_stimulus_id.clone(), source };
    let wave = dsp::load_audio(&src_path, CANONICAL_SAMPLE_RATE).map_err(dsp_err)?;
    let out = match job.method {
        AugmentationMethod::Vtlp { factor } => dsp::vtlp(&wave, factor, job.stft),
        AugmentationMethod::Gl { n_iters, seed } => dsp::stft(&wave, job.stft).and_then(|spec| {
            GriffinLim { n_iters, momentum: 0.0, seed }
                .run(&spec.magnitude())
                .map(|o| o.waveform)
        }),
    }
    .map_err(dsp_err)?
    .peak_limited();

    let out_path = audio_root.join(&job.output_audio_path);
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    dsp::write_wav_pcm16(&out_path, &out).map_err(dsp_err)?;

    Ok(Stimulus {
        stimulus_id: job.output_stimulus_id.clone(),
        audio_path: job.output_audio_path.clone(),
        speaker_id: job.output_speaker_id.clone(),
        augmentation: job.method.tag(),
        source_stimulus_id: Some(source.stimulus_id.clone()),
        duration_s: out.duration_s(),
        quality_tier: None,
        ..source.clone()
    })
}

/// Executes augmentation jobs, writing one PCM16 WAV per job under
/// `audio_root`, and returns the new manifest entries in job order.
pub fn run_augmentation(
    jobs: &[AugmentationJob],
    manifest: &Manifest,
    audio_root: &Path,
    exec: Execution,
) -> Result<Vec<Stimulus>> {
    exec.try_map(jobs, |job| run_job(job, manifest, audio_root))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::testing::stimulus;
    use crate::corpus::Gender;

    fn corpus(tts_speakers: usize, humans: usize, per: usize) -> Manifest {
        let mut v = Vec::new();
        for sp in 0..tts_speakers {
            for i in 0..per {
                v.push(stimulus(&format!("t{sp}_{i}"), &format!("sys{}", sp % 3), &format!("t{sp}"), Gender::F));
            }
        }
        for sp in 0..humans {
            for i in 0..per {
                v.push(stimulus(&format!("h{sp}_{i}"), "human", &format!("h{sp}"), Gender::M));
            }
        }
        Manifest::new(v).unwrap()
    }

    #[test]
    fn default_plan_counts_and_factors() {
        let m = corpus(8, 2, 120);
        let jobs = plan_augmentation(&m, &AugmentationPlan::default(), 42).unwrap();
        let vtlp: Vec<_> = jobs.iter().filter(|j| matches!(j.method, AugmentationMethod::Vtlp { .. })).collect();
        let gl: Vec<_> = jobs.iter().filter(|j| matches!(j.method, AugmentationMethod::Gl { .. })).collect();
        assert_eq!(vtlp.len(), 400);
        assert_eq!(gl.len(), 200);
        for j in &vtlp {
            let AugmentationMethod::Vtlp { factor } = j.method else { unreachable!() };
            assert!((0.9..=1.1).contains(&factor));
        }
        let gl_human = gl.iter().filter(|j| m.get(&j.source_stimulus_id).unwrap().is_human()).count();
        assert_eq!(gl_human, 100);
        let vtlp_speakers: std::collections::BTreeSet<_> =
            vtlp.iter().map(|j| m.get(&j.source_stimulus_id).unwrap().speaker_id.clone()).collect();
        assert_eq!(vtlp_speakers.len(), 4);
        assert!(vtlp.iter().all(|j| !m.get(&j.source_stimulus_id).unwrap().is_human()));
    }

    #[test]
    fn plan_is_deterministic() {
        let m = corpus(6, 1, 100);
        let a = plan_augmentation(&m, &AugmentationPlan::default(), 7).unwrap();
        let b = plan_augmentation(&m, &AugmentationPlan::default(), 7).unwrap();
        assert_eq!(a, b);
        let c = plan_augmentation(&m, &AugmentationPlan::default(), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn insufficient_speakers() {
        let m = corpus(4, 1, 100);
        assert!(matches!(
            plan_augmentation(&m, &AugmentationPlan::default(), 1),
            Err(CorpusError::InsufficientSpeakers(_))
        ));
        let m = corpus(6, 1, 99);
        assert!(plan_augmentation(&m, &AugmentationPlan::default(), 1).is_err());
    }

    #[test]
    fn job_file_round_trip() {
        let m = corpus(5, 1, 100);
        let jobs = plan_augmentation(&m, &AugmentationPlan::default(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("jobs.jsonl");
        AugmentationJob::write_jsonl(&p, &jobs).unwrap();
        assert_eq!(AugmentationJob::read_jsonl(&p).unwrap(), jobs);
    }
}
