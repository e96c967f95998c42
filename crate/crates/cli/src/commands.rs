use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fs;
use std::hash::{BuildHasher, Hasher};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use esmos_core::corpus::{
    corpus_stats as summarize, load_manifest, plan_augmentation, run_augmentation, speakers_per_split,
    split_by_speaker, write_manifest, AugmentationJob, AugmentationPlan, Split, SplitAssignment, SplitRatios,
};
use esmos_core::densemos::{
    evaluate as eval_model, load_checkpoint, save_checkpoint, split_samples, train as train_model,
    write_predictions, EvalOptions, TrainConfig,
};
use esmos_core::exec::Execution;
use esmos_core::ratings::{
    filter_ratings, per_stimulus_mos, read_ratings, HumanAggregation, HumanComparison, Rating, ValidationRules,
};
use esmos_service::{assign_tiers, AppState, Store, TierPriors, ADMIN_TOKEN_ENV};
use serde::Serialize;
use serde_json::json;

use crate::report::{self, write_atomic};
use crate::{
    Aggregation, AugmentArgs, Comparison, CorpusStatsArgs, EvaluateArgs, FilterArgs, RuleArgs, ServeArgs,
    SplitArgs, Subset, TrainArgs,
};

/// Runs `write` against a temporary sibling of `path`, then renames it into place.
fn atomically(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    write(&tmp)?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))
}

pub fn augment(args: AugmentArgs, exec: Execution, report: Option<&Path>) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let plan = AugmentationPlan {
        vtlp_speakers: args.vtlp_speakers,
        gl_tts_speakers: args.gl_tts_speakers,
        gl_human_speakers: args.gl_human_speakers,
        samples_per_speaker: args.samples_per_speaker,
        gl_iters: args.gl_iters,
        ..AugmentationPlan::default()
    };
    let jobs = plan_augmentation(&manifest, &plan, args.seed)?;
    if let Some(path) = &args.jobs {
        atomically(path, |tmp| Ok(AugmentationJob::write_jsonl(tmp, &jobs)?))?;
    }
    tracing::info!(jobs = jobs.len(), "running augmentation");
    let added = run_augmentation(&jobs, &manifest, &args.audio_root, exec)?;
    let extended = manifest.extended(added.iter().cloned())?;
    atomically(&args.out, |tmp| Ok(write_manifest(tmp, extended.stimuli())?))?;

    let mut by_speaker: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &added {
        *by_speaker.entry(&s.speaker_id).or_default() += 1;
    }
    let result = json!({
        "seed": args.seed,
        "plan": plan,
        "n_jobs": jobs.len(),
        "n_stimuli_in": manifest.len(),
        "n_stimuli_out": extended.len(),
        "new_speakers": by_speaker,
        "manifest": args.out,
    });
    report::write(&report.map_or_else(|| report::beside(&args.out), Path::to_path_buf), "augment", &result)
}

pub fn split(args: SplitArgs, report: Option<&Path>) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let ratios = SplitRatios { train: args.train, val: args.val, test: args.test };
    let assignment = split_by_speaker(&manifest, ratios, args.seed)?;
    assignment.validate(&manifest)?;
    atomically(&args.out, |tmp| Ok(assignment.write_jsonl(tmp)?))?;

    let speakers = speakers_per_split(&assignment, &manifest);
    let counts = assignment.counts();
    let per_split: BTreeMap<&str, _> = Split::ALL
        .iter()
        .zip(counts)
        .zip(&speakers)
        .map(|((split, n), sp)| (split_name(*split), json!({ "stimuli": n, "speakers": sp })))
        .collect();
    let result = json!({
        "seed": args.seed,
        "ratios": [args.train, args.val, args.test],
        "splits": per_split,
        "assignment": args.out,
    });
    report::write(&report.map_or_else(|| report::beside(&args.out), Path::to_path_buf), "split", &result)
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

fn random_seed() -> u64 {
    let mut h = std::collections::hash_map::RandomState::new().build_hasher();
    h.write_u128(std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_nanos()));
    h.finish()
}

pub fn serve(args: ServeArgs, report: Option<&Path>) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let mut priors = TierPriors::default();
    if let Some(path) = &args.pilot {
        let pilot = read_ratings(path)?;
        priors.pilot = per_stimulus_mos(&pilot).into_iter().map(|(id, (mean, _))| (id, mean)).collect();
    }
    if let Some(path) = &args.system_priors {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        priors.system = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    }
    let tiers = assign_tiers(&manifest, &priors)?;
    let mut tier_counts = BTreeMap::<u8, usize>::new();
    for t in tiers.values() {
        *tier_counts.entry(*t).or_default() += 1;
    }
    let seed = args.seed.unwrap_or_else(random_seed);
    let store = Store::open(&args.log, &tiers, seed)?;
    let admin_token = std::env::var(ADMIN_TOKEN_ENV).ok().filter(|t| !t.is_empty());
    if admin_token.is_none() {
        tracing::warn!("{ADMIN_TOKEN_ENV} not set; /api/export is disabled");
    }

    let result = json!({
        "addr": args.addr.to_string(),
        "n_stimuli": manifest.len(),
        "tiers": tier_counts,
        "seeded": args.seed.is_some(),
        "sessions_replayed": store.n_sessions(),
        "export_enabled": admin_token.is_some(),
        "log": args.log,
    });
    report::write(&report.map_or_else(|| report::beside(&args.log), Path::to_path_buf), "serve", &result)?;

    let state = AppState {
        store: Arc::new(store),
        manifest: Arc::new(manifest),
        audio_root: args.audio_root,
        admin_token,
    };
    let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
    runtime.block_on(esmos_service::serve(args.addr, state)).context("serving")
}

impl RuleArgs {
    fn rules(&self) -> ValidationRules {
        ValidationRules {
            min_response_fraction: (!self.no_timing_rule).then_some(self.min_response_fraction),
            exclude_human_eq_augmented: !self.no_participant_rule,
            human_comparison: match self.human_comparison {
                Comparison::AtMost => HumanComparison::AtMost,
                Comparison::Equal => HumanComparison::Equal,
            },
            human_aggregation: match self.human_aggregation {
                Aggregation::AnyPair => HumanAggregation::AnyPair,
                Aggregation::Mean => HumanAggregation::Mean,
            },
        }
    }
}

/// A parsed rating together with its original JSON line.
#[derive(Clone)]
struct Row {
    rating: Rating,
    raw: String,
}

impl Borrow<Rating> for Row {
    fn borrow(&self) -> &Rating {
        &self.rating
    }
}

fn read_rows(path: &Path) -> Result<Vec<Row>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rating: Rating =
            serde_json::from_str(line).with_context(|| format!("{}, line {}", path.display(), i + 1))?;
        rating.validate().with_context(|| format!("{}, line {}", path.display(), i + 1))?;
        rows.push(Row { rating, raw: line.to_string() });
    }
    Ok(rows)
}

pub fn filter(args: FilterArgs, report: Option<&Path>) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let rows = read_rows(&args.ratings)?;
    let rules = args.rules.rules();
    let outcome = filter_ratings(&rows, &manifest, &rules)?;
    let mut text = String::new();
    for row in &outcome.valid {
        text.push_str(&row.raw);
        text.push('\n');
    }
    write_atomic(&args.out, text.as_bytes())?;
    tracing::info!(
        input = outcome.report.n_input,
        valid = outcome.report.n_valid,
        "filtered ratings"
    );
    let result = json!({ "rules": rules, "report": outcome.report, "valid": args.out });
    report::write(&report.map_or_else(|| report::beside(&args.out), Path::to_path_buf), "filter-ratings", &result)
}

#[derive(Serialize)]
struct TrainReport<'a> {
    config: &'a TrainConfig,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    epochs_run: usize,
    best_epoch: usize,
    best_val_loss: f64,
    checkpoint: &'a Path,
    checkpoint_sha256: String,
}

pub fn train(args: TrainArgs, exec: Execution, report: Option<&Path>) -> Result<()> {
    if args.out.extension().is_some_and(|e| e == "json") {
        bail!("--out must not end in .json; that name is reserved for the sidecar");
    }
    let config = TrainConfig {
        lr_alpha: args.lr_alpha,
        lr_mlp: args.lr_mlp,
        dropout_p: args.dropout,
        patience: args.patience,
        batch_size: args.batch_size,
        max_epochs: args.max_epochs,
        hidden: args.hidden,
        seed: args.seed,
    };
    config.validate()?;
    let ratings = read_ratings(&args.data.ratings)?;
    let split = SplitAssignment::read_jsonl(&args.data.split)?;
    let samples = split_samples(&ratings, &split, &args.data.emb_dir, exec)?;
    tracing::info!(
        train = samples.train.len(),
        val = samples.val.len(),
        test = samples.test.len(),
        "loaded embeddings"
    );
    let ckpt = train_model(&samples.train, &samples.val, &config, exec)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_checkpoint(&args.out, &ckpt)?;
    let digest = report::sha256_file(&args.out)?;
    tracing::info!(best_epoch = ckpt.best_epoch, sha256 = %digest, "checkpoint saved");

    let result = TrainReport {
        config: &config,
        n_train: samples.train.len(),
        n_val: samples.val.len(),
        n_test: samples.test.len(),
        epochs_run: ckpt.history.len(),
        best_epoch: ckpt.best_epoch,
        best_val_loss: ckpt.history[ckpt.best_epoch].val_loss,
        checkpoint: &args.out,
        checkpoint_sha256: digest,
    };
    report::write(&report.map_or_else(|| report::beside(&args.out), Path::to_path_buf), "train", &result)
}

pub fn evaluate(args: EvaluateArgs, exec: Execution, report: Option<&Path>) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let ratings = read_ratings(&args.data.ratings)?;
    let split = SplitAssignment::read_jsonl(&args.data.split)?;
    let samples = split_samples(&ratings, &split, &args.data.emb_dir, exec)?;
    let (name, subset) = match args.subset {
        Subset::Train => ("train", &samples.train),
        Subset::Val => ("val", &samples.val),
        Subset::Test => ("test", &samples.test),
    };
    let options = EvalOptions { n_boot: args.n_boot, level: args.level, seed: args.seed };
    let evaluation = eval_model(&ckpt.params, subset, &options, exec)?;
    if let Some(path) = &args.predictions {
        atomically(path, |tmp| Ok(write_predictions(tmp, &evaluation.predictions)?))?;
    }
    let m = &evaluation.metrics;
    tracing::info!(subset = name, pcc = m.pcc, mae = m.mae, rmse = m.rmse, "evaluated");
    let result = json!({
        "checkpoint": args.checkpoint,
        "checkpoint_sha256": report::sha256_file(&args.checkpoint)?,
        "subset": name,
        "n": subset.len(),
        "options": options,
        "metrics": evaluation.metrics,
    });
    report::write(report.unwrap_or(&args.out), "evaluate", &result)
}

pub fn corpus_stats(args: CorpusStatsArgs, report: Option<&Path>) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let ratings = args.ratings.as_deref().map(read_ratings).transpose()?;
    let stats = summarize(&manifest, ratings.as_deref());
    tracing::info!(
        stimuli = stats.n_stimuli,
        duration_mean_s = stats.duration_mean_s,
        words_mean = stats.words_mean,
        "corpus statistics"
    );
    report::write(report.unwrap_or(&args.out), "corpus-stats", &stats)
}
