use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;

use genre_cnn::analysis::{self, LambdaPolicy};
use genre_cnn::dataset::{
    load_split, load_track, read_manifest, split_dataset, stratified_split, write_manifest, Genre, LabeledTrack, Split,
    TrackRecord,
};
use genre_cnn::dsp::{read_feature_cache, read_wav, write_feature_cache, FeatureExtractor, SAMPLE_RATE};
use genre_cnn::inference::predict_track;
use genre_cnn::model::{load_checkpoint, GenreCnn};
use genre_cnn::nn::SgdConfig;
use genre_cnn::trainer::{evaluate, init_model, train, TrainConfig};

use crate::args::{
    AnalyzeFiltersArgs, CheckpointArg, EvaluateArgs, ManifestArg, PredictArgs, PreprocessArgs, ProjectLdaArgs,
    TrainArgs,
};

pub const CHECKPOINT_NAME: &str = "model.ckpt";
pub const TRAINING_LOG_NAME: &str = "training_log.csv";
const FEATURE_DIR: &str = "features";

fn create_out_dir(out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating output directory {}", out_dir.display()))
}

fn manifest_path(arg: &ManifestArg, out_dir: &Path) -> Result<PathBuf> {
    let path = arg.manifest.clone().unwrap_or_else(|| out_dir.join("manifest.tsv"));
    ensure!(path.is_file(), "manifest {} not found (run `preprocess` first or pass --manifest)", path.display());
    Ok(path)
}

fn checkpoint_path(arg: &CheckpointArg, out_dir: &Path) -> Result<PathBuf> {
    let path = arg.checkpoint.clone().unwrap_or_else(|| out_dir.join(CHECKPOINT_NAME));
    ensure!(path.is_file(), "checkpoint {} not found (run `train` first or pass --checkpoint)", path.display());
    Ok(path)
}

fn check_overlap(overlap: f64) -> Result<()> {
    ensure!((0.0..1.0).contains(&overlap), "overlap {overlap} must be in [0, 1)");
    Ok(())
}

fn load_model(path: &Path) -> Result<GenreCnn<f32>> {
    Ok(load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?.model)
}

fn load_tracks(records: &[TrackRecord], split: Split) -> Result<Vec<LabeledTrack>> {
    load_split(records, split).with_context(|| format!("loading {split} features"))
}

fn is_up_to_date(cache: &Path, source: &Path) -> bool {
    let mtime = |p: &Path| fs::metadata(p).and_then(|m| m.modified()).ok();
    matches!((mtime(cache), mtime(source)), (Some(c), Some(s)) if c >= s)
}

fn find_wavs(audio_dir: &Path) -> Result<Vec<(Genre, PathBuf)>> {
    let mut found = Vec::new();
    let entries = fs::read_dir(audio_dir).with_context(|| format!("reading {}", audio_dir.display()))?;
    for entry in entries {
        let dir = entry?.path();
        if !dir.is_dir() {
            continue;
        }
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let genre: Genre = name.parse().with_context(|| format!("directory {} is not a genre name", dir.display()))?;
        for file in fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
            let path = file?.path();
            let is_wav = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("wav"));
            if is_wav {
                found.push((genre, path));
            }
        }
    }
    found.sort_by(|a, b| a.1.cmp(&b.1));
    Ok(found)
}

pub fn preprocess(args: &PreprocessArgs, out_dir: &Path) -> Result<()> {
    ensure!(args.audio_dir.is_dir(), "audio directory {} does not exist", args.audio_dir.display());
    let wavs = find_wavs(&args.audio_dir)?;
    ensure!(!wavs.is_empty(), "no WAV files under {}", args.audio_dir.display());
    create_out_dir(out_dir)?;
    let extractor = FeatureExtractor::new(SAMPLE_RATE)?;

    let results: Vec<_> = wavs
        .par_iter()
        .map(|(genre, wav)| {
            let stem = wav.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let cache = out_dir.join(FEATURE_DIR).join(genre.name()).join(format!("{stem}.mels"));
            let outcome = (|| -> Result<bool> {
                if is_up_to_date(&cache, wav) {
                    return Ok(false);
                }
                let clip = read_wav(wav)?;
                let spec = extractor.extract(&clip)?;
                fs::create_dir_all(cache.parent().unwrap())?;
                write_feature_cache(&cache, &spec)?;
                Ok(true)
            })();
            (wav, TrackRecord { id: stem, feature_path: cache, genre: *genre, split: Split::Train }, outcome)
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut extracted = 0;
    for (wav, record, outcome) in results {
        match outcome {
            Ok(fresh) => {
                extracted += usize::from(fresh);
                records.push(record);
            }
            Err(e) => {
                log::error!("{}: {e:#}", wav.display());
                failures.push(wav.display().to_string());
            }
        }
    }
    ensure!(!records.is_empty(), "no track could be processed");

    let records = match split_dataset(records.clone(), args.split, args.seed) {
        Ok(r) => r,
        Err(genre_cnn::Error::Config(msg)) => {
            log::warn!("{msg}; some splits will lack a genre");
            stratified_split(records, args.split, args.seed)?
        }
        Err(e) => return Err(e.into()),
    };
    let manifest = out_dir.join(&args.manifest_name);
    write_manifest(&manifest, &records)?;
    println!(
        "{} tracks: {extracted} extracted, {} up to date, {} failed; manifest {}",
        records.len() + failures.len(),
        records.len() - extracted,
        failures.len(),
        manifest.display()
    );
    if !failures.is_empty() {
        bail!("{} file(s) failed: {}", failures.len(), failures.join(", "));
    }
    Ok(())
}

pub fn train_cmd(args: &TrainArgs, out_dir: &Path) -> Result<()> {
    let sgd = SgdConfig {
        learning_rate: args.learning_rate,
        momentum: args.momentum,
        batch_size: args.batch_size,
        l2_lambda: args.l2,
        dropout_rate_fc: args.dropout,
        seed: args.seed,
    };
    let cfg = TrainConfig {
        sgd,
        max_epochs: args.max_epochs,
        patience: args.patience,
        eval_every: (args.eval_every > 0).then_some(args.eval_every),
        eval_overlap: args.eval_overlap,
        checkpoint_path: Some(out_dir.join(CHECKPOINT_NAME)),
        log_path: Some(out_dir.join(TRAINING_LOG_NAME)),
    };
    cfg.validate()?;
    let manifest = manifest_path(&args.manifest, out_dir)?;
    let records = read_manifest(&manifest)?;
    let train_set = load_tracks(&records, Split::Train)?;
    let validation = load_tracks(&records, Split::Validation)?;
    ensure!(!train_set.is_empty(), "manifest has no training tracks");
    ensure!(!validation.is_empty(), "manifest has no validation tracks");
    create_out_dir(out_dir)?;

    log::info!("training on {} tracks, validating on {}", train_set.len(), validation.len());
    let outcome = train(init_model(sgd), &train_set, &validation, &cfg)?;
    println!(
        "best validation accuracy {:.4} after {} epochs ({} steps){}; checkpoint {}",
        outcome.meta.best_val_accuracy,
        outcome.meta.epochs_seen,
        outcome.meta.steps,
        if outcome.stopped_early { ", stopped early" } else { "" },
        out_dir.join(CHECKPOINT_NAME).display()
    );
    Ok(())
}

pub fn evaluate_cmd(args: &EvaluateArgs, out_dir: &Path) -> Result<()> {
    check_overlap(args.overlap)?;
    let manifest = manifest_path(&args.manifest, out_dir)?;
    let ckpt = checkpoint_path(&args.checkpoint, out_dir)?;
    let model = load_model(&ckpt)?;
    let records = read_manifest(&manifest)?;
    let tracks = load_tracks(&records, args.split)?;
    ensure!(!tracks.is_empty(), "manifest has no {} tracks", args.split);
    create_out_dir(out_dir)?;

    let eval = evaluate(&model, &tracks, args.overlap)?;
    let confusion = out_dir.join(format!("confusion_{}.csv", args.split));
    eval.confusion.write_csv(&confusion)?;
    let predictions = out_dir.join(format!("predictions_{}.tsv", args.split));
    let lines: String = eval.predictions.iter().map(|p| p.to_tsv_line() + "\n").collect();
    fs::write(&predictions, lines).with_context(|| format!("writing {}", predictions.display()))?;
    println!(
        "{} accuracy {:.4} over {} tracks ({} skipped); confusion {}",
        args.split,
        eval.accuracy,
        eval.confusion.total(),
        eval.skipped.len(),
        confusion.display()
    );
    for g in Genre::ALL {
        let n = eval.confusion.row_total(g);
        if n > 0 {
            println!(
                "  {:<10} {:.4} ({n} tracks)",
                g.name(),
                eval.confusion.counts[g.index()][g.index()] as f64 / n as f64
            );
        }
    }
    Ok(())
}

pub fn predict_cmd(args: &PredictArgs, out_dir: &Path) -> Result<()> {
    check_overlap(args.overlap)?;
    for input in &args.inputs {
        ensure!(input.is_file(), "input {} not found", input.display());
    }
    let model = load_model(&checkpoint_path(&args.checkpoint, out_dir)?)?;
    let extractor = FeatureExtractor::new(SAMPLE_RATE)?;
    create_out_dir(out_dir)?;

    let mut lines = String::new();
    for input in &args.inputs {
        let is_wav = input.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        let spec = if is_wav {
            extractor.extract(&read_wav(input)?).with_context(|| format!("{}", input.display()))?
        } else {
            read_feature_cache(input)?
        };
        let id = input.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let pred = predict_track(&model, id, &spec, args.overlap).with_context(|| format!("{}", input.display()))?;
        println!("{}\t{}", input.display(), pred.predicted);
        lines.push_str(&pred.to_tsv_line());
        lines.push('\n');
    }
    let path = out_dir.join("predictions.tsv");
    fs::write(&path, lines).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn analyze_filters(args: &AnalyzeFiltersArgs, out_dir: &Path) -> Result<()> {
    check_overlap(args.overlap)?;
    let policy = match args.lambda {
        Some(l) => LambdaPolicy::Fixed(l),
        None => LambdaPolicy::RelativeToMax(args.lambda_fraction),
    };
    match policy {
        LambdaPolicy::Fixed(v) | LambdaPolicy::RelativeToMax(v) => {
            ensure!(v >= 0.0 && v.is_finite(), "lambda settings must be finite and non-negative");
        }
    }
    let mut neurons = args.neuron.clone();
    neurons.dedup();
    for &n in &neurons {
        analysis::receptive_field(args.layer, n)?;
    }
    let manifest = manifest_path(&args.manifest, out_dir)?;
    let model = load_model(&checkpoint_path(&args.checkpoint, out_dir)?)?;
    let records = read_manifest(&manifest)?;
    let corpus = records
        .iter()
        .map(|r| load_track(r).with_context(|| format!("loading {}", r.feature_path.display())))
        .collect::<Result<Vec<_>>>()?;
    let dir = out_dir.join("filters");

    let estimates = analysis::estimate_filters(&model, &corpus, args.layer, &neurons, policy, args.overlap)?;
    for est in &estimates {
        let (csv, _) = analysis::write_filter(&dir, est)?;
        let d = &est.fit.diagnostics;
        println!(
            "{} {}: {}x{} filter, lambda {:.3e}, {} active, {} sweeps -> {}",
            args.layer,
            est.field.neuron,
            est.filter.nrows(),
            est.filter.ncols(),
            est.fit.lambda,
            d.n_active,
            d.sweeps,
            csv.display()
        );
    }
    Ok(())
}

pub fn project_lda(args: &ProjectLdaArgs, out_dir: &Path) -> Result<()> {
    check_overlap(args.overlap)?;
    let manifest = manifest_path(&args.manifest, out_dir)?;
    let model = load_model(&checkpoint_path(&args.checkpoint, out_dir)?)?;
    let records = read_manifest(&manifest)?;
    let train_set = load_tracks(&records, Split::Train)?;
    let test_set = load_tracks(&records, Split::Test)?;
    ensure!(!train_set.is_empty() && !test_set.is_empty(), "manifest needs both training and test tracks");
    create_out_dir(out_dir)?;

    let mut summary = BTreeMap::new();
    let result = analysis::project_last_layer(&model, &train_set, &test_set, args.overlap)?;
    let path = out_dir.join("lda_last_layer.csv");
    analysis::write_projection_csv(&path, &result.test_rows)?;
    summary.insert("last hidden layer", (result.test_silhouette, path));
    if args.raw {
        let raw = analysis::project_raw_input(&train_set, &test_set, args.overlap)?;
        let path = out_dir.join("lda_raw_input.csv");
        analysis::write_projection_csv(&path, &raw.test_rows)?;
        summary.insert("raw log-mel", (raw.test_silhouette, path));
    }
    for (name, (sil, path)) in summary {
        let sil = sil.map_or("n/a".to_string(), |s| format!("{s:.4}"));
        println!("{name}: test silhouette {sil} -> {}", path.display());
    }
    Ok(())
}
