//! Early-stopped mini-batch SGD and evaluation metrics.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{enumerate_segments, make_batch, sample_training_segment, Genre, LabeledTrack};
use crate::inference::{predict_segment, predict_track, TrackPrediction};
use crate::model::{GenreCnn, ModelCheckpoint, TrainingMeta, INPUT_FRAMES};
use crate::nn::{Sgd, SgdConfig};
use crate::{Error, Result};

/// Generator stream used for weight initialisation; training draws from [`TRAIN_STREAM`].
const INIT_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub sgd: SgdConfig,
    pub max_epochs: usize,
    /// Evaluations without strict improvement tolerated before stopping.
    pub patience: usize,
    /// Evaluate every this many steps; `None` evaluates once at the end of every epoch.
    pub eval_every: Option<usize>,
    /// Segment overlap used for validation prediction.
    pub eval_overlap: f64,
    /// Where the best model is saved whenever validation accuracy improves.
    pub checkpoint_path: Option<PathBuf>,
    /// Training-log CSV, rewritten after every evaluation.
    pub log_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sgd: SgdConfig::default(),
            max_epochs: 200,
            patience: 10,
            eval_every: None,
            eval_overlap: 0.5,
            checkpoint_path: None,
            log_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.eval_every == Some(0) {
            return Err(Error::Config("eval_every must be at least 1 step".into()));
        }
        if !(0.0..1.0).contains(&self.eval_overlap) {
            return Err(Error::Config(format!("evaluation overlap {} must be in [0, 1)", self.eval_overlap)));
        }
        Ok(())
    }
}

/// A freshly initialised model whose weights depend only on `sgd.seed`.
pub fn init_model(sgd: SgdConfig) -> GenreCnn<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(sgd.seed);
    rng.set_stream(INIT_STREAM);
    GenreCnn::new(sgd, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EarlyStop {
    Improved,
    Waiting,
    Stop,
}

/// Patience counter over validation accuracy; only strict improvements reset it.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, since_best: 0 }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn observe(&mut self, accuracy: f64) -> EarlyStop {
        if self.best.is_none_or(|b| accuracy > b) {
            self.best = Some(accuracy);
            self.since_best = 0;
            EarlyStop::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                EarlyStop::Stop
            } else {
                EarlyStop::Waiting
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub step: u64,
    pub epoch: u32,
    pub loss: f64,
    pub val_accuracy: Option<f64>,
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
}

impl TrainingLog {
    pub fn losses(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.loss).collect()
    }

    pub fn val_accuracies(&self) -> Vec<f64> {
        self.entries.iter().filter_map(|e| e.val_accuracy).collect()
    }

    /// CSV with columns `step,epoch,loss,val_accuracy,timestamp`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "epoch", "loss", "val_accuracy", "timestamp"])?;
        for e in &self.entries {
            w.write_record([
                e.step.to_string(),
                e.epoch.to_string(),
                format!("{:.9}", e.loss),
                e.val_accuracy.map(|a| format!("{a:.6}")).unwrap_or_default(),
                format!("{:.3}", e.timestamp),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation accuracy.
    pub model: GenreCnn<f32>,
    pub meta: TrainingMeta,
    pub log: TrainingLog,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint { model: self.model.clone(), meta: self.meta }
    }
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Trains `model` in place and returns the best-validation parameters.
///
/// Each epoch visits the training tracks in a fresh random order without
/// replacement; each mini-batch takes one randomly placed 256-frame segment
/// from each of its tracks. Validation accuracy is track-level (averaged
/// segment probabilities). Training stops after `patience` evaluations
/// without strict improvement or after `max_epochs`. All randomness comes
/// from `cfg.sgd.seed`.
pub fn train(
    mut model: GenreCnn<f32>,
    train_set: &[LabeledTrack],
    validation: &[LabeledTrack],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || validation.is_empty() {
        return Err(Error::Config(format!(
            "training needs non-empty splits ({} train, {} validation tracks)",
            train_set.len(),
            validation.len()
        )));
    }
    if let Some(short) = train_set.iter().find(|t| t.spec.n_frames() < INPUT_FRAMES) {
        return Err(Error::InsufficientInput(format!(
            "training track {} has {} frames, fewer than one segment",
            short.id,
            short.spec.n_frames()
        )));
    }
    model.hyper = cfg.sgd;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sgd.seed);
    rng.set_stream(TRAIN_STREAM);
    let mut opt = Sgd::new();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut log = TrainingLog::default();
    let mut best = model.clone();
    let mut meta = TrainingMeta { seed: cfg.sgd.seed, ..TrainingMeta::default() };
    let mut step = 0u64;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    'epochs: for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.sgd.batch_size) {
            let segments = chunk
                .iter()
                .map(|&i| sample_training_segment(&train_set[i].spec, &train_set[i].id, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let labels: Vec<Genre> = chunk.iter().map(|&i| train_set[i].genre).collect();
            let (batch, labels) = make_batch(&segments, &labels)?;
            let loss = model.batch_gradients(&batch, &labels, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::State(format!("training diverged at step {step} (loss {loss})")));
            }
            opt.step(&mut model.layers_mut(), &cfg.sgd)?;
            step += 1;
            log.entries.push(LogEntry {
                step,
                epoch: epoch as u32,
                loss,
                val_accuracy: None,
                timestamp: unix_seconds(),
            });
            if cfg.eval_every.is_some_and(|k| step.is_multiple_of(k as u64)) {
                meta.epochs_seen = epoch as u32;
                meta.steps = step;
                if validate_and_track(&model, validation, cfg, &mut stopper, &mut log, &mut best, &mut meta)? {
                    stopped_early = true;
                    break 'epochs;
                }
            }
        }
        meta.epochs_seen = epoch as u32 + 1;
        meta.steps = step;
        if cfg.eval_every.is_none()
            && validate_and_track(&model, validation, cfg, &mut stopper, &mut log, &mut best, &mut meta)?
        {
            stopped_early = true;
            break;
        }
    }
    if stopper.best().is_none() {
        validate_and_track(&model, validation, cfg, &mut stopper, &mut log, &mut best, &mut meta)?;
    }
    Ok(TrainOutcome { model: best, meta, log, stopped_early })
}

/// Returns `true` when training should stop.
#[allow(clippy::too_many_arguments)]
fn validate_and_track(
    model: &GenreCnn<f32>,
    validation: &[LabeledTrack],
    cfg: &TrainConfig,
    stopper: &mut EarlyStopping,
    log: &mut TrainingLog,
    best: &mut GenreCnn<f32>,
    meta: &mut TrainingMeta,
) -> Result<bool> {
    let accuracy = evaluate(model, validation, cfg.eval_overlap)?.accuracy;
    if let Some(last) = log.entries.last_mut() {
        last.val_accuracy = Some(accuracy);
    }
    let decision = stopper.observe(accuracy);
    info!("step {} epoch {}: validation accuracy {accuracy:.4} ({decision:?})", meta.steps, meta.epochs_seen);
    if decision == EarlyStop::Improved {
        *best = model.clone();
        meta.best_val_accuracy = accuracy;
        if let Some(path) = &cfg.checkpoint_path {
            let ckpt = ModelCheckpoint { model: best.clone(), meta: *meta };
            crate::model::save_checkpoint(path, &ckpt)?;
        }
    }
    if let Some(path) = &cfg.log_path {
        log.write_csv(path)?;
    }
    Ok(decision == EarlyStop::Stop)
}

/// Counts indexed `[true genre][predicted genre]`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; Genre::COUNT]; Genre::COUNT],
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: Genre, predicted: Genre) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..Genre::COUNT).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    pub fn row_total(&self, truth: Genre) -> u64 {
        self.counts[truth.index()].iter().sum()
    }

    /// Header row and column of genre names; rows are true genres, columns predictions.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(Genre::ALL.iter().map(|g| g.name().to_string()));
        w.write_record(&header)?;
        for g in Genre::ALL {
            let mut row = vec![g.name().to_string()];
            row.extend(self.counts[g.index()].iter().map(|c| c.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub predictions: Vec<TrackPrediction>,
    /// Tracks too short for a single segment.
    pub skipped: Vec<String>,
}

/// Track-level accuracy and confusion counts over `tracks`.
pub fn evaluate(model: &GenreCnn<f32>, tracks: &[LabeledTrack], overlap: f64) -> Result<Evaluation> {
    if tracks.is_empty() {
        return Err(Error::Config("cannot evaluate an empty split".into()));
    }
    let (usable, short): (Vec<&LabeledTrack>, Vec<&LabeledTrack>) =
        tracks.iter().partition(|t| t.spec.n_frames() >= INPUT_FRAMES);
    for t in &short {
        warn!("skipping {}: {} frames is shorter than one segment", t.id, t.spec.n_frames());
    }
    if usable.is_empty() {
        return Err(Error::InsufficientInput("no track in the split is long enough to evaluate".into()));
    }
    let predictions =
        usable.par_iter().map(|t| predict_track(model, &t.id, &t.spec, overlap)).collect::<Result<Vec<_>>>()?;
    let mut confusion = ConfusionMatrix::default();
    for (t, p) in usable.iter().zip(&predictions) {
        confusion.record(t.genre, p.predicted);
    }
    Ok(Evaluation {
        accuracy: confusion.accuracy(),
        confusion,
        predictions,
        skipped: short.into_iter().map(|t| t.id.clone()).collect(),
    })
}

/// Fraction of individual segments (at `overlap`) whose argmax matches the track's genre.
pub fn segment_accuracy(model: &GenreCnn<f32>, tracks: &[LabeledTrack], overlap: f64) -> Result<f64> {
    let (correct, total) = tracks
        .par_iter()
        .map(|t| -> Result<(usize, usize)> {
            let segs = enumerate_segments(&t.spec, &t.id, overlap)?;
            let mut correct = 0;
            for s in &segs {
                correct += (predict_segment(model, s)?.argmax() == t.genre) as usize;
            }
            Ok((correct, segs.len()))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold((0, 0), |(c, n), (dc, dn)| (c + dc, n + dn));
    if total == 0 {
        return Err(Error::InsufficientInput("no segments to score".into()));
    }
    Ok(correct as f64 / total as f64)
}
