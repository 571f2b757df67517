use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::filters::ActivationSource;
use super::lda::{lda_fit, silhouette_score, LdaProjection};
use crate::dataset::{segment_starts, Genre, LabeledTrack};
use crate::model::{HiddenLayer, INPUT_FRAMES, INPUT_MELS};
use crate::nn::Tensor;
use crate::{Error, Result};

/// One projected segment.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRow {
    pub track_id: String,
    pub segment_start: usize,
    pub coords: Vec<f64>,
    pub genre: Genre,
}

/// Segment features of a corpus with their provenance and labels.
#[derive(Debug, Clone)]
pub struct SegmentFeatures {
    pub features: DMatrix<f64>,
    pub segments: Vec<(String, usize)>,
    pub genres: Vec<Genre>,
}

impl SegmentFeatures {
    pub fn labels(&self) -> Vec<usize> {
        self.genres.iter().map(|g| g.index()).collect()
    }

    fn rows(&self, projected: &DMatrix<f64>) -> Vec<ProjectionRow> {
        self.segments
            .iter()
            .zip(&self.genres)
            .enumerate()
            .map(|(i, ((id, start), genre))| ProjectionRow {
                track_id: id.clone(),
                segment_start: *start,
                coords: projected.row(i).iter().copied().collect(),
                genre: *genre,
            })
            .collect()
    }
}

fn segment_features<F>(corpus: &[LabeledTrack], overlap: f64, dim: usize, f: F) -> Result<SegmentFeatures>
where
    F: Fn(&LabeledTrack, usize) -> Result<Vec<f64>> + Sync,
{
    let mut index = Vec::new();
    for (t, track) in corpus.iter().enumerate() {
        if track.spec.n_frames() < INPUT_FRAMES {
            log::warn!("track {} is shorter than one segment; skipped", track.id);
            continue;
        }
        index.extend(segment_starts(track.spec.n_frames(), overlap)?.into_iter().map(|s| (t, s)));
    }
    if index.is_empty() {
        return Err(Error::InsufficientInput("corpus has no complete segments".into()));
    }
    let rows = index.par_iter().map(|&(t, s)| f(&corpus[t], s)).collect::<Result<Vec<_>>>()?;
    let mut features = DMatrix::zeros(index.len(), dim);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::Shape(format!("feature row of length {}, expected {dim}", row.len())));
        }
        features.row_mut(i).copy_from_slice(row);
    }
    Ok(SegmentFeatures {
        features,
        segments: index.iter().map(|&(t, s)| (corpus[t].id.clone(), s)).collect(),
        genres: index.iter().map(|&(t, _)| corpus[t].genre).collect(),
    })
}

fn segment_tensor(track: &LabeledTrack, start: usize) -> Result<Tensor<f32>> {
    Tensor::new(&[1, INPUT_MELS, INPUT_FRAMES], track.spec.frames(start, INPUT_FRAMES)?)
}

/// 32-unit hidden-layer activations of every segment.
pub fn last_layer_features<S: ActivationSource + ?Sized>(
    source: &S,
    corpus: &[LabeledTrack],
    overlap: f64,
) -> Result<SegmentFeatures> {
    let (c, h, w) = HiddenLayer::Fc1.output_shape();
    segment_features(corpus, overlap, c * h * w, |track, start| {
        source.layer_activations(&segment_tensor(track, start)?, HiddenLayer::Fc1)
    })
}

/// Flattened log-mel values of every segment.
pub fn raw_input_features(corpus: &[LabeledTrack], overlap: f64) -> Result<SegmentFeatures> {
    segment_features(corpus, overlap, INPUT_MELS * INPUT_FRAMES, |track, start| {
        Ok(track.spec.frames(start, INPUT_FRAMES)?.into_iter().map(f64::from).collect())
    })
}

/// LDA directions fit on training features, applied to test features.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub lda: LdaProjection,
    pub train_rows: Vec<ProjectionRow>,
    pub test_rows: Vec<ProjectionRow>,
    /// Silhouette of the projected test segments by genre, when at least two genres are present.
    pub test_silhouette: Option<f64>,
}

pub fn project_features(train: &SegmentFeatures, test: &SegmentFeatures) -> Result<ProjectionResult> {
    let lda = lda_fit(&train.features, &train.labels())?;
    let projected = lda.project(&test.features)?;
    let test_labels = test.labels();
    let test_silhouette = match silhouette_score(&projected, &test_labels) {
        Ok(s) => Some(s),
        Err(Error::InsufficientInput(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ProjectionResult {
        train_rows: train.rows(&lda.training_projection),
        test_rows: test.rows(&projected),
        lda,
        test_silhouette,
    })
}

/// Projects test segments' last-hidden-layer activations onto LDA directions
/// fit on the training segments.
pub fn project_last_layer<S: ActivationSource + ?Sized>(
    source: &S,
    train: &[LabeledTrack],
    test: &[LabeledTrack],
    overlap: f64,
) -> Result<ProjectionResult> {
    project_features(&last_layer_features(source, train, overlap)?, &last_layer_features(source, test, overlap)?)
}

/// The same projection computed from raw flattened log-mel segments.
pub fn project_raw_input(train: &[LabeledTrack], test: &[LabeledTrack], overlap: f64) -> Result<ProjectionResult> {
    project_features(&raw_input_features(train, overlap)?, &raw_input_features(test, overlap)?)
}

/// CSV with header `track_id,segment_start,c1,c2,c3,genre`; components that
/// do not exist (fewer than three classes) are left empty.
pub fn write_projection_csv(path: &Path, rows: &[ProjectionRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["track_id", "segment_start", "c1", "c2", "c3", "genre"])?;
    for row in rows {
        let mut rec = vec![row.track_id.clone(), row.segment_start.to_string()];
        rec.extend((0..3).map(|k| row.coords.get(k).map(|v| v.to_string()).unwrap_or_default()));
        rec.push(row.genre.name().to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
