use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::lasso::{lasso_fit, LambdaPolicy, LassoDiagnostics, LassoModel};
use super::receptive::{receptive_field, Neuron, ReceptiveField};
use crate::dataset::{segment_starts, LabeledTrack};
use crate::model::{GenreCnn, HiddenLayer, INPUT_FRAMES, INPUT_MELS};
use crate::nn::{Scalar, Tensor};
use crate::{Error, Result};

/// Segment overlap used when collecting activations for filter estimation.
pub const FILTER_OVERLAP: f64 = 0.1;

/// Anything that can report a hidden layer's activations for one segment.
pub trait ActivationSource: Sync {
    /// The layer's activation flattened `C×H×W` row-major.
    fn layer_activations(&self, segment: &Tensor<f32>, layer: HiddenLayer) -> Result<Vec<f64>>;
}

impl<T: Scalar> ActivationSource for GenreCnn<T> {
    fn layer_activations(&self, segment: &Tensor<f32>, layer: HiddenLayer) -> Result<Vec<f64>> {
        let pass = self.forward_eval(&segment.cast::<T>())?;
        let cache = pass.cache().ok_or_else(|| Error::State("forward pass kept no activations".into()))?;
        Ok(cache.activation(layer).data().iter().map(|v| v.as_f64()).collect())
    }
}

/// Regression data for one neuron: flattened receptive-field patches and the
/// neuron's activation, one row per segment.
#[derive(Debug, Clone)]
pub struct ActivationSamples {
    pub field: ReceptiveField,
    pub patches: DMatrix<f64>,
    pub activations: DVector<f64>,
    /// `(track id, start frame)` of each row.
    pub segments: Vec<(String, usize)>,
}

fn segment_index(corpus: &[LabeledTrack], overlap: f64) -> Result<Vec<(usize, usize)>> {
    let mut index = Vec::new();
    for (t, track) in corpus.iter().enumerate() {
        if track.spec.n_mels() != INPUT_MELS {
            return Err(Error::Shape(format!("track {}: {} mel bands", track.id, track.spec.n_mels())));
        }
        if track.spec.n_frames() < INPUT_FRAMES {
            log::warn!("track {} is shorter than one segment; skipped", track.id);
            continue;
        }
        index.extend(segment_starts(track.spec.n_frames(), overlap)?.into_iter().map(|s| (t, s)));
    }
    if index.is_empty() {
        return Err(Error::InsufficientInput("corpus has no complete segments".into()));
    }
    Ok(index)
}

/// Collects regression data for several neurons of one layer from a single
/// pass over every segment of `corpus`.
pub fn collect_activations_many<S: ActivationSource + ?Sized>(
    source: &S,
    corpus: &[LabeledTrack],
    layer: HiddenLayer,
    neurons: &[Neuron],
    overlap: f64,
) -> Result<Vec<ActivationSamples>> {
    if neurons.is_empty() {
        return Err(Error::Config("no neurons requested".into()));
    }
    let fields = neurons.iter().map(|&n| receptive_field(layer, n)).collect::<Result<Vec<_>>>()?;
    let index = segment_index(corpus, overlap)?;
    let rows = index
        .par_iter()
        .map(|&(t, start)| {
            let spec = &corpus[t].spec;
            let segment = Tensor::new(&[1, INPUT_MELS, INPUT_FRAMES], spec.frames(start, INPUT_FRAMES)?)?;
            let acts = source.layer_activations(&segment, layer)?;
            fields
                .iter()
                .map(|f| {
                    let a = *acts
                        .get(f.neuron.flat_index(layer))
                        .ok_or_else(|| Error::Shape(format!("{layer} activation has {} entries", acts.len())))?;
                    let patch: Vec<f64> = (f.rows.0..f.rows.1)
                        .flat_map(|r| (f.cols.0..f.cols.1).map(move |c| spec.get(r, start + c) as f64))
                        .collect();
                    Ok((a, patch))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let n = index.len();
    let segments: Vec<(String, usize)> = index.iter().map(|&(t, s)| (corpus[t].id.clone(), s)).collect();
    Ok(fields
        .iter()
        .enumerate()
        .map(|(k, field)| {
            let p = field.area();
            let mut patches = DMatrix::zeros(n, p);
            let mut activations = DVector::zeros(n);
            for (i, row) in rows.iter().enumerate() {
                activations[i] = row[k].0;
                for (j, v) in row[k].1.iter().enumerate() {
                    patches[(i, j)] = *v;
                }
            }
            ActivationSamples { field: *field, patches, activations, segments: segments.clone() }
        })
        .collect())
}

pub fn collect_activations<S: ActivationSource + ?Sized>(
    source: &S,
    corpus: &[LabeledTrack],
    layer: HiddenLayer,
    neuron: Neuron,
    overlap: f64,
) -> Result<ActivationSamples> {
    Ok(collect_activations_many(source, corpus, layer, &[neuron], overlap)?.remove(0))
}

/// A Lasso-estimated filter reshaped onto its receptive field.
#[derive(Debug, Clone)]
pub struct FilterEstimate {
    pub field: ReceptiveField,
    pub policy: LambdaPolicy,
    pub fit: LassoModel,
    /// `height × width` coefficients.
    pub filter: DMatrix<f64>,
}

/// Fits a filter to collected samples. A neuron that never varies yields an
/// all-zero filter.
pub fn fit_filter(samples: &ActivationSamples, policy: LambdaPolicy) -> Result<FilterEstimate> {
    let field = samples.field;
    let y = &samples.activations;
    let fit = if y.iter().all(|v| *v == y[0]) {
        let p = field.area();
        LassoModel {
            coefficients: DVector::zeros(p),
            intercept: y[0],
            lambda: 0.0,
            diagnostics: LassoDiagnostics {
                sweeps: 0,
                converged: true,
                objective_history: vec![0.0],
                max_kkt_violation: 0.0,
                n_samples: y.len(),
                n_active: 0,
            },
        }
    } else {
        let lambda = policy.resolve(&samples.patches, y)?;
        lasso_fit(&samples.patches, y, lambda)?
    };
    let filter = DMatrix::from_row_slice(field.height(), field.width(), fit.coefficients.as_slice());
    Ok(FilterEstimate { field, policy, fit, filter })
}

pub fn estimate_filter<S: ActivationSource + ?Sized>(
    source: &S,
    corpus: &[LabeledTrack],
    layer: HiddenLayer,
    neuron: Neuron,
    policy: LambdaPolicy,
    overlap: f64,
) -> Result<FilterEstimate> {
    fit_filter(&collect_activations(source, corpus, layer, neuron, overlap)?, policy)
}

/// Estimates filters for several neurons of one layer, fitting in parallel.
pub fn estimate_filters<S: ActivationSource + ?Sized>(
    source: &S,
    corpus: &[LabeledTrack],
    layer: HiddenLayer,
    neurons: &[Neuron],
    policy: LambdaPolicy,
    overlap: f64,
) -> Result<Vec<FilterEstimate>> {
    collect_activations_many(source, corpus, layer, neurons, overlap)?
        .par_iter()
        .map(|s| fit_filter(s, policy))
        .collect()
}

#[derive(Serialize)]
struct NeuronJson {
    channel: usize,
    row: usize,
    col: usize,
}

#[derive(Serialize)]
struct FilterSidecar<'a> {
    layer: &'a str,
    neuron: NeuronJson,
    lambda: f64,
    lambda_policy: String,
    input_rows: [usize; 2],
    input_cols: [usize; 2],
    intercept: f64,
    final_objective: Option<f64>,
    diagnostics: &'a LassoDiagnostics,
}

/// File stem shared by a filter's CSV and JSON sidecar, e.g. `pool2_3_5_5`.
pub fn filter_file_stem(field: &ReceptiveField) -> String {
    let n = field.neuron;
    format!("{}_{}_{}_{}", field.layer.name(), n.channel, n.row, n.col)
}

/// Writes `<stem>.csv` (one line per patch row, no header) and `<stem>.json`
/// into `dir`, returning both paths.
pub fn write_filter(dir: &Path, estimate: &FilterEstimate) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = filter_file_stem(&estimate.field);
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&csv_path)?;
    for r in 0..estimate.filter.nrows() {
        w.write_record(estimate.filter.row(r).iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let f = &estimate.field;
    let d = &estimate.fit.diagnostics;
    let sidecar = FilterSidecar {
        layer: f.layer.name(),
        neuron: NeuronJson { channel: f.neuron.channel, row: f.neuron.row, col: f.neuron.col },
        lambda: estimate.fit.lambda,
        lambda_policy: match estimate.policy {
            LambdaPolicy::RelativeToMax(r) => format!("{r} * lambda_max"),
            LambdaPolicy::Fixed(l) => format!("fixed {l}"),
        },
        input_rows: [f.rows.0, f.rows.1],
        input_cols: [f.cols.0, f.cols.1],
        intercept: estimate.fit.intercept,
        final_objective: d.objective_history.last().copied(),
        diagnostics: d,
    };
    let json_path = dir.join(format!("{stem}.json"));
    let file = std::fs::File::create(&json_path).map_err(|e| Error::io(&json_path, e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &sidecar)?;
    Ok((csv_path, json_path))
}
