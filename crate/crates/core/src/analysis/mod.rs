//! Post-hoc interpretation of a trained network: Lasso-estimated filters on
//! receptive fields, and LDA projections of hidden representations.

mod filters;
mod lasso;
mod lda;
mod projection;
mod receptive;

pub use filters::{
    collect_activations, collect_activations_many, estimate_filter, estimate_filters, filter_file_stem, fit_filter,
    write_filter, ActivationSamples, ActivationSource, FilterEstimate, FILTER_OVERLAP,
};
pub use lasso::{lambda_max, lasso_fit, LambdaPolicy, LassoDiagnostics, LassoModel, MAX_SWEEPS, TOLERANCE};
pub use lda::{
    eigen_residual, generalized_eigen, lda_fit, scatter_matrices, separation_ratio, silhouette_score, LdaProjection,
    N_COMPONENTS,
};
pub use projection::{
    last_layer_features, project_features, project_last_layer, project_raw_input, raw_input_features,
    write_projection_csv, ProjectionResult, ProjectionRow, SegmentFeatures,
};
pub use receptive::{receptive_field, Neuron, ReceptiveField};
