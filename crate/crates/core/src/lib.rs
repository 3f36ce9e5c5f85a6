//! Detecting whether graph signals are smooth, i.e. whether they were
//! produced by a low-pass graph filter driven by white noise.

pub mod detect;
pub mod error;
pub mod filters;
pub mod graph;
pub mod quadform;
pub mod sim;

pub use detect::{
    decide, lpf_eta_hat, lpf_eta_hat_detect, lrt_box1, lrt_detect, lrt_statistic, ml_filter_estimate,
    naive_tv_statistic, sample_covariance, semi_detect, semi_r_hat, tv_detect, Decision, DetectionReport,
    MLFilterEstimate, Threshold,
};
pub use error::{Error, Result};
pub use filters::{
    absorb_mean, apply_filter, claim1_check, lpf_order_ratio, make_box1_filter, pseudo_inverse_square,
    quadform_polynomial, smoothness_ratio, Box1Kind, Claim1Check, FilterConfig, FilterKind, FilterKindName,
    SpectralFilter,
};
pub use graph::{build_spectral_graph, Edge, Laplacian, SignalBatch, SpectralGraph, WeightedGraph};
pub use quadform::{
    glrt_tail_prob, lrt_tail_prob, lrt_threshold, quadform_cdf, quadform_cdf_approx, quadform_weights, semi_tail,
    semi_threshold, QuadFormLaw,
};
pub use sim::{
    alpha_for_ratio, generate_batch, pd_sweep, rbf_graph, roc_curve, roc_curves, sample_coords, scaling_experiment,
    DetectorConfig, ExperimentSpec, GraphSource, RocCurve, RocPoint, Sweep, SweepParam, SweepRow,
};
