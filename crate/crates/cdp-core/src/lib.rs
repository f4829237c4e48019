//! Stochastic printing-imaging channel model and one-class authentication of
//! copy detection patterns.
//!
//! A copy detection pattern is a dense random binary template printed at the
//! resolution limit; copying it requires an estimate-and-reprint pass that
//! measurably degrades the code. This crate models the template → print →
//! acquisition → estimate chain, learns a per-neighborhood probability
//! codebook from (template, printed original) pairs, and scores unknown
//! probes with likelihood and masked metrics. An evaluation harness
//! reproduces the two-printer, four-fake experiment grid with ROC/AUC
//! reporting and a codebook-stability study.
//!
//! Pipeline overview:
//!
//! 1. [`template`] — reproducible binary template generation.
//! 2. [`channel`] — simulated print-acquire channel and the
//!    estimate-and-reprint attack.
//! 3. [`estimator`] — Otsu binarization + majority voting back to symbols.
//! 4. [`codebook`] — per-neighborhood posterior statistics (the predictor).
//! 5. [`metrics`] — likelihood, pixel and Hamming scores, attention masks.
//! 6. [`eval`] — grid experiments, ROC/AUC, threshold selection, stability.
//! 7. [`pgm`] — PGM image files with JSON sidecars.

pub mod channel;
pub mod codebook;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod grid;
pub mod metrics;
pub mod pgm;
pub mod seeding;
pub mod template;

pub use channel::{
    gaussian_kernel, ideal_print, make_fake, print_batch, print_code, ChannelParams, PrintedImage,
    SourceId,
};
pub use codebook::{
    codebook_distance, encode_neighborhood, train_codebook, train_from_estimates, BorderMode,
    Codebook, NeighborhoodCode,
};
pub use error::{Error, Result};
pub use estimator::{
    binarize, estimate_template, majority_vote, otsu_threshold, BscEstimator, EstimatedTemplate,
    OtsuMvEstimator, TemplateEstimator,
};
pub use eval::{
    auc, roc_curve, run_experiment, select_threshold, stability_study, EvalReport,
    ExperimentConfig, FakeKind, Printer, ThresholdRule,
};
pub use grid::BitGrid;
pub use metrics::{
    build_mask, hamming_metric, lls_score, masked_hamming, masked_lls, masked_pixel_metric,
    pixel_metric, AttentionMask, MetricKind, Orientation, PixelMetric, Score,
};
pub use template::{generate_template, interior_index, pad_white, InteriorIndex, Template};
