//! Evaluation metrics and disentanglement probes: identity score, prompt
//! fidelity, text-only and visual-only generation probes, the eta sweep,
//! and the ablation runner.

pub mod metrics;
pub mod report;
pub mod suite;

pub use metrics::{
    embedding_cosine, identity_score, nearest_centroid, prompt_fidelity, spearman,
    subject_centroids,
};
pub use report::{config_digest_hex, EvalReport};
pub use suite::{
    eta_sweep, fi_only_probe, fs_only_probe, full_evaluation, run_ablations, stitch_images,
    AblationRow, EvalContext, ProbeOutcome, Variant, ETA_GRID, EVAL_SAMPLES,
};
