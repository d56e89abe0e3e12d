//! Accuracy evaluation, Cramér-Rao bounds and channel statistics.

pub mod crlb;
pub mod fpr;
pub mod metrics;

pub use crlb::{active_directions, fim_numeric, fim_numeric_with, CrlbReport, FimParams};
pub use fpr::{fpr, is_noise_only, subtract_paths, FprOutcome, NOISE_ONLY_FPR_DB};
pub use metrics::{
    asa, ci_fit, delay_spread, esa, far_field_threshold, fpr_db, free_space_path_loss_db, path_loss_db, rmse, rmse_deg, CiFit,
    SweepRecord,
};
