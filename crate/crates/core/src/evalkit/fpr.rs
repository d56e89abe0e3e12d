//! Fake power ratio: a fresh single-path estimate on what the estimator left behind.

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::sage::{m_step, EstimatorConfig, EvalCounters, MStepContext, SignalModel};
use crate::synth::{add_path_signal, CirTensor, PathParams, SoundingConfig};

/// FPR below this is classified as noise only.
pub const NOISE_ONLY_FPR_DB: f64 = -25.0;

#[derive(Clone, Debug, PartialEq)]
pub struct FprOutcome {
    pub fpr_db: f64,
    /// The spurious path found on the residual.
    pub fake: PathParams,
    pub counters: EvalCounters,
}

/// h − Σ s(θ_l).
pub fn subtract_paths(tensor: &CirTensor, paths: &[PathParams], cfg: &SoundingConfig) -> Result<Vec<Complex64>> {
    if !tensor.matches(cfg) {
        return invalid("tensor shape does not match the configuration");
    }
    let mut s = vec![Complex64::new(0.0, 0.0); cfg.tensor_len()];
    for p in paths {
        add_path_signal(cfg, p, &mut s)?;
    }
    Ok(tensor.data().iter().zip(&s).map(|(h, v)| h - v).collect())
}

/// One M-step on `residual` with `model`; returns 20·log10(α_fake/α_true).
pub fn fpr(
    residual: &[Complex64],
    true_gain: f64,
    cfg: &SoundingConfig,
    est: &EstimatorConfig,
    model: SignalModel,
) -> Result<FprOutcome> {
    if !(true_gain > 0.0) {
        return invalid("FPR needs a positive true gain");
    }
    let ctx = MStepContext { cfg, est, model };
    let mut counters = EvalCounters::default();
    let out = m_step(residual, &ctx, &mut counters)?;
    Ok(FprOutcome { fpr_db: super::fpr_db(out.path.gain, true_gain), fake: out.path, counters })
}

pub fn is_noise_only(fpr_db: f64) -> bool {
    fpr_db < NOISE_ONLY_FPR_DB
}
