//! Threshold detector: every CIR sample above α_th is taken as a path.

use super::{alpha_threshold, relative_threshold, EstimationResult, EstimatorConfig, EvalCounters, GainThreshold, PathEstimate};
use crate::error::{invalid, Result};
use crate::synth::{CirTensor, PathParams, SoundingConfig};

/// Paths in decreasing gain, ties in tensor order. Relative thresholds are taken from the strongest sample.
pub fn run_noise_elimination(tensor: &CirTensor, cfg: &SoundingConfig, est: &EstimatorConfig) -> Result<EstimationResult> {
    if !tensor.matches(cfg) {
        return invalid("tensor shape does not match the configuration");
    }
    let h = tensor.data();
    let threshold = match est.threshold {
        GainThreshold::Relative { dynamic_range_db } => {
            let peak = h.iter().map(|v| v.norm()).fold(0.0, f64::max);
            relative_threshold(peak, dynamic_range_db)
        }
        _ => alpha_threshold(&est.threshold, cfg)?.unwrap_or(0.0),
    };
    let samples = cfg.samples();
    let spacing = cfg.kernel.sample_spacing();
    let mut hits: Vec<(usize, f64)> = h
        .iter()
        .enumerate()
        .map(|(k, v)| (k, v.norm()))
        .filter(|&(_, g)| g > 0.0 && g >= threshold)
        .collect();
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let paths = hits
        .into_iter()
        .map(|(k, g)| {
            let n = k / samples;
            PathEstimate {
                params: PathParams {
                    gain: g,
                    ref_delay: (k % samples) as f64 * spacing,
                    dod: cfg.tx.grid().direction(n / cfg.n_rx()),
                    doa: cfg.rx.grid().direction(n % cfg.n_rx()),
                    d_tx: None,
                    d_rx: None,
                    phases: vec![h[k].arg(); cfg.n_directions()],
                },
                likelihood_gain: g * g,
                updated_cycle: 0,
            }
        })
        .collect();
    Ok(EstimationResult {
        estimator: "noise-elim".into(),
        paths,
        likelihood_trace: Vec::new(),
        counters: EvalCounters::default(),
        converged: true,
        cycles: 0,
        threshold,
        warnings: Vec::new(),
    })
}
