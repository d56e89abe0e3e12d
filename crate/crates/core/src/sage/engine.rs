//! E-step, likelihood and the SAGE cycle loop.

use num_complex::Complex64;

use super::mstep::{m_step, MStepContext};
use super::{alpha_threshold, relative_threshold, EstimationResult, EstimatorConfig, EvalCounters, GainThreshold, PathEstimate, SignalModel};
use crate::error::{invalid, Result};
use crate::synth::{add_path_signal, path_signal, CirTensor, PathParams, SoundingConfig};

fn check(tensor: &CirTensor, cfg: &SoundingConfig) -> Result<()> {
    if !tensor.matches(cfg) {
        return invalid(format!(
            "tensor shape {:?} does not match the configuration ({}, {}, {})",
            tensor.shape(),
            cfg.n_tx(),
            cfg.n_rx(),
            cfg.samples()
        ));
    }
    Ok(())
}

fn energy(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

fn distance_sq(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

/// x̂_l = h − Σ_{l'≠l} s(θ_l').
pub fn e_step(tensor: &CirTensor, paths: &[PathParams], l: usize, cfg: &SoundingConfig) -> Result<Vec<Complex64>> {
    check(tensor, cfg)?;
    if l >= paths.len() {
        return invalid(format!("path index {l} out of range for {} paths", paths.len()));
    }
    let mut others = vec![Complex64::new(0.0, 0.0); cfg.tensor_len()];
    for (k, p) in paths.iter().enumerate() {
        if k != l {
            add_path_signal(cfg, p, &mut others)?;
        }
    }
    Ok(tensor.data().iter().zip(&others).map(|(h, s)| h - s).collect())
}

/// −‖h − s(Θ)‖².
pub fn global_log_likelihood(paths: &[PathParams], tensor: &CirTensor, cfg: &SoundingConfig) -> Result<f64> {
    check(tensor, cfg)?;
    let mut s = vec![Complex64::new(0.0, 0.0); cfg.tensor_len()];
    for p in paths {
        add_path_signal(cfg, p, &mut s)?;
    }
    Ok(-distance_sq(tensor.data(), &s))
}

/// SAGE with the given signal model.
///
/// The initialization cycle estimates and subtracts paths in order of
/// decreasing strength until the gain drops below α_th. Each later cycle
/// re-estimates every path from x̂_l = residual + s_l; an update is kept only
/// if it does not increase ‖x̂_l − s_l‖², so the likelihood never decreases.
pub fn run_sage(
    tensor: &CirTensor,
    cfg: &SoundingConfig,
    est: &EstimatorConfig,
    model: SignalModel,
    name: &str,
) -> Result<EstimationResult> {
    est.validate()?;
    check(tensor, cfg)?;
    let ctx = MStepContext { cfg, est, model };
    let h = tensor.data();
    let fixed = alpha_threshold(&est.threshold, cfg)?;
    let relative_db = match est.threshold {
        GainThreshold::Relative { dynamic_range_db } => dynamic_range_db,
        _ => 0.0,
    };
    let threshold_for = |strongest: f64| fixed.unwrap_or_else(|| relative_threshold(strongest, relative_db));

    let mut counters = EvalCounters::default();
    let mut warnings = Vec::new();
    let mut paths: Vec<PathEstimate> = Vec::new();
    let mut signals: Vec<Vec<Complex64>> = Vec::new();
    let mut residual = h.to_vec();

    while paths.len() < est.max_paths {
        let out = m_step(&residual, &ctx, &mut counters)?;
        warnings.extend(out.warnings);
        let strongest = paths.first().map_or(out.path.gain, |p| p.params.gain);
        let gain = out.path.gain;
        if !(gain.is_finite() && gain > 0.0) || gain < threshold_for(strongest) {
            break;
        }
        let s = path_signal(cfg, &out.path)?;
        let before = energy(&residual);
        for (r, v) in residual.iter_mut().zip(&s) {
            *r -= v;
        }
        paths.push(PathEstimate { params: out.path, likelihood_gain: before - energy(&residual), updated_cycle: 0 });
        signals.push(s);
    }
    let mut trace = vec![-energy(&residual)];

    // with a single path x̂ is h itself and a cycle would repeat the initialization
    let mut converged = paths.len() <= 1;
    let mut cycles = 0;
    if paths.len() > 1 {
        for cycle in 1..=est.max_cycles {
            residual = h.to_vec();
            for s in &signals {
                for (r, v) in residual.iter_mut().zip(s) {
                    *r -= v;
                }
            }
            for l in 0..paths.len() {
                let x_hat: Vec<Complex64> = residual.iter().zip(&signals[l]).map(|(r, s)| r + s).collect();
                let out = m_step(&x_hat, &ctx, &mut counters)?;
                warnings.extend(out.warnings);
                let s_new = path_signal(cfg, &out.path)?;
                let old_err = distance_sq(&x_hat, &signals[l]);
                let new_err = distance_sq(&x_hat, &s_new);
                let total = energy(&x_hat);
                if out.path.gain.is_finite() && new_err <= old_err {
                    residual = x_hat.iter().zip(&s_new).map(|(x, s)| x - s).collect();
                    paths[l] = PathEstimate { params: out.path, likelihood_gain: total - new_err, updated_cycle: cycle };
                    signals[l] = s_new;
                } else {
                    paths[l].likelihood_gain = total - old_err;
                }
            }
            let ll = -energy(&residual);
            let prev = *trace.last().unwrap();
            trace.push(ll);
            cycles = cycle;
            if ll - prev <= est.convergence_ratio * prev.abs() {
                converged = true;
                break;
            }
        }
    }

    let strongest = paths.iter().map(|p| p.params.gain).fold(0.0, f64::max);
    let threshold = threshold_for(strongest);
    paths.retain(|p| p.params.gain >= threshold);
    warnings.dedup();
    Ok(EstimationResult { estimator: name.to_string(), paths, likelihood_trace: trace, counters, converged, cycles, threshold, warnings })
}
