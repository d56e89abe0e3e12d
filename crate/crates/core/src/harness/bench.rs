//! Work and wall time of one M-step per estimator.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentSpec;
use super::experiment::Prepared;
use crate::error::{invalid, Result};
use crate::sage::{coherent_objective, count_m_step, lambda_prime, m_step, EstimatorKind, EvalCounters, MStepContext, PartialWindows, PhaseModel, SearchScope};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub estimator: String,
    pub scope: String,
    pub likelihood_evals: u64,
    pub elements_touched: u64,
    pub max_elements_per_eval: u64,
    pub tensor_elements: u64,
    /// Largest per-evaluation element count over the tensor size.
    pub element_ratio: f64,
    pub wall_time_s: f64,
    /// Wall time from timed full-data evaluations scaled by the elements touched.
    pub extrapolated: bool,
}

fn scope_name(s: SearchScope) -> &'static str {
    match s {
        SearchScope::Local => "local",
        SearchScope::Global => "global",
    }
}

/// One M-step of each SAGE estimator on trial 0 of `spec`.
///
/// DSS-o-SAGE runs with the spec's estimator scope; the PWF/SWF baselines
/// with `spec.bench.baseline_scope`. Global-scope M-steps are counted with
/// surrogate objectives and their wall time is extrapolated, since a full
/// run takes hours.
pub fn bench(spec: &ExperimentSpec) -> Result<Vec<BenchRow>> {
    let p = Prepared::new(spec)?;
    let tensor = p.synthesize(0)?;
    let x = tensor.data();
    let Some(truth) = p.reference_path().cloned() else {
        return invalid("bench needs at least one true path");
    };
    let total = p.cfg.tensor_len() as u64;
    let mut rows = Vec::new();
    for &kind in &spec.estimators {
        let Some(model) = kind.signal_model(p.est.wavefront) else { continue };
        let mut est = p.est.clone();
        if kind != EstimatorKind::DssOSage {
            est.scope = spec.bench.baseline_scope;
        }
        let ctx = MStepContext { cfg: &p.cfg, est: &est, model };
        let (counters, wall, extrapolated) = match est.scope {
            SearchScope::Local => {
                let mut c = EvalCounters::default();
                m_step(x, &ctx, &mut c)?;
                let w = c.m_step_seconds;
                (c, w, false)
            }
            SearchScope::Global => {
                let c = count_m_step(x, &ctx, &truth)?;
                let full = PartialWindows::full(&p.cfg);
                let n = spec.bench.timing_evals.max(1);
                let t0 = Instant::now();
                for _ in 0..n {
                    let v = match model.phase {
                        PhaseModel::PerDirection => lambda_prime(&truth, x, &full, &p.cfg)?,
                        PhaseModel::Coherent => coherent_objective(&truth, x, &full, &p.cfg)?,
                    };
                    std::hint::black_box(v);
                }
                let per_element = t0.elapsed().as_secs_f64() / (n as f64 * total as f64);
                (c.clone(), c.elements_touched as f64 * per_element, true)
            }
        };
        rows.push(BenchRow {
            estimator: kind.name().to_string(),
            scope: scope_name(est.scope).to_string(),
            likelihood_evals: counters.likelihood_evals,
            elements_touched: counters.elements_touched,
            max_elements_per_eval: counters.max_elements_per_eval,
            tensor_elements: total,
            element_ratio: counters.max_elements_per_eval as f64 / total as f64,
            wall_time_s: wall,
            extrapolated,
        });
    }
    Ok(rows)
}
