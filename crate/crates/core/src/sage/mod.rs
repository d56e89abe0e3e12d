//! Multipath parameter estimation: DSS-o-SAGE, PWF/SWF SAGE baselines and
//! noise elimination.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::SPEED_OF_LIGHT;
use crate::synth::{CirTensor, PathParams, SoundingConfig};

mod engine;
pub mod mstep;
mod noise_elim;
pub mod search;

pub use engine::{e_step, global_log_likelihood, run_sage};
pub use mstep::{
    closed_form_gain_phase, coarse_estimate, coherent_objective, count_m_step, default_distance_bounds, fine_angles_distance,
    fine_angles_exhaustive, fine_delay, lambda_prime, m_step, partial_windows, reference_delay, AnglePlan, CoarseEstimate,
    DelayPlan, GainPhase, MStepContext, MStepOutcome, PartialWindows, Side, SideEstimate,
};
pub use noise_elim::run_noise_elimination;

/// How per-direction phases enter the signal model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseModel {
    /// Each scan direction carries its own unknown phase (DSS-o-SAGE).
    PerDirection,
    /// One global phase; direction-to-direction phases come only from delay.
    Coherent,
}

/// Wavefront used by the estimator's signal model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wavefront {
    /// Spherical wavefront with scatter distance search.
    Swf,
    /// Far-field approximation: plane waves, distance fixed at infinity.
    Ffa,
}

impl FromStr for Wavefront {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "swf" => Ok(Wavefront::Swf),
            "ffa" => Ok(Wavefront::Ffa),
            _ => Err(Error::Config(format!("unknown wavefront '{s}' (expected swf or ffa)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SignalModel {
    pub phase: PhaseModel,
    pub wavefront: Wavefront,
}

/// Where the fine search looks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchScope {
    /// Local regions around the coarse estimate, partial data.
    Local,
    /// Whole scanned space and delay window, full data.
    Global,
}

/// Minimum path gain α_th.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum GainThreshold {
    /// Fixed linear amplitude.
    Absolute { gain: f64 },
    /// Free-space gain of the line-of-sight distance, at the lowest tone, below the dynamic range.
    Friis { distance_m: Option<f64>, dynamic_range_db: f64 },
    /// Strongest estimated gain below the dynamic range.
    Relative { dynamic_range_db: f64 },
}

impl Default for GainThreshold {
    fn default() -> Self {
        GainThreshold::Relative { dynamic_range_db: 30.0 }
    }
}

/// Free-space amplitude gain c/(4πfd).
pub fn friis_gain(distance: f64, frequency: f64) -> f64 {
    SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * frequency * distance)
}

/// α_th for the friis mode: the largest free-space gain over `frequencies` divided by the dynamic range.
pub fn friis_threshold(distance: f64, frequencies: &[f64], dynamic_range_db: f64) -> Result<f64> {
    if !(distance > 0.0) || frequencies.is_empty() {
        return invalid("friis threshold needs a positive distance and at least one frequency");
    }
    let g = frequencies.iter().map(|&f| friis_gain(distance, f)).fold(0.0, f64::max);
    Ok(g / range_factor(dynamic_range_db))
}

/// Amplitude divisor for a dynamic range: 30 dB ↔ 1000.
pub fn range_factor(dynamic_range_db: f64) -> f64 {
    10f64.powf(dynamic_range_db / 10.0)
}

/// α_th for the relative mode.
pub fn relative_threshold(strongest: f64, dynamic_range_db: f64) -> f64 {
    strongest / range_factor(dynamic_range_db)
}

/// Resolves a threshold that does not depend on estimated gains. `None` for relative mode.
pub fn alpha_threshold(mode: &GainThreshold, cfg: &SoundingConfig) -> Result<Option<f64>> {
    match *mode {
        GainThreshold::Absolute { gain } => Ok(Some(gain)),
        GainThreshold::Friis { distance_m, dynamic_range_db } => {
            let d = distance_m.ok_or_else(|| Error::Config("friis threshold needs the line-of-sight distance".into()))?;
            let f = match cfg.kernel.frequency_plan() {
                Some(p) => p.f1(),
                None => return Err(Error::Config("friis threshold needs a frequency plan".into())),
            };
            friis_threshold(d, &[f], dynamic_range_db).map(Some)
        }
        GainThreshold::Relative { .. } => Ok(None),
    }
}

/// Search grids, partial-data windows and loop control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Delay grid step, seconds.
    pub delay_step: f64,
    /// Angle grid steps, radians.
    pub angle_coarse_step: f64,
    pub angle_fine_step: f64,
    /// Distance grid steps, metres.
    pub distance_coarse_step: f64,
    pub distance_fine_step: f64,
    /// Distance search range; derived from the far-field boundary when absent.
    pub distance_bounds: Option<(f64, f64)>,
    /// Partial data keeps samples with |i − i_m| below this.
    pub sample_half_width: usize,
    /// Partial data keeps directions within this multiple of the HPBW.
    pub angle_window_factor: f64,
    /// Explicit (azimuth, elevation) partial-data half-widths, radians.
    pub angle_window: Option<(f64, f64)>,
    pub threshold: GainThreshold,
    pub convergence_ratio: f64,
    pub max_cycles: usize,
    pub max_paths: usize,
    /// Wavefront for DSS-o-SAGE; the baselines fix their own.
    pub wavefront: Wavefront,
    /// Search levels from the coarse to the fine step.
    pub refine_levels: usize,
    pub scope: SearchScope,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            delay_step: 5e-13,
            angle_coarse_step: 0.2f64.to_radians(),
            angle_fine_step: 0.002f64.to_radians(),
            distance_coarse_step: 0.2,
            distance_fine_step: 0.01,
            distance_bounds: None,
            sample_half_width: 10,
            angle_window_factor: 1.5,
            angle_window: None,
            threshold: GainThreshold::default(),
            convergence_ratio: 1e-3,
            max_cycles: 10,
            max_paths: 32,
            wavefront: Wavefront::Swf,
            refine_levels: 3,
            scope: SearchScope::Local,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.delay_step) && pos(self.angle_fine_step) && pos(self.distance_fine_step)) {
            return Err(Error::Config("search steps must be positive".into()));
        }
        if !(self.angle_fine_step < self.angle_coarse_step && self.distance_fine_step < self.distance_coarse_step) {
            return Err(Error::Config("fine steps must be smaller than coarse steps".into()));
        }
        if search::step_ratio(self.angle_coarse_step, self.angle_fine_step).is_none()
            || search::step_ratio(self.distance_coarse_step, self.distance_fine_step).is_none()
        {
            return Err(Error::Config("coarse steps must be integer multiples of fine steps".into()));
        }
        if !(self.convergence_ratio > 0.0) || self.max_cycles < 1 || self.max_paths < 1 {
            return Err(Error::Config("need convergence ratio > 0, max_cycles >= 1, max_paths >= 1".into()));
        }
        if self.sample_half_width < 1 || !(self.angle_window_factor > 0.0) || self.refine_levels < 1 {
            return Err(Error::Config("partial-data widths and search levels must be positive".into()));
        }
        if let Some((lo, hi)) = self.distance_bounds {
            if !(lo > 0.0 && hi > lo) {
                return Err(Error::Config("distance bounds must satisfy 0 < lo < hi".into()));
            }
        }
        Ok(())
    }
}

/// Estimator selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "dss-o-sage")]
    DssOSage,
    #[serde(rename = "pwf-sage")]
    PwfSage,
    #[serde(rename = "swf-sage")]
    SwfSage,
    #[serde(rename = "noise-elim")]
    NoiseElimination,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::DssOSage => "dss-o-sage",
            EstimatorKind::PwfSage => "pwf-sage",
            EstimatorKind::SwfSage => "swf-sage",
            EstimatorKind::NoiseElimination => "noise-elim",
        }
    }

    /// Signal model for the SAGE variants.
    pub fn signal_model(&self, wavefront: Wavefront) -> Option<SignalModel> {
        match self {
            EstimatorKind::DssOSage => Some(SignalModel { phase: PhaseModel::PerDirection, wavefront }),
            EstimatorKind::PwfSage => Some(SignalModel { phase: PhaseModel::Coherent, wavefront: Wavefront::Ffa }),
            EstimatorKind::SwfSage => Some(SignalModel { phase: PhaseModel::Coherent, wavefront: Wavefront::Swf }),
            EstimatorKind::NoiseElimination => None,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dss-o-sage" => Ok(EstimatorKind::DssOSage),
            "pwf-sage" => Ok(EstimatorKind::PwfSage),
            "swf-sage" => Ok(EstimatorKind::SwfSage),
            "noise-elim" => Ok(EstimatorKind::NoiseElimination),
            _ => Err(Error::Config(format!(
                "unknown estimator '{s}' (expected dss-o-sage, pwf-sage, swf-sage or noise-elim)"
            ))),
        }
    }
}

/// Work done by an estimator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalCounters {
    /// Objective evaluations in delay, angle and distance searches.
    pub likelihood_evals: u64,
    /// Tensor elements read by those evaluations, summed.
    pub elements_touched: u64,
    /// Largest number of elements read by one evaluation.
    pub max_elements_per_eval: u64,
    pub m_steps: u64,
    /// Summed M-step wall time, seconds.
    pub m_step_seconds: f64,
}

impl EvalCounters {
    pub fn record(&mut self, evals: u64, elements_per_eval: u64) {
        self.likelihood_evals += evals;
        self.elements_touched += evals * elements_per_eval;
        if evals > 0 {
            self.max_elements_per_eval = self.max_elements_per_eval.max(elements_per_eval);
        }
    }

    pub fn merge(&mut self, o: &EvalCounters) {
        self.likelihood_evals += o.likelihood_evals;
        self.elements_touched += o.elements_touched;
        self.max_elements_per_eval = self.max_elements_per_eval.max(o.max_elements_per_eval);
        self.m_steps += o.m_steps;
        self.m_step_seconds += o.m_step_seconds;
    }

    pub fn mean_m_step_seconds(&self) -> f64 {
        if self.m_steps == 0 {
            0.0
        } else {
            self.m_step_seconds / self.m_steps as f64
        }
    }
}

/// One estimated path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEstimate {
    pub params: PathParams,
    /// Reduction of the residual energy owed to this path, ‖x̂_l‖² − ‖x̂_l − s_l‖².
    pub likelihood_gain: f64,
    /// Cycle (0 = initialization) in which the path was last updated.
    pub updated_cycle: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimationResult {
    pub estimator: String,
    /// Paths in estimation order.
    pub paths: Vec<PathEstimate>,
    /// Global log-likelihood after the initialization cycle and each later cycle.
    pub likelihood_trace: Vec<f64>,
    pub counters: EvalCounters,
    pub converged: bool,
    pub cycles: usize,
    /// Gain threshold applied.
    pub threshold: f64,
    pub warnings: Vec<String>,
}

impl EstimationResult {
    pub fn path_params(&self) -> Vec<PathParams> {
        self.paths.iter().map(|p| p.params.clone()).collect()
    }
}

/// Runs DSS-o-SAGE with the wavefront from `est`.
pub fn run_dss_o_sage(tensor: &CirTensor, cfg: &SoundingConfig, est: &EstimatorConfig) -> Result<EstimationResult> {
    run_sage(tensor, cfg, est, EstimatorKind::DssOSage.signal_model(est.wavefront).unwrap(), "dss-o-sage")
}

/// SAGE with the coherent plane-wave model.
pub fn run_pwf_sage(tensor: &CirTensor, cfg: &SoundingConfig, est: &EstimatorConfig) -> Result<EstimationResult> {
    run_sage(tensor, cfg, est, EstimatorKind::PwfSage.signal_model(Wavefront::Ffa).unwrap(), "pwf-sage")
}

/// SAGE with the coherent spherical-wave model.
pub fn run_swf_sage(tensor: &CirTensor, cfg: &SoundingConfig, est: &EstimatorConfig) -> Result<EstimationResult> {
    run_sage(tensor, cfg, est, EstimatorKind::SwfSage.signal_model(Wavefront::Swf).unwrap(), "swf-sage")
}

/// Dispatches on the estimator kind.
pub fn estimate(kind: EstimatorKind, tensor: &CirTensor, cfg: &SoundingConfig, est: &EstimatorConfig) -> Result<EstimationResult> {
    match kind {
        EstimatorKind::DssOSage => run_dss_o_sage(tensor, cfg, est),
        EstimatorKind::PwfSage => run_pwf_sage(tensor, cfg, est),
        EstimatorKind::SwfSage => run_swf_sage(tensor, cfg, est),
        EstimatorKind::NoiseElimination => run_noise_elimination(tensor, cfg, est),
    }
}
