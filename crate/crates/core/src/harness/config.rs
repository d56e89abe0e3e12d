//! JSON experiment configuration. Degrees, nanoseconds, metres and dB at the
//! interface; the library works in radians and seconds.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Direction, RotatorGeometry, ScanGrid};
use crate::sage::{EstimatorConfig, EstimatorKind, GainThreshold, SearchScope, Wavefront};
use crate::synth::{single_path_scenario, ArraySide, NoiseModel, PathParams, PhaseInstabilityModel, SoundingConfig};
use crate::waveform::{AntennaPattern, CorrelationKernel, DelayKernel, FrequencyPlan, PatternTable};

pub const SCHEMA_VERSION: u32 = 1;

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PatternSpec {
    Isotropic,
    Gaussian {
        hpbw_az_deg: f64,
        hpbw_el_deg: f64,
        #[serde(default = "one")]
        boresight_gain: f64,
    },
    /// CSV file with `az_deg,el_deg,gain_db` columns.
    Table { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl PatternSpec {
    pub fn build(&self) -> Result<AntennaPattern> {
        match self {
            PatternSpec::Isotropic => Ok(AntennaPattern::isotropic()),
            PatternSpec::Gaussian { hpbw_az_deg, hpbw_el_deg, boresight_gain } => {
                AntennaPattern::gaussian(hpbw_az_deg.to_radians(), hpbw_el_deg.to_radians(), *boresight_gain)
                    .map_err(|e| cfg_err(e.to_string()))
            }
            PatternSpec::Table { path } => {
                let f = fs::File::open(path).map_err(|e| cfg_err(format!("pattern table {}: {e}", path.display())))?;
                Ok(AntennaPattern::tabulated(PatternTable::from_csv(f)?))
            }
        }
    }
}

/// A scanning side: rectangular grid, rotator radii and pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideSpec {
    pub az_start_deg: f64,
    pub az_step_deg: f64,
    pub n_az: usize,
    pub el_start_deg: f64,
    pub el_step_deg: f64,
    pub n_el: usize,
    pub radius_h_m: f64,
    pub radius_v_m: f64,
    pub pattern: PatternSpec,
}

impl SideSpec {
    pub fn build(&self) -> Result<ArraySide> {
        let d = |v: f64| v.to_radians();
        let grid = ScanGrid::rectangular(
            d(self.az_start_deg),
            d(self.az_step_deg),
            self.n_az,
            d(self.el_start_deg),
            d(self.el_step_deg),
            self.n_el,
        )
        .map_err(|e| cfg_err(format!("scan grid: {e}")))?;
        let rot = RotatorGeometry::new(self.radius_h_m, self.radius_v_m).map_err(|e| cfg_err(format!("rotator: {e}")))?;
        Ok(ArraySide::new(grid, rot, self.pattern.build()?))
    }

    /// VSA radius sqrt(R_h² + R_v²).
    pub fn radius(&self) -> f64 {
        self.radius_h_m.hypot(self.radius_v_m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSpec {
    /// Uniform tone comb from `f1_ghz` in `delta_f_mhz` steps.
    Vna { f1_ghz: f64, delta_f_mhz: f64, tones: usize },
    /// Correlation sounder with a sinc autocorrelation.
    Correlation { delta_tau_ns: f64, samples: usize },
}

impl KernelSpec {
    pub fn build(&self) -> Result<DelayKernel> {
        match *self {
            KernelSpec::Vna { f1_ghz, delta_f_mhz, tones } => FrequencyPlan::new(f1_ghz * 1e9, delta_f_mhz * 1e6, tones)
                .map(DelayKernel::vna)
                .map_err(|e| cfg_err(format!("frequency plan: {e}"))),
            KernelSpec::Correlation { delta_tau_ns, samples } => CorrelationKernel::sinc_default(delta_tau_ns * 1e-9, samples)
                .map(DelayKernel::Correlation)
                .map_err(|e| cfg_err(format!("correlation kernel: {e}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoundingSpec {
    /// Absent: a fixed isotropic antenna.
    #[serde(default)]
    pub tx: Option<SideSpec>,
    pub rx: SideSpec,
    pub kernel: KernelSpec,
}

impl SoundingSpec {
    pub fn build(&self) -> Result<SoundingConfig> {
        let tx = match &self.tx {
            Some(s) => s.build()?,
            None => ArraySide::fixed_isotropic(),
        };
        Ok(SoundingConfig { tx, rx: self.rx.build()?, kernel: self.kernel.build()? })
    }
}

/// An explicit path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    /// 20·log10 of the linear amplitude.
    pub gain_db: f64,
    pub delay_ns: f64,
    pub doa_az_deg: f64,
    pub doa_el_deg: f64,
    #[serde(default)]
    pub dod_az_deg: f64,
    #[serde(default)]
    pub dod_el_deg: f64,
    /// Absent: plane wave.
    #[serde(default)]
    pub d_rx_m: Option<f64>,
    #[serde(default)]
    pub d_tx_m: Option<f64>,
}

impl PathSpec {
    pub fn build(&self) -> Result<PathParams> {
        let dir = |a: f64, e: f64| Direction::from_degrees(a, e).map_err(|e| cfg_err(format!("path direction: {e}")));
        let p = PathParams {
            gain: 10f64.powf(self.gain_db / 20.0),
            ref_delay: self.delay_ns * 1e-9,
            dod: dir(self.dod_az_deg, self.dod_el_deg)?,
            doa: dir(self.doa_az_deg, self.doa_el_deg)?,
            d_tx: self.d_tx_m,
            d_rx: self.d_rx_m,
            phases: Vec::new(),
        };
        p.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(p)
    }

    pub fn from_params(p: &PathParams) -> Self {
        Self {
            gain_db: 20.0 * p.gain.log10(),
            delay_ns: p.ref_delay * 1e9,
            doa_az_deg: p.doa.azimuth_deg(),
            doa_el_deg: p.doa.elevation_deg(),
            dod_az_deg: p.dod.azimuth_deg(),
            dod_el_deg: p.dod.elevation_deg(),
            d_rx_m: p.d_rx,
            d_tx_m: p.d_tx,
        }
    }
}

/// Ground truth. Without explicit paths: one free-space path at `distance_m`
/// arriving half a scan step off both grid axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: Option<String>,
    pub distance_m: f64,
    /// Override the single path's arrival direction.
    pub doa_az_deg: Option<f64>,
    pub doa_el_deg: Option<f64>,
    /// Carrier for the free-space gain when the kernel has none.
    pub carrier_ghz: Option<f64>,
    pub paths: Vec<PathSpec>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self { name: None, distance_m: 10.0, doa_az_deg: None, doa_el_deg: None, carrier_ghz: None, paths: Vec::new() }
    }
}

impl ScenarioSpec {
    pub fn build(&self, cfg: &SoundingConfig) -> Result<Vec<PathParams>> {
        if !self.paths.is_empty() {
            return self.paths.iter().map(PathSpec::build).collect();
        }
        let fc = match self.carrier_ghz {
            Some(f) => f * 1e9,
            None => cfg.center_frequency().ok_or_else(|| cfg_err("scenario needs carrier_ghz for this kernel"))?,
        };
        let mut p = single_path_scenario(self.distance_m, fc, cfg).map_err(|e| cfg_err(format!("scenario: {e}")))?;
        if self.doa_az_deg.is_some() || self.doa_el_deg.is_some() {
            let az = self.doa_az_deg.unwrap_or(p.doa.azimuth_deg());
            let el = self.doa_el_deg.unwrap_or(p.doa.elevation_deg());
            p.doa = Direction::from_degrees(az, el).map_err(|e| cfg_err(format!("scenario direction: {e}")))?;
        }
        Ok(vec![p])
    }
}

/// Per-direction phase errors, radians.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseSpec {
    pub mean_rad: f64,
    pub sigma_rad: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Relative to the strongest path at boresight; absent is noiseless.
    pub snr_db: Option<f64>,
}

/// Estimator settings in interface units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSpec {
    pub delay_step_ns: f64,
    pub angle_coarse_step_deg: f64,
    pub angle_fine_step_deg: f64,
    pub distance_coarse_step_m: f64,
    pub distance_fine_step_m: f64,
    pub distance_bounds_m: Option<(f64, f64)>,
    pub sample_half_width: usize,
    pub angle_window_factor: f64,
    pub angle_window_deg: Option<(f64, f64)>,
    pub threshold: GainThreshold,
    pub convergence_ratio: f64,
    pub max_cycles: usize,
    pub max_paths: usize,
    pub wavefront: Wavefront,
    pub refine_levels: usize,
    pub scope: SearchScope,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self {
            delay_step_ns: 0.0005,
            angle_coarse_step_deg: 0.2,
            angle_fine_step_deg: 0.002,
            ..Self::from_config(&EstimatorConfig::default())
        }
    }
}

impl EstimatorSpec {
    pub fn from_config(c: &EstimatorConfig) -> Self {
        Self {
            delay_step_ns: c.delay_step * 1e9,
            angle_coarse_step_deg: c.angle_coarse_step.to_degrees(),
            angle_fine_step_deg: c.angle_fine_step.to_degrees(),
            distance_coarse_step_m: c.distance_coarse_step,
            distance_fine_step_m: c.distance_fine_step,
            distance_bounds_m: c.distance_bounds,
            sample_half_width: c.sample_half_width,
            angle_window_factor: c.angle_window_factor,
            angle_window_deg: c.angle_window.map(|(a, e)| (a.to_degrees(), e.to_degrees())),
            threshold: c.threshold,
            convergence_ratio: c.convergence_ratio,
            max_cycles: c.max_cycles,
            max_paths: c.max_paths,
            wavefront: c.wavefront,
            refine_levels: c.refine_levels,
            scope: c.scope,
        }
    }

    pub fn build(&self) -> Result<EstimatorConfig> {
        let c = EstimatorConfig {
            delay_step: self.delay_step_ns * 1e-9,
            angle_coarse_step: self.angle_coarse_step_deg.to_radians(),
            angle_fine_step: self.angle_fine_step_deg.to_radians(),
            distance_coarse_step: self.distance_coarse_step_m,
            distance_fine_step: self.distance_fine_step_m,
            distance_bounds: self.distance_bounds_m,
            sample_half_width: self.sample_half_width,
            angle_window_factor: self.angle_window_factor,
            angle_window: self.angle_window_deg.map(|(a, e)| (a.to_radians(), e.to_radians())),
            threshold: self.threshold,
            convergence_ratio: self.convergence_ratio,
            max_cycles: self.max_cycles,
            max_paths: self.max_paths,
            wavefront: self.wavefront,
            refine_levels: self.refine_levels,
            scope: self.scope,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Phase error standard deviation, radians.
    SigmaPhi,
    /// Single-path scatter distance, metres.
    Distance,
    SnrDb,
    /// Rx VSA radius, metres; split equally between R_h and R_v.
    Radius,
    /// Rx Gaussian HPBW in both planes, degrees.
    HpbwDeg,
}

impl SweepVariable {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVariable::SigmaPhi => "sigma_phi",
            SweepVariable::Distance => "distance",
            SweepVariable::SnrDb => "snr_db",
            SweepVariable::Radius => "radius",
            SweepVariable::HpbwDeg => "hpbw_deg",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// Where a bench runs the PWF/SWF baselines.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    pub baseline_scope: SearchScope,
    /// Full-data objective evaluations timed to extrapolate baseline wall time.
    pub timing_evals: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self { baseline_scope: SearchScope::Global, timing_evals: 16 }
    }
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::DssOSage, EstimatorKind::PwfSage, EstimatorKind::SwfSage]
}

fn default_trials() -> usize {
    1
}

fn default_true() -> bool {
    true
}

/// A complete experiment: measurement, ground truth, impairments, estimators
/// and the Monte Carlo sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub sounding: SoundingSpec,
    #[serde(default)]
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub phase: PhaseSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Axes of a grid sweep, first axis outermost.
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
    /// Run one extra M-step on each residual for the fake power ratio.
    #[serde(default = "default_true")]
    pub compute_fpr: bool,
    #[serde(default)]
    pub bench: BenchSpec,
}

impl ExperimentSpec {
    /// The reference single-path setup: 10 m, noiseless, no phase errors.
    pub fn reference() -> Self {
        let r = 0.02f64.sqrt();
        Self {
            schema_version: SCHEMA_VERSION,
            sounding: SoundingSpec {
                tx: None,
                rx: SideSpec {
                    az_start_deg: 0.0,
                    az_step_deg: 10.0,
                    n_az: 36,
                    el_start_deg: -20.0,
                    el_step_deg: 10.0,
                    n_el: 5,
                    radius_h_m: r,
                    radius_v_m: r,
                    pattern: PatternSpec::Gaussian { hpbw_az_deg: 8.0, hpbw_el_deg: 8.0, boresight_gain: 1.0 },
                },
                kernel: KernelSpec::Vna { f1_ghz: 298.0, delta_f_mhz: 2.0, tones: 2001 },
            },
            scenario: ScenarioSpec::default(),
            phase: PhaseSpec::default(),
            noise: NoiseSpec::default(),
            estimator: EstimatorSpec::default(),
            estimators: default_estimators(),
            trials: 1,
            seed: 0,
            sweep: Vec::new(),
            compute_fpr: true,
            bench: BenchSpec::default(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s).map_err(|e| cfg_err(format!("config: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(cfg_err(format!("schema_version {} unsupported (expected {SCHEMA_VERSION})", self.schema_version)));
        }
        if self.trials < 1 {
            return Err(cfg_err("trials must be at least 1"));
        }
        if self.estimators.is_empty() {
            return Err(cfg_err("estimators must not be empty"));
        }
        for a in &self.sweep {
            if a.values.is_empty() {
                return Err(cfg_err(format!("sweep axis {} has no values", a.variable.name())));
            }
        }
        if self.sweep.iter().enumerate().any(|(i, a)| self.sweep[..i].iter().any(|b| b.variable == a.variable)) {
            return Err(cfg_err("sweep variables must be distinct"));
        }
        if let Some(s) = self.noise.snr_db {
            if !s.is_finite() {
                return Err(cfg_err("snr_db must be finite"));
            }
        }
        if !(self.phase.sigma_rad >= 0.0) {
            return Err(cfg_err("phase sigma must be non-negative"));
        }
        self.estimator.build()?;
        Ok(())
    }

    pub fn sounding_config(&self) -> Result<SoundingConfig> {
        self.sounding.build()
    }

    pub fn estimator_config(&self) -> Result<EstimatorConfig> {
        self.estimator.build()
    }

    pub fn true_paths(&self, cfg: &SoundingConfig) -> Result<Vec<PathParams>> {
        self.scenario.build(cfg)
    }

    pub fn phase_model(&self, seed: u64) -> PhaseInstabilityModel {
        PhaseInstabilityModel { mean: self.phase.mean_rad, sigma: self.phase.sigma_rad, seed }
    }

    pub fn noise_model(&self, seed: u64) -> NoiseModel {
        NoiseModel { snr_db: self.noise.snr_db, seed }
    }

    /// A copy with one sweep variable set.
    pub fn with_value(&self, var: SweepVariable, v: f64) -> Result<Self> {
        let mut s = self.clone();
        match var {
            SweepVariable::SigmaPhi => s.phase.sigma_rad = v,
            SweepVariable::Distance => {
                if !s.scenario.paths.is_empty() {
                    return Err(cfg_err("distance sweeps need the single-path scenario"));
                }
                s.scenario.distance_m = v;
            }
            SweepVariable::SnrDb => s.noise.snr_db = Some(v),
            SweepVariable::Radius => {
                s.sounding.rx.radius_h_m = v / 2f64.sqrt();
                s.sounding.rx.radius_v_m = v / 2f64.sqrt();
            }
            SweepVariable::HpbwDeg => match &mut s.sounding.rx.pattern {
                PatternSpec::Gaussian { hpbw_az_deg, hpbw_el_deg, .. } => {
                    *hpbw_az_deg = v;
                    *hpbw_el_deg = v;
                }
                _ => return Err(cfg_err("HPBW sweeps need a gaussian rx pattern")),
            },
        }
        Ok(s)
    }
}
