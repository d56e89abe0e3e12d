//! CIR tensor synthesis, phase instability, noise and the CIRT file format.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{
    antenna_position, unit_vector, wavefront_offset, wrap_angle, Direction, RotatorGeometry, ScanGrid, Vec3,
    SPEED_OF_LIGHT,
};
use crate::waveform::{AntennaPattern, DelayKernel, FrequencyPlan, PointingFrame};

/// Parameters of one propagation path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathParams {
    /// Linear amplitude.
    pub gain: f64,
    /// Delay at the reference positions, seconds.
    pub ref_delay: f64,
    pub dod: Direction,
    pub doa: Direction,
    /// Tx to first-bounce distance; `None` is infinite (plane wave).
    pub d_tx: Option<f64>,
    /// Rx to last-bounce distance; `None` is infinite (plane wave).
    pub d_rx: Option<f64>,
    /// Per-direction phases indexed n_t·N_r + n_r; empty means all zero.
    pub phases: Vec<f64>,
}

impl PathParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain >= 0.0) || !self.gain.is_finite() {
            return invalid("path gain must be finite and non-negative");
        }
        if !(self.ref_delay >= 0.0) || !self.ref_delay.is_finite() {
            return invalid("path delay must be finite and non-negative");
        }
        for d in [self.d_tx, self.d_rx].into_iter().flatten() {
            if !(d > 0.0) || !d.is_finite() {
                return invalid("scatter distances must be positive and finite, or infinite");
            }
        }
        Ok(())
    }

    pub fn phase(&self, n: usize) -> f64 {
        self.phases.get(n).copied().unwrap_or(0.0)
    }
}

/// One scanning side: grid, rotator, antenna pattern and reference position.
#[derive(Clone, Debug)]
pub struct ArraySide {
    grid: ScanGrid,
    rotator: RotatorGeometry,
    pattern: AntennaPattern,
    reference: Vec3,
    positions: Vec<Vec3>,
    frames: Vec<PointingFrame>,
}

impl ArraySide {
    /// The rotator centre is the reference position.
    pub fn new(grid: ScanGrid, rotator: RotatorGeometry, pattern: AntennaPattern) -> Self {
        Self::with_reference(grid, rotator, pattern, Vec3::ZERO)
    }

    pub fn with_reference(grid: ScanGrid, rotator: RotatorGeometry, pattern: AntennaPattern, reference: Vec3) -> Self {
        let positions = grid.directions().iter().map(|d| reference + antenna_position(*d, rotator)).collect();
        let frames = grid.directions().iter().map(|d| PointingFrame::new(*d)).collect();
        Self { grid, rotator, pattern, reference, positions, frames }
    }

    /// A non-scanning isotropic point antenna at the origin.
    pub fn fixed_isotropic() -> Self {
        let step = 10f64.to_radians();
        let grid = ScanGrid::single(Direction::new(0.0, 0.0).expect("valid"), step, step).expect("valid");
        Self::new(grid, RotatorGeometry::point(), AntennaPattern::isotropic())
    }

    /// Single direction, zero radius and isotropic pattern: nothing to estimate on this side.
    pub fn is_degenerate(&self) -> bool {
        self.grid.len() == 1 && self.rotator.radius() == 0.0 && self.pattern.is_isotropic()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn grid(&self) -> &ScanGrid {
        &self.grid
    }

    pub fn rotator(&self) -> RotatorGeometry {
        self.rotator
    }

    pub fn pattern(&self) -> &AntennaPattern {
        &self.pattern
    }

    pub fn reference(&self) -> Vec3 {
        self.reference
    }

    pub fn position(&self, n: usize) -> Vec3 {
        self.positions[n]
    }

    /// Amplitude gain of scan direction `n` for a wave from unit vector `v`.
    #[inline]
    pub fn amplitude(&self, n: usize, v: Vec3) -> f64 {
        if self.pattern.is_isotropic() {
            return self.pattern.boresight_gain.sqrt();
        }
        let (a, e) = self.frames[n].offsets(v);
        self.pattern.amplitude(a, e)
    }

    /// Path-length offset (m) and arrival unit vector at scan direction `n`.
    #[inline]
    pub fn offset(&self, n: usize, toward: Vec3, distance: Option<f64>) -> (f64, Vec3) {
        wavefront_offset(self.reference, toward, distance, self.positions[n])
    }
}

/// Everything that defines a measurement: both sides and the delay kernel.
#[derive(Clone, Debug)]
pub struct SoundingConfig {
    pub tx: ArraySide,
    pub rx: ArraySide,
    pub kernel: DelayKernel,
}

impl SoundingConfig {
    pub fn n_tx(&self) -> usize {
        self.tx.len()
    }

    pub fn n_rx(&self) -> usize {
        self.rx.len()
    }

    pub fn samples(&self) -> usize {
        self.kernel.len()
    }

    pub fn n_directions(&self) -> usize {
        self.n_tx() * self.n_rx()
    }

    pub fn tensor_len(&self) -> usize {
        self.n_directions() * self.samples()
    }

    /// Rx-only scan of 36 azimuths (0°..350°) × 5 elevations (−20°..20°) in
    /// 10° steps on a rotator with R_h = R_v = √0.02 m, 8° Gaussian horn,
    /// VNA plan of 2001 tones from 298 GHz in 2 MHz steps.
    pub fn simo_reference() -> Self {
        let deg = 1f64.to_radians();
        let grid = ScanGrid::rectangular(0.0, 10.0 * deg, 36, -20.0 * deg, 10.0 * deg, 5).expect("valid grid");
        let r = 0.02f64.sqrt();
        let rx = ArraySide::new(
            grid,
            RotatorGeometry::new(r, r).expect("valid rotator"),
            AntennaPattern::gaussian(8.0 * deg, 8.0 * deg, 1.0).expect("valid pattern"),
        );
        let plan = FrequencyPlan::new(298e9, 2e6, 2001).expect("valid plan");
        SoundingConfig { tx: ArraySide::fixed_isotropic(), rx, kernel: DelayKernel::vna(plan) }
    }

    /// Carrier used for wavelengths and free-space gains.
    pub fn center_frequency(&self) -> Option<f64> {
        self.kernel.center_frequency()
    }
}

/// Observed delay and combined Tx·Rx amplitude gain of a path in one scan direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionResponse {
    pub delay: f64,
    pub amplitude: f64,
}

/// Per-direction responses of a path, indexed n_t·N_r + n_r.
pub fn path_responses(cfg: &SoundingConfig, path: &PathParams) -> Result<Vec<DirectionResponse>> {
    let tx_dir = unit_vector(path.dod);
    let rx_dir = unit_vector(path.doa);
    let tx: Vec<(f64, Vec3)> = (0..cfg.n_tx()).map(|n| cfg.tx.offset(n, tx_dir, path.d_tx)).collect();
    let rx: Vec<(f64, Vec3)> = (0..cfg.n_rx()).map(|n| cfg.rx.offset(n, rx_dir, path.d_rx)).collect();
    if tx.iter().chain(rx.iter()).any(|(o, v)| !o.is_finite() || !v.is_finite()) {
        return invalid("antenna coincides with a scatter point");
    }
    let mut out = Vec::with_capacity(cfg.n_directions());
    for (nt, (to, tv)) in tx.iter().enumerate() {
        let ct = cfg.tx.amplitude(nt, *tv);
        for (nr, (ro, rv)) in rx.iter().enumerate() {
            out.push(DirectionResponse {
                delay: path.ref_delay + (to + ro) / SPEED_OF_LIGHT,
                amplitude: ct * cfg.rx.amplitude(nr, *rv),
            });
        }
    }
    Ok(out)
}

fn check_delay(cfg: &SoundingConfig, path: &PathParams) -> Result<()> {
    let (lo, hi) = cfg.kernel.valid_delays();
    if path.ref_delay < lo || path.ref_delay > hi {
        return invalid(format!(
            "path delay {:.4} ns outside the usable window [{:.4}, {:.4}] ns",
            path.ref_delay * 1e9,
            lo * 1e9,
            hi * 1e9
        ));
    }
    Ok(())
}

/// Adds the noiseless signal of `path` to a full tensor buffer.
pub fn add_path_signal(cfg: &SoundingConfig, path: &PathParams, out: &mut [Complex64]) -> Result<()> {
    if out.len() != cfg.tensor_len() {
        return invalid("tensor buffer does not match the configuration");
    }
    let resp = path_responses(cfg, path)?;
    let samples = cfg.samples();
    out.par_chunks_mut(samples).zip(resp.par_iter()).enumerate().for_each(|(n, (chunk, r))| {
        let scale = Complex64::from_polar(path.gain * r.amplitude, path.phase(n));
        if scale != Complex64::new(0.0, 0.0) {
            cfg.kernel.accumulate(r.delay, 0, scale, chunk);
        }
    });
    Ok(())
}

/// Noiseless full-tensor signal of one path.
pub fn path_signal(cfg: &SoundingConfig, path: &PathParams) -> Result<Vec<Complex64>> {
    let mut out = vec![Complex64::new(0.0, 0.0); cfg.tensor_len()];
    add_path_signal(cfg, path, &mut out)?;
    Ok(out)
}

/// Normally distributed per-direction phase errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseInstabilityModel {
    pub mean: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl PhaseInstabilityModel {
    pub fn none() -> Self {
        Self { mean: 0.0, sigma: 0.0, seed: 0 }
    }
}

const PHASE_STREAM: u64 = 0x0050_4841_5345;
const NOISE_STREAM: u64 = 0x004e_4f49_5345;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a seed and a tuple of indices into a 64-bit stream key.
pub fn stream_key(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

fn keyed_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, parts))
}

/// Phase draw before wrapping.
pub fn raw_phase(model: &PhaseInstabilityModel, l: usize, n_t: usize, n_r: usize) -> f64 {
    if model.sigma == 0.0 {
        return model.mean;
    }
    let z: f64 = keyed_rng(model.seed, &[PHASE_STREAM, l as u64, n_t as u64, n_r as u64]).sample(StandardNormal);
    model.mean + model.sigma * z
}

/// Phase error of path `l` in scan direction (n_t, n_r), wrapped into (−π, π].
pub fn gen_phases(model: &PhaseInstabilityModel, l: usize, n_t: usize, n_r: usize) -> f64 {
    wrap_angle(raw_phase(model, l, n_t, n_r))
}

/// Copies of `paths` with phase errors added to their per-direction phases.
pub fn apply_phase_model(paths: &[PathParams], cfg: &SoundingConfig, model: &PhaseInstabilityModel) -> Vec<PathParams> {
    paths
        .iter()
        .enumerate()
        .map(|(l, p)| {
            let mut q = p.clone();
            q.phases = (0..cfg.n_directions())
                .map(|n| wrap_angle(p.phase(n) + gen_phases(model, l, n / cfg.n_rx(), n % cfg.n_rx())))
                .collect();
            q
        })
        .collect()
}

/// Additive white noise at a signal-to-noise ratio; `snr_db` `None` means noiseless.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self { snr_db: None, seed: 0 }
    }

    /// Per-sample variance for a given peak power.
    pub fn variance(&self, peak_power: f64) -> f64 {
        match self.snr_db {
            None => 0.0,
            Some(snr) => peak_power / 10f64.powf(snr / 10.0),
        }
    }
}

/// Squared amplitude of the strongest path with both antennas at boresight.
pub fn peak_power(paths: &[PathParams], cfg: &SoundingConfig) -> f64 {
    let g = cfg.tx.pattern().peak_amplitude() * cfg.rx.pattern().peak_amplitude();
    let a = paths.iter().map(|p| p.gain).fold(0.0, f64::max);
    (a * g).powi(2)
}

/// Provenance stored alongside a tensor.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_variance: Option<f64>,
    /// Experiment configuration that produced the tensor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

/// Complex CIR samples laid out (n_t outer, n_r middle, i inner).
#[derive(Clone, Debug, PartialEq)]
pub struct CirTensor {
    n_tx: usize,
    n_rx: usize,
    samples: usize,
    data: Vec<Complex64>,
    pub meta: TensorMeta,
}

impl CirTensor {
    pub fn zeros(n_tx: usize, n_rx: usize, samples: usize) -> Self {
        Self { n_tx, n_rx, samples, data: vec![Complex64::new(0.0, 0.0); n_tx * n_rx * samples], meta: TensorMeta::default() }
    }

    pub fn for_config(cfg: &SoundingConfig) -> Self {
        Self::zeros(cfg.n_tx(), cfg.n_rx(), cfg.samples())
    }

    pub fn from_data(n_tx: usize, n_rx: usize, samples: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != n_tx * n_rx * samples {
            return invalid("sample count does not match tensor dimensions");
        }
        Ok(Self { n_tx, n_rx, samples, data, meta: TensorMeta::default() })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_tx, self.n_rx, self.samples)
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, n_t: usize, n_r: usize, i: usize) -> Complex64 {
        self.data[(n_t * self.n_rx + n_r) * self.samples + i]
    }

    /// The CIR of one scan direction.
    pub fn cir(&self, n_t: usize, n_r: usize) -> &[Complex64] {
        let s = (n_t * self.n_rx + n_r) * self.samples;
        &self.data[s..s + self.samples]
    }

    pub fn matches(&self, cfg: &SoundingConfig) -> bool {
        self.shape() == (cfg.n_tx(), cfg.n_rx(), cfg.samples())
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Adds circular complex Gaussian noise of the given per-sample variance.
pub fn add_noise_variance(t: &mut CirTensor, variance: f64, seed: u64) {
    if variance == 0.0 {
        return;
    }
    let sd = (variance / 2.0).sqrt();
    let (n_rx, samples) = (t.n_rx, t.samples);
    t.data.par_chunks_mut(samples).enumerate().for_each(|(n, chunk)| {
        let mut rng = keyed_rng(seed, &[NOISE_STREAM, (n / n_rx) as u64, (n % n_rx) as u64]);
        for c in chunk.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *c += Complex64::new(sd * re, sd * im);
        }
    });
}

/// Adds noise at `model.snr_db` relative to `peak_power`.
pub fn add_noise(mut t: CirTensor, model: &NoiseModel, peak_power: f64) -> CirTensor {
    let v = model.variance(peak_power);
    add_noise_variance(&mut t, v, model.seed);
    if model.snr_db.is_some() {
        t.meta.noise_seed = Some(model.seed);
        t.meta.noise_variance = Some(v);
    }
    t
}

/// Measured tensor h for a set of paths.
pub fn synthesize(
    paths: &[PathParams],
    cfg: &SoundingConfig,
    phase: &PhaseInstabilityModel,
    noise: &NoiseModel,
) -> Result<CirTensor> {
    if cfg.n_directions() == 0 || cfg.samples() == 0 {
        return invalid("scan grids and kernel must be non-empty");
    }
    for p in paths {
        p.validate()?;
        check_delay(cfg, p)?;
        if !p.phases.is_empty() && p.phases.len() != cfg.n_directions() {
            return invalid("per-direction phase count does not match the scan grids");
        }
    }
    let perturbed = apply_phase_model(paths, cfg, phase);
    let mut t = CirTensor::for_config(cfg);
    for p in &perturbed {
        add_path_signal(cfg, p, &mut t.data)?;
    }
    if phase.sigma != 0.0 || phase.mean != 0.0 {
        t.meta.phase_seed = Some(phase.seed);
    }
    Ok(add_noise(t, noise, peak_power(paths, cfg)))
}

/// The single-path scenario: a path at distance `d` arriving mid-way between scan directions.
pub fn single_path_scenario(d: f64, f_center: f64, cfg: &SoundingConfig) -> Result<PathParams> {
    if !(d > 0.0) || !(f_center > 0.0) {
        return invalid("distance and frequency must be positive");
    }
    let g = cfg.rx.grid();
    Ok(PathParams {
        gain: SPEED_OF_LIGHT / (4.0 * PI * f_center * d),
        ref_delay: d / SPEED_OF_LIGHT,
        dod: Direction::new(0.0, 0.0)?,
        doa: Direction::new(g.az_step() / 2.0, g.el_step() / 2.0)?,
        d_tx: None,
        d_rx: Some(d),
        phases: Vec::new(),
    })
}

const MAGIC: &[u8; 4] = b"CIRT";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

/// Sidecar path `<file>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode_tensor(t: &CirTensor) -> Result<Vec<u8>> {
    let dims: Vec<u32> = [t.n_tx, t.n_rx, t.samples]
        .iter()
        .map(|&d| u32::try_from(d).map_err(|_| Error::Format("tensor dimension exceeds u32".into())))
        .collect::<Result<_>>()?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 16 * t.data.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for d in dims {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for c in &t.data {
        buf.extend_from_slice(&c.re.to_le_bytes());
        buf.extend_from_slice(&c.im.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<CirTensor> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("truncated CIRT header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad CIRT magic".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap());
    if word(0) != VERSION {
        return Err(Error::Format(format!("unsupported CIRT version {}", word(0))));
    }
    let (n_tx, n_rx, samples) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let payload = n_tx
        .checked_mul(n_rx)
        .and_then(|v| v.checked_mul(samples))
        .and_then(|v| v.checked_mul(16))
        .ok_or_else(|| Error::Format("CIRT dimensions overflow".into()))?;
    if bytes.len() - HEADER_LEN != payload {
        return Err(Error::Format(format!(
            "CIRT payload is {} bytes, dimensions need {payload}",
            bytes.len() - HEADER_LEN
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(f64::from_le_bytes(c[0..8].try_into().unwrap()), f64::from_le_bytes(c[8..16].try_into().unwrap()))
        })
        .collect();
    Ok(CirTensor { n_tx, n_rx, samples, data, meta: TensorMeta::default() })
}

/// Writes the binary tensor and its JSON sidecar.
pub fn save_tensor(t: &CirTensor, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_tensor(t)?)?;
    let side = serde_json::to_vec_pretty(&t.meta).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(sidecar_path(path), side)?;
    Ok(())
}

/// Reads a tensor; the sidecar is optional.
pub fn load_tensor(path: &Path) -> Result<CirTensor> {
    let mut t = decode_tensor(&fs::read(path)?)?;
    let side = sidecar_path(path);
    if side.exists() {
        t.meta = serde_json::from_slice(&fs::read(side)?).map_err(|e| Error::Format(format!("sidecar: {e}")))?;
    }
    Ok(t)
}
