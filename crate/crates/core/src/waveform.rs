//! Delay-domain kernels and antenna radiation patterns.

use std::f64::consts::{LN_2, PI};
use std::io::Read;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::geometry::{Direction, Vec3, SPEED_OF_LIGHT};

/// Stepped-frequency plan of a VNA sounder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyPlan {
    f1: f64,
    delta_f: f64,
    tones: usize,
}

impl FrequencyPlan {
    pub fn new(f1: f64, delta_f: f64, tones: usize) -> Result<Self> {
        if !(f1 > 0.0 && delta_f > 0.0) || !f1.is_finite() || !delta_f.is_finite() {
            return invalid("frequency plan needs f1 > 0 and delta_f > 0");
        }
        if tones < 2 {
            return invalid("frequency plan needs at least two tones");
        }
        Ok(Self { f1, delta_f, tones })
    }

    pub fn f1(&self) -> f64 {
        self.f1
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    pub fn tones(&self) -> usize {
        self.tones
    }

    pub fn frequency(&self, k: usize) -> f64 {
        self.f1 + k as f64 * self.delta_f
    }

    pub fn center_frequency(&self) -> f64 {
        self.f1 + 0.5 * (self.tones - 1) as f64 * self.delta_f
    }

    pub fn highest_frequency(&self) -> f64 {
        self.frequency(self.tones - 1)
    }

    pub fn center_wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.center_frequency()
    }

    /// Delay resolution 1/((K−1)Δf).
    pub fn delay_resolution(&self) -> f64 {
        1.0 / ((self.tones - 1) as f64 * self.delta_f)
    }

    /// a = 1 + Δτ·Δf.
    pub fn stretch(&self) -> f64 {
        1.0 + self.delay_resolution() * self.delta_f
    }

    /// Actual spacing of IDFT output samples, Δτ/a = 1/(KΔf).
    pub fn sample_spacing(&self) -> f64 {
        1.0 / (self.tones as f64 * self.delta_f)
    }

    /// Unambiguous delay window (K−1)Δτ.
    pub fn window(&self) -> f64 {
        (self.tones - 1) as f64 * self.delay_resolution()
    }
}

/// sin(Kx) / (K sin x), with the limit value where sin x vanishes.
pub fn g_k(x: f64, k: usize) -> f64 {
    let s = x.sin();
    let kf = k as f64;
    if s.abs() < 1e-12 {
        // x = mπ: cos(Kmπ)/cos(mπ)
        let m = (x / PI).round() as i64;
        if (m * (k as i64 - 1)).rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    } else {
        (kf * x).sin() / (kf * s)
    }
}

/// g_K(πu) evaluated after reducing u to the nearest integer, which keeps the
/// large argument of the numerator accurate.
#[inline]
fn gk_of_u(u: f64, k: usize) -> f64 {
    let m = u.round();
    let y = u - m;
    let flip = (k - 1) % 2 == 1 && (m as i64).rem_euclid(2) == 1;
    let g = g_k(PI * y, k);
    if flip {
        -g
    } else {
        g
    }
}

#[inline]
fn cis_cycles(c: f64) -> Complex64 {
    let (s, co) = (2.0 * PI * c).sin_cos();
    Complex64::new(co, s)
}

/// VNA kernel sample `i` (1-based) for a path at delay `tau`.
pub fn vna_kernel(plan: &FrequencyPlan, tau: f64, i: usize) -> Complex64 {
    let k = plan.tones;
    let u = plan.delta_f * tau - (i as f64 - 1.0) / k as f64;
    let cycles = -(plan.f1 * tau).fract() - (0.5 * (k - 1) as f64 * u).rem_euclid(2.0);
    cis_cycles(cycles) * gk_of_u(u, k)
}

/// VNA kernel with precomputed per-sample tables for the hot loops.
#[derive(Clone, Debug)]
pub struct VnaKernel {
    plan: FrequencyPlan,
    // e^{jπ(K−1)i/K}
    rotation: Arc<Vec<Complex64>>,
    // (cos πj/K, sin πj/K)
    steps: Arc<Vec<(f64, f64)>>,
}

impl VnaKernel {
    pub fn new(plan: FrequencyPlan) -> Self {
        let k = plan.tones;
        let kf = k as f64;
        let rotation = (0..k)
            .map(|i| cis_cycles((0.5 * (k - 1) as f64 * i as f64 / kf).rem_euclid(1.0)))
            .collect();
        let steps = (0..k).map(|j| ((PI * j as f64 / kf).cos(), (PI * j as f64 / kf).sin())).collect();
        Self { plan, rotation: Arc::new(rotation), steps: Arc::new(steps) }
    }

    pub fn plan(&self) -> &FrequencyPlan {
        &self.plan
    }

    /// Calls `f(j, g_j)` with the real envelope of samples `start + j`, `j < len`,
    /// and returns the common carrier e^{−j2π f_c τ}. The full sample is
    /// carrier · rotation[start + j] · g_j.
    #[inline]
    fn envelope(&self, tau: f64, start: usize, len: usize, mut f: impl FnMut(usize, f64)) -> Complex64 {
        let k = self.plan.tones;
        let kf = k as f64;
        let u0 = self.plan.delta_f * tau - start as f64 / kf;
        let m = u0.round();
        let y0 = u0 - m;
        let sign0 = if (k - 1) % 2 == 1 && (m as i64).rem_euclid(2) == 1 { -1.0 } else { 1.0 };
        let (s0, c0) = (PI * y0).sin_cos();
        let num0 = sign0 * (PI * kf * y0).sin() / kf;
        let mut alt = 1.0;
        for j in 0..len {
            let y = y0 - j as f64 / kf;
            let g = if (y - y.round()).abs() < 1e-4 {
                gk_of_u(u0 - j as f64 / kf, k)
            } else {
                let (cj, sj) = self.steps[j];
                alt * num0 / (s0 * cj - c0 * sj)
            };
            f(j, g);
            alt = -alt;
        }
        cis_cycles(-(self.plan.center_frequency() * tau).fract())
    }
}

/// Sampled autocorrelation of the sounding signal at lags `(k − centre)·spacing`.
#[derive(Clone, Debug, PartialEq)]
pub struct Autocorrelation {
    samples: Vec<Complex64>,
    spacing: f64,
    centre: usize,
}

impl Autocorrelation {
    /// `samples` must have odd length with the zero lag in the middle.
    pub fn new(samples: Vec<Complex64>, spacing: f64) -> Result<Self> {
        if samples.len().is_multiple_of(2) || !(spacing > 0.0) {
            return invalid("autocorrelation needs an odd sample count centred on zero lag and a positive spacing");
        }
        let centre = samples.len() / 2;
        let peak = samples[centre].norm();
        if !(peak > 0.0) {
            return invalid("autocorrelation is zero at lag 0");
        }
        let samples = samples.into_iter().map(|s| s / peak).collect();
        Ok(Self { samples, spacing, centre })
    }

    /// sin(πBt)/(πBt) tabulated every `spacing` out to ±`half_span` lags.
    pub fn sinc(bandwidth: f64, spacing: f64, half_span: usize) -> Result<Self> {
        let samples = (0..=2 * half_span)
            .map(|k| {
                let x = bandwidth * (k as f64 - half_span as f64) * spacing;
                let v = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
                Complex64::new(v, 0.0)
            })
            .collect();
        Self::new(samples, spacing)
    }

    /// Linear interpolation; zero outside the tabulated support.
    pub fn at(&self, lag: f64) -> Complex64 {
        let pos = lag / self.spacing + self.centre as f64;
        if !(pos >= 0.0) || pos > (self.samples.len() - 1) as f64 {
            return Complex64::new(0.0, 0.0);
        }
        let lo = pos.floor() as usize;
        if lo + 1 >= self.samples.len() {
            return self.samples[lo];
        }
        let t = pos - lo as f64;
        self.samples[lo] * (1.0 - t) + self.samples[lo + 1] * t
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }
}

/// Kernel of correlation-based sounding: R_u((i−1)Δτ − τ).
pub fn corr_kernel(ru: &Autocorrelation, delta_tau: f64, tau: f64, i: usize) -> Complex64 {
    ru.at((i as f64 - 1.0) * delta_tau - tau)
}

#[derive(Clone, Debug)]
pub struct CorrelationKernel {
    ru: Arc<Autocorrelation>,
    delta_tau: f64,
    samples: usize,
}

impl CorrelationKernel {
    pub fn new(ru: Autocorrelation, delta_tau: f64, samples: usize) -> Result<Self> {
        if !(delta_tau > 0.0) || samples < 2 {
            return invalid("correlation kernel needs delta_tau > 0 and at least two samples");
        }
        Ok(Self { ru: Arc::new(ru), delta_tau, samples })
    }

    /// Sinc autocorrelation of bandwidth 1/Δτ, tabulated 16 times finer than Δτ.
    pub fn sinc_default(delta_tau: f64, samples: usize) -> Result<Self> {
        Self::new(Autocorrelation::sinc(1.0 / delta_tau, delta_tau / 16.0, 16 * 64)?, delta_tau, samples)
    }

    pub fn autocorrelation(&self) -> &Autocorrelation {
        &self.ru
    }
}

/// Delay kernel R_τ[i] of a sounding system.
#[derive(Clone, Debug)]
pub enum DelayKernel {
    Vna(VnaKernel),
    Correlation(CorrelationKernel),
}

impl DelayKernel {
    pub fn vna(plan: FrequencyPlan) -> Self {
        DelayKernel::Vna(VnaKernel::new(plan))
    }

    /// Samples per CIR.
    pub fn len(&self) -> usize {
        match self {
            DelayKernel::Vna(v) => v.plan.tones,
            DelayKernel::Correlation(c) => c.samples,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Delay between consecutive CIR samples.
    pub fn sample_spacing(&self) -> f64 {
        match self {
            DelayKernel::Vna(v) => v.plan.sample_spacing(),
            DelayKernel::Correlation(c) => c.delta_tau,
        }
    }

    /// Null-to-null main lobe width.
    pub fn main_lobe_width(&self) -> f64 {
        2.0 * self.sample_spacing()
    }

    /// Upper end of the delay window.
    pub fn window(&self) -> f64 {
        match self {
            DelayKernel::Vna(v) => v.plan.window(),
            DelayKernel::Correlation(c) => (c.samples - 1) as f64 * c.delta_tau,
        }
    }

    /// Range of delays accepted for synthesis: the window less five main lobes at each edge.
    pub fn valid_delays(&self) -> (f64, f64) {
        let guard = 5.0 * self.main_lobe_width();
        (guard, self.window() - guard)
    }

    /// Carrier frequency used for wavelength-dependent quantities.
    pub fn center_frequency(&self) -> Option<f64> {
        match self {
            DelayKernel::Vna(v) => Some(v.plan.center_frequency()),
            DelayKernel::Correlation(_) => None,
        }
    }

    pub fn frequency_plan(&self) -> Option<&FrequencyPlan> {
        match self {
            DelayKernel::Vna(v) => Some(&v.plan),
            DelayKernel::Correlation(_) => None,
        }
    }

    /// Kernel value at 0-based sample `idx`.
    pub fn value(&self, tau: f64, idx: usize) -> Complex64 {
        match self {
            DelayKernel::Vna(v) => vna_kernel(&v.plan, tau, idx + 1),
            DelayKernel::Correlation(c) => corr_kernel(&c.ru, c.delta_tau, tau, idx + 1),
        }
    }

    /// Writes `scale · R_τ[start + j]` into `out[j]`.
    pub fn fill(&self, tau: f64, start: usize, scale: Complex64, out: &mut [Complex64]) {
        match self {
            DelayKernel::Vna(v) => {
                let mut env = vec![0.0; out.len()];
                let c = scale * v.envelope(tau, start, out.len(), |j, g| env[j] = g);
                for (j, o) in out.iter_mut().enumerate() {
                    *o = c * v.rotation[start + j] * env[j];
                }
            }
            DelayKernel::Correlation(c) => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = scale * corr_kernel(&c.ru, c.delta_tau, tau, start + j + 1);
                }
            }
        }
    }

    /// Adds `scale · R_τ[start + j]` to `out[j]`.
    pub fn accumulate(&self, tau: f64, start: usize, scale: Complex64, out: &mut [Complex64]) {
        match self {
            DelayKernel::Vna(v) => {
                let mut env = vec![0.0; out.len()];
                let c = scale * v.envelope(tau, start, out.len(), |j, g| env[j] = g);
                for (j, o) in out.iter_mut().enumerate() {
                    *o += c * v.rotation[start + j] * env[j];
                }
            }
            DelayKernel::Correlation(c) => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o += scale * corr_kernel(&c.ru, c.delta_tau, tau, start + j + 1);
                }
            }
        }
    }

    /// (Σ_j conj(R_τ[start + j])·data[j], Σ_j |R_τ[start + j]|²).
    #[inline]
    pub fn correlate(&self, tau: f64, start: usize, data: &[Complex64]) -> (Complex64, f64) {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut energy = 0.0;
        match self {
            DelayKernel::Vna(v) => {
                let rot = &v.rotation[start..start + data.len()];
                let mut inner = Complex64::new(0.0, 0.0);
                let carrier = v.envelope(tau, start, data.len(), |j, g| {
                    inner += rot[j].conj() * data[j] * g;
                    energy += g * g;
                });
                acc = carrier.conj() * inner;
            }
            DelayKernel::Correlation(c) => {
                for (j, x) in data.iter().enumerate() {
                    let r = corr_kernel(&c.ru, c.delta_tau, tau, start + j + 1);
                    acc += r.conj() * x;
                    energy += r.norm_sqr();
                }
            }
        }
        (acc, energy)
    }
}

/// Gain samples over off-boresight angles, read from `az_deg,el_deg,gain_db` CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternTable {
    az: Vec<f64>,
    el: Vec<f64>,
    // gain_db[ia * el.len() + ie]
    gain_db: Vec<f64>,
}

impl PatternTable {
    /// Axes in radians, strictly increasing; gains in dB, azimuth-major.
    pub fn new(az: Vec<f64>, el: Vec<f64>, gain_db: Vec<f64>) -> Result<Self> {
        let increasing = |v: &[f64]| v.len() >= 2 && v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&az) || !increasing(&el) {
            return Err(Error::Format("pattern axes must have at least two strictly increasing values".into()));
        }
        if gain_db.len() != az.len() * el.len() {
            return Err(Error::Format("pattern table is not a full rectangular grid".into()));
        }
        Ok(Self { az, el, gain_db })
    }

    pub fn from_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols != ["az_deg", "el_deg", "gain_db"] {
            return Err(Error::Format(format!("pattern CSV header must be az_deg,el_deg,gain_db, got {}", cols.join(","))));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
            let mut v = [0.0; 3];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = rec[k].parse::<f64>().map_err(|e| Error::Format(format!("pattern CSV: {e}")))?;
            }
            rows.push(v);
        }
        let mut az: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let mut el: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        az.sort_by(f64::total_cmp);
        az.dedup();
        el.sort_by(f64::total_cmp);
        el.dedup();
        if az.len() * el.len() != rows.len() {
            return Err(Error::Format("pattern CSV is not a rectangular grid".into()));
        }
        let mut gain = vec![f64::NAN; rows.len()];
        for r in &rows {
            let ia = az.binary_search_by(|a| a.total_cmp(&r[0])).unwrap();
            let ie = el.binary_search_by(|a| a.total_cmp(&r[1])).unwrap();
            gain[ia * el.len() + ie] = r[2];
        }
        if gain.iter().any(|g| g.is_nan()) {
            return Err(Error::Format("pattern CSV has duplicate grid points".into()));
        }
        Self::new(az.iter().map(|a| a.to_radians()).collect(), el.iter().map(|e| e.to_radians()).collect(), gain)
    }

    /// Bilinear interpolation in dB, returned as linear power; zero outside the table.
    pub fn power(&self, d_az: f64, d_el: f64) -> f64 {
        let locate = |axis: &[f64], x: f64| -> Option<(usize, f64)> {
            if !(x >= axis[0] && x <= axis[axis.len() - 1]) {
                return None;
            }
            let hi = axis.partition_point(|&a| a <= x).min(axis.len() - 1).max(1);
            let lo = hi - 1;
            Some((lo, (x - axis[lo]) / (axis[hi] - axis[lo])))
        };
        let (Some((ia, ta)), Some((ie, te))) = (locate(&self.az, d_az), locate(&self.el, d_el)) else {
            return 0.0;
        };
        let n = self.el.len();
        let g = |a: usize, e: usize| self.gain_db[a * n + e];
        let db = (1.0 - ta) * ((1.0 - te) * g(ia, ie) + te * g(ia, ie + 1)) + ta * ((1.0 - te) * g(ia + 1, ie) + te * g(ia + 1, ie + 1));
        10f64.powf(db / 10.0)
    }
}

/// Radiation pattern shape (power).
#[derive(Clone, Debug, PartialEq)]
pub enum PatternShape {
    /// Unit gain in every direction, for a non-directional side.
    Isotropic,
    Gaussian { hpbw_az: f64, hpbw_el: f64 },
    Tabulated(Arc<PatternTable>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AntennaPattern {
    pub shape: PatternShape,
    /// Linear power gain multiplying the shape.
    pub boresight_gain: f64,
}

impl AntennaPattern {
    pub fn gaussian(hpbw_az: f64, hpbw_el: f64, boresight_gain: f64) -> Result<Self> {
        if !(hpbw_az > 0.0 && hpbw_el > 0.0 && boresight_gain > 0.0) {
            return invalid("gaussian pattern needs positive beamwidths and boresight gain");
        }
        Ok(Self { shape: PatternShape::Gaussian { hpbw_az, hpbw_el }, boresight_gain })
    }

    pub fn isotropic() -> Self {
        Self { shape: PatternShape::Isotropic, boresight_gain: 1.0 }
    }

    pub fn tabulated(table: PatternTable) -> Self {
        Self { shape: PatternShape::Tabulated(Arc::new(table)), boresight_gain: 1.0 }
    }

    pub fn is_isotropic(&self) -> bool {
        matches!(self.shape, PatternShape::Isotropic)
    }

    /// Linear power gain at the given off-boresight offsets.
    pub fn power(&self, d_az: f64, d_el: f64) -> f64 {
        self.boresight_gain
            * match &self.shape {
                PatternShape::Isotropic => 1.0,
                PatternShape::Gaussian { hpbw_az, hpbw_el } => {
                    (-4.0 * LN_2 * (d_az * d_az / (hpbw_az * hpbw_az) + d_el * d_el / (hpbw_el * hpbw_el))).exp()
                }
                PatternShape::Tabulated(t) => t.power(d_az, d_el),
            }
    }

    /// Linear amplitude gain at the given off-boresight offsets.
    #[inline]
    pub fn amplitude(&self, d_az: f64, d_el: f64) -> f64 {
        match &self.shape {
            PatternShape::Gaussian { hpbw_az, hpbw_el } => {
                self.boresight_gain.sqrt()
                    * (-2.0 * LN_2 * (d_az * d_az / (hpbw_az * hpbw_az) + d_el * d_el / (hpbw_el * hpbw_el))).exp()
            }
            _ => self.power(d_az, d_el).sqrt(),
        }
    }

    /// Amplitude gain at boresight.
    pub fn peak_amplitude(&self) -> f64 {
        self.power(0.0, 0.0).sqrt()
    }

    /// Half-power beamwidths (azimuth, elevation); `None` for isotropic.
    pub fn hpbw(&self) -> Option<(f64, f64)> {
        match &self.shape {
            PatternShape::Isotropic => None,
            PatternShape::Gaussian { hpbw_az, hpbw_el } => Some((*hpbw_az, *hpbw_el)),
            PatternShape::Tabulated(_) => {
                let half = 0.5 * self.power(0.0, 0.0);
                let width = |along_az: bool| {
                    let step = 1e-4;
                    let edge = |sign: f64| {
                        let mut x = 0.0;
                        while x < PI {
                            let p = if along_az { self.power(sign * x, 0.0) } else { self.power(0.0, sign * x) };
                            if p < half {
                                break;
                            }
                            x += step;
                        }
                        x
                    };
                    edge(1.0) + edge(-1.0)
                };
                Some((width(true), width(false)))
            }
        }
    }
}

/// Gaussian main-beam power gain.
pub fn gaussian_gain(d_az: f64, d_el: f64, p: &AntennaPattern) -> Result<f64> {
    match p.shape {
        PatternShape::Gaussian { .. } => Ok(p.power(d_az, d_el)),
        _ => invalid("gaussian_gain needs a gaussian pattern"),
    }
}

/// Rotation taking a pointing direction onto +x.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointingFrame {
    rows: [Vec3; 3],
}

impl PointingFrame {
    pub fn new(pointing: Direction) -> Self {
        let (sp, cp) = pointing.azimuth().sin_cos();
        let (st, ct) = pointing.elevation().sin_cos();
        // R_y(θ) · R_z(−φ)
        Self {
            rows: [
                Vec3::new(ct * cp, ct * sp, st),
                Vec3::new(-sp, cp, 0.0),
                Vec3::new(-st * cp, -st * sp, ct),
            ],
        }
    }

    /// Off-boresight (azimuth, elevation) of a unit vector.
    #[inline]
    pub fn offsets(&self, v: Vec3) -> (f64, f64) {
        let x = self.rows[0].dot(v);
        let y = self.rows[1].dot(v);
        let z = self.rows[2].dot(v);
        (y.atan2(x), z.clamp(-1.0, 1.0).asin())
    }
}

/// Amplitude gain of an antenna pointing along `pointing` for a wave arriving from `incoming`.
pub fn pattern_gain(pointing: Direction, incoming: Vec3, p: &AntennaPattern) -> Result<f64> {
    if (incoming.norm() - 1.0).abs() > 1e-9 {
        return invalid("incoming direction is not a unit vector");
    }
    let (da, de) = PointingFrame::new(pointing).offsets(incoming);
    Ok(p.amplitude(da, de))
}
