//! Numerical Fisher information and Cramér-Rao bounds for the per-direction phase model.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{Direction, SPEED_OF_LIGHT};
use crate::synth::{path_responses, path_signal, PathParams, SoundingConfig};

/// Condition numbers above this withhold the inverse.
pub const MAX_CONDITION: f64 = 1e12;
/// Directions whose signal energy is below this fraction of the strongest get no phase parameter.
pub const ACTIVE_ENERGY_RATIO: f64 = 1e-12;

/// Which parameters enter the FIM.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FimParams {
    pub gain: bool,
    pub delay: bool,
    pub angles: bool,
    pub distance: bool,
    pub phases: bool,
}

impl Default for FimParams {
    fn default() -> Self {
        Self { gain: true, delay: true, angles: true, distance: true, phases: true }
    }
}

impl FimParams {
    pub fn gain_only() -> Self {
        Self { gain: true, delay: false, angles: false, distance: false, phases: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrlbReport {
    /// Parameter names in FIM order, `p<l>.<name>`; units: linear gain, s, rad, m, rad.
    pub parameters: Vec<String>,
    pub fim: Vec<Vec<f64>>,
    /// Diagonal of the inverse FIM; withheld when ill-conditioned.
    pub crlb: Option<Vec<f64>>,
    pub n0: f64,
    /// Condition number of the diagonally scaled FIM.
    pub condition_number: f64,
    pub ill_conditioned: bool,
}

impl CrlbReport {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|p| p == name)
    }

    /// CRLB of a named parameter.
    pub fn bound(&self, name: &str) -> Option<f64> {
        let k = self.index(name)?;
        self.crlb.as_ref().map(|c| c[k])
    }

    /// Square root of the CRLB.
    pub fn std_bound(&self, name: &str) -> Option<f64> {
        self.bound(name).map(f64::sqrt)
    }
}

#[derive(Clone, Copy, Debug)]
enum Param {
    Gain,
    Delay,
    RxAz,
    RxEl,
    RxDist,
    TxAz,
    TxEl,
    TxDist,
    Phase(usize),
}

impl Param {
    fn name(&self) -> String {
        match self {
            Param::Gain => "gain".into(),
            Param::Delay => "delay".into(),
            Param::RxAz => "rx_az".into(),
            Param::RxEl => "rx_el".into(),
            Param::RxDist => "rx_dist".into(),
            Param::TxAz => "tx_az".into(),
            Param::TxEl => "tx_el".into(),
            Param::TxDist => "tx_dist".into(),
            Param::Phase(n) => format!("phase{n}"),
        }
    }
}

/// Derivative of the full signal: dense, or one direction's block.
enum Deriv {
    Dense(Vec<Complex64>),
    Block(usize, Vec<Complex64>),
}

fn re_dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

fn inner(a: &Deriv, b: &Deriv, samples: usize) -> f64 {
    match (a, b) {
        (Deriv::Dense(x), Deriv::Dense(y)) => re_dot(x, y),
        (Deriv::Dense(x), Deriv::Block(n, y)) | (Deriv::Block(n, y), Deriv::Dense(x)) => re_dot(&x[n * samples..(n + 1) * samples], y),
        (Deriv::Block(n, x), Deriv::Block(m, y)) => {
            if n == m {
                re_dot(x, y)
            } else {
                0.0
            }
        }
    }
}

fn shifted(p: &PathParams, which: Param, h: f64) -> Result<PathParams> {
    let mut q = p.clone();
    let turn = |d: Direction, da: f64, de: f64| Direction::new(d.azimuth() + da, d.elevation() + de);
    match which {
        Param::Gain => q.gain += h,
        Param::Delay => q.ref_delay += h,
        Param::RxAz => q.doa = turn(p.doa, h, 0.0)?,
        Param::RxEl => q.doa = turn(p.doa, 0.0, h)?,
        Param::RxDist => q.d_rx = p.d_rx.map(|d| d + h),
        Param::TxAz => q.dod = turn(p.dod, h, 0.0)?,
        Param::TxEl => q.dod = turn(p.dod, 0.0, h)?,
        Param::TxDist => q.d_tx = p.d_tx.map(|d| d + h),
        Param::Phase(_) => unreachable!("phases are differentiated per block"),
    }
    Ok(q)
}

/// Finite-difference step. Delay and angle steps are capped so the carrier phase moves by at most 1e-4 rad.
fn step(p: &PathParams, which: Param, cfg: &SoundingConfig, scale: f64) -> f64 {
    let f_max = cfg.kernel.frequency_plan().map(|plan| plan.highest_frequency());
    let angle = |radius: f64| match f_max {
        Some(f) if radius > 0.0 => (1e-4f64).min(1e-4 * SPEED_OF_LIGHT / (TAU * f * radius)),
        _ => 1e-4,
    };
    scale
        * match which {
            Param::Gain => 1e-6 * p.gain.max(f64::MIN_POSITIVE),
            Param::Delay => match f_max {
                Some(f) => (1e-3 * cfg.kernel.sample_spacing()).min(1e-4 / (TAU * f)),
                None => 1e-3 * cfg.kernel.sample_spacing(),
            },
            Param::RxAz | Param::RxEl => angle(cfg.rx.rotator().radius()),
            Param::TxAz | Param::TxEl => angle(cfg.tx.rotator().radius()),
            Param::Phase(_) => 1e-4,
            Param::RxDist | Param::TxDist => 1e-3,
        }
}

fn derivative(p: &PathParams, which: Param, cfg: &SoundingConfig, scale: f64) -> Result<Deriv> {
    let h = step(p, which, cfg, scale);
    if let Param::Phase(n) = which {
        let resp = path_responses(cfg, p)?;
        let phi = p.phase(n);
        let diff = (Complex64::from_polar(1.0, phi + h) - Complex64::from_polar(1.0, phi - h)) / (2.0 * h);
        let mut block = vec![Complex64::new(0.0, 0.0); cfg.samples()];
        cfg.kernel.fill(resp[n].delay, 0, diff * (p.gain * resp[n].amplitude), &mut block);
        return Ok(Deriv::Block(n, block));
    }
    let plus = path_signal(cfg, &shifted(p, which, h)?)?;
    let minus = path_signal(cfg, &shifted(p, which, -h)?)?;
    Ok(Deriv::Dense(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect()))
}

/// Directions carrying at least [`ACTIVE_ENERGY_RATIO`] of the strongest direction's energy.
pub fn active_directions(p: &PathParams, cfg: &SoundingConfig) -> Result<Vec<usize>> {
    let resp = path_responses(cfg, p)?;
    let e: Vec<f64> = resp.iter().map(|r| r.amplitude * r.amplitude).collect();
    let max = e.iter().cloned().fold(0.0, f64::max);
    Ok((0..e.len()).filter(|&n| max > 0.0 && e[n] >= ACTIVE_ENERGY_RATIO * max).collect())
}

fn parameter_list(p: &PathParams, cfg: &SoundingConfig, sel: FimParams) -> Result<Vec<Param>> {
    let mut out = Vec::new();
    if sel.gain {
        out.push(Param::Gain);
    }
    if sel.delay {
        out.push(Param::Delay);
    }
    let rx_scans = !cfg.rx.is_degenerate();
    let tx_scans = !cfg.tx.is_degenerate();
    if rx_scans {
        if sel.angles {
            out.extend([Param::RxAz, Param::RxEl]);
        }
        if sel.distance && p.d_rx.is_some() {
            out.push(Param::RxDist);
        }
    }
    if tx_scans {
        if sel.angles {
            out.extend([Param::TxAz, Param::TxEl]);
        }
        if sel.distance && p.d_tx.is_some() {
            out.push(Param::TxDist);
        }
    }
    if sel.phases {
        out.extend(active_directions(p, cfg)?.into_iter().map(Param::Phase));
    }
    Ok(out)
}

/// F_kk' = (2/N0)·Re{(∂s/∂Θ_k)^H (∂s/∂Θ_k')} by central differences; `step_scale` multiplies every step.
pub fn fim_numeric_with(paths: &[PathParams], cfg: &SoundingConfig, n0: f64, sel: FimParams, step_scale: f64) -> Result<CrlbReport> {
    if !(n0 > 0.0) {
        return invalid("noise spectral density must be positive");
    }
    if paths.is_empty() {
        return invalid("FIM of an empty path set");
    }
    let mut jobs = Vec::new();
    let mut names = Vec::new();
    for (l, p) in paths.iter().enumerate() {
        p.validate()?;
        let mut full = p.clone();
        full.phases = (0..cfg.n_directions()).map(|n| p.phase(n)).collect();
        for q in parameter_list(&full, cfg, sel)? {
            names.push(format!("p{l}.{}", q.name()));
            jobs.push((full.clone(), q));
        }
    }
    let derivs: Vec<Deriv> = jobs.par_iter().map(|(p, q)| derivative(p, *q, cfg, step_scale)).collect::<Result<_>>()?;
    let k = derivs.len();
    let samples = cfg.samples();
    let rows: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|a| (0..k).map(|b| if b < a { 0.0 } else { 2.0 / n0 * inner(&derivs[a], &derivs[b], samples) }).collect())
        .collect();
    let mut f = DMatrix::from_fn(k, k, |a, b| if b >= a { rows[a][b] } else { rows[b][a] });
    f.fill_lower_triangle_with_upper_triangle();

    let diag: Vec<f64> = (0..k).map(|a| f[(a, a)]).collect();
    let (condition_number, crlb) = if diag.iter().any(|d| !(*d > 0.0)) {
        (f64::INFINITY, None)
    } else {
        let s = DMatrix::from_fn(k, k, |a, b| f[(a, b)] / (diag[a] * diag[b]).sqrt());
        let eig = SymmetricEigen::new(s.clone());
        let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        let inv = if cond <= MAX_CONDITION { s.cholesky().map(|c| c.inverse()) } else { None };
        (cond, inv.map(|m| (0..k).map(|a| m[(a, a)] / diag[a]).collect()))
    };
    Ok(CrlbReport {
        parameters: names,
        fim: (0..k).map(|a| (0..k).map(|b| f[(a, b)]).collect()).collect(),
        ill_conditioned: crlb.is_none(),
        crlb,
        n0,
        condition_number,
    })
}

/// FIM and CRLB over gain, delay, angles, finite distances and the phases of active directions.
pub fn fim_numeric(paths: &[PathParams], cfg: &SoundingConfig, n0: f64) -> Result<CrlbReport> {
    fim_numeric_with(paths, cfg, n0, FimParams::default(), 1.0)
}
