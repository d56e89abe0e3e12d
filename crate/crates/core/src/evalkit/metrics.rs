//! Accuracy metrics, the far-field distance boundary and channel statistics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{wrap_degrees, SPEED_OF_LIGHT};
use crate::synth::PathParams;

/// sqrt(mean(e²)).
pub fn rmse(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return invalid("rmse of an empty error list");
    }
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

/// RMSE of angular errors in degrees, each wrapped into (−180°, 180°] first.
pub fn rmse_deg(errors: &[f64]) -> Result<f64> {
    let wrapped: Vec<f64> = errors.iter().map(|&e| wrap_degrees(e)).collect();
    rmse(&wrapped)
}

/// 20·log10(fake/true); −∞ when nothing was found.
pub fn fpr_db(fake_gain: f64, true_gain: f64) -> f64 {
    20.0 * (fake_gain / true_gain).log10()
}

const DTH_A: f64 = 0.0184;
const DTH_B_DEG: f64 = 10.773;
const DTH_C: f64 = 1.4597;

/// Scatter distance below which the far-field approximation breaks down:
/// a·|ln(hpbw/b)|^c·(r/λ).
pub fn far_field_threshold(hpbw: f64, radius: f64, wavelength: f64) -> Result<f64> {
    if !(hpbw > 0.0 && radius > 0.0 && wavelength > 0.0) {
        return invalid("far-field threshold needs positive beamwidth, radius and wavelength");
    }
    let l = (hpbw / DTH_B_DEG.to_radians()).ln().abs();
    Ok(DTH_A * l.powf(DTH_C) * radius / wavelength)
}

/// −10·log10(Σ α²), dB.
pub fn path_loss_db(gains: &[f64]) -> Result<f64> {
    if gains.is_empty() {
        return invalid("path loss of an empty path set");
    }
    let p: f64 = gains.iter().map(|g| g * g).sum();
    if !(p > 0.0) {
        return invalid("path loss of zero received power");
    }
    Ok(-10.0 * p.log10())
}

/// Free-space path loss 20·log10(4πfd/c), dB.
pub fn free_space_path_loss_db(distance: f64, frequency: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * frequency * distance / SPEED_OF_LIGHT).log10()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiFit {
    /// Path-loss exponent.
    pub ple: f64,
    /// RMS residual, dB.
    pub sigma_db: f64,
}

/// Least-squares path-loss exponent of the close-in model PL = FSPL(d0) + 10·n·log10(d/d0).
pub fn ci_fit(points: &[(f64, f64)], frequency: f64, d0: f64) -> Result<CiFit> {
    if points.len() < 2 {
        return invalid("CI fit needs at least two points");
    }
    if points.iter().any(|(d, _)| !(*d > 0.0)) || !(d0 > 0.0) || !(frequency > 0.0) {
        return invalid("CI fit needs positive distances and frequency");
    }
    let first = points[0].0;
    if points.iter().all(|(d, _)| (d - first).abs() <= 1e-12 * first) {
        return invalid("CI fit needs at least two distinct distances");
    }
    let fspl = free_space_path_loss_db(d0, frequency);
    let xs: Vec<f64> = points.iter().map(|(d, _)| 10.0 * (d / d0).log10()).collect();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    if !(sxx > 0.0) {
        return invalid("CI fit: all distances equal the reference distance");
    }
    let ple = xs.iter().zip(points).map(|(x, (_, pl))| x * (pl - fspl)).sum::<f64>() / sxx;
    let ss: f64 = xs.iter().zip(points).map(|(x, (_, pl))| (pl - fspl - ple * x).powi(2)).sum();
    Ok(CiFit { ple, sigma_db: (ss / points.len() as f64).sqrt() })
}

fn powers(paths: &[PathParams]) -> Result<(Vec<f64>, f64)> {
    let p: Vec<f64> = paths.iter().map(|p| p.gain * p.gain).collect();
    let total: f64 = p.iter().sum();
    if paths.is_empty() || !(total > 0.0) {
        return invalid("spread of a path set with no power");
    }
    Ok((p, total))
}

fn weighted_rms(p: &[f64], total: f64, v: impl Fn(usize) -> f64) -> f64 {
    let mean = (0..p.len()).map(|k| p[k] * v(k)).sum::<f64>() / total;
    let var = (0..p.len()).map(|k| p[k] * (v(k) - mean).powi(2)).sum::<f64>() / total;
    var.max(0.0).sqrt()
}

/// Power-weighted RMS delay spread, seconds.
pub fn delay_spread(paths: &[PathParams]) -> Result<f64> {
    let (p, total) = powers(paths)?;
    Ok(weighted_rms(&p, total, |k| paths[k].ref_delay))
}

/// Power-weighted circular RMS azimuth spread of arrival, degrees: the
/// smallest linear RMS spread over every place the circle can be cut.
pub fn asa(paths: &[PathParams]) -> Result<f64> {
    let (p, total) = powers(paths)?;
    let mut az: Vec<(f64, f64)> = paths.iter().zip(&p).map(|(q, &w)| (q.doa.azimuth_deg(), w)).collect();
    az.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (s1, s2) = az.iter().fold((0.0, 0.0), |(s1, s2), &(a, w)| (s1 + w * a, s2 + w * a * a));
    // cutting before sorted index k moves the first k azimuths up by 360°;
    // prefix sums rank the cuts, the winner is recomputed in two passes
    let (mut pw, mut pa) = (0.0, 0.0);
    let mut best = (f64::INFINITY, 0);
    for k in 0..az.len() {
        if k == 0 || az[k].0 != az[k - 1].0 {
            let m1 = s1 + 360.0 * pw;
            let m2 = s2 + 720.0 * pa + 360.0 * 360.0 * pw;
            let mean = m1 / total;
            let var = m2 / total - mean * mean;
            if var < best.0 {
                best = (var, k);
            }
        }
        pw += az[k].1;
        pa += az[k].1 * az[k].0;
    }
    let k = best.1;
    let w: Vec<f64> = az.iter().map(|a| a.1).collect();
    Ok(weighted_rms(&w, total, |i| if i < k { az[i].0 + 360.0 } else { az[i].0 }))
}

/// Power-weighted RMS elevation spread of arrival, degrees.
pub fn esa(paths: &[PathParams]) -> Result<f64> {
    let (p, total) = powers(paths)?;
    Ok(weighted_rms(&p, total, |k| paths[k].doa.elevation_deg()))
}

/// One Monte Carlo trial of one estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep_var: String,
    pub trial: usize,
    pub estimator: String,
    pub err_gain_db: Option<f64>,
    pub err_delay_ns: Option<f64>,
    pub err_az_deg: Option<f64>,
    pub err_el_deg: Option<f64>,
    pub fpr_db: Option<f64>,
    pub likelihood_evals: u64,
    pub elements_touched: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Direction;
    use proptest::prelude::*;

    fn path(gain: f64, delay: f64, az: f64, el: f64) -> PathParams {
        PathParams {
            gain,
            ref_delay: delay,
            dod: Direction::new(0.0, 0.0).unwrap(),
            doa: Direction::from_degrees(az, el).unwrap(),
            d_tx: None,
            d_rx: None,
            phases: vec![],
        }
    }

    #[test]
    fn rmse_examples() {
        assert!((rmse(&[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(rmse(&[0.0, 0.0]).unwrap(), 0.0);
        assert!((rmse_deg(&[359.0, -1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(rmse(&[]).is_err());
    }

    #[test]
    fn far_field_threshold_examples() {
        let lam = SPEED_OF_LIGHT / 313.5e9;
        let d = far_field_threshold(8f64.to_radians(), 0.29, lam).unwrap();
        assert!((d - 0.94).abs() < 0.02);
        assert!(far_field_threshold(10.773f64.to_radians(), 0.29, lam).unwrap() < 1e-12);
        // 0.0184·|ln(10/10.773)|^1.4597·0.2/(c/300e9), evaluated independently
        let d = far_field_threshold(10f64.to_radians(), 0.2, SPEED_OF_LIGHT / 300e9).unwrap();
        assert!((d - 0.08300).abs() < 5e-4, "{d}");
    }

    #[test]
    fn path_loss_examples() {
        assert!((path_loss_db(&[1e-5]).unwrap() - 100.0).abs() < 1e-9);
        let two = path_loss_db(&[1e-5, 1e-5]).unwrap();
        assert!((100.0 - two - 3.0103).abs() < 1e-4);
        let friis = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * 300e9 * 10.0);
        assert!((path_loss_db(&[friis]).unwrap() - 101.99).abs() < 0.01);
        assert!(path_loss_db(&[]).is_err());
    }

    #[test]
    fn ci_fit_examples() {
        let f = 300e9;
        let free: Vec<(f64, f64)> = [2.0, 5.0, 10.0, 40.0].iter().map(|&d| (d, free_space_path_loss_db(d, f))).collect();
        let fit = ci_fit(&free, f, 1.0).unwrap();
        assert!((fit.ple - 2.0).abs() < 1e-9 && fit.sigma_db < 1e-9);
        let planted: Vec<(f64, f64)> =
            [3.0, 7.0, 20.0].iter().map(|&d| (d, free_space_path_loss_db(1.0, f) + 14.7 * f64::log10(d))).collect();
        assert!((ci_fit(&planted, f, 1.0).unwrap().ple - 1.47).abs() < 1e-9);
        assert!(ci_fit(&[(5.0, 90.0)], f, 1.0).is_err());
        assert!(ci_fit(&[(5.0, 90.0), (5.0, 91.0)], f, 1.0).is_err());
    }

    #[test]
    fn spread_examples() {
        let one = [path(1.0, 10e-9, 30.0, 5.0)];
        assert_eq!(delay_spread(&one).unwrap(), 0.0);
        assert_eq!(asa(&one).unwrap(), 0.0);
        assert_eq!(esa(&one).unwrap(), 0.0);
        let two = [path(1.0, 0.0, 0.0, 0.0), path(1.0, 10e-9, 90.0, 0.0)];
        assert!((delay_spread(&two).unwrap() - 5e-9).abs() < 1e-18);
        assert!((asa(&two).unwrap() - 45.0).abs() < 1e-9);
        let across = [path(1.0, 0.0, 350.0, 0.0), path(1.0, 0.0, 10.0, 0.0)];
        assert!((asa(&across).unwrap() - 10.0).abs() < 1e-9);
        assert!(asa(&[path(0.0, 0.0, 0.0, 0.0)]).is_err());
    }

    // every cut of the circle tried directly
    fn asa_brute_force(paths: &[PathParams]) -> f64 {
        let (p, total) = powers(paths).unwrap();
        let az: Vec<f64> = paths.iter().map(|q| q.doa.azimuth_deg()).collect();
        az.iter()
            .map(|&cut| weighted_rms(&p, total, |k| if az[k] < cut { az[k] + 360.0 } else { az[k] }))
            .fold(f64::INFINITY, f64::min)
    }

    proptest! {
        #[test]
        fn asa_matches_brute_force(ps in prop::collection::vec((0.01f64..1.0, 0u32..36, 0.0f64..10.0), 1..30)) {
            // coarse azimuths make ties common
            let paths: Vec<PathParams> = ps.iter().map(|&(g, k, f)| path(g, 0.0, k as f64 * 10.0 + if f < 5.0 { 0.0 } else { f }, 0.0)).collect();
            let (a, b) = (asa(&paths).unwrap(), asa_brute_force(&paths));
            prop_assert!((a - b).abs() <= 1e-6 * (1.0 + b), "{} vs {}", a, b);
        }

        #[test]
        fn rmse_scale_equivariant(e in prop::collection::vec(-100.0f64..100.0, 1..20), k in -10.0f64..10.0) {
            let scaled: Vec<f64> = e.iter().map(|x| x * k).collect();
            let a = rmse(&scaled).unwrap();
            let b = k.abs() * rmse(&e).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b));
        }

        #[test]
        fn far_field_threshold_monotone_in_radius(h in 1.0f64..40.0, r in 0.01f64..1.0, dr in 0.001f64..1.0) {
            let lam = 1e-3;
            let a = far_field_threshold(h.to_radians(), r, lam).unwrap();
            let b = far_field_threshold(h.to_radians(), r + dr, lam).unwrap();
            prop_assert!(b >= a);
        }

        #[test]
        fn spread_invariances(
            ps in prop::collection::vec((0.01f64..1.0, 0.0f64..100.0, 0.0f64..360.0, -40.0f64..40.0), 1..8),
            scale in 0.1f64..10.0,
            shift in 0.0f64..50.0,
            rot in 0.0f64..360.0,
        ) {
            let base: Vec<PathParams> = ps.iter().map(|&(g, t, a, e)| path(g, t * 1e-9, a, e)).collect();
            let moved: Vec<PathParams> = ps.iter().map(|&(g, t, a, e)| path(g * scale, (t + shift) * 1e-9, a + rot, e)).collect();
            let ds0 = delay_spread(&base).unwrap();
            prop_assert!((delay_spread(&moved).unwrap() - ds0).abs() <= 1e-9 * (1e-9 + ds0));
            let a0 = asa(&base).unwrap();
            prop_assert!((asa(&moved).unwrap() - a0).abs() <= 1e-7 * (1.0 + a0));
            let e0 = esa(&base).unwrap();
            prop_assert!((esa(&moved).unwrap() - e0).abs() <= 1e-9 * (1.0 + e0));
        }
    }
}
