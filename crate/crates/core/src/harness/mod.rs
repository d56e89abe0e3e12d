//! JSON configuration, Monte Carlo sweeps, benchmarks, channel statistics and the CLI.

pub mod bench;
pub mod characterize;
pub mod cli;
pub mod config;
pub mod experiment;

use serde::{Deserialize, Serialize};

pub use bench::{bench, BenchRow};
pub use characterize::{characterize, load_results, CharacterRow, Characterization};
pub use config::{ExperimentSpec, SweepAxis, SweepVariable, SCHEMA_VERSION};
pub use experiment::{run_sweep, run_trial, summarize, sweep_points, trial_seeds, Prepared, ResultFile, SweepSummary};

use crate::error::{Error, Result};
use crate::evalkit::{fim_numeric, CrlbReport};
use crate::synth::peak_power;

/// Square-root CRLB of one parameter in interface units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StdBound {
    pub parameter: String,
    pub unit: String,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrlbOutput {
    pub report: CrlbReport,
    /// Gain, delay, angle and distance bounds; phases omitted.
    pub std_bounds: Vec<StdBound>,
}

fn interface_unit(name: &str) -> Option<(&'static str, f64)> {
    let base = name.rsplit('.').next()?;
    match base {
        "gain" => Some(("linear", 1.0)),
        "delay" => Some(("ns", 1e9)),
        "rx_az" | "rx_el" | "tx_az" | "tx_el" => Some(("deg", 1f64.to_degrees())),
        "rx_dist" | "tx_dist" => Some(("m", 1.0)),
        _ => None,
    }
}

/// FIM and CRLB of the scenario's true paths; N0 is the noise variance at `noise.snr_db`.
pub fn crlb(spec: &ExperimentSpec) -> Result<CrlbOutput> {
    let p = Prepared::new(spec)?;
    let snr = spec.noise.snr_db.ok_or_else(|| Error::Config("crlb needs noise.snr_db".into()))?;
    let n0 = peak_power(&p.truth, &p.cfg) / 10f64.powf(snr / 10.0);
    let report = fim_numeric(&p.truth, &p.cfg, n0)?;
    let std_bounds = match &report.crlb {
        Some(c) => report
            .parameters
            .iter()
            .zip(c)
            .filter_map(|(n, v)| {
                let (unit, scale) = interface_unit(n)?;
                Some(StdBound { parameter: n.clone(), unit: unit.into(), std: v.sqrt() * scale })
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(CrlbOutput { report, std_bounds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crlb_scales_with_noise() {
        let mut s = ExperimentSpec::reference();
        s.scenario.distance_m = 100.0;
        s.noise.snr_db = Some(40.0);
        let a = crlb(&s).unwrap();
        assert!(!a.report.ill_conditioned);
        assert!(a.std_bounds.iter().all(|b| b.std.is_finite() && b.std > 0.0));
        let names: Vec<&str> = a.std_bounds.iter().map(|b| b.parameter.as_str()).collect();
        assert_eq!(names, ["p0.gain", "p0.delay", "p0.rx_az", "p0.rx_el", "p0.rx_dist"]);
        // N0 doubled
        s.noise.snr_db = Some(40.0 - 10.0 * 2f64.log10());
        let b = crlb(&s).unwrap();
        for (x, y) in a.report.crlb.unwrap().iter().zip(b.report.crlb.unwrap()) {
            assert!((y / x - 2.0).abs() < 1e-6);
        }
        s.noise.snr_db = None;
        assert!(matches!(crlb(&s), Err(Error::Config(_))));
    }

    #[test]
    fn zero_gain_everywhere_is_flagged() {
        let mut s = ExperimentSpec::reference();
        s.noise.snr_db = Some(40.0);
        s.scenario.distance_m = 100.0;
        // arrival far outside every beam: the pattern amplitude underflows to zero
        s.scenario.doa_az_deg = Some(180.0);
        s.sounding.rx.n_az = 2;
        s.sounding.rx.pattern = config::PatternSpec::Gaussian { hpbw_az_deg: 0.5, hpbw_el_deg: 0.5, boresight_gain: 1.0 };
        let out = crlb(&s).unwrap();
        assert!(out.report.ill_conditioned && out.report.crlb.is_none() && out.std_bounds.is_empty());
    }
}
