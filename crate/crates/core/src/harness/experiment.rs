//! Trials, Monte Carlo sweeps and their CSV/JSON artifacts.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentSpec, PathSpec, SweepVariable};
use crate::error::{Error, Result};
use crate::evalkit::{fpr, rmse, rmse_deg, subtract_paths, SweepRecord};
use crate::geometry::wrap_degrees;
use crate::sage::{estimate, EstimationResult, EstimatorConfig, EstimatorKind, EvalCounters};
use crate::synth::{stream_key, synthesize, CirTensor, PathParams, SoundingConfig};

const PHASE_SEED: u64 = 1;
const NOISE_SEED: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialSeeds {
    pub phase: u64,
    pub noise: u64,
}

/// Seeds of trial `trial`; they depend only on (master seed, trial index).
pub fn trial_seeds(master: u64, trial: usize) -> TrialSeeds {
    TrialSeeds {
        phase: stream_key(master, &[trial as u64, PHASE_SEED]),
        noise: stream_key(master, &[trial as u64, NOISE_SEED]),
    }
}

/// An experiment with everything built once.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub spec: ExperimentSpec,
    pub cfg: SoundingConfig,
    pub est: EstimatorConfig,
    pub truth: Vec<PathParams>,
}

impl Prepared {
    pub fn new(spec: &ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        let cfg = spec.sounding_config()?;
        let est = spec.estimator_config()?;
        let truth = spec.true_paths(&cfg)?;
        Ok(Self { spec: spec.clone(), cfg, est, truth })
    }

    /// Measured tensor of one trial, with the spec in its metadata.
    pub fn synthesize(&self, trial: usize) -> Result<CirTensor> {
        let s = trial_seeds(self.spec.seed, trial);
        let mut t = synthesize(&self.truth, &self.cfg, &self.spec.phase_model(s.phase), &self.spec.noise_model(s.noise))?;
        t.meta.scenario = self.spec.scenario.name.clone();
        t.meta.config = Some(serde_json::to_value(&self.spec).map_err(|e| Error::Format(e.to_string()))?);
        Ok(t)
    }

    /// The strongest true path.
    pub fn reference_path(&self) -> Option<&PathParams> {
        strongest(&self.truth)
    }
}

fn strongest(paths: &[PathParams]) -> Option<&PathParams> {
    paths.iter().max_by(|a, b| a.gain.total_cmp(&b.gain))
}

/// Estimate errors of the strongest estimated path against the strongest true path.
pub fn path_errors(est: &PathParams, truth: &PathParams) -> [f64; 4] {
    [
        20.0 * (est.gain / truth.gain).log10(),
        (est.ref_delay - truth.ref_delay) * 1e9,
        wrap_degrees(est.doa.azimuth_deg() - truth.doa.azimuth_deg()),
        est.doa.elevation_deg() - truth.doa.elevation_deg(),
    ]
}

/// Result of one estimator on one tensor.
#[derive(Clone, Debug)]
pub struct TrialRun {
    pub result: EstimationResult,
    pub fpr_db: Option<f64>,
    /// Counters including the FPR M-step.
    pub counters: EvalCounters,
}

pub fn run_estimator(p: &Prepared, kind: EstimatorKind, tensor: &CirTensor) -> Result<TrialRun> {
    let result = estimate(kind, tensor, &p.cfg, &p.est)?;
    let mut counters = result.counters.clone();
    let mut fpr_db = None;
    if p.spec.compute_fpr {
        if let (Some(model), Some(truth)) = (kind.signal_model(p.est.wavefront), p.reference_path()) {
            let residual = subtract_paths(tensor, &result.path_params(), &p.cfg)?;
            let f = fpr(&residual, truth.gain, &p.cfg, &p.est, model)?;
            counters.merge(&f.counters);
            fpr_db = Some(f.fpr_db);
        }
    }
    Ok(TrialRun { result, fpr_db, counters })
}

fn record(label: &str, trial: usize, kind: EstimatorKind, run: &TrialRun, truth: Option<&PathParams>) -> SweepRecord {
    let found = strongest(&run.result.paths.iter().map(|q| q.params.clone()).collect::<Vec<_>>()).cloned();
    let errs = match (found, truth) {
        (Some(e), Some(t)) => Some(path_errors(&e, t)),
        _ => None,
    };
    SweepRecord {
        sweep_var: label.to_string(),
        trial,
        estimator: kind.name().to_string(),
        err_gain_db: errs.map(|e| e[0]),
        err_delay_ns: errs.map(|e| e[1]),
        err_az_deg: errs.map(|e| e[2]),
        err_el_deg: errs.map(|e| e[3]),
        fpr_db: run.fpr_db,
        likelihood_evals: run.counters.likelihood_evals,
        elements_touched: run.counters.elements_touched,
    }
}

/// All estimators of one trial, in the spec's estimator order.
pub fn run_trial(p: &Prepared, label: &str, trial: usize) -> Result<Vec<SweepRecord>> {
    let t = p.synthesize(trial)?;
    p.spec
        .estimators
        .iter()
        .map(|&k| Ok(record(label, trial, k, &run_estimator(p, k, &t)?, p.reference_path())))
        .collect()
}

/// One grid point of a sweep.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    /// The value for a single axis, `name=value;…` for a grid.
    pub label: String,
    pub values: Vec<(SweepVariable, f64)>,
    pub spec: ExperimentSpec,
}

fn fmt_value(v: f64) -> String {
    format!("{v}")
}

/// Cartesian product of the sweep axes, first axis outermost. No axes: one unlabelled point.
pub fn sweep_points(spec: &ExperimentSpec) -> Result<Vec<SweepPoint>> {
    let mut points = vec![SweepPoint { label: String::new(), values: Vec::new(), spec: spec.clone() }];
    for axis in &spec.sweep {
        let mut next = Vec::with_capacity(points.len() * axis.values.len());
        for p in &points {
            for &v in &axis.values {
                let mut values = p.values.clone();
                values.push((axis.variable, v));
                next.push(SweepPoint { label: String::new(), values, spec: p.spec.with_value(axis.variable, v)? });
            }
        }
        points = next;
    }
    for p in &mut points {
        p.label = match p.values.as_slice() {
            [] => String::new(),
            [(_, v)] => fmt_value(*v),
            vs => vs.iter().map(|(k, v)| format!("{}={}", k.name(), fmt_value(*v))).collect::<Vec<_>>().join(";"),
        };
    }
    Ok(points)
}

/// Per-trial rows ordered by point, trial and estimator. Trials run on the
/// rayon pool; each is seeded from its index alone.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRecord>> {
    let points = sweep_points(spec)?;
    let prepared: Vec<Prepared> = points.iter().map(|p| Prepared::new(&p.spec)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|i| (0..spec.trials).map(move |t| (i, t))).collect();
    let rows: Vec<Vec<SweepRecord>> =
        jobs.par_iter().map(|&(i, t)| run_trial(&prepared[i], &points[i].label, t)).collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Per point and estimator aggregates of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub sweep_var: String,
    pub estimator: String,
    pub trials: usize,
    /// Trials in which at least one path was found.
    pub found: usize,
    pub rmse_gain_db: Option<f64>,
    pub rmse_delay_ns: Option<f64>,
    pub rmse_az_deg: Option<f64>,
    pub rmse_el_deg: Option<f64>,
    /// Mean FPR in dB over trials.
    pub mean_fpr_db: Option<f64>,
    pub mean_likelihood_evals: f64,
    pub mean_elements_touched: f64,
}

/// Groups rows by (sweep_var, estimator) in first-appearance order.
pub fn summarize(records: &[SweepRecord]) -> Vec<SweepSummary> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in records {
        let k = (r.sweep_var.clone(), r.estimator.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(sv, e)| {
            let rows: Vec<&SweepRecord> = records.iter().filter(|r| r.sweep_var == sv && r.estimator == e).collect();
            let col = |f: fn(&SweepRecord) -> Option<f64>| rows.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
            let fprs = col(|r| r.fpr_db);
            let n = rows.len() as f64;
            SweepSummary {
                sweep_var: sv,
                estimator: e,
                trials: rows.len(),
                found: rows.iter().filter(|r| r.err_gain_db.is_some()).count(),
                rmse_gain_db: rmse(&col(|r| r.err_gain_db)).ok(),
                rmse_delay_ns: rmse(&col(|r| r.err_delay_ns)).ok(),
                rmse_az_deg: rmse_deg(&col(|r| r.err_az_deg)).ok(),
                rmse_el_deg: rmse(&col(|r| r.err_el_deg)).ok(),
                mean_fpr_db: (!fprs.is_empty()).then(|| fprs.iter().sum::<f64>() / fprs.len() as f64),
                mean_likelihood_evals: rows.iter().map(|r| r.likelihood_evals as f64).sum::<f64>() / n,
                mean_elements_touched: rows.iter().map(|r| r.elements_touched as f64).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Serializes rows with a header line.
pub fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    write_csv(rows, std::fs::File::create(path)?)
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    r.deserialize().map(|row| row.map_err(|e| Error::Format(e.to_string()))).collect()
}

/// One estimated path in result files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    #[serde(flatten)]
    pub path: PathSpec,
    pub gain: f64,
    pub likelihood_gain: f64,
    pub updated_cycle: usize,
}

/// JSON written by `estimate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub schema_version: u32,
    pub estimator: String,
    #[serde(default)]
    pub scenario: Option<String>,
    /// Tx–Rx distance used by the path-loss fit.
    #[serde(default)]
    pub distance_m: Option<f64>,
    #[serde(default)]
    pub frequency_hz: Option<f64>,
    pub paths: Vec<PathRecord>,
    #[serde(default)]
    pub likelihood_trace: Vec<f64>,
    #[serde(default)]
    pub counters: EvalCounters,
    #[serde(default)]
    pub converged: bool,
    #[serde(default)]
    pub cycles: usize,
    #[serde(default)]
    pub threshold: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ResultFile {
    pub fn new(r: &EstimationResult, scenario: Option<String>, distance_m: Option<f64>, frequency_hz: Option<f64>) -> Self {
        Self {
            schema_version: super::config::SCHEMA_VERSION,
            estimator: r.estimator.clone(),
            scenario,
            distance_m,
            frequency_hz,
            paths: r
                .paths
                .iter()
                .map(|p| PathRecord {
                    path: PathSpec::from_params(&p.params),
                    gain: p.params.gain,
                    likelihood_gain: p.likelihood_gain,
                    updated_cycle: p.updated_cycle,
                })
                .collect(),
            likelihood_trace: r.likelihood_trace.clone(),
            counters: r.counters.clone(),
            converged: r.converged,
            cycles: r.cycles,
            threshold: r.threshold,
            warnings: r.warnings.clone(),
        }
    }

    /// Paths with the linear gain restored exactly.
    pub fn path_params(&self) -> Result<Vec<PathParams>> {
        self.paths
            .iter()
            .map(|r| {
                let mut p = r.path.build()?;
                p.gain = r.gain;
                Ok(p)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::SweepAxis;

    fn small_spec() -> ExperimentSpec {
        let mut s = ExperimentSpec::reference();
        s.sounding.rx.n_az = 6;
        s.sounding.rx.n_el = 3;
        s.sounding.rx.el_start_deg = -10.0;
        s.sounding.kernel = crate::harness::config::KernelSpec::Vna { f1_ghz: 298.0, delta_f_mhz: 2.0, tones: 201 };
        s.noise.snr_db = Some(40.0);
        s.estimator.max_paths = 1;
        s
    }

    #[test]
    fn seeds_depend_on_master_and_trial_only() {
        assert_eq!(trial_seeds(7, 3), trial_seeds(7, 3));
        assert_ne!(trial_seeds(7, 3), trial_seeds(7, 4));
        assert_ne!(trial_seeds(7, 3), trial_seeds(8, 3));
        let s = trial_seeds(1, 0);
        assert_ne!(s.phase, s.noise);
    }

    #[test]
    fn grid_points_and_labels() {
        let mut s = ExperimentSpec::reference();
        s.sweep = vec![
            SweepAxis { variable: SweepVariable::Radius, values: vec![0.1, 0.2] },
            SweepAxis { variable: SweepVariable::HpbwDeg, values: vec![5.0, 10.0, 20.0, 30.0] },
        ];
        let p = sweep_points(&s).unwrap();
        assert_eq!(p.len(), 8);
        assert_eq!(p[0].label, "radius=0.1;hpbw_deg=5");
        assert_eq!(p[7].label, "radius=0.2;hpbw_deg=30");
        s.sweep.truncate(1);
        assert_eq!(sweep_points(&s).unwrap()[1].label, "0.2");
        s.sweep.clear();
        assert_eq!(sweep_points(&s).unwrap().len(), 1);
    }

    #[test]
    fn row_count_is_points_times_trials_times_estimators() {
        let mut s = small_spec();
        s.trials = 2;
        s.estimators = vec![EstimatorKind::DssOSage, EstimatorKind::NoiseElimination];
        s.sweep = vec![SweepAxis { variable: SweepVariable::SigmaPhi, values: vec![0.0, 1.0] }];
        let rows = run_sweep(&s).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        let order: Vec<(String, usize, String)> = rows.iter().map(|r| (r.sweep_var.clone(), r.trial, r.estimator.clone())).collect();
        assert_eq!(order[0], ("0".into(), 0, "dss-o-sage".into()));
        assert_eq!(order[1], ("0".into(), 0, "noise-elim".into()));
        assert_eq!(order[2], ("0".into(), 1, "dss-o-sage".into()));
        assert_eq!(order[4], ("1".into(), 0, "dss-o-sage".into()));
        assert!(rows.iter().filter(|r| r.estimator == "noise-elim").all(|r| r.fpr_db.is_none()));
        assert!(rows.iter().filter(|r| r.estimator == "dss-o-sage").all(|r| r.fpr_db.unwrap() < -20.0));
    }

    #[test]
    fn trials_are_order_independent_and_deterministic() {
        let mut s = small_spec();
        s.trials = 3;
        s.estimators = vec![EstimatorKind::DssOSage];
        let p = Prepared::new(&s).unwrap();
        let forward: Vec<_> = (0..3).map(|t| run_trial(&p, "", t).unwrap()).collect();
        let backward: Vec<_> = (0..3).rev().map(|t| run_trial(&p, "", t).unwrap()).collect();
        for t in 0..3 {
            assert_eq!(forward[t], backward[2 - t]);
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&run_sweep(&s).unwrap(), &mut a).unwrap();
        write_csv(&run_sweep(&s).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "sweep_var,trial,estimator,err_gain_db,err_delay_ns,err_az_deg,err_el_deg,fpr_db,likelihood_evals,elements_touched"
        );
    }

    #[test]
    fn summary_aggregates_rows() {
        let row = |sv: &str, e: &str, az: Option<f64>, fpr: Option<f64>| SweepRecord {
            sweep_var: sv.into(),
            trial: 0,
            estimator: e.into(),
            err_gain_db: az.map(|_| 0.0),
            err_delay_ns: az.map(|_| 0.0),
            err_az_deg: az,
            err_el_deg: az.map(|_| 0.0),
            fpr_db: fpr,
            likelihood_evals: 10,
            elements_touched: 100,
        };
        let rows = vec![
            row("0", "a", Some(3.0), Some(-30.0)),
            row("0", "a", Some(-4.0), Some(-20.0)),
            row("0", "b", None, None),
            row("1", "a", Some(359.0), None),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 3);
        assert!((s[0].rmse_az_deg.unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[0].mean_fpr_db, Some(-25.0));
        assert_eq!((s[1].found, s[1].rmse_az_deg), (0, None));
        assert!((s[2].rmse_az_deg.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn result_file_round_trip() {
        let s = small_spec();
        let p = Prepared::new(&s).unwrap();
        let t = p.synthesize(0).unwrap();
        let r = estimate(EstimatorKind::DssOSage, &t, &p.cfg, &p.est).unwrap();
        let f = ResultFile::new(&r, Some("x".into()), Some(10.0), p.cfg.center_frequency());
        let back: ResultFile = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back, f);
        let params = back.path_params().unwrap();
        assert_eq!(params[0].gain, r.paths[0].params.gain);
        assert!((params[0].ref_delay - r.paths[0].params.ref_delay).abs() < 1e-21);
    }
}
