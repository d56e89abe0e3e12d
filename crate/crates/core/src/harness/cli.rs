//! Command-line interface.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::config::ExperimentSpec;
use super::experiment::{write_csv_file, Prepared, ResultFile};
use super::{bench, characterize, crlb, load_results, run_sweep, summarize};
use crate::error::{Error, Result};
use crate::sage::{estimate, EstimatorKind, Wavefront};
use crate::synth::{load_tensor, save_tensor};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dss-sage", version, about = "Direction-scan sounding synthesis and multipath estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a CIR tensor (tensor.cirt and its JSON sidecar).
    Synth {
        #[command(flatten)]
        common: Common,
        /// Trial index whose seeds are used.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Estimate paths in a CIRT file.
    Estimate {
        tensor: PathBuf,
        #[command(flatten)]
        common: Common,
        /// dss-o-sage, pwf-sage, swf-sage or noise-elim.
        #[arg(long, default_value = "dss-o-sage")]
        estimator: EstimatorKind,
        /// Wavefront of the DSS-o-SAGE model: swf (distance search) or ffa (plane waves).
        #[arg(long)]
        wavefront: Option<Wavefront>,
    },
    /// Monte Carlo sweep: sweep.csv with one row per trial and estimator, summary.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Estimators to run, overriding the configuration; repeatable.
        #[arg(long)]
        estimator: Vec<EstimatorKind>,
        /// Wavefront of the DSS-o-SAGE model: swf (distance search) or ffa (plane waves).
        #[arg(long)]
        wavefront: Option<Wavefront>,
        /// Trials per sweep point, overriding the configuration.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Cramér-Rao bounds of the scenario (crlb.json).
    Crlb {
        #[command(flatten)]
        common: Common,
    },
    /// Path loss, delay and angular spreads of estimation results (characterize.csv, ci_fit.json).
    Characterize {
        results: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Evaluation counts and wall time of one M-step per estimator (bench.csv).
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        estimator: Vec<EstimatorKind>,
        /// Wavefront of the DSS-o-SAGE model: swf (distance search) or ffa (plane waves).
        #[arg(long)]
        wavefront: Option<Wavefront>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) => EXIT_CONFIG,
        Error::Format(_) => EXIT_FORMAT,
        Error::Numerical(_) | Error::Io(_) => EXIT_FAILURE,
    }
}

fn load_spec(c: &Common) -> Result<ExperimentSpec> {
    let path = c.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut s = ExperimentSpec::load(path)?;
    if let Some(seed) = c.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn out_dir(p: &Path) -> Result<&Path> {
    fs::create_dir_all(p)?;
    Ok(p)
}

fn write_json<T: serde::Serialize>(v: &T, path: &Path) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, s + "\n")?;
    Ok(())
}

fn apply_overrides(s: &mut ExperimentSpec, estimators: &[EstimatorKind], wavefront: Option<Wavefront>) {
    if !estimators.is_empty() {
        s.estimators = estimators.to_vec();
    }
    if let Some(w) = wavefront {
        s.estimator.wavefront = w;
    }
}

fn synth_cmd(common: &Common, trial: usize) -> Result<()> {
    let p = Prepared::new(&load_spec(common)?)?;
    let t = p.synthesize(trial)?;
    let path = out_dir(&common.out)?.join("tensor.cirt");
    save_tensor(&t, &path)?;
    let (a, b, c) = t.shape();
    println!("wrote {} ({a}×{b}×{c})", path.display());
    Ok(())
}

fn estimate_cmd(tensor: &Path, common: &Common, kind: EstimatorKind, wavefront: Option<Wavefront>) -> Result<()> {
    let t = load_tensor(tensor)?;
    let mut spec = match (&common.config, &t.meta.config) {
        (Some(_), _) => load_spec(common)?,
        (None, Some(v)) => {
            let s: ExperimentSpec =
                serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("sidecar config: {e}")))?;
            s.validate()?;
            s
        }
        (None, None) => return Err(Error::Config("no --config and the tensor has no embedded configuration".into())),
    };
    apply_overrides(&mut spec, &[], wavefront);
    let cfg = spec.sounding_config()?;
    if !t.matches(&cfg) {
        return Err(Error::Format(format!(
            "tensor shape {:?} does not match the configuration ({}, {}, {})",
            t.shape(),
            cfg.n_tx(),
            cfg.n_rx(),
            cfg.samples()
        )));
    }
    let est = spec.estimator_config()?;
    let r = estimate(kind, &t, &cfg, &est)?;
    let distance = spec.scenario.paths.is_empty().then_some(spec.scenario.distance_m);
    let file = ResultFile::new(&r, spec.scenario.name.clone().or(t.meta.scenario.clone()), distance, cfg.center_frequency());
    let stem = tensor.file_stem().map_or("result".into(), |s| s.to_string_lossy().into_owned());
    let path = out_dir(&common.out)?.join(format!("{stem}.{}.json", kind.name()));
    write_json(&file, &path)?;
    println!("{}: {} paths, {} likelihood evaluations -> {}", kind, r.paths.len(), r.counters.likelihood_evals, path.display());
    Ok(())
}

fn sweep_cmd(common: &Common, estimators: &[EstimatorKind], wavefront: Option<Wavefront>, trials: Option<usize>) -> Result<()> {
    let mut spec = load_spec(common)?;
    apply_overrides(&mut spec, estimators, wavefront);
    if let Some(n) = trials {
        spec.trials = n;
    }
    spec.validate()?;
    let rows = run_sweep(&spec)?;
    let dir = out_dir(&common.out)?;
    write_csv_file(&rows, &dir.join("sweep.csv"))?;
    let summary = summarize(&rows);
    write_csv_file(&summary, &dir.join("summary.csv"))?;
    for s in &summary {
        println!(
            "{:>16} {:<11} rmse az {:>8} el {:>8} deg, mean FPR {:>8} dB",
            s.sweep_var,
            s.estimator,
            fmt_opt(s.rmse_az_deg),
            fmt_opt(s.rmse_el_deg),
            fmt_opt(s.mean_fpr_db)
        );
    }
    println!("wrote {} rows to {}", rows.len(), dir.join("sweep.csv").display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.4}"))
}

fn crlb_cmd(common: &Common) -> Result<()> {
    let out = crlb(&load_spec(common)?)?;
    let path = out_dir(&common.out)?.join("crlb.json");
    write_json(&out, &path)?;
    if out.report.ill_conditioned {
        eprintln!("warning: FIM is ill-conditioned (condition number {:e}); bounds withheld", out.report.condition_number);
    }
    for b in &out.std_bounds {
        println!("{:<12} {:>12.6e} {}", b.parameter, b.std, b.unit);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn characterize_cmd(results: &Path, out: &Path) -> Result<()> {
    let c = characterize(&load_results(results)?)?;
    let dir = out_dir(out)?;
    write_csv_file(&c.rows, &dir.join("characterize.csv"))?;
    write_json(&c.ci_fit, &dir.join("ci_fit.json"))?;
    match c.ci_fit {
        Some(f) => println!("{} results, PLE {:.4}, shadowing {:.4} dB", c.rows.len(), f.ple, f.sigma_db),
        None => println!("{} results, no path-loss fit (needs two distances)", c.rows.len()),
    }
    Ok(())
}

fn bench_cmd(common: &Common, estimators: &[EstimatorKind], wavefront: Option<Wavefront>) -> Result<()> {
    let mut spec = load_spec(common)?;
    apply_overrides(&mut spec, estimators, wavefront);
    spec.validate()?;
    let rows = bench(&spec)?;
    let path = out_dir(&common.out)?.join("bench.csv");
    write_csv_file(&rows, &path)?;
    for r in &rows {
        println!(
            "{:<11} {:<6} evals {:>12} elements {:>16} ratio {:.2e} time {:.3e} s{}",
            r.estimator,
            r.scope,
            r.likelihood_evals,
            r.elements_touched,
            r.element_ratio,
            r.wall_time_s,
            if r.extrapolated { " (extrapolated)" } else { "" }
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth { common, trial } => synth_cmd(common, *trial),
        Command::Estimate { tensor, common, estimator, wavefront } => estimate_cmd(tensor, common, *estimator, *wavefront),
        Command::Sweep { common, estimator, wavefront, trials } => sweep_cmd(common, estimator, *wavefront, *trials),
        Command::Crlb { common } => crlb_cmd(common),
        Command::Characterize { results, out } => characterize_cmd(results, out),
        Command::Bench { common, estimator, wavefront } => bench_cmd(common, estimator, *wavefront),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

