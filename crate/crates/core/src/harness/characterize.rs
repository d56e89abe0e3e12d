//! Channel statistics over a directory of estimation results.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::ResultFile;
use crate::error::{Error, Result};
use crate::evalkit::{asa, ci_fit, delay_spread, esa, path_loss_db, CiFit};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterRow {
    pub file: String,
    pub scenario: Option<String>,
    pub estimator: String,
    pub distance_m: Option<f64>,
    pub n_paths: usize,
    pub path_loss_db: Option<f64>,
    pub delay_spread_ns: Option<f64>,
    pub asa_deg: Option<f64>,
    pub esa_deg: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Characterization {
    pub rows: Vec<CharacterRow>,
    /// Close-in fit over rows with a distance and a path loss; absent with fewer than two distances.
    pub ci_fit: Option<CiFit>,
    pub frequency_hz: Option<f64>,
}

/// Statistics of one result.
pub fn characterize_result(name: &str, r: &ResultFile) -> Result<CharacterRow> {
    let paths = r.path_params()?;
    Ok(CharacterRow {
        file: name.to_string(),
        scenario: r.scenario.clone(),
        estimator: r.estimator.clone(),
        distance_m: r.distance_m,
        n_paths: paths.len(),
        path_loss_db: path_loss_db(&paths.iter().map(|p| p.gain).collect::<Vec<_>>()).ok(),
        delay_spread_ns: delay_spread(&paths).ok().map(|s| s * 1e9),
        asa_deg: asa(&paths).ok(),
        esa_deg: esa(&paths).ok(),
    })
}

/// Rows in the given order plus the path-loss fit at 1 m reference distance.
pub fn characterize(results: &[(String, ResultFile)]) -> Result<Characterization> {
    if results.is_empty() {
        return Err(Error::InvalidInput("no estimation results to characterize".into()));
    }
    let rows: Vec<CharacterRow> = results.iter().map(|(n, r)| characterize_result(n, r)).collect::<Result<_>>()?;
    let frequency_hz = results.iter().find_map(|(_, r)| r.frequency_hz);
    let points: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r.distance_m?, r.path_loss_db?))).collect();
    let ci = match frequency_hz {
        Some(f) => ci_fit(&points, f, 1.0).ok(),
        None => None,
    };
    Ok(Characterization { rows, ci_fit: ci, frequency_hz })
}

/// Reads every `*.json` in `dir` that parses as a result file, sorted by name.
pub fn load_results(dir: &Path) -> Result<Vec<(String, ResultFile)>> {
    let mut names: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    names.sort();
    let mut out = Vec::new();
    for p in names {
        let Ok(r) = serde_json::from_slice::<ResultFile>(&fs::read(&p)?) else { continue };
        out.push((p.file_name().unwrap().to_string_lossy().into_owned(), r));
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("no estimation results in {}", dir.display())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalkit::free_space_path_loss_db;
    use crate::harness::config::PathSpec;
    use crate::harness::experiment::PathRecord;
    use crate::sage::EvalCounters;

    fn result(d: Option<f64>, paths: &[(f64, f64, f64, f64)]) -> ResultFile {
        ResultFile {
            schema_version: 1,
            estimator: "dss-o-sage".into(),
            scenario: None,
            distance_m: d,
            frequency_hz: Some(300e9),
            paths: paths
                .iter()
                .map(|&(g, tau_ns, az, el)| PathRecord {
                    path: PathSpec { gain_db: 20.0 * g.log10(), delay_ns: tau_ns, doa_az_deg: az, doa_el_deg: el, dod_az_deg: 0.0, dod_el_deg: 0.0, d_rx_m: None, d_tx_m: None },
                    gain: g,
                    likelihood_gain: 0.0,
                    updated_cycle: 0,
                })
                .collect(),
            likelihood_trace: vec![],
            counters: EvalCounters::default(),
            converged: true,
            cycles: 0,
            threshold: 0.0,
            warnings: vec![],
        }
    }

    #[test]
    fn free_space_set_gives_ple_two() {
        let set: Vec<(String, ResultFile)> = [3.0, 7.0, 15.0, 40.0]
            .iter()
            .map(|&d| {
                let g = 10f64.powf(-free_space_path_loss_db(d, 300e9) / 20.0);
                (format!("{d}.json"), result(Some(d), &[(g, d / 0.299792458, 10.0, 0.0)]))
            })
            .collect();
        let c = characterize(&set).unwrap();
        let fit = c.ci_fit.unwrap();
        assert!((fit.ple - 2.0).abs() < 1e-9 && fit.sigma_db < 1e-9);
        for r in &c.rows {
            assert_eq!((r.delay_spread_ns, r.asa_deg, r.esa_deg), (Some(0.0), Some(0.0), Some(0.0)));
        }
    }

    #[test]
    fn rows_match_evalkit() {
        let paths = [(1e-5, 30.0, 350.0, 2.0), (5e-6, 42.0, 20.0, -4.0), (2e-6, 55.0, 100.0, 8.0)];
        let r = result(Some(12.0), &paths);
        let row = characterize_result("m", &r).unwrap();
        let pp = r.path_params().unwrap();
        assert_eq!(row.path_loss_db, Some(path_loss_db(&[1e-5, 5e-6, 2e-6]).unwrap()));
        assert_eq!(row.delay_spread_ns, Some(delay_spread(&pp).unwrap() * 1e9));
        assert_eq!(row.asa_deg, Some(asa(&pp).unwrap()));
        assert_eq!(row.esa_deg, Some(esa(&pp).unwrap()));
        assert!(characterize(&[("m".into(), r)]).unwrap().ci_fit.is_none());
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(characterize(&[]).is_err());
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("other.json"), "{\"a\": 1}").unwrap();
        assert!(load_results(dir.path()).is_err());
        fs::write(dir.path().join("r.json"), serde_json::to_string(&result(None, &[])).unwrap()).unwrap();
        let loaded = load_results(dir.path()).unwrap();
        assert_eq!(loaded.len(), 1);
        let c = characterize(&loaded).unwrap();
        assert_eq!((c.rows[0].n_paths, c.rows[0].path_loss_db), (0, None));
    }
}
