//! Result files: per-trial and summary CSV, timings, manifest, histograms.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, AcssError, Result};

use super::{ExperimentConfig, ExperimentReport, Method};

/// 17 significant digits: round-trips every finite double.
fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map_or_else(String::new, float)
}

fn opt_int(v: Option<usize>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| AcssError::Internal(format!("csv writer: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| AcssError::Internal(format!("csv writer: {e}")))
}

pub fn trials_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let header = [
        "trial_id",
        "method",
        "signal",
        "sigma",
        "pvalue",
        "ssosp_ok",
        "acceptance_rate",
        "proposal_size",
        "chain_length",
        "t_obs",
        "warning",
    ];
    csv_bytes(
        &header,
        report.trials.iter().map(|t| {
            vec![
                t.trial_id.to_string(),
                t.method.name().to_string(),
                float(t.signal),
                float(t.sigma),
                float(t.pvalue),
                t.ssosp_ok.to_string(),
                opt_float(t.acceptance_rate),
                opt_int(t.proposal_size),
                opt_int(t.chain_length),
                float(t.t_obs),
                t.warning.clone().unwrap_or_default(),
            ]
        }),
    )
}

pub fn summary_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let header = [
        "method",
        "signal",
        "sigma",
        "n_trials",
        "rejections",
        "rejection_rate",
        "std_error",
        "degenerate",
        "mean_acceptance_rate",
    ];
    csv_bytes(
        &header,
        report.summary.iter().map(|s| {
            vec![
                s.method.name().to_string(),
                float(s.signal),
                float(s.sigma),
                s.n_trials.to_string(),
                s.rejections.to_string(),
                float(s.rejection_rate),
                float(s.std_error),
                s.degenerate.to_string(),
                opt_float(s.mean_acceptance_rate),
            ]
        }),
    )
}

fn timings_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    csv_bytes(
        &["trial_id", "method", "signal", "sigma", "wall_time_ms"],
        report.trials.iter().map(|t| {
            vec![
                t.trial_id.to_string(),
                t.method.name().to_string(),
                float(t.signal),
                float(t.sigma),
                float(t.wall_time_ms),
            ]
        }),
    )
}

fn copy_statistics_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    csv_bytes(
        &["trial_id", "method", "signal", "sigma", "copy", "statistic"],
        report.trials.iter().flat_map(|t| {
            t.copy_statistics.iter().enumerate().map(move |(m, v)| {
                vec![
                    t.trial_id.to_string(),
                    t.method.name().to_string(),
                    float(t.signal),
                    float(t.sigma),
                    (m + 1).to_string(),
                    float(*v),
                ]
            })
        }),
    )
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestCell {
    pub signal: f64,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    /// `complete`, or `partial` when a file could not be written.
    pub status: String,
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub master_seed: u64,
    pub cells: Vec<ManifestCell>,
    /// File name and SHA-256 of each file written.
    pub files: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Write `trials.csv`, `summary.csv`, `timings.csv` and `manifest.json` (plus
/// `copy_statistics.csv` when requested). If a write fails the manifest is
/// still attempted with status `partial`.
pub fn write_outputs(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let config_json = serde_json::to_string(&report.config).expect("config serializes");
    let mut manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        status: "complete".into(),
        config: report.config.clone(),
        config_sha256: sha256_hex(config_json.as_bytes()),
        master_seed: report.config.seed,
        cells: report.cells.iter().map(|c| ManifestCell { signal: c.signal, sigma: c.sigma, seed: c.seed }).collect(),
        files: Vec::new(),
        error: None,
    };
    let mut jobs: Vec<(&str, fn(&ExperimentReport) -> Result<Vec<u8>>)> =
        vec![("trials.csv", trials_csv), ("summary.csv", summary_csv), ("timings.csv", timings_csv)];
    if report.config.settings.debug_copy_statistics {
        jobs.push(("copy_statistics.csv", copy_statistics_csv));
    }
    let mut failure = None;
    for (name, make) in jobs {
        match make(report).and_then(|bytes| fs::write(dir.join(name), &bytes).map(|_| bytes).map_err(AcssError::from)) {
            Ok(bytes) => manifest.files.push((name.to_string(), sha256_hex(&bytes))),
            Err(e) => {
                manifest.status = "partial".into();
                manifest.error = Some(format!("{name}: {e}"));
                failure = Some(e);
                break;
            }
        }
    }
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(dir.join("manifest.json"), text)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Restrict the histogram to matching rows; `None` matches everything.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HistogramFilter {
    pub method: Option<Method>,
    pub signal: Option<f64>,
    pub sigma: Option<f64>,
}

/// Counts of the `pvalue` column over `bins` equal bins `(k/b, (k+1)/b]`.
pub fn histogram(csv_text: &str, bins: usize, filter: &HistogramFilter) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(invalid("need at least one bin"));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv_text.as_bytes());
    let parse_err = |line: usize, msg: String| AcssError::Parse { line, msg };
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let p_col = col("pvalue").ok_or_else(|| parse_err(1, "missing pvalue column".into()))?;
    let (m_col, sig_col, s_col) = (col("method"), col("signal"), col("sigma"));
    let mut counts = vec![0usize; bins];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |c: Option<usize>, name: &str| {
            c.and_then(|c| rec.get(c)).ok_or_else(|| parse_err(line, format!("missing {name} field")))
        };
        let number = |c: Option<usize>, name: &str| {
            field(c, name)?.parse::<f64>().map_err(|e| parse_err(line, format!("bad {name}: {e}")))
        };
        if let Some(m) = filter.method {
            if field(m_col, "method")? != m.name() {
                continue;
            }
        }
        if let Some(v) = filter.signal {
            if number(sig_col, "signal")? != v {
                continue;
            }
        }
        if let Some(v) = filter.sigma {
            if number(s_col, "sigma")? != v {
                continue;
            }
        }
        let p = number(Some(p_col), "pvalue")?;
        if !(p > 0.0 && p <= 1.0) {
            return Err(parse_err(line, format!("p-value {p} outside (0, 1]")));
        }
        let k = ((p * bins as f64).ceil() as usize).clamp(1, bins) - 1;
        counts[k] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin { lo: k as f64 / bins as f64, hi: (k + 1) as f64 / bins as f64, count })
        .collect())
}

pub fn histogram_csv(bins: &[HistogramBin]) -> String {
    let rows = bins.iter().map(|b| vec![float(b.lo), float(b.hi), b.count.to_string()]);
    String::from_utf8(csv_bytes(&["bin_lo", "bin_hi", "count"], rows).expect("in-memory csv")).expect("utf-8")
}

/// Read a per-trial CSV and return histogram CSV text.
pub fn emit_histogram_data(per_trial_csv: &Path, bins: usize, filter: &HistogramFilter) -> Result<String> {
    let text = fs::read_to_string(per_trial_csv)?;
    Ok(histogram_csv(&histogram(&text, bins, filter)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn pvalue_csv(ps: &[f64]) -> String {
        let mut s = String::from("trial_id,method,pvalue\n");
        for (i, p) in ps.iter().enumerate() {
            s.push_str(&format!("{i},oracle,{p}\n"));
        }
        s
    }

    #[test]
    fn uniform_pvalues_fill_bins_evenly() {
        let mut rng = seeded(6);
        let n = 20_000;
        let ps: Vec<f64> = (0..n).map(|_| 1.0 - rng.random::<f64>()).collect();
        let h = histogram(&pvalue_csv(&ps), 10, &HistogramFilter::default()).unwrap();
        let sd = (n as f64 * 0.1 * 0.9).sqrt();
        for b in &h {
            assert!((b.count as f64 - n as f64 / 10.0).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn ones_land_in_the_last_bin() {
        let h = histogram(&pvalue_csv(&[1.0; 7]), 5, &HistogramFilter::default()).unwrap();
        assert_eq!(h.iter().map(|b| b.count).collect::<Vec<_>>(), vec![0, 0, 0, 0, 7]);
        let edge = histogram(&pvalue_csv(&[0.2]), 5, &HistogramFilter::default()).unwrap();
        assert_eq!(edge[0].count, 1);
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let text = "trial_id,method,pvalue\n0,oracle,0.5\n1,oracle,zero\n";
        match histogram(text, 4, &HistogramFilter::default()) {
            Err(AcssError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(histogram("a,b\n1,2\n", 4, &HistogramFilter::default()), Err(AcssError::Parse { .. })));
    }

    #[test]
    fn filters_select_rows() {
        let text = "method,pvalue\noracle,0.1\nreg_acss,0.9\n";
        let f = HistogramFilter { method: Some(Method::RegAcss), ..Default::default() };
        let h = histogram(text, 2, &f).unwrap();
        assert_eq!((h[0].count, h[1].count), (0, 1));
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 123456.789] {
            assert_eq!(float(v).parse::<f64>().unwrap(), v);
        }
    }
}
