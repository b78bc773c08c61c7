use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{Split, TransferRow};
use super::sweep::SweepCurve;
use super::EvalError;

/// Provenance of every number in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub checkpoint: String,
    pub dataset: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitError {
    pub dataset: String,
    pub split: Split,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub name: String,
    pub max_deviation: f64,
    /// `None` for quantities that are reported but not asserted.
    pub tolerance: Option<f64>,
}

impl TheoremCheck {
    pub fn passed(&self) -> bool {
        self.tolerance.is_none_or(|t| self.max_deviation <= t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub errors: Vec<SplitError>,
    pub sweeps: Vec<SweepCurve>,
    pub checks: Vec<TheoremCheck>,
    pub transfer: Vec<TransferRow>,
}

impl EvalReport {
    pub fn new(meta: ReportMeta) -> Self {
        Self {
            meta,
            errors: Vec::new(),
            sweeps: Vec::new(),
            checks: Vec::new(),
            transfer: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    /// The whole report.
    Json,
    /// Sweep points only, one row per `(C, trial)`.
    Csv,
}

impl FromStr for ReportFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(EvalError::Config(format!("unknown report format `{other}` (expected json|csv)"))),
        }
    }
}

const CSV_HEADER: [&str; 7] = ["checkpoint", "dataset", "seed", "mode", "range", "trial", "mean_error"];

fn out_err(path: &Path, detail: impl ToString) -> EvalError {
    EvalError::Output {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

/// 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn emit_report(report: &EvalReport, path: &Path, format: ReportFormat) -> Result<(), EvalError> {
    match format {
        ReportFormat::Json => {
            let text = serde_json::to_string_pretty(report).map_err(|e| out_err(path, e))?;
            fs::write(path, text).map_err(|e| out_err(path, e))
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| out_err(path, e))?;
            w.write_record(CSV_HEADER).map_err(|e| out_err(path, e))?;
            let m = &report.meta;
            for curve in &report.sweeps {
                let mode = serde_json::to_value(curve.spec.mode).map_err(|e| out_err(path, e))?;
                let mode = mode.as_str().unwrap_or_default().to_string();
                for p in &curve.points {
                    w.write_record([
                        m.checkpoint.clone(),
                        m.dataset.clone(),
                        m.seed.to_string(),
                        mode.clone(),
                        num(p.range),
                        p.trial.to_string(),
                        num(p.mean_error),
                    ])
                    .map_err(|e| out_err(path, e))?;
                }
            }
            w.flush().map_err(|e| out_err(path, e))
        }
    }
}

pub fn read_report(path: &Path) -> Result<EvalReport, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| out_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| EvalError::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{SweepPoint, SweepSpec};
    use crate::geometry::TransformMode;

    fn report(trials: usize) -> EvalReport {
        let spec = SweepSpec::standard(TransformMode::Rotate, trials, 1);
        let points = spec
            .ranges
            .iter()
            .flat_map(|&c| (0..trials).map(move |t| SweepPoint { range: c, trial: t, mean_error: 0.1 + c / 3.0 + t as f64 * 1e-17 }))
            .collect();
        let mut r = EvalReport::new(ReportMeta {
            checkpoint: "ck".into(),
            dataset: "ds".into(),
            seed: 4,
        });
        r.errors.push(SplitError { dataset: "ds".into(), split: Split::Test, error: 1.0 / 3.0 });
        r.checks.push(TheoremCheck { name: "invariance".into(), max_deviation: 3.1e-15, tolerance: Some(1e-10) });
        r.sweeps.push(SweepCurve { spec, split: Split::Test, points });
        r.transfer.push(TransferRow { split: Split::Test, source_nodes: 256, source_error: 0.1, target_nodes: 961, target_error: 0.2 });
        r
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let r = report(2);
        emit_report(&r, &path, ReportFormat::Json).unwrap();
        assert_eq!(read_report(&path).unwrap(), r);
    }

    #[test]
    fn csv_rows_and_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let r = report(3);
        emit_report(&r, &path, ReportFormat::Csv).unwrap();
        let mut rd = csv::Reader::from_path(&path).unwrap();
        let rows: Vec<csv::StringRecord> = rd.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), 5 * 3);
        for (row, p) in rows.iter().zip(&r.sweeps[0].points) {
            assert_eq!(row[6].parse::<f64>().unwrap(), p.mean_error);
            assert_eq!(&row[3], "rotate");
        }
    }

    #[test]
    fn empty_sweep_gives_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut r = report(1);
        r.sweeps.clear();
        emit_report(&r, &path, ReportFormat::Csv).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("checkpoint,"));
    }

    #[test]
    fn unwritable_path() {
        let r = report(1);
        let path = Path::new("/nonexistent-dir/r.json");
        assert!(matches!(emit_report(&r, path, ReportFormat::Json), Err(EvalError::Output { .. })));
    }
}
