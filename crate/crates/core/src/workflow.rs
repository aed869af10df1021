//! Dataset files, analysis configuration and the estimate workflow.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, config_hash, AnalysisPlan, Estimator};
use crate::contrasts::{ContrastSpec, OutcomeVector};
use crate::error::{Error, Result};
use crate::estimators::Estimand;
use crate::pairs::{ObservedDataset, UnitRecord};
use crate::variance::{confidence_interval, Method, MissingResidualRule};

fn default_id() -> String {
    "id".into()
}

fn default_treatment() -> String {
    "a".into()
}

fn default_level() -> f64 {
    0.95
}

fn default_methods() -> Vec<Method> {
    vec![Method::Ctw]
}

/// Analysis configuration read from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub contrast: ContrastSpec,
    /// Outcome columns in priority order; defaults to `y1, y2, …` from the header.
    #[serde(default)]
    pub outcomes: Option<Vec<String>>,
    /// Covariate columns; defaults to `x1, x2, …` from the header.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    #[serde(default = "default_id")]
    pub id: String,
    #[serde(default = "default_treatment")]
    pub treatment: String,
    pub estimators: Vec<Estimator>,
    /// CTW is always reported; other methods are added as baselines.
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub missing_residual_rule: MissingResidualRule,
    /// Unused by the built-in contrasts, which are deterministic; recorded for provenance.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl AnalysisConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let config: AnalysisConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.contrast.validate()?;
        if self.estimators.is_empty() {
            return Err(Error::Config("at least one estimator is required".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("confidence level {} is outside (0, 1)", self.level)));
        }
        for &e in &self.estimators {
            let averaged = match e {
                Estimator::Family(f) => f.is_averaged(),
                Estimator::Selected(_) => true,
            };
            if averaged && self.methods.contains(&Method::Cr) {
                return Err(Error::MethodMismatch { method: Method::Cr.name().into(), family: e.name() });
            }
        }
        Ok(())
    }

    /// CTW first, then the requested baselines in order.
    pub fn methods(&self) -> Vec<Method> {
        let mut out = vec![Method::Ctw];
        out.extend(self.methods.iter().copied().filter(|&m| m != Method::Ctw));
        out.dedup();
        out
    }
}

fn numbered(header: &csv::StringRecord, prefix: char) -> Vec<String> {
    let mut cols: Vec<(usize, String)> = header
        .iter()
        .filter_map(|h| {
            let rest = h.strip_prefix(prefix)?;
            let k: usize = rest.parse().ok()?;
            (!rest.starts_with('0') && k > 0).then(|| (k, h.to_string()))
        })
        .collect();
    cols.sort();
    cols.into_iter().map(|(_, h)| h).collect()
}

fn column(header: &csv::StringRecord, name: &str) -> Result<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| Error::Input(format!("unknown column '{name}'")))
}

/// Reads a dataset CSV. Cells must be present and numeric; errors name the
/// data row (1-based, excluding the header) and column.
pub fn read_dataset(path: &Path, config: &AnalysisConfig) -> Result<ObservedDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let header = reader.headers().map_err(|e| Error::Input(format!("{}: {e}", path.display())))?.clone();
    let outcomes = config.outcomes.clone().unwrap_or_else(|| numbered(&header, 'y'));
    let covariates = config.covariates.clone().unwrap_or_else(|| numbered(&header, 'x'));
    if outcomes.is_empty() {
        return Err(Error::Input("no outcome columns (expected y1, y2, …)".into()));
    }
    let id_col = column(&header, &config.id)?;
    let a_col = column(&header, &config.treatment)?;
    let y_cols = outcomes.iter().map(|c| column(&header, c)).collect::<Result<Vec<_>>>()?;
    let x_cols = covariates.iter().map(|c| column(&header, c)).collect::<Result<Vec<_>>>()?;

    let mut units = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| Error::Input(format!("row {row}: {e}")))?;
        let cell = |c: usize| -> Result<&str> {
            match record.get(c) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(Error::Input(format!("row {row}, column '{}': missing value", &header[c]))),
            }
        };
        let number = |c: usize| -> Result<f64> {
            let v = cell(c)?;
            v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
                Error::Input(format!("row {row}, column '{}': '{v}' is not a finite number", &header[c]))
            })
        };
        let treatment = match cell(a_col)? {
            "0" => 0,
            "1" => 1,
            v => return Err(Error::Input(format!("row {row}, column '{}': '{v}' is not 0 or 1", &header[a_col]))),
        };
        units.push(UnitRecord {
            id: cell(id_col)?.to_string(),
            treatment,
            outcome: OutcomeVector::new(y_cols.iter().map(|&c| number(c)).collect::<Result<_>>()?)?,
            covariates: x_cols.iter().map(|&c| number(c)).collect::<Result<_>>()?,
        });
    }
    ObservedDataset::new(units)?.with_covariate_names(covariates)
}

/// Writes a dataset with the canonical `id, a, y1.., x1..` header.
/// Floats use the shortest representation that parses back exactly.
pub fn write_dataset(ds: &ObservedDataset, path: &Path) -> Result<()> {
    let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header = vec!["id".to_string(), "a".to_string()];
    header.extend((1..=ds.q()).map(|k| format!("y{k}")));
    header.extend((1..=ds.dx()).map(|k| format!("x{k}")));
    w.write_record(&header).map_err(io)?;
    for i in 0..ds.n() {
        let mut row = vec![ds.id(i).to_string(), ds.treatment(i).to_string()];
        row.extend(ds.outcome(i).iter().map(|v| v.to_string()));
        row.extend(ds.covariates(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// One line of the estimates table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub estimand: String,
    pub estimator: String,
    pub method: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FittedSummary {
    pub estimator: String,
    pub estimand: String,
    pub fitted: String,
    pub clipped: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub config_hash: String,
    pub config: AnalysisConfig,
    pub n: usize,
    pub n1: usize,
    pub n0: usize,
    pub rows: Vec<EstimateRow>,
    pub fitted: Vec<FittedSummary>,
}

/// Runs every configured estimator; any estimator or variance failure is an error.
pub fn run_estimates(ds: &ObservedDataset, config: &AnalysisConfig) -> Result<EstimateReport> {
    config.validate()?;
    let methods = config.methods();
    let plan = AnalysisPlan {
        estimators: config.estimators.clone(),
        methods: methods.clone(),
        rule: config.missing_residual_rule,
    };
    let outputs = analyze(ds, &config.contrast, &plan)?;
    let mut rows = Vec::new();
    let mut fitted = Vec::new();
    for estimand in Estimand::ALL {
        for out in &outputs {
            let results = out.result.as_ref().map_err(|e| Error::Input(format!("{}: {e}", out.estimator)))?;
            let Some(r) = results.iter().find(|r| r.estimand == estimand) else { continue };
            let mut clipped = Vec::new();
            for &m in &methods {
                let report = r
                    .variances
                    .iter()
                    .find(|(k, _)| *k == m)
                    .map(|(_, v)| v.clone())
                    .expect("every planned method is reported")
                    .map_err(|e| Error::Input(format!("{} {m}: {e}", out.estimator)))?;
                if report.clipped {
                    clipped.push(m.name().to_string());
                }
                let se = r
                    .se(m)
                    .expect("planned method")
                    .map_err(|e| Error::Input(format!("{} {m}: {e}", out.estimator)))?;
                let (ci_lo, ci_hi) = confidence_interval(r.estimate, se, config.level)?;
                rows.push(EstimateRow {
                    estimand: estimand.name().into(),
                    estimator: out.estimator.name(),
                    method: m.name().into(),
                    estimate: r.estimate,
                    se,
                    ci_lo,
                    ci_hi,
                });
            }
            fitted.push(FittedSummary {
                estimator: out.estimator.name(),
                estimand: estimand.name().into(),
                fitted: r.family.name(),
                clipped,
            });
        }
    }
    Ok(EstimateReport {
        config_hash: config_hash(config)?,
        config: config.clone(),
        n: ds.n(),
        n1: ds.n1(),
        n0: ds.n0(),
        rows,
        fitted,
    })
}

/// Writes `estimates.csv` and `report.json` into `dir`.
pub fn write_estimates(report: &EstimateReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join("estimates.csv");
    let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(io)?;
    for row in &report.rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairs::tests::t4;

    fn config(json: &str) -> AnalysisConfig {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn numbered_columns_sort_numerically() {
        let h = csv::StringRecord::from(vec!["id", "a", "y10", "y2", "y1", "x1", "y01", "yz"]);
        assert_eq!(numbered(&h, 'y'), vec!["y1", "y2", "y10"]);
        assert_eq!(numbered(&h, 'x'), vec!["x1"]);
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t4.csv");
        let ds = t4().replace_covariates(vec![0.1, 1.0 / 3.0, -2.5e-17, 7.0], 1).unwrap();
        write_dataset(&ds, &path).unwrap();
        let cfg = config(r#"{"contrast": {"kind": "win_strict"}, "estimators": ["I-un"]}"#);
        let back = read_dataset(&path, &cfg).unwrap();
        assert_eq!(back.treatments(), ds.treatments());
        for i in 0..ds.n() {
            assert_eq!(back.outcome(i), ds.outcome(i));
            assert_eq!(back.covariates(i), ds.covariates(i));
        }
    }

    #[test]
    fn bad_cells_name_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "id,a,y1,x1\n1,1,3,0\n2,1,abc,1\n3,0,2,1\n4,0,0,0\n").unwrap();
        let cfg = config(r#"{"contrast": {"kind": "win_strict"}, "estimators": ["I-un"]}"#);
        let err = read_dataset(&path, &cfg).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("'y1'"), "{err}");
        fs::write(&path, "id,a,y1,x1\n1,1,3,0\n2,1,1,\n3,0,2,1\n4,0,0,0\n").unwrap();
        let err = read_dataset(&path, &cfg).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("'x1'") && err.contains("missing"), "{err}");
        fs::write(&path, "id,a,y1,x1\n1,2,3,0\n").unwrap();
        assert!(read_dataset(&path, &cfg).is_err());
        let cfg = config(r#"{"contrast": {"kind": "win_strict"}, "covariates": ["age"], "estimators": ["I-un"]}"#);
        fs::write(&path, "id,a,y1,x1\n1,1,3,0\n2,1,1,1\n3,0,2,1\n4,0,0,0\n").unwrap();
        assert!(read_dataset(&path, &cfg).unwrap_err().to_string().contains("'age'"));
    }

    #[test]
    fn cr_on_averaged_is_rejected_up_front() {
        let cfg = config(r#"{"contrast": {"kind": "win_strict"}, "estimators": ["A1-adj"], "methods": ["CR"]}"#);
        assert!(matches!(cfg.validate(), Err(Error::MethodMismatch { .. })));
    }

    #[test]
    fn ctw_is_always_first() {
        let cfg =
            config(r#"{"contrast": {"kind": "win_strict"}, "estimators": ["I-un"], "methods": ["HR", "CTW", "TW"]}"#);
        assert_eq!(cfg.methods(), vec![Method::Ctw, Method::Hr, Method::Tw]);
    }

    #[test]
    fn t4_estimates() {
        let cfg = config(r#"{"contrast": {"kind": "win_strict"}, "estimators": ["I-un"]}"#);
        let report = run_estimates(&t4(), &cfg).unwrap();
        let row = &report.rows[0];
        assert_eq!(
            (row.estimand.as_str(), row.estimator.as_str(), row.method.as_str()),
            ("lambda(1,0)", "I-un", "CTW")
        );
        assert_eq!(row.estimate, 0.75);
        assert_eq!(row.se, 0.125);
        assert_eq!(report.rows.len(), 3);
    }
}
