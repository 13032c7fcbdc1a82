use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{run_experiment, RunStatus};
use crate::error::{Error, Result};
use crate::optimizers::OptimizerKind;

/// The hyperparameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepFactor {
    StepSize,
    BatchSize,
    Lambda,
    Smoothing,
    Momentum,
    Optimizer,
}

impl SweepFactor {
    pub fn name(self) -> &'static str {
        match self {
            SweepFactor::StepSize => "step_size",
            SweepFactor::BatchSize => "batch_size",
            SweepFactor::Lambda => "lambda",
            SweepFactor::Smoothing => "smoothing",
            SweepFactor::Momentum => "momentum",
            SweepFactor::Optimizer => "optimizer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Number(f64),
    Name(String),
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepValue::Number(v) => write!(f, "{v}"),
            SweepValue::Name(s) => f.write_str(s),
        }
    }
}

/// A baseline plus one factor and the values it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub factor: SweepFactor,
    pub values: Vec<SweepValue>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    factor: SweepFactor,
    values: Vec<SweepValue>,
}

impl SweepSpec {
    /// A sweep file is an experiment config with an extra `[sweep]` section
    /// holding `factor` and `values`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let section = table
            .remove("sweep")
            .ok_or_else(|| Error::Config("missing [sweep] section".into()))?;
        let section: SweepSection = section.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let base: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let spec = Self {
            base,
            factor: section.factor,
            values: section.values,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        let mut table = toml::Table::try_from(&self.base).map_err(|e| Error::Serde(e.to_string()))?;
        let section = SweepSection {
            factor: self.factor,
            values: self.values.clone(),
        };
        table.insert(
            "sweep".into(),
            toml::Value::try_from(section).map_err(|e| Error::Serde(e.to_string()))?,
        );
        toml::to_string(&table).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Every value applies cleanly and yields a valid config.
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        for v in &self.values {
            self.config_for(v)?.validate()?;
        }
        Ok(())
    }

    /// The baseline with the factor set to `value`.
    pub fn config_for(&self, value: &SweepValue) -> Result<ExperimentConfig> {
        let mut c = self.base.clone();
        let bad = || Error::Config(format!("sweep value `{value}` does not fit factor {}", self.factor.name()));
        let num = || match value {
            SweepValue::Number(v) => Ok(*v),
            SweepValue::Name(_) => Err(bad()),
        };
        let opt = c
            .optimizer
            .as_mut()
            .ok_or_else(|| Error::Config("sweeps need an [optimizer] section".into()))?;
        match self.factor {
            SweepFactor::StepSize => opt.gamma = num()?,
            SweepFactor::Lambda => c.problem.lambda = num()?,
            SweepFactor::Smoothing => c.problem.smoothing_eps = num()?,
            SweepFactor::BatchSize => {
                let v = num()?;
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(bad());
                }
                c.problem.batch_size = v as usize;
            }
            SweepFactor::Momentum => {
                opt.kind = OptimizerKind::Momentum;
                opt.eta = num()?;
            }
            SweepFactor::Optimizer => {
                let SweepValue::Name(name) = value else {
                    return Err(bad());
                };
                opt.kind = serde_json::from_value(serde_json::Value::String(name.clone())).map_err(|_| {
                    Error::UnknownName {
                        kind: "optimizer",
                        name: name.clone(),
                    }
                })?;
            }
        }
        c.name = format!("{}_{}_{}", self.base.name, self.factor.name(), value);
        c.output_dir = Some(format!("{}/{}_{}", self.base.bundle_dir_name(), self.factor.name(), value));
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: SweepValue,
    pub status: Option<RunStatus>,
    pub alpha_hat: Option<f64>,
    pub ci95: Option<(f64, f64)>,
    pub n_tail: Option<usize>,
    pub bundle: Option<PathBuf>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub factor: SweepFactor,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("factor,value,status,alpha_hat,ci_low,ci_high,n_tail\n");
        for r in &self.rows {
            let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
            let status = r
                .status
                .map_or("error".to_string(), |s| serde_json::to_value(s).map_or(String::new(), |v| v.as_str().unwrap_or_default().to_string()));
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                self.factor.name(),
                r.value,
                status,
                f(r.alpha_hat),
                f(r.ci95.map(|c| c.0)),
                f(r.ci95.map(|c| c.1)),
                r.n_tail.map_or(String::new(), |n| n.to_string())
            );
        }
        s
    }

    /// Worst exit code over the rows (2 for rows that failed to run).
    pub fn exit_code(&self) -> i32 {
        self.rows
            .iter()
            .map(|r| r.status.map_or(2, RunStatus::exit_code))
            .max()
            .unwrap_or(0)
    }
}

/// One experiment per value, run concurrently, plus `sweep.csv` in the
/// sweep's directory.
pub fn run_sweep(spec: &SweepSpec, output_root: &Path) -> Result<SweepTable> {
    spec.validate()?;
    let rows = spec
        .values
        .par_iter()
        .map(|v| {
            let cfg = spec.config_for(v).expect("validated");
            match run_experiment(&cfg, output_root) {
                Ok(o) => SweepRow {
                    value: v.clone(),
                    status: Some(o.report.status),
                    alpha_hat: o.report.tail_fit.as_ref().map(|t| t.alpha_hat),
                    ci95: o.report.tail_fit.as_ref().map(|t| t.ci95),
                    n_tail: o.report.tail_fit.as_ref().map(|t| t.n_tail),
                    bundle: Some(o.bundle),
                    error: None,
                },
                Err(e) => SweepRow {
                    value: v.clone(),
                    status: None,
                    alpha_hat: None,
                    ci95: None,
                    n_tail: None,
                    bundle: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let table = SweepTable {
        factor: spec.factor,
        rows,
    };
    let dir = output_root.join(spec.base.bundle_dir_name());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("sweep.csv");
    std::fs::write(&path, table.to_csv()).map_err(|e| Error::io(&path, e))?;
    Ok(table)
}
