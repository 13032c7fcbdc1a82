use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chain::{fingerprint, ChainConfig, ParamVec, StepMap};
use crate::error::{Error, Result};
use crate::optimizers::{
    build_adagrad, build_adam, build_momentum, build_newton, build_perturbed_gd, build_sgd, OptimizerKind,
    OptimizerSpec, PerturbedVariant,
};
use crate::problems::{
    load_csv_dataset, scalar_objective_catalog, BatchSampler, CsvOptions, DataSource, Law, LinearRecurrenceStep,
    MinibatchProblem, RidgeProblem, ScalarObjective, ScalarRecurrence, SyntheticData, TwoLayerReluProblem,
};
use crate::rng::{Domain, StreamRng};
use crate::tail_fit::CiMethod;

/// A [`Law`] written as `name:parameter`, e.g. `gaussian:1`, `uniform:1`,
/// `student_t:3`, `student_t_unit:3` or `constant:0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LawSpec(pub Law);

impl FromStr for LawSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = s.split_once(':').unwrap_or((s, ""));
        let value = || -> Result<f64> {
            param
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("law `{s}`: expected a number after `:`")))
        };
        let law = match name.trim() {
            "gaussian" | "normal" => Law::Gaussian { std: value()? },
            "uniform" => Law::Uniform { half_width: value()? },
            "student_t" => Law::StudentT {
                dof: value()?,
                unit_variance: false,
            },
            "student_t_unit" => Law::StudentT {
                dof: value()?,
                unit_variance: true,
            },
            "constant" => Law::Constant { value: value()? },
            other => {
                return Err(Error::UnknownName {
                    kind: "law",
                    name: other.to_string(),
                })
            }
        };
        Ok(LawSpec(law))
    }
}

impl TryFrom<String> for LawSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl fmt::Display for LawSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Law::Gaussian { std } => write!(f, "gaussian:{std:?}"),
            Law::Uniform { half_width } => write!(f, "uniform:{half_width:?}"),
            Law::StudentT {
                dof,
                unit_variance: false,
            } => write!(f, "student_t:{dof:?}"),
            Law::StudentT {
                dof,
                unit_variance: true,
            } => write!(f, "student_t_unit:{dof:?}"),
            Law::Constant { value } => write!(f, "constant:{value:?}"),
        }
    }
}

impl From<LawSpec> for String {
    fn from(l: LawSpec) -> String {
        l.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Ridge,
    TwoLayerRelu,
    /// 1-D objective driven by a perturbed gradient method
    Scalar,
    /// scripted scalar recurrence `W' = scale (1 - a_gamma X^2) W + B`
    Recurrence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Synthetic,
    Csv,
}

fn default_one() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_init() -> String {
    "zeros".into()
}

/// The `[problem]` section. Fields a kind does not use must be left at their
/// defaults; [`ExperimentConfig::validate`] reports violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<LawSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<LawSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delimiter: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_columns: Option<Vec<String>>,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub intercept: bool,
    /// std of Gaussian noise added once to the loaded inputs
    #[serde(default)]
    pub smoothing_eps: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_one")]
    pub batch_size: usize,
    #[serde(default = "default_true")]
    pub replacement: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_units: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<LawSpec>,
    /// `zeros`, `normal:STD` or `constant:V`; ignored when `w0` is given
    #[serde(default = "default_init")]
    pub init: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w0: Option<Vec<f64>>,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind) -> Self {
        Self {
            kind,
            data: None,
            d: None,
            m: None,
            input: None,
            target: None,
            csv_path: None,
            delimiter: None,
            target_columns: None,
            standardize: false,
            intercept: false,
            smoothing_eps: 0.0,
            lambda: 0.0,
            batch_size: 1,
            replacement: true,
            hidden_units: None,
            objective: None,
            scale: None,
            a_gamma: None,
            b: None,
            init: default_init(),
            w0: None,
        }
    }

    /// Standard-normal synthetic data with `d` inputs and `m` outputs.
    pub fn synthetic(kind: ProblemKind, d: usize, m: usize) -> Self {
        Self {
            data: Some(DataKind::Synthetic),
            d: Some(d),
            m: Some(m),
            input: Some(LawSpec(Law::standard_normal())),
            target: Some(LawSpec(Law::standard_normal())),
            ..Self::new(kind)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    #[serde(default)]
    pub seed: u64,
    pub n_steps: u64,
    /// defaults to 10% of `n_steps`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[serde(default = "default_decimation")]
    pub decimation: u64,
    #[serde(default = "default_true")]
    pub record_step_norms: bool,
    #[serde(default = "default_one")]
    pub n_chains: usize,
}

fn default_decimation() -> u64 {
    1
}

impl ChainSpec {
    pub fn new(seed: u64, n_steps: u64) -> Self {
        Self {
            seed,
            n_steps,
            burn_in: None,
            decimation: 1,
            record_step_norms: true,
            n_chains: 1,
        }
    }

    pub fn chain_config(&self) -> ChainConfig {
        let c = ChainConfig::new(self.seed, self.n_steps)
            .with_decimation(self.decimation)
            .with_step_norms(self.record_step_norms);
        match self.burn_in {
            Some(b) => c.with_burn_in(b),
            None => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSource {
    StepNorms,
    WeightNorms,
}

fn default_n_boot() -> usize {
    1000
}
fn default_kesten_n_mc() -> usize {
    200_000
}
fn default_kde_grid() -> usize {
    512
}
fn default_radius() -> f64 {
    crate::analysis::DEFAULT_RADIUS
}
fn default_moment_p() -> f64 {
    1.0
}
fn default_ci() -> CiMethod {
    CiMethod::Bootstrap
}
fn default_tail_source() -> TailSource {
    TailSource::StepNorms
}
fn default_kesten_steps() -> usize {
    1
}
fn default_iterate_rows() -> usize {
    100_000
}

/// The `[analysis]` section: which post-processing steps to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub tail_fit: bool,
    #[serde(default = "default_tail_source")]
    pub tail_source: TailSource,
    #[serde(default = "default_ci")]
    pub tail_ci: CiMethod,
    #[serde(default = "default_n_boot")]
    pub n_boot: usize,
    #[serde(default)]
    pub kesten: bool,
    /// Kesten analysis of the chain taken every `kesten_steps` steps
    #[serde(default = "default_kesten_steps")]
    pub kesten_steps: usize,
    #[serde(default = "default_kesten_n_mc")]
    pub kesten_n_mc: usize,
    #[serde(default)]
    pub ergodicity: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_p: Option<f64>,
    #[serde(default)]
    pub expansion: bool,
    #[serde(default)]
    pub basins: bool,
    #[serde(default = "default_radius")]
    pub basin_radius: f64,
    #[serde(default)]
    pub kde: bool,
    #[serde(default = "default_kde_grid")]
    pub kde_grid: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pca_components: Vec<usize>,
    #[serde(default = "default_true")]
    pub save_step_norms: bool,
    /// cap on rows of `iterates.csv`; 0 disables it
    #[serde(default = "default_iterate_rows")]
    pub max_iterate_rows: usize,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            tail_fit: false,
            tail_source: default_tail_source(),
            tail_ci: default_ci(),
            n_boot: default_n_boot(),
            kesten: false,
            kesten_steps: default_kesten_steps(),
            kesten_n_mc: default_kesten_n_mc(),
            ergodicity: false,
            moment_p: None,
            expansion: false,
            basins: false,
            basin_radius: default_radius(),
            kde: false,
            kde_grid: default_kde_grid(),
            pca_components: Vec::new(),
            save_step_norms: true,
            max_iterate_rows: default_iterate_rows(),
        }
    }
}

impl AnalysisSpec {
    pub fn moment_p_or_default(&self) -> f64 {
        self.moment_p.unwrap_or_else(default_moment_p)
    }
}

/// A complete experiment description, serialized as TOML with the sections
/// `[problem]`, `[optimizer]`, `[chain]` and `[analysis]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// bundle directory, relative to the output root; defaults to the name
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    /// fields filled in by assumption rather than taken from a source
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assumed: Vec<String>,
    pub problem: ProblemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerSpec>,
    pub chain: ChainSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
}

/// Message of a nested error, without repeating the config-error prefix.
fn issue(e: Error) -> String {
    match e {
        Error::Config(msg) => msg,
        other => other.to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Hash of the canonical (key-sorted) JSON form, so it does not depend on
    /// the order of fields in a config file.
    pub fn fingerprint(&self) -> String {
        // serde_json::Value objects are BTreeMaps: keys come out sorted
        let value = serde_json::to_value(self).expect("config serializes");
        let mut canonical = value;
        if let Some(obj) = canonical.as_object_mut() {
            obj.remove("output_dir");
        }
        fingerprint(&canonical.to_string())
    }

    pub fn bundle_dir_name(&self) -> String {
        self.output_dir.clone().unwrap_or_else(|| self.name.clone())
    }

    /// Cross-field checks run before any computation.
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) {
            issues.push("name must be non-empty and contain no path separators".to_string());
        }
        if let Err(e) = self.chain.chain_config().validate() {
            issues.push(issue(e));
        }
        if self.chain.n_chains == 0 {
            issues.push("chain.n_chains must be at least 1".into());
        }
        let p = &self.problem;
        let opt_kind = self.optimizer.as_ref().map(|o| o.kind);
        if let Some(o) = &self.optimizer {
            if let Err(e) = o.validate() {
                issues.push(issue(e));
            }
        }
        match p.kind {
            ProblemKind::Ridge | ProblemKind::TwoLayerRelu => {
                match p.data {
                    None => issues.push("problem.data must be `synthetic` or `csv`".into()),
                    Some(DataKind::Synthetic) => {
                        if p.d.is_none() || p.m.is_none() || p.input.is_none() || p.target.is_none() {
                            issues.push("synthetic data needs d, m, input and target".into());
                        }
                        if p.d == Some(0) || p.m == Some(0) {
                            issues.push("d and m must be positive".into());
                        }
                    }
                    Some(DataKind::Csv) => {
                        if p.csv_path.as_deref().is_none_or(str::is_empty) {
                            issues.push("csv data needs csv_path".into());
                        }
                        if let Some(d) = &p.delimiter {
                            if d.len() != 1 {
                                issues.push(format!("delimiter must be a single byte, got `{d}`"));
                            }
                        }
                    }
                }
                if !(p.lambda >= 0.0 && p.lambda.is_finite()) {
                    issues.push(format!("lambda must be >= 0, got {}", p.lambda));
                }
                if !(p.smoothing_eps >= 0.0) {
                    issues.push("smoothing_eps must be >= 0".into());
                }
                if p.batch_size == 0 {
                    issues.push("batch_size must be positive".into());
                }
                match opt_kind {
                    None => issues.push("this problem needs an [optimizer] section".into()),
                    Some(k) if k.is_perturbed() => {
                        issues.push(format!("{} needs a scalar problem", k.name()));
                    }
                    Some(OptimizerKind::Newton) if p.kind != ProblemKind::Ridge => {
                        issues.push("newton is only available for ridge problems".into());
                    }
                    _ => {}
                }
                if p.kind == ProblemKind::TwoLayerRelu && p.hidden_units.is_none_or(|h| h == 0) {
                    issues.push("two_layer_relu needs hidden_units > 0".into());
                }
            }
            ProblemKind::Scalar => {
                match &p.objective {
                    None => issues.push("scalar problem needs an objective".into()),
                    Some(name) => {
                        if let Err(e) = scalar_objective_catalog(name) {
                            issues.push(issue(e));
                        }
                    }
                }
                if !opt_kind.is_some_and(OptimizerKind::is_perturbed) {
                    issues.push("scalar problems need a perturbed_gd_{a,b,c} optimizer".into());
                }
            }
            ProblemKind::Recurrence => {
                if p.scale.is_none() || p.a_gamma.is_none() || p.input.is_none() || p.b.is_none() {
                    issues.push("recurrence needs scale, a_gamma, input and b".into());
                }
                if self.optimizer.is_some() {
                    issues.push("recurrence problems take no [optimizer] section".into());
                }
            }
        }
        if let Err(e) = parse_init(&p.init) {
            issues.push(issue(e));
        }
        let a = &self.analysis;
        if a.tail_fit && a.tail_source == TailSource::StepNorms && !self.chain.record_step_norms {
            issues.push("tail fit on step norms needs chain.record_step_norms".into());
        }
        if a.kesten_steps == 0 {
            issues.push("analysis.kesten_steps must be at least 1".into());
        }
        if (a.kesten || a.ergodicity) && !matches!(p.kind, ProblemKind::Ridge | ProblemKind::Recurrence) {
            issues.push("kesten/ergodicity analyses need a linear recurrence (ridge or recurrence)".into());
        }
        if (a.kesten || a.ergodicity) && p.kind == ProblemKind::Ridge && opt_kind != Some(OptimizerKind::Sgd) {
            issues.push("kesten/ergodicity analyses of ridge problems need sgd".into());
        }
        if a.moment_p.is_some()
            && (!matches!(p.kind, ProblemKind::Ridge | ProblemKind::TwoLayerRelu)
                || opt_kind != Some(OptimizerKind::Sgd))
        {
            issues.push("moment bounds need sgd on a ridge or two_layer_relu problem".into());
        }
        if a.basins && p.kind != ProblemKind::Scalar {
            issues.push("basin statistics need a scalar problem".into());
        }
        if a.tail_ci == CiMethod::Bootstrap && a.tail_fit && a.n_boot < 2 {
            issues.push("n_boot must be at least 2".into());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues.join("; ")))
        }
    }

    /// Build the step map and initial state this config describes.
    pub fn build(&self) -> Result<BuiltExperiment> {
        self.validate()?;
        let p = &self.problem;
        let seed = self.chain.seed;
        let built = match p.kind {
            ProblemKind::Ridge => {
                let source = self.data_source()?;
                let spec = self.optimizer.clone().expect("validated");
                let ridge = Arc::new(RidgeProblem::new(source, p.lambda, spec.gamma, p.batch_size, p.replacement)?);
                let dim = ridge.dim();
                let step: Arc<dyn StepMap> = match spec.kind {
                    OptimizerKind::Newton => Arc::new(build_newton(ridge.clone(), &spec)),
                    _ => first_order(ridge.clone(), &spec),
                };
                let w0 = initial_weights(p, dim, seed)?;
                BuiltExperiment {
                    w0: spec.initial_state(&w0),
                    step,
                    problem: BuiltProblem::Ridge(ridge),
                }
            }
            ProblemKind::TwoLayerRelu => {
                let source = self.data_source()?;
                let spec = self.optimizer.clone().expect("validated");
                let sampler = BatchSampler::new(source, p.batch_size, p.replacement)?;
                let net = Arc::new(TwoLayerReluProblem::new(sampler, p.hidden_units.expect("validated"), p.lambda)?);
                let w0 = initial_weights(p, net.dim(), seed)?;
                BuiltExperiment {
                    w0: spec.initial_state(&w0),
                    step: first_order(net.clone(), &spec),
                    problem: BuiltProblem::TwoLayer(net),
                }
            }
            ProblemKind::Scalar => {
                let obj = scalar_objective_catalog(p.objective.as_deref().expect("validated"))?;
                let spec = self.optimizer.clone().expect("validated");
                let variant = PerturbedVariant::from_kind(spec.kind).expect("validated");
                let w0 = initial_weights(p, 1, seed)?;
                BuiltExperiment {
                    w0: ParamVec::new(w0)?,
                    step: Arc::new(build_perturbed_gd(obj.clone(), &spec, variant)),
                    problem: BuiltProblem::Scalar(obj),
                }
            }
            ProblemKind::Recurrence => {
                let rec = ScalarRecurrence {
                    scale: p.scale.expect("validated"),
                    gamma: p.a_gamma.expect("validated"),
                    x_law: p.input.expect("validated").0,
                    b_law: p.b.expect("validated").0,
                };
                let w0 = initial_weights(p, 1, seed)?;
                BuiltExperiment {
                    w0: ParamVec::new(w0)?,
                    step: Arc::new(LinearRecurrenceStep { sampler: rec.clone() }),
                    problem: BuiltProblem::Recurrence(rec),
                }
            }
        };
        Ok(built)
    }

    fn data_source(&self) -> Result<DataSource> {
        let p = &self.problem;
        match p.data.expect("validated") {
            DataKind::Synthetic => Ok(DataSource::Synthetic(SyntheticData {
                d: p.d.expect("validated"),
                m: p.m.expect("validated"),
                input: p.input.expect("validated").0,
                target: p.target.expect("validated").0,
            })),
            DataKind::Csv => {
                let path = PathBuf::from(p.csv_path.as_deref().expect("validated"));
                let opts = CsvOptions {
                    delimiter: p.delimiter.as_deref().map_or(b',', |d| d.as_bytes()[0]),
                    target_columns: p.target_columns.clone().unwrap_or_else(|| vec!["last".into()]),
                    standardize: p.standardize,
                };
                let mut ds = load_csv_dataset(&path, &opts)?;
                if p.smoothing_eps > 0.0 {
                    ds = ds.smoothed(p.smoothing_eps, self.chain.seed);
                }
                if p.intercept {
                    ds = ds.with_intercept();
                }
                Ok(DataSource::Empirical(Arc::new(ds)))
            }
        }
    }
}

fn first_order(problem: Arc<dyn MinibatchProblem>, spec: &OptimizerSpec) -> Arc<dyn StepMap> {
    match spec.kind {
        OptimizerKind::Sgd => Arc::new(build_sgd(problem, spec)),
        OptimizerKind::Momentum => Arc::new(build_momentum(problem, spec)),
        OptimizerKind::Adam => Arc::new(build_adam(problem, spec)),
        OptimizerKind::Adagrad => Arc::new(build_adagrad(problem, spec)),
        k => unreachable!("{} is not first-order on minibatch problems", k.name()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Zeros,
    Normal(f64),
    Constant(f64),
}

fn parse_init(s: &str) -> Result<Init> {
    let bad = || Error::Config(format!("init `{s}`: expected zeros, normal:STD or constant:V"));
    let (name, param) = s.split_once(':').unwrap_or((s, ""));
    let num = || param.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
    match name.trim() {
        "zeros" if param.is_empty() => Ok(Init::Zeros),
        "normal" => Ok(Init::Normal(num()?)),
        "constant" => Ok(Init::Constant(num()?)),
        _ => Err(bad()),
    }
}

fn initial_weights(p: &ProblemSpec, dim: usize, seed: u64) -> Result<Vec<f64>> {
    if let Some(w0) = &p.w0 {
        if w0.len() != dim {
            return Err(Error::Config(format!("w0 has {} entries, problem needs {dim}", w0.len())));
        }
        return Ok(w0.clone());
    }
    Ok(match parse_init(&p.init)? {
        Init::Zeros => vec![0.0; dim],
        Init::Constant(v) => vec![v; dim],
        Init::Normal(std) => {
            let mut rng = StreamRng::new(seed, Domain::Init, 0);
            (0..dim)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    std * z
                })
                .collect()
        }
    })
}

/// The problem object behind a built experiment, kept for theory checks.
#[derive(Clone)]
pub enum BuiltProblem {
    Ridge(Arc<RidgeProblem>),
    TwoLayer(Arc<TwoLayerReluProblem>),
    Scalar(ScalarObjective),
    Recurrence(ScalarRecurrence),
}

#[derive(Clone)]
pub struct BuiltExperiment {
    pub step: Arc<dyn StepMap>,
    pub w0: ParamVec,
    pub problem: BuiltProblem,
}
