use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{BuiltExperiment, BuiltProblem, ExperimentConfig, ProblemKind, TailSource};
use super::stepnorm::format_step_norms;
use crate::analysis::{
    basin_stats, default_bandwidth, kde_1d, kde_1d_log, pca_project, BasinReport, DensityEstimate, PcaProjection,
};
use crate::chain::{euclid, run_ensemble, ChainTrace, ParamVec};
use crate::error::{Error, Result};
use crate::problems::{LinearCoeffSampler, ProductSampler, RidgeCoeffSampler};
use crate::tail_fit::{fit_tail, BootstrapOptions, TailFitOptions, TailFitReport};
use crate::theory::{
    ergodicity_diagnostic, expansion_probability, kesten_solve, lipschitz_profile_sgd, moment_bounds,
    ErgodicityReport, ExpansionReport, KestenOptions, KestenResult, MomentBounds, ProfileProblem,
};

/// Environment variable naming the directory bundles are written under.
pub const OUTPUT_ROOT_ENV: &str = "TAILCHAIN_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "tailchain-out";
/// Monte-Carlo draws for Lipschitz profiles inside experiments.
const PROFILE_DRAWS: usize = 20_000;
const EXPANSION_RADII: [f64; 4] = [1.0, 10.0, 1e3, 1e6];
const EXPANSION_EPS: [f64; 3] = [0.01, 0.05, 0.1];
const EXPANSION_DRAWS: usize = 20_000;

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .filter(|v| !v.is_empty())
        .map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT), PathBuf::from)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Diverged,
    AnalysisFailed,
}

impl RunStatus {
    /// Process exit code: 0 ok, 3 divergence, 4 analysis failure.
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::Diverged => 3,
            RunStatus::AnalysisFailed => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub seed: u64,
    pub fingerprint: String,
    pub recorded_iterates: usize,
    pub recorded_step_norms: usize,
    pub diverged_at: Option<u64>,
    pub failure: Option<String>,
    pub final_weight_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub component_indices: Vec<usize>,
    pub explained_variance_ratio: Vec<f64>,
    pub rank: usize,
    pub flags: Vec<String>,
}

/// Everything an experiment computed, apart from the raw traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config_fingerprint: String,
    pub status: RunStatus,
    pub chains: Vec<ChainSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_fit: Option<TailFitReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kesten: Option<KestenResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ergodicity: Option<ErgodicityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_bounds: Option<MomentBounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion: Option<ExpansionReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basins: Option<BasinReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca: Option<PcaSummary>,
    /// analysis name -> error message
    pub analysis_errors: BTreeMap<String, String>,
}

/// In-memory result of [`execute`].
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub report: ExperimentReport,
    pub traces: Vec<ChainTrace>,
    pub kde: Option<DensityEstimate>,
    pub pca: Option<PcaProjection>,
}

impl ExperimentOutput {
    /// Step norms of all chains, concatenated in chain order.
    pub fn step_norms(&self) -> Vec<f64> {
        self.traces.iter().flat_map(|t| t.step_norms.iter().copied()).collect()
    }
}

/// Run the chains and every requested analysis, without touching disk.
pub fn execute(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let built = config.build()?;
    let cfg = config.chain.chain_config();
    let traces = run_ensemble(built.step.as_ref(), &built.w0, &cfg, config.chain.n_chains)?;
    let chains = traces
        .iter()
        .map(|t| {
            let w = &t.final_state.as_slice()[t.layout.weights()];
            ChainSummary {
                seed: t.config.seed,
                fingerprint: t.config_fingerprint.clone(),
                recorded_iterates: t.len(),
                recorded_step_norms: t.step_norms.len(),
                diverged_at: t.diverged_at,
                failure: t.failure.clone(),
                final_weight_norm: euclid(w),
            }
        })
        .collect();
    let mut report = ExperimentReport {
        name: config.name.clone(),
        config_fingerprint: config.fingerprint(),
        status: RunStatus::Ok,
        chains,
        tail_fit: None,
        kesten: None,
        ergodicity: None,
        moment_bounds: None,
        expansion: None,
        basins: None,
        pca: None,
        analysis_errors: BTreeMap::new(),
    };
    let mut out = ExperimentOutput {
        config: config.clone(),
        report: report.clone(),
        traces,
        kde: None,
        pca: None,
    };
    if out.traces.iter().any(ChainTrace::diverged) {
        report.status = RunStatus::Diverged;
        out.report = report;
        return Ok(out);
    }
    analyse(config, &built, &mut out, &mut report);
    if !report.analysis_errors.is_empty() {
        report.status = RunStatus::AnalysisFailed;
    }
    out.report = report;
    Ok(out)
}

fn record<T>(errors: &mut BTreeMap<String, String>, what: &str, r: Result<T>) -> Option<T> {
    r.map_err(|e| errors.insert(what.to_string(), e.to_string())).ok()
}

fn analyse(config: &ExperimentConfig, built: &BuiltExperiment, out: &mut ExperimentOutput, report: &mut ExperimentReport) {
    let a = &config.analysis;
    let seed = config.chain.seed;
    let errors = &mut report.analysis_errors;
    let tail_samples = || -> Vec<f64> {
        match a.tail_source {
            TailSource::StepNorms => out.step_norms(),
            TailSource::WeightNorms => out.traces.iter().flat_map(ChainTrace::weight_norms).collect(),
        }
    };
    if a.tail_fit {
        let opts = TailFitOptions {
            ci: a.tail_ci,
            bootstrap: BootstrapOptions {
                n_boot: a.n_boot,
                seed,
                ..Default::default()
            },
        };
        report.tail_fit = record(errors, "tail_fit", fit_tail(&tail_samples(), &opts));
    }
    if a.kesten || a.ergodicity {
        let sampler = coeff_sampler(built, a.kesten_steps);
        if let Some(s) = sampler {
            if a.kesten {
                let opts = KestenOptions {
                    n_mc: a.kesten_n_mc,
                    seed,
                    ..Default::default()
                };
                report.kesten = record(errors, "kesten", kesten_solve(s.as_ref(), &opts));
            }
            if a.ergodicity {
                report.ergodicity = record(errors, "ergodicity", ergodicity_diagnostic(s.as_ref(), a.kesten_n_mc, seed));
            }
        }
    }
    if let Some(p) = a.moment_p {
        let spec = config.optimizer.as_ref().expect("validated");
        let profile = match &built.problem {
            BuiltProblem::Ridge(r) => lipschitz_profile_sgd(ProfileProblem::Ridge(r), spec, PROFILE_DRAWS, seed),
            BuiltProblem::TwoLayer(n) => lipschitz_profile_sgd(
                ProfileProblem::TwoLayer {
                    problem: n,
                    w_star: None,
                },
                spec,
                PROFILE_DRAWS,
                seed,
            ),
            _ => Err(Error::Unsupported("moment bounds".into())),
        };
        report.moment_bounds = record(errors, "moment_bounds", profile.and_then(|pr| moment_bounds(&pr, p)));
    }
    if a.expansion {
        let weights = out.traces[0].layout.weights();
        let probes: Vec<ParamVec> = EXPANSION_RADII
            .iter()
            .map(|&r| {
                let mut v = built.w0.as_slice().to_vec();
                v[weights.clone()].iter_mut().for_each(|x| *x = 0.0);
                v[weights.start] = r;
                ParamVec::new(v).expect("finite probe")
            })
            .collect();
        let w = weights.clone();
        let norm = move |s: &[f64]| euclid(&s[w.clone()]);
        report.expansion = record(
            errors,
            "expansion",
            expansion_probability(built.step.as_ref(), &norm, &probes, &EXPANSION_EPS, EXPANSION_DRAWS, seed),
        );
    }
    if a.basins {
        if let BuiltProblem::Scalar(obj) = &built.problem {
            report.basins = record(errors, "basins", basin_stats(&out.traces[0], obj, a.basin_radius));
        }
    }
    if a.kde {
        let est = if config.problem.kind == ProblemKind::Scalar {
            let xs: Vec<f64> = out.traces.iter().flat_map(|t| t.coordinate(t.layout.weights().start)).collect();
            default_bandwidth(&xs).and_then(|h| kde_1d(&xs, h, a.kde_grid))
        } else {
            kde_1d_log(&tail_samples(), a.kde_grid)
        };
        out.kde = record(errors, "kde", est);
    }
    if !a.pca_components.is_empty() {
        out.pca = record(errors, "pca", pca_project(&out.traces, &a.pca_components));
        report.pca = out.pca.as_ref().map(|p| PcaSummary {
            component_indices: p.component_indices.clone(),
            explained_variance_ratio: p.explained_variance_ratio.clone(),
            rank: p.rank,
            flags: p.flags.clone(),
        });
    }
}

/// The linear recurrence behind a ridge or scripted problem, taken every
/// `steps` steps.
fn coeff_sampler(built: &BuiltExperiment, steps: usize) -> Option<Box<dyn LinearCoeffSampler>> {
    match &built.problem {
        BuiltProblem::Ridge(p) => {
            let inner = RidgeCoeffSampler::new((**p).clone());
            Some(if steps > 1 {
                Box::new(ProductSampler::new(inner, steps))
            } else {
                Box::new(inner)
            })
        }
        BuiltProblem::Recurrence(r) => Some(if steps > 1 {
            Box::new(ProductSampler::new(r.clone(), steps))
        } else {
            Box::new(r.clone())
        }),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub name: String,
    pub steps: usize,
    pub kesten: KestenResult,
    pub ergodicity: ErgodicityReport,
}

/// Kesten roots and the ergodicity diagnostic of a config's recurrence,
/// without running the chain.
pub fn theory_report(config: &ExperimentConfig) -> Result<TheoryReport> {
    let built = config.build()?;
    let a = &config.analysis;
    let sampler = coeff_sampler(&built, a.kesten_steps)
        .ok_or_else(|| Error::Config("kesten needs a ridge or recurrence problem".into()))?;
    if config.problem.kind == ProblemKind::Ridge && config.optimizer.as_ref().map(|o| o.kind) != Some(crate::optimizers::OptimizerKind::Sgd) {
        return Err(Error::Config("kesten analysis of ridge problems needs sgd".into()));
    }
    let opts = KestenOptions {
        n_mc: a.kesten_n_mc,
        seed: config.chain.seed,
        ..Default::default()
    };
    Ok(TheoryReport {
        name: config.name.clone(),
        steps: a.kesten_steps,
        kesten: kesten_solve(sampler.as_ref(), &opts)?,
        ergodicity: ergodicity_diagnostic(sampler.as_ref(), a.kesten_n_mc, config.chain.seed)?,
    })
}

/// Location and summary of a written bundle.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub bundle: PathBuf,
    pub report: ExperimentReport,
}

/// [`execute`] and write the bundle under `output_root`.
pub fn run_experiment(config: &ExperimentConfig, output_root: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let out = execute(config)?;
    let bundle = write_bundle(&out, output_root)?;
    Ok(RunOutcome {
        bundle,
        report: out.report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_fingerprint: String,
    pub status: RunStatus,
    /// config fields filled by assumption (`assumed=true`)
    pub assumed: Vec<String>,
    pub files: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn sha16(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Serde(e.to_string()))
}

fn bundle_files(out: &ExperimentOutput) -> Result<Vec<(String, Vec<u8>)>> {
    let cfg = &out.config;
    let mut files: Vec<(String, Vec<u8>)> = vec![
        ("config.toml".into(), cfg.to_toml()?.into_bytes()),
        ("report.json".into(), to_json(&out.report)?.into_bytes()),
    ];
    if let Some(t) = &out.report.tail_fit {
        files.push(("tail_fit.txt".into(), t.to_kv().into_bytes()));
    }
    if cfg.analysis.save_step_norms && cfg.chain.record_step_norms {
        for (i, t) in out.traces.iter().enumerate() {
            let name = if out.traces.len() == 1 {
                "step_norms.txt".to_string()
            } else {
                format!("step_norms_{i}.txt")
            };
            files.push((name, format_step_norms(&t.config_fingerprint, t.config.n_steps, &t.step_norms).into_bytes()));
        }
    }
    if cfg.analysis.max_iterate_rows > 0 {
        let t = &out.traces[0];
        if !t.is_empty() {
            let w = t.layout.weights();
            let stride = t.len().div_ceil(cfg.analysis.max_iterate_rows).max(1);
            let mut s = String::from("index");
            for j in w.clone() {
                let _ = write!(s, ",w{}", j - w.start);
            }
            s.push('\n');
            for i in (0..t.len()).step_by(stride) {
                let row: Vec<String> = t.iterate(i)[w.clone()].iter().map(|v| format!("{v:.10e}")).collect();
                let _ = writeln!(s, "{i},{}", row.join(","));
            }
            files.push(("iterates.csv".into(), s.into_bytes()));
        }
    }
    let mut plots = Vec::new();
    if let Some(k) = &out.kde {
        files.push(("kde.csv".into(), k.to_csv().into_bytes()));
        plots.push("kde");
    }
    if let Some(b) = &out.report.basins {
        files.push(("basins.csv".into(), b.to_csv().into_bytes()));
        plots.push("basins");
    }
    if let Some(p) = &out.pca {
        files.push(("pca_scores.csv".into(), p.to_csv().into_bytes()));
        plots.push("pca");
    }
    if !plots.is_empty() {
        files.push(("plot.py".into(), plot_script(&cfg.name, &plots).into_bytes()));
    }
    Ok(files)
}

/// A generic matplotlib script for the CSVs of a bundle. It is written, not run.
fn plot_script(name: &str, parts: &[&str]) -> String {
    let mut s = String::from(
        "# Plots the data files of this bundle.\nimport csv\nimport matplotlib.pyplot as plt\n\n\
         def read(path):\n    with open(path) as f:\n        rows = list(csv.reader(f))\n    \
         return rows[0], [[float(v) for v in r] for r in rows[1:]]\n\n",
    );
    let _ = writeln!(s, "fig, axes = plt.subplots(1, {n}, figsize=(5 * {n}, 4), squeeze=False)", n = parts.len());
    for (i, p) in parts.iter().enumerate() {
        let _ = writeln!(s, "ax = axes[0][{i}]");
        match *p {
            "kde" => s.push_str(
                "head, rows = read('kde.csv')\nax.plot([r[0] for r in rows], [r[1] for r in rows])\n\
                 ax.set_xlabel(head[0]); ax.set_ylabel('density'); ax.set_yscale('log')\n",
            ),
            "basins" => s.push_str(
                "head, rows = read('basins.csv')\nax.bar([r[1] for r in rows], [r[2] for r in rows], width=0.2)\n\
                 ax.set_xlabel('basin minimum'); ax.set_ylabel('occupancy')\n",
            ),
            _ => s.push_str(
                "head, rows = read('pca_scores.csv')\nif len(head) > 2:\n    \
                 ax.plot([r[1] for r in rows], [r[2] for r in rows], lw=0.3)\n    \
                 ax.set_xlabel(head[1].upper()); ax.set_ylabel(head[2].upper())\n",
            ),
        }
    }
    let _ = writeln!(s, "fig.suptitle({name:?})\nfig.tight_layout()\nfig.savefig('{name}.png', dpi=150)");
    s
}

/// Write a bundle atomically: everything goes to a hidden temporary
/// directory, the manifest last, and the directory is renamed into place.
pub fn write_bundle(out: &ExperimentOutput, output_root: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(output_root).map_err(|e| Error::io(output_root, e))?;
    let final_dir = output_root.join(out.config.bundle_dir_name());
    let tmp = output_root.join(format!(
        ".tmp-{}-{}-{}",
        out.config.bundle_dir_name().replace('/', "_"),
        out.report.config_fingerprint,
        std::process::id()
    ));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut entries = Vec::new();
    for (name, bytes) in bundle_files(out)? {
        let path = tmp.join(&name);
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(ManifestEntry {
            path: name,
            bytes: bytes.len() as u64,
            sha256: sha16(&bytes),
        });
    }
    let manifest = Manifest {
        name: out.config.name.clone(),
        config_fingerprint: out.report.config_fingerprint.clone(),
        status: out.report.status,
        assumed: out.config.assumed.clone(),
        files: entries,
    };
    let mpath = tmp.join(MANIFEST_FILE);
    std::fs::write(&mpath, to_json(&manifest)?).map_err(|e| Error::io(&mpath, e))?;
    if final_dir.exists() {
        let old = output_root.join(format!(".old-{}-{}", out.report.config_fingerprint, std::process::id()));
        std::fs::rename(&final_dir, &old).map_err(|e| Error::io(&final_dir, e))?;
        std::fs::rename(&tmp, &final_dir).map_err(|e| Error::io(&final_dir, e))?;
        std::fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
    } else {
        if let Some(parent) = final_dir.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::rename(&tmp, &final_dir).map_err(|e| Error::io(&final_dir, e))?;
    }
    Ok(final_dir)
}

pub fn read_manifest(bundle: &Path) -> Result<Manifest> {
    let path = bundle.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))
}
