use super::config::{
    AnalysisSpec, ChainSpec, DataKind, ExperimentConfig, LawSpec, ProblemKind, ProblemSpec, TailSource,
};
use super::sweep::{SweepFactor, SweepSpec, SweepValue};
use crate::error::{Error, Result};
use crate::optimizers::{OptimizerKind, OptimizerSpec};
use crate::problems::Law;
use crate::tail_fit::CiMethod;

/// Environment variable with the path of the Wine Quality (white) CSV.
pub const WINE_CSV_ENV: &str = "TAILCHAIN_WINE_CSV";
const WINE_DEFAULT_PATH: &str = "winequality-white.csv";
/// 500 epochs over 4898 instances.
const WINE_NET_STEPS: u64 = 2_449_000;

const FIG1_SIGMAS: [u32; 3] = [2, 12, 50];
/// The figure states three step sizes without their values.
pub const FIG3_GAMMAS: [f64; 3] = [0.001, 0.005, 0.01];

/// Experiment preset names accepted by [`preset`].
pub fn preset_names() -> Vec<String> {
    let mut v: Vec<String> = ["toy1d", "wine_linear", "wine_net", "pca_demo"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for variant in ["a", "b", "c"] {
        for s in FIG1_SIGMAS {
            v.push(format!("fig1_{variant}_sigma{s}"));
        }
    }
    for variant in ["a", "c"] {
        for g in FIG3_GAMMAS {
            v.push(format!("fig3_{variant}_gamma{g}"));
        }
    }
    v.extend(["regime_light", "regime_kesten", "regime_gg", "regime_gg_half"].map(String::from));
    v
}

/// Sweep preset names accepted by [`sweep_preset`].
pub const SWEEP_PRESETS: [&str; 6] = [
    "table3_step_size",
    "table3_batch_size",
    "table3_lambda",
    "table3_smoothing",
    "table3_momentum",
    "table3_optimizer",
];

fn config(name: &str, problem: ProblemSpec, optimizer: Option<OptimizerSpec>, chain: ChainSpec) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        output_dir: None,
        assumed: Vec::new(),
        problem,
        optimizer,
        chain,
        analysis: AnalysisSpec::default(),
    }
}

fn wine_problem(kind: ProblemKind) -> ProblemSpec {
    ProblemSpec {
        data: Some(DataKind::Csv),
        csv_path: Some(std::env::var(WINE_CSV_ENV).unwrap_or_else(|_| WINE_DEFAULT_PATH.to_string())),
        delimiter: Some(";".into()),
        target_columns: Some(vec!["last".into()]),
        standardize: true,
        ..ProblemSpec::new(kind)
    }
}

/// The fully pinned configuration of a named experiment.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let unknown = || Error::UnknownName {
        kind: "preset",
        name: name.to_string(),
    };
    let mut c = match name {
        "toy1d" => {
            let mut c = config(
                name,
                ProblemSpec::synthetic(ProblemKind::Ridge, 1, 1),
                Some(OptimizerSpec::sgd(0.5)),
                ChainSpec::new(0, 10_000_000),
            );
            c.analysis.tail_fit = true;
            c.analysis.kesten = true;
            c.analysis.ergodicity = true;
            c.analysis.moment_p = Some(1.0);
            c.analysis.kde = true;
            c.assumed = vec!["chain.burn_in".into(), "chain.seed".into()];
            c
        }
        "wine_linear" => {
            let mut p = wine_problem(ProblemKind::Ridge);
            p.lambda = 4.0;
            p.batch_size = 1;
            p.intercept = true;
            p.init = "normal:1".into();
            let mut c = config(name, p, Some(OptimizerSpec::sgd(0.3)), ChainSpec::new(0, 2_500_000));
            c.analysis.tail_fit = true;
            c.analysis.tail_source = TailSource::WeightNorms;
            c.analysis.kesten = true;
            c.analysis.kesten_steps = 12;
            c.analysis.ergodicity = true;
            c.assumed = vec![
                "problem.standardize".into(),
                "problem.intercept".into(),
                "problem.replacement".into(),
                "chain.burn_in".into(),
                "chain.seed".into(),
            ];
            c
        }
        "wine_net" => {
            let mut p = wine_problem(ProblemKind::TwoLayerRelu);
            p.hidden_units = Some(4);
            p.lambda = 1e-4;
            p.batch_size = 1;
            p.replacement = false;
            p.init = "normal:0.5".into();
            let mut chain = ChainSpec::new(0, WINE_NET_STEPS);
            chain.decimation = 100;
            let mut c = config(name, p, Some(OptimizerSpec::sgd(0.025)), chain);
            c.analysis.tail_fit = true;
            c.analysis.kde = true;
            c.analysis.pca_components = vec![2, 3, 4];
            c.assumed = vec![
                "problem.standardize".into(),
                "problem.init".into(),
                "chain.burn_in".into(),
                "chain.decimation".into(),
                "chain.seed".into(),
            ];
            c
        }
        "pca_demo" => {
            let mut p = ProblemSpec::synthetic(ProblemKind::TwoLayerRelu, 8, 1);
            p.hidden_units = Some(16);
            p.init = "normal:0.5".into();
            let mut chain = ChainSpec::new(0, 200_000);
            chain.decimation = 10;
            let mut c = config(name, p, Some(OptimizerSpec::sgd(0.01)), chain);
            c.analysis.pca_components = vec![2, 3, 4];
            c.assumed = vec!["problem.data".into(), "problem.init".into(), "chain.n_steps".into()];
            c
        }
        "regime_light" => {
            let mut p = ProblemSpec::synthetic(ProblemKind::Ridge, 1, 1);
            p.input = Some(LawSpec(Law::Uniform { half_width: 1.0 }));
            p.target = Some(LawSpec(Law::Uniform { half_width: 1.0 }));
            let mut c = config(name, p, Some(OptimizerSpec::sgd(0.5)), ChainSpec::new(0, 1_000_000));
            c.analysis.tail_fit = true;
            c.analysis.tail_source = TailSource::WeightNorms;
            c.analysis.tail_ci = CiMethod::Asymptotic;
            c.analysis.kesten = true;
            c.assumed = vec!["problem.input".into(), "problem.target".into(), "optimizer.gamma".into()];
            c
        }
        "regime_kesten" => {
            let mut c = preset("toy1d")?;
            c.name = name.into();
            c.chain.n_steps = 1_000_000;
            c.analysis = AnalysisSpec {
                tail_fit: true,
                tail_ci: CiMethod::Asymptotic,
                kesten: true,
                ..AnalysisSpec::default()
            };
            c
        }
        "regime_gg" | "regime_gg_half" => {
            let scale = if name == "regime_gg" { 0.5 } else { 0.25 };
            let p = ProblemSpec {
                scale: Some(scale),
                a_gamma: Some(0.5),
                input: Some(LawSpec(Law::standard_normal())),
                b: Some(LawSpec(Law::StudentT {
                    dof: 3.0,
                    unit_variance: false,
                })),
                ..ProblemSpec::new(ProblemKind::Recurrence)
            };
            let mut c = config(name, p, None, ChainSpec::new(0, 1_000_000));
            c.analysis.tail_fit = true;
            c.analysis.tail_source = TailSource::WeightNorms;
            c.analysis.tail_ci = CiMethod::Asymptotic;
            c.analysis.kesten = true;
            c.assumed = vec!["problem.scale".into(), "problem.a_gamma".into()];
            c
        }
        _ => {
            if let Some(rest) = name.strip_prefix("fig1_") {
                let (variant, sigma) = rest.split_once("_sigma").ok_or_else(unknown)?;
                let sigma: u32 = sigma.parse().map_err(|_| unknown())?;
                if !FIG1_SIGMAS.contains(&sigma) {
                    return Err(unknown());
                }
                let kind = perturbed_kind(variant).ok_or_else(unknown)?;
                let p = ProblemSpec {
                    objective: Some("basin_cos".into()),
                    w0: Some(vec![-4.75]),
                    ..ProblemSpec::new(ProblemKind::Scalar)
                };
                let mut opt = OptimizerSpec::new(kind, 1e-2);
                opt.sigma = f64::from(sigma);
                let mut chain = ChainSpec::new(0, 1_000_000);
                chain.burn_in = Some(0);
                let mut c = config(name, p, Some(opt), chain);
                c.analysis.basins = true;
                c.analysis.kde = true;
                c.assumed = vec!["chain.seed".into()];
                c
            } else if let Some(rest) = name.strip_prefix("fig3_") {
                let (variant, gamma) = rest.split_once("_gamma").ok_or_else(unknown)?;
                let gamma: f64 = gamma.parse().map_err(|_| unknown())?;
                if !FIG3_GAMMAS.contains(&gamma) || variant == "b" {
                    return Err(unknown());
                }
                let kind = perturbed_kind(variant).ok_or_else(unknown)?;
                let p = ProblemSpec {
                    objective: Some("factor13_cos".into()),
                    ..ProblemSpec::new(ProblemKind::Scalar)
                };
                let mut opt = OptimizerSpec::new(kind, gamma);
                opt.sigma = 10.0;
                let mut c = config(name, p, Some(opt), ChainSpec::new(0, 10_000_000));
                c.analysis.kde = true;
                c.analysis.max_iterate_rows = 20_000;
                c.assumed = vec!["optimizer.gamma".into(), "chain.n_steps".into(), "chain.seed".into()];
                c
            } else {
                return Err(unknown());
            }
        }
    };
    c.assumed.sort();
    c.assumed.dedup();
    Ok(c)
}

fn perturbed_kind(v: &str) -> Option<OptimizerKind> {
    match v {
        "a" => Some(OptimizerKind::PerturbedGdA),
        "b" => Some(OptimizerKind::PerturbedGdB),
        "c" => Some(OptimizerKind::PerturbedGdC),
        _ => None,
    }
}

/// Scale run length by `scale` and optionally override the seed.
pub fn rescale(mut c: ExperimentConfig, scale: f64, seed: Option<u64>) -> Result<ExperimentConfig> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!("scale must be positive, got {scale}")));
    }
    if scale != 1.0 {
        let n = ((c.chain.n_steps as f64) * scale).round().max(2.0) as u64;
        c.chain.burn_in = c.chain.burn_in.map(|b| (((b as f64) * scale).round() as u64).min(n - 1));
        c.chain.n_steps = n;
    }
    if let Some(s) = seed {
        c.chain.seed = s;
        c.assumed.retain(|a| a != "chain.seed");
    }
    Ok(c)
}

/// The preset, rescaled.
pub fn preset_scaled(name: &str, scale: f64, seed: Option<u64>) -> Result<ExperimentConfig> {
    rescale(preset(name)?, scale, seed)
}

/// One-factor sweeps around the two-layer Wine baseline.
pub fn sweep_preset(name: &str) -> Result<SweepSpec> {
    let mut base = preset("wine_net")?;
    base.analysis.pca_components.clear();
    base.analysis.kde = false;
    let num = |v: &[f64]| v.iter().map(|x| SweepValue::Number(*x)).collect::<Vec<_>>();
    let (factor, values) = match name {
        "table3_step_size" => (SweepFactor::StepSize, num(&[0.001, 0.005, 0.01, 0.025])),
        "table3_batch_size" => (SweepFactor::BatchSize, num(&[1.0, 2.0, 5.0, 10.0])),
        "table3_lambda" => (SweepFactor::Lambda, num(&[1e-4, 0.01, 0.1, 0.2])),
        "table3_smoothing" => (SweepFactor::Smoothing, num(&[0.0, 0.1, 0.5, 1.0])),
        "table3_momentum" => (SweepFactor::Momentum, num(&[0.0, 0.1, 0.25, 0.5])),
        "table3_optimizer" => (
            SweepFactor::Optimizer,
            ["sgd", "adagrad", "adam"].iter().map(|s| SweepValue::Name(s.to_string())).collect(),
        ),
        _ => {
            return Err(Error::UnknownName {
                kind: "sweep preset",
                name: name.to_string(),
            })
        }
    };
    base.name = name.to_string();
    Ok(SweepSpec { base, factor, values })
}
