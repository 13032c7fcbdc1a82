use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tailchain::cli_io::{
    output_root, preset_names, preset_scaled, read_step_norms, run_experiment, run_sweep, sweep_preset,
    theory_report, ExperimentConfig, RunOutcome, SweepSpec, SweepTable, OUTPUT_ROOT_ENV, SWEEP_PRESETS,
};
use tailchain::tail_fit::{fit_tail, BootstrapOptions, TailFitOptions};
use tailchain::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_ANALYSIS: u8 = 4;

#[derive(Parser)]
#[command(name = "tailchain", version, about = "Stochastic optimizers as Markov chains: runs, tail fits and theory checks")]
struct Cli {
    /// Output root for bundles; overrides the environment variable
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config
    Run { config: PathBuf },
    /// Run a one-factor sweep (a config with a [sweep] section)
    Sweep { config: PathBuf },
    /// Run a named preset (experiment or table3_* sweep)
    Preset {
        name: String,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Print the resolved config instead of running it
        #[arg(long)]
        emit: bool,
    },
    /// Fit a power-law tail to a step-norm file
    Fit {
        file: PathBuf,
        /// Use the asymptotic CI instead of the bootstrap
        #[arg(long)]
        asymptotic: bool,
        #[arg(long, default_value_t = 1000)]
        n_boot: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print JSON instead of key = value lines
        #[arg(long)]
        json: bool,
    },
    /// Kesten roots and ergodicity diagnostic of a config's recurrence
    Kesten { config: PathBuf },
    /// List preset names
    List,
}

fn fail(code: u8, e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code)
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnknownName { .. } | Error::Parse { .. } | Error::Empty(_) | Error::Io { .. } => {
            EXIT_CONFIG
        }
        _ => EXIT_ANALYSIS,
    }
}

fn report_run(o: &RunOutcome) -> ExitCode {
    println!("bundle = {}", o.bundle.display());
    println!("status = {:?}", o.report.status);
    if let Some(t) = &o.report.tail_fit {
        println!("alpha_hat = {:.4}  ci95 = [{:.4}, {:.4}]  n_tail = {}", t.alpha_hat, t.ci95.0, t.ci95.1, t.n_tail);
    }
    if let Some(k) = &o.report.kesten {
        println!("kesten alpha_root = {:?}  beta_root = {:?}", k.alpha_root(), k.beta_root());
    }
    for (what, msg) in &o.report.analysis_errors {
        eprintln!("analysis {what} failed: {msg}");
    }
    ExitCode::from(o.report.status.exit_code() as u8)
}

fn report_sweep(t: &SweepTable) -> ExitCode {
    print!("{}", t.to_csv());
    for r in &t.rows {
        if let Some(e) = &r.error {
            eprintln!("{} = {}: {e}", t.factor.name(), r.value);
        }
    }
    ExitCode::from(t.exit_code() as u8)
}

fn run_config(path: &Path, root: &Path) -> ExitCode {
    let cfg = match ExperimentConfig::load(path).and_then(|c| c.validate().map(|_| c)) {
        Ok(c) => c,
        Err(e) => return fail(error_code(&e), e),
    };
    match run_experiment(&cfg, root) {
        Ok(o) => report_run(&o),
        Err(e) => fail(error_code(&e), e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let root = cli.out.clone().unwrap_or_else(output_root);
    match cli.command {
        Command::Run { config } => run_config(&config, &root),
        Command::Sweep { config } => match SweepSpec::load(&config) {
            Ok(s) => match run_sweep(&s, &root) {
                Ok(t) => report_sweep(&t),
                Err(e) => fail(error_code(&e), e),
            },
            Err(e) => fail(error_code(&e), e),
        },
        Command::Preset {
            name,
            scale,
            seed,
            emit,
        } => {
            if SWEEP_PRESETS.contains(&name.as_str()) {
                let spec = sweep_preset(&name).and_then(|mut s| {
                    s.base = tailchain::cli_io::rescale(s.base, scale, seed)?;
                    Ok(s)
                });
                return match spec {
                    Ok(s) if emit => match s.to_toml() {
                        Ok(t) => {
                            print!("{t}");
                            ExitCode::SUCCESS
                        }
                        Err(e) => fail(EXIT_CONFIG, e),
                    },
                    Ok(s) => match run_sweep(&s, &root) {
                        Ok(t) => report_sweep(&t),
                        Err(e) => fail(error_code(&e), e),
                    },
                    Err(e) => fail(error_code(&e), e),
                };
            }
            let cfg = match preset_scaled(&name, scale, seed) {
                Ok(c) => c,
                Err(e) => return fail(error_code(&e), e),
            };
            if emit {
                return match cfg.to_toml() {
                    Ok(t) => {
                        print!("{t}");
                        ExitCode::SUCCESS
                    }
                    Err(e) => fail(EXIT_CONFIG, e),
                };
            }
            match run_experiment(&cfg, &root) {
                Ok(o) => report_run(&o),
                Err(e) => fail(error_code(&e), e),
            }
        }
        Command::Fit {
            file,
            asymptotic,
            n_boot,
            seed,
            json,
        } => {
            let data = match read_step_norms(&file) {
                Ok(d) => d,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            let mut opts = if asymptotic {
                TailFitOptions::asymptotic()
            } else {
                TailFitOptions::default()
            };
            opts.bootstrap = BootstrapOptions {
                n_boot,
                seed,
                ..opts.bootstrap
            };
            match fit_tail(&data.values, &opts) {
                Ok(r) if json => match r.to_json() {
                    Ok(t) => {
                        println!("{t}");
                        ExitCode::SUCCESS
                    }
                    Err(e) => fail(EXIT_ANALYSIS, e),
                },
                Ok(r) => {
                    print!("{}", r.to_kv());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_ANALYSIS, e),
            }
        }
        Command::Kesten { config } => {
            let report = ExperimentConfig::load(&config).and_then(|c| theory_report(&c));
            match report {
                Ok(r) => match serde_json::to_string_pretty(&r) {
                    Ok(t) => {
                        println!("{t}");
                        ExitCode::SUCCESS
                    }
                    Err(e) => fail(EXIT_ANALYSIS, e),
                },
                Err(e) => fail(error_code(&e), e),
            }
        }
        Command::List => {
            println!("# experiments (output root: ${OUTPUT_ROOT_ENV} or --out)");
            for n in preset_names() {
                println!("{n}");
            }
            println!("# sweeps");
            for n in SWEEP_PRESETS {
                println!("{n}");
            }
            ExitCode::SUCCESS
        }
    }
}
