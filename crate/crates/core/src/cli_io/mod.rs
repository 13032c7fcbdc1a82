//! Experiment configs, presets, bundle output and factor sweeps.

mod config;
mod presets;
mod run;
mod stepnorm;
mod sweep;

pub use config::{
    AnalysisSpec, BuiltExperiment, BuiltProblem, ChainSpec, DataKind, ExperimentConfig, LawSpec, ProblemKind,
    ProblemSpec, TailSource,
};
pub use presets::{
    preset, preset_names, preset_scaled, rescale, sweep_preset, FIG3_GAMMAS, SWEEP_PRESETS, WINE_CSV_ENV,
};
pub use run::{
    execute, output_root, read_manifest, run_experiment, theory_report, write_bundle, ChainSummary, ExperimentOutput,
    ExperimentReport, Manifest, ManifestEntry, PcaSummary, RunOutcome, RunStatus, TheoryReport, MANIFEST_FILE, OUTPUT_ROOT_ENV,
};
pub use stepnorm::{format_step_norms, parse_step_norms, read_step_norms, StepNormFile};
pub use sweep::{run_sweep, SweepFactor, SweepRow, SweepSpec, SweepTable, SweepValue};
