//! Configuration loading, the correspondence run, and report emission.

pub mod config;
pub mod report;
pub mod run;

pub use config::{load_config, parse_config, ConfigError, OutputFormat, RunConfig, ThetaSpec, Tolerances};
pub use report::{emit_report, to_json, write_text, CorrespondenceReport, NodeRecord};
pub use run::{
    analyze, build_locus, check_atlas, check_glue, check_section, locus_summary, locus_to_csv, run_solve, run_verify,
    SolveOutput, VerifyError,
};
