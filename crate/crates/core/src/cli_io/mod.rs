//! Manifests, checkpoints and run orchestration for the command line.

pub mod checkpoint;
pub mod manifest;
pub mod run;

pub use checkpoint::{compare, write_field_csv, Checkpoint, CheckpointHeader, CompareReport, LevelDistance};
pub use manifest::{echo_manifest, parse_manifest, preset, RunManifest, DEFAULT_SCENARIO, SCENARIOS};
pub use run::{diagnose_checkpoint, run_manifest, RunOutcome};
