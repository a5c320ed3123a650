//! Synthetic two-modality survival cohorts with known interaction structure
//! and the validation suite that audits models trained on them.

mod cv;
mod generate;
mod suite;

pub use cv::{cv_stability, cv_stability_with, CvStability};
pub use generate::{generate, GroundTruth, Pattern, SynthData, SynthSpec, MODALITY_A, MODALITY_B};
pub use suite::{
    desk_hyperparams, run_validation_suite, three_way_split, CheckGroup, CheckResult, FittedModel, SuiteConfig, SuiteReport,
    ThreeWaySplit,
};
