//! Coalition evaluation under masking and InterSHAP decompositions.
//!
//! A model's log-risk is evaluated with every subset of modalities present
//! and the rest masked. The resulting table is split into per-modality main
//! effects and cross-modal interaction terms, which aggregate into a global
//! interaction percentage.

mod decompose;
mod global;
mod masking;
mod report;
mod table;

pub use decompose::{
    decompose, moebius_decomposition, moebius_transform, shapley_interaction_index, shapley_two_modality, Convention,
    ShapleyDecomposition,
};
pub use global::{aggregate_percent, global_intershap, patient_shares, GlobalInterShap, PatientShare, DEGENERATE_DENOMINATOR};
pub use masking::{evaluate_coalitions, Masker, MaskingKind, MaskingStrategy, RiskModel, RowFnModel};
pub use report::{audit, AuditMetadata, AuditReport, GlobalBlock, ModalityContribution, PatientRow, REPORT_FORMAT};
pub use table::{CoalitionTable, MAX_MODALITIES};
