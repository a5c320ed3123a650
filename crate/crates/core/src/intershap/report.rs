use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::decompose::{decompose, moebius_decomposition, shapley_two_modality, Convention, ShapleyDecomposition};
use super::global::{global_intershap, GlobalInterShap, PatientShare};
use super::masking::{evaluate_coalitions, Masker, MaskingStrategy, RiskModel};
use super::table::CoalitionTable;
use crate::dataio::{json, MultimodalDataset};
use crate::error::{Error, Result};

pub const REPORT_FORMAT: &str = "coxplain-audit-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditMetadata {
    pub format: String,
    /// Free-form model description, e.g. a checkpoint path.
    pub model: String,
    pub masking: MaskingStrategy,
    pub convention: Convention,
    pub modalities: Vec<String>,
    pub interaction_terms: Vec<String>,
    pub patients: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalityContribution {
    pub modality: String,
    #[serde(serialize_with = "json::serialize")]
    pub percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalBlock {
    #[serde(serialize_with = "json::serialize")]
    pub interaction_percent: f64,
    pub contributions: Vec<ModalityContribution>,
    pub included_patients: usize,
    pub degenerate_patients: usize,
    /// The two-modality paper-eqs percentage next to the moebius one, when M = 2.
    #[serde(serialize_with = "json::opt::serialize")]
    pub moebius_percent: Option<f64>,
    #[serde(serialize_with = "json::opt::serialize")]
    pub paper_eqs_percent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientRow {
    pub patient_id: String,
    #[serde(serialize_with = "json::vec::serialize")]
    pub mains: Vec<f64>,
    #[serde(serialize_with = "json::vec::serialize")]
    pub interactions: Vec<f64>,
    #[serde(serialize_with = "json::serialize")]
    pub numerator: f64,
    #[serde(serialize_with = "json::serialize")]
    pub denominator: f64,
    /// `None` for degenerate patients.
    #[serde(serialize_with = "json::opt::serialize")]
    pub percent: Option<f64>,
    #[serde(serialize_with = "json::serialize")]
    pub residual: f64,
}

impl PatientRow {
    pub fn share(&self) -> PatientShare {
        PatientShare {
            numerator: self.numerator,
            denominator: self.denominator,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub metadata: AuditMetadata,
    pub global: GlobalBlock,
    pub patients: Vec<PatientRow>,
}

fn percent_of(decomp: Result<ShapleyDecomposition>) -> Option<f64> {
    decomp.and_then(|d| global_intershap(&d)).ok().map(|g| g.interaction_percent)
}

impl AuditReport {
    /// Assembles a report from an evaluated table.
    pub fn from_table(table: &CoalitionTable, masking: MaskingStrategy, convention: Convention, model: &str) -> Result<Self> {
        let decomp = decompose(table, convention)?;
        let global: GlobalInterShap = global_intershap(&decomp)?;
        let (moebius_percent, paper_eqs_percent) = if table.modality_count() == 2 {
            (percent_of(moebius_decomposition(table)), percent_of(shapley_two_modality(table)))
        } else {
            ((convention == Convention::Moebius).then_some(global.interaction_percent), None)
        };
        let patients = (0..decomp.patients())
            .map(|p| {
                let share = global.shares[p];
                PatientRow {
                    patient_id: decomp.patient_ids[p].clone(),
                    mains: decomp.mains[p].clone(),
                    interactions: decomp.interactions[p].clone(),
                    numerator: share.numerator,
                    denominator: share.denominator,
                    percent: share.percent(),
                    residual: decomp.residuals[p],
                }
            })
            .collect();
        Ok(AuditReport {
            metadata: AuditMetadata {
                format: REPORT_FORMAT.into(),
                model: model.into(),
                masking,
                convention,
                modalities: decomp.modality_names.clone(),
                interaction_terms: decomp.interaction_labels.clone(),
                patients: decomp.patients(),
                evaluations: table.evaluations(),
            },
            global: GlobalBlock {
                interaction_percent: global.interaction_percent,
                contributions: decomp
                    .modality_names
                    .iter()
                    .zip(&global.contribution_percents)
                    .map(|(m, &percent)| ModalityContribution {
                        modality: m.clone(),
                        percent,
                    })
                    .collect(),
                included_patients: global.included_patients,
                degenerate_patients: global.degenerate_patients,
                moebius_percent,
                paper_eqs_percent,
            },
            patients,
        })
    }

    pub fn contribution(&self, modality: &str) -> Option<f64> {
        self.global
            .contributions
            .iter()
            .find(|c| c.modality == modality)
            .map(|c| c.percent)
    }

    pub fn shares(&self) -> Vec<PatientShare> {
        self.patients.iter().map(PatientRow::share).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        json::to_string(self)
    }

    /// `patient_id, main_<m>..., interaction_<S>..., percent`; an empty
    /// percent marks a degenerate patient.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("patient_id");
        for m in &self.metadata.modalities {
            let _ = write!(out, ",main_{m}");
        }
        for t in &self.metadata.interaction_terms {
            let _ = write!(out, ",interaction_{t}");
        }
        out.push_str(",percent\n");
        for row in &self.patients {
            out.push_str(&row.patient_id);
            for x in row.mains.iter().chain(&row.interactions) {
                let _ = write!(out, ",{}", json::format_sig17(*x));
            }
            out.push(',');
            if let Some(p) = row.percent {
                out.push_str(&json::format_sig17(p));
            }
            out.push('\n');
        }
        out
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        json::write(&dir.join(format!("{stem}.json")), self)?;
        let csv = dir.join(format!("{stem}.csv"));
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let report: AuditReport = json::read(path)?;
        if report.metadata.format != REPORT_FORMAT {
            return Err(Error::format(path, format!("format `{}`, expected `{REPORT_FORMAT}`", report.metadata.format)));
        }
        Ok(report)
    }
}

/// Evaluates all coalitions, decomposes under `convention` and aggregates.
pub fn audit<R: RiskModel + ?Sized>(
    model: &R,
    dataset: &MultimodalDataset,
    masker: &Masker,
    convention: Convention,
    model_label: &str,
) -> Result<AuditReport> {
    let table = evaluate_coalitions(model, dataset, masker)?;
    AuditReport::from_table(&table, masker.strategy, convention, model_label)
}
