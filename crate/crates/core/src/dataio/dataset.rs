use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::emb::{read_emb, write_emb};
use super::json;
use crate::error::{Error, Result};
use crate::survival::SurvivalRecord;
use crate::Matrix;

/// One embedding matrix, `n × d`, rows aligned with the survival table.
#[derive(Clone, Debug, PartialEq)]
pub struct Modality {
    pub name: String,
    pub embeddings: Matrix,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
}

/// Aligned per-modality embeddings plus survival outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct MultimodalDataset {
    modalities: Vec<Modality>,
    records: Vec<SurvivalRecord>,
    pub provenance: Provenance,
}

impl MultimodalDataset {
    pub fn new(modalities: Vec<Modality>, records: Vec<SurvivalRecord>, provenance: Provenance) -> Result<Self> {
        let n = records.len();
        for m in &modalities {
            if m.embeddings.rows() != n {
                return Err(Error::LengthMismatch(format!(
                    "modality `{}` has {} rows, survival table has {n}",
                    m.name,
                    m.embeddings.rows()
                )));
            }
            if let Some(k) = m.embeddings.as_slice().iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "modality `{}` row {} column {}",
                    m.name,
                    k / m.embeddings.cols().max(1),
                    k % m.embeddings.cols().max(1)
                )));
            }
        }
        let mut names = HashSet::new();
        for m in &modalities {
            if !names.insert(m.name.as_str()) {
                return Err(Error::invalid(format!("duplicate modality name `{}`", m.name)));
            }
        }
        let mut seen = HashSet::new();
        for (row, r) in records.iter().enumerate() {
            if !seen.insert(r.patient_id.as_str()) {
                return Err(Error::invalid(format!("duplicate patient_id `{}` at row {row}", r.patient_id)));
            }
            if !(r.time.is_finite() && r.time > 0.0) {
                return Err(Error::invalid(format!("row {row}: time must be > 0, got {}", r.time)));
            }
        }
        Ok(MultimodalDataset {
            modalities,
            records,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn modalities(&self) -> &[Modality] {
        &self.modalities
    }

    pub fn modality_names(&self) -> Vec<String> {
        self.modalities.iter().map(|m| m.name.clone()).collect()
    }

    pub fn embeddings(&self) -> Vec<&Matrix> {
        self.modalities.iter().map(|m| &m.embeddings).collect()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.modalities.iter().map(|m| m.embeddings.cols()).collect()
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn event_count(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    /// Rows `idx` (in the given order) as a new dataset.
    pub fn subset(&self, idx: &[usize]) -> MultimodalDataset {
        MultimodalDataset {
            modalities: self
                .modalities
                .iter()
                .map(|m| Modality {
                    name: m.name.clone(),
                    embeddings: m.embeddings.select_rows(idx),
                })
                .collect(),
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Same patients with modalities in a new order.
    pub fn reorder_modalities(&self, order: &[usize]) -> Result<MultimodalDataset> {
        let modalities = order
            .iter()
            .map(|&i| {
                self.modalities
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("no modality {i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        MultimodalDataset::new(modalities, self.records.clone(), self.provenance.clone())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModalityEntry {
    name: String,
    file: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format: String,
    modalities: Vec<ModalityEntry>,
    patient_ids: Vec<String>,
    provenance: Provenance,
}

const META_FORMAT: &str = "coxplain-dataset-v1";
const SURVIVAL_HEADER: &str = "patient_id,time_months,event";

fn modality_file(name: &str) -> String {
    format!("{name}.emb")
}

/// Writes `meta.json`, one EMB1 file per modality and `survival.csv`.
pub fn save_dataset(dataset: &MultimodalDataset, dir: &Path) -> Result<()> {
    if dataset.modalities.is_empty() {
        return Err(Error::invalid("dataset has no modalities"));
    }
    if let Some(m) = dataset.modalities.iter().find(|m| m.embeddings.cols() == 0) {
        return Err(Error::invalid(format!("modality `{}` has zero columns", m.name)));
    }
    for m in &dataset.modalities {
        if m.name.is_empty() || !m.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::invalid(format!("modality name `{}` is not file-safe", m.name)));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let meta = Meta {
        format: META_FORMAT.to_string(),
        modalities: dataset
            .modalities
            .iter()
            .map(|m| ModalityEntry {
                name: m.name.clone(),
                file: modality_file(&m.name),
                rows: m.embeddings.rows(),
                cols: m.embeddings.cols(),
            })
            .collect(),
        patient_ids: dataset.records.iter().map(|r| r.patient_id.clone()).collect(),
        provenance: dataset.provenance.clone(),
    };
    json::write(&dir.join("meta.json"), &meta)?;
    for m in &dataset.modalities {
        write_emb(&dir.join(modality_file(&m.name)), &m.embeddings)?;
    }

    let mut csv = String::with_capacity(32 * dataset.len() + 32);
    csv.push_str(SURVIVAL_HEADER);
    csv.push('\n');
    for r in &dataset.records {
        if r.patient_id.contains([',', '\n', '\r', '"']) {
            return Err(Error::invalid(format!("patient_id `{}` is not CSV-safe", r.patient_id)));
        }
        // `{}` on f64 is the shortest string that parses back to the same bits.
        csv.push_str(&format!("{},{},{}\n", r.patient_id, r.time, u8::from(r.event)));
    }
    let path = dir.join("survival.csv");
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))
}

fn read_survival(path: &Path) -> Result<Vec<SurvivalRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == SURVIVAL_HEADER => {}
        other => {
            return Err(Error::format(
                path,
                format!("expected header `{SURVIVAL_HEADER}`, found {other:?}"),
            ))
        }
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = k + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::format(path, format!("row {row}: expected 3 fields, got {}", fields.len())));
        }
        let time: f64 = fields[1]
            .parse()
            .map_err(|_| Error::format(path, format!("row {row}: bad time `{}`", fields[1])))?;
        if !(time.is_finite() && time > 0.0) {
            return Err(Error::format(path, format!("row {row}: time must be > 0, got {}", fields[1])));
        }
        let event = match fields[2] {
            "0" => false,
            "1" => true,
            other => return Err(Error::format(path, format!("row {row}: event must be 0 or 1, got `{other}`"))),
        };
        out.push(SurvivalRecord {
            patient_id: fields[0].to_string(),
            time,
            event,
        });
    }
    Ok(out)
}

/// Reads a directory written by [`save_dataset`] and validates alignment.
pub fn load_dataset(dir: &Path) -> Result<MultimodalDataset> {
    let meta_path = dir.join("meta.json");
    let meta: Meta = json::read(&meta_path)?;
    if meta.format != META_FORMAT {
        return Err(Error::format(&meta_path, format!("unknown format `{}`", meta.format)));
    }
    let n = meta.patient_ids.len();
    let mut modalities = Vec::with_capacity(meta.modalities.len());
    for entry in &meta.modalities {
        let path = dir.join(&entry.file);
        let m = read_emb(&path)?;
        if m.rows() != n || m.shape() != (entry.rows, entry.cols) {
            return Err(Error::format(
                &path,
                format!(
                    "{}x{} embedding, meta.json declares {}x{} for {n} patients",
                    m.rows(),
                    m.cols(),
                    entry.rows,
                    entry.cols
                ),
            ));
        }
        modalities.push(Modality {
            name: entry.name.clone(),
            embeddings: m,
        });
    }
    let surv_path = dir.join("survival.csv");
    let records = read_survival(&surv_path)?;
    if records.len() != n {
        return Err(Error::format(
            &surv_path,
            format!("{} rows, meta.json lists {n} patients", records.len()),
        ));
    }
    for (row, (r, id)) in records.iter().zip(&meta.patient_ids).enumerate() {
        if &r.patient_id != id {
            return Err(Error::format(
                &surv_path,
                format!("row {}: patient `{}` where meta.json has `{id}`", row + 1, r.patient_id),
            ));
        }
    }
    MultimodalDataset::new(modalities, records, meta.provenance)
        .map_err(|e| Error::format(dir, e.to_string()))
}
