//! Dataset directories, embedding files, splits and JSON report helpers.
//!
//! A dataset directory holds `meta.json` (modality names, files, dims and the
//! ordered patient ids), one `EMB1` file per modality and `survival.csv`.

mod dataset;
pub mod emb;
pub mod json;
mod split;

pub use dataset::{load_dataset, save_dataset, Modality, MultimodalDataset, Provenance};
pub use split::{make_split, split_indices, Fold, SplitKind, SplitSpec};
