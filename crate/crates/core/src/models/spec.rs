use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchitectureKind {
    EarlyMlp,
    CrossAttention,
    Bilinear,
    Gated,
    UnimodalA,
    UnimodalB,
    LateLinear,
}

impl ArchitectureKind {
    pub const ALL: [ArchitectureKind; 7] = [
        ArchitectureKind::EarlyMlp,
        ArchitectureKind::CrossAttention,
        ArchitectureKind::Bilinear,
        ArchitectureKind::Gated,
        ArchitectureKind::UnimodalA,
        ArchitectureKind::UnimodalB,
        ArchitectureKind::LateLinear,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchitectureKind::EarlyMlp => "early-mlp",
            ArchitectureKind::CrossAttention => "cross-attention",
            ArchitectureKind::Bilinear => "bilinear",
            ArchitectureKind::Gated => "gated",
            ArchitectureKind::UnimodalA => "unimodal-a",
            ArchitectureKind::UnimodalB => "unimodal-b",
            ArchitectureKind::LateLinear => "late-linear",
        }
    }
}

impl fmt::Display for ArchitectureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchitectureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchitectureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown architecture `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Small layers for synthetic benchmarks and tests.
    Desk,
    /// Layer sizes of the published 2048-d configuration.
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(Error::invalid(format!("unknown preset `{s}`"))),
        }
    }
}

/// Shape of a fusion network. Fields that an architecture does not use are
/// ignored by it (e.g. `rank` outside bilinear).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub kind: ArchitectureKind,
    /// Embedding width of modality A and modality B.
    pub dims: [usize; 2],
    /// Hidden widths. MLPs: every hidden layer. Bilinear / cross-attention:
    /// the head. Gated: the width of f, g and the gate.
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub rank: usize,
    pub attention_dim: usize,
    /// Tokens per modality for cross-attention; each embedding is cut into
    /// this many equal chunks.
    pub tokens: usize,
}

impl ArchitectureSpec {
    pub fn preset(kind: ArchitectureKind, preset: Preset, dims: [usize; 2]) -> Self {
        use ArchitectureKind::*;
        let (hidden, dropout, rank, attention_dim, tokens) = match (preset, kind) {
            (Preset::Desk, EarlyMlp | UnimodalA | UnimodalB | LateLinear) => (vec![32, 8], 0.25, 0, 0, 0),
            (Preset::Desk, Bilinear) => (vec![16], 0.1, 16, 0, 0),
            (Preset::Desk, CrossAttention) => (vec![32], 0.1, 0, 16, 4),
            (Preset::Desk, Gated) => (vec![32], 0.1, 0, 0, 0),
            (Preset::Paper, EarlyMlp | UnimodalA | UnimodalB | LateLinear) => (vec![2048, 200], 0.25, 0, 0, 0),
            (Preset::Paper, Bilinear) => (vec![64], 0.25, 64, 0, 0),
            (Preset::Paper, CrossAttention) => (vec![256], 0.25, 0, 64, 16),
            (Preset::Paper, Gated) => (vec![256], 0.25, 0, 0, 0),
        };
        ArchitectureSpec {
            kind,
            dims,
            hidden,
            dropout,
            rank,
            attention_dim,
            tokens,
        }
    }

    /// Paper-scale layer sizes on 2048-d embeddings.
    pub fn paper(kind: ArchitectureKind) -> Self {
        Self::preset(kind, Preset::Paper, [2048, 2048])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.dims.contains(&0) {
            return bad(format!("embedding dims must be positive, got {:?}", self.dims));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0,1)", self.dropout));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden dims must be non-empty and positive, got {:?}", self.hidden));
        }
        match self.kind {
            ArchitectureKind::Bilinear if self.rank == 0 => bad("bilinear rank must be positive".into()),
            ArchitectureKind::CrossAttention => {
                if self.attention_dim == 0 || self.tokens == 0 {
                    return bad("cross-attention needs positive attention_dim and tokens".into());
                }
                if self.dims.iter().any(|d| d % self.tokens != 0) {
                    return bad(format!(
                        "embedding dims {:?} are not divisible into {} tokens",
                        self.dims, self.tokens
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}
