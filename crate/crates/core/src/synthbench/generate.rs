use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::{Modality, MultimodalDataset, Provenance};
use crate::error::{Error, Result};
use crate::numcore::rng;
use crate::survival::SurvivalRecord;
use crate::Matrix;

pub const MODALITY_A: &str = "a";
pub const MODALITY_B: &str = "b";

/// Baseline hazard per month; puts median event times around four years.
const BASELINE_RATE: f64 = 1.0 / 60.0;
const EVENT_FRACTION_TOLERANCE: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    /// Risk from modality A alone.
    Uniqueness,
    /// Risk from the XOR of the signs of one feature in each modality.
    XorSynergy,
    /// Both modalities carry noisy copies of one latent risk factor.
    Redundancy,
}

impl Pattern {
    pub const ALL: [Pattern; 3] = [Pattern::Uniqueness, Pattern::XorSynergy, Pattern::Redundancy];

    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::Uniqueness => "uniqueness",
            Pattern::XorSynergy => "xor-synergy",
            Pattern::Redundancy => "redundancy",
        }
    }

    /// Expected global interaction percentage.
    pub fn ground_truth(self) -> GroundTruth {
        let (low, high) = match self {
            Pattern::Uniqueness => (0.0, 2.0),
            Pattern::XorSynergy => (90.0, 100.0),
            Pattern::Redundancy => (25.0, 55.0),
        };
        GroundTruth {
            pattern: self,
            low,
            high,
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniqueness" => Ok(Pattern::Uniqueness),
            "xor" | "xor-synergy" => Ok(Pattern::XorSynergy),
            "redundancy" => Ok(Pattern::Redundancy),
            _ => Err(Error::invalid(format!(
                "unknown pattern `{s}` (uniqueness | xor | redundancy)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pattern: Pattern,
    pub low: f64,
    pub high: f64,
}

impl GroundTruth {
    pub fn contains(&self, percent: f64) -> bool {
        percent >= self.low && percent <= self.high
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub pattern: Pattern,
    pub n: usize,
    /// Embedding width of each modality.
    pub dims: usize,
    pub beta: f64,
    pub event_fraction: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub const MIN_PATIENTS: usize = 50;

    pub fn new(pattern: Pattern) -> Self {
        SynthSpec {
            pattern,
            n: 2000,
            dims: 16,
            beta: 2.0,
            event_fraction: 0.65,
            sigma: 0.3,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n < Self::MIN_PATIENTS {
            return bad(format!("n = {} is below the minimum of {}", self.n, Self::MIN_PATIENTS));
        }
        if self.dims == 0 {
            return bad("dims must be positive".into());
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.event_fraction > 0.1 && self.event_fraction < 0.95) {
            return bad(format!("event fraction {} outside (0.1, 0.95)", self.event_fraction));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be non-negative, got {}", self.sigma));
        }
        Ok(())
    }
}

/// A generated cohort plus what it was built to contain.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub dataset: MultimodalDataset,
    pub ground_truth: GroundTruth,
    /// True log-risk `r` per patient (before the baseline rate).
    pub log_risk: Vec<f64>,
    pub censoring_rate: f64,
    pub event_fraction: f64,
}

fn normals(n: usize, d: usize, seed: u64, part: u64) -> Matrix {
    let mut r = rng::stream(seed, &[rng::domain::SYNTH, part]);
    let data = (0..n * d).map(|_| r.sample(StandardNormal)).collect();
    Matrix::from_vec(n, d, data).expect("shape")
}

/// Exponential draws `-ln(U)` for unit rate.
fn unit_exponentials(n: usize, seed: u64, part: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, &[rng::domain::SYNTH, part]);
    (0..n)
        .map(|_| {
            let u: f64 = r.random();
            -(1.0 - u).ln()
        })
        .collect()
}

/// Fraction of patients with `T ≤ C` when censoring has rate `mu`.
fn event_fraction(event_times: &[f64], censor_unit: &[f64], mu: f64) -> f64 {
    let events = event_times
        .iter()
        .zip(censor_unit)
        .filter(|(&t, &e)| t <= e / mu)
        .count();
    events as f64 / event_times.len() as f64
}

/// Censoring rate whose realised event fraction is closest to `target`.
fn tune_censoring(event_times: &[f64], censor_unit: &[f64], target: f64) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = ((1e-12f64).ln(), (1e6f64).ln());
    let mut best = (f64::NAN, f64::NAN);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let mu = mid.exp();
        let frac = event_fraction(event_times, censor_unit, mu);
        if best.1.is_nan() || (frac - target).abs() < (best.1 - target).abs() {
            best = (mu, frac);
        }
        if (frac - target).abs() <= 0.25 / event_times.len() as f64 {
            break;
        }
        if frac > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best.1 - target).abs() > EVENT_FRACTION_TOLERANCE {
        return Err(Error::Bisection {
            target,
            achieved: best.1,
        });
    }
    Ok(best)
}

/// Builds a synthetic two-modality cohort with exponential event and
/// censoring times. Deterministic given `spec.seed`.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let (n, d, beta) = (spec.n, spec.dims, spec.beta);
    let mut a = normals(n, d, spec.seed, 0);
    let mut b = normals(n, d, spec.seed, 1);
    let log_risk: Vec<f64> = match spec.pattern {
        Pattern::Uniqueness => (0..n).map(|i| beta * a.get(i, 0)).collect(),
        Pattern::XorSynergy => (0..n)
            .map(|i| {
                let x = (a.get(i, 0) > 0.0) != (b.get(i, 0) > 0.0);
                beta * (if x { 1.0 } else { 0.0 } - 0.5) * 2.0
            })
            .collect(),
        Pattern::Redundancy => {
            let z = normals(n, 1, spec.seed, 2);
            for i in 0..n {
                a.set(i, 0, z.get(i, 0) + spec.sigma * a.get(i, 0));
                b.set(i, 0, z.get(i, 0) + spec.sigma * b.get(i, 0));
            }
            (0..n).map(|i| beta * z.get(i, 0)).collect()
        }
    };
    let event_times: Vec<f64> = unit_exponentials(n, spec.seed, 3)
        .into_iter()
        .zip(&log_risk)
        .map(|(e, r)| e / (BASELINE_RATE * r.exp()))
        .collect();
    let censor_unit = unit_exponentials(n, spec.seed, 4);
    let (mu, achieved) = tune_censoring(&event_times, &censor_unit, spec.event_fraction)?;

    let records = (0..n)
        .map(|i| {
            let c = censor_unit[i] / mu;
            let t = event_times[i];
            let time = t.min(c).max(f64::MIN_POSITIVE);
            SurvivalRecord::new(format!("syn{i:05}"), time, t <= c)
        })
        .collect::<Result<Vec<_>>>()?;
    let provenance = Provenance {
        source: "synthetic".into(),
        seed: Some(spec.seed),
        pattern: Some(spec.pattern.as_str().into()),
    };
    let dataset = MultimodalDataset::new(
        vec![
            Modality {
                name: MODALITY_A.into(),
                embeddings: a,
            },
            Modality {
                name: MODALITY_B.into(),
                embeddings: b,
            },
        ],
        records,
        provenance,
    )?;
    Ok(SynthData {
        dataset,
        ground_truth: spec.pattern.ground_truth(),
        log_risk,
        censoring_rate: mu,
        event_fraction: achieved,
    })
}
