use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate, Pattern, SynthData, SynthSpec, MODALITY_A, MODALITY_B};
use crate::dataio::{json, split_indices, MultimodalDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::intershap::{audit, evaluate_coalitions, AuditReport, Convention, Masker, MaskingStrategy};
use crate::models::{train, ArchitectureKind, ArchitectureSpec, Hyperparams, Preset, TrainedModel};
use crate::survival::concordance_index;

/// Train / validation / test indices into one dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreeWaySplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified holdout of `test_fraction`, then a stratified holdout of the
/// same fraction of the remainder for validation.
pub fn three_way_split(dataset: &MultimodalDataset, test_fraction: f64, seed: u64) -> Result<ThreeWaySplit> {
    let events: Vec<bool> = dataset.records().iter().map(|r| r.event).collect();
    let outer = split_indices(&events, &SplitSpec::holdout(test_fraction, seed))?.remove(0);
    let inner_events: Vec<bool> = outer.train.iter().map(|&i| events[i]).collect();
    let inner = split_indices(&inner_events, &SplitSpec::holdout(test_fraction, seed.wrapping_add(1)))?.remove(0);
    Ok(ThreeWaySplit {
        train: inner.train.iter().map(|&k| outer.train[k]).collect(),
        val: inner.test.iter().map(|&k| outer.train[k]).collect(),
        test: outer.test,
    })
}

/// A model trained on the train part of a [`ThreeWaySplit`].
#[derive(Clone, Debug)]
pub struct FittedModel {
    pub model: TrainedModel,
    pub split: ThreeWaySplit,
    pub test_cindex: f64,
}

impl FittedModel {
    pub fn fit(dataset: &MultimodalDataset, spec: &ArchitectureSpec, hyper: &Hyperparams, seed: u64) -> Result<Self> {
        let split = three_way_split(dataset, 0.2, seed)?;
        let model = train(spec, dataset, &split.train, &split.val, hyper, seed)?;
        let test = dataset.subset(&split.test);
        let emb = test.embeddings();
        let scores = model.predict(emb[0], emb[1])?;
        let test_cindex = concordance_index(&scores, test.records())?;
        Ok(FittedModel {
            model,
            split,
            test_cindex,
        })
    }

    /// Audits the test part with masking references from the train part.
    pub fn audit(&self, dataset: &MultimodalDataset, strategy: MaskingStrategy, convention: Convention) -> Result<AuditReport> {
        let masker = Masker::fit(strategy, &dataset.subset(&self.split.train))?;
        audit(&self.model, &dataset.subset(&self.split.test), &masker, convention, self.model.spec.kind.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckGroup {
    LateFusionZero,
    Uniqueness,
    Xor,
    Redundancy,
    ContributionBounds,
}

impl CheckGroup {
    pub const ALL: [CheckGroup; 5] = [
        CheckGroup::LateFusionZero,
        CheckGroup::Uniqueness,
        CheckGroup::Xor,
        CheckGroup::Redundancy,
        CheckGroup::ContributionBounds,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckGroup::LateFusionZero => "late-fusion-zero",
            CheckGroup::Uniqueness => "uniqueness",
            CheckGroup::Xor => "xor",
            CheckGroup::Redundancy => "redundancy",
            CheckGroup::ContributionBounds => "contribution-bounds",
        }
    }
}

impl FromStr for CheckGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = CheckGroup::ALL.iter().map(|g| g.as_str()).collect();
                Error::invalid(format!("unknown check `{s}` ({})", names.join(" | ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub n: usize,
    pub dims: usize,
    pub beta: f64,
    pub sigma: f64,
    pub event_fraction: f64,
    /// Seeds both the generators and the training runs.
    pub seed: u64,
    pub hyperparams: Hyperparams,
    pub checks: Vec<CheckGroup>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            n: 2000,
            dims: 16,
            beta: 2.0,
            sigma: 0.3,
            event_fraction: 0.65,
            seed: 42,
            hyperparams: desk_hyperparams(),
            checks: CheckGroup::ALL.to_vec(),
        }
    }
}

/// Training settings for desk-scale synthetic runs.
pub fn desk_hyperparams() -> Hyperparams {
    Hyperparams {
        lr: 1e-3,
        ..Hyperparams::default()
    }
}

impl SuiteConfig {
    fn synth(&self, pattern: Pattern) -> SynthSpec {
        SynthSpec {
            pattern,
            n: self.n,
            dims: self.dims,
            beta: self.beta,
            event_fraction: self.event_fraction,
            sigma: self.sigma,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub group: CheckGroup,
    #[serde(serialize_with = "json::serialize")]
    pub expected_low: f64,
    #[serde(serialize_with = "json::serialize")]
    pub expected_high: f64,
    /// `None` when the run failed before producing a value.
    #[serde(serialize_with = "json::opt::serialize")]
    pub observed: Option<f64>,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn measured(name: &str, group: CheckGroup, low: f64, high: f64, observed: f64, detail: String) -> Self {
        CheckResult {
            name: name.into(),
            group,
            expected_low: low,
            expected_high: high,
            observed: Some(observed),
            passed: observed >= low && observed <= high,
            detail,
        }
    }

    fn failed(name: &str, group: CheckGroup, low: f64, high: f64, err: impl std::fmt::Display) -> Self {
        CheckResult {
            name: name.into(),
            group,
            expected_low: low,
            expected_high: high,
            observed: None,
            passed: false,
            detail: err.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl SuiteReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        json::to_string(self)
    }

    /// Plain-text table, one row per check.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<34} {:>24} {:>14}  result", "check", "expected", "observed");
        for c in &self.checks {
            let observed = c.observed.map_or("-".to_string(), |v| format!("{v:.4e}"));
            let _ = writeln!(
                out,
                "{:<34} {:>24} {:>14}  {}",
                c.name,
                format!("[{}, {}]", c.expected_low, c.expected_high),
                observed,
                if c.passed { "PASS" } else { "FAIL" }
            );
            if !c.passed && !c.detail.is_empty() {
                let _ = writeln!(out, "    {}", c.detail);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Job {
    Fit(Pattern, ArchitectureKind),
}

fn spec_for(kind: ArchitectureKind, dims: usize) -> ArchitectureSpec {
    ArchitectureSpec::preset(kind, Preset::Desk, [dims, dims])
}

fn late_fusion_checks(data: &SynthData, fit: &FittedModel) -> Result<Vec<CheckResult>> {
    let g = CheckGroup::LateFusionZero;
    let mut worst_global = 0.0f64;
    let mut worst_term = 0.0f64;
    let train = data.dataset.subset(&fit.split.train);
    let test = data.dataset.subset(&fit.split.test);
    for strategy in [MaskingStrategy::mean(), MaskingStrategy::shuffle(fit.model.seed), MaskingStrategy::zero()] {
        let table = evaluate_coalitions(&fit.model, &test, &Masker::fit(strategy, &train)?)?;
        for convention in [Convention::Moebius, Convention::PaperEqs] {
            let r = AuditReport::from_table(&table, strategy, convention, "late-linear")?;
            worst_global = worst_global.max(r.global.interaction_percent);
            for row in &r.patients {
                for x in &row.interactions {
                    worst_term = worst_term.max(x.abs());
                }
            }
        }
    }
    let detail = "late-linear on xor-synergy data; mean, shuffle and zero masking; both conventions".to_string();
    Ok(vec![
        CheckResult::measured("late-fusion-zero", g, 0.0, 1e-10, worst_global, detail.clone()),
        CheckResult::measured("late-fusion-zero-per-patient", g, 0.0, 1e-12, worst_term, detail),
    ])
}

fn mean_moebius(data: &SynthData, fit: &FittedModel) -> Result<AuditReport> {
    fit.audit(&data.dataset, MaskingStrategy::mean(), Convention::Moebius)
}

fn fit_detail(fit: &FittedModel) -> String {
    format!(
        "{}: test C-index {:.3}, {} epochs",
        fit.model.spec.kind, fit.test_cindex, fit.model.epochs_run
    )
}

/// Generates each pattern, trains the designated models, audits the test
/// split (mean masking, moebius convention) and checks against the expected
/// ranges. Training or audit errors become failed checks.
pub fn run_validation_suite(config: &SuiteConfig) -> Result<SuiteReport> {
    let wants = |g: CheckGroup| config.checks.contains(&g);
    let mut patterns = Vec::new();
    let mut jobs = Vec::new();
    if wants(CheckGroup::LateFusionZero) {
        jobs.push(Job::Fit(Pattern::XorSynergy, ArchitectureKind::LateLinear));
    }
    if wants(CheckGroup::Uniqueness) {
        jobs.push(Job::Fit(Pattern::Uniqueness, ArchitectureKind::EarlyMlp));
    }
    if wants(CheckGroup::Xor) {
        jobs.push(Job::Fit(Pattern::XorSynergy, ArchitectureKind::EarlyMlp));
        jobs.push(Job::Fit(Pattern::XorSynergy, ArchitectureKind::Bilinear));
    }
    if wants(CheckGroup::Redundancy) || wants(CheckGroup::ContributionBounds) {
        jobs.push(Job::Fit(Pattern::Redundancy, ArchitectureKind::EarlyMlp));
    }
    for Job::Fit(p, _) in &jobs {
        if !patterns.contains(p) {
            patterns.push(*p);
        }
    }

    let data: BTreeMap<Pattern, SynthData> = patterns
        .iter()
        .map(|&p| generate(&config.synth(p)).map(|d| (p, d)))
        .collect::<Result<_>>()?;
    let fits: BTreeMap<Job, Result<FittedModel>> = jobs
        .par_iter()
        .map(|&job| {
            let Job::Fit(p, kind) = job;
            let fit = FittedModel::fit(&data[&p].dataset, &spec_for(kind, config.dims), &config.hyperparams, config.seed);
            (job, fit)
        })
        .collect();
    let fitted = |p, k| fits[&Job::Fit(p, k)].as_ref().map_err(|e| e.to_string());

    let mut checks = Vec::new();
    for group in CheckGroup::ALL.into_iter().filter(|&g| wants(g)) {
        match group {
            CheckGroup::LateFusionZero => {
                let d = &data[&Pattern::XorSynergy];
                let res = fitted(Pattern::XorSynergy, ArchitectureKind::LateLinear)
                    .and_then(|fit| late_fusion_checks(d, fit).map_err(|e| e.to_string()));
                match res {
                    Ok(c) => checks.extend(c),
                    Err(e) => checks.push(CheckResult::failed("late-fusion-zero", group, 0.0, 1e-10, e)),
                }
            }
            CheckGroup::Uniqueness => {
                let gt = Pattern::Uniqueness.ground_truth();
                let d = &data[&Pattern::Uniqueness];
                let res = fitted(Pattern::Uniqueness, ArchitectureKind::EarlyMlp)
                    .and_then(|fit| mean_moebius(d, fit).map(|r| (fit, r)).map_err(|e| e.to_string()));
                match res {
                    Ok((fit, r)) => {
                        checks.push(CheckResult::measured(
                            "uniqueness",
                            group,
                            gt.low,
                            gt.high,
                            r.global.interaction_percent,
                            fit_detail(fit),
                        ));
                        checks.push(CheckResult::measured(
                            "uniqueness-noise-contribution",
                            group,
                            0.0,
                            15.0,
                            r.contribution(MODALITY_B).unwrap_or(f64::NAN),
                            fit_detail(fit),
                        ));
                    }
                    Err(e) => checks.push(CheckResult::failed("uniqueness", group, gt.low, gt.high, e)),
                }
            }
            CheckGroup::Xor => {
                let gt = Pattern::XorSynergy.ground_truth();
                let d = &data[&Pattern::XorSynergy];
                for (name, kind) in [("xor-early-mlp", ArchitectureKind::EarlyMlp), ("xor-bilinear", ArchitectureKind::Bilinear)] {
                    let res = fitted(Pattern::XorSynergy, kind)
                        .and_then(|fit| mean_moebius(d, fit).map(|r| (fit, r)).map_err(|e| e.to_string()));
                    checks.push(match res {
                        Ok((fit, r)) => CheckResult::measured(name, group, gt.low, gt.high, r.global.interaction_percent, fit_detail(fit)),
                        Err(e) => CheckResult::failed(name, group, gt.low, gt.high, e),
                    });
                }
            }
            CheckGroup::Redundancy | CheckGroup::ContributionBounds => {
                let gt = Pattern::Redundancy.ground_truth();
                let d = &data[&Pattern::Redundancy];
                let res = fitted(Pattern::Redundancy, ArchitectureKind::EarlyMlp)
                    .and_then(|fit| mean_moebius(d, fit).map(|r| (fit, r)).map_err(|e| e.to_string()));
                let (name, low, high) = if group == CheckGroup::Redundancy {
                    ("redundancy", gt.low, gt.high)
                } else {
                    ("contribution-bounds", 15.0, 100.0)
                };
                checks.push(match res {
                    Ok((fit, r)) if group == CheckGroup::Redundancy => {
                        CheckResult::measured(name, group, low, high, r.global.interaction_percent, fit_detail(fit))
                    }
                    Ok((fit, r)) => {
                        let ca = r.contribution(MODALITY_A).unwrap_or(f64::NAN);
                        let cb = r.contribution(MODALITY_B).unwrap_or(f64::NAN);
                        let detail = format!("{}; contributions a {ca:.2}%, b {cb:.2}%", fit_detail(fit));
                        CheckResult::measured(name, group, low, high, ca.min(cb), detail)
                    }
                    Err(e) => CheckResult::failed(name, group, low, high, e),
                });
            }
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(SuiteReport {
        config: config.clone(),
        checks,
        passed,
    })
}
