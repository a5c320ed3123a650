//! One PASS/FAIL line per acceptance criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout. The
//! process fails if any criterion fails, except those listed in
//! `KNOWN_UNATTAINED`, which still print FAIL.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use coxplain::dataio::{Modality, MultimodalDataset, Provenance};
use coxplain::intershap::{
    decompose, evaluate_coalitions, shapley_interaction_index, CoalitionTable, Convention, Masker, MaskingStrategy,
};
use coxplain::models::{parameter_count, ArchitectureKind, ArchitectureSpec, Preset, TrainedModel};
use coxplain::numcore::rng;
use coxplain::stats::spearman;
use coxplain::survival::{
    brier_score, concordance_index, cox_nll, cox_nll_with_grad, kaplan_meier, BaselineSurvival, SurvivalRecord,
};
use coxplain::synthbench::{
    cv_stability, desk_hyperparams, generate, run_validation_suite, FittedModel, Pattern, SuiteConfig, SynthData, SynthSpec,
};
use coxplain::Matrix;

/// Criteria whose targets the desk-scale models do not reach; see README.
const KNOWN_UNATTAINED: &[u32] = &[2, 9];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn within(limit: Duration, start: Instant) -> (bool, String) {
    let t = start.elapsed();
    (t <= limit, format!("{:.1}s of {}s", t.as_secs_f64(), limit.as_secs()))
}

fn synth(pattern: Pattern) -> SynthData {
    generate(&SynthSpec::new(pattern)).expect("generator")
}

fn desk(kind: ArchitectureKind, dims: [usize; 2]) -> ArchitectureSpec {
    ArchitectureSpec::preset(kind, Preset::Desk, dims)
}

fn strategies(seed: u64) -> [MaskingStrategy; 3] {
    [MaskingStrategy::mean(), MaskingStrategy::shuffle(seed), MaskingStrategy::zero()]
}

/// Irregular two-modality data: shifted, skewed columns of unequal width.
fn lopsided(n: usize, seed: u64) -> MultimodalDataset {
    let mut r = rng::stream(seed, &[99]);
    let mut a = Matrix::zeros(n, 5);
    let mut b = Matrix::zeros(n, 11);
    for i in 0..n {
        for j in 0..5 {
            a.set(i, j, 3.0 + r.random_range(-1.0..4.0f64).powi(3));
        }
        for j in 0..11 {
            b.set(i, j, r.random_range(-10.0..0.5));
        }
    }
    let records = (0..n)
        .map(|i| SurvivalRecord::new(format!("q{i}"), r.random_range(0.5..90.0), r.random_bool(0.6)).unwrap())
        .collect();
    MultimodalDataset::new(
        vec![
            Modality { name: "a".into(), embeddings: a },
            Modality { name: "b".into(), embeddings: b },
        ],
        records,
        Provenance::default(),
    )
    .unwrap()
}

fn late_fusion_zero() -> Outcome {
    let start = Instant::now();
    let mut worst_patient = 0.0f64;
    let mut worst_global = 0.0f64;
    let mut cases = 0;
    let mut check = |model: &TrainedModel, reference: &MultimodalDataset, target: &MultimodalDataset| {
        for strategy in strategies(7) {
            let table = evaluate_coalitions(model, target, &Masker::fit(strategy, reference).unwrap()).unwrap();
            for convention in [Convention::Moebius, Convention::PaperEqs] {
                let r = coxplain::intershap::AuditReport::from_table(&table, strategy, convention, "late-linear").unwrap();
                worst_global = worst_global.max(r.global.interaction_percent.abs());
                for p in &r.patients {
                    for x in &p.interactions {
                        worst_patient = worst_patient.max(x.abs());
                    }
                }
                cases += 1;
            }
        }
    };
    for pattern in [Pattern::Uniqueness, Pattern::XorSynergy, Pattern::Redundancy] {
        let d = synth(pattern);
        let fit = FittedModel::fit(&d.dataset, &desk(ArchitectureKind::LateLinear, [16, 16]), &desk_hyperparams(), 42).unwrap();
        check(&fit.model, &d.dataset.subset(&fit.split.train), &d.dataset.subset(&fit.split.test));
    }
    let odd = lopsided(300, 5);
    let untrained = TrainedModel::build(&desk(ArchitectureKind::LateLinear, [5, 11]), 3).unwrap();
    check(&untrained, &odd, &odd);
    let (fast, time) = within(Duration::from_secs(10), start);
    outcome(
        worst_patient < 1e-12 && worst_global < 1e-10 && fast,
        format!("{cases} audits; max |interaction| {worst_patient:.1e}, max global {worst_global:.1e}%; {time}"),
    )
}

fn synthetic_suite() -> Outcome {
    let start = Instant::now();
    let report = run_validation_suite(&SuiteConfig::default()).unwrap();
    let (fast, time) = within(Duration::from_secs(300), start);
    let mut passed = fast;
    let mut parts = Vec::new();
    for name in ["uniqueness", "xor-early-mlp", "xor-bilinear", "redundancy"] {
        let c = report.check(name).unwrap();
        passed &= c.passed;
        let observed = c.observed.map_or("-".into(), |v| format!("{v:.2}%"));
        parts.push(format!(
            "{name} {observed} in [{}, {}] {}",
            c.expected_low,
            c.expected_high,
            if c.passed { "ok" } else { "MISS" }
        ));
    }
    outcome(passed, format!("{}; {time}", parts.join("; ")))
}

fn random_table(m: usize, patients: usize, seed: u64) -> CoalitionTable {
    let mut r = rng::stream(seed, &[m as u64]);
    let names = (0..m).map(|i| format!("m{i}")).collect();
    let ids = (0..patients).map(|p| format!("p{p}")).collect();
    let values = (0..patients << m).map(|_| r.random_range(-3.0..3.0)).collect();
    CoalitionTable::from_values(names, ids, values).unwrap()
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for (k, &x) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(k);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

/// SII by enumerating every order of the other players plus the merged
/// pair {i, j}; the coalition preceding the pair weights Δ_ij.
fn sii_brute_force(v: &[f64], m: usize, i: usize, j: usize) -> f64 {
    let pair = usize::MAX;
    let mut players: Vec<usize> = (0..m).filter(|&k| k != i && k != j).collect();
    players.push(pair);
    let orders = permutations(&players);
    let mut total = 0.0;
    for order in &orders {
        let mut s = 0usize;
        for &p in order {
            if p == pair {
                break;
            }
            s |= 1 << p;
        }
        let (bi, bj) = (1 << i, 1 << j);
        total += v[s | bi | bj] - v[s | bi] - v[s | bj] + v[s];
    }
    total / orders.len() as f64
}

fn inclusion_exclusion(v: &[f64], s: usize) -> f64 {
    let mut total = 0.0;
    for t in 0..=s {
        if t & !s == 0 {
            let sign = if (s.count_ones() - t.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
            total += sign * v[t];
        }
    }
    total
}

fn shapley_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst_sii = 0.0f64;
    let mut worst_m = 0.0f64;
    for seed in 0..100 {
        let t = random_table(3, 1, seed);
        let v = t.patient(0).to_vec();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let got = shapley_interaction_index(&t, i, j).unwrap()[0];
            worst_sii = worst_sii.max((got - sii_brute_force(&v, 3, i, j)).abs());
        }
        let d = decompose(&t, Convention::Moebius).unwrap();
        for i in 0..3 {
            worst_m = worst_m.max((d.mains[0][i] - inclusion_exclusion(&v, 1 << i)).abs());
        }
        for (k, &s) in d.interaction_subsets.iter().enumerate() {
            worst_m = worst_m.max((d.interactions[0][k] - inclusion_exclusion(&v, s)).abs());
        }
    }
    let (fast, time) = within(Duration::from_secs(5), start);
    outcome(
        worst_sii < 1e-10 && worst_m < 1e-10 && fast,
        format!("100 tables; SII err {worst_sii:.1e}, moebius err {worst_m:.1e}; {time}"),
    )
}

fn two_modality_consistency() -> Outcome {
    let t = random_table(2, 1000, 4242);
    let sii = shapley_interaction_index(&t, 0, 1).unwrap();
    let eqs = decompose(&t, Convention::PaperEqs).unwrap();
    let mob = decompose(&t, Convention::Moebius).unwrap();
    let mut worst = 0.0f64;
    for p in 0..t.patients() {
        let phi = eqs.interactions[p][0];
        let m = mob.interactions[p][0];
        worst = worst.max((sii[p] - 2.0 * phi).abs()).max((sii[p] - m).abs());
    }
    outcome(worst < 1e-10, format!("1000 tables; max |ψ − 2φ|, |ψ − m| = {worst:.1e}"))
}

fn efficiency() -> Outcome {
    let d = synth(Pattern::XorSynergy);
    let fit = FittedModel::fit(&d.dataset, &desk(ArchitectureKind::LateLinear, [16, 16]), &desk_hyperparams(), 42).unwrap();
    let (train, test) = (d.dataset.subset(&fit.split.train), d.dataset.subset(&fit.split.test));
    let mut worst = 0.0f64;
    let mut patients = 0;
    for kind in ArchitectureKind::ALL {
        let model = TrainedModel::build(&desk(kind, [16, 16]), 11).unwrap();
        for strategy in strategies(3) {
            let table = evaluate_coalitions(&model, &test, &Masker::fit(strategy, &train).unwrap()).unwrap();
            let eqs = decompose(&table, Convention::PaperEqs).unwrap();
            let mob = decompose(&table, Convention::Moebius).unwrap();
            for p in 0..table.patients() {
                let gap = table.value(p, table.full()) - table.value(p, 0);
                let phi: f64 = eqs.mains[p].iter().sum();
                let m: f64 = mob.mains[p].iter().sum::<f64>() + mob.interactions[p].iter().sum::<f64>();
                worst = worst.max((phi - gap).abs()).max((m - gap).abs());
                patients += 1;
            }
        }
    }
    outcome(worst < 1e-10, format!("{patients} audited patients, 7 architectures, 3 maskings; max error {worst:.1e}"))
}

fn relative_error(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs()).max(1e-4)
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(2718, &[0]);
    let n = 48;
    let records: Vec<SurvivalRecord> = (0..n)
        .map(|i| SurvivalRecord::new(format!("g{i}"), r.random_range(1..30) as f64, r.random_bool(0.7)).unwrap())
        .collect();

    let mut worst_cox = 0.0f64;
    let scores: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    let (_, grad) = cox_nll_with_grad(&scores, &records).unwrap();
    for k in 0..n {
        let h = 1e-6;
        let mut s = scores.clone();
        s[k] += h;
        let up = cox_nll(&s, &records).unwrap();
        s[k] -= 2.0 * h;
        let down = cox_nll(&s, &records).unwrap();
        worst_cox = worst_cox.max(relative_error((up - down) / (2.0 * h), grad[k]));
    }

    let normal = |rows: usize, cols: usize, r: &mut rng::StreamRng| {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.sample(rand_distr::StandardNormal)).collect()).unwrap()
    };
    let (a, b) = (normal(n, 16, &mut r), normal(n, 16, &mut r));
    let events = records.iter().filter(|x| x.event).count() as f64;
    let mut worst_arch: BTreeMap<ArchitectureKind, f64> = BTreeMap::new();
    for kind in ArchitectureKind::ALL {
        let mut model = TrainedModel::build(&desk(kind, [16, 16]), 5).unwrap();
        let (_, grad) = model.cox_loss_gradient(&a, &b, &records).unwrap();
        let flat = model.flat_params();
        let mut worst = 0.0f64;
        for _ in 0..40 {
            let k = r.random_range(0..flat.len());
            let h = 1e-6 * flat[k].abs().max(1.0);
            let mut loss_at = |x: f64| {
                let mut p = flat.clone();
                p[k] = x;
                model.set_flat(&p).unwrap();
                cox_nll(&model.predict(&a, &b).unwrap(), &records).unwrap() / events
            };
            let fd = (loss_at(flat[k] + h) - loss_at(flat[k] - h)) / (2.0 * h);
            worst = worst.max(relative_error(fd, grad[k]));
        }
        worst_arch.insert(kind, worst);
    }
    let (fast, time) = within(Duration::from_secs(30), start);
    let max_arch = worst_arch.values().copied().fold(0.0, f64::max);
    let per: Vec<String> = worst_arch.iter().map(|(k, e)| format!("{k} {e:.1e}")).collect();
    outcome(
        worst_cox < 1e-5 && max_arch < 1e-5 && fast,
        format!("cox {worst_cox:.1e}; {}; {time}", per.join(", ")),
    )
}

fn metric_sanity() -> Outcome {
    let rec = |rows: &[(f64, bool)]| -> Vec<SurvivalRecord> {
        rows.iter()
            .enumerate()
            .map(|(i, &(t, e))| SurvivalRecord::new(format!("k{i}"), t, e).unwrap())
            .collect()
    };
    let mut notes = Vec::new();
    let mut ok = true;

    let deaths = rec(&(1..=10).map(|t| (t as f64, true)).collect::<Vec<_>>());
    let perfect: Vec<f64> = deaths.iter().map(|r| -r.time).collect();
    let c = concordance_index(&perfect, &deaths).unwrap();
    let tied = concordance_index(&[0.3; 10], &deaths).unwrap();
    ok &= c == 1.0 && tied == 0.5;
    notes.push(format!("C perfect {c}, tied {tied}"));

    let baseline = BaselineSurvival {
        times: (1..=10).map(|t| t as f64).collect(),
        cumulative_hazard: (1..=10).map(|t| 0.1 * t as f64).collect(),
    };
    let horizon = 5.5;
    let oracle: Vec<f64> = deaths.iter().map(|r| if r.time <= horizon { 800.0 } else { -800.0 }).collect();
    let brier = brier_score(&oracle, &deaths, &baseline, horizon).unwrap().value;
    ok &= brier == 0.0;
    notes.push(format!("Brier {brier}"));

    let (km, median) = kaplan_meier(&rec(&[(1.0, true), (2.0, false), (3.0, true), (4.0, true)]));
    let censored = km.survival == vec![0.75, 0.375, 0.0] && median == Some(3.0);
    let (km, median) = kaplan_meier(&rec(&[(2.0, true), (2.0, true), (3.0, false), (5.0, true)]));
    let tied_deaths = km.survival == vec![0.5, 0.0] && km.at_risk == vec![4, 1] && median == Some(2.0);
    ok &= censored && tied_deaths;
    notes.push(format!("KM censored case {censored}, tied deaths {tied_deaths}"));
    outcome(ok, notes.join("; "))
}

fn parameter_counts() -> Outcome {
    let early = parameter_count(&ArchitectureSpec::paper(ArchitectureKind::EarlyMlp)).unwrap();
    let layers = 4096 * 2048 + 2048 + 2048 * 200 + 200 + 200 + 1;
    let bil = coxplain::models::build_graph(&ArchitectureSpec::paper(ArchitectureKind::Bilinear)).unwrap();
    let core: usize = bil
        .graph
        .params()
        .iter()
        .filter(|d| d.name.starts_with("bilinear."))
        .map(|d| d.rows * d.cols)
        .sum();
    outcome(
        early == layers && early == 8_800_657 && core == 262_144,
        format!(
            "early-mlp {early} (4096·2048+2048 + 2048·200+200 + 200+1 = {layers}; the quoted 8,800,969 does not follow from these layers); bilinear core {core}"
        ),
    )
}

fn masking_inflation() -> Outcome {
    let d = synth(Pattern::Uniqueness);
    let fit = FittedModel::fit(&d.dataset, &desk(ArchitectureKind::EarlyMlp, [16, 16]), &desk_hyperparams(), 42).unwrap();
    let percent = |s| fit.audit(&d.dataset, s, Convention::Moebius).unwrap().global.interaction_percent;
    let zero = percent(MaskingStrategy::zero());
    let mean = percent(MaskingStrategy::mean());
    outcome(zero >= mean, format!("early-mlp on uniqueness: zero {zero:.3}%, mean {mean:.3}%"))
}

fn cv() -> Outcome {
    let d = synth(Pattern::Redundancy);
    let s = cv_stability(&d.dataset, &desk(ArchitectureKind::EarlyMlp, [16, 16]), 10, &desk_hyperparams(), 42).unwrap();
    outcome(
        s.coefficient_of_variation < 0.25,
        format!(
            "10 folds: mean {:.2}%, sd {:.2}, CV {:.1}%",
            s.mean,
            s.sd,
            100.0 * s.coefficient_of_variation
        ),
    )
}

fn table_spearman() -> Outcome {
    let rho = spearman(&[0.636, 0.814, 0.819, 0.807], &[4.82, 3.03, 3.72, 4.45]).unwrap();
    outcome(rho == -0.8, format!("rho = {rho}"))
}

fn coxplain(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_coxplain"))
        .current_dir(dir)
        .args(args)
        .args(["--seed", "7", "--threads", "1"])
        .env_remove("COXPLAIN_THREADS")
        .output()
        .expect("spawn coxplain");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn cli_determinism() -> Outcome {
    let script: &[&[&str]] = &[
        &["synth", "--pattern", "xor", "--n", "600", "--out", "ds"],
        &["train", "--data", "ds", "--arch", "early-mlp", "--out", "mlp"],
        &["train", "--data", "ds", "--arch", "bilinear", "--out", "bil"],
        &["train", "--data", "ds", "--arch", "late-linear", "--out", "late"],
        &["audit", "--model", "mlp", "--data", "ds", "--masking", "mean", "--out", "a_mlp"],
        &["audit", "--model", "mlp", "--data", "ds", "--masking", "shuffle", "--out", "a_shuffle"],
        &["audit", "--model", "mlp", "--data", "ds", "--masking", "zero", "--convention", "paper-eqs", "--out", "a_zero"],
        &["audit", "--model", "bil", "--data", "ds", "--out", "a_bil"],
        &["audit", "--model", "late", "--data", "ds", "--out", "a_late"],
        &[
            "compare", "--audit", "a_mlp/audit.json", "--audit", "a_bil/audit.json", "--audit", "a_late/audit.json",
            "--metrics", "mlp/metrics.json", "--metrics", "bil/metrics.json", "--metrics", "late/metrics.json", "--out", "cmp",
        ],
        &["validate", "--only", "late-fusion-zero", "--n", "600", "--out", "val"],
    ];
    let runs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for dir in &runs {
        for args in script {
            let (code, err) = coxplain(dir.path(), args);
            if code != 0 {
                return outcome(false, format!("`coxplain {}` exited {code}: {}", args.join(" "), err.trim()));
            }
        }
    }
    let (x, y) = (files(runs[0].path()), files(runs[1].path()));
    let reports = x.keys().filter(|k| k.ends_with(".json") || k.ends_with(".csv")).count();
    let differing: Vec<&String> = x.keys().filter(|k| y.get(*k) != x.get(*k)).collect();
    outcome(
        x.len() == y.len() && differing.is_empty() && reports > 0,
        format!(
            "{} commands twice; {} files ({reports} JSON/CSV) compared, {} differ {:?}",
            script.len(),
            x.len(),
            differing.len(),
            differing
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 12] = [
        (1, "late-fusion zero-check", late_fusion_zero),
        (2, "synthetic suite", synthetic_suite),
        (3, "Shapley oracle equivalence", shapley_oracle),
        (4, "two-modality consistency", two_modality_consistency),
        (5, "efficiency and completeness", efficiency),
        (6, "gradient correctness", gradients),
        (7, "metric sanity", metric_sanity),
        (8, "parameter counts", parameter_counts),
        (9, "masking inflation direction", masking_inflation),
        (10, "cross-validation stability", cv),
        (11, "Spearman reproduction", table_spearman),
        (12, "CLI determinism", cli_determinism),
    ];
    let mut unexpected = Vec::new();
    let mut failed = 0;
    for (id, name, run) in criteria {
        let o = run();
        println!("{} {id:>2} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        if !o.passed {
            failed += 1;
            if !KNOWN_UNATTAINED.contains(&id) {
                unexpected.push(id);
            }
        }
    }
    println!("{} of 12 criteria pass", 12 - failed);
    for id in KNOWN_UNATTAINED {
        println!("criterion {id} is listed as unattained at desk scale");
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
