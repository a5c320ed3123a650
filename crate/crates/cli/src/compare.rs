use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use serde_json::json;

use coxplain::dataio::json;
use coxplain::intershap::AuditReport;
use coxplain::stats::{bootstrap_diff, spearman, BootstrapResult, DEFAULT_BOOTSTRAP_ITERATIONS};

use crate::metrics::Metrics;
use crate::{CliResult, Context, Failure};

#[derive(Args, Debug, Serialize)]
pub struct CompareArgs {
    /// Audit report JSON (repeat for each model, at least two).
    #[arg(long = "audit", required = true)]
    audits: Vec<PathBuf>,
    /// Metrics JSON from `train`, one per audit and in the same order.
    #[arg(long = "metrics")]
    metrics: Vec<PathBuf>,
    /// Row names, one per audit; defaults to the audited architecture.
    #[arg(long = "label")]
    labels: Vec<String>,
    /// Label of the reference row; defaults to the first audit.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_ITERATIONS)]
    iterations: usize,
}

#[derive(Debug, Serialize)]
struct Row {
    label: String,
    model: String,
    #[serde(serialize_with = "json::opt::serialize")]
    test_cindex: Option<f64>,
    #[serde(serialize_with = "json::serialize")]
    interaction_percent: f64,
    /// This row minus the baseline; absent on the baseline itself.
    delta: Option<BootstrapResult>,
}

#[derive(Debug, Serialize)]
struct Comparison {
    baseline: String,
    patients: usize,
    rows: Vec<Row>,
    /// Rank correlation of test C-index against global InterSHAP.
    #[serde(serialize_with = "json::opt::serialize")]
    spearman_rho: Option<f64>,
    spearman_note: Option<String>,
}

fn labels(a: &CompareArgs, reports: &[AuditReport]) -> CliResult<Vec<String>> {
    if !a.labels.is_empty() {
        if a.labels.len() != reports.len() {
            return Err(Failure::Usage(format!("{} labels for {} audits", a.labels.len(), reports.len())));
        }
        return Ok(a.labels.clone());
    }
    let mut out: Vec<String> = Vec::new();
    for r in reports {
        let base = r.metadata.model.clone();
        let mut name = base.clone();
        let mut k = 2;
        while out.contains(&name) {
            name = format!("{base}#{k}");
            k += 1;
        }
        out.push(name);
    }
    Ok(out)
}

pub fn run(ctx: &Context, a: &CompareArgs) -> CliResult<()> {
    if a.audits.len() < 2 {
        return Err(Failure::Usage("compare needs at least two --audit reports".into()));
    }
    if !a.metrics.is_empty() && a.metrics.len() != a.audits.len() {
        return Err(Failure::Usage(format!("{} --metrics files for {} --audit reports", a.metrics.len(), a.audits.len())));
    }
    let reports = a.audits.iter().map(|p| AuditReport::read(p)).collect::<coxplain::Result<Vec<_>>>()?;
    let metrics: Vec<Metrics> = a.metrics.iter().map(|p| json::read(p)).collect::<coxplain::Result<_>>()?;
    let labels = labels(a, &reports)?;
    let baseline = a.baseline.clone().unwrap_or_else(|| labels[0].clone());
    let b = labels
        .iter()
        .position(|l| *l == baseline)
        .ok_or_else(|| Failure::Usage(format!("baseline `{baseline}` is not among {}", labels.join(", "))))?;
    ctx.write_config("compare", a, json!({ "baseline": baseline, "labels": labels }))?;

    let ids = |r: &AuditReport| r.patients.iter().map(|p| p.patient_id.clone()).collect::<Vec<_>>();
    let base_ids = ids(&reports[b]);
    for (r, l) in reports.iter().zip(&labels) {
        if ids(r) != base_ids {
            return Err(Failure::Usage(format!(
                "`{l}` was audited on a different patient set than `{baseline}`; the paired bootstrap needs the same patients in the same order"
            )));
        }
    }

    let base_shares = reports[b].shares();
    let mut rows = Vec::new();
    for (i, (r, label)) in reports.iter().zip(&labels).enumerate() {
        let delta = if i == b {
            None
        } else {
            Some(bootstrap_diff(&r.shares(), &base_shares, a.iterations, ctx.seed)?)
        };
        rows.push(Row {
            label: label.clone(),
            model: r.metadata.model.clone(),
            test_cindex: metrics.get(i).map(|m| m.test_cindex),
            interaction_percent: r.global.interaction_percent,
            delta,
        });
    }

    let (spearman_rho, spearman_note) = if metrics.is_empty() {
        (None, Some("no metrics supplied".to_string()))
    } else {
        let c: Vec<f64> = rows.iter().filter_map(|r| r.test_cindex).collect();
        let s: Vec<f64> = rows.iter().map(|r| r.interaction_percent).collect();
        match spearman(&c, &s) {
            Ok(rho) => (Some(rho), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let cmp = Comparison {
        baseline,
        patients: base_ids.len(),
        rows,
        spearman_rho,
        spearman_note,
    };
    let text = table(&cmp);
    json::write(&ctx.out.join("compare.json"), &cmp)?;
    fs::write(ctx.out.join("compare.txt"), &text).map_err(|e| Failure::Usage(e.to_string()))?;
    print!("{text}");
    Ok(())
}

fn table(c: &Comparison) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20} {:>8} {:>12}  {:<34} {:>7}",
        "model",
        "C-index",
        "InterSHAP %",
        format!("Δ vs {} (95% CI)", c.baseline),
        "p"
    );
    for r in &c.rows {
        let cindex = r.test_cindex.map_or("-".into(), |v| format!("{v:.3}"));
        let (delta, p) = match &r.delta {
            None => ("(baseline)".to_string(), String::new()),
            Some(d) => (
                format!("{:+.2} ({:+.2}, {:+.2})", d.estimate, d.ci_low, d.ci_high),
                format!("{:.3}", d.p_value),
            ),
        };
        let _ = writeln!(out, "{:<20} {:>8} {:>12.2}  {:<34} {:>7}", r.label, cindex, r.interaction_percent, delta, p);
    }
    let _ = match (c.spearman_rho, &c.spearman_note) {
        (Some(rho), _) => writeln!(out, "Spearman rho (C-index vs InterSHAP, n={}): {rho:.2}", c.rows.len()),
        (None, Some(note)) => writeln!(out, "Spearman rho: not computed ({note})"),
        (None, None) => Ok(()),
    };
    let _ = writeln!(out, "paired bootstrap over {} patients", c.patients);
    out
}
