mod compare;
mod metrics;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use coxplain::dataio::{self, load_dataset, save_dataset};
use coxplain::intershap::{audit, Convention, Masker, MaskingKind, MaskingStrategy};
use coxplain::models::{load_checkpoint, save_checkpoint, train, ArchitectureKind, ArchitectureSpec, Hyperparams, Preset};
use coxplain::synthbench::{desk_hyperparams, generate, run_validation_suite, three_way_split, CheckGroup, Pattern, SuiteConfig, SynthSpec, ThreeWaySplit};
use coxplain::Error;

#[derive(Parser, Debug)]
#[command(name = "coxplain", version, about = "Multimodal Cox survival models and cross-modal interaction audits")]
struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Worker threads (falls back to COXPLAIN_THREADS, then all cores).
    #[arg(long, global = true, env = "COXPLAIN_THREADS")]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cohort with known interaction structure.
    Synth(SynthArgs),
    /// Train a risk model and write a checkpoint with held-out metrics.
    Train(TrainArgs),
    /// Decompose a trained model's predictions into modality and interaction terms.
    Audit(AuditArgs),
    /// Run the synthetic validation suite.
    Validate(ValidateArgs),
    /// Compare audit reports against a baseline.
    Compare(compare::CompareArgs),
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    /// uniqueness | xor | redundancy
    #[arg(long)]
    pattern: Pattern,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 16)]
    dims: usize,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.65)]
    event_fraction: f64,
    /// Noise on the redundant copy.
    #[arg(long, default_value_t = 0.3)]
    sigma: f64,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    arch: ArchitectureKind,
    #[arg(long, default_value = "desk")]
    preset: Preset,
    /// Defaults to 1e-3 for the desk preset and 1e-4 for the paper preset.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Horizon of the reported Brier score, in months.
    #[arg(long, default_value_t = 60.0)]
    brier_months: f64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum PatientSet {
    Test,
    All,
}

#[derive(Args, Debug, Serialize)]
struct AuditArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// mean | shuffle | zero
    #[arg(long, default_value = "mean")]
    masking: MaskingKind,
    /// moebius | paper-eqs
    #[arg(long, default_value = "moebius")]
    convention: Convention,
    /// Donor draws per patient under shuffle masking.
    #[arg(long, default_value_t = MaskingStrategy::DEFAULT_REPLICATES)]
    replicates: usize,
    /// Patients to audit; masking references always come from the training split.
    #[arg(long, value_enum, default_value = "test")]
    patients: PatientSet,
}

#[derive(Args, Debug, Serialize)]
struct ValidateArgs {
    /// Run only these check groups (repeatable).
    #[arg(long)]
    only: Vec<CheckGroup>,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 16)]
    dims: usize,
}

#[derive(Debug)]
enum Failure {
    /// Bad flags or inputs.
    Usage(String),
    /// The command ran but what it checks did not hold, or training broke down.
    Failed(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. } => Failure::Failed(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Failed(msg)) => {
            eprintln!("coxplain: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("coxplain: error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let out = cli
        .out
        .clone()
        .ok_or_else(|| Failure::Usage("--out <DIR> is required".into()))?;
    if cli.threads == Some(0) {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| Failure::Usage(e.to_string()))?;
    pool.install(|| {
        fs::create_dir_all(&out).map_err(|e| Failure::Usage(format!("{}: {e}", out.display())))?;
        let ctx = Context {
            seed: cli.seed,
            threads: rayon::current_num_threads(),
            out,
        };
        match &cli.command {
            Command::Synth(a) => synth(&ctx, a),
            Command::Train(a) => train_cmd(&ctx, a),
            Command::Audit(a) => audit_cmd(&ctx, a),
            Command::Validate(a) => validate(&ctx, a),
            Command::Compare(a) => compare::run(&ctx, a),
        }
    })
}

pub(crate) struct Context {
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
}

impl Context {
    /// Echoes the resolved settings of a run into `config.json`.
    pub fn write_config(&self, command: &str, args: &impl Serialize, resolved: serde_json::Value) -> CliResult<()> {
        let config = json!({
            "command": command,
            "seed": self.seed,
            "threads": self.threads,
            "out": self.out,
            "args": args,
            "resolved": resolved,
        });
        Ok(dataio::json::write(&self.out.join("config.json"), &config)?)
    }
}

fn synth(ctx: &Context, a: &SynthArgs) -> CliResult<()> {
    let spec = SynthSpec {
        pattern: a.pattern,
        n: a.n,
        dims: a.dims,
        beta: a.beta,
        event_fraction: a.event_fraction,
        sigma: a.sigma,
        seed: ctx.seed,
    };
    spec.validate()?;
    ctx.write_config("synth", a, json!({ "spec": spec, "ground_truth": spec.pattern.ground_truth() }))?;
    let data = generate(&spec)?;
    save_dataset(&data.dataset, &ctx.out)?;
    println!(
        "{} patients, event fraction {:.4} (target {}), censoring rate {:.6}",
        data.dataset.len(),
        data.event_fraction,
        spec.event_fraction,
        data.censoring_rate
    );
    Ok(())
}

fn hyperparams(a: &TrainArgs) -> Hyperparams {
    let base = match a.preset {
        Preset::Desk => desk_hyperparams(),
        Preset::Paper => Hyperparams::default(),
    };
    Hyperparams {
        lr: a.lr.unwrap_or(base.lr),
        weight_decay: a.weight_decay.unwrap_or(base.weight_decay),
        batch_size: a.batch_size.or(base.batch_size),
        max_epochs: a.max_epochs.unwrap_or(base.max_epochs),
        patience: a.patience.unwrap_or(base.patience),
    }
}

fn train_cmd(ctx: &Context, a: &TrainArgs) -> CliResult<()> {
    let dataset = load_dataset(&a.data)?;
    let dims = dataset.dims();
    if dims.len() != 2 {
        return Err(Failure::Usage(format!("models take two modalities, dataset has {}", dims.len())));
    }
    let spec = ArchitectureSpec::preset(a.arch, a.preset, [dims[0], dims[1]]);
    spec.validate()?;
    let hyper = hyperparams(a);
    let split = three_way_split(&dataset, a.test_fraction, ctx.seed)?;
    ctx.write_config("train", a, json!({ "spec": spec, "hyperparams": hyper }))?;

    let model = train(&spec, &dataset, &split.train, &split.val, &hyper, ctx.seed)?;
    save_checkpoint(&model, &ctx.out)?;
    dataio::json::write(&ctx.out.join(SPLIT_FILE), &split)?;
    let m = metrics::evaluate(&model, &dataset, &split, a.brier_months)?;
    dataio::json::write(&ctx.out.join(metrics::METRICS_FILE), &m)?;
    println!(
        "{}: {} parameters, {} epochs, C-index train {:.4} val {:.4} test {:.4}",
        spec.kind,
        model.parameter_count(),
        model.epochs_run,
        m.train_cindex,
        m.val_cindex,
        m.test_cindex
    );
    Ok(())
}

const SPLIT_FILE: &str = "split.json";

fn read_split(model_dir: &Path) -> CliResult<ThreeWaySplit> {
    Ok(dataio::json::read(&model_dir.join(SPLIT_FILE))?)
}

fn audit_cmd(ctx: &Context, a: &AuditArgs) -> CliResult<()> {
    if !a.model.is_dir() {
        return Err(Failure::Usage(format!("checkpoint directory {} does not exist", a.model.display())));
    }
    let model = load_checkpoint(&a.model)?;
    let dataset = load_dataset(&a.data)?;
    let split = read_split(&a.model)?;
    if let Some(&i) = split.train.iter().chain(&split.test).find(|&&i| i >= dataset.len()) {
        return Err(Failure::Usage(format!(
            "split index {i} is outside the dataset ({} patients); was the model trained on {}?",
            dataset.len(),
            a.data.display()
        )));
    }
    let strategy = match a.masking {
        MaskingKind::Mean => MaskingStrategy::mean(),
        MaskingKind::Zero => MaskingStrategy::zero(),
        MaskingKind::Shuffle => MaskingStrategy {
            replicates: a.replicates,
            ..MaskingStrategy::shuffle(ctx.seed)
        },
    };
    ctx.write_config("audit", a, json!({ "masking": strategy, "model": model.spec }))?;
    let masker = Masker::fit(strategy, &dataset.subset(&split.train))?;
    let targets = match a.patients {
        PatientSet::Test => dataset.subset(&split.test),
        PatientSet::All => dataset,
    };
    let report = audit(&model, &targets, &masker, a.convention, model.spec.kind.as_str())?;
    report.write(&ctx.out, "audit")?;
    println!(
        "{} patients ({} degenerate), {} evaluations, global interaction {:.4}%",
        report.metadata.patients,
        report.global.degenerate_patients,
        report.metadata.evaluations,
        report.global.interaction_percent
    );
    Ok(())
}

fn validate(ctx: &Context, a: &ValidateArgs) -> CliResult<()> {
    let mut checks = if a.only.is_empty() {
        CheckGroup::ALL.to_vec()
    } else {
        a.only.clone()
    };
    checks.sort();
    checks.dedup();
    let config = SuiteConfig {
        n: a.n,
        dims: a.dims,
        seed: ctx.seed,
        checks,
        ..SuiteConfig::default()
    };
    ctx.write_config("validate", a, json!({ "suite": config }))?;
    let report = run_validation_suite(&config)?;
    let table = report.to_table();
    dataio::json::write(&ctx.out.join("suite.json"), &report)?;
    fs::write(ctx.out.join("suite.txt"), &table).map_err(|e| Failure::Usage(e.to_string()))?;
    print!("{table}");
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(Failure::Failed(format!("{} check(s) failed: {}", failed.len(), failed.join(", "))))
    }
}
