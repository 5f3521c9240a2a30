use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hlhg_core::gradcheck::{run_suite, SuiteReport};
use hlhg_core::model::{load_checkpoint, save_checkpoint, ComplexityReport};
use hlhg_core::train::{evaluate, load_training_dataset, train_model};
use hlhg_core::{
    estimate_flops, load_dataset, run_experiment, Dataset, Error, ModelConfig, TrainConfig, Variant,
};
use serde::Serialize;

const GRADCHECK_LIMIT_F32: f64 = 1e-2;
const GRADCHECK_LIMIT_F64: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "hlhg",
    version,
    about = "Hybrid low/high-order graph convolutional networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its run report.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Report destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also save the scored parameters here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train over consecutive seeds and aggregate test accuracy.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's num_runs.
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run seeds one after another instead of on the thread pool.
        #[arg(long)]
        sequential: bool,
    },
    /// Score a saved checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory; taken from --config when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print first-layer complexity and parameter counts.
    ReportComplexity {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every model on the bundled 8-node graphs.
    Gradcheck {
        /// Random parameter points per graph and model.
        #[arg(long, default_value_t = 3)]
        points: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load a dataset directory and check its invariants.
    ValidateDataset { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Val,
    Test,
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(Error::Numerical(_)) => 3,
            Failure::Core(e) if e.is_data_error() => 2,
            Failure::Core(Error::Dimension { .. }) => 2,
            Failure::Core(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn read_config(path: &Path) -> CliResult<TrainConfig> {
    TrainConfig::from_file(path).map_err(|e| Failure::Usage(format!("config: {e}")))
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)? + "\n";
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn percent(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn train(config: &Path, seed: Option<u64>, out: Option<&Path>, ckpt: Option<&Path>) -> CliResult {
    let config = read_config(config)?;
    let dataset = load_training_dataset(&config.dataset_dir)?;
    let seed = seed.unwrap_or(config.seed);
    let (report, params) = train_model(&config, &dataset, seed)?;
    if let Some(path) = ckpt {
        save_checkpoint(path, &config.model_for(&dataset)?, &params)?;
    }
    emit(&report, out)?;
    eprintln!(
        "{} seed {seed}: test accuracy {} after {} epochs ({:.1}s)",
        dataset.name,
        percent(report.test_accuracy),
        report.stopped_epoch,
        report.elapsed_seconds
    );
    Ok(())
}

fn experiment(
    config: &Path,
    seed: Option<u64>,
    runs: Option<usize>,
    out: Option<&Path>,
    sequential: bool,
) -> CliResult {
    let mut config = read_config(config)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(r) = runs {
        config.num_runs = r;
    }
    config
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let dataset = load_training_dataset(&config.dataset_dir)?;
    let report = run_experiment(&config, &dataset, !sequential)?;
    emit(&report, out)?;
    eprintln!(
        "{} {}-{} over {} runs: {} ± {}",
        dataset.name,
        config.variant,
        config.order_p,
        report.runs.len(),
        percent(report.mean_test_accuracy),
        percent(report.std_test_accuracy)
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    dataset: String,
    split: &'static str,
    nodes: usize,
    loss: f64,
    accuracy: f64,
}

fn eval(
    checkpoint: &Path,
    dataset: Option<&Path>,
    config: Option<&Path>,
    split: Split,
    out: Option<&Path>,
) -> CliResult {
    let dir = match (dataset, config) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(c)) => read_config(c)?.dataset_dir,
        (None, None) => return Err(Failure::Usage("eval needs --dataset or --config".into())),
    };
    let (model, params) = load_checkpoint(checkpoint).map_err(|e| match e {
        Error::Io { .. } | Error::Json(_) | Error::Config(_) => {
            Failure::Usage(format!("checkpoint: {e}"))
        }
        e => Failure::Core(e),
    })?;
    let data = load_training_dataset(&dir)?;
    if data.feature_dim() != model.input_dim || data.num_classes != model.num_classes {
        return Err(Failure::Core(Error::Dataset(format!(
            "checkpoint expects {} features and {} classes, dataset has {} and {}",
            model.input_dim,
            model.num_classes,
            data.feature_dim(),
            data.num_classes
        ))));
    }
    let (name, mask) = match split {
        Split::Train => ("train", &data.splits.train),
        Split::Val => ("val", &data.splits.val),
        Split::Test => ("test", &data.splits.test),
    };
    let e = evaluate(&params, &data, &model, mask)?;
    let report = EvalReport {
        dataset: data.name.clone(),
        split: name,
        nodes: mask.len(),
        loss: e.loss,
        accuracy: e.accuracy,
    };
    emit(&report, out)?;
    eprintln!("{} {name} accuracy {}", data.name, percent(e.accuracy));
    Ok(())
}

fn grouped(v: u64) -> String {
    let s = v.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn model_label(cfg: &ModelConfig) -> String {
    match cfg.variant {
        Variant::Hlhg => format!("HLHG-{}", cfg.order_p),
        Variant::GcnBaseline => "GCN".to_string(),
        Variant::ConcatBaseline => format!("CONCAT-{}", cfg.order_p),
    }
}

fn complexity_row(cfg: &ModelConfig, report: &ComplexityReport) -> String {
    let l1 = &report.layers[0];
    let (h, p) = (cfg.hidden_units, cfg.order_p);
    let params = match cfg.variant {
        Variant::ConcatBaseline => format!("O({p} × {h} × r)"),
        _ => format!("O({h} × r)"),
    };
    format!(
        "{:<10} {:<22} {:<14} {:>16} {:>12} {:>12}",
        model_label(cfg),
        format!("O({h} × {p} × m × r)"),
        params,
        grouped(l1.complexity_term),
        grouped(l1.parameters),
        grouped(report.parameters)
    )
}

#[derive(Serialize)]
struct ComplexityOutput {
    dataset: String,
    nodes: usize,
    nonzeros: usize,
    features: usize,
    classes: usize,
    models: Vec<ComplexityReport>,
}

fn report_complexity(config: &Path, out: Option<&Path>) -> CliResult {
    let config = read_config(config)?;
    let data = load_dataset(&config.dataset_dir)?;
    let model = config.model_for(&data)?;
    let (n, m) = (data.n(), data.graph.nnz());
    let mut models = vec![model.clone()];
    if model.variant != Variant::GcnBaseline {
        models.insert(
            0,
            ModelConfig::gcn(model.input_dim, model.hidden_units, model.num_classes),
        );
    }
    let reports: Vec<ComplexityReport> = models.iter().map(|c| estimate_flops(c, n, m)).collect();

    println!(
        "{}: n = {n}, m = {m} (non-zeros of Â), r = {}, C = {}",
        data.name,
        data.feature_dim(),
        data.num_classes
    );
    println!(
        "{:<10} {:<22} {:<14} {:>16} {:>12} {:>12}",
        "Model", "Comp. (layer 1)", "Params (l. 1)", "Comp. value", "Params", "Total params"
    );
    for (cfg, rep) in models.iter().zip(&reports) {
        println!("{}", complexity_row(cfg, rep));
    }
    if let Some(path) = out {
        emit(
            &ComplexityOutput {
                dataset: data.name.clone(),
                nodes: n,
                nonzeros: m,
                features: data.feature_dim(),
                classes: data.num_classes,
                models: reports,
            },
            Some(path),
        )?;
    }
    Ok(())
}

fn gradcheck(points: u64, out: Option<&Path>) -> CliResult {
    let start = std::time::Instant::now();
    let report: SuiteReport = run_suite(points)?;
    for c in &report.cases {
        println!(
            "{:<17} {:<9} point {}  f32 {:.2e}  f64 {:.2e}",
            c.problem, c.model, c.point, c.error_f32, c.error_f64
        );
    }
    println!(
        "max relative error: f32 {:.3e} (limit {GRADCHECK_LIMIT_F32:e}), f64 {:.3e} (limit {GRADCHECK_LIMIT_F64:e}), {} cases in {:.2}s",
        report.max_error_f32,
        report.max_error_f64,
        report.cases.len(),
        start.elapsed().as_secs_f64()
    );
    if let Some(path) = out {
        emit(&report, Some(path))?;
    }
    if !(report.max_error_f32 < GRADCHECK_LIMIT_F32 && report.max_error_f64 < GRADCHECK_LIMIT_F64) {
        return Err(Failure::Core(Error::Numerical(
            "gradient check exceeded its tolerance".into(),
        )));
    }
    Ok(())
}

fn validate_dataset(dir: &Path) -> CliResult {
    let data: Dataset = load_dataset(dir)?;
    let labeled = data.labels.iter().filter(|l| l.is_some()).count();
    println!(
        "{}: n = {}, input edges = {}, stored non-zeros = {}, features = {}, classes = {}, labeled = {}, train/val/test = {}/{}/{}",
        data.name,
        data.n(),
        data.input_edges,
        data.graph.nnz(),
        data.feature_dim(),
        data.num_classes,
        labeled,
        data.splits.train.len(),
        data.splits.val.len(),
        data.splits.test.len()
    );
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            checkpoint,
        } => train(&config, seed, out.as_deref(), checkpoint.as_deref()),
        Command::Experiment {
            config,
            seed,
            runs,
            out,
            sequential,
        } => experiment(&config, seed, runs, out.as_deref(), sequential),
        Command::Eval {
            checkpoint,
            dataset,
            config,
            split,
            out,
        } => eval(
            &checkpoint,
            dataset.as_deref(),
            config.as_deref(),
            split,
            out.as_deref(),
        ),
        Command::ReportComplexity { config, out } => report_complexity(&config, out.as_deref()),
        Command::Gradcheck { points, out } => gradcheck(points, out.as_deref()),
        Command::ValidateDataset { dir } => validate_dataset(&dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{line}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
