mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use itsclust::imaging::build_image_dataset;
use itsclust::ingest::{build_windows, read_interval_csv, WindowBatch};
use itsclust::metrics::{load_features, raw_window_features, rolling_origin};
use itsclust::pipeline::{cv_lambda, fit, load_model, save_model, select_k, FitOptions, FitResult, LambdaSpec};
use itsclust::toeplitz::BlockToeplitzIndex;
use itsclust::Error;

use config::RunConfig;

/// Segment interval-valued time series into regimes with block-Toeplitz
/// Gaussian models, and export recurrence-plot image datasets.
#[derive(Parser)]
#[command(name = "itsclust", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit K clusters, or pick K by BIC when the config lists several.
    Segment(Common),
    /// Same as `segment`; meant for configs listing several K.
    SelectK(Common),
    /// Write the joint recurrence plot dataset for a fitted model.
    Image {
        #[command(flatten)]
        common: Common,
        /// Model file (default: <out>/model.json).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Rolling-origin forecast evaluation of a ridge baseline.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Feature CSV `windowRow,f1,..,fp`; raw windows are used otherwise.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Model file; checked against the data when given.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with its exit code: 1 input, 2 convergence, 3 internal.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::MissingCell { .. }
            | Error::IntervalOrderViolation { .. }
            | Error::WindowTooLarge { .. }
            | Error::DimensionMismatch { .. }
            | Error::ModelDimensionMismatch { .. }
            | Error::RowMismatch(_)
            | Error::InvalidA(_)
            | Error::WindowTooShortForTrajectory { .. }
            | Error::InvalidConfig(_)
            | Error::KernelNotSpd
            | Error::FoldTooSmall { .. }
            | Error::EmptyBatch
            | Error::SchemaMismatch(_)
            | Error::CorruptFile(_) => 1,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = std::result::Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::warn!("finished without convergence; outputs are flagged");
            ExitCode::from(2)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn prepare(common: &Common) -> std::result::Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(Error::InvalidConfig("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure {
                code: 3,
                message: e.to_string(),
            })?;
    }
    Ok(cfg)
}

fn load_batch(cfg: &RunConfig) -> itsclust::Result<WindowBatch> {
    let series = read_interval_csv(&cfg.input)?;
    let batch = build_windows(&series, cfg.w)?;
    cfg.rp_config().validate(batch.n(), batch.w())?;
    Ok(batch)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Segment(common) | Command::SelectK(common) => {
            let cfg = prepare(&common)?;
            segment(&cfg)
        }
        Command::Image { common, model } => {
            let cfg = prepare(&common)?;
            image(&cfg, model)
        }
        Command::Evaluate { common, features, model } => {
            let cfg = prepare(&common)?;
            evaluate(&cfg, features, model)
        }
    }
}

fn write(path: &Path, text: &str) -> itsclust::Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_out(dir: &Path) -> itsclust::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn segment(cfg: &RunConfig) -> Outcome {
    let batch = load_batch(cfg)?;
    let mut bic_table = None;
    let mut result = if cfg.k.len() == 1 {
        fit(&batch, &cfg.fit_options(cfg.k[0]))?
    } else {
        let sel = select_k(&batch, &cfg.k, &cfg.fit_options(cfg.k[0]), cfg.bic_variant())?;
        log::info!("selected K = {}", sel.best_k);
        let mut table = String::from("K,bic,emptyClusters\n");
        for row in &sel.table {
            let _ = writeln!(table, "{},{:?},{}", row.k, row.bic, row.empty_clusters);
        }
        bic_table = Some(table);
        sel.best_fit().clone()
    };

    let mut cv_table = None;
    if cfg.lambda.len() > 1 {
        let (refit, table) = tune_lambda(&batch, cfg, &result)?;
        result = refit;
        cv_table = Some(table);
    }

    create_out(&cfg.out_dir)?;
    save_model(&result, cfg.out_dir.join("model.json"))?;
    let mut labels = String::from("windowRow,label\n");
    for (row, l) in result.path.labels.iter().enumerate() {
        let _ = writeln!(labels, "{row},{}", l + 1);
    }
    write(&cfg.out_dir.join("labels.csv"), &labels)?;
    let mut trace = String::from("iteration,objective\n");
    for (i, v) in result.objective_trace.iter().enumerate() {
        let _ = writeln!(trace, "{},{v:?}", i + 1);
    }
    write(&cfg.out_dir.join("objective_trace.csv"), &trace)?;
    if let Some(t) = bic_table {
        write(&cfg.out_dir.join("bic_table.csv"), &t)?;
    }
    if let Some(t) = cv_table {
        write(&cfg.out_dir.join("cv_table.csv"), &t)?;
    }
    log::info!(
        "K = {}, objective {:.6}, {} switches",
        result.k,
        result.objective(),
        result.path.switches()
    );
    Ok(result.converged && result.solver_converged)
}

/// Cross-validates lambda per cluster and refits with the chosen values.
fn tune_lambda(batch: &WindowBatch, cfg: &RunConfig, base: &FitResult) -> itsclust::Result<(FitResult, String)> {
    let idx = BlockToeplitzIndex::new(batch.n(), batch.w());
    let members = base.path.members();
    let mut chosen = Vec::with_capacity(base.k);
    let mut table = String::from("cluster,lambda,score\n");
    for (j, rows) in members.iter().enumerate() {
        match cv_lambda(batch, rows, &cfg.lambda, cfg.folds, &idx, &cfg.solver(), cfg.cv_select()) {
            Ok(cv) => {
                for (l, s) in &cv.scores {
                    let _ = writeln!(table, "{},{l:?},{s:?}", j + 1);
                }
                chosen.push(cv.best_lambda);
            }
            Err(Error::FoldTooSmall { members, folds }) => {
                log::warn!("cluster {} has {members} windows for {folds} folds; keeping the base lambda", j + 1);
                chosen.push(cfg.base_lambda());
            }
            Err(e) => return Err(e),
        }
    }
    let opts = FitOptions {
        lambda: LambdaSpec::PerCluster(chosen),
        ..cfg.fit_options(base.k)
    };
    Ok((fit(batch, &opts)?, table))
}

fn model_for(cfg: &RunConfig, batch: &WindowBatch, model: Option<PathBuf>) -> itsclust::Result<FitResult> {
    let path = model.unwrap_or_else(|| cfg.out_dir.join("model.json"));
    let result = load_model(&path)?;
    if (result.n, result.w) != (batch.n(), batch.w()) {
        return Err(Error::SchemaMismatch(format!(
            "model has n = {}, w = {} but the data gives n = {}, w = {}",
            result.n,
            result.w,
            batch.n(),
            batch.w()
        )));
    }
    if result.path.labels.len() != batch.count() {
        return Err(Error::SchemaMismatch(format!(
            "model labels {} windows, the data has {}",
            result.path.labels.len(),
            batch.count()
        )));
    }
    Ok(result)
}

fn image(cfg: &RunConfig, model: Option<PathBuf>) -> Outcome {
    let batch = load_batch(cfg)?;
    let result = model_for(cfg, &batch, model)?;
    let params = cfg.rp_config().resolve(&batch)?;
    let manifest = build_image_dataset(&batch, &result.path, &params, cfg.out_dir.join("images"))?;
    log::info!("wrote {} images", manifest.len());
    Ok(true)
}

#[derive(Serialize)]
struct MetricLine {
    metric: &'static str,
    value: f64,
    horizon: usize,
}

fn evaluate(cfg: &RunConfig, features: Option<PathBuf>, model: Option<PathBuf>) -> Outcome {
    let batch = load_batch(cfg)?;
    if model.is_some() {
        model_for(cfg, &batch, model)?;
    }
    let x = match features {
        Some(p) => load_features(p, batch.count())?,
        None => raw_window_features(&batch),
    };
    let report = rolling_origin(&batch, &x, &cfg.eval_options())?;
    if report.clamped > 0 {
        log::info!("{} predicted half-widths clamped to zero", report.clamped);
    }
    let horizon = report.forecast.len();
    let lines = [
        MetricLine {
            metric: "d1",
            value: report.mde_d1,
            horizon,
        },
        MetricLine {
            metric: "dK",
            value: report.mde_dk,
            horizon,
        },
    ];
    let json = serde_json::to_string_pretty(&lines).map_err(|e| Failure {
        code: 3,
        message: e.to_string(),
    })?;
    println!("{json}");
    create_out(&cfg.out_dir)?;
    write(&cfg.out_dir.join("metrics.json"), &(json + "\n"))?;
    Ok(true)
}
