//! `certcrf` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure (I/O and the like), 2 invalid
//! input or usage, 3 training finished without the certificate that was
//! asked for.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use certcrf::harness::{
    compare_caching_strategies, config_hash, evaluate, generate_synthetic, read_dataset, read_trace_csv,
    trace_svg, write_atomic, write_dataset, CertificateFile, CsvTraceSink, ExperimentConfig, ModelFile,
    SyntheticSpec,
};
use certcrf::inference::OracleConfig;
use certcrf::trainer::{fit_with_sink, CacheStrategy, Tier};
use certcrf::Error;
use clap::{Args, Parser, Subcommand};

/// Environment variable overriding the worker thread count.
const WORKERS_ENV: &str = "CERTCRF_WORKERS";

#[derive(Parser)]
#[command(name = "certcrf", version, about = "Certified max-margin training of pairwise CRFs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic grid dataset.
    Gen(GenArgs),
    /// Train a model and write it with its certificate.
    Train(TrainArgs),
    /// Evaluate a model on a dataset.
    Eval(EvalArgs),
    /// Train under every cache strategy and tabulate the work done.
    CompareCaching(CompareArgs),
    /// Render a trace CSV as an SVG plot.
    TracePlot(PlotArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 4)]
    width: usize,
    #[arg(long, default_value_t = 4)]
    height: usize,
    #[arg(long, default_value_t = 3)]
    labels: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 20)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainerFlags {
    /// JSON experiment config; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "c")]
    c: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Comma-separated full oracles, e.g. `move,exact`.
    #[arg(long)]
    ladder: Option<String>,
    /// none, until-exhausted or dynamic.
    #[arg(long)]
    cache: Option<String>,
    #[arg(long)]
    cache_size: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    bnb_max_expansions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write 0 in the wall_ms trace column so traces are reproducible.
    #[arg(long)]
    frozen_clock: bool,
    /// Drop all pairwise factors before training.
    #[arg(long)]
    unary_only: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    trainer: TrainerFlags,
    /// Exit with status 3 unless training ends certified.
    #[arg(long)]
    require_certificate: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    certificate_out: Option<PathBuf>,
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long)]
    plot_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// move or exact.
    #[arg(long, default_value = "exact")]
    tier: String,
    #[arg(long)]
    unary_only: bool,
    /// Also write the metrics as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    trainer: TrainerFlags,
    #[arg(long, default_value = "caching")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "bound trace")]
    title: String,
}

enum Failure {
    Usage(String),
    Uncertified(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Qp(_) | Error::SearchBudget { .. } | Error::EnumerationBudget { .. } => {
                Failure::Runtime(e.to_string())
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn experiment_config(flags: &TrainerFlags) -> CliResult<ExperimentConfig> {
    let mut cfg = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(c) = flags.c {
        cfg.c = c;
    }
    if let Some(eps) = flags.epsilon {
        cfg.epsilon = eps;
    }
    if let Some(ladder) = &flags.ladder {
        cfg.ladder = ExperimentConfig::parse_ladder(ladder)?;
    }
    if let Some(cache) = &flags.cache {
        cfg.cache_strategy = cache.parse::<CacheStrategy>().map_err(Failure::Usage)?;
    }
    if let Some(r) = flags.cache_size {
        cfg.cache_size = r;
    }
    if let Some(n) = flags.max_iterations {
        cfg.max_iterations = n;
    }
    if let Some(n) = flags.bnb_max_expansions {
        cfg.bnb_max_expansions = n;
    }
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    cfg.frozen_clock |= flags.frozen_clock;
    cfg.validate()?;
    Ok(cfg)
}

fn load(path: &Path, unary_only: bool) -> CliResult<certcrf::Dataset> {
    let ds = read_dataset(path).map_err(|e| match e {
        Error::Io(io) => Failure::Runtime(format!("{}: {io}", path.display())),
        other => Failure::Usage(format!("{}: {other}", path.display())),
    })?;
    Ok(if unary_only { ds.unary_only() } else { ds })
}

fn gen(args: GenArgs) -> CliResult<()> {
    let spec = SyntheticSpec::new(args.width, args.height, args.labels, args.sigma, args.instances, args.seed);
    let ds = generate_synthetic(&spec)?;
    write_dataset(&ds, &args.out)?;
    println!(
        "wrote {} instances ({}x{} grid, {} labels) to {}",
        ds.len(),
        args.width,
        args.height,
        args.labels,
        args.out.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> CliResult<()> {
    let mut cfg = experiment_config(&args.trainer)?;
    cfg.require_certificate |= args.require_certificate;
    if cfg.require_certificate && !cfg.can_certify() {
        return Err(Failure::Uncertified(
            "a certificate was requested but the ladder does not end with the exact tier".into(),
        ));
    }
    let ds = load(&args.data, args.trainer.unary_only)?;
    let trainer = cfg.trainer_config()?;

    std::fs::create_dir_all(&args.out_dir).map_err(Error::from)?;
    let pick = |explicit: &Option<PathBuf>, configured: &Option<PathBuf>, name: &str| {
        explicit
            .clone()
            .or_else(|| configured.clone())
            .unwrap_or_else(|| args.out_dir.join(name))
    };
    let model_path = pick(&args.model_out, &cfg.model_out, "model.json");
    let cert_path = pick(&args.certificate_out, &cfg.certificate_out, "certificate.json");
    let trace_path = pick(&args.trace_out, &cfg.trace_out, "trace.csv");
    let plot_path = pick(&args.plot_out, &cfg.plot_out, "trace.svg");

    let mut sink = CsvTraceSink::create(&trace_path)?;
    let out = fit_with_sink(&ds, &trainer, &mut sink)?;
    drop(sink);

    ModelFile::new(&out.params, config_hash(&trainer)?, Some(out.certificate.clone())).write(&model_path)?;
    CertificateFile::from(&out.certificate).write(&cert_path)?;
    write_atomic(&plot_path, trace_svg(&out.trace.rows, "bound trace").as_bytes())?;

    let cert = &out.certificate;
    println!(
        "iterations {} oracle calls {} cache constraints {}",
        out.stats.iterations, out.stats.oracle_calls, out.stats.cache_constraints
    );
    match (cert.upper_bound, cert.gap) {
        (Some(upper), Some(gap)) => println!(
            "lower {:.9} upper {:.9} gap {:.3e} certified {} ({:?})",
            cert.lower_bound, upper, gap, cert.certified, cert.status
        ),
        _ => println!("lower {:.9} no upper bound ({:?})", cert.lower_bound, cert.status),
    }
    println!("model written to {}", model_path.display());

    if cfg.require_certificate && !cert.certified {
        return Err(Failure::Uncertified(format!("training ended {:?}", cert.status)));
    }
    Ok(())
}

fn eval(args: EvalArgs) -> CliResult<()> {
    let model = ModelFile::read(&args.model).map_err(|e| match e {
        Error::Io(io) => Failure::Runtime(format!("{}: {io}", args.model.display())),
        other => Failure::Usage(format!("{}: {other}", args.model.display())),
    })?;
    let params = model.params()?;
    let tier = args
        .tier
        .parse::<Tier>()
        .map_err(Failure::Usage)?
        .oracle()
        .ok_or_else(|| Failure::Usage("evaluation needs the move or exact tier".into()))?;
    let ds = load(&args.data, args.unary_only)?;
    let metrics = evaluate(&params, &ds, tier, &OracleConfig::default())?;
    println!("global accuracy {:.6}", metrics.global_accuracy);
    println!("mean class accuracy {:.6}", metrics.mean_class_accuracy);
    for (k, (acc, jac)) in metrics.class_accuracy.iter().zip(&metrics.jaccard).enumerate() {
        let show = |v: &Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
        println!("class {k}: accuracy {} jaccard {}", show(acc), show(jac));
    }
    if let Some(out) = args.out {
        write_atomic(&out, serde_json::to_string_pretty(&metrics).map_err(Error::from)?.as_bytes())?;
    }
    Ok(())
}

fn compare(args: CompareArgs) -> CliResult<()> {
    let cfg = experiment_config(&args.trainer)?;
    let ds = load(&args.data, args.trainer.unary_only)?;
    let report = compare_caching_strategies(&ds, &cfg.trainer_config()?)?;
    report.write(&args.out_dir)?;
    print!("{}", report.to_csv());
    Ok(())
}

fn trace_plot(args: PlotArgs) -> CliResult<()> {
    let rows = read_trace_csv(&args.trace).map_err(|e| match e {
        Error::Io(io) => Failure::Runtime(format!("{}: {io}", args.trace.display())),
        other => Failure::Usage(format!("{}: {other}", args.trace.display())),
    })?;
    write_atomic(&args.out, trace_svg(&rows, &args.title).as_bytes())?;
    println!("plotted {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn configure_workers() -> CliResult<()> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("{WORKERS_ENV} must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_workers().and_then(|()| match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::CompareCaching(a) => compare(a),
        Command::TracePlot(a) => trace_plot(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Uncertified(msg)) => {
            eprintln!("uncertified: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
