mod config;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ssgc::graph;
use ssgc::prune::PruneConfig;
use ssgc::report;
use ssgc::train::{self, DatasetSpec, PruneMethod, TaskSpec, TrainConfig};

#[derive(Parser)]
#[command(name = "ssgc", version, about = "Sparse spectra graph classification toolkit")]
struct Cli {
    /// RNG seed for data generation, splits, and initialization.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Omit wall-clock fields so output files are bitwise reproducible.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Flat key=value config file; flags override config values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for reports, tables, and checkpoints.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cut a dataset into segments and cache the spectra as CSV.
    Ingest(IngestArgs),
    /// Build graphs at several near-field rates and tabulate size/time.
    GraphBench(GraphBenchArgs),
    /// Train a model, optionally with pruning, and write a report.
    Train(TrainArgs),
    /// Prune a trained checkpoint and retrain it.
    Prune(PruneArgs),
    /// Train the same task at several near-field rates.
    SweepNfr(SweepNfrArgs),
    /// Train/prune/retrain over a grid of connection rates and methods.
    SweepRate(SweepRateArgs),
    /// Pretty-print a run report JSON file.
    Report(ReportArgs),
    /// Run the built-in oracle suites; exits nonzero on any failure.
    Verify,
}

#[derive(Args)]
struct IngestArgs {
    /// Input file (csv) or directory (bonn).
    #[arg(long)]
    input: PathBuf,
    /// Input format: `bonn` or `csv`.
    #[arg(long, default_value = "bonn")]
    format: String,
    /// Subset letters for bonn input, label order (e.g. `A,E`).
    #[arg(long, default_value = "A,E", value_delimiter = ',')]
    subsets: Vec<String>,
    /// Label for csv files without a label column.
    #[arg(long, default_value_t = 0)]
    label: usize,
    #[arg(long, default_value_t = 256)]
    seg_len: usize,
    #[arg(long, default_value_t = 0)]
    overlap: usize,
    /// Keep only the first n/2 spectrum bins.
    #[arg(long)]
    half_spectrum: bool,
}

#[derive(Args)]
struct GraphBenchArgs {
    /// Spectrum length.
    #[arg(long, default_value_t = 256)]
    n: usize,
    /// Near-field rates to compare.
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.5,0.1")]
    rates: Vec<f64>,
    /// How many random spectra per rate.
    #[arg(long, default_value_t = 100)]
    count: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    task: TaskArgs,
    /// Prune to this connection rate after training.
    #[arg(long)]
    prune_rate: Option<f64>,
    /// Pruning method: `admm` or `magnitude`.
    #[arg(long, default_value = "admm")]
    prune_method: String,
}

#[derive(Args)]
struct PruneArgs {
    /// Checkpoint produced by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    task: TaskArgs,
    #[arg(long)]
    rate: f64,
    /// Pruning method: `admm` or `magnitude`.
    #[arg(long, default_value = "admm")]
    method: String,
}

#[derive(Args)]
struct SweepNfrArgs {
    #[command(flatten)]
    task: TaskArgs,
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.5,0.2,0.1")]
    rates: Vec<f64>,
}

#[derive(Args)]
struct SweepRateArgs {
    #[command(flatten)]
    task: TaskArgs,
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.5,0.1,0.05")]
    rates: Vec<f64>,
    /// Comma-separated subset of `admm,magnitude`.
    #[arg(long, value_delimiter = ',', default_value = "admm,magnitude")]
    methods: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Path to a RunReport JSON file.
    #[arg(long)]
    input: PathBuf,
}

/// Task selection shared by the training-style subcommands.
#[derive(Args)]
struct TaskArgs {
    /// Dataset: `synth`, or `bonn` (requires --data), or `csv`.
    #[arg(long, default_value = "synth")]
    task: String,
    /// Model: `mlp`, `gnn`, or `ssgcnet`.
    #[arg(long, default_value = "ssgcnet")]
    model: String,
    /// Directory with bonn subset files, or csv files for `csv`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Subset letters for bonn, label order.
    #[arg(long, default_value = "A,E", value_delimiter = ',')]
    subsets: Vec<String>,
    #[arg(long)]
    near_field_rate: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seg_len: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let settings = match &cli.config {
        Some(path) => config::Settings::from_file(path)?,
        None => config::Settings::default(),
    };
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    match &cli.command {
        Command::Ingest(args) => ingest(&cli, args),
        Command::GraphBench(args) => graph_bench(&cli, args),
        Command::Train(args) => train_cmd(&cli, &settings, args),
        Command::Prune(args) => prune_cmd(&cli, &settings, args),
        Command::SweepNfr(args) => sweep_nfr(&cli, &settings, args),
        Command::SweepRate(args) => sweep_rate(&cli, &settings, args),
        Command::Report(args) => report_cmd(args),
        Command::Verify => verify(),
    }
}

fn build_task(cli: &Cli, settings: &config::Settings, args: &TaskArgs) -> Result<TaskSpec> {
    let mut task = TaskSpec::synthetic(&args.model, cli.seed);
    settings.apply_to_task(&mut task);
    task.model = args.model.clone();
    task.seed = cli.seed;
    if let Some(seg_len) = args.seg_len {
        task.seg_len = seg_len;
    }
    if let Some(rate) = args.near_field_rate {
        task.near_field_rate = Some(rate);
        task.k = None;
    }
    if let Some(k) = args.k {
        task.k = Some(k);
        task.near_field_rate = None;
    }
    task.dataset = match args.task.as_str() {
        "synth" => task.dataset,
        "bonn" => {
            let dir = args
                .data
                .clone()
                .context("--data <dir> is required for the bonn task")?;
            DatasetSpec::Bonn {
                dir,
                subsets: args.subsets.clone(),
            }
        }
        "csv" => {
            let dir = args
                .data
                .clone()
                .context("--data <dir> is required for the csv task")?;
            let mut paths = Vec::new();
            for entry in std::fs::read_dir(&dir)
                .with_context(|| format!("cannot read {}", dir.display()))?
            {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "csv") {
                    paths.push((path, 0));
                }
            }
            paths.sort();
            DatasetSpec::Csv { paths }
        }
        other => bail!("unknown task {other:?}, expected synth, bonn, or csv"),
    };
    Ok(task)
}

fn build_train_config(cli: &Cli, settings: &config::Settings, args: &TaskArgs) -> TrainConfig {
    let mut cfg = TrainConfig {
        deterministic: cli.deterministic,
        ..TrainConfig::default()
    };
    settings.apply_to_train(&mut cfg);
    if let Some(epochs) = args.epochs {
        cfg.max_epochs = epochs;
    }
    if let Some(batch) = args.batch_size {
        cfg.batch_size = batch;
    }
    if let Some(lr) = args.learning_rate {
        cfg.learning_rate = lr;
    }
    cfg
}

fn parse_method(name: &str) -> Result<PruneMethod> {
    match name {
        "admm" => Ok(PruneMethod::Admm),
        "magnitude" => Ok(PruneMethod::Magnitude),
        other => bail!("unknown prune method {other:?}, expected admm or magnitude"),
    }
}

fn ingest(cli: &Cli, args: &IngestArgs) -> Result<()> {
    use ssgc::signal::{load_bonn_record, load_csv_record, segment, to_spectrum};
    let mut spectra = Vec::new();
    match args.format.as_str() {
        // A directory is walked per subset; a single file loads directly.
        "bonn" if args.input.is_dir() => {
            let task = TaskSpec {
                dataset: DatasetSpec::Bonn {
                    dir: args.input.clone(),
                    subsets: args.subsets.clone(),
                },
                seg_len: args.seg_len,
                overlap: args.overlap,
                half_spectrum: args.half_spectrum,
                ..TaskSpec::synthetic("mlp", cli.seed)
            };
            let (sp, _) = train::load_spectra(&task)?;
            spectra = sp;
        }
        "bonn" => {
            let record =
                load_bonn_record(&args.input, args.label, ssgc::signal::DEFAULT_SAMPLE_RATE)?;
            for seg in segment(&record, args.seg_len, args.overlap)? {
                spectra.push(to_spectrum(&seg, args.half_spectrum));
            }
        }
        "csv" => {
            let record = load_csv_record(&args.input, args.label, 200.0)?;
            for seg in segment(&record, args.seg_len, args.overlap)? {
                spectra.push(to_spectrum(&seg, args.half_spectrum));
            }
        }
        other => bail!("unknown format {other:?}, expected bonn or csv"),
    }
    let path = cli.out.join("spectra.csv");
    let mut out = String::from("source_id,offset,label,magnitudes...\n");
    for sp in &spectra {
        out.push_str(&format!("{},{},{}", sp.source_id, sp.offset, sp.label));
        for m in &sp.magnitudes {
            out.push_str(&format!(",{m}"));
        }
        out.push('\n');
    }
    std::fs::write(&path, out)?;
    println!("wrote {} spectra to {}", spectra.len(), path.display());
    Ok(())
}

fn graph_bench(cli: &Cli, args: &GraphBenchArgs) -> Result<()> {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    if args.n < 2 {
        bail!("--n must be at least 2");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let spectra: Vec<ssgc::Spectrum> = (0..args.count)
        .map(|i| ssgc::Spectrum {
            magnitudes: (0..args.n).map(|_| rng.gen_range(0.0..10.0)).collect(),
            label: 0,
            source_id: format!("bench-{i}"),
            offset: 0,
        })
        .collect();
    let mut rates = args.rates.clone();
    rates.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut rows = Vec::new();
    for rate in rates {
        let k = graph::near_field_rate_to_k(rate, args.n);
        let mut summary = report::GraphStatsSummary {
            k,
            graphs: spectra.len(),
            ..Default::default()
        };
        for sp in &spectra {
            let (_, stats) = graph::build_with_stats(sp, k);
            summary.total_nnz += stats.nnz;
            summary.total_bytes += stats.bytes;
            summary.build_seconds += stats.build_seconds;
        }
        summary.mean_nnz = summary.total_nnz as f64 / spectra.len() as f64;
        rows.push((rate, summary));
    }
    let csv = report::graph_bench_to_csv(&rows);
    let path = cli.out.join("graph_bench.csv");
    std::fs::write(&path, &csv)?;
    print!("{csv}");
    println!("wrote {}", path.display());
    Ok(())
}

fn train_cmd(cli: &Cli, settings: &config::Settings, args: &TrainArgs) -> Result<()> {
    let task = build_task(cli, settings, &args.task)?;
    let mut cfg = build_train_config(cli, settings, &args.task);
    if let Some(rate) = args.prune_rate {
        let mut pc = cfg.prune.take().unwrap_or_else(|| PruneConfig::new(rate));
        pc.connection_rate = rate;
        cfg.prune = Some(pc);
        cfg.prune_method = parse_method(&args.prune_method)?;
    }
    let outcome = train::run_training_full(&task, &cfg)?;
    write_run_outputs(cli, &outcome)?;
    println!(
        "accuracy={:.4} surviving_weights={} total_params={}",
        outcome.report.final_metrics.accuracy,
        outcome.report.surviving_weights,
        outcome.report.total_params
    );
    Ok(())
}

fn write_run_outputs(cli: &Cli, outcome: &train::TrainOutcome) -> Result<()> {
    let report_path = cli.out.join("report.json");
    std::fs::write(&report_path, outcome.report.to_json())?;
    println!("wrote {}", report_path.display());
    if let Some(trace) = &outcome.report.admm_trace {
        let trace_path = cli.out.join("admm_trace.csv");
        std::fs::write(&trace_path, trace.to_csv())?;
        println!("wrote {}", trace_path.display());
    }
    let ckpt_path = cli.out.join("model.ckpt");
    ssgc::checkpoint::save_checkpoint(
        &ckpt_path,
        &outcome.model,
        &outcome.params,
        outcome.masks.as_deref(),
    )?;
    println!("wrote {}", ckpt_path.display());
    Ok(())
}

fn prune_cmd(cli: &Cli, settings: &config::Settings, args: &PruneArgs) -> Result<()> {
    let task = build_task(cli, settings, &args.task)?;
    let mut cfg = build_train_config(cli, settings, &args.task);
    let mut pc = cfg.prune.take().unwrap_or_else(|| PruneConfig::new(args.rate));
    pc.connection_rate = args.rate;
    cfg.prune = Some(pc);
    cfg.prune_method = parse_method(&args.method)?;
    // Skip the from-scratch phase; the checkpoint carries trained weights.
    cfg.max_epochs = 0;
    let outcome = train::run_training_from_checkpoint(&task, &cfg, &args.checkpoint)?;
    write_run_outputs(cli, &outcome)?;
    println!(
        "accuracy={:.4} surviving_weights={}",
        outcome.report.final_metrics.accuracy, outcome.report.surviving_weights
    );
    Ok(())
}

fn sweep_nfr(cli: &Cli, settings: &config::Settings, args: &SweepNfrArgs) -> Result<()> {
    let task = build_task(cli, settings, &args.task)?;
    let cfg = build_train_config(cli, settings, &args.task);
    let rows = train::sweep_near_field_rate(&task, &cfg, &args.rates);
    let csv = report::nfr_rows_to_csv(&rows);
    let path = cli.out.join("sweep_nfr.csv");
    std::fs::write(&path, &csv)?;
    print!("{csv}");
    println!("wrote {}", path.display());
    Ok(())
}

fn sweep_rate(cli: &Cli, settings: &config::Settings, args: &SweepRateArgs) -> Result<()> {
    let task = build_task(cli, settings, &args.task)?;
    let cfg = build_train_config(cli, settings, &args.task);
    let methods: Vec<PruneMethod> = args
        .methods
        .iter()
        .map(|m| parse_method(m))
        .collect::<Result<_>>()?;
    let rows = train::sweep_connection_rate(&task, &cfg, &args.rates, &methods);
    let csv = report::rate_rows_to_csv(&rows);
    let path = cli.out.join("sweep_rate.csv");
    std::fs::write(&path, &csv)?;
    print!("{csv}");
    println!("wrote {}", path.display());
    Ok(())
}

fn report_cmd(args: &ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("cannot read {}", args.input.display()))?;
    let rep = report::RunReport::from_json(&text)?;
    print!("{}", rep.pretty());
    Ok(())
}

fn verify() -> Result<()> {
    let failures = ssgc::oracle::run_verification_suites();
    if failures.is_empty() {
        println!("all oracle suites passed");
        Ok(())
    } else {
        for f in &failures {
            eprintln!("FAIL {f}");
        }
        bail!("{} oracle suite(s) failed", failures.len());
    }
}
