//! `avgraph` command-line tool.
//!
//! Exit codes: 0 success, 2 usage error, 3 I/O failure (missing or
//! unwritable file), 4 malformed input (bad series line, dataset or
//! checkpoint), 5 invalid argument (bad class, range, sizes, mismatched
//! data), 1 anything else.

mod error;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use avgraph::avg::{avg_forward, init_bank, ConvBank};
use avgraph::diffpool::{AvgNetParams, Channel};
use avgraph::graph::VisGraph;
use avgraph::nn::{load_checkpoint, save_checkpoint};
use avgraph::signal::{read_dataset, split_stratified, write_dataset, Dataset, Modulation, Series};
use avgraph::train::{self, DecayUnit, TrainConfig};
use avgraph::visibility::{hvg, lpvg, vg_fast, vg_naive};

use error::CliError;

#[derive(Parser)]
#[command(
    name = "avgraph",
    version,
    about = "Adaptive visibility graphs for modulation classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic IQ dataset container.
    Synth(SynthArgs),
    /// Map a one-column series file to a graph.
    Map(MapArgs),
    /// Train a network and write a checkpoint plus metrics log.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Time vg_naive against vg_fast.
    Bench(BenchArgs),
    /// Train once per span m and report validation accuracy.
    SweepM(SweepArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Comma-separated modulation names.
    #[arg(
        long,
        default_value = "BPSK,QPSK,PSK8,QAM16,PAM4,GFSK,CPFSK,AMDSB,WBFM"
    )]
    classes: String,
    /// SNR range `lo..hi:step` in dB (inclusive), or a single value.
    #[arg(long, default_value = "-20..18:2", allow_hyphen_values = true)]
    snrs: String,
    #[arg(long, default_value_t = 100)]
    per_cell: usize,
    #[arg(long, default_value_t = 128)]
    len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Vg,
    VgFast,
    Hvg,
    Lpvg,
    Avg,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Edgelist,
    Dot,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    I,
    Q,
}

#[derive(Args)]
struct MapArgs {
    /// One numeric value per line.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    /// Penetrable limit for lpvg.
    #[arg(long = "L", default_value_t = 1)]
    l: usize,
    /// Maximum span for avg with a random bank.
    #[arg(long, default_value_t = 11)]
    m: usize,
    /// Checkpoint whose conv bank is used for avg.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Which channel's bank to take from the checkpoint.
    #[arg(long, value_enum, default_value = "i")]
    channel: ChannelArg,
    /// Seed for a random avg bank (used when --bank is absent).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "edgelist")]
    format: Format,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 0.8)]
    lr_decay: f64,
    #[arg(long, default_value_t = 10)]
    decay_every: usize,
    /// Whether --decay-every counts epochs or batches.
    #[arg(long, value_enum, default_value = "epoch")]
    decay_unit: DecayArg,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 32)]
    clusters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Add the pooling link-prediction and entropy losses.
    #[arg(long)]
    aux_loss: bool,
    /// Use one bank and branch for both I and Q.
    #[arg(long)]
    share_weights: bool,
    /// Drop the conv kernel biases.
    #[arg(long)]
    no_conv_bias: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecayArg {
    Epoch,
    Batch,
}

impl ModelArgs {
    fn config(&self, m: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            initial_lr: self.lr,
            lr_decay: self.lr_decay,
            decay_every: self.decay_every,
            decay_unit: match self.decay_unit {
                DecayArg::Epoch => DecayUnit::Epoch,
                DecayArg::Batch => DecayUnit::Batch,
            },
            m,
            hidden: self.hidden,
            clusters: self.clusters,
            seed: self.seed,
            aux_loss: self.aux_loss,
            share_weights: self.share_weights,
            conv_bias: !self.no_conv_bias,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Training dataset container.
    #[arg(long)]
    data: PathBuf,
    /// Validation dataset; when absent, --data is split stratified.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Training fraction of the stratified split.
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 11)]
    m: usize,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    metrics: PathBuf,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory receiving report.csv, per_snr.csv and confusion.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 8192)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated spans.
    #[arg(long, default_value = "3,5,7,9,11,13,15")]
    m_values: String,
    /// CSV output; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("avgraph: {e}");
        return ExitCode::from(e.code());
    }
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Map(a) => map(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::SweepM(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("avgraph: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("AVGRAPH_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        CliError::Invalid(format!(
            "AVGRAPH_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Other(e.to_string()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    if !path.exists() {
        return Err(CliError::io(path, io::ErrorKind::NotFound.into()));
    }
    read_dataset(path).map_err(|e| CliError::lib_at(path, e))
}

fn load_params(path: &Path) -> Result<AvgNetParams, CliError> {
    if !path.exists() {
        return Err(CliError::io(path, io::ErrorKind::NotFound.into()));
    }
    let store = load_checkpoint(path).map_err(|e| CliError::lib_at(path, e))?;
    AvgNetParams::from_store(store).map_err(|e| CliError::lib_at(path, e))
}

/// Parses `lo..hi:step`, `lo..hi` (step 1) or a single integer.
fn parse_snrs(text: &str) -> Result<Vec<i8>, CliError> {
    let bad = || CliError::Invalid(format!("bad SNR range `{text}` (expected lo..hi:step)"));
    let num = |s: &str| s.trim().parse::<i8>().map_err(|_| bad());
    let Some((lo, rest)) = text.split_once("..") else {
        return Ok(vec![num(text)?]);
    };
    let (hi, step) = match rest.split_once(':') {
        Some((hi, step)) => (num(hi)?, num(step)?),
        None => (num(rest)?, 1),
    };
    let lo = num(lo)?;
    if step <= 0 || hi < lo {
        return Err(bad());
    }
    Ok((i16::from(lo)..=i16::from(hi))
        .step_by(step as usize)
        .map(|v| v as i8)
        .collect())
}

fn parse_classes(text: &str) -> Result<Vec<Modulation>, CliError> {
    let classes = text
        .split(',')
        .map(|s| s.trim().parse::<Modulation>().map_err(CliError::from))
        .collect::<Result<Vec<_>, _>>()?;
    if classes.is_empty() {
        return Err(CliError::Invalid("no classes given".into()));
    }
    Ok(classes)
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let classes = parse_classes(&a.classes)?;
    let snrs = parse_snrs(&a.snrs)?;
    if a.per_cell == 0 {
        return Err(CliError::Invalid("--per-cell must be positive".into()));
    }
    let dataset = Dataset::synthesize(&classes, &snrs, a.per_cell, a.len, a.seed)?;
    write_dataset(&dataset, &a.out).map_err(|e| CliError::lib_at(&a.out, e))?;
    eprintln!(
        "wrote {} frames ({} classes x {} SNRs x {}) to {}",
        dataset.len(),
        classes.len(),
        snrs.len(),
        a.per_cell,
        a.out.display()
    );
    Ok(())
}

fn read_series(path: &Path) -> Result<Series, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut values = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let v: f64 = text.parse().map_err(|_| {
            CliError::Malformed(format!(
                "{}:{}: not a number: `{text}`",
                path.display(),
                k + 1
            ))
        })?;
        if !v.is_finite() {
            return Err(CliError::Malformed(format!(
                "{}:{}: value is not finite",
                path.display(),
                k + 1
            )));
        }
        values.push(v);
    }
    Ok(Series::new(values)?)
}

fn map(a: MapArgs) -> Result<(), CliError> {
    let series = read_series(&a.input)?;
    let graph: VisGraph = match a.method {
        Method::Vg => vg_naive(&series),
        Method::VgFast => vg_fast(&series),
        Method::Hvg => hvg(&series),
        Method::Lpvg => lpvg(&series, a.l),
        Method::Avg => {
            let bank: ConvBank = match (&a.bank, a.seed) {
                (Some(path), _) => {
                    let ch = match a.channel {
                        ChannelArg::I => Channel::I,
                        ChannelArg::Q => Channel::Q,
                    };
                    load_params(path)?.bank(ch)
                }
                (None, Some(seed)) => init_bank(a.m, seed)?,
                (None, None) => {
                    return Err(CliError::Invalid("avg needs --bank or --seed".into()));
                }
            };
            avg_forward(&series, &bank)?.to_graph()
        }
    };
    let mut out = output(a.out.as_deref())?;
    let written = match a.format {
        Format::Edgelist => graph.write_edge_list(&mut out),
        Format::Dot => graph.write_dot(&mut out),
        Format::Csv => graph.write_dense_csv(&mut out),
    };
    written.and_then(|_| out.flush()).map_err(CliError::write)
}

fn train_val(d: &DataArgs, seed: u64) -> Result<(Dataset, Dataset), CliError> {
    let data = load_dataset(&d.data)?;
    match &d.val {
        Some(path) => Ok((data, load_dataset(path)?)),
        None => Ok(split_stratified(&data, d.train_frac, seed)?),
    }
}

fn train_cmd(a: TrainArgs) -> Result<(), CliError> {
    let cfg = a.model.config(a.m);
    let (train_set, val_set) = train_val(&a.data, cfg.seed)?;
    let quiet = a.quiet;
    let outcome = train::train_with(&train_set, &val_set, &cfg, |e| {
        if !quiet {
            eprintln!(
                "epoch {:>3}  loss {:.4}  val_acc {:.4}  lr {:.6}",
                e.epoch, e.train_loss, e.val_accuracy, e.lr
            );
        }
    })?;
    save_checkpoint(outcome.params.store(), &a.checkpoint)
        .map_err(|e| CliError::lib_at(&a.checkpoint, e))?;
    let mut log = create(&a.metrics)?;
    train::write_metrics_log_csv(&mut log, &outcome.log)
        .and_then(|_| log.flush())
        .map_err(CliError::write)?;
    let bytes = outcome.params.size_bytes();
    println!(
        "best_epoch={} val_accuracy={:.4} params_bytes={} params_mb={:.3}",
        outcome.best_epoch,
        outcome.best_val_accuracy(),
        bytes,
        bytes as f64 / (1024.0 * 1024.0)
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&a.data)?;
    let params = load_params(&a.checkpoint)?;
    let report = train::evaluate(&dataset, &params)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;

    let path = a.out_dir.join("report.csv");
    let mut w = create(&path)?;
    train::write_report_csv(&mut w, &report, Some(params.size_bytes()))
        .and_then(|_| w.flush())
        .map_err(CliError::write)?;

    let path = a.out_dir.join("per_snr.csv");
    let mut w = create(&path)?;
    train::write_snr_csv(&mut w, &report)
        .and_then(|_| w.flush())
        .map_err(CliError::write)?;

    let path = a.out_dir.join("confusion.csv");
    let mut w = create(&path)?;
    train::write_confusion_csv(&mut w, &report, dataset.class_names())
        .and_then(|_| w.flush())
        .map_err(CliError::write)?;

    println!(
        "accuracy={:.4} f1_macro={:.4} recall_macro={:.4} frames={}",
        report.accuracy,
        report.f1_macro,
        report.recall_macro,
        report.total()
    );
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), CliError> {
    if a.n < 2 || a.trials == 0 {
        return Err(CliError::Invalid(
            "--n must be at least 2 and --trials positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (mut naive_s, mut fast_s) = (0.0, 0.0);
    let (mut naive_edges, mut fast_edges) = (0, 0);
    for _ in 0..a.trials {
        let series = Series::new((0..a.n).map(|_| rng.gen::<f64>()).collect())?;
        let t = Instant::now();
        let g = vg_naive(&series);
        naive_s += t.elapsed().as_secs_f64();
        naive_edges += g.edge_count();
        let t = Instant::now();
        let g = vg_fast(&series);
        fast_s += t.elapsed().as_secs_f64();
        fast_edges += g.edge_count();
    }
    let trials = a.trials as f64;
    let (naive_ms, fast_ms) = (1e3 * naive_s / trials, 1e3 * fast_s / trials);
    println!("n={} trials={}", a.n, a.trials);
    println!("vg_naive mean_ms={naive_ms:.3} edges={naive_edges}");
    println!("vg_fast mean_ms={fast_ms:.3} edges={fast_edges}");
    println!("speedup={:.1}", naive_ms / fast_ms.max(1e-9));
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let m_values = a
        .m_values
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Invalid(format!("bad --m-values entry `{s}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (train_set, val_set) = train_val(&a.data, a.model.seed)?;
    let mut out = output(a.out.as_deref())?;
    writeln!(out, "m,val_accuracy").map_err(CliError::write)?;
    for m in m_values {
        let outcome = train::train(&train_set, &val_set, &a.model.config(m))?;
        writeln!(out, "{m},{}", outcome.best_val_accuracy()).map_err(CliError::write)?;
        out.flush().map_err(CliError::write)?;
    }
    Ok(())
}
