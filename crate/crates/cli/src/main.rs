mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slimconv::bench::{self, BenchConfig, Format};
use slimconv::data::{self, Dataset};
use slimconv::train;
use slimconv::zoo::{self, Arch, BuildOptions};
use slimconv::{Network, Rng};

use config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "slimconv", version, about = "Train, evaluate and benchmark lightweight CNN classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset container.
    Synth(SynthArgs),
    /// Convert a directory of per-class PGM folders into a dataset container.
    Import(ImportArgs),
    /// Train a zoo architecture from a config file.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset.
    Eval(EvalArgs),
    /// Print the layer table and parameter count of an architecture.
    Params(ParamsArgs),
    /// Measure batch and individual inference latency.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(2..))]
    classes: u32,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(1..))]
    per_class: u32,
    #[arg(long, default_value_t = 28, value_parser = clap::value_parser!(u32).range(8..))]
    size: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ImportArgs {
    /// Directory holding one sub-directory of P5 PGM files per class.
    #[arg(long)]
    dir: PathBuf,
    /// Target image side length; images are resized bilinearly.
    #[arg(long, default_value_t = 28, value_parser = clap::value_parser!(u32).range(2..))]
    size: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// `key = value` run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset container or PGM directory; overrides `data` in the config.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long)]
    arch: String,
    #[arg(long)]
    se: bool,
    #[arg(long)]
    blurpool: bool,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 28)]
    input_size: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated architecture names, or `all`.
    #[arg(long, default_value = "all")]
    archs: String,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// `markdown` or `csv`.
    #[arg(long, default_value = "markdown")]
    format: String,
    /// Pin the benchmark thread to its current CPU.
    #[arg(long)]
    pin: bool,
    /// Row used for ratio columns; defaults to the largest model.
    #[arg(long)]
    reference: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// A failed command: usage problems exit with 1, data or model problems with 2.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn data_err(context: &Path) -> impl Fn(slimconv::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", context.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Import(a) => cmd_import(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Params(a) => cmd_params(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Usage(m) | CliError::Data(m)) = &e;
            eprintln!("error: {m}");
            ExitCode::from(e.code())
        }
    }
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    let set = data::synth(a.classes as usize, a.per_class as usize, a.size as usize, a.seed).map_err(usage)?;
    data::save_container(&set, &a.out).map_err(data_err(&a.out))?;
    print!("wrote {}\n{}", a.out.display(), set.summary());
    Ok(())
}

fn cmd_import(a: ImportArgs) -> Result<(), CliError> {
    let size = a.size as usize;
    let set = data::import_directory(&a.dir, (size, size)).map_err(data_err(&a.dir))?;
    data::save_container(&set, &a.out).map_err(data_err(&a.out))?;
    print!("wrote {}\n{}", a.out.display(), set.summary());
    Ok(())
}

/// Reads a CDS1 container, or imports a PGM class directory at `size`.
fn load_dataset(path: &Path, size: usize) -> Result<Dataset, CliError> {
    if path.is_dir() {
        data::import_directory(path, (size, size)).map_err(data_err(path))
    } else {
        data::load_container(path).map_err(data_err(path))
    }
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(d) = a.data {
        cfg.data = Some(d);
    }
    if let Some(o) = a.out {
        cfg.out = o;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let train_cfg = cfg.train_config()?;
    let data_path = cfg.data.clone().ok_or_else(|| usage("no dataset: set `data` in the config or pass --data"))?;

    println!("# effective config");
    print!("{}", cfg.render());
    println!();

    let set = load_dataset(&data_path, 28)?;
    let (h, w) = set.image_size();
    if h != w {
        return Err(CliError::Data(format!("{}: images must be square, got {h}x{w}", data_path.display())));
    }
    let (train_set, eval_set) = if cfg.eval_fraction > 0.0 {
        let (t, e) = set.split(1.0 - cfg.eval_fraction, cfg.seed).map_err(data_err(&data_path))?;
        (t, Some(e))
    } else {
        (set, None)
    };
    println!("train: {}", train_set.summary().lines().next().unwrap_or(""));
    if let Some(e) = &eval_set {
        println!("eval: {}", e.summary().lines().next().unwrap_or(""));
    }

    let opts = cfg.build_options(h, train_set.num_classes());
    let mut net: Network<f32> = zoo::build(cfg.arch.name(), &opts, &mut Rng::new(cfg.seed)).map_err(usage)?;
    println!("model: {} ({} parameters)", net.name(), net.param_count());

    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::Data(format!("{}: {e}", cfg.out.display())))?;
    std::fs::write(cfg.out.join("config.txt"), cfg.render())
        .map_err(|e| CliError::Data(format!("{}: {e}", cfg.out.display())))?;

    let outcome = train::train(&mut net, &train_set, eval_set.as_ref(), &train_cfg).map_err(data_err(&data_path))?;
    for e in &outcome.report.epochs {
        let eval = e.eval_acc.map_or_else(String::new, |a| format!(" eval_acc {a:.4}"));
        println!(
            "epoch {:>3}  loss {:.4}  train_acc {:.4}{eval}  ({:.1}s)",
            e.epoch, e.train_loss, e.train_acc, e.seconds
        );
    }

    let model_path = cfg.out.join("model.cnm");
    zoo::save(&net, &model_path).map_err(data_err(&model_path))?;
    println!("wrote {}", model_path.display());
    if let Some(swa) = &outcome.swa {
        let swa_path = cfg.out.join("model-swa.cnm");
        zoo::save(swa, &swa_path).map_err(data_err(&swa_path))?;
        println!("wrote {}", swa_path.display());
        if let Some(e) = &eval_set {
            let acc = train::evaluate(swa, e).map_err(data_err(&swa_path))?.accuracy;
            println!("swa eval_acc {acc:.4}");
        }
    }
    let report_path = cfg.out.join("report.csv");
    outcome.report.write_csv(&report_path).map_err(data_err(&report_path))?;
    println!("wrote {}", report_path.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let net = zoo::load(&a.model).map_err(data_err(&a.model))?;
    let set = load_dataset(&a.data, net.input_dims().h)?;
    let report = train::evaluate(&net, &set).map_err(data_err(&a.data))?;
    let mut out = String::new();
    let _ = writeln!(out, "model: {}", net.name());
    let _ = writeln!(out, "accuracy: {:.4}", report.accuracy);
    let _ = writeln!(out, "mean loss: {:.4}\n", report.mean_loss);
    out.push_str("| class | samples | accuracy |\n|---|---|---|\n");
    for ((name, count), acc) in set.class_names().iter().zip(set.class_counts()).zip(&report.per_class_accuracy) {
        let acc = acc.map_or_else(|| "-".to_string(), |a| format!("{a:.4}"));
        let _ = writeln!(out, "| {name} | {count} | {acc} |");
    }
    print!("{out}");
    Ok(())
}

fn cmd_params(a: ParamsArgs) -> Result<(), CliError> {
    let arch: Arch = a.arch.parse().map_err(usage)?;
    let opts = BuildOptions::default()
        .with_squeeze_excite(a.se)
        .with_blurpool(a.blurpool)
        .with_classes(a.classes)
        .with_input_size(a.input_size);
    let net: Network<f32> = zoo::build(arch.name(), &opts, &mut Rng::new(0)).map_err(usage)?;
    print!("{}", zoo::describe(&net));
    println!("\ntotal parameters: {}", net.param_count());
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), CliError> {
    let fmt: Format = a.format.parse().map_err(usage)?;
    let archs: Vec<Arch> = if a.archs == "all" {
        Arch::ALL.to_vec()
    } else {
        a.archs.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>().map_err(usage)?
    };
    let config = BenchConfig {
        batch_size: a.batch,
        warmup_iters: a.warmup,
        measure_iters: a.iters,
        input: None,
        pin_thread: a.pin,
        reference: a.reference,
        seed: a.seed,
    };
    config.validate().map_err(usage)?;
    let nets: Vec<Network<f32>> = archs
        .iter()
        .map(|arch| zoo::build(arch.name(), &BuildOptions::default(), &mut Rng::new(a.seed)))
        .collect::<Result<_, _>>()
        .map_err(usage)?;
    let refs: Vec<&Network<f32>> = nets.iter().collect();
    let report = bench::compare(&refs, &config).map_err(usage)?;
    print!("{}", bench::emit(&report, fmt));
    Ok(())
}
