//! Command line for training, evaluating and inspecting tri-coupled
//! relative-attention recurrent networks on two-subject interaction data.
//!
//! Exit codes: 0 success, 1 usage error, 2 unreadable or malformed data,
//! 3 numerical failure (divergence, non-finite values, failed gradient
//! check). Set `TCRA_LOG=debug` for diagnostics. Every subcommand prints
//! the configuration it resolved before doing any work, and every random
//! choice flows from `--seed`, so identical invocations produce identical
//! outputs.

use std::path::{Path, PathBuf};
use std::process;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use tcra_core::cells::PeepholeMode;
use tcra_core::eval::{evaluate, predict_prefix, truncate, EvalConfig, EvalReport};
use tcra_core::gradcheck::{grad_check_model, GradCheckConfig};
use tcra_core::model::{Arch, LossMode, Model, ModelConfig};
use tcra_core::sample::{FeatureMap, InteractionSample, Window};
use tcra_core::train::{train, TrainConfig};
use tcra_core::Tensor;

use tcra::{attention_dump, checkpoint, manifest, report, synth, Error, Result};

#[derive(Parser)]
#[command(
    name = "tcra",
    about = "Early prediction of two-subject interactions with coupled recurrent networks",
    version
)]
struct Cli {
    /// Concurrent evaluation workers.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic interaction dataset from a JSON spec.
    GenSynthetic {
        /// JSON file describing the dataset.
        #[arg(long)]
        spec: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint over a range of observation ratios.
    Eval(EvalArgs),
    /// Classify a single sample at one observation ratio.
    Predict(PredictArgs),
    /// Export a sample's attention maps as CSV and PGM images.
    DumpAttention(DumpArgs),
    /// Compare analytic gradients against finite differences.
    GradCheck(GradCheckArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory (manifest.json + features/).
    #[arg(long)]
    data: PathBuf,
    /// One of: global, naive_fusion, coupled, tricoupled, tricoupled_attention.
    #[arg(long)]
    arch: String,
    /// Hidden units per recurrent stream.
    #[arg(long, default_value_t = 512)]
    hidden: usize,
    /// Training window length L.
    #[arg(long, default_value_t = 10)]
    seq_len: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    /// Initial learning rate.
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    /// Epochs between learning-rate decays.
    #[arg(long, default_value_t = 10)]
    lr_decay_every: usize,
    /// Multiplier applied at each decay.
    #[arg(long, default_value_t = 0.1)]
    lr_decay_factor: f64,
    /// Dropout rate on classifier-head inputs.
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long, default_value_t = 0.0)]
    momentum: f64,
    /// Windows per gradient update (averaged).
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where the window loss applies: last-step or per-step-mean.
    #[arg(long, default_value = "last-step")]
    loss_mode: String,
    /// Peephole shape: full (matrices) or diagonal (vectors).
    #[arg(long, default_value = "full")]
    peephole: String,
    /// Checkpoint output directory; the training log lands here too.
    #[arg(long)]
    out: PathBuf,
    /// Checkpoint of a trained `global` model whose recurrent weights seed
    /// this model's global stream.
    #[arg(long)]
    pretrained_global: Option<PathBuf>,
    /// Keep the transplanted global stream trainable instead of frozen.
    #[arg(long)]
    finetune_global: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint directory.
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated observation ratios in (0, 1], ascending.
    #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    ratios: String,
    /// Frames between window starts.
    #[arg(long, default_value_t = 5)]
    stride: usize,
    /// Window length L.
    #[arg(long, default_value_t = 10)]
    seq_len: usize,
    /// JSON report path; the accuracy curve lands next to it as CSV.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Sample id from the manifest.
    #[arg(long)]
    sample: String,
    /// Fraction of the sample visible to the model.
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
    #[arg(long, default_value_t = 5)]
    stride: usize,
    #[arg(long, default_value_t = 10)]
    seq_len: usize,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Sample id from the manifest.
    #[arg(long)]
    sample: String,
    /// Output directory for the CSV and PGM files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradCheckArgs {
    /// One of: global, naive_fusion, coupled, tricoupled, tricoupled_attention.
    #[arg(long)]
    arch: String,
    /// Problem size; only "tiny" (K=4, D=3, hidden=8, 3 classes, L=3).
    #[arg(long, default_value = "tiny")]
    dims: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TCRA_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(
            e.kind(),
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
        ) =>
        {
            print!("{e}");
            process::exit(0);
        }
        Err(e) => {
            // Usage trouble, exit 1; clap's message includes the usage text.
            eprint!("{e}");
            process::exit(1);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.jobs == 0 {
        return Err(Error::Usage("--jobs must be at least 1".into()));
    }
    match cli.command {
        Command::GenSynthetic { spec, out } => gen_synthetic(&spec, &out),
        Command::Train(args) => run_train(&args),
        Command::Eval(args) => run_eval(&args, cli.jobs),
        Command::Predict(args) => run_predict(&args),
        Command::DumpAttention(args) => run_dump(&args),
        Command::GradCheck(args) => run_grad_check(&args),
    }
}

fn parse_arch(name: &str) -> Result<Arch> {
    Arch::from_name(name).ok_or_else(|| {
        Error::Usage(format!(
            "--arch: unknown architecture {name:?} (expected one of {})",
            Arch::ALL
                .iter()
                .map(|a| a.name())
                .collect::<Vec<_>>()
                .join(", ")
        ))
    })
}

fn parse_loss_mode(name: &str) -> Result<LossMode> {
    match name {
        "last-step" => Ok(LossMode::LastStep),
        "per-step-mean" => Ok(LossMode::PerStepMean),
        other => Err(Error::Usage(format!(
            "--loss-mode: {other:?} is not last-step or per-step-mean"
        ))),
    }
}

fn parse_peephole(name: &str) -> Result<PeepholeMode> {
    match name {
        "full" => Ok(PeepholeMode::Full),
        "diagonal" => Ok(PeepholeMode::Diagonal),
        other => Err(Error::Usage(format!(
            "--peephole: {other:?} is not full or diagonal"
        ))),
    }
}

fn parse_ratios(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Usage(format!("--ratios: {s:?}: {e}")))
        })
        .collect()
}

fn gen_synthetic(spec_path: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let spec: synth::SyntheticSpec =
        serde_json::from_str(&text).map_err(|e| Error::json(spec_path, e))?;
    println!("resolved spec: {spec:?}");
    let manifest = synth::generate_to_dir(&spec, out)?;
    println!(
        "wrote {} samples ({} classes, {}x{} grid, {} channels) to {}",
        manifest.samples.len(),
        manifest.num_classes(),
        manifest.dims.d,
        manifest.dims.d,
        manifest.dims.k,
        out.display()
    );
    Ok(())
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let arch = parse_arch(&args.arch)?;
    let (data, samples) = manifest::load_dataset(&args.data)?;
    log::info!("loaded {} samples from {}", samples.len(), args.data.display());

    let mut model_config = ModelConfig::new(arch, data.num_classes(), data.dims.k, data.dims.d);
    model_config.hidden = args.hidden;
    model_config.dropout_rate = args.dropout;
    model_config.loss_mode = parse_loss_mode(&args.loss_mode)?;
    model_config.peephole = parse_peephole(&args.peephole)?;
    model_config
        .validate()
        .map_err(|e| Error::Usage(format!("model flags: {e}")))?;

    let train_config = TrainConfig {
        lr0: args.lr,
        decay_every: args.lr_decay_every,
        decay_factor: args.lr_decay_factor,
        epochs: args.epochs,
        window: args.seq_len,
        dropout_rate: args.dropout,
        momentum: args.momentum,
        batch_size: args.batch_size,
        seed: args.seed,
    };
    train_config
        .validate()
        .map_err(|e| Error::Usage(format!("training flags: {e}")))?;

    println!("resolved model config: {model_config:?}");
    println!("resolved train config: {train_config:?}");

    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let mut model = Model::new(model_config, &mut rng)?;
    if let Some(source) = &args.pretrained_global {
        let copied = checkpoint::apply_pretrained_global(&mut model, source, args.finetune_global)?;
        println!(
            "adopted {copied} global-stream parameters from {} ({})",
            source.display(),
            if args.finetune_global { "fine-tuning" } else { "frozen" }
        );
    }

    let log = train(&mut model, &samples, &train_config)?;
    for e in &log.epochs {
        println!(
            "epoch {:>3}: loss {:.6}  acc {:.4}  lr {}",
            e.epoch, e.loss, e.accuracy, e.lr
        );
    }

    checkpoint::save(&model, &args.out)?;
    report::write_train_log_csv(&args.out.join("train_log.csv"), &log)?;
    report::write_train_log_json(&args.out.join("train_log.json"), &log)?;
    println!("checkpoint written to {}", args.out.display());
    Ok(())
}

fn eval_config(ratios: &str, stride: usize, seq_len: usize) -> Result<EvalConfig> {
    let config = EvalConfig {
        observation_ratios: parse_ratios(ratios)?,
        stride,
        window: seq_len,
    };
    config
        .validate()
        .map_err(|e| Error::Usage(format!("evaluation flags: {e}")))?;
    Ok(config)
}

/// Scores chunks of the dataset on worker threads and merges the counts.
/// The merge reproduces the sequential result exactly: per-sample outcomes
/// are independent, and the aggregate is integer counting plus one final
/// division.
fn evaluate_jobs(
    model: &Model<f64>,
    samples: &[InteractionSample<f64>],
    config: &EvalConfig,
    jobs: usize,
) -> Result<EvalReport> {
    if jobs <= 1 || samples.len() < 2 {
        return evaluate(model, samples, config).map_err(Error::Core);
    }
    let chunk = samples.len().div_ceil(jobs);
    let parts: Vec<tcra_core::Result<EvalReport>> = std::thread::scope(|scope| {
        let workers: Vec<_> = samples
            .chunks(chunk)
            .map(|part| scope.spawn(move || evaluate(model, part, config)))
            .collect();
        workers
            .into_iter()
            .map(|w| w.join().expect("evaluation worker panicked"))
            .collect()
    });

    let mut merged: Option<EvalReport> = None;
    for part in parts {
        let part = part.map_err(Error::Core)?;
        match &mut merged {
            None => merged = Some(part),
            Some(whole) => {
                for (dst, src) in whole.ratios.iter_mut().zip(part.ratios) {
                    dst.correct += src.correct;
                    dst.total += src.total;
                    for (drow, srow) in dst.confusion.iter_mut().zip(src.confusion) {
                        for (d, s) in drow.iter_mut().zip(srow) {
                            *d += s;
                        }
                    }
                    dst.samples.extend(src.samples);
                }
            }
        }
    }
    let mut whole = merged.expect("at least one chunk");
    for r in &mut whole.ratios {
        r.accuracy = r.correct as f64 / r.total as f64;
    }
    Ok(whole)
}

fn run_eval(args: &EvalArgs, jobs: usize) -> Result<()> {
    let config = eval_config(&args.ratios, args.stride, args.seq_len)?;
    let model = checkpoint::load(&args.ckpt)?;
    let (_, samples) = manifest::load_dataset(&args.data)?;
    println!("resolved model config: {:?}", model.config());
    println!("resolved eval config: {config:?} (jobs {jobs})");

    let result = evaluate_jobs(&model, &samples, &config, jobs)?;
    for r in &result.ratios {
        println!(
            "ratio {:.2}: accuracy {:.4} ({}/{})",
            r.ratio, r.accuracy, r.correct, r.total
        );
    }
    report::write_eval_json(&args.report, &result)?;
    report::write_eval_csv(&args.report.with_extension("csv"), &result)?;
    println!("report written to {}", args.report.display());
    Ok(())
}

fn load_one_sample(data: &Path, id: &str) -> Result<(manifest::Manifest, InteractionSample<f64>)> {
    let m = manifest::load_manifest(data)?;
    let entry = m
        .samples
        .iter()
        .find(|s| s.id == id)
        .ok_or_else(|| {
            Error::Core(tcra_core::Error::Data(format!(
                "--sample: no sample named {id:?} in {}",
                manifest::manifest_path(data).display()
            )))
        })?
        .clone();
    let sample = manifest::load_sample(data, m.dims, &entry)?;
    Ok((m, sample))
}

fn run_predict(args: &PredictArgs) -> Result<()> {
    if !(args.ratio > 0.0 && args.ratio <= 1.0) {
        return Err(Error::Usage(format!(
            "--ratio: {} is outside (0, 1]",
            args.ratio
        )));
    }
    let model = checkpoint::load(&args.ckpt)?;
    let (m, sample) = load_one_sample(&args.data, &args.sample)?;
    println!("resolved model config: {:?}", model.config());
    println!(
        "resolved prediction: sample {:?}, ratio {}, window {}, stride {}",
        args.sample, args.ratio, args.seq_len, args.stride
    );

    let prefix = truncate(&sample, args.ratio)?;
    let probs = predict_prefix(&model, &prefix, args.seq_len, args.stride)?;
    let predicted = tcra_core::eval::argmax_lowest(probs.data());
    println!(
        "observed {} of {} frames",
        prefix.len(),
        sample.len()
    );
    for (i, p) in probs.data().iter().enumerate() {
        println!("  {:<16} {:.6}", m.class_names[i], p);
    }
    println!(
        "predicted: {} (true: {})",
        m.class_names[predicted], m.class_names[sample.label]
    );
    Ok(())
}

fn run_dump(args: &DumpArgs) -> Result<()> {
    let model = checkpoint::load(&args.ckpt)?;
    let (_, sample) = load_one_sample(&args.data, &args.sample)?;
    println!("resolved model config: {:?}", model.config());

    let window = sample.window(0, sample.len());
    let prediction = model.predict(&window)?;
    let trace = prediction.attention.ok_or_else(|| {
        Error::Core(tcra_core::Error::Config(format!(
            "arch {} computes no attention maps",
            model.arch().name()
        )))
    })?;

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let side = model.config().side;
    let mut written = 0;
    for (subject, steps) in [("subject1", &trace.subject1), ("subject2", &trace.subject2)] {
        let csv = args.out.join(format!("{}_{subject}.csv", sample.id));
        attention_dump::write_csv(&csv, steps, side)?;
        written += 1 + attention_dump::write_pgms(&args.out, &sample.id, subject, steps, side)?.len();
    }
    println!(
        "wrote {written} files ({} steps per subject) to {}",
        sample.len(),
        args.out.display()
    );
    Ok(())
}

/// Random feature window for the gradient check: values uniform in [-1, 1].
fn random_window(rng: &mut ChaCha12Rng, side: usize, channels: usize, len: usize) -> Window<f64> {
    let stream = |rng: &mut ChaCha12Rng| -> Vec<FeatureMap<f64>> {
        (0..len)
            .map(|_| {
                let data: Vec<f64> = (0..side * side * channels)
                    .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                    .collect();
                FeatureMap::new(
                    side,
                    channels,
                    Tensor::new(vec![side * side, channels], data).expect("sized data"),
                )
                .expect("sized map")
            })
            .collect()
    };
    Window {
        subject1: stream(rng),
        subject2: stream(rng),
        global: stream(rng),
    }
}

fn run_grad_check(args: &GradCheckArgs) -> Result<()> {
    let arch = parse_arch(&args.arch)?;
    if args.dims != "tiny" {
        return Err(Error::Usage(format!(
            "--dims: {:?} is not supported (only \"tiny\")",
            args.dims
        )));
    }
    // Tiny but structurally complete: every parameter block exercised.
    let (channels, side, hidden, classes, len) = (4, 3, 8, 3, 3);
    let mut config = ModelConfig::new(arch, classes, channels, side);
    config.hidden = hidden;
    println!("resolved model config: {config:?}");
    println!("resolved check: step 1e-5, tolerance 1e-4, window {len}, seed {}", args.seed);

    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let mut model = Model::new(config, &mut rng)?;
    let window = random_window(&mut rng, side, channels, len);
    let label = rng.random_range(0..classes);

    let check = GradCheckConfig::default();
    let result = grad_check_model(&mut model, &window, label, &check)?;
    println!(
        "compared {} parameter entries, max relative error {:.3e}",
        result.checks, result.max_rel_err
    );
    if let Some(w) = &result.worst {
        println!(
            "worst: {}[{}] analytic {:.6e} vs numeric {:.6e}",
            w.param, w.index, w.analytic, w.numeric
        );
    }
    if result.pass() {
        println!("gradient check passed");
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "gradient check failed: max relative error {:.3e} exceeds {:.1e}",
            result.max_rel_err, check.tolerance
        )))
    }
}
