//! Command-line entry point: dataset synthesis, training, evaluation,
//! gradient verification, ablation sweeps, and introspection exports.

use clap::{Args, Parser, Subcommand};
use panet::error::{Error, Result};
use panet::model::{bind, forward, HyperParams, Mode};
use panet::shapegen::dataset::{
    build_dataset, read_dataset, write_dataset, DatasetFile, Regime, Sampler,
};
use panet::train::{
    evaluate, load_checkpoint, run_ablation, save_checkpoint, train_model, write_ablation_csv,
    write_epoch_log, AblationScale, TrainConfig,
};
use sha2::Digest;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "panet",
    version,
    about = "Part-aware multi-view 3D object recognition on synthetic shape datasets"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Config preset name (`tiny`, `full`) or path to a JSON config file.
    #[arg(long, default_value = "full")]
    config: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a multi-view dataset file.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Output directory for the dataset and manifest.
        #[arg(long)]
        out: PathBuf,
        /// Viewpoint regime: aligned, rotated, arbitrary.
        #[arg(long)]
        regime: Option<String>,
        /// Viewpoint sampler: random, fps.
        #[arg(long)]
        sampler: Option<String>,
        /// Objects per class.
        #[arg(long)]
        count: Option<u32>,
    },
    /// Train a model on a dataset file.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Evaluate a checkpoint on a dataset file.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify analytic gradients against finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
    /// Run a scripted ablation sweep and write its CSV.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Suite: component, attention_M, parts_L, sampler.
        #[arg(long)]
        suite: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        train_per_class: u32,
        #[arg(long, default_value_t = 4)]
        test_per_class: u32,
        /// Comma-separated training seeds.
        #[arg(long, default_value = "0,1,2")]
        seeds: String,
    },
    /// Export attention overlays and the part correlation matrix.
    Inspect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dataset sample index to inspect.
        #[arg(long, default_value_t = 0)]
        sample: usize,
    },
}

/// Flat JSON config: model hyperparameters, training settings, and dataset
/// synthesis counts. Command-line flags override file values.
#[derive(Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    k: usize,
    r: usize,
    encoder_channels: Vec<usize>,
    m: usize,
    l: usize,
    apr_depth: usize,
    heads: usize,
    use_cva: bool,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    weight_decay: f64,
    epochs: usize,
    batch_size: usize,
    gamma: f64,
    smoothing: f64,
    regime: Regime,
    sampler: Sampler,
    max_train_views: Option<usize>,
    eval_every: usize,
    flip_prob: f64,
    erase_prob: f64,
    count_per_class: u32,
}

impl Default for FileConfig {
    fn default() -> FileConfig {
        FileConfig::from_parts(&HyperParams::full(), &TrainConfig::default(), 100)
    }
}

impl FileConfig {
    fn from_parts(hp: &HyperParams, cfg: &TrainConfig, count_per_class: u32) -> FileConfig {
        FileConfig {
            k: hp.k,
            r: hp.r,
            encoder_channels: hp.encoder_channels.clone(),
            m: hp.m,
            l: hp.l,
            apr_depth: hp.apr_depth,
            heads: hp.heads,
            use_cva: hp.use_cva,
            learning_rate: cfg.learning_rate,
            beta1: cfg.betas.0,
            beta2: cfg.betas.1,
            weight_decay: cfg.weight_decay,
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            gamma: cfg.gamma,
            smoothing: cfg.smoothing,
            regime: cfg.regime,
            sampler: cfg.sampler,
            max_train_views: cfg.max_train_views,
            eval_every: cfg.eval_every,
            flip_prob: cfg.flip_prob,
            erase_prob: cfg.erase_prob,
            count_per_class,
        }
    }

    fn tiny() -> FileConfig {
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 2,
            max_train_views: None,
            ..TrainConfig::default()
        };
        FileConfig::from_parts(&HyperParams::tiny(), &cfg, 4)
    }

    fn hyperparams(&self) -> HyperParams {
        HyperParams {
            k: self.k,
            r: self.r,
            encoder_channels: self.encoder_channels.clone(),
            m: self.m,
            l: self.l,
            apr_depth: self.apr_depth,
            heads: self.heads,
            use_cva: self.use_cva,
        }
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            betas: (self.beta1, self.beta2),
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            batch_size: self.batch_size,
            gamma: self.gamma,
            smoothing: self.smoothing,
            seed,
            regime: self.regime,
            sampler: self.sampler,
            max_train_views: self.max_train_views,
            eval_every: self.eval_every,
            flip_prob: self.flip_prob,
            erase_prob: self.erase_prob,
        }
    }
}

fn load_config(name: &str) -> Result<FileConfig> {
    match name {
        "full" => Ok(FileConfig::default()),
        "tiny" => Ok(FileConfig::tiny()),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Usage(format!("config {}: {}", path, e)))
        }
    }
}

/// Reproducibility record written into the output directory before any
/// long computation starts.
#[derive(serde::Serialize)]
struct RunManifest {
    tool_version: &'static str,
    command: String,
    seed: u64,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    /// SHA-256 of the dataset file actually read, when one is.
    dataset_digest: Option<String>,
    config: serde_json::Value,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(format!("{:x}", sha2::Sha256::digest(&bytes)))
}

fn write_manifest(out_dir: &Path, manifest: &RunManifest) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Format(format!("manifest: {}", e)))?;
    std::fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn manifest(
    command: &str,
    seed: u64,
    config: &FileConfig,
    inputs: &[(&str, &Path)],
    outputs: &[(&str, &Path)],
    dataset_digest: Option<String>,
) -> Result<RunManifest> {
    let to_map = |pairs: &[(&str, &Path)]| {
        pairs
            .iter()
            .map(|(k, p)| (k.to_string(), p.display().to_string()))
            .collect()
    };
    Ok(RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        seed,
        inputs: to_map(inputs),
        outputs: to_map(outputs),
        dataset_digest,
        config: serde_json::to_value(config)
            .map_err(|e| Error::Format(format!("config: {}", e)))?,
    })
}

fn view_histogram(data: &DatasetFile) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for s in &data.samples {
        *hist.entry(s.view_count()).or_insert(0) += 1;
    }
    hist
}

fn load_data(path: &Path, hp: &mut HyperParams) -> Result<DatasetFile> {
    let data = read_dataset(path)?;
    hp.k = data.k as usize;
    hp.r = data.r as usize;
    hp.validate()?;
    Ok(data)
}

fn cmd_gen_data(
    common: Common,
    out: PathBuf,
    regime: Option<String>,
    sampler: Option<String>,
    count: Option<u32>,
) -> Result<()> {
    let mut config = load_config(&common.config)?;
    if let Some(r) = regime {
        config.regime = r.parse()?;
    }
    if let Some(s) = sampler {
        config.sampler = s.parse()?;
    }
    if let Some(c) = count {
        config.count_per_class = c;
    }
    let dataset_path = out.join("dataset.pds");
    write_manifest(
        &out,
        &manifest(
            "gen-data",
            common.seed,
            &config,
            &[],
            &[("dataset", &dataset_path)],
            None,
        )?,
    )?;
    let data = build_dataset(
        config.regime,
        config.sampler,
        config.count_per_class,
        config.k as u32,
        config.r as u32,
        common.seed,
    )?;
    write_dataset(&data, &dataset_path)?;
    println!(
        "wrote {} ({} classes, {} objects, {} per class)",
        dataset_path.display(),
        data.k,
        data.samples.len(),
        config.count_per_class
    );
    println!("view-count histogram:");
    for (v, n) in view_histogram(&data) {
        println!("  v={:2}: {}", v, n);
    }
    Ok(())
}

fn cmd_train(
    common: Common,
    data_path: PathBuf,
    out: PathBuf,
    epochs: Option<usize>,
    gamma: Option<f64>,
) -> Result<()> {
    let mut config = load_config(&common.config)?;
    if let Some(e) = epochs {
        config.epochs = e;
    }
    if let Some(g) = gamma {
        config.gamma = g;
    }
    let mut hp = config.hyperparams();
    let data = load_data(&data_path, &mut hp)?;
    config.k = hp.k;
    config.r = hp.r;
    let cfg = config.train_config(common.seed);
    cfg.validate()?;
    let digest = sha256_file(&data_path)?;
    let ckpt_path = out.join("checkpoint.pck");
    let log_path = out.join("epochs.csv");
    write_manifest(
        &out,
        &manifest(
            "train",
            common.seed,
            &config,
            &[("dataset", &data_path)],
            &[("checkpoint", &ckpt_path), ("epoch_log", &log_path)],
            Some(digest),
        )?,
    )?;
    let (params, opt, stats) = train_model(&hp, &cfg, &data.samples, None)?;
    save_checkpoint(&hp, &params, &opt, &cfg, &ckpt_path)?;
    write_epoch_log(&stats, &log_path)?;
    if let Some(last) = stats.last() {
        println!(
            "epoch {}: mean loss {:.4}, train instance accuracy {:.4}",
            last.epoch, last.mean_loss, last.train_inst_acc
        );
    }
    println!("wrote {}", ckpt_path.display());
    Ok(())
}

fn write_confusion_csv(confusion: &[Vec<u64>], path: &Path) -> Result<()> {
    let mut text = String::new();
    for row in confusion {
        let cells: Vec<String> = row.iter().map(|n| n.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn cmd_eval(common: Common, data_path: PathBuf, ckpt_path: PathBuf, out: PathBuf) -> Result<()> {
    let (hp, params, _, cfg) = load_checkpoint(&ckpt_path)?;
    let data = read_dataset(&data_path)?;
    if data.k as usize != hp.k || data.r as usize != hp.r {
        return Err(Error::Usage(format!(
            "dataset is K={} R={} but checkpoint expects K={} R={}",
            data.k, data.r, hp.k, hp.r
        )));
    }
    let config = FileConfig::from_parts(&hp, &cfg, 0);
    let digest = sha256_file(&data_path)?;
    let confusion_path = out.join("confusion.csv");
    write_manifest(
        &out,
        &manifest(
            "eval",
            common.seed,
            &config,
            &[("dataset", &data_path), ("checkpoint", &ckpt_path)],
            &[("confusion", &confusion_path)],
            Some(digest),
        )?,
    )?;
    let metrics = evaluate(&hp, &params, &data.samples)?;
    write_confusion_csv(&metrics.confusion, &confusion_path)?;
    println!("per-instance accuracy: {:.6}", metrics.per_instance_acc);
    println!("per-class accuracy:    {:.6}", metrics.per_class_acc);
    Ok(())
}

const PRIMITIVE_TOLERANCE: f64 = 1e-4;
const END_TO_END_TOLERANCE: f64 = 1e-3;

fn cmd_gradcheck(common: Common) -> Result<()> {
    // The config preset selects nothing here beyond documentation: the
    // end-to-end check always runs the smallest configuration.
    load_config(&common.config)?;
    let prim = panet::gradcheck::primitive_suite(common.seed)?;
    println!(
        "primitive max relative error: {:.3e} (tolerance {:.0e})",
        prim, PRIMITIVE_TOLERANCE
    );
    let e2e = panet::gradcheck::end_to_end_check(common.seed)?;
    println!(
        "end-to-end max relative error: {:.3e} (tolerance {:.0e})",
        e2e, END_TO_END_TOLERANCE
    );
    if prim > PRIMITIVE_TOLERANCE || e2e > END_TO_END_TOLERANCE {
        return Err(Error::NonFinite("gradient check exceeded tolerance".into()));
    }
    println!("gradient check passed");
    Ok(())
}

fn cmd_ablate(
    common: Common,
    suite: String,
    out: PathBuf,
    train_per_class: u32,
    test_per_class: u32,
    seeds: String,
) -> Result<()> {
    let config = load_config(&common.config)?;
    let seeds: Vec<u64> = seeds
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Usage(format!("bad seed '{}'", s)))
        })
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        return Err(Error::Usage("at least one seed required".into()));
    }
    let csv_path = out.join("ablation.csv");
    write_manifest(
        &out,
        &manifest(
            "ablate",
            common.seed,
            &config,
            &[],
            &[("ablation", &csv_path)],
            None,
        )?,
    )?;
    let runs = run_ablation(
        &suite,
        &config.hyperparams(),
        &config.train_config(common.seed),
        AblationScale {
            train_per_class,
            test_per_class,
            data_seed: common.seed,
        },
        &seeds,
    )?;
    write_ablation_csv(&runs, &csv_path)?;
    for r in &runs {
        println!(
            "{} {} seed {}: instance {:.4}, class {:.4} ({:.1}s)",
            r.suite, r.setting, r.seed, r.metrics.per_instance_acc, r.metrics.per_class_acc,
            r.wall_seconds
        );
    }
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn cmd_inspect(
    common: Common,
    data_path: PathBuf,
    ckpt_path: PathBuf,
    out: PathBuf,
    sample: usize,
) -> Result<()> {
    let (hp, params, _, cfg) = load_checkpoint(&ckpt_path)?;
    let data = read_dataset(&data_path)?;
    if sample >= data.samples.len() {
        return Err(Error::Usage(format!(
            "sample index {} out of range ({} samples)",
            sample,
            data.samples.len()
        )));
    }
    let config = FileConfig::from_parts(&hp, &cfg, 0);
    let digest = sha256_file(&data_path)?;
    let corr_path = out.join("correlation.csv");
    write_manifest(
        &out,
        &manifest(
            "inspect",
            common.seed,
            &config,
            &[("dataset", &data_path), ("checkpoint", &ckpt_path)],
            &[("correlation", &corr_path), ("overlays", &out)],
            Some(digest),
        )?,
    )?;
    let tape = panet::autograd::Tape::new();
    let bound = bind(&tape, &params);
    let fwd = forward(
        &tape,
        &bound,
        &hp,
        &data.samples[sample],
        0.0,
        0.0,
        Mode::Eval,
    )?;
    let files = panet::introspect::export_attention_overlays(&fwd.attention, hp.r, &out)?;
    let corr = panet::introspect::part_correlation(fwd.global_parts.value())?;
    panet::introspect::write_correlation_csv(&corr, &corr_path)?;
    println!(
        "wrote {} overlays and {}",
        files.len(),
        corr_path.display()
    );
    if hp.l >= 2 {
        println!(
            "mean off-diagonal part correlation: {:.6}",
            panet::introspect::mean_offdiag(&corr)?
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenData {
            common,
            out,
            regime,
            sampler,
            count,
        } => cmd_gen_data(common, out, regime, sampler, count),
        Cmd::Train {
            common,
            data,
            out,
            epochs,
            gamma,
        } => cmd_train(common, data, out, epochs, gamma),
        Cmd::Eval {
            common,
            data,
            checkpoint,
            out,
        } => cmd_eval(common, data, checkpoint, out),
        Cmd::Gradcheck { common } => cmd_gradcheck(common),
        Cmd::Ablate {
            common,
            suite,
            out,
            train_per_class,
            test_per_class,
            seeds,
        } => cmd_ablate(common, suite, out, train_per_class, test_per_class, seeds),
        Cmd::Inspect {
            common,
            data,
            checkpoint,
            out,
            sample,
        } => cmd_inspect(common, data, checkpoint, out, sample),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            match e {
                Error::Usage(_) | Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
