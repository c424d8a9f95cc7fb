//! Command-line surface: argument definitions, config-file merging and the
//! subcommand implementations behind the `mfi-pso` binary.
//!
//! Every subcommand accepts `--config FILE`, a JSON object whose keys are the
//! subcommand's long flag names (e.g. `{"np": 100, "eps": 0.1}`). Values given
//! on the command line take precedence over the file. Progress goes to the
//! log (standard error); results go to files only.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::adversary::{
    generate_adversarial, generate_adversarial_set, score_dataset, AdversarialResult, AttackSpec,
    DatasetAttackSpec, ImageScore, LossKind,
};
use crate::classifier::{self, accuracy, Activation, ClassifierModel, ModelSpec, TrainConfig, TrainingSummary};
use crate::data::{self, split, synth_blobs, BlobParams, Dataset};
use crate::error::{Error, Result};
use crate::mfi::{pixel_mfi_map, quantile};
use crate::pso::SwarmConfig;
use crate::report::{self, AttackRecord, AttackReport};

/// Exit status for a successful run.
pub const EXIT_OK: u8 = 0;
/// Unclassified failure (numerical breakdown, diverged training, ...).
pub const EXIT_FAILURE: u8 = 1;
/// Bad flags, config or input file contents.
pub const EXIT_PARSE: u8 = 2;
/// A file could not be read or written.
pub const EXIT_IO: u8 = 3;
/// The attack ran but its success criteria were not met.
pub const EXIT_INFEASIBLE: u8 = 4;

/// Maps an error to the process exit status.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::Json(e) if e.is_io() => EXIT_IO,
        Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => EXIT_IO,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Input(_) | Error::Parse { .. } | Error::Json(_) | Error::Csv(_) | Error::Checkpoint(_) | Error::Decode { .. } => {
            EXIT_PARSE
        }
        Error::Numerical(_) | Error::TrainingDiverged { .. } | Error::NonFiniteObjective { .. } => EXIT_FAILURE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "mfi-pso", version, about = "Manifold-influence guided particle swarm adversarial images")]
pub struct Cli {
    /// Log more (-v debug, -vv trace); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic blobs dataset as IDX files.
    Synth(SynthArgs),
    /// Train the reference MLP and save a checkpoint.
    Train(TrainArgs),
    /// Continue training on clean plus adversarial data.
    Finetune(FinetuneArgs),
    /// Pixel-level mFI heatmap for one image, or image-level mFIs for a dataset.
    MfiMap(MfiMapArgs),
    /// Attack a single image.
    Attack(AttackArgs),
    /// Select vulnerable images of a dataset and attack each of them.
    AttackSet(AttackSetArgs),
    /// Rebuild success-rate tables from stored attack-set outputs.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Image side length in pixels.
    #[arg(long)]
    pub side: Option<usize>,
    /// Standard deviation of the additive pixel noise.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Fraction held out as `test/`; 0 writes a single dataset.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Training data: IDX image file (with --labels), directory holding
    /// images.idx/labels.idx or images plus labels.csv, or a dataset JSON.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// IDX label file when `--data` is an IDX image file.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Class count; inferred from the labels when absent.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Checkpoint to write; a `.summary.json` is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Vec<usize>,
    /// Hidden activation: tanh or identity.
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Fraction of the data held out for validation.
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct FinetuneArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Clean training data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Adversarial training data (an `attack-set` output directory or dataset).
    #[arg(long)]
    pub adv: Option<PathBuf>,
    /// Clean test data for the before/after comparison.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Adversarial test data for the before/after comparison.
    #[arg(long)]
    pub adv_test: Option<PathBuf>,
    /// Checkpoint to write; a `.summary.json` is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct MfiMapArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Image to map; without it, image-level mFIs of the whole dataset are listed.
    #[arg(long)]
    pub index: Option<usize>,
    /// Class whose probability the pixel map measures; defaults to the true label.
    #[arg(long)]
    pub target: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Hyperparameters shared by `attack` and `attack-set`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SwarmArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of pixels to perturb, by descending pixel mFI.
    #[arg(long)]
    pub m: Option<usize>,
    /// Target misclassification probability (at least 0.5).
    #[arg(long)]
    pub perr: Option<f64>,
    /// Maximum per-pixel change as a fraction of the pixel's headroom.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Swarm size.
    #[arg(long)]
    pub np: Option<usize>,
    /// Maximum swarm iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Perturb every pixel whose mFI reaches this value (when `--m` is absent).
    #[arg(long)]
    pub mfi_pixel: Option<f64>,
    /// Perturb every pixel whose mFI reaches this quantile of its image's map.
    #[arg(long)]
    pub mfi_pixel_quantile: Option<f64>,
    /// Weight of the misclassification loss.
    #[arg(long)]
    pub a: Option<f64>,
    /// Weight of the perturbation norm.
    #[arg(long)]
    pub b: Option<f64>,
    /// Half-width of the success band around `--perr`.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub inertia: Option<f64>,
    #[arg(long)]
    pub cognitive: Option<f64>,
    #[arg(long)]
    pub social: Option<f64>,
    /// Velocity limit as a fraction of each box width.
    #[arg(long)]
    pub velocity_clamp: Option<f64>,
    /// Stop when the best value improves less than this ...
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// ... for this many consecutive iterations.
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct AttackArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Image to attack.
    #[arg(long)]
    pub index: Option<usize>,
    /// Target class for a targeted attack.
    #[arg(long)]
    pub target: Option<usize>,
    /// Explicit pixel coordinates to perturb, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "m")]
    pub pixels: Option<Vec<usize>>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub swarm: SwarmArgs,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct AttackSetArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Minimum image-level mFI of an attacked image.
    #[arg(long, conflicts_with = "mfi_img_quantile")]
    pub mfi_img: Option<f64>,
    /// Minimum image-level mFI as a quantile over the correctly classified images.
    #[arg(long)]
    pub mfi_img_quantile: Option<f64>,
    /// Minimum clean probability of the target class.
    #[arg(long)]
    pub p_target: Option<f64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub swarm: SwarmArgs,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ReportArgs {
    /// `attack-set` output directories, optionally as `split=DIR`.
    #[arg(long = "input", value_name = "[SPLIT=]DIR")]
    pub input: Vec<String>,
    /// Image-level mFI thresholds for the success-rate table, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Vec<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Fills every option missing on the command line from the JSON config at
/// `config`. `exclusive` lists groups of keys that act as one option: if the
/// command line sets any key of a group, the config's values for the whole
/// group are dropped. Keys that name no option are rejected.
pub fn merge_config<T>(cli: T, config: Option<&Path>, exclusive: &[&[&str]]) -> Result<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let Some(path) = config else { return Ok(cli) };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let Value::Object(mut merged) = serde_json::from_str::<Value>(&text)? else {
        return Err(Error::input(format!("config {} must be a JSON object", path.display())));
    };
    let Value::Object(given) = serde_json::to_value(&cli)? else {
        unreachable!("argument structs serialize to objects")
    };
    let Value::Object(known) = serde_json::to_value(T::default())? else {
        unreachable!("argument structs serialize to objects")
    };
    let mut unknown: Vec<&str> = merged.keys().filter(|k| !known.contains_key(*k)).map(String::as_str).collect();
    if !unknown.is_empty() {
        unknown.sort_unstable();
        return Err(Error::input(format!(
            "config {}: unknown option(s) {}",
            path.display(),
            unknown.join(", ")
        )));
    }
    let unset = |v: &Value| v.is_null() || v.as_array().is_some_and(Vec::is_empty);
    let given: Map<String, Value> = given.into_iter().filter(|(_, v)| !unset(v)).collect();
    for group in exclusive {
        if group.iter().any(|k| given.contains_key(*k)) {
            for k in *group {
                merged.remove(*k);
            }
        }
    }
    merged.extend(given);
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| Error::input(format!("config {}: {e}", path.display())))
}

fn require<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| Error::input(format!("missing required option --{flag}")))
}

/// Loads a dataset from one of:
/// - a `.json` file holding a serialized dataset (written by `attack-set`);
/// - a directory with `adversarial.json` (an `attack-set` output directory);
/// - a directory with `images.idx` and `labels.idx` (written by `synth`);
/// - a directory of PNG/BMP/PNM files with a `labels.csv` (`filename,label`);
/// - an IDX image file, with `labels` naming the IDX label file.
///
/// `classes` defaults to one more than the largest label.
pub fn load_dataset(path: &Path, labels: Option<&Path>, classes: Option<usize>) -> Result<Dataset> {
    let is_json = |p: &Path| p.extension().is_some_and(|e| e == "json");
    let loaded = if path.is_file() && is_json(path) {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str::<Dataset>(&text)?
    } else if path.is_dir() && path.join("adversarial.json").is_file() {
        return load_dataset(&path.join("adversarial.json"), None, classes);
    } else if path.is_dir() && path.join("images.idx").is_file() {
        data::load_idx(&path.join("images.idx"), &path.join("labels.idx"), 256)?
    } else if path.is_dir() {
        data::load_image_dir(path, &path.join("labels.csv"), usize::MAX)?
    } else if path.is_file() {
        let labels = labels.ok_or_else(|| Error::input("an IDX image file needs --labels"))?;
        data::load_idx(path, labels, 256)?
    } else {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ));
    };
    let inferred = loaded.labels.iter().max().map_or(1, |&l| l + 1);
    let k = match classes {
        Some(k) => k,
        None if is_json(path) => loaded.num_classes,
        None => inferred,
    };
    let Dataset { images, labels, name, .. } = loaded;
    Dataset::new(name, images, labels, k)
}

fn data_of(data: &Option<PathBuf>, labels: &Option<PathBuf>, classes: Option<usize>) -> Result<Dataset> {
    let ds = load_dataset(require(data, "data")?, labels.as_deref(), classes)?;
    log::info!("loaded {} ({} images, {} classes)", ds.name, ds.len(), ds.num_classes);
    Ok(ds)
}

fn model_of(path: &Option<PathBuf>) -> Result<ClassifierModel> {
    classifier::load(require(path, "model")?)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn summary_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".summary.json");
    checkpoint.with_file_name(name)
}

fn image_at(data: &Dataset, index: Option<usize>) -> Result<usize> {
    let i = *require(&index, "index")?;
    if i >= data.len() {
        return Err(Error::input(format!("--index {i} out of range for {} images", data.len())));
    }
    Ok(i)
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let c = a.config.clone();
            cmd_synth(merge_config(a, c.as_deref(), &[])?)
        }
        Command::Train(a) => {
            let c = a.config.clone();
            cmd_train(merge_config(a, c.as_deref(), &[])?)
        }
        Command::Finetune(a) => {
            let c = a.config.clone();
            cmd_finetune(merge_config(a, c.as_deref(), &[])?)
        }
        Command::MfiMap(a) => {
            let c = a.config.clone();
            cmd_mfi_map(merge_config(a, c.as_deref(), &[])?)
        }
        Command::Attack(a) => {
            let c = a.config.clone();
            cmd_attack(merge_config(a, c.as_deref(), &[&["m", "pixels"]])?)
        }
        Command::AttackSet(a) => {
            let c = a.config.clone();
            cmd_attack_set(merge_config(a, c.as_deref(), &[&["mfi-img", "mfi-img-quantile"]])?)
        }
        Command::Report(a) => {
            let c = a.config.clone();
            cmd_report(merge_config(a, c.as_deref(), &[])?)
        }
    }
}

pub fn cmd_synth(a: SynthArgs) -> Result<()> {
    let defaults = BlobParams::default();
    let params = BlobParams {
        num_classes: a.classes.unwrap_or(defaults.num_classes),
        per_class: a.per_class.unwrap_or(defaults.per_class),
        side: a.side.unwrap_or(defaults.side),
        noise_sd: a.noise.unwrap_or(defaults.noise_sd),
        seed: a.seed.unwrap_or(defaults.seed),
    };
    let out = require(&a.out, "out")?;
    let data = synth_blobs(params)?;
    let fraction = a.test_fraction.unwrap_or(0.0);
    let write = |ds: &Dataset, dir: &Path| -> Result<()> {
        create_dir(dir)?;
        data::write_idx(ds, &dir.join("images.idx"), &dir.join("labels.idx"))?;
        log::info!("wrote {} images to {}", ds.len(), dir.display());
        Ok(())
    };
    if fraction > 0.0 {
        let (train, test) = split(&data, fraction, params.seed)?;
        write(&train, &out.join("train"))?;
        write(&test, &out.join("test"))
    } else {
        write(&data, out)
    }
}

fn train_config(
    defaults: TrainConfig,
    seed: Option<u64>,
    epochs: Option<usize>,
    lr: Option<f64>,
    momentum: Option<f64>,
    weight_decay: Option<f64>,
    batch_size: Option<usize>,
    val_fraction: Option<f64>,
) -> TrainConfig {
    TrainConfig {
        seed: seed.unwrap_or(defaults.seed),
        epochs: epochs.unwrap_or(defaults.epochs),
        learning_rate: lr.unwrap_or(defaults.learning_rate),
        momentum: momentum.unwrap_or(defaults.momentum),
        weight_decay: weight_decay.unwrap_or(defaults.weight_decay),
        batch_size: batch_size.unwrap_or(defaults.batch_size),
        validation_fraction: val_fraction.unwrap_or(defaults.validation_fraction),
    }
}

fn log_summary(s: &Option<TrainingSummary>) {
    if let Some(s) = s {
        log::info!(
            "trained {} epochs: loss {:.4}, train accuracy {:.4}, validation accuracy {}",
            s.epochs,
            s.final_loss,
            s.train_accuracy,
            s.validation_accuracy.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.4}"))
        );
    }
}

pub fn cmd_train(a: TrainArgs) -> Result<()> {
    let data = data_of(&a.data, &a.labels, a.classes)?;
    let out = require(&a.out, "out")?;
    let defaults = ModelSpec::default();
    let activation = match a.activation.as_deref() {
        None => defaults.activation,
        Some("tanh") => Activation::Tanh,
        Some("identity") => Activation::Identity,
        Some(other) => return Err(Error::input(format!("unknown activation {other:?}; use tanh or identity"))),
    };
    let spec = ModelSpec {
        hidden: if a.hidden.is_empty() { defaults.hidden } else { a.hidden.clone() },
        activation,
    };
    let cfg = train_config(
        TrainConfig::default(),
        a.seed,
        a.epochs,
        a.lr,
        a.momentum,
        a.weight_decay,
        a.batch_size,
        a.val_fraction,
    );
    let model = classifier::train(&spec, &data, &cfg)?;
    log_summary(&model.training);
    classifier::save(&model, out)?;
    write_json(&model.training, &summary_path(out))
}

/// Default number of fine-tuning epochs: a short continuation that adapts to
/// the adversarial items without forgetting the clean ones.
pub const FINETUNE_EPOCHS: usize = 10;

/// Accuracies written by `finetune`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneSummary {
    pub training: Option<TrainingSummary>,
    pub test_before: Option<f64>,
    pub test_after: Option<f64>,
    pub adversarial_test_before: Option<f64>,
    pub adversarial_test_after: Option<f64>,
}

pub fn cmd_finetune(a: FinetuneArgs) -> Result<()> {
    let model = model_of(&a.model)?;
    let clean = data_of(&a.data, &a.labels, a.classes.or(Some(model.num_classes())))?;
    let adv = load_dataset(require(&a.adv, "adv")?, None, Some(model.num_classes()))?;
    let out = require(&a.out, "out")?;
    let combined = clean.concat(&adv, format!("{}+{}", clean.name, adv.name))?;
    let defaults = TrainConfig { epochs: FINETUNE_EPOCHS, ..TrainConfig::default() };
    let cfg = train_config(
        defaults,
        a.seed,
        a.epochs,
        a.lr,
        a.momentum,
        a.weight_decay,
        a.batch_size,
        a.val_fraction,
    );
    log::info!("fine-tuning on {} clean + {} adversarial images", clean.len(), adv.len());
    let tuned = classifier::finetune(&model, &combined, &cfg)?;
    log_summary(&tuned.training);
    let compare = |path: &Option<PathBuf>| -> Result<(Option<f64>, Option<f64>)> {
        match path {
            None => Ok((None, None)),
            Some(p) => {
                let ds = load_dataset(p, None, Some(model.num_classes()))?;
                Ok((Some(accuracy(&model, &ds)?), Some(accuracy(&tuned, &ds)?)))
            }
        }
    };
    let (test_before, test_after) = compare(&a.test)?;
    let (adversarial_test_before, adversarial_test_after) = compare(&a.adv_test)?;
    let summary = FinetuneSummary {
        training: tuned.training.clone(),
        test_before,
        test_after,
        adversarial_test_before,
        adversarial_test_after,
    };
    log::info!("{summary:?}");
    classifier::save(&tuned, out)?;
    write_json(&summary, &summary_path(out))
}

pub fn cmd_mfi_map(a: MfiMapArgs) -> Result<()> {
    let model = model_of(&a.model)?;
    let data = data_of(&a.data, &a.labels, a.classes.or(Some(model.num_classes())))?;
    let out = require(&a.out, "out")?;
    create_dir(out)?;
    match a.index {
        Some(_) => {
            let i = image_at(&data, a.index)?;
            let image = &data.images[i];
            let map = pixel_mfi_map(&model, image, a.target)?;
            let files = report::emit_heatmap(&map, image.shape(), &out.join("pixel_mfi.png"))?;
            write_json(&map, &out.join("pixel_mfi.json"))?;
            log::info!("wrote {} heatmap file(s) for image {i}", files.len());
            Ok(())
        }
        None => {
            let scores = score_dataset(&model, &data, None)?;
            report::manhattan_csv(&scores, &out.join("image_mfi.csv"))?;
            log::info!(
                "scored {} images ({} correctly classified)",
                scores.len(),
                scores.iter().filter(|s| s.correct).count()
            );
            Ok(())
        }
    }
}

fn swarm_config(s: &SwarmArgs, parallel: bool) -> SwarmConfig {
    let d = SwarmConfig::default();
    SwarmConfig {
        particles: s.np.unwrap_or(d.particles),
        max_iterations: s.iters.unwrap_or(d.max_iterations),
        inertia: s.inertia.unwrap_or(d.inertia),
        cognitive: s.cognitive.unwrap_or(d.cognitive),
        social: s.social.unwrap_or(d.social),
        seed: s.seed.unwrap_or(d.seed),
        velocity_clamp: s.velocity_clamp.unwrap_or(d.velocity_clamp),
        tolerance: s.tolerance.unwrap_or(d.tolerance),
        patience: s.patience.unwrap_or(d.patience),
        parallel,
        ..d
    }
}

fn attack_spec(s: &SwarmArgs, parallel: bool) -> AttackSpec {
    let d = AttackSpec::default();
    AttackSpec {
        m: s.m,
        p_err: s.perr,
        epsilon: s.eps.unwrap_or(d.epsilon),
        a: s.a.unwrap_or(d.a),
        b: s.b.unwrap_or(d.b),
        delta: s.delta.unwrap_or(d.delta),
        mfi_pixel: s.mfi_pixel,
        mfi_pixel_quantile: s.mfi_pixel_quantile,
        swarm: swarm_config(s, parallel),
        ..d
    }
}

pub fn cmd_attack(a: AttackArgs) -> Result<()> {
    if a.swarm.m.is_some() && a.pixels.is_some() {
        return Err(Error::input("--m and --pixels are mutually exclusive"));
    }
    let model = model_of(&a.model)?;
    let data = data_of(&a.data, &a.labels, a.classes.or(Some(model.num_classes())))?;
    let out = require(&a.out, "out")?;
    let i = image_at(&data, a.index)?;
    let spec = AttackSpec {
        pixel_indices: a.pixels.clone(),
        y_target: a.target,
        ..attack_spec(&a.swarm, false)
    };
    log::info!("loss: {}", LossKind::select(spec.p_err, spec.y_target).name());
    let mut result = generate_adversarial(&model, &data.images[i], &spec)?;
    result.image_index = Some(i);
    create_dir(out)?;
    report::write_result_json(&result, &out.join("result.json"))?;
    report::emit_image(&result.adversarial, &out.join("adversarial.png"))?;
    report::emit_perturbation_map(&result, &out.join("perturbation.png"))?;
    log::info!(
        "image {i}: label {} -> {}, {} pixel(s), l2 {:.4}, success {}",
        result.label_before,
        result.label_after,
        result.coords.len(),
        result.l2_norm,
        result.success
    );
    if result.success {
        Ok(())
    } else {
        Err(Error::Infeasible(format!(
            "no perturbation within epsilon {} met the success criteria for image {i}",
            spec.epsilon
        )))
    }
}

/// Fixed file names inside an `attack-set` output directory.
pub mod attack_set_files {
    pub const RESULTS: &str = "results.json";
    pub const SCORES: &str = "scores.json";
    pub const SUMMARY: &str = "summary.json";
    pub const ADVERSARIAL: &str = "adversarial.json";
    pub const IMAGE_MFI: &str = "image_mfi.csv";
    pub const REPORT: &str = "report.csv";
}

pub fn cmd_attack_set(a: AttackSetArgs) -> Result<()> {
    use attack_set_files as f;
    if a.swarm.m.is_some() && a.swarm.mfi_pixel.is_some() {
        log::warn!("--m given; --mfi-pixel is ignored");
    }
    let model = model_of(&a.model)?;
    let data = data_of(&a.data, &a.labels, a.classes.or(Some(model.num_classes())))?;
    let out = require(&a.out, "out")?;
    let mfi_img = match (a.mfi_img, a.mfi_img_quantile) {
        (Some(t), _) => t,
        (None, Some(q)) => {
            let scores = score_dataset(&model, &data, None)?;
            let values: Vec<f64> = scores.iter().filter_map(|s| s.image_mfi).collect();
            let t = quantile(&values, q)?;
            log::info!("image mFI threshold at quantile {q}: {t:.6}");
            t
        }
        (None, None) => 0.0,
    };
    let dspec = DatasetAttackSpec {
        mfi_img,
        p_target: a.p_target.unwrap_or(0.0),
        mfi_pixel: a.swarm.mfi_pixel,
        mfi_pixel_quantile: a.swarm.mfi_pixel_quantile,
        m: a.swarm.m,
        p_err: a.swarm.perr,
        targets: None,
        attack: attack_spec(&a.swarm, false),
        workers: a.workers,
    };
    log::info!("loss: {}", LossKind::select(dspec.p_err, Some(0)).name());
    let outcome = generate_adversarial_set(&model, &data, &dspec)?;
    let s = &outcome.summary;
    log::info!(
        "{} of {} images correctly classified, {} selected, {} successful",
        s.correctly_classified,
        s.total,
        s.selected,
        s.successes
    );
    create_dir(out)?;
    write_json(&outcome.results, &out.join(f::RESULTS))?;
    write_json(&outcome.scores, &out.join(f::SCORES))?;
    write_json(&outcome.summary, &out.join(f::SUMMARY))?;
    write_json(&outcome.adversarial, &out.join(f::ADVERSARIAL))?;
    report::manhattan_csv(&outcome.scores, &out.join(f::IMAGE_MFI))?;
    let table = AttackReport::new(&outcome.results, Some(&outcome.scores)).to_csv()?;
    fs::write(out.join(f::REPORT), table).map_err(|e| Error::io(out.join(f::REPORT), e))
}

/// Default image-level mFI thresholds of the success-rate table.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.01, 0.1, 0.2];

pub fn cmd_report(a: ReportArgs) -> Result<()> {
    use attack_set_files as f;
    if a.input.is_empty() {
        return Err(Error::input("missing required option --input"));
    }
    let out = require(&a.out, "out")?;
    create_dir(out)?;
    let thresholds = if a.thresholds.is_empty() { DEFAULT_THRESHOLDS.to_vec() } else { a.thresholds.clone() };
    let mut records = Vec::new();
    for spec in &a.input {
        let (split_name, dir) = match spec.split_once('=') {
            Some((s, d)) => (s.to_owned(), PathBuf::from(d)),
            None => {
                let d = PathBuf::from(spec);
                let name = d.file_name().map_or_else(|| spec.clone(), |n| n.to_string_lossy().into_owned());
                (name, d)
            }
        };
        let results: Vec<AdversarialResult> = read_json(&dir.join(f::RESULTS))?;
        let scores: Vec<ImageScore> = read_json(&dir.join(f::SCORES))?;
        for r in &results {
            let index = r.image_index.ok_or_else(|| Error::input("stored result has no image index"))?;
            let score = scores
                .iter()
                .find(|s| s.index == index)
                .ok_or_else(|| Error::input(format!("no score for image {index} in {}", dir.display())))?;
            let image_mfi = score
                .image_mfi
                .ok_or_else(|| Error::input(format!("image {index} was attacked but is not correctly classified")))?;
            records.push(AttackRecord { split: split_name.clone(), image_mfi, success: r.success });
        }
        let table = AttackReport::new(&results, Some(&scores)).to_csv()?;
        let path = out.join(format!("report-{split_name}.csv"));
        fs::write(&path, table).map_err(|e| Error::io(&path, e))?;
    }
    let table = report::success_rate_table(&records, &thresholds)?;
    let path = out.join("success_rates.csv");
    fs::write(&path, table).map_err(|e| Error::io(&path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}
