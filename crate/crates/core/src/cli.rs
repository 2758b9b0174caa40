//! `agelab` command implementations.
//!
//! Each command stages its outputs in a scratch directory inside the output
//! directory. On success the staged files move into place; on failure the
//! stage becomes `failed/` with the error text in `failed/error.txt`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::config::{required, ConfigError, RunConfig};
use crate::data::{
    clean_labels, compute_standardization_stats, detect_inconsistencies, guo_mu_subset,
    load_labels, load_overrides, load_sample, save_image, twelve_crop_sample, write_labels,
    write_report, write_stats_file, DataError, ImageSample, LabelRecord,
};
use crate::encoding::{distribution_csv_header, distribution_csv_row, Decoder};
use crate::synth::write_synthetic;
use crate::train::{
    evaluate_age_both, evaluate_gender, evaluate_hierarchy, prepare_examples, run_experiment,
    sweep, DataSplits, ExperimentConfig, HierarchyModel, Metrics, Preprocess, TrainError,
};
use crate::zoo::{load_checkpoint, save_checkpoint, Head, Model, ModelError};

pub const THREADS_ENV: &str = "AGELAB_THREADS";
const STAGE_DIR: &str = ".agelab-stage";
const FAILED_DIR: &str = "failed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Synth,
    Clean,
    Subset,
    Stats,
    Encode,
    Augment,
    Train,
    Eval,
    HierEval,
    Sweep,
}

#[derive(Debug, Parser)]
#[command(name = "agelab", version, about = "Age and gender CNN experiments")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides every seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{0}")]
    Usage(String),
}

/// Parses `AGELAB_THREADS`. Every computation in this crate is sequential,
/// so any positive cap is honoured.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    DataError::io(path, e).into()
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io(path, e))
}

/// Loads the config, applies overrides and runs `command`, returning the
/// output directory.
pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let mut config = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    run_config(cli.command, &config)
}

pub fn run_config(command: Command, config: &RunConfig) -> Result<PathBuf, CliError> {
    let out = config.out_dir.clone();
    let stage = out.join(STAGE_DIR);
    if stage.exists() {
        std::fs::remove_dir_all(&stage).map_err(|e| io(&stage, e))?;
    }
    std::fs::create_dir_all(&stage).map_err(|e| io(&stage, e))?;
    write(&stage.join("config.toml"), &config.to_toml())?;
    let result = thread_cap().and_then(|_| dispatch(command, config, &stage));
    match result {
        Ok(()) => {
            for entry in std::fs::read_dir(&stage).map_err(|e| io(&stage, e))? {
                let entry = entry.map_err(|e| io(&stage, e))?;
                let dest = out.join(entry.file_name());
                if dest.is_dir() {
                    std::fs::remove_dir_all(&dest).map_err(|e| io(&dest, e))?;
                }
                std::fs::rename(entry.path(), &dest).map_err(|e| io(&dest, e))?;
            }
            std::fs::remove_dir(&stage).map_err(|e| io(&stage, e))?;
            Ok(out)
        }
        Err(err) => {
            let failed = out.join(FAILED_DIR);
            if failed.exists() {
                let _ = std::fs::remove_dir_all(&failed);
            }
            let _ = std::fs::write(stage.join("error.txt"), format!("{err}\n"));
            let _ = std::fs::rename(&stage, &failed);
            Err(err)
        }
    }
}

fn dispatch(command: Command, c: &RunConfig, out: &Path) -> Result<(), CliError> {
    match command {
        Command::Synth => {
            write_synthetic(&c.synth, out)?;
        }
        Command::Clean => cmd_clean(c, out)?,
        Command::Subset => cmd_subset(c, out)?,
        Command::Stats => cmd_stats(c, out)?,
        Command::Encode => cmd_encode(c, out)?,
        Command::Augment => cmd_augment(c, out)?,
        Command::Train => cmd_train(c, out)?,
        Command::Eval => cmd_eval(c, out)?,
        Command::HierEval => cmd_hier_eval(c, out)?,
        Command::Sweep => cmd_sweep(c, out)?,
    }
    Ok(())
}

fn labels(c: &RunConfig, path: &Path) -> Result<Vec<LabelRecord>, CliError> {
    let loaded = load_labels(path, c.data.ages)?;
    if let Some(first) = loaded.rejects.first() {
        return Err(CliError::Usage(format!(
            "{}: {} rejected rows, first at line {}: {}",
            path.display(),
            loaded.rejects.len(),
            first.line,
            first.reason
        )));
    }
    Ok(loaded.records)
}

fn image_root(c: &RunConfig, manifest: &Path) -> PathBuf {
    c.data
        .image_root
        .clone()
        .unwrap_or_else(|| manifest.parent().unwrap_or(Path::new(".")).to_path_buf())
}

fn samples(
    c: &RunConfig,
    manifest: &Path,
    size: Option<(usize, usize)>,
) -> Result<Vec<ImageSample<f32>>, CliError> {
    let root = image_root(c, manifest);
    labels(c, manifest)?
        .iter()
        .map(|l| Ok(load_sample(l, &root, size)?))
        .collect()
}

fn cmd_clean(c: &RunConfig, out: &Path) -> Result<(), CliError> {
    let path = required(&c.data.labels, "data.labels")?;
    let loaded = load_labels(path, c.data.ages)?;
    let mut rejects = String::from("line,reason\n");
    for r in &loaded.rejects {
        let _ = writeln!(rejects, "{},\"{}\"", r.line, r.reason.replace('"', "\"\""));
    }
    write(&out.join("rejects.csv"), &rejects)?;
    let report = detect_inconsistencies(&loaded.records);
    write_report(&out.join("inconsistencies.csv"), &report)?;
    let overrides = match &c.data.overrides {
        Some(p) => load_overrides(p)?,
        None => Vec::new(),
    };
    let cleaned = clean_labels(&loaded.records, &report, &overrides);
    write_labels(&out.join("cleaned.csv"), &cleaned.records)?;
    write_labels(&out.join("quarantined.csv"), &cleaned.quarantined)?;
    write(&out.join("warnings.txt"), &cleaned.warnings.join("\n"))?;
    Ok(())
}

fn cmd_subset(c: &RunConfig, out: &Path) -> Result<(), CliError> {
    let records = labels(c, required(&c.data.labels, "data.labels")?)?;
    let split = guo_mu_subset(&records, c.seed, &c.subset)?;
    write_labels(&out.join("s1.csv"), &split.s1)?;
    write_labels(&out.join("s2.csv"), &split.s2)?;
    write_labels(&out.join("s3.csv"), &split.s3)?;
    Ok(())
}

fn cmd_stats(c: &RunConfig, out: &Path) -> Result<(), CliError> {
    let path = required(&c.data.labels, "data.labels")?;
    let set = samples(c, path, None)?;
    let stats = compute_standardization_stats(set.iter().map(|s| &s.pixels))?;
    let split = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    write_stats_file(&out.join("stats.csv"), &stats, &split, c.seed)?;
    Ok(())
}

fn cmd_encode(c: &RunConfig, out: &Path) -> Result<(), CliError> {
    let mut text = distribution_csv_header();
    text.push('\n');
    for &age in &c.encode.ages {
        text.push_str(&distribution_csv_row(age, &c.encoding.encode(age).map_err(TrainError::from)?));
        text.push('\n');
    }
    write(&out.join("encoding.csv"), &text)
}

fn cmd_augment(c: &RunConfig, out: &Path) -> Result<(), CliError> {
    let path = required(&c.data.labels, "data.labels")?;
    let images = out.join("images");
    std::fs::create_dir_all(&images).map_err(|e| io(&images, e))?;
    let mut records = Vec::new();
    for sample in samples(c, path, None)? {
        let stem = Path::new(&sample.label.image_path)
            .with_extension("")
            .to_string_lossy()
            .replace(['/', '\\'], "_");
        for (k, crop) in twelve_crop_sample(&sample, c.train.crop_width, c.train.crop_height)?
            .into_iter()
            .enumerate()
        {
            let mut label = crop.label;
            label.image_path = format!("images/{stem}_{k:02}.pgm");
            save_image(&out.join(&label.image_path), &crop.pixels)?;
            records.push(label);
        }
    }
    write_labels(&out.join("labels.csv"), &records)?;
    Ok(())
}

fn experiment(c: &RunConfig) -> ExperimentConfig {
    ExperimentConfig {
        arch: c.model.arch.clone(),
        train: c.train,
        encoding: c.encoding,
    }
}

fn train_data(c: &RunConfig, require_test: bool) -> Result<DataSplits<f32>, CliError> {
    let size = Some((c.model.arch.height, c.model.arch.width));
    let test = match (&c.data.test, require_test) {
        (Some(p), _) => samples(c, p, size)?,
        (None, true) => return Err(ConfigError::Missing("data.test").into()),
        (None, false) => Vec::new(),
    };
    Ok(DataSplits {
        train: samples(c, required(&c.data.train, "data.train")?, size)?,
        val_source: samples(c, required(&c.data.validation, "data.validation")?, size)?,
        test,
    })
}

fn pretrained(c: &RunConfig) -> Result<Option<Model<f32>>, CliError> {
    Ok(match &c.model.pretrained {
        Some(p) => Some(load_checkpoint(p)?),
        None => None,
    })
}

fn metrics_text(m: &Metrics, decoder: Decoder, prefix: &str) -> String {
    match m {
        Metrics::Gender { accuracy } => format!("{prefix}accuracy = {accuracy}\n"),
        Metrics::Age(a) => format!(
            "{prefix}mae = {}\n{prefix}mae_argmax = {}\n{prefix}mae_expected = {}\n",
            a.get(decoder),
            a.mae_argmax,
            a.mae_expected
        ),
    }
}

fn cmd_train(c: &RunConfig, out: &Path) -> Result<(), CliError> {
    let data = train_data(c, false)?;
    let pre = pretrained(c)?;
    let result = run_experiment(&experiment(c), &data, pre.as_ref())?;
    save_checkpoint(&result.outcome.best, &out.join("best.ckpt"))?;
    save_checkpoint(&result.outcome.final_model, &out.join("final.ckpt"))?;
    result.outcome.log.write_csv(&out.join("train_log.csv"))?;
    if let (Some(b), Some(f)) = (&result.best_metrics, &result.final_metrics) {
        let mut text = format!("best_epoch = {}\n", result.outcome.log.best_epoch);
        text += &metrics_text(b, c.eval.decoder, "best_");
        text += &metrics_text(f, c.eval.decoder, "final_");
        write(&out.join("metrics.toml"), &text)?;
    }
    Ok(())
}

/// Test examples shaped and normalised for `model`.
fn eval_examples(
    c: &RunConfig,
    model: &Model<f32>,
) -> Result<Vec<crate::train::Example<f32>>, CliError> {
    let path = required(&c.data.test, "data.test")?;
    let shape = model.network.input_shape();
    let raw = samples(c, path, Some((shape[1], shape[2])))?;
    let pre = Preprocess::from_provenance(&model.provenance)?;
    Ok(prepare_examples(&raw, &pre, model.head, &c.encoding, (shape[1], shape[2]))?)
}

fn cmd_eval(c: &RunConfig, out: &Path) -> Result<(), CliError> {
    let model: Model<f32> = load_checkpoint(required(&c.eval.checkpoint, "eval.checkpoint")?)?;
    let set = eval_examples(c, &model)?;
    let metrics = match model.head {
        Head::Gender => Metrics::Gender {
            accuracy: evaluate_gender(&model, &set)?,
        },
        Head::Age => Metrics::Age(evaluate_age_both(&model, &set)?),
    };
    let mut text = format!("samples = {}\n", set.len());
    if model.head == Head::Age {
        let name = match c.eval.decoder {
            Decoder::Argmax => "argmax",
            Decoder::ExpectedValue => "expected_value",
        };
        let _ = writeln!(text, "decoder = \"{name}\"");
    }
    text += &metrics_text(&metrics, c.eval.decoder, "");
    write(&out.join("metrics.toml"), &text)
}

fn cmd_hier_eval(c: &RunConfig, out: &Path) -> Result<(), CliError> {
    let e = &c.eval;
    let load = |p: &Option<PathBuf>, name| -> Result<Model<f32>, CliError> {
        Ok(load_checkpoint(required(p, name)?)?)
    };
    let gender = load(&e.gender_checkpoint, "eval.gender_checkpoint")?;
    let male = load(&e.male_checkpoint, "eval.male_checkpoint")?;
    let female = load(&e.female_checkpoint, "eval.female_checkpoint")?;
    let single = e.single_checkpoint.as_deref().map(load_checkpoint::<f32>).transpose()?;
    let pre = Preprocess::from_provenance(&gender.provenance)?;
    for m in [Some(&male), Some(&female), single.as_ref()].into_iter().flatten() {
        if Preprocess::from_provenance(&m.provenance)? != pre {
            return Err(CliError::Usage(
                "hierarchy checkpoints were trained with different input normalisation".into(),
            ));
        }
    }
    let set = eval_examples(c, &gender)?;
    let h = HierarchyModel::new(gender, male, female)?;
    let report = evaluate_hierarchy(&h, &set, single.as_ref())?;
    write(&out.join("hierarchy.toml"), &report.to_text())
}

fn cmd_sweep(c: &RunConfig, out: &Path) -> Result<(), CliError> {
    let axis = *required(&c.sweep.axis, "sweep.axis")?;
    let data = train_data(c, true)?;
    let pre = pretrained(c)?;
    let table = sweep(axis, &c.sweep.values, &experiment(c), &data, pre.as_ref())?;
    write(&out.join("sweep.csv"), &table.to_csv())
}
