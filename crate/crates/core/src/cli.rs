//! Command-line workflows: `gen-data`, `train`, `eval`, `predict`, `viz`.
//!
//! Every command reads one TOML file (`--config`) with the sections
//! `[synth]`, `[gen]`, `[train]` and `[eval]`, applies `--set key=value`
//! overrides and then the command's own flags, and echoes the resolved
//! configuration to stderr before doing any work.
//!
//! Exit codes: 0 success, 2 bad flags or configuration, 3 bad input data,
//! 4 numeric failure.

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use candle_core::Device;
use clap::{Args, Parser, Subcommand, ValueEnum};
use image::{imageops, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::grid::{apply_mask, Mask};
use crate::mesh::{io, Surface, TemplateMesh};
use crate::metrics::{self, plot, EvalConfig};
use crate::net::{checkpoint, BodyMapNet};
use crate::synth::dataset::{generate_dataset, Dataset, Split};
use crate::synth::{Sample, SynthConfig};
use crate::trainer::{predict_samples, FinetuneMode, Phase, TrainConfig, TrainData, Trainer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "bodymap", version, about = "Dense body surface correspondence")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `train.lr=5e-4`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset.
    GenData(GenDataArgs),
    /// Pretrain or fine-tune a model.
    Train(TrainArgs),
    /// Score a checkpoint (or the GT / coarse init) on a dataset split.
    Eval(EvalArgs),
    /// Predict the correspondence image of one input.
    Predict(PredictArgs),
    /// Render RGB | GT | prediction panels.
    Viz(VizArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of motion sequences.
    #[arg(long)]
    pub sequences: Option<u32>,
    #[arg(long)]
    pub frames: Option<u32>,
    #[arg(long)]
    pub image_size: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also render garment layers.
    #[arg(long)]
    pub layered: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PhaseArg {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Sparse,
    Dense,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run directory for the log, checkpoints and resolved config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub phase: Option<PhaseArg>,
    #[arg(long, value_enum)]
    pub finetune_mode: Option<ModeArg>,
    #[arg(long)]
    pub init_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Model to score; not needed with --oracle or --init-as-prediction.
    #[arg(long, required_unless_present_any = ["oracle", "init_as_prediction"])]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Score the ground truth itself.
    #[arg(long, conflicts_with_all = ["checkpoint", "init_as_prediction"])]
    pub oracle: bool,
    /// Score the coarse initialization.
    #[arg(long, conflicts_with = "checkpoint")]
    pub init_as_prediction: bool,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for accuracy and consistency curves.
    #[arg(long)]
    pub plots: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Model for the prediction panel; the coarse init is shown otherwise.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, default_value_t = 4)]
    pub count: usize,
    /// Integer upscaling of each panel.
    #[arg(long, default_value_t = 4)]
    pub scale: u32,
    #[arg(long)]
    pub out: PathBuf,
}

/// Template mesh files; the built-in humanoid when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshFiles {
    pub obj: PathBuf,
    pub rig: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub sequences: u32,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { sequences: 10, seed: 0 }
    }
}

/// Everything a command can be configured with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub mesh: Option<MeshFiles>,
    /// Directory caching the template's geodesic table.
    pub cache_dir: Option<PathBuf>,
    pub synth: SynthConfig,
    pub gen: GenConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for Config {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            mesh: None,
            cache_dir: None,
            synth: SynthConfig::desk(train.model.image_size as u32),
            gen: GenConfig::default(),
            train,
            eval: EvalConfig::default(),
        }
    }
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => EXIT_USAGE,
            Error::NonFinite(_) | Error::Tensor(_) => EXIT_NUMERIC,
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses a `--set` value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key v"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets dotted `key` in `root`, creating intermediate tables.
pub fn apply_override(root: &mut toml::Table, spec: &str) -> CliResult<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("--set expects KEY=VALUE, got `{spec}`")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::usage(format!("bad key `{key}`")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::usage(format!("`{p}` in `{key}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Reads `path` (if any), applies `overrides` in order and deserializes.
pub fn resolve_config(path: Option<&Path>, overrides: &[String]) -> CliResult<Config> {
    let mut root = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
            toml::from_str::<toml::Table>(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    // Partial tables fill in from the defaults of the enclosing section.
    let mut merged = match toml::Value::try_from(Config::default()) {
        Ok(toml::Value::Table(t)) => t,
        _ => unreachable!("the default configuration serializes to a table"),
    };
    merge(&mut merged, root);
    toml::Value::Table(merged)
        .try_into::<Config>()
        .map_err(|e| CliError::usage(format!("configuration: {e}")))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn load_surface(cfg: &Config) -> CliResult<Surface> {
    let mesh = match &cfg.mesh {
        Some(m) => io::load_mesh(&m.obj, &m.rig)?,
        None => TemplateMesh::humanoid(),
    };
    Ok(match &cfg.cache_dir {
        Some(dir) => Surface::with_cache(mesh, dir)?,
        None => Surface::new(mesh)?,
    })
}

fn echo(cfg: &Config) -> CliResult<String> {
    let text = toml::to_string_pretty(cfg).map_err(|e| CliError::usage(format!("cannot print configuration: {e}")))?;
    eprintln!("# resolved configuration\n{text}");
    Ok(text)
}

fn split_of(s: SplitArg) -> Split {
    match s {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    }
}

fn open_dataset(path: &Path, surface: &Surface) -> CliResult<Dataset> {
    let ds = Dataset::open(path)?;
    ds.check_mesh(surface)?;
    Ok(ds)
}

/// Loads a checkpoint and adapts it to `size` pixels if needed.
fn load_model(path: &Path, size: u32) -> CliResult<BodyMapNet> {
    let (net, info) = checkpoint::load(path, None, &Device::Cpu)?;
    log::info!("loaded {} (step {})", path.display(), info.step);
    if net.cfg.image_size == size as usize {
        return Ok(net);
    }
    if size as usize % net.cfg.patch_size != 0 {
        return Err(CliError::data(format!(
            "input size {size} is not a multiple of the model patch size {}",
            net.cfg.patch_size
        )));
    }
    log::warn!("resampling position encodings from {} to {size} px", net.cfg.image_size);
    Ok(net.with_image_size(size as usize)?)
}

/// Parses and runs a command line, printing errors; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let mut cfg = resolve_config(cli.config.as_deref(), &cli.overrides)?;
    match &cli.command {
        Command::GenData(a) => {
            if let Some(v) = a.sequences {
                cfg.gen.sequences = v;
            }
            if let Some(v) = a.seed {
                cfg.gen.seed = v;
            }
            if let Some(v) = a.frames {
                cfg.synth.frames_per_sequence = v;
            }
            if let Some(v) = a.image_size {
                cfg.synth.image_size = v;
            }
            cfg.synth.layered |= a.layered;
            gen_data(&cfg, &a.out)
        }
        Command::Train(a) => {
            let t = &mut cfg.train;
            if let Some(v) = &a.data {
                t.data = v.clone();
            }
            if let Some(v) = &a.out {
                t.out_dir = v.clone();
            }
            if let Some(v) = a.steps {
                t.steps = v;
            }
            if let Some(v) = a.lr {
                t.lr = v;
            }
            if let Some(v) = a.batch_size {
                t.batch_size = v;
            }
            if let Some(v) = a.seed {
                t.seed = v;
            }
            if let Some(v) = a.phase {
                t.phase = match v {
                    PhaseArg::Pretrain => Phase::Pretrain,
                    PhaseArg::Finetune => Phase::Finetune,
                };
            }
            if let Some(v) = a.finetune_mode {
                t.finetune_mode = match v {
                    ModeArg::Sparse => FinetuneMode::Sparse,
                    ModeArg::Dense => FinetuneMode::Dense,
                };
            }
            if let Some(v) = &a.init_checkpoint {
                t.init_checkpoint = Some(v.clone());
            }
            train(&cfg)
        }
        Command::Eval(a) => eval(&cfg, a),
        Command::Predict(a) => predict(&cfg, a),
        Command::Viz(a) => viz(&cfg, a),
    }
}

pub fn gen_data(cfg: &Config, out: &Path) -> CliResult<()> {
    echo(cfg)?;
    let surface = load_surface(cfg)?;
    let m = generate_dataset(&surface, &cfg.synth, cfg.gen.sequences, cfg.gen.seed, out)?;
    let test = m.samples.iter().filter(|e| e.split == Split::Test).count();
    eprintln!("wrote {} samples ({} test) to {}", m.samples.len(), test, out.display());
    Ok(())
}

pub fn train(cfg: &Config) -> CliResult<()> {
    let t = &cfg.train;
    t.validate()?;
    let text = echo(cfg)?;
    let surface = load_surface(cfg)?;
    let ds = open_dataset(&t.data, &surface)?;
    if ds.manifest.image_size as usize != t.model.image_size {
        return Err(CliError::data(format!(
            "dataset images are {} px, model expects {}",
            ds.manifest.image_size, t.model.image_size
        )));
    }
    let data = if t.model.heads == 3 {
        TrainData::Layered(ds.load_layered(Split::Train)?)
    } else {
        TrainData::Plain(ds.load(Split::Train)?)
    };
    if data.is_empty() {
        return Err(CliError::data("training split is empty"));
    }
    fs::create_dir_all(&t.out_dir).map_err(|e| CliError::data(format!("{}: {e}", t.out_dir.display())))?;
    fs::write(t.out_dir.join("config.toml"), text).map_err(|e| CliError::data(e.to_string()))?;
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(t.out_dir.join("train_log.jsonl"))
        .map_err(|e| CliError::data(e.to_string()))?;
    let mut trainer = Trainer::new(t.clone(), surface, &Device::Cpu)?;
    let records = trainer.fit(&data, Some(&mut log), Some(&t.out_dir))?;
    if let Some(last) = records.last() {
        eprintln!(
            "step {} total {:.4} (cls {:.4} sil {:.4} geo {:.4} con {:.4}) in {:.1}s",
            last.step, last.total, last.cls, last.sil, last.geo, last.con, last.wall
        );
    }
    eprintln!("checkpoint {}", t.out_dir.join("model.safetensors").display());
    Ok(())
}

/// Predictions for `samples` from the chosen source.
fn eval_predictions(a: &EvalArgs, samples: &[Sample]) -> CliResult<Vec<RgbImage>> {
    if a.oracle {
        return Ok(samples.iter().map(|s| apply_mask(&s.corr, &s.mask)).collect());
    }
    if a.init_as_prediction {
        return Ok(samples.iter().map(|s| apply_mask(&s.init, &s.mask)).collect());
    }
    let path = a.checkpoint.as_ref().expect("clap requires a checkpoint");
    let net = load_model(path, samples[0].width())?;
    Ok(predict_samples(&net, samples, a.batch_size)?)
}

pub fn eval(cfg: &Config, a: &EvalArgs) -> CliResult<()> {
    echo(cfg)?;
    let surface = load_surface(cfg)?;
    let ds = open_dataset(&a.data, &surface)?;
    let samples = ds.load(split_of(a.split))?;
    if samples.is_empty() {
        return Err(CliError::data(format!("{:?} split of {} is empty", a.split, a.data.display())));
    }
    let preds = eval_predictions(a, &samples)?;
    let report = metrics::evaluate(&samples, &preds, &surface, &cfg.eval)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::data(e.to_string()))?;
    match &a.out {
        Some(p) => fs::write(p, json).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?,
        None => println!("{json}"),
    }
    if let Some(dir) = &a.plots {
        for p in plot::save_report_plots(&report, dir)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn read_rgb(path: &Path) -> CliResult<RgbImage> {
    Ok(image::open(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        .to_rgb8())
}

pub fn predict(cfg: &Config, a: &PredictArgs) -> CliResult<()> {
    echo(cfg)?;
    for p in [&a.checkpoint, &a.image, &a.mask, &a.init] {
        if !p.exists() {
            return Err(CliError::data(format!("{} does not exist", p.display())));
        }
    }
    let rgb = read_rgb(&a.image)?;
    let init = read_rgb(&a.init)?;
    let mask = Mask::from_gray(
        &image::open(&a.mask)
            .map_err(|e| CliError::data(format!("{}: {e}", a.mask.display())))?
            .to_luma8(),
    );
    let (w, h) = rgb.dimensions();
    if init.dimensions() != (w, h) || mask.dims() != (w, h) {
        return Err(CliError::data("image, mask and init sizes differ"));
    }
    if w != h {
        return Err(CliError::data(format!("input must be square, got {w}x{h}")));
    }
    let out = if mask.is_empty() {
        log::warn!("mask is empty; writing an all-background image");
        eprintln!("warning: mask {} is empty", a.mask.display());
        RgbImage::new(w, h)
    } else {
        let net = load_model(&a.checkpoint, w)?;
        net.predict(&[(&rgb, &init, &mask)])?.remove(0)
    };
    out.save(&a.out).map_err(|e| CliError::data(format!("{}: {e}", a.out.display())))?;
    Ok(())
}

/// Panels side by side with a white gutter, each upscaled by `scale`.
pub fn panel_row(panels: &[&RgbImage], scale: u32) -> RgbImage {
    const GUTTER: u32 = 4;
    let (w, h) = panels[0].dimensions();
    let (sw, sh) = (w * scale, h * scale);
    let n = panels.len() as u32;
    let mut out = RgbImage::from_pixel(n * sw + (n - 1) * GUTTER, sh, Rgb([255, 255, 255]));
    for (i, p) in panels.iter().enumerate() {
        let big = imageops::resize(*p, sw, sh, imageops::FilterType::Nearest);
        imageops::replace(&mut out, &big, (i as u32 * (sw + GUTTER)) as i64, 0);
    }
    out
}

pub fn viz(cfg: &Config, a: &VizArgs) -> CliResult<()> {
    echo(cfg)?;
    if a.scale == 0 {
        return Err(CliError::usage("--scale must be at least 1"));
    }
    let surface = load_surface(cfg)?;
    let ds = open_dataset(&a.data, &surface)?;
    let mut samples = ds.load(split_of(a.split))?;
    samples.truncate(a.count);
    if samples.is_empty() {
        return Err(CliError::data("nothing to render"));
    }
    let preds = match &a.checkpoint {
        Some(p) => predict_samples(&load_model(p, samples[0].width())?, &samples, 8)?,
        None => samples.iter().map(|s| apply_mask(&s.init, &s.mask)).collect(),
    };
    fs::create_dir_all(&a.out).map_err(|e| CliError::data(format!("{}: {e}", a.out.display())))?;
    for (s, p) in samples.iter().zip(&preds) {
        let gt = apply_mask(&s.corr, &s.mask);
        let path = a
            .out
            .join(format!("seq{:04}_f{:04}.png", s.meta.sequence, s.meta.frame));
        panel_row(&[&s.rgb, &gt, p], a.scale)
            .save(&path)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = resolve_config(None, &["train.lr=5e-4".into(), "train.loss.geo=0".into(), "gen.sequences=3".into()]).unwrap();
        assert_eq!(cfg.train.lr, 5e-4);
        assert_eq!(cfg.train.loss.geo, 0.0);
        assert_eq!(cfg.gen.sequences, 3);
        let e = resolve_config(None, &["train.lrr=1".into()]).unwrap_err();
        assert_eq!(e.code, EXIT_USAGE);
        assert_eq!(resolve_config(None, &["novalue".into()]).unwrap_err().code, EXIT_USAGE);
    }

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "[train]\nsteps = 7\nlr = 0.01\n[train.model]\ntoken_dim = 16\n").unwrap();
        let cfg = resolve_config(Some(&p), &["train.steps=9".into()]).unwrap();
        assert_eq!((cfg.train.steps, cfg.train.lr, cfg.train.model.token_dim), (9, 0.01, 16));
        assert_eq!(cfg.train.model.patch_size, 4);
    }

    #[test]
    fn echoed_config_parses_back() {
        let cfg = Config::default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        assert_eq!(toml::from_str::<Config>(&text).unwrap(), cfg);
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::Config("x".into())).code, EXIT_USAGE);
        assert_eq!(CliError::from(Error::NonFinite("loss_geo")).code, EXIT_NUMERIC);
        assert_eq!(CliError::from(Error::Dataset("x".into())).code, EXIT_DATA);
        assert_eq!(main_with_args(["bodymap", "train", "--bogus"]), EXIT_USAGE);
        assert_eq!(main_with_args(["bodymap", "eval", "--data", "/nonexistent", "--oracle"]), EXIT_DATA);
    }

    #[test]
    fn panels_are_laid_out_left_to_right() {
        let a = RgbImage::from_pixel(2, 2, Rgb([1, 0, 0]));
        let b = RgbImage::from_pixel(2, 2, Rgb([0, 2, 0]));
        let row = panel_row(&[&a, &b], 3);
        assert_eq!(row.dimensions(), (6 + 4 + 6, 6));
        assert_eq!(*row.get_pixel(5, 5), Rgb([1, 0, 0]));
        assert_eq!(*row.get_pixel(7, 0), Rgb([255, 255, 255]));
        assert_eq!(*row.get_pixel(10, 0), Rgb([0, 2, 0]));
    }
}
