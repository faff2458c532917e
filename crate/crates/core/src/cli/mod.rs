//! Command-line front end. Every command reads and writes the formats in
//! [`crate::io`] and records a [`Recipe`] for each array it writes.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input or failed check,
//! 3 numeric failure.

pub mod config;
pub mod dataset;
pub mod recipe;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::RngExt;

use crate::error::{Error, Result};
use crate::geometry::{Geometry, GridSpec};
use crate::image::{ImageGrid, Sinogram, SinogramKind};
use crate::interp::{BasisFamily, BasisSet};
use crate::io::{self, Checkpoint, MetricRow, Window};
use crate::learn::{InitScheme, LossRecord, TrainConfig, TrainLog, Trainer};
use crate::metrics::{summarize, MeanStd, MetricReport};
use crate::phantom::{random_phantom, shepp_logan, PhantomSpec};
use crate::projector::{DoseSpec, FULL_DOSE_COUNTS};
use crate::recon::{backproject, build_backprojection_matrix, Method};
use crate::rng;
use crate::spectral::FilterKind;

pub use config::ExperimentConfig;
pub use dataset::DatasetSpec;
pub use recipe::{Artifact, Projection, Recipe, VerifyOutcome};

#[derive(Debug, Parser)]
#[command(name = "linfbp", version, about = "Parallel-beam FBP with fixed and learnable interpolation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rasterize a phantom and write its description and a preview.
    Phantom(PhantomArgs),
    /// Simulate a sinogram from a phantom.
    Project(ProjectArgs),
    /// Subsample views and/or add photon noise to a sinogram.
    Degrade(DegradeArgs),
    /// Apply a reconstruction filter to a raw sinogram.
    Filter(FilterArgs),
    /// Reconstruct an image from a sinogram.
    Reconstruct(ReconstructArgs),
    /// Write a directory of random-phantom (sinogram, reference) pairs.
    Dataset(DatasetArgs),
    /// Train a learnable-interpolation model on a dataset directory.
    Train(TrainArgs),
    /// Score one method on a dataset directory.
    Eval(EvalArgs),
    /// Score several methods on a dataset directory and summarize.
    Compare(CompareArgs),
    /// Check the backprojector against its explicit matrix.
    MatrixOracle(MatrixOracleArgs),
    /// Rebuild array files from their recipes and compare bytes.
    Verify(VerifyArgs),
    /// Run a whole experiment from a JSON config.
    Run(RunArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct PhantomSource {
    /// Modified Shepp-Logan phantom.
    #[arg(long)]
    pub shepp_logan: bool,
    /// Random ellipse phantom (see --seed, --ellipses).
    #[arg(long)]
    pub random: bool,
    /// Phantom description JSON.
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RandomArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 6)]
    pub ellipses: usize,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Image side length in pixels.
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// Pixel size in mm [default: 2 / size, a unit-radius field of view].
    #[arg(long)]
    pub pixel_size: Option<f64>,
}

impl GridArgs {
    pub fn grid(&self) -> Result<GridSpec> {
        if self.size == 0 {
            return Err(Error::invalid("--size must be positive"));
        }
        GridSpec::square(self.size, self.pixel_size.unwrap_or(2.0 / self.size as f64))
    }
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    #[arg(long, default_value_t = 185)]
    pub bins: usize,
    /// Detector bin width in mm [default: pixel size].
    #[arg(long)]
    pub bin_width: Option<f64>,
    #[arg(long, default_value_t = 360)]
    pub views: usize,
    /// Spread views over 2*pi instead of pi.
    #[arg(long)]
    pub full_rotation: bool,
    /// Detector center offset in bins.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub center_offset: f64,
}

impl GeometryArgs {
    pub fn geometry(&self, default_bin_width: f64) -> Result<Geometry> {
        let span = if self.full_rotation {
            2.0 * std::f64::consts::PI
        } else {
            std::f64::consts::PI
        };
        Geometry::new(self.bins, self.bin_width.unwrap_or(default_bin_width), self.views, span)?
            .with_center_offset(self.center_offset)
    }
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    /// Keep every k-th view.
    #[arg(long, value_name = "K")]
    pub keep_views: Option<usize>,
    /// Dose fraction in (0, 1] for photon noise.
    #[arg(long)]
    pub dose: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub dose_seed: u64,
    /// Full-dose incident photons per ray.
    #[arg(long, default_value_t = FULL_DOSE_COUNTS)]
    pub counts: f64,
}

impl NoiseArgs {
    fn dose(&self) -> Option<DoseSpec> {
        self.dose.map(|f| DoseSpec {
            incident_counts: self.counts,
            dose_fraction: f,
            seed: self.dose_seed,
        })
    }

    fn any(&self) -> bool {
        self.keep_views.is_some() || self.dose.is_some()
    }
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[command(flatten)]
    pub source: PhantomSource,
    #[command(flatten)]
    pub random: RandomArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Raw image path; the description goes to `<stem>_spec.json` and the
    /// preview to `<stem>.pgm`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub source: PhantomSource,
    #[command(flatten)]
    pub random: RandomArgs,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Exact line integrals (the default).
    #[arg(long, conflicts_with = "pixel_driven")]
    pub analytic: bool,
    /// Project the rasterized phantom instead (uses --size/--pixel-size).
    #[arg(long)]
    pub pixel_driven: bool,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "ramp")]
    pub filter: FilterKind,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// ne_fbp, li_fbp, cu_fbp, f_linfbp or l_linfbp.
    #[arg(long)]
    pub method: Method,
    #[arg(long, default_value = "ramp")]
    pub filter: FilterKind,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Model file, required by learned methods.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Reference image for metrics.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Append-free metric CSV for this reconstruction.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Raw image path; the preview goes to `<stem>.pgm`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub first_seed: u64,
    #[arg(long, default_value_t = 6)]
    pub ellipses: usize,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InitArg {
    FanIn,
    NearLinear,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Training configuration JSON; flags below override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint path (rewritten after every epoch).
    #[arg(long)]
    pub out: PathBuf,
    /// Loss log CSV [default: `<out stem>.log.csv`].
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Continue from this checkpoint and its log.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub basis: Option<BasisFamily>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub filter: Option<FilterKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    /// Scale of the extra channels' outgoing weights for near-linear init.
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Weight of the gradient-difference loss.
    #[arg(long)]
    pub gdl: Option<f64>,
    /// Heavy-ball momentum added to RMSProp.
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Keep the sample order fixed.
    #[arg(long)]
    pub no_shuffle: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub method: Method,
    #[arg(long, default_value = "ramp")]
    pub filter: FilterKind,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Metric CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for |reconstruction - reference| previews.
    #[arg(long)]
    pub error_maps: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated methods [default: classical methods plus one per checkpoint].
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,
    /// Learned models; each serves the method matching its basis.
    #[arg(long)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long, default_value = "ramp")]
    pub filter: FilterKind,
    #[arg(long, default_value = "li_fbp")]
    pub baseline: Method,
    /// Per-sample metric CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Summary JSON [default: `<out stem>.summary.json`].
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub error_maps: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatrixOracleArgs {
    #[arg(long, default_value_t = 8)]
    pub size: usize,
    #[arg(long, default_value_t = 12)]
    pub views: usize,
    #[arg(long, default_value_t = 11)]
    pub bins: usize,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Array files (`.f32`) with recipe sidecars.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub filter: Option<FilterKind>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Phantom(a) => cmd_phantom(&a),
        Command::Project(a) => cmd_project(&a),
        Command::Degrade(a) => cmd_degrade(&a),
        Command::Filter(a) => cmd_filter(&a),
        Command::Reconstruct(a) => cmd_reconstruct(&a),
        Command::Dataset(a) => cmd_dataset(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::MatrixOracle(a) => cmd_matrix_oracle(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Run(a) => cmd_run(&a),
    }
}

fn resolve_phantom(source: &PhantomSource, random: &RandomArgs) -> Result<PhantomSpec> {
    if source.shepp_logan {
        Ok(shepp_logan())
    } else if source.random {
        random_phantom(random.seed, random.ellipses)
    } else if let Some(path) = &source.spec {
        let spec: PhantomSpec = io::read_json(path)?;
        spec.validate()?;
        Ok(spec)
    } else {
        Err(Error::invalid("choose --shepp-logan, --random or --spec"))
    }
}

/// Fails before anything is written when the output directory is missing.
fn check_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(Error::invalid(format!(
            "output directory {} does not exist",
            dir.display()
        ))),
        _ => Ok(()),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_image_outputs(path: &Path, image: ImageGrid, recipe: &Recipe, window: Option<Window>) -> Result<ImageGrid> {
    let artifact = Artifact::Image(image).quantized();
    artifact.write(path, recipe)?;
    let image = artifact.into_image()?;
    let window = window.unwrap_or_else(|| Window::full_range(&image));
    io::write_pgm(&path.with_extension("pgm"), &image, window)?;
    Ok(image)
}

pub fn cmd_phantom(a: &PhantomArgs) -> Result<()> {
    check_parent(&a.out)?;
    let phantom = resolve_phantom(&a.source, &a.random)?;
    let grid = a.grid.grid()?;
    let recipe = Recipe::Phantom {
        phantom: phantom.clone(),
        grid,
    };
    let image = recipe.realize()?.into_image()?;
    io::write_json(&with_suffix(&a.out, "_spec.json"), &phantom)?;
    write_image_outputs(&a.out, image, &recipe, None)?;
    println!("wrote {} ({}x{})", a.out.display(), grid.height, grid.width);
    Ok(())
}

fn noisy_recipe(input: Recipe, noise: &NoiseArgs) -> Recipe {
    if noise.any() {
        Recipe::Degrade {
            input: Box::new(input),
            keep_every: noise.keep_views,
            dose: noise.dose(),
        }
    } else {
        input
    }
}

fn write_sinogram_artifact(path: &Path, recipe: &Recipe) -> Result<Sinogram> {
    let artifact = recipe.realize()?;
    artifact.write(path, recipe)?;
    Ok(artifact.into_sinogram()?.0)
}

pub fn cmd_project(a: &ProjectArgs) -> Result<()> {
    check_parent(&a.out)?;
    let phantom = resolve_phantom(&a.source, &a.random)?;
    let grid = a.grid.grid()?;
    let geometry = a.geometry.geometry(grid.pixel_size)?;
    let projection = if a.pixel_driven {
        Projection::PixelDriven { grid }
    } else {
        Projection::Analytic
    };
    let recipe = noisy_recipe(
        Recipe::Project {
            phantom,
            geometry,
            projection,
        },
        &a.noise,
    );
    let sino = write_sinogram_artifact(&a.out, &recipe)?;
    println!("wrote {} ({} bins x {} views)", a.out.display(), sino.n_bins(), sino.n_views());
    Ok(())
}

pub fn cmd_degrade(a: &DegradeArgs) -> Result<()> {
    check_parent(&a.out)?;
    if !a.noise.any() {
        return Err(Error::invalid("degrade needs --keep-views and/or --dose"));
    }
    let (artifact, input) = Artifact::read(&a.input)?;
    let (sino, old_dose) = artifact.into_sinogram()?;
    let dose = a.noise.dose();
    let out = recipe::degrade(&sino, a.noise.keep_views, dose.as_ref())?;
    let recipe = noisy_recipe(input, &a.noise);
    Artifact::Sinogram {
        sino: out,
        dose: dose.or(old_dose),
    }
    .quantized()
    .write(&a.out, &recipe)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

pub fn cmd_filter(a: &FilterArgs) -> Result<()> {
    check_parent(&a.out)?;
    let (artifact, input) = Artifact::read(&a.input)?;
    let (sino, dose) = artifact.into_sinogram()?;
    let filtered = recipe::filter_raw(&sino, a.filter)?;
    let recipe = Recipe::Filter {
        input: Box::new(input),
        filter: a.filter,
    };
    Artifact::Sinogram { sino: filtered, dose }.quantized().write(&a.out, &recipe)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn read_reference(path: &Path) -> Result<ImageGrid> {
    Artifact::read(path)?.0.into_image()
}

pub fn cmd_reconstruct(a: &ReconstructArgs) -> Result<()> {
    check_parent(&a.out)?;
    let (artifact, input) = Artifact::read(&a.input)?;
    let (sino, _) = artifact.into_sinogram()?;
    let reference = a.reference.as_deref().map(read_reference).transpose()?;
    let grid = match &reference {
        Some(r) if a.grid.pixel_size.is_none() => *r.grid(),
        _ => a.grid.grid()?,
    };
    let image = recipe::reconstruct_method(&sino, &grid, a.method, a.filter, a.checkpoint.as_deref())?;
    let recipe = Recipe::Reconstruct {
        input: Box::new(input),
        grid,
        method: a.method,
        filter: a.filter,
        checkpoint: a.checkpoint.clone(),
    };
    let window = reference.as_ref().map(Window::full_range);
    let image = write_image_outputs(&a.out, image, &recipe, window)?;
    println!("wrote {}", a.out.display());
    if let Some(r) = &reference {
        let id = a.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let row = MetricRow::new(id, a.method.label(a.filter), &MetricReport::compute(&image, r)?);
        print_rows(std::slice::from_ref(&row))?;
        if let Some(path) = &a.metrics {
            io::write_metric_csv(path, &[row])?;
        }
    }
    Ok(())
}

fn print_rows(rows: &[MetricRow]) -> Result<()> {
    print!("{}", String::from_utf8_lossy(&io::encode_metric_csv(rows)?));
    Ok(())
}

pub fn cmd_dataset(a: &DatasetArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let grid = a.grid.grid()?;
    let spec = DatasetSpec {
        count: a.count,
        first_seed: a.first_seed,
        ellipses: a.ellipses,
        grid,
        geometry: a.geometry.geometry(grid.pixel_size)?,
        keep_every: a.noise.keep_views,
        dose: a.noise.dose(),
    };
    spec.write(&a.out)?;
    io::write_json(&a.out.join("dataset.json"), &spec)?;
    println!("wrote {} samples to {}", a.count, a.out.display());
    Ok(())
}

fn effective_train_config(a: &TrainArgs, resumed: Option<&Checkpoint>) -> Result<TrainConfig> {
    let mut cfg = match (&a.config, resumed.and_then(|c| c.header.train_config.clone())) {
        (Some(path), _) => io::read_json(path)?,
        (None, Some(cfg)) => cfg,
        (None, None) => TrainConfig::default(),
    };
    if let Some(e) = a.epochs {
        cfg.epochs = e as usize;
    }
    if let Some(lr) = a.lr {
        cfg.optimizer.lr = lr;
    }
    if a.basis.is_some() || a.k.is_some() {
        let family = a.basis.unwrap_or(cfg.basis.family);
        cfg.basis = match a.k {
            Some(k) => BasisSet::new(family, k)?,
            None if family == cfg.basis.family => cfg.basis,
            None => match family {
                BasisFamily::Fourier => BasisSet::default_fourier(),
                BasisFamily::Linear => BasisSet::default_linear(),
            },
        };
    }
    if let Some(f) = a.filter {
        cfg.filter = f;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let jitter = a.jitter.unwrap_or(match cfg.init {
        InitScheme::NearLinear { jitter } => jitter,
        InitScheme::FanIn => 0.0,
    });
    match a.init {
        Some(InitArg::FanIn) => cfg.init = InitScheme::FanIn,
        Some(InitArg::NearLinear) => cfg.init = InitScheme::NearLinear { jitter },
        None => {
            if let InitScheme::NearLinear { .. } = cfg.init {
                cfg.init = InitScheme::NearLinear { jitter };
            }
        }
    }
    if let Some(g) = a.gdl {
        cfg.gdl_weight = g;
    }
    if let Some(m) = a.momentum {
        cfg.optimizer.momentum = m;
    }
    if a.no_shuffle {
        cfg.shuffle = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn log_records(rows: &[io::LogRow]) -> Vec<LossRecord> {
    rows.iter()
        .map(|r| LossRecord {
            epoch: r.epoch,
            sample_index: r.sample_index,
            loss: r.loss,
        })
        .collect()
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    check_parent(&a.out)?;
    let log_path = a.log.clone().unwrap_or_else(|| with_suffix(&a.out, ".log.csv"));
    let resumed = a.resume.as_deref().map(io::read_checkpoint).transpose()?;
    let config = effective_train_config(a, resumed.as_ref())?;
    let dataset: Vec<_> = dataset::read_dataset(&a.data)?.into_iter().map(|(_, p)| p).collect();
    let geometry = dataset[0].sinogram.geometry().clone();
    let trainer = Trainer::new(config.clone(), &dataset)?;
    io::write_json(&with_suffix(&a.out, ".config.json"), &config)?;
    let (mut state, mut log) = match &resumed {
        Some(ck) => {
            let resume_log = a.resume.as_deref().map(|p| with_suffix(p, ".log.csv"));
            let records = match a.log.clone().or(resume_log) {
                Some(p) if p.exists() => log_records(&io::read_train_log(&p)?)
                    .into_iter()
                    .filter(|r| r.epoch <= ck.state.epochs_done)
                    .collect(),
                _ => Vec::new(),
            };
            (ck.state.clone(), TrainLog { records, pixels: 0 })
        }
        None => (trainer.fresh_state()?, TrainLog::default()),
    };
    if state.model.basis != config.basis || state.model.filter != config.filter {
        return Err(Error::invalid("resumed checkpoint does not match the training configuration"));
    }
    let start = Instant::now();
    let mut write_error = None;
    trainer.run(&mut state, &mut log, |s, l| {
        let ck = Checkpoint::new(s.clone(), Some(geometry.clone()), Some(config.clone()));
        let result = io::write_checkpoint(&a.out, &ck).and_then(|_| io::write_train_log(&log_path, &l.records, l.pixels));
        if let Err(e) = result {
            write_error.get_or_insert(e);
        }
        println!(
            "epoch {:>4}  mean loss {:.6e}  ({:.1} s)",
            s.epochs_done,
            l.epoch_mean(s.epochs_done).unwrap_or(f64::NAN),
            start.elapsed().as_secs_f64()
        );
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    let ck = Checkpoint::new(state, Some(geometry), Some(config));
    io::write_checkpoint(&a.out, &ck)?;
    io::write_train_log(&log_path, &log.records, log.pixels)?;
    if let (Some(i), Some(f)) = (log.initial_loss(), log.final_loss()) {
        println!("initial loss {i:.6e}, final loss {f:.6e}, ratio {:.4}", f / i);
    }
    println!("wrote {} and {}", a.out.display(), log_path.display());
    Ok(())
}

/// Scores `method` on every sample; optionally writes error previews.
fn evaluate_method(
    samples: &[(String, crate::learn::TrainingPair)],
    method: Method,
    filter: FilterKind,
    checkpoint: Option<&Path>,
    error_maps: Option<&Path>,
) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::with_capacity(samples.len());
    for (id, pair) in samples {
        let grid = *pair.reference.grid();
        let image = recipe::reconstruct_method(&pair.sinogram, &grid, method, filter, checkpoint)?;
        if let Some(dir) = error_maps {
            let err: Vec<f64> = image
                .values()
                .iter()
                .zip(pair.reference.values())
                .map(|(a, b)| (a - b).abs())
                .collect();
            let err = ImageGrid::from_values(grid, err)?;
            io::write_pgm(&dir.join(format!("{id}_{method}_err.pgm")), &err, Window::full_range(&err))?;
        }
        rows.push(MetricRow::new(id.clone(), method.as_str(), &MetricReport::compute(&image, &pair.reference)?));
    }
    Ok(rows)
}

fn prepare_dir(dir: Option<&Path>) -> Result<()> {
    if let Some(d) = dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    check_parent(&a.out)?;
    prepare_dir(a.error_maps.as_deref())?;
    let samples = dataset::read_dataset(&a.data)?;
    let rows = evaluate_method(&samples, a.method, a.filter, a.checkpoint.as_deref(), a.error_maps.as_deref())?;
    io::write_metric_csv(&a.out, &rows)?;
    let s = summarize_rows(&rows);
    println!(
        "{}: PSNR {:.3} ± {:.3} dB, NMSE {:.4} ± {:.4}, SSIM {:.4} ± {:.4} over {} samples",
        a.method.label(a.filter),
        s.psnr_db.mean,
        s.psnr_db.std,
        s.nmse.mean,
        s.nmse.std,
        s.ssim.mean,
        s.ssim.std,
        rows.len()
    );
    Ok(())
}

fn summarize_rows(rows: &[MetricRow]) -> crate::metrics::MetricSummary {
    let reports: Vec<MetricReport> = rows
        .iter()
        .map(|r| MetricReport {
            psnr_db: r.psnr_db,
            nmse: r.nmse,
            ssim: r.ssim,
        })
        .collect();
    summarize(&reports)
}

/// Mean ± SD of each metric for one method, and its PSNR difference to the
/// baseline.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub label: String,
    pub samples: usize,
    pub psnr_db: MeanStd,
    pub nmse: MeanStd,
    pub ssim: MeanStd,
    pub delta_psnr_db: f64,
}

pub fn summary_table(rows: &[MetricRow], methods: &[Method], filter: FilterKind, baseline: Method) -> Vec<SummaryRow> {
    let of = |m: Method| -> Vec<MetricRow> { rows.iter().filter(|r| r.method == m.as_str()).cloned().collect() };
    let base = summarize_rows(&of(baseline)).psnr_db.mean;
    methods
        .iter()
        .map(|&m| {
            let own = of(m);
            let s = summarize_rows(&own);
            SummaryRow {
                method: m.as_str().into(),
                label: m.label(filter),
                samples: own.len(),
                psnr_db: s.psnr_db,
                nmse: s.nmse,
                ssim: s.ssim,
                delta_psnr_db: s.psnr_db.mean - base,
            }
        })
        .collect()
}

pub fn cmd_compare(a: &CompareArgs) -> Result<()> {
    check_parent(&a.out)?;
    prepare_dir(a.error_maps.as_deref())?;
    let mut learned = Vec::new();
    for path in &a.checkpoint {
        let family = io::read_checkpoint(path)?.header.basis.family;
        let method = match family {
            BasisFamily::Fourier => Method::FLinfbp,
            BasisFamily::Linear => Method::LLinfbp,
        };
        learned.push((method, path.clone()));
    }
    let mut methods = a.methods.clone();
    if methods.is_empty() {
        methods = vec![Method::NeFbp, Method::LiFbp, Method::CuFbp];
        methods.extend(learned.iter().map(|(m, _)| *m));
    }
    if !methods.contains(&a.baseline) {
        methods.insert(0, a.baseline);
    }
    let samples = dataset::read_dataset(&a.data)?;
    let mut rows = Vec::new();
    for &m in &methods {
        let ck = learned.iter().find(|(lm, _)| *lm == m).map(|(_, p)| p.as_path());
        rows.extend(evaluate_method(&samples, m, a.filter, ck, a.error_maps.as_deref())?);
    }
    io::write_metric_csv(&a.out, &rows)?;
    let table = summary_table(&rows, &methods, a.filter, a.baseline);
    io::write_json(&a.summary.clone().unwrap_or_else(|| with_suffix(&a.out, ".summary.json")), &table)?;
    println!("{:<10} {:>18} {:>18} {:>18} {:>8}", "method", "PSNR (dB)", "NMSE", "SSIM", "dPSNR");
    for r in &table {
        println!(
            "{:<10} {:>9.3} ± {:<6.3} {:>9.4} ± {:<6.4} {:>9.4} ± {:<6.4} {:>+8.3}",
            r.label, r.psnr_db.mean, r.psnr_db.std, r.nmse.mean, r.nmse.std, r.ssim.mean, r.ssim.std, r.delta_psnr_db
        );
    }
    Ok(())
}

/// Largest difference between the backprojector and its explicit matrix
/// over random sinograms.
pub fn matrix_oracle(size: usize, views: usize, bins: usize, trials: usize, seed: u64) -> Result<f64> {
    let grid = GridSpec::square(size, 1.0)?;
    let geometry = Geometry::half_rotation(bins, 1.0, views)?;
    let matrix = build_backprojection_matrix(&grid, &geometry)?;
    let mut rng = rng::seeded(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let samples: Vec<f64> = (0..bins * views).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sino = Sinogram::from_samples(geometry.clone(), SinogramKind::Filtered, samples)?;
        let direct = backproject(&sino, &grid, crate::interp::KernelKind::Linear);
        let via_matrix = matrix.mul_vec(sino.samples());
        for (a, b) in direct.values().iter().zip(&via_matrix) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

pub fn cmd_matrix_oracle(a: &MatrixOracleArgs) -> Result<()> {
    let start = Instant::now();
    let worst = matrix_oracle(a.size, a.views, a.bins, a.trials, a.seed)?;
    println!(
        "{}x{} grid, {} views, {} bins, {} sinograms: max abs difference {:.3e} ({:.3} s)",
        a.size,
        a.size,
        a.views,
        a.bins,
        a.trials,
        worst,
        start.elapsed().as_secs_f64()
    );
    if worst >= a.tolerance {
        return Err(Error::invalid(format!("difference {worst:e} exceeds tolerance {:e}", a.tolerance)));
    }
    Ok(())
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<()> {
    let mut failures = 0;
    for path in &a.paths {
        match recipe::verify_file(path)? {
            VerifyOutcome::Identical => println!("ok        {}", path.display()),
            VerifyOutcome::NoRecipe => println!("no recipe {}", path.display()),
            VerifyOutcome::Differs { raw, sidecar } => {
                failures += 1;
                let what = match (raw, sidecar) {
                    (true, true) => "data and sidecar",
                    (true, false) => "data",
                    _ => "sidecar",
                };
                println!("DIFFERS   {} ({what})", path.display());
            }
        }
    }
    if failures > 0 {
        return Err(Error::invalid(format!("{failures} file(s) differ from their recipes")));
    }
    Ok(())
}

/// Runs a full experiment: phantom, sinogram, optional training,
/// reconstruction and metrics, all under `output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricRow> {
    config.validate()?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_json(&dir.join("effective_config.json"), config)?;
    let phantom = config.phantom.resolve()?;
    let phantom_recipe = Recipe::Phantom {
        phantom: phantom.clone(),
        grid: config.grid,
    };
    io::write_json(&dir.join("phantom_spec.json"), &phantom)?;
    let reference = write_image_outputs(
        &dir.join("phantom.f32"),
        phantom_recipe.realize()?.into_image()?,
        &phantom_recipe,
        None,
    )?;
    let deg = &config.degradation;
    let mut sino_recipe = Recipe::Project {
        phantom,
        geometry: config.geometry.clone(),
        projection: Projection::Analytic,
    };
    if deg.keep_every.is_some() || deg.dose_fraction.is_some() {
        sino_recipe = Recipe::Degrade {
            input: Box::new(sino_recipe),
            keep_every: deg.keep_every,
            dose: deg.dose(),
        };
    }
    let sino_path = dir.join("sinogram.f32");
    let sino = write_sinogram_artifact(&sino_path, &sino_recipe)?;
    let mut checkpoint = config.checkpoint.clone();
    if config.method.is_learned() && checkpoint.is_none() {
        let spec = config.dataset()?.expect("validated: learned methods have training data");
        let pairs: Vec<_> = spec.samples()?.into_iter().map(|s| s.pair).collect();
        let train_config = config.train_config()?;
        let (state, log) = crate::learn::train(&train_config, &pairs)?;
        let path = dir.join("model.ckpt");
        io::write_checkpoint(&path, &Checkpoint::new(state, Some(pairs[0].sinogram.geometry().clone()), Some(train_config)))?;
        io::write_train_log(&dir.join("train_log.csv"), &log.records, log.pixels)?;
        checkpoint = Some(path);
    }
    let image = recipe::reconstruct_method(&sino, &config.grid, config.method, config.filter, checkpoint.as_deref())?;
    let recon_recipe = Recipe::Reconstruct {
        input: Box::new(sino_recipe),
        grid: config.grid,
        method: config.method,
        filter: config.filter,
        checkpoint,
    };
    let image = write_image_outputs(&dir.join("recon.f32"), image, &recon_recipe, Some(Window::full_range(&reference)))?;
    let row = MetricRow::new("phantom", config.method.as_str(), &MetricReport::compute(&image, &reference)?);
    io::write_metric_csv(&dir.join("metrics.csv"), std::slice::from_ref(&row))?;
    Ok(row)
}

pub fn cmd_run(a: &RunArgs) -> Result<()> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(d) = &a.output_dir {
        config.output_dir = d.clone();
    }
    if let Some(m) = a.method {
        config.method = m;
    }
    if let Some(f) = a.filter {
        config.filter = f;
    }
    let row = run_experiment(&config)?;
    print_rows(&[row])?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_subcommands() {
        let cli = Cli::try_parse_from(["linfbp", "phantom", "--shepp-logan", "--size", "64", "--out", "p.f32"]).unwrap();
        assert!(matches!(cli.command, Command::Phantom(_)));
        assert!(Cli::try_parse_from(["linfbp", "phantom", "--shepp-logan", "--random", "--out", "p.f32"]).is_err());
        assert!(Cli::try_parse_from(["linfbp", "reconstruct", "--input", "s.f32", "--method", "bogus", "--out", "x.f32"]).is_err());
        assert!(Cli::try_parse_from(["linfbp", "train", "--data", "d", "--out", "m.ckpt", "--epochs", "0"]).is_err());
        let cli = Cli::try_parse_from(["linfbp", "compare", "--data", "d", "--methods", "ne_fbp,li_fbp", "--out", "m.csv"]).unwrap();
        match cli.command {
            Command::Compare(c) => assert_eq!(c.methods, vec![Method::NeFbp, Method::LiFbp]),
            _ => panic!("wrong command"),
        }
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(main_with_args(["linfbp", "frobnicate"]), 1);
        assert_eq!(main_with_args(["linfbp", "reconstruct", "--input", "s.f32", "--method", "bogus", "--out", "x.f32"]), 1);
        assert_eq!(main_with_args(["linfbp", "--help"]), 0);
    }

    #[test]
    fn matrix_oracle_agrees() {
        assert!(matrix_oracle(8, 12, 11, 3, 1).unwrap() < 1e-10);
    }

    #[test]
    fn summary_delta_against_itself_is_zero() {
        let rows = vec![
            MetricRow {
                sample_id: "a".into(),
                method: "li_fbp".into(),
                psnr_db: 30.0,
                nmse: 0.1,
                ssim: 0.9,
            },
            MetricRow {
                sample_id: "b".into(),
                method: "li_fbp".into(),
                psnr_db: 32.0,
                nmse: 0.2,
                ssim: 0.8,
            },
        ];
        let t = summary_table(&rows, &[Method::LiFbp], FilterKind::Ramp, Method::LiFbp);
        assert_eq!(t[0].delta_psnr_db, 0.0);
        assert_eq!(t[0].psnr_db.mean, 31.0);
        assert_eq!(t[0].samples, 2);
    }
}
