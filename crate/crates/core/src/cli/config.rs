//! Single-file experiment description.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cli::dataset::DatasetSpec;
use crate::error::{Error, Result};
use crate::geometry::{Geometry, GridSpec};
use crate::interp::BasisSet;
use crate::io;
use crate::learn::TrainConfig;
use crate::phantom::{random_phantom, shepp_logan, PhantomSpec};
use crate::projector::{check_coverage, DoseSpec, FULL_DOSE_COUNTS};
use crate::recon::Method;
use crate::spectral::FilterKind;

/// Where the test object comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PhantomSource {
    /// Only `shepp_logan` is defined.
    Named(String),
    File(PathBuf),
    Random { seed: u64, ellipses: usize },
}

impl PhantomSource {
    pub fn resolve(&self) -> Result<PhantomSpec> {
        match self {
            PhantomSource::Named(name) if name == "shepp_logan" => Ok(shepp_logan()),
            PhantomSource::Named(name) => Err(Error::invalid(format!("unknown phantom `{name}`"))),
            PhantomSource::File(path) => {
                let spec: PhantomSpec = io::read_json(path)?;
                spec.validate()?;
                Ok(spec)
            }
            PhantomSource::Random { seed, ellipses } => random_phantom(*seed, *ellipses),
        }
    }
}

fn full_dose() -> f64 {
    FULL_DOSE_COUNTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Degradation {
    #[serde(default)]
    pub dose_fraction: Option<f64>,
    #[serde(default = "full_dose")]
    pub incident_counts: f64,
    #[serde(default)]
    pub keep_every: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for Degradation {
    fn default() -> Self {
        Degradation {
            dose_fraction: None,
            incident_counts: FULL_DOSE_COUNTS,
            keep_every: None,
            seed: 0,
        }
    }
}

impl Degradation {
    pub fn dose(&self) -> Option<DoseSpec> {
        self.dose_fraction.map(|f| DoseSpec {
            incident_counts: self.incident_counts,
            dose_fraction: f,
            seed: self.seed,
        })
    }
}

/// Training set and hyperparameters for learned methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub count: usize,
    pub first_seed: u64,
    pub ellipses: usize,
    pub config: TrainConfig,
}

fn default_filter() -> FilterKind {
    FilterKind::Ramp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: Geometry,
    pub grid: GridSpec,
    pub phantom: PhantomSource,
    #[serde(default)]
    pub degradation: Degradation,
    #[serde(default = "default_filter")]
    pub filter: FilterKind,
    pub method: Method,
    /// Overrides the basis size of learned methods.
    #[serde(default)]
    pub basis_k: Option<usize>,
    #[serde(default)]
    pub training: Option<TrainingSection>,
    /// Pretrained model for learned methods (skips training).
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let config: ExperimentConfig = io::read_json(path)?;
        Ok(config)
    }

    /// Checks everything that can be checked before computing.
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.grid.validate()?;
        check_coverage(&self.grid, &self.geometry)?;
        self.phantom.resolve()?;
        if let Some(f) = self.degradation.dose_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::invalid("dose_fraction must lie in (0, 1]"));
            }
        }
        if self.degradation.keep_every == Some(0) {
            return Err(Error::invalid("keep_every must be at least 1"));
        }
        if self.basis_k == Some(0) {
            return Err(Error::invalid("basis_k must be at least 1"));
        }
        if self.method.is_learned() {
            match (&self.training, &self.checkpoint) {
                (None, None) => {
                    return Err(Error::invalid(format!(
                        "method {} needs a training section or a checkpoint",
                        self.method
                    )))
                }
                (Some(t), _) => {
                    let cfg = self.train_config()?;
                    cfg.validate()?;
                    if t.count == 0 {
                        return Err(Error::invalid("training count must be positive"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Training configuration with the method's basis family and any
    /// `basis_k` / filter overrides applied.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let section = self
            .training
            .as_ref()
            .ok_or_else(|| Error::invalid("no training section"))?;
        let mut cfg = section.config.clone();
        if let Some(family) = self.method.basis_family() {
            let k = self.basis_k.unwrap_or(if family == cfg.basis.family { cfg.basis.k } else { 0 });
            cfg.basis = if k == 0 {
                match family {
                    crate::interp::BasisFamily::Fourier => BasisSet::default_fourier(),
                    crate::interp::BasisFamily::Linear => BasisSet::default_linear(),
                }
            } else {
                BasisSet::new(family, k)?
            };
        }
        cfg.filter = self.filter;
        Ok(cfg)
    }

    /// Geometry after view subsampling.
    pub fn measured_geometry(&self) -> Result<Geometry> {
        match self.degradation.keep_every {
            Some(k) => {
                let idx: Vec<usize> = (0..self.geometry.n_views).step_by(k).collect();
                self.geometry.select_views(&idx)
            }
            None => Ok(self.geometry.clone()),
        }
    }

    pub fn dataset(&self) -> Result<Option<DatasetSpec>> {
        Ok(self.training.as_ref().map(|t| DatasetSpec {
            count: t.count,
            first_seed: t.first_seed,
            ellipses: t.ellipses,
            grid: self.grid,
            geometry: self.geometry.clone(),
            keep_every: self.degradation.keep_every,
            dose: self.degradation.dose(),
        }))
    }
}
