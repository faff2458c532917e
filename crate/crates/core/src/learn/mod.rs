//! Learnable interpolation: the coefficient network, its gradients, and
//! the training loop.

pub mod loss;
pub mod net;
pub mod optim;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Geometry, GridSpec};
use crate::image::{ImageGrid, Sinogram, SinogramKind};
use crate::interp::{BasisSet, CoeffTensor, LcrMode};
use crate::recon::{Backprojector, LcrOperator};
use crate::rng;
use crate::spectral::{filter_sinogram, make_filter, FilterKind};

pub use loss::{combined_loss, loss_gdl, loss_mse};
pub use net::{net_backward, net_forward, InitScheme, ModelParams, NetCache, NetShape};
pub use optim::{rmsprop_step, OptimState, RmsPropConfig};

/// A trained (or freshly initialized) learnable-interpolation model.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedModel {
    pub basis: BasisSet,
    pub filter: FilterKind,
    pub mode: LcrMode,
    pub params: ModelParams,
}

impl LearnedModel {
    pub fn new(basis: BasisSet, filter: FilterKind, mode: LcrMode, params: ModelParams) -> Result<Self> {
        if params.shape().channels != basis.len() {
            return Err(Error::mismatch(format!(
                "network outputs {} channels but the basis has {} functions",
                params.shape().channels,
                basis.len()
            )));
        }
        Ok(LearnedModel {
            basis,
            filter,
            mode,
            params,
        })
    }

    /// Coefficients predicted for a filtered sinogram.
    pub fn coefficients(&self, filtered: &Sinogram) -> Result<CoeffTensor> {
        Ok(net_forward(&self.params, filtered, &self.basis)?.0)
    }

    /// Filters a raw sinogram with the model's filter and reconstructs.
    pub fn reconstruct(&self, raw: &Sinogram, grid: &GridSpec) -> Result<ImageGrid> {
        let spec = make_filter(self.filter, raw.n_bins(), raw.geometry().bin_width)?;
        self.backproject(&filter_sinogram(raw, &spec)?, grid)
    }
}

impl Backprojector for LearnedModel {
    fn backproject(&self, filtered: &Sinogram, grid: &GridSpec) -> Result<ImageGrid> {
        let z = self.coefficients(filtered)?;
        LcrOperator::new(grid, filtered.geometry(), self.basis, self.mode).forward(&z)
    }

    fn label(&self) -> String {
        match self.basis.family {
            crate::interp::BasisFamily::Fourier => "F-LInFBP".into(),
            crate::interp::BasisFamily::Linear => "L-LInFBP".into(),
        }
    }
}

/// One training example: a raw sinogram and the image it should reconstruct to.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub sinogram: Sinogram,
    pub reference: ImageGrid,
}

fn default_hidden() -> usize {
    8
}

fn default_kernel() -> usize {
    5
}

fn default_true() -> bool {
    true
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub basis: BasisSet,
    pub filter: FilterKind,
    #[serde(default)]
    pub mode: LcrMode,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_kernel")]
    pub kernel1: usize,
    #[serde(default = "default_kernel")]
    pub kernel2: usize,
    pub epochs: usize,
    #[serde(default)]
    pub optimizer: RmsPropConfig,
    /// Weight of the gradient-difference term (0 trains on MSE alone).
    #[serde(default)]
    pub gdl_weight: f64,
    pub seed: u64,
    #[serde(default)]
    pub init: InitScheme,
    /// Visit samples in a fresh seeded order each epoch.
    #[serde(default = "default_true")]
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            basis: BasisSet::default_linear(),
            filter: FilterKind::Ramp,
            mode: LcrMode::Nearest,
            hidden: default_hidden(),
            kernel1: default_kernel(),
            kernel2: default_kernel(),
            epochs: 100,
            optimizer: RmsPropConfig::default(),
            gdl_weight: 0.0,
            seed: 0,
            init: InitScheme::FanIn,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn shape(&self) -> Result<NetShape> {
        NetShape::new(self.hidden, self.kernel1, self.kernel2, self.basis.len())
    }

    pub fn validate(&self) -> Result<()> {
        BasisSet::new(self.basis.family, self.basis.k)?;
        self.shape()?;
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        let o = &self.optimizer;
        if !(o.lr.is_finite() && o.lr >= 0.0) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&o.rho) || !(0.0..1.0).contains(&o.momentum) {
            return Err(Error::invalid("rho and momentum must lie in [0, 1)"));
        }
        if !(o.eps > 0.0 && o.eps.is_finite()) {
            return Err(Error::invalid("eps must be positive"));
        }
        if !(self.gdl_weight >= 0.0 && self.gdl_weight.is_finite()) {
            return Err(Error::invalid("gdl weight must be finite and non-negative"));
        }
        Ok(())
    }

    /// Freshly initialized model for this configuration.
    pub fn init_model(&self) -> Result<LearnedModel> {
        self.validate()?;
        let params = ModelParams::init(self.shape()?, &self.basis, self.init, self.seed)?;
        LearnedModel::new(self.basis, self.filter, self.mode, params)
    }
}

/// Loss of one sample at one point of training. Epoch 0 holds the losses
/// of the initial model; in later epochs the loss is measured just before
/// the update on that sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub sample_index: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LossRecord>,
    /// Pixels per image, for the per-pixel view of the summed loss.
    pub pixels: usize,
}

impl TrainLog {
    pub fn epoch_mean(&self, epoch: usize) -> Option<f64> {
        let losses: Vec<f64> = self.records.iter().filter(|r| r.epoch == epoch).map(|r| r.loss).collect();
        (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64)
    }

    pub fn last_epoch(&self) -> Option<usize> {
        self.records.iter().map(|r| r.epoch).max()
    }

    pub fn initial_loss(&self) -> Option<f64> {
        self.epoch_mean(0)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_mean(self.last_epoch()?)
    }
}

/// Model plus everything needed to continue training exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: LearnedModel,
    pub optim: OptimState,
    pub epochs_done: usize,
    pub seed: u64,
}

/// Dataset prepared for repeated passes: views filtered once, one shared
/// operator.
pub struct Trainer {
    config: TrainConfig,
    filtered: Vec<Sinogram>,
    references: Vec<ImageGrid>,
    operator: LcrOperator,
}

fn same_geometry(a: &Geometry, b: &Geometry) -> bool {
    a.n_bins == b.n_bins
        && a.n_views == b.n_views
        && a.bin_width == b.bin_width
        && a.detector_center_offset == b.detector_center_offset
        && a.angles() == b.angles()
}

impl Trainer {
    pub fn new(config: TrainConfig, dataset: &[TrainingPair]) -> Result<Self> {
        config.validate()?;
        let first = dataset.first().ok_or_else(|| Error::invalid("training set is empty"))?;
        let geometry = first.sinogram.geometry().clone();
        let grid = *first.reference.grid();
        let spec = make_filter(config.filter, geometry.n_bins, geometry.bin_width)?;
        let mut filtered = Vec::with_capacity(dataset.len());
        let mut references = Vec::with_capacity(dataset.len());
        for (i, pair) in dataset.iter().enumerate() {
            pair.sinogram.expect_kind(SinogramKind::Raw)?;
            if !same_geometry(pair.sinogram.geometry(), &geometry) {
                return Err(Error::mismatch(format!("sample {i} has a different geometry")));
            }
            pair.reference.same_shape(&first.reference)?;
            filtered.push(filter_sinogram(&pair.sinogram, &spec)?);
            references.push(pair.reference.clone());
        }
        let operator = LcrOperator::new(&grid, &geometry, config.basis, config.mode);
        Ok(Trainer {
            config,
            filtered,
            references,
            operator,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.filtered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filtered.is_empty()
    }

    pub fn fresh_state(&self) -> Result<TrainState> {
        let model = self.config.init_model()?;
        let n = model.params.shape().param_count();
        Ok(TrainState {
            model,
            optim: OptimState::new(n),
            epochs_done: 0,
            seed: self.config.seed,
        })
    }

    /// Loss and parameter gradient for one sample.
    pub fn loss_and_grad(&self, params: &ModelParams, index: usize) -> Result<(f64, Vec<f64>)> {
        let (z, cache) = net_forward(params, &self.filtered[index], &self.config.basis)?;
        let image = self.operator.forward(&z)?;
        let (loss, grad_image) = combined_loss(&image, &self.references[index], self.config.gdl_weight)?;
        let grad_image = ImageGrid::from_values(*image.grid(), grad_image)?;
        let grad_z = self.operator.backward(&grad_image)?;
        Ok((loss, net_backward(params, &cache, &grad_z)?))
    }

    pub fn loss(&self, params: &ModelParams, index: usize) -> Result<f64> {
        let (z, _) = net_forward(params, &self.filtered[index], &self.config.basis)?;
        let image = self.operator.forward(&z)?;
        let mut loss = loss_mse(&image, &self.references[index])?;
        if self.config.gdl_weight != 0.0 {
            loss += self.config.gdl_weight * loss_gdl(&image, &self.references[index])?;
        }
        Ok(loss)
    }

    fn order(&self, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        if self.config.shuffle {
            order.shuffle(&mut rng::substream(self.config.seed, epoch as u64));
        }
        order
    }

    fn check(loss: f64, epoch: usize, index: usize) -> Result<f64> {
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(Error::Numeric(format!(
                "loss became {loss} at epoch {epoch}, sample {index}; lower the learning rate"
            )))
        }
    }

    /// Losses of the current model on every sample, logged as `epoch`.
    pub fn evaluate(&self, params: &ModelParams, epoch: usize, log: &mut TrainLog) -> Result<()> {
        for i in 0..self.len() {
            let loss = Self::check(self.loss(params, i)?, epoch, i)?;
            log.records.push(LossRecord {
                epoch,
                sample_index: i,
                loss,
            });
        }
        Ok(())
    }

    /// One pass over the data with an update after every sample.
    pub fn run_epoch(&self, state: &mut TrainState, log: &mut TrainLog) -> Result<()> {
        let epoch = state.epochs_done + 1;
        for i in self.order(epoch) {
            let (loss, grad) = self.loss_and_grad(&state.model.params, i)?;
            Self::check(loss, epoch, i)?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient at epoch {epoch}, sample {i}")));
            }
            rmsprop_step(state.model.params.as_mut_slice(), &grad, &mut state.optim, &self.config.optimizer)?;
            log.records.push(LossRecord {
                epoch,
                sample_index: i,
                loss,
            });
        }
        state.epochs_done = epoch;
        Ok(())
    }

    /// Trains until `config.epochs` epochs are done. A state from an earlier,
    /// interrupted run continues exactly where it stopped.
    pub fn run(&self, state: &mut TrainState, log: &mut TrainLog, mut on_epoch: impl FnMut(&TrainState, &TrainLog)) -> Result<()> {
        log.pixels = self.references[0].values().len();
        if state.epochs_done == 0 && log.records.is_empty() {
            self.evaluate(&state.model.params, 0, log)?;
        }
        while state.epochs_done < self.config.epochs {
            self.run_epoch(state, log)?;
            on_epoch(state, log);
        }
        Ok(())
    }
}

/// Trains a model from scratch.
pub fn train(config: &TrainConfig, dataset: &[TrainingPair]) -> Result<(TrainState, TrainLog)> {
    let trainer = Trainer::new(config.clone(), dataset)?;
    let mut state = trainer.fresh_state()?;
    let mut log = TrainLog::default();
    trainer.run(&mut state, &mut log, |_, _| {})?;
    Ok((state, log))
}
