//! Provenance recipes: every array file records how to rebuild it, and
//! `verify` rebuilds it and compares bytes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{Geometry, GridSpec};
use crate::image::{ImageGrid, Sinogram, SinogramKind};
use crate::io::{self, ImageSidecar, SinogramSidecar};
use crate::phantom::{analytic_sinogram, rasterize, PhantomSpec};
use crate::projector::{apply_low_dose, forward_project, subsample_views, Coverage, DoseSpec, ViewSelection};
use crate::recon::{reconstruct, Backprojector, KernelBackprojector, Method};
use crate::spectral::{filter_sinogram, make_filter, FilterKind};

/// How a sinogram was computed from a phantom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Projection {
    /// Exact line integrals of the ellipses.
    Analytic,
    /// Pixel-driven projection of the phantom rasterized on `grid`.
    PixelDriven { grid: GridSpec },
}

/// A reproducible description of an array artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Recipe {
    Phantom {
        phantom: PhantomSpec,
        grid: GridSpec,
    },
    Project {
        phantom: PhantomSpec,
        geometry: Geometry,
        projection: Projection,
    },
    /// View subsampling first, then photon noise on the kept views.
    Degrade {
        input: Box<Recipe>,
        #[serde(default)]
        keep_every: Option<usize>,
        #[serde(default)]
        dose: Option<DoseSpec>,
    },
    Filter {
        input: Box<Recipe>,
        filter: FilterKind,
    },
    Reconstruct {
        input: Box<Recipe>,
        grid: GridSpec,
        method: Method,
        filter: FilterKind,
        #[serde(default)]
        checkpoint: Option<PathBuf>,
    },
    /// A file without a recipe of its own; rebuilt by reading it.
    External {
        path: PathBuf,
    },
}

/// An in-memory array artifact.
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Image(ImageGrid),
    Sinogram { sino: Sinogram, dose: Option<DoseSpec> },
}

fn quantize(values: &mut [f64]) {
    values.iter_mut().for_each(|v| *v = *v as f32 as f64);
}

impl Artifact {
    /// Rounds samples to the precision they are stored at, so that values
    /// computed in memory equal values read back from disk.
    pub fn quantized(mut self) -> Self {
        match &mut self {
            Artifact::Image(img) => quantize(img.values_mut()),
            Artifact::Sinogram { sino, .. } => quantize(sino.samples_mut()),
        }
        self
    }

    pub fn into_image(self) -> Result<ImageGrid> {
        match self {
            Artifact::Image(img) => Ok(img),
            Artifact::Sinogram { .. } => Err(Error::invalid("expected an image, found a sinogram")),
        }
    }

    pub fn into_sinogram(self) -> Result<(Sinogram, Option<DoseSpec>)> {
        match self {
            Artifact::Sinogram { sino, dose } => Ok((sino, dose)),
            Artifact::Image(_) => Err(Error::invalid("expected a sinogram, found an image")),
        }
    }

    pub fn write(&self, path: &Path, recipe: &Recipe) -> Result<()> {
        let provenance = Some(recipe.to_value());
        match self {
            Artifact::Image(img) => io::write_image(path, img, provenance),
            Artifact::Sinogram { sino, dose } => io::write_sinogram(path, sino, *dose, provenance),
        }
    }

    /// Exact bytes of the raw file and its sidecar.
    pub fn encode(&self, recipe: &Recipe) -> (Vec<u8>, Vec<u8>) {
        let provenance = Some(recipe.to_value());
        match self {
            Artifact::Image(img) => (
                io::encode_f32(img.values()),
                io::to_json_bytes(&ImageSidecar {
                    format: "f32le".into(),
                    grid: *img.grid(),
                    provenance,
                }),
            ),
            Artifact::Sinogram { sino, dose } => (
                io::encode_f32(sino.samples()),
                io::to_json_bytes(&SinogramSidecar {
                    format: "f32le".into(),
                    geometry: sino.geometry().clone(),
                    kind: sino.kind(),
                    dose: *dose,
                    provenance,
                }),
            ),
        }
    }

    /// Reads an array file of either kind together with its recipe. Files
    /// without one get an [`Recipe::External`] pointing at themselves.
    pub fn read(path: &Path) -> Result<(Artifact, Recipe)> {
        let sidecar: Value = io::read_json(&io::sidecar_path(path))?;
        let (artifact, provenance) = if sidecar.get("geometry").is_some() {
            let (sino, side) = io::read_sinogram(path)?;
            (Artifact::Sinogram { sino, dose: side.dose }, side.provenance)
        } else {
            let (img, side) = io::read_image(path)?;
            (Artifact::Image(img), side.provenance)
        };
        let recipe = match provenance {
            Some(v) => Recipe::from_value(path, v)?,
            None => Recipe::External { path: path.to_path_buf() },
        };
        Ok((artifact, recipe))
    }
}

impl Recipe {
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("recipes serialize to JSON")
    }

    pub fn from_value(path: &Path, value: Value) -> Result<Self> {
        serde_json::from_value(value).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Recomputes the artifact from scratch.
    pub fn realize(&self) -> Result<Artifact> {
        let artifact = match self {
            Recipe::Phantom { phantom, grid } => Artifact::Image(rasterize(phantom, grid)),
            Recipe::Project {
                phantom,
                geometry,
                projection,
            } => Artifact::Sinogram {
                sino: project(phantom, geometry, projection)?,
                dose: None,
            },
            Recipe::Degrade { input, keep_every, dose } => {
                let (sino, old_dose) = input.realize()?.into_sinogram()?;
                Artifact::Sinogram {
                    sino: degrade(&sino, *keep_every, dose.as_ref())?,
                    dose: dose.or(old_dose),
                }
            }
            Recipe::Filter { input, filter } => {
                let (sino, dose) = input.realize()?.into_sinogram()?;
                Artifact::Sinogram {
                    sino: filter_raw(&sino, *filter)?,
                    dose,
                }
            }
            Recipe::Reconstruct {
                input,
                grid,
                method,
                filter,
                checkpoint,
            } => {
                let (sino, _) = input.realize()?.into_sinogram()?;
                Artifact::Image(reconstruct_method(&sino, grid, *method, *filter, checkpoint.as_deref())?)
            }
            Recipe::External { path } => return Ok(Artifact::read(path)?.0),
        };
        Ok(artifact.quantized())
    }
}

pub fn project(phantom: &PhantomSpec, geometry: &Geometry, projection: &Projection) -> Result<Sinogram> {
    phantom.validate()?;
    geometry.validate()?;
    match projection {
        Projection::Analytic => Ok(analytic_sinogram(phantom, geometry)),
        Projection::PixelDriven { grid } => forward_project(&rasterize(phantom, grid), geometry, Coverage::Strict),
    }
}

pub fn degrade(sino: &Sinogram, keep_every: Option<usize>, dose: Option<&DoseSpec>) -> Result<Sinogram> {
    let mut out = match keep_every {
        Some(k) => subsample_views(sino, &ViewSelection::Every(k))?,
        None => sino.clone(),
    };
    if let Some(d) = dose {
        out = apply_low_dose(&out, d)?;
    }
    Ok(out)
}

pub fn filter_raw(sino: &Sinogram, filter: FilterKind) -> Result<Sinogram> {
    let spec = make_filter(filter, sino.n_bins(), sino.geometry().bin_width)?;
    filter_sinogram(sino, &spec)
}

/// Reconstructs a raw or already filtered sinogram with a named method.
/// Learned methods read their model from `checkpoint`.
pub fn reconstruct_method(
    sino: &Sinogram,
    grid: &GridSpec,
    method: Method,
    filter: FilterKind,
    checkpoint: Option<&Path>,
) -> Result<ImageGrid> {
    let backprojector: Box<dyn Backprojector> = match (method.kernel(), method.basis_family()) {
        (Some(kernel), _) => Box::new(KernelBackprojector(kernel)),
        (None, Some(family)) => {
            let path = checkpoint.ok_or_else(|| Error::invalid(format!("method {method} needs a checkpoint")))?;
            let model = io::read_checkpoint(path)?.state.model;
            if model.basis.family != family {
                return Err(Error::invalid(format!(
                    "{} holds a {} model, not {}",
                    path.display(),
                    model.basis.family,
                    method
                )));
            }
            if model.filter != filter {
                return Err(Error::invalid(format!(
                    "model was trained with the {} filter, not {}",
                    model.filter, filter
                )));
            }
            Box::new(model)
        }
        (None, None) => unreachable!("every method has a kernel or a basis"),
    };
    match sino.kind() {
        SinogramKind::Raw => reconstruct(sino, grid, filter, backprojector.as_ref()),
        SinogramKind::Filtered => backprojector.backproject(sino, grid),
    }
}

/// Outcome of re-deriving one file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyOutcome {
    Identical,
    /// Which of the two files differ.
    Differs { raw: bool, sidecar: bool },
    /// The file has no recipe to check against.
    NoRecipe,
}

pub fn verify_file(path: &Path) -> Result<VerifyOutcome> {
    let (_, recipe) = Artifact::read(path)?;
    if matches!(recipe, Recipe::External { .. }) {
        return Ok(VerifyOutcome::NoRecipe);
    }
    let (raw, sidecar) = recipe.realize()?.encode(&recipe);
    let raw_ok = std::fs::read(path).map_err(|e| Error::io(path, e))? == raw;
    let side_path = io::sidecar_path(path);
    let side_ok = std::fs::read(&side_path).map_err(|e| Error::io(&side_path, e))? == sidecar;
    Ok(if raw_ok && side_ok {
        VerifyOutcome::Identical
    } else {
        VerifyOutcome::Differs {
            raw: !raw_ok,
            sidecar: !side_ok,
        }
    })
}
