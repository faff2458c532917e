//! Directories of `(sinogram, reference)` pairs.
//!
//! Sample `id` is stored as `id_sino.f32` and `id_ref.f32`, each with its
//! JSON sidecar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cli::recipe::{Artifact, Projection, Recipe};
use crate::error::{Error, Result};
use crate::geometry::{Geometry, GridSpec};
use crate::learn::TrainingPair;
use crate::phantom::random_phantom;
use crate::projector::DoseSpec;

const SINO_SUFFIX: &str = "_sino.f32";
const REF_SUFFIX: &str = "_ref.f32";

/// Recipe for a synthetic set of random-ellipse phantoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub count: usize,
    /// Sample `i` uses phantom seed `first_seed + i`.
    pub first_seed: u64,
    pub ellipses: usize,
    pub grid: GridSpec,
    pub geometry: Geometry,
    #[serde(default)]
    pub keep_every: Option<usize>,
    #[serde(default)]
    pub dose: Option<DoseSpec>,
}

/// One sample with its recipes.
pub struct Sample {
    pub id: String,
    pub pair: TrainingPair,
    pub sino_recipe: Recipe,
    pub ref_recipe: Recipe,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("dataset needs at least one sample"));
        }
        self.grid.validate()?;
        self.geometry.validate()
    }

    /// Builds sample `i`. Noise seeds are offset by the sample index so that
    /// samples get independent noise.
    pub fn sample(&self, i: usize) -> Result<Sample> {
        let phantom = random_phantom(self.first_seed + i as u64, self.ellipses)?;
        let ref_recipe = Recipe::Phantom {
            phantom: phantom.clone(),
            grid: self.grid,
        };
        let mut sino_recipe = Recipe::Project {
            phantom,
            geometry: self.geometry.clone(),
            projection: Projection::Analytic,
        };
        if self.keep_every.is_some() || self.dose.is_some() {
            sino_recipe = Recipe::Degrade {
                input: Box::new(sino_recipe),
                keep_every: self.keep_every,
                dose: self.dose.map(|d| DoseSpec {
                    seed: d.seed.wrapping_add(i as u64),
                    ..d
                }),
            };
        }
        let (sinogram, _) = sino_recipe.realize()?.into_sinogram()?;
        let reference = ref_recipe.realize()?.into_image()?;
        Ok(Sample {
            id: format!("sample_{i:04}"),
            pair: TrainingPair { sinogram, reference },
            sino_recipe,
            ref_recipe,
        })
    }

    pub fn samples(&self) -> Result<Vec<Sample>> {
        self.validate()?;
        (0..self.count).map(|i| self.sample(i)).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<Sample>> {
        if !dir.is_dir() {
            return Err(Error::invalid(format!("{} is not a directory", dir.display())));
        }
        let samples = self.samples()?;
        for s in &samples {
            let (sino, dose) = (s.pair.sinogram.clone(), self.dose);
            Artifact::Sinogram { sino, dose }.write(&dir.join(format!("{}{SINO_SUFFIX}", s.id)), &s.sino_recipe)?;
            Artifact::Image(s.pair.reference.clone()).write(&dir.join(format!("{}{REF_SUFFIX}", s.id)), &s.ref_recipe)?;
        }
        Ok(samples)
    }
}

/// Sample ids found in `dir`, sorted.
pub fn sample_ids(dir: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let name = entry.map_err(|e| Error::io(dir, e))?.file_name();
        if let Some(id) = name.to_str().and_then(|n| n.strip_suffix(SINO_SUFFIX)) {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    if ids.is_empty() {
        return Err(Error::invalid(format!("no *{SINO_SUFFIX} files in {}", dir.display())));
    }
    Ok(ids)
}

pub fn sample_paths(dir: &Path, id: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{id}{SINO_SUFFIX}")), dir.join(format!("{id}{REF_SUFFIX}")))
}

/// Loads every pair in `dir`, sorted by id.
pub fn read_dataset(dir: &Path) -> Result<Vec<(String, TrainingPair)>> {
    sample_ids(dir)?
        .into_iter()
        .map(|id| {
            let (s, r) = sample_paths(dir, &id);
            let (sinogram, _) = Artifact::read(&s)?.0.into_sinogram()?;
            let reference = Artifact::read(&r)?.0.into_image()?;
            Ok((id, TrainingPair { sinogram, reference }))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn written_dataset_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            count: 3,
            first_seed: 10,
            ellipses: 4,
            grid: GridSpec::square(8, 0.25).unwrap(),
            geometry: Geometry::half_rotation(13, 0.25, 8).unwrap(),
            keep_every: Some(2),
            dose: Some(DoseSpec {
                incident_counts: 1e6,
                dose_fraction: 0.25,
                seed: 1,
            }),
        };
        let samples = spec.write(dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        for (s, (id, pair)) in samples.iter().zip(&back) {
            assert_eq!(&s.id, id);
            assert_eq!(&s.pair, pair);
            assert_eq!(pair.sinogram.n_views(), 4);
        }
        assert_ne!(back[0].1.sinogram, back[1].1.sinogram);
    }
}
