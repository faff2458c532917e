//! Owned image and sinogram buffers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Geometry, GridSpec};

/// A 2-D attenuation image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn zeros(grid: GridSpec) -> Self {
        ImageGrid {
            values: vec![0.0; grid.len()],
            grid,
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::mismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.height,
                grid.width
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("image contains non-finite values".into()));
        }
        Ok(ImageGrid { grid, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.grid.width + col]
    }

    pub fn same_shape(&self, other: &ImageGrid) -> Result<()> {
        if self.grid.height != other.grid.height || self.grid.width != other.grid.width {
            return Err(Error::mismatch(format!(
                "image {}x{} vs {}x{}",
                self.grid.height, self.grid.width, other.grid.height, other.grid.width
            )));
        }
        Ok(())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SinogramKind {
    Raw,
    Filtered,
}

/// Detector-by-view samples. Storage is view-contiguous: sample `(n, m)`
/// lives at index `m * n_bins + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    geometry: Geometry,
    kind: SinogramKind,
    samples: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(geometry: Geometry, kind: SinogramKind) -> Self {
        Sinogram {
            samples: vec![0.0; geometry.n_bins * geometry.n_views],
            geometry,
            kind,
        }
    }

    pub fn from_samples(geometry: Geometry, kind: SinogramKind, samples: Vec<f64>) -> Result<Self> {
        let expect = geometry.n_bins * geometry.n_views;
        if samples.len() != expect {
            return Err(Error::mismatch(format!(
                "{} samples for {} bins x {} views",
                samples.len(),
                geometry.n_bins,
                geometry.n_views
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("sinogram contains non-finite samples".into()));
        }
        Ok(Sinogram {
            geometry,
            kind,
            samples,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn kind(&self) -> SinogramKind {
        self.kind
    }

    pub fn n_bins(&self) -> usize {
        self.geometry.n_bins
    }

    pub fn n_views(&self) -> usize {
        self.geometry.n_views
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn view(&self, m: usize) -> &[f64] {
        let n = self.geometry.n_bins;
        &self.samples[m * n..(m + 1) * n]
    }

    pub fn view_mut(&mut self, m: usize) -> &mut [f64] {
        let n = self.geometry.n_bins;
        &mut self.samples[m * n..(m + 1) * n]
    }

    pub fn views(&self) -> std::slice::ChunksExact<'_, f64> {
        self.samples.chunks_exact(self.geometry.n_bins)
    }

    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.samples[m * self.geometry.n_bins + n]
    }

    pub(crate) fn with_kind(mut self, kind: SinogramKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn expect_kind(&self, kind: SinogramKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::invalid(format!(
                "expected a {kind:?} sinogram, got {:?}",
                self.kind
            )));
        }
        Ok(())
    }
}

/// Euclidean inner product of two equally sized slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
