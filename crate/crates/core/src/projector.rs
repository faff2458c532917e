//! Discrete forward projection and acquisition degradations.

use rand::RngExt;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CoordinateTable, Geometry, GridSpec};
use crate::image::{ImageGrid, Sinogram, SinogramKind};
use crate::interp::linear_taps;
use crate::rng;

/// What to do when the detector does not cover the whole image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coverage {
    /// Reject the geometry.
    #[default]
    Strict,
    /// Accept it; pixels projecting outside the detector are dropped.
    Masked,
}

pub fn check_coverage(grid: &GridSpec, geometry: &Geometry) -> Result<()> {
    if geometry.covered_radius() + 1e-12 < grid.circumradius() {
        return Err(Error::invalid(format!(
            "detector covers radius {:.4} but the grid extends to {:.4}",
            geometry.covered_radius(),
            grid.circumradius()
        )));
    }
    Ok(())
}

/// Pixel-driven projection: every pixel's value, scaled by
/// `pixel_area / bin_width`, is split linearly between the two bins
/// bracketing its projected coordinate.
///
/// This is exactly `(pixel_area / bin_width) * B^T`, where `B` is the
/// (unweighted) linear-interpolation backprojection matrix.
pub fn forward_project(image: &ImageGrid, geometry: &Geometry, coverage: Coverage) -> Result<Sinogram> {
    if coverage == Coverage::Strict {
        check_coverage(image.grid(), geometry)?;
    }
    let table = CoordinateTable::new(image.grid(), geometry);
    Ok(forward_project_with(image, geometry, &table))
}

pub(crate) fn forward_project_with(image: &ImageGrid, geometry: &Geometry, table: &CoordinateTable) -> Sinogram {
    let scale = image.grid().pixel_area() / geometry.bin_width;
    let n_bins = geometry.n_bins;
    let mut sino = Sinogram::zeros(geometry.clone(), SinogramKind::Raw);
    for m in 0..geometry.n_views {
        let view = sino.view_mut(m);
        for (hit, &value) in table.view(m).iter().zip(image.values()) {
            if let Some(taps) = linear_taps(hit.t, n_bins) {
                let v = value * scale;
                for (n, w) in taps {
                    view[n] += v * w;
                }
            }
        }
    }
    sino
}

/// Exact adjoint of [`forward_project`]: `(pixel_area / bin_width) * B y`.
pub fn forward_adjoint(sino: &Sinogram, grid: &GridSpec) -> ImageGrid {
    let table = CoordinateTable::new(grid, sino.geometry());
    let scale = grid.pixel_area() / sino.geometry().bin_width;
    let mut img = crate::recon::backproject_with(sino, &table, crate::interp::KernelKind::Linear);
    for v in img.values_mut() {
        *v *= scale;
    }
    img
}

/// Photon-count noise parameters recorded alongside degraded sinograms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoseSpec {
    pub incident_counts: f64,
    pub dose_fraction: f64,
    pub seed: u64,
}

/// Full-dose incident photons per ray.
pub const FULL_DOSE_COUNTS: f64 = 1.0e6;

/// Pre-log Poisson noise: `counts ~ Poisson(I0 f exp(-p))`, then
/// `p' = -ln(max(counts, 1) / (I0 f))`.
pub fn apply_low_dose(sino: &Sinogram, dose: &DoseSpec) -> Result<Sinogram> {
    sino.expect_kind(SinogramKind::Raw)?;
    if !(dose.incident_counts > 0.0 && dose.incident_counts.is_finite()) {
        return Err(Error::invalid("incident counts must be positive"));
    }
    if !(dose.dose_fraction > 0.0 && dose.dose_fraction <= 1.0) {
        return Err(Error::invalid("dose fraction must lie in (0, 1]"));
    }
    let blank = dose.incident_counts * dose.dose_fraction;
    if blank < 1.0 {
        return Err(Error::invalid("incident counts times dose fraction must be >= 1"));
    }
    let mut rng = rng::seeded(dose.seed);
    let mut out = sino.clone();
    for p in out.samples_mut() {
        let mean = blank * (-*p).exp();
        let counts = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| Error::Numeric(format!("poisson mean {mean}: {e}")))?
                .sample(&mut rng)
        } else {
            0.0
        };
        *p = -(counts.max(1.0) / blank).ln();
    }
    Ok(out)
}

/// Which views to keep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewSelection {
    /// Views `0, k, 2k, ...`.
    Every(usize),
    /// Explicit 0-based indices, increasing.
    Indices(Vec<usize>),
}

impl ViewSelection {
    pub fn indices(&self, n_views: usize) -> Result<Vec<usize>> {
        match self {
            ViewSelection::Every(0) => Err(Error::invalid("keep_every must be >= 1")),
            ViewSelection::Every(k) => Ok((0..n_views).step_by(*k).collect()),
            ViewSelection::Indices(idx) => Ok(idx.clone()),
        }
    }
}

pub fn subsample_views(sino: &Sinogram, selection: &ViewSelection) -> Result<Sinogram> {
    let indices = selection.indices(sino.n_views())?;
    let geometry = sino.geometry().select_views(&indices)?;
    let mut samples = Vec::with_capacity(indices.len() * sino.n_bins());
    for &m in &indices {
        samples.extend_from_slice(sino.view(m));
    }
    Sinogram::from_samples(geometry, sino.kind(), samples)
}

/// Uniform white noise helper for metric sweeps and tests.
pub fn add_uniform_noise(image: &ImageGrid, amplitude: f64, seed: u64) -> ImageGrid {
    let mut rng = rng::seeded(seed);
    let mut out = image.clone();
    for v in out.values_mut() {
        *v += amplitude * rng.random_range(-1.0..1.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::dot;

    fn random_image(grid: GridSpec, seed: u64) -> ImageGrid {
        let mut rng = rng::seeded(seed);
        let v = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        ImageGrid::from_values(grid, v).unwrap()
    }

    fn random_sino(geometry: &Geometry, seed: u64) -> Sinogram {
        let mut rng = rng::seeded(seed);
        let v = (0..geometry.n_bins * geometry.n_views)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Sinogram::from_samples(geometry.clone(), SinogramKind::Raw, v).unwrap()
    }

    #[test]
    fn zero_image_projects_to_zero() {
        let grid = GridSpec::square(8, 1.0).unwrap();
        let g = Geometry::half_rotation(13, 1.0, 6).unwrap();
        let s = forward_project(&ImageGrid::zeros(grid), &g, Coverage::Strict).unwrap();
        assert!(s.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pixel_mass() {
        // odd grid so one pixel sits at the origin
        let grid = GridSpec::square(5, 0.8).unwrap();
        let g = Geometry::half_rotation(11, 0.9, 9).unwrap();
        let mut img = ImageGrid::zeros(grid);
        img.values_mut()[12] = 1.0;
        let s = forward_project(&img, &g, Coverage::Strict).unwrap();
        for m in 0..9 {
            let nonzero = s.view(m).iter().filter(|&&v| v != 0.0).count();
            assert!(nonzero <= 2);
            let mass: f64 = s.view(m).iter().sum();
            assert!((mass - 0.64 / 0.9).abs() < 1e-14);
        }
    }

    #[test]
    fn strict_coverage_rejects_small_detector() {
        let grid = GridSpec::square(8, 1.0).unwrap();
        let g = Geometry::half_rotation(9, 1.0, 4).unwrap();
        assert!(forward_project(&ImageGrid::zeros(grid), &g, Coverage::Strict).is_err());
        assert!(forward_project(&ImageGrid::zeros(grid), &g, Coverage::Masked).is_ok());
    }

    #[test]
    fn adjoint_identity() {
        let grid = GridSpec::square(8, 1.0).unwrap();
        let g = Geometry::half_rotation(11, 1.05, 12).unwrap();
        for seed in 0..20 {
            let x = random_image(grid, seed);
            let y = random_sino(&g, 1000 + seed);
            let ax = forward_project(&x, &g, Coverage::Strict).unwrap();
            let aty = forward_adjoint(&y, &grid);
            let lhs = dot(ax.samples(), y.samples());
            let rhs = dot(x.values(), aty.values());
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn homogeneous() {
        let grid = GridSpec::square(6, 1.0).unwrap();
        let g = Geometry::half_rotation(11, 1.0, 5).unwrap();
        let x = random_image(grid, 4);
        let mut x2 = x.clone();
        x2.values_mut().iter_mut().for_each(|v| *v *= 2.0);
        let a = forward_project(&x, &g, Coverage::Strict).unwrap();
        let b = forward_project(&x2, &g, Coverage::Strict).unwrap();
        for (p, q) in a.samples().iter().zip(b.samples()) {
            assert_eq!(2.0 * p, *q);
        }
    }

    #[test]
    fn low_dose_noiseless_limit_and_determinism() {
        let g = Geometry::half_rotation(16, 1.0, 4).unwrap();
        let mut s = random_sino(&g, 2);
        s.samples_mut().iter_mut().for_each(|v| *v = v.abs() * 3.0);
        let dose = DoseSpec { incident_counts: 1e12, dose_fraction: 1.0, seed: 1 };
        let noisy = apply_low_dose(&s, &dose).unwrap();
        for (a, b) in noisy.samples().iter().zip(s.samples()) {
            assert!((a - b).abs() < 1e-4);
        }
        let quarter = DoseSpec { incident_counts: FULL_DOSE_COUNTS, dose_fraction: 0.25, seed: 3 };
        assert_eq!(apply_low_dose(&s, &quarter).unwrap(), apply_low_dose(&s, &quarter).unwrap());
        assert_eq!(apply_low_dose(&s, &quarter).unwrap().geometry(), s.geometry());
    }

    #[test]
    fn low_dose_is_unbiased_on_blank_scan() {
        let g = Geometry::half_rotation(100, 1.0, 100).unwrap();
        let s = Sinogram::zeros(g, SinogramKind::Raw);
        let dose = DoseSpec { incident_counts: 1e6, dose_fraction: 1.0, seed: 17 };
        let noisy = apply_low_dose(&s, &dose).unwrap();
        let n = noisy.samples().len() as f64;
        let mean = noisy.samples().iter().sum::<f64>() / n;
        let sigma = 1.0 / 1e6f64.sqrt();
        assert!(mean.abs() < 3.0 * sigma / n.sqrt(), "mean {mean}");
    }

    #[test]
    fn low_dose_rejects_bad_parameters() {
        let g = Geometry::half_rotation(4, 1.0, 2).unwrap();
        let s = Sinogram::zeros(g, SinogramKind::Raw);
        for (i0, f) in [(0.0, 0.5), (-1.0, 0.5), (1e6, 0.0), (1e6, 1.5), (2.0, 0.25)] {
            let dose = DoseSpec { incident_counts: i0, dose_fraction: f, seed: 0 };
            assert!(apply_low_dose(&s, &dose).is_err());
        }
    }

    #[test]
    fn view_subsampling() {
        let g = Geometry::half_rotation(4, 1.0, 8).unwrap();
        let s = random_sino(&g, 1);
        assert_eq!(subsample_views(&s, &ViewSelection::Every(1)).unwrap(), s);
        let two = subsample_views(&s, &ViewSelection::Indices(vec![0, 4])).unwrap();
        assert_eq!(two.geometry().angles(), vec![g.angle(0), g.angle(4)]);
        assert_eq!(two.view(1), s.view(4));
        let g = Geometry::half_rotation(4, 1.0, 1152).unwrap();
        let s = Sinogram::zeros(g, SinogramKind::Raw);
        assert_eq!(subsample_views(&s, &ViewSelection::Every(4)).unwrap().n_views(), 288);
        assert!(subsample_views(&s, &ViewSelection::Every(0)).is_err());
    }
}
