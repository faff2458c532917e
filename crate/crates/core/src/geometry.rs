//! Parallel-beam acquisition geometry and the pixel-to-detector mapping.
//!
//! Detector bin `n` (0-based) has its center at `(n - (N-1)/2 - offset) * bin_width`
//! along the detector axis, so a physical detector coordinate `t` maps to the
//! fractional bin index `t / bin_width + (N-1)/2 + offset`.
//!
//! Image pixels are addressed `(row, col)` with the image center at the
//! physical origin: `x` grows with the column index and `y` grows upward,
//! i.e. shrinks with the row index.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parallel-beam acquisition description.
///
/// `angles` is kept explicitly so that view-subsampled sinograms carry the
/// angles they were actually measured at; `angle_span / n_views` is the
/// quadrature weight used when summing backprojected views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub n_bins: usize,
    #[serde(rename = "bin_width_mm")]
    pub bin_width: f64,
    pub n_views: usize,
    #[serde(rename = "angle_span_rad")]
    pub angle_span: f64,
    #[serde(default)]
    pub detector_center_offset: f64,
    #[serde(rename = "angles_rad", default, skip_serializing_if = "Option::is_none")]
    angles: Option<Vec<f64>>,
}

impl Geometry {
    /// Uniformly spaced views `theta_m = angle_span * m / n_views`, `m = 0..n_views`.
    pub fn new(n_bins: usize, bin_width: f64, n_views: usize, angle_span: f64) -> Result<Self> {
        let geometry = Geometry {
            n_bins,
            bin_width,
            n_views,
            angle_span,
            detector_center_offset: 0.0,
            angles: None,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    /// Half-rotation parallel-beam geometry (`angle_span = pi`).
    pub fn half_rotation(n_bins: usize, bin_width: f64, n_views: usize) -> Result<Self> {
        Self::new(n_bins, bin_width, n_views, PI)
    }

    pub fn with_center_offset(mut self, offset: f64) -> Result<Self> {
        self.detector_center_offset = offset;
        self.validate()?;
        Ok(self)
    }

    /// Geometry restricted to explicit view indices. The angular span is kept,
    /// so the summation weight becomes `angle_span / indices.len()`.
    pub fn select_views(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("view selection must keep at least one view"));
        }
        if let Some(&bad) = indices.iter().find(|&&m| m >= self.n_views) {
            return Err(Error::invalid(format!(
                "view index {bad} out of range for {} views",
                self.n_views
            )));
        }
        let angles: Vec<f64> = indices.iter().map(|&m| self.angle(m)).collect();
        let uniform = indices.len() == self.n_views && indices.iter().enumerate().all(|(i, &m)| i == m);
        let geometry = Geometry {
            n_bins: self.n_bins,
            bin_width: self.bin_width,
            n_views: indices.len(),
            angle_span: self.angle_span,
            detector_center_offset: self.detector_center_offset,
            angles: if uniform { self.angles.clone() } else { Some(angles) },
        };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return Err(Error::invalid(format!("n_bins must be >= 2, got {}", self.n_bins)));
        }
        if self.n_views < 1 {
            return Err(Error::invalid("n_views must be >= 1"));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(Error::invalid(format!("bin_width must be positive, got {}", self.bin_width)));
        }
        if !(self.angle_span > 0.0 && self.angle_span.is_finite()) {
            return Err(Error::invalid(format!(
                "angle_span must be positive, got {}",
                self.angle_span
            )));
        }
        if !self.detector_center_offset.is_finite() {
            return Err(Error::invalid("detector_center_offset must be finite"));
        }
        if let Some(angles) = &self.angles {
            if angles.len() != self.n_views {
                return Err(Error::invalid(format!(
                    "{} explicit angles for {} views",
                    angles.len(),
                    self.n_views
                )));
            }
            if angles.iter().any(|a| !(0.0..self.angle_span).contains(a)) {
                return Err(Error::invalid("view angles must lie in [0, angle_span)"));
            }
            if angles.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::invalid("view angles must be strictly increasing"));
            }
        }
        Ok(())
    }

    /// Angle of view `m` (0-based) in radians.
    pub fn angle(&self, m: usize) -> f64 {
        match &self.angles {
            Some(angles) => angles[m],
            None => self.angle_span * m as f64 / self.n_views as f64,
        }
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.n_views).map(|m| self.angle(m)).collect()
    }

    /// Quadrature weight applied to every backprojected view.
    pub fn view_weight(&self) -> f64 {
        self.angle_span / self.n_views as f64
    }

    /// Fractional bin index of detector coordinate `t`.
    pub fn bin_index(&self, t: f64) -> f64 {
        t / self.bin_width + (self.n_bins as f64 - 1.0) / 2.0 + self.detector_center_offset
    }

    /// Physical position of the center of bin `n`.
    pub fn bin_center(&self, n: usize) -> f64 {
        (n as f64 - (self.n_bins as f64 - 1.0) / 2.0 - self.detector_center_offset) * self.bin_width
    }

    /// Radius of the disk fully covered by the detector.
    pub fn covered_radius(&self) -> f64 {
        let half = (self.n_bins as f64 - 1.0) / 2.0;
        (half - self.detector_center_offset.abs() + 0.5) * self.bin_width
    }
}

/// Reconstruction grid centered on the physical origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub height: usize,
    pub width: usize,
    #[serde(rename = "pixel_size_mm")]
    pub pixel_size: f64,
}

impl GridSpec {
    pub fn new(height: usize, width: usize, pixel_size: f64) -> Result<Self> {
        let grid = GridSpec {
            height,
            width,
            pixel_size,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn square(size: usize, pixel_size: f64) -> Result<Self> {
        Self::new(size, size, pixel_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::invalid("grid dimensions must be positive"));
        }
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite()) {
            return Err(Error::invalid(format!(
                "pixel_size must be positive, got {}",
                self.pixel_size
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, col: usize) -> f64 {
        (col as f64 - (self.width as f64 - 1.0) / 2.0) * self.pixel_size
    }

    pub fn y(&self, row: usize) -> f64 {
        ((self.height as f64 - 1.0) / 2.0 - row as f64) * self.pixel_size
    }

    pub fn pixel_area(&self) -> f64 {
        self.pixel_size * self.pixel_size
    }

    /// Radius of the circle through the grid's outer corners.
    pub fn circumradius(&self) -> f64 {
        0.5 * self.pixel_size * ((self.height * self.height + self.width * self.width) as f64).sqrt()
    }
}

/// Detector coordinate of the point `(x, y)` for a view at angle `theta`.
#[inline]
pub fn project_coordinate(x: f64, y: f64, theta: f64) -> f64 {
    x * theta.cos() + y * theta.sin()
}

/// Rounds to the nearest integer, ties away from zero.
#[inline]
pub fn round_half_away(v: f64) -> f64 {
    v.round()
}

/// Where one pixel lands on the detector for a single view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorHit {
    /// Fractional bin index.
    pub t: f64,
    /// Nearest bin `[t]`, clamped into `0..N`.
    pub nearest: usize,
    /// False when `t` lies more than half a bin outside the detector.
    pub in_support: bool,
}

impl DetectorHit {
    pub fn new(t: f64, n_bins: usize) -> Self {
        let last = (n_bins - 1) as f64;
        let in_support = t >= -0.5 && t <= last + 0.5;
        let nearest = round_half_away(t).clamp(0.0, last) as usize;
        DetectorHit {
            t,
            nearest,
            in_support,
        }
    }

    /// Offset `t - [t]`, in `[-0.5, 0.5]` for in-support hits.
    pub fn offset(&self) -> f64 {
        self.t - self.nearest as f64
    }
}

/// Detector hits for every pixel of `grid` (row-major) at view `m`.
pub fn coordinate_field(grid: &GridSpec, geometry: &Geometry, m: usize) -> Vec<DetectorHit> {
    let theta = geometry.angle(m);
    let (sin, cos) = theta.sin_cos();
    let xs: Vec<f64> = (0..grid.width).map(|c| grid.x(c)).collect();
    let mut field = Vec::with_capacity(grid.len());
    for row in 0..grid.height {
        let y_term = grid.y(row) * sin;
        for &x in &xs {
            let t = geometry.bin_index(x * cos + y_term);
            field.push(DetectorHit::new(t, geometry.n_bins));
        }
    }
    field
}

/// Coordinate fields for all views, computed once and shared by the
/// backprojectors and the projector.
#[derive(Debug, Clone)]
pub struct CoordinateTable {
    grid: GridSpec,
    n_bins: usize,
    views: Vec<Vec<DetectorHit>>,
}

impl CoordinateTable {
    pub fn new(grid: &GridSpec, geometry: &Geometry) -> Self {
        let views = (0..geometry.n_views)
            .map(|m| coordinate_field(grid, geometry, m))
            .collect();
        CoordinateTable {
            grid: *grid,
            n_bins: geometry.n_bins,
            views,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn view(&self, m: usize) -> &[DetectorHit] {
        &self.views[m]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_angles() {
        let g = Geometry::half_rotation(4, 1.0, 2).unwrap();
        assert_eq!(g.angles(), vec![0.0, PI / 2.0]);
        let g = Geometry::half_rotation(2, 1.0, 1).unwrap();
        assert_eq!(g.angles(), vec![0.0]);
        let g = Geometry::half_rotation(736, 1.3696, 1152).unwrap();
        assert_eq!(g.n_views, 1152);
        assert!(g.angles().windows(2).all(|w| w[1] > w[0]));
        assert!(g.angle(1151) < PI);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(Geometry::half_rotation(1, 1.0, 4).is_err());
        assert!(Geometry::half_rotation(4, 0.0, 4).is_err());
        assert!(Geometry::half_rotation(4, -1.0, 4).is_err());
        assert!(Geometry::half_rotation(4, 1.0, 0).is_err());
        assert!(GridSpec::square(0, 1.0).is_err());
        assert!(GridSpec::square(4, 0.0).is_err());
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_coordinate(1.0, 0.0, 0.0), 1.0);
        assert!((project_coordinate(0.0, 1.0, PI / 2.0) - 1.0).abs() < 1e-15);
        assert!((project_coordinate(1.0, 1.0, PI / 4.0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn center_pixel_maps_to_center_bin() {
        let grid = GridSpec::square(1, 1.0).unwrap();
        for n_bins in [2, 5, 8] {
            let g = Geometry::half_rotation(n_bins, 0.7, 7).unwrap();
            for m in 0..7 {
                let field = coordinate_field(&grid, &g, m);
                assert_eq!(field[0].t, (n_bins as f64 - 1.0) / 2.0);
            }
        }
    }

    #[test]
    fn parallel_rays_at_zero_angle() {
        let grid = GridSpec::square(3, 1.0).unwrap();
        let g = Geometry::half_rotation(9, 1.0, 4).unwrap();
        let field = coordinate_field(&grid, &g, 0);
        for col in 0..3 {
            let t0 = field[col].t;
            for row in 1..3 {
                assert_eq!(field[row * 3 + col].t, t0);
            }
        }
    }

    #[test]
    fn field_matches_elementwise_projection() {
        let grid = GridSpec::square(8, 0.9).unwrap();
        let g = Geometry::half_rotation(13, 1.1, 12).unwrap();
        for m in 0..12 {
            let field = coordinate_field(&grid, &g, m);
            for row in 0..8 {
                for col in 0..8 {
                    let t = project_coordinate(grid.x(col), grid.y(row), g.angle(m));
                    let expect = t / 1.1 + 6.0;
                    assert!((field[row * 8 + col].t - expect).abs() < 1e-12);
                }
            }
        }
        assert_eq!(coordinate_field(&grid, &g, 5), coordinate_field(&grid, &g, 5));
    }

    #[test]
    fn out_of_detector_is_flagged_not_clamped() {
        let hit = DetectorHit::new(-0.7, 4);
        assert!(!hit.in_support);
        assert_eq!(hit.t, -0.7);
        let hit = DetectorHit::new(-0.5, 4);
        assert!(hit.in_support);
        assert_eq!(hit.nearest, 0);
        let hit = DetectorHit::new(3.5, 4);
        assert!(hit.in_support);
        assert_eq!(hit.nearest, 3);
        assert!(!DetectorHit::new(3.51, 4).in_support);
    }

    #[test]
    fn nearest_ties_round_away_from_zero() {
        assert_eq!(round_half_away(2.5), 3.0);
        assert_eq!(round_half_away(1.5), 2.0);
        assert_eq!(round_half_away(-0.5), -1.0);
    }

    #[test]
    fn select_views_keeps_angles() {
        let g = Geometry::half_rotation(4, 1.0, 8).unwrap();
        let sub = g.select_views(&[0, 4]).unwrap();
        assert_eq!(sub.angles(), vec![g.angle(0), g.angle(4)]);
        assert_eq!(sub.view_weight(), PI / 2.0);
        assert!(g.select_views(&[]).is_err());
        assert!(g.select_views(&[8]).is_err());
    }

    #[test]
    fn geometry_json_keys() {
        let g = Geometry::half_rotation(4, 1.5, 2).unwrap();
        let v = serde_json::to_value(&g).unwrap();
        for key in ["n_bins", "bin_width_mm", "n_views", "angle_span_rad", "detector_center_offset"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: Geometry = serde_json::from_value(v).unwrap();
        assert_eq!(back, g);
    }

    proptest! {
        #[test]
        fn rotation_by_pi_negates(x in -100.0..100.0f64, y in -100.0..100.0f64, th in 0.0..(2.0 * PI)) {
            let a = project_coordinate(x, y, th);
            let b = project_coordinate(-x, -y, th + PI);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + x.abs() + y.abs()));
        }

        #[test]
        fn projection_bounded_by_radius(size in 1usize..16, ps in 0.1..3.0f64, m in 0usize..9) {
            let grid = GridSpec::square(size, ps).unwrap();
            let g = Geometry::half_rotation(4 * size + 3, ps, 9).unwrap();
            let field = coordinate_field(&grid, &g, m);
            let center = (g.n_bins as f64 - 1.0) / 2.0;
            for row in 0..size {
                for col in 0..size {
                    let r = grid.x(col).hypot(grid.y(row));
                    let t = (field[row * size + col].t - center) * g.bin_width;
                    prop_assert!(t.abs() <= r + 1e-12);
                }
            }
        }
    }
}
