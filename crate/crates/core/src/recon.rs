//! View-by-view backprojection, classical FBP and the learnable-interpolation
//! forward model.
//!
//! Every backprojector consumes a *filtered* sinogram, so the choice of
//! filter stays independent of the choice of interpolant. Accumulation order
//! is fixed: views ascending, pixels row-major.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CoordinateTable, DetectorHit, Geometry, GridSpec};
use crate::image::{ImageGrid, Sinogram, SinogramKind};
use crate::interp::{
    anchors, cubic_taps, kernel_interpolate, linear_taps, BasisFamily, BasisSet, CoeffTensor, KernelKind, LcrMode,
};
use crate::spectral::{filter_sinogram, make_filter, FilterKind};

/// Samples `view` at every hit with a fixed kernel; out-of-support pixels get 0.
pub fn backproject_view_hits(view: &[f64], hits: &[DetectorHit], kernel: KernelKind, out: &mut [f64]) {
    for (o, hit) in out.iter_mut().zip(hits) {
        *o = if hit.in_support {
            kernel_interpolate(kernel, view, hit.t).unwrap_or(0.0)
        } else {
            0.0
        };
    }
}

/// One backprojected slice `H[i, j] = interp(view, x_j cos + y_i sin)`.
pub fn backproject_view(
    view: &[f64],
    grid: &GridSpec,
    geometry: &Geometry,
    m: usize,
    kernel: KernelKind,
) -> Result<ImageGrid> {
    if view.len() != geometry.n_bins {
        return Err(Error::mismatch(format!(
            "view has {} samples, geometry {} bins",
            view.len(),
            geometry.n_bins
        )));
    }
    if m >= geometry.n_views {
        return Err(Error::invalid(format!("view {m} out of range")));
    }
    let hits = crate::geometry::coordinate_field(grid, geometry, m);
    let mut slice = ImageGrid::zeros(*grid);
    backproject_view_hits(view, &hits, kernel, slice.values_mut());
    Ok(slice)
}

/// Backprojected slices, one per view.
#[derive(Debug, Clone)]
pub struct ViewStack {
    slices: Vec<ImageGrid>,
}

impl ViewStack {
    pub fn new(slices: Vec<ImageGrid>) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::invalid("view stack must hold at least one slice"))?;
        for s in &slices[1..] {
            first.same_shape(s)?;
        }
        Ok(ViewStack { slices })
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn slices(&self) -> &[ImageGrid] {
        &self.slices
    }
}

/// `I = (angle_span / M) * sum_m H_m`, summed left to right.
pub fn sum_views(stack: &ViewStack, geometry: &Geometry) -> Result<ImageGrid> {
    if stack.len() != geometry.n_views {
        return Err(Error::mismatch(format!(
            "{} slices for {} views",
            stack.len(),
            geometry.n_views
        )));
    }
    let mut acc = ImageGrid::zeros(*stack.slices[0].grid());
    for slice in &stack.slices {
        for (a, v) in acc.values_mut().iter_mut().zip(slice.values()) {
            *a += v;
        }
    }
    let w = geometry.view_weight();
    acc.values_mut().iter_mut().for_each(|v| *v *= w);
    Ok(acc)
}

/// Unweighted backprojection `sum_m H_m` with a fixed kernel.
pub fn backproject(sino: &Sinogram, grid: &GridSpec, kernel: KernelKind) -> ImageGrid {
    let table = CoordinateTable::new(grid, sino.geometry());
    backproject_with(sino, &table, kernel)
}

pub(crate) fn backproject_with(sino: &Sinogram, table: &CoordinateTable, kernel: KernelKind) -> ImageGrid {
    let grid = *table.grid();
    let n_bins = sino.n_bins();
    let mut acc = ImageGrid::zeros(grid);
    let out = acc.values_mut();
    for m in 0..sino.n_views() {
        let view = sino.view(m);
        for (o, hit) in out.iter_mut().zip(table.view(m)) {
            match kernel {
                KernelKind::Linear => {
                    if let Some(taps) = linear_taps(hit.t, n_bins) {
                        *o += view[taps[0].0] * taps[0].1 + view[taps[1].0] * taps[1].1;
                    }
                }
                KernelKind::Cubic => {
                    if let Some(taps) = cubic_taps(hit.t, n_bins) {
                        *o += taps.iter().map(|&(i, w)| view[i] * w).sum::<f64>();
                    }
                }
                KernelKind::Nearest => {
                    if hit.in_support {
                        *o += view[hit.nearest];
                    }
                }
            }
        }
    }
    acc
}

/// Pluggable backprojection stage: filtered sinogram in, image out.
///
/// Implementations are linear in the sinogram for fixed parameters.
pub trait Backprojector {
    fn backproject(&self, filtered: &Sinogram, grid: &GridSpec) -> Result<ImageGrid>;

    fn label(&self) -> String;
}

/// Classical FBP backprojection with a fixed kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelBackprojector(pub KernelKind);

impl Backprojector for KernelBackprojector {
    fn backproject(&self, filtered: &Sinogram, grid: &GridSpec) -> Result<ImageGrid> {
        filtered.expect_kind(SinogramKind::Filtered)?;
        let mut img = backproject(filtered, grid, self.0);
        let w = filtered.geometry().view_weight();
        img.values_mut().iter_mut().for_each(|v| *v *= w);
        Ok(img)
    }

    fn label(&self) -> String {
        match self.0 {
            KernelKind::Nearest => "Ne FBP".into(),
            KernelKind::Linear => "Li FBP".into(),
            KernelKind::Cubic => "Cu FBP".into(),
        }
    }
}

/// Filter, backproject every view, sum.
pub fn fbp(sino: &Sinogram, grid: &GridSpec, filter: FilterKind, kernel: KernelKind) -> Result<ImageGrid> {
    reconstruct(sino, grid, filter, &KernelBackprojector(kernel))
}

/// Filter with `filter`, then hand the filtered sinogram to `backprojector`.
pub fn reconstruct(
    sino: &Sinogram,
    grid: &GridSpec,
    filter: FilterKind,
    backprojector: &dyn Backprojector,
) -> Result<ImageGrid> {
    let spec = make_filter(filter, sino.n_bins(), sino.geometry().bin_width)?;
    let filtered = filter_sinogram(sino, &spec)?;
    backprojector.backproject(&filtered, grid)
}

/// The linear map `z -> I` of the learnable-interpolation model on a fixed
/// grid and geometry, with its exact transpose.
///
/// `I[p] = (angle_span / M) * sum_m sum_cells w_cell * sum_c z[c, cell, m] * phi_c(u)`
#[derive(Debug, Clone)]
pub struct LcrOperator {
    table: CoordinateTable,
    geometry: Geometry,
    basis: BasisSet,
    mode: LcrMode,
}

impl LcrOperator {
    pub fn new(grid: &GridSpec, geometry: &Geometry, basis: BasisSet, mode: LcrMode) -> Self {
        LcrOperator {
            table: CoordinateTable::new(grid, geometry),
            geometry: geometry.clone(),
            basis,
            mode,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.table.grid()
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn mode(&self) -> LcrMode {
        self.mode
    }

    fn check(&self, z: &CoeffTensor) -> Result<()> {
        z.check_geometry(&self.geometry)?;
        if z.basis() != &self.basis {
            return Err(Error::mismatch(format!(
                "coefficients use {:?}, operator uses {:?}",
                z.basis(),
                self.basis
            )));
        }
        Ok(())
    }

    pub fn forward(&self, z: &CoeffTensor) -> Result<ImageGrid> {
        self.check(z)?;
        let n_bins = self.geometry.n_bins;
        let c_count = self.basis.len();
        let mut img = ImageGrid::zeros(*self.grid());
        let out = img.values_mut();
        let mut phi = vec![0.0; c_count];
        for m in 0..self.geometry.n_views {
            let zv = z.view(m);
            for (o, hit) in out.iter_mut().zip(self.table.view(m)) {
                let Some(anchors) = anchors(hit, n_bins, self.mode) else {
                    continue;
                };
                for (cell, u, w) in anchors.iter() {
                    let v = match self.basis.family {
                        BasisFamily::Linear => {
                            let [(lo, wl), (hi, wh)] = self.basis.linear_active(u);
                            zv[lo * n_bins + cell] * wl + zv[hi * n_bins + cell] * wh
                        }
                        BasisFamily::Fourier => {
                            self.basis.eval_all(u, &mut phi);
                            (0..c_count).map(|c| zv[c * n_bins + cell] * phi[c]).sum()
                        }
                    };
                    *o += w * v;
                }
            }
        }
        let scale = self.geometry.view_weight();
        out.iter_mut().for_each(|v| *v *= scale);
        Ok(img)
    }

    /// Transpose of [`forward`](Self::forward): image-space gradient to coefficient gradient.
    pub fn backward(&self, grad_image: &ImageGrid) -> Result<CoeffTensor> {
        if grad_image.grid().height != self.grid().height || grad_image.grid().width != self.grid().width {
            return Err(Error::mismatch("gradient image does not match operator grid"));
        }
        let n_bins = self.geometry.n_bins;
        let c_count = self.basis.len();
        let scale = self.geometry.view_weight();
        let mut dz = CoeffTensor::zeros(self.basis, n_bins, self.geometry.n_views);
        let mut phi = vec![0.0; c_count];
        for m in 0..self.geometry.n_views {
            let dzv = dz.view_mut(m);
            for (&g, hit) in grad_image.values().iter().zip(self.table.view(m)) {
                if g == 0.0 {
                    continue;
                }
                let Some(anchors) = anchors(hit, n_bins, self.mode) else {
                    continue;
                };
                for (cell, u, w) in anchors.iter() {
                    let gw = scale * g * w;
                    match self.basis.family {
                        BasisFamily::Linear => {
                            let [(lo, wl), (hi, wh)] = self.basis.linear_active(u);
                            dzv[lo * n_bins + cell] += gw * wl;
                            dzv[hi * n_bins + cell] += gw * wh;
                        }
                        BasisFamily::Fourier => {
                            self.basis.eval_all(u, &mut phi);
                            for c in 0..c_count {
                                dzv[c * n_bins + cell] += gw * phi[c];
                            }
                        }
                    }
                }
            }
        }
        Ok(dz)
    }
}

/// Learnable-interpolation reconstruction from given coefficients.
pub fn linfbp_forward(
    filtered: &Sinogram,
    z: &CoeffTensor,
    grid: &GridSpec,
    mode: LcrMode,
) -> Result<ImageGrid> {
    filtered.expect_kind(SinogramKind::Filtered)?;
    LcrOperator::new(grid, filtered.geometry(), *z.basis(), mode).forward(z)
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, &yr) in self.data.chunks_exact(self.cols).zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yr;
            }
        }
        out
    }
}

/// Largest matrix (in entries) [`build_backprojection_matrix`] will build.
pub const MAX_MATRIX_ENTRIES: usize = 10_000_000;

/// Explicit `(h*w) x (N*M)` matrix of the unweighted linear-interpolation
/// backprojection. Column `m * N + n` is the backprojection of a unit
/// impulse at bin `n` of view `m`, matching the sinogram storage order.
///
/// Built column by column through [`backproject_view`], independently of the
/// tap-level code path used by [`backproject`].
pub fn build_backprojection_matrix(grid: &GridSpec, geometry: &Geometry) -> Result<DenseMatrix> {
    let rows = grid.len();
    let cols = geometry.n_bins * geometry.n_views;
    if rows.saturating_mul(cols) > MAX_MATRIX_ENTRIES {
        return Err(Error::invalid(format!(
            "{rows}x{cols} matrix exceeds {MAX_MATRIX_ENTRIES} entries"
        )));
    }
    let mut data = vec![0.0; rows * cols];
    let mut impulse = vec![0.0; geometry.n_bins];
    for m in 0..geometry.n_views {
        for n in 0..geometry.n_bins {
            impulse[n] = 1.0;
            let slice = backproject_view(&impulse, grid, geometry, m, KernelKind::Linear)?;
            impulse[n] = 0.0;
            let col = m * geometry.n_bins + n;
            for (r, &v) in slice.values().iter().enumerate() {
                data[r * cols + col] = v;
            }
        }
    }
    Ok(DenseMatrix { rows, cols, data })
}

/// Reconstruction methods exposed by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NeFbp,
    LiFbp,
    CuFbp,
    FLinfbp,
    LLinfbp,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::NeFbp, Method::LiFbp, Method::CuFbp, Method::FLinfbp, Method::LLinfbp];

    pub fn kernel(&self) -> Option<KernelKind> {
        match self {
            Method::NeFbp => Some(KernelKind::Nearest),
            Method::LiFbp => Some(KernelKind::Linear),
            Method::CuFbp => Some(KernelKind::Cubic),
            _ => None,
        }
    }

    pub fn basis_family(&self) -> Option<BasisFamily> {
        match self {
            Method::FLinfbp => Some(BasisFamily::Fourier),
            Method::LLinfbp => Some(BasisFamily::Linear),
            _ => None,
        }
    }

    pub fn is_learned(&self) -> bool {
        self.basis_family().is_some()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::NeFbp => "ne_fbp",
            Method::LiFbp => "li_fbp",
            Method::CuFbp => "cu_fbp",
            Method::FLinfbp => "f_linfbp",
            Method::LLinfbp => "l_linfbp",
        }
    }

    /// Display label, e.g. `Li FBP-R` or `L-LInFBP`.
    pub fn label(&self, filter: FilterKind) -> String {
        match self {
            Method::NeFbp => format!("Ne FBP-{}", filter.suffix()),
            Method::LiFbp => format!("Li FBP-{}", filter.suffix()),
            Method::CuFbp => format!("Cu FBP-{}", filter.suffix()),
            Method::FLinfbp => "F-LInFBP".into(),
            Method::LLinfbp => "L-LInFBP".into(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`")))
    }
}
