//! Interpolation of a filtered view at fractional detector positions.
//!
//! Two families live here: the fixed kernels (nearest, linear, cubic) used
//! by classical FBP, and the learnable local continuous representation, in
//! which the value near bin `n` is `sum_c z[c, n] * phi_c(t - n)` for a fixed
//! basis `phi_0..phi_{C-1}` and per-cell coefficients `z`.
//!
//! All positions are fractional bin indices. Positions more than half a bin
//! outside `[0, N-1]` are out of support and evaluate to `None`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{round_half_away, DetectorHit, Geometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Nearest,
    Linear,
    Cubic,
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(KernelKind::Nearest),
            "linear" => Ok(KernelKind::Linear),
            "cubic" => Ok(KernelKind::Cubic),
            other => Err(Error::invalid(format!("unknown interpolation kernel `{other}`"))),
        }
    }
}

fn in_support(t: f64, n: usize) -> bool {
    t >= -0.5 && t <= n as f64 - 0.5
}

fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// The two taps of linear interpolation at `t`, with edge clamping.
pub fn linear_taps(t: f64, n: usize) -> Option<[(usize, f64); 2]> {
    if !in_support(t, n) {
        return None;
    }
    let floor = t.floor();
    let frac = t - floor;
    let i = floor as i64;
    Some([(clamp_index(i, n), 1.0 - frac), (clamp_index(i + 1, n), frac)])
}

/// Keys cubic convolution weight with `a = -0.5`.
fn keys_weight(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// The four taps of Keys cubic interpolation at `t`, with edge clamping.
pub fn cubic_taps(t: f64, n: usize) -> Option<[(usize, f64); 4]> {
    if !in_support(t, n) {
        return None;
    }
    let floor = t.floor();
    let frac = t - floor;
    let i = floor as i64;
    Some([
        (clamp_index(i - 1, n), keys_weight(frac + 1.0)),
        (clamp_index(i, n), keys_weight(frac)),
        (clamp_index(i + 1, n), keys_weight(1.0 - frac)),
        (clamp_index(i + 2, n), keys_weight(2.0 - frac)),
    ])
}

/// Fixed-kernel interpolation of `samples` at fractional index `t`.
pub fn kernel_interpolate(kind: KernelKind, samples: &[f64], t: f64) -> Option<f64> {
    let n = samples.len();
    match kind {
        KernelKind::Nearest => {
            if !in_support(t, n) {
                return None;
            }
            Some(samples[round_half_away(t).clamp(0.0, n as f64 - 1.0) as usize])
        }
        KernelKind::Linear => {
            linear_taps(t, n).map(|taps| taps.iter().map(|&(i, w)| samples[i] * w).sum())
        }
        KernelKind::Cubic => {
            cubic_taps(t, n).map(|taps| taps.iter().map(|&(i, w)| samples[i] * w).sum())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisFamily {
    Fourier,
    Linear,
}

impl fmt::Display for BasisFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisFamily::Fourier => "fourier",
            BasisFamily::Linear => "linear",
        })
    }
}

impl FromStr for BasisFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fourier" => Ok(BasisFamily::Fourier),
            "linear" => Ok(BasisFamily::Linear),
            other => Err(Error::invalid(format!("unknown basis family `{other}`"))),
        }
    }
}

/// A fixed family of `C = 2k + 1` basis functions on `[-1, 1]`.
///
/// Fourier (0-based index): `phi_0 = 1`, `phi_{2j-1} = sin(2j u)`,
/// `phi_{2j} = cos(2j u)` for `j = 1..=k`. The identically-zero `sin(0 u)`
/// is dropped.
///
/// Linear: `phi_i(u) = max(1 - |k u - (i - k)|, 0)`, hats anchored at
/// `u = (i - k) / k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSet {
    pub family: BasisFamily,
    pub k: usize,
}

impl BasisSet {
    pub fn new(family: BasisFamily, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("basis parameter k must be >= 1"));
        }
        Ok(BasisSet { family, k })
    }

    pub fn fourier(k: usize) -> Result<Self> {
        Self::new(BasisFamily::Fourier, k)
    }

    pub fn linear(k: usize) -> Result<Self> {
        Self::new(BasisFamily::Linear, k)
    }

    /// Default Fourier set: `k = 1`, three functions.
    pub fn default_fourier() -> Self {
        BasisSet {
            family: BasisFamily::Fourier,
            k: 1,
        }
    }

    /// Default linear set: `k = 2`, five functions.
    pub fn default_linear() -> Self {
        BasisSet {
            family: BasisFamily::Linear,
            k: 2,
        }
    }

    pub fn len(&self) -> usize {
        2 * self.k + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Evaluates `phi_c(u)` for 0-based `c`.
    pub fn eval(&self, c: usize, u: f64) -> f64 {
        assert!(c < self.len(), "basis index {c} out of range");
        match self.family {
            BasisFamily::Fourier => {
                if c == 0 {
                    1.0
                } else {
                    let freq = (2 * c.div_ceil(2)) as f64;
                    if c % 2 == 1 {
                        (freq * u).sin()
                    } else {
                        (freq * u).cos()
                    }
                }
            }
            BasisFamily::Linear => {
                let k = self.k as f64;
                (1.0 - (k * u - (c as f64 - k)).abs()).max(0.0)
            }
        }
    }

    /// Writes all `C` basis values at `u` into `out`.
    pub fn eval_all(&self, u: f64, out: &mut [f64]) {
        match self.family {
            BasisFamily::Fourier => {
                out[0] = 1.0;
                for j in 1..=self.k {
                    let (s, c) = (2.0 * j as f64 * u).sin_cos();
                    out[2 * j - 1] = s;
                    out[2 * j] = c;
                }
            }
            BasisFamily::Linear => {
                for (c, o) in out.iter_mut().enumerate().take(self.len()) {
                    *o = self.eval(c, u);
                }
            }
        }
    }

    /// Active hats at `u` for the linear family: `(index, weight)` pairs
    /// whose weights sum to one.
    pub fn linear_active(&self, u: f64) -> [(usize, f64); 2] {
        debug_assert_eq!(self.family, BasisFamily::Linear);
        let ku = self.k as f64 * u;
        let floor = ku.floor();
        let frac = ku - floor;
        let lo = (floor as i64 + self.k as i64).clamp(0, 2 * self.k as i64) as usize;
        let hi = (lo + 1).min(2 * self.k);
        [(lo, 1.0 - frac), (hi, frac)]
    }
}

/// How a position selects coefficient cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LcrMode {
    /// Only the nearest cell `[t]`, offset in `[-0.5, 0.5]`.
    #[default]
    Nearest,
    /// Blend of the cells at `floor(t)` and `ceil(t)` with weights
    /// `(1 - frac, frac)`; offsets then span `(-1, 1)`.
    LocalEnsemble,
}

/// The cells a position reads from: `(bin, offset, blend weight)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchors {
    pub cells: [(usize, f64, f64); 2],
    pub count: usize,
}

impl Anchors {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.cells[..self.count].iter().copied()
    }
}

/// Anchor cells for an in-support detector hit, `None` otherwise.
pub fn anchors(hit: &DetectorHit, n_bins: usize, mode: LcrMode) -> Option<Anchors> {
    if !hit.in_support {
        return None;
    }
    match mode {
        LcrMode::Nearest => Some(Anchors {
            cells: [(hit.nearest, hit.offset(), 1.0), (0, 0.0, 0.0)],
            count: 1,
        }),
        LcrMode::LocalEnsemble => {
            let floor = hit.t.floor();
            let frac = hit.t - floor;
            let lo = clamp_index(floor as i64, n_bins);
            let hi = clamp_index(floor as i64 + 1, n_bins);
            Some(Anchors {
                cells: [
                    (lo, hit.t - lo as f64, 1.0 - frac),
                    (hi, hit.t - hi as f64, frac),
                ],
                count: 2,
            })
        }
    }
}

/// Per-cell coefficients `z[c, n, m]`, stored view-major: the `C x N` block of
/// view `m` is contiguous with bins contiguous inside each basis row.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTensor {
    basis: BasisSet,
    n_bins: usize,
    n_views: usize,
    values: Vec<f64>,
}

impl CoeffTensor {
    pub fn zeros(basis: BasisSet, n_bins: usize, n_views: usize) -> Self {
        CoeffTensor {
            basis,
            n_bins,
            n_views,
            values: vec![0.0; basis.len() * n_bins * n_views],
        }
    }

    pub fn from_values(basis: BasisSet, n_bins: usize, n_views: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != basis.len() * n_bins * n_views {
            return Err(Error::mismatch(format!(
                "{} coefficients for C={} N={} M={}",
                values.len(),
                basis.len(),
                n_bins,
                n_views
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("coefficients contain non-finite values".into()));
        }
        Ok(CoeffTensor {
            basis,
            n_bins,
            n_views,
            values,
        })
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_views(&self) -> usize {
        self.n_views
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn view(&self, m: usize) -> &[f64] {
        let block = self.basis.len() * self.n_bins;
        &self.values[m * block..(m + 1) * block]
    }

    pub fn view_mut(&mut self, m: usize) -> &mut [f64] {
        let block = self.basis.len() * self.n_bins;
        &mut self.values[m * block..(m + 1) * block]
    }

    pub fn get(&self, c: usize, n: usize, m: usize) -> f64 {
        self.view(m)[c * self.n_bins + n]
    }

    pub fn check_geometry(&self, geometry: &Geometry) -> Result<()> {
        if self.n_bins != geometry.n_bins || self.n_views != geometry.n_views {
            return Err(Error::mismatch(format!(
                "coefficients for N={} M={}, geometry has N={} M={}",
                self.n_bins, self.n_views, geometry.n_bins, geometry.n_views
            )));
        }
        Ok(())
    }
}

fn lcr_cell(z_view: &[f64], n_bins: usize, basis: &BasisSet, cell: usize, u: f64) -> f64 {
    let mut acc = 0.0;
    for c in 0..basis.len() {
        acc += z_view[c * n_bins + cell] * basis.eval(c, u);
    }
    acc
}

/// Evaluates the local continuous representation of one view at `t`.
/// `z_view` is a `C x N` block.
pub fn lcr_eval(z_view: &[f64], basis: &BasisSet, t: f64, mode: LcrMode) -> Option<f64> {
    let n_bins = z_view.len() / basis.len();
    let hit = DetectorHit::new(t, n_bins);
    let anchors = anchors(&hit, n_bins, mode)?;
    Some(
        anchors
            .iter()
            .map(|(cell, u, w)| w * lcr_cell(z_view, n_bins, basis, cell, u))
            .sum(),
    )
}

/// Two-term evaluation of the linear-basis representation: only the hats
/// either side of `k u` are non-zero.
pub fn lcr_eval_linear_fast(z_view: &[f64], k: usize, t: f64, mode: LcrMode) -> Option<f64> {
    let basis = BasisSet {
        family: BasisFamily::Linear,
        k,
    };
    let n_bins = z_view.len() / basis.len();
    let hit = DetectorHit::new(t, n_bins);
    let anchors = anchors(&hit, n_bins, mode)?;
    Some(
        anchors
            .iter()
            .map(|(cell, u, w)| {
                let [(lo, wl), (hi, wh)] = basis.linear_active(u);
                w * (z_view[lo * n_bins + cell] * wl + z_view[hi * n_bins + cell] * wh)
            })
            .sum(),
    )
}

/// Coefficients under which the linear-basis representation reproduces
/// linear interpolation of `view` exactly: the hat anchored at offset
/// `(c - k) / k` takes the linearly interpolated value there (edges clamped).
pub fn linear_reduction_view(view: &[f64], k: usize) -> Vec<f64> {
    let n = view.len();
    let c_count = 2 * k + 1;
    let mut z = vec![0.0; c_count * n];
    for c in 0..c_count {
        for cell in 0..n {
            let pos = cell as f64 + (c as f64 - k as f64) / k as f64;
            let clamped = pos.clamp(0.0, n as f64 - 1.0);
            z[c * n + cell] = kernel_interpolate(KernelKind::Linear, view, clamped).unwrap_or(0.0);
        }
    }
    z
}

/// [`linear_reduction_view`] applied to every view of a filtered sinogram.
pub fn linear_reduction(views: &[f64], n_bins: usize, k: usize) -> Result<CoeffTensor> {
    let basis = BasisSet::linear(k)?;
    let n_views = views.len() / n_bins;
    let mut values = Vec::with_capacity(basis.len() * views.len());
    for view in views.chunks_exact(n_bins) {
        values.extend(linear_reduction_view(view, k));
    }
    CoeffTensor::from_values(basis, n_bins, n_views, values)
}
