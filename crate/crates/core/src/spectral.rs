//! Frequency-domain sinogram filtering on top of an iterative radix-2 FFT.
//!
//! Conventions: the forward transform is unnormalized,
//! `X[k] = sum_n x[n] exp(-2 pi i k n / L)`, and the inverse carries `1/L`.
//! A real signal of length `L` is represented by its `L/2 + 1` non-negative
//! frequency bins.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Sinogram, SinogramKind};

fn check_pow2(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::invalid(format!("FFT length {n} is not a power of two")));
    }
    Ok(())
}

/// In-place complex FFT. `inverse` flips the twiddle sign; no scaling is applied.
pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) -> Result<()> {
    let n = buf.len();
    check_pow2(n)?;
    if n == 1 {
        return Ok(());
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                // direct twiddles; a running product drifts by ~1e-15 per step
                let w = Complex64::from_polar(1.0, step * k as f64);
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
    Ok(())
}

/// Forward FFT of a real signal zero-padded to `n`; returns bins `0..=n/2`.
pub fn rfft(signal: &[f64], n: usize) -> Result<Vec<Complex64>> {
    check_pow2(n)?;
    if signal.len() > n {
        return Err(Error::invalid(format!(
            "signal of length {} does not fit FFT length {n}",
            signal.len()
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (b, &s) in buf.iter_mut().zip(signal) {
        b.re = s;
    }
    fft_in_place(&mut buf, false)?;
    buf.truncate(n / 2 + 1);
    Ok(buf)
}

/// Inverse of [`rfft`]: rebuilds the Hermitian spectrum and returns `n` real samples.
pub fn irfft(half: &[Complex64], n: usize) -> Result<Vec<f64>> {
    check_pow2(n)?;
    if half.len() != n / 2 + 1 {
        return Err(Error::mismatch(format!(
            "{} spectrum bins for FFT length {n}",
            half.len()
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..half.len()].copy_from_slice(half);
    for k in 1..n.div_ceil(2) {
        buf[n - k] = half[k].conj();
    }
    fft_in_place(&mut buf, true)?;
    let scale = 1.0 / n as f64;
    Ok(buf.iter().map(|c| c.re * scale).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Ramp,
    Cosine,
    Hann,
}

impl FilterKind {
    /// Label suffix used in method names, e.g. `FBP-R`.
    pub fn suffix(&self) -> &'static str {
        match self {
            FilterKind::Ramp => "R",
            FilterKind::Cosine => "C",
            FilterKind::Hann => "H",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Ramp => "ramp",
            FilterKind::Cosine => "cosine",
            FilterKind::Hann => "hann",
        })
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ramp" => Ok(FilterKind::Ramp),
            "cosine" => Ok(FilterKind::Cosine),
            "hann" => Ok(FilterKind::Hann),
            other => Err(Error::invalid(format!("unknown filter `{other}`"))),
        }
    }
}

/// A precomputed real frequency response for views of `n_bins` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub n_bins: usize,
    pub padded_length: usize,
    pub response: Vec<f64>,
}

/// Builds the `|omega|` filter (optionally windowed), sampled at
/// `omega_f = f / (L * bin_width)` for `f = 0..=L/2`, with `L` the next power
/// of two `>= 2 * n_bins`. The ramp peaks at `1 / (2 * bin_width)` at Nyquist.
pub fn make_filter(kind: FilterKind, n_bins: usize, bin_width: f64) -> Result<FilterSpec> {
    if n_bins < 2 {
        return Err(Error::invalid("filter needs at least 2 detector bins"));
    }
    if !(bin_width > 0.0) {
        return Err(Error::invalid("bin width must be positive"));
    }
    let padded_length = (2 * n_bins).next_power_of_two();
    let len = padded_length as f64;
    let response = (0..=padded_length / 2)
        .map(|f| {
            let ramp = f as f64 / (len * bin_width);
            let window = match kind {
                FilterKind::Ramp => 1.0,
                FilterKind::Cosine => (PI * f as f64 / len).cos(),
                FilterKind::Hann => 0.5 * (1.0 + (2.0 * PI * f as f64 / len).cos()),
            };
            // the windows reach exactly zero at Nyquist; keep the tiny cos residue out
            (ramp * window).max(0.0)
        })
        .collect();
    Ok(FilterSpec {
        kind,
        n_bins,
        padded_length,
        response,
    })
}

impl FilterSpec {
    /// Filters one view: zero-pad, transform, weight, invert, truncate.
    pub fn apply_view(&self, view: &[f64], out: &mut [f64]) -> Result<()> {
        if view.len() != self.n_bins || out.len() != self.n_bins {
            return Err(Error::mismatch(format!(
                "view of {} bins for a filter built for {}",
                view.len(),
                self.n_bins
            )));
        }
        let mut spectrum = rfft(view, self.padded_length)?;
        for (s, &r) in spectrum.iter_mut().zip(&self.response) {
            *s *= r;
        }
        let full = irfft(&spectrum, self.padded_length)?;
        out.copy_from_slice(&full[..self.n_bins]);
        Ok(())
    }
}

/// Filters every view of a raw sinogram independently.
pub fn filter_sinogram(sino: &Sinogram, filter: &FilterSpec) -> Result<Sinogram> {
    sino.expect_kind(SinogramKind::Raw)?;
    if sino.n_bins() != filter.n_bins {
        return Err(Error::mismatch(format!(
            "sinogram has {} bins, filter was built for {}",
            sino.n_bins(),
            filter.n_bins
        )));
    }
    let mut out = Sinogram::zeros(sino.geometry().clone(), SinogramKind::Raw);
    for m in 0..sino.n_views() {
        filter.apply_view(sino.view(m), out.view_mut(m))?;
    }
    Ok(out.with_kind(SinogramKind::Filtered))
}
