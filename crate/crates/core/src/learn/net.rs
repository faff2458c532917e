//! Two-layer 1-D convolutional network mapping each filtered view to its
//! interpolation coefficients.

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Sinogram, SinogramKind};
use crate::interp::{BasisFamily, BasisSet, CoeffTensor};
use crate::rng;

/// Layer sizes. Both convolutions use odd kernels with "same" zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetShape {
    pub hidden: usize,
    pub kernel1: usize,
    pub kernel2: usize,
    /// Output channels, one per basis function.
    pub channels: usize,
}

impl NetShape {
    pub fn new(hidden: usize, kernel1: usize, kernel2: usize, channels: usize) -> Result<Self> {
        let shape = NetShape {
            hidden,
            kernel1,
            kernel2,
            channels,
        };
        shape.validate()?;
        Ok(shape)
    }

    /// Default layout: 8 hidden channels and kernel size 5 in both layers.
    pub fn for_basis(basis: &BasisSet) -> Self {
        NetShape {
            hidden: 8,
            kernel1: 5,
            kernel2: 5,
            channels: basis.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.channels == 0 {
            return Err(Error::invalid("hidden and output channel counts must be positive"));
        }
        if self.kernel1 % 2 == 0 || self.kernel2 % 2 == 0 {
            return Err(Error::invalid("kernel sizes must be odd"));
        }
        Ok(())
    }

    fn w1_len(&self) -> usize {
        self.hidden * self.kernel1
    }

    fn w2_len(&self) -> usize {
        self.channels * self.hidden * self.kernel2
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.w1_len() + self.hidden + self.w2_len() + self.channels
    }
}

/// How the weights are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum InitScheme {
    /// Uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    #[default]
    FanIn,
    /// Starts at (or next to) the coefficients that reproduce linear
    /// interpolation. Two hidden channels carry `relu(x)` and `relu(-x)`;
    /// the rest get fan-in weights whose outgoing connections are scaled
    /// by `jitter`.
    NearLinear { jitter: f64 },
}

/// Flat parameter vector laid out as `[w1 | b1 | w2 | b2]`, with `w1[o][k]`
/// and `w2[c][o][k]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    shape: NetShape,
    data: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(shape: NetShape) -> Result<Self> {
        shape.validate()?;
        Ok(ModelParams {
            shape,
            data: vec![0.0; shape.param_count()],
        })
    }

    pub fn from_flat(shape: NetShape, data: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.param_count() {
            return Err(Error::mismatch(format!(
                "network needs {} parameters, got {}",
                shape.param_count(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(ModelParams { shape, data })
    }

    pub fn init(shape: NetShape, basis: &BasisSet, scheme: InitScheme, seed: u64) -> Result<Self> {
        if basis.len() != shape.channels {
            return Err(Error::mismatch(format!(
                "basis has {} functions but the network outputs {} channels",
                basis.len(),
                shape.channels
            )));
        }
        let mut p = ModelParams::zeros(shape)?;
        let mut rng = rng::seeded(seed);
        let bound1 = 1.0 / (shape.kernel1 as f64).sqrt();
        let bound2 = 1.0 / ((shape.hidden * shape.kernel2) as f64).sqrt();
        let (w1, b1, w2, b2) = p.split_mut();
        for v in w1.iter_mut().chain(b1.iter_mut()) {
            *v = rng.random_range(-bound1..bound1);
        }
        for v in w2.iter_mut().chain(b2.iter_mut()) {
            *v = rng.random_range(-bound2..bound2);
        }
        if let InitScheme::NearLinear { jitter } = scheme {
            if shape.hidden < 2 {
                return Err(Error::invalid("near-linear initialization needs at least 2 hidden channels"));
            }
            let stencils = linear_stencils(basis, shape.kernel2)?;
            if shape.kernel1 == 0 {
                return Err(Error::invalid("empty kernel"));
            }
            let k1 = shape.kernel1;
            let centre1 = (k1 - 1) / 2;
            for o in 0..2 {
                w1[o * k1..(o + 1) * k1].fill(0.0);
                w1[o * k1 + centre1] = if o == 0 { 1.0 } else { -1.0 };
                b1[o] = 0.0;
            }
            b2.fill(0.0);
            let (h, k2) = (shape.hidden, shape.kernel2);
            for (c, stencil) in stencils.iter().enumerate() {
                for o in 0..h {
                    let row = &mut w2[(c * h + o) * k2..(c * h + o + 1) * k2];
                    match o {
                        0 => row.copy_from_slice(stencil),
                        1 => row.iter_mut().zip(stencil).for_each(|(w, s)| *w = -s),
                        _ => row.iter_mut().for_each(|w| *w *= jitter),
                    }
                }
            }
        }
        Ok(p)
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let s = &self.shape;
        let (w1, rest) = self.data.split_at(s.w1_len());
        let (b1, rest) = rest.split_at(s.hidden);
        let (w2, b2) = rest.split_at(s.w2_len());
        (w1, b1, w2, b2)
    }

    pub fn split_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64], &mut [f64]) {
        let s = self.shape;
        let (w1, rest) = self.data.split_at_mut(s.w1_len());
        let (b1, rest) = rest.split_at_mut(s.hidden);
        let (w2, b2) = rest.split_at_mut(s.w2_len());
        (w1, b1, w2, b2)
    }
}

/// Per-channel correlation taps that turn a filtered view into the
/// coefficients reproducing linear interpolation (or its Fourier
/// counterpart: value and centred slope).
fn linear_stencils(basis: &BasisSet, kernel: usize) -> Result<Vec<Vec<f64>>> {
    let half = (kernel as isize - 1) / 2;
    let mut out = vec![vec![0.0; kernel]; basis.len()];
    let mut put = |c: usize, offset: isize, w: f64| -> Result<()> {
        if offset.abs() > half {
            return Err(Error::invalid("second kernel too small for a linear start"));
        }
        out[c][(offset + half) as usize] += w;
        Ok(())
    };
    match basis.family {
        BasisFamily::Linear => {
            let k = basis.k as f64;
            for c in 0..basis.len() {
                let delta = (c as f64 - k) / k;
                let lo = delta.floor();
                let frac = delta - lo;
                put(c, lo as isize, 1.0 - frac)?;
                if frac > 0.0 {
                    put(c, lo as isize + 1, frac)?;
                }
            }
        }
        BasisFamily::Fourier => {
            // sin(2u) ~ 2u, so a centred slope s gives coefficient s / 2
            put(0, 0, 1.0)?;
            if basis.len() > 1 {
                put(1, 1, 0.25)?;
                put(1, -1, -0.25)?;
            }
        }
    }
    Ok(out)
}

/// Activations kept from the forward pass for back-propagation.
#[derive(Debug, Clone)]
pub struct NetCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    n_bins: usize,
    n_views: usize,
}

/// Zero-padded cross-correlation helper: `x[i + k - pad]` or 0.
#[inline]
fn tap(x: &[f64], i: usize, k: usize, pad: usize) -> f64 {
    let j = i + k;
    if j < pad || j - pad >= x.len() {
        0.0
    } else {
        x[j - pad]
    }
}

/// Runs the network on every view of a filtered sinogram.
pub fn net_forward(params: &ModelParams, filtered: &Sinogram, basis: &BasisSet) -> Result<(CoeffTensor, NetCache)> {
    filtered.expect_kind(SinogramKind::Filtered)?;
    let s = params.shape;
    if basis.len() != s.channels {
        return Err(Error::mismatch(format!(
            "basis has {} functions but the network outputs {} channels",
            basis.len(),
            s.channels
        )));
    }
    let (n, views) = (filtered.n_bins(), filtered.n_views());
    let (w1, b1, w2, b2) = params.split();
    let (p1, p2) = ((s.kernel1 - 1) / 2, (s.kernel2 - 1) / 2);
    let mut pre = vec![0.0; views * s.hidden * n];
    let mut z = CoeffTensor::zeros(*basis, n, views);
    let mut act = vec![0.0; s.hidden * n];
    for m in 0..views {
        let x = filtered.view(m);
        let pre_m = &mut pre[m * s.hidden * n..(m + 1) * s.hidden * n];
        for o in 0..s.hidden {
            let w = &w1[o * s.kernel1..(o + 1) * s.kernel1];
            for i in 0..n {
                let mut acc = b1[o];
                for (k, wk) in w.iter().enumerate() {
                    acc += wk * tap(x, i, k, p1);
                }
                pre_m[o * n + i] = acc;
                act[o * n + i] = acc.max(0.0);
            }
        }
        let out = z.view_mut(m);
        for c in 0..s.channels {
            for i in 0..n {
                let mut acc = b2[c];
                for o in 0..s.hidden {
                    let w = &w2[(c * s.hidden + o) * s.kernel2..(c * s.hidden + o + 1) * s.kernel2];
                    let a = &act[o * n..(o + 1) * n];
                    for (k, wk) in w.iter().enumerate() {
                        acc += wk * tap(a, i, k, p2);
                    }
                }
                out[c * n + i] = acc;
            }
        }
    }
    let cache = NetCache {
        input: filtered.samples().to_vec(),
        pre,
        n_bins: n,
        n_views: views,
    };
    Ok((z, cache))
}

/// Gradient of a scalar loss with respect to the parameters, given its
/// gradient with respect to the coefficients. ReLU's derivative at 0 is 0.
pub fn net_backward(params: &ModelParams, cache: &NetCache, grad_z: &CoeffTensor) -> Result<Vec<f64>> {
    let s = params.shape;
    let (n, views) = (cache.n_bins, cache.n_views);
    if grad_z.n_bins() != n || grad_z.n_views() != views || grad_z.basis().len() != s.channels {
        return Err(Error::mismatch("coefficient gradient does not match the cached forward pass"));
    }
    let (_, _, w2, _) = params.split();
    let mut grad = ModelParams::zeros(s)?;
    let (g1, gb1, g2, gb2) = grad.split_mut();
    let (p1, p2) = ((s.kernel1 - 1) / 2, (s.kernel2 - 1) / 2);
    let mut act = vec![0.0; s.hidden * n];
    let mut dpre = vec![0.0; s.hidden * n];
    for m in 0..views {
        let x = &cache.input[m * n..(m + 1) * n];
        let pre = &cache.pre[m * s.hidden * n..(m + 1) * s.hidden * n];
        for (a, p) in act.iter_mut().zip(pre) {
            *a = p.max(0.0);
        }
        let dz = grad_z.view(m);
        dpre.fill(0.0);
        for c in 0..s.channels {
            let dzc = &dz[c * n..(c + 1) * n];
            gb2[c] += dzc.iter().sum::<f64>();
            for o in 0..s.hidden {
                let base = (c * s.hidden + o) * s.kernel2;
                let a = &act[o * n..(o + 1) * n];
                let d = &mut dpre[o * n..(o + 1) * n];
                for k in 0..s.kernel2 {
                    let w = w2[base + k];
                    let mut acc = 0.0;
                    for i in 0..n {
                        let j = i + k;
                        if j < p2 || j - p2 >= n {
                            continue;
                        }
                        acc += dzc[i] * a[j - p2];
                        d[j - p2] += dzc[i] * w;
                    }
                    g2[base + k] += acc;
                }
            }
        }
        for (d, p) in dpre.iter_mut().zip(pre) {
            if *p <= 0.0 {
                *d = 0.0;
            }
        }
        for o in 0..s.hidden {
            let d = &dpre[o * n..(o + 1) * n];
            gb1[o] += d.iter().sum::<f64>();
            for k in 0..s.kernel1 {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += d[i] * tap(x, i, k, p1);
                }
                g1[o * s.kernel1 + k] += acc;
            }
        }
    }
    Ok(grad.data)
}
