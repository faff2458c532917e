//! Parallel-beam CT reconstruction by filtered backprojection with fixed
//! interpolation kernels (nearest, linear, cubic) and with a learnable
//! interpolation stage (LInFBP).
//!
//! The learnable stage represents each filtered view as a piecewise
//! continuous function: near detector bin `n`, the view is
//! `sum_c z[c, n] * phi_c(t - n)` for a fixed basis (Fourier harmonics or
//! hat functions) whose coefficients `z` come from a small 1-D convolutional
//! network applied to the filtered sinogram. Backprojection then samples this
//! function instead of a fixed interpolant.
//!
//! Module map:
//!
//! - [`geometry`]: acquisition geometry and pixel-to-detector mapping
//! - [`phantom`]: analytic ellipse phantoms with exact line integrals
//! - [`projector`]: discrete projection, low-dose noise, view subsampling
//! - [`spectral`]: radix-2 FFT and ramp/cosine/Hann filtering
//! - [`interp`]: fixed kernels and basis-function representations
//! - [`recon`]: backprojection, FBP, the learnable forward model
//! - [`learn`]: coefficient network, gradients, losses, RMSProp, training
//! - [`metrics`]: PSNR, NMSE, SSIM
//! - [`io`]: file formats (raw float arrays with JSON sidecars, PGM, checkpoints)
//! - [`cli`]: the `linfbp` command-line front end

pub mod cli;
pub mod error;
pub mod geometry;
pub mod image;
pub mod interp;
pub mod io;
pub mod learn;
pub mod metrics;
pub mod phantom;
pub mod projector;
pub mod recon;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use geometry::{Geometry, GridSpec};
pub use image::{ImageGrid, Sinogram, SinogramKind};
pub use interp::{BasisFamily, BasisSet, CoeffTensor, KernelKind, LcrMode};
pub use recon::{Backprojector, Method};
pub use spectral::FilterKind;
