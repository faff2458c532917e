//! The local coefficient representation behind learnable interpolation:
//! basis functions, the fast two-term path, and how fixed linear
//! interpolation is recovered as a special case.
//!
//! ```text
//! cargo run --release --example learnable_interpolation
//! ```

use linfbp::interp::{kernel_interpolate, lcr_eval, lcr_eval_linear_fast, linear_reduction_view};
use linfbp::phantom::{analytic_sinogram, rasterize, shepp_logan};
use linfbp::recon::{fbp, linfbp_forward};
use linfbp::spectral::{filter_sinogram, make_filter};
use linfbp::{BasisSet, FilterKind, Geometry, GridSpec, KernelKind, LcrMode};

fn main() -> linfbp::Result<()> {
    let fourier = BasisSet::default_fourier();
    let linear = BasisSet::default_linear();
    println!("Fourier basis (C = {}) and linear basis (C = {}) at a few offsets:", fourier.len(), linear.len());
    for u in [-0.5, -0.25, 0.0, 0.25, 0.5] {
        let mut f = vec![0.0; fourier.len()];
        let mut l = vec![0.0; linear.len()];
        fourier.eval_all(u, &mut f);
        linear.eval_all(u, &mut l);
        println!("  u = {u:+.2}  fourier {f:.3?}  linear {l:.2?}");
    }

    // one detector row: coefficients copied from shifted samples reproduce
    // linear interpolation exactly
    let view: Vec<f64> = (0..9).map(|i| ((i * i) as f64 * 0.37).sin()).collect();
    let z = linear_reduction_view(&view, 2);
    for t in [0.3, 2.5, 4.71, 7.9] {
        let full = lcr_eval(&z, &linear, t, LcrMode::Nearest).unwrap();
        let fast = lcr_eval_linear_fast(&z, 2, t, LcrMode::Nearest).unwrap();
        let fixed = kernel_interpolate(KernelKind::Linear, &view, t).unwrap();
        println!("  t = {t:.2}: full sum {full:+.6}, two-term {fast:+.6}, linear interpolation {fixed:+.6}");
    }

    // the same on a whole reconstruction
    let ps = 2.0 / 96.0;
    let grid = GridSpec::square(96, ps)?;
    let geometry = Geometry::half_rotation(139, ps, 120)?;
    let sino = analytic_sinogram(&shepp_logan(), &geometry);
    let filtered = filter_sinogram(&sino, &make_filter(FilterKind::Ramp, geometry.n_bins, ps)?)?;
    let z = linfbp::interp::linear_reduction(filtered.samples(), geometry.n_bins, 2)?;
    let learned = linfbp_forward(&filtered, &z, &grid, LcrMode::Nearest)?;
    let fixed = fbp(&sino, &grid, FilterKind::Ramp, KernelKind::Linear)?;
    let diff = learned
        .values()
        .iter()
        .zip(fixed.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let psnr = linfbp::metrics::psnr(&fixed, &rasterize(&shepp_logan(), &grid))?;
    println!("linear-reduction reconstruction vs Li FBP-R: max difference {diff:.2e} (PSNR {psnr:.2} dB)");
    Ok(())
}
