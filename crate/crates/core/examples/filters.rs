//! Frequency responses of the ramp, cosine and Hann filters and their
//! effect on one projection.
//!
//! ```text
//! cargo run --release --example filters
//! ```

use linfbp::phantom::{analytic_sinogram, shepp_logan};
use linfbp::spectral::{filter_sinogram, make_filter};
use linfbp::{FilterKind, Geometry};

fn main() -> linfbp::Result<()> {
    let geometry = Geometry::half_rotation(185, 2.0 / 128.0, 4)?;
    let sino = analytic_sinogram(&shepp_logan(), &geometry);
    println!("{:<7} {:>8} {:>10} {:>10} {:>10}", "filter", "padded", "H(0)", "H(L/4)", "H(L/2)");
    for kind in [FilterKind::Ramp, FilterKind::Cosine, FilterKind::Hann] {
        let spec = make_filter(kind, geometry.n_bins, geometry.bin_width)?;
        let l = spec.padded_length;
        println!(
            "{:<7} {:>8} {:>10.3} {:>10.3} {:>10.3}",
            kind.to_string(),
            l,
            spec.response[0],
            spec.response[l / 4],
            spec.response[l / 2]
        );
        let filtered = filter_sinogram(&sino, &spec)?;
        let centre = filtered.get(geometry.n_bins / 2, 0);
        println!("        central sample of view 0 after filtering: {centre:.4}");
    }
    Ok(())
}
