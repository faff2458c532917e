//! Nearest, linear and cubic FBP on dense and quarter-view Shepp-Logan data.
//!
//! ```text
//! cargo run --release --example fbp_methods [out_dir]
//! ```

use std::path::PathBuf;

use linfbp::io::{self, Window};
use linfbp::metrics::MetricReport;
use linfbp::phantom::{analytic_sinogram, rasterize, shepp_logan};
use linfbp::projector::{subsample_views, ViewSelection};
use linfbp::recon::fbp;
use linfbp::{FilterKind, Geometry, GridSpec, KernelKind};

fn main() -> linfbp::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let ps = 2.0 / 128.0;
    let grid = GridSpec::square(128, ps)?;
    let phantom = shepp_logan();
    let reference = rasterize(&phantom, &grid);
    let dense = analytic_sinogram(&phantom, &Geometry::half_rotation(185, ps, 360)?);
    let quarter = subsample_views(&dense, &ViewSelection::Every(4))?;

    println!("{:<9} {:<10} {:>9} {:>8} {:>8}", "views", "method", "PSNR dB", "NMSE", "SSIM");
    for (label, sino) in [("360", &dense), ("90", &quarter)] {
        for filter in [FilterKind::Ramp, FilterKind::Hann] {
            for (name, kernel) in [("Ne", KernelKind::Nearest), ("Li", KernelKind::Linear), ("Cu", KernelKind::Cubic)] {
                let image = fbp(sino, &grid, filter, kernel)?;
                let m = MetricReport::compute(&image, &reference)?;
                let method = format!("{name} FBP-{}", filter.suffix());
                println!("{label:<9} {method:<10} {:>9.3} {:>8.4} {:>8.4}", m.psnr_db, m.nmse, m.ssim);
                if filter == FilterKind::Ramp && kernel == KernelKind::Linear {
                    io::write_pgm(&out.join(format!("li_fbp_{label}.pgm")), &image, Window::full_range(&reference))?;
                }
            }
        }
    }
    Ok(())
}
