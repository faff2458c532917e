//! Simulates a sparse-view, low-dose scan and writes it with its recipe.
//!
//! ```text
//! cargo run --release --example simulate_scan [out_dir]
//! ```

use std::path::PathBuf;

use linfbp::cli::{Projection, Recipe};
use linfbp::phantom::shepp_logan;
use linfbp::projector::{DoseSpec, FULL_DOSE_COUNTS};
use linfbp::Geometry;

fn main() -> linfbp::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let full = Recipe::Project {
        phantom: shepp_logan(),
        geometry: Geometry::half_rotation(185, 2.0 / 128.0, 360)?,
        projection: Projection::Analytic,
    };
    let quarter = Recipe::Degrade {
        input: Box::new(full.clone()),
        keep_every: Some(4),
        dose: Some(DoseSpec {
            incident_counts: FULL_DOSE_COUNTS,
            dose_fraction: 0.25,
            seed: 3,
        }),
    };
    for (name, recipe) in [("full", &full), ("quarter", &quarter)] {
        let artifact = recipe.realize()?;
        let path = out.join(format!("{name}_sino.f32"));
        artifact.write(&path, recipe)?;
        let (sino, _) = artifact.into_sinogram()?;
        let peak = sino.samples().iter().cloned().fold(f64::MIN, f64::max);
        println!(
            "{}: {} bins x {} views, max line integral {peak:.3}",
            path.display(),
            sino.n_bins(),
            sino.n_views()
        );
    }
    Ok(())
}
