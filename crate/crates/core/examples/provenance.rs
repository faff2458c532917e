//! Writes a reconstruction whose sidecar records the whole chain that
//! produced it, then rebuilds it from that record and compares bytes.
//!
//! ```text
//! cargo run --release --example provenance
//! ```

use linfbp::cli::recipe::verify_file;
use linfbp::cli::{Projection, Recipe};
use linfbp::phantom::random_phantom;
use linfbp::recon::Method;
use linfbp::{FilterKind, Geometry, GridSpec};

fn main() -> linfbp::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| linfbp::Error::Io {
        path: std::env::temp_dir(),
        source: e,
    })?;
    let grid = GridSpec::square(64, 2.0 / 64.0)?;
    let recipe = Recipe::Reconstruct {
        input: Box::new(Recipe::Degrade {
            input: Box::new(Recipe::Project {
                phantom: random_phantom(11, 5)?,
                geometry: Geometry::half_rotation(95, 2.0 / 64.0, 120)?,
                projection: Projection::Analytic,
            }),
            keep_every: Some(2),
            dose: None,
        }),
        grid,
        method: Method::CuFbp,
        filter: FilterKind::Cosine,
        checkpoint: None,
    };
    let path = dir.path().join("recon.f32");
    recipe.realize()?.write(&path, &recipe)?;
    let sidecar = std::fs::read_to_string(linfbp::io::sidecar_path(&path)).expect("sidecar");
    println!("{}", &sidecar[..sidecar.len().min(400)]);
    println!("...\nverify: {:?}", verify_file(&path)?);
    Ok(())
}
