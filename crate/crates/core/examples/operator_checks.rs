//! Checks the operators against explicit matrices and inner products.
//!
//! ```text
//! cargo run --release --example operator_checks
//! ```

use rand::RngExt;

use linfbp::cli::matrix_oracle;
use linfbp::image::dot;
use linfbp::interp::CoeffTensor;
use linfbp::projector::{forward_adjoint, forward_project, Coverage};
use linfbp::recon::LcrOperator;
use linfbp::{rng, BasisSet, Geometry, GridSpec, ImageGrid, LcrMode, Sinogram, SinogramKind};

fn main() -> linfbp::Result<()> {
    let worst = matrix_oracle(8, 12, 11, 20, 0)?;
    println!("backprojection vs dense matrix (8x8, 12 views, 11 bins): max difference {worst:.2e}");

    let grid = GridSpec::square(32, 1.0 / 16.0)?;
    let geometry = Geometry::half_rotation(49, 1.0 / 16.0, 30)?;
    let mut rng = rng::seeded(1);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };

    let x = ImageGrid::from_values(grid, draw(grid.len()))?;
    let y = Sinogram::from_samples(geometry.clone(), SinogramKind::Raw, draw(49 * 30))?;
    let lhs = dot(forward_project(&x, &geometry, Coverage::Strict)?.samples(), y.samples());
    let rhs = dot(x.values(), forward_adjoint(&y, &grid).values());
    println!("projector adjoint: <Ax, y> = {lhs:.12}, <x, A'y> = {rhs:.12}");

    for (basis, mode) in [
        (BasisSet::default_fourier(), LcrMode::Nearest),
        (BasisSet::default_linear(), LcrMode::LocalEnsemble),
    ] {
        let op = LcrOperator::new(&grid, &geometry, basis, mode);
        let z = CoeffTensor::from_values(basis, 49, 30, draw(basis.len() * 49 * 30))?;
        let g = ImageGrid::from_values(grid, draw(grid.len()))?;
        let lhs = dot(op.forward(&z)?.values(), g.values());
        let rhs = dot(z.values(), op.backward(&g)?.values());
        println!("{basis:?} {mode:?}: relative adjoint mismatch {:.2e}", (lhs - rhs).abs() / lhs.abs());
    }
    Ok(())
}
