//! Trains L-LInFBP on random ellipse phantoms (64x64, 60 views, 95 bins)
//! and compares it with fixed-interpolation FBP on held-out phantoms.
//!
//! ```text
//! cargo run --release --example train_linfbp [epochs] [lr] [fourier|linear]
//! ```

use std::time::Instant;

use linfbp::learn::{InitScheme, TrainConfig, TrainLog, Trainer, TrainingPair};
use linfbp::metrics::psnr;
use linfbp::phantom::{analytic_sinogram, random_phantom, rasterize};
use linfbp::recon::fbp;
use linfbp::{BasisSet, FilterKind, Geometry, GridSpec, KernelKind};

fn dataset(seeds: std::ops::Range<u64>, grid: &GridSpec, geometry: &Geometry) -> linfbp::Result<Vec<TrainingPair>> {
    seeds
        .map(|s| {
            let spec = random_phantom(s, 6)?;
            Ok(TrainingPair {
                sinogram: analytic_sinogram(&spec, geometry),
                reference: rasterize(&spec, grid),
            })
        })
        .collect()
}

fn main() -> linfbp::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(50, |s| s.parse().expect("epochs"));
    let lr: f64 = args.next().map_or(2e-5, |s| s.parse().expect("learning rate"));
    let basis = match args.next().as_deref() {
        Some("fourier") => BasisSet::default_fourier(),
        _ => BasisSet::default_linear(),
    };

    let ps = 2.0 / 64.0;
    let grid = GridSpec::square(64, ps)?;
    let geometry = Geometry::half_rotation(95, ps, 60)?;
    let train = dataset(1000..1032, &grid, &geometry)?;
    let test = dataset(5000..5008, &grid, &geometry)?;

    let mut config = TrainConfig {
        basis,
        epochs,
        seed: 1,
        init: InitScheme::NearLinear { jitter: 0.0 },
        ..Default::default()
    };
    config.optimizer.lr = lr;
    let trainer = Trainer::new(config, &train)?;
    let mut state = trainer.fresh_state()?;
    let mut log = TrainLog::default();
    let start = Instant::now();
    trainer.run(&mut state, &mut log, |s, l| {
        if s.epochs_done % 10 == 0 || s.epochs_done == 1 {
            println!("epoch {:>3}: mean loss {:.4}", s.epochs_done, l.epoch_mean(s.epochs_done).unwrap());
        }
    })?;
    let (initial, last) = (log.initial_loss().unwrap(), log.final_loss().unwrap());
    println!(
        "trained in {:.1} s; loss {initial:.4} -> {last:.4} (ratio {:.3})",
        start.elapsed().as_secs_f64(),
        last / initial
    );

    let mean = |f: &dyn Fn(&TrainingPair) -> linfbp::Result<linfbp::ImageGrid>| -> linfbp::Result<f64> {
        let mut total = 0.0;
        for p in &test {
            total += psnr(&f(p)?, &p.reference)?;
        }
        Ok(total / test.len() as f64)
    };
    let ne = mean(&|p| fbp(&p.sinogram, &grid, FilterKind::Ramp, KernelKind::Nearest))?;
    let li = mean(&|p| fbp(&p.sinogram, &grid, FilterKind::Ramp, KernelKind::Linear))?;
    let learned = mean(&|p| state.model.reconstruct(&p.sinogram, &grid))?;
    println!("held-out mean PSNR: Ne FBP-R {ne:.3} dB, Li FBP-R {li:.3} dB, learned {learned:.3} dB ({:+.3})", learned - li);
    Ok(())
}
