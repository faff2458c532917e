use linfbp::geometry::{Geometry, GridSpec};
use linfbp::io::{self, Checkpoint};
use linfbp::learn::{train, InitScheme, TrainConfig, TrainLog, Trainer, TrainingPair};
use linfbp::phantom::{analytic_sinogram, random_phantom, rasterize};

fn pairs(seeds: std::ops::Range<u64>) -> Vec<TrainingPair> {
    let ps = 2.0 / 64.0;
    let grid = GridSpec::square(64, ps).unwrap();
    let geometry = Geometry::half_rotation(95, ps, 60).unwrap();
    seeds
        .map(|s| {
            let spec = random_phantom(s, 6).unwrap();
            TrainingPair {
                sinogram: analytic_sinogram(&spec, &geometry),
                reference: rasterize(&spec, &grid),
            }
        })
        .collect()
}

fn config(init: InitScheme, epochs: usize, lr: f64) -> TrainConfig {
    let mut cfg = TrainConfig {
        epochs,
        seed: 1,
        init,
        ..Default::default()
    };
    cfg.optimizer.lr = lr;
    cfg
}

#[test]
fn single_sample_loss_decreases_over_fifty_epochs() {
    let data = pairs(1000..1001);
    for init in [InitScheme::FanIn, InitScheme::NearLinear { jitter: 0.0 }] {
        let (_, log) = train(&config(init, 50, 2e-5), &data).unwrap();
        let means: Vec<f64> = (0..=50).map(|e| log.epoch_mean(e).unwrap()).collect();
        assert!(means[50] < means[0], "{init:?}: {} -> {}", means[0], means[50]);
        assert!(means.windows(2).filter(|w| w[1] > w[0]).count() <= 5, "{init:?}: {means:?}");
    }
}

#[test]
fn small_steps_do_not_degrade_the_first_epoch() {
    let data = pairs(1000..1032);
    for init in [InitScheme::FanIn, InitScheme::NearLinear { jitter: 0.0 }] {
        let cfg = config(init, 1, 2e-6);
        let trainer = Trainer::new(cfg, &data).unwrap();
        let mut state = trainer.fresh_state().unwrap();
        let mut log = TrainLog::default();
        trainer.run(&mut state, &mut log, |_, _| {}).unwrap();
        let before = log.initial_loss().unwrap();
        let mut after = TrainLog::default();
        trainer.evaluate(&state.model.params, 1, &mut after).unwrap();
        let after = after.epoch_mean(1).unwrap();
        assert!(after <= 1.01 * before, "{init:?}: {before} -> {after}");
    }
}

#[test]
fn checkpoint_roundtrip_preserves_reconstructions() {
    let data = pairs(2000..2003);
    let cfg = config(InitScheme::FanIn, 2, 1e-3);
    let (state, _) = train(&cfg, &data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    io::write_checkpoint(&path, &Checkpoint::new(state.clone(), None, Some(cfg))).unwrap();
    let loaded = io::read_checkpoint(&path).unwrap();
    let grid = *data[0].reference.grid();
    for pair in &data {
        let a = state.model.reconstruct(&pair.sinogram, &grid).unwrap();
        let b = loaded.model().reconstruct(&pair.sinogram, &grid).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn training_is_reproducible_across_runs() {
    let data = pairs(3000..3004);
    let cfg = config(InitScheme::FanIn, 3, 1e-4);
    let (a, la) = train(&cfg, &data).unwrap();
    let (b, lb) = train(&cfg, &data).unwrap();
    let enc = |s| Checkpoint::new(s, None, Some(cfg.clone())).encode();
    assert_eq!(enc(a), enc(b));
    assert_eq!(la, lb);
}
