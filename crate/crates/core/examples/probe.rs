//! Calibration probe: loads a checkpoint and reports coverage,
//! interpolation dispersion and tau bounds across evaluation latent
//! scales. Useful when tuning run configs for a new task.

use ggen::checkpoint::load_checkpoint;
use ggen::evaluation::{condition_grid, interpolation_study, mode_coverage};
use ggen::numerics::RngState;
use ggen::training::TrainedModels;
use std::path::Path;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.len() < 2 {
        eprintln!("usage: probe <model.ckpt> [scales...]");
        std::process::exit(2);
    }
    let ckpt = load_checkpoint(Path::new(&args[1])).expect("readable checkpoint");
    let dataset = ckpt.config.dataset().expect("dataset");
    let conditions = condition_grid(&dataset, 6, 17);
    let scales: Vec<f64> = if args.len() > 2 {
        args[2..].iter().map(|s| s.parse().expect("scale")).collect()
    } else {
        vec![ckpt.models.latent_scale]
    };
    println!(
        "stored latent_scale = {:.4}, mode = {}",
        ckpt.models.latent_scale,
        ckpt.models.mode.as_str()
    );
    for scale in scales {
        let models = TrainedModels { latent_scale: scale, ..ckpt.models.clone() };
        let cov = mode_coverage(&models, &dataset, &conditions, 200, 17).unwrap().aggregate;
        let (disp, _) = interpolation_study(&models, &conditions[conditions.len() / 2], 60, 30, 17)
            .unwrap();
        let mut rng = RngState::stream(17, 41);
        let x = &conditions[conditions.len() / 2];
        let mut tmin = f64::INFINITY;
        let mut tmax: f64 = 0.0;
        for _ in 0..1000 {
            let z1 = models.sample_eval_latent(&mut rng);
            let z2 = models.sample_eval_latent(&mut rng);
            if let Ok(t) = ggen::geometry::tau_ratio(&models.gen, x, &z1, &z2) {
                tmin = tmin.min(t);
                tmax = tmax.max(t);
            }
        }
        // pooled aggregation: one std/mean over all velocity samples
        let (_, profiles) =
            interpolation_study(&models, &conditions[conditions.len() / 2], 60, 30, 17).unwrap();
        let all: Vec<f64> = profiles.iter().flat_map(|p| p.velocities.clone()).collect();
        let pm = all.iter().sum::<f64>() / all.len() as f64;
        let ps = (all.iter().map(|v| (v - pm) * (v - pm)).sum::<f64>() / all.len() as f64).sqrt();
        println!(
            "scale {scale:.3}: coverage {cov:.3}, dispersion {disp:.3} (pooled {:.3}), tau [{tmin:.5}, {tmax:.3}]",
            ps / pm
        );
    }
}
