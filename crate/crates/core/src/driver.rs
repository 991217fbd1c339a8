//! Command entry points behind the CLI: training runs with their output
//! directory contract (checkpoint + metrics + manifest), the evaluation
//! experiments with their report files, the ablation fan-out, and
//! checkpoint inspection. The binary itself only parses arguments and
//! maps errors to exit codes.

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::{RunConfig, TrainMode};
use crate::error::{Error, Result};
use crate::evaluation::{
    self, ablation_csv, ablation_grid, condition_grid, geodesic_sweep,
    length_targets_from_diameter, AblationAxis,
};
use crate::geometry::GeoParams;
use crate::losses::RecNorm;
use crate::runlog::RunManifest;
use crate::training::{train, TrainedModels};
use std::path::{Path, PathBuf};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Environment variable that overrides the config seed.
pub const SEED_ENV: &str = "GGEN_SEED";

/// What a training run left on disk.
#[derive(Debug)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub manifest: PathBuf,
    /// Populated when training aborted; the checkpoint then holds the
    /// last valid state.
    pub aborted: Option<String>,
}

fn apply_seed_env(cfg: &mut RunConfig) -> Result<()> {
    if let Ok(text) = std::env::var(SEED_ENV) {
        let seed: u64 = text
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be an integer, got '{text}'")))?;
        cfg.seed = seed;
    }
    Ok(())
}

/// Run training from a config file and persist the run directory.
pub fn cmd_train(
    config_path: &Path,
    out_dir: &Path,
    mode_override: Option<TrainMode>,
) -> Result<RunArtifacts> {
    let mut cfg = RunConfig::load(config_path)?;
    apply_seed_env(&mut cfg)?;
    if let Some(mode) = mode_override {
        cfg.mode = mode;
    }
    cfg.validate()?;
    train_into(&cfg, out_dir)
}

/// Training plus the run-directory contract, reusable by the ablation
/// fan-out and tests that build configs programmatically.
pub fn train_into(cfg: &RunConfig, out_dir: &Path) -> Result<RunArtifacts> {
    std::fs::create_dir_all(out_dir)?;
    let dataset = cfg.dataset()?;
    let pairs = dataset
        .sample_pairs(cfg.data.train_size, &mut crate::numerics::RngState::stream(cfg.seed, 1));
    let outcome = train(&dataset, &pairs, cfg)?;

    let checkpoint_path = out_dir.join(CHECKPOINT_FILE);
    let metrics_path = out_dir.join(METRICS_FILE);
    let manifest_path = out_dir.join(MANIFEST_FILE);

    let ckpt = Checkpoint { models: outcome.models, optimizer: None, config: cfg.clone() };
    save_checkpoint(&checkpoint_path, &ckpt)?;
    let mut metrics_file = std::fs::File::create(&metrics_path)?;
    outcome.log.write_csv(&mut metrics_file)?;
    let manifest = RunManifest::new(cfg, &[CHECKPOINT_FILE, METRICS_FILE]);
    std::fs::write(&manifest_path, manifest.to_json()?)?;

    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        checkpoint: checkpoint_path,
        metrics: metrics_path,
        manifest: manifest_path,
        aborted: outcome.aborted,
    })
}

/// Options shared by the evaluation experiments.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Random directions per sweep target.
    pub directions: usize,
    /// Random interpolations to aggregate.
    pub pairs: usize,
    /// Interpolation discretization steps.
    pub steps: usize,
    /// Generated samples per condition for coverage.
    pub samples: usize,
    /// Optimizer steps for the regression convergence check.
    pub budget: usize,
    /// Report seed (independent of the training seed).
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { directions: 10, pairs: 100, steps: 30, samples: 200, budget: 4000, seed: 17 }
    }
}

/// Files written by an evaluation experiment.
#[derive(Debug)]
pub struct EvalArtifacts {
    pub files: Vec<PathBuf>,
}

/// Run one named experiment against a checkpoint.
pub fn cmd_eval(
    checkpoint_path: &Path,
    experiment: &str,
    out_dir: &Path,
    opts: &EvalOptions,
) -> Result<EvalArtifacts> {
    match experiment {
        "median" | "geodesic-sweep" | "interp" | "coverage" | "ablate" => {}
        other => {
            return Err(Error::Config(format!(
                "unknown experiment '{other}' (median, geodesic-sweep, interp, coverage, ablate)"
            )))
        }
    }
    let ckpt = load_checkpoint(checkpoint_path)?;
    std::fs::create_dir_all(out_dir)?;
    let dataset = ckpt.config.dataset()?;
    let models = &ckpt.models;
    let mut files = Vec::new();

    match experiment {
        "median" => {
            let l1 = evaluation::median_convergence_on_bimodal(RecNorm::L1, opts.budget, opts.seed)?;
            let l2 = evaluation::median_convergence_on_bimodal(RecNorm::L2, opts.budget, opts.seed)?;
            let path = out_dir.join("median.csv");
            let mut s = String::from("norm,dist_to_median,dist_to_mean,final_loss,converged\n");
            for r in [&l1, &l2] {
                s.push_str(&format!(
                    "{:?},{},{},{},{}\n",
                    r.norm, r.mean_abs_to_median, r.mean_abs_to_mean, r.final_loss, r.converged
                ));
            }
            std::fs::write(&path, s)?;
            files.push(path);
        }
        "geodesic-sweep" => {
            let conditions = condition_grid(&dataset, 5, opts.seed);
            let x = &conditions[conditions.len() / 2];
            let targets = length_targets_from_diameter(
                &models.gen,
                x,
                models.latent_scale,
                120,
                opts.seed,
            );
            // endpoint tolerance consistent with the sweep's 2% length
            // tolerance; tighter misses are wasted solver effort here
            let geo = GeoParams { miss_tol_rel: 0.01, max_evals: 150, ..GeoParams::default() };
            let sweep = geodesic_sweep(
                &models.gen,
                x,
                models.latent_scale,
                &targets,
                opts.directions,
                opts.seed,
                &geo,
            )?;
            let path = out_dir.join("sweep.csv");
            let mut s =
                String::from("L_E,mean_LG,std_LG,directions,unreached,fallbacks,failed\n");
            for row in &sweep.rows {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    row.l_e,
                    row.mean_lg,
                    row.std_lg,
                    row.directions,
                    row.unreached,
                    row.fallbacks,
                    row.failed
                ));
            }
            std::fs::write(&path, s)?;
            files.push(path);
        }
        "interp" => {
            let conditions = condition_grid(&dataset, 5, opts.seed);
            let x = &conditions[conditions.len() / 2];
            let (aggregate, profiles) =
                evaluation::interpolation_study(models, x, opts.pairs, opts.steps, opts.seed)?;
            let prof_path = out_dir.join("interp_profiles.csv");
            let mut s = String::from("pair,step,velocity\n");
            for (pi, p) in profiles.iter().enumerate() {
                for (si, v) in p.velocities.iter().enumerate() {
                    s.push_str(&format!("{pi},{si},{v}\n"));
                }
            }
            std::fs::write(&prof_path, s)?;
            let sum_path = out_dir.join("interp_summary.json");
            std::fs::write(
                &sum_path,
                serde_json::to_string_pretty(&serde_json::json!({
                    "pairs": profiles.len(),
                    "steps": opts.steps,
                    "mean_std_over_mean": aggregate,
                }))
                .map_err(|e| Error::Config(e.to_string()))?,
            )?;
            files.push(prof_path);
            files.push(sum_path);
        }
        "coverage" => {
            let conditions = condition_grid(&dataset, 8, opts.seed);
            let report =
                evaluation::mode_coverage(models, &dataset, &conditions, opts.samples, opts.seed)?;
            let path = out_dir.join("coverage.csv");
            let mut s = String::from("condition,coverage,n_modes\n");
            for (x, frac, n) in &report.per_x {
                let xs: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
                s.push_str(&format!("{},{},{}\n", xs.join(";"), frac, n));
            }
            s.push_str(&format!("aggregate,{},\n", report.aggregate));
            std::fs::write(&path, s)?;
            files.push(path);
        }
        "ablate" => {
            let axes = [
                AblationAxis::LhVariant,
                AblationAxis::Projection,
                AblationAxis::LatentDim,
                AblationAxis::LossCombo,
            ];
            let cells = ablation_grid(&axes, &ckpt.config)?;
            let path = out_dir.join("ablation.csv");
            std::fs::write(&path, ablation_csv(&cells))?;
            files.push(path);
        }
        _ => unreachable!(),
    }
    Ok(EvalArtifacts { files })
}

/// The ablation subcommand: train/evaluate every cell of the requested
/// axes from a base config, fanning cells out over worker threads.
pub fn cmd_ablate(
    config_path: &Path,
    axes: &[String],
    out_dir: &Path,
    jobs: usize,
) -> Result<PathBuf> {
    let mut cfg = RunConfig::load(config_path)?;
    apply_seed_env(&mut cfg)?;
    cfg.validate()?;
    let parsed: Vec<AblationAxis> = if axes.is_empty() {
        vec![
            AblationAxis::LhVariant,
            AblationAxis::Projection,
            AblationAxis::LatentDim,
            AblationAxis::LossCombo,
        ]
    } else {
        axes.iter().map(|a| AblationAxis::parse(a)).collect::<Result<_>>()?
    };
    std::fs::create_dir_all(out_dir)?;

    let cells = if jobs <= 1 {
        ablation_grid(&parsed, &cfg)?
    } else {
        // fan the axes out over workers, bounded by `jobs`; results are
        // re-ordered by chunk index so the CSV stays deterministic
        let results: std::sync::Mutex<Vec<(usize, Vec<evaluation::AblationCell>)>> =
            std::sync::Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for (idx, chunk) in parsed.chunks(parsed.len().div_ceil(jobs)).enumerate() {
                let cfg_ref = &cfg;
                let results_ref = &results;
                scope.spawn(move || {
                    let cells = ablation_grid(chunk, cfg_ref).unwrap_or_default();
                    results_ref.lock().unwrap().push((idx, cells));
                });
            }
        });
        let mut collected = results.into_inner().unwrap();
        collected.sort_by_key(|(i, _)| *i);
        collected.into_iter().flat_map(|(_, c)| c).collect()
    };

    let path = out_dir.join("ablation.csv");
    std::fs::write(&path, ablation_csv(&cells))?;
    Ok(path)
}

/// Human-readable checkpoint header summary.
pub fn cmd_inspect(checkpoint_path: &Path) -> Result<String> {
    let ckpt = load_checkpoint(checkpoint_path)?;
    Ok(describe(&ckpt))
}

fn describe(ckpt: &Checkpoint) -> String {
    let TrainedModels { gen, disc, latent_scale, mode } = &ckpt.models;
    let mut s = String::new();
    s.push_str(&format!("format: GGEN v1, crc ok\nmode: {}\n", mode.as_str()));
    s.push_str(&format!("seed: {}\n", ckpt.config.seed));
    s.push_str(&format!("dataset: {}\n", ckpt.config.data.name));
    s.push_str(&format!(
        "generator: z {} + x {} -> {} | hidden {:?} | {} params\n",
        gen.latent_dim(),
        gen.cond_dim(),
        gen.output_dim(),
        gen.mlp().spec().hidden,
        gen.params().len()
    ));
    s.push_str(&format!(
        "discriminator: x {} + y {} -> logit | hidden {:?} | {} params\n",
        disc.cond_dim(),
        disc.data_dim(),
        disc.mlp().spec().hidden,
        disc.params().len()
    ));
    s.push_str(&format!("latent_scale: {latent_scale}\n"));
    s.push_str(&format!(
        "optimizer state: {}\n",
        if ckpt.optimizer.is_some() { "present" } else { "absent" }
    ));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config_toml() -> String {
        r#"
seed = 5
mode = "geo"

[data]
name = "cond_rings2d"
train_size = 8
eval_size = 4

[model]
latent_dim = 2
hidden = [8]
disc_hidden = [8]

[train]
epochs = 1
inner_steps = 2
batch = 4

[projection]
dim = 2

[linalg]
inverse_iters = 30
"#
        .to_string()
    }

    #[test]
    fn train_writes_the_run_directory_contract() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(&cfg_path, tiny_config_toml()).unwrap();
        let out = dir.path().join("out");
        let artifacts = cmd_train(&cfg_path, &out, None).unwrap();
        assert!(artifacts.aborted.is_none());
        assert!(artifacts.checkpoint.exists());
        assert!(artifacts.metrics.exists());
        assert!(artifacts.manifest.exists());
        let manifest = RunManifest::from_json(
            &std::fs::read_to_string(&artifacts.manifest).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest.seed, 5);
    }

    #[test]
    fn rerun_reproduces_byte_identical_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(&cfg_path, tiny_config_toml()).unwrap();
        let a = cmd_train(&cfg_path, &dir.path().join("a"), None).unwrap();
        let b = cmd_train(&cfg_path, &dir.path().join("b"), None).unwrap();
        let bytes_a = std::fs::read(&a.metrics).unwrap();
        let bytes_b = std::fs::read(&b.metrics).unwrap();
        assert_eq!(bytes_a, bytes_b);
        // checkpoints are byte-identical too
        assert_eq!(std::fs::read(&a.checkpoint).unwrap(), std::fs::read(&b.checkpoint).unwrap());
    }

    #[test]
    fn mode_override_flips_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(&cfg_path, tiny_config_toml()).unwrap();
        let out = dir.path().join("out");
        let artifacts = cmd_train(&cfg_path, &out, Some(TrainMode::Baseline)).unwrap();
        let ckpt = load_checkpoint(&artifacts.checkpoint).unwrap();
        assert_eq!(ckpt.models.mode, TrainMode::Baseline);
    }

    #[test]
    fn unknown_experiment_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(&cfg_path, tiny_config_toml()).unwrap();
        let artifacts = cmd_train(&cfg_path, &dir.path().join("out"), None).unwrap();
        let r = cmd_eval(
            &artifacts.checkpoint,
            "nonsense",
            dir.path(),
            &EvalOptions::default(),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn missing_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let r = cmd_eval(
            &dir.path().join("missing.ckpt"),
            "coverage",
            dir.path(),
            &EvalOptions::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn coverage_eval_writes_its_report() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(&cfg_path, tiny_config_toml()).unwrap();
        let artifacts = cmd_train(&cfg_path, &dir.path().join("out"), None).unwrap();
        let opts = EvalOptions { samples: 20, ..EvalOptions::default() };
        let eval = cmd_eval(&artifacts.checkpoint, "coverage", &dir.path().join("eval"), &opts)
            .unwrap();
        let text = std::fs::read_to_string(&eval.files[0]).unwrap();
        assert!(text.starts_with("condition,coverage,n_modes"));
        assert!(text.contains("aggregate,"));
    }

    #[test]
    fn inspect_summarizes_the_header() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(&cfg_path, tiny_config_toml()).unwrap();
        let artifacts = cmd_train(&cfg_path, &dir.path().join("out"), None).unwrap();
        let text = cmd_inspect(&artifacts.checkpoint).unwrap();
        assert!(text.contains("GGEN v1"));
        assert!(text.contains("generator: z 2 + x 1 -> 2"));
        assert!(text.contains("cond_rings2d"));
    }
}
