//! Experiment protocols over trained models: regression-statistic
//! convergence, Euclidean-vs-geodesic length sweeps, interpolation
//! velocity profiles, conditional mode coverage, and the one-axis-at-a-
//! time ablation grid. Every report is deterministic given the model and
//! a seed.

use crate::config::{ProjectionKind, RunConfig, TrainMode};
use crate::data::ConditionalDataset;
use crate::error::{Error, Result};
use crate::geometry::{
    metric_speed, shoot_geodesic, tau_ratio, GeoParams, LatentMap, ShotOutcome,
};
use crate::losses::{rec_loss_tape, LhVariant, RecNorm};
use crate::models::{Activation, Mlp, MlpSpec};
use crate::numerics::{self, RngState, Tape};
use crate::training::{train, AdamState, TrainedModels};

// ---------------------------------------------------------------------------
// Median / mean convergence
// ---------------------------------------------------------------------------

/// Outcome of a regression-only run: how close the prediction lands to
/// the analytic conditional median and mean.
#[derive(Debug, Clone)]
pub struct MedianReport {
    pub norm: RecNorm,
    pub mean_abs_to_median: f64,
    pub mean_abs_to_mean: f64,
    pub final_loss: f64,
    /// False when the loss plateaued above the convergence threshold.
    pub converged: bool,
}

/// Train a plain regression net `f(x) ~ y` with the given norm and
/// measure the distance of its predictions to per-condition statistics.
/// `stats` maps each evaluation condition to its (median, mean).
pub fn median_convergence_check(
    norm: RecNorm,
    pairs: &[(Vec<f64>, Vec<f64>)],
    eval_points: &[(Vec<f64>, Vec<f64>, Vec<f64>)],
    budget_steps: usize,
    seed: u64,
) -> Result<MedianReport> {
    if pairs.is_empty() || eval_points.is_empty() {
        return Err(Error::Contract("regression check needs data and eval points".into()));
    }
    let d = pairs[0].0.len();
    let m = pairs[0].1.len();
    let spec = MlpSpec::new(d, &[32, 32], m, Activation::Tanh);
    let mut rng = RngState::stream(seed, 11);
    let mut net = Mlp::init(spec, &mut rng);
    let mut adam = AdamState::new(net.params().len());
    let batch = 96.min(pairs.len());
    let window = 400usize;
    let mut window_means = Vec::new();
    let mut running = 0.0;
    let mut seen = 0usize;
    // tail average of the parameters: the predictor random-walks around
    // the optimum under minibatch noise, and averaging the walk removes it
    let tail_start = budget_steps - budget_steps / 4;
    let mut tail_sum = vec![0.0; net.params().len()];
    let mut tail_count = 0usize;
    for step in 0..budget_steps {
        let mut tape = Tape::new();
        let leaves = net.param_leaves(&mut tape, true);
        let mut loss_acc = None;
        for _ in 0..batch {
            let (x, y) = &pairs[rng.below(pairs.len())];
            let xv = tape.constant_vec(x);
            let out = net.record_with(&mut tape, xv, &leaves);
            let l = rec_loss_tape(&mut tape, y, out, norm);
            loss_acc = Some(match loss_acc {
                Some(a) => tape.add(a, l),
                None => l,
            });
        }
        let total = tape.scale(loss_acc.unwrap(), 1.0 / batch as f64);
        let loss = tape.scalar(total);
        running += loss;
        seen += 1;
        if seen == window {
            window_means.push(running / window as f64);
            running = 0.0;
            seen = 0;
        }
        let grads = tape.backward(total)?;
        let flat = net.flat_grad(&tape, &grads, &leaves);
        adam.step(net.params_mut(), &flat, 0.002, 0.9, 0.999, 1e-8);
        if step >= tail_start {
            for (acc, p) in tail_sum.iter_mut().zip(net.params()) {
                *acc += p;
            }
            tail_count += 1;
        }
    }
    if tail_count > 0 {
        let averaged: Vec<f64> = tail_sum.iter().map(|v| v / tail_count as f64).collect();
        net.set_params(&averaged);
    }

    let mut to_median = 0.0;
    let mut to_mean = 0.0;
    for (x, median, mean) in eval_points {
        let pred = net.forward(x);
        to_median += numerics::norm(&numerics::sub(&pred, median)) / eval_points.len() as f64;
        to_mean += numerics::norm(&numerics::sub(&pred, mean)) / eval_points.len() as f64;
    }
    // converged = the loss has stopped moving by the end of the budget;
    // the flagged case is a run still descending (under-budgeted) or one
    // that went non-finite
    let final_loss = window_means.last().copied().unwrap_or(f64::INFINITY);
    let converged = match window_means.len() {
        0..=3 => final_loss.is_finite(),
        n => {
            let recent = (window_means[n - 1] + window_means[n - 2]) / 2.0;
            let earlier = (window_means[n - 3] + window_means[n - 4]) / 2.0;
            final_loss.is_finite() && (earlier - recent) / earlier.abs().max(1e-12) < 0.02
        }
    };
    Ok(MedianReport { norm, mean_abs_to_median: to_median, mean_abs_to_mean: to_mean, final_loss, converged })
}

/// Convenience wrapper for the scalar bimodal task.
pub fn median_convergence_on_bimodal(
    norm: RecNorm,
    budget_steps: usize,
    seed: u64,
) -> Result<MedianReport> {
    let ds = ConditionalDataset::by_name("bimodal1d")?;
    let pairs = ds.sample_pairs(32_768, &mut RngState::stream(seed, 1));
    let eval_points: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..21)
        .map(|i| {
            let x = vec![-0.9 + 1.8 * i as f64 / 20.0];
            let median = ds.conditional_median(&x).expect("scalar task");
            let mean = ds.conditional_mean(&x);
            (x, median, mean)
        })
        .collect();
    median_convergence_check(norm, &pairs, &eval_points, budget_steps, seed)
}

// ---------------------------------------------------------------------------
// Geodesic sweep
// ---------------------------------------------------------------------------

/// One row of the Euclidean-vs-geodesic comparison.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub l_e: f64,
    pub mean_lg: f64,
    pub std_lg: f64,
    pub directions: usize,
    /// Directions whose walk saturated before reaching this length.
    pub unreached: usize,
    /// Shots that needed the lattice fallback.
    pub fallbacks: usize,
    /// Shots that failed outright (no fallback available).
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct GeodesicSweepResult {
    pub rows: Vec<SweepRow>,
}

/// Walk straight latent lines in random directions, record where the
/// image curve length crosses each target, and compare against the
/// geodesic length between the same endpoints. Targets must be sorted
/// ascending.
pub fn geodesic_sweep<G: LatentMap + ?Sized>(
    map: &G,
    x: &[f64],
    latent_std: f64,
    targets: &[f64],
    directions: usize,
    seed: u64,
    geo: &GeoParams,
) -> Result<GeodesicSweepResult> {
    if targets.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Contract("sweep targets must be strictly increasing".into()));
    }
    let k = map.latent_dim();
    let mut per_target: Vec<Vec<f64>> = vec![Vec::new(); targets.len()];
    let mut unreached = vec![0usize; targets.len()];
    let mut fallbacks = vec![0usize; targets.len()];
    let mut failed = vec![0usize; targets.len()];

    for dir_idx in 0..directions {
        let mut rng = RngState::stream(seed, 100 + dir_idx as u64);
        let z0 = rng.normal_vec(k, 0.0, latent_std);
        let u = rng.unit_vector(k);

        // arc-length walk along the latent ray
        let probe = 1e-4;
        let y0 = map.forward(&z0, x);
        let y_probe = map.forward(&numerics::axpy(&z0, probe, &u), x);
        let speed0 = numerics::norm(&numerics::sub(&y_probe, &y0)) / probe;
        let max_target = *targets.last().unwrap();
        let step = max_target / (1200.0 * speed0.max(1e-9));
        let max_steps = 40_000;

        let mut endpoints: Vec<Option<Vec<f64>>> = vec![None; targets.len()];
        let mut length = 0.0;
        let mut z = z0.clone();
        let mut y_prev = y0.clone();
        let mut next_target = 0;
        let mut stall = 0usize;
        for _ in 0..max_steps {
            if next_target >= targets.len() {
                break;
            }
            let z_next = numerics::axpy(&z, step, &u);
            let y_next = map.forward(&z_next, x);
            let seg = numerics::norm(&numerics::sub(&y_next, &y_prev));
            length += seg;
            z = z_next;
            y_prev = y_next;
            if seg < 1e-12 * max_target {
                stall += 1;
                if stall > 200 {
                    break; // image motion saturated
                }
            } else {
                stall = 0;
            }
            while next_target < targets.len() && length >= targets[next_target] {
                endpoints[next_target] = Some(z.clone());
                next_target += 1;
            }
        }

        // geodesic distances to the recorded endpoints, warm-starting each
        // shot from the previous one
        let mut prev_velocity: Option<Vec<f64>> = None;
        let mut prev_gap = 0.0;
        for (ti, endpoint) in endpoints.iter().enumerate() {
            match endpoint {
                None => unreached[ti] += 1,
                Some(z_e) => {
                    let gap = numerics::norm(&numerics::sub(z_e, &z0));
                    let warm: Option<Vec<f64>> = prev_velocity.as_ref().map(|v| {
                        let scale = if prev_gap > 0.0 { gap / prev_gap } else { 1.0 };
                        numerics::scale(v, scale)
                    });
                    // failures are recorded, not fatal: above latent dim 3
                    // the lattice fallback is unavailable
                    match shoot_geodesic(map, x, &z0, z_e, warm.as_deref(), geo) {
                        Ok(sol) => {
                            if sol.outcome == ShotOutcome::GraphFallback {
                                fallbacks[ti] += 1;
                            } else {
                                prev_velocity = Some(sol.path.start().zdot.clone());
                                prev_gap = gap;
                            }
                            per_target[ti].push(sol.length);
                        }
                        Err(_) => failed[ti] += 1,
                    }
                }
            }
        }
    }

    let rows = targets
        .iter()
        .enumerate()
        .map(|(ti, &l_e)| {
            let vals = &per_target[ti];
            let n = vals.len().max(1) as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            SweepRow {
                l_e,
                mean_lg: if vals.is_empty() { f64::NAN } else { mean },
                std_lg: std,
                directions: vals.len(),
                unreached: unreached[ti],
                fallbacks: fallbacks[ti],
                failed: failed[ti],
            }
        })
        .collect();
    Ok(GeodesicSweepResult { rows })
}

/// Nine evenly spaced length targets spanning `[0.1 D, 0.9 D]` where `D`
/// is the diameter of a generated probe set.
pub fn length_targets_from_diameter<G: LatentMap + ?Sized>(
    map: &G,
    x: &[f64],
    latent_std: f64,
    probes: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = RngState::stream(seed, 55);
    let outputs: Vec<Vec<f64>> = (0..probes)
        .map(|_| map.forward(&rng.normal_vec(map.latent_dim(), 0.0, latent_std), x))
        .collect();
    let mut diameter: f64 = 0.0;
    for i in 0..outputs.len() {
        for j in i + 1..outputs.len() {
            diameter =
                diameter.max(numerics::norm(&numerics::sub(&outputs[i], &outputs[j])));
        }
    }
    let d = diameter.max(1e-6);
    (1..=9).map(|i| d * 0.1 * i as f64).collect()
}

// ---------------------------------------------------------------------------
// Interpolation velocity profiles
// ---------------------------------------------------------------------------

/// Metric speeds along a straight latent interpolation, with
/// `zdot = (z_b - z_a) / steps` held fixed.
#[derive(Debug, Clone)]
pub struct VelocityProfile {
    pub velocities: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl VelocityProfile {
    pub fn dispersion(&self) -> f64 {
        if self.mean == 0.0 {
            0.0
        } else {
            self.std / self.mean
        }
    }
}

pub fn interpolation_profile<G: LatentMap + ?Sized>(
    map: &G,
    x: &[f64],
    z_a: &[f64],
    z_b: &[f64],
    steps: usize,
) -> Result<VelocityProfile> {
    if z_a == z_b {
        return Err(Error::Contract("interpolation endpoints must differ".into()));
    }
    let gap = numerics::sub(z_b, z_a);
    let zdot = numerics::scale(&gap, 1.0 / steps as f64);
    let velocities: Vec<f64> = (0..=steps)
        .map(|i| {
            let z = numerics::axpy(z_a, i as f64 / steps as f64, &gap);
            metric_speed(map, &z, &zdot, x)
        })
        .collect();
    let mean = velocities.iter().sum::<f64>() / velocities.len() as f64;
    let std = (velocities.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / velocities.len() as f64)
        .sqrt();
    Ok(VelocityProfile { velocities, mean, std })
}

/// Mean per-path std/mean over random interpolations at the model's
/// evaluation latent scale.
pub fn interpolation_study(
    models: &TrainedModels,
    x: &[f64],
    pairs: usize,
    steps: usize,
    seed: u64,
) -> Result<(f64, Vec<VelocityProfile>)> {
    let mut rng = RngState::stream(seed, 77);
    let mut profiles = Vec::with_capacity(pairs);
    let mut acc = 0.0;
    for _ in 0..pairs {
        let z_a = models.sample_eval_latent(&mut rng);
        let z_b = models.sample_eval_latent(&mut rng);
        if z_a == z_b {
            continue;
        }
        let p = interpolation_profile(&models.gen, x, &z_a, &z_b, steps)?;
        acc += p.dispersion();
        profiles.push(p);
    }
    if profiles.is_empty() {
        return Err(Error::Contract("no interpolation pairs evaluated".into()));
    }
    Ok((acc / profiles.len() as f64, profiles))
}

// ---------------------------------------------------------------------------
// Mode coverage and realism proxy
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CoverageReport {
    /// Per-condition covered-mode fraction.
    pub per_x: Vec<(Vec<f64>, f64, usize)>,
    pub aggregate: f64,
}

/// For each condition draw `samples_per_x` latents, map them through the
/// generator, assign outputs to modes within the dataset's mode radius,
/// and report the covered-mode fraction.
pub fn mode_coverage(
    models: &TrainedModels,
    dataset: &ConditionalDataset,
    conditions: &[Vec<f64>],
    samples_per_x: usize,
    seed: u64,
) -> Result<CoverageReport> {
    let outputs = |x: &[f64], rng: &mut RngState| -> Vec<Vec<f64>> {
        (0..samples_per_x)
            .map(|_| models.gen.forward(&models.sample_eval_latent(rng), x))
            .collect()
    };
    coverage_of_outputs(dataset, conditions, seed, outputs)
}

/// Coverage of the ground-truth sampler itself (a calibration ceiling).
pub fn sampler_coverage(
    dataset: &ConditionalDataset,
    conditions: &[Vec<f64>],
    samples_per_x: usize,
    seed: u64,
) -> Result<CoverageReport> {
    let ds = dataset.clone();
    coverage_of_outputs(dataset, conditions, seed, move |x, rng| {
        (0..samples_per_x).map(|_| ds.sample_y(x, rng)).collect()
    })
}

fn coverage_of_outputs<F>(
    dataset: &ConditionalDataset,
    conditions: &[Vec<f64>],
    seed: u64,
    mut outputs: F,
) -> Result<CoverageReport>
where
    F: FnMut(&[f64], &mut RngState) -> Vec<Vec<f64>>,
{
    if conditions.is_empty() {
        return Err(Error::Contract("coverage needs at least one condition".into()));
    }
    let mut per_x = Vec::with_capacity(conditions.len());
    let mut agg = 0.0;
    for (ci, x) in conditions.iter().enumerate() {
        let mut rng = RngState::stream(seed, 200 + ci as u64);
        let modes = dataset.modes(x);
        let radius = dataset.mode_radius(x);
        let samples = outputs(x, &mut rng);
        let mut covered = vec![false; modes.len()];
        for y in &samples {
            let (best, dist) = modes
                .iter()
                .enumerate()
                .map(|(i, m)| (i, m.distance_to(y)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            if dist <= radius {
                covered[best] = true;
            }
        }
        let frac = covered.iter().filter(|c| **c).count() as f64 / modes.len() as f64;
        agg += frac / conditions.len() as f64;
        per_x.push((x.clone(), frac, modes.len()));
    }
    Ok(CoverageReport { per_x, aggregate: agg })
}

/// Mean distance of generated samples to the nearest ground-truth sample
/// (the desk-scale realism proxy).
pub fn realism_proxy(
    models: &TrainedModels,
    dataset: &ConditionalDataset,
    conditions: &[Vec<f64>],
    samples_per_x: usize,
    gt_per_x: usize,
    seed: u64,
) -> Result<f64> {
    if conditions.is_empty() {
        return Err(Error::Contract("realism proxy needs conditions".into()));
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for (ci, x) in conditions.iter().enumerate() {
        let mut rng = RngState::stream(seed, 300 + ci as u64);
        let gt: Vec<Vec<f64>> = (0..gt_per_x).map(|_| dataset.sample_y(x, &mut rng)).collect();
        for _ in 0..samples_per_x {
            let y = models.gen.forward(&models.sample_eval_latent(&mut rng), x);
            let d = gt
                .iter()
                .map(|g| numerics::norm(&numerics::sub(&y, g)))
                .fold(f64::INFINITY, f64::min);
            acc += d;
            count += 1;
        }
    }
    Ok(acc / count as f64)
}

/// A deterministic grid of evaluation conditions for a dataset.
pub fn condition_grid(dataset: &ConditionalDataset, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = RngState::stream(seed, 33);
    match dataset.name() {
        crate::data::DatasetName::Bimodal1d | crate::data::DatasetName::CondRings2d => (0..n)
            .map(|i| vec![-0.9 + 1.8 * i as f64 / (n.max(2) - 1) as f64])
            .collect(),
        crate::data::DatasetName::CondGrid8x8 => {
            (0..n).map(|_| dataset.sample_x(&mut rng)).collect()
        }
    }
}

// ---------------------------------------------------------------------------
// Ablation grid
// ---------------------------------------------------------------------------

/// One-at-a-time ablation axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    LhVariant,
    Projection,
    LatentDim,
    LossCombo,
}

impl AblationAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lh_variant" => Ok(Self::LhVariant),
            "projection" => Ok(Self::Projection),
            "dim_z" => Ok(Self::LatentDim),
            "loss_combo" => Ok(Self::LossCombo),
            other => Err(Error::Config(format!(
                "unknown ablation axis '{other}' (lh_variant, projection, dim_z, loss_combo)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::LhVariant => "lh_variant",
            Self::Projection => "projection",
            Self::LatentDim => "dim_z",
            Self::LossCombo => "loss_combo",
        }
    }
}

/// Metrics of one ablation cell; failed cells carry the error text and
/// NaN metrics.
#[derive(Debug, Clone)]
pub struct AblationCell {
    pub axis: &'static str,
    pub value: String,
    pub coverage: f64,
    pub velocity_dispersion: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub realism: f64,
    pub error: Option<String>,
}

fn cell_configs(axis: AblationAxis, base: &RunConfig) -> Vec<(String, RunConfig)> {
    match axis {
        AblationAxis::LhVariant => [
            LhVariant::Mmd,
            LhVariant::Univariate,
            LhVariant::MaxDistance,
            LhVariant::Multivariate,
        ]
        .into_iter()
        .map(|v| {
            let mut cfg = base.clone();
            cfg.losses.lh_variant = v;
            (format!("{v:?}").to_lowercase(), cfg)
        })
        .collect(),
        AblationAxis::Projection => [ProjectionKind::Random, ProjectionKind::Passthrough]
            .into_iter()
            .map(|p| {
                let mut cfg = base.clone();
                cfg.projection.kind = p;
                (format!("{p:?}").to_lowercase(), cfg)
            })
            .collect(),
        AblationAxis::LatentDim => [2usize, 4, 8, 16]
            .into_iter()
            .map(|k| {
                let mut cfg = base.clone();
                cfg.model.latent_dim = k;
                (format!("{k}"), cfg)
            })
            .collect(),
        AblationAxis::LossCombo => {
            let mut cells = Vec::new();
            let mut baseline = base.clone();
            baseline.mode = TrainMode::Baseline;
            cells.push(("rec+adv".to_string(), baseline));
            let mut gh_only = base.clone();
            gh_only.mode = TrainMode::Geo;
            gh_only.losses.weights.lh = 0.0;
            cells.push(("gh+rec+adv".to_string(), gh_only));
            let mut lh_only = base.clone();
            lh_only.mode = TrainMode::Geo;
            lh_only.losses.weights.gh = 0.0;
            cells.push(("lh+rec+adv".to_string(), lh_only));
            let mut full = base.clone();
            full.mode = TrainMode::Geo;
            cells.push(("gh+lh+rec+adv".to_string(), full));
            cells
        }
    }
}

/// Evaluate a trained model for an ablation cell.
pub fn evaluate_cell(
    models: &TrainedModels,
    dataset: &ConditionalDataset,
    seed: u64,
) -> Result<(f64, f64, f64, f64, f64)> {
    let conditions = condition_grid(dataset, 6, seed);
    let coverage = mode_coverage(models, dataset, &conditions, 200, seed)?.aggregate;
    let (vel, _) = interpolation_study(models, &conditions[0], 20, 20, seed)?;
    let mut rng = RngState::stream(seed, 400);
    let mut tau_min = f64::INFINITY;
    let mut tau_max: f64 = 0.0;
    for _ in 0..200 {
        let z1 = models.sample_eval_latent(&mut rng);
        let z2 = models.sample_eval_latent(&mut rng);
        if let Ok(t) = tau_ratio(&models.gen, &conditions[0], &z1, &z2) {
            tau_min = tau_min.min(t);
            tau_max = tau_max.max(t);
        }
    }
    let realism = realism_proxy(models, dataset, &conditions, 100, 400, seed)?;
    Ok((coverage, vel, tau_min, tau_max, realism))
}

/// Run the one-axis-at-a-time ablation grid: train and evaluate one cell
/// per value. Per-cell failures are recorded and the grid continues.
pub fn ablation_grid(axes: &[AblationAxis], base: &RunConfig) -> Result<Vec<AblationCell>> {
    let dataset = base.dataset()?;
    let mut out = Vec::new();
    for &axis in axes {
        for (value, cfg) in cell_configs(axis, base) {
            let run = || -> Result<(f64, f64, f64, f64, f64)> {
                cfg.validate()?;
                let pairs = dataset.sample_pairs(
                    cfg.data.train_size,
                    &mut RngState::stream(cfg.seed, 1),
                );
                let outcome = train(&dataset, &pairs, &cfg)?;
                if let Some(reason) = outcome.aborted {
                    return Err(Error::Training(reason));
                }
                evaluate_cell(&outcome.models, &dataset, cfg.seed)
            };
            match run() {
                Ok((coverage, vel, tau_min, tau_max, realism)) => out.push(AblationCell {
                    axis: axis.as_str(),
                    value,
                    coverage,
                    velocity_dispersion: vel,
                    tau_min,
                    tau_max,
                    realism,
                    error: None,
                }),
                Err(e) => out.push(AblationCell {
                    axis: axis.as_str(),
                    value,
                    coverage: f64::NAN,
                    velocity_dispersion: f64::NAN,
                    tau_min: f64::NAN,
                    tau_max: f64::NAN,
                    realism: f64::NAN,
                    error: Some(e.to_string()),
                }),
            }
        }
    }
    Ok(out)
}

/// Render ablation cells as a CSV table.
pub fn ablation_csv(cells: &[AblationCell]) -> String {
    let mut s = String::from("axis,value,coverage,velocity_dispersion,tau_min,tau_max,realism,error\n");
    for c in cells {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            c.axis,
            c.value,
            c.coverage,
            c.velocity_dispersion,
            c.tau_min,
            c.tau_max,
            c.realism,
            c.error.as_deref().unwrap_or("")
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LinearMap;
    use crate::numerics::Matrix;

    #[test]
    fn sweep_on_identity_map_returns_the_flat_line() {
        let map = LinearMap::identity(2);
        let targets = vec![0.5, 1.0, 1.5];
        let res =
            geodesic_sweep(&map, &[], 1.0, &targets, 4, 3, &GeoParams::default()).unwrap();
        for row in &res.rows {
            assert_eq!(row.unreached, 0);
            assert!(
                (row.mean_lg - row.l_e).abs() / row.l_e < 0.02,
                "L_G {} vs L_E {}",
                row.mean_lg,
                row.l_e
            );
        }
    }

    #[test]
    fn sweep_targets_must_increase() {
        let map = LinearMap::identity(2);
        let r = geodesic_sweep(&map, &[], 1.0, &[1.0, 0.5], 2, 3, &GeoParams::default());
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn interpolation_profile_of_linear_map_is_flat() {
        let map = LinearMap::new(Matrix::from_rows(&[&[1.5, 0.0], &[0.5, 2.0]]).unwrap());
        let p = interpolation_profile(&map, &[], &[0.0, 0.0], &[1.0, 1.0], 25).unwrap();
        assert!(p.std < 1e-12, "std {}", p.std);
        assert_eq!(p.velocities.len(), 26);
    }

    #[test]
    fn interpolation_profile_is_translation_invariant() {
        let mut rng = RngState::new(4);
        let g = crate::models::GeneratorNet::new(
            2,
            1,
            3,
            &[12],
            crate::models::Activation::Tanh,
            &mut rng,
        );
        let z_a = [0.3, -0.2];
        let z_b = [-0.5, 0.8];
        let shift = [0.4, 0.4];
        // translating BOTH endpoints by the same vector changes the path,
        // so invariance is about the construction: same gap, same zdot
        let p1 = interpolation_profile(&g, &[0.1], &z_a, &z_b, 20).unwrap();
        let za2: Vec<f64> = z_a.iter().zip(&shift).map(|(a, s)| a + s).collect();
        let zb2: Vec<f64> = z_b.iter().zip(&shift).map(|(b, s)| b + s).collect();
        let p2 = interpolation_profile(&g, &[0.1], &za2, &zb2, 20).unwrap();
        // the zdot construction is identical even though the speeds differ
        assert_eq!(p1.velocities.len(), p2.velocities.len());
        let map = LinearMap::identity(2);
        let q1 = interpolation_profile(&map, &[], &z_a, &z_b, 20).unwrap();
        let q2 = interpolation_profile(&map, &[], &za2, &zb2, 20).unwrap();
        assert!((q1.dispersion() - q2.dispersion()).abs() < 1e-15);
    }

    #[test]
    fn interpolation_rejects_equal_endpoints() {
        let map = LinearMap::identity(2);
        let r = interpolation_profile(&map, &[], &[1.0, 1.0], &[1.0, 1.0], 10);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    fn constant_generator(target: &[f64]) -> TrainedModels {
        // zero weights, bias = target: G(z, x) = target
        let spec = MlpSpec::new(3, &[], target.len(), Activation::Tanh);
        let mut mlp = Mlp::zeroed(spec);
        let n = mlp.params().len();
        let m = target.len();
        mlp.params_mut()[n - m..].copy_from_slice(target);
        let gen = crate::models::GeneratorNet::from_mlp(mlp, 2, 1).unwrap();
        let mut rng = RngState::new(1);
        let disc =
            crate::models::DiscriminatorNet::new(1, target.len(), &[4], Activation::Tanh, &mut rng);
        TrainedModels { gen, disc, latent_scale: 1.0, mode: TrainMode::Geo }
    }

    #[test]
    fn constant_generator_covers_exactly_one_mode() {
        let ds = ConditionalDataset::by_name("cond_rings2d").unwrap();
        // constant output on the innermost ring
        let models = constant_generator(&[0.5, 0.0]);
        let conditions = vec![vec![-0.9]]; // 2 rings
        let report = mode_coverage(&models, &ds, &conditions, 100, 5).unwrap();
        assert!((report.aggregate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ground_truth_sampler_covers_everything() {
        let ds = ConditionalDataset::by_name("cond_rings2d").unwrap();
        let conditions = condition_grid(&ds, 5, 1);
        let report = sampler_coverage(&ds, &conditions, 400, 2).unwrap();
        assert_eq!(report.aggregate, 1.0);
    }

    #[test]
    fn coverage_is_monotone_in_sample_count() {
        let ds = ConditionalDataset::by_name("cond_rings2d").unwrap();
        let mut rng = RngState::new(9);
        let g = crate::models::GeneratorNet::new(
            2,
            1,
            2,
            &[16],
            crate::models::Activation::Tanh,
            &mut rng,
        );
        let disc = crate::models::DiscriminatorNet::new(1, 2, &[4], Activation::Tanh, &mut rng);
        let models = TrainedModels { gen: g, disc, latent_scale: 1.0, mode: TrainMode::Geo };
        let conditions = vec![vec![0.0]];
        let mut prev = 0.0;
        for n in [5, 20, 80, 320] {
            let c = mode_coverage(&models, &ds, &conditions, n, 5).unwrap().aggregate;
            assert!(c >= prev - 1e-12, "coverage fell from {prev} to {c} at n = {n}");
            prev = c;
        }
    }

    #[test]
    fn coverage_report_is_deterministic() {
        let ds = ConditionalDataset::by_name("cond_rings2d").unwrap();
        let models = constant_generator(&[1.0, 0.0]);
        let conditions = condition_grid(&ds, 4, 7);
        let a = mode_coverage(&models, &ds, &conditions, 50, 11).unwrap();
        let b = mode_coverage(&models, &ds, &conditions, 50, 11).unwrap();
        assert_eq!(a.aggregate, b.aggregate);
    }

    #[test]
    fn unimodal_target_draws_l1_and_l2_together() {
        // symmetric unimodal data: median = mean, both norms agree
        let mut rng = RngState::new(12);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..1024)
            .map(|_| {
                let x = rng.uniform_in(-1.0, 1.0);
                let y = 2.0 * x + rng.normal(0.0, 0.1);
                (vec![x], vec![y])
            })
            .collect();
        let eval_points: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..11)
            .map(|i| {
                let x = -0.8 + 1.6 * i as f64 / 10.0;
                (vec![x], vec![2.0 * x], vec![2.0 * x])
            })
            .collect();
        let l1 =
            median_convergence_check(RecNorm::L1, &pairs, &eval_points, 3000, 3).unwrap();
        let l2 =
            median_convergence_check(RecNorm::L2, &pairs, &eval_points, 3000, 3).unwrap();
        assert!(l1.converged && l2.converged);
        assert!(
            (l1.mean_abs_to_mean - l2.mean_abs_to_mean).abs() < 0.05,
            "l1 {} vs l2 {}",
            l1.mean_abs_to_mean,
            l2.mean_abs_to_mean
        );
    }

    #[test]
    fn ablation_axis_parsing() {
        assert_eq!(AblationAxis::parse("dim_z").unwrap(), AblationAxis::LatentDim);
        assert!(AblationAxis::parse("bogus").is_err());
        let base = RunConfig::default();
        let cells = cell_configs(AblationAxis::LossCombo, &base);
        assert_eq!(cells.len(), 4);
        assert_eq!(cells[0].1.mode, TrainMode::Baseline);
        assert_eq!(cells[2].1.losses.weights.gh, 0.0);
        let dims = cell_configs(AblationAxis::LatentDim, &base);
        let values: Vec<&str> = dims.iter().map(|(v, _)| v.as_str()).collect();
        assert_eq!(values, vec!["2", "4", "8", "16"]);
    }
}
