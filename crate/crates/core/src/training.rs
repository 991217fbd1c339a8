//! The two-phase training procedure and its optimizer.
//!
//! Per sample, the inner phase walks the latent code along a fixed
//! direction (the gradient of the output-space distance to the target)
//! for `T` steps, updating the generator so intermediate outputs track
//! the chord between the anchor output and the target. The outer phase
//! then matches the generated neighborhood around the walk endpoint to a
//! perturbed target neighborhood (second-moment KL), adds reconstruction
//! and adversarial terms, and steps both networks.

use crate::config::{ProjectionKind, RunConfig, TrainMode, WalkScaling};
use crate::data::{perturb, ConditionalDataset};
use crate::error::{Error, Result};
use crate::geometry::{metric_speed, tau_ratio};
use crate::linalg::{Projection, RandomProjection};
use crate::losses::{
    self, adv_disc_tape, adv_gen_tape, gh_loss_tape, rec_loss_tape, KlParams, LhVariant,
    LossComponents, Schedule,
};
use crate::models::{DiscriminatorNet, GeneratorNet};
use crate::numerics::{self, Matrix, RngState, Tape, Var};
use crate::runlog::MetricsLog;

// RNG stream allocation: one generator per concern so reordering one
// phase never shifts another phase's draws.
const STREAM_GEN_INIT: u64 = 2;
const STREAM_DISC_INIT: u64 = 3;
const STREAM_LOOP: u64 = 4;
const STREAM_DIAG: u64 = 5;

/// First/second moment buffers and step counter of Adam.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    pub fn from_parts(m: Vec<f64>, v: Vec<f64>, t: u64) -> Self {
        debug_assert_eq!(m.len(), v.len());
        Self { m, v, t }
    }

    /// One bias-corrected Adam update in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, b1: f64, b2: f64, eps: f64) {
        assert_eq!(params.len(), self.m.len(), "adam dimension");
        assert_eq!(grad.len(), self.m.len(), "gradient dimension");
        self.t += 1;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Uniform sample from the k-ball of radius `r`.
pub fn sample_latent_ball(k: usize, r: f64, rng: &mut RngState) -> Result<Vec<f64>> {
    if r <= 0.0 {
        return Err(Error::Contract(format!("ball radius must be > 0, got {r}")));
    }
    Ok(rng.in_ball(k, r))
}

/// Walk direction: the gradient of the l1 output distance with respect
/// to the latent code at the walk start, held constant over the walk.
pub fn curve_velocity(g: &GeneratorNet, z_t0: &[f64], x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut tape = Tape::new();
    let z = tape.input_vec(z_t0);
    let (out, _) = g.record(&mut tape, z, x, false);
    let target = tape.constant_vec(y);
    let diff = tape.sub(target, out);
    let loss = tape.l1_norm(diff);
    let grads = tape.backward(loss).expect("scalar loss");
    grads.wrt(z, &tape).data().to_vec()
}

/// Effective latent step under `capped` scaling: the configured step,
/// rescaled by `1/|V|` when the walk direction is longer than unit.
fn effective_step(eta: f64, v_norm: f64) -> f64 {
    if v_norm > 1.0 {
        eta / v_norm
    } else {
        eta
    }
}

/// Effective latent step under `proportional` scaling: the whole walk
/// covers `eta * |y - G(z0)|` in latent space over its T steps.
fn proportional_step(eta: f64, v_norm: f64, output_gap: f64, t_steps: usize) -> f64 {
    eta * output_gap / (t_steps as f64 * v_norm.max(1e-9))
}

/// Inner phase: `T` walk-loss updates of the generator while the latent
/// code moves by `eta V` plus noise per step. Returns the walk endpoint
/// and the mean walk loss.
pub fn inner_geodesic_phase(
    g: &mut GeneratorNet,
    adam: &mut AdamState,
    z_t0: &[f64],
    x: &[f64],
    y: &[f64],
    cfg: &RunConfig,
    rng: &mut RngState,
) -> Result<(Vec<f64>, f64)> {
    let t_steps = cfg.train.inner_steps;
    let sched = Schedule::new(cfg.losses.schedule, t_steps as f64);
    let velocity = curve_velocity(g, z_t0, x, y);
    let v_norm = numerics::norm(&velocity);
    let eta = match cfg.train.walk_scaling {
        WalkScaling::Capped => effective_step(cfg.train.latent_step, v_norm),
        WalkScaling::Proportional => {
            let anchor = g.forward(z_t0, x);
            let gap = numerics::norm(&numerics::sub(y, &anchor));
            proportional_step(cfg.train.latent_step, v_norm, gap, t_steps)
        }
    };
    let mut z = z_t0.to_vec();
    let mut loss_acc = 0.0;
    for t in 0..t_steps {
        let mut tape = Tape::new();
        let (loss_var, leaves) = gh_loss_tape(
            &mut tape,
            g,
            t as f64,
            &z,
            z_t0,
            y,
            x,
            &sched,
            cfg.losses.gh_literal_sign,
        );
        let loss = tape.scalar(loss_var);
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite walk loss at inner step {t}")));
        }
        loss_acc += loss;
        let grads = tape.backward(loss_var)?;
        let flat = g.mlp().flat_grad(&tape, &grads, &leaves);
        adam.step(
            g.mlp_mut().params_mut(),
            &flat,
            cfg.train.lr,
            cfg.train.adam_beta1,
            cfg.train.adam_beta2,
            cfg.train.adam_eps,
        );
        for zc in z.iter_mut() {
            *zc += rng.normal(0.0, cfg.train.latent_noise);
        }
        for (zc, vc) in z.iter_mut().zip(&velocity) {
            *zc += eta * vc;
        }
    }
    Ok((z, loss_acc / t_steps as f64))
}

/// Build the run's projection operator for the moment-matching loss.
pub fn build_projection(cfg: &RunConfig, out_dim: usize) -> Result<Projection> {
    match cfg.projection.kind {
        ProjectionKind::Passthrough => Ok(Projection::PassThrough { dim: out_dim }),
        ProjectionKind::Random => {
            let h = cfg.projection_dim(out_dim);
            Ok(Projection::Sparse(RandomProjection::generate(out_dim, h, cfg.seed)?))
        }
    }
}

/// Outer phase: neighborhood moment matching plus reconstruction and
/// adversarial terms; one Adam step on the generator, then one on the
/// discriminator (1:1).
#[allow(clippy::too_many_arguments)]
pub fn outer_update(
    g: &mut GeneratorNet,
    d: &mut DiscriminatorNet,
    adam_g: &mut AdamState,
    adam_d: &mut AdamState,
    z_t: &[f64],
    x: &[f64],
    y: &[f64],
    cfg: &RunConfig,
    proj: &Projection,
    kl: &KlParams,
    rng: &mut RngState,
) -> Result<LossComponents> {
    let b = cfg.train.batch;
    let eps2 = cfg.train.neighborhood_std;
    let m_dim = g.output_dim();
    let w = cfg.losses.weights;

    // latent and target neighborhoods
    let z_tilde: Vec<Vec<f64>> = (0..b)
        .map(|_| z_t.iter().map(|&c| c + rng.normal(0.0, eps2)).collect())
        .collect();
    let mut y_tilde_flat = Vec::with_capacity(b * m_dim);
    for _ in 0..b {
        y_tilde_flat.extend(perturb(y, &cfg.perturb, rng));
    }
    let y_tilde = Matrix::from_vec(b, m_dim, y_tilde_flat)?;

    let mut tape = Tape::new();
    let leaves = g.mlp().param_leaves(&mut tape, true);
    let outs: Vec<Var> = z_tilde
        .iter()
        .map(|z| {
            let zv = tape.constant_vec(z);
            g.record_with(&mut tape, zv, x, &leaves)
        })
        .collect();

    let lh_var = if w.lh == 0.0 {
        // loss-combo ablation: skip the moment machinery entirely
        tape.constant(Matrix::from_vec(1, 1, vec![0.0])?)
    } else {
        match cfg.losses.lh_variant {
            LhVariant::Multivariate => {
                let tgt = losses::estimate_moments(&y_tilde, proj, kl.reg_lambda)?;
                let projected: Vec<Var> = match proj {
                    Projection::PassThrough { .. } => outs.clone(),
                    Projection::Sparse(p) => {
                        let rt = tape.constant(p.matrix().transpose());
                        outs.iter().map(|&o| tape.matmul(rt, o)).collect()
                    }
                };
                losses::lh_loss_tape(&mut tape, &projected, &tgt, kl)?
            }
            LhVariant::Univariate => {
                losses::lh_loss_univariate_tape(&mut tape, &outs, &y_tilde, kl.reg_lambda)?
            }
            LhVariant::MaxDistance => losses::lh_loss_maxdist_tape(&mut tape, &outs)?,
            LhVariant::Mmd => {
                losses::lh_loss_mmd_tape(&mut tape, &outs, &y_tilde, cfg.losses.mmd_bandwidth)?
            }
        }
    };

    // reconstruction and adversarial terms at the walk endpoint
    let zt_v = tape.constant_vec(z_t);
    let out_t = g.record_with(&mut tape, zt_v, x, &leaves);
    let y_fake = tape.value(out_t).data().to_vec();
    let rec_var = rec_loss_tape(&mut tape, y, out_t, cfg.losses.rec_norm);
    let adv_var = adv_gen_tape(&mut tape, d, x, out_t);

    let components = LossComponents {
        gh: 0.0,
        lh: tape.scalar(lh_var),
        rec: tape.scalar(rec_var),
        adv: tape.scalar(adv_var),
    };
    losses::total_loss(&components, &w)?; // finite-ness gate, named per component

    let lh_w = tape.scale(lh_var, w.lh);
    let rec_w = tape.scale(rec_var, w.rec);
    let adv_w = tape.scale(adv_var, w.adv);
    let partial = tape.add(lh_w, rec_w);
    let total = tape.add(partial, adv_w);
    let grads = tape.backward(total)?;
    let flat = g.mlp().flat_grad(&tape, &grads, &leaves);
    adam_g.step(
        g.mlp_mut().params_mut(),
        &flat,
        cfg.train.lr,
        cfg.train.adam_beta1,
        cfg.train.adam_beta2,
        cfg.train.adam_eps,
    );

    // discriminator step against the pre-update generator output
    let mut dtape = Tape::new();
    let (d_loss_var, d_leaves) = adv_disc_tape(&mut dtape, d, x, y, &y_fake);
    let d_loss = dtape.scalar(d_loss_var);
    if !d_loss.is_finite() {
        return Err(Error::Training(format!("non-finite discriminator loss: {d_loss}")));
    }
    let d_grads = dtape.backward(d_loss_var)?;
    let d_flat = d.mlp().flat_grad(&dtape, &d_grads, &d_leaves);
    adam_d.step(
        d.mlp_mut().params_mut(),
        &d_flat,
        cfg.train.lr,
        cfg.train.adam_beta1,
        cfg.train.adam_beta2,
        cfg.train.adam_eps,
    );

    Ok(components)
}

/// Baseline step: plain conditional GAN (reconstruction + adversarial),
/// no walk, no neighborhood matching.
fn baseline_update(
    g: &mut GeneratorNet,
    d: &mut DiscriminatorNet,
    adam_g: &mut AdamState,
    adam_d: &mut AdamState,
    z: &[f64],
    x: &[f64],
    y: &[f64],
    cfg: &RunConfig,
) -> Result<LossComponents> {
    let w = cfg.losses.weights;
    let mut tape = Tape::new();
    let leaves = g.mlp().param_leaves(&mut tape, true);
    let zv = tape.constant_vec(z);
    let out = g.record_with(&mut tape, zv, x, &leaves);
    let y_fake = tape.value(out).data().to_vec();
    let rec_var = rec_loss_tape(&mut tape, y, out, cfg.losses.rec_norm);
    let adv_var = adv_gen_tape(&mut tape, d, x, out);
    let components = LossComponents {
        gh: 0.0,
        lh: 0.0,
        rec: tape.scalar(rec_var),
        adv: tape.scalar(adv_var),
    };
    losses::total_loss(&components, &w)?;
    let rec_w = tape.scale(rec_var, w.rec);
    let adv_w = tape.scale(adv_var, w.adv);
    let total = tape.add(rec_w, adv_w);
    let grads = tape.backward(total)?;
    let flat = g.mlp().flat_grad(&tape, &grads, &leaves);
    adam_g.step(
        g.mlp_mut().params_mut(),
        &flat,
        cfg.train.lr,
        cfg.train.adam_beta1,
        cfg.train.adam_beta2,
        cfg.train.adam_eps,
    );

    let mut dtape = Tape::new();
    let (d_loss_var, d_leaves) = adv_disc_tape(&mut dtape, d, x, y, &y_fake);
    let d_grads = dtape.backward(d_loss_var)?;
    let d_flat = d.mlp().flat_grad(&dtape, &d_grads, &d_leaves);
    adam_d.step(
        d.mlp_mut().params_mut(),
        &d_flat,
        cfg.train.lr,
        cfg.train.adam_beta1,
        cfg.train.adam_beta2,
        cfg.train.adam_eps,
    );
    Ok(components)
}

/// A trained generator/discriminator pair plus the latent scale the
/// generator was exercised at (used to sample evaluation latents).
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub gen: GeneratorNet,
    pub disc: DiscriminatorNet,
    pub latent_scale: f64,
    pub mode: TrainMode,
}

impl TrainedModels {
    /// Draw an evaluation latent code: centered Gaussian at the scale the
    /// training actually exercised.
    pub fn sample_eval_latent(&self, rng: &mut RngState) -> Vec<f64> {
        rng.normal_vec(self.gen.latent_dim(), 0.0, self.latent_scale)
    }
}

/// Result of a training run. On a phase failure the models hold the last
/// valid state and `aborted` carries the cause.
#[derive(Debug)]
pub struct TrainOutput {
    pub models: TrainedModels,
    pub log: MetricsLog,
    pub aborted: Option<String>,
}

/// Run the full training loop over the dataset. Deterministic given
/// `(pairs, cfg)`: every random draw comes from streams of `cfg.seed`.
pub fn train(
    dataset: &ConditionalDataset,
    pairs: &[(Vec<f64>, Vec<f64>)],
    cfg: &RunConfig,
) -> Result<TrainOutput> {
    if pairs.is_empty() {
        return Err(Error::Contract("training needs a non-empty dataset".into()));
    }
    cfg.validate()?;
    let k = cfg.model.latent_dim;
    let d_dim = dataset.cond_dim();
    let m_dim = dataset.out_dim();
    let act = cfg.model.activation;

    let mut gen = GeneratorNet::new(
        k,
        d_dim,
        m_dim,
        &cfg.model.hidden,
        act,
        &mut RngState::stream(cfg.seed, STREAM_GEN_INIT),
    );
    let mut disc = DiscriminatorNet::new(
        d_dim,
        m_dim,
        &cfg.model.disc_hidden,
        act,
        &mut RngState::stream(cfg.seed, STREAM_DISC_INIT),
    );
    let mut adam_g = AdamState::new(gen.params().len());
    let mut adam_d = AdamState::new(disc.params().len());
    let mut rng = RngState::stream(cfg.seed, STREAM_LOOP);
    let mut diag_rng = RngState::stream(cfg.seed, STREAM_DIAG);
    let proj = build_projection(cfg, m_dim)?;
    let kl = cfg.kl_params()?;
    let probe_x = dataset.sample_x(&mut diag_rng);

    let mut log = MetricsLog::new();
    let mut latent_scale = if cfg.mode == TrainMode::Geo { cfg.train.neighborhood_std } else { 1.0 };
    let mut snapshot =
        TrainedModels { gen: gen.clone(), disc: disc.clone(), latent_scale, mode: cfg.mode };

    for epoch in 0..cfg.train.epochs as u32 {
        let mut sums = [0.0f64; 4]; // gh, lh, rec, adv
        let mut zt_sq = 0.0;
        for (x, y) in pairs {
            let step = || -> Result<LossComponents> {
                match cfg.mode {
                    TrainMode::Geo => {
                        let z0 = sample_latent_ball(k, cfg.train.ball_radius, &mut rng)?;
                        // with the walk loss disabled (loss-combo ablation)
                        // the latent code stays at its sampled start
                        let (z_t, gh_val) = if cfg.losses.weights.gh == 0.0 {
                            (z0, 0.0)
                        } else {
                            inner_geodesic_phase(
                                &mut gen, &mut adam_g, &z0, x, y, cfg, &mut rng,
                            )?
                        };
                        zt_sq += numerics::dot(&z_t, &z_t);
                        let mut c = outer_update(
                            &mut gen, &mut disc, &mut adam_g, &mut adam_d, &z_t, x, y, cfg,
                            &proj, &kl, &mut rng,
                        )?;
                        c.gh = gh_val;
                        Ok(c)
                    }
                    TrainMode::Baseline => {
                        let z = rng.normal_vec(k, 0.0, 1.0);
                        baseline_update(
                            &mut gen, &mut disc, &mut adam_g, &mut adam_d, &z, x, y, cfg,
                        )
                    }
                }
            };
            match std::panic::catch_unwind(std::panic::AssertUnwindSafe(step)) {
                Ok(Ok(c)) => {
                    sums[0] += c.gh;
                    sums[1] += c.lh;
                    sums[2] += c.rec;
                    sums[3] += c.adv;
                }
                Ok(Err(e)) => {
                    return Ok(TrainOutput {
                        models: snapshot,
                        log,
                        aborted: Some(format!("epoch {epoch}: {e}")),
                    });
                }
                Err(_) => {
                    return Ok(TrainOutput {
                        models: snapshot,
                        log,
                        aborted: Some(format!("epoch {epoch}: numerical panic in training step")),
                    });
                }
            }
        }

        let n = pairs.len() as f64;
        if cfg.mode == TrainMode::Geo {
            latent_scale = (zt_sq / (n * k as f64) + cfg.train.neighborhood_std.powi(2)).sqrt();
        }
        log.append(epoch, "loss_gh", sums[0] / n)?;
        log.append(epoch, "loss_lh", sums[1] / n)?;
        log.append(epoch, "loss_rec", sums[2] / n)?;
        log.append(epoch, "loss_adv", sums[3] / n)?;
        let total = cfg.losses.weights.gh * sums[0] / n
            + cfg.losses.weights.lh * sums[1] / n
            + cfg.losses.weights.rec * sums[2] / n
            + cfg.losses.weights.adv * sums[3] / n;
        log.append(epoch, "loss_total", total)?;
        log.append(epoch, "latent_scale", latent_scale)?;

        // cheap geometric diagnostics on a fixed probe condition
        let mut tau_min = f64::INFINITY;
        let mut tau_max: f64 = 0.0;
        for _ in 0..64 {
            let z1 = diag_rng.normal_vec(k, 0.0, latent_scale);
            let z2 = diag_rng.normal_vec(k, 0.0, latent_scale);
            if let Ok(t) = tau_ratio(&gen, &probe_x, &z1, &z2) {
                tau_min = tau_min.min(t);
                tau_max = tau_max.max(t);
            }
        }
        log.append(epoch, "tau_min", tau_min)?;
        log.append(epoch, "tau_max", tau_max)?;
        let za = diag_rng.normal_vec(k, 0.0, latent_scale);
        let zb = diag_rng.normal_vec(k, 0.0, latent_scale);
        log.append(epoch, "velocity_std_over_mean", velocity_dispersion(&gen, &probe_x, &za, &zb))?;

        snapshot =
            TrainedModels { gen: gen.clone(), disc: disc.clone(), latent_scale, mode: cfg.mode };
    }

    Ok(TrainOutput {
        models: TrainedModels { gen, disc, latent_scale, mode: cfg.mode },
        log,
        aborted: None,
    })
}

/// std/mean of the metric speed along a straight latent interpolation.
fn velocity_dispersion(g: &GeneratorNet, x: &[f64], z_a: &[f64], z_b: &[f64]) -> f64 {
    let steps = 20;
    let zdot = numerics::scale(&numerics::sub(z_b, z_a), 1.0 / steps as f64);
    let speeds: Vec<f64> = (0..steps)
        .map(|i| {
            let t = i as f64 / steps as f64;
            let z = numerics::axpy(z_a, t, &numerics::sub(z_b, z_a));
            metric_speed(g, &z, &zdot, x)
        })
        .collect();
    let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
    if mean == 0.0 {
        return 0.0;
    }
    let var = speeds.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / speeds.len() as f64;
    var.sqrt() / mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Activation, Mlp, MlpSpec};

    #[test]
    fn adam_converges_on_a_quadratic_bowl() {
        let target = [3.0, -1.0, 0.5, 2.0, -2.5];
        let mut p = vec![0.0; 5];
        let mut adam = AdamState::new(5);
        for _ in 0..5000 {
            let grad: Vec<f64> = p.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            adam.step(&mut p, &grad, 0.05, 0.9, 0.999, 1e-8);
        }
        for (a, b) in p.iter().zip(&target) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn ball_samples_bounded_and_centered() {
        let mut rng = RngState::new(1);
        let (k, r) = (4, 0.01);
        let n = 100_000;
        let mut mean = vec![0.0; k];
        for _ in 0..n {
            let z = sample_latent_ball(k, r, &mut rng).unwrap();
            assert!(numerics::norm(&z) <= r + 1e-15);
            for (m, v) in mean.iter_mut().zip(&z) {
                *m += v / n as f64;
            }
        }
        // per-coordinate std of a uniform ball sample is r/sqrt(k+2)
        let sigma = r / ((k + 2) as f64).sqrt() / (n as f64).sqrt();
        for m in &mean {
            assert!(m.abs() < 3.0 * sigma, "mean coordinate {m}");
        }
        assert!(sample_latent_ball(3, 0.0, &mut rng).is_err());
    }

    fn scalar_identity_gen() -> GeneratorNet {
        // G(z) = z: one linear layer, weight 1, bias 0, no condition input
        let spec = MlpSpec::new(1, &[], 1, Activation::Tanh);
        let mlp = Mlp::with_params(spec, vec![1.0, 0.0]).unwrap();
        GeneratorNet::from_mlp(mlp, 1, 0).unwrap()
    }

    #[test]
    fn curve_velocity_examples() {
        // zero residual: G(z) = z with y = z0 -> zero vector
        let g = scalar_identity_gen();
        assert_eq!(curve_velocity(&g, &[0.7], &[], &[0.7]), vec![0.0]);
        // linear 1-d: y = 5, z = 0: d|5 - z|/dz = -1
        assert_eq!(curve_velocity(&g, &[0.0], &[], &[5.0]), vec![-1.0]);
    }

    #[test]
    fn curve_velocity_matches_finite_differences() {
        let mut rng = RngState::new(5);
        let g = GeneratorNet::new(3, 2, 4, &[12], Activation::Tanh, &mut rng);
        let z0 = rng.normal_vec(3, 0.0, 0.5);
        let x = rng.normal_vec(2, 0.0, 0.5);
        let y = rng.normal_vec(4, 0.0, 1.0);
        let v = curve_velocity(&g, &z0, &x, &y);
        let fd = crate::numerics::finite_diff_grad(
            |z| {
                let out = g.forward(z, &x);
                y.iter().zip(&out).map(|(a, b)| (a - b).abs()).sum()
            },
            &z0,
            1e-6,
        )
        .unwrap();
        for (a, b) in v.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    fn tiny_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.data.name = "cond_rings2d".into();
        cfg.model.latent_dim = 2;
        cfg.model.hidden = vec![8, 8];
        cfg.model.disc_hidden = vec![8];
        cfg.train.epochs = 2;
        cfg.train.batch = 4;
        cfg.train.inner_steps = 3;
        cfg.projection.dim = Some(2);
        cfg.linalg.inverse_iters = 40;
        cfg
    }

    #[test]
    fn zero_step_zero_noise_single_inner_step_is_a_fixed_point() {
        let mut cfg = tiny_cfg();
        cfg.train.inner_steps = 1;
        cfg.train.latent_step = 0.0;
        cfg.train.latent_noise = 0.0;
        let mut rng = RngState::new(2);
        let mut g = GeneratorNet::new(2, 1, 2, &[8], Activation::Tanh, &mut rng);
        let before = g.params().to_vec();
        let mut adam = AdamState::new(before.len());
        let z0 = [0.005, -0.002];
        let (z_t, loss) = inner_geodesic_phase(
            &mut g,
            &mut adam,
            &z0,
            &[0.3],
            &[1.0, -1.0],
            &cfg,
            &mut RngState::new(3),
        )
        .unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.params(), before.as_slice());
        assert_eq!(z_t, z0.to_vec());
    }

    #[test]
    fn walk_endpoint_stays_within_the_noise_bound() {
        // | z_T - z_0 - T eta V | <= 3 eps1 sqrt(T k) with high probability
        let mut cfg = tiny_cfg();
        cfg.train.inner_steps = 10;
        cfg.train.latent_noise = 1e-3;
        // freeze the generator so V stays the analytic direction
        cfg.train.lr = 0.0;
        let mut rng = RngState::new(4);
        let g0 = GeneratorNet::new(2, 1, 2, &[8], Activation::Tanh, &mut rng);
        let mut failures = 0;
        for trial in 0..50 {
            let mut g = g0.clone();
            let mut adam = AdamState::new(g.params().len());
            let z0 = [0.004, 0.001];
            let x = [0.2];
            let y = [0.5, -0.5];
            let v = curve_velocity(&g, &z0, &x, &y);
            let eta = effective_step(cfg.train.latent_step, numerics::norm(&v));
            let (z_t, _) = inner_geodesic_phase(
                &mut g,
                &mut adam,
                &z0,
                &x,
                &y,
                &cfg,
                &mut RngState::stream(5, trial),
            )
            .unwrap();
            let expected: Vec<f64> =
                (0..2).map(|i| z0[i] + 10.0 * eta * v[i]).collect();
            let dev = numerics::norm(&numerics::sub(&z_t, &expected));
            let bound = 3.0 * 1e-3 * (10.0f64 * 2.0).sqrt();
            if dev > bound {
                failures += 1;
            }
        }
        assert!(failures <= 1, "{failures} of 50 walks exceeded the noise bound");
    }

    #[test]
    fn outer_update_with_zero_lh_and_adv_weights_is_pure_reconstruction() {
        let mut cfg = tiny_cfg();
        cfg.losses.weights.lh = 0.0;
        cfg.losses.weights.adv = 0.0;
        let mut rng = RngState::new(6);
        let mut g = GeneratorNet::new(2, 1, 2, &[8], Activation::Tanh, &mut rng);
        let mut d = DiscriminatorNet::new(1, 2, &[8], Activation::Tanh, &mut rng);
        let g0 = g.clone();
        let mut adam_g = AdamState::new(g.params().len());
        let mut adam_d = AdamState::new(d.params().len());
        let proj = build_projection(&cfg, 2).unwrap();
        let kl = cfg.kl_params().unwrap();
        let z_t = [0.1, -0.2];
        let x = [0.5];
        let y = [1.0, 0.0];
        outer_update(
            &mut g, &mut d, &mut adam_g, &mut adam_d, &z_t, &x, &y, &cfg, &proj, &kl,
            &mut RngState::new(7),
        )
        .unwrap();

        // manual reconstruction-only step on a copy
        let mut g2 = g0.clone();
        let mut adam2 = AdamState::new(g2.params().len());
        let mut tape = Tape::new();
        let leaves = g2.mlp().param_leaves(&mut tape, true);
        let zv = tape.constant_vec(&z_t);
        let out = g2.record_with(&mut tape, zv, &x, &leaves);
        let rec = rec_loss_tape(&mut tape, &y, out, cfg.losses.rec_norm);
        let scaled = tape.scale(rec, cfg.losses.weights.rec);
        let grads = tape.backward(scaled).unwrap();
        let flat = g2.mlp().flat_grad(&tape, &grads, &leaves);
        adam2.step(
            g2.mlp_mut().params_mut(),
            &flat,
            cfg.train.lr,
            cfg.train.adam_beta1,
            cfg.train.adam_beta2,
            cfg.train.adam_eps,
        );
        assert_eq!(g.params(), g2.params());
    }

    #[test]
    fn lh_gradient_direction_matches_finite_difference_slope() {
        // single-parameter generator: G(z) = w z, batch fixed; check
        // d L_lh / d w against a central difference of the scalar path
        let cfg = {
            let mut c = tiny_cfg();
            c.linalg.logdet_terms = 400;
            c
        };
        let kl = cfg.kl_params().unwrap();
        let z_batch: Vec<Vec<f64>> = vec![vec![0.4], vec![-0.3], vec![0.9], vec![-1.1], vec![0.2]];
        let tgt_flat: Vec<f64> = vec![0.5, -0.4, 1.0, -1.2, 0.1];
        let tgt = Matrix::from_vec(5, 1, tgt_flat).unwrap();
        let proj = Projection::PassThrough { dim: 1 };
        let tgt_m = losses::estimate_moments(&tgt, &proj, kl.reg_lambda).unwrap();

        let loss_at = |w: f64| -> f64 {
            let rows: Vec<f64> = z_batch.iter().map(|z| w * z[0]).collect();
            let batch = Matrix::from_vec(5, 1, rows).unwrap();
            let m = losses::estimate_moments(&batch, &proj, kl.reg_lambda).unwrap();
            losses::lh_loss(&m, &tgt_m, &kl).unwrap()
        };

        let w0 = 0.8;
        let spec = MlpSpec::new(1, &[], 1, Activation::Tanh);
        let mlp = Mlp::with_params(spec, vec![w0, 0.0]).unwrap();
        let g = GeneratorNet::from_mlp(mlp, 1, 0).unwrap();
        let mut tape = Tape::new();
        let leaves = g.mlp().param_leaves(&mut tape, true);
        let outs: Vec<Var> = z_batch
            .iter()
            .map(|z| {
                let zv = tape.constant_vec(z);
                g.record_with(&mut tape, zv, &[], &leaves)
            })
            .collect();
        let lh = losses::lh_loss_tape(&mut tape, &outs, &tgt_m, &kl).unwrap();
        let grads = tape.backward(lh).unwrap();
        let analytic = grads.wrt(leaves[0].0, &tape).data()[0];
        let h = 1e-5;
        let numeric = (loss_at(w0 + h) - loss_at(w0 - h)) / (2.0 * h);
        assert!(
            (analytic - numeric).abs() < 1e-3 * numeric.abs().max(1.0),
            "{analytic} vs {numeric}"
        );
    }

    #[test]
    fn inner_phase_never_touches_the_discriminator_and_outer_touches_both() {
        let cfg = tiny_cfg();
        let ds = ConditionalDataset::by_name("cond_rings2d").unwrap();
        let mut rng = RngState::new(8);
        let mut g = GeneratorNet::new(2, 1, 2, &[8, 8], Activation::Tanh, &mut rng);
        let mut d = DiscriminatorNet::new(1, 2, &[8], Activation::Tanh, &mut rng);
        let d_before = d.params().to_vec();
        let mut adam_g = AdamState::new(g.params().len());
        let mut adam_d = AdamState::new(d.params().len());
        let (x, y) = ds.sample_pairs(1, &mut rng).pop().unwrap();
        let z0 = sample_latent_ball(2, 0.01, &mut rng).unwrap();
        let (z_t, _) =
            inner_geodesic_phase(&mut g, &mut adam_g, &z0, &x, &y, &cfg, &mut rng).unwrap();
        assert_eq!(d.params(), d_before.as_slice(), "inner phase changed the discriminator");

        let g_mid = g.params().to_vec();
        let proj = build_projection(&cfg, 2).unwrap();
        let kl = cfg.kl_params().unwrap();
        outer_update(
            &mut g, &mut d, &mut adam_g, &mut adam_d, &z_t, &x, &y, &cfg, &proj, &kl, &mut rng,
        )
        .unwrap();
        assert_ne!(d.params(), d_before.as_slice(), "outer phase must update D");
        assert_ne!(g.params(), g_mid.as_slice(), "outer phase must update G");
        assert_eq!(adam_d.step_count(), 1, "discriminator steps 1:1 with generator");
    }

    #[test]
    fn training_is_deterministic_given_the_seed() {
        let cfg = tiny_cfg();
        let ds = cfg.dataset().unwrap();
        let pairs = ds.sample_pairs(12, &mut RngState::stream(cfg.seed, 1));
        let a = train(&ds, &pairs, &cfg).unwrap();
        let b = train(&ds, &pairs, &cfg).unwrap();
        assert!(a.aborted.is_none());
        assert_eq!(a.models.gen.params(), b.models.gen.params());
        assert_eq!(a.models.disc.params(), b.models.disc.params());
        assert_eq!(a.models.latent_scale, b.models.latent_scale);
    }

    #[test]
    fn baseline_mode_runs_with_the_losses_disabled() {
        let mut cfg = tiny_cfg();
        cfg.mode = TrainMode::Baseline;
        let ds = cfg.dataset().unwrap();
        let pairs = ds.sample_pairs(12, &mut RngState::stream(cfg.seed, 1));
        let out = train(&ds, &pairs, &cfg).unwrap();
        assert!(out.aborted.is_none());
        assert_eq!(out.log.last("loss_gh"), Some(0.0));
        assert_eq!(out.log.last("loss_lh"), Some(0.0));
        assert!(out.log.last("loss_rec").unwrap().is_finite());
        assert_eq!(out.models.latent_scale, 1.0);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let cfg = tiny_cfg();
        let ds = cfg.dataset().unwrap();
        assert!(matches!(train(&ds, &[], &cfg), Err(Error::Contract(_))));
    }
}
