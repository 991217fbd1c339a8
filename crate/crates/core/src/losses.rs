//! The loss components of the training objective: non-saturating
//! adversarial, reconstruction, the curve-length loss that ties latent
//! walks to output-space chords, and the second-moment KL loss between
//! generated and perturbed-target neighborhoods, plus its ablation
//! variants (univariate KL, naive distance maximization, MMD).
//!
//! Every loss exists in two forms that must agree numerically: a plain
//! scalar evaluation, and a tape recording whose backward pass yields the
//! training gradients. The KL machinery intentionally replays the
//! truncated log-determinant series and the hyper-power inverse on the
//! tape: differentiating through those recurrences is what keeps the
//! gradients stable compared to exact determinant routines.

use crate::error::{Error, Result};
use crate::linalg::{
    self, safe_inverse_alpha, InverseOrder, Projection, SpdEstimate,
};
use crate::models::{DiscriminatorNet, GeneratorNet};
use crate::numerics::{self, Matrix, Tape, Var};
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Mean and regularized covariance of a projected sample batch.
#[derive(Debug, Clone)]
pub struct GaussianMoments {
    pub mean: Vec<f64>,
    pub cov: SpdEstimate,
    pub count: usize,
}

impl GaussianMoments {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Interpolation schedule for the curve-length loss: alpha(0) = 0,
/// alpha(horizon) = 1, monotone in between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

#[derive(Debug, Clone, Copy)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub horizon: f64,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, horizon: f64) -> Self {
        debug_assert!(horizon > 0.0);
        Self { kind, horizon }
    }

    pub fn alpha(&self, t: f64) -> f64 {
        let s = (t / self.horizon).clamp(0.0, 1.0);
        match self.kind {
            ScheduleKind::Linear => s,
            ScheduleKind::Cosine => 0.5 * (1.0 - (std::f64::consts::PI * s).cos()),
        }
    }
}

/// Weights of the four loss components.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossWeights {
    pub gh: f64,
    pub lh: f64,
    pub rec: f64,
    pub adv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { gh: 100.0, lh: 0.01, rec: 100.0, adv: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("gh", self.gh), ("lh", self.lh), ("rec", self.rec), ("adv", self.adv)]
        {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("loss weight {name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Reconstruction norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecNorm {
    L1,
    L2,
}

/// Which local-bijectivity loss the run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LhVariant {
    Multivariate,
    Univariate,
    MaxDistance,
    Mmd,
}

/// Knobs of the approximate KL evaluation.
#[derive(Debug, Clone, Copy)]
pub struct KlParams {
    pub logdet_terms: usize,
    pub inverse_iters: usize,
    pub inverse_alpha: f64,
    pub inverse_order: InverseOrder,
    pub reg_lambda: f64,
}

impl Default for KlParams {
    fn default() -> Self {
        Self {
            logdet_terms: 20,
            inverse_iters: 100,
            inverse_alpha: 0.1,
            inverse_order: InverseOrder::Three,
            reg_lambda: linalg::DEFAULT_REG_LAMBDA,
        }
    }
}

/// Values of the four components, before weighting.
#[derive(Debug, Clone, Copy)]
pub struct LossComponents {
    pub gh: f64,
    pub lh: f64,
    pub rec: f64,
    pub adv: f64,
}

// ---------------------------------------------------------------------------
// Adversarial loss
// ---------------------------------------------------------------------------

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Non-saturating GAN losses in logit space:
/// generator `softplus(-D(x, y_fake))`, discriminator
/// `softplus(-D(x, y_real)) + softplus(D(x, y_fake))`.
pub fn adv_loss(
    d: &DiscriminatorNet,
    x: &[f64],
    y_real: &[f64],
    y_fake: &[f64],
) -> (f64, f64) {
    let logit_real = d.forward(x, y_real);
    let logit_fake = d.forward(x, y_fake);
    let gen = softplus(-logit_fake);
    let disc = softplus(-logit_real) + softplus(logit_fake);
    (gen, disc)
}

/// Generator side of the adversarial loss on tape: `y_fake` is a live var
/// so the gradient flows through the (frozen) discriminator into G.
pub fn adv_gen_tape(tape: &mut Tape, d: &DiscriminatorNet, x: &[f64], y_fake: Var) -> Var {
    let (logit, _) = d.record(tape, x, y_fake, false);
    let neg = tape.scale(logit, -1.0);
    tape.softplus(neg)
}

/// Discriminator side on tape: both samples are constants, the
/// discriminator parameters are trainable and shared by the two passes.
pub fn adv_disc_tape(
    tape: &mut Tape,
    d: &DiscriminatorNet,
    x: &[f64],
    y_real: &[f64],
    y_fake: &[f64],
) -> (Var, Vec<(Var, Var)>) {
    let real_v = tape.constant_vec(y_real);
    let fake_v = tape.constant_vec(y_fake);
    let params = d.mlp().param_leaves(tape, true);
    let logit_real = d.record_with(tape, x, real_v, &params);
    let logit_fake = d.record_with(tape, x, fake_v, &params);
    let neg_real = tape.scale(logit_real, -1.0);
    let a = tape.softplus(neg_real);
    let b = tape.softplus(logit_fake);
    (tape.add(a, b), params)
}

// ---------------------------------------------------------------------------
// Reconstruction loss
// ---------------------------------------------------------------------------

/// Mean absolute or mean squared error.
pub fn rec_loss(y: &[f64], y_hat: &[f64], norm: RecNorm) -> f64 {
    assert_eq!(y.len(), y_hat.len(), "reconstruction operands");
    let n = y.len() as f64;
    match norm {
        RecNorm::L1 => y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / n,
        RecNorm::L2 => y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n,
    }
}

/// Reconstruction loss on tape against a constant target.
pub fn rec_loss_tape(tape: &mut Tape, y: &[f64], y_hat: Var, norm: RecNorm) -> Var {
    let target = tape.constant_vec(y);
    let diff = tape.sub(target, y_hat);
    let n = y.len() as f64;
    let raw = match norm {
        RecNorm::L1 => tape.l1_norm(diff),
        RecNorm::L2 => tape.sum_sq(diff),
    };
    tape.scale(raw, 1.0 / n)
}

// ---------------------------------------------------------------------------
// Curve-length (geodesic homeomorphism) loss
// ---------------------------------------------------------------------------

/// Target point for the walk loss at schedule position `alpha`: the convex
/// combination of the ground truth and the anchor output by default, or
/// the literal printed sign when `literal_sign` is set.
fn gh_target(alpha: f64, y: &[f64], anchor: &[f64], literal_sign: bool) -> Vec<f64> {
    y.iter()
        .zip(anchor)
        .map(|(&yi, &ai)| {
            if literal_sign {
                alpha * yi - (1.0 - alpha) * ai
            } else {
                alpha * yi + (1.0 - alpha) * ai
            }
        })
        .collect()
}

/// Curve-length loss at inner step `t_i`:
/// `| target(t_i) - G(z_ti, x) |_1` with
/// `target(t) = alpha(t) y + (1 - alpha(t)) G(z_t0, x)`.
#[allow(clippy::too_many_arguments)]
pub fn gh_loss(
    g: &GeneratorNet,
    t_i: f64,
    z_ti: &[f64],
    z_t0: &[f64],
    y: &[f64],
    x: &[f64],
    sched: &Schedule,
    literal_sign: bool,
) -> f64 {
    let alpha = sched.alpha(t_i);
    let anchor = g.forward(z_t0, x);
    let target = gh_target(alpha, y, &anchor, literal_sign);
    let out = g.forward(z_ti, x);
    target.iter().zip(&out).map(|(t, o)| (t - o).abs()).sum()
}

/// Tape version for the inner-phase update. The target is a detached
/// snapshot: the anchor output is replayed through constant parameter
/// leaves (same arithmetic as the live forward, so the loss is exactly
/// zero when `z_ti == z_t0` and `alpha == 0`), and the gradient only
/// flows through `G(z_ti, x)`.
#[allow(clippy::too_many_arguments)]
pub fn gh_loss_tape(
    tape: &mut Tape,
    g: &GeneratorNet,
    t_i: f64,
    z_ti: &[f64],
    z_t0: &[f64],
    y: &[f64],
    x: &[f64],
    sched: &Schedule,
    literal_sign: bool,
) -> (Var, Vec<(Var, Var)>) {
    let alpha = sched.alpha(t_i);
    let z0_var = tape.constant_vec(z_t0);
    let (anchor_var, _) = g.record(tape, z0_var, x, false);
    let anchor = tape.value(anchor_var).data().to_vec();
    let target = gh_target(alpha, y, &anchor, literal_sign);
    let z_var = tape.constant_vec(z_ti);
    let (out, params) = g.record(tape, z_var, x, true);
    let target_v = tape.constant_vec(&target);
    let diff = tape.sub(target_v, out);
    (tape.l1_norm(diff), params)
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

/// Project each batch row and return the sample mean plus the
/// lambda-regularized sample covariance (unbiased, divisor B - 1).
pub fn estimate_moments(
    batch: &Matrix,
    proj: &Projection,
    lambda: f64,
) -> Result<GaussianMoments> {
    let b = batch.rows();
    if b < 2 {
        return Err(Error::Contract(format!("moment estimation needs B >= 2, got {b}")));
    }
    let h = proj.out_dim();
    let projected: Vec<Vec<f64>> = (0..b).map(|r| proj.apply(batch.row(r))).collect();
    let mut mean = vec![0.0; h];
    for row in &projected {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / b as f64;
        }
    }
    let mut cov = Matrix::zeros(h, h);
    for row in &projected {
        let c: Vec<f64> = row.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..h {
            for j in 0..h {
                cov.set(i, j, cov.get(i, j) + c[i] * c[j] / (b as f64 - 1.0));
            }
        }
    }
    Ok(GaussianMoments { mean, cov: SpdEstimate::new(cov, lambda)?, count: b })
}

// ---------------------------------------------------------------------------
// Multivariate second-moment KL
// ---------------------------------------------------------------------------

/// Resolve the hyper-power step size: the configured value when it
/// satisfies the convergence bound, otherwise half the bound.
fn resolve_alpha(cov: &SpdEstimate, p: &KlParams) -> Result<f64> {
    safe_inverse_alpha(cov, p.inverse_alpha)
}

/// Approximate KL between the target and generated neighborhoods up to
/// second moments:
/// `1/2 [ log|Sigma_G|/|Sigma_T| - h + tr(Sigma_G^-1 Sigma_T)
///        + (mu_G - mu_T)^T Sigma_G^-1 (mu_G - mu_T) ]`,
/// with the log-determinants from the truncated series and the inverse
/// from the hyper-power iteration.
pub fn lh_loss(gen: &GaussianMoments, tgt: &GaussianMoments, p: &KlParams) -> Result<f64> {
    if gen.dim() != tgt.dim() {
        return Err(Error::Shape(format!(
            "moment dims differ: {} vs {}",
            gen.dim(),
            tgt.dim()
        )));
    }
    let h = gen.dim() as f64;
    let logdet_gen = linalg::log_det_scaled(&gen.cov, p.logdet_terms)?;
    let logdet_tgt = linalg::log_det_scaled(&tgt.cov, p.logdet_terms)?;
    let alpha = resolve_alpha(&gen.cov, p)?;
    let inv = linalg::hyperpower_inverse(&gen.cov, p.inverse_iters, alpha, p.inverse_order)?;
    let tr = inv.matmul(tgt.cov.matrix())?.trace();
    let d = numerics::sub(&gen.mean, &tgt.mean);
    let mahal = numerics::dot(&d, &inv.matvec(&d)?);
    Ok(0.5 * (logdet_gen - logdet_tgt - h + tr + mahal))
}

/// The same KL on tape. `gen_projected` are the projected generator
/// outputs as `h x 1` vars; the target moments are constants. The scale
/// factor of the log-det series and the hyper-power step size are taken
/// from the primal values (they are solver settings, not part of the
/// differentiated function).
pub fn lh_loss_tape(
    tape: &mut Tape,
    gen_projected: &[Var],
    tgt: &GaussianMoments,
    p: &KlParams,
) -> Result<Var> {
    let b = gen_projected.len();
    if b < 2 {
        return Err(Error::Contract(format!("moment estimation needs B >= 2, got {b}")));
    }
    let h = tgt.dim();
    let x = tape.concat_cols(gen_projected);
    let ones_over_b = tape.constant(Matrix::from_vec(b, 1, vec![1.0 / b as f64; b])?);
    let mu = tape.matmul(x, ones_over_b);
    let ones_row = tape.constant(Matrix::from_vec(1, b, vec![1.0; b])?);
    let mu_b = tape.matmul(mu, ones_row);
    let xc = tape.sub(x, mu_b);
    let xct = tape.transpose(xc);
    let prod = tape.matmul(xc, xct);
    let cov_raw = tape.scale(prod, 1.0 / (b as f64 - 1.0));
    let lambda_eye = tape.constant(Matrix::identity(h).scale(p.reg_lambda));
    let cov = tape.add(cov_raw, lambda_eye);

    // log|Sigma_G| via the scaled series
    let cov_value = SpdEstimate::from_spd(tape.value(cov).clone())?;
    let s = linalg::spectral_radius(cov_value.matrix(), 100)? + 1e-3;
    let scaled_neg = tape.scale(cov, -1.0 / s);
    let eye = tape.constant(Matrix::identity(h));
    let c = tape.add(eye, scaled_neg); // C = I - Sigma/s
    let mut acc: Option<Var> = None;
    let mut power = c;
    for i in 1..=p.logdet_terms {
        let tr = tape.trace(power);
        let term = tape.scale(tr, -1.0 / i as f64);
        acc = Some(match acc {
            Some(a) => tape.add(a, term),
            None => term,
        });
        if i < p.logdet_terms {
            power = tape.matmul(power, c);
        }
    }
    let series = acc.expect("at least one series term");
    let logdet_gen = tape.add_scalar(series, h as f64 * s.ln());

    // Sigma_G^-1 via the hyper-power iteration
    let alpha = resolve_alpha(&cov_value, p)?;
    let cov_t = tape.transpose(cov);
    let mut v = tape.scale(cov_t, alpha);
    let three_eye = tape.constant(Matrix::identity(h).scale(3.0));
    let two_eye = tape.constant(Matrix::identity(h).scale(2.0));
    for _ in 0..p.inverse_iters {
        v = match p.inverse_order {
            InverseOrder::Two => {
                let sv = tape.matmul(cov, v);
                let inner = tape.sub(two_eye, sv);
                tape.matmul(v, inner)
            }
            InverseOrder::Three => {
                let sv = tape.matmul(cov, v);
                let inner = tape.sub(three_eye, sv);
                let vi = tape.matmul(v, inner);
                let svi = tape.matmul(cov, vi);
                let mid = tape.sub(three_eye, svi);
                tape.matmul(v, mid)
            }
        };
    }

    // tr(Sigma_G^-1 Sigma_T) and the Mahalanobis term
    let tgt_cov = tape.constant(tgt.cov.matrix().clone());
    let vt = tape.matmul(v, tgt_cov);
    let tr = tape.trace(vt);
    let tgt_mu = tape.constant_vec(&tgt.mean);
    let d = tape.sub(mu, tgt_mu);
    let vd = tape.matmul(v, d);
    let dt = tape.transpose(d);
    let mahal = tape.matmul(dt, vd);

    let logdet_tgt = linalg::log_det_scaled(&tgt.cov, p.logdet_terms)?;
    let shifted = tape.add_scalar(logdet_gen, -logdet_tgt - h as f64);
    let s1 = tape.add(shifted, tr);
    let s2 = tape.add(s1, mahal);
    Ok(tape.scale(s2, 0.5))
}

// ---------------------------------------------------------------------------
// Ablation variants
// ---------------------------------------------------------------------------

fn column_moments(batch: &Matrix, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let (b, m) = (batch.rows(), batch.cols());
    let mut mean = vec![0.0; m];
    for r in 0..b {
        for (mu, v) in mean.iter_mut().zip(batch.row(r)) {
            *mu += v / b as f64;
        }
    }
    let mut var = vec![0.0; m];
    for r in 0..b {
        for (j, v) in batch.row(r).iter().enumerate() {
            var[j] += (v - mean[j]) * (v - mean[j]) / (b as f64 - 1.0);
        }
    }
    for v in var.iter_mut() {
        *v += lambda;
    }
    (mean, var)
}

/// Per-coordinate Gaussian KL, summed:
/// `sum_j log(sq_gen/sq_tgt)/2 + (var_tgt + (mu_tgt - mu_gen)^2) / (2 var_gen) - 1/2`.
/// Variances carry a lambda floor.
pub fn lh_loss_univariate(gen: &Matrix, tgt: &Matrix, lambda: f64) -> Result<f64> {
    if gen.cols() != tgt.cols() {
        return Err(Error::Shape("univariate KL needs equal widths".into()));
    }
    if gen.rows() < 2 || tgt.rows() < 2 {
        return Err(Error::Contract("univariate KL needs batches of size >= 2".into()));
    }
    let (mu_g, var_g) = column_moments(gen, lambda);
    let (mu_t, var_t) = column_moments(tgt, lambda);
    let mut acc = 0.0;
    for j in 0..gen.cols() {
        acc += 0.5 * (var_g[j] / var_t[j]).ln()
            + (var_t[j] + (mu_t[j] - mu_g[j]) * (mu_t[j] - mu_g[j])) / (2.0 * var_g[j])
            - 0.5;
    }
    Ok(acc)
}

/// Univariate KL on tape: generator outputs as raw `M x 1` vars, target
/// batch constant.
pub fn lh_loss_univariate_tape(
    tape: &mut Tape,
    gen_outputs: &[Var],
    tgt: &Matrix,
    lambda: f64,
) -> Result<Var> {
    let b = gen_outputs.len();
    if b < 2 || tgt.rows() < 2 {
        return Err(Error::Contract("univariate KL needs batches of size >= 2".into()));
    }
    let m = tgt.cols();
    let (mu_t, var_t) = column_moments(tgt, lambda);
    let x = tape.concat_cols(gen_outputs); // M x B
    let ones_over_b = tape.constant(Matrix::from_vec(b, 1, vec![1.0 / b as f64; b])?);
    let mu = tape.matmul(x, ones_over_b); // M x 1
    let ones_row = tape.constant(Matrix::from_vec(1, b, vec![1.0; b])?);
    let mu_b = tape.matmul(mu, ones_row);
    let xc = tape.sub(x, mu_b);
    let sq = tape.mul_elem(xc, xc);
    let ones_b = tape.constant(Matrix::from_vec(b, 1, vec![1.0 / (b as f64 - 1.0); b])?);
    let var_raw = tape.matmul(sq, ones_b); // M x 1
    let var_g = tape.add_scalar(var_raw, lambda);

    let log_vg = tape.log(var_g);
    let half_log = tape.scale(log_vg, 0.5);
    let t1 = tape.sum(half_log);
    let const_part: f64 =
        var_t.iter().map(|v| -0.5 * v.ln()).sum::<f64>() - 0.5 * m as f64;

    let mu_t_v = tape.constant_vec(&mu_t);
    let d = tape.sub(mu_t_v, mu);
    let d2 = tape.mul_elem(d, d);
    let var_t_v = tape.constant_vec(&var_t);
    let num = tape.add(var_t_v, d2);
    let frac = tape.div_elem(num, var_g);
    let half_frac = tape.scale(frac, 0.5);
    let t2 = tape.sum(half_frac);

    let s = tape.add(t1, t2);
    Ok(tape.add_scalar(s, const_part))
}

/// Negative mean pairwise distance among generated samples.
pub fn lh_loss_maxdist(gen: &Matrix) -> Result<f64> {
    let b = gen.rows();
    if b < 2 {
        return Err(Error::Contract("distance maximization needs a batch of >= 2".into()));
    }
    let mut acc = 0.0;
    let mut pairs = 0;
    for i in 0..b {
        for j in i + 1..b {
            acc += numerics::norm(&numerics::sub(gen.row(i), gen.row(j)));
            pairs += 1;
        }
    }
    Ok(-acc / pairs as f64)
}

/// Tape version; distances carry a tiny floor to keep the square root
/// differentiable at coincident samples.
pub fn lh_loss_maxdist_tape(tape: &mut Tape, gen_outputs: &[Var]) -> Result<Var> {
    let b = gen_outputs.len();
    if b < 2 {
        return Err(Error::Contract("distance maximization needs a batch of >= 2".into()));
    }
    let mut acc: Option<Var> = None;
    let mut pairs = 0;
    for i in 0..b {
        for j in i + 1..b {
            let d = tape.sub(gen_outputs[i], gen_outputs[j]);
            let ss = tape.sum_sq(d);
            let ss_safe = tape.add_scalar(ss, 1e-12);
            let dist = tape.sqrt(ss_safe);
            acc = Some(match acc {
                Some(a) => tape.add(a, dist),
                None => dist,
            });
            pairs += 1;
        }
    }
    Ok(tape.scale(acc.expect("pairs"), -1.0 / pairs as f64))
}

fn rbf(a: &[f64], b: &[f64], bandwidth: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-d2 / (2.0 * bandwidth * bandwidth)).exp()
}

/// Unbiased RBF-kernel MMD^2 estimate between the two batches.
pub fn lh_loss_mmd(gen: &Matrix, tgt: &Matrix, bandwidth: f64) -> Result<f64> {
    let (m, n) = (gen.rows(), tgt.rows());
    if m < 2 || n < 2 {
        return Err(Error::Contract("MMD needs batches of size >= 2".into()));
    }
    let mut kxx = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                kxx += rbf(gen.row(i), gen.row(j), bandwidth);
            }
        }
    }
    let mut kyy = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                kyy += rbf(tgt.row(i), tgt.row(j), bandwidth);
            }
        }
    }
    let mut kxy = 0.0;
    for i in 0..m {
        for j in 0..n {
            kxy += rbf(gen.row(i), tgt.row(j), bandwidth);
        }
    }
    Ok(kxx / (m as f64 * (m as f64 - 1.0)) + kyy / (n as f64 * (n as f64 - 1.0))
        - 2.0 * kxy / (m as f64 * n as f64))
}

/// MMD^2 on tape; only the generated side is differentiable.
pub fn lh_loss_mmd_tape(
    tape: &mut Tape,
    gen_outputs: &[Var],
    tgt: &Matrix,
    bandwidth: f64,
) -> Result<Var> {
    let m = gen_outputs.len();
    let n = tgt.rows();
    if m < 2 || n < 2 {
        return Err(Error::Contract("MMD needs batches of size >= 2".into()));
    }
    let gamma = -1.0 / (2.0 * bandwidth * bandwidth);
    let mut kxx: Option<Var> = None;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let d = tape.sub(gen_outputs[i], gen_outputs[j]);
            let ss = tape.sum_sq(d);
            let e = tape.scale(ss, gamma);
            let kv = tape.exp(e);
            kxx = Some(match kxx {
                Some(a) => tape.add(a, kv),
                None => kv,
            });
        }
    }
    let mut kxy: Option<Var> = None;
    for i in 0..m {
        for j in 0..n {
            let t = tape.constant_vec(tgt.row(j));
            let d = tape.sub(gen_outputs[i], t);
            let ss = tape.sum_sq(d);
            let e = tape.scale(ss, gamma);
            let kv = tape.exp(e);
            kxy = Some(match kxy {
                Some(a) => tape.add(a, kv),
                None => kv,
            });
        }
    }
    // the target-target block is constant
    let mut kyy = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                kyy += rbf(tgt.row(i), tgt.row(j), bandwidth);
            }
        }
    }
    let t_xx = tape.scale(kxx.expect("pairs"), 1.0 / (m as f64 * (m as f64 - 1.0)));
    let t_xy = tape.scale(kxy.expect("pairs"), -2.0 / (m as f64 * n as f64));
    let s = tape.add(t_xx, t_xy);
    Ok(tape.add_scalar(s, kyy / (n as f64 * (n as f64 - 1.0))))
}

// ---------------------------------------------------------------------------
// Total
// ---------------------------------------------------------------------------

/// Weighted sum of the four components. Non-finite components are
/// reported by name.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<f64> {
    for (name, v) in [("gh", c.gh), ("lh", c.lh), ("rec", c.rec), ("adv", c.adv)] {
        if !v.is_finite() {
            return Err(Error::Training(format!("loss component {name} is not finite: {v}")));
        }
    }
    Ok(w.gh * c.gh + w.lh * c.lh + w.rec * c.rec + w.adv * c.adv)
}
