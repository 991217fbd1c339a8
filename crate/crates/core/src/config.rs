//! Run configuration: a TOML file with dotted sections mirroring the
//! module layout. Every field has a default, so a config file only
//! states what it overrides; `validate` enforces the cross-field
//! invariants and reports offending fields by name.

use crate::data::{ConditionalDataset, PerturbationSpec};
use crate::error::{Error, Result};
use crate::linalg::InverseOrder;
use crate::losses::{KlParams, LhVariant, LossWeights, RecNorm, ScheduleKind};
use crate::models::Activation;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Training mode: the full two-phase procedure, or the plain conditional
/// GAN baseline (reconstruction + adversarial only, no latent walk).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Geo,
    Baseline,
}

impl TrainMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::Geo => "geo",
            TrainMode::Baseline => "baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "geo" => Ok(TrainMode::Geo),
            "baseline" => Ok(TrainMode::Baseline),
            other => Err(Error::Config(format!("mode must be 'geo' or 'baseline', got '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub name: String,
    pub train_size: usize,
    pub eval_size: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { name: "cond_rings2d".into(), train_size: 512, eval_size: 128 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 4,
            hidden: vec![64, 64, 64],
            disc_hidden: vec![64, 64],
            activation: Activation::Tanh,
        }
    }
}

/// How the inner walk's step length is resolved from the configured
/// `latent_step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkScaling {
    /// Step `eta` along V, rescaled by 1/|V| when |V| > 1: every walk has
    /// roughly the same latent length.
    Capped,
    /// Walk length proportional to the output gap |y - G(z0)|: far
    /// targets get proportionally longer walks, which ties the implied
    /// metric scale to one global constant.
    Proportional,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub epochs: usize,
    /// Inner walk steps (T).
    pub inner_steps: usize,
    /// Latent step size along the walk direction (eta). Under `capped`
    /// scaling this is the per-step length cap; under `proportional` it
    /// is the latent length per unit of output gap.
    pub latent_step: f64,
    pub walk_scaling: WalkScaling,
    /// Std of the per-step walk noise (epsilon_1).
    pub latent_noise: f64,
    /// Std of the latent neighborhood sampled around z_T (epsilon_2).
    pub neighborhood_std: f64,
    /// Radius of the latent ball the walk starts from.
    pub ball_radius: f64,
    /// Neighborhood batch size (B) for the moment-matching loss.
    pub batch: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 20,
            inner_steps: 10,
            latent_step: 0.05,
            walk_scaling: WalkScaling::Capped,
            latent_noise: 1e-3,
            neighborhood_std: 0.1,
            ball_radius: 0.01,
            batch: 32,
            lr: 2e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub rec_norm: RecNorm,
    pub schedule: ScheduleKind,
    pub lh_variant: LhVariant,
    /// Reproduce the literal printed sign of the walk-loss target instead
    /// of the convex combination.
    pub gh_literal_sign: bool,
    pub mmd_bandwidth: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            rec_norm: RecNorm::L1,
            schedule: ScheduleKind::Linear,
            lh_variant: LhVariant::Multivariate,
            gh_literal_sign: false,
            mmd_bandwidth: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionKind {
    Random,
    Passthrough,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    /// Projected dimension h; `None` picks `min(16, output_dim)`.
    pub dim: Option<usize>,
    pub kind: ProjectionKind,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self { dim: None, kind: ProjectionKind::Random }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinalgConfig {
    pub logdet_terms: usize,
    pub inverse_iters: usize,
    pub inverse_alpha: f64,
    /// 2 for the classical quadratic iteration, 3 for the cubic one.
    pub inverse_order: u32,
    pub reg_lambda: f64,
}

impl Default for LinalgConfig {
    fn default() -> Self {
        Self {
            logdet_terms: 20,
            inverse_iters: 100,
            inverse_alpha: 0.1,
            inverse_order: 3,
            reg_lambda: 1e-4,
        }
    }
}

/// The full run configuration; a seed plus this struct determines a
/// training run bit for bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: TrainMode,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainParams,
    pub losses: LossConfig,
    pub projection: ProjectionConfig,
    pub linalg: LinalgConfig,
    pub perturb: PerturbationSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            mode: TrainMode::Geo,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainParams::default(),
            losses: LossConfig::default(),
            projection: ProjectionConfig::default(),
            linalg: LinalgConfig::default(),
            perturb: PerturbationSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// The dataset this run trains on.
    pub fn dataset(&self) -> Result<ConditionalDataset> {
        ConditionalDataset::by_name(&self.data.name)
    }

    /// Effective projected dimension.
    pub fn projection_dim(&self, out_dim: usize) -> usize {
        self.projection.dim.unwrap_or_else(|| out_dim.min(16))
    }

    pub fn kl_params(&self) -> Result<KlParams> {
        Ok(KlParams {
            logdet_terms: self.linalg.logdet_terms,
            inverse_iters: self.linalg.inverse_iters,
            inverse_alpha: self.linalg.inverse_alpha,
            inverse_order: InverseOrder::from_u32(self.linalg.inverse_order)?,
            reg_lambda: self.linalg.reg_lambda,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ds = self.dataset()?;
        let field = |name: &str, msg: String| Error::Config(format!("{name}: {msg}"));
        if self.train.inner_steps < 1 {
            return Err(field("train.inner_steps", "must be >= 1".into()));
        }
        if self.train.ball_radius <= 0.0 {
            return Err(field("train.ball_radius", "must be > 0".into()));
        }
        if !(self.train.neighborhood_std > 0.0 && self.train.neighborhood_std < 1.0) {
            return Err(field(
                "train.neighborhood_std",
                format!("must lie in (0, 1), got {}", self.train.neighborhood_std),
            ));
        }
        if !(self.train.latent_noise >= 0.0 && self.train.latent_noise <= 0.1) {
            return Err(field(
                "train.latent_noise",
                format!("must be small (<= 0.1), got {}", self.train.latent_noise),
            ));
        }
        if self.train.batch < 2 {
            return Err(field("train.batch", "must be >= 2".into()));
        }
        if self.train.epochs == 0 {
            return Err(field("train.epochs", "must be >= 1".into()));
        }
        if !(self.train.lr > 0.0) {
            return Err(field("train.lr", "must be > 0".into()));
        }
        if self.model.latent_dim == 0 {
            return Err(field("model.latent_dim", "must be >= 1".into()));
        }
        self.losses.weights.validate()?;
        if self.losses.mmd_bandwidth <= 0.0 {
            return Err(field("losses.mmd_bandwidth", "must be > 0".into()));
        }
        let h = self.projection_dim(ds.out_dim());
        if h == 0 || h > ds.out_dim() {
            return Err(field(
                "projection.dim",
                format!("must satisfy 1 <= h <= {}, got {h}", ds.out_dim()),
            ));
        }
        InverseOrder::from_u32(self.linalg.inverse_order)?;
        if self.linalg.logdet_terms == 0 || self.linalg.inverse_iters == 0 {
            return Err(field("linalg", "iteration counts must be >= 1".into()));
        }
        if !(self.linalg.inverse_alpha > 0.0) {
            return Err(field("linalg.inverse_alpha", "must be > 0".into()));
        }
        if self.linalg.reg_lambda < 0.0 {
            return Err(field("linalg.reg_lambda", "must be >= 0".into()));
        }
        self.perturb.validate()?;
        Ok(())
    }
}
