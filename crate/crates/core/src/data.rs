//! Synthetic conditional datasets with known conditional structure, so
//! medians, means and mode locations are analytically available, plus the
//! perturbation operator that builds target neighborhoods.

use crate::error::{Error, Result};
use crate::numerics::{normal_cdf, RngState};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// A conditional mode: either a point in output space or a ring (used by
/// the concentric-rings task, where each conditional mode is a whole
/// circle rather than a cluster center).
#[derive(Debug, Clone)]
pub enum Mode {
    Point(Vec<f64>),
    Ring { center: Vec<f64>, radius: f64 },
}

impl Mode {
    /// Distance from an output sample to this mode.
    pub fn distance_to(&self, y: &[f64]) -> f64 {
        match self {
            Mode::Point(p) => crate::numerics::norm(&crate::numerics::sub(y, p)),
            Mode::Ring { center, radius } => {
                let r = crate::numerics::norm(&crate::numerics::sub(y, center));
                (r - radius).abs()
            }
        }
    }
}

/// The three synthetic tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    Bimodal1d,
    CondRings2d,
    CondGrid8x8,
}

impl DatasetName {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "bimodal1d" => Ok(Self::Bimodal1d),
            "cond_rings2d" => Ok(Self::CondRings2d),
            "cond_grid8x8" => Ok(Self::CondGrid8x8),
            other => Err(Error::Config(format!(
                "unknown dataset '{other}' (expected bimodal1d, cond_rings2d or cond_grid8x8)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Bimodal1d => "bimodal1d",
            Self::CondRings2d => "cond_rings2d",
            Self::CondGrid8x8 => "cond_grid8x8",
        }
    }
}

// bimodal1d constants: y | x ~ 0.75 N(x, 0.1^2) + 0.25 N(x + 10, 0.1^2)
const BIMODAL_STD: f64 = 0.1;
const BIMODAL_W1: f64 = 0.75;
const BIMODAL_GAP: f64 = 10.0;

// cond_rings2d constants
const RING_BASE: f64 = 0.5;
const RING_STEP: f64 = 0.5;
const RING_NOISE: f64 = 0.02;

// cond_grid8x8 constants
const GRID: usize = 8;
const BUMP_SIGMA: f64 = 1.2;
const GRID_NOISE: f64 = 0.01;

/// A synthetic conditional task: a sampler plus its analytic descriptors.
#[derive(Debug, Clone)]
pub struct ConditionalDataset {
    name: DatasetName,
}

impl ConditionalDataset {
    pub fn new(name: DatasetName) -> Self {
        Self { name }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::new(DatasetName::parse(name)?))
    }

    pub fn name(&self) -> DatasetName {
        self.name
    }

    pub fn cond_dim(&self) -> usize {
        match self.name {
            DatasetName::Bimodal1d | DatasetName::CondRings2d => 1,
            DatasetName::CondGrid8x8 => 2,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self.name {
            DatasetName::Bimodal1d => 1,
            DatasetName::CondRings2d => 2,
            DatasetName::CondGrid8x8 => GRID * GRID,
        }
    }

    /// Number of conditional modes at `x`.
    pub fn n_modes(&self, x: &[f64]) -> usize {
        self.modes(x).len()
    }

    pub fn sample_x(&self, rng: &mut RngState) -> Vec<f64> {
        match self.name {
            DatasetName::Bimodal1d | DatasetName::CondRings2d => {
                vec![rng.uniform_in(-1.0, 1.0)]
            }
            DatasetName::CondGrid8x8 => {
                // keep the two bump positions distinguishable: reject
                // conditions whose mirror lands too close
                loop {
                    let x = vec![rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)];
                    let (p, q) = grid_positions(&x);
                    let d2 = (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2);
                    if d2 >= 9.0 {
                        return x;
                    }
                }
            }
        }
    }

    pub fn sample_y(&self, x: &[f64], rng: &mut RngState) -> Vec<f64> {
        match self.name {
            DatasetName::Bimodal1d => {
                let m = if rng.uniform() < BIMODAL_W1 { x[0] } else { x[0] + BIMODAL_GAP };
                vec![m + rng.normal(0.0, BIMODAL_STD)]
            }
            DatasetName::CondRings2d => {
                let n = ring_count(x[0]);
                let j = rng.below(n);
                let r = RING_BASE + RING_STEP * j as f64 + rng.normal(0.0, RING_NOISE);
                let theta = rng.uniform_in(0.0, std::f64::consts::TAU);
                vec![r * theta.cos(), r * theta.sin()]
            }
            DatasetName::CondGrid8x8 => {
                let (p, q) = grid_positions(x);
                let pos = if rng.uniform() < 0.5 { p } else { q };
                let amp = rng.uniform_in(0.8, 1.2);
                let mut img = bump_image(pos, amp);
                for v in img.iter_mut() {
                    *v += rng.normal(0.0, GRID_NOISE);
                }
                img
            }
        }
    }

    pub fn sample_pairs(&self, n: usize, rng: &mut RngState) -> Vec<(Vec<f64>, Vec<f64>)> {
        (0..n)
            .map(|_| {
                let x = self.sample_x(rng);
                let y = self.sample_y(&x, rng);
                (x, y)
            })
            .collect()
    }

    /// Conditional modes at `x`.
    pub fn modes(&self, x: &[f64]) -> Vec<Mode> {
        match self.name {
            DatasetName::Bimodal1d => {
                vec![Mode::Point(vec![x[0]]), Mode::Point(vec![x[0] + BIMODAL_GAP])]
            }
            DatasetName::CondRings2d => (0..ring_count(x[0]))
                .map(|j| Mode::Ring {
                    center: vec![0.0, 0.0],
                    radius: RING_BASE + RING_STEP * j as f64,
                })
                .collect(),
            DatasetName::CondGrid8x8 => {
                let (p, q) = grid_positions(x);
                vec![Mode::Point(bump_image(p, 1.0)), Mode::Point(bump_image(q, 1.0))]
            }
        }
    }

    /// Assignment radius for coverage counting: half the minimum distance
    /// between the modes at `x`.
    pub fn mode_radius(&self, x: &[f64]) -> f64 {
        match self.name {
            DatasetName::Bimodal1d => BIMODAL_GAP / 2.0,
            DatasetName::CondRings2d => RING_STEP / 2.0,
            DatasetName::CondGrid8x8 => {
                let modes = self.modes(x);
                0.5 * modes[0].distance_to(match &modes[1] {
                    Mode::Point(p) => p,
                    _ => unreachable!(),
                })
            }
        }
    }

    /// Analytic conditional mean.
    pub fn conditional_mean(&self, x: &[f64]) -> Vec<f64> {
        match self.name {
            DatasetName::Bimodal1d => {
                vec![BIMODAL_W1 * x[0] + (1.0 - BIMODAL_W1) * (x[0] + BIMODAL_GAP)]
            }
            DatasetName::CondRings2d => vec![0.0, 0.0],
            DatasetName::CondGrid8x8 => {
                let (p, q) = grid_positions(x);
                let a = bump_image(p, 1.0);
                let b = bump_image(q, 1.0);
                a.iter().zip(&b).map(|(u, v)| 0.5 * (u + v)).collect()
            }
        }
    }

    /// Analytic conditional median (defined for the scalar task only),
    /// located by bisection on the mixture CDF.
    pub fn conditional_median(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self.name {
            DatasetName::Bimodal1d => {
                let m1 = x[0];
                let m2 = x[0] + BIMODAL_GAP;
                let cdf = |v: f64| {
                    BIMODAL_W1 * normal_cdf((v - m1) / BIMODAL_STD)
                        + (1.0 - BIMODAL_W1) * normal_cdf((v - m2) / BIMODAL_STD)
                };
                let (mut lo, mut hi) = (m1 - 2.0, m2 + 2.0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if cdf(mid) < 0.5 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Some(vec![0.5 * (lo + hi)])
            }
            _ => None,
        }
    }

    /// Write pairs as CSV with header `x0..x_{d-1}, y0..y_{M-1}`.
    pub fn export_csv<W: Write>(
        &self,
        pairs: &[(Vec<f64>, Vec<f64>)],
        out: &mut W,
    ) -> Result<()> {
        let header: Vec<String> = (0..self.cond_dim())
            .map(|i| format!("x{i}"))
            .chain((0..self.out_dim()).map(|i| format!("y{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (x, y) in pairs {
            let row: Vec<String> =
                x.iter().chain(y.iter()).map(|v| format!("{v}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn ring_count(x: f64) -> usize {
    // x in [-1, -1/3) -> 2 rings, [-1/3, 1/3) -> 3, [1/3, 1] -> 4
    if x < -1.0 / 3.0 {
        2
    } else if x < 1.0 / 3.0 {
        3
    } else {
        4
    }
}

fn grid_positions(x: &[f64]) -> ((f64, f64), (f64, f64)) {
    let to_grid = |v: f64| (v.clamp(-1.0, 1.0) + 1.0) / 2.0 * (GRID as f64 - 1.0);
    let p = (to_grid(x[0]), to_grid(x[1]));
    let q = (GRID as f64 - 1.0 - p.0, GRID as f64 - 1.0 - p.1);
    (p, q)
}

fn bump_image(pos: (f64, f64), amp: f64) -> Vec<f64> {
    let mut img = vec![0.0; GRID * GRID];
    for (idx, v) in img.iter_mut().enumerate() {
        let (i, j) = ((idx / GRID) as f64, (idx % GRID) as f64);
        let d2 = (i - pos.0).powi(2) + (j - pos.1).powi(2);
        *v = amp * (-d2 / (2.0 * BUMP_SIGMA * BUMP_SIGMA)).exp();
    }
    img
}

// ---------------------------------------------------------------------------
// Perturbation operator
// ---------------------------------------------------------------------------

/// Random brightness / contrast / noise perturbation used to build the
/// target neighborhood around a ground-truth sample.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PerturbationSpec {
    /// Brightness shift drawn from `[-brightness, +brightness]`.
    pub brightness: f64,
    /// Contrast scale drawn from `[contrast.0, contrast.1]`.
    pub contrast: (f64, f64),
    /// Per-coordinate additive Gaussian noise.
    pub noise_std: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self { brightness: 0.05, contrast: (0.95, 1.05), noise_std: 0.01 }
    }
}

impl PerturbationSpec {
    /// All ranges collapsed: the perturbation is the identity.
    pub fn identity() -> Self {
        Self { brightness: 0.0, contrast: (1.0, 1.0), noise_std: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.brightness < 0.0 || self.noise_std < 0.0 || self.contrast.0 > self.contrast.1 {
            return Err(Error::Config(format!("invalid perturbation spec {self:?}")));
        }
        Ok(())
    }
}

/// `y' = c y + b + n` with `c ~ U(contrast)`, `b ~ U(+-brightness)` and
/// `n ~ N(0, noise_std^2)` per coordinate.
pub fn perturb(y: &[f64], spec: &PerturbationSpec, rng: &mut RngState) -> Vec<f64> {
    let c = rng.uniform_in(spec.contrast.0, spec.contrast.1);
    let b = rng.uniform_in(-spec.brightness, spec.brightness);
    y.iter().map(|&v| c * v + b + rng.normal(0.0, spec.noise_std)).collect()
}
