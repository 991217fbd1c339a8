//! Randomized and iterative linear-algebra primitives: the sparse
//! three-point random projection, the truncated-series log-determinant,
//! the hyper-power iterative inverse, and power-iteration spectral radius
//! estimation. These are the pieces the moment-matching loss is built
//! from, so each one also has a differentiable twin in `losses` that
//! replays the same recurrence on the autodiff tape.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState};

/// Diagonal shift applied to sample covariances before inversion or
/// log-determinants; batch covariances are rank-deficient whenever the
/// batch is smaller than the projected dimension.
pub const DEFAULT_REG_LAMBDA: f64 = 1e-4;

/// Residual below which the hyper-power iteration is considered converged.
pub const INVERSE_RESIDUAL_TOL: f64 = 1e-8;

/// Window length for the divergence check of the hyper-power iteration.
const DIVERGENCE_WINDOW: usize = 10;

// ---------------------------------------------------------------------------
// Random projection
// ---------------------------------------------------------------------------

/// Sparse random projection with entries in `{-sqrt(3), 0, +sqrt(3)}`
/// drawn with probabilities `(1/6, 2/3, 1/6)`. Entries therefore have
/// mean 0 and variance 1, so projecting preserves squared norms in
/// expectation up to the factor `h`.
#[derive(Debug, Clone)]
pub struct RandomProjection {
    matrix: Matrix,
    seed: u64,
}

impl RandomProjection {
    /// Generate an `ambient_dim x proj_dim` projection. The same seed
    /// always reproduces the same matrix.
    pub fn generate(ambient_dim: usize, proj_dim: usize, seed: u64) -> Result<Self> {
        if proj_dim == 0 || proj_dim > ambient_dim {
            return Err(Error::Config(format!(
                "projection dim must satisfy 1 <= h <= M, got h={proj_dim}, M={ambient_dim}"
            )));
        }
        let mut rng = RngState::stream(seed, 0x70726f6a); // "proj"
        let root3 = 3.0_f64.sqrt();
        let mut data = Vec::with_capacity(ambient_dim * proj_dim);
        for _ in 0..ambient_dim * proj_dim {
            let u = rng.uniform();
            data.push(if u < 1.0 / 6.0 {
                root3
            } else if u < 2.0 / 6.0 {
                -root3
            } else {
                0.0
            });
        }
        Ok(Self { matrix: Matrix::from_vec(ambient_dim, proj_dim, data)?, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ambient_dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn proj_dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Project a row vector: `x^T R`, length `h`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ambient_dim(), "projection input length");
        let h = self.proj_dim();
        let mut out = vec![0.0; h];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = self.matrix.row(i);
            for (o, &r) in out.iter_mut().zip(row) {
                *o += xi * r;
            }
        }
        out
    }
}

/// Dimension-reduction step applied to batches before moment estimation.
#[derive(Debug, Clone)]
pub enum Projection {
    /// The sparse three-point random projection.
    Sparse(RandomProjection),
    /// No reduction; moments are taken in the ambient space.
    PassThrough { dim: usize },
}

impl Projection {
    pub fn out_dim(&self) -> usize {
        match self {
            Projection::Sparse(p) => p.proj_dim(),
            Projection::PassThrough { dim } => *dim,
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Projection::Sparse(p) => p.ambient_dim(),
            Projection::PassThrough { dim } => *dim,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Projection::Sparse(p) => p.apply(x),
            Projection::PassThrough { dim } => {
                assert_eq!(x.len(), *dim, "pass-through input length");
                x.to_vec()
            }
        }
    }
}

// ---------------------------------------------------------------------------
// SPD estimates
// ---------------------------------------------------------------------------

/// A symmetric positive-definite estimate: a symmetrized matrix plus the
/// diagonal regularization that was added to make it invertible.
#[derive(Debug, Clone)]
pub struct SpdEstimate {
    matrix: Matrix,
    regularization: f64,
}

impl SpdEstimate {
    /// Symmetrize `m`, add `lambda` to the diagonal, and verify positive
    /// definiteness via a Cholesky probe.
    pub fn new(m: Matrix, lambda: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Shape("SPD estimate needs a square matrix".into()));
        }
        let sym = m.add(&m.transpose())?.scale(0.5).add_diag(lambda);
        sym.cholesky().map_err(|e| {
            Error::Numeric(format!("matrix not positive definite after lambda={lambda}: {e}"))
        })?;
        Ok(Self { matrix: sym, regularization: lambda })
    }

    /// Wrap a matrix already known to be SPD (e.g. built as `J^T J`).
    pub fn from_spd(m: Matrix) -> Result<Self> {
        Self::new(m, 0.0)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn regularization(&self) -> f64 {
        self.regularization
    }
}

// ---------------------------------------------------------------------------
// Spectral radius
// ---------------------------------------------------------------------------

/// Power-iteration estimate of the largest absolute eigenvalue.
/// Returns 0 for the zero matrix.
pub fn spectral_radius(a: &Matrix, iters: usize) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::Shape("spectral radius needs a square matrix".into()));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(0.0);
    }
    // Deterministic start with all coordinates active.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * i as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = a.matvec(&v)?;
        let norm = crate::numerics::norm(&w);
        if norm < 1e-300 {
            return Ok(0.0);
        }
        lambda = norm / crate::numerics::norm(&v);
        v = w.iter().map(|x| x / norm).collect();
    }
    Ok(lambda)
}

// ---------------------------------------------------------------------------
// Log-determinant
// ---------------------------------------------------------------------------

/// Truncated-series log-determinant: `-sum_{i=1..n} tr(C^i)/i` with
/// `C = I - Sigma`. The caller must ensure `rho(C) < 1`; this is probed
/// with a power iteration and violations are reported as divergence.
pub fn logdet_series(sigma: &SpdEstimate, n: usize) -> Result<f64> {
    let dim = sigma.dim();
    let c = Matrix::identity(dim).sub(sigma.matrix())?;
    let rho = spectral_radius(&c, 100)?;
    if rho >= 1.0 {
        return Err(Error::Divergence(format!(
            "log-det series needs rho(I - Sigma) < 1, estimated rho = {rho:.6}"
        )));
    }
    let mut acc = 0.0;
    let mut power = c.clone();
    for i in 1..=n {
        acc += power.trace() / i as f64;
        if i < n {
            power = power.matmul(&c)?;
        }
    }
    Ok(-acc)
}

/// Scale-corrected log-determinant for arbitrary SPD input: rescales so
/// the series converges, then adds the exact correction,
/// `log|Sigma| = logdet_series(Sigma / s) + dim * log(s)` with
/// `s = rho(Sigma) + eps`.
pub fn log_det_scaled(sigma: &SpdEstimate, n: usize) -> Result<f64> {
    let s = spectral_radius(sigma.matrix(), 100)? + 1e-3;
    let scaled = SpdEstimate::from_spd(sigma.matrix().scale(1.0 / s))?;
    Ok(logdet_series(&scaled, n)? + sigma.dim() as f64 * s.ln())
}

// ---------------------------------------------------------------------------
// Hyper-power inverse
// ---------------------------------------------------------------------------

/// Hyper-power iteration order: the classical quadratic Newton-Schulz or
/// the cubic three-term variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InverseOrder {
    /// `V <- V (2I - Sigma V)`
    Two,
    /// `V <- V (3I - Sigma V (3I - Sigma V))`
    Three,
}

impl InverseOrder {
    pub fn from_u32(v: u32) -> Result<Self> {
        match v {
            2 => Ok(InverseOrder::Two),
            3 => Ok(InverseOrder::Three),
            other => Err(Error::Config(format!("inverse order must be 2 or 3, got {other}"))),
        }
    }
}

/// Iterative matrix inverse from `V_0 = alpha * Sigma^T`.
///
/// Requires `0 < alpha < 2 / rho(Sigma Sigma^T)`. The residual
/// `|V Sigma - I|_F` must keep decreasing; if it stalls above tolerance
/// for a full window the iteration is reported as divergent.
pub fn hyperpower_inverse(
    sigma: &SpdEstimate,
    n: usize,
    alpha: f64,
    order: InverseOrder,
) -> Result<Matrix> {
    let a = sigma.matrix();
    let dim = sigma.dim();
    let rho = spectral_radius(&a.matmul(&a.transpose())?, 100)?;
    if alpha <= 0.0 || alpha >= 2.0 / rho.max(1e-300) {
        return Err(Error::Contract(format!(
            "alpha must lie in (0, 2/rho(Sigma Sigma^T)) = (0, {:.6}), got {alpha}",
            2.0 / rho.max(1e-300)
        )));
    }
    let identity = Matrix::identity(dim);
    let three_i = identity.scale(3.0);
    let two_i = identity.scale(2.0);
    let mut v = a.transpose().scale(alpha);
    let mut window: Vec<f64> = Vec::with_capacity(DIVERGENCE_WINDOW + 1);
    for _ in 0..n {
        let residual = v.matmul(a)?.sub(&identity)?.frobenius_norm();
        if residual < INVERSE_RESIDUAL_TOL * 1e-6 {
            break; // numerically converged, further iterations are no-ops
        }
        window.push(residual);
        if window.len() > DIVERGENCE_WINDOW {
            let oldest = window.remove(0);
            if residual >= oldest && residual > INVERSE_RESIDUAL_TOL {
                return Err(Error::Divergence(format!(
                    "inverse residual stalled at {residual:.3e} over a {DIVERGENCE_WINDOW}-step window"
                )));
            }
        }
        v = match order {
            InverseOrder::Two => {
                let inner = two_i.sub(&a.matmul(&v)?)?;
                v.matmul(&inner)?
            }
            InverseOrder::Three => {
                let inner = three_i.sub(&a.matmul(&v)?)?;
                let mid = three_i.sub(&a.matmul(&v.matmul(&inner)?)?)?;
                v.matmul(&mid)?
            }
        };
        if !v.is_finite() {
            return Err(Error::Divergence("inverse iteration produced non-finite values".into()));
        }
    }
    Ok(v)
}

/// Largest admissible `alpha` given the paper default, clamped to half the
/// theoretical bound when the default would diverge.
pub fn safe_inverse_alpha(sigma: &SpdEstimate, preferred: f64) -> Result<f64> {
    let a = sigma.matrix();
    let rho = spectral_radius(&a.matmul(&a.transpose())?, 100)?;
    let bound = 2.0 / rho.max(1e-300);
    Ok(if preferred < bound { preferred } else { bound * 0.5 })
}
