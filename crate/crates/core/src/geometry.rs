//! Riemannian machinery over the generator's latent space.
//!
//! The generator is treated as a chart of the output manifold: the
//! pullback metric `M = J^T J` turns latent space into a Riemannian
//! manifold, geodesics solve the standard metric-form ODE, and
//! boundary-value geodesics are found by shooting over the initial
//! velocity. Everything here is pure given the map and the condition, so
//! evaluation sweeps can fan out freely.

use crate::error::{Error, Result};
use crate::models::GeneratorNet;
use crate::numerics::{self, finite_diff_jacobian, Matrix, RngState};

/// Anything that maps latent codes (plus a condition) to output space.
/// The default Jacobian is a central finite difference; maps with exact
/// derivatives override it.
pub trait LatentMap {
    fn latent_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn forward(&self, z: &[f64], x: &[f64]) -> Vec<f64>;

    fn jacobian_z(&self, z: &[f64], x: &[f64]) -> Matrix {
        finite_diff_jacobian(|zz| self.forward(zz, x), z, 1e-6)
            .expect("latent map evaluated to non-finite values")
    }
}

impl LatentMap for GeneratorNet {
    fn latent_dim(&self) -> usize {
        GeneratorNet::latent_dim(self)
    }

    fn output_dim(&self) -> usize {
        GeneratorNet::output_dim(self)
    }

    fn forward(&self, z: &[f64], x: &[f64]) -> Vec<f64> {
        GeneratorNet::forward(self, z, x)
    }

    fn jacobian_z(&self, z: &[f64], x: &[f64]) -> Matrix {
        GeneratorNet::jacobian_z(self, z, x)
    }
}

/// Linear chart `z -> A z`, handy as a flat-space reference model.
#[derive(Debug, Clone)]
pub struct LinearMap {
    a: Matrix,
}

impl LinearMap {
    pub fn new(a: Matrix) -> Self {
        Self { a }
    }

    pub fn identity(k: usize) -> Self {
        Self { a: Matrix::identity(k) }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }
}

impl LatentMap for LinearMap {
    fn latent_dim(&self) -> usize {
        self.a.cols()
    }

    fn output_dim(&self) -> usize {
        self.a.rows()
    }

    fn forward(&self, z: &[f64], _x: &[f64]) -> Vec<f64> {
        self.a.matvec(z).expect("linear map shapes")
    }

    fn jacobian_z(&self, _z: &[f64], _x: &[f64]) -> Matrix {
        self.a.clone()
    }
}

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Pullback metric `M = J^T J` at a latent point.
#[derive(Debug, Clone)]
pub struct MetricTensor {
    pub at: Vec<f64>,
    pub value: Matrix,
}

/// A point on a latent curve: parameter, position and velocity.
#[derive(Debug, Clone)]
pub struct CurveState {
    pub t: f64,
    pub z: Vec<f64>,
    pub zdot: Vec<f64>,
}

impl CurveState {
    pub fn new(t: f64, z: Vec<f64>, zdot: Vec<f64>) -> Self {
        debug_assert_eq!(z.len(), zdot.len());
        Self { t, z, zdot }
    }
}

/// A discretized curve at uniform parameter spacing, together with the
/// condition it was traced under.
#[derive(Debug, Clone)]
pub struct CurvePath {
    states: Vec<CurveState>,
    dt: f64,
    condition: Vec<f64>,
}

impl CurvePath {
    /// Validates strictly increasing, uniformly spaced parameters.
    pub fn new(states: Vec<CurveState>, condition: Vec<f64>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::Contract("a curve path needs at least 2 states".into()));
        }
        let dt = states[1].t - states[0].t;
        if dt <= 0.0 {
            return Err(Error::Contract("curve parameter must strictly increase".into()));
        }
        for w in states.windows(2) {
            let step = w[1].t - w[0].t;
            if (step - dt).abs() > 1e-12 {
                return Err(Error::Contract(format!(
                    "non-uniform parameter spacing: {step} vs {dt}"
                )));
            }
        }
        Ok(Self { states, dt, condition })
    }

    pub fn states(&self) -> &[CurveState] {
        &self.states
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn condition(&self) -> &[f64] {
        &self.condition
    }

    pub fn start(&self) -> &CurveState {
        &self.states[0]
    }

    pub fn end(&self) -> &CurveState {
        self.states.last().expect("non-empty path")
    }
}

/// Empirical two-sided Lipschitz summary over sampled latent pairs.
#[derive(Debug, Clone)]
pub struct BiLipschitzReport {
    pub pairs: usize,
    /// Smallest observed ratio (the `1/C` side).
    pub min_ratio: f64,
    /// Largest observed ratio (the `C` side).
    pub max_ratio: f64,
    /// Fixed-width histogram of ratios between min and max.
    pub histogram: Vec<usize>,
    /// Bucket edges for the histogram (len = histogram.len() + 1).
    pub edges: Vec<f64>,
    /// Number of geodesic-distance fallbacks (zero in the plain variant).
    pub fallbacks: usize,
}

/// How a boundary-value geodesic was obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum ShotOutcome {
    /// Shooting converged; endpoint miss in latent norm.
    Shooting { miss: f64 },
    /// Shooting failed; shortest path over a sampled latent lattice.
    GraphFallback,
}

/// A boundary-value geodesic: the path, its output-manifold length, and
/// how it was found.
#[derive(Debug, Clone)]
pub struct GeodesicSolution {
    pub path: CurvePath,
    pub length: f64,
    pub outcome: ShotOutcome,
}

/// Tunables for the geodesic machinery. Defaults follow the recorded
/// decisions: central differences with step 1e-4 for the metric
/// derivative, RK4 at 100 steps per unit time, condition threshold 1e10
/// with a 1e-8 Tikhonov rescue.
#[derive(Debug, Clone)]
pub struct GeoParams {
    pub fd_step: f64,
    pub steps_per_unit: usize,
    pub cond_threshold: f64,
    pub tikhonov: f64,
    /// Shooting: restarts seeded from scaled Euclidean directions.
    pub restarts: usize,
    /// Shooting: max objective evaluations per restart.
    pub max_evals: usize,
    /// Shooting: integration steps while searching (the final path is
    /// re-integrated at `steps_per_unit`).
    pub search_steps: usize,
    /// Shooting: success when the endpoint miss is below this fraction of
    /// the latent gap.
    pub miss_tol_rel: f64,
    /// Lattice fallback resolution per axis (k <= 3 only).
    pub lattice_nodes: usize,
}

impl Default for GeoParams {
    fn default() -> Self {
        Self {
            fd_step: 1e-4,
            steps_per_unit: 100,
            cond_threshold: 1e10,
            tikhonov: 1e-8,
            restarts: 8,
            max_evals: 110,
            search_steps: 16,
            miss_tol_rel: 1e-3,
            lattice_nodes: 21,
        }
    }
}

// ---------------------------------------------------------------------------
// Metric
// ---------------------------------------------------------------------------

/// `M = J^T J`, assembled from column dot products so it is exactly
/// symmetric.
pub fn metric_at<G: LatentMap + ?Sized>(map: &G, z: &[f64], x: &[f64]) -> MetricTensor {
    let j = map.jacobian_z(z, x);
    let k = j.cols();
    let mut m = Matrix::zeros(k, k);
    for a in 0..k {
        let ca = j.col(a);
        for b in a..k {
            let v = numerics::dot(&ca, &j.col(b));
            m.set(a, b, v);
            m.set(b, a, v);
        }
    }
    MetricTensor { at: z.to_vec(), value: m }
}

/// Metric speed `sqrt(zdot^T M(z) zdot)`.
pub fn metric_speed<G: LatentMap + ?Sized>(map: &G, z: &[f64], zdot: &[f64], x: &[f64]) -> f64 {
    let m = metric_at(map, z, x).value;
    let mz = m.matvec(zdot).expect("metric shapes");
    numerics::dot(zdot, &mz).max(0.0).sqrt()
}

/// Cholesky factor of the metric, regularized per the condition-number
/// policy. Reports the latent point on unrecoverable failure.
fn metric_factor(m: &Matrix, z: &[f64], params: &GeoParams) -> Result<Matrix> {
    let attempt = m.cholesky().or_else(|_| m.add_diag(params.tikhonov).cholesky());
    let l = attempt.map_err(|_| {
        Error::Geometry(format!("singular metric at z = {z:?} even after Tikhonov shift"))
    })?;
    // Condition estimate: largest eigenvalue by power iteration, smallest
    // by inverse iteration on the factor.
    let lam_max = crate::linalg::spectral_radius(m, 60)?;
    let mut v: Vec<f64> = (0..m.rows()).map(|i| 1.0 + 0.01 * i as f64).collect();
    let mut inv_lam = 0.0;
    for _ in 0..30 {
        let w = l.solve_with_factor(&v);
        let n = numerics::norm(&w);
        if n < 1e-300 {
            break;
        }
        inv_lam = n / numerics::norm(&v);
        v = w.iter().map(|x| x / n).collect();
    }
    let lam_min = if inv_lam > 0.0 { 1.0 / inv_lam } else { 0.0 };
    if lam_min > 0.0 && lam_max / lam_min > params.cond_threshold {
        return m.add_diag(params.tikhonov).cholesky().map_err(|_| {
            Error::Geometry(format!("ill-conditioned metric at z = {z:?}"))
        });
    }
    Ok(l)
}

// ---------------------------------------------------------------------------
// Geodesic ODE
// ---------------------------------------------------------------------------

/// Acceleration of the geodesic equation in metric form,
/// `z'' = -1/2 M^{-1} [ 2 (I kron zdot^T) dvec(M)/dz zdot
///                      - (dvec(M)/dz)^T (zdot kron zdot) ]`,
/// with the metric derivative taken by central finite differences.
pub fn geodesic_rhs<G: LatentMap + ?Sized>(
    map: &G,
    state: &CurveState,
    x: &[f64],
    params: &GeoParams,
) -> Result<Vec<f64>> {
    let k = state.z.len();
    let m = metric_at(map, &state.z, x).value;
    let l = metric_factor(&m, &state.z, params)?;

    // dM[j] = dM / dz_j
    let mut dm = Vec::with_capacity(k);
    let mut zp = state.z.clone();
    for j in 0..k {
        let orig = zp[j];
        zp[j] = orig + params.fd_step;
        let plus = metric_at(map, &zp, x).value;
        zp[j] = orig - params.fd_step;
        let minus = metric_at(map, &zp, x).value;
        zp[j] = orig;
        dm.push(plus.sub(&minus)?.scale(1.0 / (2.0 * params.fd_step)));
    }

    let zd = &state.zdot;
    // term1[m] = 2 sum_{i,j} dM[j][i][m] zd_i zd_j
    // term2[j] = zd^T dM[j] zd
    let mut rhs = vec![0.0; k];
    for mi in 0..k {
        let mut t1 = 0.0;
        for (j, dmj) in dm.iter().enumerate() {
            let mut inner = 0.0;
            for i in 0..k {
                inner += dmj.get(i, mi) * zd[i];
            }
            t1 += inner * zd[j];
        }
        rhs[mi] = 2.0 * t1;
    }
    for (j, dmj) in dm.iter().enumerate() {
        let mz = dmj.matvec(zd)?;
        rhs[j] -= numerics::dot(zd, &mz);
    }

    let accel = l.solve_with_factor(&rhs);
    Ok(accel.iter().map(|a| -0.5 * a).collect())
}

/// Fixed-step RK4 integration of the geodesic ODE from `start` over
/// `[start.t, start.t + t_span]`. The returned path has `steps + 1`
/// states. Blow-ups report the last finite parameter value.
pub fn integrate_geodesic<G: LatentMap + ?Sized>(
    map: &G,
    start: &CurveState,
    x: &[f64],
    t_span: f64,
    steps: usize,
    params: &GeoParams,
) -> Result<CurvePath> {
    if steps < 2 {
        return Err(Error::Contract(format!("need at least 2 steps, got {steps}")));
    }
    let h = t_span / steps as f64;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(start.clone());
    let mut z = start.z.clone();
    let mut v = start.zdot.clone();
    let mut t;

    let deriv = |z: &[f64], v: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let st = CurveState::new(0.0, z.to_vec(), v.to_vec());
        let a = geodesic_rhs(map, &st, x, params)?;
        Ok((v.to_vec(), a))
    };

    for i in 0..steps {
        let (k1z, k1v) = deriv(&z, &v)?;
        let (k2z, k2v) =
            deriv(&numerics::axpy(&z, h / 2.0, &k1z), &numerics::axpy(&v, h / 2.0, &k1v))?;
        let (k3z, k3v) =
            deriv(&numerics::axpy(&z, h / 2.0, &k2z), &numerics::axpy(&v, h / 2.0, &k2v))?;
        let (k4z, k4v) = deriv(&numerics::axpy(&z, h, &k3z), &numerics::axpy(&v, h, &k3v))?;
        for d in 0..z.len() {
            z[d] += h / 6.0 * (k1z[d] + 2.0 * k2z[d] + 2.0 * k3z[d] + k4z[d]);
            v[d] += h / 6.0 * (k1v[d] + 2.0 * k2v[d] + 2.0 * k3v[d] + k4v[d]);
        }
        t = start.t + (i + 1) as f64 * h;
        if !z.iter().chain(v.iter()).all(|c| c.is_finite()) {
            return Err(Error::BlowUp { last_valid_t: t - h });
        }
        states.push(CurveState::new(t, z.clone(), v.clone()));
    }
    CurvePath::new(states, x.to_vec())
}

/// Discrete curve length on the output manifold:
/// `sum_i sqrt(zdot_i^T M(z_i) zdot_i) dt` over path segments.
pub fn curve_length<G: LatentMap + ?Sized>(map: &G, path: &CurvePath, x: &[f64]) -> f64 {
    let states = path.states();
    let dt = path.dt();
    states[..states.len() - 1]
        .iter()
        .map(|s| metric_speed(map, &s.z, &s.zdot, x) * dt)
        .sum()
}

// ---------------------------------------------------------------------------
// Shooting
// ---------------------------------------------------------------------------

fn endpoint_miss<G: LatentMap + ?Sized>(
    map: &G,
    x: &[f64],
    z_from: &[f64],
    z_to: &[f64],
    velocity: &[f64],
    steps: usize,
    params: &GeoParams,
) -> f64 {
    let start = CurveState::new(0.0, z_from.to_vec(), velocity.to_vec());
    match integrate_geodesic(map, &start, x, 1.0, steps, params) {
        Ok(path) => numerics::norm(&numerics::sub(&path.end().z, z_to)),
        Err(_) => f64::INFINITY,
    }
}

/// Derivative-free Nelder-Mead minimization, bounded by function
/// evaluations. Returns the best point and its value.
fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    scale: f64,
    max_evals: usize,
    target: f64,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut evals = 0;
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let fx0 = f(x0);
    evals += 1;
    simplex.push((x0.to_vec(), fx0));
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += scale;
        let v = f(&p);
        evals += 1;
        simplex.push((p, v));
    }

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        if simplex[0].1 <= target {
            break;
        }
        let worst = simplex[n].clone();
        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|(p, _)| p[d]).sum::<f64>() / n as f64)
            .collect();
        let reflect: Vec<f64> = (0..n).map(|d| 2.0 * centroid[d] - worst.0[d]).collect();
        let fr = f(&reflect);
        evals += 1;
        if fr < simplex[0].1 {
            let expand: Vec<f64> =
                (0..n).map(|d| centroid[d] + 2.0 * (reflect[d] - centroid[d])).collect();
            let fe = f(&expand);
            evals += 1;
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract: Vec<f64> =
                (0..n).map(|d| centroid[d] + 0.5 * (worst.0[d] - centroid[d])).collect();
            let fc = f(&contract);
            evals += 1;
            if fc < worst.1 {
                simplex[n] = (contract, fc);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let p: Vec<f64> =
                        (0..n).map(|d| best[d] + 0.5 * (entry.0[d] - best[d])).collect();
                    let v = f(&p);
                    entry.0 = p;
                    entry.1 = v;
                    evals += 1;
                    if evals >= max_evals {
                        break;
                    }
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let best = simplex.swap_remove(0);
    (best.0, best.1)
}

/// Boundary-value geodesic between two latent points by multi-restart
/// shooting over the initial velocity. Restarts are seeded from the
/// Euclidean chord at several scales (plus small deterministic rotations);
/// `init_velocity`, when given, is tried first and enables warm starts.
///
/// If every restart misses, the solution falls back to a shortest path
/// over a sampled latent lattice (latent dim <= 3) and is flagged as such.
pub fn shoot_geodesic<G: LatentMap + ?Sized>(
    map: &G,
    x: &[f64],
    z_from: &[f64],
    z_to: &[f64],
    init_velocity: Option<&[f64]>,
    params: &GeoParams,
) -> Result<GeodesicSolution> {
    let gap = numerics::sub(z_to, z_from);
    let gap_norm = numerics::norm(&gap);
    if gap_norm == 0.0 {
        return Err(Error::Contract("shoot_geodesic requires z_from != z_to".into()));
    }
    let tol = params.miss_tol_rel * gap_norm;
    let scales = [1.0, 0.75, 1.3, 0.5, 1.7, 0.35, 2.2, 1.0];
    let mut seed_rng = RngState::stream(0x67656f, 1); // internal, deterministic
    let mut best: Option<(Vec<f64>, f64)> = None;

    let mut candidates: Vec<Vec<f64>> = Vec::new();
    if let Some(v0) = init_velocity {
        candidates.push(v0.to_vec());
    }
    for (i, s) in scales.iter().take(params.restarts).enumerate() {
        let mut v = numerics::scale(&gap, *s);
        if i >= 3 {
            // perturb direction for the later restarts
            for c in v.iter_mut() {
                *c += 0.15 * gap_norm * seed_rng.normal(0.0, 1.0);
            }
        }
        candidates.push(v);
    }

    for v0 in candidates {
        let obj =
            |vel: &[f64]| endpoint_miss(map, x, z_from, z_to, vel, params.search_steps, params);
        let (v, miss) = nelder_mead(obj, &v0, 0.1 * gap_norm, params.max_evals, tol);
        match &best {
            Some((_, m)) if *m <= miss => {}
            _ => best = Some((v, miss)),
        }
        if best.as_ref().map(|(_, m)| *m <= tol).unwrap_or(false) {
            break;
        }
    }

    let (velocity, miss) = best.expect("at least one restart ran");
    if miss <= tol {
        let start = CurveState::new(0.0, z_from.to_vec(), velocity);
        let steps = params.steps_per_unit.max(2);
        let path = integrate_geodesic(map, &start, x, 1.0, steps, params)?;
        let length = curve_length(map, &path, x);
        return Ok(GeodesicSolution { path, length, outcome: ShotOutcome::Shooting { miss } });
    }

    lattice_fallback(map, x, z_from, z_to, params)
}

/// Dijkstra over a regular latent lattice spanning the endpoints, with
/// image-space segment lengths as edge weights.
fn lattice_fallback<G: LatentMap + ?Sized>(
    map: &G,
    x: &[f64],
    z_from: &[f64],
    z_to: &[f64],
    params: &GeoParams,
) -> Result<GeodesicSolution> {
    let k = z_from.len();
    if k > 3 {
        return Err(Error::Geometry(format!(
            "shooting failed and the lattice fallback is capped to latent dim <= 3 (got {k})"
        )));
    }
    let n = params.lattice_nodes.max(3);
    // bounding box with 25% padding
    let mut lo = vec![0.0; k];
    let mut hi = vec![0.0; k];
    for d in 0..k {
        let a = z_from[d].min(z_to[d]);
        let b = z_from[d].max(z_to[d]);
        let pad = 0.25 * (b - a).max(1e-3);
        lo[d] = a - pad;
        hi[d] = b + pad;
    }
    let total: usize = n.pow(k as u32);
    let coord = |idx: usize| -> Vec<usize> {
        let mut rem = idx;
        (0..k)
            .map(|_| {
                let c = rem % n;
                rem /= n;
                c
            })
            .collect()
    };
    let point = |c: &[usize]| -> Vec<f64> {
        (0..k).map(|d| lo[d] + (hi[d] - lo[d]) * c[d] as f64 / (n - 1) as f64).collect()
    };
    let nearest = |z: &[f64]| -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for d in 0..k {
            let rel = ((z[d] - lo[d]) / (hi[d] - lo[d]) * (n - 1) as f64).round();
            let c = rel.clamp(0.0, (n - 1) as f64) as usize;
            idx += c * stride;
            stride *= n;
        }
        idx
    };

    // cache outputs at every node
    let outputs: Vec<Vec<f64>> = (0..total).map(|i| map.forward(&point(&coord(i)), x)).collect();

    let src = nearest(z_from);
    let dst = nearest(z_to);
    let mut dist = vec![f64::INFINITY; total];
    let mut prev = vec![usize::MAX; total];
    dist[src] = 0.0;
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(std::cmp::Reverse((OrderedF64(0.0), src)));
    while let Some(std::cmp::Reverse((d, u))) = heap.pop() {
        let d = d.0;
        if d > dist[u] {
            continue;
        }
        if u == dst {
            break;
        }
        let cu = coord(u);
        // odometer over the {-1, 0, 1}^k neighbor offsets
        let mut offsets = vec![-1i64; k];
        'neighbors: loop {
            if offsets.iter().any(|&o| o != 0) {
                let mut valid = true;
                let mut cv = vec![0usize; k];
                for d2 in 0..k {
                    let c = cu[d2] as i64 + offsets[d2];
                    if c < 0 || c >= n as i64 {
                        valid = false;
                        break;
                    }
                    cv[d2] = c as usize;
                }
                if valid {
                    let v: usize =
                        cv.iter().enumerate().map(|(d2, &c)| c * n.pow(d2 as u32)).sum();
                    let w = numerics::norm(&numerics::sub(&outputs[u], &outputs[v]));
                    if dist[u] + w < dist[v] {
                        dist[v] = dist[u] + w;
                        prev[v] = u;
                        heap.push(std::cmp::Reverse((OrderedF64(dist[v]), v)));
                    }
                }
            }
            // advance odometer
            for (d2, o) in offsets.iter_mut().enumerate() {
                *o += 1;
                if *o <= 1 {
                    continue 'neighbors;
                }
                *o = -1;
                if d2 == k - 1 {
                    break 'neighbors;
                }
            }
            break;
        }
    }
    if !dist[dst].is_finite() {
        return Err(Error::Geometry("lattice fallback found no path".into()));
    }

    // reconstruct node chain, then pin the exact endpoints
    let mut chain = vec![dst];
    while *chain.last().unwrap() != src {
        chain.push(prev[*chain.last().unwrap()]);
    }
    chain.reverse();
    let mut pts: Vec<Vec<f64>> = chain.iter().map(|&i| point(&coord(i))).collect();
    if let Some(first) = pts.first_mut() {
        *first = z_from.to_vec();
    }
    if let Some(last) = pts.last_mut() {
        *last = z_to.to_vec();
    }
    if pts.len() < 2 {
        pts = vec![z_from.to_vec(), z_to.to_vec()];
    }
    let length: f64 = pts
        .windows(2)
        .map(|w| numerics::norm(&numerics::sub(&map.forward(&w[1], x), &map.forward(&w[0], x))))
        .sum();
    let m = pts.len();
    let dt = 1.0 / (m - 1) as f64;
    let states: Vec<CurveState> = pts
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let zdot = if i + 1 < m {
                numerics::scale(&numerics::sub(&pts[i + 1], z), 1.0 / dt)
            } else {
                numerics::scale(&numerics::sub(z, &pts[i - 1]), 1.0 / dt)
            };
            CurveState::new(i as f64 * dt, z.clone(), zdot)
        })
        .collect();
    Ok(GeodesicSolution {
        path: CurvePath::new(states, x.to_vec())?,
        length,
        outcome: ShotOutcome::GraphFallback,
    })
}

#[derive(PartialEq, PartialOrd)]
struct OrderedF64(f64);

impl Eq for OrderedF64 {}

impl Ord for OrderedF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.partial_cmp(other).unwrap_or(std::cmp::Ordering::Equal)
    }
}

// ---------------------------------------------------------------------------
// Distortion and bi-lipschitz diagnostics
// ---------------------------------------------------------------------------

/// Finite Lipschitz ratio `|G(z1) - G(z2)| / |z1 - z2|`.
pub fn tau_ratio<G: LatentMap + ?Sized>(
    map: &G,
    x: &[f64],
    z1: &[f64],
    z2: &[f64],
) -> Result<f64> {
    let dz = numerics::norm(&numerics::sub(z1, z2));
    if dz == 0.0 {
        return Err(Error::Contract("tau ratio is undefined for coincident points".into()));
    }
    let dy = numerics::norm(&numerics::sub(&map.forward(z1, x), &map.forward(z2, x)));
    Ok(dy / dz)
}

/// `det(M)` via Cholesky, the local volume distortion of the chart.
pub fn distortion<G: LatentMap + ?Sized>(map: &G, z: &[f64], x: &[f64]) -> Result<f64> {
    let m = metric_at(map, z, x).value;
    m.det_spd().map_err(|e| Error::Geometry(format!("distortion at z = {z:?}: {e}")))
}

/// Empirical bi-lipschitz bounds over `pairs` sampled latent pairs.
/// With `use_geodesic` set, the numerator is the geodesic length from
/// shooting instead of the straight-chord output distance.
pub fn bilipschitz_report<G, S>(
    map: &G,
    x: &[f64],
    mut sampler: S,
    pairs: usize,
    use_geodesic: bool,
    rng: &mut RngState,
    params: &GeoParams,
) -> Result<BiLipschitzReport>
where
    G: LatentMap + ?Sized,
    S: FnMut(&mut RngState) -> (Vec<f64>, Vec<f64>),
{
    if pairs < 100 {
        return Err(Error::Contract(format!("need at least 100 pairs, got {pairs}")));
    }
    let mut ratios = Vec::with_capacity(pairs);
    let mut fallbacks = 0;
    while ratios.len() < pairs {
        let (z1, z2) = sampler(rng);
        let dz = numerics::norm(&numerics::sub(&z1, &z2));
        if dz == 0.0 {
            continue;
        }
        let ratio = if use_geodesic {
            let sol = shoot_geodesic(map, x, &z1, &z2, None, params)?;
            if sol.outcome == ShotOutcome::GraphFallback {
                fallbacks += 1;
            }
            sol.length / dz
        } else {
            tau_ratio(map, x, &z1, &z2)?
        };
        ratios.push(ratio);
    }
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let buckets = 16;
    let mut histogram = vec![0usize; buckets];
    let span = (max - min).max(f64::MIN_POSITIVE);
    for r in &ratios {
        let b = (((r - min) / span) * buckets as f64) as usize;
        histogram[b.min(buckets - 1)] += 1;
    }
    let edges = (0..=buckets).map(|i| min + span * i as f64 / buckets as f64).collect();
    Ok(BiLipschitzReport { pairs, min_ratio: min, max_ratio: max, histogram, edges, fallbacks })
}
