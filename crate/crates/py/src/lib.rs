//! Python bindings: a thin veneer over the core library exposing the
//! trained generator, the training entry point, and the approximate
//! linear-algebra primitives. Matrices cross the boundary as nested
//! lists of floats; at desk scale this is plenty.

use ggen::checkpoint::load_checkpoint;
use ggen::config::RunConfig;
use ggen::error::Error as GgenError;
use ggen::evaluation;
use ggen::geometry::{self, GeoParams};
use ggen::linalg::{hyperpower_inverse, logdet_series, InverseOrder, SpdEstimate};
use ggen::losses::{lh_loss, GaussianMoments, KlParams};
use ggen::numerics::{Matrix, RngState};
use ggen::training::TrainedModels;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use std::path::Path;

fn to_py_err(e: GgenError) -> PyErr {
    match &e {
        GgenError::Io(_) | GgenError::Integrity(_) | GgenError::Version(_) => {
            PyIOError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    let r = rows.len();
    let c = rows.first().map(|row| row.len()).unwrap_or(0);
    let mut data = Vec::with_capacity(r * c);
    for row in &rows {
        if row.len() != c {
            return Err(PyValueError::new_err("ragged matrix rows"));
        }
        data.extend_from_slice(row);
    }
    Matrix::from_vec(r, c, data).map_err(to_py_err)
}

fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// A trained conditional generator loaded from a checkpoint.
#[pyclass]
struct Generator {
    models: TrainedModels,
}

#[pymethods]
impl Generator {
    /// Load a generator (and its evaluation latent scale) from a
    /// `model.ckpt` file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ckpt = load_checkpoint(Path::new(path)).map_err(to_py_err)?;
        Ok(Self { models: ckpt.models })
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.models.gen.latent_dim()
    }

    #[getter]
    fn cond_dim(&self) -> usize {
        self.models.gen.cond_dim()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.models.gen.output_dim()
    }

    #[getter]
    fn latent_scale(&self) -> f64 {
        self.models.latent_scale
    }

    #[getter]
    fn mode(&self) -> String {
        self.models.mode.as_str().to_string()
    }

    /// Forward pass `G(z, x)`.
    fn forward(&self, z: Vec<f64>, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dims(&z, &x)?;
        Ok(self.models.gen.forward(&z, &x))
    }

    /// Exact Jacobian `dG/dz` as a list of rows.
    fn jacobian(&self, z: Vec<f64>, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        self.check_dims(&z, &x)?;
        Ok(matrix_to_rows(&self.models.gen.jacobian_z(&z, &x)))
    }

    /// Pullback metric `J^T J` at a latent point.
    fn metric(&self, z: Vec<f64>, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        self.check_dims(&z, &x)?;
        Ok(matrix_to_rows(&geometry::metric_at(&self.models.gen, &z, &x).value))
    }

    /// Draw `n` outputs at the model's evaluation latent scale.
    fn sample(&self, x: Vec<f64>, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        if x.len() != self.models.gen.cond_dim() {
            return Err(PyValueError::new_err("condition length mismatch"));
        }
        let mut rng = RngState::stream(seed, 900);
        Ok((0..n)
            .map(|_| {
                let z = self.models.sample_eval_latent(&mut rng);
                self.models.gen.forward(&z, &x)
            })
            .collect())
    }

    /// Finite Lipschitz ratio between two latent points.
    fn tau(&self, x: Vec<f64>, z1: Vec<f64>, z2: Vec<f64>) -> PyResult<f64> {
        geometry::tau_ratio(&self.models.gen, &x, &z1, &z2).map_err(to_py_err)
    }

    /// Geodesic distance between two latent codes on the output manifold
    /// (multi-restart shooting).
    fn geodesic_distance(&self, x: Vec<f64>, z_from: Vec<f64>, z_to: Vec<f64>) -> PyResult<f64> {
        let sol = geometry::shoot_geodesic(
            &self.models.gen,
            &x,
            &z_from,
            &z_to,
            None,
            &GeoParams::default(),
        )
        .map_err(to_py_err)?;
        Ok(sol.length)
    }

    /// Mean std/mean of the metric speed over random straight-line
    /// interpolations.
    fn interpolation_dispersion(
        &self,
        x: Vec<f64>,
        pairs: usize,
        steps: usize,
        seed: u64,
    ) -> PyResult<f64> {
        let (agg, _) = evaluation::interpolation_study(&self.models, &x, pairs, steps, seed)
            .map_err(to_py_err)?;
        Ok(agg)
    }
}

impl Generator {
    fn check_dims(&self, z: &[f64], x: &[f64]) -> PyResult<()> {
        if z.len() != self.models.gen.latent_dim() {
            return Err(PyValueError::new_err(format!(
                "latent length {} != {}",
                z.len(),
                self.models.gen.latent_dim()
            )));
        }
        if x.len() != self.models.gen.cond_dim() {
            return Err(PyValueError::new_err(format!(
                "condition length {} != {}",
                x.len(),
                self.models.gen.cond_dim()
            )));
        }
        Ok(())
    }
}

/// Train from a TOML config string; writes `model.ckpt`, `metrics.csv`
/// and `manifest.json` into `out_dir` and returns the checkpoint path.
#[pyfunction]
fn train(config_toml: &str, out_dir: &str) -> PyResult<String> {
    let cfg = RunConfig::from_toml_str(config_toml).map_err(to_py_err)?;
    let artifacts = ggen::driver::train_into(&cfg, Path::new(out_dir)).map_err(to_py_err)?;
    if let Some(reason) = artifacts.aborted {
        return Err(PyValueError::new_err(format!("training aborted: {reason}")));
    }
    Ok(artifacts.checkpoint.display().to_string())
}

/// The default run configuration as a TOML string.
#[pyfunction]
fn default_config() -> String {
    RunConfig::default().to_toml_string()
}

/// Truncated-series log-determinant of an SPD matrix (raw series; the
/// caller must keep the spectrum inside the unit convergence disk).
#[pyfunction(name = "logdet_series")]
fn logdet_series_py(matrix: Vec<Vec<f64>>, terms: usize) -> PyResult<f64> {
    let m = matrix_from_rows(matrix)?;
    let spd = SpdEstimate::from_spd(m).map_err(to_py_err)?;
    logdet_series(&spd, terms).map_err(to_py_err)
}

/// Hyper-power iterative inverse of an SPD matrix.
#[pyfunction(name = "hyperpower_inverse")]
fn hyperpower_inverse_py(
    matrix: Vec<Vec<f64>>,
    iters: usize,
    alpha: f64,
    order: u32,
) -> PyResult<Vec<Vec<f64>>> {
    let m = matrix_from_rows(matrix)?;
    let spd = SpdEstimate::from_spd(m).map_err(to_py_err)?;
    let order = InverseOrder::from_u32(order).map_err(to_py_err)?;
    let v = hyperpower_inverse(&spd, iters, alpha, order).map_err(to_py_err)?;
    Ok(matrix_to_rows(&v))
}

/// Second-moment Gaussian KL between target and generated moments, using
/// the same truncated-series / hyper-power machinery as training.
#[pyfunction]
fn second_moment_kl(
    gen_mean: Vec<f64>,
    gen_cov: Vec<Vec<f64>>,
    tgt_mean: Vec<f64>,
    tgt_cov: Vec<Vec<f64>>,
    logdet_terms: usize,
) -> PyResult<f64> {
    let gen = GaussianMoments {
        mean: gen_mean,
        cov: SpdEstimate::from_spd(matrix_from_rows(gen_cov)?).map_err(to_py_err)?,
        count: 2,
    };
    let tgt = GaussianMoments {
        mean: tgt_mean,
        cov: SpdEstimate::from_spd(matrix_from_rows(tgt_cov)?).map_err(to_py_err)?,
        count: 2,
    };
    let params = KlParams { logdet_terms, ..KlParams::default() };
    lh_loss(&gen, &tgt, &params).map_err(to_py_err)
}

/// Aggregate mode coverage of a checkpointed model on its own dataset.
#[pyfunction]
fn mode_coverage(checkpoint: &str, samples_per_x: usize, seed: u64) -> PyResult<f64> {
    let ckpt = load_checkpoint(Path::new(checkpoint)).map_err(to_py_err)?;
    let dataset = ckpt.config.dataset().map_err(to_py_err)?;
    let conditions = evaluation::condition_grid(&dataset, 6, seed);
    let report =
        evaluation::mode_coverage(&ckpt.models, &dataset, &conditions, samples_per_x, seed)
            .map_err(to_py_err)?;
    Ok(report.aggregate)
}

#[pymodule]
fn ggen_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Generator>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(logdet_series_py, m)?)?;
    m.add_function(wrap_pyfunction!(hyperpower_inverse_py, m)?)?;
    m.add_function(wrap_pyfunction!(second_moment_kl, m)?)?;
    m.add_function(wrap_pyfunction!(mode_coverage, m)?)?;
    Ok(())
}
