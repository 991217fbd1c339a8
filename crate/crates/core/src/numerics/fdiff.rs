//! Central finite differences, used as independent oracles for the
//! reverse-mode gradients and as the derivative of the metric tensor
//! field in the geodesic right-hand side.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Central-difference Jacobian of a vector-valued function.
///
/// The result has one row per output coordinate and one column per input
/// coordinate. A non-finite evaluation is reported together with the
/// offending input coordinate.
pub fn finite_diff_jacobian<F>(f: F, z: &[f64], step: f64) -> Result<Matrix>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if step <= 0.0 {
        return Err(Error::Contract(format!("finite-difference step must be > 0, got {step}")));
    }
    let k = z.len();
    let probe = f(z);
    let m = probe.len();
    let mut jac = Matrix::zeros(m, k);
    let mut zp = z.to_vec();
    for j in 0..k {
        let orig = zp[j];
        zp[j] = orig + step;
        let plus = f(&zp);
        zp[j] = orig - step;
        let minus = f(&zp);
        zp[j] = orig;
        for i in 0..m {
            let d = (plus[i] - minus[i]) / (2.0 * step);
            if !d.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite finite-difference at input coordinate {j}, output {i}"
                )));
            }
            jac.set(i, j, d);
        }
    }
    Ok(jac)
}

/// Central-difference gradient of a scalar function.
pub fn finite_diff_grad<F>(f: F, z: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let j = finite_diff_jacobian(|x| vec![f(x)], z, step)?;
    Ok(j.row(0).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_recovers_its_matrix() {
        let a = Matrix::from_rows(&[&[1.0, -2.0, 0.5], &[3.0, 0.0, 4.0]]).unwrap();
        let j = finite_diff_jacobian(|z| a.matvec(z).unwrap(), &[0.3, 0.7, -0.1], 1e-5).unwrap();
        assert!(j.max_abs_diff(&a) < 1e-8);
    }

    #[test]
    fn trig_map_at_origin() {
        let f = |z: &[f64]| vec![z[0].sin(), z[1].cos()];
        let j = finite_diff_jacobian(f, &[0.0, 0.0], 1e-6).unwrap();
        let expect = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]).unwrap();
        assert!(j.max_abs_diff(&expect) < 1e-9);
    }

    #[test]
    fn zero_step_rejected() {
        let r = finite_diff_jacobian(|z| z.to_vec(), &[1.0], 0.0);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_evaluation_reports_coordinate() {
        let f = |z: &[f64]| vec![1.0 / (z[0] - 1.0)];
        let r = finite_diff_jacobian(f, &[1.0 - 1e-7], 1e-7);
        match r {
            Err(Error::Numeric(msg)) => assert!(msg.contains("coordinate 0")),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }
}
