//! Central finite differences, used as derivative oracles.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

/// Step for coordinate `v`: `h · max(1, |v|)`.
fn step(h: f64, v: f64) -> f64 {
    h * v.abs().max(1.0)
}

/// Central-difference Jacobian of `f` at `v`, one column per coordinate.
pub fn jacobian<F>(f: F, v: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut cols = Vec::with_capacity(v.len());
    for i in 0..v.len() {
        let hi = step(h, v[i]);
        let (mut p, mut m) = (v.clone(), v.clone());
        p[i] += hi;
        m[i] -= hi;
        cols.push((f(&p)? - f(&m)?) / (2.0 * hi));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Central-difference gradient of a scalar function.
pub fn gradient<F>(f: F, v: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let j = jacobian(|u| Ok(DVector::from_element(1, f(u)?)), v, h)?;
    Ok(j.row(0).transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let v = DVector::from_vec(vec![0.5, -2.0]);
        let g = gradient(|u| Ok(u[0] * u[0] + 3.0 * u[0] * u[1]), &v, 1e-4).unwrap();
        assert!((g[0] - (1.0 - 6.0)).abs() < 1e-8);
        assert!((g[1] - 1.5).abs() < 1e-8);
        let j = jacobian(|u| Ok(DVector::from_vec(vec![u[1], u[0] * u[1]])), &v, 1e-4).unwrap();
        assert!((j[(1, 0)] + 2.0).abs() < 1e-8 && (j[(0, 1)] - 1.0).abs() < 1e-12);
    }
}
