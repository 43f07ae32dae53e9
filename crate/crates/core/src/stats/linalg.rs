use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Smallest eigenvalue ratio accepted before an information matrix is treated as singular.
const CONDITION_FLOOR: f64 = 1e-12;

/// Inverse of a symmetric positive-definite information matrix.
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Collinearity);
    }
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if max.is_nan() || max <= 0.0 || min <= max * CONDITION_FLOOR {
        return Err(Error::Collinearity);
    }
    let chol = m.clone().cholesky().ok_or(Error::Collinearity)?;
    Ok(chol.inverse())
}

pub(crate) fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(spd_inverse(m)? * rhs)
}

/// Column means and standard deviations used to standardize covariates.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaling {
    pub fn of(x: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for (j, col) in x.column_iter().enumerate() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            if !(var.is_finite() && var > 0.0) {
                return Err(Error::Validation(format!("covariate {j} is constant")));
            }
            mean.push(m);
            scale.push(var.sqrt());
        }
        Ok(Scaling { mean, scale })
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x.clone();
        for (j, mut col) in z.column_iter_mut().enumerate() {
            col.apply(|v| *v = (*v - self.mean[j]) / self.scale[j]);
        }
        z
    }
}
