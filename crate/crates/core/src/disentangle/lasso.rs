use serde::{Deserialize, Serialize};

use super::DisentangleError;
use crate::numerics::soft_threshold;
use crate::tensor::Tensor;

/// Column-major `f64` design matrix. Inactive columns (flagged
/// zero-variance) are never updated by the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    active: Vec<bool>,
}

impl Design {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self, DisentangleError> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(DisentangleError::Shape("ragged design columns".into()));
        }
        let cols = columns.len();
        Ok(Self {
            rows,
            cols,
            data: columns.into_iter().flatten().collect(),
            active: vec![true; cols],
        })
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        let (rows, cols) = (t.rows(), t.cols());
        let mut data = vec![0.0; rows * cols];
        for (i, row) in t.iter_rows().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[j * rows + i] = v as f64;
            }
        }
        Self {
            rows,
            cols,
            data,
            active: vec![true; cols],
        }
    }

    pub fn with_inactive(mut self, inactive: &[bool]) -> Self {
        for (a, &off) in self.active.iter_mut().zip(inactive) {
            *a = !off;
        }
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn is_active(&self, j: usize) -> bool {
        self.active[j]
    }

    pub fn select_rows(&self, idx: &[usize]) -> Design {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for j in 0..self.cols {
            let col = self.column(j);
            data.extend(idx.iter().map(|&i| col[i]));
        }
        Design {
            rows: idx.len(),
            cols: self.cols,
            data,
            active: self.active.clone(),
        }
    }

    /// `Z beta`
    pub fn mul(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (o, &z) in out.iter_mut().zip(self.column(j)) {
                    *o += z * b;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub factor_name: String,
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub lam: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LassoModel {
    pub fn predict(&self, z: &Design) -> Vec<f64> {
        z.mul(&self.beta)
            .into_iter()
            .map(|v| v + self.intercept)
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }
}

fn check_target(z: &Design, f: &[f64]) -> Result<(), DisentangleError> {
    if f.len() != z.rows() {
        return Err(DisentangleError::Shape(format!(
            "{} targets for {} design rows",
            f.len(),
            z.rows()
        )));
    }
    if z.rows() < 2 {
        return Err(DisentangleError::InsufficientSamples { m: z.rows(), k: 1 });
    }
    Ok(())
}

/// Smallest penalty with an all-zero solution: `max_j |z_j . (f - mean f)| / M`.
pub fn lambda_max(z: &Design, f: &[f64]) -> Result<f64, DisentangleError> {
    check_target(z, f)?;
    let m = z.rows() as f64;
    let mean = f.iter().sum::<f64>() / m;
    Ok((0..z.cols())
        .filter(|&j| z.is_active(j))
        .map(|j| {
            z.column(j)
                .iter()
                .zip(f)
                .map(|(a, y)| a * (y - mean))
                .sum::<f64>()
                .abs()
                / m
        })
        .fold(0.0, f64::max))
}

/// Cyclic coordinate descent on `(1/2M) |f - Z beta|^2 + lam |beta|_1`.
///
/// The target is centered first and the intercept is its mean, so `Z` is
/// expected to have centered columns. Hitting `max_iter` is not an error; the
/// model records `converged = false`.
pub fn fit_lasso(
    z: &Design,
    f: &[f64],
    lam: f64,
    opts: &LassoOptions,
) -> Result<LassoModel, DisentangleError> {
    check_target(z, f)?;
    if !(lam >= 0.0) || !lam.is_finite() {
        return Err(DisentangleError::Domain(format!("lambda {lam} must be >= 0")));
    }
    let m = z.rows() as f64;
    let intercept = f.iter().sum::<f64>() / m;
    let mut resid: Vec<f64> = f.iter().map(|y| y - intercept).collect();
    let p = z.cols();
    let norms: Vec<f64> = (0..p)
        .map(|j| z.column(j).iter().map(|v| v * v).sum::<f64>() / m)
        .collect();
    let mut beta = vec![0.0; p];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut max_change = 0.0f64;
        for j in 0..p {
            if !z.is_active(j) || norms[j] == 0.0 {
                continue;
            }
            let col = z.column(j);
            let old = beta[j];
            let rho = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / m + norms[j] * old;
            let new = soft_threshold(rho, lam) / norms[j];
            let delta = new - old;
            if delta != 0.0 {
                for (r, &a) in resid.iter_mut().zip(col) {
                    *r -= a * delta;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(LassoModel {
        factor_name: String::new(),
        beta,
        intercept,
        lam,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn centered_design(m: usize, p: usize, rng: &mut Rng) -> Design {
        let cols = (0..p)
            .map(|_| {
                let c: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
                let mu = c.iter().sum::<f64>() / m as f64;
                c.into_iter().map(|v| v - mu).collect()
            })
            .collect();
        Design::from_columns(cols).unwrap()
    }

    #[test]
    fn huge_penalty_zeroes_everything() {
        let mut rng = Rng::new(1);
        let z = centered_design(50, 6, &mut rng);
        let f: Vec<f64> = (0..50).map(|_| rng.normal() + 3.0).collect();
        let lmax = lambda_max(&z, &f).unwrap();
        let model = fit_lasso(&z, &f, lmax, &LassoOptions::default()).unwrap();
        assert!(model.beta.iter().all(|&b| b == 0.0));
        assert!((model.intercept - f.iter().sum::<f64>() / 50.0).abs() < 1e-12);
        let below = fit_lasso(&z, &f, 0.9 * lmax, &LassoOptions::default()).unwrap();
        assert!(below.nnz() > 0);
    }

    #[test]
    fn inactive_columns_stay_zero() {
        let mut rng = Rng::new(2);
        let z = centered_design(40, 3, &mut rng).with_inactive(&[false, true, false]);
        let f: Vec<f64> = z.column(1).to_vec();
        let model = fit_lasso(&z, &f, 0.0, &LassoOptions::default()).unwrap();
        assert_eq!(model.beta[1], 0.0);
    }

    #[test]
    fn input_errors() {
        let z = Design::from_columns(vec![vec![1.0, -1.0]]).unwrap();
        assert!(fit_lasso(&z, &[1.0], 0.1, &LassoOptions::default()).is_err());
        assert!(fit_lasso(&z, &[1.0, 2.0], -0.1, &LassoOptions::default()).is_err());
        assert!(Design::from_columns(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn tensor_and_column_constructors_agree() {
        let t = Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let d = Design::from_tensor(&t);
        assert_eq!(d.column(1), &[2.0, 5.0]);
        assert_eq!(d, Design::from_columns(vec![vec![1., 4.], vec![2., 5.], vec![3., 6.]]).unwrap());
        assert_eq!(d.select_rows(&[1]).column(2), &[6.0]);
    }
}
