//! Plain dense kernels over row-major `Tensor`s. Reductions accumulate in
//! `f64`; results are stored as `f32`.

use super::NumericsError;
use crate::tensor::Tensor;

pub fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn transpose(a: &Tensor) -> Tensor {
    let (r, c) = (a.rows(), a.cols());
    let mut out = vec![0.0f32; r * c];
    for i in 0..r {
        for (j, &v) in a.row(i).iter().enumerate() {
            out[j * r + i] = v;
        }
    }
    Tensor::matrix(c, r, out).expect("transpose keeps element count")
}

pub fn matvec(a: &Tensor, x: &[f32]) -> Result<Vec<f32>, NumericsError> {
    if a.cols() != x.len() {
        return Err(NumericsError::Shape(format!(
            "matvec {:?} x [{}]",
            a.shape(),
            x.len()
        )));
    }
    Ok(a.iter_rows().map(|row| dot_f64(row, x) as f32).collect())
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    if a.cols() != b.rows() {
        return Err(NumericsError::Shape(format!(
            "matmul {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut acc = vec![0.0f64; n];
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (p, &av) in a.row(i).iter().enumerate().take(k) {
            let av = av as f64;
            for (o, &bv) in acc.iter_mut().zip(b.row(p)) {
                *o += av * bv as f64;
            }
        }
        out.extend(acc.iter().map(|&v| v as f32));
    }
    Ok(Tensor::matrix(m, n, out).expect("matmul output shape"))
}
