//! Small dense linear-algebra helpers. Storage is `ndarray`; decompositions
//! go through `nalgebra`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{HipError, Result};

/// Condition number above which a Gram matrix is ridge-regularized.
pub const CONDITION_LIMIT: f64 = 1e12;

pub fn to_nalgebra(a: ArrayView2<f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

pub fn from_nalgebra(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Spectral condition number of a symmetric positive semi-definite matrix.
/// Returns infinity when the smallest eigenvalue is not positive.
pub fn sym_condition(a: ArrayView2<f64>) -> f64 {
    let eig = to_nalgebra(a).symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `a x = b` for symmetric positive semi-definite `a`. When the
/// condition number of `a` exceeds [`CONDITION_LIMIT`], `ridge * I` is added
/// first; the returned flag reports whether that happened.
pub fn solve_gram(a: ArrayView2<f64>, b: ArrayView2<f64>, ridge: f64) -> Result<(Array2<f64>, bool)> {
    let k = a.nrows();
    if a.ncols() != k || b.nrows() != k {
        return Err(HipError::Shape(format!(
            "gram solve: a is {:?}, b is {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let mut m = to_nalgebra(a);
    let regularized = sym_condition(a) > CONDITION_LIMIT;
    if regularized {
        for i in 0..k {
            m[(i, i)] += ridge;
        }
    }
    let rhs = to_nalgebra(b);
    let sol = match m.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| HipError::Numerical("singular Gram matrix".into()))?,
    };
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(HipError::Numerical("non-finite Gram solve".into()));
    }
    Ok((from_nalgebra(&sol), regularized))
}

/// Thin QR factor of a tall matrix with the first nonzero entry of every
/// column made positive.
pub fn orthonormal_columns(a: ArrayView2<f64>) -> Array2<f64> {
    let qr = to_nalgebra(a).qr();
    let mut q = from_nalgebra(&qr.q());
    for mut col in q.columns_mut() {
        if let Some(first) = col.iter().find(|v| v.abs() > 0.0).copied() {
            if first < 0.0 {
                col.mapv_inplace(|v| -v);
            }
        }
    }
    q
}

/// Singular values in descending order, computed from the eigenvalues of the
/// smaller Gram matrix.
pub fn singular_values(a: ArrayView2<f64>) -> Vec<f64> {
    let (r, c) = a.dim();
    let gram = if r <= c { a.dot(&a.t()) } else { a.t().dot(&a) };
    let eig = to_nalgebra(gram.view()).symmetric_eigen();
    let mut s: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0).sqrt()).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Sample mean and unbiased standard deviation of each column.
pub fn column_moments(a: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let n = a.nrows();
    let mean = a.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(a.ncols()));
    let mut sd = Array1::zeros(a.ncols());
    if n > 1 {
        for (j, col) in a.columns().into_iter().enumerate() {
            let ss: f64 = col.iter().map(|v| (v - mean[j]).powi(2)).sum();
            sd[j] = (ss / (n as f64 - 1.0)).sqrt();
        }
    }
    (mean, sd)
}

/// Centers every column and scales it to unit sample variance.
pub fn standardize_columns(z: &mut Array2<f64>) -> Result<()> {
    let (mean, sd) = column_moments(z.view());
    for (j, mut col) in z.columns_mut().into_iter().enumerate() {
        if !(sd[j] > 0.0) || !sd[j].is_finite() {
            return Err(HipError::Numerical(format!(
                "score column {j} has zero or non-finite variance"
            )));
        }
        col.mapv_inplace(|v| (v - mean[j]) / sd[j]);
    }
    Ok(())
}

pub fn frobenius_sq(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Frobenius inner product.
pub fn inner(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn row_norms(a: ArrayView2<f64>) -> Vec<f64> {
    a.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Numerically stable `log(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable `log(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}
