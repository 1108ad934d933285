//! Reference likelihoods computed without the engine's reformulations.

use ndarray::{Array2, ArrayView1, ArrayView2};
use statrs::function::gamma::ln_gamma;
use twofloat::TwoFloat;

/// `-log P(Y = y)` of a zero-inflated Poisson, summed from its pmf.
pub fn zip_nll(y: &[f64], t: &[f64], eta: &[f64], tau: f64) -> f64 {
    y.iter()
        .zip(t)
        .zip(eta)
        .map(|((&y, &t), &eta)| {
            let mu = t * eta.exp();
            if y == 0.0 {
                -(tau + (1.0 - tau) * (-mu).exp()).ln()
            } else {
                -((1.0 - tau).ln() + y * mu.ln() - mu - ln_gamma(y + 1.0))
            }
        })
        .sum()
}

/// Poisson negative log-likelihood written out term by term.
pub fn poisson_nll(y: &[f64], t: &[f64], eta: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..y.len() {
        let mu = t[i] * eta[i].exp();
        total += mu - y[i] * mu.ln() + ln_gamma(y[i] + 1.0);
    }
    total
}

/// Softmax cross-entropy in double-double arithmetic.
pub fn softmax_nll(labels: &[usize], z: ArrayView2<f64>, theta: ArrayView2<f64>, beta0: ArrayView1<f64>) -> f64 {
    let mut total = TwoFloat::from(0.0);
    for (i, &label) in labels.iter().enumerate() {
        let w: Vec<TwoFloat> = (0..theta.ncols())
            .map(|j| {
                let mut acc = TwoFloat::from(beta0[j]);
                for k in 0..theta.nrows() {
                    acc += TwoFloat::from(z[[i, k]]) * TwoFloat::from(theta[[k, j]]);
                }
                acc
            })
            .collect();
        let mut sum = TwoFloat::from(0.0);
        for wj in &w {
            sum += wj.exp();
        }
        total += sum.ln() - w[label];
    }
    total.hi() + total.lo()
}

pub fn indicator(labels: &[usize], classes: usize) -> Array2<f64> {
    Array2::from_shape_fn((labels.len(), classes), |(i, j)| f64::from(labels[i] == j))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
