//! Objective terms and their closed-form gradients.
//!
//! The objective is the sum of a family-specific prediction loss over
//! subgroups, the squared reconstruction error of every (view, subgroup)
//! block, and the block L2,1 penalties on the rows of `G` and `Ξ`.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::config::{Family, FitConfig};
use crate::data::{CountOutcome, HipParams, MultiViewDataset, OutcomeData};
use crate::error::{HipError, Result};
use crate::linalg::{self, log_add_exp, softplus};

/// Smoothing added under the square root of row norms in penalty gradients.
pub const PENALTY_SMOOTHING: f64 = 1e-8;

/// Bound on arguments passed to `exp` in the count likelihoods.
pub const EXP_CLIP: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub prediction: f64,
    pub association: f64,
    pub penalty_g: f64,
    pub penalty_xi: f64,
    pub total: f64,
    /// Number of linear predictors clipped to `±EXP_CLIP`.
    pub exp_clips: usize,
}

fn check_dims(what: &str, found: (usize, usize), expected: (usize, usize)) -> Result<()> {
    if found != expected {
        return Err(HipError::Shape(format!("{what}: got {found:?}, expected {expected:?}")));
    }
    Ok(())
}

/// `‖X − Z Bᵀ‖²_F`.
pub fn association_loss(x: ArrayView2<f64>, z: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    let (n, p) = x.dim();
    check_dims("scores", z.dim(), (n, b.ncols()))?;
    check_dims("loadings", b.dim(), (p, z.ncols()))?;
    let resid = &x - &z.dot(&b.t());
    Ok(linalg::frobenius_sq(resid.view()))
}

/// Sum of the Euclidean norms of the rows of `m`.
pub fn row_norm_sum(m: ArrayView2<f64>) -> f64 {
    linalg::row_norms(m).iter().sum()
}

/// Gradient of `weight · Σ_l sqrt(‖m_l‖² + ε)`.
pub fn smoothed_row_norm_gradient(m: ArrayView2<f64>, weight: f64) -> Array2<f64> {
    let mut out = m.to_owned();
    if weight == 0.0 {
        out.fill(0.0);
        return out;
    }
    for mut row in out.rows_mut() {
        let sq: f64 = row.iter().map(|v| v * v).sum();
        let scale = weight / (sq + PENALTY_SMOOTHING).sqrt();
        row.mapv_inplace(|v| v * scale);
    }
    out
}

/// Hierarchical penalty, returned as `(penalty_G, penalty_Ξ)`.
/// `xi` is indexed `[d][s]`.
pub fn penalty_value(
    g: &[Array2<f64>],
    xi: &[Vec<Array2<f64>>],
    lambda_g: f64,
    lambda_xi: f64,
    gamma: &[bool],
) -> (f64, f64) {
    let mut pg = 0.0;
    let mut px = 0.0;
    for d in 0..g.len() {
        if !gamma[d] {
            continue;
        }
        pg += row_norm_sum(g[d].view());
        px += xi[d].iter().map(|m| row_norm_sum(m.view())).sum::<f64>();
    }
    (lambda_g * pg, lambda_xi * px)
}

/// `1 β₀ᵀ + Z Θ`.
pub fn linear_predictor(z: ArrayView2<f64>, theta: ArrayView2<f64>, beta0: ArrayView1<f64>) -> Array2<f64> {
    let mut w = z.dot(&theta);
    w += &beta0;
    w
}

/// Value of a prediction loss and, optionally, its derivative with respect
/// to the linear predictor `W` (`n × q`).
#[derive(Debug, Clone)]
pub(crate) struct PredictionEval {
    pub value: f64,
    pub d_linear: Option<Array2<f64>>,
    pub clips: usize,
}

fn clip(eta: f64, clips: &mut usize) -> f64 {
    if eta > EXP_CLIP {
        *clips += 1;
        EXP_CLIP
    } else if eta < -EXP_CLIP {
        *clips += 1;
        -EXP_CLIP
    } else {
        eta
    }
}

fn multiclass_eval(y: ArrayView2<f64>, w: ArrayView2<f64>, grad: bool) -> PredictionEval {
    let mut value = 0.0;
    let mut d = grad.then(|| Array2::zeros(w.dim()));
    for (i, row) in w.rows().into_iter().enumerate() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let lse = m + sum.ln();
        for (j, &wij) in row.iter().enumerate() {
            let yij = y[[i, j]];
            if yij != 0.0 {
                value -= yij * (wij - lse);
            }
            if let Some(d) = d.as_mut() {
                d[[i, j]] = (wij - lse).exp() - yij;
            }
        }
    }
    PredictionEval { value, d_linear: d, clips: 0 }
}

fn poisson_eval(c: &CountOutcome, w: ArrayView2<f64>, grad: bool) -> PredictionEval {
    let mut value = 0.0;
    let mut clips = 0;
    let mut d = grad.then(|| Array2::zeros(w.dim()));
    for i in 0..c.len() {
        let (y, t) = (c.counts()[i], c.offsets()[i]);
        let eta = w[[i, 0]];
        let mu = t * clip(eta, &mut clips).exp();
        value += -y * (t.ln() + eta) + mu + c.log_factorial()[i];
        if let Some(d) = d.as_mut() {
            d[[i, 0]] = mu - y;
        }
    }
    PredictionEval { value, d_linear: d, clips }
}

/// ZIP negative log-likelihood with `c = logit(τ)`.
fn zip_eval(c: &CountOutcome, w: ArrayView2<f64>, tau: f64, grad: bool) -> PredictionEval {
    let logit = (tau / (1.0 - tau)).ln();
    let per_obs = softplus(logit);
    let mut value = 0.0;
    let mut clips = 0;
    let mut d = grad.then(|| Array2::zeros(w.dim()));
    for i in 0..c.len() {
        let (y, t) = (c.counts()[i], c.offsets()[i]);
        let eta = w[[i, 0]];
        let mu = t * clip(eta, &mut clips).exp();
        let (v, dv) = if y == 0.0 {
            // d/dη −log(e^c + e^{−μ}) = μ e^{−μ} / (e^c + e^{−μ})
            let weight = 1.0 / (1.0 + (logit + mu).exp());
            (-log_add_exp(logit, -mu), mu * weight)
        } else {
            (-y * (t.ln() + eta) + mu, mu - y)
        };
        value += v + c.log_factorial()[i] + per_obs;
        if let Some(d) = d.as_mut() {
            d[[i, 0]] = dv;
        }
    }
    PredictionEval { value, d_linear: d, clips }
}

/// Prediction loss of one subgroup given its linear predictor.
pub(crate) fn prediction_eval(
    outcome: &OutcomeData,
    family: Family,
    tau: Option<f64>,
    w: ArrayView2<f64>,
    grad: bool,
) -> Result<PredictionEval> {
    if w.nrows() != outcome.len() || w.ncols() != family.outputs() {
        return Err(HipError::Shape(format!(
            "linear predictor {:?} does not match outcome with {} rows and {} outputs",
            w.dim(),
            outcome.len(),
            family.outputs()
        )));
    }
    match (family, outcome) {
        (Family::MultiClass { classes }, OutcomeData::Classes(c)) if c.classes() == classes => {
            Ok(multiclass_eval(c.indicator(), w, grad))
        }
        (Family::Poisson, OutcomeData::Counts(c)) => Ok(poisson_eval(c, w, grad)),
        (Family::Zip, OutcomeData::Counts(c)) => {
            let tau = tau.ok_or_else(|| HipError::Config("ZIP loss needs tau".into()))?;
            if !(tau > 0.0 && tau < 1.0) {
                return Err(HipError::Numerical(format!("tau = {tau} outside (0, 1)")));
            }
            Ok(zip_eval(c, w, tau, grad))
        }
        _ => Err(HipError::Data(format!(
            "outcome does not match family {}",
            family.label()
        ))),
    }
}

/// Cross-entropy of the softmax of `1 β₀ᵀ + Z Θ` against indicator rows `y`.
pub fn multiclass_loss(
    y: ArrayView2<f64>,
    z: ArrayView2<f64>,
    theta: ArrayView2<f64>,
    beta0: ArrayView1<f64>,
) -> f64 {
    let w = linear_predictor(z, theta, beta0);
    multiclass_eval(y, w.view(), false).value
}

/// Poisson negative log-likelihood with log link and offsets.
pub fn poisson_loss(
    counts: &CountOutcome,
    z: ArrayView2<f64>,
    theta: ArrayView2<f64>,
    beta0: ArrayView1<f64>,
) -> f64 {
    let w = linear_predictor(z, theta, beta0);
    poisson_eval(counts, w.view(), false).value
}

/// Zero-inflated Poisson negative log-likelihood; `tau` is the zero-state
/// probability.
pub fn zip_loss(
    counts: &CountOutcome,
    z: ArrayView2<f64>,
    theta: ArrayView2<f64>,
    beta0: ArrayView1<f64>,
    tau: f64,
) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(HipError::Numerical(format!("tau = {tau} outside (0, 1)")));
    }
    let w = linear_predictor(z, theta, beta0);
    Ok(zip_eval(counts, w.view(), tau, false).value)
}

/// Prediction term summed over subgroups.
pub fn prediction_term(data: &MultiViewDataset, params: &HipParams, family: Family) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut clips = 0;
    for s in 0..data.n_subgroups() {
        let w = linear_predictor(params.z[s].view(), params.theta.view(), params.beta0.view());
        let e = prediction_eval(data.outcome(s)?, family, params.tau, w.view(), false)?;
        total += e.value;
        clips += e.clips;
    }
    Ok((total, clips))
}

/// Full objective, split by term.
pub fn total_objective(data: &MultiViewDataset, params: &HipParams, config: &FitConfig) -> Result<ObjectiveBreakdown> {
    let (prediction, exp_clips) = prediction_term(data, params, config.family)?;
    let mut association = 0.0;
    for d in 0..data.n_views() {
        for s in 0..data.n_subgroups() {
            association += association_loss(data.x(d, s).view(), params.z[s].view(), params.loading(d, s).view())?;
        }
    }
    let (penalty_g, penalty_xi) = penalty_value(&params.g, &params.xi, config.lambda_g, config.lambda_xi, &config.gamma);
    Ok(ObjectiveBreakdown {
        prediction,
        association,
        penalty_g,
        penalty_xi,
        total: prediction + association + penalty_g + penalty_xi,
        exp_clips,
    })
}

/// Parameter block addressed by [`gradients`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Z(usize),
    G(usize),
    /// `(d, s)`.
    Xi(usize, usize),
    /// Intercept and coefficients together.
    ThetaBeta,
}

/// `∂/∂B ‖X − Z Bᵀ‖² = −2 (X − Z Bᵀ)ᵀ Z`.
fn association_grad_loading(x: &Array2<f64>, z: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let resid = x - &z.dot(&b.t());
    resid.t().dot(z) * -2.0
}

/// Gradient of the smooth part of the objective (penalty norms smoothed by
/// [`PENALTY_SMOOTHING`]) with respect to one block.
///
/// For [`Block::ThetaBeta`] the result has `K + 1` rows: the intercept
/// gradient first, then the `K × q` coefficient gradient.
pub fn gradients(data: &MultiViewDataset, params: &HipParams, config: &FitConfig, block: Block) -> Result<Array2<f64>> {
    let family = config.family;
    match block {
        Block::Z(s) => {
            let z = &params.z[s];
            let w = linear_predictor(z.view(), params.theta.view(), params.beta0.view());
            let e = prediction_eval(data.outcome(s)?, family, params.tau, w.view(), true)?;
            let mut grad = e.d_linear.expect("requested").dot(&params.theta.t());
            for d in 0..data.n_views() {
                let b = params.loading(d, s);
                let resid = data.x(d, s) - &z.dot(&b.t());
                grad.scaled_add(-2.0, &resid.dot(&b));
            }
            Ok(grad)
        }
        Block::G(d) => {
            let weight = if config.gamma[d] { config.lambda_g } else { 0.0 };
            let mut grad = smoothed_row_norm_gradient(params.g[d].view(), weight);
            for s in 0..data.n_subgroups() {
                let gb = association_grad_loading(data.x(d, s), &params.z[s], &params.loading(d, s));
                grad += &(&gb * &params.xi[d][s]);
            }
            Ok(grad)
        }
        Block::Xi(d, s) => {
            let weight = if config.gamma[d] { config.lambda_xi } else { 0.0 };
            let mut grad = smoothed_row_norm_gradient(params.xi[d][s].view(), weight);
            let gb = association_grad_loading(data.x(d, s), &params.z[s], &params.loading(d, s));
            grad += &(&gb * &params.g[d]);
            Ok(grad)
        }
        Block::ThetaBeta => {
            let (k, q) = params.theta.dim();
            let mut grad = Array2::zeros((k + 1, q));
            for s in 0..data.n_subgroups() {
                let z = &params.z[s];
                let w = linear_predictor(z.view(), params.theta.view(), params.beta0.view());
                let e = prediction_eval(data.outcome(s)?, family, params.tau, w.view(), true)?;
                let dw = e.d_linear.expect("requested");
                let mut top = grad.row_mut(0);
                top += &dw.sum_axis(Axis(0));
                let mut rest = grad.slice_mut(ndarray::s![1.., ..]);
                rest += &z.t().dot(&dw);
            }
            Ok(grad)
        }
    }
}
