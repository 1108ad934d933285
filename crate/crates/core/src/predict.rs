//! Test-time scores, outcome predictions and evaluation metrics.

use std::collections::BTreeSet;

use ndarray::{concatenate, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::config::Family;
use crate::data::{CountOutcome, HipParams, MultiViewDataset, OutcomeData};
use crate::error::{HipError, Result};
use crate::linalg::{self, CONDITION_LIMIT};
use crate::losses::{linear_predictor, EXP_CLIP};

/// Relative ridge added to an ill-conditioned `B_catᵀ B_cat`.
pub const PREDICT_RIDGE: f64 = 1e-8;

/// Scores of one subgroup: `X_cat B_cat (B_catᵀ B_cat)⁻¹`, where the views
/// and loadings are concatenated by variable. When the Gram matrix has
/// condition number above 1e12, `1e-8 · trace / K` is added to its diagonal
/// and the returned flag is set.
pub fn predict_scores(xs: &[&Array2<f64>], loadings: &[Array2<f64>]) -> Result<(Array2<f64>, bool)> {
    if xs.is_empty() || xs.len() != loadings.len() {
        return Err(HipError::Shape(format!("{} views but {} loadings", xs.len(), loadings.len())));
    }
    let x_views: Vec<_> = xs.iter().map(|x| x.view()).collect();
    let b_views: Vec<_> = loadings.iter().map(|b| b.view()).collect();
    let x_cat = concatenate(Axis(1), &x_views).map_err(|e| HipError::Shape(format!("test views: {e}")))?;
    let b_cat = concatenate(Axis(0), &b_views).map_err(|e| HipError::Shape(format!("loadings: {e}")))?;
    if x_cat.ncols() != b_cat.nrows() {
        return Err(HipError::Shape(format!(
            "test data has {} variables, loadings have {}",
            x_cat.ncols(),
            b_cat.nrows()
        )));
    }
    let gram = b_cat.t().dot(&b_cat);
    let k = gram.nrows();
    let trace = gram.diag().sum();
    if !(trace > 0.0) {
        return Err(HipError::Numerical("all loadings are zero".into()));
    }
    let mut regularized = false;
    let mut a = gram;
    if linalg::sym_condition(a.view()) > CONDITION_LIMIT {
        let ridge = PREDICT_RIDGE * trace / k as f64;
        a.diag_mut().mapv_inplace(|v| v + ridge);
        regularized = true;
    }
    let rhs = b_cat.t().dot(&x_cat.t());
    let (sol, _) = linalg::solve_gram(a.view(), rhs.view(), 0.0)?;
    Ok((sol.reversed_axes(), regularized))
}

/// Scores for every subgroup of `data` under the fitted loadings.
pub fn predict_all_scores(data: &MultiViewDataset, params: &HipParams) -> Result<(Vec<Array2<f64>>, Vec<bool>)> {
    if params.g.len() != data.n_views() || params.z.len() != data.n_subgroups() {
        return Err(HipError::Shape("model and test data have different views or subgroups".into()));
    }
    let mut zs = Vec::with_capacity(data.n_subgroups());
    let mut flags = Vec::with_capacity(data.n_subgroups());
    for s in 0..data.n_subgroups() {
        let xs: Vec<&Array2<f64>> = (0..data.n_views()).map(|d| data.x(d, s)).collect();
        let bs: Vec<Array2<f64>> = (0..data.n_views()).map(|d| params.loading(d, s)).collect();
        let (z, flag) = predict_scores(&xs, &bs)?;
        zs.push(z);
        flags.push(flag);
    }
    Ok((zs, flags))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictions {
    Classes(Vec<usize>),
    /// Expected counts.
    Counts(Array1<f64>),
}

impl Predictions {
    pub fn len(&self) -> usize {
        match self {
            Predictions::Classes(c) => c.len(),
            Predictions::Counts(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Prediction of observation `i` as a number.
    pub fn value(&self, i: usize) -> f64 {
        match self {
            Predictions::Classes(c) => c[i] as f64,
            Predictions::Counts(c) => c[i],
        }
    }
}

/// Most probable class per row (smallest index on ties), `t·exp(η)` for
/// Poisson and `(1 − τ)·t·exp(η)` for ZIP. Offsets default to ones.
pub fn predict_outcome(
    z: &Array2<f64>,
    theta: &Array2<f64>,
    beta0: &Array1<f64>,
    tau: Option<f64>,
    family: Family,
    offsets: Option<&Array1<f64>>,
) -> Result<Predictions> {
    if z.ncols() != theta.nrows() || theta.ncols() != beta0.len() || theta.ncols() != family.outputs() {
        return Err(HipError::Shape("scores, coefficients and family do not conform".into()));
    }
    let w = linear_predictor(z.view(), theta.view(), beta0.view());
    match family {
        Family::MultiClass { .. } => Ok(Predictions::Classes(
            w.rows()
                .into_iter()
                .map(|r| {
                    let mut best = 0;
                    for (j, &v) in r.iter().enumerate() {
                        if v > r[best] {
                            best = j;
                        }
                    }
                    best
                })
                .collect(),
        )),
        Family::Poisson | Family::Zip => {
            let scale = match family {
                Family::Zip => {
                    let tau = tau.ok_or_else(|| HipError::Config("ZIP prediction needs tau".into()))?;
                    1.0 - tau
                }
                _ => 1.0,
            };
            if let Some(t) = offsets {
                if t.len() != z.nrows() {
                    return Err(HipError::Shape(format!("{} offsets for {} samples", t.len(), z.nrows())));
                }
            }
            Ok(Predictions::Counts(Array1::from_shape_fn(z.nrows(), |i| {
                let t = offsets.map_or(1.0, |o| o[i]);
                scale * t * w[[i, 0]].clamp(-EXP_CLIP, EXP_CLIP).exp()
            })))
        }
    }
}

/// Fraction of exact matches.
pub fn classification_accuracy(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    if truth.is_empty() {
        return Err(HipError::Data("accuracy of an empty sample".into()));
    }
    if truth.len() != predicted.len() {
        return Err(HipError::Shape(format!("{} labels but {} predictions", truth.len(), predicted.len())));
    }
    let hits = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Per-observation Poisson means (offsets included) plus the zero-state
/// probability, which is zero for a plain Poisson model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountModel {
    pub mean: Array1<f64>,
    pub tau: f64,
}

impl CountModel {
    /// Poisson component of a fitted model on the given scores.
    pub fn from_fit(z: &Array2<f64>, params: &HipParams, offsets: &Array1<f64>) -> Self {
        let eta = linear_predictor(z.view(), params.theta.view(), params.beta0.view());
        let mean = Array1::from_shape_fn(z.nrows(), |i| offsets[i] * eta[[i, 0]].clamp(-EXP_CLIP, EXP_CLIP).exp());
        Self { mean, tau: params.tau.unwrap_or(0.0) }
    }
}

/// Negative log-likelihood of the zero-inflated Poisson mixture with
/// `τ ∈ [0, 1)`; `τ = 0` is the Poisson likelihood.
pub fn count_nll(y: &Array1<f64>, model: &CountModel) -> f64 {
    let tau = model.tau;
    y.iter()
        .zip(&model.mean)
        .map(|(&y, &lambda)| {
            if y == 0.0 {
                if tau > 0.0 {
                    -(tau + (1.0 - tau) * (-lambda).exp()).ln()
                } else {
                    lambda
                }
            } else {
                -(1.0 - tau).ln() - y * lambda.ln() + lambda + ln_gamma(y + 1.0)
            }
        })
        .sum()
}

/// Likelihood of a model that reproduces every observation: zeros have
/// probability one and a positive count `y` has Poisson mean `y`. This is
/// the same for the Poisson and zero-inflated families.
pub fn saturated_nll(y: &Array1<f64>) -> f64 {
    y.iter()
        .filter(|&&y| y > 0.0)
        .map(|&y| y - y * y.ln() + ln_gamma(y + 1.0))
        .sum()
}

/// Intercept-only model, plus `τ` for ZIP, fitted by maximum likelihood.
/// The ZIP fit runs EM from the Poisson intercept.
pub fn null_count_model(y: &Array1<f64>, offsets: &Array1<f64>, family: Family) -> Result<CountModel> {
    if y.is_empty() || y.len() != offsets.len() {
        return Err(HipError::Shape("null model needs matching, non-empty counts and offsets".into()));
    }
    let rate = y.sum() / offsets.sum();
    let mut model = CountModel { mean: offsets * rate, tau: 0.0 };
    if family != Family::Zip || !y.iter().any(|&v| v == 0.0) {
        return Ok(model);
    }
    if rate == 0.0 {
        // all zeros: the zero state explains everything
        model.tau = 1.0 - 1e-12;
        return Ok(model);
    }
    let mut tau = 0.5;
    let mut rate = rate;
    let mut last = f64::INFINITY;
    for _ in 0..100_000 {
        let weights: Vec<f64> = y
            .iter()
            .zip(offsets)
            .map(|(&y, &t)| {
                if y == 0.0 {
                    tau / (tau + (1.0 - tau) * (-t * rate).exp())
                } else {
                    0.0
                }
            })
            .collect();
        tau = weights.iter().sum::<f64>() / y.len() as f64;
        let num: f64 = y.iter().zip(&weights).map(|(y, w)| (1.0 - w) * y).sum();
        let den: f64 = offsets.iter().zip(&weights).map(|(t, w)| (1.0 - w) * t).sum();
        rate = num / den;
        let nll = count_nll(y, &CountModel { mean: offsets * rate, tau });
        if (last - nll).abs() <= 1e-14 * (1.0 + nll.abs()) {
            break;
        }
        last = nll;
    }
    Ok(CountModel { mean: offsets * rate, tau })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevianceSummary {
    pub null: f64,
    pub model: f64,
    /// `None` when the null deviance is zero.
    pub d2: Option<f64>,
    /// How zeros enter the saturated likelihood.
    pub saturated_convention: String,
}

/// `D² = (D_null − D_model) / D_null` with `D = 2 (nll − nll_saturated)`.
/// The null model is refitted on `y` under `family`.
pub fn deviance_explained(y: &Array1<f64>, offsets: &Array1<f64>, model: &CountModel, family: Family) -> Result<DevianceSummary> {
    if !family.is_count() {
        return Err(HipError::Config("deviance needs a count family".into()));
    }
    if model.mean.len() != y.len() {
        return Err(HipError::Shape(format!("{} means for {} counts", model.mean.len(), y.len())));
    }
    if !(0.0..1.0).contains(&model.tau) {
        return Err(HipError::Config(format!("tau must lie in [0, 1), got {}", model.tau)));
    }
    let null_model = null_count_model(y, offsets, family)?;
    let sat = saturated_nll(y);
    let null = 2.0 * (count_nll(y, &null_model) - sat);
    let dev = 2.0 * (count_nll(y, model) - sat);
    let d2 = (null > 0.0).then(|| (null - dev) / null);
    Ok(DevianceSummary { null, model: dev, d2, saturated_convention: "mixture_exact".into() })
}

/// Pools counts and offsets of all subgroups.
pub fn pooled_counts(data: &MultiViewDataset) -> Result<CountOutcome> {
    let mut y = Vec::new();
    let mut t = Vec::new();
    for s in 0..data.n_subgroups() {
        let c = data
            .outcome(s)?
            .as_counts()
            .ok_or_else(|| HipError::Data("count outcome expected".into()))?;
        y.extend(c.counts().iter());
        t.extend(c.offsets().iter());
    }
    CountOutcome::new(Array1::from(y), Array1::from(t))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    pub tpr: f64,
    pub fpr: f64,
    pub f1: f64,
    /// Ratios whose denominator was zero and were set to 0.
    pub undefined: Vec<String>,
}

fn ratio(num: f64, den: f64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0.0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num / den
    }
}

/// True positive rate, false positive rate and F1 of a selected variable
/// set against the true signal set, both subsets of `0..p`.
pub fn selection_metrics(truth: &[usize], selected: &[usize], p: usize) -> Result<SelectionMetrics> {
    if let Some(&bad) = truth.iter().chain(selected).find(|&&i| i >= p) {
        return Err(HipError::Data(format!("variable index {bad} outside 0..{p}")));
    }
    let truth: BTreeSet<usize> = truth.iter().copied().collect();
    let selected: BTreeSet<usize> = selected.iter().copied().collect();
    let tp = truth.intersection(&selected).count() as f64;
    let fp = selected.difference(&truth).count() as f64;
    let fn_ = truth.difference(&selected).count() as f64;
    let tn = p as f64 - tp - fp - fn_;
    let mut undefined = Vec::new();
    let tpr = ratio(tp, tp + fn_, "tpr", &mut undefined);
    let fpr = ratio(fp, tn + fp, "fpr", &mut undefined);
    let f1 = ratio(tp, tp + 0.5 * (fp + fn_), "f1", &mut undefined);
    Ok(SelectionMetrics { tpr, fpr, f1, undefined })
}

/// Training or test metric of a fitted model on a dataset with outcomes:
/// accuracy for classes, `D²` for counts (evaluated under `data_family`,
/// with `τ = 0` for a Poisson model).
pub fn outcome_metric(
    data: &MultiViewDataset,
    zs: &[Array2<f64>],
    params: &HipParams,
    model_family: Family,
    data_family: Family,
) -> Result<Metric> {
    match model_family {
        Family::MultiClass { .. } => {
            let mut truth = Vec::new();
            let mut pred = Vec::new();
            for (s, z) in zs.iter().enumerate() {
                let classes = data
                    .outcome(s)?
                    .as_classes()
                    .ok_or_else(|| HipError::Data("class outcome expected".into()))?;
                truth.extend_from_slice(classes.labels());
                if let Predictions::Classes(c) =
                    predict_outcome(z, &params.theta, &params.beta0, params.tau, model_family, None)?
                {
                    pred.extend(c);
                }
            }
            Ok(Metric::Accuracy(classification_accuracy(&truth, &pred)?))
        }
        Family::Poisson | Family::Zip => {
            let pooled = pooled_counts(data)?;
            let mut mean = Vec::with_capacity(pooled.len());
            for (s, z) in zs.iter().enumerate() {
                let c = data.outcome(s)?.as_counts().expect("checked by pooled_counts");
                mean.extend(CountModel::from_fit(z, params, c.offsets()).mean);
            }
            let model = CountModel { mean: Array1::from(mean), tau: params.tau.unwrap_or(0.0) };
            let family = if data_family.is_count() { data_family } else { model_family };
            Ok(Metric::Deviance(deviance_explained(pooled.counts(), pooled.offsets(), &model, family)?))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy(f64),
    Deviance(DevianceSummary),
}

impl Metric {
    /// Accuracy or `D²`.
    pub fn value(&self) -> Option<f64> {
        match self {
            Metric::Accuracy(a) => Some(*a),
            Metric::Deviance(d) => d.d2,
        }
    }
}

/// Outcome labels or counts of a subgroup as numbers, for reporting.
pub fn outcome_values(outcome: &OutcomeData) -> Vec<f64> {
    match outcome {
        OutcomeData::Classes(c) => c.labels().iter().map(|&l| l as f64).collect(),
        OutcomeData::Counts(c) => c.counts().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hand_scores() {
        let x = array![[5.0, 99.0]];
        let b = array![[1.0], [0.0]];
        let (z, reg) = predict_scores(&[&x], &[b]).unwrap();
        assert!(!reg);
        assert!((z[[0, 0]] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn zero_loadings_are_an_error() {
        let x = array![[1.0, 2.0]];
        assert!(predict_scores(&[&x], &[Array2::zeros((2, 1))]).is_err());
    }

    #[test]
    fn hand_outcomes() {
        let z = array![[0.0]];
        let theta = array![[1.0, 1.0]];
        let out = predict_outcome(&z, &theta, &array![2.0, 1.0], None, Family::MultiClass { classes: 2 }, None).unwrap();
        assert_eq!(out, Predictions::Classes(vec![0]));
        let tie = predict_outcome(&z, &theta, &array![1.0, 1.0], None, Family::MultiClass { classes: 2 }, None).unwrap();
        assert_eq!(tie, Predictions::Classes(vec![0]));
        let theta = array![[0.3]];
        let p = predict_outcome(&z, &theta, &array![2.0], None, Family::Poisson, None).unwrap();
        assert!((p.value(0) - 7.389056).abs() < 1e-6);
        let q = predict_outcome(&z, &theta, &array![2.0], Some(0.25), Family::Zip, None).unwrap();
        assert!((q.value(0) - 5.541792).abs() < 1e-6);
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(classification_accuracy(&[0, 1, 1], &[0, 1, 1]).unwrap(), 1.0);
        assert_eq!(classification_accuracy(&[0, 1], &[1, 0]).unwrap(), 0.0);
        assert_eq!(classification_accuracy(&[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap(), 0.75);
        assert!(classification_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn selection_hand_case() {
        let m = selection_metrics(&[1, 2], &[1, 3], 4).unwrap();
        assert_eq!((m.tpr, m.fpr, m.f1), (0.5, 0.5, 0.5));
        let m = selection_metrics(&[1, 2], &[1, 2], 4).unwrap();
        assert_eq!((m.tpr, m.fpr, m.f1), (1.0, 0.0, 1.0));
        let m = selection_metrics(&[1, 2], &[0, 3], 4).unwrap();
        assert_eq!(m.tpr, 0.0);
        let m = selection_metrics(&[], &[], 3).unwrap();
        assert!(m.undefined.contains(&"tpr".to_string()));
    }

    #[test]
    fn deviance_endpoints() {
        let y = array![0.0, 0.0, 3.0, 1.0, 0.0, 5.0];
        let t = Array1::ones(6);
        for family in [Family::Poisson, Family::Zip] {
            let null = null_count_model(&y, &t, family).unwrap();
            let d = deviance_explained(&y, &t, &null, family).unwrap();
            assert!(d.d2.unwrap().abs() < 1e-12);
            let sat = CountModel { mean: y.mapv(|v| v.max(1e-300)), tau: 0.0 };
            let d = deviance_explained(&y, &t, &sat, Family::Poisson).unwrap();
            assert!((d.d2.unwrap() - 1.0).abs() < 1e-12);
        }
        let flat = array![2.0, 2.0, 2.0];
        let null = null_count_model(&flat, &Array1::ones(3), Family::Poisson).unwrap();
        assert_eq!(deviance_explained(&flat, &Array1::ones(3), &null, Family::Poisson).unwrap().d2, None);
    }

    #[test]
    fn zip_null_beats_poisson_null_on_excess_zeros() {
        let y = array![0.0, 0.0, 0.0, 0.0, 4.0, 5.0, 6.0, 3.0];
        let t = Array1::ones(8);
        let p = null_count_model(&y, &t, Family::Poisson).unwrap();
        let z = null_count_model(&y, &t, Family::Zip).unwrap();
        assert!(count_nll(&y, &z) < count_nll(&y, &p));
        assert!(z.tau > 0.3 && z.tau < 0.6);
    }
}
