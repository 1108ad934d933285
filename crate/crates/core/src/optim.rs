//! Alternating minimization.
//!
//! Each outer iteration updates, in order: the scores `Z^s` (accelerated
//! gradient with backtracking, then column standardization), the common
//! loadings `G^d` and subgroup loadings `Ξ^{d,s}` (Adagrad), the outcome
//! coefficients `Θ, β₀` (gradient descent with backtracking) and, for ZIP,
//! the zero-state probability `τ` from the excess-zeros formula.
//!
//! The inner solvers work on Gram-matrix forms of the reconstruction error,
//! e.g. `‖X − Z Bᵀ‖² = ‖X‖² − 2⟨Z, XB⟩ + ⟨Z BᵀB, Z⟩`, so each inner
//! iteration costs `O((n + p) K²)` rather than `O(n p K)`.

use std::time::Instant;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::config::{Family, FitConfig, SolverSettings};
use crate::data::{initialize_params, validate_dataset, HipParams, MultiViewDataset, OutcomeData, Violation};
use crate::error::{HipError, Result};
use crate::linalg::{self, inner};
use crate::losses::{self, linear_predictor, prediction_eval, ObjectiveBreakdown, EXP_CLIP};

/// `τ` is kept inside `(TAU_EPS, 1 − TAU_EPS)`.
pub const TAU_EPS: f64 = 1e-4;

/// Smallest step the backtracking solvers try before giving up.
const MIN_STEP: f64 = 1e-30;

/// Record of one inner solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveLog {
    pub iterations: usize,
    /// Objective at the start point and after every accepted step.
    pub objective: Vec<f64>,
    /// Step size (or Adagrad rate) of every accepted step.
    pub steps: Vec<f64>,
    pub backtracks: usize,
    /// Momentum restarts (accelerated solver) or rejected Adagrad steps.
    pub restarts: usize,
    pub converged: bool,
}

fn relative_change(old: f64, new: f64) -> f64 {
    (old - new).abs() / old.abs().max(f64::MIN_POSITIVE)
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(HipError::Numerical(format!("non-finite {what} objective")))
    }
}

/// Gradient descent with backtracking on a smooth objective, optionally with
/// Nesterov momentum (FISTA). A step is accepted when it satisfies the
/// quadratic upper-bound condition
/// `f(x⁺) ≤ f(y) − (step/2) ‖∇f(y)‖²`, with `x⁺ = y − step ∇f(y)`;
/// otherwise the step is multiplied by `settings.shrink`. Momentum is
/// restarted whenever an accepted point would increase the objective, so
/// the accepted iterates are monotone.
///
/// `eval(x, true)` must return the objective and its gradient;
/// `eval(x, false)` may omit the gradient.
pub(crate) fn backtracking_descent<F>(
    x0: Array2<f64>,
    settings: &SolverSettings,
    accelerate: bool,
    mut eval: F,
) -> Result<(Array2<f64>, SolveLog)>
where
    F: FnMut(&Array2<f64>, bool) -> Result<(f64, Option<Array2<f64>>)>,
{
    let mut log = SolveLog::default();
    let mut x = x0;
    let mut fx = finite(eval(&x, false)?.0, "inner")?;
    log.objective.push(fx);
    let mut y = x.clone();
    let mut momentum = 1.0_f64;
    let mut step = settings.initial_step;

    while log.iterations < settings.max_inner_iter {
        log.iterations += 1;
        let (fy, grad) = eval(&y, true)?;
        let fy = finite(fy, "inner")?;
        let grad = grad.expect("gradient requested");
        let gsq = linalg::frobenius_sq(grad.view());
        if gsq == 0.0 {
            log.converged = true;
            break;
        }
        let slack = 1e-14 * (1.0 + fy.abs());
        let accepted = loop {
            let cand = &y - &(&grad * step);
            let fc = eval(&cand, false)?.0;
            if fc.is_finite() && fc <= fy - 0.5 * step * gsq + slack {
                break Some((cand, fc));
            }
            step *= settings.shrink;
            log.backtracks += 1;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some((cand, fc)) = accepted else {
            if accelerate && momentum > 1.0 {
                log.restarts += 1;
                momentum = 1.0;
                y = x.clone();
                step = settings.initial_step;
                continue;
            }
            // no representable decrease left
            log.converged = true;
            break;
        };
        if fc > fx {
            // only reachable from an extrapolated point
            log.restarts += 1;
            momentum = 1.0;
            y = x.clone();
            continue;
        }
        let rel = relative_change(fx, fc);
        log.objective.push(fc);
        log.steps.push(step);
        if accelerate {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next;
            y = &cand + &((&cand - &x) * beta);
            momentum = next;
        } else {
            y = cand.clone();
        }
        x = cand;
        fx = fc;
        if rel < settings.inner_tol {
            log.converged = true;
            break;
        }
    }
    Ok((x, log))
}

/// Outcome part of the score sub-problem for one subgroup.
#[derive(Debug, Clone, Copy)]
pub struct ScorePrediction<'a> {
    pub outcome: &'a OutcomeData,
    pub family: Family,
    pub tau: Option<f64>,
    pub theta: &'a Array2<f64>,
    pub beta0: &'a Array1<f64>,
}

/// Objective of one subgroup's scores with loadings fixed:
/// `F(Y, Z, Θ, β₀) + Σ_d ‖X^d − Z B^dᵀ‖²`. The prediction part is optional
/// so the reconstruction-only problem can be solved on its own.
#[derive(Debug, Clone)]
pub struct ScoreProblem<'a> {
    /// `Σ_d X^d B^d`.
    cross: Array2<f64>,
    /// `Σ_d B^dᵀ B^d`.
    gram: Array2<f64>,
    x_norm: f64,
    prediction: Option<ScorePrediction<'a>>,
}

impl<'a> ScoreProblem<'a> {
    pub fn new(xs: &[&Array2<f64>], loadings: &[Array2<f64>], prediction: Option<ScorePrediction<'a>>) -> Result<Self> {
        let (n, k) = (xs[0].nrows(), loadings[0].ncols());
        let mut cross = Array2::zeros((n, k));
        let mut gram = Array2::zeros((k, k));
        let mut x_norm = 0.0;
        for (x, b) in xs.iter().zip(loadings) {
            if x.ncols() != b.nrows() || x.nrows() != n || b.ncols() != k {
                return Err(HipError::Shape("score problem blocks do not conform".into()));
            }
            cross += &x.dot(b);
            gram += &b.t().dot(b);
            x_norm += linalg::frobenius_sq(x.view());
        }
        Ok(Self { cross, gram, x_norm, prediction })
    }

    pub fn eval(&self, z: &Array2<f64>, grad: bool) -> Result<(f64, Option<Array2<f64>>)> {
        let zg = z.dot(&self.gram);
        let mut value = self.x_norm - 2.0 * inner(z.view(), self.cross.view()) + inner(zg.view(), z.view());
        let mut g = grad.then(|| (&zg - &self.cross) * 2.0);
        if let Some(p) = &self.prediction {
            let w = linear_predictor(z.view(), p.theta.view(), p.beta0.view());
            let e = prediction_eval(p.outcome, p.family, p.tau, w.view(), grad)?;
            value += e.value;
            if let (Some(g), Some(dw)) = (g.as_mut(), e.d_linear) {
                *g += &dw.dot(&p.theta.t());
            }
        }
        Ok((value, g))
    }

    pub fn value(&self, z: &Array2<f64>) -> Result<f64> {
        Ok(self.eval(z, false)?.0)
    }

    /// Accelerated solve from `z0`; the result is not standardized.
    pub fn solve(&self, z0: Array2<f64>, settings: &SolverSettings) -> Result<(Array2<f64>, SolveLog)> {
        backtracking_descent(z0, settings, true, |z, g| self.eval(z, g))
    }
}

/// New scores for every subgroup: solve, then standardize each column.
pub fn update_z(data: &MultiViewDataset, params: &HipParams, config: &FitConfig) -> Result<(Vec<Array2<f64>>, Vec<SolveLog>)> {
    let mut zs = Vec::with_capacity(data.n_subgroups());
    let mut logs = Vec::with_capacity(data.n_subgroups());
    for s in 0..data.n_subgroups() {
        let xs: Vec<&Array2<f64>> = (0..data.n_views()).map(|d| data.x(d, s)).collect();
        let bs: Vec<Array2<f64>> = (0..data.n_views()).map(|d| params.loading(d, s)).collect();
        let prediction = ScorePrediction {
            outcome: data.outcome(s)?,
            family: config.family,
            tau: params.tau,
            theta: &params.theta,
            beta0: &params.beta0,
        };
        let problem = ScoreProblem::new(&xs, &bs, Some(prediction))?;
        let (mut z, log) = problem.solve(params.z[s].clone(), &config.solver)?;
        linalg::standardize_columns(&mut z)?;
        zs.push(z);
        logs.push(log);
    }
    Ok((zs, logs))
}

/// Reconstruction term of one subgroup in Gram form, seen from the loadings.
#[derive(Debug, Clone)]
struct LoadingTerm {
    /// The fixed elementwise factor (`Ξ^{d,s}` when solving for `G^d`, or
    /// `G^d` when solving for `Ξ^{d,s}`).
    factor: Array2<f64>,
    /// `X^{d,s}ᵀ Z^s`.
    xtz: Array2<f64>,
    /// `Z^sᵀ Z^s`.
    ztz: Array2<f64>,
    x_norm: f64,
}

impl LoadingTerm {
    fn new(x: &Array2<f64>, z: &Array2<f64>, factor: Array2<f64>) -> Self {
        Self { factor, xtz: x.t().dot(z), ztz: z.t().dot(z), x_norm: linalg::frobenius_sq(x.view()) }
    }
}

/// `Σ_s ‖X^{d,s} − Z^s (V ⊙ F_s)ᵀ‖² + weight · Σ_l ‖v_l‖`.
#[derive(Debug, Clone)]
struct LoadingProblem {
    terms: Vec<LoadingTerm>,
    weight: f64,
}

impl LoadingProblem {
    fn value(&self, v: &Array2<f64>) -> f64 {
        let mut total = self.weight * losses::row_norm_sum(v.view());
        for t in &self.terms {
            let b = v * &t.factor;
            let bg = b.dot(&t.ztz);
            total += t.x_norm - 2.0 * inner(b.view(), t.xtz.view()) + inner(bg.view(), b.view());
        }
        total
    }

    fn gradient(&self, v: &Array2<f64>) -> Array2<f64> {
        let mut grad = losses::smoothed_row_norm_gradient(v.view(), self.weight);
        for t in &self.terms {
            let b = v * &t.factor;
            let gb = (b.dot(&t.ztz) - &t.xtz) * 2.0;
            grad += &(&gb * &t.factor);
        }
        grad
    }

    /// Adagrad on the smoothed objective. A step that would increase the
    /// exact objective is discarded and the base rate halved, so accepted
    /// iterates never increase it. Stops when the relative change of the
    /// exact objective between accepted iterates falls below the tolerance.
    fn solve(&self, v0: Array2<f64>, settings: &SolverSettings) -> Result<(Array2<f64>, SolveLog)> {
        let mut log = SolveLog::default();
        let mut v = v0;
        let mut fv = finite(self.value(&v), "loading")?;
        log.objective.push(fv);
        let mut acc = Array2::<f64>::zeros(v.dim());
        let mut rate = settings.adagrad_rate;
        while log.iterations < settings.max_inner_iter {
            log.iterations += 1;
            let grad = self.gradient(&v);
            let trial_acc = &acc + &grad.mapv(|g| g * g);
            let mut cand = v.clone();
            ndarray::Zip::from(&mut cand)
                .and(&grad)
                .and(&trial_acc)
                .for_each(|c, &g, &a| *c -= rate * g / (a.sqrt() + settings.adagrad_eps));
            let fc = self.value(&cand);
            if !(fc <= fv) {
                log.restarts += 1;
                rate *= 0.5;
                if rate < MIN_STEP {
                    log.converged = true;
                    break;
                }
                continue;
            }
            acc = trial_acc;
            let rel = relative_change(fv, fc);
            v = cand;
            fv = fc;
            log.objective.push(fc);
            log.steps.push(rate);
            if rel < settings.inner_tol {
                log.converged = true;
                break;
            }
        }
        Ok((v, log))
    }
}

fn penalty_weight(config: &FitConfig, d: usize, lambda: f64) -> f64 {
    if config.gamma[d] {
        lambda
    } else {
        0.0
    }
}

/// New common loadings `G^d` for every view, with `Z` and `Ξ` fixed.
pub fn update_g(data: &MultiViewDataset, params: &HipParams, config: &FitConfig) -> Result<(Vec<Array2<f64>>, Vec<SolveLog>)> {
    let mut out = Vec::with_capacity(data.n_views());
    let mut logs = Vec::with_capacity(data.n_views());
    for d in 0..data.n_views() {
        let (g, log) = solve_g(data, params, config, d)?;
        out.push(g);
        logs.push(log);
    }
    Ok((out, logs))
}

fn solve_g(data: &MultiViewDataset, params: &HipParams, config: &FitConfig, d: usize) -> Result<(Array2<f64>, SolveLog)> {
    let terms = (0..data.n_subgroups())
        .map(|s| LoadingTerm::new(data.x(d, s), &params.z[s], params.xi[d][s].clone()))
        .collect();
    let problem = LoadingProblem { terms, weight: penalty_weight(config, d, config.lambda_g) };
    problem.solve(params.g[d].clone(), &config.solver)
}

fn solve_xi(data: &MultiViewDataset, params: &HipParams, config: &FitConfig, d: usize, s: usize) -> Result<(Array2<f64>, SolveLog)> {
    let problem = LoadingProblem {
        terms: vec![LoadingTerm::new(data.x(d, s), &params.z[s], params.g[d].clone())],
        weight: penalty_weight(config, d, config.lambda_xi),
    };
    problem.solve(params.xi[d][s].clone(), &config.solver)
}

/// New subgroup loadings `Ξ^{d,s}`, indexed `[d][s]`, with `Z` and `G` fixed.
pub fn update_xi(
    data: &MultiViewDataset,
    params: &HipParams,
    config: &FitConfig,
) -> Result<(Vec<Vec<Array2<f64>>>, Vec<Vec<SolveLog>>)> {
    let mut out = Vec::with_capacity(data.n_views());
    let mut logs = Vec::with_capacity(data.n_views());
    for d in 0..data.n_views() {
        let mut row = Vec::with_capacity(data.n_subgroups());
        let mut row_logs = Vec::with_capacity(data.n_subgroups());
        for s in 0..data.n_subgroups() {
            let (xi, log) = solve_xi(data, params, config, d, s)?;
            row.push(xi);
            row_logs.push(log);
        }
        out.push(row);
        logs.push(row_logs);
    }
    Ok((out, logs))
}

/// Sub-objective of `Θ, β₀`: the prediction term summed over subgroups.
fn theta_eval(
    data: &MultiViewDataset,
    params: &HipParams,
    family: Family,
    packed: &Array2<f64>,
    grad: bool,
) -> Result<(f64, Option<Array2<f64>>)> {
    let beta0 = packed.row(0).to_owned();
    let theta = packed.slice(s![1.., ..]);
    let mut value = 0.0;
    let mut g = grad.then(|| Array2::zeros(packed.dim()));
    for s in 0..data.n_subgroups() {
        let z = &params.z[s];
        let w = linear_predictor(z.view(), theta, beta0.view());
        let e = prediction_eval(data.outcome(s)?, family, params.tau, w.view(), grad)?;
        value += e.value;
        if let (Some(g), Some(dw)) = (g.as_mut(), e.d_linear) {
            let mut top = g.row_mut(0);
            top += &dw.sum_axis(Axis(0));
            let mut rest = g.slice_mut(s![1.., ..]);
            rest += &z.t().dot(&dw);
        }
    }
    Ok((value, g))
}

/// New `(Θ, β₀)` with the scores (and `τ`) fixed.
pub fn update_theta(data: &MultiViewDataset, params: &HipParams, config: &FitConfig) -> Result<(Array2<f64>, Array1<f64>, SolveLog)> {
    let (k, q) = params.theta.dim();
    let mut packed = Array2::zeros((k + 1, q));
    packed.row_mut(0).assign(&params.beta0);
    packed.slice_mut(s![1.., ..]).assign(&params.theta);
    let (packed, log) = backtracking_descent(packed, &config.solver, false, |p, g| {
        theta_eval(data, params, config.family, p, g)
    })?;
    Ok((packed.slice(s![1.., ..]).to_owned(), packed.row(0).to_owned(), log))
}

/// Observed zero fraction minus the mean Poisson zero probability
/// `exp(−exp(β₀ + Z_i Θ))`, before clamping. Offsets do not enter.
pub fn excess_zeros(data: &MultiViewDataset, params: &HipParams) -> Result<f64> {
    let mut zeros = 0.0;
    let mut expected = 0.0;
    for s in 0..data.n_subgroups() {
        let counts = data
            .outcome(s)?
            .as_counts()
            .ok_or_else(|| HipError::Data("tau update needs count outcomes".into()))?;
        let eta = linear_predictor(params.z[s].view(), params.theta.view(), params.beta0.view());
        for (i, &y) in counts.counts().iter().enumerate() {
            if y == 0.0 {
                zeros += 1.0;
            }
            expected += (-eta[[i, 0]].clamp(-EXP_CLIP, EXP_CLIP).exp()).exp();
        }
    }
    Ok((zeros - expected) / data.total_n() as f64)
}

/// Zero-state probability from the excess-zeros formula, clamped to
/// `(TAU_EPS, 1 − TAU_EPS)`.
pub fn update_tau(data: &MultiViewDataset, params: &HipParams) -> Result<f64> {
    Ok(excess_zeros(data, params)?.clamp(TAU_EPS, 1.0 - TAU_EPS))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InnerCounts {
    pub z: Vec<usize>,
    pub g: Vec<usize>,
    pub xi: Vec<Vec<usize>>,
    pub theta: usize,
    /// Inner solves that stopped at the iteration cap.
    pub capped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub objective: ObjectiveBreakdown,
    pub tau: Option<f64>,
    pub relative_change: f64,
    pub inner: InnerCounts,
    /// Wall time; not serialized so outputs stay reproducible.
    #[serde(skip)]
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// Objective at the initial parameters.
    pub initial: ObjectiveBreakdown,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub stop: StopReason,
    pub warnings: Vec<String>,
}

impl FitTrace {
    pub fn totals(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.objective.total).collect()
    }

    pub fn final_objective(&self) -> ObjectiveBreakdown {
        self.iterations.last().map(|r| r.objective).unwrap_or(self.initial)
    }
}

/// Checks that a dataset and configuration can be fitted together.
pub fn check_fit_inputs(data: &MultiViewDataset, config: &FitConfig) -> Result<()> {
    config.validate()?;
    if config.gamma.len() != data.n_views() {
        return Err(HipError::Config(format!(
            "{} penalty indicators for {} views",
            config.gamma.len(),
            data.n_views()
        )));
    }
    let report = validate_dataset(data);
    let blocking: Vec<String> = report
        .violations
        .iter()
        .filter(|v| !matches!(v, Violation::FamilyMismatch { .. }))
        .map(|v| v.to_string())
        .collect();
    if !blocking.is_empty() {
        return Err(HipError::Data(blocking.join("; ")));
    }
    for s in 0..data.n_subgroups() {
        if !data.outcome(s)?.supports(config.family) {
            return Err(HipError::Data(format!(
                "outcome of subgroup {} cannot be modelled as {}",
                data.subgroups[s].name,
                config.family.label()
            )));
        }
    }
    Ok(())
}

/// Runs the alternating minimization from [`initialize_params`] until the
/// relative change of the total objective drops below `epsilon_conv` or
/// `iter_max` outer iterations have run.
pub fn fit(data: &MultiViewDataset, config: &FitConfig) -> Result<(HipParams, FitTrace)> {
    check_fit_inputs(data, config)?;
    let params = initialize_params(data, config)?;
    fit_from(data, config, params)
}

/// Outer loop from given starting parameters.
pub fn fit_from(data: &MultiViewDataset, config: &FitConfig, mut params: HipParams) -> Result<(HipParams, FitTrace)> {
    let initial = losses::total_objective(data, &params, config)?;
    finite(initial.total, "initial")?;
    let mut prev = initial.total;
    let mut iterations = Vec::new();
    let mut warnings = Vec::new();
    let mut stop = StopReason::IterationCap;

    for t in 1..=config.iter_max {
        let started = Instant::now();
        let mut counts = InnerCounts::default();
        let mut capped = |log: &SolveLog| usize::from(!log.converged);

        let (z, logs) = update_z(data, &params, config)?;
        params.z = z;
        counts.z = logs.iter().map(|l| l.iterations).collect();
        counts.capped += logs.iter().map(&mut capped).sum::<usize>();

        for d in 0..data.n_views() {
            let (g, log) = solve_g(data, &params, config, d)?;
            params.g[d] = g;
            counts.g.push(log.iterations);
            counts.capped += capped(&log);
            let mut row = Vec::with_capacity(data.n_subgroups());
            for s in 0..data.n_subgroups() {
                let (xi, log) = solve_xi(data, &params, config, d, s)?;
                params.xi[d][s] = xi;
                row.push(log.iterations);
                counts.capped += capped(&log);
            }
            counts.xi.push(row);
        }

        let (theta, beta0, log) = update_theta(data, &params, config)?;
        params.theta = theta;
        params.beta0 = beta0;
        counts.theta = log.iterations;
        counts.capped += capped(&log);

        if config.family == Family::Zip {
            params.tau = Some(update_tau(data, &params)?);
        }

        let objective = losses::total_objective(data, &params, config)?;
        let total = finite(objective.total, "total")?;
        let rel = relative_change(prev, total);
        log::debug!("outer {t}: objective {total:.6} (rel {rel:.3e})");
        iterations.push(IterationRecord {
            objective,
            tau: params.tau,
            relative_change: rel,
            inner: counts,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        prev = total;
        if rel < config.epsilon_conv {
            stop = StopReason::Converged;
            break;
        }
    }
    if stop == StopReason::IterationCap {
        warnings.push(format!("no convergence within {} outer iterations", config.iter_max));
    }
    let capped: usize = iterations.iter().map(|r| r.inner.capped).sum();
    if capped > 0 {
        warnings.push(format!("{capped} inner solves stopped at the iteration cap"));
    }
    Ok((
        params,
        FitTrace { initial, iterations, converged: stop == StopReason::Converged, stop, warnings },
    ))
}

/// Subgroup scores standardized exactly as inside [`fit`].
pub fn standardized(z: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut out = z.to_owned();
    linalg::standardize_columns(&mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CountOutcome, Subgroup, ViewInfo};
    use ndarray::array;

    fn count_data(y: Vec<f64>, z_rows: usize) -> MultiViewDataset {
        MultiViewDataset {
            family: Family::Zip,
            views: vec![ViewInfo::numbered("a", 1)],
            subgroups: vec![Subgroup {
                name: "s".into(),
                views: vec![Array2::zeros((z_rows, 1))],
                outcome: Some(OutcomeData::Counts(CountOutcome::unit_offsets(Array1::from(y)))),
            }],
        }
    }

    fn params_with_eta(n: usize, eta: f64) -> HipParams {
        HipParams {
            z: vec![Array2::zeros((n, 1))],
            g: vec![Array2::ones((1, 1))],
            xi: vec![vec![Array2::ones((1, 1))]],
            theta: Array2::ones((1, 1)),
            beta0: array![eta],
            tau: Some(0.5),
        }
    }

    #[test]
    fn tau_hand_value() {
        let data = count_data(vec![0.0, 0.0, 1.0, 3.0], 4);
        let tau = update_tau(&data, &params_with_eta(4, 0.0)).unwrap();
        let expected = (2.0 - 4.0 * (-1f64).exp()) / 4.0;
        assert!((tau - expected).abs() < 1e-15);
        assert!((tau - 0.132121).abs() < 1e-6);
    }

    #[test]
    fn tau_is_clamped() {
        let data = count_data(vec![1.0, 2.0, 1.0], 3);
        assert!(excess_zeros(&data, &params_with_eta(3, 0.0)).unwrap() < 0.0);
        assert_eq!(update_tau(&data, &params_with_eta(3, 0.0)).unwrap(), TAU_EPS);
        let data = count_data(vec![0.0, 0.0, 0.0], 3);
        assert_eq!(update_tau(&data, &params_with_eta(3, 50.0)).unwrap(), 1.0 - TAU_EPS);
    }

    #[test]
    fn descent_solves_a_quadratic() {
        // f(x) = ‖x − a‖² scaled by 50, minimum at a
        let a = array![[1.0, -2.0], [0.5, 3.0]];
        let settings = SolverSettings { inner_tol: 1e-14, max_inner_iter: 5000, ..Default::default() };
        for accelerate in [false, true] {
            let (x, log) = backtracking_descent(Array2::zeros((2, 2)), &settings, accelerate, |x, g| {
                let r = x - &a;
                Ok((50.0 * linalg::frobenius_sq(r.view()), g.then(|| &r * 100.0)))
            })
            .unwrap();
            assert!((&x - &a).iter().all(|v| v.abs() < 1e-6), "{x:?}");
            assert!(log.objective.windows(2).all(|w| w[1] <= w[0]));
            assert!(log.backtracks > 0);
        }
    }
}
