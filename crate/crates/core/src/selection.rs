//! Variable ranking, subset refits, eBIC and the penalty-parameter search.

use std::collections::BTreeSet;
use std::time::Instant;

use ndarray::{concatenate, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::config::FitConfig;
use crate::data::{HipParams, MultiViewDataset};
use crate::error::{HipError, Result};
use crate::linalg;
use crate::losses;
use crate::optim::{self, FitTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Grid,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Ebic0,
    Ebic05,
    #[default]
    Ebic1,
}

impl Criterion {
    pub fn delta(self) -> f64 {
        match self {
            Criterion::Ebic0 => 0.0,
            Criterion::Ebic05 => 0.5,
            Criterion::Ebic1 => 1.0,
        }
    }

    pub fn pick(self, triple: &EbicTriple) -> f64 {
        match self {
            Criterion::Ebic0 => triple.ebic0,
            Criterion::Ebic05 => triple.ebic05,
            Criterion::Ebic1 => triple.ebic1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub mode: SearchMode,
    pub num_steps: usize,
    /// Excluded lower end of the range.
    pub lambda_low: f64,
    pub lambda_high: f64,
    pub criterion: Criterion,
    /// Share of grid pairs evaluated in random mode.
    pub random_fraction: f64,
    /// Variables kept per view after ranking.
    pub n_top: Vec<usize>,
    pub seed: u64,
}

impl SearchSpec {
    /// Random search over `(0, 2]` with 8 steps, 20% of the pairs and eBIC₁.
    pub fn new(n_top: Vec<usize>) -> Self {
        Self {
            mode: SearchMode::Random,
            num_steps: 8,
            lambda_low: 0.0,
            lambda_high: 2.0,
            criterion: Criterion::Ebic1,
            random_fraction: 0.2,
            n_top,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_steps < 2 {
            return Err(HipError::Config(format!("num_steps must be at least 2, got {}", self.num_steps)));
        }
        if !(self.lambda_low >= 0.0 && self.lambda_high > self.lambda_low && self.lambda_high.is_finite()) {
            return Err(HipError::Config(format!(
                "lambda range ({}, {}] is invalid",
                self.lambda_low, self.lambda_high
            )));
        }
        if !(self.random_fraction > 0.0 && self.random_fraction <= 1.0) {
            return Err(HipError::Config(format!(
                "random_fraction must lie in (0, 1], got {}",
                self.random_fraction
            )));
        }
        if self.n_top.iter().any(|&n| n == 0) {
            return Err(HipError::Config("N_top must be positive".into()));
        }
        Ok(())
    }

    /// `low + step·i` for `i = 1..=num_steps`.
    pub fn grid(&self) -> Vec<f64> {
        let step = (self.lambda_high - self.lambda_low) / self.num_steps as f64;
        (1..=self.num_steps).map(|i| self.lambda_low + step * i as f64).collect()
    }

    /// Number of pairs evaluated.
    pub fn candidate_count(&self) -> usize {
        let total = self.num_steps * self.num_steps;
        match self.mode {
            SearchMode::Grid => total,
            SearchMode::Random => ((self.random_fraction * total as f64).ceil() as usize).clamp(1, total),
        }
    }

    /// `(λ_G, λ_ξ)` pairs in grid order. Random mode keeps a seeded sample
    /// of pair indices without replacement, in ascending index order.
    pub fn candidates(&self) -> Vec<(f64, f64)> {
        let grid = self.grid();
        let n = grid.len();
        let mut indices: Vec<usize> = match self.mode {
            SearchMode::Grid => (0..n * n).collect(),
            SearchMode::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rand::seq::index::sample(&mut rng, n * n, self.candidate_count()).into_vec()
            }
        };
        indices.sort_unstable();
        indices.into_iter().map(|i| (grid[i / n], grid[i % n])).collect()
    }
}

/// Ranking of one loading matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedBlock {
    /// Variable indices by decreasing row norm, ties by ascending index.
    pub order: Vec<usize>,
    /// Row norms in the same order.
    pub scores: Vec<f64>,
    /// The first `N_top` entries of `order`.
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub n_top: Vec<usize>,
    /// Indexed `[d][s]`.
    pub ranked: Vec<Vec<RankedBlock>>,
    /// Per view, variables selected in at least one subgroup, ascending.
    pub union: Vec<Vec<usize>>,
    /// Total size of the unions.
    pub nu: usize,
    pub p: Vec<usize>,
}

fn rank_block(b: &Array2<f64>, n_top: usize) -> RankedBlock {
    let norms = linalg::row_norms(b.view());
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &c| norms[c].total_cmp(&norms[a]).then(a.cmp(&c)));
    let scores = order.iter().map(|&i| norms[i]).collect();
    let selected = order[..n_top].to_vec();
    RankedBlock { order, scores, selected }
}

/// Ranks rows of loadings indexed `[d][s]` and forms per-view unions.
pub fn rank_loadings(loadings: &[Vec<Array2<f64>>], n_top: &[usize]) -> Result<SelectionResult> {
    if n_top.len() != loadings.len() {
        return Err(HipError::Config(format!("{} N_top values for {} views", n_top.len(), loadings.len())));
    }
    let mut ranked = Vec::with_capacity(loadings.len());
    let mut union = Vec::with_capacity(loadings.len());
    let mut p = Vec::with_capacity(loadings.len());
    for (d, blocks) in loadings.iter().enumerate() {
        let pd = blocks.first().map_or(0, |b| b.nrows());
        if n_top[d] == 0 || n_top[d] > pd {
            return Err(HipError::Config(format!("N_top = {} for view {d} with {pd} variables", n_top[d])));
        }
        let per_s: Vec<RankedBlock> = blocks.iter().map(|b| rank_block(b, n_top[d])).collect();
        let set: BTreeSet<usize> = per_s.iter().flat_map(|r| r.selected.iter().copied()).collect();
        union.push(set.into_iter().collect());
        ranked.push(per_s);
        p.push(pd);
    }
    let nu = union.iter().map(Vec::len).sum();
    Ok(SelectionResult { n_top: n_top.to_vec(), ranked, union, nu, p })
}

/// Ranks variables by the row norms of `B^{d,s} = G^d ⊙ Ξ^{d,s}`.
pub fn rank_variables(params: &HipParams, n_top: &[usize]) -> Result<SelectionResult> {
    let loadings: Vec<Vec<Array2<f64>>> = (0..params.g.len())
        .map(|d| (0..params.z.len()).map(|s| params.loading(d, s)).collect())
        .collect();
    rank_loadings(&loadings, n_top)
}

/// Refit on the union-selected columns.
#[derive(Debug, Clone)]
pub struct SubsetFit {
    /// Original column index of every retained variable, per view.
    pub columns: Vec<Vec<usize>>,
    pub data: MultiViewDataset,
    pub params: HipParams,
    pub trace: FitTrace,
}

impl SubsetFit {
    /// Loadings of the refit placed back into the original variable space,
    /// with zero rows for dropped variables; indexed `[d][s]`.
    pub fn full_loadings(&self, p: &[usize]) -> Vec<Vec<Array2<f64>>> {
        (0..self.columns.len())
            .map(|d| {
                (0..self.params.z.len())
                    .map(|s| {
                        let b = self.params.loading(d, s);
                        let mut full = Array2::zeros((p[d], b.ncols()));
                        for (r, &j) in self.columns[d].iter().enumerate() {
                            full.row_mut(j).assign(&b.row(r));
                        }
                        full
                    })
                    .collect()
            })
            .collect()
    }
}

/// Fits again on the union-selected variables with the same configuration
/// and seed.
pub fn subset_refit(data: &MultiViewDataset, config: &FitConfig, selection: &SelectionResult) -> Result<SubsetFit> {
    if selection.union.iter().any(Vec::is_empty) {
        return Err(HipError::Config("every view needs at least one selected variable".into()));
    }
    let reduced = data.select_columns(&selection.union)?;
    let (params, trace) = optim::fit(&reduced, config)?;
    Ok(SubsetFit { columns: selection.union.clone(), data: reduced, params, trace })
}

/// `log Σ_{w=low}^{high} C(p, w)`, accumulated in log space.
pub fn log_binomial_sum(p: usize, low: usize, high: usize) -> f64 {
    let high = high.min(p);
    if low > high {
        return f64::NEG_INFINITY;
    }
    let lp = ln_gamma(p as f64 + 1.0);
    let terms: Vec<f64> = (low..=high)
        .map(|w| lp - ln_gamma(w as f64 + 1.0) - ln_gamma((p - w) as f64 + 1.0))
        .collect();
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EbicTriple {
    pub ebic0: f64,
    pub ebic05: f64,
    pub ebic1: f64,
    /// Prediction loss of the scored fit.
    pub loss: f64,
    pub nu: usize,
    /// `Σ_d log Σ_w C(p_d, w)`; the third term is `2δ` times this.
    pub combinatorial: f64,
}

/// `eBIC_δ` of a subset fit for `δ ∈ {0, 0.5, 1}`:
/// `2 Σ_s F + Σ_s log(n_s) · ν + 2δ Σ_d log Σ_{w=N_d}^{S·N_d} C(p_d, w)`.
pub fn ebic_triple(subset_data: &MultiViewDataset, params: &HipParams, family: crate::Family, selection: &SelectionResult) -> Result<EbicTriple> {
    let (loss, _) = losses::prediction_term(subset_data, params, family)?;
    Ok(ebic_from_parts(loss, subset_data, selection))
}

pub(crate) fn ebic_from_parts(loss: f64, data: &MultiViewDataset, selection: &SelectionResult) -> EbicTriple {
    let s = data.n_subgroups();
    let log_n: f64 = (0..s).map(|i| (data.n(i) as f64).ln()).sum();
    let combinatorial: f64 = selection
        .p
        .iter()
        .zip(&selection.n_top)
        .map(|(&p, &n)| log_binomial_sum(p, n, s * n))
        .sum();
    let base = 2.0 * loss + log_n * selection.nu as f64;
    EbicTriple {
        ebic0: base,
        ebic05: base + combinatorial,
        ebic1: base + 2.0 * combinatorial,
        loss,
        nu: selection.nu,
        combinatorial,
    }
}

/// Single criterion value for an arbitrary `δ`.
pub fn compute_ebic(subset_data: &MultiViewDataset, params: &HipParams, family: crate::Family, selection: &SelectionResult, delta: f64) -> Result<f64> {
    let t = ebic_triple(subset_data, params, family, selection)?;
    Ok(t.ebic0 + 2.0 * delta * t.combinatorial)
}

/// Full fit, ranking, subset refit and eBIC for one penalty pair.
#[derive(Debug, Clone)]
pub struct CandidateFit {
    pub lambda_g: f64,
    pub lambda_xi: f64,
    pub full_params: HipParams,
    pub full_trace: FitTrace,
    pub selection: SelectionResult,
    pub subset: SubsetFit,
    pub ebic: EbicTriple,
}

pub fn evaluate_candidate(data: &MultiViewDataset, base: &FitConfig, n_top: &[usize], lambda_g: f64, lambda_xi: f64) -> Result<CandidateFit> {
    let config = FitConfig { lambda_g, lambda_xi, ..base.clone() };
    let (full_params, full_trace) = optim::fit(data, &config)?;
    let selection = rank_variables(&full_params, n_top)?;
    let subset = subset_refit(data, &config, &selection)?;
    let ebic = ebic_triple(&subset.data, &subset.params, config.family, &selection)?;
    Ok(CandidateFit { lambda_g, lambda_xi, full_params, full_trace, selection, subset, ebic })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub lambda_g: f64,
    pub lambda_xi: f64,
    pub ebic: Option<EbicTriple>,
    /// Value of the search criterion.
    pub criterion: Option<f64>,
    pub converged: bool,
    pub subset_converged: bool,
    pub iterations: usize,
    pub error: Option<String>,
    pub winner: bool,
    #[serde(skip)]
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: CandidateFit,
    pub candidates: Vec<CandidateSummary>,
}

fn summarize(pair: (f64, f64), result: &Result<CandidateFit>, criterion: Criterion, elapsed_ms: f64) -> CandidateSummary {
    match result {
        Ok(c) => CandidateSummary {
            lambda_g: pair.0,
            lambda_xi: pair.1,
            ebic: Some(c.ebic),
            criterion: Some(criterion.pick(&c.ebic)),
            converged: c.full_trace.converged,
            subset_converged: c.subset.trace.converged,
            iterations: c.full_trace.iterations.len(),
            error: None,
            winner: false,
            elapsed_ms,
        },
        Err(e) => CandidateSummary {
            lambda_g: pair.0,
            lambda_xi: pair.1,
            ebic: None,
            criterion: None,
            converged: false,
            subset_converged: false,
            iterations: 0,
            error: Some(e.to_string()),
            winner: false,
            elapsed_ms,
        },
    }
}

/// Index of the smallest criterion value, ties going to the
/// lexicographically smallest `(λ_G, λ_ξ)`.
pub fn pick_winner(candidates: &[CandidateSummary]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        let Some(v) = c.criterion.filter(|v| v.is_finite()) else { continue };
        best = match best {
            None => Some(i),
            Some(b) => {
                let bv = candidates[b].criterion.unwrap();
                let key = |c: &CandidateSummary| (c.lambda_g, c.lambda_xi);
                let better = v < bv || (v == bv && key(c).partial_cmp(&key(&candidates[b])) == Some(std::cmp::Ordering::Less));
                Some(if better { i } else { b })
            }
        };
    }
    best
}

/// Evaluates every candidate pair on a pool of `jobs` threads and returns
/// the one minimizing the chosen criterion. Each candidate starts from its
/// own seeded initialization, so the outcome does not depend on `jobs`.
pub fn lambda_search(data: &MultiViewDataset, base: &FitConfig, spec: &SearchSpec, jobs: usize) -> Result<SearchOutcome> {
    spec.validate()?;
    optim::check_fit_inputs(data, &FitConfig { lambda_g: 1.0, lambda_xi: 1.0, ..base.clone() })?;
    let pairs = spec.candidates();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HipError::Config(format!("thread pool: {e}")))?;
    let results: Vec<(Result<CandidateFit>, f64)> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(lg, lx)| {
                let started = Instant::now();
                let r = evaluate_candidate(data, base, &spec.n_top, lg, lx);
                (r, started.elapsed().as_secs_f64() * 1e3)
            })
            .collect()
    });
    let mut summaries: Vec<CandidateSummary> = pairs
        .iter()
        .zip(&results)
        .map(|(&pair, (r, ms))| summarize(pair, r, spec.criterion, *ms))
        .collect();
    let winner = pick_winner(&summaries).ok_or_else(|| {
        let first = summaries.iter().find_map(|c| c.error.clone()).unwrap_or_default();
        HipError::Numerical(format!("all {} candidates failed; first error: {first}", summaries.len()))
    })?;
    summaries[winner].winner = true;
    let best = results.into_iter().nth(winner).expect("winner index").0.expect("winner succeeded");
    Ok(SearchOutcome { best, candidates: summaries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KTarget {
    /// Views concatenated by column, subgroups stacked by row.
    Concatenated,
    /// Each `X^{d,s}` separately.
    PerViewSubgroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scree {
    pub label: String,
    pub singular_values: Vec<f64>,
    pub k: usize,
}

/// Largest `k` whose relative drop `(σ_k − σ_{k+1}) / σ₁` reaches the
/// threshold, or 1 when none does.
pub fn k_from_singular_values(sv: &[f64], threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(HipError::Config(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let first = sv.first().copied().unwrap_or(0.0);
    if !(first > 0.0) {
        return Err(HipError::Data("matrix is zero".into()));
    }
    let mut k = 1;
    for (i, pair) in sv.windows(2).enumerate() {
        if (pair[0] - pair[1]) / first >= threshold {
            k = i + 1;
        }
    }
    Ok(k)
}

/// Singular values and suggested `K` for the chosen target.
pub fn select_k(data: &MultiViewDataset, threshold: f64, target: KTarget) -> Result<Vec<Scree>> {
    let scree = |label: String, m: &Array2<f64>| -> Result<Scree> {
        let singular_values = linalg::singular_values(m.view());
        let k = k_from_singular_values(&singular_values, threshold)?;
        Ok(Scree { label, singular_values, k })
    };
    match target {
        KTarget::Concatenated => {
            let rows: Vec<Array2<f64>> = data
                .subgroups
                .iter()
                .map(|sg| {
                    let views: Vec<_> = sg.views.iter().map(|x| x.view()).collect();
                    concatenate(Axis(1), &views)
                })
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| HipError::Shape(e.to_string()))?;
            let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
            let all = concatenate(Axis(0), &views).map_err(|e| HipError::Shape(e.to_string()))?;
            Ok(vec![scree("concatenated".into(), &all)?])
        }
        KTarget::PerViewSubgroup => {
            let mut out = Vec::new();
            for (d, view) in data.views.iter().enumerate() {
                for (s, sg) in data.subgroups.iter().enumerate() {
                    out.push(scree(format!("{}/{}", view.name, sg.name), data.x(d, s))?);
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ranking_hand_case() {
        let b = array![[3.0, 4.0], [0.1, 0.1], [1.0, 0.0]];
        let r = rank_loadings(&[vec![b]], &[2]).unwrap();
        assert_eq!(r.ranked[0][0].selected, vec![0, 2]);
        assert_eq!(&r.ranked[0][0].scores[..2], &[5.0, 1.0]);
        assert_eq!(r.nu, 2);
    }

    #[test]
    fn ties_break_by_index() {
        let b = array![[1.0], [2.0], [2.0], [1.0]];
        let r = rank_loadings(&[vec![b]], &[3]).unwrap();
        assert_eq!(r.ranked[0][0].order, vec![1, 2, 0, 3]);
    }

    #[test]
    fn unions_of_identical_and_disjoint_sets() {
        let a = array![[1.0], [0.0], [0.0], [0.5]];
        let b = array![[0.0], [1.0], [0.5], [0.0]];
        assert_eq!(rank_loadings(&[vec![a.clone(), a.clone()]], &[2]).unwrap().nu, 2);
        assert_eq!(rank_loadings(&[vec![a, b]], &[2]).unwrap().nu, 4);
    }

    #[test]
    fn n_top_above_p_is_an_error() {
        assert!(rank_loadings(&[vec![Array2::zeros((3, 1))]], &[4]).is_err());
    }

    #[test]
    fn binomial_hand_case() {
        assert!((log_binomial_sum(3, 1, 2) - 6f64.ln()).abs() < 1e-12);
        assert!(log_binomial_sum(2000, 50, 100).is_finite());
    }

    #[test]
    fn grid_and_random_sizes() {
        let mut spec = SearchSpec::new(vec![1]);
        let grid = spec.grid();
        assert_eq!(grid.len(), 8);
        assert!((grid[0] - 0.25).abs() < 1e-15 && (grid[7] - 2.0).abs() < 1e-15);
        assert_eq!(spec.candidates().len(), 13);
        spec.mode = SearchMode::Grid;
        assert_eq!(spec.candidates().len(), 64);
        spec.num_steps = 2;
        assert_eq!(spec.candidates().len(), 4);
    }

    #[test]
    fn full_fraction_random_equals_grid() {
        let mut spec = SearchSpec { random_fraction: 1.0, ..SearchSpec::new(vec![1]) };
        let random = spec.candidates();
        spec.mode = SearchMode::Grid;
        assert_eq!(random, spec.candidates());
    }

    #[test]
    fn k_rule_hand_cases() {
        assert_eq!(k_from_singular_values(&[10.0, 1.0, 0.9, 0.8], 0.2).unwrap(), 1);
        assert_eq!(k_from_singular_values(&[10.0, 7.0, 1.0, 0.9], 0.2).unwrap(), 2);
        assert!(k_from_singular_values(&[0.0, 0.0], 0.2).is_err());
        assert!(k_from_singular_values(&[1.0], 1.0).is_err());
        assert_eq!(k_from_singular_values(&[4.0, 3.9], 0.01).unwrap(), 1);
    }

    #[test]
    fn rank_one_matrix_has_one_factor() {
        let u = array![1.0, -2.0, 0.5, 3.0];
        let v = array![2.0, 1.0, -1.0];
        let m = Array2::from_shape_fn((4, 3), |(i, j)| u[i] * v[j]);
        let sv = linalg::singular_values(m.view());
        for t in [0.05, 0.5, 0.95] {
            assert_eq!(k_from_singular_values(&sv, t).unwrap(), 1);
        }
    }

    #[test]
    fn winner_ties_go_to_smaller_lambdas() {
        let c = |lg: f64, lx: f64, v: f64| CandidateSummary {
            lambda_g: lg,
            lambda_xi: lx,
            ebic: None,
            criterion: Some(v),
            converged: true,
            subset_converged: true,
            iterations: 1,
            error: None,
            winner: false,
            elapsed_ms: 0.0,
        };
        let cands = vec![c(0.5, 1.0, 3.0), c(0.5, 0.25, 3.0), c(1.0, 0.25, 4.0)];
        assert_eq!(pick_winner(&cands), Some(1));
    }
}
