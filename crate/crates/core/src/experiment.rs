//! Monte Carlo replicates of the simulation study: generate a train/test
//! pair, tune the penalties, refit on the selected variables and score
//! selection and prediction.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Family, FitConfig, SolverSettings};
use crate::data::standardize_subgroup;
use crate::error::{HipError, Result};
use crate::predict::{self, SelectionMetrics};
use crate::selection::{self, SearchSpec};
use crate::simulate::{self, GroundTruth, ScenarioSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Generator settings; the seed is replaced per replicate.
    pub scenario: ScenarioSpec,
    /// Family used by the fitted model, which may differ from the data.
    pub engine: Family,
    pub k: usize,
    pub search: SearchSpec,
    pub replicates: usize,
    /// Replicate `r` uses seed `seed + r` unless `seeds` is given.
    pub seed: u64,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    pub epsilon_conv: f64,
    pub iter_max: usize,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl ExperimentSpec {
    pub fn new(scenario: ScenarioSpec, engine: Family, search: SearchSpec, replicates: usize) -> Self {
        Self {
            k: scenario.k,
            seed: scenario.seed,
            scenario,
            engine,
            search,
            replicates,
            seeds: None,
            epsilon_conv: 1e-5,
            iter_max: 200,
            solver: SolverSettings::default(),
        }
    }

    pub fn replicate_seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.replicates as u64).map(|r| self.seed.wrapping_add(r)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicate_seeds().is_empty() {
            return Err(HipError::Config("at least one replicate is required".into()));
        }
        self.scenario.validate()?;
        self.search.validate()?;
        if self.search.n_top.len() != self.scenario.p.len() {
            return Err(HipError::Config("one N_top per view is required".into()));
        }
        let data_family = self.scenario.family;
        let compatible = match (data_family, self.engine) {
            (Family::MultiClass { classes: a }, Family::MultiClass { classes: b }) => a == b,
            (a, b) => a.is_count() && b.is_count(),
        };
        if !compatible {
            return Err(HipError::Config(format!(
                "{} engine cannot model {} data",
                self.engine.label(),
                data_family.label()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub seed: u64,
    pub lambda_g: f64,
    pub lambda_xi: f64,
    /// Averages over all (view, subgroup) blocks.
    pub selection: SelectionMetrics,
    /// Indexed `[d][s]`.
    pub blocks: Vec<Vec<SelectionMetrics>>,
    /// Per subgroup, selected true signals that no other subgroup has,
    /// summed over views.
    pub unique_hits: Vec<usize>,
    /// Accuracy or `D²` on the test data.
    pub test_metric: Option<f64>,
    pub train_metric: Option<f64>,
    pub tau: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub family: String,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation; zero for a single replicate.
    pub sd: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub replicates: Vec<ReplicateResult>,
    pub failures: Vec<(u64, String)>,
    pub summary: Vec<SummaryRow>,
}

fn block_metrics(truth: &GroundTruth, selection: &selection::SelectionResult) -> Result<Vec<Vec<SelectionMetrics>>> {
    truth
        .signals
        .iter()
        .enumerate()
        .map(|(d, per_s)| {
            per_s
                .iter()
                .enumerate()
                .map(|(s, signal)| predict::selection_metrics(signal, &selection.ranked[d][s].selected, selection.p[d]))
                .collect()
        })
        .collect()
}

fn unique_hits(truth: &GroundTruth, selection: &selection::SelectionResult) -> Vec<usize> {
    let subgroups = truth.spec.n.len();
    (0..subgroups)
        .map(|s| {
            truth
                .signals
                .iter()
                .enumerate()
                .map(|(d, per_s)| {
                    let others: BTreeSet<usize> =
                        (0..subgroups).filter(|&o| o != s).flat_map(|o| per_s[o].iter().copied()).collect();
                    let chosen: BTreeSet<usize> = selection.ranked[d][s].selected.iter().copied().collect();
                    per_s[s].iter().filter(|i| !others.contains(i) && chosen.contains(i)).count()
                })
                .sum()
        })
        .collect()
}

/// One replicate with the given seed.
pub fn run_replicate(spec: &ExperimentSpec, seed: u64) -> Result<ReplicateResult> {
    let scenario = ScenarioSpec { seed, ..spec.scenario.clone() };
    let (train, test, truth) = simulate::generate_train_test(&scenario)?;
    let (train, scaling) = standardize_subgroup(&train);
    let test = scaling.apply(&test)?;
    let config = FitConfig {
        epsilon_conv: spec.epsilon_conv,
        iter_max: spec.iter_max,
        solver: spec.solver.clone(),
        ..FitConfig::new(spec.k, 1.0, 1.0, train.n_views(), spec.engine).with_seed(seed)
    };
    let search = SearchSpec { seed, ..spec.search.clone() };
    let outcome = selection::lambda_search(&train, &config, &search, 1)?;
    let best = outcome.best;

    let blocks = block_metrics(&truth, &best.selection)?;
    let all: Vec<&SelectionMetrics> = blocks.iter().flatten().collect();
    let mean = |f: fn(&SelectionMetrics) -> f64| all.iter().map(|m| f(m)).sum::<f64>() / all.len() as f64;
    let selection = SelectionMetrics {
        tpr: mean(|m| m.tpr),
        fpr: mean(|m| m.fpr),
        f1: mean(|m| m.f1),
        undefined: all.iter().flat_map(|m| m.undefined.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect(),
    };

    let subset = &best.subset;
    let train_metric = predict::outcome_metric(&subset.data, &subset.params.z, &subset.params, spec.engine, scenario.family)?;
    let test_subset = test.select_columns(&subset.columns)?;
    let (z_test, _) = predict::predict_all_scores(&test_subset, &subset.params)?;
    let test_metric = predict::outcome_metric(&test_subset, &z_test, &subset.params, spec.engine, scenario.family)?;

    Ok(ReplicateResult {
        seed,
        lambda_g: best.lambda_g,
        lambda_xi: best.lambda_xi,
        unique_hits: unique_hits(&truth, &best.selection),
        selection,
        blocks,
        test_metric: test_metric.value(),
        train_metric: train_metric.value(),
        tau: subset.params.tau,
        converged: best.full_trace.converged && subset.trace.converged,
    })
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn summarize(spec: &ExperimentSpec, results: &[ReplicateResult]) -> Vec<SummaryRow> {
    let family = spec.engine.label().to_string();
    let mut metrics: Vec<(&str, Vec<f64>)> = vec![
        ("tpr", results.iter().map(|r| r.selection.tpr).collect()),
        ("fpr", results.iter().map(|r| r.selection.fpr).collect()),
        ("f1", results.iter().map(|r| r.selection.f1).collect()),
    ];
    let outcome_name = if spec.engine.is_count() { "d2" } else { "accuracy" };
    metrics.push((outcome_name, results.iter().filter_map(|r| r.test_metric).collect()));
    metrics
        .into_iter()
        .map(|(name, vals)| {
            let (mean, sd) = mean_sd(&vals);
            SummaryRow { family: family.clone(), metric: name.to_string(), mean, sd, count: vals.len() }
        })
        .collect()
}

/// Runs every replicate on a pool of `jobs` threads. Failed replicates are
/// listed and left out of the summary.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<ExperimentReport> {
    spec.validate()?;
    let seeds = spec.replicate_seeds();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HipError::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<ReplicateResult>> = pool.install(|| seeds.par_iter().map(|&s| run_replicate(spec, s)).collect());
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in seeds.iter().zip(outcomes) {
        match r {
            Ok(r) => replicates.push(r),
            Err(e) => failures.push((*seed, e.to_string())),
        }
    }
    if replicates.is_empty() {
        return Err(HipError::Numerical(format!("all {} replicates failed", seeds.len())));
    }
    let summary = summarize(spec, &replicates);
    Ok(ExperimentReport { spec: spec.clone(), replicates, failures, summary })
}
