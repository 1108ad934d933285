//! Synthetic multi-view data with known signal variables.
//!
//! Loadings have a block of signal rows drawn from `U(-1,-0.5) ∪ U(0.5,1)`
//! and zeros elsewhere; their columns are orthonormalized. Scores are
//! `N(25, 3²)`, views are `X = Z Bᵀ + E` with `E ~ N(0, σ²)`, and outcomes
//! are binary (softmax argmax), Poisson or zero-inflated Poisson.
//!
//! Random draws come from independent ChaCha8 streams of one seed: stream 0
//! for loadings, 1 for training data and 2 for test data, so a train/test
//! pair shares its loadings.

use ndarray::{Array1, Array2};
use rand::distr::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use crate::config::Family;
use crate::data::{ClassOutcome, CountOutcome, MultiViewDataset, OutcomeData, Subgroup, ViewInfo};
use crate::error::{HipError, Result};
use crate::linalg;

const LOADING_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

pub const BINARY_BETA0: [f64; 2] = [0.5, 0.5];
pub const BINARY_THETA: [[f64; 2]; 2] = [[1.0, 0.5], [0.2, 0.8]];
pub const COUNT_BETA0: f64 = 2.0;
pub const COUNT_THETA: [f64; 2] = [0.7, 0.2];
pub const ZIP_TAU: f64 = 0.25;
pub const SCORE_MEAN: f64 = 25.0;
pub const SCORE_SD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overlap {
    /// Every subgroup shares the same signal variables.
    Full,
    /// Subgroups share `common` signals and each has its own remainder.
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    /// `p = (300, 350)`.
    Low,
    /// `p = (2000, 3000)`.
    High,
}

impl Dimension {
    pub fn sizes(self) -> Vec<usize> {
        match self {
            Dimension::Low => vec![300, 350],
            Dimension::High => vec![2000, 3000],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub overlap: Overlap,
    /// Variables per view.
    pub p: Vec<usize>,
    /// Samples per subgroup.
    pub n: Vec<usize>,
    pub k: usize,
    pub family: Family,
    /// Signal variables per view and subgroup.
    pub signals: usize,
    /// Signals shared by all subgroups under partial overlap.
    pub common: usize,
    /// Standard deviation of the view noise `E`.
    pub noise_sd: f64,
    /// Add standard normal noise to the binary scores before the argmax.
    pub outcome_noise: bool,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Two views of the given dimension, subgroups of 250 and 260 samples,
    /// two factors and 50 signals per view and subgroup (25 shared under
    /// partial overlap).
    pub fn standard(family: Family, overlap: Overlap, dimension: Dimension, seed: u64) -> Self {
        Self {
            overlap,
            p: dimension.sizes(),
            n: vec![250, 260],
            k: 2,
            family,
            signals: 50,
            common: 25,
            noise_sd: 1.0,
            outcome_noise: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HipError::Config(msg));
        if self.p.is_empty() || self.n.is_empty() {
            return bad("scenario needs at least one view and one subgroup".into());
        }
        if self.k == 0 || self.signals < self.k {
            return bad(format!("need K ≥ 1 and at least K signals, got K = {}, {} signals", self.k, self.signals));
        }
        if self.overlap == Overlap::Partial && self.common > self.signals {
            return bad(format!("{} common signals exceed {} signals", self.common, self.signals));
        }
        if let Some(&n) = self.n.iter().find(|&&n| n < 2) {
            return bad(format!("subgroups need at least 2 samples, got {n}"));
        }
        let needed = self.signal_span();
        if let Some(&p) = self.p.iter().find(|&&p| p < needed) {
            return bad(format!("views need at least {needed} variables, got {p}"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise sd must be non-negative, got {}", self.noise_sd));
        }
        match self.family {
            Family::MultiClass { classes: 2 } | Family::Poisson | Family::Zip => {}
            Family::MultiClass { classes } => return bad(format!("binary outcomes only, got {classes} classes")),
        }
        if self.k != BINARY_THETA.len() {
            return bad(format!("outcome coefficients are defined for K = 2, got {}", self.k));
        }
        Ok(())
    }

    fn signal_span(&self) -> usize {
        match self.overlap {
            Overlap::Full => self.signals,
            Overlap::Partial => self.common + self.n.len() * (self.signals - self.common),
        }
    }

    /// Signal variable indices of subgroup `s`, ascending.
    pub fn signal_indices(&self, s: usize) -> Vec<usize> {
        match self.overlap {
            Overlap::Full => (0..self.signals).collect(),
            Overlap::Partial => {
                let unique = self.signals - self.common;
                let start = self.common + s * unique;
                (0..self.common).chain(start..start + unique).collect()
            }
        }
    }
}

/// Generating quantities of a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: ScenarioSpec,
    /// Signal indices indexed `[d][s]`.
    pub signals: Vec<Vec<Vec<usize>>>,
    /// Loadings indexed `[d][s]`, `p_d × K` with orthonormal columns.
    pub loadings: Vec<Vec<Array2<f64>>>,
    /// Training scores per subgroup, before any standardization.
    pub z: Vec<Array2<f64>>,
    pub theta: Array2<f64>,
    pub beta0: Array1<f64>,
    pub tau: Option<f64>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Sparse orthonormal loadings and their signal sets, both indexed `[d][s]`.
pub fn generate_loadings(spec: &ScenarioSpec) -> Result<(Vec<Vec<Array2<f64>>>, Vec<Vec<Vec<usize>>>)> {
    spec.validate()?;
    let mut rng = stream(spec.seed, LOADING_STREAM);
    let magnitude = Uniform::new(0.5, 1.0).expect("valid bounds");
    let mut loadings = Vec::with_capacity(spec.p.len());
    let mut signals = Vec::with_capacity(spec.p.len());
    for &p in &spec.p {
        let mut per_s = Vec::with_capacity(spec.n.len());
        let mut sig_s = Vec::with_capacity(spec.n.len());
        for s in 0..spec.n.len() {
            let idx = spec.signal_indices(s);
            let compact = Array2::from_shape_simple_fn((idx.len(), spec.k), || {
                let v: f64 = magnitude.sample(&mut rng);
                if rng.random_bool(0.5) {
                    -v
                } else {
                    v
                }
            });
            let q = linalg::orthonormal_columns(compact.view());
            let mut b = Array2::zeros((p, spec.k));
            for (r, &i) in idx.iter().enumerate() {
                b.row_mut(i).assign(&q.row(r));
            }
            per_s.push(b);
            sig_s.push(idx);
        }
        loadings.push(per_s);
        signals.push(sig_s);
    }
    Ok((loadings, signals))
}

/// Scores and views for every subgroup: returns `(Z[s], X[s][d])`.
pub fn generate_views<R: Rng>(
    spec: &ScenarioSpec,
    loadings: &[Vec<Array2<f64>>],
    rng: &mut R,
) -> (Vec<Array2<f64>>, Vec<Vec<Array2<f64>>>) {
    let score = Normal::new(SCORE_MEAN, SCORE_SD).expect("valid sd");
    let noise = Normal::new(0.0, spec.noise_sd).expect("valid sd");
    let mut zs = Vec::with_capacity(spec.n.len());
    let mut xs = Vec::with_capacity(spec.n.len());
    for (s, &n) in spec.n.iter().enumerate() {
        let z = Array2::from_shape_simple_fn((n, spec.k), || score.sample(rng));
        let views = spec
            .p
            .iter()
            .enumerate()
            .map(|(d, &p)| {
                let e = Array2::from_shape_simple_fn((n, p), || noise.sample(rng));
                z.dot(&loadings[d][s].t()) + e
            })
            .collect();
        zs.push(z);
        xs.push(views);
    }
    (zs, xs)
}

/// Outcome of one subgroup given its unstandardized scores.
pub fn generate_outcome<R: Rng>(spec: &ScenarioSpec, z: &Array2<f64>, rng: &mut R) -> Result<OutcomeData> {
    let n = z.nrows();
    match spec.family {
        Family::MultiClass { .. } => {
            let theta = binary_theta();
            let mut w = z.dot(&theta) + &Array1::from(BINARY_BETA0.to_vec());
            if spec.outcome_noise {
                let normal = Normal::new(0.0, 1.0).expect("valid sd");
                w += &Array2::from_shape_simple_fn((n, 2), || normal.sample(rng));
            }
            // softmax is monotone, so the most probable class is the largest score
            let labels = w.rows().into_iter().map(|r| usize::from(r[1] > r[0])).collect();
            Ok(OutcomeData::Classes(ClassOutcome::new(labels, 2)?))
        }
        Family::Poisson | Family::Zip => {
            let mut zs = z.clone();
            linalg::standardize_columns(&mut zs)?;
            let eta = zs.dot(&Array1::from(COUNT_THETA.to_vec())) + COUNT_BETA0;
            let mut counts: Array1<f64> = eta
                .iter()
                .map(|&e| {
                    let pois = Poisson::new(e.exp()).map_err(|err| HipError::Numerical(format!("poisson mean: {err}")))?;
                    Ok(pois.sample(rng))
                })
                .collect::<Result<_>>()?;
            if spec.family == Family::Zip {
                let keep = Bernoulli::new(1.0 - ZIP_TAU).expect("valid probability");
                counts.mapv_inplace(|y| if keep.sample(rng) { y } else { 0.0 });
            }
            Ok(OutcomeData::Counts(CountOutcome::unit_offsets(counts)))
        }
    }
}

fn binary_theta() -> Array2<f64> {
    Array2::from_shape_fn((2, 2), |(i, j)| BINARY_THETA[i][j])
}

fn assemble<R: Rng>(
    spec: &ScenarioSpec,
    loadings: &[Vec<Array2<f64>>],
    rng: &mut R,
) -> Result<(MultiViewDataset, Vec<Array2<f64>>)> {
    let (zs, xs) = generate_views(spec, loadings, rng);
    let mut subgroups = Vec::with_capacity(spec.n.len());
    for (s, views) in xs.into_iter().enumerate() {
        let outcome = generate_outcome(spec, &zs[s], rng)?;
        subgroups.push(Subgroup { name: format!("group{}", s + 1), views, outcome: Some(outcome) });
    }
    let views = spec.p.iter().enumerate().map(|(d, &p)| ViewInfo::numbered(format!("view{}", d + 1), p)).collect();
    Ok((MultiViewDataset { family: spec.family, views, subgroups }, zs))
}

fn truth(spec: &ScenarioSpec, loadings: Vec<Vec<Array2<f64>>>, signals: Vec<Vec<Vec<usize>>>, z: Vec<Array2<f64>>) -> GroundTruth {
    let (theta, beta0, tau) = match spec.family {
        Family::MultiClass { .. } => (binary_theta(), Array1::from(BINARY_BETA0.to_vec()), None),
        Family::Poisson => (Array2::from_shape_vec((2, 1), COUNT_THETA.to_vec()).unwrap(), Array1::from(vec![COUNT_BETA0]), None),
        Family::Zip => (
            Array2::from_shape_vec((2, 1), COUNT_THETA.to_vec()).unwrap(),
            Array1::from(vec![COUNT_BETA0]),
            Some(ZIP_TAU),
        ),
    };
    GroundTruth { spec: spec.clone(), signals, loadings, z, theta, beta0, tau }
}

/// Training dataset and its generating quantities.
pub fn generate_dataset(spec: &ScenarioSpec) -> Result<(MultiViewDataset, GroundTruth)> {
    let (loadings, signals) = generate_loadings(spec)?;
    let (data, z) = assemble(spec, &loadings, &mut stream(spec.seed, TRAIN_STREAM))?;
    Ok((data, truth(spec, loadings, signals, z)))
}

/// Training and test datasets drawn with the same loadings. The training
/// set equals [`generate_dataset`] for the same spec.
pub fn generate_train_test(spec: &ScenarioSpec) -> Result<(MultiViewDataset, MultiViewDataset, GroundTruth)> {
    let (loadings, signals) = generate_loadings(spec)?;
    let (train, z) = assemble(spec, &loadings, &mut stream(spec.seed, TRAIN_STREAM))?;
    let (test, _) = assemble(spec, &loadings, &mut stream(spec.seed, TEST_STREAM))?;
    Ok((train, test, truth(spec, loadings, signals, z)))
}
