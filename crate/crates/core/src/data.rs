//! Observed data, model parameters, validation, standardization and
//! parameter initialization.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::config::{Family, FitConfig};
use crate::error::{HipError, Result};
use crate::linalg;

/// Ridge added to `ZᵀZ` at initialization when it is badly conditioned.
pub const INIT_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewInfo {
    pub name: String,
    pub variables: Vec<String>,
}

impl ViewInfo {
    pub fn new(name: impl Into<String>, variables: Vec<String>) -> Self {
        Self { name: name.into(), variables }
    }

    /// View with generated variable names `{name}_v{j}`.
    pub fn numbered(name: impl Into<String>, p: usize) -> Self {
        let name = name.into();
        let variables = (0..p).map(|j| format!("{name}_v{j}")).collect();
        Self { name, variables }
    }

    pub fn p(&self) -> usize {
        self.variables.len()
    }
}

/// Class labels together with their one-hot indicator matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassOutcome {
    labels: Vec<usize>,
    classes: usize,
    indicator: Array2<f64>,
}

impl ClassOutcome {
    pub fn new(labels: Vec<usize>, classes: usize) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(HipError::Data(format!(
                "class label {bad} outside 0..{classes}"
            )));
        }
        let mut indicator = Array2::zeros((labels.len(), classes));
        for (i, &l) in labels.iter().enumerate() {
            indicator[[i, l]] = 1.0;
        }
        Ok(Self { labels, classes, indicator })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn indicator(&self) -> ArrayView2<'_, f64> {
        self.indicator.view()
    }
}

/// Counts with exposure offsets. `log(y!)` is cached because it never
/// depends on the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CountOutcome {
    counts: Array1<f64>,
    offsets: Array1<f64>,
    log_factorial: Array1<f64>,
}

impl CountOutcome {
    pub fn new(counts: Array1<f64>, offsets: Array1<f64>) -> Result<Self> {
        if counts.len() != offsets.len() {
            return Err(HipError::Shape(format!(
                "{} counts but {} offsets",
                counts.len(),
                offsets.len()
            )));
        }
        let log_factorial = counts.mapv(|y| if y >= 0.0 { ln_gamma(y + 1.0) } else { f64::NAN });
        Ok(Self { counts, offsets, log_factorial })
    }

    /// Counts with unit offsets.
    pub fn unit_offsets(counts: Array1<f64>) -> Self {
        let n = counts.len();
        Self::new(counts, Array1::ones(n)).expect("lengths agree")
    }

    pub fn counts(&self) -> &Array1<f64> {
        &self.counts
    }

    pub fn offsets(&self) -> &Array1<f64> {
        &self.offsets
    }

    pub fn log_factorial(&self) -> &Array1<f64> {
        &self.log_factorial
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    fn select_rows(&self, rows: &[usize]) -> Self {
        let counts = rows.iter().map(|&i| self.counts[i]).collect();
        let offsets = rows.iter().map(|&i| self.offsets[i]).collect();
        Self::new(counts, offsets).expect("lengths agree")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeData {
    Classes(ClassOutcome),
    Counts(CountOutcome),
}

impl OutcomeData {
    pub fn len(&self) -> usize {
        match self {
            OutcomeData::Classes(c) => c.labels.len(),
            OutcomeData::Counts(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_counts(&self) -> Option<&CountOutcome> {
        match self {
            OutcomeData::Counts(c) => Some(c),
            OutcomeData::Classes(_) => None,
        }
    }

    pub fn as_classes(&self) -> Option<&ClassOutcome> {
        match self {
            OutcomeData::Classes(c) => Some(c),
            OutcomeData::Counts(_) => None,
        }
    }

    /// Whether this outcome can be modelled by `family`.
    pub fn supports(&self, family: Family) -> bool {
        match (self, family) {
            (OutcomeData::Classes(c), Family::MultiClass { classes }) => c.classes == classes,
            (OutcomeData::Counts(_), Family::Poisson | Family::Zip) => true,
            _ => false,
        }
    }

    fn select_rows(&self, rows: &[usize]) -> Self {
        match self {
            OutcomeData::Classes(c) => OutcomeData::Classes(
                ClassOutcome::new(rows.iter().map(|&i| c.labels[i]).collect(), c.classes)
                    .expect("labels already valid"),
            ),
            OutcomeData::Counts(c) => OutcomeData::Counts(c.select_rows(rows)),
        }
    }
}

/// One subgroup: a covariate matrix per view plus the outcome, if observed.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgroup {
    pub name: String,
    pub views: Vec<Array2<f64>>,
    pub outcome: Option<OutcomeData>,
}

impl Subgroup {
    pub fn n(&self) -> usize {
        self.views.first().map(|x| x.nrows()).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    /// Declared outcome family of the data.
    pub family: Family,
    pub views: Vec<ViewInfo>,
    pub subgroups: Vec<Subgroup>,
}

impl MultiViewDataset {
    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn n_subgroups(&self) -> usize {
        self.subgroups.len()
    }

    /// Covariates of view `d` in subgroup `s`.
    pub fn x(&self, d: usize, s: usize) -> &Array2<f64> {
        &self.subgroups[s].views[d]
    }

    pub fn n(&self, s: usize) -> usize {
        self.subgroups[s].n()
    }

    pub fn p(&self, d: usize) -> usize {
        self.views[d].p()
    }

    pub fn total_n(&self) -> usize {
        self.subgroups.iter().map(|s| s.n()).sum()
    }

    /// Smallest `min(n_s, p_d)` over all blocks; the largest admissible K.
    pub fn max_components(&self) -> usize {
        let mut k = usize::MAX;
        for s in 0..self.n_subgroups() {
            for d in 0..self.n_views() {
                k = k.min(self.n(s).min(self.p(d)));
            }
        }
        k
    }

    pub fn outcome(&self, s: usize) -> Result<&OutcomeData> {
        self.subgroups[s]
            .outcome
            .as_ref()
            .ok_or_else(|| HipError::Data(format!("subgroup {} has no outcome", self.subgroups[s].name)))
    }

    pub fn has_outcomes(&self) -> bool {
        self.subgroups.iter().all(|s| s.outcome.is_some())
    }

    /// Keeps only the listed columns of each view, in the given order.
    pub fn select_columns(&self, columns: &[Vec<usize>]) -> Result<Self> {
        if columns.len() != self.n_views() {
            return Err(HipError::Shape(format!(
                "column selection has {} views, dataset has {}",
                columns.len(),
                self.n_views()
            )));
        }
        for (d, cols) in columns.iter().enumerate() {
            if let Some(&bad) = cols.iter().find(|&&j| j >= self.p(d)) {
                return Err(HipError::Shape(format!(
                    "column {bad} out of range for view {} with {} variables",
                    self.views[d].name,
                    self.p(d)
                )));
            }
        }
        let views = self
            .views
            .iter()
            .zip(columns)
            .map(|(v, cols)| ViewInfo::new(v.name.clone(), cols.iter().map(|&j| v.variables[j].clone()).collect()))
            .collect();
        let subgroups = self
            .subgroups
            .iter()
            .map(|sg| Subgroup {
                name: sg.name.clone(),
                views: sg.views.iter().zip(columns).map(|(x, cols)| x.select(Axis(1), cols)).collect(),
                outcome: sg.outcome.clone(),
            })
            .collect();
        Ok(Self { family: self.family, views, subgroups })
    }

    /// Keeps the listed rows of subgroup `s` for every `s`.
    pub fn select_rows(&self, rows: &[Vec<usize>]) -> Result<Self> {
        if rows.len() != self.n_subgroups() {
            return Err(HipError::Shape("row selection must list every subgroup".into()));
        }
        let subgroups = self
            .subgroups
            .iter()
            .zip(rows)
            .map(|(sg, r)| Subgroup {
                name: sg.name.clone(),
                views: sg.views.iter().map(|x| x.select(Axis(0), r)).collect(),
                outcome: sg.outcome.as_ref().map(|o| o.select_rows(r)),
            })
            .collect();
        Ok(Self { family: self.family, views: self.views.clone(), subgroups })
    }
}

/// A single data problem found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoViews,
    NoSubgroups,
    MissingBlock { subgroup: String, expected: usize, found: usize },
    RowCount { view: String, subgroup: String, expected: usize, found: usize },
    ColumnCount { view: String, subgroup: String, expected: usize, found: usize },
    NonFinite { view: String, subgroup: String, count: usize },
    OutcomeLength { subgroup: String, expected: usize, found: usize },
    FamilyMismatch { subgroup: String },
    EmptyClass { subgroup: String, class: usize },
    InvalidCount { subgroup: String, index: usize, value: f64 },
    NonPositiveOffset { subgroup: String, index: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoViews => write!(f, "dataset has no views"),
            Violation::NoSubgroups => write!(f, "dataset has no subgroups"),
            Violation::MissingBlock { subgroup, expected, found } => {
                write!(f, "subgroup {subgroup}: {found} view matrices, expected {expected}")
            }
            Violation::RowCount { view, subgroup, expected, found } => write!(
                f,
                "shape: view {view}, subgroup {subgroup} has {found} rows, expected {expected}"
            ),
            Violation::ColumnCount { view, subgroup, expected, found } => write!(
                f,
                "shape: view {view}, subgroup {subgroup} has {found} columns, expected {expected}"
            ),
            Violation::NonFinite { view, subgroup, count } => {
                write!(f, "view {view}, subgroup {subgroup}: {count} non-finite entries")
            }
            Violation::OutcomeLength { subgroup, expected, found } => {
                write!(f, "subgroup {subgroup}: outcome has {found} rows, expected {expected}")
            }
            Violation::FamilyMismatch { subgroup } => {
                write!(f, "subgroup {subgroup}: outcome does not match the declared family")
            }
            Violation::EmptyClass { subgroup, class } => {
                write!(f, "subgroup {subgroup}: class {class} has no observations")
            }
            Violation::InvalidCount { subgroup, index, value } => {
                write!(f, "subgroup {subgroup}: count {value} at row {index} is not a non-negative integer")
            }
            Violation::NonPositiveOffset { subgroup, index, value } => {
                write!(f, "subgroup {subgroup}: offset {value} at row {index} is not positive")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Violations other than missing classes, which only matter for training.
    pub fn blocking_for_prediction(&self) -> Vec<&Violation> {
        self.violations
            .iter()
            .filter(|v| !matches!(v, Violation::EmptyClass { .. }))
            .collect()
    }

    pub fn into_result(self) -> Result<()> {
        if self.passed() {
            Ok(())
        } else {
            let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
            Err(HipError::Data(msgs.join("; ")))
        }
    }
}

/// Checks every structural and value invariant of a dataset. Missing
/// outcomes are allowed (test data); the report never mutates the input.
pub fn validate_dataset(data: &MultiViewDataset) -> ValidationReport {
    let mut violations = Vec::new();
    if data.views.is_empty() {
        violations.push(Violation::NoViews);
    }
    if data.subgroups.is_empty() {
        violations.push(Violation::NoSubgroups);
    }
    for sg in &data.subgroups {
        if sg.views.len() != data.views.len() {
            violations.push(Violation::MissingBlock {
                subgroup: sg.name.clone(),
                expected: data.views.len(),
                found: sg.views.len(),
            });
            continue;
        }
        let n = sg.n();
        for (view, x) in data.views.iter().zip(&sg.views) {
            if x.nrows() != n {
                violations.push(Violation::RowCount {
                    view: view.name.clone(),
                    subgroup: sg.name.clone(),
                    expected: n,
                    found: x.nrows(),
                });
            }
            if x.ncols() != view.p() {
                violations.push(Violation::ColumnCount {
                    view: view.name.clone(),
                    subgroup: sg.name.clone(),
                    expected: view.p(),
                    found: x.ncols(),
                });
            }
            let bad = x.iter().filter(|v| !v.is_finite()).count();
            if bad > 0 {
                violations.push(Violation::NonFinite {
                    view: view.name.clone(),
                    subgroup: sg.name.clone(),
                    count: bad,
                });
            }
        }
        let Some(outcome) = &sg.outcome else { continue };
        if outcome.len() != n {
            violations.push(Violation::OutcomeLength {
                subgroup: sg.name.clone(),
                expected: n,
                found: outcome.len(),
            });
        }
        if !outcome.supports(data.family) {
            violations.push(Violation::FamilyMismatch { subgroup: sg.name.clone() });
        }
        match outcome {
            OutcomeData::Classes(c) => {
                let mut seen = vec![false; c.classes()];
                for &l in c.labels() {
                    seen[l] = true;
                }
                for (class, present) in seen.into_iter().enumerate() {
                    if !present {
                        violations.push(Violation::EmptyClass { subgroup: sg.name.clone(), class });
                    }
                }
            }
            OutcomeData::Counts(c) => {
                for (i, &y) in c.counts().iter().enumerate() {
                    if !(y >= 0.0 && y.fract() == 0.0 && y.is_finite()) {
                        violations.push(Violation::InvalidCount { subgroup: sg.name.clone(), index: i, value: y });
                    }
                }
                for (i, &t) in c.offsets().iter().enumerate() {
                    if !(t > 0.0 && t.is_finite()) {
                        violations.push(Violation::NonPositiveOffset { subgroup: sg.name.clone(), index: i, value: t });
                    }
                }
            }
        }
    }
    ValidationReport { violations }
}

/// Column location and scale of one (view, subgroup) block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Columns with zero variance; they are mapped to zero.
    pub constant: Vec<bool>,
}

impl ColumnScaling {
    fn identity(p: usize) -> Self {
        Self { mean: vec![0.0; p], scale: vec![1.0; p], constant: vec![false; p] }
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(HipError::Shape(format!(
                "standardization expects {} columns, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            if self.constant[j] {
                col.fill(0.0);
            } else {
                let (m, s) = (self.mean[j], self.scale[j]);
                col.mapv_inplace(|v| (v - m) / s);
            }
        }
        Ok(out)
    }

    pub fn select(&self, cols: &[usize]) -> Self {
        Self {
            mean: cols.iter().map(|&j| self.mean[j]).collect(),
            scale: cols.iter().map(|&j| self.scale[j]).collect(),
            constant: cols.iter().map(|&j| self.constant[j]).collect(),
        }
    }
}

/// Per-(subgroup, view) column scalings learned on training data,
/// indexed `[s][d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub blocks: Vec<Vec<ColumnScaling>>,
}

impl StandardizationParams {
    pub fn identity(data: &MultiViewDataset) -> Self {
        let blocks = (0..data.n_subgroups())
            .map(|_| (0..data.n_views()).map(|d| ColumnScaling::identity(data.p(d))).collect())
            .collect();
        Self { blocks }
    }

    /// Transforms a dataset with these (training) scalings.
    pub fn apply(&self, data: &MultiViewDataset) -> Result<MultiViewDataset> {
        if self.blocks.len() != data.n_subgroups() {
            return Err(HipError::Shape(format!(
                "standardization covers {} subgroups, data has {}",
                self.blocks.len(),
                data.n_subgroups()
            )));
        }
        let mut out = data.clone();
        for (s, sg) in out.subgroups.iter_mut().enumerate() {
            if self.blocks[s].len() != sg.views.len() {
                return Err(HipError::Shape("standardization view count mismatch".into()));
            }
            for (d, x) in sg.views.iter_mut().enumerate() {
                *x = self.blocks[s][d].apply(x.view())?;
            }
        }
        Ok(out)
    }

    pub fn select_columns(&self, columns: &[Vec<usize>]) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|row| row.iter().zip(columns).map(|(b, cols)| b.select(cols)).collect())
            .collect();
        Self { blocks }
    }
}

/// Relative spread below which a column counts as constant.
const CONSTANT_TOL: f64 = 1e-12;

/// Centers and scales every column of every (view, subgroup) block to mean
/// zero and unit sample variance using that subgroup's own statistics.
/// Constant columns become zero and are flagged.
pub fn standardize_subgroup(data: &MultiViewDataset) -> (MultiViewDataset, StandardizationParams) {
    let blocks: Vec<Vec<ColumnScaling>> = data
        .subgroups
        .iter()
        .map(|sg| {
            sg.views
                .iter()
                .map(|x| {
                    let (mean, sd) = linalg::column_moments(x.view());
                    let constant: Vec<bool> = mean
                        .iter()
                        .zip(sd.iter())
                        .map(|(m, s)| !(*s > CONSTANT_TOL * (1.0 + m.abs())))
                        .collect();
                    let scale = sd.iter().zip(&constant).map(|(&s, &c)| if c { 1.0 } else { s }).collect();
                    ColumnScaling { mean: mean.to_vec(), scale, constant }
                })
                .collect()
        })
        .collect();
    let params = StandardizationParams { blocks };
    let out = params.apply(data).expect("params derived from the same data");
    (out, params)
}

/// Estimated model state. Loadings are never stored: `B = G ⊙ Ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HipParams {
    /// Scores per subgroup, `n_s × K`.
    pub z: Vec<Array2<f64>>,
    /// Common loadings per view, `p_d × K`.
    pub g: Vec<Array2<f64>>,
    /// Subgroup-specific loadings indexed `[d][s]`, `p_d × K`.
    pub xi: Vec<Vec<Array2<f64>>>,
    /// Outcome coefficients, `K × q`.
    pub theta: Array2<f64>,
    pub beta0: Array1<f64>,
    /// Zero-state probability, ZIP only.
    pub tau: Option<f64>,
}

impl HipParams {
    pub fn k(&self) -> usize {
        self.theta.nrows()
    }

    /// `B^{d,s} = G^d ⊙ Ξ^{d,s}`.
    pub fn loading(&self, d: usize, s: usize) -> Array2<f64> {
        &self.g[d] * &self.xi[d][s]
    }
}

/// Draws scores from U(0.9, 1.1) and initializes every other block.
pub fn initialize_params(data: &MultiViewDataset, config: &FitConfig) -> Result<HipParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let unif = Uniform::new(0.9, 1.1).expect("valid bounds");
    let z = (0..data.n_subgroups())
        .map(|s| Array2::from_shape_simple_fn((data.n(s), config.k), || unif.sample(&mut rng)))
        .collect();
    initialize_params_with_scores(data, config, z)
}

/// Initializes from given starting scores: `G`, `Θ`, `β₀` are ones, each
/// `Ξ^{d,s}` is the least-squares fit of `X^{d,s}` on `Z^s`, and for ZIP
/// `τ` comes from the excess-zeros formula.
pub fn initialize_params_with_scores(
    data: &MultiViewDataset,
    config: &FitConfig,
    z: Vec<Array2<f64>>,
) -> Result<HipParams> {
    let k = config.k;
    if k > data.max_components() {
        return Err(HipError::Config(format!(
            "K = {k} exceeds the smallest block dimension {}",
            data.max_components()
        )));
    }
    if z.len() != data.n_subgroups() || z.iter().enumerate().any(|(s, zs)| zs.dim() != (data.n(s), k)) {
        return Err(HipError::Shape("starting scores do not match the dataset".into()));
    }
    let q = config.family.outputs();
    let g = (0..data.n_views()).map(|d| Array2::ones((data.p(d), k))).collect();
    let mut xi = Vec::with_capacity(data.n_views());
    for d in 0..data.n_views() {
        let mut per_s = Vec::with_capacity(data.n_subgroups());
        for (s, zs) in z.iter().enumerate() {
            let ztz = zs.t().dot(zs);
            let ztx = zs.t().dot(data.x(d, s));
            let (sol, _) = linalg::solve_gram(ztz.view(), ztx.view(), INIT_RIDGE)?;
            per_s.push(sol.reversed_axes());
        }
        xi.push(per_s);
    }
    let mut params = HipParams {
        z,
        g,
        xi,
        theta: Array2::ones((k, q)),
        beta0: Array1::ones(q),
        tau: None,
    };
    if config.family == Family::Zip {
        params.tau = Some(crate::optim::update_tau(data, &params)?);
    }
    Ok(params)
}
