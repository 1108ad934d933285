#![allow(dead_code)]

use hip::data::{ClassOutcome, CountOutcome};
use hip::{Family, FitConfig, HipParams, MultiViewDataset, OutcomeData, Subgroup, ViewInfo};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

pub const FAMILIES: [Family; 3] = [Family::MultiClass { classes: 3 }, Family::Poisson, Family::Zip];

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sd: f64) -> Array2<f64> {
    let dist = Normal::new(0.0, sd).unwrap();
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// Random outcome of the given family whose size does not depend on the model.
pub fn random_outcome(rng: &mut ChaCha8Rng, family: Family, n: usize) -> OutcomeData {
    match family {
        Family::MultiClass { classes } => {
            let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
            for (c, l) in labels.iter_mut().take(classes).enumerate() {
                *l = c;
            }
            OutcomeData::Classes(ClassOutcome::new(labels, classes).unwrap())
        }
        Family::Poisson | Family::Zip => {
            let pois = Poisson::new(3.0).unwrap();
            let counts = Array1::from_shape_fn(n, |_| {
                if family == Family::Zip && rng.random::<f64>() < 0.3 { 0.0 } else { pois.sample(rng) }
            });
            let offsets = Array1::from_shape_fn(n, |_| rng.random_range(0.5..2.0));
            OutcomeData::Counts(CountOutcome::new(counts, offsets).unwrap())
        }
    }
}

/// Dataset with `n` samples in each of two subgroups and views of sizes `p`.
pub fn random_dataset(seed: u64, family: Family, n: usize, p: &[usize]) -> MultiViewDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let views = p.iter().enumerate().map(|(d, &pd)| ViewInfo::numbered(format!("view{}", d + 1), pd)).collect();
    let subgroups = (0..2)
        .map(|s| Subgroup {
            name: format!("group{}", s + 1),
            views: p.iter().map(|&pd| normal_matrix(&mut rng, n, pd, 1.0)).collect(),
            outcome: Some(random_outcome(&mut rng, family, n)),
        })
        .collect();
    MultiViewDataset { family, views, subgroups }
}

/// Entries of magnitude in [0.2, 1] with random signs, so no row sits at the
/// kink of its norm.
fn bounded_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let m = rng.random_range(0.2..1.0);
        if rng.random::<bool>() { m } else { -m }
    })
}

/// Parameters with every entry drawn at random, away from zero rows.
pub fn random_params(seed: u64, data: &MultiViewDataset, family: Family, k: usize) -> HipParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let q = family.outputs();
    let z = (0..data.n_subgroups()).map(|s| normal_matrix(&mut rng, data.n(s), k, 0.5)).collect();
    let g = (0..data.n_views()).map(|d| bounded_matrix(&mut rng, data.p(d), k)).collect();
    let xi = (0..data.n_views())
        .map(|d| (0..data.n_subgroups()).map(|_| bounded_matrix(&mut rng, data.p(d), k)).collect())
        .collect();
    HipParams {
        z,
        g,
        xi,
        theta: normal_matrix(&mut rng, k, q, 0.4),
        beta0: normal_matrix(&mut rng, 1, q, 0.4).row(0).to_owned(),
        tau: (family == Family::Zip).then(|| rng.random_range(0.1..0.5)),
    }
}

pub fn config(family: Family, k: usize, lambda_g: f64, lambda_xi: f64, views: usize) -> FitConfig {
    FitConfig::new(k, lambda_g, lambda_xi, views, family)
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub mod checks;
pub mod oracles;
