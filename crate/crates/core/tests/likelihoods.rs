mod common;

use common::oracles::{indicator, poisson_nll, rel_err, softmax_nll, zip_nll};
use common::{normal_matrix, random_dataset, random_params, FAMILIES};
use hip::data::CountOutcome;
use hip::losses::{
    association_loss, gradients, linear_predictor, multiclass_loss, penalty_value, poisson_loss, prediction_term,
    total_objective, zip_loss, Block,
};
use hip::{Family, OutcomeData};
use ndarray::{Array1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

fn counts_instance(seed: u64, n: usize) -> (CountOutcome, ndarray::Array2<f64>, ndarray::Array2<f64>, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pois = Poisson::new(2.5).unwrap();
    let y = Array1::from_shape_fn(n, |_| if rng.random::<f64>() < 0.3 { 0.0 } else { pois.sample(&mut rng) });
    let t = Array1::from_shape_fn(n, |_| rng.random_range(0.3..3.0));
    let z = normal_matrix(&mut rng, n, 2, 1.0);
    let theta = normal_matrix(&mut rng, 2, 1, 0.5);
    let beta0 = Array1::from_elem(1, rng.random_range(-1.0..1.5));
    (CountOutcome::new(y, t).unwrap(), z, theta, beta0)
}

#[test]
fn zip_loss_matches_pmf_oracle() {
    for seed in 0..30 {
        let (c, z, theta, beta0) = counts_instance(seed, 12);
        let tau = 0.05 + 0.9 * (seed as f64 / 30.0);
        let eta = linear_predictor(z.view(), theta.view(), beta0.view()).column(0).to_vec();
        let oracle = zip_nll(c.counts().as_slice().unwrap(), c.offsets().as_slice().unwrap(), &eta, tau);
        let got = zip_loss(&c, z.view(), theta.view(), beta0.view(), tau).unwrap();
        assert!(rel_err(got, oracle) < 1e-10, "seed {seed}: {got} vs {oracle}");
    }
}

#[test]
fn multiclass_loss_matches_double_double_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let labels: Vec<usize> = (0..5).map(|_| rng.random_range(0..3)).collect();
        let z = normal_matrix(&mut rng, 5, 2, 2.0);
        let theta = normal_matrix(&mut rng, 2, 3, 2.0);
        let beta0 = normal_matrix(&mut rng, 1, 3, 1.0).row(0).to_owned();
        let y = indicator(&labels, 3);
        let got = multiclass_loss(y.view(), z.view(), theta.view(), beta0.view());
        let oracle = softmax_nll(&labels, z.view(), theta.view(), beta0.view());
        assert!(rel_err(got, oracle) < 1e-10, "{got} vs {oracle}");
    }
}

#[test]
fn poisson_loss_matches_term_by_term_formula() {
    for seed in 0..20 {
        let (c, z, theta, beta0) = counts_instance(seed, 9);
        let eta = linear_predictor(z.view(), theta.view(), beta0.view()).column(0).to_vec();
        let oracle = poisson_nll(c.counts().as_slice().unwrap(), c.offsets().as_slice().unwrap(), &eta);
        let got = poisson_loss(&c, z.view(), theta.view(), beta0.view());
        assert!(rel_err(got, oracle) < 1e-12, "{got} vs {oracle}");
    }
}

#[test]
fn doubling_offset_doubles_the_rate_term() {
    let z = ndarray::Array2::zeros((1, 1));
    let theta = ndarray::Array2::zeros((1, 1));
    let beta0 = Array1::from_elem(1, 0.3);
    let one = CountOutcome::new(Array1::from_elem(1, 0.0), Array1::from_elem(1, 1.0)).unwrap();
    let two = CountOutcome::new(Array1::from_elem(1, 0.0), Array1::from_elem(1, 2.0)).unwrap();
    let a = poisson_loss(&one, z.view(), theta.view(), beta0.view());
    let b = poisson_loss(&two, z.view(), theta.view(), beta0.view());
    assert!((b - 2.0 * a).abs() < 1e-15);
}

#[test]
fn zip_logit_and_mixture_forms_agree_on_zeros() {
    for seed in 0..20 {
        let (c, z, theta, beta0) = counts_instance(seed, 10);
        let zeros = CountOutcome::new(Array1::zeros(10), c.offsets().clone()).unwrap();
        let eta = linear_predictor(z.view(), theta.view(), beta0.view());
        for tau in [1e-3, 0.2, 0.5, 0.9] {
            let mixture: f64 = eta
                .column(0)
                .iter()
                .zip(zeros.offsets())
                .map(|(&e, &t)| -(tau + (1.0 - tau) * (-t * e.exp()).exp()).ln())
                .sum();
            let got = zip_loss(&zeros, z.view(), theta.view(), beta0.view(), tau).unwrap();
            assert!(rel_err(got, mixture) < 1e-10);
        }
    }
}

#[test]
fn zip_gradient_tends_to_poisson_gradient() {
    let data = random_dataset(4, Family::Poisson, 15, &[8, 6]);
    let mut params = random_params(4, &data, Family::Poisson, 2);
    let pois_cfg = common::config(Family::Poisson, 2, 0.5, 0.5, 2);
    let zip_cfg = common::config(Family::Zip, 2, 0.5, 0.5, 2);
    let zip_data = hip::MultiViewDataset { family: Family::Zip, ..data.clone() };
    for block in [Block::Z(0), Block::Z(1), Block::ThetaBeta] {
        params.tau = None;
        let a = gradients(&data, &params, &pois_cfg, block).unwrap();
        params.tau = Some(1e-8);
        let b = gradients(&zip_data, &params, &zip_cfg, block).unwrap();
        let scale = a.iter().map(|v| v.abs()).fold(1.0, f64::max);
        assert!(common::max_abs_diff(&a, &b) / scale < 1e-5, "{block:?}");
    }
}

#[test]
fn losses_ignore_the_order_of_observations() {
    for family in FAMILIES {
        let data = random_dataset(9, family, 15, &[8, 6]);
        let params = random_params(9, &data, family, 2);
        let (before, _) = prediction_term(&data, &params, family).unwrap();
        let perm: Vec<usize> = (0..15).rev().collect();
        let rows = vec![perm.clone(), perm.clone()];
        let shuffled = data.select_rows(&rows).unwrap();
        let mut p2 = params.clone();
        for z in &mut p2.z {
            *z = z.select(Axis(0), &perm);
        }
        let (after, _) = prediction_term(&shuffled, &p2, family).unwrap();
        assert!(rel_err(after, before) < 1e-12, "{}", family.label());
    }
}

#[test]
fn total_objective_is_the_sum_of_independent_terms() {
    for family in FAMILIES {
        let data = random_dataset(21, family, 15, &[8, 6]);
        let params = random_params(21, &data, family, 2);
        let cfg = common::config(family, 2, 0.8, 0.3, 2);
        let got = total_objective(&data, &params, &cfg).unwrap();

        let mut prediction = 0.0;
        for s in 0..2 {
            let eta = linear_predictor(params.z[s].view(), params.theta.view(), params.beta0.view());
            prediction += match data.outcome(s).unwrap() {
                OutcomeData::Classes(c) => softmax_nll(c.labels(), params.z[s].view(), params.theta.view(), params.beta0.view()),
                OutcomeData::Counts(c) => {
                    let (y, t) = (c.counts().as_slice().unwrap(), c.offsets().as_slice().unwrap());
                    let e = eta.column(0).to_vec();
                    match params.tau {
                        Some(tau) => zip_nll(y, t, &e, tau),
                        None => poisson_nll(y, t, &e),
                    }
                }
            };
        }
        let mut association = 0.0;
        for d in 0..2 {
            for s in 0..2 {
                let b = params.loading(d, s);
                let x = data.x(d, s);
                for i in 0..x.nrows() {
                    for j in 0..x.ncols() {
                        let fit: f64 = (0..2).map(|k| params.z[s][[i, k]] * b[[j, k]]).sum();
                        association += (x[[i, j]] - fit).powi(2);
                    }
                }
            }
        }
        let norms = |m: &ndarray::Array2<f64>| m.rows().into_iter().map(|r| r.dot(&r).sqrt()).sum::<f64>();
        let pen_g: f64 = 0.8 * params.g.iter().map(norms).sum::<f64>();
        let pen_xi: f64 = 0.3 * params.xi.iter().flatten().map(norms).sum::<f64>();
        let oracle = prediction + association + pen_g + pen_xi;
        assert!(rel_err(got.total, oracle) < 1e-10, "{}: {} vs {oracle}", family.label(), got.total);
        assert!(rel_err(got.association, association) < 1e-12);
    }
}

#[test]
fn doubling_lambda_g_doubles_only_its_penalty() {
    let data = random_dataset(2, Family::Zip, 15, &[8, 6]);
    let params = random_params(2, &data, Family::Zip, 2);
    let a = total_objective(&data, &params, &common::config(Family::Zip, 2, 0.4, 0.3, 2)).unwrap();
    let b = total_objective(&data, &params, &common::config(Family::Zip, 2, 0.8, 0.3, 2)).unwrap();
    assert!((b.penalty_g - 2.0 * a.penalty_g).abs() < 1e-12);
    assert_eq!((a.prediction, a.association, a.penalty_xi), (b.prediction, b.association, b.penalty_xi));
}

#[test]
fn association_matches_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = normal_matrix(&mut rng, 4, 3, 1.0);
    let z = normal_matrix(&mut rng, 4, 2, 1.0);
    let b = normal_matrix(&mut rng, 3, 2, 1.0);
    let mut naive = 0.0;
    for i in 0..4 {
        for j in 0..3 {
            let r = x[[i, j]] - (0..2).map(|k| z[[i, k]] * b[[j, k]]).sum::<f64>();
            naive += r * r;
        }
    }
    assert!(rel_err(association_loss(x.view(), z.view(), b.view()).unwrap(), naive) < 1e-13);
}

#[test]
fn identical_subgroup_rows_double_the_xi_penalty() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = vec![normal_matrix(&mut rng, 4, 2, 1.0)];
    let xi1 = normal_matrix(&mut rng, 4, 2, 1.0);
    let (_, one) = penalty_value(&g, &[vec![xi1.clone()]], 1.0, 1.0, &[true]);
    let (_, two) = penalty_value(&g, &[vec![xi1.clone(), xi1]], 1.0, 1.0, &[true]);
    assert!((two - 2.0 * one).abs() < 1e-13);
}
