mod common;

use common::normal_matrix;
use hip::linalg::orthonormal_columns;
use hip::predict::{predict_outcome, predict_scores, Predictions};
use hip::Family;
use ndarray::{array, concatenate, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn projection_recovers_exact_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..20 {
        let b = orthonormal_columns(normal_matrix(&mut rng, 14, 2, 1.0).view());
        let (b1, b2) = (b.slice(ndarray::s![..8, ..]).to_owned(), b.slice(ndarray::s![8.., ..]).to_owned());
        let z = normal_matrix(&mut rng, 10, 2, 2.0);
        let (x1, x2) = (z.dot(&b1.t()), z.dot(&b2.t()));
        let (pred, regularized) = predict_scores(&[&x1, &x2], &[b1, b2]).unwrap();
        assert!(!regularized);
        assert!(common::max_abs_diff(&pred, &z) < 1e-8);
    }
}

#[test]
fn duplicated_view_leaves_scores_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let b = normal_matrix(&mut rng, 6, 2, 1.0);
    let x = normal_matrix(&mut rng, 9, 6, 1.0);
    let (one, _) = predict_scores(&[&x], std::slice::from_ref(&b)).unwrap();
    let (two, _) = predict_scores(&[&x, &x], &[b.clone(), b]).unwrap();
    assert!(common::max_abs_diff(&one, &two) < 1e-10);
}

#[test]
fn predictions_follow_each_family() {
    let z = array![[0.5], [-1.0]];
    let theta = array![[2.0]];
    let beta0 = Array1::from_elem(1, 0.1);
    let t = Array1::from(vec![1.0, 3.0]);
    let Predictions::Counts(p) = predict_outcome(&z, &theta, &beta0, None, Family::Poisson, Some(&t)).unwrap() else {
        panic!("counts expected")
    };
    let expected: Vec<f64> = vec![(1.1f64).exp(), 3.0 * (-1.9f64).exp()];
    assert!(p.iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-12));
    let Predictions::Counts(q) = predict_outcome(&z, &theta, &beta0, Some(0.25), Family::Zip, Some(&t)).unwrap() else {
        panic!("counts expected")
    };
    assert!(q.iter().zip(&expected).all(|(a, b)| (a - 0.75 * b).abs() < 1e-12));

    let w_theta = array![[1.0, -1.0, 0.0]];
    let Predictions::Classes(c) =
        predict_outcome(&array![[2.0], [-2.0], [0.0]], &w_theta, &Array1::zeros(3), None, Family::MultiClass { classes: 3 }, None)
            .unwrap()
    else {
        panic!("classes expected")
    };
    // the last row ties all three classes and takes the first
    assert_eq!(c, vec![0, 1, 0]);
}

#[test]
fn concatenated_loadings_match_stacked_views() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let b1 = normal_matrix(&mut rng, 5, 3, 1.0);
    let b2 = normal_matrix(&mut rng, 4, 3, 1.0);
    let x1 = normal_matrix(&mut rng, 7, 5, 1.0);
    let x2 = normal_matrix(&mut rng, 7, 4, 1.0);
    let (split, _) = predict_scores(&[&x1, &x2], &[b1.clone(), b2.clone()]).unwrap();
    let x: Array2<f64> = concatenate(Axis(1), &[x1.view(), x2.view()]).unwrap();
    let b: Array2<f64> = concatenate(Axis(0), &[b1.view(), b2.view()]).unwrap();
    let (joined, _) = predict_scores(&[&x], &[b]).unwrap();
    assert!(common::max_abs_diff(&split, &joined) < 1e-12);
}
