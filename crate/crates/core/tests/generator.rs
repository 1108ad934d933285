use hip::io::write_dataset;
use hip::simulate::{generate_dataset, generate_train_test, Dimension, Overlap, ScenarioSpec};
use hip::Family;
use ndarray::Array2;

fn families() -> [Family; 3] {
    [Family::MultiClass { classes: 2 }, Family::Poisson, Family::Zip]
}

#[test]
fn loadings_are_orthonormal_with_zero_noise_rows() {
    for overlap in [Overlap::Full, Overlap::Partial] {
        let spec = ScenarioSpec::standard(Family::Zip, overlap, Dimension::Low, 7);
        let (_, truth) = generate_dataset(&spec).unwrap();
        for d in 0..2 {
            for s in 0..2 {
                let b = &truth.loadings[d][s];
                let gram = b.t().dot(b);
                let err = (&gram - &Array2::<f64>::eye(2)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(err < 1e-10);
                for j in 0..b.nrows() {
                    let signal = truth.signals[d][s].contains(&j);
                    assert_eq!(b.row(j).iter().any(|&v| v != 0.0), signal, "row {j}");
                }
                assert_eq!(truth.signals[d][s].len(), 50);
            }
        }
    }
}

#[test]
fn scenario_shapes_are_exact() {
    for dim in [Dimension::Low, Dimension::High] {
        for family in families() {
            let spec = ScenarioSpec::standard(family, Overlap::Partial, dim, 1);
            let (data, _) = generate_dataset(&spec).unwrap();
            let p = match dim {
                Dimension::Low => [300, 350],
                Dimension::High => [2000, 3000],
            };
            for (s, n) in [250, 260].into_iter().enumerate() {
                for (d, &pd) in p.iter().enumerate() {
                    assert_eq!(data.x(d, s).dim(), (n, pd));
                }
                assert_eq!(data.outcome(s).unwrap().len(), n);
            }
        }
    }
}

#[test]
fn partial_overlap_shares_exactly_the_common_signals() {
    let spec = ScenarioSpec::standard(Family::Poisson, Overlap::Partial, Dimension::Low, 2);
    let (_, truth) = generate_dataset(&spec).unwrap();
    for d in 0..2 {
        let shared = truth.signals[d][0].iter().filter(|j| truth.signals[d][1].contains(j)).count();
        assert_eq!(shared, 25);
    }
}

#[test]
fn same_seed_writes_identical_bytes() {
    for family in families() {
        let spec = ScenarioSpec::standard(family, Overlap::Full, Dimension::Low, 11);
        let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
        let written: Vec<Vec<Vec<u8>>> = dirs
            .iter()
            .map(|dir| {
                let (data, _) = generate_dataset(&spec).unwrap();
                let files = write_dataset(dir.path(), "dataset.json", &data).unwrap();
                files.iter().map(|f| std::fs::read(f).unwrap()).collect()
            })
            .collect();
        assert_eq!(written[0], written[1]);
        let other = generate_dataset(&ScenarioSpec { seed: 12, ..spec.clone() }).unwrap().0;
        assert_ne!(other, generate_dataset(&spec).unwrap().0);
    }
}

#[test]
fn test_set_shares_loadings_but_not_samples() {
    let spec = ScenarioSpec::standard(Family::Zip, Overlap::Full, Dimension::Low, 3);
    let (train, test, truth) = generate_train_test(&spec).unwrap();
    let (alone, truth2) = generate_dataset(&spec).unwrap();
    assert_eq!(train, alone);
    assert_eq!(truth, truth2);
    assert_ne!(train.x(0, 0), test.x(0, 0));
}

#[test]
fn zip_zero_share_exceeds_the_mixing_weight() {
    let spec = ScenarioSpec::standard(Family::Zip, Overlap::Full, Dimension::Low, 4);
    let (data, _) = generate_dataset(&spec).unwrap();
    let counts = hip::predict::pooled_counts(&data).unwrap();
    let zeros = counts.counts().iter().filter(|&&y| y == 0.0).count() as f64 / counts.len() as f64;
    assert!(zeros > 0.2 && zeros < 0.4, "{zeros}");
}
