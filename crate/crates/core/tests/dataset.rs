use imapce::data::{gen_synthetic, SyntheticSpec};
use imapce::{center, resolve_prior, Centering, Dataset, EmbeddingSet, Hyperparams, PriorSpec, ProjectionMatrix};
use nalgebra::{dmatrix, DMatrix};
use proptest::prelude::*;

#[test]
fn center_examples() {
    let (c, fit) = center(&dmatrix![1.0; 3.0]);
    assert_eq!(c, dmatrix![-1.0; 1.0]);
    assert_eq!(fit.means[0], 2.0);
    let (c, _) = center(&dmatrix![5.0, 1.0; 5.0, 2.0; 5.0, 6.0]);
    assert!(c.column(0).iter().all(|&v| v == 0.0));
    // Centering constants carry over to other matrices.
    let shifted = fit.apply(&dmatrix![2.0; 4.0]).unwrap();
    assert_eq!(shifted, dmatrix![0.0; 2.0]);
}

#[test]
fn dataset_rejects_invalid_values() {
    assert!(Dataset::new(DMatrix::<f64>::zeros(0, 3)).is_err());
    assert!(Dataset::new(dmatrix![1.0, f64::INFINITY]).is_err());
    let ds = Dataset::new(dmatrix![1.0, 2.0; 3.0, 4.0]).unwrap();
    assert!(ds.clone().with_labels("y", vec![1]).is_err());
    assert!(ds.with_column_names(vec!["a".into()]).is_err());
}

#[test]
fn subset_prior_example() {
    let ds = Dataset::new(DMatrix::from_fn(5, 2, |i, j| (i * 2 + j) as f64)).unwrap();
    let r = resolve_prior(&ds, &PriorSpec::Subset(vec![0, 1])).unwrap();
    assert_eq!(r.z_rows, vec![2, 3, 4]);
    assert_eq!(r.y.unwrap(), ds.values().rows(0, 2).into_owned());
}

#[test]
fn none_prior_forces_alpha_zero() {
    let ds = Dataset::new(DMatrix::from_fn(5, 3, |i, j| (i + j) as f64)).unwrap();
    let r = resolve_prior(&ds, &PriorSpec::None).unwrap();
    assert!(r.y.is_none());
    assert_eq!(r.z_rows, vec![0, 1, 2, 3, 4]);
    let hp = Hyperparams::<f64> {
        alpha: 1.0,
        ..Hyperparams::default()
    };
    assert_eq!(hp.effective_alpha(false), 0.0);
    assert_eq!(hp.effective_alpha(true), 1.0);
}

#[test]
fn attribute_prior_on_synthetic_keeps_first_four_columns() {
    let ds = gen_synthetic::<f64>(&SyntheticSpec::default());
    let r = resolve_prior(&ds, &PriorSpec::Attributes(vec![0, 1, 2, 3])).unwrap();
    let y = r.y.unwrap();
    assert_eq!(y.shape(), (1500, 10));
    assert_eq!(y.columns(0, 4), ds.values().columns(0, 4));
    assert!(y.columns(4, 6).iter().all(|&v| v == 0.0));
    assert_eq!(r.z_rows.len(), 1500);
}

#[test]
fn prior_validation() {
    let ds = Dataset::new(DMatrix::<f64>::zeros(4, 3)).unwrap();
    assert!(PriorSpec::Attributes(vec![]).validate(&ds).is_err());
    assert!(PriorSpec::Attributes(vec![3]).validate(&ds).is_err());
    assert!(PriorSpec::Attributes(vec![1, 1]).validate(&ds).is_err());
    assert!(PriorSpec::<f64>::Subset(vec![4]).validate(&ds).is_err());
    assert!(PriorSpec::<f64>::Subset(vec![0, 0]).validate(&ds).is_err());
    assert!(PriorSpec::Samples(DMatrix::<f64>::zeros(2, 2)).validate(&ds).is_err());
    assert!(PriorSpec::Samples(DMatrix::<f64>::zeros(2, 3)).validate(&ds).is_ok());
}

#[test]
fn hyperparams_validation() {
    let hp = Hyperparams::<f64>::default();
    assert!(hp.validate(3).is_ok());
    assert!(hp.validate(2).is_err());
    assert!(Hyperparams::<f64> {
        min_cluster_size: 0,
        ..hp.clone()
    }
    .validate(5)
    .is_err());
    assert!(Hyperparams::<f64> {
        alpha: -1.0,
        ..hp.clone()
    }
    .validate(5)
    .is_err());
    assert!(Hyperparams::<f64> { restarts: 0, ..hp }.validate(5).is_err());
}

#[test]
fn projection_and_embedding_invariants() {
    assert!(ProjectionMatrix::new(dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 1e-3]).is_err());
    let v = ProjectionMatrix::new(dmatrix![1.0; 0.0; 0.0]).unwrap();
    let q = v.project(&dmatrix![1.0, 2.0, 3.0; 4.0, 5.0, 6.0]).unwrap();
    assert_eq!(q, dmatrix![1.0; 4.0]);
    assert!(EmbeddingSet::new(q.clone(), vec![0]).is_err());
    assert!(EmbeddingSet::new(dmatrix![f64::NAN], vec![0]).is_err());
    assert_eq!(EmbeddingSet::new(q, vec![3, 9]).unwrap().source_rows(), &[3, 9]);
}

proptest! {
    #[test]
    fn center_is_idempotent(rows in 1usize..20, cols in 1usize..6, seed in any::<u64>()) {
        let x = imapce::data::gaussian_matrix::<f64>(rows, cols, seed) * 100.0;
        let (once, _) = center(&x);
        let (twice, _) = center(&once);
        prop_assert!((&once - &twice).amax() < 1e-12);
        let means = Centering::fit(&once).means;
        prop_assert!(means.amax() < 1e-12);
    }

    #[test]
    fn subset_prior_rows_disjoint_from_unexplored(n in 2usize..40, mask in any::<u64>()) {
        let rows: Vec<usize> = (0..n).filter(|i| mask >> (i % 64) & 1 == 1).collect();
        prop_assume!(!rows.is_empty() && rows.len() < n);
        let ds = Dataset::new(DMatrix::from_fn(n, 2, |i, j| (i * 3 + j) as f64)).unwrap();
        let r = resolve_prior(&ds, &PriorSpec::Subset(rows.clone())).unwrap();
        prop_assert!(r.z_rows.iter().all(|z| !rows.contains(z)));
        prop_assert_eq!(r.z_rows.len() + rows.len(), n);
    }
}
