use nalgebra::DMatrix;

use crate::dataset::ProjectionMatrix;
use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::linalg::{principal_cosines, sym_eigen_desc};
use crate::scalar::Scalar;

/// Contrast matrix `XᵀX/n − α·YᵀY/m`.
pub fn cpca_contrast<T: Scalar>(x: &DMatrix<T>, y: Option<&DMatrix<T>>, alpha: T) -> Result<DMatrix<T>> {
    if x.nrows() == 0 {
        return Err(Error::InvalidDataset("target data is empty".into()));
    }
    let mut c = (x.transpose() * x) / T::from_count(x.nrows());
    if let Some(y) = y.filter(|y| y.nrows() > 0) {
        if y.ncols() != x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "background has {} columns, target has {}",
                y.ncols(),
                x.ncols()
            )));
        }
        c -= (y.transpose() * y) * (alpha / T::from_count(y.nrows()));
    }
    Ok(c)
}

/// Top-`k` eigenvectors (descending eigenvalue) of the contrast matrix.
///
/// Eigenvectors are sign-normalised so the largest-magnitude entry is positive.
pub fn cpca_project<T: Scalar>(x: &DMatrix<T>, y: Option<&DMatrix<T>>, alpha: T, k: usize) -> Result<ProjectionMatrix<T>> {
    if k == 0 || k > x.ncols() {
        return Err(Error::InvalidParameter(format!("need 0 < k <= d, got k={k}, d={}", x.ncols())));
    }
    let c = cpca_contrast(x, y, alpha)?;
    let (_, vecs) = sym_eigen_desc(&c);
    ProjectionMatrix::new(vecs.columns(0, k).into_owned())
}

/// `‖X − XVVᵀ‖²_F` for an orthonormal `V`.
pub fn reconstruction_error<T: Scalar>(x: &DMatrix<T>, v: &ProjectionMatrix<T>) -> Result<T> {
    let p = v.project(x)?;
    Ok(x.norm_squared() - p.norm_squared())
}

/// `0` followed by 39 log-spaced values in `[1e-1, 1e3]`.
pub fn default_alphas<T: Scalar>() -> Vec<T> {
    let mut a = vec![T::zero()];
    a.extend((0..39).map(|i| T::lit(10f64.powf(-1.0 + 4.0 * i as f64 / 38.0))));
    a
}

/// Subspace affinity: product of cosines of principal angles.
pub fn subspace_affinity<T: Scalar>(a: &ProjectionMatrix<T>, b: &ProjectionMatrix<T>) -> T {
    principal_cosines(a.matrix(), b.matrix())
        .iter()
        .fold(T::one(), |acc, &c| acc * c)
}

/// Normalised spectral clustering of a symmetric non-negative affinity matrix.
pub fn spectral_clustering<T: Scalar>(affinity: &DMatrix<T>, n_clusters: usize, seed: u64) -> Result<Vec<usize>> {
    let n = affinity.nrows();
    if n == 0 || affinity.ncols() != n {
        return Err(Error::InvalidParameter("affinity must be a non-empty square matrix".into()));
    }
    if n_clusters == 0 || n_clusters > n {
        return Err(Error::InvalidParameter(format!("cannot form {n_clusters} clusters from {n} items")));
    }
    if n_clusters == 1 {
        return Ok(vec![0; n]);
    }
    let deg: Vec<T> = affinity.row_iter().map(|r| r.sum()).collect();
    let inv_sqrt: Vec<T> = deg
        .iter()
        .map(|&d| if d > T::zero() { T::one() / d.sqrt() } else { T::zero() })
        .collect();
    let norm = DMatrix::from_fn(n, n, |i, j| affinity[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let (_, vecs) = sym_eigen_desc(&norm);
    let mut emb = vecs.columns(0, n_clusters).into_owned();
    for mut row in emb.row_iter_mut() {
        let r = row.norm();
        if r > T::zero() {
            row /= r;
        }
    }
    Ok(kmeans(&emb, n_clusters, 10, seed).labels)
}

/// Result of [`cpca_alpha_select`].
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSelection<T: Scalar> {
    pub alpha: T,
    pub index: usize,
    pub projection: ProjectionMatrix<T>,
    pub cluster_labels: Vec<usize>,
}

/// Computes the cPCA subspace for every alpha, groups them by spectral
/// clustering on the subspace affinity and returns the medoid of the largest
/// group.
///
/// Ties go to the lowest index: among equally large groups, the one that
/// contains the smallest alpha index wins; within a group, the smallest index
/// with maximal summed affinity is the medoid.
pub fn cpca_alpha_select<T: Scalar>(
    x: &DMatrix<T>,
    y: Option<&DMatrix<T>>,
    alphas: &[T],
    n_spectral_clusters: usize,
    k: usize,
) -> Result<AlphaSelection<T>> {
    if alphas.is_empty() {
        return Err(Error::InvalidParameter("alpha list is empty".into()));
    }
    let vs = alphas
        .iter()
        .map(|&a| cpca_project(x, y, a, k))
        .collect::<Result<Vec<_>>>()?;
    let n = vs.len();
    let aff = DMatrix::from_fn(n, n, |i, j| subspace_affinity(&vs[i], &vs[j]).abs());
    let labels = spectral_clustering(&aff, n_spectral_clusters.min(n), 0)?;

    let n_labels = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_labels];
    for &l in &labels {
        sizes[l] += 1;
    }
    let largest = *sizes.iter().max().expect("non-empty");
    let group = labels
        .iter()
        .copied()
        .find(|&l| sizes[l] == largest)
        .expect("largest group exists");
    let members: Vec<usize> = (0..n).filter(|&i| labels[i] == group).collect();
    let mut medoid = members[0];
    let mut best = T::zero() - T::one();
    for &i in &members {
        let s = members.iter().fold(T::zero(), |acc, &j| acc + aff[(i, j)]);
        if s > best {
            best = s;
            medoid = i;
        }
    }
    Ok(AlphaSelection {
        alpha: alphas[medoid],
        index: medoid,
        projection: vs[medoid].clone(),
        cluster_labels: labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn hand_contrast_picks_second_axis() {
        // Cx = diag(4, 1), Cy = diag(4, 0)
        let r = 8f64.sqrt();
        let q = 2f64.sqrt();
        let x = dmatrix![r, 0.0; -r, 0.0; 0.0, q; 0.0, -q];
        let y = dmatrix![2.0, 0.0; -2.0, 0.0];
        let v = cpca_project(&x, Some(&y), 1.0, 1).unwrap();
        assert_eq!(v.matrix().column(0).into_owned(), nalgebra::dvector![0.0, 1.0]);
    }

    #[test]
    fn degenerate_contrast_is_deterministic() {
        let x = dmatrix![1.0, 2.0, 0.5; -1.0, 0.0, 1.0; 0.0, -2.0, -1.5];
        let a = cpca_project(&x, Some(&x), 1.0, 2).unwrap();
        let b = cpca_project(&x, Some(&x), 1.0, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn default_alpha_grid() {
        let a = default_alphas::<f64>();
        assert_eq!(a.len(), 40);
        assert_eq!(a[0], 0.0);
        assert!((a[1] - 0.1).abs() < 1e-12 && (a[39] - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn singleton_alpha_returns_pca() {
        let x = dmatrix![3.0, 0.1; -3.0, 0.2; 0.0, -0.3];
        let sel = cpca_alpha_select(&x, None, &[0.0], 1, 1).unwrap();
        assert_eq!(sel.index, 0);
        assert_eq!(sel.projection, cpca_project(&x, None, 0.0, 1).unwrap());
    }

    #[test]
    fn identical_subspaces_pick_first() {
        let x = dmatrix![3.0, 0.1; -3.0, 0.2; 0.0, -0.3];
        let sel = cpca_alpha_select(&x, None, &[0.0, 1.0, 2.0], 1, 1).unwrap();
        assert_eq!(sel.index, 0);
    }

    #[test]
    fn spectral_recovers_blocks() {
        let a = DMatrix::from_fn(6, 6, |i, j| if (i < 4) == (j < 4) { 1.0 } else { 0.01 });
        let l = spectral_clustering(&a, 2, 0).unwrap();
        assert!(l[..4].iter().all(|&v| v == l[0]));
        assert!(l[4..].iter().all(|&v| v == l[4]));
        assert_ne!(l[0], l[4]);
    }
}
