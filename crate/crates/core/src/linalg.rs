use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `(M + Mᵀ) / 2`.
pub(crate) fn sym<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Cholesky factor of the symmetric part of `m`.
pub(crate) fn cholesky_sym<T: Scalar>(m: &DMatrix<T>, what: &str) -> Result<Cholesky<T, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what.to_string()));
    }
    Cholesky::new(sym(m)).ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

/// Eigenpairs of a symmetric matrix sorted by descending eigenvalue.
///
/// Eigenvectors are sign-normalised so that their largest-magnitude entry
/// (lowest index on ties) is positive, which makes the basis deterministic.
pub(crate) fn sym_eigen_desc<T: Scalar>(m: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let eig = nalgebra::SymmetricEigen::new(sym(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(m.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let mut pivot = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < T::zero() {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Thin QR with the sign convention `diag(R) > 0`; errors when `R` is numerically singular.
pub(crate) fn qr_positive<T: Scalar>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("QR input".into()));
    }
    let k = m.ncols();
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    let scale = m.norm().max(T::one());
    let floor = T::default_epsilon() * T::from_count(m.nrows().max(k)) * scale;
    for j in 0..k {
        let rjj = r[(j, j)];
        if rjj.abs() <= floor {
            return Err(Error::Singular(format!("QR diagonal entry {j} vanished")));
        }
        if rjj < T::zero() {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// Cosines of the principal angles between the column spans of two orthonormal bases.
pub(crate) fn principal_cosines<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> DVector<T> {
    let m = a.transpose() * b;
    let sv = m.singular_values();
    sv.map(|s| s.min(T::one()))
}

/// Squared Euclidean distance between two rows.
pub(crate) fn row_dist2<T: Scalar>(a: &DMatrix<T>, i: usize, b: &DMatrix<T>, j: usize) -> T {
    let mut s = T::zero();
    for c in 0..a.ncols() {
        let d = a[(i, c)] - b[(j, c)];
        s += d * d;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn eigen_sorted_and_signed() {
        let (w, v) = sym_eigen_desc(&dmatrix![1.0, 0.0; 0.0, 3.0]);
        assert_eq!(w.as_slice(), &[3.0, 1.0]);
        assert_eq!(v, dmatrix![0.0, 1.0; 1.0, 0.0]);
    }

    #[test]
    fn qr_positive_diagonal() {
        let m = dmatrix![-2.0, 0.0; 0.0, -3.0; 0.0, 0.0];
        // Q·R = M with diag(R) = (2, 3) forces Q = −[e₁ e₂].
        let q = qr_positive(&m).unwrap();
        assert_eq!(q, dmatrix![-1.0, 0.0; 0.0, -1.0; 0.0, 0.0]);
        assert!(qr_positive(&dmatrix![1.0, 2.0; 2.0, 4.0]).is_err());
    }
}
