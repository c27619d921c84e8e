use nalgebra::{DMatrix, DVector};

use crate::dataset::ProjectionMatrix;
use crate::error::{Error, Result};
use crate::linalg::cholesky_sym;
use crate::scalar::Scalar;

/// Kurtosis index of the projection `Xv`: `n·Σ(vᵀxᵢ)⁴ / (Σ(vᵀxᵢ)²)²`.
///
/// The value is invariant to rescaling either `v` or `X` and lies in `[1, n]`.
/// The data is used as given (no centering).
pub fn kurtosis_index<T: Scalar>(x: &DMatrix<T>, v: &DVector<T>) -> Result<T> {
    if x.ncols() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "direction has length {}, data has {} columns",
            v.len(),
            x.ncols()
        )));
    }
    let p = x * v;
    let s2: T = p.iter().map(|&t| t * t).fold(T::zero(), |a, b| a + b);
    if !(s2 > T::zero()) {
        return Err(Error::Singular("projected variance is zero".into()));
    }
    let s4: T = p.iter().map(|&t| (t * t) * (t * t)).fold(T::zero(), |a, b| a + b);
    Ok(T::from_count(x.nrows()) * s4 / (s2 * s2))
}

/// Per-row leverages `hᵢ = zᵢᵀV A⁻¹ Vᵀzᵢ` with `A = VᵀGV`, plus `P = ZV`.
pub(crate) fn leverages<T: Scalar>(
    gram: &DMatrix<T>,
    z: &DMatrix<T>,
    v: &DMatrix<T>,
) -> Result<(DVector<T>, DMatrix<T>, DMatrix<T>)> {
    let a = v.transpose() * gram * v;
    let chol = cholesky_sym(&a, "projected Gram matrix A")?;
    let p = z * v;
    // (P A⁻¹) = (A⁻¹ Pᵀ)ᵀ since A is symmetric.
    let pa = chol.solve(&p.transpose()).transpose();
    let h = DVector::from_iterator(p.nrows(), (0..p.nrows()).map(|i| p.row(i).dot(&pa.row(i))));
    Ok((h, p, pa))
}

/// Multivariate kurtosis term `p·Σ_{zᵢ∈Z} (zᵢᵀV A⁻¹ Vᵀzᵢ)²` with `A = VᵀXᵀXV`.
pub fn multivariate_kurtosis<T: Scalar>(x_full: &DMatrix<T>, z: &DMatrix<T>, v: &ProjectionMatrix<T>) -> Result<T> {
    if x_full.ncols() != v.d() || z.ncols() != v.d() {
        return Err(Error::DimensionMismatch(format!(
            "data has {}/{} columns, projection expects {}",
            x_full.ncols(),
            z.ncols(),
            v.d()
        )));
    }
    let gram = x_full.transpose() * x_full;
    let (h, _, _) = leverages(&gram, z, v.matrix())?;
    Ok(T::from_count(z.nrows()) * h.norm_squared())
}
