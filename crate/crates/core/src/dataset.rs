//! Shared domain types: the dataset container, prior specifications,
//! hyperparameters and the Stiefel-constrained projection matrix.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A named vector of integer labels attached to the rows of a [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelColumn {
    pub name: String,
    pub values: Vec<i64>,
}

/// An `n × d` data matrix (one sample per row) with optional labels and column names.
///
/// Every entry is finite and both dimensions are at least one. Several label
/// columns may be attached; the first one is the "primary" labelling returned
/// by [`Dataset::labels`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar> {
    values: DMatrix<T>,
    labels: Vec<LabelColumn>,
    column_names: Option<Vec<String>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(values: DMatrix<T>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidDataset(format!(
                "dataset must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::InvalidDataset(format!(
                "non-finite entry at row {r}, column {c}"
            )));
        }
        Ok(Dataset {
            values,
            labels: Vec::new(),
            column_names: None,
        })
    }

    /// Attaches a label column. Labels must have one entry per row.
    pub fn with_labels(mut self, name: impl Into<String>, values: Vec<i64>) -> Result<Self> {
        let name = name.into();
        if values.len() != self.nrows() {
            return Err(Error::InvalidDataset(format!(
                "label column '{name}' has {} entries for {} rows",
                values.len(),
                self.nrows()
            )));
        }
        self.labels.retain(|c| c.name != name);
        self.labels.push(LabelColumn { name, values });
        Ok(self)
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.ncols() {
            return Err(Error::InvalidDataset(format!(
                "{} column names for {} columns",
                names.len(),
                self.ncols()
            )));
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<T> {
        self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// The primary (first attached) label column, if any.
    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.first().map(|c| c.values.as_slice())
    }

    pub fn label_column(&self, name: &str) -> Option<&[i64]> {
        self.labels
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    pub fn label_columns(&self) -> &[LabelColumn] {
        &self.labels
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    /// Index of a named column.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names
            .as_ref()
            .and_then(|names| names.iter().position(|n| n == name))
    }

    /// Returns a new dataset holding the given rows (in the given order), labels included.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.nrows()) {
            return Err(Error::InvalidParameter(format!(
                "row index {bad} out of range for {} rows",
                self.nrows()
            )));
        }
        let values = self.values.select_rows(rows);
        let labels = self
            .labels
            .iter()
            .map(|c| LabelColumn {
                name: c.name.clone(),
                values: rows.iter().map(|&r| c.values[r]).collect(),
            })
            .collect();
        let mut out = Dataset::new(values)?;
        out.labels = labels;
        out.column_names = self.column_names.clone();
        Ok(out)
    }

    /// Replaces the value matrix while keeping labels; column names are kept only
    /// when the column count is unchanged.
    pub fn with_values(&self, values: DMatrix<T>) -> Result<Self> {
        if values.nrows() != self.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "replacement has {} rows, dataset has {}",
                values.nrows(),
                self.nrows()
            )));
        }
        let same_cols = values.ncols() == self.ncols();
        let mut out = Dataset::new(values)?;
        out.labels = self.labels.clone();
        if same_cols {
            out.column_names = self.column_names.clone();
        }
        Ok(out)
    }
}

/// Which prior knowledge to factor out of the embedding.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec<T: Scalar> {
    /// No prior: plain kurtosis-regularised PCA.
    None,
    /// A set of known attributes (column indices).
    Attributes(Vec<usize>),
    /// An external background sample matrix with the same column count.
    Samples(DMatrix<T>),
    /// A subset of rows already known to be similar.
    Subset(Vec<usize>),
}

impl<T: Scalar> PriorSpec<T> {
    pub fn is_none(&self) -> bool {
        matches!(self, PriorSpec::None)
    }

    pub fn validate(&self, data: &Dataset<T>) -> Result<()> {
        let (n, d) = (data.nrows(), data.ncols());
        match self {
            PriorSpec::None => Ok(()),
            PriorSpec::Attributes(cols) => {
                if cols.is_empty() {
                    return Err(Error::InvalidPrior("attribute prior is empty".into()));
                }
                check_indices(cols, d, "attribute column")
            }
            PriorSpec::Samples(y) => {
                if y.ncols() != d {
                    return Err(Error::DimensionMismatch(format!(
                        "prior samples have {} columns, data has {d}",
                        y.ncols()
                    )));
                }
                if y.nrows() == 0 {
                    return Err(Error::InvalidPrior("prior sample matrix is empty".into()));
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidPrior("prior samples contain non-finite values".into()));
                }
                Ok(())
            }
            PriorSpec::Subset(rows) => check_indices(rows, n, "subset row"),
        }
    }
}

fn check_indices(idx: &[usize], bound: usize, what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &i in idx {
        if i >= bound {
            return Err(Error::InvalidPrior(format!("{what} {i} out of range [0, {bound})")));
        }
        if !seen.insert(i) {
            return Err(Error::InvalidPrior(format!("duplicate {what} {i}")));
        }
    }
    Ok(())
}

/// Hyperparameters of a single IMAPCE solve / exploration run.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams<T: Scalar> {
    /// Weight of the prior-variance penalty.
    pub alpha: T,
    /// Weight of the kurtosis term.
    pub mu: T,
    /// Embedding dimension.
    pub k: usize,
    /// Minimum acceptable cluster size during exploration.
    pub min_cluster_size: usize,
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub grad_tol: T,
}

impl<T: Scalar> Default for Hyperparams<T> {
    fn default() -> Self {
        Hyperparams {
            alpha: T::one(),
            mu: T::zero(),
            k: 2,
            min_cluster_size: 75,
            restarts: 1,
            seed: 0,
            max_iter: 500,
            grad_tol: T::lit(1e-6),
        }
    }
}

impl<T: Scalar> Hyperparams<T> {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.k == 0 || self.k >= d {
            return Err(Error::InvalidParameter(format!(
                "embedding dimension k={} must satisfy 0 < k < d={d}",
                self.k
            )));
        }
        if self.alpha < T::zero() || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha={} must be >= 0", self.alpha)));
        }
        if self.mu < T::zero() || !self.mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu={} must be >= 0", self.mu)));
        }
        if self.min_cluster_size == 0 {
            return Err(Error::InvalidParameter("minimum cluster size must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be >= 1".into()));
        }
        if self.grad_tol <= T::zero() {
            return Err(Error::InvalidParameter("grad_tol must be > 0".into()));
        }
        Ok(())
    }

    /// The effective alpha: forced to zero when there is no prior data.
    pub fn effective_alpha(&self, has_prior: bool) -> T {
        if has_prior {
            self.alpha
        } else {
            T::zero()
        }
    }
}

/// A `d × k` matrix with orthonormal columns (a point on the Stiefel manifold).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix<T: Scalar>(DMatrix<T>);

impl<T: Scalar> ProjectionMatrix<T> {
    /// Wraps `v` after checking `‖VᵀV − I‖_F` against the scalar type's tolerance.
    pub fn new(v: DMatrix<T>) -> Result<Self> {
        let err = orthonormality_error(&v);
        if !(err <= T::stiefel_tolerance()) {
            return Err(Error::InvalidParameter(format!(
                "matrix is not column-orthonormal: ||V'V - I||_F = {err:e}"
            )));
        }
        Ok(ProjectionMatrix(v))
    }

    pub(crate) fn new_unchecked(v: DMatrix<T>) -> Self {
        ProjectionMatrix(v)
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.0
    }

    pub fn d(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    /// Projects the rows of `x` onto the columns: `X V`.
    pub fn project(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        if x.ncols() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "data has {} columns, projection expects {}",
                x.ncols(),
                self.d()
            )));
        }
        Ok(x * &self.0)
    }
}

/// `‖VᵀV − I‖_F`.
pub fn orthonormality_error<T: Scalar>(v: &DMatrix<T>) -> T {
    let k = v.ncols();
    let gram = v.transpose() * v;
    (gram - DMatrix::<T>::identity(k, k)).norm()
}

/// Low-dimensional coordinates of a subset of dataset rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet<T: Scalar> {
    coords: DMatrix<T>,
    source_rows: Vec<usize>,
}

impl<T: Scalar> EmbeddingSet<T> {
    pub fn new(coords: DMatrix<T>, source_rows: Vec<usize>) -> Result<Self> {
        if coords.nrows() != source_rows.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} embedding rows for {} source rows",
                coords.nrows(),
                source_rows.len()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding coordinates".into()));
        }
        Ok(EmbeddingSet { coords, source_rows })
    }

    /// Embeds every row of `x` (source rows `0..n`).
    pub fn from_projection(x: &DMatrix<T>, v: &ProjectionMatrix<T>) -> Result<Self> {
        let coords = v.project(x)?;
        EmbeddingSet::new(coords, (0..x.nrows()).collect())
    }

    pub fn coords(&self) -> &DMatrix<T> {
        &self.coords
    }

    pub fn source_rows(&self) -> &[usize] {
        &self.source_rows
    }

    pub fn len(&self) -> usize {
        self.source_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }
}

/// Column means recorded by [`center`] so the same shift can be applied elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Centering<T: Scalar> {
    pub means: DVector<T>,
}

impl<T: Scalar> Centering<T> {
    pub fn fit(x: &DMatrix<T>) -> Self {
        let n = T::from_count(x.nrows().max(1));
        let means = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
        Centering { means }
    }

    pub fn apply(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        if x.ncols() != self.means.len() {
            return Err(Error::DimensionMismatch(format!(
                "centering fitted on {} columns, applied to {}",
                self.means.len(),
                x.ncols()
            )));
        }
        let mut out = x.clone();
        for (mut col, &m) in out.column_iter_mut().zip(self.means.iter()) {
            col.add_scalar_mut(-m);
        }
        Ok(out)
    }
}

/// Subtracts column means; returns the centred matrix and the recorded means.
pub fn center<T: Scalar>(x: &DMatrix<T>) -> (DMatrix<T>, Centering<T>) {
    let c = Centering::fit(x);
    let out = c.apply(x).expect("centering fitted on the same matrix");
    (out, c)
}

/// The inputs of the IMAPCE objective derived from a dataset and a prior.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedPrior<T: Scalar> {
    /// The reconstruction target (always the full data).
    pub x_work: DMatrix<T>,
    /// Prior data, `None` when there is no prior.
    pub y: Option<DMatrix<T>>,
    /// Rows that make up the kurtosis target set.
    pub z_rows: Vec<usize>,
}

/// Maps a prior specification onto reconstruction target, prior matrix and
/// kurtosis rows.
///
/// Attribute priors keep the selected columns of `X` and zero the others so
/// that the prior matrix has `d` columns.
pub fn resolve_prior<T: Scalar>(x: &Dataset<T>, prior: &PriorSpec<T>) -> Result<ResolvedPrior<T>> {
    prior.validate(x)?;
    let n = x.nrows();
    let all: Vec<usize> = (0..n).collect();
    let x_work = x.values().clone();
    let resolved = match prior {
        PriorSpec::None => ResolvedPrior {
            x_work,
            y: None,
            z_rows: all,
        },
        PriorSpec::Attributes(cols) => {
            let keep: BTreeSet<usize> = cols.iter().copied().collect();
            let mut y = x_work.clone();
            for (j, mut col) in y.column_iter_mut().enumerate() {
                if !keep.contains(&j) {
                    col.fill(T::zero());
                }
            }
            ResolvedPrior {
                x_work,
                y: Some(y),
                z_rows: all,
            }
        }
        PriorSpec::Samples(y) => ResolvedPrior {
            x_work,
            y: Some(y.clone()),
            z_rows: all,
        },
        PriorSpec::Subset(rows) => {
            let prior: BTreeSet<usize> = rows.iter().copied().collect();
            let z_rows: Vec<usize> = all.into_iter().filter(|r| !prior.contains(r)).collect();
            if z_rows.is_empty() {
                return Err(Error::InvalidPrior(
                    "subset prior covers every row; nothing left to explore".into(),
                ));
            }
            if rows.is_empty() {
                ResolvedPrior {
                    x_work,
                    y: None,
                    z_rows,
                }
            } else {
                let y = x_work.select_rows(rows);
                ResolvedPrior { x_work, y: Some(y), z_rows }
            }
        }
    };
    Ok(resolved)
}
