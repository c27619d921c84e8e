//! Dataset generation, loading and preprocessing.

mod io;

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::scalar::Scalar;

pub use io::{load_csv, load_idx, load_idx_images, load_idx_labels, write_csv, write_idx, CsvSpec, LoadReport};

/// Label column holding the cluster of dimensions 1–4.
pub const DIMS14: &str = "dims14";
/// Label column holding the cluster of dimensions 5–6.
pub const DIMS56: &str = "dims56";

/// Ten-dimensional synthetic data with planted structure in two subspaces.
///
/// Dimensions 1–4 hold one of `dims14_centers` clusters whose centres are
/// drawn with standard deviation `centers14_std`; dimensions 5–6 hold one of
/// `dims56_centers` clusters with centre spread `centers56_std`. Both carry
/// isotropic noise of standard deviation `noise_std`. Dimensions 7–10 are
/// standard normal.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub dims14_centers: usize,
    pub dims56_centers: usize,
    pub centers14_std: f64,
    pub centers56_std: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 1500,
            dims14_centers: 2,
            dims56_centers: 3,
            centers14_std: 5.0,
            centers56_std: 1.0,
            noise_std: 0.1,
            seed: 0,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * std
}

/// Draws the synthetic dataset with labels `dims14` and `dims56`.
pub fn gen_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Dataset<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c14: Vec<[f64; 4]> = (0..spec.dims14_centers.max(1))
        .map(|_| std::array::from_fn(|_| normal(&mut rng, spec.centers14_std)))
        .collect();
    let c56: Vec<[f64; 2]> = (0..spec.dims56_centers.max(1))
        .map(|_| std::array::from_fn(|_| normal(&mut rng, spec.centers56_std)))
        .collect();
    let n = spec.n.max(1);
    let mut x = DMatrix::<T>::zeros(n, 10);
    let mut l14 = Vec::with_capacity(n);
    let mut l56 = Vec::with_capacity(n);
    for i in 0..n {
        let a = rng.random_range(0..c14.len());
        let b = rng.random_range(0..c56.len());
        for j in 0..4 {
            x[(i, j)] = T::lit(c14[a][j] + normal(&mut rng, spec.noise_std));
        }
        for j in 0..2 {
            x[(i, 4 + j)] = T::lit(c56[b][j] + normal(&mut rng, spec.noise_std));
        }
        for j in 6..10 {
            x[(i, j)] = T::lit(normal(&mut rng, 1.0));
        }
        l14.push(a as i64);
        l56.push(b as i64);
    }
    let names = (1..=10).map(|j| format!("x{j}")).collect();
    Dataset::new(x)
        .and_then(|d| d.with_column_names(names))
        .and_then(|d| d.with_labels(DIMS14, l14))
        .and_then(|d| d.with_labels(DIMS56, l56))
        .expect("generated data is finite and consistently shaped")
}

/// Draws `count` distinct rows uniformly at random (sorted).
pub fn sample_rows<T: Scalar>(data: &Dataset<T>, count: usize, seed: u64) -> Result<Dataset<T>> {
    if count == 0 || count > data.nrows() {
        return Err(Error::InvalidParameter(format!(
            "cannot sample {count} rows from {}",
            data.nrows()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = sample(&mut rng, data.nrows(), count).into_vec();
    rows.sort_unstable();
    data.select_rows(&rows)
}

/// Settings for building superimposed ("complex") image data.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpec {
    pub class_pair: (i64, i64),
    /// Reference images drawn per class.
    pub per_class: usize,
    pub seed: u64,
}

impl Default for ComplexSpec {
    fn default() -> Self {
        ComplexSpec {
            class_pair: (8, 9),
            per_class: 3000,
            seed: 0,
        }
    }
}

/// Adds a uniformly drawn background image to each selected reference image,
/// clipping pixels to `1`. Reference labels are kept.
pub fn superimpose<T: Scalar>(reference: &Dataset<T>, background: &Dataset<T>, spec: &ComplexSpec) -> Result<Dataset<T>> {
    if reference.ncols() != background.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "reference has {} pixels, background {}",
            reference.ncols(),
            background.ncols()
        )));
    }
    let labels = reference
        .labels()
        .ok_or_else(|| Error::InvalidDataset("reference images carry no labels".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::with_capacity(2 * spec.per_class);
    for class in [spec.class_pair.0, spec.class_pair.1] {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            return Err(Error::InvalidParameter(format!("class {class} absent from reference labels")));
        }
        if members.len() < spec.per_class {
            return Err(Error::InvalidParameter(format!(
                "class {class} has {} images, {} requested",
                members.len(),
                spec.per_class
            )));
        }
        let mut pick: Vec<usize> = sample(&mut rng, members.len(), spec.per_class)
            .into_iter()
            .map(|i| members[i])
            .collect();
        pick.sort_unstable();
        rows.extend(pick);
    }
    let bg_rows: Vec<usize> = (0..rows.len()).map(|_| rng.random_range(0..background.nrows())).collect();
    let reference_x = reference.values();
    let background_x = background.values();
    let x = DMatrix::from_fn(rows.len(), reference.ncols(), |i, j| {
        (reference_x[(rows[i], j)] + background_x[(bg_rows[i], j)]).min(T::one())
    });
    let mut out = Dataset::new(x)?;
    for col in reference.label_columns() {
        out = out.with_labels(col.name.clone(), rows.iter().map(|&r| col.values[r]).collect())?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessOptions {
    pub center: bool,
    /// Divide each column by its standard deviation (constant columns untouched).
    pub standardize: bool,
    /// Project onto this many leading right singular directions.
    pub svd_dims: Option<usize>,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            center: true,
            standardize: false,
            svd_dims: None,
        }
    }
}

/// A fitted preprocessing transform, reusable on prior samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor<T: Scalar> {
    pub means: DVector<T>,
    pub scales: DVector<T>,
    /// `d × r` basis of the retained singular directions.
    pub basis: Option<DMatrix<T>>,
    /// Fraction of the (post-scaling) variance kept by `basis`.
    pub retained_variance: Option<T>,
}

impl<T: Scalar> Preprocessor<T> {
    pub fn apply(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        if x.ncols() != self.means.len() {
            return Err(Error::DimensionMismatch(format!(
                "preprocessor fitted on {} columns, applied to {}",
                self.means.len(),
                x.ncols()
            )));
        }
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.means[j]);
            col /= self.scales[j];
        }
        Ok(match &self.basis {
            Some(b) => out * b,
            None => out,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.basis.as_ref().map_or(self.means.len(), |b| b.ncols())
    }
}

/// Centres, optionally standardises and optionally projects onto the leading
/// singular directions. The fitted transform is returned for reuse.
pub fn preprocess<T: Scalar>(x: &Dataset<T>, opts: &PreprocessOptions) -> Result<(Dataset<T>, Preprocessor<T>)> {
    let (n, d) = (x.nrows(), x.ncols());
    let v = x.values();
    let means = if opts.center || opts.standardize {
        crate::dataset::Centering::fit(v).means
    } else {
        DVector::zeros(d)
    };
    let scales = if opts.standardize {
        DVector::from_iterator(
            d,
            v.column_iter().enumerate().map(|(j, c)| {
                let var = c.iter().fold(T::zero(), |s, &t| s + (t - means[j]) * (t - means[j])) / T::from_count(n);
                if var > T::zero() {
                    var.sqrt()
                } else {
                    T::one()
                }
            }),
        )
    } else {
        DVector::from_element(d, T::one())
    };
    let mut pre = Preprocessor {
        means,
        scales,
        basis: None,
        retained_variance: None,
    };
    let scaled = pre.apply(v)?;
    if let Some(r) = opts.svd_dims {
        if r == 0 || r > n.min(d) {
            return Err(Error::InvalidParameter(format!(
                "svd_dims={r} must lie in [1, min(n, d) = {}]",
                n.min(d)
            )));
        }
        let (w, vecs) = sym_eigen_desc(&(scaled.transpose() * &scaled));
        let total = w.iter().fold(T::zero(), |s, &l| s + l.max(T::zero()));
        let kept = w.iter().take(r).fold(T::zero(), |s, &l| s + l.max(T::zero()));
        pre.basis = Some(vecs.columns(0, r).into_owned());
        pre.retained_variance = Some(if total > T::zero() { kept / total } else { T::one() });
    }
    let out_x = match &pre.basis {
        Some(b) => scaled * b,
        None => scaled,
    };
    let mut out = x.with_values(out_x)?;
    if pre.basis.is_some() {
        let names = (1..=pre.output_dim()).map(|j| format!("sv{j}")).collect();
        out = out.with_column_names(names)?;
    }
    Ok((out, pre))
}

/// Distinct values of a label column in ascending order.
pub fn label_values(labels: &[i64]) -> Vec<i64> {
    labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
}

/// A standard-normal matrix, handy for tests and benchmarks.
pub fn gaussian_matrix<T: Scalar>(n: usize, d: usize, seed: u64) -> DMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, 1.0).expect("unit normal");
    DMatrix::from_fn(n, d, |_, _| T::lit(dist.sample(&mut rng)))
}
