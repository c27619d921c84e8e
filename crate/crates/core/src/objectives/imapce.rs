use nalgebra::DMatrix;

use crate::dataset::{EmbeddingSet, ProjectionMatrix};
use crate::error::{Error, Result};
use crate::manifold::{minimize, Objective, SolveReport, SolverOptions};
use crate::objectives::kurtosis::leverages;
use crate::scalar::Scalar;

/// Which Gram matrix normalises the kurtosis leverages `zᵢᵀV A⁻¹ Vᵀzᵢ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KurtosisNormalization {
    /// `A = VᵀXᵀXV` over the full reconstruction target; `Z` used as given.
    #[default]
    FullData,
    /// `Z` is centred on its own mean and `A = VᵀZᵀZV`.
    Target,
}

/// Scaling of the two reconstruction terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReconstructionScaling {
    /// Plain squared Frobenius norms.
    #[default]
    Frobenius,
    /// Each term divided by its own row count.
    PerSample,
}

/// The IMAPCE objective
/// `‖X − XVVᵀ‖² − α‖Y − YVVᵀ‖² + μ·p·Σ_{zᵢ∈Z}(zᵢᵀV A⁻¹ Vᵀzᵢ)²`.
///
/// The reconstruction terms are evaluated in trace form,
/// `tr(XᵀX) − tr(VᵀXᵀXV)`, which agrees with the Frobenius form on the
/// Stiefel manifold; its Euclidean gradient is `−2XᵀXV`.
#[derive(Debug, Clone)]
pub struct ImapceProblem<T: Scalar> {
    alpha: T,
    mu: T,
    /// Reconstruction Grams after scaling.
    rx: DMatrix<T>,
    ry: Option<DMatrix<T>>,
    tr_rx: T,
    tr_ry: T,
    /// Gram normalising the kurtosis term.
    kurt_gram: DMatrix<T>,
    z: DMatrix<T>,
    normalization: KurtosisNormalization,
    scaling: ReconstructionScaling,
    n: usize,
    m: usize,
}

impl<T: Scalar> ImapceProblem<T> {
    /// `x` and `y` are expected to be centred. `z = None` uses every row of `x`.
    pub fn new(x: DMatrix<T>, y: Option<DMatrix<T>>, z: Option<DMatrix<T>>, alpha: T, mu: T) -> Result<Self> {
        Self::with_options(x, y, z, alpha, mu, KurtosisNormalization::default(), ReconstructionScaling::default())
    }

    pub fn with_options(
        x: DMatrix<T>,
        y: Option<DMatrix<T>>,
        z: Option<DMatrix<T>>,
        alpha: T,
        mu: T,
        normalization: KurtosisNormalization,
        scaling: ReconstructionScaling,
    ) -> Result<Self> {
        let d = x.ncols();
        if x.nrows() == 0 || d == 0 {
            return Err(Error::InvalidDataset("reconstruction target is empty".into()));
        }
        if !(alpha >= T::zero()) || !(mu >= T::zero()) || !alpha.is_finite() || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha={alpha}, mu={mu} must be finite and >= 0")));
        }
        let y = y.filter(|y| y.nrows() > 0);
        if let Some(y) = &y {
            if y.ncols() != d {
                return Err(Error::DimensionMismatch(format!("prior has {} columns, data has {d}", y.ncols())));
            }
        } else if alpha != T::zero() {
            return Err(Error::InvalidParameter("alpha must be 0 without prior data".into()));
        }
        let z = z.unwrap_or_else(|| x.clone());
        if z.nrows() == 0 {
            return Err(Error::InvalidDataset("kurtosis target set is empty".into()));
        }
        if z.ncols() != d {
            return Err(Error::DimensionMismatch(format!("kurtosis target has {} columns, data has {d}", z.ncols())));
        }
        for (name, m) in [("data", Some(&x)), ("prior", y.as_ref()), ("kurtosis target", Some(&z))] {
            if m.is_some_and(|m| m.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFinite(name.to_string()));
            }
        }

        let n = x.nrows();
        let m = y.as_ref().map_or(0, |y| y.nrows());
        let gx = x.transpose() * &x;
        let (sx, sy) = match scaling {
            ReconstructionScaling::Frobenius => (T::one(), T::one()),
            ReconstructionScaling::PerSample => (
                T::one() / T::from_count(n),
                T::one() / T::from_count(m.max(1)),
            ),
        };
        let ry = y.as_ref().map(|y| (y.transpose() * y) * sy);
        let (z, kurt_gram) = match normalization {
            KurtosisNormalization::FullData => (z, gx.clone()),
            KurtosisNormalization::Target => {
                let (zc, _) = crate::dataset::center(&z);
                let gz = zc.transpose() * &zc;
                (zc, gz)
            }
        };
        let rx = gx * sx;
        Ok(ImapceProblem {
            alpha,
            mu,
            tr_rx: rx.trace(),
            tr_ry: ry.as_ref().map_or(T::zero(), |r| r.trace()),
            rx,
            ry,
            kurt_gram,
            z,
            normalization,
            scaling,
            n,
            m,
        })
    }

    pub fn d(&self) -> usize {
        self.rx.nrows()
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.z.nrows()
    }

    pub fn normalization(&self) -> KurtosisNormalization {
        self.normalization
    }

    pub fn scaling(&self) -> ReconstructionScaling {
        self.scaling
    }

    fn check(&self, v: &DMatrix<T>) -> Result<()> {
        if v.nrows() != self.d() || v.ncols() == 0 || v.ncols() > self.d() {
            return Err(Error::DimensionMismatch(format!(
                "projection is {}x{}, problem dimension is {}",
                v.nrows(),
                v.ncols(),
                self.d()
            )));
        }
        Ok(())
    }

    /// The two reconstruction terms `‖X − XVVᵀ‖² − α‖Y − YVVᵀ‖²`.
    pub fn reconstruction(&self, v: &DMatrix<T>) -> Result<T> {
        self.check(v)?;
        let mut r = self.tr_rx - (v.transpose() * &self.rx * v).trace();
        if let Some(ry) = &self.ry {
            r -= self.alpha * (self.tr_ry - (v.transpose() * ry * v).trace());
        }
        Ok(r)
    }

    /// The kurtosis term without the `μ` factor.
    pub fn kurtosis(&self, v: &DMatrix<T>) -> Result<T> {
        self.check(v)?;
        let (h, _, _) = leverages(&self.kurt_gram, &self.z, v)?;
        Ok(T::from_count(self.p()) * h.norm_squared())
    }

    pub fn cost(&self, v: &DMatrix<T>) -> Result<T> {
        let rec = self.reconstruction(v)?;
        if self.mu == T::zero() {
            return Ok(rec);
        }
        Ok(rec + self.mu * self.kurtosis(v)?)
    }

    pub fn gradient(&self, v: &DMatrix<T>) -> Result<DMatrix<T>> {
        Ok(self.cost_and_gradient(v)?.1)
    }

    pub fn cost_and_gradient(&self, v: &DMatrix<T>) -> Result<(T, DMatrix<T>)> {
        self.check(v)?;
        let rxv = &self.rx * v;
        let mut f = self.tr_rx - (v.transpose() * &rxv).trace();
        let mut g = rxv * T::lit(-2.0);
        if let Some(ry) = &self.ry {
            let ryv = ry * v;
            f -= self.alpha * (self.tr_ry - (v.transpose() * &ryv).trace());
            g += ryv * (T::lit(2.0) * self.alpha);
        }
        if self.mu == T::zero() {
            return Ok((f, g));
        }
        let (h, _, pa) = leverages(&self.kurt_gram, &self.z, v)?;
        let scale = self.mu * T::from_count(self.p());
        f += scale * h.norm_squared();

        // Zᵀ diag(h) P A⁻¹ − G V A⁻¹ (Pᵀ diag(h) P) A⁻¹, using P A⁻¹ = pa.
        let mut hpa = pa.clone();
        for (i, mut row) in hpa.row_iter_mut().enumerate() {
            row *= h[i];
        }
        let first = self.z.transpose() * &hpa;
        // A⁻¹ Pᵀ diag(h) P A⁻¹ = paᵀ diag(h) pa
        let inner = pa.transpose() * &hpa;
        let second = &self.kurt_gram * v * inner;
        g += (first - second) * (T::lit(4.0) * scale);
        Ok((f, g))
    }

    /// Minimises the objective over `St(k, d)`.
    pub fn solve(&self, k: usize, opts: &SolverOptions<T>) -> Result<SolveReport<T>> {
        if k == 0 || k >= self.d() {
            return Err(Error::InvalidParameter(format!("need 0 < k < d, got k={k}, d={}", self.d())));
        }
        minimize(self, self.d(), k, opts)
    }
}

impl<T: Scalar> Objective<T> for ImapceProblem<T> {
    fn cost(&self, v: &DMatrix<T>) -> Result<T> {
        ImapceProblem::cost(self, v)
    }

    fn gradient(&self, v: &DMatrix<T>) -> Result<DMatrix<T>> {
        ImapceProblem::gradient(self, v)
    }

    fn cost_and_gradient(&self, v: &DMatrix<T>) -> Result<(T, DMatrix<T>)> {
        ImapceProblem::cost_and_gradient(self, v)
    }
}

/// Cost at a validated projection matrix.
pub fn imapce_cost<T: Scalar>(prob: &ImapceProblem<T>, v: &ProjectionMatrix<T>) -> Result<T> {
    prob.cost(v.matrix())
}

pub fn imapce_euclid_gradient<T: Scalar>(prob: &ImapceProblem<T>, v: &ProjectionMatrix<T>) -> Result<DMatrix<T>> {
    prob.gradient(v.matrix())
}

/// Embeds the given rows of `x` with `v`.
pub fn embed_rows<T: Scalar>(x: &DMatrix<T>, rows: &[usize], v: &ProjectionMatrix<T>) -> Result<EmbeddingSet<T>> {
    let sub = x.select_rows(rows);
    EmbeddingSet::new(v.project(&sub)?, rows.to_vec())
}
