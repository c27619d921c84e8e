//! Iterative cluster exploration.
//!
//! Each iteration embeds the unexplored rows, clusters them with the
//! Dirichlet-process mixture, extracts the cluster farthest from the others
//! and folds it into the prior before the next solve.

use std::collections::BTreeSet;

use log::info;
use nalgebra::{DMatrix, DVector};

use crate::dataset::{center, Dataset, EmbeddingSet, Hyperparams, PriorSpec, ProjectionMatrix};
use crate::dpgmm::{self, ClusterModel, ClusterSummary, DpgmmConfig};
use crate::error::{Error, Result};
use crate::linalg::cholesky_sym;
use crate::manifold::{restart_seed, SolverOptions};
use crate::objectives::{cpca_project, ImapceProblem, KurtosisNormalization, ReconstructionScaling};
use crate::scalar::Scalar;

/// `δ_lj = sqrt((m_j − m_l)ᵀ C_l⁻¹ (m_j − m_l))`.
pub fn mahalanobis<T: Scalar>(m_j: &DVector<T>, m_l: &DVector<T>, c_l: &DMatrix<T>) -> Result<T> {
    if m_j.len() != m_l.len() || c_l.shape() != (m_l.len(), m_l.len()) {
        return Err(Error::DimensionMismatch(format!(
            "means of length {}/{} with covariance {:?}",
            m_j.len(),
            m_l.len(),
            c_l.shape()
        )));
    }
    let chol = cholesky_sym(c_l, "cluster covariance")?;
    let diff = m_j - m_l;
    let y = chol
        .l()
        .solve_lower_triangular(&diff)
        .ok_or_else(|| Error::Singular("cluster covariance".into()))?;
    Ok(y.norm())
}

/// Symmetrised distances `D_lj = (δ_lj + δ_jl) / 2`.
pub fn distance_matrix<T: Scalar>(clusters: &[ClusterSummary<T>]) -> Result<DMatrix<T>> {
    let c = clusters.len();
    if c < 2 {
        return Err(Error::NoAcceptableCluster { min_size: 0 });
    }
    let mut delta = DMatrix::zeros(c, c);
    for l in 0..c {
        for j in 0..c {
            if l != j {
                delta[(l, j)] = mahalanobis(&clusters[j].mean, &clusters[l].mean, &clusters[l].covariance)?;
            }
        }
    }
    Ok((&delta + delta.transpose()) * T::lit(0.5))
}

/// Row of `D` with the largest sum (lowest index on ties); both rows when `D` is 2×2.
pub fn most_distinct<T: Scalar>(d: &DMatrix<T>) -> Vec<usize> {
    if d.nrows() == 2 {
        return vec![0, 1];
    }
    let mut best = 0;
    let mut best_sum = None;
    for (i, row) in d.row_iter().enumerate() {
        let s = row.sum();
        if best_sum.is_none_or(|b| s > b) {
            best = i;
            best_sum = Some(s);
        }
    }
    vec![best]
}

/// How each iteration computes its projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Embedder {
    #[default]
    Imapce,
    /// Contrastive PCA with the fixed alpha of the hyperparameters.
    Cpca,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreOptions {
    pub embedder: Embedder,
    pub normalization: KurtosisNormalization,
    pub scaling: ReconstructionScaling,
    pub max_outer: usize,
    /// Run optimizer restarts in parallel.
    pub parallel: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            embedder: Embedder::Imapce,
            normalization: KurtosisNormalization::Target,
            scaling: ReconstructionScaling::Frobenius,
            max_outer: 50,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalReason {
    TooFewUnexplored,
    NoAcceptableCluster,
    MaxIterations,
}

impl TerminalReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalReason::TooFewUnexplored => "too_few_unexplored",
            TerminalReason::NoAcceptableCluster => "no_acceptable_cluster",
            TerminalReason::MaxIterations => "max_iterations",
        }
    }
}

/// One pass of the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T: Scalar> {
    pub index: usize,
    pub alpha: T,
    pub v_star: ProjectionMatrix<T>,
    /// Cost of the solved objective; `None` for the cPCA embedder.
    pub objective_value: Option<T>,
    /// Embedding of the unexplored rows (source rows are dataset rows).
    pub embedding: EmbeddingSet<T>,
    pub model: ClusterModel<T>,
    pub acceptable: Vec<ClusterSummary<T>>,
    pub distances: Option<DMatrix<T>>,
    /// Dataset rows of the extracted cluster(s); empty when nothing was extracted.
    pub distinct_rows: Vec<Vec<usize>>,
    /// Prior rows before this iteration.
    pub prior_rows: Vec<usize>,
    /// Unexplored rows before this iteration.
    pub unexplored_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationHistory<T: Scalar> {
    pub iterations: Vec<IterationRecord<T>>,
    pub terminal_reason: TerminalReason,
    pub n_rows: usize,
}

impl<T: Scalar> ExplorationHistory<T> {
    /// Every extracted cluster in extraction order.
    pub fn distinct_clusters(&self) -> Vec<Vec<usize>> {
        self.iterations
            .iter()
            .flat_map(|it| it.distinct_rows.iter().cloned())
            .collect()
    }

    /// Cluster index per dataset row, `-1` for rows never extracted.
    pub fn row_labels(&self) -> Vec<i64> {
        let mut out = vec![-1; self.n_rows];
        for (c, rows) in self.distinct_clusters().iter().enumerate() {
            for &r in rows {
                out[r] = c as i64;
            }
        }
        out
    }

    /// Rows still unexplored when the loop stopped.
    pub fn final_unexplored(&self) -> Vec<usize> {
        let taken: BTreeSet<usize> = self.distinct_clusters().into_iter().flatten().collect();
        match self.iterations.first() {
            Some(first) => first
                .unexplored_rows
                .iter()
                .copied()
                .filter(|r| !taken.contains(r))
                .collect(),
            None => Vec::new(),
        }
    }
}

/// [`explore_with`] under default options.
pub fn explore<T: Scalar>(
    x: &Dataset<T>,
    prior: &PriorSpec<T>,
    hp: &Hyperparams<T>,
    dpgmm_cfg: &DpgmmConfig<T>,
) -> Result<ExplorationHistory<T>> {
    explore_with(x, prior, hp, dpgmm_cfg, &ExploreOptions::default())
}

/// Runs the exploration loop while more than `hp.min_cluster_size` rows remain unexplored.
pub fn explore_with<T: Scalar>(
    x: &Dataset<T>,
    prior: &PriorSpec<T>,
    hp: &Hyperparams<T>,
    dpgmm_cfg: &DpgmmConfig<T>,
    opts: &ExploreOptions,
) -> Result<ExplorationHistory<T>> {
    prior.validate(x)?;
    hp.validate(x.ncols())?;
    let n = x.nrows();
    let s = hp.min_cluster_size;
    let (xc, _) = center(x.values());

    let (external, mut prior_rows): (Option<DMatrix<T>>, Vec<usize>) = match prior {
        PriorSpec::None => (None, Vec::new()),
        PriorSpec::Subset(rows) => (None, rows.clone()),
        PriorSpec::Samples(y) => (Some(y.clone()), Vec::new()),
        PriorSpec::Attributes(_) => {
            let r = crate::dataset::resolve_prior(x, prior)?;
            (r.y, Vec::new())
        }
    };
    let taken: BTreeSet<usize> = prior_rows.iter().copied().collect();
    let mut unexplored: Vec<usize> = (0..n).filter(|r| !taken.contains(r)).collect();
    if unexplored.is_empty() {
        return Err(Error::InvalidPrior("prior covers every row; nothing left to explore".into()));
    }

    let mut iterations: Vec<IterationRecord<T>> = Vec::new();
    let terminal = loop {
        if unexplored.len() <= s {
            break TerminalReason::TooFewUnexplored;
        }
        if iterations.len() >= opts.max_outer {
            break TerminalReason::MaxIterations;
        }
        let it = iterations.len();
        let wrap = |e: Error| Error::Exploration {
            iteration: it,
            source: Box::new(e),
        };

        let y = stack_prior(external.as_ref(), &xc, &prior_rows);
        let alpha = hp.effective_alpha(y.is_some());
        let (v_star, objective_value) = match opts.embedder {
            Embedder::Imapce => {
                let z = xc.select_rows(&unexplored);
                let prob = ImapceProblem::with_options(
                    xc.clone(),
                    y.clone(),
                    Some(z),
                    alpha,
                    hp.mu,
                    opts.normalization,
                    opts.scaling,
                )
                .map_err(wrap)?;
                let solver = SolverOptions {
                    max_iter: hp.max_iter,
                    grad_tol: hp.grad_tol,
                    restarts: hp.restarts,
                    seed: restart_seed(hp.seed, 1_000 + it),
                    parallel: opts.parallel,
                    ..SolverOptions::default()
                };
                let rep = prob.solve(hp.k, &solver).map_err(wrap)?;
                (rep.v_star, Some(rep.objective_value))
            }
            Embedder::Cpca => (cpca_project(&xc, y.as_ref(), alpha, hp.k).map_err(wrap)?, None),
        };

        let q = v_star.project(&xc.select_rows(&unexplored)).map_err(wrap)?;
        let embedding = EmbeddingSet::new(q, unexplored.clone()).map_err(wrap)?;
        let cfg = DpgmmConfig {
            seed: restart_seed(dpgmm_cfg.seed, 2_000 + it),
            ..dpgmm_cfg.clone()
        };
        let model = dpgmm::fit(&embedding, &cfg).map_err(wrap)?;
        let acceptable = match dpgmm::posterior_params(&model, s) {
            Ok(a) => a,
            Err(Error::NoAcceptableCluster { .. }) => Vec::new(),
            Err(e) => return Err(wrap(e)),
        };

        let mut record = IterationRecord {
            index: it,
            alpha,
            v_star,
            objective_value,
            embedding,
            model,
            acceptable,
            distances: None,
            distinct_rows: Vec::new(),
            prior_rows: prior_rows.clone(),
            unexplored_rows: unexplored.clone(),
        };
        if record.acceptable.len() < 2 {
            info!(
                "iteration {it}: {} acceptable cluster(s) of size >= {s}; stopping",
                record.acceptable.len()
            );
            iterations.push(record);
            break TerminalReason::NoAcceptableCluster;
        }
        let d = distance_matrix(&record.acceptable).map_err(wrap)?;
        let picked = most_distinct(&d);
        record.distinct_rows = picked
            .iter()
            .map(|&c| {
                let comp = record.acceptable[c].component;
                record
                    .model
                    .members(comp)
                    .into_iter()
                    .map(|i| unexplored[i])
                    .collect()
            })
            .collect();
        record.distances = Some(d);

        let extracted: BTreeSet<usize> = record.distinct_rows.iter().flatten().copied().collect();
        info!(
            "iteration {it}: |Z|={} acceptable={} extracted {} rows",
            unexplored.len(),
            record.acceptable.len(),
            extracted.len()
        );
        prior_rows.extend(record.distinct_rows.iter().flatten().copied());
        unexplored.retain(|r| !extracted.contains(r));
        iterations.push(record);
    };
    Ok(ExplorationHistory {
        iterations,
        terminal_reason: terminal,
        n_rows: n,
    })
}

/// External prior samples stacked over the prior rows of `x`, centred jointly.
fn stack_prior<T: Scalar>(external: Option<&DMatrix<T>>, x: &DMatrix<T>, rows: &[usize]) -> Option<DMatrix<T>> {
    let from_rows = (!rows.is_empty()).then(|| x.select_rows(rows));
    let y = match (external, from_rows) {
        (None, None) => return None,
        (Some(e), None) => e.clone(),
        (None, Some(r)) => r,
        (Some(e), Some(r)) => {
            let mut y = DMatrix::zeros(e.nrows() + r.nrows(), e.ncols());
            y.rows_mut(0, e.nrows()).copy_from(e);
            y.rows_mut(e.nrows(), r.nrows()).copy_from(&r);
            y
        }
    };
    Some(center(&y).0)
}
