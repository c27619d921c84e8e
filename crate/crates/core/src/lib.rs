//! Informative low-dimensional projections that factor out prior knowledge.
//!
//! The embedding `V` minimises a contrastive reconstruction loss plus a
//! kurtosis projection-pursuit term over the Stiefel manifold. On top of the
//! solver sit a variational Dirichlet-process mixture, the iterative cluster
//! exploration loop, evaluation metrics and dataset loaders.
//!
//! Every numerical routine is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the common double-precision case.
//!
//! ```
//! use imapce::{data, manifold::SolverOptions, objectives::ImapceProblem};
//!
//! let ds = data::gen_synthetic::<f64>(&data::SyntheticSpec { n: 200, ..Default::default() });
//! let (x, _) = imapce::center(ds.values());
//! let problem = ImapceProblem::new(x, None, None, 0.0, 0.0).unwrap();
//! let report = problem.solve(2, &SolverOptions::default()).unwrap();
//! assert_eq!(report.v_star.k(), 2);
//! ```

pub mod data;
pub mod dataset;
pub mod dpgmm;
pub mod error;
pub mod exploration;
pub(crate) mod kmeans;
pub(crate) mod linalg;
pub mod manifold;
pub mod metrics;
pub mod objectives;
pub mod scalar;

pub use dataset::{
    center, resolve_prior, Centering, Dataset, EmbeddingSet, Hyperparams, PriorSpec,
    ProjectionMatrix, ResolvedPrior,
};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset64 = Dataset<f64>;
pub type PriorSpec64 = PriorSpec<f64>;
pub type Hyperparams64 = Hyperparams<f64>;
pub type ProjectionMatrix64 = ProjectionMatrix<f64>;
pub type EmbeddingSet64 = EmbeddingSet<f64>;
pub type ImapceProblem64 = objectives::ImapceProblem<f64>;
pub type ClusterModel64 = dpgmm::ClusterModel<f64>;
pub type ExplorationHistory64 = exploration::ExplorationHistory<f64>;

pub type Dataset32 = Dataset<f32>;
pub type ProjectionMatrix32 = ProjectionMatrix<f32>;
pub type ImapceProblem32 = objectives::ImapceProblem<f32>;
