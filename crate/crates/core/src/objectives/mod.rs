//! The IMAPCE objective, the kurtosis index and the cPCA baseline.

mod cpca;
mod imapce;
mod kurtosis;

pub use cpca::{
    cpca_alpha_select, cpca_contrast, cpca_project, default_alphas, reconstruction_error,
    spectral_clustering, subspace_affinity, AlphaSelection,
};
pub use imapce::{
    embed_rows, imapce_cost, imapce_euclid_gradient, ImapceProblem, KurtosisNormalization,
    ReconstructionScaling,
};
pub use kurtosis::{kurtosis_index, multivariate_kurtosis};
