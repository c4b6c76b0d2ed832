//! Influence functions of the Kaplan–Meier functionals, the closed-form
//! variance of weighted pseudo-observation contrasts, and the bootstrap.

mod bootstrap;
mod influence;
mod variance;

pub use bootstrap::{bootstrap, replicate_rng, resample_indices, BootstrapResult, MIN_REPLICATES};
pub use influence::{influence_pieces, InfluencePieces, KmInfluence};
pub use variance::{
    contrast_variance, group_influences, closed_form_variance, GroupInfluence, VarianceComponents, VarianceReport,
};
