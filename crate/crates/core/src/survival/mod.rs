//! Nonparametric survival primitives and the Cox model.

mod cox;
mod km;

pub use cox::{
    censoring_survival, cox_fit, cox_fit_weighted, partial_likelihood, CensoringModel, CensoringSpec, CoxFit,
    PartialLikelihood,
};
pub use km::{km_eval_left, km_fit, rmst, KmFit};
