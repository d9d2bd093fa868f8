//! Conditional-logit migration model: choice sets with sampled
//! alternatives, likelihood, estimation, and derived quantities.

mod fit;
mod model;
mod mwtp;
mod observation;
mod spec;
mod utility;

pub use fit::{fit_logit, fit_model, FeEstimate, FitOptions, FitResult};
pub use model::{ChoiceModel, ObsMeta, PruneReport};
pub use mwtp::{
    coefficients_of, gravity_decomposition, gravity_from_rows, implied_distance_coefficient, marginal_distance_curve, moving_cost_table,
    mwtp_distance, mwtp_wages, GravityDecomposition, GravityTerm, MovingCostRow,
};
pub use observation::{build_choice_sets, exhaustive_choice_sets, systematic_utility, Alternative, ChoiceObservation, ChoiceSets};
pub use spec::{names, FeKey, FeLevel, ModelSpec, RdDesign, WageTerm, DEFAULT_RD_BANDWIDTH, MAX_ODY_CELLS};
pub use utility::{log_distance, log_friends, AltCovariates, Coefficients, DISTANCE_FLOOR_KM};
