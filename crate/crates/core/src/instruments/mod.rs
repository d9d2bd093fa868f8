//! Identification: weather shocks and the nearest-shocked-city instrument,
//! first stage and control function, survey amenities, shift-share
//! instruments and the two-step wage elasticity.

mod bartik;
mod first_stage;
mod shocks;
mod survey;
mod wage;

pub use bartik::{bartik, BartikVector};
pub use first_stage::{
    attach_residuals, control_function_fit, first_stage, first_stage_names, instrument_rows, permute_instrument,
    FirstStageForm, FirstStageResult, InstrumentRow, InstrumentRows,
};
pub use shocks::{classify_shocks, nearest_shocked_city, ShockSet, ShockType, MIN_WINDOW_YEARS};
pub use survey::{amenities_from_survey, SurveyAmenities};
pub use wage::{destination_effects, destination_frequency, wage_elasticity_two_step, WageElasticity, WageMode};
