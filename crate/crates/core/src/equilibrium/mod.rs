//! Static spatial equilibrium with agglomeration and congestion, scenario
//! transforms and outcome reports.

mod report;
mod scenario;
mod solve;

pub use report::{outcomes_report, scenario_outcomes, GroupOutcomes, Metric, OutcomeReport, OutcomeRow, METRICS};
pub use scenario::{apply_counterfactual, top_cities, Scenario, DEFAULT_TOP_SHARE};
pub use solve::{
    baseline_choices, calibrate_scales, draw_shocks, economy_from_panel, solve_equilibrium, EqAgent, Economy,
    EquilibriumOptions, EquilibriumParams, EquilibriumState, Scales, ShockMatrix,
};
