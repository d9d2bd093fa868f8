use serde::{Deserialize, Serialize};

use crate::geo::CityId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeLevel {
    None,
    Destination,
    DestinationYear,
    /// Origin x destination x year cells; absorbs the pure distance terms.
    OriginDestinationYear,
}

/// Upper bound on origin x destination x year cells.
pub const MAX_ODY_CELLS: usize = 250_000;

#[derive(Debug, Clone, PartialEq)]
pub enum WageTerm {
    None,
    /// Estimate a coefficient on the destination log wage (by city index).
    Estimated { log_wage: Vec<f64> },
    /// Add `beta * log_wage` as a fixed offset.
    Fixed { beta: f64, log_wage: Vec<f64> },
}

/// Network effect that varies with a city covariate through a running
/// variable and a cutoff: gamma_j = gamma_0 + gamma_1 (r_j - c) + gamma_2 1{r_j > c}.
/// Non-origin alternatives with |r_j - c| > bandwidth are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct RdDesign {
    pub running: Vec<f64>,
    pub cutoff: f64,
    pub bandwidth: f64,
}

pub const DEFAULT_RD_BANDWIDTH: f64 = 3.3;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub fe: FeLevel,
    pub network: bool,
    pub interactions: bool,
    /// Named city covariates (by city index) interacted with log friends.
    pub heterogeneity: Vec<(String, Vec<f64>)>,
    pub rd: Option<RdDesign>,
    pub control_function: bool,
    /// Fixed amenity offsets by city index.
    pub amenity_offsets: Option<Vec<f64>>,
    pub wage: WageTerm,
}

impl ModelSpec {
    pub fn new(fe: FeLevel) -> Self {
        ModelSpec {
            fe,
            network: true,
            interactions: false,
            heterogeneity: Vec::new(),
            rd: None,
            control_function: false,
            amenity_offsets: None,
            wage: WageTerm::None,
        }
    }

    pub fn with_interactions(mut self) -> Self {
        self.interactions = true;
        self
    }
}

/// Identifies one fixed-effect coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeKey {
    Destination(CityId),
    DestinationYear(CityId, i32),
    OriginDestinationYear(CityId, CityId, i32),
}

impl FeKey {
    pub fn label(&self) -> String {
        match self {
            FeKey::Destination(j) => format!("xi_{j}"),
            FeKey::DestinationYear(j, t) => format!("xi_{j}_{t}"),
            FeKey::OriginDestinationYear(o, j, t) => format!("omega_{o}_{j}_{t}"),
        }
    }

    pub fn destination(&self) -> CityId {
        match *self {
            FeKey::Destination(j) | FeKey::DestinationYear(j, _) | FeKey::OriginDestinationYear(_, j, _) => j,
        }
    }
}

pub mod names {
    pub const SAME_CITY: &str = "same_city";
    pub const LOG_FRIENDS: &str = "log_friends";
    pub const LOG_DISTANCE: &str = "log_distance";
    pub const LOG_DISTANCE_OOS: &str = "log_distance_x_out_of_state";
    pub const SAME_CITY_FRIENDS: &str = "same_city_x_log_friends";
    pub const LOG_DISTANCE_FRIENDS: &str = "log_distance_x_log_friends";
    pub const LOG_DISTANCE_OOS_FRIENDS: &str = "log_distance_x_out_of_state_x_log_friends";
    pub const LOG_WAGE: &str = "log_wage";
    pub const CF_RESIDUAL: &str = "cf_residual";
    pub const RD_RUNNING: &str = "log_friends_x_running";
    pub const RD_ABOVE: &str = "log_friends_x_above_cutoff";
}
