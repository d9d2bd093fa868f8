//! Synthetic worlds and forward simulation of the migration model; the
//! ground truth for every estimator test.

mod event;
mod population;
mod weather;
mod world;

use serde::{Deserialize, Serialize};

pub use event::{simulate_event_panel, EventDgp};
pub use population::{draw_choice, generate_agents, simulate_panel, simulate_survey, taste_vector};
pub use weather::simulate_weather;
pub use world::{generate_world, simulate_industries};

use crate::choice::Coefficients;
use crate::data::{AgentPanel, IndustryPanel, NetworkPanel, WeatherPanel};
use crate::error::{Error, Result};
use crate::geo::World;

/// Knobs of the data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub seed: u64,
    pub n_cities: usize,
    pub n_states: usize,
    /// Districts nest in states; each city belongs to one district.
    pub n_districts: usize,
    pub n_agents: usize,
    pub n_years: usize,
    pub first_year: i32,
    pub lat_range: (f64, f64),
    pub lon_range: (f64, f64),
    pub population_log_mean: f64,
    pub population_log_sd: f64,
    pub log_wage_mean: f64,
    pub log_wage_sd: f64,
    /// Share of log-wage variance explained by the industry shift-share.
    pub bartik_share: f64,
    pub n_industries: usize,
    pub industry_years: (i32, i32),
    pub amenity_sd: f64,
    /// Correlation of amenities with the non-industry wage component.
    pub rho_aw: f64,
    /// Strength with which initial friends are tilted toward cities the
    /// agent (and everyone) values for unobserved reasons.
    pub rho_na: f64,
    /// Scale of the tilt exponent when `rho_na > 0`.
    pub network_tilt: f64,
    /// Standard deviation of persistent agent-by-city tastes in utility.
    pub taste_sd: f64,
    pub network_mean: f64,
    /// Share of each agent's initial friends located at the hometown.
    pub origin_share: f64,
    /// Distance decay exponent of the initial friend allocation.
    pub gravity_exponent: f64,
    /// New local ties after a move, as a share of the current total.
    pub accrual_rate: f64,
    /// Probability that a friend living in a city shocked last year has
    /// relocated to a nearby city.
    pub push_rate: f64,
    /// Distance scale (km) of the relocation kernel.
    pub push_km: f64,
    pub drought_prob: f64,
    pub heat_prob: f64,
    /// Coefficient of variation of annual rainfall; 0 means constant.
    pub rain_cv: f64,
    pub hot_days_sd: f64,
    pub weather_window_years: usize,
    /// Utility penalty for staying in an origin shocked last year.
    pub weather_penalty: f64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            seed: 20_240_501,
            n_cities: 40,
            n_states: 8,
            n_districts: 40,
            n_agents: 5_000,
            n_years: 4,
            first_year: 2014,
            lat_range: (10.0, 30.0),
            lon_range: (70.0, 88.0),
            population_log_mean: 12.0,
            population_log_sd: 1.0,
            log_wage_mean: 9328.19f64.ln(),
            log_wage_sd: 0.35,
            bartik_share: 0.6,
            n_industries: 8,
            industry_years: (1999, 2016),
            amenity_sd: 2.0,
            rho_aw: 0.0,
            rho_na: 0.0,
            network_tilt: 1.0,
            taste_sd: 0.0,
            network_mean: 80.0,
            origin_share: 0.8,
            gravity_exponent: 1.0,
            accrual_rate: 0.05,
            push_rate: 0.3,
            push_km: 150.0,
            drought_prob: 0.15,
            heat_prob: 0.15,
            rain_cv: 0.25,
            hot_days_sd: 12.0,
            weather_window_years: 30,
            weather_penalty: 0.5,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.n_cities < 4 {
            return bad(format!("n_cities must be >= 4, got {}", self.n_cities));
        }
        if self.n_states == 0 || self.n_states > self.n_cities {
            return bad(format!("cannot partition {} cities into {} states", self.n_cities, self.n_states));
        }
        if self.n_districts < self.n_states || self.n_districts > self.n_cities {
            return bad(format!(
                "n_districts must lie in [n_states, n_cities] = [{}, {}], got {}",
                self.n_states, self.n_cities, self.n_districts
            ));
        }
        if self.n_years < 3 {
            return bad(format!("n_years must be >= 3, got {}", self.n_years));
        }
        if self.n_agents == 0 || self.n_industries == 0 {
            return bad("n_agents and n_industries must be positive".into());
        }
        for (name, p) in [
            ("origin_share", self.origin_share),
            ("accrual_rate", self.accrual_rate),
            ("push_rate", self.push_rate),
            ("drought_prob", self.drought_prob),
            ("heat_prob", self.heat_prob),
            ("bartik_share", self.bartik_share),
            ("rho_na", self.rho_na),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(-1.0..=1.0).contains(&self.rho_aw) {
            return bad(format!("rho_aw must lie in [-1, 1], got {}", self.rho_aw));
        }
        for (name, v) in [
            ("amenity_sd", self.amenity_sd),
            ("taste_sd", self.taste_sd),
            ("log_wage_sd", self.log_wage_sd),
            ("population_log_sd", self.population_log_sd),
            ("rain_cv", self.rain_cv),
            ("hot_days_sd", self.hot_days_sd),
            ("gravity_exponent", self.gravity_exponent),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.network_mean >= 1.0) || !(self.push_km > 0.0) {
            return bad("network_mean must be >= 1 and push_km > 0".into());
        }
        if self.weather_window_years < crate::instruments::MIN_WINDOW_YEARS {
            return bad(format!("weather_window_years must be >= {}", crate::instruments::MIN_WINDOW_YEARS));
        }
        if self.industry_years.0 >= self.industry_years.1 {
            return bad("industry base year must precede the end year".into());
        }
        if self.lat_range.0 >= self.lat_range.1
            || self.lon_range.0 >= self.lon_range.1
            || self.lat_range.0 < -90.0
            || self.lat_range.1 > 90.0
            || self.lon_range.0 < -180.0
            || self.lon_range.1 > 180.0
        {
            return bad("invalid bounding box".into());
        }
        Ok(())
    }

    pub fn last_year(&self) -> i32 {
        self.first_year + self.n_years as i32 - 1
    }
}

/// Structural parameters of utility and of the spatial equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSet {
    /// Wage elasticity of utility.
    pub beta: f64,
    #[serde(flatten)]
    pub coef: Coefficients,
    /// Amenity by city index.
    #[serde(default)]
    pub amenities: Vec<f64>,
    pub phi: f64,
    pub psi: f64,
    pub theta: f64,
}

impl ParameterSet {
    /// Defaults of the spatial-equilibrium calibration, with amenities
    /// taken from the world.
    pub fn table6(world: &World) -> Self {
        ParameterSet {
            beta: 1.11,
            coef: Coefficients::TABLE6,
            amenities: world.amenities(),
            phi: 0.10,
            psi: 0.02,
            theta: 0.02,
        }
    }

    pub fn validate(&self, world: &World) -> Result<()> {
        let c = &self.coef;
        let all = [self.beta, c.gamma, c.stay, c.delta_v, c.delta_vs, c.delta_fn, c.delta_vn, c.delta_vsn, self.phi, self.psi, self.theta];
        if all.iter().chain(&self.amenities).any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        if self.amenities.len() != world.len() {
            return Err(Error::invalid(format!(
                "{} amenities for {} cities",
                self.amenities.len(),
                world.len()
            )));
        }
        Ok(())
    }

    /// City-level utility `beta * log Y_j + amenity_j` by city index.
    pub fn city_values(&self, world: &World) -> Vec<f64> {
        world
            .log_wages()
            .iter()
            .zip(&self.amenities)
            .map(|(ly, a)| self.beta * ly + a)
            .collect()
    }
}

/// A complete simulated data set.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub world: World,
    pub params: ParameterSet,
    pub agents: AgentPanel,
    pub networks: NetworkPanel,
    pub weather: WeatherPanel,
    pub industries: IndustryPanel,
}

/// World, weather, initial agents and the forward-simulated panel. When
/// `coef` is `None` the default coefficients are used.
pub fn simulate_all(config: &DgpConfig, coef: Option<Coefficients>) -> Result<Synthetic> {
    simulate_with(config, |p| {
        if let Some(c) = coef {
            p.coef = c;
        }
    })
}

/// As `simulate_all`, with the default parameters edited by `adjust` once
/// the world (and so the amenities) exists.
pub fn simulate_with(config: &DgpConfig, adjust: impl FnOnce(&mut ParameterSet)) -> Result<Synthetic> {
    config.validate()?;
    let world = generate_world(config)?;
    let mut params = ParameterSet::table6(&world);
    adjust(&mut params);
    params.validate(&world)?;
    let industries = simulate_industries(&world, config)?;
    let weather = simulate_weather(&world, config)?;
    let (a0, n0) = generate_agents(&world, config)?;
    let (agents, networks) = simulate_panel(&world, &a0, &n0, &params, &weather, config)?;
    Ok(Synthetic {
        world,
        params,
        agents,
        networks,
        weather,
        industries,
    })
}

/// Share of agent-years (after the first year) spent in a different city
/// than the year before.
pub fn migration_rate(panel: &AgentPanel) -> f64 {
    let mut moves = 0usize;
    let mut total = 0usize;
    for a in panel.agents() {
        for w in a.residences.windows(2) {
            total += 1;
            moves += usize::from(w[0] != w[1]);
        }
    }
    moves as f64 / total.max(1) as f64
}
