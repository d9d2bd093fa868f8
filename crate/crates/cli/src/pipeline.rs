//! Data acquisition and the model runs shared by several subcommands.

use std::path::Path;

use log::info;
use migranet_core::choice::{
    build_choice_sets, fit_logit, ChoiceObservation, FeLevel, FitOptions, FitResult, ModelSpec, WageTerm,
};
use migranet_core::data::{
    load_agent_panel, load_amenities, load_industries, load_network_panel, load_survey, load_weather, load_world,
    AgentPanel, IndustryPanel, NetworkPanel, SurveyChoices, WeatherPanel,
};
use migranet_core::equilibrium::{
    baseline_choices, calibrate_scales, draw_shocks, economy_from_panel, solve_equilibrium, Economy,
    EquilibriumParams, EquilibriumState, Scales, ShockMatrix,
};
use migranet_core::geo::World;
use migranet_core::instruments::{
    amenities_from_survey, classify_shocks, control_function_fit, first_stage, instrument_rows, FirstStageResult,
    ShockType, SurveyAmenities,
};
use migranet_core::synth::{simulate_survey, simulate_with, ParameterSet};

use crate::config::{RunConfig, Source, SpecLabel};
use crate::error::{at, CliError, CliResult, Stage};

pub struct Data {
    pub world: World,
    pub agents: AgentPanel,
    pub networks: NetworkPanel,
    pub weather: WeatherPanel,
    pub industries: IndustryPanel,
    pub survey: Option<SurveyChoices>,
    /// Default parameters with the configured overrides; `amenities` is
    /// empty unless known (simulation truth or an input file).
    pub params: ParameterSet,
}

impl Data {
    pub fn load(cfg: &RunConfig) -> CliResult<Self> {
        match &cfg.source {
            Source::Dgp(d) => {
                info!("simulating {} agents in {} cities", d.n_agents, d.n_cities);
                let s = simulate_with(d, |p| cfg.parameters.apply(p)).map_err(at(Stage::Config, "simulate"))?;
                let survey = if cfg.survey_respondents > 0 {
                    Some(simulate_survey(&s.world, &s.params, d, cfg.survey_respondents).map_err(at(Stage::Config, "survey"))?)
                } else {
                    None
                };
                Ok(Data {
                    world: s.world,
                    agents: s.agents,
                    networks: s.networks,
                    weather: s.weather,
                    industries: s.industries,
                    survey,
                    params: s.params,
                })
            }
            Source::Inputs(i) => {
                let p = |name: &str| i.dir.join(name);
                let world = load_world(&p("cities.csv")).map_err(at(Stage::Data, "cities"))?;
                let agents = load_agent_panel(&p("agents.csv"), &p("locations.csv"), &world).map_err(at(Stage::Data, "agents"))?;
                let networks = load_network_panel(&p("networks.csv"), &world, &agents).map_err(at(Stage::Data, "networks"))?;
                let window = match i.weather_window {
                    Some(w) => Some(w),
                    None => pre_panel_window(&p("weather.csv"), &world, agents.first_year())?,
                };
                let weather = load_weather(&p("weather.csv"), &world, window).map_err(at(Stage::Data, "weather"))?;
                let industries = load_industries(&p("industries.csv"), &world).map_err(at(Stage::Data, "industries"))?;
                let survey = if p("survey.csv").exists() {
                    Some(load_survey(&p("survey.csv"), &world).map_err(at(Stage::Data, "survey"))?)
                } else {
                    None
                };
                let mut params = ParameterSet::table6(&world);
                params.amenities.clear();
                for name in ["amenities.csv", "true_amenities.csv"] {
                    if p(name).exists() {
                        params.amenities = load_amenities(&p(name), &world).map_err(at(Stage::Data, "amenities"))?;
                        break;
                    }
                }
                cfg.parameters.apply(&mut params);
                Ok(Data {
                    world,
                    agents,
                    networks,
                    weather,
                    industries,
                    survey,
                    params,
                })
            }
        }
    }

    pub fn survey(&self) -> CliResult<&SurveyChoices> {
        self.survey
            .as_ref()
            .ok_or_else(|| CliError::data("survey responses required (survey.csv, or survey_respondents > 0)"))
    }

    pub fn choice_sets(&self, cfg: &RunConfig) -> CliResult<Vec<ChoiceObservation>> {
        let sets = build_choice_sets(&self.agents, &self.networks, &self.world, cfg.n_extra, cfg.seed)
            .map_err(at(Stage::Data, "choice sets"))?;
        if sets.clamped > 0 {
            info!("{} choice sets had fewer than {} cities left to sample", sets.clamped, cfg.n_extra);
        }
        Ok(sets.observations)
    }

    pub fn survey_amenities(&self) -> CliResult<SurveyAmenities> {
        amenities_from_survey(self.survey()?, &self.world).map_err(at(Stage::Estimation, "survey amenities"))
    }

    pub fn first_stage(&self, obs: &[ChoiceObservation], shock: ShockType, cfg: &RunConfig) -> CliResult<FirstStageResult> {
        let ctx = match shock {
            ShockType::Drought => "drought first stage",
            ShockType::Heat => "heat first stage",
        };
        let shocks = classify_shocks(&self.weather, shock).map_err(at(Stage::Data, ctx))?;
        let rows = instrument_rows(obs, &self.networks, &shocks, &self.world);
        first_stage(&rows, cfg.first_stage, &self.world).map_err(at(Stage::Estimation, ctx))
    }

    /// Amenities for the equilibrium: known values, else survey estimates.
    pub fn equilibrium_amenities(&self) -> CliResult<Vec<f64>> {
        if !self.params.amenities.is_empty() {
            return Ok(self.params.amenities.clone());
        }
        if self.survey.is_some() {
            info!("no amenity file; using survey estimates");
            return Ok(self.survey_amenities()?.amenity);
        }
        Err(CliError::data("equilibrium needs amenities.csv, true_amenities.csv or survey.csv"))
    }
}

/// Years of the weather file before the panel, when there are enough of
/// them to form a long-run distribution.
fn pre_panel_window(path: &Path, world: &World, first_year: i32) -> CliResult<Option<(i32, i32)>> {
    let all = load_weather(path, world, None).map_err(at(Stage::Data, "weather"))?;
    let lo = all.window.0;
    Ok((first_year - lo >= migranet_core::instruments::MIN_WINDOW_YEARS as i32).then_some((lo, first_year - 1)))
}

pub struct SpecFit {
    pub fit: FitResult,
    /// Observations the fit used (with residuals for control functions).
    pub observations: Vec<ChoiceObservation>,
    pub first_stage: Option<FirstStageResult>,
}

/// One specification of the estimate grid; `interactions` adds the
/// distance-by-network terms.
pub fn fit_spec(data: &Data, obs: &[ChoiceObservation], label: SpecLabel, interactions: bool, cfg: &RunConfig) -> CliResult<SpecFit> {
    info!("fitting {}", label.label());
    let opts = FitOptions::default();
    let ctx = label.label();
    let plain = |fe: FeLevel| {
        let mut s = ModelSpec::new(fe);
        s.interactions = interactions;
        s
    };
    let run = |spec: &ModelSpec| fit_logit(obs, spec, &data.world, &opts).map_err(at(Stage::Estimation, ctx));
    let done = |fit| SpecFit {
        fit,
        observations: obs.to_vec(),
        first_stage: None,
    };
    match label {
        SpecLabel::NoFe => Ok(done(run(&plain(FeLevel::None))?)),
        SpecLabel::DestFe => Ok(done(run(&plain(FeLevel::Destination))?)),
        SpecLabel::DestYearFe => Ok(done(run(&plain(FeLevel::DestinationYear))?)),
        SpecLabel::Bct => Ok(done(run(&plain(FeLevel::OriginDestinationYear))?)),
        SpecLabel::DroughtIv | SpecLabel::HeatIv => {
            let shock = if label == SpecLabel::DroughtIv { ShockType::Drought } else { ShockType::Heat };
            let fs = data.first_stage(obs, shock, cfg)?;
            let fit = control_function_fit(obs, &fs, &plain(FeLevel::Destination), &data.world, &opts)
                .map_err(at(Stage::Estimation, ctx))?;
            Ok(SpecFit {
                fit,
                observations: migranet_core::instruments::attach_residuals(obs, &fs, &data.world),
                first_stage: Some(fs),
            })
        }
        SpecLabel::Survey => {
            let am = data.survey_amenities()?;
            let mut spec = plain(FeLevel::None);
            spec.amenity_offsets = Some(am.amenity);
            spec.wage = WageTerm::Estimated {
                log_wage: data.world.log_wages(),
            };
            Ok(done(run(&spec)?))
        }
    }
}

pub struct Equilibrium {
    pub economy: Economy,
    pub shocks: ShockMatrix,
    pub baseline: EquilibriumState,
}

/// Agents at their last-year residence, scales calibrated so that observed
/// wages and amenities with the model's own choices are an equilibrium,
/// and the baseline solved from there.
pub fn equilibrium(data: &Data, cfg: &RunConfig) -> CliResult<Equilibrium> {
    let amenities = data.equilibrium_amenities()?;
    let mut params = data.params.clone();
    params.amenities = amenities.clone();
    let eq = EquilibriumParams::from_parameters(&params);
    eq.validate().map_err(at(Stage::Config, "equilibrium parameters"))?;
    let j = data.world.len();
    let placeholder = Scales {
        productivity: vec![1.0; j],
        amenity: vec![1.0; j],
    };
    let mut economy = economy_from_panel(&data.agents, &data.networks, &data.world, data.agents.last_year(), eq, placeholder)
        .map_err(at(Stage::Data, "economy"))?;
    let shocks = draw_shocks(economy.agents.len(), j, cfg.seed);
    let wages: Vec<f64> = data.world.cities().iter().map(|c| c.avg_wage).collect();
    let lw: Vec<f64> = wages.iter().map(|w| w.ln()).collect();
    let (_, labor) = baseline_choices(&data.world, &economy, &shocks, &lw, &amenities).map_err(at(Stage::Equilibrium, "baseline"))?;
    economy.scales =
        calibrate_scales(&wages, &amenities, &labor, &eq, &cfg.equilibrium).map_err(at(Stage::Equilibrium, "calibration"))?;
    info!("solving baseline equilibrium");
    let baseline = solve_equilibrium(&data.world, &economy, &shocks, (&wages, &amenities), &cfg.equilibrium)
        .map_err(at(Stage::Equilibrium, "baseline"))?;
    Ok(Equilibrium {
        economy,
        shocks,
        baseline,
    })
}
