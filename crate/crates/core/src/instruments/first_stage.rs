use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;

use super::shocks::{nearest_shocked_city, ShockSet};
use crate::choice::{fit_logit, ChoiceObservation, FitOptions, FitResult, ModelSpec};
use crate::choice::{log_distance, log_friends};
use crate::data::{AgentId, NetworkPanel};
use crate::error::{Error, Result};
use crate::geo::{CityId, World};
use crate::linear::{design, fe_regress, FeGroup, RegressionResult, Vcov};
use crate::rng::{substream, Stream};

/// One (agent, year, destination) row of the instrument design.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentRow {
    pub agent: AgentId,
    pub year: i32,
    /// Destination city index.
    pub city: usize,
    /// Index of the observation this row came from.
    pub observation: usize,
    /// Nearest city shocked two years earlier, and the distance to it.
    pub shocked_city: usize,
    pub distance_km: f64,
    /// Friends in the shocked city two years earlier.
    pub friends_at_shock: u32,
    /// Outcome: log(1 + friends in the destination last year).
    pub log_friends: f64,
    pub same_city: bool,
    pub log_distance: f64,
    pub out_of_state: bool,
}

impl InstrumentRow {
    pub fn has_friend(&self) -> bool {
        self.friends_at_shock > 0
    }

    pub fn at_shock(&self) -> bool {
        self.distance_km == 0.0
    }

    /// log(1 + friends at the shock), zero when the destination is itself
    /// the shocked city: there the count is the destination's own lagged
    /// network.
    pub fn instrument(&self) -> f64 {
        if self.at_shock() {
            0.0
        } else {
            log_friends(self.friends_at_shock)
        }
    }

    /// `log(max(D, 1 km))` to the shocked city, 0 at the shocked city.
    pub fn log_distance_to_shock(&self) -> f64 {
        log_distance(self.distance_km, self.at_shock())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstrumentRows {
    pub rows: Vec<InstrumentRow>,
    /// Observations dropped because no city was shocked two years earlier.
    pub dropped_no_shock: usize,
    /// Observations dropped because networks two years earlier are not in
    /// the panel.
    pub dropped_no_history: usize,
}

/// Builds instrument rows for every alternative of every observation whose
/// shock year (t - 2) has both a nonempty shock set and network data.
pub fn instrument_rows(observations: &[ChoiceObservation], networks: &NetworkPanel, shocks: &ShockSet, world: &World) -> InstrumentRows {
    let years = networks.years();
    let mut nearest: HashMap<(usize, i32), Option<(usize, f64)>> = HashMap::new();
    let mut out = InstrumentRows::default();
    for (oi, o) in observations.iter().enumerate() {
        let t2 = o.year - 2;
        if !years.contains(&t2) {
            out.dropped_no_history += 1;
            continue;
        }
        if shocks.cities_in(t2).is_empty() {
            out.dropped_no_shock += 1;
            continue;
        }
        for a in &o.alternatives {
            let (w, d) = nearest
                .entry((a.city, t2))
                .or_insert_with(|| nearest_shocked_city(a.city, t2, shocks, world))
                .expect("shock set is nonempty");
            out.rows.push(InstrumentRow {
                agent: o.agent,
                year: o.year,
                city: a.city,
                observation: oi,
                shocked_city: w,
                distance_km: d,
                friends_at_shock: networks.count(o.agent, t2, world.city(w).id),
                log_friends: a.log_friends,
                same_city: a.same_city,
                log_distance: a.log_distance,
                out_of_state: a.out_of_state,
            });
        }
    }
    out
}

/// Shuffles the shocked-city friend counts across rows (placebo).
pub fn permute_instrument(rows: &[InstrumentRow], seed: u64, replication: u64) -> Vec<InstrumentRow> {
    let mut z: Vec<u32> = rows.iter().map(|r| r.friends_at_shock).collect();
    z.shuffle(&mut substream(seed, Stream::Permutation, replication, 0));
    rows.iter()
        .zip(z)
        .map(|(r, f)| InstrumentRow {
            friends_at_shock: f,
            ..r.clone()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstStageForm {
    /// Has-friend indicator, shocked-city indicator, log distance to the
    /// shock and its interaction with the indicator.
    Simplified,
    /// log(1 + friends at the shock) with a flexible distance-to-shock
    /// control (indicator, log distance, its square).
    Full,
}

pub mod first_stage_names {
    pub const HAS_FRIEND: &str = "has_friend_at_shock";
    pub const LOG_FRIENDS_AT_SHOCK: &str = "log_friends_at_shock";
    pub const AT_SHOCK: &str = "at_shock";
    pub const LOG_DISTANCE_TO_SHOCK: &str = "log_distance_to_shock";
    pub const LOG_DISTANCE_TO_SHOCK_SQ: &str = "log_distance_to_shock_sq";
    pub const HAS_FRIEND_X_LOG_DISTANCE: &str = "has_friend_x_log_distance_to_shock";
}

#[derive(Debug, Clone)]
pub struct FirstStageResult {
    pub form: FirstStageForm,
    pub regression: RegressionResult,
    /// Name of the excluded instrument (the theta_1 coefficient).
    pub instrument: String,
    pub theta1: f64,
    pub theta1_se: f64,
    /// Residual by (agent, year, destination id).
    pub residuals: BTreeMap<(AgentId, i32, CityId), f64>,
    pub n_rows: usize,
    pub dropped_no_shock: usize,
    pub dropped_no_history: usize,
}

impl FirstStageResult {
    pub fn theta1_t(&self) -> f64 {
        self.theta1 / self.theta1_se
    }
}

/// OLS of log(1 + friends in j last year) on the instrument terms, the
/// distance-to-shock controls and the main-model distance terms, absorbing
/// destination and agent-by-year effects; clustered by (agent, year).
pub fn first_stage(rows: &InstrumentRows, form: FirstStageForm, world: &World) -> Result<FirstStageResult> {
    use first_stage_names as n;
    let r = &rows.rows;
    if r.is_empty() {
        return Err(Error::invalid("first stage has no rows (no shocked cities two years before any observation)"));
    }
    let b = |x: bool| f64::from(u8::from(x));
    let mut cols: Vec<(&str, Vec<f64>)> = match form {
        FirstStageForm::Simplified => vec![
            (n::HAS_FRIEND, r.iter().map(|x| b(x.has_friend())).collect()),
            (n::AT_SHOCK, r.iter().map(|x| b(x.at_shock())).collect()),
            (n::LOG_DISTANCE_TO_SHOCK, r.iter().map(InstrumentRow::log_distance_to_shock).collect()),
            (
                n::HAS_FRIEND_X_LOG_DISTANCE,
                r.iter().map(|x| b(x.has_friend()) * x.log_distance_to_shock()).collect(),
            ),
        ],
        FirstStageForm::Full => vec![
            (n::LOG_FRIENDS_AT_SHOCK, r.iter().map(InstrumentRow::instrument).collect()),
            (n::AT_SHOCK, r.iter().map(|x| b(x.at_shock())).collect()),
            (n::LOG_DISTANCE_TO_SHOCK, r.iter().map(InstrumentRow::log_distance_to_shock).collect()),
            (
                n::LOG_DISTANCE_TO_SHOCK_SQ,
                r.iter().map(|x| x.log_distance_to_shock().powi(2)).collect(),
            ),
        ],
    };
    use crate::choice::names as m;
    cols.push((m::SAME_CITY, r.iter().map(|x| b(x.same_city)).collect()));
    cols.push((m::LOG_DISTANCE, r.iter().map(|x| x.log_distance).collect()));
    cols.push((m::LOG_DISTANCE_OOS, r.iter().map(|x| x.log_distance * b(x.out_of_state)).collect()));
    let instrument = cols[0].0.to_string();
    let names: Vec<String> = cols.iter().map(|(k, _)| k.to_string()).collect();
    let x = design(&cols.into_iter().map(|(_, v)| v).collect::<Vec<_>>());
    let y: Vec<f64> = r.iter().map(|x| x.log_friends).collect();
    let dest = FeGroup::from_keys(&r.iter().map(|x| x.city).collect::<Vec<_>>());
    let ay: Vec<(AgentId, i32)> = r.iter().map(|x| (x.agent, x.year)).collect();
    let agent_year = FeGroup::from_keys(&ay);
    let clusters: Vec<u64> = agent_year.ids.iter().map(|&i| u64::from(i)).collect();
    let reg = fe_regress(&y, &x, &names, &[dest, agent_year], Vcov::Cluster(&clusters))?;
    let residuals = r
        .iter()
        .zip(&reg.residuals)
        .map(|(row, e)| ((row.agent, row.year, world.city(row.city).id), *e))
        .collect();
    Ok(FirstStageResult {
        form,
        theta1: reg.coef[0],
        theta1_se: reg.se[0],
        instrument,
        regression: reg,
        residuals,
        n_rows: r.len(),
        dropped_no_shock: rows.dropped_no_shock,
        dropped_no_history: rows.dropped_no_history,
    })
}

/// Copies of the observations that have first-stage residuals, with the
/// residual attached to every alternative.
pub fn attach_residuals(observations: &[ChoiceObservation], fs: &FirstStageResult, world: &World) -> Vec<ChoiceObservation> {
    observations
        .iter()
        .filter_map(|o| {
            let mut o = o.clone();
            for a in &mut o.alternatives {
                a.cf_residual = Some(*fs.residuals.get(&(o.agent, o.year, world.city(a.city).id))?);
            }
            Some(o)
        })
        .collect()
}

/// Main model with the first-stage residual as an extra covariate (control
/// function). The coefficient on log friends is the instrumented effect.
/// Standard errors treat the residual as data.
pub fn control_function_fit(
    observations: &[ChoiceObservation],
    fs: &FirstStageResult,
    spec: &ModelSpec,
    world: &World,
    options: &FitOptions,
) -> Result<FitResult> {
    let obs = attach_residuals(observations, fs, world);
    if obs.is_empty() {
        return Err(Error::invalid("no observation has first-stage residuals"));
    }
    let mut spec = spec.clone();
    spec.control_function = true;
    fit_logit(&obs, &spec, world, options)
}
