use super::fit::FitResult;
use super::observation::ChoiceObservation;
use super::spec::{names, FeKey};
use super::utility::Coefficients;
use crate::data::AgentId;
use crate::error::{Error, Result};
use crate::geo::CityId;
use crate::linear::{design, ols, RegressionResult, Vcov};

/// Network and distance coefficients of a fit; absent terms are zero.
pub fn coefficients_of(fit: &FitResult) -> Coefficients {
    let c = |n: &str| fit.coef_of(n).unwrap_or(0.0);
    Coefficients {
        gamma: c(names::LOG_FRIENDS),
        stay: c(names::SAME_CITY),
        delta_v: c(names::LOG_DISTANCE),
        delta_vs: c(names::LOG_DISTANCE_OOS),
        delta_fn: c(names::SAME_CITY_FRIENDS),
        delta_vn: c(names::LOG_DISTANCE_FRIENDS),
        delta_vsn: c(names::LOG_DISTANCE_OOS_FRIENDS),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MovingCostRow {
    pub agent: AgentId,
    pub year: i32,
    pub city: CityId,
    pub log_friends: f64,
    pub same_city: bool,
    pub log_distance: f64,
    pub out_of_state: bool,
    /// Model-implied cost of moving: every term involving distance or the
    /// same-city flag, or the origin x destination x year effect.
    pub mc: f64,
    /// `mc` plus the network level term.
    pub mc_network: f64,
}

/// One row per observation-alternative. Under origin x destination x year
/// effects the cost is the estimated cell effect; alternatives whose cell
/// was pruned are skipped.
pub fn moving_cost_table(fit: &FitResult, observations: &[ChoiceObservation]) -> Vec<MovingCostRow> {
    let c = coefficients_of(fit);
    let bct = fit.fe.iter().any(|e| matches!(e.key, FeKey::OriginDestinationYear(..)));
    let mut rows = Vec::new();
    for o in observations {
        for a in &o.alternatives {
            let x = a.covariates();
            let mc = if bct {
                let key = FeKey::OriginDestinationYear(fit.city_ids[o.origin], fit.city_ids[a.city], o.year);
                match fit.fe_value(&key) {
                    Some(v) => v + (c.network_distance_utility(&x) - c.gamma * x.log_friends),
                    None => continue,
                }
            } else {
                c.network_distance_utility(&x) - c.gamma * x.log_friends
            };
            rows.push(MovingCostRow {
                agent: o.agent,
                year: o.year,
                city: fit.city_ids[a.city],
                log_friends: x.log_friends,
                same_city: x.same_city,
                log_distance: x.log_distance,
                out_of_state: x.out_of_state,
                mc,
                mc_network: mc + c.gamma * x.log_friends,
            });
        }
    }
    rows
}

fn fit_ols(y: &[f64], cols: Vec<(&str, Vec<f64>)>) -> Result<RegressionResult> {
    let n = y.len();
    let mut names_v = vec!["intercept".to_string()];
    let mut data = vec![vec![1.0; n]];
    for (name, v) in cols {
        names_v.push(name.to_string());
        data.push(v);
    }
    ols(y, &design(&data), &names_v, Vcov::Classical)
}

/// Implied distance coefficient: OLS (with intercept) of the moving cost on
/// log distance over rows with a positive distance.
pub fn implied_distance_coefficient(rows: &[MovingCostRow]) -> Result<f64> {
    let movers: Vec<&MovingCostRow> = rows.iter().filter(|r| !r.same_city).collect();
    if movers.len() < 3 {
        return Err(Error::invalid("too few distinct-city alternatives to regress moving costs on distance"));
    }
    let y: Vec<f64> = movers.iter().map(|r| r.mc).collect();
    let ld: Vec<f64> = movers.iter().map(|r| r.log_distance).collect();
    Ok(fit_ols(&y, vec![(names::LOG_DISTANCE, ld)])?.coef[1])
}

/// Willingness to pay for networks in distance units: gamma over the
/// magnitude of the implied log-distance coefficient.
pub fn mwtp_distance(fit: &FitResult, observations: &[ChoiceObservation]) -> Result<f64> {
    let gamma = fit
        .coef_of(names::LOG_FRIENDS)
        .ok_or_else(|| Error::invalid("fit has no network coefficient"))?;
    let delta = implied_distance_coefficient(&moving_cost_table(fit, observations))?;
    if delta.abs() < 1e-12 {
        return Err(Error::invalid("implied distance coefficient is zero"));
    }
    Ok(gamma / delta.abs())
}

/// Willingness to pay for networks in wage units.
pub fn mwtp_wages(gamma: f64, beta: f64) -> Result<f64> {
    if !gamma.is_finite() || !beta.is_finite() || beta.abs() < 1e-12 {
        return Err(Error::invalid(format!("cannot divide gamma {gamma} by wage coefficient {beta}")));
    }
    Ok(gamma / beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GravityTerm {
    pub name: String,
    pub full: f64,
    /// Network-inclusive regression.
    pub ni: f64,
    /// No-network regression.
    pub nn: f64,
    /// (|nn| - |full|) / |nn|
    pub reduction_full: f64,
    /// (|nn| - |ni|) / |nn|
    pub reduction_ni: f64,
}

#[derive(Debug, Clone)]
pub struct GravityDecomposition {
    pub gamma_full: f64,
    pub gamma_ni: f64,
    pub terms: Vec<GravityTerm>,
    pub ni: RegressionResult,
    pub nn: RegressionResult,
}

impl GravityDecomposition {
    pub fn term(&self, name: &str) -> Option<&GravityTerm> {
        self.terms.iter().find(|t| t.name == name)
    }
}

/// Regresses the full moving cost (network level plus every distance term)
/// on the network level and the distance terms, and on the distance terms
/// alone; the gap shows how much apparent gravity the networks explain.
pub fn gravity_decomposition(fit: &FitResult, observations: &[ChoiceObservation]) -> Result<GravityDecomposition> {
    let rows = moving_cost_table(fit, observations);
    gravity_from_rows(&coefficients_of(fit), &rows)
}

pub fn gravity_from_rows(c: &Coefficients, rows: &[MovingCostRow]) -> Result<GravityDecomposition> {
    let y: Vec<f64> = rows.iter().map(|r| r.mc_network).collect();
    let n: Vec<f64> = rows.iter().map(|r| r.log_friends).collect();
    let same: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r.same_city))).collect();
    let ld: Vec<f64> = rows.iter().map(|r| r.log_distance).collect();
    let ldo: Vec<f64> = rows
        .iter()
        .map(|r| r.log_distance * f64::from(u8::from(r.out_of_state)))
        .collect();
    let dist = vec![
        (names::SAME_CITY, same),
        (names::LOG_DISTANCE, ld),
        (names::LOG_DISTANCE_OOS, ldo),
    ];
    let mut ni_cols = vec![(names::LOG_FRIENDS, n)];
    ni_cols.extend(dist.iter().cloned());
    let ni = fit_ols(&y, ni_cols)?;
    let nn = fit_ols(&y, dist)?;
    let reduction = |nn: f64, other: f64| if nn == 0.0 { 0.0 } else { (nn.abs() - other.abs()) / nn.abs() };
    let terms = [
        (names::SAME_CITY, c.stay),
        (names::LOG_DISTANCE, c.delta_v),
        (names::LOG_DISTANCE_OOS, c.delta_vs),
    ]
    .into_iter()
    .map(|(name, full)| {
        let ni_v = ni.coef_of(name).unwrap();
        let nn_v = nn.coef_of(name).unwrap();
        GravityTerm {
            name: name.to_string(),
            full,
            ni: ni_v,
            nn: nn_v,
            reduction_full: reduction(nn_v, full),
            reduction_ni: reduction(nn_v, ni_v),
        }
    })
    .collect();
    Ok(GravityDecomposition {
        gamma_full: c.gamma,
        gamma_ni: ni.coef_of(names::LOG_FRIENDS).unwrap(),
        terms,
        ni,
        nn,
    })
}

/// Marginal utility of log distance as a function of the destination
/// network size: (friends, in-state, out-of-state).
pub fn marginal_distance_curve(c: &Coefficients, friends: &[u32]) -> Vec<(u32, f64, f64)> {
    friends
        .iter()
        .map(|&f| {
            let n = super::utility::log_friends(f);
            let within = c.delta_v + c.delta_vn * n;
            (f, within, within + c.delta_vs + c.delta_vsn * n)
        })
        .collect()
}
