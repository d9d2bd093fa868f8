use serde::{Deserialize, Serialize};

use super::bartik::BartikVector;
use crate::choice::{ChoiceObservation, FeKey, FitResult};
use crate::error::{Error, Result};
use crate::geo::World;
use crate::linear::{design, tsls, wls, RegressionResult, Vcov};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WageMode {
    Ols,
    IvWage,
    IvLabor,
    IvBoth,
}

#[derive(Debug, Clone)]
pub struct WageElasticity {
    pub mode: WageMode,
    pub beta: f64,
    pub se: f64,
    /// First-stage F of the excluded instruments (instrumented modes).
    pub first_stage_f: Option<f64>,
    pub regression: RegressionResult,
    /// Cities entering the regression (positive weight, estimated effect).
    pub n_cities: usize,
}

/// Number of times each city (by index) is chosen.
pub fn destination_frequency(observations: &[ChoiceObservation], n_cities: usize) -> Vec<f64> {
    let mut f = vec![0.0; n_cities];
    for o in observations {
        f[o.chosen_city()] += 1.0;
    }
    f
}

/// Destination effects by city index, averaging over years when they vary
/// by year. `None` where no effect was estimated.
pub fn destination_effects(fit: &FitResult, world: &World) -> Result<Vec<Option<f64>>> {
    let mut sum = vec![0.0; world.len()];
    let mut count = vec![0usize; world.len()];
    for e in &fit.fe {
        match e.key {
            FeKey::Destination(j) | FeKey::DestinationYear(j, _) => {
                let i = world.require_index(j)?;
                sum[i] += e.value;
                count[i] += 1;
            }
            FeKey::OriginDestinationYear(..) => {
                return Err(Error::invalid("destination effects are not identified under origin x destination x year cells"))
            }
        }
    }
    Ok(sum.iter().zip(&count).map(|(s, &c)| (c > 0).then(|| s / c as f64)).collect())
}

/// Second step: regress destination effects on log wages across cities,
/// weighted by destination frequency, with an intercept and optional
/// controls (by city index); instrumented by the city's district Bartik
/// exposures. Heteroskedasticity-robust (each city its own cluster).
pub fn wage_elasticity_two_step(
    xi: &[Option<f64>],
    weights: &[f64],
    world: &World,
    bartik: &BartikVector,
    mode: WageMode,
    controls: &[(String, Vec<f64>)],
) -> Result<WageElasticity> {
    let n = world.len();
    if xi.len() != n || weights.len() != n || controls.iter().any(|(_, v)| v.len() != n) {
        return Err(Error::invalid("two-step inputs must have one value per city"));
    }
    let logy = world.log_wages();
    let keep: Vec<usize> = (0..n).filter(|&j| xi[j].is_some() && weights[j] > 0.0).collect();
    let m = keep.len();
    let y: Vec<f64> = keep.iter().map(|&j| xi[j].unwrap()).collect();
    let w: Vec<f64> = keep.iter().map(|&j| weights[j]).collect();
    let x_end = design(&[keep.iter().map(|&j| logy[j]).collect()]);
    let mut exog = vec![vec![1.0; m]];
    let mut exog_names = vec!["intercept".to_string()];
    for (name, v) in controls {
        exog.push(keep.iter().map(|&j| v[j]).collect());
        exog_names.push(name.clone());
    }
    let clusters: Vec<u64> = keep.iter().map(|&j| j as u64).collect();
    let vcov = Vcov::Cluster(&clusters);
    let instrument = |map: &std::collections::BTreeMap<u32, f64>, name: &str| -> Result<Vec<f64>> {
        keep.iter()
            .map(|&j| {
                let d = world.city(j).district_id;
                map.get(&d)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("no {name} exposure for district {d}")))
            })
            .collect()
    };
    let mut z = Vec::new();
    let mut z_names = Vec::new();
    if matches!(mode, WageMode::IvWage | WageMode::IvBoth) {
        z.push(instrument(&bartik.delta_wage, "wage")?);
        z_names.push("bartik_delta_wage".to_string());
    }
    if matches!(mode, WageMode::IvLabor | WageMode::IvBoth) {
        z.push(instrument(&bartik.delta_labor, "labor")?);
        z_names.push("bartik_delta_labor".to_string());
    }
    let endog_names = vec!["log_wage".to_string()];
    let regression = if z.is_empty() {
        let mut cols = vec![x_end.column(0).iter().copied().collect::<Vec<_>>()];
        cols.extend(exog);
        let names: Vec<String> = endog_names.into_iter().chain(exog_names).collect();
        wls(&y, &design(&cols), Some(&w), &names, vcov)?
    } else {
        tsls(&y, &x_end, &endog_names, &design(&exog), &exog_names, &design(&z), &z_names, Some(&w), vcov)?
    };
    Ok(WageElasticity {
        mode,
        beta: regression.coef[0],
        se: regression.se[0],
        first_stage_f: regression.first_stage_f.as_ref().map(|f| f[0]),
        regression,
        n_cities: m,
    })
}
