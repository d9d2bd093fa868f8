use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::EventRow;
use crate::rng::{substream, Stream};

/// Panel of units observed at every age in a window, born in different
/// years, half of them treated. The outcome is a unit effect plus smooth
/// age and year trends plus noise, with an optional step effect for the
/// treated from some age on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventDgp {
    pub seed: u64,
    pub n_units: usize,
    pub first_age: i32,
    pub last_age: i32,
    pub first_birth_year: i32,
    pub n_cohorts: usize,
    pub treated_share: f64,
    /// (age, size): treated outcomes shift by `size` from `age` on.
    pub step: Option<(i32, f64)>,
    pub unit_sd: f64,
    pub noise_sd: f64,
}

impl Default for EventDgp {
    fn default() -> Self {
        Self {
            seed: 1,
            n_units: 400,
            first_age: 15,
            last_age: 30,
            first_birth_year: 1985,
            n_cohorts: 10,
            treated_share: 0.5,
            step: None,
            unit_sd: 1.0,
            noise_sd: 0.5,
        }
    }
}

pub fn simulate_event_panel(dgp: &EventDgp, replication: u64) -> Result<Vec<EventRow>> {
    if dgp.n_units == 0 || dgp.n_cohorts == 0 || dgp.last_age < dgp.first_age {
        return Err(Error::invalid("event panel needs units, cohorts and a nonempty age window"));
    }
    if !(0.0..=1.0).contains(&dgp.treated_share) || !(dgp.noise_sd >= 0.0) || !(dgp.unit_sd >= 0.0) {
        return Err(Error::invalid("treated share must lie in [0, 1] and standard deviations be nonnegative"));
    }
    let mut rows = Vec::with_capacity(dgp.n_units * (dgp.last_age - dgp.first_age + 1) as usize);
    for u in 0..dgp.n_units as u64 {
        let mut rng = substream(dgp.seed, Stream::Event, replication, u);
        let birth = dgp.first_birth_year + rng.random_range(0..dgp.n_cohorts as i32);
        let treated = rng.random::<f64>() < dgp.treated_share;
        // treated units differ in level, which the unit effect absorbs
        let level = dgp.unit_sd * rng.sample::<f64, _>(StandardNormal) + if treated { 0.5 } else { 0.0 };
        for age in dgp.first_age..=dgp.last_age {
            let year = birth + age;
            let trend = 0.05 * f64::from(age - dgp.first_age) + 0.02 * f64::from(year - dgp.first_birth_year);
            let effect = match dgp.step {
                Some((from, size)) if treated && age >= from => size,
                _ => 0.0,
            };
            rows.push(EventRow {
                unit: u,
                age,
                year,
                treated,
                outcome: level + trend + effect + dgp.noise_sd * rng.sample::<f64, _>(StandardNormal),
            });
        }
    }
    Ok(rows)
}
