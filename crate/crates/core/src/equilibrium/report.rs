use super::solve::{Economy, EquilibriumState, ShockMatrix};
use crate::error::{Error, Result};
use crate::geo::{WageQuartiles, World};
use crate::stats::{logsumexp, mean, variance, EULER_MASCHERONI};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    NetworkSize,
    MigrationRate,
    DistanceKm,
    WageMean,
    WageSd,
    /// Mean amenity of the chosen city over beta, in percent of wages.
    AmenitiesPctWages,
    /// Mean expected maximum utility over beta, net of the log wage
    /// earned, in percent of wages.
    WelfarePctWages,
}

pub const METRICS: [Metric; 7] = [
    Metric::NetworkSize,
    Metric::MigrationRate,
    Metric::DistanceKm,
    Metric::WageMean,
    Metric::WageSd,
    Metric::AmenitiesPctWages,
    Metric::WelfarePctWages,
];

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::NetworkSize => "network_size",
            Metric::MigrationRate => "migration_rate",
            Metric::DistanceKm => "distance_km",
            Metric::WageMean => "wage_mean",
            Metric::WageSd => "wage_sd",
            Metric::AmenitiesPctWages => "amenities_pct_wages",
            Metric::WelfarePctWages => "welfare_pct_wages",
        }
    }
}

/// Outcomes of one scenario for one group of agents.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupOutcomes {
    pub group: String,
    pub n_agents: usize,
    /// In `METRICS` order.
    pub values: [f64; 7],
    /// Mean log-sum-exp of systematic utilities.
    pub expected_utility: f64,
    /// Mean realized maximum utility minus the Gumbel mean, and its
    /// standard error; estimates the same quantity by simulation.
    pub simulated_utility: f64,
    pub simulated_utility_se: f64,
}

impl GroupOutcomes {
    pub fn get(&self, m: Metric) -> f64 {
        self.values[METRICS.iter().position(|&x| x == m).unwrap()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRow {
    pub group: String,
    pub metric: Metric,
    pub baseline: f64,
    pub value: f64,
    /// value / baseline (1 when both are zero).
    pub multiple: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeReport {
    pub baseline: Vec<GroupOutcomes>,
    pub counterfactual: Vec<GroupOutcomes>,
    pub rows: Vec<OutcomeRow>,
}

impl OutcomeReport {
    pub fn multiple(&self, group: &str, m: Metric) -> Option<f64> {
        self.rows.iter().find(|r| r.group == group && r.metric == m).map(|r| r.multiple)
    }
}

fn group_outcomes(
    name: &str,
    members: &[usize],
    world: &World,
    economy: &Economy,
    state: &EquilibriumState,
    shocks: &ShockMatrix,
    base: &[f64],
) -> GroupOutcomes {
    let j = world.len();
    let beta = economy.params.beta;
    let city_v: Vec<f64> = state
        .wage
        .iter()
        .zip(&state.amenity)
        .map(|(y, a)| beta * y.ln() + a)
        .collect();
    let mut net = Vec::with_capacity(members.len());
    let mut moved = Vec::with_capacity(members.len());
    let mut dist = Vec::with_capacity(members.len());
    let mut wage = Vec::with_capacity(members.len());
    let mut amen = Vec::with_capacity(members.len());
    let mut welfare = Vec::with_capacity(members.len());
    let mut lse = Vec::with_capacity(members.len());
    let mut realized = Vec::with_capacity(members.len());
    let mut v = vec![0.0; j];
    for &i in members {
        let a = &economy.agents[i];
        let c = state.choices[i];
        for k in 0..j {
            v[k] = base[i * j + k] + city_v[k];
        }
        let l = logsumexp(&v);
        net.push(a.network_size() as f64);
        moved.push(f64::from(u8::from(c != a.origin)));
        dist.push(world.distance(a.origin, c));
        wage.push(state.wage[c]);
        amen.push(100.0 * state.amenity[c] / beta);
        welfare.push(100.0 * (l / beta - state.wage[c].ln()));
        lse.push(l);
        realized.push(v[c] + shocks.row(i)[c] - EULER_MASCHERONI);
    }
    let n = members.len();
    GroupOutcomes {
        group: name.to_string(),
        n_agents: n,
        values: [
            mean(&net),
            mean(&moved),
            mean(&dist),
            mean(&wage),
            if n > 1 { variance(&wage).sqrt() } else { 0.0 },
            mean(&amen),
            mean(&welfare),
        ],
        expected_utility: mean(&lse),
        simulated_utility: mean(&realized),
        simulated_utility_se: if n > 1 { (variance(&realized) / n as f64).sqrt() } else { f64::NAN },
    }
}

/// Outcomes for all agents and for the bottom and top quartiles of the
/// baseline residence wage distribution.
pub fn scenario_outcomes(
    world: &World,
    economy: &Economy,
    state: &EquilibriumState,
    shocks: &ShockMatrix,
    quartiles: &WageQuartiles,
) -> Result<Vec<GroupOutcomes>> {
    if state.choices.len() != economy.agents.len() || quartiles.assignment.len() != world.len() {
        return Err(Error::invalid("state, economy and quartiles disagree in size"));
    }
    let base = economy.base_utility(world);
    let all: Vec<usize> = (0..economy.agents.len()).collect();
    let q = |k: u8| -> Vec<usize> {
        all.iter().copied().filter(|&i| quartiles.of(economy.agents[i].origin) == k).collect()
    };
    Ok(vec![
        group_outcomes("all", &all, world, economy, state, shocks, &base),
        group_outcomes("bottom_quartile", &q(1), world, economy, state, shocks, &base),
        group_outcomes("top_quartile", &q(4), world, economy, state, shocks, &base),
    ])
}

/// Counterfactual outcomes as multiples of the baseline. Groups are fixed
/// by baseline residence, which scenarios do not change.
pub fn outcomes_report(
    world: &World,
    baseline: (&Economy, &EquilibriumState),
    counterfactual: (&Economy, &EquilibriumState),
    shocks: &ShockMatrix,
    quartiles: &WageQuartiles,
) -> Result<OutcomeReport> {
    if baseline.0.agents.len() != counterfactual.0.agents.len()
        || baseline.0.agents.iter().zip(&counterfactual.0.agents).any(|(a, b)| a.origin != b.origin)
    {
        return Err(Error::invalid("baseline and counterfactual must share agents and origins"));
    }
    let b = scenario_outcomes(world, baseline.0, baseline.1, shocks, quartiles)?;
    let c = scenario_outcomes(world, counterfactual.0, counterfactual.1, shocks, quartiles)?;
    let mut rows = Vec::new();
    for (gb, gc) in b.iter().zip(&c) {
        for (k, &m) in METRICS.iter().enumerate() {
            let (x0, x1) = (gb.values[k], gc.values[k]);
            rows.push(OutcomeRow {
                group: gb.group.clone(),
                metric: m,
                baseline: x0,
                value: x1,
                multiple: if x0 == x1 { 1.0 } else { x1 / x0 },
            });
        }
    }
    Ok(OutcomeReport {
        baseline: b,
        counterfactual: c,
        rows,
    })
}
