use rand::seq::index::sample;
use rayon::prelude::*;

use super::utility::{log_distance, log_friends, AltCovariates, Coefficients};
use crate::data::{AgentId, AgentPanel, NetworkPanel};
use crate::error::{Error, Result};
use crate::geo::World;
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct Alternative {
    /// City index in the world.
    pub city: usize,
    pub log_friends: f64,
    pub same_city: bool,
    pub log_distance: f64,
    pub out_of_state: bool,
    /// Log probability that this alternative entered the set by sampling:
    /// 0 for origin and friended cities, log(k / M) for the k of M others.
    pub inclusion_log_prob: f64,
    /// First-stage residual, when a control function is attached.
    pub cf_residual: Option<f64>,
}

impl Alternative {
    pub fn covariates(&self) -> AltCovariates {
        AltCovariates {
            same_city: self.same_city,
            log_friends: self.log_friends,
            log_distance: self.log_distance,
            out_of_state: self.out_of_state,
        }
    }

    pub fn friends_count(&self) -> u32 {
        self.log_friends.exp_m1().round() as u32
    }
}

/// One agent-year decision. Each observation is its own cluster: the
/// cluster key is the (agent, year) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceObservation {
    pub agent: AgentId,
    pub year: i32,
    /// City index of last year's residence.
    pub origin: usize,
    /// Position of the chosen city in `alternatives`.
    pub chosen: usize,
    /// Sorted by city index.
    pub alternatives: Vec<Alternative>,
}

impl ChoiceObservation {
    pub fn chosen_city(&self) -> usize {
        self.alternatives[self.chosen].city
    }

    /// Builds an observation with every city as an alternative and no
    /// sampling; used by tests and the survey estimator.
    pub fn exhaustive(world: &World, agent: AgentId, year: i32, origin: usize, chosen_city: usize, friends: &[u32]) -> Self {
        let alternatives: Vec<Alternative> = (0..world.len())
            .map(|c| alternative(world, origin, c, friends.get(c).copied().unwrap_or(0), 0.0))
            .collect();
        ChoiceObservation {
            agent,
            year,
            origin,
            chosen: chosen_city,
            alternatives,
        }
    }
}

/// Systematic utility of one alternative: `xi` (fixed effect, amenity or
/// wage offset already combined by the caller), the network and distance
/// terms, and the sampling correction with coefficient fixed at one.
pub fn systematic_utility(coef: &Coefficients, xi: f64, alt: &Alternative) -> f64 {
    xi + coef.network_distance_utility(&alt.covariates()) - alt.inclusion_log_prob
}

fn alternative(world: &World, origin: usize, c: usize, friends: u32, inclusion_log_prob: f64) -> Alternative {
    let same = c == origin;
    Alternative {
        city: c,
        log_friends: log_friends(friends),
        same_city: same,
        log_distance: log_distance(world.distance(origin, c), same),
        out_of_state: !world.same_state(origin, c),
        inclusion_log_prob,
        cf_residual: None,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChoiceSets {
    pub observations: Vec<ChoiceObservation>,
    /// Observations whose sample request exceeded the available cities.
    pub clamped: usize,
}

/// Choice sets for every agent and every panel year after the first:
/// the origin, every city with at least one friend last year, and a
/// simple random sample of `n_extra` of the remaining cities. When the
/// chosen city is among the remaining ones it is always kept and the other
/// `n_extra - 1` are sampled, so the inclusion probability is the same for
/// every sampled member.
pub fn build_choice_sets(panel: &AgentPanel, networks: &NetworkPanel, world: &World, n_extra: usize, seed: u64) -> Result<ChoiceSets> {
    panel.validate_against(world)?;
    let j = world.len();
    let years: Vec<i32> = panel.years().skip(1).collect();
    let per_agent: Vec<Result<Vec<(ChoiceObservation, bool)>>> = panel
        .agents()
        .par_iter()
        .map(|a| {
            let mut out = Vec::with_capacity(years.len());
            for (k, &t) in years.iter().enumerate() {
                let origin = world.require_index(a.residences[k])?;
                let chosen = world.require_index(a.residences[k + 1])?;
                let mut counts = vec![0u32; j];
                let mut deterministic = vec![false; j];
                deterministic[origin] = true;
                for &(c, n) in networks.friends(a.id, t - 1) {
                    let ci = world.require_index(c)?;
                    counts[ci] = n;
                    deterministic[ci] = true;
                }
                let rest: Vec<usize> = (0..j).filter(|&c| !deterministic[c]).collect();
                let m = rest.len();
                let k_req = n_extra.min(m);
                let clamped = n_extra > m;
                let mut rng = substream(seed, Stream::ChoiceSet, a.id.0, t as u64);
                let mut sampled = vec![false; j];
                if !deterministic[chosen] {
                    sampled[chosen] = true;
                    let others: Vec<usize> = rest.iter().copied().filter(|&c| c != chosen).collect();
                    let take = k_req.saturating_sub(1);
                    for i in sample(&mut rng, others.len(), take) {
                        sampled[others[i]] = true;
                    }
                } else {
                    for i in sample(&mut rng, m, k_req) {
                        sampled[rest[i]] = true;
                    }
                }
                let k_eff = k_req.max(usize::from(!deterministic[chosen]));
                let lp = if m > 0 { (k_eff as f64 / m as f64).ln() } else { 0.0 };
                let alternatives: Vec<Alternative> = (0..j)
                    .filter(|&c| deterministic[c] || sampled[c])
                    .map(|c| alternative(world, origin, c, counts[c], if deterministic[c] { 0.0 } else { lp }))
                    .collect();
                let pos = alternatives.iter().position(|x| x.city == chosen).expect("chosen city kept");
                out.push((
                    ChoiceObservation {
                        agent: a.id,
                        year: t,
                        origin,
                        chosen: pos,
                        alternatives,
                    },
                    clamped,
                ));
            }
            Ok(out)
        })
        .collect();
    let mut sets = ChoiceSets::default();
    for r in per_agent {
        for (o, c) in r? {
            sets.clamped += usize::from(c);
            sets.observations.push(o);
        }
    }
    if sets.clamped > 0 {
        log::info!(
            "{} choice sets requested more sampled cities than available; used all remaining cities",
            sets.clamped
        );
    }
    Ok(sets)
}

/// Exhaustive choice sets (every city, no sampling correction).
pub fn exhaustive_choice_sets(panel: &AgentPanel, networks: &NetworkPanel, world: &World) -> Result<ChoiceSets> {
    build_choice_sets(panel, networks, world, world.len(), 0)
}

pub(crate) fn check_observation(o: &ChoiceObservation) -> Result<()> {
    if o.chosen >= o.alternatives.len() {
        return Err(Error::invalid(format!("agent {} year {}: chosen index out of range", o.agent, o.year)));
    }
    if !o.alternatives.iter().any(|a| a.city == o.origin) {
        return Err(Error::invalid(format!("agent {} year {}: origin missing from choice set", o.agent, o.year)));
    }
    if o.alternatives.iter().any(|a| a.inclusion_log_prob > 0.0 || !a.inclusion_log_prob.is_finite()) {
        return Err(Error::invalid(format!("agent {} year {}: inclusion log-probability must be <= 0", o.agent, o.year)));
    }
    Ok(())
}
