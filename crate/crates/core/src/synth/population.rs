use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use super::{DgpConfig, ParameterSet};
use crate::choice::{log_distance, log_friends, AltCovariates};
use crate::data::{AgentId, AgentPanel, AgentRecord, Demographics, NetworkPanel, SurveyChoices, SurveyRow, WeatherPanel};
use crate::error::{Error, Result};
use crate::geo::World;
use crate::instruments::{classify_shocks, ShockType};
use crate::rng::{gumbel, substream, Stream};
use crate::stats::{mean, variance};

/// Index of the utility-maximizing alternative after adding i.i.d.
/// standard Gumbel shocks (drawn in index order).
pub fn draw_choice<R: Rng + ?Sized>(v: &[f64], rng: &mut R) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, &vj) in v.iter().enumerate() {
        let u = vj + gumbel(rng);
        if u > best.1 {
            best = (j, u);
        }
    }
    best.0
}

/// Persistent standard-normal tastes of one agent for every city index.
pub fn taste_vector(seed: u64, agent: AgentId, n_cities: usize) -> Vec<f64> {
    let mut rng = substream(seed, Stream::Taste, agent.0, 0);
    (0..n_cities).map(|_| rng.sample(StandardNormal)).collect()
}

fn standardized(x: &[f64]) -> Vec<f64> {
    let (m, s) = (mean(x), variance(x).sqrt());
    x.iter().map(|v| if s > 0.0 { (v - m) / s } else { 0.0 }).collect()
}

/// Year-0 agents and their initial friend distributions. Hometowns are
/// drawn proportional to population; a share of each network sits at the
/// hometown and the rest follows a gravity kernel, tilted toward attractive
/// cities when `rho_na > 0`.
pub fn generate_agents(world: &World, config: &DgpConfig) -> Result<(AgentPanel, NetworkPanel)> {
    config.validate()?;
    let j = world.len();
    let pop: Vec<f64> = world.cities().iter().map(|c| c.population as f64).collect();
    let hometown = WeightedIndex::new(&pop).map_err(|e| Error::invalid(format!("population weights: {e}")))?;
    let amen = standardized(&world.amenities());
    let extra = Poisson::new(config.network_mean - 1.0).ok();
    let drawn: Vec<(AgentRecord, Vec<u32>)> = (0..config.n_agents)
        .into_par_iter()
        .map(|k| {
            let id = AgentId(k as u64 + 1);
            let mut rng = substream(config.seed, Stream::Agents, id.0, 0);
            let o = hometown.sample(&mut rng);
            let demographics = Demographics {
                birth_year: rng.random_range(1970..=2000),
                college: rng.random::<f64>() < 0.3,
                device_price: (5.0 + 0.6 * rng.sample::<f64, _>(StandardNormal)).exp(),
                hometown: world.city(o).id,
            };
            let total = 1 + extra.map_or(0, |p| p.sample(&mut rng) as u32);
            let at_origin = (config.origin_share * f64::from(total)).round() as u32;
            let mut counts = vec![0u32; j];
            counts[o] = at_origin;
            let rest = total - at_origin;
            if rest > 0 {
                let z = if config.rho_na > 0.0 {
                    taste_vector(config.seed, id, j)
                } else {
                    vec![0.0; j]
                };
                let w: Vec<f64> = (0..j)
                    .map(|c| {
                        if c == o {
                            0.0
                        } else {
                            let tilt = config.rho_na * config.network_tilt * (amen[c] + z[c]);
                            pop[c] * world.distance(o, c).max(1.0).powf(-config.gravity_exponent) * tilt.exp()
                        }
                    })
                    .collect();
                let kernel = WeightedIndex::new(&w).expect("positive weights");
                for _ in 0..rest {
                    counts[kernel.sample(&mut rng)] += 1;
                }
            }
            let rec = AgentRecord {
                id,
                demographics,
                residences: vec![world.city(o).id],
            };
            (rec, counts)
        })
        .collect();
    let mut net = NetworkPanel::new();
    let mut records = Vec::with_capacity(drawn.len());
    for (rec, counts) in drawn {
        net.set(rec.id, config.first_year, dense_to_sparse(world, &counts));
        records.push(rec);
    }
    Ok((AgentPanel::new(config.first_year, 1, records)?, net))
}

fn dense_to_sparse(world: &World, counts: &[u32]) -> Vec<(crate::geo::CityId, u32)> {
    counts
        .iter()
        .enumerate()
        .filter(|&(_, &n)| n > 0)
        .map(|(c, &n)| (world.city(c).id, n))
        .collect()
}

/// Per-city kernel for relocating friends out of a shocked city: nearby
/// populous cities are likelier.
fn push_kernels(world: &World, push_km: f64) -> Vec<Option<WeightedIndex<f64>>> {
    (0..world.len())
        .map(|c| {
            let w: Vec<f64> = (0..world.len())
                .map(|k| {
                    if k == c {
                        0.0
                    } else {
                        world.city(k).population as f64 * (-world.distance(c, k) / push_km).exp()
                    }
                })
                .collect();
            WeightedIndex::new(&w).ok()
        })
        .collect()
}

/// Forward simulation from the year-0 state. In each later year every
/// agent picks the city maximizing utility (last year's friends and
/// origin) plus fresh Gumbel shocks. Friends living in a city shocked last
/// year relocate nearby with probability `push_rate`; movers gain
/// `accrual_rate` of their network as new ties in the destination.
pub fn simulate_panel(
    world: &World,
    agents: &AgentPanel,
    networks: &NetworkPanel,
    params: &ParameterSet,
    weather: &WeatherPanel,
    config: &DgpConfig,
) -> Result<(AgentPanel, NetworkPanel)> {
    config.validate()?;
    params.validate(world)?;
    agents.validate_against(world)?;
    if agents.n_years() < 1 || agents.first_year() != config.first_year {
        return Err(Error::invalid("simulate_panel needs a year-0 agent slice at config.first_year"));
    }
    let j = world.len();
    let years: Vec<i32> = (config.first_year..=config.last_year()).collect();
    let drought = classify_shocks(weather, ShockType::Drought)?;
    let heat = classify_shocks(weather, ShockType::Heat)?;
    let shocked: Vec<Vec<bool>> = years
        .iter()
        .map(|&y| {
            world
                .cities()
                .iter()
                .map(|c| drought.is_shocked(c.id, y) || heat.is_shocked(c.id, y))
                .collect()
        })
        .collect();
    let city_v = params.city_values(world);
    let kernels = push_kernels(world, config.push_km);

    struct State {
        origin: usize,
        counts: Vec<u32>,
        path: Vec<usize>,
        history: Vec<Vec<u32>>,
    }
    let mut states: Vec<State> = agents
        .agents()
        .iter()
        .map(|a| {
            let mut counts = vec![0u32; j];
            for &(c, n) in networks.friends(a.id, config.first_year) {
                counts[world.require_index(c)?] = n;
            }
            let origin = world.require_index(a.residences[0])?;
            Ok(State {
                origin,
                counts: counts.clone(),
                path: vec![origin],
                history: vec![counts],
            })
        })
        .collect::<Result<_>>()?;

    for (ty, &year) in years.iter().enumerate().skip(1) {
        let prev_shock = &shocked[ty - 1];
        states.par_iter_mut().zip(agents.agents()).for_each(|(s, a)| {
            let o = s.origin;
            let taste = if config.taste_sd > 0.0 {
                taste_vector(config.seed, a.id, j)
            } else {
                Vec::new()
            };
            let v: Vec<f64> = (0..j)
                .map(|c| {
                    let same = c == o;
                    let x = AltCovariates {
                        same_city: same,
                        log_friends: log_friends(s.counts[c]),
                        log_distance: log_distance(world.distance(o, c), same),
                        out_of_state: !world.same_state(o, c),
                    };
                    let mut u = city_v[c] + params.coef.network_distance_utility(&x);
                    if !taste.is_empty() {
                        u += config.taste_sd * taste[c];
                    }
                    if same && prev_shock[o] {
                        u -= config.weather_penalty;
                    }
                    u
                })
                .collect();
            let mut rng = substream(config.seed, Stream::Choice, a.id.0, year as u64);
            let choice = draw_choice(&v, &mut rng);

            let mut nrng = substream(config.seed, Stream::Network, a.id.0, year as u64);
            let before = s.counts.clone();
            for c in 0..j {
                if before[c] == 0 || !prev_shock[c] || config.push_rate == 0.0 {
                    continue;
                }
                let Some(kernel) = &kernels[c] else { continue };
                let m = Binomial::new(u64::from(before[c]), config.push_rate)
                    .expect("valid probability")
                    .sample(&mut nrng) as u32;
                s.counts[c] -= m;
                for _ in 0..m {
                    s.counts[kernel.sample(&mut nrng)] += 1;
                }
            }
            if choice != o {
                let total: u32 = s.counts.iter().sum();
                s.counts[choice] += (config.accrual_rate * f64::from(total)).round() as u32;
            }
            s.origin = choice;
            s.path.push(choice);
            s.history.push(s.counts.clone());
        });
    }

    let mut net = NetworkPanel::new();
    let mut records = Vec::with_capacity(states.len());
    for (s, a) in states.into_iter().zip(agents.agents()) {
        for (k, counts) in s.history.iter().enumerate() {
            net.set(a.id, years[k], dense_to_sparse(world, counts));
        }
        records.push(AgentRecord {
            id: a.id,
            demographics: a.demographics.clone(),
            residences: s.path.iter().map(|&c| world.city(c).id).collect(),
        });
    }
    Ok((AgentPanel::new(config.first_year, years.len(), records)?, net))
}

/// Stated-preference survey: respondents live in population-weighted
/// cities and name the city maximizing amenity plus distance utility from
/// their current city plus a Gumbel shock.
pub fn simulate_survey(world: &World, params: &ParameterSet, config: &DgpConfig, n_respondents: usize) -> Result<SurveyChoices> {
    params.validate(world)?;
    let j = world.len();
    let pop: Vec<f64> = world.cities().iter().map(|c| c.population as f64).collect();
    let current = WeightedIndex::new(&pop).map_err(|e| Error::invalid(format!("population weights: {e}")))?;
    let rows = (0..n_respondents as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(config.seed, Stream::Survey, r + 1, 0);
            let o = current.sample(&mut rng);
            let v: Vec<f64> = (0..j)
                .map(|c| {
                    let same = c == o;
                    let x = AltCovariates {
                        same_city: same,
                        log_friends: 0.0,
                        log_distance: log_distance(world.distance(o, c), same),
                        out_of_state: !world.same_state(o, c),
                    };
                    params.amenities[c] + params.coef.distance_utility(&x)
                })
                .collect();
            let d = draw_choice(&v, &mut rng);
            SurveyRow {
                respondent: r + 1,
                current: world.city(o).id,
                dream: world.city(d).id,
            }
        })
        .collect();
    Ok(SurveyChoices { rows })
}
