use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choice::{log_distance, log_friends, AltCovariates, Coefficients};
use crate::data::{AgentPanel, NetworkPanel};
use crate::error::{Error, Result};
use crate::geo::World;
use crate::rng::{gumbel, substream, Stream};
use crate::synth::ParameterSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumParams {
    pub beta: f64,
    pub coef: Coefficients,
    /// Agglomeration elasticity of wages.
    pub phi: f64,
    /// Price congestion elasticity.
    pub psi: f64,
    /// Amenity congestion elasticity.
    pub theta: f64,
}

impl EquilibriumParams {
    pub fn from_parameters(p: &ParameterSet) -> Self {
        EquilibriumParams {
            beta: p.beta,
            coef: p.coef,
            phi: p.phi,
            psi: p.psi,
            theta: p.theta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let net = self.phi - self.psi;
        if !(net < 1.0) {
            return Err(Error::Unstable(format!("phi - psi = {net} must be below 1")));
        }
        if !(self.theta >= 0.0) {
            return Err(Error::Unstable(format!("theta = {} must be non-negative", self.theta)));
        }
        if !self.beta.is_finite() || !self.phi.is_finite() || !self.psi.is_finite() {
            return Err(Error::invalid("equilibrium parameters must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquilibriumOptions {
    /// Weight on the new value in each damped update.
    pub damping: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    /// Labor used in the wage and amenity updates is at least this.
    pub labor_floor: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        EquilibriumOptions {
            damping: 0.5,
            tolerance: 1e-8,
            max_iter: 10_000,
            labor_floor: 1.0,
        }
    }
}

/// City-specific productivity and amenity scales.
#[derive(Debug, Clone, PartialEq)]
pub struct Scales {
    pub productivity: Vec<f64>,
    pub amenity: Vec<f64>,
}

/// Chooser in the static model: current city and friend counts by city.
#[derive(Debug, Clone, PartialEq)]
pub struct EqAgent {
    pub origin: usize,
    pub friends: Vec<u32>,
}

impl EqAgent {
    pub fn network_size(&self) -> u64 {
        self.friends.iter().map(|&f| u64::from(f)).sum()
    }
}

/// Everything a scenario may change.
#[derive(Debug, Clone, PartialEq)]
pub struct Economy {
    pub params: EquilibriumParams,
    pub scales: Scales,
    pub agents: Vec<EqAgent>,
}

impl Economy {
    /// Network and distance utility, agents x cities, row-major.
    pub(crate) fn base_utility(&self, world: &World) -> Vec<f64> {
        let j = world.len();
        let c = &self.params.coef;
        let mut out = vec![0.0; self.agents.len() * j];
        out.par_chunks_mut(j).zip(&self.agents).for_each(|(row, a)| {
            for (k, v) in row.iter_mut().enumerate() {
                let same = k == a.origin;
                *v = c.network_distance_utility(&AltCovariates {
                    same_city: same,
                    log_friends: log_friends(a.friends[k]),
                    log_distance: log_distance(world.distance(a.origin, k), same),
                    out_of_state: !world.same_state(a.origin, k),
                });
            }
        });
        out
    }
}

/// Agents at their residence in `year` with that year's networks.
pub fn economy_from_panel(
    panel: &AgentPanel,
    networks: &NetworkPanel,
    world: &World,
    year: i32,
    params: EquilibriumParams,
    scales: Scales,
) -> Result<Economy> {
    let agents = panel
        .agents()
        .iter()
        .map(|a| {
            let origin = world.require_index(
                panel
                    .residence(a.id, year)
                    .ok_or_else(|| Error::invalid(format!("agent {} has no residence in {year}", a.id)))?,
            )?;
            let mut friends = vec![0u32; world.len()];
            for &(c, n) in networks.friends(a.id, year) {
                friends[world.require_index(c)?] = n;
            }
            Ok(EqAgent { origin, friends })
        })
        .collect::<Result<_>>()?;
    Ok(Economy { params, scales, agents })
}

/// Standard Gumbel draws, agents x cities, reused across scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockMatrix {
    pub n_agents: usize,
    pub n_cities: usize,
    pub values: Vec<f64>,
}

impl ShockMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cities..(i + 1) * self.n_cities]
    }
}

pub fn draw_shocks(n_agents: usize, n_cities: usize, seed: u64) -> ShockMatrix {
    let mut values = vec![0.0; n_agents * n_cities];
    if n_cities > 0 {
        values.par_chunks_mut(n_cities).enumerate().for_each(|(i, row)| {
            let mut rng = substream(seed, Stream::EquilibriumShock, i as u64 + 1, 0);
            for v in row {
                *v = gumbel(&mut rng);
            }
        });
    }
    ShockMatrix {
        n_agents,
        n_cities,
        values,
    }
}

fn choose(base: &[f64], shocks: &ShockMatrix, city_v: &[f64]) -> Vec<usize> {
    let j = city_v.len();
    base.par_chunks(j)
        .enumerate()
        .map(|(i, row)| {
            let e = shocks.row(i);
            let mut best = (0, f64::NEG_INFINITY);
            for k in 0..j {
                let u = row[k] + city_v[k] + e[k];
                if u > best.1 {
                    best = (k, u);
                }
            }
            best.0
        })
        .collect()
}

fn counts(choices: &[usize], j: usize) -> Vec<u64> {
    let mut l = vec![0u64; j];
    for &c in choices {
        l[c] += 1;
    }
    l
}

fn check_shapes(world: &World, economy: &Economy, shocks: &ShockMatrix) -> Result<()> {
    let j = world.len();
    if shocks.n_cities != j || shocks.n_agents != economy.agents.len() {
        return Err(Error::invalid(format!(
            "shock matrix is {}x{}, economy has {} agents and {j} cities",
            shocks.n_agents,
            shocks.n_cities,
            economy.agents.len()
        )));
    }
    if economy.scales.productivity.len() != j || economy.scales.amenity.len() != j {
        return Err(Error::invalid("scales must have one entry per city"));
    }
    if economy.agents.iter().any(|a| a.origin >= j || a.friends.len() != j) {
        return Err(Error::invalid("agent origin or friend vector does not match the world"));
    }
    Ok(())
}

/// Choices and labor at given wages and amenities.
pub fn baseline_choices(
    world: &World,
    economy: &Economy,
    shocks: &ShockMatrix,
    log_wage: &[f64],
    amenity: &[f64],
) -> Result<(Vec<usize>, Vec<u64>)> {
    check_shapes(world, economy, shocks)?;
    let beta = economy.params.beta;
    let v: Vec<f64> = log_wage.iter().zip(amenity).map(|(y, a)| beta * y + a).collect();
    let ch = choose(&economy.base_utility(world), shocks, &v);
    let l = counts(&ch, world.len());
    Ok((ch, l))
}

/// Scales making (wages, amenities, labor) an exact equilibrium:
/// `A = Y / L^(phi - psi)`, `a = exp(xi) / L^(-theta)`, labor floored.
pub fn calibrate_scales(
    wages: &[f64],
    amenities: &[f64],
    labor: &[u64],
    params: &EquilibriumParams,
    options: &EquilibriumOptions,
) -> Result<Scales> {
    params.validate()?;
    if wages.len() != labor.len() || amenities.len() != labor.len() {
        return Err(Error::invalid("wages, amenities and labor must have one entry per city"));
    }
    if wages.iter().any(|y| !(*y > 0.0 && y.is_finite())) {
        return Err(Error::invalid("wages must be positive and finite"));
    }
    let net = params.phi - params.psi;
    let l: Vec<f64> = labor.iter().map(|&l| (l as f64).max(options.labor_floor)).collect();
    Ok(Scales {
        productivity: wages.iter().zip(&l).map(|(y, l)| y / l.powf(net)).collect(),
        amenity: amenities.iter().zip(&l).map(|(x, l)| x.exp() * l.powf(params.theta)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumState {
    pub labor: Vec<u64>,
    pub wage: Vec<f64>,
    pub amenity: Vec<f64>,
    /// City chosen by each agent.
    pub choices: Vec<usize>,
    /// Sup-norm gaps of log wages and amenities from their market-clearing
    /// values at the returned labor allocation.
    pub wage_residual: f64,
    pub amenity_residual: f64,
    pub iterations: usize,
    /// Sup-norm residual after each iteration.
    pub trace: Vec<f64>,
    /// Total labor after each choice step.
    pub labor_totals: Vec<u64>,
}

fn targets(scales: &Scales, labor: &[u64], params: &EquilibriumParams, floor: f64) -> (Vec<f64>, Vec<f64>) {
    let net = params.phi - params.psi;
    let ln_l: Vec<f64> = labor.iter().map(|&l| (l as f64).max(floor).ln()).collect();
    (
        scales.productivity.iter().zip(&ln_l).map(|(a, l)| a.ln() + net * l).collect(),
        scales.amenity.iter().zip(&ln_l).map(|(a, l)| a.ln() - params.theta * l).collect(),
    )
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Damped fixed point on (log wage, amenity) starting from `start`
/// (wages in levels, amenities). Shocks stay fixed across iterations.
pub fn solve_equilibrium(
    world: &World,
    economy: &Economy,
    shocks: &ShockMatrix,
    start: (&[f64], &[f64]),
    options: &EquilibriumOptions,
) -> Result<EquilibriumState> {
    economy.params.validate()?;
    check_shapes(world, economy, shocks)?;
    if !(options.damping > 0.0 && options.damping <= 1.0) || !(options.labor_floor > 0.0) {
        return Err(Error::invalid("damping must lie in (0, 1] and the labor floor must be positive"));
    }
    let j = world.len();
    let p = &economy.params;
    let n = economy.agents.len() as u64;
    let base = economy.base_utility(world);
    let mut ly: Vec<f64> = start.0.iter().map(|y| y.ln()).collect();
    let mut xi = start.1.to_vec();
    if ly.len() != j || xi.len() != j || ly.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("starting wages must be positive, one per city"));
    }
    let lam = options.damping;
    let mut trace = Vec::new();
    let mut labor_totals = Vec::new();
    for it in 1..=options.max_iter {
        let v: Vec<f64> = ly.iter().zip(&xi).map(|(y, a)| p.beta * y + a).collect();
        let choices = choose(&base, shocks, &v);
        let labor = counts(&choices, j);
        let total: u64 = labor.iter().sum();
        assert_eq!(total, n, "labor is conserved by construction");
        labor_totals.push(total);
        let (ty, tx) = targets(&economy.scales, &labor, p, options.labor_floor);
        let (ry, rx) = (sup_gap(&ly, &ty), sup_gap(&xi, &tx));
        trace.push(ry.max(rx));
        if ry.max(rx) < options.tolerance {
            return Ok(EquilibriumState {
                labor,
                wage: ly.iter().map(|v| v.exp()).collect(),
                amenity: xi,
                choices,
                wage_residual: ry,
                amenity_residual: rx,
                iterations: it,
                trace,
                labor_totals,
            });
        }
        for k in 0..j {
            ly[k] += lam * (ty[k] - ly[k]);
            xi[k] += lam * (tx[k] - xi[k]);
        }
    }
    let tail = trace.len().saturating_sub(10);
    Err(Error::EquilibriumNonConvergence {
        iterations: options.max_iter,
        trace: trace[tail..].to_vec(),
    })
}
