use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};

use super::DgpConfig;
use crate::data::{IndustryObs, IndustryPanel};
use crate::error::Result;
use crate::geo::{haversine_km, City, CityId, LatLon, World};
use crate::instruments::bartik;
use crate::rng::{substream, Stream};
use crate::stats::{mean, variance};

fn nearest(p: LatLon, seeds: &[(usize, LatLon)]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (s, &(_, q)) in seeds.iter().enumerate() {
        let d = haversine_km(p, q).expect("generated coordinates are valid");
        if d < best.1 {
            best = (s, d);
        }
    }
    best.0
}

/// Cities uniform on the bounding box, states and districts as Voronoi
/// cells of randomly chosen seed cities (so every unit is non-empty and
/// contiguous), log-normal populations, wages driven partly by the
/// industry shift-share and amenities correlated with the remainder.
pub fn generate_world(config: &DgpConfig) -> Result<World> {
    config.validate()?;
    let n = config.n_cities;
    let mut rng = substream(config.seed, Stream::World, 0, 0);
    let coords: Vec<LatLon> = (0..n)
        .map(|_| LatLon {
            lat: rng.random_range(config.lat_range.0..config.lat_range.1),
            lon: rng.random_range(config.lon_range.0..config.lon_range.1),
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let state_seeds: Vec<(usize, LatLon)> = order[..config.n_states].iter().map(|&i| (i, coords[i])).collect();
    let state_of: Vec<usize> = (0..n).map(|i| nearest(coords[i], &state_seeds)).collect();
    let district_seeds: Vec<(usize, LatLon)> = order[..config.n_districts].iter().map(|&i| (i, coords[i])).collect();
    let district_of: Vec<usize> = (0..n)
        .map(|i| {
            let own: Vec<(usize, LatLon)> = district_seeds
                .iter()
                .copied()
                .filter(|&(s, _)| state_of[s] == state_of[i])
                .collect();
            let k = nearest(coords[i], &own);
            district_seeds.iter().position(|&(s, _)| s == own[k].0).unwrap()
        })
        .collect();
    let pop_dist = Normal::new(config.population_log_mean, config.population_log_sd).expect("sd validated");
    let population: Vec<u64> = (0..n).map(|_| (pop_dist.sample(&mut rng).exp().round() as u64).max(1)).collect();
    let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();

    let mut cities: Vec<City> = (0..n)
        .map(|i| City {
            id: CityId(i as u32 + 1),
            name: format!("city_{}", i + 1),
            lat: coords[i].lat,
            lon: coords[i].lon,
            state_id: state_of[i] as u32 + 1,
            district_id: district_of[i] as u32 + 1,
            avg_wage: 1.0,
            population: population[i],
            amenity: None,
        })
        .collect();

    let industries = industries_for(&cities, config)?;
    let b = bartik(&industries)?;
    let bw: Vec<f64> = cities.iter().map(|c| b.delta_wage[&c.district_id]).collect();
    let (bm, bsd) = (mean(&bw), variance(&bw).sqrt());
    let s = config.bartik_share;
    let rho = config.rho_aw;
    for (i, c) in cities.iter_mut().enumerate() {
        let bz = if bsd > 0.0 { (bw[i] - bm) / bsd } else { 0.0 };
        let z = s.sqrt() * bz + (1.0 - s).sqrt() * v[i];
        c.avg_wage = (config.log_wage_mean + config.log_wage_sd * z).exp();
        c.amenity = Some(config.amenity_sd * (rho * v[i] + (1.0 - rho * rho).sqrt() * u[i]));
    }
    World::new(cities)
}

/// District-by-industry employment and wages in the two industry years.
/// Reproduces exactly the panel used to draw the world's wages.
pub fn simulate_industries(world: &World, config: &DgpConfig) -> Result<IndustryPanel> {
    industries_for(world.cities(), config)
}

fn industries_for(cities: &[City], config: &DgpConfig) -> Result<IndustryPanel> {
    let mut district_pop: BTreeMap<u32, f64> = BTreeMap::new();
    for c in cities {
        *district_pop.entry(c.district_id).or_default() += c.population as f64;
    }
    let k = config.n_industries;
    let mut rng = substream(config.seed, Stream::Industry, 0, 0);
    let base_wage: Vec<f64> = (0..k).map(|_| 9000.0 * (0.3 * rng.sample::<f64, _>(StandardNormal)).exp()).collect();
    let wage_growth: Vec<f64> = (0..k).map(|_| 0.1 + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    let labor_growth: Vec<f64> = (0..k).map(|_| 0.05 + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    let share_dist = Gamma::new(0.7, 1.0).expect("valid shape");
    let (y0, y1) = config.industry_years;
    let mut rows = BTreeMap::new();
    for (&d, &pop) in &district_pop {
        let mut r = substream(config.seed, Stream::Industry, u64::from(d), 1);
        let raw: Vec<f64> = (0..k).map(|_| share_dist.sample(&mut r) + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        for j in 0..k {
            let code = format!("IND{:02}", j + 1);
            let l0 = 0.4 * pop * raw[j] / total;
            let w0 = base_wage[j] * (0.1 * r.sample::<f64, _>(StandardNormal)).exp();
            let l1 = l0 * (labor_growth[j] + 0.05 * r.sample::<f64, _>(StandardNormal)).exp();
            let w1 = w0 * (wage_growth[j] + 0.05 * r.sample::<f64, _>(StandardNormal)).exp();
            rows.insert((d, code.clone(), y0), IndustryObs { employment: l0, avg_wage: w0 });
            rows.insert((d, code, y1), IndustryObs { employment: l1, avg_wage: w1 });
        }
    }
    IndustryPanel::new(y0, y1, rows)
}
