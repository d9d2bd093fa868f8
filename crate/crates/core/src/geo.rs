//! Cities, great-circle geometry, wage quartiles and descriptive transition
//! matrices.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::data::AgentPanel;
use crate::error::{Error, Result};
use crate::stats::quantile_linear;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Worlds with at most this many cities keep a dense distance matrix.
pub const DENSE_DISTANCE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CityId(pub u32);

impl std::fmt::Display for CityId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = LatLon { lat, lon };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::invalid(format!("latitude {} outside [-90, 90]", self.lat)));
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::invalid(format!("longitude {} outside [-180, 180]", self.lon)));
        }
        Ok(())
    }
}

/// Great-circle distance in km on a sphere of radius 6371 km.
pub fn haversine_km(a: LatLon, b: LatLon) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    Ok(haversine_unchecked(a, b))
}

fn haversine_unchecked(a: LatLon, b: LatLon) -> f64 {
    if a == b {
        return 0.0;
    }
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct City {
    pub id: CityId,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub state_id: u32,
    pub district_id: u32,
    /// Average wage, USD per year.
    pub avg_wage: f64,
    pub population: u64,
    /// Non-wage utility component; filled by simulation or calibration.
    pub amenity: Option<f64>,
}

impl City {
    pub fn location(&self) -> LatLon {
        LatLon {
            lat: self.lat,
            lon: self.lon,
        }
    }
}

/// The set of alternatives. Cities are stored sorted by id; most internal
/// code addresses them by position ("city index").
#[derive(Debug)]
pub struct World {
    cities: Vec<City>,
    index: HashMap<CityId, usize>,
    distances: OnceLock<Vec<f64>>,
}

impl Clone for World {
    fn clone(&self) -> Self {
        World {
            cities: self.cities.clone(),
            index: self.index.clone(),
            distances: OnceLock::new(),
        }
    }
}

impl PartialEq for World {
    fn eq(&self, other: &Self) -> bool {
        self.cities == other.cities
    }
}

impl World {
    pub fn new(mut cities: Vec<City>) -> Result<Self> {
        if cities.len() < 2 {
            return Err(Error::invalid(format!(
                "a world needs at least 2 cities, got {}",
                cities.len()
            )));
        }
        cities.sort_by_key(|c| c.id);
        let mut index = HashMap::with_capacity(cities.len());
        let mut district_state: HashMap<u32, u32> = HashMap::new();
        for (i, c) in cities.iter().enumerate() {
            c.location()
                .validate()
                .map_err(|e| Error::invalid(format!("city {}: {e}", c.id)))?;
            if !(c.avg_wage > 0.0 && c.avg_wage.is_finite()) {
                return Err(Error::invalid(format!(
                    "city {}: average wage must be positive, got {}",
                    c.id, c.avg_wage
                )));
            }
            if let Some(a) = c.amenity {
                if !a.is_finite() {
                    return Err(Error::invalid(format!("city {}: amenity not finite", c.id)));
                }
            }
            if index.insert(c.id, i).is_some() {
                return Err(Error::invalid(format!("duplicate city_id {}", c.id)));
            }
            match district_state.insert(c.district_id, c.state_id) {
                Some(s) if s != c.state_id => {
                    return Err(Error::invalid(format!(
                        "district {} belongs to states {} and {}",
                        c.district_id, s, c.state_id
                    )))
                }
                _ => {}
            }
        }
        Ok(World {
            cities,
            index,
            distances: OnceLock::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.cities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cities.is_empty()
    }

    pub fn cities(&self) -> &[City] {
        &self.cities
    }

    pub fn city(&self, idx: usize) -> &City {
        &self.cities[idx]
    }

    pub fn index_of(&self, id: CityId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn require_index(&self, id: CityId) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| Error::invalid(format!("unknown city_id {id}")))
    }

    /// Distance in km between two cities given by index.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let n = self.cities.len();
        if n <= DENSE_DISTANCE_LIMIT {
            let d = self.distances.get_or_init(|| {
                let mut m = vec![0.0; n * n];
                for a in 0..n {
                    for b in (a + 1)..n {
                        let v = haversine_unchecked(self.cities[a].location(), self.cities[b].location());
                        m[a * n + b] = v;
                        m[b * n + a] = v;
                    }
                }
                m
            });
            d[i * n + j]
        } else {
            haversine_unchecked(self.cities[i].location(), self.cities[j].location())
        }
    }

    pub fn same_state(&self, i: usize, j: usize) -> bool {
        self.cities[i].state_id == self.cities[j].state_id
    }

    pub fn log_wages(&self) -> Vec<f64> {
        self.cities.iter().map(|c| c.avg_wage.ln()).collect()
    }

    /// Amenities by city index; cities without one count as zero.
    pub fn amenities(&self) -> Vec<f64> {
        self.cities.iter().map(|c| c.amenity.unwrap_or(0.0)).collect()
    }

    pub fn districts(&self) -> BTreeSet<u32> {
        self.cities.iter().map(|c| c.district_id).collect()
    }

    pub fn with_amenities(&self, amenities: &[f64]) -> World {
        let mut w = self.clone();
        for (c, &a) in w.cities.iter_mut().zip(amenities) {
            c.amenity = Some(a);
        }
        w
    }

    pub fn with_wages(&self, wages: &[f64]) -> World {
        let mut w = self.clone();
        for (c, &y) in w.cities.iter_mut().zip(wages) {
            c.avg_wage = y;
        }
        w
    }
}

/// City-level wage quartiles (population-unweighted).
#[derive(Debug, Clone, PartialEq)]
pub struct WageQuartiles {
    /// 25th, 50th and 75th percentiles of city wages; non-decreasing.
    pub breakpoints: [f64; 3],
    /// Quartile (1..=4) by city index.
    pub assignment: Vec<u8>,
}

impl WageQuartiles {
    pub fn of(&self, city_idx: usize) -> u8 {
        self.assignment[city_idx]
    }
}

/// Quartiles by linear-interpolation percentiles; a wage equal to a
/// breakpoint falls into the lower quartile.
pub fn wage_quartiles(world: &World) -> Result<WageQuartiles> {
    if world.is_empty() {
        return Err(Error::invalid("wage quartiles of an empty world"));
    }
    let mut wages: Vec<f64> = world.cities().iter().map(|c| c.avg_wage).collect();
    wages.sort_by(f64::total_cmp);
    let breakpoints = [
        quantile_linear(&wages, 0.25),
        quantile_linear(&wages, 0.50),
        quantile_linear(&wages, 0.75),
    ];
    let assignment = world
        .cities()
        .iter()
        .map(|c| 1 + breakpoints.iter().filter(|&&b| c.avg_wage > b).count() as u8)
        .collect();
    Ok(WageQuartiles {
        breakpoints,
        assignment,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    /// `probs[r][c]` = P(quartile c+1 at t1 | quartile r+1 at t0).
    pub probs: [[f64; 4]; 4],
    pub row_counts: [usize; 4],
    /// Rows without any agent in the origin quartile; left all-zero.
    pub empty_rows: [bool; 4],
}

pub fn transition_matrix(
    panel: &AgentPanel,
    world: &World,
    t0: i32,
    t1: i32,
    quartiles: &WageQuartiles,
) -> Result<TransitionMatrix> {
    if quartiles.assignment.len() != world.len() {
        return Err(Error::invalid("quartiles do not cover the world"));
    }
    let mut counts = [[0usize; 4]; 4];
    for agent in panel.agent_ids() {
        let from = panel.residence(agent, t0).ok_or_else(|| {
            Error::invalid(format!("agent {agent} has no residence in year {t0}"))
        })?;
        let to = panel.residence(agent, t1).ok_or_else(|| {
            Error::invalid(format!("agent {agent} has no residence in year {t1}"))
        })?;
        let r = quartiles.of(world.require_index(from)?) as usize - 1;
        let c = quartiles.of(world.require_index(to)?) as usize - 1;
        counts[r][c] += 1;
    }
    let mut probs = [[0.0; 4]; 4];
    let mut row_counts = [0; 4];
    let mut empty_rows = [false; 4];
    for r in 0..4 {
        let total: usize = counts[r].iter().sum();
        row_counts[r] = total;
        if total == 0 {
            empty_rows[r] = true;
            continue;
        }
        for c in 0..4 {
            probs[r][c] = counts[r][c] as f64 / total as f64;
        }
    }
    Ok(TransitionMatrix {
        probs,
        row_counts,
        empty_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn city(id: u32, lat: f64, lon: f64, wage: f64) -> City {
        City {
            id: CityId(id),
            name: format!("c{id}"),
            lat,
            lon,
            state_id: id,
            district_id: id,
            avg_wage: wage,
            population: 100,
            amenity: None,
        }
    }

    #[test]
    fn haversine_identity_and_antipode() {
        let p = LatLon::new(28.61, 77.21).unwrap();
        assert_eq!(haversine_km(p, p).unwrap(), 0.0);
        let d = haversine_km(LatLon::new(0.0, 0.0).unwrap(), LatLon::new(0.0, 180.0).unwrap()).unwrap();
        assert!((d - std::f64::consts::PI * 6371.0).abs() < 1e-9);
        assert!((d - 20015.09).abs() < 0.01);
    }

    #[test]
    fn haversine_delhi_mumbai() {
        // closed-form haversine evaluated independently with R = 6371 km
        let delhi = LatLon::new(28.6139, 77.2090).unwrap();
        let mumbai = LatLon::new(19.0760, 72.8777).unwrap();
        let d = haversine_km(delhi, mumbai).unwrap();
        assert!((d - 1148.09).abs() < 1.0, "{d}");
    }

    #[test]
    fn haversine_rejects_bad_coordinates() {
        let ok = LatLon { lat: 0.0, lon: 0.0 };
        assert!(haversine_km(LatLon { lat: 91.0, lon: 0.0 }, ok).is_err());
        assert!(haversine_km(ok, LatLon { lat: 0.0, lon: -180.5 }).is_err());
        assert!(LatLon::new(-90.0, 180.0).is_ok());
    }

    proptest! {
        #[test]
        fn haversine_is_a_metric(
            a in (-90.0f64..90.0, -180.0f64..180.0),
            b in (-90.0f64..90.0, -180.0f64..180.0),
            c in (-90.0f64..90.0, -180.0f64..180.0),
        ) {
            let (a, b, c) = (
                LatLon { lat: a.0, lon: a.1 },
                LatLon { lat: b.0, lon: b.1 },
                LatLon { lat: c.0, lon: c.1 },
            );
            let ab = haversine_km(a, b).unwrap();
            prop_assert_eq!(ab, haversine_km(b, a).unwrap());
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(haversine_km(a, a).unwrap(), 0.0);
            let ac = haversine_km(a, c).unwrap();
            let bc = haversine_km(b, c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
        }
    }

    #[test]
    fn world_validation() {
        assert!(World::new(vec![city(1, 0.0, 0.0, 1.0)]).is_err());
        assert!(World::new(vec![city(1, 0.0, 0.0, 1.0), city(1, 1.0, 1.0, 1.0)]).is_err());
        let mut bad = city(2, 1.0, 1.0, 1.0);
        bad.district_id = 1;
        assert!(World::new(vec![city(1, 0.0, 0.0, 1.0), bad]).is_err());
        assert!(World::new(vec![city(1, 0.0, 0.0, 1.0), city(2, 95.0, 0.0, 1.0)]).is_err());
        assert!(World::new(vec![city(1, 0.0, 0.0, 1.0), city(2, 1.0, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn distances_symmetric_and_zero_on_diagonal() {
        let w = World::new(vec![
            city(3, 10.0, 70.0, 1.0),
            city(1, 20.0, 80.0, 1.0),
            city(2, 20.0, 80.0, 1.0),
        ])
        .unwrap();
        assert_eq!(w.city(0).id, CityId(1));
        for i in 0..3 {
            assert_eq!(w.distance(i, i), 0.0);
            for j in 0..3 {
                assert_eq!(w.distance(i, j), w.distance(j, i));
            }
        }
        // identical coordinates
        assert_eq!(w.distance(0, 1), 0.0);
        assert!(w.distance(0, 2) > 0.0);
    }

    fn world_with_wages(wages: &[f64]) -> World {
        World::new(
            wages
                .iter()
                .enumerate()
                .map(|(i, &w)| city(i as u32 + 1, i as f64, 0.0, w))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn quartiles_one_city_each() {
        let q = wage_quartiles(&world_with_wages(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(q.assignment, vec![1, 2, 3, 4]);
    }

    #[test]
    fn quartiles_all_tied() {
        let q = wage_quartiles(&world_with_wages(&[5.0; 6])).unwrap();
        assert!(q.assignment.iter().all(|&a| a == 1));
    }

    #[test]
    fn quartiles_eight_cities() {
        let wages: Vec<f64> = (1..=8).map(f64::from).collect();
        let q = wage_quartiles(&world_with_wages(&wages)).unwrap();
        assert_eq!(q.assignment, vec![1, 1, 2, 2, 3, 3, 4, 4]);
    }

    proptest! {
        #[test]
        fn quartiles_ignore_input_order(mut wages in prop::collection::vec(1.0f64..100.0, 4..30), seed in 0u64..1000) {
            let base = world_with_wages(&wages);
            let qa = wage_quartiles(&base).unwrap();
            // rotate the (id, wage) pairs before construction
            let mut cities: Vec<City> = base.cities().to_vec();
            let k = (seed as usize) % cities.len();
            cities.rotate_left(k);
            let q2 = wage_quartiles(&World::new(cities).unwrap()).unwrap();
            prop_assert_eq!(&qa.assignment, &q2.assignment);
            prop_assert!(qa.assignment.iter().all(|&a| (1..=4).contains(&a)));
            wages.clear();
        }
    }
}
