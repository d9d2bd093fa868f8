use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::WeatherPanel;
use crate::error::{Error, Result};
use crate::geo::{CityId, World};
use crate::stats::quantile_linear;

/// Minimum number of long-run window years per city.
pub const MIN_WINDOW_YEARS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockType {
    /// Rainfall strictly below the city's 15th percentile.
    Drought,
    /// Hot days strictly above the city's 85th percentile.
    Heat,
}

impl ShockType {
    pub fn label(self) -> &'static str {
        match self {
            ShockType::Drought => "drought",
            ShockType::Heat => "heat",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShockSet {
    pub shock_type: ShockType,
    /// Shocked (city, year) pairs.
    pub members: BTreeSet<(CityId, i32)>,
    /// Per-city percentile threshold from the long-run window.
    pub thresholds: BTreeMap<CityId, f64>,
}

impl ShockSet {
    pub fn is_shocked(&self, city: CityId, year: i32) -> bool {
        self.members.contains(&(city, year))
    }

    /// Shocked cities in `year`, ascending by id.
    pub fn cities_in(&self, year: i32) -> Vec<CityId> {
        self.members
            .iter()
            .filter(|&&(_, y)| y == year)
            .map(|&(c, _)| c)
            .collect()
    }
}

pub fn classify_shocks(weather: &WeatherPanel, shock_type: ShockType) -> Result<ShockSet> {
    let (w0, w1) = weather.window;
    let value = |o: &crate::data::WeatherObs| match shock_type {
        ShockType::Drought => o.rainfall_mm,
        ShockType::Heat => f64::from(o.hot_days),
    };
    let mut history: BTreeMap<CityId, Vec<f64>> = BTreeMap::new();
    for (&(c, y), o) in &weather.rows {
        let h = history.entry(c).or_default();
        if (w0..=w1).contains(&y) {
            h.push(value(o));
        }
    }
    let mut thresholds = BTreeMap::new();
    for (c, mut h) in history {
        if h.len() < MIN_WINDOW_YEARS {
            return Err(Error::invalid(format!(
                "city {c}: long-run weather window has {} years, need at least {MIN_WINDOW_YEARS}",
                h.len()
            )));
        }
        h.sort_by(f64::total_cmp);
        let p = match shock_type {
            ShockType::Drought => 0.15,
            ShockType::Heat => 0.85,
        };
        thresholds.insert(c, quantile_linear(&h, p));
    }
    let members = weather
        .rows
        .iter()
        .filter(|(&(c, _), o)| {
            let q = thresholds[&c];
            match shock_type {
                ShockType::Drought => value(o) < q,
                ShockType::Heat => value(o) > q,
            }
        })
        .map(|(&k, _)| k)
        .collect();
    Ok(ShockSet {
        shock_type,
        members,
        thresholds,
    })
}

/// Index and distance of the shocked city nearest to city index `j` in
/// `year`. Exact ties go to the lowest city id; `None` when nothing is
/// shocked that year.
pub fn nearest_shocked_city(j: usize, year: i32, shocks: &ShockSet, world: &World) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for c in shocks.cities_in(year) {
        let Some(k) = world.index_of(c) else { continue };
        let d = world.distance(j, k);
        // cities_in is ascending by id, so strict < keeps the lowest id on ties
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((k, d));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::WeatherObs;
    use crate::geo::{City, World};

    fn panel(series: &[(u32, Vec<f64>)]) -> WeatherPanel {
        let mut rows = BTreeMap::new();
        for (c, xs) in series {
            for (k, &x) in xs.iter().enumerate() {
                rows.insert(
                    (CityId(*c), 1980 + k as i32),
                    WeatherObs {
                        rainfall_mm: x,
                        hot_days: (x as u32).min(366),
                    },
                );
            }
        }
        WeatherPanel::new(rows, None).unwrap()
    }

    #[test]
    fn constant_rainfall_never_a_drought() {
        let s = classify_shocks(&panel(&[(1, vec![500.0; 30])]), ShockType::Drought).unwrap();
        assert!(s.members.is_empty());
        let s = classify_shocks(&panel(&[(1, vec![50.0; 30])]), ShockType::Heat).unwrap();
        assert!(s.members.is_empty());
    }

    #[test]
    fn short_window_rejected() {
        assert!(classify_shocks(&panel(&[(1, vec![1.0; 9])]), ShockType::Drought).is_err());
    }

    #[test]
    fn strict_percentile_rule() {
        let xs: Vec<f64> = (1..=20).map(f64::from).collect();
        let s = classify_shocks(&panel(&[(1, xs)]), ShockType::Drought).unwrap();
        // 15th percentile of 1..20 is 3.85, so 1, 2, 3 are droughts
        assert!((s.thresholds[&CityId(1)] - 3.85).abs() < 1e-12);
        assert_eq!(s.members.len(), 3);
    }

    #[test]
    fn translation_equivariant() {
        let xs: Vec<f64> = (0..25).map(|k| ((k * 37) % 11) as f64 * 13.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x + 250.0).collect();
        let a = classify_shocks(&panel(&[(1, xs)]), ShockType::Drought).unwrap();
        let b = classify_shocks(&panel(&[(1, ys)]), ShockType::Drought).unwrap();
        assert_eq!(a.members, b.members);
    }

    fn line_world() -> World {
        let mk = |id: u32, lon: f64| City {
            id: CityId(id),
            name: String::new(),
            lat: 0.0,
            lon,
            state_id: 1,
            district_id: 1,
            avg_wage: 1.0,
            population: 1,
            amenity: None,
        };
        World::new(vec![mk(1, 0.0), mk(2, 1.0), mk(3, 2.0), mk(4, 5.0)]).unwrap()
    }

    #[test]
    fn nearest_shocked() {
        let w = line_world();
        let set = |cs: &[u32]| ShockSet {
            shock_type: ShockType::Drought,
            members: cs.iter().map(|&c| (CityId(c), 2000)).collect(),
            thresholds: BTreeMap::new(),
        };
        assert_eq!(nearest_shocked_city(0, 2000, &set(&[4]), &w).unwrap().0, 3);
        let (k, d) = nearest_shocked_city(1, 2000, &set(&[2, 4]), &w).unwrap();
        assert_eq!((k, d), (1, 0.0));
        // city 2 is equidistant from cities 1 and 3
        assert_eq!(nearest_shocked_city(1, 2000, &set(&[3, 1]), &w).unwrap().0, 0);
        assert!(nearest_shocked_city(1, 2001, &set(&[3]), &w).is_none());
    }
}
