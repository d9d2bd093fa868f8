use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{CityId, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(pub u64);

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demographics {
    pub birth_year: i32,
    pub college: bool,
    pub device_price: f64,
    pub hometown: CityId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    pub id: AgentId,
    pub demographics: Demographics,
    /// Residence for each panel year, starting at `AgentPanel::first_year`.
    pub residences: Vec<CityId>,
}

/// Balanced residence panel: every agent has one residence per year in
/// `[first_year, last_year]`, and lives in the hometown in the first year.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPanel {
    first_year: i32,
    n_years: usize,
    agents: Vec<AgentRecord>,
    index: HashMap<AgentId, usize>,
}

impl AgentPanel {
    pub fn new(first_year: i32, n_years: usize, mut agents: Vec<AgentRecord>) -> Result<Self> {
        agents.sort_by_key(|a| a.id);
        let mut index = HashMap::with_capacity(agents.len());
        for (i, a) in agents.iter().enumerate() {
            if index.insert(a.id, i).is_some() {
                return Err(Error::invalid(format!("duplicate agent_id {}", a.id)));
            }
            if a.residences.len() != n_years {
                return Err(Error::invalid(format!(
                    "agent {} has {} residence years, expected {} consecutive years from {}",
                    a.id,
                    a.residences.len(),
                    n_years,
                    first_year
                )));
            }
            if n_years > 0 && a.residences[0] != a.demographics.hometown {
                return Err(Error::invalid(format!(
                    "agent {} does not live in hometown {} in {}",
                    a.id, a.demographics.hometown, first_year
                )));
            }
            if !(a.demographics.device_price >= 0.0) {
                return Err(Error::invalid(format!("agent {}: negative device price", a.id)));
            }
        }
        Ok(AgentPanel {
            first_year,
            n_years,
            agents,
            index,
        })
    }

    pub fn first_year(&self) -> i32 {
        self.first_year
    }

    pub fn last_year(&self) -> i32 {
        self.first_year + self.n_years as i32 - 1
    }

    pub fn n_years(&self) -> usize {
        self.n_years
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.n_years as i32).map(move |k| self.first_year + k)
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn agents(&self) -> &[AgentRecord] {
        &self.agents
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentRecord> {
        self.index.get(&id).map(|&i| &self.agents[i])
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.agents.iter().map(|a| a.id)
    }

    pub fn residence(&self, id: AgentId, year: i32) -> Option<CityId> {
        let a = self.agent(id)?;
        let k = year.checked_sub(self.first_year)?;
        a.residences.get(usize::try_from(k).ok()?).copied()
    }

    pub fn validate_against(&self, world: &World) -> Result<()> {
        for a in &self.agents {
            world.require_index(a.demographics.hometown)?;
            for c in &a.residences {
                world.require_index(*c)?;
            }
        }
        Ok(())
    }
}

/// Sparse friend counts: absent (agent, year, city) means zero friends.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkPanel {
    rows: BTreeMap<(AgentId, i32), Vec<(CityId, u32)>>,
}

impl NetworkPanel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replace the friend distribution of one agent-year; zero counts are
    /// dropped and cities are kept sorted.
    pub fn set(&mut self, agent: AgentId, year: i32, mut friends: Vec<(CityId, u32)>) {
        friends.retain(|&(_, n)| n > 0);
        friends.sort_by_key(|&(c, _)| c);
        if friends.is_empty() {
            self.rows.remove(&(agent, year));
        } else {
            self.rows.insert((agent, year), friends);
        }
    }

    pub(crate) fn insert_row(&mut self, agent: AgentId, year: i32, city: CityId, count: u32) -> bool {
        let v = self.rows.entry((agent, year)).or_default();
        match v.binary_search_by_key(&city, |&(c, _)| c) {
            Ok(_) => false,
            Err(pos) => {
                v.insert(pos, (city, count));
                true
            }
        }
    }

    pub fn friends(&self, agent: AgentId, year: i32) -> &[(CityId, u32)] {
        self.rows.get(&(agent, year)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn count(&self, agent: AgentId, year: i32, city: CityId) -> u32 {
        let f = self.friends(agent, year);
        f.binary_search_by_key(&city, |&(c, _)| c)
            .map(|i| f[i].1)
            .unwrap_or(0)
    }

    pub fn total(&self, agent: AgentId, year: i32) -> u64 {
        self.friends(agent, year).iter().map(|&(_, n)| u64::from(n)).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgentId, i32, &[(CityId, u32)])> {
        self.rows.iter().map(|(&(a, y), v)| (a, y, v.as_slice()))
    }

    pub fn n_rows(&self) -> usize {
        self.rows.values().map(Vec::len).sum()
    }

    pub fn years(&self) -> std::collections::BTreeSet<i32> {
        self.rows.keys().map(|&(_, y)| y).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherObs {
    pub rainfall_mm: f64,
    pub hot_days: u32,
}

/// Annual weather per city. `window` is the inclusive year range whose
/// values define each city's long-run distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherPanel {
    pub rows: BTreeMap<(CityId, i32), WeatherObs>,
    pub window: (i32, i32),
}

impl WeatherPanel {
    pub fn new(rows: BTreeMap<(CityId, i32), WeatherObs>, window: Option<(i32, i32)>) -> Result<Self> {
        for (&(c, y), o) in &rows {
            if !(o.rainfall_mm >= 0.0 && o.rainfall_mm.is_finite()) {
                return Err(Error::invalid(format!("city {c} year {y}: rainfall must be >= 0")));
            }
            if o.hot_days > 366 {
                return Err(Error::invalid(format!("city {c} year {y}: hot_days > 366")));
            }
        }
        let window = match window {
            Some(w) => w,
            None => {
                let lo = rows.keys().map(|&(_, y)| y).min().unwrap_or(0);
                let hi = rows.keys().map(|&(_, y)| y).max().unwrap_or(-1);
                (lo, hi)
            }
        };
        Ok(WeatherPanel { rows, window })
    }

    pub fn get(&self, city: CityId, year: i32) -> Option<&WeatherObs> {
        self.rows.get(&(city, year))
    }

    pub fn cities(&self) -> std::collections::BTreeSet<CityId> {
        self.rows.keys().map(|&(c, _)| c).collect()
    }

    pub fn years(&self) -> std::collections::BTreeSet<i32> {
        self.rows.keys().map(|&(_, y)| y).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndustryObs {
    pub employment: f64,
    pub avg_wage: f64,
}

/// District-by-industry employment and wages in a base and an end year.
#[derive(Debug, Clone, PartialEq)]
pub struct IndustryPanel {
    pub base_year: i32,
    pub end_year: i32,
    pub rows: BTreeMap<(u32, String, i32), IndustryObs>,
}

impl IndustryPanel {
    pub fn new(base_year: i32, end_year: i32, rows: BTreeMap<(u32, String, i32), IndustryObs>) -> Result<Self> {
        if base_year >= end_year {
            return Err(Error::invalid("industry base year must precede the end year"));
        }
        for ((d, k, y), o) in &rows {
            if *y != base_year && *y != end_year {
                return Err(Error::invalid(format!(
                    "district {d} industry {k}: year {y} is neither base {base_year} nor end {end_year}"
                )));
            }
            if !(o.employment >= 0.0 && o.avg_wage >= 0.0) {
                return Err(Error::invalid(format!(
                    "district {d} industry {k} year {y}: negative employment or wage"
                )));
            }
        }
        Ok(IndustryPanel {
            base_year,
            end_year,
            rows,
        })
    }

    pub fn districts(&self) -> std::collections::BTreeSet<u32> {
        self.rows.keys().map(|(d, _, _)| *d).collect()
    }

    pub fn industries(&self) -> std::collections::BTreeSet<String> {
        self.rows.keys().map(|(_, k, _)| k.clone()).collect()
    }

    pub fn get(&self, district: u32, industry: &str, year: i32) -> Option<&IndustryObs> {
        self.rows.get(&(district, industry.to_string(), year))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurveyRow {
    pub respondent: u64,
    pub current: CityId,
    pub dream: CityId,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurveyChoices {
    pub rows: Vec<SurveyRow>,
}

/// Named per-city covariates (`city_covariates.csv`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CityCovariates {
    pub values: BTreeMap<String, BTreeMap<CityId, f64>>,
}

impl CityCovariates {
    /// Covariate by city index; errors if any city lacks a value.
    pub fn by_index(&self, name: &str, world: &World) -> Result<Vec<f64>> {
        let m = self
            .values
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown city covariate `{name}`")))?;
        world
            .cities()
            .iter()
            .map(|c| {
                m.get(&c.id)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("covariate `{name}` missing for city {}", c.id)))
            })
            .collect()
    }
}
