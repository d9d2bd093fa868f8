//! CSV schemas. Headers must match exactly; leading `#` lines are treated as
//! provenance stamps and skipped.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use super::panel::*;
use crate::error::{Error, Result};
use crate::geo::{City, CityId, World};

pub const CITIES_HEADER: &[&str] = &[
    "city_id", "name", "lat", "lon", "state_id", "district_id", "avg_wage_usd", "population",
];
pub const LOCATIONS_HEADER: &[&str] = &["agent_id", "year", "city_id"];
pub const AGENTS_HEADER: &[&str] = &[
    "agent_id", "birth_year", "college_flag", "device_price_usd", "hometown_city_id",
];
pub const NETWORKS_HEADER: &[&str] = &["agent_id", "year", "city_id", "friend_count"];
pub const WEATHER_HEADER: &[&str] = &["city_id", "year", "rainfall_mm", "hot_days"];
pub const INDUSTRIES_HEADER: &[&str] = &["district_id", "industry_code", "year", "employment", "avg_wage_usd"];
pub const SURVEY_HEADER: &[&str] = &["respondent_id", "current_city_id", "dream_city_id"];
pub const COVARIATES_HEADER: &[&str] = &["city_id", "name", "value"];
pub const AMENITIES_HEADER: &[&str] = &["city_id", "amenity", "se"];

struct Rows<'p> {
    path: &'p Path,
    records: Vec<(usize, csv::StringRecord)>,
}

fn read_rows<'p>(path: &'p Path, header: &[&str]) -> Result<Rows<'p>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(csv_err)?;
    let found = rdr.headers().map_err(csv_err)?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Data {
            path: path.to_path_buf(),
            row: 1,
            message: format!(
                "header mismatch: expected `{}`, found `{}`",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        records.push((line, rec));
    }
    Ok(Rows { path, records })
}

impl Rows<'_> {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Data {
            path: self.path.to_path_buf(),
            row: line,
            message: message.into(),
        }
    }

    fn field<T: FromStr>(&self, line: usize, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
        let raw = rec.get(idx).unwrap_or("");
        raw.trim()
            .parse::<T>()
            .map_err(|_| self.err(line, format!("column `{name}`: cannot parse `{raw}`")))
    }

    fn city(&self, line: usize, rec: &csv::StringRecord, idx: usize, name: &str, world: &World) -> Result<CityId> {
        let id = CityId(self.field(line, rec, idx, name)?);
        if world.index_of(id).is_none() {
            return Err(self.err(line, format!("column `{name}`: unknown city_id {id}")));
        }
        Ok(id)
    }
}

pub fn load_world(path: &Path) -> Result<World> {
    let rows = read_rows(path, CITIES_HEADER)?;
    let mut cities = Vec::with_capacity(rows.records.len());
    let mut seen = HashSet::new();
    for (line, rec) in &rows.records {
        let line = *line;
        let id = CityId(rows.field(line, rec, 0, "city_id")?);
        if !seen.insert(id) {
            return Err(rows.err(line, format!("duplicate city_id {id}")));
        }
        let city = City {
            id,
            name: rec.get(1).unwrap_or("").to_string(),
            lat: rows.field(line, rec, 2, "lat")?,
            lon: rows.field(line, rec, 3, "lon")?,
            state_id: rows.field(line, rec, 4, "state_id")?,
            district_id: rows.field(line, rec, 5, "district_id")?,
            avg_wage: rows.field(line, rec, 6, "avg_wage_usd")?,
            population: rows.field(line, rec, 7, "population")?,
            amenity: None,
        };
        if !(-90.0..=90.0).contains(&city.lat) || !(-180.0..=180.0).contains(&city.lon) {
            return Err(rows.err(line, format!("coordinates ({}, {}) out of range", city.lat, city.lon)));
        }
        if !(city.avg_wage > 0.0) {
            return Err(rows.err(line, format!("avg_wage_usd must be > 0, got {}", city.avg_wage)));
        }
        cities.push(city);
    }
    World::new(cities).map_err(|e| rows.err(0, e.to_string()))
}

/// Reads `agents.csv` and `locations.csv` into a balanced panel.
pub fn load_agent_panel(agents_path: &Path, locations_path: &Path, world: &World) -> Result<AgentPanel> {
    let arows = read_rows(agents_path, AGENTS_HEADER)?;
    let mut demo: BTreeMap<AgentId, Demographics> = BTreeMap::new();
    for (line, rec) in &arows.records {
        let line = *line;
        let id = AgentId(arows.field(line, rec, 0, "agent_id")?);
        let flag: u8 = arows.field(line, rec, 2, "college_flag")?;
        if flag > 1 {
            return Err(arows.err(line, format!("college_flag must be 0 or 1, got {flag}")));
        }
        let price: f64 = arows.field(line, rec, 3, "device_price_usd")?;
        if !(price >= 0.0) {
            return Err(arows.err(line, format!("device_price_usd must be >= 0, got {price}")));
        }
        let d = Demographics {
            birth_year: arows.field(line, rec, 1, "birth_year")?,
            college: flag == 1,
            device_price: price,
            hometown: arows.city(line, rec, 4, "hometown_city_id", world)?,
        };
        if demo.insert(id, d).is_some() {
            return Err(arows.err(line, format!("duplicate agent_id {id}")));
        }
    }

    let lrows = read_rows(locations_path, LOCATIONS_HEADER)?;
    let mut loc: BTreeMap<AgentId, BTreeMap<i32, CityId>> = BTreeMap::new();
    let (mut lo, mut hi) = (i32::MAX, i32::MIN);
    for (line, rec) in &lrows.records {
        let line = *line;
        let id = AgentId(lrows.field(line, rec, 0, "agent_id")?);
        if !demo.contains_key(&id) {
            return Err(lrows.err(line, format!("agent_id {id} not present in agents table")));
        }
        let year: i32 = lrows.field(line, rec, 1, "year")?;
        let city = lrows.city(line, rec, 2, "city_id", world)?;
        if loc.entry(id).or_default().insert(year, city).is_some() {
            return Err(lrows.err(line, format!("duplicate (agent_id, year) = ({id}, {year})")));
        }
        lo = lo.min(year);
        hi = hi.max(year);
    }
    if loc.is_empty() {
        if !demo.is_empty() {
            return Err(Error::invalid("agents table has rows but locations table is empty"));
        }
        return AgentPanel::new(0, 0, Vec::new());
    }
    let n_years = (hi - lo + 1) as usize;
    let mut agents = Vec::with_capacity(demo.len());
    for (id, d) in demo {
        let years = loc.remove(&id).unwrap_or_default();
        let mut residences = Vec::with_capacity(n_years);
        for y in lo..=hi {
            match years.get(&y) {
                Some(&c) => residences.push(c),
                None => {
                    return Err(Error::invalid(format!(
                        "{}: agent {id} has no residence in year {y}",
                        locations_path.display()
                    )))
                }
            }
        }
        agents.push(AgentRecord {
            id,
            demographics: d,
            residences,
        });
    }
    AgentPanel::new(lo, n_years, agents)
}

pub fn load_network_panel(path: &Path, world: &World, agents: &AgentPanel) -> Result<NetworkPanel> {
    let rows = read_rows(path, NETWORKS_HEADER)?;
    let mut net = NetworkPanel::new();
    for (line, rec) in &rows.records {
        let line = *line;
        let id = AgentId(rows.field(line, rec, 0, "agent_id")?);
        if agents.agent(id).is_none() {
            return Err(rows.err(line, format!("unknown agent_id {id}")));
        }
        let year: i32 = rows.field(line, rec, 1, "year")?;
        if agents.n_years() > 0 && !(agents.first_year()..=agents.last_year()).contains(&year) {
            return Err(rows.err(line, format!("year {year} outside the residence panel")));
        }
        let city = rows.city(line, rec, 2, "city_id", world)?;
        let count: u32 = rows.field(line, rec, 3, "friend_count")?;
        if count == 0 {
            return Err(rows.err(line, "friend_count must be >= 1 (omit zero rows)"));
        }
        if !net.insert_row(id, year, city, count) {
            return Err(rows.err(line, format!("duplicate (agent_id, year, city_id) = ({id}, {year}, {city})")));
        }
    }
    Ok(net)
}

pub fn load_weather(path: &Path, world: &World, window: Option<(i32, i32)>) -> Result<WeatherPanel> {
    let rows = read_rows(path, WEATHER_HEADER)?;
    let mut out = BTreeMap::new();
    for (line, rec) in &rows.records {
        let line = *line;
        let city = rows.city(line, rec, 0, "city_id", world)?;
        let year: i32 = rows.field(line, rec, 1, "year")?;
        let rainfall_mm: f64 = rows.field(line, rec, 2, "rainfall_mm")?;
        if !(rainfall_mm >= 0.0) {
            return Err(rows.err(line, format!("rainfall_mm must be >= 0, got {rainfall_mm}")));
        }
        let hot_days: u32 = rows.field(line, rec, 3, "hot_days")?;
        if hot_days > 366 {
            return Err(rows.err(line, format!("hot_days must be <= 366, got {hot_days}")));
        }
        if out
            .insert((city, year), WeatherObs { rainfall_mm, hot_days })
            .is_some()
        {
            return Err(rows.err(line, format!("duplicate (city_id, year) = ({city}, {year})")));
        }
    }
    WeatherPanel::new(out, window)
}

pub fn load_industries(path: &Path, world: &World) -> Result<IndustryPanel> {
    let rows = read_rows(path, INDUSTRIES_HEADER)?;
    let districts = world.districts();
    let mut out = BTreeMap::new();
    let mut years = std::collections::BTreeSet::new();
    for (line, rec) in &rows.records {
        let line = *line;
        let d: u32 = rows.field(line, rec, 0, "district_id")?;
        if !districts.contains(&d) {
            return Err(rows.err(line, format!("unknown district_id {d}")));
        }
        let k = rec.get(1).unwrap_or("").trim().to_string();
        if k.is_empty() {
            return Err(rows.err(line, "empty industry_code"));
        }
        let year: i32 = rows.field(line, rec, 2, "year")?;
        let employment: f64 = rows.field(line, rec, 3, "employment")?;
        let avg_wage: f64 = rows.field(line, rec, 4, "avg_wage_usd")?;
        if !(employment >= 0.0) || !(avg_wage >= 0.0) {
            return Err(rows.err(line, "employment and avg_wage_usd must be >= 0"));
        }
        years.insert(year);
        if years.len() > 2 {
            return Err(rows.err(line, format!("more than two years present (saw {year})")));
        }
        if out
            .insert((d, k.clone(), year), IndustryObs { employment, avg_wage })
            .is_some()
        {
            return Err(rows.err(line, format!("duplicate (district_id, industry_code, year) = ({d}, {k}, {year})")));
        }
    }
    if out.is_empty() {
        return Ok(IndustryPanel {
            base_year: 0,
            end_year: 0,
            rows: out,
        });
    }
    let base = *years.iter().next().unwrap();
    let end = *years.iter().last().unwrap();
    if base == end {
        return Err(Error::invalid(format!("{}: only one year ({base}) present", path.display())));
    }
    IndustryPanel::new(base, end, out)
}

pub fn load_survey(path: &Path, world: &World) -> Result<SurveyChoices> {
    let rows = read_rows(path, SURVEY_HEADER)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.records.len());
    for (line, rec) in &rows.records {
        let line = *line;
        let respondent: u64 = rows.field(line, rec, 0, "respondent_id")?;
        if !seen.insert(respondent) {
            return Err(rows.err(line, format!("duplicate respondent_id {respondent}")));
        }
        out.push(SurveyRow {
            respondent,
            current: rows.city(line, rec, 1, "current_city_id", world)?,
            dream: rows.city(line, rec, 2, "dream_city_id", world)?,
        });
    }
    Ok(SurveyChoices { rows: out })
}

pub fn load_city_covariates(path: &Path, world: &World) -> Result<CityCovariates> {
    let rows = read_rows(path, COVARIATES_HEADER)?;
    let mut values: BTreeMap<String, BTreeMap<CityId, f64>> = BTreeMap::new();
    for (line, rec) in &rows.records {
        let line = *line;
        let city = rows.city(line, rec, 0, "city_id", world)?;
        let name = rec.get(1).unwrap_or("").trim().to_string();
        if name.is_empty() {
            return Err(rows.err(line, "empty covariate name"));
        }
        let v: f64 = rows.field(line, rec, 2, "value")?;
        if !v.is_finite() {
            return Err(rows.err(line, "covariate value not finite"));
        }
        if values.entry(name.clone()).or_default().insert(city, v).is_some() {
            return Err(rows.err(line, format!("duplicate (city_id, name) = ({city}, {name})")));
        }
    }
    Ok(CityCovariates { values })
}

/// Reads `amenities.csv`; returns amenity by city index (cities absent
/// from the file are an error).
pub fn load_amenities(path: &Path, world: &World) -> Result<Vec<f64>> {
    let rows = read_rows(path, AMENITIES_HEADER)?;
    let mut vals: HashMap<CityId, f64> = HashMap::new();
    for (line, rec) in &rows.records {
        let line = *line;
        let city = rows.city(line, rec, 0, "city_id", world)?;
        let v: f64 = rows.field(line, rec, 1, "amenity")?;
        if vals.insert(city, v).is_some() {
            return Err(rows.err(line, format!("duplicate city_id {city}")));
        }
    }
    world
        .cities()
        .iter()
        .map(|c| {
            vals.get(&c.id)
                .copied()
                .ok_or_else(|| Error::invalid(format!("{}: no amenity for city {}", path.display(), c.id)))
        })
        .collect()
}

// ---------------------------------------------------------------- writing

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Int(Vec<i64>),
    Float(Vec<f64>),
    Str(Vec<String>),
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::Int(v) => v.len(),
            Column::Float(v) => v.len(),
            Column::Str(v) => v.len(),
        }
    }

    fn render(&self, i: usize) -> String {
        match self {
            Column::Int(v) => v[i].to_string(),
            Column::Float(v) => fmt_float(v[i]),
            Column::Str(v) => v[i].clone(),
        }
    }
}

/// Ordered list of named columns.
pub type Table = Vec<(String, Column)>;

/// Renders a float with 17 significant digits (bit-stable round trip).
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..17).contains(&e) {
        format!("{:.*}", (16 - e) as usize, x)
    } else {
        format!("{:.16e}", x)
    }
}

/// Writes columns in the given order. `stamp` becomes a leading `# ` line.
pub fn write_table(path: &Path, table: &Table, stamp: Option<&str>) -> Result<()> {
    let n = table.first().map(|(_, c)| c.len()).unwrap_or(0);
    if let Some((name, _)) = table.iter().find(|(_, c)| c.len() != n) {
        return Err(Error::invalid(format!("column `{name}` has a different length")));
    }
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    if let Some(s) = stamp {
        writeln!(out, "# {s}").map_err(io_err)?;
    }
    let mut w = csv::WriterBuilder::new().from_writer(out);
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(table.iter().map(|(name, _)| name.as_str()))
        .map_err(csv_err)?;
    for i in 0..n {
        w.write_record(table.iter().map(|(_, c)| c.render(i)))
            .map_err(csv_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

fn col_i<T: Copy + Into<i64>>(v: impl Iterator<Item = T>) -> Column {
    Column::Int(v.map(Into::into).collect())
}

pub fn write_world(path: &Path, world: &World, stamp: Option<&str>) -> Result<()> {
    let c = world.cities();
    let table: Table = vec![
        ("city_id".into(), col_i(c.iter().map(|c| c.id.0))),
        ("name".into(), Column::Str(c.iter().map(|c| c.name.clone()).collect())),
        ("lat".into(), Column::Float(c.iter().map(|c| c.lat).collect())),
        ("lon".into(), Column::Float(c.iter().map(|c| c.lon).collect())),
        ("state_id".into(), col_i(c.iter().map(|c| c.state_id))),
        ("district_id".into(), col_i(c.iter().map(|c| c.district_id))),
        ("avg_wage_usd".into(), Column::Float(c.iter().map(|c| c.avg_wage).collect())),
        ("population".into(), Column::Int(c.iter().map(|c| c.population as i64).collect())),
    ];
    write_table(path, &table, stamp)
}

pub fn write_amenities(path: &Path, world: &World, amenities: &[f64], se: Option<&[f64]>, stamp: Option<&str>) -> Result<()> {
    let c = world.cities();
    let table: Table = vec![
        ("city_id".into(), col_i(c.iter().map(|c| c.id.0))),
        ("amenity".into(), Column::Float(amenities.to_vec())),
        (
            "se".into(),
            Column::Float(se.map(<[f64]>::to_vec).unwrap_or_else(|| vec![f64::NAN; c.len()])),
        ),
    ];
    write_table(path, &table, stamp)
}

pub fn write_agent_panel(agents_path: &Path, locations_path: &Path, panel: &AgentPanel, stamp: Option<&str>) -> Result<()> {
    let a = panel.agents();
    let table: Table = vec![
        ("agent_id".into(), Column::Int(a.iter().map(|a| a.id.0 as i64).collect())),
        ("birth_year".into(), col_i(a.iter().map(|a| a.demographics.birth_year))),
        ("college_flag".into(), col_i(a.iter().map(|a| a.demographics.college as i32))),
        ("device_price_usd".into(), Column::Float(a.iter().map(|a| a.demographics.device_price).collect())),
        ("hometown_city_id".into(), col_i(a.iter().map(|a| a.demographics.hometown.0))),
    ];
    write_table(agents_path, &table, stamp)?;
    let (mut ids, mut years, mut cities) = (Vec::new(), Vec::new(), Vec::new());
    for a in a {
        for (k, c) in a.residences.iter().enumerate() {
            ids.push(a.id.0 as i64);
            years.push(i64::from(panel.first_year() + k as i32));
            cities.push(i64::from(c.0));
        }
    }
    let table: Table = vec![
        ("agent_id".into(), Column::Int(ids)),
        ("year".into(), Column::Int(years)),
        ("city_id".into(), Column::Int(cities)),
    ];
    write_table(locations_path, &table, stamp)
}

pub fn write_network_panel(path: &Path, net: &NetworkPanel, stamp: Option<&str>) -> Result<()> {
    let (mut ids, mut years, mut cities, mut counts) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (a, y, friends) in net.iter() {
        for &(c, n) in friends {
            ids.push(a.0 as i64);
            years.push(i64::from(y));
            cities.push(i64::from(c.0));
            counts.push(i64::from(n));
        }
    }
    let table: Table = vec![
        ("agent_id".into(), Column::Int(ids)),
        ("year".into(), Column::Int(years)),
        ("city_id".into(), Column::Int(cities)),
        ("friend_count".into(), Column::Int(counts)),
    ];
    write_table(path, &table, stamp)
}

pub fn write_weather(path: &Path, weather: &WeatherPanel, stamp: Option<&str>) -> Result<()> {
    let r = &weather.rows;
    let table: Table = vec![
        ("city_id".into(), col_i(r.keys().map(|k| k.0 .0))),
        ("year".into(), col_i(r.keys().map(|k| k.1))),
        ("rainfall_mm".into(), Column::Float(r.values().map(|o| o.rainfall_mm).collect())),
        ("hot_days".into(), col_i(r.values().map(|o| o.hot_days))),
    ];
    write_table(path, &table, stamp)
}

pub fn write_industries(path: &Path, ind: &IndustryPanel, stamp: Option<&str>) -> Result<()> {
    let r = &ind.rows;
    let table: Table = vec![
        ("district_id".into(), col_i(r.keys().map(|k| k.0))),
        ("industry_code".into(), Column::Str(r.keys().map(|k| k.1.clone()).collect())),
        ("year".into(), col_i(r.keys().map(|k| k.2))),
        ("employment".into(), Column::Float(r.values().map(|o| o.employment).collect())),
        ("avg_wage_usd".into(), Column::Float(r.values().map(|o| o.avg_wage).collect())),
    ];
    write_table(path, &table, stamp)
}

pub fn write_survey(path: &Path, survey: &SurveyChoices, stamp: Option<&str>) -> Result<()> {
    let r = &survey.rows;
    let table: Table = vec![
        ("respondent_id".into(), Column::Int(r.iter().map(|s| s.respondent as i64).collect())),
        ("current_city_id".into(), col_i(r.iter().map(|s| s.current.0))),
        ("dream_city_id".into(), col_i(r.iter().map(|s| s.dream.0))),
    ];
    write_table(path, &table, stamp)
}

pub fn write_city_covariates(path: &Path, cov: &CityCovariates, stamp: Option<&str>) -> Result<()> {
    let (mut ids, mut names, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    for (name, m) in &cov.values {
        for (c, v) in m {
            ids.push(i64::from(c.0));
            names.push(name.clone());
            vals.push(*v);
        }
    }
    let table: Table = vec![
        ("city_id".into(), Column::Int(ids)),
        ("name".into(), Column::Str(names)),
        ("value".into(), Column::Float(vals)),
    ];
    write_table(path, &table, stamp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::fs;

    fn two_city_world() -> World {
        let mk = |id: u32, lat: f64| City {
            id: CityId(id),
            name: format!("c{id}"),
            lat,
            lon: 77.0,
            state_id: 1,
            district_id: id,
            avg_wage: 5000.0,
            population: 10,
            amenity: None,
        };
        World::new(vec![mk(1, 20.0), mk(2, 21.0)]).unwrap()
    }

    #[test]
    fn empty_tables_load_as_empty() {
        let dir = tempfile::tempdir().unwrap();
        let w = two_city_world();
        let p = dir.path().join("weather.csv");
        fs::write(&p, "city_id,year,rainfall_mm,hot_days\n").unwrap();
        assert!(load_weather(&p, &w, None).unwrap().rows.is_empty());
        let p = dir.path().join("survey.csv");
        fs::write(&p, "respondent_id,current_city_id,dream_city_id\n").unwrap();
        assert!(load_survey(&p, &w).unwrap().rows.is_empty());
        let (a, l) = (dir.path().join("agents.csv"), dir.path().join("locations.csv"));
        fs::write(&a, AGENTS_HEADER.join(",") + "\n").unwrap();
        fs::write(&l, LOCATIONS_HEADER.join(",") + "\n").unwrap();
        let panel = load_agent_panel(&a, &l, &w).unwrap();
        assert!(panel.is_empty());
        let n = dir.path().join("networks.csv");
        fs::write(&n, NETWORKS_HEADER.join(",") + "\n").unwrap();
        assert_eq!(load_network_panel(&n, &w, &panel).unwrap().n_rows(), 0);
        let i = dir.path().join("industries.csv");
        fs::write(&i, INDUSTRIES_HEADER.join(",") + "\n").unwrap();
        assert!(load_industries(&i, &w).unwrap().rows.is_empty());
    }

    #[test]
    fn unknown_city_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("weather.csv");
        fs::write(&p, "city_id,year,rainfall_mm,hot_days\n1,2000,10,3\n999,2000,10,3\n").unwrap();
        let err = load_weather(&p, &two_city_world(), None).unwrap_err();
        match err {
            Error::Data { row, message, .. } => {
                assert_eq!(row, 3);
                assert!(message.contains("999"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs_are_diagnosed() {
        let dir = tempfile::tempdir().unwrap();
        let w = two_city_world();
        let p = dir.path().join("w.csv");
        fs::write(&p, "city_id,year,rainfall\n1,2000,10\n").unwrap();
        assert!(matches!(load_weather(&p, &w, None), Err(Error::Data { row: 1, .. })));
        fs::write(&p, "city_id,year,rainfall_mm,hot_days\n1,2000,wet,3\n").unwrap();
        let e = load_weather(&p, &w, None).unwrap_err().to_string();
        assert!(e.contains("wet") && e.contains("row 2"), "{e}");
        fs::write(&p, "city_id,year,rainfall_mm,hot_days\n1,2000,1,3\n1,2000,2,3\n").unwrap();
        assert!(load_weather(&p, &w, None).unwrap_err().to_string().contains("duplicate"));
        let n = dir.path().join("survey.csv");
        fs::write(&n, "respondent_id,current_city_id,dream_city_id\n5,1,2\n5,2,1\n").unwrap();
        assert!(load_survey(&n, &w).is_err());
    }

    #[test]
    fn locations_with_gap_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let w = two_city_world();
        let (a, l) = (dir.path().join("agents.csv"), dir.path().join("locations.csv"));
        fs::write(&a, "agent_id,birth_year,college_flag,device_price_usd,hometown_city_id\n1,1990,0,100,1\n2,1991,1,50,2\n").unwrap();
        fs::write(&l, "agent_id,year,city_id\n1,2014,1\n1,2015,2\n2,2014,2\n").unwrap();
        let e = load_agent_panel(&a, &l, &w).unwrap_err().to_string();
        assert!(e.contains("agent 2") && e.contains("2015"), "{e}");
    }

    #[test]
    fn float_format_round_trips() {
        for x in [1.0, 0.1, 9328.19, -1e-7, 6.02e23, 1.0 / 3.0, -0.0, 123456789.123] {
            let s = fmt_float(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    proptest! {
        #[test]
        fn float_format_is_bit_stable(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            let s = fmt_float(x);
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
