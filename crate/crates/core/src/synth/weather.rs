use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use super::DgpConfig;
use crate::data::{WeatherObs, WeatherPanel};
use crate::error::Result;
use crate::geo::World;
use crate::rng::{substream, Stream};
use crate::stats::quantile_linear;

/// Long-run history drawn i.i.d. per city; each panel year is then a shock
/// year with exactly the configured probability, relative to the
/// thresholds implied by that history.
pub fn simulate_weather(world: &World, config: &DgpConfig) -> Result<WeatherPanel> {
    config.validate()?;
    let w = config.weather_window_years as i32;
    let window = (config.first_year - w, config.first_year - 1);
    let mut rows = BTreeMap::new();
    for c in world.cities() {
        let mut rng = substream(config.seed, Stream::Weather, u64::from(c.id.0), 0);
        let rain_mean = rng.random_range(400.0..2000.0);
        let rain_sd = config.rain_cv * rain_mean;
        let hot_mean = rng.random_range(20.0..120.0);
        let hot_sd = config.hot_days_sd;
        let mut rain_hist = Vec::with_capacity(w as usize);
        let mut hot_hist = Vec::with_capacity(w as usize);
        for y in window.0..=window.1 {
            let rain = (rain_mean + rain_sd * rng.sample::<f64, _>(StandardNormal)).max(0.0);
            let hot = (hot_mean + hot_sd * rng.sample::<f64, _>(StandardNormal)).round().clamp(0.0, 366.0);
            rain_hist.push(rain);
            hot_hist.push(hot);
            rows.insert((c.id, y), WeatherObs { rainfall_mm: rain, hot_days: hot as u32 });
        }
        rain_hist.sort_by(f64::total_cmp);
        hot_hist.sort_by(f64::total_cmp);
        let q_rain = quantile_linear(&rain_hist, 0.15);
        let q_hot = quantile_linear(&hot_hist, 0.85);
        for y in config.first_year..=config.last_year() {
            let z_rain: f64 = rng.sample::<f64, _>(StandardNormal).abs();
            let z_hot: f64 = rng.sample::<f64, _>(StandardNormal).abs();
            let drought = rng.random::<f64>() < config.drought_prob && rain_sd > 0.0 && q_rain > 0.0;
            let heat = rng.random::<f64>() < config.heat_prob && hot_sd > 0.0 && q_hot.floor() < 366.0;
            let rain = if rain_sd == 0.0 {
                rain_mean
            } else if drought {
                let r = q_rain - (z_rain + 0.01) * rain_sd;
                if r >= 0.0 {
                    r
                } else {
                    q_rain * rng.random::<f64>()
                }
            } else {
                q_rain + z_rain * rain_sd
            };
            let hot = if hot_sd == 0.0 {
                hot_mean.round()
            } else if heat {
                (q_hot.floor() + 1.0 + (z_hot * hot_sd).floor()).min(366.0)
            } else {
                (q_hot.floor() - (z_hot * hot_sd).floor()).max(0.0)
            };
            rows.insert((c.id, y), WeatherObs { rainfall_mm: rain, hot_days: hot as u32 });
        }
    }
    WeatherPanel::new(rows, Some(window))
}
