use std::collections::BTreeMap;

use migranet_core::choice::{build_choice_sets, ChoiceObservation, FeKey, FeLevel, FitOptions, ModelSpec};
use migranet_core::data::{AgentId, SurveyChoices, SurveyRow};
use migranet_core::geo::{City, CityId, World};
use migranet_core::instruments::{
    amenities_from_survey, attach_residuals, bartik, classify_shocks, control_function_fit, destination_effects,
    destination_frequency, first_stage, instrument_rows, permute_instrument, wage_elasticity_two_step, BartikVector,
    FirstStageForm, InstrumentRows, ShockType, WageMode,
};
use migranet_core::synth::{simulate_all, simulate_survey, DgpConfig, Synthetic};
use migranet_core::Error;

fn push_dgp(seed: u64, n_agents: usize) -> (Synthetic, Vec<ChoiceObservation>) {
    let c = DgpConfig {
        seed,
        n_agents,
        n_years: 5,
        ..DgpConfig::default()
    };
    let s = simulate_all(&c, None).unwrap();
    let obs = build_choice_sets(&s.agents, &s.networks, &s.world, 10, seed).unwrap().observations;
    (s, obs)
}

#[test]
fn instrument_rows_follow_the_shock_set() {
    let (s, obs) = push_dgp(3, 400);
    let sh = classify_shocks(&s.weather, ShockType::Drought).unwrap();
    let rows = instrument_rows(&obs, &s.networks, &sh, &s.world);
    // first panel year after the base has no t-2 network
    assert_eq!(rows.dropped_no_history, 400);
    for r in &rows.rows {
        let j = s.world.city(r.city).id;
        assert_eq!(r.at_shock(), sh.is_shocked(j, r.year - 2));
        assert!(sh.is_shocked(s.world.city(r.shocked_city).id, r.year - 2));
        for w in sh.cities_in(r.year - 2) {
            let wi = s.world.index_of(w).unwrap();
            assert!(r.distance_km <= s.world.distance(r.city, wi) + 1e-9);
        }
        assert_eq!(r.friends_at_shock, s.networks.count(r.agent, r.year - 2, s.world.city(r.shocked_city).id));
    }
    let n_alts: usize = obs.iter().filter(|o| o.year >= 2016).map(|o| o.alternatives.len()).sum();
    assert_eq!(rows.rows.len(), n_alts);
}

#[test]
fn push_migration_gives_a_strong_first_stage_and_a_null_placebo() {
    let (s, obs) = push_dgp(5, 3000);
    let sh = classify_shocks(&s.weather, ShockType::Drought).unwrap();
    let rows = instrument_rows(&obs, &s.networks, &sh, &s.world);
    assert!(rows.rows.len() >= 50_000);
    for form in [FirstStageForm::Simplified, FirstStageForm::Full] {
        let fs = first_stage(&rows, form, &s.world).unwrap();
        assert!(fs.theta1 > 0.0 && fs.theta1_t() > 4.0, "{form:?}: {} t {}", fs.theta1, fs.theta1_t());
        let placebo = InstrumentRows {
            rows: permute_instrument(&rows.rows, 5, 1),
            ..rows.clone()
        };
        let fp = first_stage(&placebo, form, &s.world).unwrap();
        assert!(fp.theta1_t().abs() < 2.0, "{form:?} placebo t {}", fp.theta1_t());
    }
}

#[test]
fn first_stage_residuals_are_orthogonal_to_the_regressors() {
    let (s, obs) = push_dgp(8, 600);
    let sh = classify_shocks(&s.weather, ShockType::Heat).unwrap();
    let rows = instrument_rows(&obs, &s.networks, &sh, &s.world);
    let fs = first_stage(&rows, FirstStageForm::Full, &s.world).unwrap();
    let e = &fs.regression.residuals;
    let b = |x: bool| f64::from(u8::from(x));
    let cols: Vec<Vec<f64>> = vec![
        rows.rows.iter().map(|r| r.instrument()).collect(),
        rows.rows.iter().map(|r| b(r.at_shock())).collect(),
        rows.rows.iter().map(|r| r.log_distance_to_shock()).collect(),
        rows.rows.iter().map(|r| r.log_distance_to_shock().powi(2)).collect(),
        rows.rows.iter().map(|r| b(r.same_city)).collect(),
        rows.rows.iter().map(|r| r.log_distance).collect(),
    ];
    for c in &cols {
        let dot: f64 = c.iter().zip(e).map(|(x, e)| x * e).sum();
        let scale = c.iter().map(|x| x * x).sum::<f64>().sqrt() * e.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((dot / scale).abs() < 1e-8, "{dot} / {scale}");
    }
    let mut by_dest: BTreeMap<usize, f64> = BTreeMap::new();
    let mut by_ay: BTreeMap<(AgentId, i32), f64> = BTreeMap::new();
    for (r, e) in rows.rows.iter().zip(e) {
        *by_dest.entry(r.city).or_default() += e;
        *by_ay.entry((r.agent, r.year)).or_default() += e;
    }
    assert!(by_dest.values().chain(by_ay.values()).all(|v| v.abs() < 1e-8));
    assert_eq!(fs.residuals.len(), rows.rows.len());

    let attached = attach_residuals(&obs, &fs, &s.world);
    assert_eq!(attached.len(), obs.iter().filter(|o| o.year >= 2016).count());
    assert!(attached.iter().flat_map(|o| &o.alternatives).all(|a| a.cf_residual.is_some()));
}

#[test]
fn control_function_adds_the_residual_term() {
    let (s, obs) = push_dgp(9, 800);
    let sh = classify_shocks(&s.weather, ShockType::Drought).unwrap();
    let rows = instrument_rows(&obs, &s.networks, &sh, &s.world);
    let fs = first_stage(&rows, FirstStageForm::Full, &s.world).unwrap();
    let spec = ModelSpec::new(FeLevel::Destination);
    let fit = control_function_fit(&obs, &fs, &spec, &s.world, &FitOptions::default()).unwrap();
    assert!(fit.coef_of("cf_residual").is_some());
    assert!(fit.coef_of("log_friends").unwrap().is_finite());
}

fn grid_world(n: u32) -> World {
    World::new(
        (0..n)
            .map(|i| City {
                id: CityId(i + 1),
                name: format!("c{i}"),
                lat: 15.0 + f64::from(i % 4),
                lon: 76.0 + f64::from(i / 4),
                state_id: 1 + i % 3,
                district_id: 1 + i,
                avg_wage: 5000.0 + 700.0 * f64::from(i),
                population: 1000,
                amenity: None,
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn survey_amenities_are_recovered() {
    let c = DgpConfig {
        seed: 17,
        n_cities: 12,
        n_states: 3,
        n_districts: 12,
        n_agents: 10,
        ..DgpConfig::default()
    };
    let s = simulate_all(&c, None).unwrap();
    let survey = simulate_survey(&s.world, &s.params, &c, 12_000).unwrap();
    let est = amenities_from_survey(&survey, &s.world).unwrap();
    assert_eq!(est.amenity[0], 0.0);
    let a = &s.params.amenities;
    for j in 1..s.world.len() {
        let z = (est.amenity[j] - (a[j] - a[0])) / est.se[j];
        assert!(z.abs() < 3.0, "city {j}: z = {z}");
    }
}

#[test]
fn survey_city_never_named_is_separation() {
    let w = grid_world(6);
    let mut rows = Vec::new();
    let mut r = 0;
    for cur in 1..=5u32 {
        for dream in 1..=5u32 {
            for _ in 0..(1 + (cur + dream) % 3) {
                r += 1;
                rows.push(SurveyRow {
                    respondent: r,
                    current: CityId(cur),
                    dream: CityId(dream),
                });
            }
        }
    }
    match amenities_from_survey(&SurveyChoices { rows }, &w) {
        Err(Error::Separation { covariate }) => assert_eq!(covariate, FeKey::Destination(CityId(6)).label()),
        other => panic!("expected separation, got {other:?}"),
    }
}

#[test]
fn two_step_recovers_an_exact_linear_relation() {
    let w = grid_world(10);
    let ly = w.log_wages();
    let xi: Vec<Option<f64>> = ly.iter().map(|y| Some(0.3 + 1.4 * y)).collect();
    let weights: Vec<f64> = (0..10).map(|j| 1.0 + j as f64).collect();
    let b = BartikVector {
        base_year: 1999,
        end_year: 2016,
        delta_wage: (1..=10).map(|d| (d, f64::from(d) * 2.0 + f64::from(d * d % 7))).collect(),
        delta_labor: (1..=10).map(|d| (d, f64::from(d % 4) - f64::from(d))).collect(),
    };
    for m in [WageMode::Ols, WageMode::IvWage, WageMode::IvLabor, WageMode::IvBoth] {
        let r = wage_elasticity_two_step(&xi, &weights, &w, &b, m, &[]).unwrap();
        assert!((r.beta - 1.4).abs() < 1e-9, "{m:?} {}", r.beta);
        assert_eq!(r.first_stage_f.is_some(), m != WageMode::Ols);
        assert_eq!(r.n_cities, 10);
    }
    let mut sparse = xi.clone();
    sparse[3] = None;
    let mut wz = weights.clone();
    wz[4] = 0.0;
    assert_eq!(wage_elasticity_two_step(&sparse, &wz, &w, &b, WageMode::Ols, &[]).unwrap().n_cities, 8);
}

#[test]
fn destination_effects_average_over_years() {
    let (s, obs) = push_dgp(4, 600);
    let f = migranet_core::choice::fit_logit(&obs, &ModelSpec::new(FeLevel::DestinationYear), &s.world, &FitOptions::default()).unwrap();
    let xi = destination_effects(&f, &s.world).unwrap();
    let j = s.world.len() - 1;
    let id = s.world.city(j).id;
    let vals: Vec<f64> = f.fe.iter().filter(|e| e.key.destination() == id).map(|e| e.value).collect();
    if let Some(x) = xi[j] {
        assert!((x - vals.iter().sum::<f64>() / vals.len() as f64).abs() < 1e-12);
    }
    let freq = destination_frequency(&obs, s.world.len());
    assert_eq!(freq.iter().sum::<f64>() as usize, obs.len());
    assert!(bartik(&s.industries).is_ok());
}
