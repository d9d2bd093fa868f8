use migranet_core::data::*;
use migranet_core::geo::City;
use migranet_core::synth::{simulate_all, simulate_survey, DgpConfig};

#[test]
fn simulated_bundle_round_trips() {
    let c = DgpConfig {
        seed: 3,
        n_agents: 400,
        n_cities: 15,
        n_districts: 15,
        n_states: 4,
        ..DgpConfig::default()
    };
    let s = simulate_all(&c, None).unwrap();
    let survey = simulate_survey(&s.world, &s.params, &c, 300).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let stamp = Some("config_sha256=00 seed=3");
    write_world(&p("cities.csv"), &s.world, stamp).unwrap();
    write_agent_panel(&p("agents.csv"), &p("locations.csv"), &s.agents, stamp).unwrap();
    write_network_panel(&p("networks.csv"), &s.networks, stamp).unwrap();
    write_weather(&p("weather.csv"), &s.weather, stamp).unwrap();
    write_industries(&p("industries.csv"), &s.industries, stamp).unwrap();
    write_survey(&p("survey.csv"), &survey, stamp).unwrap();

    let world = load_world(&p("cities.csv")).unwrap();
    // amenities are simulation truth, not part of the city schema
    let strip = |v: &[City]| -> Vec<City> { v.iter().map(|c| City { amenity: None, ..c.clone() }).collect() };
    assert_eq!(strip(world.cities()), strip(s.world.cities()));
    let agents = load_agent_panel(&p("agents.csv"), &p("locations.csv"), &world).unwrap();
    assert_eq!(agents, s.agents);
    assert_eq!(load_network_panel(&p("networks.csv"), &world, &agents).unwrap(), s.networks);
    assert_eq!(load_weather(&p("weather.csv"), &world, Some(s.weather.window)).unwrap(), s.weather);
    assert_eq!(load_industries(&p("industries.csv"), &world).unwrap(), s.industries);
    assert_eq!(load_survey(&p("survey.csv"), &world).unwrap(), survey);

    // writing the loaded structures again gives the same bytes
    let again = tempfile::tempdir().unwrap();
    write_world(&again.path().join("cities.csv"), &world, stamp).unwrap();
    write_network_panel(&again.path().join("networks.csv"), &load_network_panel(&p("networks.csv"), &world, &agents).unwrap(), stamp).unwrap();
    for f in ["cities.csv", "networks.csv"] {
        assert_eq!(std::fs::read(p(f)).unwrap(), std::fs::read(again.path().join(f)).unwrap(), "{f}");
    }
}
