use migranet_core::choice::Coefficients;
use migranet_core::equilibrium::{
    apply_counterfactual, baseline_choices, calibrate_scales, draw_shocks, economy_from_panel, outcomes_report,
    solve_equilibrium, EqAgent, Economy, EquilibriumOptions, EquilibriumParams, Metric, Scales, Scenario,
    ShockMatrix, DEFAULT_TOP_SHARE, METRICS,
};
use migranet_core::geo::{wage_quartiles, City, CityId, World};
use migranet_core::stats::{mean, variance, EULER_MASCHERONI};
use migranet_core::synth::{simulate_all, DgpConfig};
use migranet_core::Error;

struct Desk {
    world: World,
    economy: Economy,
    shocks: ShockMatrix,
    wages: Vec<f64>,
    amenities: Vec<f64>,
}

fn desk(seed: u64, n_agents: usize) -> Desk {
    let c = DgpConfig {
        seed,
        n_agents,
        ..DgpConfig::default()
    };
    let s = simulate_all(&c, None).unwrap();
    let params = EquilibriumParams::from_parameters(&s.params);
    let opts = EquilibriumOptions::default();
    let placeholder = Scales {
        productivity: vec![1.0; s.world.len()],
        amenity: vec![1.0; s.world.len()],
    };
    let mut economy =
        economy_from_panel(&s.agents, &s.networks, &s.world, c.last_year(), params, placeholder).unwrap();
    let shocks = draw_shocks(n_agents, s.world.len(), seed);
    let wages: Vec<f64> = s.world.cities().iter().map(|c| c.avg_wage).collect();
    let amenities = s.params.amenities.clone();
    let lw: Vec<f64> = wages.iter().map(|w| w.ln()).collect();
    let (_, labor) = baseline_choices(&s.world, &economy, &shocks, &lw, &amenities).unwrap();
    economy.scales = calibrate_scales(&wages, &amenities, &labor, &params, &opts).unwrap();
    Desk {
        world: s.world,
        economy,
        shocks,
        wages,
        amenities,
    }
}

fn table6() -> EquilibriumParams {
    EquilibriumParams {
        beta: 1.11,
        coef: Coefficients::TABLE6,
        phi: 0.10,
        psi: 0.02,
        theta: 0.02,
    }
}

#[test]
fn calibration_identities() {
    let p = table6();
    let o = EquilibriumOptions::default();
    let y = [5000.0, 7000.0, 12000.0];
    let x = [0.3, -1.0, 2.0];
    let s = calibrate_scales(&y, &x, &[1, 1, 1], &p, &o).unwrap();
    assert_eq!(s.productivity, y.to_vec());
    let l = [10, 250, 3];
    let s1 = calibrate_scales(&y, &x, &l, &p, &o).unwrap();
    let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
    let s2 = calibrate_scales(&y2, &x, &l, &p, &o).unwrap();
    for k in 0..3 {
        assert!((s2.productivity[k] / s1.productivity[k] - 2.0).abs() < 1e-12);
        let lk = l[k] as f64;
        let back = s1.productivity[k] * lk.powf(p.phi - p.psi);
        assert!((back - y[k]).abs() / y[k] < 1e-12);
        assert!((s1.amenity[k].ln() - p.theta * lk.ln() - x[k]).abs() < 1e-12);
    }
}

#[test]
fn gumbel_draws_have_the_right_moments() {
    let a = draw_shocks(1000, 1000, 5);
    assert_eq!(a, draw_shocks(1000, 1000, 5));
    assert_ne!(a.values[..10], draw_shocks(1000, 1000, 6).values[..10]);
    assert!((mean(&a.values) - EULER_MASCHERONI).abs() < 0.01);
    assert!((variance(&a.values) - std::f64::consts::PI.powi(2) / 6.0).abs() < 0.02);
}

#[test]
fn unstable_parameters_are_rejected() {
    let d = desk(1, 200);
    let mut e = d.economy.clone();
    e.params.phi = 1.2;
    e.params.psi = 0.1;
    let r = solve_equilibrium(&d.world, &e, &d.shocks, (&d.wages, &d.amenities), &EquilibriumOptions::default());
    assert!(matches!(r, Err(Error::Unstable(_))));
    e.params = table6();
    e.params.theta = -0.1;
    assert!(matches!(
        calibrate_scales(&d.wages, &d.amenities, &vec![1; d.wages.len()], &e.params, &EquilibriumOptions::default()),
        Err(Error::Unstable(_))
    ));
}

#[test]
fn symmetric_economy_has_a_uniform_fixed_point() {
    let world = World::new(
        (0..4)
            .map(|i| City {
                id: CityId(i + 1),
                name: format!("c{i}"),
                lat: 20.0 + if i % 2 == 0 { 0.0 } else { 1.0 },
                lon: 80.0 + if i < 2 { 0.0 } else { 1.0 },
                state_id: 1,
                district_id: 1,
                avg_wage: 1.0,
                population: 1,
                amenity: None,
            })
            .collect(),
    )
    .unwrap();
    let mut p = table6();
    p.phi = 0.05;
    p.psi = 0.05;
    p.theta = 0.0;
    let agents: Vec<EqAgent> = (0..40)
        .map(|i| EqAgent {
            origin: i % 4,
            friends: vec![3; 4],
        })
        .collect();
    let economy = Economy {
        params: p,
        scales: Scales {
            productivity: vec![8000.0; 4],
            amenity: vec![1.0; 4],
        },
        agents,
    };
    let shocks = ShockMatrix {
        n_agents: 40,
        n_cities: 4,
        values: vec![0.0; 160],
    };
    let st = solve_equilibrium(&world, &economy, &shocks, (&[8000.0; 4], &[0.0; 4]), &EquilibriumOptions::default())
        .unwrap();
    assert_eq!(st.labor, vec![10; 4]);
    assert_eq!(st.iterations, 1);
}

#[test]
fn calibrated_baseline_is_returned_unchanged() {
    let d = desk(2, 5000);
    let st = solve_equilibrium(&d.world, &d.economy, &d.shocks, (&d.wages, &d.amenities), &EquilibriumOptions::default())
        .unwrap();
    assert_eq!(st.iterations, 1);
    assert!(st.wage_residual < 1e-10 && st.amenity_residual < 1e-10);
    for k in 0..d.wages.len() {
        assert!((st.wage[k] - d.wages[k]).abs() / d.wages[k] < 1e-10);
        assert!((st.amenity[k] - d.amenities[k]).abs() < 1e-10);
    }
}

#[test]
fn perturbed_start_converges_with_small_residuals_and_conserved_labor() {
    let d = desk(3, 3000);
    let opts = EquilibriumOptions::default();
    for (k, f) in [0.7, 1.3, 2.0].into_iter().enumerate() {
        let start: Vec<f64> = d.wages.iter().enumerate().map(|(j, w)| if j % 3 == k { w * f } else { *w }).collect();
        let xi: Vec<f64> = d.amenities.iter().map(|a| a - 0.2 * f).collect();
        let st = solve_equilibrium(&d.world, &d.economy, &d.shocks, (&start, &xi), &opts).unwrap();
        assert!(st.wage_residual < 1e-8 && st.amenity_residual < 1e-8);
        assert!(st.labor_totals.iter().all(|&t| t == 3000));
        assert_eq!(st.labor.iter().sum::<u64>(), 3000);
        // the returned labor is what agents choose at the returned prices
        let lw: Vec<f64> = st.wage.iter().map(|w| w.ln()).collect();
        let (ch, l) = baseline_choices(&d.world, &d.economy, &d.shocks, &lw, &st.amenity).unwrap();
        assert_eq!(l, st.labor);
        assert_eq!(ch, st.choices);
    }
}

#[test]
fn raising_productivity_weakly_raises_labor() {
    let d = desk(4, 3000);
    let opts = EquilibriumOptions::default();
    let base = solve_equilibrium(&d.world, &d.economy, &d.shocks, (&d.wages, &d.amenities), &opts).unwrap();
    for j in [0, 7, 19, 33] {
        let mut e = d.economy.clone();
        e.scales.productivity[j] *= 1.25;
        let st = solve_equilibrium(&d.world, &e, &d.shocks, (&base.wage, &base.amenity), &opts).unwrap();
        assert!(st.labor[j] >= base.labor[j], "city {j}: {} < {}", st.labor[j], base.labor[j]);
    }
}

#[test]
fn scenario_transforms() {
    let d = desk(5, 300);
    let before = d.economy.clone();
    let b = apply_counterfactual(Scenario::ZeroVariableDistance, &d.economy, &d.world, DEFAULT_TOP_SHARE).unwrap();
    assert_eq!(d.economy, before);
    let c0 = d.economy.params.coef;
    let c = b.params.coef;
    assert_eq!((c.delta_v, c.delta_vn), (0.0, 0.0));
    assert_eq!((c.stay, c.delta_vs, c.delta_fn, c.delta_vsn, c.gamma), (c0.stay, c0.delta_vs, c0.delta_fn, c0.delta_vsn, c0.gamma));
    assert_eq!(apply_counterfactual(Scenario::ZeroVariableDistance, &b, &d.world, DEFAULT_TOP_SHARE).unwrap(), b);

    let dd = apply_counterfactual(Scenario::NetworkReallocation, &d.economy, &d.world, DEFAULT_TOP_SHARE).unwrap();
    let top = migranet_core::equilibrium::top_cities(&d.world, DEFAULT_TOP_SHARE).unwrap();
    assert_eq!(top.len(), 4);
    for (a0, a1) in d.economy.agents.iter().zip(&dd.agents) {
        assert_eq!(a0.network_size(), a1.network_size());
        for (k, &f) in a1.friends.iter().enumerate() {
            if !top.contains(&k) {
                assert_eq!(f, 0);
            }
        }
    }

    let e = apply_counterfactual(Scenario::DoubleTopWages, &d.economy, &d.world, DEFAULT_TOP_SHARE).unwrap();
    let f = apply_counterfactual(Scenario::DoubleTopWagesAndNetworks, &d.economy, &d.world, DEFAULT_TOP_SHARE).unwrap();
    for k in 0..d.world.len() {
        let m = if top.contains(&k) { 2.0 } else { 1.0 };
        assert_eq!(e.scales.productivity[k], m * d.economy.scales.productivity[k]);
        assert_eq!(f.scales.productivity[k], e.scales.productivity[k]);
        for (a0, a1) in d.economy.agents.iter().zip(&f.agents) {
            assert_eq!(a1.friends[k], a0.friends[k] * m as u32);
        }
    }
    assert_eq!(e.agents, d.economy.agents);
}

#[test]
fn equal_networks_copy_the_origin_count() {
    let world = World::new(
        (0..12)
            .map(|i| City {
                id: CityId(i + 1),
                name: format!("c{i}"),
                lat: 10.0 + f64::from(i),
                lon: 80.0,
                state_id: 1,
                district_id: 1,
                avg_wage: 1000.0 + f64::from(i),
                population: 1,
                amenity: None,
            })
            .collect(),
    )
    .unwrap();
    let mut friends = vec![0; 12];
    friends[3] = 40;
    friends[5] = 7;
    let e = Economy {
        params: table6(),
        scales: Scales {
            productivity: vec![1.0; 12],
            amenity: vec![1.0; 12],
        },
        agents: vec![EqAgent { origin: 3, friends }],
    };
    let c = apply_counterfactual(Scenario::EqualNetworks, &e, &world, DEFAULT_TOP_SHARE).unwrap();
    assert_eq!(c.agents[0].friends, vec![40; 12]);
    assert_eq!(c.agents[0].network_size(), 480);
}

#[test]
fn identical_counterfactual_gives_unit_multiples_and_welfare_agrees_with_simulation() {
    let d = desk(6, 5000);
    let opts = EquilibriumOptions::default();
    let st = solve_equilibrium(&d.world, &d.economy, &d.shocks, (&d.wages, &d.amenities), &opts).unwrap();
    let q = wage_quartiles(&d.world).unwrap();
    let r = outcomes_report(&d.world, (&d.economy, &st), (&d.economy, &st), &d.shocks, &q).unwrap();
    assert_eq!(r.rows.len(), 3 * METRICS.len());
    assert!(r.rows.iter().all(|row| row.multiple == 1.0));
    for g in &r.baseline {
        let z = (g.expected_utility - g.simulated_utility) / g.simulated_utility_se;
        assert!(z.abs() < 2.0, "{}: z = {z}", g.group);
    }
    assert!(r.multiple("all", Metric::MigrationRate).is_some());
}
