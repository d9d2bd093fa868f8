use std::path::PathBuf;

use log::{info, warn};
use migranet_core::choice::{
    coefficients_of, gravity_decomposition, marginal_distance_curve, mwtp_distance, mwtp_wages, names,
};
use migranet_core::data::{
    write_agent_panel, write_amenities, write_industries, write_network_panel, write_survey, write_table, write_weather,
    write_world, Column, Table,
};
use migranet_core::equilibrium::{apply_counterfactual, outcomes_report, solve_equilibrium};
use migranet_core::geo::{transition_matrix, wage_quartiles};
use migranet_core::instruments::{
    bartik, destination_effects, destination_frequency, wage_elasticity_two_step, ShockType, WageMode,
};

use crate::config::{RunConfig, Source};
use crate::error::{at, CliError, CliResult, Stage};
use crate::pipeline::{equilibrium, fit_spec, Data, SpecFit};

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
    stamp: String,
}

impl Ctx {
    pub fn new(cfg: RunConfig, out: PathBuf) -> CliResult<Self> {
        std::fs::create_dir_all(&out).map_err(|e| CliError::new(crate::error::code::OTHER, format!("{}: {e}", out.display())))?;
        let stamp = cfg.stamp();
        Ok(Ctx { cfg, out, stamp })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn stamp(&self) -> Option<&str> {
        Some(&self.stamp)
    }

    fn write(&self, name: &str, table: &Table) -> CliResult<()> {
        info!("writing {name}");
        write_table(&self.path(name), table, self.stamp()).map_err(at(Stage::Output, name))
    }
}

fn s(v: impl IntoIterator<Item = impl Into<String>>) -> Column {
    Column::Str(v.into_iter().map(Into::into).collect())
}

fn f(v: impl IntoIterator<Item = f64>) -> Column {
    Column::Float(v.into_iter().collect())
}

fn i(v: impl IntoIterator<Item = i64>) -> Column {
    Column::Int(v.into_iter().collect())
}

fn table(cols: Vec<(&str, Column)>) -> Table {
    cols.into_iter().map(|(n, c)| (n.to_string(), c)).collect()
}

/// Long-format rows (group, term, estimate, se).
#[derive(Default)]
struct Long {
    group: Vec<String>,
    term: Vec<String>,
    estimate: Vec<f64>,
    se: Vec<f64>,
}

impl Long {
    fn push(&mut self, group: &str, term: &str, estimate: f64, se: f64) {
        self.group.push(group.into());
        self.term.push(term.into());
        self.estimate.push(estimate);
        self.se.push(se);
    }

    fn into_table(self, group: &str) -> Table {
        table(vec![
            (group, s(self.group)),
            ("term", s(self.term)),
            ("estimate", f(self.estimate)),
            ("se", f(self.se)),
        ])
    }
}

pub fn simulate(ctx: &Ctx) -> CliResult<()> {
    if !matches!(ctx.cfg.source, Source::Dgp(_)) {
        return Err(CliError::config("simulate needs a `dgp` section"));
    }
    let d = Data::load(&ctx.cfg)?;
    let st = ctx.stamp();
    let o = |e| at(Stage::Output, "bundle")(e);
    write_world(&ctx.path("cities.csv"), &d.world, st).map_err(o)?;
    write_agent_panel(&ctx.path("agents.csv"), &ctx.path("locations.csv"), &d.agents, st).map_err(o)?;
    write_network_panel(&ctx.path("networks.csv"), &d.networks, st).map_err(o)?;
    write_weather(&ctx.path("weather.csv"), &d.weather, st).map_err(o)?;
    write_industries(&ctx.path("industries.csv"), &d.industries, st).map_err(o)?;
    write_amenities(&ctx.path("true_amenities.csv"), &d.world, &d.params.amenities, None, st).map_err(o)?;
    if let Some(sv) = &d.survey {
        write_survey(&ctx.path("survey.csv"), sv, st).map_err(o)?;
    }
    Ok(())
}

fn fit_rows(rows: &mut Long, label: &str, sf: &SpecFit) {
    let fit = &sf.fit;
    for ((n, c), se) in fit.names.iter().zip(&fit.coef).zip(&fit.se) {
        rows.push(label, n, *c, *se);
    }
    if let Some(fs) = &sf.first_stage {
        rows.push(label, "first_stage_theta1", fs.theta1, fs.theta1_se);
    }
    let mwtp = mwtp_distance(fit, &sf.observations).unwrap_or_else(|e| {
        warn!("{label}: distance MWTP unavailable: {e}");
        f64::NAN
    });
    rows.push(label, "mwtp_distance", mwtp, f64::NAN);
    if let (Some(g), Some(b)) = (fit.coef_of(names::LOG_FRIENDS), fit.coef_of(names::LOG_WAGE)) {
        rows.push(label, "mwtp_wages", mwtp_wages(g, b).unwrap_or(f64::NAN), f64::NAN);
    }
    rows.push(label, "log_likelihood", fit.log_likelihood, f64::NAN);
    rows.push(label, "n_obs", fit.n_obs as f64, f64::NAN);
    rows.push(label, "n_clusters", fit.n_clusters as f64, f64::NAN);
}

pub fn estimate(ctx: &Ctx) -> CliResult<()> {
    let d = Data::load(&ctx.cfg)?;
    let obs = d.choice_sets(&ctx.cfg)?;
    let mut rows = Long::default();
    for &label in &ctx.cfg.specs {
        let sf = fit_spec(&d, &obs, label, false, &ctx.cfg)?;
        fit_rows(&mut rows, label.label(), &sf);
    }
    ctx.write("estimates.csv", &rows.into_table("spec"))
}

pub fn instrument(ctx: &Ctx) -> CliResult<()> {
    let d = Data::load(&ctx.cfg)?;
    let obs = d.choice_sets(&ctx.cfg)?;
    let mut rows = Long::default();
    for shock in [ShockType::Drought, ShockType::Heat] {
        let fs = d.first_stage(&obs, shock, &ctx.cfg)?;
        let g = shock.label();
        let r = &fs.regression;
        for ((n, c), se) in r.names.iter().zip(&r.coef).zip(&r.se) {
            rows.push(g, n, *c, *se);
        }
        rows.push(g, "theta1_t", fs.theta1_t(), f64::NAN);
        rows.push(g, "r2", r.r2, f64::NAN);
        rows.push(g, "n_rows", fs.n_rows as f64, f64::NAN);
        rows.push(g, "dropped_no_shock", fs.dropped_no_shock as f64, f64::NAN);
        rows.push(g, "dropped_no_history", fs.dropped_no_history as f64, f64::NAN);
    }
    ctx.write("first_stage.csv", &rows.into_table("shock"))?;

    let b = bartik(&d.industries).map_err(at(Stage::Data, "bartik"))?;
    let districts: Vec<u32> = b.delta_wage.keys().copied().collect();
    ctx.write(
        "bartik.csv",
        &table(vec![
            ("district_id", i(districts.iter().map(|&k| i64::from(k)))),
            ("base_year", i(districts.iter().map(|_| i64::from(b.base_year)))),
            ("end_year", i(districts.iter().map(|_| i64::from(b.end_year)))),
            ("bartik_wage", f(districts.iter().map(|k| b.delta_wage[k]))),
            ("bartik_labor", f(districts.iter().map(|k| b.delta_labor.get(k).copied().unwrap_or(f64::NAN)))),
        ]),
    )?;

    let am = d.survey_amenities()?;
    write_amenities(&ctx.path("amenities.csv"), &d.world, &am.amenity, Some(&am.se), ctx.stamp())
        .map_err(at(Stage::Output, "amenities.csv"))
}

pub fn equilibrium_cmd(ctx: &Ctx) -> CliResult<()> {
    let d = Data::load(&ctx.cfg)?;
    let eq = equilibrium(&d, &ctx.cfg)?;
    let b = &eq.baseline;
    let c = d.world.cities();
    ctx.write(
        "equilibrium.csv",
        &table(vec![
            ("city_id", i(c.iter().map(|c| i64::from(c.id.0)))),
            ("L", i(b.labor.iter().map(|&l| l as i64))),
            ("Y", f(b.wage.iter().copied())),
            ("xiA", f(b.amenity.iter().copied())),
            ("A", f(eq.economy.scales.productivity.iter().copied())),
            ("a", f(eq.economy.scales.amenity.iter().copied())),
        ]),
    )?;
    ctx.write(
        "equilibrium_summary.csv",
        &table(vec![
            ("metric", s(["n_agents", "iterations", "wage_residual", "amenity_residual"])),
            (
                "value",
                f([eq.economy.agents.len() as f64, b.iterations as f64, b.wage_residual, b.amenity_residual]),
            ),
        ]),
    )
}

pub fn counterfactual(ctx: &Ctx) -> CliResult<()> {
    let d = Data::load(&ctx.cfg)?;
    let eq = equilibrium(&d, &ctx.cfg)?;
    let q = wage_quartiles(&d.world).map_err(at(Stage::Data, "wage quartiles"))?;
    if ctx.cfg.scenarios.is_empty() {
        return Err(CliError::config("no counterfactual scenarios requested"));
    }
    for &sc in &ctx.cfg.scenarios {
        info!("scenario {}", sc.label());
        let e = apply_counterfactual(sc, &eq.economy, &d.world, ctx.cfg.top_share).map_err(at(Stage::Config, sc.label()))?;
        let st = solve_equilibrium(&d.world, &e, &eq.shocks, (&eq.baseline.wage, &eq.baseline.amenity), &ctx.cfg.equilibrium)
            .map_err(at(Stage::Equilibrium, sc.label()))?;
        let r = outcomes_report(&d.world, (&eq.economy, &eq.baseline), (&e, &st), &eq.shocks, &q)
            .map_err(at(Stage::Equilibrium, sc.label()))?;
        ctx.write(
            &format!("report_{}.csv", sc.label()),
            &table(vec![
                ("group", s(r.rows.iter().map(|x| x.group.clone()))),
                ("metric", s(r.rows.iter().map(|x| x.metric.label()))),
                ("baseline", f(r.rows.iter().map(|x| x.baseline))),
                ("counterfactual", f(r.rows.iter().map(|x| x.value))),
                ("multiple", f(r.rows.iter().map(|x| x.multiple))),
            ]),
        )?;
    }
    Ok(())
}

pub fn report(ctx: &Ctx) -> CliResult<()> {
    let d = Data::load(&ctx.cfg)?;
    let q = wage_quartiles(&d.world).map_err(at(Stage::Data, "wage quartiles"))?;
    let (first, last) = (d.agents.first_year(), d.agents.last_year());
    let mut spans: Vec<(i32, i32)> = (first..last).map(|t| (t, t + 1)).collect();
    if last - first > 1 {
        spans.push((first, last));
    }
    let mut tr: (Vec<i64>, Vec<i64>, Vec<i64>, Vec<i64>, Vec<f64>, Vec<i64>) = Default::default();
    for &(t0, t1) in &spans {
        let m = transition_matrix(&d.agents, &d.world, t0, t1, &q).map_err(at(Stage::Data, "transitions"))?;
        for r in 0..4 {
            for c in 0..4 {
                tr.0.push(t0.into());
                tr.1.push(t1.into());
                tr.2.push(r as i64 + 1);
                tr.3.push(c as i64 + 1);
                tr.4.push(m.probs[r][c]);
                tr.5.push(m.row_counts[r] as i64);
            }
        }
    }
    ctx.write(
        "transitions.csv",
        &table(vec![
            ("year_from", i(tr.0)),
            ("year_to", i(tr.1)),
            ("quartile_from", i(tr.2)),
            ("quartile_to", i(tr.3)),
            ("probability", f(tr.4)),
            ("n_from", i(tr.5)),
        ]),
    )?;

    let obs = d.choice_sets(&ctx.cfg)?;
    let mut mw = Long::default();
    for &label in &ctx.cfg.specs {
        let sf = fit_spec(&d, &obs, label, false, &ctx.cfg)?;
        let fit = &sf.fit;
        let g = fit.coef_of(names::LOG_FRIENDS).unwrap_or(f64::NAN);
        let gse = fit.se_of(names::LOG_FRIENDS).unwrap_or(f64::NAN);
        mw.push(label.label(), "gamma", g, gse);
        let m = mwtp_distance(fit, &sf.observations).unwrap_or_else(|e| {
            warn!("{}: distance MWTP unavailable: {e}", label.label());
            f64::NAN
        });
        mw.push(label.label(), "mwtp_distance", m, f64::NAN);
    }
    ctx.write("mwtp.csv", &mw.into_table("spec"))?;

    let pref = fit_spec(&d, &obs, ctx.cfg.preferred, true, &ctx.cfg)?;
    let gamma = pref.fit.coef_of(names::LOG_FRIENDS).unwrap_or(f64::NAN);
    let xi = destination_effects(&pref.fit, &d.world).map_err(at(Stage::Estimation, "destination effects"))?;
    let w = destination_frequency(&pref.observations, d.world.len());
    let b = bartik(&d.industries).map_err(at(Stage::Data, "bartik"))?;
    let modes = [WageMode::Ols, WageMode::IvWage, WageMode::IvLabor, WageMode::IvBoth];
    let mut we: (Vec<&str>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<i64>, Vec<f64>) = Default::default();
    for mode in modes {
        let r = wage_elasticity_two_step(&xi, &w, &d.world, &b, mode, &[]).map_err(at(Stage::Estimation, "wage elasticity"))?;
        we.0.push(match mode {
            WageMode::Ols => "ols",
            WageMode::IvWage => "iv_wage",
            WageMode::IvLabor => "iv_labor",
            WageMode::IvBoth => "iv_both",
        });
        we.1.push(r.beta);
        we.2.push(r.se);
        we.3.push(r.first_stage_f.unwrap_or(f64::NAN));
        we.4.push(r.n_cities as i64);
        we.5.push(mwtp_wages(gamma, r.beta).unwrap_or(f64::NAN));
    }
    ctx.write(
        "wage_elasticity.csv",
        &table(vec![
            ("mode", s(we.0)),
            ("beta", f(we.1)),
            ("se", f(we.2)),
            ("first_stage_f", f(we.3)),
            ("n_cities", i(we.4)),
            ("gamma", f(std::iter::repeat_n(gamma, modes.len()))),
            ("mwtp_wages", f(we.5)),
        ]),
    )?;

    let gd = gravity_decomposition(&pref.fit, &pref.observations).map_err(at(Stage::Estimation, "gravity decomposition"))?;
    let mut gt: (Vec<String>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) = Default::default();
    gt.0.push(names::LOG_FRIENDS.into());
    gt.1.push(gd.gamma_full);
    gt.2.push(gd.gamma_ni);
    gt.3.push(f64::NAN);
    gt.4.push(f64::NAN);
    gt.5.push(f64::NAN);
    for t in &gd.terms {
        gt.0.push(t.name.clone());
        gt.1.push(t.full);
        gt.2.push(t.ni);
        gt.3.push(t.nn);
        gt.4.push(t.reduction_full);
        gt.5.push(t.reduction_ni);
    }
    ctx.write(
        "gravity.csv",
        &table(vec![
            ("term", s(gt.0)),
            ("full", f(gt.1)),
            ("network_inclusive", f(gt.2)),
            ("no_network", f(gt.3)),
            ("reduction_full", f(gt.4)),
            ("reduction_network_inclusive", f(gt.5)),
        ]),
    )?;

    let beta = d.params.beta;
    let friends: Vec<u32> = (0..=200).collect();
    let curve = marginal_distance_curve(&coefficients_of(&pref.fit), &friends);
    ctx.write(
        "marginal_distance.csv",
        &table(vec![
            ("friends", i(curve.iter().map(|c| i64::from(c.0)))),
            ("in_state", f(curve.iter().map(|c| c.1))),
            ("out_of_state", f(curve.iter().map(|c| c.2))),
            ("in_state_over_beta", f(curve.iter().map(|c| c.1 / beta))),
            ("out_of_state_over_beta", f(curve.iter().map(|c| c.2 / beta))),
        ]),
    )
}

pub fn resolve_out(flag: Option<PathBuf>, cfg: &RunConfig) -> CliResult<PathBuf> {
    flag.or_else(|| cfg.out.clone())
        .or_else(|| std::env::var_os(crate::OUT_ENV).map(PathBuf::from))
        .ok_or_else(|| CliError::config(format!("no output directory: pass --out, set `out` in the config or {}", crate::OUT_ENV)))
}
