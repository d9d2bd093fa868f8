//! Flattened estimation design: structural covariates, offsets and sparse
//! fixed-effect cells for every alternative, with the likelihood, its
//! derivatives and the blockwise information matrix.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use super::observation::{check_observation, ChoiceObservation};
use super::spec::{names, FeKey, FeLevel, ModelSpec, WageTerm, MAX_ODY_CELLS};
use crate::data::AgentId;
use crate::error::{Error, Result};
use crate::geo::{CityId, World};
use crate::stats::softmax_into;

const NO_CELL: u32 = u32::MAX;
const CHUNK: usize = 256;
/// Block-level reductions split the observations of a block into at most
/// this many chunks (fixed, so results do not depend on the thread count).
const MAX_BLOCK_CHUNKS: usize = 16;
/// Largest change of any fixed effect in one inner Newton step (log units).
const MAX_FE_STEP: f64 = 4.0;

/// Observations and alternatives removed before estimation because their
/// fixed effects are not finitely identified.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PruneReport {
    /// Observations dropped because the chosen alternative's cell is chosen
    /// whenever it is available, or fewer than two alternatives remain.
    pub observations: usize,
    /// Alternatives dropped because their cell is never chosen.
    pub alternatives: usize,
    /// Cells never chosen or always chosen.
    pub cells: usize,
    /// Alternatives or observations outside the RD bandwidth.
    pub bandwidth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsMeta {
    pub agent: AgentId,
    pub year: i32,
    pub origin: usize,
    /// Index into the observation slice the model was built from.
    pub source: usize,
}

#[derive(Debug, Clone)]
pub struct ChoiceModel {
    names: Vec<String>,
    k: usize,
    start: Vec<usize>,
    chosen: Vec<usize>,
    x: Vec<f64>,
    offset: Vec<f64>,
    cell: Vec<u32>,
    alt_source: Vec<u32>,
    obs_block: Vec<u32>,
    block_obs: Vec<usize>,
    block_fe: Vec<usize>,
    fe_keys: Vec<FeKey>,
    reference: Vec<FeKey>,
    meta: Vec<ObsMeta>,
    city_ids: Vec<CityId>,
    pub pruned: PruneReport,
}

/// Per-block information pieces: cross terms with the structural block and
/// the block's own fixed-effect information.
pub(crate) struct BlockInfo {
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

pub(crate) struct Information {
    pub a: DMatrix<f64>,
    pub blocks: Vec<BlockInfo>,
}

fn fe_key(level: FeLevel, world: &World, o: &ChoiceObservation, city: usize) -> Option<(FeKey, (u32, i32))> {
    let j = world.city(city).id;
    match level {
        FeLevel::None => None,
        FeLevel::Destination => Some((FeKey::Destination(j), (0, 0))),
        FeLevel::DestinationYear => Some((FeKey::DestinationYear(j, o.year), (0, o.year))),
        FeLevel::OriginDestinationYear => Some((
            FeKey::OriginDestinationYear(world.city(o.origin).id, j, o.year),
            (o.origin as u32, o.year),
        )),
    }
}

impl ChoiceModel {
    /// Builds the design. With `prune`, alternatives and observations whose
    /// fixed effects diverge are removed; otherwise they are a separation
    /// error naming the cell.
    pub fn new(observations: &[ChoiceObservation], spec: &ModelSpec, world: &World, prune: bool) -> Result<Self> {
        let j_n = world.len();
        for o in observations {
            check_observation(o)?;
            if o.alternatives.iter().any(|a| a.city >= j_n) || o.origin >= j_n {
                return Err(Error::invalid(format!("agent {} year {}: city index out of range", o.agent, o.year)));
            }
        }
        let check_len = |what: &str, v: &[f64]| -> Result<()> {
            if v.len() != j_n || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("{what}: need one finite value per city")));
            }
            Ok(())
        };
        if let Some(a) = &spec.amenity_offsets {
            check_len("amenity offsets", a)?;
        }
        for (n, v) in &spec.heterogeneity {
            check_len(&format!("heterogeneity covariate `{n}`"), v)?;
        }
        if let Some(rd) = &spec.rd {
            check_len("RD running variable", &rd.running)?;
            if !(rd.bandwidth > 0.0) {
                return Err(Error::invalid("RD bandwidth must be positive"));
            }
            if !spec.network {
                return Err(Error::invalid("RD design interacts the network term, which is disabled"));
            }
        }
        match &spec.wage {
            WageTerm::None => {}
            WageTerm::Estimated { log_wage } | WageTerm::Fixed { log_wage, .. } => check_len("log wages", log_wage)?,
        }
        if spec.fe != FeLevel::None && matches!(spec.wage, WageTerm::Estimated { .. }) {
            return Err(Error::Collinear {
                columns: vec![names::LOG_WAGE.to_string()],
            });
        }
        if spec.control_function
            && observations
                .iter()
                .any(|o| o.alternatives.iter().any(|a| a.cf_residual.is_none()))
        {
            return Err(Error::invalid("control function requested but some alternatives carry no residual"));
        }

        let bct = spec.fe == FeLevel::OriginDestinationYear;
        let mut names_v: Vec<String> = Vec::new();
        if !bct {
            names_v.push(names::SAME_CITY.into());
        }
        if spec.network {
            names_v.push(names::LOG_FRIENDS.into());
        }
        if !bct {
            names_v.push(names::LOG_DISTANCE.into());
            names_v.push(names::LOG_DISTANCE_OOS.into());
        }
        if spec.network && spec.interactions {
            names_v.push(names::SAME_CITY_FRIENDS.into());
            names_v.push(names::LOG_DISTANCE_FRIENDS.into());
            names_v.push(names::LOG_DISTANCE_OOS_FRIENDS.into());
        }
        if spec.network {
            for (n, _) in &spec.heterogeneity {
                names_v.push(format!("log_friends_x_{n}"));
            }
        }
        if spec.rd.is_some() {
            names_v.push(names::RD_RUNNING.into());
            names_v.push(names::RD_ABOVE.into());
        }
        if matches!(spec.wage, WageTerm::Estimated { .. }) {
            names_v.push(names::LOG_WAGE.into());
        }
        if spec.control_function {
            names_v.push(names::CF_RESIDUAL.into());
        }
        let k = names_v.len();

        // alive alternatives per observation (positions), after RD filtering
        let mut pruned = PruneReport::default();
        let mut alive: Vec<Option<Vec<usize>>> = observations
            .iter()
            .map(|o| {
                let keep: Vec<usize> = match &spec.rd {
                    None => (0..o.alternatives.len()).collect(),
                    Some(rd) => (0..o.alternatives.len())
                        .filter(|&p| {
                            let a = &o.alternatives[p];
                            a.same_city || (rd.running[a.city] - rd.cutoff).abs() <= rd.bandwidth
                        })
                        .collect(),
                };
                pruned.bandwidth += o.alternatives.len() - keep.len();
                if keep.contains(&o.chosen) {
                    Some(keep)
                } else {
                    pruned.bandwidth += 1;
                    None
                }
            })
            .collect();

        let keys: Vec<Vec<Option<(FeKey, (u32, i32))>>> = observations
            .iter()
            .map(|o| o.alternatives.iter().map(|a| fe_key(spec.fe, world, o, a.city)).collect())
            .collect();

        loop {
            let mut changed = false;
            for (i, al) in alive.iter_mut().enumerate() {
                if al.as_ref().is_some_and(|v| v.len() < 2) {
                    *al = None;
                    pruned.observations += 1;
                    changed = true;
                }
                let _ = i;
            }
            if spec.fe == FeLevel::None {
                break;
            }
            let mut seen: BTreeMap<FeKey, (usize, usize)> = BTreeMap::new();
            for (i, al) in alive.iter().enumerate() {
                let Some(al) = al else { continue };
                for &p in al {
                    let key = keys[i][p].unwrap().0;
                    let e = seen.entry(key).or_default();
                    e.0 += 1;
                    e.1 += usize::from(p == observations[i].chosen);
                }
            }
            let never: BTreeSet<FeKey> = seen.iter().filter(|(_, c)| c.1 == 0).map(|(k, _)| *k).collect();
            let always: BTreeSet<FeKey> = seen.iter().filter(|(_, c)| c.1 == c.0).map(|(k, _)| *k).collect();
            if !prune {
                if let Some(k) = never.iter().chain(&always).next() {
                    return Err(Error::Separation {
                        covariate: k.label(),
                    });
                }
            }
            pruned.cells += never.len() + always.len();
            for (i, al) in alive.iter_mut().enumerate() {
                let Some(v) = al else { continue };
                let chosen_key = keys[i][observations[i].chosen].unwrap().0;
                if always.contains(&chosen_key) {
                    *al = None;
                    pruned.observations += 1;
                    changed = true;
                    continue;
                }
                let before = v.len();
                v.retain(|&p| !never.contains(&keys[i][p].unwrap().0));
                if v.len() != before {
                    pruned.alternatives += before - v.len();
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        // blocks and fixed-effect indices
        let mut block_cells: BTreeMap<(u32, i32), BTreeSet<FeKey>> = BTreeMap::new();
        let mut obs_blockkey: Vec<(u32, i32)> = vec![(0, 0); observations.len()];
        for (i, al) in alive.iter().enumerate() {
            let Some(al) = al else { continue };
            if spec.fe == FeLevel::None {
                block_cells.entry((0, 0)).or_default();
                continue;
            }
            for &p in al {
                let (key, bk) = keys[i][p].unwrap();
                obs_blockkey[i] = bk;
                block_cells.entry(bk).or_default().insert(key);
            }
        }
        let mut block_index: BTreeMap<(u32, i32), usize> = BTreeMap::new();
        let mut cell_index: BTreeMap<FeKey, (usize, u32)> = BTreeMap::new();
        let mut fe_keys = Vec::new();
        let mut reference = Vec::new();
        let mut block_fe = vec![0];
        for (b, (bk, cells)) in block_cells.iter().enumerate() {
            block_index.insert(*bk, b);
            let mut it = cells.iter();
            if let Some(r) = it.next() {
                reference.push(*r);
            }
            for (local, key) in it.enumerate() {
                cell_index.insert(*key, (b, local as u32));
                fe_keys.push(*key);
            }
            block_fe.push(fe_keys.len());
        }
        if bct && fe_keys.len() + reference.len() > MAX_ODY_CELLS {
            return Err(Error::invalid(format!(
                "origin x destination x year specification has {} cells, above the limit of {MAX_ODY_CELLS}",
                fe_keys.len() + reference.len()
            )));
        }

        let mut order: Vec<usize> = (0..observations.len()).filter(|&i| alive[i].is_some()).collect();
        order.sort_by_key(|&i| if spec.fe == FeLevel::None { 0 } else { block_index[&obs_blockkey[i]] });

        let wage_fixed = match &spec.wage {
            WageTerm::Fixed { beta, log_wage } => Some((*beta, log_wage)),
            _ => None,
        };
        let wage_est = match &spec.wage {
            WageTerm::Estimated { log_wage } => Some(log_wage),
            _ => None,
        };
        let mut m = ChoiceModel {
            names: names_v,
            k,
            start: vec![0],
            chosen: Vec::with_capacity(order.len()),
            x: Vec::new(),
            offset: Vec::new(),
            cell: Vec::new(),
            alt_source: Vec::new(),
            obs_block: Vec::with_capacity(order.len()),
            block_obs: vec![0; block_cells.len() + 1],
            block_fe,
            fe_keys,
            reference,
            meta: Vec::with_capacity(order.len()),
            city_ids: world.cities().iter().map(|c| c.id).collect(),
            pruned,
        };
        for &i in &order {
            let o = &observations[i];
            let b = if spec.fe == FeLevel::None { 0 } else { block_index[&obs_blockkey[i]] };
            m.obs_block.push(b as u32);
            m.block_obs[b + 1] += 1;
            for &p in alive[i].as_ref().unwrap() {
                let a = &o.alternatives[p];
                if p == o.chosen {
                    m.chosen.push(m.offset.len());
                }
                let same = f64::from(u8::from(a.same_city));
                let oos = f64::from(u8::from(a.out_of_state));
                let (n, ld) = (a.log_friends, a.log_distance);
                if !bct {
                    m.x.push(same);
                }
                if spec.network {
                    m.x.push(n);
                }
                if !bct {
                    m.x.push(ld);
                    m.x.push(ld * oos);
                }
                if spec.network && spec.interactions {
                    m.x.push(same * n);
                    m.x.push(ld * n);
                    m.x.push(ld * oos * n);
                }
                if spec.network {
                    for (_, v) in &spec.heterogeneity {
                        m.x.push(n * v[a.city]);
                    }
                }
                if let Some(rd) = &spec.rd {
                    let r = rd.running[a.city] - rd.cutoff;
                    m.x.push(n * r);
                    m.x.push(n * f64::from(u8::from(r > 0.0)));
                }
                if let Some(lw) = wage_est {
                    m.x.push(lw[a.city]);
                }
                if spec.control_function {
                    m.x.push(a.cf_residual.unwrap());
                }
                let mut off = -a.inclusion_log_prob;
                if let Some(am) = &spec.amenity_offsets {
                    off += am[a.city];
                }
                if let Some((beta, lw)) = wage_fixed {
                    off += beta * lw[a.city];
                }
                m.offset.push(off);
                m.cell.push(match keys[i][p] {
                    Some((key, _)) => cell_index.get(&key).map_or(NO_CELL, |&(_, l)| l),
                    None => NO_CELL,
                });
                m.alt_source.push(p as u32);
            }
            m.start.push(m.offset.len());
            m.meta.push(ObsMeta {
                agent: o.agent,
                year: o.year,
                origin: o.origin,
                source: i,
            });
        }
        for b in 0..block_cells.len() {
            m.block_obs[b + 1] += m.block_obs[b];
        }
        if m.n_obs() == 0 {
            return Err(Error::invalid("no observations left to estimate after pruning"));
        }
        Ok(m)
    }

    pub fn structural_names(&self) -> &[String] {
        &self.names
    }

    pub fn n_structural(&self) -> usize {
        self.k
    }

    pub fn n_fe(&self) -> usize {
        self.fe_keys.len()
    }

    pub fn n_params(&self) -> usize {
        self.k + self.fe_keys.len()
    }

    pub fn fe_keys(&self) -> &[FeKey] {
        &self.fe_keys
    }

    pub fn reference_cells(&self) -> &[FeKey] {
        &self.reference
    }

    /// Names of every parameter: structural first, then fixed effects.
    pub fn param_names(&self) -> Vec<String> {
        self.names
            .iter()
            .cloned()
            .chain(self.fe_keys.iter().map(FeKey::label))
            .collect()
    }

    pub fn n_obs(&self) -> usize {
        self.chosen.len()
    }

    pub fn n_alternatives(&self) -> usize {
        self.offset.len()
    }

    pub fn meta(&self) -> &[ObsMeta] {
        &self.meta
    }

    pub fn city_ids(&self) -> &[CityId] {
        &self.city_ids
    }

    /// Position (in the source observation) of each kept alternative of
    /// kept observation `i`.
    pub fn alternative_positions(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.alt_source[self.start[i]..self.start[i + 1]].iter().map(|&p| p as usize)
    }

    fn n_blocks(&self) -> usize {
        self.block_obs.len() - 1
    }

    fn fe_index(&self, i: usize, alt: usize) -> Option<usize> {
        let c = self.cell[alt];
        (c != NO_CELL).then(|| self.block_fe[self.obs_block[i] as usize] + c as usize)
    }

    fn utilities_into(&self, b: &[f64], fe: &[f64], i: usize, v: &mut Vec<f64>) {
        let k = self.k;
        v.clear();
        for a in self.start[i]..self.start[i + 1] {
            let xa = &self.x[a * k..(a + 1) * k];
            let mut u = self.offset[a];
            for (x, c) in xa.iter().zip(b) {
                u += x * c;
            }
            if let Some(f) = self.fe_index(i, a) {
                u += fe[f];
            }
            v.push(u);
        }
    }

    fn split<'t>(&self, theta: &'t [f64]) -> (&'t [f64], &'t [f64]) {
        assert_eq!(theta.len(), self.n_params(), "parameter vector length");
        theta.split_at(self.k)
    }

    /// Systematic utility of every kept alternative of kept observation `i`.
    pub fn utilities(&self, theta: &[f64], i: usize) -> Vec<f64> {
        let (b, fe) = self.split(theta);
        let mut v = Vec::new();
        self.utilities_into(b, fe, i, &mut v);
        v
    }

    /// Choice probabilities per kept observation.
    pub fn probabilities(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n_obs())
            .map(|i| {
                let v = self.utilities(theta, i);
                let mut p = vec![0.0; v.len()];
                softmax_into(&v, &mut p);
                p
            })
            .collect()
    }

    fn chunk_ranges(lo: usize, hi: usize, size: usize) -> Vec<(usize, usize)> {
        (lo..hi).step_by(size.max(1)).map(|s| (s, (s + size).min(hi))).collect()
    }

    fn loglik_range(&self, b: &[f64], fe: &[f64], lo: usize, hi: usize) -> f64 {
        Self::chunk_ranges(lo, hi, CHUNK)
            .into_par_iter()
            .map(|(s, e)| {
                let mut v = Vec::new();
                let mut ll = 0.0;
                for i in s..e {
                    self.utilities_into(b, fe, i, &mut v);
                    ll += v[self.chosen[i] - self.start[i]] - crate::stats::logsumexp(&v);
                }
                ll
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    }

    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let (b, fe) = self.split(theta);
        self.loglik_range(b, fe, 0, self.n_obs())
    }

    /// Log-likelihood and its gradient with respect to every parameter.
    pub fn log_likelihood_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (b, fe) = self.split(theta);
        let np = self.n_params();
        let k = self.k;
        let parts: Vec<(f64, Vec<f64>)> = Self::chunk_ranges(0, self.n_obs(), CHUNK)
            .into_par_iter()
            .map(|(s, e)| {
                let mut g = vec![0.0; np];
                let mut ll = 0.0;
                let mut v = Vec::new();
                let mut p = Vec::new();
                for i in s..e {
                    self.utilities_into(b, fe, i, &mut v);
                    p.resize(v.len(), 0.0);
                    let lse = softmax_into(&v, &mut p);
                    let ch = self.chosen[i];
                    ll += v[ch - self.start[i]] - lse;
                    for (r, a) in (self.start[i]..self.start[i + 1]).enumerate() {
                        let w = f64::from(u8::from(a == ch)) - p[r];
                        for (gk, xk) in g[..k].iter_mut().zip(&self.x[a * k..(a + 1) * k]) {
                            *gk += w * xk;
                        }
                        if let Some(f) = self.fe_index(i, a) {
                            g[k + f] += w;
                        }
                    }
                }
                (ll, g)
            })
            .collect();
        let mut ll = 0.0;
        let mut g = vec![0.0; np];
        for (l, gp) in parts {
            ll += l;
            for (a, b) in g.iter_mut().zip(gp) {
                *a += b;
            }
        }
        (ll, g)
    }

    fn block_chunks(&self, bl: usize) -> Vec<(usize, usize)> {
        let (lo, hi) = (self.block_obs[bl], self.block_obs[bl + 1]);
        let size = CHUNK.max((hi - lo).div_ceil(MAX_BLOCK_CHUNKS));
        Self::chunk_ranges(lo, hi, size)
    }

    /// Block log-likelihood, gradient and (optionally) information for the
    /// block's own fixed effects, structural coefficients held fixed.
    fn block_fe_stats(&self, b: &[f64], fe: &[f64], bl: usize, hessian: bool) -> (f64, DVector<f64>, Option<DMatrix<f64>>) {
        let nb = self.block_fe[bl + 1] - self.block_fe[bl];
        let parts: Vec<(f64, DVector<f64>, Option<DMatrix<f64>>)> = self
            .block_chunks(bl)
            .into_par_iter()
            .map(|(s, e)| {
                let mut g = DVector::zeros(nb);
                let mut c = hessian.then(|| DMatrix::zeros(nb, nb));
                let mut ll = 0.0;
                let mut v = Vec::new();
                let mut p = Vec::new();
                let mut q: Vec<(usize, f64)> = Vec::new();
                for i in s..e {
                    self.utilities_into(b, fe, i, &mut v);
                    p.resize(v.len(), 0.0);
                    let lse = softmax_into(&v, &mut p);
                    let ch = self.chosen[i];
                    ll += v[ch - self.start[i]] - lse;
                    q.clear();
                    for (r, a) in (self.start[i]..self.start[i + 1]).enumerate() {
                        let ca = self.cell[a];
                        if ca == NO_CELL {
                            continue;
                        }
                        let ca = ca as usize;
                        g[ca] += f64::from(u8::from(a == ch)) - p[r];
                        q.push((ca, p[r]));
                    }
                    if let Some(c) = c.as_mut() {
                        // upper triangle only; cells within one observation are distinct
                        for (x, &(ca, pa)) in q.iter().enumerate() {
                            c[(ca, ca)] += pa;
                            for &(cb, pb) in &q[x..] {
                                let (lo, hi) = if ca <= cb { (ca, cb) } else { (cb, ca) };
                                c[(lo, hi)] -= pa * pb;
                            }
                        }
                    }
                }
                (ll, g, c)
            })
            .collect();
        let mut ll = 0.0;
        let mut g = DVector::zeros(nb);
        let mut c = hessian.then(|| DMatrix::zeros(nb, nb));
        for (l, gp, cp) in parts {
            ll += l;
            g += gp;
            if let (Some(c), Some(cp)) = (c.as_mut(), cp) {
                *c += cp;
            }
        }
        if let Some(c) = c.as_mut() {
            c.fill_lower_triangle_with_upper_triangle();
        }
        (ll, g, c)
    }

    fn block_loglik(&self, b: &[f64], fe: &[f64], bl: usize) -> f64 {
        let mut v = Vec::new();
        self.block_chunks(bl)
            .into_iter()
            .map(|(s, e)| {
                let mut ll = 0.0;
                for i in s..e {
                    self.utilities_into(b, fe, i, &mut v);
                    ll += v[self.chosen[i] - self.start[i]] - crate::stats::logsumexp(&v);
                }
                ll
            })
            .sum()
    }

    /// Maximizes over the fixed effects of every block with `b` held fixed
    /// (Newton with backtracking); `fe` is the warm start. Returns the
    /// profile log-likelihood and the largest remaining FE gradient.
    pub(crate) fn concentrate(&self, b: &[f64], fe: &mut [f64], tol: f64) -> (f64, f64) {
        if self.n_fe() == 0 {
            return (self.loglik_range(b, fe, 0, self.n_obs()), 0.0);
        }
        let nbk = self.n_blocks();
        let blocks: Vec<(usize, Vec<f64>)> = (0..nbk)
            .map(|bl| (bl, fe[self.block_fe[bl]..self.block_fe[bl + 1]].to_vec()))
            .collect();
        let results: Vec<(f64, f64, Vec<f64>)> = blocks
            .into_par_iter()
            .map(|(bl, mut local)| {
                let lo = self.block_fe[bl];
                let mut full = fe.to_vec();
                let mut ll = 0.0;
                let mut gmax = f64::INFINITY;
                let mut tail = 0;
                // the Hessian factor is reused while the gradient keeps
                // shrinking fast and refreshed when it stops doing so
                let mut factor: Option<Option<Cholesky<f64, Dyn>>> = None;
                for _ in 0..200 {
                    full[lo..lo + local.len()].copy_from_slice(&local);
                    let last = gmax;
                    let (l, g, _) = self.block_fe_stats(b, &full, bl, false);
                    ll = l;
                    gmax = g.amax();
                    if local.is_empty() || gmax < tol {
                        break;
                    }
                    let fresh = factor.is_none() || gmax > 0.1 * last;
                    if fresh {
                        let (_, _, c) = self.block_fe_stats(b, &full, bl, true);
                        let c = c.expect("requested");
                        let n = c.nrows();
                        factor = Some(c.clone().cholesky().or_else(|| (c + DMatrix::identity(n, n) * 1e-8).cholesky()));
                    }
                    let mut step = match factor.as_ref().and_then(Option::as_ref) {
                        Some(ch) => ch.solve(&g),
                        None => g.clone(),
                    };
                    // near-degenerate probabilities make raw Newton steps explode
                    let longest = step.amax();
                    if longest > MAX_FE_STEP {
                        step *= MAX_FE_STEP / longest;
                    }
                    let slope = g.dot(&step);
                    let noise = 1e-12 * ll.abs().max(1.0);
                    // Newton decrement below working precision: a few more
                    // steps finish quadratic convergence, but a drifting
                    // weakly identified cell must not loop forever
                    if slope <= noise {
                        tail += 1;
                        if tail > 3 {
                            break;
                        }
                    }
                    let mut alpha = 1.0;
                    let mut accepted = false;
                    for _ in 0..40 {
                        let trial: Vec<f64> = local.iter().zip(step.iter()).map(|(f, s)| f + alpha * s).collect();
                        full[lo..lo + local.len()].copy_from_slice(&trial);
                        let lt = self.block_loglik(b, &full, bl);
                        if lt >= ll + 1e-4 * alpha * slope - noise {
                            local = trial;
                            accepted = true;
                            break;
                        }
                        alpha *= 0.5;
                    }
                    if !accepted {
                        full[lo..lo + local.len()].copy_from_slice(&local);
                        if !fresh {
                            factor = None;
                            gmax = f64::INFINITY;
                            continue;
                        }
                        break;
                    }
                }
                if !gmax.is_finite() {
                    gmax = 0.0;
                }
                (ll, gmax, local)
            })
            .collect();
        let mut total = 0.0;
        let mut gmax: f64 = 0.0;
        for (bl, (l, g, local)) in results.into_iter().enumerate() {
            total += l;
            gmax = gmax.max(g);
            fe[self.block_fe[bl]..self.block_fe[bl + 1]].copy_from_slice(&local);
        }
        (total, gmax)
    }

    /// Gradient of the log-likelihood with respect to the structural
    /// coefficients only.
    pub(crate) fn structural_gradient(&self, b: &[f64], fe: &[f64]) -> (f64, Vec<f64>) {
        let k = self.k;
        let parts: Vec<(f64, Vec<f64>)> = Self::chunk_ranges(0, self.n_obs(), CHUNK)
            .into_par_iter()
            .map(|(s, e)| {
                let mut g = vec![0.0; k];
                let mut ll = 0.0;
                let mut v = Vec::new();
                let mut p = Vec::new();
                for i in s..e {
                    self.utilities_into(b, fe, i, &mut v);
                    p.resize(v.len(), 0.0);
                    let lse = softmax_into(&v, &mut p);
                    let ch = self.chosen[i];
                    ll += v[ch - self.start[i]] - lse;
                    for (r, a) in (self.start[i]..self.start[i + 1]).enumerate() {
                        let w = f64::from(u8::from(a == ch)) - p[r];
                        for (gk, xk) in g.iter_mut().zip(&self.x[a * k..(a + 1) * k]) {
                            *gk += w * xk;
                        }
                    }
                }
                (ll, g)
            })
            .collect();
        let mut ll = 0.0;
        let mut g = vec![0.0; k];
        for (l, gp) in parts {
            ll += l;
            for (a, b) in g.iter_mut().zip(gp) {
                *a += b;
            }
        }
        (ll, g)
    }

    /// Expected information (negative Hessian) split into the structural
    /// block, per-block cross terms and per-block FE information.
    pub(crate) fn information(&self, b: &[f64], fe: &[f64]) -> Information {
        let k = self.k;
        let per_block: Vec<(DMatrix<f64>, BlockInfo)> = (0..self.n_blocks())
            .into_par_iter()
            .map(|bl| {
                let nb = self.block_fe[bl + 1] - self.block_fe[bl];
                let parts: Vec<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> = self
                    .block_chunks(bl)
                    .into_par_iter()
                    .map(|(s, e)| {
                        let mut a_m = DMatrix::zeros(k, k);
                        let mut b_m = DMatrix::zeros(k, nb);
                        let mut c_m = DMatrix::zeros(nb, nb);
                        let mut v = Vec::new();
                        let mut p = Vec::new();
                        let mut xbar = vec![0.0; k];
                        let mut dx = DVector::zeros(k);
                        for i in s..e {
                            self.utilities_into(b, fe, i, &mut v);
                            p.resize(v.len(), 0.0);
                            softmax_into(&v, &mut p);
                            let alts = self.start[i]..self.start[i + 1];
                            xbar.iter_mut().for_each(|x| *x = 0.0);
                            for (r, a) in alts.clone().enumerate() {
                                for (xb, xk) in xbar.iter_mut().zip(&self.x[a * k..(a + 1) * k]) {
                                    *xb += p[r] * xk;
                                }
                            }
                            for (r, a) in alts.clone().enumerate() {
                                for q in 0..k {
                                    dx[q] = self.x[a * k + q] - xbar[q];
                                }
                                a_m.ger(p[r], &dx, &dx, 1.0);
                                let ca = self.cell[a];
                                if ca != NO_CELL {
                                    let ca = ca as usize;
                                    for q in 0..k {
                                        b_m[(q, ca)] += p[r] * dx[q];
                                    }
                                    c_m[(ca, ca)] += p[r];
                                    for (r2, a2) in alts.clone().enumerate() {
                                        let cb = self.cell[a2];
                                        if cb != NO_CELL {
                                            c_m[(ca, cb as usize)] -= p[r] * p[r2];
                                        }
                                    }
                                }
                            }
                        }
                        (a_m, b_m, c_m)
                    })
                    .collect();
                let mut a_m = DMatrix::zeros(k, k);
                let mut b_m = DMatrix::zeros(k, nb);
                let mut c_m = DMatrix::zeros(nb, nb);
                for (a, bb, c) in parts {
                    a_m += a;
                    b_m += bb;
                    c_m += c;
                }
                (a_m, BlockInfo { b: b_m, c: c_m })
            })
            .collect();
        let mut a = DMatrix::zeros(k, k);
        let mut blocks = Vec::with_capacity(per_block.len());
        for (am, bi) in per_block {
            a += am;
            blocks.push(bi);
        }
        Information { a, blocks }
    }

    /// Per-observation scores: the structural part and the sparse
    /// fixed-effect part as (global index, value) pairs.
    pub(crate) fn scores(&self, b: &[f64], fe: &[f64]) -> Vec<(DVector<f64>, Vec<(usize, f64)>)> {
        let k = self.k;
        Self::chunk_ranges(0, self.n_obs(), CHUNK)
            .into_par_iter()
            .flat_map_iter(|(s, e)| {
                let mut v = Vec::new();
                let mut p = Vec::new();
                let mut out = Vec::with_capacity(e - s);
                for i in s..e {
                    self.utilities_into(b, fe, i, &mut v);
                    p.resize(v.len(), 0.0);
                    softmax_into(&v, &mut p);
                    let ch = self.chosen[i];
                    let mut ss = DVector::zeros(k);
                    let mut sf = Vec::new();
                    for (r, a) in (self.start[i]..self.start[i + 1]).enumerate() {
                        let w = f64::from(u8::from(a == ch)) - p[r];
                        for q in 0..k {
                            ss[q] += w * self.x[a * k + q];
                        }
                        if let Some(fi) = self.fe_index(i, a) {
                            sf.push((fi, w));
                        }
                    }
                    out.push((ss, sf));
                }
                out
            })
            .collect()
    }

    pub(crate) fn block_of(&self, i: usize) -> usize {
        self.obs_block[i] as usize
    }

    pub(crate) fn block_fe_range(&self, bl: usize) -> std::ops::Range<usize> {
        self.block_fe[bl]..self.block_fe[bl + 1]
    }
}
