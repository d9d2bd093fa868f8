use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::model::{ChoiceModel, PruneReport};
use super::observation::ChoiceObservation;
use super::spec::{FeKey, ModelSpec};
use crate::data::AgentId;
use crate::error::{Error, Result};
use crate::geo::{CityId, World};
use crate::linear::dependent_columns;

/// Coefficients beyond this magnitude are treated as diverging.
const SEPARATION_BOUND: f64 = 25.0;
/// Relative profile information below which a large coefficient counts as
/// diverging.
const SEPARATION_CURVATURE: f64 = 1e-8;
const TRACE_TAIL: usize = 10;
/// Largest change of any structural coefficient in one outer step.
const MAX_STEP: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Drop never-chosen / always-chosen FE cells instead of failing.
    pub prune: bool,
    /// Also compute sandwich SEs for the fixed effects (full dense
    /// information; only when the parameter count is at most `max_dense`).
    pub fe_standard_errors: bool,
    pub max_dense: usize,
    pub max_iter: usize,
    pub gradient_tol: f64,
    pub relative_tol: f64,
    pub fe_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            prune: true,
            fe_standard_errors: false,
            max_dense: 2000,
            max_iter: 500,
            gradient_tol: 1e-8,
            relative_tol: 1e-12,
            fe_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeEstimate {
    pub key: FeKey,
    pub value: f64,
    pub se: Option<f64>,
    pub reference: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub vcov: DMatrix<f64>,
    pub fe: Vec<FeEstimate>,
    pub log_likelihood: f64,
    /// Sup-norm of the full gradient at the returned point.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub n_obs: usize,
    pub n_alternatives: usize,
    pub n_clusters: usize,
    pub pruned: PruneReport,
    /// Log-likelihood after every accepted step.
    pub trace: Vec<f64>,
    /// City id by world index, for mapping alternatives to FE keys.
    pub city_ids: Vec<CityId>,
}

impl FitResult {
    pub fn coef_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coef[i])
    }

    pub fn se_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.se[i])
    }

    pub fn fe_value(&self, key: &FeKey) -> Option<f64> {
        self.fe
            .binary_search_by(|e| e.key.cmp(key))
            .ok()
            .map(|i| self.fe[i].value)
    }
}

fn sym_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    m.clone().cholesky().map(|c| c.solve(&DMatrix::identity(n, n)))
}

/// Columns responsible for a singular information matrix.
fn singular_columns(s: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let k = s.nrows();
    let d: Vec<f64> = (0..k).map(|i| s[(i, i)].max(0.0).sqrt()).collect();
    let r = DMatrix::from_fn(k, k, |i, j| if d[i] > 0.0 && d[j] > 0.0 { s[(i, j)] / (d[i] * d[j]) } else { 0.0 });
    let eig = r.symmetric_eigen();
    let root = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()))
        * eig.eigenvectors.transpose();
    let mut cols = dependent_columns(&root, names);
    if cols.is_empty() {
        cols = names.to_vec();
    }
    cols
}

struct Profile<'m> {
    model: &'m ChoiceModel,
    fe_tol: f64,
}

impl Profile<'_> {
    /// Profile log-likelihood and structural gradient at `b`, updating the
    /// warm-started fixed effects in place.
    fn eval(&self, b: &[f64], fe: &mut [f64]) -> (f64, Vec<f64>, f64) {
        let (_, fe_g) = self.model.concentrate(b, fe, self.fe_tol);
        let (ll, g) = self.model.structural_gradient(b, fe);
        (ll, g, fe_g)
    }

    /// Schur complement of the information in the structural block.
    fn schur(&self, b: &[f64], fe: &[f64]) -> Result<DMatrix<f64>> {
        let info = self.model.information(b, fe);
        let mut s = info.a;
        for (bl, bi) in info.blocks.iter().enumerate() {
            if bi.c.nrows() == 0 {
                continue;
            }
            let ch = bi.c.clone().cholesky().ok_or_else(|| Error::Collinear {
                columns: self.model.fe_keys()[self.model.block_fe_range(bl)].iter().map(FeKey::label).collect(),
            })?;
            s -= &bi.b * ch.solve(&bi.b.transpose());
        }
        Ok(s)
    }

    /// Inverse Schur complement; `None` once it is numerically singular,
    /// which happens far out along a separating direction.
    fn metric(&self, b: &[f64], fe: &[f64]) -> Option<DMatrix<f64>> {
        sym_inverse(&self.schur(b, fe).ok()?)
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Conditional-logit maximum likelihood. Fixed effects are concentrated
/// out block by block; the structural coefficients are found by Newton
/// steps on the profile likelihood (inverse profile information as the
/// metric, BFGS updates where it is singular), started at zero with a cap
/// on the step length. Standard errors are sandwich
/// estimates clustered by (agent, year).
pub fn fit_logit(observations: &[ChoiceObservation], spec: &ModelSpec, world: &World, options: &FitOptions) -> Result<FitResult> {
    let model = ChoiceModel::new(observations, spec, world, options.prune)?;
    fit_model(&model, options)
}

pub fn fit_model(model: &ChoiceModel, options: &FitOptions) -> Result<FitResult> {
    let k = model.n_structural();
    let names = model.structural_names().to_vec();
    let profile = Profile {
        model,
        fe_tol: options.fe_tol,
    };
    let mut b = vec![0.0; k];
    let mut fe = vec![0.0; model.n_fe()];
    let (mut ll, mut g, mut fe_g) = profile.eval(&b, &mut fe);
    let mut trace = vec![ll];

    let s0 = profile.schur(&b, &fe)?;
    let mut hinv = sym_inverse(&s0).ok_or_else(|| Error::Collinear {
        columns: singular_columns(&s0, &names),
    })?;

    let mut iterations = 0;
    let mut converged = sup(&g).max(fe_g) < options.gradient_tol;
    let mut reset_used = false;
    let mut newton_polish = false;
    while !converged && iterations < options.max_iter {
        iterations += 1;
        let gv = DVector::from_column_slice(&g);
        if let Some(m) = profile.metric(&b, &fe) {
            hinv = m;
        }
        let mut d = &hinv * &gv;
        let longest = d.amax();
        if longest > MAX_STEP {
            d *= MAX_STEP / longest;
        }
        let mut slope = gv.dot(&d);
        if !(slope > 0.0) {
            hinv = profile.metric(&b, &fe).unwrap_or_else(|| DMatrix::identity(k, k));
            d = &hinv * &gv;
            slope = gv.dot(&d);
        }
        // predicted gain below the rounding noise of the log-likelihood:
        // a full step is taken as long as it does not visibly lose ground
        let noise = 1e-12 * ll.abs().max(1.0);
        let below_noise = 0.5 * slope <= 10.0 * noise;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<f64> = b.iter().zip(d.iter()).map(|(x, s)| x + alpha * s).collect();
            let mut fe_t = fe.clone();
            let (ll_t, g_t, fe_gt) = profile.eval(&trial, &mut fe_t);
            if ll_t.is_finite() && (ll_t >= ll + 1e-4 * alpha * slope || (below_noise && alpha == 1.0 && ll_t >= ll - noise)) {
                accepted = Some((trial, fe_t, ll_t, g_t, fe_gt));
                break;
            }
            alpha *= 0.5;
        }
        let Some((b_new, fe_new, ll_new, g_new, fe_g_new)) = accepted else {
            // no ascent possible at working precision
            if 0.5 * slope <= options.relative_tol * ll.abs().max(1.0) {
                converged = true;
                break;
            }
            if !reset_used {
                reset_used = true;
                hinv = profile.metric(&b, &fe).unwrap_or_else(|| DMatrix::identity(k, k));
                continue;
            }
            break;
        };
        reset_used = false;
        let s = DVector::from_iterator(k, b_new.iter().zip(&b).map(|(n, o)| n - o));
        let y = DVector::from_iterator(k, g.iter().zip(&g_new).map(|(o, n)| o - n));
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += (&s * s.transpose()) * (rho * (1.0 + rho * yhy)) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        let rel = (ll_new - ll).abs() / ll.abs().max(1.0);
        b = b_new;
        fe = fe_new;
        ll = ll_new;
        g = g_new;
        fe_g = fe_g_new;
        trace.push(ll);
        // a vanishing gradient only counts once the steps have shrunk too;
        // under separation the gradient decays while steps stay large
        let step = s.amax();
        let small_gradient = sup(&g).max(fe_g) < options.gradient_tol;
        if small_gradient && step < 1e-4 {
            converged = true;
        } else if rel < options.relative_tol && step < 1e-4 {
            // stalled with a gradient above tolerance: take exact profile
            // Newton steps before giving up on further progress
            if small_gradient || newton_polish {
                converged = true;
            } else {
                newton_polish = true;
                hinv = profile.metric(&b, &fe).unwrap_or(hinv);
            }
        }
    }
    let gradient_norm = sup(&g).max(fe_g);
    // a large coefficient is separation only if the likelihood has gone
    // flat along it (or the search never settled)
    if let Some(i) = (0..k)
        .filter(|&i| b[i].abs() > SEPARATION_BOUND)
        .max_by(|&i, &j| b[i].abs().total_cmp(&b[j].abs()))
    {
        let flat = !converged
            || profile.schur(&b, &fe).map_or(true, |s| {
                let top = s.diagonal().amax().max(model.n_obs() as f64);
                !(s[(i, i)] > SEPARATION_CURVATURE * top)
            });
        if flat {
            return Err(Error::Separation {
                covariate: names[i].clone(),
            });
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            gradient_norm,
            trace: trace[trace.len().saturating_sub(TRACE_TAIL)..].to_vec(),
        });
    }

    let (vcov, fe_se, n_clusters) = sandwich(model, &b, &fe, options, &names)?;
    let se: Vec<f64> = (0..k).map(|i| vcov[(i, i)].max(0.0).sqrt()).collect();

    let mut fe_est: Vec<FeEstimate> = model
        .fe_keys()
        .iter()
        .enumerate()
        .map(|(i, key)| FeEstimate {
            key: *key,
            value: fe[i],
            se: fe_se.as_ref().map(|v| v[i]),
            reference: false,
        })
        .chain(model.reference_cells().iter().map(|key| FeEstimate {
            key: *key,
            value: 0.0,
            se: None,
            reference: true,
        }))
        .collect();
    fe_est.sort_by_key(|e| e.key);

    Ok(FitResult {
        names,
        coef: b,
        se,
        vcov,
        fe: fe_est,
        log_likelihood: ll,
        gradient_norm,
        iterations,
        n_obs: model.n_obs(),
        n_alternatives: model.n_alternatives(),
        n_clusters,
        pruned: model.pruned.clone(),
        trace,
        city_ids: model.city_ids().to_vec(),
    })
}

type Sandwich = (DMatrix<f64>, Option<Vec<f64>>, usize);

fn sandwich(model: &ChoiceModel, b: &[f64], fe: &[f64], options: &FitOptions, names: &[String]) -> Result<Sandwich> {
    let k = model.n_structural();
    let nfe = model.n_fe();
    let info = model.information(b, fe);
    let scores = model.scores(b, fe);

    // clusters keyed by (agent, year)
    let mut cluster_of: BTreeMap<(AgentId, i32), usize> = BTreeMap::new();
    let ids: Vec<usize> = model
        .meta()
        .iter()
        .map(|m| {
            let n = cluster_of.len();
            *cluster_of.entry((m.agent, m.year)).or_insert(n)
        })
        .collect();
    let g = cluster_of.len();
    let factor = if g > 1 { g as f64 / (g as f64 - 1.0) } else { 1.0 };

    let dense = options.fe_standard_errors && k + nfe <= options.max_dense;
    if dense {
        let np = k + nfe;
        let mut h = DMatrix::zeros(np, np);
        h.view_mut((0, 0), (k, k)).copy_from(&info.a);
        for (bl, bi) in info.blocks.iter().enumerate() {
            let r = model.block_fe_range(bl);
            h.view_mut((0, k + r.start), (k, r.len())).copy_from(&bi.b);
            h.view_mut((k + r.start, 0), (r.len(), k)).copy_from(&bi.b.transpose());
            h.view_mut((k + r.start, k + r.start), (r.len(), r.len())).copy_from(&bi.c);
        }
        let pnames = model.param_names();
        let hinv = sym_inverse(&h).ok_or_else(|| Error::Collinear {
            columns: singular_columns(&h, &pnames),
        })?;
        let mut per_cluster = vec![DVector::zeros(np); g];
        for ((ss, sf), &c) in scores.iter().zip(&ids) {
            let u = &mut per_cluster[c];
            for q in 0..k {
                u[q] += ss[q];
            }
            for &(f, w) in sf {
                u[k + f] += w;
            }
        }
        let mut meat = DMatrix::zeros(np, np);
        for u in &per_cluster {
            meat.ger(1.0, u, u, 1.0);
        }
        let v = &hinv * meat * &hinv * factor;
        let fe_se = (0..nfe).map(|i| v[(k + i, k + i)].max(0.0).sqrt()).collect();
        return Ok((v.view((0, 0), (k, k)).into_owned(), Some(fe_se), g));
    }

    // structural block only: project out the fixed-effect scores
    let mut s = info.a.clone();
    let mut w_blocks = Vec::with_capacity(info.blocks.len());
    for (bl, bi) in info.blocks.iter().enumerate() {
        if bi.c.nrows() == 0 {
            w_blocks.push(DMatrix::zeros(k, 0));
            continue;
        }
        let ch = bi.c.clone().cholesky().ok_or_else(|| Error::Collinear {
            columns: model.fe_keys()[model.block_fe_range(bl)].iter().map(FeKey::label).collect(),
        })?;
        let w = ch.solve(&bi.b.transpose()).transpose();
        s -= &w * bi.b.transpose();
        w_blocks.push(w);
    }
    let sinv = sym_inverse(&s).ok_or_else(|| Error::Collinear {
        columns: singular_columns(&s, names),
    })?;
    let mut per_cluster = vec![DVector::zeros(k); g];
    for (i, ((ss, sf), &c)) in scores.iter().zip(&ids).enumerate() {
        let bl = model.block_of(i);
        let lo = model.block_fe_range(bl).start;
        let w = &w_blocks[bl];
        let u = &mut per_cluster[c];
        *u += ss;
        for &(f, val) in sf {
            for q in 0..k {
                u[q] -= w[(q, f - lo)] * val;
            }
        }
    }
    let mut meat = DMatrix::zeros(k, k);
    for u in &per_cluster {
        meat.ger(1.0, u, u, 1.0);
    }
    Ok((&sinv * meat * &sinv * factor, None, g))
}
