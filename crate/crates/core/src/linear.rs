//! Least squares: OLS/WLS, two-stage least squares, fixed-effect
//! regression by alternating projections, clustered sandwich covariance and
//! the event-study regression.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Relative tolerance on the pivoted-QR diagonal (unit-norm columns) below
/// which a column is declared linearly dependent.
const RANK_TOL: f64 = 1e-9;
const DEMEAN_TOL: f64 = 1e-10;
const DEMEAN_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct RegressionResult {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub vcov: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub r2: f64,
    pub n: usize,
    /// Parameters counted in the small-sample factor (including absorbed
    /// fixed effects).
    pub k: usize,
    pub n_clusters: Option<usize>,
    /// First-stage F on the excluded instruments, one per endogenous
    /// regressor (2SLS only).
    pub first_stage_f: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl RegressionResult {
    pub fn coef_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coef[i])
    }

    pub fn se_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.se[i])
    }

    pub fn t_of(&self, name: &str) -> Option<f64> {
        Some(self.coef_of(name)? / self.se_of(name)?)
    }
}

/// Covariance estimator for the coefficient vector.
#[derive(Debug, Clone, Copy)]
pub enum Vcov<'a> {
    /// Homoskedastic, sigma^2 (X'X)^-1.
    Classical,
    /// Cluster-robust sandwich with factor G/(G-1) * (n-1)/(n-k).
    Cluster(&'a [u64]),
}

/// Builds an n x k design from named columns.
pub fn design(columns: &[Vec<f64>]) -> DMatrix<f64> {
    let n = columns.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i])
}

/// Checks full column rank with a column-pivoted QR on unit-norm columns.
/// Returns the names of the columns that would have to be dropped.
pub fn dependent_columns(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let k = x.ncols();
    if k == 0 {
        return Vec::new();
    }
    let mut scaled = x.clone();
    let mut zero = Vec::new();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        let nrm = col.norm();
        if nrm > 0.0 {
            col /= nrm;
        } else {
            zero.push(j);
        }
    }
    if x.nrows() < k {
        return names[x.nrows()..].to_vec();
    }
    let qr = scaled.col_piv_qr();
    let r = qr.r();
    let mut order = DMatrix::from_fn(1, k, |_, j| j as f64);
    qr.p().permute_columns(&mut order);
    let mut dropped: Vec<usize> = (0..k)
        .filter(|&i| r[(i, i)].abs() < RANK_TOL)
        .map(|i| order[(0, i)] as usize)
        .collect();
    dropped.extend(zero);
    dropped.sort_unstable();
    dropped.dedup();
    dropped.into_iter().map(|j| names[j].clone()).collect()
}

/// (X'X)^-1 via QR, after a rank check.
fn xtx_inverse(x: &DMatrix<f64>, names: &[String]) -> Result<DMatrix<f64>> {
    let dropped = dependent_columns(x, names);
    if !dropped.is_empty() {
        return Err(Error::Collinear { columns: dropped });
    }
    let k = x.ncols();
    let r = x.clone().qr().r();
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Collinear {
            columns: names.to_vec(),
        })?;
    Ok(&rinv * rinv.transpose())
}

fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r()
        .solve_upper_triangular(&qty)
        .expect("rank checked before solve")
}

/// Sandwich or classical covariance given the bread (X'X)^-1, the score
/// design `xs` and residuals.
fn covariance(bread: &DMatrix<f64>, xs: &DMatrix<f64>, resid: &[f64], vcov: Vcov, k_dof: usize) -> (DMatrix<f64>, Option<usize>) {
    let n = resid.len();
    let k = bread.ncols();
    match vcov {
        Vcov::Classical => {
            let rss: f64 = resid.iter().map(|e| e * e).sum();
            let s2 = rss / (n as f64 - k_dof as f64);
            (bread * s2, None)
        }
        Vcov::Cluster(keys) => {
            let mut idx: HashMap<u64, usize> = HashMap::new();
            let mut scores: Vec<DVector<f64>> = Vec::new();
            for i in 0..n {
                let g = *idx.entry(keys[i]).or_insert_with(|| {
                    scores.push(DVector::zeros(k));
                    scores.len() - 1
                });
                let s = &mut scores[g];
                for j in 0..k {
                    s[j] += xs[(i, j)] * resid[i];
                }
            }
            let g = scores.len();
            let mut meat = DMatrix::zeros(k, k);
            for s in &scores {
                meat.ger(1.0, s, s, 1.0);
            }
            let c = if g > 1 {
                g as f64 / (g as f64 - 1.0) * (n as f64 - 1.0) / (n as f64 - k_dof as f64)
            } else {
                f64::NAN
            };
            (bread * meat * bread * c, Some(g))
        }
    }
}

fn ses(v: &DMatrix<f64>) -> Vec<f64> {
    (0..v.ncols()).map(|i| v[(i, i)].max(0.0).sqrt()).collect()
}

fn r_squared(y: &[f64], resid: &[f64], w: Option<&[f64]>) -> f64 {
    let wt = |i: usize| w.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..y.len()).map(wt).sum();
    let ybar = (0..y.len()).map(|i| wt(i) * y[i]).sum::<f64>() / sw;
    let tss: f64 = (0..y.len()).map(|i| wt(i) * (y[i] - ybar).powi(2)).sum();
    let rss: f64 = (0..y.len()).map(|i| wt(i) * resid[i].powi(2)).sum();
    1.0 - rss / tss
}

fn check_inputs(y: &[f64], x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!("design has {} rows but y has {}", x.nrows(), y.len())));
    }
    if names.len() != x.ncols() {
        return Err(Error::invalid("one name per design column required"));
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in regression data"));
    }
    if y.len() <= x.ncols() {
        return Err(Error::invalid(format!("{} rows cannot identify {} coefficients", y.len(), x.ncols())));
    }
    Ok(())
}

/// Ordinary least squares. Include a column of ones for an intercept.
pub fn ols(y: &[f64], x: &DMatrix<f64>, names: &[String], vcov: Vcov) -> Result<RegressionResult> {
    wls(y, x, None, names, vcov)
}

/// Weighted least squares with non-negative weights (`None` = OLS).
pub fn wls(y: &[f64], x: &DMatrix<f64>, w: Option<&[f64]>, names: &[String], vcov: Vcov) -> Result<RegressionResult> {
    check_inputs(y, x, names)?;
    let n = y.len();
    let k = x.ncols();
    let sw: Vec<f64> = match w {
        Some(w) => {
            if w.len() != n || w.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::invalid("weights must be non-negative, one per row"));
            }
            w.iter().map(|v| v.sqrt()).collect()
        }
        None => vec![1.0; n],
    };
    let xw = DMatrix::from_fn(n, k, |i, j| x[(i, j)] * sw[i]);
    let yw = DVector::from_fn(n, |i, _| y[i] * sw[i]);
    let bread = xtx_inverse(&xw, names)?;
    let b = least_squares(&xw, &yw);
    let fitted = x * &b;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let wres: Vec<f64> = (0..n).map(|i| residuals[i] * sw[i]).collect();
    let (v, n_clusters) = covariance(&bread, &xw, &wres, vcov, k);
    Ok(RegressionResult {
        names: names.to_vec(),
        coef: b.iter().copied().collect(),
        se: ses(&v),
        vcov: v,
        r2: r_squared(y, &residuals, w),
        residuals,
        n,
        k,
        n_clusters,
        first_stage_f: None,
        warnings: Vec::new(),
    })
}

/// Wald test of `idx` coefficients being jointly zero, divided by their
/// count (an F statistic).
fn wald_f(res: &RegressionResult, idx: &[usize]) -> f64 {
    let q = idx.len();
    let b = DVector::from_fn(q, |i, _| res.coef[idx[i]]);
    let v = DMatrix::from_fn(q, q, |i, j| res.vcov[(idx[i], idx[j])]);
    match v.clone().cholesky() {
        Some(ch) => (b.transpose() * ch.solve(&b))[(0, 0)] / q as f64,
        None => f64::INFINITY,
    }
}

/// Two-stage least squares. `x_exog` should contain the intercept if one is
/// wanted. Reports the first-stage F of the excluded instruments for each
/// endogenous regressor and warns when it is below 10.
#[allow(clippy::too_many_arguments)]
pub fn tsls(
    y: &[f64],
    x_endog: &DMatrix<f64>,
    endog_names: &[String],
    x_exog: &DMatrix<f64>,
    exog_names: &[String],
    z: &DMatrix<f64>,
    z_names: &[String],
    w: Option<&[f64]>,
    vcov: Vcov,
) -> Result<RegressionResult> {
    let n = y.len();
    let (ke, kx, kz) = (x_endog.ncols(), x_exog.ncols(), z.ncols());
    if kz < ke {
        return Err(Error::invalid(format!("{kz} instruments cannot identify {ke} endogenous regressors")));
    }
    let stage1 = DMatrix::from_fn(n, kx + kz, |i, j| if j < kx { x_exog[(i, j)] } else { z[(i, j - kx)] });
    let s1_names: Vec<String> = exog_names.iter().chain(z_names).cloned().collect();
    let excluded: Vec<usize> = (kx..kx + kz).collect();
    let mut fitted_endog = DMatrix::zeros(n, ke);
    let mut fstats = Vec::with_capacity(ke);
    let mut warnings = Vec::new();
    for e in 0..ke {
        let col: Vec<f64> = x_endog.column(e).iter().copied().collect();
        let fs = wls(&col, &stage1, w, &s1_names, vcov)?;
        let f = wald_f(&fs, &excluded);
        if f < 10.0 {
            let msg = format!("weak instruments for `{}`: first-stage F = {f:.3} < 10", endog_names[e]);
            log::warn!("{msg}");
            warnings.push(msg);
        }
        fstats.push(f);
        for i in 0..n {
            fitted_endog[(i, e)] = col[i] - fs.residuals[i];
        }
    }
    let names: Vec<String> = endog_names.iter().chain(exog_names).cloned().collect();
    let xhat = DMatrix::from_fn(n, ke + kx, |i, j| if j < ke { fitted_endog[(i, j)] } else { x_exog[(i, j - ke)] });
    let xact = DMatrix::from_fn(n, ke + kx, |i, j| if j < ke { x_endog[(i, j)] } else { x_exog[(i, j - ke)] });
    check_inputs(y, &xhat, &names)?;
    let sw: Vec<f64> = w.map_or_else(|| vec![1.0; n], |w| w.iter().map(|v| v.sqrt()).collect());
    let xhw = DMatrix::from_fn(n, ke + kx, |i, j| xhat[(i, j)] * sw[i]);
    let yw = DVector::from_fn(n, |i, _| y[i] * sw[i]);
    let bread = xtx_inverse(&xhw, &names)?;
    let b = least_squares(&xhw, &yw);
    let fitted = &xact * &b;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let wres: Vec<f64> = (0..n).map(|i| residuals[i] * sw[i]).collect();
    let (v, n_clusters) = covariance(&bread, &xhw, &wres, vcov, ke + kx);
    Ok(RegressionResult {
        names,
        coef: b.iter().copied().collect(),
        se: ses(&v),
        vcov: v,
        r2: r_squared(y, &residuals, w),
        residuals,
        n,
        k: ke + kx,
        n_clusters,
        first_stage_f: Some(fstats),
        warnings,
    })
}

/// Dense group labels (0..levels) for one fixed-effect family.
#[derive(Debug, Clone)]
pub struct FeGroup {
    pub ids: Vec<u32>,
    pub levels: usize,
}

impl FeGroup {
    /// Relabels arbitrary keys densely in order of first appearance.
    pub fn from_keys<K: std::hash::Hash + Eq + Copy>(keys: &[K]) -> Self {
        let mut map: HashMap<K, u32> = HashMap::new();
        let ids = keys
            .iter()
            .map(|k| {
                let next = map.len() as u32;
                *map.entry(*k).or_insert(next)
            })
            .collect();
        FeGroup { ids, levels: map.len() }
    }
}

fn demean_once(v: &mut [f64], groups: &[FeGroup], sums: &mut Vec<f64>, counts: &[Vec<f64>]) -> f64 {
    let mut change: f64 = 0.0;
    for (g, cnt) in groups.iter().zip(counts) {
        sums.clear();
        sums.resize(g.levels, 0.0);
        for (x, &id) in v.iter().zip(&g.ids) {
            sums[id as usize] += x;
        }
        for (x, &id) in v.iter_mut().zip(&g.ids) {
            let m = sums[id as usize] / cnt[id as usize];
            *x -= m;
            change = change.max(m.abs());
        }
    }
    change
}

/// Residualizes `v` on all FE families by alternating projections.
fn demean(v: &mut [f64], groups: &[FeGroup], counts: &[Vec<f64>]) -> Result<()> {
    let mut sums = Vec::new();
    for _ in 0..DEMEAN_MAX_SWEEPS {
        if demean_once(v, groups, &mut sums, counts) < DEMEAN_TOL {
            return Ok(());
        }
        if groups.len() == 1 {
            return Ok(());
        }
    }
    Err(Error::NonConvergence {
        iterations: DEMEAN_MAX_SWEEPS,
        gradient_norm: f64::NAN,
        trace: Vec::new(),
    })
}

/// Regression with absorbed fixed effects. Slope coefficients equal those of
/// OLS with explicit dummies for every family.
pub fn fe_regress(y: &[f64], x: &DMatrix<f64>, names: &[String], groups: &[FeGroup], vcov: Vcov) -> Result<RegressionResult> {
    let n = y.len();
    let k = x.ncols();
    if groups.iter().any(|g| g.ids.len() != n) {
        return Err(Error::invalid("fixed-effect labels must have one entry per row"));
    }
    let counts: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let mut c = vec![0.0; g.levels];
            for &id in &g.ids {
                c[id as usize] += 1.0;
            }
            c
        })
        .collect();
    let mut cols: Vec<Vec<f64>> = std::iter::once(y.to_vec())
        .chain((0..k).map(|j| x.column(j).iter().copied().collect()))
        .collect();
    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    cols.par_iter_mut()
        .map(|c| demean(c, groups, &counts))
        .collect::<Result<Vec<()>>>()?;
    let absorbed: Vec<String> = (0..k)
        .filter(|&j| {
            let nrm = cols[j + 1].iter().map(|v| v * v).sum::<f64>().sqrt();
            nrm <= 1e-8 * norms[j + 1].max(1.0)
        })
        .map(|j| names[j].clone())
        .collect();
    if !absorbed.is_empty() {
        return Err(Error::Collinear { columns: absorbed });
    }
    let yd = cols[0].clone();
    let xd = design(&cols[1..]);
    let fe_dof = groups.iter().map(|g| g.levels).sum::<usize>() - groups.len().saturating_sub(1);
    check_inputs(&yd, &xd, names)?;
    let bread = xtx_inverse(&xd, names)?;
    let b = least_squares(&xd, &DVector::from_vec(yd.clone()));
    let fitted = &xd * &b;
    let residuals: Vec<f64> = (0..n).map(|i| yd[i] - fitted[i]).collect();
    let k_dof = k + fe_dof;
    let (v, n_clusters) = covariance(&bread, &xd, &residuals, vcov, k_dof);
    let tss: f64 = yd.iter().map(|v| v * v).sum();
    let rss: f64 = residuals.iter().map(|v| v * v).sum();
    Ok(RegressionResult {
        names: names.to_vec(),
        coef: b.iter().copied().collect(),
        se: ses(&v),
        vcov: v,
        r2: 1.0 - rss / tss,
        residuals,
        n,
        k: k_dof,
        n_clusters,
        first_stage_f: None,
        warnings: Vec::new(),
    })
}

/// One row of an event-study panel.
#[derive(Debug, Clone, Copy)]
pub struct EventRow {
    pub unit: u64,
    pub age: i32,
    pub year: i32,
    pub treated: bool,
    pub outcome: f64,
}

#[derive(Debug, Clone)]
pub struct EventStudy {
    pub ages: Vec<i32>,
    pub reference_age: i32,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub n_clusters: usize,
}

/// Treated-by-age effects with unit, age and year fixed effects, clustered
/// by unit. The reference age has beta = 0 and se = 0.
pub fn did_event_study(rows: &[EventRow], ages: std::ops::RangeInclusive<i32>, reference_age: i32) -> Result<EventStudy> {
    if !ages.contains(&reference_age) {
        return Err(Error::invalid(format!("reference age {reference_age} outside {ages:?}")));
    }
    let rows: Vec<&EventRow> = rows.iter().filter(|r| ages.contains(&r.age)).collect();
    let slope_ages: Vec<i32> = ages.clone().filter(|&a| a != reference_age).collect();
    let names: Vec<String> = slope_ages.iter().map(|a| format!("treated_x_age_{a}")).collect();
    let x = DMatrix::from_fn(rows.len(), slope_ages.len(), |i, j| {
        f64::from(u8::from(rows[i].treated && rows[i].age == slope_ages[j]))
    });
    let y: Vec<f64> = rows.iter().map(|r| r.outcome).collect();
    let units: Vec<u64> = rows.iter().map(|r| r.unit).collect();
    let groups = [
        FeGroup::from_keys(&units),
        FeGroup::from_keys(&rows.iter().map(|r| r.age).collect::<Vec<_>>()),
        FeGroup::from_keys(&rows.iter().map(|r| r.year).collect::<Vec<_>>()),
    ];
    let fit = fe_regress(&y, &x, &names, &groups, Vcov::Cluster(&units))?;
    let z = 1.959_963_984_540_054;
    let mut out = EventStudy {
        ages: ages.collect(),
        reference_age,
        beta: Vec::new(),
        se: Vec::new(),
        ci_low: Vec::new(),
        ci_high: Vec::new(),
        n_clusters: fit.n_clusters.unwrap_or(0),
    };
    let mut j = 0;
    for &a in &out.ages.clone() {
        let (b, s) = if a == reference_age {
            (0.0, 0.0)
        } else {
            j += 1;
            (fit.coef[j - 1], fit.se[j - 1])
        };
        out.beta.push(b);
        out.se.push(s);
        out.ci_low.push(b - z * s);
        out.ci_high.push(b + z * s);
    }
    Ok(out)
}
