//! Influence-function covariance estimates for `tau0`, `tau2`, `tau3`,
//! percentile bootstrap bands for every estimator, and Wald tests.
//!
//! The influence terms are arm-centred: each arm's IPCW residual is taken
//! about its own arm mean before the `1/alpha`, `-1/(1 - alpha)` scaling, so
//! every column of the table has mean zero.

use nalgebra::DMatrix;
use rand::Rng as _;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::adjust::{AdjustmentRecipe, PredictionTable};
use crate::error::{Error, Result};
use crate::estimators::{ace_curve, model_mean, AceCurve, EstimatorKind, PointTerms, TimeGrid};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::survival::{Arm, CensoringModel, Cohort};

/// Per-subject influence contributions `u_i(t)`, row-major `n x G`,
/// split into the outcome part (`U1`, `U4` or `U5`) and the censoring part `U3`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceTable {
    pub kind: EstimatorKind,
    pub times: Vec<f64>,
    pub n: usize,
    pub outcome: Vec<f64>,
    pub censoring: Vec<f64>,
}

impl InfluenceTable {
    pub fn g(&self) -> usize {
        self.times.len()
    }

    /// `u_i(t_g)` = outcome + censoring part.
    pub fn value(&self, i: usize, g: usize) -> f64 {
        let k = i * self.g() + g;
        self.outcome[k] + self.censoring[k]
    }

    pub fn outcome_part(&self, i: usize, g: usize) -> f64 {
        self.outcome[i * self.g() + g]
    }

    pub fn censoring_part(&self, i: usize, g: usize) -> f64 {
        self.censoring[i * self.g() + g]
    }

    pub fn column_means(&self) -> Vec<f64> {
        (0..self.g()).map(|g| (0..self.n).map(|i| self.value(i, g)).sum::<f64>() / self.n as f64).collect()
    }

    /// Grid columns whose mean exceeds `5 / sqrt(n)` in magnitude.
    pub fn mean_diagnostic(&self) -> usize {
        let bound = 5.0 / (self.n as f64).sqrt();
        self.column_means().iter().filter(|m| m.abs() > bound).count()
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.g(), |i, g| self.value(i, g))
    }
}

/// `{alpha Z - (1 - alpha)(1 - Z)}^-1`.
fn signed_bracket(treated: bool, alpha: f64) -> f64 {
    if treated {
        1.0 / alpha
    } else {
        -1.0 / (1.0 - alpha)
    }
}

fn validate(cohort: &Cohort, cens: &CensoringModel, preds: Option<&PredictionTable>, grid: &TimeGrid) -> Result<()> {
    cohort.require_both_arms()?;
    if cens.n() != cohort.len() {
        return Err(Error::invalid("censoring model was fitted on a different cohort"));
    }
    if let Some(p) = preds {
        if p.n() != cohort.len() || p.times() != grid.times() {
            return Err(Error::invalid("prediction table does not match the cohort and grid"));
        }
    }
    Ok(())
}

/// Influence table for `tau0`, `tau2` or `tau3`.
pub fn influence(
    kind: EstimatorKind,
    cohort: &Cohort,
    cens: &CensoringModel,
    preds: Option<&PredictionTable>,
    grid: &TimeGrid,
) -> Result<InfluenceTable> {
    if !kind.has_influence() {
        return Err(Error::invalid("tau1 has no influence-function variance; use the bootstrap"));
    }
    if kind.needs_model() && preds.is_none() {
        return Err(Error::invalid(format!("{kind} needs outcome-model predictions")));
    }
    validate(cohort, cens, preds, grid)?;
    let n = cohort.len();
    let g_len = grid.len();
    let alpha = cohort.treated_fraction();
    let mut outcome = vec![0.0; n * g_len];
    let mut censoring = vec![0.0; n * g_len];
    for (g, &t) in grid.times().iter().enumerate() {
        let terms = PointTerms::new(cohort, cens, t);
        let (m1, m0) = terms.arm_means(&terms.surv_weighted);
        let tau0 = m1 - m0;
        let (resid, mean_diff) = match kind {
            EstimatorKind::Tau0 => (terms.surv_weighted.clone(), None),
            EstimatorKind::Tau2 => (terms.tau2_residual(preds.unwrap(), g), Some(model_mean(preds.unwrap(), g))),
            EstimatorKind::Tau3 => {
                (terms.tau3_residual(cohort, preds.unwrap(), g, t), Some(model_mean(preds.unwrap(), g)))
            }
            EstimatorKind::Tau1 => unreachable!(),
        };
        let (r1, r0) = terms.arm_means(&resid);
        for (i, rec) in cohort.records().iter().enumerate() {
            let z = terms.treated[i];
            let centre = if z { r1 } else { r0 };
            let mut u = signed_bracket(z, alpha) * (resid[i] - centre);
            if let (Some(mean), Some(p)) = (mean_diff, preds) {
                u += p.get(Arm::Treated, i, g) - p.get(Arm::Control, i, g) - mean;
            }
            outcome[i * g_len + g] = u;
            censoring[i * g_len + g] = tau0 * cens.scaled_martingale_integral(rec, t);
        }
    }
    Ok(InfluenceTable { kind, times: grid.times().to_vec(), n, outcome, censoring })
}

pub fn influence_tau0(cohort: &Cohort, cens: &CensoringModel, grid: &TimeGrid) -> Result<InfluenceTable> {
    influence(EstimatorKind::Tau0, cohort, cens, None, grid)
}

pub fn influence_tau2(cohort: &Cohort, cens: &CensoringModel, preds: &PredictionTable, grid: &TimeGrid) -> Result<InfluenceTable> {
    influence(EstimatorKind::Tau2, cohort, cens, Some(preds), grid)
}

pub fn influence_tau3(cohort: &Cohort, cens: &CensoringModel, preds: &PredictionTable, grid: &TimeGrid) -> Result<InfluenceTable> {
    influence(EstimatorKind::Tau3, cohort, cens, Some(preds), grid)
}

/// `A(t, s)` over grid pairs; `Var(tau(t)) = A(t, t) / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub kind: EstimatorKind,
    pub times: Vec<f64>,
    pub n: usize,
    pub matrix: DMatrix<f64>,
}

impl CovarianceEstimate {
    /// Empirical covariance `n^-1 sum_i u_i(t) u_i(s)`.
    pub fn from_influence(table: &InfluenceTable) -> Self {
        let u = table.matrix();
        let matrix = (u.transpose() * &u) / table.n as f64;
        CovarianceEstimate { kind: table.kind, times: table.times.clone(), n: table.n, matrix }
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.times.len()).map(|g| (self.matrix[(g, g)].max(0.0) / self.n as f64).sqrt()).collect()
    }

    /// `w' A w`.
    pub fn quadratic_form(&self, w: &[f64]) -> f64 {
        let g = self.times.len();
        let mut q = 0.0;
        for a in 0..g {
            for b in 0..g {
                q += w[a] * self.matrix[(a, b)] * w[b];
            }
        }
        q
    }

    /// Standard error of `sum_k c_k tau(t_k)`.
    pub fn linear_se(&self, c: &[f64]) -> f64 {
        (self.quadratic_form(c).max(0.0) / self.n as f64).sqrt()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix.clone().symmetric_eigen().eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Smallest eigenvalue at least `-1e-8 * trace`.
    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -1e-8 * self.matrix.trace().abs()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (&self.matrix - self.matrix.transpose()).amax() <= tol
    }
}

pub fn covariance(table: &InfluenceTable) -> CovarianceEstimate {
    CovarianceEstimate::from_influence(table)
}

/// Closed-form `A01(t, s) = sum_z alpha_z^-1 {m_z(t v s) / S_C((t ^ s)-) - m_z(t) m_z(s)}`
/// with `m_z` the arm IPCW survival means.
pub fn closed_form_a01(cohort: &Cohort, cens: &CensoringModel, grid: &TimeGrid) -> Result<DMatrix<f64>> {
    validate(cohort, cens, None, grid)?;
    let alpha = cohort.treated_fraction();
    let means: Vec<(f64, f64)> = grid
        .times()
        .iter()
        .map(|&t| {
            let terms = PointTerms::new(cohort, cens, t);
            terms.arm_means(&terms.surv_weighted)
        })
        .collect();
    let g = grid.len();
    Ok(DMatrix::from_fn(g, g, |a, b| {
        let (lo, hi) = (a.min(b), a.max(b));
        let sc = cens.curve().eval_left(grid.times()[lo]).max(cens.weight_floor());
        let (m1t, m0t) = means[a];
        let (m1s, m0s) = means[b];
        (means[hi].0 / sc - m1t * m1s) / alpha + (means[hi].1 / sc - m0t * m0s) / (1.0 - alpha)
    }))
}

/// Closed-form `A02(t, s) = tau0(t) tau0(s) int_0^{t ^ s} dLambda_C / (n^-1 #risk)`.
pub fn closed_form_a02(cohort: &Cohort, cens: &CensoringModel, grid: &TimeGrid) -> Result<DMatrix<f64>> {
    validate(cohort, cens, None, grid)?;
    let tau = ace_curve(EstimatorKind::Tau0, cohort, cens, None, grid)?.estimates;
    let g = grid.len();
    Ok(DMatrix::from_fn(g, g, |a, b| {
        tau[a] * tau[b] * cens.scaled_hazard_up_to(grid.times()[a.min(b)])
    }))
}

/// Closed-form `A21(t, s)`: the `A01` form with subject-level predictions in
/// place of the arm means, averaged over subjects.
pub fn closed_form_a21(cohort: &Cohort, cens: &CensoringModel, preds: &PredictionTable, grid: &TimeGrid) -> Result<DMatrix<f64>> {
    validate(cohort, cens, Some(preds), grid)?;
    let alpha = cohort.treated_fraction();
    let n = cohort.len();
    let g = grid.len();
    Ok(DMatrix::from_fn(g, g, |a, b| {
        let (lo, hi) = (a.min(b), a.max(b));
        let sc = cens.curve().eval_left(grid.times()[lo]).max(cens.weight_floor());
        (0..n)
            .map(|i| {
                let m1 = |k| preds.get(Arm::Treated, i, k);
                let m0 = |k| preds.get(Arm::Control, i, k);
                (m1(hi) / sc - m1(a) * m1(b)) / alpha + (m0(hi) / sc - m0(a) * m0(b)) / (1.0 - alpha)
            })
            .sum::<f64>()
            / n as f64
    }))
}

/// `(w' A3 w, w' A2 w, w' A0 w)`; the expected order is ascending.
pub fn efficiency_ordering_check(
    cov0: &CovarianceEstimate,
    cov2: &CovarianceEstimate,
    cov3: &CovarianceEstimate,
    w: &[f64],
) -> Result<[f64; 3]> {
    let g = cov0.times.len();
    if cov2.times != cov0.times || cov3.times != cov0.times || w.len() != g {
        return Err(Error::invalid("covariances and weights must share one grid"));
    }
    Ok([cov3.quadratic_form(w), cov2.quadratic_form(w), cov0.quadratic_form(w)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandMethod {
    Asymptotic,
    Bootstrap,
}

impl BandMethod {
    pub fn label(self) -> &'static str {
        match self {
            BandMethod::Asymptotic => "asymptotic",
            BandMethod::Bootstrap => "bootstrap",
        }
    }
}

/// Pointwise confidence intervals over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceBand {
    pub kind: EstimatorKind,
    pub method: BandMethod,
    pub level: f64,
    pub times: Vec<f64>,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Bootstrap replicates used (0 for asymptotic bands).
    pub replicates: usize,
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level {level} outside (0, 1)")));
    }
    Ok(())
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub fn standard_normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

/// Wald band `estimate +- z * sqrt(A(t, t) / n)`.
pub fn asymptotic_band(curve: &AceCurve, cov: &CovarianceEstimate, level: f64) -> Result<ConfidenceBand> {
    check_level(level)?;
    if cov.times != curve.times {
        return Err(Error::invalid("covariance and curve grids differ"));
    }
    let z = standard_normal_quantile(0.5 + level / 2.0);
    let se = cov.standard_errors();
    Ok(ConfidenceBand {
        kind: curve.kind,
        method: BandMethod::Asymptotic,
        level,
        times: curve.times.clone(),
        lower: curve.estimates.iter().zip(&se).map(|(e, s)| e - z * s).collect(),
        upper: curve.estimates.iter().zip(&se).map(|(e, s)| e + z * s).collect(),
        estimate: curve.estimates.clone(),
        se,
        replicates: 0,
    })
}

/// Two-sided normal-approximation p-value for `estimate / se`.
pub fn wald_p_value(estimate: f64, se: f64) -> f64 {
    if !(se.is_finite() && estimate.is_finite()) {
        return f64::NAN;
    }
    if se == 0.0 {
        return if estimate == 0.0 { 1.0 } else { 0.0 };
    }
    2.0 * (1.0 - standard_normal().cdf((estimate / se).abs()))
}

/// Inverse-ECDF quantile of sorted values (`x_(ceil(B p))`).
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let b = sorted.len();
    let k = ((b as f64 * p).ceil() as usize).clamp(1, b);
    sorted[k - 1]
}

/// Replicate SD with the `B - 1` divisor.
pub fn sample_sd(values: &[f64]) -> f64 {
    let b = values.len();
    if b < 2 {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / b as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1) as f64).sqrt()
}

/// Percentile interval `(lo, hi)` at `level`, widened to contain `estimate`.
pub fn percentile_interval(values: &[f64], estimate: f64, level: f64) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let a = 1.0 - level;
    let lo = empirical_quantile(&sorted, a / 2.0);
    let hi = empirical_quantile(&sorted, 1.0 - a / 2.0);
    (lo.min(estimate), hi.max(estimate))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Minimum fraction of replicates that must succeed.
    pub min_success: f64,
    /// Redraw limit per replicate for resamples with an empty arm.
    pub max_redraws: usize,
}

impl BootstrapOptions {
    pub fn new(replicates: usize, seed: u64) -> Self {
        BootstrapOptions { replicates, seed, min_success: 0.9, max_redraws: 1000 }
    }
}

/// Bootstrap estimates for several estimators from shared resamples.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapReplicates {
    pub kinds: Vec<EstimatorKind>,
    pub times: Vec<f64>,
    /// `values[k][b * G + g]` for kind `k`, successful replicate `b`.
    pub values: Vec<Vec<f64>>,
    pub succeeded: usize,
    pub requested: usize,
    /// Resamples redrawn because an arm was empty.
    pub redraws: usize,
    /// Replicates dropped because a fit failed.
    pub failures: usize,
}

impl BootstrapReplicates {
    fn index(&self, kind: EstimatorKind) -> Result<usize> {
        self.kinds.iter().position(|&k| k == kind).ok_or_else(|| Error::invalid(format!("{kind} was not bootstrapped")))
    }

    /// Replicate values of `kind` at grid index `g`.
    pub fn at(&self, kind: EstimatorKind, g: usize) -> Result<Vec<f64>> {
        let k = self.index(kind)?;
        let gl = self.times.len();
        Ok((0..self.succeeded).map(|b| self.values[k][b * gl + g]).collect())
    }

    /// Replicate values of `sum_g c_g tau(t_g)`.
    pub fn linear(&self, kind: EstimatorKind, c: &[f64]) -> Result<Vec<f64>> {
        let k = self.index(kind)?;
        let gl = self.times.len();
        Ok((0..self.succeeded)
            .map(|b| c.iter().zip(&self.values[k][b * gl..(b + 1) * gl]).map(|(a, v)| a * v).sum())
            .collect())
    }

    pub fn sd(&self, kind: EstimatorKind) -> Result<Vec<f64>> {
        (0..self.times.len()).map(|g| self.at(kind, g).map(|v| sample_sd(&v))).collect()
    }

    /// Percentile band around the full-sample `point` curve.
    pub fn band(&self, point: &AceCurve, level: f64) -> Result<ConfidenceBand> {
        check_level(level)?;
        if point.times != self.times {
            return Err(Error::invalid("bootstrap and curve grids differ"));
        }
        let mut lower = Vec::with_capacity(self.times.len());
        let mut upper = Vec::with_capacity(self.times.len());
        let mut se = Vec::with_capacity(self.times.len());
        for (g, &est) in point.estimates.iter().enumerate() {
            let v = self.at(point.kind, g)?;
            let (lo, hi) = percentile_interval(&v, est, level);
            lower.push(lo);
            upper.push(hi);
            se.push(sample_sd(&v));
        }
        Ok(ConfidenceBand {
            kind: point.kind,
            method: BandMethod::Bootstrap,
            level,
            times: self.times.clone(),
            estimate: point.estimates.clone(),
            se,
            lower,
            upper,
            replicates: self.succeeded,
        })
    }
}

/// Estimates of each kind on one cohort: refits censoring and, if needed,
/// both outcome models.
pub fn estimate_curves(
    cohort: &Cohort,
    recipe: Option<&AdjustmentRecipe>,
    grid: &TimeGrid,
    kinds: &[EstimatorKind],
) -> Result<Vec<AceCurve>> {
    cohort.require_both_arms()?;
    let cens = CensoringModel::fit(cohort);
    let preds = if kinds.iter().any(|k| k.needs_model()) {
        let recipe = recipe.ok_or_else(|| Error::invalid("model-based estimators need an adjustment recipe"))?;
        Some(recipe.fit_predict(cohort, grid.times())?)
    } else {
        None
    };
    kinds.iter().map(|&k| ace_curve(k, cohort, &cens, preds.as_ref(), grid)).collect()
}

fn draw_resample(cohort: &Cohort, rng: &mut crate::rng::Rng, max_redraws: usize) -> Result<(Cohort, usize)> {
    let n = cohort.len();
    for attempt in 0..=max_redraws {
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let has = |arm| rows.iter().any(|&i| cohort.record(i).arm == arm);
        if has(Arm::Treated) && has(Arm::Control) {
            return Ok((cohort.resample(&rows), attempt));
        }
    }
    Err(Error::invalid("could not draw a resample containing both arms"))
}

fn one_replicate(
    cohort: &Cohort,
    recipe: Option<&AdjustmentRecipe>,
    grid: &TimeGrid,
    kinds: &[EstimatorKind],
    opts: &BootstrapOptions,
    b: usize,
) -> Result<(Option<Vec<Vec<f64>>>, usize)> {
    let mut rng = stream_rng(opts.seed, Stream::Bootstrap, b as u64);
    let (sample, redraws) = draw_resample(cohort, &mut rng, opts.max_redraws)?;
    let recipe = recipe.map(|r| r.for_resample(derive_seed(opts.seed, Stream::Tree, b as u64)));
    let curves = estimate_curves(&sample, recipe.as_ref(), grid, kinds).ok();
    Ok((curves.map(|c| c.into_iter().map(|c| c.estimates).collect()), redraws))
}

/// Nonparametric bootstrap over subjects, recomputing every estimator in
/// `kinds` on each resample. Deterministic in `opts.seed`.
pub fn bootstrap_replicates(
    cohort: &Cohort,
    recipe: Option<&AdjustmentRecipe>,
    grid: &TimeGrid,
    kinds: &[EstimatorKind],
    opts: &BootstrapOptions,
) -> Result<BootstrapReplicates> {
    if opts.replicates == 0 {
        return Err(Error::invalid("bootstrap needs at least one replicate"));
    }
    cohort.require_both_arms()?;
    let run = |b: usize| one_replicate(cohort, recipe, grid, kinds, opts, b);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(Option<Vec<Vec<f64>>>, usize)>> = {
        use rayon::prelude::*;
        (0..opts.replicates).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(Option<Vec<Vec<f64>>>, usize)>> = (0..opts.replicates).map(run).collect();

    let mut values = vec![Vec::new(); kinds.len()];
    let (mut succeeded, mut redraws, mut failures) = (0, 0, 0);
    for r in results {
        let (curves, redrawn) = r?;
        redraws += redrawn;
        match curves {
            Some(curves) => {
                succeeded += 1;
                for (k, c) in curves.into_iter().enumerate() {
                    values[k].extend(c);
                }
            }
            None => failures += 1,
        }
    }
    if (succeeded as f64) < opts.min_success * opts.replicates as f64 || succeeded == 0 {
        return Err(Error::BootstrapFailed { succeeded, requested: opts.replicates });
    }
    Ok(BootstrapReplicates {
        kinds: kinds.to_vec(),
        times: grid.times().to_vec(),
        values,
        succeeded,
        requested: opts.replicates,
        redraws,
        failures,
    })
}

/// Percentile bootstrap band for one estimator.
pub fn bootstrap_ci(
    kind: EstimatorKind,
    cohort: &Cohort,
    recipe: Option<&AdjustmentRecipe>,
    grid: &TimeGrid,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<ConfidenceBand> {
    let point = estimate_curves(cohort, recipe, grid, &[kind])?.remove(0);
    let reps = bootstrap_replicates(cohort, recipe, grid, &[kind], &BootstrapOptions::new(replicates, seed))?;
    reps.band(&point, level)
}
