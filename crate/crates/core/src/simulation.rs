//! Data-generating process with AR(1) Gaussian covariates and exponential
//! proportional-hazards outcomes, plus the Monte Carlo study runner.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::adjust::AdjustmentRecipe;
use crate::error::{Error, Result};
use crate::estimators::{quadrature_weights, EstimatorKind, TimeGrid};
use crate::inference::{
    bootstrap_replicates, covariance, influence, percentile_interval, sample_sd, standard_normal_quantile,
    BootstrapOptions,
};
use crate::rng::{derive_seed, stream_rng, Rng, Stream};
use crate::survival::{Arm, CensoringModel, Cohort, SurvivalRecord};

/// Subjects drawn when calibrating `t0`.
pub const CALIBRATION_DRAWS: usize = 50_000;
/// Covariate draws used for the true ACE.
pub const TRUTH_DRAWS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DgpSetting {
    pub n: usize,
    pub alpha: f64,
    pub p: usize,
    pub k: usize,
    pub rho: f64,
    pub beta: f64,
    pub s0: f64,
    pub s1: f64,
    pub censor_max: f64,
    pub seed: u64,
}

impl Default for DgpSetting {
    fn default() -> Self {
        DgpSetting { n: 100, alpha: 0.5, p: 10, k: 10, rho: 0.8, beta: 0.0, s0: 0.0, s1: 0.0, censor_max: 2.5, seed: 1 }
    }
}

impl DgpSetting {
    /// Setting from `(beta, p, k, s0, s1)`, other fields at their defaults.
    pub fn table_row(beta: f64, p: usize, k: usize, s0: f64, s1: f64) -> Self {
        DgpSetting { beta, p, k, s0, s1, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("n must be at least 2"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha must lie in (0, 1)"));
        }
        if self.k > self.p {
            return Err(Error::invalid("k must not exceed p"));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::invalid("rho must lie in (-1, 1)"));
        }
        if !(self.censor_max > 0.0) {
            return Err(Error::invalid("censor_max must be positive"));
        }
        if ![self.beta, self.s0, self.s1].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("beta, s0 and s1 must be finite"));
        }
        Ok(())
    }

    /// `gamma_zj = s_z I(j <= k) / j`, `j = 1..p`.
    pub fn gamma(&self, arm: Arm) -> Vec<f64> {
        let s = match arm {
            Arm::Treated => self.s1,
            Arm::Control => self.s0,
        };
        (1..=self.p).map(|j| if j <= self.k { s / j as f64 } else { 0.0 }).collect()
    }

    /// Hazard `exp(beta z + x' gamma_z)`.
    pub fn rate(&self, x: &[f64], arm: Arm) -> f64 {
        let lp: f64 = x.iter().zip(self.gamma(arm)).map(|(a, g)| a * g).sum();
        (if arm == Arm::Treated { self.beta } else { 0.0 } + lp).exp()
    }
}

/// AR(1) row: `X1 = e1`, `Xj = rho X(j-1) + sqrt(1 - rho^2) ej`.
fn ar1_row(p: usize, rho: f64, rng: &mut Rng) -> Vec<f64> {
    let scale = (1.0 - rho * rho).sqrt();
    let mut row = Vec::with_capacity(p);
    let mut prev = 0.0;
    for j in 0..p {
        let e: f64 = StandardNormal.sample(rng);
        prev = if j == 0 { e } else { rho * prev + scale * e };
        row.push(prev);
    }
    row
}

/// `n x p` Gaussian covariates with `Cov(Xj, Xl) = rho^|j-l|`.
pub fn gen_covariates(n: usize, p: usize, rho: f64, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| ar1_row(p, rho, rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub t: f64,
    pub c: f64,
    pub y: f64,
    pub event: bool,
}

/// Exponential event time by inverse transform, uniform censoring.
pub fn gen_outcomes(x: &[f64], arm: Arm, setting: &DgpSetting, rng: &mut Rng) -> Outcome {
    let u: f64 = 1.0 - rng.random::<f64>();
    let t = -u.ln() / setting.rate(x, arm);
    let c = rng.random::<f64>() * setting.censor_max;
    Outcome { t, c, y: t.min(c), event: t <= c }
}

fn draw_arms(n: usize, alpha: f64, rng: &mut Rng) -> Vec<Arm> {
    loop {
        let arms: Vec<Arm> = (0..n).map(|_| if rng.random_bool(alpha) { Arm::Treated } else { Arm::Control }).collect();
        if arms.contains(&Arm::Treated) && arms.contains(&Arm::Control) {
            return arms;
        }
    }
}

/// One simulated cohort; both arms are guaranteed nonempty.
pub fn generate_cohort(setting: &DgpSetting, rng: &mut Rng) -> Result<Cohort> {
    setting.validate()?;
    let x = gen_covariates(setting.n, setting.p, setting.rho, rng);
    let arms = draw_arms(setting.n, setting.alpha, rng);
    let records = x
        .into_iter()
        .zip(arms)
        .map(|(x, arm)| {
            let o = gen_outcomes(&x, arm, setting, rng);
            SurvivalRecord::new(o.y, o.event, arm, x)
        })
        .collect();
    Cohort::new(records)
}

/// Cohort for replicate `index` of a study with master seed `seed`.
pub fn replicate_cohort(setting: &DgpSetting, seed: u64, index: usize) -> Result<Cohort> {
    generate_cohort(setting, &mut stream_rng(seed, Stream::Replicate, index as u64))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Median observed time over `draws` pooled subjects (`Z ~ Bernoulli(alpha)`).
pub fn calibrate_t0_with(setting: &DgpSetting, draws: usize) -> Result<f64> {
    setting.validate()?;
    let mut rng = stream_rng(setting.seed, Stream::Calibration, 0);
    let mut ys: Vec<f64> = (0..draws)
        .map(|_| {
            let x = ar1_row(setting.p, setting.rho, &mut rng);
            let arm = if rng.random_bool(setting.alpha) { Arm::Treated } else { Arm::Control };
            gen_outcomes(&x, arm, setting, &mut rng).y
        })
        .collect();
    Ok(median(&mut ys))
}

pub fn calibrate_t0(setting: &DgpSetting) -> Result<f64> {
    calibrate_t0_with(setting, CALIBRATION_DRAWS)
}

/// Monte Carlo truth with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueAce {
    pub value: f64,
    pub se: f64,
}

/// `Pr(T1 > t) - Pr(T0 > t)`, averaging the conditional survival difference
/// `exp(-t e^{beta + x'g1}) - exp(-t e^{x'g0})` over `draws` covariate vectors.
pub fn true_ace_with(setting: &DgpSetting, t: f64, draws: usize) -> Result<TrueAce> {
    setting.validate()?;
    if draws < 2 {
        return Err(Error::invalid("truth needs at least two draws"));
    }
    let mut rng = stream_rng(setting.seed, Stream::Truth, 0);
    // only the first k coordinates carry effects
    let active = DgpSetting { p: setting.k, ..setting.clone() };
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..draws {
        let x = ar1_row(active.p, active.rho, &mut rng);
        let d = (-t * active.rate(&x, Arm::Treated)).exp() - (-t * active.rate(&x, Arm::Control)).exp();
        sum += d;
        sq += d * d;
    }
    let m = draws as f64;
    let mean = sum / m;
    let var = ((sq - m * mean * mean) / (m - 1.0)).max(0.0);
    Ok(TrueAce { value: mean, se: (var / m).sqrt() })
}

pub fn true_ace(setting: &DgpSetting, t: f64) -> Result<TrueAce> {
    true_ace_with(setting, t, TRUTH_DRAWS)
}

/// Monte Carlo study specification.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub setting: DgpSetting,
    pub reps: usize,
    pub kinds: Vec<EstimatorKind>,
    /// Outcome model for the point estimates; its forest seed is replaced per replicate.
    pub recipe: AdjustmentRecipe,
    /// Outcome model refitted inside bootstrap resamples (defaults to `recipe`).
    pub bootstrap_recipe: Option<AdjustmentRecipe>,
    /// Bootstrap resamples per replicate for `tau1` intervals.
    pub boot_replicates: usize,
    pub level: f64,
    /// Grid points on `(0, t0]`; more than one adds `w'Aw` with `w = 1`.
    pub grid_points: usize,
    /// Skip calibration and use this horizon.
    pub t0: Option<f64>,
    pub truth_draws: usize,
    pub calibration_draws: usize,
    pub seed: u64,
}

impl StudyConfig {
    pub fn new(setting: DgpSetting, recipe: AdjustmentRecipe, reps: usize, seed: u64) -> Self {
        StudyConfig {
            setting,
            reps,
            kinds: EstimatorKind::ALL.to_vec(),
            recipe,
            bootstrap_recipe: None,
            boot_replicates: 200,
            level: 0.95,
            grid_points: 1,
            t0: None,
            truth_draws: TRUTH_DRAWS,
            calibration_draws: CALIBRATION_DRAWS,
            seed,
        }
    }
}

/// Results of one replicate at the horizon, one entry per estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub index: usize,
    pub estimates: Vec<f64>,
    pub se: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `w'Aw` on the grid (NaN for `tau1` or single-point grids).
    pub quadratic_forms: Vec<f64>,
    pub floored_weights: usize,
    pub bootstrap_redraws: usize,
}

/// `Bias`, `SD`, `ESE`, `RelMSE`, `CR` and power for one estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorMetrics {
    pub kind: EstimatorKind,
    pub bias: f64,
    pub sd: f64,
    pub ese: f64,
    /// Mean estimated variance, `mean(se^2)`.
    pub mean_variance: f64,
    pub mse: f64,
    pub relmse: f64,
    pub coverage: f64,
    pub power: f64,
    /// Mean of `w'Aw` over replicates (NaN when unavailable).
    pub mean_quadratic_form: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub setting: DgpSetting,
    pub t0: f64,
    pub truth: TrueAce,
    pub requested: usize,
    pub failures: usize,
    pub failure_messages: Vec<(usize, String)>,
    pub metrics: Vec<EstimatorMetrics>,
    pub replicates: Vec<ReplicateResult>,
}

impl McReport {
    pub fn succeeded(&self) -> usize {
        self.replicates.len()
    }

    pub fn metric(&self, kind: EstimatorKind) -> Option<&EstimatorMetrics> {
        self.metrics.iter().find(|m| m.kind == kind)
    }

    /// Replicate estimates of one estimator.
    pub fn estimates(&self, kind: EstimatorKind) -> Vec<f64> {
        let k = self.metrics.iter().position(|m| m.kind == kind).expect("estimator in report");
        self.replicates.iter().map(|r| r.estimates[k]).collect()
    }
}

fn run_replicate(cfg: &StudyConfig, t0: f64, index: usize) -> Result<ReplicateResult> {
    let cohort = replicate_cohort(&cfg.setting, cfg.seed, index)?;
    let grid = if cfg.grid_points > 1 { TimeGrid::uniform(t0, cfg.grid_points)? } else { TimeGrid::single(t0)? };
    let h = grid.len() - 1;
    let cens = CensoringModel::fit(&cohort);
    let needs_model = cfg.kinds.iter().any(|k| k.needs_model());
    let recipe = cfg.recipe.reseeded(derive_seed(cfg.seed, Stream::Tree, index as u64));
    let preds = if needs_model { Some(recipe.fit_predict(&cohort, grid.times())?) } else { None };

    let boot = if cfg.kinds.contains(&EstimatorKind::Tau1) {
        let horizon = TimeGrid::single(t0)?;
        let brecipe = cfg.bootstrap_recipe.as_ref().unwrap_or(&cfg.recipe);
        let opts = BootstrapOptions::new(cfg.boot_replicates, derive_seed(cfg.seed, Stream::Bootstrap, index as u64));
        Some(bootstrap_replicates(&cohort, Some(brecipe), &horizon, &[EstimatorKind::Tau1], &opts)?)
    } else {
        None
    };

    let z = standard_normal_quantile(0.5 + cfg.level / 2.0);
    let ones = vec![1.0; grid.len()];
    let mut out = ReplicateResult {
        index,
        estimates: Vec::new(),
        se: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
        quadratic_forms: Vec::new(),
        floored_weights: 0,
        bootstrap_redraws: boot.as_ref().map_or(0, |b| b.redraws),
    };
    for &kind in &cfg.kinds {
        let curve = crate::estimators::ace_curve(kind, &cohort, &cens, preds.as_ref(), &grid)?;
        let est = curve.estimates[h];
        out.floored_weights += curve.floored_weights;
        if kind.has_influence() {
            let cov = covariance(&influence(kind, &cohort, &cens, preds.as_ref(), &grid)?);
            let se = cov.standard_errors()[h];
            out.estimates.push(est);
            out.se.push(se);
            out.lower.push(est - z * se);
            out.upper.push(est + z * se);
            out.quadratic_forms.push(if grid.len() > 1 { cov.quadratic_form(&ones) } else { f64::NAN });
        } else {
            let v = boot.as_ref().expect("bootstrap for tau1").at(kind, 0)?;
            let (lo, hi) = percentile_interval(&v, est, cfg.level);
            out.estimates.push(est);
            out.se.push(sample_sd(&v));
            out.lower.push(lo);
            out.upper.push(hi);
            out.quadratic_forms.push(f64::NAN);
        }
    }
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Run `cfg.reps` replicates and summarise them against the Monte Carlo truth.
pub fn run_study(cfg: &StudyConfig) -> Result<McReport> {
    cfg.setting.validate()?;
    if cfg.reps < 2 {
        return Err(Error::invalid("a study needs at least two replicates"));
    }
    if cfg.kinds.is_empty() {
        return Err(Error::invalid("no estimators selected"));
    }
    let t0 = match cfg.t0 {
        Some(t) => t,
        None => calibrate_t0_with(&cfg.setting, cfg.calibration_draws)?,
    };
    let truth = true_ace_with(&cfg.setting, t0, cfg.truth_draws)?;

    let run = |r: usize| run_replicate(cfg, t0, r);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<ReplicateResult>> = {
        use rayon::prelude::*;
        (0..cfg.reps).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<ReplicateResult>> = (0..cfg.reps).map(run).collect();

    let mut replicates = Vec::new();
    let mut failure_messages = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) => replicates.push(v),
            Err(e) => failure_messages.push((r, e.to_string())),
        }
    }
    if replicates.len() < 2 {
        let first = failure_messages.first().map_or(String::new(), |(r, m)| format!("; replicate {r}: {m}"));
        return Err(Error::invalid(format!("only {} replicates succeeded{first}", replicates.len())));
    }
    let metrics = summarise(&cfg.kinds, &replicates, truth.value);
    Ok(McReport {
        setting: cfg.setting.clone(),
        t0,
        truth,
        requested: cfg.reps,
        failures: failure_messages.len(),
        failure_messages,
        metrics,
        replicates,
    })
}

fn summarise(kinds: &[EstimatorKind], reps: &[ReplicateResult], truth: f64) -> Vec<EstimatorMetrics> {
    let m = reps.len() as f64;
    let mut metrics: Vec<EstimatorMetrics> = kinds
        .iter()
        .enumerate()
        .map(|(k, &kind)| {
            let est: Vec<f64> = reps.iter().map(|r| r.estimates[k]).collect();
            let se: Vec<f64> = reps.iter().map(|r| r.se[k]).collect();
            let covered = reps.iter().filter(|r| r.lower[k] <= truth && truth <= r.upper[k]).count() as f64;
            let rejected = reps.iter().filter(|r| r.lower[k] > 0.0 || r.upper[k] < 0.0).count() as f64;
            let quad: Vec<f64> = reps.iter().map(|r| r.quadratic_forms[k]).collect();
            EstimatorMetrics {
                kind,
                bias: mean(&est) - truth,
                sd: sample_sd(&est),
                ese: mean(&se),
                mean_variance: se.iter().map(|s| s * s).sum::<f64>() / m,
                mse: est.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / m,
                relmse: f64::NAN,
                coverage: covered / m,
                power: rejected / m,
                mean_quadratic_form: mean(&quad),
            }
        })
        .collect();
    if let Some(base) = metrics.iter().find(|x| x.kind == EstimatorKind::Tau0).map(|x| x.mse) {
        for x in &mut metrics {
            x.relmse = if x.kind == EstimatorKind::Tau0 { 1.0 } else { x.mse / base };
        }
    }
    metrics
}

/// Quadrature weights for `w = 1` on a grid.
pub fn uniform_quadrature(grid: &TimeGrid) -> Result<Vec<f64>> {
    quadrature_weights(grid.times(), &vec![1.0; grid.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> Rng {
        Rng::seed_from_u64(seed)
    }

    #[test]
    fn independent_columns_at_zero_correlation() {
        let x = gen_covariates(100_000, 3, 0.0, &mut rng(1));
        for a in 0..3 {
            for b in 0..3 {
                let c = x.iter().map(|r| r[a] * r[b]).sum::<f64>() / x.len() as f64;
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((c - target).abs() < 0.02, "cov({a},{b}) = {c}");
            }
        }
    }

    #[test]
    fn ar1_lag_two_correlation() {
        let x = gen_covariates(100_000, 3, 0.8, &mut rng(2));
        let n = x.len() as f64;
        let m: Vec<f64> = (0..3).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let cov = |a: usize, b: usize| x.iter().map(|r| (r[a] - m[a]) * (r[b] - m[b])).sum::<f64>() / n;
        let corr = cov(0, 2) / (cov(0, 0) * cov(2, 2)).sqrt();
        assert!((corr - 0.64).abs() < 0.02, "{corr}");
    }

    #[test]
    fn covariates_are_reproducible() {
        assert_eq!(gen_covariates(5, 4, 0.8, &mut rng(3)), gen_covariates(5, 4, 0.8, &mut rng(3)));
    }

    #[test]
    fn null_event_times_are_unit_exponential() {
        let s = DgpSetting::default();
        let mut r = rng(4);
        let x = vec![0.3; s.p];
        let mean = (0..100_000).map(|_| gen_outcomes(&x, Arm::Control, &s, &mut r).t).sum::<f64>() / 1e5;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn default_event_fraction() {
        let s = DgpSetting { beta: 0.5, s0: 0.5, s1: 0.5, ..DgpSetting::default() };
        let mut r = rng(5);
        let events = (0..100_000)
            .filter(|_| {
                let x = ar1_row(s.p, s.rho, &mut r);
                let arm = if r.random_bool(0.5) { Arm::Treated } else { Arm::Control };
                gen_outcomes(&x, arm, &s, &mut r).event
            })
            .count() as f64
            / 1e5;
        assert!((0.5..=0.7).contains(&events), "{events}");
    }

    #[test]
    fn proportional_hazards_identity() {
        let s = DgpSetting { beta: 2f64.ln(), ..DgpSetting::default() };
        let mut r = rng(6);
        let x = vec![0.0; s.p];
        let draws = 1_000_000;
        let surv = |arm, r: &mut Rng| (0..draws).filter(|_| gen_outcomes(&x, arm, &s, r).t > 0.5).count() as f64 / draws as f64;
        let s1 = surv(Arm::Treated, &mut r);
        let s0 = surv(Arm::Control, &mut r);
        assert!((s1 - s0 * s0).abs() < 0.01);
    }

    #[test]
    fn null_t0_is_the_mixture_median() {
        let s = DgpSetting::default();
        // P(min(Exp(1), U[0, 2.5]) > y) = exp(-y) (1 - y / 2.5)
        let (mut lo, mut hi) = (0.0, 2.5);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if (-mid as f64).exp() * (1.0 - mid / 2.5) > 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t0 = calibrate_t0(&s).unwrap();
        assert!((t0 - lo).abs() < 0.02, "{t0} vs {lo}");
        assert_eq!(t0, calibrate_t0(&s).unwrap());
    }

    #[test]
    fn larger_beta_lowers_t0() {
        let t0 = |beta| calibrate_t0(&DgpSetting { beta, ..DgpSetting::default() }).unwrap();
        assert!(t0(1.0) < t0(0.5) && t0(0.5) < t0(0.0));
    }

    #[test]
    fn truth_cases() {
        let null = DgpSetting { s0: 0.5, s1: 0.5, ..DgpSetting::default() };
        let tr = true_ace_with(&null, 0.5, 200_000).unwrap();
        assert!(tr.value.abs() <= 3.0 * tr.se.max(1e-15));

        let s = DgpSetting { beta: 0.7, ..DgpSetting::default() };
        let t = 0.6;
        let exact = (-t * 0.7f64.exp()).exp() - (-t as f64).exp();
        let tr = true_ace_with(&s, t, 10_000).unwrap();
        assert!((tr.value - exact).abs() < 0.002);
        assert!(tr.value < 0.0);
    }

    #[test]
    fn generated_cohorts_have_both_arms() {
        let s = DgpSetting { n: 4, ..DgpSetting::default() };
        for i in 0..50 {
            let c = replicate_cohort(&s, 9, i).unwrap();
            assert!(c.require_both_arms().is_ok());
        }
    }
}
