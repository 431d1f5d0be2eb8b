//! L1-penalized Cox regression by proximal Newton / cyclic coordinate descent,
//! with lambda chosen by cross-validated partial likelihood.

use super::cox::{column_means, centered, PartialLikelihood, PhModel};
use super::{arm_data, SurvivalPredictor};
use crate::error::{Error, Result};
use crate::survival::{Arm, Cohort};

#[derive(Debug, Clone, PartialEq)]
pub struct LassoOptions {
    pub folds: usize,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    /// Coordinate descent stops once `max_j v_j (delta beta_j)^2` falls below this.
    pub tolerance: f64,
    pub max_outer: usize,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions { folds: 5, n_lambda: 50, lambda_min_ratio: 0.01, tolerance: 1e-9, max_outer: 100, max_sweeps: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoPathPoint {
    /// Penalty on the standardized-covariate scale.
    pub lambda: f64,
    /// Coefficients on the original covariate scale.
    pub coefficients: Vec<f64>,
    /// Summed held-out partial likelihood contribution (NaN when not cross-validated).
    pub cv_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoCoxFit {
    pub model: PhModel,
    pub lambda: f64,
    pub path: Vec<LassoPathPoint>,
    pub selected: usize,
    /// Penalized objective after each outer iteration of the final solve.
    pub objective_history: Vec<f64>,
}

impl LassoCoxFit {
    pub fn coefficients(&self) -> &[f64] {
        &self.model.coefficients
    }
}

impl SurvivalPredictor for LassoCoxFit {
    fn arm(&self) -> Arm {
        self.model.arm
    }

    fn predict(&self, x: &[f64], times: &[f64]) -> Vec<f64> {
        self.model.predict(x, times)
    }
}

/// Standardized design for one arm.
struct Design {
    y: Vec<f64>,
    event: Vec<bool>,
    z: Vec<Vec<f64>>,
    center: Vec<f64>,
    scale: Vec<f64>,
    raw: Vec<Vec<f64>>,
}

impl Design {
    fn new(cohort: &Cohort, arm: Arm) -> Result<Self> {
        let (_, y, event, raw) = arm_data(cohort, arm);
        if raw.is_empty() || !event.iter().any(|&e| e) {
            return Err(Error::invalid(format!("{arm:?} arm has no events")));
        }
        let p = cohort.p();
        let center = column_means(&raw, p);
        let n = raw.len() as f64;
        let scale: Vec<f64> = (0..p)
            .map(|j| (raw.iter().map(|r| (r[j] - center[j]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        let z = raw
            .iter()
            .map(|r| (0..p).map(|j| if scale[j] > 0.0 { (r[j] - center[j]) / scale[j] } else { 0.0 }).collect())
            .collect();
        Ok(Design { y, event, z, center, scale, raw })
    }

    fn subset(&self, rows: &[usize]) -> PartialLikelihood {
        let y: Vec<f64> = rows.iter().map(|&i| self.y[i]).collect();
        let e: Vec<bool> = rows.iter().map(|&i| self.event[i]).collect();
        let z: Vec<Vec<f64>> = rows.iter().map(|&i| self.z[i].clone()).collect();
        PartialLikelihood::new(&y, &e, &z)
    }

    fn to_original(&self, beta: &[f64]) -> Vec<f64> {
        beta.iter().zip(&self.scale).map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 }).collect()
    }

    fn model(&self, arm: Arm, beta_std: &[f64]) -> PhModel {
        let beta = self.to_original(beta_std);
        let lik = PartialLikelihood::new(&self.y, &self.event, &centered(&self.raw, &self.center));
        PhModel::from_fit(arm, &lik, self.center.clone(), beta)
    }
}

fn objective(lik: &PartialLikelihood, beta: &[f64], lambda: f64) -> f64 {
    -lik.loglik(beta) / lik.n() as f64 + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Per-subject gradient and diagonal Hessian of `-loglik` with respect to
/// the linear predictor.
fn eta_derivatives(lik: &PartialLikelihood, eta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = lik.n();
    // risk-set sums at each tied block, accumulated from the end
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && lik.y[j] == lik.y[i] {
            j += 1;
        }
        blocks.push((i, j));
        i = j;
    }
    let mut s0 = vec![0.0; blocks.len()];
    let mut acc = 0.0;
    for (b, &(a, e)) in blocks.iter().enumerate().rev() {
        acc += eta[a..e].iter().map(|v| v.exp()).sum::<f64>();
        s0[b] = acc;
    }
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let (mut ca, mut cb) = (0.0, 0.0);
    for (b, &(a, e)) in blocks.iter().enumerate() {
        let d = lik.event[a..e].iter().filter(|&&v| v).count() as f64;
        if d > 0.0 {
            ca += d / s0[b];
            cb += d / (s0[b] * s0[b]);
        }
        for k in a..e {
            let w = eta[k].exp();
            grad[k] = w * ca - lik.event[k] as u8 as f64;
            hess[k] = (w * ca - w * w * cb).max(0.0);
        }
    }
    (grad, hess)
}

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

/// Minimise `-loglik/N + lambda * |beta|_1` from `start`. Returns the
/// solution and the objective after each accepted outer step.
fn solve(lik: &PartialLikelihood, lambda: f64, start: &[f64], opts: &LassoOptions) -> (Vec<f64>, Vec<f64>) {
    let n = lik.n();
    let nf = n as f64;
    let p = lik.p;
    let mut beta = start.to_vec();
    let mut f = objective(lik, &beta, lambda);
    let mut history = vec![f];
    let cols: Vec<Vec<f64>> = (0..p).map(|j| lik.x.iter().map(|r| r[j]).collect()).collect();
    for _ in 0..opts.max_outer {
        let eta = lik.linear_predictor(&beta);
        let (g, w) = eta_derivatives(lik, &eta);
        let work: Vec<f64> = (0..n).map(|i| if w[i] > 0.0 { eta[i] - g[i] / w[i] } else { eta[i] }).collect();
        let curv: Vec<f64> = cols.iter().map(|c| (0..n).map(|i| w[i] * c[i] * c[i]).sum::<f64>() / nf).collect();

        // coordinate descent on the weighted least-squares approximation,
        // cycling over the active set between full sweeps
        let mut b = beta.clone();
        let mut resid: Vec<f64> = (0..n).map(|i| work[i] - eta[i]).collect();
        let mut full = true;
        for _ in 0..opts.max_sweeps {
            let coords: Vec<usize> = (0..p).filter(|&j| curv[j] > 0.0 && (full || b[j] != 0.0)).collect();
            let mut max_delta = 0.0f64;
            for j in coords {
                let col = &cols[j];
                let rho: f64 = (0..n).map(|i| w[i] * col[i] * resid[i]).sum::<f64>() / nf + curv[j] * b[j];
                let new = soft_threshold(rho, lambda) / curv[j];
                let delta = new - b[j];
                if delta != 0.0 {
                    for i in 0..n {
                        resid[i] -= delta * col[i];
                    }
                    b[j] = new;
                    max_delta = max_delta.max(delta * delta * curv[j]);
                }
            }
            if max_delta < opts.tolerance {
                if full {
                    break;
                }
                full = true;
            } else {
                full = false;
            }
        }

        // backtracking keeps the true objective monotone
        let dir: Vec<f64> = b.iter().zip(&beta).map(|(a, c)| a - c).collect();
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-10 {
            let cand: Vec<f64> = beta.iter().zip(&dir).map(|(c, d)| c + step * d).collect();
            let fc = objective(lik, &cand, lambda);
            if fc <= f {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc)) = accepted else { break };
        let moved = cand.iter().zip(&beta).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        let improvement = f - fc;
        beta = cand;
        f = fc;
        history.push(f);
        if moved < 1e-9 || improvement <= 1e-3 * opts.tolerance * f.abs().max(1.0) {
            break;
        }
    }
    (beta, history)
}

fn lambda_max(lik: &PartialLikelihood) -> f64 {
    let (_, grad, _) = lik.derivatives(&vec![0.0; lik.p]);
    grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) / lik.n() as f64
}

fn lambda_path(max: f64, opts: &LassoOptions) -> Vec<f64> {
    let top = max * (1.0 + 1e-9);
    if opts.n_lambda <= 1 {
        return vec![top];
    }
    (0..opts.n_lambda)
        .map(|k| top * opts.lambda_min_ratio.powf(k as f64 / (opts.n_lambda - 1) as f64))
        .collect()
}

/// Event-stratified fold labels in time order, so each fold receives events.
fn stratified_folds(y: &[f64], event: &[bool], k: usize) -> Result<Vec<usize>> {
    let n_events = event.iter().filter(|&&e| e).count();
    if n_events < k {
        return Err(Error::invalid(format!("{n_events} events cannot populate {k} cross-validation folds")));
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let mut folds = vec![0; y.len()];
    let (mut ev, mut cens) = (0, 0);
    for i in order {
        if event[i] {
            folds[i] = ev % k;
            ev += 1;
        } else {
            folds[i] = cens % k;
            cens += 1;
        }
    }
    Ok(folds)
}

/// Lasso-Cox with lambda selected by K-fold cross-validated partial likelihood.
pub fn fit_lasso_cox(cohort: &Cohort, arm: Arm, opts: &LassoOptions) -> Result<LassoCoxFit> {
    let design = Design::new(cohort, arm)?;
    let n = design.y.len();
    let p = cohort.p();
    let all: Vec<usize> = (0..n).collect();
    let full = design.subset(&all);
    let lambdas = lambda_path(lambda_max(&full), opts);

    let folds = if opts.folds >= 2 { Some(stratified_folds(&design.y, &design.event, opts.folds)?) } else { None };
    let mut cv = vec![0.0; lambdas.len()];
    if let Some(folds) = &folds {
        for k in 0..opts.folds {
            let train_rows: Vec<usize> = (0..n).filter(|&i| folds[i] != k).collect();
            let train = design.subset(&train_rows);
            let mut beta = vec![0.0; p];
            for (l, &lambda) in lambdas.iter().enumerate() {
                beta = solve(&train, lambda, &beta, opts).0;
                cv[l] += full.loglik(&beta) - train.loglik(&beta);
            }
        }
    } else {
        cv.iter_mut().for_each(|v| *v = f64::NAN);
    }

    let mut path = Vec::with_capacity(lambdas.len());
    let mut betas = Vec::with_capacity(lambdas.len());
    let mut histories = Vec::with_capacity(lambdas.len());
    let mut beta = vec![0.0; p];
    for (l, &lambda) in lambdas.iter().enumerate() {
        let (b, h) = solve(&full, lambda, &beta, opts);
        beta = b;
        path.push(LassoPathPoint { lambda, coefficients: design.to_original(&beta), cv_score: cv[l] });
        betas.push(beta.clone());
        histories.push(h);
    }
    let selected = if folds.is_some() {
        // first maximum, i.e. the largest penalty among ties
        (0..cv.len()).fold(0, |best, l| if cv[l] > cv[best] { l } else { best })
    } else {
        lambdas.len() - 1
    };
    Ok(LassoCoxFit {
        model: design.model(arm, &betas[selected]),
        lambda: lambdas[selected],
        path,
        selected,
        objective_history: histories.swap_remove(selected),
    })
}

/// Lasso-Cox at a fixed penalty (standardized-covariate scale), solved from zero.
pub fn fit_lasso_cox_at(cohort: &Cohort, arm: Arm, lambda: f64) -> Result<LassoCoxFit> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    let design = Design::new(cohort, arm)?;
    let all: Vec<usize> = (0..design.y.len()).collect();
    let lik = design.subset(&all);
    let opts = LassoOptions { tolerance: 1e-20, max_outer: 2000, max_sweeps: 10_000, ..LassoOptions::default() };
    let (beta, history) = solve(&lik, lambda, &vec![0.0; cohort.p()], &opts);
    Ok(LassoCoxFit {
        model: design.model(arm, &beta),
        lambda,
        path: vec![LassoPathPoint { lambda, coefficients: design.to_original(&beta), cv_score: f64::NAN }],
        selected: 0,
        objective_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjust::fit_cox;
    use crate::survival::{km_fit, SurvivalRecord};
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Exp};

    fn simulated(n: usize, p: usize, effect: &[f64], seed: u64) -> Cohort {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let recs = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.5..1.5)).collect();
                let eta: f64 = x.iter().zip(effect).map(|(a, b)| a * b).sum();
                let t = Exp::new(eta.exp()).unwrap().sample(&mut rng);
                let c = rng.random_range(0.0..3.0);
                SurvivalRecord::new(t.min(c), t <= c, Arm::Treated, x)
            })
            .collect();
        Cohort::new(recs).unwrap()
    }

    #[test]
    fn huge_penalty_zeroes_everything_and_gives_km() {
        let c = simulated(60, 4, &[1.0, -0.5, 0.0, 0.0], 1);
        let fit = fit_lasso_cox_at(&c, Arm::Treated, 1e6).unwrap();
        assert!(fit.coefficients().iter().all(|&b| b == 0.0));
        let km = km_fit(&c.times(), &c.events()).unwrap();
        let grid: Vec<f64> = (0..30).map(|k| k as f64 * 0.1).collect();
        let s = fit.predict(&c.record(0).x, &grid);
        for (t, v) in grid.iter().zip(s) {
            assert!((v - km.eval(*t)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_penalty_matches_cox() {
        let c = simulated(80, 1, &[0.8], 2);
        let lasso = fit_lasso_cox_at(&c, Arm::Treated, 0.0).unwrap();
        let cox = fit_cox(&c, Arm::Treated).unwrap();
        assert!((lasso.coefficients()[0] - cox.coefficients()[0]).abs() < 1e-4);
    }

    #[test]
    fn objective_decreases_monotonically() {
        let c = simulated(70, 6, &[1.0, 0.5, -0.5, 0.0, 0.0, 0.0], 3);
        let fit = fit_lasso_cox_at(&c, Arm::Treated, 0.02).unwrap();
        assert!(fit.objective_history.len() > 2);
        assert!(fit.objective_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn single_covariate_shrinks_monotonically() {
        let c = simulated(80, 1, &[0.9], 4);
        let opts = LassoOptions { folds: 0, ..LassoOptions::default() };
        let fit = fit_lasso_cox(&c, Arm::Treated, &opts).unwrap();
        let mags: Vec<f64> = fit.path.iter().map(|p| p.coefficients[0].abs()).collect();
        assert_eq!(mags[0], 0.0);
        // lambda decreases along the path, so magnitude must not decrease
        assert!(mags.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{mags:?}");
    }

    #[test]
    fn cross_validation_scores_every_lambda() {
        let c = simulated(90, 8, &[1.2, 0.0, -0.8, 0.0, 0.0, 0.0, 0.0, 0.0], 5);
        let fit = fit_lasso_cox(&c, Arm::Treated, &LassoOptions::default()).unwrap();
        assert_eq!(fit.path.len(), 50);
        assert!(fit.path.iter().all(|p| p.cv_score.is_finite()));
        assert!(fit.path[0].coefficients.iter().all(|&b| b == 0.0));
        assert!(fit.coefficients()[0] > 0.0);
        // warm-started neighbours stay close
        for w in fit.path.windows(2) {
            let gap = w[0].coefficients.iter().zip(&w[1].coefficients).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(gap < 0.5);
        }
    }

    #[test]
    fn too_few_events_for_folds() {
        let recs = (0..6).map(|k| SurvivalRecord::new(k as f64 + 1.0, k < 2, Arm::Treated, vec![k as f64])).collect();
        let c = Cohort::new(recs).unwrap();
        assert!(fit_lasso_cox(&c, Arm::Treated, &LassoOptions::default()).is_err());
    }
}
