//! Cox proportional hazards regression (Breslow ties, Newton–Raphson).

use nalgebra::{DMatrix, DVector};

use super::{arm_data, SurvivalPredictor};
use crate::error::{Error, Result};
use crate::survival::{Arm, Cohort, StepFunction};

/// Log partial likelihood of one arm, with covariates centred.
#[derive(Debug, Clone)]
pub(crate) struct PartialLikelihood {
    /// Row order sorted by ascending time.
    pub y: Vec<f64>,
    pub event: Vec<bool>,
    pub x: Vec<Vec<f64>>,
    pub p: usize,
    /// `(start, end)` of each tied-time block in sorted order.
    blocks: Vec<(usize, usize)>,
}

impl PartialLikelihood {
    pub fn new(y: &[f64], event: &[bool], x: &[Vec<f64>]) -> Self {
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
        let y: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let event = order.iter().map(|&i| event[i]).collect();
        let x: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
        let p = x.first().map_or(0, |r| r.len());
        let mut blocks = Vec::new();
        let mut i = 0;
        while i < y.len() {
            let mut j = i;
            while j < y.len() && y[j] == y[i] {
                j += 1;
            }
            blocks.push((i, j));
            i = j;
        }
        PartialLikelihood { y, event, x, p, blocks }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        self.x.iter().map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn loglik(&self, beta: &[f64]) -> f64 {
        self.loglik_eta(&self.linear_predictor(beta))
    }

    pub fn loglik_eta(&self, eta: &[f64]) -> f64 {
        let mut s0 = 0.0;
        let mut ll = 0.0;
        for &(a, b) in self.blocks.iter().rev() {
            let mut d = 0.0;
            for i in a..b {
                s0 += eta[i].exp();
                if self.event[i] {
                    ll += eta[i];
                    d += 1.0;
                }
            }
            if d > 0.0 {
                ll -= d * s0.ln();
            }
        }
        ll
    }

    /// Log likelihood, gradient and information matrix (negative Hessian).
    pub fn derivatives(&self, beta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let p = self.p;
        let eta = self.linear_predictor(beta);
        let mut s0 = 0.0;
        let mut s1 = DVector::<f64>::zeros(p);
        let mut s2 = DMatrix::<f64>::zeros(p, p);
        let mut ll = 0.0;
        let mut grad = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        for &(a, b) in self.blocks.iter().rev() {
            let mut d = 0.0;
            for i in a..b {
                let w = eta[i].exp();
                s0 += w;
                for j in 0..p {
                    let wx = w * self.x[i][j];
                    s1[j] += wx;
                    for k in 0..=j {
                        s2[(j, k)] += wx * self.x[i][k];
                    }
                }
                if self.event[i] {
                    d += 1.0;
                    ll += eta[i];
                    for j in 0..p {
                        grad[j] += self.x[i][j];
                    }
                }
            }
            if d > 0.0 {
                ll -= d * s0.ln();
                for j in 0..p {
                    let mj = s1[j] / s0;
                    grad[j] -= d * mj;
                    for k in 0..=j {
                        info[(j, k)] += d * (s2[(j, k)] / s0 - mj * s1[k] / s0);
                    }
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                info[(k, j)] = info[(j, k)];
            }
        }
        (ll, grad, info)
    }

    /// Breslow increments `d_k / sum_{R_k} exp(eta)` at distinct event times.
    pub fn breslow(&self, eta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut times = Vec::new();
        let mut incs = Vec::new();
        let mut s0 = 0.0;
        for &(a, b) in self.blocks.iter().rev() {
            let mut d = 0.0;
            for i in a..b {
                s0 += eta[i].exp();
                d += self.event[i] as u8 as f64;
            }
            if d > 0.0 {
                times.push(self.y[a]);
                incs.push(d / s0);
            }
        }
        times.reverse();
        incs.reverse();
        (times, incs)
    }
}

/// A fitted proportional hazards model for one arm.
///
/// Survival is the product integral `prod_{t_k <= t} (1 - dLambda0_k exp(eta))`
/// clamped at zero, so that a model with no covariate effect reproduces the
/// arm's Kaplan–Meier curve exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PhModel {
    pub arm: Arm,
    pub coefficients: Vec<f64>,
    pub center: Vec<f64>,
    pub baseline_times: Vec<f64>,
    pub baseline_increments: Vec<f64>,
}

impl PhModel {
    pub(crate) fn from_fit(arm: Arm, lik: &PartialLikelihood, center: Vec<f64>, beta: Vec<f64>) -> Self {
        let eta = lik.linear_predictor(&beta);
        let (baseline_times, baseline_increments) = lik.breslow(&eta);
        PhModel { arm, coefficients: beta, center, baseline_times, baseline_increments }
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).zip(&self.coefficients).map(|((x, c), b)| (x - c) * b).sum()
    }

    /// Breslow cumulative baseline hazard.
    pub fn baseline_cum_hazard(&self) -> StepFunction {
        let mut acc = 0.0;
        let values = self
            .baseline_increments
            .iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect();
        StepFunction::new(0.0, self.baseline_times.clone(), values).expect("increasing event times")
    }
}

impl SurvivalPredictor for PhModel {
    fn arm(&self) -> Arm {
        self.arm
    }

    fn predict(&self, x: &[f64], times: &[f64]) -> Vec<f64> {
        let risk = self.linear_predictor(x).exp();
        let mut out = Vec::with_capacity(times.len());
        let mut k = 0;
        let mut surv = 1.0f64;
        for &t in times {
            while k < self.baseline_times.len() && self.baseline_times[k] <= t {
                surv *= (1.0 - self.baseline_increments[k] * risk).max(0.0);
                k += 1;
            }
            out.push(surv);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions { max_iterations: 50, gradient_tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    pub model: PhModel,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub loglik: f64,
}

impl CoxFit {
    pub fn coefficients(&self) -> &[f64] {
        &self.model.coefficients
    }
}

impl SurvivalPredictor for CoxFit {
    fn arm(&self) -> Arm {
        self.model.arm
    }

    fn predict(&self, x: &[f64], times: &[f64]) -> Vec<f64> {
        self.model.predict(x, times)
    }
}

pub(crate) fn column_means(x: &[Vec<f64>], p: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

pub(crate) fn centered(x: &[Vec<f64>], center: &[f64]) -> Vec<Vec<f64>> {
    x.iter().map(|r| r.iter().zip(center).map(|(a, c)| a - c).collect()).collect()
}

pub fn fit_cox(cohort: &Cohort, arm: Arm) -> Result<CoxFit> {
    fit_cox_with(cohort, arm, &CoxOptions::default())
}

pub fn fit_cox_with(cohort: &Cohort, arm: Arm, opts: &CoxOptions) -> Result<CoxFit> {
    let (_, y, e, x) = arm_data(cohort, arm);
    if !e.iter().any(|&v| v) {
        return Err(Error::invalid(format!("{arm:?} arm has no events")));
    }
    let p = cohort.p();
    let center = column_means(&x, p);
    let lik = PartialLikelihood::new(&y, &e, &centered(&x, &center));

    let mut beta = vec![0.0; p];
    let (mut ll, mut grad, mut info) = lik.derivatives(&beta);
    // a zero gradient does not rule out a degenerate design
    newton_step(&info, &grad)?;
    let mut iterations = 0;
    while grad.norm() >= opts.gradient_tolerance {
        if iterations == opts.max_iterations {
            return Err(Error::NotConverged { iterations, gradient_norm: grad.norm() });
        }
        iterations += 1;
        let step = newton_step(&info, &grad)?;
        let mut scale = 1.0;
        let mut candidate: Vec<f64>;
        let mut cand_ll;
        loop {
            candidate = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            cand_ll = lik.loglik(&candidate);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                break;
            }
            scale *= 0.5;
            if scale < 1e-10 {
                return Err(Error::NotConverged { iterations, gradient_norm: grad.norm() });
            }
        }
        beta = candidate;
        (ll, grad, info) = lik.derivatives(&beta);
        if beta.iter().any(|b| !b.is_finite() || b.abs() > 1e6) {
            return Err(Error::NotConverged { iterations, gradient_norm: grad.norm() });
        }
    }
    let gradient_norm = grad.norm();
    Ok(CoxFit { model: PhModel::from_fit(arm, &lik, center, beta), iterations, gradient_norm, loglik: ll })
}

fn newton_step(info: &DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
    let p = grad.len();
    if p == 0 {
        return Ok(DVector::zeros(0));
    }
    let eig = info.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if max == 0.0 || min <= 1e-12 * max {
        return Err(Error::SingularInformation);
    }
    info.clone().cholesky().map(|c| c.solve(grad)).ok_or(Error::SingularInformation)
}
