//! The four ACE estimators on the survival-probability scale: crude IPCW
//! (`tau0`), outcome-model mean (`tau1`), and the two augmented forms
//! (`tau2`, `tau3`), pointwise and over a time grid.

use serde::{Deserialize, Serialize};

use crate::adjust::PredictionTable;
use crate::error::{Error, Result};
use crate::survival::{Arm, CensoringModel, Cohort};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Tau0,
    Tau1,
    Tau2,
    Tau3,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [EstimatorKind::Tau0, EstimatorKind::Tau1, EstimatorKind::Tau2, EstimatorKind::Tau3];

    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Tau0 => "tau0",
            EstimatorKind::Tau1 => "tau1",
            EstimatorKind::Tau2 => "tau2",
            EstimatorKind::Tau3 => "tau3",
        }
    }

    /// Whether the estimator needs outcome-model predictions.
    pub fn needs_model(self) -> bool {
        self != EstimatorKind::Tau0
    }

    /// Whether an influence-function variance is available.
    pub fn has_influence(self) -> bool {
        self != EstimatorKind::Tau1
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tau0" | "0" => Ok(EstimatorKind::Tau0),
            "tau1" | "1" => Ok(EstimatorKind::Tau1),
            "tau2" | "2" => Ok(EstimatorKind::Tau2),
            "tau3" | "3" => Ok(EstimatorKind::Tau3),
            other => Err(Error::invalid(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Strictly increasing evaluation times; the last one is the horizon `t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::invalid("time grid is empty"));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::invalid("grid times must be finite and non-negative"));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("grid times must be strictly increasing"));
        }
        Ok(TimeGrid { times })
    }

    /// `m` equally spaced points on `(0, t0]`.
    pub fn uniform(t0: f64, m: usize) -> Result<Self> {
        if !(t0 > 0.0) || m == 0 {
            return Err(Error::invalid("uniform grid needs t0 > 0 and at least one point"));
        }
        Self::new((1..=m).map(|k| t0 * k as f64 / m as f64).collect())
    }

    pub fn single(t: f64) -> Result<Self> {
        Self::new(vec![t])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty grid")
    }
}

/// 50 equally spaced points on `(0, t0]`.
pub fn default_grid(t0: f64) -> Result<TimeGrid> {
    TimeGrid::uniform(t0, 50)
}

/// One estimator evaluated over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AceCurve {
    pub kind: EstimatorKind,
    pub times: Vec<f64>,
    pub estimates: Vec<f64>,
    /// Subject-time pairs whose censoring weight hit the floor.
    pub floored_weights: usize,
}

/// Per-subject ingredients at one time point.
#[derive(Debug, Clone)]
pub(crate) struct PointTerms {
    pub treated: Vec<bool>,
    /// `I(Y > t) / pi(t)`.
    pub surv_weighted: Vec<f64>,
    /// `pi(t)`, floored.
    pub weight: Vec<f64>,
    pub floored: usize,
    pub n1: usize,
    pub n0: usize,
}

impl PointTerms {
    pub fn new(cohort: &Cohort, cens: &CensoringModel, t: f64) -> Self {
        let n = cohort.len();
        let mut treated = Vec::with_capacity(n);
        let mut surv_weighted = Vec::with_capacity(n);
        let mut weight = Vec::with_capacity(n);
        let mut floored = 0;
        for r in cohort.records() {
            let w = cens.ipcw_weight(r, t);
            // only subjects with R(t) = 1 consult their weight
            if w.floored && r.risk_indicator(t) {
                floored += 1;
            }
            treated.push(r.arm == Arm::Treated);
            weight.push(w.value);
            surv_weighted.push(if r.survives(t) { 1.0 / w.value } else { 0.0 });
        }
        let n1 = treated.iter().filter(|&&z| z).count();
        PointTerms { treated, surv_weighted, weight, floored, n1, n0: n - n1 }
    }

    /// `(mean over treated, mean over control)` of `values`.
    pub fn arm_means(&self, values: &[f64]) -> (f64, f64) {
        let (mut s1, mut s0) = (0.0, 0.0);
        for (v, &z) in values.iter().zip(&self.treated) {
            if z {
                s1 += v;
            } else {
                s0 += v;
            }
        }
        (s1 / self.n1 as f64, s0 / self.n0 as f64)
    }

    /// `mu^(Z_i)` for every subject at grid index `g`.
    pub fn own_prediction(&self, preds: &PredictionTable, g: usize) -> Vec<f64> {
        (0..self.treated.len())
            .map(|i| preds.get(if self.treated[i] { Arm::Treated } else { Arm::Control }, i, g))
            .collect()
    }

    /// `I(Y > t) / pi - mu^(Z)`.
    pub fn tau2_residual(&self, preds: &PredictionTable, g: usize) -> Vec<f64> {
        self.own_prediction(preds, g).iter().zip(&self.surv_weighted).map(|(m, w)| w - m).collect()
    }

    /// `R(t) {I(Y > t) - mu^(Z)} / pi`.
    pub fn tau3_residual(&self, cohort: &Cohort, preds: &PredictionTable, g: usize, t: f64) -> Vec<f64> {
        let own = self.own_prediction(preds, g);
        cohort
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if r.risk_indicator(t) {
                    (r.survives(t) as u8 as f64 - own[i]) / self.weight[i]
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// `n^-1 sum_i (mu1_i - mu0_i)` at grid index `g`.
pub(crate) fn model_mean(preds: &PredictionTable, g: usize) -> f64 {
    let n = preds.n();
    (0..n).map(|i| preds.get(Arm::Treated, i, g) - preds.get(Arm::Control, i, g)).sum::<f64>() / n as f64
}

fn check_shapes(cohort: &Cohort, preds: &PredictionTable) -> Result<()> {
    if preds.n() != cohort.len() {
        return Err(Error::invalid(format!("{} prediction rows for {} subjects", preds.n(), cohort.len())));
    }
    Ok(())
}

fn grid_index(preds: &PredictionTable, t: f64) -> Result<usize> {
    preds
        .times()
        .iter()
        .position(|&u| u == t)
        .ok_or_else(|| Error::invalid(format!("no predictions at t = {t}")))
}

fn point_value(
    kind: EstimatorKind,
    cohort: &Cohort,
    cens: &CensoringModel,
    preds: Option<&PredictionTable>,
    g: usize,
    t: f64,
) -> Result<(f64, usize)> {
    let need = || preds.ok_or_else(|| Error::invalid(format!("{kind} needs outcome-model predictions")));
    if kind == EstimatorKind::Tau1 {
        return Ok((model_mean(need()?, g), 0));
    }
    let terms = PointTerms::new(cohort, cens, t);
    let value = match kind {
        EstimatorKind::Tau0 => {
            let (m1, m0) = terms.arm_means(&terms.surv_weighted);
            m1 - m0
        }
        EstimatorKind::Tau2 => {
            let p = need()?;
            let (a1, a0) = terms.arm_means(&terms.tau2_residual(p, g));
            model_mean(p, g) + (a1 - a0)
        }
        EstimatorKind::Tau3 => {
            let p = need()?;
            let (b1, b0) = terms.arm_means(&terms.tau3_residual(cohort, p, g, t));
            model_mean(p, g) + (b1 - b0)
        }
        EstimatorKind::Tau1 => unreachable!(),
    };
    Ok((value, terms.floored))
}

/// Crude IPCW estimator: difference of arm means of `I(Y > t) / pi(t)`.
pub fn tau0(cohort: &Cohort, cens: &CensoringModel, t: f64) -> Result<f64> {
    cohort.require_both_arms()?;
    Ok(point_value(EstimatorKind::Tau0, cohort, cens, None, 0, t)?.0)
}

/// Mean difference of held-out predictions at a time in the table.
pub fn tau1(preds: &PredictionTable, t: f64) -> Result<f64> {
    Ok(model_mean(preds, grid_index(preds, t)?))
}

pub fn tau2(cohort: &Cohort, cens: &CensoringModel, preds: &PredictionTable, t: f64) -> Result<f64> {
    cohort.require_both_arms()?;
    check_shapes(cohort, preds)?;
    let g = grid_index(preds, t)?;
    Ok(point_value(EstimatorKind::Tau2, cohort, cens, Some(preds), g, t)?.0)
}

pub fn tau3(cohort: &Cohort, cens: &CensoringModel, preds: &PredictionTable, t: f64) -> Result<f64> {
    cohort.require_both_arms()?;
    check_shapes(cohort, preds)?;
    let g = grid_index(preds, t)?;
    Ok(point_value(EstimatorKind::Tau3, cohort, cens, Some(preds), g, t)?.0)
}

/// Evaluate one estimator at every grid time. `preds` must be on the same grid.
pub fn ace_curve(
    kind: EstimatorKind,
    cohort: &Cohort,
    cens: &CensoringModel,
    preds: Option<&PredictionTable>,
    grid: &TimeGrid,
) -> Result<AceCurve> {
    cohort.require_both_arms()?;
    if let Some(p) = preds {
        check_shapes(cohort, p)?;
        if p.times() != grid.times() {
            return Err(Error::invalid("prediction table is on a different grid"));
        }
    }
    let mut estimates = Vec::with_capacity(grid.len());
    let mut floored_weights = 0;
    for (g, &t) in grid.times().iter().enumerate() {
        let (v, f) = point_value(kind, cohort, cens, preds, g, t)?;
        estimates.push(v);
        floored_weights += f;
    }
    Ok(AceCurve { kind, times: grid.times().to_vec(), estimates, floored_weights })
}

/// Coefficients `c` with `sum_k c_k f(t_k)` equal to the trapezoid rule for
/// `int w f / int w` on the grid. A single grid point gets coefficient 1.
pub fn quadrature_weights(times: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if times.len() != w.len() || times.is_empty() {
        return Err(Error::invalid("weights must match the grid"));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("weights are all zero"));
    }
    if times.len() == 1 {
        return Ok(vec![1.0]);
    }
    let mut c = vec![0.0; times.len()];
    for k in 0..times.len() - 1 {
        let h = 0.5 * (times[k + 1] - times[k]);
        c[k] += h * w[k];
        c[k + 1] += h * w[k + 1];
    }
    let total: f64 = c.iter().sum();
    if total == 0.0 {
        // weight on isolated points only: fall back to the weighted mean
        let s: f64 = w.iter().sum();
        return Ok(w.iter().map(|v| v / s).collect());
    }
    Ok(c.iter().map(|v| v / total).collect())
}

/// Time-averaged ACE `int w tau / int w` by the trapezoid rule.
pub fn average_ace(curve: &AceCurve, w: &[f64]) -> Result<f64> {
    let c = quadrature_weights(&curve.times, w)?;
    Ok(c.iter().zip(&curve.estimates).map(|(a, b)| a * b).sum())
}
