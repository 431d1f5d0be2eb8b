//! Survival data, product-limit curves and the censoring model used for
//! inverse probability of censoring weighting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower bound applied to estimated censoring survival weights.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn from_indicator(z: u8) -> Option<Arm> {
        match z {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treated),
            _ => None,
        }
    }

    pub fn indicator(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn flipped(self) -> Arm {
        match self {
            Arm::Control => Arm::Treated,
            Arm::Treated => Arm::Control,
        }
    }

    /// +1 for the treated arm, -1 for control.
    pub fn sign(self) -> f64 {
        match self {
            Arm::Control => -1.0,
            Arm::Treated => 1.0,
        }
    }
}

/// One subject: observed time `y = min(T, C)`, event flag `event = (T <= C)`,
/// arm and covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub y: f64,
    pub event: bool,
    pub arm: Arm,
    pub x: Vec<f64>,
}

impl SurvivalRecord {
    pub fn new(y: f64, event: bool, arm: Arm, x: Vec<f64>) -> Self {
        SurvivalRecord { y, event, arm, x }
    }

    /// `R(t)`: the subject is known to be uncensored on `[0, min(T, t)]`.
    ///
    /// An observed event counts as uncensored even when `y` ties a
    /// censoring time.
    pub fn risk_indicator(&self, t: f64) -> bool {
        self.event || self.y > t
    }

    /// Observable survival indicator `I(Y > t)`; equals `I(T > t)` whenever
    /// `R(t) = 1`.
    pub fn survives(&self, t: f64) -> bool {
        self.y > t
    }
}

/// Ordered collection of records sharing one covariate dimension.
///
/// Row order is the subject identity used by held-out predictions and
/// influence terms. `subject_ids` default to row indices; bootstrap
/// resamples carry the original ids so duplicated subjects can be
/// recognised.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    records: Vec<SurvivalRecord>,
    p: usize,
    subject_ids: Vec<usize>,
}

impl Cohort {
    pub fn new(records: Vec<SurvivalRecord>) -> Result<Self> {
        let ids = (0..records.len()).collect();
        Self::with_subject_ids(records, ids)
    }

    pub fn with_subject_ids(records: Vec<SurvivalRecord>, subject_ids: Vec<usize>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("cohort has no records"));
        }
        if subject_ids.len() != records.len() {
            return Err(Error::invalid("subject id count differs from record count"));
        }
        let p = records[0].x.len();
        for (i, r) in records.iter().enumerate() {
            if !r.y.is_finite() || r.y < 0.0 {
                return Err(Error::invalid(format!("record {i}: time {} is not a finite non-negative number", r.y)));
            }
            if r.x.len() != p {
                return Err(Error::invalid(format!("record {i}: {} covariates, expected {p}", r.x.len())));
            }
            if let Some(j) = r.x.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("record {i}: covariate {} is not finite", j + 1)));
            }
        }
        Ok(Cohort { records, p, subject_ids })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &SurvivalRecord {
        &self.records[i]
    }

    pub fn subject_id(&self, i: usize) -> usize {
        self.subject_ids[i]
    }

    pub fn subject_ids(&self) -> &[usize] {
        &self.subject_ids
    }

    pub fn arm_count(&self, arm: Arm) -> usize {
        self.records.iter().filter(|r| r.arm == arm).count()
    }

    /// `alpha_hat = n1 / n`.
    pub fn treated_fraction(&self) -> f64 {
        self.arm_count(Arm::Treated) as f64 / self.len() as f64
    }

    pub fn arm_rows(&self, arm: Arm) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.records[i].arm == arm).collect()
    }

    pub fn require_both_arms(&self) -> Result<()> {
        for arm in [Arm::Control, Arm::Treated] {
            if self.arm_count(arm) == 0 {
                return Err(Error::invalid(format!("{arm:?} arm has no subjects")));
            }
        }
        Ok(())
    }

    /// Rows `rows` (repeats allowed) as a new cohort keeping subject ids.
    pub fn resample(&self, rows: &[usize]) -> Cohort {
        Cohort {
            records: rows.iter().map(|&i| self.records[i].clone()).collect(),
            p: self.p,
            subject_ids: rows.iter().map(|&i| self.subject_ids[i]).collect(),
        }
    }

    /// Same cohort with treatment labels swapped.
    pub fn relabeled(&self) -> Cohort {
        let mut out = self.clone();
        for r in &mut out.records {
            r.arm = r.arm.flipped();
        }
        out
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }
}

/// Right-continuous step function with value `start` before the first jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    start: f64,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(start: f64, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::invalid("step function times and values differ in length"));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("step function jump times must be strictly increasing"));
        }
        Ok(StepFunction { start, times, values })
    }

    pub fn constant(value: f64) -> Self {
        StepFunction { start: value, times: Vec::new(), values: Vec::new() }
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `f(t)`: value at the last jump `<= t`.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&u| u <= t);
        if k == 0 {
            self.start
        } else {
            self.values[k - 1]
        }
    }

    /// `f(t-)`: value at the last jump strictly before `t`.
    pub fn eval_left(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&u| u < t);
        if k == 0 {
            self.start
        } else {
            self.values[k - 1]
        }
    }

    /// Evaluate at sorted `grid` with one forward walk.
    pub fn eval_sorted_into(&self, grid: &[f64], out: &mut [f64]) {
        let mut k = 0;
        let mut current = self.start;
        for (g, &t) in grid.iter().enumerate() {
            while k < self.times.len() && self.times[k] <= t {
                current = self.values[k];
                k += 1;
            }
            out[g] = current;
        }
    }
}

/// Survival function `S(t)` with `S(t) = 1` before the first jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve(StepFunction);

impl SurvivalCurve {
    pub fn from_steps(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("survival values must lie in [0, 1]"));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("survival values must be non-increasing"));
        }
        Ok(SurvivalCurve(StepFunction::new(1.0, times, values)?))
    }

    pub fn one() -> Self {
        SurvivalCurve(StepFunction::constant(1.0))
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.eval(t)
    }

    pub fn eval_left(&self, t: f64) -> f64 {
        self.0.eval_left(t)
    }

    pub fn eval_sorted_into(&self, grid: &[f64], out: &mut [f64]) {
        self.0.eval_sorted_into(grid, out)
    }

    pub fn jump_times(&self) -> &[f64] {
        self.0.times()
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }
}

/// Product-limit estimate from `(time, event)` pairs; input need not be sorted.
pub(crate) fn product_limit(obs: &mut [(f64, bool)]) -> SurvivalCurve {
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut surv = 1.0;
    let mut at_risk = obs.len();
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].0;
        let mut j = i;
        let mut deaths = 0usize;
        while j < obs.len() && obs[j].0 == t {
            deaths += obs[j].1 as usize;
            j += 1;
        }
        if deaths > 0 {
            surv *= 1.0 - deaths as f64 / at_risk as f64;
            times.push(t);
            values.push(surv);
        }
        at_risk -= j - i;
        i = j;
    }
    SurvivalCurve(StepFunction { start: 1.0, times, values })
}

/// Kaplan–Meier estimator.
pub fn km_fit(times: &[f64], events: &[bool]) -> Result<SurvivalCurve> {
    if times.is_empty() {
        return Err(Error::invalid("Kaplan-Meier fit needs at least one observation"));
    }
    if times.len() != events.len() {
        return Err(Error::invalid("times and events differ in length"));
    }
    if let Some(t) = times.iter().find(|t| !t.is_finite() || **t < 0.0) {
        return Err(Error::invalid(format!("time {t} is not a finite non-negative number")));
    }
    let mut obs: Vec<(f64, bool)> = times.iter().copied().zip(events.iter().copied()).collect();
    Ok(product_limit(&mut obs))
}

/// An inverse probability of censoring weight after flooring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpcwWeight {
    pub value: f64,
    pub floored: bool,
}

/// Kaplan–Meier model of the censoring distribution together with its
/// Nelson–Aalen cumulative hazard and the at-risk process.
#[derive(Debug, Clone)]
pub struct CensoringModel {
    curve: SurvivalCurve,
    cum_hazard: StepFunction,
    sorted_y: Vec<f64>,
    jump_times: Vec<f64>,
    jump_counts: Vec<usize>,
    jump_at_risk: Vec<usize>,
    /// Running sum of `n * dLambda_C(u_k) / r(u_k)` over censoring jumps.
    scaled_hazard_prefix: Vec<f64>,
    weight_floor: f64,
}

impl CensoringModel {
    pub fn fit(cohort: &Cohort) -> Self {
        let n = cohort.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| cohort.record(a).y.total_cmp(&cohort.record(b).y));
        let sorted_y: Vec<f64> = order.iter().map(|&i| cohort.record(i).y).collect();

        let mut jump_times = Vec::new();
        let mut jump_counts = Vec::new();
        let mut jump_at_risk = Vec::new();
        let mut surv_values = Vec::new();
        let mut hazard_values = Vec::new();
        let mut scaled_hazard_prefix = Vec::new();
        let (mut surv, mut hazard, mut scaled) = (1.0, 0.0, 0.0);
        let mut at_risk = n;
        let mut i = 0;
        while i < n {
            let t = sorted_y[i];
            let mut j = i;
            let mut censored = 0usize;
            while j < n && sorted_y[j] == t {
                censored += !cohort.record(order[j]).event as usize;
                j += 1;
            }
            if censored > 0 {
                let r = at_risk as f64;
                surv *= 1.0 - censored as f64 / r;
                hazard += censored as f64 / r;
                scaled += n as f64 * censored as f64 / (r * r);
                jump_times.push(t);
                jump_counts.push(censored);
                jump_at_risk.push(at_risk);
                surv_values.push(surv);
                hazard_values.push(hazard);
                scaled_hazard_prefix.push(scaled);
            }
            at_risk -= j - i;
            i = j;
        }
        CensoringModel {
            curve: SurvivalCurve(StepFunction { start: 1.0, times: jump_times.clone(), values: surv_values }),
            cum_hazard: StepFunction { start: 0.0, times: jump_times.clone(), values: hazard_values },
            sorted_y,
            jump_times,
            jump_counts,
            jump_at_risk,
            scaled_hazard_prefix,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
        }
    }

    pub fn with_weight_floor(mut self, floor: f64) -> Self {
        self.weight_floor = floor;
        self
    }

    pub fn weight_floor(&self) -> f64 {
        self.weight_floor
    }

    /// `S_C`, the censoring survival curve.
    pub fn curve(&self) -> &SurvivalCurve {
        &self.curve
    }

    /// `Lambda_C`, the Nelson–Aalen cumulative censoring hazard.
    pub fn cum_hazard(&self) -> &StepFunction {
        &self.cum_hazard
    }

    pub fn n(&self) -> usize {
        self.sorted_y.len()
    }

    /// Censoring jump times, censoring counts and risk-set sizes at each jump.
    pub fn censoring_jumps(&self) -> (&[f64], &[usize], &[usize]) {
        (&self.jump_times, &self.jump_counts, &self.jump_at_risk)
    }

    /// `sum_j I(Y_j >= s)`.
    pub fn at_risk(&self, s: f64) -> usize {
        self.sorted_y.len() - self.sorted_y.partition_point(|&y| y < s)
    }

    /// `pi_i(t) = S_C(min(t, Y_i)-)`, floored at the configured minimum.
    pub fn ipcw_weight(&self, record: &SurvivalRecord, t: f64) -> IpcwWeight {
        let raw = self.curve.eval_left(t.min(record.y));
        if raw < self.weight_floor {
            IpcwWeight { value: self.weight_floor, floored: true }
        } else {
            IpcwWeight { value: raw, floored: false }
        }
    }

    /// `M_Ci(s) = I(Y_i <= s, censored) - Lambda_C(min(s, Y_i))`.
    pub fn martingale_residual(&self, record: &SurvivalRecord, s: f64) -> f64 {
        let jump = (record.y <= s && !record.event) as u8 as f64;
        jump - self.cum_hazard.eval(s.min(record.y))
    }

    /// `int_0^t dM_Ci(s) / (n^-1 sum_j I(Y_j >= s))` evaluated exactly over
    /// the censoring jumps.
    pub fn scaled_martingale_integral(&self, record: &SurvivalRecord, t: f64) -> f64 {
        let n = self.n() as f64;
        let own = if !record.event && record.y <= t {
            let k = self.jump_index(record.y).expect("censored time is a censoring jump");
            n / self.jump_at_risk[k] as f64
        } else {
            0.0
        };
        own - self.scaled_hazard_up_to(t.min(record.y))
    }

    /// `int_0^u dLambda_C(s) / (n^-1 sum_j I(Y_j >= s))`.
    pub fn scaled_hazard_up_to(&self, u: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s <= u);
        if k == 0 {
            0.0
        } else {
            self.scaled_hazard_prefix[k - 1]
        }
    }

    fn jump_index(&self, t: f64) -> Option<usize> {
        self.jump_times.binary_search_by(|u| u.total_cmp(&t)).ok()
    }
}

/// Fits the censoring model by flipping event flags.
pub fn fit_censoring(cohort: &Cohort) -> CensoringModel {
    CensoringModel::fit(cohort)
}
