//! Brute-force oracles shared by the oracle and acceptance suites. Every
//! quantity is recomputed by looping over the defining sums, with no use of
//! the crate's step functions or risk-set bookkeeping.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use survace::adjust::PredictionTable;
use survace::estimators::{ace_curve, EstimatorKind, TimeGrid};
use survace::inference::{covariance, influence};
use survace::survival::{km_fit, Arm, CensoringModel, Cohort, SurvivalRecord, DEFAULT_WEIGHT_FLOOR};

pub struct Case {
    pub cohort: Cohort,
    pub grid: TimeGrid,
    pub preds: PredictionTable,
}

/// Small cohort with tied times (multiples of 0.25), both arms present.
pub fn random_cohort(rng: &mut ChaCha8Rng, n: usize, censor_rate: f64) -> Cohort {
    loop {
        let records: Vec<SurvivalRecord> = (0..n)
            .map(|_| {
                let y = (rng.random_range(0.0..3.0f64) * 4.0).round() / 4.0;
                let event = rng.random::<f64>() >= censor_rate;
                let arm = if rng.random::<bool>() { Arm::Treated } else { Arm::Control };
                SurvivalRecord::new(y, event, arm, vec![rng.random(), rng.random()])
            })
            .collect();
        let c = Cohort::new(records).unwrap();
        if c.arm_count(Arm::Treated) > 0 && c.arm_count(Arm::Control) > 0 {
            return c;
        }
    }
}

/// Grid mixing observed times (so ties with `Y` are exercised) and off-data points.
pub fn random_grid(rng: &mut ChaCha8Rng, cohort: &Cohort) -> TimeGrid {
    let mut t: Vec<f64> = (0..4).map(|_| cohort.record(rng.random_range(0..cohort.len())).y).collect();
    t.extend((0..3).map(|_| rng.random_range(0.0..3.2)));
    t.sort_by(f64::total_cmp);
    t.dedup();
    TimeGrid::new(t).unwrap()
}

pub fn random_predictions(rng: &mut ChaCha8Rng, n: usize, grid: &TimeGrid) -> PredictionTable {
    let size = n * grid.len();
    let t: Vec<f64> = (0..size).map(|_| rng.random()).collect();
    let c: Vec<f64> = (0..size).map(|_| rng.random()).collect();
    PredictionTable::new(grid.times().to_vec(), t, c).unwrap()
}

pub fn random_case(seed: u64, censor_rate: f64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..=30);
    let cohort = random_cohort(&mut rng, n, censor_rate);
    let grid = random_grid(&mut rng, &cohort);
    let preds = random_predictions(&mut rng, n, &grid);
    Case { cohort, grid, preds }
}

fn distinct_times(y: &[f64]) -> Vec<f64> {
    let mut s = y.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

/// Product-limit value at `t`, or just before `t` when `left`.
pub fn km_oracle(y: &[f64], event: &[bool], t: f64, left: bool) -> f64 {
    let mut surv = 1.0;
    for s in distinct_times(y) {
        if s > t || (left && s == t) {
            break;
        }
        let d = (0..y.len()).filter(|&i| y[i] == s && event[i]).count() as f64;
        let r = y.iter().filter(|&&u| u >= s).count() as f64;
        surv *= 1.0 - d / r;
    }
    surv
}

fn censored(c: &Cohort) -> Vec<bool> {
    c.records().iter().map(|r| !r.event).collect()
}

pub fn censoring_survival_oracle(c: &Cohort, t: f64, left: bool) -> f64 {
    km_oracle(&c.times(), &censored(c), t, left)
}

/// Nelson–Aalen for censoring.
pub fn censoring_hazard_oracle(c: &Cohort, t: f64) -> f64 {
    let y = c.times();
    let flags = censored(c);
    distinct_times(&y)
        .into_iter()
        .filter(|&s| s <= t)
        .map(|s| {
            let d = (0..y.len()).filter(|&i| y[i] == s && flags[i]).count() as f64;
            let r = y.iter().filter(|&&u| u >= s).count() as f64;
            d / r
        })
        .sum()
}

pub fn pi_oracle(c: &Cohort, i: usize, t: f64) -> f64 {
    censoring_survival_oracle(c, t.min(c.record(i).y), true).max(DEFAULT_WEIGHT_FLOOR)
}

fn surv(c: &Cohort, i: usize, t: f64) -> f64 {
    (c.record(i).y > t) as u8 as f64
}

fn risk(c: &Cohort, i: usize, t: f64) -> f64 {
    let r = c.record(i);
    (r.event || r.y > t) as u8 as f64
}

fn arm_mean(c: &Cohort, v: &[f64], arm: Arm) -> f64 {
    let (mut s, mut m) = (0.0, 0.0);
    for i in 0..c.len() {
        if c.record(i).arm == arm {
            s += v[i];
            m += 1.0;
        }
    }
    s / m
}

fn mu(p: &PredictionTable, arm: Arm, i: usize, g: usize) -> f64 {
    p.get(arm, i, g)
}

fn own_arm(c: &Cohort, i: usize) -> Arm {
    c.record(i).arm
}

/// `I(Y > t) / pi`, `I(Y > t)/pi - mu^Z`, `R (I(Y > t) - mu^Z) / pi`.
fn residuals(c: &Cohort, p: &PredictionTable, g: usize, t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let w: Vec<f64> = (0..c.len()).map(|i| surv(c, i, t) / pi_oracle(c, i, t)).collect();
    let r2 = (0..c.len()).map(|i| w[i] - mu(p, own_arm(c, i), i, g)).collect();
    let r3 = (0..c.len())
        .map(|i| risk(c, i, t) * (surv(c, i, t) - mu(p, own_arm(c, i), i, g)) / pi_oracle(c, i, t))
        .collect();
    (w, r2, r3)
}

fn model_diff(c: &Cohort, p: &PredictionTable, g: usize) -> f64 {
    (0..c.len()).map(|i| mu(p, Arm::Treated, i, g) - mu(p, Arm::Control, i, g)).sum::<f64>() / c.len() as f64
}

pub fn estimator_oracle(kind: EstimatorKind, c: &Cohort, p: &PredictionTable, g: usize, t: f64) -> f64 {
    let (w, r2, r3) = residuals(c, p, g, t);
    let contrast = |v: &[f64]| arm_mean(c, v, Arm::Treated) - arm_mean(c, v, Arm::Control);
    match kind {
        EstimatorKind::Tau0 => contrast(&w),
        EstimatorKind::Tau1 => model_diff(c, p, g),
        EstimatorKind::Tau2 => model_diff(c, p, g) + contrast(&r2),
        EstimatorKind::Tau3 => model_diff(c, p, g) + contrast(&r3),
    }
}

/// Censoring part: `tau0(t) * sum_{s <= t} {dN_Ci(s) - I(Y_i >= s) dLambda_C(s)} / (r(s)/n)`.
pub fn u3_oracle(c: &Cohort, i: usize, t: f64, tau0: f64) -> f64 {
    let y = c.times();
    let flags = censored(c);
    let n = c.len() as f64;
    let mut total = 0.0;
    for s in distinct_times(&y) {
        if s > t {
            break;
        }
        let d = (0..y.len()).filter(|&j| y[j] == s && flags[j]).count() as f64;
        let r = y.iter().filter(|&&u| u >= s).count() as f64;
        let dn = (y[i] == s && flags[i]) as u8 as f64;
        let at_risk = (y[i] >= s) as u8 as f64;
        total += (dn - at_risk * d / r) / (r / n);
    }
    tau0 * total
}

/// `(outcome part, censoring part)` for subject `i`.
pub fn influence_oracle(kind: EstimatorKind, c: &Cohort, p: &PredictionTable, i: usize, g: usize, t: f64) -> (f64, f64) {
    let (w, r2, r3) = residuals(c, p, g, t);
    let alpha = c.arm_count(Arm::Treated) as f64 / c.len() as f64;
    let arm = own_arm(c, i);
    let bracket = if arm == Arm::Treated { 1.0 / alpha } else { -1.0 / (1.0 - alpha) };
    let centred = |v: &[f64]| bracket * (v[i] - arm_mean(c, v, arm));
    let d = mu(p, Arm::Treated, i, g) - mu(p, Arm::Control, i, g) - model_diff(c, p, g);
    let outcome = match kind {
        EstimatorKind::Tau0 => centred(&w),
        EstimatorKind::Tau2 => d + centred(&r2),
        EstimatorKind::Tau3 => d + centred(&r3),
        EstimatorKind::Tau1 => unreachable!(),
    };
    let tau0 = arm_mean(c, &w, Arm::Treated) - arm_mean(c, &w, Arm::Control);
    (outcome, u3_oracle(c, i, t, tau0))
}

/// Largest absolute deviation between the crate and the oracles over one case,
/// per component: `[km, censoring, estimators, influence, covariance]`.
pub fn oracle_deviation(case: &Case) -> [f64; 5] {
    let Case { cohort: c, grid, preds } = case;
    let mut dev = [0.0f64; 5];
    let mut bump = |k: usize, a: f64, b: f64| dev[k] = dev[k].max((a - b).abs());

    let y = c.times();
    let e = c.events();
    let km = km_fit(&y, &e).unwrap();
    let cens = CensoringModel::fit(c);
    let mut probes: Vec<f64> = y.clone();
    probes.extend(grid.times());
    probes.extend([0.0, 0.1, 1.3, 2.9, 5.0]);
    for &t in &probes {
        bump(0, km.eval(t), km_oracle(&y, &e, t, false));
        bump(0, km.eval_left(t), km_oracle(&y, &e, t, true));
        bump(1, cens.curve().eval(t), censoring_survival_oracle(c, t, false));
        bump(1, cens.curve().eval_left(t), censoring_survival_oracle(c, t, true));
        bump(1, cens.cum_hazard().eval(t), censoring_hazard_oracle(c, t));
        for i in 0..c.len() {
            bump(1, cens.ipcw_weight(c.record(i), t).value, pi_oracle(c, i, t));
        }
    }

    for kind in EstimatorKind::ALL {
        let curve = ace_curve(kind, c, &cens, Some(preds), grid).unwrap();
        let table = kind.has_influence().then(|| influence(kind, c, &cens, Some(preds), grid).unwrap());
        for (g, &t) in grid.times().iter().enumerate() {
            bump(2, curve.estimates[g], estimator_oracle(kind, c, preds, g, t));
            if let Some(table) = &table {
                for i in 0..c.len() {
                    let (o, u3) = influence_oracle(kind, c, preds, i, g, t);
                    bump(3, table.outcome_part(i, g), o);
                    bump(3, table.censoring_part(i, g), u3);
                }
            }
        }
        if let Some(table) = &table {
            let cov = covariance(table);
            let gl = grid.len();
            let u: Vec<Vec<f64>> = (0..c.len())
                .map(|i| {
                    (0..gl)
                        .map(|g| {
                            let (o, u3) = influence_oracle(kind, c, preds, i, g, grid.times()[g]);
                            o + u3
                        })
                        .collect()
                })
                .collect();
            for g in 0..gl {
                for h in 0..gl {
                    let a = u.iter().map(|r| r[g] * r[h]).sum::<f64>() / c.len() as f64;
                    bump(4, cov.matrix[(g, h)], a);
                }
            }
        }
    }
    dev
}

/// Largest deviations in the exact algebraic identities over one case:
/// `[const-prediction tau2 - tau0, no-censoring tau2 - tau3, no-censoring |U3|, relabel tau + tau']`.
pub fn collapse_deviation(seed: u64) -> [f64; 4] {
    let mut dev = [0.0f64; 4];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..=30);

    let c = random_cohort(&mut rng, n, 0.35);
    let grid = random_grid(&mut rng, &c);
    let cens = CensoringModel::fit(&c);
    let (c1, c0) = (rng.random::<f64>(), rng.random::<f64>());
    let constant = PredictionTable::constant(n, grid.times().to_vec(), c1, c0).unwrap();
    let t0 = ace_curve(EstimatorKind::Tau0, &c, &cens, None, &grid).unwrap();
    let t2 = ace_curve(EstimatorKind::Tau2, &c, &cens, Some(&constant), &grid).unwrap();
    for g in 0..grid.len() {
        dev[0] = dev[0].max((t2.estimates[g] - t0.estimates[g]).abs());
    }

    let uncensored = Cohort::new(
        c.records().iter().map(|r| SurvivalRecord::new(r.y, true, r.arm, r.x.clone())).collect(),
    )
    .unwrap();
    let ucens = CensoringModel::fit(&uncensored);
    let preds = random_predictions(&mut rng, n, &grid);
    let a = ace_curve(EstimatorKind::Tau2, &uncensored, &ucens, Some(&preds), &grid).unwrap();
    let b = ace_curve(EstimatorKind::Tau3, &uncensored, &ucens, Some(&preds), &grid).unwrap();
    for g in 0..grid.len() {
        dev[1] = dev[1].max((a.estimates[g] - b.estimates[g]).abs());
    }
    for kind in [EstimatorKind::Tau0, EstimatorKind::Tau2, EstimatorKind::Tau3] {
        let table = influence(kind, &uncensored, &ucens, Some(&preds), &grid).unwrap();
        dev[2] = dev[2].max(table.censoring.iter().fold(0.0, |m, v| m.max(v.abs())));
    }

    let flipped = c.relabeled();
    let fcens = CensoringModel::fit(&flipped);
    let swapped = preds.swapped();
    for kind in EstimatorKind::ALL {
        let x = ace_curve(kind, &c, &cens, Some(&preds), &grid).unwrap();
        let y = ace_curve(kind, &flipped, &fcens, Some(&swapped), &grid).unwrap();
        for g in 0..grid.len() {
            dev[3] = dev[3].max((x.estimates[g] + y.estimates[g]).abs());
        }
    }
    dev
}
