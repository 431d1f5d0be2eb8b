mod common;

use proptest::prelude::*;

use survace::adjust::PredictionTable;
use survace::estimators::{average_ace, ace_curve, quadrature_weights, tau0, tau1, tau3, AceCurve, EstimatorKind, TimeGrid};
use survace::inference::{covariance, influence};
use survace::survival::{km_fit, Arm, CensoringModel, Cohort, SurvivalRecord};

use common::{collapse_deviation, oracle_deviation, random_case};

fn cohort(rows: &[(f64, bool, u8)]) -> Cohort {
    Cohort::new(rows.iter().map(|&(y, e, z)| SurvivalRecord::new(y, e, Arm::from_indicator(z).unwrap(), vec![])).collect())
        .unwrap()
}

#[test]
fn crate_matches_direct_summation_on_random_cohorts() {
    let mut worst = [0.0f64; 5];
    for seed in 0..200 {
        let dev = oracle_deviation(&random_case(seed, 0.35));
        for k in 0..5 {
            worst[k] = worst[k].max(dev[k]);
        }
    }
    for (name, d) in ["km", "censoring", "estimators", "influence", "covariance"].iter().zip(worst) {
        assert!(d <= 1e-10, "{name}: {d:e}");
    }
}

#[test]
fn heavy_censoring_still_matches() {
    for seed in 1000..1050 {
        let dev = oracle_deviation(&random_case(seed, 0.8));
        assert!(dev.iter().all(|&d| d <= 1e-10), "seed {seed}: {dev:?}");
    }
}

#[test]
fn algebraic_collapses_hold() {
    for seed in 0..200 {
        let dev = collapse_deviation(seed);
        assert!(dev.iter().all(|&d| d <= 1e-12), "seed {seed}: {dev:?}");
    }
}

#[test]
fn km_hand_values() {
    let s = km_fit(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
    assert!((s.eval(2.5) - 1.0 / 3.0).abs() < 1e-15);
    let s = km_fit(&[1.0, 2.0, 3.0], &[false, false, false]).unwrap();
    assert_eq!(s.eval(10.0), 1.0);
    let s = km_fit(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
    assert!((s.eval(2.0) - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(s.eval(3.0), 0.0);
    assert!(km_fit(&[], &[]).is_err());
    assert!(km_fit(&[-1.0], &[true]).is_err());
}

#[test]
fn censoring_hand_values() {
    let c = CensoringModel::fit(&cohort(&[(1.0, true, 1), (2.0, false, 0)]));
    assert_eq!(c.curve().eval(2.0), 0.0);
    let c = CensoringModel::fit(&cohort(&[(1.0, true, 1), (2.0, false, 0), (3.0, true, 1), (4.0, false, 0)]));
    assert_eq!(c.curve().jump_times(), &[2.0, 4.0]);
    assert!((c.curve().eval(2.0) - 2.0 / 3.0).abs() < 1e-15);
    let none = CensoringModel::fit(&cohort(&[(1.0, true, 1), (2.0, true, 0)]));
    assert_eq!(none.curve().eval(5.0), 1.0);
    assert_eq!(none.cum_hazard().eval(5.0), 0.0);
}

#[test]
fn ipcw_uses_the_left_limit() {
    // S_C steps to 0.75 at u = 2
    let c = cohort(&[(1.0, true, 1), (2.0, false, 0), (2.5, true, 1), (5.0, true, 0), (6.0, true, 1)]);
    let m = CensoringModel::fit(&c);
    assert!((m.curve().eval(2.0) - 0.75).abs() < 1e-15);
    let later = SurvivalRecord::new(5.0, true, Arm::Treated, vec![]);
    assert!((m.ipcw_weight(&later, 3.0).value - 0.75).abs() < 1e-15);
    let early = SurvivalRecord::new(1.5, true, Arm::Treated, vec![]);
    assert_eq!(m.ipcw_weight(&early, 3.0).value, 1.0);
    let own = c.record(1);
    assert_eq!(m.ipcw_weight(own, 3.0).value, 1.0);
}

#[test]
fn tau0_without_censoring_is_a_survival_difference() {
    let c = cohort(&[(5.0, true, 1), (1.0, true, 1), (5.0, true, 0), (5.0, true, 0)]);
    let m = CensoringModel::fit(&c);
    assert!((tau0(&c, &m, 2.0).unwrap() + 0.5).abs() < 1e-15);
    let same = cohort(&[(1.0, true, 1), (2.0, false, 1), (1.0, true, 0), (2.0, false, 0)]);
    assert_eq!(tau0(&same, &CensoringModel::fit(&same), 1.5).unwrap(), 0.0);
}

#[test]
fn tau1_is_the_mean_prediction_difference() {
    let p = PredictionTable::new(vec![1.0], vec![0.9, 0.5, 0.3], vec![0.6, 0.5, 0.1]).unwrap();
    assert!((tau1(&p, 1.0).unwrap() - (0.3 + 0.0 + 0.2) / 3.0).abs() < 1e-15);
    let zero = PredictionTable::constant(3, vec![0.0], 1.0, 1.0).unwrap();
    assert_eq!(tau1(&zero, 0.0).unwrap(), 0.0);
}

#[test]
fn perfect_predictions_make_tau3_equal_tau1() {
    let c = cohort(&[(0.5, true, 1), (2.0, false, 1), (3.0, true, 1), (0.7, false, 0), (1.5, true, 0), (4.0, true, 0)]);
    let m = CensoringModel::fit(&c);
    let t = 1.0;
    let truth: Vec<f64> = c.records().iter().map(|r| (r.y > t) as u8 as f64).collect();
    let p = PredictionTable::new(vec![t], truth.clone(), truth).unwrap();
    assert!((tau3(&c, &m, &p, t).unwrap() - tau1(&p, t).unwrap()).abs() < 1e-15);
}

#[test]
fn curves_start_at_zero() {
    let case = random_case(5, 0.3);
    let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
    let m = CensoringModel::fit(&case.cohort);
    let p = PredictionTable::constant(case.cohort.len(), grid.times().to_vec(), 1.0, 1.0).unwrap();
    for kind in EstimatorKind::ALL {
        assert_eq!(ace_curve(kind, &case.cohort, &m, Some(&p), &grid).unwrap().estimates[0], 0.0);
    }
}

#[test]
fn trapezoid_average() {
    let curve = AceCurve { kind: EstimatorKind::Tau0, times: vec![1.0, 2.0], estimates: vec![0.0, 0.2], floored_weights: 0 };
    assert!((average_ace(&curve, &[1.0, 1.0]).unwrap() - 0.1).abs() < 1e-15);
    assert!(average_ace(&curve, &[0.0, 0.0]).is_err());
    let flat = AceCurve { estimates: vec![0.3, 0.3], ..curve.clone() };
    assert!((average_ace(&flat, &[1.0, 1.0]).unwrap() - 0.3).abs() < 1e-15);
    let c = quadrature_weights(&[1.0], &[2.0]).unwrap();
    assert_eq!(c, vec![1.0]);
}

#[test]
fn no_censoring_constant_prediction_variance_is_two_sample() {
    let case = random_case(77, 0.0);
    let c = &case.cohort;
    let m = CensoringModel::fit(c);
    let grid = TimeGrid::single(1.0).unwrap();
    let p = PredictionTable::constant(c.len(), vec![1.0], 0.4, 0.7).unwrap();
    let cov = covariance(&influence(EstimatorKind::Tau3, c, &m, Some(&p), &grid).unwrap());
    let var = |arm| {
        let v: Vec<f64> = c.arm_rows(arm).iter().map(|&i| (c.record(i).y > 1.0) as u8 as f64).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64
    };
    let n = c.len() as f64;
    let (n1, n0) = (c.arm_count(Arm::Treated) as f64, c.arm_count(Arm::Control) as f64);
    let classical = var(Arm::Treated) / n1 + var(Arm::Control) / n0;
    assert!((cov.matrix[(0, 0)] / n - classical).abs() < 1e-10);
}

fn arb_rows() -> impl Strategy<Value = Vec<(f64, bool, u8)>> {
    prop::collection::vec(((0u32..40).prop_map(|k| k as f64 / 8.0), any::<bool>(), 0u8..2), 2..40)
        .prop_filter("both arms", |r| r.iter().any(|x| x.2 == 0) && r.iter().any(|x| x.2 == 1))
}

proptest! {
    #[test]
    fn km_is_monotone_and_bounded(rows in arb_rows()) {
        let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let e: Vec<bool> = rows.iter().map(|r| r.1).collect();
        let s = km_fit(&y, &e).unwrap();
        let mut prev = 1.0;
        for k in 0..45 {
            let v = s.eval(k as f64 / 8.0);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn uncensored_km_is_empirical_survival(ys in prop::collection::vec((0u32..30).prop_map(|k| k as f64 / 4.0), 1..40), t in 0.0f64..8.0) {
        let s = km_fit(&ys, &vec![true; ys.len()]).unwrap();
        let frac = ys.iter().filter(|&&y| y > t).count() as f64 / ys.len() as f64;
        prop_assert!((s.eval(t) - frac).abs() < 1e-12);
    }

    #[test]
    fn martingale_residuals_sum_to_zero(rows in arb_rows()) {
        let c = cohort(&rows);
        let m = CensoringModel::fit(&c);
        let (jumps, _, _) = m.censoring_jumps();
        for &s in jumps {
            let total: f64 = c.records().iter().map(|r| m.martingale_residual(r, s)).sum();
            prop_assert!(total.abs() < 1e-10);
        }
    }

    #[test]
    fn ipcw_weight_is_nonincreasing_in_t(rows in arb_rows()) {
        let c = cohort(&rows);
        let m = CensoringModel::fit(&c);
        for r in c.records() {
            let mut prev = 1.0;
            for k in 0..45 {
                let w = m.ipcw_weight(r, k as f64 / 8.0).value;
                prop_assert!(w <= prev && w > 0.0);
                prev = w;
            }
        }
    }

    #[test]
    fn covariance_is_symmetric_psd(seed in 0u64..10_000) {
        let case = random_case(seed, 0.4);
        let m = CensoringModel::fit(&case.cohort);
        for kind in [EstimatorKind::Tau0, EstimatorKind::Tau2, EstimatorKind::Tau3] {
            let cov = covariance(&influence(kind, &case.cohort, &m, Some(&case.preds), &case.grid).unwrap());
            prop_assert!(cov.is_symmetric(1e-12));
            prop_assert!(cov.is_psd());
        }
    }
}
