//! Browser demo: simulate a trial, estimate ACE curves with bands, and
//! compare them with the true curve. Every export takes and returns JSON.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use survace::adjust::{AdjustmentRecipe, ForestConfig};
use survace::estimators::{ace_curve, EstimatorKind, TimeGrid};
use survace::inference::{asymptotic_band, covariance, influence};
use survace::rng::{stream_rng, Stream};
use survace::simulation::{calibrate_t0_with, generate_cohort, true_ace_with, DgpSetting};
use survace::survival::{km_fit, Arm, CensoringModel, Cohort};

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct DemoParams {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub beta: f64,
    pub s0: f64,
    pub s1: f64,
    pub seed: u64,
    pub trees: usize,
    pub points: usize,
    pub level: f64,
    pub truth_draws: usize,
}

impl Default for DemoParams {
    fn default() -> Self {
        DemoParams {
            n: 200,
            p: 10,
            k: 10,
            beta: 0.5,
            s0: 0.5,
            s1: 0.5,
            seed: 1,
            trees: 100,
            points: 20,
            level: 0.95,
            truth_draws: 20_000,
        }
    }
}

impl DemoParams {
    fn setting(&self) -> DgpSetting {
        DgpSetting { n: self.n, ..DgpSetting::table_row(self.beta, self.p, self.k, self.s0, self.s1) }
    }
}

#[derive(Debug, Serialize)]
pub struct Step {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct CohortView {
    pub n: usize,
    pub events: usize,
    pub treated: usize,
    pub t0: f64,
    pub treated_km: Step,
    pub control_km: Step,
}

#[derive(Debug, Serialize)]
pub struct Band {
    pub estimator: String,
    pub estimate: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct EstimateView {
    pub times: Vec<f64>,
    pub bands: Vec<Band>,
}

#[derive(Debug, Serialize)]
pub struct TruthView {
    pub times: Vec<f64>,
    pub truth: Vec<f64>,
}

fn parse(json: &str) -> Result<DemoParams, String> {
    if json.trim().is_empty() {
        return Ok(DemoParams::default());
    }
    serde_json::from_str(json).map_err(|e| e.to_string())
}

fn cohort(params: &DemoParams) -> Result<Cohort, String> {
    generate_cohort(&params.setting(), &mut stream_rng(params.seed, Stream::Replicate, 0)).map_err(|e| e.to_string())
}

fn horizon(params: &DemoParams) -> Result<f64, String> {
    calibrate_t0_with(&params.setting(), 20_000).map_err(|e| e.to_string())
}

fn grid(params: &DemoParams) -> Result<TimeGrid, String> {
    TimeGrid::uniform(horizon(params)?, params.points.max(1)).map_err(|e| e.to_string())
}

fn arm_km(c: &Cohort, arm: Arm) -> Result<Step, String> {
    let rows = c.arm_rows(arm);
    let y: Vec<f64> = rows.iter().map(|&i| c.record(i).y).collect();
    let e: Vec<bool> = rows.iter().map(|&i| c.record(i).event).collect();
    let km = km_fit(&y, &e).map_err(|e| e.to_string())?;
    Ok(Step { times: km.jump_times().to_vec(), values: km.values().to_vec() })
}

/// Kaplan–Meier curve per arm for one simulated trial.
pub fn cohort_summary(json: &str) -> Result<String, String> {
    let params = parse(json)?;
    let c = cohort(&params)?;
    let view = CohortView {
        n: c.len(),
        events: c.records().iter().filter(|r| r.event).count(),
        treated: c.arm_count(Arm::Treated),
        t0: horizon(&params)?,
        treated_km: arm_km(&c, Arm::Treated)?,
        control_km: arm_km(&c, Arm::Control)?,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// `tau0`, `tau2` and `tau3` curves with pointwise influence-function bands.
pub fn estimate(json: &str) -> Result<String, String> {
    let params = parse(json)?;
    let c = cohort(&params)?;
    let grid = grid(&params)?;
    let cens = CensoringModel::fit(&c);
    let recipe = AdjustmentRecipe::Srf(ForestConfig { n_trees: params.trees.max(1), ..ForestConfig::for_dimension(params.p, params.seed) });
    let preds = recipe.fit_predict(&c, grid.times()).map_err(|e| e.to_string())?;
    let mut bands = Vec::new();
    for kind in [EstimatorKind::Tau0, EstimatorKind::Tau2, EstimatorKind::Tau3] {
        let curve = ace_curve(kind, &c, &cens, Some(&preds), &grid).map_err(|e| e.to_string())?;
        let cov = covariance(&influence(kind, &c, &cens, Some(&preds), &grid).map_err(|e| e.to_string())?);
        let band = asymptotic_band(&curve, &cov, params.level).map_err(|e| e.to_string())?;
        bands.push(Band { estimator: kind.label().to_string(), estimate: band.estimate, lower: band.lower, upper: band.upper });
    }
    serde_json::to_string(&EstimateView { times: grid.times().to_vec(), bands }).map_err(|e| e.to_string())
}

/// True ACE on the same grid, by Monte Carlo over covariates.
pub fn truth(json: &str) -> Result<String, String> {
    let params = parse(json)?;
    let grid = grid(&params)?;
    let setting = params.setting();
    let truth = grid
        .times()
        .iter()
        .map(|&t| true_ace_with(&setting, t, params.truth_draws.max(1)).map(|v| v.value))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| e.to_string())?;
    serde_json::to_string(&TruthView { times: grid.times().to_vec(), truth }).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = cohortSummary)]
pub fn cohort_summary_js(params: &str) -> Result<String, JsValue> {
    cohort_summary(params).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = estimateCurves)]
pub fn estimate_js(params: &str) -> Result<String, JsValue> {
    estimate(params).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = trueCurve)]
pub fn truth_js(params: &str) -> Result<String, JsValue> {
    truth(params).map_err(|e| JsValue::from_str(&e))
}
