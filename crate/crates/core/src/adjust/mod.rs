//! Per-arm conditional survival models `mu_z(t, x) = P(T > t | Z = z, X = x)`.
//!
//! Every backend predicts for a cohort row without using that row's
//! outcome: the forest through out-of-bag trees, the proportional hazards
//! fits through the full-sample fit (including one subject is asymptotically
//! equivalent to leaving it out for these low-complexity models).

mod cox;
mod forest;
mod lasso;

pub use cox::{fit_cox, fit_cox_with, CoxFit, CoxOptions, PhModel};
pub use forest::{fit_srf, log_rank_statistic, ForestConfig, SurvivalForest, SurvivalTree, TreeNode};
pub use lasso::{fit_lasso_cox, fit_lasso_cox_at, LassoCoxFit, LassoOptions, LassoPathPoint};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{Arm, Cohort};

/// A fitted survival model for one arm.
pub trait SurvivalPredictor: Send + Sync {
    fn arm(&self) -> Arm;

    /// `mu(t, x)` at each of the sorted `times`.
    fn predict(&self, x: &[f64], times: &[f64]) -> Vec<f64>;

    /// Prediction for cohort row `i` that does not depend on row `i`'s outcome.
    fn predict_held_out(&self, cohort: &Cohort, i: usize, times: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict(&cohort.record(i).x, times))
    }

    /// Held-out predictions for every row, row-major `n x times.len()`.
    fn predict_held_out_all(&self, cohort: &Cohort, times: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(cohort.len() * times.len());
        for i in 0..cohort.len() {
            out.extend(self.predict_held_out(cohort, i, times)?);
        }
        Ok(out)
    }
}

/// Held-out predictions `mu^(1,-i)(t, X_i)` and `mu^(0,-i)(t, X_i)` for every
/// subject on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    times: Vec<f64>,
    n: usize,
    treated: Vec<f64>,
    control: Vec<f64>,
}

impl PredictionTable {
    /// Row-major `n x times.len()` tables for both arms.
    pub fn new(times: Vec<f64>, treated: Vec<f64>, control: Vec<f64>) -> Result<Self> {
        let g = times.len();
        if g == 0 || treated.len() % g != 0 || treated.len() != control.len() {
            return Err(Error::invalid("prediction table shape mismatch"));
        }
        if treated.iter().chain(&control).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("predictions must lie in [0, 1]"));
        }
        Ok(PredictionTable { n: treated.len() / g, times, treated, control })
    }

    /// Every subject gets the same `(c1, c0)` at every time.
    pub fn constant(n: usize, times: Vec<f64>, treated: f64, control: f64) -> Result<Self> {
        let size = n * times.len();
        Self::new(times, vec![treated; size], vec![control; size])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, arm: Arm, i: usize, g: usize) -> f64 {
        let k = i * self.times.len() + g;
        match arm {
            Arm::Treated => self.treated[k],
            Arm::Control => self.control[k],
        }
    }

    /// Swap the two prediction columns (pairs with `Cohort::relabeled`).
    pub fn swapped(&self) -> Self {
        PredictionTable {
            times: self.times.clone(),
            n: self.n,
            treated: self.control.clone(),
            control: self.treated.clone(),
        }
    }
}

/// Assemble held-out predictions for every subject and both arms.
pub fn predict_pair(
    treated: &dyn SurvivalPredictor,
    control: &dyn SurvivalPredictor,
    cohort: &Cohort,
    times: &[f64],
) -> Result<PredictionTable> {
    if treated.arm() != Arm::Treated || control.arm() != Arm::Control {
        return Err(Error::invalid("predict_pair expects (treated, control) models"));
    }
    let t = treated.predict_held_out_all(cohort, times)?;
    let c = control.predict_held_out_all(cohort, times)?;
    PredictionTable::new(times.to_vec(), t, c)
}

/// Which adjustment model family to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Cox,
    Lasso,
    Srf,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cox" => Ok(Backend::Cox),
            "lasso" => Ok(Backend::Lasso),
            "srf" | "rf" | "forest" => Ok(Backend::Srf),
            other => Err(Error::invalid(format!("unknown backend `{other}`"))),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Cox => "cox",
            Backend::Lasso => "lasso",
            Backend::Srf => "srf",
        })
    }
}

/// A complete recipe for fitting both arm models on a cohort. Used for the
/// main fit and re-applied inside bootstrap replicates.
#[derive(Debug, Clone, PartialEq)]
pub enum AdjustmentRecipe {
    Cox(CoxOptions),
    Lasso(LassoOptions),
    Srf(ForestConfig),
}

impl AdjustmentRecipe {
    pub fn default_for(backend: Backend, p: usize, seed: u64) -> Self {
        match backend {
            Backend::Cox => AdjustmentRecipe::Cox(CoxOptions::default()),
            Backend::Lasso => AdjustmentRecipe::Lasso(LassoOptions::default()),
            Backend::Srf => AdjustmentRecipe::Srf(ForestConfig::for_dimension(p, seed)),
        }
    }

    pub fn backend(&self) -> Backend {
        match self {
            AdjustmentRecipe::Cox(_) => Backend::Cox,
            AdjustmentRecipe::Lasso(_) => Backend::Lasso,
            AdjustmentRecipe::Srf(_) => Backend::Srf,
        }
    }

    /// The recipe refitted inside a bootstrap resample: new forest seed, and
    /// subjects drawn so often that no tree leaves them out get full-forest
    /// predictions.
    pub fn for_resample(&self, seed: u64) -> Self {
        match self {
            AdjustmentRecipe::Srf(cfg) => {
                AdjustmentRecipe::Srf(ForestConfig { seed, full_forest_fallback: true, ..cfg.clone() })
            }
            other => other.clone(),
        }
    }

    /// The same recipe with a new forest seed (no effect on Cox or lasso).
    pub fn reseeded(&self, seed: u64) -> Self {
        match self {
            AdjustmentRecipe::Srf(cfg) => AdjustmentRecipe::Srf(ForestConfig { seed, ..cfg.clone() }),
            other => other.clone(),
        }
    }

    pub fn fit_arm(&self, cohort: &Cohort, arm: Arm) -> Result<Box<dyn SurvivalPredictor>> {
        Ok(match self {
            AdjustmentRecipe::Cox(opts) => Box::new(fit_cox_with(cohort, arm, opts)?),
            AdjustmentRecipe::Lasso(opts) => Box::new(fit_lasso_cox(cohort, arm, opts)?),
            AdjustmentRecipe::Srf(cfg) => {
                // Different streams per arm from one seed.
                let mut cfg = cfg.clone();
                if arm == Arm::Control {
                    cfg.seed = cfg.seed.wrapping_add(0x5851_F42D_4C95_7F2D);
                }
                Box::new(fit_srf(cohort, arm, &cfg)?)
            }
        })
    }

    /// Fit both arms and return held-out predictions on `times`.
    pub fn fit_predict(&self, cohort: &Cohort, times: &[f64]) -> Result<PredictionTable> {
        let treated = self.fit_arm(cohort, Arm::Treated)?;
        let control = self.fit_arm(cohort, Arm::Control)?;
        predict_pair(treated.as_ref(), control.as_ref(), cohort, times)
    }
}

/// Rows of `cohort` in `arm` as `(y, event, x)` training data.
pub(crate) fn arm_data(cohort: &Cohort, arm: Arm) -> (Vec<usize>, Vec<f64>, Vec<bool>, Vec<Vec<f64>>) {
    let rows = cohort.arm_rows(arm);
    let y = rows.iter().map(|&i| cohort.record(i).y).collect();
    let e = rows.iter().map(|&i| cohort.record(i).event).collect();
    let x = rows.iter().map(|&i| cohort.record(i).x.clone()).collect();
    (rows, y, e, x)
}
