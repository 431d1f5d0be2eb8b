//! Cohort CSV files, run configuration, and the `estimate` / `simulate`
//! pipelines that write curve, summary and Monte Carlo tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adjust::{AdjustmentRecipe, Backend, ForestConfig, LassoOptions, CoxOptions};
use crate::error::{Error, Result};
use crate::estimators::{ace_curve, quadrature_weights, AceCurve, EstimatorKind, TimeGrid};
use crate::inference::{
    asymptotic_band, bootstrap_replicates, covariance, influence, sample_sd, wald_p_value, BootstrapOptions,
    ConfidenceBand,
};
use crate::simulation::{calibrate_t0_with, run_study, DgpSetting, McReport, StudyConfig};
use crate::survival::{Arm, CensoringModel, Cohort, SurvivalRecord, DEFAULT_WEIGHT_FLOOR};

/// Environment variable that overrides the output directory.
pub const OUT_ENV: &str = "SURVACE_OUT";

fn parse_error(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse { row, column: column.to_string(), message: message.into() }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}

/// Read a cohort with columns `time`, `event`, `arm`, `x1..xp`. Rows are
/// numbered from 1 after the header.
pub fn load_cohort(path: &Path) -> Result<Cohort> {
    let text = fs::read_to_string(path)?;
    parse_cohort(&text)
}

pub fn parse_cohort(text: &str) -> Result<Cohort> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| parse_error(0, name, "missing column"))
    };
    let (ti, ei, ai) = (find("time")?, find("event")?, find("arm")?);
    let mut covariates = Vec::new();
    for (c, h) in headers.iter().enumerate() {
        if c == ti || c == ei || c == ai {
            continue;
        }
        match h.strip_prefix('x').and_then(|k| k.parse::<usize>().ok()) {
            Some(k) if k == covariates.len() + 1 => covariates.push(c),
            _ => return Err(parse_error(0, h, format!("expected covariate column x{}", covariates.len() + 1))),
        }
    }
    let mut records = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| parse_error(row, "", e.to_string()))?;
        let cell = |c: usize| -> Result<f64> {
            let raw = rec.get(c).ok_or_else(|| parse_error(row, &headers[c], "missing cell"))?;
            raw.parse::<f64>().map_err(|_| parse_error(row, &headers[c], format!("`{raw}` is not a number")))
        };
        let y = cell(ti)?;
        if !y.is_finite() || y < 0.0 {
            return Err(parse_error(row, "time", format!("{y} is not a non-negative time")));
        }
        let flag = |c: usize, name: &str| -> Result<u8> {
            match cell(c)? {
                v if v == 0.0 => Ok(0),
                v if v == 1.0 => Ok(1),
                v => Err(parse_error(row, name, format!("{v} is not 0 or 1"))),
            }
        };
        let event = flag(ei, "event")? == 1;
        let arm = Arm::from_indicator(flag(ai, "arm")?).expect("0 or 1");
        let x = covariates.iter().map(|&c| cell(c)).collect::<Result<Vec<f64>>>()?;
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(parse_error(row, &headers[covariates[j]], "covariate is not finite"));
        }
        records.push(SurvivalRecord::new(y, event, arm, x));
    }
    let cohort = Cohort::new(records)?;
    for arm in [Arm::Control, Arm::Treated] {
        if cohort.arm_count(arm) == 0 {
            return Err(parse_error(0, "arm", format!("no subjects with arm = {}", arm.indicator())));
        }
    }
    Ok(cohort)
}

/// Shortest round-trip decimal; non-finite values become `NA`.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".to_string()
    }
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(csv_error)?)
}

pub fn save_cohort(cohort: &Cohort, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["time".to_string(), "event".into(), "arm".into()];
    header.extend((1..=cohort.p()).map(|j| format!("x{j}")));
    w.write_record(&header).map_err(csv_error)?;
    for r in cohort.records() {
        let mut row = vec![fmt_num(r.y), (r.event as u8).to_string(), r.arm.indicator().to_string()];
        row.extend(r.x.iter().map(|&v| fmt_num(v)));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Estimate,
    Simulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InferenceMethod {
    Asymptotic,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `s0 = s1 = s`.
    Equal,
    /// `s0 = 0`, `s1 = s`.
    Interaction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Horizon; estimate mode defaults to the median observed time,
    /// simulate mode to the calibrated median.
    pub t0: Option<f64>,
    pub points: usize,
    /// Explicit times; overrides `t0` and `points`.
    pub times: Option<Vec<f64>>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { t0: None, points: 50, times: None }
    }
}

impl GridSpec {
    /// `0.5`, `0.5:20` or `0.1,0.2,0.3`.
    pub fn parse(s: &str) -> Result<Self> {
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad grid value `{v}`")));
        if s.contains(',') {
            let times = s.split(',').map(num).collect::<Result<Vec<_>>>()?;
            return Ok(GridSpec { times: Some(times), ..Default::default() });
        }
        if let Some((t0, m)) = s.split_once(':') {
            let points = m.trim().parse().map_err(|_| Error::Config(format!("bad grid point count `{m}`")))?;
            return Ok(GridSpec { t0: Some(num(t0)?), points, times: None });
        }
        Ok(GridSpec { t0: Some(num(s)?), ..Default::default() })
    }

    fn build(&self, fallback_t0: impl FnOnce() -> Result<f64>) -> Result<TimeGrid> {
        match &self.times {
            Some(times) => TimeGrid::new(times.clone()),
            None => {
                let t0 = match self.t0 {
                    Some(t) => t,
                    None => fallback_t0()?,
                };
                if self.points <= 1 {
                    TimeGrid::single(t0)
                } else {
                    TimeGrid::uniform(t0, self.points)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceSpec {
    pub method: InferenceMethod,
    /// Bootstrap resamples (always used for `tau1`).
    pub replicates: usize,
    pub level: f64,
}

impl Default for InferenceSpec {
    fn default() -> Self {
        InferenceSpec { method: InferenceMethod::Asymptotic, replicates: 1000, level: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestSpec {
    pub n_trees: usize,
    /// Defaults to `ceil(sqrt(p))`.
    pub mtry: Option<usize>,
    pub min_unique_deaths: usize,
    /// Trees per forest when refitting inside bootstrap resamples.
    pub bootstrap_trees: Option<usize>,
}

impl Default for ForestSpec {
    fn default() -> Self {
        ForestSpec { n_trees: 500, mtry: None, min_unique_deaths: 3, bootstrap_trees: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub betas: Vec<f64>,
    pub s_values: Vec<f64>,
    pub family: Family,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec { betas: Vec::new(), s_values: Vec::new(), family: Family::Equal }
    }
}

/// Everything a run needs; read from TOML and overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub backend: Option<Backend>,
    pub weight_floor: f64,
    pub grid: GridSpec,
    pub inference: InferenceSpec,
    pub forest: ForestSpec,
    pub setting: DgpSetting,
    pub sweep: SweepSpec,
    pub reps: usize,
    pub truth_draws: usize,
    pub calibration_draws: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: None,
            input: None,
            out: None,
            seed: 2024,
            estimators: EstimatorKind::ALL.to_vec(),
            backend: Some(Backend::Srf),
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            grid: GridSpec::default(),
            inference: InferenceSpec::default(),
            forest: ForestSpec::default(),
            setting: DgpSetting::default(),
            sweep: SweepSpec::default(),
            reps: 500,
            truth_draws: crate::simulation::TRUTH_DRAWS,
            calibration_draws: crate::simulation::CALIBRATION_DRAWS,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        if self.estimators.iter().any(|k| k.needs_model()) && self.backend.is_none() {
            return Err(Error::Config("tau1, tau2 and tau3 need a backend".into()));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor <= 1.0) {
            return Err(Error::Config("weight_floor must lie in (0, 1]".into()));
        }
        if !(self.inference.level > 0.0 && self.inference.level < 1.0) {
            return Err(Error::Config("inference.level must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Adjustment recipe for covariate dimension `p`.
    pub fn recipe(&self, p: usize, seed: u64) -> Option<AdjustmentRecipe> {
        self.backend.map(|b| match b {
            Backend::Cox => AdjustmentRecipe::Cox(CoxOptions::default()),
            Backend::Lasso => AdjustmentRecipe::Lasso(LassoOptions::default()),
            Backend::Srf => AdjustmentRecipe::Srf(self.forest_config(p, seed, self.forest.n_trees)),
        })
    }

    fn bootstrap_recipe(&self, p: usize, seed: u64) -> Option<AdjustmentRecipe> {
        match (self.backend, self.forest.bootstrap_trees) {
            (Some(Backend::Srf), Some(trees)) => Some(AdjustmentRecipe::Srf(self.forest_config(p, seed, trees))),
            _ => self.recipe(p, seed),
        }
    }

    fn forest_config(&self, p: usize, seed: u64, n_trees: usize) -> ForestConfig {
        let base = ForestConfig::for_dimension(p, seed);
        ForestConfig {
            n_trees,
            mtry: self.forest.mtry.unwrap_or(base.mtry),
            min_unique_deaths: self.forest.min_unique_deaths,
            ..base
        }
    }
}

/// One estimator's results in an `estimate` run; `None` parts are `NA`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub kind: EstimatorKind,
    pub band: Option<ConfidenceBand>,
    pub average: Option<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOutcome {
    pub grid: TimeGrid,
    pub rows: Vec<EstimateRow>,
    pub diagnostics: Vec<String>,
    pub files: Vec<PathBuf>,
}

fn median_time(cohort: &Cohort) -> Result<f64> {
    let mut y = cohort.times();
    y.sort_by(f64::total_cmp);
    let m = y.len();
    let t0 = if m % 2 == 1 { y[m / 2] } else { 0.5 * (y[m / 2 - 1] + y[m / 2]) };
    if t0 > 0.0 {
        Ok(t0)
    } else {
        Err(Error::Config("median observed time is 0; set grid.t0".into()))
    }
}

/// Estimate every selected ACE curve on `cohort` and write `ace_curves.csv`,
/// `summary.csv` and `manifest.txt` into `out`.
pub fn run_estimate_on(cohort: &Cohort, cfg: &RunConfig, out: &Path) -> Result<EstimateOutcome> {
    cfg.validate()?;
    cohort.require_both_arms()?;
    let grid = cfg.grid.build(|| median_time(cohort))?;
    let level = cfg.inference.level;
    let weights = quadrature_weights(grid.times(), &vec![1.0; grid.len()])?;
    let cens = CensoringModel::fit(cohort).with_weight_floor(cfg.weight_floor);
    let mut diagnostics = Vec::new();

    let kinds = &cfg.estimators;
    let recipe = cfg.recipe(cohort.p(), cfg.seed);
    let preds = match (&recipe, kinds.iter().any(|k| k.needs_model())) {
        (Some(r), true) => match r.fit_predict(cohort, grid.times()) {
            Ok(p) => Some(p),
            Err(e) => {
                diagnostics.push(format!("{} backend failed: {e}", r.backend()));
                None
            }
        },
        _ => None,
    };
    let usable = |k: &EstimatorKind| !k.needs_model() || preds.is_some();

    let boot_kinds: Vec<EstimatorKind> = kinds
        .iter()
        .copied()
        .filter(|k| usable(k) && (cfg.inference.method == InferenceMethod::Bootstrap || !k.has_influence()))
        .collect();
    let boot = if boot_kinds.is_empty() {
        None
    } else {
        let brecipe = cfg.bootstrap_recipe(cohort.p(), cfg.seed);
        let opts = BootstrapOptions::new(cfg.inference.replicates, cfg.seed);
        match bootstrap_replicates(cohort, brecipe.as_ref(), &grid, &boot_kinds, &opts) {
            Ok(b) => {
                if b.redraws > 0 || b.failures > 0 {
                    diagnostics.push(format!("bootstrap: {} redraws, {} failed replicates", b.redraws, b.failures));
                }
                Some(b)
            }
            Err(e) => {
                diagnostics.push(format!("bootstrap failed: {e}"));
                None
            }
        }
    };

    let mut rows = Vec::new();
    let mut floored = 0;
    for &kind in kinds {
        if !usable(&kind) {
            rows.push(EstimateRow { kind, band: None, average: None });
            continue;
        }
        let curve: AceCurve = ace_curve(kind, cohort, &cens, preds.as_ref(), &grid)?;
        floored = floored.max(curve.floored_weights);
        let avg: f64 = weights.iter().zip(&curve.estimates).map(|(c, v)| c * v).sum();
        let row = if boot_kinds.contains(&kind) {
            match &boot {
                Some(b) => {
                    let band = b.band(&curve, level)?;
                    let se = sample_sd(&b.linear(kind, &weights)?);
                    EstimateRow { kind, band: Some(band), average: Some((avg, se, wald_p_value(avg, se))) }
                }
                None => EstimateRow { kind, band: None, average: None },
            }
        } else {
            let cov = covariance(&influence(kind, cohort, &cens, preds.as_ref(), &grid)?);
            if !cov.is_psd() {
                diagnostics.push(format!("{kind}: covariance is not positive semidefinite"));
            }
            let se = cov.linear_se(&weights);
            EstimateRow {
                kind,
                band: Some(asymptotic_band(&curve, &cov, level)?),
                average: Some((avg, se, wald_p_value(avg, se))),
            }
        };
        rows.push(row);
    }
    if floored > 0 {
        diagnostics.push(format!("{floored} censoring weights clamped at {}", cfg.weight_floor));
    }

    fs::create_dir_all(out)?;
    let curves_path = out.join("ace_curves.csv");
    let mut w = writer(&curves_path)?;
    w.write_record(["estimator", "t", "estimate", "se", "lo", "hi"]).map_err(csv_error)?;
    for row in &rows {
        for (g, &t) in grid.times().iter().enumerate() {
            let cells = match &row.band {
                Some(b) => [b.estimate[g], b.se[g], b.lower[g], b.upper[g]].map(fmt_num),
                None => std::array::from_fn(|_| "NA".to_string()),
            };
            w.write_record([row.kind.label().to_string(), fmt_num(t)].into_iter().chain(cells)).map_err(csv_error)?;
        }
    }
    w.flush()?;

    let summary_path = out.join("summary.csv");
    let mut w = writer(&summary_path)?;
    w.write_record(["estimator", "estimate", "se", "p_value"]).map_err(csv_error)?;
    for row in &rows {
        let (e, s, p) = row.average.unwrap_or((f64::NAN, f64::NAN, f64::NAN));
        w.write_record([row.kind.label().to_string(), fmt_num(e), fmt_num(s), fmt_num(p)]).map_err(csv_error)?;
    }
    w.flush()?;

    let manifest_path = out.join("manifest.txt");
    write_manifest(&manifest_path, "estimate", cfg, &diagnostics, &[("n", cohort.len().to_string()), ("p", cohort.p().to_string())])?;
    Ok(EstimateOutcome { grid, rows, diagnostics, files: vec![curves_path, summary_path, manifest_path] })
}

pub fn run_estimate(cfg: &RunConfig, out: &Path) -> Result<EstimateOutcome> {
    let input = cfg.input.as_ref().ok_or_else(|| Error::Config("estimate needs an input file".into()))?;
    let cohort = load_cohort(input)?;
    run_estimate_on(&cohort, cfg, out)
}

fn write_manifest(path: &Path, command: &str, cfg: &RunConfig, diagnostics: &[String], extra: &[(&str, String)]) -> Result<()> {
    let mut text = String::new();
    writeln!(text, "# survace {} run manifest", command).unwrap();
    writeln!(text, "# version = {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(text, "# seed = {}", cfg.seed).unwrap();
    for (k, v) in extra {
        writeln!(text, "# {k} = {v}").unwrap();
    }
    writeln!(text, "# diagnostics = {}", diagnostics.len()).unwrap();
    for d in diagnostics {
        writeln!(text, "#   {d}").unwrap();
    }
    text.push('\n');
    text.push_str(&cfg.to_toml());
    fs::write(path, text)?;
    Ok(())
}

/// The settings swept by a `simulate` run.
pub fn sweep_settings(cfg: &RunConfig) -> Vec<DgpSetting> {
    let base = &cfg.setting;
    let betas = if cfg.sweep.betas.is_empty() { vec![base.beta] } else { cfg.sweep.betas.clone() };
    let svals: Vec<Option<f64>> =
        if cfg.sweep.s_values.is_empty() { vec![None] } else { cfg.sweep.s_values.iter().map(|&s| Some(s)).collect() };
    let mut out = Vec::new();
    for &beta in &betas {
        for s in &svals {
            let (s0, s1) = match (s, cfg.sweep.family) {
                (None, _) => (base.s0, base.s1),
                (Some(s), Family::Equal) => (*s, *s),
                (Some(s), Family::Interaction) => (0.0, *s),
            };
            out.push(DgpSetting { beta, s0, s1, ..base.clone() });
        }
    }
    out
}

pub fn study_config(cfg: &RunConfig, setting: &DgpSetting) -> StudyConfig {
    let p = setting.p;
    let recipe = cfg.recipe(p, cfg.seed).unwrap_or(AdjustmentRecipe::Cox(CoxOptions::default()));
    let mut study = StudyConfig::new(setting.clone(), recipe, cfg.reps, cfg.seed);
    study.kinds = cfg.estimators.clone();
    study.bootstrap_recipe = cfg.bootstrap_recipe(p, cfg.seed);
    study.boot_replicates = cfg.inference.replicates;
    study.level = cfg.inference.level;
    study.grid_points = if cfg.grid.times.is_some() { 1 } else { cfg.grid.points.max(1) };
    study.t0 = cfg.grid.t0;
    study.truth_draws = cfg.truth_draws;
    study.calibration_draws = cfg.calibration_draws;
    study
}

const MC_HEADER: [&str; 21] = [
    "beta", "p", "k", "s0", "s1", "n", "backend", "estimator", "t0", "truth", "truth_se", "reps", "failures", "bias",
    "sd", "ese", "mse", "relmse", "cr", "power", "mean_wAw",
];

fn mc_rows(report: &McReport, backend: &str) -> Vec<Vec<String>> {
    let s = &report.setting;
    report
        .metrics
        .iter()
        .map(|m| {
            vec![
                fmt_num(s.beta),
                s.p.to_string(),
                s.k.to_string(),
                fmt_num(s.s0),
                fmt_num(s.s1),
                s.n.to_string(),
                backend.to_string(),
                m.kind.label().to_string(),
                fmt_num(report.t0),
                fmt_num(report.truth.value),
                fmt_num(report.truth.se),
                report.succeeded().to_string(),
                report.failures.to_string(),
                fmt_num(m.bias),
                fmt_num(m.sd),
                fmt_num(m.ese),
                fmt_num(m.mse),
                fmt_num(m.relmse),
                fmt_num(m.coverage),
                fmt_num(m.power),
                fmt_num(m.mean_quadratic_form),
            ]
        })
        .collect()
}

/// Write `mc_report.csv`, `power_curve.csv`, `relmse_curve.csv` and a manifest.
pub fn write_study_outputs(reports: &[McReport], cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let backend = cfg.backend.map_or("none".to_string(), |b| b.to_string());

    let mc_path = out.join("mc_report.csv");
    let mut w = writer(&mc_path)?;
    w.write_record(MC_HEADER).map_err(csv_error)?;
    for r in reports {
        for row in mc_rows(r, &backend) {
            w.write_record(&row).map_err(csv_error)?;
        }
    }
    w.flush()?;

    let power_path = out.join("power_curve.csv");
    let mut w = writer(&power_path)?;
    w.write_record(["estimator", "beta", "s0", "s1", "power"]).map_err(csv_error)?;
    let relmse_path = out.join("relmse_curve.csv");
    let mut w2 = writer(&relmse_path)?;
    w2.write_record(["estimator", "s1", "s0", "beta", "relmse"]).map_err(csv_error)?;
    for &kind in &cfg.estimators {
        for r in reports {
            if let Some(m) = r.metric(kind) {
                let s = &r.setting;
                w.write_record([kind.label().to_string(), fmt_num(s.beta), fmt_num(s.s0), fmt_num(s.s1), fmt_num(m.power)])
                    .map_err(csv_error)?;
                w2.write_record([kind.label().to_string(), fmt_num(s.s1), fmt_num(s.s0), fmt_num(s.beta), fmt_num(m.relmse)])
                    .map_err(csv_error)?;
            }
        }
    }
    w.flush()?;
    w2.flush()?;

    let diagnostics: Vec<String> = reports
        .iter()
        .flat_map(|r| r.failure_messages.iter().map(move |(i, m)| format!("beta={} s1={} replicate {i}: {m}", r.setting.beta, r.setting.s1)))
        .collect();
    let manifest_path = out.join("manifest.txt");
    write_manifest(&manifest_path, "simulate", cfg, &diagnostics, &[("settings", reports.len().to_string())])?;
    Ok(vec![mc_path, power_path, relmse_path, manifest_path])
}

/// Run the study for every swept setting and write the Monte Carlo tables.
pub fn run_simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<McReport>> {
    cfg.validate()?;
    let reports = sweep_settings(cfg)
        .iter()
        .map(|s| run_study(&study_config(cfg, s)))
        .collect::<Result<Vec<_>>>()?;
    write_study_outputs(&reports, cfg, out)?;
    Ok(reports)
}

/// Calibrated horizon for the configured setting.
pub fn run_calibrate(cfg: &RunConfig) -> Result<f64> {
    calibrate_t0_with(&cfg.setting, cfg.calibration_draws)
}

/// Resolve the output directory: explicit flag, then `SURVACE_OUT`, then the
/// config file, then `survace-out`.
pub fn resolve_out(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("survace-out"))
}
