//! Scenario configuration and the single-run and Monte Carlo drivers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use thiserror::Error;

use crate::domain::{derive_seed3, DomainError, InterceptionModel, LearningCase};
use crate::geometry::{ParamBounds, Point2, PursuerParams};
use crate::inference::OptimizerConfig;
use crate::learning::{run_learning_loop, LearningError, LearningHistory, LoopSettings, SelectionStrategy};
use crate::metrics::{coverage_table, param_error, region_metrics, GridSpec};
use crate::planner::{path_csv, plan_baseline, plan_safe_path, KinematicLimits, Plan, PlannerError, PlannerOptions};
use crate::selection::SelectionGrid;
use crate::truthsim::NoiseSpec;

/// Version of every JSON and CSV schema written by the drivers.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("configuration parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Overwrite `base` with every field present in `patch`, recursing into objects.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Planner part of a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerSettings {
    pub enabled: bool,
    pub x0: Point2,
    pub xf: Point2,
    pub n_control: usize,
    pub n_samples: usize,
    pub turn_rate_max: f64,
    pub curvature_max: f64,
    /// Last step planned; `None` plans after every agent.
    pub max_step: Option<usize>,
}

impl PlannerSettings {
    pub fn limits(&self, evader_speed: f64) -> KinematicLimits {
        KinematicLimits { v_e: evader_speed, u_lb: -self.turn_rate_max, u_ub: self.turn_rate_max, kappa_ub: self.curvature_max }
    }

    pub fn options(&self) -> PlannerOptions {
        PlannerOptions { n_control: self.n_control, n_samples: self.n_samples, ..PlannerOptions::default() }
    }

    fn plans_step(&self, step: usize) -> bool {
        self.enabled && self.max_step.is_none_or(|m| step <= m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub bounds: ParamBounds,
    pub case: LearningCase,
    pub model: InterceptionModel,
    pub strategy: SelectionStrategy,
    pub noise: NoiseSpec,
    pub evader_speed: f64,
    pub agent_speed: f64,
    pub r_s: f64,
    pub center: Point2,
    pub domain_radius: f64,
    pub dt: f64,
    pub beta: f64,
    pub alpha_cut: f64,
    pub n_traj_samples: usize,
    pub grid: SelectionGrid,
    pub optimizer: OptimizerConfig,
    pub max_agents: usize,
    pub planner: PlannerSettings,
    pub metrics_resolution: usize,
    pub seed: u64,
    pub n_runs: usize,
    /// Fixed truth for single runs; drawn from `bounds` with the master seed when absent.
    pub truth: Option<PursuerParams>,
}

/// Default pursuer box: `x, y ∈ [−2, 2]`, `ψ ∈ (−π, π]`, `a ∈ [0.1, 1]`, `R ∈ [0.5, 3]`, `v ∈ [0.5, 2]`.
pub fn default_bounds() -> ParamBounds {
    ParamBounds {
        lower: PursuerParams::new(-2.0, -2.0, -PI, 0.1, 0.5, 0.5),
        upper: PursuerParams::new(2.0, 2.0, PI, 1.0, 3.0, 2.0),
    }
}

/// Isotropic noise applied to the noisy cases.
pub const DEFAULT_SIGMA_POS: f64 = 0.02;
pub const DEFAULT_SIGMA_T: f64 = 0.02;

impl ScenarioConfig {
    /// Synthetic default scenario for `case` and `model`.
    pub fn default_for(case: LearningCase, model: InterceptionModel) -> Self {
        let bounds = default_bounds();
        let (lo, hi) = (bounds.lower, bounds.upper);
        let half = 0.5 * (hi.x - lo.x).max(hi.y - lo.y);
        let r_s = 1.3 * hi.range + half;
        let agent_speed = 1.0;
        let dt = 0.01 * r_s / agent_speed;
        Self {
            schema_version: SCHEMA_VERSION,
            bounds,
            case,
            model,
            strategy: SelectionStrategy::default_for(model),
            noise: if case.noisy() { NoiseSpec::isotropic(DEFAULT_SIGMA_POS, DEFAULT_SIGMA_T) } else { NoiseSpec::none() },
            evader_speed: 1.0,
            agent_speed,
            r_s,
            center: Point2::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y)),
            domain_radius: 2.0 * r_s,
            dt,
            beta: 3.0,
            alpha_cut: 2.0 * dt,
            n_traj_samples: 200,
            grid: SelectionGrid::default(),
            optimizer: OptimizerConfig::defaults_for(&bounds),
            max_agents: 20,
            planner: PlannerSettings {
                enabled: true,
                x0: Point2::new(-r_s, 0.0),
                xf: Point2::new(r_s, 0.0),
                n_control: 12,
                n_samples: 100,
                turn_rate_max: 2.0,
                curvature_max: 2.0,
                max_step: None,
            },
            metrics_resolution: 256,
            seed: 0,
            n_runs: 50,
            truth: None,
        }
    }

    /// Parse a possibly partial document; missing fields take the defaults of its case and model.
    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let given: Value = serde_json::from_str(s)?;
        let pick = |key: &str, fallback: &str| given.get(key).and_then(Value::as_str).unwrap_or(fallback).to_string();
        let case: LearningCase = pick("case", "1A").parse().map_err(|e: DomainError| ConfigError::Invalid(e.to_string()))?;
        let model: InterceptionModel = pick("model", "boundary").parse().map_err(|e: DomainError| ConfigError::Invalid(e.to_string()))?;
        let mut merged = serde_json::to_value(Self::default_for(case, model))?;
        merge(&mut merged, given);
        let cfg: Self = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serialises"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.schema_version != SCHEMA_VERSION {
            return bad("unsupported schema_version");
        }
        if self.bounds.validate().is_err() {
            return bad("bounds must satisfy lower ≤ upper with positive a, R, v");
        }
        if self.noise.enabled != self.case.noisy() {
            return bad("noise.enabled must match the case (B cases are noisy)");
        }
        let positive = [self.evader_speed, self.agent_speed, self.r_s, self.domain_radius, self.dt, self.beta];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.alpha_cut < 0.0 {
            return bad("speeds, radii, dt and beta must be positive");
        }
        if self.domain_radius <= self.r_s {
            return bad("domain_radius must exceed r_s");
        }
        if self.grid.n_alpha < 4 || self.grid.n_psi < 4 {
            return bad("selection grid needs at least 4 cells per axis");
        }
        if self.optimizer.n_p == 0 || self.max_agents == 0 || self.n_runs == 0 {
            return bad("n_p, max_agents and n_runs must be positive");
        }
        if self.metrics_resolution < 64 {
            return bad("metrics_resolution must be at least 64");
        }
        if self.planner.n_control < 8 || self.planner.n_samples < 2 {
            return bad("planner needs at least 8 control points and 2 samples");
        }
        if !(self.planner.turn_rate_max >= 0.0 && self.planner.curvature_max > 0.0) {
            return bad("planner turn-rate bound must be non-negative and curvature bound positive");
        }
        if let Some(t) = &self.truth {
            if t.validate().is_err() {
                return bad("truth must have positive a, R and v");
            }
        }
        Ok(())
    }

    pub fn loop_settings(&self) -> LoopSettings {
        LoopSettings {
            bounds: self.bounds,
            case: self.case,
            model: self.model,
            strategy: self.strategy,
            noise: self.noise,
            agent_speed: self.agent_speed,
            r_s: self.r_s,
            center: self.center,
            domain_radius: self.domain_radius,
            dt: self.dt,
            beta: self.beta,
            alpha_cut: self.alpha_cut,
            n_traj_samples: self.n_traj_samples,
            grid: self.grid,
            optimizer: self.optimizer,
            max_agents: self.max_agents,
        }
    }
}

const STREAM_TRUTH: u64 = 10;
const STREAM_RUN: u64 = 11;

/// Truths drawn uniformly from `bounds`; run `r` depends only on the master seed and `r`.
pub fn sample_truths(bounds: &ParamBounds, master_seed: u64, n: usize) -> Vec<PursuerParams> {
    let (lo, hi) = (bounds.lower.to_array(), bounds.upper.to_array());
    (0..n as u64)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed3(master_seed, STREAM_TRUTH, r, 0));
            PursuerParams::from_array(std::array::from_fn(|k| rng.random_range(lo[k]..=hi[k]))).wrapped()
        })
        .collect()
}

/// Seed of the learning loop of run `r`.
pub fn run_seed(master_seed: u64, r: usize) -> u64 {
    derive_seed3(master_seed, STREAM_RUN, r as u64, 0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub schema_version: u32,
    pub config_hash: String,
    pub master_seed: u64,
    pub generator: String,
}

impl Metadata {
    pub fn of(cfg: &ScenarioConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config_hash: cfg.hash(),
            master_seed: cfg.seed,
            generator: format!("ezlearn {}", env!("CARGO_PKG_VERSION")),
        }
    }

    /// Leading comment line of every CSV file.
    pub fn csv_header(&self) -> String {
        format!(
            "# schema_version={} config_hash={} master_seed={} generator={}\n",
            self.schema_version, self.config_hash, self.master_seed, self.generator
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanStatus {
    Ok,
    Infeasible,
    Skipped,
}

/// Metrics of the ensemble after `step` agents; step 0 is the prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub n_candidates: usize,
    pub converged: bool,
    /// Absolute error of the ensemble mean, heading wrapped; frozen entries are 0.
    pub abs_error: [f64; 6],
    /// `abs_error` over the bound width.
    pub rel_error: [f64; 6],
    pub union_ratio: f64,
    pub coverage: f64,
    pub plan_status: PlanStatus,
    pub path_time: Option<f64>,
    /// Planned `tf` over the perfect-information `tf`; infinite when infeasible.
    pub normalized_path_time: Option<f64>,
}

/// One complete learning run with its evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub metadata: Metadata,
    pub history: LearningHistory,
    pub metrics: Vec<StepMetrics>,
    /// `tf` planned with the truth as the only candidate.
    pub perfect_tf: Option<f64>,
    /// Plan per step, `None` where skipped or infeasible. Step 0 is the no-learning baseline.
    pub plans: Vec<Option<Plan>>,
}

/// Inflation of the no-learning box: the range when it is known, else its upper bound.
fn baseline_inflation(cfg: &ScenarioConfig, truth: &PursuerParams) -> f64 {
    if cfg.case.free_mask()[4] { cfg.bounds.upper.range } else { truth.range }
}

fn planned(result: Result<Plan, PlannerError>) -> (PlanStatus, Option<Plan>) {
    match result {
        Ok(plan) => (PlanStatus::Ok, Some(plan)),
        Err(_) => (PlanStatus::Infeasible, None),
    }
}

/// Region metrics of every step and, where enabled, plans against each ensemble.
pub fn evaluate_history(cfg: &ScenarioConfig, history: &LearningHistory) -> (Vec<StepMetrics>, Option<f64>, Vec<Option<Plan>>) {
    let truth = &history.truth;
    let width = cfg.bounds.width();
    let (lim, opts) = (cfg.planner.limits(cfg.evader_speed), cfg.planner.options());
    let (x0, xf) = (cfg.planner.x0, cfg.planner.xf);
    let perfect_tf = if cfg.planner.enabled {
        let only_truth = crate::domain::CandidateSet::from_params(&[*truth]).expect("valid truth");
        plan_safe_path(x0, xf, &only_truth, &lim, &opts).ok().map(|p| p.tf())
    } else {
        None
    };
    let steps: Vec<(StepMetrics, Option<Plan>)> = (0..=history.steps.len())
        .map(|k| {
            let cands = history.candidates_after(k);
            let grid = GridSpec::covering(std::iter::once(truth).chain(cands.params()), cfg.metrics_resolution);
            let region = region_metrics(truth, cands, &grid);
            let abs_error = param_error(truth, &cands.mean, cfg.case);
            let rel_error = std::array::from_fn(|i| if width[i] > 0.0 { abs_error[i] / width[i] } else { 0.0 });
            let (plan_status, plan) = if !cfg.planner.plans_step(k) {
                (PlanStatus::Skipped, None)
            } else if k == 0 {
                let (lo, hi) = (cfg.bounds.lower, cfg.bounds.upper);
                planned(plan_baseline(x0, xf, Point2::new(lo.x, lo.y), Point2::new(hi.x, hi.y), baseline_inflation(cfg, truth), &lim, &opts))
            } else {
                planned(plan_safe_path(x0, xf, cands, &lim, &opts))
            };
            let path_time = plan.as_ref().map(Plan::tf);
            let normalized_path_time = match (plan_status, perfect_tf) {
                (PlanStatus::Ok, Some(p)) => path_time.map(|t| t / p),
                (PlanStatus::Infeasible, Some(_)) => Some(f64::INFINITY),
                _ => None,
            };
            let converged = k > 0 && history.steps[k - 1].converged;
            let m = StepMetrics {
                step: k,
                n_candidates: cands.len(),
                converged,
                abs_error,
                rel_error,
                union_ratio: region.union_ratio,
                coverage: region.coverage_fraction,
                plan_status,
                path_time,
                normalized_path_time,
            };
            (m, plan)
        })
        .collect();
    let (metrics, plans) = steps.into_iter().unzip();
    (metrics, perfect_tf, plans)
}

/// The configured truth, or the first truth of the master seed's sequence.
pub fn single_truth(cfg: &ScenarioConfig) -> PursuerParams {
    cfg.truth.unwrap_or_else(|| sample_truths(&cfg.bounds, cfg.seed, 1)[0])
}

/// Learning loop on one truth followed by per-step evaluation.
pub fn run_single(cfg: &ScenarioConfig, truth: &PursuerParams, seed: u64) -> Result<RunOutput, ExperimentError> {
    cfg.validate()?;
    let history = run_learning_loop(truth, &cfg.loop_settings(), seed)?;
    let (metrics, perfect_tf, plans) = evaluate_history(cfg, &history);
    Ok(RunOutput { metadata: Metadata::of(cfg), history, metrics, perfect_tf, plans })
}

const PARAM_NAMES: [&str; 6] = ["x", "y", "heading", "turn_radius", "range", "speed"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn metrics_csv(meta: &Metadata, rows: impl IntoIterator<Item = (Option<usize>, StepMetrics)>) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["run".to_string(), "step".into(), "n_candidates".into(), "converged".into()];
    header.extend(PARAM_NAMES.iter().map(|n| format!("err_{n}")));
    header.extend(PARAM_NAMES.iter().map(|n| format!("rel_err_{n}")));
    header.extend(["union_ratio", "coverage", "plan_status", "path_time", "normalized_path_time"].map(String::from));
    w.write_record(&header)?;
    for (run, m) in rows {
        let mut rec = vec![run.map_or_else(String::new, |r| r.to_string()), m.step.to_string(), m.n_candidates.to_string(), m.converged.to_string()];
        rec.extend(m.abs_error.iter().map(f64::to_string));
        rec.extend(m.rel_error.iter().map(f64::to_string));
        rec.push(m.union_ratio.to_string());
        rec.push(m.coverage.to_string());
        rec.push(serde_json::to_value(m.plan_status)?.as_str().unwrap_or_default().to_string());
        rec.push(fmt_opt(m.path_time));
        rec.push(fmt_opt(m.normalized_path_time));
        w.write_record(&rec)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8");
    Ok(meta.csv_header() + &body)
}

/// `history.json`, `metrics.csv`, and `plan_step{k}.json`/`.csv` for every planned step.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("history.json"), serde_json::to_string_pretty(out)?)?;
    fs::write(dir.join("metrics.csv"), metrics_csv(&out.metadata, out.metrics.iter().map(|m| (None, m.clone())))?)?;
    for (k, plan) in out.plans.iter().enumerate() {
        if let Some(plan) = plan {
            fs::write(dir.join(format!("plan_step{k}.json")), serde_json::to_string_pretty(&plan)?)?;
            fs::write(dir.join(format!("plan_step{k}.csv")), out.metadata.csv_header() + &path_csv(&plan.path, PLAN_CSV_SAMPLES)?)?;
        }
    }
    Ok(())
}

/// Intervals of the exported path tables.
const PLAN_CSV_SAMPLES: usize = 400;

/// Median and quartiles with linear interpolation between order statistics.
pub fn quartiles(values: &[f64]) -> Option<(f64, f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        if lo == hi || v[lo] == v[hi] { v[lo] } else { v[lo] + (h - lo as f64) * (v[hi] - v[lo]) }
    };
    Some((q(0.5), q(0.25), q(0.75)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub step: usize,
    pub metric: String,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub n: usize,
}

/// Brief per-run record kept by the Monte Carlo driver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub truth: PursuerParams,
    pub converged: bool,
    pub n_agents: usize,
    pub perfect_tf: Option<f64>,
    pub metrics: Vec<StepMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McOutput {
    pub metadata: Metadata,
    pub case: LearningCase,
    pub model: InterceptionModel,
    pub truths: Vec<PursuerParams>,
    pub runs: Vec<RunSummary>,
    pub aggregate: Vec<AggregateRow>,
    /// Fraction of deployment steps whose coverage reaches each threshold.
    pub coverage_table: Vec<(f64, f64)>,
}

pub const COVERAGE_THRESHOLDS: [f64; 5] = [1.0, 0.99, 0.97, 0.95, 0.9];

impl McOutput {
    /// Aggregate row of `metric` at `step`.
    pub fn row(&self, step: usize, metric: &str) -> Option<&AggregateRow> {
        self.aggregate.iter().find(|r| r.step == step && r.metric == metric)
    }
}

/// Metrics of a run at `step`, carrying a finished run's last row forward.
fn carried(metrics: &[StepMetrics], step: usize) -> &StepMetrics {
    &metrics[step.min(metrics.len() - 1)]
}

/// Per-step median and IQR of every free-parameter error, union ratio, coverage and normalized path time.
pub fn aggregate(runs: &[RunSummary], case: LearningCase) -> Vec<AggregateRow> {
    let n_steps = runs.iter().map(|r| r.metrics.len()).max().unwrap_or(0);
    let mask = case.free_mask();
    let mut extractors: Vec<(String, Box<dyn Fn(&StepMetrics) -> Option<f64>>)> = Vec::new();
    for (i, name) in PARAM_NAMES.iter().enumerate().filter(|(i, _)| mask[*i]) {
        extractors.push((format!("err_{name}"), Box::new(move |m: &StepMetrics| Some(m.abs_error[i]))));
        extractors.push((format!("rel_err_{name}"), Box::new(move |m: &StepMetrics| Some(m.rel_error[i]))));
    }
    extractors.push(("union_ratio".into(), Box::new(|m: &StepMetrics| Some(m.union_ratio))));
    extractors.push(("coverage".into(), Box::new(|m: &StepMetrics| Some(m.coverage))));
    extractors.push(("normalized_path_time".into(), Box::new(|m: &StepMetrics| m.normalized_path_time)));
    let mut rows = Vec::new();
    for step in 0..n_steps {
        for (name, get) in &extractors {
            let values: Vec<f64> = runs.iter().filter_map(|r| get(carried(&r.metrics, step))).collect();
            if let Some((median, q25, q75)) = quartiles(&values) {
                rows.push(AggregateRow { step, metric: name.clone(), median, q25, q75, n: values.len() });
            }
        }
    }
    rows
}

/// Run `r` of a Monte Carlo suite: truth `r` of the master seed's sequence with its own loop seed.
pub fn run_indexed(cfg: &ScenarioConfig, truth: &PursuerParams, r: usize) -> Result<RunOutput, ExperimentError> {
    run_single(cfg, truth, run_seed(cfg.seed, r))
}

/// Aggregate finished runs, given in run order.
pub fn summarize(cfg: &ScenarioConfig, truths: &[PursuerParams], outputs: &[RunOutput]) -> McOutput {
    let runs: Vec<RunSummary> = outputs
        .iter()
        .enumerate()
        .map(|(r, o)| RunSummary {
            run: r,
            seed: o.history.seed,
            truth: o.history.truth,
            converged: o.history.converged,
            n_agents: o.history.steps.len(),
            perfect_tf: o.perfect_tf,
            metrics: o.metrics.clone(),
        })
        .collect();
    let deployment_coverage: Vec<Vec<f64>> = runs.iter().map(|r| r.metrics[1..].iter().map(|m| m.coverage).collect()).collect();
    McOutput {
        metadata: Metadata::of(cfg),
        case: cfg.case,
        model: cfg.model,
        truths: truths.to_vec(),
        aggregate: aggregate(&runs, cfg.case),
        coverage_table: coverage_table(&deployment_coverage, &COVERAGE_THRESHOLDS),
        runs,
    }
}

/// `n_runs` learning runs on truths drawn from the bounds, evaluated and aggregated.
pub fn run_mc(cfg: &ScenarioConfig) -> Result<McOutput, ExperimentError> {
    cfg.validate()?;
    let truths = sample_truths(&cfg.bounds, cfg.seed, cfg.n_runs);
    let outputs: Vec<RunOutput> = truths.par_iter().enumerate().map(|(r, t)| run_indexed(cfg, t, r)).collect::<Result<_, _>>()?;
    Ok(summarize(cfg, &truths, &outputs))
}

/// `mc_summary.json`, `aggregate.csv`, `runs.csv` and `coverage.csv`.
pub fn write_mc(out: &McOutput, dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("mc_summary.json"), serde_json::to_string_pretty(out)?)?;
    fs::write(
        dir.join("runs.csv"),
        metrics_csv(&out.metadata, out.runs.iter().flat_map(|r| r.metrics.iter().map(move |m| (Some(r.run), m.clone()))))?,
    )?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "metric", "median", "q25", "q75", "n"])?;
    for r in &out.aggregate {
        w.serialize((r.step, &r.metric, r.median, r.q25, r.q75, r.n))?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8");
    fs::write(dir.join("aggregate.csv"), out.metadata.csv_header() + &body)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["threshold", "fraction_of_steps"])?;
    for (tau, frac) in &out.coverage_table {
        w.serialize((tau, frac))?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8");
    fs::write(dir.join("coverage.csv"), out.metadata.csv_header() + &body)?;
    Ok(())
}
