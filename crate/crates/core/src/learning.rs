//! The closed deploy, observe and re-estimate loop.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::domain::{derive_seed, derive_seed3, CandidateSet, Dataset, DomainError, InterceptionModel, LearningCase, TrialRecord};
use crate::geometry::{ParamBounds, Point2, PursuerParams};
use crate::inference::{is_converged, lhs_sample, update_round, InferenceError, OptimizerConfig};
use crate::losses::{LossConfig, LossError, LossProblem};
use crate::selection::{select_bed, select_boundary, SelectionContext, SelectionError, SelectionGrid};
use crate::truthsim::{simulate_engagement, NoiseSpec, SimConfig, TrajectorySpec, TruthSimError};

#[derive(Debug, Error)]
pub enum LearningError {
    #[error(transparent)]
    Sim(#[from] TruthSimError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionStrategy {
    /// Spread predicted interception points.
    Boundary,
    /// Maximise the expected D-optimality gain.
    Bed,
}

impl SelectionStrategy {
    /// The strategy conventionally paired with each model.
    pub fn default_for(model: InterceptionModel) -> Self {
        match model {
            InterceptionModel::Boundary => Self::Boundary,
            InterceptionModel::Interior => Self::Bed,
        }
    }
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Boundary => "boundary",
            Self::Bed => "bed",
        })
    }
}

impl FromStr for SelectionStrategy {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "boundary" | "heuristic" => Ok(Self::Boundary),
            "bed" => Ok(Self::Bed),
            _ => Err(DomainError::UnknownStrategy(s.to_string())),
        }
    }
}

/// Everything the loop needs besides the truth and the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopSettings {
    pub bounds: ParamBounds,
    pub case: LearningCase,
    pub model: InterceptionModel,
    pub strategy: SelectionStrategy,
    pub noise: NoiseSpec,
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
    /// Maximum number of deployed agents.
    pub max_agents: usize,
}

impl LoopSettings {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            model: self.model,
            noise: self.noise,
            domain_radius: self.domain_radius,
            dt: self.dt,
            record_launch: self.case.uses_launch_time(),
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        let (sigma_pos, sigma_t) = self.noise.effective();
        LossConfig::new(self.beta, self.alpha_cut, self.n_traj_samples, &sigma_pos, sigma_t)
    }

    pub fn selection_context(&self) -> SelectionContext {
        SelectionContext {
            r_s: self.r_s,
            center: self.center,
            domain_radius: self.domain_radius,
            agent_speed: self.agent_speed,
            model: self.model,
            n_samples: self.n_traj_samples,
            eps: self.loss_config().eps_pos,
            hit_depth: self.loss_config().eps_pos + (2.0 * self.optimizer.eps_l).sqrt(),
        }
    }

    fn empty_dataset(&self) -> Dataset {
        let (sigma_pos, sigma_t) = self.noise.effective();
        Dataset::new(self.case, self.model, sigma_pos, sigma_t)
    }
}

/// One deployment and the ensemble estimated after it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningStep {
    pub spec: TrajectorySpec,
    pub record: TrialRecord,
    pub selection_fallback: bool,
    pub candidates: CandidateSet,
    pub n_retained: usize,
    pub retention_fallback: bool,
    pub infeasible: bool,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningHistory {
    pub truth: PursuerParams,
    pub case: LearningCase,
    pub model: InterceptionModel,
    pub strategy: SelectionStrategy,
    pub seed: u64,
    /// Latin hypercube population before any deployment.
    pub prior: CandidateSet,
    pub steps: Vec<LearningStep>,
    pub converged: bool,
}

impl LearningHistory {
    pub fn dataset(&self) -> Vec<&TrialRecord> {
        self.steps.iter().map(|s| &s.record).collect()
    }

    /// Ensemble after `k` agents; `k = 0` is the prior.
    pub fn candidates_after(&self, k: usize) -> &CandidateSet {
        if k == 0 {
            &self.prior
        } else {
            &self.steps[(k - 1).min(self.steps.len() - 1)].candidates
        }
    }
}

const STREAM_PRIOR: u64 = 0;
const STREAM_SIM: u64 = 1;
const STREAM_ROUND: u64 = 2;

/// Deploy, append, optimise, filter and resample until the free standard
/// deviations fall below their thresholds or the agent budget is spent.
pub fn run_learning_loop(truth: &PursuerParams, settings: &LoopSettings, seed: u64) -> Result<LearningHistory, LearningError> {
    let case = settings.case;
    let mask = case.free_mask();
    let ocfg = &settings.optimizer;
    let sim = settings.sim_config();
    let lcfg = settings.loss_config();
    let ctx = settings.selection_context();

    let mut starts = lhs_sample(&settings.bounds, case, truth, ocfg.n_p, derive_seed(seed, STREAM_PRIOR));
    let prior = CandidateSet::from_params(&starts)?;
    let mut cands = prior.clone();
    let mut data = settings.empty_dataset();
    let mut steps = Vec::new();
    let mut converged = false;

    for k in 0..settings.max_agents as u64 {
        let selected = match settings.strategy {
            SelectionStrategy::Boundary => {
                let past_starts: Vec<Point2> = data.records.iter().map(|r| r.start).collect();
                select_boundary(&cands, &data.hit_points(), &past_starts, &settings.grid, &ctx)?
            }
            SelectionStrategy::Bed => select_bed(&cands, &data, &settings.grid, &ctx, &mask)?,
        };
        let record = simulate_engagement(truth, &selected.spec, &sim, derive_seed3(seed, STREAM_SIM, k, 0))?;
        data.push(record.clone());
        let problem = LossProblem::new(&data, &lcfg)?;
        let round = update_round(&starts, &problem, ocfg, &settings.bounds, truth, derive_seed3(seed, STREAM_ROUND, k, 0))?;
        converged = is_converged(&round.candidates, case, &ocfg.sigma_thresh);
        cands = round.candidates.clone();
        starts = round.next_starts;
        steps.push(LearningStep {
            spec: selected.spec,
            record,
            selection_fallback: selected.fallback,
            candidates: round.candidates,
            n_retained: round.n_retained,
            retention_fallback: round.fallback,
            infeasible: round.infeasible,
            converged,
        });
        if converged {
            break;
        }
    }
    Ok(LearningHistory {
        truth: *truth,
        case,
        model: settings.model,
        strategy: settings.strategy,
        seed,
        prior,
        steps,
        converged,
    })
}
