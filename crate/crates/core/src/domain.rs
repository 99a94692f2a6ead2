//! Learning cases, measurement records and candidate ensembles.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Point2, PursuerParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("expected {expected} free components, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("summary statistics of an empty candidate set")]
    EmptyCandidates,
    #[error("unknown learning case `{0}`")]
    UnknownCase(String),
    #[error("unknown interception model `{0}`")]
    UnknownModel(String),
    #[error("unknown selection strategy `{0}`")]
    UnknownStrategy(String),
    #[error("inconsistent trial record: {0}")]
    BadRecord(&'static str),
}

/// The six learning cases: 1 = pose only, 2 = pose + shape, 3 = everything.
/// `B` variants carry measurement noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LearningCase {
    #[serde(rename = "1A")]
    Case1A,
    #[serde(rename = "1B")]
    Case1B,
    #[serde(rename = "2A")]
    Case2A,
    #[serde(rename = "2B")]
    Case2B,
    #[serde(rename = "3A")]
    Case3A,
    #[serde(rename = "3B")]
    Case3B,
}

pub type FreeMask = [bool; 6];

impl LearningCase {
    pub const ALL: [LearningCase; 6] = [
        LearningCase::Case1A,
        LearningCase::Case1B,
        LearningCase::Case2A,
        LearningCase::Case2B,
        LearningCase::Case3A,
        LearningCase::Case3B,
    ];

    /// Which of `(x, y, ψ, a, R, v)` are learned.
    pub fn free_mask(self) -> FreeMask {
        match self.family() {
            1 => [true, true, true, false, false, false],
            2 => [true, true, true, true, true, false],
            _ => [true; 6],
        }
    }

    pub fn family(self) -> u8 {
        match self {
            LearningCase::Case1A | LearningCase::Case1B => 1,
            LearningCase::Case2A | LearningCase::Case2B => 2,
            LearningCase::Case3A | LearningCase::Case3B => 3,
        }
    }

    pub fn noisy(self) -> bool {
        matches!(self, LearningCase::Case1B | LearningCase::Case2B | LearningCase::Case3B)
    }

    pub fn uses_launch_time(self) -> bool {
        self.family() == 3
    }

    pub fn n_free(self) -> usize {
        self.free_mask().iter().filter(|m| **m).count()
    }

    pub fn label(self) -> &'static str {
        match self {
            LearningCase::Case1A => "1A",
            LearningCase::Case1B => "1B",
            LearningCase::Case2A => "2A",
            LearningCase::Case2B => "2B",
            LearningCase::Case3A => "3A",
            LearningCase::Case3B => "3B",
        }
    }
}

impl fmt::Display for LearningCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for LearningCase {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LearningCase::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| DomainError::UnknownCase(s.to_string()))
    }
}

/// Where interception may happen relative to the reachable region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterceptionModel {
    /// Capture exactly on the region boundary.
    Boundary,
    /// Capture anywhere inside the region.
    Interior,
}

impl fmt::Display for InterceptionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterceptionModel::Boundary => "boundary",
            InterceptionModel::Interior => "interior",
        })
    }
}

impl FromStr for InterceptionModel {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "boundary" => Ok(InterceptionModel::Boundary),
            "interior" => Ok(InterceptionModel::Interior),
            _ => Err(DomainError::UnknownModel(s.to_string())),
        }
    }
}

/// One sacrificial trajectory and its outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub start: Point2,
    pub heading: f64,
    pub speed: f64,
    pub times: Vec<f64>,
    /// Measured positions, one per entry of `times`.
    pub positions: Vec<Point2>,
    pub intercepted: bool,
    pub t_final: f64,
    /// Measured interception point, or the domain-exit point for survivors.
    pub terminal: Point2,
    pub t_launch: Option<f64>,
}

impl TrialRecord {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.times.is_empty() {
            return Err(DomainError::BadRecord("empty trajectory"));
        }
        if self.times.len() != self.positions.len() {
            return Err(DomainError::BadRecord("times and positions differ in length"));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DomainError::BadRecord("sample times not strictly increasing"));
        }
        if self.intercepted && self.positions.last() != Some(&self.terminal) {
            return Err(DomainError::BadRecord("terminal must equal the last sample"));
        }
        Ok(())
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    /// Linear interpolation of the measured polyline at time `t` (clamped).
    pub fn position_at(&self, t: f64) -> Point2 {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.positions[0];
        }
        if t >= self.times[n - 1] {
            return self.positions[n - 1];
        }
        let i = self.times.partition_point(|&s| s <= t).max(1) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        let (p, q) = (self.positions[i], self.positions[i + 1]);
        Point2::new(p.x + w * (q.x - p.x), p.y + w * (q.y - p.y))
    }
}

/// All records of one experiment plus the noise model used for margins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<TrialRecord>,
    pub case: LearningCase,
    pub model: InterceptionModel,
    /// Position-noise covariance `Σ_x`.
    pub sigma_pos: [[f64; 2]; 2],
    /// Launch-time noise standard deviation.
    pub sigma_t: f64,
}

impl Dataset {
    pub fn new(case: LearningCase, model: InterceptionModel, sigma_pos: [[f64; 2]; 2], sigma_t: f64) -> Self {
        Self { records: Vec::new(), case, model, sigma_pos, sigma_t }
    }

    pub fn push(&mut self, rec: TrialRecord) {
        self.records.push(rec);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Observed interception points so far.
    pub fn hit_points(&self) -> Vec<Point2> {
        self.records.iter().filter(|r| r.intercepted).map(|r| r.terminal).collect()
    }
}

/// Independent sub-seed for `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Sub-seed for a `(run, purpose, step)` triple.
pub fn derive_seed3(master: u64, a: u64, b: u64, c: u64) -> u64 {
    derive_seed(derive_seed(derive_seed(master, a), b), c)
}

/// Largest eigenvalue of a symmetric 2×2 matrix.
pub fn lambda_max_2x2(m: &[[f64; 2]; 2]) -> f64 {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    0.5 * tr + disc
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub params: PursuerParams,
    pub loss: f64,
}

/// Ensemble of feasible parameter vectors with summary statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub members: Vec<Candidate>,
    pub mean: PursuerParams,
    pub std: [f64; 6],
}

impl CandidateSet {
    pub fn from_members(members: Vec<Candidate>) -> Result<Self, DomainError> {
        let params: Vec<PursuerParams> = members.iter().map(|c| c.params).collect();
        let (mean, std) = summary_stats(&params)?;
        Ok(Self { members, mean, std })
    }

    /// Unscored ensemble, e.g. the initial Latin hypercube batch.
    pub fn from_params(params: &[PursuerParams]) -> Result<Self, DomainError> {
        Self::from_members(params.iter().map(|&p| Candidate { params: p, loss: 0.0 }).collect())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn params(&self) -> impl Iterator<Item = &PursuerParams> + '_ {
        self.members.iter().map(|c| &c.params)
    }
}

/// Insert the free sub-vector into a copy of `frozen`, in canonical order.
pub fn embed_free(free: &[f64], frozen: &PursuerParams, case: LearningCase) -> Result<PursuerParams, DomainError> {
    embed_with_mask(free, frozen, &case.free_mask())
}

pub fn embed_with_mask(free: &[f64], frozen: &PursuerParams, mask: &FreeMask) -> Result<PursuerParams, DomainError> {
    let expected = mask.iter().filter(|m| **m).count();
    if free.len() != expected {
        return Err(DomainError::LengthMismatch { expected, got: free.len() });
    }
    let mut v = frozen.to_array();
    let mut it = free.iter();
    for (vi, _) in v.iter_mut().zip(mask).filter(|(_, m)| **m) {
        *vi = *it.next().expect("length checked");
    }
    Ok(PursuerParams::from_array(v))
}

/// Free components of `params` in canonical order.
pub fn extract_free(params: &PursuerParams, case: LearningCase) -> Vec<f64> {
    extract_with_mask(params, &case.free_mask())
}

pub fn extract_with_mask(params: &PursuerParams, mask: &FreeMask) -> Vec<f64> {
    params.to_array().iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| *v).collect()
}

/// Componentwise mean and population standard deviation; the heading uses
/// the circular mean and circular standard deviation `sqrt(−2 ln R̄)`.
pub fn summary_stats(members: &[PursuerParams]) -> Result<(PursuerParams, [f64; 6]), DomainError> {
    if members.is_empty() {
        return Err(DomainError::EmptyCandidates);
    }
    let n = members.len() as f64;
    let mut mean = [0.0; 6];
    let mut std = [0.0; 6];
    for k in 0..6 {
        if k == PursuerParams::HEADING {
            let (s, c) = members.iter().fold((0.0, 0.0), |(s, c), p| {
                let (ps, pc) = p.heading.sin_cos();
                (s + ps, c + pc)
            });
            let (s, c) = (s / n, c / n);
            let resultant = (s * s + c * c).sqrt().min(1.0);
            mean[k] = wrap_angle(s.atan2(c));
            std[k] = if resultant > 0.0 { (-2.0 * resultant.ln()).max(0.0).sqrt() } else { f64::INFINITY };
            continue;
        }
        let m = members.iter().map(|p| p.to_array()[k]).sum::<f64>() / n;
        let var = members.iter().map(|p| (p.to_array()[k] - m).powi(2)).sum::<f64>() / n;
        mean[k] = m;
        std[k] = var.max(0.0).sqrt();
    }
    Ok((PursuerParams::from_array(mean), std))
}
