//! Ground-truth engagement simulator.
//!
//! Agents fly straight lines at constant speed. The hidden pursuer captures
//! them on the reachable-region boundary or uniformly inside it; recorded
//! positions and launch times may carry Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{InterceptionModel, TrialRecord};
use crate::geometry::{rr_field, turning_centers, GeometryError, Point2, PursuerParams};

/// Target accuracy of a refined boundary crossing.
pub const CROSSING_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TruthSimError {
    #[error("start point lies inside the true reachable region")]
    StartInsideRegion,
    #[error("invalid simulation setting: {0}")]
    InvalidSetting(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Straight inbound leg starting on a circle of radius `r_s` about `center`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub alpha: f64,
    pub heading: f64,
    pub speed: f64,
    pub r_s: f64,
    pub center: Point2,
}

impl TrajectorySpec {
    pub fn start(&self) -> Point2 {
        self.center.advance(self.alpha, self.r_s)
    }

    pub fn direction(&self) -> Point2 {
        Point2::from_polar(1.0, self.heading)
    }

    pub fn position_at(&self, t: f64) -> Point2 {
        self.start().advance(self.heading, self.speed * t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_pos: [[f64; 2]; 2],
    pub sigma_t: f64,
    pub enabled: bool,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self { sigma_pos: [[0.0; 2]; 2], sigma_t: 0.0, enabled: false }
    }

    pub fn isotropic(sigma_pos: f64, sigma_t: f64) -> Self {
        let v = sigma_pos * sigma_pos;
        Self { sigma_pos: [[v, 0.0], [0.0, v]], sigma_t, enabled: true }
    }

    /// Covariance and launch-time std as seen by the loss margins.
    pub fn effective(&self) -> ([[f64; 2]; 2], f64) {
        if self.enabled {
            (self.sigma_pos, self.sigma_t)
        } else {
            ([[0.0; 2]; 2], 0.0)
        }
    }

    fn validate(&self) -> Result<(), TruthSimError> {
        let s = &self.sigma_pos;
        let finite = s.iter().flatten().all(|v| v.is_finite()) && self.sigma_t.is_finite();
        let psd = s[0][0] >= 0.0 && s[1][1] >= 0.0 && s[0][0] * s[1][1] - s[0][1] * s[1][0] >= -1e-15;
        if !finite || s[0][1] != s[1][0] || !psd || self.sigma_t < 0.0 {
            return Err(TruthSimError::InvalidSetting("noise covariance must be symmetric PSD"));
        }
        Ok(())
    }

    /// Lower Cholesky factor of the 2×2 covariance.
    fn cholesky(&self) -> [[f64; 2]; 2] {
        let s = &self.sigma_pos;
        let l11 = s[0][0].max(0.0).sqrt();
        let l21 = if l11 > 0.0 { s[1][0] / l11 } else { 0.0 };
        let l22 = (s[1][1] - l21 * l21).max(0.0).sqrt();
        [[l11, 0.0], [l21, l22]]
    }
}

/// Everything except the trajectory and the seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: InterceptionModel,
    pub noise: NoiseSpec,
    /// Radius of the region of interest about the trajectory centre.
    pub domain_radius: f64,
    pub dt: f64,
    pub record_launch: bool,
}

/// How the path entered the true reachable region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossingKind {
    /// `φ_RR` passes through zero; the crossing is refined to [`CROSSING_TOL`].
    Continuous,
    /// `φ_RR` jumps from positive to negative where the path leaves a turning disc.
    Jump,
}

/// Simulator output including noise-free ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Engagement {
    pub record: TrialRecord,
    pub true_terminal: Point2,
    pub true_positions: Vec<Point2>,
    /// First entry into the region along the whole path, whatever the model.
    pub first_entry: Option<(f64, CrossingKind)>,
}

/// Simulate one sacrificial agent and return its measured record.
pub fn simulate_engagement(
    truth: &PursuerParams,
    spec: &TrajectorySpec,
    cfg: &SimConfig,
    seed: u64,
) -> Result<TrialRecord, TruthSimError> {
    simulate_detailed(truth, spec, cfg, seed).map(|e| e.record)
}

pub fn simulate_detailed(
    truth: &PursuerParams,
    spec: &TrajectorySpec,
    cfg: &SimConfig,
    seed: u64,
) -> Result<Engagement, TruthSimError> {
    truth.validate()?;
    cfg.noise.validate()?;
    if !(cfg.dt > 0.0) || !cfg.dt.is_finite() {
        return Err(TruthSimError::InvalidSetting("dt must be positive"));
    }
    if !(spec.speed > 0.0) || !(spec.r_s > 0.0) || !spec.heading.is_finite() || !spec.alpha.is_finite() {
        return Err(TruthSimError::InvalidSetting("trajectory needs positive speed and standoff"));
    }
    if !(cfg.domain_radius > spec.r_s) {
        return Err(TruthSimError::InvalidSetting("start must lie inside the region of interest"));
    }
    let start = spec.start();
    if rr_field(start, truth) < 0.0 {
        return Err(TruthSimError::StartInsideRegion);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let s_exit = exit_distance(start, spec.direction(), spec.center, cfg.domain_radius);
    let t_exit = s_exit / spec.speed;
    let first_entry = first_crossing(start, spec.heading, s_exit, truth)
        .map(|c| (c.s / spec.speed, c.kind));

    let mut times = sample_times(cfg.dt, t_exit);
    let (t_final, intercepted) = match cfg.model {
        InterceptionModel::Boundary => match first_entry {
            Some((t, _)) => (t, true),
            None => (t_exit, false),
        },
        InterceptionModel::Interior => {
            let inside: Vec<f64> =
                times.iter().copied().filter(|&t| rr_field(spec.position_at(t), truth) < 0.0).collect();
            if !inside.is_empty() {
                (inside[rng.random_range(0..inside.len())], true)
            } else if let Some(t) = first_entry.and_then(|_| deep_point(start, spec, s_exit, truth)) {
                // the region is thinner than one step; capture at its interior point
                (t, true)
            } else {
                (t_exit, false)
            }
        }
    };
    times.retain(|&t| t < t_final);
    if times.last().is_some_and(|&t| t_final - t <= 1e-12 * t_final.max(1.0)) {
        times.pop();
    }
    times.push(t_final);
    if times.len() == 1 {
        times.insert(0, 0.0);
    }

    let true_positions: Vec<Point2> = times.iter().map(|&t| spec.position_at(t)).collect();
    let true_terminal = *true_positions.last().expect("nonempty");

    let t_launch = (cfg.record_launch && intercepted).then(|| {
        let length = rr_field(true_terminal, truth) + truth.range;
        t_final - length / truth.speed
    });

    let (positions, t_launch) = if cfg.noise.enabled {
        let l = cfg.noise.cholesky();
        let noisy: Vec<Point2> = true_positions
            .iter()
            .map(|p| {
                let (z1, z2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                Point2::new(p.x + l[0][0] * z1, p.y + l[1][0] * z1 + l[1][1] * z2)
            })
            .collect();
        let t_launch = t_launch.map(|t| t + cfg.noise.sigma_t * rng.sample::<f64, _>(StandardNormal));
        (noisy, t_launch)
    } else {
        (true_positions.clone(), t_launch)
    };

    let record = TrialRecord {
        start,
        heading: spec.heading,
        speed: spec.speed,
        terminal: *positions.last().expect("nonempty"),
        times,
        positions,
        intercepted,
        t_final,
        t_launch,
    };
    Ok(Engagement { record, true_terminal, true_positions, first_entry })
}

/// `0, dt, 2dt, …` strictly below `t_end`, then `t_end`.
fn sample_times(dt: f64, t_end: f64) -> Vec<f64> {
    let n = (t_end / dt).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).filter(|&t| t < t_end).collect();
    if times.last().is_some_and(|&t| t_end - t <= 1e-12 * t_end.max(1.0)) {
        times.pop();
    }
    times.push(t_end);
    times
}

/// Distance along `dir` from `start` (inside the disc) to the disc boundary.
fn exit_distance(start: Point2, dir: Point2, center: Point2, radius: f64) -> f64 {
    let w = start.sub(&center);
    let b = w.dot(&dir);
    let c = w.dot(&w) - radius * radius;
    -b + (b * b - c).max(0.0).sqrt()
}

/// Arc-length parameters in `(0, s_end)` where the line meets either turning circle.
fn circle_breaks(start: Point2, heading: f64, s_end: f64, truth: &PursuerParams) -> Vec<f64> {
    let dir = Point2::from_polar(1.0, heading);
    let a = truth.turn_radius;
    let mut out: Vec<f64> = turning_centers(truth)
        .iter()
        .flat_map(|c| {
            let w = start.sub(c);
            let b = w.dot(&dir);
            let disc = b * b - (w.dot(&w) - a * a);
            if disc <= 0.0 {
                return vec![];
            }
            let r = disc.sqrt();
            vec![-b - r, -b + r]
        })
        .filter(|&s| s > 0.0 && s < s_end)
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Crossing {
    pub s: f64,
    pub kind: CrossingKind,
}

/// First entry of the straight ray into `{φ_RR < 0}` within `[0, s_end]`.
///
/// `φ_RR` is 1-Lipschitz between crossings of the turning circles, so each
/// such piece is sphere-traced and a found sign change is bisected.
pub(crate) fn first_crossing(start: Point2, heading: f64, s_end: f64, truth: &PursuerParams) -> Option<Crossing> {
    let phi = |s: f64| rr_field(start.advance(heading, s), truth);
    let scale = truth.turn_radius.max(truth.range).max(s_end);
    let h_min = 1e-9 * scale;
    let eta = 1e-12 * scale;
    let mut cuts = vec![0.0];
    cuts.extend(circle_breaks(start, heading, s_end, truth));
    cuts.push(s_end);
    for piece in cuts.windows(2) {
        let (lo, hi) = (piece[0], piece[1]);
        if hi - lo <= 2.0 * eta {
            continue;
        }
        let mut s = if lo > 0.0 { lo + eta } else { 0.0 };
        let mut f = phi(s);
        if f < 0.0 {
            return Some(Crossing { s, kind: CrossingKind::Jump });
        }
        while s < hi - eta {
            let next = (s + f.max(h_min)).min(hi - eta);
            let fn_ = phi(next);
            if fn_ < 0.0 {
                return Some(Crossing { s: bisect(&phi, s, next), kind: CrossingKind::Continuous });
            }
            s = next;
            f = fn_;
        }
    }
    None
}

/// Refine a bracket with `φ(lo) ≥ 0 > φ(hi)`.
fn bisect(phi: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = phi(mid);
        if f.abs() <= 0.1 * CROSSING_TOL {
            return mid;
        }
        if f >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if phi(lo).abs() <= phi(hi).abs() {
        lo
    } else {
        hi
    }
}

/// Time of an in-region point just past the first entry, used when the
/// region is thinner than one sampling step.
fn deep_point(start: Point2, spec: &TrajectorySpec, s_exit: f64, truth: &PursuerParams) -> Option<f64> {
    let entry = first_crossing(start, spec.heading, s_exit, truth)?;
    let phi = |s: f64| rr_field(start.advance(spec.heading, s), truth);
    (0..40)
        .map(|k| entry.s + 1e-12 * s_exit * 2f64.powi(k))
        .take_while(|&s| s < s_exit)
        .find(|&s| phi(s) < 0.0)
        .map(|s| s / spec.speed)
}
