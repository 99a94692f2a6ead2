//! Multi-start estimation of the free pursuer parameters.
//!
//! Every start is minimised with a projected quasi-Newton method in
//! coordinates normalised by the bound widths. A heading whose bounds span the
//! full circle is optimised without bounds and wrapped afterwards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Candidate, CandidateSet, Dataset, LearningCase};
use crate::geometry::{wrap_angle, ParamBounds, PursuerParams};
use crate::losses::{LossConfig, LossError, LossProblem};
use crate::optim::{bfgs_update, dot, identity, norm};

/// Loss below which a start is treated as exactly consistent.
pub const ZERO_LOSS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("loss is not finite at the start point")]
    NonFiniteStart,
    #[error("population needs at least one start")]
    NoStarts,
    #[error(transparent)]
    Loss(#[from] LossError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Length of the first trial step in normalised coordinates.
    pub step_init: f64,
    pub eps_l: f64,
    pub sigma_thresh: [f64; 6],
    pub jitter_scale: [f64; 6],
    pub n_p: usize,
}

impl OptimizerConfig {
    /// Population 64, `ε_L = 1e-6`, thresholds 2% and jitter 1% of each bound width.
    pub fn defaults_for(bounds: &ParamBounds) -> Self {
        let w = bounds.width();
        Self {
            max_iters: 500,
            grad_tol: 1e-8,
            step_init: 0.05,
            eps_l: 1e-6,
            sigma_thresh: w.map(|wi| 0.02 * wi),
            jitter_scale: w.map(|wi| 0.01 * wi),
            n_p: 64,
        }
    }
}

/// Latin hypercube sample over the free dimensions; frozen dimensions are
/// copied from `frozen`. Degenerate free dimensions are pinned at their bound.
pub fn lhs_sample(
    bounds: &ParamBounds,
    case: LearningCase,
    frozen: &PursuerParams,
    n: usize,
    seed: u64,
) -> Vec<PursuerParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, w) = (bounds.lower.to_array(), bounds.width());
    let mask = case.free_mask();
    let mut cols: [Vec<f64>; 6] = Default::default();
    for k in 0..6 {
        if !mask[k] {
            continue;
        }
        let mut strata: Vec<usize> = (0..n).collect();
        // Fisher-Yates keeps the draw order independent of other dimensions
        for i in (1..n).rev() {
            strata.swap(i, rng.random_range(0..=i));
        }
        cols[k] = strata
            .into_iter()
            .map(|s| lo[k] + w[k] * (s as f64 + rng.random::<f64>()) / n as f64)
            .collect();
    }
    let base = frozen.to_array();
    (0..n)
        .map(|i| {
            let v: [f64; 6] = std::array::from_fn(|k| if mask[k] { cols[k][i] } else { base[k] });
            bounds.clamp(&PursuerParams::from_array(v))
        })
        .collect()
}

/// Map between free parameters and normalised optimisation coordinates.
struct Scaling {
    lower: [f64; 6],
    width: [f64; 6],
    free: Vec<usize>,
    periodic: Vec<bool>,
    base: PursuerParams,
}

impl Scaling {
    fn new(bounds: &ParamBounds, case: LearningCase, base: PursuerParams) -> Self {
        let free: Vec<usize> = (0..6).filter(|&k| case.free_mask()[k]).collect();
        let periodic = free
            .iter()
            .map(|&k| k == PursuerParams::HEADING && bounds.heading_is_periodic())
            .collect();
        let width = bounds.width().map(|w| if w > 0.0 { w } else { 1.0 });
        Self { lower: bounds.lower.to_array(), width, free, periodic, base }
    }

    fn to_u(&self, p: &PursuerParams) -> Vec<f64> {
        let v = p.to_array();
        self.free.iter().map(|&k| (v[k] - self.lower[k]) / self.width[k]).collect()
    }

    fn to_params(&self, u: &[f64]) -> PursuerParams {
        let mut v = self.base.to_array();
        for (&k, ui) in self.free.iter().zip(u) {
            v[k] = self.lower[k] + self.width[k] * ui;
        }
        let mut p = PursuerParams::from_array(v);
        p.heading = wrap_angle(p.heading);
        p
    }

    fn grad_u(&self, g: &[f64; 6]) -> Vec<f64> {
        self.free.iter().map(|&k| g[k] * self.width[k]).collect()
    }

    fn project(&self, u: &mut [f64]) {
        for (ui, &per) in u.iter_mut().zip(&self.periodic) {
            if !per {
                *ui = ui.clamp(0.0, 1.0);
            }
        }
    }

    /// Coordinates pinned at a bound with the gradient pushing outward.
    fn active(&self, u: &[f64], g: &[f64]) -> Vec<bool> {
        u.iter()
            .zip(g)
            .zip(&self.periodic)
            .map(|((&ui, &gi), &per)| !per && ((ui <= 0.0 && gi > 0.0) || (ui >= 1.0 && gi < 0.0)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub theta: PursuerParams,
    pub loss: f64,
    pub iters: usize,
}

/// Minimise the total loss from `start` within `bounds`.
pub fn optimize_candidate(
    start: &PursuerParams,
    data: &Dataset,
    cfg: &LossConfig,
    ocfg: &OptimizerConfig,
    bounds: &ParamBounds,
) -> Result<OptimResult, InferenceError> {
    let problem = LossProblem::new(data, cfg)?;
    optimize_prepared(start, &problem, ocfg, bounds)
}

/// [`optimize_candidate`] on an already prepared problem.
pub fn optimize_prepared(
    start: &PursuerParams,
    problem: &LossProblem,
    ocfg: &OptimizerConfig,
    bounds: &ParamBounds,
) -> Result<OptimResult, InferenceError> {
    let sc = Scaling::new(bounds, problem.case(), bounds.clamp(start));
    let n = sc.free.len();
    let mut u = sc.to_u(&sc.base);
    let eval = |u: &[f64]| {
        let (f, g) = problem.loss_and_gradient(&sc.to_params(u));
        (f, sc.grad_u(&g))
    };
    let (mut f, mut g) = eval(&u);
    if !f.is_finite() {
        return Err(InferenceError::NonFiniteStart);
    }
    // inverse Hessian approximation, row-major
    let mut h = identity(n);
    let mut fresh = true;
    let mut iters = 0;
    let mut moved = false;
    while iters < ocfg.max_iters && f > ZERO_LOSS {
        let active = sc.active(&u, &g);
        let pg_norm = g.iter().zip(&active).filter(|(_, a)| !**a).map(|(gi, _)| gi.abs()).fold(0.0, f64::max);
        if pg_norm <= ocfg.grad_tol {
            break;
        }
        iters += 1;
        let mut d = direction(&h, &g, &active);
        if dot(&d, &g) >= 0.0 {
            h = identity(n);
            fresh = true;
            d = direction(&h, &g, &active);
        }
        if fresh {
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            let s = ocfg.step_init / norm.max(1e-300);
            d.iter_mut().for_each(|x| *x *= s);
        }
        match line_search(&sc, &eval, &u, f, &g, &d) {
            Some((u_new, f_new, g_new)) => {
                let s: Vec<f64> = u_new.iter().zip(&u).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
                    if fresh {
                        let scale = sy / dot(&y, &y);
                        h.iter_mut().for_each(|x| *x *= scale);
                    }
                    bfgs_update(&mut h, &s, &y, sy);
                    fresh = false;
                }
                u = u_new;
                moved = true;
                f = f_new;
                g = g_new;
            }
            None if !fresh => {
                h = identity(n);
                fresh = true;
            }
            None => break,
        }
    }
    // untouched starts are returned bitwise, avoiding a rescaling round trip
    let theta = if moved { bounds.clamp(&sc.to_params(&u)) } else { sc.base };
    Ok(OptimResult { theta, loss: problem.loss(&theta), iters })
}

/// `−H g` on the inactive coordinates, zero on the active ones.
fn direction(h: &[f64], g: &[f64], active: &[bool]) -> Vec<f64> {
    let n = g.len();
    (0..n)
        .map(|i| {
            if active[i] {
                return 0.0;
            }
            -(0..n).filter(|&j| !active[j]).map(|j| h[i * n + j] * g[j]).sum::<f64>()
        })
        .collect()
}

type Eval<'a> = dyn Fn(&[f64]) -> (f64, Vec<f64>) + 'a;

/// Armijo backtracking along the projected path `P(u + t·d)`.
fn line_search(
    sc: &Scaling,
    eval: &Eval<'_>,
    u: &[f64],
    f: f64,
    g: &[f64],
    d: &[f64],
) -> Option<(Vec<f64>, f64, Vec<f64>)> {
    let mut t = 1.0;
    for _ in 0..50 {
        let mut trial: Vec<f64> = u.iter().zip(d).map(|(a, b)| a + t * b).collect();
        sc.project(&mut trial);
        let step: Vec<f64> = trial.iter().zip(u).map(|(a, b)| a - b).collect();
        let decrease = dot(g, &step);
        if norm(&step) == 0.0 || decrease >= 0.0 {
            return None;
        }
        let (ft, gt) = eval(&trial);
        if ft.is_finite() && ft <= f + 1e-4 * decrease {
            return Some((trial, ft, gt));
        }
        t *= 0.5;
    }
    None
}

/// Result of one optimise-filter-resample round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub candidates: CandidateSet,
    pub next_starts: Vec<PursuerParams>,
    pub n_retained: usize,
    /// No start met `ε_L`; a fresh Latin hypercube batch was optimised instead.
    pub fallback: bool,
    /// Even the fallback retained nothing; `candidates` holds the best member only.
    pub infeasible: bool,
}

fn optimize_all(
    starts: &[PursuerParams],
    problem: &LossProblem,
    ocfg: &OptimizerConfig,
    bounds: &ParamBounds,
) -> Result<Vec<OptimResult>, InferenceError> {
    starts.par_iter().map(|s| optimize_prepared(s, problem, ocfg, bounds)).collect()
}

fn retained(results: &[OptimResult], eps_l: f64) -> Vec<Candidate> {
    results
        .iter()
        .filter(|r| r.loss <= eps_l)
        .map(|r| Candidate { params: r.theta, loss: r.loss })
        .collect()
}

/// Optimise every start, keep those with loss ≤ `ε_L`, and resample with jitter up to `N_p`.
pub fn update_round(
    prev_starts: &[PursuerParams],
    problem: &LossProblem,
    ocfg: &OptimizerConfig,
    bounds: &ParamBounds,
    frozen: &PursuerParams,
    seed: u64,
) -> Result<RoundResult, InferenceError> {
    if prev_starts.is_empty() {
        return Err(InferenceError::NoStarts);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let results = optimize_all(prev_starts, problem, ocfg, bounds)?;
    let mut kept = retained(&results, ocfg.eps_l);
    let mut fallback = false;
    let mut infeasible = false;
    if kept.is_empty() {
        fallback = true;
        let fresh = lhs_sample(bounds, problem.case(), frozen, ocfg.n_p, rng.random());
        let fresh_results = optimize_all(&fresh, problem, ocfg, bounds)?;
        kept = retained(&fresh_results, ocfg.eps_l);
        if kept.is_empty() {
            infeasible = true;
            let best = results
                .iter()
                .chain(&fresh_results)
                .min_by(|a, b| a.loss.total_cmp(&b.loss))
                .expect("nonempty");
            let candidates = CandidateSet::from_members(vec![Candidate { params: best.theta, loss: best.loss }])
                .expect("nonempty");
            let next_starts = lhs_sample(bounds, problem.case(), frozen, ocfg.n_p, rng.random());
            return Ok(RoundResult { candidates, next_starts, n_retained: 0, fallback, infeasible });
        }
    }
    let n_retained = kept.len();
    let next_starts = resample_with_jitter(&kept, ocfg, bounds, problem.case(), &mut rng);
    let candidates = CandidateSet::from_members(kept).expect("nonempty");
    Ok(RoundResult { candidates, next_starts, n_retained, fallback, infeasible })
}

/// All retained members, then jittered copies drawn with replacement up to `N_p`.
pub fn resample_with_jitter(
    kept: &[Candidate],
    ocfg: &OptimizerConfig,
    bounds: &ParamBounds,
    case: LearningCase,
    rng: &mut impl Rng,
) -> Vec<PursuerParams> {
    let mask = case.free_mask();
    let mut out: Vec<PursuerParams> = kept.iter().map(|c| c.params).collect();
    while out.len() < ocfg.n_p.max(kept.len()) {
        let base = kept[rng.random_range(0..kept.len())].params.to_array();
        let v: [f64; 6] = std::array::from_fn(|k| {
            let z: f64 = rng.sample(StandardNormal);
            if mask[k] {
                base[k] + ocfg.jitter_scale[k] * z
            } else {
                base[k]
            }
        });
        out.push(bounds.clamp(&PursuerParams::from_array(v)));
    }
    out
}

/// Whether every free standard deviation is within its threshold.
pub fn is_converged(cands: &CandidateSet, case: LearningCase, sigma_thresh: &[f64; 6]) -> bool {
    case.free_mask()
        .iter()
        .zip(cands.std.iter().zip(sigma_thresh))
        .all(|(free, (s, t))| !free || s <= t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::InterceptionModel;
    use crate::geometry::{rr_field, Point2};
    use crate::truthsim::{simulate_engagement, NoiseSpec, SimConfig, TrajectorySpec};
    use std::f64::consts::PI;

    fn bounds() -> ParamBounds {
        ParamBounds::new(
            PursuerParams::new(-2.0, -2.0, -PI, 0.1, 0.5, 0.5),
            PursuerParams::new(2.0, 2.0, PI, 1.0, 3.0, 2.0),
        )
        .unwrap()
    }

    fn truth() -> PursuerParams {
        PursuerParams::new(0.3, -0.4, 0.8, 0.4, 1.6, 1.0)
    }

    fn dataset(case: LearningCase, alphas: &[f64]) -> Dataset {
        let cfg = SimConfig {
            model: InterceptionModel::Boundary,
            noise: NoiseSpec::none(),
            domain_radius: 11.8,
            dt: 0.059,
            record_launch: case.uses_launch_time(),
        };
        let mut data = Dataset::new(case, InterceptionModel::Boundary, [[0.0; 2]; 2], 0.0);
        for (i, &alpha) in alphas.iter().enumerate() {
            let start = Point2::from_polar(5.9, alpha);
            let t = truth();
            let heading = (t.y - start.y).atan2(t.x - start.x) + 0.1 * i as f64;
            let spec = TrajectorySpec { alpha, heading, speed: 1.0, r_s: 5.9, center: Point2::new(0.0, 0.0) };
            data.push(simulate_engagement(&t, &spec, &cfg, i as u64).unwrap());
        }
        data
    }

    fn loss_cfg() -> LossConfig {
        LossConfig::new(3.0, 0.118, 200, &[[0.0; 2]; 2], 0.0)
    }

    #[test]
    fn lhs_stratifies_each_free_dimension() {
        let b = bounds();
        for seed in [1, 2] {
            let pts = lhs_sample(&b, LearningCase::Case2A, &truth(), 8, seed);
            assert_eq!(pts.len(), 8);
            for k in [0, 1, 3, 4] {
                let (lo, w) = (b.lower.to_array()[k], b.width()[k]);
                let mut bins: Vec<usize> = pts.iter().map(|p| ((p.to_array()[k] - lo) / w * 8.0) as usize).collect();
                bins.sort_unstable();
                assert_eq!(bins, (0..8).collect::<Vec<_>>());
            }
            assert!(pts.iter().all(|p| p.speed == truth().speed));
        }
        assert_ne!(lhs_sample(&b, LearningCase::Case1A, &truth(), 8, 1), lhs_sample(&b, LearningCase::Case1A, &truth(), 8, 2));
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let data = dataset(LearningCase::Case3A, &[0.0, 1.5, 3.0]);
        let ocfg = OptimizerConfig::defaults_for(&bounds());
        let r = optimize_candidate(&truth(), &data, &loss_cfg(), &ocfg, &bounds()).unwrap();
        assert_eq!(r.loss, 0.0);
        assert_eq!(r.iters, 0);
        assert_eq!(r.theta, truth());
    }

    #[test]
    fn optimizer_descends_and_respects_bounds() {
        let data = dataset(LearningCase::Case2A, &[0.0, 2.0, 4.0]);
        let ocfg = OptimizerConfig::defaults_for(&bounds());
        let prob = LossProblem::new(&data, &loss_cfg()).unwrap();
        for start in lhs_sample(&bounds(), LearningCase::Case2A, &truth(), 12, 5) {
            let r = optimize_prepared(&start, &prob, &ocfg, &bounds()).unwrap();
            assert!(r.loss <= prob.loss(&start) + 1e-15);
            assert!(bounds().contains(&r.theta));
        }
    }

    #[test]
    fn single_hit_offset_along_heading_converges_to_consistent_pose() {
        let data = dataset(LearningCase::Case1A, &[0.4]);
        let c = loss_cfg();
        let mut start = truth();
        start.x += 0.3 * truth().heading.cos();
        start.y += 0.3 * truth().heading.sin();
        let r = optimize_candidate(&start, &data, &c, &OptimizerConfig::defaults_for(&bounds()), &bounds()).unwrap();
        assert!(r.loss <= 1e-6, "{}", r.loss);
        let terminal = data.records[0].terminal;
        assert!(crate::geometry::boundary_residual(terminal, &r.theta).abs() <= c.eps_pos + 1e-3);
        assert!(rr_field(terminal, &r.theta).is_finite());
    }

    #[test]
    fn round_keeps_members_and_fills_population() {
        let data = dataset(LearningCase::Case1A, &[0.0, 2.0]);
        let prob = LossProblem::new(&data, &loss_cfg()).unwrap();
        let mut ocfg = OptimizerConfig::defaults_for(&bounds());
        ocfg.n_p = 10;
        let starts = vec![truth(); 5];
        let r = update_round(&starts, &prob, &ocfg, &bounds(), &truth(), 3).unwrap();
        assert_eq!(r.n_retained, 5);
        assert!(r.candidates.std.iter().all(|s| *s < 1e-7));
        assert_eq!(r.next_starts.len(), 10);
        assert_eq!(&r.next_starts[..5], &starts[..]);
        assert!(r.next_starts.iter().all(|p| bounds().contains(p)));
    }

    #[test]
    fn infinite_threshold_retains_everything() {
        let data = dataset(LearningCase::Case2A, &[0.0]);
        let prob = LossProblem::new(&data, &loss_cfg()).unwrap();
        let mut ocfg = OptimizerConfig::defaults_for(&bounds());
        ocfg.eps_l = f64::INFINITY;
        ocfg.max_iters = 3;
        let starts = lhs_sample(&bounds(), LearningCase::Case2A, &truth(), 6, 0);
        let r = update_round(&starts, &prob, &ocfg, &bounds(), &truth(), 1).unwrap();
        assert_eq!(r.n_retained, 6);
        assert!(!r.fallback);
    }

    #[test]
    fn rounds_are_deterministic() {
        let data = dataset(LearningCase::Case2A, &[0.0, 2.0]);
        let prob = LossProblem::new(&data, &loss_cfg()).unwrap();
        let mut ocfg = OptimizerConfig::defaults_for(&bounds());
        ocfg.n_p = 16;
        let starts = lhs_sample(&bounds(), LearningCase::Case2A, &truth(), 16, 9);
        let a = update_round(&starts, &prob, &ocfg, &bounds(), &truth(), 4).unwrap();
        let b = update_round(&starts, &prob, &ocfg, &bounds(), &truth(), 4).unwrap();
        assert_eq!(a, b);
    }
}
