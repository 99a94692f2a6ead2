//! Choosing the next sacrificial trajectory.
//!
//! Both strategies search a grid of straight legs whose starts lie on a circle
//! of radius `r_s`: the boundary heuristic spreads predicted interception
//! points, and the Bayesian design maximises a D-optimality gain of a
//! Gauss–Newton information surrogate.

use nalgebra::{Matrix6, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

use crate::domain::{CandidateSet, Dataset, FreeMask, InterceptionModel};
use crate::geometry::{rr_field, rr_gradient, wrap_angle, Point2, PursuerParams};
use crate::truthsim::{first_crossing, TrajectorySpec};

/// Ridge added to both log-determinant arguments.
pub const INFO_RIDGE: f64 = 1e-6;
/// Eigenvalue floor accepted as positive semidefinite, relative to `max(1, largest |entry|)`.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("information matrix is not positive semidefinite (min eigenvalue {0})")]
    NotPsd(f64),
    #[error("candidate set is empty")]
    NoCandidates,
}

/// Symmetric 6×6 curvature surrogate over `(x, y, ψ, a, R, v)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoMatrix {
    pub m: [[f64; 6]; 6],
}

impl Default for InfoMatrix {
    fn default() -> Self {
        Self::zero()
    }
}

impl InfoMatrix {
    pub fn zero() -> Self {
        Self { m: [[0.0; 6]; 6] }
    }

    pub fn scaled_identity(mu: f64) -> Self {
        let mut out = Self::zero();
        for i in 0..6 {
            out.m[i][i] = mu;
        }
        out
    }

    /// `w²·g gᵀ`, exactly symmetric.
    pub fn outer(g: &[f64; 6], w: f64) -> Self {
        let w2 = w * w;
        Self { m: std::array::from_fn(|i| std::array::from_fn(|j| w2 * (g[i] * g[j]))) }
    }

    pub fn add(&self, o: &InfoMatrix) -> Self {
        Self { m: std::array::from_fn(|i| std::array::from_fn(|j| self.m[i][j] + o.m[i][j])) }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { m: self.m.map(|row| row.map(|v| v * s)) }
    }

    /// Zero the rows and columns of frozen parameters.
    pub fn masked(&self, mask: &FreeMask) -> Self {
        Self { m: std::array::from_fn(|i| std::array::from_fn(|j| if mask[i] && mask[j] { self.m[i][j] } else { 0.0 })) }
    }

    pub fn is_zero(&self) -> bool {
        self.m.iter().flatten().all(|v| *v == 0.0)
    }

    fn matrix(&self) -> Matrix6<f64> {
        Matrix6::from_fn(|i, j| self.m[i][j])
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = 0.5 * (self.matrix() + self.matrix().transpose());
        SymmetricEigen::new(sym).eigenvalues.min()
    }

    pub fn rank(&self, tol: f64) -> usize {
        let sym = 0.5 * (self.matrix() + self.matrix().transpose());
        SymmetricEigen::new(sym).eigenvalues.iter().filter(|e| e.abs() > tol).count()
    }

    /// `log det(M + λI)`.
    fn logdet_ridged(&self) -> Result<f64, SelectionError> {
        let mut m = self.matrix();
        for i in 0..6 {
            m[(i, i)] += INFO_RIDGE;
        }
        match m.cholesky() {
            Some(c) => Ok(2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>()),
            None => Err(SelectionError::NotPsd(self.min_eigenvalue())),
        }
    }
}

/// `log det(I_past + λI + ΔI) − log det(I_past + λI)`.
pub fn d_gain(past: &InfoMatrix, delta: &InfoMatrix) -> Result<f64, SelectionError> {
    for m in [past, delta] {
        let e = m.min_eigenvalue();
        let scale = m.m.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
        if e < -PSD_TOL * scale {
            return Err(SelectionError::NotPsd(e));
        }
    }
    Ok(past.add(delta).logdet_ridged()? - past.logdet_ridged()?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionGrid {
    pub n_alpha: usize,
    pub n_psi: usize,
    /// Headings span `±psi_halfwidth` about the bearing to the candidate-mean position.
    pub psi_halfwidth: f64,
}

impl Default for SelectionGrid {
    fn default() -> Self {
        Self { n_alpha: 64, n_psi: 32, psi_halfwidth: std::f64::consts::FRAC_PI_3 }
    }
}

impl SelectionGrid {
    /// Start angles `2πi/n_alpha`.
    pub fn alphas(&self) -> Vec<f64> {
        (0..self.n_alpha).map(|i| TAU * i as f64 / self.n_alpha as f64).collect()
    }

    /// Heading offsets over the closed interval, so `2n − 1` refines `n`.
    pub fn psi_offsets(&self) -> Vec<f64> {
        let n = self.n_psi.max(2);
        (0..n).map(|j| -self.psi_halfwidth + 2.0 * self.psi_halfwidth * j as f64 / (n - 1) as f64).collect()
    }
}

/// Fixed geometry shared by every candidate leg.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionContext {
    pub r_s: f64,
    pub center: Point2,
    pub domain_radius: f64,
    pub agent_speed: f64,
    pub model: InterceptionModel,
    /// Path samples for interior predictions and miss-trajectory information.
    pub n_samples: usize,
    pub eps: f64,
    /// Penetration a candidate must exceed at some path sample to predict an
    /// interception; retained candidates may overlap a missed leg by up to the
    /// retention tolerance.
    pub hit_depth: f64,
}

impl SelectionContext {
    pub fn spec(&self, alpha: f64, heading: f64) -> TrajectorySpec {
        TrajectorySpec { alpha, heading: wrap_angle(heading), speed: self.agent_speed, r_s: self.r_s, center: self.center }
    }

    /// Leg aimed at `target` from start angle `alpha`.
    pub fn aimed(&self, alpha: f64, target: Point2) -> TrajectorySpec {
        let start = self.center.advance(alpha, self.r_s);
        self.spec(alpha, (target.y - start.y).atan2(target.x - start.x))
    }

    fn path_length(&self, spec: &TrajectorySpec) -> f64 {
        let start = spec.start();
        let dir = spec.direction();
        let w = start.sub(&self.center);
        let b = w.dot(&dir);
        let c = w.dot(&w) - self.domain_radius * self.domain_radius;
        -b + (b * b - c).max(0.0).sqrt()
    }

    /// Uniform samples along the leg up to the domain exit.
    pub fn path_samples(&self, spec: &TrajectorySpec) -> Vec<Point2> {
        let len = self.path_length(spec);
        let n = self.n_samples.max(2);
        let start = spec.start();
        (0..n).map(|k| start.advance(spec.heading, len * k as f64 / (n - 1) as f64)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub flags: Vec<bool>,
    pub hit_points: Vec<Option<Point2>>,
    pub p_hat: f64,
    pub centroid: Option<Point2>,
}

/// Interval of the ray inside the disc of radius `R` about the pursuer.
fn range_chord(start: Point2, heading: f64, len: f64, theta: &PursuerParams) -> Option<(f64, f64)> {
    let dir = Point2::from_polar(1.0, heading);
    let w = start.sub(&theta.position());
    let b = w.dot(&dir);
    let disc = b * b - (w.dot(&w) - theta.range * theta.range);
    if disc <= 0.0 {
        return None;
    }
    let r = disc.sqrt();
    let (lo, hi) = ((-b - r).max(0.0), (-b + r).min(len));
    (lo < hi).then_some((lo, hi))
}

/// Predicted hit of one candidate on a leg.
fn predict_one(theta: &PursuerParams, spec: &TrajectorySpec, ctx: &SelectionContext, samples: &[Point2]) -> Option<Point2> {
    let start = spec.start();
    let len = ctx.path_length(spec);
    let (lo, hi) = range_chord(start, spec.heading, len, theta)?;
    match ctx.model {
        InterceptionModel::Boundary => {
            let p = theta.position();
            let deep = samples.iter().any(|x| x.dist(&p) < theta.range && rr_field(*x, theta) < -ctx.hit_depth);
            if !deep {
                return None;
            }
            let from = start.advance(spec.heading, lo);
            first_crossing(from, spec.heading, hi - lo, theta).map(|c| from.advance(spec.heading, c.s))
        }
        InterceptionModel::Interior => {
            let p = theta.position();
            let inside: Vec<&Point2> = samples
                .iter()
                .filter(|x| x.dist(&p) < theta.range && rr_field(**x, theta) < -ctx.hit_depth)
                .collect();
            if inside.is_empty() {
                return None;
            }
            let n = inside.len() as f64;
            let (sx, sy) = inside.iter().fold((0.0, 0.0), |(a, b), x| (a + x.x, b + x.y));
            Some(Point2::new(sx / n, sy / n))
        }
    }
}

/// Per-candidate interception predictions, their rate and their centroid.
pub fn predicted_interceptions(cands: &CandidateSet, spec: &TrajectorySpec, ctx: &SelectionContext) -> Prediction {
    let samples = ctx.path_samples(spec);
    let hit_points: Vec<Option<Point2>> = cands.params().map(|t| predict_one(t, spec, ctx, &samples)).collect();
    let flags: Vec<bool> = hit_points.iter().map(Option::is_some).collect();
    let hits: Vec<Point2> = hit_points.iter().flatten().copied().collect();
    let p_hat = hits.len() as f64 / cands.len().max(1) as f64;
    let centroid = (!hits.is_empty()).then(|| {
        let n = hits.len() as f64;
        let (sx, sy) = hits.iter().fold((0.0, 0.0), |(a, b), x| (a + x.x, b + x.y));
        Point2::new(sx / n, sy / n)
    });
    Prediction { flags, hit_points, p_hat, centroid }
}

/// Grid cell in evaluation order.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Cell {
    alpha: f64,
    heading: f64,
}

fn grid_cells(cands: &CandidateSet, grid: &SelectionGrid, ctx: &SelectionContext) -> Vec<Cell> {
    let target = cands.mean.position();
    let offsets = grid.psi_offsets();
    grid.alphas()
        .into_iter()
        .flat_map(|alpha| {
            let start = ctx.center.advance(alpha, ctx.r_s);
            let bearing = (target.y - start.y).atan2(target.x - start.x);
            offsets.iter().map(move |o| Cell { alpha, heading: bearing + o }).collect::<Vec<_>>()
        })
        .collect()
}

/// First index of the strict maximum.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Leg aimed at the candidate-mean position from the start angle farthest from past starts.
pub fn fallback_spec(cands: &CandidateSet, past_starts: &[Point2], grid: &SelectionGrid, ctx: &SelectionContext) -> TrajectorySpec {
    let past: Vec<f64> = past_starts.iter().map(|s| (s.y - ctx.center.y).atan2(s.x - ctx.center.x)).collect();
    let alphas = grid.alphas();
    let spread: Vec<f64> = alphas
        .iter()
        .map(|a| past.iter().map(|p| wrap_angle(a - p).abs()).fold(f64::INFINITY, f64::min))
        .collect();
    let alpha = argmax(&spread).map_or(0.0, |i| alphas[i]);
    ctx.aimed(alpha, cands.mean.position())
}

/// Utility of a leg for the boundary heuristic.
fn spread_utility(centroid: Option<Point2>, past_hits: &[Point2], mean_pos: Point2) -> f64 {
    match centroid {
        None => f64::NEG_INFINITY,
        Some(c) if past_hits.is_empty() => c.dist(&mean_pos),
        Some(c) => past_hits.iter().map(|h| c.dist(h)).fold(f64::INFINITY, f64::min),
    }
}

/// Selection outcome with the score of the chosen cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub spec: TrajectorySpec,
    pub score: f64,
    pub fallback: bool,
}

/// Before any interception, only legs that at least this fraction of the ensemble expects to be intercepted are scored.
pub const SEED_HIT_FRACTION: f64 = 0.5;

/// Maximise the minimum distance between the predicted centroid and past hits.
pub fn select_boundary(
    cands: &CandidateSet,
    past_hits: &[Point2],
    past_starts: &[Point2],
    grid: &SelectionGrid,
    ctx: &SelectionContext,
) -> Result<Selected, SelectionError> {
    if cands.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    let mean_pos = cands.mean.position();
    let cells = grid_cells(cands, grid, ctx);
    let preds: Vec<(f64, f64)> = cells
        .par_iter()
        .map(|c| {
            let p = predicted_interceptions(cands, &ctx.spec(c.alpha, c.heading), ctx);
            (p.p_hat, spread_utility(p.centroid, past_hits, mean_pos))
        })
        .collect();
    let likely = preds.iter().any(|(p, _)| *p >= SEED_HIT_FRACTION);
    let scores: Vec<f64> = preds
        .iter()
        .map(|&(p, u)| match (likely, p >= SEED_HIT_FRACTION) {
            (true, true) => u,
            (true, false) => f64::NEG_INFINITY,
            // search mode: no leg is likely to be intercepted, so seek the most likely one
            (false, _) if p > 0.0 => p,
            (false, _) => f64::NEG_INFINITY,
        })
        .collect();
    Ok(match argmax(&scores).filter(|&i| scores[i] > f64::NEG_INFINITY) {
        Some(i) => Selected { spec: ctx.spec(cells[i].alpha, cells[i].heading), score: scores[i], fallback: false },
        None => Selected { spec: fallback_spec(cands, past_starts, grid, ctx), score: f64::NEG_INFINITY, fallback: true },
    })
}

/// Gauss–Newton increment of one outcome under `theta`.
///
/// A hit uses the hinge `φ_RR(hit) − ε`; a miss uses the worst path sample of `−φ_RR − ε`.
pub fn gn_increment(theta: &PursuerParams, traj: &[Point2], outcome: bool, hit_point: Option<Point2>, eps: f64) -> InfoMatrix {
    if outcome {
        let Some(hit) = hit_point else {
            return InfoMatrix::zero();
        };
        let w = rr_field(hit, theta) - eps;
        if w <= 0.0 {
            return InfoMatrix::zero();
        }
        return InfoMatrix::outer(&rr_gradient(hit, theta).grad, w);
    }
    let p = theta.position();
    let mut worst: Option<(f64, Point2)> = None;
    for x in traj {
        if x.dist(&p) - theta.range >= -eps {
            continue;
        }
        let w = -rr_field(*x, theta) - eps;
        if w > 0.0 && worst.is_none_or(|(bw, _)| w > bw) {
            worst = Some((w, *x));
        }
    }
    match worst {
        Some((w, x)) => InfoMatrix::outer(&rr_gradient(x, theta).grad, w),
        None => InfoMatrix::zero(),
    }
}

/// Ensemble-averaged expected increment of a leg.
pub fn expected_increment(spec: &TrajectorySpec, cands: &CandidateSet, ctx: &SelectionContext, mask: &FreeMask) -> InfoMatrix {
    let pred = predicted_interceptions(cands, spec, ctx);
    if pred.p_hat == 0.0 {
        // no candidate is entered, so every miss hinge is inactive too
        return InfoMatrix::zero();
    }
    let samples = ctx.path_samples(spec);
    let mut acc = InfoMatrix::zero();
    for theta in cands.params() {
        let hit = gn_increment(theta, &[], true, pred.centroid, ctx.eps).scale(pred.p_hat);
        let miss = gn_increment(theta, &samples, false, None, ctx.eps).scale(1.0 - pred.p_hat);
        acc = acc.add(&hit).add(&miss);
    }
    acc.scale(1.0 / cands.len() as f64).masked(mask)
}

/// D-optimality gain of a leg against the accumulated information.
pub fn expected_d_gain(
    spec: &TrajectorySpec,
    cands: &CandidateSet,
    past: &InfoMatrix,
    ctx: &SelectionContext,
    mask: &FreeMask,
) -> Result<f64, SelectionError> {
    let delta = expected_increment(spec, cands, ctx, mask);
    if delta.is_zero() {
        return Ok(0.0);
    }
    d_gain(past, &delta)
}

/// Sum over records of the ensemble-averaged realised increment.
pub fn accumulate_past_info(data: &Dataset, cands: &CandidateSet, n_samples: usize, eps: f64, mask: &FreeMask) -> InfoMatrix {
    let mut total = InfoMatrix::zero();
    for rec in &data.records {
        let traj: Vec<Point2> = if rec.intercepted {
            Vec::new()
        } else {
            let (t0, t1) = (rec.t_start(), rec.t_final);
            let n = n_samples.max(2);
            (0..n).map(|j| rec.position_at(t0 + (t1 - t0) * j as f64 / (n - 1) as f64)).collect()
        };
        let mut acc = InfoMatrix::zero();
        for theta in cands.params() {
            acc = acc.add(&gn_increment(theta, &traj, rec.intercepted, Some(rec.terminal), eps));
        }
        total = total.add(&acc.scale(1.0 / cands.len().max(1) as f64));
    }
    total.masked(mask)
}

/// Leg maximising the expected D-optimality gain.
pub fn select_bed(
    cands: &CandidateSet,
    data: &Dataset,
    grid: &SelectionGrid,
    ctx: &SelectionContext,
    mask: &FreeMask,
) -> Result<Selected, SelectionError> {
    if cands.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    let past = accumulate_past_info(data, cands, ctx.n_samples, ctx.eps, mask);
    let cells = grid_cells(cands, grid, ctx);
    let scores: Vec<f64> = cells
        .par_iter()
        .map(|c| expected_d_gain(&ctx.spec(c.alpha, c.heading), cands, &past, ctx, mask))
        .collect::<Result<_, _>>()?;
    let past_starts: Vec<Point2> = data.records.iter().map(|r| r.start).collect();
    Ok(match argmax(&scores).filter(|&i| scores[i] > 1e-12) {
        Some(i) => Selected { spec: ctx.spec(cells[i].alpha, cells[i].heading), score: scores[i], fallback: false },
        None => Selected { spec: fallback_spec(cands, &past_starts, grid, ctx), score: 0.0, fallback: true },
    })
}
