//! Squared-hinge consistency losses and their parameter gradients.
//!
//! The trajectory term keeps only its worst sample, so gradients use the
//! arg-max sample (a subgradient at ties).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{lambda_max_2x2, Dataset, InterceptionModel, LearningCase, TrialRecord};
use crate::geometry::{boundary_residual_gradient, rr_field, rr_gradient, Point2, PursuerParams};

/// Margin used when the measurement noise is zero.
pub const MARGIN_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("record has no samples")]
    EmptyRecord,
    #[error("record has no launch time")]
    MissingLaunchTime,
    #[error("dataset is empty")]
    EmptyDataset,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub beta: f64,
    pub alpha_cut: f64,
    pub n_traj_samples: usize,
    pub eps_pos: f64,
    pub delta_t: f64,
}

impl LossConfig {
    /// Margins `ε = β√λ_max(Σ_x)` and `δ = βσ_t`, floored at [`MARGIN_FLOOR`].
    pub fn new(beta: f64, alpha_cut: f64, n_traj_samples: usize, sigma_pos: &[[f64; 2]; 2], sigma_t: f64) -> Self {
        Self {
            beta,
            alpha_cut,
            n_traj_samples: n_traj_samples.max(2),
            eps_pos: (beta * lambda_max_2x2(sigma_pos).max(0.0).sqrt()).max(MARGIN_FLOOR),
            delta_t: (beta * sigma_t).max(MARGIN_FLOOR),
        }
    }

    pub fn for_dataset(beta: f64, alpha_cut: f64, n_traj_samples: usize, data: &Dataset) -> Self {
        Self::new(beta, alpha_cut, n_traj_samples, &data.sigma_pos, data.sigma_t)
    }
}

/// `½·max(0, x)²`.
#[inline]
pub fn resq(x: f64) -> f64 {
    let m = x.max(0.0);
    0.5 * m * m
}

/// Derivative of [`resq`].
#[inline]
pub fn resq_prime(x: f64) -> f64 {
    x.max(0.0)
}

/// Uniform resampling times over `[t_0, t_end]`.
fn resample(rec: &TrialRecord, t_end: f64, n: usize) -> Vec<Point2> {
    let t0 = rec.t_start();
    if t_end <= t0 {
        return vec![rec.positions[0]];
    }
    (0..n)
        .map(|j| rec.position_at(t0 + (t_end - t0) * j as f64 / (n - 1) as f64))
        .collect()
}

/// A record reduced to what the loss needs, independent of `θ`.
#[derive(Clone, Debug, PartialEq)]
struct Prepared {
    /// Resampled points for the trajectory term; empty when the term is absent.
    traj: Vec<Point2>,
    terminal: Point2,
    intercepted: bool,
    t_final: f64,
    t_launch: Option<f64>,
}

impl Prepared {
    fn new(rec: &TrialRecord, cfg: &LossConfig, model: InterceptionModel) -> Result<Self, LossError> {
        if rec.times.is_empty() || rec.positions.len() != rec.times.len() {
            return Err(LossError::EmptyRecord);
        }
        let traj = match (model, rec.intercepted) {
            (InterceptionModel::Boundary, true) => resample(rec, rec.t_final - cfg.alpha_cut, cfg.n_traj_samples),
            (_, false) => resample(rec, rec.t_final, cfg.n_traj_samples),
            (InterceptionModel::Interior, true) => Vec::new(),
        };
        Ok(Self { traj, terminal: rec.terminal, intercepted: rec.intercepted, t_final: rec.t_final, t_launch: rec.t_launch })
    }
}

/// Worst trajectory sample: `(max ReSq(−φ − ε), arg-max point)`.
fn trajectory_worst(theta: &PursuerParams, traj: &[Point2], eps: f64) -> (f64, Option<Point2>) {
    let p = theta.position();
    let mut worst = (0.0, None);
    let mut worst_arg = 0.0;
    for x in traj {
        // L ≥ ‖x − x_P‖, so the hinge is inactive unless the point is well within R
        if x.dist(&p) - theta.range >= -eps {
            continue;
        }
        let arg = -rr_field(*x, theta) - eps;
        if arg > worst_arg {
            worst_arg = arg;
            worst = (resq(arg), Some(*x));
        }
    }
    worst
}

fn add_scaled(acc: &mut [f64; 6], g: &[f64; 6], s: f64) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += s * b;
    }
}

fn record_loss(
    theta: &PursuerParams,
    rec: &Prepared,
    cfg: &LossConfig,
    model: InterceptionModel,
    grad: Option<&mut [f64; 6]>,
) -> f64 {
    let eps = cfg.eps_pos;
    let mut total = 0.0;
    let mut g = [0.0; 6];
    let want_grad = grad.is_some();
    if rec.intercepted {
        match model {
            InterceptionModel::Boundary => {
                let b = boundary_residual_gradient(rec.terminal, theta);
                total += resq(b.value - eps) + resq(-b.value - eps);
                add_scaled(&mut g, &b.grad, resq_prime(b.value - eps) - resq_prime(-b.value - eps));
            }
            InterceptionModel::Interior => {
                if want_grad {
                    let r = rr_gradient(rec.terminal, theta);
                    total += resq(r.value - eps);
                    add_scaled(&mut g, &r.grad, resq_prime(r.value - eps));
                } else {
                    total += resq(rr_field(rec.terminal, theta) - eps);
                }
            }
        }
    }
    if !rec.traj.is_empty() {
        let (worst, at) = trajectory_worst(theta, &rec.traj, eps);
        total += worst;
        if let (true, Some(x)) = (want_grad, at) {
            let r = rr_gradient(x, theta);
            add_scaled(&mut g, &r.grad, -resq_prime(-r.value - eps));
        }
    }
    if let Some(out) = grad {
        add_scaled(out, &g, 1.0);
    }
    total
}

/// Launch-time hinge for one intercepted record, optionally accumulating its gradient.
fn record_time_loss(
    theta: &PursuerParams,
    terminal: Point2,
    t_final: f64,
    t_launch: f64,
    cfg: &LossConfig,
    grad: Option<&mut [f64; 6]>,
) -> f64 {
    let r = rr_gradient(terminal, theta);
    let length = r.value + theta.range;
    let residual = t_final - length / theta.speed - t_launch;
    let arg = residual.abs() - cfg.delta_t;
    if let Some(out) = grad {
        let s = resq_prime(arg) * residual.signum();
        let v = theta.speed;
        // ∂t̂/∂pose = −∂L/∂pose / v; L does not depend on R
        for k in 0..4 {
            out[k] += s * (-r.grad[k] / v);
        }
        out[5] += s * length / (v * v);
    }
    resq(arg)
}

/// Consistency loss of one record under `model`.
pub fn agent_loss(
    theta: &PursuerParams,
    rec: &TrialRecord,
    cfg: &LossConfig,
    model: InterceptionModel,
) -> Result<f64, LossError> {
    let prepared = Prepared::new(rec, cfg, model)?;
    Ok(record_loss(theta, &prepared, cfg, model, None))
}

/// `ReSq(|t̂_ℓ − t_ℓ| − δ)` with `t̂_ℓ = t_f − (φ_RR(terminal) + R)/v_P`.
pub fn time_loss(theta: &PursuerParams, rec: &TrialRecord, cfg: &LossConfig) -> Result<f64, LossError> {
    let t_launch = rec.t_launch.ok_or(LossError::MissingLaunchTime)?;
    Ok(record_time_loss(theta, rec.terminal, rec.t_final, t_launch, cfg, None))
}

/// A dataset prepared for repeated loss evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LossProblem {
    records: Vec<Prepared>,
    cfg: LossConfig,
    model: InterceptionModel,
    case: LearningCase,
}

impl LossProblem {
    pub fn new(data: &Dataset, cfg: &LossConfig) -> Result<Self, LossError> {
        let records = data
            .records
            .iter()
            .map(|r| Prepared::new(r, cfg, data.model))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { records, cfg: *cfg, model: data.model, case: data.case })
    }

    pub fn case(&self) -> LearningCase {
        self.case
    }

    pub fn config(&self) -> &LossConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn loss(&self, theta: &PursuerParams) -> f64 {
        self.eval(theta, None)
    }

    /// Loss and gradient, frozen components of the gradient zeroed.
    pub fn loss_and_gradient(&self, theta: &PursuerParams) -> (f64, [f64; 6]) {
        let mut g = [0.0; 6];
        let v = self.eval(theta, Some(&mut g));
        for (gi, free) in g.iter_mut().zip(self.case.free_mask()) {
            if !free {
                *gi = 0.0;
            }
        }
        (v, g)
    }

    fn eval(&self, theta: &PursuerParams, mut grad: Option<&mut [f64; 6]>) -> f64 {
        let timed = self.case.uses_launch_time();
        let mut total = 0.0;
        for rec in &self.records {
            total += record_loss(theta, rec, &self.cfg, self.model, grad.as_deref_mut());
            if let (true, true, Some(t_l)) = (timed, rec.intercepted, rec.t_launch) {
                total += record_time_loss(theta, rec.terminal, rec.t_final, t_l, &self.cfg, grad.as_deref_mut());
            }
        }
        total
    }
}

/// Sum of record losses, plus launch-time losses in case 3.
pub fn total_loss(theta: &PursuerParams, data: &Dataset, cfg: &LossConfig) -> Result<f64, LossError> {
    if data.is_empty() {
        return Err(LossError::EmptyDataset);
    }
    Ok(LossProblem::new(data, cfg)?.loss(theta))
}

/// Gradient of [`total_loss`] over `(x, y, ψ, a, R, v)`; frozen components are zero.
pub fn total_loss_gradient(theta: &PursuerParams, data: &Dataset, cfg: &LossConfig) -> Result<[f64; 6], LossError> {
    if data.is_empty() {
        return Err(LossError::EmptyDataset);
    }
    Ok(LossProblem::new(data, cfg)?.loss_and_gradient(theta).1)
}
