//! Time-optimal B-spline evader paths that stay out of every candidate engagement zone.
//!
//! The path is a clamped-by-extension uniform B-spline. Its first and last
//! control points are eliminated through the endpoint conditions, and the
//! remaining control points together with `t_f` are optimised by an augmented
//! Lagrangian whose subproblems are solved with BFGS. Constraints are enforced
//! at uniformly spaced sample times.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::CandidateSet;
use crate::geometry::{boundary_residual_gradient, projected_point, rr_field, Point2, PursuerParams};
use crate::optim::{minimize, BfgsOptions};

/// Validation tolerance on every constraint.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("time {t} is outside the path domain [{t0}, {tf}]")]
    OutsideDomain { t: f64, t0: f64, tf: f64 },
    #[error("invalid path: {0}")]
    BadPath(&'static str),
    #[error("no feasible path found; blocking candidates {:?}", .0.blocking)]
    Infeasible(Box<InfeasibilityReport>),
}

/// Why a plan failed, with the candidates whose zones the best iterate still violates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    pub blocking: Vec<usize>,
    pub validation: Option<PathValidation>,
    pub path: Option<SplinePath>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplinePath {
    pub control_points: Vec<Point2>,
    pub degree: usize,
    pub t0: f64,
    pub tf: f64,
    /// `t0 − kΔ, …, tf + kΔ` with `Δ = (tf − t0)/(N_c − k)`.
    pub knots: Vec<f64>,
}

fn uniform_knots(n_c: usize, degree: usize, t0: f64, tf: f64) -> Vec<f64> {
    let dt = (tf - t0) / (n_c - degree) as f64;
    (0..=n_c + degree).map(|j| t0 + (j as f64 - degree as f64) * dt).collect()
}

impl SplinePath {
    pub fn new(control_points: Vec<Point2>, degree: usize, t0: f64, tf: f64) -> Result<Self, PlannerError> {
        if degree == 0 || control_points.len() < degree + 1 {
            return Err(PlannerError::BadPath("need at least degree + 1 control points"));
        }
        if !(tf > t0) || !t0.is_finite() || !tf.is_finite() {
            return Err(PlannerError::BadPath("need finite t0 < tf"));
        }
        let knots = uniform_knots(control_points.len(), degree, t0, tf);
        Ok(Self { control_points, degree, t0, tf, knots })
    }

    /// `n + 1` uniform times from `t0` to `tf` inclusive.
    pub fn sample_times(&self, n: usize) -> Vec<f64> {
        (0..=n).map(|s| self.t0 + (self.tf - self.t0) * (s as f64 / n as f64)).collect()
    }
}

/// Knot span `i` with `knots[i] ≤ t < knots[i + 1]`, closed at `tf`.
fn find_span(knots: &[f64], n_c: usize, degree: usize, t: f64) -> usize {
    if t >= knots[n_c] {
        return n_c - 1;
    }
    let mut span = degree;
    while span + 1 < n_c && knots[span + 1] <= t {
        span += 1;
    }
    span
}

/// Cox–de Boor values and derivatives of the `degree + 1` basis functions nonzero on `span`.
///
/// `ders[k][r]` is the `k`-th derivative of `B_{span − degree + r}`.
fn basis_ders(knots: &[f64], degree: usize, span: usize, t: f64, n_ders: usize) -> Vec<Vec<f64>> {
    let p = degree;
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let mut ders = vec![vec![0.0; p + 1]; n_ders + 1];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }
    let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
    for r in 0..=p {
        let (mut s1, mut s2) = (0, 1);
        a[0][0] = 1.0;
        for k in 1..=n_ders.min(p) {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = p as f64;
    for k in 1..=n_ders.min(p) {
        for v in ders[k].iter_mut() {
            *v *= factor;
        }
        factor *= (p - k) as f64;
    }
    ders
}

/// Dense rows of basis derivatives of order `deriv` at each time.
fn basis_matrix(knots: &[f64], n_c: usize, degree: usize, times: &[f64], deriv: usize) -> Vec<Vec<f64>> {
    times
        .iter()
        .map(|&t| {
            let span = find_span(knots, n_c, degree, t);
            let d = basis_ders(knots, degree, span, t, deriv);
            let mut row = vec![0.0; n_c];
            if deriv <= degree {
                for r in 0..=degree {
                    row[span - degree + r] = d[deriv][r];
                }
            }
            row
        })
        .collect()
}

/// Position (`deriv = 0`), velocity (1) or acceleration (2) at `t`.
pub fn spline_eval(path: &SplinePath, t: f64, deriv: usize) -> Result<Point2, PlannerError> {
    if !(path.t0..=path.tf).contains(&t) {
        return Err(PlannerError::OutsideDomain { t, t0: path.t0, tf: path.tf });
    }
    let n_c = path.control_points.len();
    let span = find_span(&path.knots, n_c, path.degree, t);
    let d = basis_ders(&path.knots, path.degree, span, t, deriv);
    if deriv > path.degree {
        return Ok(Point2::default());
    }
    let mut out = Point2::default();
    for r in 0..=path.degree {
        out = out.add(&path.control_points[span - path.degree + r].scale(d[deriv][r]));
    }
    Ok(out)
}

/// Speed below which turn rate and curvature are regularised.
pub const DEGENERATE_SPEED: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub speed: f64,
    pub heading: f64,
    pub turn_rate: f64,
    pub curvature: f64,
    pub degenerate: bool,
}

fn kinematics_of(d1: Point2, d2: Point2) -> Kinematics {
    let v2 = d1.dot(&d1);
    let speed = v2.sqrt();
    let degenerate = speed <= DEGENERATE_SPEED;
    let v2r = v2.max(DEGENERATE_SPEED * DEGENERATE_SPEED);
    let cross = d1.x * d2.y - d1.y * d2.x;
    let turn_rate = cross / v2r;
    Kinematics { speed, heading: d1.y.atan2(d1.x), turn_rate, curvature: turn_rate / v2r.sqrt(), degenerate }
}

/// Unicycle speed, heading, turn rate and curvature at `t`.
pub fn kinematics_at(path: &SplinePath, t: f64) -> Result<Kinematics, PlannerError> {
    Ok(kinematics_of(spline_eval(path, t, 1)?, spline_eval(path, t, 2)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinematicLimits {
    pub v_e: f64,
    pub u_lb: f64,
    pub u_ub: f64,
    pub kappa_ub: f64,
}

impl KinematicLimits {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if !(self.v_e > 0.0 && self.u_lb <= 0.0 && self.u_ub >= 0.0 && self.kappa_ub > 0.0) {
            return Err(PlannerError::BadPath("limits need v_e > 0, u_lb ≤ 0 ≤ u_ub, kappa_ub > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerOptions {
    pub n_control: usize,
    pub degree: usize,
    /// Constraint sample intervals `N_t`.
    pub n_samples: usize,
    /// Internal constraint intervals per reported one, so that validation between samples passes.
    pub oversample: usize,
    /// Clearance demanded from each zone by the optimiser.
    pub ez_margin: f64,
    /// Allowed relative deviation of the speed from `v_e`.
    pub speed_band: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Starts tried in turn until one yields a validated path: a detour around the
    /// enclosing box of the zones, then bows of growing clearance on alternating sides.
    pub attempts: usize,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self {
            n_control: 12,
            degree: 3,
            n_samples: 100,
            oversample: 4,
            ez_margin: 0.01,
            speed_band: 0.01,
            max_outer: 40,
            max_inner: 400,
            attempts: 5,
        }
    }
}

/// Region the path must avoid.
#[derive(Clone, Debug, PartialEq)]
pub enum Avoidance {
    /// Engagement zones of every listed pursuer.
    Zones(Vec<PursuerParams>),
    /// Positions within `inflate` of an axis-aligned box.
    InflatedBox { min: Point2, max: Point2, inflate: f64 },
}

impl Avoidance {
    pub fn zones(cands: &CandidateSet) -> Self {
        Self::Zones(cands.params().copied().collect())
    }

    fn count(&self) -> usize {
        match self {
            Self::Zones(z) => z.len(),
            Self::InflatedBox { .. } => 1,
        }
    }

    /// Box of pursuer positions grown by the largest range; encloses every zone's reachable region.
    fn enclosing_box(&self) -> Option<Self> {
        let Self::Zones(z) = self else { return None };
        let (mut lo, mut hi) = (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in z {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let inflate = z.iter().map(|p| p.range).fold(0.0, f64::max);
        Some(Self::InflatedBox { min: lo, max: hi, inflate })
    }

    /// Centre and size of the threat used for the initial bow.
    fn summary(&self) -> (Point2, f64) {
        match self {
            Self::Zones(z) => {
                let n = z.len().max(1) as f64;
                let c = z.iter().fold(Point2::default(), |acc, p| acc.add(&p.position())).scale(1.0 / n);
                (c, z.iter().map(|p| p.range).sum::<f64>() / n)
            }
            Self::InflatedBox { min, max, inflate } => {
                let c = Point2::new(0.5 * (min.x + max.x), 0.5 * (min.y + max.y));
                (c, inflate + 0.5 * (max.x - min.x).hypot(max.y - min.y))
            }
        }
    }

    /// True margin of obstacle `j` at a position and heading, as validated.
    fn margin(&self, j: usize, p: Point2, heading: f64, v_e: f64) -> f64 {
        match self {
            Self::Zones(z) => rr_field(projected_point(p, heading, v_e, &z[j]), &z[j]),
            Self::InflatedBox { min, max, inflate } => box_distance(p, *min, *max).0 - inflate,
        }
    }
}

/// Signed distance to a box and its gradient.
fn box_distance(p: Point2, min: Point2, max: Point2) -> (f64, [f64; 2]) {
    let c = Point2::new(0.5 * (min.x + max.x), 0.5 * (min.y + max.y));
    let h = Point2::new(0.5 * (max.x - min.x), 0.5 * (max.y - min.y));
    let (qx, qy) = ((p.x - c.x).abs() - h.x, (p.y - c.y).abs() - h.y);
    let (sx, sy) = ((p.x - c.x).signum(), (p.y - c.y).signum());
    if qx > 0.0 || qy > 0.0 {
        let (ox, oy) = (qx.max(0.0), qy.max(0.0));
        let d = ox.hypot(oy);
        (d, [sx * ox / d, sy * oy / d])
    } else if qx > qy {
        (qx, [sx, 0.0])
    } else {
        (qy, [0.0, sy])
    }
}

/// Independent constraint check on a dense uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathValidation {
    pub feasible: bool,
    pub min_ez_margin: f64,
    /// Largest `|v − v_e|/v_e`.
    pub worst_speed_dev: f64,
    /// Largest `|u|`.
    pub worst_turnrate: f64,
    pub worst_curvature: f64,
    pub endpoint_error: f64,
    /// Obstacles with a margin below `−FEAS_TOL` somewhere.
    pub blocking: Vec<usize>,
}

pub fn validate_path(path: &SplinePath, avoid: &Avoidance, lim: &KinematicLimits, x0: Point2, xf: Point2, n_check: usize, speed_band: f64) -> PathValidation {
    let mut min_margin = f64::INFINITY;
    let mut blocking = vec![false; avoid.count()];
    let (mut speed_dev, mut worst_u, mut worst_k) = (0.0f64, 0.0f64, 0.0f64);
    let mut kin_ok = true;
    for t in path.sample_times(n_check.max(1)) {
        let p = spline_eval(path, t, 0).expect("in domain");
        let k = kinematics_at(path, t).expect("in domain");
        for (j, b) in blocking.iter_mut().enumerate() {
            let m = avoid.margin(j, p, k.heading, lim.v_e);
            min_margin = min_margin.min(m);
            *b |= m < -FEAS_TOL;
        }
        speed_dev = speed_dev.max((k.speed - lim.v_e).abs() / lim.v_e);
        worst_u = worst_u.max(k.turn_rate.abs());
        worst_k = worst_k.max(k.curvature.abs());
        kin_ok &= k.turn_rate >= lim.u_lb - FEAS_TOL && k.turn_rate <= lim.u_ub + FEAS_TOL;
    }
    let scale = 1.0 + x0.dist(&xf);
    let start = spline_eval(path, path.t0, 0).expect("in domain");
    let end = spline_eval(path, path.tf, 0).expect("in domain");
    let endpoint_error = start.dist(&x0).max(end.dist(&xf));
    let blocking: Vec<usize> = blocking.iter().enumerate().filter(|(_, b)| **b).map(|(j, _)| j).collect();
    let feasible = blocking.is_empty()
        && kin_ok
        && speed_dev <= speed_band + FEAS_TOL
        && worst_k <= lim.kappa_ub + FEAS_TOL
        && endpoint_error <= FEAS_TOL * scale;
    PathValidation {
        feasible,
        min_ez_margin: min_margin,
        worst_speed_dev: speed_dev,
        worst_turnrate: worst_u,
        worst_curvature: worst_k,
        endpoint_error,
        blocking,
    }
}

/// Re-time the same curve so the sampled speed range is centred on `v_e`.
///
/// Positions and headings, and hence every zone margin, are unchanged; curvature is
/// unchanged and turn rate scales with speed.
fn recenter_speed(path: SplinePath, v_e: f64, n_check: usize) -> SplinePath {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for t in path.sample_times(n_check) {
        let v = kinematics_at(&path, t).expect("in domain").speed;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let scale = 0.5 * (lo + hi) / v_e;
    if !(scale.is_finite() && scale > 0.0) {
        return path;
    }
    let tf = path.t0 + (path.tf - path.t0) * scale;
    SplinePath::new(path.control_points, path.degree, path.t0, tf).expect("positive rescaled span")
}

/// A validated plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub path: SplinePath,
    pub validation: PathValidation,
    pub outer_iters: usize,
}

impl Plan {
    pub fn tf(&self) -> f64 {
        self.path.tf - self.path.t0
    }
}

/// Internal constraint violation at which the outer loop may stop; well inside the margins.
const OUTER_TOL: f64 = 1e-5;
const RHO_INIT: f64 = 10.0;
const RHO_MAX: f64 = 1e8;

/// Kinematic constraints per sample, in this order.
const N_KIN: usize = 6;

struct Problem<'a> {
    avoid: &'a Avoidance,
    lim: KinematicLimits,
    opts: PlannerOptions,
    x0: Point2,
    xf: Point2,
    n_c: usize,
    b0: Vec<Vec<f64>>,
    b1: Vec<Vec<f64>>,
    b2: Vec<Vec<f64>>,
    t_scale: f64,
}

/// Multipliers and penalty of the augmented Lagrangian.
struct Multipliers {
    kin: Vec<[f64; N_KIN]>,
    obs: Vec<Vec<f64>>,
    rho: f64,
}

/// PHR term for `g ≥ 0` and its derivative in `g`.
#[inline]
fn phr(g: f64, lambda: f64, rho: f64) -> (f64, f64) {
    let s = lambda - rho * g;
    if s > 0.0 {
        ((s * s - lambda * lambda) / (2.0 * rho), -s)
    } else {
        (-lambda * lambda / (2.0 * rho), 0.0)
    }
}

/// Per-sample constraint values: kinematic then obstacles.
struct SampleValues {
    kin: [f64; N_KIN],
    obs: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(avoid: &'a Avoidance, lim: KinematicLimits, opts: PlannerOptions, x0: Point2, xf: Point2) -> Self {
        let n_c = opts.n_control;
        let m = opts.n_samples * opts.oversample.max(1);
        let knots = uniform_knots(n_c, opts.degree, 0.0, 1.0);
        let taus: Vec<f64> = (0..=m).map(|s| s as f64 / m as f64).collect();
        Self {
            avoid,
            lim,
            opts,
            x0,
            xf,
            n_c,
            b0: basis_matrix(&knots, n_c, opts.degree, &taus, 0),
            b1: basis_matrix(&knots, n_c, opts.degree, &taus, 1),
            b2: basis_matrix(&knots, n_c, opts.degree, &taus, 2),
            t_scale: x0.dist(&xf).max(1e-9) / lim.v_e,
        }
    }

    fn n_vars(&self) -> usize {
        2 * (self.n_c - 2) + 1
    }

    /// All control points with the end ones solved from the endpoint conditions.
    fn controls(&self, z: &[f64]) -> Vec<Point2> {
        let n = self.n_c;
        let mut c = vec![Point2::default(); n];
        for i in 1..n - 1 {
            c[i] = Point2::new(z[2 * (i - 1)], z[2 * (i - 1) + 1]);
        }
        let (r0, rm) = (&self.b0[0], &self.b0[self.b0.len() - 1]);
        let mut s0 = self.x0;
        let mut sm = self.xf;
        for i in 1..n - 1 {
            s0 = s0.sub(&c[i].scale(r0[i]));
            sm = sm.sub(&c[i].scale(rm[i]));
        }
        c[0] = s0.scale(1.0 / r0[0]);
        c[n - 1] = sm.scale(1.0 / rm[n - 1]);
        c
    }

    fn pack(&self, c: &[Point2], tf: f64) -> Vec<f64> {
        let mut z: Vec<f64> = c[1..self.n_c - 1].iter().flat_map(|p| [p.x, p.y]).collect();
        z.push(tf);
        z
    }

    fn row(b: &[f64], c: &[Point2]) -> Point2 {
        b.iter().zip(c).fold(Point2::default(), |acc, (w, p)| Point2::new(acc.x + w * p.x, acc.y + w * p.y))
    }

    fn internal_limits(&self) -> (f64, f64, f64, f64) {
        let shrink = 0.98;
        (0.8 * self.opts.speed_band, shrink * self.lim.u_lb, shrink * self.lim.u_ub, shrink * self.lim.kappa_ub)
    }

    /// Cheap lower bound on a zone margin; `None` when the zone is far enough to skip.
    fn zone_near(p: &PursuerParams, x_f: Point2, cutoff: f64) -> bool {
        x_f.dist(&p.position()) - p.range <= cutoff
    }

    /// Constraint values and, when `mults` is given, the augmented Lagrangian with its gradient.
    fn evaluate(&self, z: &[f64], mults: Option<&Multipliers>) -> (f64, Vec<f64>, Vec<SampleValues>) {
        let n_s = self.b0.len();
        let tf = z[z.len() - 1];
        if !(tf > 0.0) || z.iter().any(|v| !v.is_finite()) {
            return (f64::INFINITY, vec![0.0; z.len()], Vec::new());
        }
        let c = self.controls(z);
        let (band, u_lb, u_ub, k_ub) = self.internal_limits();
        let (v_e, u_scale) = (self.lim.v_e, self.lim.u_ub.abs().max(self.lim.u_lb.abs()).max(1e-9));
        let mut value = tf / self.t_scale;
        let mut g_c = vec![Point2::default(); self.n_c];
        let mut g_tf = 1.0 / self.t_scale;
        let mut values = Vec::with_capacity(n_s);
        for s in 0..n_s {
            let p = Self::row(&self.b0[s], &c);
            let d1 = Self::row(&self.b1[s], &c).scale(1.0 / tf);
            let d2 = Self::row(&self.b2[s], &c).scale(1.0 / (tf * tf));
            let v2 = d1.dot(&d1).max(1e-18);
            let v = v2.sqrt();
            let cross = d1.x * d2.y - d1.y * d2.x;
            let u = cross / v2;
            let kappa = cross / (v2 * v);
            let heading = d1.y.atan2(d1.x);
            let kin = [
                (v - (1.0 - band) * v_e) / v_e,
                ((1.0 + band) * v_e - v) / v_e,
                (u - u_lb) / u_scale,
                (u_ub - u) / u_scale,
                (k_ub - kappa) / k_ub,
                (kappa + k_ub) / k_ub,
            ];
            // gradients of v, u, κ with respect to ṗ and p̈
            let dv_d1 = [d1.x / v, d1.y / v];
            let dcr_d1 = [d2.y, -d2.x];
            let dcr_d2 = [-d1.y, d1.x];
            let du_d1 = [dcr_d1[0] / v2 - 2.0 * cross * d1.x / (v2 * v2), dcr_d1[1] / v2 - 2.0 * cross * d1.y / (v2 * v2)];
            let du_d2 = [dcr_d2[0] / v2, dcr_d2[1] / v2];
            let v3 = v2 * v;
            let dk_d1 = [dcr_d1[0] / v3 - 3.0 * cross * d1.x / (v3 * v2), dcr_d1[1] / v3 - 3.0 * cross * d1.y / (v3 * v2)];
            let dk_d2 = [dcr_d2[0] / v3, dcr_d2[1] / v3];
            let kin_grads: [([f64; 2], [f64; 2]); N_KIN] = [
                ([dv_d1[0] / v_e, dv_d1[1] / v_e], [0.0, 0.0]),
                ([-dv_d1[0] / v_e, -dv_d1[1] / v_e], [0.0, 0.0]),
                ([du_d1[0] / u_scale, du_d1[1] / u_scale], [du_d2[0] / u_scale, du_d2[1] / u_scale]),
                ([-du_d1[0] / u_scale, -du_d1[1] / u_scale], [-du_d2[0] / u_scale, -du_d2[1] / u_scale]),
                ([-dk_d1[0] / k_ub, -dk_d1[1] / k_ub], [-dk_d2[0] / k_ub, -dk_d2[1] / k_ub]),
                ([dk_d1[0] / k_ub, dk_d1[1] / k_ub], [dk_d2[0] / k_ub, dk_d2[1] / k_ub]),
            ];
            let mut gp = [0.0; 2];
            let mut g1 = [0.0; 2];
            let mut g2 = [0.0; 2];
            if let Some(m) = mults {
                for q in 0..N_KIN {
                    let (val, dg) = phr(kin[q], m.kin[s][q], m.rho);
                    value += val;
                    if dg != 0.0 {
                        let (a, b) = kin_grads[q];
                        g1[0] += dg * a[0];
                        g1[1] += dg * a[1];
                        g2[0] += dg * b[0];
                        g2[1] += dg * b[1];
                    }
                }
            }
            let mut obs = vec![f64::INFINITY; self.avoid.count()];
            match self.avoid {
                Avoidance::Zones(zones) => {
                    for (j, th) in zones.iter().enumerate() {
                        let lambda = mults.map_or(0.0, |m| m.obs[s][j]);
                        let nu_r = v_e / th.speed * th.range;
                        let x_f = p.advance(heading, nu_r);
                        if lambda == 0.0 && !Self::zone_near(th, x_f, 4.0 * self.opts.ez_margin + 0.05) {
                            continue;
                        }
                        let r = boundary_residual_gradient(x_f, th);
                        let g = r.value - self.opts.ez_margin;
                        obs[j] = g;
                        if let Some(m) = mults {
                            let (val, dg) = phr(g, lambda, m.rho);
                            value += val;
                            if dg != 0.0 {
                                // ∇ over the evaluation point is minus ∇ over the pursuer position
                                let gx = [-r.grad[0], -r.grad[1]];
                                gp[0] += dg * gx[0];
                                gp[1] += dg * gx[1];
                                let dpsi = nu_r * (-heading.sin() * gx[0] + heading.cos() * gx[1]);
                                g1[0] += dg * dpsi * (-d1.y / v2);
                                g1[1] += dg * dpsi * (d1.x / v2);
                            }
                        }
                    }
                }
                Avoidance::InflatedBox { min, max, inflate } => {
                    let (d, dd) = box_distance(p, *min, *max);
                    let g = d - inflate - self.opts.ez_margin;
                    obs[0] = g;
                    if let Some(m) = mults {
                        let (val, dg) = phr(g, m.obs[s][0], m.rho);
                        value += val;
                        gp[0] += dg * dd[0];
                        gp[1] += dg * dd[1];
                    }
                }
            }
            if mults.is_some() {
                for i in 0..self.n_c {
                    let (w0, w1, w2) = (self.b0[s][i], self.b1[s][i] / tf, self.b2[s][i] / (tf * tf));
                    if w0 == 0.0 && w1 == 0.0 && w2 == 0.0 {
                        continue;
                    }
                    g_c[i].x += w0 * gp[0] + w1 * g1[0] + w2 * g2[0];
                    g_c[i].y += w0 * gp[1] + w1 * g1[1] + w2 * g2[1];
                }
                g_tf += -(g1[0] * d1.x + g1[1] * d1.y) / tf - 2.0 * (g2[0] * d2.x + g2[1] * d2.y) / tf;
            }
            values.push(SampleValues { kin, obs });
        }
        // chain through the eliminated end control points
        let n = self.n_c;
        let (r0, rm) = (&self.b0[0], &self.b0[n_s - 1]);
        let mut grad = Vec::with_capacity(self.n_vars());
        for i in 1..n - 1 {
            let gi = g_c[i].sub(&g_c[0].scale(r0[i] / r0[0])).sub(&g_c[n - 1].scale(rm[i] / rm[n - 1]));
            grad.push(gi.x);
            grad.push(gi.y);
        }
        grad.push(g_tf);
        (value, grad, values)
    }

    fn max_violation(values: &[SampleValues]) -> f64 {
        values
            .iter()
            .flat_map(|v| v.kin.iter().chain(&v.obs))
            .fold(0.0f64, |acc, g| acc.max(-g))
    }

    /// Straight line bowed away from the threat centre by one threat size; `tf = 1.5·‖xf − x0‖/v_e`.
    ///
    /// Odd attempts bow to the other side; attempts from 2 on double the clearance.
    fn initial_guess(&self, attempt: usize) -> Vec<f64> {
        let (center, size) = self.avoid.summary();
        let dir = self.xf.sub(&self.x0);
        let len = dir.norm().max(1e-9);
        let normal = Point2::new(-dir.y / len, dir.x / len);
        let offset = center.sub(&self.x0).dot(&normal);
        let preferred = if offset > 0.0 { -1.0 } else { 1.0 };
        let side = if attempt % 2 == 0 { preferred } else { -preferred };
        let bow = offset + side * size * (1 + attempt / 2) as f64;
        let n = self.n_c;
        let c: Vec<Point2> = (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                self.x0.add(&dir.scale(s)).add(&normal.scale(bow * (std::f64::consts::PI * s).sin()))
            })
            .collect();
        self.pack(&c, 1.5 * len / self.lim.v_e)
    }

    /// Augmented Lagrangian from `z`; returns the final iterate and the outer iteration count.
    fn solve(&self, mut z: Vec<f64>) -> (Vec<f64>, usize) {
        let n_s = self.b0.len();
        let mut mults = Multipliers { kin: vec![[0.0; N_KIN]; n_s], obs: vec![vec![0.0; self.avoid.count()]; n_s], rho: RHO_INIT };
        let inner = BfgsOptions { max_iters: self.opts.max_inner, grad_tol: 1e-8, step_init: 0.05, f_rtol: 1e-10 };
        let (mut prev_violation, mut prev_tf) = (f64::INFINITY, f64::INFINITY);
        let mut stagnant = 0;
        let mut outer = 0;
        while outer < self.opts.max_outer {
            outer += 1;
            let eval = |x: &[f64]| {
                let (f, g, _) = self.evaluate(x, Some(&mults));
                (f, g)
            };
            z = minimize(&z, &eval, &inner).0;
            let (_, _, values) = self.evaluate(&z, None);
            let violation = Problem::max_violation(&values);
            for (s, v) in values.iter().enumerate() {
                for q in 0..N_KIN {
                    mults.kin[s][q] = (mults.kin[s][q] - mults.rho * v.kin[q]).max(0.0);
                }
                for (j, g) in v.obs.iter().enumerate() {
                    let lam = &mut mults.obs[s][j];
                    *lam = if g.is_finite() { (*lam - mults.rho * g).max(0.0) } else { 0.0 };
                }
            }
            let tf = z[z.len() - 1];
            if violation <= OUTER_TOL && (tf - prev_tf).abs() <= 1e-4 * tf {
                break;
            }
            if violation > 0.25 * prev_violation {
                if mults.rho >= RHO_MAX {
                    stagnant += 1;
                    if stagnant >= 3 {
                        break;
                    }
                }
                mults.rho = (mults.rho * 10.0).min(RHO_MAX);
            } else {
                stagnant = 0;
            }
            prev_violation = violation;
            prev_tf = tf;
        }
        (z, outer)
    }

    fn path(&self, z: &[f64]) -> SplinePath {
        SplinePath::new(self.controls(z), self.opts.degree, 0.0, z[z.len() - 1]).expect("valid by construction")
    }
}

/// Plan around an arbitrary avoidance region.
pub fn plan_path(x0: Point2, xf: Point2, avoid: &Avoidance, lim: &KinematicLimits, opts: &PlannerOptions) -> Result<Plan, PlannerError> {
    lim.validate()?;
    if opts.n_control < 2 * (opts.degree + 1) || opts.n_samples < 2 {
        return Err(PlannerError::BadPath("need n_control ≥ 2(degree + 1) and n_samples ≥ 2"));
    }
    if let Avoidance::Zones(z) = avoid {
        let enclosed: Vec<usize> = z
            .iter()
            .enumerate()
            .filter(|(_, p)| rr_field(x0, p) <= 0.0 || rr_field(xf, p) <= 0.0)
            .map(|(j, _)| j)
            .collect();
        if !enclosed.is_empty() {
            return Err(PlannerError::Infeasible(Box::new(InfeasibilityReport { blocking: enclosed, validation: None, path: None })));
        }
    }
    let prob = Problem::new(avoid, *lim, *opts, x0, xf);
    let mut failure = None;
    for attempt in 0..opts.attempts.max(1) {
        let z0 = match (attempt, avoid.enclosing_box()) {
            (0, Some(detour)) => Problem::new(&detour, *lim, *opts, x0, xf).solve(prob.initial_guess(0)).0,
            (0, None) => prob.initial_guess(0),
            _ => prob.initial_guess(attempt - 1),
        };
        let (z, outer_iters) = prob.solve(z0);
        let path = recenter_speed(prob.path(&z), lim.v_e, 4 * opts.n_samples);
        let validation = validate_path(&path, avoid, lim, x0, xf, 4 * opts.n_samples, opts.speed_band);
        if validation.feasible {
            return Ok(Plan { path, validation, outer_iters });
        }
        if failure.is_none() {
            failure = Some(InfeasibilityReport { blocking: validation.blocking.clone(), validation: Some(validation), path: Some(path) });
        }
    }
    Err(PlannerError::Infeasible(Box::new(failure.expect("at least one attempt"))))
}

/// Plan around the engagement zones of every candidate.
pub fn plan_safe_path(x0: Point2, xf: Point2, cands: &CandidateSet, lim: &KinematicLimits, opts: &PlannerOptions) -> Result<Plan, PlannerError> {
    plan_path(x0, xf, &Avoidance::zones(cands), lim, opts)
}

/// No-learning baseline: avoid the box of admissible pursuer positions grown by `inflate`.
pub fn plan_baseline(x0: Point2, xf: Point2, min: Point2, max: Point2, inflate: f64, lim: &KinematicLimits, opts: &PlannerOptions) -> Result<Plan, PlannerError> {
    plan_path(x0, xf, &Avoidance::InflatedBox { min, max, inflate }, lim, opts)
}

/// Rows of `(t, x, y, heading, speed, turn_rate, curvature)` at `n + 1` uniform times.
pub fn path_csv(path: &SplinePath, n: usize) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "x", "y", "heading", "speed", "turn_rate", "curvature"])?;
    for t in path.sample_times(n) {
        let p = spline_eval(path, t, 0).expect("in domain");
        let k = kinematics_at(path, t).expect("in domain");
        w.serialize((t, p.x, p.y, k.heading, k.speed, k.turn_rate, k.curvature))?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
