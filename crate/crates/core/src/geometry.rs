//! Curve-straight path lengths and the reachable-region / engagement-zone fields.
//!
//! A pursuer at `(x, y)` with heading `ψ` and minimum turn radius `a` reaches a
//! target by turning left or right on a circle of radius `a` and then flying
//! the tangent line. `L = min(L_left, L_right)` and the reachable-region field
//! is `φ_RR(x) = L(x) − R`: negative inside the region, zero on its boundary.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dual::{Dual, Real};

/// Relative tolerance (times `a`) under which the two turn branches count as tied.
pub const BRANCH_TIE_TOL: f64 = 1e-8;
/// Arc angles this close to `2π` are folded back to zero (straight-ahead targets).
const ARC_SNAP: f64 = 1e-10;
/// Path length reported when neither turn direction reaches the target.
pub const UNREACHABLE_LENGTH: f64 = 1e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite input coordinate")]
    NonFinite,
    #[error("invalid pursuer parameters: {0}")]
    InvalidParams(&'static str),
    #[error("polyline needs at least 64 samples, got {0}")]
    TooFewSamples(usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(r: f64, angle: f64) -> Self {
        Self::new(r * angle.cos(), r * angle.sin())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, o: &Point2) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn add(&self, o: &Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(&self, o: &Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(&self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }

    pub fn dot(&self, o: &Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// Point reached by moving `s` along heading `angle`.
    pub fn advance(&self, angle: f64, s: f64) -> Point2 {
        Point2::new(self.x + s * angle.cos(), self.y + s * angle.sin())
    }
}

/// Reduce an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Pursuer parameter vector in canonical order `(x, y, ψ, a, R, v)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PursuerParams {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub turn_radius: f64,
    pub range: f64,
    pub speed: f64,
}

impl PursuerParams {
    pub const DIM: usize = 6;
    pub const NAMES: [&'static str; 6] = ["x", "y", "heading", "turn_radius", "range", "speed"];
    /// Index of the heading component (the only periodic one).
    pub const HEADING: usize = 2;

    pub fn new(x: f64, y: f64, heading: f64, turn_radius: f64, range: f64, speed: f64) -> Self {
        Self { x, y, heading, turn_radius, range, speed }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.heading, self.turn_radius, self.range, self.speed]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// Same parameters with the heading reduced to `(−π, π]`.
    pub fn wrapped(mut self) -> Self {
        self.heading = wrap_angle(self.heading);
        self
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.to_array().iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if self.turn_radius <= 0.0 {
            return Err(GeometryError::InvalidParams("turn radius must be positive"));
        }
        if self.range <= 0.0 {
            return Err(GeometryError::InvalidParams("range must be positive"));
        }
        if self.speed <= 0.0 {
            return Err(GeometryError::InvalidParams("speed must be positive"));
        }
        Ok(())
    }
}

/// Componentwise box on [`PursuerParams`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lower: PursuerParams,
    pub upper: PursuerParams,
}

impl ParamBounds {
    pub fn new(lower: PursuerParams, upper: PursuerParams) -> Result<Self, GeometryError> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let (lo, hi) = (self.lower.to_array(), self.upper.to_array());
        if lo.iter().zip(&hi).any(|(l, u)| !(l <= u)) {
            return Err(GeometryError::InvalidParams("lower bound exceeds upper bound"));
        }
        if lo[3] <= 0.0 || lo[4] <= 0.0 || lo[5] <= 0.0 {
            return Err(GeometryError::InvalidParams("bounds must keep a, R, v positive"));
        }
        Ok(())
    }

    pub fn width(&self) -> [f64; 6] {
        let (lo, hi) = (self.lower.to_array(), self.upper.to_array());
        std::array::from_fn(|i| hi[i] - lo[i])
    }

    /// Heading bounds spanning the whole circle are treated as periodic.
    pub fn heading_is_periodic(&self) -> bool {
        self.upper.heading - self.lower.heading >= TAU - 1e-9
    }

    pub fn contains(&self, p: &PursuerParams) -> bool {
        let (lo, hi, v) = (self.lower.to_array(), self.upper.to_array(), p.to_array());
        (0..6).all(|i| {
            if i == PursuerParams::HEADING && self.heading_is_periodic() {
                v[i] > -PI - 1e-12 && v[i] <= PI + 1e-12
            } else {
                v[i] >= lo[i] - 1e-12 && v[i] <= hi[i] + 1e-12
            }
        })
    }

    /// Project onto the box; periodic headings are wrapped instead.
    pub fn clamp(&self, p: &PursuerParams) -> PursuerParams {
        let (lo, hi) = (self.lower.to_array(), self.upper.to_array());
        let mut v = p.to_array();
        for i in 0..6 {
            if i == PursuerParams::HEADING && self.heading_is_periodic() {
                v[i] = wrap_angle(v[i]);
            } else {
                v[i] = v[i].clamp(lo[i], hi[i]);
            }
        }
        PursuerParams::from_array(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Turn {
    Left,
    Right,
}

/// Both directional curve-straight lengths to a target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TurnStraight {
    /// `+∞` when the target is strictly inside the left turning disc.
    pub left: f64,
    pub right: f64,
    pub min: f64,
    pub active: Turn,
    /// `|left − right|`; small values flag a non-smooth `min`.
    pub margin: f64,
}

/// Pose part of the parameter vector, generic over the scalar type.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Pose<T> {
    pub x: T,
    pub y: T,
    pub heading: T,
    pub turn_radius: T,
}

impl Pose<f64> {
    pub(crate) fn of(p: &PursuerParams) -> Self {
        Self { x: p.x, y: p.y, heading: p.heading, turn_radius: p.turn_radius }
    }
}

/// Length of the turn-then-tangent path in one direction, `None` inside the turning disc.
#[inline]
pub(crate) fn branch_length<T: Real>(tx: T, ty: T, pose: &Pose<T>, turn: Turn) -> Option<T> {
    let a = pose.turn_radius;
    let (s, c) = (pose.heading.sin(), pose.heading.cos());
    let (cx, cy) = match turn {
        Turn::Left => (pose.x - a * s, pose.y + a * c),
        Turn::Right => (pose.x + a * s, pose.y - a * c),
    };
    let dx = tx - cx;
    let dy = ty - cy;
    let d2 = dx * dx + dy * dy;
    let a2 = a * a;
    if d2.value() < a2.value() {
        return None;
    }
    let d = d2.sqrt();
    let tangent = (d2 - a2).sqrt();
    let bearing = dy.atan2(dx);
    let offset = (a / d).acos();
    let arc = match turn {
        // counter-clockwise from angle ψ − π/2 to the tangent point at bearing − offset
        Turn::Left => bearing - offset - pose.heading + FRAC_PI_2,
        // clockwise from ψ + π/2 to bearing + offset
        Turn::Right => pose.heading + FRAC_PI_2 - bearing - offset,
    };
    let mut arc = arc.wrap_two_pi();
    if arc.value() > TAU - ARC_SNAP {
        arc = arc - TAU;
    }
    Some(a * arc + tangent)
}

/// Shortest curve-straight length and the branch attaining it.
#[inline]
pub(crate) fn cs_length<T: Real>(tx: T, ty: T, pose: &Pose<T>) -> (T, Turn) {
    let l = branch_length(tx, ty, pose, Turn::Left);
    let r = branch_length(tx, ty, pose, Turn::Right);
    match (l, r) {
        (Some(l), Some(r)) => {
            if r.value() < l.value() {
                (r, Turn::Right)
            } else {
                (l, Turn::Left)
            }
        }
        (Some(l), None) => (l, Turn::Left),
        (None, Some(r)) => (r, Turn::Right),
        (None, None) => (T::cst(UNREACHABLE_LENGTH), Turn::Left),
    }
}

/// Left, right and minimum curve-straight lengths from the pursuer pose to `target`.
pub fn turn_straight_length(
    target: Point2,
    params: &PursuerParams,
) -> Result<TurnStraight, GeometryError> {
    if !target.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    params.validate()?;
    let pose = Pose::of(params);
    let left = branch_length(target.x, target.y, &pose, Turn::Left).unwrap_or(f64::INFINITY);
    let right = branch_length(target.x, target.y, &pose, Turn::Right).unwrap_or(f64::INFINITY);
    let (min, active) = if right < left { (right, Turn::Right) } else { (left, Turn::Left) };
    let min = if min.is_finite() { min } else { UNREACHABLE_LENGTH };
    let margin = if left.is_finite() && right.is_finite() {
        (left - right).abs()
    } else {
        f64::INFINITY
    };
    Ok(TurnStraight { left, right, min, active, margin })
}

/// Centres of the left and right turning circles.
pub fn turning_centers(params: &PursuerParams) -> [Point2; 2] {
    let (s, c) = params.heading.sin_cos();
    let a = params.turn_radius;
    [
        Point2::new(params.x - a * s, params.y + a * c),
        Point2::new(params.x + a * s, params.y - a * c),
    ]
}

/// `φ_RR` without input validation, for hot loops over known-good data.
#[inline]
pub fn rr_field(point: Point2, params: &PursuerParams) -> f64 {
    cs_length(point.x, point.y, &Pose::of(params)).0 - params.range
}

/// Reachable-region field: positive outside, negative inside, zero on the boundary.
pub fn rr_value(point: Point2, params: &PursuerParams) -> Result<f64, GeometryError> {
    Ok(turn_straight_length(point, params)?.min - params.range)
}

/// Projected point `x_F = x_E + (v_E / v_P)·R·(cos ψ_E, sin ψ_E)`.
pub fn projected_point(
    evader_pos: Point2,
    evader_heading: f64,
    evader_speed: f64,
    params: &PursuerParams,
) -> Point2 {
    evader_pos.advance(evader_heading, evader_speed / params.speed * params.range)
}

/// Engagement-zone field: `φ_RR` at the evader's projected point.
pub fn ez_value(
    evader_pos: Point2,
    evader_heading: f64,
    evader_speed: f64,
    params: &PursuerParams,
) -> Result<f64, GeometryError> {
    if !evader_pos.is_finite() || !evader_heading.is_finite() || !evader_speed.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    if evader_speed < 0.0 {
        return Err(GeometryError::InvalidParams("evader speed must be non-negative"));
    }
    params.validate()?;
    rr_value(projected_point(evader_pos, evader_heading, evader_speed, params), params)
}

/// Gradient of `φ_RR` with respect to `(x, y, ψ, a, R, v)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RrGradient {
    pub value: f64,
    pub grad: [f64; 6],
    pub active: Turn,
    /// Set at branch ties and turning-disc boundaries; `grad` is then the
    /// gradient of the active branch.
    pub nonsmooth: bool,
}

pub fn rr_gradient(point: Point2, params: &PursuerParams) -> RrGradient {
    let pose = Pose {
        x: Dual::<4>::var(params.x, 0),
        y: Dual::var(params.y, 1),
        heading: Dual::var(params.heading, 2),
        turn_radius: Dual::var(params.turn_radius, 3),
    };
    let tx = Dual::constant(point.x);
    let ty = Dual::constant(point.y);
    let l = branch_length(tx, ty, &pose, Turn::Left);
    let r = branch_length(tx, ty, &pose, Turn::Right);
    let a = params.turn_radius;
    let (best, active, nonsmooth) = match (l, r) {
        (Some(l), Some(r)) => {
            let tie = (l.v - r.v).abs() <= BRANCH_TIE_TOL * a;
            if r.v < l.v {
                (r, Turn::Right, tie)
            } else {
                (l, Turn::Left, tie)
            }
        }
        (Some(l), None) => (l, Turn::Left, false),
        (None, Some(r)) => (r, Turn::Right, false),
        (None, None) => (Dual::constant(UNREACHABLE_LENGTH), Turn::Left, true),
    };
    let nonsmooth = nonsmooth || near_disc_boundary(point, params, active);
    let g = best.g;
    RrGradient {
        value: best.v - params.range,
        grad: [g[0], g[1], g[2], g[3], -1.0, 0.0],
        active,
        nonsmooth,
    }
}

/// Signed offset from a turning circle where the region boundary runs along it.
///
/// Valid only on the arc the turn itself reaches within `range`, and only where the
/// opposite turn cannot reach the circle point, so `φ_RR` jumps across zero there.
/// Positive inside the disc, which is the unreachable side.
fn jump_arc_offset<T: Real>(tx: T, ty: T, pose: &Pose<T>, range: f64, turn: Turn) -> Option<T> {
    let a = pose.turn_radius;
    let (s, c) = (pose.heading.sin(), pose.heading.cos());
    let (cx, cy) = match turn {
        Turn::Left => (pose.x - a * s, pose.y + a * c),
        Turn::Right => (pose.x + a * s, pose.y - a * c),
    };
    let (dx, dy) = (tx - cx, ty - cy);
    let d = (dx * dx + dy * dy).sqrt();
    if d.value() == 0.0 {
        return None;
    }
    let gamma = dy.atan2(dx);
    let arc = match turn {
        Turn::Left => gamma - pose.heading + FRAC_PI_2,
        Turn::Right => pose.heading + FRAC_PI_2 - gamma,
    }
    .wrap_two_pi();
    if (a * arc).value() > range {
        return None;
    }
    let av = a.value();
    let proj = (cx.value() + av * dx.value() / d.value(), cy.value() + av * dy.value() / d.value());
    let plain = Pose {
        x: pose.x.value(),
        y: pose.y.value(),
        heading: pose.heading.value(),
        turn_radius: av,
    };
    let other = match turn {
        Turn::Left => Turn::Right,
        Turn::Right => Turn::Left,
    };
    match branch_length(proj.0, proj.1, &plain, other) {
        Some(l) if l < range => None,
        _ => Some(a - d),
    }
}

/// Boundary residual: `φ_RR`, or the offset from a turning-circle stretch of the
/// region boundary when that is smaller in magnitude.
///
/// Zero on the whole region boundary, including where `φ_RR` jumps from positive
/// to negative across a turning circle. Positive on the unreachable side.
pub fn boundary_residual(point: Point2, params: &PursuerParams) -> f64 {
    boundary_residual_gradient(point, params).value
}

/// [`boundary_residual`] with its gradient over `(x, y, ψ, a, R, v)`.
pub fn boundary_residual_gradient(point: Point2, params: &PursuerParams) -> RrGradient {
    let mut best = rr_gradient(point, params);
    let pose = Pose {
        x: Dual::<4>::var(params.x, 0),
        y: Dual::var(params.y, 1),
        heading: Dual::var(params.heading, 2),
        turn_radius: Dual::var(params.turn_radius, 3),
    };
    let (tx, ty) = (Dual::constant(point.x), Dual::constant(point.y));
    for turn in [Turn::Left, Turn::Right] {
        if let Some(off) = jump_arc_offset(tx, ty, &pose, params.range, turn) {
            if off.v.abs() < best.value.abs() {
                let g = off.g;
                best = RrGradient {
                    value: off.v,
                    grad: [g[0], g[1], g[2], g[3], 0.0, 0.0],
                    active: turn,
                    nonsmooth: false,
                };
            }
        }
    }
    best
}

fn near_disc_boundary(point: Point2, params: &PursuerParams, turn: Turn) -> bool {
    let a = params.turn_radius;
    let (s, c) = params.heading.sin_cos();
    let center = match turn {
        Turn::Left => Point2::new(params.x - a * s, params.y + a * c),
        Turn::Right => Point2::new(params.x + a * s, params.y - a * c),
    };
    (point.dist(&center) - a).abs() <= 1e-7 * a
}

/// Gradient of the shortest length with respect to the target point.
///
/// Equals the unit heading of the final straight segment.
#[cfg(test)]
pub(crate) fn length_target_gradient(target: Point2, params: &PursuerParams) -> (f64, [f64; 2]) {
    let (l, _) = cs_length(
        Dual::<2>::var(target.x, 0),
        Dual::<2>::var(target.y, 1),
        &Pose {
            x: Dual::constant(params.x),
            y: Dual::constant(params.y),
            heading: Dual::constant(params.heading),
            turn_radius: Dual::constant(params.turn_radius),
        },
    );
    (l.v, l.g)
}

/// Closed polyline tracing the zero contour of `φ_RR`, one vertex per ray from the pursuer.
///
/// Each ray is scanned inward from distance `R` (where `φ_RR ≥ 0` always holds) for the
/// outermost in-region sample, then bisected. Where the region along a ray ends at a
/// turning-disc discontinuity the vertex sits on that jump, so the `|φ_RR| ≈ 0` property
/// holds only on continuous stretches of the contour (all of it when `R ≥ 2πa`).
pub fn rr_boundary_polyline(
    params: &PursuerParams,
    n_samples: usize,
) -> Result<Vec<Point2>, GeometryError> {
    if n_samples < 64 {
        return Err(GeometryError::TooFewSamples(n_samples));
    }
    params.validate()?;
    const SCAN: usize = 512;
    let origin = params.position();
    let range = params.range;
    let mut out = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let dir = params.heading + TAU * k as f64 / n_samples as f64;
        let at = |r: f64| rr_field(origin.advance(dir, r), params);
        // outermost sample with φ ≤ 0 (r = 0 always qualifies)
        let mut inner = 0.0;
        let mut outer = range;
        for i in (0..SCAN).rev() {
            let r = range * i as f64 / SCAN as f64;
            if at(r) <= 0.0 {
                inner = r;
                outer = range * (i + 1) as f64 / SCAN as f64;
                break;
            }
        }
        if at(outer) <= 0.0 {
            out.push(origin.advance(dir, outer));
            continue;
        }
        for _ in 0..200 {
            if outer - inner <= 1e-12 * range {
                break;
            }
            let mid = 0.5 * (inner + outer);
            if at(mid) <= 0.0 {
                inner = mid;
            } else {
                outer = mid;
            }
        }
        out.push(origin.advance(dir, inner));
    }
    Ok(out)
}

/// Shoelace area of a closed polygon.
pub fn polygon_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p.x * q.y - q.x * p.y
        })
        .sum();
    0.5 * twice.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pursuer() -> PursuerParams {
        PursuerParams::new(0.3, -0.2, 0.7, 0.5, 2.0, 1.2)
    }

    /// Brute force over arc angles: turn β on the circle, then fly straight if the
    /// post-arc heading points at the target.
    fn oracle_length(target: Point2, p: &PursuerParams) -> f64 {
        let steps = 100_000;
        let mut best = f64::INFINITY;
        for turn in [1.0f64, -1.0] {
            let (s, c) = p.heading.sin_cos();
            let center = Point2::new(p.x - turn * p.turn_radius * s, p.y + turn * p.turn_radius * c);
            let mut prev: Option<(f64, f64)> = None;
            for i in 0..=steps {
                let beta = TAU * i as f64 / steps as f64;
                let h = p.heading + turn * beta;
                let start_angle = p.heading - turn * FRAC_PI_2 + turn * beta;
                let q = center.advance(start_angle, p.turn_radius);
                let to = target.sub(&q);
                // signed misalignment between heading and the line of sight
                let cross = h.cos() * to.y - h.sin() * to.x;
                let along = h.cos() * to.x + h.sin() * to.y;
                if let Some((pc, pb)) = prev {
                    if pc.signum() != cross.signum() && along > 0.0 {
                        let t = pc / (pc - cross);
                        let b = pb + t * (beta - pb);
                        let h = p.heading + turn * b;
                        let q = center.advance(p.heading - turn * FRAC_PI_2 + turn * b, p.turn_radius);
                        let to = target.sub(&q);
                        let along = h.cos() * to.x + h.sin() * to.y;
                        best = best.min(p.turn_radius * b + along);
                    }
                }
                if cross == 0.0 && along >= 0.0 {
                    best = best.min(p.turn_radius * beta + along);
                }
                prev = Some((cross, beta));
            }
        }
        best
    }

    #[test]
    fn straight_ahead_target_has_no_arc() {
        let p = pursuer();
        let t = p.position().advance(p.heading, 1.3);
        let ts = turn_straight_length(t, &p).unwrap();
        assert!((ts.min - 1.3).abs() < 1e-9, "{ts:?}");
    }

    #[test]
    fn pursuer_position_has_zero_length() {
        let p = pursuer();
        let ts = turn_straight_length(p.position(), &p).unwrap();
        assert!(ts.min.abs() < 1e-12);
        assert_eq!(rr_value(p.position(), &p).unwrap(), -p.range);
    }

    #[test]
    fn side_target_matches_arc_oracle() {
        let p = pursuer();
        let t = p.position().advance(p.heading + FRAC_PI_2, 3.0 * p.turn_radius);
        let got = turn_straight_length(t, &p).unwrap().min;
        let want = oracle_length(t, &p);
        assert!((got - want).abs() <= 1e-3 * want, "{got} vs {want}");
    }

    #[test]
    fn inside_left_disc_is_unreachable_left() {
        let p = PursuerParams::new(0.0, 0.0, 0.0, 1.0, 3.0, 1.0);
        let ts = turn_straight_length(Point2::new(0.1, 0.5), &p).unwrap();
        assert!(ts.left.is_infinite());
        assert!(ts.right.is_finite());
        assert_eq!(ts.min, ts.right);
        assert_eq!(ts.active, Turn::Right);
    }

    #[test]
    fn boundary_point_straight_ahead_is_zero() {
        let p = pursuer();
        let t = p.position().advance(p.heading, p.range);
        assert!(rr_value(t, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn non_finite_target_rejected() {
        let p = pursuer();
        assert_eq!(
            turn_straight_length(Point2::new(f64::NAN, 0.0), &p),
            Err(GeometryError::NonFinite)
        );
    }

    #[test]
    fn ez_with_zero_speed_is_rr() {
        let p = pursuer();
        let e = Point2::new(1.0, 2.0);
        assert_eq!(ez_value(e, 0.3, 0.0, &p).unwrap(), rr_value(e, &p).unwrap());
    }

    #[test]
    fn ez_shift_reaches_boundary() {
        let p = pursuer();
        // ν R = R places x_F exactly R straight ahead
        let v_e = p.speed;
        let z = ez_value(p.position(), p.heading, v_e, &p).unwrap();
        assert!(z.abs() < 1e-12);
    }

    #[test]
    fn straight_ahead_gradient_is_negative_heading() {
        let p = pursuer();
        let t = p.position().advance(p.heading, 1.0);
        let g = rr_gradient(t, &p);
        assert!((g.grad[0] + p.heading.cos()).abs() < 1e-9);
        assert!((g.grad[1] + p.heading.sin()).abs() < 1e-9);
        assert_eq!(g.grad[4], -1.0);
        assert_eq!(g.grad[5], 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let p = pursuer();
        for t in [Point2::new(2.0, 1.5), Point2::new(-1.5, 0.4), Point2::new(0.5, -2.5)] {
            let g = rr_gradient(t, &p);
            assert!(!g.nonsmooth);
            let base = p.to_array();
            for k in 0..6 {
                let h = 1e-6 * base[k].abs().max(1.0);
                let mut up = base;
                let mut dn = base;
                up[k] += h;
                dn[k] -= h;
                let fd = (rr_field(t, &PursuerParams::from_array(up))
                    - rr_field(t, &PursuerParams::from_array(dn)))
                    / (2.0 * h);
                assert!((fd - g.grad[k]).abs() <= 1e-4 * fd.abs().max(1.0), "k={k} {fd} {}", g.grad[k]);
            }
        }
    }

    #[test]
    fn target_gradient_is_unit_final_heading() {
        let p = pursuer();
        let (_, g) = length_target_gradient(Point2::new(2.0, 1.5), &p);
        assert!(((g[0] * g[0] + g[1] * g[1]).sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn polyline_vertices_on_contour() {
        let p = PursuerParams::new(0.0, 0.0, 0.4, 0.2, 2.0, 1.0);
        let poly = rr_boundary_polyline(&p, 128).unwrap();
        for v in &poly {
            assert!(rr_field(*v, &p).abs() <= 1e-6 * p.range);
        }
    }

    #[test]
    fn small_turn_radius_area_approaches_disc() {
        let p = PursuerParams::new(1.0, -1.0, 0.0, 1e-3, 1.5, 1.0);
        let area = polygon_area(&rr_boundary_polyline(&p, 512).unwrap());
        let disc = PI * p.range * p.range;
        assert!((area - disc).abs() <= 0.02 * disc, "{area} vs {disc}");
    }

    #[test]
    fn polyline_area_converges() {
        let p = PursuerParams::new(0.0, 0.0, 1.0, 0.3, 2.5, 1.0);
        let a1 = polygon_area(&rr_boundary_polyline(&p, 256).unwrap());
        let a2 = polygon_area(&rr_boundary_polyline(&p, 512).unwrap());
        assert!((a1 - a2).abs() < 0.005 * a2);
    }

    #[test]
    fn polyline_rejects_coarse_sampling() {
        assert_eq!(rr_boundary_polyline(&pursuer(), 10), Err(GeometryError::TooFewSamples(10)));
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
    }

    fn jump_arc_point(offset: f64) -> (PursuerParams, Point2) {
        let p = PursuerParams::new(0.0, 0.0, 0.0, 0.5, 1.5, 1.0);
        let c = turning_centers(&p)[0];
        (p, c.advance(-FRAC_PI_2 + 1.0, 0.5 + offset))
    }

    #[test]
    fn residual_vanishes_on_jump_arc() {
        let (p, outside) = jump_arc_point(1e-4);
        assert!(rr_field(outside, &p) < -0.9);
        assert!((boundary_residual(outside, &p) + 1e-4).abs() < 1e-12);
        let (_, inside) = jump_arc_point(-1e-4);
        assert!(rr_field(inside, &p) > 2.0);
        assert!((boundary_residual(inside, &p) - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn residual_is_phi_away_from_circles() {
        let p = pursuer();
        for t in [Point2::new(3.0, 0.2), Point2::new(-2.0, 1.0), Point2::new(0.1, -4.0)] {
            assert_eq!(boundary_residual(t, &p), rr_field(t, &p));
        }
    }

    #[test]
    fn residual_gradient_matches_central_differences() {
        let (p, x) = jump_arc_point(0.01);
        let g = boundary_residual_gradient(x, &p);
        let h = 1e-6;
        for k in 0..6 {
            let mut hi = p.to_array();
            let mut lo = p.to_array();
            hi[k] += h;
            lo[k] -= h;
            let fd = (boundary_residual(x, &PursuerParams::from_array(hi))
                - boundary_residual(x, &PursuerParams::from_array(lo)))
                / (2.0 * h);
            assert!((fd - g.grad[k]).abs() < 1e-6 * (1.0 + fd.abs()), "k={k} fd={fd} ad={}", g.grad[k]);
        }
    }
}
