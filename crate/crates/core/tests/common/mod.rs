//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use ezlearn::domain::{Dataset, InterceptionModel, LearningCase};
use ezlearn::experiment::ScenarioConfig;
use ezlearn::geometry::{Point2, PursuerParams};
use ezlearn::truthsim::{simulate_engagement, TrajectorySpec};
use rand::Rng;
use std::f64::consts::{PI, TAU};

/// Curve-straight length by scanning the turn angle: the first angle at which the
/// target lies straight ahead on the tangent ray, plus the remaining straight leg.
///
/// Returns `+∞` when neither turn direction reaches the target.
pub fn cs_length_bruteforce(target: Point2, p: &PursuerParams, n_steps: usize) -> f64 {
    let mut best = f64::INFINITY;
    for side in [1.0, -1.0] {
        let a = p.turn_radius;
        let center = Point2::new(p.x - side * a * p.heading.sin(), p.y + side * a * p.heading.cos());
        if target.dist(&center) < a {
            continue;
        }
        // signed lateral offset of the target from the tangent ray after turning φ
        let lateral = |phi: f64| {
            let h = p.heading + side * phi;
            let pos = Point2::new(center.x + side * a * h.sin(), center.y - side * a * h.cos());
            let d = target.sub(&pos);
            (h.cos() * d.y - h.sin() * d.x, h.cos() * d.x + h.sin() * d.y, pos)
        };
        let mut prev = lateral(0.0);
        if prev.0.abs() < 1e-12 && prev.1 >= 0.0 {
            best = best.min(target.dist(&Point2::new(p.x, p.y)));
            continue;
        }
        for i in 1..=n_steps {
            let phi = TAU * i as f64 / n_steps as f64;
            let cur = lateral(phi);
            if prev.0.signum() != cur.0.signum() && cur.1 > 0.0 {
                // linear interpolation of the crossing angle
                let phi0 = TAU * (i - 1) as f64 / n_steps as f64;
                let s = prev.0 / (prev.0 - cur.0);
                let phi_c = phi0 + s * (phi - phi0);
                let (_, _, pos) = lateral(phi_c);
                best = best.min(a * phi_c + target.dist(&pos));
                break;
            }
            prev = cur;
        }
    }
    best
}

/// Central difference of `f` along coordinate `k` of a 6-vector.
pub fn central_diff(f: &dyn Fn(&[f64; 6]) -> f64, x: &[f64; 6], k: usize, h: f64) -> f64 {
    let (mut xp, mut xm) = (*x, *x);
    xp[k] += h;
    xm[k] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

pub fn random_params<R: Rng>(rng: &mut R) -> PursuerParams {
    PursuerParams::new(
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(-PI..PI),
        rng.random_range(0.1..1.0),
        rng.random_range(0.5..3.0),
        rng.random_range(0.5..2.0),
    )
}

/// Legs from random points of the start circle aimed at random points near the centre.
pub fn random_spec<R: Rng>(cfg: &ScenarioConfig, rng: &mut R) -> TrajectorySpec {
    let alpha = rng.random_range(0.0..TAU);
    let start = cfg.center.advance(alpha, cfg.r_s);
    let aim = Point2::new(cfg.center.x + rng.random_range(-2.5..2.5), cfg.center.y + rng.random_range(-2.5..2.5));
    let d = aim.sub(&start);
    TrajectorySpec { alpha, heading: d.y.atan2(d.x), speed: cfg.agent_speed, r_s: cfg.r_s, center: cfg.center }
}

/// Noise-free or noisy dataset of `n` random legs against `truth`.
pub fn random_dataset<R: Rng>(truth: &PursuerParams, case: LearningCase, model: InterceptionModel, n: usize, rng: &mut R) -> (ScenarioConfig, Dataset) {
    let cfg = ScenarioConfig::default_for(case, model);
    let settings = cfg.loop_settings();
    let sim = settings.sim_config();
    let (sigma_pos, sigma_t) = cfg.noise.effective();
    let mut data = Dataset::new(case, model, sigma_pos, sigma_t);
    for _ in 0..n {
        let spec = random_spec(&cfg, rng);
        data.push(simulate_engagement(truth, &spec, &sim, rng.random()).expect("valid leg"));
    }
    (cfg, data)
}
