//! Grid-integrated region areas, coverage and parameter errors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{CandidateSet, LearningCase};
use crate::geometry::{rr_field, wrap_angle, Point2, PursuerParams};

/// Axis-aligned square grid; membership is tested at cell centres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: Point2,
    pub max: Point2,
    pub resolution: usize,
}

impl GridSpec {
    /// Smallest square holding every range disc, padded by 10%.
    pub fn covering<'a>(regions: impl IntoIterator<Item = &'a PursuerParams>, resolution: usize) -> Self {
        let (mut lo, mut hi) = (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in regions {
            lo = Point2::new(lo.x.min(p.x - p.range), lo.y.min(p.y - p.range));
            hi = Point2::new(hi.x.max(p.x + p.range), hi.y.max(p.y + p.range));
        }
        let c = Point2::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y));
        let half = 0.55 * (hi.x - lo.x).max(hi.y - lo.y);
        Self { min: Point2::new(c.x - half, c.y - half), max: Point2::new(c.x + half, c.y + half), resolution }
    }

    pub fn cell_area(&self) -> f64 {
        let n = self.resolution as f64;
        (self.max.x - self.min.x) * (self.max.y - self.min.y) / (n * n)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point2 {
        let n = self.resolution as f64;
        Point2::new(
            self.min.x + (i as f64 + 0.5) * (self.max.x - self.min.x) / n,
            self.min.y + (j as f64 + 0.5) * (self.max.y - self.min.y) / n,
        )
    }
}

pub const DEFAULT_RESOLUTION: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub area_true: f64,
    pub area_union: f64,
    pub union_ratio: f64,
    pub coverage_fraction: f64,
}

fn inside(x: Point2, p: &PursuerParams) -> bool {
    x.dist(&p.position()) <= p.range && rr_field(x, p) <= 0.0
}

/// Areas of the true region and of the candidate union, and their overlap.
pub fn region_metrics(truth: &PursuerParams, cands: &CandidateSet, grid: &GridSpec) -> RegionMetrics {
    let n = grid.resolution;
    let members: Vec<&PursuerParams> = cands.params().collect();
    let (t, u, both) = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut acc = (0usize, 0usize, 0usize);
            for i in 0..n {
                let x = grid.cell_center(i, j);
                let in_true = inside(x, truth);
                let in_union = members.iter().any(|p| inside(x, p));
                acc.0 += in_true as usize;
                acc.1 += in_union as usize;
                acc.2 += (in_true && in_union) as usize;
            }
            acc
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let da = grid.cell_area();
    let (area_true, area_union) = (t as f64 * da, u as f64 * da);
    let (union_ratio, coverage_fraction) = if t == 0 { (f64::NAN, f64::NAN) } else { (u as f64 / t as f64, both as f64 / t as f64) };
    RegionMetrics { area_true, area_union, union_ratio, coverage_fraction }
}

/// Componentwise absolute error with the heading wrapped to `[0, π]`; frozen entries are 0.
pub fn param_error(truth: &PursuerParams, mean: &PursuerParams, case: LearningCase) -> [f64; 6] {
    let (t, m, mask) = (truth.to_array(), mean.to_array(), case.free_mask());
    std::array::from_fn(|k| match (mask[k], k) {
        (false, _) => 0.0,
        (true, 2) => wrap_angle(m[k] - t[k]).abs(),
        (true, _) => (m[k] - t[k]).abs(),
    })
}

/// For each threshold, the fraction of all (run, step) coverage values at or above it.
pub fn coverage_table(coverage: &[Vec<f64>], thresholds: &[f64]) -> Vec<(f64, f64)> {
    let all: Vec<f64> = coverage.iter().flatten().copied().collect();
    thresholds
        .iter()
        .map(|&tau| {
            let hits = all.iter().filter(|c| **c >= tau).count();
            (tau, if all.is_empty() { f64::NAN } else { hits as f64 / all.len() as f64 })
        })
        .collect()
}
