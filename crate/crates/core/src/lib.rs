//! Learning turn-rate-limited pursuer parameters from sacrificial-agent outcomes.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: curve-straight path lengths, reachable-region and engagement-zone fields.
//! - [`domain`]: learning cases, trial records, datasets and candidate ensembles.
//! - [`truthsim`]: ground-truth engagement simulator.
//! - [`losses`]: hinge losses for both interception models and their gradients.
//! - [`inference`]: multi-start box-constrained estimation.
//! - [`learning`]: the closed deploy and re-estimate loop.
//! - [`selection`]: choosing the next sacrificial trajectory.
//! - [`planner`]: B-spline safe-path planning around the learned engagement zones.
//! - [`metrics`]: region areas, coverage and parameter errors.
//! - [`experiment`]: scenario configuration, single-run and Monte Carlo drivers.

pub mod domain;
pub mod dual;
pub mod geometry;
pub mod experiment;
pub mod inference;
pub mod learning;
pub mod losses;
pub mod metrics;
mod optim;
pub mod planner;
pub mod selection;
pub mod truthsim;
