//! Load balancing with job-size testing.
//!
//! Jobs pass through a testing scheduler (an M/M/1 queue whose mean service
//! time is the testing time `sigma`) that predicts each job as short or
//! long, then a cutoff rule dispatches them to `N` FCFS servers. The crate
//! evaluates the resulting mean delays in closed form, optimizes the cutoff
//! and the testing time, evaluates the large-system and heavy-tail design
//! rules, and simulates the system as an independent check.

pub mod analytic;
pub mod checks;
pub mod design;
pub mod error;
pub mod model;
pub mod optimize;
pub mod sim;

pub use analytic::{total_cost, CostBreakdown, Delay, DispatchRule};
pub use error::{Error, Result};
pub use model::{CostFn, JointPmf, ProfileCurve, ProfileFamily, SystemConfig, TwoPointJobDist};
