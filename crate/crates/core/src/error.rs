use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid job-size distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid profile curve: {0}")]
    InvalidProfile(String),
    #[error("invalid system configuration: {0}")]
    InvalidConfig(String),
    #[error("system unstable: per-server load rho = lambda E[X] = {rho} must be below 1")]
    UnstableSystem { rho: f64 },
    #[error("scheduler unstable: Lambda * sigma = {load} >= 1")]
    SchedulerUnstable { load: f64 },
    #[error("cutoff {cutoff} outside [{lo}, {hi}]")]
    CutoffOutOfRange { cutoff: f64, lo: f64, hi: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("operation requires a No False Small profile")]
    NotNoFalseSmall,
    #[error("heavy-tail parameters unknown: distribution was not built from a Pareto tail")]
    MissingTail,
    #[error("N(1 - rho) = 1 lies on the boundary between regimes")]
    RegimeBoundary,
    #[error("no stable cutoff exists at sigma = {sigma}")]
    Infeasible { sigma: f64 },
    #[error("simulation: {0}")]
    Simulation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
