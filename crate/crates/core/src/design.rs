//! Design rules and limit values: cutoffs, testing-time choices, the
//! asymptotic waiting times and the derivative test at zero testing time.

use crate::analytic::scheduler_delay;
use crate::error::{Error, Result};
use crate::model::{ConditionalMoments, SystemConfig, TwoPointJobDist};

/// Share of the `sqrt(E[X^2|Y])` mass carried by the predicted-short branch.
fn short_share(m: &ConditionalMoments) -> f64 {
    let total = m.mean_root_second();
    m.short.weighted_root_second() / total
}

/// Normalized cutoff `c*(sigma) = g (1 - lambda E[X]) + lambda P(Y=x_m) E[X|Y=x_m]`
/// where `g` is the short branch's share of `E[sqrt(E[X^2|Y])]`.
pub fn cutoff_star(cfg: &SystemConfig, sigma: f64) -> f64 {
    let m = cfg.profile().conditional_moments(sigma);
    cutoff_star_from(cfg, &m)
}

pub(crate) fn cutoff_star_from(cfg: &SystemConfig, m: &ConditionalMoments) -> f64 {
    short_share(m) * (1.0 - cfg.load()) + cfg.lambda() * m.short.weighted_mean()
}

/// Both readings of the normalized cutoff at zero testing time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffDiagnostic {
    /// Form with the unconditional load `1 - lambda E[X]` (used everywhere).
    pub unconditional: f64,
    /// Form with `1 - lambda E[X | Y_0 = x_m]` in place of the load factor.
    pub conditional_short: f64,
}

pub fn cutoff_star_diagnostic(cfg: &SystemConfig) -> CutoffDiagnostic {
    let m = cfg.profile().conditional_moments(0.0);
    let share = short_share(&m);
    let cond_mean = m.short.mean().unwrap_or(0.0);
    CutoffDiagnostic {
        unconditional: cutoff_star_from(cfg, &m),
        conditional_short: share * (1.0 - cfg.lambda() * cond_mean) + cfg.lambda() * m.short.weighted_mean(),
    }
}

/// Integer cutoff `floor(c*(sigma) n)` clamped to `[1, n-1]`.
pub fn cutoff_sequence(cfg: &SystemConfig, sigma: f64, n: usize) -> usize {
    assert!(n >= 2, "need at least two servers");
    let raw = (cutoff_star(cfg, sigma) * n as f64).floor();
    (raw.max(1.0) as usize).min(n - 1)
}

/// `1 / (lambda N + sqrt(N) / tau)`, zero for `tau = 0`.
pub fn testing_time_for_tau(lambda: f64, n: usize, tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 / (lambda * n + n.sqrt() / tau)
}

/// Large-system optimal waiting time at the servers.
pub fn asymptotic_r_star(cfg: &SystemConfig) -> f64 {
    let m = cfg.profile().conditional_moments(0.0);
    let root = m.mean_root_second();
    0.5 * cfg.lambda() * root * root / (1.0 - cfg.load())
}

/// `(lambda / 2) E[X]^2 / (1 - rho)`
pub fn lower_bound_r_down(cfg: &SystemConfig) -> f64 {
    let mean = cfg.dist().mean();
    0.5 * cfg.lambda() * mean * mean / (1.0 - cfg.load())
}

/// Waiting time of a single M/G/1 queue at per-server load: no information used.
pub fn pooled_waiting(cfg: &SystemConfig) -> f64 {
    0.5 * cfg.lambda() * cfg.dist().second_moment() / (1.0 - cfg.load())
}

/// Testing time making the scheduler sojourn exactly `R_down / gamma`.
pub fn sigma_star(cfg: &SystemConfig, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma = {gamma} must be positive")));
    }
    Ok(1.0 / (cfg.total_rate() + gamma / lower_bound_r_down(cfg)))
}

/// Real-valued cutoff for the heavy-tail design, with `phi(x_M) = x_M^(-theta)`.
pub fn cutoff_prop3(cfg: &SystemConfig, sigma_star: f64, theta: f64) -> Result<f64> {
    let tail = cfg.dist().tail().ok_or(Error::MissingTail)?;
    if !(theta > 0.0 && theta < tail.beta) {
        return Err(Error::InvalidArgument(format!("theta = {theta} must lie in (0, beta = {})", tail.beta)));
    }
    let n = cfg.n_servers() as f64;
    let rho = cfg.load();
    let scaled = n * cutoff_star(cfg, sigma_star);
    let c = if n * (1.0 - rho) > 1.0 {
        scaled.max(1.0)
    } else {
        let phi = cfg.dist().long_size().powf(-theta);
        scaled.max(n * (1.0 - rho) - n * rho * phi)
    };
    Ok(c.min(n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NfsDerivative {
    /// Large-system limit of `dD/dsigma` at `0+`.
    pub derivative: f64,
    /// Left-hand side of the sufficient condition for improvement.
    pub condition_value: f64,
    /// `condition_value >= f'(0)`
    pub condition_holds: bool,
}

pub fn nfs_zero_derivative(cfg: &SystemConfig) -> Result<NfsDerivative> {
    if !cfg.profile().is_no_false_small() {
        return Err(Error::NotNoFalseSmall);
    }
    let dist = cfg.dist();
    let lam = cfg.lambda();
    let slack = 1.0 - cfg.load();
    let fprime = cfg.cost_fn().derivative_at_zero();
    let dp = cfg.profile().d_short_hit_at_zero();
    let m = cfg.profile().conditional_moments(0.0);
    let xs = dist.short_size();
    let long_m2 = m.long.second_moment().ok_or(Error::NotNoFalseSmall)?;
    let root_long = long_m2.sqrt();

    let scale = lam * m.mean_root_second() / slack;
    let bracket = (long_m2 + xs * xs) / (2.0 * root_long) - xs;
    let derivative = fprime - dp * scale * bracket;

    let gap = dist.second_moment().sqrt() - xs;
    let condition_value = dp * 0.5 * lam * gap * gap / slack;
    Ok(NfsDerivative { derivative, condition_value, condition_holds: condition_value >= fprime })
}

/// `E[X]^2 / E[X^2]`, the best efficiency testing can ever reach.
pub fn efficiency_floor(dist: &TwoPointJobDist) -> f64 {
    let mean = dist.mean();
    mean * mean / dist.second_moment()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `N (1 - rho) > 1`: limit of `D(sigma*) / R_down`.
    Supercritical,
    /// `N (1 - rho) < 1`: limit of `D(sigma*) / (x_M^theta R_down)`.
    Subcritical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prop3Limit {
    pub value: f64,
    pub regime: Regime,
}

pub fn prop3_limit(n: usize, rho: f64, gamma: f64) -> Result<Prop3Limit> {
    if !(gamma > 0.0) || !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!("need gamma > 0 and rho in (0, 1), got {gamma}, {rho}")));
    }
    let n = n as f64;
    let spare = n * (1.0 - rho);
    if spare == 1.0 {
        return Err(Error::RegimeBoundary);
    }
    Ok(if spare > 1.0 {
        Prop3Limit { value: 1.0 / gamma + spare / (spare - 1.0), regime: Regime::Supercritical }
    } else {
        Prop3Limit { value: (1.0 - rho) * (n - 1.0) / (n * rho * rho), regime: Regime::Subcritical }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticReport {
    pub r_star: f64,
    pub r_down: f64,
    pub pooled: f64,
    pub efficiency_floor: f64,
    pub nfs: Option<NfsDerivative>,
    pub sigma_star: f64,
    pub prop3: Option<Prop3Limit>,
}

pub fn asymptotic_report(cfg: &SystemConfig, gamma: f64) -> Result<AsymptoticReport> {
    Ok(AsymptoticReport {
        r_star: asymptotic_r_star(cfg),
        r_down: lower_bound_r_down(cfg),
        pooled: pooled_waiting(cfg),
        efficiency_floor: efficiency_floor(cfg.dist()),
        nfs: nfs_zero_derivative(cfg).ok(),
        sigma_star: sigma_star(cfg, gamma)?,
        prop3: prop3_limit(cfg.n_servers(), cfg.load(), gamma).ok(),
    })
}

/// Scheduler sojourn at the designed testing time.
pub fn sojourn_at_sigma_star(cfg: &SystemConfig, gamma: f64) -> Result<f64> {
    scheduler_delay(cfg.total_rate(), sigma_star(cfg, gamma)?)
}
