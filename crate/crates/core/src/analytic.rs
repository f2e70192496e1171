//! Closed-form mean delays: the M/M/1 testing scheduler and the three
//! groups of M/G/1 servers formed by a cutoff dispatching rule.

use crate::design;
use crate::error::{Error, Result};
use crate::model::{ConditionalMoments, SystemConfig};

/// A mean delay that is either finite or infinite because some queue is
/// overloaded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delay {
    Finite(f64),
    Infinite,
}

impl Delay {
    pub fn is_finite(&self) -> bool {
        matches!(self, Delay::Finite(_))
    }

    /// `f64::INFINITY` for the sentinel.
    pub fn value(&self) -> f64 {
        match *self {
            Delay::Finite(v) => v,
            Delay::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Delay::Finite(v) => Some(v),
            Delay::Infinite => None,
        }
    }
}

impl std::ops::Add for Delay {
    type Output = Delay;

    fn add(self, rhs: Delay) -> Delay {
        match (self, rhs) {
            (Delay::Finite(a), Delay::Finite(b)) => Delay::Finite(a + b),
            _ => Delay::Infinite,
        }
    }
}

/// Cutoff dispatching on `N` servers.
///
/// Predicted-short jobs go to servers `1..=floor(c)` with probability `1/c`
/// each and to server `floor(c)+1` otherwise; predicted-long jobs go to
/// servers `floor(c)+2..=N` with probability `1/(N-c)` each and to server
/// `floor(c)+1` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchRule {
    cutoff: f64,
    n_servers: usize,
}

impl DispatchRule {
    pub fn new(cutoff: f64, n_servers: usize) -> Result<Self> {
        let n = n_servers as f64;
        if !(0.0..=n).contains(&cutoff) {
            return Err(Error::CutoffOutOfRange { cutoff, lo: 0.0, hi: n });
        }
        Ok(Self { cutoff, n_servers })
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn n_servers(&self) -> usize {
        self.n_servers
    }

    pub fn floor(&self) -> usize {
        self.cutoff.floor() as usize
    }

    /// Probability that a predicted-short job avoids the mixing server.
    pub fn p_short_pool(&self) -> f64 {
        if self.cutoff >= 1.0 {
            self.floor() as f64 / self.cutoff
        } else {
            0.0
        }
    }

    /// Probability that a predicted-long job avoids the mixing server.
    pub fn p_long_pool(&self) -> f64 {
        let n = self.n_servers as f64;
        if self.cutoff <= n - 1.0 {
            (n - 1.0 - self.floor() as f64) / (n - self.cutoff)
        } else {
            0.0
        }
    }

    pub fn short_pool_size(&self) -> usize {
        self.floor()
    }

    pub fn long_pool_size(&self) -> usize {
        (self.n_servers - 1).saturating_sub(self.floor())
    }

    /// Zero-based index of the mixing server, if it exists (`c < N`).
    pub fn mixing_server(&self) -> Option<usize> {
        (self.floor() < self.n_servers).then(|| self.floor())
    }
}

pub fn scheduler_delay(total_rate: f64, sigma: f64) -> Result<f64> {
    let load = total_rate * sigma;
    if load >= 1.0 {
        return Err(Error::SchedulerUnstable { load });
    }
    Ok(sigma / (1.0 - load))
}

/// Per-group contributions to the mean waiting time at the servers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerTerms {
    pub short_pool: Delay,
    pub mixing_server: Delay,
    pub long_pool: Delay,
}

impl ServerTerms {
    pub fn total(&self) -> Delay {
        self.short_pool + self.mixing_server + self.long_pool
    }
}

/// One group of identical FCFS servers fed by a Poisson stream, seen from
/// the whole arrival stream. `weight` is the fraction of all jobs routed to
/// the group, `m1`/`m2` are the weighted first two moments
/// `weight * E[S]`, `weight * E[S^2]`.
fn group_term(total_rate: f64, servers: f64, weight: f64, m1: f64, m2: f64) -> Delay {
    if weight <= 0.0 {
        return Delay::Finite(0.0);
    }
    let denom = servers - total_rate * m1;
    if servers <= 0.0 || denom <= 0.0 {
        return Delay::Infinite;
    }
    Delay::Finite(0.5 * total_rate * weight * m2 / denom)
}

/// Three-term waiting time at the servers for an arbitrary real cutoff.
pub fn server_terms(cfg: &SystemConfig, rule: &DispatchRule, moments: &ConditionalMoments) -> ServerTerms {
    debug_assert_eq!(cfg.n_servers(), rule.n_servers());
    let lam = cfg.total_rate();
    let (s, l) = (&moments.short, &moments.long);
    let pm = rule.p_short_pool();
    let pl = rule.p_long_pool();

    let short_pool = group_term(lam, rule.short_pool_size() as f64, s.prob * pm, s.weighted_mean() * pm, s.weighted_second() * pm);
    let long_pool = group_term(lam, rule.long_pool_size() as f64, l.prob * pl, l.weighted_mean() * pl, l.weighted_second() * pl);

    // the mixing server sees Z, a mixture of the two conditional laws
    let ws = 1.0 - pm;
    let wl = 1.0 - pl;
    let p_z = s.prob * ws + l.prob * wl;
    let mixing_servers = if rule.mixing_server().is_some() { 1.0 } else { 0.0 };
    let mixing_server = group_term(
        lam,
        mixing_servers,
        p_z,
        s.weighted_mean() * ws + l.weighted_mean() * wl,
        s.weighted_second() * ws + l.weighted_second() * wl,
    );
    ServerTerms { short_pool, mixing_server, long_pool }
}

pub fn servers_waiting(cfg: &SystemConfig, rule: &DispatchRule, sigma: f64) -> Delay {
    server_terms(cfg, rule, &cfg.profile().conditional_moments(sigma)).total()
}

/// Two-term form valid for an integer cutoff `1 <= C <= N-1`.
pub fn servers_waiting_integer(cfg: &SystemConfig, cutoff: usize, sigma: f64) -> Result<Delay> {
    let n = cfg.n_servers();
    if cutoff < 1 || cutoff > n - 1 {
        return Err(Error::CutoffOutOfRange { cutoff: cutoff as f64, lo: 1.0, hi: (n - 1) as f64 });
    }
    let m = cfg.profile().conditional_moments(sigma);
    Ok(integer_form(cfg.total_rate(), n, cutoff, &m))
}

pub(crate) fn integer_form(total_rate: f64, n: usize, cutoff: usize, m: &ConditionalMoments) -> Delay {
    let short = group_term(total_rate, cutoff as f64, m.short.prob, m.short.weighted_mean(), m.short.weighted_second());
    let long = group_term(total_rate, (n - cutoff) as f64, m.long.prob, m.long.weighted_mean(), m.long.weighted_second());
    short + long
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub scheduler_sojourn: Delay,
    pub servers_waiting: Delay,
    pub total: Delay,
    pub stable_scheduler: bool,
    pub stable_short_pool: bool,
    pub stable_mixing_server: bool,
    pub stable_long_pool: bool,
}

impl CostBreakdown {
    pub fn is_stable(&self) -> bool {
        self.stable_scheduler && self.stable_short_pool && self.stable_mixing_server && self.stable_long_pool
    }
}

/// `f(sigma / (1 - Lambda sigma)) + R_c(sigma)`
pub fn total_cost(cfg: &SystemConfig, rule: &DispatchRule, sigma: f64) -> CostBreakdown {
    let sojourn = match scheduler_delay(cfg.total_rate(), sigma) {
        Ok(t) => Delay::Finite(t),
        Err(_) => Delay::Infinite,
    };
    let terms = server_terms(cfg, rule, &cfg.profile().conditional_moments(sigma));
    let servers = terms.total();
    let total = match sojourn {
        Delay::Finite(t) => Delay::Finite(cfg.cost_fn().apply(t)) + servers,
        Delay::Infinite => Delay::Infinite,
    };
    CostBreakdown {
        scheduler_sojourn: sojourn,
        servers_waiting: servers,
        total,
        stable_scheduler: sojourn.is_finite(),
        stable_short_pool: terms.short_pool.is_finite(),
        stable_mixing_server: terms.mixing_server.is_finite(),
        stable_long_pool: terms.long_pool.is_finite(),
    }
}

/// `D_c(sigma)` as a plain number, `+inf` when unstable.
pub fn objective(cfg: &SystemConfig, cutoff: f64, sigma: f64) -> f64 {
    match DispatchRule::new(cutoff, cfg.n_servers()) {
        Ok(rule) => total_cost(cfg, &rule, sigma).total.value(),
        Err(_) => f64::INFINITY,
    }
}

/// How the cutoff is chosen at each evaluated testing time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutoffPolicy {
    Fixed(f64),
    /// `C_N = floor(c*(0) N)` clamped to `[1, N-1]`, held fixed in sigma.
    SequenceAtZero,
    /// `C_N` recomputed from `c*(sigma)` at every evaluation point.
    SequencePerSigma,
}

impl CutoffPolicy {
    pub fn cutoff(&self, cfg: &SystemConfig, sigma: f64) -> f64 {
        match *self {
            CutoffPolicy::Fixed(c) => c,
            CutoffPolicy::SequenceAtZero => design::cutoff_sequence(cfg, 0.0, cfg.n_servers()) as f64,
            CutoffPolicy::SequencePerSigma => design::cutoff_sequence(cfg, sigma, cfg.n_servers()) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostPart {
    Total,
    ServersOnly,
}

/// One-sided difference `(V(h) - V(0)) / h` of the chosen cost component.
pub fn fd_derivative_at_zero(cfg: &SystemConfig, policy: CutoffPolicy, h: f64, part: CostPart) -> Result<f64> {
    if !(h > 0.0) || 2.0 * h * cfg.total_rate() >= 1.0 {
        return Err(Error::InvalidArgument(format!("step h = {h} must satisfy 0 < h < 1/(2 Lambda)")));
    }
    let eval = |sigma: f64| -> Result<f64> {
        let rule = DispatchRule::new(policy.cutoff(cfg, sigma), cfg.n_servers())?;
        let cost = total_cost(cfg, &rule, sigma);
        let v = match part {
            CostPart::Total => cost.total,
            CostPart::ServersOnly => cost.servers_waiting,
        };
        v.finite().ok_or(Error::Infeasible { sigma })
    };
    Ok((eval(h)? - eval(0.0)?) / h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostFn, ProfileCurve, TwoPointJobDist};

    fn worked() -> SystemConfig {
        let d = TwoPointJobDist::new(1.0, 10.0, 0.9).unwrap();
        SystemConfig::new(3, 0.1, ProfileCurve::perfect(d), CostFn::Identity).unwrap()
    }

    #[test]
    fn routing_probabilities() {
        let r = DispatchRule::new(1.0, 3).unwrap();
        assert_eq!(r.p_short_pool(), 1.0);
        assert_eq!(r.p_long_pool(), 0.5);
        let r = DispatchRule::new(0.5, 3).unwrap();
        assert_eq!(r.p_short_pool(), 0.0);
        let r = DispatchRule::new(2.5, 3).unwrap();
        assert_eq!(r.p_long_pool(), 0.0);
        assert_eq!(r.mixing_server(), Some(2));
        assert_eq!(DispatchRule::new(3.0, 3).unwrap().mixing_server(), None);
        assert!(DispatchRule::new(3.5, 3).is_err());
    }

    #[test]
    fn scheduler_delay_examples() {
        assert!((scheduler_delay(5.0, 0.1).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(scheduler_delay(5.0, 0.0).unwrap(), 0.0);
        assert!(matches!(scheduler_delay(5.0, 0.2), Err(Error::SchedulerUnstable { .. })));
    }

    #[test]
    fn worked_example_terms() {
        let cfg = worked();
        let rule = DispatchRule::new(1.0, 3).unwrap();
        let t = server_terms(&cfg, &rule, &cfg.profile().conditional_moments(0.0));
        assert!((t.short_pool.value() - 0.1215 / 0.73).abs() < 1e-12);
        assert!((t.mixing_server.value() - 0.0375 / 0.85).abs() < 1e-12);
        assert!((t.long_pool.value() - 0.0375 / 0.85).abs() < 1e-12);
        let r = servers_waiting(&cfg, &rule, 0.7).value();
        assert!((r - 0.2546737).abs() < 1e-6);
        let ri = servers_waiting_integer(&cfg, 1, 0.0).unwrap().value();
        assert!((ri - (0.1215 / 0.73 + 0.15 / 1.7)).abs() < 1e-12);
        assert!((r - ri).abs() < 1e-12);
    }

    #[test]
    fn integer_form_range() {
        let cfg = worked();
        assert!(servers_waiting_integer(&cfg, 0, 0.0).is_err());
        assert!(servers_waiting_integer(&cfg, 3, 0.0).is_err());
        let one = servers_waiting_integer(&cfg, 1, 0.0).unwrap().value();
        let two = servers_waiting_integer(&cfg, 2, 0.0).unwrap().value();
        assert!(two.is_finite() && (two - one).abs() > 1e-6);
    }

    #[test]
    fn total_cost_examples() {
        let cfg = worked();
        let rule = DispatchRule::new(1.0, 3).unwrap();
        let at0 = total_cost(&cfg, &rule, 0.0);
        assert_eq!(at0.total, at0.servers_waiting);
        let c = total_cost(&cfg, &rule, 0.1);
        assert!((c.total.value() - (0.1 / 0.97 + 0.2546737)).abs() < 1e-6);
        assert!((c.total.value() - 0.35776).abs() < 1e-5);
        let c = total_cost(&cfg, &rule, 1.0 / 0.3);
        assert!(!c.stable_scheduler);
        assert_eq!(c.total, Delay::Infinite);
    }

    #[test]
    fn overloaded_short_pool_is_infinite() {
        let d = TwoPointJobDist::new(1.0, 10.0, 0.9).unwrap();
        // short jobs alone bring 0.9 * 0.8 * 10 = 7.2 units of work per unit time to a single server
        let cfg = SystemConfig::new(10, 0.8 / 1.9 * 0.99, ProfileCurve::perfect(d), CostFn::Identity).unwrap();
        let c = total_cost(&cfg, &DispatchRule::new(1.0, 10).unwrap(), 0.0);
        assert!(!c.stable_short_pool);
        assert_eq!(c.servers_waiting, Delay::Infinite);
    }

    #[test]
    fn degenerate_routing() {
        let cfg = worked();
        let m = cfg.profile().conditional_moments(0.0);
        let t = server_terms(&cfg, &DispatchRule::new(0.6, 3).unwrap(), &m);
        assert_eq!(t.short_pool, Delay::Finite(0.0));
        let t = server_terms(&cfg, &DispatchRule::new(2.4, 3).unwrap(), &m);
        assert_eq!(t.long_pool, Delay::Finite(0.0));
    }

    #[test]
    fn constant_profile_has_zero_servers_derivative() {
        let d = TwoPointJobDist::new(1.0, 10.0, 0.9).unwrap();
        let cfg = SystemConfig::new(5, 0.1, ProfileCurve::independent(d), CostFn::Identity).unwrap();
        let fd = fd_derivative_at_zero(&cfg, CutoffPolicy::SequenceAtZero, 1e-4, CostPart::ServersOnly).unwrap();
        assert_eq!(fd, 0.0);
        let fd = fd_derivative_at_zero(&cfg, CutoffPolicy::SequenceAtZero, 1e-6, CostPart::Total).unwrap();
        assert!((fd - 1.0).abs() < 1e-5);
        assert!(fd_derivative_at_zero(&cfg, CutoffPolicy::Fixed(1.0), 2.0, CostPart::Total).is_err());
    }
}
