//! Domain types: the two-point job-size law, prediction profile curves and
//! the system configuration consumed by every other module.

use crate::error::{Error, Result};

/// Tolerance used for probability identities (pmf sums, marginals).
pub const PMF_TOLERANCE: f64 = 1e-12;

/// Parameters of a polynomial tail `P(X = x_M) = alpha * x_M^(-beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeavyTail {
    pub alpha: f64,
    pub beta: f64,
}

/// Job sizes taking the value `x_m` (short) or `x_M` (long).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointJobDist {
    short: f64,
    long: f64,
    p_short: f64,
    p_long: f64,
    tail: Option<HeavyTail>,
}

impl TwoPointJobDist {
    pub fn new(short: f64, long: f64, p_short: f64) -> Result<Self> {
        if !(short > 0.0 && short.is_finite()) {
            return Err(Error::InvalidDistribution(format!("x_m = {short} must be positive and finite")));
        }
        if !(long > short && long.is_finite()) {
            return Err(Error::InvalidDistribution(format!("need x_m < x_M < inf, got x_m = {short}, x_M = {long}")));
        }
        if !(p_short > 0.0 && p_short < 1.0) {
            return Err(Error::InvalidDistribution(format!("p_small = {p_short} must lie in (0, 1)")));
        }
        Ok(Self { short, long, p_short, p_long: 1.0 - p_short, tail: None })
    }

    /// Two-point law whose long-job probability decays polynomially in `x_M`.
    pub fn pareto_tail(alpha: f64, beta: f64, short: f64, long: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::InvalidDistribution(format!("alpha = {alpha} and beta = {beta} must be positive")));
        }
        if !(short > 0.0 && short < long) {
            return Err(Error::InvalidDistribution(format!("need 0 < x_m < x_M, got x_m = {short}, x_M = {long}")));
        }
        let p_long = alpha * long.powf(-beta);
        if !(p_long > 0.0 && p_long < 1.0) {
            return Err(Error::InvalidDistribution(format!(
                "alpha * x_M^(-beta) = {p_long} is not a probability in (0, 1)"
            )));
        }
        // p_short may round to 1.0 for very thin tails; p_long keeps the mass
        Ok(Self { short, long, p_short: 1.0 - p_long, p_long, tail: Some(HeavyTail { alpha, beta }) })
    }

    pub fn short_size(&self) -> f64 {
        self.short
    }

    pub fn long_size(&self) -> f64 {
        self.long
    }

    pub fn p_short(&self) -> f64 {
        self.p_short
    }

    pub fn p_long(&self) -> f64 {
        self.p_long
    }

    pub fn tail(&self) -> Option<HeavyTail> {
        self.tail
    }

    pub fn mean(&self) -> f64 {
        self.p_short * self.short + self.p_long() * self.long
    }

    pub fn second_moment(&self) -> f64 {
        self.p_short * self.short * self.short + self.p_long() * self.long * self.long
    }

    /// Size of the given class.
    pub fn size(&self, class: SizeClass) -> f64 {
        match class {
            SizeClass::Short => self.short,
            SizeClass::Long => self.long,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SizeClass {
    Short,
    Long,
}

/// Joint pmf of the true size `X` and the prediction `Y`.
///
/// Field names read as (true size, prediction): `short_long` is the
/// probability that a short job is predicted long.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointPmf {
    pub short_short: f64,
    pub short_long: f64,
    pub long_short: f64,
    pub long_long: f64,
}

impl JointPmf {
    pub fn total(&self) -> f64 {
        self.short_short + self.short_long + self.long_short + self.long_long
    }

    pub fn prob_predicted_short(&self) -> f64 {
        self.short_short + self.long_short
    }

    pub fn prob_predicted_long(&self) -> f64 {
        self.short_long + self.long_long
    }

    pub fn get(&self, truth: SizeClass, prediction: SizeClass) -> f64 {
        match (truth, prediction) {
            (SizeClass::Short, SizeClass::Short) => self.short_short,
            (SizeClass::Short, SizeClass::Long) => self.short_long,
            (SizeClass::Long, SizeClass::Short) => self.long_short,
            (SizeClass::Long, SizeClass::Long) => self.long_long,
        }
    }

    /// Checks entries, normalization and the fixed X-marginal.
    pub fn validate(&self, dist: &TwoPointJobDist) -> Result<()> {
        let entries = [self.short_short, self.short_long, self.long_short, self.long_long];
        if entries.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(Error::InvalidProfile(format!("pmf entry outside [0, 1]: {self:?}")));
        }
        if (self.total() - 1.0).abs() > PMF_TOLERANCE {
            return Err(Error::InvalidProfile(format!("pmf sums to {}", self.total())));
        }
        if (self.short_short + self.short_long - dist.p_short()).abs() > PMF_TOLERANCE {
            return Err(Error::InvalidProfile("X-marginal not preserved".into()));
        }
        Ok(())
    }
}

/// Parametric families for `sigma -> P(sigma)`.
///
/// The exponential families converge faster than any polynomial, so the
/// decay conditions on the off-diagonal entries needed by the heavy-tail
/// design hold for them automatically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileFamily {
    /// Diagonal entries saturate exponentially at rates `short_rate`
    /// (short jobs) and `long_rate` (long jobs) starting from
    /// `short_hit0 = P_mm(0)` and `long_hit0 = P_MM(0)`.
    ExponentialSaturating { short_rate: f64, long_rate: f64, short_hit0: f64, long_hit0: f64 },
    /// A short prediction is always correct; only `P_mm` moves with sigma.
    NoFalseSmall { short_rate: f64, short_hit0: f64 },
    PerfectKnowledge,
    /// Prediction is an independent copy of `X` for every sigma.
    IndependentConstant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileCurve {
    family: ProfileFamily,
    dist: TwoPointJobDist,
}

impl ProfileCurve {
    pub fn new(family: ProfileFamily, dist: TwoPointJobDist) -> Result<Self> {
        let p = dist.p_short();
        let q = dist.p_long();
        let rate_ok = |r: f64| r > 0.0 && r.is_finite();
        match family {
            ProfileFamily::ExponentialSaturating { short_rate, long_rate, short_hit0, long_hit0 } => {
                if !rate_ok(short_rate) || !rate_ok(long_rate) {
                    return Err(Error::InvalidProfile(format!("rates must be positive, got a = {short_rate}, b = {long_rate}")));
                }
                if !(0.0..=p).contains(&short_hit0) {
                    return Err(Error::InvalidProfile(format!("P_mm(0) = {short_hit0} must lie in [0, {p}]")));
                }
                if !(0.0..=q).contains(&long_hit0) {
                    return Err(Error::InvalidProfile(format!("P_MM(0) = {long_hit0} must lie in [0, {q}]")));
                }
            }
            ProfileFamily::NoFalseSmall { short_rate, short_hit0 } => {
                if !rate_ok(short_rate) {
                    return Err(Error::InvalidProfile(format!("rate must be positive, got a = {short_rate}")));
                }
                if !(short_hit0 > 0.0 && short_hit0 <= p) {
                    return Err(Error::InvalidProfile(format!("P_mm(0) = {short_hit0} must lie in (0, {p}]")));
                }
            }
            ProfileFamily::PerfectKnowledge | ProfileFamily::IndependentConstant => {}
        }
        Ok(Self { family, dist })
    }

    /// Exponential family started from the product coupling at zero.
    pub fn exponential_independent_at_zero(short_rate: f64, long_rate: f64, dist: TwoPointJobDist) -> Result<Self> {
        let p = dist.p_short();
        let q = dist.p_long();
        Self::new(
            ProfileFamily::ExponentialSaturating { short_rate, long_rate, short_hit0: p * p, long_hit0: q * q },
            dist,
        )
    }

    /// No False Small with the default starting point `P_mm(0) = p_small / 2`.
    pub fn no_false_small(short_rate: f64, dist: TwoPointJobDist) -> Result<Self> {
        Self::new(ProfileFamily::NoFalseSmall { short_rate, short_hit0: 0.5 * dist.p_short() }, dist)
    }

    pub fn perfect(dist: TwoPointJobDist) -> Self {
        Self { family: ProfileFamily::PerfectKnowledge, dist }
    }

    pub fn independent(dist: TwoPointJobDist) -> Self {
        Self { family: ProfileFamily::IndependentConstant, dist }
    }

    pub fn family(&self) -> ProfileFamily {
        self.family
    }

    pub fn dist(&self) -> &TwoPointJobDist {
        &self.dist
    }

    /// Same family parameters on another distribution. Starting points
    /// given as absolute probabilities are kept and revalidated.
    pub fn with_dist(&self, dist: TwoPointJobDist) -> Result<Self> {
        Self::new(self.family, dist)
    }

    /// Joint pmf at testing time `sigma >= 0`.
    pub fn evaluate(&self, sigma: f64) -> JointPmf {
        debug_assert!(sigma >= 0.0);
        let p = self.dist.p_short();
        let q = self.dist.p_long();
        // 1 - exp(-r sigma), accurate near zero
        let saturation = |rate: f64| -(-rate * sigma).exp_m1();
        match self.family {
            ProfileFamily::ExponentialSaturating { short_rate, long_rate, short_hit0, long_hit0 } => {
                let ss = saturation(short_rate) * (p - short_hit0) + short_hit0;
                let ll = saturation(long_rate) * (q - long_hit0) + long_hit0;
                JointPmf { short_short: ss, short_long: (p - ss).max(0.0), long_short: (q - ll).max(0.0), long_long: ll }
            }
            ProfileFamily::NoFalseSmall { short_rate, short_hit0 } => {
                let ss = saturation(short_rate) * (p - short_hit0) + short_hit0;
                JointPmf { short_short: ss, short_long: (p - ss).max(0.0), long_short: 0.0, long_long: q }
            }
            ProfileFamily::PerfectKnowledge => {
                JointPmf { short_short: p, short_long: 0.0, long_short: 0.0, long_long: q }
            }
            ProfileFamily::IndependentConstant => JointPmf {
                short_short: p * p,
                short_long: p * q,
                long_short: q * p,
                long_long: q * q,
            },
        }
    }

    /// Right-derivative of `P_mm` at zero.
    pub fn d_short_hit_at_zero(&self) -> f64 {
        let p = self.dist.p_short();
        match self.family {
            ProfileFamily::ExponentialSaturating { short_rate, short_hit0, .. }
            | ProfileFamily::NoFalseSmall { short_rate, short_hit0 } => short_rate * (p - short_hit0),
            ProfileFamily::PerfectKnowledge | ProfileFamily::IndependentConstant => 0.0,
        }
    }

    pub fn is_no_false_small(&self) -> bool {
        matches!(self.family, ProfileFamily::NoFalseSmall { .. })
    }

    pub fn conditional_moments(&self, sigma: f64) -> ConditionalMoments {
        cond_moments(&self.evaluate(sigma), &self.dist)
    }
}

/// Moments of `X` restricted to one prediction outcome.
///
/// Only the weighted quantities `P(Y=y) E[X^k | Y=y]` are stored, so a
/// branch with zero probability contributes exactly zero downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub prob: f64,
    weighted_mean: f64,
    weighted_second: f64,
}

impl Branch {
    pub fn is_defined(&self) -> bool {
        self.prob > 0.0
    }

    /// `E[X | Y = y]`, undefined when the branch has zero probability.
    pub fn mean(&self) -> Option<f64> {
        self.is_defined().then(|| self.weighted_mean / self.prob)
    }

    pub fn second_moment(&self) -> Option<f64> {
        self.is_defined().then(|| self.weighted_second / self.prob)
    }

    /// `P(Y = y) E[X | Y = y]`
    pub fn weighted_mean(&self) -> f64 {
        self.weighted_mean
    }

    /// `P(Y = y) E[X^2 | Y = y]`
    pub fn weighted_second(&self) -> f64 {
        self.weighted_second
    }

    /// `P(Y = y) sqrt(E[X^2 | Y = y])`, zero for an empty branch.
    pub fn weighted_root_second(&self) -> f64 {
        if self.is_defined() {
            (self.prob * self.weighted_second).sqrt()
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalMoments {
    /// Jobs predicted short.
    pub short: Branch,
    /// Jobs predicted long.
    pub long: Branch,
}

impl ConditionalMoments {
    pub fn branch(&self, prediction: SizeClass) -> &Branch {
        match prediction {
            SizeClass::Short => &self.short,
            SizeClass::Long => &self.long,
        }
    }

    /// `E[ sqrt(E[X^2 | Y]) ]`
    pub fn mean_root_second(&self) -> f64 {
        self.short.weighted_root_second() + self.long.weighted_root_second()
    }
}

/// Bayes' rule on the joint pmf.
pub fn cond_moments(pmf: &JointPmf, dist: &TwoPointJobDist) -> ConditionalMoments {
    let (xs, xl) = (dist.short_size(), dist.long_size());
    let branch = |from_short: f64, from_long: f64| Branch {
        prob: from_short + from_long,
        weighted_mean: from_short * xs + from_long * xl,
        weighted_second: from_short * xs * xs + from_long * xl * xl,
    };
    ConditionalMoments {
        short: branch(pmf.short_short, pmf.long_short),
        long: branch(pmf.short_long, pmf.long_long),
    }
}

/// Transform applied to the scheduler sojourn time in the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostFn {
    Identity,
    Scaled(f64),
}

impl CostFn {
    pub fn apply(&self, t: f64) -> f64 {
        match *self {
            CostFn::Identity => t,
            CostFn::Scaled(k) => k * t,
        }
    }

    pub fn derivative_at_zero(&self) -> f64 {
        match *self {
            CostFn::Identity => 1.0,
            CostFn::Scaled(k) => k,
        }
    }
}

/// `N` unit-rate FCFS servers fed through a testing scheduler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConfig {
    n_servers: usize,
    lambda: f64,
    profile: ProfileCurve,
    cost_fn: CostFn,
}

impl SystemConfig {
    /// `lambda` is the arrival rate per server; the scheduler sees `lambda * N`.
    pub fn new(n_servers: usize, lambda: f64, profile: ProfileCurve, cost_fn: CostFn) -> Result<Self> {
        if n_servers < 2 {
            return Err(Error::InvalidConfig(format!("n_servers = {n_servers} must be at least 2")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda_per_server = {lambda} must be positive")));
        }
        if let CostFn::Scaled(k) = cost_fn {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::InvalidConfig(format!("cost scale kappa = {k} must be positive")));
            }
        }
        let rho = lambda * profile.dist().mean();
        if rho >= 1.0 {
            return Err(Error::UnstableSystem { rho });
        }
        Ok(Self { n_servers, lambda, profile, cost_fn })
    }

    /// Parameterize by network load: `lambda = rho / E[X]`.
    pub fn with_load(n_servers: usize, rho: f64, profile: ProfileCurve, cost_fn: CostFn) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::InvalidConfig(format!("rho = {rho} must be positive")));
        }
        Self::new(n_servers, rho / profile.dist().mean(), profile, cost_fn)
    }

    pub fn n_servers(&self) -> usize {
        self.n_servers
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Total arrival rate `Lambda = lambda * N`.
    pub fn total_rate(&self) -> f64 {
        self.lambda * self.n_servers as f64
    }

    pub fn load(&self) -> f64 {
        self.lambda * self.dist().mean()
    }

    pub fn dist(&self) -> &TwoPointJobDist {
        self.profile.dist()
    }

    pub fn profile(&self) -> &ProfileCurve {
        &self.profile
    }

    pub fn cost_fn(&self) -> CostFn {
        self.cost_fn
    }

    pub fn with_servers(&self, n_servers: usize) -> Result<Self> {
        Self::new(n_servers, self.lambda, self.profile, self.cost_fn)
    }

    pub fn with_profile(&self, profile: ProfileCurve) -> Result<Self> {
        Self::new(self.n_servers, self.lambda, profile, self.cost_fn)
    }
}
