//! Quantified finite-scale checks of the large-system and heavy-tail
//! results. Each check carries its measured value, its threshold and a
//! signed margin (positive means passing). The `verify` command and the
//! acceptance tests both run these.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analytic::{
    fd_derivative_at_zero, objective, servers_waiting, servers_waiting_integer, CostPart, CutoffPolicy,
    DispatchRule,
};
use crate::design::{
    asymptotic_r_star, cutoff_prop3, cutoff_sequence, efficiency_floor, lower_bound_r_down, nfs_zero_derivative,
    prop3_limit, sigma_star, testing_time_for_tau,
};
use crate::error::{Error, Result};
use crate::model::{CostFn, ProfileCurve, ProfileFamily, SystemConfig, TwoPointJobDist};
use crate::optimize::{
    efficiency, grid_min_cost_over_cutoff, min_cost_over_cutoff, min_efficiency_over_sigma, min_over_integer_cutoffs,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Distance to the threshold, positive when passing.
    pub margin: f64,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, margin: f64, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, margin, detail: detail.into() }
    }

    /// `measured <= limit`
    fn at_most(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Check::new(name, measured <= limit, limit - measured, format!("measured {measured:.6e}, limit {limit:.6e}"))
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {} (margin {:+.4e}): {}", self.name, self.margin, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Prop1,
    Thm1,
    Thm2,
    Thm3,
    Bounds,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Prop1, Suite::Thm1, Suite::Thm2, Suite::Thm3, Suite::Bounds];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Prop1 => "prop1",
            Suite::Thm1 => "thm1",
            Suite::Thm2 => "thm2",
            Suite::Thm3 => "thm3",
            Suite::Bounds => "bounds",
        }
    }

    pub fn run(&self) -> Result<Vec<Check>> {
        match self {
            Suite::Prop1 => prop1(),
            Suite::Thm1 => thm1(),
            Suite::Thm2 => thm2(),
            Suite::Thm3 => {
                let mut out = figure1()?;
                out.extend(prop3()?);
                out.extend(figure2()?);
                Ok(out)
            }
            Suite::Bounds => {
                let mut out = vec![integer_equivalence(1000, 11)?, efficiency_at_zero(100, 12)?];
                out.extend(lower_bounds(10_000, 13)?);
                out.push(optimizer_oracle(50, 14)?);
                Ok(out)
            }
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown suite '{s}' (expected prop1, thm1, thm2, thm3 or bounds)")))
    }
}

/// Random stable configuration with at most `max_servers` servers and a
/// profile drawn from any of the four families.
pub fn random_config<R: Rng>(rng: &mut R, max_servers: usize) -> SystemConfig {
    let n = rng.random_range(2..=max_servers.max(2));
    let short = rng.random_range(0.2..5.0);
    let long = short * rng.random_range(1.5..200.0);
    let p = rng.random_range(0.05..0.95);
    let dist = TwoPointJobDist::new(short, long, p).expect("valid two-point law");
    let family = match rng.random_range(0..4) {
        0 => ProfileFamily::ExponentialSaturating {
            short_rate: rng.random_range(0.05..10.0),
            long_rate: rng.random_range(0.05..10.0),
            short_hit0: rng.random_range(0.0..=p),
            long_hit0: rng.random_range(0.0..=1.0 - p),
        },
        1 => ProfileFamily::NoFalseSmall { short_rate: rng.random_range(0.05..10.0), short_hit0: p * rng.random_range(0.01..=1.0) },
        2 => ProfileFamily::PerfectKnowledge,
        _ => ProfileFamily::IndependentConstant,
    };
    let profile = ProfileCurve::new(family, dist).expect("valid profile");
    let rho = rng.random_range(0.05..0.95);
    SystemConfig::with_load(n, rho, profile, CostFn::Identity).expect("stable by construction")
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn prop1_scenario(profile: fn(TwoPointJobDist) -> ProfileCurve) -> SystemConfig {
    let dist = TwoPointJobDist::new(1.0, 10.0, 0.9).unwrap();
    SystemConfig::with_load(8, 0.19, profile(dist), CostFn::Identity).unwrap()
}

/// Relative gap to the limit at `n` servers, with `tau = 1`.
/// Returns the gap at the sequence cutoff and at the best integer cutoff.
pub fn prop1_gap(base: &SystemConfig, n: usize) -> Result<(f64, f64)> {
    let cfg = base.with_servers(n)?;
    let sigma = testing_time_for_tau(cfg.lambda(), n, 1.0);
    let target = asymptotic_r_star(&cfg);
    let c = cutoff_sequence(&cfg, sigma, n);
    let at_seq = servers_waiting_integer(&cfg, c, sigma)?.value();
    let best = min_over_integer_cutoffs(&cfg, sigma).value;
    Ok((rel_err(at_seq, target), rel_err(best, target)))
}

pub fn prop1() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let cases: [(&str, fn(TwoPointJobDist) -> ProfileCurve); 2] =
        [("independent", ProfileCurve::independent), ("perfect", ProfileCurve::perfect)];
    for (label, profile) in cases {
        let cfg = prop1_scenario(profile);
        let (seq8, best8) = prop1_gap(&cfg, 8)?;
        let (seq1024, best1024) = prop1_gap(&cfg, 1024)?;
        out.push(Check::at_most(format!("prop1/{label}/gap_at_1024"), seq1024, 0.05));
        out.push(Check::new(
            format!("prop1/{label}/gap_shrinks"),
            seq1024 < seq8 && best1024 < best8,
            seq8 - seq1024,
            format!("sequence cutoff {seq8:.4e} -> {seq1024:.4e}, best integer {best8:.4e} -> {best1024:.4e}"),
        ));
    }
    Ok(out)
}

/// Exponential profile with product coupling at zero testing time.
fn thm1_scenario(n: usize) -> SystemConfig {
    let dist = TwoPointJobDist::new(1.0, 10.0, 0.9).unwrap();
    let profile = ProfileCurve::exponential_independent_at_zero(10.0, 1.0, dist).unwrap();
    SystemConfig::new(n, 0.1, profile, CostFn::Identity).unwrap()
}

pub fn thm1() -> Result<Vec<Check>> {
    let sizes = [10usize, 100, 1_000, 10_000];
    let mut servers = Vec::new();
    let mut total = 0.0;
    for &n in &sizes {
        let cfg = thm1_scenario(n);
        let h = 1e-4 / cfg.total_rate();
        servers.push(fd_derivative_at_zero(&cfg, CutoffPolicy::SequenceAtZero, h, CostPart::ServersOnly)?);
        if n == 10_000 {
            total = fd_derivative_at_zero(&cfg, CutoffPolicy::SequenceAtZero, h, CostPart::Total)?;
        }
    }
    let decreasing = servers.windows(2).all(|w| w[1].abs() < w[0].abs());
    let shrink = servers.windows(2).map(|w| w[0].abs() - w[1].abs()).fold(f64::INFINITY, f64::min);
    let last = servers[3].abs();
    let f0 = CostFn::Identity.derivative_at_zero();
    Ok(vec![
        Check::new("thm1/servers_fd_decreasing", decreasing, shrink, format!("FD over N=10..1e4: {}", servers.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", "))),
        Check::at_most("thm1/servers_fd_at_1e4", last, 0.05),
        Check::at_most("thm1/total_fd_near_f'(0)", rel_err(total, f0), 0.10),
    ])
}

/// `(x_m, x_M, p_small, rho)` for the derivative comparison, all with
/// `P_mm(0) = p_small / 2` and `a = 3`.
pub const THM2_CONFIGS: [(f64, f64, f64, f64); 10] = [
    (1.0, 10.0, 0.9, 0.19),
    (1.0, 10.0, 0.9, 0.5),
    (1.0, 10.0, 0.9, 0.8),
    (25.0, 540.0, 0.5, 0.5),
    (25.0, 540.0, 0.5, 0.8),
    (25.0, 540.0, 0.2, 0.5),
    (25.0, 540.0, 0.2, 0.8),
    (25.0, 540.0, 0.8, 0.5),
    (25.0, 540.0, 0.8, 0.8),
    (1.0, 100.0, 0.95, 0.5),
];

pub fn thm2() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for &(xs, xl, p, rho) in &THM2_CONFIGS {
        let dist = TwoPointJobDist::new(xs, xl, p)?;
        let cfg = SystemConfig::with_load(10_000, rho, ProfileCurve::no_false_small(3.0, dist)?, CostFn::Identity)?;
        let theory = nfs_zero_derivative(&cfg)?;
        let h = 1e-4 / cfg.total_rate();
        let fd = fd_derivative_at_zero(&cfg, CutoffPolicy::SequenceAtZero, h, CostPart::Total)?;
        let label = format!("thm2/({xs},{xl},{p})/rho={rho}");
        out.push(Check::at_most(format!("{label}/match"), rel_err(fd, theory.derivative), 0.05));
        let f0 = cfg.cost_fn().derivative_at_zero();
        if theory.condition_value >= 1.1 * f0 {
            out.push(Check::new(
                format!("{label}/sign"),
                fd < 0.0,
                -fd,
                format!("condition {:.4} >= 1.1 f'(0), FD {fd:.5}", theory.condition_value),
            ));
        }
    }
    // hand-checked anchor
    let anchor = {
        let dist = TwoPointJobDist::new(1.0, 10.0, 0.9)?;
        let cfg = SystemConfig::new(3, 0.1, ProfileCurve::no_false_small(3.0, dist)?, CostFn::Identity)?;
        nfs_zero_derivative(&cfg)?.derivative
    };
    out.push(Check::at_most("thm2/anchor_0.38583", (anchor - 0.38583).abs(), 1e-5));
    Ok(out)
}

/// Heavy-tailed system with the exponential profile (rates 10 and 1) and
/// product coupling at zero, as in the efficiency study.
pub fn heavy_tail_config(n: usize, rho: f64, beta: f64, long: f64) -> Result<SystemConfig> {
    let dist = TwoPointJobDist::pareto_tail(1.0, beta, 1.0, long)?;
    let profile = ProfileCurve::exponential_independent_at_zero(10.0, 1.0, dist)?;
    SystemConfig::with_load(n, rho, profile, CostFn::Identity)
}

pub const GAMMA: f64 = 10.0;
pub const LONG_SIZES: [f64; 4] = [1e2, 1e3, 1e4, 1e5];
/// Grid resolution for minima of the efficiency over the testing time.
pub const SIGMA_GRID_POINTS: usize = 400;

fn sigma_max(cfg: &SystemConfig) -> f64 {
    0.95 / cfg.total_rate()
}

pub fn figure1() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let e_star: Vec<f64> = LONG_SIZES
        .iter()
        .map(|&xl| {
            let cfg = heavy_tail_config(100, 0.8, 0.5, xl)?;
            efficiency(&cfg, sigma_star(&cfg, GAMMA)?)
        })
        .collect::<Result<_>>()?;
    let decreasing = e_star.windows(2).all(|w| w[1] < w[0]);
    let step = e_star.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
    out.push(Check::new("fig1/beta=0.5/decreasing", decreasing, step, format!("E(sigma*) over x_M: {e_star:.5?}")));
    out.push(Check::at_most("fig1/beta=0.5/fifth", e_star[3], e_star[0] / 5.0));
    for beta in [1.5, 2.0] {
        let mins: Vec<f64> = LONG_SIZES
            .par_iter()
            .map(|&xl| {
                let cfg = heavy_tail_config(100, 0.8, beta, xl)?;
                Ok(min_efficiency_over_sigma(&cfg, sigma_max(&cfg), SIGMA_GRID_POINTS)?.value)
            })
            .collect::<Result<_>>()?;
        let worst = mins.iter().cloned().fold(f64::INFINITY, f64::min);
        let floor = 1.0 - 1e-9;
        out.push(Check::new(
            format!("fig1/beta={beta}/no_gain"),
            worst >= floor,
            worst - floor,
            format!("min E over sigma per x_M: {mins:.6?}"),
        ));
    }
    Ok(out)
}

pub const PROP3_THETA: f64 = 0.25;
pub const PROP3_SIZES: [f64; 3] = [1e3, 1e4, 1e5];

/// `D(sigma*)` normalized as in the limit statement for the given regime.
pub fn prop3_trajectory(n: usize, rho: f64) -> Result<Vec<f64>> {
    PROP3_SIZES
        .iter()
        .map(|&xl| {
            let dist = TwoPointJobDist::pareto_tail(1.0, 0.5, 1.0, xl)?;
            let cfg = SystemConfig::with_load(n, rho, ProfileCurve::perfect(dist), CostFn::Identity)?;
            let s = sigma_star(&cfg, GAMMA)?;
            let c = cutoff_prop3(&cfg, s, PROP3_THETA)?;
            let mut scale = lower_bound_r_down(&cfg);
            if n as f64 * (1.0 - rho) <= 1.0 {
                scale *= xl.powf(PROP3_THETA);
            }
            Ok(objective(&cfg, c, s) / scale)
        })
        .collect()
}

pub fn prop3() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let anchors = [("supercritical", 0.19, 1.799301), ("subcritical", 0.8, 0.208333)];
    for (label, rho, anchor) in anchors {
        let limit = prop3_limit(3, rho, GAMMA)?.value;
        out.push(Check::at_most(format!("prop3/{label}/limit_value"), (limit - anchor).abs(), 5e-7));
        let traj = prop3_trajectory(3, rho)?;
        let gaps: Vec<f64> = traj.iter().map(|v| rel_err(*v, limit)).collect();
        let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
        out.push(Check::new(
            format!("prop3/{label}/monotone_approach"),
            monotone,
            gaps[0] - gaps[2],
            format!("ratios over x_M=1e3..1e5: {traj:.5?}, limit {limit:.6}"),
        ));
        out.push(Check::at_most(format!("prop3/{label}/within_10pct"), gaps[2], 0.10));
    }
    Ok(out)
}

/// `(p_small, N)` scenarios of the workload study.
pub const FIGURE2_SCENARIOS: [(f64, usize); 6] = [(0.5, 10), (0.5, 100), (0.2, 10), (0.2, 100), (0.8, 10), (0.8, 100)];

pub fn figure2_config(p_small: f64, n: usize, rho: f64) -> Result<SystemConfig> {
    let dist = TwoPointJobDist::new(25.0, 540.0, p_small)?;
    SystemConfig::with_load(n, rho, ProfileCurve::no_false_small(3.0, dist)?, CostFn::Identity)
}

pub fn figure2() -> Result<Vec<Check>> {
    let rows: Vec<Vec<Check>> = FIGURE2_SCENARIOS
        .par_iter()
        .map(|&(p, n)| {
            let cfg = figure2_config(p, n, 0.8)?;
            let smax = sigma_max(&cfg);
            let first = crate::optimize::sigma_grid(smax, SIGMA_GRID_POINTS)[1];
            let e_first = efficiency(&cfg, first)?;
            let e_star = efficiency(&cfg, sigma_star(&cfg, GAMMA)?)?;
            let best = min_efficiency_over_sigma(&cfg, smax, SIGMA_GRID_POINTS)?.value;
            let label = format!("fig2/p={p}/N={n}");
            Ok(vec![
                Check::new(format!("{label}/cheap_test_pays"), e_first < 1.0, 1.0 - e_first, format!("E({first:.3e}) = {e_first:.6}")),
                Check::new(format!("{label}/sigma_star_gains"), e_star < 1.0, 1.0 - e_star, format!("E(sigma*) = {e_star:.6}")),
                Check::at_most(format!("{label}/near_optimal"), e_star / best, 1.25),
            ])
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn integer_equivalence(samples: usize, seed: u64) -> Result<Check> {
    let mut r = rng(seed);
    let mut worst = 0.0_f64;
    let mut compared = 0;
    while compared < samples {
        let cfg = random_config(&mut r, 40);
        let n = cfg.n_servers();
        let c = r.random_range(1..n);
        let sigma = r.random_range(0.0..0.9) / cfg.total_rate();
        let general = servers_waiting(&cfg, &DispatchRule::new(c as f64, n)?, sigma);
        let integer = servers_waiting_integer(&cfg, c, sigma)?;
        // only stable cutoffs count toward the sample size
        if let (Some(a), Some(b)) = (general.finite(), integer.finite()) {
            worst = worst.max(rel_err(a, b));
            compared += 1;
        } else if general.is_finite() != integer.is_finite() {
            worst = f64::INFINITY;
            compared += 1;
        }
    }
    Ok(Check::at_most(format!("bounds/integer_equivalence/{samples}"), worst, 1e-10))
}

pub fn efficiency_at_zero(samples: usize, seed: u64) -> Result<Check> {
    let mut r = rng(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let cfg = random_config(&mut r, 40);
        worst = worst.max((efficiency(&cfg, 0.0)? - 1.0).abs());
    }
    Ok(Check::at_most(format!("bounds/efficiency_at_zero/{samples}"), worst, 1e-12))
}

/// Corollary floor on the efficiency and the lower bound on the servers'
/// waiting time over random `(cfg, c, sigma)` triples.
pub fn lower_bounds(samples: usize, seed: u64) -> Result<Vec<Check>> {
    const PER_CONFIG: usize = 20;
    let configs = samples.div_ceil(PER_CONFIG);
    let seeds: Vec<u64> = {
        let mut r = rng(seed);
        (0..configs).map(|_| r.random()).collect()
    };
    let slack: Vec<(f64, f64)> = seeds
        .par_iter()
        .map(|&s| {
            let mut r = rng(s);
            let cfg = random_config(&mut r, 12);
            let n = cfg.n_servers() as f64;
            let floor = efficiency_floor(cfg.dist());
            let bound = lower_bound_r_down(&cfg);
            let mut worst = (f64::INFINITY, f64::INFINITY);
            for _ in 0..PER_CONFIG {
                let c = r.random_range(0.0..=n);
                let sigma = r.random_range(0.0..0.95) / cfg.total_rate();
                if let Some(w) = servers_waiting(&cfg, &DispatchRule::new(c, cfg.n_servers())?, sigma).finite() {
                    worst.1 = worst.1.min(w - bound);
                }
                worst.0 = worst.0.min(efficiency(&cfg, sigma)? - floor);
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let floor_slack = slack.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let bound_slack = slack.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let total = configs * PER_CONFIG;
    Ok(vec![
        Check::new(
            format!("bounds/efficiency_floor/{total}"),
            floor_slack >= -1e-12,
            floor_slack + 1e-12,
            format!("smallest E(sigma) - E[X]^2/E[X^2] = {floor_slack:.4e}"),
        ),
        Check::new(
            format!("bounds/waiting_lower_bound/{total}"),
            bound_slack >= -1e-12,
            bound_slack + 1e-12,
            format!("smallest R - R_down = {bound_slack:.4e}"),
        ),
    ])
}

/// Structured optimizer against a fine grid scan on random configurations.
pub fn optimizer_oracle(samples: usize, seed: u64) -> Result<Check> {
    let seeds: Vec<u64> = {
        let mut r = rng(seed);
        (0..samples).map(|_| r.random()).collect()
    };
    let errs: Vec<f64> = seeds
        .par_iter()
        .map(|&s| {
            let mut r = rng(s);
            let cfg = random_config(&mut r, 20);
            let sigma = r.random_range(0.0..0.9) / cfg.total_rate();
            let fast = min_cost_over_cutoff(&cfg, sigma);
            let grid = grid_min_cost_over_cutoff(&cfg, sigma, 1e-4);
            if !fast.is_feasible() && !grid.is_feasible() {
                return 0.0;
            }
            rel_err(fast.value, grid.value)
        })
        .collect();
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    Ok(Check::at_most(format!("bounds/optimizer_vs_grid/{samples}"), worst, 1e-6))
}
