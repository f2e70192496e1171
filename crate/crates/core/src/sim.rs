//! Stochastic simulation of the full system: Poisson arrivals, an M/M/1
//! testing scheduler, prediction sampling, cutoff routing and `N` FCFS
//! unit-rate servers.
//!
//! All queues are FCFS and the scheduler releases jobs in arrival order, so
//! each server sees its jobs in order of scheduler departure. Waiting times
//! therefore follow the Lindley recursion `start = max(ready, free)` job by
//! job, which yields the same sample path as an event list ordered by
//! (time, sequence number).

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::analytic::{total_cost, DispatchRule};
use crate::error::{Error, Result};
use crate::model::{SizeClass, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimParams {
    pub jobs: usize,
    pub warmup: usize,
    pub seed: u64,
    pub replications: usize,
}

impl SimParams {
    /// Warmup defaults to 10% of the jobs.
    pub fn new(jobs: usize, seed: u64, replications: usize) -> Self {
        Self { jobs, warmup: jobs / 10, seed, replications }
    }
}

/// Mean over replications with a Student-t 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub half_width: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self { mean, std_err: 0.0, half_width: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        let std_err = (var / n).sqrt();
        let t = StudentsT::new(0.0, 1.0, n - 1.0).expect("positive degrees of freedom").inverse_cdf(0.975);
        Self { mean, std_err, half_width: t * std_err }
    }

    /// `|mean - target| <= k * std_err`
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_err
    }
}

/// Statistics of one replication, over jobs past the warmup.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationStats {
    pub mean_scheduler_sojourn: f64,
    pub mean_servers_waiting: f64,
    pub mean_total: f64,
    pub predicted_short_fraction: f64,
    pub jobs_measured: usize,
    pub window: f64,
    pub per_server: Vec<ServerStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ServerStats {
    pub arrivals: usize,
    pub predicted_short: usize,
    pub predicted_long: usize,
    pub busy_time: f64,
    pub total_wait: f64,
}

impl ServerStats {
    pub fn mean_wait(&self) -> f64 {
        if self.arrivals == 0 { 0.0 } else { self.total_wait / self.arrivals as f64 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub mean_scheduler_sojourn: Estimate,
    pub mean_servers_waiting: Estimate,
    pub mean_total: Estimate,
    pub jobs_completed: usize,
    pub per_server_utilization: Vec<f64>,
    pub empirical_prediction_marginal: Estimate,
    pub seed: u64,
    pub replications: usize,
    pub runs: Vec<ReplicationStats>,
}

impl SimReport {
    /// Per-server time-average number waiting, averaged over replications.
    pub fn per_server_queue_length(&self) -> Vec<f64> {
        self.per_server_mean(|s, window| s.total_wait / window)
    }

    pub fn per_server_mean_wait(&self) -> Vec<Estimate> {
        let n = self.per_server_utilization.len();
        (0..n)
            .map(|i| Estimate::from_samples(&self.runs.iter().map(|r| r.per_server[i].mean_wait()).collect::<Vec<_>>()))
            .collect()
    }

    pub fn per_server_utilization_estimates(&self) -> Vec<Estimate> {
        let n = self.per_server_utilization.len();
        (0..n)
            .map(|i| Estimate::from_samples(&self.runs.iter().map(|r| r.per_server[i].busy_time / r.window).collect::<Vec<_>>()))
            .collect()
    }

    fn per_server_mean(&self, f: impl Fn(&ServerStats, f64) -> f64) -> Vec<f64> {
        let n = self.per_server_utilization.len();
        (0..n)
            .map(|i| self.runs.iter().map(|r| f(&r.per_server[i], r.window)).sum::<f64>() / self.runs.len() as f64)
            .collect()
    }
}

/// One row of the optional event log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JobRecord {
    pub job_id: usize,
    pub arrival: f64,
    pub test_done: f64,
    pub server: usize,
    pub service_start: f64,
    pub departure: f64,
    pub size: f64,
    pub prediction: f64,
}

pub const EVENT_LOG_HEADER: &str = "job_id,arrival_t,test_done_t,server,service_start_t,depart_t,size,prediction";

/// Random source for replication `index` of a run seeded with `seed`.
pub fn replication_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn check_inputs(cfg: &SystemConfig, rule: &DispatchRule, sigma: f64, params: &SimParams) -> Result<()> {
    if params.jobs <= params.warmup {
        return Err(Error::Simulation(format!("jobs = {} must exceed warmup = {}", params.jobs, params.warmup)));
    }
    if params.replications == 0 {
        return Err(Error::Simulation("at least one replication is required".into()));
    }
    if rule.n_servers() != cfg.n_servers() {
        return Err(Error::Simulation("dispatch rule built for a different number of servers".into()));
    }
    let cost = total_cost(cfg, rule, sigma);
    if !cost.is_stable() {
        return Err(Error::Simulation(format!("refusing to simulate an unstable configuration: {cost:?}")));
    }
    Ok(())
}

struct Router {
    pool_short: usize,
    pool_long: usize,
    mixing: usize,
    p_short_pool: f64,
    p_long_pool: f64,
}

impl Router {
    fn new(rule: &DispatchRule) -> Self {
        Self {
            pool_short: rule.short_pool_size(),
            pool_long: rule.long_pool_size(),
            mixing: rule.floor(),
            p_short_pool: rule.p_short_pool(),
            p_long_pool: rule.p_long_pool(),
        }
    }

    /// Zero-based server index.
    fn route<R: Rng>(&self, prediction: SizeClass, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        match prediction {
            SizeClass::Short if self.pool_short > 0 && u < self.p_short_pool => rng.random_range(0..self.pool_short),
            SizeClass::Long if self.pool_long > 0 && u < self.p_long_pool => self.mixing + 1 + rng.random_range(0..self.pool_long),
            _ => self.mixing,
        }
    }
}

fn run_replication(
    cfg: &SystemConfig,
    rule: &DispatchRule,
    sigma: f64,
    params: &SimParams,
    index: usize,
    mut log: Option<&mut dyn Write>,
) -> Result<ReplicationStats> {
    let mut rng = replication_rng(params.seed, index);
    let dist = *cfg.dist();
    let pmf = cfg.profile().evaluate(sigma);
    // P(Y = short | X = x)
    let short_given_short = pmf.short_short / dist.p_short();
    let short_given_long = pmf.long_short / dist.p_long();
    let interarrival = Exp::new(cfg.total_rate()).map_err(|e| Error::Simulation(e.to_string()))?;
    let testing = if sigma > 0.0 { Some(Exp::new(1.0 / sigma).map_err(|e| Error::Simulation(e.to_string()))?) } else { None };
    let router = Router::new(rule);
    let cost = cfg.cost_fn();

    let n = cfg.n_servers();
    let mut free_at = vec![0.0f64; n];
    let mut stats = vec![ServerStats::default(); n];
    let (mut arrival, mut scheduler_free) = (0.0f64, 0.0f64);
    let (mut sum_sojourn, mut sum_wait, mut sum_total) = (0.0, 0.0, 0.0);
    let mut predicted_short = 0usize;
    let (mut window_start, mut window_end) = (0.0, 0.0);

    for job in 0..params.jobs {
        arrival += interarrival.sample(&mut rng);
        let test_done = match &testing {
            Some(t) => arrival.max(scheduler_free) + t.sample(&mut rng),
            None => arrival,
        };
        scheduler_free = test_done;

        let class = if rng.random::<f64>() < dist.p_short() { SizeClass::Short } else { SizeClass::Long };
        let p_pred_short = match class {
            SizeClass::Short => short_given_short,
            SizeClass::Long => short_given_long,
        };
        let prediction = if rng.random::<f64>() < p_pred_short { SizeClass::Short } else { SizeClass::Long };
        let size = dist.size(class);
        let server = router.route(prediction, &mut rng);

        let start = test_done.max(free_at[server]);
        free_at[server] = start + size;
        let wait = start - test_done;

        if let Some(w) = log.as_deref_mut() {
            writeln!(
                w,
                "{job},{arrival},{test_done},{},{start},{},{size},{}",
                server + 1,
                start + size,
                dist.size(prediction)
            )
            .map_err(|e| Error::Simulation(e.to_string()))?;
        }

        if job < params.warmup {
            continue;
        }
        if job == params.warmup {
            window_start = test_done;
        }
        window_end = test_done;
        let sojourn = test_done - arrival;
        sum_sojourn += sojourn;
        sum_wait += wait;
        sum_total += cost.apply(sojourn) + wait;
        if prediction == SizeClass::Short {
            predicted_short += 1;
        }
        let s = &mut stats[server];
        s.arrivals += 1;
        s.total_wait += wait;
        s.busy_time += size;
        match prediction {
            SizeClass::Short => s.predicted_short += 1,
            SizeClass::Long => s.predicted_long += 1,
        }
    }

    let measured = params.jobs - params.warmup;
    let m = measured as f64;
    Ok(ReplicationStats {
        mean_scheduler_sojourn: sum_sojourn / m,
        mean_servers_waiting: sum_wait / m,
        mean_total: sum_total / m,
        predicted_short_fraction: predicted_short as f64 / m,
        jobs_measured: measured,
        window: window_end - window_start,
        per_server: stats,
    })
}

fn aggregate(runs: Vec<ReplicationStats>, n: usize, params: &SimParams) -> SimReport {
    let pick = |f: fn(&ReplicationStats) -> f64| Estimate::from_samples(&runs.iter().map(f).collect::<Vec<_>>());
    let utilization = (0..n)
        .map(|i| {
            let u = runs.iter().map(|r| r.per_server[i].busy_time / r.window).sum::<f64>() / runs.len() as f64;
            u.clamp(0.0, 1.0)
        })
        .collect();
    SimReport {
        mean_scheduler_sojourn: pick(|r| r.mean_scheduler_sojourn),
        mean_servers_waiting: pick(|r| r.mean_servers_waiting),
        mean_total: pick(|r| r.mean_total),
        jobs_completed: runs.iter().map(|r| r.jobs_measured).sum(),
        per_server_utilization: utilization,
        empirical_prediction_marginal: pick(|r| r.predicted_short_fraction),
        seed: params.seed,
        replications: params.replications,
        runs,
    }
}

/// Sequential run of all replications.
pub fn simulate(cfg: &SystemConfig, rule: &DispatchRule, sigma: f64, params: &SimParams) -> Result<SimReport> {
    check_inputs(cfg, rule, sigma, params)?;
    let runs = (0..params.replications)
        .map(|i| run_replication(cfg, rule, sigma, params, i, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(runs, cfg.n_servers(), params))
}

/// Replications spread over `streams` worker threads. Each replication
/// draws from its own substream, so the result equals [`simulate`].
pub fn replicate_parallel(
    cfg: &SystemConfig,
    rule: &DispatchRule,
    sigma: f64,
    params: &SimParams,
    streams: usize,
) -> Result<SimReport> {
    if streams == 0 {
        return Err(Error::Simulation("streams must be at least 1".into()));
    }
    check_inputs(cfg, rule, sigma, params)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(streams)
        .build()
        .map_err(|e| Error::Simulation(e.to_string()))?;
    let runs = pool.install(|| {
        (0..params.replications)
            .into_par_iter()
            .map(|i| run_replication(cfg, rule, sigma, params, i, None))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(aggregate(runs, cfg.n_servers(), params))
}

/// Single replication (index 0) writing one CSV row per job to `out`.
pub fn simulate_with_event_log<W: Write>(
    cfg: &SystemConfig,
    rule: &DispatchRule,
    sigma: f64,
    params: &SimParams,
    out: &mut W,
) -> Result<ReplicationStats> {
    check_inputs(cfg, rule, sigma, params)?;
    writeln!(out, "{EVENT_LOG_HEADER}").map_err(|e| Error::Simulation(e.to_string()))?;
    run_replication(cfg, rule, sigma, params, 0, Some(out))
}

/// Analytic per-server load `arrival rate x mean service time`.
pub fn analytic_server_loads(cfg: &SystemConfig, rule: &DispatchRule, sigma: f64) -> Vec<f64> {
    analytic_server_rates(cfg, rule, sigma).into_iter().map(|(_, load)| load).collect()
}

/// Per-server `(arrival rate, load)`.
pub fn analytic_server_rates(cfg: &SystemConfig, rule: &DispatchRule, sigma: f64) -> Vec<(f64, f64)> {
    let m = cfg.profile().conditional_moments(sigma);
    let lam = cfg.total_rate();
    let c = rule.cutoff();
    let n = cfg.n_servers();
    let floor = rule.floor();
    let mut out = vec![(0.0, 0.0); n];
    let per_short = if c > 0.0 { 1.0 / c } else { 0.0 };
    let per_long = if c < n as f64 { 1.0 / (n as f64 - c) } else { 0.0 };
    for (i, slot) in out.iter_mut().enumerate() {
        let (ws, wl) = if i < floor {
            (per_short, 0.0)
        } else if i == floor {
            (1.0 - rule.p_short_pool(), 1.0 - rule.p_long_pool())
        } else {
            (0.0, per_long)
        };
        let rate = lam * (m.short.prob * ws + m.long.prob * wl);
        let load = lam * (m.short.weighted_mean() * ws + m.long.weighted_mean() * wl);
        *slot = (rate, load);
    }
    out
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
    fn zero_testing_is_pass_through() {
        let cfg = worked();
        let rule = DispatchRule::new(1.0, 3).unwrap();
        let r = simulate(&cfg, &rule, 0.0, &SimParams::new(20_000, 1, 2)).unwrap();
        assert_eq!(r.mean_scheduler_sojourn.mean, 0.0);
    }

    #[test]
    fn input_validation() {
        let cfg = worked();
        let rule = DispatchRule::new(1.0, 3).unwrap();
        let p = SimParams { jobs: 10, warmup: 10, seed: 0, replications: 1 };
        assert!(simulate(&cfg, &rule, 0.0, &p).is_err());
        let p = SimParams::new(1000, 0, 1);
        assert!(replicate_parallel(&cfg, &rule, 0.0, &p, 0).is_err());
        assert!(simulate(&cfg, &rule, 5.0, &p).is_err());
        assert!(simulate(&cfg, &DispatchRule::new(3.0, 3).unwrap(), 0.0, &p).is_err());
    }

    #[test]
    fn parallel_matches_sequential() {
        let cfg = worked();
        let rule = DispatchRule::new(1.5, 3).unwrap();
        let p = SimParams::new(5_000, 42, 6);
        let a = replicate_parallel(&cfg, &rule, 0.1, &p, 1).unwrap();
        let b = replicate_parallel(&cfg, &rule, 0.1, &p, 8).unwrap();
        assert_eq!(a.runs, b.runs);
        assert_eq!(a, simulate(&cfg, &rule, 0.1, &p).unwrap());
    }

    #[test]
    fn event_log_rows() {
        let cfg = worked();
        let rule = DispatchRule::new(1.0, 3).unwrap();
        let mut buf = Vec::new();
        simulate_with_event_log(&cfg, &rule, 0.05, &SimParams::new(100, 3, 1), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(EVENT_LOG_HEADER));
        let rows: Vec<_> = lines.collect();
        assert_eq!(rows.len(), 100);
        for row in rows {
            let f: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
            assert_eq!(f.len(), 8);
            assert!(f[2] >= f[1] && f[4] >= f[2] && (f[5] - f[4] - f[6]).abs() < 1e-9);
            // perfect predictions: size equals prediction
            assert_eq!(f[6], f[7]);
        }
    }

    #[test]
    fn analytic_loads_sum_to_total() {
        let cfg = worked();
        for c in [0.4, 1.0, 1.7, 2.5] {
            let rule = DispatchRule::new(c, 3).unwrap();
            let total: f64 = analytic_server_loads(&cfg, &rule, 0.0).iter().sum();
            assert!((total - cfg.total_rate() * cfg.dist().mean()).abs() < 1e-12);
        }
    }

    #[test]
    fn estimate_interval() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0]);
        assert_eq!(e.mean, 2.0);
        assert!((e.std_err - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((e.half_width / e.std_err - 4.302652729911275).abs() < 1e-6);
    }
}
