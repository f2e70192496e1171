//! Minimization of the total cost over the cutoff and over the testing
//! time, and the efficiency ratio built on top of it.

use rayon::prelude::*;

use crate::analytic::{integer_form, objective, scheduler_delay};
use crate::design::cutoff_star_from;
use crate::error::{Error, Result};
use crate::model::SystemConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Structured,
    Grid,
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimumPoint {
    pub argmin: f64,
    /// `+inf` when no feasible point was found.
    pub value: f64,
    pub method: Method,
    pub grid_step: f64,
}

impl OptimumPoint {
    pub fn is_feasible(&self) -> bool {
        self.value.is_finite()
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimum of `f` on `[lo, hi]`.
/// Returns the best point seen, including the bracket ends.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut best = {
        let (fa, fb) = (f(a), f(b));
        if fb < fa { (b, fb) } else { (a, fa) }
    };
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2);
        }
    }
    for (x, fx) in [(x1, f1), (x2, f2)] {
        if fx < best.1 || (fx == best.1 && x < best.0) {
            best = (x, fx);
        }
    }
    best
}

fn better(candidate: (f64, f64), best: (f64, f64)) -> bool {
    candidate.1 < best.1 || (candidate.1 == best.1 && candidate.0 < best.0)
}

/// Samples per unit interval before refinement.
const INTERVAL_SAMPLES: usize = 32;
/// Up to this many servers every unit interval is searched.
const FULL_SCAN_SERVERS: usize = 64;

/// Sample the open interval `(k, k+1)` then refine around the best sample.
fn search_unit_interval<F: Fn(f64) -> f64>(f: &F, k: f64) -> (f64, f64) {
    let step = 1.0 / INTERVAL_SAMPLES as f64;
    let mut best = (k, f64::INFINITY);
    let mut best_i = 0;
    for i in 1..INTERVAL_SAMPLES {
        let x = k + i as f64 * step;
        let fx = f(x);
        if better((x, fx), best) {
            best = (x, fx);
            best_i = i;
        }
    }
    if !best.1.is_finite() {
        // feasible set may be a sliver at either end of the interval
        for &x in &[k + 1e-6, k + 1e-3, k + 1.0 - 1e-3, k + 1.0 - 1e-6] {
            let fx = f(x);
            if better((x, fx), best) {
                best = (x, fx);
                best_i = ((x - k) / step).round() as usize;
            }
        }
        if !best.1.is_finite() {
            return best;
        }
    }
    let lo = k + (best_i.saturating_sub(1)) as f64 * step;
    let hi = (k + (best_i + 1) as f64 * step).min(k + 1.0);
    let refined = golden_section(f, lo.max(k), hi, 1e-12);
    if better(refined, best) { refined } else { best }
}

/// Minimize `c -> D_c(sigma)` over `[0, N]`.
///
/// Integer cutoffs come first (the two-term form is convex in `C`, so the
/// best one sits next to `c* N`), then the unit intervals adjacent to the
/// best integer are searched for a fractional improvement. Small systems
/// have every interval searched; that also covers loads where no integer
/// cutoff is stable.
pub fn min_cost_over_cutoff(cfg: &SystemConfig, sigma: f64) -> OptimumPoint {
    let n = cfg.n_servers();
    let infeasible = OptimumPoint { argmin: f64::NAN, value: f64::INFINITY, method: Method::Structured, grid_step: 0.0 };
    if scheduler_delay(cfg.total_rate(), sigma).is_err() {
        return infeasible;
    }
    let f = |c: f64| objective(cfg, c, sigma);

    let mut integers: Vec<usize> = if n <= FULL_SCAN_SERVERS {
        (0..=n).collect()
    } else {
        let m = cfg.profile().conditional_moments(sigma);
        let seed = (cutoff_star_from(cfg, &m) * n as f64).floor() as i64;
        let mut v: Vec<usize> = (seed - 1..=seed + 2).filter(|&c| c >= 1 && c < n as i64).map(|c| c as usize).collect();
        v.extend([0, n]);
        v
    };
    integers.sort_unstable();
    integers.dedup();

    let mut best = (f64::NAN, f64::INFINITY);
    for &c in &integers {
        let x = c as f64;
        let fx = f(x);
        if better((x, fx), best) {
            best = (x, fx);
        }
    }

    let intervals: Vec<usize> = if n <= FULL_SCAN_SERVERS || !best.1.is_finite() {
        (0..n).collect()
    } else {
        let k = best.0 as usize;
        [k.checked_sub(1), (k < n).then_some(k)].into_iter().flatten().collect()
    };
    for k in intervals {
        let cand = search_unit_interval(&f, k as f64);
        if better(cand, best) {
            best = cand;
        }
    }
    if !best.1.is_finite() {
        return infeasible;
    }
    OptimumPoint { argmin: best.0, value: best.1, method: Method::Structured, grid_step: 0.0 }
}

/// Exhaustive scan of `[0, N]` with a fixed step; the correctness oracle.
pub fn grid_min_cost_over_cutoff(cfg: &SystemConfig, sigma: f64, step: f64) -> OptimumPoint {
    let n = cfg.n_servers() as f64;
    let count = (n / step).round() as usize;
    let mut best = (f64::NAN, f64::INFINITY);
    for i in 0..=count {
        let c = (i as f64 * step).min(n);
        let v = objective(cfg, c, sigma);
        if better((c, v), best) {
            best = (c, v);
        }
    }
    OptimumPoint { argmin: best.0, value: best.1, method: Method::Grid, grid_step: step }
}

/// Best integer cutoff in `1..=N-1` using the two-term form.
pub fn min_over_integer_cutoffs(cfg: &SystemConfig, sigma: f64) -> OptimumPoint {
    let n = cfg.n_servers();
    let m = cfg.profile().conditional_moments(sigma);
    let mut best = (f64::NAN, f64::INFINITY);
    for c in 1..n {
        let v = integer_form(cfg.total_rate(), n, c, &m).value();
        if better((c as f64, v), best) {
            best = (c as f64, v);
        }
    }
    OptimumPoint { argmin: best.0, value: best.1, method: Method::Grid, grid_step: 1.0 }
}

/// `min_c D(sigma) / min_c D(0)`
pub fn efficiency(cfg: &SystemConfig, sigma: f64) -> Result<f64> {
    let base = min_cost_over_cutoff(cfg, 0.0);
    if !base.is_feasible() {
        return Err(Error::Infeasible { sigma: 0.0 });
    }
    Ok(efficiency_against(cfg, sigma, base.value))
}

fn efficiency_against(cfg: &SystemConfig, sigma: f64, base: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    min_cost_over_cutoff(cfg, sigma).value / base
}

/// Hybrid sigma grid on `[0, sigma_max]`: zero, a geometric part resolving
/// the neighbourhood of zero, and a linear part.
pub fn sigma_grid(sigma_max: f64, points: usize) -> Vec<f64> {
    if points < 2 || !(sigma_max > 0.0) {
        return vec![0.0];
    }
    let geometric = points / 2;
    let linear = points - 1 - geometric;
    let mut grid = Vec::with_capacity(points);
    grid.push(0.0);
    let lo = sigma_max * 1e-6;
    for i in 0..geometric {
        let t = i as f64 / geometric.max(1) as f64;
        grid.push(lo * (sigma_max / lo).powf(t));
    }
    for i in 1..=linear {
        grid.push(sigma_max * i as f64 / linear as f64);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// One point of an efficiency sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub sigma: f64,
    pub cutoff: f64,
    pub cost: f64,
    pub efficiency: f64,
}

/// Efficiency at each sigma, evaluated in parallel, returned in input order.
pub fn efficiency_sweep(cfg: &SystemConfig, sigmas: &[f64]) -> Result<Vec<SweepPoint>> {
    let base = min_cost_over_cutoff(cfg, 0.0);
    if !base.is_feasible() {
        return Err(Error::Infeasible { sigma: 0.0 });
    }
    Ok(sigmas
        .par_iter()
        .map(|&sigma| {
            let opt = min_cost_over_cutoff(cfg, sigma);
            SweepPoint {
                sigma,
                cutoff: opt.argmin,
                cost: opt.value,
                efficiency: if sigma == 0.0 { 1.0 } else { opt.value / base.value },
            }
        })
        .collect())
}

/// Grid scan of `E(sigma)` followed by golden-section refinement around the
/// best grid point.
pub fn min_efficiency_over_sigma(cfg: &SystemConfig, sigma_max: f64, grid_points: usize) -> Result<OptimumPoint> {
    if !(sigma_max > 0.0) || sigma_max * cfg.total_rate() >= 1.0 {
        return Err(Error::InvalidArgument(format!("sigma_max = {sigma_max} must lie in (0, 1/Lambda)")));
    }
    let grid = sigma_grid(sigma_max, grid_points);
    let sweep = efficiency_sweep(cfg, &grid)?;
    let mut best_i = 0;
    for (i, p) in sweep.iter().enumerate() {
        if p.efficiency < sweep[best_i].efficiency {
            best_i = i;
        }
    }
    let lo = grid[best_i.saturating_sub(1)];
    let hi = grid[(best_i + 1).min(grid.len() - 1)];
    let base = min_cost_over_cutoff(cfg, 0.0).value;
    let (arg, val) = golden_section(|s| efficiency_against(cfg, s, base), lo, hi, 1e-8 * sigma_max);
    let best = (grid[best_i], sweep[best_i].efficiency);
    let step = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if better((arg, val), best) {
        Ok(OptimumPoint { argmin: arg, value: val, method: Method::Refined, grid_step: step })
    } else {
        Ok(OptimumPoint { argmin: best.0, value: best.1, method: Method::Grid, grid_step: step })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{cutoff_star, efficiency_floor};
    use crate::model::{CostFn, ProfileCurve, TwoPointJobDist};

    fn dist() -> TwoPointJobDist {
        TwoPointJobDist::new(1.0, 10.0, 0.9).unwrap()
    }

    #[test]
    fn golden_section_quadratic() {
        let (x, fx) = golden_section(|x| (x - 0.3) * (x - 0.3) + 1.0, 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((fx - 1.0).abs() < 1e-12);
        // monotone: endpoint wins
        let (x, _) = golden_section(|x| x, 0.0, 1.0, 1e-10);
        assert_eq!(x, 0.0);
    }

    #[test]
    fn worked_example_matches_grid() {
        let cfg = SystemConfig::new(3, 0.1, ProfileCurve::perfect(dist()), CostFn::Identity).unwrap();
        let s = min_cost_over_cutoff(&cfg, 0.0);
        let g = grid_min_cost_over_cutoff(&cfg, 0.0, 1e-4);
        assert!((s.value - g.value).abs() <= 1e-6 * g.value, "{s:?} vs {g:?}");
    }

    #[test]
    fn independent_profile_cutoff_near_p_small() {
        let cfg = SystemConfig::new(10, 0.1, ProfileCurve::independent(dist()), CostFn::Identity).unwrap();
        let s = min_cost_over_cutoff(&cfg, 0.0);
        let g = grid_min_cost_over_cutoff(&cfg, 0.0, 1e-4);
        assert!((s.value - g.value).abs() <= 1e-6 * g.value);
        assert!((s.argmin - cutoff_star(&cfg, 0.0) * 10.0).abs() <= 1.0, "{}", s.argmin);
    }

    #[test]
    fn efficiency_basics() {
        let cfg = SystemConfig::new(5, 0.1, ProfileCurve::perfect(dist()), CostFn::Identity).unwrap();
        assert_eq!(efficiency(&cfg, 0.0).unwrap(), 1.0);
        let e = efficiency(&cfg, 0.05).unwrap();
        assert!(e > 1.0);
        assert!(e >= efficiency_floor(cfg.dist()));
    }

    #[test]
    fn sweep_without_information_stays_at_zero() {
        let cfg = SystemConfig::new(5, 0.1, ProfileCurve::independent(dist()), CostFn::Identity).unwrap();
        let opt = min_efficiency_over_sigma(&cfg, 0.5 / cfg.total_rate(), 50).unwrap();
        assert_eq!(opt.argmin, 0.0);
        assert_eq!(opt.value, 1.0);
        let pk = cfg.with_profile(ProfileCurve::perfect(dist())).unwrap();
        let opt = min_efficiency_over_sigma(&pk, 0.5 / pk.total_rate(), 50).unwrap();
        assert_eq!(opt.argmin, 0.0);
    }

    #[test]
    fn grid_shape() {
        let g = sigma_grid(2.0, 400);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 2.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(g.len() >= 390);
        assert!(g[1] <= 2.0e-6 * 1.0001);
    }

    #[test]
    fn infeasible_sigma() {
        let cfg = SystemConfig::new(3, 0.1, ProfileCurve::perfect(dist()), CostFn::Identity).unwrap();
        assert!(!min_cost_over_cutoff(&cfg, 10.0).is_feasible());
        assert!(min_efficiency_over_sigma(&cfg, 10.0, 10).is_err());
    }
}
