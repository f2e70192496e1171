use proptest::prelude::*;

use lbtest::analytic::{scheduler_delay, servers_waiting, servers_waiting_integer, DispatchRule};
use lbtest::design::{cutoff_star, lower_bound_r_down};
use lbtest::model::{CostFn, ProfileCurve, ProfileFamily, SizeClass, SystemConfig, TwoPointJobDist};
use lbtest::optimize::{grid_min_cost_over_cutoff, min_cost_over_cutoff};

fn dist() -> impl Strategy<Value = TwoPointJobDist> {
    (0.2f64..5.0, 1.5f64..200.0, 0.05f64..0.95).prop_map(|(s, r, p)| TwoPointJobDist::new(s, s * r, p).unwrap())
}

fn profile() -> impl Strategy<Value = ProfileCurve> {
    (dist(), 0usize..4, 0.05f64..10.0, 0.05f64..10.0, 0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(d, kind, a, b, u, v)| {
        let (p, q) = (d.p_short(), d.p_long());
        let family = match kind {
            0 => ProfileFamily::ExponentialSaturating { short_rate: a, long_rate: b, short_hit0: u * p, long_hit0: v * q },
            1 => ProfileFamily::NoFalseSmall { short_rate: a, short_hit0: p * u.max(0.01) },
            2 => ProfileFamily::PerfectKnowledge,
            _ => ProfileFamily::IndependentConstant,
        };
        ProfileCurve::new(family, d).unwrap()
    })
}

fn config() -> impl Strategy<Value = SystemConfig> {
    (profile(), 2usize..30, 0.05f64..0.95)
        .prop_map(|(p, n, rho)| SystemConfig::with_load(n, rho, p, CostFn::Identity).unwrap())
}

proptest! {
    #[test]
    fn pmf_is_valid_and_hits_grow(p in profile(), exponent in -6.0f64..3.0) {
        let s = 10f64.powf(exponent);
        let lo = p.evaluate(s);
        let hi = p.evaluate(s * 2.0);
        prop_assert!(lo.validate(p.dist()).is_ok());
        prop_assert!(hi.short_short >= lo.short_short - 1e-15);
        prop_assert!(hi.long_long >= lo.long_long - 1e-15);
    }

    #[test]
    fn total_expectation(p in profile(), s in 0.0f64..20.0) {
        let m = p.conditional_moments(s);
        let d = p.dist();
        let mean = m.short.weighted_mean() + m.long.weighted_mean();
        let second = m.short.weighted_second() + m.long.weighted_second();
        prop_assert!((mean - d.mean()).abs() <= 1e-12 * d.mean());
        prop_assert!((second - d.second_moment()).abs() <= 1e-12 * d.second_moment());
    }

    #[test]
    fn short_hit_slope_matches_difference(p in profile()) {
        let h = 1e-7;
        let fd = (p.evaluate(h).get(SizeClass::Short, SizeClass::Short) - p.evaluate(0.0).get(SizeClass::Short, SizeClass::Short)) / h;
        let exact = p.d_short_hit_at_zero();
        prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1.0), "fd {} exact {}", fd, exact);
    }

    #[test]
    fn integer_cutoffs_agree_with_general_form(cfg in config(), k in 0.0f64..1.0, u in 0.0f64..0.9) {
        let n = cfg.n_servers();
        let c = 1 + ((n - 2) as f64 * k).round() as usize;
        let sigma = u / cfg.total_rate();
        let a = servers_waiting(&cfg, &DispatchRule::new(c as f64, n).unwrap(), sigma);
        let b = servers_waiting_integer(&cfg, c, sigma).unwrap();
        prop_assert_eq!(a.is_finite(), b.is_finite());
        if let (Some(x), Some(y)) = (a.finite(), b.finite()) {
            prop_assert!((x - y).abs() <= 1e-10 * y);
        }
    }

    #[test]
    fn waiting_never_below_lower_bound(cfg in config(), k in 0.0f64..=1.0, u in 0.0f64..0.95) {
        let c = k * cfg.n_servers() as f64;
        let w = servers_waiting(&cfg, &DispatchRule::new(c, cfg.n_servers()).unwrap(), u / cfg.total_rate());
        if let Some(w) = w.finite() {
            prop_assert!(w >= lower_bound_r_down(&cfg) - 1e-12);
        }
    }

    #[test]
    fn scheduler_delay_increasing(rate in 0.01f64..100.0, a in 0.0f64..0.99, b in 0.0f64..0.99) {
        prop_assume!(a < b);
        let (sa, sb) = (a / rate, b / rate);
        prop_assert!(scheduler_delay(rate, sa).unwrap() < scheduler_delay(rate, sb).unwrap());
    }

    #[test]
    fn normalized_cutoff_in_unit_interval(cfg in config(), u in 0.0f64..0.95) {
        let c = cutoff_star(&cfg, u / cfg.total_rate());
        prop_assert!((0.0..=1.0).contains(&c), "c* = {}", c);
    }

    #[test]
    fn root_mean_between_mean_and_root_second(p in profile(), s in 0.0f64..20.0) {
        // E[X] <= E[sqrt(E[X^2|Y])] <= sqrt(E[X^2])
        let d = p.dist();
        let t = p.conditional_moments(s).mean_root_second();
        prop_assert!(d.mean() <= t * (1.0 + 1e-12));
        prop_assert!(t <= d.second_moment().sqrt() * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn structured_optimizer_matches_grid(cfg in config(), u in 0.0f64..0.9) {
        let sigma = u / cfg.total_rate();
        let fast = min_cost_over_cutoff(&cfg, sigma);
        let grid = grid_min_cost_over_cutoff(&cfg, sigma, 1e-3);
        prop_assert_eq!(fast.is_feasible(), grid.is_feasible());
        if grid.is_feasible() {
            prop_assert!(fast.value <= grid.value * (1.0 + 1e-9), "{:?} vs {:?}", fast, grid);
        }
    }
}
