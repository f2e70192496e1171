//! Subcommand bodies. Each returns text for stdout; files are written
//! only where a path was asked for.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lbtest::analytic::{total_cost, CostBreakdown, Delay, DispatchRule};
use lbtest::checks::{Check, Suite};
use lbtest::design::{asymptotic_report, sigma_star};
use lbtest::model::SystemConfig;
use lbtest::optimize::{efficiency, efficiency_sweep, min_cost_over_cutoff, min_efficiency_over_sigma, SweepPoint};
use lbtest::sim::{replicate_parallel, simulate_with_event_log, Estimate, SimParams};
use serde_json::{json, Value};

use crate::config::{DesignSpec, SimSpec, SweepSpec, SystemSpec};
use crate::output::{csv_preamble, line_plot, num, Series};
use crate::presets::{figure1_panels, figure2_panels, Panel, Preset};

/// The evaluated configuration cannot reach steady state.
#[derive(Debug)]
pub struct Unstable(pub String);

impl fmt::Display for Unstable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Unstable {}

/// 2 for instability anywhere in the cause chain, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let unstable = err.chain().any(|e| {
        e.downcast_ref::<Unstable>().is_some()
            || matches!(
                e.downcast_ref::<lbtest::Error>(),
                Some(lbtest::Error::UnstableSystem { .. } | lbtest::Error::SchedulerUnstable { .. })
            )
    });
    if unstable { 2 } else { 1 }
}

fn delay(d: Delay) -> Value {
    match d {
        Delay::Finite(v) => json!(v),
        Delay::Infinite => json!("inf"),
    }
}

fn unstable_parts(b: &CostBreakdown) -> Vec<&'static str> {
    [
        (b.stable_scheduler, "scheduler"),
        (b.stable_short_pool, "short pool"),
        (b.stable_mixing_server, "mixing server"),
        (b.stable_long_pool, "long pool"),
    ]
    .into_iter()
    .filter(|(ok, _)| !ok)
    .map(|(_, name)| name)
    .collect()
}

/// Cost breakdown as one flat JSON object. Instability is reported as an
/// [`Unstable`] error after the record is built.
pub fn eval(cfg: &SystemConfig, cutoff: f64, sigma: f64) -> anyhow::Result<(String, Option<Unstable>)> {
    if !(sigma >= 0.0) {
        bail!("sigma = {sigma} must be non-negative");
    }
    let rule = DispatchRule::new(cutoff, cfg.n_servers())?;
    let b = total_cost(cfg, &rule, sigma);
    let record = json!({
        "cutoff": cutoff,
        "sigma": sigma,
        "scheduler_sojourn": delay(b.scheduler_sojourn),
        "servers_waiting": delay(b.servers_waiting),
        "total": delay(b.total),
        "stable_scheduler": b.stable_scheduler,
        "stable_short_pool": b.stable_short_pool,
        "stable_mixing_server": b.stable_mixing_server,
        "stable_long_pool": b.stable_long_pool,
    });
    let bad = unstable_parts(&b);
    let status = if bad.is_empty() { None } else { Some(Unstable(format!("{} unstable", bad.join(", ")))) };
    Ok((record.to_string(), status))
}

/// Best cutoff at `sigma`, or, without `sigma`, the best testing time over
/// the sweep grid next to the designed one.
pub fn optimize(cfg: &SystemConfig, sigma: Option<f64>, sweep: &SweepSpec, design: &DesignSpec) -> anyhow::Result<String> {
    let out = match sigma {
        Some(s) => {
            let opt = min_cost_over_cutoff(cfg, s);
            if !opt.is_feasible() {
                return Err(Unstable(format!("no cutoff is stable at sigma = {s}")).into());
            }
            json!({"sigma": s, "c_opt": opt.argmin, "d_opt": opt.value, "efficiency": efficiency(cfg, s)?})
        }
        None => {
            let grid = sweep.grid(cfg)?;
            let smax = *grid.last().expect("non-empty grid");
            let best = min_efficiency_over_sigma(cfg, smax, grid.len().max(2))?;
            let s_star = sigma_star(cfg, design.gamma)?;
            let report = asymptotic_report(cfg, design.gamma)?;
            json!({
                "sigma_opt": best.argmin,
                "efficiency_opt": best.value,
                "sigma_star": s_star,
                "efficiency_at_sigma_star": efficiency(cfg, s_star)?,
                "c_opt_at_sigma_star": min_cost_over_cutoff(cfg, s_star).argmin,
                "r_star": report.r_star,
                "r_down": report.r_down,
                "efficiency_floor": report.efficiency_floor,
            })
        }
    };
    Ok(out.to_string())
}

/// Grid plus the designed testing time, sorted; the flag marks the latter.
fn grid_with_star(grid: &[f64], star: f64) -> Vec<(f64, bool)> {
    let mut rows: Vec<(f64, bool)> = grid.iter().map(|&s| (s, false)).collect();
    match rows.iter_mut().find(|(s, _)| *s == star) {
        Some(r) => r.1 = true,
        None => rows.push((star, true)),
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    rows
}

fn sweep_points(cfg: &SystemConfig, grid: &[f64], gamma: f64) -> anyhow::Result<(f64, Vec<(SweepPoint, bool)>)> {
    let star = sigma_star(cfg, gamma)?;
    let rows = grid_with_star(grid, star);
    let sigmas: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let points = efficiency_sweep(cfg, &sigmas)?;
    Ok((star, points.into_iter().zip(rows.into_iter().map(|r| r.1)).collect()))
}

fn system_meta(cfg: &SystemConfig) -> Vec<(String, String)> {
    let d = cfg.dist();
    vec![
        ("N".into(), cfg.n_servers().to_string()),
        ("rho".into(), num(cfg.load())),
        ("lambda_per_server".into(), num(cfg.lambda())),
        ("x_m".into(), num(d.short_size())),
        ("x_M".into(), num(d.long_size())),
        ("p_small".into(), num(d.p_short())),
        ("E[X]".into(), num(d.mean())),
        ("profile".into(), format!("{:?}", cfg.profile().family())),
    ]
}

pub const SWEEP_HEADER: [&str; 5] = ["sigma", "c_opt", "d_opt", "efficiency", "sigma_star_marker"];

pub fn sweep(spec: &SystemSpec, sweep: &SweepSpec, gamma: f64) -> anyhow::Result<String> {
    let cfg = spec.build()?;
    let grid = sweep.grid(&cfg)?;
    let (star, points) = sweep_points(&cfg, &grid, gamma)?;
    let mut meta = system_meta(&cfg);
    meta.push(("gamma".into(), num(gamma)));
    meta.push(("sigma_star".into(), num(star)));
    let mut out = csv_preamble(&meta, &SWEEP_HEADER);
    for (p, marked) in points {
        out.push_str(&format!("{},{},{},{},{}\n", num(p.sigma), num(p.cutoff), num(p.cost), num(p.efficiency), u8::from(marked)));
    }
    Ok(out)
}

fn est(e: &Estimate) -> Value {
    json!({"mean": e.mean, "std_err": e.std_err, "half_width": e.half_width})
}

pub fn simulate(
    cfg: &SystemConfig,
    cutoff: Option<f64>,
    sigma: f64,
    sim: &SimSpec,
    threads: usize,
    event_log: Option<&Path>,
) -> anyhow::Result<String> {
    let cutoff = match cutoff {
        Some(c) => c,
        None => {
            let opt = min_cost_over_cutoff(cfg, sigma);
            if !opt.is_feasible() {
                return Err(Unstable(format!("no cutoff is stable at sigma = {sigma}")).into());
            }
            opt.argmin
        }
    };
    let rule = DispatchRule::new(cutoff, cfg.n_servers())?;
    let analytic = total_cost(cfg, &rule, sigma);
    let bad = unstable_parts(&analytic);
    if !bad.is_empty() {
        return Err(Unstable(format!("{} unstable; refusing to simulate", bad.join(", "))).into());
    }
    let mut params = SimParams::new(sim.jobs, sim.seed, sim.replications);
    if let Some(w) = sim.warmup {
        params.warmup = w;
    }
    let report = replicate_parallel(cfg, &rule, sigma, &params, threads.max(1))?;
    if let Some(path) = event_log {
        let mut file = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        simulate_with_event_log(cfg, &rule, sigma, &params, &mut file)?;
    }
    let target = analytic.total.value();
    let out = json!({
        "cutoff": cutoff,
        "sigma": sigma,
        "jobs": params.jobs,
        "warmup": params.warmup,
        "replications": params.replications,
        "seed": params.seed,
        "mean_total": est(&report.mean_total),
        "mean_servers_waiting": est(&report.mean_servers_waiting),
        "mean_scheduler_sojourn": est(&report.mean_scheduler_sojourn),
        "analytic_total": target,
        "analytic_servers_waiting": analytic.servers_waiting.value(),
        "analytic_scheduler_sojourn": analytic.scheduler_sojourn.value(),
        "total_within_3se": report.mean_total.within(target, 3.0),
        "predicted_short_fraction": est(&report.empirical_prediction_marginal),
        "per_server_utilization": report.per_server_utilization,
    });
    Ok(out.to_string())
}

/// Writes `<name>.csv` and `<name>.svg` per panel into `dir`.
fn write_panel(panel: &Panel, dir: &Path, points: usize, gamma: f64) -> anyhow::Result<(Vec<PathBuf>, usize)> {
    let spec = SweepSpec { points, ..SweepSpec::default() };
    let mut meta = panel.meta.clone();
    meta.push(("gamma".into(), num(gamma)));
    let mut body = String::new();
    let mut plotted = Vec::new();
    let mut rejected = 0;
    for (label, system) in &panel.series {
        let cfg = system.build()?;
        let grid = spec.grid(&cfg)?;
        let (star, pts) = sweep_points(&cfg, &grid, gamma)?;
        meta.push((format!("series {label}"), format!("E[X]={} lambda={} sigma_star={}", num(cfg.dist().mean()), num(cfg.lambda()), num(star))));
        rejected += pts.iter().filter(|(p, _)| !p.efficiency.is_finite()).count();
        for (p, marked) in &pts {
            body.push_str(&format!(
                "{label},{},{},{},{},{}\n",
                num(p.sigma),
                num(p.cutoff),
                num(p.cost),
                num(p.efficiency),
                u8::from(*marked)
            ));
        }
        plotted.push(Series {
            label: label.clone(),
            points: pts.iter().map(|(p, _)| (p.sigma, p.efficiency)).collect(),
            marker: Some(star),
        });
    }
    meta.push(("stability_rejections".into(), rejected.to_string()));
    let mut header = vec!["series"];
    header.extend(SWEEP_HEADER);
    let csv = csv_preamble(&meta, &header) + &body;
    let csv_path = dir.join(format!("{}.csv", panel.name));
    let svg_path = dir.join(format!("{}.svg", panel.name));
    fs::write(&csv_path, csv).with_context(|| format!("cannot write {}", csv_path.display()))?;
    let svg = line_plot(&panel.title, "testing time sigma", "efficiency E(sigma)", &plotted);
    fs::write(&svg_path, svg).with_context(|| format!("cannot write {}", svg_path.display()))?;
    Ok((vec![csv_path, svg_path], rejected))
}

pub struct FiguresOutcome {
    pub files: Vec<PathBuf>,
    pub stability_rejections: usize,
}

pub fn figures(which: Preset, dir: &Path, points: usize, gamma: f64) -> anyhow::Result<FiguresOutcome> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let panels = match which {
        Preset::Figure1 => figure1_panels(),
        Preset::Figure2 => figure2_panels(),
    };
    let mut files = Vec::new();
    let mut stability_rejections = 0;
    for panel in &panels {
        let (f, r) = write_panel(panel, dir, points, gamma)?;
        files.extend(f);
        stability_rejections += r;
    }
    Ok(FiguresOutcome { files, stability_rejections })
}

pub fn verify(suites: &[Suite]) -> anyhow::Result<(String, bool)> {
    let mut out = String::new();
    let mut all = true;
    for suite in suites {
        let checks: Vec<Check> = suite.run()?;
        let pass = checks.iter().filter(|c| c.passed).count();
        out.push_str(&format!("== {} ({pass}/{} pass)\n", suite.name(), checks.len()));
        for c in &checks {
            out.push_str(&format!("{c}\n"));
        }
        all &= pass == checks.len();
    }
    Ok((out, all))
}
