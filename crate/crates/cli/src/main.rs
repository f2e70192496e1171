use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use lbtest::checks::Suite;
use lbtest_cli::commands::{self, exit_code};
use lbtest_cli::config::{ExperimentConfig, SweepSpec, SystemSpec};
use lbtest_cli::output::{line_plot, Series};
use lbtest_cli::presets::{figure1_system, figure2_system, Figure2Profile, Preset, Workload};

/// Load balancing with job-size testing: closed forms, optimizers,
/// sweeps, simulation and verification suites.
#[derive(Parser)]
#[command(name = "lbtest", version)]
struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the simulation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cost breakdown at a given cutoff and testing time.
    Eval {
        #[arg(long)]
        c: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
    },
    /// Best cutoff at `--sigma`, or best testing time when omitted.
    Optimize {
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Efficiency over a testing-time grid, as CSV.
    Sweep(SweepArgs),
    /// Discrete-event simulation against the closed form.
    Simulate {
        /// Cutoff; the optimal one at `--sigma` when omitted.
        #[arg(long)]
        c: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        /// CSV with one row per job of replication 0.
        #[arg(long)]
        event_log: Option<PathBuf>,
    },
    /// Panel CSVs and SVGs of the two efficiency studies.
    Figures {
        /// 1 or 2.
        #[arg(long)]
        which: Preset,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Run verification suites: prop1, thm1, thm2, thm3, bounds.
    Verify {
        /// All suites when omitted.
        #[arg(long)]
        suite: Option<String>,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    preset: Option<Preset>,
    /// p50, p20 or p80 (second study).
    #[arg(long, default_value = "p50")]
    workload: Workload,
    /// independent or nfs (second study).
    #[arg(long, default_value = "nfs")]
    profile: Figure2Profile,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long = "xM")]
    x_big: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let path = cli.config.as_ref().context("this command needs --config PATH")?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    Ok(cfg)
}

fn sweep_system(cli: &Cli, args: &SweepArgs) -> anyhow::Result<(SystemSpec, SweepSpec, f64, Option<PathBuf>, Option<PathBuf>)> {
    let Some(preset) = args.preset else {
        let cfg = load_config(cli)?;
        let mut sweep = cfg.sweep.clone();
        if let Some(p) = args.points {
            sweep.points = p;
        }
        return Ok((cfg.system, sweep, cfg.design.gamma, cfg.output.csv, cfg.output.svg));
    };
    let n = args.n.unwrap_or(100);
    let rho = args.rho.unwrap_or(0.8);
    let system = match preset {
        Preset::Figure1 => figure1_system(args.beta.unwrap_or(0.5), n, rho, args.x_big.unwrap_or(1e5)),
        Preset::Figure2 => figure2_system(args.workload, n, rho, args.profile),
    };
    let sweep = SweepSpec { points: args.points.unwrap_or(200), ..SweepSpec::default() };
    Ok((system, sweep, lbtest_cli::presets::GAMMA, None, None))
}

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("cannot size the thread pool")?;
    }
    let threads = cli.threads.unwrap_or_else(rayon::current_num_threads);
    match &cli.command {
        Command::Eval { c, sigma } => {
            let cfg = load_config(cli)?.system.build()?;
            let (record, status) = commands::eval(&cfg, *c, *sigma)?;
            println!("{record}");
            if let Some(u) = status {
                return Err(u.into());
            }
        }
        Command::Optimize { sigma } => {
            let cfg = load_config(cli)?;
            let sys = cfg.system.build()?;
            println!("{}", commands::optimize(&sys, *sigma, &cfg.sweep, &cfg.design)?);
        }
        Command::Sweep(args) => {
            let (system, sweep, gamma, csv_path, svg_path) = sweep_system(cli, args)?;
            let csv = commands::sweep(&system, &sweep, gamma)?;
            let csv_path = csv_path.or_else(|| cli.out.as_ref().map(|d| d.join("sweep.csv")));
            match csv_path {
                Some(p) => {
                    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
                    }
                    std::fs::write(&p, &csv).with_context(|| format!("cannot write {}", p.display()))?;
                    eprintln!("wrote {}", p.display());
                }
                None => print!("{csv}"),
            }
            if let Some(p) = svg_path {
                let pts = csv
                    .lines()
                    .filter(|l| !l.starts_with('#'))
                    .skip(1)
                    .filter_map(|l| {
                        let f: Vec<&str> = l.split(',').collect();
                        Some((f[0].parse().ok()?, f[3].parse().ok()?))
                    })
                    .collect();
                let svg = line_plot("efficiency sweep", "testing time sigma", "efficiency", &[Series { label: "E".into(), points: pts, marker: None }]);
                std::fs::write(&p, svg).with_context(|| format!("cannot write {}", p.display()))?;
            }
        }
        Command::Simulate { c, sigma, jobs, reps, warmup, event_log } => {
            let cfg = load_config(cli)?;
            let sys = cfg.system.build()?;
            let mut sim = cfg.sim.clone();
            sim.jobs = jobs.unwrap_or(sim.jobs);
            sim.replications = reps.unwrap_or(sim.replications);
            sim.warmup = warmup.or(sim.warmup);
            println!("{}", commands::simulate(&sys, *c, *sigma, &sim, threads, event_log.as_deref())?);
        }
        Command::Figures { which, points } => {
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("figures"));
            let done = commands::figures(*which, &dir, *points, lbtest_cli::presets::GAMMA)?;
            eprintln!("wrote {} files to {}; stability rejections: {}", done.files.len(), dir.display(), done.stability_rejections);
        }
        Command::Verify { suite } => {
            let suites = match suite {
                Some(s) => vec![s.parse::<Suite>()?],
                None => Suite::ALL.to_vec(),
            };
            let (report, all) = commands::verify(&suites)?;
            print!("{report}");
            if !all {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
