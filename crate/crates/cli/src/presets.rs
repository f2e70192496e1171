//! Parameter sets of the two efficiency studies.

use std::str::FromStr;

use anyhow::bail;

use crate::config::{CostSpec, DistSpec, FamilyName, ParetoSpec, ProfileSpec, SystemSpec, TwoPointSpec};
use crate::output::num;

pub const FIGURE1_BETAS: [f64; 3] = [0.5, 1.5, 2.0];
pub const FIGURE1_LONG_SIZES: [f64; 4] = [1e2, 1e3, 1e4, 1e5];
pub const LOADS: [f64; 3] = [0.7, 0.8, 0.9];
pub const SERVER_COUNTS: [usize; 2] = [10, 100];
pub const GAMMA: f64 = 10.0;

/// Short size for the heavy-tailed study. The caption leaves it open.
pub const FIGURE1_SHORT: f64 = 1.0;
pub const FIGURE2_SHORT: f64 = 25.0;
pub const FIGURE2_LONG: f64 = 540.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Figure1,
    Figure2,
}

impl FromStr for Preset {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "figure1" | "1" => Ok(Preset::Figure1),
            "figure2" | "2" => Ok(Preset::Figure2),
            _ => bail!("unknown preset '{s}' (expected figure1 or figure2)"),
        }
    }
}

/// Share of short jobs in the workload study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workload(pub f64);

impl Workload {
    pub const ALL: [Workload; 3] = [Workload(0.5), Workload(0.2), Workload(0.8)];

    pub fn name(&self) -> String {
        format!("p{:02}", (self.0 * 100.0).round() as u32)
    }

    pub fn mean(&self) -> f64 {
        self.0 * FIGURE2_SHORT + (1.0 - self.0) * FIGURE2_LONG
    }
}

impl FromStr for Workload {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Workload::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| anyhow::anyhow!("unknown workload '{s}' (expected p50, p20 or p80)"))
    }
}

/// Prediction model of the workload study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure2Profile {
    /// Independent predictions at zero testing time, rates 3 and 1.
    Independent,
    NoFalseSmall,
}

impl Figure2Profile {
    pub const ALL: [Figure2Profile; 2] = [Figure2Profile::Independent, Figure2Profile::NoFalseSmall];

    pub fn name(&self) -> &'static str {
        match self {
            Figure2Profile::Independent => "independent",
            Figure2Profile::NoFalseSmall => "nfs",
        }
    }
}

impl FromStr for Figure2Profile {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Figure2Profile::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| anyhow::anyhow!("unknown profile '{s}' (expected independent or nfs)"))
    }
}

pub fn figure1_system(beta: f64, n: usize, rho: f64, long: f64) -> SystemSpec {
    SystemSpec {
        n_servers: n,
        rho: Some(rho),
        lambda_per_server: None,
        dist: DistSpec::Pareto { pareto: ParetoSpec { alpha: 1.0, beta, x_m: FIGURE1_SHORT, x_big: long } },
        profile: ProfileSpec { family: FamilyName::ExponentialSaturating, a: Some(10.0), b: Some(1.0), pmm0: None, p_big0: None },
        cost_fn: CostSpec::Identity,
    }
}

pub fn figure2_system(workload: Workload, n: usize, rho: f64, profile: Figure2Profile) -> SystemSpec {
    let profile = match profile {
        Figure2Profile::Independent => {
            ProfileSpec { family: FamilyName::ExponentialSaturating, a: Some(3.0), b: Some(1.0), pmm0: None, p_big0: None }
        }
        Figure2Profile::NoFalseSmall => {
            ProfileSpec { family: FamilyName::NoFalseSmall, a: Some(3.0), b: None, pmm0: None, p_big0: None }
        }
    };
    SystemSpec {
        n_servers: n,
        rho: Some(rho),
        lambda_per_server: None,
        dist: DistSpec::TwoPoint(TwoPointSpec { x_m: FIGURE2_SHORT, x_big: FIGURE2_LONG, p_small: workload.0 }),
        profile,
        cost_fn: CostSpec::Identity,
    }
}

/// One plot: several systems drawn against the testing time.
#[derive(Debug, Clone)]
pub struct Panel {
    pub name: String,
    pub title: String,
    pub meta: Vec<(String, String)>,
    pub series: Vec<(String, SystemSpec)>,
}

pub fn figure1_panels() -> Vec<Panel> {
    let mut out = Vec::new();
    for beta in FIGURE1_BETAS {
        for n in SERVER_COUNTS {
            for rho in LOADS {
                let series = FIGURE1_LONG_SIZES
                    .iter()
                    .map(|&xl| (format!("x_M={xl:e}"), figure1_system(beta, n, rho, xl)))
                    .collect();
                out.push(Panel {
                    name: format!("figure1_beta{beta}_N{n}_rho{rho}"),
                    title: format!("beta={beta}, N={n}, rho={rho}"),
                    meta: vec![
                        ("alpha".into(), "1".into()),
                        ("beta".into(), beta.to_string()),
                        ("x_m".into(), FIGURE1_SHORT.to_string()),
                        ("N".into(), n.to_string()),
                        ("rho".into(), rho.to_string()),
                        ("profile".into(), "exponential_saturating a=10 b=1, product coupling at zero".into()),
                    ],
                    series,
                });
            }
        }
    }
    out
}

pub fn figure2_panels() -> Vec<Panel> {
    let mut out = Vec::new();
    for profile in Figure2Profile::ALL {
        for w in Workload::ALL {
            for rho in LOADS {
                let series = SERVER_COUNTS.iter().map(|&n| (format!("N={n}"), figure2_system(w, n, rho, profile))).collect();
                out.push(Panel {
                    name: format!("figure2_{}_{}_rho{rho}", profile.name(), w.name()),
                    title: format!("{}, p={}, rho={rho}", profile.name(), w.0),
                    meta: vec![
                        ("x_m".into(), FIGURE2_SHORT.to_string()),
                        ("x_M".into(), FIGURE2_LONG.to_string()),
                        ("p_small".into(), w.0.to_string()),
                        ("E[X]".into(), num(w.mean())),
                        ("rho".into(), rho.to_string()),
                        ("profile".into(), profile.name().into()),
                    ],
                    series,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workload_means() {
        assert_eq!(num(Workload(0.5).mean()), "282.5");
        assert_eq!(num(Workload(0.2).mean()), "437");
        assert_eq!(num(Workload(0.8).mean()), "128");
        assert_eq!("p80".parse::<Workload>().unwrap(), Workload(0.8));
        assert!("p10".parse::<Workload>().is_err());
    }

    #[test]
    fn panels_build() {
        let f1 = figure1_panels();
        let f2 = figure2_panels();
        assert_eq!(f1.len(), 18);
        assert_eq!(f2.len(), 18);
        for p in f1.iter().chain(&f2) {
            for (_, s) in &p.series {
                s.build().unwrap();
            }
        }
    }
}
