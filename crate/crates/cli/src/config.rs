//! JSON experiment configuration.
//!
//! Only `system` is required; the other sections fall back to defaults.
//! Optional fields that were absent stay absent on serialization, so
//! parsing a serialized config gives back the same value.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lbtest::model::{CostFn, ProfileCurve, ProfileFamily, SystemConfig, TwoPointJobDist};
use lbtest::optimize::sigma_grid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default)]
    pub design: DesignSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub n_servers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_per_server: Option<f64>,
    pub dist: DistSpec,
    pub profile: ProfileSpec,
    #[serde(default)]
    pub cost_fn: CostSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistSpec {
    Pareto { pareto: ParetoSpec },
    TwoPoint(TwoPointSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoPointSpec {
    pub x_m: f64,
    #[serde(rename = "x_M")]
    pub x_big: f64,
    pub p_small: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoSpec {
    pub alpha: f64,
    pub beta: f64,
    pub x_m: f64,
    #[serde(rename = "x_M")]
    pub x_big: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    ExponentialSaturating,
    NoFalseSmall,
    PerfectKnowledge,
    IndependentConstant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub family: FamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Defaults to `p_small^2` (exponential) or `p_small / 2` (no false small).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmm0: Option<f64>,
    /// Defaults to `(1 - p_small)^2`.
    #[serde(default, rename = "pMM0", skip_serializing_if = "Option::is_none")]
    pub p_big0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CostSpec {
    #[default]
    Identity,
    Scaled { kappa: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    /// Geometric points near zero followed by linear points.
    #[default]
    Hybrid,
    Linear,
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Largest testing time; defaults to `0.95 / Lambda`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec { max: None, points: 200, spacing: Spacing::Hybrid }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub jobs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<usize>,
    pub seed: u64,
    pub replications: usize,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec { jobs: 200_000, warmup: None, seed: 1, replications: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub tau: f64,
}

impl Default for DesignSpec {
    fn default() -> Self {
        DesignSpec { gamma: 10.0, theta: None, tau: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).context("malformed config")?;
        cfg.system.build()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

impl DistSpec {
    pub fn build(&self) -> lbtest::Result<TwoPointJobDist> {
        match self {
            DistSpec::TwoPoint(d) => TwoPointJobDist::new(d.x_m, d.x_big, d.p_small),
            DistSpec::Pareto { pareto: d } => TwoPointJobDist::pareto_tail(d.alpha, d.beta, d.x_m, d.x_big),
        }
    }
}

impl ProfileSpec {
    pub fn build(&self, dist: TwoPointJobDist) -> anyhow::Result<ProfileCurve> {
        let (p, q) = (dist.p_short(), dist.p_long());
        let need = |v: Option<f64>, name: &str| v.with_context(|| format!("profile field '{name}' is required for {:?}", self.family));
        let family = match self.family {
            FamilyName::ExponentialSaturating => ProfileFamily::ExponentialSaturating {
                short_rate: need(self.a, "a")?,
                long_rate: need(self.b, "b")?,
                short_hit0: self.pmm0.unwrap_or(p * p),
                long_hit0: self.p_big0.unwrap_or(q * q),
            },
            FamilyName::NoFalseSmall => {
                ProfileFamily::NoFalseSmall { short_rate: need(self.a, "a")?, short_hit0: self.pmm0.unwrap_or(p / 2.0) }
            }
            FamilyName::PerfectKnowledge => ProfileFamily::PerfectKnowledge,
            FamilyName::IndependentConstant => ProfileFamily::IndependentConstant,
        };
        Ok(ProfileCurve::new(family, dist)?)
    }
}

impl CostSpec {
    pub fn build(&self) -> CostFn {
        match *self {
            CostSpec::Identity => CostFn::Identity,
            CostSpec::Scaled { kappa } => CostFn::Scaled(kappa),
        }
    }
}

impl SystemSpec {
    /// Validated system. An unstable load surfaces as
    /// [`lbtest::Error::UnstableSystem`] inside the returned error.
    pub fn build(&self) -> anyhow::Result<SystemConfig> {
        let dist = self.dist.build()?;
        let profile = self.profile.build(dist)?;
        let cost = self.cost_fn.build();
        let cfg = match (self.rho, self.lambda_per_server) {
            (Some(rho), None) => SystemConfig::with_load(self.n_servers, rho, profile, cost)?,
            (None, Some(lambda)) => SystemConfig::new(self.n_servers, lambda, profile, cost)?,
            _ => bail!("give exactly one of 'rho' and 'lambda_per_server'"),
        };
        Ok(cfg)
    }
}

impl SweepSpec {
    pub fn grid(&self, cfg: &SystemConfig) -> anyhow::Result<Vec<f64>> {
        if self.points == 0 {
            bail!("empty sigma grid: 'points' must be positive");
        }
        let limit = 1.0 / cfg.total_rate();
        let max = self.max.unwrap_or(0.95 * limit);
        if !(max > 0.0 && max < limit) {
            bail!("sweep max = {max} must lie in (0, 1/Lambda = {limit})");
        }
        let n = self.points;
        let grid = match self.spacing {
            Spacing::Hybrid => sigma_grid(max, n),
            Spacing::Linear if n == 1 => vec![0.0],
            Spacing::Linear => (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect(),
            Spacing::Geometric => {
                let lo = max * 1e-6;
                let mut g = vec![0.0];
                let steps = n.saturating_sub(1);
                for i in 0..steps {
                    let t = if steps > 1 { i as f64 / (steps - 1) as f64 } else { 1.0 };
                    g.push(lo * (max / lo).powf(t));
                }
                g
            }
        };
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const WORKED: &str = r#"{
        "system": {
            "n_servers": 3,
            "lambda_per_server": 0.1,
            "dist": {"x_m": 1, "x_M": 10, "p_small": 0.9},
            "profile": {"family": "perfect_knowledge"}
        }
    }"#;

    #[test]
    fn parses_worked_example() {
        let cfg = ExperimentConfig::from_json(WORKED).unwrap();
        let sys = cfg.system.build().unwrap();
        assert_eq!(sys.n_servers(), 3);
        assert!((sys.load() - 0.19).abs() < 1e-12);
        assert_eq!(cfg.design.gamma, 10.0);
    }

    #[test]
    fn round_trip() {
        let text = r#"{
            "system": {
                "n_servers": 100, "rho": 0.8,
                "dist": {"pareto": {"alpha": 1, "beta": 0.5, "x_m": 1, "x_M": 1e5}},
                "profile": {"family": "exponential_saturating", "a": 10, "b": 1, "pMM0": 0.001},
                "cost_fn": {"kind": "scaled", "kappa": 2}
            },
            "sweep": {"max": 0.01, "points": 50, "spacing": "linear"},
            "design": {"gamma": 5, "theta": 0.2, "tau": 1},
            "output": {"csv": "out.csv"}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let again = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
        assert!(cfg.to_json().contains("\"pMM0\""));
        assert!(!cfg.to_json().contains("pmm0"));
    }

    #[test]
    fn rejects_unstable_load() {
        let text = WORKED.replace("0.1", "0.6");
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        let unstable = err.chain().any(|e| matches!(e.downcast_ref(), Some(lbtest::Error::UnstableSystem { .. })));
        assert!(unstable, "{err:#}");
    }

    #[test]
    fn rejects_missing_and_ambiguous_fields() {
        assert!(ExperimentConfig::from_json(&WORKED.replace("\"n_servers\": 3,", "")).is_err());
        assert!(ExperimentConfig::from_json(&WORKED.replace("\"lambda_per_server\": 0.1", "\"lambda_per_server\": 0.1, \"rho\": 0.1")).is_err());
        let nfs = WORKED.replace(r#"{"family": "perfect_knowledge"}"#, r#"{"family": "no_false_small"}"#);
        assert!(ExperimentConfig::from_json(&nfs).is_err());
    }

    #[test]
    fn grids() {
        let cfg = ExperimentConfig::from_json(WORKED).unwrap();
        let sys = cfg.system.build().unwrap();
        let mut sweep = SweepSpec { max: None, points: 0, spacing: Spacing::Linear };
        assert!(sweep.grid(&sys).is_err());
        sweep.points = 5;
        let g = sweep.grid(&sys).unwrap();
        assert_eq!(g.len(), 5);
        assert!((g[4] - 0.95 / 0.3).abs() < 1e-12);
        sweep.max = Some(4.0);
        assert!(sweep.grid(&sys).is_err());
    }
}
