//! Plan configuration files.
//!
//! A config is a JSON object with three sections: `evidence` (the prior),
//! `targets` (sample size rules and the net-benefit threshold) and `run`
//! (seed, Monte Carlo sizes and search settings). See `configs/isaric.json`.

use crate::CliError;
use serde::Deserialize;
use std::path::Path;
use valsize_core::evidence::{DistFamily, EvidencePrior, MarginalSpec, Parameterization, Target};
use valsize_core::planner::{SampleSizeRule, SearchConfig};
use valsize_core::precision::{OeWidthScale, PreposteriorMode, SlopeSe, WidthOptions};
use valsize_core::voi::Baseline;
use valsize_core::{rng, LocationKind, RiskFamily};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub evidence: EvidenceConfig,
    #[serde(default)]
    pub targets: TargetsConfig,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceConfig {
    /// Family of the calibrated-risk distribution.
    #[serde(default = "default_family")]
    pub risk_family: RiskFamily,
    pub marginals: Vec<MarginalEntry>,
    #[serde(default)]
    pub correlation: CorrelationConfig,
}

fn default_family() -> RiskFamily {
    RiskFamily::LogitNormal
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetName {
    Prevalence,
    #[serde(alias = "c", alias = "cstat")]
    CStatistic,
    Slope,
    Intercept,
    #[serde(alias = "oe")]
    OeRatio,
    MeanCalibration,
}

impl From<TargetName> for Target {
    fn from(t: TargetName) -> Self {
        match t {
            TargetName::Prevalence => Target::Prevalence,
            TargetName::CStatistic => Target::CStatistic,
            TargetName::Slope => Target::Slope,
            TargetName::Intercept => Target::CalibrationLocation(LocationKind::Intercept),
            TargetName::OeRatio => Target::CalibrationLocation(LocationKind::OeRatio),
            TargetName::MeanCalibration => Target::CalibrationLocation(LocationKind::MeanCalibration),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalEntry {
    pub target: TargetName,
    pub family: DistFamily,
    #[serde(default)]
    pub parameterization: Parameterization,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrelationConfig {
    #[default]
    Independent,
    /// Spearman matrix in the order prevalence, c-statistic, slope, location.
    User { matrix: [[f64; 4]; 4] },
    Bootstrap {
        #[serde(default)]
        n_pilot: Option<u64>,
        #[serde(default = "default_replicates")]
        replicates: usize,
    },
}

fn default_replicates() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsConfig {
    #[serde(default)]
    pub rules: Vec<SampleSizeRule>,
    /// Risk threshold for net benefit, on the predicted-risk scale.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub baseline: Baseline,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_draws")]
    pub s_draws: usize,
    #[serde(default)]
    pub n: Option<u64>,
    #[serde(default)]
    pub n_grid: Option<Vec<u64>>,
    #[serde(default)]
    pub mode: PreposteriorMode,
    #[serde(default)]
    pub slope_se: SlopeSe,
    #[serde(default)]
    pub oe_scale: OeWidthScale,
    /// Quantile reported as QCIW in fixed-N summaries.
    #[serde(default = "default_q")]
    pub q: f64,
    /// Smoother span for calibration-error bands.
    #[serde(default = "default_span")]
    pub span: f64,
    #[serde(default = "default_true")]
    pub bands: bool,
    /// Sample sizes for calibration-error bands; defaults to the largest `n`
    /// evaluated (`prec`) or the final `N` (`samp`).
    #[serde(default)]
    pub band_n: Option<Vec<u64>>,
    #[serde(default)]
    pub search: SearchConfig,
}

fn default_draws() -> usize {
    10_000
}

fn default_q() -> f64 {
    0.9
}

fn default_span() -> f64 {
    0.75
}

fn default_true() -> bool {
    true
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Overrides {
    pub n: Option<u64>,
    pub seed: Option<u64>,
    pub s_draws: Option<usize>,
}

fn invalid(key: impl Into<String>, msg: impl std::fmt::Display) -> CliError {
    CliError::Config { key: key.into(), msg: msg.to_string() }
}

impl PlanConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: PlanConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            invalid(if key == "." { "<root>".into() } else { key }, e.inner())
        })?;
        if cfg.run.seed.is_none() {
            return Err(invalid("run.seed", "a seed is required so runs can be reproduced"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(n) = o.n {
            self.run.n = Some(n);
            self.run.n_grid = None;
        }
        if let Some(seed) = o.seed {
            self.run.seed = Some(seed);
        }
        if let Some(s) = o.s_draws {
            self.run.s_draws = s;
        }
    }

    pub fn seed(&self) -> u64 {
        self.run.seed.expect("checked when loading")
    }

    pub fn width_options(&self) -> WidthOptions {
        WidthOptions { slope_se: self.run.slope_se, oe_scale: self.run.oe_scale, family: self.evidence.risk_family }
    }

    /// Checks everything that does not need Monte Carlo work.
    pub fn validate(&self) -> Result<(), CliError> {
        let run = &self.run;
        if run.s_draws == 0 {
            return Err(invalid("run.s_draws", "must be at least 1"));
        }
        if !(run.q > 0.0 && run.q < 1.0) {
            return Err(invalid("run.q", "must lie in (0, 1)"));
        }
        if !(run.span > 0.0 && run.span <= 1.0) {
            return Err(invalid("run.span", "must lie in (0, 1]"));
        }
        if let Some(n) = run.n {
            if n < 20 {
                return Err(invalid("run.n", "must be at least 20"));
            }
        }
        if let Some(b) = &run.band_n {
            if b.iter().any(|&n| n < 20) {
                return Err(invalid("run.band_n", "every entry must be at least 20"));
            }
        }
        if let Some(grid) = &run.n_grid {
            if grid.is_empty() || grid[0] < 20 || grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid("run.n_grid", "must be strictly increasing with every entry at least 20"));
            }
        }
        run.search.validate().map_err(|e| invalid("run.search", e))?;
        for (i, r) in self.targets.rules.iter().enumerate() {
            r.validate().map_err(|e| invalid(format!("targets.rules[{i}]"), e))?;
            if r.needs_threshold() && self.targets.threshold.is_none() {
                return Err(invalid("targets.threshold", format!("required by rule `{}`", r.name())));
            }
        }
        if let Some(z) = self.targets.threshold {
            if !(z > 0.0 && z < 1.0) {
                return Err(invalid("targets.threshold", "must lie in (0, 1)"));
            }
        }
        if let Baseline::ForcedDefault(k) = self.targets.baseline {
            if k > 2 {
                return Err(invalid("targets.baseline", "default strategy must be 0 (none), 1 (model) or 2 (all)"));
            }
        }
        let locations = self
            .evidence
            .marginals
            .iter()
            .filter(|m| matches!(Target::from(m.target), Target::CalibrationLocation(_)))
            .count();
        if locations != 1 {
            return Err(invalid(
                "evidence.marginals",
                format!("exactly one of intercept, oe_ratio or mean_calibration is required, found {locations}"),
            ));
        }
        Ok(())
    }

    /// The marginals as an independent prior.
    pub fn marginal_prior(&self) -> Result<EvidencePrior, CliError> {
        let specs: Vec<MarginalSpec> = self
            .evidence
            .marginals
            .iter()
            .map(|m| MarginalSpec {
                target: m.target.into(),
                family: m.family,
                parameterization: m.parameterization,
                values: m.values.clone(),
            })
            .collect();
        EvidencePrior::new(&specs).map_err(|e| invalid("evidence.marginals", e))
    }

    /// Resolves the marginals and correlation into a prior.
    pub fn prior(&self) -> Result<EvidencePrior, CliError> {
        let prior = self.marginal_prior()?;
        Ok(match &self.evidence.correlation {
            CorrelationConfig::Independent => prior,
            CorrelationConfig::User { matrix } => {
                prior.with_rank_correlation(*matrix).map_err(|e| invalid("evidence.correlation.matrix", e))?
            }
            CorrelationConfig::Bootstrap { n_pilot, replicates } => {
                let seed = rng::derive(self.seed(), rng::tag::BOOTSTRAP);
                prior
                    .with_bootstrap_correlation(self.evidence.risk_family, *n_pilot, *replicates, seed)
                    .map_err(|e| match e {
                        valsize_core::Error::Domain(_) => invalid("evidence.correlation", e),
                        other => CliError::Core(other),
                    })?
                    .0
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "evidence": {"marginals": [
            {"target": "prevalence", "family": "beta", "values": [119.64, 159.91]},
            {"target": "c_statistic", "family": "logit_normal", "values": [1.1565, 0.0412]},
            {"target": "mean_calibration", "family": "normal", "values": [-0.0093, 0.1245]},
            {"target": "slope", "family": "normal", "values": [0.995, 0.0237]}
        ]},
        "targets": {"rules": [{"rule": "nb_assurance", "level": 0.9}], "threshold": 0.2},
        "run": {"seed": 1}
    }"#;

    #[test]
    fn parses_and_validates() {
        let cfg = PlanConfig::from_json(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.run.s_draws, 10_000);
        assert_eq!(cfg.evidence.risk_family, RiskFamily::LogitNormal);
        assert!(cfg.prior().is_ok());
    }

    #[test]
    fn missing_seed_names_the_key() {
        let text = MINIMAL.replace(r#""seed": 1"#, r#""s_draws": 100"#);
        match PlanConfig::from_json(&text) {
            Err(CliError::Config { key, .. }) => assert_eq!(key, "run.seed"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_carry_their_path() {
        let text = MINIMAL.replace(r#""level": 0.9"#, r#""level": "high""#);
        match PlanConfig::from_json(&text) {
            Err(CliError::Config { key, .. }) => assert!(key.starts_with("targets.rules"), "{key}"),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace(r#""threshold": 0.2"#, r#""threshold": 0.2, "extra": 1"#);
        assert!(matches!(PlanConfig::from_json(&text), Err(CliError::Config { .. })));
    }

    #[test]
    fn one_location_marginal() {
        let text = MINIMAL.replace(
            r#"{"target": "slope""#,
            r#"{"target": "oe_ratio", "family": "point_mass", "values": [1.0]}, {"target": "slope""#,
        );
        let err = PlanConfig::from_json(&text).unwrap().validate().unwrap_err();
        assert!(matches!(err, CliError::Config { ref key, .. } if key == "evidence.marginals"), "{err:?}");
    }

    #[test]
    fn rules_need_a_threshold() {
        let text = MINIMAL.replace(r#", "threshold": 0.2"#, "");
        let err = PlanConfig::from_json(&text).unwrap().validate().unwrap_err();
        assert!(matches!(err, CliError::Config { ref key, .. } if key == "targets.threshold"));
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = PlanConfig::from_json(MINIMAL).unwrap();
        cfg.apply(Overrides { n: Some(300), seed: Some(9), s_draws: Some(50) });
        assert_eq!((cfg.run.n, cfg.seed(), cfg.run.s_draws), (Some(300), 9, 50));
    }
}
