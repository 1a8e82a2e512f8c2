//! Logit-linear calibration `logit h(π) = α + β logit π` and the
//! intercept implied by an O/E ratio or a mean calibration.

use crate::error::{Error, Result};
use crate::numeric::{brent, expit, logit};
use crate::riskdist::RiskDistribution;
use serde::{Deserialize, Serialize};

/// Calibration function mapping predicted risk `π` to calibrated risk `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    intercept: f64,
    slope: f64,
}

impl CalibrationModel {
    pub fn new(intercept: f64, slope: f64) -> Result<Self> {
        if !intercept.is_finite() {
            return Err(Error::domain(format!("calibration intercept {intercept} is not finite")));
        }
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::domain(format!("calibration slope {slope} must be positive")));
        }
        Ok(Self { intercept, slope })
    }

    pub fn identity() -> Self {
        Self { intercept: 0.0, slope: 1.0 }
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    /// `h(π)`.
    #[inline]
    pub fn apply(&self, pi: f64) -> f64 {
        expit(self.intercept + self.slope * logit(pi))
    }

    /// `h⁻¹(p)`.
    #[inline]
    pub fn invert(&self, p: f64) -> f64 {
        expit(self.invert_logit(p))
    }

    /// `logit h⁻¹(p)`.
    #[inline]
    pub fn invert_logit(&self, p: f64) -> f64 {
        (logit(p) - self.intercept) / self.slope
    }

    /// Expected predicted risk `E[h⁻¹(p)]` when `p ~ d`.
    pub fn mean_predicted(&self, d: &RiskDistribution) -> Result<f64> {
        d.expect(|p| self.invert(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationKind {
    Intercept,
    OeRatio,
    MeanCalibration,
}

impl LocationKind {
    pub fn name(self) -> &'static str {
        match self {
            LocationKind::Intercept => "intercept",
            LocationKind::OeRatio => "oe_ratio",
            LocationKind::MeanCalibration => "mean_calibration",
        }
    }
}

/// One of the three equivalent ways to pin down calibration-in-the-large.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationLocationSpec {
    pub kind: LocationKind,
    pub value: f64,
}

impl CalibrationLocationSpec {
    pub fn new(kind: LocationKind, value: f64) -> Result<Self> {
        let ok = match kind {
            LocationKind::Intercept => value.is_finite(),
            LocationKind::OeRatio => value > 0.0 && value.is_finite(),
            LocationKind::MeanCalibration => value > -1.0 && value < 1.0,
        };
        if !ok {
            return Err(Error::domain(format!("{} value {value} is out of range", kind.name())));
        }
        Ok(Self { kind, value })
    }

    /// `E(π)` implied by this spec when the outcome prevalence is `prevalence`.
    /// `None` for the intercept kind.
    pub fn implied_mean_predicted(&self, prevalence: f64) -> Option<f64> {
        match self.kind {
            LocationKind::Intercept => None,
            LocationKind::OeRatio => Some(prevalence / self.value),
            LocationKind::MeanCalibration => Some(prevalence - self.value),
        }
    }
}

/// Finds the calibration model with the given slope whose location matches `spec`
/// when calibrated risks follow `d`.
pub fn resolve_intercept(spec: CalibrationLocationSpec, slope: f64, d: &RiskDistribution) -> Result<CalibrationModel> {
    CalibrationModel::new(0.0, slope)?;
    let Some(target) = spec.implied_mean_predicted(d.mean()?) else {
        return CalibrationModel::new(spec.value, slope);
    };
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::domain(format!(
            "{} = {} implies a mean predicted risk of {target}, outside (0, 1)",
            spec.kind.name(),
            spec.value
        )));
    }
    let rule = d.rule()?;
    let nodes: Vec<(f64, f64)> = rule.nodes().filter(|&(w, _)| w > 0.0).map(|(w, p)| (w, logit(p))).collect();
    let excess = |alpha: f64| -> f64 {
        nodes.iter().map(|&(w, lp)| w * expit((lp - alpha) / slope)).sum::<f64>() - target
    };

    let mut lo = logit(d.mean()?) - slope * logit(target) - 1.0;
    let mut hi = lo + 2.0;
    let mut steps = 0;
    while excess(lo) < 0.0 || excess(hi) > 0.0 {
        let width = hi - lo;
        if excess(lo) < 0.0 {
            lo -= width;
        }
        if excess(hi) > 0.0 {
            hi += width;
        }
        steps += 1;
        if steps > 60 {
            return Err(Error::numeric(format!(
                "could not bracket the calibration intercept for mean predicted risk {target}"
            )));
        }
    }
    let alpha = brent(excess, lo, hi, 1e-13, 200)?;
    CalibrationModel::new(alpha, slope)
}
