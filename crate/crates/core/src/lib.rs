//! Bayesian sample size planning for external validation studies of binary
//! risk prediction models.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod calibration;
pub mod error;
pub mod evidence;
pub mod numeric;
pub mod planner;
pub mod precision;
pub mod riskdist;
pub mod rng;
pub mod voi;

pub use calibration::{CalibrationLocationSpec, CalibrationModel, LocationKind};
pub use error::{Error, Result};
pub use evidence::{EvidencePrior, MarginalSpec, ThetaDraw};
pub use planner::{PlanResult, SampleSizeRule, SearchConfig};
pub use precision::{Metric, PrecisionDraws, PreposteriorMode, ValidationSample};
pub use riskdist::{RiskDistribution, RiskFamily, RiskMoments};
