//! The prior on model performance: four marginal distributions, a rank
//! correlation between them, and joint draws of `θ = {φ, c, h}`.
//!
//! Column order everywhere is prevalence, c-statistic, calibration slope,
//! calibration location.

use crate::calibration::{resolve_intercept, CalibrationLocationSpec, CalibrationModel, LocationKind};
use crate::error::{Error, Result};
use crate::numeric::{expit, gauss_legendre, mean_sd, midranks, norm_pdf, spearman};
use crate::precision::{estimate_metrics, simulate_sample};
use crate::riskdist::{RiskDistribution, RiskFamily, RiskMoments};
use crate::rng::{self, tag};
use nalgebra::{Matrix4, SymmetricEigen};
use rand::Rng;
use rand_distr::{Beta as BetaSampler, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta as BetaDist, ContinuousCDF};

/// Which performance parameter a marginal describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Prevalence,
    CStatistic,
    Slope,
    CalibrationLocation(LocationKind),
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Prevalence => "prevalence",
            Target::CStatistic => "cstat",
            Target::Slope => "slope",
            Target::CalibrationLocation(kind) => kind.name(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistFamily {
    Beta,
    Normal,
    #[serde(alias = "lognormal")]
    LogNormal,
    #[serde(alias = "logitnormal", alias = "logitnorm")]
    LogitNormal,
    PointMass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// Family parameters as written: Beta `(a, b)`, `(mean, sd)` for Normal, and
    /// `(μ, σ)` on the log or logit scale for LogNormal and LogitNormal.
    #[default]
    Native,
    /// Mean and standard deviation on the natural scale.
    MeanSd,
    /// Mean and the upper limit of a central 95% interval.
    MeanUpperCi95,
}

/// A user-facing marginal prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSpec {
    pub target: Target,
    pub family: DistFamily,
    #[serde(default)]
    pub parameterization: Parameterization,
    pub values: Vec<f64>,
}

/// A marginal prior reduced to its native parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Marginal {
    Beta { a: f64, b: f64 },
    Normal { mean: f64, sd: f64 },
    LogNormal { mu: f64, sigma: f64 },
    LogitNormal { mu: f64, sigma: f64 },
    PointMass { value: f64 },
}

impl Marginal {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Beta { a, b } => BetaSampler::new(a, b).expect("validated shapes").sample(rng),
            Marginal::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
            Marginal::LogNormal { mu, sigma } => (mu + sigma * rng.sample::<f64, _>(StandardNormal)).exp(),
            Marginal::LogitNormal { mu, sigma } => expit(mu + sigma * rng.sample::<f64, _>(StandardNormal)),
            Marginal::PointMass { value } => value,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean_var().0
    }

    /// Mean and variance on the natural scale.
    pub fn mean_var(&self) -> (f64, f64) {
        match *self {
            Marginal::Beta { a, b } => {
                let s = a + b;
                (a / s, a * b / (s * s * (s + 1.0)))
            }
            Marginal::Normal { mean, sd } => (mean, sd * sd),
            Marginal::LogNormal { mu, sigma } => {
                let s2 = sigma * sigma;
                let m = (mu + 0.5 * s2).exp();
                (m, m * m * s2.exp_m1())
            }
            Marginal::LogitNormal { mu, sigma } => logit_normal_moments(mu, sigma),
            Marginal::PointMass { value } => (value, 0.0),
        }
    }

    /// Prior effective sample size `m(1 - m)/var - 1` of a marginal on (0, 1).
    pub fn effective_sample_size(&self) -> Option<f64> {
        let (m, v) = self.mean_var();
        if v > 0.0 && m > 0.0 && m < 1.0 {
            Some(m * (1.0 - m) / v - 1.0)
        } else {
            None
        }
    }

    fn within_unit_interval(&self) -> bool {
        match *self {
            Marginal::Beta { .. } | Marginal::LogitNormal { .. } => true,
            Marginal::PointMass { value } => value > 0.0 && value < 1.0,
            _ => false,
        }
    }
}

fn logit_normal_moments(mu: f64, sigma: f64) -> (f64, f64) {
    let (mut m1, mut m2) = (0.0, 0.0);
    for k in 0..48 {
        let a = -12.0 + 0.5 * k as f64;
        m1 += gauss_legendre(a, a + 0.5, |z| expit(mu + sigma * z) * norm_pdf(z));
        m2 += gauss_legendre(a, a + 0.5, |z| expit(mu + sigma * z).powi(2) * norm_pdf(z));
    }
    (m1, (m2 - m1 * m1).max(0.0))
}

const Z975: f64 = 1.959_963_984_540_054;

/// Resolves a marginal spec to native parameters.
pub fn marginal_from_moments(spec: &MarginalSpec) -> Result<Marginal> {
    let name = spec.target.name();
    let bad = |msg: String| Error::domain(format!("{name} marginal: {msg}"));
    let expected = if spec.family == DistFamily::PointMass { 1 } else { 2 };
    if spec.values.len() != expected {
        return Err(bad(format!("expected {expected} values, got {}", spec.values.len())));
    }
    if spec.values.iter().any(|v| !v.is_finite()) {
        return Err(bad("values must be finite".into()));
    }
    if spec.family == DistFamily::PointMass {
        return Ok(Marginal::PointMass { value: spec.values[0] });
    }
    let (x, y) = (spec.values[0], spec.values[1]);
    let marginal = match (spec.family, spec.parameterization) {
        (_, Parameterization::MeanUpperCi95) if y <= x => {
            return Err(bad(format!("upper bound {y} must exceed the mean {x}")));
        }
        (_, Parameterization::MeanSd) if y <= 0.0 => return Err(bad(format!("sd {y} must be positive"))),
        (DistFamily::Normal, Parameterization::Native | Parameterization::MeanSd) => {
            Marginal::Normal { mean: x, sd: y }
        }
        (DistFamily::Normal, Parameterization::MeanUpperCi95) => Marginal::Normal { mean: x, sd: (y - x) / Z975 },
        (DistFamily::Beta, Parameterization::Native) => Marginal::Beta { a: x, b: y },
        (DistFamily::Beta, Parameterization::MeanSd) => {
            if !(x > 0.0 && x < 1.0) || y * y >= x * (1.0 - x) {
                return Err(bad(format!("no Beta distribution has mean {x} and sd {y}")));
            }
            let kappa = x * (1.0 - x) / (y * y) - 1.0;
            Marginal::Beta { a: x * kappa, b: (1.0 - x) * kappa }
        }
        (DistFamily::Beta, Parameterization::MeanUpperCi95) => beta_from_upper(x, y).map_err(bad)?,
        (DistFamily::LogNormal, Parameterization::Native) => Marginal::LogNormal { mu: x, sigma: y },
        (DistFamily::LogNormal, Parameterization::MeanSd) => {
            if x <= 0.0 {
                return Err(bad(format!("log-normal mean {x} must be positive")));
            }
            let s2 = (y * y / (x * x)).ln_1p();
            Marginal::LogNormal { mu: x.ln() - 0.5 * s2, sigma: s2.sqrt() }
        }
        (DistFamily::LogNormal, Parameterization::MeanUpperCi95) => {
            if x <= 0.0 {
                return Err(bad(format!("log-normal mean {x} must be positive")));
            }
            let disc = Z975 * Z975 - 2.0 * (y.ln() - x.ln());
            if disc < 0.0 {
                return Err(bad(format!("no log-normal distribution has mean {x} and upper 95% limit {y}")));
            }
            let sigma = Z975 - disc.sqrt();
            Marginal::LogNormal { mu: x.ln() - 0.5 * sigma * sigma, sigma }
        }
        (DistFamily::LogitNormal, Parameterization::Native) => Marginal::LogitNormal { mu: x, sigma: y },
        (DistFamily::LogitNormal, Parameterization::MeanSd) => logit_normal_from_mean_sd(x, y).map_err(bad)?,
        (DistFamily::LogitNormal, Parameterization::MeanUpperCi95) => logit_normal_from_upper(x, y).map_err(bad)?,
        (DistFamily::PointMass, _) => unreachable!(),
    };
    let ok = match marginal {
        Marginal::Beta { a, b } => a > 0.0 && b > 0.0,
        Marginal::Normal { sd, .. } => sd > 0.0,
        Marginal::LogNormal { sigma, .. } | Marginal::LogitNormal { sigma, .. } => sigma > 0.0,
        Marginal::PointMass { .. } => true,
    };
    if !ok {
        return Err(bad(format!("resolved parameters {marginal:?} are invalid")));
    }
    Ok(marginal)
}

fn unit_mean(m: f64) -> std::result::Result<(), String> {
    if m > 0.0 && m < 1.0 {
        Ok(())
    } else {
        Err(format!("mean {m} must lie in (0, 1)"))
    }
}

fn solve_log_spread<F: FnMut(f64) -> f64>(f: F, what: &str) -> std::result::Result<f64, String> {
    let mut f = f;
    let (lo, hi) = crate::numeric::expand_bracket(&mut f, -4.0, 1.0, (-40.0, 6.0), 200)
        .ok_or_else(|| format!("{what} cannot be matched"))?;
    crate::numeric::brent(f, lo, hi, 1e-12, 300).map_err(|e| e.to_string())
}

fn beta_from_upper(m: f64, upper: f64) -> std::result::Result<Marginal, String> {
    unit_mean(m)?;
    if upper >= 1.0 {
        return Err(format!("upper bound {upper} must be below 1"));
    }
    // the 97.5% quantile shrinks towards the mean as the concentration grows
    let kappa = solve_log_spread(
        |log_k| {
            let k = (-log_k).exp();
            BetaDist::new(m * k, (1.0 - m) * k).map(|d| d.inverse_cdf(0.975) - upper).unwrap_or(f64::NAN)
        },
        "upper 95% limit",
    )?;
    let k = (-kappa).exp();
    Ok(Marginal::Beta { a: m * k, b: (1.0 - m) * k })
}

fn logit_normal_from_mean_sd(m: f64, sd: f64) -> std::result::Result<Marginal, String> {
    unit_mean(m)?;
    if sd * sd >= m * (1.0 - m) {
        return Err(format!("no logit-normal distribution has mean {m} and sd {sd}"));
    }
    let sigma = solve_log_spread(
        |log_s| {
            let s = log_s.exp();
            match crate::riskdist::logit_normal_location(m, s) {
                Ok(mu) => logit_normal_moments(mu, s).1.sqrt() - sd,
                Err(_) => f64::NAN,
            }
        },
        "standard deviation",
    )?
    .exp();
    let mu = crate::riskdist::logit_normal_location(m, sigma).map_err(|e| e.to_string())?;
    Ok(Marginal::LogitNormal { mu, sigma })
}

fn logit_normal_from_upper(m: f64, upper: f64) -> std::result::Result<Marginal, String> {
    unit_mean(m)?;
    if upper >= 1.0 {
        return Err(format!("upper bound {upper} must be below 1"));
    }
    let sigma = solve_log_spread(
        |log_s| {
            let s = log_s.exp();
            match crate::riskdist::logit_normal_location(m, s) {
                Ok(mu) => expit(mu + Z975 * s) - upper,
                Err(_) => f64::NAN,
            }
        },
        "upper 95% limit",
    )?
    .exp();
    let mu = crate::riskdist::logit_normal_location(m, sigma).map_err(|e| e.to_string())?;
    Ok(Marginal::LogitNormal { mu, sigma })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationSource {
    #[default]
    Independent,
    UserSupplied,
    ParametricBootstrap,
}

/// Joint prior on `(φ, c, β, location)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidencePrior {
    marginals: [Marginal; 4],
    location: LocationKind,
    rank_correlation: [[f64; 4]; 4],
    source: CorrelationSource,
}

const IDENTITY4: [[f64; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

impl EvidencePrior {
    /// Independent prior from four specs, one per target.
    pub fn new(specs: &[MarginalSpec]) -> Result<Self> {
        let find = |want: fn(Target) -> bool, what: &str| -> Result<&MarginalSpec> {
            let mut hits = specs.iter().filter(|s| want(s.target));
            let first = hits
                .next()
                .ok_or_else(|| Error::domain(format!("no marginal given for {what}")))?;
            if hits.next().is_some() {
                return Err(Error::domain(format!("more than one marginal given for {what}")));
            }
            Ok(first)
        };
        let prev = find(|t| t == Target::Prevalence, "prevalence")?;
        let cstat = find(|t| t == Target::CStatistic, "the c-statistic")?;
        let slope = find(|t| t == Target::Slope, "the calibration slope")?;
        let loc = find(
            |t| matches!(t, Target::CalibrationLocation(_)),
            "calibration location (intercept, O/E ratio or mean calibration)",
        )?;
        if specs.len() != 4 {
            return Err(Error::domain(format!("expected 4 marginals, got {}", specs.len())));
        }
        let Target::CalibrationLocation(location) = loc.target else { unreachable!() };
        let marginals = [
            marginal_from_moments(prev)?,
            marginal_from_moments(cstat)?,
            marginal_from_moments(slope)?,
            marginal_from_moments(loc)?,
        ];
        for (i, what) in [(0, "prevalence"), (1, "c-statistic")] {
            if !marginals[i].within_unit_interval() {
                return Err(Error::domain(format!(
                    "{what} marginal must be Beta, logit-normal or a point mass inside (0, 1)"
                )));
            }
        }
        Ok(Self { marginals, location, rank_correlation: IDENTITY4, source: CorrelationSource::Independent })
    }

    /// Replaces the rank correlation with a user-supplied matrix.
    pub fn with_rank_correlation(mut self, r: [[f64; 4]; 4]) -> Result<Self> {
        validate_correlation(&r)?;
        self.rank_correlation = r;
        self.source = CorrelationSource::UserSupplied;
        Ok(self)
    }

    /// Replaces the rank correlation with one recovered by parametric bootstrap
    /// around the prior means.
    pub fn with_bootstrap_correlation(
        mut self,
        family: RiskFamily,
        n_pilot: Option<u64>,
        replicates: usize,
        seed: u64,
    ) -> Result<(Self, BootstrapCorrelation)> {
        let point = self.point_theta(family)?;
        let n_pilot = n_pilot.unwrap_or_else(|| self.default_pilot_size());
        let boot = bootstrap_correlation(&point, self.location, n_pilot, replicates, seed)?;
        self.rank_correlation = boot.matrix;
        self.source = CorrelationSource::ParametricBootstrap;
        Ok((self, boot))
    }

    pub fn marginals(&self) -> &[Marginal; 4] {
        &self.marginals
    }

    pub fn location_kind(&self) -> LocationKind {
        self.location
    }

    pub fn rank_correlation(&self) -> &[[f64; 4]; 4] {
        &self.rank_correlation
    }

    pub fn correlation_source(&self) -> CorrelationSource {
        self.source
    }

    pub fn is_degenerate(&self) -> bool {
        self.marginals.iter().all(|m| matches!(m, Marginal::PointMass { .. }))
    }

    /// Harmonic mean of the effective sample sizes of the prevalence and
    /// c-statistic marginals, at least 50; 500 when both are point masses.
    pub fn default_pilot_size(&self) -> u64 {
        let ess: Vec<f64> = self.marginals[..2].iter().filter_map(|m| m.effective_sample_size()).collect();
        if ess.is_empty() {
            return 500;
        }
        let hm = ess.len() as f64 / ess.iter().map(|e| 1.0 / e.max(1.0)).sum::<f64>();
        (hm.round() as u64).max(50)
    }

    /// θ at the marginal means.
    pub fn point_theta(&self, family: RiskFamily) -> Result<ThetaDraw> {
        let v = [0, 1, 2, 3].map(|i| self.marginals[i].mean());
        ThetaDraw::resolve(v, self.location, family)
    }
}

fn validate_correlation(r: &[[f64; 4]; 4]) -> Result<()> {
    for i in 0..4 {
        if r[i][i] != 1.0 {
            return Err(Error::domain("rank correlation matrix must have a unit diagonal"));
        }
        for j in 0..4 {
            if !(r[i][j].abs() <= 1.0) || r[i][j] != r[j][i] {
                return Err(Error::domain("rank correlation matrix must be symmetric with entries in [-1, 1]"));
            }
        }
    }
    let min_eig = SymmetricEigen::new(to_matrix(r)).eigenvalues.min();
    if min_eig < -1e-10 {
        return Err(Error::domain(format!(
            "rank correlation matrix is not positive semi-definite (smallest eigenvalue {min_eig:.3e})"
        )));
    }
    Ok(())
}

fn to_matrix(r: &[[f64; 4]; 4]) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| r[i][j])
}

/// Nearest correlation-like matrix: eigenvalues clipped at `1e-8`, then
/// rescaled to a unit diagonal.
pub fn repair_psd(r: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let eig = SymmetricEigen::new(to_matrix(r));
    let clipped = eig.eigenvalues.map(|l| l.max(1e-8));
    let m = eig.eigenvectors * Matrix4::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let d = m.diagonal().map(|x| 1.0 / x.sqrt());
    let mut out = IDENTITY4;
    for i in 0..4 {
        for j in 0..i {
            let v = (0.5 * (m[(i, j)] + m[(j, i)]) * (d[i] * d[j])).clamp(-1.0, 1.0);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// One joint realization of the performance parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaDraw {
    pub phi: f64,
    pub c: f64,
    pub h: CalibrationModel,
    pub risk_dist: RiskDistribution,
    /// Expected predicted risk `E(π)`.
    pub mean_predicted: f64,
}

impl ThetaDraw {
    /// Resolves `[φ, c, slope, location]` into a risk distribution and calibration model.
    pub fn resolve(v: [f64; 4], location: LocationKind, family: RiskFamily) -> Result<Self> {
        let [phi, c, slope, loc] = v;
        if !(slope > 0.0) {
            return Err(Error::domain(format!("calibration slope {slope} must be positive")));
        }
        let risk_dist = RiskDistribution::identify(RiskMoments::new(phi, c)?, family)?;
        let spec = CalibrationLocationSpec::new(location, loc)?;
        let h = resolve_intercept(spec, slope, &risk_dist)?;
        let mean_predicted = match spec.implied_mean_predicted(phi) {
            Some(m) => m,
            None => h.mean_predicted(&risk_dist)?,
        };
        if !(mean_predicted > 0.0 && mean_predicted < 1.0) {
            return Err(Error::domain(format!("mean predicted risk {mean_predicted} outside (0, 1)")));
        }
        Ok(Self { phi, c, h, risk_dist, mean_predicted })
    }

    pub fn oe_ratio(&self) -> f64 {
        self.phi / self.mean_predicted
    }

    pub fn slope(&self) -> f64 {
        self.h.slope()
    }
}

/// Output of [`draw_theta`].
#[derive(Debug, Clone)]
pub struct ThetaSample {
    pub draws: Vec<ThetaDraw>,
    pub attempted: usize,
    pub rejected: usize,
}

impl ThetaSample {
    pub fn rejection_rate(&self) -> f64 {
        self.rejected as f64 / self.attempted.max(1) as f64
    }

    /// Set when more than 1% of raw draws violated the regularity conditions.
    pub fn warning(&self) -> Option<String> {
        (self.rejection_rate() > 0.01).then(|| {
            format!(
                "{} of {} prior draws ({:.1}%) violated the regularity conditions and were redrawn",
                self.rejected,
                self.attempted,
                100.0 * self.rejection_rate()
            )
        })
    }
}

fn cheap_checks(v: &[f64; 4], location: LocationKind) -> bool {
    let [phi, c, slope, loc] = *v;
    let loc_ok = CalibrationLocationSpec::new(location, loc)
        .map(|s| s.implied_mean_predicted(phi).is_none_or(|m| m > 0.0 && m < 1.0))
        .unwrap_or(false);
    phi > 0.0 && phi < 1.0 && c > 0.5 && c < 1.0 && slope > 0.0 && loc_ok
}

/// Draws `s` joint parameter sets.
///
/// Each round draws the outstanding number of rows, induces the target rank
/// correlation with Iman–Conover, and redraws rows that violate the regularity
/// conditions or cannot be resolved.
pub fn draw_theta(prior: &EvidencePrior, s: usize, family: RiskFamily, seed: u64) -> Result<ThetaSample> {
    if s == 0 {
        return Err(Error::domain("number of prior draws must be at least 1"));
    }
    let mut draws = Vec::with_capacity(s);
    let (mut attempted, mut rejected) = (0usize, 0usize);
    let mut round = 0u64;
    while draws.len() < s {
        let need = s - draws.len();
        let rows = joint_marginal_draws(prior, need, rng::derive(seed, round));
        let resolved: Vec<Option<ThetaDraw>> = rows
            .par_iter()
            .map(|v| {
                if !cheap_checks(v, prior.location) {
                    return None;
                }
                ThetaDraw::resolve(*v, prior.location, family).ok()
            })
            .collect();
        attempted += need;
        for r in resolved {
            match r {
                Some(t) => draws.push(t),
                None => rejected += 1,
            }
        }
        if rejected * 2 > attempted {
            return Err(Error::PriorInfeasible { attempted, rejected });
        }
        round += 1;
    }
    Ok(ThetaSample { draws, attempted, rejected })
}

/// `n` rows of marginal draws with the prior's rank correlation induced.
pub fn joint_marginal_draws(prior: &EvidencePrior, n: usize, seed: u64) -> Vec<[f64; 4]> {
    let mut cols: Vec<Vec<f64>> = (0..4)
        .map(|j| {
            let mut rng = rng::stream(seed, tag::THETA, j as u64);
            (0..n).map(|_| prior.marginals[j].draw(&mut rng)).collect()
        })
        .collect();
    if prior.rank_correlation != IDENTITY4 && n > 1 {
        iman_conover(&mut cols, &prior.rank_correlation, seed);
    }
    (0..n).map(|i| [cols[0][i], cols[1][i], cols[2][i], cols[3][i]]).collect()
}

/// Reorders each column to follow the ranks of correlated normal scores.
fn iman_conover(cols: &mut [Vec<f64>], rank_corr: &[[f64; 4]; 4], seed: u64) {
    let n = cols[0].len();
    let mut pearson = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            pearson[i][j] = if i == j { 1.0 } else { 2.0 * (std::f64::consts::PI * rank_corr[i][j] / 6.0).sin() };
        }
    }
    let pearson = repair_psd(&pearson);
    let chol = to_matrix(&pearson).cholesky().map(|c| c.l()).unwrap_or_else(Matrix4::identity);
    let mut rng = rng::stream(seed, tag::THETA, 4);
    let mut scores = vec![[0.0; 4]; n];
    for row in scores.iter_mut() {
        let e = nalgebra::Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let z = chol * e;
        *row = [z[0], z[1], z[2], z[3]];
    }
    for (j, col) in cols.iter_mut().enumerate() {
        let mut sorted = col.clone();
        sorted.sort_by(f64::total_cmp);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[a][j].total_cmp(&scores[b][j]));
        for (rank, &row) in order.iter().enumerate() {
            col[row] = sorted[rank];
        }
    }
}

/// Result of [`bootstrap_correlation`].
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapCorrelation {
    pub matrix: [[f64; 4]; 4],
    pub n_pilot: u64,
    pub replicates: usize,
    pub dropped: usize,
}

/// Spearman correlation of `(φ̂, ĉ, β̂, location)` across datasets simulated at `point`.
pub fn bootstrap_correlation(
    point: &ThetaDraw,
    location: LocationKind,
    n_pilot: u64,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapCorrelation> {
    if replicates < 100 {
        return Err(Error::domain(format!("bootstrap needs at least 100 replicates, got {replicates}")));
    }
    if n_pilot < 50 {
        return Err(Error::domain(format!("pilot size must be at least 50, got {n_pilot}")));
    }
    let est: Vec<Option<[f64; 4]>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, tag::BOOTSTRAP, b as u64);
            let sample = simulate_sample(point, n_pilot as usize, &mut rng).ok()?;
            let e = estimate_metrics(&sample, &Default::default()).ok()?;
            let loc = match location {
                LocationKind::Intercept => e.alpha_hat,
                LocationKind::OeRatio => e.oe_hat,
                LocationKind::MeanCalibration => e.prevalence_hat - e.mean_pi,
            };
            Some([e.prevalence_hat, e.c_hat, e.beta_hat, loc])
        })
        .collect();
    let kept: Vec<[f64; 4]> = est.iter().flatten().copied().collect();
    let dropped = replicates - kept.len();
    if dropped as f64 > 0.05 * replicates as f64 {
        return Err(Error::TooManyFlagged {
            what: "bootstrap replicates".into(),
            flagged: dropped,
            total: replicates,
            limit: 5.0,
        });
    }
    let cols: Vec<Vec<f64>> = (0..4).map(|j| kept.iter().map(|r| r[j]).collect()).collect();
    let mut m = IDENTITY4;
    for i in 0..4 {
        for j in 0..i {
            let rho = if mean_sd(&cols[i]).1 > 0.0 && mean_sd(&cols[j]).1 > 0.0 {
                spearman(&cols[i], &cols[j])
            } else {
                0.0
            };
            m[i][j] = rho;
            m[j][i] = rho;
        }
    }
    Ok(BootstrapCorrelation { matrix: repair_psd(&m), n_pilot, replicates, dropped })
}

/// Spearman correlation matrix of the four columns of `draws`.
pub fn empirical_rank_correlation(draws: &[[f64; 4]]) -> [[f64; 4]; 4] {
    let ranks: Vec<Vec<f64>> = (0..4).map(|j| midranks(&draws.iter().map(|r| r[j]).collect::<Vec<_>>())).collect();
    let mut m = IDENTITY4;
    for i in 0..4 {
        for j in 0..i {
            let rho = crate::numeric::pearson(&ranks[i], &ranks[j]);
            m[i][j] = rho;
            m[j][i] = rho;
        }
    }
    m
}
