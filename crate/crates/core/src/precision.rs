//! Confidence-interval widths for the c-statistic, O/E ratio and calibration
//! slope: closed-form standard errors, frequentist sample size, estimators
//! for a validation sample, and pre-posterior width draws.

use crate::calibration::CalibrationModel;
use crate::error::{Error, Result};
use crate::evidence::ThetaDraw;
use crate::numeric::{logit, quantile_sorted};
use crate::riskdist::{RiskDistribution, RiskFamily, RiskMoments};
use crate::rng::{self, tag, Stream};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Width of a Wald 95% interval in standard errors.
pub const WALD_WIDTH: f64 = 3.92;
const Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[serde(alias = "c", alias = "c_statistic")]
    Cstat,
    #[serde(alias = "oe_ratio")]
    Oe,
    Slope,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Cstat, Metric::Oe, Metric::Slope];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Cstat => "cstat",
            Metric::Oe => "oe",
            Metric::Slope => "slope",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

/// Scale on which the O/E interval width is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OeWidthScale {
    /// `3.92 SE(log O/E)`.
    #[default]
    Log,
    /// `O/E (exp(1.96 SE) - exp(-1.96 SE))`.
    Ratio,
}

/// Source of the slope standard error in sample-based draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeSe {
    /// Observed information of the recalibration fit.
    #[default]
    Model,
    /// Population formula evaluated at the sample estimates.
    Formula,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreposteriorMode {
    #[default]
    SampleBased,
    TwoStep,
}

/// Options shared by every width computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthOptions {
    pub slope_se: SlopeSe,
    pub oe_scale: OeWidthScale,
    /// Risk family used to re-identify a risk distribution from sample estimates.
    pub family: RiskFamily,
}

impl Default for WidthOptions {
    fn default() -> Self {
        Self { slope_se: SlopeSe::Model, oe_scale: OeWidthScale::Log, family: RiskFamily::LogitNormal }
    }
}

fn check_n(n: f64) -> Result<()> {
    if n >= 4.0 && n.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("sample size {n} must be at least 4")))
    }
}

fn check_unit(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} {x} must lie in (0, 1)")))
    }
}

#[inline]
fn se_cstat_raw(c: f64, phi: f64, n: f64) -> f64 {
    let k = n / 2.0 - 1.0;
    let bracket = 1.0 + k * (1.0 - c) / (2.0 - c) + k * c / (1.0 + c);
    (c * (1.0 - c) * bracket / (n * n * phi * (1.0 - phi))).sqrt()
}

#[inline]
fn se_log_oe_raw(phi: f64, n: f64) -> f64 {
    ((1.0 - phi) / (n * phi)).sqrt()
}

/// Standard error of the c-statistic.
pub fn se_cstat(c: f64, phi: f64, n: f64) -> Result<f64> {
    check_unit(c, "c-statistic")?;
    check_unit(phi, "prevalence")?;
    check_n(n)?;
    Ok(se_cstat_raw(c, phi, n))
}

/// Standard error of `log(O/E)`.
pub fn se_log_oe(phi: f64, n: f64) -> Result<f64> {
    check_unit(phi, "prevalence")?;
    check_n(n)?;
    Ok(se_log_oe_raw(phi, n))
}

/// Width of the O/E interval given the ratio and `SE(log O/E)`.
pub fn oe_width(oe: f64, se_log: f64, scale: OeWidthScale) -> f64 {
    match scale {
        OeWidthScale::Log => WALD_WIDTH * se_log,
        OeWidthScale::Ratio => oe * 2.0 * (Z * se_log).sinh(),
    }
}

/// Expected Fisher information terms of the recalibration model per observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeInformation {
    pub i_alpha: f64,
    pub i_beta: f64,
    pub i_alpha_beta: f64,
}

impl SlopeInformation {
    /// `I_α = E p(1-p)`, `I_β = E L² p(1-p)`, `I_αβ = E L p(1-p)` with `L = logit h⁻¹(p)`.
    pub fn new(h: &CalibrationModel, d: &RiskDistribution) -> Result<Self> {
        let rule = d.rule()?;
        let (mut i_alpha, mut i_beta, mut i_alpha_beta) = (0.0, 0.0, 0.0);
        for (w, p) in rule.nodes() {
            if w == 0.0 {
                continue;
            }
            let v = w * p * (1.0 - p);
            let l = h.invert_logit(p);
            i_alpha += v;
            i_alpha_beta += v * l;
            i_beta += v * l * l;
        }
        let info = Self { i_alpha, i_beta, i_alpha_beta };
        if !(info.determinant() > 1e-14 * i_alpha * i_beta) {
            return Err(Error::numeric(format!(
                "slope information is singular (I_a = {i_alpha:.3e}, I_b = {i_beta:.3e}, I_ab = {i_alpha_beta:.3e})"
            )));
        }
        Ok(info)
    }

    pub fn determinant(&self) -> f64 {
        self.i_alpha * self.i_beta - self.i_alpha_beta * self.i_alpha_beta
    }

    /// `SE(β) = sqrt(I_α / (N (I_α I_β - I_αβ²)))`.
    pub fn se(&self, n: f64) -> f64 {
        (self.i_alpha / (n * self.determinant())).sqrt()
    }
}

/// Standard error of the calibration slope at sample size `n`.
pub fn se_slope(theta: &ThetaDraw, n: f64) -> Result<f64> {
    check_n(n)?;
    Ok(SlopeInformation::new(&theta.h, &theta.risk_dist)?.se(n))
}

/// Frequentist 95% interval width of `metric` at sample size `n`.
pub fn frequentist_width(metric: Metric, theta: &ThetaDraw, n: f64, scale: OeWidthScale) -> Result<f64> {
    Ok(match metric {
        Metric::Cstat => WALD_WIDTH * se_cstat(theta.c, theta.phi, n)?,
        Metric::Oe => oe_width(theta.oe_ratio(), se_log_oe(theta.phi, n)?, scale),
        Metric::Slope => WALD_WIDTH * se_slope(theta, n)?,
    })
}

/// Largest sample size searched by [`riley_min_n`].
pub const RILEY_N_MAX: u64 = 10_000_000;

/// Smallest `n` whose frequentist width is at most `target_width`.
pub fn riley_min_n(metric: Metric, theta: &ThetaDraw, target_width: f64, scale: OeWidthScale) -> Result<u64> {
    if !(target_width > 0.0) {
        return Err(Error::domain(format!("target width {target_width} must be positive")));
    }
    let info = match metric {
        Metric::Slope => Some(SlopeInformation::new(&theta.h, &theta.risk_dist)?),
        _ => None,
    };
    let width = |n: u64| -> f64 {
        let n = n as f64;
        match metric {
            Metric::Cstat => WALD_WIDTH * se_cstat_raw(theta.c, theta.phi, n),
            Metric::Oe => oe_width(theta.oe_ratio(), se_log_oe_raw(theta.phi, n), scale),
            Metric::Slope => WALD_WIDTH * info.unwrap().se(n),
        }
    };
    smallest_n(4, RILEY_N_MAX, |n| width(n) <= target_width).ok_or_else(|| Error::Infeasible {
        rule: format!("{} width {target_width}", metric.name()),
        n_max: RILEY_N_MAX,
        detail: format!("width at n_max is {:.3e}", width(RILEY_N_MAX)),
    })
}

/// Smallest `n` in `[lo, hi]` with `ok(n)`, for `ok` monotone in `n`.
pub(crate) fn smallest_n<F: FnMut(u64) -> bool>(lo: u64, hi: u64, mut ok: F) -> Option<u64> {
    if ok(lo) {
        return Some(lo);
    }
    let mut bad = lo;
    let mut good = lo;
    loop {
        good = (good.saturating_mul(2)).min(hi);
        if ok(good) {
            break;
        }
        if good == hi {
            return None;
        }
        bad = good;
    }
    while good - bad > 1 {
        let mid = bad + (good - bad) / 2;
        if ok(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Some(good)
}

/// A simulated validation dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSample {
    pub pi: Vec<f64>,
    pub y: Vec<bool>,
}

impl ValidationSample {
    pub fn new(pi: Vec<f64>, y: Vec<bool>) -> Result<Self> {
        if pi.len() != y.len() {
            return Err(Error::domain("predicted risks and outcomes differ in length"));
        }
        if pi.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::domain("predicted risks must lie in (0, 1)"));
        }
        Ok(Self { pi, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn events(&self) -> usize {
        self.y.iter().filter(|&&y| y).count()
    }
}

fn draw_sample(theta: &ThetaDraw, n: usize, rng: &mut Stream) -> ValidationSample {
    let mut pi = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let p = theta.risk_dist.draw(rng);
        y.push(rng.random::<f64>() < p);
        pi.push(theta.h.invert(p).clamp(1e-15, 1.0 - 1e-15));
    }
    ValidationSample { pi, y }
}

/// Simulates `n` observations: `p ~ P(p)`, `Y ~ Bernoulli(p)`, `π = h⁻¹(p)`.
pub fn simulate_sample(theta: &ThetaDraw, n: usize, rng: &mut Stream) -> Result<ValidationSample> {
    if n < 20 {
        return Err(Error::domain(format!("validation sample size {n} must be at least 20")));
    }
    for _ in 0..2 {
        let s = draw_sample(theta, n, rng);
        let events = s.events();
        if events > 0 && events < n {
            return Ok(s);
        }
    }
    Err(Error::numeric(format!("simulated samples of size {n} had a single outcome class twice")))
}

/// Sample estimates and interval widths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimates {
    pub n: usize,
    pub prevalence_hat: f64,
    pub mean_pi: f64,
    pub c_hat: f64,
    pub oe_hat: f64,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    /// 95% interval widths indexed by [`Metric`].
    pub widths: [f64; 3],
}

impl Estimates {
    pub fn width(&self, metric: Metric) -> f64 {
        self.widths[metric.index()]
    }
}

/// Concordance probability with ties scored one half.
pub fn concordance(pi: &[f64], y: &[bool]) -> Result<f64> {
    let n1 = y.iter().filter(|&&v| v).count();
    let n0 = y.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::domain("concordance needs at least one event and one non-event"));
    }
    let ranks = crate::numeric::midranks(pi);
    let rank_sum: f64 = ranks.iter().zip(y).filter(|(_, &v)| v).map(|(r, _)| r).sum();
    let (n1, n0) = (n1 as f64, n0 as f64);
    Ok((rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0))
}

/// Maximum-likelihood fit of `logit P(Y = 1) = a + b logit π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recalibration {
    pub alpha: f64,
    pub beta: f64,
    /// Standard error of `beta` from the observed information.
    pub se_beta: f64,
}

pub fn recalibrate(s: &ValidationSample) -> Result<Recalibration> {
    let x: Vec<f64> = s.pi.iter().map(|&p| logit(p)).collect();
    let ybar = s.events() as f64 / s.len() as f64;
    if ybar == 0.0 || ybar == 1.0 {
        return Err(Error::numeric("recalibration needs both outcome classes"));
    }
    let loglik = |a: f64, b: f64| -> f64 {
        x.iter()
            .zip(&s.y)
            .map(|(&xi, &yi)| {
                let eta = a + b * xi;
                crate::numeric::ln_expit(if yi { eta } else { -eta })
            })
            .sum()
    };
    let info = |a: f64, b: f64| -> ([f64; 2], [f64; 3]) {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&xi, &yi) in x.iter().zip(&s.y) {
            let p = crate::numeric::expit(a + b * xi);
            let r = f64::from(u8::from(yi)) - p;
            let w = p * (1.0 - p);
            g0 += r;
            g1 += r * xi;
            h00 += w;
            h01 += w * xi;
            h11 += w * xi * xi;
        }
        ([g0, g1], [h00, h01, h11])
    };
    let (mut a, mut b) = (logit(ybar), 0.0);
    let mut ll = loglik(a, b);
    for _ in 0..100 {
        let ([g0, g1], [h00, h01, h11]) = info(a, b);
        let det = h00 * h11 - h01 * h01;
        if !(det > 0.0) {
            break;
        }
        let da = (h11 * g0 - h01 * g1) / det;
        let db = (h00 * g1 - h01 * g0) / det;
        let mut step = 1.0;
        let (mut na, mut nb, mut nll);
        loop {
            na = a + step * da;
            nb = b + step * db;
            nll = loglik(na, nb);
            if nll >= ll - 1e-12 * ll.abs() || step < 1e-8 {
                break;
            }
            step *= 0.5;
        }
        let moved = (na - a).abs().max((nb - b).abs());
        a = na;
        b = nb;
        ll = nll;
        if b.abs() > 1e3 {
            break;
        }
        if moved < 1e-10 {
            let (_, [h00, h01, h11]) = info(a, b);
            let det = h00 * h11 - h01 * h01;
            if !(det > 0.0) {
                break;
            }
            return Ok(Recalibration { alpha: a, beta: b, se_beta: (h00 / det).sqrt() });
        }
    }
    Err(Error::numeric("recalibration fit did not converge (possible separation)"))
}

/// Point estimates and 95% interval widths from a validation sample.
pub fn estimate_metrics(s: &ValidationSample, opts: &WidthOptions) -> Result<Estimates> {
    let n = s.len();
    let nf = n as f64;
    let prevalence_hat = s.events() as f64 / nf;
    let mean_pi = s.pi.iter().sum::<f64>() / nf;
    let c_hat = concordance(&s.pi, &s.y)?;
    let oe_hat = prevalence_hat / mean_pi;
    let fit = recalibrate(s)?;
    let c_width = WALD_WIDTH * se_cstat(c_hat.clamp(1e-9, 1.0 - 1e-9), prevalence_hat, nf)?;
    let oe_w = oe_width(oe_hat, se_log_oe(prevalence_hat, nf)?, opts.oe_scale);
    let slope_w = match opts.slope_se {
        SlopeSe::Model => WALD_WIDTH * fit.se_beta,
        SlopeSe::Formula => {
            let d = RiskDistribution::identify(RiskMoments::new(prevalence_hat, c_hat)?, opts.family)?;
            let h = CalibrationModel::new(fit.alpha, fit.beta)?;
            WALD_WIDTH * SlopeInformation::new(&h, &d)?.se(nf)
        }
    };
    Ok(Estimates {
        n,
        prevalence_hat,
        mean_pi,
        c_hat,
        oe_hat,
        alpha_hat: fit.alpha,
        beta_hat: fit.beta,
        widths: [c_width, oe_w, slope_w],
    })
}

/// Widths of one pre-posterior draw at `theta`.
pub fn width_draw(
    theta: &ThetaDraw,
    n: u64,
    mode: PreposteriorMode,
    opts: &WidthOptions,
    rng: &mut Stream,
) -> Result<[f64; 3]> {
    match mode {
        PreposteriorMode::SampleBased => {
            let s = simulate_sample(theta, n as usize, rng)?;
            Ok(estimate_metrics(&s, opts)?.widths)
        }
        PreposteriorMode::TwoStep => two_step_widths(theta, n as f64, opts, rng),
    }
}

fn two_step_widths(theta: &ThetaDraw, n: f64, opts: &WidthOptions, rng: &mut Stream) -> Result<[f64; 3]> {
    check_n(n)?;
    let mut normal = || rng.sample::<f64, _>(StandardNormal);
    let (phi, c) = (theta.phi, theta.c);

    let c_hat = (c + se_cstat_raw(c, phi, n) * normal()).clamp(1e-6, 1.0 - 1e-6);
    let c_width = WALD_WIDTH * se_cstat_raw(c_hat, phi, n);

    let phi_hat = (phi + (phi * (1.0 - phi) / n).sqrt() * normal()).clamp(0.5 / n, 1.0 - 0.5 / n);
    let oe_hat = phi_hat / theta.mean_predicted;
    let oe_w = oe_width(oe_hat, se_log_oe_raw(phi_hat, n), opts.oe_scale);

    let info = SlopeInformation::new(&theta.h, &theta.risk_dist)?;
    let beta_hat = theta.slope() + info.se(n) * normal();
    if !(beta_hat > 0.0) {
        return Err(Error::numeric(format!("two-step slope estimate {beta_hat} is not positive")));
    }
    let h_hat = CalibrationModel::new(theta.h.intercept(), beta_hat)?;
    let slope_w = WALD_WIDTH * SlopeInformation::new(&h_hat, &theta.risk_dist)?.se(n);
    Ok([c_width, oe_w, slope_w])
}

/// Interval widths for one metric across prior draws.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionDraws {
    pub metric: Metric,
    pub widths: Vec<f64>,
}

impl PrecisionDraws {
    pub fn eciw(&self) -> f64 {
        eciw(&self.widths)
    }

    pub fn qciw(&self, q: f64) -> f64 {
        qciw(&self.widths, q)
    }
}

/// Output of [`preposterior_widths`].
#[derive(Debug, Clone, PartialEq)]
pub struct PreposteriorWidths {
    pub n: u64,
    pub draws: [PrecisionDraws; 3],
    pub flagged: usize,
    pub total: usize,
}

impl PreposteriorWidths {
    pub fn metric(&self, m: Metric) -> &PrecisionDraws {
        &self.draws[m.index()]
    }
}

/// Share of draws that may be flagged before a width computation fails.
pub const MAX_FLAGGED: f64 = 0.02;

/// Pre-posterior interval widths at sample size `n`, one per prior draw.
///
/// Draw `i` uses its own stream, so the result does not depend on scheduling
/// and draws are common across sample sizes.
pub fn preposterior_widths(
    thetas: &[ThetaDraw],
    n: u64,
    mode: PreposteriorMode,
    opts: &WidthOptions,
    seed: u64,
) -> Result<PreposteriorWidths> {
    if thetas.is_empty() {
        return Err(Error::domain("no prior draws supplied"));
    }
    let stream_tag = match mode {
        PreposteriorMode::SampleBased => tag::SAMPLE,
        PreposteriorMode::TwoStep => tag::TWO_STEP,
    };
    let per_draw: Vec<Option<[f64; 3]>> = thetas
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            let mut rng = rng::stream(seed, stream_tag, i as u64);
            width_draw(theta, n, mode, opts, &mut rng).ok()
        })
        .collect();
    let kept: Vec<[f64; 3]> = per_draw.iter().flatten().copied().collect();
    let flagged = thetas.len() - kept.len();
    if flagged as f64 > MAX_FLAGGED * thetas.len() as f64 {
        return Err(Error::TooManyFlagged {
            what: format!("width draws at n = {n}"),
            flagged,
            total: thetas.len(),
            limit: 100.0 * MAX_FLAGGED,
        });
    }
    let draws = Metric::ALL.map(|m| PrecisionDraws { metric: m, widths: kept.iter().map(|w| w[m.index()]).collect() });
    Ok(PreposteriorWidths { n, draws, flagged, total: thetas.len() })
}

/// Expected interval width.
pub fn eciw(widths: &[f64]) -> f64 {
    widths.iter().sum::<f64>() / widths.len() as f64
}

/// `q`-quantile of interval widths: the smallest `w` with `F̂(w) >= q`.
pub fn qciw(widths: &[f64], q: f64) -> f64 {
    let mut sorted = widths.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

/// Pointwise quantiles of the error of a smoothed calibration curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBands {
    pub n: u64,
    pub grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub median: Vec<f64>,
    pub upper: Vec<f64>,
    /// Draws in which the smoother could not be evaluated, per grid point.
    pub dropped: Vec<usize>,
}

/// Local-linear smoother with tricube weights over the `ceil(span n)` nearest
/// neighbours; `x` must be sorted.
pub fn local_linear(x: &[f64], y: &[f64], x0: f64, span: f64) -> Option<f64> {
    let n = x.len();
    let k = ((span * n as f64).ceil() as usize).clamp(2, n);
    let mut lo = x.partition_point(|&v| v < x0);
    let mut hi = lo;
    while hi - lo < k {
        let take_left = if lo == 0 {
            false
        } else if hi == n {
            true
        } else {
            x0 - x[lo - 1] <= x[hi] - x0
        };
        if take_left {
            lo -= 1;
        } else {
            hi += 1;
        }
    }
    let radius = (x0 - x[lo]).max(x[hi - 1] - x0) * (1.0 + 1e-12);
    if !(radius > 0.0) {
        return None;
    }
    let (mut sw, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in lo..hi {
        let d = (x[i] - x0) / radius;
        let t = 1.0 - d.abs().powi(3);
        let w = t * t * t;
        let dx = x[i] - x0;
        sw += w;
        sx += w * dx;
        sxx += w * dx * dx;
        sy += w * y[i];
        sxy += w * dx * y[i];
    }
    let det = sw * sxx - sx * sx;
    if !(det > 1e-12 * sw * sxx) || !(sw > 0.0) {
        return None;
    }
    Some((sxx * sy - sx * sxy) / det)
}

/// Bands of `smooth(π) - h(π)` at `grid` (default: the 1%, ..., 99% quantiles of
/// the pooled predicted risks).
pub fn calibration_error_bands(
    thetas: &[ThetaDraw],
    n: u64,
    grid: Option<&[f64]>,
    span: f64,
    seed: u64,
) -> Result<CalibrationBands> {
    if thetas.is_empty() {
        return Err(Error::domain("no prior draws supplied"));
    }
    if !(span > 0.0 && span <= 1.0) {
        return Err(Error::domain(format!("smoother span {span} must lie in (0, 1]")));
    }
    let samples: Vec<Option<(Vec<f64>, Vec<f64>)>> = thetas
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            let mut rng = rng::stream(seed, tag::BANDS, i as u64);
            let s = simulate_sample(theta, n as usize, &mut rng).ok()?;
            let mut pairs: Vec<(f64, f64)> = s.pi.iter().zip(&s.y).map(|(&p, &y)| (p, f64::from(u8::from(y)))).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            Some(pairs.into_iter().unzip())
        })
        .collect();
    let grid: Vec<f64> = match grid {
        Some(g) => g.to_vec(),
        None => {
            let mut pooled: Vec<f64> = samples.iter().flatten().flat_map(|(x, _)| x.iter().copied()).collect();
            if pooled.is_empty() {
                return Err(Error::numeric("no usable samples for calibration bands"));
            }
            pooled.sort_by(f64::total_cmp);
            (1..100).map(|k| quantile_sorted(&pooled, k as f64 / 100.0)).collect()
        }
    };
    if grid.iter().any(|&g| !(g > 0.0 && g < 1.0)) {
        return Err(Error::domain("band grid points must lie in (0, 1)"));
    }
    let errors: Vec<Vec<Option<f64>>> = samples
        .par_iter()
        .zip(thetas)
        .map(|(s, theta)| match s {
            None => vec![None; grid.len()],
            Some((x, y)) => grid
                .iter()
                .map(|&g| local_linear(x, y, g, span).map(|fit| fit - theta.h.apply(g)))
                .collect(),
        })
        .collect();
    let mut lower = Vec::with_capacity(grid.len());
    let mut median = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    let mut dropped = Vec::with_capacity(grid.len());
    for j in 0..grid.len() {
        let mut col: Vec<f64> = errors.iter().filter_map(|e| e[j]).collect();
        dropped.push(thetas.len() - col.len());
        if col.is_empty() {
            lower.push(f64::NAN);
            median.push(f64::NAN);
            upper.push(f64::NAN);
            continue;
        }
        col.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&col, 0.025));
        median.push(quantile_sorted(&col, 0.5));
        upper.push(quantile_sorted(&col, 0.975));
    }
    Ok(CalibrationBands { n, grid, lower, median, upper, dropped })
}
