//! Distributions of calibrated risk on (0, 1).
//!
//! All three families are integrated on a latent real line: a standard-normal
//! coordinate for the logit- and probit-normal families, and `logit(p)` for the
//! Beta family. The latent density is smooth with light tails there, so a
//! composite 10-point Gauss–Legendre rule with panels sized to the
//! distribution's scale resolves every integrand used in this crate, including
//! densities that pile up against 0 or 1.

use crate::error::{Error, Result};
use crate::numeric::{
    brent, expit, gauss_legendre, gl10_partial_weights, ln_expit, ln_gamma_correction, logit, norm_cdf, norm_pdf, norm_quantile, GL10,
};
use rand::Rng;
use rand_distr::{Beta as BetaSampler, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::cell::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskFamily {
    Beta,
    #[serde(alias = "logitnorm")]
    LogitNormal,
    #[serde(alias = "probitnorm")]
    ProbitNormal,
}

impl RiskFamily {
    pub const ALL: [RiskFamily; 3] = [RiskFamily::Beta, RiskFamily::LogitNormal, RiskFamily::ProbitNormal];

    pub fn name(self) -> &'static str {
        match self {
            RiskFamily::Beta => "beta",
            RiskFamily::LogitNormal => "logitnorm",
            RiskFamily::ProbitNormal => "probitnorm",
        }
    }
}

/// A distribution of calibrated risks.
///
/// `param1` is the Beta shape `a` or the latent-normal mean; `param2` is the
/// Beta shape `b` or the latent-normal standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskDistribution {
    family: RiskFamily,
    param1: f64,
    param2: f64,
}

/// Target prevalence and c-statistic of a risk distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskMoments {
    pub mean: f64,
    pub cstat: f64,
}

impl RiskMoments {
    pub fn new(mean: f64, cstat: f64) -> Result<Self> {
        if !(mean > 0.0 && mean < 1.0) {
            return Err(Error::domain(format!("mean risk {mean} must lie in (0, 1)")));
        }
        if !(cstat > 0.5 && cstat < 1.0) {
            return Err(Error::domain(format!("c-statistic {cstat} must lie in (0.5, 1)")));
        }
        Ok(Self { mean, cstat })
    }
}

impl RiskDistribution {
    pub fn new(family: RiskFamily, param1: f64, param2: f64) -> Result<Self> {
        if !(param2 > 0.0) || !param2.is_finite() || !param1.is_finite() {
            return Err(Error::domain(format!(
                "{} parameters ({param1}, {param2}) are invalid: the second must be positive",
                family.name()
            )));
        }
        if family == RiskFamily::Beta && !(param1 > 0.0) {
            return Err(Error::domain(format!("Beta shape a = {param1} must be positive")));
        }
        Ok(Self { family, param1, param2 })
    }

    pub fn beta(a: f64, b: f64) -> Result<Self> {
        Self::new(RiskFamily::Beta, a, b)
    }

    pub fn logit_normal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(RiskFamily::LogitNormal, mu, sigma)
    }

    pub fn probit_normal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(RiskFamily::ProbitNormal, mu, sigma)
    }

    pub fn family(&self) -> RiskFamily {
        self.family
    }

    pub fn params(&self) -> (f64, f64) {
        (self.param1, self.param2)
    }

    /// Expected risk, i.e. the outcome prevalence when risks are calibrated.
    pub fn mean(&self) -> Result<f64> {
        let m = match self.family {
            RiskFamily::Beta => self.param1 / (self.param1 + self.param2),
            RiskFamily::ProbitNormal => norm_cdf(self.param1 / (1.0 + self.param2 * self.param2).sqrt()),
            RiskFamily::LogitNormal => self.rule()?.expect(|p| p),
        };
        if !(m > 0.0 && m < 1.0) {
            return Err(Error::numeric(format!("mean of {self:?} evaluated to {m}")));
        }
        Ok(m)
    }

    /// `E[g(p)]` by quadrature.
    pub fn expect<G: Fn(f64) -> f64>(&self, g: G) -> Result<f64> {
        let v = self.rule()?.expect(g);
        if !v.is_finite() {
            return Err(Error::numeric(format!("expectation under {self:?} is not finite")));
        }
        Ok(v)
    }

    /// c-statistic of outcomes generated as `Y | p ~ Bernoulli(p)`.
    pub fn cstat(&self) -> Result<f64> {
        self.rule()?.cstat()
    }

    /// True sensitivity and specificity when classifying `p >= threshold` as positive.
    pub fn sens_spec_at(&self, threshold: f64) -> Result<(f64, f64)> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::domain(format!("threshold {threshold} must lie in (0, 1)")));
        }
        self.rule()?.sens_spec(threshold)
    }

    /// One draw of a calibrated risk.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p = match self.family {
            RiskFamily::LogitNormal => {
                let z: f64 = StandardNormal.sample(rng);
                expit(self.param1 + self.param2 * z)
            }
            RiskFamily::ProbitNormal => {
                let z: f64 = StandardNormal.sample(rng);
                norm_cdf(self.param1 + self.param2 * z)
            }
            RiskFamily::Beta => BetaSampler::new(self.param1, self.param2)
                .expect("validated shapes")
                .sample(rng),
        };
        p.clamp(1e-15, 1.0 - 1e-15)
    }

    /// `n` independent draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::domain("sample size must be at least 1"));
        }
        Ok((0..n).map(|_| self.draw(rng)).collect())
    }

    /// Finds the distribution of `family` with the requested mean and c-statistic.
    ///
    /// The spread parameter is solved in an outer loop (c is increasing in it at
    /// fixed mean); the location parameter is solved in an inner loop.
    pub fn identify(target: RiskMoments, family: RiskFamily) -> Result<Self> {
        let RiskMoments { mean, cstat } = RiskMoments::new(target.mean, target.cstat)?;
        let (hard_lo, hard_hi) = match family {
            RiskFamily::Beta => (1e-5_f64, 20.0_f64),
            _ => (1e-10, 60.0),
        };
        let failure: Cell<Option<Error>> = Cell::new(None);
        let at_spread = |s: f64| -> Result<Self> { Self::with_spread(family, mean, s) };
        let objective = |log_s: f64| -> f64 {
            match at_spread(log_s.exp()).and_then(|d| d.cstat()) {
                Ok(c) => c - cstat,
                Err(e) => {
                    failure.set(Some(e));
                    f64::NAN
                }
            }
        };

        // latent spread of an equal-variance binormal model with this c, as a starting bracket
        let logit_sd = 1.1 * std::f64::consts::SQRT_2 * norm_quantile(cstat);
        let guess = match family {
            RiskFamily::LogitNormal => logit_sd,
            RiskFamily::ProbitNormal => logit_sd / 1.7,
            RiskFamily::Beta => logit_sd * (mean * (1.0 - mean)).sqrt(),
        }
        .clamp(hard_lo * 10.0, hard_hi / 10.0);
        let mut lo = guess.ln() - 0.4;
        let mut hi = guess.ln() + 0.4;
        let mut f_lo = objective(lo);
        let mut f_hi = objective(hi);
        while f_lo > 0.0 && lo > hard_lo.ln() {
            hi = lo;
            f_hi = f_lo;
            lo = (lo - 1.5).max(hard_lo.ln());
            f_lo = objective(lo);
        }
        while f_hi < 0.0 && hi < hard_hi.ln() {
            lo = hi;
            f_lo = f_hi;
            hi = (hi + 0.7).min(hard_hi.ln());
            f_hi = objective(hi);
        }
        if let Some(e) = failure.take() {
            return Err(e);
        }
        if !(f_lo <= 0.0 && f_hi >= 0.0) {
            let c_lo = at_spread(hard_lo).and_then(|d| d.cstat()).unwrap_or(0.5);
            let c_hi = at_spread(hard_hi).and_then(|d| d.cstat()).unwrap_or(f64::NAN);
            return Err(Error::Identification { target_c: cstat, lo: c_lo, hi: c_hi });
        }
        let root = brent(objective, lo, hi, 1e-9, 200);
        if let Some(e) = failure.take() {
            return Err(e);
        }
        at_spread(root?.exp())
    }

    /// Distribution of `family` with the given mean and spread: the latent
    /// standard deviation for the normal families, `1/sqrt(a + b)` for Beta.
    fn with_spread(family: RiskFamily, mean: f64, spread: f64) -> Result<Self> {
        match family {
            RiskFamily::Beta => {
                let kappa = 1.0 / (spread * spread);
                Self::beta(mean * kappa, (1.0 - mean) * kappa)
            }
            RiskFamily::ProbitNormal => {
                Self::probit_normal(norm_quantile(mean) * (1.0 + spread * spread).sqrt(), spread)
            }
            RiskFamily::LogitNormal => {
                let mu = logit_normal_location(mean, spread)?;
                Self::logit_normal(mu, spread)
            }
        }
    }

    pub(crate) fn rule(&self) -> Result<LatentRule> {
        LatentRule::new(*self)
    }
}

/// Solves `E[expit(mu + sigma Z)] = mean` for `mu` by safeguarded Newton.
pub(crate) fn logit_normal_location(mean: f64, sigma: f64) -> Result<f64> {
    let grid = NormalGrid::new(sigma);
    let target = mean;
    let eval = |mu: f64| -> (f64, f64) {
        let mut m = 0.0;
        let mut dm = 0.0;
        for (&t, &w) in grid.t.iter().zip(&grid.w) {
            let p = expit(mu + sigma * t);
            m += w * p;
            dm += w * p * (1.0 - p);
        }
        (m - target, dm)
    };
    let scale = (1.0 + std::f64::consts::PI * sigma * sigma / 8.0).sqrt();
    let mut mu = logit(mean) * scale;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for _ in 0..200 {
        let (f, df) = eval(mu);
        if f.abs() < 1e-15 {
            return Ok(mu);
        }
        if f > 0.0 {
            hi = hi.min(mu);
        } else {
            lo = lo.max(mu);
        }
        let mut next = mu - f / df;
        if !next.is_finite() || next <= lo || next >= hi {
            next = if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi)
            } else if f > 0.0 {
                mu - 1.0 - mu.abs()
            } else {
                mu + 1.0 + mu.abs()
            };
        }
        if (next - mu).abs() <= 1e-14 * (1.0 + mu.abs()) {
            return Ok(next);
        }
        mu = next;
    }
    Err(Error::numeric(format!(
        "logit-normal location for mean {mean}, sigma {sigma} did not converge"
    )))
}

/// Composite Gauss–Legendre nodes on a standard-normal latent axis.
struct NormalGrid {
    edges: Vec<f64>,
    t: Vec<f64>,
    w: Vec<f64>,
}

const NORMAL_RANGE: f64 = 9.0;

impl NormalGrid {
    fn new(steepness: f64) -> Self {
        let h = (2.0 / steepness).min(1.0);
        let panels = ((2.0 * NORMAL_RANGE / h).ceil() as usize).clamp(12, 20_000);
        let edges: Vec<f64> = (0..=panels)
            .map(|i| -NORMAL_RANGE + 2.0 * NORMAL_RANGE * i as f64 / panels as f64)
            .collect();
        let mut t = Vec::with_capacity(panels * 10);
        let mut w = Vec::with_capacity(panels * 10);
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for &(x, wx) in &GL10 {
                let node = mid + half * x;
                t.push(node);
                w.push(wx * half * norm_pdf(node));
            }
        }
        Self { edges, t, w }
    }
}

#[derive(Debug, Clone, Copy)]
enum Latent {
    Logit { mu: f64, sigma: f64 },
    Probit { mu: f64, sigma: f64 },
    /// Density of `logit(p)` for `p ~ Beta(a, b)`, centred on the mean so the
    /// log-density has no large cancelling terms when `a + b` is huge.
    LogitBeta { a: f64, b: f64, m: f64, t0: f64, offset: f64 },
}

impl Latent {
    fn logit_beta(a: f64, b: f64) -> Self {
        let s = a + b;
        let offset = 0.5 * (a * b / s).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            - ln_gamma_correction(a)
            - ln_gamma_correction(b)
            + ln_gamma_correction(s);
        Latent::LogitBeta { a, b, m: a / s, t0: (a / b).ln(), offset }
    }
}

impl Latent {
    #[inline]
    fn p(&self, t: f64) -> f64 {
        match *self {
            Latent::Logit { mu, sigma } => expit(mu + sigma * t),
            Latent::Probit { mu, sigma } => norm_cdf(mu + sigma * t),
            Latent::LogitBeta { .. } => expit(t),
        }
    }

    #[inline]
    fn density(&self, t: f64) -> f64 {
        match *self {
            Latent::Logit { .. } | Latent::Probit { .. } => norm_pdf(t),
            Latent::LogitBeta { a, b, m, t0, offset } => {
                let u = t - t0;
                let (ln_ratio_p, ln_ratio_q) = if u.abs() < 1.0 {
                    (-((-u).exp_m1() * (1.0 - m)).ln_1p(), -(u.exp_m1() * m).ln_1p())
                } else {
                    (ln_expit(t) - m.ln(), ln_expit(-t) - (1.0 - m).ln())
                };
                (a * ln_ratio_p + b * ln_ratio_q + offset).exp()
            }
        }
    }

    fn latent_of(&self, p: f64) -> f64 {
        match *self {
            Latent::Logit { mu, sigma } => (logit(p) - mu) / sigma,
            Latent::Probit { mu, sigma } => (norm_quantile(p) - mu) / sigma,
            Latent::LogitBeta { .. } => logit(p),
        }
    }
}

/// Quadrature rule for one risk distribution on its latent axis.
pub(crate) struct LatentRule {
    latent: Latent,
    edges: Vec<f64>,
    /// Node weights already multiplied by the latent density.
    w: Vec<f64>,
    p: Vec<f64>,
}

impl LatentRule {
    fn new(d: RiskDistribution) -> Result<Self> {
        let (a, b) = (d.param1, d.param2);
        let (latent, edges) = match d.family {
            RiskFamily::LogitNormal => (Latent::Logit { mu: a, sigma: b }, NormalGrid::new(b).edges),
            RiskFamily::ProbitNormal => (Latent::Probit { mu: a, sigma: b }, NormalGrid::new(b).edges),
            RiskFamily::Beta => (Latent::logit_beta(a, b), beta_edges(a, b)?),
        };
        let mut w = Vec::with_capacity(edges.len() * 10);
        let mut p = Vec::with_capacity(edges.len() * 10);
        for pair in edges.windows(2) {
            let half = 0.5 * (pair[1] - pair[0]);
            let mid = 0.5 * (pair[1] + pair[0]);
            for &(x, wx) in &GL10 {
                let t = mid + half * x;
                w.push(wx * half * latent.density(t));
                p.push(latent.p(t));
            }
        }
        let mass: f64 = w.iter().sum();
        if (mass - 1.0).abs() > 1e-8 || !mass.is_finite() {
            return Err(Error::numeric(format!(
                "density of {d:?} integrates to {mass} on its quadrature grid"
            )));
        }
        Ok(Self { latent, edges, w, p })
    }

    /// Quadrature nodes as `(weight, p)` pairs; the weights sum to one.
    pub(crate) fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.w.iter().copied().zip(self.p.iter().copied())
    }

    pub(crate) fn expect<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        self.w.iter().zip(&self.p).map(|(&w, &p)| w * g(p)).sum()
    }

    /// `∫ g(p(t)) f(t) dt` over latent values below `upper`.
    fn expect_below<G: Fn(f64) -> f64>(&self, g: G, upper: f64) -> f64 {
        let first = self.edges[0];
        let last = *self.edges.last().unwrap();
        if upper <= first {
            return 0.0;
        }
        if upper >= last {
            return self.expect(g);
        }
        let k = self.edges.partition_point(|&e| e <= upper) - 1;
        let full: f64 = (0..k * 10).map(|i| self.w[i] * g(self.p[i])).sum();
        let lat = self.latent;
        full + gauss_legendre(self.edges[k], upper, |t| g(lat.p(t)) * lat.density(t))
    }

    fn sens_spec(&self, threshold: f64) -> Result<(f64, f64)> {
        let m = self.expect(|p| p);
        let cut = self.latent.latent_of(threshold);
        let tp_below = self.expect_below(|p| p, cut);
        let tn = self.expect_below(|p| 1.0 - p, cut);
        let se = ((m - tp_below) / m).clamp(0.0, 1.0);
        let sp = (tn / (1.0 - m)).clamp(0.0, 1.0);
        if !(se.is_finite() && sp.is_finite()) {
            return Err(Error::numeric("sensitivity/specificity not finite"));
        }
        Ok((se, sp))
    }

    /// `c = ∫ p f(p) G(p) dp / (m (1 - m))` with `G(t) = ∫_0^t (1 - u) f(u) du`.
    ///
    /// `G` at every node is the running total over completed panels plus a
    /// Gauss–Legendre integral from the panel start to the node.
    fn cstat(&self) -> Result<f64> {
        let partial = gl10_partial_weights();
        let mut g_start = 0.0;
        let mut num = 0.0;
        let mut events = 0.0;
        let mut non_events = 0.0;
        let mut integrand = [0.0; 10];
        for k in 0..self.edges.len() - 1 {
            let w = &self.w[k * 10..k * 10 + 10];
            let p = &self.p[k * 10..k * 10 + 10];
            // (1 - p) f(t) (b - a)/2 at each node
            for j in 0..10 {
                integrand[j] = (1.0 - p[j]) * w[j] / GL10[j].1;
            }
            let mut panel_neg = 0.0;
            for j in 0..10 {
                if w[j] == 0.0 {
                    continue;
                }
                let inner: f64 = partial[j].iter().zip(&integrand).map(|(s, g)| s * g).sum();
                let g = g_start + inner;
                num += w[j] * p[j] * g;
                events += w[j] * p[j];
                non_events += w[j] * (1.0 - p[j]);
                panel_neg += w[j] * (1.0 - p[j]);
            }
            g_start += panel_neg;
        }
        let c = num / (events * non_events);
        if !c.is_finite() {
            return Err(Error::numeric("c-statistic quadrature produced a non-finite value"));
        }
        Ok(c.clamp(0.0, 1.0))
    }
}

/// Panels on the logit axis for a Beta(a, b) density: uniform near the mode,
/// geometrically widening into the exponential tails.
fn beta_edges(a: f64, b: f64) -> Result<Vec<f64>> {
    let center = (a / b).ln();
    let sd = (1.0 / a + 1.0 / b).sqrt();
    let core = (8.0 * sd).min(40.0);
    let h = (0.4 * sd).min(1.0);
    let left_end = center - (10.0 * sd).max(45.0 / a);
    let right_end = center + (10.0 * sd).max(45.0 / b);

    let n_core = ((2.0 * core / h).ceil() as usize).max(8);
    let step = 2.0 * core / n_core as f64;
    let mut edges: Vec<f64> = (0..=n_core).map(|i| center - core + step * i as f64).collect();

    let grow = |mut x: f64, end: f64, dir: f64, decay: f64| -> Vec<f64> {
        let mut out = Vec::new();
        let mut width = step;
        let cap = (4.0 / decay).max(step);
        while dir * (end - x) > 0.0 {
            width = (width * 1.25).min(cap);
            x += dir * width;
            if dir * (x - end) > 0.0 {
                x = end;
            }
            out.push(x);
        }
        out
    };
    let left = grow(center - core, left_end, -1.0, a);
    let right = grow(center + core, right_end, 1.0, b);
    if left.len() + right.len() + edges.len() > 50_000 {
        return Err(Error::numeric(format!("Beta({a}, {b}) is too diffuse to integrate")));
    }
    let mut all: Vec<f64> = left.into_iter().rev().collect();
    all.append(&mut edges);
    all.extend(right);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{integrate, ln_beta, QuadTol};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn beta_pdf(a: f64, b: f64) -> impl Fn(f64) -> f64 {
        let ln_norm = ln_beta(a, b);
        move |p: f64| ((a - 1.0) * p.ln() + (b - 1.0) * (1.0 - p).ln() - ln_norm).exp()
    }

    #[test]
    fn means_in_closed_form_cases() {
        assert_abs_diff_eq!(RiskDistribution::beta(1.0, 1.0).unwrap().mean().unwrap(), 0.5);
        assert_abs_diff_eq!(RiskDistribution::probit_normal(0.0, 1.0).unwrap().mean().unwrap(), 0.5);
        let d = RiskDistribution::logit_normal(-1.3302, 1.0395).unwrap();
        assert_abs_diff_eq!(d.mean().unwrap(), 0.25, epsilon = 1e-3);
    }

    #[test]
    fn quadrature_mean_matches_closed_forms() {
        for &(a, b) in &[(2.0, 2.0), (0.3, 4.0), (119.64, 159.91), (0.05, 0.07)] {
            let d = RiskDistribution::beta(a, b).unwrap();
            assert_abs_diff_eq!(d.expect(|p| p).unwrap(), a / (a + b), epsilon = 1e-10);
        }
        let d = RiskDistribution::probit_normal(-0.7, 2.3).unwrap();
        assert_abs_diff_eq!(d.expect(|p| p).unwrap(), d.mean().unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(RiskDistribution::beta(0.0, 1.0).is_err());
        assert!(RiskDistribution::logit_normal(0.0, 0.0).is_err());
        assert!(RiskDistribution::probit_normal(0.0, -1.0).is_err());
        assert!(RiskMoments::new(0.3, 0.5).is_err());
        assert!(RiskMoments::new(1.0, 0.7).is_err());
    }

    #[test]
    fn cstat_golden_and_degenerate() {
        let d = RiskDistribution::logit_normal(-1.3302, 1.0395).unwrap();
        assert_abs_diff_eq!(d.cstat().unwrap(), 0.75, epsilon = 1e-3);
        for (fam, spread) in [
            (RiskFamily::LogitNormal, 1e-8),
            (RiskFamily::ProbitNormal, 1e-8),
            (RiskFamily::Beta, 1e-5),
        ] {
            let d = RiskDistribution::with_spread(fam, 0.3, spread).unwrap();
            assert_abs_diff_eq!(d.cstat().unwrap(), 0.5, epsilon = 1e-4);
        }
    }

    #[test]
    fn cstat_beta_matches_two_dimensional_oracle() {
        let (a, b) = (2.0, 2.0);
        let f = beta_pdf(a, b);
        let tol = QuadTol { abs: 1e-13, rel: 1e-12, max_intervals: 4000 };
        let m = a / (a + b);
        let num = integrate(
            |p2| {
                let inner = integrate(|p1| (1.0 - p1) * f(p1), 0.0, p2, tol).unwrap();
                p2 * f(p2) * inner
            },
            0.0,
            1.0,
            tol,
        )
        .unwrap();
        let oracle = num / (m * (1.0 - m));
        let c = RiskDistribution::beta(a, b).unwrap().cstat().unwrap();
        assert_abs_diff_eq!(c, oracle, epsilon = 1e-9);
    }

    #[test]
    fn identify_golden_values() {
        let d = RiskDistribution::identify(RiskMoments::new(0.25, 0.75).unwrap(), RiskFamily::LogitNormal).unwrap();
        let (mu, sigma) = d.params();
        assert_abs_diff_eq!(mu, -1.3302, epsilon = 5e-4);
        assert_abs_diff_eq!(sigma, 1.0395, epsilon = 5e-4);

        let target = RiskMoments::new(0.428, 0.761).unwrap();
        let d = RiskDistribution::identify(target, RiskFamily::LogitNormal).unwrap();
        assert_abs_diff_eq!(d.mean().unwrap(), 0.428, epsilon = 1e-6);
        assert_abs_diff_eq!(d.cstat().unwrap(), 0.761, epsilon = 1e-6);
    }

    #[test]
    fn identify_near_degenerate() {
        for fam in RiskFamily::ALL {
            let d = RiskDistribution::identify(RiskMoments::new(0.5, 0.5001).unwrap(), fam).unwrap();
            assert_abs_diff_eq!(d.mean().unwrap(), 0.5, epsilon = 1e-9);
            assert_abs_diff_eq!(d.cstat().unwrap(), 0.5001, epsilon = 1e-7);
            let spread = match fam {
                RiskFamily::Beta => 1.0 / (d.param1 + d.param2).sqrt(),
                _ => d.param2,
            };
            assert!(spread < 1e-2, "{fam:?} spread {spread}");
        }
    }

    #[test]
    fn identify_rejects_out_of_range_c() {
        assert!(matches!(
            RiskDistribution::identify(RiskMoments { mean: 0.3, cstat: 0.5 }, RiskFamily::Beta),
            Err(Error::Domain(_))
        ));
        assert!(RiskDistribution::identify(RiskMoments { mean: 0.3, cstat: 1.0 }, RiskFamily::LogitNormal).is_err());
    }

    #[test]
    fn sens_spec_limits() {
        let d = RiskDistribution::logit_normal(-1.3302, 1.0395).unwrap();
        let (se, sp) = d.sens_spec_at(1e-12).unwrap();
        assert_abs_diff_eq!(se, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sp, 0.0, epsilon = 1e-9);
        let (se, sp) = d.sens_spec_at(1.0 - 1e-12).unwrap();
        assert_abs_diff_eq!(se, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sp, 1.0, epsilon = 1e-9);
        assert!(d.sens_spec_at(0.0).is_err());
    }

    #[test]
    fn sens_spec_beta_matches_incomplete_integrals() {
        let (a, b) = (2.5, 6.0);
        let d = RiskDistribution::beta(a, b).unwrap();
        let f = beta_pdf(a, b);
        let m = a / (a + b);
        let t = 0.2;
        let tol = QuadTol::default();
        let se = integrate(|p| p * f(p), t, 1.0, tol).unwrap() / m;
        let sp = integrate(|p| (1.0 - p) * f(p), 0.0, t, tol).unwrap() / (1.0 - m);
        let (se_q, sp_q) = d.sens_spec_at(t).unwrap();
        assert_abs_diff_eq!(se_q, se, epsilon = 1e-9);
        assert_abs_diff_eq!(sp_q, sp, epsilon = 1e-9);
    }

    #[test]
    fn sampling_contract() {
        let d = RiskDistribution::beta(2.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(d.sample(0, &mut rng).is_err());
        let x = d.sample(1_000_000, &mut rng).unwrap();
        let m = x.iter().sum::<f64>() / x.len() as f64;
        assert_abs_diff_eq!(m, 0.5, epsilon = 0.002);
        let a = d.sample(50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = d.sample(50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}
