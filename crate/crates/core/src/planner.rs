//! Minimum sample size search.
//!
//! Width rules are solved by Robbins–Monro iteration on `log N`, started from a
//! pilot estimate and followed by a confirmation run on fresh samples. Assurance
//! and EVSI rules are monotone in `N` under common random numbers and are
//! solved by doubling and bisection.

use crate::error::{Error, Result};
use crate::evidence::ThetaDraw;
use crate::numeric::{mean_sd, norm_pdf, norm_quantile, quantile_sorted};
use crate::precision::{
    self, preposterior_widths, riley_min_n, smallest_n, width_draw, Metric, PreposteriorMode, PreposteriorWidths,
    WidthOptions,
};
use crate::rng::{self, tag};
use crate::voi::{Baseline, VoIResult, VoiModel};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Search hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub n_min: u64,
    pub n_max: u64,
    pub rm_step_scale: f64,
    pub rm_iterations: usize,
    pub confirm_draws: usize,
    pub confirm_alpha: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_min: 20,
            n_max: 100_000,
            rm_step_scale: 1.0,
            rm_iterations: 4000,
            confirm_draws: 5000,
            confirm_alpha: 0.05,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_min < 20 {
            return Err(Error::domain(format!("n_min = {} must be at least 20", self.n_min)));
        }
        if self.n_max > precision::RILEY_N_MAX || self.n_max <= self.n_min {
            return Err(Error::domain(format!(
                "n_max = {} must exceed n_min and be at most {}",
                self.n_max,
                precision::RILEY_N_MAX
            )));
        }
        if !(self.rm_step_scale > 0.0 && self.rm_step_scale.is_finite()) {
            return Err(Error::domain("rm_step_scale must be positive"));
        }
        if self.rm_iterations < 500 {
            return Err(Error::domain(format!("rm_iterations = {} must be at least 500", self.rm_iterations)));
        }
        if self.confirm_draws < 100 {
            return Err(Error::domain(format!("confirm_draws = {} must be at least 100", self.confirm_draws)));
        }
        if !(self.confirm_alpha > 0.0 && self.confirm_alpha < 0.5) {
            return Err(Error::domain("confirm_alpha must lie in (0, 0.5)"));
        }
        Ok(())
    }
}

/// A criterion a validation sample of size `N` must meet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleSizeRule {
    /// Expected interval width at most `tau`.
    Eciw { metric: Metric, tau: f64 },
    /// `q`-quantile of the interval width at most `tau`.
    Qciw { metric: Metric, q: f64, tau: f64 },
    /// Optimality assurance of the net-benefit decision at least `level`.
    NbAssurance { level: f64 },
    /// EVSI at least `level` times EVPI.
    EvsiTarget { level: f64 },
}

impl SampleSizeRule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SampleSizeRule::Eciw { tau, .. } => tau > 0.0 && tau.is_finite(),
            SampleSizeRule::Qciw { q, tau, .. } => q > 0.0 && q < 1.0 && tau > 0.0 && tau.is_finite(),
            SampleSizeRule::NbAssurance { level } => level > 0.5 && level < 1.0,
            SampleSizeRule::EvsiTarget { level } => level > 0.0 && level < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid rule {self:?}")))
        }
    }

    /// Short identifier used in tables and file names, e.g. `qciw90_slope`.
    pub fn name(&self) -> String {
        match *self {
            SampleSizeRule::Eciw { metric, .. } => format!("eciw_{}", metric.name()),
            SampleSizeRule::Qciw { metric, q, .. } => format!("qciw{}_{}", format_q(q), metric.name()),
            SampleSizeRule::NbAssurance { .. } => "nb_assurance".into(),
            SampleSizeRule::EvsiTarget { .. } => "revsi".into(),
        }
    }

    pub fn needs_threshold(&self) -> bool {
        matches!(self, SampleSizeRule::NbAssurance { .. } | SampleSizeRule::EvsiTarget { .. })
    }

    fn target(&self) -> f64 {
        match *self {
            SampleSizeRule::Eciw { tau, .. } | SampleSizeRule::Qciw { tau, .. } => tau,
            SampleSizeRule::NbAssurance { level } | SampleSizeRule::EvsiTarget { level } => level,
        }
    }
}

fn format_q(q: f64) -> String {
    let s = format!("{}", (q * 100.0 * 1e6).round() / 1e6);
    s.replace('.', "p")
}

fn salt(name: &str) -> u64 {
    // FNV-1a; keeps each rule's streams stable when other rules are added or removed.
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Stage of the search a trace row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pilot,
    RobbinsMonro,
    Bracket,
    Confirm,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Pilot => "pilot",
            Stage::RobbinsMonro => "robbins_monro",
            Stage::Bracket => "bracket",
            Stage::Confirm => "confirm",
        }
    }
}

/// One evaluation during a search. Robbins–Monro rows hold a single width
/// draw (`mc_se` = 0); other rows hold a Monte Carlo estimate of the criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub stage: Stage,
    pub step: usize,
    pub n: u64,
    pub value: f64,
    pub mc_se: f64,
    /// Polyak average of `N` so far (Robbins–Monro rows only).
    pub n_avg: Option<f64>,
}

/// Solved sample size for one rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentResult {
    pub rule: SampleSizeRule,
    pub n: u64,
    /// Criterion estimate at `n` from the confirmation run.
    pub estimate: f64,
    pub mc_se: f64,
    /// Sample size before confirmation.
    pub n_search: u64,
    pub trace: Vec<TracePoint>,
    pub warnings: Vec<String>,
}

/// Full diagnostic set at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub n: u64,
    pub widths: PreposteriorWidths,
    pub voi: Option<VoIResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub components: Vec<ComponentResult>,
    pub final_n: u64,
    pub diagnostics: Diagnostics,
}

/// Everything a search needs besides the rule.
#[derive(Debug, Clone)]
pub struct Planner {
    thetas: Vec<ThetaDraw>,
    point: ThetaDraw,
    mode: PreposteriorMode,
    opts: WidthOptions,
    threshold: Option<f64>,
    baseline: Baseline,
    cfg: SearchConfig,
    seed: u64,
    voi: Option<VoiModel>,
}

impl Planner {
    /// `thetas` is the prior sample reused by every evaluation; `point` is the
    /// prior point estimate, used to start width searches.
    pub fn new(
        thetas: Vec<ThetaDraw>,
        point: ThetaDraw,
        mode: PreposteriorMode,
        opts: WidthOptions,
        cfg: SearchConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if thetas.is_empty() {
            return Err(Error::domain("no prior draws supplied"));
        }
        Ok(Self { thetas, point, mode, opts, threshold: None, baseline: Baseline::BestCurrent, cfg, seed, voi: None })
    }

    /// Enables the net-benefit rules at risk threshold `z`.
    pub fn with_threshold(mut self, z: f64, baseline: Baseline) -> Result<Self> {
        self.voi = Some(VoiModel::new(&self.thetas, z)?);
        self.threshold = Some(z);
        self.baseline = baseline;
        Ok(self)
    }

    pub fn config(&self) -> &SearchConfig {
        &self.cfg
    }

    pub fn thetas(&self) -> &[ThetaDraw] {
        &self.thetas
    }

    pub fn voi_model(&self) -> Option<&VoiModel> {
        self.voi.as_ref()
    }

    fn confirm_pool(&self) -> &[ThetaDraw] {
        &self.thetas[..self.cfg.confirm_draws.min(self.thetas.len())]
    }

    pub fn solve(&self, rule: &SampleSizeRule) -> Result<ComponentResult> {
        rule.validate()?;
        match *rule {
            SampleSizeRule::Eciw { metric, tau } => self.solve_width(rule, metric, None, tau),
            SampleSizeRule::Qciw { metric, q, tau } => self.solve_width(rule, metric, Some(q), tau),
            SampleSizeRule::NbAssurance { .. } | SampleSizeRule::EvsiTarget { .. } => self.solve_voi(rule),
        }
    }

    /// Solves every rule and evaluates the diagnostic set at the largest `N`.
    pub fn plan(&self, rules: &[SampleSizeRule]) -> Result<PlanResult> {
        if rules.is_empty() {
            return Err(Error::domain("at least one rule is required"));
        }
        let components = rules.par_iter().map(|r| self.solve(r)).collect::<Result<Vec<_>>>()?;
        let final_n = components.iter().map(|c| c.n).max().expect("non-empty");
        let diagnostics = self.diagnostics(final_n)?;
        Ok(PlanResult { components, final_n, diagnostics })
    }

    /// Interval widths over the whole prior sample and, when a threshold is set,
    /// net-benefit value of information at `n`.
    pub fn diagnostics(&self, n: u64) -> Result<Diagnostics> {
        let widths = preposterior_widths(&self.thetas, n, self.mode, &self.opts, self.seed)?;
        let voi = match &self.voi {
            Some(m) => Some(m.run(n, self.baseline, self.seed)?),
            None => None,
        };
        Ok(Diagnostics { n, widths, voi })
    }

    fn clamp_n(&self, n: f64) -> u64 {
        (n.ceil().max(self.cfg.n_min as f64).min(self.cfg.n_max as f64)) as u64
    }

    /// Criterion statistic and its standard error at `n`, evaluated on the
    /// confirmation pool; `slack` > 0 means the rule is violated.
    fn width_criterion(
        &self,
        metric: Metric,
        q: Option<f64>,
        tau: f64,
        n: u64,
        draws: &[ThetaDraw],
        seed: u64,
    ) -> Result<WidthEval> {
        let pw = preposterior_widths(draws, n, self.mode, &self.opts, seed)?;
        let w = &pw.metric(metric).widths;
        let s = w.len() as f64;
        Ok(match q {
            None => {
                let (m, sd) = mean_sd(w);
                let se = sd / s.sqrt();
                WidthEval { stat: m, se, slack: (m - tau) / se.max(1e-300), log_sd: log_sd(w) }
            }
            Some(q) => {
                let mut sorted = w.clone();
                sorted.sort_by(f64::total_cmp);
                let stat = quantile_sorted(&sorted, q);
                let below = w.iter().filter(|&&x| x <= tau).count() as f64 / s;
                let se_p = (q * (1.0 - q) / s).sqrt();
                // Order-statistic interval for the quantile, half-width of ±1 binomial SE.
                let se = 0.5
                    * (quantile_sorted(&sorted, (q + se_p).min(1.0)) - quantile_sorted(&sorted, (q - se_p).max(0.0)));
                WidthEval { stat, se, slack: (q - below) / se_p, log_sd: log_sd(w) }
            }
        })
    }

    fn solve_width(&self, rule: &SampleSizeRule, metric: Metric, q: Option<f64>, tau: f64) -> Result<ComponentResult> {
        let cfg = &self.cfg;
        let name = rule.name();
        let seed = rng::derive(self.seed, salt(&name));
        let pool = self.confirm_pool();
        let mut trace = Vec::new();
        let mut warnings = Vec::new();

        // Pilot: widths scale like N^(-1/2), so N ≈ n·(stat/τ)² from any evaluation.
        let mut n = riley_min_n(metric, &self.point, tau, self.opts.oe_scale)
            .map(|n| self.clamp_n(n as f64))
            .unwrap_or(cfg.n_max.min(1000));
        let mut log_spread = 0.1;
        for step in 0..3 {
            let e = self.width_criterion(metric, q, tau, n, pool, rng::derive(seed, tag::PILOT + step as u64))?;
            trace.push(TracePoint { stage: Stage::Pilot, step, n, value: e.stat, mc_se: e.se, n_avg: None });
            log_spread = e.log_sd.max(1e-3);
            let projected = n as f64 * (e.stat / tau).powi(2);
            if projected > cfg.n_max as f64 {
                return self.width_infeasible(rule, metric, q, tau, seed, projected);
            }
            let next = self.clamp_n(projected);
            if next == n {
                break;
            }
            n = next;
        }

        // Robbins–Monro on x = log N. The residual is scaled so that its slope in x
        // is about -1 at the root; a_t = scale / (t + t0).
        let gain = match q {
            None => 2.0,
            Some(q) => 2.0 * log_spread / norm_pdf(norm_quantile(q)),
        };
        let (x_lo, x_hi) = ((cfg.n_min as f64).ln(), (cfg.n_max as f64).ln());
        let t0 = (cfg.rm_iterations as f64 / 20.0).max(10.0);
        let mut x = (n as f64).ln();
        let burn = cfg.rm_iterations / 2;
        let (mut x_sum, mut x_count) = (0.0, 0usize);
        let mut failed = 0usize;
        for t in 0..cfg.rm_iterations {
            let mut r = rng::stream(seed, tag::ROBBINS_MONRO, t as u64);
            let theta = &self.thetas[r.random_range(0..self.thetas.len())];
            let n_t = x.exp().round() as u64;
            let w = match width_draw(theta, n_t, self.mode, &self.opts, &mut r) {
                Ok(w) => w[metric.index()],
                Err(_) => {
                    failed += 1;
                    continue;
                }
            };
            let residual = match q {
                None => (w - tau) / tau,
                Some(q) => (if w > tau { 1.0 } else { 0.0 }) - (1.0 - q),
            };
            let a = cfg.rm_step_scale * gain / (t as f64 + 1.0 + t0);
            x = (x + a * residual).clamp(x_lo, x_hi);
            if t >= burn {
                x_sum += x;
                x_count += 1;
            }
            let n_avg = (x_count > 0).then(|| (x_sum / x_count as f64).exp());
            trace.push(TracePoint { stage: Stage::RobbinsMonro, step: t, n: n_t, value: w, mc_se: 0.0, n_avg });
        }
        if failed as f64 > precision::MAX_FLAGGED * cfg.rm_iterations as f64 {
            warnings.push(format!("{failed} of {} Robbins–Monro draws failed", cfg.rm_iterations));
        }
        if let Some(w) = oscillation_warning(&trace) {
            warnings.push(w);
        }
        let n_search = if x_count > 0 { self.clamp_n((x_sum / x_count as f64).exp()) } else { n };
        if n_search >= cfg.n_max {
            return self.width_infeasible(rule, metric, q, tau, seed, f64::INFINITY);
        }

        let z = norm_quantile(1.0 - cfg.confirm_alpha);
        let (n, est) = self.confirm(&name, n_search, &mut trace, |n, step| {
            let e = self.width_criterion(metric, q, tau, n, pool, rng::derive(seed, tag::CONFIRM + step as u64))?;
            Ok((e.stat, e.se, e.slack > z))
        })?;
        Ok(ComponentResult { rule: *rule, n, estimate: est.0, mc_se: est.1, n_search, trace, warnings })
    }

    fn width_infeasible(
        &self,
        rule: &SampleSizeRule,
        metric: Metric,
        q: Option<f64>,
        tau: f64,
        seed: u64,
        projected: f64,
    ) -> Result<ComponentResult> {
        let draws = &self.thetas[..self.thetas.len().min(1000)];
        let at_max = self.width_criterion(metric, q, tau, self.cfg.n_max, draws, rng::derive(seed, tag::CONFIRM))?;
        Err(Error::Infeasible {
            rule: rule.name(),
            n_max: self.cfg.n_max,
            detail: format!(
                "criterion is {:.6} at n_max against target {tau}; projected N ≈ {projected:.0}",
                at_max.stat
            ),
        })
    }

    /// Steps `n` up by 5% until the rule is not violated on fresh samples.
    fn confirm<F>(&self, name: &str, mut n: u64, trace: &mut Vec<TracePoint>, mut eval: F) -> Result<(u64, (f64, f64))>
    where
        F: FnMut(u64, usize) -> Result<(f64, f64, bool)>,
    {
        for step in 0..100 {
            let (stat, se, violated) = eval(n, step)?;
            trace.push(TracePoint { stage: Stage::Confirm, step, n, value: stat, mc_se: se, n_avg: None });
            if !violated {
                return Ok((n, (stat, se)));
            }
            if n >= self.cfg.n_max {
                break;
            }
            n = ((n as f64 * 1.05).ceil() as u64).min(self.cfg.n_max);
        }
        Err(Error::Infeasible {
            rule: name.into(),
            n_max: self.cfg.n_max,
            detail: "confirmation failed at every step up to n_max".into(),
        })
    }

    fn solve_voi(&self, rule: &SampleSizeRule) -> Result<ComponentResult> {
        let model = self.voi.as_ref().ok_or_else(|| {
            Error::domain(format!("rule `{}` needs a net-benefit threshold", rule.name()))
        })?;
        let cfg = &self.cfg;
        let name = rule.name();
        let seed = rng::derive(self.seed, salt(&name));
        let level = rule.target();
        let statistic = |r: &VoIResult| match rule {
            SampleSizeRule::NbAssurance { .. } => (r.assurance, r.assurance_se),
            _ => (r.r_evsi, r.r_evsi_se),
        };
        let pool = cfg.confirm_draws.min(self.thetas.len());
        let search = model.subset(0..pool);
        let mut trace = Vec::new();
        let mut step = 0;
        let mut evaluate = |n: u64, trace: &mut Vec<TracePoint>| -> Result<(f64, f64)> {
            let (v, se) = statistic(&search.run(n, self.baseline, seed)?);
            trace.push(TracePoint { stage: Stage::Bracket, step, n, value: v, mc_se: se, n_avg: None });
            step += 1;
            Ok((v, se))
        };

        let (v_max, se_max) = evaluate(cfg.n_max, &mut trace)?;
        if v_max < level - se_max {
            return Err(Error::Infeasible {
                rule: name,
                n_max: cfg.n_max,
                detail: format!("criterion reaches {v_max:.4} ± {se_max:.4} at n_max, below {level}"),
            });
        }
        let mut failure = None;
        let n_search = smallest_n(cfg.n_min, cfg.n_max, |n| match evaluate(n, &mut trace) {
            Ok((v, se)) => v >= level - se,
            Err(e) => {
                failure.get_or_insert(e);
                true
            }
        })
        .unwrap_or(cfg.n_max);
        if let Some(e) = failure {
            return Err(e);
        }

        // Fresh prior draws and fresh samples.
        let fresh = if self.thetas.len() >= 2 * pool { model.subset(pool..2 * pool) } else { model.clone() };
        let z = norm_quantile(1.0 - cfg.confirm_alpha);
        let (n, est) = self.confirm(&name, n_search, &mut trace, |n, step| {
            let r = fresh.run(n, self.baseline, rng::derive(seed, tag::CONFIRM + step as u64))?;
            let (v, se) = statistic(&r);
            Ok((v, se, level - v > z * se))
        })?;
        Ok(ComponentResult { rule: *rule, n, estimate: est.0, mc_se: est.1, n_search, trace, warnings: Vec::new() })
    }
}

struct WidthEval {
    stat: f64,
    se: f64,
    slack: f64,
    log_sd: f64,
}

fn log_sd(w: &[f64]) -> f64 {
    let logs: Vec<f64> = w.iter().map(|x| x.ln()).collect();
    mean_sd(&logs).1
}

/// Warns when the Robbins–Monro iterate moves by more than 50% over the last quarter.
fn oscillation_warning(trace: &[TracePoint]) -> Option<String> {
    let rm: Vec<f64> = trace.iter().filter(|p| p.stage == Stage::RobbinsMonro).map(|p| p.n as f64).collect();
    let tail = &rm[rm.len() - rm.len() / 4..];
    if tail.is_empty() {
        return None;
    }
    let (lo, hi) = tail.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    ((hi - lo) / mean > 0.5).then(|| {
        format!("Robbins–Monro iterate ranged over {lo:.0}..{hi:.0} in the last quarter of iterations")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::{draw_theta, DistFamily, EvidencePrior, MarginalSpec, Parameterization, Target};
    use crate::precision::OeWidthScale;
    use crate::{LocationKind, RiskFamily};

    fn native(target: Target, family: DistFamily, values: &[f64]) -> MarginalSpec {
        MarginalSpec { target, family, parameterization: Parameterization::Native, values: values.to_vec() }
    }

    fn prior(point_mass: bool) -> EvidencePrior {
        let loc = Target::CalibrationLocation(LocationKind::MeanCalibration);
        EvidencePrior::new(&if point_mass {
            vec![
                native(Target::Prevalence, DistFamily::PointMass, &[0.428]),
                native(Target::CStatistic, DistFamily::PointMass, &[0.761]),
                native(loc, DistFamily::PointMass, &[-0.0093]),
                native(Target::Slope, DistFamily::PointMass, &[0.995]),
            ]
        } else {
            vec![
                native(Target::Prevalence, DistFamily::Beta, &[119.64, 159.91]),
                native(Target::CStatistic, DistFamily::LogitNormal, &[1.1565, 0.0412]),
                native(loc, DistFamily::Normal, &[-0.0093, 0.1245]),
                native(Target::Slope, DistFamily::Normal, &[0.9950, 0.0237]),
            ]
        })
        .unwrap()
    }

    fn planner(point_mass: bool, mode: PreposteriorMode, s: usize, seed: u64) -> Planner {
        let p = prior(point_mass);
        let thetas = draw_theta(&p, s, RiskFamily::LogitNormal, seed).unwrap().draws;
        let point = p.point_theta(RiskFamily::LogitNormal).unwrap();
        let cfg = SearchConfig { confirm_draws: 2000, ..Default::default() };
        Planner::new(thetas, point, mode, WidthOptions::default(), cfg, seed)
            .unwrap()
            .with_threshold(0.2, Baseline::BestCurrent)
            .unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SearchConfig::default().validate().is_ok());
        for bad in [
            SearchConfig { n_min: 10, ..Default::default() },
            SearchConfig { n_max: 20_000_000, ..Default::default() },
            SearchConfig { rm_iterations: 100, ..Default::default() },
            SearchConfig { confirm_alpha: 0.0, ..Default::default() },
            SearchConfig { rm_step_scale: -1.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert!(SampleSizeRule::Qciw { metric: Metric::Slope, q: 1.0, tau: 0.3 }.validate().is_err());
        assert!(SampleSizeRule::Eciw { metric: Metric::Slope, tau: 0.0 }.validate().is_err());
        assert!(SampleSizeRule::NbAssurance { level: 0.4 }.validate().is_err());
    }

    #[test]
    fn rule_names_and_serde() {
        let r = SampleSizeRule::Qciw { metric: Metric::Slope, q: 0.9, tau: 0.3 };
        assert_eq!(r.name(), "qciw90_slope");
        assert_eq!(SampleSizeRule::Qciw { metric: Metric::Oe, q: 0.975, tau: 0.3 }.name(), "qciw97p5_oe");
        let parsed: SampleSizeRule =
            serde_json::from_str(r#"{"rule": "qciw", "metric": "slope", "q": 0.9, "tau": 0.3}"#).unwrap();
        assert_eq!(parsed, r);
        let parsed: SampleSizeRule = serde_json::from_str(r#"{"rule": "nb_assurance", "level": 0.9}"#).unwrap();
        assert!(parsed.needs_threshold());
    }

    #[test]
    fn point_mass_prior_matches_frequentist_sizes() {
        let p = planner(true, PreposteriorMode::SampleBased, 2000, 1);
        let point = p.point;
        for (metric, tau) in [(Metric::Cstat, 0.1), (Metric::Oe, 0.22), (Metric::Slope, 0.3)] {
            let freq = riley_min_n(metric, &point, tau, OeWidthScale::Log).unwrap() as f64;
            let n = p.solve(&SampleSizeRule::Eciw { metric, tau }).unwrap().n as f64;
            assert!((n / freq - 1.0).abs() <= 0.02, "{metric:?}: {n} vs {freq}");
        }
        let r = p.solve(&SampleSizeRule::NbAssurance { level: 0.9 }).unwrap();
        assert_eq!((r.n, r.estimate), (20, 1.0));
    }

    #[test]
    fn solved_size_is_a_stochastic_root() {
        let p = planner(false, PreposteriorMode::TwoStep, 10_000, 2);
        let rule = SampleSizeRule::Qciw { metric: Metric::Slope, q: 0.9, tau: 0.3 };
        let r = p.solve(&rule).unwrap();
        assert!(r.trace.iter().any(|t| t.stage == Stage::RobbinsMonro));
        assert!(r.warnings.is_empty(), "{:?}", r.warnings);
        let check = |n: f64, seed| {
            p.width_criterion(Metric::Slope, Some(0.9), 0.3, n.round() as u64, p.thetas(), seed).unwrap().slack
        };
        let z = norm_quantile(0.95);
        assert!(check(0.8 * r.n as f64, 77) > z);
        assert!(check(1.25 * r.n as f64, 78) < -z);
    }

    #[test]
    fn assurance_rule_brackets_its_level() {
        let p = planner(false, PreposteriorMode::TwoStep, 10_000, 3);
        let r = p.solve(&SampleSizeRule::NbAssurance { level: 0.85 }).unwrap();
        let model = p.voi_model().unwrap();
        let half = model.run(r.n / 2, Baseline::BestCurrent, 5).unwrap();
        assert!(half.assurance < 0.85, "{r:?}");
        let a = model.run(r.n, Baseline::BestCurrent, 5).unwrap();
        assert!(a.assurance > 0.85 - 3.0 * a.assurance_se);
    }

    #[test]
    fn settled_decision_needs_the_minimum() {
        let p = planner(false, PreposteriorMode::TwoStep, 4000, 4);
        let r = p.solve(&SampleSizeRule::NbAssurance { level: 0.51 }).unwrap();
        assert_eq!(r.n, 20);
    }

    #[test]
    fn unreachable_width_is_infeasible() {
        let p = planner(false, PreposteriorMode::TwoStep, 2000, 5);
        let r = p.solve(&SampleSizeRule::Eciw { metric: Metric::Slope, tau: 1e-4 });
        assert!(matches!(r, Err(Error::Infeasible { .. })), "{r:?}");
        let no_threshold = Planner::new(
            p.thetas.clone(),
            p.point,
            PreposteriorMode::TwoStep,
            WidthOptions::default(),
            SearchConfig::default(),
            1,
        )
        .unwrap();
        assert!(no_threshold.solve(&SampleSizeRule::NbAssurance { level: 0.9 }).is_err());
    }

    #[test]
    fn plan_takes_the_largest_component() {
        let p = planner(false, PreposteriorMode::TwoStep, 10_000, 6);
        let rules = [
            SampleSizeRule::Eciw { metric: Metric::Cstat, tau: 0.1 },
            SampleSizeRule::Qciw { metric: Metric::Oe, q: 0.9, tau: 0.22 },
            SampleSizeRule::NbAssurance { level: 0.9 },
        ];
        let plan = p.plan(&rules).unwrap();
        assert_eq!(plan.final_n, plan.components.iter().map(|c| c.n).max().unwrap());
        assert_eq!(plan.diagnostics.n, plan.final_n);
        assert!(plan.diagnostics.voi.is_some());
        assert_eq!(p.solve(&rules[1]).unwrap(), plan.components[1]);
        let single = p.plan(&rules[..1]).unwrap();
        assert_eq!(single.final_n, plan.components[0].n);
        assert!(p.plan(&[]).is_err());
    }

    #[test]
    fn plan_is_independent_of_thread_count() {
        let p = planner(false, PreposteriorMode::TwoStep, 3000, 7);
        let rules = [SampleSizeRule::Eciw { metric: Metric::Slope, tau: 0.3 }, SampleSizeRule::NbAssurance { level: 0.9 }];
        let a = p.plan(&rules).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| p.plan(&rules).unwrap());
        assert_eq!(a, b);
    }
}
