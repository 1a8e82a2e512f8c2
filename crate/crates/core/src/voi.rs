//! Net benefit at a risk threshold, optimality assurance and the expected value
//! of sample and perfect information.
//!
//! Strategies are indexed 0 = treat none, 1 = use the model, 2 = treat all.

use crate::error::{Error, Result};
use crate::evidence::ThetaDraw;
use crate::rng::{self, tag, Stream};
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Net benefit of the three strategies, in true positives per patient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NBTriple {
    pub nb_none: f64,
    pub nb_model: f64,
    pub nb_all: f64,
}

impl NBTriple {
    pub fn as_array(&self) -> [f64; 3] {
        [self.nb_none, self.nb_model, self.nb_all]
    }

    /// Index of the best strategy; ties go to the smaller index.
    pub fn winner(&self) -> usize {
        argmax(&self.as_array())
    }
}

fn argmax(v: &[f64; 3]) -> usize {
    let mut best = 0;
    for k in 1..3 {
        if v[k] > v[best] {
            best = k;
        }
    }
    best
}

fn odds(z: f64) -> f64 {
    z / (1.0 - z)
}

fn check_threshold(z: f64) -> Result<()> {
    if z > 0.0 && z < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("risk threshold {z} must lie in (0, 1)")))
    }
}

/// Net benefit of treating none, using the model, and treating all.
pub fn net_benefit(phi: f64, se: f64, sp: f64, z: f64) -> Result<NBTriple> {
    check_threshold(z)?;
    for (v, what) in [(phi, "prevalence"), (se, "sensitivity"), (sp, "specificity")] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!("{what} {v} must lie in [0, 1]")));
        }
    }
    let w = odds(z);
    Ok(NBTriple {
        nb_none: 0.0,
        nb_model: phi * se - (1.0 - phi) * (1.0 - sp) * w,
        nb_all: phi - (1.0 - phi) * w,
    })
}

/// Cells of a 2×2 classification table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConfusionCounts {
    pub n_tp: u64,
    pub n_fn: u64,
    pub n_tn: u64,
    pub n_fp: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.n_tp + self.n_fn + self.n_tn + self.n_fp
    }

    /// Sample net benefit at odds weight `w = z/(1 - z)`.
    fn net_benefit(&self, w: f64) -> [f64; 3] {
        let n = self.total() as f64;
        let pos = (self.n_tp + self.n_fn) as f64;
        let neg = (self.n_tn + self.n_fp) as f64;
        [0.0, (self.n_tp as f64 - self.n_fp as f64 * w) / n, (pos - neg * w) / n]
    }
}

fn binomial(n: u64, p: f64, rng: &mut Stream) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

fn draw_counts(phi: f64, se: f64, sp: f64, n: u64, rng: &mut Stream) -> ConfusionCounts {
    let pos = binomial(n, phi, rng);
    let n_tp = binomial(pos, se, rng);
    let n_tn = binomial(n - pos, sp, rng);
    ConfusionCounts { n_tp, n_fn: pos - n_tp, n_tn, n_fp: n - pos - n_tn }
}

/// A validation sample summarized by its classification table at threshold `z`.
pub fn sample_confusion(theta: &ThetaDraw, z: f64, n: u64, rng: &mut Stream) -> Result<ConfusionCounts> {
    check_threshold(z)?;
    if n == 0 {
        return Err(Error::domain("sample size must be at least 1"));
    }
    let (se, sp) = theta.risk_dist.sens_spec_at(theta.h.apply(z))?;
    Ok(draw_counts(theta.phi, se, sp, n, rng))
}

/// Reference strategy subtracted in EVSI and EVPI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// The strategy with the highest expected net benefit under current information.
    #[default]
    BestCurrent,
    /// A fixed default strategy.
    ForcedDefault(usize),
}

/// Per-draw quantities needed by the net-benefit simulations.
#[derive(Debug, Clone, Copy, PartialEq)]
struct DecisionDraw {
    phi: f64,
    se: f64,
    sp: f64,
    nb: [f64; 3],
}

/// Prior draws prepared for repeated net-benefit simulations at one threshold.
#[derive(Debug, Clone)]
pub struct VoiModel {
    z: f64,
    draws: Vec<DecisionDraw>,
    expected_nb: [f64; 3],
    current_winner: usize,
    /// Every draw has the current winner as its true best strategy, so no
    /// study can change the decision.
    settled: bool,
}

/// Optimality assurance and value of information at one sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VoIResult {
    pub n: u64,
    pub assurance: f64,
    pub assurance_se: f64,
    pub evpi: f64,
    pub evpi_se: f64,
    pub evsi: f64,
    pub evsi_se: f64,
    pub r_evsi: f64,
    pub r_evsi_se: f64,
    /// Strategy with the highest expected net benefit under current information.
    pub winner_under_current_info: usize,
    /// Draws with no events or no non-events in the simulated sample.
    pub flagged: usize,
    pub draws: usize,
    /// EVSI is negative by more than three Monte Carlo standard errors.
    pub negative_evsi: bool,
}

impl VoiModel {
    pub fn new(thetas: &[ThetaDraw], z: f64) -> Result<Self> {
        check_threshold(z)?;
        if thetas.is_empty() {
            return Err(Error::domain("no prior draws supplied"));
        }
        let draws = thetas
            .par_iter()
            .map(|t| {
                let (se, sp) = t.risk_dist.sens_spec_at(t.h.apply(z))?;
                let nb = net_benefit(t.phi, se, sp, z)?.as_array();
                Ok(DecisionDraw { phi: t.phi, se, sp, nb })
            })
            .collect::<Result<Vec<_>>>()?;
        let s = draws.len() as f64;
        let mut expected_nb = [0.0; 3];
        for d in &draws {
            for k in 0..3 {
                expected_nb[k] += d.nb[k] / s;
            }
        }
        let current_winner = argmax(&expected_nb);
        let settled = draws.iter().all(|d| argmax(&d.nb) == current_winner);
        Ok(Self { z, draws, expected_nb, current_winner, settled })
    }

    pub fn threshold(&self) -> f64 {
        self.z
    }

    pub fn expected_nb(&self) -> [f64; 3] {
        self.expected_nb
    }

    pub fn current_winner(&self) -> usize {
        self.current_winner
    }

    /// The draws in `range`, keeping the full sample's current-information winner.
    pub fn subset(&self, range: std::ops::Range<usize>) -> Self {
        Self { draws: self.draws[range].to_vec(), ..self.clone() }
    }

    /// True net benefit of each draw.
    pub fn true_nb(&self) -> Vec<[f64; 3]> {
        self.draws.iter().map(|d| d.nb).collect()
    }

    /// Simulates one validation sample of size `n` per draw; stream `i` is reused
    /// across sample sizes. When all draws agree on the best strategy the
    /// decision is fixed and no samples are drawn.
    pub fn run(&self, n: u64, baseline: Baseline, seed: u64) -> Result<VoIResult> {
        let reference = match baseline {
            Baseline::BestCurrent => self.current_winner,
            Baseline::ForcedDefault(k) if k < 3 => k,
            Baseline::ForcedDefault(k) => {
                return Err(Error::domain(format!("default strategy index {k} must be 0, 1 or 2")));
            }
        };
        let w = odds(self.z);
        // (indicator, nb of chosen - nb of reference, nb of best - nb of reference, flagged)
        let per: Vec<(f64, f64, f64, bool)> = self
            .draws
            .par_iter()
            .enumerate()
            .map(|(i, d)| {
                let (chosen, flagged) = if n == 0 || self.settled {
                    (self.current_winner, false)
                } else {
                    let mut rng = rng::stream(seed, tag::VOI, i as u64);
                    let counts = draw_counts(d.phi, d.se, d.sp, n, &mut rng);
                    let pos = counts.n_tp + counts.n_fn;
                    (argmax(&counts.net_benefit(w)), pos == 0 || pos == n)
                };
                let best = d.nb[argmax(&d.nb)];
                let hit = if d.nb[chosen] >= best { 1.0 } else { 0.0 };
                (hit, d.nb[chosen] - d.nb[reference], best - d.nb[reference], flagged)
            })
            .collect();
        let s = per.len() as f64;
        let mean = |f: &dyn Fn(&(f64, f64, f64, bool)) -> f64| per.iter().map(f).sum::<f64>() / s;
        let assurance = mean(&|r| r.0);
        let evsi = mean(&|r| r.1);
        let evpi = mean(&|r| r.2);
        let var = |f: &dyn Fn(&(f64, f64, f64, bool)) -> f64, m: f64| {
            per.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / (s - 1.0).max(1.0)
        };
        let var_a = var(&|r| r.1, evsi);
        let var_b = var(&|r| r.2, evpi);
        let cov = per.iter().map(|r| (r.1 - evsi) * (r.2 - evpi)).sum::<f64>() / (s - 1.0).max(1.0);
        let evsi_se = (var_a / s).sqrt();
        let (r_evsi, r_evsi_se) = if evpi > 0.0 {
            let r = evsi / evpi;
            let v = (var_a - 2.0 * r * cov + r * r * var_b) / (evpi * evpi * s);
            (r, v.max(0.0).sqrt())
        } else {
            (0.0, 0.0)
        };
        Ok(VoIResult {
            n,
            assurance,
            assurance_se: (assurance * (1.0 - assurance) / s).sqrt(),
            evpi,
            evpi_se: (var_b / s).sqrt(),
            evsi,
            evsi_se,
            r_evsi,
            r_evsi_se,
            winner_under_current_info: self.current_winner,
            flagged: per.iter().filter(|r| r.3).count(),
            draws: per.len(),
            negative_evsi: evsi < -3.0 * evsi_se,
        })
    }

    /// Incremental net benefit of the model over the best default strategy,
    /// `NB_model - max(NB_none, NB_all)`, estimated from one simulated sample per draw.
    pub fn incremental_nb(&self, n: u64, seed: u64) -> Vec<f64> {
        let w = odds(self.z);
        self.draws
            .par_iter()
            .enumerate()
            .map(|(i, d)| {
                let mut rng = rng::stream(seed, tag::VOI, i as u64);
                let nb = draw_counts(d.phi, d.se, d.sp, n.max(1), &mut rng).net_benefit(w);
                nb[1] - nb[0].max(nb[2])
            })
            .collect()
    }
}

/// Optimality assurance, EVPI and EVSI at sample size `n`.
pub fn voi_run(thetas: &[ThetaDraw], z: f64, n: u64, baseline: Baseline, seed: u64) -> Result<VoIResult> {
    VoiModel::new(thetas, z)?.run(n, baseline, seed)
}

/// [`voi_run`] over a grid of sample sizes with common random numbers.
pub fn evsi_curve(
    thetas: &[ThetaDraw],
    z: f64,
    n_grid: &[u64],
    baseline: Baseline,
    seed: u64,
) -> Result<Vec<VoIResult>> {
    if n_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::domain("sample size grid must be sorted ascending"));
    }
    let model = VoiModel::new(thetas, z)?;
    n_grid.iter().map(|&n| model.run(n, baseline, seed)).collect()
}

/// Expected net benefit of sampling, `M EVSI - W N`.
pub fn enbs(evsi: f64, n: u64, population: f64, cost_per_participant: f64) -> Result<f64> {
    if !(evsi >= 0.0) {
        return Err(Error::domain(format!("EVSI {evsi} must be non-negative")));
    }
    if !(population > 0.0 && cost_per_participant >= 0.0) {
        return Err(Error::domain("population must be positive and cost non-negative"));
    }
    Ok(population * evsi - cost_per_participant * n as f64)
}
