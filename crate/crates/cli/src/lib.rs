//! Batch front end for validation sample size planning.
//!
//! Three commands share one JSON config:
//!
//! * `prec` evaluates interval widths, calibration-error bands and net-benefit
//!   value of information at a fixed `n` or over a grid;
//! * `samp` solves every rule for its minimum sample size and reports the
//!   diagnostics at the largest one;
//! * `riley` gives the frequentist sizes at the prior point estimates.
//!
//! Every command writes `summary.txt` plus CSV files into the output
//! directory. CSVs start with `#` comment lines recording the tool version,
//! command, config file and effective seed, so two runs with the same inputs
//! produce identical bytes whatever the worker count.

pub mod config;
mod output;

use config::{Overrides, PlanConfig};
use output::{fmt_opt, Csv, Provenance};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;
use valsize_core::evidence::{draw_theta, ThetaDraw};
use valsize_core::numeric::{mean_sd, quantile_sorted};
use valsize_core::planner::{PlanResult, Planner, SampleSizeRule};
use valsize_core::precision::{
    calibration_error_bands, frequentist_width, preposterior_widths, riley_min_n, CalibrationBands, PreposteriorWidths,
};
use valsize_core::voi::{VoIResult, VoiModel};
use valsize_core::{Error, Metric};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config at `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// Process exit status: 2 for invalid input, 3 for numeric failure, 4 when
    /// a rule cannot be met within the search range.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Io(_) => 2,
            CliError::Core(Error::Domain(_) | Error::PriorInfeasible { .. }) => 2,
            CliError::Core(Error::Numeric(_) | Error::Identification { .. } | Error::TooManyFlagged { .. }) => 3,
            CliError::Core(Error::Infeasible { .. }) => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Prec,
    Samp,
    Riley,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Prec => "prec",
            Command::Samp => "samp",
            Command::Riley => "riley",
        }
    }
}

/// One command invocation.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub overrides: Overrides,
    pub out_dir: PathBuf,
    /// Worker threads; `None` uses one per core.
    pub workers: Option<usize>,
}

/// Fixed-`n` evaluation at one sample size.
#[derive(Debug, Clone)]
pub struct PrecPoint {
    pub widths: PreposteriorWidths,
    pub voi: Option<VoIResult>,
}

#[derive(Debug, Clone)]
pub struct RileyRow {
    pub metric: Metric,
    pub tau: f64,
    pub n: u64,
    pub width_at_n: f64,
    pub width_below_n: f64,
    /// Widths at `n_min`, `n/4`, `n/2`, `n`, `2n`, `4n` strictly decrease.
    pub monotone: bool,
}

/// What a command computed, alongside the files it wrote.
#[derive(Debug, Clone)]
pub enum Outcome {
    Prec { points: Vec<PrecPoint>, bands: Vec<CalibrationBands> },
    Samp { plan: Box<PlanResult>, voi_curve: Vec<VoIResult>, bands: Vec<CalibrationBands> },
    Riley { rows: Vec<RileyRow> },
}

#[derive(Debug, Clone)]
pub struct Report {
    pub summary: String,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub outcome: Outcome,
}

/// Loads the config, applies overrides and runs the command.
pub fn execute(inv: &Invocation) -> Result<Report, CliError> {
    let mut cfg = PlanConfig::load(&inv.config)?;
    cfg.apply(inv.overrides);
    let label = inv.config.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    execute_config(inv.command, &cfg, &label, inv.overrides, &inv.out_dir, inv.workers)
}

/// Runs a command on an already loaded config.
pub fn execute_config(
    command: Command,
    cfg: &PlanConfig,
    config_label: &str,
    overrides: Overrides,
    out_dir: &Path,
    workers: Option<usize>,
) -> Result<Report, CliError> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::Io("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))?;
    let prov = Provenance::new(command, config_label, cfg, overrides);
    let mut files = Files::new(out_dir)?;
    let (summary, warnings, outcome) = pool.install(|| match command {
        Command::Prec => run_prec(cfg, &prov, &mut files),
        Command::Samp => run_samp(cfg, &prov, &mut files),
        Command::Riley => run_riley(cfg, &prov, &mut files),
    })?;
    let mut text = prov.header_text();
    text.push_str(&summary);
    for w in &warnings {
        let _ = writeln!(text, "warning: {w}");
    }
    files.write_text("summary.txt", &text)?;
    Ok(Report { summary: text, files: files.written, warnings, outcome })
}

struct Files {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Files {
    fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    fn write_csv(&mut self, name: &str, csv: Csv) -> Result<(), CliError> {
        let bytes = csv.finish()?;
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }
}

fn thetas(cfg: &PlanConfig, warnings: &mut Vec<String>) -> Result<Vec<ThetaDraw>, CliError> {
    let prior = cfg.prior()?;
    let sample = draw_theta(&prior, cfg.run.s_draws, cfg.evidence.risk_family, cfg.seed())?;
    warnings.extend(sample.warning());
    Ok(sample.draws)
}

fn voi_model(cfg: &PlanConfig, thetas: &[ThetaDraw]) -> Result<Option<VoiModel>, CliError> {
    Ok(match cfg.targets.threshold {
        Some(z) => Some(VoiModel::new(thetas, z)?),
        None => None,
    })
}

/// Quantile of `w` with the half-width of its order-statistic interval at ±1
/// binomial standard error.
fn quantile_with_se(w: &[f64], q: f64) -> (f64, f64) {
    let mut sorted = w.to_vec();
    sorted.sort_by(f64::total_cmp);
    let se_p = (q * (1.0 - q) / w.len() as f64).sqrt();
    let half = 0.5 * (quantile_sorted(&sorted, (q + se_p).min(1.0)) - quantile_sorted(&sorted, (q - se_p).max(0.0)));
    (quantile_sorted(&sorted, q), half)
}

/// Rows of `precision_summary.csv` and the summary table for one `n`.
fn precision_rows(pw: &PreposteriorWidths, q: f64, csv: &mut Csv, text: &mut String) -> Result<(), CliError> {
    for m in Metric::ALL {
        let w = &pw.metric(m).widths;
        let (mean, sd) = mean_sd(w);
        let eciw_se = sd / (w.len() as f64).sqrt();
        let (qciw, qciw_se) = quantile_with_se(w, q);
        csv.row([
            pw.n.to_string(),
            m.name().into(),
            mean.to_string(),
            eciw_se.to_string(),
            q.to_string(),
            qciw.to_string(),
            qciw_se.to_string(),
            pw.flagged.to_string(),
            pw.total.to_string(),
        ])?;
        let _ = writeln!(
            text,
            "  {:<6} ECIW {:.4} (se {:.4})  QCIW({q}) {:.4} (se {:.4})",
            m.name(),
            mean,
            eciw_se,
            qciw,
            qciw_se
        );
    }
    let _ = writeln!(text, "  flagged draws: {} of {}", pw.flagged, pw.total);
    Ok(())
}

fn voi_text(v: &VoIResult, text: &mut String) {
    let _ = writeln!(
        text,
        "  assurance {:.4} (se {:.4})  EVPI {:.6} (se {:.6})  EVSI {:.6} (se {:.6})  rEVSI {:.4} (se {:.4})  flagged {} of {}",
        v.assurance, v.assurance_se, v.evpi, v.evpi_se, v.evsi, v.evsi_se, v.r_evsi, v.r_evsi_se, v.flagged, v.draws
    );
}

fn voi_csv(prov: &Provenance, curve: &[VoIResult], winner: usize) -> Result<Csv, CliError> {
    let mut csv = prov.csv(
        &[
            "net benefit in true positives per patient; strategies 0 = treat none, 1 = use model, 2 = treat all",
            &format!("winner under current information: {winner}"),
        ],
        &[
            "n", "assurance", "assurance_se", "evpi", "evpi_se", "evsi", "evsi_se", "r_evsi", "r_evsi_se", "flagged", "draws",
        ],
    );
    for v in curve {
        csv.row([
            v.n.to_string(),
            v.assurance.to_string(),
            v.assurance_se.to_string(),
            v.evpi.to_string(),
            v.evpi_se.to_string(),
            v.evsi.to_string(),
            v.evsi_se.to_string(),
            v.r_evsi.to_string(),
            v.r_evsi_se.to_string(),
            v.flagged.to_string(),
            v.draws.to_string(),
        ])?;
    }
    Ok(csv)
}

fn widths_csvs(prov: &Provenance, sets: &[&PreposteriorWidths], files: &mut Files) -> Result<(), CliError> {
    for m in Metric::ALL {
        let note = match m {
            Metric::Oe => format!("95% interval widths of the O/E ratio ({:?} scale), one row per kept draw", prov.oe_scale),
            _ => format!("95% interval widths of the {}, one row per kept draw", m.name()),
        };
        let mut csv = prov.csv(&[&note], &["n", "draw", "width"]);
        for pw in sets {
            for (i, w) in pw.metric(m).widths.iter().enumerate() {
                csv.row([pw.n.to_string(), i.to_string(), w.to_string()])?;
            }
        }
        files.write_csv(&format!("widths_{}.csv", m.name()), csv)?;
    }
    Ok(())
}

fn bands_csv(prov: &Provenance, bands: &[CalibrationBands]) -> Result<Csv, CliError> {
    let mut csv = prov.csv(
        &["smoothed observed risk minus true calibrated risk; 2.5%, 50% and 97.5% quantiles across draws"],
        &["n", "predicted_risk", "lower", "median", "upper", "dropped"],
    );
    for b in bands {
        for j in 0..b.grid.len() {
            csv.row([
                b.n.to_string(),
                b.grid[j].to_string(),
                b.lower[j].to_string(),
                b.median[j].to_string(),
                b.upper[j].to_string(),
                b.dropped[j].to_string(),
            ])?;
        }
    }
    Ok(csv)
}

fn compute_bands(cfg: &PlanConfig, thetas: &[ThetaDraw], default_n: u64) -> Result<Vec<CalibrationBands>, CliError> {
    if !cfg.run.bands {
        return Ok(Vec::new());
    }
    let ns = cfg.run.band_n.clone().unwrap_or_else(|| vec![default_n]);
    ns.iter()
        .map(|&n| calibration_error_bands(thetas, n, None, cfg.run.span, cfg.seed()).map_err(CliError::from))
        .collect()
}

fn run_prec(
    cfg: &PlanConfig,
    prov: &Provenance,
    files: &mut Files,
) -> Result<(String, Vec<String>, Outcome), CliError> {
    let ns = match (&cfg.run.n_grid, cfg.run.n) {
        (Some(grid), _) => grid.clone(),
        (None, Some(n)) => vec![n],
        (None, None) => {
            return Err(CliError::Config { key: "run.n".into(), msg: "`prec` needs run.n, run.n_grid or --n".into() })
        }
    };
    let mut warnings = Vec::new();
    let thetas = thetas(cfg, &mut warnings)?;
    let model = voi_model(cfg, &thetas)?;
    let opts = cfg.width_options();
    let q = cfg.run.q;

    let mut text = String::new();
    let mut summary_csv = prov.csv(
        &["interval widths: mean (ECIW) and q-quantile (QCIW) across prior draws, with Monte Carlo standard errors"],
        &["n", "metric", "eciw", "eciw_se", "q", "qciw", "qciw_se", "flagged", "draws"],
    );
    let mut points = Vec::with_capacity(ns.len());
    for &n in &ns {
        let widths = preposterior_widths(&thetas, n, cfg.run.mode, &opts, cfg.seed())?;
        let voi = match &model {
            Some(m) => Some(m.run(n, cfg.targets.baseline, cfg.seed())?),
            None => None,
        };
        let _ = writeln!(text, "n = {n}");
        precision_rows(&widths, q, &mut summary_csv, &mut text)?;
        if let Some(v) = &voi {
            voi_text(v, &mut text);
            if v.negative_evsi {
                warnings.push(format!("EVSI at n = {n} is negative beyond Monte Carlo error"));
            }
        }
        points.push(PrecPoint { widths, voi });
    }
    files.write_csv("precision_summary.csv", summary_csv)?;
    widths_csvs(prov, &points.iter().map(|p| &p.widths).collect::<Vec<_>>(), files)?;
    if let Some(m) = &model {
        let curve: Vec<VoIResult> = points.iter().filter_map(|p| p.voi).collect();
        files.write_csv("voi_curve.csv", voi_csv(prov, &curve, m.current_winner())?)?;
        let mut csv = prov.csv(
            &["incremental net benefit of the model over the best default strategy, one simulated sample per draw"],
            &["n", "draw", "incremental_nb"],
        );
        for &n in &ns {
            for (i, v) in m.incremental_nb(n, cfg.seed()).iter().enumerate() {
                csv.row([n.to_string(), i.to_string(), v.to_string()])?;
            }
        }
        files.write_csv("incremental_nb.csv", csv)?;
    }
    let bands = compute_bands(cfg, &thetas, *ns.last().expect("non-empty"))?;
    if !bands.is_empty() {
        files.write_csv("calibration_bands.csv", bands_csv(prov, &bands)?)?;
    }
    Ok((text, warnings, Outcome::Prec { points, bands }))
}

fn rule_metric(rule: &SampleSizeRule) -> &'static str {
    match rule {
        SampleSizeRule::Eciw { metric, .. } | SampleSizeRule::Qciw { metric, .. } => metric.name(),
        SampleSizeRule::NbAssurance { .. } | SampleSizeRule::EvsiTarget { .. } => "nb",
    }
}

fn rule_kind(rule: &SampleSizeRule) -> &'static str {
    match rule {
        SampleSizeRule::Eciw { .. } => "eciw",
        SampleSizeRule::Qciw { .. } => "qciw",
        SampleSizeRule::NbAssurance { .. } => "assurance",
        SampleSizeRule::EvsiTarget { .. } => "revsi",
    }
}

fn rule_target(rule: &SampleSizeRule) -> f64 {
    match *rule {
        SampleSizeRule::Eciw { tau, .. } | SampleSizeRule::Qciw { tau, .. } => tau,
        SampleSizeRule::NbAssurance { level } | SampleSizeRule::EvsiTarget { level } => level,
    }
}

fn run_samp(
    cfg: &PlanConfig,
    prov: &Provenance,
    files: &mut Files,
) -> Result<(String, Vec<String>, Outcome), CliError> {
    if cfg.targets.rules.is_empty() {
        return Err(CliError::Config { key: "targets.rules".into(), msg: "`samp` needs at least one rule".into() });
    }
    let mut warnings = Vec::new();
    let thetas = thetas(cfg, &mut warnings)?;
    let point = cfg.marginal_prior()?.point_theta(cfg.evidence.risk_family)?;
    let mut planner =
        Planner::new(thetas, point, cfg.run.mode, cfg.width_options(), cfg.run.search, cfg.seed())?;
    if let Some(z) = cfg.targets.threshold {
        planner = planner.with_threshold(z, cfg.targets.baseline)?;
    }
    let plan = planner.plan(&cfg.targets.rules)?;

    let mut text = String::new();
    text.push_str(&component_table(&plan));
    let _ = writeln!(text, "final N = {}", plan.final_n);

    let mut comp = prov.csv(
        &["minimum sample size per rule; estimate and mc_se are the criterion at n from the confirmation run"],
        &["rule", "metric", "kind", "target", "n", "n_search", "estimate", "mc_se", "is_final"],
    );
    for c in &plan.components {
        comp.row([
            c.rule.name(),
            rule_metric(&c.rule).into(),
            rule_kind(&c.rule).into(),
            rule_target(&c.rule).to_string(),
            c.n.to_string(),
            c.n_search.to_string(),
            c.estimate.to_string(),
            c.mc_se.to_string(),
            (c.n == plan.final_n).to_string(),
        ])?;
        for w in &c.warnings {
            warnings.push(format!("{}: {w}", c.rule.name()));
        }
        let mut trace = prov.csv(
            &[&format!("search trace for {}; robbins_monro rows hold single draws", c.rule.name())],
            &["stage", "step", "n", "value", "mc_se", "n_avg"],
        );
        for t in &c.trace {
            trace.row([
                t.stage.name().into(),
                t.step.to_string(),
                t.n.to_string(),
                t.value.to_string(),
                t.mc_se.to_string(),
                fmt_opt(t.n_avg),
            ])?;
        }
        files.write_csv(&format!("trace_{}.csv", c.rule.name()), trace)?;
    }
    files.write_csv("components.csv", comp)?;

    let d = &plan.diagnostics;
    let _ = writeln!(text, "diagnostics at N = {}", d.n);
    let mut summary_csv = prov.csv(
        &["interval widths at the final N: mean (ECIW) and q-quantile (QCIW) across prior draws"],
        &["n", "metric", "eciw", "eciw_se", "q", "qciw", "qciw_se", "flagged", "draws"],
    );
    precision_rows(&d.widths, cfg.run.q, &mut summary_csv, &mut text)?;
    files.write_csv("precision_summary.csv", summary_csv)?;
    widths_csvs(prov, &[&d.widths], files)?;

    let mut voi_curve = Vec::new();
    if let Some(m) = planner.voi_model() {
        if let Some(v) = &d.voi {
            voi_text(v, &mut text);
        }
        let mut ns: Vec<u64> = plan.components.iter().map(|c| c.n).collect();
        ns.sort_unstable();
        ns.dedup();
        for n in ns {
            voi_curve.push(m.run(n, cfg.targets.baseline, cfg.seed())?);
        }
        let _ = writeln!(text, "value of information at component sizes");
        for v in &voi_curve {
            let _ = writeln!(text, "  n = {:<6} rEVSI {:.4} (se {:.4})  assurance {:.4}", v.n, v.r_evsi, v.r_evsi_se, v.assurance);
        }
        files.write_csv("voi_curve.csv", voi_csv(prov, &voi_curve, m.current_winner())?)?;
    }
    let bands = compute_bands(cfg, planner.thetas(), plan.final_n)?;
    if !bands.is_empty() {
        files.write_csv("calibration_bands.csv", bands_csv(prov, &bands)?)?;
    }
    Ok((text, warnings, Outcome::Samp { plan: Box::new(plan), voi_curve, bands }))
}

/// Sizes laid out with one row per rule kind and one column per target.
fn component_table(plan: &PlanResult) -> String {
    let cols = ["cstat", "oe", "slope", "nb"];
    let mut rows: Vec<(String, [Option<u64>; 4])> = Vec::new();
    for c in &plan.components {
        let label = match c.rule {
            SampleSizeRule::Eciw { .. } => "ECIW".to_string(),
            SampleSizeRule::Qciw { q, .. } => format!("QCIW({q})"),
            SampleSizeRule::NbAssurance { level } => format!("Assurance({level})"),
            SampleSizeRule::EvsiTarget { level } => format!("rEVSI({level})"),
        };
        let col = cols.iter().position(|&m| m == rule_metric(&c.rule)).expect("known metric");
        match rows.iter_mut().find(|(l, _)| *l == label) {
            Some((_, cells)) => cells[col] = Some(c.n),
            None => {
                let mut cells = [None; 4];
                cells[col] = Some(c.n);
                rows.push((label, cells));
            }
        }
    }
    let mut s = format!("{:<16}{:>10}{:>10}{:>10}{:>10}\n", "rule", "c", "O/E", "slope", "NB");
    for (label, cells) in rows {
        let _ = write!(s, "{label:<16}");
        for c in cells {
            let _ = write!(s, "{:>10}", c.map_or("-".to_string(), |n| n.to_string()));
        }
        s.push('\n');
    }
    s
}

fn run_riley(
    cfg: &PlanConfig,
    prov: &Provenance,
    files: &mut Files,
) -> Result<(String, Vec<String>, Outcome), CliError> {
    let mut targets: Vec<(Metric, f64)> = Vec::new();
    for r in &cfg.targets.rules {
        if let SampleSizeRule::Eciw { metric, tau } | SampleSizeRule::Qciw { metric, tau, .. } = *r {
            if !targets.iter().any(|&(m, t)| m == metric && t == tau) {
                targets.push((metric, tau));
            }
        }
    }
    if targets.is_empty() {
        return Err(CliError::Config {
            key: "targets.rules".into(),
            msg: "`riley` needs at least one interval-width rule".into(),
        });
    }
    targets.sort_by_key(|&(m, _)| Metric::ALL.iter().position(|&x| x == m));
    let theta = cfg.marginal_prior()?.point_theta(cfg.evidence.risk_family)?;
    let scale = cfg.run.oe_scale;
    let n_min = cfg.run.search.n_min;

    let mut rows = Vec::with_capacity(targets.len());
    for (metric, tau) in targets {
        let n = riley_min_n(metric, &theta, tau, scale)?;
        let width = |n: u64| frequentist_width(metric, &theta, n as f64, scale);
        let probes = [n_min, n / 4, n / 2, n, 2 * n, 4 * n];
        let ws = probes.iter().filter(|&&k| k >= n_min).map(|&k| width(k)).collect::<Result<Vec<_>, _>>()?;
        rows.push(RileyRow {
            metric,
            tau,
            n,
            width_at_n: width(n)?,
            width_below_n: width(n - 1)?,
            monotone: ws.windows(2).all(|w| w[1] < w[0]),
        });
    }

    let mut text = format!(
        "point estimates: prevalence {:.4}, c {:.4}, slope {:.4}, O/E {:.4}\n",
        theta.phi,
        theta.c,
        theta.slope(),
        theta.oe_ratio()
    );
    let _ = writeln!(text, "{:<8}{:>8}{:>10}{:>14}{:>14}{:>10}", "metric", "tau", "N", "width(N)", "width(N-1)", "monotone");
    let mut csv = prov.csv(
        &["frequentist minimum sample size at the prior point estimates; width(N) <= tau < width(N-1)"],
        &["metric", "tau", "n", "width_at_n", "width_at_n_minus_1", "monotone"],
    );
    for r in &rows {
        let _ = writeln!(
            text,
            "{:<8}{:>8}{:>10}{:>14.6}{:>14.6}{:>10}",
            r.metric.name(),
            r.tau,
            r.n,
            r.width_at_n,
            r.width_below_n,
            if r.monotone { "yes" } else { "no" }
        );
        csv.row([
            r.metric.name().into(),
            r.tau.to_string(),
            r.n.to_string(),
            r.width_at_n.to_string(),
            r.width_below_n.to_string(),
            r.monotone.to_string(),
        ])?;
    }
    files.write_csv("riley.csv", csv)?;
    Ok((text, Vec::new(), Outcome::Riley { rows }))
}
