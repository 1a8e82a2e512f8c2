//! CSV writing with provenance comments.

use crate::config::{Overrides, PlanConfig};
use crate::{CliError, Command};
use valsize_core::precision::OeWidthScale;

/// Run identity echoed at the top of every output file.
pub(crate) struct Provenance {
    lines: Vec<String>,
    pub oe_scale: OeWidthScale,
}

impl Provenance {
    pub fn new(command: Command, config_label: &str, cfg: &PlanConfig, o: Overrides) -> Self {
        let mut lines = vec![
            format!("valsize {} {}", env!("CARGO_PKG_VERSION"), command.name()),
            format!("config: {config_label}"),
        ];
        let mark = |set: bool| if set { " (command line)" } else { "" };
        if command != Command::Riley {
            lines.push(format!("seed: {}{}", cfg.seed(), mark(o.seed.is_some())));
            lines.push(format!("s_draws: {}{}", cfg.run.s_draws, mark(o.s_draws.is_some())));
            lines.push(format!("mode: {:?}", cfg.run.mode));
        }
        if command == Command::Prec {
            if let Some(grid) = &cfg.run.n_grid {
                let g: Vec<String> = grid.iter().map(u64::to_string).collect();
                lines.push(format!("n_grid: {}", g.join(" ")));
            } else if let Some(n) = cfg.run.n {
                lines.push(format!("n: {n}{}", mark(o.n.is_some())));
            }
        }
        Self { lines, oe_scale: cfg.run.oe_scale }
    }

    pub fn header_text(&self) -> String {
        self.lines.iter().map(|l| format!("# {l}\n")).collect()
    }

    pub fn csv(&self, notes: &[&str], columns: &[&str]) -> Csv {
        let mut head = self.header_text();
        for n in notes {
            head.push_str(&format!("# {n}\n"));
        }
        let mut w = csv::Writer::from_writer(head.into_bytes());
        // Header row errors are impossible on an in-memory buffer.
        w.write_record(columns).expect("in-memory write");
        Csv { w }
    }
}

pub(crate) struct Csv {
    w: csv::Writer<Vec<u8>>,
}

impl Csv {
    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).map_err(|e| CliError::Io(format!("csv: {e}")))
    }

    pub fn finish(self) -> Result<Vec<u8>, CliError> {
        self.w.into_inner().map_err(|e| CliError::Io(format!("csv: {e}")))
    }
}

pub(crate) fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}
