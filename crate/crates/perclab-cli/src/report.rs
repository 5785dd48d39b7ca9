//! Output table: a run produces metadata plus `ComparisonRow`s and
//! renders them as CSV or a single JSON document.
//!
//! CSV column order is fixed: `label,descriptor,predicted,measured,
//! ci_low,ci_high,abs_error,within_ci`. Floats are printed with 17
//! significant digits so every value round-trips through text exactly.
//! Metadata (command name, seeds, experiment parameters) goes in
//! `#`-prefixed comment lines before the header; the worker count is
//! deliberately left out because results are independent of it, so the
//! bytes of a run depend only on its config and seed.

use std::io::Write;

use serde::{Deserialize, Serialize};

/// 95% two-sided normal quantile, shared with the interval checks.
pub const Z95: f64 = 1.959963984540054;

/// One predicted-versus-measured line of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonRow {
    /// Which observable the row reports.
    pub label: String,
    /// Geometry coordinate of the row: aspect ratio, cross-ratio, or
    /// boundary fraction depending on the label.
    pub descriptor: f64,
    pub predicted: f64,
    pub measured: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Always `|predicted - measured|`.
    pub abs_error: f64,
    pub within_ci: bool,
}

/// How a row decides its `within_ci` flag.
#[derive(Debug, Clone, Copy)]
pub enum Acceptance {
    /// Predicted value must fall inside `[ci_low, ci_high]`.
    Interval,
    /// `abs_error` must not exceed the bound.
    Absolute(f64),
    /// `abs_error` must not exceed `band` estimated standard deviations,
    /// where the standard deviation is recovered from the CI width.
    SigmaBand(f64),
}

impl ComparisonRow {
    pub fn new(
        label: &str,
        descriptor: f64,
        predicted: f64,
        measured: f64,
        ci: (f64, f64),
        acceptance: Acceptance,
    ) -> Self {
        let abs_error = (predicted - measured).abs();
        let within_ci = match acceptance {
            Acceptance::Interval => predicted >= ci.0 && predicted <= ci.1,
            Acceptance::Absolute(tol) => abs_error <= tol,
            Acceptance::SigmaBand(band) => {
                let sigma = (ci.1 - ci.0) / (2.0 * Z95);
                abs_error <= band * sigma
            }
        };
        ComparisonRow {
            label: label.to_string(),
            descriptor,
            predicted,
            measured,
            ci_low: ci.0,
            ci_high: ci.1,
            abs_error,
            within_ci,
        }
    }

    /// Exact-arithmetic row: the two routes must agree to `tol`, and the
    /// interval drawn around the measured value documents that band.
    pub fn exact(label: &str, descriptor: f64, predicted: f64, measured: f64, tol: f64) -> Self {
        ComparisonRow::new(
            label,
            descriptor,
            predicted,
            measured,
            (measured - tol, measured + tol),
            Acceptance::Absolute(tol),
        )
    }
}

/// Everything a run reports besides the rows themselves.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    /// Subcommand that produced the table.
    pub command: &'static str,
    /// Experiment parameters, including any seeds; keys are sorted by
    /// `serde_json`, so the rendering is deterministic.
    pub params: serde_json::Value,
}

/// A complete run result.
#[derive(Debug, Clone, Serialize)]
pub struct Document {
    pub meta: RunMeta,
    pub rows: Vec<ComparisonRow>,
}

/// 17 significant digits: enough to reconstruct any f64 bit pattern.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Document {
    pub fn new(command: &'static str, params: serde_json::Value) -> Self {
        Document {
            meta: RunMeta { command, params },
            rows: Vec::new(),
        }
    }

    pub fn all_within(&self) -> bool {
        self.rows.iter().all(|r| r.within_ci)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# perclab {}\n", self.meta.command));
        out.push_str(&format!(
            "# params={}\n",
            serde_json::to_string(&self.meta.params).expect("meta params serialize")
        ));
        out.push_str("label,descriptor,predicted,measured,ci_low,ci_high,abs_error,within_ci\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.label,
                format_f64(row.descriptor),
                format_f64(row.predicted),
                format_f64(row.measured),
                format_f64(row.ci_low),
                format_f64(row.ci_high),
                format_f64(row.abs_error),
                row.within_ci
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serialize");
        s.push('\n');
        s
    }

    pub fn render(&self, format: crate::config::OutputFormat) -> String {
        match format {
            crate::config::OutputFormat::Csv => self.to_csv(),
            crate::config::OutputFormat::Json => self.to_json(),
        }
    }

    /// Write the rendered document to a file or stdout.
    pub fn write_to(
        &self,
        path: Option<&std::path::Path>,
        format: crate::config::OutputFormat,
    ) -> std::io::Result<()> {
        let rendered = self.render(format);
        match path {
            Some(p) => std::fs::write(p, rendered),
            None => {
                let stdout = std::io::stdout();
                let mut lock = stdout.lock();
                lock.write_all(rendered.as_bytes())?;
                lock.flush()
            }
        }
    }
}
