//! Experiment configuration: one JSON document per run, discriminated by
//! a `kind` field. Every struct rejects unknown keys so a typo fails
//! loudly before any work starts.

use std::path::{Path, PathBuf};

use perclab::enumeration::SmallGraph;
use perclab::lattice::LatticeSpec;
use perclab::sle::SleParams;
use serde::Deserialize;

/// Where and how a run writes its table.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Output file; stdout when absent.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Inclusive numeric grid `start..=stop` in steps of `step`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>, String> {
        let well_formed = self.start.is_finite() && self.stop.is_finite() && self.step > 0.0;
        if !well_formed {
            return Err(format!(
                "grid must have finite bounds and positive step, got {}:{}:{}",
                self.start, self.stop, self.step
            ));
        }
        let count = ((self.stop - self.start) / self.step + 0.5).floor() as i64;
        if !(0..=100_000).contains(&count) {
            return Err(format!(
                "grid {}:{}:{} has {} points",
                self.start,
                self.stop,
                self.step,
                count.max(0)
            ));
        }
        Ok((0..=count)
            .map(|i| self.start + i as f64 * self.step)
            .filter(|v| *v <= self.stop + 1e-12 * self.step)
            .collect())
    }
}

impl std::str::FromStr for GridSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected START:STOP:STEP, got {s:?}"));
        }
        let parse = |t: &str| {
            t.parse::<f64>()
                .map_err(|e| format!("bad grid component {t:?}: {e}"))
        };
        Ok(GridSpec {
            start: parse(parts[0])?,
            stop: parse(parts[1])?,
            step: parse(parts[2])?,
        })
    }
}

/// Closed-form evaluation grids; every family checks two independent
/// routes against each other.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormulaConfig {
    #[serde(default)]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub eta_grid: Option<GridSpec>,
    #[serde(default)]
    pub rect_r: Vec<f64>,
    #[serde(default)]
    pub carleson_x: Vec<f64>,
    #[serde(default)]
    pub strip_ratio: Vec<f64>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

/// Conformal geometry conversions.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default)]
    pub r: Vec<f64>,
    #[serde(default)]
    pub modulus: Vec<f64>,
    #[serde(default)]
    pub triangle_x: Vec<f64>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

/// Lattice Monte Carlo experiment; the lattice block mirrors the
/// library's `LatticeSpec` exactly.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub lattice: LatticeSpec,
    /// Query point for the triangle separation observable; required for
    /// (and only valid on) the equilateral triangle.
    #[serde(default)]
    pub smirnov_x: Option<f64>,
    #[serde(default)]
    pub n_trials: Option<u64>,
    #[serde(default)]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Absolute tolerance overriding the confidence-interval check.
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

/// Exact random-cluster enumeration on a small graph, given inline, from
/// a file, or derived from a square-bond lattice.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnumerateConfig {
    #[serde(default)]
    pub graph: Option<SmallGraph>,
    #[serde(default)]
    pub graph_path: Option<PathBuf>,
    #[serde(default)]
    pub lattice: Option<LatticeSpec>,
    /// Occupation probability; falls back to the lattice block's `p`.
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

/// Loewner hitting race.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SleConfig {
    pub a: f64,
    pub b: f64,
    /// Full integrator override; `SleParams::defaults_for(a, b)` when
    /// absent.
    #[serde(default)]
    pub params: Option<SleParams>,
    #[serde(default)]
    pub n_traces: Option<u64>,
    #[serde(default)]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

/// Where the predicted column of a comparison comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    /// Continuum closed forms evaluated at the measurer's geometry.
    #[default]
    Formula,
    /// Exact finite-graph enumeration of the measurer's lattice.
    Enumeration,
}

/// A measurement paired with an independent prediction.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasurerConfig {
    Mc(McConfig),
    Sle(SleConfig),
    Enumerate(EnumerateConfig),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub measurer: MeasurerConfig,
    #[serde(default)]
    pub predictor: PredictorKind,
    /// Absolute tolerance; takes precedence over the CI check.
    #[serde(default)]
    pub tolerance: Option<f64>,
    /// Width of the acceptance band in estimated standard deviations;
    /// consulted when no absolute tolerance is set.
    #[serde(default)]
    pub sigma_band: Option<f64>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

/// Top-level experiment document.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Formula(FormulaConfig),
    Geometry(GeometryConfig),
    Mc(McConfig),
    Enumerate(EnumerateConfig),
    Sle(SleConfig),
    Compare(CompareConfig),
}

impl ExperimentConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ExperimentConfig::Formula(_) => "formula",
            ExperimentConfig::Geometry(_) => "geometry",
            ExperimentConfig::Mc(_) => "mc",
            ExperimentConfig::Enumerate(_) => "enumerate",
            ExperimentConfig::Sle(_) => "sle",
            ExperimentConfig::Compare(_) => "compare",
        }
    }
}

/// Read and schema-validate a config document.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
}
