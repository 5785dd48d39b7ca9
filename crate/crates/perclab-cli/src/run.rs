//! Subcommand dispatch.
//!
//! Every command emits one table of [`ComparisonRow`]s in which the
//! `predicted` column always comes from a route independent of the
//! `measured` column: closed forms are checked against their dual
//! derivations, sampled estimates against continuum predictions, and
//! exact enumeration against a direct event sum. The exit code reports
//! the table verdict: 0 when every row check passes, 1 when any fails,
//! 2 on configuration errors. Per-point domain violations inside a grid
//! are warnings on stderr — the run continues and everything computed is
//! still flushed.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use perclab::enumeration::{
    crossing_prob_exact, direct_crossing_measures, enumerate_partition_set, mean_crossing_exact,
    SmallGraph,
};
use perclab::formulas::{
    carleson_crossing, crossing_probability, kleban_crossing, mean_crossing_number,
    strip_mean_crossings, x_prime_one_gamma_form,
};
use perclab::geometry::{
    rectangle_eta, rectangle_from_aspect, rectangle_from_modulus, triangle_eta, CrossRatio,
};
use perclab::lattice::{
    run_experiment, smirnov_h, CrossingStats, LatticeKind, LatticeSpec, RegionShape,
};
use perclab::sle::{estimate_left_first, SleParams};
use perclab::special::incomplete_beta_13;
use serde_json::json;

use crate::config::{
    load_config, CompareConfig, EnumerateConfig, ExperimentConfig, FormulaConfig, GeometryConfig,
    McConfig, MeasurerConfig, OutputFormat, OutputSpec, PredictorKind, SleConfig,
};
use crate::report::{Acceptance, ComparisonRow, Document, Z95};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

const DEFAULT_SEED: u64 = 0;
const DEFAULT_MC_TRIALS: u64 = 10_000;
const DEFAULT_SLE_TRACES: u64 = 1_000;

/// Dual closed-form routes agree far better than this; the slack covers
/// cancellation noise of the elliptic inversion near its window edges.
const EXACT_TOL: f64 = 1e-8;
/// Quadrature route of the rectangle law versus the hypergeometric one.
const RECT_ROUTE_TOL: f64 = 1e-6;
/// Compensated polynomial routes versus plain-f64 direct sums.
const ENUM_TOL: f64 = 1e-9;
/// Partition normalization: compensated sums land within an ulp of 1.
const NORMALIZATION_TOL: f64 = 1e-14;

const LONG_ABOUT: &str = "\
Crossing-probability laboratory: closed-form conformal predictions,
lattice Monte Carlo, exact small-graph enumeration and Loewner hitting
races, all reporting through one comparison table.

Every row pairs a prediction with an independently obtained value.
CSV column order is fixed:
  label,descriptor,predicted,measured,ci_low,ci_high,abs_error,within_ci
Floats carry 17 significant digits and round-trip exactly. Lines starting
with '#' hold run metadata (command, parameters, seeds). Evaluation-only
rows repeat the value in both the predicted and measured columns. JSON
output is one document {\"meta\": .., \"rows\": [..]} whose rows re-parse
into the same schema.

Exit codes: 0 every row check passed; 1 at least one row check failed;
2 configuration or usage error.

Worker precedence: --workers flag, then the PERCLAB_WORKERS environment
variable, then the config file, then 1. Estimates and output bytes are
identical for every worker count; only wall time changes.";

#[derive(Debug, Parser)]
#[command(name = "perclab", version, about = "Percolation crossing-probability laboratory", long_about = LONG_ABOUT)]
pub struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// JSON experiment config; its "kind" must match the subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed for sampled runs; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (flag > PERCLAB_WORKERS > config > 1).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Table format.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the closed-form crossing laws on grids, cross-checking
    /// each value through an independent derivation.
    Formula(FormulaArgs),
    /// Conformal conversions: aspect ratio, elliptic modulus,
    /// cross-ratio and the triangle coordinate.
    Geometry(GeometryArgs),
    /// Lattice Monte Carlo versus the continuum predictions.
    Mc(McArgs),
    /// Exact random-cluster enumeration on a small graph (<= 24 bonds).
    Enumerate(EnumerateArgs),
    /// Loewner hitting race versus the crossing formula.
    Sle(SleArgs),
    /// Pair a predictor with a measurer from a config file and gate the
    /// exit code on the agreement.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct FormulaArgs {
    /// Cross-ratio evaluation point (repeatable).
    #[arg(long)]
    eta: Vec<f64>,
    /// Cross-ratio grid START:STOP:STEP.
    #[arg(long, value_name = "A:B:STEP")]
    eta_grid: Option<crate::config::GridSpec>,
    /// Rectangle aspect ratio (repeatable).
    #[arg(long)]
    rect_r: Vec<f64>,
    /// Triangle boundary fraction (repeatable).
    #[arg(long)]
    carleson_x: Vec<f64>,
    /// Periodic-strip circumference/width ratio (repeatable).
    #[arg(long)]
    strip_ratio: Vec<f64>,
}

#[derive(Debug, Args)]
struct GeometryArgs {
    /// Rectangle aspect ratio (repeatable).
    #[arg(long)]
    r: Vec<f64>,
    /// Elliptic modulus in (0, 1) (repeatable).
    #[arg(long)]
    modulus: Vec<f64>,
    /// Triangle boundary fraction (repeatable).
    #[arg(long)]
    triangle_x: Vec<f64>,
}

#[derive(Debug, Args)]
struct McArgs {
    /// Lattice ensemble.
    #[arg(long, value_enum)]
    lattice: Option<KindArg>,
    /// Region shape.
    #[arg(long, value_enum)]
    shape: Option<ShapeArg>,
    /// Sites per row.
    #[arg(long)]
    nx: Option<u32>,
    /// Rows of sites.
    #[arg(long)]
    ny: Option<u32>,
    /// Occupation probability.
    #[arg(long)]
    p: Option<f64>,
    /// Number of sampled configurations.
    #[arg(short = 'n', long)]
    trials: Option<u64>,
    /// Separation query point on side BC (equilateral triangle only).
    #[arg(long)]
    smirnov_x: Option<f64>,
    /// Absolute tolerance replacing the confidence-interval check.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Debug, Args)]
struct EnumerateArgs {
    /// JSON graph file: {"n_sites", "bonds", "gamma1", "gamma2"}.
    #[arg(long, value_name = "PATH")]
    graph: Option<PathBuf>,
    /// Occupation probability.
    #[arg(long)]
    p: Option<f64>,
    /// Square-bond rectangle sites per row (with --ny).
    #[arg(long)]
    nx: Option<u32>,
    /// Square-bond rectangle rows of sites (with --nx).
    #[arg(long)]
    ny: Option<u32>,
}

#[derive(Debug, Args)]
struct SleArgs {
    /// Left boundary point -a, a > 0.
    #[arg(long)]
    a: Option<f64>,
    /// Right boundary point b > 0.
    #[arg(long)]
    b: Option<f64>,
    /// Number of traces.
    #[arg(short = 'n', long)]
    traces: Option<u64>,
    /// Driving variance rate (percolation value 6).
    #[arg(long)]
    kappa: Option<f64>,
    /// Base time step.
    #[arg(long)]
    dt0: Option<f64>,
    /// Swallow threshold on the gap.
    #[arg(long)]
    eps_swallow: Option<f64>,
    /// Time horizon; races still open here count as unresolved.
    #[arg(long)]
    t_max: Option<f64>,
    /// Adaptive step coefficient dt = c_gap * gap^2 / 2.
    #[arg(long)]
    c_gap: Option<f64>,
    /// Absolute tolerance replacing the confidence-interval check.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Absolute tolerance; takes precedence over the CI check.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Acceptance band width in estimated standard deviations.
    #[arg(long)]
    sigma_band: Option<f64>,
    /// Predicted-column source.
    #[arg(long, value_enum)]
    predictor: Option<PredictorArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    SquareBond,
    TriangularSite,
}

impl From<KindArg> for LatticeKind {
    fn from(k: KindArg) -> LatticeKind {
        match k {
            KindArg::SquareBond => LatticeKind::SquareBond,
            KindArg::TriangularSite => LatticeKind::TriangularSite,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ShapeArg {
    Rectangle,
    EquilateralTriangle,
    PeriodicStrip,
}

impl From<ShapeArg> for RegionShape {
    fn from(s: ShapeArg) -> RegionShape {
        match s {
            ShapeArg::Rectangle => RegionShape::Rectangle,
            ShapeArg::EquilateralTriangle => RegionShape::EquilateralTriangle,
            ShapeArg::PeriodicStrip => RegionShape::PeriodicStrip,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> OutputFormat {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PredictorArg {
    Formula,
    Enumeration,
}

impl From<PredictorArg> for PredictorKind {
    fn from(p: PredictorArg) -> PredictorKind {
        match p {
            PredictorArg::Formula => PredictorKind::Formula,
            PredictorArg::Enumeration => PredictorKind::Enumeration,
        }
    }
}

/// A finished run before rendering.
struct Built {
    command: &'static str,
    params: serde_json::Value,
    rows: Vec<ComparisonRow>,
    warnings: Vec<String>,
    output: Option<OutputSpec>,
}

/// Parse the process arguments, run, and return the exit code.
pub fn execute() -> i32 {
    let cli = Cli::parse();
    match run_cli(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            EXIT_CONFIG
        }
    }
}

/// Pull the matching config variant out, or fail on a kind mismatch.
macro_rules! expect_kind {
    ($file:expr, $variant:ident, $name:literal) => {
        match $file {
            None => None,
            Some(ExperimentConfig::$variant(c)) => Some(c),
            Some(other) => {
                return Err(format!(
                    "config kind \"{}\" does not match subcommand \"{}\"",
                    other.kind_name(),
                    $name
                ))
            }
        }
    };
}

fn run_cli(cli: Cli) -> Result<i32, String> {
    let Cli { global, command } = cli;
    let file_cfg = match &global.config {
        Some(path) => Some(load_config(path)?),
        None => None,
    };
    // Deterministic commands never consult the worker count, but a
    // malformed setting is still a config error, not something to
    // ignore silently.
    resolve_workers(global.workers, None)?;

    let built = match command {
        Command::Formula(args) => {
            let file = expect_kind!(file_cfg, Formula, "formula");
            build_formula(merged_formula(args, file))?
        }
        Command::Geometry(args) => {
            let file = expect_kind!(file_cfg, Geometry, "geometry");
            build_geometry(merged_geometry(args, file))?
        }
        Command::Mc(args) => {
            let file = expect_kind!(file_cfg, Mc, "mc");
            build_mc(merged_mc(args, file)?, global.seed, global.workers)?
        }
        Command::Enumerate(args) => {
            let file = expect_kind!(file_cfg, Enumerate, "enumerate");
            build_enumerate(merged_enumerate(args, file)?)?
        }
        Command::Sle(args) => {
            let file = expect_kind!(file_cfg, Sle, "sle");
            build_sle(merged_sle(args, file)?, global.seed, global.workers)?
        }
        Command::Compare(args) => {
            let file = expect_kind!(file_cfg, Compare, "compare")
                .ok_or("compare needs --config with a {\"kind\": \"compare\"} document")?;
            build_compare(file, args, global.seed, global.workers)?
        }
    };

    let (path, format) = resolve_output(global.out, global.format, built.output.as_ref());
    let mut doc = Document::new(built.command, built.params);
    doc.rows = built.rows;
    doc.write_to(path.as_deref(), format)
        .map_err(|e| format!("writing output: {e}"))?;
    for w in &built.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if doc.all_within() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

fn resolve_output(
    flag_out: Option<PathBuf>,
    flag_format: Option<FormatArg>,
    cfg: Option<&OutputSpec>,
) -> (Option<PathBuf>, OutputFormat) {
    let path = flag_out.or_else(|| cfg.and_then(|o| o.path.clone()));
    let format = flag_format
        .map(OutputFormat::from)
        .or_else(|| cfg.map(|o| o.format))
        .unwrap_or_default();
    (path, format)
}

/// Flag beats PERCLAB_WORKERS beats config beats 1.
fn resolve_workers(flag: Option<usize>, cfg: Option<usize>) -> Result<usize, String> {
    if let Some(w) = flag {
        return validate_workers(w, "--workers");
    }
    if let Some(text) = std::env::var_os("PERCLAB_WORKERS") {
        let text = text.to_string_lossy();
        let w: usize = text
            .trim()
            .parse()
            .map_err(|e| format!("PERCLAB_WORKERS={text:?} is not a worker count: {e}"))?;
        return validate_workers(w, "PERCLAB_WORKERS");
    }
    if let Some(w) = cfg {
        return validate_workers(w, "config workers");
    }
    Ok(1)
}

fn validate_workers(w: usize, source: &str) -> Result<usize, String> {
    if w == 0 {
        Err(format!("{source}: worker count must be >= 1"))
    } else {
        Ok(w)
    }
}

// ---------------------------------------------------------------------
// Flag / config merging. Command-line values win field by field; list
// flags replace the config list when non-empty.
// ---------------------------------------------------------------------

fn merged_formula(args: FormulaArgs, file: Option<FormulaConfig>) -> FormulaConfig {
    let mut cfg = file.unwrap_or_default();
    if !args.eta.is_empty() {
        cfg.eta = args.eta;
    }
    if args.eta_grid.is_some() {
        cfg.eta_grid = args.eta_grid;
    }
    if !args.rect_r.is_empty() {
        cfg.rect_r = args.rect_r;
    }
    if !args.carleson_x.is_empty() {
        cfg.carleson_x = args.carleson_x;
    }
    if !args.strip_ratio.is_empty() {
        cfg.strip_ratio = args.strip_ratio;
    }
    cfg
}

fn merged_geometry(args: GeometryArgs, file: Option<GeometryConfig>) -> GeometryConfig {
    let mut cfg = file.unwrap_or_default();
    if !args.r.is_empty() {
        cfg.r = args.r;
    }
    if !args.modulus.is_empty() {
        cfg.modulus = args.modulus;
    }
    if !args.triangle_x.is_empty() {
        cfg.triangle_x = args.triangle_x;
    }
    cfg
}

fn merged_mc(args: McArgs, file: Option<McConfig>) -> Result<McConfig, String> {
    let mut cfg = match file {
        Some(c) => c,
        None => {
            let (Some(kind), Some(shape), Some(nx), Some(ny), Some(p)) =
                (args.lattice, args.shape, args.nx, args.ny, args.p)
            else {
                return Err(
                    "mc without --config needs --lattice, --shape, --nx, --ny and --p".into(),
                );
            };
            McConfig {
                lattice: LatticeSpec {
                    kind: kind.into(),
                    shape: shape.into(),
                    nx,
                    ny,
                    p,
                    arcs: None,
                },
                smirnov_x: None,
                n_trials: None,
                master_seed: None,
                workers: None,
                tolerance: None,
                output: None,
            }
        }
    };
    if let Some(k) = args.lattice {
        cfg.lattice.kind = k.into();
    }
    if let Some(s) = args.shape {
        cfg.lattice.shape = s.into();
    }
    if let Some(v) = args.nx {
        cfg.lattice.nx = v;
    }
    if let Some(v) = args.ny {
        cfg.lattice.ny = v;
    }
    if let Some(v) = args.p {
        cfg.lattice.p = v;
    }
    if args.trials.is_some() {
        cfg.n_trials = args.trials;
    }
    if args.smirnov_x.is_some() {
        cfg.smirnov_x = args.smirnov_x;
    }
    if args.tolerance.is_some() {
        cfg.tolerance = args.tolerance;
    }
    Ok(cfg)
}

fn merged_enumerate(
    args: EnumerateArgs,
    file: Option<EnumerateConfig>,
) -> Result<EnumerateConfig, String> {
    let mut cfg = file.unwrap_or_default();
    if args.graph.is_some() {
        cfg.graph_path = args.graph;
    }
    if args.p.is_some() {
        cfg.p = args.p;
    }
    if args.nx.is_some() || args.ny.is_some() {
        let (Some(nx), Some(ny)) = (args.nx, args.ny) else {
            return Err("--nx and --ny go together".into());
        };
        let p = cfg
            .p
            .ok_or("enumerating a lattice rectangle needs --p as well")?;
        cfg.lattice = Some(LatticeSpec {
            kind: LatticeKind::SquareBond,
            shape: RegionShape::Rectangle,
            nx,
            ny,
            p,
            arcs: None,
        });
    }
    Ok(cfg)
}

fn merged_sle(args: SleArgs, file: Option<SleConfig>) -> Result<SleConfig, String> {
    let mut cfg = match file {
        Some(c) => c,
        None => {
            let (Some(a), Some(b)) = (args.a, args.b) else {
                return Err("sle without --config needs --a and --b".into());
            };
            SleConfig {
                a,
                b,
                params: None,
                n_traces: None,
                master_seed: None,
                workers: None,
                tolerance: None,
                output: None,
            }
        }
    };
    if let Some(a) = args.a {
        cfg.a = a;
    }
    if let Some(b) = args.b {
        cfg.b = b;
    }
    if args.traces.is_some() {
        cfg.n_traces = args.traces;
    }
    if args.tolerance.is_some() {
        cfg.tolerance = args.tolerance;
    }
    let has_param_flags = args.kappa.is_some()
        || args.dt0.is_some()
        || args.eps_swallow.is_some()
        || args.t_max.is_some()
        || args.c_gap.is_some();
    if has_param_flags {
        let mut p = cfg
            .params
            .unwrap_or_else(|| SleParams::defaults_for(cfg.a, cfg.b));
        if let Some(v) = args.kappa {
            p.kappa = v;
        }
        if let Some(v) = args.dt0 {
            p.dt0 = v;
        }
        if let Some(v) = args.eps_swallow {
            p.eps_swallow = v;
        }
        if let Some(v) = args.t_max {
            p.t_max = v;
        }
        if let Some(v) = args.c_gap {
            p.c_gap = v;
        }
        cfg.params = Some(p);
    }
    Ok(cfg)
}

// ---------------------------------------------------------------------
// Row builders.
// ---------------------------------------------------------------------

fn build_formula(cfg: FormulaConfig) -> Result<Built, String> {
    let mut etas = cfg.eta.clone();
    if let Some(grid) = &cfg.eta_grid {
        etas.extend(grid.values()?);
    }
    if etas.is_empty()
        && cfg.rect_r.is_empty()
        && cfg.carleson_x.is_empty()
        && cfg.strip_ratio.is_empty()
    {
        return Err(
            "formula: no evaluation points; pass --eta, --eta-grid, --rect-r, --carleson-x or --strip-ratio"
                .into(),
        );
    }

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &e in &etas {
        let eta = match CrossRatio::new(e) {
            Ok(eta) => eta,
            Err(err) => {
                warnings.push(format!("eta {e}: {err}"));
                continue;
            }
        };
        // Hypergeometric route against the incomplete-beta route.
        let beta = incomplete_beta_13(e).map_err(|err| format!("eta {e}: {err}"))?;
        rows.push(ComparisonRow::exact(
            "crossing_probability",
            e,
            crossing_probability(eta),
            beta,
            EXACT_TOL,
        ));
        match mean_crossing_number(eta) {
            // No second closed form exists for the mean: evaluation row.
            Ok(m) => rows.push(ComparisonRow::exact(
                "mean_crossing_clusters",
                e,
                m.value,
                m.value,
                EXACT_TOL,
            )),
            Err(err) => warnings.push(format!("mean at eta {e}: {err}")),
        }
    }

    for &r in &cfg.rect_r {
        if let Some(row) = rectangle_eta_row(r, &mut warnings) {
            rows.push(row);
        }
        // Dedekind-eta integral route against hypergeometric-of-elliptic.
        match (kleban_crossing(r), rectangle_eta(r)) {
            (Ok(integral), Ok(eta)) => rows.push(ComparisonRow::exact(
                "rectangle_crossing",
                r,
                integral,
                crossing_probability(eta),
                RECT_ROUTE_TOL,
            )),
            (Err(err), _) => warnings.push(format!("rect r {r}: {err}")),
            (_, Err(err)) => warnings.push(format!("rect r {r}: {err}")),
        }
    }

    for &x in &cfg.carleson_x {
        // The boundary law P = x against the crossing formula at the
        // triangle's cross-ratio.
        match (carleson_crossing(x), triangle_eta(x)) {
            (Ok(direct), Ok(eta)) => rows.push(ComparisonRow::exact(
                "triangle_boundary_crossing",
                x,
                direct,
                crossing_probability(eta),
                EXACT_TOL,
            )),
            (Err(err), _) => warnings.push(format!("carleson x {x}: {err}")),
            (_, Err(err)) => warnings.push(format!("carleson x {x}: {err}")),
        }
    }

    for &ratio in &cfg.strip_ratio {
        if !ratio.is_finite() || ratio < 0.0 {
            warnings.push(format!("strip ratio {ratio}: needs ratio >= 0"));
            continue;
        }
        // sqrt(3)/4 route against the Gamma-function form of 2 pi x'(1).
        let gamma_route = 2.0 * std::f64::consts::PI * x_prime_one_gamma_form() * ratio;
        rows.push(ComparisonRow::exact(
            "strip_mean_crossings",
            ratio,
            strip_mean_crossings(ratio),
            gamma_route,
            1e-10 * ratio.abs().max(1.0),
        ));
    }

    finish_grid_command(
        "formula",
        rows,
        warnings,
        cfg.output,
        json_points(&[
            ("eta", &etas),
            ("rect_r", &cfg.rect_r),
            ("carleson_x", &cfg.carleson_x),
            ("strip_ratio", &cfg.strip_ratio),
        ]),
    )
}

fn build_geometry(cfg: GeometryConfig) -> Result<Built, String> {
    if cfg.r.is_empty() && cfg.modulus.is_empty() && cfg.triangle_x.is_empty() {
        return Err("geometry: no evaluation points; pass --r, --modulus or --triangle-x".into());
    }
    let mut rows = Vec::new();
    let mut warnings = Vec::new();

    for &r in &cfg.r {
        if let Some(row) = rectangle_eta_row(r, &mut warnings) {
            rows.push(row);
        }
        match rectangle_from_aspect(r) {
            Ok(g) => {
                // k back out of eta by the exact algebraic inverse of
                // eta = ((1-k)/(1+k))^2.
                let s = g.eta.value().sqrt();
                rows.push(ComparisonRow::exact(
                    "rectangle_modulus",
                    r,
                    g.k,
                    (1.0 - s) / (1.0 + s),
                    EXACT_TOL,
                ));
            }
            Err(err) => warnings.push(format!("aspect r {r}: {err}")),
        }
    }

    for &k in &cfg.modulus {
        match rectangle_from_modulus(k) {
            Ok(g) => {
                rows.push(ComparisonRow::exact(
                    "aspect_from_modulus",
                    k,
                    g.r,
                    g.r,
                    0.0,
                ));
                match rectangle_from_aspect(g.r) {
                    Ok(back) => rows.push(ComparisonRow::exact(
                        "modulus_roundtrip",
                        k,
                        k,
                        back.k,
                        1e-7,
                    )),
                    Err(err) => warnings.push(format!("modulus {k}: inverting r = {}: {err}", g.r)),
                }
            }
            Err(err) => warnings.push(format!("modulus {k}: {err}")),
        }
    }

    for &x in &cfg.triangle_x {
        match (triangle_eta(x), triangle_eta(1.0 - x)) {
            (Ok(eta), Ok(dual)) => rows.push(ComparisonRow::exact(
                "triangle_eta",
                x,
                eta.value(),
                1.0 - dual.value(),
                EXACT_TOL,
            )),
            (Err(err), _) => warnings.push(format!("triangle x {x}: {err}")),
            (_, Err(err)) => warnings.push(format!("triangle x {x}: {err}")),
        }
    }

    finish_grid_command(
        "geometry",
        rows,
        warnings,
        cfg.output,
        json_points(&[
            ("r", &cfg.r),
            ("modulus", &cfg.modulus),
            ("triangle_x", &cfg.triangle_x),
        ]),
    )
}

/// eta(r) against the duality 1 - eta(1/r); falls back to an
/// evaluation-only row when 1/r leaves the invertible window.
fn rectangle_eta_row(r: f64, warnings: &mut Vec<String>) -> Option<ComparisonRow> {
    let eta = match rectangle_eta(r) {
        Ok(eta) => eta.value(),
        Err(err) => {
            warnings.push(format!("rect r {r}: {err}"));
            return None;
        }
    };
    match rectangle_eta(1.0 / r) {
        Ok(dual) => Some(ComparisonRow::exact(
            "rectangle_eta",
            r,
            eta,
            1.0 - dual.value(),
            EXACT_TOL,
        )),
        Err(_) => {
            warnings.push(format!(
                "rect r {r}: duality partner 1/r = {} is outside the invertible window; eta reported without a cross-check",
                1.0 / r
            ));
            Some(ComparisonRow::exact(
                "rectangle_eta",
                r,
                eta,
                eta,
                EXACT_TOL,
            ))
        }
    }
}

fn json_points(families: &[(&str, &Vec<f64>)]) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for (name, values) in families {
        map.insert((*name).to_string(), json!(values));
    }
    map.insert("deterministic".into(), json!(true));
    serde_json::Value::Object(map)
}

fn finish_grid_command(
    command: &'static str,
    rows: Vec<ComparisonRow>,
    warnings: Vec<String>,
    output: Option<OutputSpec>,
    params: serde_json::Value,
) -> Result<Built, String> {
    if rows.is_empty() {
        return Err(format!(
            "{command}: every evaluation point failed: {}",
            warnings.join("; ")
        ));
    }
    Ok(Built {
        command,
        params,
        rows,
        warnings,
        output,
    })
}

fn mean_ci(stats: &CrossingStats) -> (f64, f64) {
    (
        stats.mean_nc - Z95 * stats.se_nc,
        stats.mean_nc + Z95 * stats.se_nc,
    )
}

/// Shared by `mc` and `compare`: run the experiment and pair it with
/// the continuum predictions for the region shape.
fn mc_parts(
    cfg: &McConfig,
    seed_flag: Option<u64>,
    workers_flag: Option<usize>,
    acceptance_override: Option<Acceptance>,
) -> Result<(Vec<ComparisonRow>, serde_json::Value, Vec<String>), String> {
    let spec = &cfg.lattice;
    let n_trials = cfg.n_trials.unwrap_or(DEFAULT_MC_TRIALS);
    let seed = seed_flag.or(cfg.master_seed).unwrap_or(DEFAULT_SEED);
    let workers = resolve_workers(workers_flag, cfg.workers)?;
    let acceptance = acceptance_override.unwrap_or(match cfg.tolerance {
        Some(t) => Acceptance::Absolute(t),
        None => Acceptance::Interval,
    });
    let mut warnings = Vec::new();

    if spec.shape != RegionShape::EquilateralTriangle && cfg.smirnov_x.is_some() {
        return Err("--smirnov-x applies to the equilateral triangle only".into());
    }

    let (rows, extra) = match spec.shape {
        RegionShape::EquilateralTriangle => {
            let x = cfg.smirnov_x.ok_or(
                "triangle runs measure the separation observable; pass --smirnov-x in [0, 1]",
            )?;
            let est = smirnov_h(spec, x, n_trials, seed, workers).map_err(|e| e.to_string())?;
            let s = est.stats;
            // The boundary law P = x at the snapped query point.
            let row = ComparisonRow::new(
                "separation_crossing",
                est.x_snapped,
                est.x_snapped,
                s.p_hat,
                (s.p_ci_low, s.p_ci_high),
                acceptance,
            );
            (
                vec![row],
                json!({
                    "smirnov_x_requested": est.x_requested,
                    "smirnov_x_snapped": est.x_snapped,
                }),
            )
        }
        RegionShape::PeriodicStrip => {
            if spec.arcs.is_some() {
                return Err(
                    "custom arcs have no continuum prediction; use compare with predictor \"enumeration\""
                        .into(),
                );
            }
            let s = run_experiment(spec, n_trials, seed, workers).map_err(|e| e.to_string())?;
            let ratio = s
                .effective_aspect_ratio
                .ok_or("degenerate strip has no aspect ratio")?;
            let row = ComparisonRow::new(
                "mean_crossing_clusters",
                ratio,
                strip_mean_crossings(ratio),
                s.mean_nc,
                mean_ci(&s),
                acceptance,
            );
            (vec![row], json!({}))
        }
        RegionShape::Rectangle => {
            if spec.arcs.is_some() {
                return Err(
                    "custom arcs have no continuum prediction; use compare with predictor \"enumeration\""
                        .into(),
                );
            }
            let s = run_experiment(spec, n_trials, seed, workers).map_err(|e| e.to_string())?;
            let ratio = s
                .effective_aspect_ratio
                .ok_or("degenerate rectangle has no aspect ratio")?;
            let eta = rectangle_eta(ratio)
                .map_err(|e| format!("continuum prediction at aspect ratio {ratio}: {e}"))?;
            let mut rows = vec![ComparisonRow::new(
                "crossing_probability",
                ratio,
                crossing_probability(eta),
                s.p_hat,
                (s.p_ci_low, s.p_ci_high),
                acceptance,
            )];
            match mean_crossing_number(eta) {
                Ok(m) => rows.push(ComparisonRow::new(
                    "mean_crossing_clusters",
                    ratio,
                    m.value,
                    s.mean_nc,
                    mean_ci(&s),
                    acceptance,
                )),
                Err(err) => warnings.push(format!("mean prediction unavailable: {err}")),
            }
            (rows, json!({}))
        }
    };

    let mut params = json!({
        "lattice": spec,
        "n_trials": n_trials,
        "seed": seed,
    });
    if let Some(t) = cfg.tolerance {
        params["tolerance"] = json!(t);
    }
    merge_json(&mut params, extra);
    Ok((rows, params, warnings))
}

fn build_mc(
    cfg: McConfig,
    seed_flag: Option<u64>,
    workers_flag: Option<usize>,
) -> Result<Built, String> {
    let (rows, params, warnings) = mc_parts(&cfg, seed_flag, workers_flag, None)?;
    Ok(Built {
        command: "mc",
        params,
        rows,
        warnings,
        output: cfg.output,
    })
}

/// Shared by `sle` and `compare`.
fn sle_parts(
    cfg: &SleConfig,
    seed_flag: Option<u64>,
    workers_flag: Option<usize>,
    acceptance_override: Option<Acceptance>,
) -> Result<(Vec<ComparisonRow>, serde_json::Value, Vec<String>), String> {
    let n_traces = cfg.n_traces.unwrap_or(DEFAULT_SLE_TRACES);
    let seed = seed_flag.or(cfg.master_seed).unwrap_or(DEFAULT_SEED);
    let workers = resolve_workers(workers_flag, cfg.workers)?;
    let params = cfg
        .params
        .unwrap_or_else(|| SleParams::defaults_for(cfg.a, cfg.b));
    let acceptance = acceptance_override.unwrap_or(match cfg.tolerance {
        Some(t) => Acceptance::Absolute(t),
        None => Acceptance::Interval,
    });

    let stats = estimate_left_first(cfg.a, cfg.b, n_traces, &params, seed, workers)
        .map_err(|e| e.to_string())?;
    let eta = CrossRatio::new(stats.eta).map_err(|e| e.to_string())?;
    let row = ComparisonRow::new(
        "hitting_race",
        stats.eta,
        crossing_probability(eta),
        stats.p_hat,
        (stats.ci_low, stats.ci_high),
        acceptance,
    );

    let mut warnings = Vec::new();
    if stats.unresolved_warning {
        warnings.push(format!(
            "{:.2}% of traces still unresolved at t_max = {}; the estimate conditions on resolution — increase t_max (and lower c_gap) to shrink the bias",
            100.0 * stats.unresolved_fraction,
            params.t_max
        ));
    }

    let meta = json!({
        "a": cfg.a,
        "b": cfg.b,
        "eta": stats.eta,
        "n_traces": n_traces,
        "seed": seed,
        "params": params,
        "left_wins": stats.left_wins,
        "right_wins": stats.right_wins,
        "unresolved": stats.unresolved,
        "unresolved_fraction": stats.unresolved_fraction,
    });
    Ok((vec![row], meta, warnings))
}

fn build_sle(
    cfg: SleConfig,
    seed_flag: Option<u64>,
    workers_flag: Option<usize>,
) -> Result<Built, String> {
    let (rows, params, warnings) = sle_parts(&cfg, seed_flag, workers_flag, None)?;
    Ok(Built {
        command: "sle",
        params,
        rows,
        warnings,
        output: cfg.output,
    })
}

/// Resolve the enumeration target: exactly one of an inline graph, a
/// graph file, or a lattice block.
fn resolve_graph(cfg: &EnumerateConfig) -> Result<(SmallGraph, serde_json::Value), String> {
    let sources =
        cfg.graph.is_some() as u8 + cfg.graph_path.is_some() as u8 + cfg.lattice.is_some() as u8;
    if sources != 1 {
        return Err(
            "enumerate needs exactly one graph source: an inline \"graph\", a \"graph_path\" (--graph) or a \"lattice\" block (--nx/--ny)"
                .into(),
        );
    }
    if let Some(g) = &cfg.graph {
        return Ok((g.clone(), json!("inline")));
    }
    if let Some(path) = &cfg.graph_path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read graph {}: {e}", path.display()))?;
        let g: SmallGraph = serde_json::from_str(&text)
            .map_err(|e| format!("invalid graph {}: {e}", path.display()))?;
        return Ok((g, json!(path.display().to_string())));
    }
    let spec = cfg.lattice.as_ref().expect("counted above");
    let g = SmallGraph::from_lattice(spec).map_err(|e| e.to_string())?;
    Ok((g, json!({ "lattice": spec })))
}

fn enumerate_parts(
    cfg: &EnumerateConfig,
) -> Result<(Vec<ComparisonRow>, serde_json::Value), String> {
    let (graph, source) = resolve_graph(cfg)?;
    let p = cfg
        .p
        .or(cfg.lattice.as_ref().map(|l| l.p))
        .ok_or("enumerate needs an occupation probability (--p)")?;
    let pset = enumerate_partition_set(&graph, p).map_err(|e| e.to_string())?;
    let (direct_p, direct_mean) = direct_crossing_measures(&graph, p).map_err(|e| e.to_string())?;

    let mut rows = vec![
        // Polynomial routes against the independent direct sums.
        ComparisonRow::exact(
            "crossing_probability",
            p,
            crossing_prob_exact(&pset),
            direct_p,
            ENUM_TOL,
        ),
        ComparisonRow::exact(
            "mean_crossing_clusters",
            p,
            mean_crossing_exact(&pset),
            direct_mean,
            ENUM_TOL,
        ),
    ];
    for (name, poly) in [
        ("partition_normalization_ff", &pset.z_ff),
        ("partition_normalization_aa", &pset.z_aa),
        ("partition_normalization_af", &pset.z_af),
        ("partition_normalization_fa", &pset.z_fa),
    ] {
        rows.push(ComparisonRow::exact(
            name,
            p,
            1.0,
            poly.eval(1.0),
            NORMALIZATION_TOL,
        ));
    }

    let params = json!({
        "graph_source": source,
        "p": p,
        "n_sites": graph.n_sites,
        "n_bonds": graph.bonds.len(),
        "deterministic": true,
    });
    Ok((rows, params))
}

fn build_enumerate(cfg: EnumerateConfig) -> Result<Built, String> {
    let (rows, params) = enumerate_parts(&cfg)?;
    Ok(Built {
        command: "enumerate",
        params,
        rows,
        warnings: Vec::new(),
        output: cfg.output,
    })
}

fn build_compare(
    mut cfg: CompareConfig,
    args: CompareArgs,
    seed_flag: Option<u64>,
    workers_flag: Option<usize>,
) -> Result<Built, String> {
    if args.tolerance.is_some() {
        cfg.tolerance = args.tolerance;
    }
    if args.sigma_band.is_some() {
        cfg.sigma_band = args.sigma_band;
    }
    if let Some(p) = args.predictor {
        cfg.predictor = p.into();
    }
    let acceptance = match (cfg.tolerance, cfg.sigma_band) {
        (Some(t), _) => Some(Acceptance::Absolute(t)),
        (None, Some(s)) => Some(Acceptance::SigmaBand(s)),
        (None, None) => None,
    };

    let (rows, inner, warnings) = match (&cfg.measurer, cfg.predictor) {
        (MeasurerConfig::Mc(mc), PredictorKind::Formula) => {
            mc_parts(mc, seed_flag, workers_flag, acceptance)?
        }
        (MeasurerConfig::Sle(sle), PredictorKind::Formula) => {
            sle_parts(sle, seed_flag, workers_flag, acceptance)?
        }
        (MeasurerConfig::Mc(mc), PredictorKind::Enumeration) => {
            exact_vs_mc_parts(mc, seed_flag, workers_flag, acceptance)?
        }
        (MeasurerConfig::Enumerate(en), PredictorKind::Formula) => {
            let t = cfg.tolerance.ok_or(
                "comparing exact enumeration against continuum formulas needs an absolute \"tolerance\" (the finite-size offset is systematic, not statistical)",
            )?;
            formula_vs_exact_parts(en, t)?
        }
        (MeasurerConfig::Sle(_), PredictorKind::Enumeration) => {
            return Err("enumeration cannot predict a Loewner race".into())
        }
        (MeasurerConfig::Enumerate(_), PredictorKind::Enumeration) => {
            return Err("enumeration cannot serve as both predictor and measurer".into())
        }
    };

    let params = json!({
        "predictor": match cfg.predictor {
            PredictorKind::Formula => "formula",
            PredictorKind::Enumeration => "enumeration",
        },
        "tolerance": cfg.tolerance,
        "sigma_band": cfg.sigma_band,
        "measurer": inner,
    });
    Ok(Built {
        command: "compare",
        params,
        rows,
        warnings,
        output: cfg.output,
    })
}

/// Exact enumeration of the measurer's own lattice as the predictor;
/// the strongest available check because both sides share the topology.
fn exact_vs_mc_parts(
    mc: &McConfig,
    seed_flag: Option<u64>,
    workers_flag: Option<usize>,
    acceptance: Option<Acceptance>,
) -> Result<(Vec<ComparisonRow>, serde_json::Value, Vec<String>), String> {
    if mc.smirnov_x.is_some() {
        return Err("the enumeration predictor does not support the separation observable".into());
    }
    let spec = &mc.lattice;
    let graph = SmallGraph::from_lattice(spec).map_err(|e| e.to_string())?;
    let pset = enumerate_partition_set(&graph, spec.p).map_err(|e| e.to_string())?;
    let n_trials = mc.n_trials.unwrap_or(DEFAULT_MC_TRIALS);
    let seed = seed_flag.or(mc.master_seed).unwrap_or(DEFAULT_SEED);
    let workers = resolve_workers(workers_flag, mc.workers)?;
    let stats = run_experiment(spec, n_trials, seed, workers).map_err(|e| e.to_string())?;
    let acceptance = acceptance.unwrap_or(Acceptance::Interval);

    let rows = vec![
        ComparisonRow::new(
            "crossing_probability",
            spec.p,
            crossing_prob_exact(&pset),
            stats.p_hat,
            (stats.p_ci_low, stats.p_ci_high),
            acceptance,
        ),
        ComparisonRow::new(
            "mean_crossing_clusters",
            spec.p,
            mean_crossing_exact(&pset),
            stats.mean_nc,
            mean_ci(&stats),
            acceptance,
        ),
    ];
    let params = json!({
        "lattice": spec,
        "n_trials": n_trials,
        "seed": seed,
        "n_bonds": graph.bonds.len(),
    });
    Ok((rows, params, Vec::new()))
}

/// Continuum formulas as predictor against the exact finite-size values;
/// only meaningful with an absolute tolerance covering the systematic
/// finite-size offset.
fn formula_vs_exact_parts(
    en: &EnumerateConfig,
    tol: f64,
) -> Result<(Vec<ComparisonRow>, serde_json::Value, Vec<String>), String> {
    let spec = en
        .lattice
        .as_ref()
        .ok_or("continuum predictions need a \"lattice\" block; a bare graph has no geometry")?;
    if spec.shape != RegionShape::Rectangle || spec.arcs.is_some() {
        return Err(
            "continuum-versus-exact comparison supports default-arc rectangles only".into(),
        );
    }
    if spec.nx < 2 || spec.ny < 2 {
        return Err("rectangle needs nx, ny >= 2".into());
    }
    let graph = SmallGraph::from_lattice(spec).map_err(|e| e.to_string())?;
    let p = en.p.unwrap_or(spec.p);
    let pset = enumerate_partition_set(&graph, p).map_err(|e| e.to_string())?;
    let ratio = (spec.nx - 1) as f64 / (spec.ny - 1) as f64;
    let eta = rectangle_eta(ratio).map_err(|e| e.to_string())?;
    let mean = mean_crossing_number(eta).map_err(|e| e.to_string())?;

    let rows = vec![
        ComparisonRow::exact(
            "crossing_probability",
            ratio,
            crossing_probability(eta),
            crossing_prob_exact(&pset),
            tol,
        ),
        ComparisonRow::exact(
            "mean_crossing_clusters",
            ratio,
            mean.value,
            mean_crossing_exact(&pset),
            tol,
        ),
    ];
    let params = json!({
        "lattice": spec,
        "p": p,
        "n_bonds": graph.bonds.len(),
        "deterministic": true,
    });
    Ok((rows, params, Vec::new()))
}

fn merge_json(base: &mut serde_json::Value, extra: serde_json::Value) {
    if let (serde_json::Value::Object(base), serde_json::Value::Object(extra)) = (base, extra) {
        for (k, v) in extra {
            base.insert(k, v);
        }
    }
}
