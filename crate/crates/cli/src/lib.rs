//! Command-line driver: rate studies, cell problems, smoothing and strip
//! suites, and coefficient audits.

pub mod report;

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use oscille_core::cell::{closed_form_1d_effective, effective_tensor, solve_cell};
use oscille_core::field::{audit_ellipticity, preset_coefficient, Preset};
use oscille_core::mesh::{build_cell_mesh, build_domain_mesh};
use oscille_core::norms::{lp, strip_lemma_check};
use oscille_core::smoothing::{smoothing_lemma_suite, Sample};
use oscille_core::study::run_study;
use oscille_core::{Error, GridFunction, Scenario};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "oscille", version, about = "Homogenization rate studies for locally periodic elliptic problems")]
pub struct Cli {
    /// Worker threads (defaults to the number of logical cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Largest admissible mesh node count (sets OSCILLE_NODE_CAP).
    #[arg(long, global = true)]
    pub node_cap: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an ε-sweep and write rates.csv, summary.txt and plots.
    Study(StudyArgs),
    /// Solve one cell problem and print the effective tensor.
    Cell(CellArgs),
    /// Check the smoothing-operator estimates on standard samples.
    SuiteSmoothing(SuiteArgs),
    /// Check the boundary-strip estimate on sin(πx) samples.
    SuiteStrip(SuiteArgs),
    /// Sample a coefficient field against its certified bounds.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Also write one SVG log-log plot per target.
    #[arg(long)]
    pub plot: bool,
    /// Override the ε list, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    /// Override the points per period.
    #[arg(long)]
    pub ppp: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CellArgs {
    #[arg(long)]
    pub preset: String,
    /// Preset parameters, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Vec<f64>,
    /// Cell mesh subdivisions per axis.
    #[arg(long, default_value_t = 64)]
    pub m: usize,
    /// Dimension; inferred from the preset when omitted.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Slow variable, comma separated (domain centre by default).
    #[arg(long, value_delimiter = ',')]
    pub x: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Integrability exponent.
    #[arg(long, default_value_t = 2.0)]
    pub q: f64,
    /// Mesh spacing (1/1024 in 1D and 1/256 in 2D by default).
    #[arg(long)]
    pub h: Option<f64>,
    /// Scales to sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Scenario file whose field is audited.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long, requires = "params")]
    pub preset: Option<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Option<Vec<f64>>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Exit code for a failed run: configuration problems map to 2, numerical
/// and IO failures to 3, audit violations to 1.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::UnknownPreset(_)
            | Error::InvalidParams { .. }
            | Error::InvalidScenario(_)
            | Error::InvalidArgument(_)
            | Error::DimensionMismatch { .. }
            | Error::ExcessiveSize { .. },
        ) => EXIT_USAGE,
        Some(Error::AuditViolation { .. }) => EXIT_FAIL,
        Some(_) => EXIT_NUMERICAL,
        None if err.downcast_ref::<UsageError>().is_some() => EXIT_USAGE,
        None => EXIT_NUMERICAL,
    }
}

/// A configuration problem detected by the driver itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Runs a parsed command and returns the exit code for a completed run.
pub fn run(cli: Cli) -> Result<u8> {
    if let Some(cap) = cli.node_cap {
        std::env::set_var("OSCILLE_NODE_CAP", cap.to_string());
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Study(a) => study(a),
        Command::Cell(a) => cell(a),
        Command::SuiteSmoothing(a) => suite_smoothing(a),
        Command::SuiteStrip(a) => suite_strip(a),
        Command::Audit(a) => audit(a),
    }
}

fn load_scenario(path: &PathBuf) -> Result<Scenario> {
    let sc = parse_scenario(path)?;
    sc.validate()?;
    Ok(sc)
}

/// Parses without validating, so command-line overrides can still repair
/// the sweep parameters.
fn parse_scenario(path: &PathBuf) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| UsageError(format!("reading {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text).map_err(|e| Error::InvalidScenario(e.to_string()))?)
}

fn study(a: StudyArgs) -> Result<u8> {
    let mut sc = parse_scenario(&a.config)?;
    if let Some(eps) = a.eps {
        sc.epsilons = eps;
    }
    if let Some(ppp) = a.ppp {
        sc.points_per_period = ppp;
    }
    sc.validate()?;
    let rep = run_study(&sc)?;
    let files = report::write_report(&rep, &a.out, a.plot)?;
    print!("{}", report::summary(&rep));
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(if rep.all_pass() { EXIT_PASS } else { EXIT_FAIL })
}

fn parse_preset(name: &str) -> Result<Preset> {
    Ok(name.parse::<Preset>()?)
}

fn default_dim(preset: Preset) -> usize {
    match preset {
        Preset::Sine1D | Preset::LocallyPeriodic1D | Preset::Constant => 1,
        _ => 2,
    }
}

fn cell(a: CellArgs) -> Result<u8> {
    let preset = parse_preset(&a.preset)?;
    let dim = a.dim.unwrap_or(default_dim(preset));
    let field = preset_coefficient(preset, &a.params, dim)?;
    let mut x = [0.5, if dim == 2 { 0.5 } else { 0.0 }];
    if let Some(v) = a.x {
        if v.len() != dim {
            bail!(UsageError(format!("--x needs {dim} coordinates")));
        }
        x[..dim].copy_from_slice(&v);
    }
    let mesh = build_cell_mesh(a.m, dim)?;
    let sol = solve_cell(&field, x, &mesh)?;
    let t = effective_tensor(&field, x, &mesh)?;
    println!("{} {:?} at x = {:?}, m = {}", preset, a.params, &x[..dim], a.m);
    for row in t.iter().take(dim) {
        let cells: Vec<String> = row[..dim].iter().map(|v| format!("{v:.8}")).collect();
        println!("A0 = [{}]", cells.join(", "));
    }
    if dim == 1 {
        println!("harmonic mean = {:.8}", closed_form_1d_effective(&field, x)?);
    }
    let norms: Vec<String> = sol.columns().iter().map(|c| lp(c, 2.0).map(|v| format!("{v:.3e}"))).collect::<oscille_core::Result<_>>()?;
    println!("||N_k||_2 = [{}], max |mean N_k| = {:.1e}, iterations = {}", norms.join(", "), sol.max_mean(), sol.stats().iterations);
    Ok(EXIT_PASS)
}

fn suite_mesh_h(a: &SuiteArgs) -> Result<f64> {
    if a.dim != 1 && a.dim != 2 {
        bail!(UsageError(format!("--dim must be 1 or 2, got {}", a.dim)));
    }
    Ok(a.h.unwrap_or(if a.dim == 1 { 1.0 / 1024.0 } else { 1.0 / 256.0 }))
}

fn suite_smoothing(a: SuiteArgs) -> Result<u8> {
    let h = suite_mesh_h(&a)?;
    let eps = a.eps.clone().unwrap_or_else(|| vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]);
    let samples = [Sample::smooth(a.dim), Sample::hat(a.dim), Sample::holder_half(a.dim), Sample::separable(a.dim)];
    let rep = smoothing_lemma_suite(&samples, &eps, &eps, a.q, h)?;
    println!("{:<24} {:<12} {:>12} {:>10} {:>8}", "estimate", "sample", "sup ratio", "growth", "flag");
    for s in &rep.series {
        println!(
            "{:<24} {:<12} {:>12.5e} {:>10.4} {:>8}",
            format!("{:?}", s.lemma),
            s.sample,
            s.sup_ratio,
            s.max_growth,
            if s.flagged { "FLAG" } else { "ok" }
        );
    }
    Ok(if rep.flagged().is_empty() { EXIT_PASS } else { EXIT_FAIL })
}

fn suite_strip(a: SuiteArgs) -> Result<u8> {
    let h = suite_mesh_h(&a)?;
    let eps = a.eps.clone().unwrap_or_else(|| (3..=7).map(|k| 2f64.powi(-k)).collect());
    let extents = vec![(0.0, 1.0); a.dim];
    let mesh = build_domain_mesh(&extents, h)?;
    let dim = a.dim;
    let u = GridFunction::from_fn(mesh, |x| {
        let s = (std::f64::consts::PI * x[0]).sin();
        if dim == 2 {
            s * (std::f64::consts::PI * x[1]).sin()
        } else {
            s
        }
    });
    let table = strip_lemma_check(&u, a.q, &eps)?;
    println!("{:>12} {:>14} {:>14} {:>10}", "eps", "strip", "predictor", "ratio");
    for r in &table.rows {
        println!("{:>12.6e} {:>14.6e} {:>14.6e} {:>10.5}", r.eps, r.strip, r.predictor, r.ratio);
    }
    println!("spread = {:.4}", table.spread);
    Ok(if table.spread <= 2.0 { EXIT_PASS } else { EXIT_FAIL })
}

fn audit(a: AuditArgs) -> Result<u8> {
    let field = match (&a.config, &a.preset) {
        (Some(path), _) => load_scenario(path)?.field,
        (None, Some(name)) => {
            let preset = parse_preset(name)?;
            let params = a.params.clone().unwrap_or_default();
            preset_coefficient(preset, &params, a.dim.unwrap_or(default_dim(preset)))?
        }
        (None, None) => bail!(UsageError("audit needs --config or --preset".into())),
    };
    let rep = audit_ellipticity(&field, a.samples, a.seed)?;
    println!(
        "{} samples: eigenvalues in [{:.6}, {:.6}] (certified [{:.6}, {:.6}]), Lipschitz estimate {:.6} (certified {:.6})",
        rep.samples,
        rep.min_eig,
        rep.max_eig,
        field.c_a(),
        field.norm_inf(),
        rep.lipschitz_estimate,
        field.lipschitz_x()
    );
    Ok(EXIT_PASS)
}
