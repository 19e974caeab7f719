//! Command-line front end. Every run produces a versioned JSON report and a
//! short human summary; the process exit code reflects the headline gate.
//!
//! Exit codes: 0 ok, 2 headline residual above its gate or a failed
//! mathematical precondition, 64 usage error (bad flags, missing input),
//! 65 malformed chart file.

use crate::chart::{ChartError, ChartFile, ConjugateChart, Grid};
use crate::curves::{honest_interval, orthogonal_split, shared_dimension, CurvePair, IntervalOptions};
use crate::deform::{integrate_immersion, verify_conditions, DeformationPackage, ImmersionOptions};
use crate::gallery;
use crate::gauss::GaussData;
use crate::moduli::{moduli_space, ModuliError, ModuliOptions};
use crate::sbrana::{trivial_holonomy, HolonomyOptions, SbranaHolonomy, TransportOptions};
use clap::{Parser, Subcommand};
use num_complex::Complex64 as C64;
use serde_json::{json, Value};
use std::ffi::OsString;
use std::path::PathBuf;

pub const SCHEMA: &str = "sbrana-report/1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_GATE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;

#[derive(Debug, Parser)]
#[command(name = "sbrana", version, about = "Conjugate charts, Sbrana holonomy and genuine deformations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Grid resolution per axis (curves: samples per window)
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Gate for the headline residual (curves: relative rank threshold)
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Jet order of the holonomy stack
    #[arg(long, global = true)]
    pub jet_order: Option<usize>,
    /// Base point in real parameters, comma separated
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub basepoint: Option<String>,
    /// Section value at the base point, comma separated (complex as `a+bi`)
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub phi: Option<String>,
    /// Pick the moduli representative of this index when --phi is absent
    #[arg(long, global = true)]
    pub mu: Option<usize>,
    /// Write the JSON report here instead of stdout
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for sampling
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Fiber point of the integrated section (immerse)
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub w0: Option<String>,
    /// CSV output of the sampled immersion (immerse)
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Check,
    Species,
    Moduli,
    Deform,
    Immerse,
    Curves,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Conjugation, integrability and immersion consistency of a chart
    Check { input: String },
    /// Trivial-holonomy kernel, species and genericity witness
    Species { input: String },
    /// Admissible deformation parameters and their indices
    Moduli { input: String },
    /// Compatibility conditions of a deformation package
    Deform { input: String },
    /// Integrate the deformed immersion and write it as CSV
    Immerse { input: String },
    /// Shared dimension, orthogonal splitting and honest interval of a curve pair
    Curves { input: String },
    /// List the built-in gallery
    Gallery,
}

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: CommandKind,
    /// file path or `gallery:<name>`
    pub input: String,
    pub grid: Option<usize>,
    pub tol: Option<f64>,
    pub jet_order: Option<usize>,
    pub basepoint: Option<Vec<f64>>,
    pub phi: Option<Vec<C64>>,
    pub mu: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub w0: Option<Vec<f64>>,
    pub csv: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: CommandKind, input: &str) -> RunConfig {
        RunConfig {
            command,
            input: input.to_string(),
            grid: None,
            tol: None,
            jet_order: None,
            basepoint: None,
            phi: None,
            mu: None,
            out: None,
            seed: 0,
            w0: None,
            csv: None,
        }
    }

    pub fn from_cli(cli: &Cli) -> Result<Option<RunConfig>, String> {
        let (command, input) = match &cli.command {
            Command::Check { input } => (CommandKind::Check, input),
            Command::Species { input } => (CommandKind::Species, input),
            Command::Moduli { input } => (CommandKind::Moduli, input),
            Command::Deform { input } => (CommandKind::Deform, input),
            Command::Immerse { input } => (CommandKind::Immerse, input),
            Command::Curves { input } => (CommandKind::Curves, input),
            Command::Gallery => return Ok(None),
        };
        let cfg = RunConfig {
            grid: cli.grid,
            tol: cli.tol,
            jet_order: cli.jet_order,
            basepoint: cli.basepoint.as_deref().map(parse_reals).transpose()?,
            phi: cli.phi.as_deref().map(parse_complex).transpose()?,
            mu: cli.mu,
            out: cli.out.clone(),
            seed: cli.seed,
            w0: cli.w0.as_deref().map(parse_reals).transpose()?,
            csv: cli.csv.clone(),
            ..RunConfig::new(command, input)
        };
        cfg.validate()?;
        Ok(Some(cfg))
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(t) = self.tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(format!("--tol must be positive, got {t}"));
            }
        }
        if let Some(j) = self.jet_order {
            if j < 2 {
                return Err(format!("--jet-order must be at least 2, got {j}"));
            }
        }
        if let Some(g) = self.grid {
            if g < 2 {
                return Err(format!("--grid must be at least 2, got {g}"));
            }
        }
        Ok(())
    }

    fn config_json(&self) -> Value {
        json!({
            "grid": self.grid,
            "tol": self.tol,
            "jet_order": self.jet_order,
            "basepoint": self.basepoint,
            "phi": self.phi.as_ref().map(|v| v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>()),
            "mu": self.mu,
            "seed": self.seed,
            "w0": self.w0,
        })
    }
}

fn parse_reals(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad number `{x}`: {e}")))
        .collect()
}

fn parse_complex(s: &str) -> Result<Vec<C64>, String> {
    s.split(',')
        .map(|x| x.trim().parse::<C64>().map_err(|e| format!("bad number `{x}`: {e:?}")))
        .collect()
}

/// Result of one command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub report: Value,
    pub summary: String,
    pub csv: Option<String>,
}

enum Failure {
    Usage(String),
    Data(String),
    /// failed mathematical precondition; optional failing table
    Gate(String, Option<String>),
}

impl From<ChartError> for Failure {
    fn from(e: ChartError) -> Failure {
        match e {
            ChartError::Io(m) => Failure::Usage(m),
            ChartError::Conjugation { ref table, .. } => Failure::Gate(e.to_string(), Some(table.clone())),
            ChartError::Parse { .. } | ChartError::Expr { .. } => Failure::Data(e.to_string()),
            other => Failure::Gate(other.to_string(), None),
        }
    }
}

fn gate<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Gate(e.to_string(), None)
}

struct Done {
    headline: (&'static str, f64, Option<f64>),
    result: Value,
    summary: Vec<String>,
    csv: Option<String>,
}

impl Done {
    fn passed(&self) -> bool {
        match self.headline.2 {
            Some(g) => self.headline.1 <= g,
            None => true,
        }
    }
}

fn chart_of(file: &ChartFile, cfg: &RunConfig) -> Result<ConjugateChart, Failure> {
    let mut chart = file
        .chart
        .clone()
        .ok_or_else(|| Failure::Usage(format!("{} has no chart section", cfg.input)))?;
    if let Some(n) = cfg.grid {
        chart.grid = chart.grid.with_resolution(n);
    }
    if let Some(b) = &cfg.basepoint {
        if b.len() != chart.dim() {
            return Err(Failure::Usage(format!("--basepoint needs {} values", chart.dim())));
        }
        chart.grid.base = b.clone();
    }
    Ok(chart)
}

fn holonomy(chart: &ConjugateChart, cfg: &RunConfig) -> Result<SbranaHolonomy, Failure> {
    let opts = HolonomyOptions {
        jet_order: cfg.jet_order,
        seed: cfg.seed,
        ..HolonomyOptions::default()
    };
    trivial_holonomy(chart, &chart.grid.base, &opts).map_err(gate)
}

fn cplx(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn run_check(file: &ChartFile, cfg: &RunConfig) -> Result<Done, Failure> {
    let chart = chart_of(file, cfg)?;
    chart.check_conjugation(1e-9)?;
    let tol = cfg.tol.unwrap_or(1e-8);
    let mut headline = 0.0f64;
    let mut summary = vec![format!("chart {} (p = {}, s = {})", chart.name, chart.p(), chart.s())];
    let integrability = if chart.has_christoffel_data() || chart.dim() >= 3 {
        let r = chart.integrability_on_grid()?;
        if !r.vacuous {
            headline = headline.max(r.max);
        }
        summary.push(if r.vacuous {
            "integrability: vacuous (p = 1)".into()
        } else {
            format!("integrability residual {:.3e}", r.max)
        });
        serde_json::to_value(&r).unwrap()
    } else {
        Value::Null
    };
    let geometric = if chart.immersion().is_some() {
        let r = chart.geometric_consistency(&chart.sample_points())?;
        headline = headline.max(r.max());
        summary.push(format!(
            "immersion: metric {:.3e}, norm {:.3e}, dmz {:.3e}",
            r.metric, r.norm, r.dmz
        ));
        serde_json::to_value(&r).unwrap()
    } else {
        Value::Null
    };
    let intersection = if chart.p() == 1 { chart.intersection_type_on_grid().ok() } else { None };
    if let Some(v) = intersection {
        summary.push(format!("intersection-type residual {v:.3e} (reported, not gated)"));
    }
    Ok(Done {
        headline: ("consistency_residual", headline, Some(tol)),
        result: json!({
            "conjugation": "ok",
            "integrability": integrability,
            "geometric": geometric,
            "intersection_type_residual": intersection,
            "grid_points": chart.grid.len(),
        }),
        summary,
        csv: None,
    })
}

fn holonomy_json(h: &SbranaHolonomy) -> Value {
    json!({
        "p": h.p,
        "basepoint": h.basepoint,
        "jet_order": h.jet_order,
        "kernel_dimension": h.kernel.len(),
        "species": h.species,
        "rank": h.rank,
        "stack_rank": h.stack_rank,
        "singular_values": h.singular_values,
        "threshold": h.threshold,
        "kernel": h.kernel.iter().map(|v| cplx(v)).collect::<Vec<_>>(),
        "real_kernel": h.real_kernel,
        "generic": h.generic,
        "witness": h.witness.as_ref().map(|v| cplx(v)),
        "witness_margin": h.witness_margin,
        "annihilation": h.annihilation,
        "stack_annihilation": h.stack_annihilation,
        "stabilization": h.stabilization,
        "cross_check": h.cross_check,
    })
}

fn run_species(file: &ChartFile, cfg: &RunConfig) -> Result<Done, Failure> {
    let chart = chart_of(file, cfg)?;
    let h = holonomy(&chart, cfg)?;
    Ok(Done {
        headline: ("stack_annihilation", h.stack_annihilation, Some(cfg.tol.unwrap_or(1e-8))),
        summary: vec![
            format!("chart {} (p = {})", chart.name, h.p),
            format!("kernel dimension k = {}, species {}", h.kernel.len(), h.species),
            format!("generic: {}, annihilation {:.3e}", h.generic, h.stack_annihilation),
        ],
        result: holonomy_json(&h),
        csv: None,
    })
}

fn run_moduli(file: &ChartFile, cfg: &RunConfig) -> Result<Done, Failure> {
    let chart = chart_of(file, cfg)?;
    let h = holonomy(&chart, cfg)?;
    let opts = ModuliOptions {
        seed: cfg.seed,
        ..ModuliOptions::default()
    };
    let mut summary = vec![format!("chart {} (p = {}), species {}", chart.name, h.p, h.species)];
    let moduli = match moduli_space(&chart, &h, &opts) {
        Ok(m) => {
            summary.push(format!(
                "moduli dimension {}, {} admissible of {} samples, U_0 buckets {}",
                m.dimension, m.admissible_samples, m.samples_drawn, m.u0_components
            ));
            for b in &m.buckets {
                summary.push(format!("  bucket {} mu={} count={}", b.signs, b.mu, b.count));
            }
            json!({ "empty": false, "description": m })
        }
        Err(ModuliError::EmptyModuli { samples }) => {
            summary.push(format!("moduli empty after {samples} samples"));
            json!({ "empty": true, "samples": samples })
        }
        Err(e) => return Err(gate(e)),
    };
    Ok(Done {
        headline: ("stack_annihilation", h.stack_annihilation, Some(cfg.tol.unwrap_or(1e-8))),
        result: json!({ "holonomy": holonomy_json(&h), "moduli": moduli }),
        summary,
        csv: None,
    })
}

/// Section value from --phi, or the first moduli representative of index --mu
/// (lowest index present by default).
fn choose_phi(chart: &ConjugateChart, cfg: &RunConfig) -> Result<Vec<C64>, Failure> {
    if let Some(phi) = &cfg.phi {
        if phi.len() != chart.dim() {
            return Err(Failure::Usage(format!("--phi needs {} values", chart.dim())));
        }
        return Ok(phi.clone());
    }
    let h = holonomy(chart, cfg)?;
    let opts = ModuliOptions {
        seed: cfg.seed,
        ..ModuliOptions::default()
    };
    let m = moduli_space(chart, &h, &opts).map_err(gate)?;
    let mut buckets: Vec<_> = m.buckets.iter().filter(|b| cfg.mu.is_none_or(|mu| b.mu == mu)).collect();
    buckets.sort_by_key(|b| b.mu);
    buckets
        .first()
        .and_then(|b| b.representatives.first())
        .map(|r| r.phi.clone())
        .ok_or_else(|| Failure::Gate(format!("no admissible representative with mu = {:?}", cfg.mu), None))
}

fn package(file: &ChartFile, cfg: &RunConfig) -> Result<(GaussData, DeformationPackage, Grid), Failure> {
    let chart = chart_of(file, cfg)?;
    let phi = choose_phi(&chart, cfg)?;
    let grid = chart.grid.clone();
    let pkg = DeformationPackage::build(&chart, &grid, &grid.base, &phi, &TransportOptions::default()).map_err(gate)?;
    let gd = GaussData::new(chart).map_err(gate)?;
    Ok((gd, pkg, grid))
}

fn run_deform(file: &ChartFile, cfg: &RunConfig) -> Result<Done, Failure> {
    let (gd, pkg, grid) = package(file, cfg)?;
    let rep = verify_conditions(&gd, &pkg).map_err(gate)?;
    let phi = pkg.phi(&grid.base_index()).to_vec();
    Ok(Done {
        headline: ("structural_residual", rep.structural_max(), Some(cfg.tol.unwrap_or(1e-7))),
        summary: vec![
            format!("chart {}, phi(base) = {:?}, mu = {}", gd.chart().name, cplx(&phi), pkg.mu),
            format!("structural residual {:.3e}, ricci {:.3e}", rep.structural_max(), rep.ricci),
        ],
        result: json!({
            "phi_base": cplx(&phi),
            "mu": pkg.mu,
            "grid_points": grid.len(),
            "section_sweep": pkg.field.sweep_residual,
            "conditions": rep,
        }),
        csv: None,
    })
}

fn run_immerse(file: &ChartFile, cfg: &RunConfig) -> Result<Done, Failure> {
    let (gd, pkg, grid) = package(file, cfg)?;
    let opts = ImmersionOptions {
        w0: cfg.w0.clone(),
        ..ImmersionOptions::default()
    };
    let imm = integrate_immersion(&gd, &pkg, &opts).map_err(gate)?;
    // w0 and one step along each fiber direction
    let mut fibers = vec![imm.w0.clone()];
    for a in 0..imm.w0.len() {
        let mut w = imm.w0.clone();
        w[a] += 0.25;
        fibers.push(w);
    }
    let r = &imm.residuals;
    Ok(Done {
        headline: ("pullback_residual", r.pullback, Some(cfg.tol.unwrap_or(1e-4))),
        summary: vec![
            format!(
                "chart {}, ambient dimension {}, signature {} (mu = {})",
                gd.chart().name,
                imm.ambient_dim,
                imm.signature,
                imm.mu
            ),
            format!(
                "pullback {:.3e}, sweep {:.3e}, flatness {:.3e}, normal {:.3e} on {} points",
                r.pullback,
                r.sweep,
                r.flatness,
                r.normal_metric,
                grid.len()
            ),
        ],
        result: json!({
            "ambient_dim": imm.ambient_dim,
            "mu": imm.mu,
            "signature": imm.signature,
            "w0": imm.w0,
            "grid_points": grid.len(),
            "residuals": imm.residuals,
            "conditions": imm.conditions,
        }),
        csv: Some(imm.csv(&fibers)),
    })
}

fn run_curves(file: &ChartFile, cfg: &RunConfig) -> Result<Done, Failure> {
    let section = file
        .curves
        .as_ref()
        .ok_or_else(|| Failure::Usage(format!("{} has no curves section", cfg.input)))?;
    let pair = CurvePair::from_section(section).map_err(|e| Failure::Data(e.to_string()))?;
    let samples = cfg.grid.unwrap_or(64);
    let rel_tol = cfg.tol.unwrap_or(1e-8);
    let sd = shared_dimension(&pair, samples, rel_tol).map_err(gate)?;
    let mut summary = vec![format!(
        "shared dimension I = {} on windows {:?} x {:?} ({samples} samples)",
        sd.dimension, sd.window1, sd.window2
    )];
    let split = match orthogonal_split(&pair, samples, rel_tol) {
        Ok(s) => {
            summary.push(format!(
                "split: dim V1 = {}, dim V2 = {}, l = {}",
                s.v1.len(),
                s.v2.len(),
                s.l
            ));
            json!({ "ok": true, "split": s })
        }
        Err(e) => {
            summary.push(format!("split: {e}"));
            json!({ "ok": false, "error": e.to_string() })
        }
    };
    let opts = IntervalOptions {
        samples,
        rel_tol,
        ..IntervalOptions::default()
    };
    let interval = match honest_interval(&pair, &opts) {
        Ok(h) => {
            summary.push(format!("honest interval ({:.9}, {:.9})", h.lower, h.upper));
            json!({ "ok": true, "interval": h })
        }
        Err(e) => {
            summary.push(format!("honest interval: {e}"));
            json!({ "ok": false, "error": e.to_string() })
        }
    };
    Ok(Done {
        headline: ("shared_dimension", sd.dimension as f64, None),
        result: json!({ "shared_dimension": sd, "split": split, "honest_interval": interval }),
        summary,
        csv: None,
    })
}

fn command_name(c: CommandKind) -> &'static str {
    match c {
        CommandKind::Check => "check",
        CommandKind::Species => "species",
        CommandKind::Moduli => "moduli",
        CommandKind::Deform => "deform",
        CommandKind::Immerse => "immerse",
        CommandKind::Curves => "curves",
    }
}

/// Runs one command. Never panics on bad input; the outcome always carries a report.
pub fn run(cfg: &RunConfig) -> Outcome {
    let name = command_name(cfg.command);
    let res = cfg.validate().map_err(Failure::Usage).and_then(|_| {
        let file = gallery::open(&cfg.input)?;
        match cfg.command {
            CommandKind::Check => run_check(&file, cfg),
            CommandKind::Species => run_species(&file, cfg),
            CommandKind::Moduli => run_moduli(&file, cfg),
            CommandKind::Deform => run_deform(&file, cfg),
            CommandKind::Immerse => run_immerse(&file, cfg),
            CommandKind::Curves => run_curves(&file, cfg),
        }
    });
    let mut report = json!({
        "schema": SCHEMA,
        "command": name,
        "input": cfg.input,
        "config": cfg.config_json(),
    });
    let obj = report.as_object_mut().unwrap();
    match res {
        Ok(done) => {
            let passed = done.passed();
            let code = if passed { EXIT_OK } else { EXIT_GATE };
            let (hname, value, g) = done.headline;
            obj.insert("status".into(), json!(if passed { "ok" } else { "gate-exceeded" }));
            obj.insert("exit_code".into(), json!(code));
            obj.insert("headline".into(), json!({ "name": hname, "value": value, "gate": g }));
            obj.insert("result".into(), done.result);
            let mut summary = done.summary;
            summary.push(match g {
                Some(g) => format!(
                    "{name}: {hname} = {value:.3e} (gate {g:.1e}) -> {}",
                    if passed { "ok" } else { "FAIL" }
                ),
                None => format!("{name}: {hname} = {value}"),
            });
            Outcome {
                code,
                report,
                summary: summary.join("\n"),
                csv: done.csv,
            }
        }
        Err(f) => {
            let (code, status, msg, table) = match f {
                Failure::Usage(m) => (EXIT_USAGE, "usage-error", m, None),
                Failure::Data(m) => (EXIT_DATA, "data-error", m, None),
                Failure::Gate(m, t) => (EXIT_GATE, "failed", m, t),
            };
            obj.insert("status".into(), json!(status));
            obj.insert("exit_code".into(), json!(code));
            obj.insert("error".into(), json!(msg));
            obj.insert("failing_table".into(), json!(table));
            Outcome {
                code,
                report,
                summary: format!("{name}: {status}: {msg}"),
                csv: None,
            }
        }
    }
}

/// Report serialization used for files and stdout.
pub fn render(report: &Value) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report is serializable");
    s.push('\n');
    s
}

fn gallery_listing() -> String {
    let mut s = String::new();
    for name in gallery::names() {
        let file = gallery::load(name).expect("gallery entries parse");
        let kind = match (&file.chart, &file.curves) {
            (Some(c), _) => format!("chart, p = {}", c.p()),
            (None, Some(_)) => "curve pair".to_string(),
            (None, None) => "empty".to_string(),
        };
        s.push_str(&format!("gallery:{name}  ({kind})\n"));
    }
    s
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match RunConfig::from_cli(&cli) {
        Ok(Some(c)) => c,
        Ok(None) => {
            print!("{}", gallery_listing());
            return EXIT_OK;
        }
        Err(m) => {
            eprintln!("error: {m}");
            return EXIT_USAGE;
        }
    };
    let outcome = run(&cfg);
    let text = render(&outcome.report);
    match &cfg.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("error: writing {}: {e}", path.display());
                return EXIT_USAGE;
            }
        }
        None => print!("{text}"),
    }
    if let Some(csv) = &outcome.csv {
        let path = cfg
            .csv
            .clone()
            .or_else(|| cfg.out.as_ref().map(|p| p.with_extension("csv")));
        if let Some(path) = path {
            if let Err(e) = std::fs::write(&path, csv) {
                eprintln!("error: writing {}: {e}", path.display());
                return EXIT_USAGE;
            }
        }
    }
    eprintln!("{}", outcome.summary);
    outcome.code
}
