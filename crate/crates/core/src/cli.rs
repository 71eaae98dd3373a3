//! Batch front end: run configs, pipelines, exports and exit codes.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use crate::corrector::epsilon_sweep;
use crate::effective::{homogenize, CrossCheck, HomogenizationResult, Provenance};
use crate::error::Error;
use crate::geometry::CellGeometry;
use crate::io::{ensure_dir, load_material, write_field_dump, write_json, GeometryConfig};
use crate::macrodns::{solve_dns, solve_macro, BodyForce, DnsProblem, MacroProblem, SolveDiagnostics, SolveOptions};
use crate::tensors::{is_positive, Diagnostics, EffectiveTensors, MaterialField, MaterialTensors};

pub const THREADS_ENV: &str = "PIEZOCELL_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Homogenize,
    Macro,
    Dns,
    Sweep,
    Validate,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Homogenize => "homogenize",
            Mode::Macro => "macro",
            Mode::Dns => "dns",
            Mode::Sweep => "sweep",
            Mode::Validate => "validate",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Parser)]
#[command(name = "piezocell", version, about = "Periodic homogenization of perforated piezoelectric media")]
pub struct Args {
    #[arg(value_enum)]
    pub mode: Mode,
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the `out` entry of the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; falls back to PIEZOCELL_THREADS.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Second phase of a two-phase laminate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaminateConfig {
    pub second: PathBuf,
    /// Zero-based lamination axis.
    pub axis: usize,
    /// Share of the first phase along `axis`.
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub solver_rtol: f64,
    pub cell_residual: f64,
    pub symmetry: f64,
    pub coupling: f64,
    pub energy: f64,
    pub identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            solver_rtol: 1e-9,
            cell_residual: 1e-9,
            symmetry: 1e-8,
            coupling: 1e-8,
            energy: 1e-8,
            identity: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; must agree with the mode given on the command line.
    #[serde(default)]
    pub mode: Option<Mode>,
    pub geometry: GeometryConfig,
    /// Material file, relative to the config file.
    pub material: PathBuf,
    #[serde(default)]
    pub laminate: Option<LaminateConfig>,
    /// Grid of the macro problem (mode `macro`).
    #[serde(default)]
    pub macro_resolution: Option<usize>,
    /// Scale of the direct simulation (mode `dns`).
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Decreasing scales of the sweep (mode `sweep`).
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_body_force")]
    pub body_force: [f64; 3],
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_body_force() -> [f64; 3] {
    [0.0, 0.0, -1.0]
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ConfigError = 2,
    ComputeError = 3,
    ValidationFailure = 4,
}

#[derive(Debug)]
pub enum RunError {
    Config(Error),
    Compute(Error),
    Validation(String),
}

impl RunError {
    pub fn status(&self) -> ExitStatus {
        match self {
            RunError::Config(_) => ExitStatus::ConfigError,
            RunError::Compute(_) => ExitStatus::ComputeError,
            RunError::Validation(_) => ExitStatus::ValidationFailure,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "ConfigError: {e}"),
            RunError::Compute(e) => write!(f, "ComputeError: {}: {e}", error_name(e)),
            RunError::Validation(msg) => write!(f, "ValidationFailure: {msg}"),
        }
    }
}

fn error_name(e: &Error) -> &'static str {
    match e {
        Error::NonSymmetricVoigt(_) => "NonSymmetricVoigt",
        Error::NonSymmetricDielectric(_) => "NonSymmetricDielectric",
        Error::InvalidHole(_) => "InvalidHole",
        Error::InvalidResolution(_) => "InvalidResolution",
        Error::AllVoid => "AllVoid",
        Error::DisconnectedGeometry => "DisconnectedGeometry",
        Error::NonPositiveBlock { .. } => "NonPositiveBlock",
        Error::SolverBreakdown { .. } => "SolverBreakdown",
        Error::VoidPoint(_) => "VoidPoint",
        Error::ShapeMismatch(_) => "ShapeMismatch",
        Error::CertificateFailure(_) => "CertificateFailure",
        Error::HoleTouchesBoundary => "HoleTouchesBoundary",
        Error::InvalidEpsilon(_) => "InvalidEpsilon",
        Error::GridMismatch(_) => "GridMismatch",
        Error::Config(_) => "ConfigError",
        Error::Io(_) => "Io",
        Error::Json(_) => "Json",
    }
}

/// Input errors map to exit 2, everything raised by the pipeline to exit 3.
fn classify(e: Error) -> RunError {
    match e {
        Error::Config(_)
        | Error::Json(_)
        | Error::InvalidHole(_)
        | Error::InvalidResolution(_)
        | Error::InvalidEpsilon(_)
        | Error::NonSymmetricVoigt(_)
        | Error::NonSymmetricDielectric(_) => RunError::Config(e),
        other => RunError::Compute(other),
    }
}

fn config_err(msg: impl Into<String>) -> RunError {
    RunError::Config(Error::Config(msg.into()))
}

pub fn load_config(path: &Path) -> Result<RunConfig, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("malformed config {}: {e}", path.display())))
}

impl RunConfig {
    /// Checks mode-required fields and tolerance signs.
    pub fn check(&self, mode: Mode) -> Result<(), RunError> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(config_err(format!("config is for mode {m}, command line asks for {mode}")));
            }
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("solver_rtol", t.solver_rtol),
            ("cell_residual", t.cell_residual),
            ("symmetry", t.symmetry),
            ("coupling", t.coupling),
            ("energy", t.energy),
            ("identity", t.identity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        if self.body_force.iter().any(|v| !v.is_finite()) {
            return Err(config_err("body_force must be finite"));
        }
        if let Some(l) = &self.laminate {
            if l.axis > 2 || !(l.fraction > 0.0 && l.fraction < 1.0) {
                return Err(config_err("laminate needs axis in 0..=2 and fraction in (0, 1)"));
            }
        }
        match mode {
            Mode::Macro if self.macro_resolution.is_none() => Err(config_err("mode macro requires macro_resolution")),
            Mode::Dns if self.epsilon.is_none() => Err(config_err("mode dns requires epsilon")),
            Mode::Sweep if self.epsilons.is_empty() => Err(config_err("mode sweep requires a non-empty epsilons list")),
            _ => Ok(()),
        }
    }

    fn material_field(&self, base: &Path, n: usize) -> Result<MaterialField, RunError> {
        let first = load_material(&base.join(&self.material)).map_err(classify)?;
        match &self.laminate {
            None => Ok(first.into()),
            Some(l) => {
                let second = load_material(&base.join(&l.second)).map_err(classify)?;
                Ok(MaterialField::laminate(n, l.axis, l.fraction, first, second))
            }
        }
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            rtol: self.tolerances.solver_rtol,
            ..SolveOptions::default()
        }
    }
}

#[derive(Debug, Serialize)]
struct TensorExport {
    c_h_voigt: [[f64; 6]; 6],
    e_h_voigt: [[f64; 6]; 3],
    f_h_voigt: [[f64; 6]; 3],
    d_h: [[f64; 3]; 3],
    theta: f64,
    diagnostics: Diagnostics,
    cross_check: CrossCheck,
    provenance: Provenance,
}

impl From<&HomogenizationResult> for TensorExport {
    fn from(r: &HomogenizationResult) -> Self {
        Self {
            c_h_voigt: r.tensors.c_h_voigt(),
            e_h_voigt: EffectiveTensors::third_order_voigt(&r.tensors.e_h),
            f_h_voigt: EffectiveTensors::third_order_voigt(&r.tensors.f_h),
            d_h: r.tensors.d_h,
            theta: r.theta,
            diagnostics: r.tensors.diagnostics,
            cross_check: r.method_cross_check,
            provenance: r.provenance.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
struct FieldExport<'a> {
    grid: usize,
    epsilon: Option<f64>,
    body_force: [f64; 3],
    integral_u: [f64; 3],
    dump: &'a str,
    diagnostics: SolveDiagnostics,
    homogenization: Option<TensorExport>,
}

/// One named check of the validation suite.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `"<="` for defects, `">"` for positivity.
    pub relation: String,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            relation: "<=".into(),
            passed: value <= tolerance,
        }
    }

    fn positive(name: &str, value: f64, trace: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: 0.0,
            relation: ">".into(),
            passed: is_positive(value, trace),
        }
    }

    fn line(&self) -> String {
        format!(
            "{} {}: {:.3e} {} {:e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.relation,
            self.tolerance
        )
    }
}

#[derive(Debug, Serialize)]
struct ValidationExport {
    passed: bool,
    checks: Vec<Check>,
    tensors: TensorExport,
}

fn max_abs_diff(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> (f64, f64) {
    a.zip(b).fold((0.0f64, 0.0f64), |(d, s), (x, y)| (d.max((x - y).abs()), s.max(y.abs())))
}

/// Largest entrywise deviation of the four effective tensors of a full cell
/// from the phase tensors, relative to the largest phase entry.
pub fn identity_defect(t: &EffectiveTensors, m: &MaterialTensors) -> f64 {
    let c = m.c.to_full();
    let e = m.e.to_full();
    let d = m.d.to_matrix();
    let flat4 = |x: &[[[[f64; 3]; 3]; 3]; 3]| x.iter().flatten().flatten().flatten().copied().collect::<Vec<_>>();
    let flat3 = |x: &[[[f64; 3]; 3]; 3]| x.iter().flatten().flatten().copied().collect::<Vec<_>>();
    let got: Vec<f64> = [flat4(&t.c_h), flat3(&t.e_h), flat3(&t.f_h), d_flat(&t.d_h)].concat();
    let want: Vec<f64> = [flat4(&c), flat3(&e), flat3(&e), d_flat(&d)].concat();
    let (diff, scale) = max_abs_diff(got.into_iter(), want.into_iter());
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn d_flat(d: &[[f64; 3]; 3]) -> Vec<f64> {
    d.iter().flatten().copied().collect()
}

/// The invariant suite on a homogenization result plus the no-hole identity.
pub fn validation_checks(r: &HomogenizationResult, identity: f64, tol: &Tolerances) -> Vec<Check> {
    let d = &r.tensors.diagnostics;
    let sym = r.tensors.symmetrized_material();
    let max_cell = r.provenance.max_cell_residual;
    vec![
        Check::at_most("cell residual", max_cell, tol.cell_residual),
        Check::at_most("cH major symmetry defect", d.c_h_major_symmetry_defect, tol.symmetry),
        Check::at_most("dH symmetry defect", d.d_h_symmetry_defect, tol.symmetry),
        Check::at_most("eH=fH defect", d.e_h_f_h_defect, tol.coupling),
        Check::positive("cH minimum eigenvalue", d.c_h_min_eigenvalue, sym.c.trace_voigt()),
        Check::positive("dH minimum eigenvalue", d.d_h_min_eigenvalue, sym.d.trace()),
        Check::at_most("cH direct vs energy form", r.method_cross_check.c_h_direct_vs_energy_defect, tol.energy),
        Check::at_most("dH direct vs energy form", r.method_cross_check.d_h_direct_vs_energy_defect, tol.energy),
        Check::at_most("no-hole identity cH=c, eH=fH=e, dH=d", identity, tol.identity),
    ]
}

/// Runs one mode and writes its artifacts into `out`.
pub fn run(mode: Mode, config: &RunConfig, base: &Path, out: &Path) -> Result<(), RunError> {
    config.check(mode)?;
    let geometry = config.geometry.build(base).map_err(classify)?;
    let n = geometry.n();
    let material = config.material_field(base, n)?;
    ensure_dir(out).map_err(RunError::Compute)?;
    let opts = config.solve_options();
    let force = BodyForce::Constant(config.body_force);
    let compute = RunError::Compute;
    match mode {
        Mode::Homogenize => {
            let r = homogenize(&geometry, &material).map_err(compute)?;
            write_json(&out.join("effective.json"), &TensorExport::from(&r)).map_err(compute)?;
            println!("wrote {}", out.join("effective.json").display());
        }
        Mode::Validate => {
            let r = homogenize(&geometry, &material).map_err(compute)?;
            let base_phase = material.phases()[0];
            let full_uniform = geometry.theta() == 1.0 && matches!(material, MaterialField::Uniform(_));
            let identity = if full_uniform {
                identity_defect(&r.tensors, &base_phase)
            } else {
                let full = CellGeometry::full(n).map_err(compute)?;
                let ri = homogenize(&full, &base_phase.into()).map_err(compute)?;
                identity_defect(&ri.tensors, &base_phase)
            };
            let checks = validation_checks(&r, identity, &config.tolerances);
            for c in &checks {
                println!("{}", c.line());
            }
            let passed = checks.iter().all(|c| c.passed);
            if identity <= config.tolerances.identity {
                println!("cH=c within {:e}", config.tolerances.identity);
            }
            let export = ValidationExport {
                passed,
                checks: checks.clone(),
                tensors: TensorExport::from(&r),
            };
            write_json(&out.join("validate.json"), &export).map_err(compute)?;
            if !passed {
                let failed: Vec<String> = checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| format!("{} = {:e} (required {} {:e})", c.name, c.value, c.relation, c.tolerance))
                    .collect();
                return Err(RunError::Validation(failed.join("; ")));
            }
        }
        Mode::Macro => {
            let resolution = config.macro_resolution.unwrap_or_default();
            let r = homogenize(&geometry, &material).map_err(compute)?;
            let sol = solve_macro(
                &MacroProblem {
                    tensors: r.tensors.clone(),
                    theta: r.theta,
                    body_force: force,
                    resolution,
                },
                &opts,
            )
            .map_err(classify)?;
            write_field_dump(&out.join("macro.pzf"), &sol.to_dump()).map_err(compute)?;
            let export = FieldExport {
                grid: sol.n,
                epsilon: None,
                body_force: config.body_force,
                integral_u: sol.integral_u(),
                dump: "macro.pzf",
                diagnostics: sol.diagnostics.clone(),
                homogenization: Some(TensorExport::from(&r)),
            };
            write_json(&out.join("macro.json"), &export).map_err(compute)?;
            println!("wrote {}", out.join("macro.pzf").display());
        }
        Mode::Dns => {
            let epsilon = config.epsilon.unwrap_or_default();
            let sol = solve_dns(
                &DnsProblem {
                    cell: geometry,
                    material,
                    epsilon,
                    body_force: force,
                },
                &opts,
            )
            .map_err(classify)?;
            write_field_dump(&out.join("dns.pzf"), &sol.to_dump()).map_err(compute)?;
            let export = FieldExport {
                grid: sol.n,
                epsilon: Some(epsilon),
                body_force: config.body_force,
                integral_u: sol.integral_u(),
                dump: "dns.pzf",
                diagnostics: sol.diagnostics.clone(),
                homogenization: None,
            };
            write_json(&out.join("dns.json"), &export).map_err(compute)?;
            println!("wrote {}", out.join("dns.pzf").display());
        }
        Mode::Sweep => {
            let report = epsilon_sweep(&geometry, &material, &force, &config.epsilons, &opts).map_err(classify)?;
            report.write_csv(&out.join("corrector.csv")).map_err(compute)?;
            write_json(&out.join("corrector.json"), &report).map_err(compute)?;
            print!("{}", report.to_csv_string());
            for (flag, name) in [
                (report.strain_residual_decreasing, "strain_residual"),
                (report.efield_residual_decreasing, "efield_residual"),
                (report.weak_gap_decreasing, "weak_gap"),
            ] {
                if !flag {
                    println!("note: {name} is not strictly decreasing");
                }
            }
        }
    }
    Ok(())
}

fn thread_count(arg: Option<usize>) -> Result<Option<usize>, RunError> {
    if let Some(k) = arg {
        if k == 0 {
            return Err(config_err("--threads must be at least 1"));
        }
        return Ok(Some(k));
    }
    match std::env::var(THREADS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(Some(k)),
            _ => Err(config_err(format!("{THREADS_ENV} must be a positive integer, got {s:?}"))),
        },
        Err(_) => Ok(None),
    }
}

fn execute(args: &Args) -> Result<(), RunError> {
    let threads = thread_count(args.threads)?;
    let config = load_config(&args.config)?;
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = match (&args.out, &config.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => PathBuf::from("piezocell-out"),
    };
    info!("mode {} config {} out {}", args.mode, args.config.display(), out.display());
    let job = || run(args.mode, &config, &base, &out);
    match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| config_err(format!("cannot build thread pool: {e}")))?
            .install(job),
        None => job(),
    }
}

/// Parses arguments, runs the requested mode and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { ExitStatus::ConfigError as i32 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&args) {
        Ok(()) => ExitStatus::Success as i32,
        Err(e) => {
            eprintln!("{e}");
            e.status() as i32
        }
    }
}
