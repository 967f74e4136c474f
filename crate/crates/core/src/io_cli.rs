//! Configuration parsing, deterministic serialization and the CLI surface.
//!
//! Configs are JSON with a closed schema (unknown keys rejected); every
//! omitted field falls back to a documented default, and the resolved values
//! are embedded in the output metadata. CSV output has the fixed column set
//! `scenario,direction,axis1,axis2,branch,I1,T,isolation_db,stable,verdict`
//! with floats printed as shortest round-trip decimals, so repeated runs are
//! byte-identical.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics;
use crate::experiments::{
    self, run_scenario, Overrides, ParamPatch, Plane, ScenarioId, SweepPlan, SweepResult,
};
use crate::model::{pt_balance, Direction, ParamsError, SystemParams};
use crate::observables::{isolation_ratio, transmission};
use crate::steady::{self, SweepAxis};

/// Relative output paths are resolved against this directory when set.
pub const OUT_DIR_ENV: &str = "NONRECIP_OUT_DIR";
/// Worker-count override for sweep parallelism (a count, nothing more).
pub const THREADS_ENV: &str = "NONRECIP_THREADS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("range error: {0}")]
    Range(#[from] ParamsError),
    #[error("range error: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: dynamics::DEFAULT_RTOL, atol: dynamics::DEFAULT_ATOL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Output file; stdout when absent.
    pub path: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub axis: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub directions: Vec<Direction>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            axis: "eps_p_sq".to_string(),
            min: 0.005,
            max: 2.0,
            points: 400,
            directions: Direction::BOTH.to_vec(),
        }
    }
}

/// On-disk config schema. Every field is optional; defaults resolve to the
/// flagship gain-loss parameter set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub params: ParamPatch,
    pub scenario: Option<String>,
    pub sweep: Option<SweepSpec>,
    pub overrides: Overrides,
    pub tolerances: Tolerances,
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunMode {
    Scenario(ScenarioId),
    Sweep { axis: SweepAxis, grid: Vec<f64>, directions: Vec<Direction> },
    /// Config carries no scenario or sweep; parameter point only.
    Point,
}

/// Fully validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: SystemParams,
    pub mode: RunMode,
    pub overrides: Overrides,
    pub tolerances: Tolerances,
    pub output: OutputSpec,
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let file: ConfigFile =
        serde_json::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))?;
    resolve_config(file)
}

fn resolve_config(file: ConfigFile) -> Result<RunConfig, ConfigError> {
    let params = file.params.apply(&SystemParams::pt_defaults())?;
    if !(file.tolerances.rtol > 0.0
        && file.tolerances.rtol <= 1e-2
        && file.tolerances.atol > 0.0
        && file.tolerances.atol <= 1e-2)
    {
        return Err(ConfigError::Invalid(
            "tolerances.rtol/atol must lie in (0, 1e-2]".to_string(),
        ));
    }
    let mode = match (&file.scenario, &file.sweep) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::Invalid(
                "scenario and sweep are mutually exclusive".to_string(),
            ))
        }
        (Some(name), None) => RunMode::Scenario(
            name.parse::<ScenarioId>()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?,
        ),
        (None, Some(spec)) => {
            let axis: SweepAxis =
                spec.axis.parse().map_err(|e: String| ConfigError::Invalid(format!("sweep.axis: {e}")))?;
            if spec.points < 2 {
                return Err(ConfigError::Invalid("sweep.points must be >= 2".to_string()));
            }
            if !(spec.min.is_finite() && spec.max.is_finite() && spec.min < spec.max) {
                return Err(ConfigError::Invalid(
                    "sweep.min/max must be finite with min < max".to_string(),
                ));
            }
            if axis == SweepAxis::EpsPSq && spec.min < 0.0 {
                return Err(ConfigError::Invalid(
                    "sweep.min: eps_p_sq grid must be nonnegative".to_string(),
                ));
            }
            if spec.directions.is_empty() {
                return Err(ConfigError::Invalid(
                    "sweep.directions must be nonempty".to_string(),
                ));
            }
            let grid = (0..spec.points)
                .map(|i| spec.min + (spec.max - spec.min) * i as f64 / (spec.points - 1) as f64)
                .collect();
            RunMode::Sweep { axis, grid, directions: spec.directions.clone() }
        }
        (None, None) => RunMode::Point,
    };
    Ok(RunConfig {
        params,
        mode,
        overrides: file.overrides,
        tolerances: file.tolerances,
        output: file.output,
    })
}

impl RunConfig {
    /// Closed-schema view with every resolved value spelled out; parsing it
    /// back reproduces this config exactly.
    pub fn to_config_file(&self) -> ConfigFile {
        let p = &self.params;
        ConfigFile {
            params: ParamPatch {
                g: Some(p.g),
                j: Some(p.j),
                kappa1: Some(p.kappa1),
                kappa_e: Some(p.kappa_e),
                gamma: Some(p.gamma),
                delta1: Some(p.delta1),
                delta2: Some(p.delta2),
                eps_p: Some(p.eps_p),
            },
            scenario: match &self.mode {
                RunMode::Scenario(id) => Some(id.name().to_string()),
                _ => None,
            },
            sweep: match &self.mode {
                RunMode::Sweep { axis, grid, directions } => Some(SweepSpec {
                    axis: axis.label().to_string(),
                    min: *grid.first().unwrap(),
                    max: *grid.last().unwrap(),
                    points: grid.len(),
                    directions: directions.clone(),
                }),
                _ => None,
            },
            overrides: self.overrides,
            tolerances: self.tolerances,
            output: self.output.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_config_file()).expect("config serializes")
    }
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Serialize a result table. CSV is header plus rows with the fixed column
/// order; JSON mirrors the rows and adds the metadata block.
pub fn write_result(result: &SweepResult, format: OutputFormat) -> Vec<u8> {
    match format {
        OutputFormat::Csv => {
            let mut out = String::new();
            out.push_str("scenario,direction,axis1,axis2,branch,I1,T,isolation_db,stable,verdict\n");
            for r in &result.rows {
                out.push_str(&r.scenario);
                out.push(',');
                out.push_str(r.direction.label());
                out.push(',');
                out.push_str(&r.axis1.to_string());
                out.push(',');
                out.push_str(&fmt_opt_f64(r.axis2));
                out.push(',');
                out.push_str(&r.branch.map(|b| b.to_string()).unwrap_or_default());
                out.push(',');
                out.push_str(&fmt_opt_f64(r.i1));
                out.push(',');
                out.push_str(&fmt_opt_f64(r.t));
                out.push(',');
                out.push_str(&fmt_opt_f64(r.isolation_db));
                out.push(',');
                out.push_str(&r.stable.map(|s| s.to_string()).unwrap_or_default());
                out.push(',');
                out.push_str(&r.verdict);
                out.push('\n');
            }
            out.into_bytes()
        }
        OutputFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(result).expect("result serializes");
            bytes.push(b'\n');
            bytes
        }
    }
}

// ---------------------------------------------------------------------------
// Command line

#[derive(Debug, Parser)]
#[command(
    name = "nonrecip",
    version,
    about = "Nonreciprocal transmission in two coupled cavities with an embedded two-level emitter",
    disable_help_subcommand = true
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DirArg {
    Forward,
    Backward,
    Both,
}

impl DirArg {
    fn directions(self) -> Vec<Direction> {
        match self {
            DirArg::Forward => vec![Direction::Forward],
            DirArg::Backward => vec![Direction::Backward],
            DirArg::Both => Direction::BOTH.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
struct ParamFlags {
    /// JSON config file; flags override its values
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Emitter-cavity coupling rate [kappa2]
    #[arg(long)]
    g: Option<f64>,
    /// Cavity-cavity coupling rate [kappa2]
    #[arg(long)]
    j: Option<f64>,
    /// Cavity-1 intrinsic decay rate; negative = gain [kappa2]
    #[arg(long)]
    kappa1: Option<f64>,
    /// Cavity-waveguide coupling rate [kappa2]
    #[arg(long)]
    kappa_e: Option<f64>,
    /// Emitter spontaneous decay rate [kappa2]
    #[arg(long)]
    gamma: Option<f64>,
    /// Cavity-probe detuning [kappa2]
    #[arg(long)]
    delta1: Option<f64>,
    /// Emitter-cavity detuning [kappa2]
    #[arg(long)]
    delta2: Option<f64>,
    /// Probe amplitude [sqrt(kappa2)]
    #[arg(long)]
    eps_p: Option<f64>,
}

impl ParamFlags {
    fn patch(&self) -> ParamPatch {
        ParamPatch {
            g: self.g,
            j: self.j,
            kappa1: self.kappa1,
            kappa_e: self.kappa_e,
            gamma: self.gamma,
            delta1: self.delta1,
            delta2: self.delta2,
            eps_p: self.eps_p,
        }
    }

    /// Resolved config plus the explicit patch (config-file fields overlaid
    /// by flags); the patch is what scenario overrides receive, so untouched
    /// fields keep the scenario defaults.
    fn resolve(&self) -> Result<(RunConfig, ParamPatch), CliError> {
        let (mut config, file_patch) = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Usage(format!("cannot read {}: {e}", path.display()))
                })?;
                let file: ConfigFile = serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("schema error: {e}")))?;
                let patch = file.params;
                let config = resolve_config(file).map_err(|e| CliError::Usage(e.to_string()))?;
                (config, patch)
            }
            None => (
                RunConfig {
                    params: SystemParams::pt_defaults(),
                    mode: RunMode::Point,
                    overrides: Overrides::default(),
                    tolerances: Tolerances::default(),
                    output: OutputSpec::default(),
                },
                ParamPatch::default(),
            ),
        };
        let flags = self.patch();
        let explicit = ParamPatch {
            g: flags.g.or(file_patch.g),
            j: flags.j.or(file_patch.j),
            kappa1: flags.kappa1.or(file_patch.kappa1),
            kappa_e: flags.kappa_e.or(file_patch.kappa_e),
            gamma: flags.gamma.or(file_patch.gamma),
            delta1: flags.delta1.or(file_patch.delta1),
            delta2: flags.delta2.or(file_patch.delta2),
            eps_p: flags.eps_p.or(file_patch.eps_p),
        };
        config.params = explicit
            .apply(&SystemParams::pt_defaults())
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok((config, explicit))
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print steady branches and observables at one parameter point
    Steady {
        #[command(flatten)]
        params: ParamFlags,
        #[arg(long, value_enum, default_value_t = DirArg::Both)]
        dir: DirArg,
    },
    /// Run a 1D parameter sweep and write the branch/selection table
    Sweep {
        #[command(flatten)]
        params: ParamFlags,
        /// Swept axis: eps_p_sq | g | j | delta1 | delta2
        #[arg(long)]
        axis: String,
        #[arg(long)]
        min: f64,
        #[arg(long)]
        max: f64,
        #[arg(long, default_value_t = 400)]
        points: usize,
        #[arg(long, value_enum, default_value_t = DirArg::Both)]
        dir: DirArg,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Time-domain quasi-static hysteresis scan over the drive power
    Hysteresis {
        #[command(flatten)]
        params: ParamFlags,
        #[arg(long, default_value_t = 0.0)]
        eps_sq_min: f64,
        #[arg(long)]
        eps_sq_max: f64,
        /// Points per up/down pass
        #[arg(long, default_value_t = 41)]
        steps: usize,
        #[arg(long, default_value_t = dynamics::DEFAULT_T_HOLD)]
        t_hold: f64,
        #[arg(long, value_enum, default_value_t = DirArg::Both)]
        dir: DirArg,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Eigenvalue report for every steady branch at one parameter point
    Stability {
        #[command(flatten)]
        params: ParamFlags,
        #[arg(long, value_enum, default_value_t = DirArg::Both)]
        dir: DirArg,
    },
    /// Run a named figure scenario (fig2a..fig7)
    Figure {
        id: String,
        #[command(flatten)]
        params: ParamFlags,
        #[arg(long)]
        grid_points: Option<usize>,
        #[arg(long)]
        grid_min: Option<f64>,
        #[arg(long)]
        grid_max: Option<f64>,
        #[arg(long)]
        hysteresis_points: Option<usize>,
        #[arg(long)]
        t_hold: Option<f64>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Parse and validate a config file without running anything
    Validate { path: PathBuf },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Solver(_) => 2,
        }
    }
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                // Ignore the error if a global pool already exists.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn resolve_out_path(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
            if !dir.is_empty() {
                return PathBuf::from(dir).join(path);
            }
        }
    }
    path.to_path_buf()
}

fn emit(result: &SweepResult, out: Option<&Path>, format: Option<OutputFormat>) -> Result<(), CliError> {
    let format = format.unwrap_or(OutputFormat::Csv);
    let bytes = write_result(result, format);
    match out {
        Some(path) => {
            let path = resolve_out_path(path);
            std::fs::write(&path, &bytes)
                .map_err(|e| CliError::Solver(format!("cannot write {}: {e}", path.display())))?;
            if format == OutputFormat::Csv {
                // CSV cannot carry the resolved parameters; a JSON sidecar
                // keeps every output reproducible from its own files.
                let meta = serde_json::to_vec_pretty(&result.metadata).expect("metadata serializes");
                let meta_path = path.with_extension(match path.extension() {
                    Some(e) => format!("{}.meta.json", e.to_string_lossy()),
                    None => "meta.json".to_string(),
                });
                std::fs::write(&meta_path, meta).map_err(|e| {
                    CliError::Solver(format!("cannot write {}: {e}", meta_path.display()))
                })?;
            }
            eprintln!("wrote {} rows to {}", result.rows.len(), path.display());
            Ok(())
        }
        None => {
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|e| CliError::Solver(format!("stdout: {e}")))?;
            Ok(())
        }
    }
}

fn print_params(p: &SystemParams) {
    println!(
        "params: g={} j={} kappa1={} kappa2={} kappa_e={} gamma={} delta1={} delta2={} eps_p={}  (pt_balance={})",
        p.g, p.j, p.kappa1, p.kappa2, p.kappa_e, p.gamma, p.delta1, p.delta2, p.eps_p,
        pt_balance(p)
    );
}

fn steady_report(config: &RunConfig, directions: &[Direction]) -> Result<(), CliError> {
    let p = &config.params;
    print_params(p);
    let mut selected_t: Vec<(Direction, Option<f64>)> = Vec::new();
    for &dir in directions {
        let branches = steady::enumerate_branches(p, dir)
            .map_err(|e| CliError::Solver(format!("{dir}: {e}")))?;
        println!("direction {dir}: {} branch(es)", branches.len());
        for (i, b) in branches.iter().enumerate() {
            let t = transmission(p, dir, b).map(|r| r.t).ok();
            println!(
                "  branch {i}: I1={:<12.6e} T={} stable={} residual={:.2e} max_re={:.3e}",
                b.i1,
                t.map(|t| format!("{t:.6}")).unwrap_or_else(|| "n/a".to_string()),
                b.is_stable(),
                b.residual,
                b.spectral_abscissa,
            );
        }
        // Up-scan selection at a single point follows the branch reachable
        // from the dark state: the lowest one.
        let t_sel = branches.first().and_then(|b| transmission(p, dir, b).map(|r| r.t).ok());
        selected_t.push((dir, t_sel));
    }
    let t_l = selected_t
        .iter()
        .find(|(d, _)| *d == Direction::Backward)
        .and_then(|(_, t)| *t);
    let t_r = selected_t
        .iter()
        .find(|(d, _)| *d == Direction::Forward)
        .and_then(|(_, t)| *t);
    if let (Some(t_l), Some(t_r)) = (t_l, t_r) {
        match isolation_ratio(t_l, t_r) {
            Ok(db) => println!("isolation ratio (lowest branches, L over R): {db:.3} dB"),
            Err(e) => println!(
                "isolation ratio undefined ({})",
                e.limit_db().map(|v| v.to_string()).unwrap_or_else(|| "0/0".to_string())
            ),
        }
    }
    Ok(())
}

fn stability_report(config: &RunConfig, directions: &[Direction]) -> Result<(), CliError> {
    let p = &config.params;
    print_params(p);
    for &dir in directions {
        let branches = steady::enumerate_branches(p, dir)
            .map_err(|e| CliError::Solver(format!("{dir}: {e}")))?;
        println!("direction {dir}: {} branch(es)", branches.len());
        for (i, b) in branches.iter().enumerate() {
            println!("  branch {i}: I1={:.6e} {}", b.i1, if b.is_stable() { "stable" } else { "unstable" });
            for lam in steady::spectrum(&b.state, p) {
                println!("    eig: {:+.6e} {:+.6e}i", lam.re, lam.im);
            }
        }
    }
    Ok(())
}

fn run_command(command: Command) -> Result<(), CliError> {
    match command {
        Command::Steady { params, dir } => {
            let (config, _) = params.resolve()?;
            steady_report(&config, &dir.directions())
        }
        Command::Stability { params, dir } => {
            let (config, _) = params.resolve()?;
            stability_report(&config, &dir.directions())
        }
        Command::Sweep { params, axis, min, max, points, dir, out, format } => {
            let (config, _) = params.resolve()?;
            let axis: SweepAxis = axis.parse().map_err(CliError::Usage)?;
            if points < 2 || !(min.is_finite() && max.is_finite() && min < max) {
                return Err(CliError::Usage(
                    "sweep needs points >= 2 and finite min < max".to_string(),
                ));
            }
            if axis == SweepAxis::EpsPSq && min < 0.0 {
                return Err(CliError::Usage("eps_p_sq grid must be nonnegative".to_string()));
            }
            let grid: Vec<f64> = (0..points)
                .map(|i| min + (max - min) * i as f64 / (points - 1) as f64)
                .collect();
            let plan = SweepPlan {
                scenario: "sweep".to_string(),
                axis,
                grid,
                planes: vec![Plane { axis2: None, params: config.params }],
                directions: dir.directions(),
                observables: Default::default(),
            };
            let result = experiments::sweep(&plan, None);
            emit(&result, out.as_deref().or(config.output.path.as_deref()), format.or(config.output.format))
        }
        Command::Hysteresis { params, eps_sq_min, eps_sq_max, steps, t_hold, dir, out, format } => {
            let (config, _) = params.resolve()?;
            let result = experiments::hysteresis_result(
                &config.params,
                &dir.directions(),
                (eps_sq_min, eps_sq_max),
                steps,
                t_hold,
            )
            .map_err(|e| match e {
                experiments::ExperimentError::InvalidOverride(m) => CliError::Usage(m),
                other => CliError::Solver(other.to_string()),
            })?;
            emit(&result, out.as_deref().or(config.output.path.as_deref()), format.or(config.output.format))
        }
        Command::Figure {
            id,
            params,
            grid_points,
            grid_min,
            grid_max,
            hysteresis_points,
            t_hold,
            out,
            format,
        } => {
            let (config, explicit) = params.resolve()?;
            let id: ScenarioId = id.parse().map_err(|e: experiments::ExperimentError| {
                CliError::Usage(e.to_string())
            })?;
            // Only explicitly set fields reach the scenario; everything else
            // keeps its scenario default.
            let overrides = Overrides {
                params: explicit,
                grid_points: grid_points.or(config.overrides.grid_points),
                grid_min: grid_min.or(config.overrides.grid_min),
                grid_max: grid_max.or(config.overrides.grid_max),
                hysteresis_points: hysteresis_points.or(config.overrides.hysteresis_points),
                t_hold: t_hold.or(config.overrides.t_hold),
            };
            let result = run_scenario(id, &overrides).map_err(|e| match e {
                experiments::ExperimentError::UnknownScenario(_)
                | experiments::ExperimentError::InvalidOverride(_) => CliError::Usage(e.to_string()),
                other => CliError::Solver(other.to_string()),
            })?;
            emit(&result, out.as_deref().or(config.output.path.as_deref()), format.or(config.output.format))
        }
        Command::Validate { path } => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            let config = parse_config(&text).map_err(|e| CliError::Usage(e.to_string()))?;
            println!("valid config");
            print_params(&config.params);
            match &config.mode {
                RunMode::Scenario(id) => println!("mode: scenario {id}"),
                RunMode::Sweep { axis, grid, directions } => println!(
                    "mode: sweep {} over [{}, {}] with {} points, {} direction(s)",
                    axis.label(),
                    grid.first().unwrap(),
                    grid.last().unwrap(),
                    grid.len(),
                    directions.len()
                ),
                RunMode::Point => println!("mode: single parameter point"),
            }
            Ok(())
        }
    }
}

/// Entry point behind `main`: parse, dispatch, map errors to exit codes
/// (0 success, 1 usage error, 2 solver failure).
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    init_thread_pool();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes, flag errors are not.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_command(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
