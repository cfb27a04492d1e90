//! The `csma-gicn` command line.
//!
//! Exit codes: 0 on success, 1 for bad input (flags, topology names, graph
//! files), 2 when a model's state space exceeds its limit.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::ctmc::{build_rate_matrix, ctmc_metrics, solve_stationary, CtmcError};
use crate::gicn::{build_augmented_space, solve_gicn, CollisionParams, GicnError};
use crate::graph::{parse_graph, ContentionGraph, GraphError};
use crate::icn::{icn_distribution, icn_throughput, AccessIntensities, IcnError};
use crate::report::{emit_report, Format, ReportRow};
use crate::sim::{run, run_replications, SimConfig, SimError};
use crate::topology::{builtin_topology, BUILTIN_NAMES};
use crate::DEFAULT_RATE_MBPS;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Limit(String),
    #[error("cannot write report: {0}")]
    Output(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Limit(_) => 2,
            CliError::Input(_) | CliError::Output(_) => 1,
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::TooManyLinks { .. } => CliError::Limit(e.to_string()),
            other => CliError::Input(format!("graph: {other}")),
        }
    }
}

impl From<GicnError> for CliError {
    fn from(e: GicnError) -> Self {
        match e {
            GicnError::Graph(g) => g.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<IcnError> for CliError {
    fn from(e: IcnError) -> Self {
        match e {
            IcnError::Graph(g) => g.into(),
            IcnError::Intensity(i) => CliError::Input(format!("--rho: {i}")),
        }
    }
}

impl From<CtmcError> for CliError {
    fn from(e: CtmcError) -> Self {
        match e {
            CtmcError::TooManyStates(_) => CliError::Limit(format!("exact model: {e}")),
            CtmcError::Gicn(g) => g.into(),
            other => CliError::Input(format!("exact model: {other}")),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let field = match e {
            SimError::ZeroWindow | SimError::WindowCap { .. } => "--cw/--cw-max",
            SimError::ZeroTxLength => "--ttx",
            SimError::Warmup { .. } => "--warmup",
            SimError::TooFewReplications(_) => "--reps",
        };
        CliError::Input(format!("{field}: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "csma-gicn",
    version,
    about = "CSMA link throughput and collision probability from contention graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the analytical models.
    Analyze {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        timing: Timing,
        #[command(flatten)]
        analytic: Analytic,
        #[command(flatten)]
        output: Output,
    },
    /// Run the slot simulator.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        timing: Timing,
        #[command(flatten)]
        sim: Simulation,
        #[arg(long, default_value_t = DEFAULT_RATE_MBPS, allow_negative_numbers = true)]
        rate_mbps: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Analytical models first, then the simulator, side by side.
    Compare {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        timing: Timing,
        #[command(flatten)]
        analytic: Analytic,
        #[command(flatten)]
        sim: Simulation,
        #[command(flatten)]
        output: Output,
    },
    /// Every built-in topology at the default operating point.
    Bench {
        #[arg(long, default_value_t = 10_000_000)]
        slots: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        reps: usize,
        /// Enable binary exponential backoff in the simulator.
        #[arg(long)]
        beb: bool,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Contention graph file (line format or JSON).
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Built-in topology name.
    #[arg(long)]
    topology: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Model {
    Icn,
    Gicn,
    Exact,
    All,
}

#[derive(Debug, Args)]
struct Analytic {
    #[arg(long, value_enum, default_value_t = Model::All)]
    model: Model,
    /// Access intensity override; replaces 2*ttx/cw.
    #[arg(long, conflicts_with = "ttx", allow_negative_numbers = true)]
    rho: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_RATE_MBPS, allow_negative_numbers = true)]
    rate_mbps: f64,
}

#[derive(Debug, Args)]
struct Simulation {
    #[arg(long, default_value_t = 10_000_000)]
    slots: u64,
    /// Warmup slots excluded from measurement (default: 5% of --slots).
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Independent replications; two or more report 95% intervals.
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long)]
    beb: bool,
    #[arg(long, default_value_t = 1023)]
    cw_max: u32,
}

#[derive(Debug, Args)]
struct Output {
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    format: FormatArg,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Table => Format::Table,
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

/// Contention window and transmission length shared by the models.
#[derive(Debug, Args, Clone, Copy)]
struct Timing {
    #[arg(long, default_value_t = 31)]
    cw: u32,
    #[arg(long, default_value_t = 83)]
    ttx: u32,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let sink: &mut dyn Write = if code == 0 { stdout } else { stderr };
            let _ = write!(sink, "{rendered}");
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(
    command: Command,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    match command {
        Command::Analyze {
            source,
            timing,
            analytic,
            output,
        } => {
            let (name, g) = load_graph(&source)?;
            let mut row = ReportRow::new(name, g.link_ids(), checked_rate(analytic.rate_mbps)?);
            fill_analytic(&mut row, &g, timing, &analytic)?;
            write_report(&[row], &output, stdout)
        }
        Command::Simulate {
            source,
            timing,
            sim,
            rate_mbps,
            output,
        } => {
            let (name, g) = load_graph(&source)?;
            let mut row = ReportRow::new(name, g.link_ids(), checked_rate(rate_mbps)?);
            fill_sim(&mut row, &g, timing, &sim)?;
            write_report(&[row], &output, stdout)
        }
        Command::Compare {
            source,
            timing,
            analytic,
            sim,
            output,
        } => {
            let (name, g) = load_graph(&source)?;
            let mut row = ReportRow::new(name, g.link_ids(), checked_rate(analytic.rate_mbps)?);
            fill_analytic(&mut row, &g, timing, &analytic)?;
            // Analytical figures are ready long before the simulation; show
            // them now, on stdout only if that does not corrupt the report.
            let preview: &mut dyn Write =
                if output.out.is_some() || output.format == FormatArg::Table {
                    &mut *stdout
                } else {
                    &mut *stderr
                };
            emit_report(std::slice::from_ref(&row), Format::Table, preview)?;
            writeln!(preview)?;
            preview.flush()?;
            fill_sim(&mut row, &g, timing, &sim)?;
            write_report(&[row], &output, stdout)
        }
        Command::Bench {
            slots,
            seed,
            reps,
            beb,
            output,
        } => {
            let timing = Timing { cw: 31, ttx: 83 };
            let analytic = Analytic {
                model: Model::All,
                rho: None,
                rate_mbps: DEFAULT_RATE_MBPS,
            };
            let sim = Simulation {
                slots,
                warmup: None,
                seed,
                reps,
                beb,
                cw_max: 1023,
            };
            let mut rows = Vec::with_capacity(BUILTIN_NAMES.len());
            for name in BUILTIN_NAMES {
                let g = builtin_topology(name).expect("built-in names resolve");
                let mut row = ReportRow::new(name, g.link_ids(), DEFAULT_RATE_MBPS);
                fill_analytic(&mut row, &g, timing, &analytic)?;
                fill_sim(&mut row, &g, timing, &sim)?;
                rows.push(row);
            }
            write_report(&rows, &output, stdout)
        }
    }
}

fn load_graph(source: &Source) -> Result<(String, ContentionGraph), CliError> {
    if let Some(name) = &source.topology {
        let g = builtin_topology(name).ok_or_else(|| {
            CliError::Input(format!(
                "--topology: unknown topology `{name}` (known: {})",
                BUILTIN_NAMES.join(", ")
            ))
        })?;
        return Ok((name.clone(), g));
    }
    let path = source.graph.as_ref().expect("clap requires a source");
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("--graph: cannot read {}: {e}", path.display())))?;
    let g = parse_graph(&text)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok((name, g))
}

fn checked_rate(rate_mbps: f64) -> Result<f64, CliError> {
    if rate_mbps.is_finite() && rate_mbps > 0.0 {
        Ok(rate_mbps)
    } else {
        Err(CliError::Input(format!(
            "--rate-mbps: must be positive, got {rate_mbps}"
        )))
    }
}

fn fill_analytic(
    row: &mut ReportRow,
    g: &ContentionGraph,
    timing: Timing,
    analytic: &Analytic,
) -> Result<(), CliError> {
    if timing.cw == 0 {
        return Err(CliError::Input("--cw: must be at least 1".into()));
    }
    let rho = match analytic.rho {
        Some(r) if r.is_finite() && r > 0.0 => r,
        Some(r) => return Err(CliError::Input(format!("--rho: must be positive, got {r}"))),
        None => 2.0 * f64::from(timing.ttx) / f64::from(timing.cw),
    };
    let intensities = AccessIntensities::homogeneous(g.len(), rho)
        .map_err(|e| CliError::Input(format!("--rho: {e}")))?;
    let params = CollisionParams::new(timing.cw)?;
    let wants = |m: Model| analytic.model == m || analytic.model == Model::All;
    if wants(Model::Icn) {
        let dist = icn_distribution(g, &intensities)?;
        row.set_icn(&icn_throughput(g, &dist));
    }
    if wants(Model::Gicn) {
        let m = solve_gicn(g, &intensities, &params, 1.0)?.metrics;
        row.set_gicn(&m.throughput_normalized, &m.collision_prob);
    }
    if wants(Model::Exact) {
        let space = build_augmented_space(g)?;
        let matrix = build_rate_matrix(g, &space, rho, &params)?;
        let dist = solve_stationary(&matrix)?;
        let m = ctmc_metrics(g, &space, &dist, &params, 1.0)?;
        row.set_exact(&m.throughput_normalized, &m.collision_prob);
    }
    Ok(())
}

fn fill_sim(
    row: &mut ReportRow,
    g: &ContentionGraph,
    timing: Timing,
    sim: &Simulation,
) -> Result<(), CliError> {
    if sim.reps == 0 {
        return Err(CliError::Input("--reps: must be at least 1".into()));
    }
    let config = SimConfig {
        cw0: timing.cw,
        // The cap only matters when the window doubles.
        cw_max: if sim.beb {
            sim.cw_max
        } else {
            sim.cw_max.max(timing.cw)
        },
        beb_enabled: sim.beb,
        t_tx: timing.ttx,
        total_slots: sim.slots,
        warmup_slots: sim.warmup.unwrap_or(sim.slots / 20),
        seed: sim.seed,
        ..SimConfig::with_slots(sim.slots)
    };
    config.validate()?;
    let result = if sim.reps == 1 {
        run(g, &config)?
    } else {
        run_replications(g, &config, sim.reps)?
    };
    let m = &result.metrics;
    let ci = result.intervals.as_ref();
    row.set_sim(
        &m.throughput_normalized,
        &m.collision_prob,
        ci.map(|c| c.throughput_half_width.as_slice()),
        ci.map(|c| c.collision_half_width.as_slice()),
    );
    Ok(())
}

fn write_report(
    rows: &[ReportRow],
    output: &Output,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let format = Format::from(output.format);
    match &output.out {
        Some(path) => {
            let mut file = fs::File::create(path).map_err(|e| {
                CliError::Input(format!("--out: cannot create {}: {e}", path.display()))
            })?;
            emit_report(rows, format, &mut file)?;
            file.flush()?;
        }
        None => {
            emit_report(rows, format, stdout)?;
            stdout.flush()?;
        }
    }
    Ok(())
}
