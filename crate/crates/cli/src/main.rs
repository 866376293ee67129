//! Command-line driver: offline table builds, single solves, the benchmark
//! suite and the coefficient comparison curves.
//!
//! Exit codes: 0 success, 2 usage/configuration, 3 numeric failure, 4 I/O.

use clap::{Args, Parser, Subcommand};
use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vms2d::analysis;
use vms2d::bench;
use vms2d::coeff_table::{self, StabTable, TableError};
use vms2d::fem::{self, FemError, TauProvider, VelocityField};
use vms2d::geometry;
use vms2d::stabilization::{self, Truncation};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Numeric(String),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        match e {
            TableError::Io(io) => CliError::Io(io.to_string()),
            TableError::RangeStepMismatch { .. }
            | TableError::RangeOutOfBounds { .. }
            | TableError::NonPositiveStep(_) => CliError::Usage(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<FemError> for CliError {
    fn from(e: FemError) -> Self {
        match e {
            FemError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<geometry::GeometryError> for CliError {
    fn from(e: geometry::GeometryError) -> Self {
        match e {
            geometry::GeometryError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<bench::BenchError> for CliError {
    fn from(e: bench::BenchError) -> Self {
        match e {
            bench::BenchError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<analysis::AnalysisError> for CliError {
    fn from(e: analysis::AnalysisError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<stabilization::StabilizationError> for CliError {
    fn from(e: stabilization::StabilizationError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "vms2d",
    about = "Stabilized advection-diffusion solver with spectral VMS coefficients",
    version
)]
struct Cli {
    /// Flat key=value configuration file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Primary output path (table file, solution file, report file, CSV).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Emit machine-readable JSON on stdout where applicable.
    #[arg(long, global = true)]
    json: bool,
    /// Suppress the human-readable summary.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the psi interpolation table over [-pe-max, pe-max]^2.
    Table(TableArgs),
    /// Solve one advection-diffusion problem and export the solution.
    Solve(SolveArgs),
    /// Run a benchmark and emit its reports.
    Bench {
        #[command(subcommand)]
        which: BenchCommand,
    },
    /// Emit the 1D-vs-2D coefficient comparison curves as CSV.
    Fig2(Fig2Args),
}

#[derive(Args, Debug)]
struct TableArgs {
    /// Symmetric Peclet range bound per axis.
    #[arg(long)]
    pe_max: Option<f64>,
    /// Grid spacing.
    #[arg(long)]
    step: Option<f64>,
    /// Series truncation M1 = M2.
    #[arg(long)]
    modes: Option<u32>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Structured mesh nodes per side (unit square).
    #[arg(long, conflicts_with = "mesh")]
    n: Option<usize>,
    /// Mesh file to import instead of a structured grid.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Diffusivity.
    #[arg(long)]
    mu: Option<f64>,
    /// Velocity kind: constant | rotational.
    #[arg(long)]
    velocity: Option<String>,
    /// Per-node velocity sample file (overrides --velocity).
    #[arg(long)]
    velocity_file: Option<PathBuf>,
    /// Constant-velocity x component.
    #[arg(long)]
    a1: Option<f64>,
    /// Constant-velocity y component.
    #[arg(long)]
    a2: Option<f64>,
    /// Constant source value.
    #[arg(long)]
    source: Option<f64>,
    /// Coefficient: spectral | gen1d | codina | none.
    #[arg(long)]
    tau: Option<String>,
    /// Prebuilt psi table (required for --tau spectral unless --direct-psi).
    #[arg(long)]
    table: Option<PathBuf>,
    /// Evaluate psi directly instead of reading a table.
    #[arg(long)]
    direct_psi: bool,
    /// Series truncation for --direct-psi.
    #[arg(long)]
    modes: Option<u32>,
    /// Output format: csv | vtk.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// Constant-velocity sweep over wind directions.
    Constant(BenchConstantArgs),
    /// Rotational velocity on [0,1] x [0,1/2].
    Rotational(BenchRotationalArgs),
    /// Imported mesh plus external velocity samples.
    External(BenchExternalArgs),
}

#[derive(Args, Debug)]
struct BenchConstantArgs {
    /// Comma-separated direction indices (alpha = n pi / 10).
    #[arg(long)]
    dirs: Option<String>,
    /// Structured mesh nodes per side.
    #[arg(long)]
    n: Option<usize>,
    /// Prebuilt psi table; built on the fly when omitted.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Reference refinement factor.
    #[arg(long)]
    ref_factor: Option<usize>,
}

#[derive(Args, Debug)]
struct BenchRotationalArgs {
    /// Cells per side of the rectangle grid.
    #[arg(long)]
    n: Option<usize>,
    /// Prebuilt psi table; built on the fly when omitted.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Reference refinement factor.
    #[arg(long)]
    ref_factor: Option<usize>,
}

#[derive(Args, Debug)]
struct BenchExternalArgs {
    /// Mesh file.
    #[arg(long)]
    mesh: PathBuf,
    /// Velocity sample file.
    #[arg(long)]
    velocity: PathBuf,
    /// Diffusivity.
    #[arg(long)]
    mu: Option<f64>,
    /// Constant source value.
    #[arg(long)]
    source: Option<f64>,
    /// Prebuilt psi table; built on the fly when omitted.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Reference refinement factor (power of two).
    #[arg(long)]
    ref_factor: Option<usize>,
}

#[derive(Args, Debug)]
struct Fig2Args {
    /// Largest P value.
    #[arg(long)]
    p_max: Option<f64>,
    /// Number of P samples.
    #[arg(long)]
    steps: Option<usize>,
    /// Series truncation M1 = M2.
    #[arg(long)]
    modes: Option<u32>,
}

/// Flat key=value configuration; lower precedence than flags, higher than
/// built-in defaults.
struct Config(HashMap<String, String>);

impl Config {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)?;
            for (ln, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!("config line {} is not key=value", ln + 1))
                })?;
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Self(map))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                CliError::Usage(format!("config value {key}={raw} does not parse"))
            }),
        }
    }
}

fn resolve<T: std::str::FromStr>(
    flag: Option<T>,
    cfg: &Config,
    key: &str,
    default: T,
) -> Result<T, CliError> {
    Ok(flag.or(cfg.get(key)?).unwrap_or(default))
}

fn load_or_build_table(
    path: Option<&Path>,
    pe_max: f64,
    step: f64,
    modes: u32,
    quiet: bool,
) -> Result<StabTable, CliError> {
    match path {
        Some(p) => Ok(StabTable::load(p)?),
        None => {
            if !quiet {
                eprintln!("building psi table [-{pe_max}, {pe_max}]^2 step {step} (no --table given)");
            }
            Ok(coeff_table::build_table(
                (-pe_max, pe_max),
                (-pe_max, pe_max),
                step,
                Truncation::square(modes),
            )?)
        }
    }
}

fn emit_reports(
    reports: &[bench::BenchReport],
    out: Option<&Path>,
    json: bool,
    quiet: bool,
) -> Result<(), CliError> {
    // the primary (file) output is the byte-stable form
    let stable: Vec<bench::BenchReport> = reports.iter().map(|r| r.stable()).collect();
    let body = serde_json::to_string_pretty(&stable).expect("reports serialize");
    if let Some(path) = out {
        std::fs::write(path, body.as_bytes())?;
    }
    if json {
        println!("{body}");
    }
    if !quiet {
        eprintln!(
            "{:<16} {:>6} {:<10} {:>9} {:>12} {:>12} {:>9}",
            "benchmark", "n", "tau", "pe_max", "l2", "linf", "secs"
        );
        for r in reports {
            eprintln!(
                "{:<16} {:>6} {:<10} {:>9.4} {:>12.4e} {:>12.4e} {:>9.3}",
                r.benchmark, r.n, r.tau_kind, r.pe_max, r.l2, r.linf, r.runtime_s
            );
        }
    }
    Ok(())
}

fn cmd_table(cli: &Cli, args: &TableArgs, cfg: &Config) -> Result<(), CliError> {
    let pe_max = resolve(args.pe_max, cfg, "pe_max", 32.0)?;
    let step = resolve(args.step, cfg, "step", 0.125)?;
    let modes = resolve(args.modes, cfg, "modes", 40)?;
    if step <= 0.0 {
        return Err(CliError::Usage(format!("invalid step {step}")));
    }
    if pe_max <= 0.0 {
        return Err(CliError::Usage(format!("invalid pe-max {pe_max}")));
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("psi.vmst"));
    let start = std::time::Instant::now();
    let table = coeff_table::build_table(
        (-pe_max, pe_max),
        (-pe_max, pe_max),
        step,
        Truncation::square(modes),
    )?;
    table.save(&out)?;
    let secs = start.elapsed().as_secs_f64();
    let crc = crc_of(&out)?;
    if !cli.quiet {
        eprintln!(
            "table {}x{} nodes written to {} in {:.2} s (crc32 {:08x})",
            table.n1,
            table.n2,
            out.display(),
            secs,
            crc
        );
    }
    if cli.json {
        println!(
            "{{\"n1\":{},\"n2\":{},\"path\":{:?},\"crc32\":\"{:08x}\"}}",
            table.n1,
            table.n2,
            out.display().to_string(),
            crc
        );
    }
    Ok(())
}

fn crc_of(path: &Path) -> Result<u32, CliError> {
    let bytes = std::fs::read(path)?;
    Ok(crc32fast::hash(&bytes))
}

fn cmd_solve(cli: &Cli, args: &SolveArgs, cfg: &Config) -> Result<(), CliError> {
    let mu = resolve(args.mu, cfg, "mu", 1.0)?;
    if mu <= 0.0 {
        return Err(CliError::Usage(format!("mu must be positive, got {mu}")));
    }
    let mesh = match (&args.mesh, args.n) {
        (Some(path), _) => geometry::import_mesh(std::io::BufReader::new(
            std::fs::File::open(path)?,
        ))?,
        (None, n) => {
            let n = n.or(cfg.get("n")?).unwrap_or(41);
            geometry::build_structured_mesh(1.0, 1.0, n, n)?
        }
    };
    let vel = if let Some(path) = &args.velocity_file {
        let samples =
            bench::read_velocity_file(std::io::BufReader::new(std::fs::File::open(path)?))?;
        VelocityField::NodalSamples(samples)
    } else {
        let kind = resolve(args.velocity.clone(), cfg, "velocity", "constant".into())?;
        match kind.as_str() {
            "constant" => VelocityField::Constant {
                a1: resolve(args.a1, cfg, "a1", 1.0)?,
                a2: resolve(args.a2, cfg, "a2", 0.0)?,
            },
            "rotational" => VelocityField::Rotational,
            other => return Err(CliError::Usage(format!("unknown velocity kind '{other}'"))),
        }
    };
    let source = resolve(args.source, cfg, "source", 1.0)?;
    let tau_kind = resolve(args.tau.clone(), cfg, "tau", "spectral".into())?;
    let modes = resolve(args.modes, cfg, "modes", 40)?;
    let table_storage;
    let provider = match tau_kind.as_str() {
        "spectral" => {
            if let Some(path) = &args.table {
                table_storage = StabTable::load(path)?;
                TauProvider::Spectral(&table_storage)
            } else if args.direct_psi {
                TauProvider::SpectralDirect(Truncation::square(modes))
            } else {
                return Err(CliError::Usage(
                    "--tau spectral needs --table <path> or --direct-psi".into(),
                ));
            }
        }
        "gen1d" => TauProvider::Gen1d,
        "codina" => TauProvider::Codina,
        "none" => TauProvider::None,
        other => return Err(CliError::Usage(format!("unknown tau provider '{other}'"))),
    };

    let mut sys = fem::assemble(&mesh, mu, &vel, &|_, _| source, &provider)?;
    fem::apply_dirichlet(&mut sys, &mesh, &[])?;
    let solution = fem::solve(&sys)?;
    let stats = bench::peclet_stats(&mesh, &vel, mu)?;

    let format = resolve(args.format.clone(), cfg, "format", "csv".into())?;
    let out = cli.out.clone().unwrap_or_else(|| {
        PathBuf::from(if format == "vtk" { "solution.vtk" } else { "solution.csv" })
    });
    let file = std::fs::File::create(&out)?;
    match format.as_str() {
        "csv" => fem::write_solution_csv(&mesh, &solution, file)?,
        "vtk" => fem::write_solution_vtk(&mesh, &solution, file)?,
        other => return Err(CliError::Usage(format!("unknown format '{other}'"))),
    }
    if !cli.quiet {
        eprintln!(
            "solved {} nodes with tau={}: residual {:.2e} ({} iterations), Pe max {:.3}, solution in {}",
            mesh.num_nodes(),
            provider.label(),
            solution.residual,
            solution.iterations,
            stats.pe_max,
            out.display()
        );
    }
    if cli.json {
        println!(
            "{{\"nodes\":{},\"residual\":{:e},\"iterations\":{},\"pe_max\":{},\"out\":{:?}}}",
            mesh.num_nodes(),
            solution.residual,
            solution.iterations,
            stats.pe_max,
            out.display().to_string()
        );
    }
    Ok(())
}

fn cmd_bench(cli: &Cli, which: &BenchCommand, cfg: &Config) -> Result<(), CliError> {
    let reports = match which {
        BenchCommand::Constant(args) => {
            let dirs_raw = resolve(
                args.dirs.clone(),
                cfg,
                "dirs",
                "0,2,4,6,8,10,12,14,16,18".into(),
            )?;
            let dirs: Vec<u32> = dirs_raw
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| CliError::Usage(format!("bad direction index '{t}'")))
                })
                .collect::<Result<_, _>>()?;
            let n = resolve(args.n, cfg, "n", 81)?;
            let ref_factor = resolve(args.ref_factor, cfg, "ref_factor", 8)?;
            let table =
                load_or_build_table(args.table.as_deref(), 8.0, 0.125, 40, cli.quiet)?;
            bench::bench_constant(&dirs, n, &table, ref_factor)?
        }
        BenchCommand::Rotational(args) => {
            let n = resolve(args.n, cfg, "n", 100)?;
            let ref_factor = resolve(args.ref_factor, cfg, "ref_factor", 8)?;
            let table =
                load_or_build_table(args.table.as_deref(), 8.0, 0.125, 40, cli.quiet)?;
            bench::bench_rotational(n, &table, ref_factor)?
        }
        BenchCommand::External(args) => {
            let mu = resolve(args.mu, cfg, "mu", 1e-3)?;
            let source = resolve(args.source, cfg, "source", 1.0)?;
            let ref_factor = resolve(args.ref_factor, cfg, "ref_factor", 2)?;
            let table =
                load_or_build_table(args.table.as_deref(), 56.0, 0.5, 40, cli.quiet)?;
            bench::bench_external_files(
                &args.mesh,
                &args.velocity,
                mu,
                source,
                &table,
                ref_factor,
            )?
        }
    };
    emit_reports(&reports, cli.out.as_deref(), cli.json, cli.quiet)
}

fn cmd_fig2(cli: &Cli, args: &Fig2Args, cfg: &Config) -> Result<(), CliError> {
    let p_max = resolve(args.p_max, cfg, "p_max", 30.0)?;
    let steps = resolve(args.steps, cfg, "steps", 300)?;
    let modes = resolve(args.modes, cfg, "modes", 40)?;
    if !(0.0 < p_max && p_max <= 60.0) {
        return Err(CliError::Usage(format!("p-max {p_max} outside (0, 60]")));
    }
    if steps == 0 {
        return Err(CliError::Usage("steps must be at least 1".into()));
    }
    let grid: Vec<f64> = (1..=steps).map(|i| p_max * i as f64 / steps as f64).collect();
    let rows = stabilization::fig2_curves(&grid, Truncation::square(modes))?;
    match &cli.out {
        Some(path) => {
            let file = std::fs::File::create(path)?;
            stabilization::write_fig2_csv(&rows, file).map_err(CliError::from)?;
            if !cli.quiet {
                eprintln!("{} rows written to {}", rows.len(), path.display());
            }
        }
        None => {
            let stdout = std::io::stdout();
            stabilization::write_fig2_csv(&rows, stdout.lock()).map_err(CliError::from)?;
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = Config::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Table(args) => cmd_table(cli, args, &cfg),
        Command::Solve(args) => cmd_solve(cli, args, &cfg),
        Command::Bench { which } => cmd_bench(cli, which, &cfg),
        Command::Fig2(args) => cmd_fig2(cli, args, &cfg),
    }
}

fn main() -> ExitCode {
    // clap exits with code 2 on usage errors on its own
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "vms2d: {e}");
            ExitCode::from(e.code())
        }
    }
}
