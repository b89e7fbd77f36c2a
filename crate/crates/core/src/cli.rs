//! Command-line front end: `simulate`, `equilibrium`, `spectrum`, `verify`.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::scenario::Scenario;
use crate::solver::output::{write_diagnostics_csv, write_snapshot_csv};
use crate::solver::simulate;
use crate::stability::spectrum_report;
use crate::verify::{self, Mutation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_NO_EQUILIBRIUM: i32 = 3;
pub const EXIT_PROPERTY: i32 = 4;

pub const THREADS_ENV: &str = "MSDIFF_THREADS";

#[derive(Debug, Parser)]
#[command(name = "msdiff", version, about = "Maxwell-Stefan reaction-diffusion simulator and analysis tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write diagnostics.csv, snapshots and summary.json.
    Simulate {
        scenario: PathBuf,
        /// Output directory; overrides `outputs.directory` in the scenario.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the chemical equilibrium reached from the mean initial state.
    Equilibrium { scenario: PathBuf },
    /// Print the linearized spectrum at that equilibrium.
    Spectrum {
        scenario: PathBuf,
        #[arg(long, default_value_t = 8)]
        k_max: usize,
    },
    /// Run the randomized property battery.
    Verify {
        /// Species counts, either `N` or an inclusive range `A..B`.
        #[arg(long, default_value = "2..8")]
        n_species: SpeciesRange,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, hide = true)]
        mutate: Option<MutationArg>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpeciesRange {
    pub lo: usize,
    pub hi: usize,
}

impl SpeciesRange {
    pub fn counts(&self) -> Vec<usize> {
        (self.lo..=self.hi).collect()
    }
}

impl FromStr for SpeciesRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("bad species count {t:?}: {e}"));
        let (lo, hi) = match s.split_once("..") {
            Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
            None => {
                let n = parse(s)?;
                (n, n)
            }
        };
        if lo < 2 || hi < lo {
            return Err(format!("species range {s:?} must satisfy 2 <= lo <= hi"));
        }
        Ok(Self { lo, hi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MutationArg {
    FlipFrictionOffdiag,
}

#[derive(Debug)]
pub enum CliError {
    Lib(Error),
    Usage(String),
    Io(String),
    Property(Vec<&'static str>),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Property(names) => write!(f, "property failures: {}", names.join(", ")),
        }
    }
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Lib(e) => e.kind(),
            CliError::Usage(_) => "Usage",
            CliError::Io(_) => "Io",
            CliError::Property(_) => "PropertyFailure",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(e) => exit_code(e),
            CliError::Usage(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Property(_) => EXIT_PROPERTY,
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::DimensionMismatch { .. }
        | Error::InvalidSpec(_)
        | Error::InvalidNetwork(_)
        | Error::OutOfDomain(_)
        | Error::NonInteriorComposition { .. }
        | Error::MassNotConserved { .. }
        | Error::NonIntegrableConfig(_) => EXIT_CONFIG,
        Error::NoEquilibrium { .. } => EXIT_NO_EQUILIBRIUM,
        Error::SingularSystem
        | Error::NotInE { .. }
        | Error::EigenSolverFailed
        | Error::NegativeConcentration { .. }
        | Error::NewtonDiverged { .. }
        | Error::NotAnEquilibrium { .. }
        | Error::NullspaceDimension { .. }
        | Error::SemisimplicityUndecided { .. }
        | Error::InsufficientDecay { .. }
        | Error::StepRejected { .. } => EXIT_NUMERICAL,
    }
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    kind: &'a str,
    message: String,
    exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    failing: Option<&'a [&'static str]>,
}

/// The `ERROR {json}` line written to standard error.
pub fn error_line(e: &CliError) -> String {
    let failing = match e {
        CliError::Property(names) => Some(names.as_slice()),
        _ => None,
    };
    let line = ErrorLine { kind: e.kind(), message: e.to_string(), exit_code: e.exit_code(), failing };
    format!("ERROR {}", serde_json::to_string(&line).expect("plain data serializes"))
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub t_end: f64,
    pub steps: usize,
    pub records: usize,
    pub initial_free_energy: f64,
    pub final_free_energy: f64,
    pub reference_y_star: Vec<f64>,
    pub conserved_drift: Vec<f64>,
    pub max_sum_deviation: f64,
    pub min_component: f64,
    pub final_min_component: f64,
    pub snapshots: Vec<String>,
    pub wall_time_s: f64,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("cannot write {}: {e}", path.display()))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

pub fn snapshot_name(t: f64) -> String {
    format!("snap_{t}.csv")
}

fn cmd_simulate(path: &Path, output: Option<PathBuf>, out: &mut dyn Write) -> Result<(), CliError> {
    let scenario = Scenario::load(path)?;
    let dir = output
        .or_else(|| scenario.output_dir.clone())
        .ok_or_else(|| CliError::Usage("no output directory: pass --output or set outputs.directory".into()))?;
    scenario.config.validate()?;
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;

    let start = Instant::now();
    let result = simulate(&scenario.config)?;
    let wall = start.elapsed().as_secs_f64();

    write_file(&dir.join("diagnostics.csv"), |w| write_diagnostics_csv(&result.diagnostics, w))?;
    let mut names = Vec::new();
    for snap in &result.snapshots {
        let name = snapshot_name(snap.time);
        write_file(&dir.join(&name), |w| write_snapshot_csv(snap, w))?;
        names.push(name);
    }
    let first = result.diagnostics.first().expect("initial record");
    let last = result.diagnostics.last().expect("final record");
    let summary = Summary {
        t_end: scenario.config.t_end,
        steps: result.steps,
        records: result.diagnostics.len(),
        initial_free_energy: first.free_energy,
        final_free_energy: last.free_energy,
        reference_y_star: result.reference.y_star().as_vector().iter().copied().collect(),
        conserved_drift: result.conserved_drift.clone(),
        max_sum_deviation: result.max_sum_deviation,
        min_component: result.min_component,
        final_min_component: result.final_field.min_component(),
        snapshots: names,
        wall_time_s: wall,
    };
    write_file(&dir.join("summary.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &summary).map_err(std::io::Error::other)?;
        writeln!(w)
    })?;
    writeln!(out, "wrote {} records and {} snapshots to {}", summary.records, summary.snapshots.len(), dir.display())
        .map_err(|e| CliError::Io(e.to_string()))
}

fn print_json(out: &mut dyn Write, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    writeln!(out, "{text}").map_err(|e| CliError::Io(e.to_string()))
}

fn cmd_equilibrium(path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let scenario = Scenario::load(path)?;
    print_json(out, &scenario.equilibrium()?)
}

fn cmd_spectrum(path: &Path, k_max: usize, out: &mut dyn Write) -> Result<(), CliError> {
    let scenario = Scenario::load(path)?;
    let eq = scenario.equilibrium()?;
    let report = spectrum_report(&scenario.spec, &scenario.network, &eq.composition(), scenario.config.grid.extents(), k_max)?;
    print_json(out, &report)
}

fn cmd_verify(range: SpeciesRange, trials: usize, seed: u64, mutate: Option<MutationArg>, out: &mut dyn Write) -> Result<(), CliError> {
    if trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    let mutation = mutate.map(|m| match m {
        MutationArg::FlipFrictionOffdiag => Mutation::FlipFrictionOffDiagonal,
    });
    let report = verify::run(&range.counts(), trials, seed, mutation)?;
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    writeln!(out, "species {}..{}, {} trials, seed {}", range.lo, range.hi, trials, seed).map_err(io)?;
    for p in &report.properties {
        writeln!(
            out,
            "{:<5} {:<34} {:>7}/{:<7} worst {:.3e} (tol {:.0e})",
            if p.ok() { "PASS" } else { "FAIL" },
            p.name,
            p.passed,
            p.checked,
            p.worst,
            p.tolerance
        )
        .map_err(io)?;
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::Property(report.failing()))
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV}={value:?} must be a positive integer")))?;
    // A second configuration attempt in the same process is harmless.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Simulate { scenario, output } => cmd_simulate(&scenario, output, out),
        Command::Equilibrium { scenario } => cmd_equilibrium(&scenario, out),
        Command::Spectrum { scenario, k_max } => cmd_spectrum(&scenario, k_max, out),
        Command::Verify { n_species, trials, seed, mutate } => cmd_verify(n_species, trials, seed, mutate, out),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            let _ = write!(err, "{e}");
            let _ = writeln!(err, "{}", error_line(&CliError::Usage(e.kind().to_string())));
            return EXIT_CONFIG;
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "{}", error_line(&e));
            e.exit_code()
        }
    }
}
