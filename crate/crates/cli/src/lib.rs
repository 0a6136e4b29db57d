//! Experiment harness for the `ncdyadic` library: config-driven suites,
//! standalone file validation and report inspection.

pub mod config;
pub mod error;
pub mod output;
pub mod suites;

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ncdyadic::haar::validate_system;
use ncdyadic::io::{self, FieldFile, MeasureFile, ShiftFile, SystemFile, SystemRef};
use ncdyadic::lattice::{validate_measure, Measure};
use ncdyadic::opalgebra::HERMITIAN_TOL;
use ncdyadic::shift::{shift_xi, testing_constant};
use serde_json::{json, Value};

pub use config::ExperimentConfig;
pub use error::CliError;
pub use output::ReportFile;

pub const THREADS_VAR: &str = "NCDYADIC_THREADS";

/// Worker count from `NCDYADIC_THREADS`, or the rayon default.
pub fn thread_count() -> Result<usize, CliError> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(t),
            _ => Err(CliError::Config(format!("{THREADS_VAR}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

/// Runs the configured suite, writes the three report files and returns
/// the report; the caller decides the exit status from its summary.
pub fn run(config: &ExperimentConfig, config_path: Option<&Path>) -> Result<ReportFile, CliError> {
    let threads = thread_count()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let out = pool.install(|| suites::run_suite(config))?;
    let meta = output::Meta {
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        threads,
        config_path: config_path.map(|p| p.display().to_string()),
    };
    let echo = serde_json::to_value(config).expect("config serializes");
    output::write_reports(&config.output, config.suite.name(), config.seed, echo, &out, &meta)
}

/// Loads a config file, runs it, and maps failed checks to an error.
pub fn run_file(path: &Path) -> Result<ReportFile, CliError> {
    let config = ExperimentConfig::load(path)?;
    let report = run(&config, Some(path))?;
    if report.summary.failed > 0 {
        return Err(CliError::ChecksFailed(report.summary.failed));
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileKind {
    Measure,
    System,
    Field,
    Shift,
}

impl std::str::FromStr for FileKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "measure" => Ok(FileKind::Measure),
            "system" => Ok(FileKind::System),
            "field" => Ok(FileKind::Field),
            "shift" => Ok(FileKind::Shift),
            other => Err(CliError::Config(format!("unknown file kind {other:?}"))),
        }
    }
}

/// Validates a standalone file; returns a JSON report and whether it passed.
pub fn validate_file(kind: FileKind, path: &Path) -> Result<(Value, bool), CliError> {
    let text = error::read(path)?;
    validate_text(kind, &text)
}

pub fn validate_text(kind: FileKind, text: &str) -> Result<(Value, bool), CliError> {
    match kind {
        FileKind::Measure => {
            let mu = io::parse::<MeasureFile>(text)?.to_measure()?;
            let report = validate_measure(&mu);
            let ok = report.valid;
            Ok((json!({ "kind": "measure", "digest": suites::measure_digest(&mu), "report": report }), ok))
        }
        FileKind::System => {
            let file = io::parse::<SystemFile>(text)?;
            let system = file.to_system()?;
            let mu = match &file.measure {
                Some(m) => m.to_measure()?,
                None => Measure::uniform(*system.lattice()),
            };
            if mu.lattice() != system.lattice() {
                return Err(ncdyadic::Error::ShapeMismatch("system and measure lattices differ".into()).into());
            }
            let report = validate_system(&system, &mu);
            let ok = report.passed();
            Ok((
                json!({
                    "kind": "system",
                    "functions": system.functions().len(),
                    "cancellative": report.cancellative,
                    "gram_residual": report.gram_residual,
                    "failures": report.failures,
                    "warnings": report.warnings,
                    "failed_cubes": report.cubes.iter().filter(|c| !c.passed()).collect::<Vec<_>>(),
                }),
                ok,
            ))
        }
        FileKind::Field => {
            let f = io::parse::<FieldFile>(text)?.to_field()?;
            let finite = f.is_finite();
            let hermitian = f.hermitian_residual();
            let min_eig = if finite && hermitian <= HERMITIAN_TOL { Some(f.min_eigenvalue()?) } else { None };
            let positive = min_eig.is_some_and(|m| m >= -1e-12);
            let ok = finite && hermitian <= HERMITIAN_TOL && positive;
            Ok((
                json!({
                    "kind": "field",
                    "n": f.n(),
                    "leaves": f.leaves().len(),
                    "finite": finite,
                    "hermitian_residual": hermitian,
                    "min_eigenvalue": min_eig,
                    "positive": positive,
                    "digest": suites::field_digest(&f),
                }),
                ok,
            ))
        }
        FileKind::Shift => {
            let file = io::parse::<ShiftFile>(text)?;
            let inline_lattice = [&file.phi, &file.psi].into_iter().find_map(|s| match s {
                Some(SystemRef::Inline(sys)) => Some((sys.d, sys.depth)),
                _ => None,
            });
            let mu = match (&file.measure, inline_lattice) {
                (Some(m), _) => m.to_measure()?,
                (None, Some((d, k))) => Measure::uniform(ncdyadic::DyadicLattice::new(d, k)?),
                (None, None) => {
                    return Err(CliError::Config(
                        "shift file needs a measure or an inline system to fix the lattice".into(),
                    ))
                }
            };
            let shift = file.to_shift(&mu)?;
            let phi = validate_system(shift.phi(), &mu);
            let psi = validate_system(shift.psi(), &mu);
            let ok = phi.passed() && psi.passed();
            Ok((
                json!({
                    "kind": "shift",
                    "r": shift.r(),
                    "s": shift.s(),
                    "symbols": shift.symbols().len(),
                    "sup_symbol": shift.sup_symbol(),
                    "xi": shift_xi(&shift, &mu),
                    "testing_constant": testing_constant(&shift, &mu),
                    "phi_failures": phi.failures,
                    "psi_failures": psi.failures,
                    "digest": suites::operator_digest(&shift),
                }),
                ok,
            ))
        }
    }
}

/// Summary of an existing report directory; fails when checks failed or the
/// CSV no longer matches its recorded digest.
pub fn report_dir(dir: &Path) -> Result<(String, bool), CliError> {
    let (report, intact) = output::read_report(dir)?;
    let mut text = format!(
        "suite {} (seed {}): {} rows, {} checks, {} failed\ncsv digest {}\n",
        report.suite,
        report.seed,
        report.summary.rows,
        report.summary.checks,
        report.summary.failed,
        if intact { "ok" } else { "MISMATCH" },
    );
    for record in &report.instances {
        for check in record.checks.iter().filter(|c| !c.pass) {
            text.push_str(&format!(
                "FAIL {}: {} lhs={} rhs={} ratio={}\n",
                record.label, check.id, check.lhs, check.rhs, check.ratio
            ));
        }
    }
    Ok((text, intact && report.summary.pass))
}
