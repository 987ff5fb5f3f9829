//! `bell-lab` command-line front end.
//!
//! Every subcommand writes one JSON document (or CSV where offered) to
//! standard output or `--output`. Failures go to standard error as a line
//! starting `ERR:<exit code>:`. Exit codes: 0 success, 1 usage or invalid
//! input, 2 numerical failure, 3 enumeration cap exceeded.
//!
//! All randomness flows from `--seed` (default 0). `BELL_LAB_THREADS` caps the
//! worker count; results do not depend on it.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use bell_lab::behavior::{is_local_with, MembershipOptions};
use bell_lab::bilocal::{sweep_point, visibility_grid, SweepRow};
use bell_lab::covariance::{
    check_covariance, covariance_forces_locality, induced_behavior, CovariantModel,
};
use bell_lab::freewill::{
    deficit, simulate_detection_model, simulate_measurement_dependent, MeasurementDependentModel,
};
use bell_lab::quantum::{
    chsh_optimal_settings, quantum_behavior, werner_state, BlochVector, LocalRotation,
    MeasurementSettings,
};
use bell_lab::randomness::{
    bits_to_text, pack_bits, serial_composition, simulate_qrng_rounds, ExpansionStage,
};
use bell_lab::{
    algebraic_bound, chsh_expression, evaluate, local_bound, Behavior, BellExpression, Error,
    Scenario,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "BELL_LAB_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "bell-lab",
    version,
    about = "Bell nonlocality toolkit: local polytopes, hidden-variable models, bilocality and randomness accounting"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Seed for every random draw
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output format
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write output to this file instead of standard output
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// CHSH value of a Werner state and the locality verdict
    Chsh {
        /// Singlet weight of the Werner state
        #[arg(long)]
        visibility: f64,
        /// Measurement settings file (default: CHSH-optimal settings)
        #[arg(long)]
        settings: Option<PathBuf>,
        /// Membership tolerance
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Decide whether a behavior is local
    Membership {
        /// Behavior JSON file
        #[arg(long)]
        behavior: PathBuf,
        /// Membership tolerance
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Largest number of deterministic strategies to enumerate
        #[arg(long, default_value_t = bell_lab::behavior::DEFAULT_STRATEGY_CAP)]
        cap: u64,
    },
    /// Local and algebraic bounds of a Bell expression
    LocalBound {
        /// Bell expression JSON file
        #[arg(long)]
        expression: PathBuf,
    },
    /// Bilocal quantity for entanglement swapping with two Werner sources
    Bilocal {
        /// Visibility of the first source
        #[arg(long, requires = "v2", conflicts_with = "sweep")]
        v1: Option<f64>,
        /// Visibility of the second source
        #[arg(long, requires = "v1", conflicts_with = "sweep")]
        v2: Option<f64>,
        /// Sweep an evenly spaced grid with this many points per axis
        #[arg(long)]
        sweep: Option<usize>,
    },
    /// Measurement dependence and the free-will deficit
    Freewill {
        #[command(subcommand)]
        command: FreewillCommand,
    },
    /// Covariant deterministic models
    Covariance {
        #[command(subcommand)]
        command: CovarianceCommand,
    },
    /// Randomness expansion accounting and round simulation
    Expand {
        #[command(subcommand)]
        command: ExpandCommand,
    },
}

#[derive(Subcommand, Debug)]
enum FreewillCommand {
    /// log2(N) - log2(M) bits for a choice among M of N options
    Deficit {
        /// Nominal number of options
        #[arg(long)]
        n: u64,
        /// Options actually available
        #[arg(long)]
        m: u64,
    },
    /// Monte Carlo of the detection-loophole model
    Detection {
        /// Hidden-variable samples
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        /// Measurement settings file (default: CHSH-optimal settings)
        #[arg(long)]
        settings: Option<PathBuf>,
    },
    /// Monte Carlo of the measurement-dependent model
    MeasurementDependent {
        /// Rounds
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        /// Measurement settings file (default: CHSH-optimal settings)
        #[arg(long)]
        settings: Option<PathBuf>,
        /// Rotation axis for Bob's side of the shared state, as x,y,z
        #[arg(long, value_delimiter = ',', requires = "rotation_angle")]
        rotation_axis: Option<Vec<f64>>,
        /// Rotation angle in radians
        #[arg(long, requires = "rotation_axis")]
        rotation_angle: Option<f64>,
    },
}

#[derive(Subcommand, Debug)]
enum CovarianceCommand {
    /// Check a model for frame covariance and report its behavior
    Check {
        /// Covariant model JSON file
        #[arg(long)]
        model: PathBuf,
    },
    /// Check that covariant models only produce local behaviors
    ForcesLocality {
        /// Hidden-variable alphabet size
        #[arg(long, default_value_t = 2)]
        lambda_count: usize,
        /// Random models when the space is too large to enumerate
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        /// Scenario as nX,nY,nA,nB
        #[arg(long, value_delimiter = ',', default_value = "2,2,2,2")]
        scenario: Vec<usize>,
    },
}

#[derive(Subcommand, Debug)]
enum ExpandCommand {
    /// Serial-composition ledger for a chain of stages
    Ledger {
        /// JSON file with an array of stages
        #[arg(long)]
        stages: PathBuf,
        /// Initial seed bits
        #[arg(long)]
        seed_bits: f64,
    },
    /// Simulate QRNG rounds and emit the output bits
    Simulate {
        /// Rounds
        #[arg(long)]
        rounds: u64,
        /// Werner visibility of the shared pair
        #[arg(long, default_value_t = 1.0)]
        visibility: f64,
        /// Measurement settings file (default: CHSH-optimal settings)
        #[arg(long)]
        settings: Option<PathBuf>,
        /// Bit encoding
        #[arg(long, value_enum, default_value_t = BitFormat::Text)]
        bits: BitFormat,
        /// File for the bitstream (required for packed bits)
        #[arg(long)]
        bits_out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum BitFormat {
    Text,
    Packed,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::CapExceeded { .. } => 3,
            Error::NumericalFailure(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::usage(format!("i/o error: {e}"))
    }
}

type Outcome = Result<(), Failure>;

/// Parses `argv` (including the program name), runs the command, and returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            let rendered = e.render().to_string();
            let first = rendered
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            let _ = writeln!(err, "ERR:1: {first}");
            let _ = write!(err, "{rendered}");
            return 1;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "ERR:{}: {}", f.code, f.message.replace('\n', " "));
            f.code
        }
    }
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Outcome {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(v.parse::<usize>().ok().filter(|n| *n >= 1).ok_or_else(|| {
            Failure::usage(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))
        })?),
        Err(_) => None,
    };
    let mut buffer = Vec::new();
    let result = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::usage(e.to_string()))?
            .install(|| dispatch(cli, &mut buffer)),
        None => dispatch(cli, &mut buffer),
    };
    result?;
    match &cli.common.output {
        Some(path) => fs::write(path, &buffer)?,
        None => stdout.write_all(&buffer)?,
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("invalid {what} {}: {e}", path.display())))
}

fn write_json(out: &mut Vec<u8>, value: &impl Serialize) -> Outcome {
    serde_json::to_writer(&mut *out, value).map_err(|e| Failure::usage(e.to_string()))?;
    out.push(b'\n');
    Ok(())
}

fn json_only(common: &Common, command: &str) -> Outcome {
    if common.format == Format::Csv {
        return Err(Failure::usage(format!(
            "{command} has no CSV output; use --format json"
        )));
    }
    Ok(())
}

fn settings_or_default(path: &Option<PathBuf>) -> Result<MeasurementSettings, Failure> {
    match path {
        Some(p) => read_json(p, "settings"),
        None => Ok(chsh_optimal_settings()),
    }
}

fn dispatch(cli: &Cli, out: &mut Vec<u8>) -> Outcome {
    let common = &cli.common;
    match &cli.command {
        Command::Chsh {
            visibility,
            settings,
            tol,
        } => {
            let settings = settings_or_default(settings)?;
            if settings.alice().len() != 2 || settings.bob().len() != 2 {
                return Err(Failure::usage("CHSH needs two directions per party"));
            }
            let behavior = quantum_behavior(&werner_state(*visibility)?, &settings);
            let chsh = evaluate(&chsh_expression(), &behavior)?;
            let opts = MembershipOptions {
                tolerance: *tol,
                ..MembershipOptions::default()
            };
            let verdict = if is_local_with(&behavior, opts)?.is_local() {
                "local"
            } else {
                "nonlocal"
            };
            match common.format {
                Format::Json => write_json(
                    out,
                    &json!({ "visibility": visibility, "chsh": chsh, "localBound": 2.0, "verdict": verdict }),
                ),
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(&mut *out);
                    w.write_record(["visibility", "chsh", "verdict"])
                        .map_err(csv_failure)?;
                    w.write_record([
                        visibility.to_string(),
                        chsh.to_string(),
                        verdict.to_string(),
                    ])
                    .map_err(csv_failure)?;
                    w.flush()?;
                    Ok(())
                }
            }
        }
        Command::Membership { behavior, tol, cap } => {
            json_only(common, "membership")?;
            let behavior: Behavior = read_json(behavior, "behavior")?;
            let opts = MembershipOptions {
                tolerance: *tol,
                strategy_cap: *cap,
            };
            write_json(out, &is_local_with(&behavior, opts)?)
        }
        Command::LocalBound { expression } => {
            let expr: BellExpression = read_json(expression, "expression")?;
            let lb = local_bound(&expr)?;
            let ab = algebraic_bound(&expr);
            match common.format {
                Format::Json => write_json(out, &json!({ "localBound": lb, "algebraicBound": ab })),
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(&mut *out);
                    w.write_record(["localBound", "algebraicBound"])
                        .map_err(csv_failure)?;
                    w.write_record([lb.to_string(), ab.to_string()])
                        .map_err(csv_failure)?;
                    w.flush()?;
                    Ok(())
                }
            }
        }
        Command::Bilocal { v1, v2, sweep } => bilocal(common, *v1, *v2, *sweep, out),
        Command::Freewill { command } => freewill(common, command, out),
        Command::Covariance { command } => {
            json_only(common, "covariance")?;
            match command {
                CovarianceCommand::Check { model } => {
                    let model: CovariantModel = read_json(model, "model")?;
                    let check = check_covariance(&model);
                    let behavior = if check.covariant {
                        Some(induced_behavior(&model)?)
                    } else {
                        None
                    };
                    write_json(out, &json!({ "check": check, "behavior": behavior }))
                }
                CovarianceCommand::ForcesLocality {
                    lambda_count,
                    trials,
                    scenario,
                } => {
                    let &[nx, ny, na, nb] = scenario.as_slice() else {
                        return Err(Failure::usage("--scenario takes four counts nX,nY,nA,nB"));
                    };
                    let s = Scenario::new(nx, ny, na, nb)?;
                    write_json(
                        out,
                        &covariance_forces_locality(s, *lambda_count, *trials, common.seed)?,
                    )
                }
            }
        }
        Command::Expand { command } => {
            json_only(common, "expand")?;
            match command {
                ExpandCommand::Ledger { stages, seed_bits } => {
                    let stages: Vec<ExpansionStage> = read_json(stages, "stages")?;
                    write_json(out, &serial_composition(&stages, *seed_bits)?)
                }
                ExpandCommand::Simulate {
                    rounds,
                    visibility,
                    settings,
                    bits,
                    bits_out,
                } => {
                    if *bits == BitFormat::Packed && bits_out.is_none() {
                        return Err(Failure::usage("packed bits need --bits-out"));
                    }
                    let settings = settings_or_default(settings)?;
                    let run = simulate_qrng_rounds(
                        &settings,
                        &werner_state(*visibility)?,
                        *rounds,
                        common.seed,
                    )?;
                    let stream = run.bitstream();
                    let encoded = match bits {
                        BitFormat::Text => bits_to_text(&stream).into_bytes(),
                        BitFormat::Packed => pack_bits(&stream),
                    };
                    let mut summary = json!({
                        "rounds": run.rounds,
                        "chsh": run.chsh,
                        "onesFraction": run.ones_fraction,
                        "bitCount": stream.len(),
                    });
                    match bits_out {
                        Some(path) => fs::write(path, &encoded)?,
                        None => {
                            summary["bits"] =
                                json!(String::from_utf8(encoded).expect("text bits are ASCII"))
                        }
                    }
                    write_json(out, &summary)
                }
            }
        }
    }
}

fn csv_failure(e: csv::Error) -> Failure {
    Failure::usage(format!("csv error: {e}"))
}

fn bilocal(
    common: &Common,
    v1: Option<f64>,
    v2: Option<f64>,
    sweep: Option<usize>,
    out: &mut Vec<u8>,
) -> Outcome {
    let grid = match (v1, v2, sweep) {
        (Some(a), Some(b), None) => (vec![a], vec![b]),
        (None, None, Some(n)) if n >= 1 => (visibility_grid(n), visibility_grid(n)),
        (None, None, Some(_)) => return Err(Failure::usage("--sweep needs at least one point")),
        _ => return Err(Failure::usage("give --v1 and --v2, or --sweep")),
    };
    let single = sweep.is_none();
    match common.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            // Rows are computed one v1 value at a time and written in order.
            let mut wrote_header = false;
            for &a in &grid.0 {
                let rows = row_block(a, &grid.1)?;
                for r in rows {
                    w.serialize(r).map_err(csv_failure)?;
                    wrote_header = true;
                }
            }
            if !wrote_header {
                w.write_record([
                    "v1",
                    "v2",
                    "product",
                    "S_biloc",
                    "chsh",
                    "violatesBilocal",
                    "violatesCHSH",
                ])
                .map_err(csv_failure)?;
            }
            w.flush()?;
            Ok(())
        }
        Format::Json => {
            let mut rows = Vec::new();
            for &a in &grid.0 {
                rows.extend(row_block(a, &grid.1)?);
            }
            if single {
                write_json(out, &rows[0])
            } else {
                write_json(out, &rows)
            }
        }
    }
}

fn row_block(v1: f64, v2s: &[f64]) -> Result<Vec<SweepRow>, Failure> {
    v2s.par_iter()
        .map(|&v2| sweep_point(v1, v2))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::from)
}

fn freewill(common: &Common, command: &FreewillCommand, out: &mut Vec<u8>) -> Outcome {
    match command {
        FreewillCommand::Deficit { n, m } => {
            let d = deficit(*n, *m)?;
            match common.format {
                Format::Json => write_json(out, &d),
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(&mut *out);
                    w.serialize(d).map_err(csv_failure)?;
                    w.flush()?;
                    Ok(())
                }
            }
        }
        FreewillCommand::Detection { samples, settings } => {
            json_only(common, "freewill detection")?;
            let settings = settings_or_default(settings)?;
            let run = simulate_detection_model(&settings, *samples, common.seed)?;
            write_json(
                out,
                &json!({
                    "behavior": run.behavior,
                    "correlators": run.correlators,
                    "stats": {
                        "detectionRate": run.detection_rate.mean,
                        "stderr": run.detection_rate.stderr,
                        "deficitBits": run.deficit_bits,
                    },
                }),
            )
        }
        FreewillCommand::MeasurementDependent {
            samples,
            settings,
            rotation_axis,
            rotation_angle,
        } => {
            json_only(common, "freewill measurement-dependent")?;
            let mut settings = settings_or_default(settings)?;
            if let (Some(axis), Some(angle)) = (rotation_axis, rotation_angle) {
                if axis.len() != 3 {
                    return Err(Failure::usage(
                        "--rotation-axis takes three components x,y,z",
                    ));
                }
                let axis = BlochVector::normalized(axis[0], axis[1], axis[2])?;
                settings = settings.with_bob_rotated(&LocalRotation::new(axis, *angle));
            }
            let model = MeasurementDependentModel::new(settings.alice().to_vec())?;
            let run =
                simulate_measurement_dependent(&model, settings.bob(), *samples, common.seed)?;
            write_json(out, &run)
        }
    }
}
