//! Command-line front end: generate devices, print their statistics and
//! certify them.
//!
//! Exit codes: 0 certified (or success), 1 refused, 2 input error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use selftest_core::device::{
    embed_ideal, perturb, scramble_parts, DeviceRealization, PerturbKind, ScrambleParams, DEFAULT_MAX_SIDE_DIM,
};
use selftest_core::engine::{self_test, Tolerances};
use selftest_core::io::{
    build_report, device_to_json, now_rfc3339, parse_device_with_cap, render_table, render_text, GateSection, IoError,
    ReportFile, Status,
};
use selftest_core::stats::{compare_tables, probability_table, ProbabilityTable};

const EXIT_OK: u8 = 0;
const EXIT_REFUSED: u8 = 1;
const EXIT_INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "selftest", version, about = "Device-independent self-test of a Bell-pair source")]
struct Cli {
    /// Largest accepted dimension per side.
    #[arg(long, global = true, env = "SELFTEST_MAX_DIM", default_value_t = DEFAULT_MAX_SIDE_DIM)]
    max_dim: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a device file.
    Gen(GenArgs),
    /// Print the 36 joint probabilities next to the ideal ones.
    Stats(StatsArgs),
    /// Run the self-test on one or more device files.
    Verify(VerifyArgs),
    /// Re-render a saved report.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Ideal,
    Scrambled,
    Noisy,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum NoiseKind {
    AngleTilt,
    StatePerturb,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_name = "KIND")]
    device: GenKind,
    /// Garbage dimension on side A.
    #[arg(long, default_value_t = 1)]
    ga: usize,
    /// Garbage dimension on side B.
    #[arg(long, default_value_t = 1)]
    gb: usize,
    #[arg(long, default_value_t = 0)]
    pad_a: usize,
    #[arg(long, default_value_t = 0)]
    pad_b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Perturbation applied by `noisy`.
    #[arg(long, value_enum, default_value_t = NoiseKind::AngleTilt)]
    kind: NoiseKind,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// Perturb a scrambled device instead of the ideal one.
    #[arg(long)]
    scrambled_base: bool,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    device: PathBuf,
    #[arg(long, default_value_t = Tolerances::default().gate)]
    tol_gate: f64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(required = true)]
    devices: Vec<PathBuf>,
    #[arg(long, default_value_t = Tolerances::default().gate)]
    tol_gate: f64,
    #[arg(long, default_value_t = Tolerances::default().certification)]
    tol_cert: f64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Report path (single device only).
    #[arg(long, conflicts_with = "out_dir")]
    out: Option<PathBuf>,
    /// Directory receiving `<stem>.report.json` for every device.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    report: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

fn fail(msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    EXIT_INPUT
}

fn input_error(path: &Path, e: &IoError) -> String {
    match e {
        IoError::Read { .. } => e.to_string(),
        _ => format!("{}: {e}", path.display()),
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn gen(args: &GenArgs, max_dim: usize) -> u8 {
    let params = ScrambleParams::new(args.ga, args.gb, args.pad_a, args.pad_b);
    let scrambled = || scramble_parts(params, args.seed, max_dim).map(|s| s.device);
    let device: Result<DeviceRealization, _> = match args.device {
        GenKind::Ideal => Ok(embed_ideal()),
        GenKind::Scrambled => scrambled(),
        GenKind::Noisy => {
            let kind = match args.kind {
                NoiseKind::AngleTilt => PerturbKind::AngleTilt,
                NoiseKind::StatePerturb => PerturbKind::StatePerturb,
            };
            let base = if args.scrambled_base { scrambled() } else { Ok(embed_ideal()) };
            base.and_then(|b| perturb(&b, kind, args.eps, args.seed)).map(|mut d| {
                if args.scrambled_base {
                    if let Some(p) = d.provenance.take() {
                        d.provenance = Some(
                            p.with("garbage_a", args.ga)
                                .with("garbage_b", args.gb)
                                .with("pad_a", args.pad_a)
                                .with("pad_b", args.pad_b),
                        );
                    }
                }
                d
            })
        }
    };
    let device = match device {
        Ok(d) => d,
        Err(e) => return fail(e),
    };
    let mut text = device_to_json(&device);
    text.push('\n');
    match write_or_print(args.out.as_deref(), &text) {
        Ok(()) => EXIT_OK,
        Err(e) => fail(e),
    }
}

fn stats(args: &StatsArgs, max_dim: usize) -> u8 {
    let d = match parse_device_with_cap(&args.device, max_dim) {
        Ok(d) => d,
        Err(e) => return fail(input_error(&args.device, &e)),
    };
    let table = match probability_table(&d) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let gate = GateSection::from_report(&compare_tables(&table, &ProbabilityTable::ideal(), args.tol_gate));
    let text = match args.format {
        Format::Text => render_table(&gate),
        Format::Json => serde_json::to_string_pretty(&gate).expect("table serializes") + "\n",
    };
    print!("{text}");
    EXIT_OK
}

/// One device through the pipeline.
fn verify_one(path: &Path, tol: &Tolerances, max_dim: usize) -> Result<ReportFile, String> {
    let d = parse_device_with_cap(path, max_dim).map_err(|e| input_error(path, &e))?;
    let outcome = self_test(&d, tol);
    Ok(build_report(&d, Some(&path.display().to_string()), tol, &outcome, now_rfc3339()))
}

fn verify(args: &VerifyArgs, max_dim: usize) -> u8 {
    if args.out.is_some() && args.devices.len() > 1 {
        return fail("--out takes a single device; use --out-dir for several");
    }
    for (name, v) in [("--tol-gate", args.tol_gate), ("--tol-cert", args.tol_cert)] {
        if !(v.is_finite() && v > 0.0) {
            return fail(format!("{name} must be a positive number, got {v}"));
        }
    }
    let tol = Tolerances { gate: args.tol_gate, certification: args.tol_cert, ..Tolerances::default() };

    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(args.devices.len());
    let mut results: Vec<Option<Result<ReportFile, String>>> = vec![None; args.devices.len()];
    std::thread::scope(|scope| {
        for (w, chunk) in results.chunks_mut(args.devices.len().div_ceil(workers)).enumerate() {
            let start = w * args.devices.len().div_ceil(workers);
            let paths = &args.devices;
            let tol = &tol;
            scope.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(verify_one(&paths[start + k], tol, max_dim));
                }
            });
        }
    });

    let mut code = EXIT_OK;
    let mut json_reports = Vec::new();
    for (path, result) in args.devices.iter().zip(results) {
        let report = match result.expect("every device is processed") {
            Ok(r) => r,
            Err(e) => {
                code = code.max(fail(e));
                continue;
            }
        };
        if report.verdict.status == Status::Refused {
            code = code.max(EXIT_REFUSED);
        }
        let json = report.to_json() + "\n";
        let target = match (&args.out, &args.out_dir) {
            (Some(out), _) => Some(out.clone()),
            (None, Some(dir)) => {
                let stem = path.file_stem().map_or_else(|| "device".into(), |s| s.to_string_lossy().into_owned());
                Some(dir.join(format!("{stem}.report.json")))
            }
            (None, None) => None,
        };
        if let Some(target) = target {
            if let Err(e) = fs::write(&target, &json) {
                code = code.max(fail(format!("{}: {e}", target.display())));
            }
        }
        match args.format {
            Format::Text => {
                if args.devices.len() > 1 {
                    println!();
                }
                print!("{}", render_text(&report));
            }
            Format::Json => json_reports.push(report),
        }
    }
    if args.format == Format::Json {
        let text = if args.devices.len() == 1 {
            json_reports.first().map(|r| r.to_json())
        } else {
            Some(serde_json::to_string_pretty(&json_reports).expect("reports serialize"))
        };
        if let Some(text) = text {
            println!("{text}");
        }
    }
    code
}

fn report(args: &ReportArgs) -> u8 {
    let text = match fs::read_to_string(&args.report) {
        Ok(t) => t,
        Err(e) => return fail(format!("{}: {e}", args.report.display())),
    };
    let report = match ReportFile::from_json(&text) {
        Ok(r) => r,
        Err(e) => return fail(format!("{}: {e}", args.report.display())),
    };
    match args.format {
        Format::Text => print!("{}", render_text(&report)),
        Format::Json => println!("{}", report.to_json()),
    }
    match report.verdict.status {
        Status::Certified => EXIT_OK,
        Status::Refused => EXIT_REFUSED,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.max_dim != DEFAULT_MAX_SIDE_DIM {
        eprintln!(
            "warning: dimension cap set to {} (default {DEFAULT_MAX_SIDE_DIM}); dense algebra grows with the cube of the dimension",
            cli.max_dim
        );
    }
    let code = match &cli.command {
        Command::Gen(args) => gen(args, cli.max_dim),
        Command::Stats(args) => stats(args, cli.max_dim),
        Command::Verify(args) => verify(args, cli.max_dim),
        Command::Report(args) => report(args),
    };
    ExitCode::from(code)
}
