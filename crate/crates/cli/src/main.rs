use std::collections::BTreeMap;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lerw3d_cli::config::{normalize_key, parse_config};
use lerw3d_cli::output::render;
use lerw3d_cli::{run, CliError, ExperimentManifest, Format};

#[derive(Parser)]
#[command(name = "lerw3d", version, about = "Loop-erased random walk and uniform spanning tree experiments on dyadic cubic lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample LERW or SRW paths from the origin to the unit sphere
    Sample(Flags),
    /// Sample wired uniform spanning trees of the unit ball
    Ust(Flags),
    /// Length moments and the growth-exponent fit
    Beta(Flags),
    /// Escape probabilities and their decay exponent
    Escape(Flags),
    /// Quasi-loop frequencies
    Quasiloops(Flags),
    /// Avoidance probability of one LERW path near a point
    Hittability(Flags),
    /// The F, H, I and K event suite on one path (exit code 3 when undecided)
    Events(Flags),
    /// Tube events and the A^m pipeline
    Tube(Flags),
    /// V events of a conditioned continuation
    Vevents(Flags),
    /// Modulus-of-continuity statistic of parametrized LERW curves
    Modulus(Flags),
    /// Modulus statistic after each box exit
    AnnulusScan(Flags),
    /// Exact solves and enumerations on small domains
    Oracle(Flags),
    /// Run the acceptance suite
    Selftest(Flags),
}

#[derive(Args, Clone, Default)]
struct Flags {
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads; results do not depend on this
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    /// Lattice scale, or a scale range such as 4..9 for `beta`
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    m0: Option<String>,
    #[arg(long)]
    m1: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    /// Growth exponent, or `auto` for a quick fit
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    cstar: Option<String>,
    #[arg(long)]
    chat: Option<String>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    outer: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    l: Option<String>,
    #[arg(long)]
    x: Option<String>,
    #[arg(long)]
    box_half: Option<String>,
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    what: Option<String>,
    #[arg(long)]
    only: Option<String>,
    /// Any other parameter as key=value; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output file; `.l3dp` writes a binary path (`sample` only)
    #[arg(long)]
    out: Option<String>,
    /// `key = value` file applied before the flags
    #[arg(long)]
    config: Option<String>,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: FormatArg,
}

#[derive(clap::ValueEnum, Clone, Copy, Default)]
enum FormatArg {
    #[default]
    Jsonl,
    Csv,
}

impl Command {
    fn parts(self) -> (&'static str, Flags) {
        match self {
            Command::Sample(f) => ("sample", f),
            Command::Ust(f) => ("ust", f),
            Command::Beta(f) => ("beta", f),
            Command::Escape(f) => ("escape", f),
            Command::Quasiloops(f) => ("quasiloops", f),
            Command::Hittability(f) => ("hittability", f),
            Command::Events(f) => ("events", f),
            Command::Tube(f) => ("tube", f),
            Command::Vevents(f) => ("vevents", f),
            Command::Modulus(f) => ("modulus", f),
            Command::AnnulusScan(f) => ("annulus-scan", f),
            Command::Oracle(f) => ("oracle", f),
            Command::Selftest(f) => ("selftest", f),
        }
    }
}

fn io_err(context: String) -> impl FnOnce(std::io::Error) -> CliError {
    move |source| CliError::Io { context, source }
}

fn manifest(sub: &str, f: &Flags) -> Result<ExperimentManifest, CliError> {
    let mut raw = match &f.config {
        Some(path) => parse_config(&std::fs::read_to_string(path).map_err(io_err(format!("reading {path}")))?)?,
        None => BTreeMap::new(),
    };
    let named = [
        ("seed", &f.seed),
        ("workers", &f.workers),
        ("samples", &f.samples),
        ("n", &f.n),
        ("m", &f.m),
        ("m0", &f.m0),
        ("m1", &f.m1),
        ("delta", &f.delta),
        ("eps", &f.eps),
        ("beta", &f.beta),
        ("r", &f.r),
        ("cstar", &f.cstar),
        ("chat", &f.chat),
        ("kind", &f.kind),
        ("variant", &f.variant),
        ("outer", &f.outer),
        ("theta", &f.theta),
        ("l", &f.l),
        ("x", &f.x),
        ("box_half", &f.box_half),
        ("h", &f.h),
        ("what", &f.what),
        ("only", &f.only),
    ];
    for (k, v) in named {
        if let Some(v) = v {
            raw.insert(k.to_string(), v.clone());
        }
    }
    for kv in &f.set {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(CliError::Validation(format!("--set: `{kv}` is not key=value")));
        };
        raw.insert(normalize_key(k.trim()), v.trim().to_string());
    }
    let format = match f.format {
        FormatArg::Jsonl => Format::Jsonl,
        FormatArg::Csv => Format::Csv,
    };
    ExperimentManifest::build(sub, raw, format, f.config.clone(), f.out.clone())
}

fn execute(sub: &str, f: &Flags) -> Result<bool, CliError> {
    let m = manifest(sub, f)?;
    let out = run(&m)?;
    let text = render(&m, &out.records);
    match (&m.output, out.binary) {
        (Some(path), Some(bytes)) => {
            std::fs::write(path, bytes).map_err(io_err(format!("writing {path}")))?;
            print!("{text}");
        }
        (Some(path), None) => std::fs::write(path, text).map_err(io_err(format!("writing {path}")))?,
        (None, _) => print!("{text}"),
    }
    Ok(out.undecided)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (sub, flags) = cli.command.parts();
    match execute(sub, &flags) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(3),
        Err(e) => {
            eprintln!("lerw3d {sub}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
