use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use filament_core::io::{parse_kv, write_json, Manifest, RunConfig};
use filament_core::Error;
use serde_json::json;

mod commands;

#[derive(Parser, Debug)]
#[group(skip)]
#[command(name = "filament-lab", version, about = "Binormal-flow filaments with corners: profiles, synthesis, traces, continuation")]
struct Cli {
    /// Flat `key = value` file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default out/<command>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Self-similar profile, its corner and asymptotic constants.
    #[command(allow_negative_numbers = true)]
    Selfsimilar(SelfsimilarArgs),
    /// Evolve a filament by the geometric flow or by NLS synthesis.
    #[command(allow_negative_numbers = true)]
    Evolve(EvolveArgs),
    /// Tangent trace at t = 0 by the ODE, integral and series routes.
    #[command(allow_negative_numbers = true)]
    Trace(TraceArgs),
    /// Continue a synthesis run to negative times.
    #[command(allow_negative_numbers = true)]
    Continue(ContinueArgs),
    /// Approximate the wave operator of the singular NLS.
    #[command(allow_negative_numbers = true)]
    Nls(NlsArgs),
    /// Linearized weighted analysis: commutator identity and obstruction.
    #[command(allow_negative_numbers = true)]
    LinearJ(LinearJArgs),
    /// Run the acceptance suite.
    #[command(allow_negative_numbers = true)]
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
#[group(skip)]
struct SelfsimilarArgs {
    #[arg(long)]
    a: Option<f64>,
    /// Half width of the profile window.
    #[arg(long = "L", visible_alias = "l")]
    l: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
}

#[derive(Args, Debug)]
#[group(skip)]
struct EvolveArgs {
    /// geometric or synthesis.
    #[arg(long)]
    route: Option<String>,
    #[arg(long)]
    a: Option<f64>,
    /// Synthesis: asymptotic NLS state (x,Re,Im). Geometric: initial curve CSV.
    #[arg(long)]
    perturbation: Option<PathBuf>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    t_min: Option<f64>,
    /// Geometric route: final time (default t0/4).
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long = "L", visible_alias = "l")]
    l: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    /// Synthesis: NLS box size in nodes.
    #[arg(long)]
    nodes: Option<usize>,
}

#[derive(Args, Debug)]
#[group(skip)]
struct TraceArgs {
    /// Corner datum as a curve CSV; default is the datum of the reference perturbation.
    #[arg(long)]
    datum: Option<PathBuf>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
    /// series, integral, ode or all.
    #[arg(long)]
    method: Option<String>,
    #[arg(long = "L", visible_alias = "l")]
    l: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
}

#[derive(Args, Debug)]
#[group(skip)]
struct ContinueArgs {
    /// Output directory of an `evolve --route synthesis` run.
    #[arg(long)]
    positive_run: Option<PathBuf>,
    #[arg(long)]
    a: Option<f64>,
}

#[derive(Args, Debug)]
#[group(skip)]
struct NlsArgs {
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    t_far: Option<f64>,
    #[arg(long)]
    t_target: Option<f64>,
    #[arg(long)]
    dt_ratio: Option<f64>,
    /// Asymptotic state f+ (x,Re,Im); default is the reference Gaussian.
    #[arg(long)]
    fplus: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    smallness: Option<f64>,
}

#[derive(Args, Debug)]
#[group(skip)]
struct LinearJArgs {
    #[arg(long)]
    a: Option<f64>,
    /// Transform of the asymptotic state (xi,Re,Im); default is a unit Gaussian.
    #[arg(long)]
    uplus: Option<PathBuf>,
    #[arg(long)]
    xi_min: Option<f64>,
    #[arg(long)]
    xi_max: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
}

#[derive(Args, Debug)]
#[group(skip)]
struct VerifyArgs {
    #[arg(long)]
    suite: Option<String>,
    /// Comma-separated criterion numbers (default: all).
    #[arg(long)]
    only: Option<String>,
    #[arg(long)]
    a: Option<f64>,
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Selfsimilar(_) => "selfsimilar",
        Command::Evolve(_) => "evolve",
        Command::Trace(_) => "trace",
        Command::Continue(_) => "continue",
        Command::Nls(_) => "nls",
        Command::LinearJ(_) => "linear-j",
        Command::Verify(_) => "verify",
    }
}

/// Flags given on the command line, as raw strings keyed by argument id.
fn explicit_flags(m: &ArgMatches, into: &mut BTreeMap<String, String>) {
    for id in m.ids() {
        let id = id.as_str();
        if m.value_source(id) != Some(ValueSource::CommandLine) {
            continue;
        }
        if let Ok(Some(raw)) = m.try_get_raw(id) {
            let v: Vec<String> = raw.map(|s| s.to_string_lossy().into_owned()).collect();
            into.insert(id.to_string(), v.join(","));
        }
    }
}

fn configure(matches: &ArgMatches, cli: &Cli) -> Result<RunConfig, Error> {
    let mut map = match &cli.config {
        Some(p) => parse_kv(&std::fs::read_to_string(p)?)?,
        None => BTreeMap::new(),
    };
    map.remove("config");
    explicit_flags(matches, &mut map);
    if let Some((_, sub)) = matches.subcommand() {
        explicit_flags(sub, &mut map);
    }
    map.remove("config");
    RunConfig::from_map(command_name(&cli.command), map)
}

fn threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("FILAMENT_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Invalid(format!("FILAMENT_LAB_THREADS = {raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))
}

fn fail(e: &Error) -> ExitCode {
    let body = json!({ "status": "error", "kind": e.kind(), "exit_code": e.exit_code(), "message": e.to_string() });
    println!("{}", serde_json::to_string(&body).unwrap_or_default());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail(&Error::Invalid(e.render().to_string().trim().to_string()));
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => return fail(&Error::Invalid(e.to_string())),
    };
    let cfg = match threads().and_then(|_| configure(&matches, &cli)) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let outcome = match commands::run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            let _ = write_json(&cfg.out.join("error.json"), &json!({ "kind": e.kind(), "message": e.to_string() }));
            return fail(&e);
        }
    };
    let manifest = Manifest::collect(&cfg, &cfg.out).and_then(|m| m.write(&cfg.out).map(|p| (m, p)));
    let (m, path) = match manifest {
        Ok(v) => v,
        Err(e) => return fail(&e),
    };
    let body = json!({
        "status": if outcome.failed { "failed" } else { "ok" },
        "command": cfg.command,
        "manifest": path.display().to_string(),
        "config_hash": m.config_hash,
        "files": m.files.len(),
        "summary": outcome.summary,
    });
    println!("{}", serde_json::to_string_pretty(&body).unwrap_or_default());
    if outcome.failed {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}
