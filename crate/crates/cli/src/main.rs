mod args;

use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qgamble::equilibrium::unit_grid;
use qgamble::format::fmt_f64;
use qgamble::protocol::{
    accept_guest, connect_host, guest_session, host_session, is_lie_abort, run_session_with, serve_nature,
    GuestOptions, Ledger, LieResponse, Referee, RemoteNature, SessionOptions, SharedReferee,
};
use qgamble::verify::{run_verify, VerifyOptions};
use qgamble::{gamma_for, monte_carlo_gain, nash_point, surface, Error, GainModel, GameConfig, Strategy};

use args::{parse_alice, parse_bob, parse_number};

#[derive(Parser)]
#[command(name = "qgamble", version, about = "Quantum gambling: equilibria, surfaces, simulations, protocol sessions")]
struct Cli {
    /// Output format, where the subcommand offers a choice.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibrium strategies and guaranteed bias.
    Nash(NashArgs),
    /// G_b over a uniform grid, as CSV.
    Surface(SurfaceArgs),
    /// Monte Carlo estimate of Bob's gain for a fixed strategy pair.
    Simulate(SimulateArgs),
    /// Multi-round session between two agents.
    Protocol(ProtocolArgs),
    /// Invariant suites over random configurations.
    Verify(VerifyArgs),
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("target").required(true).args(["gamma", "delta"]))]
struct NashArgs {
    #[arg(long, value_parser = parse_number)]
    gamma: Option<f64>,
    /// Design the game for this guaranteed bias.
    #[arg(long, value_parser = parse_number)]
    delta: Option<f64>,
    #[arg(long, value_parser = parse_number)]
    r: f64,
}

#[derive(Args)]
struct SurfaceArgs {
    #[arg(long, value_parser = parse_number)]
    gamma: f64,
    #[arg(long, value_parser = parse_number)]
    r: f64,
    #[arg(long, default_value_t = 101)]
    grid: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_number)]
    gamma: f64,
    #[arg(long, value_parser = parse_number)]
    r: f64,
    #[arg(long, value_parser = parse_number)]
    alpha: f64,
    #[arg(long, value_parser = parse_number)]
    beta: f64,
    #[arg(long)]
    n: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LieMode {
    Penalize,
    Abort,
}

#[derive(Args)]
struct ProtocolArgs {
    #[arg(long, value_parser = parse_number)]
    gamma: Option<f64>,
    #[arg(long, value_parser = parse_number)]
    r: Option<f64>,
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long, default_value = "nash")]
    alice: String,
    #[arg(long, default_value = "nash")]
    bob: String,
    /// Act as Alice and wait for a guest on this address.
    #[arg(long, conflicts_with = "connect")]
    listen: Option<String>,
    /// Act as Bob against a host on this address.
    #[arg(long)]
    connect: Option<String>,
    #[arg(long, value_enum, default_value_t = LieMode::Penalize)]
    on_lie: LieMode,
    /// Read timeout for transport sessions, in milliseconds.
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 20)]
    configs: usize,
    #[arg(long, default_value_t = 101)]
    grid: usize,
    /// Check the sign-flipped closed form instead of the real gain.
    #[arg(long)]
    inject_as_printed: bool,
}

/// A failed command: exit code plus a one-line diagnostic.
struct Fail(u8, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) | Error::Degenerate(_) | Error::NotNormalized(_) => 2,
            Error::Protocol(_) | Error::Wire(_) | Error::Transport(_) => 3,
            Error::Internal(_) => 1,
        };
        Fail(code, e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Fail {
    Fail(2, msg.into())
}

/// Main output plus what goes to stderr, and the exit code.
struct Done {
    out: String,
    note: Option<String>,
    code: u8,
}

impl Done {
    fn ok(out: String) -> Self {
        Done { out, note: None, code: 0 }
    }
}

fn config(gamma: f64, r: f64) -> Result<GameConfig, Fail> {
    Ok(GameConfig::new(gamma, r)?)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("outputs serialize");
    s.push('\n');
    s
}

fn cmd_nash(a: &NashArgs, format: Format) -> Result<Done, Fail> {
    let gamma = match (a.gamma, a.delta) {
        (Some(g), None) => g,
        (None, Some(d)) => {
            if d > a.r {
                return Err(usage(format!(
                    "delta = {d} exceeds R = {}; the equilibrium bias is at most R",
                    a.r
                )));
            }
            gamma_for(d, a.r)?
        }
        _ => unreachable!("clap enforces exactly one of --gamma and --delta"),
    };
    let nash = nash_point(&config(gamma, a.r)?)?;
    Ok(Done::ok(match format {
        Format::Json => nash.to_json() + "\n",
        Format::Csv => format!(
            "gamma,r,alpha_star,beta_star,delta\n{},{},{},{},{}\n",
            fmt_f64(nash.gamma),
            fmt_f64(nash.r),
            fmt_f64(nash.alpha_star),
            fmt_f64(nash.beta_star),
            fmt_f64(nash.delta)
        ),
    }))
}

fn cmd_surface(a: &SurfaceArgs, format: Format) -> Result<Done, Fail> {
    if format != Format::Csv {
        return Err(usage("surface only writes csv"));
    }
    if a.grid < 2 {
        return Err(usage(format!("--grid must be at least 2, got {}", a.grid)));
    }
    let cfg = config(a.gamma, a.r)?;
    let grid = unit_grid(a.grid);
    Ok(Done::ok(surface(&cfg, &grid, &grid)?.to_csv()))
}

#[derive(Serialize)]
struct SimSummary {
    p1_hat: f64,
    p2_hat: f64,
    p3_hat: f64,
    mean_gain: f64,
    stderr: f64,
    n: u64,
    seed: u64,
}

fn cmd_simulate(a: &SimulateArgs, format: Format, seed: u64) -> Result<Done, Fail> {
    let cfg = config(a.gamma, a.r)?;
    let strategy = Strategy::new(a.alpha, a.beta)?;
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let est = monte_carlo_gain(&strategy, &cfg, a.n, seed)?;
    let f = est.counts.frequencies();
    let s = SimSummary {
        p1_hat: f.p1,
        p2_hat: f.p2,
        p3_hat: f.p3,
        mean_gain: est.mean,
        stderr: est.stderr,
        n: est.n,
        seed: est.seed,
    };
    Ok(Done::ok(match format {
        Format::Json => to_json(&s),
        Format::Csv => format!(
            "p1_hat,p2_hat,p3_hat,mean_gain,stderr,n,seed\n{},{},{},{},{},{},{}\n",
            fmt_f64(s.p1_hat),
            fmt_f64(s.p2_hat),
            fmt_f64(s.p3_hat),
            fmt_f64(s.mean_gain),
            fmt_f64(s.stderr),
            s.n,
            s.seed
        ),
    }))
}

fn ledger_output(ledger: &Ledger, format: Format) -> Done {
    let summary = to_json(&ledger.summary());
    let (out, note) = match format {
        Format::Csv => (ledger.to_csv(), Some(summary)),
        Format::Json => (summary, None),
    };
    let note = match &ledger.aborted {
        Some(reason) => Some(format!("{}session aborted: {reason}\n", note.unwrap_or_default())),
        None => note,
    };
    Done { out, note, code: if ledger.failed() { 3 } else { 0 } }
}

fn cmd_protocol(a: &ProtocolArgs, format: Format, seed: u64) -> Result<Done, Fail> {
    let timeout = Some(Duration::from_millis(a.timeout_ms));
    let lie_response = match a.on_lie {
        LieMode::Penalize => LieResponse::Penalize,
        LieMode::Abort => LieResponse::Abort,
    };
    let opts = SessionOptions { lie_response, read_timeout: timeout };

    if let Some(addr) = &a.connect {
        let bob = parse_bob(&a.bob, None).map_err(usage)?;
        let (proto, nature) = connect_host(addr.as_str())?;
        let nature = RemoteNature::new(nature, timeout)?;
        let report = guest_session(proto, nature, &bob, &GuestOptions { leave_after: None, read_timeout: timeout })?;
        let failed = report.aborted.as_deref().is_some_and(|r| !is_lie_abort(r));
        return Ok(Done { out: to_json(&report), note: None, code: if failed { 3 } else { 0 } });
    }

    let (Some(gamma), Some(r), Some(rounds)) = (a.gamma, a.r, a.rounds) else {
        return Err(usage("--gamma, --r and --rounds are required unless --connect is given"));
    };
    let cfg = config(gamma, r)?;
    let alice = parse_alice(&a.alice, &cfg).map_err(usage)?;
    if rounds == 0 {
        return Err(usage("--rounds must be at least 1"));
    }

    let Some(addr) = &a.listen else {
        let bob = parse_bob(&a.bob, Some(&cfg)).map_err(usage)?;
        return Ok(ledger_output(&run_session_with(&cfg, &alice, &bob, rounds, seed, &opts)?, format));
    };
    let listener = TcpListener::bind(addr.as_str()).map_err(|e| Fail(3, format!("cannot listen on {addr}: {e}")))?;
    let local = listener.local_addr().map_err(|e| Fail(3, e.to_string()))?;
    eprintln!("listening on {local}");
    let (proto, nature) = accept_guest(&listener)?;
    let referee: SharedReferee = Arc::new(Mutex::new(Referee::new(cfg)));
    let served = Arc::clone(&referee);
    std::thread::spawn(move || serve_nature(nature, served));
    let run = host_session(proto, &referee, &alice, rounds, seed, &opts)?;
    Ok(ledger_output(&run.ledger, format))
}

fn cmd_verify(a: &VerifyArgs, format: Option<Format>, seed: u64) -> Result<Done, Fail> {
    let model = if a.inject_as_printed { GainModel::AsPrinted } else { GainModel::ProbabilityDerived };
    let report = run_verify(&VerifyOptions { configs: a.configs, grid: a.grid, seed, model })?;
    let out = match format {
        None => format!("{report}\n"),
        Some(Format::Json) => to_json(&report),
        Some(Format::Csv) => return Err(usage("verify writes text or json")),
    };
    Ok(Done { out, note: None, code: if report.passes() { 0 } else { 1 } })
}

fn run(cli: &Cli) -> Result<Done, Fail> {
    let seed = cli.seed;
    match &cli.command {
        Command::Nash(a) => cmd_nash(a, cli.format.unwrap_or(Format::Json)),
        Command::Surface(a) => cmd_surface(a, cli.format.unwrap_or(Format::Csv)),
        Command::Simulate(a) => cmd_simulate(a, cli.format.unwrap_or(Format::Json), seed),
        Command::Protocol(a) => cmd_protocol(a, cli.format.unwrap_or(Format::Csv), seed),
        Command::Verify(a) => cmd_verify(a, cli.format, seed),
    }
}

fn write_out(path: &Option<PathBuf>, text: &str) -> Result<(), Fail> {
    let result = match path {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).map_err(|e| e.to_string())
        }
    };
    result.map_err(|msg| Fail(1, msg))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = run(&cli).and_then(|done| {
        write_out(&cli.out, &done.out)?;
        if let Some(note) = &done.note {
            eprint!("{note}");
        }
        Ok(done.code)
    });
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
