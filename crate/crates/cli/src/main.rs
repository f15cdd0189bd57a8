//! `contain`: run the simulations, generate traces, serve, or watch a demo.

mod demo;
mod sweep;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use contain_core::sim::{Scenario, SimConfig, Simulator};
use contain_core::trace::{
    default_activity_profile, generate_grouped_trace, generate_synthetic_trace, load_trace, write_trace,
    EncounterTrace,
};
use contain_core::wire::Protocol;
use contain_server::{load_or_create_authority, serve_with_shutdown, state_dir_from_env, PublicationMode, Service};
use sweep::Sweep;

#[derive(Parser)]
#[command(name = "contain", version, about = "Privacy-preserving contact tracing toolkit")]
struct Cli {
    /// Log progress to standard error (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo experiments over an encounter trace.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Write a synthetic encounter trace.
    GenTrace(GenTraceArgs),
    /// Run the verification server.
    Serve(ServeArgs),
    /// Walk three users through one protocol end to end.
    Demo(DemoArgs),
}

#[derive(Subcommand)]
enum SimCommand {
    /// Mean number infected, swept over p and the number initially infected.
    Spread(SpreadArgs),
    /// Mean number flagged for testing, swept over scenario and active hours.
    Detect(DetectArgs),
}

#[derive(Args)]
struct Common {
    /// Encounter trace (`device_a,device_b,unix_seconds` per line).
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Confidence level of the reported interval.
    #[arg(long, default_value_t = 0.90)]
    ci: f64,
}

#[derive(Args)]
struct SpreadArgs {
    #[command(flatten)]
    common: Common,
    /// Contagiousness probabilities, e.g. `0.01,0.02,0.05`.
    #[arg(long, default_value = "0.005,0.01,0.02,0.05", value_parser = sweep::prob_sweep)]
    p: Sweep<f64>,
    /// Initially infected counts, e.g. `1,2,5` or `1..5`.
    #[arg(long, default_value = "1,2,5", value_parser = sweep::int_sweep)]
    initial: Sweep<usize>,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.02)]
    p: f64,
    #[arg(long, default_value_t = 2)]
    initial: usize,
    /// `all`, or a comma list of random, decentralized, centralized.
    #[arg(long, default_value = "all")]
    scenario: String,
    /// Active hours per day, e.g. `0..12` or `2,4,8`.
    #[arg(long, default_value = "0..24", value_parser = sweep::int_sweep)]
    hours: Sweep<usize>,
}

#[derive(Args)]
struct GenTraceArgs {
    #[arg(long)]
    devices: usize,
    #[arg(long)]
    records: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Split devices into this many communities, each busy at different hours.
    #[arg(long)]
    groups: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    #[arg(long, default_value = "public")]
    mode: PublicationMode,
}

#[derive(Args)]
struct DemoArgs {
    /// 1 = encrypted beacons, 2 = random tokens.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    protocol: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| filter.into()),
        )
        .init();

    let result = match cli.command {
        Command::Sim(SimCommand::Spread(args)) => sim_spread(args),
        Command::Sim(SimCommand::Detect(args)) => sim_detect(args),
        Command::GenTrace(args) => gen_trace(args),
        Command::Serve(args) => serve(args),
        Command::Demo(args) => run_demo(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn read_trace(path: &Path) -> Result<EncounterTrace> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let loaded = load_trace(BufReader::new(file)).with_context(|| format!("cannot load {}", path.display()))?;
    if loaded.dropped_self_encounters > 0 {
        eprintln!("warning: dropped {} self-encounter line(s)", loaded.dropped_self_encounters);
    }
    if loaded.dropped_duplicates > 0 {
        eprintln!("warning: dropped {} duplicate line(s)", loaded.dropped_duplicates);
    }
    tracing::info!(
        devices = loaded.trace.devices().len(),
        records = loaded.trace.records().len(),
        "trace loaded"
    );
    Ok(loaded.trace)
}

fn config(common: &Common) -> SimConfig {
    SimConfig { repetitions: common.reps, seed: common.seed, ci_level: common.ci, ..SimConfig::default() }
}

fn sim_spread(args: SpreadArgs) -> Result<ExitCode> {
    let sim = Simulator::new(&read_trace(&args.common.trace)?);
    let base = config(&args.common);
    let mut out = io::stdout().lock();
    writeln!(out, "p,n_initial,mean_infected,ci_low,ci_high")?;
    for &p in &args.p.0 {
        for &n in &args.initial.0 {
            let cfg = SimConfig { contagiousness_p: p, n_initial_infected: n, ..base.clone() };
            let (infected, _) = sim.run(&cfg)?;
            writeln!(out, "{p},{n},{:.4},{:.4},{:.4}", infected.mean, infected.ci_low, infected.ci_high)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_scenarios(text: &str) -> Result<Vec<Scenario>> {
    if text == "all" {
        return Ok(Scenario::ALL.to_vec());
    }
    sweep::parse_list(text).map_err(|e| anyhow::anyhow!("--scenario: {e} (expected all, random, decentralized or centralized)"))
}

fn sim_detect(args: DetectArgs) -> Result<ExitCode> {
    let scenarios = parse_scenarios(&args.scenario)?;
    if let Some(k) = args.hours.0.iter().find(|k| **k > 24) {
        bail!("--hours: {k} is more than 24");
    }
    let sim = Simulator::new(&read_trace(&args.common.trace)?);
    let base = SimConfig { contagiousness_p: args.p, n_initial_infected: args.initial, ..config(&args.common) };
    let mut out = io::stdout().lock();
    writeln!(out, "scenario,k,mean_test_required,ci_low,ci_high")?;
    for &scenario in &scenarios {
        for &k in &args.hours.0 {
            if k > scenario.max_hours() {
                eprintln!("note: skipping {scenario} k={k} (at most {} hours)", scenario.max_hours());
                continue;
            }
            let cfg = SimConfig { scenario, active_hours_k: k, ..base.clone() };
            let (_, flagged) = sim.run(&cfg)?;
            writeln!(out, "{scenario},{k},{:.4},{:.4},{:.4}", flagged.mean, flagged.ci_low, flagged.ci_high)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn gen_trace(args: GenTraceArgs) -> Result<ExitCode> {
    let trace = match args.groups {
        None => generate_synthetic_trace(args.devices, args.records, &default_activity_profile(), args.seed)?,
        Some(g) => generate_grouped_trace(args.devices, args.records, g, args.seed)?,
    };
    let file = File::create(&args.output).with_context(|| format!("cannot create {}", args.output.display()))?;
    write_trace(&trace, BufWriter::new(file)).with_context(|| format!("cannot write {}", args.output.display()))?;
    eprintln!(
        "wrote {} records over {} devices to {}",
        trace.records().len(),
        trace.devices().len(),
        args.output.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn serve(args: ServeArgs) -> Result<ExitCode> {
    let dir = state_dir_from_env();
    let (authority, created) = load_or_create_authority(&dir)?;
    if created {
        eprintln!("created a new authority key in {}", dir.display());
    }
    let service = Arc::new(Service::open(&dir, authority.public(), args.mode)?);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.addr)
            .await
            .with_context(|| format!("cannot listen on {}", args.addr))?;
        let addr = listener.local_addr()?;
        {
            use base64::Engine;
            let key = base64::engine::general_purpose::STANDARD.encode(authority.public().to_bytes());
            let mut out = io::stdout().lock();
            writeln!(out, "authority public key: {key}")?;
            writeln!(out, "publication mode: {}", args.mode)?;
            writeln!(out, "listening on http://{addr}")?;
            out.flush()?;
        }
        serve_with_shutdown(listener, service, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        anyhow::Ok(())
    })?;
    Ok(ExitCode::SUCCESS)
}

fn run_demo(args: DemoArgs) -> Result<ExitCode> {
    let protocol = if args.protocol == 1 { Protocol::Encrypted } else { Protocol::Random };
    let ok = demo::run(protocol, args.seed, &mut io::stdout().lock())?;
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
