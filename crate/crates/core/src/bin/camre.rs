use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use camre::nav::{feature_latency_probe, Feature};
use camre::netsim::{read_csv, render_report, run_scenario, write_csv, Scenario};
use camre::protocol::FramingProfile;
use camre::relay::server::{RelayServer, ServerConfig};
use camre::relay::{LimitProfile, RelayConfig};
use camre::scene::{encode_snapshot, SceneSnapshot};
use camre::synth::{canonical_room, parse_rooms, scan_step, walk_scan, ScanState, World};

#[derive(Parser)]
#[command(name = "camre", version, about = "Scene sync relay, benchmarks and scene tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScanMode {
    Full,
    Walk,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a world and dump the resulting snapshot.
    SceneGen {
        /// Room-spec file, or one of personal|living|classroom.
        #[arg(long)]
        world: String,
        #[arg(long, value_enum, default_value = "full")]
        scan: ScanMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the relay on UDP, optionally with the WebSocket gateway.
    Relay {
        #[arg(long, default_value = "0.0.0.0:7777")]
        bind: SocketAddr,
        #[arg(long)]
        gateway: Option<SocketAddr>,
        #[arg(long, default_value = "photon")]
        limit: LimitProfile,
        #[arg(long, default_value = "plain")]
        framing: FramingProfile,
    },
    /// Emulated network benchmarks.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
    /// Time the navigation features.
    Navbench {
        #[arg(long)]
        feature: Feature,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run scenarios and write one CSV row per scenario and framing.
    Run {
        #[arg(long, required = true, num_args = 1..)]
        scenario: Vec<PathBuf>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a report CSV as a table.
    Tables {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn load_world(world: &str) -> Result<World, Box<dyn std::error::Error>> {
    let rooms = match canonical_room(world) {
        Some(room) => vec![room],
        None => parse_rooms(&fs::read_to_string(world).map_err(|e| format!("{world}: {e}"))?)?,
    };
    Ok(World::new(rooms)?)
}

fn scene_gen(world: &str, scan: ScanMode, out: &Path) -> CliResult {
    let world = load_world(world)?;
    let objects = match scan {
        ScanMode::Full => scan_step(&mut ScanState::full_visibility(1), &world, 0),
        ScanMode::Walk => walk_scan(&world, 1),
    };
    let snap = SceneSnapshot::from_objects(0, objects);
    let bytes = encode_snapshot(&snap);
    fs::write(out, &bytes)?;
    println!("{} of {} objects, {} bytes -> {}", snap.len(), world.len(), bytes.len(), out.display());
    Ok(())
}

fn relay(bind: SocketAddr, gateway: Option<SocketAddr>, limit: LimitProfile, framing: FramingProfile) -> CliResult {
    let server = RelayServer::start(ServerConfig { bind, gateway, relay: RelayConfig::new(framing, limit) })?;
    println!("relay on udp {} ({framing}, {limit})", server.udp_addr());
    if let Some(g) = server.gateway_addr() {
        println!("gateway on ws://{g}");
    }
    server.join();
    Ok(())
}

fn bench_run(scenarios: &[PathBuf], repeats: usize, out: &Path) -> CliResult {
    let mut reports = Vec::new();
    for path in scenarios {
        let (sc, rooms) = Scenario::load(path)?;
        for framing in sc.framings()? {
            log::info!("{} {framing}: {repeats} repeats", sc.name);
            reports.push(run_scenario(&sc, &rooms, framing, repeats)?);
        }
    }
    fs::write(out, write_csv(&reports)?)?;
    print!("{}", render_report(&reports)?);
    Ok(())
}

fn bench_tables(input: &Path) -> CliResult {
    let reports = read_csv(&fs::read_to_string(input)?)?;
    print!("{}", render_report(&reports)?);
    Ok(())
}

fn navbench(feature: Feature, reps: usize, out: Option<&Path>) -> CliResult {
    let stats = feature_latency_probe(feature, reps);
    if let Some(out) = out {
        let lines: String = stats.samples_ms.iter().map(|s| format!("{s}\n")).collect();
        fs::write(out, lines)?;
    }
    println!("{reps} reps: mean {:.4} ms, std {:.4} ms", stats.mean_ms, stats.std_ms);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SceneGen { world, scan, out } => scene_gen(&world, scan, &out),
        Command::Relay { bind, gateway, limit, framing } => relay(bind, gateway, limit, framing),
        Command::Bench { command: BenchCommand::Run { scenario, repeats, out } } => bench_run(&scenario, repeats, &out),
        Command::Bench { command: BenchCommand::Tables { input } } => bench_tables(&input),
        Command::Navbench { feature, reps, out } => navbench(feature, reps, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
