//! `educhain`: run scenarios on the simulated network, or serve a gateway.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use educhain_sim::fault::FAULT_CATALOGUE;
use educhain_sim::{bundled, parse_scenario, run_scenario, NetworkConfig, Runner, Scenario, Testbed, BUNDLED};

#[derive(Parser)]
#[command(name = "educhain", version, about = "Educational records chains: simulator and gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulated network runs.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Real-socket gateway over a simulated deployment.
    #[command(subcommand)]
    Node(NodeCommand),
}

#[derive(Subcommand)]
enum SimCommand {
    /// Runs a scenario file (or a bundled scenario by name) and prints the report.
    Run(RunArgs),
    /// Describes the injectable faults.
    Faults {
        #[arg(long)]
        list: bool,
    },
    /// Names the bundled scenarios.
    Scenarios,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum NodeCommand {
    /// Serves the first university's gateway over HTTP while the network ticks in real time.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scenario run first to seed data.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        listen: Option<String>,
        /// Wall-clock milliseconds per tick.
        #[arg(long, default_value_t = 100)]
        tick_ms: u64,
    },
}

fn load_config(path: Option<&Path>) -> Result<NetworkConfig, String> {
    match path {
        Some(p) => NetworkConfig::load(p).map_err(|e| e.to_string()),
        None => Ok(NetworkConfig::default()),
    }
}

fn load_scenario(name: &str) -> Result<Scenario, String> {
    if let Some(s) = bundled(name) {
        return Ok(s);
    }
    let text = std::fs::read_to_string(name).map_err(|e| format!("{name}: {e}"))?;
    parse_scenario(&text).map_err(|e| format!("{name}: {e}"))
}

fn sim_run(args: RunArgs) -> Result<bool, String> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let scenario = load_scenario(&args.scenario)?;
    let (report, _) = run_scenario(cfg, &scenario).map_err(|e| e.to_string())?;
    let text = report.render();
    print!("{text}");
    if let Some(out) = args.out {
        std::fs::write(&out, &text).map_err(|e| format!("{}: {e}", out.display()))?;
    }
    Ok(report.passed())
}

fn serve(config: Option<PathBuf>, scenario: Option<String>, listen: Option<String>, tick_ms: u64) -> Result<bool, String> {
    let mut cfg = load_config(config.as_deref())?;
    if let Ok(addr) = std::env::var("EDUCHAIN_LISTEN") {
        cfg.listen = addr;
    }
    if let Some(addr) = listen {
        cfg.listen = addr;
    }
    let mut tb = Testbed::build(cfg.clone()).map_err(|e| e.to_string())?;
    if let Some(name) = scenario {
        let s = load_scenario(&name)?;
        let report = Runner::new(&mut tb).run(&s);
        if !report.passed() {
            print!("{}", report.render());
            return Err("seed scenario failed".into());
        }
    }
    let uni = &tb.universities[0];
    println!("gateway for {} on http://{}", uni.name, cfg.listen);
    for (label, user) in &uni.wallet {
        println!(
            "  {label:<10} role={:<9} account={} password={}",
            user.role.as_str(),
            user.key.account_id().to_hex(),
            user.password
        );
    }
    let server = Arc::new(tiny_http::Server::http(&cfg.listen).map_err(|e| e.to_string())?);
    let _workers = educhain_gateway::server::spawn(Arc::clone(&uni.gateway), server, 4);
    loop {
        std::thread::sleep(Duration::from_millis(tick_ms));
        tb.step();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sim(SimCommand::Run(args)) => sim_run(args),
        Command::Sim(SimCommand::Faults { .. }) => {
            for (name, usage) in FAULT_CATALOGUE {
                println!("{name:<7} {usage}");
            }
            Ok(true)
        }
        Command::Sim(SimCommand::Scenarios) => {
            for (name, _) in BUNDLED {
                println!("{name}");
            }
            Ok(true)
        }
        Command::Node(NodeCommand::Serve {
            config,
            scenario,
            listen,
            tick_ms,
        }) => serve(config, scenario, listen, tick_ms),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
