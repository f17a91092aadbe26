use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use teleop_core::bus::DEFAULT_BUS_PORT;
use teleop_core::harness::{self, HarnessError, RunReport, Scenario, Transport};
use teleop_core::serve::{ServeOptions, Server, DEFAULT_UI_PORT};

#[derive(Parser)]
#[command(name = "teleop", version, about = "Headset-to-robot teleoperation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario headless and print its report as JSON.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value_t = Transport::InProcess)]
        transport: Transport,
        /// Defaults to the scenario's own seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a recorded report and check that it reproduces.
    Replay { report: PathBuf, scenario: PathBuf },
    /// Run a scenario live for the operator console and external clients.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        /// TOML file with bus_port, ui_port, anchor_store, assets.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bus_port: Option<u16>,
        #[arg(long)]
        ui_port: Option<u16>,
        #[arg(long)]
        anchor_store: Option<PathBuf>,
        /// Directory holding the console's static files.
        #[arg(long)]
        assets: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServeConfig {
    bus_port: Option<u16>,
    ui_port: Option<u16>,
    anchor_store: Option<PathBuf>,
    assets: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Run { scenario, transport, seed, out } => {
            let report = harness::run_file(&scenario, transport, seed)?;
            let json = report.to_json();
            match out {
                Some(path) => std::fs::write(&path, &json).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?,
                None => print!("{json}"),
            }
            eprintln!(
                "{}: success={} completion_time={:.2}s path_length={:.2}m",
                report.scenario, report.success, report.completion_time, report.path_length
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { report, scenario } => {
            let recorded = RunReport::from_json(&read(&report)?)?;
            let scenario = Scenario::load(&scenario)?;
            let fresh = harness::replay(&recorded, &scenario)?;
            println!("replay ok: trajectory {}", fresh.trajectory_hash);
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { scenario, config, bus_port, ui_port, anchor_store, assets, seed } => {
            let file: ServeConfig = match config {
                Some(path) => toml::from_str(&read(&path)?).map_err(|e| HarnessError::Parse(e.to_string()))?,
                None => ServeConfig::default(),
            };
            let scenario = Scenario::load(&scenario)?;
            let opts = ServeOptions {
                seed: seed.unwrap_or(scenario.seed),
                scenario,
                bus_port: bus_port.or(file.bus_port).unwrap_or(DEFAULT_BUS_PORT),
                ui_port: ui_port.or(file.ui_port).unwrap_or(DEFAULT_UI_PORT),
                anchor_store: anchor_store.or(file.anchor_store),
                assets: assets.or(file.assets),
            };
            let server = Server::bind(opts)?;
            eprintln!("bus on {}, console on http://{}/", server.bus_addr(), server.ui_addr());
            server.run(Arc::new(AtomicBool::new(false)))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
