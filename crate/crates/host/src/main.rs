use clap::{Parser, Subcommand};
use loco_core::session::Condition;
use loco_host::analyze::run_analysis;
use loco_host::config::{HostError, ServeConfig};
use loco_host::headless::{record_pilot, run_cohort, run_trace, PilotOptions, RunOptions};
use loco_host::serve::run_serve;
use std::path::PathBuf;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

#[derive(Parser)]
#[command(
    name = "loco-host",
    about = "Locomotion study host: live session service, trace tools, and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the live session service (WebSocket control, optional UDP telemetry).
    Serve {
        /// JSON config file; see the README for the schema.
        #[arg(long)]
        config: PathBuf,
    },
    /// Replay a recorded command trace headlessly and write trial logs.
    Run {
        /// Command trace file (`condition:` header plus `yaw slide` rows).
        #[arg(long)]
        trace: PathBuf,
        /// Map JSON; the built-in map when omitted.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Parameter file; defaults when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Expected condition; fails if the trace header disagrees.
        #[arg(long)]
        condition: Option<Condition>,
        #[arg(long, default_value = "p01")]
        participant: String,
        /// Seed for the trial order shuffle.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replay against a single trial toward this goal id.
        #[arg(long)]
        goal: Option<String>,
        /// Drop this fraction of telemetry datagrams (scooter only).
        #[arg(long)]
        drop_rate: Option<f64>,
        #[arg(long, default_value_t = 0)]
        drop_seed: u64,
        /// Output directory for trial_logs.jsonl and summary.csv.
        #[arg(long, default_value = "run-out")]
        out: PathBuf,
    },
    /// Record a scripted-pilot command trace.
    Pilot {
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value = "pilot")]
        participant: String,
        #[arg(long, default_value = "scooter")]
        condition: Condition,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Record a single trial toward this goal id instead of a session.
        #[arg(long)]
        goal: Option<String>,
        /// Trace output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare conditions from trial logs and optional questionnaire responses.
    Analyze {
        /// A trial_logs.jsonl file, or a directory of .jsonl files.
        #[arg(long)]
        logs: PathBuf,
        /// Questionnaire responses CSV.
        #[arg(long)]
        responses: Option<PathBuf>,
        /// Also write the report as JSON to this file.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Simulate a counterbalanced cohort and write combined trial logs.
    SimulateCohort {
        #[arg(long, default_value_t = loco_core::cohort::DEFAULT_PARTICIPANTS)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "cohort-out")]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli.command) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn dispatch(cmd: Cmd) -> Result<(), HostError> {
    match cmd {
        Cmd::Serve { config } => {
            let config = ServeConfig::load(&config)?;
            let stop = Arc::new(AtomicBool::new(false));
            println!(
                "serving participant {} ({}) on ws port {}",
                config.participant,
                config.condition.as_str(),
                config.ws_port
            );
            let outcome = run_serve(&config, stop)?;
            println!(
                "stopped after {} ticks; {} trial logs written",
                outcome.ticks, outcome.logs_written
            );
            Ok(())
        }
        Cmd::Run {
            trace,
            map,
            params,
            condition,
            participant,
            seed,
            goal,
            drop_rate,
            drop_seed,
            out,
        } => {
            let report = run_trace(&RunOptions {
                trace: &trace,
                map: map.as_deref(),
                params: params.as_deref(),
                condition,
                participant: &participant,
                seed,
                goal: goal.as_deref(),
                drop: drop_rate.map(|rate| (rate, drop_seed)),
                out_dir: &out,
            })?;
            println!(
                "{} trials in {} ticks ({}); sent {} datagrams, dropped {}",
                report.logs.len(),
                report.ticks,
                if report.completed {
                    "complete"
                } else {
                    "incomplete"
                },
                report.datagrams_sent,
                report.datagrams_dropped
            );
            println!("wrote {}", out.join("trial_logs.jsonl").display());
            Ok(())
        }
        Cmd::Pilot {
            map,
            params,
            participant,
            condition,
            seed,
            goal,
            out,
        } => {
            let (trace, report) = record_pilot(&PilotOptions {
                map: map.as_deref(),
                params: params.as_deref(),
                participant: &participant,
                condition,
                seed,
                goal: goal.as_deref(),
            })?;
            let text = trace.serialize();
            match out {
                Some(path) => {
                    std::fs::write(&path, text)
                        .map_err(|e| HostError::from_io(&path.display().to_string(), &e))?;
                    eprintln!(
                        "recorded {} trials over {} ticks to {}",
                        report.logs.len(),
                        report.ticks,
                        path.display()
                    );
                }
                None => print!("{text}"),
            }
            Ok(())
        }
        Cmd::Analyze {
            logs,
            responses,
            json,
        } => {
            let report = run_analysis(&logs, responses.as_deref())?;
            print!("{}", report.render_table());
            for warning in &report.warnings {
                eprintln!("warning: {warning}");
            }
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&report)
                    .map_err(|e| HostError::Internal(e.to_string()))?;
                std::fs::write(&path, text)
                    .map_err(|e| HostError::from_io(&path.display().to_string(), &e))?;
            }
            Ok(())
        }
        Cmd::SimulateCohort { n, seed, out } => {
            let (participants, logs) = run_cohort(n, seed, &out)?;
            println!(
                "simulated {participants} participants, {logs} trial logs -> {}",
                out.display()
            );
            Ok(())
        }
    }
}
