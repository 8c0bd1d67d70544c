use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wbteleop_harness::{emit_report, replay, run_scenario, HarnessError, Mode, ReportFormat, ScenarioConfig, ServeOptions, Server};

#[derive(Parser)]
#[command(name = "wbteleop", version, about = "Whole-body teleoperation of an aerial manipulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Overrides {
    /// Output directory (default: output.dir from the scenario, else ./out/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Channel seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Constant round-trip delay in ms, split evenly between directions.
    #[arg(long)]
    delay: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a batch scenario and write the result tables.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_enum, default_value_t)]
        format: ReportFormat,
    },
    /// Serve an interactive session over a web socket.
    Serve {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Listen address (overrides serve.addr).
        #[arg(long)]
        addr: Option<String>,
        /// End the session after this many simulated seconds.
        #[arg(long)]
        max_duration: Option<f64>,
    },
    /// Check a scenario file without running it.
    Validate { scenario: PathBuf },
    /// Re-run a recorded session directory in batch.
    Replay {
        session: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: ReportFormat,
    },
}

fn load(path: &PathBuf, o: &Overrides) -> Result<(ScenarioConfig, PathBuf), HarnessError> {
    let mut config = ScenarioConfig::load(path)?;
    if let Some(seed) = o.seed {
        config.seed = seed;
    }
    if let Some(ms) = o.delay {
        config.set_round_trip_delay(ms);
    }
    config.validate()?;
    let out = o
        .out
        .clone()
        .or_else(|| config.output.dir.as_ref().map(|d| config.resolve(d)))
        .unwrap_or_else(|| PathBuf::from("out").join(&config.name));
    Ok((config, out))
}

fn print_summary(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Cmd::Run {
            scenario,
            overrides,
            format,
        } => {
            let (config, out) = load(&scenario, &overrides)?;
            if config.mode != Mode::Batch {
                return Err(HarnessError::Config("scenario is in serve mode; use `wbteleop serve`".into()));
            }
            let exp = run_scenario(&config)?;
            print_summary(&emit_report(&exp, &out, format)?);
            let r = &exp.report;
            println!(
                "{}: {} ticks in {:.2} s, min W {:.3e} J, max wall force {:.2} N",
                r.name,
                r.ticks,
                r.runtime_s,
                r.min_w.min(),
                r.max_wall_force
            );
        }
        Cmd::Serve {
            scenario,
            overrides,
            addr,
            max_duration,
        } => {
            let (mut config, out) = load(&scenario, &overrides)?;
            if config.mode != Mode::Serve {
                return Err(HarnessError::Config("scenario is in batch mode; use `wbteleop run`".into()));
            }
            if let Some(a) = addr {
                config.serve.addr = a;
            }
            let server = Server::start(
                config,
                ServeOptions {
                    out_dir: out,
                    max_duration,
                },
            )?;
            println!("listening on ws://{}", server.local_addr());
            let session = server.join()?;
            print_summary(&session.files);
        }
        Cmd::Validate { scenario } => {
            let config = ScenarioConfig::load(&scenario)?;
            println!("{}: ok ({} ticks)", config.name, config.ticks());
        }
        Cmd::Replay { session, out, format } => {
            let exp = replay(&session)?;
            print_summary(&emit_report(&exp, &out, format)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
