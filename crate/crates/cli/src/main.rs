use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use relaychain::runlog::{parse_packet_log, DEFAULT_SUMMARY_WINDOW};
use relaychain::{parse_scenario, run, summarize, Scenario};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "relaychain",
    version,
    about = "Relay-chain multi-robot connectivity simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its logs.
    Run {
        /// Scenario file; `corridor` selects the bundled corridor scenario.
        #[arg(long)]
        scenario: String,
        /// Override the scenario's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for logs.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the simulated duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Print packet loss per time window from a packet log as CSV.
    Summarize {
        #[arg(long)]
        packets: PathBuf,
        /// Window length in seconds.
        #[arg(long, default_value_t = DEFAULT_SUMMARY_WINDOW)]
        window: f64,
    },
}

fn load_scenario(arg: &str) -> Result<Scenario> {
    if arg == "corridor" {
        return Ok(Scenario::corridor());
    }
    let text = std::fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?;
    parse_scenario(&text).with_context(|| format!("loading {arg}"))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            scenario,
            seed,
            out,
            duration,
        } => {
            let mut sc = load_scenario(&scenario)?;
            if let Some(s) = seed {
                sc.sim.seed = s;
            }
            if let Some(d) = duration {
                sc.sim.duration = d;
            }
            sc.validate().context("invalid override")?;
            let report = run(&sc, &out)?;
            let m = &report.metrics;
            println!("scenario          {}", sc.name);
            println!("ticks             {}", m.ticks);
            println!(
                "packets           sent {} delivered {} dropped {}",
                m.packets_sent, m.packets_delivered, m.packets_dropped
            );
            println!("delivery ratio    {:.4}", m.delivery_ratio());
            println!("max path distance {:.2} m", m.max_agent_path_distance);
            match report.phases.mission_complete {
                Some(t) => println!("mission complete  {t:.1} s"),
                None => println!("mission complete  no"),
            }
            println!("logs written to   {}", out.display());
        }
        Command::Summarize { packets, window } => {
            if !(window > 0.0 && window.is_finite()) {
                bail!("--window must be a positive number of seconds");
            }
            let text = std::fs::read_to_string(&packets)
                .with_context(|| format!("reading {}", packets.display()))?;
            let log = parse_packet_log(&text)
                .with_context(|| format!("parsing {}", packets.display()))?;
            print!("{}", summarize(&log, window).to_csv());
        }
    }
    Ok(())
}
