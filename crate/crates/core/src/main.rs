use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use fedsim::ledger::{
    gossip_broadcast, latency_csv, measure_latencies, median_end_to_end, sequential_broadcast_ms,
    total_elapsed_ms, validate_log, Clock, GossipNetwork, LatencyConfig,
};
use fedsim::sim::{load_config, run_experiment};
use fedsim::{Error, Result};

#[derive(Parser)]
#[command(name = "fedsim", version, about = "Federated edge learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClockArg {
    Simulated,
    Wall,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a key=value config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check a chain log's hash links and signatures.
    ValidateChain {
        #[arg(long)]
        chain: PathBuf,
    },
    /// Simulate push gossip over many seeds and report hop counts.
    GossipSim {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        fanout: usize,
        #[arg(long)]
        seeds: u64,
        /// Write per-seed results as CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decompose request latency under T concurrent requests.
    BenchLatency {
        #[arg(long)]
        concurrency: usize,
        /// Propagate blocks by gossip instead of sequential sends.
        #[arg(long)]
        gossip: bool,
        #[arg(long, default_value_t = 3)]
        fanout: usize,
        #[arg(long, value_enum, default_value_t = ClockArg::Simulated)]
        clock: ClockArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write per-request CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&PathBuf>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(name), text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let report = run_experiment(&cfg)?;
            println!(
                "algorithm={} rounds={} final_global_acc={} metrics={}",
                cfg.algorithm.name(),
                report.metrics.len(),
                report.final_accuracy(),
                report.metrics_path.display()
            );
        }
        Command::ValidateChain { chain } => {
            let v = validate_log(&std::fs::read(&chain)?);
            if !v.valid {
                println!(
                    "valid=false first_invalid={} reason={:?}",
                    v.first_invalid.unwrap_or(0),
                    v.reason.unwrap_or_default()
                );
                return Ok(ExitCode::from(1));
            }
            println!("valid=true");
        }
        Command::GossipSim {
            nodes,
            fanout,
            seeds,
            out,
        } => {
            if seeds == 0 {
                return Err(Error::Config("seeds must be >= 1".into()));
            }
            let mut csv = String::from("seed,nodes,fanout,hops,completion_ms\n");
            let mut hops = Vec::new();
            for seed in 0..seeds {
                let o = gossip_broadcast(&GossipNetwork::new(nodes, fanout, seed), 0)?;
                csv.push_str(&format!(
                    "{seed},{nodes},{fanout},{},{}\n",
                    o.hops,
                    o.completion_ms()
                ));
                hops.push(o.hops);
            }
            emit(out.as_ref(), "gossip.csv", &csv)?;
            hops.sort_unstable();
            eprintln!(
                "coverage=1 seeds={seeds} median_hops={} max_hops={}",
                hops[hops.len() / 2],
                hops[hops.len() - 1]
            );
        }
        Command::BenchLatency {
            concurrency,
            gossip,
            fanout,
            clock,
            seed,
            out,
        } => {
            let cfg = LatencyConfig {
                clock: match clock {
                    ClockArg::Simulated => Clock::Simulated,
                    ClockArg::Wall => Clock::Wall,
                },
                gossip_fanout: gossip.then_some(fanout),
                seed,
                ..LatencyConfig::default()
            };
            let rows = measure_latencies(concurrency, &cfg)?;
            emit(out.as_ref(), "latency.csv", &latency_csv(&rows))?;
            eprintln!(
                "T={concurrency} median_end_to_end_ms={} total_ms={} sequential_send_ms={}",
                median_end_to_end(&rows),
                total_elapsed_ms(&rows),
                sequential_broadcast_ms(cfg.network_nodes, cfg.send_ms)
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error: kind={} message={message:?}", e.kind());
            ExitCode::from(2)
        }
    }
}
