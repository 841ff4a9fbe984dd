use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use netkreg::confidence::BoundParams;
use netkreg::harness::{
    central_compare, coverage_experiment, export_records, selfnorm_experiment, write_messages,
    Format, NoiseKind, RecordLayout, SelfNormSetup, SimConfig, Simulation, WeightDist,
};
use netkreg::topology;
use netkreg::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "netkreg", version, about = "Distributed kernel regression simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its estimate records.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; falls back to `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: Format,
        /// Also dump every broadcast message to messages.jsonl.
        #[arg(long)]
        trace: bool,
    },
    /// Empirical rate at which the error radius fails to cover the truth.
    Coverage {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        replicas: usize,
        #[arg(long = "x-index")]
        x_index: usize,
        #[arg(long, default_value_t = 0)]
        agent: usize,
    },
    /// Compare every aggregated estimate against the pooled raw-data estimate.
    CentralCompare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Monte Carlo check of the self-normalized tail bound.
    Selfnorm {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        steps: u64,
        #[arg(long)]
        replicas: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Draw a connected random graph and write it as an edge list.
    Topology {
        #[arg(long)]
        m: usize,
        #[arg(long = "edge-prob")]
        edge_prob: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<serde_json::Value, Error> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            format,
            trace,
        } => {
            let cfg = SimConfig::load(&config)?;
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| Error::Config("no output directory: pass --out".into()))?;
            let mut sim = Simulation::from_config(&cfg)?;
            if trace {
                sim = sim.keep_messages();
            }
            let layout = RecordLayout {
                input_dim: sim.setup().scenario.grid.dim(),
                out_dim: sim.setup().params.dim,
            };
            let mut records = Vec::new();
            sim.run_with(|batch| {
                records.extend(batch);
                Ok(())
            })?;

            std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            let name = match format {
                Format::Csv => "records.csv",
                Format::Json => "records.json",
            };
            let records_path = dir.join(name);
            export_records(&records, &records_path, format, layout)?;
            let mut summary = json!({
                "records": records.len(),
                "rounds": sim.time(),
                "output": records_path,
            });
            if let Some(messages) = sim.messages() {
                let path = dir.join("messages.jsonl");
                write_messages(messages, &path)?;
                summary["messages"] = json!(messages.len());
                summary["trace"] = json!(path);
            }
            Ok(summary)
        }
        Command::Coverage {
            config,
            replicas,
            x_index,
            agent,
        } => {
            let cfg = SimConfig::load(&config)?;
            let report = coverage_experiment(&cfg, replicas, x_index, agent)?;
            Ok(serde_json::to_value(report)?)
        }
        Command::CentralCompare { config } => {
            let cfg = SimConfig::load(&config)?;
            Ok(serde_json::to_value(central_compare(&cfg)?)?)
        }
        Command::Selfnorm {
            delta,
            sigma,
            dim,
            steps,
            replicas,
            seed,
        } => {
            let setup = SelfNormSetup {
                params: BoundParams::new(0.0, sigma, delta, dim)?,
                replicas,
                steps,
                weights: WeightDist::Uniform { low: 0.0, high: 1.0 },
                noise: NoiseKind::Gaussian,
                seed,
            };
            let report = selfnorm_experiment(&setup)?;
            Ok(json!({
                "replicas": report.replicas,
                "violations": report.violations,
                "rate": report.rate,
                "delta": delta,
                "holds": report.rate <= delta,
            }))
        }
        Command::Topology {
            m,
            edge_prob,
            seed,
            out,
        } => {
            let top = topology::random_connected(m, edge_prob, seed)?;
            top.save(&out)?;
            Ok(json!({"agents": top.agents(), "edges": top.edge_count(), "output": out}))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!(
                "{}",
                json!({"error": {"kind": err.kind(), "message": err.to_string()}})
            );
            ExitCode::FAILURE
        }
    }
}
