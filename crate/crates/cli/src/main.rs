use std::path::PathBuf;
use std::process::ExitCode;

use bikt_cli::config::load_config;
use bikt_cli::run::{output_dir, run};
use bikt_core::graph::{synth_sbm, write_graph};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bikt", version, about = "Bi-directional GNN/MLP knowledge transfer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a run config.
    Run {
        config: PathBuf,
        /// Seeds trained in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a run config without running it.
    Validate { config: PathBuf },
    /// Write a stochastic block model dataset.
    Synth {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 0.02)]
        intra_p: f64,
        #[arg(long, default_value_t = 0.002)]
        inter_p: f64,
        #[arg(long, default_value_t = 100)]
        feat_dim: usize,
        #[arg(long, default_value_t = 2.0)]
        feat_noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

const CONFIG_ERROR: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let override_seed = std::env::var("BIKT_SEED_OVERRIDE").ok();
    match Cli::parse().command {
        Command::Validate { config } => match load_config(&config, override_seed.as_deref()) {
            Ok(_) => {
                println!("ok");
                ExitCode::SUCCESS
            }
            Err(errors) => {
                for e in errors {
                    eprintln!("{e}");
                }
                ExitCode::from(CONFIG_ERROR)
            }
        },
        Command::Run { config, jobs, out } => {
            let loaded = match load_config(&config, override_seed.as_deref()) {
                Ok(l) => l,
                Err(errors) => {
                    for e in errors {
                        eprintln!("config error: {e}");
                    }
                    return ExitCode::from(CONFIG_ERROR);
                }
            };
            let dir = output_dir(&loaded, out);
            match run(&loaded, &dir, jobs) {
                Ok(summary) => {
                    if let Some(agg) = &summary.aggregate {
                        for (view, metrics) in agg {
                            if let Some(acc) = metrics.get("accuracy") {
                                println!("{view:<12} accuracy {acc}");
                            }
                        }
                    } else {
                        for r in &summary.runs {
                            for (view, rep) in &r.views {
                                println!("seed {} {view:<12} accuracy {:.4}", r.seed, rep.accuracy);
                            }
                        }
                    }
                    println!("wrote {}", dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Synth {
            n,
            classes,
            intra_p,
            inter_p,
            feat_dim,
            feat_noise,
            seed,
            out,
        } => {
            let written = synth_sbm::<f64>(n, classes, intra_p, inter_p, feat_dim, feat_noise, seed)
                .and_then(|g| write_graph(&g, &out).map(|()| g));
            match written {
                Ok(g) => {
                    println!("wrote {} nodes and {} edges to {}", g.n(), g.edge_count(), out.display());
                    ExitCode::SUCCESS
                }
                Err(e @ bikt_core::Error::Config(_)) => {
                    eprintln!("error: {e}");
                    ExitCode::from(CONFIG_ERROR)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
