use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cellfree_chain::io::{emit_results, parse_config, Preset, RunManifest};
use cellfree_chain::selftest::run_selftest;
use cellfree_chain::{run_experiment_with_workers, ExperimentPlan, NetworkConfig, Result};

#[derive(Parser)]
#[command(version, about = "Daisy-chain cell-free massive MIMO uplink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory for CSV tables and the manifest.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Master seed, replacing the one in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// `key=value` or `section.key=value`, applied over the config.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the plan in a config file.
    Run { config: PathBuf },
    /// Run a built-in figure scenario: fig2, fig3, fig4, fig5 or bitrate.
    Preset { name: String },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// Oracle, noise-statistics and covariance checks.
    Selftest,
}

fn overrides(cli: &Cli) -> Vec<String> {
    let mut all = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        all.push(format!("network.seed={seed}"));
    }
    all
}

fn execute(cli: &Cli, cfg: NetworkConfig, plan: ExperimentPlan) -> Result<()> {
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let manifest = RunManifest::new(&cfg, &plan);
    let result = run_experiment_with_workers(&plan, &cfg, workers)?;
    let manifest = emit_results(&result, &manifest, &cli.out)?;
    for path in &manifest.outputs {
        println!("{}", path.display());
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Run { config } => {
            let (cfg, plan) = parse_config(config, &overrides(cli))?;
            execute(cli, cfg, plan).map(|()| ExitCode::SUCCESS)
        }
        Command::Preset { name } => {
            let (cfg, plan) = name.parse::<Preset>()?.resolve(&overrides(cli))?;
            execute(cli, cfg, plan).map(|()| ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let (cfg, plan) = parse_config(config, &overrides(cli))?;
            println!(
                "ok: L={} N={} K={} kind={}",
                cfg.num_aps,
                cfg.antennas,
                cfg.users,
                plan.kind.name()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let checks = run_selftest(cli.seed.unwrap_or(1))?;
            let mut failed = 0;
            for c in &checks {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            // Exit 1 is reserved for failed checks; errors use their category codes.
            Ok(if failed > 0 {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
