use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use raqm::control::{compile, PulseProgram};
use raqm::harness::experiments::{default_eta_grid, default_read_orders};
use raqm::harness::output::{
    write_bounds, write_characterization, write_compiled, write_efficiency_scan,
    write_random_access,
};
use raqm::harness::{
    run_bounds_table, run_characterization, run_efficiency_scan, run_random_access,
    ExperimentConfig, HarnessError, Meta, TimingPolicy,
};

/// Random-access quantum memory simulator.
#[derive(Parser)]
#[command(name = "raqm", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Tomography shots per basis per state.
    #[arg(long, global = true)]
    shots: Option<u64>,
    /// Expected counts instead of sampling.
    #[arg(long, global = true)]
    analytic: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Reject reads off a Larmor multiple (default).
    #[arg(long, global = true, conflicts_with = "warn_timing")]
    strict_timing: bool,
    /// Accept reads off a Larmor multiple with a warning.
    #[arg(long, global = true)]
    warn_timing: bool,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate classical bounds over a (mu, eta) grid and over all slots.
    Bounds {
        /// Comma-separated mean photon numbers; defaults to the configured mu.
        #[arg(long, value_delimiter = ',')]
        mu_grid: Vec<f64>,
        /// Comma-separated efficiencies; defaults to 0.01..=1.00.
        #[arg(long, value_delimiter = ',')]
        eta_grid: Vec<f64>,
    },
    /// Six-state fidelity of every slot.
    Characterize,
    /// Estimate the efficiency of every cell from click statistics.
    EfficiencyMap {
        /// Pulses per cell.
        #[arg(long)]
        efficiency_shots: Option<u64>,
    },
    /// Write three qubits and read them back in several orders.
    RandomAccess {
        /// Comma-separated read orders such as 1-2-3.
        #[arg(long, value_delimiter = ',')]
        orders: Vec<String>,
    },
    /// Compile a pulse program into RF event lists.
    Compile {
        /// Program file: `write|read <id> <row>,<col> <time_us> [state]` per line.
        program: PathBuf,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(s) = c.shots {
        cfg.shots = s;
    }
    if c.analytic {
        cfg.analytic = true;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    if c.strict_timing {
        cfg.timing = TimingPolicy::Strict;
    }
    if c.warn_timing {
        cfg.timing = TimingPolicy::Warn;
    }
    if c.workers.is_some() {
        cfg.workers = c.workers;
    }
    Ok(cfg)
}

fn parse_order(s: &str) -> Result<Vec<usize>, HarnessError> {
    s.split('-')
        .map(|q| {
            q.trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad read order `{s}`")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = load_config(&cli.common)?;
    if let Command::EfficiencyMap {
        efficiency_shots: Some(n),
    } = cli.command
    {
        cfg.efficiency_shots = n;
    }
    let setup = cfg.resolve()?;
    let meta = Meta::from_setup(&setup);
    let dir = setup.config.out_dir.clone();
    println!("seed={} config_hash={}", meta.seed, meta.config_hash);

    let paths = match cli.command {
        Command::Bounds { mu_grid, eta_grid } => {
            let mu_grid = if mu_grid.is_empty() {
                vec![setup.config.mu]
            } else {
                mu_grid
            };
            let eta_grid = if eta_grid.is_empty() {
                default_eta_grid()
            } else {
                eta_grid
            };
            let csv = run_bounds_table(&setup, &mu_grid, &eta_grid)?;
            write_bounds(&meta, &csv, &dir)?
        }
        Command::Characterize => {
            let report = run_characterization(&setup)?;
            let s = &report.summary;
            println!(
                "slots={} grand_mean_fidelity={:.6} grand_std_error={:.6} min_margin={:.6} min_sigmas={}",
                s.slots,
                s.grand_mean_fidelity,
                s.grand_std_error,
                s.min_margin,
                s.min_sigmas.map_or("n/a".into(), |v| format!("{v:.2}"))
            );
            write_characterization(&meta, &report, &dir)?
        }
        Command::EfficiencyMap { .. } => {
            let scan = run_efficiency_scan(&setup)?;
            write_efficiency_scan(&meta, &scan, &dir)?
        }
        Command::RandomAccess { orders } => {
            let orders = if orders.is_empty() {
                default_read_orders()
            } else {
                orders
                    .iter()
                    .map(|o| parse_order(o))
                    .collect::<Result<_, _>>()?
            };
            let rows = run_random_access(&setup, &orders)?;
            for r in &rows {
                println!(
                    "order={} {} storage_us={:.2} eta={:.4} F={:.4}±{:.4} bound={:.4}",
                    r.order,
                    r.qubit_id,
                    r.storage_time_us,
                    r.efficiency,
                    r.mean_fidelity,
                    r.std_dev,
                    r.efficiency_bound
                );
            }
            write_random_access(&meta, &rows, &dir)?
        }
        Command::Compile { program } => {
            let text = std::fs::read_to_string(&program)
                .map_err(|e| format!("{}: {e}", program.display()))?;
            let parsed = PulseProgram::parse(&text)?;
            let compiled = compile(&parsed, &setup.params, setup.config.timing.into())?;
            for w in &compiled.warnings {
                eprintln!(
                    "warning: {} stored {:.4} us, {:.4} us off {} Larmor periods",
                    w.qubit_id, w.storage_time_us, w.deviation_us, w.nearest_multiple
                );
            }
            write_compiled(&meta, &compiled, &dir)?
        }
    };
    for p in paths {
        println!("wrote {}", p.display());
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
