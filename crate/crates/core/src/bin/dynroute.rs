use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dynroute::benchmark::{best_static, DEFAULT_CAP};
use dynroute::error::{Error, Result};
use dynroute::scenario::Scenario;
use dynroute::scheme::{format_rate_table, solve, SavedState, Scheme, Starts};
use dynroute::sim::{run_sim, SimInit, SimMetrics};
use dynroute::sweep::{run_sweep, SweepSpec, Table};

#[derive(Parser)]
#[command(name = "dynroute", version, about = "Dynamic route selection for QoS-constrained multihop wireless networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Tuning {
    /// Relative objective change that counts as converged.
    #[arg(long)]
    tol: Option<f64>,
    /// Upper bound on control rounds.
    #[arg(long)]
    max_rounds: Option<usize>,
}

impl Tuning {
    fn apply(&self, sc: &mut Scenario) {
        if let Some(t) = self.tol {
            sc.control.tol = t;
        }
        if let Some(m) = self.max_rounds {
            sc.control.max_rounds = m;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one scheme on a scenario and print its rates.
    Optimize {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "ocdr")]
        scheme: Scheme,
        /// Only start from equal weights (skip the static warm start).
        #[arg(long)]
        cold: bool,
        /// Write the controller state as JSON.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Run the slot-level simulator with a saved controller state.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        slots: Option<u64>,
        /// Keep adapting the controller during the run.
        #[arg(long)]
        adapt: bool,
        /// Append-free CSV with one metrics row.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Execute a sweep spec and write its CSV.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the spec's output path.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Find the best static relay assignment only.
    Benchmark {
        #[arg(long)]
        scenario: PathBuf,
        /// Maximum number of assignments to enumerate.
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: u128,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Optimize { scenario, scheme, cold, output, tuning } => {
            let mut sc = Scenario::load(&scenario)?;
            tuning.apply(&mut sc);
            let net = sc.network()?;
            let starts = if cold { Starts::Cold } else { Starts::ColdAndStatic };
            let sol = solve(&net, scheme, sc.control, starts)?;
            println!("scheme {scheme}");
            println!("F = {:.6e}", sol.objective);
            println!("rounds {} converged {}", sol.rounds, sol.converged);
            if let Some(eq) = sol.equal_share {
                println!("F (equal split) = {eq:.6e}");
            }
            print!("{}", format_rate_table(&net, &sol.table));
            if let Some(path) = output {
                write_atomic(&path, SavedState::from_solution(&sol).to_json()?.as_bytes())?;
            }
        }
        Command::Simulate { scenario, state, seed, slots, adapt, output } => {
            let sc = Scenario::load(&scenario)?;
            let net = sc.network()?;
            let text = std::fs::read_to_string(&state)
                .map_err(|e| Error::Config(format!("cannot read state {}: {e}", state.display())))?;
            let saved = SavedState::from_json(&text)?;
            let mut cfg = sc.sim;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.slots = slots.unwrap_or(cfg.slots);
            cfg.adapt |= adapt;
            let init = SimInit { state: saved.state.clone(), source_rates: saved.source_rates.clone() };
            let m = run_sim(&net, &init, &cfg)?;
            let name = saved.state.scheme().to_string();
            let header = SimMetrics::csv_header(net.num_sources());
            let row = m.csv_row(&sc.name, &name);
            for (h, v) in header.iter().zip(&row) {
                println!("{h:<14}{v}");
            }
            if let Some(path) = output {
                Table { header, rows: vec![row] }.write_atomic(&path)?;
            }
        }
        Command::Sweep { spec, output, threads, tuning } => {
            let (mut spec, mut base) = SweepSpec::load(&spec)?;
            tuning.apply(&mut base);
            if output.is_some() {
                spec.output = output;
            }
            let path = spec.output.clone().ok_or_else(|| Error::Config("sweep needs an output path".into()))?;
            let table = match threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Config(e.to_string()))?
                    .install(|| run_sweep(&spec, &base))?,
                None => run_sweep(&spec, &base)?,
            };
            table.write_atomic(&path)?;
            println!("wrote {} rows to {}", table.rows.len(), path.display());
        }
        Command::Benchmark { scenario, cap } => {
            let sc = Scenario::load(&scenario)?;
            let net = sc.network()?;
            let best = best_static(&net, sc.control, cap)?;
            println!("F = {:.6e}", best.value.objective);
            println!("F (equal split) = {:.6e}", best.value.equal_share);
            for (k, hops) in best.assignment.relay_of.iter().enumerate() {
                let path: Vec<String> = hops.iter().enumerate().map(|(l, m)| format!("R{}.{}", l + 1, m + 1)).collect();
                println!("S{} -> {} -> D{}", k + 1, path.join(" -> "), k + 1);
            }
        }
    }
    Ok(())
}

fn write_atomic(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
