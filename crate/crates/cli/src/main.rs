//! `pdolab` command-line front end.
//!
//! Every command reads JSON, writes canonical JSON (sorted keys, shortest
//! round-trip floats) to `--out` or stdout, and exits with a stable code:
//! 0 ok, 1 usage or input error, 2 incompatible input, 3 nothing found,
//! 4 numerical failure.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "pdolab", version, about = "Pseudo-density operator toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Override the acceptance tolerance of the command (must be positive).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Output path; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Suppress the summary printed on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the PDO of a circuit file.
    Gen {
        circuit: PathBuf,
        /// Write the validation report here as well.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Maximum number of events.
        #[arg(long, default_value_t = pdolab::circuit::DEFAULT_EVENT_CAP)]
        cap: usize,
    },
    /// Solve a marginal scenario, optionally filtering the solution family.
    Solve {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Filter::None)]
        filter: Filter,
        /// Half-space list (`--filter halfspaces`) or vertex list (`--filter hull`).
        #[arg(long)]
        constraints: Option<PathBuf>,
        /// Positivity search starts.
        #[arg(long, default_value_t = 64)]
        starts: usize,
        /// Positivity search iterations per start.
        #[arg(long, default_value_t = 500)]
        iterations: usize,
    },
    /// Entropy report of a PDO, or the qubit r-sweep as CSV.
    Entropy {
        #[arg(required_unless_present = "sweep")]
        pdo: Option<PathBuf>,
        /// `start:end:step`, inclusive.
        #[arg(long)]
        sweep: Option<String>,
        /// Rényi orders to include in the report.
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 2.0])]
        alpha: Vec<f64>,
    },
    /// Maximum-entropy inference on a marginal scenario.
    Maxent {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Direct)]
        mode: Mode,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
        /// Also search for two distinct maximizers.
        #[arg(long)]
        witness: bool,
    },
    /// Pseudo-channel operations.
    Channel {
        #[command(subcommand)]
        op: ChannelOp,
    },
    /// Classical quasi-probability marginal problem on a hypergraph.
    Classical { scenario: PathBuf },
    /// Signed separable expansion of a PDO.
    Decompose { pdo: PathBuf },
    /// Space-time purification of a PDO.
    Purify { pdo: PathBuf },
    /// Lindblad dynamics: steady state, or evolution of a PDO.
    Lindblad {
        generator: PathBuf,
        /// Evolve this PDO instead of computing the steady state.
        #[arg(long)]
        evolve: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
    },
}

#[derive(Subcommand, Debug)]
pub enum ChannelOp {
    /// Apply a channel to a PDO.
    Apply { channel: PathBuf, pdo: PathBuf },
    /// Choi PDO of a channel (output events first).
    Choi { channel: PathBuf },
    /// Marginal channel on the kept input and output events.
    Marginal {
        channel: PathBuf,
        #[arg(long, value_delimiter = ',')]
        keep_in: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        keep_out: Vec<String>,
    },
    /// Joint channel family from a list of marginal channels.
    Solve { channels: PathBuf },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Filter {
    None,
    Positive,
    Halfspaces,
    Hull,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Direct,
    Mlp,
}

fn configure_threads() {
    if let Some(n) = std::env::var("PDOLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // Fails only if a pool already exists, which cannot happen here.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { io::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(tol) = cli.global.tol {
        if !(tol > 0.0 && tol.is_finite()) {
            eprintln!("error: --tol must be positive");
            return ExitCode::from(io::EXIT_USAGE);
        }
    }
    configure_threads();
    match commands::run(cli.command, &cli.global) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !e.message.is_empty() {
                eprintln!("error: {}", e.message);
            }
            ExitCode::from(e.code)
        }
    }
}
