//! `monodromy`: monodromy groups of Fuchsian systems and the three-body
//! normal-variational check.
//!
//! Exit codes: 0 ok, 2 invalid input, 3 numerical failure, 4 a structural
//! check failed (the report is still written).

mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "monodromy", version, about = "Monodromy of Fuchsian systems and invariant analysis")]
pub struct Cli {
    /// Transport tolerance; check tolerances are derived from it.
    #[arg(long, global = true, default_value_t = monodromy::threebody::DEFAULT_TRANSPORT_TOL)]
    pub tol: f64,

    /// Eigenvalue clustering tolerance, relative to max(1, ‖T‖).
    /// Defaults to sqrt(max(1e3·tol, 1e-12)).
    #[arg(long, global = true)]
    pub cluster_tol: Option<f64>,

    /// Null-space threshold of the invariant search.
    #[arg(long, global = true, default_value_t = monodromy::invariants::NULL_SPACE_TOL)]
    pub invariant_tol: f64,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Seed for randomized self-tests.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct MassInput {
    /// Three positive masses, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub masses: Option<Vec<f64>>,

    /// Mass parameter σ in (0, 1/3]; masses (t, t, 1) are generated.
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    /// Synthetic residues with the predicted monodromy structure.
    Block,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Mass invariants, predicted spectra and σ classification.
    Masses {
        #[command(flatten)]
        input: MassInput,
    },
    /// Monodromy generators of a system file, or transport around one loop.
    Monodromy {
        system: PathBuf,
        /// Loop file: {"around": i, "orientation": "ccw"|"cw"} or {"waypoints": [[re, im], ...]}.
        #[arg(long = "loop")]
        loop_file: Option<PathBuf>,
    },
    /// Linear and quadratic invariants of a matrix group.
    Invariants { generators: PathBuf },
    /// Full three-body check of a residue set against the mass predictions.
    Verify {
        #[command(flatten)]
        input: MassInput,
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        system: Option<PathBuf>,
        #[arg(long, value_enum)]
        model: Option<Model>,
        /// Break the reality symmetry of the model residues.
        #[arg(long, requires = "model")]
        break_symmetry: bool,
        /// Also write the system that was checked.
        #[arg(long)]
        write_system: Option<PathBuf>,
    },
    /// Seeded internal consistency checks.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
