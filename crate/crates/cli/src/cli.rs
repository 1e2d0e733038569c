//! Argument surface of the `koopman` binary. Every numeric computation the
//! flags reach lives in the library; this layer only parses, loads files,
//! and formats results.

use clap::{Parser, Subcommand};
use std::path::PathBuf;

pub const VALID_SUBCOMMANDS: &str = "simulate, koopman, spectrum, represent, observability, \
     kalman, gramian, optimal-outputs, transport, adjoint-check, unitarity, pipeline";

#[derive(Debug, Parser)]
#[command(
    name = "koopman",
    version,
    about = "Finite-dimensional Koopman and transport operator experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate or iterate a catalog system; writes a trajectory CSV.
    Simulate(SimulateArgs),
    /// Build a Koopman matrix by exact pullback, EDMD, or generator projection.
    Koopman(KoopmanArgs),
    /// Eigenvalues of a stored operator matrix; writes a spectrum CSV.
    Spectrum(SpectrumArgs),
    /// Compare dynamics-side and operator-side outputs step by step.
    Represent(RepresentArgs),
    /// Unobservable-subspace report for an operator and sampling points.
    Observability(ObservabilityArgs),
    /// Kalman observable/unobservable decomposition.
    Kalman(KalmanArgs),
    /// Observability/covariance Grammians and the output-energy identity.
    Gramian(GramianArgs),
    /// Energy-optimal orthonormal output rows from the covariance Grammian.
    #[command(name = "optimal-outputs")]
    OptimalOutputs(OptimalOutputsArgs),
    /// Push a density forward by semi-Lagrangian or upwind PDE transport.
    Transport(TransportArgs),
    /// Quadrature check of the Koopman/transport duality pairing.
    #[command(name = "adjoint-check")]
    AdjointCheck(AdjointCheckArgs),
    /// L2-norm ratio under transport for a volume-preserving flow.
    Unitarity(UnitarityArgs),
    /// Run an ordered list of steps from a TOML file, writing a manifest.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Parser)]
pub struct SimulateArgs {
    /// System spec, e.g. `logistic:r=3.5` or `linear:a=0 -1;1 0`.
    #[arg(long)]
    pub system: String,
    /// Initial condition as comma- or space-separated numbers.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: String,
    /// Iteration count for discrete maps.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Final time for continuous systems.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Sampling interval for continuous systems.
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct KoopmanArgs {
    /// Construction: exact | edmd | generator.
    #[arg(long)]
    pub method: String,
    /// System spec (exact and generator methods).
    #[arg(long)]
    pub system: Option<String>,
    /// Dictionary spec, e.g. `monomials:n=2,d=3`.
    #[arg(long)]
    pub dict: String,
    /// Flow duration represented by one matrix application (exact method).
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<f64>,
    /// Integrator step for flows without a closed form.
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Snapshot matrix X (EDMD), one state per row.
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Snapshot matrix X' aligned with --x (EDMD).
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Trajectory CSVs to split into snapshot pairs (EDMD); repeatable.
    #[arg(long)]
    pub traj: Vec<PathBuf>,
    /// File of sample points, one per row (exact and generator methods).
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Number of generated sample points (default 10 x dictionary size).
    #[arg(long)]
    pub sample_count: Option<usize>,
    /// Sampling box `lo:hi,lo:hi` (default [-1,1]^n, or the Fourier domain).
    #[arg(long, allow_hyphen_values = true)]
    pub sample_box: Option<String>,
    /// Draw samples uniformly with this seed instead of the Halton sequence.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative singular-value cutoff for the least-squares solve.
    #[arg(long, default_value_t = 1e-10)]
    pub rank_tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct SpectrumArgs {
    /// Operator JSON produced by the koopman subcommand.
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct RepresentArgs {
    #[arg(long)]
    pub system: String,
    /// Operator JSON.
    #[arg(long)]
    pub koopman: PathBuf,
    /// Observable JSON (dictionary coefficients).
    #[arg(long)]
    pub gbar: PathBuf,
    /// Initial condition as comma- or space-separated numbers.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: String,
    #[arg(long)]
    pub steps: usize,
    /// Time represented by one operator application (default 1 for maps).
    #[arg(long, allow_hyphen_values = true)]
    pub t_step: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct ObservabilityArgs {
    /// Operator JSON.
    #[arg(long)]
    pub koopman: PathBuf,
    /// Matrix file of initial conditions, one per row.
    #[arg(long)]
    pub x0_list: PathBuf,
    /// Relative singular-value tolerance for the rank split.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct KalmanArgs {
    /// Operator JSON.
    #[arg(long)]
    pub koopman: PathBuf,
    /// Matrix file of initial conditions, one per row.
    #[arg(long)]
    pub x0_list: PathBuf,
    /// Relative singular-value tolerance for the rank split.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct GramianArgs {
    /// State matrix CSV.
    #[arg(long = "A")]
    pub a: PathBuf,
    /// Output matrix CSV; enables the observability Grammian.
    #[arg(long = "C")]
    pub c: Option<PathBuf>,
    /// Initial condition (vector CSV); enables the covariance Grammian and,
    /// with --C, the energy identity.
    #[arg(long)]
    pub x0: Option<PathBuf>,
    /// State covariance CSV; alternative to --x0.
    #[arg(long = "R")]
    pub r: Option<PathBuf>,
    /// Also compute this many energy-optimal output rows.
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct OptimalOutputsArgs {
    /// State matrix CSV.
    #[arg(long = "A")]
    pub a: PathBuf,
    /// State covariance CSV.
    #[arg(long = "R")]
    pub r: PathBuf,
    /// Number of output rows to return.
    #[arg(long)]
    pub q: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct TransportArgs {
    #[arg(long)]
    pub system: String,
    /// Density spec: `gauss:c=..;s=..`, `indicator:lo=..;hi=..`, or `file=path`.
    #[arg(long)]
    pub density: String,
    /// Cells per axis, e.g. `256x256` (not needed with `file=`).
    #[arg(long)]
    pub grid: Option<String>,
    /// Box bounds `lo:hi,lo:hi` (not needed with `file=`).
    #[arg(long = "box", allow_hyphen_values = true)]
    pub bounds: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub t: f64,
    /// Step size; defaults to 1e-3 (sl) or the largest stable step (pde).
    #[arg(long)]
    pub dt: Option<f64>,
    /// sl (semi-Lagrangian characteristics) or pde (upwind finite volume).
    #[arg(long, default_value = "sl")]
    pub method: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct AdjointCheckArgs {
    #[arg(long)]
    pub system: String,
    /// Density spec for the transported side.
    #[arg(long)]
    pub phi: String,
    /// Density spec for the pulled-back side.
    #[arg(long)]
    pub psi: String,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long = "box", allow_hyphen_values = true)]
    pub bounds: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub t: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct UnitarityArgs {
    #[arg(long)]
    pub system: String,
    #[arg(long)]
    pub density: String,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long = "box", allow_hyphen_values = true)]
    pub bounds: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub t: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct PipelineArgs {
    /// TOML file of [[step]] entries (name, command, args, needs).
    pub file: PathBuf,
    /// Where to write the manifest (default: manifest.json in the output dir).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}
