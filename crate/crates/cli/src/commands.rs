//! One function per subcommand. Each loads its inputs, calls into the
//! library, writes the declared output files, and returns a one-line summary
//! plus the list of files written (the pipeline manifest records both).

use crate::cli::*;
use koopman_core::catalog;
use koopman_core::dynamics::Trajectory;
use koopman_core::grid::DensityGrid;
use koopman_core::identification::{kalman_decompose, sampling_operator, unobservable_subspace};
use koopman_core::io::{self, MatrixJson};
use koopman_core::koopman::{
    edmd, generator_matrix, koopman_exact, represent, spectrum, KoopmanMatrix,
};
use koopman_core::linear_analysis::{
    energy_identity, koopman_grammian, observability_grammian, optimal_outputs, GrammianSource,
    LinearSystem,
};
use koopman_core::observables::{Dictionary, DictionaryKind};
use koopman_core::sampling::{halton, uniform, BoxDomain};
use koopman_core::transport::{
    adjoint_check, pde_stable_step, transport_flow, transport_pde, unitarity_check,
};
use koopman_core::CoreError;
use ndarray::{Array1, Array2};
use serde::Serialize;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write as IoWrite};
use std::path::{Path, PathBuf};

/// Environment variable naming the directory for default output files.
pub const OUT_DIR_ENV: &str = "KOOPMAN_OUT_DIR";

/// Anything a subcommand can fail with, split by who is at fault.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or malformed/missing inputs; exit code 1.
    Usage(String),
    /// Library failure; numerical failures exit with code 2, the rest 1.
    Core(CoreError),
    /// A pipeline step failed; carries the step name for context.
    Step { name: String, inner: Box<CliError> },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.kind(),
            CliError::Step { inner, .. } => inner.kind(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => {
                if e.is_numerical() {
                    2
                } else {
                    1
                }
            }
            CliError::Step { inner, .. } => inner.exit_code(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Step { name, inner } => write!(f, "step '{name}': {inner}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// What a finished subcommand reports back.
pub struct CommandOutcome {
    pub summary: String,
    pub outputs: Vec<PathBuf>,
}

pub fn dispatch(cmd: Command) -> CliResult<CommandOutcome> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Koopman(a) => cmd_koopman(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Represent(a) => cmd_represent(a),
        Command::Observability(a) => cmd_observability(a),
        Command::Kalman(a) => cmd_kalman(a),
        Command::Gramian(a) => cmd_gramian(a),
        Command::OptimalOutputs(a) => cmd_optimal_outputs(a),
        Command::Transport(a) => cmd_transport(a),
        Command::AdjointCheck(a) => cmd_adjoint_check(a),
        Command::Unitarity(a) => cmd_unitarity(a),
        Command::Pipeline(a) => crate::pipeline::run(a),
    }
}

/// Default output file name per subcommand (used when --out is omitted).
pub fn default_out_name(command: &str) -> Option<&'static str> {
    Some(match command {
        "simulate" => "trajectory.csv",
        "koopman" => "koopman.json",
        "spectrum" => "spectrum.csv",
        "represent" => "represent.csv",
        "observability" => "observability.json",
        "kalman" => "kalman.json",
        "gramian" => "gramian.json",
        "optimal-outputs" => "optimal_outputs.csv",
        "transport" => "density_out.txt",
        "adjoint-check" => "adjoint_check.json",
        "unitarity" => "unitarity.json",
        _ => return None,
    })
}

/// Resolves where a command writes: an explicit --out verbatim, otherwise
/// the default name inside `$KOOPMAN_OUT_DIR` (or the working directory).
pub fn out_path(explicit: &Option<PathBuf>, default_name: &str) -> PathBuf {
    match explicit {
        Some(p) => p.clone(),
        None => match std::env::var_os(OUT_DIR_ENV) {
            Some(dir) => PathBuf::from(dir).join(default_name),
            None => PathBuf::from(default_name),
        },
    }
}

// ---------------------------------------------------------------------------
// Flag-value parsers.
// ---------------------------------------------------------------------------

fn parse_f64_flag(tok: &str, flag: &str) -> CliResult<f64> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Usage(format!("{flag}: bad number '{}'", tok.trim())))
}

/// Inline vector: comma- and/or whitespace-separated numbers.
fn parse_inline_vector(s: &str, flag: &str) -> CliResult<Array1<f64>> {
    let vals: Vec<f64> = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| parse_f64_flag(t, flag))
        .collect::<CliResult<_>>()?;
    if vals.is_empty() {
        return Err(CliError::Usage(format!("{flag}: no numbers given")));
    }
    Ok(Array1::from_vec(vals))
}

/// Grid shape `256x256` (an `x` between cell counts).
fn parse_grid(s: &str) -> CliResult<Vec<usize>> {
    let shape: Vec<usize> = s
        .split('x')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("--grid: bad cell count '{}'", t.trim())))
        })
        .collect::<CliResult<_>>()?;
    if shape.is_empty() || shape.iter().any(|&n| n == 0) {
        return Err(CliError::Usage(
            "--grid needs positive cell counts like 256x256".into(),
        ));
    }
    Ok(shape)
}

/// Box bounds `lo:hi,lo:hi` (commas between axes, colons inside an axis).
fn parse_box(s: &str, flag: &str) -> CliResult<BoxDomain> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for axis in s.split(',') {
        let (l, h) = axis.split_once(':').ok_or_else(|| {
            CliError::Usage(format!("{flag}: axis '{axis}' is not of the form lo:hi"))
        })?;
        lo.push(parse_f64_flag(l, flag)?);
        hi.push(parse_f64_flag(h, flag)?);
    }
    BoxDomain::new(lo, hi).map_err(CliError::Core)
}

/// Loads a density from a spec string (`gauss:`/`indicator:` with --grid and
/// --box), from `file=path`, or from a bare path to a density text file.
fn load_density(
    spec: &str,
    grid: &Option<String>,
    bounds: &Option<String>,
    flag: &str,
) -> CliResult<DensityGrid> {
    let from_file = |path: &str| -> CliResult<DensityGrid> {
        let g = io::read_density_text(path)?;
        if let Some(gs) = grid {
            let shape = parse_grid(gs)?;
            if shape != g.shape() {
                return Err(CliError::Usage(format!(
                    "--grid {gs} disagrees with the {} grid stored in {path}",
                    g.shape()
                        .iter()
                        .map(|n| n.to_string())
                        .collect::<Vec<_>>()
                        .join("x")
                )));
            }
        }
        if let Some(bs) = bounds {
            let b = parse_box(bs, "--box")?;
            let stored = g.domain();
            let close = |a: &[f64], b: &[f64]| {
                a.len() == b.len()
                    && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs()))
            };
            if !(close(&b.lo, &stored.lo) && close(&b.hi, &stored.hi)) {
                return Err(CliError::Usage(format!(
                    "--box {bs} disagrees with the box stored in {path}"
                )));
            }
        }
        Ok(g)
    };

    if let Some(path) = spec.strip_prefix("file=") {
        return from_file(path);
    }
    if spec.starts_with("gauss:") || spec.starts_with("indicator:") {
        let gs = grid.as_ref().ok_or_else(|| {
            CliError::Usage(format!("{flag} '{spec}' needs --grid (cells per axis)"))
        })?;
        let bs = bounds.as_ref().ok_or_else(|| {
            CliError::Usage(format!("{flag} '{spec}' needs --box (bounds per axis)"))
        })?;
        let shape = parse_grid(gs)?;
        let domain = parse_box(bs, "--box")?;
        return Ok(io::density_from_spec(spec, &domain, &shape)?);
    }
    if Path::new(spec).is_file() {
        return from_file(spec);
    }
    Err(CliError::Usage(format!(
        "{flag}: '{spec}' is neither a density spec (gauss:.., indicator:..) \
         nor a readable file (file=path)"
    )))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let w = BufWriter::new(File::create(path).map_err(CoreError::Io)?);
    serde_json::to_writer_pretty(w, value)
        .map_err(|e| CliError::Core(CoreError::Parse(e.to_string())))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn cmd_simulate(args: SimulateArgs) -> CliResult<CommandOutcome> {
    let system = catalog::from_spec(&args.system)?;
    let x0 = parse_inline_vector(&args.x0, "--x0")?;
    let horizon = if system.is_continuous() {
        if args.steps.is_some() {
            return Err(CliError::Usage(format!(
                "'{}' evolves in continuous time; use --horizon (and --dt), not --steps",
                args.system
            )));
        }
        args.horizon.ok_or_else(|| {
            CliError::Usage(format!("'{}' needs --horizon <time>", args.system))
        })?
    } else {
        if args.horizon.is_some() {
            return Err(CliError::Usage(format!(
                "'{}' is a discrete map; use --steps, not --horizon",
                args.system
            )));
        }
        args.steps
            .ok_or_else(|| CliError::Usage(format!("'{}' needs --steps <count>", args.system)))?
            as f64
    };
    let traj = system.simulate(&x0.view(), horizon, args.dt, None)?;
    let path = out_path(&args.out, "trajectory.csv");
    io::write_trajectory_csv(&path, &traj)?;
    Ok(CommandOutcome {
        summary: format!(
            "simulate: {} samples of '{}' -> {}",
            traj.len(),
            system.name,
            path.display()
        ),
        outputs: vec![path],
    })
}

// ---------------------------------------------------------------------------
// koopman
// ---------------------------------------------------------------------------

/// Sample points for the exact and generator constructions: an explicit
/// file, or low-discrepancy/seeded-uniform points in a box (the dictionary's
/// own domain for Fourier, [-1,1]^n otherwise).
fn gather_samples(args: &KoopmanArgs, dict: &Dictionary) -> CliResult<Array2<f64>> {
    if let Some(path) = &args.samples {
        return Ok(io::read_matrix_csv(path)?);
    }
    let n = dict.dimension_in();
    let bx = match &args.sample_box {
        Some(s) => parse_box(s, "--sample-box")?,
        None => match dict.kind() {
            DictionaryKind::Fourier { domain, .. } => domain.clone(),
            _ => BoxDomain::new(vec![-1.0; n], vec![1.0; n])?,
        },
    };
    if bx.dim() != n {
        return Err(CliError::Usage(format!(
            "--sample-box has {} axes but the dictionary lives on R^{n}",
            bx.dim()
        )));
    }
    let count = args.sample_count.unwrap_or(10 * dict.size());
    Ok(match args.seed {
        Some(seed) => uniform(count, &bx, seed),
        None => halton(count, &bx)?,
    })
}

fn load_snapshot_pairs(args: &KoopmanArgs) -> CliResult<(Array2<f64>, Array2<f64>)> {
    match (&args.x, &args.y, args.traj.is_empty()) {
        (Some(xp), Some(yp), true) => Ok((io::read_matrix_csv(xp)?, io::read_matrix_csv(yp)?)),
        (None, None, false) => {
            let trajs: Vec<Trajectory> = args
                .traj
                .iter()
                .map(|p| io::read_trajectory_csv(p).map_err(CliError::Core))
                .collect::<CliResult<_>>()?;
            let refs: Vec<&Trajectory> = trajs.iter().collect();
            Ok(Trajectory::stack_snapshot_pairs(&refs)?)
        }
        (None, None, true) => Err(CliError::Usage(
            "edmd needs snapshot data: --x with --y, or one or more --traj files".into(),
        )),
        _ => Err(CliError::Usage(
            "give either --x with --y or --traj files, not a mixture".into(),
        )),
    }
}

fn cmd_koopman(args: KoopmanArgs) -> CliResult<CommandOutcome> {
    let dict = io::dictionary_from_spec(&args.dict)?;
    let k: KoopmanMatrix = match args.method.as_str() {
        "exact" => {
            let spec = args.system.as_ref().ok_or_else(|| {
                CliError::Usage("--method exact needs --system".into())
            })?;
            let system = catalog::from_spec(spec)?;
            let t = match args.t {
                Some(t) => t,
                None if system.is_continuous() => {
                    return Err(CliError::Usage(format!(
                        "'{spec}' evolves in continuous time; give --t (flow duration)"
                    )))
                }
                None => 1.0,
            };
            let samples = gather_samples(&args, &dict)?;
            koopman_exact(&system, &dict, t, args.dt, &samples.view())?
        }
        "edmd" => {
            let (x, y) = load_snapshot_pairs(&args)?;
            edmd(&x.view(), &y.view(), &dict, args.rank_tol)?
        }
        "generator" => {
            let spec = args.system.as_ref().ok_or_else(|| {
                CliError::Usage("--method generator needs --system".into())
            })?;
            let system = catalog::from_spec(spec)?;
            let samples = gather_samples(&args, &dict)?;
            generator_matrix(&system, &dict, &samples.view())?
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown --method '{other}'; valid methods: exact, edmd, generator"
            )))
        }
    };
    let path = out_path(&args.out, "koopman.json");
    io::write_koopman_json(&path, &k)?;
    Ok(CommandOutcome {
        summary: format!(
            "koopman: {} {}x{} matrix on '{}', residual {:.2e} -> {}",
            args.method,
            k.size(),
            k.size(),
            k.dictionary.spec_string(),
            k.residual,
            path.display()
        ),
        outputs: vec![path],
    })
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

fn cmd_spectrum(args: SpectrumArgs) -> CliResult<CommandOutcome> {
    let k = io::read_koopman_json(&args.matrix)?;
    let s = spectrum(&k)?;
    let path = out_path(&args.out, "spectrum.csv");
    io::write_spectrum_csv(&path, &s)?;
    let defective = s.defective.iter().filter(|&&d| d).count();
    Ok(CommandOutcome {
        summary: format!(
            "spectrum: {} eigenvalues, |lambda|_max = {:.6}, {} defective -> {}",
            s.eigenvalues.len(),
            s.eigenvalues.first().map(|z| z.norm()).unwrap_or(0.0),
            defective,
            path.display()
        ),
        outputs: vec![path],
    })
}

// ---------------------------------------------------------------------------
// represent
// ---------------------------------------------------------------------------

fn cmd_represent(args: RepresentArgs) -> CliResult<CommandOutcome> {
    let system = catalog::from_spec(&args.system)?;
    let k = io::read_koopman_json(&args.koopman)?;
    let g_bar = io::read_observable_json(&args.gbar)?;
    let x0 = parse_inline_vector(&args.x0, "--x0")?;
    let t_step = match args.t_step {
        Some(t) => t,
        None if system.is_continuous() => {
            return Err(CliError::Usage(format!(
                "'{}' evolves in continuous time; give --t-step (time per operator application)",
                args.system
            )))
        }
        None => 1.0,
    };
    let rep = represent(&system, &k, &g_bar, &x0.view(), args.steps, t_step, args.dt)?;
    let path = out_path(&args.out, "represent.csv");
    let mut w = BufWriter::new(File::create(&path).map_err(CoreError::Io)?);
    let m = rep.y_original.ncols();
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|j| format!("y{j}_original")));
    header.extend((1..=m).map(|j| format!("y{j}_koopman")));
    writeln!(w, "{}", header.join(",")).map_err(CoreError::Io)?;
    for (i, &t) in rep.times.iter().enumerate() {
        let mut fields = vec![format!("{t:.16e}")];
        fields.extend(rep.y_original.row(i).iter().map(|v| format!("{v:.16e}")));
        fields.extend(rep.y_koopman.row(i).iter().map(|v| format!("{v:.16e}")));
        writeln!(w, "{}", fields.join(",")).map_err(CoreError::Io)?;
    }
    drop(w);
    Ok(CommandOutcome {
        summary: format!(
            "represent: {} steps, max discrepancy {:.3e} -> {}",
            args.steps,
            rep.max_discrepancy,
            path.display()
        ),
        outputs: vec![path],
    })
}

// ---------------------------------------------------------------------------
// observability / kalman
// ---------------------------------------------------------------------------

fn cmd_observability(args: ObservabilityArgs) -> CliResult<CommandOutcome> {
    let k = io::read_koopman_json(&args.koopman)?;
    let points = io::read_matrix_csv(&args.x0_list)?;
    let s = sampling_operator(&k.dictionary, &points.view())?;
    let rep = unobservable_subspace(&k, &s, args.tol)?;
    let path = out_path(&args.out, "observability.json");
    io::write_observability_json(&path, &rep)?;
    Ok(CommandOutcome {
        summary: format!(
            "observability: {} initial conditions, unobservable dimension {} of {} -> {}",
            points.nrows(),
            rep.unobservable_dimension,
            k.size(),
            path.display()
        ),
        outputs: vec![path],
    })
}

#[derive(Serialize)]
struct KalmanReportJson {
    unobservable_dimension: usize,
    upper_right_residual: f64,
    c_no_residual: f64,
    pair_observable: bool,
    tol: f64,
    transform: MatrixJson,
    k_o: MatrixJson,
    k_no: MatrixJson,
    k_no_o: MatrixJson,
    c_o: MatrixJson,
}

fn cmd_kalman(args: KalmanArgs) -> CliResult<CommandOutcome> {
    let k = io::read_koopman_json(&args.koopman)?;
    let points = io::read_matrix_csv(&args.x0_list)?;
    let s = sampling_operator(&k.dictionary, &points.view())?;
    let dec = kalman_decompose(&k, &s, args.tol)?;
    let payload = KalmanReportJson {
        unobservable_dimension: dec.report.unobservable_dimension,
        upper_right_residual: dec.upper_right_residual,
        c_no_residual: dec.c_no_residual,
        pair_observable: dec.pair_observable,
        tol: dec.report.tol,
        transform: MatrixJson::from_array(&dec.transform.view()),
        k_o: MatrixJson::from_array(&dec.k_o.view()),
        k_no: MatrixJson::from_array(&dec.k_no.view()),
        k_no_o: MatrixJson::from_array(&dec.k_no_o.view()),
        c_o: MatrixJson::from_array(&dec.c_o.view()),
    };
    let path = out_path(&args.out, "kalman.json");
    write_json(&path, &payload)?;
    Ok(CommandOutcome {
        summary: format!(
            "kalman: observable block {}x{}, upper-right residual {:.3e} -> {}",
            dec.k_o.nrows(),
            dec.k_o.ncols(),
            dec.upper_right_residual,
            path.display()
        ),
        outputs: vec![path],
    })
}

// ---------------------------------------------------------------------------
// gramian / optimal-outputs
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EnergyJson {
    direct: f64,
    quadratic_form: f64,
    trace_form: f64,
    max_relative_spread: f64,
}

#[derive(Serialize)]
struct OptimalJson {
    rows: MatrixJson,
    captured_energy: Vec<f64>,
    total_energy: f64,
}

#[derive(Serialize)]
struct GramianJson {
    #[serde(skip_serializing_if = "Option::is_none")]
    observability_grammian: Option<MatrixJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    covariance_grammian: Option<MatrixJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    energy: Option<EnergyJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimal_outputs: Option<OptimalJson>,
}

fn grammian_source(
    x0: &Option<PathBuf>,
    r: &Option<PathBuf>,
) -> CliResult<Option<GrammianSource>> {
    match (x0, r) {
        (Some(_), Some(_)) => Err(CliError::Usage(
            "give --x0 (a point) or --R (a covariance), not both".into(),
        )),
        (Some(p), None) => Ok(Some(GrammianSource::Point(io::read_vector_csv(p)?))),
        (None, Some(p)) => Ok(Some(GrammianSource::Covariance(io::read_matrix_csv(p)?))),
        (None, None) => Ok(None),
    }
}

fn cmd_gramian(args: GramianArgs) -> CliResult<CommandOutcome> {
    let a = io::read_matrix_csv(&args.a)?;
    let source = grammian_source(&args.x0, &args.r)?;
    if args.c.is_none() && source.is_none() {
        return Err(CliError::Usage(
            "nothing to compute: give --C (observability side) and/or --x0 or --R \
             (covariance side)"
                .into(),
        ));
    }

    let mut parts: Vec<String> = Vec::new();
    let mut payload = GramianJson {
        observability_grammian: None,
        covariance_grammian: None,
        energy: None,
        optimal_outputs: None,
    };

    let sys = match &args.c {
        Some(cp) => {
            let c = io::read_matrix_csv(cp)?;
            let sys = LinearSystem::new(a.clone(), c)?;
            let w = observability_grammian(&sys)?;
            parts.push(format!("W_obs {}x{}", w.nrows(), w.ncols()));
            payload.observability_grammian = Some(MatrixJson::from_array(&w.view()));
            Some(sys)
        }
        None => None,
    };

    if let Some(src) = &source {
        let w = koopman_grammian(&a, src)?;
        parts.push(format!("W_cov {}x{}", w.nrows(), w.ncols()));
        payload.covariance_grammian = Some(MatrixJson::from_array(&w.view()));
    }

    // All three energy expressions need both an output map and a point.
    if let (Some(sys), Some(GrammianSource::Point(x0))) = (&sys, &source) {
        let e = energy_identity(sys, &x0.view(), None)?;
        parts.push(format!("energy spread {:.3e}", e.max_relative_spread));
        payload.energy = Some(EnergyJson {
            direct: e.direct,
            quadratic_form: e.quadratic_form,
            trace_form: e.trace_form,
            max_relative_spread: e.max_relative_spread,
        });
    }

    if let Some(q) = args.q {
        let src = source.as_ref().ok_or_else(|| {
            CliError::Usage("--q needs a covariance side: give --x0 or --R".into())
        })?;
        let opt = optimal_outputs(&a, src, q)?;
        parts.push(format!(
            "top-{q} outputs capture {:.6} of {:.6}",
            opt.captured_energy.iter().sum::<f64>(),
            opt.total_energy
        ));
        payload.optimal_outputs = Some(OptimalJson {
            rows: MatrixJson::from_array(&opt.rows.view()),
            captured_energy: opt.captured_energy,
            total_energy: opt.total_energy,
        });
    }

    let path = out_path(&args.out, "gramian.json");
    write_json(&path, &payload)?;
    Ok(CommandOutcome {
        summary: format!("gramian: {} -> {}", parts.join(", "), path.display()),
        outputs: vec![path],
    })
}

fn cmd_optimal_outputs(args: OptimalOutputsArgs) -> CliResult<CommandOutcome> {
    let a = io::read_matrix_csv(&args.a)?;
    let r = io::read_matrix_csv(&args.r)?;
    let opt = optimal_outputs(&a, &GrammianSource::Covariance(r), args.q)?;
    let path = out_path(&args.out, "optimal_outputs.csv");
    io::write_matrix_csv(&path, &opt.rows.view())?;
    Ok(CommandOutcome {
        summary: format!(
            "optimal-outputs: {} rows capture {:.6} of {:.6} expected energy -> {}",
            args.q,
            opt.captured_energy.iter().sum::<f64>(),
            opt.total_energy,
            path.display()
        ),
        outputs: vec![path],
    })
}

// ---------------------------------------------------------------------------
// transport / adjoint-check / unitarity
// ---------------------------------------------------------------------------

fn cmd_transport(args: TransportArgs) -> CliResult<CommandOutcome> {
    let system = catalog::from_spec(&args.system)?;
    let phi = load_density(&args.density, &args.grid, &args.bounds, "--density")?;
    let mass_before = phi.total_mass();
    let (result, dt_used) = match args.method.as_str() {
        "sl" => {
            let dt = args.dt.unwrap_or(1e-3);
            (transport_flow(&phi, &system, args.t, dt)?, dt)
        }
        "pde" => {
            let dt = match args.dt {
                Some(dt) => dt,
                None => pde_stable_step(&phi, &system)?.min(args.t.abs().max(1e-300)),
            };
            (transport_pde(&phi, &system, args.t, dt)?, dt)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown --method '{other}'; valid methods: sl, pde"
            )))
        }
    };
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let path = out_path(&args.out, "density_out.txt");
    io::write_density_text(&path, &result.grid)?;
    Ok(CommandOutcome {
        summary: format!(
            "transport: {} for t = {} (dt = {:.3e}), mass {:.6e} -> {:.6e}, file {}",
            args.method,
            args.t,
            dt_used,
            mass_before,
            result.grid.total_mass(),
            path.display()
        ),
        outputs: vec![path],
    })
}

#[derive(Serialize)]
struct AdjointJson {
    lhs: f64,
    rhs: f64,
    abs_error: f64,
    rel_error: f64,
}

fn cmd_adjoint_check(args: AdjointCheckArgs) -> CliResult<CommandOutcome> {
    let system = catalog::from_spec(&args.system)?;
    let phi = load_density(&args.phi, &args.grid, &args.bounds, "--phi")?;
    let psi = load_density(&args.psi, &args.grid, &args.bounds, "--psi")?;
    let rep = adjoint_check(&system, &phi, &psi, args.t, args.dt)?;
    let path = out_path(&args.out, "adjoint_check.json");
    write_json(
        &path,
        &AdjointJson {
            lhs: rep.lhs,
            rhs: rep.rhs,
            abs_error: rep.abs_error,
            rel_error: rep.rel_error,
        },
    )?;
    Ok(CommandOutcome {
        summary: format!(
            "adjoint-check: <phi, psi o F> = {:.9e}, <T phi, psi> = {:.9e}, \
             relative error {:.3e} -> {}",
            rep.lhs,
            rep.rhs,
            rep.rel_error,
            path.display()
        ),
        outputs: vec![path],
    })
}

#[derive(Serialize)]
struct UnitarityJson {
    ratio: f64,
}

fn cmd_unitarity(args: UnitarityArgs) -> CliResult<CommandOutcome> {
    let system = catalog::from_spec(&args.system)?;
    let phi = load_density(&args.density, &args.grid, &args.bounds, "--density")?;
    let ratio = unitarity_check(&phi, &system, args.t, args.dt)?;
    let path = out_path(&args.out, "unitarity.json");
    write_json(&path, &UnitarityJson { ratio })?;
    Ok(CommandOutcome {
        summary: format!(
            "unitarity: ||T phi|| / ||phi|| = {:.9} -> {}",
            ratio,
            path.display()
        ),
        outputs: vec![path],
    })
}
