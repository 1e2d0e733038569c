//! File formats: comma-separated matrices, trajectories and spectra, a
//! plain-text density-grid format, and JSON payloads for operators,
//! observables, and observability reports. All floating-point text is
//! written with 17 significant digits so a read-back is bit-exact.

use crate::dynamics::Trajectory;
use crate::error::{CoreError, Result};
use crate::grid::DensityGrid;
use crate::identification::ObservabilityReport;
use crate::koopman::{KoopmanMatrix, Provenance, Spectrum};
use crate::observables::{Dictionary, ObservableVector};
use crate::sampling::BoxDomain;
use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(tok: &str, what: &str) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| CoreError::Parse(format!("bad number '{}' in {}", tok.trim(), what)))
}

// ---------------------------------------------------------------------------
// Matrix CSV: `# rows,cols` header, one comma-separated row per line. The
// header is written on output but optional on input for rectangular files.
// ---------------------------------------------------------------------------

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &ArrayView2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# {},{}", m.nrows(), m.ncols())?;
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut shape: Option<(usize, usize)> = None;
    let mut data: Vec<f64> = Vec::new();
    let mut row_lens: Vec<usize> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            if shape.is_none() {
                let mut it = rest.trim().split(',');
                let rows = it
                    .next()
                    .ok_or_else(|| CoreError::Parse("matrix header missing rows".into()))?;
                let cols = it
                    .next()
                    .ok_or_else(|| CoreError::Parse("matrix header missing cols".into()))?;
                shape = Some((
                    rows.trim()
                        .parse()
                        .map_err(|_| CoreError::Parse(format!("bad row count '{rows}'")))?,
                    cols.trim()
                        .parse()
                        .map_err(|_| CoreError::Parse(format!("bad column count '{cols}'")))?,
                ));
            }
            continue;
        }
        let before = data.len();
        for tok in t.split(',') {
            data.push(parse_f64(tok, "matrix body")?);
        }
        row_lens.push(data.len() - before);
    }
    // Headerless files are accepted when rectangular: one matrix row per line.
    let (rows, cols) = match shape {
        Some(s) => s,
        None => {
            let cols = *row_lens.first().ok_or_else(|| {
                CoreError::Parse(format!("matrix file {} is empty", path.display()))
            })?;
            if row_lens.iter().any(|&l| l != cols) {
                return Err(CoreError::Parse(format!(
                    "matrix file {} has ragged rows and no '# rows,cols' header",
                    path.display()
                )));
            }
            (row_lens.len(), cols)
        }
    };
    if data.len() != rows * cols {
        return Err(CoreError::Parse(format!(
            "matrix file {} declares {}x{} but holds {} values",
            path.display(),
            rows,
            cols,
            data.len()
        )));
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| CoreError::Shape(e.to_string()))
}

/// Reads a matrix file that must describe a single vector: one row, one
/// column, or a bare list of numbers.
pub fn read_vector_csv(path: impl AsRef<Path>) -> Result<Array1<f64>> {
    let m = read_matrix_csv(path.as_ref())?;
    if m.nrows() == 1 {
        Ok(m.row(0).to_owned())
    } else if m.ncols() == 1 {
        Ok(m.column(0).to_owned())
    } else {
        Err(CoreError::Shape(format!(
            "expected a vector in {}, found a {}x{} matrix",
            path.as_ref().display(),
            m.nrows(),
            m.ncols()
        )))
    }
}

// ---------------------------------------------------------------------------
// Trajectory CSV: header `t,x1,..,xn[,y1,..,ym]`, one sample per line.
// ---------------------------------------------------------------------------

pub fn write_trajectory_csv(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let n = traj.states.ncols();
    let mut header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=n).map(|i| format!("x{i}")))
        .collect();
    if let Some(outs) = &traj.outputs {
        header.extend((1..=outs.ncols()).map(|i| format!("y{i}")));
    }
    writeln!(w, "{}", header.join(","))?;
    for (i, &t) in traj.times.iter().enumerate() {
        let mut fields = vec![fmt(t)];
        fields.extend(traj.states.row(i).iter().map(|&v| fmt(v)));
        if let Some(outs) = &traj.outputs {
            fields.extend(outs.row(i).iter().map(|&v| fmt(v)));
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn read_trajectory_csv(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| CoreError::Parse(format!("{} is empty", path.display())))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.first() != Some(&"t") {
        return Err(CoreError::Parse(format!(
            "trajectory header must start with 't', got '{}'",
            header.trim()
        )));
    }
    let n = cols.iter().filter(|c| c.starts_with('x')).count();
    let m = cols.iter().filter(|c| c.starts_with('y')).count();
    if n == 0 || cols.len() != 1 + n + m {
        return Err(CoreError::Parse(format!(
            "trajectory header '{}' is not t,x1..xn[,y1..ym]",
            header.trim()
        )));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut outputs = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let fields: Vec<&str> = t.split(',').collect();
        if fields.len() != cols.len() {
            return Err(CoreError::Parse(format!(
                "trajectory row has {} fields, header has {}",
                fields.len(),
                cols.len()
            )));
        }
        times.push(parse_f64(fields[0], "trajectory time")?);
        for tok in &fields[1..=n] {
            states.push(parse_f64(tok, "trajectory state")?);
        }
        for tok in &fields[1 + n..] {
            outputs.push(parse_f64(tok, "trajectory output")?);
        }
    }
    let rows = times.len();
    let states = Array2::from_shape_vec((rows, n), states)
        .map_err(|e| CoreError::Shape(e.to_string()))?;
    let outputs = if m > 0 {
        Some(
            Array2::from_shape_vec((rows, m), outputs)
                .map_err(|e| CoreError::Shape(e.to_string()))?,
        )
    } else {
        None
    };
    Trajectory::new(times, states, outputs)
}

// ---------------------------------------------------------------------------
// Spectrum CSV: `re,im,defective_flag` per eigenvalue, sorted as computed.
// ---------------------------------------------------------------------------

pub fn write_spectrum_csv(path: impl AsRef<Path>, s: &Spectrum) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "re,im,defective_flag")?;
    for (i, z) in s.eigenvalues.iter().enumerate() {
        writeln!(
            w,
            "{},{},{}",
            fmt(z.re),
            fmt(z.im),
            u8::from(s.defective[i])
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Density grid text: `# box lo1 hi1 [...]`, `# shape n1 [...]`, then one
// value per line in row-major order.
// ---------------------------------------------------------------------------

pub fn write_density_text(path: impl AsRef<Path>, g: &DensityGrid) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let bounds: Vec<String> = g
        .domain()
        .lo
        .iter()
        .zip(g.domain().hi.iter())
        .flat_map(|(&l, &h)| [fmt(l), fmt(h)])
        .collect();
    writeln!(w, "# box {}", bounds.join(" "))?;
    let shape: Vec<String> = g.shape().iter().map(|c| c.to_string()).collect();
    writeln!(w, "# shape {}", shape.join(" "))?;
    for &v in g.values() {
        writeln!(w, "{}", fmt(v))?;
    }
    Ok(())
}

pub fn read_density_text(path: impl AsRef<Path>) -> Result<DensityGrid> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut bounds: Option<Vec<f64>> = None;
    let mut shape: Option<Vec<usize>> = None;
    let mut values = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix("# box") {
            let mut b = Vec::new();
            for tok in rest.split_whitespace() {
                b.push(parse_f64(tok, "density box header")?);
            }
            bounds = Some(b);
        } else if let Some(rest) = t.strip_prefix("# shape") {
            let mut s = Vec::new();
            for tok in rest.split_whitespace() {
                s.push(tok.parse::<usize>().map_err(|_| {
                    CoreError::Parse(format!("bad cell count '{tok}' in density header"))
                })?);
            }
            shape = Some(s);
        } else if t.starts_with('#') {
            continue;
        } else {
            values.push(parse_f64(t, "density body")?);
        }
    }
    let bounds = bounds.ok_or_else(|| {
        CoreError::Parse(format!("{} has no '# box ...' header", path.display()))
    })?;
    let shape = shape.ok_or_else(|| {
        CoreError::Parse(format!("{} has no '# shape ...' header", path.display()))
    })?;
    if bounds.len() != 2 * shape.len() {
        return Err(CoreError::Parse(format!(
            "density header has {} bounds for {} axes",
            bounds.len(),
            shape.len()
        )));
    }
    let lo: Vec<f64> = bounds.iter().step_by(2).copied().collect();
    let hi: Vec<f64> = bounds.iter().skip(1).step_by(2).copied().collect();
    DensityGrid::new(BoxDomain::new(lo, hi)?, shape, values)
}

// ---------------------------------------------------------------------------
// JSON payloads. Matrices are flattened row-major with explicit shape.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixJson {
    pub fn from_array(m: &ArrayView2<f64>) -> Self {
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().copied().collect(),
        }
    }

    pub fn to_array(&self) -> Result<Array2<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(CoreError::Parse(format!(
                "matrix payload declares {}x{} but holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Array2::from_shape_vec((self.rows, self.cols), self.data.clone())
            .map_err(|e| CoreError::Shape(e.to_string()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct KoopmanJson {
    dict_spec: String,
    matrix: MatrixJson,
    provenance: Provenance,
    residual: f64,
}

pub fn write_koopman_json(path: impl AsRef<Path>, k: &KoopmanMatrix) -> Result<()> {
    let payload = KoopmanJson {
        dict_spec: k.dictionary.spec_string(),
        matrix: MatrixJson::from_array(&k.matrix.view()),
        provenance: k.provenance.clone(),
        residual: k.residual,
    };
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, &payload).map_err(|e| CoreError::Parse(e.to_string()))
}

pub fn read_koopman_json(path: impl AsRef<Path>) -> Result<KoopmanMatrix> {
    let r = BufReader::new(File::open(path)?);
    let payload: KoopmanJson =
        serde_json::from_reader(r).map_err(|e| CoreError::Parse(e.to_string()))?;
    let dict = dictionary_from_spec(&payload.dict_spec)?;
    KoopmanMatrix::new(
        dict,
        payload.matrix.to_array()?,
        payload.provenance,
        payload.residual,
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservableJson {
    dict_spec: String,
    coefficients: MatrixJson,
}

pub fn write_observable_json(path: impl AsRef<Path>, g: &ObservableVector) -> Result<()> {
    let payload = ObservableJson {
        dict_spec: g.dictionary.spec_string(),
        coefficients: MatrixJson::from_array(&g.coefficients.view()),
    };
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, &payload).map_err(|e| CoreError::Parse(e.to_string()))
}

pub fn read_observable_json(path: impl AsRef<Path>) -> Result<ObservableVector> {
    let r = BufReader::new(File::open(path)?);
    let payload: ObservableJson =
        serde_json::from_reader(r).map_err(|e| CoreError::Parse(e.to_string()))?;
    let dict = dictionary_from_spec(&payload.dict_spec)?;
    ObservableVector::new(dict, payload.coefficients.to_array()?)
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservabilityJson {
    unobservable_dimension: usize,
    singular_values: Vec<f64>,
    tol: f64,
    unobservable_basis: MatrixJson,
    observable_basis: MatrixJson,
}

pub fn write_observability_json(
    path: impl AsRef<Path>,
    rep: &ObservabilityReport,
) -> Result<()> {
    let payload = ObservabilityJson {
        unobservable_dimension: rep.unobservable_dimension,
        singular_values: rep.singular_values.clone(),
        tol: rep.tol,
        unobservable_basis: MatrixJson::from_array(&rep.unobservable_basis.view()),
        observable_basis: MatrixJson::from_array(&rep.observable_basis.view()),
    };
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, &payload).map_err(|e| CoreError::Parse(e.to_string()))
}

// ---------------------------------------------------------------------------
// Spec strings that need file access.
// ---------------------------------------------------------------------------

/// Builds a dictionary from its spec string, additionally resolving
/// `gaussians:file=centers.csv,sigma=s` by reading the centers (one row per
/// center) from a matrix file. All other specs pass through unchanged.
pub fn dictionary_from_spec(spec: &str) -> Result<Dictionary> {
    let body = spec.strip_prefix("gaussians:");
    if let Some(body) = body {
        if body.split(',').any(|kv| kv.trim_start().starts_with("file=")) {
            let mut file: Option<String> = None;
            let mut sigma: Option<f64> = None;
            for kv in body.split(',') {
                let (key, value) = kv.split_once('=').ok_or_else(|| {
                    CoreError::Parse(format!("expected key=value in '{kv}'"))
                })?;
                match key.trim() {
                    "file" => file = Some(value.trim().to_string()),
                    "sigma" => sigma = Some(parse_f64(value, "gaussian width")?),
                    other => {
                        return Err(CoreError::Parse(format!(
                            "unknown gaussians parameter '{other}'"
                        )))
                    }
                }
            }
            let file = file.expect("file= presence checked above");
            let sigma = sigma.ok_or_else(|| {
                CoreError::Parse("gaussians:file=... needs sigma=...".into())
            })?;
            let centers = read_matrix_csv(&file)?;
            return Dictionary::gaussians(centers, sigma);
        }
    }
    Dictionary::from_spec(spec)
}

/// Builds a density on the given grid from a spec string:
///
/// * `gauss:c=<comma-separated center>;s=<width>` — unnormalized Gaussian
///   `exp(−‖x−c‖²/(2s²))`, matching the Gaussian dictionary convention;
/// * `indicator:lo=<comma-separated>;hi=<comma-separated>` — box indicator.
pub fn density_from_spec(
    spec: &str,
    domain: &BoxDomain,
    shape: &[usize],
) -> Result<DensityGrid> {
    let n = domain.dim();
    let parse_point = |value: &str, what: &str| -> Result<Vec<f64>> {
        let parts: Vec<f64> = value
            .split(',')
            .map(|tok| parse_f64(tok, what))
            .collect::<Result<_>>()?;
        if parts.len() != n {
            return Err(CoreError::DimensionMismatch {
                context: format!("density {what}"),
                expected: n,
                got: parts.len(),
            });
        }
        Ok(parts)
    };
    if let Some(body) = spec.strip_prefix("gauss:") {
        let mut center: Option<Vec<f64>> = None;
        let mut sigma: Option<f64> = None;
        for kv in body.split(';') {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| CoreError::Parse(format!("expected key=value in '{kv}'")))?;
            match key.trim() {
                "c" => center = Some(parse_point(value, "gaussian center")?),
                "s" => sigma = Some(parse_f64(value, "gaussian width")?),
                other => {
                    return Err(CoreError::Parse(format!(
                        "unknown gauss parameter '{other}'"
                    )))
                }
            }
        }
        let center =
            center.ok_or_else(|| CoreError::Parse("gauss density needs c=...".into()))?;
        let sigma = sigma.ok_or_else(|| CoreError::Parse("gauss density needs s=...".into()))?;
        if !(sigma > 0.0) {
            return Err(CoreError::Domain(format!(
                "gaussian width must be positive, got {sigma}"
            )));
        }
        return DensityGrid::from_fn(domain.clone(), shape.to_vec(), move |x| {
            let d2: f64 = x
                .iter()
                .zip(center.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (-d2 / (2.0 * sigma * sigma)).exp()
        });
    }
    if let Some(body) = spec.strip_prefix("indicator:") {
        let mut lo: Option<Vec<f64>> = None;
        let mut hi: Option<Vec<f64>> = None;
        for kv in body.split(';') {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| CoreError::Parse(format!("expected key=value in '{kv}'")))?;
            match key.trim() {
                "lo" => lo = Some(parse_point(value, "indicator corner")?),
                "hi" => hi = Some(parse_point(value, "indicator corner")?),
                other => {
                    return Err(CoreError::Parse(format!(
                        "unknown indicator parameter '{other}'"
                    )))
                }
            }
        }
        let lo = lo.ok_or_else(|| CoreError::Parse("indicator needs lo=...".into()))?;
        let hi = hi.ok_or_else(|| CoreError::Parse("indicator needs hi=...".into()))?;
        return DensityGrid::from_fn(domain.clone(), shape.to_vec(), move |x| {
            let inside = x
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(&v, (&l, &h))| v >= l && v <= h);
            f64::from(inside)
        });
    }
    Err(CoreError::Parse(format!(
        "unknown density spec '{spec}' (expected gauss:..., indicator:..., or file=...)"
    )))
}
