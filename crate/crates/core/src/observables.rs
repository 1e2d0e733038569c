//! Finite dictionaries of scalar observables (monomials, real Fourier
//! modes, Gaussians, linear coordinates) with analytic gradients, plus
//! coefficient-represented output maps `G(x) = Cᵀψ(x)`.

use crate::catalog::parse_matrix;
use crate::error::{CoreError, Result};
use crate::sampling::BoxDomain;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use std::collections::HashMap;

/// Which basis family a dictionary uses, with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum DictionaryKind {
    /// All monomials of total degree ≤ d, graded lexicographic order.
    Monomials { degree: usize },
    /// Real tensor Fourier basis (1, cos, sin per wavenumber per axis) on a
    /// periodic box; axis 0 varies fastest in the tensor ordering.
    Fourier {
        max_wavenumber: usize,
        domain: BoxDomain,
    },
    /// Unnormalized Gaussian bumps exp(−‖x−cᵢ‖²/(2σ²)).
    Gaussians { centers: Array2<f64>, sigma: f64 },
    /// Coordinate functions x₁..xₙ, optionally preceded by the constant 1.
    Linear { with_constant: bool },
}

/// An ordered finite family of scalar observables ψ₁..ψ_D on ℝⁿ.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    kind: DictionaryKind,
    dimension_in: usize,
    size: usize,
    /// Monomials only: exponent vector per basis function.
    exponents: Vec<Vec<usize>>,
}

impl Dictionary {
    pub fn monomials(n: usize, degree: usize) -> Result<Self> {
        if n == 0 {
            return Err(CoreError::Domain("monomials need n >= 1".into()));
        }
        let exponents = monomial_exponents(n, degree);
        debug_assert_eq!(exponents.len(), binomial(n + degree, degree));
        Ok(Self {
            kind: DictionaryKind::Monomials { degree },
            dimension_in: n,
            size: exponents.len(),
            exponents,
        })
    }

    /// Fourier dictionary on the default periodic box [0, 2π)ⁿ.
    pub fn fourier(n: usize, max_wavenumber: usize) -> Result<Self> {
        let tau = std::f64::consts::TAU;
        let domain = BoxDomain::new(vec![0.0; n], vec![tau; n])?;
        Self::fourier_on(n, max_wavenumber, domain)
    }

    pub fn fourier_on(n: usize, max_wavenumber: usize, domain: BoxDomain) -> Result<Self> {
        if domain.dim() != n {
            return Err(CoreError::DimensionMismatch {
                context: "fourier domain".into(),
                expected: n,
                got: domain.dim(),
            });
        }
        if n == 0 || n > 16 {
            return Err(CoreError::Unsupported(format!(
                "fourier dictionaries support 1..=16 axes, got {}",
                n
            )));
        }
        let per_axis = 2 * max_wavenumber + 1;
        Ok(Self {
            kind: DictionaryKind::Fourier {
                max_wavenumber,
                domain,
            },
            dimension_in: n,
            size: per_axis.pow(n as u32),
            exponents: Vec::new(),
        })
    }

    pub fn gaussians(centers: Array2<f64>, sigma: f64) -> Result<Self> {
        if centers.nrows() == 0 {
            return Err(CoreError::Domain("gaussians need at least one center".into()));
        }
        if !(sigma > 0.0) {
            return Err(CoreError::Domain(format!(
                "gaussian width must be positive, got {}",
                sigma
            )));
        }
        let n = centers.ncols();
        let size = centers.nrows();
        Ok(Self {
            kind: DictionaryKind::Gaussians { centers, sigma },
            dimension_in: n,
            size,
            exponents: Vec::new(),
        })
    }

    pub fn linear(n: usize, with_constant: bool) -> Result<Self> {
        if n == 0 {
            return Err(CoreError::Domain("linear dictionary needs n >= 1".into()));
        }
        Ok(Self {
            kind: DictionaryKind::Linear { with_constant },
            dimension_in: n,
            size: n + usize::from(with_constant),
            exponents: Vec::new(),
        })
    }

    pub fn kind(&self) -> &DictionaryKind {
        &self.kind
    }

    /// Number of basis functions D.
    pub fn size(&self) -> usize {
        self.size
    }

    /// State dimension n.
    pub fn dimension_in(&self) -> usize {
        self.dimension_in
    }

    fn check_input(&self, x: &ArrayView1<f64>) -> Result<()> {
        if x.len() != self.dimension_in {
            return Err(CoreError::DimensionMismatch {
                context: format!("dictionary '{}' evaluation", self.spec_string()),
                expected: self.dimension_in,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// ψ(x) = (ψ₁(x), …, ψ_D(x)).
    pub fn evaluate(&self, x: &ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_input(x)?;
        let mut out = Array1::<f64>::zeros(self.size);
        match &self.kind {
            DictionaryKind::Monomials { .. } => {
                for (i, e) in self.exponents.iter().enumerate() {
                    out[i] = e
                        .iter()
                        .zip(x.iter())
                        .map(|(&p, &xi)| xi.powi(p as i32))
                        .product();
                }
            }
            DictionaryKind::Fourier {
                max_wavenumber,
                domain,
            } => {
                let per_axis = 2 * max_wavenumber + 1;
                let table = fourier_axis_table(x, domain, *max_wavenumber);
                for i in 0..self.size {
                    let mut v = 1.0;
                    let mut rest = i;
                    for axis_vals in table.iter() {
                        v *= axis_vals[rest % per_axis];
                        rest /= per_axis;
                    }
                    out[i] = v;
                }
            }
            DictionaryKind::Gaussians { centers, sigma } => {
                let s2 = 2.0 * sigma * sigma;
                for (i, c) in centers.rows().into_iter().enumerate() {
                    let d2: f64 = c
                        .iter()
                        .zip(x.iter())
                        .map(|(&ci, &xi)| (xi - ci) * (xi - ci))
                        .sum();
                    out[i] = (-d2 / s2).exp();
                }
            }
            DictionaryKind::Linear { with_constant } => {
                let off = usize::from(*with_constant);
                if *with_constant {
                    out[0] = 1.0;
                }
                for j in 0..self.dimension_in {
                    out[off + j] = x[j];
                }
            }
        }
        Ok(out)
    }

    /// Stacks ψ(xᵢ)ᵀ rows over the rows of `xs` (N × n) into Ψ (N × D).
    pub fn evaluate_batch(&self, xs: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut psi = Array2::<f64>::zeros((xs.nrows(), self.size));
        for (i, row) in xs.rows().into_iter().enumerate() {
            psi.row_mut(i).assign(&self.evaluate(&row)?);
        }
        Ok(psi)
    }

    /// D×n matrix with entry (i, j) = ∂ψᵢ/∂xⱼ(x), all analytic.
    pub fn gradient(&self, x: &ArrayView1<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let n = self.dimension_in;
        let mut out = Array2::<f64>::zeros((self.size, n));
        match &self.kind {
            DictionaryKind::Monomials { .. } => {
                for (i, e) in self.exponents.iter().enumerate() {
                    for j in 0..n {
                        if e[j] == 0 {
                            continue;
                        }
                        let mut v = e[j] as f64 * x[j].powi(e[j] as i32 - 1);
                        for (k, &p) in e.iter().enumerate() {
                            if k != j {
                                v *= x[k].powi(p as i32);
                            }
                        }
                        out[[i, j]] = v;
                    }
                }
            }
            DictionaryKind::Fourier {
                max_wavenumber,
                domain,
            } => {
                let per_axis = 2 * max_wavenumber + 1;
                let table = fourier_axis_table(x, domain, *max_wavenumber);
                let dtable = fourier_axis_dtable(x, domain, *max_wavenumber);
                for i in 0..self.size {
                    let mut idx = [0usize; 16];
                    let mut rest = i;
                    for a in 0..n {
                        idx[a] = rest % per_axis;
                        rest /= per_axis;
                    }
                    for j in 0..n {
                        let mut v = 1.0;
                        for a in 0..n {
                            v *= if a == j {
                                dtable[a][idx[a]]
                            } else {
                                table[a][idx[a]]
                            };
                        }
                        out[[i, j]] = v;
                    }
                }
            }
            DictionaryKind::Gaussians { centers, sigma } => {
                let s2 = sigma * sigma;
                for (i, c) in centers.rows().into_iter().enumerate() {
                    let d2: f64 = c
                        .iter()
                        .zip(x.iter())
                        .map(|(&ci, &xi)| (xi - ci) * (xi - ci))
                        .sum();
                    let g = (-d2 / (2.0 * s2)).exp();
                    for j in 0..n {
                        out[[i, j]] = -g * (x[j] - c[j]) / s2;
                    }
                }
            }
            DictionaryKind::Linear { with_constant } => {
                let off = usize::from(*with_constant);
                for j in 0..n {
                    out[[off + j, j]] = 1.0;
                }
            }
        }
        Ok(out)
    }

    /// Canonical CLI spec string; parsing it back reproduces the dictionary.
    pub fn spec_string(&self) -> String {
        match &self.kind {
            DictionaryKind::Monomials { degree } => {
                format!("monomials:n={},d={}", self.dimension_in, degree)
            }
            DictionaryKind::Fourier {
                max_wavenumber,
                domain,
            } => {
                let tau = std::f64::consts::TAU;
                let default = domain.lo.iter().all(|&l| l == 0.0)
                    && domain.hi.iter().all(|&h| h == tau);
                if default {
                    format!("fourier:n={},k={}", self.dimension_in, max_wavenumber)
                } else {
                    let axes: Vec<String> = domain
                        .lo
                        .iter()
                        .zip(domain.hi.iter())
                        .map(|(l, h)| format!("{}:{}", l, h))
                        .collect();
                    format!(
                        "fourier:n={},k={},box={}",
                        self.dimension_in,
                        max_wavenumber,
                        axes.join(";")
                    )
                }
            }
            DictionaryKind::Gaussians { centers, sigma } => {
                let rows: Vec<String> = centers
                    .rows()
                    .into_iter()
                    .map(|r| {
                        r.iter()
                            .map(|v| format!("{}", v))
                            .collect::<Vec<_>>()
                            .join(" ")
                    })
                    .collect();
                format!("gaussians:centers={},sigma={}", rows.join(";"), sigma)
            }
            DictionaryKind::Linear { with_constant } => {
                format!("linear:n={},const={}", self.dimension_in, with_constant)
            }
        }
    }

    /// Parses a dictionary spec string. The `gaussians:file=...` form is not
    /// handled here (no file access in this module); load the centers and use
    /// [`Dictionary::gaussians`], or go through the I/O helper.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| CoreError::Parse(format!("dictionary spec '{}' lacks parameters", spec)))?;
        let mut params: HashMap<String, String> = HashMap::new();
        for part in rest.split(',') {
            let (k, v) = part.split_once('=').ok_or_else(|| {
                CoreError::Parse(format!("dictionary parameter '{}' is not key=value", part))
            })?;
            params.insert(k.trim().to_lowercase(), v.trim().to_string());
        }
        let get_usize = |key: &str| -> Result<usize> {
            params
                .get(key)
                .ok_or_else(|| {
                    CoreError::Parse(format!("dictionary spec '{}' needs {}=...", spec, key))
                })?
                .parse::<usize>()
                .map_err(|_| CoreError::Parse(format!("{} must be a nonnegative integer", key)))
        };
        match kind.trim().to_lowercase().as_str() {
            "monomials" => Self::monomials(get_usize("n")?, get_usize("d")?),
            "fourier" => {
                let n = get_usize("n")?;
                let k = get_usize("k")?;
                match params.get("box") {
                    None => Self::fourier(n, k),
                    Some(raw) => Self::fourier_on(n, k, parse_box_semicolon(raw)?),
                }
            }
            "gaussians" => {
                if params.contains_key("file") {
                    return Err(CoreError::Unsupported(
                        "gaussians:file=... requires file access; load the centers first".into(),
                    ));
                }
                let centers = parse_matrix(params.get("centers").ok_or_else(|| {
                    CoreError::Parse("gaussians spec needs centers=... or file=...".into())
                })?)?;
                let sigma: f64 = params
                    .get("sigma")
                    .ok_or_else(|| CoreError::Parse("gaussians spec needs sigma=...".into()))?
                    .parse()
                    .map_err(|_| CoreError::Parse("sigma must be a number".into()))?;
                Self::gaussians(centers, sigma)
            }
            "linear" => {
                let n = get_usize("n")?;
                let with_constant = match params.get("const").map(|s| s.as_str()) {
                    None | Some("true") => true,
                    Some("false") => false,
                    Some(other) => {
                        return Err(CoreError::Parse(format!(
                            "const must be true or false, got '{}'",
                            other
                        )))
                    }
                };
                Self::linear(n, with_constant)
            }
            other => Err(CoreError::Parse(format!(
                "unknown dictionary kind '{}'; valid: monomials, fourier, gaussians, linear",
                other
            ))),
        }
    }

    /// Index of the basis function equal to the coordinate xⱼ, if the
    /// dictionary contains it exactly.
    fn coordinate_index(&self, j: usize) -> Option<usize> {
        match &self.kind {
            DictionaryKind::Linear { with_constant } => Some(usize::from(*with_constant) + j),
            DictionaryKind::Monomials { .. } => self
                .exponents
                .iter()
                .position(|e| e.iter().sum::<usize>() == 1 && e[j] == 1),
            _ => None,
        }
    }
}

/// Tensor index bookkeeping caps Fourier dictionaries at 16 axes; state
/// dimensions in this crate are far below that.
fn fourier_axis_table(x: &ArrayView1<f64>, domain: &BoxDomain, k: usize) -> Vec<Vec<f64>> {
    let mut table = Vec::with_capacity(x.len());
    for (a, &xa) in x.iter().enumerate() {
        let omega = std::f64::consts::TAU / (domain.hi[a] - domain.lo[a]);
        let u = xa - domain.lo[a];
        let mut vals = Vec::with_capacity(2 * k + 1);
        vals.push(1.0);
        for j in 1..=k {
            let (s, c) = (j as f64 * omega * u).sin_cos();
            vals.push(c);
            vals.push(s);
        }
        table.push(vals);
    }
    table
}

fn fourier_axis_dtable(x: &ArrayView1<f64>, domain: &BoxDomain, k: usize) -> Vec<Vec<f64>> {
    let mut table = Vec::with_capacity(x.len());
    for (a, &xa) in x.iter().enumerate() {
        let omega = std::f64::consts::TAU / (domain.hi[a] - domain.lo[a]);
        let u = xa - domain.lo[a];
        let mut vals = Vec::with_capacity(2 * k + 1);
        vals.push(0.0);
        for j in 1..=k {
            let w = j as f64 * omega;
            let (s, c) = (w * u).sin_cos();
            vals.push(-w * s);
            vals.push(w * c);
        }
        table.push(vals);
    }
    table
}

/// All exponent vectors with total degree ≤ d, ordered by ascending total
/// degree, then descending lexicographic within a degree (x₁-major).
fn monomial_exponents(n: usize, d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for total in 0..=d {
        let mut current = vec![0usize; n];
        fill_degree(n, total, 0, &mut current, &mut out);
    }
    out
}

fn fill_degree(n: usize, remaining: usize, axis: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if axis == n - 1 {
        current[axis] = remaining;
        out.push(current.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        current[axis] = e;
        fill_degree(n, remaining - e, axis + 1, current, out);
    }
    current[axis] = 0;
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut num = 1usize;
    for i in 0..k {
        num = num * (n - i) / (i + 1);
    }
    num
}

fn parse_box_semicolon(raw: &str) -> Result<BoxDomain> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for axis in raw.split(';') {
        let (l, h) = axis
            .split_once(':')
            .ok_or_else(|| CoreError::Parse(format!("box axis '{}' is not lo:hi", axis)))?;
        lo.push(
            l.trim()
                .parse::<f64>()
                .map_err(|_| CoreError::Parse(format!("'{}' is not a number", l)))?,
        );
        hi.push(
            h.trim()
                .parse::<f64>()
                .map_err(|_| CoreError::Parse(format!("'{}' is not a number", h)))?,
        );
    }
    BoxDomain::new(lo, hi)
}

/// An m-channel output map `G(x) = Cᵀψ(x)` in dictionary coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableVector {
    pub dictionary: Dictionary,
    /// D×m coefficients; column j is output channel j.
    pub coefficients: Array2<f64>,
}

impl ObservableVector {
    pub fn new(dictionary: Dictionary, coefficients: Array2<f64>) -> Result<Self> {
        if coefficients.nrows() != dictionary.size() {
            return Err(CoreError::Shape(format!(
                "coefficients have {} rows but dictionary has {} basis functions",
                coefficients.nrows(),
                dictionary.size()
            )));
        }
        Ok(Self {
            dictionary,
            coefficients,
        })
    }

    /// Single-channel observable from a coefficient vector.
    pub fn scalar(dictionary: Dictionary, coeffs: Array1<f64>) -> Result<Self> {
        let d = coeffs.len();
        let c = coeffs
            .into_shape_with_order((d, 1))
            .map_err(|e| CoreError::Shape(e.to_string()))?;
        Self::new(dictionary, c)
    }

    pub fn channels(&self) -> usize {
        self.coefficients.ncols()
    }

    /// G(x) = Cᵀψ(x).
    pub fn apply(&self, x: &ArrayView1<f64>) -> Result<Array1<f64>> {
        let psi = self.dictionary.evaluate(x)?;
        Ok(self.coefficients.t().dot(&psi))
    }
}

/// The identity output map Ḡ(x) = x as an `ObservableVector`; requires the
/// dictionary to contain the coordinate functions (Linear, or Monomials of
/// degree ≥ 1).
pub fn identity_observable(dict: &Dictionary) -> Result<ObservableVector> {
    let n = dict.dimension_in();
    let mut c = Array2::<f64>::zeros((dict.size(), n));
    for j in 0..n {
        match dict.coordinate_index(j) {
            Some(i) => c[[i, j]] = 1.0,
            None => {
                return Err(CoreError::Unsupported(format!(
                    "dictionary '{}' does not contain the coordinate functions",
                    dict.spec_string()
                )))
            }
        }
    }
    ObservableVector::new(dict.clone(), c)
}
