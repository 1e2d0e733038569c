//! Finite-dimensional Koopman matrices on a dictionary, built three ways:
//! exact pullback projection, EDMD regression on snapshot pairs, and
//! generator projection. Also spectra, observable propagation, and the
//! original-vs-Koopman output comparison.
//!
//! Convention: with `G = ψᵀc`, the matrix acts on coefficient vectors,
//! `(K G)(x) = ψ(x)ᵀ (M c)`. Column `j` of `M` holds the dictionary
//! coefficients of `K ψⱼ`.

use crate::dynamics::DynamicalSystem;
use crate::error::{CoreError, Result};
use crate::linalg::{eig_sorted, fro_norm, lstsq};
use crate::observables::{Dictionary, ObservableVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Default relative singular-value cutoff for least-squares constructions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// How a Koopman matrix was constructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    ExactPullback,
    Edmd { snapshots: usize, residual: f64 },
    GeneratorProjection,
    ClosedFormLinear,
}

/// D×D matrix representation of the Koopman operator (or its generator) on
/// a dictionary, acting on coefficient vectors as `c ↦ Mc`.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanMatrix {
    pub dictionary: Dictionary,
    pub matrix: Array2<f64>,
    pub provenance: Provenance,
    /// Relative Frobenius projection/regression residual; 0 for exact
    /// constructions on closed dictionaries.
    pub residual: f64,
}

impl KoopmanMatrix {
    pub fn new(
        dictionary: Dictionary,
        matrix: Array2<f64>,
        provenance: Provenance,
        residual: f64,
    ) -> Result<Self> {
        let d = dictionary.size();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(CoreError::Shape(format!(
                "Koopman matrix must be {}x{} for this dictionary, got {}x{}",
                d,
                d,
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if residual < 0.0 {
            return Err(CoreError::Domain("residual must be nonnegative".into()));
        }
        Ok(Self {
            dictionary,
            matrix,
            provenance,
            residual,
        })
    }

    pub fn size(&self) -> usize {
        self.dictionary.size()
    }

    /// Applies the operator to an observable: coefficients C ↦ M C.
    pub fn apply(&self, obs: &ObservableVector) -> Result<ObservableVector> {
        if obs.dictionary != self.dictionary {
            return Err(CoreError::Shape(
                "observable dictionary does not match the Koopman matrix dictionary".into(),
            ));
        }
        ObservableVector::new(self.dictionary.clone(), self.matrix.dot(&obs.coefficients))
    }
}

fn relative_residual(residual_fro: f64, reference: &Array2<f64>) -> f64 {
    let scale = fro_norm(&reference.view());
    if scale > 0.0 {
        residual_fro / scale
    } else {
        residual_fro
    }
}

/// Least-squares solve `Ψ_X M ≈ Θ` shared by the three constructions.
/// `require_full_rank` turns rank deficiency into a conditioning error.
pub(crate) fn project(
    psi_x: &Array2<f64>,
    theta: &Array2<f64>,
    rank_tol: f64,
    require_full_rank: bool,
) -> Result<(Array2<f64>, f64)> {
    let d = psi_x.ncols();
    let sol = lstsq(psi_x, theta, rank_tol)?;
    if require_full_rank && sol.rank < d {
        return Err(CoreError::Conditioning {
            rank: sol.rank,
            needed: d,
            detail: format!(
                "sample Gram matrix is rank deficient (singular values {:?})",
                sol.singular_values
                    .iter()
                    .map(|s| format!("{:.3e}", s))
                    .collect::<Vec<_>>()
            ),
        });
    }
    let residual = relative_residual(sol.residual_fro, theta);
    Ok((sol.solution, residual))
}

/// Exact-pullback construction: least squares of `Ψ_X M ≈ Ψ_{F_t(X)}` over
/// the sample rows of `samples`. For dictionaries closed under the pullback
/// the residual is at round-off level.
pub fn koopman_exact(
    system: &DynamicalSystem,
    dict: &Dictionary,
    t: f64,
    dt: f64,
    samples: &ArrayView2<f64>,
) -> Result<KoopmanMatrix> {
    if dict.dimension_in() != system.dimension {
        return Err(CoreError::DimensionMismatch {
            context: "koopman_exact dictionary vs system".into(),
            expected: system.dimension,
            got: dict.dimension_in(),
        });
    }
    if samples.nrows() < dict.size() {
        return Err(CoreError::Domain(format!(
            "koopman_exact needs at least D = {} sample points, got {}",
            dict.size(),
            samples.nrows()
        )));
    }
    let psi_x = dict.evaluate_batch(samples)?;
    let mut flowed = Array2::<f64>::zeros((samples.nrows(), system.dimension));
    for (i, row) in samples.rows().into_iter().enumerate() {
        flowed.row_mut(i).assign(&system.flow(&row, t, dt)?);
    }
    let psi_y = dict.evaluate_batch(&flowed.view())?;
    let (m, residual) = project(&psi_x, &psi_y, DEFAULT_RANK_TOL, true)?;
    KoopmanMatrix::new(dict.clone(), m, Provenance::ExactPullback, residual)
}

/// EDMD: `M = Ψ_X⁺ Ψ_{X′}` from snapshot pairs (rows of `x` map to rows of
/// `x_next`), with singular values below `rank_tol·σ_max` truncated.
pub fn edmd(
    x: &ArrayView2<f64>,
    x_next: &ArrayView2<f64>,
    dict: &Dictionary,
    rank_tol: f64,
) -> Result<KoopmanMatrix> {
    if x.nrows() == 0 {
        return Err(CoreError::Domain("EDMD needs at least one snapshot pair".into()));
    }
    if x.dim() != x_next.dim() {
        return Err(CoreError::Shape(format!(
            "snapshot blocks disagree: {:?} vs {:?}",
            x.dim(),
            x_next.dim()
        )));
    }
    if x.ncols() != dict.dimension_in() {
        return Err(CoreError::DimensionMismatch {
            context: "EDMD snapshots vs dictionary".into(),
            expected: dict.dimension_in(),
            got: x.ncols(),
        });
    }
    if x.nrows() > 1 {
        let first = x.row(0);
        let all_same = x.rows().into_iter().all(|r| r == first);
        if all_same {
            return Err(CoreError::Conditioning {
                rank: 1,
                needed: dict.size().min(x.nrows()),
                detail: "all snapshot inputs are identical".into(),
            });
        }
    }
    let psi_x = dict.evaluate_batch(x)?;
    let psi_y = dict.evaluate_batch(x_next)?;
    let (m, residual) = project(&psi_x, &psi_y, rank_tol, false)?;
    let n = x.nrows();
    KoopmanMatrix::new(
        dict.clone(),
        m,
        Provenance::Edmd {
            snapshots: n,
            residual,
        },
        residual,
    )
}

/// Generator projection for continuous systems: least squares fit of
/// `(Kψⱼ)(x) = ∇ψⱼ(x)·f(x)` onto the dictionary over the sample rows.
pub fn generator_matrix(
    system: &DynamicalSystem,
    dict: &Dictionary,
    samples: &ArrayView2<f64>,
) -> Result<KoopmanMatrix> {
    if !system.is_continuous() {
        return Err(CoreError::Domain(format!(
            "generator_matrix needs a continuous system, '{}' is a discrete map",
            system.name
        )));
    }
    if dict.dimension_in() != system.dimension {
        return Err(CoreError::DimensionMismatch {
            context: "generator_matrix dictionary vs system".into(),
            expected: system.dimension,
            got: dict.dimension_in(),
        });
    }
    if samples.nrows() < dict.size() {
        return Err(CoreError::Domain(format!(
            "generator_matrix needs at least D = {} sample points, got {}",
            dict.size(),
            samples.nrows()
        )));
    }
    let psi_x = dict.evaluate_batch(samples)?;
    let mut theta = Array2::<f64>::zeros((samples.nrows(), dict.size()));
    for (i, row) in samples.rows().into_iter().enumerate() {
        let f = system.field(&row)?;
        let grad = dict.gradient(&row)?; // D×n
        theta.row_mut(i).assign(&grad.dot(&f));
    }
    let (m, residual) = project(&psi_x, &theta, DEFAULT_RANK_TOL, true)?;
    KoopmanMatrix::new(dict.clone(), m, Provenance::GeneratorProjection, residual)
}

/// Closed-form Koopman matrix of the discrete linear map `x⁺ = Ax` on the
/// Linear dictionary: `M = Aᵀ`, bordered by the constant function when the
/// dictionary carries one.
pub fn closed_form_linear(a: &Array2<f64>, with_constant: bool) -> Result<KoopmanMatrix> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(CoreError::Shape(format!(
            "closed_form_linear needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let dict = Dictionary::linear(n, with_constant)?;
    let d = dict.size();
    let mut m = Array2::<f64>::zeros((d, d));
    let off = usize::from(with_constant);
    if with_constant {
        m[[0, 0]] = 1.0;
    }
    for i in 0..n {
        for j in 0..n {
            // Column off+j holds the coefficients of (Ax)_j = Σ_i A_ji x_i.
            m[[off + i, off + j]] = a[[j, i]];
        }
    }
    KoopmanMatrix::new(dict, m, Provenance::ClosedFormLinear, 0.0)
}

/// Sorted eigendecomposition of a Koopman matrix with per-pair
/// defectiveness flags.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Descending magnitude; ties by descending real part then imaginary.
    pub eigenvalues: Vec<Complex64>,
    /// Columns aligned with `eigenvalues`, unit 2-norm, first
    /// non-negligible component real-positive.
    pub eigenvectors: Array2<Complex64>,
    /// `‖M v − λ v‖₂` per pair.
    pub residuals: Vec<f64>,
    /// True where an eigenpair is numerically defective: large residual, or
    /// an eigenvector that collapses onto another vector of the same
    /// eigenvalue (Jordan-block behaviour).
    pub defective: Vec<bool>,
}

/// Eigendecomposition of the Koopman matrix.
pub fn spectrum(k: &KoopmanMatrix) -> Result<Spectrum> {
    spectrum_of(&k.matrix)
}

/// Eigendecomposition of a raw operator matrix with the same conventions.
pub fn spectrum_of(m: &Array2<f64>) -> Result<Spectrum> {
    let pairs = eig_sorted(m)?;
    let d = pairs.values.len();
    let mnorm = fro_norm(&m.view());
    let lam_scale = pairs
        .values
        .iter()
        .map(|z| z.norm())
        .fold(0.0_f64, f64::max)
        .max(1e-300);
    let mut defective = vec![false; d];
    for i in 0..d {
        if pairs.residuals[i] > 1e-8 * mnorm.max(1e-300) {
            defective[i] = true;
        }
        for j in (i + 1)..d {
            if (pairs.values[i] - pairs.values[j]).norm() > 1e-8 * lam_scale {
                continue;
            }
            let vi = pairs.vectors.column(i);
            let vj = pairs.vectors.column(j);
            let inner: Complex64 = vi.iter().zip(vj.iter()).map(|(a, b)| a.conj() * b).sum();
            if inner.norm() >= 1.0 - 1e-6 {
                defective[i] = true;
                defective[j] = true;
            }
        }
    }
    Ok(Spectrum {
        eigenvalues: pairs.values,
        eigenvectors: pairs.vectors,
        residuals: pairs.residuals,
        defective,
    })
}

/// Coefficient trajectory `G_0 = Ḡ`, `G_{t+1} = M G_t`, length `steps + 1`.
pub fn propagate_observable(
    k: &KoopmanMatrix,
    g_bar: &ObservableVector,
    steps: usize,
) -> Result<Vec<ObservableVector>> {
    if g_bar.dictionary != k.dictionary {
        return Err(CoreError::Shape(
            "observable dictionary does not match the Koopman matrix dictionary".into(),
        ));
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(g_bar.clone());
    for _ in 0..steps {
        let prev = out.last().expect("nonempty");
        out.push(k.apply(prev)?);
    }
    Ok(out)
}

/// Output of [`represent`]: the same output series computed through the
/// original dynamics and through the Koopman representation.
#[derive(Debug, Clone)]
pub struct RepresentReport {
    pub times: Vec<f64>,
    /// Row t: Ḡ(F_t(x̄)).
    pub y_original: Array2<f64>,
    /// Row t: (K_t Ḡ)(x̄) via coefficient propagation.
    pub y_koopman: Array2<f64>,
    pub max_discrepancy: f64,
}

/// Runs the two-column comparison: outputs along the simulated trajectory
/// versus outputs of the propagated observable evaluated at the initial
/// condition. `t_step` is the duration represented by one application of
/// `k` (1 for discrete maps); `dt` is the integrator step.
pub fn represent(
    system: &DynamicalSystem,
    k: &KoopmanMatrix,
    g_bar: &ObservableVector,
    x0: &ArrayView1<f64>,
    steps: usize,
    t_step: f64,
    dt: f64,
) -> Result<RepresentReport> {
    let coeffs = propagate_observable(k, g_bar, steps)?;
    let m_out = g_bar.channels();
    let mut y_original = Array2::<f64>::zeros((steps + 1, m_out));
    let mut y_koopman = Array2::<f64>::zeros((steps + 1, m_out));
    let mut times = Vec::with_capacity(steps + 1);
    let mut state = x0.to_owned();
    for t in 0..=steps {
        times.push(t as f64 * t_step);
        if t > 0 {
            state = system.flow(&state.view(), t_step, dt)?;
        }
        y_original.row_mut(t).assign(&g_bar.apply(&state.view())?);
        y_koopman.row_mut(t).assign(&coeffs[t].apply(x0)?);
    }
    let max_discrepancy = (&y_original - &y_koopman)
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    Ok(RepresentReport {
        times,
        y_original,
        y_koopman,
        max_discrepancy,
    })
}

/// Departure from normality: `‖M Mᵀ − Mᵀ M‖_F / ‖M‖_F²`, zero iff normal.
pub fn nonnormality(k: &KoopmanMatrix) -> f64 {
    nonnormality_of(&k.matrix)
}

pub fn nonnormality_of(m: &Array2<f64>) -> f64 {
    let scale = fro_norm(&m.view());
    if scale == 0.0 {
        return 0.0;
    }
    let comm = m.dot(&m.t()) - m.t().dot(m);
    fro_norm(&comm.view()) / (scale * scale)
}

/// Convenience: builds an observable from a coefficient vector on `dict`.
pub fn observable_from_coeffs(dict: &Dictionary, coeffs: Array1<f64>) -> Result<ObservableVector> {
    ObservableVector::scalar(dict.clone(), coeffs)
}
