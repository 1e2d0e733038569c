//! Linear output systems `x⁺ = A x`, `y = C̄ x`: the matrix-valued output
//! recursion, its dual spectrum, observability and covariance Grammians,
//! output-energy identities, and energy-optimal output selection.

use crate::error::{CoreError, Result};
use crate::linalg::{
    eig_sorted, eigh_sorted, fro_norm, kron, principal_angles, solve_discrete_lyapunov,
    spectral_radius,
};
use ndarray::{Array1, Array2, ArrayView1, Axis};
use num_complex::Complex64;

/// Margin below 1 required of the spectral radius for infinite-horizon sums.
pub const STABILITY_MARGIN: f64 = 1e-12;

/// A discrete-time linear system with a linear output map.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    /// n×n state transition.
    pub a: Array2<f64>,
    /// m×n output matrix.
    pub c_bar: Array2<f64>,
    pub spectral_radius: f64,
    /// True when the spectral radius sits strictly inside the unit disc.
    pub stable: bool,
}

impl LinearSystem {
    pub fn new(a: Array2<f64>, c_bar: Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(CoreError::Shape(format!(
                "state matrix must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if c_bar.ncols() != n || c_bar.nrows() == 0 {
            return Err(CoreError::DimensionMismatch {
                context: "output matrix columns".into(),
                expected: n,
                got: c_bar.ncols(),
            });
        }
        let rho = spectral_radius(&a)?;
        Ok(LinearSystem {
            a,
            c_bar,
            spectral_radius: rho,
            stable: rho < 1.0 - STABILITY_MARGIN,
        })
    }

    pub fn state_dimension(&self) -> usize {
        self.a.nrows()
    }

    pub fn output_dimension(&self) -> usize {
        self.c_bar.nrows()
    }

    fn require_stable(&self, what: &str) -> Result<()> {
        if !self.stable {
            return Err(CoreError::Domain(format!(
                "{} needs a stable system (spectral radius {} >= 1)",
                what, self.spectral_radius
            )));
        }
        Ok(())
    }
}

/// The output-matrix recursion `C_{t+1} = C_t A` starting from `C_0 = C̄`.
///
/// Pulling the output map back through the dynamics this way gives
/// `y_t = C_t x̄` without ever propagating a state, which is the linear
/// specialization of propagating observables instead of points. Returns
/// `steps + 1` matrices `C_0, …, C_steps`.
pub fn output_recursion(sys: &LinearSystem, steps: usize) -> Vec<Array2<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(sys.c_bar.clone());
    for t in 0..steps {
        let next = out[t].dot(&sys.a);
        out.push(next);
    }
    out
}

/// Spectrum comparison between the recursion operator `C ↦ C A` on m×n
/// matrices and the state matrix `A`.
#[derive(Debug, Clone)]
pub struct DualSpectrumReport {
    /// Eigenvalues of A, canonical order.
    pub state_eigenvalues: Vec<Complex64>,
    /// Eigenvalues of the m·n-dimensional recursion operator.
    pub dual_eigenvalues: Vec<Complex64>,
    pub output_count: usize,
    /// Largest distance after matching each copy of eig(A) to a distinct
    /// dual eigenvalue.
    pub max_mismatch: f64,
}

/// Verifies that the recursion `C ↦ C A` has exactly the eigenvalues of A,
/// each with multiplicity m. Row-major vectorization turns the recursion
/// into multiplication by `I_m ⊗ Aᵀ`.
pub fn dual_spectrum_check(sys: &LinearSystem) -> Result<DualSpectrumReport> {
    let m = sys.output_dimension();
    let op = kron(&Array2::<f64>::eye(m).view(), &sys.a.t());
    let dual = eig_sorted(&op)?.values;
    let state = eig_sorted(&sys.a)?.values;

    // Each state eigenvalue must appear m times; match greedily against the
    // nearest unclaimed dual eigenvalue.
    let mut used = vec![false; dual.len()];
    let mut max_mismatch = 0.0_f64;
    for lam in &state {
        for _copy in 0..m {
            let mut best: Option<(usize, f64)> = None;
            for (i, mu) in dual.iter().enumerate() {
                if used[i] {
                    continue;
                }
                let dist = (lam - mu).norm();
                if best.map(|(_, b)| dist < b).unwrap_or(true) {
                    best = Some((i, dist));
                }
            }
            let (i, dist) = best.expect("dual spectrum has m*n entries");
            used[i] = true;
            max_mismatch = max_mismatch.max(dist);
        }
    }
    Ok(DualSpectrumReport {
        state_eigenvalues: state,
        dual_eigenvalues: dual,
        output_count: m,
        max_mismatch,
    })
}

/// Where the state mass sits: a single initial condition or a covariance.
#[derive(Debug, Clone)]
pub enum GrammianSource {
    Point(Array1<f64>),
    Covariance(Array2<f64>),
}

impl GrammianSource {
    /// The PSD matrix P feeding the covariance Grammian: x̄x̄ᵀ or R itself.
    pub fn matrix(&self, n: usize) -> Result<Array2<f64>> {
        match self {
            GrammianSource::Point(x) => {
                if x.len() != n {
                    return Err(CoreError::DimensionMismatch {
                        context: "Grammian source point".into(),
                        expected: n,
                        got: x.len(),
                    });
                }
                let col = x.view().insert_axis(Axis(1));
                Ok(col.dot(&col.t()))
            }
            GrammianSource::Covariance(r) => {
                if r.nrows() != n || r.ncols() != n {
                    return Err(CoreError::DimensionMismatch {
                        context: "Grammian source covariance".into(),
                        expected: n,
                        got: r.nrows(),
                    });
                }
                let scale = fro_norm(&r.view()).max(1.0);
                if fro_norm(&(r - &r.t()).view()) > 1e-10 * scale {
                    return Err(CoreError::Domain(
                        "covariance matrix must be symmetric".into(),
                    ));
                }
                let (vals, _) = eigh_sorted(r)?;
                let top = vals.first().copied().unwrap_or(0.0).max(1.0);
                if vals.iter().any(|&v| v < -1e-10 * top) {
                    return Err(CoreError::Domain(
                        "covariance matrix must be positive semidefinite".into(),
                    ));
                }
                Ok(r.clone())
            }
        }
    }
}

/// Infinite-horizon observability Grammian `W = Σ_t (Aᵀ)^t C̄ᵀ C̄ A^t`,
/// the solution of `Aᵀ W A − W + C̄ᵀ C̄ = 0`.
pub fn observability_grammian(sys: &LinearSystem) -> Result<Array2<f64>> {
    sys.require_stable("observability Grammian")?;
    let q = sys.c_bar.t().dot(&sys.c_bar);
    solve_discrete_lyapunov(&sys.a, &q, true)
}

/// Infinite-horizon covariance Grammian `W_K = Σ_t A^t P (Aᵀ)^t`, the
/// solution of `A W Aᵀ − W + P = 0`, with P from the source.
pub fn koopman_grammian(a: &Array2<f64>, source: &GrammianSource) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(CoreError::Shape(format!(
            "state matrix must be square, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let rho = spectral_radius(a)?;
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(CoreError::Domain(format!(
            "covariance Grammian needs a stable system (spectral radius {rho} >= 1)"
        )));
    }
    let p = source.matrix(n)?;
    solve_discrete_lyapunov(a, &p, false)
}

/// Total output energy computed three independent ways.
#[derive(Debug, Clone)]
pub struct EnergyIdentity {
    /// Σ_t ‖C̄ A^t x̄‖² summed term by term.
    pub direct: f64,
    /// x̄ᵀ W x̄ with the observability Grammian.
    pub quadratic_form: f64,
    /// tr(C̄ W_K C̄ᵀ) with the covariance Grammian of x̄x̄ᵀ.
    pub trace_form: f64,
    /// Largest pairwise relative disagreement among the three.
    pub max_relative_spread: f64,
    /// None = infinite horizon; Some(T) sums t = 0, …, T−1 everywhere.
    pub horizon: Option<usize>,
}

fn relative_spread(values: &[f64]) -> f64 {
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    (hi - lo) / hi.abs().max(lo.abs()).max(1e-300)
}

/// Evaluates the output-energy identity
/// `Σ ‖C̄ A^t x̄‖² = x̄ᵀ W x̄ = tr(C̄ W_K(x̄x̄ᵀ) C̄ᵀ)`.
///
/// With `horizon = None` the sums run to convergence (stability required);
/// with `Some(T)` all three quantities are finite sums over t < T, so they
/// agree for unstable systems as well.
pub fn energy_identity(
    sys: &LinearSystem,
    x_bar: &ArrayView1<f64>,
    horizon: Option<usize>,
) -> Result<EnergyIdentity> {
    let n = sys.state_dimension();
    if x_bar.len() != n {
        return Err(CoreError::DimensionMismatch {
            context: "energy identity initial condition".into(),
            expected: n,
            got: x_bar.len(),
        });
    }
    let q = sys.c_bar.t().dot(&sys.c_bar);
    let p_source = GrammianSource::Point(x_bar.to_owned());

    let (direct, w_obs, w_cov) = match horizon {
        None => {
            sys.require_stable("infinite-horizon output energy")?;
            let mut x = x_bar.to_owned();
            let mut accum = 0.0_f64;
            for _t in 0..200_000 {
                let y = sys.c_bar.dot(&x);
                let term = y.iter().map(|v| v * v).sum::<f64>();
                accum += term;
                if term <= 1e-14 * accum.max(f64::MIN_POSITIVE) {
                    break;
                }
                x = sys.a.dot(&x);
            }
            (
                accum,
                observability_grammian(sys)?,
                koopman_grammian(&sys.a, &p_source)?,
            )
        }
        Some(t_max) => {
            let p = p_source.matrix(n)?;
            let mut x = x_bar.to_owned();
            let mut accum = 0.0_f64;
            let mut w_obs = Array2::<f64>::zeros((n, n));
            let mut w_cov = Array2::<f64>::zeros((n, n));
            let mut obs_term = q.clone();
            let mut cov_term = p;
            for _t in 0..t_max {
                let y = sys.c_bar.dot(&x);
                accum += y.iter().map(|v| v * v).sum::<f64>();
                x = sys.a.dot(&x);
                w_obs += &obs_term;
                w_cov += &cov_term;
                obs_term = sys.a.t().dot(&obs_term).dot(&sys.a);
                cov_term = sys.a.dot(&cov_term).dot(&sys.a.t());
            }
            (accum, w_obs, w_cov)
        }
    };

    let quadratic_form = x_bar.dot(&w_obs.dot(x_bar));
    let trace_form = sys.c_bar.dot(&w_cov).dot(&sys.c_bar.t()).diag().sum();
    Ok(EnergyIdentity {
        direct,
        quadratic_form,
        trace_form,
        max_relative_spread: relative_spread(&[direct, quadratic_form, trace_form]),
        horizon,
    })
}

/// Energy-optimal orthonormal output rows for a stable system.
#[derive(Debug, Clone)]
pub struct OptimalOutputs {
    /// q×n matrix whose rows are the top eigenvectors of W_K.
    pub rows: Array2<f64>,
    /// Expected energy captured by each row (eigenvalues of W_K, descending).
    pub captured_energy: Vec<f64>,
    /// tr W_K: total energy over any orthonormal basis of outputs.
    pub total_energy: f64,
}

/// Picks the q orthonormal output functionals maximizing expected output
/// energy `E Σ_t ‖C x_t‖²` under state covariance R: the top-q eigenvectors
/// of the covariance Grammian `W_K(R)`.
pub fn optimal_outputs(
    a: &Array2<f64>,
    source: &GrammianSource,
    q: usize,
) -> Result<OptimalOutputs> {
    let n = a.nrows();
    if q == 0 || q > n {
        return Err(CoreError::Domain(format!(
            "output count must satisfy 1 <= q <= {n}, got {q}"
        )));
    }
    let w = koopman_grammian(a, source)?;
    let (vals, vecs) = eigh_sorted(&w)?;
    let rows = vecs.slice(ndarray::s![.., ..q]).t().to_owned();
    Ok(OptimalOutputs {
        rows,
        captured_energy: vals[..q].to_vec(),
        total_energy: vals.iter().sum(),
    })
}

/// Angle (radians) between the most-observable direction — the top
/// eigenvector of the identity-output observability Grammian — and the
/// dominant eigenspace of A.
///
/// Zero for normal A; strictly positive when nonnormal transient growth
/// makes a non-eigendirection carry the most output energy. A complex
/// dominant pair contributes its two-dimensional real invariant plane.
pub fn energy_alignment_angle(a: &Array2<f64>) -> Result<f64> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(CoreError::Shape(format!(
            "state matrix must be square and nonempty, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 1 {
        return Ok(0.0);
    }
    let sys = LinearSystem::new(a.clone(), Array2::eye(n))?;
    let w = observability_grammian(&sys)?;
    let (_, vecs) = eigh_sorted(&w)?;
    let top = vecs.slice(ndarray::s![.., ..1]).to_owned();

    let pairs = eig_sorted(a)?;
    let lam = pairs.values[0];
    let v = pairs.vectors.column(0);
    let dominant = if lam.im.abs() <= 1e-12 * lam.norm().max(1e-300) {
        let mut re: Array1<f64> = v.iter().map(|z| z.re).collect();
        let norm = re.dot(&re).sqrt();
        if norm > 0.0 {
            re /= norm;
        }
        re.insert_axis(Axis(1))
    } else {
        // Orthonormalize the real invariant plane spanned by Re v, Im v.
        let re: Array1<f64> = v.iter().map(|z| z.re).collect();
        let im: Array1<f64> = v.iter().map(|z| z.im).collect();
        let mut u1 = re.clone();
        let n1 = u1.dot(&u1).sqrt();
        if n1 > 0.0 {
            u1 /= n1;
        }
        let mut u2 = &im - &(u1.clone() * im.dot(&u1));
        let n2 = u2.dot(&u2).sqrt();
        if n2 > 0.0 {
            u2 /= n2;
        }
        ndarray::stack(Axis(1), &[u1.view(), u2.view()])
            .map_err(|e| CoreError::Shape(e.to_string()))?
    };
    let angles = principal_angles(&top.view(), &dominant.view())?;
    Ok(angles.first().copied().unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_stable(n: usize, m: usize, seed: u64, rho_target: f64) -> LinearSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
        let rho = spectral_radius(&a).unwrap();
        if rho > 1e-12 {
            a *= rho_target / rho;
        }
        let c = Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0));
        LinearSystem::new(a, c).unwrap()
    }

    #[test]
    fn constructor_validates_shapes_and_stability() {
        assert!(LinearSystem::new(Array2::zeros((2, 3)), Array2::zeros((1, 2))).is_err());
        assert!(LinearSystem::new(Array2::eye(2), Array2::zeros((1, 3))).is_err());
        let s = LinearSystem::new(array![[0.5, 0.0], [0.0, -0.9]], Array2::eye(2)).unwrap();
        assert_abs_diff_eq!(s.spectral_radius, 0.9, epsilon = 1e-12);
        assert!(s.stable);
        let u = LinearSystem::new(Array2::eye(2), Array2::eye(2)).unwrap();
        assert!(!u.stable);
    }

    #[test]
    fn recursion_diagonal_powers() {
        // [DERIVED] C_t = [0.5^t, 2^t]: exact in floating point.
        let sys = LinearSystem::new(
            Array2::from_diag(&array![0.5, 2.0]),
            array![[1.0, 1.0]],
        )
        .unwrap();
        let cs = output_recursion(&sys, 10);
        assert_eq!(cs.len(), 11);
        for (t, c) in cs.iter().enumerate() {
            assert_abs_diff_eq!(c[[0, 0]], 0.5_f64.powi(t as i32), epsilon = 0.0);
            assert_abs_diff_eq!(c[[0, 1]], 2.0_f64.powi(t as i32), epsilon = 0.0);
        }
    }

    #[test]
    fn recursion_agrees_with_state_propagation() {
        // C_t x̄ must equal C̄ x_t: the pullback and pushforward routes match.
        let sys = random_stable(3, 2, 7, 0.95);
        let x0 = array![0.3, -1.1, 0.5];
        let cs = output_recursion(&sys, 12);
        let mut x = x0.clone();
        for c in cs.iter() {
            let via_pullback = c.dot(&x0);
            let via_state = sys.c_bar.dot(&x);
            for (a, b) in via_pullback.iter().zip(via_state.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
            x = sys.a.dot(&x);
        }
    }

    #[test]
    fn dual_spectrum_rotation_block() {
        // [DERIVED] A = 0.9 R(π/3): eigenvalues 0.9 e^{±iπ/3}, each twice
        // for m = 2 outputs.
        let th = std::f64::consts::PI / 3.0;
        let a = array![
            [0.9 * th.cos(), -0.9 * th.sin()],
            [0.9 * th.sin(), 0.9 * th.cos()]
        ];
        let sys = LinearSystem::new(a, Array2::eye(2)).unwrap();
        let rep = dual_spectrum_check(&sys).unwrap();
        assert_eq!(rep.dual_eigenvalues.len(), 4);
        assert!(rep.max_mismatch <= 1e-9, "mismatch {}", rep.max_mismatch);
        let plus = rep
            .dual_eigenvalues
            .iter()
            .filter(|z| (*z - Complex64::from_polar(0.9, th)).norm() <= 1e-9)
            .count();
        assert_eq!(plus, 2);
    }

    #[test]
    fn dual_spectrum_random_instances() {
        for seed in 0..5 {
            let sys = random_stable(4, 3, 50 + seed, 0.9);
            let rep = dual_spectrum_check(&sys).unwrap();
            assert_eq!(rep.dual_eigenvalues.len(), 12);
            assert!(
                rep.max_mismatch <= 1e-9,
                "seed {seed}: mismatch {}",
                rep.max_mismatch
            );
        }
    }

    #[test]
    fn observability_grammian_scalar_geometric() {
        // [DERIVED] W = c²/(1−a²) = 4/0.75 = 16/3.
        let sys = LinearSystem::new(array![[0.5]], array![[2.0]]).unwrap();
        let w = observability_grammian(&sys).unwrap();
        assert_abs_diff_eq!(w[[0, 0]], 16.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn grammians_require_stability() {
        let sys = LinearSystem::new(array![[1.0]], array![[1.0]]).unwrap();
        assert!(observability_grammian(&sys).is_err());
        assert!(koopman_grammian(
            &array![[1.2]],
            &GrammianSource::Point(array![1.0])
        )
        .is_err());
        assert!(energy_identity(&sys, &array![1.0].view(), None).is_err());
        // Finite horizons are fine for unstable systems.
        let e = energy_identity(&sys, &array![1.0].view(), Some(4)).unwrap();
        assert_abs_diff_eq!(e.direct, 4.0, epsilon = 1e-12);
        assert!(e.max_relative_spread <= 1e-12);
    }

    #[test]
    fn koopman_grammian_matches_series() {
        // [DERIVED] truncated series oracle at ρ = 0.9, 400 terms.
        let a = array![[0.6, 0.3], [0.0, 0.9]];
        let x = array![1.0, -2.0];
        let w = koopman_grammian(&a, &GrammianSource::Point(x.clone())).unwrap();
        let mut series = Array2::<f64>::zeros((2, 2));
        let mut term = {
            let col = x.view().insert_axis(Axis(1));
            col.dot(&col.t())
        };
        for _ in 0..400 {
            series += &term;
            term = a.dot(&term).dot(&a.t());
        }
        assert!(fro_norm(&(&w - &series).view()) <= 1e-9 * fro_norm(&w.view()));
    }

    #[test]
    fn covariance_source_validation() {
        assert!(GrammianSource::Covariance(array![[1.0, 2.0], [0.0, 1.0]])
            .matrix(2)
            .is_err());
        assert!(GrammianSource::Covariance(array![[1.0, 0.0], [0.0, -0.1]])
            .matrix(2)
            .is_err());
        assert!(GrammianSource::Covariance(Array2::eye(2)).matrix(2).is_ok());
        assert!(GrammianSource::Point(array![1.0]).matrix(2).is_err());
    }

    #[test]
    fn energy_identity_scalar_four_thirds() {
        // [PAPER] unit scalar example: Σ 0.25^t = 4/3.
        let sys = LinearSystem::new(array![[0.5]], array![[1.0]]).unwrap();
        let e = energy_identity(&sys, &array![1.0].view(), None).unwrap();
        assert_abs_diff_eq!(e.direct, 4.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.quadratic_form, 4.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.trace_form, 4.0 / 3.0, epsilon = 1e-12);
        assert!(e.max_relative_spread <= 1e-12);
    }

    #[test]
    fn energy_identity_random_stable() {
        for seed in 0..8 {
            let n = 2 + (seed as usize % 4);
            let sys = random_stable(n, 2, 300 + seed, 0.8);
            let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
            let x = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
            let e = energy_identity(&sys, &x.view(), None).unwrap();
            assert!(
                e.max_relative_spread <= 1e-9,
                "seed {seed}: spread {}",
                e.max_relative_spread
            );
        }
    }

    #[test]
    fn energy_identity_finite_horizon_is_exact() {
        // All three quantities are the same finite sum, even when unstable.
        let sys = LinearSystem::new(array![[1.1, 0.5], [0.0, 0.9]], array![[1.0, -1.0]]).unwrap();
        let e = energy_identity(&sys, &array![0.7, 0.2].view(), Some(7)).unwrap();
        assert!(e.max_relative_spread <= 1e-12, "spread {}", e.max_relative_spread);
        // Horizon 0 sums nothing.
        let z = energy_identity(&sys, &array![0.7, 0.2].view(), Some(0)).unwrap();
        assert_abs_diff_eq!(z.direct, 0.0, epsilon = 0.0);
    }

    #[test]
    fn energy_zero_initial_condition_terminates() {
        let sys = LinearSystem::new(array![[0.5]], array![[1.0]]).unwrap();
        let e = energy_identity(&sys, &array![0.0].view(), None).unwrap();
        assert_abs_diff_eq!(e.direct, 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(e.quadratic_form, 0.0, epsilon = 0.0);
    }

    #[test]
    fn optimal_outputs_diagonal() {
        // [DERIVED] W_K(I) = diag(1/(1−0.81), 1/(1−0.01)): top row e₁.
        let a = Array2::from_diag(&array![0.9, 0.1]);
        let r = GrammianSource::Covariance(Array2::eye(2));
        let opt = optimal_outputs(&a, &r, 1).unwrap();
        assert_abs_diff_eq!(opt.rows[[0, 0]], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(opt.rows[[0, 1]], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(opt.captured_energy[0], 1.0 / 0.19, epsilon = 1e-9);
        let both = optimal_outputs(&a, &r, 2).unwrap();
        assert_abs_diff_eq!(both.captured_energy[1], 1.0 / 0.99, epsilon = 1e-9);
        assert_abs_diff_eq!(
            both.total_energy,
            1.0 / 0.19 + 1.0 / 0.99,
            epsilon = 1e-9
        );
        // Rows orthonormal.
        let g = both.rows.dot(&both.rows.t());
        assert!(fro_norm(&(&g - &Array2::<f64>::eye(2)).view()) <= 1e-10);
    }

    #[test]
    fn optimal_outputs_beats_random_rows() {
        // No random unit row extracts more energy than the top eigenvector.
        let a = array![[0.5, 10.0], [0.0, 0.4]];
        let r = GrammianSource::Covariance(Array2::eye(2));
        let w = koopman_grammian(&a, &r).unwrap();
        let opt = optimal_outputs(&a, &r, 1).unwrap();
        let best = opt.captured_energy[0];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let mut c: Array1<f64> = Array1::from_shape_fn(2, |_| rng.random_range(-1.0..1.0));
            let norm = c.dot(&c).sqrt();
            if norm < 1e-6 {
                continue;
            }
            c /= norm;
            let energy = c.dot(&w.dot(&c));
            assert!(energy <= best + 1e-10, "row {c} beat optimum: {energy} > {best}");
        }
    }

    #[test]
    fn optimal_outputs_bounds_q() {
        let a = Array2::from_diag(&array![0.5, 0.4]);
        let r = GrammianSource::Covariance(Array2::eye(2));
        assert!(optimal_outputs(&a, &r, 0).is_err());
        assert!(optimal_outputs(&a, &r, 3).is_err());
    }

    #[test]
    fn alignment_angle_normal_matrix_is_zero() {
        assert_abs_diff_eq!(
            energy_alignment_angle(&Array2::from_diag(&array![0.9, 0.1])).unwrap(),
            0.0,
            epsilon = 1e-8
        );
        // Scaled rotation is normal: dominant pair spans the whole plane.
        let th = 0.7_f64;
        let rot = array![
            [0.8 * th.cos(), -0.8 * th.sin()],
            [0.8 * th.sin(), 0.8 * th.cos()]
        ];
        assert_abs_diff_eq!(energy_alignment_angle(&rot).unwrap(), 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(energy_alignment_angle(&array![[0.3]]).unwrap(), 0.0, epsilon = 0.0);
    }

    #[test]
    fn alignment_angle_detects_nonnormal_growth() {
        // [DERIVED] strong shear: energy concentrates near e₂ while the
        // dominant eigenvector is e₁.
        let a = array![[0.5, 10.0], [0.0, 0.4]];
        let angle = energy_alignment_angle(&a).unwrap();
        assert!(angle > 0.1, "angle {angle}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn dual_spectrum_always_matches(n in 1usize..5, m in 1usize..4, seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
            let c = Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0));
            let sys = LinearSystem::new(a, c).unwrap();
            let rep = dual_spectrum_check(&sys).unwrap();
            prop_assert!(rep.max_mismatch <= 1e-9, "mismatch {}", rep.max_mismatch);
        }
    }
}
