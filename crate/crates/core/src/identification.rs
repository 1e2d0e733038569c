//! Data-driven identification structure: sampling operators, observability
//! matrices and unobservable subspaces, the Kalman observable
//! decomposition, multi-experiment stacking, and identifiability reports.

use crate::error::{CoreError, Result};
use crate::koopman::KoopmanMatrix;
use crate::linalg::{eig_sorted, fro_norm, row_space_split};
use crate::observables::Dictionary;
use ndarray::{concatenate, Array2, ArrayView2, Axis};
use num_complex::Complex64;

/// Default relative SVD tolerance for null-space determination.
pub const DEFAULT_OBS_TOL: f64 = 1e-10;

/// Rows of dictionary evaluations at chosen initial conditions: row i is
/// ψ(x̄ᵢ)ᵀ, so `S c = (G(x̄₁), …, G(x̄_N))` for `G = ψᵀc`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingOperator {
    pub dictionary: Dictionary,
    /// N×n initial conditions.
    pub points: Array2<f64>,
    /// N×D evaluation matrix.
    pub matrix: Array2<f64>,
}

pub fn sampling_operator(dict: &Dictionary, points: &ArrayView2<f64>) -> Result<SamplingOperator> {
    if points.nrows() == 0 {
        return Err(CoreError::Domain(
            "sampling operator needs at least one point".into(),
        ));
    }
    if points.ncols() != dict.dimension_in() {
        return Err(CoreError::DimensionMismatch {
            context: "sampling operator points".into(),
            expected: dict.dimension_in(),
            got: points.ncols(),
        });
    }
    let matrix = dict.evaluate_batch(points)?;
    Ok(SamplingOperator {
        dictionary: dict.clone(),
        points: points.to_owned(),
        matrix,
    })
}

/// Stacks several sampling operators over the same dictionary into one
/// (rows concatenated in order).
pub fn stack_sampling_operators(ops: &[&SamplingOperator]) -> Result<SamplingOperator> {
    let first = ops
        .first()
        .ok_or_else(|| CoreError::Domain("cannot stack zero sampling operators".into()))?;
    for op in ops {
        if op.dictionary != first.dictionary {
            return Err(CoreError::Shape(
                "stacked sampling operators must share one dictionary".into(),
            ));
        }
    }
    let points: Vec<_> = ops.iter().map(|o| o.points.view()).collect();
    let matrices: Vec<_> = ops.iter().map(|o| o.matrix.view()).collect();
    Ok(SamplingOperator {
        dictionary: first.dictionary.clone(),
        points: concatenate(Axis(0), &points).map_err(|e| CoreError::Shape(e.to_string()))?,
        matrix: concatenate(Axis(0), &matrices).map_err(|e| CoreError::Shape(e.to_string()))?,
    })
}

/// Null-space analysis of the stacked observability matrix.
#[derive(Debug, Clone)]
pub struct ObservabilityReport {
    /// (D·N)×D stack of S, SM, …, SM^{D−1}.
    pub observability_matrix: Array2<f64>,
    pub unobservable_dimension: usize,
    /// D×k orthonormal basis of the unobservable subspace.
    pub unobservable_basis: Array2<f64>,
    /// D×(D−k) orthonormal complement.
    pub observable_basis: Array2<f64>,
    pub singular_values: Vec<f64>,
    pub tol: f64,
}

fn check_dictionaries(k: &KoopmanMatrix, s: &SamplingOperator) -> Result<()> {
    if k.dictionary != s.dictionary {
        return Err(CoreError::Shape(
            "Koopman matrix and sampling operator use different dictionaries".into(),
        ));
    }
    Ok(())
}

/// Builds the observability matrix stacking q = D powers (Cayley–Hamilton
/// makes further powers dependent for the D×D truncation) and splits the
/// coefficient space into observable/unobservable parts by SVD with
/// relative tolerance `tol`.
pub fn unobservable_subspace(
    k: &KoopmanMatrix,
    s: &SamplingOperator,
    tol: f64,
) -> Result<ObservabilityReport> {
    check_dictionaries(k, s)?;
    let d = k.size();
    let n = s.matrix.nrows();
    let mut obs = Array2::<f64>::zeros((d * n, d));
    let mut block = s.matrix.clone();
    for q in 0..d {
        obs.slice_mut(ndarray::s![q * n..(q + 1) * n, ..])
            .assign(&block);
        if q + 1 < d {
            block = block.dot(&k.matrix);
        }
    }
    let split = row_space_split(&obs, tol)?;
    Ok(ObservabilityReport {
        observability_matrix: obs,
        unobservable_dimension: d - split.rank,
        unobservable_basis: split.null_basis,
        observable_basis: split.range_basis,
        singular_values: split.singular_values,
        tol,
    })
}

/// Block change of basis separating observable and unobservable dynamics.
#[derive(Debug, Clone)]
pub struct KalmanDecomposition {
    /// D×D orthogonal [observable_basis | unobservable_basis].
    pub transform: Array2<f64>,
    /// r×r observable block of TᵀMT.
    pub k_o: Array2<f64>,
    /// (D−r)×(D−r) unobservable block.
    pub k_no: Array2<f64>,
    /// Lower-left coupling block (observable into unobservable).
    pub k_no_o: Array2<f64>,
    /// Norm of the upper-right block, which vanishes when the unobservable
    /// subspace is exactly M-invariant.
    pub upper_right_residual: f64,
    /// Sampling operator restricted to the observable coordinates.
    pub c_o: Array2<f64>,
    /// Norm of the sampling operator on the unobservable coordinates.
    pub c_no_residual: f64,
    /// Whether (C_o, K_o) passes its own observability test at `tol`.
    pub pair_observable: bool,
    pub report: ObservabilityReport,
}

pub fn kalman_decompose(
    k: &KoopmanMatrix,
    s: &SamplingOperator,
    tol: f64,
) -> Result<KalmanDecomposition> {
    let report = unobservable_subspace(k, s, tol)?;
    let d = k.size();
    let r = d - report.unobservable_dimension;
    let transform = concatenate(
        Axis(1),
        &[report.observable_basis.view(), report.unobservable_basis.view()],
    )
    .map_err(|e| CoreError::Shape(e.to_string()))?;
    let m_t = transform.t().dot(&k.matrix).dot(&transform);
    let k_o = m_t.slice(ndarray::s![..r, ..r]).to_owned();
    let k_no = m_t.slice(ndarray::s![r.., r..]).to_owned();
    let k_no_o = m_t.slice(ndarray::s![r.., ..r]).to_owned();
    let upper_right = m_t.slice(ndarray::s![..r, r..]).to_owned();
    let c_t = s.matrix.dot(&transform);
    let c_o = c_t.slice(ndarray::s![.., ..r]).to_owned();
    let c_no = c_t.slice(ndarray::s![.., r..]).to_owned();

    // Self-check: the reduced pair must itself be observable.
    let pair_observable = if r == 0 {
        true
    } else {
        let n = c_o.nrows();
        let mut obs = Array2::<f64>::zeros((r * n, r));
        let mut block = c_o.clone();
        for q in 0..r {
            obs.slice_mut(ndarray::s![q * n..(q + 1) * n, ..]).assign(&block);
            if q + 1 < r {
                block = block.dot(&k_o);
            }
        }
        row_space_split(&obs, tol)?.rank == r
    };

    Ok(KalmanDecomposition {
        transform,
        k_o,
        k_no,
        k_no_o,
        upper_right_residual: fro_norm(&upper_right.view()),
        c_o,
        c_no_residual: fro_norm(&c_no.view()),
        pair_observable,
        report,
    })
}

/// Stacks the sampling operators of several experiments sharing one Koopman
/// matrix and recomputes the observability report.
pub fn stack_experiments(
    k: &KoopmanMatrix,
    operators: &[&SamplingOperator],
    tol: f64,
) -> Result<(SamplingOperator, ObservabilityReport)> {
    for op in operators {
        check_dictionaries(k, op)?;
    }
    let stacked = stack_sampling_operators(operators)?;
    let report = unobservable_subspace(k, &stacked, tol)?;
    Ok((stacked, report))
}

/// What can and cannot be recovered from output data for a given (K, S).
#[derive(Debug, Clone)]
pub struct IdentifiabilityReport {
    pub observable_dimension: usize,
    pub unobservable_dimension: usize,
    /// Eigenvalues of the observable block K_o (the identifiable spectrum).
    pub identifiable_eigenvalues: Vec<Complex64>,
    /// Eigenvalues of the unobservable block K_no.
    pub non_identifiable_eigenvalues: Vec<Complex64>,
    /// Percent of the full spectrum matched by eigenvalues of K_o
    /// (greedy nearest matching within 1e-6).
    pub percent_recoverable: f64,
    /// Largest matching distance among the matched pairs.
    pub max_match_error: f64,
}

pub fn identifiability_report(
    k: &KoopmanMatrix,
    s: &SamplingOperator,
    tol: f64,
) -> Result<IdentifiabilityReport> {
    let dec = kalman_decompose(k, s, tol)?;
    let d = k.size();
    let identifiable = if dec.k_o.nrows() > 0 {
        eig_sorted(&dec.k_o)?.values
    } else {
        Vec::new()
    };
    let non_identifiable = if dec.k_no.nrows() > 0 {
        eig_sorted(&dec.k_no)?.values
    } else {
        Vec::new()
    };
    let full = eig_sorted(&k.matrix)?.values;

    // Greedy matching: eigenvalues of K_o claim their nearest unmatched
    // eigenvalue of M. Candidates are pre-sorted (descending magnitude,
    // then real part, then imaginary part), which fixes tie-breaking.
    let mut used = vec![false; full.len()];
    let mut matched = 0usize;
    let mut max_err = 0.0_f64;
    for lam in &identifiable {
        let mut best: Option<(usize, f64)> = None;
        for (i, mu) in full.iter().enumerate() {
            if used[i] {
                continue;
            }
            let dist = (lam - mu).norm();
            if best.map(|(_, b)| dist < b).unwrap_or(true) {
                best = Some((i, dist));
            }
        }
        if let Some((i, dist)) = best {
            if dist <= 1e-6 {
                used[i] = true;
                matched += 1;
                max_err = max_err.max(dist);
            }
        }
    }
    Ok(IdentifiabilityReport {
        observable_dimension: d - dec.report.unobservable_dimension,
        unobservable_dimension: dec.report.unobservable_dimension,
        identifiable_eigenvalues: identifiable,
        non_identifiable_eigenvalues: non_identifiable,
        percent_recoverable: 100.0 * matched as f64 / d.max(1) as f64,
        max_match_error: max_err,
    })
}

/// Orthonormal basis of the intersection of two subspaces given by
/// orthonormal bases, via the eigenspace of the summed projectors at
/// eigenvalue 2. Used as an independent oracle for stacking.
pub fn subspace_intersection(
    u1: &ArrayView2<f64>,
    u2: &ArrayView2<f64>,
    tol: f64,
) -> Result<Array2<f64>> {
    let d = u1.nrows();
    if u2.nrows() != d {
        return Err(CoreError::Shape(
            "subspace bases must live in the same ambient dimension".into(),
        ));
    }
    if u1.ncols() == 0 || u2.ncols() == 0 {
        return Ok(Array2::zeros((d, 0)));
    }
    let p = u1.dot(&u1.t()) + u2.dot(&u2.t());
    let (vals, vecs) = crate::linalg::eigh_sorted(&p)?;
    let count = vals.iter().filter(|&&v| v >= 2.0 - tol).count();
    Ok(vecs.slice(ndarray::s![.., ..count]).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::koopman::{KoopmanMatrix, Provenance};
    use crate::linalg::principal_angles;
    use crate::observables::Dictionary;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1};
    use ndarray_linalg::QR;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag_example() -> (KoopmanMatrix, Dictionary) {
        let dict = Dictionary::linear(2, false).unwrap();
        let k = KoopmanMatrix::new(
            dict.clone(),
            array![[0.9, 0.0], [0.0, 0.8]],
            Provenance::ClosedFormLinear,
            0.0,
        )
        .unwrap();
        (k, dict)
    }

    #[test]
    fn sampling_operator_rows_are_dictionary_rows() {
        let dict = Dictionary::monomials(1, 2).unwrap();
        let s = sampling_operator(&dict, &array![[1.0], [-1.0]].view()).unwrap();
        assert_eq!(s.matrix.row(0).to_vec(), vec![1.0, 1.0, 1.0]);
        assert_eq!(s.matrix.row(1).to_vec(), vec![1.0, -1.0, 1.0]);

        let dict = Dictionary::linear(2, true).unwrap();
        let s = sampling_operator(&dict, &array![[0.0, 0.0]].view()).unwrap();
        assert_eq!(s.matrix.row(0).to_vec(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn diagonal_example_single_point() {
        // [DERIVED] S M^k c = c₁ 0.9^k: e₂ direction is unobservable.
        let (k, dict) = diag_example();
        let s = sampling_operator(&dict, &array![[1.0, 0.0]].view()).unwrap();
        let rep = unobservable_subspace(&k, &s, DEFAULT_OBS_TOL).unwrap();
        assert_eq!(rep.unobservable_dimension, 1);
        let v = rep.unobservable_basis.column(0);
        assert_abs_diff_eq!(v[0].abs(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1].abs(), 1.0, epsilon = 1e-12);
        // Observability matrix annihilates the basis.
        let prod = rep.observability_matrix.dot(&rep.unobservable_basis);
        let smax = rep.singular_values.iter().cloned().fold(0.0_f64, f64::max);
        assert!(fro_norm(&prod.view()) <= rep.tol * smax * 10.0);
    }

    #[test]
    fn diagonal_example_two_points_fully_observable() {
        // [DERIVED] stacked rows at e₁ and e₂ make the rank-2 oracle.
        let (k, dict) = diag_example();
        let s = sampling_operator(&dict, &array![[1.0, 0.0], [0.0, 1.0]].view()).unwrap();
        let rep = unobservable_subspace(&k, &s, DEFAULT_OBS_TOL).unwrap();
        assert_eq!(rep.unobservable_dimension, 0);
        assert_eq!(rep.observable_basis.ncols(), 2);
    }

    #[test]
    fn generic_full_sample_is_fully_observable() {
        // D generic points: the evaluation matrix itself has full rank.
        let dict = Dictionary::monomials(1, 2).unwrap();
        let k = KoopmanMatrix::new(
            dict.clone(),
            array![[1.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.25]],
            Provenance::ExactPullback,
            0.0,
        )
        .unwrap();
        let s = sampling_operator(&dict, &array![[0.3], [-0.7], [1.1]].view()).unwrap();
        let rep = unobservable_subspace(&k, &s, DEFAULT_OBS_TOL).unwrap();
        assert_eq!(rep.unobservable_dimension, 0);
    }

    #[test]
    fn bases_are_orthonormal_and_orthogonal() {
        let (k, dict) = diag_example();
        let s = sampling_operator(&dict, &array![[1.0, 0.0]].view()).unwrap();
        let rep = unobservable_subspace(&k, &s, DEFAULT_OBS_TOL).unwrap();
        let t = concatenate(
            Axis(1),
            &[rep.observable_basis.view(), rep.unobservable_basis.view()],
        )
        .unwrap();
        let gram = t.t().dot(&t);
        assert!(fro_norm(&(&gram - &Array2::<f64>::eye(2)).view()) <= 1e-12);
    }

    #[test]
    fn kalman_diagonal_blocks() {
        // [DERIVED] diagonal matrices decouple exactly.
        let (k, dict) = diag_example();
        let s = sampling_operator(&dict, &array![[1.0, 0.0]].view()).unwrap();
        let dec = kalman_decompose(&k, &s, DEFAULT_OBS_TOL).unwrap();
        assert_eq!(dec.k_o.dim(), (1, 1));
        assert_abs_diff_eq!(dec.k_o[[0, 0]], 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(dec.k_no[[0, 0]], 0.8, epsilon = 1e-12);
        assert!(dec.upper_right_residual <= 1e-12);
        assert!(dec.c_no_residual <= 1e-12);
        assert!(dec.pair_observable);
    }

    #[test]
    fn kalman_fully_observable_is_similarity() {
        let dict = Dictionary::linear(2, false).unwrap();
        let m = array![[0.7, 0.3], [-0.1, 0.5]];
        let k = KoopmanMatrix::new(dict.clone(), m.clone(), Provenance::ClosedFormLinear, 0.0)
            .unwrap();
        let s = sampling_operator(&dict, &array![[0.4, 1.0]].view()).unwrap();
        let dec = kalman_decompose(&k, &s, DEFAULT_OBS_TOL).unwrap();
        assert_eq!(dec.report.unobservable_dimension, 0);
        // Same spectrum as M.
        let so = eig_sorted(&dec.k_o).unwrap().values;
        let sm = eig_sorted(&m).unwrap().values;
        for (a, b) in so.iter().zip(sm.iter()) {
            assert!((a - b).norm() <= 1e-9);
        }
    }

    fn random_orthogonal(d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = Array2::from_shape_fn((d, d), |_| rng.random_range(-1.0..1.0));
        let (q, _r) = raw.qr().unwrap();
        q
    }

    #[test]
    fn construct_then_recover_two_dimensional_unobservable() {
        // [DERIVED] round-trip: plant a block-lower-triangular M in a random
        // orthogonal frame, sample only the observable block, recover.
        let d = 4;
        let q = random_orthogonal(d, 42);
        // Observable block 2x2, unobservable 2x2, lower-left coupling.
        let block = array![
            [0.9, 0.1, 0.0, 0.0],
            [0.0, 0.7, 0.0, 0.0],
            [0.2, -0.3, 0.5, 0.1],
            [0.1, 0.0, 0.0, 0.4]
        ];
        let m = q.dot(&block).dot(&q.t());
        let dict = Dictionary::linear(d, false).unwrap();
        let k = KoopmanMatrix::new(dict.clone(), m, Provenance::ClosedFormLinear, 0.0).unwrap();
        // Sampling functional supported on the observable coordinates: rows
        // of S in span{q e₁, q e₂}ᵀ. ψ(x) = x for the plain linear dict, so
        // pick points x = combination of q's first two columns.
        let pts = concatenate(
            Axis(0),
            &[
                q.column(0).insert_axis(Axis(0)),
                (&q.column(0) + &q.column(1)).insert_axis(Axis(0)).view(),
            ],
        )
        .unwrap();
        let s = sampling_operator(&dict, &pts.view()).unwrap();
        let dec = kalman_decompose(&k, &s, 1e-8).unwrap();
        assert_eq!(dec.report.unobservable_dimension, 2);
        assert!(dec.upper_right_residual <= 1e-8 * fro_norm(&k.matrix.view()));
        assert!(dec.c_no_residual <= 1e-8);
        // Unobservable subspace is span{q e₃, q e₄}.
        let planted = concatenate(
            Axis(1),
            &[
                q.column(2).insert_axis(Axis(1)).view(),
                q.column(3).insert_axis(Axis(1)).view(),
            ],
        )
        .unwrap();
        let angles =
            principal_angles(&planted.view(), &dec.report.unobservable_basis.view()).unwrap();
        assert!(angles.iter().all(|&a| a <= 1e-8), "angles {angles:?}");
    }

    #[test]
    fn stacking_shrinks_unobservable_dimension() {
        let (k, dict) = diag_example();
        let s1 = sampling_operator(&dict, &array![[1.0, 0.0]].view()).unwrap();
        let s2 = sampling_operator(&dict, &array![[0.0, 1.0]].view()).unwrap();
        let r1 = unobservable_subspace(&k, &s1, DEFAULT_OBS_TOL).unwrap();
        let (_, stacked) = stack_experiments(&k, &[&s1, &s2], DEFAULT_OBS_TOL).unwrap();
        assert_eq!(stacked.unobservable_dimension, 0);
        assert!(stacked.unobservable_dimension <= r1.unobservable_dimension);
        // Stacking an operator with itself changes nothing.
        let (_, same) = stack_experiments(&k, &[&s1, &s1], DEFAULT_OBS_TOL).unwrap();
        assert_eq!(same.unobservable_dimension, r1.unobservable_dimension);
        let angles = principal_angles(
            &same.unobservable_basis.view(),
            &r1.unobservable_basis.view(),
        )
        .unwrap();
        assert!(angles.iter().all(|&a| a <= 1e-10));
    }

    #[test]
    fn stacked_null_space_is_intersection_of_null_spaces() {
        // Random 5×5 instances with forced eigenvalue multiplicity so the
        // individual null spaces are nontrivial; oracle = projector
        // intersection of the individually computed subspaces.
        let d = 5;
        let dict = Dictionary::linear(d, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..10 {
            let q = random_orthogonal(d, 100 + trial);
            let lambda = Array2::from_diag(&array![0.9, 0.9, 0.9, 0.5, 0.3]);
            let m = q.dot(&lambda).dot(&q.t());
            let k =
                KoopmanMatrix::new(dict.clone(), m, Provenance::ClosedFormLinear, 0.0).unwrap();
            let p1 = Array2::from_shape_fn((1, d), |_| rng.random_range(-1.0..1.0));
            let p2 = Array2::from_shape_fn((1, d), |_| rng.random_range(-1.0..1.0));
            let s1 = sampling_operator(&dict, &p1.view()).unwrap();
            let s2 = sampling_operator(&dict, &p2.view()).unwrap();
            let r1 = unobservable_subspace(&k, &s1, 1e-8).unwrap();
            let r2 = unobservable_subspace(&k, &s2, 1e-8).unwrap();
            let (_, stacked) = stack_experiments(&k, &[&s1, &s2], 1e-8).unwrap();
            let oracle = subspace_intersection(
                &r1.unobservable_basis.view(),
                &r2.unobservable_basis.view(),
                1e-8,
            )
            .unwrap();
            assert_eq!(
                stacked.unobservable_dimension,
                oracle.ncols(),
                "trial {trial}: dim mismatch"
            );
            assert!(stacked.unobservable_dimension <= r1.unobservable_dimension.min(r2.unobservable_dimension));
            if oracle.ncols() > 0 {
                let angles =
                    principal_angles(&oracle.view(), &stacked.unobservable_basis.view()).unwrap();
                assert!(angles.iter().all(|&a| a <= 1e-8), "trial {trial}: {angles:?}");
            }
        }
    }

    #[test]
    fn output_depends_only_on_observable_component() {
        // Perturbing coefficients along the unobservable basis leaves
        // y(t) = S M^t c unchanged for t = 0..2D.
        let (k, dict) = diag_example();
        let s = sampling_operator(&dict, &array![[1.0, 0.0]].view()).unwrap();
        let rep = unobservable_subspace(&k, &s, DEFAULT_OBS_TOL).unwrap();
        assert_eq!(rep.unobservable_dimension, 1);
        let c = Array1::from_vec(vec![0.6, -0.2]);
        let dv = rep.unobservable_basis.column(0).to_owned() * 3.0;
        let c2 = &c + &dv;
        let d = k.size();
        let mut pow = Array2::<f64>::eye(d);
        for _t in 0..=(2 * d) {
            let y1 = s.matrix.dot(&pow.dot(&c));
            let y2 = s.matrix.dot(&pow.dot(&c2));
            assert!((&y1 - &y2).iter().map(|v| v.abs()).fold(0.0, f64::max) <= 1e-8);
            pow = pow.dot(&k.matrix);
        }
    }

    #[test]
    fn identifiability_diag_example() {
        // [DERIVED] identifiable spectrum {0.9}, hidden {0.8}.
        let (k, dict) = diag_example();
        let s = sampling_operator(&dict, &array![[1.0, 0.0]].view()).unwrap();
        let rep = identifiability_report(&k, &s, DEFAULT_OBS_TOL).unwrap();
        assert_eq!(rep.observable_dimension, 1);
        assert_eq!(rep.unobservable_dimension, 1);
        assert_abs_diff_eq!(rep.identifiable_eigenvalues[0].re, 0.9, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.non_identifiable_eigenvalues[0].re, 0.8, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.percent_recoverable, 50.0, epsilon = 1e-12);
    }

    #[test]
    fn identifiability_full_and_empty() {
        let (k, dict) = diag_example();
        // Fully observable: two independent points.
        let s = sampling_operator(&dict, &array![[1.0, 0.0], [0.0, 1.0]].view()).unwrap();
        let rep = identifiability_report(&k, &s, DEFAULT_OBS_TOL).unwrap();
        assert_abs_diff_eq!(rep.percent_recoverable, 100.0, epsilon = 1e-12);
        // Pathological: the Linear-without-constant dictionary vanishes at 0,
        // so S = 0 and nothing is identifiable.
        let s0 = sampling_operator(&dict, &array![[0.0, 0.0]].view()).unwrap();
        let rep0 = identifiability_report(&k, &s0, DEFAULT_OBS_TOL).unwrap();
        assert_eq!(rep0.observable_dimension, 0);
        assert!(rep0.identifiable_eigenvalues.is_empty());
        assert_abs_diff_eq!(rep0.percent_recoverable, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn spectrum_splits_across_blocks() {
        // spectrum(M) = spectrum(K_o) ∪ spectrum(K_no) for an invariant split.
        let q = random_orthogonal(3, 5);
        let block = array![[0.9, 0.0, 0.0], [0.0, 0.6, 0.0], [0.3, 0.1, 0.2]];
        let m = q.dot(&block).dot(&q.t());
        let dict = Dictionary::linear(3, false).unwrap();
        let k = KoopmanMatrix::new(dict.clone(), m.clone(), Provenance::ClosedFormLinear, 0.0)
            .unwrap();
        let pts = concatenate(
            Axis(0),
            &[
                q.column(0).insert_axis(Axis(0)),
                q.column(1).insert_axis(Axis(0)),
            ],
        )
        .unwrap();
        let s = sampling_operator(&dict, &pts.view()).unwrap();
        let dec = kalman_decompose(&k, &s, 1e-8).unwrap();
        let mut union: Vec<f64> = eig_sorted(&dec.k_o)
            .unwrap()
            .values
            .iter()
            .chain(eig_sorted(&dec.k_no).unwrap().values.iter())
            .map(|z| z.re)
            .collect();
        union.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut full: Vec<f64> = eig_sorted(&m).unwrap().values.iter().map(|z| z.re).collect();
        full.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (u, f) in union.iter().zip(full.iter()) {
            assert_abs_diff_eq!(u, f, epsilon = 1e-8);
        }
    }

    #[test]
    fn mismatched_dictionaries_rejected() {
        let (k, _) = diag_example();
        let other = Dictionary::monomials(2, 1).unwrap();
        let s = sampling_operator(&other, &array![[1.0, 0.0]].view()).unwrap();
        assert!(unobservable_subspace(&k, &s, 1e-10).is_err());
    }
}
