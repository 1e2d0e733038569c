//! Dense linear algebra helpers: SVD least squares, null spaces, sorted
//! eigendecompositions, matrix exponential, Kronecker products and
//! discrete Lyapunov solves.
//!
//! Everything here works on `ndarray` arrays with LAPACK (via
//! `ndarray-linalg`) underneath. Matrices are "desk scale" throughout; no
//! attempt is made at sparse or blocked algorithms.

use crate::error::{CoreError, Result};
use ndarray::{Array1, Array2, ArrayView2};
use ndarray_linalg::{Eig, Eigh, Solve, SVD, UPLO};
use num_complex::Complex64;

/// Frobenius norm.
pub fn fro_norm(a: &ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Maximum absolute column sum (induced 1-norm).
pub fn one_norm(a: &ArrayView2<f64>) -> f64 {
    let mut best = 0.0_f64;
    for j in 0..a.ncols() {
        let s: f64 = a.column(j).iter().map(|v| v.abs()).sum();
        best = best.max(s);
    }
    best
}

/// Result of an SVD-based least-squares solve of `A X = B`.
pub struct Lstsq {
    /// Minimum-norm solution with singular values below the cut zeroed.
    pub solution: Array2<f64>,
    /// Number of singular values above `rank_tol * sigma_max`.
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// `||A X - B||_F`.
    pub residual_fro: f64,
}

/// Minimum-norm least squares via SVD with relative rank cutoff.
pub fn lstsq(a: &Array2<f64>, b: &Array2<f64>, rank_tol: f64) -> Result<Lstsq> {
    if a.nrows() != b.nrows() {
        return Err(CoreError::Shape(format!(
            "lstsq: A has {} rows, B has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let (u, sigma, vt) = a.svd(true, true)?;
    let u = u.expect("svd requested U");
    let vt = vt.expect("svd requested Vt");
    let smax = sigma.iter().cloned().fold(0.0_f64, f64::max);
    let cut = rank_tol * smax;
    let rank = sigma.iter().filter(|&&s| s > cut && s > 0.0).count();

    let d = a.ncols();
    let m = b.ncols();
    let ub = u.t().dot(b); // (nrows x m), we use the first `rank` rows
    let mut y = Array2::<f64>::zeros((d, m));
    for i in 0..rank {
        let si = sigma[i];
        for j in 0..m {
            y[[i, j]] = ub[[i, j]] / si;
        }
    }
    let solution = vt.t().dot(&y);
    let residual_fro = fro_norm(&(a.dot(&solution) - b).view());
    Ok(Lstsq {
        solution,
        rank,
        singular_values: sigma.to_vec(),
        residual_fro,
    })
}

/// Orthonormal split of the domain of `A` into row space and null space.
pub struct RowSpaceSplit {
    /// D x r, right singular vectors with sigma above the cut.
    pub range_basis: Array2<f64>,
    /// D x (D - r), right singular vectors at or below the cut.
    pub null_basis: Array2<f64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

/// Splits R^D into row space and null space of `A` (N x D, N >= 1) by SVD.
/// Rank cutoff is `tol * sigma_max`; an all-zero `A` yields rank 0.
pub fn row_space_split(a: &Array2<f64>, tol: f64) -> Result<RowSpaceSplit> {
    let d = a.ncols();
    let (_, sigma, vt) = a.svd(false, true)?;
    let vt = vt.expect("svd requested Vt");
    if vt.nrows() < d {
        // Economy SVD can truncate V when rows < cols; callers keep N >= D.
        return Err(CoreError::Shape(format!(
            "row_space_split needs at least {} rows, got {}",
            d,
            a.nrows()
        )));
    }
    let smax = sigma.iter().cloned().fold(0.0_f64, f64::max);
    let rank = if smax == 0.0 {
        0
    } else {
        sigma.iter().filter(|&&s| s > tol * smax).count()
    };
    let v = vt.t();
    let range_basis = v.slice(ndarray::s![.., ..rank]).to_owned();
    let null_basis = v.slice(ndarray::s![.., rank..]).to_owned();
    Ok(RowSpaceSplit {
        range_basis,
        null_basis,
        singular_values: sigma.to_vec(),
        rank,
    })
}

/// Eigen-decomposition sorted by descending magnitude, ties broken by
/// descending real part then descending imaginary part. Eigenvectors are
/// unit 2-norm with the first non-negligible component rotated to the
/// positive real axis.
pub struct EigPairs {
    pub values: Vec<Complex64>,
    /// Columns aligned with `values`.
    pub vectors: Array2<Complex64>,
    /// `||M v - lambda v||_2` per pair.
    pub residuals: Vec<f64>,
}

pub fn eig_sorted(m: &Array2<f64>) -> Result<EigPairs> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(CoreError::Shape(format!(
            "eig_sorted needs a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    // Re-allocate to guarantee standard layout; slices of other arrays can
    // carry strides LAPACK bindings reject.
    let (vals, vecs) = Array2::from_shape_fn((n, n), |(i, j)| m[[i, j]]).eig()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (vals[i], vals[j]);
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(b.re.partial_cmp(&a.re).unwrap())
            .then(b.im.partial_cmp(&a.im).unwrap())
    });

    let mc = m.mapv(|x| Complex64::new(x, 0.0));
    let mut values = Vec::with_capacity(n);
    let mut vectors = Array2::<Complex64>::zeros((n, n));
    let mut residuals = Vec::with_capacity(n);
    for (slot, &idx) in order.iter().enumerate() {
        let lambda = vals[idx];
        let mut v: Array1<Complex64> = vecs.column(idx).to_owned();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.mapv_inplace(|z| z / norm);
        }
        let vmax = v.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        if let Some(first) = v.iter().position(|z| z.norm() > 1e-12 * vmax.max(1e-300)) {
            let phase = v[first] / v[first].norm();
            v.mapv_inplace(|z| z / phase);
        }
        let resid = (&mc.dot(&v) - &v.mapv(|z| z * lambda))
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt();
        values.push(lambda);
        vectors.column_mut(slot).assign(&v);
        residuals.push(resid);
    }
    Ok(EigPairs {
        values,
        vectors,
        residuals,
    })
}

/// Eigenvalues only, unsorted.
pub fn eigenvalues(m: &Array2<f64>) -> Result<Vec<Complex64>> {
    let (vals, _) = m.eig()?;
    Ok(vals.to_vec())
}

/// Spectral radius of a real square matrix.
pub fn spectral_radius(m: &Array2<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0_f64, f64::max))
}

/// Symmetric eigen-decomposition with eigenvalues sorted descending and a
/// deterministic sign convention (first non-negligible component positive).
/// Degenerate clusters are ordered by descending lexicographic comparison of
/// the sign-fixed eigenvectors.
pub fn eigh_sorted(m: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let (vals, vecs) =
        Array2::from_shape_fn(m.dim(), |(i, j)| m[[i, j]]).eigh(UPLO::Lower)?;
    let n = vals.len();
    let mut cols: Vec<(f64, Array1<f64>)> = (0..n)
        .map(|j| {
            let mut v = vecs.column(j).to_owned();
            let vmax = v.iter().map(|x| x.abs()).fold(0.0_f64, f64::max);
            if let Some(first) = v.iter().position(|x| x.abs() > 1e-12 * vmax.max(1e-300)) {
                if v[first] < 0.0 {
                    v.mapv_inplace(|x| -x);
                }
            }
            (vals[j], v)
        })
        .collect();
    let scale = cols
        .iter()
        .map(|(l, _)| l.abs())
        .fold(0.0_f64, f64::max)
        .max(1e-300);
    cols.sort_by(|(la, va), (lb, vb)| {
        if (la - lb).abs() <= 1e-12 * scale {
            // descending lexicographic on the vector entries
            for (x, y) in va.iter().zip(vb.iter()) {
                match y.partial_cmp(x).unwrap() {
                    std::cmp::Ordering::Equal => continue,
                    other => return other,
                }
            }
            std::cmp::Ordering::Equal
        } else {
            lb.partial_cmp(la).unwrap()
        }
    });
    let values: Vec<f64> = cols.iter().map(|(l, _)| *l).collect();
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (j, (_, v)) in cols.iter().enumerate() {
        vectors.column_mut(j).assign(v);
    }
    Ok((values, vectors))
}

/// Matrix exponential by scaling and squaring with a degree-13 Pade
/// approximant (Higham's coefficients, fixed degree).
pub fn expm(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(CoreError::Shape(format!(
            "expm needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA_13: f64 = 5.371920351148152;

    let norm = one_norm(&a.view());
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let a1 = a.mapv(|x| x / 2f64.powi(s as i32));
    let eye = Array2::<f64>::eye(n);
    let a2 = a1.dot(&a1);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);

    let u_inner = a6.dot(&(&a6 * B[13] + &a4 * B[11] + &a2 * B[9]))
        + &a6 * B[7]
        + &a4 * B[5]
        + &a2 * B[3]
        + &eye * B[1];
    let u = a1.dot(&u_inner);
    let v = a6.dot(&(&a6 * B[12] + &a4 * B[10] + &a2 * B[8]))
        + &a6 * B[6]
        + &a4 * B[4]
        + &a2 * B[2]
        + &eye * B[0];

    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut x = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let col = lhs.solve(&rhs.column(j).to_owned())?;
        x.column_mut(j).assign(&col);
    }
    for _ in 0..s {
        x = x.dot(&x);
    }
    Ok(x)
}

/// Kronecker product `a (x) b`.
pub fn kron(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::<f64>::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[[i, j]];
            if aij == 0.0 {
                continue;
            }
            let mut block = out.slice_mut(ndarray::s![i * rb..(i + 1) * rb, j * cb..(j + 1) * cb]);
            block.assign(&(b * aij));
        }
    }
    out
}

/// Principal angles (radians, ascending) between the column spans of two
/// orthonormal bases. Empty bases give an empty list.
pub fn principal_angles(u1: &ArrayView2<f64>, u2: &ArrayView2<f64>) -> Result<Vec<f64>> {
    if u1.ncols() == 0 || u2.ncols() == 0 {
        return Ok(Vec::new());
    }
    let cross = u1.t().dot(u2);
    let (_, sigma, _) = cross.svd(false, false)?;
    let mut angles: Vec<f64> = sigma
        .iter()
        .map(|&s| s.clamp(-1.0, 1.0).acos())
        .collect();
    // acos saturates near 1, flooring small angles at ~1e-8; recompute those
    // from the sine, i.e. the singular values of (I - U1 U1') U2.
    if angles.iter().any(|&a| a < std::f64::consts::FRAC_PI_4) {
        let residual = &u2.to_owned() - &u1.dot(&cross);
        let (_, sines, _) = residual.svd(false, false)?;
        let mut sines: Vec<f64> = sines.iter().map(|&s| s.clamp(0.0, 1.0)).collect();
        // Ascending sines pair with ascending angles (descending cosines).
        sines.sort_by(|x, y| x.partial_cmp(y).unwrap());
        angles.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let k = angles.len().min(sines.len());
        for i in 0..k {
            let j = angles.len() - 1 - i;
            if angles[j] < std::f64::consts::FRAC_PI_4 {
                angles[j] = sines[i].asin();
            }
        }
    }
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(angles)
}

/// Solves the discrete Lyapunov equation by a dense Kronecker linear solve.
///
/// * `adjoint = true`:  `A' X A - X + Q = 0`  (observability form)
/// * `adjoint = false`: `A X A' - X + Q = 0`  (controllability/covariance form)
///
/// Row-major vectorization: rvec(A X B) = (A (x) B') rvec(X).
pub fn solve_discrete_lyapunov(a: &Array2<f64>, q: &Array2<f64>, adjoint: bool) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(CoreError::Shape(
            "solve_discrete_lyapunov needs square A and Q of equal size".into(),
        ));
    }
    if n > 30 {
        return Err(CoreError::Domain(format!(
            "Kronecker Lyapunov solve is limited to n <= 30 (got n = {})",
            n
        )));
    }
    let at = a.t().to_owned();
    // rvec(A' X A) = (A' (x) A') rvec(X); rvec(A X A') = (A (x) A) rvec(X).
    let k = if adjoint {
        kron(&at.view(), &at.view())
    } else {
        kron(&a.view(), &a.view())
    };
    let sys = Array2::<f64>::eye(n * n) - &k;
    let rhs = Array1::from_iter(q.iter().cloned());
    let x = sys.solve(&rhs)?;
    let mut w = Array2::from_shape_vec((n, n), x.to_vec())
        .map_err(|e| CoreError::Shape(e.to_string()))?;
    w = (&w + &w.t()) / 2.0;
    Ok(w)
}
