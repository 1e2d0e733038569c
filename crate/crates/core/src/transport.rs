//! Transport (Perron–Frobenius) side: pushing densities forward through
//! maps and flows, the transport generator on a dictionary, adjointness
//! checks against the Koopman side, a conservative upwind PDE reference
//! discretization, and unitarity diagnostics for volume-preserving flows.

use crate::dynamics::{DynamicalSystem, BLOWUP_THRESHOLD};
use crate::error::{CoreError, Result};
use crate::grid::DensityGrid;
use crate::koopman::{project, KoopmanMatrix, Provenance, DEFAULT_RANK_TOL};
use crate::observables::Dictionary;
use ndarray::{Array1, Array2, ArrayView2};

/// Cells from a box face within which nonzero density triggers the
/// support warnings: zero-extension interpolation and zero-inflow
/// boundaries silently destroy mass parked there.
pub const BOUNDARY_MARGIN_CELLS: usize = 5;

/// Magnitude treated as "numerically zero" in the support checks.
pub const SUPPORT_EPS: f64 = 1e-12;

/// Safety factor applied to the upwind stability limit.
pub const CFL_SAFETY: f64 = 0.9;

/// Relative step used for finite-difference Jacobians of inverse maps,
/// scaled by the box diagonal.
pub const FD_JACOBIAN_REL_H: f64 = 1e-5;

/// A transported density plus any support-violation diagnostics.
#[derive(Debug, Clone)]
pub struct TransportOutput {
    pub grid: DensityGrid,
    pub warnings: Vec<String>,
}

/// ⟨φ, K ψ⟩ versus ⟨T φ, ψ⟩ evaluated by midpoint quadrature.
#[derive(Debug, Clone)]
pub struct InnerProductReport {
    /// ∫ φ(y) ψ(F_t(y)) dy — the Koopman pairing.
    pub lhs: f64,
    /// ∫ (T_t φ)(x) ψ(x) dx — the transport pairing.
    pub rhs: f64,
    pub abs_error: f64,
    pub rel_error: f64,
}

fn det_small(m: &Array2<f64>) -> f64 {
    match m.nrows() {
        1 => m[[0, 0]],
        2 => m[[0, 0]] * m[[1, 1]] - m[[0, 1]] * m[[1, 0]],
        3 => {
            m[[0, 0]] * (m[[1, 1]] * m[[2, 2]] - m[[1, 2]] * m[[2, 1]])
                - m[[0, 1]] * (m[[1, 0]] * m[[2, 2]] - m[[1, 2]] * m[[2, 0]])
                + m[[0, 2]] * (m[[1, 0]] * m[[2, 1]] - m[[1, 1]] * m[[2, 0]])
        }
        n => unreachable!("grids cap the dimension at 3, got {n}"),
    }
}

/// Pushes `phi` forward through an invertible map `T` given its inverse:
/// `(T#φ)(x) = φ(T⁻¹x) · |det D(T⁻¹)(x)|`, evaluated at every cell center.
///
/// With no determinant closure the Jacobian of the inverse is taken by
/// central differences with step `FD_JACOBIAN_REL_H ×` box diagonal.
pub fn pushforward_map(
    phi: &DensityGrid,
    inverse: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    inverse_jacobian_det: Option<&dyn Fn(&[f64]) -> Result<f64>>,
) -> Result<TransportOutput> {
    let n = phi.dim();
    let h_fd = FD_JACOBIAN_REL_H * phi.domain().diagonal();
    let mut out = phi.clone();
    let mut exits = 0usize;
    for flat in 0..phi.cell_count() {
        let x = phi.center(&phi.multi_index(flat));
        let y = inverse(&x)?;
        if y.len() != n {
            return Err(CoreError::DimensionMismatch {
                context: "inverse map output".into(),
                expected: n,
                got: y.len(),
            });
        }
        let det = match inverse_jacobian_det {
            Some(dj) => dj(&x)?,
            None => {
                let mut jac = Array2::<f64>::zeros((n, n));
                for b in 0..n {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[b] += h_fd;
                    xm[b] -= h_fd;
                    let yp = inverse(&xp)?;
                    let ym = inverse(&xm)?;
                    for a in 0..n {
                        jac[[a, b]] = (yp[a] - ym[a]) / (2.0 * h_fd);
                    }
                }
                det_small(&jac)
            }
        };
        if det.abs() < 1e-14 {
            return Err(CoreError::SingularJacobian {
                location: x,
                det,
            });
        }
        if !phi.domain().contains(&y) {
            exits += 1;
        }
        out.values_mut()[flat] = phi.interpolate(&y) * det.abs();
    }
    Ok(TransportOutput {
        grid: out,
        warnings: support_warnings(phi, exits),
    })
}

fn support_warnings(phi: &DensityGrid, exits: usize) -> Vec<String> {
    let mut warnings = Vec::new();
    if exits > 0 && phi.max_boundary_magnitude(BOUNDARY_MARGIN_CELLS) > SUPPORT_EPS {
        warnings.push(format!(
            "{exits} characteristics left the box while the density is nonzero within \
             {BOUNDARY_MARGIN_CELLS} cells of the boundary; transported mass is lost there"
        ));
    }
    warnings
}

/// One RK4 step of the characteristic-plus-volume system
/// `ẏ = −f(y)`, `ℓ̇ = −∇·f(y)`, so `e^ℓ = |det DF_t⁻¹|` along the path.
fn augmented_step(
    system: &DynamicalSystem,
    y: &Array1<f64>,
    logdet: f64,
    h: f64,
) -> Result<(Array1<f64>, f64)> {
    let rhs = |p: &Array1<f64>| -> Result<(Array1<f64>, f64)> {
        Ok((-system.field(&p.view())?, -system.divergence(&p.view())?))
    };
    let (k1, d1) = rhs(y)?;
    let (k2, d2) = rhs(&(y + &(&k1 * (h / 2.0))))?;
    let (k3, d3) = rhs(&(y + &(&k2 * (h / 2.0))))?;
    let (k4, d4) = rhs(&(y + &(&k3 * h)))?;
    let y_next = y + &((k1 + k2.clone() * 2.0 + k3.clone() * 2.0 + k4) * (h / 6.0));
    let l_next = logdet + h / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
    Ok((y_next, l_next))
}

/// Pushes a density forward under the flow of a continuous system for time
/// `t ≥ 0` by the semi-Lagrangian rule `(T_tφ)(x) = φ(F_t⁻¹x)·|det DF_t⁻¹(x)|`.
///
/// Volume-preserving systems (`divergence_free = Some(true)`) use the
/// system's inverse flow with determinant one. Otherwise characteristics and
/// the log-determinant are integrated together with RK4 steps of size `dt`,
/// using Liouville's formula for the volume change.
pub fn transport_flow(
    phi: &DensityGrid,
    system: &DynamicalSystem,
    t: f64,
    dt: f64,
) -> Result<TransportOutput> {
    if !system.is_continuous() {
        return Err(CoreError::Unsupported(format!(
            "transport_flow needs a continuous system; '{}' is a discrete map \
             (use pushforward_map with an explicit inverse)",
            system.name
        )));
    }
    if system.dimension != phi.dim() {
        return Err(CoreError::DimensionMismatch {
            context: "transport_flow density vs system".into(),
            expected: system.dimension,
            got: phi.dim(),
        });
    }
    if t < 0.0 {
        return Err(CoreError::Domain(format!(
            "transport_flow requires t >= 0 (got {t})"
        )));
    }
    if t == 0.0 {
        return Ok(TransportOutput {
            grid: phi.clone(),
            warnings: Vec::new(),
        });
    }
    if !(dt > 0.0) {
        return Err(CoreError::Domain(format!(
            "transport_flow requires dt > 0 (got {dt})"
        )));
    }
    let volume_preserving = system.divergence_free == Some(true);
    let steps = (t / dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;

    let mut out = phi.clone();
    let mut exits = 0usize;
    for flat in 0..phi.cell_count() {
        let x = phi.center(&phi.multi_index(flat));
        let (y, det) = if volume_preserving {
            let y = system.flow_inverse(&Array1::from_vec(x.clone()).view(), t, dt)?;
            (y, 1.0)
        } else {
            let mut y = Array1::from_vec(x.clone());
            let mut logdet = 0.0;
            for k in 0..steps {
                let (yn, ln) = augmented_step(system, &y, logdet, h)?;
                if yn.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP_THRESHOLD) {
                    return Err(CoreError::Divergence {
                        time: (k + 1) as f64 * h,
                        detail: format!("backward characteristic from {x:?} blew up"),
                    });
                }
                y = yn;
                logdet = ln;
            }
            (y, logdet.exp())
        };
        let y_slice = y.as_slice().expect("contiguous state");
        if !phi.domain().contains(y_slice) {
            exits += 1;
        }
        out.values_mut()[flat] = phi.interpolate(y_slice) * det;
    }
    Ok(TransportOutput {
        grid: out,
        warnings: support_warnings(phi, exits),
    })
}

/// Matrix of the transport generator `L ρ = −∇·(f ρ)` on the dictionary
/// span, by least squares over sample points: row i of the target is
/// `−∇ψ(xᵢ)·f(xᵢ) − (∇·f)(xᵢ) ψ(xᵢ)`.
pub fn transport_generator_matrix(
    system: &DynamicalSystem,
    dict: &Dictionary,
    samples: &ArrayView2<f64>,
) -> Result<KoopmanMatrix> {
    if !system.is_continuous() {
        return Err(CoreError::Domain(format!(
            "transport_generator_matrix needs a continuous system, '{}' is a discrete map",
            system.name
        )));
    }
    if dict.dimension_in() != system.dimension {
        return Err(CoreError::DimensionMismatch {
            context: "transport_generator_matrix dictionary vs system".into(),
            expected: system.dimension,
            got: dict.dimension_in(),
        });
    }
    if samples.nrows() < dict.size() {
        return Err(CoreError::Domain(format!(
            "transport_generator_matrix needs at least D = {} sample points, got {}",
            dict.size(),
            samples.nrows()
        )));
    }
    let psi_x = dict.evaluate_batch(samples)?;
    let mut theta = Array2::<f64>::zeros((samples.nrows(), dict.size()));
    for (i, row) in samples.rows().into_iter().enumerate() {
        let f = system.field(&row)?;
        let div = system.divergence(&row)?;
        let grad = dict.gradient(&row)?; // D×n
        let advect = grad.dot(&f);
        let psi_row = dict.evaluate(&row)?;
        theta
            .row_mut(i)
            .assign(&(-&advect - &(psi_row * div)));
    }
    let (m, residual) = project(&psi_x, &theta, DEFAULT_RANK_TOL, true)?;
    KoopmanMatrix::new(dict.clone(), m, Provenance::GeneratorProjection, residual)
}

/// Quadrature check of the duality ⟨φ, K_t ψ⟩ = ⟨T_t φ, ψ⟩: the left side
/// pulls ψ back along forward characteristics, the right side pushes φ
/// forward with `transport_flow`. Both grids must share one layout.
pub fn adjoint_check(
    system: &DynamicalSystem,
    phi: &DensityGrid,
    psi: &DensityGrid,
    t: f64,
    dt: f64,
) -> Result<InnerProductReport> {
    if !phi.same_layout(psi) {
        return Err(CoreError::Shape(
            "adjoint_check needs both densities on the same grid".into(),
        ));
    }
    let vol = phi.cell_volume();
    let mut lhs = 0.0;
    for flat in 0..phi.cell_count() {
        let w = phi.values()[flat];
        if w == 0.0 {
            continue;
        }
        let y = phi.center(&phi.multi_index(flat));
        let fy = system.flow(&Array1::from_vec(y).view(), t, dt)?;
        lhs += w * psi.interpolate(fy.as_slice().expect("contiguous state"));
    }
    lhs *= vol;
    let pushed = transport_flow(phi, system, t, dt)?;
    let rhs = pushed.grid.inner_product(psi)?;
    let abs_error = (lhs - rhs).abs();
    Ok(InnerProductReport {
        lhs,
        rhs,
        abs_error,
        rel_error: abs_error / lhs.abs().max(rhs.abs()).max(1e-300),
    })
}

/// L² norm ratio ‖T_t φ‖ / ‖φ‖ for a volume-preserving flow, which the
/// transport operator must keep at one.
pub fn unitarity_check(
    phi: &DensityGrid,
    system: &DynamicalSystem,
    t: f64,
    dt: f64,
) -> Result<f64> {
    if system.divergence_free != Some(true) {
        return Err(CoreError::Domain(format!(
            "unitarity holds for volume-preserving flows only; '{}' is not \
             declared divergence-free",
            system.name
        )));
    }
    let before = phi.l2_norm();
    if before <= 0.0 {
        return Err(CoreError::Domain(
            "unitarity_check needs a nonzero density".into(),
        ));
    }
    let out = transport_flow(phi, system, t, dt)?;
    Ok(out.grid.l2_norm() / before)
}

/// Per-axis face-normal velocities of a steady field, sampled at face
/// centers. `faces[a]` has the grid's shape with axis `a` extended by one.
fn face_velocities(
    phi: &DensityGrid,
    system: &DynamicalSystem,
) -> Result<Vec<Vec<f64>>> {
    let n = phi.dim();
    let shape = phi.shape();
    let mut all = Vec::with_capacity(n);
    for a in 0..n {
        let mut face_shape: Vec<usize> = shape.to_vec();
        face_shape[a] += 1;
        let count: usize = face_shape.iter().product();
        let mut u = vec![0.0; count];
        for (flat, slot) in u.iter_mut().enumerate() {
            // Decode in row-major order over face_shape.
            let mut rem = flat;
            let mut x = vec![0.0; n];
            for b in (0..n).rev() {
                let i = rem % face_shape[b];
                rem /= face_shape[b];
                let h = phi.cell_sizes()[b];
                x[b] = if b == a {
                    phi.domain().lo[b] + i as f64 * h
                } else {
                    phi.domain().lo[b] + (i as f64 + 0.5) * h
                };
            }
            *slot = system.field(&Array1::from_vec(x).view())?[a];
        }
        all.push(u);
    }
    Ok(all)
}

fn summed_courant_per_unit_dt(phi: &DensityGrid, faces: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (a, face) in faces.iter().enumerate() {
        let vmax = face.iter().map(|v| v.abs()).fold(0.0, f64::max);
        total += vmax / phi.cell_sizes()[a];
    }
    total
}

/// Largest step `transport_pde` accepts for this density/system pair
/// (infinite when the field vanishes on every face).
pub fn pde_stable_step(phi: &DensityGrid, system: &DynamicalSystem) -> Result<f64> {
    if !system.is_continuous() {
        return Err(CoreError::Unsupported(format!(
            "transport_pde needs a continuous vector field, '{}' is a discrete map",
            system.name
        )));
    }
    if system.dimension != phi.dim() {
        return Err(CoreError::DimensionMismatch {
            context: "transport_pde density vs system".into(),
            expected: system.dimension,
            got: phi.dim(),
        });
    }
    let faces = face_velocities(phi, system)?;
    let courant = summed_courant_per_unit_dt(phi, &faces);
    Ok(if courant > 0.0 {
        CFL_SAFETY / courant
    } else {
        f64::INFINITY
    })
}

/// First-order conservative upwind (donor-cell) discretization of the
/// continuity equation `∂ρ/∂t + ∇·(f ρ) = 0`, advanced to time `t` in
/// uniform steps of at most `dt`. Boundaries admit no inflow: the density
/// outside the box is zero, and outflowing mass is lost.
///
/// The step must satisfy the multidimensional stability bound
/// `Δt · Σ_a max|f_a| / h_a ≤ CFL_SAFETY`, else `CflViolation` reports the
/// largest admissible step.
pub fn transport_pde(
    phi: &DensityGrid,
    system: &DynamicalSystem,
    t: f64,
    dt: f64,
) -> Result<TransportOutput> {
    if !system.is_continuous() {
        return Err(CoreError::Unsupported(format!(
            "transport_pde needs a continuous vector field, '{}' is a discrete map",
            system.name
        )));
    }
    if system.dimension != phi.dim() {
        return Err(CoreError::DimensionMismatch {
            context: "transport_pde density vs system".into(),
            expected: system.dimension,
            got: phi.dim(),
        });
    }
    if t < 0.0 {
        return Err(CoreError::Domain(format!(
            "transport_pde requires t >= 0 (got {t})"
        )));
    }
    if t == 0.0 {
        return Ok(TransportOutput {
            grid: phi.clone(),
            warnings: Vec::new(),
        });
    }
    if !(dt > 0.0) {
        return Err(CoreError::Domain(format!(
            "transport_pde requires dt > 0 (got {dt})"
        )));
    }
    let n = phi.dim();
    let shape = phi.shape().to_vec();
    let faces = face_velocities(phi, system)?;

    // Stability bound from the summed per-axis Courant numbers.
    let courant_per_unit_dt = summed_courant_per_unit_dt(phi, &faces);
    let steps = (t / dt).ceil().max(1.0) as usize;
    let h_step = t / steps as f64;
    if courant_per_unit_dt > 0.0 {
        let dt_max = CFL_SAFETY / courant_per_unit_dt;
        if h_step > dt_max {
            return Err(CoreError::CflViolation { dt: h_step, dt_max });
        }
    }

    let mut grid = phi.clone();
    let cell_count = grid.cell_count();
    let mut next = grid.values().to_vec();
    for _step in 0..steps {
        next.copy_from_slice(grid.values());
        for a in 0..n {
            let coeff = h_step / grid.cell_sizes()[a];
            let mut face_shape = shape.clone();
            face_shape[a] += 1;
            let face_count: usize = face_shape.iter().product();
            for fflat in 0..face_count {
                let u = faces[a][fflat];
                if u == 0.0 {
                    continue;
                }
                // Decode face index; i_a ∈ 0..=shape[a].
                let mut rem = fflat;
                let mut idx = vec![0usize; n];
                for b in (0..n).rev() {
                    idx[b] = rem % face_shape[b];
                    rem /= face_shape[b];
                }
                let ia = idx[a];
                let left = if ia > 0 {
                    let mut c = idx.clone();
                    c[a] = ia - 1;
                    Some(grid.flat_index(&c))
                } else {
                    None
                };
                let right = if ia < shape[a] {
                    Some(grid.flat_index(&idx))
                } else {
                    None
                };
                let donor = if u > 0.0 { left } else { right };
                let flux = donor.map_or(0.0, |d| u * grid.values()[d]);
                if flux == 0.0 {
                    continue;
                }
                if let Some(l) = left {
                    next[l] -= coeff * flux;
                }
                if let Some(r) = right {
                    next[r] += coeff * flux;
                }
            }
        }
        grid.values_mut().copy_from_slice(&next);
        debug_assert_eq!(grid.cell_count(), cell_count);
    }

    let mut warnings = Vec::new();
    if phi.max_boundary_magnitude(BOUNDARY_MARGIN_CELLS) > SUPPORT_EPS {
        warnings.push(format!(
            "density is nonzero within {BOUNDARY_MARGIN_CELLS} cells of the boundary; \
             zero-inflow boundaries let that mass leak out"
        ));
    }
    Ok(TransportOutput { grid, warnings })
}
