//! Cell-centered density grids on axis-aligned boxes in one to three
//! dimensions, with multilinear interpolation, midpoint quadrature, and the
//! norms used by transport comparisons.

use crate::error::{CoreError, Result};
use crate::sampling::BoxDomain;

/// Most grid axes a density may have; the cell count grows exponentially
/// with dimension, so higher-dimensional transport belongs to mesh-free
/// methods instead.
pub const MAX_GRID_DIM: usize = 3;

/// A scalar field sampled at cell centers of a regular grid over a box.
///
/// Values are stored flat in row-major order: the *last* axis varies
/// fastest. Interpolation treats the field as zero outside the box.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    domain: BoxDomain,
    shape: Vec<usize>,
    cell_sizes: Vec<f64>,
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(domain: BoxDomain, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if domain.dim() != shape.len() {
            return Err(CoreError::Shape(format!(
                "grid shape has {} axes but the box has {}",
                shape.len(),
                domain.dim()
            )));
        }
        if shape.len() > MAX_GRID_DIM {
            return Err(CoreError::Unsupported(format!(
                "density grids support at most {} dimensions (cell counts grow \
                 exponentially); got {}",
                MAX_GRID_DIM,
                shape.len()
            )));
        }
        if shape.iter().any(|&c| c == 0) {
            return Err(CoreError::Domain("grid axes need at least one cell".into()));
        }
        let total: usize = shape.iter().product();
        if values.len() != total {
            return Err(CoreError::Shape(format!(
                "grid with shape {:?} needs {} values, got {}",
                shape,
                total,
                values.len()
            )));
        }
        let cell_sizes = domain
            .widths()
            .iter()
            .zip(shape.iter())
            .map(|(w, &c)| w / c as f64)
            .collect();
        Ok(DensityGrid {
            domain,
            shape,
            cell_sizes,
            values,
        })
    }

    pub fn zeros(domain: BoxDomain, shape: Vec<usize>) -> Result<Self> {
        let total = shape.iter().product();
        Self::new(domain, shape, vec![0.0; total])
    }

    /// Fills a grid by evaluating `f` at every cell center.
    pub fn from_fn(
        domain: BoxDomain,
        shape: Vec<usize>,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let mut grid = Self::zeros(domain, shape)?;
        let mut center = vec![0.0; grid.dim()];
        for flat in 0..grid.values.len() {
            grid.write_center(flat, &mut center);
            grid.values[flat] = f(&center);
        }
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn cell_sizes(&self) -> &[f64] {
        &self.cell_sizes
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_sizes.iter().product()
    }

    pub fn cell_count(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// True when `other` lives on the identical box and shape.
    pub fn same_layout(&self, other: &DensityGrid) -> bool {
        self.domain == other.domain && self.shape == other.shape
    }

    fn check_layout(&self, other: &DensityGrid, what: &str) -> Result<()> {
        if !self.same_layout(other) {
            return Err(CoreError::Shape(format!(
                "{what} needs both grids on the same box and shape"
            )));
        }
        Ok(())
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dim());
        let mut flat = 0usize;
        for (a, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.shape[a]);
            flat = flat * self.shape[a] + i;
        }
        flat
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0usize; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.shape[a];
            flat /= self.shape[a];
        }
        idx
    }

    /// Center of the cell with multi-index `idx`: `lo + (i + 1/2) h`.
    pub fn center(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(a, &i)| self.domain.lo[a] + (i as f64 + 0.5) * self.cell_sizes[a])
            .collect()
    }

    fn write_center(&self, flat: usize, out: &mut [f64]) {
        let idx = self.multi_index(flat);
        for (a, &i) in idx.iter().enumerate() {
            out[a] = self.domain.lo[a] + (i as f64 + 0.5) * self.cell_sizes[a];
        }
    }

    /// Cell-center coordinates along one axis.
    pub fn centers_axis(&self, axis: usize) -> Vec<f64> {
        (0..self.shape[axis])
            .map(|i| self.domain.lo[axis] + (i as f64 + 0.5) * self.cell_sizes[axis])
            .collect()
    }

    /// Multilinear interpolation of the cell-centered field, zero outside
    /// the box. Between the outermost cell centers and the box faces the
    /// interpolant blends linearly toward zero.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        if !self.domain.contains(x) {
            return 0.0;
        }
        let n = self.dim();
        // Continuous cell coordinate and lower corner per axis.
        let mut base = [0isize; MAX_GRID_DIM];
        let mut frac = [0.0f64; MAX_GRID_DIM];
        for a in 0..n {
            let u = (x[a] - self.domain.lo[a]) / self.cell_sizes[a] - 0.5;
            let f = u.floor();
            base[a] = f as isize;
            frac[a] = u - f;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut weight = 1.0;
            let mut flat = 0usize;
            let mut valid = true;
            for a in 0..n {
                let hi_side = (corner >> a) & 1 == 1;
                let i = base[a] + if hi_side { 1 } else { 0 };
                weight *= if hi_side { frac[a] } else { 1.0 - frac[a] };
                if i < 0 || i as usize >= self.shape[a] {
                    valid = false;
                    break;
                }
                flat = flat * self.shape[a] + i as usize;
            }
            if valid && weight != 0.0 {
                acc += weight * self.values[flat];
            }
        }
        acc
    }

    /// Midpoint-rule integral of the field over the box.
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Midpoint-rule L² pairing `∫ a b` of two fields on the same grid.
    pub fn inner_product(&self, other: &DensityGrid) -> Result<f64> {
        self.check_layout(other, "inner product")?;
        Ok(self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.cell_volume())
    }

    /// Midpoint-rule L¹ distance between two fields on the same grid.
    pub fn l1_distance(&self, other: &DensityGrid) -> Result<f64> {
        self.check_layout(other, "L1 distance")?;
        Ok(self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.cell_volume())
    }

    /// Largest |value| within `margin` cells of any box face. Transport
    /// routines use this to detect mass parked against the boundary, where
    /// zero-extension interpolation would silently destroy it.
    pub fn max_boundary_magnitude(&self, margin: usize) -> f64 {
        let mut worst = 0.0f64;
        for flat in 0..self.values.len() {
            let idx = self.multi_index(flat);
            let near = idx
                .iter()
                .enumerate()
                .any(|(a, &i)| i < margin || i + margin >= self.shape[a]);
            if near {
                worst = worst.max(self.values[flat].abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_box(n: usize) -> BoxDomain {
        BoxDomain::new(vec![0.0; n], vec![1.0; n]).unwrap()
    }

    #[test]
    fn construction_validates() {
        assert!(DensityGrid::zeros(unit_box(1), vec![4, 4]).is_err());
        assert!(DensityGrid::zeros(
            BoxDomain::new(vec![0.0; 4], vec![1.0; 4]).unwrap(),
            vec![2; 4]
        )
        .is_err());
        assert!(DensityGrid::new(unit_box(2), vec![2, 2], vec![0.0; 3]).is_err());
        assert!(DensityGrid::zeros(unit_box(1), vec![0]).is_err());
    }

    #[test]
    fn centers_are_offset_midpoints() {
        let g = DensityGrid::zeros(unit_box(1), vec![4]).unwrap();
        assert_eq!(g.centers_axis(0), vec![0.125, 0.375, 0.625, 0.875]);
        let g2 = DensityGrid::zeros(
            BoxDomain::new(vec![-1.0, 0.0], vec![1.0, 4.0]).unwrap(),
            vec![2, 4],
        )
        .unwrap();
        assert_eq!(g2.center(&[0, 0]), vec![-0.5, 0.5]);
        assert_eq!(g2.center(&[1, 3]), vec![0.5, 3.5]);
    }

    #[test]
    fn index_round_trip_row_major() {
        let g = DensityGrid::zeros(unit_box(2), vec![2, 3]).unwrap();
        // Last axis fastest.
        assert_eq!(g.flat_index(&[1, 2]), 5);
        assert_eq!(g.multi_index(5), vec![1, 2]);
        for flat in 0..g.cell_count() {
            assert_eq!(g.flat_index(&g.multi_index(flat)), flat);
        }
    }

    #[test]
    fn constant_field_mass_is_box_volume() {
        let bx = BoxDomain::new(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        let g = DensityGrid::from_fn(bx, vec![8, 8], |_| 1.0).unwrap();
        assert_abs_diff_eq!(g.total_mass(), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.l1_norm(), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.l2_norm(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn interpolation_exact_at_centers() {
        let bx = BoxDomain::new(vec![-1.0, 2.0], vec![3.0, 5.0]).unwrap();
        let g = DensityGrid::from_fn(bx, vec![7, 5], |x| x[0] * x[0] - x[1]).unwrap();
        for flat in [0usize, 3, 17, 34] {
            let idx = g.multi_index(flat);
            let c = g.center(&idx);
            assert_abs_diff_eq!(g.interpolate(&c), g.values()[flat], epsilon = 1e-13);
        }
    }

    #[test]
    fn interpolation_reproduces_linear_fields_inside() {
        // [DERIVED] multilinear interpolation is exact on affine functions
        // within the hull of cell centers.
        let bx = BoxDomain::new(vec![0.0, -1.0], vec![4.0, 1.0]).unwrap();
        let f = |x: &[f64]| 2.0 * x[0] - 3.0 * x[1] + 1.0;
        let g = DensityGrid::from_fn(bx, vec![16, 16], f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            // Stay half a cell inside the box so every corner is a real cell.
            let x = [
                rng.random_range(0.2..3.8),
                rng.random_range(-0.8..0.8),
            ];
            assert_abs_diff_eq!(g.interpolate(&x), f(&x), epsilon = 1e-12);
        }
    }

    #[test]
    fn interpolation_vanishes_outside_and_decays_at_faces() {
        let g = DensityGrid::from_fn(unit_box(1), vec![4], |_| 1.0).unwrap();
        assert_eq!(g.interpolate(&[-0.01]), 0.0);
        assert_eq!(g.interpolate(&[1.01]), 0.0);
        // At the box face the zero extension has pulled the value halfway.
        assert_abs_diff_eq!(g.interpolate(&[1.0]), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g.interpolate(&[0.0]), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g.interpolate(&[0.5]), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn trilinear_reproduction_in_three_dimensions() {
        let bx = BoxDomain::new(vec![0.0; 3], vec![1.0, 2.0, 3.0]).unwrap();
        let f = |x: &[f64]| 1.0 + x[0] - 2.0 * x[1] + 0.5 * x[2];
        let g = DensityGrid::from_fn(bx, vec![6, 8, 10], f).unwrap();
        let x = [0.41, 1.13, 2.57];
        assert_abs_diff_eq!(g.interpolate(&x), f(&x), epsilon = 1e-12);
    }

    #[test]
    fn inner_product_of_disjoint_indicators_vanishes() {
        let bx = unit_box(1);
        let a = DensityGrid::from_fn(bx.clone(), vec![8], |x| f64::from(x[0] < 0.5)).unwrap();
        let b = DensityGrid::from_fn(bx, vec![8], |x| f64::from(x[0] >= 0.5)).unwrap();
        assert_abs_diff_eq!(a.inner_product(&b).unwrap(), 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(a.inner_product(&a).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(a.l1_distance(&b).unwrap(), 1.0, epsilon = 1e-12);
        // Mismatched layouts are rejected.
        let c = DensityGrid::zeros(unit_box(1), vec![16]).unwrap();
        assert!(a.inner_product(&c).is_err());
    }

    #[test]
    fn boundary_magnitude_sees_edge_cells_only() {
        let mut g = DensityGrid::zeros(unit_box(2), vec![8, 8]).unwrap();
        let interior = g.flat_index(&[4, 4]);
        g.values_mut()[interior] = 9.0;
        assert_eq!(g.max_boundary_magnitude(2), 0.0);
        let edge = g.flat_index(&[0, 5]);
        g.values_mut()[edge] = -3.0;
        assert_eq!(g.max_boundary_magnitude(2), 3.0);
        assert_eq!(g.max_boundary_magnitude(5), 9.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn interpolation_respects_value_bounds(seed in 0u64..10_000, px in 0.0f64..1.0, py in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<f64> = (0..25).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = DensityGrid::new(unit_box(2), vec![5, 5], vals).unwrap();
            let lo = g.values().iter().cloned().fold(0.0f64, f64::min);
            let hi = g.values().iter().cloned().fold(0.0f64, f64::max);
            let v = g.interpolate(&[px, py]);
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12, "{v} outside [{lo}, {hi}]");
        }
    }
}
