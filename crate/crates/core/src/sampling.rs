//! Point sampling over boxes: Halton low-discrepancy sequences and seeded
//! uniform draws. Used for picking EDMD snapshot sites and for spot-check
//! grids in operator comparisons.

use crate::error::{CoreError, Result};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Axis-aligned box `[lo_i, hi_i]` per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(CoreError::Shape(format!(
                "box bounds have mismatched lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.is_empty() {
            return Err(CoreError::Domain("box must have at least one axis".into()));
        }
        for (i, (&l, &h)) in lo.iter().zip(hi.iter()).enumerate() {
            if !(l < h) {
                return Err(CoreError::Domain(format!(
                    "box axis {} has lo {} >= hi {}",
                    i, l, h
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(self.hi.iter())
            .map(|(l, h)| h - l)
            .collect()
    }

    /// Euclidean length of the box diagonal.
    pub fn diagonal(&self) -> f64 {
        self.widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .all(|(&xi, (&l, &h))| xi >= l && xi <= h)
    }

    pub fn volume(&self) -> f64 {
        self.widths().iter().product()
    }
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Van der Corput radical inverse of `index` in base `base`.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut result = 0.0;
    let mut f = 1.0 / base as f64;
    while index > 0 {
        result += f * (index % base) as f64;
        index /= base;
        f /= base as f64;
    }
    result
}

/// `count` Halton points in the box, one prime base per axis, starting from
/// index 1 (index 0 is the box corner, which is skipped by convention).
pub fn halton(count: usize, bx: &BoxDomain) -> Result<Array2<f64>> {
    let d = bx.dim();
    if d > PRIMES.len() {
        return Err(CoreError::Unsupported(format!(
            "Halton sampling supports up to {} dimensions, got {}",
            PRIMES.len(),
            d
        )));
    }
    let w = bx.widths();
    let mut pts = Array2::<f64>::zeros((count, d));
    for i in 0..count {
        for j in 0..d {
            let u = radical_inverse((i + 1) as u64, PRIMES[j]);
            pts[[i, j]] = bx.lo[j] + u * w[j];
        }
    }
    Ok(pts)
}

/// `count` uniform points in the box from a ChaCha8 stream seeded with `seed`.
pub fn uniform(count: usize, bx: &BoxDomain, seed: u64) -> Array2<f64> {
    let d = bx.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Array2::<f64>::zeros((count, d));
    for i in 0..count {
        for j in 0..d {
            pts[[i, j]] = rng.random_range(bx.lo[j]..bx.hi[j]);
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_base2_first_values() {
        // Base-2 van der Corput: 1/2, 1/4, 3/4, 1/8, ...
        let bx = BoxDomain::new(vec![0.0], vec![1.0]).unwrap();
        let p = halton(4, &bx).unwrap();
        assert_eq!(p[[0, 0]], 0.5);
        assert_eq!(p[[1, 0]], 0.25);
        assert_eq!(p[[2, 0]], 0.75);
        assert_eq!(p[[3, 0]], 0.125);
    }

    #[test]
    fn halton_respects_box() {
        let bx = BoxDomain::new(vec![-2.0, 1.0], vec![2.0, 3.0]).unwrap();
        let p = halton(100, &bx).unwrap();
        for row in p.rows() {
            assert!(bx.contains(row.as_slice().unwrap()));
        }
    }

    #[test]
    fn uniform_is_reproducible() {
        let bx = BoxDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let a = uniform(10, &bx, 42);
        let b = uniform(10, &bx, 42);
        assert_eq!(a, b);
        let c = uniform(10, &bx, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(BoxDomain::new(vec![0.0], vec![0.0]).is_err());
        assert!(BoxDomain::new(vec![1.0], vec![0.0]).is_err());
    }
}
