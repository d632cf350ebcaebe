//! Periodic structured grids with centered second-order differences.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// A periodic grid on `[0, L_0) × … × [0, L_{n−1})`.
///
/// An axis with a single point carries fields that are constant along it, and
/// its derivative is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: Vec<usize>,
    lengths: Vec<f64>,
}

impl Grid {
    pub fn new(dims: Vec<usize>, lengths: Vec<f64>) -> Result<Self> {
        if dims.len() != lengths.len() || dims.is_empty() {
            return Err(Error::InvalidInput("grid dims and lengths must match".into()));
        }
        for (&d, &l) in dims.iter().zip(&lengths) {
            if d == 0 || (d > 1 && d < 4) {
                return Err(Error::InvalidInput(format!(
                    "need 1 or at least 4 points per axis, got {d}"
                )));
            }
            if !(l > 0.0) {
                return Err(Error::InvalidInput(format!("axis length must be positive, got {l}")));
            }
        }
        Ok(Self { dims, lengths })
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn num_points(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.dims[axis] as f64
    }

    /// Smallest spacing over axes that carry more than one point.
    pub fn min_spacing(&self) -> Option<f64> {
        (0..self.dim())
            .filter(|&a| self.dims[a] > 1)
            .map(|a| self.spacing(a))
            .min_by(f64::total_cmp)
    }

    pub fn index(&self, ix: &[usize]) -> usize {
        ix.iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| acc * d + i % d)
    }

    pub fn multi_index(&self, mut p: usize) -> Vec<usize> {
        let mut ix = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            ix[a] = p % self.dims[a];
            p /= self.dims[a];
        }
        ix
    }

    /// Coordinates of a point.
    pub fn coords(&self, p: usize) -> Vec<f64> {
        self.multi_index(p)
            .iter()
            .enumerate()
            .map(|(a, &i)| i as f64 * self.spacing(a))
            .collect()
    }

    /// Neighbor of `p` shifted by `step` along `axis`, with wrap-around.
    pub fn neighbor(&self, p: usize, axis: usize, step: isize) -> usize {
        let mut ix = self.multi_index(p);
        let d = self.dims[axis] as isize;
        ix[axis] = (ix[axis] as isize + step).rem_euclid(d) as usize;
        self.index(&ix)
    }

    /// Centered difference along every axis; the derivative slot comes first.
    pub fn derivative(&self, field: &[Tensor]) -> Vec<Tensor> {
        let n = self.dim();
        let first = &field[0];
        let (fdim, rank) = (first.dim(), first.rank());
        assert_eq!(fdim, n, "field dimension must match the grid");
        let len = first.data().len();
        (0..field.len())
            .map(|p| {
                let mut out = Tensor::zeros(n, rank + 1);
                for axis in 0..n {
                    if self.dims[axis] == 1 {
                        continue;
                    }
                    let inv = 0.5 / self.spacing(axis);
                    let plus = field[self.neighbor(p, axis, 1)].data();
                    let minus = field[self.neighbor(p, axis, -1)].data();
                    let dst = &mut out.data_mut()[axis * len..(axis + 1) * len];
                    for k in 0..len {
                        dst[k] = (plus[k] - minus[k]) * inv;
                    }
                }
                out
            })
            .collect()
    }

    /// Samples a scalar function of the coordinates.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.num_points()).map(|p| f(&self.coords(p))).collect()
    }
}
