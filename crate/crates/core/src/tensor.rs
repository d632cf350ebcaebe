//! Dense covariant tensors over `R^n` stored in row-major order.
//!
//! Every tensor in this crate carries lower indices only. Frame components are
//! taken in orthonormal frames, where raising and lowering is trivial; basis
//! components are always paired with an explicit metric.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    n: usize,
    rank: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, rank: usize) -> Self {
        Self {
            n,
            rank,
            data: vec![0.0; n.pow(rank as u32)],
        }
    }

    pub fn from_vec(n: usize, rank: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n.pow(rank as u32), "tensor data length");
        Self { n, rank, data }
    }

    /// Builds a tensor by evaluating `f` on every multi-index.
    pub fn from_fn(n: usize, rank: usize, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let len = n.pow(rank as u32);
        let mut data = Vec::with_capacity(len);
        let mut ix = vec![0usize; rank];
        for _ in 0..len {
            data.push(f(&ix));
            increment(&mut ix, n);
        }
        Self { n, rank, data }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        Self::from_fn(n, 2, |ix| m[(ix[0], ix[1])])
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.rank, 2);
        DMatrix::from_fn(self.n, self.n, |i, j| self.data[i * self.n + j])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn offset(&self, ix: &[usize]) -> usize {
        debug_assert_eq!(ix.len(), self.rank);
        ix.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    #[inline]
    pub fn get(&self, ix: &[usize]) -> f64 {
        self.data[self.offset(ix)]
    }

    #[inline]
    pub fn set(&mut self, ix: &[usize], v: f64) {
        let o = self.offset(ix);
        self.data[o] = v;
    }

    #[inline]
    pub fn add_at(&mut self, ix: &[usize], v: f64) {
        let o = self.offset(ix);
        self.data[o] += v;
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, s: f64) -> Tensor {
        Tensor {
            n: self.n,
            rank: self.rank,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn axpy(&mut self, a: f64, x: &Tensor) {
        assert_eq!(self.data.len(), x.data.len());
        for (y, xv) in self.data.iter_mut().zip(&x.data) {
            *y += a * xv;
        }
    }

    /// Reorders slots: result index `ix` reads `self` at `ix[perm[0]], ix[perm[1]], ...`.
    ///
    /// In other words `out[i_0, .., i_k] = self[i_{perm[0]}, .., i_{perm[k]}]`.
    pub fn permute(&self, perm: &[usize]) -> Tensor {
        assert_eq!(perm.len(), self.rank);
        let mut src = vec![0usize; self.rank];
        Tensor::from_fn(self.n, self.rank, |ix| {
            for (s, &p) in src.iter_mut().zip(perm) {
                *s = ix[p];
            }
            self.get(&src)
        })
    }

    /// Tensor product `self ⊗ other`.
    pub fn outer(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.n, other.n);
        let mut data = Vec::with_capacity(self.data.len() * other.data.len());
        for a in &self.data {
            for b in &other.data {
                data.push(a * b);
            }
        }
        Tensor {
            n: self.n,
            rank: self.rank + other.rank,
            data,
        }
    }

    /// Changes basis in every slot: `out[a..] = self[i..] F[i,a] ...`.
    ///
    /// With `F` holding frame vectors as columns this yields frame components
    /// of a covariant tensor.
    pub fn transform(&self, f: &DMatrix<f64>) -> Tensor {
        let n = self.n;
        let mut cur = self.clone();
        // contract one slot at a time; slot 0 each pass, then rotate
        for _ in 0..self.rank {
            let stride = n.pow(self.rank as u32 - 1);
            let mut next = vec![0.0; cur.data.len()];
            // cur[i, rest] -> next[rest, a] = sum_i cur[i, rest] f[i, a]
            for rest in 0..stride {
                for a in 0..n {
                    let mut s = 0.0;
                    for i in 0..n {
                        s += cur.data[i * stride + rest] * f[(i, a)];
                    }
                    next[rest * n + a] = s;
                }
            }
            cur.data = next;
        }
        cur
    }

    /// Derivation action of a matrix on every slot: `Σ_s m[i_s, p] self[.., p, ..]`.
    pub fn slot_action(&self, m: &DMatrix<f64>) -> Tensor {
        let n = self.n;
        let len = self.data.len();
        let mut out = vec![0.0; len];
        for s in 0..self.rank {
            let stride = n.pow((self.rank - 1 - s) as u32);
            for q in 0..len {
                let i = (q / stride) % n;
                let base = q - i * stride;
                let mut acc = 0.0;
                for p in 0..n {
                    acc += m[(i, p)] * self.data[base + p * stride];
                }
                out[q] += acc;
            }
        }
        Tensor {
            n,
            rank: self.rank,
            data: out,
        }
    }

    /// Contracts slots `i` and `j` against the inverse metric `ginv`.
    pub fn trace(&self, i: usize, j: usize, ginv: &DMatrix<f64>) -> Tensor {
        assert!(i < j && j < self.rank);
        let n = self.n;
        let mut full = vec![0usize; self.rank];
        Tensor::from_fn(n, self.rank - 2, |ix| {
            let mut k = 0;
            for (s, slot) in full.iter_mut().enumerate() {
                if s != i && s != j {
                    *slot = ix[k];
                    k += 1;
                }
            }
            let mut acc = 0.0;
            for p in 0..n {
                for q in 0..n {
                    let w = ginv[(p, q)];
                    if w == 0.0 {
                        continue;
                    }
                    full[i] = p;
                    full[j] = q;
                    acc += w * self.get(&full);
                }
            }
            acc
        })
    }
}

/// Advances a multi-index in row-major order.
#[inline]
pub fn increment(ix: &mut [usize], n: usize) {
    for k in (0..ix.len()).rev() {
        ix[k] += 1;
        if ix[k] < n {
            return;
        }
        ix[k] = 0;
    }
}

/// Iterates over all multi-indices of the given rank.
pub fn indices(n: usize, rank: usize) -> impl Iterator<Item = Vec<usize>> {
    let len = n.pow(rank as u32);
    let mut ix = vec![0usize; rank];
    (0..len).map(move |k| {
        if k > 0 {
            increment(&mut ix, n);
        }
        ix.clone()
    })
}

#[inline]
pub fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

impl Add for &Tensor {
    type Output = Tensor;
    fn add(self, rhs: &Tensor) -> Tensor {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &Tensor {
    type Output = Tensor;
    fn sub(self, rhs: &Tensor) -> Tensor {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl AddAssign<&Tensor> for Tensor {
    fn add_assign(&mut self, rhs: &Tensor) {
        self.axpy(1.0, rhs);
    }
}

impl Neg for &Tensor {
    type Output = Tensor;
    fn neg(self) -> Tensor {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &Tensor {
    type Output = Tensor;
    fn mul(self, rhs: f64) -> Tensor {
        self.scale(rhs)
    }
}

/// A tensor per grid point.
pub type Field = Vec<Tensor>;

pub fn field_sup(field: &[Tensor]) -> f64 {
    field.iter().map(Tensor::norm).fold(0.0, f64::max)
}

pub fn field_sub(a: &[Tensor], b: &[Tensor]) -> Field {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
