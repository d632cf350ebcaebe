//! A metric at one instant on one of the model spaces, with the Levi-Civita
//! connection, curvature and covariant derivatives.
//!
//! Every space carries a global frame `X_i` (coordinate vector fields on
//! grids, left-invariant fields on groups, a unit-orthonormal basis at the base
//! point of a symmetric space) and the metric is stored as `g_ij = g(X_i, X_j)`.
//! Tensors are handed out in orthonormal frame components: a frame at a point
//! is a matrix `F` whose columns are the frame vectors in the `X` basis.

use crate::error::{Error, Result};
use crate::holonomy::CurvatureJet;
use crate::models::grid::Grid;
use crate::tensor::{Field, Tensor};
use crate::wedge::curvature_symmetry_defect;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// A factor of a product of space forms, in its unit-scale normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub dim: usize,
    /// Sectional curvature of the factor when its metric scale is 1.
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Space {
    /// Coordinate frame on a periodic grid.
    Grid(Grid),
    /// Left-invariant frame with `[X_i, X_j] = c_ij^k X_k`; fields are left-invariant.
    Group { structure: Tensor },
    /// Product of space forms seen from one base point; every field is parallel.
    Symmetric { factors: Vec<Factor> },
}

impl Space {
    pub fn dim(&self) -> usize {
        match self {
            Space::Grid(g) => g.dim(),
            Space::Group { structure } => structure.dim(),
            Space::Symmetric { factors } => factors.iter().map(|f| f.dim).sum(),
        }
    }

    pub fn num_points(&self) -> usize {
        match self {
            Space::Grid(g) => g.num_points(),
            _ => 1,
        }
    }

    /// `c_ij^k` of the structure `[X_1,X_2] = 2X_3` and cyclic, the Lie algebra su(2).
    pub fn su2() -> Space {
        let mut c = Tensor::zeros(3, 3);
        for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
            c.set(&[i, j, k], 2.0);
            c.set(&[j, i, k], -2.0);
        }
        Space::Group { structure: c }
    }

    fn structure(&self, i: usize, j: usize, k: usize) -> f64 {
        match self {
            Space::Group { structure } => structure.get(&[i, j, k]),
            _ => 0.0,
        }
    }

    /// Derivative `X_i` of every component, derivative slot first.
    pub fn x_derivative(&self, field: &[Tensor]) -> Field {
        match self {
            Space::Grid(g) => g.derivative(field),
            _ => field
                .iter()
                .map(|t| Tensor::zeros(t.dim(), t.rank() + 1))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    space: Space,
    metric: Vec<DMatrix<f64>>,
}

fn check_metric(g: &DMatrix<f64>) -> Result<f64> {
    if (g - g.transpose()).amax() > 1e-12 * g.amax().max(1.0) {
        return Err(Error::InvalidMetric("metric is not symmetric".into()));
    }
    let min = g.clone().symmetric_eigenvalues().min();
    if !(min > 0.0) {
        return Err(Error::InvalidMetric(format!(
            "metric is not positive definite (min eigenvalue {min:e})"
        )));
    }
    Ok(min)
}

/// `F = g^{-1/2}`: the orthonormal frame closest to the `X` basis.
pub fn lowdin_frame(g: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(g.clone());
    &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig.eigenvectors.transpose()
}

impl Slice {
    pub fn new(space: Space, metric: Vec<DMatrix<f64>>) -> Result<Self> {
        if metric.len() != space.num_points() {
            return Err(Error::InvalidInput(format!(
                "expected {} metric samples, got {}",
                space.num_points(),
                metric.len()
            )));
        }
        let n = space.dim();
        for g in &metric {
            if g.nrows() != n || g.ncols() != n {
                return Err(Error::InvalidMetric("metric of wrong size".into()));
            }
            check_metric(g)?;
        }
        Ok(Self { space, metric })
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn num_points(&self) -> usize {
        self.metric.len()
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn metric(&self) -> &[DMatrix<f64>] {
        &self.metric
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.metric
            .iter()
            .map(|g| g.clone().symmetric_eigenvalues().min())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn inverse_metric(&self) -> Vec<DMatrix<f64>> {
        self.metric
            .iter()
            .map(|g| g.clone().try_inverse().expect("metric checked SPD"))
            .collect()
    }

    pub fn lowdin_frames(&self) -> Vec<DMatrix<f64>> {
        self.metric.iter().map(lowdin_frame).collect()
    }

    /// Largest `|FᵀgF − Id|` entry over points.
    pub fn frame_defect(&self, frames: &[DMatrix<f64>]) -> f64 {
        let n = self.dim();
        self.metric
            .iter()
            .zip(frames)
            .map(|(g, f)| (f.transpose() * g * f - DMatrix::identity(n, n)).amax())
            .fold(0.0, f64::max)
    }

    /// `Γ^k_ij` stored at `[i, j, k]`, from the Koszul formula in the `X` frame.
    pub fn christoffels(&self) -> Field {
        let n = self.dim();
        if matches!(self.space, Space::Symmetric { .. }) {
            // normal coordinates at the base point
            return vec![Tensor::zeros(n, 3); self.num_points()];
        }
        let gfield: Field = self.metric.iter().map(Tensor::from_matrix).collect();
        let dg = self.space.x_derivative(&gfield);
        let ginv = self.inverse_metric();
        let c = |i, j, k| self.space.structure(i, j, k);
        (0..self.num_points())
            .map(|p| {
                let g = &self.metric[p];
                let d = &dg[p];
                // lowered: 2Γ_ijl = X_i g_jl + X_j g_il − X_l g_ij + c_ij^m g_ml − c_jl^m g_mi + c_li^m g_mj
                let low = Tensor::from_fn(n, 3, |ix| {
                    let (i, j, l) = (ix[0], ix[1], ix[2]);
                    let mut s = d.get(&[i, j, l]) + d.get(&[j, i, l]) - d.get(&[l, i, j]);
                    for m in 0..n {
                        s += c(i, j, m) * g[(m, l)] - c(j, l, m) * g[(m, i)] + c(l, i, m) * g[(m, j)];
                    }
                    0.5 * s
                });
                Tensor::from_fn(n, 3, |ix| {
                    (0..n)
                        .map(|l| ginv[p][(ix[2], l)] * low.get(&[ix[0], ix[1], l]))
                        .sum()
                })
            })
            .collect()
    }

    /// `R_ijkl = g(R(X_i,X_j)X_k, X_l)` with `R(X,Y) = ∇_X∇_Y − ∇_Y∇_X − ∇_[X,Y]`.
    pub fn riemann_x(&self) -> Field {
        let n = self.dim();
        if let Space::Symmetric { factors } = &self.space {
            let g = &self.metric[0];
            let mut block = Vec::with_capacity(n);
            let mut start = 0;
            for (fi, f) in factors.iter().enumerate() {
                for _ in 0..f.dim {
                    block.push((fi, start));
                }
                start += f.dim;
            }
            let r = Tensor::from_fn(n, 4, |ix| {
                let (fi, first) = block[ix[0]];
                if ix.iter().any(|&a| block[a].0 != fi) {
                    return 0.0;
                }
                let ks = factors[fi].curvature * g[(first, first)];
                let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                ks * (d(ix[0], ix[3]) * d(ix[1], ix[2]) - d(ix[0], ix[2]) * d(ix[1], ix[3]))
            });
            return vec![r];
        }
        let gam = self.christoffels();
        let dgam = self.space.x_derivative(&gam);
        (0..self.num_points())
            .map(|p| {
                let (gm, dg, g) = (&gam[p], &dgam[p], &self.metric[p]);
                // R(X_i,X_j)X_k = r[i,j,k,l] X_l
                let up = Tensor::from_fn(n, 4, |ix| {
                    let (i, j, k, l) = (ix[0], ix[1], ix[2], ix[3]);
                    let mut s = dg.get(&[i, j, k, l]) - dg.get(&[j, i, k, l]);
                    for m in 0..n {
                        s += gm.get(&[j, k, m]) * gm.get(&[i, m, l])
                            - gm.get(&[i, k, m]) * gm.get(&[j, m, l])
                            - self.space.structure(i, j, m) * gm.get(&[m, k, l]);
                    }
                    s
                });
                Tensor::from_fn(n, 4, |ix| {
                    (0..n)
                        .map(|m| up.get(&[ix[0], ix[1], ix[2], m]) * g[(m, ix[3])])
                        .sum()
                })
            })
            .collect()
    }

    /// `Rc_ij = g^pq R_ipqj` in the `X` frame.
    pub fn ricci_x(&self) -> Vec<DMatrix<f64>> {
        let ginv = self.inverse_metric();
        self.riemann_x()
            .iter()
            .zip(&ginv)
            .map(|(r, gi)| r.trace(1, 2, gi).to_matrix())
            .collect()
    }

    pub fn to_frame(&self, field: &[Tensor], frames: &[DMatrix<f64>]) -> Field {
        field.iter().zip(frames).map(|(t, f)| t.transform(f)).collect()
    }

    pub fn from_frame(&self, field: &[Tensor], frames: &[DMatrix<f64>]) -> Field {
        field
            .iter()
            .zip(frames)
            .map(|(t, f)| t.transform(&f.clone().try_inverse().expect("frame invertible")))
            .collect()
    }

    /// Covariant derivative in `X` components, derivative slot first.
    pub fn nabla_x(&self, field: &[Tensor], gamma: &[Tensor]) -> Field {
        let n = self.dim();
        let mut out = self.space.x_derivative(field);
        for (p, u) in field.iter().enumerate() {
            let rank = u.rank();
            let len = u.data().len();
            let g = &gamma[p];
            let ud = u.data();
            let od = out[p].data_mut();
            for s in 0..rank {
                let stride = n.pow((rank - 1 - s) as u32);
                for q in 0..len {
                    let j = (q / stride) % n;
                    let base = q - j * stride;
                    for i in 0..n {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += g.get(&[i, j, k]) * ud[base + k * stride];
                        }
                        od[i * len + q] -= acc;
                    }
                }
            }
        }
        out
    }

    /// Covariant derivative of a field given in frame components.
    pub fn nabla(&self, frames: &[DMatrix<f64>], field: &[Tensor]) -> Field {
        if matches!(self.space, Space::Symmetric { .. }) {
            return field
                .iter()
                .map(|t| Tensor::zeros(t.dim(), t.rank() + 1))
                .collect();
        }
        let gamma = self.christoffels();
        let x = self.from_frame(field, frames);
        self.to_frame(&self.nabla_x(&x, &gamma), frames)
    }

    /// `Δ U = ∇_p ∇_p U` in frame components.
    pub fn laplacian(&self, frames: &[DMatrix<f64>], field: &[Tensor]) -> Field {
        let n = self.dim();
        let id = DMatrix::identity(n, n);
        self.nabla(frames, &self.nabla(frames, field))
            .iter()
            .map(|t| t.trace(0, 1, &id))
            .collect()
    }

    /// Riemann tensor in frame components.
    pub fn curvature(&self, frames: &[DMatrix<f64>]) -> Field {
        self.to_frame(&self.riemann_x(), frames)
    }

    /// As [`Slice::curvature`], failing when the discrete tensor misses its
    /// symmetries by more than ten times `tol` (relative to its size).
    pub fn curvature_checked(&self, frames: &[DMatrix<f64>], tol: f64) -> Result<Field> {
        let r = self.curvature(frames);
        let scale = r.iter().map(Tensor::max_abs).fold(1.0, f64::max);
        let defect = r
            .iter()
            .map(curvature_symmetry_defect)
            .fold(0.0, f64::max);
        if defect > 10.0 * tol * scale {
            return Err(Error::Accuracy(format!(
                "curvature symmetry residual {defect:e} exceeds {:e}; refine the grid",
                10.0 * tol * scale
            )));
        }
        Ok(r)
    }

    /// `R, ∇R, …, ∇^kmax R` in frame components.
    pub fn jet(&self, frames: &[DMatrix<f64>], kmax: usize) -> SliceJet {
        self.jet_from(frames, self.curvature(frames), kmax)
    }

    /// As [`Slice::jet`], starting from a given curvature field in frame components.
    pub fn jet_from(&self, frames: &[DMatrix<f64>], curvature: Field, kmax: usize) -> SliceJet {
        let mut derivs = vec![curvature];
        for _ in 0..kmax {
            let next = self.nabla(frames, derivs.last().unwrap());
            derivs.push(next);
        }
        SliceJet {
            n: self.dim(),
            derivs,
        }
    }
}

/// Precomputed covariant derivatives of curvature on a slice.
#[derive(Debug, Clone)]
pub struct SliceJet {
    n: usize,
    derivs: Vec<Field>,
}

impl SliceJet {
    pub fn order(&self, k: usize) -> &Field {
        &self.derivs[k]
    }
}

impl CurvatureJet for SliceJet {
    fn dim(&self) -> usize {
        self.n
    }

    fn num_points(&self) -> usize {
        self.derivs[0].len()
    }

    fn max_order(&self) -> usize {
        self.derivs.len() - 1
    }

    fn curvature_derivative(&self, p: usize, k: usize) -> Result<Tensor> {
        self.derivs
            .get(k)
            .map(|f| f[p].clone())
            .ok_or(Error::UnsupportedOrder {
                requested: k,
                available: self.derivs.len() - 1,
            })
    }
}
