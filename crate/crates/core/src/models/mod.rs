//! Model geometries: periodic grids, left-invariant metrics on SU(2), and
//! products of space forms.

pub mod grid;
pub mod loops;
pub mod slice;

pub use grid::Grid;
pub use loops::{log_orthogonal, loop_holonomy, LoopSpec};
pub use slice::{lowdin_frame, Factor, Slice, SliceJet, Space};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

fn default_resolution() -> usize {
    64
}

fn one() -> f64 {
    1.0
}

fn one_u() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FactorSpec {
    Sphere {
        dim: usize,
        #[serde(default = "one")]
        radius: f64,
    },
    Flat {
        dim: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// Flat `T^n = R^n / 2πZ^n`; fields may vary along the first axis.
    FlatTorus {
        n: usize,
        #[serde(default = "default_resolution")]
        resolution: usize,
    },
    RoundSphere {
        n: usize,
        #[serde(default = "one")]
        radius: f64,
    },
    Product { factors: Vec<FactorSpec> },
    /// Left-invariant `g = diag(a, b, c)` on SU(2) in a frame with `[X_1, X_2] = 2X_3`.
    BergerSphere { a: f64, b: f64, c: f64 },
    /// `dx² + f(x)²dy² + h(x)²dz²` on `T³` with `f = 1 + a cos(k_f x)`, `h = 1 + b sin(k_h x)`.
    WarpedT3 {
        a: f64,
        b: f64,
        #[serde(default = "one_u")]
        kf: u32,
        #[serde(default = "one_u")]
        kh: u32,
        #[serde(default = "default_resolution")]
        resolution: usize,
    },
    /// `e^{2u}(dx² + dy²)` on `T²` with `u = a cos x + b sin y`.
    ConformalT2 {
        a: f64,
        b: f64,
        #[serde(default = "default_resolution")]
        resolution: usize,
    },
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::FlatTorus { n, .. } | ModelSpec::RoundSphere { n, .. } => *n,
            ModelSpec::Product { factors } => factors
                .iter()
                .map(|f| match f {
                    FactorSpec::Sphere { dim, .. } | FactorSpec::Flat { dim } => *dim,
                })
                .sum(),
            ModelSpec::BergerSphere { .. } | ModelSpec::WarpedT3 { .. } => 3,
            ModelSpec::ConformalT2 { .. } => 2,
        }
    }

    /// Replaces the grid resolution of grid models; other models are unchanged.
    pub fn with_resolution(&self, res: usize) -> ModelSpec {
        let mut out = self.clone();
        match &mut out {
            ModelSpec::FlatTorus { resolution, .. }
            | ModelSpec::WarpedT3 { resolution, .. }
            | ModelSpec::ConformalT2 { resolution, .. } => *resolution = res,
            _ => {}
        }
        out
    }

    /// Grid resolution of grid models.
    pub fn resolution(&self) -> Option<usize> {
        match self {
            ModelSpec::FlatTorus { resolution, .. }
            | ModelSpec::WarpedT3 { resolution, .. }
            | ModelSpec::ConformalT2 { resolution, .. } => Some(*resolution),
            _ => None,
        }
    }

    pub fn is_grid(&self) -> bool {
        matches!(
            self,
            ModelSpec::FlatTorus { .. } | ModelSpec::WarpedT3 { .. } | ModelSpec::ConformalT2 { .. }
        )
    }

    /// The metric at `t = 0`.
    pub fn initial_slice(&self) -> Result<Slice> {
        match *self {
            ModelSpec::FlatTorus { n, resolution } => {
                if n < 2 {
                    return Err(Error::InvalidInput("flat torus needs n ≥ 2".into()));
                }
                let mut dims = vec![1; n];
                dims[0] = resolution;
                let grid = Grid::new(dims, vec![2.0 * PI; n])?;
                let metric = vec![DMatrix::identity(n, n); grid.num_points()];
                Slice::new(Space::Grid(grid), metric)
            }
            ModelSpec::RoundSphere { n, radius } => {
                if n < 2 {
                    return Err(Error::InvalidInput("sphere needs n ≥ 2".into()));
                }
                symmetric_slice(&[FactorSpec::Sphere { dim: n, radius }])
            }
            ModelSpec::Product { ref factors } => symmetric_slice(factors),
            ModelSpec::BergerSphere { a, b, c } => {
                let g = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![a, b, c]));
                Slice::new(Space::su2(), vec![g])
            }
            ModelSpec::WarpedT3 {
                a,
                b,
                kf,
                kh,
                resolution,
            } => {
                if a.abs() >= 1.0 || b.abs() >= 1.0 {
                    return Err(Error::InvalidInput("warp amplitudes must be below 1".into()));
                }
                let grid = Grid::new(vec![resolution, 1, 1], vec![2.0 * PI; 3])?;
                let metric = (0..grid.num_points())
                    .map(|p| {
                        let x = grid.coords(p)[0];
                        let (f, h) = warp_functions(a, b, kf, kh, x);
                        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, f * f, h * h]))
                    })
                    .collect();
                Slice::new(Space::Grid(grid), metric)
            }
            ModelSpec::ConformalT2 { a, b, resolution } => {
                let grid = Grid::new(vec![resolution, resolution], vec![2.0 * PI; 2])?;
                let metric = (0..grid.num_points())
                    .map(|p| {
                        let x = grid.coords(p);
                        let u = a * x[0].cos() + b * x[1].sin();
                        DMatrix::identity(2, 2) * (2.0 * u).exp()
                    })
                    .collect();
                Slice::new(Space::Grid(grid), metric)
            }
        }
    }
}

/// `(f, h)` of the warped metric at `x`.
pub fn warp_functions(a: f64, b: f64, kf: u32, kh: u32, x: f64) -> (f64, f64) {
    (1.0 + a * (kf as f64 * x).cos(), 1.0 + b * (kh as f64 * x).sin())
}

fn symmetric_slice(factors: &[FactorSpec]) -> Result<Slice> {
    let mut fs = Vec::new();
    let mut diag = Vec::new();
    for f in factors {
        match *f {
            FactorSpec::Sphere { dim, radius } => {
                if dim < 2 || !(radius > 0.0) {
                    return Err(Error::InvalidInput("sphere factor needs dim ≥ 2, radius > 0".into()));
                }
                fs.push(Factor { dim, curvature: 1.0 });
                diag.extend(std::iter::repeat(radius * radius).take(dim));
            }
            FactorSpec::Flat { dim } => {
                fs.push(Factor { dim, curvature: 0.0 });
                diag.extend(std::iter::repeat(1.0).take(dim));
            }
        }
    }
    if diag.is_empty() {
        return Err(Error::InvalidInput("product needs at least one factor".into()));
    }
    let g = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
    Slice::new(Space::Symmetric { factors: fs }, vec![g])
}

/// `Γ^k_ij` (stored at `[i, j, k]`) of a product of round 2-spheres and flat
/// factors in polar/Cartesian charts. Scale factors do not enter.
pub fn chart_christoffels(factors: &[Factor], x: &[f64]) -> Result<Tensor> {
    let n: usize = factors.iter().map(|f| f.dim).sum();
    let mut g = Tensor::zeros(n, 3);
    let mut start = 0;
    for f in factors {
        if f.curvature != 0.0 {
            if f.dim != 2 {
                return Err(Error::Unsupported("charts only for 2-sphere factors".into()));
            }
            let (t, p) = (start, start + 1);
            let th = x[t];
            g.set(&[p, p, t], -th.sin() * th.cos());
            let cot = th.cos() / th.sin();
            g.set(&[t, p, p], cot);
            g.set(&[p, t, p], cot);
        }
        start += f.dim;
    }
    Ok(g)
}

/// Orthonormal frame at a chart point of a symmetric model, in the chart basis.
pub fn chart_frame(slice: &Slice, x: &[f64]) -> Result<DMatrix<f64>> {
    let Space::Symmetric { factors } = slice.space() else {
        return Err(Error::Unsupported("chart frames exist only on symmetric models".into()));
    };
    let n = slice.dim();
    let g = &slice.metric()[0];
    let mut f = DMatrix::zeros(n, n);
    let mut start = 0;
    for fac in factors {
        let s = g[(start, start)].sqrt();
        for k in start..start + fac.dim {
            f[(k, k)] = 1.0 / s;
        }
        if fac.curvature != 0.0 {
            if fac.dim != 2 {
                return Err(Error::Unsupported("charts only for 2-sphere factors".into()));
            }
            f[(start + 1, start + 1)] /= x[start].sin();
        }
        start += fac.dim;
    }
    Ok(f)
}

/// Writes one row per point: the point index followed by all components.
pub fn write_field_csv<W: Write>(out: W, field: &[Tensor]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let len = field.first().map(|t| t.data().len()).unwrap_or(0);
    let mut header = vec!["point".to_string()];
    header.extend((0..len).map(|k| format!("c{k}")));
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for (p, t) in field.iter().enumerate() {
        let mut row = vec![p.to_string()];
        row.extend(t.data().iter().map(|v| format!("{v:.17e}")));
        w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
