//! Parallel transport around closed loops.

use crate::error::{Error, Result};
use crate::models::chart_christoffels;
use crate::models::slice::{Slice, Space};
use crate::tensor::Tensor;
use nalgebra::DMatrix;
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub enum LoopSpec {
    /// Grid point indices; consecutive points are neighbors and the last equals the first.
    Grid(Vec<usize>),
    /// Chart points of a symmetric model (polar `(θ, φ)` per 2-sphere factor,
    /// Cartesian per flat factor) joined by straight chart segments. The loop
    /// closes up to multiples of `2π` in the `φ` coordinates.
    Chart { points: Vec<Vec<f64>>, substeps: usize },
    /// Successive full orbits `s ↦ exp(s X_a)`, `s ∈ [0, period]`, on a group model.
    Group { axes: Vec<usize>, period: f64, substeps: usize },
}

/// Transports the identity along `dV/ds = −Γ(γ'(s)) V` over `[0, 1]`, with
/// `gamma(s)` returning `Γ^k_ij` at `[i, j, k]` and `vel` the constant `γ'`.
fn transport(
    n: usize,
    vel: &[f64],
    gamma: impl Fn(f64) -> Tensor,
    steps: usize,
    v: DMatrix<f64>,
) -> DMatrix<f64> {
    let generator = |s: f64| {
        let g = gamma(s);
        DMatrix::from_fn(n, n, |k, j| -(0..n).map(|i| g.get(&[i, j, k]) * vel[i]).sum::<f64>())
    };
    let h = 1.0 / steps as f64;
    let mut v = v;
    for step in 0..steps {
        let s = step as f64 * h;
        let (a0, am, a1) = (generator(s), generator(s + 0.5 * h), generator(s + h));
        let k1 = &a0 * &v;
        let k2 = &am * (&v + &k1 * (0.5 * h));
        let k3 = &am * (&v + &k2 * (0.5 * h));
        let k4 = &a1 * (&v + &k3 * h);
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    v
}

/// Holonomy of a loop in orthonormal frame components at its base point.
///
/// `frame` is the orthonormal frame at the base (columns in the `X` or chart basis).
pub fn loop_holonomy(slice: &Slice, lp: &LoopSpec, frame: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = slice.dim();
    let h = match (lp, slice.space()) {
        (LoopSpec::Grid(points), Space::Grid(grid)) => {
            if points.len() < 2 || points.first() != points.last() {
                return Err(Error::InvalidInput("grid loop is not closed".into()));
            }
            let gamma = slice.christoffels();
            let mut v = DMatrix::identity(n, n);
            for w in points.windows(2) {
                let (p, q) = (w[0], w[1]);
                let axis = (0..n)
                    .find_map(|a| {
                        [1isize, -1]
                            .into_iter()
                            .find(|&st| grid.neighbor(p, a, st) == q && grid.dims()[a] > 1)
                            .map(|st| (a, st))
                    })
                    .ok_or_else(|| Error::InvalidInput(format!("points {p} and {q} are not adjacent")))?;
                let mut vel = vec![0.0; n];
                vel[axis.0] = axis.1 as f64 * grid.spacing(axis.0);
                let (g0, g1) = (&gamma[p], &gamma[q]);
                v = transport(n, &vel, |s| &(g0 * (1.0 - s)) + &(g1 * s), 8, v);
            }
            v
        }
        (LoopSpec::Chart { points, substeps }, Space::Symmetric { factors }) => {
            let first = points.first().ok_or_else(|| Error::InvalidInput("empty loop".into()))?;
            let last = points.last().unwrap();
            let mut start = 0;
            for f in factors {
                for k in start..start + f.dim {
                    let d = last[k] - first[k];
                    let periodic = f.curvature != 0.0 && k == start + 1;
                    let off = if periodic { (d / (2.0 * PI)).round() * 2.0 * PI } else { 0.0 };
                    if (d - off).abs() > 1e-12 {
                        return Err(Error::InvalidInput("chart loop is not closed".into()));
                    }
                }
                start += f.dim;
            }
            let mut v = DMatrix::identity(n, n);
            for w in points.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                let vel: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
                let err = std::cell::RefCell::new(None);
                let at = |s: f64| {
                    let x: Vec<f64> = a.iter().zip(&vel).map(|(x, d)| x + s * d).collect();
                    chart_christoffels(factors, &x).unwrap_or_else(|e| {
                        *err.borrow_mut() = Some(e);
                        Tensor::zeros(n, 3)
                    })
                };
                v = transport(n, &vel, at, *substeps, v);
                if let Some(e) = err.into_inner() {
                    return Err(e);
                }
            }
            v
        }
        (LoopSpec::Group { axes, period, substeps }, Space::Group { .. }) => {
            let gamma = slice.christoffels()[0].clone();
            let mut v = DMatrix::identity(n, n);
            for &a in axes {
                if a >= n {
                    return Err(Error::InvalidInput(format!("axis {a} out of range")));
                }
                let mut vel = vec![0.0; n];
                vel[a] = *period;
                v = transport(n, &vel, |_| gamma.clone(), *substeps, v);
            }
            v
        }
        _ => {
            return Err(Error::Unsupported(
                "loop kind does not match the model space".into(),
            ))
        }
    };
    let finv = frame
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("singular frame".into()))?;
    Ok(finv * h * frame)
}

/// Principal logarithm of a rotation not too far from the identity (inverse
/// scaling and squaring with Denman–Beavers square roots).
pub fn log_orthogonal(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = h.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut y = h.clone();
    let mut k = 0;
    while (&y - &id).norm() > 0.25 {
        if k > 40 {
            return Err(Error::Accuracy("matrix logarithm did not converge".into()));
        }
        let (mut a, mut b) = (y.clone(), id.clone());
        for _ in 0..60 {
            let ai = a
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Accuracy("rotation by π has no principal log".into()))?;
            let bi = b.clone().try_inverse().unwrap();
            let na = (&a + bi) * 0.5;
            let nb = (&b + ai) * 0.5;
            let done = (&na - &a).norm() < 1e-15 * na.norm();
            a = na;
            b = nb;
            if done {
                break;
            }
        }
        y = a;
        k += 1;
    }
    let x = &y - &id;
    let mut term = x.clone();
    let mut sum = DMatrix::zeros(n, n);
    for j in 1..60 {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        sum += &term * (sign / j as f64);
        term = &term * &x;
        if term.norm() < 1e-18 {
            break;
        }
    }
    Ok(sum * 2f64.powi(k))
}
