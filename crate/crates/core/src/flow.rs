//! Ricci flow `∂g/∂t = −2Rc` of a model slice, together with the fields
//! carried along it: an orthonormal frame per point evolved by
//! `∂F/∂t = g⁻¹Rc F` (so that `D_t g = 0` in frame components), the projection
//! pair `(P̄, P̂)` evolved by the fiberwise ODE, and an adapted two-form basis.
//!
//! Projections and basis forms are stored in `X` components. Their frame
//! components in the evolved gauge are constant along the exact flow; the
//! numerics only approximate that.

use crate::error::{Error, Result};
use crate::holonomy::{ProjectionPair, Subalgebra};
use crate::models::{lowdin_frame, Slice, Space};
use crate::tensor::{Field, Tensor};
use crate::wedge::{curvature_project, pairs, projector_image, Wedge2Endo};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Method-of-lines RK4 (always used for homogeneous models).
    Rk4Ode,
    /// Forward Euler in time, centered differences in space.
    ExplicitFd,
    /// Euler with the principal part `g^pp ∂_p∂_p` treated implicitly with lagged coefficients.
    SemiImplicitFd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct FlowConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub t_end: f64,
    pub cfl_safety: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            scheme: Scheme::ExplicitFd,
            t_end: 0.05,
            cfl_safety: 0.5,
        }
    }
}

impl FlowConfig {
    /// Largest stable explicit step `cflSafety·h²/(2n·max|g⁻¹|)` on a grid slice.
    pub fn cfl_limit(&self, slice: &Slice) -> Option<f64> {
        let Space::Grid(grid) = slice.space() else {
            return None;
        };
        let h = grid.min_spacing()?;
        let ginv = slice
            .inverse_metric()
            .iter()
            .map(|m| m.amax())
            .fold(0.0, f64::max);
        Some(self.cfl_safety * h * h / (2.0 * slice.dim() as f64 * ginv))
    }

    pub fn validate(&self, slice: &Slice) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::Config(format!("tEnd must be non-negative, got {}", self.t_end)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety < 1.0) {
            return Err(Error::Config("cflSafety must lie in (0, 1)".into()));
        }
        if self.scheme != Scheme::SemiImplicitFd {
            if let Some(limit) = self.cfl_limit(slice) {
                if self.dt > limit {
                    return Err(Error::Config(format!(
                        "dt = {:e} violates the CFL bound {limit:e}",
                        self.dt
                    )));
                }
            }
        }
        Ok(())
    }
}

/// An orthonormal basis `φ^A` of two-forms per point whose first `k` elements span `H`.
///
/// Forms are antisymmetric matrices in `X` components, orthonormal for the
/// full-sum pairing `⟨φ, ψ⟩ = g^ac g^bd φ_ab ψ_cd`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedBasis {
    pub k: usize,
    pub forms: Vec<Vec<DMatrix<f64>>>,
}

/// Frame-component basis adapted to `h`: an orthonormal basis of `h` followed by one of `h^⊥`.
pub fn adapted_frame_basis(h: &Subalgebra) -> Result<Vec<DMatrix<f64>>> {
    let pair = crate::holonomy::projection_pair(h)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Ok(h.basis()
        .iter()
        .cloned()
        .chain(projector_image(&pair.phat))
        .map(|w| w.matrix() * s)
        .collect())
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub slice: Slice,
    /// `D_t`-evolved orthonormal frames, columns in the `X` basis.
    pub frames: Vec<DMatrix<f64>>,
    /// Four-index components of `P̄` and `P̂` in the `X` basis.
    pub pbar: Field,
    pub phat: Field,
    pub basis: Option<AdaptedBasis>,
    /// Largest `|FᵀgF − Id|` removed by the last re-orthonormalization.
    pub gauge_drift: f64,
    /// Largest Gram defect of the adapted basis removed after the last step
    /// (first-order schemes only; RK4 runs leave the basis untouched).
    pub basis_drift: f64,
    riemann: Field,
    ricci: Vec<DMatrix<f64>>,
}

fn to_x(t: &Tensor, frame: &DMatrix<f64>) -> Tensor {
    t.transform(&frame.clone().try_inverse().expect("frame invertible"))
}

fn matrix_to_x(m: &DMatrix<f64>, frame: &DMatrix<f64>) -> DMatrix<f64> {
    let fi = frame.clone().try_inverse().expect("frame invertible");
    fi.transpose() * m * fi
}

impl FlowState {
    /// Starts at `t = 0` with Löwdin frames and `H` given in those frame components at every point.
    pub fn new(slice: Slice, h: &Subalgebra) -> Result<Self> {
        if h.n() != slice.dim() {
            return Err(Error::InvalidInput("subalgebra dimension does not match the model".into()));
        }
        let pair = crate::holonomy::projection_pair(h)?;
        let frames = slice.lowdin_frames();
        let (pb, ph) = (pair.pbar.four_index(), pair.phat.four_index());
        let pbar = frames.iter().map(|f| to_x(&pb, f)).collect();
        let phat = frames.iter().map(|f| to_x(&ph, f)).collect();
        let fb = adapted_frame_basis(h)?;
        let forms = frames
            .iter()
            .map(|f| fb.iter().map(|m| matrix_to_x(m, f)).collect())
            .collect();
        let riemann = flow_curvature(&slice);
        let ricci = ricci_from(&slice, &riemann);
        Ok(Self {
            t: 0.0,
            slice,
            frames,
            pbar,
            phat,
            basis: Some(AdaptedBasis { k: h.dim(), forms }),
            gauge_drift: 0.0,
            basis_drift: 0.0,
            riemann,
            ricci,
        })
    }

    pub fn dim(&self) -> usize {
        self.slice.dim()
    }

    pub fn num_points(&self) -> usize {
        self.slice.num_points()
    }

    pub fn ricci_x(&self) -> &[DMatrix<f64>] {
        &self.ricci
    }

    pub fn riemann_x(&self) -> &[Tensor] {
        &self.riemann
    }

    /// Curvature in the evolved frames.
    pub fn curvature(&self) -> Field {
        self.slice.to_frame(&self.riemann, &self.frames)
    }

    pub fn pbar_frame(&self) -> Field {
        self.slice.to_frame(&self.pbar, &self.frames)
    }

    pub fn phat_frame(&self) -> Field {
        self.slice.to_frame(&self.phat, &self.frames)
    }

    /// Projection pairs in the evolved frames.
    pub fn projections(&self) -> Vec<ProjectionPair> {
        self.pbar_frame()
            .iter()
            .zip(self.phat_frame())
            .map(|(b, h)| ProjectionPair {
                pbar: Wedge2Endo::from_four_index_unchecked(b),
                phat: Wedge2Endo::from_four_index_unchecked(&h),
            })
            .collect()
    }

    /// Adapted basis forms in the evolved frames.
    pub fn basis_frame(&self) -> Option<Vec<Vec<DMatrix<f64>>>> {
        self.basis.as_ref().map(|b| {
            b.forms
                .iter()
                .zip(&self.frames)
                .map(|(fs, f)| fs.iter().map(|m| f.transpose() * m * f).collect())
                .collect()
        })
    }

    pub fn frame_defect(&self) -> f64 {
        self.slice.frame_defect(&self.frames)
    }

    /// Largest `|⟨φ^A, φ^B⟩ − δ^AB|` over points.
    pub fn basis_orthonormality_defect(&self) -> f64 {
        let Some(bf) = self.basis_frame() else {
            return 0.0;
        };
        let mut worst: f64 = 0.0;
        for fs in &bf {
            for (a, x) in fs.iter().enumerate() {
                for (b, y) in fs.iter().enumerate() {
                    let ip = x.component_mul(y).sum();
                    worst = worst.max((ip - if a == b { 1.0 } else { 0.0 }).abs());
                }
            }
        }
        worst
    }

    /// Largest `|P̂φ^A|` for `A < k` and `|P̄φ^A|` for `A ≥ k`, using the evolved projections.
    pub fn basis_block_defect(&self) -> f64 {
        let (Some(bf), Some(b)) = (self.basis_frame(), self.basis.as_ref()) else {
            return 0.0;
        };
        let mut worst: f64 = 0.0;
        for (fs, pair) in bf.iter().zip(self.projections()) {
            for (a, m) in fs.iter().enumerate() {
                let w = crate::wedge::TwoForm::from_antisymmetric_part(m);
                let other = if a < b.k { &pair.phat } else { &pair.pbar };
                worst = worst.max(other.apply(&w).norm() * std::f64::consts::SQRT_2);
            }
        }
        worst
    }

    /// `Σ_{A<k} φ^A ⊗ φ^A` in frame components, to compare with the evolved `P̄`.
    pub fn reconstructed_pbar(&self) -> Option<Field> {
        let b = self.basis.as_ref()?;
        let n = self.dim();
        Some(
            self.basis_frame()?
                .iter()
                .map(|fs| {
                    Tensor::from_fn(n, 4, |ix| {
                        fs[..b.k]
                            .iter()
                            .map(|m| m[(ix[0], ix[1])] * m[(ix[2], ix[3])])
                            .sum()
                    })
                })
                .collect(),
        )
    }
}

/// Discrete curvature projected onto algebraic curvature tensors. Centered
/// differences break pair symmetry at `O(h²)`; the two-form evolution only
/// preserves inner products for exactly symmetric curvature.
pub fn flow_curvature(slice: &Slice) -> Field {
    slice.riemann_x().iter().map(curvature_project).collect()
}

fn ricci_from(slice: &Slice, riemann: &[Tensor]) -> Vec<DMatrix<f64>> {
    riemann
        .iter()
        .zip(slice.inverse_metric())
        .map(|(r, gi)| r.trace(1, 2, &gi).to_matrix())
        .collect()
}

/// Metric, Ricci-like driver `S` (so that `ġ = −2S`) and curvature at one RK stage.
#[derive(Debug, Clone)]
struct Stage {
    g: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
    r: Field,
}

/// Everything the fiberwise ODEs need over one step: stages at `τ = 0, ½, ½, 1`.
#[derive(Debug, Clone)]
pub struct StepDrivers {
    pub dt: f64,
    stages: [Stage; 4],
}

fn singular(t: f64, e: Error) -> Error {
    match e {
        Error::InvalidMetric(reason) => Error::FlowSingularity { t, reason },
        other => other,
    }
}

fn rebuild(slice: &Slice, g: Vec<DMatrix<f64>>, t: f64) -> Result<Slice> {
    Slice::new(slice.space().clone(), g).map_err(|e| singular(t, e))
}

fn axpy_metric(g: &[DMatrix<f64>], a: f64, k: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    g.iter().zip(k).map(|(x, y)| x + y * a).collect()
}

fn symmetrize(g: Vec<DMatrix<f64>>) -> Vec<DMatrix<f64>> {
    g.into_iter().map(|m| (&m + m.transpose()) * 0.5).collect()
}

/// Advances the metric by one step, returning the new slice and the stage data.
fn advance_metric(
    slice: &Slice,
    riemann: &[Tensor],
    ricci: &[DMatrix<f64>],
    t: f64,
    cfg: &FlowConfig,
) -> Result<(Slice, StepDrivers)> {
    let dt = cfg.dt;
    let g0 = slice.metric().to_vec();
    let rk4 = cfg.scheme == Scheme::Rk4Ode || !matches!(slice.space(), Space::Grid(_));
    let stage0 = Stage {
        g: g0.clone(),
        s: ricci.to_vec(),
        r: riemann.to_vec(),
    };
    if rk4 {
        let eval = |g: Vec<DMatrix<f64>>, tau: f64| -> Result<Stage> {
            let sl = rebuild(slice, g.clone(), t + tau * dt)?;
            let r = flow_curvature(&sl);
            let s = ricci_from(&sl, &r);
            Ok(Stage { g, s, r })
        };
        let st1 = eval(axpy_metric(&g0, -dt, &stage0.s), 0.5)?;
        let st2 = eval(axpy_metric(&g0, -dt, &st1.s), 0.5)?;
        let st3 = eval(axpy_metric(&g0, -2.0 * dt, &st2.s), 1.0)?;
        let g1: Vec<DMatrix<f64>> = (0..g0.len())
            .map(|p| {
                &g0[p]
                    - (&stage0.s[p] + &st1.s[p] * 2.0 + &st2.s[p] * 2.0 + &st3.s[p]) * (dt / 3.0)
            })
            .collect();
        let next = rebuild(slice, symmetrize(g1), t + dt)?;
        return Ok((
            next,
            StepDrivers {
                dt,
                stages: [stage0, st1, st2, st3],
            },
        ));
    }
    let g1 = match cfg.scheme {
        Scheme::SemiImplicitFd => semi_implicit(slice, ricci, dt)?,
        _ => axpy_metric(&g0, -2.0 * dt, ricci),
    };
    let g1 = symmetrize(g1);
    let next = rebuild(slice, g1.clone(), t + dt)?;
    // linear metric path; S = −½ġ keeps the gauge and projection ODEs exact along it
    let s: Vec<DMatrix<f64>> = g0.iter().zip(&g1).map(|(a, b)| (a - b) * (0.5 / dt)).collect();
    let at = |tau: f64| Stage {
        g: g0.iter().zip(&g1).map(|(a, b)| a * (1.0 - tau) + b * tau).collect(),
        s: s.clone(),
        r: riemann.to_vec(),
    };
    Ok((
        next,
        StepDrivers {
            dt,
            stages: [at(0.0), at(0.5), at(0.5), at(1.0)],
        },
    ))
}

/// Solves `(I − dt·L)g₁ = g₀ − 2dt·Rc − dt·L g₀` with `L = g₀^pp ∂_p∂_p` by Jacobi iteration.
fn semi_implicit(slice: &Slice, ricci: &[DMatrix<f64>], dt: f64) -> Result<Vec<DMatrix<f64>>> {
    let Space::Grid(grid) = slice.space() else {
        return Err(Error::Unsupported("semi-implicit scheme needs a grid model".into()));
    };
    let g0 = slice.metric();
    let ginv = slice.inverse_metric();
    let axes: Vec<usize> = (0..grid.dim()).filter(|&a| grid.dims()[a] > 1).collect();
    let weights: Vec<Vec<f64>> = (0..g0.len())
        .map(|p| {
            axes.iter()
                .map(|&a| dt * ginv[p][(a, a)] / grid.spacing(a).powi(2))
                .collect()
        })
        .collect();
    let lap = |u: &[DMatrix<f64>], p: usize| -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(u[p].nrows(), u[p].ncols());
        for (w, &a) in weights[p].iter().zip(&axes) {
            acc += (&u[grid.neighbor(p, a, 1)] + &u[grid.neighbor(p, a, -1)] - &u[p] * 2.0) * *w;
        }
        acc
    };
    let rhs: Vec<DMatrix<f64>> = (0..g0.len())
        .map(|p| &g0[p] - &ricci[p] * (2.0 * dt) - lap(g0, p))
        .collect();
    let mut u = g0.to_vec();
    for _ in 0..10_000 {
        let mut change: f64 = 0.0;
        let next: Vec<DMatrix<f64>> = (0..u.len())
            .map(|p| {
                let diag = 1.0 + 2.0 * weights[p].iter().sum::<f64>();
                let mut off = DMatrix::zeros(u[p].nrows(), u[p].ncols());
                for (w, &a) in weights[p].iter().zip(&axes) {
                    off += (&u[grid.neighbor(p, a, 1)] + &u[grid.neighbor(p, a, -1)]) * *w;
                }
                (&rhs[p] + off) / diag
            })
            .collect();
        for (a, b) in next.iter().zip(&u) {
            change = change.max((a - b).amax());
        }
        u = next;
        if change < 1e-15 {
            return Ok(u);
        }
    }
    Err(Error::IntegrationAccuracy("semi-implicit solve did not converge".into()))
}

/// `M = S g⁻¹` with `M[a, p] = S_aq g^qp`.
fn mixed(stage: &Stage, p: usize) -> DMatrix<f64> {
    &stage.s[p] * stage.g[p].clone().try_inverse().expect("SPD stage metric")
}

fn rk4<T: Clone>(
    y: &T,
    dt: f64,
    stages: [&Stage; 4],
    f: impl Fn(&T, &Stage) -> T,
    axpy: impl Fn(&T, f64, &T) -> T,
) -> T {
    let k1 = f(y, stages[0]);
    let k2 = f(&axpy(y, 0.5 * dt, &k1), stages[1]);
    let k3 = f(&axpy(y, 0.5 * dt, &k2), stages[2]);
    let k4 = f(&axpy(y, dt, &k3), stages[3]);
    let s = axpy(&axpy(&k1, 2.0, &k2), 2.0, &k3);
    let s = axpy(&s, 1.0, &k4);
    axpy(y, dt / 6.0, &s)
}

fn ordered(d: &StepDrivers, forward: bool) -> ([&Stage; 4], f64) {
    let s = &d.stages;
    if forward {
        ([&s[0], &s[1], &s[2], &s[3]], d.dt)
    } else {
        ([&s[3], &s[2], &s[1], &s[0]], -d.dt)
    }
}

/// Integrates `∂_t P_{a..} = −Σ_slots R_a^p P_{..p..}` at point `p` over one step,
/// forward or backward along the recorded metric path.
pub fn evolve_projection_ode(p: usize, tensor: &Tensor, drivers: &StepDrivers, forward: bool) -> Tensor {
    let (stages, dt) = ordered(drivers, forward);
    rk4(
        tensor,
        dt,
        stages,
        |y, st| y.slot_action(&mixed(st, p)).scale(-1.0),
        |a, s, b| {
            let mut out = a.clone();
            out.axpy(s, b);
            out
        },
    )
}

fn evolve_frame(p: usize, f: &DMatrix<f64>, drivers: &StepDrivers) -> DMatrix<f64> {
    let (stages, dt) = ordered(drivers, true);
    rk4(
        f,
        dt,
        stages,
        |y, st| mixed(st, p).transpose() * y,
        |a, s, b| a + b * s,
    )
}

/// `L(φ) − Rm(φ)` for an orthonormal-frame basis `φ^A` and frame curvature `r`.
///
/// `L(φ^A) = M_BC [[φ^A, φ^C], φ^B]` with `M_AB = −R_abcd φ^A_ab φ^B_cd`.
pub fn adapted_basis_rhs(r: &Tensor, phi: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let n = r.dim();
    let m = phi.len();
    if m != n * (n - 1) / 2 {
        return Err(Error::InvalidState("adapted basis must span all two-forms".into()));
    }
    let gram = DMatrix::from_fn(m, m, |a, b| phi[a].component_mul(&phi[b]).sum());
    let defect = (&gram - DMatrix::identity(m, m)).amax();
    if defect > 1e-3 {
        return Err(Error::InvalidState(format!(
            "adapted basis not orthonormal (defect {defect:e})"
        )));
    }
    let mm = DMatrix::from_fn(m, m, |a, b| {
        let mut s = 0.0;
        for (i, j) in pairs(n) {
            for (k, l) in pairs(n) {
                s += r.get(&[i, j, k, l]) * phi[a][(i, j)] * phi[b][(k, l)];
            }
        }
        -4.0 * s
    });
    let comm = |x: &DMatrix<f64>, y: &DMatrix<f64>| x * y - y * x;
    Ok(phi
        .iter()
        .map(|pa| {
            let mut l = DMatrix::zeros(n, n);
            for b in 0..m {
                for c in 0..m {
                    if mm[(b, c)] != 0.0 {
                        l += comm(&comm(pa, &phi[c]), &phi[b]) * mm[(b, c)];
                    }
                }
            }
            // Rm(φ)_cd = −R_abcd φ_ab
            let rm = DMatrix::from_fn(n, n, |c, d| {
                -(0..n)
                    .flat_map(|a| (0..n).map(move |b| (a, b)))
                    .map(|(a, b)| r.get(&[a, b, c, d]) * pa[(a, b)])
                    .sum::<f64>()
            });
            l - rm
        })
        .collect())
}

fn evolve_basis(p: usize, forms: &[DMatrix<f64>], drivers: &StepDrivers) -> Result<Vec<DMatrix<f64>>> {
    let (stages, dt) = ordered(drivers, true);
    let err = std::cell::RefCell::new(None);
    let out = rk4(
        &forms.to_vec(),
        dt,
        stages,
        |y: &Vec<DMatrix<f64>>, st| {
            // evaluate in the Löwdin frame of the stage metric, return X components
            let fl = lowdin_frame(&st.g[p]);
            let fi = fl.clone().try_inverse().expect("frame invertible");
            let phi: Vec<DMatrix<f64>> = y.iter().map(|m| fl.transpose() * m * &fl).collect();
            match adapted_basis_rhs(&st.r[p].transform(&fl), &phi) {
                Ok(v) => v.iter().map(|m| fi.transpose() * m * &fi).collect(),
                Err(e) => {
                    *err.borrow_mut() = Some(e);
                    y.iter().map(|m| m * 0.0).collect()
                }
            }
        },
        |a, s, b| a.iter().zip(b).map(|(x, y)| x + y * s).collect(),
    );
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Re-orthonormalizes `F ← F (FᵀgF)^{-1/2}`, returning the removed defect.
fn reorthonormalize(f: &DMatrix<f64>, g: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let n = f.nrows();
    let gram = f.transpose() * g * f;
    let drift = (&gram - DMatrix::identity(n, n)).amax();
    (f * lowdin_frame(&gram), drift)
}

/// Symmetric (Löwdin) orthonormalization of two-forms for the full-sum pairing of `g`.
///
/// Forward Euler moves the metric along a straight line while the curvature
/// driving the forms is frozen at the step start, so the Ricci trace of that
/// curvature along the path differs from `−½ġ` at first order and inner
/// products drift at `O(dt)`.
fn reorthonormalize_forms(forms: &[DMatrix<f64>], g: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, f64) {
    let gi = g.clone().try_inverse().expect("SPD metric");
    let raised: Vec<DMatrix<f64>> = forms.iter().map(|m| &gi * m * &gi).collect();
    let k = forms.len();
    let gram = DMatrix::from_fn(k, k, |a, b| forms[a].component_mul(&raised[b]).sum());
    let drift = (&gram - DMatrix::identity(k, k)).amax();
    let w = lowdin_frame(&gram);
    let out = (0..k)
        .map(|a| {
            let mut m = DMatrix::zeros(g.nrows(), g.ncols());
            for b in 0..k {
                m += &forms[b] * w[(b, a)];
            }
            m
        })
        .collect();
    (out, drift)
}

/// Tolerance on projection invariants before a step is rejected.
pub const PROJECTION_DRIFT_LIMIT: f64 = 1e-6;

/// Advances metric and frames only (the projection and basis fields are carried unchanged).
pub fn step_metric(state: &FlowState, cfg: &FlowConfig) -> Result<(FlowState, StepDrivers)> {
    cfg.validate(&state.slice)?;
    let (slice, drivers) = advance_metric(&state.slice, &state.riemann, &state.ricci, state.t, cfg)?;
    let mut drift: f64 = 0.0;
    let frames = state
        .frames
        .iter()
        .enumerate()
        .map(|(p, f)| {
            let (f, d) = reorthonormalize(&evolve_frame(p, f, &drivers), &slice.metric()[p]);
            drift = drift.max(d);
            f
        })
        .collect();
    let riemann = flow_curvature(&slice);
    let ricci = ricci_from(&slice, &riemann);
    Ok((
        FlowState {
            t: state.t + cfg.dt,
            slice,
            frames,
            pbar: state.pbar.clone(),
            phat: state.phat.clone(),
            basis: state.basis.clone(),
            gauge_drift: drift,
            basis_drift: 0.0,
            riemann,
            ricci,
        },
        drivers,
    ))
}

/// One full step: metric, frames, projections and adapted basis.
pub fn step(state: &FlowState, cfg: &FlowConfig) -> Result<FlowState> {
    let (mut next, drivers) = step_metric(state, cfg)?;
    next.pbar = state
        .pbar
        .iter()
        .enumerate()
        .map(|(p, t)| evolve_projection_ode(p, t, &drivers, true))
        .collect();
    next.phat = state
        .phat
        .iter()
        .enumerate()
        .map(|(p, t)| evolve_projection_ode(p, t, &drivers, true))
        .collect();
    if let Some(b) = &state.basis {
        let forms = b
            .forms
            .iter()
            .enumerate()
            .map(|(p, fs)| evolve_basis(p, fs, &drivers))
            .collect::<Result<Vec<_>>>()?;
        let first_order = cfg.scheme != Scheme::Rk4Ode && matches!(state.slice.space(), Space::Grid(_));
        let forms = if first_order {
            let mut worst: f64 = 0.0;
            let fixed = forms
                .iter()
                .zip(next.slice.metric())
                .map(|(fs, g)| {
                    let (f, d) = reorthonormalize_forms(fs, g);
                    worst = worst.max(d);
                    f
                })
                .collect();
            next.basis_drift = worst;
            fixed
        } else {
            forms
        };
        next.basis = Some(AdaptedBasis { k: b.k, forms });
    }
    let defect = next
        .projections()
        .iter()
        .map(ProjectionPair::invariant_defect)
        .fold(0.0, f64::max);
    if defect > PROJECTION_DRIFT_LIMIT {
        return Err(Error::IntegrationAccuracy(format!(
            "projection invariants drifted to {defect:e} at t = {}",
            next.t
        )));
    }
    Ok(next)
}

/// Number of steps of size `cfg.dt` needed to reach `cfg.t_end`.
pub fn step_count(cfg: &FlowConfig) -> usize {
    (cfg.t_end / cfg.dt - 1e-9).ceil().max(0.0) as usize
}

/// `cfg` with the step shortened so that it does not pass `t_end`.
fn last_step(cfg: &FlowConfig, t: f64) -> FlowConfig {
    let mut c = cfg.clone();
    let rest = cfg.t_end - t;
    if rest < cfg.dt && rest > 0.0 {
        c.dt = rest;
    }
    c
}

/// Runs to `t_end`, keeping every `every`-th state (and the last).
pub fn run(initial: FlowState, cfg: &FlowConfig, every: usize) -> Result<Vec<FlowState>> {
    let every = every.max(1);
    let steps = step_count(cfg);
    let mut out = vec![initial];
    let mut cur = out[0].clone();
    for k in 1..=steps {
        cur = step(&cur, &last_step(cfg, cur.t))?;
        if k % every == 0 || k == steps {
            out.push(cur.clone());
        }
    }
    Ok(out)
}

/// Heat-extended `P̂` alongside the ODE-extended one.
#[derive(Debug, Clone)]
pub struct ParabolicSample {
    pub t: f64,
    /// Frame components of the heat-extended `P̂`.
    pub phat_heat: Field,
    /// Frame components of the ODE-extended `P̂`.
    pub phat_ode: Field,
    pub max_nabla: f64,
    pub projection_defect: f64,
    /// `max_M (L + |P̂|²)|∇P̂|²`.
    pub bernstein: f64,
}

/// Solves `(D_t − Δ)P̂ = 0` in the evolved frames by explicit Euler, alongside the flow.
///
/// Returns a sample every `every` steps. `L = 1 + 2 sup|P̂(0)|²` in the Bernstein quantity.
pub fn parabolic_extend_projection(
    initial: &FlowState,
    cfg: &FlowConfig,
    every: usize,
    parallel_tol: f64,
) -> Result<Vec<ParabolicSample>> {
    if !matches!(initial.slice.space(), Space::Grid(_)) {
        return Err(Error::Unsupported("parabolic extension needs a grid model".into()));
    }
    if cfg.scheme == Scheme::SemiImplicitFd {
        return Err(Error::Config("parabolic extension is explicit; choose explicit-fd or rk4-ode".into()));
    }
    cfg.validate(&initial.slice)?;
    let ph0 = initial.phat_frame();
    let a0 = initial.slice.nabla(&initial.frames, &ph0);
    let a0max = a0.iter().map(Tensor::max_abs).fold(0.0, f64::max);
    if a0max > parallel_tol {
        return Err(Error::PreconditionViolated(format!(
            "initial P̂ is not parallel (|∇P̂| = {a0max:e})"
        )));
    }
    let l = 1.0 + 2.0 * ph0.iter().map(Tensor::norm_sq).fold(0.0, f64::max);
    let sample = |st: &FlowState, heat: &Field| {
        let a = st.slice.nabla(&st.frames, heat);
        let bern = heat
            .iter()
            .zip(&a)
            .map(|(p, a)| (l + p.norm_sq()) * a.norm_sq())
            .fold(0.0, f64::max);
        let defect = heat
            .iter()
            .map(|h| {
                let e = Wedge2Endo::from_four_index_unchecked(h);
                e.compose(&e).sub(&e).norm().max(e.symmetry_defect())
            })
            .fold(0.0, f64::max);
        ParabolicSample {
            t: st.t,
            phat_heat: heat.clone(),
            phat_ode: st.phat_frame(),
            max_nabla: a.iter().map(Tensor::max_abs).fold(0.0, f64::max),
            projection_defect: defect,
            bernstein: bern,
        }
    };
    let every = every.max(1);
    let steps = step_count(cfg);
    let mut cur = initial.clone();
    let mut heat = ph0;
    let mut out = vec![sample(&cur, &heat)];
    for k in 1..=steps {
        let c = last_step(cfg, cur.t);
        let lap = cur.slice.laplacian(&cur.frames, &heat);
        for (h, d) in heat.iter_mut().zip(&lap) {
            h.axpy(c.dt, d);
        }
        cur = step(&cur, &c)?;
        if k % every == 0 || k == steps {
            out.push(sample(&cur, &heat));
        }
    }
    Ok(out)
}
