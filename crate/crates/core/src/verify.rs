//! Numerical verification along a flow: residuals of the evolution equations
//! for the projected curvature system, the frame-bundle commutators, the
//! differential inequalities, and the holonomy preservation experiment.
//!
//! Everything is evaluated in frame components in the `D_t` gauge carried by
//! [`FlowState`], so `D_t` is a difference quotient of components between two
//! consecutive states.

pub mod commutators;
pub mod equations;
pub mod experiment;
pub mod identities;
pub mod inequalities;
pub mod scenario;

pub use commutators::{check_commutators, Commutator, CommutatorReport};
pub use equations::Equation;
pub use experiment::{holonomy_preservation_experiment, HolonomyRecord, HolonomyRun};
pub use identities::{algebra_identities, reaction_identities, IdentityReport};
pub use inequalities::{check_inequalities, InequalityReport};
pub use scenario::{builtin_scenario, builtin_scenarios, HolonomySpec, Scenario};

use crate::error::{Error, Result};
use crate::flow::{self, FlowConfig, FlowState};
use crate::holonomy::Subalgebra;
use crate::models::{ModelSpec, Slice};
use crate::tensor::{field_sup, Field, Tensor};
use crate::wedge::{compose_four, ricci_of};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Frame defect above which a state is not trusted to be in the `D_t` gauge.
pub const GAUGE_TOL: f64 = 1e-6;

/// The fields of the projected system at one time, in frame components.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub t: f64,
    pub slice: Slice,
    pub frames: Vec<DMatrix<f64>>,
    /// `R_abcd`.
    pub r: Field,
    /// `T = ∇R`, derivative slot first.
    pub nabla_r: Field,
    /// `∇T`.
    pub nabla2_r: Field,
    pub ricci: Vec<DMatrix<f64>>,
    pub pbar: Field,
    pub phat: Field,
    /// `A = ∇P̂`.
    pub a: Field,
    /// `B = ∇∇P̂`.
    pub b: Field,
    /// `R̂_ijkl = P̂_ijab R_ablk`, `R̄` likewise with `P̄`.
    pub rhat: Field,
    pub rbar: Field,
    /// `T̂_mijkl = P̂_ijab T_mablk`, `T̄` likewise.
    pub that: Field,
    pub tbar: Field,
    pub nabla_that: Field,
}

/// Applies `f` to each direction slice `U_m····` of a rank-5 field value.
fn per_direction(u: &Tensor, f: impl Fn(&Tensor) -> Tensor) -> Tensor {
    let n = u.dim();
    let parts: Vec<Tensor> = (0..n)
        .map(|m| f(&Tensor::from_fn(n, 4, |ix| u.get(&[m, ix[0], ix[1], ix[2], ix[3]]))))
        .collect();
    Tensor::from_fn(n, 5, |ix| parts[ix[0]].get(&ix[1..]))
}

/// `P_ijab V_ablk` for a four-index `V`.
fn hat(v: &Tensor, p: &Tensor) -> Tensor {
    compose_four(&v.scale(-1.0), p)
}

impl SystemState {
    pub fn from_flow(state: &FlowState) -> Result<Self> {
        let defect = state.frame_defect();
        if defect > GAUGE_TOL {
            return Err(Error::GaugeDrift {
                drift: defect,
                limit: GAUGE_TOL,
            });
        }
        let slice = state.slice.clone();
        let frames = state.frames.clone();
        let r = state.curvature();
        let nabla_r = slice.nabla(&frames, &r);
        let nabla2_r = slice.nabla(&frames, &nabla_r);
        let pbar = state.pbar_frame();
        let phat = state.phat_frame();
        let a = slice.nabla(&frames, &phat);
        let b = slice.nabla(&frames, &a);
        let rhat: Field = r.iter().zip(&phat).map(|(r, p)| hat(r, p)).collect();
        let rbar: Field = r.iter().zip(&pbar).map(|(r, p)| hat(r, p)).collect();
        let that: Field = nabla_r
            .iter()
            .zip(&phat)
            .map(|(t, p)| per_direction(t, |tm| hat(tm, p)))
            .collect();
        let tbar: Field = nabla_r
            .iter()
            .zip(&pbar)
            .map(|(t, p)| per_direction(t, |tm| hat(tm, p)))
            .collect();
        let nabla_that = slice.nabla(&frames, &that);
        let ricci = r.iter().map(ricci_of).collect();
        Ok(Self {
            t: state.t,
            slice,
            frames,
            r,
            nabla_r,
            nabla2_r,
            ricci,
            pbar,
            phat,
            a,
            b,
            rhat,
            rbar,
            that,
            tbar,
            nabla_that,
        })
    }

    pub fn dim(&self) -> usize {
        self.slice.dim()
    }

    pub fn num_points(&self) -> usize {
        self.r.len()
    }

    pub fn laplacian(&self, field: &[Tensor]) -> Field {
        self.slice.laplacian(&self.frames, field)
    }

    pub fn nabla(&self, field: &[Tensor]) -> Field {
        self.slice.nabla(&self.frames, field)
    }

    /// `|X|² = |R̂|² + |T̂|²` per point.
    pub fn x_norm_sq(&self) -> Vec<f64> {
        (0..self.num_points())
            .map(|p| self.rhat[p].norm_sq() + self.that[p].norm_sq())
            .collect()
    }

    /// `|Y|² = |A|² + |B|²` per point.
    pub fn y_norm_sq(&self) -> Vec<f64> {
        (0..self.num_points())
            .map(|p| self.a[p].norm_sq() + self.b[p].norm_sq())
            .collect()
    }

    /// `sup|Rm∘P̂|`, which is `sup|R̂|`.
    pub fn sup_rhat(&self) -> f64 {
        field_sup(&self.rhat)
    }
}

fn lin(a: f64, x: &[Tensor], b: f64, y: &[Tensor]) -> Field {
    x.iter().zip(y).map(|(u, v)| &u.scale(a) + &v.scale(b)).collect()
}

/// Residual of one evolution equation between two consecutive states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Residual {
    /// `sup_p |D_t U − ΔU − RHS|` (no `ΔU` for the transport equations), with
    /// `ΔU` and the right side averaged over the two states.
    pub sup: f64,
    /// `sup|U|`.
    pub field_sup: f64,
    /// `sup|RHS|`.
    pub rhs_sup: f64,
    /// `max_p |RHS| / (|X|² + |Y|²)^{1/2}`, with `0/0 = 0`.
    pub c_estimate: f64,
}

/// Evaluates `eq` between consecutive states `s0` and `s1` (`s1.t > s0.t`).
pub fn evolution_residual(eq: Equation, s0: &SystemState, s1: &SystemState) -> Result<Residual> {
    let dt = s1.t - s0.t;
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("states must be strictly increasing in time".into()));
    }
    if s0.num_points() != s1.num_points() {
        return Err(Error::InvalidInput("states live on different grids".into()));
    }
    let (u0, u1) = (eq.field(s0), eq.field(s1));
    let lap = if eq.has_laplacian() {
        lin(0.5, &s0.laplacian(u0), 0.5, &s1.laplacian(u1))
    } else {
        u0.iter().map(|u| Tensor::zeros(u.dim(), u.rank())).collect()
    };
    let rhs0 = eq.rhs(s0);
    let rhs = lin(0.5, &rhs0, 0.5, &eq.rhs(s1));
    let dtu = lin(1.0 / dt, u1, -1.0 / dt, u0);
    let res = lin(1.0, &lin(1.0, &dtu, -1.0, &lap), -1.0, &rhs);
    let (x2, y2) = (s0.x_norm_sq(), s0.y_norm_sq());
    let c_estimate = rhs0
        .iter()
        .enumerate()
        .map(|(p, v)| ratio(v.norm(), (x2[p] + y2[p]).sqrt()))
        .fold(0.0, f64::max);
    Ok(Residual {
        sup: field_sup(&res),
        field_sup: field_sup(u0).max(field_sup(u1)),
        rhs_sup: field_sup(&rhs),
        c_estimate,
    })
}

/// `num/den` with `0/0 = 0`; a nonzero numerator over a vanishing denominator is infinite.
pub(crate) fn ratio(num: f64, den: f64) -> f64 {
    const TINY: f64 = 1e-300;
    if num <= TINY {
        0.0
    } else if den <= TINY {
        f64::INFINITY
    } else {
        num / den
    }
}

/// One grid resolution and time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Level {
    pub resolution: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelResidual {
    pub resolution: usize,
    pub dt: f64,
    pub residual: Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResidualReport {
    pub equation: Equation,
    /// Residual at the finest level.
    pub residual_sup: f64,
    pub field_sup: f64,
    pub c_estimate: f64,
    /// `log(r_coarse/r_fine) / log(h_coarse/h_fine)`; absent without spatial refinement
    /// or when the residual is at round-off.
    pub order_space: Option<f64>,
    /// `log(r_coarse/r_fine) / log(dt_coarse/dt_fine)`.
    pub order_time: Option<f64>,
    pub levels: Vec<LevelResidual>,
    pub pass: bool,
}

/// Thresholds for a refinement study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ResidualTolerance {
    /// Bound on the finest residual relative to `max(1, sup|RHS|)`.
    pub residual: f64,
    pub min_order_space: f64,
    pub min_order_time: f64,
    /// Residuals below this are round-off and carry no order.
    pub exact: f64,
}

impl Default for ResidualTolerance {
    fn default() -> Self {
        Self {
            residual: 0.05,
            min_order_space: 1.8,
            min_order_time: 0.9,
            exact: 1e-8,
        }
    }
}

/// The states after `steps` and `steps + 1` steps of the flow at `level`.
pub fn state_pair(
    model: &ModelSpec,
    h: &Subalgebra,
    cfg: &FlowConfig,
    level: Level,
    steps: usize,
) -> Result<(SystemState, SystemState)> {
    let slice = model.with_resolution(level.resolution).initial_slice()?;
    let cfg = FlowConfig {
        dt: level.dt,
        ..cfg.clone()
    };
    cfg.validate(&slice)?;
    let mut state = FlowState::new(slice, h)?;
    for _ in 0..steps {
        state = flow::step(&state, &cfg)?;
    }
    let next = flow::step(&state, &cfg)?;
    Ok((SystemState::from_flow(&state)?, SystemState::from_flow(&next)?))
}

fn order(coarse: f64, fine: f64, scale: f64) -> Option<f64> {
    if scale <= 1.0 + 1e-12 || !(fine > 0.0) {
        return None;
    }
    Some((coarse / fine).ln() / scale.ln())
}

/// Orders from the last two of `(resolution, dt, residual)` levels.
pub(crate) fn orders(levels: &[(usize, f64, f64)], tol: &ResidualTolerance) -> (Option<f64>, Option<f64>) {
    match levels {
        [.., (n0, dt0, r0), (n1, dt1, r1)] if *r1 > tol.exact => (
            order(*r0, *r1, *n1 as f64 / *n0 as f64),
            order(*r0, *r1, dt0 / dt1),
        ),
        _ => (None, None),
    }
}

pub(crate) fn orders_pass(o: (Option<f64>, Option<f64>), tol: &ResidualTolerance) -> bool {
    o.0.map_or(true, |x| x >= tol.min_order_space) && o.1.map_or(true, |x| x >= tol.min_order_time)
}

fn report(eq: Equation, levels: Vec<LevelResidual>, tol: &ResidualTolerance) -> ResidualReport {
    let r = levels.last().expect("at least one level").residual;
    let triples: Vec<_> = levels.iter().map(|l| (l.resolution, l.dt, l.residual.sup)).collect();
    let o = orders(&triples, tol);
    let pass = r.sup <= tol.residual * r.rhs_sup.max(1.0) && orders_pass(o, tol);
    ResidualReport {
        equation: eq,
        residual_sup: r.sup,
        field_sup: r.field_sup,
        c_estimate: r.c_estimate,
        order_space: o.0,
        order_time: o.1,
        levels,
        pass,
    }
}

/// Residuals of `equations` across `levels` (coarse to fine). When a finest
/// residual lands within twice the tolerance, one more level `(2N, dt/4)` is run.
pub fn residual_study(
    model: &ModelSpec,
    h: &Subalgebra,
    cfg: &FlowConfig,
    equations: &[Equation],
    levels: &[Level],
    steps: usize,
    tol: &ResidualTolerance,
) -> Result<Vec<ResidualReport>> {
    if levels.is_empty() {
        return Err(Error::InvalidInput("no refinement levels".into()));
    }
    let run = |lv: Level| -> Result<Vec<LevelResidual>> {
        let (s0, s1) = state_pair(model, h, cfg, lv, steps)?;
        equations
            .iter()
            .map(|&eq| {
                Ok(LevelResidual {
                    resolution: lv.resolution,
                    dt: lv.dt,
                    residual: evolution_residual(eq, &s0, &s1)?,
                })
            })
            .collect()
    };
    let mut per_eq: Vec<Vec<LevelResidual>> = vec![Vec::new(); equations.len()];
    let push = |rs: Vec<LevelResidual>, per_eq: &mut Vec<Vec<LevelResidual>>| {
        for (k, r) in rs.into_iter().enumerate() {
            per_eq[k].push(r);
        }
    };
    for &lv in levels {
        push(run(lv)?, &mut per_eq);
    }
    let borderline = per_eq.iter().any(|ls| {
        let r = ls.last().unwrap().residual;
        let bound = tol.residual * r.rhs_sup.max(1.0);
        r.sup > bound && r.sup <= 2.0 * bound
    });
    if borderline && model.is_grid() {
        let last = *levels.last().unwrap();
        push(
            run(Level {
                resolution: 2 * last.resolution,
                dt: last.dt / 4.0,
            })?,
            &mut per_eq,
        );
    }
    Ok(equations
        .iter()
        .zip(per_eq)
        .map(|(&eq, ls)| report(eq, ls, tol))
        .collect())
}
