//! Empirical constants in `|(D_t − Δ)X|² ≤ C(|X|² + |Y|²)` and
//! `|D_t Y|² ≤ C(|X|² + |∇X|² + |Y|²)` with `X = R̂ ⊕ T̂`, `Y = A ⊕ B`.

use super::{ratio, SystemState};
use crate::error::{Error, Result};
use crate::flow::{self, FlowConfig, FlowState};
use crate::holonomy::Subalgebra;
use crate::models::ModelSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InequalityReport {
    /// Largest ratio for the parabolic inequality.
    pub c_heat: f64,
    /// Largest ratio for the transport inequality.
    pub c_transport: f64,
    /// Times `t` of the sampled step pairs `(t, t + dt)`.
    pub sample_times: Vec<f64>,
    pub finite: bool,
}

impl InequalityReport {
    pub fn c(&self) -> f64 {
        self.c_heat.max(self.c_transport)
    }
}

/// Squared left sides below this are round-off (both sides vanish) and are skipped.
pub const NOISE_SQ: f64 = 1e-16;

fn sq_diff(a: &crate::tensor::Tensor, b: &crate::tensor::Tensor, s: f64) -> f64 {
    (&(a - b) * s).norm_sq()
}

/// Pointwise ratios between the consecutive states `s0`, `s1`.
pub fn inequality_ratios(s0: &SystemState, s1: &SystemState) -> (f64, f64) {
    let dt = s1.t - s0.t;
    let (lr0, lr1) = (s0.laplacian(&s0.rhat), s1.laplacian(&s1.rhat));
    let (lt0, lt1) = (s0.laplacian(&s0.that), s1.laplacian(&s1.that));
    let (nr0, nr1) = (s0.nabla(&s0.rhat), s1.nabla(&s1.rhat));
    let (x0, x1) = (s0.x_norm_sq(), s1.x_norm_sq());
    let (y0, y1) = (s0.y_norm_sq(), s1.y_norm_sq());
    let (mut heat, mut transport) = (0.0f64, 0.0f64);
    for p in 0..s0.num_points() {
        let hr = &(&(&s1.rhat[p] - &s0.rhat[p]) * (1.0 / dt)) - &(&(&lr0[p] + &lr1[p]) * 0.5);
        let ht = &(&(&s1.that[p] - &s0.that[p]) * (1.0 / dt)) - &(&(&lt0[p] + &lt1[p]) * 0.5);
        let lhs_heat = hr.norm_sq() + ht.norm_sq();
        let lhs_tr = sq_diff(&s1.a[p], &s0.a[p], 1.0 / dt) + sq_diff(&s1.b[p], &s0.b[p], 1.0 / dt);
        let x = 0.5 * (x0[p] + x1[p]);
        let y = 0.5 * (y0[p] + y1[p]);
        let nx = 0.5
            * (nr0[p].norm_sq() + nr1[p].norm_sq() + s0.nabla_that[p].norm_sq() + s1.nabla_that[p].norm_sq());
        if lhs_heat > NOISE_SQ {
            heat = heat.max(ratio(lhs_heat, x + y));
        }
        if lhs_tr > NOISE_SQ {
            transport = transport.max(ratio(lhs_tr, x + nx + y));
        }
    }
    (heat, transport)
}

/// Runs the flow to `cfg.t_end` and takes the largest ratios over `samples`
/// step pairs spread evenly over `[δ, T]`, `δ = 0.01 T`.
pub fn check_inequalities(
    model: &ModelSpec,
    h: &Subalgebra,
    cfg: &FlowConfig,
    samples: usize,
) -> Result<InequalityReport> {
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let slice = model.initial_slice()?;
    cfg.validate(&slice)?;
    let total = flow::step_count(cfg);
    if total < 2 {
        return Err(Error::Config("tEnd must span at least two steps".into()));
    }
    let first = ((0.01 * cfg.t_end / cfg.dt).ceil() as usize).min(total - 2);
    let span = total - 2 - first;
    let wanted: Vec<usize> = (0..samples)
        .map(|k| first + if samples == 1 { 0 } else { span * k / (samples - 1) })
        .collect();
    let mut state = FlowState::new(slice, h)?;
    let (mut c_heat, mut c_transport) = (0.0f64, 0.0f64);
    let mut sample_times = Vec::new();
    for k in 0..=*wanted.last().unwrap() {
        let next = flow::step(&state, cfg)?;
        if wanted.contains(&k) {
            let (a, b) = inequality_ratios(&SystemState::from_flow(&state)?, &SystemState::from_flow(&next)?);
            c_heat = c_heat.max(a);
            c_transport = c_transport.max(b);
            sample_times.push(state.t);
        }
        state = next;
    }
    sample_times.dedup();
    Ok(InequalityReport {
        c_heat,
        c_transport,
        sample_times,
        finite: c_heat.is_finite() && c_transport.is_finite(),
    })
}
