//! Runs the flow with a chosen `H` and records, per output time, the quantities
//! that vanish when `H` is preserved together with the holonomy algebra
//! generated by the curvature jet.

use super::scenario::{HolonomySpec, Scenario};
use crate::error::{Error, Result};
use crate::flow::{self, FlowConfig, FlowState};
use crate::holonomy::{
    algebra_up_to_order, detect_complex_structure, invariant_subspaces, HolonomyReport,
    OrderedAlgebra, Subalgebra,
};
use crate::models::{ModelSpec, SliceJet};
use crate::tensor::{field_sup, Tensor};
use crate::wedge::{pairs, TwoForm, Wedge2Endo};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Curvature jet of a flow state in its evolved frames, from the projected curvature.
pub fn state_jet(state: &FlowState, kmax: usize) -> SliceJet {
    state.slice.jet_from(&state.frames, state.curvature(), kmax)
}

/// The algebra generated by `∇^k Rm`, `k ≤ kmax`, pooled over all points of `state`.
pub fn state_algebra(state: &FlowState, kmax: usize, tol: f64) -> Result<OrderedAlgebra> {
    let jet = state_jet(state, kmax);
    let points: Vec<usize> = (0..state.num_points()).collect();
    algebra_up_to_order(&jet, &points, kmax, tol)
}

/// Resolves `spec` for `model`; the terminal kind runs the flow to `cfg.t_end` first.
pub fn resolve_holonomy(
    spec: &HolonomySpec,
    model: &ModelSpec,
    cfg: &FlowConfig,
    kmax: usize,
    tol: f64,
) -> Result<Subalgebra> {
    let n = model.dim();
    if let Some(h) = spec.explicit(n)? {
        return Ok(h);
    }
    let slice = model.initial_slice()?;
    let mut state = FlowState::new(slice, &Subalgebra::trivial(n))?;
    if matches!(spec, HolonomySpec::Terminal) {
        cfg.validate(&state.slice)?;
        state = flow::run(state, cfg, usize::MAX)?.pop().expect("initial state");
    }
    Ok(state_algebra(&state, kmax, tol)?.algebra)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HolonomyRecord {
    pub t: f64,
    /// `sup_M |Rm∘P̂|`.
    pub sup_rm_phat: f64,
    /// `sup_M |∇P̂|`.
    pub sup_nabla_phat: f64,
    pub sup_a: f64,
    pub sup_b: f64,
    pub dim_hol: usize,
    pub blocks: Vec<usize>,
    /// `max(|J² + 1|, |[J, h]|)` for the complex structure found, if any.
    pub kahler_residual: Option<f64>,
    pub min_eig: f64,
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    /// Largest defect of the projection-pair invariants over points.
    pub projection_defect: f64,
    /// Largest `|𝒯[P̂, P̄, P̄]|` over points.
    pub tvan_defect: f64,
    /// Largest `|Rm(φ) − P̄_T Rm(φ)| / max(1, |Rm(φ)|)` against the terminal algebra.
    pub inclusion_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Failure {
    pub t: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HolonomyRun {
    pub scenario: String,
    pub h_dim: usize,
    pub records: Vec<HolonomyRecord>,
    /// Holonomy report of the algebra at the last recorded time.
    pub terminal: HolonomyReport,
    pub dims_constant: bool,
    pub blocks_constant: bool,
    pub preserved: bool,
    pub included: bool,
    pub failure: Option<Failure>,
    pub pass: bool,
}

fn kahler_residual(h: &Subalgebra) -> Option<f64> {
    if h.n() % 2 == 1 {
        return None;
    }
    let j = detect_complex_structure(h, 1e-8).ok().flatten()?;
    let n = h.n();
    let sq = (&j * &j + nalgebra::DMatrix::identity(n, n)).amax();
    let comm = h
        .matrices()
        .iter()
        .map(|x| (&j * x - x * &j).amax())
        .fold(0.0, f64::max);
    Some(sq.max(comm))
}

/// Seeds `Rm(φ^I)` of the image of curvature at every point.
fn curvature_images(state: &FlowState) -> Vec<TwoForm> {
    let n = state.dim();
    let m = pairs(n).len();
    let mut out = Vec::new();
    for r in state.curvature() {
        let rm = Wedge2Endo::from_four_index_unchecked(&r.scale(-1.0));
        for c in 0..m {
            out.push(TwoForm::from_vector(n, &rm.matrix().column(c).into_owned()));
        }
    }
    out
}

fn inclusion_defect(images: &[TwoForm], h: &Subalgebra) -> f64 {
    let p = h.projector();
    images
        .iter()
        .map(|w| w.sub(&p.apply(w)).norm() / w.norm().max(1.0))
        .fold(0.0, f64::max)
}

struct Snapshot {
    record: HolonomyRecord,
    algebra: Subalgebra,
    images: Vec<TwoForm>,
}

fn snapshot(state: &FlowState, kmax: usize, tol: f64) -> Result<Snapshot> {
    let jet = state_jet(state, kmax.max(2));
    let points: Vec<usize> = (0..state.num_points()).collect();
    let algebra = algebra_up_to_order(&jet, &points, kmax, tol)?.algebra;
    let phat = state.phat_frame();
    let a = state.slice.nabla(&state.frames, &phat);
    let b = state.slice.nabla(&state.frames, &a);
    let rhat: Vec<Tensor> = state
        .curvature()
        .iter()
        .zip(&phat)
        .map(|(r, p)| crate::wedge::compose_four(&r.scale(-1.0), p))
        .collect();
    let pairs = state.projections();
    let record = HolonomyRecord {
        t: state.t,
        sup_rm_phat: field_sup(&rhat),
        sup_nabla_phat: field_sup(&a),
        sup_a: field_sup(&a),
        sup_b: field_sup(&b),
        dim_hol: algebra.dim(),
        blocks: invariant_subspaces(&algebra, tol).iter().map(|s| s.dim()).collect(),
        kahler_residual: kahler_residual(&algebra),
        min_eig: state.slice.min_eigenvalue(),
        k0: field_sup(jet.order(0)),
        k1: field_sup(jet.order(1)),
        k2: field_sup(jet.order(2)),
        projection_defect: pairs.iter().map(|p| p.invariant_defect()).fold(0.0, f64::max),
        tvan_defect: pairs.iter().map(|p| p.tvan_defect()).fold(0.0, f64::max),
        inclusion_defect: 0.0,
    };
    Ok(Snapshot {
        record,
        algebra,
        images: curvature_images(state),
    })
}

/// Runs `scenario`, evolving `P̂` for its `H`, and records every `outputEvery` steps.
///
/// A flow failure before `tEnd` ends the run early; the report then carries
/// the failure time and does not pass.
pub fn holonomy_preservation_experiment(scenario: &Scenario) -> Result<HolonomyRun> {
    scenario.validate()?;
    let cfg = &scenario.flow;
    let tol = &scenario.tolerances;
    let h = resolve_holonomy(&scenario.holonomy, &scenario.model, cfg, scenario.kmax, tol.rank)?;
    let mut state = FlowState::new(scenario.model.initial_slice()?, &h)?;
    let steps = flow::step_count(cfg);
    let every = scenario.output_every.max(1);
    let mut snaps = vec![snapshot(&state, scenario.kmax, tol.rank)?];
    let mut failure = None;
    for k in 1..=steps {
        let c = FlowConfig {
            dt: cfg.dt.min(cfg.t_end - state.t),
            ..cfg.clone()
        };
        match flow::step(&state, &c) {
            Ok(next) => state = next,
            Err(
                e @ (Error::FlowSingularity { .. }
                | Error::IntegrationAccuracy(_)
                | Error::InvalidState(_)
                | Error::InvalidMetric(_)),
            ) => {
                failure = Some(Failure {
                    t: state.t,
                    message: e.to_string(),
                });
                break;
            }
            Err(e) => return Err(e),
        }
        if k % every == 0 || k == steps {
            snaps.push(snapshot(&state, scenario.kmax, tol.rank)?);
        }
    }
    let last = snaps.last().expect("initial snapshot");
    let terminal_h = last.algebra.clone();
    let terminal = HolonomyReport::new(&terminal_h, tol.rank);
    let records: Vec<HolonomyRecord> = snaps
        .iter()
        .map(|s| {
            let mut r = s.record.clone();
            r.inclusion_defect = clean(inclusion_defect(&s.images, &terminal_h));
            r
        })
        .collect();
    let dims_constant = records.windows(2).all(|w| w[0].dim_hol == w[1].dim_hol);
    let blocks_constant = records.windows(2).all(|w| w[0].blocks == w[1].blocks);
    let preserved = records
        .iter()
        .all(|r| r.sup_rm_phat < tol.preservation && r.sup_nabla_phat < tol.preservation);
    let included = records.iter().all(|r| r.inclusion_defect <= tol.inclusion);
    let pass = failure.is_none() && dims_constant && blocks_constant && preserved && included;
    Ok(HolonomyRun {
        scenario: scenario.name.clone(),
        h_dim: h.dim(),
        records,
        terminal,
        dims_constant,
        blocks_constant,
        preserved,
        included,
        failure,
        pass,
    })
}

/// Maps `-0.0` to `0.0` so printed output does not depend on the sign of zero.
fn clean(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

/// Writes the time series with columns
/// `t, sup_rm_phat, sup_nabla_phat, sup_a, sup_b, dim_hol, min_eig_g, k0, k1, k2`.
pub fn write_records_csv<W: Write>(out: W, records: &[HolonomyRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record([
        "t",
        "sup_rm_phat",
        "sup_nabla_phat",
        "sup_a",
        "sup_b",
        "dim_hol",
        "min_eig_g",
        "k0",
        "k1",
        "k2",
    ])
    .map_err(io)?;
    for r in records {
        let row = [
            clean(r.t),
            clean(r.sup_rm_phat),
            clean(r.sup_nabla_phat),
            clean(r.sup_a),
            clean(r.sup_b),
        ]
        .iter()
        .map(|x| format!("{x:e}"))
        .chain(std::iter::once(r.dim_hol.to_string()))
        .chain([r.min_eig, r.k0, r.k1, r.k2].iter().map(|x| format!("{:e}", clean(*x))))
        .collect::<Vec<_>>();
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
