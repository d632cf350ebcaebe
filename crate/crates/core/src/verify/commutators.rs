//! Commutators of `∇` with the vertical operators `Λ^a_b`, `ρ_ab`, and with
//! `D_t` and `D_t − Δ`, checked on frame components.
//!
//! On the frame bundle `Λ^a_b` acts on the slots of a tensor, and the
//! horizontal derivative of `Λ^a_b U` is `Λ^a_b` applied to the non-derivative
//! slots of `∇U`; the first two relations are therefore exact statements about
//! the slot action. The last two are checked along the flow by differences.

use super::{orders, orders_pass, state_pair, Level, ResidualTolerance, SystemState};
use crate::error::Result;
use crate::flow::FlowConfig;
use crate::holonomy::Subalgebra;
use crate::models::{ModelSpec, Space};
use crate::tensor::{field_sub, field_sup, Field, Tensor};
use crate::wedge::{lambda, lambda_contract};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Commutator {
    /// `[Λ^a_b, ∇_c] = δ_ac ∇_b`.
    LambdaNabla,
    /// `[ρ_ab, ∇_c] = δ_ac ∇_b − δ_bc ∇_a`.
    RhoNabla,
    /// `[D_t, ∇_a] = ∇_pR_pacb Λ^b_c + R_ac ∇_c`.
    DtNabla,
    /// `[D_t − Δ, ∇_a] = 2R_abdc Λ^c_d ∇_b + 2R_ab ∇_b`.
    HeatNabla,
}

impl Commutator {
    pub const ALL: [Commutator; 4] = [
        Commutator::LambdaNabla,
        Commutator::RhoNabla,
        Commutator::DtNabla,
        Commutator::HeatNabla,
    ];
}

/// `Λ^a_b` on every slot except the first.
fn lambda_tail(g: &Tensor, a: usize, b: usize) -> Tensor {
    let mut src = vec![0usize; g.rank()];
    Tensor::from_fn(g.dim(), g.rank(), |ix| {
        let mut acc = 0.0;
        for s in 1..ix.len() {
            if ix[s] == a {
                src.copy_from_slice(ix);
                src[s] = b;
                acc += g.get(&src);
            }
        }
        acc
    })
}

/// `Λ^a_b` as it acts on the derivative slot: `(δ_ca G_b···)`.
fn slot_zero(g: &Tensor, a: usize, b: usize) -> Tensor {
    let mut src = vec![0usize; g.rank()];
    Tensor::from_fn(g.dim(), g.rank(), |ix| {
        if ix[0] != a {
            return 0.0;
        }
        src.copy_from_slice(ix);
        src[0] = b;
        g.get(&src)
    })
}

/// `sup |[Λ^a_b, ∇]U − δ_ac∇_bU|` and the `ρ` analogue for `G = ∇U`.
pub fn vertical_residuals(g: &[Tensor]) -> (f64, f64) {
    let (mut lam, mut rho) = (0.0f64, 0.0f64);
    for gp in g {
        let n = gp.dim();
        for a in 0..n {
            for b in 0..n {
                let comm = &lambda(gp, a, b) - &lambda_tail(gp, a, b);
                lam = lam.max((&comm - &slot_zero(gp, a, b)).max_abs());
                let comm_rho = &comm - &(&lambda(gp, b, a) - &lambda_tail(gp, b, a));
                let expect = &slot_zero(gp, a, b) - &slot_zero(gp, b, a);
                rho = rho.max((&comm_rho - &expect).max_abs());
            }
        }
    }
    (lam, rho)
}

fn avg(a: &[Tensor], b: &[Tensor]) -> Field {
    a.iter().zip(b).map(|(x, y)| &(x + y) * 0.5).collect()
}

fn quotient(u0: &[Tensor], u1: &[Tensor], dt: f64) -> Field {
    u1.iter().zip(u0).map(|(x, y)| &(x - y) * (1.0 / dt)).collect()
}

/// `∇_pR_pacb Λ^b_c U + R_ac ∇_c U` at one point, `a` first.
fn dt_rhs(s: &SystemState, p: usize, u: &Tensor, g: &Tensor) -> Tensor {
    let n = s.dim();
    let t = &s.nabla_r[p];
    let ric = &s.ricci[p];
    let parts: Vec<Tensor> = (0..n)
        .map(|a| {
            let coef = DMatrix::from_fn(n, n, |b, c| (0..n).map(|q| t.get(&[q, q, a, c, b])).sum::<f64>());
            lambda_contract(&coef, u)
        })
        .collect();
    Tensor::from_fn(n, u.rank() + 1, |ix| {
        let a = ix[0];
        let mut v = parts[a].get(&ix[1..]);
        let mut src = ix.to_vec();
        for c in 0..n {
            src[0] = c;
            v += ric[(a, c)] * g.get(&src);
        }
        v
    })
}

/// `2R_abdc Λ^c_d ∇_bU + 2R_ab ∇_bU` at one point, `Λ` acting on all slots of `∇U`.
fn heat_rhs(s: &SystemState, p: usize, g: &Tensor) -> Tensor {
    let n = s.dim();
    let r = &s.r[p];
    let ric = &s.ricci[p];
    let mut out = Tensor::zeros(n, g.rank());
    for a in 0..n {
        for b in 0..n {
            let coef = DMatrix::from_fn(n, n, |c, d| r.get(&[a, b, d, c]));
            let lg = lambda_contract(&coef, g);
            for ix in crate::tensor::indices(n, g.rank() - 1) {
                let mut src = vec![b];
                src.extend_from_slice(&ix);
                let v = 2.0 * lg.get(&src) + 2.0 * ric[(a, b)] * g.get(&src);
                let mut dst = vec![a];
                dst.extend_from_slice(&ix);
                out.add_at(&dst, v);
            }
        }
    }
    out
}

/// Residuals of the four relations for a field `U` given at two consecutive
/// states, each with the sup of its right side as a scale.
pub fn commutator_residuals(
    s0: &SystemState,
    s1: &SystemState,
    u0: &[Tensor],
    u1: &[Tensor],
) -> [(f64, f64); 4] {
    let dt = s1.t - s0.t;
    let (g0, g1) = (s0.nabla(u0), s1.nabla(u1));
    let (lam, rho) = vertical_residuals(&g0);
    // [D_t, ∇]U = D_t∇U − ∇D_tU
    let dtu = quotient(u0, u1, dt);
    let dt_comm = field_sub(&quotient(&g0, &g1, dt), &avg(&s0.nabla(&dtu), &s1.nabla(&dtu)));
    let rhs_dt: Field = (0..s0.num_points())
        .map(|p| &(&dt_rhs(s0, p, &u0[p], &g0[p]) + &dt_rhs(s1, p, &u1[p], &g1[p])) * 0.5)
        .collect();
    // [Δ, ∇]U = Δ∇U − ∇ΔU
    let lap_comm = avg(
        &field_sub(&s0.laplacian(&g0), &s0.nabla(&s0.laplacian(u0))),
        &field_sub(&s1.laplacian(&g1), &s1.nabla(&s1.laplacian(u1))),
    );
    let heat_comm = field_sub(&dt_comm, &lap_comm);
    let rhs_heat: Field = (0..s0.num_points())
        .map(|p| &(&heat_rhs(s0, p, &g0[p]) + &heat_rhs(s1, p, &g1[p])) * 0.5)
        .collect();
    let gs = field_sup(&g0);
    [
        (lam, gs),
        (rho, gs),
        (field_sup(&field_sub(&dt_comm, &rhs_dt)), field_sup(&rhs_dt)),
        (field_sup(&field_sub(&heat_comm, &rhs_heat)), field_sup(&rhs_heat)),
    ]
}

/// A smooth rank-2 field with seeded coefficients, constant in frame components
/// along the flow (so `D_t V = 0`).
pub fn random_transported_field(s: &SystemState, seed: u64) -> Field {
    let n = s.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = 2;
    let coef: Vec<f64> = (0..n * n * (2 * modes + 1)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let coords: Vec<Vec<f64>> = match s.slice.space() {
        Space::Grid(grid) => (0..grid.num_points()).map(|p| grid.coords(p)).collect(),
        _ => vec![vec![0.0; n]],
    };
    coords
        .iter()
        .map(|x| {
            let phase: f64 = x.iter().sum();
            Tensor::from_fn(n, 2, |ix| {
                let base = (ix[0] * n + ix[1]) * (2 * modes + 1);
                let mut v = coef[base];
                for k in 1..=modes {
                    let kk = k as f64;
                    v += coef[base + 2 * k - 1] * (kk * phase).cos() + coef[base + 2 * k] * (kk * phase).sin();
                }
                v
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CommutatorLevel {
    pub resolution: usize,
    pub dt: f64,
    pub residual: f64,
    /// Sup of the right side, the scale the residual is compared against.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CommutatorReport {
    pub commutator: Commutator,
    pub residual_sup: f64,
    pub order_space: Option<f64>,
    pub order_time: Option<f64>,
    pub levels: Vec<CommutatorLevel>,
    pub pass: bool,
}

/// The four relations for `U = P̂` and a seeded transported field, across `levels`.
pub fn check_commutators(
    model: &ModelSpec,
    h: &Subalgebra,
    cfg: &FlowConfig,
    levels: &[Level],
    seed: u64,
    tol: &ResidualTolerance,
) -> Result<Vec<CommutatorReport>> {
    let mut per: Vec<Vec<CommutatorLevel>> = vec![Vec::new(); 4];
    for &lv in levels {
        let (s0, s1) = state_pair(model, h, cfg, lv, 0)?;
        let v0 = random_transported_field(&s0, seed);
        let v1 = random_transported_field(&s1, seed);
        let a = commutator_residuals(&s0, &s1, &s0.phat, &s1.phat);
        let b = commutator_residuals(&s0, &s1, &v0, &v1);
        for k in 0..4 {
            per[k].push(CommutatorLevel {
                resolution: lv.resolution,
                dt: lv.dt,
                residual: a[k].0.max(b[k].0),
                scale: a[k].1.max(b[k].1),
            });
        }
    }
    Ok(Commutator::ALL
        .iter()
        .zip(per)
        .map(|(&c, ls)| {
            let triples: Vec<_> = ls.iter().map(|l| (l.resolution, l.dt, l.residual)).collect();
            let o = orders(&triples, tol);
            let (r, scale) = ls.last().map_or((0.0, 0.0), |l| (l.residual, l.scale));
            CommutatorReport {
                commutator: c,
                residual_sup: r,
                order_space: o.0,
                order_time: o.1,
                pass: r <= tol.residual * scale.max(1.0) && orders_pass(o, tol),
                levels: ls,
            }
        })
        .collect())
}
