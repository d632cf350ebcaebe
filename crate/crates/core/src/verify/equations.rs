//! Right-hand sides of `(D_t − Δ)U = F` for the fields of the projected system.

use super::SystemState;
use crate::tensor::{Field, Tensor};
use crate::wedge::{
    covariant_rm, lambda_contract, qcomp_frame, reaction_q, reaction_s, scomp_frame, stack_endos,
    u_lambda, CurvatureOperator,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    /// `D_t A` (no Laplacian part).
    A,
    /// `D_t B` (no Laplacian part).
    B,
    R,
    T,
    RHat,
    THat,
}

impl Equation {
    pub const ALL: [Equation; 6] = [
        Equation::A,
        Equation::B,
        Equation::R,
        Equation::T,
        Equation::RHat,
        Equation::THat,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Equation::A => "a",
            Equation::B => "b",
            Equation::R => "r",
            Equation::T => "t",
            Equation::RHat => "rhat",
            Equation::THat => "that",
        }
    }

    /// Whether the equation is parabolic (`D_t − Δ`) rather than a pure `D_t` transport.
    pub fn has_laplacian(self) -> bool {
        !matches!(self, Equation::A | Equation::B)
    }

    pub fn field(self, s: &SystemState) -> &Field {
        match self {
            Equation::A => &s.a,
            Equation::B => &s.b,
            Equation::R => &s.r,
            Equation::T => &s.nabla_r,
            Equation::RHat => &s.rhat,
            Equation::THat => &s.that,
        }
    }

    pub fn rhs(self, s: &SystemState) -> Field {
        (0..s.num_points())
            .map(|p| match self {
                Equation::A => a_rhs(s, p),
                Equation::B => b_rhs(s, p),
                Equation::R => r_rhs(&s.r[p]),
                Equation::T => t_rhs(&s.r[p], &s.nabla_r[p]),
                Equation::RHat => rhat_rhs(s, p),
                Equation::THat => that_rhs(s, p),
            })
            .collect()
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// `τ_pim = Σ_r T̂_rpirm`.
fn trace_that(that: &Tensor) -> Tensor {
    let n = that.dim();
    Tensor::from_fn(n, 3, |ix| (0..n).map(|r| that.get(&[r, ix[0], ix[1], r, ix[2]])).sum())
}

/// `Σ_s P_··· with s in slot k` contracted against `c(s, index in slot k)`:
/// `Σ_s [P_sjkl c(s,i) + P_iskl c(s,j) + P_ijsl c(s,k) + P_ijks c(s,l)]`.
fn slot_sum(p: &Tensor, ijkl: &[usize], c: impl Fn(usize, usize) -> f64) -> f64 {
    let n = p.dim();
    let mut acc = 0.0;
    let mut ix = [0usize; 4];
    for slot in 0..4 {
        ix.copy_from_slice(ijkl);
        let orig = ijkl[slot];
        for s in 0..n {
            ix[slot] = s;
            acc += p.get(&ix) * c(s, orig);
        }
    }
    acc
}

/// `D_t A_mijkl = R_mr A_rijkl − P̂_pjkl T̂_rpirm − P̂_ipkl T̂_rpjrm − P̂_ijpl T̂_rpkrm − P̂_ijkp T̂_rplrm`.
fn a_rhs(s: &SystemState, p: usize) -> Tensor {
    let n = s.dim();
    let (ric, a, ph) = (&s.ricci[p], &s.a[p], &s.phat[p]);
    let tau = trace_that(&s.that[p]);
    Tensor::from_fn(n, 5, |ix| {
        let m = ix[0];
        let mut v = 0.0;
        for r in 0..n {
            v += ric[(m, r)] * a.get(&[r, ix[1], ix[2], ix[3], ix[4]]);
        }
        v - slot_sum(ph, &ix[1..], |q, i| tau.get(&[q, i, m]))
    })
}

/// `(D_t − Δ)R = −Q(Rm)`.
fn r_rhs(r: &Tensor) -> Tensor {
    reaction_q(&CurvatureOperator::new_unchecked(r.clone()))
        .four_index()
        .scale(-1.0)
}

/// `(D_t − Δ)T = 2𝒰(R, T) − S(Rm, ∇Rm)`.
fn t_rhs(r: &Tensor, t: &Tensor) -> Tensor {
    let rm = CurvatureOperator::new_unchecked(r.clone()).rm();
    let s = stack_endos(&reaction_s(&rm, &covariant_rm(t)).expect("same dimension"));
    &u_lambda(r, t).scale(2.0) - &s
}

/// `2A_pijab T_pabkl + B_ppijab R_abkl`, or the same with an extra leading
/// direction `m` on the curvature factor.
fn product_terms(s: &SystemState, p: usize, lead: Option<usize>, ix: &[usize]) -> f64 {
    let n = s.dim();
    let (a, b) = (&s.a[p], &s.b[p]);
    let (i, j, k, l) = (ix[0], ix[1], ix[2], ix[3]);
    let mut v = 0.0;
    for x in 0..n {
        for y in 0..n {
            let (dr, r0) = match lead {
                None => (
                    (0..n).map(|q| a.get(&[q, i, j, x, y]) * s.nabla_r[p].get(&[q, x, y, k, l])).sum::<f64>(),
                    s.r[p].get(&[x, y, k, l]),
                ),
                Some(m) => (
                    (0..n)
                        .map(|q| a.get(&[q, i, j, x, y]) * s.nabla2_r[p].get(&[q, m, x, y, k, l]))
                        .sum::<f64>(),
                    s.nabla_r[p].get(&[m, x, y, k, l]),
                ),
            };
            let lap_p: f64 = (0..n).map(|q| b.get(&[q, q, i, j, x, y])).sum();
            v += 2.0 * dr + lap_p * r0;
        }
    }
    v
}

/// `(D_t − Δ)R̂ = 2A_pijab T_pabkl + B_ppijab R_abkl + (Q(Rm)∘P̂)`.
fn rhat_rhs(s: &SystemState, p: usize) -> Tensor {
    let n = s.dim();
    let rm = s.r[p].scale(-1.0);
    let q = qcomp_frame(&rm, &s.pbar[p], &s.phat[p]);
    Tensor::from_fn(n, 4, |ix| product_terms(s, p, None, ix) + q.get(ix))
}

/// `(D_t − Δ)T̂_mijkl = 2A_pijab ∇_pT_mabkl + B_ppijab T_mabkl − 2P̂_ijab 𝒰_mabkl + (S⌟e_m ∘ P̂)_ijkl`.
fn that_rhs(s: &SystemState, p: usize) -> Tensor {
    let n = s.dim();
    let (r, t, pbar, phat) = (&s.r[p], &s.nabla_r[p], &s.pbar[p], &s.phat[p]);
    let rm = r.scale(-1.0);
    let u = u_lambda(r, t);
    let sp: Vec<Tensor> = (0..n)
        .map(|m| {
            let tm = Tensor::from_fn(n, 4, |ix| -t.get(&[m, ix[0], ix[1], ix[2], ix[3]]));
            scomp_frame(&rm, &tm, pbar, phat)
        })
        .collect();
    Tensor::from_fn(n, 5, |ix| {
        let (m, i, j, k, l) = (ix[0], ix[1], ix[2], ix[3], ix[4]);
        let mut pu = 0.0;
        for x in 0..n {
            for y in 0..n {
                pu += phat.get(&[i, j, x, y]) * u.get(&[m, x, y, k, l]);
            }
        }
        product_terms(s, p, Some(m), &ix[1..]) - 2.0 * pu + sp[m].get(&ix[1..])
    })
}

/// `D_t B_mn = R_mr B_rn + ∇_pR_pmcb Λ^b_c A_n + ∇_m(D_t A)_n`, with `Λ` acting on all five slots of `A`.
fn b_rhs(s: &SystemState, p: usize) -> Tensor {
    let n = s.dim();
    let (ric, a, b, ph, t) = (&s.ricci[p], &s.a[p], &s.b[p], &s.phat[p], &s.nabla_r[p]);
    let nth = &s.nabla_that[p];
    let tau = trace_that(&s.that[p]);
    let w = Tensor::from_fn(n, 4, |ix| {
        (0..n).map(|r| nth.get(&[ix[0], r, ix[1], ix[2], r, ix[3]])).sum()
    });
    let lam: Vec<Tensor> = (0..n)
        .map(|m| {
            let coef = DMatrix::from_fn(n, n, |bb, c| {
                (0..n).map(|q| t.get(&[q, q, m, c, bb])).sum::<f64>()
            });
            lambda_contract(&coef, a)
        })
        .collect();
    Tensor::from_fn(n, 6, |ix| {
        let (m, nn) = (ix[0], ix[1]);
        let ijkl = &ix[2..];
        let mut v = lam[m].get(&ix[1..]);
        for r in 0..n {
            let dric: f64 = (0..n).map(|q| t.get(&[m, nn, q, q, r])).sum();
            v += ric[(m, r)] * b.get(&[r, nn, ijkl[0], ijkl[1], ijkl[2], ijkl[3]])
                + ric[(nn, r)] * b.get(&[m, r, ijkl[0], ijkl[1], ijkl[2], ijkl[3]])
                + dric * a.get(&[r, ijkl[0], ijkl[1], ijkl[2], ijkl[3]]);
        }
        // ∇_m of −P̂·τ
        let mut ax = [0usize; 5];
        ax[0] = m;
        for slot in 0..4 {
            ax[1..].copy_from_slice(ijkl);
            let orig = ijkl[slot];
            for q in 0..n {
                ax[1 + slot] = q;
                v -= a.get(&ax) * tau.get(&[q, orig, nn]);
            }
        }
        v - slot_sum(ph, ijkl, |q, i| w.get(&[m, q, i, nn]))
    })
}
