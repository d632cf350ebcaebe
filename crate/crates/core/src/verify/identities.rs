//! Randomized checks of the algebra on two-forms and of the reaction-term
//! decompositions `Q∘P̂`, `S∘(Id×P̂)` for a fixed `H`.

use crate::error::Result;
use crate::holonomy::{projection_pair, Subalgebra};
use crate::wedge::{
    bracket, directional_endos, qcomp_residual, random_covariant_curvature, scomp_residual, sharp,
    sharp_structure, trilinear_t, wedge_dim, CurvatureOperator, StructureConstants, TwoForm,
    Wedge2Endo,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const ALGEBRA_TOL: f64 = 1e-12;
pub const REACTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IdentityReport {
    pub identity: String,
    pub n: usize,
    pub cases: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

struct Tally {
    name: &'static str,
    worst: f64,
}

fn random_form<R: Rng>(n: usize, rng: &mut R) -> TwoForm {
    TwoForm::from_coords(n, (0..wedge_dim(n)).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn random_spd<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.5
}

/// Largest `|T_σ(IJK) − sgn(σ) T_IJK|` over the transpositions of a rank-3 array.
fn antisymmetry_defect(t: &crate::tensor::Tensor) -> f64 {
    let mut worst: f64 = 0.0;
    for perm in [[1, 0, 2], [0, 2, 1], [2, 1, 0]] {
        worst = worst.max((&t.permute(&perm) + t).max_abs());
    }
    worst
}

/// Bracket antisymmetry and Jacobi for a random metric, ad-invariance of
/// `⟨[X,Y],Z⟩`, antisymmetry of `𝒯[Id,Id,Id]`, symmetry of `#`, and agreement
/// of the basis-sum and structure-constant forms of `#`, over `cases` draws.
pub fn algebra_identities(n: usize, cases: usize, seed: u64) -> Result<Vec<IdentityReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = StructureConstants::new(n);
    let id = Wedge2Endo::identity(n);
    let mut tally = [
        Tally { name: "bracket-antisymmetry", worst: 0.0 },
        Tally { name: "jacobi", worst: 0.0 },
        Tally { name: "ad-invariance", worst: 0.0 },
        Tally { name: "trilinear-antisymmetry", worst: antisymmetry_defect(&trilinear_t(&id, &id, &id)?) },
        Tally { name: "sharp-symmetry", worst: 0.0 },
        Tally { name: "sharp-representations", worst: 0.0 },
    ];
    let eye = DMatrix::identity(n, n);
    for _ in 0..cases {
        let g = random_spd(n, &mut rng);
        let (x, y, z) = (random_form(n, &mut rng), random_form(n, &mut rng), random_form(n, &mut rng));
        let xy = bracket(&x, &y, &g)?;
        tally[0].worst = tally[0].worst.max(xy.add(&bracket(&y, &x, &g)?).norm());
        let jac = bracket(&xy, &z, &g)?
            .add(&bracket(&bracket(&y, &z, &g)?, &x, &g)?)
            .add(&bracket(&bracket(&z, &x, &g)?, &y, &g)?);
        tally[1].worst = tally[1].worst.max(jac.norm());
        let b = |u: &TwoForm, v: &TwoForm| bracket(u, v, &eye);
        let xyz = b(&x, &y)?.inner(&z);
        let ad = [b(&y, &z)?.inner(&x) - xyz, b(&z, &x)?.inner(&y) - xyz, b(&y, &x)?.inner(&z) + xyz];
        tally[2].worst = ad.iter().fold(tally[2].worst, |w, v| w.max(v.abs()));
        let (p, q) = (Wedge2Endo::random(n, &mut rng), Wedge2Endo::random(n, &mut rng));
        let pq = sharp(&p, &q)?;
        let (s, t) = (Wedge2Endo::random_symmetric(n, &mut rng), Wedge2Endo::random_symmetric(n, &mut rng));
        let st = sharp(&s, &t)?;
        tally[4].worst = tally[4].worst.max(pq.sub(&sharp(&q, &p)?).norm()).max(st.symmetry_defect());
        tally[5].worst = tally[5].worst.max(pq.sub(&sharp_structure(&p, &q, &c)?).norm());
    }
    Ok(tally
        .iter()
        .map(|t| IdentityReport {
            identity: t.name.into(),
            n,
            cases,
            max_residual: t.worst,
            tolerance: ALGEBRA_TOL,
            pass: t.worst <= ALGEBRA_TOL,
        })
        .collect())
}

/// `Q(Rm)∘P̂` and `S⌟X∘P̂` against their expansions in hatted and barred
/// pieces, for random curvature-symmetric `R` and `∇R`.
pub fn reaction_identities(h: &Subalgebra, cases: usize, seed: u64) -> Result<Vec<IdentityReport>> {
    let n = h.n();
    let pbar = projection_pair(h)?.pbar;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut q, mut s): (f64, f64) = (0.0, 0.0);
    for _ in 0..cases {
        let r = CurvatureOperator::random(n, &mut rng);
        q = q.max(qcomp_residual(&r, &pbar)?);
        let t = random_covariant_curvature(n, &mut rng);
        for tx in directional_endos(&t) {
            s = s.max(scomp_residual(&r, &tx, &pbar)?);
        }
    }
    Ok([("qcomp", q), ("scomp", s)]
        .into_iter()
        .map(|(name, worst)| IdentityReport {
            identity: name.into(),
            n,
            cases,
            max_residual: worst,
            tolerance: REACTION_TOL,
            pass: worst <= REACTION_TOL,
        })
        .collect())
}
