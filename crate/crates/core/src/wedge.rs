//! Pointwise algebra on two-forms: the so(n) bracket, endomorphisms of `∧²R^n`,
//! Hamilton's `#` product and the curvature reaction operators built on it.
//!
//! Index conventions follow the curvature literature the crate is built around:
//!
//! * `e_a ∧ e_b = ½(e_a ⊗ e_b − e_b ⊗ e_a)`, and the pairing of two-forms is the
//!   full contraction `⟨ω, η⟩ = ω_ab η_ab`.
//! * An endomorphism `E` has components `E_abcd = ⟨E(e_a∧e_b), e_c∧e_d⟩` and acts
//!   by `E(ω)_cd = E_abcd ω_ab`; composition is `(A∘B)_ijkl = B_ijcd A_cdkl`.
//! * The curvature operator carries an extra sign: `Rm(ω)_cd = −R_abcd ω_ab`,
//!   so `R_abba > 0` on the round sphere.
//!
//! Flat `m × m` matrices (`m = n(n−1)/2`) are taken in the lexicographic basis
//! `φ^(ab) = E_ab − E_ba`, `a < b`. That basis is orthonormal for the trace form
//! `−½ tr(ωη)`, the normalization under which `Q(Rm) = Rm² + Rm#` is the
//! reaction term of the curvature evolution. Coordinates of a two-form in it are
//! simply its strict upper triangle.

use crate::error::{Error, Result};
use crate::tensor::{delta, Tensor};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Number of independent components of a two-form on `R^n`.
pub fn wedge_dim(n: usize) -> usize {
    n * (n.saturating_sub(1)) / 2
}

/// Lexicographic list of pairs `(a, b)`, `a < b`.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(wedge_dim(n));
    for a in 0..n {
        for b in a + 1..n {
            out.push((a, b));
        }
    }
    out
}

/// Position of the pair `(a, b)` (`a < b`) in [`pairs`].
pub fn pair_index(n: usize, a: usize, b: usize) -> usize {
    debug_assert!(a < b && b < n);
    a * n - a * (a + 1) / 2 + (b - a - 1)
}

/// An antisymmetric bilinear form, stored as its strict upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoForm {
    n: usize,
    coords: Vec<f64>,
}

impl TwoForm {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            coords: vec![0.0; wedge_dim(n)],
        }
    }

    pub fn from_coords(n: usize, coords: Vec<f64>) -> Self {
        assert_eq!(coords.len(), wedge_dim(n));
        Self { n, coords }
    }

    /// The basis element `φ^I = E_ab − E_ba`.
    pub fn unit(n: usize, index: usize) -> Self {
        let mut w = Self::zeros(n);
        w.coords[index] = 1.0;
        w
    }

    /// `e_a ∧ e_b` with the half normalization.
    pub fn basic(n: usize, a: usize, b: usize) -> Self {
        let mut w = Self::zeros(n);
        match a.cmp(&b) {
            std::cmp::Ordering::Less => w.coords[pair_index(n, a, b)] = 0.5,
            std::cmp::Ordering::Greater => w.coords[pair_index(n, b, a)] = -0.5,
            std::cmp::Ordering::Equal => {}
        }
        w
    }

    /// `u ∧ v = ½(u⊗v − v⊗u)`.
    pub fn wedge(u: &[f64], v: &[f64]) -> Self {
        let n = u.len();
        let coords = pairs(n)
            .into_iter()
            .map(|(a, b)| 0.5 * (u[a] * v[b] - u[b] * v[a]))
            .collect();
        Self { n, coords }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::InvalidInput("two-form matrix must be square".into()));
        }
        let scale = m.amax().max(1.0);
        for a in 0..n {
            for b in 0..n {
                if (m[(a, b)] + m[(b, a)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not antisymmetric at ({a}, {b})"
                    )));
                }
            }
        }
        Ok(Self::from_antisymmetric_part(m))
    }

    /// Takes the antisymmetric part of any square matrix.
    pub fn from_antisymmetric_part(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let coords = pairs(n)
            .into_iter()
            .map(|(a, b)| 0.5 * (m[(a, b)] - m[(b, a)]))
            .collect();
        Self { n, coords }
    }

    pub fn from_vector(n: usize, v: &DVector<f64>) -> Self {
        Self::from_coords(n, v.iter().copied().collect())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coords)
    }

    /// Component `ω_ij`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.coords[pair_index(self.n, i, j)],
            std::cmp::Ordering::Greater => -self.coords[pair_index(self.n, j, i)],
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn tensor(&self) -> Tensor {
        Tensor::from_fn(self.n, 2, |ix| self.get(ix[0], ix[1]))
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        Self::from_antisymmetric_part(&t.to_matrix())
    }

    /// Full contraction `ω_ab η_ab`.
    pub fn pairing(&self, other: &TwoForm) -> f64 {
        2.0 * self.coords.iter().zip(&other.coords).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Trace-form inner product `−½ tr(ωη)`, for which the `φ^I` are orthonormal.
    pub fn inner(&self, other: &TwoForm) -> f64 {
        self.coords.iter().zip(&other.coords).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> TwoForm {
        Self {
            n: self.n,
            coords: self.coords.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &TwoForm) -> TwoForm {
        Self {
            n: self.n,
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &TwoForm) -> TwoForm {
        self.add(&other.scale(-1.0))
    }
}

fn check_spd(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    if g.ncols() != n {
        return Err(Error::InvalidMetric("metric must be square".into()));
    }
    for i in 0..n {
        for j in 0..i {
            if (g[(i, j)] - g[(j, i)]).abs() > 1e-12 * g.amax().max(1.0) {
                return Err(Error::InvalidMetric("metric is not symmetric".into()));
            }
        }
    }
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidMetric("metric is not positive definite".into()))?;
    Ok(chol.inverse())
}

/// `[ω, η]_ij = g^kl (ω_ik η_lj − ω_jk η_li)`.
pub fn bracket(omega: &TwoForm, eta: &TwoForm, g: &DMatrix<f64>) -> Result<TwoForm> {
    if omega.n != eta.n || g.nrows() != omega.n {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {} vs metric {}",
            omega.n,
            eta.n,
            g.nrows()
        )));
    }
    let ginv = check_spd(g)?;
    let w = omega.matrix();
    let e = eta.matrix();
    // ωg⁻¹η − (ωg⁻¹η)ᵀ is antisymmetric; read its upper triangle
    let prod = &w * &ginv * &e;
    let n = omega.n;
    let coords = pairs(n)
        .into_iter()
        .map(|(a, b)| prod[(a, b)] - prod[(b, a)])
        .collect();
    Ok(TwoForm { n, coords })
}

/// The bracket in an orthonormal frame (`g = Id`): the matrix commutator.
pub fn bracket_id(omega: &TwoForm, eta: &TwoForm) -> TwoForm {
    let w = omega.matrix();
    let e = eta.matrix();
    let c = &w * &e - &e * &w;
    TwoForm::from_antisymmetric_part(&c)
}

/// An endomorphism of `∧²R^n`, held as its matrix in the `φ^I` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Wedge2Endo {
    n: usize,
    mat: DMatrix<f64>,
}

impl Wedge2Endo {
    pub fn zeros(n: usize) -> Self {
        let m = wedge_dim(n);
        Self {
            n,
            mat: DMatrix::zeros(m, m),
        }
    }

    pub fn identity(n: usize) -> Self {
        let m = wedge_dim(n);
        Self {
            n,
            mat: DMatrix::identity(m, m),
        }
    }

    pub fn from_matrix(n: usize, mat: DMatrix<f64>) -> Self {
        assert_eq!(mat.nrows(), wedge_dim(n));
        assert_eq!(mat.ncols(), wedge_dim(n));
        Self { n, mat }
    }

    /// Reads `E_abcd`; fails unless antisymmetric in `(a,b)` and in `(c,d)`.
    pub fn from_four_index(t: &Tensor) -> Result<Self> {
        if t.rank() != 4 {
            return Err(Error::InvalidInput("expected a 4-index array".into()));
        }
        let n = t.dim();
        let scale = t.max_abs().max(1.0);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let v = t.get(&[a, b, c, d]);
                        if (v + t.get(&[b, a, c, d])).abs() > 1e-10 * scale
                            || (v + t.get(&[a, b, d, c])).abs() > 1e-10 * scale
                        {
                            return Err(Error::InvalidInput(format!(
                                "not antisymmetric in its index pairs at ({a},{b},{c},{d})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(Self::from_four_index_unchecked(t))
    }

    /// Column `(ab)`, row `(cd)` holds `2 E_abcd`.
    pub fn from_four_index_unchecked(t: &Tensor) -> Self {
        let n = t.dim();
        let p = pairs(n);
        let m = p.len();
        let mat = DMatrix::from_fn(m, m, |row, col| {
            let (c, d) = p[row];
            let (a, b) = p[col];
            2.0 * t.get(&[a, b, c, d])
        });
        Self { n, mat }
    }

    pub fn four_index(&self) -> Tensor {
        let n = self.n;
        Tensor::from_fn(n, 4, |ix| {
            let (a, b, c, d) = (ix[0], ix[1], ix[2], ix[3]);
            if a == b || c == d {
                return 0.0;
            }
            let (col, s1) = if a < b {
                (pair_index(n, a, b), 1.0)
            } else {
                (pair_index(n, b, a), -1.0)
            };
            let (row, s2) = if c < d {
                (pair_index(n, c, d), 1.0)
            } else {
                (pair_index(n, d, c), -1.0)
            };
            0.5 * s1 * s2 * self.mat[(row, col)]
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn apply(&self, w: &TwoForm) -> TwoForm {
        TwoForm::from_vector(self.n, &(&self.mat * w.vector()))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Wedge2Endo) -> Wedge2Endo {
        Self {
            n: self.n,
            mat: &self.mat * &other.mat,
        }
    }

    pub fn adjoint(&self) -> Wedge2Endo {
        Self {
            n: self.n,
            mat: self.mat.transpose(),
        }
    }

    pub fn add(&self, other: &Wedge2Endo) -> Wedge2Endo {
        Self {
            n: self.n,
            mat: &self.mat + &other.mat,
        }
    }

    pub fn sub(&self, other: &Wedge2Endo) -> Wedge2Endo {
        Self {
            n: self.n,
            mat: &self.mat - &other.mat,
        }
    }

    pub fn scale(&self, s: f64) -> Wedge2Endo {
        Self {
            n: self.n,
            mat: &self.mat * s,
        }
    }

    pub fn norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn symmetry_defect(&self) -> f64 {
        (&self.mat - self.mat.transpose()).norm()
    }

    /// Random symmetric endomorphism with entries of unit scale.
    pub fn random_symmetric<R: Rng>(n: usize, rng: &mut R) -> Self {
        let m = wedge_dim(n);
        let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        Self {
            n,
            mat: (&a + a.transpose()) * 0.5,
        }
    }

    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        let m = wedge_dim(n);
        Self {
            n,
            mat: DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0)),
        }
    }
}

/// A Riemann tensor `R_abcd` at a point, in an orthonormal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureOperator {
    r: Tensor,
}

impl CurvatureOperator {
    /// Accepts `R_abcd` if it has the curvature symmetries and satisfies the
    /// first Bianchi identity to `tol` (relative to its largest entry).
    pub fn new(r: Tensor, tol: f64) -> Result<Self> {
        let defect = curvature_symmetry_defect(&r);
        if defect > tol * r.max_abs().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "curvature symmetries violated by {defect:e}"
            )));
        }
        Ok(Self { r })
    }

    pub fn new_unchecked(r: Tensor) -> Self {
        Self { r }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            r: Tensor::zeros(n, 4),
        }
    }

    /// Constant sectional curvature `k`: `R_abcd = k(δ_ad δ_bc − δ_ac δ_bd)`.
    pub fn constant(n: usize, k: f64) -> Self {
        Self {
            r: Tensor::from_fn(n, 4, |ix| {
                k * (delta(ix[0], ix[3]) * delta(ix[1], ix[2])
                    - delta(ix[0], ix[2]) * delta(ix[1], ix[3]))
            }),
        }
    }

    /// Random algebraic curvature tensor: a random symmetric operator with its
    /// Bianchi part removed.
    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        let s = Wedge2Endo::random_symmetric(n, rng).four_index();
        Self {
            r: bianchi_project(&s.scale(-1.0)),
        }
    }

    pub fn tensor(&self) -> &Tensor {
        &self.r
    }

    pub fn dim(&self) -> usize {
        self.r.dim()
    }

    /// `Rm` as an endomorphism: `E_abcd = −R_abcd`.
    pub fn rm(&self) -> Wedge2Endo {
        Wedge2Endo::from_four_index_unchecked(&self.r.scale(-1.0))
    }

    pub fn from_rm(e: &Wedge2Endo) -> Self {
        Self {
            r: e.four_index().scale(-1.0),
        }
    }

    /// `Rc_ab = R_appb`.
    pub fn ricci(&self) -> DMatrix<f64> {
        ricci_of(&self.r)
    }

    pub fn scalar(&self) -> f64 {
        self.ricci().trace()
    }
}

pub fn ricci_of(r: &Tensor) -> DMatrix<f64> {
    let n = r.dim();
    DMatrix::from_fn(n, n, |a, b| (0..n).map(|p| r.get(&[a, p, p, b])).sum())
}

/// Largest violation of pair antisymmetry, pair symmetry, and first Bianchi.
pub fn curvature_symmetry_defect(r: &Tensor) -> f64 {
    let n = r.dim();
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let v = r.get(&[a, b, c, d]);
                    worst = worst
                        .max((v + r.get(&[b, a, c, d])).abs())
                        .max((v + r.get(&[a, b, d, c])).abs())
                        .max((v - r.get(&[c, d, a, b])).abs())
                        .max((v + r.get(&[a, c, d, b]) + r.get(&[a, d, b, c])).abs());
                }
            }
        }
    }
    worst
}

/// Removes the totally antisymmetric part of a tensor with pair symmetries.
pub fn bianchi_project(s: &Tensor) -> Tensor {
    let n = s.dim();
    Tensor::from_fn(n, 4, |ix| {
        let (a, b, c, d) = (ix[0], ix[1], ix[2], ix[3]);
        let cyc = s.get(&[a, b, c, d]) + s.get(&[a, c, d, b]) + s.get(&[a, d, b, c]);
        s.get(&[a, b, c, d]) - cyc / 3.0
    })
}

/// Orthogonal projection onto algebraic curvature tensors: averages over the
/// pair symmetries, then removes the cyclic part. Commutes with changes of basis.
pub fn curvature_project(r: &Tensor) -> Tensor {
    let n = r.dim();
    let paired = Tensor::from_fn(n, 4, |ix| {
        let (a, b, c, d) = (ix[0], ix[1], ix[2], ix[3]);
        (r.get(&[a, b, c, d]) - r.get(&[b, a, c, d]) - r.get(&[a, b, d, c]) + r.get(&[b, a, d, c])
            + r.get(&[c, d, a, b])
            - r.get(&[d, c, a, b])
            - r.get(&[c, d, b, a])
            + r.get(&[d, c, b, a]))
            / 8.0
    });
    bianchi_project(&paired)
}

/// `C^{AB}_C = ⟨[φ^A, φ^B], φ^C⟩` in the `φ^I` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureConstants {
    n: usize,
    m: usize,
    c: Vec<f64>,
}

impl StructureConstants {
    pub fn new(n: usize) -> Self {
        let m = wedge_dim(n);
        let mut c = vec![0.0; m * m * m];
        for a in 0..m {
            let fa = TwoForm::unit(n, a);
            for b in 0..m {
                let br = bracket_id(&fa, &TwoForm::unit(n, b));
                for (k, v) in br.coords().iter().enumerate() {
                    c[(a * m + b) * m + k] = *v;
                }
            }
        }
        Self { n, m, c }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.c[(a * self.m + b) * self.m + c]
    }
}

fn check_same_dim(dims: &[usize]) -> Result<()> {
    if dims.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::InvalidInput(format!("dimension mismatch: {dims:?}")));
    }
    Ok(())
}

/// `𝒯[A,B,C]_{IJK} = ⟨[A φ^I, B φ^J], C φ^K⟩`.
pub fn trilinear_t(a: &Wedge2Endo, b: &Wedge2Endo, c: &Wedge2Endo) -> Result<Tensor> {
    check_same_dim(&[a.n, b.n, c.n])?;
    let n = a.n;
    let m = wedge_dim(n);
    let af: Vec<TwoForm> = (0..m).map(|i| a.apply(&TwoForm::unit(n, i))).collect();
    let bf: Vec<TwoForm> = (0..m).map(|i| b.apply(&TwoForm::unit(n, i))).collect();
    let cf: Vec<TwoForm> = (0..m).map(|i| c.apply(&TwoForm::unit(n, i))).collect();
    let mut out = Tensor::zeros(m, 3);
    for i in 0..m {
        for j in 0..m {
            let br = bracket_id(&af[i], &bf[j]);
            for (k, ck) in cf.iter().enumerate() {
                out.set(&[i, j, k], br.inner(ck));
            }
        }
    }
    Ok(out)
}

/// `(A#B)(ω) = ½ Σ_{M,N} ⟨[A φ^M, B φ^N], ω⟩ [φ^M, φ^N]`, evaluated as a basis sum.
pub fn sharp(a: &Wedge2Endo, b: &Wedge2Endo) -> Result<Wedge2Endo> {
    check_same_dim(&[a.n, b.n])?;
    let n = a.n;
    let m = wedge_dim(n);
    let af: Vec<TwoForm> = (0..m).map(|i| a.apply(&TwoForm::unit(n, i))).collect();
    let bf: Vec<TwoForm> = (0..m).map(|i| b.apply(&TwoForm::unit(n, i))).collect();
    let mut mat = DMatrix::zeros(m, m);
    for mi in 0..m {
        let fm = TwoForm::unit(n, mi);
        for ni in 0..m {
            let outer_br = bracket_id(&fm, &TwoForm::unit(n, ni));
            if outer_br.norm() == 0.0 {
                continue;
            }
            let inner_br = bracket_id(&af[mi], &bf[ni]);
            // column w: coefficient ⟨inner_br, φ^w⟩ times outer_br
            for w in 0..m {
                let coef = 0.5 * inner_br.coords()[w];
                if coef == 0.0 {
                    continue;
                }
                for (row, v) in outer_br.coords().iter().enumerate() {
                    mat[(row, w)] += coef * v;
                }
            }
        }
    }
    Ok(Wedge2Endo { n, mat })
}

/// `A#B` through `(A#B)_{JI} = ½ A_{PM} B_{QN} C^{PQ}_I C^{MN}_J` (flat row `J`, column `I`).
pub fn sharp_structure(
    a: &Wedge2Endo,
    b: &Wedge2Endo,
    c: &StructureConstants,
) -> Result<Wedge2Endo> {
    check_same_dim(&[a.n, b.n, c.n])?;
    let n = a.n;
    let m = wedge_dim(n);
    // G_{MN,I} = Σ_{PQ} A_{PM} B_{QN} C^{PQ}_I
    let mut mat = DMatrix::zeros(m, m);
    for mi in 0..m {
        for ni in 0..m {
            let mut any = false;
            for j in 0..m {
                if c.get(mi, ni, j) != 0.0 {
                    any = true;
                    break;
                }
            }
            if !any {
                continue;
            }
            for i in 0..m {
                let mut g = 0.0;
                for p in 0..m {
                    let apm = a.mat[(p, mi)];
                    if apm == 0.0 {
                        continue;
                    }
                    for q in 0..m {
                        g += apm * b.mat[(q, ni)] * c.get(p, q, i);
                    }
                }
                if g == 0.0 {
                    continue;
                }
                for j in 0..m {
                    mat[(j, i)] += 0.5 * g * c.get(mi, ni, j);
                }
            }
        }
    }
    Ok(Wedge2Endo { n, mat })
}

/// `Q(A) = A² + A#A`.
pub fn q_of(a: &Wedge2Endo) -> Wedge2Endo {
    let sq = a.compose(a);
    sq.add(&sharp(a, a).expect("same dimension"))
}

/// The curvature reaction term `Q(Rm)`.
pub fn reaction_q(r: &CurvatureOperator) -> Wedge2Endo {
    q_of(&r.rm())
}

/// `S(A,F)(X,·) = A∘F_X + F_X∘A + 2 F_X#A` for each direction `X`.
pub fn reaction_s(a: &Wedge2Endo, f: &[Wedge2Endo]) -> Result<Vec<Wedge2Endo>> {
    f.iter()
        .map(|fx| {
            check_same_dim(&[a.n, fx.n])?;
            let s = sharp(fx, a)?;
            Ok(a.compose(fx).add(&fx.compose(a)).add(&s.scale(2.0)))
        })
        .collect()
}

/// Splits a 5-index field `F_mabcd` into one endomorphism per direction `m`.
pub fn directional_endos(t: &Tensor) -> Vec<Wedge2Endo> {
    let n = t.dim();
    (0..n)
        .map(|m| {
            let slice = Tensor::from_fn(n, 4, |ix| t.get(&[m, ix[0], ix[1], ix[2], ix[3]]));
            Wedge2Endo::from_four_index_unchecked(&slice)
        })
        .collect()
}

/// Reassembles a 5-index field from per-direction endomorphisms.
pub fn stack_endos(f: &[Wedge2Endo]) -> Tensor {
    let n = f[0].n;
    let parts: Vec<Tensor> = f.iter().map(Wedge2Endo::four_index).collect();
    Tensor::from_fn(n, 5, |ix| parts[ix[0]].get(&ix[1..]))
}

/// `(∇_m Rm)` as endomorphisms from `T_mabcd = ∇_m R_abcd`.
pub fn covariant_rm(t: &Tensor) -> Vec<Wedge2Endo> {
    directional_endos(&t.scale(-1.0))
}

/// Symmetrizing projector of 4-tensors onto `∧² ⊗_S ∧²`.
pub fn sym_projector(v: &Tensor) -> Tensor {
    let n = v.dim();
    Tensor::from_fn(n, 4, |ix| {
        let (i, j, k, l) = (ix[0], ix[1], ix[2], ix[3]);
        (v.get(&[i, j, k, l]) - v.get(&[j, i, k, l]) - v.get(&[i, j, l, k])
            + v.get(&[j, i, l, k])
            + v.get(&[k, l, i, j])
            - v.get(&[l, k, i, j])
            - v.get(&[k, l, j, i])
            + v.get(&[l, k, j, i]))
            / 8.0
    })
}

/// `Λ^a_b U`: every slot holding `a` is replaced by `b`, summed over slots.
pub fn lambda(u: &Tensor, a: usize, b: usize) -> Tensor {
    let mut src = vec![0usize; u.rank()];
    Tensor::from_fn(u.dim(), u.rank(), |ix| {
        let mut acc = 0.0;
        for s in 0..ix.len() {
            if ix[s] == a {
                src.copy_from_slice(ix);
                src[s] = b;
                acc += u.get(&src);
            }
        }
        acc
    })
}

/// `Σ_{a,b} c_{ab} Λ^a_b U`: the derivation induced by the matrix `c` on every slot.
pub fn lambda_contract(c: &DMatrix<f64>, u: &Tensor) -> Tensor {
    let n = u.dim();
    let mut src = vec![0usize; u.rank()];
    Tensor::from_fn(n, u.rank(), |ix| {
        let mut acc = 0.0;
        for s in 0..ix.len() {
            src.copy_from_slice(ix);
            for b in 0..n {
                let w = c[(ix[s], b)];
                if w != 0.0 {
                    src[s] = b;
                    acc += w * u.get(&src);
                }
            }
        }
        acc
    })
}

/// `K(A,B)_cekl = A_cpql B_epqk − A_cpqk B_epql` on 4-index components.
///
/// For any endomorphisms `A#B = −(K(A*,B*) + K(B*,A*))`, and since `K` is
/// antisymmetric in its last pair, `P∘K(A,B) = P∘K(B,A)` for any `P`.
pub fn sharp_kernel(a: &Tensor, b: &Tensor) -> Tensor {
    let n = a.dim();
    Tensor::from_fn(n, 4, |ix| {
        let (c, e, k, l) = (ix[0], ix[1], ix[2], ix[3]);
        let mut s = 0.0;
        for p in 0..n {
            for q in 0..n {
                s += a.get(&[c, p, q, l]) * b.get(&[e, p, q, k])
                    - a.get(&[c, p, q, k]) * b.get(&[e, p, q, l]);
            }
        }
        s
    })
}

/// `(X∘P)_ijkl = P_ijce X_cekl` on 4-index components.
pub fn compose_four(x: &Tensor, p: &Tensor) -> Tensor {
    let n = x.dim();
    Tensor::from_fn(n, 4, |ix| {
        let mut s = 0.0;
        for c in 0..n {
            for e in 0..n {
                let w = p.get(&[ix[0], ix[1], c, e]);
                if w != 0.0 {
                    s += w * x.get(&[c, e, ix[2], ix[3]]);
                }
            }
        }
        s
    })
}

/// Orthonormal basis (coordinates in the `φ^I` basis) of the image of a projector.
pub fn projector_image(p: &Wedge2Endo) -> Vec<TwoForm> {
    let eig = nalgebra::SymmetricEigen::new((&p.mat + p.mat.transpose()) * 0.5);
    (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 0.5)
        .map(|i| TwoForm::from_vector(p.n, &eig.eigenvectors.column(i).into_owned()))
        .collect()
}

/// Largest `‖(Id − P)[h_1, h_2]‖` over an orthonormal basis of `im P`.
pub fn closure_defect(p: &Wedge2Endo) -> f64 {
    let basis = projector_image(p);
    let comp = Wedge2Endo::identity(p.n).sub(p);
    let mut worst: f64 = 0.0;
    for (i, h1) in basis.iter().enumerate() {
        for h2 in &basis[i + 1..] {
            worst = worst.max(comp.apply(&bracket_id(h1, h2)).norm());
        }
    }
    worst
}

fn require_subalgebra(pbar: &Wedge2Endo, tol: f64) -> Result<()> {
    let defect = closure_defect(pbar);
    if defect > tol {
        return Err(Error::PreconditionViolated(format!(
            "image of the projection is not closed under the bracket (defect {defect:e})"
        )));
    }
    Ok(())
}

/// `‖Q(R)∘P̂ − R∘R̂ − (R̄*#R̂* + R#R̂*)∘P̂‖` with `R = Rm`, `P̂ = Id − P̄`.
pub fn qcomp_residual(r: &CurvatureOperator, pbar: &Wedge2Endo) -> Result<f64> {
    check_same_dim(&[r.dim(), pbar.n])?;
    require_subalgebra(pbar, 1e-8)?;
    let rm = r.rm();
    let phat = Wedge2Endo::identity(rm.n).sub(pbar);
    let rhat = rm.compose(&phat);
    let rbar_s = pbar.compose(&rm);
    let rhat_s = phat.compose(&rm);
    let lhs = q_of(&rm).compose(&phat);
    let rhs = rm
        .compose(&rhat)
        .add(&sharp(&rbar_s, &rhat_s)?.add(&sharp(&rm, &rhat_s)?).compose(&phat));
    Ok(lhs.sub(&rhs).norm())
}

/// `‖S⌟X∘P̂ − R∘T̂_X − T_X∘R̂ − 2(T̂_X*#R̄* + T_X#R̂*)∘P̂‖` for one direction `T_X = ∇_X Rm`.
pub fn scomp_residual(r: &CurvatureOperator, t_x: &Wedge2Endo, pbar: &Wedge2Endo) -> Result<f64> {
    check_same_dim(&[r.dim(), t_x.n, pbar.n])?;
    require_subalgebra(pbar, 1e-8)?;
    let rm = r.rm();
    let phat = Wedge2Endo::identity(rm.n).sub(pbar);
    let s = reaction_s(&rm, std::slice::from_ref(t_x))?.remove(0);
    let lhs = s.compose(&phat);
    let that = t_x.compose(&phat);
    let that_s = phat.compose(t_x);
    let rhat = rm.compose(&phat);
    let rhs = rm.compose(&that).add(&t_x.compose(&rhat)).add(
        &sharp(&that_s, &pbar.compose(&rm))?
            .add(&sharp(t_x, &phat.compose(&rm))?)
            .compose(&phat)
            .scale(2.0),
    );
    Ok(lhs.sub(&rhs).norm())
}

/// Frame-component form of `Q(Rm)∘P̂`, built only from `Rm`, `R̄ = Rm∘P̄`, `R̂ = Rm∘P̂`:
/// `(Rm∘R̂)_ijkl − 2 P̂_ijce [K(R̄,R̂) + K(Rm,R̂)]_cekl`. Endomorphism components.
pub fn qcomp_frame(rm: &Tensor, pbar: &Tensor, phat: &Tensor) -> Tensor {
    let rbar = compose_four(rm, pbar);
    let rhat = compose_four(rm, phat);
    let k = &sharp_kernel(&rbar, &rhat) + &sharp_kernel(rm, &rhat);
    &compose_four(rm, &rhat) - &compose_four(&k, phat).scale(2.0)
}

/// Frame-component form of `S⌟X∘P̂`:
/// `Rm∘T̂_X + T_X∘R̂ − 4 P̂_ijce [K(T̂_X,R̄) + K(T_X,R̂)]_cekl`. Endomorphism components.
pub fn scomp_frame(rm: &Tensor, t_x: &Tensor, pbar: &Tensor, phat: &Tensor) -> Tensor {
    let rbar = compose_four(rm, pbar);
    let rhat = compose_four(rm, phat);
    let that = compose_four(t_x, phat);
    let k = &sharp_kernel(&that, &rbar) + &sharp_kernel(t_x, &rhat);
    &(&compose_four(rm, &that) + &compose_four(t_x, &rhat)) - &compose_four(&k, phat).scale(4.0)
}

/// `𝒰(A,F)(e_m, e_i∧e_j, e_k∧e_l) = Σ_p ⟨[A(e_p∧e_m), F_p(e_i∧e_j)], e_k∧e_l⟩ + (ij ↔ kl)`.
pub fn reaction_u(a: &Wedge2Endo, f: &[Wedge2Endo]) -> Result<Tensor> {
    let n = a.n;
    if f.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} directional endomorphisms, got {}",
            f.len()
        )));
    }
    check_same_dim(&std::iter::once(n).chain(f.iter().map(|x| x.n)).collect::<Vec<_>>())?;
    // W_{pm} = A(e_p∧e_m); G_{p,I} = F_p(φ^I) pairs against e_k∧e_l as ½ of coords
    let mut out = Tensor::zeros(n, 5);
    let basic: Vec<Vec<TwoForm>> = (0..n)
        .map(|i| (0..n).map(|j| TwoForm::basic(n, i, j)).collect())
        .collect();
    for m in 0..n {
        for p in 0..n {
            let w = a.apply(&basic[p][m]);
            if w.norm() == 0.0 {
                continue;
            }
            for i in 0..n {
                for j in i + 1..n {
                    let fij = f[p].apply(&basic[i][j]);
                    let br = bracket_id(&w, &fij);
                    for k in 0..n {
                        for l in k + 1..n {
                            let v = br.pairing(&basic[k][l]);
                            add_pair_sym(&mut out, m, i, j, k, l, v);
                            add_pair_sym(&mut out, m, k, l, i, j, v);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn add_pair_sym(out: &mut Tensor, m: usize, i: usize, j: usize, k: usize, l: usize, v: f64) {
    out.add_at(&[m, i, j, k, l], v);
    out.add_at(&[m, j, i, k, l], -v);
    out.add_at(&[m, i, j, l, k], -v);
    out.add_at(&[m, j, i, l, k], v);
}

/// The expanded form `R_mbdi T_bdjkl + R_mbdj T_bidkl + R_mbdk T_bijdl + R_mbdl T_bijkd`.
pub fn u_expanded(r: &Tensor, t: &Tensor) -> Tensor {
    let n = r.dim();
    Tensor::from_fn(n, 5, |ix| {
        let (m, i, j, k, l) = (ix[0], ix[1], ix[2], ix[3], ix[4]);
        let mut s = 0.0;
        for b in 0..n {
            for d in 0..n {
                s += r.get(&[m, b, d, i]) * t.get(&[b, d, j, k, l])
                    + r.get(&[m, b, d, j]) * t.get(&[b, i, d, k, l])
                    + r.get(&[m, b, d, k]) * t.get(&[b, i, j, d, l])
                    + r.get(&[m, b, d, l]) * t.get(&[b, i, j, k, d]);
            }
        }
        s
    })
}

/// `R_mb T_bijkl + R_mbdp Λ^p_d T_bijkl`, with `Λ` acting on all five slots of `T`.
pub fn u_lambda(r: &Tensor, t: &Tensor) -> Tensor {
    let n = r.dim();
    let ric = ricci_of(r);
    let mut out = Tensor::zeros(n, 5);
    for m in 0..n {
        for b in 0..n {
            let coef = DMatrix::from_fn(n, n, |p, d| r.get(&[m, b, d, p]));
            let lt = lambda_contract(&coef, t);
            for ix in crate::tensor::indices(n, 4) {
                let v = ric[(m, b)] * t.get(&[b, ix[0], ix[1], ix[2], ix[3]])
                    + lt.get(&[b, ix[0], ix[1], ix[2], ix[3]]);
                out.add_at(&[m, ix[0], ix[1], ix[2], ix[3]], v);
            }
        }
    }
    out
}

/// `C_mijkl = −T_mipqj R_kpql`.
pub fn c_tensor(r: &Tensor, t: &Tensor) -> Tensor {
    let n = r.dim();
    Tensor::from_fn(n, 5, |ix| {
        let (m, i, j, k, l) = (ix[0], ix[1], ix[2], ix[3], ix[4]);
        let mut s = 0.0;
        for p in 0..n {
            for q in 0..n {
                s -= t.get(&[m, i, p, q, j]) * r.get(&[k, p, q, l]);
            }
        }
        s
    })
}

/// `C ⌟₄ e_m`: the 4-tensor `V_abcd = C_abcmd`.
pub fn insert_fourth(c: &Tensor, m: usize) -> Tensor {
    Tensor::from_fn(c.dim(), 4, |ix| c.get(&[ix[0], ix[1], ix[2], m, ix[3]]))
}

/// Random `T_mijkl` with the symmetries of `∇R`: an algebraic curvature tensor
/// in `ijkl` for each `m`, and `T_mijkl + T_ijmkl + T_jmikl = 0`.
///
/// Obtained by alternating the two orthogonal projections until both hold.
pub fn random_covariant_curvature<R: Rng>(n: usize, rng: &mut R) -> Tensor {
    let mut t = Tensor::from_fn(n, 5, |_| rng.gen_range(-1.0..1.0));
    for _ in 0..500 {
        let parts: Vec<Tensor> = (0..n)
            .map(|m| {
                let s = Tensor::from_fn(n, 4, |ix| t.get(&[m, ix[0], ix[1], ix[2], ix[3]]));
                bianchi_project(&sym_projector(&s))
            })
            .collect();
        t = Tensor::from_fn(n, 5, |ix| parts[ix[0]].get(&ix[1..]));
        let next = Tensor::from_fn(n, 5, |ix| {
            let (m, i, j, k, l) = (ix[0], ix[1], ix[2], ix[3], ix[4]);
            let v = t.get(&[m, i, j, k, l]);
            v - (v + t.get(&[i, j, m, k, l]) + t.get(&[j, m, i, k, l])) / 3.0
        });
        let change = (&next - &t).max_abs();
        t = next;
        if change < 1e-15 {
            break;
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::indices;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_form(n: usize, r: &mut ChaCha8Rng) -> TwoForm {
        TwoForm::from_coords(n, (0..wedge_dim(n)).map(|_| r.gen_range(-1.0..1.0)).collect())
    }

    // P̄ onto u(2) ⊂ so(4): the commutant of J = E12 − E21 + E34 − E43.
    fn u2_projector() -> Wedge2Endo {
        let n = 4;
        let m = wedge_dim(n);
        let mut j = DMatrix::zeros(4, 4);
        j[(0, 1)] = 1.0;
        j[(1, 0)] = -1.0;
        j[(2, 3)] = 1.0;
        j[(3, 2)] = -1.0;
        let mut a = DMatrix::zeros(16, m);
        for i in 0..m {
            let x = TwoForm::unit(n, i).matrix();
            let c = &x * &j - &j * &x;
            for r in 0..16 {
                a[(r, i)] = c[(r / 4, r % 4)];
            }
        }
        let svd = a.svd(false, true);
        let vt = svd.v_t.unwrap();
        let mut p = DMatrix::zeros(m, m);
        for (k, s) in svd.singular_values.iter().enumerate() {
            if *s < 1e-10 {
                let v = vt.row(k).transpose();
                p += &v * v.transpose();
            }
        }
        Wedge2Endo::from_matrix(n, p)
    }

    #[test]
    fn curvature_projection_is_idempotent_and_fixes_curvatures() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = CurvatureOperator::random(4, &mut rng);
        assert!((&curvature_project(r.tensor()) - r.tensor()).max_abs() < 1e-14);
        let junk = Tensor::from_fn(4, 4, |_| rng.gen_range(-1.0..1.0));
        let p = curvature_project(&junk);
        assert!(curvature_symmetry_defect(&p) < 1e-14);
        assert!((&curvature_project(&p) - &p).max_abs() < 1e-14);
        // orthogonal: the removed part is orthogonal to curvature tensors
        assert!((&junk - &p).dot(r.tensor()).abs() < 1e-12);
        // commutes with a change of basis
        let f = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.5 } else { 0.1 * (i + 2 * j) as f64 });
        assert!((&curvature_project(&junk.transform(&f)) - &p.transform(&f)).max_abs() < 1e-12);
    }

    #[test]
    fn bracket_of_basic_forms() {
        let g = DMatrix::identity(3, 3);
        let b = bracket(&TwoForm::basic(3, 0, 1), &TwoForm::basic(3, 1, 2), &g).unwrap();
        assert!(b.sub(&TwoForm::basic(3, 0, 2).scale(0.5)).norm() < 1e-15);
    }

    #[test]
    fn bracket_rejects_bad_input() {
        let w = TwoForm::basic(3, 0, 1);
        let g = DMatrix::identity(3, 3);
        assert!(matches!(
            bracket(&w, &TwoForm::basic(4, 0, 1), &g),
            Err(Error::InvalidInput(_))
        ));
        let mut bad = g.clone();
        bad[(2, 2)] = -1.0;
        assert!(matches!(bracket(&w, &w, &bad), Err(Error::InvalidMetric(_))));
    }

    #[test]
    fn bracket_with_metric_matches_frame_computation() {
        // with g = LLᵀ, lowering to the frame L⁻ᵀ turns [·,·]_g into a commutator
        let mut r = rng(7);
        let n = 4;
        let a = DMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
        let g = &a * a.transpose() + DMatrix::identity(n, n);
        let l = g.clone().cholesky().unwrap().l();
        let li = l.clone().try_inverse().unwrap();
        let w = random_form(n, &mut r);
        let e = random_form(n, &mut r);
        let got = bracket(&w, &e, &g).unwrap().matrix();
        let fw = &li * w.matrix() * li.transpose();
        let fe = &li * e.matrix() * li.transpose();
        let frame = &fw * &fe - &fe * &fw;
        let back = &l * frame * l.transpose();
        assert!((got - back).amax() < 1e-12);
    }

    #[test]
    fn jacobi_and_ad_invariance() {
        let mut r = rng(1);
        for n in 3..=5 {
            for _ in 0..100 {
                let (x, y, z) = (random_form(n, &mut r), random_form(n, &mut r), random_form(n, &mut r));
                let jac = bracket_id(&bracket_id(&x, &y), &z)
                    .add(&bracket_id(&bracket_id(&y, &z), &x))
                    .add(&bracket_id(&bracket_id(&z, &x), &y));
                assert!(jac.norm() < 1e-12);
                let a = bracket_id(&x, &y).inner(&z);
                assert!((a - bracket_id(&y, &z).inner(&x)).abs() < 1e-12);
                assert!((a + bracket_id(&y, &x).inner(&z)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn four_index_round_trip() {
        let mut r = rng(2);
        let e = Wedge2Endo::random(4, &mut r);
        let back = Wedge2Endo::from_four_index(&e.four_index()).unwrap();
        assert_eq!(back.matrix(), e.matrix());
        // flat action agrees with the 4-index contraction
        let w = random_form(4, &mut r);
        let t = e.four_index();
        let direct = Tensor::from_fn(4, 2, |cd| {
            let mut s = 0.0;
            for ab in indices(4, 2) {
                s += t.get(&[ab[0], ab[1], cd[0], cd[1]]) * w.get(ab[0], ab[1]);
            }
            s
        });
        assert!((&e.apply(&w).tensor() - &direct).max_abs() < 1e-14);
        let bad = Tensor::from_fn(4, 4, |ix| ix[0] as f64);
        assert!(Wedge2Endo::from_four_index(&bad).is_err());
    }

    #[test]
    fn composition_in_components() {
        let mut r = rng(3);
        let a = Wedge2Endo::random(4, &mut r);
        let b = Wedge2Endo::random(4, &mut r);
        let got = a.compose(&b).four_index();
        let want = compose_four(&a.four_index(), &b.four_index());
        assert!((&got - &want).max_abs() < 1e-13);
    }

    #[test]
    fn identity_and_sphere_curvature() {
        let id = Wedge2Endo::identity(4).four_index();
        for ix in indices(4, 4) {
            let want = 0.5
                * (delta(ix[0], ix[2]) * delta(ix[1], ix[3]) - delta(ix[0], ix[3]) * delta(ix[1], ix[2]));
            assert_eq!(id.get(&ix), want);
        }
        let r = CurvatureOperator::constant(4, 0.5);
        assert!(r.rm().sub(&Wedge2Endo::identity(4)).norm() < 1e-15);
        assert!(r.tensor().get(&[0, 1, 1, 0]) > 0.0);
        assert!((r.ricci() - DMatrix::identity(4, 4) * 1.5).amax() < 1e-15);
    }

    #[test]
    fn trilinear_matches_brute_force() {
        let mut r = rng(4);
        let n = 4;
        let m = wedge_dim(n);
        let (a, b, c) = (
            Wedge2Endo::random(n, &mut r),
            Wedge2Endo::random(n, &mut r),
            Wedge2Endo::random(n, &mut r),
        );
        let t = trilinear_t(&a, &b, &c).unwrap();
        let sc = StructureConstants::new(n);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    // ⟨[Aφ^I, Bφ^J], Cφ^K⟩ = A_PI B_QJ C_RK C^{PQ}_R
                    let mut s = 0.0;
                    for p in 0..m {
                        for q in 0..m {
                            for rr in 0..m {
                                s += a.matrix()[(p, i)]
                                    * b.matrix()[(q, j)]
                                    * c.matrix()[(rr, k)]
                                    * sc.get(p, q, rr);
                            }
                        }
                    }
                    assert!((t.get(&[i, j, k]) - s).abs() < 1e-12);
                }
            }
        }
        assert!(trilinear_t(&a, &b, &Wedge2Endo::identity(3)).is_err());
    }

    #[test]
    fn trilinear_identity_is_alternating() {
        let id = Wedge2Endo::identity(4);
        let t = trilinear_t(&id, &id, &id).unwrap();
        for ix in indices(6, 3) {
            let v = t.get(&ix);
            assert!((v + t.get(&[ix[1], ix[0], ix[2]])).abs() < 1e-15);
            assert!((v + t.get(&[ix[0], ix[2], ix[1]])).abs() < 1e-15);
        }
    }

    #[test]
    fn trilinear_vanishes_on_subalgebra_split() {
        let pbar = u2_projector();
        let phat = Wedge2Endo::identity(4).sub(&pbar);
        let t = trilinear_t(&phat, &pbar, &pbar).unwrap();
        assert!(t.max_abs() < 1e-12);
        // the complement is not a subalgebra, so the mirrored form does not vanish
        assert!(trilinear_t(&pbar, &phat, &phat).unwrap().max_abs() > 0.1);
    }

    #[test]
    fn sharp_two_routes_agree() {
        let mut r = rng(5);
        for n in 3..=4 {
            let sc = StructureConstants::new(n);
            let id = Wedge2Endo::identity(n);
            let basis = sharp(&id, &id).unwrap();
            let structure = sharp_structure(&id, &id, &sc).unwrap();
            assert!(basis.sub(&structure).norm() < 1e-12);
            assert!(basis.sub(&id.scale((n - 2) as f64)).norm() < 1e-12);
            let a = Wedge2Endo::random(n, &mut r);
            let b = Wedge2Endo::random(n, &mut r);
            let s1 = sharp(&a, &b).unwrap();
            let s2 = sharp_structure(&a, &b, &sc).unwrap();
            assert!(s1.sub(&s2).norm() < 1e-12);
            assert!(sharp(&a, &Wedge2Endo::zeros(n)).unwrap().norm() == 0.0);
        }
    }

    #[test]
    fn sharp_component_kernel() {
        let mut r = rng(6);
        let a = Wedge2Endo::random(4, &mut r);
        let b = Wedge2Endo::random(4, &mut r);
        let (at, bt) = (a.adjoint().four_index(), b.adjoint().four_index());
        let k = &sharp_kernel(&at, &bt) + &sharp_kernel(&bt, &at);
        assert!((&sharp(&a, &b).unwrap().four_index() + &k).max_abs() < 1e-13);
    }

    #[test]
    fn sphere_reaction_term() {
        for n in 3..=5 {
            let k = 0.7;
            let q = reaction_q(&CurvatureOperator::constant(n, k));
            let want = Wedge2Endo::identity(n).scale(4.0 * k * k * (n - 1) as f64);
            assert!(q.sub(&want).norm() < 1e-12);
        }
        assert!(reaction_q(&CurvatureOperator::zeros(4)).norm() == 0.0);
    }

    #[test]
    fn q_is_symmetric() {
        let mut r = rng(8);
        for _ in 0..100 {
            let q = reaction_q(&CurvatureOperator::random(4, &mut r));
            assert!(q.symmetry_defect() < 1e-12);
        }
    }

    #[test]
    fn s_is_linear_and_vanishes_on_zero() {
        let mut r = rng(9);
        let a = Wedge2Endo::random_symmetric(4, &mut r);
        let f1: Vec<_> = (0..4).map(|_| Wedge2Endo::random_symmetric(4, &mut r)).collect();
        let f2: Vec<_> = (0..4).map(|_| Wedge2Endo::random_symmetric(4, &mut r)).collect();
        let comb: Vec<_> = f1.iter().zip(&f2).map(|(x, y)| x.scale(2.0).add(&y.scale(-0.5))).collect();
        let s1 = reaction_s(&a, &f1).unwrap();
        let s2 = reaction_s(&a, &f2).unwrap();
        let sc = reaction_s(&a, &comb).unwrap();
        for k in 0..4 {
            let lin = s1[k].scale(2.0).add(&s2[k].scale(-0.5));
            assert!(sc[k].sub(&lin).norm() < 1e-12);
        }
        let zero = reaction_s(&a, &vec![Wedge2Endo::zeros(4); 4]).unwrap();
        assert!(zero.iter().all(|z| z.norm() == 0.0));
        assert!(reaction_s(&a, &[Wedge2Endo::zeros(3)]).is_err());
    }

    #[test]
    fn s_is_derivative_of_q() {
        // d/dε Q(R + εF) = S(R, F)
        let mut r = rng(10);
        let a = Wedge2Endo::random_symmetric(4, &mut r);
        let f = Wedge2Endo::random_symmetric(4, &mut r);
        let eps = 1e-5;
        let fd = q_of(&a.add(&f.scale(eps)))
            .sub(&q_of(&a.sub(&f.scale(eps))))
            .scale(0.5 / eps);
        let s = reaction_s(&a, std::slice::from_ref(&f)).unwrap().remove(0);
        assert!(fd.sub(&s).norm() < 1e-8);
    }

    #[test]
    fn reaction_identities_on_u2() {
        let mut r = rng(11);
        let pbar = u2_projector();
        assert!(closure_defect(&pbar) < 1e-12);
        for _ in 0..20 {
            let curv = CurvatureOperator::random(4, &mut r);
            let scale = 1.0 + curv.rm().norm().powi(3);
            assert!(qcomp_residual(&curv, &pbar).unwrap() < 1e-10 * scale);
            let tx = Wedge2Endo::random_symmetric(4, &mut r);
            assert!(scomp_residual(&curv, &tx, &pbar).unwrap() < 1e-10 * scale);
        }
        // H = all of ∧²: P̂ = 0 and both sides vanish
        let all = Wedge2Endo::identity(4);
        assert!(qcomp_residual(&CurvatureOperator::random(4, &mut r), &all).unwrap() < 1e-14);
    }

    #[test]
    fn frame_forms_match_operator_forms() {
        let mut r = rng(12);
        let pbar = u2_projector();
        let phat = Wedge2Endo::identity(4).sub(&pbar);
        let curv = CurvatureOperator::random(4, &mut r);
        let rm = curv.rm();
        let q = qcomp_frame(&rm.four_index(), &pbar.four_index(), &phat.four_index());
        assert!((&q - &q_of(&rm).compose(&phat).four_index()).max_abs() < 1e-13);
        let tx = Wedge2Endo::random_symmetric(4, &mut r);
        let s = scomp_frame(&rm.four_index(), &tx.four_index(), &pbar.four_index(), &phat.four_index());
        let want = reaction_s(&rm, std::slice::from_ref(&tx)).unwrap().remove(0).compose(&phat);
        assert!((&s - &want.four_index()).max_abs() < 1e-13);
    }

    #[test]
    fn non_subalgebra_is_rejected() {
        // span{φ^(01), φ^(12)} is not closed
        let n = 3;
        let mut p = DMatrix::zeros(3, 3);
        p[(0, 0)] = 1.0;
        p[(2, 2)] = 1.0;
        let pbar = Wedge2Endo::from_matrix(n, p);
        let curv = CurvatureOperator::constant(3, 1.0);
        assert!(matches!(
            qcomp_residual(&curv, &pbar),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn u_tensor_forms_agree() {
        let mut r = rng(13);
        let n = 4;
        let curv = CurvatureOperator::random(n, &mut r);
        let t = random_covariant_curvature(n, &mut r);
        let rt = curv.tensor();
        let expanded = u_expanded(rt, &t);
        let from_def = reaction_u(&curv.rm(), &covariant_rm(&t)).unwrap();
        assert!((&from_def - &expanded).max_abs() < 1e-12);
        assert!((&u_lambda(rt, &t) - &expanded).max_abs() < 1e-12);
        // −8𝒫(C⌟₄e_m) reproduces the second group of C terms
        let c = c_tensor(rt, &t);
        for m in 0..n {
            let p = sym_projector(&insert_fourth(&c, m)).scale(-8.0);
            for ix in indices(n, 4) {
                assert!((p.get(&ix) - expanded.get(&[m, ix[0], ix[1], ix[2], ix[3]])).abs() < 1e-12);
            }
        }
        let zero = reaction_u(&curv.rm(), &vec![Wedge2Endo::zeros(n); n]).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn covariant_curvature_symmetries() {
        let t = random_covariant_curvature(4, &mut rng(14));
        for m in 0..4 {
            let s = Tensor::from_fn(4, 4, |ix| t.get(&[m, ix[0], ix[1], ix[2], ix[3]]));
            assert!(curvature_symmetry_defect(&s) < 1e-12);
        }
        for ix in indices(4, 5) {
            let (m, i, j, k, l) = (ix[0], ix[1], ix[2], ix[3], ix[4]);
            let cyc = t.get(&[m, i, j, k, l]) + t.get(&[i, j, m, k, l]) + t.get(&[j, m, i, k, l]);
            assert!(cyc.abs() < 1e-12);
        }
        assert!(t.max_abs() > 0.01);
    }

    #[test]
    fn lambda_commutes_with_contraction() {
        // Λ is a derivation: Λ^a_b(u⊗v) = Λ^a_b u ⊗ v + u ⊗ Λ^a_b v
        let mut r = rng(15);
        let u = Tensor::from_fn(3, 2, |_| r.gen_range(-1.0..1.0));
        let v = Tensor::from_fn(3, 1, |_| r.gen_range(-1.0..1.0));
        let lhs = lambda(&u.outer(&v), 0, 2);
        let rhs = &lambda(&u, 0, 2).outer(&v) + &u.outer(&lambda(&v, 0, 2));
        assert!((&lhs - &rhs).max_abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn sharp_is_symmetric(seed in any::<u64>(), n in 3usize..=4) {
            let mut r = rng(seed);
            let a = Wedge2Endo::random(n, &mut r);
            let b = Wedge2Endo::random(n, &mut r);
            let d = sharp(&a, &b).unwrap().sub(&sharp(&b, &a).unwrap()).norm();
            prop_assert!(d < 1e-12);
        }

        #[test]
        fn bracket_is_commutator(seed in any::<u64>(), n in 2usize..=6) {
            let mut r = rng(seed);
            let x = random_form(n, &mut r);
            let y = random_form(n, &mut r);
            let got = bracket(&x, &y, &DMatrix::identity(n, n)).unwrap().matrix();
            let want = x.matrix() * y.matrix() - y.matrix() * x.matrix();
            prop_assert!((got - want).amax() < 1e-12);
            prop_assert!(bracket_id(&x, &x).norm() == 0.0);
        }

        #[test]
        fn projector_is_idempotent(seed in any::<u64>()) {
            let mut r = rng(seed);
            let v = Tensor::from_fn(4, 4, |_| r.gen_range(-1.0..1.0));
            let p = sym_projector(&v);
            prop_assert!((&sym_projector(&p) - &p).max_abs() < 1e-14);
        }

        #[test]
        fn subalgebra_complement_bracket(seed in any::<u64>()) {
            // [H, K] ⊂ K for H = u(2)
            let mut r = rng(seed);
            let pbar = u2_projector();
            let h = pbar.apply(&random_form(4, &mut r));
            let k = random_form(4, &mut r);
            let k = k.sub(&pbar.apply(&k));
            prop_assert!(pbar.apply(&bracket_id(&h, &k)).norm() < 1e-12);
        }
    }
}
