//! Candidate holonomy algebras: generation from curvature seeds, projections
//! onto an algebra and its complement, and coarse classification.

use crate::error::{Error, Result};
use crate::tensor::{indices, Tensor};
use crate::wedge::{
    bracket_id, lambda_contract, trilinear_t, wedge_dim, TwoForm, Wedge2Endo,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

// Fixed seed for the "generic" commutant elements, so reports are reproducible.
const COMMUTANT_SEED: u64 = 0x5eed_c0de;

/// A bracket-closed subspace of `∧²R^n` with an orthonormal basis (trace form).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subalgebra {
    n: usize,
    basis: Vec<TwoForm>,
}

impl Subalgebra {
    pub fn trivial(n: usize) -> Self {
        Self { n, basis: Vec::new() }
    }

    pub fn full(n: usize) -> Self {
        Self {
            n,
            basis: (0..wedge_dim(n)).map(|i| TwoForm::unit(n, i)).collect(),
        }
    }

    /// Wraps an orthonormal basis; fails if it is not orthonormal to 1e-12.
    pub fn from_orthonormal(n: usize, basis: Vec<TwoForm>) -> Result<Self> {
        check_orthonormal(n, &basis)?;
        Ok(Self { n, basis })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[TwoForm] {
        &self.basis
    }

    /// Largest `‖P̂[h_i, h_j]‖` over basis pairs.
    pub fn closure_defect(&self) -> f64 {
        let pbar = self.projector();
        let mut worst: f64 = 0.0;
        for (i, a) in self.basis.iter().enumerate() {
            for b in &self.basis[i + 1..] {
                let br = bracket_id(a, b);
                worst = worst.max(br.sub(&pbar.apply(&br)).norm());
            }
        }
        worst
    }

    /// `Σ φ^A ⊗ φ^A` over the basis.
    pub fn projector(&self) -> Wedge2Endo {
        let m = wedge_dim(self.n);
        let mut p = DMatrix::zeros(m, m);
        for h in &self.basis {
            let v = h.vector();
            p += &v * v.transpose();
        }
        Wedge2Endo::from_matrix(self.n, p)
    }

    /// Basis elements as antisymmetric `n × n` matrices.
    pub fn matrices(&self) -> Vec<DMatrix<f64>> {
        self.basis.iter().map(TwoForm::matrix).collect()
    }

    pub fn contains(&self, w: &TwoForm, tol: f64) -> bool {
        let p = self.projector();
        w.sub(&p.apply(w)).norm() <= tol * w.norm().max(1.0)
    }
}

fn check_orthonormal(n: usize, basis: &[TwoForm]) -> Result<()> {
    for (i, a) in basis.iter().enumerate() {
        if a.dim() != n {
            return Err(Error::InvalidInput("basis element of wrong dimension".into()));
        }
        for (j, b) in basis.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            if (a.inner(b) - want).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "basis not orthonormal at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Orthonormal basis of the column span, rank decided relative to the largest
/// singular value.
fn span_basis(n: usize, vectors: &[DVector<f64>], tol: f64) -> Vec<TwoForm> {
    if vectors.is_empty() {
        return Vec::new();
    }
    let m = wedge_dim(n);
    let a = DMatrix::from_fn(m, vectors.len(), |r, c| vectors[c][r]);
    let svd = a.svd(true, false);
    let u = svd.u.expect("left singular vectors");
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    order
        .into_iter()
        .filter(|&i| svd.singular_values[i] > tol * smax)
        .map(|i| TwoForm::from_vector(n, &u.column(i).into_owned()))
        .collect()
}

/// Smallest bracket-closed subspace containing the seeds.
pub fn generate_algebra(seeds: &[TwoForm], tol: f64) -> Result<Subalgebra> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("rank tolerance must be positive, got {tol}")));
    }
    let n = seeds
        .first()
        .ok_or_else(|| Error::InvalidInput("no seeds".into()))?
        .dim();
    if seeds.iter().any(|s| s.dim() != n) {
        return Err(Error::InvalidInput("seeds of mixed dimension".into()));
    }
    let vectors: Vec<DVector<f64>> = seeds.iter().map(TwoForm::vector).collect();
    let mut basis = span_basis(n, &vectors, tol);
    loop {
        let mut all: Vec<DVector<f64>> = basis.iter().map(TwoForm::vector).collect();
        for (i, a) in basis.iter().enumerate() {
            for b in &basis[i + 1..] {
                all.push(bracket_id(a, b).vector());
            }
        }
        let next = span_basis(n, &all, tol);
        if next.len() == basis.len() {
            // keep the freshly orthonormalized basis of the same span
            return Ok(Subalgebra { n, basis: next });
        }
        basis = next;
    }
}

/// Access to `∇^k Rm` at the points of a geometry, in orthonormal frame components.
pub trait CurvatureJet {
    fn dim(&self) -> usize;
    fn num_points(&self) -> usize;
    /// Highest derivative order that can be provided.
    fn max_order(&self) -> usize;
    /// `(∇^k R)_{x_1..x_k abcd}` at point `p`, derivative slots first.
    fn curvature_derivative(&self, p: usize, k: usize) -> Result<Tensor>;
}

/// All `∇_{X_1}…∇_{X_l}Rm(p)(φ^I)` for `l ≤ kmax`, basis directions and basis two-forms.
pub fn ambrose_singer_seeds<G: CurvatureJet + ?Sized>(
    geom: &G,
    p: usize,
    kmax: usize,
) -> Result<Vec<TwoForm>> {
    if kmax > geom.max_order() {
        return Err(Error::UnsupportedOrder {
            requested: kmax,
            available: geom.max_order(),
        });
    }
    let n = geom.dim();
    let mut seeds = Vec::new();
    for k in 0..=kmax {
        let d = geom.curvature_derivative(p, k)?;
        for dirs in indices(n, k) {
            let slice = Tensor::from_fn(n, 4, |ix| {
                let mut full = dirs.clone();
                full.extend_from_slice(ix);
                -d.get(&full)
            });
            let e = Wedge2Endo::from_four_index_unchecked(&slice);
            for c in 0..e.matrix().ncols() {
                seeds.push(TwoForm::from_vector(n, &e.matrix().column(c).into_owned()));
            }
        }
    }
    Ok(seeds)
}

/// The algebra generated by seeds up to each order `0..=kmax`, pooled over `points`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderedAlgebra {
    pub algebra: Subalgebra,
    /// Dimension of the algebra generated with derivatives up to order `k`.
    pub dims_by_order: Vec<usize>,
    /// First order after which the dimension no longer grows within `0..=kmax`.
    pub stabilization_order: usize,
}

pub fn algebra_up_to_order<G: CurvatureJet + ?Sized>(
    geom: &G,
    points: &[usize],
    kmax: usize,
    tol: f64,
) -> Result<OrderedAlgebra> {
    let n = geom.dim();
    let mut seeds: Vec<TwoForm> = Vec::new();
    let mut dims = Vec::with_capacity(kmax + 1);
    let mut algebra = Subalgebra::trivial(n);
    for k in 0..=kmax {
        if k > geom.max_order() {
            return Err(Error::UnsupportedOrder {
                requested: k,
                available: geom.max_order(),
            });
        }
        for &p in points {
            let d = geom.curvature_derivative(p, k)?;
            for dirs in indices(n, k) {
                let slice = Tensor::from_fn(n, 4, |ix| {
                    let mut full = dirs.clone();
                    full.extend_from_slice(ix);
                    -d.get(&full)
                });
                let e = Wedge2Endo::from_four_index_unchecked(&slice);
                for c in 0..e.matrix().ncols() {
                    seeds.push(TwoForm::from_vector(n, &e.matrix().column(c).into_owned()));
                }
            }
        }
        // keep the seed list small: replace it by a basis of its span
        let pooled = span_basis(
            n,
            &seeds.iter().map(TwoForm::vector).collect::<Vec<_>>(),
            tol,
        );
        algebra = if pooled.is_empty() {
            Subalgebra::trivial(n)
        } else {
            generate_algebra(&pooled, tol)?
        };
        seeds = algebra.basis.clone();
        dims.push(algebra.dim());
    }
    let last = *dims.last().unwrap_or(&0);
    let stabilization_order = dims.iter().position(|&d| d == last).unwrap_or(0);
    Ok(OrderedAlgebra {
        algebra,
        dims_by_order: dims,
        stabilization_order,
    })
}

/// Complementary orthogonal projections `P̄` onto `H` and `P̂ = Id − P̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPair {
    pub pbar: Wedge2Endo,
    pub phat: Wedge2Endo,
}

impl ProjectionPair {
    pub fn from_pbar(pbar: Wedge2Endo) -> Self {
        let phat = Wedge2Endo::identity(pbar.dim()).sub(&pbar);
        Self { pbar, phat }
    }

    pub fn n(&self) -> usize {
        self.pbar.dim()
    }

    /// Largest violation among `P̄+P̂ = Id`, idempotence, `P̄P̂ = 0`, self-adjointness.
    pub fn invariant_defect(&self) -> f64 {
        let id = Wedge2Endo::identity(self.n());
        let (b, h) = (&self.pbar, &self.phat);
        [
            b.add(h).sub(&id).norm(),
            b.compose(b).sub(b).norm(),
            h.compose(h).sub(h).norm(),
            b.compose(h).norm(),
            b.symmetry_defect(),
            h.symmetry_defect(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn rank_bar(&self) -> usize {
        self.pbar.matrix().trace().round() as usize
    }

    pub fn rank_hat(&self) -> usize {
        self.phat.matrix().trace().round() as usize
    }

    /// Largest entry of `𝒯[P̂,P̄,P̄]`, `𝒯[P̄,P̂,P̄]`, `𝒯[P̄,P̄,P̂]`.
    pub fn tvan_defect(&self) -> f64 {
        let (b, h) = (&self.pbar, &self.phat);
        [
            trilinear_t(h, b, b),
            trilinear_t(b, h, b),
            trilinear_t(b, b, h),
        ]
        .into_iter()
        .map(|t| t.expect("same dimension").max_abs())
        .fold(0.0, f64::max)
    }

    /// Largest entry of `P̄_abcd Λ^d_c P̂_ijkl` over all `a, b, i, j, k, l`.
    pub fn lambda_defect(&self) -> f64 {
        let n = self.n();
        let pb = self.pbar.four_index();
        let ph = self.phat.four_index();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                let coef = DMatrix::from_fn(n, n, |d, c| pb.get(&[a, b, c, d]));
                worst = worst.max(lambda_contract(&coef, &ph).max_abs());
            }
        }
        worst
    }
}

pub fn projection_pair(h: &Subalgebra) -> Result<ProjectionPair> {
    check_orthonormal(h.n, &h.basis)?;
    Ok(ProjectionPair::from_pbar(h.projector()))
}

/// Null space of `X ↦ ([X, h_1], …, [X, h_k])` over the given basis of candidate `X`.
fn commutant(h: &Subalgebra, candidates: &[DMatrix<f64>], tol: f64) -> Vec<DMatrix<f64>> {
    let n = h.n;
    let hs = h.matrices();
    if hs.is_empty() {
        return candidates.to_vec();
    }
    let rows = hs.len() * n * n;
    let a = DMatrix::from_fn(rows, candidates.len(), |r, c| {
        let (k, rest) = (r / (n * n), r % (n * n));
        let x = &candidates[c];
        let comm = x * &hs[k] - &hs[k] * x;
        comm[(rest / n, rest % n)]
    });
    // null space from the eigenvectors of AᵀA with small eigenvalues
    let ata = a.transpose() * &a;
    let eig = SymmetricEigen::new(ata);
    let scale = eig.eigenvalues.amax().max(1.0);
    (0..candidates.len())
        .filter(|&i| eig.eigenvalues[i].abs() <= tol * scale)
        .map(|i| {
            let v = eig.eigenvectors.column(i);
            let mut x = DMatrix::zeros(n, n);
            for (c, cand) in candidates.iter().enumerate() {
                x += cand * v[c];
            }
            x
        })
        .collect()
}

fn elementary_matrices(n: usize) -> Vec<DMatrix<f64>> {
    (0..n * n)
        .map(|k| {
            let mut e = DMatrix::zeros(n, n);
            e[(k / n, k % n)] = 1.0;
            e
        })
        .collect()
}

fn generic_combination(basis: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(COMMUTANT_SEED);
    let mut x = DMatrix::zeros(n, n);
    for b in basis {
        x += b * rng.gen_range(0.5..1.5);
    }
    x
}

/// An `H`-invariant subspace of `R^n`, given by an orthonormal basis (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantSubspace {
    pub basis: DMatrix<f64>,
}

impl InvariantSubspace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Splits `R^n` into irreducible `H`-invariant blocks via the eigenspaces of a
/// generic symmetric element of the commutant.
pub fn invariant_subspaces(h: &Subalgebra, tol: f64) -> Vec<InvariantSubspace> {
    let n = h.n;
    let comm = commutant(h, &elementary_matrices(n), tol);
    let sym: Vec<DMatrix<f64>> = comm.iter().map(|x| (x + x.transpose()) * 0.5).collect();
    let y = generic_combination(&sym, n);
    let eig = SymmetricEigen::new(y);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let spread = eig.eigenvalues.amax().max(1.0);
    let gap = 1e-6 * spread;
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match blocks.last_mut() {
            Some(b) if (eig.eigenvalues[i] - eig.eigenvalues[*b.last().unwrap()]).abs() < gap => {
                b.push(i)
            }
            _ => blocks.push(vec![i]),
        }
    }
    blocks
        .into_iter()
        .map(|b| InvariantSubspace {
            basis: DMatrix::from_fn(n, b.len(), |r, c| eig.eigenvectors[(r, b[c])]),
        })
        .collect()
}

/// Looks for an orthogonal complex structure `J` commuting with `H`.
pub fn detect_complex_structure(h: &Subalgebra, tol: f64) -> Result<Option<DMatrix<f64>>> {
    let n = h.n;
    if n % 2 == 1 {
        return Err(Error::Unsupported(format!(
            "complex structures need even dimension, got {n}"
        )));
    }
    let antisym: Vec<DMatrix<f64>> = (0..wedge_dim(n)).map(|i| TwoForm::unit(n, i).matrix()).collect();
    let comm = commutant(h, &antisym, 1e-12);
    if comm.is_empty() {
        return Ok(None);
    }
    let y = generic_combination(&comm, n);
    // polar part J = Y (YᵀY)^{-1/2}
    let eig = SymmetricEigen::new(y.transpose() * &y);
    let smax = eig.eigenvalues.amax();
    if smax == 0.0 || eig.eigenvalues.min() <= 1e-12 * smax {
        return Ok(None);
    }
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig.eigenvectors.transpose();
    let j = &y * inv_sqrt;
    let residual = (&j * &j + DMatrix::identity(n, n)).norm();
    let commutes = h
        .matrices()
        .iter()
        .map(|x| (&j * x - x * &j).norm())
        .fold(0.0, f64::max);
    if residual < tol && commutes < tol.max(1e-8) {
        Ok(Some(j))
    } else {
        Ok(None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BergerCandidate {
    pub label: String,
    pub dim: usize,
}

/// Berger-list groups whose algebra has dimension `dim_hol` in dimension `n`.
/// Dimension matching only; a reducible or locally symmetric metric can share a
/// dimension with an entry, so the list is advisory.
pub fn berger_candidates(dim_hol: usize, n: usize) -> Vec<BergerCandidate> {
    let mut out = Vec::new();
    let mut push = |label: String, dim: usize| {
        if dim == dim_hol {
            out.push(BergerCandidate { label, dim });
        }
    };
    if dim_hol == 0 {
        push("trivial".into(), 0);
        return out;
    }
    push(format!("SO({n})"), wedge_dim(n));
    if n % 2 == 0 && n >= 4 {
        let m = n / 2;
        push(format!("U({m})"), m * m);
        push(format!("SU({m})"), m * m - 1);
    }
    if n % 4 == 0 {
        let m = n / 4;
        push(format!("Sp({m})"), m * (2 * m + 1));
        if m >= 2 {
            push(format!("Sp({m})·Sp(1)"), m * (2 * m + 1) + 3);
        }
    }
    if n == 7 {
        push("G2".into(), 14);
    }
    if n == 8 {
        push("Spin(7)".into(), 21);
    }
    if out.is_empty() {
        out.push(BergerCandidate {
            label: "reducible/symmetric-unresolved".into(),
            dim: dim_hol,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HolonomyReport {
    pub dim: usize,
    pub berger_candidates: Vec<BergerCandidate>,
    pub invariant_subspaces: Vec<usize>,
    /// Row-major `n × n` matrix of `J`, when one commutes with the algebra.
    pub complex_structure: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims_by_order: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stabilization_order: Option<usize>,
}

impl HolonomyReport {
    pub fn new(h: &Subalgebra, tol: f64) -> Self {
        let n = h.n;
        let blocks = invariant_subspaces(h, tol);
        let complex_structure = if n % 2 == 0 {
            detect_complex_structure(h, 1e-8)
                .ok()
                .flatten()
                .map(|j| (0..n * n).map(|k| j[(k / n, k % n)]).collect())
        } else {
            None
        };
        let mut berger = berger_candidates(h.dim(), n);
        if blocks.len() > 1 && !berger.iter().any(|b| b.label == "trivial") {
            berger.push(BergerCandidate {
                label: "reducible".into(),
                dim: h.dim(),
            });
        }
        Self {
            dim: h.dim(),
            berger_candidates: berger,
            invariant_subspaces: blocks.iter().map(InvariantSubspace::dim).collect(),
            complex_structure,
            dims_by_order: None,
            stabilization_order: None,
        }
    }

    pub fn from_ordered(o: &OrderedAlgebra, tol: f64) -> Self {
        let mut r = Self::new(&o.algebra, tol);
        r.dims_by_order = Some(o.dims_by_order.clone());
        r.stabilization_order = Some(o.stabilization_order);
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wedge::CurvatureOperator;

    fn seeds_from(r: &CurvatureOperator) -> Vec<TwoForm> {
        let rm = r.rm();
        let n = r.dim();
        (0..wedge_dim(n))
            .map(|i| rm.apply(&TwoForm::unit(n, i)))
            .collect()
    }

    fn u2() -> Subalgebra {
        // the commutant of the standard J inside so(4)
        let n = 4;
        let mut j = DMatrix::zeros(4, 4);
        j[(0, 1)] = 1.0;
        j[(1, 0)] = -1.0;
        j[(2, 3)] = 1.0;
        j[(3, 2)] = -1.0;
        let jh = Subalgebra::from_orthonormal(
            n,
            vec![TwoForm::from_matrix(&j).unwrap().scale(1.0 / 2f64.sqrt())],
        )
        .unwrap();
        let antisym: Vec<_> = (0..6).map(|i| TwoForm::unit(n, i).matrix()).collect();
        let c: Vec<_> = commutant(&jh, &antisym, 1e-12)
            .iter()
            .map(|x| TwoForm::from_matrix(x).unwrap())
            .collect();
        generate_algebra(&c, DEFAULT_RANK_TOL).unwrap()
    }

    #[test]
    fn generation_examples() {
        let a = generate_algebra(&[TwoForm::basic(3, 0, 1)], 1e-8).unwrap();
        assert_eq!(a.dim(), 1);
        let b = generate_algebra(&[TwoForm::basic(3, 0, 1), TwoForm::basic(3, 1, 2)], 1e-8).unwrap();
        assert_eq!(b.dim(), 3);
        assert!(b.contains(&TwoForm::basic(3, 0, 2), 1e-12));
        // idempotent
        let again = generate_algebra(b.basis(), 1e-8).unwrap();
        assert_eq!(again.dim(), 3);
        assert!(matches!(generate_algebra(&[TwoForm::basic(3, 0, 1)], 0.0), Err(Error::InvalidInput(_))));
        assert!(generate_algebra(&[], 1e-8).is_err());
        assert_eq!(generate_algebra(&[TwoForm::zeros(4)], 1e-8).unwrap().dim(), 0);
    }

    #[test]
    fn product_of_spheres_is_abelian() {
        // S²×S²: R_abcd nonzero only within each factor
        let n = 4;
        let r = Tensor::from_fn(n, 4, |ix| {
            let f = |i: usize| i / 2;
            if ix.iter().all(|&i| f(i) == f(ix[0])) {
                let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                d(ix[0], ix[3]) * d(ix[1], ix[2]) - d(ix[0], ix[2]) * d(ix[1], ix[3])
            } else {
                0.0
            }
        });
        let curv = CurvatureOperator::new(r, 1e-12).unwrap();
        let h = generate_algebra(&seeds_from(&curv), 1e-8).unwrap();
        assert_eq!(h.dim(), 2);
        assert!(bracket_id(&h.basis()[0], &h.basis()[1]).norm() < 1e-12);
        let blocks = invariant_subspaces(&h, 1e-10);
        let mut dims: Vec<_> = blocks.iter().map(InvariantSubspace::dim).collect();
        dims.sort();
        assert_eq!(dims, vec![2, 2]);
        assert!(detect_complex_structure(&h, 1e-8).unwrap().is_some());
    }

    #[test]
    fn sphere_curvature_generates_everything() {
        let h = generate_algebra(&seeds_from(&CurvatureOperator::constant(4, 1.0)), 1e-8).unwrap();
        assert_eq!(h.dim(), 6);
        assert_eq!(invariant_subspaces(&h, 1e-10).len(), 1);
        assert!(detect_complex_structure(&h, 1e-8).unwrap().is_none());
    }

    #[test]
    fn projection_pairs() {
        let triv = projection_pair(&Subalgebra::trivial(4)).unwrap();
        assert_eq!(triv.pbar.norm(), 0.0);
        assert_eq!(triv.phat, Wedge2Endo::identity(4));
        let full = projection_pair(&Subalgebra::full(4)).unwrap();
        assert!(full.phat.norm() < 1e-15);
        let h = u2();
        assert_eq!(h.dim(), 4);
        assert!(h.closure_defect() < 1e-12);
        let p = projection_pair(&h).unwrap();
        assert_eq!((p.rank_bar(), p.rank_hat()), (4, 2));
        assert!(p.invariant_defect() < 1e-12);
        assert!(p.tvan_defect() < 1e-10);
        assert!(p.lambda_defect() < 1e-10);
        let bad = Subalgebra {
            n: 3,
            basis: vec![TwoForm::basic(3, 0, 1)],
        };
        assert!(projection_pair(&bad).is_err());
    }

    #[test]
    fn lambda_defect_detects_non_subalgebra() {
        // span{φ^(01), φ^(12)} is not bracket closed
        let s = Subalgebra {
            n: 3,
            basis: vec![TwoForm::unit(3, 0), TwoForm::unit(3, 2)],
        };
        assert!(s.closure_defect() > 0.1);
        let p = ProjectionPair::from_pbar(s.projector());
        assert!(p.lambda_defect() > 0.1);
        assert!(p.tvan_defect() > 0.1);
    }

    #[test]
    fn kahler_detection() {
        let h = u2();
        let j = detect_complex_structure(&h, 1e-8).unwrap().expect("J");
        assert!((&j * &j + DMatrix::identity(4, 4)).norm() < 1e-8);
        assert_eq!(invariant_subspaces(&h, 1e-10).len(), 1);
        let flat = detect_complex_structure(&Subalgebra::trivial(4), 1e-10).unwrap().unwrap();
        assert!((&flat * &flat + DMatrix::identity(4, 4)).norm() < 1e-10);
        assert!(matches!(
            detect_complex_structure(&Subalgebra::trivial(3), 1e-8),
            Err(Error::Unsupported(_))
        ));
        assert_eq!(invariant_subspaces(&Subalgebra::trivial(3), 1e-10).len(), 3);
    }

    #[test]
    fn berger_lookup() {
        let labels = |d, n| -> Vec<String> {
            berger_candidates(d, n).into_iter().map(|b| b.label).collect()
        };
        assert_eq!(labels(6, 4), vec!["SO(4)"]);
        assert_eq!(labels(4, 4), vec!["U(2)"]);
        assert_eq!(labels(14, 7), vec!["G2"]);
        assert_eq!(labels(21, 8), vec!["Spin(7)"]);
        assert_eq!(labels(0, 5), vec!["trivial"]);
        assert_eq!(labels(2, 4), vec!["reducible/symmetric-unresolved"]);
        assert!(labels(3, 4).contains(&"SU(2)".to_string()));
        assert_eq!(labels(10, 8), vec!["Sp(2)"]);
        assert_eq!(labels(13, 8), vec!["Sp(2)·Sp(1)"]);
    }

    #[test]
    fn report_serializes_with_named_fields() {
        let r = HolonomyReport::new(&u2(), 1e-10);
        let js = serde_json::to_value(&r).unwrap();
        assert_eq!(js["dim"], 4);
        assert_eq!(js["invariantSubspaces"].as_array().unwrap().len(), 1);
        assert!(js["complexStructure"].is_array());
        assert_eq!(js["bergerCandidates"][0]["label"], "U(2)");
        let sum: usize = r.invariant_subspaces.iter().sum();
        assert_eq!(sum, 4);
    }
}
