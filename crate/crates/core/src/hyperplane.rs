//! Normals to hyperplanes of the 21-dimensional space of symmetric 6×6
//! matrices: the alternating 20-linear cross product, the elimination-based
//! null vector, and the subset sum that measures how well a constraint
//! family spans a hyperplane.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, DMat};
use crate::scalar::Real;
use crate::tensor::{mat6_dot, mat6_scale, mat6_symmetrize, mat6_zero, Mat6};

/// Dimension of the space of symmetric 6×6 matrices.
pub const S6_DIM: usize = 21;

/// Seed of the pseudorandom subset sampler.
pub const SUBSET_SEED: u64 = 0x5EED;

/// Relative pivot threshold for rank decisions on stacked coordinates.
pub const RANK_TOL: f64 = 1e-10;

/// Zero-based `(α, β)` of the canonical basis element `k`.
pub fn canonical_pair(k: usize) -> (usize, usize) {
    if k < 6 {
        return (k, k);
    }
    let mut idx = 6;
    for a in 0..6 {
        for b in a + 1..6 {
            if idx == k {
                return (a, b);
            }
            idx += 1;
        }
    }
    panic!("canonical basis index {k} out of range");
}

/// Coordinates in the canonical orthonormal basis (symmetric part only).
pub fn canonical_coords<T: Real>(m: &Mat6<T>) -> [T; S6_DIM] {
    let r2 = T::two().sqrt();
    let mut out = [T::zero(); S6_DIM];
    for (k, o) in out.iter_mut().enumerate() {
        let (a, b) = canonical_pair(k);
        *o = if a == b {
            m[a][a]
        } else {
            (m[a][b] + m[b][a]) * T::half() * r2
        };
    }
    out
}

pub fn from_canonical_coords<T: Real>(x: &[T]) -> Mat6<T> {
    assert_eq!(x.len(), S6_DIM);
    let r2 = T::two().sqrt();
    let mut m = mat6_zero();
    for (k, &v) in x.iter().enumerate() {
        let (a, b) = canonical_pair(k);
        if a == b {
            m[a][a] = v;
        } else {
            m[a][b] = v / r2;
            m[b][a] = v / r2;
        }
    }
    m
}

/// Ordered basis `m_1..m_21` of the symmetric 6×6 matrices.
#[derive(Clone, Debug)]
pub struct S6Basis<T> {
    elems: Vec<Mat6<T>>,
}

impl<T: Real> S6Basis<T> {
    /// The six diagonal units followed by `(E_αβ + E_βα)/√2`, `α < β`, in
    /// lexicographic order. Orthonormal under `A:B`.
    pub fn canonical() -> Self {
        let elems = (0..S6_DIM)
            .map(|k| {
                let mut x = [T::zero(); S6_DIM];
                x[k] = T::one();
                from_canonical_coords(&x)
            })
            .collect();
        Self { elems }
    }

    pub fn new(elems: Vec<Mat6<T>>) -> Result<Self> {
        if elems.len() != S6_DIM {
            return Err(Error::DimensionMismatch(format!(
                "a basis of S6 has 21 elements, got {}",
                elems.len()
            )));
        }
        let basis = Self {
            elems: elems.iter().map(mat6_symmetrize).collect(),
        };
        if basis.coordinate_det() == T::zero() {
            return Err(Error::InvalidInput("basis elements are linearly dependent".into()));
        }
        Ok(basis)
    }

    pub fn elems(&self) -> &[Mat6<T>] {
        &self.elems
    }

    /// `det(m_1, …, m_21)` in canonical coordinates.
    pub fn coordinate_det(&self) -> T {
        let coords: Vec<[T; S6_DIM]> = self.elems.iter().map(canonical_coords).collect();
        linalg::det(&DMat::from_fn(S6_DIM, S6_DIM, |r, c| coords[c][r]))
    }
}

/// A constraint matrix together with where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint<T> {
    pub matrix: Mat6<T>,
    /// Index of the extra solution that produced it.
    pub solution: usize,
    /// Row of the divergence operator (0, 1, 2).
    pub row: usize,
    pub node: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintSet<T> {
    items: Vec<Constraint<T>>,
}

impl<T: Real> ConstraintSet<T> {
    pub fn new() -> Self {
        Self { items: Vec::new() }
    }

    /// Stores the symmetric part of `matrix`.
    pub fn push(&mut self, matrix: &Mat6<T>, solution: usize, row: usize, node: usize) {
        self.items.push(Constraint {
            matrix: mat6_symmetrize(matrix),
            solution,
            row,
            node,
        });
    }

    pub fn items(&self) -> &[Constraint<T>] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn matrices(&self) -> Vec<Mat6<T>> {
        self.items.iter().map(|c| c.matrix).collect()
    }
}

/// Generalized cross product of exactly 20 symmetric matrices with respect
/// to `basis`: expansion of the formal 21×21 determinant whose first 20
/// rows are `⟨M_i, m_j⟩` and whose last row holds `m_1..m_21`, divided by
/// `det(m_1..m_21)`.
pub fn cross21<T: Real>(m: &[Mat6<T>], basis: &S6Basis<T>) -> Result<Mat6<T>> {
    if m.len() != S6_DIM - 1 {
        return Err(Error::DimensionMismatch(format!(
            "cross21 takes 20 matrices, got {}",
            m.len()
        )));
    }
    let g = DMat::from_fn(S6_DIM - 1, S6_DIM, |i, j| mat6_dot(&m[i], &basis.elems[j]));
    let coef = linalg::cofactor_normal(&g);
    let norm = basis.coordinate_det();
    let mut out = mat6_zero();
    for (k, c) in coef.iter().enumerate() {
        if *c == T::zero() {
            continue;
        }
        let e = &basis.elems[k];
        for a in 0..6 {
            for b in 0..6 {
                out[a][b] += *c * e[a][b];
            }
        }
    }
    Ok(mat6_scale(&out, T::one() / norm))
}

fn coords_matrix<T: Real>(m: &[Mat6<T>]) -> DMat<T> {
    let rows: Vec<[T; S6_DIM]> = m.iter().map(canonical_coords).collect();
    DMat::from_rows(&rows)
}

/// Unit-norm sign-fixed null vector of the stacked canonical coordinates of
/// `m` (at least 20 matrices), and the numerical rank of the stack. The
/// normal is zero unless the rank is exactly 20.
pub fn nullspace_normal<T: Real>(m: &[Mat6<T>]) -> Result<(Mat6<T>, usize)> {
    if m.len() < S6_DIM - 1 {
        return Err(Error::InvalidInput(format!(
            "nullspace_normal needs at least 20 matrices, got {}",
            m.len()
        )));
    }
    let nv = linalg::null_vector(&coords_matrix(m), T::lit(RANK_TOL), S6_DIM);
    match nv.vector {
        Some(x) if nv.rank == S6_DIM - 1 => Ok((from_canonical_coords(&unit_sign_fixed(x)), nv.rank)),
        _ => Ok((mat6_zero(), nv.rank)),
    }
}

/// Like [`nullspace_normal`] but stops elimination after 20 pivots, so an
/// over-determined, slightly inconsistent stack still yields the normal of
/// the 20 pivot rows. Returns `None` when fewer than 20 pivots exist.
pub fn truncated_normal<T: Real>(m: &[Mat6<T>]) -> Option<Mat6<T>> {
    if m.len() < S6_DIM - 1 {
        return None;
    }
    let nv = linalg::null_vector(&coords_matrix(m), T::lit(RANK_TOL), S6_DIM - 1);
    nv.vector.map(|x| from_canonical_coords(&unit_sign_fixed(x)))
}

/// Scales to unit Euclidean norm with the first clearly nonzero entry positive.
pub(crate) fn unit_sign_fixed<T: Real>(mut x: Vec<T>) -> Vec<T> {
    let n = x.iter().map(|v| *v * *v).sum::<T>().sqrt();
    if n == T::zero() {
        return x;
    }
    let cut = n * T::lit(1e-12);
    let first = x.iter().find(|v| v.abs() > cut).copied().unwrap_or(T::one());
    let k = if first < T::zero() { -T::one() / n } else { T::one() / n };
    x.iter_mut().for_each(|v| *v *= k);
    x
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Lexicographic iterator over the `k`-subsets of `0..n`.
#[derive(Clone, Debug)]
pub struct Subsets {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Subsets {
    pub fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            current: (k <= n).then(|| (0..k).collect()),
        }
    }
}

impl Iterator for Subsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

/// The `k`-subsets of `0..n` to visit: all of them in lexicographic order
/// when there are at most `cap`, otherwise `cap` distinct sorted subsets
/// drawn with a fixed seed (in sorted order). The flag reports sampling.
pub fn subset_plan(n: usize, k: usize, cap: usize, seed: u64) -> (Vec<Vec<usize>>, bool) {
    if binomial(n, k) <= cap as u128 {
        return (Subsets::new(n, k).collect(), false);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = BTreeSet::new();
    while picked.len() < cap {
        let mut s = rand::seq::index::sample(&mut rng, n, k).into_vec();
        s.sort_unstable();
        picked.insert(s);
    }
    (picked.into_iter().collect(), true)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct F2Value<T> {
    pub value: T,
    pub subsets: usize,
    /// `true` when only a seeded sample of the 20-subsets was summed.
    pub sampled: bool,
}

/// `Σ N(M'):N(M')` over the 20-subsets `M'` of `m`, sampled down to
/// `subset_cap` subsets when there are more.
pub fn f2<T: Real>(m: &[Mat6<T>], subset_cap: usize) -> Result<F2Value<T>> {
    if m.len() < S6_DIM - 1 {
        return Err(Error::InvalidInput(format!(
            "F2 needs at least 20 matrices, got {}",
            m.len()
        )));
    }
    let basis = S6Basis::canonical();
    let (plan, sampled) = subset_plan(m.len(), S6_DIM - 1, subset_cap.max(1), SUBSET_SEED);
    let mut value = T::zero();
    for s in &plan {
        let sub: Vec<Mat6<T>> = s.iter().map(|&i| m[i]).collect();
        let n = cross21(&sub, &basis)?;
        value += mat6_dot(&n, &n);
    }
    Ok(F2Value {
        value,
        subsets: plan.len(),
        sampled,
    })
}

/// The full (unsampled) `F2` sum, via Cauchy–Binet: the sum over all
/// 20-subsets of squared cross products equals the degree-20 elementary
/// symmetric function of the eigenvalues of the 21×21 coordinate Gram matrix.
pub fn f2_exact<T: Real>(m: &[Mat6<T>]) -> Result<T> {
    if m.len() < S6_DIM - 1 {
        return Ok(T::zero());
    }
    linalg::cofactor_norm_sum(&coords_matrix(m))
}

/// Subset-sum reconstruction of the unit-determinant normal:
/// `(Σ det(±N)^{1/6})⁻¹ Σ ±N` over (sampled) 20-subsets, where `±` makes the
/// top-left entry positive. Subsets whose signed normal has a non-positive
/// determinant are skipped. `None` when no subset contributes.
pub fn crossprod_sum<T: Real>(m: &[Mat6<T>], subset_cap: usize) -> Result<Option<Mat6<T>>> {
    if m.len() < S6_DIM - 1 {
        return Ok(None);
    }
    let basis = S6Basis::canonical();
    let (plan, _) = subset_plan(m.len(), S6_DIM - 1, subset_cap.max(1), SUBSET_SEED);
    let mut num = mat6_zero();
    let mut den = T::zero();
    for s in &plan {
        let sub: Vec<Mat6<T>> = s.iter().map(|&i| m[i]).collect();
        let n = cross21(&sub, &basis)?;
        if let Some((signed, root)) = signed_sixth_root(&n) {
            for a in 0..6 {
                for b in 0..6 {
                    num[a][b] += signed[a][b];
                }
            }
            den += root;
        }
    }
    if den <= T::zero() {
        return Ok(None);
    }
    Ok(Some(mat6_scale(&num, T::one() / den)))
}

/// `(±N, det(±N)^{1/6})` with the sign making `N_11 > 0`; `None` for a zero
/// top-left entry or a non-positive determinant.
pub(crate) fn signed_sixth_root<T: Real>(n: &Mat6<T>) -> Option<(Mat6<T>, T)> {
    let top = n[0][0];
    if top == T::zero() || !top.is_finite() {
        return None;
    }
    let signed = if top < T::zero() { mat6_scale(n, -T::one()) } else { *n };
    // det(N) = |N|⁶ det(N/|N|); the unscaled determinant underflows for
    // subset normals of size ~1e-11 in single precision
    let norm = crate::tensor::mat6_norm(&signed);
    let d = crate::tensor::mat6_det(&mat6_scale(&signed, T::one() / norm));
    if !(d > T::zero()) {
        return None;
    }
    Some((signed, norm * d.powf(T::one() / T::lit(6.0))))
}
