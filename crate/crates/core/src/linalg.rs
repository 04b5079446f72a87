//! Small dense linear algebra: LU determinants and solves, rank-revealing
//! elimination, cofactor normals and cyclic Jacobi eigen-decomposition.
//!
//! Sizes in this crate never exceed 45×21, so everything is row-major `Vec`
//! storage with straightforward loops.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct DMat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| *a * *b).sum())
            .collect()
    }

    /// `AᵀA`.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let a = row[i];
                if a == T::zero() {
                    continue;
                }
                for j in i..n {
                    g[(i, j)] += a * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g[(i, j)] = g[(j, i)];
            }
        }
        g
    }

    pub fn without_col(&self, k: usize) -> Self {
        Self::from_fn(self.rows, self.cols - 1, |r, c| {
            self[(r, if c < k { c } else { c + 1 })]
        })
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), self.cols, |r, c| self[(idx[r], c)])
    }
}

impl<T> Index<(usize, usize)> for DMat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for DMat<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

/// In-place LU with partial pivoting. Returns the permutation sign, or
/// `None` when a pivot falls below `pivot_tol * max|a|`.
fn lu_in_place<T: Real>(a: &mut DMat<T>, perm: &mut [usize]) -> Option<T> {
    let n = a.rows;
    debug_assert_eq!(n, a.cols);
    let scale = a.max_abs();
    if scale == T::zero() || !scale.is_finite() {
        return None;
    }
    let tol = T::pivot_tol() * scale;
    let mut sign = T::one();
    for (i, p) in perm.iter_mut().enumerate() {
        *p = i;
    }
    for k in 0..n {
        let mut piv = k;
        let mut best = a[(k, k)].abs();
        for r in k + 1..n {
            let v = a[(r, k)].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < tol {
            return None;
        }
        if piv != k {
            for c in 0..n {
                a.data.swap(k * n + c, piv * n + c);
            }
            perm.swap(k, piv);
            sign = -sign;
        }
        let d = a[(k, k)];
        for r in k + 1..n {
            let f = a[(r, k)] / d;
            if f == T::zero() {
                a[(r, k)] = T::zero();
                continue;
            }
            a[(r, k)] = f;
            for c in k + 1..n {
                let v = a[(k, c)];
                a[(r, c)] -= f * v;
            }
        }
    }
    Some(sign)
}

/// Determinant by LU with partial pivoting; numerically singular matrices
/// report exactly zero.
pub fn det<T: Real>(a: &DMat<T>) -> T {
    assert_eq!(a.rows, a.cols, "determinant of a non-square matrix");
    if a.rows == 0 {
        return T::one();
    }
    let mut lu = a.clone();
    let mut perm = vec![0; a.rows];
    match lu_in_place(&mut lu, &mut perm) {
        Some(sign) => (0..a.rows).fold(sign, |acc, i| acc * lu[(i, i)]),
        None => T::zero(),
    }
}

/// Solves `a x = b`; `None` when `a` is numerically singular.
pub fn solve<T: Real>(a: &DMat<T>, b: &[T]) -> Option<Vec<T>> {
    let n = a.rows;
    assert_eq!(n, a.cols);
    assert_eq!(n, b.len());
    let mut lu = a.clone();
    let mut perm = vec![0; n];
    lu_in_place(&mut lu, &mut perm)?;
    let mut y: Vec<T> = perm.iter().map(|&p| b[p]).collect();
    for i in 0..n {
        for k in 0..i {
            let v = y[k];
            y[i] -= lu[(i, k)] * v;
        }
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let v = y[k];
            y[i] -= lu[(i, k)] * v;
        }
        y[i] /= lu[(i, i)];
    }
    Some(y)
}

pub fn inverse<T: Real>(a: &DMat<T>) -> Option<DMat<T>> {
    let n = a.rows;
    let mut lu = a.clone();
    let mut perm = vec![0; n];
    lu_in_place(&mut lu, &mut perm)?;
    let mut inv = DMat::zeros(n, n);
    for col in 0..n {
        let mut y: Vec<T> = perm
            .iter()
            .map(|&p| if p == col { T::one() } else { T::zero() })
            .collect();
        for i in 0..n {
            for k in 0..i {
                let v = y[k];
                y[i] -= lu[(i, k)] * v;
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let v = y[k];
                y[i] -= lu[(i, k)] * v;
            }
            y[i] /= lu[(i, i)];
        }
        for (r, v) in y.into_iter().enumerate() {
            inv[(r, col)] = v;
        }
    }
    Some(inv)
}

/// Result of rank-revealing Gaussian elimination on a `k × d` matrix.
#[derive(Clone, Debug)]
pub struct NullVector<T> {
    /// Number of pivots found (capped at `max_rank`).
    pub rank: usize,
    /// Unnormalized generator of the one-dimensional null space, when the
    /// elimination leaves exactly one free column.
    pub vector: Option<Vec<T>>,
}

/// Gaussian elimination with partial (row) pivoting, column by column.
/// A column whose best remaining pivot is below `rel_tol * max|a|` is free.
/// Elimination stops after `max_rank` pivots; the columns left over are free.
pub fn null_vector<T: Real>(a: &DMat<T>, rel_tol: T, max_rank: usize) -> NullVector<T> {
    let (k, d) = (a.rows, a.cols);
    let mut m = a.clone();
    let scale = m.max_abs();
    if scale == T::zero() || !scale.is_finite() {
        return NullVector {
            rank: 0,
            vector: None,
        };
    }
    let tol = rel_tol * scale;
    let mut pivot_cols = Vec::with_capacity(d);
    let mut row = 0;
    for col in 0..d {
        if row >= k || pivot_cols.len() >= max_rank {
            break;
        }
        let mut piv = row;
        let mut best = m[(row, col)].abs();
        for r in row + 1..k {
            let v = m[(r, col)].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < tol {
            continue;
        }
        if piv != row {
            for c in 0..d {
                m.data.swap(row * d + c, piv * d + c);
            }
        }
        let p = m[(row, col)];
        for r in row + 1..k {
            let f = m[(r, col)] / p;
            if f == T::zero() {
                continue;
            }
            for c in col..d {
                let v = m[(row, c)];
                m[(r, c)] -= f * v;
            }
        }
        pivot_cols.push(col);
        row += 1;
    }
    let rank = pivot_cols.len();
    if rank + 1 != d {
        return NullVector { rank, vector: None };
    }
    let free = (0..d)
        .find(|c| !pivot_cols.contains(c))
        .expect("exactly one free column");
    let mut x = vec![T::zero(); d];
    x[free] = T::one();
    for r in (0..rank).rev() {
        let pc = pivot_cols[r];
        let mut s = T::zero();
        for c in pc + 1..d {
            s += m[(r, c)] * x[c];
        }
        x[pc] = -s / m[(r, pc)];
    }
    NullVector {
        rank,
        vector: Some(x),
    }
}

/// Generalized cross product in `R^d` of the `d − 1` rows of `a`: expansion
/// of the formal determinant whose last row holds the unit vectors, so the
/// `k`-th coordinate is the signed minor omitting column `k`.
///
/// Evaluated as `x · det([a; xᵀ]) / |x|²` for a null vector `x`, since
/// `N·y = det([a; yᵀ])` for every `y`. Zero when the rows are dependent.
pub fn cofactor_normal<T: Real>(a: &DMat<T>) -> Vec<T> {
    let d = a.cols;
    assert_eq!(a.rows + 1, d, "cofactor normal needs d-1 rows in R^d");
    let Some(x) = null_vector(a, T::epsilon(), d - 1).vector else {
        return vec![T::zero(); d];
    };
    let aug = DMat::from_fn(d, d, |r, c| if r + 1 < d { a[(r, c)] } else { x[c] });
    let xx: T = x.iter().map(|v| *v * *v).sum();
    let k = det(&aug) / xx;
    x.into_iter().map(|v| v * k).collect()
}

/// [`cofactor_normal`] by explicit expansion into `d` minors.
pub fn cofactor_normal_by_minors<T: Real>(a: &DMat<T>) -> Vec<T> {
    let d = a.cols;
    assert_eq!(a.rows + 1, d, "cofactor normal needs d-1 rows in R^d");
    let last = d - 1;
    (0..d)
        .map(|k| {
            let minor = det(&a.without_col(k));
            if (last + k) % 2 == 0 {
                minor
            } else {
                -minor
            }
        })
        .collect()
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymEigen<T> {
    /// Eigenvalues in ascending order.
    pub values: Vec<T>,
    /// Eigenvectors stored as columns, matching `values`.
    pub vectors: DMat<T>,
    pub sweeps: usize,
}

/// Cyclic Jacobi iteration, row-by-row sweep order, until the off-diagonal
/// Frobenius norm is at most `rel_tol * ‖a‖_F`.
pub fn jacobi_eigen<T: Real>(a: &DMat<T>, rel_tol: T, max_sweeps: usize) -> Result<SymEigen<T>> {
    let n = a.rows;
    if n != a.cols {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix is not square",
            a.rows, a.cols
        )));
    }
    let mut m = a.clone();
    let mut v = DMat::identity(n);
    let target = rel_tol * a.frobenius();
    let off = |m: &DMat<T>| -> T {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)] * m[(i, j)];
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&m) > target {
        if sweeps == max_sweeps {
            return Err(Error::EigenNoConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::two() * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = DMat::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEigen {
        values,
        vectors,
        sweeps,
    })
}

/// Upper-triangular factor `R` (`cols × cols`) of a Householder QR of
/// `a`, which needs at least as many rows as columns.
pub fn householder_r<T: Real>(a: &DMat<T>) -> Result<DMat<T>> {
    let (m, n) = (a.rows, a.cols);
    if m < n {
        return Err(Error::DimensionMismatch(format!("QR of a {m}x{n} matrix needs rows >= cols")));
    }
    let mut w = a.clone();
    let mut v = vec![T::zero(); m];
    for k in 0..n {
        let norm = (k..m).map(|i| w[(i, k)] * w[(i, k)]).sum::<T>().sqrt();
        if norm == T::zero() {
            continue;
        }
        let alpha = if w[(k, k)] > T::zero() { -norm } else { norm };
        for i in k..m {
            v[i] = w[(i, k)];
        }
        v[k] -= alpha;
        let vv = (k..m).map(|i| v[i] * v[i]).sum::<T>();
        if vv == T::zero() {
            continue;
        }
        for j in k..n {
            let f = T::two() * (k..m).map(|i| v[i] * w[(i, j)]).sum::<T>() / vv;
            for i in k..m {
                let vi = v[i];
                w[(i, j)] -= f * vi;
            }
        }
    }
    Ok(DMat::from_fn(n, n, |r, c| if c >= r { w[(r, c)] } else { T::zero() }))
}

/// Unit right singular vector of `a` for its smallest singular value, i.e.
/// the minimizer of `|a x|` over `|x| = 1`. Coincides with the null space
/// generator when `a` has a one-dimensional null space; on inconsistent
/// stacks it weighs every row instead of the pivot rows only.
///
/// Inverse iteration on `RᵀR` from a Householder QR, with cyclic Jacobi on
/// `AᵀA` as fallback when the iteration stalls (no spectral gap).
pub fn least_squares_null_vector<T: Real>(a: &DMat<T>) -> Result<Vec<T>> {
    let n = a.cols;
    if a.rows >= n && n > 0 {
        if let Some(x) = inverse_iteration(&householder_r(a)?) {
            return Ok(x);
        }
    }
    // the off-diagonal rounding floor of a sweep grows like n·eps
    let tol = T::lit(4.0) * T::from_usize_lossy(n.max(1)) * T::epsilon();
    let eig = jacobi_eigen(&a.gram(), tol, 100)?;
    Ok((0..n).map(|r| eig.vectors[(r, 0)]).collect())
}

fn inverse_iteration<T: Real>(r: &DMat<T>) -> Option<Vec<T>> {
    let n = r.rows;
    let floor = T::epsilon() * r.frobenius();
    if floor == T::zero() {
        return None;
    }
    // exact zeros on the diagonal are lifted to the rounding level
    let mut rr = r.clone();
    for k in 0..n {
        if rr[(k, k)].abs() < floor {
            rr[(k, k)] = if rr[(k, k)] < T::zero() { -floor } else { floor };
        }
    }
    let normalize = |x: &mut Vec<T>| {
        let s = x.iter().map(|v| *v * *v).sum::<T>().sqrt();
        x.iter_mut().for_each(|v| *v /= s);
        s.is_finite() && s > T::zero()
    };
    let mut x = vec![T::one(); n];
    normalize(&mut x);
    for _ in 0..12 {
        // Rᵀ y = x, then R z = y
        let mut y = x.clone();
        for i in 0..n {
            let s = (0..i).map(|k| rr[(k, i)] * y[k]).sum::<T>();
            y[i] = (y[i] - s) / rr[(i, i)];
        }
        let mut z = y;
        for i in (0..n).rev() {
            let s = (i + 1..n).map(|k| rr[(i, k)] * z[k]).sum::<T>();
            z[i] = (z[i] - s) / rr[(i, i)];
        }
        if !normalize(&mut z) {
            return None;
        }
        let overlap = z.iter().zip(&x).map(|(p, q)| *p * *q).sum::<T>().abs();
        x = z;
        if T::one() - overlap <= T::lit(16.0) * T::epsilon() {
            return Some(x);
        }
    }
    None
}

/// Elementary symmetric polynomial of degree `k` of `values`.
pub fn elementary_symmetric<T: Real>(values: &[T], k: usize) -> T {
    let mut e = vec![T::zero(); k + 1];
    e[0] = T::one();
    for &x in values {
        for j in (1..=k).rev() {
            let prev = e[j - 1];
            e[j] += x * prev;
        }
    }
    e[k]
}

/// `Σ_S |cofactor_normal(a_S)|²` over all `(d−1)`-row subsets `S` of the
/// rows of `a`. By Cauchy–Binet this is `e_{d−1}` of the eigenvalues of
/// `AᵀA`, i.e. the sum of its principal minors of order `d − 1`.
pub fn cofactor_norm_sum<T: Real>(a: &DMat<T>) -> Result<T> {
    let d = a.cols;
    if a.rows + 1 < d {
        return Ok(T::zero());
    }
    let g = a.gram();
    let mut sum = T::zero();
    for k in 0..d {
        let idx: Vec<usize> = (0..d).filter(|&i| i != k).collect();
        let minor = DMat::from_fn(d - 1, d - 1, |r, c| g[(idx[r], idx[c])]);
        sum += det(&minor);
    }
    Ok(sum.max(T::zero()))
}

/// [`cofactor_norm_sum`] through the eigenvalues of `AᵀA` (cyclic Jacobi).
pub fn cofactor_norm_sum_by_eigen<T: Real>(a: &DMat<T>) -> Result<T> {
    let d = a.cols;
    if a.rows + 1 < d {
        return Ok(T::zero());
    }
    let eig = jacobi_eigen(&a.gram(), T::epsilon(), 100)?;
    let clamped: Vec<T> = eig.values.iter().map(|v| v.max(T::zero())).collect();
    Ok(elementary_symmetric(&clamped, d - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hilbert(n: usize) -> DMat<f64> {
        DMat::from_fn(n, n, |r, c| 1.0 / (r + c + 1) as f64)
    }

    /// Permutation-expansion determinant, small n only.
    fn det_leibniz(a: &DMat<f64>) -> f64 {
        fn rec(a: &DMat<f64>, row: usize, used: &mut Vec<bool>, sign: f64) -> f64 {
            let n = a.rows();
            if row == n {
                return sign;
            }
            let mut total = 0.0;
            for c in 0..n {
                if used[c] {
                    continue;
                }
                // each already-used larger column is one inversion
                let greater = (c + 1..n).filter(|&j| used[j]).count();
                let s = if greater % 2 == 0 { sign } else { -sign };
                used[c] = true;
                total += a[(row, c)] * rec(a, row + 1, used, s);
                used[c] = false;
            }
            total
        }
        rec(a, 0, &mut vec![false; a.rows()], 1.0)
    }

    #[test]
    fn det_matches_leibniz() {
        let a = DMat::from_fn(5, 5, |r, c| ((r * 7 + c * 3) % 11) as f64 - 4.5 + (r == c) as u8 as f64);
        let d1 = det(&a);
        let d2 = det_leibniz(&a);
        assert!((d1 - d2).abs() <= 1e-10 * d2.abs().max(1.0), "{d1} vs {d2}");
    }

    #[test]
    fn singular_det_is_zero() {
        let a = DMat::from_rows(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, 1.0]]);
        assert_eq!(det(&a), 0.0);
        assert!(solve(&a, &[1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn solve_and_inverse_agree() {
        let a = hilbert(5);
        let b = [1.0, -1.0, 2.0, 0.5, 3.0];
        let x = solve(&a, &b).unwrap();
        let inv = inverse(&a).unwrap();
        let y = inv.matvec(&b);
        let r = a.matvec(&x);
        for i in 0..5 {
            assert!((r[i] - b[i]).abs() < 1e-8);
            assert!((x[i] - y[i]).abs() < 1e-5 * x[i].abs().max(1.0));
        }
    }

    #[test]
    fn null_vector_of_rank_deficient_rows() {
        let a: DMat<f64> = DMat::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]);
        let nv = null_vector(&a, 1e-10, 2);
        assert_eq!(nv.rank, 2);
        let x = nv.vector.unwrap();
        assert!(a.matvec(&x).iter().all(|v| v.abs() < 1e-14));
        let b = DMat::from_rows(&[[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]);
        let nv = null_vector(&b, 1e-10, 2);
        assert_eq!(nv.rank, 1);
        assert!(nv.vector.is_none());
    }

    #[test]
    fn cofactor_normal_in_r3_is_cross_product() {
        let a: DMat<f64> = DMat::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 2.0]]);
        let n = cofactor_normal(&a);
        let cross: [f64; 3] = [
            2.0 * 2.0 - 3.0 * 0.5,
            3.0 * -1.0 - 1.0 * 2.0,
            1.0 * 0.5 - 2.0 * -1.0,
        ];
        for i in 0..3 {
            assert!((n[i] - cross[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobi_on_diagonal_and_dense() {
        let d = DMat::from_fn(6, 6, |r, c| if r == c { [3.0, 1.0, 4.0, 1.0, 5.0, 9.0][r] } else { 0.0 });
        let e = jacobi_eigen(&d, 1e-12, 50).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 3.0, 4.0, 5.0, 9.0]);
        let h = hilbert(6);
        let e = jacobi_eigen(&h, 1e-12, 50).unwrap();
        // A v = λ v for every pair
        for k in 0..6 {
            let v: Vec<f64> = (0..6).map(|r| e.vectors[(r, k)]).collect();
            let av = h.matvec(&v);
            for r in 0..6 {
                assert!((av[r] - e.values[k] * v[r]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn elementary_symmetric_small() {
        assert_eq!(elementary_symmetric(&[1.0, 2.0, 3.0], 2), 11.0);
        assert_eq!(elementary_symmetric(&[1.0, 2.0, 3.0], 3), 6.0);
    }

    #[test]
    fn cofactor_norm_sum_matches_enumeration() {
        // 4 rows in R^3: sum over the 4 two-row subsets of |cross|^2
        let a = DMat::from_rows(&[
            [1.0, 2.0, 0.5],
            [0.0, -1.0, 1.0],
            [2.0, 0.0, 1.0],
            [1.0, 1.0, 1.0],
        ]);
        let mut brute = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                let n = cofactor_normal(&a.select_rows(&[i, j]));
                brute += n.iter().map(|v| v * v).sum::<f64>();
            }
        }
        let cb = cofactor_norm_sum(&a).unwrap();
        assert!((cb - brute).abs() < 1e-12 * brute);
        let ev = cofactor_norm_sum_by_eigen(&a).unwrap();
        assert!((ev - brute).abs() < 1e-12 * brute);
    }

    #[test]
    fn cofactor_normal_matches_minor_expansion() {
        let mut seed = 7u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for d in [3usize, 6, 21] {
            let a = DMat::from_fn(d - 1, d, |_, _| rnd());
            let fast = cofactor_normal(&a);
            let slow = cofactor_normal_by_minors(&a);
            let scale = slow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, y) in fast.iter().zip(&slow) {
                assert!((x - y).abs() <= 1e-10 * scale, "d={d}: {x} vs {y}");
            }
        }
        let dep = DMat::from_rows(&[[1.0, 2.0, 3.0, 4.0], [2.0, 4.0, 6.0, 8.0], [0.0, 1.0, 0.0, 1.0]]);
        assert_eq!(cofactor_normal(&dep), vec![0.0; 4]);
    }

    #[test]
    fn least_squares_null_vector_on_consistent_and_noisy_stacks() {
        let mut seed = 19u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        // 30 rows in R^8 orthogonal to a fixed x
        let x: Vec<f64> = (0..8).map(|_| rnd()).collect();
        let xx: f64 = x.iter().map(|v| v * v).sum();
        let a = DMat::from_fn(30, 8, |_, _| rnd());
        let a = DMat::from_fn(30, 8, |r, c| {
            let p: f64 = (0..8).map(|k| a[(r, k)] * x[k]).sum();
            a[(r, c)] - p * x[c] / xx
        });
        let y = least_squares_null_vector(&a).unwrap();
        let cos = y.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() / xx.sqrt();
        assert!((cos.abs() - 1.0).abs() < 1e-12);
        let e = null_vector(&a, 1e-12, 7).vector.unwrap();
        let en = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cos_e = e.iter().zip(&y).map(|(p, q)| p * q).sum::<f64>() / en;
        assert!((cos_e.abs() - 1.0).abs() < 1e-12);

        let noisy = DMat::from_fn(30, 8, |r, c| a[(r, c)] + 1e-3 * rnd());
        let resid = |v: &[f64]| {
            let n = v.iter().map(|t| t * t).sum::<f64>().sqrt();
            noisy.matvec(v).iter().map(|t| t * t).sum::<f64>().sqrt() / n
        };
        let ls = least_squares_null_vector(&noisy).unwrap();
        let el = null_vector(&noisy, 1e-12, 7).vector.unwrap();
        assert!(resid(&ls) <= resid(&el) * (1.0 + 1e-12));
        let eig = jacobi_eigen(&noisy.gram(), 1e-15, 100).unwrap();
        let jv: Vec<f64> = (0..8).map(|r| eig.vectors[(r, 0)]).collect();
        let cos_j = jv.iter().zip(&ls).map(|(p, q)| p * q).sum::<f64>();
        assert!((cos_j.abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn householder_r_reproduces_the_gram_matrix() {
        let a = DMat::from_fn(9, 5, |r, c| ((r * 7 + c * 3) % 11) as f64 - 5.0 + 0.1 * (r * c) as f64);
        let r = householder_r(&a).unwrap();
        let rtr = r.transpose().matmul(&r);
        let g = a.gram();
        for i in 0..5 {
            for j in 0..5 {
                assert!((rtr[(i, j)] - g[(i, j)]).abs() < 1e-10 * g.frobenius());
            }
        }
        assert!(householder_r(&DMat::<f64>::zeros(3, 5)).is_err());
    }
}
