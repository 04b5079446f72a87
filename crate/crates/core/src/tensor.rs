//! Voigt-notation tensor algebra for 3D linear elasticity.
//!
//! Index convention throughout: `11 ↦ 0, 22 ↦ 1, 33 ↦ 2, 23 ↦ 3, 13 ↦ 4,
//! 12 ↦ 5` (zero-based storage of the usual one-based Voigt map). Strain
//! vectors double their shear entries, stress vectors do not, so that
//! `σ_V = c ε_V` for the plain 6×6 matrix `c_{αβ} = C_{ijkl}`.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{self, DMat};
use crate::scalar::Real;

/// Plain 6×6 array, row-major.
pub type Mat6<T> = [[T; 6]; 6];

/// Zero-based `(i, j)` pairs in Voigt order.
pub const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// One-based Voigt index of the one-based tensor index pair `(i, j)`.
pub fn voigt_index(i: usize, j: usize) -> Result<usize> {
    if !(1..=3).contains(&i) || !(1..=3).contains(&j) {
        return Err(Error::IndexOutOfRange(i, j));
    }
    Ok(voigt0(i - 1, j - 1) + 1)
}

/// Zero-based Voigt index of zero-based `(i, j)`; callers guarantee range.
#[inline]
pub fn voigt0(i: usize, j: usize) -> usize {
    const MAP: [[usize; 3]; 3] = [[0, 5, 4], [5, 1, 3], [4, 3, 2]];
    MAP[i][j]
}

pub fn mat6_zero<T: Real>() -> Mat6<T> {
    [[T::zero(); 6]; 6]
}

pub fn mat6_identity<T: Real>() -> Mat6<T> {
    let mut m = mat6_zero();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

/// Frobenius inner product `A:B = tr(ABᵀ)`.
pub fn mat6_dot<T: Real>(a: &Mat6<T>, b: &Mat6<T>) -> T {
    let mut s = T::zero();
    for i in 0..6 {
        for j in 0..6 {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

pub fn mat6_norm<T: Real>(a: &Mat6<T>) -> T {
    mat6_dot(a, a).sqrt()
}

pub fn mat6_symmetrize<T: Real>(a: &Mat6<T>) -> Mat6<T> {
    let mut s = mat6_zero();
    for i in 0..6 {
        for j in 0..6 {
            s[i][j] = (a[i][j] + a[j][i]) * T::half();
        }
    }
    s
}

pub fn mat6_scale<T: Real>(a: &Mat6<T>, k: T) -> Mat6<T> {
    let mut s = *a;
    s.iter_mut().flatten().for_each(|v| *v *= k);
    s
}

pub fn mat6_sub<T: Real>(a: &Mat6<T>, b: &Mat6<T>) -> Mat6<T> {
    let mut out = *a;
    for i in 0..6 {
        for j in 0..6 {
            out[i][j] -= b[i][j];
        }
    }
    out
}

pub fn mat6_to_dmat<T: Real>(a: &Mat6<T>) -> DMat<T> {
    DMat::from_fn(6, 6, |r, c| a[r][c])
}

pub fn mat6_det<T: Real>(a: &Mat6<T>) -> T {
    linalg::det(&mat6_to_dmat(a))
}

/// Outer product `u ⊗ v = u vᵀ`.
pub fn outer6<T: Real>(u: &[T; 6], v: &[T; 6]) -> Mat6<T> {
    let mut m = mat6_zero();
    for i in 0..6 {
        for j in 0..6 {
            m[i][j] = u[i] * v[j];
        }
    }
    m
}

pub fn dot6<T: Real>(u: &[T; 6], v: &[T; 6]) -> T {
    u.iter().zip(v).map(|(a, b)| *a * *b).sum()
}

/// Symmetric 3×3 matrix, stored as `(s11, s22, s33, s23, s13, s12)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Sym3<T>(pub [T; 6]);

impl<T: Real> Sym3<T> {
    pub fn new(s11: T, s22: T, s33: T, s23: T, s13: T, s12: T) -> Self {
        Self([s11, s22, s33, s23, s13, s12])
    }

    pub fn zero() -> Self {
        Self([T::zero(); 6])
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::one(), T::one(), T::zero(), T::zero(), T::zero())
    }

    /// Reads the upper triangle; the lower triangle is ignored.
    pub fn from_matrix(m: &[[T; 3]; 3]) -> Self {
        Self::new(m[0][0], m[1][1], m[2][2], m[1][2], m[0][2], m[0][1])
    }

    pub fn to_matrix(&self) -> [[T; 3]; 3] {
        let mut m = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = self.get(i, j);
            }
        }
        m
    }

    /// Zero-based entry access.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.0[voigt0(i, j)]
    }

    /// `A:B = Σ_ij A_ij B_ij`.
    pub fn dot(&self, other: &Self) -> T {
        let a = &self.0;
        let b = &other.0;
        a[0] * b[0]
            + a[1] * b[1]
            + a[2] * b[2]
            + T::two() * (a[3] * b[3] + a[4] * b[4] + a[5] * b[5])
    }

    pub fn trace(&self) -> T {
        self.0[0] + self.0[1] + self.0[2]
    }

    pub fn scale(&self, k: T) -> Self {
        Self(self.0.map(|v| v * k))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.0;
        out.iter_mut().zip(other.0).for_each(|(a, b)| *a += b);
        Self(out)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Convention {
    /// Shear components doubled.
    Strain,
    /// Shear components as stored in the symmetric matrix.
    Stress,
}

impl Convention {
    fn name(self) -> &'static str {
        match self {
            Convention::Strain => "strain",
            Convention::Stress => "stress",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Voigt6<T> {
    pub v: [T; 6],
    pub convention: Convention,
}

impl<T: Real> Voigt6<T> {
    pub fn strain(v: [T; 6]) -> Self {
        Self {
            v,
            convention: Convention::Strain,
        }
    }

    pub fn stress(v: [T; 6]) -> Self {
        Self {
            v,
            convention: Convention::Stress,
        }
    }

    fn expect(&self, c: Convention) -> Result<()> {
        if self.convention == c {
            Ok(())
        } else {
            Err(Error::ConventionMismatch {
                expected: c.name(),
                found: self.convention.name(),
            })
        }
    }
}

pub fn strain_to_voigt<T: Real>(e: &Sym3<T>) -> Voigt6<T> {
    let s = &e.0;
    Voigt6::strain([
        s[0],
        s[1],
        s[2],
        T::two() * s[3],
        T::two() * s[4],
        T::two() * s[5],
    ])
}

pub fn voigt_to_strain<T: Real>(v: &Voigt6<T>) -> Result<Sym3<T>> {
    v.expect(Convention::Strain)?;
    Ok(strain_array_to_sym3(&v.v))
}

/// Raw strain-convention array to `Sym3`.
#[inline]
pub fn strain_array_to_sym3<T: Real>(v: &[T; 6]) -> Sym3<T> {
    let h = T::half();
    Sym3::new(v[0], v[1], v[2], h * v[3], h * v[4], h * v[5])
}

pub fn stress_to_voigt<T: Real>(s: &Sym3<T>) -> Voigt6<T> {
    Voigt6::stress(s.0)
}

pub fn voigt_to_stress<T: Real>(v: &Voigt6<T>) -> Result<Sym3<T>> {
    v.expect(Convention::Stress)?;
    Ok(Sym3(v.v))
}

/// Determinant of the six strain-convention Voigt columns.
pub fn det_v<T: Real>(e: &[Sym3<T>; 6]) -> T {
    let cols = e.map(|s| strain_to_voigt(&s).v);
    det_v_arrays(&cols)
}

/// [`det_v`] on raw strain-convention arrays.
pub fn det_v_arrays<T: Real>(cols: &[[T; 6]; 6]) -> T {
    linalg::det(&DMat::from_fn(6, 6, |r, c| cols[c][r]))
}

/// Symmetric 6×6 Voigt stiffness matrix `c_{αβ} = C_{ijkl}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stiffness<T> {
    m: Mat6<T>,
}

impl<T: Real> Stiffness<T> {
    /// Accepts a matrix whose asymmetry is at round-off level and stores its
    /// symmetric part.
    pub fn from_matrix(m: Mat6<T>) -> Result<Self> {
        let scale = m.iter().flatten().fold(T::zero(), |a, v| a.max(v.abs()));
        if !scale.is_finite() {
            return Err(Error::InvalidInput("non-finite stiffness entry".into()));
        }
        for i in 0..6 {
            for j in i + 1..6 {
                if (m[i][j] - m[j][i]).abs() > T::lit(1e-12).max(T::epsilon() * T::lit(16.0)) * scale {
                    return Err(Error::InvalidInput(format!(
                        "stiffness not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self {
            m: mat6_symmetrize(&m),
        })
    }

    /// Builds from the 21 upper-triangle entries, row-major:
    /// `c11, c12, …, c16, c22, …, c66`.
    pub fn from_upper(u: &[T]) -> Result<Self> {
        if u.len() != 21 {
            return Err(Error::DimensionMismatch(format!(
                "expected 21 stiffness components, got {}",
                u.len()
            )));
        }
        let mut m = mat6_zero();
        let mut k = 0;
        for i in 0..6 {
            for j in i..6 {
                m[i][j] = u[k];
                m[j][i] = u[k];
                k += 1;
            }
        }
        Self::from_matrix(m)
    }

    pub fn to_upper(&self) -> [T; 21] {
        let mut out = [T::zero(); 21];
        let mut k = 0;
        for i in 0..6 {
            for j in i..6 {
                out[k] = self.m[i][j];
                k += 1;
            }
        }
        out
    }

    pub fn identity() -> Self {
        Self { m: mat6_identity() }
    }

    /// `λ + 2μ` on the normal diagonal, `λ` off it, `μ` on the shear diagonal.
    pub fn isotropic(lambda: T, mu: T) -> Self {
        let mut m = mat6_zero();
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = lambda;
            }
            m[i][i] = lambda + T::two() * mu;
            m[i + 3][i + 3] = mu;
        }
        Self { m }
    }

    #[inline]
    pub fn matrix(&self) -> &Mat6<T> {
        &self.m
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> T {
        self.m[a][b]
    }

    /// Four-index access, zero-based.
    #[inline]
    pub fn c4(&self, i: usize, j: usize, k: usize, l: usize) -> T {
        self.m[voigt0(i, j)][voigt0(k, l)]
    }

    pub fn scale(&self, k: T) -> Self {
        Self {
            m: mat6_scale(&self.m, k),
        }
    }

    pub fn det(&self) -> T {
        mat6_det(&self.m)
    }

    pub fn norm(&self) -> T {
        mat6_norm(&self.m)
    }

    pub fn inverse(&self) -> Option<Mat6<T>> {
        let inv = linalg::inverse(&mat6_to_dmat(&self.m))?;
        let mut out = mat6_zero();
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = inv[(i, j)];
            }
        }
        Some(out)
    }

    /// `c ε_V` for a raw strain-convention array.
    #[inline]
    pub fn apply_array(&self, e: &[T; 6]) -> [T; 6] {
        let mut out = [T::zero(); 6];
        for (a, o) in out.iter_mut().enumerate() {
            *o = dot6(&self.m[a], e);
        }
        out
    }

    /// Same matrix divided by `|det|^{1/6}`, so that the result has unit
    /// determinant when `det > 0`.
    pub fn det_normalized(&self) -> Option<Self> {
        let d = self.det();
        if d <= T::zero() {
            return None;
        }
        Some(self.scale(T::one() / d.powf(T::one() / T::lit(6.0))))
    }
}

impl<T: Real> fmt::Display for Stiffness<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.m {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>12.6}")).collect();
            writeln!(f, "[{}]", cells.join(" "))?;
        }
        Ok(())
    }
}

/// Hooke's law in Voigt form.
pub fn apply_hooke<T: Real>(c: &Stiffness<T>, e: &Voigt6<T>) -> Result<Voigt6<T>> {
    e.expect(Convention::Strain)?;
    Ok(Voigt6::stress(c.apply_array(&e.v)))
}

/// Rescaling `c'_{ij} = 2^{(χ(i)+χ(j))/2} c_{ij}` with `χ = 0` on the normal
/// block and `1` on the shear block; its spectrum is that of `C` acting on
/// symmetric matrices.
pub fn mehrabadi<T: Real>(c: &Stiffness<T>) -> Mat6<T> {
    let w = |i: usize| if i < 3 { T::one() } else { T::two().sqrt() };
    let mut out = mat6_zero();
    for i in 0..6 {
        for j in 0..6 {
            out[i][j] = w(i) * w(j) * c.m[i][j];
        }
    }
    out
}

/// Smallest eigenvalue of a symmetric 6×6 matrix by cyclic Jacobi
/// (off-diagonal norm ≤ 1e-12‖a‖, at most 50 sweeps).
pub fn min_eig_sym6<T: Real>(a: &Mat6<T>) -> Result<T> {
    let eig = linalg::jacobi_eigen(&mat6_to_dmat(a), T::lit(1e-12).max(T::epsilon()), 50)?;
    Ok(eig.values[0])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityReport<T> {
    pub is_stable: bool,
    /// Smallest eigenvalue of the Mehrabadi-scaled matrix.
    pub lambda_min: T,
    /// `lambda_min / 2`.
    pub kappa_eff: T,
    /// `lambda_min^6 / 8`, a lower bound for `det c` whenever stable.
    pub det_lower_bound: T,
}

pub fn stability_check<T: Real>(c: &Stiffness<T>) -> StabilityReport<T> {
    let lambda_min = min_eig_sym6(&mehrabadi(c)).unwrap_or_else(|_| T::nan());
    let is_stable = lambda_min > T::zero();
    StabilityReport {
        is_stable,
        lambda_min,
        kappa_eff: lambda_min * T::half(),
        det_lower_bound: lambda_min.powi(6) / T::lit(8.0),
    }
}

/// Symmetric 6×6 Gram matrix of six `Sym3` elements under `A:B`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GramMatrix6<T>(pub Mat6<T>);

impl<T: Real> GramMatrix6<T> {
    pub fn of(elems: &[Sym3<T>; 6]) -> Self {
        let mut g = mat6_zero();
        for i in 0..6 {
            for j in i..6 {
                let v = elems[i].dot(&elems[j]);
                g[i][j] = v;
                g[j][i] = v;
            }
        }
        Self(g)
    }

    /// Solves `G x = b`; `None` when the elements are dependent.
    pub fn solve(&self, b: &[T; 6]) -> Option<[T; 6]> {
        let x = linalg::solve(&mat6_to_dmat(&self.0), b)?;
        let mut out = [T::zero(); 6];
        out.copy_from_slice(&x);
        Some(out)
    }

    pub fn inverse(&self) -> Option<Mat6<T>> {
        let inv = linalg::inverse(&mat6_to_dmat(&self.0))?;
        let mut out = mat6_zero();
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = inv[(i, j)];
            }
        }
        Some(out)
    }
}
