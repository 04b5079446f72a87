//! Exact polynomial solutions of the constant-coefficient elasticity system.
//!
//! A quadratic displacement `u = (½ x·Px, ½ x·Qx, ½ x·Rx)` has Voigt strain
//! `x V1 + y V2 + z V3`, and it is a solution iff three scalar conditions on
//! `(V1, V2, V3)` hold. Affine fields solve the system for every constant
//! stiffness and supply the strain basis.

use rand::Rng;

use crate::error::{Error, Result};
use crate::hyperplane::{canonical_coords, S6_DIM};
use crate::linalg::{self, DMat};
use crate::scalar::Real;
use crate::tensor::{dot6, mat6_symmetrize, mat6_zero, outer6, Mat6, Stiffness, Sym3};

/// `u(x) = (½ x·Px, ½ x·Qx, ½ x·Rx) + L x + b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticDisplacement<T> {
    pub p: Sym3<T>,
    pub q: Sym3<T>,
    pub r: Sym3<T>,
    /// Row `i` holds the gradient of the affine part of `u_i`.
    pub linear: [[T; 3]; 3],
    pub constant: [T; 3],
}

impl<T: Real> QuadraticDisplacement<T> {
    pub fn zero() -> Self {
        Self {
            p: Sym3::zero(),
            q: Sym3::zero(),
            r: Sym3::zero(),
            linear: [[T::zero(); 3]; 3],
            constant: [T::zero(); 3],
        }
    }

    pub fn quadratic(p: Sym3<T>, q: Sym3<T>, r: Sym3<T>) -> Self {
        Self {
            p,
            q,
            r,
            ..Self::zero()
        }
    }

    pub fn affine(linear: [[T; 3]; 3], constant: [T; 3]) -> Self {
        Self {
            linear,
            constant,
            ..Self::zero()
        }
    }

    pub fn with_affine(mut self, linear: [[T; 3]; 3], constant: [T; 3]) -> Self {
        self.linear = linear;
        self.constant = constant;
        self
    }

    pub fn scale(&self, k: T) -> Self {
        Self {
            p: self.p.scale(k),
            q: self.q.scale(k),
            r: self.r.scale(k),
            linear: self.linear.map(|row| row.map(|v| v * k)),
            constant: self.constant.map(|v| v * k),
        }
    }

    fn quad(&self, i: usize) -> &Sym3<T> {
        match i {
            0 => &self.p,
            1 => &self.q,
            _ => &self.r,
        }
    }

    /// Displacement gradient `∂_j u_i` at `x`.
    pub fn gradient(&self, x: &[T; 3]) -> [[T; 3]; 3] {
        let mut g = self.linear;
        for (i, row) in g.iter_mut().enumerate() {
            let a = self.quad(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v += (0..3).map(|k| a.get(j, k) * x[k]).sum::<T>();
            }
        }
        g
    }

    pub fn eval(&self, x: &[T; 3]) -> [T; 3] {
        let mut u = self.constant;
        for (i, ui) in u.iter_mut().enumerate() {
            let a = self.quad(i);
            let mut quad = T::zero();
            let mut lin = T::zero();
            for j in 0..3 {
                lin += self.linear[i][j] * x[j];
                for k in 0..3 {
                    quad += x[j] * a.get(j, k) * x[k];
                }
            }
            *ui += T::half() * quad + lin;
        }
        u
    }

    /// Exact symmetric gradient at `x`.
    pub fn eval_strain(&self, x: &[T; 3]) -> Sym3<T> {
        let g = self.gradient(x);
        let h = T::half();
        Sym3::new(
            g[0][0],
            g[1][1],
            g[2][2],
            h * (g[1][2] + g[2][1]),
            h * (g[0][2] + g[2][0]),
            h * (g[0][1] + g[1][0]),
        )
    }

    /// Strain-convention Voigt strain at `x`.
    pub fn eval_voigt_strain(&self, x: &[T; 3]) -> [T; 6] {
        let g = self.gradient(x);
        [
            g[0][0],
            g[1][1],
            g[2][2],
            g[1][2] + g[2][1],
            g[0][2] + g[2][0],
            g[0][1] + g[1][0],
        ]
    }

    /// `(V1, V2, V3)`: the spatial derivatives of the Voigt strain, which are
    /// constant for a quadratic field.
    pub fn v_triple(&self) -> VTriple<T> {
        v_from_pqr(&self.p, &self.q, &self.r)
    }
}

/// `(V1, V2, V3)` in strain convention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VTriple<T> {
    pub v1: [T; 6],
    pub v2: [T; 6],
    pub v3: [T; 6],
}

impl<T: Real> VTriple<T> {
    pub fn zero() -> Self {
        Self {
            v1: [T::zero(); 6],
            v2: [T::zero(); 6],
            v3: [T::zero(); 6],
        }
    }

    pub fn as_array(&self) -> [[T; 6]; 3] {
        [self.v1, self.v2, self.v3]
    }

    /// Voigt strain at `x` of the quadratic field with these derivatives.
    pub fn strain_at(&self, x: &[T; 3]) -> [T; 6] {
        let mut e = [T::zero(); 6];
        for (a, v) in e.iter_mut().enumerate() {
            *v = x[0] * self.v1[a] + x[1] * self.v2[a] + x[2] * self.v3[a];
        }
        e
    }
}

pub fn v_from_pqr<T: Real>(p: &Sym3<T>, q: &Sym3<T>, r: &Sym3<T>) -> VTriple<T> {
    // P_ij = p.get(i-1, j-1) and so on
    let pp = |i: usize, j: usize| p.get(i - 1, j - 1);
    let qq = |i: usize, j: usize| q.get(i - 1, j - 1);
    let rr = |i: usize, j: usize| r.get(i - 1, j - 1);
    VTriple {
        v1: [
            pp(1, 1),
            qq(2, 1),
            rr(3, 1),
            qq(3, 1) + rr(2, 1),
            pp(1, 3) + rr(1, 1),
            pp(1, 2) + qq(1, 1),
        ],
        v2: [
            pp(1, 2),
            qq(2, 2),
            rr(3, 2),
            qq(3, 2) + rr(2, 2),
            pp(2, 3) + rr(2, 1),
            pp(2, 2) + qq(2, 1),
        ],
        v3: [
            pp(1, 3),
            qq(2, 3),
            rr(3, 3),
            qq(3, 3) + rr(2, 3),
            pp(3, 3) + rr(3, 1),
            pp(3, 2) + qq(1, 3),
        ],
    }
}

pub fn pqr_from_v<T: Real>(v: &VTriple<T>) -> (Sym3<T>, Sym3<T>, Sym3<T>) {
    let rows = v.as_array();
    // V_ij: j-th component of V_i, one-based
    let vv = |i: usize, j: usize| rows[i - 1][j - 1];
    let h = T::half();
    let p = Sym3::new(
        vv(1, 1),
        vv(2, 6) - vv(1, 2),
        vv(3, 5) - vv(1, 3),
        h * (vv(2, 5) + vv(3, 6) - vv(1, 4)),
        vv(3, 1),
        vv(2, 1),
    );
    let q = Sym3::new(
        vv(1, 6) - vv(2, 1),
        vv(2, 2),
        vv(3, 4) - vv(2, 3),
        vv(3, 2),
        h * (vv(3, 6) + vv(1, 4) - vv(2, 5)),
        vv(1, 2),
    );
    let r = Sym3::new(
        vv(1, 5) - vv(3, 1),
        vv(2, 4) - vv(3, 2),
        vv(3, 3),
        vv(2, 3),
        vv(1, 3),
        h * (vv(1, 4) + vv(2, 5) - vv(3, 6)),
    );
    (p, q, r)
}

/// The quadratic field with prescribed strain derivatives.
pub fn field_from_v<T: Real>(v: &VTriple<T>) -> QuadraticDisplacement<T> {
    let (p, q, r) = pqr_from_v(v);
    QuadraticDisplacement::quadratic(p, q, r)
}

/// The six affine fields whose Voigt strains are the natural basis of `R^6`.
pub fn linear_basis_fields<T: Real>() -> [QuadraticDisplacement<T>; 6] {
    let (o, l, h) = (T::zero(), T::one(), T::half());
    let lin = [
        [[l, o, o], [o, o, o], [o, o, o]],
        [[o, o, o], [o, l, o], [o, o, o]],
        [[o, o, o], [o, o, o], [o, o, l]],
        [[o, o, o], [o, o, h], [o, h, o]],
        [[o, o, h], [o, o, o], [h, o, o]],
        [[o, h, o], [h, o, o], [o, o, o]],
    ];
    lin.map(|m| QuadraticDisplacement::affine(m, [o; 3]))
}

/// Residuals `(c1·V1 + c6·V2 + c5·V3, c6·V1 + c2·V2 + c4·V3,
/// c5·V1 + c4·V2 + c3·V3)` of the divergence of `c (xV1 + yV2 + zV3)`.
pub fn solution_conditions<T: Real>(c: &Stiffness<T>, v: &VTriple<T>) -> [T; 3] {
    let m = c.matrix();
    let row = |a: usize| &m[a - 1];
    [
        dot6(row(1), &v.v1) + dot6(row(6), &v.v2) + dot6(row(5), &v.v3),
        dot6(row(6), &v.v1) + dot6(row(2), &v.v2) + dot6(row(4), &v.v3),
        dot6(row(5), &v.v1) + dot6(row(4), &v.v2) + dot6(row(3), &v.v3),
    ]
}

fn unit6<T: Real>(a: usize) -> [T; 6] {
    let mut e = [T::zero(); 6];
    e[a - 1] = T::one();
    e
}

/// `M^1 = V1⊗e1 + V2⊗e6 + V3⊗e5`, `M^2 = V1⊗e6 + V2⊗e2 + V3⊗e4`,
/// `M^3 = V1⊗e5 + V2⊗e4 + V3⊗e3`, so that `c : M^i` is the `i`-th residual
/// of [`solution_conditions`].
pub fn m_matrices<T: Real>(v: &VTriple<T>) -> [Mat6<T>; 3] {
    let pattern = [[1, 6, 5], [6, 2, 4], [5, 4, 3]];
    let rows = v.as_array();
    pattern.map(|cols| {
        let mut m = mat6_zero();
        for (vi, col) in rows.iter().zip(cols) {
            let o = outer6(vi, &unit6(col));
            for a in 0..6 {
                for b in 0..6 {
                    m[a][b] += o[a][b];
                }
            }
        }
        m
    })
}

fn combo<T: Real>(cols: &[[T; 6]; 6], terms: &[(T, usize)]) -> [T; 6] {
    let mut out = [T::zero(); 6];
    for &(k, i) in terms {
        for a in 0..6 {
            out[a] += k * cols[i - 1][a];
        }
    }
    out
}

/// Fifteen quadratic solutions for constant `c`, built from the columns
/// `c*_i` of `c⁻¹`:
///
/// * `V1 = V2 = 0`, `V3 ∈ {c*_1, c*_2, c*_6}`;
/// * `V1 = V3 = 0`, `V2 ∈ {c*_1, c*_3, c*_5}`;
/// * `V2 = V3 = 0`, `V1 ∈ {c*_2, c*_3, c*_4}`;
/// * `V1 = 0`, `V2 = αc*_6 + βc*_2 + γc*_4`, `V3 = −αc*_5 − βc*_4 − γc*_3`;
/// * `V2 = 0`, `V1 = αc*_1 + βc*_6 + γc*_5`, `V3 = −αc*_5 − βc*_4 − γc*_3`;
///
/// with `(α, β, γ)` running over the unit vectors in the last two families.
pub fn general_family<T: Real>(c: &Stiffness<T>) -> Result<Vec<QuadraticDisplacement<T>>> {
    let inv = c.inverse().ok_or(Error::Singular)?;
    let mut cols = [[T::zero(); 6]; 6];
    for (i, col) in cols.iter_mut().enumerate() {
        for (a, v) in col.iter_mut().enumerate() {
            *v = inv[a][i];
        }
    }
    let z = [T::zero(); 6];
    let (one, neg) = (T::one(), -T::one());
    let mut triples = Vec::with_capacity(15);
    for i in [1, 2, 6] {
        triples.push(VTriple { v1: z, v2: z, v3: cols[i - 1] });
    }
    for i in [1, 3, 5] {
        triples.push(VTriple { v1: z, v2: cols[i - 1], v3: z });
    }
    for i in [2, 3, 4] {
        triples.push(VTriple { v1: cols[i - 1], v2: z, v3: z });
    }
    let v3_of = [5, 4, 3];
    for (k, i) in [6, 2, 4].into_iter().enumerate() {
        triples.push(VTriple {
            v1: z,
            v2: combo(&cols, &[(one, i)]),
            v3: combo(&cols, &[(neg, v3_of[k])]),
        });
    }
    for (k, i) in [1, 6, 5].into_iter().enumerate() {
        triples.push(VTriple {
            v1: combo(&cols, &[(one, i)]),
            v2: z,
            v3: combo(&cols, &[(neg, v3_of[k])]),
        });
    }
    Ok(triples.iter().map(field_from_v).collect())
}

/// Canonical coordinates of the symmetrized `M` matrices of `fields`,
/// stacked three rows per field.
pub fn constraint_rows<T: Real>(fields: &[QuadraticDisplacement<T>]) -> DMat<T> {
    let rows: Vec<[T; S6_DIM]> = fields
        .iter()
        .flat_map(|f| m_matrices(&f.v_triple()))
        .map(|m| canonical_coords(&mat6_symmetrize(&m)))
        .collect();
    DMat::from_rows(&rows)
}

/// Rank of the stacked constraints of `fields` on the symmetric 6×6
/// matrices.
pub fn constraint_rank<T: Real>(fields: &[QuadraticDisplacement<T>]) -> usize {
    let rows = constraint_rows(fields);
    if rows.rows() == 0 {
        return 0;
    }
    let a = normalize_rows(&rows);
    linalg::null_vector(&a, T::lit(1e-9), S6_DIM).rank
}

fn normalize_rows<T: Real>(a: &DMat<T>) -> DMat<T> {
    DMat::from_fn(a.rows(), a.cols(), |r, c| {
        let n = a.row(r).iter().map(|v| *v * *v).sum::<T>().sqrt();
        if n == T::zero() {
            T::zero()
        } else {
            a[(r, c)] / n
        }
    })
}

/// Lexicographically first `k`-subset of `family` whose constraints reach
/// rank 20; `None` if there is none.
pub fn spanning_subfamily<T: Real>(family: &[QuadraticDisplacement<T>], k: usize) -> Option<Vec<usize>> {
    crate::hyperplane::Subsets::new(family.len(), k).find(|s| {
        let sub: Vec<QuadraticDisplacement<T>> = s.iter().map(|&i| family[i]).collect();
        constraint_rank(&sub) == S6_DIM - 1
    })
}

/// Transversely isotropic stiffness about `e3`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TIParams<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
    pub e: T,
}

impl<T: Real> TIParams<T> {
    pub fn new(a: T, b: T, c: T, d: T, e: T) -> Self {
        Self { a, b, c, d, e }
    }

    pub fn as_array(&self) -> [T; 5] {
        [self.a, self.b, self.c, self.d, self.e]
    }

    pub fn from_array(x: &[T; 5]) -> Self {
        Self::new(x[0], x[1], x[2], x[3], x[4])
    }

    /// Voigt matrix with `(a, b, c; b, a, c; c, c, d)` normal block and shear
    /// diagonal `(e, e, (a − b)/2)`.
    pub fn tensor(&self) -> Stiffness<T> {
        Stiffness::from_matrix(ti_matrix(&self.as_array())).expect("TI matrix is symmetric")
    }
}

/// TI Voigt matrix as a linear function of the parameter vector.
pub fn ti_matrix<T: Real>(x: &[T; 5]) -> Mat6<T> {
    let [a, b, c, d, e] = *x;
    let mut m = mat6_zero();
    m[0][0] = a;
    m[1][1] = a;
    m[0][1] = b;
    m[1][0] = b;
    m[0][2] = c;
    m[2][0] = c;
    m[1][2] = c;
    m[2][1] = c;
    m[2][2] = d;
    m[3][3] = e;
    m[4][4] = e;
    m[5][5] = (a - b) * T::half();
    m
}

/// Coefficients of `(a, b, c, d, e)` in the three solution conditions for a
/// TI tensor.
pub fn ti_constraint_rows<T: Real>(v: &VTriple<T>) -> [[T; 5]; 3] {
    let rows = v.as_array();
    let vv = |i: usize, j: usize| rows[i - 1][j - 1];
    let h = T::half();
    let o = T::zero();
    [
        [vv(1, 1) + h * vv(2, 6), vv(1, 2) - h * vv(2, 6), vv(1, 3), o, vv(3, 5)],
        [h * vv(1, 6) + vv(2, 2), -h * vv(1, 6) + vv(2, 1), vv(2, 3), o, vv(3, 4)],
        [o, o, vv(3, 1) + vv(3, 2), vv(3, 3), vv(1, 5) + vv(2, 4)],
    ]
}

/// The two extra quadratic solutions for a TI tensor. `u7` has
/// `(V12, V11, V23, V33, V21, V31) = (a, −b, b, c, −c, −d)` and `u8` has
/// `(V33, V15) = (−e, d)`, all other `V` entries zero. With the `½`
/// convention of [`QuadraticDisplacement`] these are half of the polynomials
/// `(−bx²−2cxy−ay²−2dxz, cx²+2axy−bz², dx²+2byz+cz²)` and `(0, 0, dx²−ez²)`.
pub fn ti_fields<T: Real>(t: &TIParams<T>) -> (QuadraticDisplacement<T>, QuadraticDisplacement<T>) {
    let mut v7 = VTriple::zero();
    v7.v1[1] = t.a;
    v7.v1[0] = -t.b;
    v7.v2[2] = t.b;
    v7.v3[2] = t.c;
    v7.v2[0] = -t.c;
    v7.v3[0] = -t.d;
    let mut v8 = VTriple::zero();
    v8.v3[2] = -t.e;
    v8.v1[4] = t.d;
    (field_from_v(&v7), field_from_v(&v8))
}

/// Analytic divergence of `c ε(u)` for constant `c` (constant in space for
/// quadratic `u`).
pub fn stress_divergence<T: Real>(c: &Stiffness<T>, f: &QuadraticDisplacement<T>) -> [T; 3] {
    solution_conditions(c, &f.v_triple())
}

/// Random stiffness whose Mehrabadi-scaled matrix has spectrum drawn
/// uniformly from `[lo, hi]` and eigenvectors from Gram–Schmidt on a
/// uniform random matrix.
pub fn random_stable<T: Real, R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> Stiffness<T> {
    let mut q = [[0.0f64; 6]; 6];
    loop {
        for row in q.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        if orthonormalize(&mut q) {
            break;
        }
    }
    let lambda: [f64; 6] = std::array::from_fn(|_| rng.gen_range(lo..=hi));
    let w = |i: usize| if i < 3 { 1.0 } else { std::f64::consts::SQRT_2 };
    let mut m = [[T::zero(); 6]; 6];
    for a in 0..6 {
        for b in 0..6 {
            let cp: f64 = (0..6).map(|k| q[k][a] * lambda[k] * q[k][b]).sum();
            m[a][b] = T::lit(cp / (w(a) * w(b)));
        }
    }
    Stiffness::from_matrix(mat6_symmetrize(&m)).expect("symmetric by construction")
}

fn orthonormalize(q: &mut [[f64; 6]; 6]) -> bool {
    for i in 0..6 {
        for j in 0..i {
            let d: f64 = (0..6).map(|k| q[i][k] * q[j][k]).sum();
            for k in 0..6 {
                q[i][k] -= d * q[j][k];
            }
        }
        let n = q[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        if n < 1e-3 {
            return false;
        }
        q[i].iter_mut().for_each(|v| *v /= n);
    }
    true
}

/// Random stable TI parameters with `a, d ∈ [2, 5]`, `|b| ≤ a/2`,
/// `c² ≤ 0.4 d (a + b)` and `e ∈ [0.5, 3]`.
pub fn random_ti<T: Real, R: Rng + ?Sized>(rng: &mut R) -> TIParams<T> {
    loop {
        let a: f64 = rng.gen_range(2.0..5.0);
        let b = rng.gen_range(-0.5..0.5) * a;
        let d: f64 = rng.gen_range(2.0..5.0);
        let cmax = (0.4 * d * (a + b)).sqrt();
        let c = rng.gen_range(-cmax..cmax);
        let e = rng.gen_range(0.5..3.0);
        let t = TIParams::new(T::lit(a), T::lit(b), T::lit(c), T::lit(d), T::lit(e));
        if crate::tensor::stability_check(&t.tensor()).is_stable {
            return t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{stability_check, strain_array_to_sym3};

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn rand_sym3(seed: &mut u64) -> Sym3<f64> {
        Sym3::new(lcg(seed), lcg(seed), lcg(seed), lcg(seed), lcg(seed), lcg(seed))
    }

    fn random_stable(seed: &mut u64) -> Stiffness<f64> {
        let mut m = [[0.0; 6]; 6];
        let a: Vec<f64> = (0..36).map(|_| lcg(seed)).collect();
        for i in 0..6 {
            for j in 0..6 {
                m[i][j] = (0..6).map(|k| a[i * 6 + k] * a[j * 6 + k]).sum::<f64>();
            }
            m[i][i] += 1.0;
        }
        let c = Stiffness::from_matrix(m).unwrap();
        assert!(stability_check(&c).is_stable);
        c
    }

    #[test]
    fn linear_fields_give_natural_basis() {
        let fields = linear_basis_fields::<f64>();
        let x = [0.3, -0.7, 1.1];
        for (k, f) in fields.iter().enumerate() {
            let e = f.eval_voigt_strain(&x);
            for a in 0..6 {
                assert_eq!(e[a], if a == k { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(fields[0].eval(&x), [0.3, 0.0, 0.0]);
        // field 4 = ½(0, z, y)
        assert_eq!(fields[3].eval(&x), [0.0, 0.55, -0.35]);
        let mut seed = 5;
        let c = random_stable(&mut seed);
        for f in &fields {
            assert_eq!(stress_divergence(&c, f), [0.0; 3]);
        }
    }

    #[test]
    fn v_maps_are_inverse() {
        let mut seed = 17;
        for _ in 0..50 {
            let (p, q, r) = (rand_sym3(&mut seed), rand_sym3(&mut seed), rand_sym3(&mut seed));
            let v = v_from_pqr(&p, &q, &r);
            let (p2, q2, r2) = pqr_from_v(&v);
            for k in 0..6 {
                assert!((p.0[k] - p2.0[k]).abs() < 1e-15);
                assert!((q.0[k] - q2.0[k]).abs() < 1e-15);
                assert!((r.0[k] - r2.0[k]).abs() < 1e-15);
            }
        }
        let z = Sym3::<f64>::zero();
        assert_eq!(v_from_pqr(&z, &z, &z), VTriple::zero());
    }

    #[test]
    fn v_triple_matches_strain_of_field() {
        let mut seed = 23;
        let f = QuadraticDisplacement::quadratic(rand_sym3(&mut seed), rand_sym3(&mut seed), rand_sym3(&mut seed));
        let v = f.v_triple();
        let x = [0.4, -1.3, 0.9];
        let e1 = f.eval_voigt_strain(&x);
        let e2 = v.strain_at(&x);
        for a in 0..6 {
            assert!((e1[a] - e2[a]).abs() < 1e-14);
        }
    }

    #[test]
    fn ti_u8_coefficients() {
        let (d0, e0) = (0.7, 1.9);
        let mut v = VTriple::zero();
        v.v3[2] = -e0;
        v.v1[4] = d0;
        let (p, q, r) = pqr_from_v(&v);
        assert_eq!(p, Sym3::zero());
        assert_eq!(q, Sym3::zero());
        assert_eq!(r.get(0, 0), d0);
        assert_eq!(r.get(2, 2), -e0);
        assert_eq!(r.get(0, 1), 0.0);
        assert_eq!(r.get(1, 1), 0.0);
    }

    #[test]
    fn conditions_match_finite_difference_divergence() {
        // oracle: ∂_i σ_ij from finite differences of the stress c ε(x)
        let mut seed = 31;
        let c = random_stable(&mut seed);
        let f = QuadraticDisplacement::quadratic(rand_sym3(&mut seed), rand_sym3(&mut seed), rand_sym3(&mut seed));
        let res = solution_conditions(&c, &f.v_triple());
        let x0 = [0.2, 0.1, -0.3];
        let h = 1e-3;
        let stress = |x: &[f64; 3]| {
            let s = c.apply_array(&f.eval_voigt_strain(x));
            strain_array_to_sym3(&[s[0], s[1], s[2], 2.0 * s[3], 2.0 * s[4], 2.0 * s[5]])
        };
        for j in 0..3 {
            let mut div = 0.0;
            for i in 0..3 {
                let mut xp = x0;
                let mut xm = x0;
                xp[i] += h;
                xm[i] -= h;
                div += (stress(&xp).get(i, j) - stress(&xm).get(i, j)) / (2.0 * h);
            }
            assert!((div - res[j]).abs() < 1e-9, "row {j}: {div} vs {}", res[j]);
        }
        assert_eq!(solution_conditions(&c, &VTriple::zero()), [0.0; 3]);
    }

    #[test]
    fn m_matrices_reproduce_conditions() {
        let mut seed = 37;
        let c = random_stable(&mut seed);
        let v = v_from_pqr(&rand_sym3(&mut seed), &rand_sym3(&mut seed), &rand_sym3(&mut seed));
        let res = solution_conditions(&c, &v);
        let ms = m_matrices(&v);
        for i in 0..3 {
            let d = crate::tensor::mat6_dot(c.matrix(), &ms[i]);
            assert!((d - res[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn general_family_solves_and_spans() {
        let c = Stiffness::<f64>::identity();
        let fam = general_family(&c).unwrap();
        assert_eq!(fam.len(), 15);
        assert_eq!(constraint_rank(&fam), 20);
        let mut seed = 41;
        for _ in 0..100 {
            let c = random_stable(&mut seed);
            let fam = general_family(&c).unwrap();
            for f in &fam {
                let r = stress_divergence(&c, f);
                assert!(r.iter().all(|v| v.abs() <= 1e-12 * c.norm()), "{r:?}");
            }
            assert_eq!(constraint_rank(&fam), 20);
        }
        let singular = Stiffness::<f64>::from_matrix(mat6_zero()).unwrap();
        assert_eq!(general_family(&singular), Err(Error::Singular));
    }

    #[test]
    fn random_tensors_have_requested_spectrum() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let c: Stiffness<f64> = super::random_stable(&mut rng, 0.5, 5.0);
            let eig = linalg::jacobi_eigen(&crate::tensor::mat6_to_dmat(&crate::tensor::mehrabadi(&c)), 1e-14, 50).unwrap();
            assert!(eig.values[0] >= 0.5 - 1e-12 && eig.values[5] <= 5.0 + 1e-12);
            let t: TIParams<f64> = random_ti(&mut rng);
            assert!(stability_check(&t.tensor()).is_stable);
        }
    }

    #[test]
    fn seven_field_subfamily_exists() {
        let mut seed = 43;
        let c = random_stable(&mut seed);
        let fam = general_family(&c).unwrap();
        let s = spanning_subfamily(&fam, 7).expect("a 7-field spanning subset");
        assert_eq!(s.len(), 7);
        assert!(spanning_subfamily(&fam, 6).is_none());
    }

    #[test]
    fn ti_fields_are_solutions() {
        let mut seed = 47;
        for _ in 0..100 {
            let t = TIParams::new(
                2.0 + lcg(&mut seed).abs(),
                0.5 * lcg(&mut seed),
                0.5 * lcg(&mut seed),
                2.0 + lcg(&mut seed).abs(),
                0.5 + lcg(&mut seed).abs(),
            );
            let c = t.tensor();
            let (u7, u8) = ti_fields(&t);
            for u in [u7, u8] {
                let r = stress_divergence(&c, &u);
                assert!(r.iter().all(|v| v.abs() < 1e-13), "{r:?}");
            }
        }
    }

    #[test]
    fn ti_rows_reproduce_displayed_matrices() {
        let t = TIParams::new(3.0, 0.4, 0.7, 2.5, 1.1);
        let (u7, u8) = ti_fields(&t);
        let r7 = ti_constraint_rows(&u7.v_triple());
        assert_eq!(
            r7,
            [
                [-t.b, t.a, 0.0, 0.0, 0.0],
                [0.0, -t.c, t.b, 0.0, 0.0],
                [0.0, 0.0, -t.d, t.c, 0.0]
            ]
        );
        let r8 = ti_constraint_rows(&u8.v_triple());
        assert_eq!(r8, [[0.0; 5], [0.0; 5], [0.0, 0.0, 0.0, -t.e, t.d]]);
        // rows span a 4-dimensional space orthogonal to (a, b, c, d, e)
        let rows: Vec<[f64; 5]> = r7.iter().chain(r8.iter()).copied().collect();
        let nv = linalg::null_vector(&DMat::from_rows(&rows), 1e-12, 5);
        assert_eq!(nv.rank, 4);
        let x = nv.vector.unwrap();
        let p = t.as_array();
        let cos = dot_n(&x, &p) / (dot_n(&x, &x).sqrt() * dot_n(&p, &p).sqrt());
        assert!((cos.abs() - 1.0).abs() < 1e-14);
    }

    fn dot_n(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn ti_u7_at_unit_point() {
        // (a, b, c, d, e) = (1, 0, 0, 1, 1): the displayed polynomial is
        // (−y² − 2xz, 2xy, x²), i.e. (−3, 2, 1) at (1, 1, 1); ours is half
        let (u7, u8) = ti_fields(&TIParams::new(1.0, 0.0, 0.0, 1.0, 1.0));
        assert_eq!(u7.eval(&[1.0, 1.0, 1.0]), [-1.5, 1.0, 0.5]);
        assert_eq!(u8.eval(&[1.0, 1.0, 1.0]), [0.0, 0.0, 0.0]);
        assert_eq!(u8.eval(&[2.0, 0.0, 1.0]), [0.0, 0.0, 1.5]);
    }

    #[test]
    fn strain_matches_finite_differences() {
        let mut seed = 53;
        let f = QuadraticDisplacement::quadratic(rand_sym3(&mut seed), rand_sym3(&mut seed), rand_sym3(&mut seed))
            .with_affine([[0.1, 0.2, 0.3], [-0.4, 0.5, 0.0], [0.7, 0.0, -0.2]], [1.0, 2.0, 3.0]);
        let x0 = [0.35, -0.15, 0.6];
        let h = 1e-4;
        let mut grad = [[0.0; 3]; 3];
        for j in 0..3 {
            let mut xp = x0;
            let mut xm = x0;
            xp[j] += h;
            xm[j] -= h;
            let (up, um) = (f.eval(&xp), f.eval(&xm));
            for i in 0..3 {
                grad[i][j] = (up[i] - um[i]) / (2.0 * h);
            }
        }
        let e = f.eval_strain(&x0);
        for i in 0..3 {
            for j in 0..3 {
                let fd = 0.5 * (grad[i][j] + grad[j][i]);
                assert!((fd - e.get(i, j)).abs() < 1e-8);
            }
        }
        assert_eq!(QuadraticDisplacement::<f64>::zero().eval(&x0), [0.0; 3]);
        assert_eq!(QuadraticDisplacement::<f64>::zero().eval_strain(&x0), Sym3::zero());
    }
}
