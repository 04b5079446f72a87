//! Finite-difference forward solver for `∇·(C : ε(u)) = 0` on a box with
//! Dirichlet data.
//!
//! The divergence `∂_i (C_ijkl ∂_l u_k)` is split by `l`. Terms with `l = i`
//! use the compact three-point stencil with midpoint-averaged coefficients;
//! terms with `l ≠ i` take central differences along `i` of the nodal
//! product `C_ijkl D_l u_k`. Both parts are exact on quadratics for constant
//! `C`, and the operator is symmetric on interior-supported fields.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::scalar::Real;
use crate::tensor::{stability_check, Stiffness};

/// Fourth-order tensor `C_ijkl` flattened with `((i*3 + j)*3 + k)*3 + l`.
type C4<T> = [T; 81];

#[inline]
fn at(i: usize, j: usize, k: usize, l: usize) -> usize {
    ((i * 3 + j) * 3 + k) * 3 + l
}

fn expand<T: Real>(c: &Stiffness<T>) -> C4<T> {
    let mut out = [T::zero(); 81];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    out[at(i, j, k, l)] = c.c4(i, j, k, l);
                }
            }
        }
    }
    out
}

/// Samples a stiffness field (21 upper-triangle components per node).
pub fn stiffness_field<T: Real>(grid: Grid<T>, f: impl Fn([T; 3]) -> Stiffness<T>) -> Field<T> {
    Field::from_fn(grid, 21, |x| f(x).to_upper().to_vec())
}

pub fn stiffness_at<T: Real>(c: &Field<T>, n: usize) -> Result<Stiffness<T>> {
    Stiffness::from_upper(c.node(n))
}

/// Samples a displacement on every node; only boundary values matter for
/// Dirichlet data.
pub fn displacement_field<T: Real>(grid: Grid<T>, f: impl Fn([T; 3]) -> [T; 3]) -> Field<T> {
    Field::from_fn(grid, 3, |x| f(x).to_vec())
}

#[derive(Clone, Debug)]
pub struct ForwardProblem<T> {
    grid: Grid<T>,
    c: Vec<C4<T>>,
    boundary: Field<T>,
}

impl<T: Real> ForwardProblem<T> {
    /// Checks pointwise stability of `stiffness` at every node.
    pub fn new(stiffness: &Field<T>, boundary: Field<T>) -> Result<Self> {
        let grid = stiffness.grid;
        if stiffness.components != 21 {
            return Err(Error::DimensionMismatch(format!(
                "stiffness field has {} components, expected 21",
                stiffness.components
            )));
        }
        if boundary.components != 3 || !boundary.grid.same_shape(&grid) {
            return Err(Error::DimensionMismatch("boundary data does not match the stiffness grid".into()));
        }
        let mut c = Vec::with_capacity(grid.len());
        for n in 0..grid.len() {
            let s = stiffness_at(stiffness, n)?;
            let rep = stability_check(&s);
            if !rep.is_stable {
                return Err(Error::Unstable {
                    node: n,
                    lambda_min: rep.lambda_min.to_f64().unwrap_or(f64::NAN),
                });
            }
            c.push(expand(&s));
        }
        Ok(Self { grid, c, boundary })
    }

    pub fn constant(grid: Grid<T>, c: &Stiffness<T>, boundary: Field<T>) -> Result<Self> {
        Self::new(&stiffness_field(grid, |_| *c), boundary)
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn boundary(&self) -> &Field<T> {
        &self.boundary
    }

    /// `∇·(C : ε(u))` at interior nodes; boundary entries are zero.
    fn apply_raw(&self, u: &[T]) -> Vec<T> {
        let g = &self.grid;
        let h = g.spacing;
        let two_h = T::two() * h;
        let h2 = h * h;
        let strides = [g.stride(0), g.stride(1), g.stride(2)];

        // tangential gradients D_l u_k, zero where l is a face direction
        let mut q = vec![T::zero(); g.len() * 9];
        q.par_chunks_mut(9).enumerate().for_each(|(m, qm)| {
            let ijk = g.ijk(m);
            let mut d = [[T::zero(); 3]; 3];
            for l in 0..3 {
                if ijk[l] > 0 && ijk[l] + 1 < g.dims[l] {
                    let s = strides[l];
                    for k in 0..3 {
                        d[l][k] = (u[(m + s) * 3 + k] - u[(m - s) * 3 + k]) / two_h;
                    }
                }
            }
            let c = &self.c[m];
            for i in 0..3 {
                for j in 0..3 {
                    let mut acc = T::zero();
                    for l in (0..3).filter(|&l| l != i) {
                        for k in 0..3 {
                            acc += c[at(i, j, k, l)] * d[l][k];
                        }
                    }
                    qm[i * 3 + j] = acc;
                }
            }
        });

        let mut out = vec![T::zero(); g.len() * 3];
        out.par_chunks_mut(3).enumerate().for_each(|(n, on)| {
            if g.on_boundary(n) {
                return;
            }
            let c0 = &self.c[n];
            for i in 0..3 {
                let s = strides[i];
                let (p, m) = (n + s, n - s);
                let (cp, cm) = (&self.c[p], &self.c[m]);
                for j in 0..3 {
                    let mut v = (q[p * 9 + i * 3 + j] - q[m * 9 + i * 3 + j]) / two_h;
                    for k in 0..3 {
                        let idx = at(i, j, k, i);
                        let kp = (c0[idx] + cp[idx]) * T::half();
                        let km = (c0[idx] + cm[idx]) * T::half();
                        v += (kp * (u[p * 3 + k] - u[n * 3 + k]) - km * (u[n * 3 + k] - u[m * 3 + k])) / h2;
                    }
                    on[j] += v;
                }
            }
        });
        out
    }

    /// Discrete divergence of the stress of `u`.
    pub fn assemble_apply(&self, u: &Field<T>) -> Result<Field<T>> {
        if u.components != 3 || !u.grid.same_shape(&self.grid) {
            return Err(Error::DimensionMismatch("displacement does not match the problem grid".into()));
        }
        Field::from_data(self.grid, 3, self.apply_raw(&u.data))
    }

    /// Conjugate gradients on the interior unknowns with the boundary values
    /// moved to the right-hand side.
    pub fn solve_dirichlet(&self, tol: T, max_iter: usize) -> Result<(Field<T>, CgReport<T>)> {
        let g = &self.grid;
        let mut lift = vec![T::zero(); g.len() * 3];
        for n in (0..g.len()).filter(|&n| g.on_boundary(n)) {
            lift[n * 3..n * 3 + 3].copy_from_slice(self.boundary.node(n));
        }
        // A(x + lift) = 0  ⇔  (−A) x = A lift
        let b = self.apply_raw(&lift);
        let (x, report) = conjugate_gradient(|v| self.apply_raw(v).into_iter().map(|a| -a).collect(), &b, tol, max_iter)?;
        let data = x.iter().zip(&lift).map(|(a, l)| *a + *l).collect();
        Ok((Field::from_data(*g, 3, data)?, report))
    }

    /// `20·√(interior unknowns)`.
    pub fn default_max_iter(&self) -> usize {
        let n = (self.grid.interior_count() * 3) as f64;
        (20.0 * n.sqrt()).ceil() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgReport<T> {
    pub iterations: usize,
    pub relative_residual: T,
    /// `½xᵀKx − bᵀx` after each iteration.
    pub energy: Vec<T>,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// Unpreconditioned CG for a symmetric positive definite operator; stops
/// when `‖r‖ ≤ tol ‖b‖`.
pub fn conjugate_gradient<T: Real>(
    apply: impl Fn(&[T]) -> Vec<T>,
    b: &[T],
    tol: T,
    max_iter: usize,
) -> Result<(Vec<T>, CgReport<T>)> {
    let mut x = vec![T::zero(); b.len()];
    let bnorm = dot(b, b).sqrt();
    let mut report = CgReport {
        iterations: 0,
        relative_residual: T::zero(),
        energy: Vec::new(),
    };
    if bnorm == T::zero() {
        return Ok((x, report));
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: (rr.sqrt() / bnorm).to_f64().unwrap_or(f64::NAN),
            });
        }
        let alpha = rr / pap;
        for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
            *xi += alpha * *pi;
            *ri -= alpha * *api;
        }
        let rr_new = dot(&r, &r);
        report.iterations = it;
        report.relative_residual = rr_new.sqrt() / bnorm;
        report.energy.push(-(dot(&x, b) + dot(&x, &r)) * T::half());
        if report.relative_residual <= tol {
            return Ok((x, report));
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = *ri + beta * *pi;
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: report.relative_residual.to_f64().unwrap_or(f64::NAN),
    })
}

/// Voigt strain (strain convention) of a displacement field: central
/// differences inside, second-order one-sided differences on the faces.
pub fn strain_of<T: Real>(u: &Field<T>) -> Result<Field<T>> {
    if u.components != 3 {
        return Err(Error::DimensionMismatch(format!(
            "displacement has {} components, expected 3",
            u.components
        )));
    }
    let d = [u.diff(0), u.diff(1), u.diff(2)];
    let du = |n: usize, i: usize, axis: usize| d[axis].get(n, i);
    let mut out = Field::zeros(u.grid, 6);
    for n in 0..u.grid.len() {
        out.node_mut(n).copy_from_slice(&[
            du(n, 0, 0),
            du(n, 1, 1),
            du(n, 2, 2),
            du(n, 1, 2) + du(n, 2, 1),
            du(n, 0, 2) + du(n, 2, 0),
            du(n, 0, 1) + du(n, 1, 0),
        ]);
    }
    Ok(out)
}
