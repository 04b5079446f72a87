//! The inverse pipeline: hypothesis maps, μ-coefficients, constraint
//! matrices, pointwise anisotropy, the scalar factor τ and `div C`.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::{conjugate_gradient, stiffness_at};
use crate::grid::{Field, Grid};
use crate::hyperplane::{self, canonical_coords, signed_sixth_root, subset_plan, S6Basis, SUBSET_SEED};
use crate::linalg::{self, DMat};
use crate::scalar::Real;
use crate::synth::{ti_matrix, QuadraticDisplacement, VTriple};
use crate::tensor::{
    det_v_arrays, mat6_dot, mat6_scale, mat6_symmetrize, mat6_zero, strain_array_to_sym3, voigt0, GramMatrix6, Mat6,
    Stiffness, Sym3,
};

/// How the normal of the constraint hyperplane is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Cross-product sum when there are at most 24 constraints, nullspace
    /// otherwise.
    #[default]
    Auto,
    Nullspace,
    #[serde(alias = "crossprod-sum")]
    Crossprod,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TauMethod {
    #[default]
    Path,
    Poisson,
}

/// Parameter space the anisotropy is searched in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AnisotropyClass {
    /// All 21 components.
    #[default]
    General,
    /// Five parameters, symmetry axis `e3`.
    TransverselyIsotropic,
}

impl AnisotropyClass {
    fn basis<T: Real>(self) -> Vec<Mat6<T>> {
        match self {
            AnisotropyClass::General => S6Basis::canonical().elems().to_vec(),
            AnisotropyClass::TransverselyIsotropic => (0..5)
                .map(|k| {
                    let mut x = [T::zero(); 5];
                    x[k] = T::one();
                    ti_matrix(&x)
                })
                .collect(),
        }
    }

    pub fn dim(self) -> usize {
        match self {
            AnisotropyClass::General => 21,
            AnisotropyClass::TransverselyIsotropic => 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconConfig<T> {
    /// Lower bound for `|F1|`.
    pub c0: T,
    /// Lower bound for `F2` (rows normalized to unit length).
    pub c1: T,
    /// Finite-difference order; only 2 is implemented.
    pub fd_order: usize,
    /// Maximum number of subsets summed by the cross-product method.
    pub subset_cap: usize,
    pub method: Method,
    pub tau_method: TauMethod,
    pub class: AnisotropyClass,
    /// Base node for τ; the grid center when `None`.
    pub base_node: Option<usize>,
    /// τ at the base node; ground truth, or 1, when `None`.
    pub tau_reference: Option<T>,
    /// Nodes closer than this many spacings to a face are left out of the
    /// error norms.
    pub error_margin: usize,
    pub cg_tol: T,
    pub cg_max_iter: Option<usize>,
}

impl<T: Real> Default for ReconConfig<T> {
    fn default() -> Self {
        Self {
            c0: T::lit(1e-6),
            c1: T::lit(1e-30),
            fd_order: 2,
            subset_cap: 64,
            method: Method::Auto,
            tau_method: TauMethod::Path,
            class: AnisotropyClass::General,
            base_node: None,
            tau_reference: None,
            error_margin: 0,
            cg_tol: T::lit(1e-12),
            cg_max_iter: None,
        }
    }
}

impl<T: Real> ReconConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > T::zero() && self.c1 > T::zero()) {
            return Err(Error::InvalidInput("thresholds c0 and c1 must be positive".into()));
        }
        if self.fd_order != 2 {
            return Err(Error::InvalidInput(format!(
                "finite-difference order {} not supported (only 2)",
                self.fd_order
            )));
        }
        if self.subset_cap == 0 {
            return Err(Error::InvalidInput("subset_cap must be positive".into()));
        }
        if !(self.cg_tol > T::zero()) {
            return Err(Error::InvalidInput("cg_tol must be positive".into()));
        }
        if let Some(r) = self.tau_reference {
            if !(r > T::zero()) {
                return Err(Error::InvalidInput("reference τ must be positive".into()));
            }
        }
        Ok(())
    }

    /// Method actually used for `constraints` constraint matrices.
    pub fn resolve_method(&self, constraints: usize) -> Method {
        match self.method {
            Method::Auto if constraints <= 24 => Method::Crossprod,
            Method::Auto => Method::Nullspace,
            m => m,
        }
    }
}

#[derive(Clone, Debug)]
enum Source<T> {
    /// Polynomial coefficients; strain gradients are the constant `V`s.
    Analytic(Vec<VTriple<T>>),
    /// Finite-difference strain gradients, `[field][axis]`.
    Sampled(Vec<[Field<T>; 3]>),
}

/// Strain fields (strain-convention Voigt) on a common grid; the first six
/// are the candidate basis.
#[derive(Clone, Debug)]
pub struct MeasurementSet<T> {
    grid: Grid<T>,
    strains: Vec<Field<T>>,
    source: Source<T>,
}

impl<T: Real> MeasurementSet<T> {
    /// Exact strains of polynomial fields, with exact derivatives.
    pub fn from_polynomials(grid: Grid<T>, fields: &[QuadraticDisplacement<T>]) -> Self {
        let strains = fields
            .iter()
            .map(|f| Field::from_fn(grid, 6, |x| f.eval_voigt_strain(&x).to_vec()))
            .collect();
        Self {
            grid,
            strains,
            source: Source::Analytic(fields.iter().map(|f| f.v_triple()).collect()),
        }
    }

    /// Sampled strains; derivatives by finite differences.
    pub fn sampled(strains: Vec<Field<T>>) -> Result<Self> {
        let grid = strains
            .first()
            .map(|f| f.grid)
            .ok_or_else(|| Error::InvalidInput("no strain fields".into()))?;
        for f in &strains {
            if f.components != 6 || !f.grid.same_shape(&grid) {
                return Err(Error::DimensionMismatch(
                    "strain fields must share one grid and have 6 components".into(),
                ));
            }
            if !f.is_finite() {
                return Err(Error::InvalidInput("strain field contains non-finite values".into()));
            }
        }
        let grads = strains.iter().map(|f| [f.diff(0), f.diff(1), f.diff(2)]).collect();
        Ok(Self {
            grid,
            strains,
            source: Source::Sampled(grads),
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.strains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strains.is_empty()
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self.source, Source::Analytic(_))
    }

    pub fn strains(&self) -> &[Field<T>] {
        &self.strains
    }

    /// Number of extra solutions beyond the basis.
    pub fn extra(&self) -> usize {
        self.strains.len().saturating_sub(6)
    }

    pub fn strain(&self, j: usize, n: usize) -> [T; 6] {
        let mut out = [T::zero(); 6];
        out.copy_from_slice(self.strains[j].node(n));
        out
    }

    /// `∂_a ε^(j)` at node `n`, indexed `[a]`.
    pub fn strain_gradient(&self, j: usize, n: usize) -> [[T; 6]; 3] {
        match &self.source {
            Source::Analytic(v) => v[j].as_array(),
            Source::Sampled(g) => std::array::from_fn(|a| {
                let mut out = [T::zero(); 6];
                out.copy_from_slice(g[j][a].node(n));
                out
            }),
        }
    }

    fn basis_columns(&self, n: usize) -> [[T; 6]; 6] {
        std::array::from_fn(|j| self.strain(j, n))
    }
}

/// `det_V` of the six basis strains per node (zero with fewer than six
/// fields).
pub fn f1_map<T: Real>(m: &MeasurementSet<T>) -> Field<T> {
    let g = m.grid;
    if m.len() < 6 {
        return Field::zeros(g, 1);
    }
    let data = (0..g.len())
        .into_par_iter()
        .map(|n| det_v_arrays(&m.basis_columns(n)))
        .collect();
    Field::from_data(g, 1, data).expect("one value per node")
}

fn basis_inverse<T: Real>(m: &MeasurementSet<T>, n: usize) -> Option<DMat<T>> {
    let cols = m.basis_columns(n);
    linalg::inverse(&DMat::from_fn(6, 6, |r, c| cols[c][r]))
}

fn check_index<T: Real>(m: &MeasurementSet<T>, p: usize) -> Result<()> {
    if m.len() < 6 || p >= m.len() {
        return Err(Error::InvalidInput(format!(
            "field index {p} invalid for a set of {} fields (basis needs 6)",
            m.len()
        )));
    }
    Ok(())
}

fn below_c0<T: Real>(m: &MeasurementSet<T>, c0: T) -> Option<(usize, T)> {
    (0..m.grid.len()).find_map(|n| {
        let d = det_v_arrays(&m.basis_columns(n));
        (!(d.abs() >= c0)).then_some((n, d))
    })
}

fn hyp_a_error<T: Real>(n: usize, d: T, c0: T) -> Error {
    Error::HypothesisA {
        node: n,
        value: d.to_f64().unwrap_or(f64::NAN),
        threshold: c0.to_f64().unwrap_or(f64::NAN),
    }
}

/// Coordinates `μ_p` of `ε^(p)` in the basis, by a 6×6 solve per node.
pub fn mu_coeffs<T: Real>(m: &MeasurementSet<T>, p: usize, c0: T) -> Result<Field<T>> {
    check_index(m, p)?;
    if let Some((n, d)) = below_c0(m, c0) {
        return Err(hyp_a_error(n, d, c0));
    }
    let g = m.grid;
    let mut out = Field::zeros(g, 6);
    for n in 0..g.len() {
        let cols = m.basis_columns(n);
        let b = DMat::from_fn(6, 6, |r, c| cols[c][r]);
        let mu = linalg::solve(&b, &m.strain(p, n)).ok_or(Error::Singular)?;
        out.node_mut(n).copy_from_slice(&mu);
    }
    Ok(out)
}

/// Same as [`mu_coeffs`] by Cramer's rule: `det_V` with `ε^(p)` in slot `j`
/// over `det_V` of the basis.
pub fn mu_coeffs_cramer<T: Real>(m: &MeasurementSet<T>, p: usize, c0: T) -> Result<Field<T>> {
    check_index(m, p)?;
    if let Some((n, d)) = below_c0(m, c0) {
        return Err(hyp_a_error(n, d, c0));
    }
    let g = m.grid;
    let mut out = Field::zeros(g, 6);
    for n in 0..g.len() {
        let cols = m.basis_columns(n);
        let d = det_v_arrays(&cols);
        let e = m.strain(p, n);
        for j in 0..6 {
            let mut c = cols;
            c[j] = e;
            out.node_mut(n)[j] = det_v_arrays(&c) / d;
        }
    }
    Ok(out)
}

/// `μ_p` and `∂_a μ_p` at a node, from `B ∂μ = ∂ε^(p) − (∂B) μ`.
fn mu_and_gradient<T: Real>(m: &MeasurementSet<T>, binv: &DMat<T>, p: usize, n: usize) -> ([T; 6], [[T; 6]; 3]) {
    let mut mu = [T::zero(); 6];
    mu.copy_from_slice(&binv.matvec(&m.strain(p, n)));
    let gp = m.strain_gradient(p, n);
    let gb: Vec<[[T; 6]; 3]> = (0..6).map(|j| m.strain_gradient(j, n)).collect();
    let dmu = std::array::from_fn(|a| {
        let mut rhs = gp[a];
        for (j, gj) in gb.iter().enumerate() {
            for r in 0..6 {
                rhs[r] -= gj[a][r] * mu[j];
            }
        }
        let mut out = [T::zero(); 6];
        out.copy_from_slice(&binv.matvec(&rhs));
        out
    });
    (mu, dmu)
}

/// Row patterns `(∂1, 0, 0, 0, ∂3, ∂2)`, `(0, ∂2, 0, ∂3, 0, ∂1)`,
/// `(0, 0, ∂3, ∂2, ∂1, 0)` as (slot, derivative axis) pairs.
const ROW_PATTERN: [[(usize, usize); 3]; 3] = [
    [(0, 0), (4, 2), (5, 1)],
    [(1, 1), (3, 2), (5, 0)],
    [(2, 2), (3, 1), (4, 0)],
];

fn node_constraints<T: Real>(m: &MeasurementSet<T>, binv: &DMat<T>, p: usize, n: usize) -> [Mat6<T>; 3] {
    let (_, dmu) = mu_and_gradient(m, binv, p, n);
    let basis: Vec<[T; 6]> = (0..6).map(|j| m.strain(j, n)).collect();
    ROW_PATTERN.map(|pattern| {
        let mut out = mat6_zero();
        for (j, e) in basis.iter().enumerate() {
            for &(slot, axis) in &pattern {
                let w = dmu[axis][j];
                for b in 0..6 {
                    out[slot][b] += w * e[b];
                }
            }
        }
        mat6_symmetrize(&out)
    })
}

/// The three symmetrized constraint matrices of field `p` at every node.
pub fn constraint_matrices<T: Real>(m: &MeasurementSet<T>, p: usize, c0: T) -> Result<Vec<[Mat6<T>; 3]>> {
    check_index(m, p)?;
    if let Some((n, d)) = below_c0(m, c0) {
        return Err(hyp_a_error(n, d, c0));
    }
    (0..m.grid.len())
        .map(|n| {
            let binv = basis_inverse(m, n).ok_or(Error::Singular)?;
            Ok(node_constraints(m, &binv, p, n))
        })
        .collect()
}

/// Why a node is excluded downstream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskReason {
    Ok,
    /// `|F1| < c0` or fewer than six fields.
    HypothesisA,
    /// `F2 < c1`.
    HypothesisB,
    /// No positive-determinant normal.
    Normalization,
    /// Gram matrix of the stresses singular, or no derivative stencil.
    Tau,
}

struct NodeAniso<T> {
    f1: T,
    f2: T,
    ctilde: Option<Mat6<T>>,
    reason: MaskReason,
    sampled: bool,
}

struct AnisoCtx<'a, T> {
    m: &'a MeasurementSet<T>,
    cfg: &'a ReconConfig<T>,
    basis: Vec<Mat6<T>>,
    method: Method,
}

impl<T: Real> AnisoCtx<'_, T> {
    fn coords(&self, mat: &Mat6<T>) -> Vec<T> {
        match self.cfg.class {
            AnisotropyClass::General => canonical_coords(mat).to_vec(),
            AnisotropyClass::TransverselyIsotropic => self.basis.iter().map(|b| mat6_dot(mat, b)).collect(),
        }
    }

    fn combine(&self, x: &[T]) -> Mat6<T> {
        let mut out = mat6_zero();
        for (k, b) in x.iter().zip(&self.basis) {
            for a in 0..6 {
                for c in 0..6 {
                    out[a][c] += *k * b[a][c];
                }
            }
        }
        out
    }

    fn node(&self, n: usize) -> NodeAniso<T> {
        let m = self.m;
        let mut res = NodeAniso {
            f1: T::zero(),
            f2: T::zero(),
            ctilde: None,
            reason: MaskReason::HypothesisA,
            sampled: false,
        };
        if m.len() < 6 {
            return res;
        }
        res.f1 = det_v_arrays(&m.basis_columns(n));
        if !(res.f1.abs() >= self.cfg.c0) {
            return res;
        }
        let Some(binv) = basis_inverse(m, n) else {
            return res;
        };
        res.reason = MaskReason::HypothesisB;
        let d = self.cfg.class.dim();

        let mut raw: Vec<Vec<T>> = Vec::with_capacity(3 * m.extra());
        let mut scale = T::zero();
        for p in 6..m.len() {
            for mat in node_constraints(m, &binv, p, n) {
                raw.push(self.coords(&mat));
            }
        }
        let norms: Vec<T> = raw.iter().map(|r| r.iter().map(|v| *v * *v).sum::<T>().sqrt()).collect();
        // reference size of a constraint row at this node
        for p in 6..m.len() {
            let g = m.strain_gradient(p, n);
            let e = m.strain(p, n);
            let s = g.iter().flatten().chain(e.iter()).fold(T::zero(), |acc, v| acc.max(v.abs()));
            scale = scale.max(s);
        }
        let bmax = (0..6)
            .flat_map(|j| m.strain_gradient(j, n).into_iter().flatten().chain(m.strain(j, n)))
            .fold(T::zero(), |acc, v| acc.max(v.abs()));
        let cut = T::lit(1e-10) * scale.max(bmax) * bmax.max(T::one()) * binv.max_abs().max(T::one());
        let rows: Vec<Vec<T>> = raw
            .into_iter()
            .zip(&norms)
            .filter(|(_, nrm)| **nrm > cut)
            .map(|(r, nrm)| r.into_iter().map(|v| v / *nrm).collect())
            .collect();
        if rows.len() + 1 < d {
            return res;
        }
        let a = DMat::from_rows(&rows);
        res.f2 = linalg::cofactor_norm_sum(&a).unwrap_or(T::zero());
        if !(res.f2 >= self.cfg.c1) {
            return res;
        }
        res.reason = MaskReason::Normalization;
        let normal = match self.method {
            Method::Crossprod => {
                let (plan, sampled) = subset_plan(rows.len(), d - 1, self.cfg.subset_cap, SUBSET_SEED);
                res.sampled = sampled;
                let mut num = mat6_zero();
                let mut den = T::zero();
                for s in &plan {
                    let cof = linalg::cofactor_normal(&a.select_rows(s));
                    if let Some((signed, root)) = signed_sixth_root(&self.combine(&cof)) {
                        for r in 0..6 {
                            for c in 0..6 {
                                num[r][c] += signed[r][c];
                            }
                        }
                        den += root;
                    }
                }
                (den > T::zero()).then(|| mat6_scale(&num, T::one() / den))
            }
            _ => linalg::least_squares_null_vector(&a).ok().map(|x| self.combine(&x)),
        };
        if let Some((signed, root)) = normal.as_ref().and_then(signed_sixth_root) {
            res.ctilde = Some(mat6_scale(&signed, T::one() / root));
            res.reason = MaskReason::Ok;
        }
        res
    }
}

/// Per-node output of [`reconstruct_anisotropy`].
#[derive(Clone, Debug)]
pub struct Anisotropy<T> {
    /// Unit-determinant Voigt matrix (21 upper-triangle components), zero on
    /// masked nodes.
    pub ctilde: Field<T>,
    pub f1: Field<T>,
    pub f2: Field<T>,
    pub reasons: Vec<MaskReason>,
    pub method: Method,
    /// Whether any node summed a sample of the subsets rather than all.
    pub sampled: bool,
}

impl<T: Real> Anisotropy<T> {
    pub fn mask(&self) -> Vec<bool> {
        self.reasons.iter().map(|r| *r != MaskReason::Ok).collect()
    }
}

pub fn reconstruct_anisotropy<T: Real>(m: &MeasurementSet<T>, cfg: &ReconConfig<T>) -> Result<Anisotropy<T>> {
    cfg.validate()?;
    let ctx = AnisoCtx {
        m,
        cfg,
        basis: cfg.class.basis(),
        method: cfg.resolve_method(3 * m.extra()),
    };
    let g = m.grid;
    let nodes: Vec<NodeAniso<T>> = (0..g.len()).into_par_iter().map(|n| ctx.node(n)).collect();
    let mut ctilde = Field::zeros(g, 21);
    for (n, r) in nodes.iter().enumerate() {
        if let Some(c) = &r.ctilde {
            ctilde
                .node_mut(n)
                .copy_from_slice(&Stiffness::from_matrix(*c)?.to_upper());
        }
    }
    Ok(Anisotropy {
        ctilde,
        f1: Field::from_data(g, 1, nodes.iter().map(|r| r.f1).collect())?,
        f2: Field::from_data(g, 1, nodes.iter().map(|r| r.f2).collect())?,
        reasons: nodes.iter().map(|r| r.reason).collect(),
        method: ctx.method,
        sampled: nodes.iter().any(|r| r.sampled),
    })
}

/// Derivative along `axis` using only nodes flagged in `valid`: central
/// where both neighbours are valid, otherwise a second-order one-sided
/// stencil. The returned flags mark nodes where some stencil applied.
pub fn masked_diff<T: Real>(f: &Field<T>, valid: &[bool], axis: usize) -> (Field<T>, Vec<bool>) {
    let g = &f.grid;
    let k = f.components;
    let s = g.stride(axis);
    let last = g.dims[axis] - 1;
    let two_h = T::two() * g.spacing;
    let (three, four) = (T::lit(3.0), T::lit(4.0));
    let mut out = Field::zeros(*g, k);
    let mut ok = vec![false; g.len()];
    for n in (0..g.len()).filter(|&n| valid[n]) {
        let pos = g.ijk(n)[axis];
        let up = |d: usize| pos + d <= last && valid[n + d * s];
        let down = |d: usize| pos >= d && valid[n - d * s];
        let stencil: Option<Vec<(usize, T)>> = if up(1) && down(1) {
            Some(vec![(n + s, T::one()), (n - s, -T::one())])
        } else if up(1) && up(2) {
            Some(vec![(n, -three), (n + s, four), (n + 2 * s, -T::one())])
        } else if down(1) && down(2) {
            Some(vec![(n, three), (n - s, -four), (n - 2 * s, T::one())])
        } else {
            None
        };
        let Some(st) = stencil else { continue };
        ok[n] = true;
        for c in 0..k {
            out.data[n * k + c] = st.iter().map(|&(m, w)| w * f.get(m, c)).sum::<T>() / two_h;
        }
    }
    (out, ok)
}

/// Divergence `Σ_i ∂_i σ_ik` of a stress-convention Voigt field.
fn stress_divergence<T: Real>(sigma: &Field<T>, valid: &[bool]) -> (Field<T>, Vec<bool>) {
    let d: Vec<(Field<T>, Vec<bool>)> = (0..3).map(|a| masked_diff(sigma, valid, a)).collect();
    let g = sigma.grid;
    let mut out = Field::zeros(g, 3);
    let mut ok = vec![false; g.len()];
    for n in 0..g.len() {
        if !(d[0].1[n] && d[1].1[n] && d[2].1[n]) {
            continue;
        }
        ok[n] = true;
        for kk in 0..3 {
            out.node_mut(n)[kk] = (0..3).map(|i| d[i].0.get(n, voigt0(i, kk))).sum();
        }
    }
    (out, ok)
}

/// Output of [`reconstruct_tau`].
#[derive(Clone, Debug)]
pub struct TauField<T> {
    pub tau: Field<T>,
    /// `∇ log τ` from the measurements (3 components).
    pub log_gradient: Field<T>,
    /// Nodes where τ was recovered.
    pub valid: Vec<bool>,
    /// Base node of each connected component, the first being the
    /// configured one.
    pub bases: Vec<usize>,
    pub cg_iterations: usize,
}

/// Recovers τ from `∇ log τ = −Σ μ_j div(C̃ ε^(j))`, integrated along a
/// shortest-path tree that prefers deep nodes, or by a least-squares Poisson solve, per connected
/// component of the unmasked nodes. `reference` supplies τ at each base
/// node (ground truth); otherwise `cfg.tau_reference` or 1 is used.
pub fn reconstruct_tau<T: Real>(
    m: &MeasurementSet<T>,
    ctilde: &Field<T>,
    mask: &[bool],
    cfg: &ReconConfig<T>,
    reference: Option<&Field<T>>,
) -> Result<TauField<T>> {
    cfg.validate()?;
    let g = m.grid;
    if ctilde.components != 21 || !ctilde.grid.same_shape(&g) || mask.len() != g.len() {
        return Err(Error::DimensionMismatch("anisotropy field does not match the measurements".into()));
    }
    let unmasked: Vec<bool> = mask.iter().map(|b| !b).collect();
    let mut valid = unmasked.clone();
    if m.len() < 6 {
        valid.iter_mut().for_each(|v| *v = false);
    }
    // stresses of the basis strains under C̃
    let mut sigma = vec![Field::zeros(g, 6); 6.min(m.len())];
    for n in (0..g.len()).filter(|&n| valid[n]) {
        let c = stiffness_at(ctilde, n)?;
        for (j, s) in sigma.iter_mut().enumerate() {
            s.node_mut(n).copy_from_slice(&c.apply_array(&m.strain(j, n)));
        }
    }
    let divs: Vec<(Field<T>, Vec<bool>)> = sigma.iter().map(|s| stress_divergence(s, &valid)).collect();
    let mut grad = Field::zeros(g, 3);
    for n in 0..g.len() {
        if !valid[n] || divs.iter().any(|d| !d.1[n]) {
            valid[n] = false;
            continue;
        }
        let elems: [Sym3<T>; 6] = std::array::from_fn(|j| Sym3(sigma[j].node(n).try_into().expect("6 components")));
        let traces: [T; 6] = std::array::from_fn(|j| elems[j].trace());
        let Some(mu) = GramMatrix6::of(&elems).solve(&traces) else {
            valid[n] = false;
            continue;
        };
        for a in 0..3 {
            grad.node_mut(n)[a] = -(0..6).map(|j| mu[j] * divs[j].0.get(n, a)).sum::<T>();
        }
    }

    let requested = cfg.base_node.unwrap_or_else(|| g.center()).min(g.len() - 1);
    let order = components_from(&g, &valid, requested);
    let mut log_tau = vec![T::zero(); g.len()];
    let mut cg_iterations = 0;
    let h = g.spacing;
    let increment = |n: usize, a: usize| (grad.get(n, a) + grad.get(n + g.stride(a), a)) * h * T::half();
    match cfg.tau_method {
        TauMethod::Path => {
            // Staircase paths through the deepest available nodes: stepping
            // onto a node costs more the closer it is to a face, so face
            // nodes are reached by a final step from the inside.
            let depth_max = g.dims.iter().map(|d| (d - 1) / 2).max().unwrap_or(0);
            let weight = g.dims.iter().copied().max().unwrap_or(1) as u64;
            let cost = |n: usize| 1 + weight * (depth_max - g.boundary_distance(n).min(depth_max)) as u64;
            let mut dist = vec![u64::MAX; g.len()];
            let mut done = vec![false; g.len()];
            for &base in &order {
                dist[base] = 0;
                let mut heap = BinaryHeap::from([Reverse((0u64, base))]);
                while let Some(Reverse((d, n))) = heap.pop() {
                    if done[n] {
                        continue;
                    }
                    done[n] = true;
                    for (nb, a, forward) in neighbours(&g, n) {
                        let nd = d + cost(nb);
                        if !valid[nb] || done[nb] || nd >= dist[nb] {
                            continue;
                        }
                        dist[nb] = nd;
                        log_tau[nb] = if forward {
                            log_tau[n] + increment(n, a)
                        } else {
                            log_tau[n] - increment(nb, a)
                        };
                        heap.push(Reverse((nd, nb)));
                    }
                }
            }
        }
        TauMethod::Poisson => {
            // unknowns: valid nodes except the component bases
            let mut slot = vec![usize::MAX; g.len()];
            let mut nodes = Vec::new();
            for n in (0..g.len()).filter(|&n| valid[n] && !order.contains(&n)) {
                slot[n] = nodes.len();
                nodes.push(n);
            }
            let mut rhs = vec![T::zero(); nodes.len()];
            for (k, &n) in nodes.iter().enumerate() {
                for (nb, a, forward) in neighbours(&g, n) {
                    if !valid[nb] {
                        continue;
                    }
                    // least-squares fit of φ(nb) − φ(n) to the edge increment
                    rhs[k] += if forward { -increment(n, a) } else { increment(nb, a) };
                }
            }
            let apply = |x: &[T]| -> Vec<T> {
                nodes
                    .iter()
                    .map(|&n| {
                        let xn = x[slot[n]];
                        neighbours(&g, n)
                            .filter(|(nb, _, _)| valid[*nb])
                            .map(|(nb, _, _)| xn - if slot[nb] == usize::MAX { T::zero() } else { x[slot[nb]] })
                            .sum()
                    })
                    .collect()
            };
            let max_iter = cfg
                .cg_max_iter
                .unwrap_or_else(|| (20.0 * (nodes.len().max(1) as f64).sqrt()).ceil() as usize * 5);
            let (x, report) = conjugate_gradient(apply, &rhs, cfg.cg_tol, max_iter)?;
            cg_iterations = report.iterations;
            for (k, &n) in nodes.iter().enumerate() {
                log_tau[n] = x[k];
            }
        }
    }

    // scale each component to its reference value at the base
    let comp = component_labels(&g, &valid, &order);
    let mut tau = Field::zeros(g, 1);
    for n in (0..g.len()).filter(|&n| valid[n]) {
        let base = order[comp[n]];
        let r = match (reference, cfg.tau_reference) {
            (_, Some(r)) if base == order[0] => r,
            (Some(f), _) => f.get(base, 0),
            _ => T::one(),
        };
        tau.data[n] = r * (log_tau[n] - log_tau[base]).exp();
    }
    Ok(TauField {
        tau,
        log_gradient: grad,
        valid,
        bases: order,
        cg_iterations,
    })
}

/// `(neighbour, axis, is_forward)` for the six axis neighbours inside the
/// grid.
fn neighbours<T: Real>(g: &Grid<T>, n: usize) -> impl Iterator<Item = (usize, usize, bool)> + '_ {
    let ijk = g.ijk(n);
    (0..3).flat_map(move |a| {
        let s = g.stride(a);
        let fwd = (ijk[a] + 1 < g.dims[a]).then(|| (n + s, a, true));
        let bwd = (ijk[a] > 0).then(|| (n - s, a, false));
        fwd.into_iter().chain(bwd)
    })
}

/// Bases of the connected components of `valid`: the valid node nearest to
/// `requested` first, then the lowest index of each remaining component.
fn components_from<T: Real>(g: &Grid<T>, valid: &[bool], requested: usize) -> Vec<usize> {
    let first = if valid[requested] {
        Some(requested)
    } else {
        let r = g.ijk(requested);
        (0..g.len()).filter(|&n| valid[n]).min_by_key(|&n| {
            let q = g.ijk(n);
            (0..3).map(|a| q[a].abs_diff(r[a]).pow(2)).sum::<usize>()
        })
    };
    let mut bases = Vec::new();
    let mut seen = vec![false; g.len()];
    let starts = first.into_iter().chain(0..g.len());
    for s in starts {
        if !valid[s] || seen[s] {
            continue;
        }
        bases.push(s);
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(n) = queue.pop_front() {
            for (nb, _, _) in neighbours(g, n) {
                if valid[nb] && !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
    }
    bases
}

fn component_labels<T: Real>(g: &Grid<T>, valid: &[bool], bases: &[usize]) -> Vec<usize> {
    let mut label = vec![usize::MAX; g.len()];
    for (c, &b) in bases.iter().enumerate() {
        label[b] = c;
        let mut queue = VecDeque::from([b]);
        while let Some(n) = queue.pop_front() {
            for (nb, _, _) in neighbours(g, n) {
                if valid[nb] && label[nb] == usize::MAX {
                    label[nb] = c;
                    queue.push_back(nb);
                }
            }
        }
    }
    label
}

/// `(div C)_{j··} = −E^{pq} (C_ijkl ∂_i ε^(p)_kl) ε^(q)` per node, with `E`
/// the Gram matrix of the basis strains. Components are `j`-major, each a
/// `Sym3` in `(11, 22, 33, 23, 13, 12)` order. Nodes outside `valid` or with
/// a singular `E` stay zero and are reported `false`.
pub fn reconstruct_divc<T: Real>(
    m: &MeasurementSet<T>,
    c_full: &Field<T>,
    valid: &[bool],
) -> Result<(Field<T>, Vec<bool>)> {
    let g = m.grid;
    if c_full.components != 21 || !c_full.grid.same_shape(&g) || valid.len() != g.len() {
        return Err(Error::DimensionMismatch("stiffness field does not match the measurements".into()));
    }
    if m.len() < 6 {
        return Ok((Field::zeros(g, 18), vec![false; g.len()]));
    }
    let nodes: Vec<Option<[T; 18]>> = (0..g.len())
        .into_par_iter()
        .map(|n| {
            if !valid[n] {
                return None;
            }
            let c = stiffness_at(c_full, n).ok()?;
            let strains: [Sym3<T>; 6] = std::array::from_fn(|j| strain_array_to_sym3(&m.strain(j, n)));
            let einv = GramMatrix6::of(&strains).inverse()?;
            // s[p][j] = Σ_i (c ∂_i ε^(p))_{voigt(i, j)}
            let s: [[T; 3]; 6] = std::array::from_fn(|p| {
                let grad = m.strain_gradient(p, n);
                let cg: [[T; 6]; 3] = std::array::from_fn(|i| c.apply_array(&grad[i]));
                std::array::from_fn(|j| (0..3).map(|i| cg[i][voigt0(i, j)]).sum())
            });
            let mut out = [T::zero(); 18];
            for j in 0..3 {
                for p in 0..6 {
                    for q in 0..6 {
                        let w = einv[p][q] * s[p][j];
                        for t in 0..6 {
                            out[j * 6 + t] -= w * strains[q].0[t];
                        }
                    }
                }
            }
            Some(out)
        })
        .collect();
    let mut out = Field::zeros(g, 18);
    let mut ok = vec![false; g.len()];
    for (n, v) in nodes.into_iter().enumerate() {
        if let Some(v) = v {
            out.node_mut(n).copy_from_slice(&v);
            ok[n] = true;
        }
    }
    Ok((out, ok))
}

/// `div C` of a sampled stiffness field by finite differences, in the
/// layout of [`reconstruct_divc`].
pub fn divc_of_stiffness<T: Real>(c: &Field<T>) -> Result<Field<T>> {
    if c.components != 21 {
        return Err(Error::DimensionMismatch("stiffness field needs 21 components".into()));
    }
    let g = c.grid;
    let d = [c.diff(0), c.diff(1), c.diff(2)];
    let mut out = Field::zeros(g, 18);
    for n in 0..g.len() {
        let dc = [stiffness_at(&d[0], n)?, stiffness_at(&d[1], n)?, stiffness_at(&d[2], n)?];
        out.node_mut(n).copy_from_slice(&divc_from_gradient(&dc));
    }
    Ok(out)
}

/// `Σ_i ∂_i C_ijkl` from the three partial derivatives `∂_i C`, in the
/// layout of [`reconstruct_divc`].
pub fn divc_from_gradient<T: Real>(dc: &[Stiffness<T>; 3]) -> [T; 18] {
    let mut out = [T::zero(); 18];
    for j in 0..3 {
        for (t, &(k, l)) in crate::tensor::VOIGT_PAIRS.iter().enumerate() {
            out[j * 6 + t] = (0..3).map(|i| dc[i].c4(i, j, k, l)).sum();
        }
    }
    out
}

/// Discrete `W^{p,∞}` distance over the nodes flagged in `include`
/// (all nodes when `None`): `p = 0` is the max-abs difference, `p = 1` adds
/// the max-abs of its first differences.
pub fn error_norms<T: Real>(a: &Field<T>, b: &Field<T>, p: u8, include: Option<&[bool]>) -> Result<T> {
    if a.components != b.components || !a.grid.same_shape(&b.grid) {
        return Err(Error::DimensionMismatch("fields differ in shape".into()));
    }
    if p > 1 {
        return Err(Error::InvalidInput(format!("norm order {p} not supported")));
    }
    let all = vec![true; a.grid.len()];
    let inc = include.unwrap_or(&all);
    let diff = Field::from_data(a.grid, a.components, a.data.iter().zip(&b.data).map(|(x, y)| *x - *y).collect())?;
    let k = a.components;
    let max_on = |f: &Field<T>, ok: &[bool]| {
        (0..f.grid.len())
            .filter(|&n| inc[n] && ok[n])
            .flat_map(|n| f.data[n * k..(n + 1) * k].iter().copied())
            .fold(T::zero(), |m, v| m.max(v.abs()))
    };
    let mut norm = max_on(&diff, &all);
    if p == 1 {
        let mut d1 = T::zero();
        for axis in 0..3 {
            let (d, ok) = masked_diff(&diff, inc, axis);
            d1 = d1.max(max_on(&d, &ok));
        }
        norm += d1;
    }
    Ok(norm)
}

/// Reference data for error reporting.
#[derive(Clone, Debug)]
pub struct GroundTruth<T> {
    /// Full stiffness (21 components per node).
    pub stiffness: Field<T>,
    /// Exact `div C`; finite differences of `stiffness` when `None`.
    pub divc: Option<Field<T>>,
}

impl<T: Real> GroundTruth<T> {
    pub fn constant(grid: Grid<T>, c: &Stiffness<T>) -> Self {
        Self {
            stiffness: crate::fd::stiffness_field(grid, |_| *c),
            divc: Some(Field::zeros(grid, 18)),
        }
    }

    /// `(c / det(c)^{1/6}, det(c)^{1/6})` per node.
    pub fn split(&self) -> Result<(Field<T>, Field<T>)> {
        let g = self.stiffness.grid;
        let mut ct = Field::zeros(g, 21);
        let mut tau = Field::zeros(g, 1);
        for n in 0..g.len() {
            let c = stiffness_at(&self.stiffness, n)?;
            let d = c.det();
            if !(d > T::zero()) {
                return Err(Error::InvalidInput(format!("ground-truth stiffness has det {d} at node {n}")));
            }
            let t = d.powf(T::one() / T::lit(6.0));
            ct.node_mut(n).copy_from_slice(&c.scale(T::one() / t).to_upper());
            tau.data[n] = t;
        }
        Ok((ct, tau))
    }
}

/// Relative errors against ground truth over the nodes used for scoring.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    /// Max-abs error of `c̃` over the max-abs true `c̃`.
    pub err_ctilde_p0: f64,
    pub err_ctilde_p1: f64,
    /// Max-abs error of τ over the max true τ.
    pub err_tau_p0: f64,
    pub err_tau_p1: f64,
    /// Max-abs error of `div C` over the largest Frobenius norm of `C`.
    pub err_divc_p0: f64,
    pub err_divc_p1: f64,
    pub scored_nodes: usize,
}

#[derive(Clone, Debug)]
pub struct ReconReport<T> {
    pub grid: Grid<T>,
    pub ctilde: Field<T>,
    pub tau: Field<T>,
    pub divc: Field<T>,
    pub f1: Field<T>,
    pub f2: Field<T>,
    /// `true` where the node was dropped.
    pub mask: Vec<bool>,
    pub reasons: Vec<MaskReason>,
    pub method: Method,
    pub subsets_sampled: bool,
    pub tau_bases: Vec<usize>,
    pub cg_iterations: usize,
    pub errors: Option<ErrorSummary>,
}

impl<T: Real> ReconReport<T> {
    pub fn f1_min(&self) -> T {
        self.f1.data.iter().fold(T::infinity(), |m, v| m.min(*v))
    }

    pub fn f2_min(&self) -> T {
        self.f2.data.iter().fold(T::infinity(), |m, v| m.min(*v))
    }

    pub fn masked_fraction(&self) -> f64 {
        self.mask.iter().filter(|b| **b).count() as f64 / self.mask.len().max(1) as f64
    }

    /// Full stiffness `τ c̃` (zero on masked nodes).
    pub fn stiffness(&self) -> Field<T> {
        let mut out = self.ctilde.clone();
        for n in 0..self.grid.len() {
            let t = self.tau.data[n];
            out.node_mut(n).iter_mut().for_each(|v| *v *= t);
        }
        out
    }
}

/// Runs anisotropy, τ and `div C` recovery; masked nodes carry zeros.
pub fn reconstruct<T: Real>(
    m: &MeasurementSet<T>,
    cfg: &ReconConfig<T>,
    truth: Option<&GroundTruth<T>>,
) -> Result<ReconReport<T>> {
    cfg.validate()?;
    let g = m.grid;
    if let Some(t) = truth {
        if t.stiffness.components != 21 || !t.stiffness.grid.same_shape(&g) {
            return Err(Error::DimensionMismatch("ground truth does not match the measurements".into()));
        }
    }
    let split = truth.map(|t| t.split()).transpose()?;
    let aniso = reconstruct_anisotropy(m, cfg)?;
    let mut reasons = aniso.reasons.clone();
    let mask = aniso.mask();
    let tau = reconstruct_tau(m, &aniso.ctilde, &mask, cfg, split.as_ref().map(|s| &s.1))?;
    for n in 0..g.len() {
        if reasons[n] == MaskReason::Ok && !tau.valid[n] {
            reasons[n] = MaskReason::Tau;
        }
    }
    let mut ctilde = aniso.ctilde;
    for n in (0..g.len()).filter(|&n| reasons[n] != MaskReason::Ok) {
        ctilde.node_mut(n).iter_mut().for_each(|v| *v = T::zero());
    }
    let mut report = ReconReport {
        grid: g,
        ctilde,
        tau: tau.tau,
        divc: Field::zeros(g, 18),
        f1: aniso.f1,
        f2: aniso.f2,
        mask: reasons.iter().map(|r| *r != MaskReason::Ok).collect(),
        reasons,
        method: aniso.method,
        subsets_sampled: aniso.sampled,
        tau_bases: tau.bases,
        cg_iterations: tau.cg_iterations,
        errors: None,
    };
    let valid: Vec<bool> = report.mask.iter().map(|b| !b).collect();
    let (divc, ok) = reconstruct_divc(m, &report.stiffness(), &valid)?;
    report.divc = divc;
    for n in 0..g.len() {
        if !ok[n] && !report.mask[n] {
            report.mask[n] = true;
            report.reasons[n] = MaskReason::Tau;
        }
    }
    if let (Some(t), Some((ct_true, tau_true))) = (truth, split) {
        report.errors = Some(score(&report, t, &ct_true, &tau_true, cfg.error_margin)?);
    }
    Ok(report)
}

fn score<T: Real>(
    r: &ReconReport<T>,
    truth: &GroundTruth<T>,
    ct_true: &Field<T>,
    tau_true: &Field<T>,
    margin: usize,
) -> Result<ErrorSummary> {
    let g = r.grid;
    let include: Vec<bool> = (0..g.len())
        .map(|n| !r.mask[n] && g.boundary_distance(n) >= margin)
        .collect();
    let scored = include.iter().filter(|b| **b).count();
    let divc_true = match &truth.divc {
        Some(d) => d.clone(),
        None => divc_of_stiffness(&truth.stiffness)?,
    };
    let max_on = |f: &Field<T>| {
        (0..g.len())
            .filter(|&n| include[n])
            .flat_map(|n| f.node(n).iter().copied())
            .fold(T::zero(), |m, v| m.max(v.abs()))
    };
    let cnorm = (0..g.len())
        .filter(|&n| include[n])
        .map(|n| stiffness_at(&truth.stiffness, n).map(|c| c.norm()))
        .collect::<Result<Vec<T>>>()?
        .into_iter()
        .fold(T::zero(), T::max);
    let rel = |e: T, s: T| {
        if s > T::zero() {
            (e / s).to_f64().unwrap_or(f64::NAN)
        } else {
            0.0
        }
    };
    let ct_scale = max_on(ct_true);
    Ok(ErrorSummary {
        err_ctilde_p0: rel(error_norms(&r.ctilde, ct_true, 0, Some(&include))?, ct_scale),
        err_ctilde_p1: rel(error_norms(&r.ctilde, ct_true, 1, Some(&include))?, ct_scale),
        err_tau_p0: rel(error_norms(&r.tau, tau_true, 0, Some(&include))?, max_on(tau_true)),
        err_tau_p1: rel(error_norms(&r.tau, tau_true, 1, Some(&include))?, max_on(tau_true)),
        err_divc_p0: rel(error_norms(&r.divc, &divc_true, 0, Some(&include))?, cnorm),
        err_divc_p1: rel(error_norms(&r.divc, &divc_true, 1, Some(&include))?, cnorm),
        scored_nodes: scored,
    })
}

/// `(a, b, c, d, e) = (c11, c12, c13, c33, c44)` of a Voigt matrix.
pub fn ti_parameters<T: Real>(c: &Mat6<T>) -> [T; 5] {
    [c[0][0], c[0][1], c[0][2], c[2][2], c[3][3]]
}

/// Cosine of the angle between two parameter vectors.
pub fn cosine<T: Real>(a: &[T], b: &[T]) -> T {
    let dot: T = a.iter().zip(b).map(|(x, y)| *x * *y).sum();
    let na: T = a.iter().map(|x| *x * *x).sum::<T>().sqrt();
    let nb: T = b.iter().map(|x| *x * *x).sum::<T>().sqrt();
    dot / (na * nb)
}

/// Literal cross-product sum over the 21-dimensional constraint set at one
/// node; used to cross-check the pipeline.
pub fn node_crossprod_reference<T: Real>(
    m: &MeasurementSet<T>,
    n: usize,
    subset_cap: usize,
) -> Result<Option<Mat6<T>>> {
    let binv = basis_inverse(m, n).ok_or(Error::Singular)?;
    let mats: Vec<Mat6<T>> = (6..m.len()).flat_map(|p| node_constraints(m, &binv, p, n)).collect();
    hyperplane::crossprod_sum(&mats, subset_cap)
}
