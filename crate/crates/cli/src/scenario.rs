//! Scenario configuration and synthetic data generation.

use std::f64::consts::PI;
use std::path::PathBuf;

use elastorecon::fd::{displacement_field, stiffness_field, strain_of, ForwardProblem};
use elastorecon::recon::{divc_from_gradient, AnisotropyClass, GroundTruth, MeasurementSet, Method, ReconConfig, TauMethod};
use elastorecon::synth::{
    general_family, linear_basis_fields, random_stable, random_ti, spanning_subfamily, ti_fields, QuadraticDisplacement,
    TIParams,
};
use elastorecon::tensor::{mat6_norm, stability_check};
use elastorecon::{Field, Grid, Stiffness, Sym3};
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::noise::{add_relative_noise, stream_rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Constant,
    Ti,
    ScaledAnisotropy,
    NearConstant,
    FromFiles,
}

/// Exactly one way of fixing the base tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum StiffnessSpec {
    /// 21 upper-triangle Voigt entries, row-major.
    Voigt(Vec<f64>),
    /// `(a, b, c, d, e)`.
    Ti([f64; 5]),
    /// Mehrabadi spectrum uniform in `[lo, hi]`.
    Random { lo: f64, hi: f64, seed: u64 },
    RandomTi { seed: u64 },
}

/// Scalar factor `τ(x)` of the scaled-anisotropy scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "profile", deny_unknown_fields)]
pub enum TauProfile {
    /// `1 + amplitude · sin(πx) sin(πy) sin(πz)`.
    SinProduct { amplitude: f64 },
    /// `1 + g · x`.
    Linear { gradient: [f64; 3] },
    /// `exp(g · x)`.
    Exponential { gradient: [f64; 3] },
}

impl TauProfile {
    pub fn value(&self, x: [f64; 3]) -> f64 {
        match self {
            TauProfile::SinProduct { amplitude } => {
                1.0 + amplitude * (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * x[2]).sin()
            }
            TauProfile::Linear { gradient } => 1.0 + dot3(gradient, &x),
            TauProfile::Exponential { gradient } => dot3(gradient, &x).exp(),
        }
    }

    pub fn gradient(&self, x: [f64; 3]) -> [f64; 3] {
        match self {
            TauProfile::SinProduct { amplitude } => {
                let s = x.map(|v| (PI * v).sin());
                let c = x.map(|v| (PI * v).cos());
                [
                    amplitude * PI * c[0] * s[1] * s[2],
                    amplitude * PI * s[0] * c[1] * s[2],
                    amplitude * PI * s[0] * s[1] * c[2],
                ]
            }
            TauProfile::Linear { gradient } => *gradient,
            TauProfile::Exponential { gradient } => {
                let e = dot3(gradient, &x).exp();
                gradient.map(|g| g * e)
            }
        }
    }
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Which general-family solutions accompany the six linear fields.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// The first 7 family members whose constraints reach rank 20.
    #[default]
    Spanning7,
    /// All 15.
    Full,
}

/// Optional overrides of the reconstruction defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconSettings {
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub subset_cap: Option<usize>,
    pub method: Option<Method>,
    pub tau_method: Option<TauMethod>,
    pub class: Option<AnisotropyClass>,
    pub base_node: Option<usize>,
    pub tau_reference: Option<f64>,
    /// Nodes closer than this many spacings to a face are not scored.
    pub error_margin: Option<usize>,
    /// Same in box units, `ceil(distance / h)` nodes; keeps the scored
    /// region fixed across a grid sweep.
    pub error_distance: Option<f64>,
    pub cg_tol: Option<f64>,
    pub cg_max_iter: Option<usize>,
}

impl ReconSettings {
    pub fn to_config(&self, class: AnisotropyClass, grid: &Grid<f64>) -> ReconConfig<f64> {
        let d = ReconConfig::<f64>::default();
        let margin = match (self.error_margin, self.error_distance) {
            (Some(m), _) => m,
            // the small allowance keeps exact multiples of h from rounding up
            (None, Some(x)) => (x / grid.spacing - 1e-9).ceil().max(0.0) as usize,
            (None, None) => d.error_margin,
        };
        ReconConfig {
            c0: self.c0.unwrap_or(d.c0),
            c1: self.c1.unwrap_or(d.c1),
            fd_order: 2,
            subset_cap: self.subset_cap.unwrap_or(d.subset_cap),
            method: self.method.unwrap_or(d.method),
            tau_method: self.tau_method.unwrap_or(d.tau_method),
            class: self.class.unwrap_or(class),
            base_node: self.base_node,
            tau_reference: self.tau_reference,
            error_margin: margin,
            cg_tol: self.cg_tol.unwrap_or(d.cg_tol),
            cg_max_iter: self.cg_max_iter,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub tol: f64,
    /// Defaults to `20 √(unknowns)`.
    pub max_iter: Option<usize>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

/// Parameter list walked by `bench`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Sweep {
    Eta(Vec<f64>),
    Delta(Vec<f64>),
    Grid(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: Kind,
    #[serde(default)]
    pub stiffness: Option<StiffnessSpec>,
    #[serde(default)]
    pub tau: Option<TauProfile>,
    /// Amplitude of the anisotropic perturbation of `near-constant`.
    #[serde(default)]
    pub delta: f64,
    /// Nodes per axis on the unit cube.
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub family: Family,
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub seed: u64,
    /// Perturb displacements and difference them instead of perturbing the
    /// strains directly.
    #[serde(default)]
    pub displacement_noise: bool,
    #[serde(default)]
    pub inputs: Option<PathBuf>,
    #[serde(default)]
    pub recon: ReconSettings,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub sweep: Option<Sweep>,
}

fn default_grid() -> usize {
    9
}

impl Default for Scenario {
    /// Constant identity-like tensor (Mehrabadi spectrum in `[0.8, 1.25]`)
    /// on a 9³ grid. The identity itself is too symmetric for any 7-field
    /// subfamily to reach rank 20.
    fn default() -> Self {
        Self {
            kind: Kind::Constant,
            stiffness: Some(StiffnessSpec::Random {
                lo: 0.8,
                hi: 1.25,
                seed: 0,
            }),
            tau: None,
            delta: 0.0,
            grid: default_grid(),
            family: Family::default(),
            eta: 0.0,
            seed: 0,
            displacement_noise: false,
            inputs: None,
            recon: ReconSettings::default(),
            solver: SolverSettings::default(),
            sweep: None,
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(bad(format!("eta must be finite and non-negative, got {}", self.eta)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(bad(format!("delta must be finite and non-negative, got {}", self.delta)));
        }
        if self.grid < 3 {
            return Err(bad(format!("grid needs at least 3 nodes per axis, got {}", self.grid)));
        }
        if !(self.solver.tol > 0.0) {
            return Err(bad("solver tol must be positive"));
        }
        match (self.kind, &self.stiffness) {
            (Kind::FromFiles, None) => {
                if self.inputs.is_none() {
                    return Err(bad("from-files needs an inputs directory"));
                }
            }
            (Kind::FromFiles, Some(_)) => return Err(bad("from-files takes no stiffness spec")),
            (_, None) => return Err(bad("exactly one stiffness spec is required")),
            (Kind::Ti, Some(StiffnessSpec::Ti(_) | StiffnessSpec::RandomTi { .. })) => {}
            (Kind::Ti, Some(_)) => return Err(bad("the ti scenario needs a ti or random-ti stiffness spec")),
            (_, Some(_)) => {}
        }
        if self.kind == Kind::ScaledAnisotropy && self.tau.is_none() {
            return Err(bad("scaled-anisotropy needs a tau profile"));
        }
        if self.kind != Kind::ScaledAnisotropy && self.tau.is_some() {
            return Err(bad("a tau profile only applies to scaled-anisotropy"));
        }
        if let Some(Sweep::Eta(v) | Sweep::Delta(v)) = &self.sweep {
            if v.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return Err(bad("sweep values must be finite and non-negative"));
            }
        }
        if let Some(Sweep::Grid(v)) = &self.sweep {
            if v.iter().any(|n| *n < 3) {
                return Err(bad("grid sweep values must be at least 3"));
            }
        }
        if self.recon.error_margin.is_some() && self.recon.error_distance.is_some() {
            return Err(bad("set at most one of error_margin and error_distance"));
        }
        if let Some(x) = self.recon.error_distance {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(bad("error_distance must be finite and non-negative"));
            }
        }
        self.recon.to_config(self.class(), &self.grid_spec()?).validate()?;
        if self.kind != Kind::FromFiles {
            let c = self.base_tensor()?;
            let rep = stability_check(&c);
            if !rep.is_stable {
                return Err(bad(format!(
                    "stiffness is not stable: min eigenvalue of the Mehrabadi matrix is {:e}",
                    rep.lambda_min
                )));
            }
        }
        Ok(())
    }

    pub fn class(&self) -> AnisotropyClass {
        match self.kind {
            Kind::Ti => AnisotropyClass::TransverselyIsotropic,
            _ => AnisotropyClass::General,
        }
    }

    fn ti_params(&self) -> Option<TIParams<f64>> {
        match self.stiffness.as_ref()? {
            StiffnessSpec::Ti(p) => Some(TIParams::from_array(p)),
            StiffnessSpec::RandomTi { seed } => Some(random_ti(&mut SplitMix64::seed_from_u64(*seed))),
            _ => None,
        }
    }

    /// The constant tensor (`C̃0` for the variable scenarios).
    pub fn base_tensor(&self) -> Result<Stiffness<f64>> {
        if let Some(t) = self.ti_params() {
            return Ok(t.tensor());
        }
        match &self.stiffness {
            Some(StiffnessSpec::Voigt(v)) => Ok(Stiffness::from_upper(v).map_err(|e| bad(e.to_string()))?),
            Some(StiffnessSpec::Random { lo, hi, seed }) => {
                if !(*lo > 0.0 && hi >= lo && hi.is_finite()) {
                    return Err(bad(format!("random spectrum needs 0 < lo <= hi, got [{lo}, {hi}]")));
                }
                Ok(random_stable(&mut SplitMix64::seed_from_u64(*seed), *lo, *hi))
            }
            _ => Err(bad("no stiffness spec")),
        }
    }

    /// Fixed direction of the near-constant perturbation, `|P| = |C0|`.
    fn perturbation(&self, c0: &Stiffness<f64>) -> Stiffness<f64> {
        let p: Stiffness<f64> = random_stable(&mut stream_rng(self.seed, u64::MAX), 0.5, 1.5);
        p.scale(c0.norm() / mat6_norm(p.matrix()))
    }

    /// Whether the true stiffness is the same at every node.
    pub fn is_constant(&self) -> bool {
        match self.kind {
            Kind::Constant | Kind::Ti => true,
            Kind::NearConstant => self.delta == 0.0,
            _ => false,
        }
    }

    pub fn grid_spec(&self) -> Result<Grid<f64>> {
        Ok(Grid::unit_cube(self.grid)?)
    }

    /// Six linear fields followed by the extra polynomial solutions of the
    /// base tensor.
    pub fn polynomials(&self) -> Result<Vec<QuadraticDisplacement<f64>>> {
        let mut out = linear_basis_fields().to_vec();
        if let (Kind::Ti, Some(t)) = (self.kind, self.ti_params()) {
            let (u7, u8) = ti_fields(&t);
            out.extend([u7, u8]);
            return Ok(out);
        }
        let fam = general_family(&self.base_tensor()?)?;
        match self.family {
            Family::Full => out.extend(fam),
            Family::Spanning7 => {
                let pick = spanning_subfamily(&fam, 7).ok_or_else(|| bad("no 7-field subfamily reaches rank 20; use \"family\": \"full\""))?;
                out.extend(pick.iter().map(|&i| fam[i]));
            }
        }
        Ok(out)
    }

    /// True stiffness and exact `div C` on `grid`.
    pub fn truth(&self, grid: Grid<f64>) -> Result<GroundTruth<f64>> {
        let c0 = self.base_tensor()?;
        Ok(match self.kind {
            Kind::Constant | Kind::Ti => GroundTruth::constant(grid, &c0),
            Kind::ScaledAnisotropy => {
                let tau = self.tau.clone().ok_or_else(|| bad("missing tau profile"))?;
                let stiffness = stiffness_field(grid, |x| c0.scale(tau.value(x)));
                let divc = Field::from_fn(grid, 18, |x| {
                    let g = tau.gradient(x);
                    divc_from_gradient(&g.map(|gi| c0.scale(gi))).to_vec()
                });
                GroundTruth {
                    stiffness,
                    divc: Some(divc),
                }
            }
            Kind::NearConstant => {
                let p = self.perturbation(&c0);
                let delta = self.delta;
                let phi = |x: [f64; 3]| x.map(|v| (PI * v).sin());
                let stiffness = stiffness_field(grid, |x| {
                    let s = phi(x);
                    add(&c0, &p.scale(delta * s[0] * s[1] * s[2]))
                });
                let divc = Field::from_fn(grid, 18, |x| {
                    let s = phi(x);
                    let c = x.map(|v| PI * (PI * v).cos());
                    let g = [c[0] * s[1] * s[2], s[0] * c[1] * s[2], s[0] * s[1] * c[2]];
                    divc_from_gradient(&g.map(|gi| p.scale(delta * gi))).to_vec()
                });
                GroundTruth {
                    stiffness,
                    divc: Some(divc),
                }
            }
            Kind::FromFiles => return Err(bad("from-files has no synthetic ground truth")),
        })
    }
}

fn add(a: &Stiffness<f64>, b: &Stiffness<f64>) -> Stiffness<f64> {
    let (x, y) = (a.to_upper(), b.to_upper());
    let s: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p + q).collect();
    Stiffness::from_upper(&s).expect("21 symmetric entries")
}

/// Per-field forward-solve statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStat {
    pub field: usize,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Synthetic displacements, strains and ground truth of one scenario run.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub grid: Grid<f64>,
    pub class: AnisotropyClass,
    /// Exact polynomials when the strains are their noise-free samples.
    pub polynomials: Option<Vec<QuadraticDisplacement<f64>>>,
    pub displacements: Vec<Field<f64>>,
    pub strains: Vec<Field<f64>>,
    pub truth: Option<GroundTruth<f64>>,
    pub solves: Vec<SolveStat>,
}

impl Dataset {
    pub fn measurements(&self) -> Result<MeasurementSet<f64>> {
        Ok(match &self.polynomials {
            Some(p) => MeasurementSet::from_polynomials(self.grid, p),
            None => MeasurementSet::sampled(self.strains.clone())?,
        })
    }
}

/// Builds the data of `s`: sampled polynomials for constant stiffness
/// unless `force_solve`, forward solves with the polynomials as Dirichlet
/// data otherwise; then the configured noise.
pub fn generate(s: &Scenario, force_solve: bool) -> Result<Dataset> {
    s.validate()?;
    if s.kind == Kind::FromFiles {
        return Err(bad("from-files scenarios are read, not generated"));
    }
    let grid = s.grid_spec()?;
    let polys = s.polynomials()?;
    let truth = s.truth(grid)?;
    let solve = force_solve || !s.is_constant();
    let mut displacements = Vec::with_capacity(polys.len());
    let mut strains = Vec::with_capacity(polys.len());
    let mut solves = Vec::new();
    for (j, f) in polys.iter().enumerate() {
        let boundary = displacement_field(grid, |x| f.eval(&x));
        let (mut u, mut e) = if solve {
            let p = ForwardProblem::new(&truth.stiffness, boundary)?;
            let max_iter = s.solver.max_iter.unwrap_or_else(|| p.default_max_iter());
            let (u, rep) = p.solve_dirichlet(s.solver.tol, max_iter)?;
            solves.push(SolveStat {
                field: j,
                iterations: rep.iterations,
                relative_residual: rep.relative_residual,
            });
            let e = strain_of(&u)?;
            (u, e)
        } else {
            let e = Field::from_fn(grid, 6, |x| f.eval_voigt_strain(&x).to_vec());
            (boundary, e)
        };
        if s.eta > 0.0 {
            let mut rng = stream_rng(s.seed, j as u64);
            if s.displacement_noise {
                add_relative_noise(&mut u, s.eta, &mut rng);
                e = strain_of(&u)?;
            } else {
                add_relative_noise(&mut e, s.eta, &mut rng);
            }
        }
        displacements.push(u);
        strains.push(e);
    }
    Ok(Dataset {
        grid,
        class: s.class(),
        polynomials: (!solve && s.eta == 0.0).then_some(polys),
        displacements,
        strains,
        truth: Some(truth),
        solves,
    })
}

/// Serializable polynomial coefficients (`½x·Px`, `½x·Qx`, `½x·Rx` plus
/// the affine part).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolySpec {
    pub p: [f64; 6],
    pub q: [f64; 6],
    pub r: [f64; 6],
    pub linear: [[f64; 3]; 3],
    pub constant: [f64; 3],
}

impl From<&QuadraticDisplacement<f64>> for PolySpec {
    fn from(f: &QuadraticDisplacement<f64>) -> Self {
        Self {
            p: f.p.0,
            q: f.q.0,
            r: f.r.0,
            linear: f.linear,
            constant: f.constant,
        }
    }
}

impl From<&PolySpec> for QuadraticDisplacement<f64> {
    fn from(s: &PolySpec) -> Self {
        QuadraticDisplacement::quadratic(Sym3(s.p), Sym3(s.q), Sym3(s.r)).with_affine(s.linear, s.constant)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_requires_exactly_one_stiffness_spec() {
        assert!(Scenario::from_json(r#"{"kind":"constant"}"#).is_err());
        assert!(Scenario::from_json(r#"{"kind":"constant","stiffness":{"ti":[3,1,1,3,1],"voigt":[]}}"#).is_err());
        let s = Scenario::from_json(r#"{"kind":"ti","stiffness":{"ti":[3.0,1.0,1.0,3.0,1.0]}}"#).unwrap();
        assert_eq!(s.polynomials().unwrap().len(), 8);
        assert!(Scenario::from_json(r#"{"kind":"ti","stiffness":{"random":{"lo":1,"hi":2,"seed":1}}}"#).is_err());
        assert!(Scenario::from_json(r#"{"kind":"constant","stiffness":{"random-ti":{"seed":1}},"eta":-1}"#).is_err());
        assert!(Scenario::from_json(r#"{"kind":"scaled-anisotropy","stiffness":{"random-ti":{"seed":1}}}"#).is_err());
        assert!(Scenario::from_json(r#"{"kind":"constant","stiffness":{"random-ti":{"seed":1}},"colour":1}"#).is_err());
    }

    #[test]
    fn unstable_spec_reports_lambda_min() {
        let mut v = vec![0.0; 21];
        v[0] = 1.0;
        let s = Scenario {
            stiffness: Some(StiffnessSpec::Voigt(v)),
            ..Scenario::default()
        };
        let msg = s.validate().unwrap_err().to_string();
        assert!(msg.contains("min eigenvalue"), "{msg}");
    }

    #[test]
    fn default_scenario_has_thirteen_fields_and_unit_f1() {
        let s = Scenario::default();
        let d = generate(&s, false).unwrap();
        assert_eq!(d.strains.len(), 13);
        let f1 = elastorecon::recon::f1_map(&d.measurements().unwrap());
        assert!(f1.data.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn tau_profile_gradients_match_differences() {
        let profiles = [
            TauProfile::SinProduct { amplitude: 0.2 },
            TauProfile::Linear { gradient: [0.1, -0.2, 0.3] },
            TauProfile::Exponential { gradient: [0.4, 0.1, -0.2] },
        ];
        let x = [0.3, 0.6, 0.2];
        let h = 1e-6;
        for p in &profiles {
            let g = p.gradient(x);
            for a in 0..3 {
                let (mut xp, mut xm) = (x, x);
                xp[a] += h;
                xm[a] -= h;
                let fd = (p.value(xp) - p.value(xm)) / (2.0 * h);
                assert!((fd - g[a]).abs() < 1e-8, "{p:?} axis {a}");
            }
        }
    }

    #[test]
    fn identity_needs_the_full_family() {
        let mut id = vec![0.0; 21];
        for i in [0, 6, 11, 15, 18, 20] {
            id[i] = 1.0;
        }
        let mut s = Scenario {
            stiffness: Some(StiffnessSpec::Voigt(id)),
            ..Scenario::default()
        };
        assert!(s.polynomials().is_err());
        s.family = Family::Full;
        assert_eq!(s.polynomials().unwrap().len(), 21);
    }

    #[test]
    fn poly_spec_round_trip() {
        let s = Scenario::default();
        for f in s.polynomials().unwrap() {
            let back = QuadraticDisplacement::from(&PolySpec::from(&f));
            assert_eq!(back, f);
        }
    }
}
