use elastorecon::fd::{displacement_field, stiffness_field, strain_of, ForwardProblem};
use elastorecon::recon::{reconstruct, GroundTruth, MaskReason, MeasurementSet, Method, ReconConfig, TauMethod};
use elastorecon::synth::{general_family, linear_basis_fields, random_stable, spanning_subfamily, QuadraticDisplacement};
use elastorecon::{Field, Grid, Stiffness};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn thirteen_fields<T: elastorecon::Real>(c: &Stiffness<T>) -> Vec<QuadraticDisplacement<T>> {
    let fam = general_family(c).unwrap();
    let pick = spanning_subfamily(&fam, 7).unwrap();
    let mut f = linear_basis_fields().to_vec();
    f.extend(pick.iter().map(|&i| fam[i]));
    f
}

#[test]
fn exact_data_reproduce_a_constant_tensor() {
    let c: Stiffness<f64> = random_stable(&mut ChaCha8Rng::seed_from_u64(4), 0.5, 4.0);
    let g = Grid::unit_cube(5).unwrap();
    let m = MeasurementSet::from_polynomials(g, &thirteen_fields(&c));
    let truth = GroundTruth::constant(g, &c);
    for tau_method in [TauMethod::Path, TauMethod::Poisson] {
        let cfg = ReconConfig { tau_method, ..Default::default() };
        let r = reconstruct(&m, &cfg, Some(&truth)).unwrap();
        assert_eq!(r.masked_fraction(), 0.0);
        let e = r.errors.unwrap();
        assert!(e.err_ctilde_p0 < 1e-10, "{e:?}");
        assert!(e.err_tau_p0 < 1e-10, "{e:?}");
        assert!(e.err_divc_p0 < 1e-10, "{e:?}");
        assert_eq!(e.scored_nodes, g.len());
    }
}

#[test]
fn single_precision_pipeline() {
    let c64: Stiffness<f64> = random_stable(&mut ChaCha8Rng::seed_from_u64(9), 1.0, 3.0);
    let c = Stiffness::<f32>::from_upper(&c64.to_upper().map(|v| v as f32)).unwrap();
    let g = Grid::<f32>::unit_cube(4).unwrap();
    let m = MeasurementSet::from_polynomials(g, &thirteen_fields(&c));
    let cfg = ReconConfig::<f32> { c1: 1e-30, ..Default::default() };
    let r = reconstruct(&m, &cfg, Some(&GroundTruth::constant(g, &c))).unwrap();
    let e = r.errors.unwrap();
    assert!(r.masked_fraction() == 0.0, "masked {} {:?} f1 {} f2 {}", r.masked_fraction(), &r.reasons[..3], r.f1_min(), r.f2_min());
    assert!(e.err_ctilde_p0 < 1e-3 && e.err_tau_p0 < 1e-3, "{e:?}");
}

#[test]
fn variable_scale_from_forward_solves() {
    let c0: Stiffness<f64> = random_stable(&mut ChaCha8Rng::seed_from_u64(11), 1.0, 3.0);
    let g = Grid::unit_cube(9).unwrap();
    let tau = |x: [f64; 3]| 1.0 + 0.3 * (x[0] + 0.5 * x[1]).sin() * x[2];
    let cfield = stiffness_field(g, |x| c0.scale(tau(x)));
    let mut fields = linear_basis_fields().to_vec();
    fields.extend(general_family(&c0).unwrap());
    let strains: Vec<Field<f64>> = fields
        .iter()
        .map(|f| {
            let p = ForwardProblem::new(&cfield, displacement_field(g, |x| f.eval(&x))).unwrap();
            let (u, rep) = p.solve_dirichlet(1e-11, p.default_max_iter()).unwrap();
            assert!(rep.relative_residual <= 1e-11);
            strain_of(&u).unwrap()
        })
        .collect();
    let m = MeasurementSet::sampled(strains).unwrap();
    let truth = GroundTruth { stiffness: cfield, divc: None };
    let cfg = ReconConfig { error_margin: 1, ..Default::default() };
    let r = reconstruct(&m, &cfg, Some(&truth)).unwrap();
    let e = r.errors.unwrap();
    assert_eq!(r.masked_fraction(), 0.0);
    assert!(e.err_ctilde_p0 < 0.05 && e.err_tau_p0 < 0.1 && e.err_divc_p0 < 0.1, "{e:?}");
}

#[test]
fn too_few_fields_mask_everything() {
    let g = Grid::<f64>::unit_cube(3).unwrap();
    let m = MeasurementSet::from_polynomials(g, &linear_basis_fields()[..5]);
    let r = reconstruct(&m, &ReconConfig::default(), None).unwrap();
    assert_eq!(r.masked_fraction(), 1.0);
    assert!(r.reasons.iter().all(|x| *x == MaskReason::HypothesisA));
    assert!(r.ctilde.data.iter().chain(&r.tau.data).chain(&r.divc.data).all(|v| *v == 0.0));
}

#[test]
fn methods_agree_on_exact_data() {
    let c: Stiffness<f64> = random_stable(&mut ChaCha8Rng::seed_from_u64(21), 0.5, 4.0);
    let g = Grid::unit_cube(3).unwrap();
    let m = MeasurementSet::from_polynomials(g, &thirteen_fields(&c));
    let run = |method| reconstruct(&m, &ReconConfig { method, ..Default::default() }, None).unwrap();
    let (a, b) = (run(Method::Nullspace), run(Method::Crossprod));
    assert_eq!(run(Method::Auto).method, Method::Crossprod);
    for (x, y) in a.ctilde.data.iter().zip(&b.ctilde.data) {
        assert!((x - y).abs() < 1e-10);
    }
}
