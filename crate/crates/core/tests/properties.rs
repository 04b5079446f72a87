use elastorecon::fd::{stiffness_field, ForwardProblem};
use elastorecon::hyperplane::{cross21, nullspace_normal, S6Basis};
use elastorecon::linalg::{cofactor_norm_sum, cofactor_norm_sum_by_eigen, DMat};
use elastorecon::recon::{reconstruct_anisotropy, MeasurementSet, ReconConfig};
use elastorecon::synth::{
    general_family, linear_basis_fields, pqr_from_v, random_stable, solution_conditions, v_from_pqr,
};
use elastorecon::tensor::{mat6_dot, mat6_norm, mehrabadi, min_eig_sym6, stability_check, Mat6};
use elastorecon::{io, Field, Grid, Stiffness, Sym3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sym6(r: &mut ChaCha8Rng) -> Mat6<f64> {
    let mut m = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in i..6 {
            let v = r.gen_range(-1.0..1.0);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

fn sym3(r: &mut ChaCha8Rng) -> Sym3<f64> {
    Sym3(std::array::from_fn(|_| r.gen_range(-1.0..1.0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stable_tensors_satisfy_determinant_bound(seed in any::<u64>(), lo in 0.05f64..2.0, spread in 1.0f64..20.0) {
        let c: Stiffness<f64> = random_stable(&mut rng(seed), lo, lo * spread);
        let report = stability_check(&c);
        prop_assert!(report.is_stable);
        let lmin = min_eig_sym6(&mehrabadi(&c)).unwrap();
        prop_assert!(lmin >= lo * (1.0 - 1e-9) && lmin <= lo * spread * (1.0 + 1e-9));
        prop_assert!(c.det() >= report.det_lower_bound * (1.0 - 1e-10));
    }

    #[test]
    fn det_scales_by_sixth_power(seed in any::<u64>(), k in 0.1f64..10.0) {
        let c: Stiffness<f64> = random_stable(&mut rng(seed), 0.5, 4.0);
        let ratio = c.scale(k).det() / c.det();
        prop_assert!((ratio / k.powi(6) - 1.0).abs() < 1e-10);
        let ct = c.det_normalized().unwrap();
        prop_assert!((ct.det() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn v_maps_are_mutually_inverse(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (p, q, s) = (sym3(&mut r), sym3(&mut r), sym3(&mut r));
        let (p2, q2, s2) = pqr_from_v(&v_from_pqr(&p, &q, &s));
        for k in 0..6 {
            prop_assert!((p.0[k] - p2.0[k]).abs() < 1e-14);
            prop_assert!((q.0[k] - q2.0[k]).abs() < 1e-14);
            prop_assert!((s.0[k] - s2.0[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn family_fields_solve_the_constant_system(seed in any::<u64>()) {
        let c: Stiffness<f64> = random_stable(&mut rng(seed), 0.3, 6.0);
        for f in general_family(&c).unwrap() {
            let res = solution_conditions(&c, &f.v_triple());
            let scale = c.norm() * f.v_triple().as_array().iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(res.iter().all(|v| v.abs() <= 1e-10 * scale));
        }
    }

    #[test]
    fn cross21_is_orthogonal_and_alternating(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m: Vec<Mat6<f64>> = (0..20).map(|_| sym6(&mut r)).collect();
        let basis = S6Basis::canonical();
        let n = cross21(&m, &basis).unwrap();
        let scale = mat6_norm(&n);
        prop_assert!(scale > 0.0);
        for mi in &m {
            prop_assert!(mat6_dot(&n, mi).abs() <= 1e-10 * scale * mat6_norm(mi));
        }
        let mut swapped = m.clone();
        swapped.swap(3, 11);
        let ns = cross21(&swapped, &basis).unwrap();
        for a in 0..6 {
            for b in 0..6 {
                prop_assert!((n[a][b] + ns[a][b]).abs() <= 1e-10 * scale);
            }
        }
        let (normal, rank) = nullspace_normal(&m).unwrap();
        prop_assert_eq!(rank, 20);
        let cos = mat6_dot(&n, &normal) / scale;
        prop_assert!((cos.abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cauchy_binet_sum_matches_eigenvalues(seed in any::<u64>(), rows in 4usize..12) {
        let mut r = rng(seed);
        let a: DMat<f64> = DMat::from_fn(rows, 5, |_, _| r.gen_range(-1.0..1.0));
        let x = cofactor_norm_sum(&a).unwrap();
        let y = cofactor_norm_sum_by_eigen(&a).unwrap();
        prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-12));
    }

    #[test]
    fn efld_round_trip(seed in any::<u64>(), nx in 3usize..6, ny in 3usize..6, nz in 3usize..6, comps in 1usize..8) {
        let mut r = rng(seed);
        let g = Grid::new([nx, ny, nz], r.gen_range(0.01..2.0), [r.gen_range(-1.0..1.0), 0.0, 3.5]).unwrap();
        let f = Field::from_fn(g, comps, |_| (0..comps).map(|_| r.gen_range(-1e6..1e6)).collect());
        let mut buf = Vec::new();
        io::write_field(&mut buf, &f).unwrap();
        prop_assert_eq!(io::read_field(&buf[..]).unwrap(), f);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn forward_operator_is_symmetric(seed in any::<u64>()) {
        let mut r = rng(seed);
        let c0: Stiffness<f64> = random_stable(&mut r, 0.5, 3.0);
        let g = Grid::<f64>::unit_cube(5).unwrap();
        let (a, b) = (r.gen_range(0.1..0.5), r.gen_range(-1.0..1.0));
        let cf = stiffness_field(g, |x| c0.scale(1.0 + a * (b * x[0] + x[1] * x[2]).sin()));
        let p = ForwardProblem::new(&cf, Field::zeros(g, 3)).unwrap();
        let interior = |r: &mut ChaCha8Rng| {
            let mut f = Field::zeros(g, 3);
            for n in (0..g.len()).filter(|&n| !g.on_boundary(n)) {
                for k in 0..3 {
                    f.data[n * 3 + k] = r.gen_range(-1.0..1.0);
                }
            }
            f
        };
        let (u, v) = (interior(&mut r), interior(&mut r));
        let au = p.assemble_apply(&u).unwrap();
        let av = p.assemble_apply(&v).unwrap();
        let dot = |x: &Field<f64>, y: &Field<f64>| x.data.iter().zip(&y.data).map(|(s, t)| s * t).sum::<f64>();
        let (l, rr) = (dot(&au, &v), dot(&u, &av));
        prop_assert!((l - rr).abs() <= 1e-11 * l.abs().max(rr.abs()).max(1.0));
        // negative definite on interior-supported fields
        prop_assert!(dot(&au, &u) < 0.0);
    }

    #[test]
    fn anisotropy_ignores_field_amplitudes(seed in any::<u64>(), k in prop::array::uniform4(0.2f64..5.0)) {
        let c: Stiffness<f64> = random_stable(&mut rng(seed), 0.5, 3.0);
        let g = Grid::<f64>::unit_cube(3).unwrap();
        let fam = general_family(&c).unwrap();
        let mut fields: Vec<_> = linear_basis_fields().to_vec();
        fields.extend(fam.iter().copied());
        let base = MeasurementSet::from_polynomials(g, &fields);
        for (i, kk) in k.iter().enumerate() {
            fields[6 + 3 * i] = fields[6 + 3 * i].scale(*kk);
            fields[i] = fields[i].scale(1.0 / kk);
        }
        let scaled = MeasurementSet::from_polynomials(g, &fields);
        let cfg = ReconConfig::default();
        let a = reconstruct_anisotropy(&base, &cfg).unwrap();
        let b = reconstruct_anisotropy(&scaled, &cfg).unwrap();
        prop_assert!(a.mask().iter().all(|m| !m) && b.mask().iter().all(|m| !m));
        for (x, y) in a.ctilde.data.iter().zip(&b.ctilde.data) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }
}
