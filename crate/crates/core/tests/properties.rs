use nnflow::constitutive::{coefficient_tensor, ellipticity_constant, quadratic_form, stress_at, ViscosityModel};
use nnflow::fields::{lq_norm, lq_norm_pow, Field, Grid, Rank};
use nnflow::lagrangian::e_from_jacobian;
use nnflow::symbol::{e_symbol, sector_inequality_check, Sector};
use nnflow::tensor::Mat;
use num_complex::Complex64;
use proptest::prelude::*;

fn sym2(v: [f64; 3]) -> Mat {
    Mat::from_rows(2, &[v[0], v[1], v[1], v[2]])
}

fn model(kind: u8) -> ViscosityModel {
    match kind {
        0 => ViscosityModel::newtonian(1.0, 1.0),
        1 => ViscosityModel::power_law(1.0, 1.8, 0.5),
        _ => ViscosityModel::power_law(0.8, 2.6, 0.3),
    }
}

fn field(g: &Grid, vals: &[f64]) -> Field {
    let v: Vec<f64> = (0..g.len()).map(|i| vals[i % vals.len()] * (1.0 + (i % 7) as f64 * 0.1)).collect();
    Field::from_components(g, Rank::Scalar, vec![v]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn quadratic_form_matches_contraction(kind in 0u8..3, d in prop::array::uniform3(-0.5f64..0.5), x in prop::array::uniform3(-2.0f64..2.0)) {
        let m = model(kind);
        let (dm, xi) = (sym2(d), sym2(x));
        let direct = coefficient_tensor(&m, &dm).unwrap().contract(&xi);
        let form = quadratic_form(&m, &dm, &xi).unwrap();
        prop_assert!((direct - form).abs() <= 1e-12 * direct.abs().max(1e-12));
    }

    #[test]
    fn stress_splits_into_deviator_and_trace(kind in 0u8..3, d in prop::array::uniform3(-0.5f64..0.5)) {
        let m = model(kind);
        let dm = sym2(d);
        let s = stress_at(&m, &dm, 0).unwrap();
        let r = dm.trace();
        prop_assert!((s.trace() - 2.0 * m.lambda(r)[0] * r).abs() < 1e-13);
        let dev = s.dev();
        let expect = dm.dev().scale(2.0 * m.mu(dm.dev().norm_sq())[0]);
        prop_assert!((dev - expect).max_abs() < 1e-13);
        prop_assert!((s - s.transpose()).max_abs() == 0.0);
    }

    #[test]
    fn symbol_is_quadratically_homogeneous(kind in 0u8..3, d in prop::array::uniform3(-0.5f64..0.5),
                                           xi in prop::array::uniform2(-3.0f64..3.0), t in 0.01f64..50.0) {
        let a = coefficient_tensor(&model(kind), &sym2(d)).unwrap();
        let e1 = e_symbol(&a, 1.3, &xi);
        let et = e_symbol(&a, 1.3, &[t * xi[0], t * xi[1]]);
        prop_assert!((et - e1.scale(t * t)).max_abs() <= 1e-12 * (t * t) * e1.max_abs().max(1e-300));
    }

    #[test]
    fn symbol_is_coercive(kind in 0u8..3, d in prop::array::uniform3(-0.5f64..0.5),
                          xi in prop::array::uniform2(-3.0f64..3.0), z in prop::array::uniform2(-1.0f64..1.0)) {
        let m = model(kind);
        let dm = sym2(d);
        let ell = ellipticity_constant(&m, dm.dev().norm_sq().max(1e-3), dm.trace().abs().max(1e-3), 401).unwrap();
        let g1 = 1.3;
        let e = e_symbol(&coefficient_tensor(&m, &dm).unwrap(), g1, &xi);
        let q = e.matvec(&[z[0], z[1], 0.0]);
        let zez = z[0] * q[0] + z[1] * q[1];
        let bound = ell.c_el / (2.0 * g1) * (xi[0] * xi[0] + xi[1] * xi[1]) * (z[0] * z[0] + z[1] * z[1]);
        prop_assert!(zez >= bound * (1.0 - 1e-12) - 1e-14, "{zez} < {bound}");
    }

    #[test]
    fn sector_inequality(beta in 0.1f64..1.5, nu in 0.0f64..2.0, r in 1e-3f64..1e3, phi in -1.0f64..1.0, x in 0.0f64..1e3) {
        let s = Sector::new(beta, nu).unwrap();
        let lam = nu + Complex64::from_polar(r, phi * (std::f64::consts::PI - beta));
        let chk = sector_inequality_check(&s, &[lam], &[x]);
        prop_assert_eq!(chk.violations, 0);
    }

    #[test]
    fn e_vanishes_exactly_at_identity(a in prop::array::uniform4(-0.3f64..0.3)) {
        let j = Mat::from_rows(2, &[1.0 + a[0], a[1], a[2], 1.0 + a[3]]);
        let e = e_from_jacobian(&j).unwrap();
        // E = I − J⁻¹, so (I − E)J = I
        prop_assert!(((Mat::identity(2) - e) * j - Mat::identity(2)).max_abs() < 1e-14);
        prop_assert_eq!(e_from_jacobian(&Mat::identity(2)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn transform_round_trip_and_parseval(vals in prop::collection::vec(-1.0f64..1.0, 5..40)) {
        let g = Grid::new(2, 16).unwrap();
        let f = field(&g, &vals);
        let back = Field::from_spectrum(&g, Rank::Scalar, f.spectrum());
        prop_assert!(back.sub(&f).max_abs() <= 1e-13 * f.max_abs().max(1e-300));
        let spec: f64 = f.spectrum()[0].iter().map(|z| z.norm_sqr()).sum::<f64>() * g.volume();
        let l2 = lq_norm_pow(&f, 2.0);
        prop_assert!((spec - l2).abs() <= 1e-12 * l2.max(1e-300));
    }

    #[test]
    fn norms_are_homogeneous(vals in prop::collection::vec(-1.0f64..1.0, 5..40), c in -10.0f64..10.0, q in 1.0f64..8.0) {
        let g = Grid::new(2, 8).unwrap();
        let f = field(&g, &vals);
        let lhs = lq_norm(&f.scale(c), q);
        let rhs = c.abs() * lq_norm(&f, q);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
    }
}
