use maxwell_runge::experiments::{echo, parse_config, ExperimentConfig, Tag};
use maxwell_runge::geometry::{
    carve_region, chain_of_balls, cube_cover, interior_margin, volume_bound, Role, Shape,
};
use maxwell_runge::materials::{ellipticity_check, lipschitz_bound, make_material, MaterialSpec, TensorSpec};
use maxwell_runge::runge_op::truncate;
use maxwell_runge::{Grid, Region, SvdBundle, C64};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn host() -> Region {
    Region::omega(&Grid::unit_cube(10).unwrap())
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(0.35f64..0.65)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chain_invariants_hold_on_random_paths(
        path in prop::collection::vec(point(), 2..6),
        r1 in 0.01f64..0.03,
    ) {
        let host = host();
        let ch = chain_of_balls(&path, r1, &host, None).unwrap();
        ch.check_invariants(&host).unwrap();
        for i in 0..ch.len() {
            for j in i + 1..ch.len() {
                let d: f64 = (0..3).map(|k| (ch.centers[i][k] - ch.centers[j][k]).powi(2)).sum::<f64>().sqrt();
                prop_assert!(d >= 2.0 * r1 * (1.0 - 1e-12));
            }
        }
        for w in ch.centers.windows(2) {
            let d: f64 = (0..3).map(|k| (w[0][k] - w[1][k]).powi(2)).sum::<f64>().sqrt();
            prop_assert!(d + r1 <= ch.r2 * (1.0 + 1e-12));
        }
        prop_assert!(ch.len() as f64 <= volume_bound(&host, r1));
    }

    #[test]
    fn cover_cubes_fit_in_r1_balls(c in point(), radius in 0.08f64..0.3, r1 in 0.05f64..0.4) {
        let g = Grid::unit_cube(10).unwrap();
        let reg = carve_region(&g, &Shape::Ball { center: c, radius }, Role::Ball).unwrap();
        prop_assume!(reg.cell_count() > 0);
        for cube in cube_cover(&reg, r1).unwrap() {
            prop_assert!((cube.diagonal() - 2.0 * r1).abs() <= 1e-12 * r1);
        }
    }

    #[test]
    fn interior_margin_is_antitone(c in point(), radius in 0.15f64..0.35, a in 0.0f64..0.2, b in 0.0f64..0.2) {
        let g = Grid::unit_cube(10).unwrap();
        let reg = carve_region(&g, &Shape::Ball { center: c, radius }, Role::Ball).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        match (interior_margin(&reg, hi), interior_margin(&reg, lo)) {
            (Ok(inner), Ok(outer)) => prop_assert!(inner.is_subset_of(&outer)),
            (Ok(_), Err(e)) => prop_assert!(false, "larger margin empty: {e}"),
            (Err(_), _) => {}
        }
    }

    #[test]
    fn constant_lipschitz_is_translation_invariant(shift in prop::array::uniform3(-5.0f64..5.0), d in 0.5f64..2.0) {
        let spec = MaterialSpec::Constant { eps: TensorSpec::Diag([d, 1.0, 1.0]), mu: TensorSpec::Diag([1.0, d, 1.0]) };
        let g0 = Grid::new([5, 5, 5], 0.2, [0.0; 3]).unwrap();
        let g1 = Grid::new([5, 5, 5], 0.2, shift).unwrap();
        let l0 = lipschitz_bound(&make_material(&g0, &spec).unwrap());
        let l1 = lipschitz_bound(&make_material(&g1, &spec).unwrap());
        prop_assert_eq!(l0, l1);
    }

    #[test]
    fn truncation_error_monotone(
        raw in prop::collection::vec(0.01f64..10.0, 2..8),
        re in prop::collection::vec(-2.0f64..2.0, 8),
        im in prop::collection::vec(-2.0f64..2.0, 8),
        a in 0.005f64..12.0,
        b in 0.005f64..12.0,
    ) {
        let mut sigma = raw.clone();
        sigma.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let n = sigma.len();
        let svd = SvdBundle { sigma, phi: DMatrix::identity(n, n), psi: DMatrix::identity(n, n), provenance: 0 };
        let coeffs: Vec<C64> = (0..n).map(|k| C64::new(re[k], im[k])).collect();
        let (small, large) = if a <= b { (a, b) } else { (b, a) };
        let fine = truncate(&svd, &coeffs, small).unwrap();
        let coarse = truncate(&svd, &coeffs, large).unwrap();
        prop_assert!(fine.tail_norm <= coarse.tail_norm);
        let norm = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(norm(&fine.boundary_data) >= norm(&coarse.boundary_data));
        let cn = norm(&coeffs);
        prop_assert!(norm(&fine.boundary_data) <= cn / small * (1.0 + 1e-12));
    }

    #[test]
    fn config_echo_reparses_equal(q in 2.1f64..3.9, gap in 0.05f64..1.0, omega in 0.5f64..3.0, seed in any::<u64>()) {
        let mut cfg = ExperimentConfig::new(Tag::Runge);
        cfg.exponents.q = q;
        cfg.exponents.q0 = (q + gap).min(cfg.exponents.p);
        cfg.omega = omega;
        cfg.seed = Some(seed);
        let cfg = cfg.resolve().unwrap();
        let theta = cfg.theta();
        let (q, q0) = (cfg.exponents.q, cfg.exponents.q0);
        prop_assert!(((1.0 - theta) / 2.0 + theta / q0 - 1.0 / q).abs() < 1e-12);
        prop_assert!(theta > 0.0 && theta < 1.0);
        let back = parse_config(&echo(&cfg)).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn smooth_materials_are_elliptic(seed in any::<u64>()) {
        let g = Grid::unit_cube(4).unwrap();
        let spec = MaterialSpec::Smooth { seed, modes: 3, amplitude: 0.2, max_wavenumber: 2.0 * std::f64::consts::PI };
        let mat = make_material(&g, &spec).unwrap();
        prop_assert!(ellipticity_check(&mat, mat.c()).pass);
        let l = lipschitz_bound(&mat);
        prop_assert!(l.is_finite() && l >= 0.0);
    }
}
