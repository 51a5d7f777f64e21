//! Property tests across module boundaries.

use std::sync::OnceLock;

use porehom::expr::{InitialData, Polynomial};
use porehom::fem::{
    assemble_mass, assemble_stiffness, solve_spd, CgOptions, Conductivity, CsrMatrix,
    EnvelopeCholesky, Interpolator, MissPolicy,
};
use porehom::kinetics::ModelParams;
use porehom::mesh::{build_perforated_mesh, build_unit_cell_mesh, Inclusion, Mesh2D, Rect};
use porehom::micro::{init_micro, step_micro, MicroSetup};
use proptest::prelude::*;

const DOMAIN: Rect = Rect {
    x_min: 0.0,
    x_max: 1.2,
    y_min: 0.0,
    y_max: 1.0,
};

fn template() -> &'static Mesh2D {
    static T: OnceLock<Mesh2D> = OnceLock::new();
    T.get_or_init(|| build_unit_cell_mesh(Inclusion::Circle { radius: 0.25 }, 32, 0.2).unwrap())
}

fn perforated() -> &'static Mesh2D {
    static M: OnceLock<Mesh2D> = OnceLock::new();
    M.get_or_init(|| build_perforated_mesh(DOMAIN, 0.2, template()).unwrap())
}

fn operators() -> &'static (CsrMatrix, CsrMatrix) {
    static OPS: OnceLock<(CsrMatrix, CsrMatrix)> = OnceLock::new();
    OPS.get_or_init(|| {
        let m = perforated();
        (
            assemble_mass(m),
            assemble_stiffness(m, &Conductivity::isotropic(1.0)).unwrap(),
        )
    })
}

fn field(n: usize, seed: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| seed[i % seed.len()] * (1.0 + (i as f64 * 0.37).sin()))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stiffness_is_symmetric_psd_and_kills_constants(seed in prop::collection::vec(-3.0f64..3.0, 1..8),
                                                      c in -10.0f64..10.0) {
        let (mass, stiff) = operators();
        let n = stiff.dim();
        let x = field(n, &seed);
        let y: Vec<f64> = x.iter().rev().copied().collect();
        let scale = stiff.max_abs() * x.iter().map(|v| v.abs()).sum::<f64>() * y.iter().map(|v| v.abs()).sum::<f64>();
        prop_assert!((stiff.bilinear(&x, &y) - stiff.bilinear(&y, &x)).abs() <= 1e-12 * scale.max(1.0));
        prop_assert!(stiff.quadratic(&x) >= -1e-12 * scale.max(1.0));
        let k1 = stiff.mul_vec(&vec![c; n]);
        prop_assert!(k1.iter().all(|v| v.abs() <= 1e-12 * (1.0 + c.abs())));
        prop_assert!(mass.quadratic(&x) > 0.0 || x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mass_integrates_linear_functions(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
        let (mass, _) = operators();
        let mesh = perforated();
        let f: Vec<f64> = mesh.vertices().iter().map(|p| a + b * p[0] + c * p[1]).collect();
        let one = vec![1.0; f.len()];
        let integral = mass.bilinear(&one, &f);
        let expected: f64 = (0..mesh.n_triangles())
            .map(|t| {
                let g = mesh.barycenter(t);
                mesh.element_areas()[t] * (a + b * g[0] + c * g[1])
            })
            .sum();
        prop_assert!((integral - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
    }

    #[test]
    fn interpolation_reproduces_linear_fields(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0,
                                              pts in prop::collection::vec((0.0f64..1.2, 0.0f64..1.0), 1..20)) {
        let src = porehom::mesh::build_macro_mesh(DOMAIN, 0.1).unwrap();
        let values: Vec<f64> = src.vertices().iter().map(|p| a + b * p[0] + c * p[1]).collect();
        let points: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
        let got = Interpolator::new(&src, &points, MissPolicy::Error).unwrap().apply(&values);
        for (p, g) in points.iter().zip(got) {
            prop_assert!((g - (a + b * p[0] + c * p[1])).abs() <= 1e-11);
        }
    }

    #[test]
    fn direct_and_iterative_solvers_agree(tau in 1e-4f64..1.0, seed in prop::collection::vec(-2.0f64..2.0, 1..6)) {
        let (mass, stiff) = operators();
        let a = mass.add_scaled(tau, stiff);
        let b = mass.mul_vec(&field(a.dim(), &seed));
        prop_assume!(b.iter().any(|v| *v != 0.0));
        let direct = EnvelopeCholesky::factor(&a).unwrap().solve(&b);
        let iterative = solve_spd(&a, &b, CgOptions { rel_tol: 1e-11, max_iter: 20_000 }).unwrap();
        let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (d, i) in direct.iter().zip(&iterative) {
            prop_assert!((d - i).abs() <= 1e-8 * scale.max(1.0));
        }
    }

    #[test]
    fn tiled_pore_area_matches_porosity(eps_index in 0usize..3) {
        let eps = [0.2, 0.1, 0.05][eps_index];
        let mesh = build_perforated_mesh(DOMAIN, eps, template()).unwrap();
        let expected = DOMAIN.area() * template().total_area();
        prop_assert!((mesh.total_area() - expected).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn micro_steps_conserve_mass(k_f in 0.1f64..5.0, k_d in 0.1f64..5.0,
                                 u0 in 0.0f64..5.0, v0 in 0.0f64..5.0, slope in 0.0f64..3.0,
                                 w0 in 0.0f64..2.0, steps in 1usize..8) {
        let params = ModelParams {
            k_f,
            k_d,
            t_final: 1.0,
            ..Default::default()
        };
        let setup = MicroSetup::new(perforated().clone(), params, CgOptions { rel_tol: 1e-12, max_iter: 20_000 }).unwrap();
        let init = InitialData {
            u: Polynomial::parse(&format!("{u0:?} + {slope:?}*x1")).unwrap(),
            v: Polynomial::constant(v0),
            w: Polynomial::parse(&format!("{w0:?} + {slope:?}*x2")).unwrap(),
        };
        let mut st = init_micro(&setup, &init).unwrap();
        let tot_u = |s: &porehom::micro::MicroState| setup.volume_total(&s.u) + setup.surface_total(&s.w);
        let tot_v = |s: &porehom::micro::MicroState| setup.volume_total(&s.v) + setup.surface_total(&s.w);
        let (a0, b0) = (tot_u(&st), tot_v(&st));
        for _ in 0..steps {
            step_micro(&setup, &mut st).unwrap();
        }
        prop_assert!((tot_u(&st) - a0).abs() <= 1e-10 * a0.abs().max(1.0));
        prop_assert!((tot_v(&st) - b0).abs() <= 1e-10 * b0.abs().max(1.0));
        prop_assert!(st.w.iter().all(|&w| w >= -1e-12));
        prop_assert!(st.z.iter().all(|&z| (0.0..=1.0).contains(&z)));
    }
}
