//! Invariants of the discrete operators, norms, file formats and schedules
//! over randomly generated inputs.

use convexify::carleman::carleman_quadratic;
use convexify::convexifier::{choose_lambda, project_ball};
use convexify::forward_sim::apply_noise;
use convexify::grid::{
    apply_h0, h0_defect, laplacian_h, laplacian_layer, laplacian_layer_adjoint, norm_h2h_k,
    norm_l2h,
};
use convexify::io::{format_field, parse_field};
use convexify::reconstructor::{recover_c, RecoveryFormula};
use convexify::tail_solver::{choose_mu, tail_functional};
use convexify::{Field, GridSpec, C64};
use proptest::prelude::*;

fn grid(n_h: usize, n_z: usize, n_k: usize) -> GridSpec {
    GridSpec::new(0.5, 0.4, 0.6, n_h, n_z, 6.0, 6.5, n_k).unwrap()
}

fn values(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec(
        (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| C64::new(a, b)),
        n,
    )
}

/// A grid with 4 to 6 columns per side, 6 to 10 z-nodes and a field on it.
fn layer_field() -> impl Strategy<Value = Field> {
    (4usize..7, 6usize..11).prop_flat_map(|(nh, nz)| {
        let g = grid(nh, nz, 3);
        values(g.layer_len()).prop_map(move |v| Field::from_values(g, 1, v).unwrap())
    })
}

fn k_field() -> impl Strategy<Value = Field> {
    (4usize..6, 6usize..9, 3usize..5).prop_flat_map(|(nh, nz, nk)| {
        let g = grid(nh, nz, nk);
        values(nk * g.layer_len()).prop_map(move |v| Field::from_values(g, nk, v).unwrap())
    })
}

fn same_grid_pair() -> impl Strategy<Value = (Field, Field)> {
    layer_field().prop_flat_map(|f| {
        let g = *f.grid();
        values(g.layer_len()).prop_map(move |v| (f.clone(), Field::from_values(g, 1, v).unwrap()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn laplacian_is_linear((f, u) in same_grid_pair(), a in -3.0..3.0f64) {
        let combo = f.axpy(C64::new(a, 0.0), &u).unwrap();
        let lhs = laplacian_h(&combo);
        let rhs = laplacian_h(&f).axpy(C64::new(a, 0.0), &laplacian_h(&u)).unwrap();
        let scale = lhs.max_abs().max(1.0);
        prop_assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-12 * scale);
    }

    #[test]
    fn laplacian_adjoint_pairs_with_the_laplacian((f, r) in same_grid_pair()) {
        let g = *f.grid();
        let mut lf = vec![C64::new(0.0, 0.0); g.layer_len()];
        laplacian_layer(&g, f.layer(0), &mut lf);
        let mut ltr = vec![C64::new(0.0, 0.0); g.layer_len()];
        laplacian_layer_adjoint(&g, r.layer(0), &mut ltr);
        let lhs: C64 = lf.iter().zip(r.layer(0)).map(|(a, b)| a * b).sum();
        let rhs: C64 = f.layer(0).iter().zip(&ltr).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn norms_are_absolutely_homogeneous(f in k_field(), re in -4.0..4.0f64, im in -4.0..4.0f64) {
        let a = C64::new(re, im);
        let scaled = f.scaled(a);
        prop_assert!((norm_l2h(&scaled) - a.norm() * norm_l2h(&f)).abs() <= 1e-12 * (1.0 + norm_l2h(&scaled)));
        prop_assert!((norm_h2h_k(&scaled) - a.norm() * norm_h2h_k(&f)).abs() <= 1e-12 * (1.0 + norm_h2h_k(&scaled)));
    }

    #[test]
    fn norms_satisfy_the_triangle_inequality(f in k_field()) {
        let g = f.grid();
        let u = f.map(|x| C64::new(x.im, -0.5 * x.re));
        let sum = f.add(&u).unwrap();
        prop_assert!(norm_h2h_k(&sum) <= (norm_h2h_k(&f) + norm_h2h_k(&u)) * (1.0 + 1e-12));
        prop_assert!(norm_l2h(&sum) <= (norm_l2h(&f) + norm_l2h(&u)) * (1.0 + 1e-12));
        prop_assert_eq!(g.n_k, f.layers());
    }

    #[test]
    fn zero_boundary_conditions_are_idempotent(f in k_field()) {
        let mut once = f.clone();
        apply_h0(&mut once);
        prop_assert_eq!(h0_defect(&once), 0.0);
        let mut twice = once.clone();
        apply_h0(&mut twice);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn carleman_form_is_nonnegative_and_quadratic(f in layer_field(), lambda in 0.5..20.0f64, a in 0.1..5.0f64) {
        let mut u = f;
        apply_h0(&mut u);
        let b = carleman_quadratic(&u, lambda).unwrap();
        prop_assert!(b >= 0.0);
        let b2 = carleman_quadratic(&u.scaled(C64::new(a, 0.0)), lambda).unwrap();
        prop_assert!((b2 - a * a * b).abs() <= 1e-11 * b2.max(1e-300));
    }

    #[test]
    fn tail_functional_vanishes_exactly_at_minus_q((w, q) in same_grid_pair(), mu in 0.5..8.0f64) {
        prop_assert!(tail_functional(&w, &q, mu).unwrap() >= 0.0);
        prop_assert_eq!(tail_functional(&q.scaled(C64::new(-1.0, 0.0)), &q, mu).unwrap(), 0.0);
    }

    #[test]
    fn projection_lands_in_the_ball_and_is_idempotent(f in k_field(), radius in 0.01..50.0f64) {
        let (p, projected) = project_ball(&f, radius);
        prop_assert!(norm_h2h_k(&p) <= radius * (1.0 + 1e-12));
        prop_assert_eq!(projected, norm_h2h_k(&f) > radius);
        let (again, moved) = project_ball(&p, radius);
        prop_assert!(!moved || (norm_h2h_k(&again) - norm_h2h_k(&p)).abs() <= 1e-12 * radius);
        if !projected {
            prop_assert_eq!(p, f);
        }
    }

    #[test]
    fn field_files_round_trip_bit_exactly(f in k_field(), note in "[a-z]{1,8}") {
        let text = format_field(&f, &[("note", note.clone())]);
        let (back, meta) = parse_field(&text).unwrap();
        prop_assert_eq!(back, f);
        prop_assert_eq!(meta, vec![("note".to_string(), note)]);
    }

    #[test]
    fn noise_stays_within_the_relative_bound(f in layer_field(), delta in 0.0..0.5f64, seed in any::<u64>()) {
        let g0 = f.values().to_vec();
        let g1: Vec<C64> = g0.iter().map(|x| x * C64::new(0.0, 2.0)).collect();
        let (n0, n1) = apply_noise(&g0, &g1, delta, seed);
        for (clean, noisy) in g0.iter().zip(&n0).chain(g1.iter().zip(&n1)) {
            prop_assert!((noisy - clean).norm() <= delta * clean.norm() * (1.0 + 1e-12));
        }
        prop_assert_eq!(apply_noise(&g0, &g1, delta, seed), (n0, n1));
    }

    #[test]
    fn schedules_grow_as_the_noise_shrinks(a in 1e-8..1e-3f64, factor in 1.5..100.0f64, depth in 0.5..2.0f64) {
        let (d, xi) = (0.5 * depth, 0.5 * depth);
        let b = a / factor;
        prop_assert!(choose_mu(b, d, xi, 0.1).unwrap() > choose_mu(a, d, xi, 0.1).unwrap());
        prop_assert!(choose_lambda(b, d, xi, 0.1).unwrap() > choose_lambda(a, d, xi, 0.1).unwrap());
        let mu = choose_mu(a, d, xi, 0.1).unwrap();
        prop_assert!((a - (-2.0 * (d + xi) * mu).exp()).abs() <= 1e-12 * a);
    }

    #[test]
    fn reconstructed_coefficient_is_at_least_one_and_one_on_the_boundary(f in layer_field()) {
        let g = *f.grid();
        let v = f.scaled(C64::new(0.05, 0.0));
        let r = recover_c(&v, g.k_min, RecoveryFormula::Full, Some(2.0)).unwrap();
        for j in 0..g.n_h {
            for s in 0..g.n_h {
                for m in 0..g.n_z {
                    let c = r.c.get(0, j, s, m);
                    prop_assert_eq!(c.im, 0.0);
                    prop_assert!(c.re >= 1.0);
                    if !g.is_interior(j, s, m) {
                        prop_assert_eq!(c.re, 1.0);
                    }
                }
            }
        }
        prop_assert!(r.c_comp >= 1.0);
        prop_assert!(r.eps_comp.unwrap() >= 0.0);
    }
}
