//! Property tests for the structural invariants of the library.

use bpkit::algebra::{
    group_element, left_matrix, quat_mul, radon_hurwitz, reflect_j, right_matrix, section_frame, Chirality, Quaternion,
    VectorFieldSystem,
};
use bpkit::bodies::{StarBody, VolumeOptions};
use bpkit::bp::{bp_compare, intersection_body_test, theta_grid, CompareOptions, Membership};
use bpkit::harmonic::{Component, HarmonicSum};
use bpkit::sections::{section_at, SectionMethod};
use bpkit::transforms::{cosine_transform, funk_hecke_multiplier, funk_transform_harmonic, inverse_funk};
use nalgebra::{DMatrix, Matrix4, Vector4};
use proptest::prelude::*;

fn unit(raw: &[f64]) -> Option<Vec<f64>> {
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 1e-3).then(|| raw.iter().map(|x| x / norm).collect())
}

fn unit_vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_filter_map("degenerate direction", |v| unit(&v))
}

fn quaternion() -> impl Strategy<Value = Quaternion> {
    prop::array::uniform4(-2.0f64..2.0).prop_map(Quaternion::from_array)
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Even sum of zonal pieces up to degree 6 with the given axes and weights.
fn even_sum(dim: usize, axes: &[Vec<f64>], coefs: &[f64]) -> HarmonicSum {
    let mut comps = vec![Component::zonal(0, 1.0, axes[0].clone())];
    for (k, (axis, &c)) in axes.iter().zip(coefs).enumerate() {
        comps.push(Component::zonal(2 + 2 * (k % 3), c, axis.clone()));
    }
    HarmonicSum::new(dim, comps)
}

fn zonal_body(dim: usize, axis: Vec<f64>, bump: f64) -> StarBody {
    StarBody::zonal(dim, axis, "zonal", move |t| 1.0 + bump * t * t).expect("unit axis")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn multipliers_are_reciprocal(dim in 3usize..10, alpha in -0.9f64..6.0, half in 0usize..8) {
        let partner = 2.0 - dim as f64 - alpha;
        let j = 2 * half;
        // Exponents with a pole on either side are refused; only accepted pairs are compared.
        if let (Ok(a), Ok(b)) = (funk_hecke_multiplier(dim, alpha, j), funk_hecke_multiplier(dim, partner, j)) {
            prop_assert!((a * b - 1.0).abs() < 1e-9, "m = {a}, partner m = {b}");
        }
    }

    #[test]
    fn quaternion_norm_is_multiplicative(p in quaternion(), q in quaternion()) {
        let lhs = quat_mul(p, q).norm();
        prop_assert!((lhs - p.norm() * q.norm()).abs() <= 1e-12 * (1.0 + lhs));
    }

    #[test]
    fn left_multiplication_is_isoclinic(q in quaternion(), theta in unit_vector(4)) {
        let th = Vector4::from_column_slice(&theta);
        let inner = th.dot(&(left_matrix(q) * th));
        prop_assert!((inner - q.to_array()[0]).abs() < 1e-12);
        let stretch = (left_matrix(q) * th).norm();
        prop_assert!((stretch - q.norm()).abs() < 1e-12 * (1.0 + stretch));
    }

    #[test]
    fn reflection_swaps_left_and_right(q in quaternion()) {
        let j = Matrix4::from_diagonal(&Vector4::new(-1.0, 1.0, 1.0, 1.0));
        let defect = (j * left_matrix(q) * j - right_matrix(q.conj())).abs().max();
        prop_assert!(defect < 1e-14);
        let lifted = reflect_j(3, 4).unwrap();
        prop_assert!(max_abs(&(&lifted * &lifted - DMatrix::identity(12, 12))) == 0.0);
    }

    #[test]
    fn frames_are_orthonormal(
        (d, n, theta) in prop::sample::select(vec![(1usize, 3usize), (2, 2), (2, 3), (4, 2), (8, 2)])
            .prop_flat_map(|(d, n)| (Just(d), Just(n), unit_vector(d * n))),
        right in any::<bool>(),
    ) {
        let chirality = if right && d == 4 { Chirality::Right } else { Chirality::Left };
        let sys = VectorFieldSystem::new(d, chirality).unwrap();
        let f = section_frame(&sys, n, &theta).unwrap();
        let gram = f.frame.transpose() * &f.frame;
        prop_assert!(max_abs(&(gram - DMatrix::identity(d, d))) < 1e-12);
        let cross = f.frame.transpose() * &f.basis_h;
        prop_assert!(max_abs(&cross) < 1e-12);
        let hh = f.basis_h.transpose() * &f.basis_h;
        prop_assert!(max_abs(&(hh - DMatrix::identity(d * n - d, d * n - d))) < 1e-12);
    }

    #[test]
    fn frame_span_is_group_invariant(
        (d, n, theta, lambda) in prop::sample::select(vec![(2usize, 2usize), (2, 3), (4, 2)])
            .prop_flat_map(|(d, n)| (Just(d), Just(n), unit_vector(d * n), unit_vector(d))),
        right in any::<bool>(),
    ) {
        let chirality = if right && d == 4 { Chirality::Right } else { Chirality::Left };
        let sys = VectorFieldSystem::new(d, chirality).unwrap();
        let g = group_element(&sys, n, &lambda).unwrap();
        let moved = g.apply(&theta);
        let before = section_frame(&sys, n, &theta).unwrap().frame_projector();
        let after = section_frame(&sys, n, &moved).unwrap().frame_projector();
        prop_assert!(max_abs(&(before - after)) < 1e-12);
    }

    #[test]
    fn funk_inversion_recovers_the_function(
        (dim, axes, point) in (3usize..7).prop_flat_map(|dim| {
            (Just(dim), prop::collection::vec(unit_vector(dim), 4), unit_vector(dim))
        }),
        coefs in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let f = even_sum(dim, &axes, &coefs);
        let back = inverse_funk(&funk_transform_harmonic(&f)).unwrap();
        prop_assert!((back.eval(&point) - f.eval(&point)).abs() < 1e-9);
    }

    #[test]
    fn cosine_transform_is_even(
        (dim, axes, point) in (3usize..7).prop_flat_map(|dim| {
            (Just(dim), prop::collection::vec(unit_vector(dim), 3), unit_vector(dim))
        }),
        coefs in prop::collection::vec(-1.0f64..1.0, 3),
        alpha in prop::sample::select(vec![0.5, 2.0, 2.5, -0.5]),
    ) {
        let f = even_sum(dim, &axes, &coefs);
        let t = cosine_transform(&f, alpha).unwrap();
        let opposite: Vec<f64> = point.iter().map(|x| -x).collect();
        let (a, b) = (t.eval(&point), t.eval(&opposite));
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn radon_hurwitz_is_periodic(k in 0u32..12, odd in 0u64..50) {
        let d = (1u64 << k) * (2 * odd + 1);
        prop_assert_eq!(radon_hurwitz(d), radon_hurwitz(1u64 << k));
        prop_assert_eq!(radon_hurwitz(16 * d), radon_hurwitz(d) + 8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sections_scale_under_dilation(
        axis in unit_vector(4),
        theta in unit_vector(4),
        bump in 0.0f64..0.5,
        factor in 0.3f64..3.0,
    ) {
        let body = zonal_body(4, axis, bump);
        let sys = VectorFieldSystem::new(1, Chirality::Left).unwrap();
        let frame = section_frame(&sys, 4, &theta).unwrap();
        let method = SectionMethod::default();
        let base = section_at(&body, &frame, method).unwrap().value;
        let scaled = section_at(&body.dilated(factor).unwrap(), &frame, method).unwrap().value;
        let expected = factor.powi(3) * base;
        prop_assert!((scaled - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn comparison_is_antisymmetric(
        axis_k in unit_vector(3),
        axis_l in unit_vector(3),
        bump_k in -0.3f64..0.3,
        bump_l in -0.3f64..0.3,
        seed in 0u64..1000,
    ) {
        let k = zonal_body(3, axis_k, bump_k);
        let l = zonal_body(3, axis_l, bump_l);
        let grid = theta_grid(3, 8, seed).unwrap();
        let mut opts = CompareOptions::default().with_seed(seed);
        opts.volume = VolumeOptions { resolution: 24, ..opts.volume };
        let kl = bp_compare(&k, &l, 1, &grid, &opts).unwrap();
        let lk = bp_compare(&l, &k, 1, &grid, &opts).unwrap();
        for (a, b) in kl.rows.iter().zip(&lk.rows) {
            prop_assert_eq!(a.margin, -b.margin);
            prop_assert_eq!(a.sigma, b.sigma);
        }
        prop_assert_eq!(kl.vol_diff, -lk.vol_diff);
    }

    #[test]
    fn balls_are_intersection_bodies(
        dim in 3usize..6,
        lambda in prop::sample::select(vec![0.5, 1.0, 2.0]),
        radius in 0.5f64..2.0,
        seed in 0u64..1000,
    ) {
        let ball = StarBody::ball(dim, radius).unwrap();
        let grid = theta_grid(dim, 64, seed).unwrap();
        match intersection_body_test(&ball, lambda, 8, &grid) {
            Ok(report) => prop_assert_eq!(report.verdict, Membership::Member),
            // Exponents on the excluded lattice are refused, never misjudged.
            Err(e) => prop_assert!(e.to_string().contains("alpha"), "{e}"),
        }
    }
}

#[test]
fn radon_hurwitz_small_cases() {
    for d in [1u64, 2, 4, 8] {
        assert_eq!(radon_hurwitz(d), d - 1);
    }
    assert_eq!(radon_hurwitz(3), 0);
    assert_eq!(radon_hurwitz(16), 8);
    assert_eq!(radon_hurwitz(32), 9);
}
