//! Randomized invariants of the speeds, the spectral calculus, the cones
//! and the solved profiles.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use proptest::prelude::*;
use translator_lab::bowl::{solve_profile, Profile};
use translator_lab::cones::{gamma2_membership, lambda_quantity, PinchingMode};
use translator_lab::matrix_calculus::{iccond_min_eigenvalue, matrix_gradient_hessian_form, SymmetricMatrix};
use translator_lab::speeds::{
    cylinder_value_and_normalize, dual_speed_eval, eval_speed, grad_speed, CurvatureVector, SpeedDescriptor,
    SpeedKind,
};

fn speed_kind() -> impl Strategy<Value = SpeedKind> {
    prop::sample::select(SpeedKind::ALL.to_vec())
}

fn dims(kind: SpeedKind) -> Vec<usize> {
    match kind {
        SpeedKind::SqrtScalar | SpeedKind::ScalarToMean => vec![3],
        _ => vec![2, 3, 4, 5],
    }
}

/// A speed together with a point strictly inside its cone.
fn speed_and_point() -> impl Strategy<Value = (SpeedDescriptor, Vec<f64>)> {
    speed_kind()
        .prop_flat_map(|kind| (Just(kind), prop::sample::select(dims(kind))))
        .prop_flat_map(|(kind, n)| {
            (Just(kind), prop::collection::vec(-1.0..1.0f64, n), 0.05..2.0f64, -2.0..2.0f64)
        })
        .prop_filter_map("outside the cone", |(kind, v, margin, log_scale)| {
            let n = v.len();
            let speed = SpeedDescriptor::normalized(kind, n).ok()?;
            let min_pair = pair_min(&v);
            let shift = (-min_pair / 2.0).max(0.0) + margin;
            let scale = 10f64.powf(log_scale);
            let z: Vec<f64> = v.iter().map(|x| (x + shift) * scale).collect();
            speed.cone().contains(&z).then_some((speed, z))
        })
}

fn pair_min(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return v[0];
    }
    let mut m = f64::INFINITY;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            m = m.min(v[i] + v[j]);
        }
    }
    m
}

fn positive(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05..5.0f64, n)
}

fn rotation(angles: &[f64], n: usize) -> DMatrix<f64> {
    let mut q = DMatrix::identity(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            let (s, c) = angles[k % angles.len()].sin_cos();
            let mut g = DMatrix::identity(n, n);
            g[(i, i)] = c;
            g[(j, j)] = c;
            g[(i, j)] = -s;
            g[(j, i)] = s;
            q = g * q;
            k += 1;
        }
    }
    q
}

fn mcf_profile() -> &'static Profile {
    static P: OnceLock<Profile> = OnceLock::new();
    P.get_or_init(|| {
        let s = SpeedDescriptor::normalized(SpeedKind::Mean, 3).unwrap();
        solve_profile(&s, 3, 1e3, 1e-8).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn euler_relation((speed, z) in speed_and_point()) {
        let k = CurvatureVector::new(z.clone()).unwrap();
        let f = eval_speed(&speed, &k).unwrap();
        let g = grad_speed(&speed, &k).unwrap();
        let euler: f64 = z.iter().zip(&g).map(|(a, b)| a * b).sum();
        prop_assert!((euler - f).abs() <= 1e-8 * f.abs());
    }

    #[test]
    fn permutation_invariance((speed, z) in speed_and_point(), rot in 0usize..8) {
        let mut p = z.clone();
        p.rotate_left(rot % z.len());
        p.reverse();
        let a = eval_speed(&speed, &CurvatureVector::new(z).unwrap()).unwrap();
        let b = eval_speed(&speed, &CurvatureVector::new(p).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn gradient_is_positive((speed, z) in speed_and_point()) {
        let g = grad_speed(&speed, &CurvatureVector::new(z).unwrap()).unwrap();
        prop_assert!(g.iter().all(|x| *x > 0.0), "{g:?}");
    }

    #[test]
    fn homogeneity((speed, z) in speed_and_point(), k in 0.01..100.0f64) {
        let f = eval_speed(&speed, &CurvatureVector::new(z.clone()).unwrap()).unwrap();
        let kz: Vec<f64> = z.iter().map(|x| k * x).collect();
        let fk = eval_speed(&speed, &CurvatureVector::new(kz).unwrap()).unwrap();
        prop_assert!((fk - k * f).abs() <= 1e-12 * (k * f).abs());
    }

    #[test]
    fn dual_consistency(kind in speed_kind(), z in positive(2)) {
        let speed = SpeedDescriptor::normalized(kind, 3).unwrap();
        let y: Vec<f64> = z.iter().map(|x| 1.0 / x).collect();
        let face = CurvatureVector::new(vec![0.0, z[0], z[1]]).unwrap();
        let f = speed.value_unchecked(face.as_slice());
        let dual = dual_speed_eval(&speed, &y).unwrap();
        prop_assert!((dual * f - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn normalization_is_idempotent(kind in speed_kind()) {
        for n in dims(kind) {
            let raw = SpeedDescriptor::new(kind, n).unwrap();
            let (_, once) = cylinder_value_and_normalize(&raw).unwrap();
            let (_, twice) = cylinder_value_and_normalize(&once).unwrap();
            let cyl = CurvatureVector::cylinder(n);
            prop_assert!((twice.value_unchecked(cyl.as_slice()) - (n as f64 - 1.0)).abs() <= 1e-12 * n as f64);
            prop_assert!((once.scale() - twice.scale()).abs() <= 1e-14 * once.scale());
            prop_assert_eq!(once.scale(), SpeedDescriptor::normalized(kind, n).unwrap().scale());
        }
    }

    #[test]
    fn spectral_derivatives_are_frame_independent(
        z in positive(3),
        b in prop::collection::vec(-1.0..1.0f64, 6),
        angles in prop::collection::vec(-3.0..3.0f64, 3),
        kind in speed_kind(),
    ) {
        let speed = SpeedDescriptor::normalized(kind, 3).unwrap();
        let bm = DMatrix::from_row_slice(3, 3, &[b[0], b[1], b[2], b[1], b[3], b[4], b[2], b[4], b[5]]);
        let zm = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&z));
        let q = rotation(&angles, 3);
        let base = matrix_gradient_hessian_form(
            &speed,
            &SymmetricMatrix::new(zm.clone()).unwrap(),
            &SymmetricMatrix::new(bm.clone()).unwrap(),
        ).unwrap();
        let conj = |m: &DMatrix<f64>| {
            let c = &q * m * q.transpose();
            SymmetricMatrix::new((&c + c.transpose()) * 0.5).unwrap()
        };
        let turned = matrix_gradient_hessian_form(&speed, &conj(&zm), &conj(&bm)).unwrap();
        prop_assert!((base.first - turned.first).abs() <= 1e-9 * (1.0 + base.first.abs()));
        prop_assert!((base.second - turned.second).abs() <= 1e-9 * (1.0 + base.second.abs()));
    }

    #[test]
    fn first_derivative_matches_central_difference(
        z in positive(3),
        b in prop::collection::vec(-1.0..1.0f64, 6),
        kind in speed_kind(),
    ) {
        let speed = SpeedDescriptor::normalized(kind, 3).unwrap();
        let bm = DMatrix::from_row_slice(3, 3, &[b[0], b[1], b[2], b[1], b[3], b[4], b[2], b[4], b[5]]);
        let zm = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&z));
        let d = matrix_gradient_hessian_form(
            &speed,
            &SymmetricMatrix::new(zm.clone()).unwrap(),
            &SymmetricMatrix::new(bm.clone()).unwrap(),
        ).unwrap();
        let t = 1e-5;
        let value = |m: DMatrix<f64>| {
            let (k, _) = SymmetricMatrix::new(m).unwrap().eigen().unwrap();
            speed.value_unchecked(&k)
        };
        let fd = (value(&zm + &bm * t) - value(&zm - &bm * t)) / (2.0 * t);
        prop_assert!((fd - d.first).abs() <= 1e-6 * (1.0 + d.first.abs()), "{fd} vs {}", d.first);
    }

    #[test]
    fn iccond_sign_is_scale_invariant(z in positive(2), lambda in 0.01..100.0f64, kind in speed_kind()) {
        let speed = SpeedDescriptor::normalized(kind, 3).unwrap();
        let a = iccond_min_eigenvalue(&speed, &z).unwrap();
        let scaled: Vec<f64> = z.iter().map(|x| lambda * x).collect();
        let b = iccond_min_eigenvalue(&speed, &scaled).unwrap();
        prop_assert!((b.min_eigenvalue - a.min_eigenvalue / lambda).abs() <= 1e-9 * (a.term_scale / lambda));
        prop_assert!(a.passed && b.passed);
        // well-conditioned face points meet the plain F-relative slack
        prop_assert!(a.min_eigenvalue >= -1e-8 * a.speed_value, "{a:?}");
    }

    #[test]
    fn gamma2_is_scale_invariant(z in prop::collection::vec(-2.0..2.0f64, 2..6), k in 0.01..100.0f64) {
        let a = gamma2_membership(&CurvatureVector::new(z.clone()).unwrap());
        let kz: Vec<f64> = z.iter().map(|x| k * x).collect();
        prop_assert_eq!(a, gamma2_membership(&CurvatureVector::new(kz).unwrap()));
        prop_assert_eq!(a, pair_min(&z) > 0.0 || z.len() < 2);
    }

    #[test]
    fn pinching_quantity_is_homogeneous_and_lambda_is_positive(
        (speed, z) in speed_and_point(),
        k in 0.01..100.0f64,
        convex in any::<bool>(),
    ) {
        prop_assume!(speed.n() >= 2);
        // the convex-mode set is only claimed for convex speeds; mean is the shipped one
        let mode = if convex { PinchingMode::Convex } else { PinchingMode::Concave };
        let containment_applies = !convex || speed.kind() == SpeedKind::Mean;
        let s = lambda_quantity(&speed, &CurvatureVector::new(z.clone()).unwrap(), mode).unwrap();
        let kz: Vec<f64> = z.iter().map(|x| k * x).collect();
        let sk = lambda_quantity(&speed, &CurvatureVector::new(kz).unwrap(), mode).unwrap();
        prop_assert!((sk.quantity - k * s.quantity).abs() <= 1e-10 * (k * s.quantity.abs()).max(k * z.iter().map(|x| x.abs()).fold(0.0, f64::max)));
        if s.in_lambda && containment_applies {
            prop_assert!(s.min_entry > 0.0, "{s:?}");
        }
    }

    #[test]
    fn profile_geometry_is_consistent(r in 1e-3..40.0f64) {
        let p = mcf_profile();
        let g = p.geometry_at(r).unwrap();
        prop_assert!(g.u_r > 0.0 && g.kappa_rad > 0.0 && g.kappa_sph > 0.0);
        prop_assert!((g.f - 1.0 / g.w()).abs() <= 1e-12);
        // the curvature terms reproduce the speed
        prop_assert!((g.kappa_rad + 2.0 * g.kappa_sph - g.f).abs() <= 1e-10);
        let l = p.local_point(r).unwrap();
        prop_assert!((l.u - g.u).abs() <= 1e-8 * (1.0 + g.u));
        // the cylindrical estimate and the round cross-section inequality
        let h = g.mean_curvature();
        let q = g.norm_a_sq() - h * h / 2.0;
        prop_assert!(q < 0.0);
        prop_assert!(q >= -g.kappa_min() * h - 1e-10 * h * h);
    }
}

#[test]
fn profile_is_monotone_in_height_and_speed() {
    let p = mcf_profile();
    let nodes = p.nodes();
    assert!((nodes[0].f - 1.0).abs() < 1e-8);
    for w in nodes.windows(2) {
        assert!(w[1].u > w[0].u);
        assert!(w[1].f < w[0].f);
    }
}
