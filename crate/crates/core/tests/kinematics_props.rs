use nalgebra::Matrix3;
use omav_teleop::dynamics::{compute_errors, lyapunov, step_dynamics, ImpedanceParams, ReferenceState, RigidState};
use omav_teleop::so3::{hat, integrate_rotation, orthonormalize, skew_part_vee, vee, AttitudeIntegrator, Rot3, Vec3};
use omav_teleop::Wrench6;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn rot() -> impl Strategy<Value = Rot3> {
    (vec3(1.0), 0.0..std::f64::consts::PI).prop_map(|(axis, angle)| Rot3::from_axis_angle(&axis, angle))
}

/// Polar factor `U Vᵀ` from the SVD, an oracle independent of the Newton
/// iteration used by the library.
fn svd_polar(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    svd.u.unwrap() * svd.v_t.unwrap()
}

proptest! {
    #[test]
    fn hat_is_cross_product(v in vec3(100.0), w in vec3(100.0)) {
        let h = hat(&v);
        prop_assert!((h * w - v.cross(&w)).norm() <= 1e-12 * (1.0 + v.norm() * w.norm()));
        prop_assert_eq!(h.transpose(), -h);
    }

    #[test]
    fn vee_hat_round_trip(v in vec3(1e6)) {
        prop_assert_eq!(vee(&hat(&v)).unwrap(), v);
    }

    #[test]
    fn hat_vee_round_trip_on_skew(v in vec3(10.0)) {
        let s = hat(&v);
        prop_assert!((hat(&vee(&s).unwrap()) - s).norm() < 1e-12);
    }

    #[test]
    fn skew_part_is_odd_under_transpose(r in rot()) {
        let a = skew_part_vee(r.matrix());
        let b = skew_part_vee(r.transpose().matrix());
        prop_assert!((a + b).norm() < 1e-15);
    }

    #[test]
    fn skew_part_is_sine_times_axis(axis in vec3(1.0), angle in 0.0..3.1f64) {
        prop_assume!(axis.norm() > 1e-3);
        let r = Rot3::from_axis_angle(&axis, angle);
        let expected = axis.normalize() * angle.sin();
        prop_assert!((skew_part_vee(r.matrix()) - expected).norm() < 1e-12);
    }

    #[test]
    fn orthonormalize_matches_svd_polar(r in rot(), noise in proptest::array::uniform9(-1e-4..1e-4f64)) {
        let m = r.matrix() + Matrix3::from_row_slice(&noise);
        let p = orthonormalize(&m).unwrap();
        prop_assert!((p.matrix() - svd_polar(&m)).norm() < 1e-9);
        prop_assert!(p.orthogonality_error() < 1e-12);
        prop_assert!((p.matrix() - m).norm() < 1e-3);
    }

    #[test]
    fn orthonormalize_is_idempotent(r in rot()) {
        let once = orthonormalize(r.matrix()).unwrap();
        prop_assert!((once.matrix() - r.matrix()).norm() < 1e-12);
        let twice = orthonormalize(once.matrix()).unwrap();
        prop_assert!((twice.matrix() - once.matrix()).norm() < 1e-12);
    }

    #[test]
    fn errors_are_invariant_under_world_rotation(
        q in rot(), r1 in rot(), r2 in rot(),
        p1 in vec3(2.0), p2 in vec3(2.0), v1 in vec3(1.0), v2 in vec3(1.0), w1 in vec3(1.0), w2 in vec3(1.0),
    ) {
        let s = RigidState { position: p1, attitude: r1, velocity: v1, omega: w1 };
        let r = ReferenceState { position: p2, attitude: r2, velocity: v2, omega: w2 };
        let qs = RigidState { position: q.rotate(&p1), attitude: q * r1, velocity: q.rotate(&v1), omega: w1 };
        let qr = ReferenceState { position: q.rotate(&p2), attitude: q * r2, velocity: q.rotate(&v2), omega: w2 };
        let a = compute_errors(&s, &r);
        let b = compute_errors(&qs, &qr);
        prop_assert!((a.pose() - b.pose()).norm() < 1e-12);
        prop_assert!((a.rate() - b.rate()).norm() < 1e-12);
    }

    #[test]
    fn lyapunov_never_increases(p in vec3(0.5), v in vec3(0.5), w in vec3(0.5), axis in vec3(1.0), angle in 0.0..1.0f64) {
        let params = ImpedanceParams::default();
        let dt = 0.002;
        let reference = ReferenceState::hold(Vec3::new(0.1, -0.2, 1.0), Rot3::rot_z(0.3));
        let mut s = RigidState {
            position: reference.position + p,
            attitude: reference.attitude * Rot3::from_axis_angle(&axis, angle),
            velocity: v,
            omega: w,
        };
        let mut energy = lyapunov(&s, &reference, &params);
        for _ in 0..2000 {
            s = step_dynamics(&s, &reference, &Wrench6::zero(), &params, dt).unwrap();
            let next = lyapunov(&s, &reference, &params);
            prop_assert!(next <= energy + 1e-6 * dt, "{} -> {}", energy, next);
            energy = next;
        }
    }
}

#[test]
fn hundred_thousand_random_steps_stay_on_so3() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut integ = AttitudeIntegrator::new();
    let mut r = Rot3::identity();
    let mut worst: f64 = 0.0;
    for _ in 0..100_000 {
        let w = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        r = integ.step(&r, &w, 0.002);
        worst = worst.max(r.orthogonality_error());
    }
    assert!(worst < 1e-9, "{worst}");
    assert!((r.determinant() - 1.0).abs() < 1e-9);
}

#[test]
fn exponential_map_composes_about_a_fixed_axis() {
    let axis = Vec3::new(0.3, -0.4, 0.5).normalize();
    let mut r = Rot3::identity();
    for _ in 0..1000 {
        r = integrate_rotation(&r, &(axis * 1.3), 1e-3);
    }
    assert!((r.matrix() - Rot3::from_axis_angle(&axis, 1.3).matrix()).norm() < 1e-12);
}
