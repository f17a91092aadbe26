mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teleop_core::geometry::{
    compose, convert_point, convert_transform, head_to_hand, heading_quat, init_vrobot, invert, Convention, Quat,
    Transform, Vec3,
};

const UNITY: Convention = Convention::UnityLhYup;
const ANCHOR: Convention = Convention::AnchorRhYup;
const ROS: Convention = Convention::RosRhZup;

#[test]
fn axis_swap_known_point() {
    let p = convert_point(Vec3::new(1.0, 2.0, 3.0), UNITY, ANCHOR);
    assert_eq!(p, Vec3::new(3.0, -1.0, 2.0));
    assert_eq!(convert_point(p, ANCHOR, UNITY), Vec3::new(1.0, 2.0, 3.0));
}

#[test]
fn axis_swap_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let p = Vec3::new(rng.gen::<f64>() * 1e6 - 5e5, rng.gen::<f64>() * 2e-3 - 1e-3, rng.gen_range(-1e300..1e300));
        for a in Convention::ALL {
            for b in Convention::ALL {
                let back = convert_point(convert_point(p, a, b), b, a);
                assert_eq!(back.to_array().map(f64::to_bits), p.to_array().map(f64::to_bits));
            }
        }
    }
}

#[test]
fn point_conversion_matches_matrix_table() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let p = random_vec(&mut rng, 10.0);
        for a in Convention::ALL {
            for b in Convention::ALL {
                let m = basis4(a, b);
                let want = m * nalgebra::Vector4::new(p.x, p.y, p.z, 1.0);
                let got = convert_point(p, a, b);
                assert_eq!([got.x, got.y, got.z], [want.x, want.y, want.z], "{a} -> {b}");
            }
        }
    }
}

#[test]
fn transform_conversion_matches_conjugation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..2000 {
        for from in Convention::ALL {
            let t = random_pose(&mut rng, 5.0, from);
            for to in Convention::ALL {
                let got = convert_transform(&t, to);
                assert_eq!(got.convention, to);
                assert!(mat_diff(&mat4(&got), &convert_oracle(&t, to)) < 1e-12);
            }
        }
    }
}

#[test]
fn compose_and_invert_match_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..2000 {
        let a = random_pose(&mut rng, 5.0, ROS);
        let b = random_pose(&mut rng, 5.0, ROS);
        let ab = compose(&a, &b).unwrap();
        assert!(mat_diff(&mat4(&ab), &(mat4(&a) * mat4(&b))) < 1e-12);
        let inv = invert(&a);
        assert!(mat_diff(&mat4(&inv), &mat4(&a).try_inverse().unwrap()) < 1e-12);
    }
}

#[test]
fn compose_rejects_mixed_conventions() {
    let a = Transform::identity(UNITY);
    let b = Transform::identity(ROS);
    assert!(compose(&a, &b).is_err());
}

#[test]
fn heading_matches_atan2_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for i in 0..10_000 {
        let scale = 10f64.powi(rng.gen_range(-5..4));
        let (dx, dy) = match i % 50 {
            0 => (-scale, 0.0),
            1 => (-scale, -0.0),
            2 => (scale, 0.0),
            3 => (0.0, scale),
            4 => (0.0, -scale),
            _ => (rng.gen_range(-1.0..1.0) * scale, rng.gen_range(-1.0..1.0) * scale),
        };
        if dx.hypot(dy) < 1e-6 {
            continue;
        }
        let q = heading_quat(dx, dy).unwrap();
        let want = heading_oracle(dx, dy);
        assert_eq!((q.x, q.y), (0.0, 0.0));
        assert!((q.norm() - 1.0).abs() < 1e-15);
        let err = [q.x - want[0], q.y - want[1], q.z - want[2], q.w - want[3]].iter().fold(0.0f64, |m, d| m.max(d.abs()));
        worst = worst.max(err);
    }
    assert!(worst < 1e-9, "worst {worst}");
}

#[test]
fn heading_straight_behind_is_positive_half_turn() {
    for dy in [0.0, -0.0] {
        let q = heading_quat(-2.0, dy).unwrap();
        assert_eq!(q.z, 1.0);
        assert_eq!(q.w, 0.0);
    }
}

#[test]
fn heading_refuses_degenerate_offset() {
    assert!(heading_quat(0.0, 0.0).is_err());
    assert!(heading_quat(1e-7, 0.0).is_err());
    assert!(heading_quat(f64::NAN, 1.0).is_err());
}

#[test]
fn head_to_hand_matches_homogeneous_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let offset = convert_transform(&Transform::from_translation(Vec3::new(0.9, 0.0, 0.2), ROS), UNITY);
    for _ in 0..1000 {
        let mut head = random_pose(&mut rng, 2.0, UNITY);
        let vrobot = init_vrobot(&head, &offset).unwrap();
        assert!(mat_diff(&mat4(&vrobot), &(mat4(&head) * mat4(&offset))) < 1e-6);
        for _ in 0..20 {
            head = nudge(&mut rng, &head);
            let hand = head_to_hand(&head, &vrobot).unwrap();
            let want = mat4(&head).try_inverse().unwrap() * mat4(&vrobot);
            assert!(mat_diff(&mat4(&hand), &want) < 1e-6);
        }
    }
}

#[test]
fn fresh_vrobot_puts_hand_at_offset() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let offset = Transform::new(Vec3::new(0.9, 0.0, 0.2), Quat::IDENTITY, UNITY);
    for _ in 0..100 {
        let head = random_pose(&mut rng, 2.0, UNITY);
        let hand = head_to_hand(&head, &init_vrobot(&head, &offset).unwrap()).unwrap();
        assert!(hand.pos.distance(offset.pos) < 1e-12);
        assert!(hand.rot.angle_to(Quat::IDENTITY) < 1e-7);
    }
}

fn finite() -> impl Strategy<Value = f64> {
    -1e3..1e3f64
}

fn vec3() -> impl Strategy<Value = Vec3> {
    (finite(), finite(), finite()).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn quat() -> impl Strategy<Value = Quat> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("nonzero", |(x, y, z, w)| x * x + y * y + z * z + w * w > 1e-3)
        .prop_map(|(x, y, z, w)| Quat::new(x, y, z, w))
}

fn convention() -> impl Strategy<Value = Convention> {
    prop::sample::select(Convention::ALL.to_vec())
}

proptest! {
    #[test]
    fn quats_stay_unit(a in quat(), b in quat(), s in 0.0..1.0f64) {
        prop_assert!(((a * b).norm() - 1.0).abs() < 1e-12);
        prop_assert!((a.slerp(b, s).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transform_round_trip(p in vec3(), q in quat(), from in convention(), to in convention()) {
        let t = Transform::new(p, q, from);
        let back = convert_transform(&convert_transform(&t, to), from);
        prop_assert_eq!(back.pos, t.pos);
        prop_assert!(back.rot.angle_to(t.rot) < 1e-7);
    }

    #[test]
    fn conversion_commutes_with_compose(a in (vec3(), quat()), b in (vec3(), quat()), to in convention()) {
        let a = Transform::new(a.0, a.1, Convention::UnityLhYup);
        let b = Transform::new(b.0, b.1, Convention::UnityLhYup);
        let left = convert_transform(&compose(&a, &b).unwrap(), to);
        let right = compose(&convert_transform(&a, to), &convert_transform(&b, to)).unwrap();
        prop_assert!(left.pos.distance(right.pos) < 1e-9);
        prop_assert!(left.rot.angle_to(right.rot) < 1e-7);
    }

    #[test]
    fn compose_is_associative(a in (vec3(), quat()), b in (vec3(), quat()), c in (vec3(), quat())) {
        let [a, b, c] = [a, b, c].map(|(p, q)| Transform::new(p, q, Convention::RosRhZup));
        let left = compose(&compose(&a, &b).unwrap(), &c).unwrap();
        let right = compose(&a, &compose(&b, &c).unwrap()).unwrap();
        prop_assert!(left.pos.distance(right.pos) < 1e-8);
        prop_assert!(left.rot.angle_to(right.rot) < 1e-7);
    }

    #[test]
    fn inverse_cancels(p in vec3(), q in quat()) {
        let t = Transform::new(p, q, Convention::RosRhZup);
        let id = compose(&t, &invert(&t)).unwrap();
        prop_assert!(id.pos.norm() < 1e-9);
        prop_assert!(id.rot.angle() < 1e-7);
    }

    #[test]
    fn heading_faces_target(dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
        prop_assume!(dx.hypot(dy) >= 1e-3);
        let q = heading_quat(dx, dy).unwrap();
        let fwd = q.rotate(Vec3::new(1.0, 0.0, 0.0));
        let r = dx.hypot(dy);
        prop_assert!((fwd.x - dx / r).abs() < 1e-12 && (fwd.y - dy / r).abs() < 1e-12);
        prop_assert!(q.w >= 0.0);
    }
}
