//! Independent oracles shared by the integration and acceptance tests.
//!
//! Everything here is built on nalgebra and textbook formulas, never on the
//! crate's own quaternion or transform code.

#![allow(dead_code)]

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use teleop_core::geometry::{Convention, Quat, Transform, Vec3};

pub fn mat4(t: &Transform) -> Matrix4<f64> {
    let q = UnitQuaternion::from_quaternion(Quaternion::new(t.rot.w, t.rot.x, t.rot.y, t.rot.z));
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(q.to_rotation_matrix().matrix());
    m[(0, 3)] = t.pos.x;
    m[(1, 3)] = t.pos.y;
    m[(2, 3)] = t.pos.z;
    m
}

/// Largest absolute entry difference between two homogeneous matrices.
pub fn mat_diff(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
    (a - b).abs().max()
}

/// Axis table written out by hand: column `j` is where source axis `j` lands in ROS.
pub fn to_ros_matrix(c: Convention) -> Matrix3<f64> {
    match c {
        // x right -> -y, y up -> z, z forward -> x
        Convention::UnityLhYup => Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, 1.0, 0.0),
        Convention::AnchorRhYup | Convention::RosRhZup => Matrix3::identity(),
    }
}

/// Homogeneous basis change taking coordinates in `from` to coordinates in `to`.
pub fn basis4(from: Convention, to: Convention) -> Matrix4<f64> {
    let p = to_ros_matrix(to).transpose() * to_ros_matrix(from);
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&p);
    m
}

/// `P · T · Pᵀ` for a pose re-expressed in another convention.
pub fn convert_oracle(t: &Transform, to: Convention) -> Matrix4<f64> {
    let p = basis4(t.convention, to);
    p * mat4(t) * p.transpose()
}

/// Planar heading as `(x, y, z, w)` via `atan2` and axis-angle.
/// A target straight behind resolves to `+π`.
pub fn heading_oracle(dx: f64, dy: f64) -> [f64; 4] {
    let mut theta = dy.atan2(dx);
    if dy == 0.0 && dx < 0.0 {
        theta = std::f64::consts::PI;
    }
    let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta);
    [q.i, q.j, q.k, q.w]
}

pub fn random_vec(rng: &mut impl Rng, scale: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
}

pub fn random_quat(rng: &mut impl Rng) -> Quat {
    loop {
        let (x, y, z, w) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n: f64 = x * x + y * y + z * z + w * w;
        if n > 1e-3 && n <= 1.0 {
            return Quat::new(x, y, z, w);
        }
    }
}

pub fn random_pose(rng: &mut impl Rng, scale: f64, convention: Convention) -> Transform {
    Transform::new(random_vec(rng, scale), random_quat(rng), convention)
}

/// Head pose nudged by a small random motion, as a headset sees between frames.
pub fn nudge(rng: &mut impl Rng, head: &Transform) -> Transform {
    let axis = random_vec(rng, 1.0);
    let turn = Quat::from_axis_angle(axis, rng.gen_range(-0.1..0.1));
    Transform::new(head.pos + random_vec(rng, 0.05), turn * head.rot, head.convention)
}

/// Gating table written independently of the crate: tokens that need a
/// particular mode, keyed by spoken phrase.
pub fn allowed(phrase: &str, mode: teleop_core::modes::ModeId) -> bool {
    use teleop_core::modes::ModeId::*;
    match phrase {
        "activate" | "terminate" => matches!(mode, Follow | Select | Arm),
        "select item" | "delete selection" => mode == Select,
        "visualize on" | "visualize off" | "rotate hand" | "stop rotate hand" | "grasp" => mode == Arm,
        _ => true,
    }
}

/// Every reachable (mode, active) pair, built by speaking to a fresh context.
pub fn gating_states() -> Vec<(teleop_core::modes::ModeContext, teleop_core::modes::OperatorState)> {
    use teleop_core::frames::AnchorRecord;
    use teleop_core::modes::{ModeContext, ModesConfig, OperatorState};
    let mut out = Vec::new();
    for mode in [None, Some("follow mode"), Some("select mode"), Some("arm mode")] {
        for active in [false, true] {
            if mode.is_none() && active {
                continue;
            }
            for cursor in [false, true] {
                let op = OperatorState {
                    world_head: Transform::new(Vec3::new(0.0, 1.6, 0.0), Quat::IDENTITY, Convention::UnityLhYup),
                    gaze_cursor: cursor.then(|| Vec3::new(0.0, 0.0, 2.0)),
                    head_roll: 0.0,
                };
                let mut ctx = ModeContext::new(ModesConfig::default()).unwrap();
                ctx.set_anchor(AnchorRecord {
                    id: "a".into(),
                    world_pose: Transform::identity(Convention::RosRhZup),
                    created_at: 0.0,
                });
                if let Some(m) = mode {
                    ctx.dispatch_text(m, &op);
                }
                if active {
                    ctx.dispatch_text("activate", &op);
                }
                if cursor && mode == Some("select mode") {
                    ctx.dispatch_text("select item", &op);
                }
                out.push((ctx, op));
            }
        }
    }
    out
}

/// The voice vocabulary, spelled out.
pub const PHRASES: [&str; 26] = [
    "sit",
    "stand",
    "power on",
    "power off",
    "claim",
    "release",
    "self right",
    "roll over left",
    "roll over right",
    "spin left",
    "spin right",
    "come here",
    "follow mode",
    "select mode",
    "arm mode",
    "activate",
    "terminate",
    "select item",
    "delete selection",
    "visualize on",
    "visualize off",
    "rotate hand",
    "stop rotate hand",
    "grasp",
    "show help",
    "hide help",
];
