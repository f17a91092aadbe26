//! Rigid-transform algebra across the three coordinate conventions used by the
//! headset, the anchor service and the robot.
//!
//! A [`Transform`] is the pose of a child frame expressed in its parent frame:
//! `compose(a, b)` applies `b` first and then `a`, so
//! `compose(world_head, head_hand)` yields the hand in world coordinates.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Radius below which a planar offset carries no usable heading.
pub const MIN_HEADING_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("convention mismatch: {left} vs {right}")]
    ConventionMismatch { left: Convention, right: Convention },
    #[error("no heading: planar offset radius {radius:e} is below {MIN_HEADING_RADIUS:e}")]
    NoHeading { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self.scale(1.0 / n))
    }

    pub fn lerp(self, to: Vec3, s: f64) -> Vec3 {
        self + (to - self).scale(s)
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion stored as `(x, y, z, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quat {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl From<[f64; 4]> for Quat {
    fn from(a: [f64; 4]) -> Self {
        Quat { x: a[0], y: a[1], z: a[2], w: a[3] }
    }
}

impl From<Quat> for [f64; 4] {
    fn from(q: Quat) -> Self {
        [q.x, q.y, q.z, q.w]
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { x: 0.0, y: 0.0, z: 0.0, w: 1.0 };

    /// Builds a quaternion from raw components and normalizes it.
    /// A zero or non-finite input collapses to the identity.
    pub fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        Quat { x, y, z, w }.normalized()
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        match axis.normalized() {
            Some(a) => {
                let (s, c) = (angle * 0.5).sin_cos();
                Quat::new(a.x * s, a.y * s, a.z * s, c)
            }
            None => Quat::IDENTITY,
        }
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    pub fn normalized(self) -> Quat {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Quat { x: self.x / n, y: self.y / n, z: self.z / n, w: self.w / n }
        } else {
            Quat::IDENTITY
        }
    }

    pub fn conjugate(self) -> Quat {
        Quat { x: -self.x, y: -self.y, z: -self.z, w: self.w }
    }

    pub fn dot(self, o: Quat) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z + self.w * o.w
    }

    /// Hamilton product without renormalization.
    pub fn mul_raw(self, o: Quat) -> Quat {
        Quat {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v).scale(2.0);
        v + t.scale(self.w) + u.cross(t)
    }

    /// Row-major rotation matrix.
    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let Quat { x, y, z, w } = self;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
            [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
            [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Inverse of [`Quat::to_matrix`] for a proper rotation matrix.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Quat {
        let trace = m[0][0] + m[1][1] + m[2][2];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quat { w: 0.25 * s, x: (m[2][1] - m[1][2]) / s, y: (m[0][2] - m[2][0]) / s, z: (m[1][0] - m[0][1]) / s }
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Quat { w: (m[2][1] - m[1][2]) / s, x: 0.25 * s, y: (m[0][1] + m[1][0]) / s, z: (m[0][2] + m[2][0]) / s }
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Quat { w: (m[0][2] - m[2][0]) / s, x: (m[0][1] + m[1][0]) / s, y: 0.25 * s, z: (m[1][2] + m[2][1]) / s }
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Quat { w: (m[1][0] - m[0][1]) / s, x: (m[0][2] + m[2][0]) / s, y: (m[1][2] + m[2][1]) / s, z: 0.25 * s }
        };
        let q = q.normalized();
        if q.w < 0.0 {
            Quat { x: -q.x, y: -q.y, z: -q.z, w: -q.w }
        } else {
            q
        }
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(self) -> f64 {
        2.0 * self.w.abs().min(1.0).acos()
    }

    /// Angle of the rotation taking `self` to `o`, in `[0, π]`.
    pub fn angle_to(self, o: Quat) -> f64 {
        2.0 * self.dot(o).abs().min(1.0).acos()
    }

    /// Heading about +z for a z-up frame (ROS convention).
    pub fn yaw(self) -> f64 {
        let Quat { x, y, z, w } = self;
        (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z))
    }

    pub fn from_yaw(yaw: f64) -> Quat {
        let (s, c) = (yaw * 0.5).sin_cos();
        Quat { x: 0.0, y: 0.0, z: s, w: c }
    }

    /// Signed twist angle of this rotation about `axis` (swing-twist split).
    pub fn twist_about(self, axis: Vec3) -> f64 {
        let Some(a) = axis.normalized() else { return 0.0 };
        let proj = a.dot(Vec3::new(self.x, self.y, self.z));
        2.0 * proj.atan2(self.w)
    }

    /// Spherical linear interpolation along the shorter arc.
    pub fn slerp(self, to: Quat, s: f64) -> Quat {
        let mut to = to;
        let mut d = self.dot(to);
        if d < 0.0 {
            to = Quat { x: -to.x, y: -to.y, z: -to.z, w: -to.w };
            d = -d;
        }
        if d > 0.9995 {
            return Quat {
                x: self.x + (to.x - self.x) * s,
                y: self.y + (to.y - self.y) * s,
                z: self.z + (to.z - self.z) * s,
                w: self.w + (to.w - self.w) * s,
            }
            .normalized();
        }
        let theta = d.min(1.0).acos();
        let sin = theta.sin();
        let a = ((1.0 - s) * theta).sin() / sin;
        let b = (s * theta).sin() / sin;
        Quat {
            x: a * self.x + b * to.x,
            y: a * self.y + b * to.y,
            z: a * self.z + b * to.z,
            w: a * self.w + b * to.w,
        }
        .normalized()
    }
}

impl Mul for Quat {
    type Output = Quat;
    fn mul(self, o: Quat) -> Quat {
        self.mul_raw(o).normalized()
    }
}

/// Coordinate convention: handedness plus up axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(C)]
pub enum Convention {
    /// Headset engine: x right, y up, z forward, left-handed.
    UnityLhYup,
    /// Anchor service frame as produced by the headset-side axis swap.
    AnchorRhYup,
    /// Robot: x forward, y left, z up, right-handed.
    RosRhZup,
}

impl Convention {
    pub const ALL: [Convention; 3] = [Convention::UnityLhYup, Convention::AnchorRhYup, Convention::RosRhZup];

    fn to_ros(self) -> SignedPerm {
        match self {
            // (x, y, z) -> (z, -x, y)
            Convention::UnityLhYup => SignedPerm { src: [2, 0, 1], sign: [1.0, -1.0, 1.0] },
            // The (z, -x, y) swap already lands on forward/left/up axes.
            Convention::AnchorRhYup => SignedPerm::IDENTITY,
            Convention::RosRhZup => SignedPerm::IDENTITY,
        }
    }

    pub fn is_right_handed(self) -> bool {
        !matches!(self, Convention::UnityLhYup)
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convention::UnityLhYup => "UNITY_LH_YUP",
            Convention::AnchorRhYup => "ANCHOR_RH_YUP",
            Convention::RosRhZup => "ROS_RH_ZUP",
        })
    }
}

/// Signed axis permutation: `out[i] = sign[i] * in[src[i]]`.
/// Applying one never performs arithmetic beyond a sign flip, so conversions
/// are exact in floating point.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SignedPerm {
    src: [usize; 3],
    sign: [f64; 3],
}

impl SignedPerm {
    const IDENTITY: SignedPerm = SignedPerm { src: [0, 1, 2], sign: [1.0, 1.0, 1.0] };

    fn apply(&self, v: Vec3) -> Vec3 {
        let a = v.to_array();
        Vec3::new(
            flip(a[self.src[0]], self.sign[0]),
            flip(a[self.src[1]], self.sign[1]),
            flip(a[self.src[2]], self.sign[2]),
        )
    }

    fn inverse(&self) -> SignedPerm {
        let mut inv = SignedPerm::IDENTITY;
        for i in 0..3 {
            inv.src[self.src[i]] = i;
            inv.sign[self.src[i]] = self.sign[i];
        }
        inv
    }

    /// `self` after `first`.
    fn after(&self, first: &SignedPerm) -> SignedPerm {
        let mut out = SignedPerm::IDENTITY;
        for i in 0..3 {
            out.src[i] = first.src[self.src[i]];
            out.sign[i] = self.sign[i] * first.sign[self.src[i]];
        }
        out
    }

    fn matrix(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            m[i][self.src[i]] = self.sign[i];
        }
        m
    }
}

fn flip(v: f64, sign: f64) -> f64 {
    if sign < 0.0 {
        -v
    } else {
        v
    }
}

fn basis_change(from: Convention, to: Convention) -> SignedPerm {
    to.to_ros().inverse().after(&from.to_ros())
}

/// Rigid pose of a child frame in its parent, tagged with the convention of
/// the parent's axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub pos: Vec3,
    pub rot: Quat,
    pub convention: Convention,
}

impl Transform {
    pub fn new(pos: Vec3, rot: Quat, convention: Convention) -> Self {
        Self { pos, rot: rot.normalized(), convention }
    }

    pub fn identity(convention: Convention) -> Self {
        Self { pos: Vec3::ZERO, rot: Quat::IDENTITY, convention }
    }

    pub fn from_translation(pos: Vec3, convention: Convention) -> Self {
        Self { pos, rot: Quat::IDENTITY, convention }
    }

    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        self.rot.rotate(p) + self.pos
    }

    pub fn apply_vector(&self, v: Vec3) -> Vec3 {
        self.rot.rotate(v)
    }
}

/// `a ∘ b`: the pose `b` (expressed in `a`'s child frame) lifted into `a`'s parent.
pub fn compose(a: &Transform, b: &Transform) -> Result<Transform, GeometryError> {
    if a.convention != b.convention {
        return Err(GeometryError::ConventionMismatch { left: a.convention, right: b.convention });
    }
    Ok(Transform {
        pos: a.rot.rotate(b.pos) + a.pos,
        rot: a.rot * b.rot,
        convention: a.convention,
    })
}

pub fn invert(t: &Transform) -> Transform {
    let inv = t.rot.conjugate();
    Transform { pos: -inv.rotate(t.pos), rot: inv, convention: t.convention }
}

/// Re-expresses a point given in `from` axes in `to` axes.
/// Headset to anchor is the axis swap `(x, y, z) -> (z, -x, y)`.
pub fn convert_point(p: Vec3, from: Convention, to: Convention) -> Vec3 {
    basis_change(from, to).apply(p)
}

/// Re-expresses a transform in another convention. The rotation is conjugated
/// by the basis-change matrix, which also covers the handedness flip.
pub fn convert_transform(t: &Transform, to: Convention) -> Transform {
    let change = basis_change(t.convention, to);
    let p = change.matrix();
    let r = t.rot.to_matrix();
    let mut pr = [[0.0; 3]; 3];
    let mut prpt = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            pr[i][j] = (0..3).map(|k| p[i][k] * r[k][j]).sum();
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            prpt[i][j] = (0..3).map(|k| pr[i][k] * p[j][k]).sum();
        }
    }
    Transform { pos: change.apply(t.pos), rot: Quat::from_matrix(prpt), convention: to }
}

/// Orientation facing the planar offset `(dx, dy)`: a rotation about +z by
/// the offset's bearing, returned as `(0, 0, sin(θ/2), cos(θ/2))`.
///
/// Half angles come from the half-angle identities rather than `atan2`;
/// `sin(θ/2)` takes the sign of `sin θ`, with zero counted as positive so
/// a target straight behind yields a half turn of `+π`.
pub fn heading_quat(dx: f64, dy: f64) -> Result<Quat, GeometryError> {
    let r = dx.hypot(dy);
    if !(r >= MIN_HEADING_RADIUS) {
        return Err(GeometryError::NoHeading { radius: r });
    }
    let sin_theta = dy / r;
    // (1 - cos θ)/2 and (1 + cos θ)/2, rewritten so that neither subtracts
    // nearly equal numbers: r - dx = dy²/(r + dx) when dx > 0, and
    // r + dx = dy²/(r - dx) when dx < 0.
    let (one_minus_cos, one_plus_cos) = if dx >= 0.0 {
        let r_minus = dy * dy / (r + dx);
        (r_minus / r, (r + dx) / r)
    } else {
        let r_plus = dy * dy / (r - dx);
        ((r - dx) / r, r_plus / r)
    };
    let sign = if sin_theta < 0.0 { -1.0 } else { 1.0 };
    let half_sin = sign * (one_minus_cos / 2.0).max(0.0).sqrt();
    // 1 - sin²(θ/2) == (1 + cos θ)/2
    let half_cos = (one_plus_cos / 2.0).max(0.0).sqrt();
    let n = half_sin.hypot(half_cos);
    Ok(Quat { x: 0.0, y: 0.0, z: half_sin / n, w: half_cos / n })
}

/// Commanded hand pose in the robot body frame: the virtual robot seen from
/// the head, `world_head⁻¹ ∘ world_vrobot`.
pub fn head_to_hand(world_head: &Transform, world_vrobot: &Transform) -> Result<Transform, GeometryError> {
    compose(&invert(world_head), world_vrobot)
}

/// Places the virtual robot so that the current head pose maps to `hand_offset`.
pub fn init_vrobot(world_head: &Transform, hand_offset: &Transform) -> Result<Transform, GeometryError> {
    compose(world_head, hand_offset)
}
