//! Topic names and JSON payload schemas. Every pose on the wire is in the
//! robot convention (x forward, y left, z up) unless noted.

use serde::{Deserialize, Serialize};

use crate::geometry::{Quat, Transform, Vec3};

pub const HOLO_COMMAND: &str = "/holo/command";
pub const HOLO_FOLLOW_POSE: &str = "/holo/follow_pose";
pub const HOLO_SELECT_POSE: &str = "/holo/select_pose";
pub const HOLO_ARM_POSE: &str = "/holo/arm_pose";
pub const HOLO_ANCHOR_ID: &str = "/holo/anchor_id";
pub const SPOT_GO_TO_POSE: &str = "/spot/go_to_pose";
pub const SPOT_JOINT_STATES: &str = "/spot/joint_states";
pub const SPOT_STATUS: &str = "/spot/status";
pub const SVC_GRIPPER_POS: &str = "/spot/gripper_pos";
pub const SVC_GRIPPER_ANGLE_OPEN: &str = "/spot/gripper_angle_open";
pub const UI_EVENTS: &str = "/ui/events";
/// Live operator input from the browser console, physical world, robot
/// convention. A `null` gaze clears it.
pub const UI_GAZE: &str = "/ui/gaze";
pub const UI_HEAD: &str = "/ui/head";
/// Scene snapshot streamed to the browser console.
pub const UI_SNAPSHOT: &str = "/ui/snapshot";
/// Lockstep barrier used when the two loops run in separate threads.
pub const CLOCK: &str = "~clock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandMsg {
    pub cmd: String,
    /// Anchor-local headset position, attached to "come here".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_id: Option<String>,
}

impl CommandMsg {
    pub fn plain(cmd: impl Into<String>) -> Self {
        Self { cmd: cmd.into(), pos: None, anchor_id: None }
    }
}

/// `/holo/follow_pose` and `/holo/select_pose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMsg {
    pub anchor_id: String,
    pub pos: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmPoseMsg {
    pub anchor_id: String,
    pub pos: Vec3,
    pub quat: Quat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorIdMsg {
    pub id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseMsg {
    pub pos: Vec3,
    pub quat: Quat,
}

impl From<&Transform> for PoseMsg {
    fn from(t: &Transform) -> Self {
        PoseMsg { pos: t.pos, quat: t.rot }
    }
}

/// `/spot/go_to_pose`: goal in the robot body frame.
pub type GoToPoseMsg = PoseMsg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointStatesMsg {
    pub gripper_rotation: f64,
    pub gripper_open: f64,
    pub arm_pose: PoseMsg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusMsg {
    pub power: String,
    pub lease: String,
    pub posture: String,
    pub body_pose: PoseMsg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperPosRequest {
    pub pos: Vec3,
    pub quat: Quat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperAngleRequest {
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockMsg {
    pub tick: u64,
    #[serde(default)]
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeMsg {
    pub origin: Vec3,
    pub dir: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadMsg {
    pub pos: Vec3,
    pub quat: Quat,
    /// Head tilt in radians, positive to the right.
    #[serde(default)]
    pub roll: f64,
}

/// Events for the operator console on `/ui/events`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UiEvent {
    /// Speech-confirmation tooltip text.
    Tooltip { text: String },
    Rejected { text: String, reason: String },
    ModeChanged { mode: String, active: bool },
    /// Selection cube, headset world coordinates.
    MarkerPlaced { pos: Vec3 },
    MarkerRemoved,
    Help { visible: bool },
    Visualize { visible: bool },
    Warning { text: String },
}
