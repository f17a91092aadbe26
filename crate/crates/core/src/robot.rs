//! Simulated quadruped with a 6-DoF hand.
//!
//! The body moves holonomically on the z = 0 plane, turning and translating
//! in the same step. The hand is a floating pose in the body frame that
//! interpolates to each commanded pose over the command's duration.
//!
//! Command gating follows the usual lease/power order: `claim`, then
//! `power on`, then `stand`. Motion of any kind requires all three.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{Envelope, RateGate, ServiceFault, ServiceRequest};
use crate::clock::SimTime;
use crate::frames::{query_anchor_with_error, FrameId, FrameTree, SharedRegistry};
use crate::geometry::{compose, heading_quat, invert, Convention, Quat, Transform, Vec3};
use crate::modes::json_envelope;
use crate::msgs::{self, ArmPoseMsg, CommandMsg, GripperAngleRequest, GripperPosRequest, JointStatesMsg, PoseMsg, StatusMsg, TargetMsg};

pub const GRIPPER_MAX_OPEN: f64 = 1.57;
pub const LEGACY_ARM_DURATION: f64 = 5.0;
pub const MIN_ARM_DURATION: f64 = 0.05;

const ROS: Convention = Convention::RosRhZup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Power {
    Off,
    On,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lease {
    Released,
    Claimed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Posture {
    Sitting,
    Standing,
    RolledLeft,
    RolledRight,
}

impl Posture {
    fn is_rolled(self) -> bool {
        matches!(self, Posture::RolledLeft | Posture::RolledRight)
    }
}

macro_rules! snake_name {
    ($t:ty) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = serde_json::to_value(self).expect("unit enum");
                f.write_str(s.as_str().expect("string tag"))
            }
        }
    };
}
snake_name!(Power);
snake_name!(Lease);
snake_name!(Posture);

/// Machine-readable reason a command was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Error)]
#[serde(rename_all = "snake_case")]
pub enum RejectCode {
    #[error("lease must be claimed first")]
    LeaseRequired,
    #[error("power must be on")]
    PowerRequired,
    #[error("power must be off")]
    PoweredOn,
    #[error("robot must be standing")]
    NotStanding,
    #[error("robot must be sitting")]
    NotSitting,
    #[error("robot is rolled over; self right first")]
    RolledOver,
    #[error("robot is not rolled over")]
    NotRolled,
    #[error("command needs a target position")]
    MissingTarget,
    #[error("anchor is unknown")]
    AnchorUnknown,
    #[error("duration is invalid")]
    InvalidDuration,
    #[error("pose is outside the arm workspace")]
    OutsideWorkspace,
    #[error("malformed request")]
    Malformed,
    #[error("unknown command")]
    UnknownCommand,
}

impl RejectCode {
    pub fn code(self) -> String {
        serde_json::to_value(self).expect("unit enum").as_str().expect("string tag").to_owned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotConfig {
    pub v_max: f64,
    pub omega_max: f64,
    pub telemetry_hz: f64,
    pub dt: f64,
    pub goal_pos_tol: f64,
    pub goal_yaw_tol: f64,
    /// Targets closer than this are ignored.
    pub min_target: f64,
    pub standoff: f64,
    pub spin_angle: f64,
    pub shoulder: Vec3,
    pub workspace_radius: f64,
    pub hand_home: Vec3,
    /// Duration the bridge attaches to hand poses coming from the headset.
    pub arm_follow_duration: f64,
    pub initial_body: Transform,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            v_max: 1.0,
            omega_max: 1.0,
            telemetry_hz: 10.0,
            dt: 0.02,
            goal_pos_tol: 0.05,
            goal_yaw_tol: 2f64.to_radians(),
            min_target: 0.05,
            standoff: 0.5,
            spin_angle: FRAC_PI_2,
            shoulder: Vec3::new(0.3, 0.0, 0.25),
            workspace_radius: 1.2,
            hand_home: Vec3::new(0.5, 0.0, 0.3),
            arm_follow_duration: 0.5,
            initial_body: Transform::identity(ROS),
        }
    }
}

/// `/spot/go_to_pose` goal in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyCommand {
    pub pos: Vec3,
    pub quat: Quat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmCommand {
    /// Hand pose in the body frame.
    pub hand: Transform,
    /// Seconds; `None` falls back to the legacy fixed duration.
    pub duration: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandGoal {
    pub from: Transform,
    pub to: Transform,
    pub duration: SimTime,
    pub elapsed: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub power: Power,
    pub lease: Lease,
    pub posture: Posture,
    /// Body in world, z = 0 plane.
    pub body: Transform,
    pub goal: Option<Transform>,
    /// Hand in body frame.
    pub hand: Transform,
    pub hand_goal: Option<HandGoal>,
    pub gripper_open: f64,
    /// Accumulated wrist roll; not wrapped.
    pub gripper_rotation: f64,
}

impl RobotState {
    pub fn motion_capable(&self) -> bool {
        self.power == Power::On && self.lease == Lease::Claimed && self.posture == Posture::Standing
    }

    pub fn hand_world(&self) -> Transform {
        compose(&self.body, &self.hand).expect("robot frames share a convention")
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Outcome of one inbound envelope.
#[derive(Debug, Clone, PartialEq)]
pub enum Handled {
    Done,
    Ignored,
    Rejected { topic: String, code: RejectCode },
    Reply { request: ServiceRequest, result: Result<Vec<u8>, ServiceFault> },
}

#[derive(Debug)]
pub struct Robot {
    config: RobotConfig,
    state: RobotState,
    tree: FrameTree,
    anchors: SharedRegistry,
    anchor_error: Option<Transform>,
    telemetry: RateGate,
    path_length: f64,
}

impl Robot {
    pub fn new(config: RobotConfig, anchors: SharedRegistry) -> Self {
        let mut body = config.initial_body;
        body.pos.z = 0.0;
        let state = RobotState {
            power: Power::Off,
            lease: Lease::Released,
            posture: Posture::Sitting,
            body,
            goal: None,
            hand: Transform::from_translation(config.hand_home, ROS),
            hand_goal: None,
            gripper_open: 0.0,
            gripper_rotation: 0.0,
        };
        let telemetry = RateGate::new(1.0 / config.telemetry_hz).expect("telemetry rate must be positive");
        Self { config, state, tree: FrameTree::new(ROS), anchors, anchor_error: None, telemetry, path_length: 0.0 }
    }

    pub fn config(&self) -> &RobotConfig {
        &self.config
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut RobotState {
        &mut self.state
    }

    pub fn tree(&self) -> &FrameTree {
        &self.tree
    }

    pub fn path_length(&self) -> f64 {
        self.path_length
    }

    /// Rigid error applied to the robot's belief of every anchor it resolves.
    pub fn set_anchor_error(&mut self, error: Option<Transform>) {
        self.anchor_error = error;
    }

    fn require_lease(&self) -> Result<(), RejectCode> {
        if self.state.lease != Lease::Claimed {
            return Err(RejectCode::LeaseRequired);
        }
        Ok(())
    }

    fn require_power(&self) -> Result<(), RejectCode> {
        self.require_lease()?;
        if self.state.power != Power::On {
            return Err(RejectCode::PowerRequired);
        }
        Ok(())
    }

    fn require_motion(&self) -> Result<(), RejectCode> {
        self.require_power()?;
        if self.state.posture != Posture::Standing {
            return Err(RejectCode::NotStanding);
        }
        Ok(())
    }

    fn halt(&mut self) {
        self.state.goal = None;
        self.state.hand_goal = None;
    }

    /// Applies a basic robot command. `come here` needs the anchor-local
    /// headset position carried in the message.
    pub fn handle_command(&mut self, msg: &CommandMsg) -> Result<(), RejectCode> {
        let st = &mut self.state;
        match msg.cmd.as_str() {
            "claim" => st.lease = Lease::Claimed,
            "release" => {
                if st.power == Power::On {
                    return Err(RejectCode::PoweredOn);
                }
                st.lease = Lease::Released;
            }
            "power on" => {
                self.require_lease()?;
                self.state.power = Power::On;
            }
            "power off" => {
                self.require_lease()?;
                self.halt();
                self.state.power = Power::Off;
                self.state.posture = match self.state.posture {
                    p if p.is_rolled() => p,
                    _ => Posture::Sitting,
                };
            }
            "stand" => {
                self.require_power()?;
                if self.state.posture.is_rolled() {
                    return Err(RejectCode::RolledOver);
                }
                self.state.posture = Posture::Standing;
            }
            "sit" => {
                self.require_power()?;
                if self.state.posture.is_rolled() {
                    return Err(RejectCode::RolledOver);
                }
                self.halt();
                self.state.posture = Posture::Sitting;
            }
            "self right" => {
                self.require_power()?;
                if !self.state.posture.is_rolled() {
                    return Err(RejectCode::NotRolled);
                }
                self.state.posture = Posture::Sitting;
            }
            "roll over left" | "roll over right" => {
                self.require_power()?;
                if self.state.posture != Posture::Sitting {
                    return Err(RejectCode::NotSitting);
                }
                self.state.posture =
                    if msg.cmd == "roll over left" { Posture::RolledLeft } else { Posture::RolledRight };
            }
            "spin left" | "spin right" => {
                self.require_motion()?;
                let sign = if msg.cmd == "spin left" { 1.0 } else { -1.0 };
                let base = self.state.goal.unwrap_or(self.state.body);
                let turn = Transform::new(Vec3::ZERO, Quat::from_yaw(sign * self.config.spin_angle), ROS);
                self.state.goal = Some(flatten(&compose(&base, &turn).expect("same convention")));
            }
            "come here" => {
                self.require_motion()?;
                let (Some(pos), Some(anchor_id)) = (msg.pos, msg.anchor_id.as_deref()) else {
                    return Err(RejectCode::MissingTarget);
                };
                let world = self.anchor_to_world(anchor_id, pos)?;
                self.come_here(world)?;
            }
            "stop" => self.state.goal = None,
            _ => return Err(RejectCode::UnknownCommand),
        }
        Ok(())
    }

    fn anchor_frame(&mut self, anchor_id: &str) -> Result<FrameId, RejectCode> {
        let frame = FrameId::anchor(anchor_id);
        if !self.tree.contains(&frame) {
            let registry = self.anchors.read().unwrap_or_else(|p| p.into_inner());
            query_anchor_with_error(&registry, &mut self.tree, anchor_id, self.anchor_error.as_ref())
                .map_err(|_| RejectCode::AnchorUnknown)?;
        }
        Ok(frame)
    }

    /// Resolves an anchor so later targets can refer to it. On failure any
    /// motion in progress stops.
    pub fn localize_anchor(&mut self, anchor_id: &str) -> Result<(), RejectCode> {
        match self.anchor_frame(anchor_id) {
            Ok(_) => Ok(()),
            Err(e) => {
                self.state.goal = None;
                Err(e)
            }
        }
    }

    fn anchor_to_world(&mut self, anchor_id: &str, anchor_pos: Vec3) -> Result<Vec3, RejectCode> {
        let frame = self.anchor_frame(anchor_id).inspect_err(|_| self.state.goal = None)?;
        let world_anchor = self.tree.lookup(&FrameId::world(), &frame).map_err(|_| RejectCode::AnchorUnknown)?;
        Ok(world_anchor.apply_point(anchor_pos))
    }

    /// Turns an anchor-local target into a body-frame go-to-pose command
    /// facing the target, and adopts it as the goal. `None` when the target
    /// is closer than `min_target`.
    pub fn receive_target(&mut self, anchor_id: &str, anchor_pos: Vec3) -> Result<Option<BodyCommand>, RejectCode> {
        self.require_motion()?;
        let world = self.anchor_to_world(anchor_id, anchor_pos)?;
        let local = invert(&self.state.body).apply_point(world);
        let (dx, dy) = (local.x, local.y);
        if dx.hypot(dy) < self.config.min_target {
            return Ok(None);
        }
        let quat = heading_quat(dx, dy).expect("radius above the heading threshold");
        let cmd = BodyCommand { pos: Vec3::new(dx, dy, 0.0), quat };
        self.go_to_pose(&cmd)?;
        Ok(Some(cmd))
    }

    /// Stops `standoff` short of the headset, facing it.
    pub fn come_here(&mut self, headset_world: Vec3) -> Result<Option<BodyCommand>, RejectCode> {
        self.require_motion()?;
        let local = invert(&self.state.body).apply_point(headset_world);
        let r = local.x.hypot(local.y);
        if r <= self.config.standoff {
            return Ok(None);
        }
        let scale = (r - self.config.standoff) / r;
        let quat = heading_quat(local.x, local.y).expect("radius above standoff");
        let cmd = BodyCommand { pos: Vec3::new(local.x * scale, local.y * scale, 0.0), quat };
        self.go_to_pose(&cmd)?;
        Ok(Some(cmd))
    }

    /// `/spot/go_to_pose` handler: goal given in the body frame.
    pub fn go_to_pose(&mut self, cmd: &BodyCommand) -> Result<(), RejectCode> {
        self.require_motion()?;
        let rel = Transform::new(cmd.pos, cmd.quat, ROS);
        self.state.goal = Some(flatten(&compose(&self.state.body, &rel).expect("same convention")));
        Ok(())
    }

    /// Moves toward the goal: translation capped at `v_max·dt` and yaw at
    /// `ω_max·dt`, both in the same step.
    pub fn body_step(&mut self, dt: f64) {
        if !self.state.motion_capable() {
            return;
        }
        let Some(goal) = self.state.goal else { return };
        let body = &mut self.state.body;
        let delta = Vec3::new(goal.pos.x - body.pos.x, goal.pos.y - body.pos.y, 0.0);
        let dist = delta.norm();
        let step = (self.config.v_max * dt).min(dist);
        if dist > 0.0 {
            body.pos = body.pos + delta.scale(step / dist);
            self.path_length += step;
        }
        let yaw_err = wrap_angle(goal.rot.yaw() - body.rot.yaw());
        let max_turn = self.config.omega_max * dt;
        let turn = yaw_err.clamp(-max_turn, max_turn);
        body.rot = Quat::from_yaw(body.rot.yaw() + turn);
        let remaining = body.pos.distance(goal.pos);
        let yaw_left = wrap_angle(goal.rot.yaw() - body.rot.yaw()).abs();
        if remaining <= self.config.goal_pos_tol && yaw_left <= self.config.goal_yaw_tol {
            self.state.goal = None;
        }
    }

    /// `/spot/gripper_pos`: moves the hand to `cmd.hand` over exactly the
    /// command's duration, starting from wherever the hand is now.
    pub fn gripper_pos_service(&mut self, cmd: &ArmCommand) -> Result<(), RejectCode> {
        self.require_motion()?;
        let duration = cmd.duration.unwrap_or(LEGACY_ARM_DURATION);
        if !duration.is_finite() || duration < MIN_ARM_DURATION {
            return Err(RejectCode::InvalidDuration);
        }
        let to = Transform::new(cmd.hand.pos, cmd.hand.rot, ROS);
        if !to.pos.is_finite() || to.pos.distance(self.config.shoulder) > self.config.workspace_radius {
            return Err(RejectCode::OutsideWorkspace);
        }
        self.state.hand_goal =
            Some(HandGoal { from: self.state.hand, to, duration: SimTime::from_secs(duration), elapsed: SimTime::ZERO });
        Ok(())
    }

    /// Projects a hand position onto the workspace sphere when it lies outside.
    pub fn clamp_to_workspace(&self, p: Vec3) -> Vec3 {
        let off = p - self.config.shoulder;
        let d = off.norm();
        if d > self.config.workspace_radius {
            self.config.shoulder + off.scale(self.config.workspace_radius / d)
        } else {
            p
        }
    }

    pub fn hand_step(&mut self, dt: SimTime) {
        if !self.state.motion_capable() {
            return;
        }
        let Some(goal) = self.state.hand_goal.as_mut() else { return };
        goal.elapsed = goal.elapsed + dt;
        let hand = if goal.elapsed >= goal.duration {
            let to = goal.to;
            self.state.hand_goal = None;
            to
        } else {
            let s = goal.elapsed.as_nanos() as f64 / goal.duration.as_nanos() as f64;
            Transform::new(goal.from.pos.lerp(goal.to.pos, s), goal.from.rot.slerp(goal.to.rot, s), ROS)
        };
        let prev = self.state.hand.rot.twist_about(Vec3::new(1.0, 0.0, 0.0));
        let next = hand.rot.twist_about(Vec3::new(1.0, 0.0, 0.0));
        self.state.gripper_rotation += wrap_angle(next - prev);
        self.state.hand = hand;
    }

    /// `/spot/gripper_angle_open`: clamps into `[0, 1.57]`.
    pub fn gripper_angle_open_service(&mut self, angle: f64) -> Result<f64, RejectCode> {
        self.require_power()?;
        if angle.is_nan() {
            return Err(RejectCode::Malformed);
        }
        self.state.gripper_open = angle.clamp(0.0, GRIPPER_MAX_OPEN);
        Ok(self.state.gripper_open)
    }

    /// One simulation step of `dt`.
    pub fn step(&mut self, dt: SimTime) {
        self.body_step(dt.as_secs());
        self.hand_step(dt);
    }

    pub fn joint_states(&self) -> JointStatesMsg {
        JointStatesMsg {
            gripper_rotation: self.state.gripper_rotation,
            gripper_open: self.state.gripper_open,
            arm_pose: PoseMsg::from(&self.state.hand),
        }
    }

    pub fn status(&self) -> StatusMsg {
        StatusMsg {
            power: self.state.power.to_string(),
            lease: self.state.lease.to_string(),
            posture: self.state.posture.to_string(),
            body_pose: PoseMsg::from(&self.state.body),
        }
    }

    /// `/spot/joint_states` and `/spot/status` when the telemetry gate opens.
    pub fn publish_telemetry(&mut self, now: SimTime) -> Vec<Envelope> {
        if !self.telemetry.allow(now) {
            return Vec::new();
        }
        vec![json_envelope(msgs::SPOT_JOINT_STATES, &self.joint_states()), json_envelope(msgs::SPOT_STATUS, &self.status())]
    }

    /// Routes one inbound envelope: headset topics, the go-to-pose topic and
    /// the two driver services.
    pub fn handle_envelope(&mut self, env: &Envelope) -> Handled {
        let rejected = |code| Handled::Rejected { topic: env.topic.clone(), code };
        if let Some(req) = ServiceRequest::parse(env) {
            let Ok(request) = req else { return rejected(RejectCode::Malformed) };
            let result = self.serve(&request);
            return Handled::Reply { request, result };
        }
        let outcome = match env.topic.as_str() {
            msgs::HOLO_COMMAND => parse::<CommandMsg>(&env.payload).and_then(|m| self.handle_command(&m)),
            msgs::HOLO_ANCHOR_ID => {
                parse::<msgs::AnchorIdMsg>(&env.payload).and_then(|m| self.localize_anchor(&m.id))
            }
            msgs::HOLO_FOLLOW_POSE | msgs::HOLO_SELECT_POSE => {
                parse::<TargetMsg>(&env.payload).and_then(|m| self.receive_target(&m.anchor_id, m.pos).map(|_| ()))
            }
            msgs::HOLO_ARM_POSE => parse::<ArmPoseMsg>(&env.payload).and_then(|m| {
                let hand = Transform::new(self.clamp_to_workspace(m.pos), m.quat, ROS);
                self.gripper_pos_service(&ArmCommand { hand, duration: Some(self.config.arm_follow_duration) })
            }),
            msgs::SPOT_GO_TO_POSE => {
                parse::<PoseMsg>(&env.payload).and_then(|m| self.go_to_pose(&BodyCommand { pos: m.pos, quat: m.quat.normalized() }))
            }
            _ => return Handled::Ignored,
        };
        match outcome {
            Ok(()) => Handled::Done,
            Err(code) => rejected(code),
        }
    }

    fn serve(&mut self, req: &ServiceRequest) -> Result<Vec<u8>, ServiceFault> {
        let fault = |code: RejectCode| ServiceFault::rejected(format!("{}: {code}", code.code()));
        let body = match req.name.as_str() {
            msgs::SVC_GRIPPER_POS => {
                let m: GripperPosRequest = parse(&req.body).map_err(fault)?;
                let hand = Transform::new(m.pos, m.quat, ROS);
                self.gripper_pos_service(&ArmCommand { hand, duration: m.duration }).map_err(fault)?;
                serde_json::json!({ "ok": true })
            }
            msgs::SVC_GRIPPER_ANGLE_OPEN => {
                let m: GripperAngleRequest = parse(&req.body).map_err(fault)?;
                let angle = self.gripper_angle_open_service(m.angle).map_err(fault)?;
                serde_json::json!({ "ok": true, "angle": angle })
            }
            other => {
                return Err(ServiceFault {
                    code: crate::bus::ERR_UNKNOWN_SERVICE.into(),
                    message: format!("unknown service: {other}"),
                })
            }
        };
        Ok(serde_json::to_vec(&body).expect("json value"))
    }

    /// Bytes that pin the simulated state exactly, for trajectory hashing.
    pub fn digest_bytes(&self, out: &mut Vec<u8>) {
        let st = &self.state;
        let mut put = |v: f64| out.extend_from_slice(&v.to_bits().to_le_bytes());
        for t in [&st.body, &st.hand] {
            for v in [t.pos.x, t.pos.y, t.pos.z, t.rot.x, t.rot.y, t.rot.z, t.rot.w] {
                put(v);
            }
        }
        put(st.gripper_open);
        put(st.gripper_rotation);
        out.extend_from_slice(&[st.power as u8, st.lease as u8, st.posture as u8, st.goal.is_some() as u8]);
    }
}

fn parse<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, RejectCode> {
    serde_json::from_slice(bytes).map_err(|_| RejectCode::Malformed)
}

/// Keeps a body goal on the ground plane with yaw only.
fn flatten(t: &Transform) -> Transform {
    Transform { pos: Vec3::new(t.pos.x, t.pos.y, 0.0), rot: Quat::from_yaw(t.rot.yaw()), convention: ROS }
}
