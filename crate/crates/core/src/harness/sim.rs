//! The two sides of a run. Neither touches the bus directly: each tick
//! returns what it wants sent, so the same code runs over any transport.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::scenario::{Event, HeadSpec, Scenario, Success};
use crate::bus::{Envelope, ServiceFault, ServiceRequest};
use crate::clock::SimTime;
use crate::frames::{AnchorRecord, SharedRegistry};
use crate::geometry::{compose, convert_point, convert_transform, invert, Convention, Quat, Transform, Vec3};
use crate::modes::{json_envelope, Effect, ModeContext, ModesConfig, OperatorState};
use crate::msgs::{self, AnchorIdMsg, GripperAngleRequest, UiEvent};
use crate::robot::{Handled, Robot, RobotConfig};
use crate::scene::{Aabb, Cursor, ObjectId, Ray, WorldMesh, DEFAULT_MAX_DIST, MARKER_HALF_SIZE};

const ROS: Convention = Convention::RosRhZup;
const UNITY: Convention = Convention::UnityLhYup;

/// Something the headset wants sent.
#[derive(Debug, Clone, PartialEq)]
pub enum Outgoing {
    /// Topic message. `/ui/events` goes to the console, the rest to the robot.
    Publish(Envelope),
    /// Fire-and-forget service call to the robot.
    Call { name: String, body: Vec<u8> },
}

impl Outgoing {
    pub fn topic(&self) -> String {
        match self {
            Outgoing::Publish(env) => env.topic.clone(),
            Outgoing::Call { name, .. } => format!("{}{name}", crate::bus::SERVICE_PREFIX),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Gaze {
    None,
    /// Physical-world ray.
    Fixed(Vec3, Vec3),
    LookAt(Vec3),
    Away,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Glide {
    from: Transform,
    from_roll: f64,
    to: Transform,
    to_roll: f64,
    start: SimTime,
    duration: SimTime,
}

/// Headset side: operator input, world mesh, gaze cursor and mode machine.
#[derive(Debug)]
pub struct HeadsetSim {
    modes: ModeContext,
    operator: OperatorState,
    mesh: WorldMesh,
    cursor: Cursor,
    marker: Option<ObjectId>,
    /// Physical world to headset world, robot convention.
    headset_from_physical: Transform,
    head: Transform,
    head_roll: f64,
    glide: Option<Glide>,
    gaze: Gaze,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
    timeline: Vec<(SimTime, Event)>,
    next_event: usize,
    anchor_id: String,
    pub command_count: u64,
    pub rejection_count: u64,
}

impl HeadsetSim {
    /// `anchor` is the shared anchor as stored in the cloud registry, i.e.
    /// in the physical world.
    pub fn new(scenario: &Scenario, anchor: &AnchorRecord, seed: u64) -> Self {
        let offset = scenario.headset.world_offset.transform();
        let headset_from_physical = invert(&offset);
        let config = ModesConfig {
            follow_period: scenario.rates.follow_period,
            select_period: scenario.rates.select_period,
            arm_period: scenario.rates.arm_period,
            ..ModesConfig::default()
        };
        let mut modes = ModeContext::new(config).expect("rates validated positive");
        let local_anchor = AnchorRecord {
            id: anchor.id.clone(),
            world_pose: compose(&headset_from_physical, &anchor.world_pose).expect("robot convention"),
            created_at: anchor.created_at,
        };
        modes.set_anchor(local_anchor);

        let ground = convert_point(
            headset_from_physical.apply_point(Vec3::new(0.0, 0.0, scenario.scene.ground_height)),
            ROS,
            UNITY,
        );
        let mut mesh = WorldMesh::new(ground.y);
        for b in &scenario.scene.boxes {
            mesh.add_box(to_headset_box(&headset_from_physical, b.min.into(), b.max.into()), false);
        }
        for m in &scenario.scene.markers {
            let c = to_unity(&headset_from_physical, (*m).into());
            mesh.add_box(Aabb::centered(c, MARKER_HALF_SIZE), true);
        }
        let cursor = Cursor::register(&mut mesh, DEFAULT_MAX_DIST);
        let noise = (scenario.headset.gaze_noise > 0.0)
            .then(|| Normal::new(0.0, scenario.headset.gaze_noise).expect("finite positive deviation"));
        let head = Transform::new(Vec3::new(0.0, 0.0, 1.6), Quat::IDENTITY, ROS);
        let mut sim = Self {
            modes,
            operator: OperatorState::default(),
            mesh,
            cursor,
            marker: None,
            headset_from_physical,
            head,
            head_roll: 0.0,
            glide: None,
            gaze: Gaze::None,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
            timeline: scenario.timeline.iter().map(|e| (SimTime::from_secs(e.t), e.event.clone())).collect(),
            next_event: 0,
            anchor_id: anchor.id.clone(),
            command_count: 0,
            rejection_count: 0,
        };
        sim.sync_operator();
        sim
    }

    pub fn modes(&self) -> &ModeContext {
        &self.modes
    }

    pub fn mesh(&self) -> &WorldMesh {
        &self.mesh
    }

    pub fn cursor(&self) -> &Cursor {
        &self.cursor
    }

    pub fn operator(&self) -> &OperatorState {
        &self.operator
    }

    /// Head pose in the physical world.
    pub fn head(&self) -> &Transform {
        &self.head
    }

    /// Cursor position in the physical world.
    pub fn cursor_physical(&self) -> Option<Vec3> {
        self.operator.gaze_cursor.map(|p| self.to_physical(p))
    }

    /// Selection marker in the physical world.
    pub fn selection_physical(&self) -> Option<Vec3> {
        self.modes.selection().map(|p| self.to_physical(p))
    }

    fn to_physical(&self, headset_unity: Vec3) -> Vec3 {
        invert(&self.headset_from_physical).apply_point(convert_point(headset_unity, UNITY, ROS))
    }

    /// Messages sent once before the first tick.
    pub fn startup(&self) -> Vec<Outgoing> {
        vec![Outgoing::Publish(json_envelope(msgs::HOLO_ANCHOR_ID, &AnchorIdMsg { id: self.anchor_id.clone() }))]
    }

    /// Sets the head pose (physical world) immediately.
    pub fn set_head(&mut self, head: Transform, roll: f64) {
        self.glide = None;
        self.head = convert_transform(&head, ROS);
        self.head_roll = roll;
        self.sync_operator();
    }

    /// Fixed gaze ray in the physical world; `None` clears the gaze.
    pub fn set_gaze(&mut self, ray: Option<(Vec3, Vec3)>) {
        self.gaze = match ray {
            Some((o, d)) => Gaze::Fixed(o, d),
            None => Gaze::None,
        };
    }

    fn apply_event(&mut self, event: &Event, now: SimTime, commands: &mut Vec<String>) {
        match event {
            Event::Command(text) => commands.push(text.clone()),
            Event::HeadPose(spec) => self.start_glide(spec, now),
            Event::Gaze(r) => self.gaze = Gaze::Fixed(r.origin.into(), r.dir.into()),
            Event::LookAt(p) => self.gaze = Gaze::LookAt((*p).into()),
            Event::LookAway => self.gaze = Gaze::Away,
        }
    }

    fn start_glide(&mut self, spec: &HeadSpec, now: SimTime) {
        let to = spec.transform();
        if spec.over <= 0.0 {
            self.set_head(to, spec.roll);
            return;
        }
        self.glide = Some(Glide {
            from: self.head,
            from_roll: self.head_roll,
            to,
            to_roll: spec.roll,
            start: now,
            duration: SimTime::from_secs(spec.over),
        });
    }

    fn advance_glide(&mut self, now: SimTime) {
        let Some(g) = self.glide else { return };
        let s = if g.duration.as_nanos() == 0 {
            1.0
        } else {
            (now.saturating_sub(g.start).as_nanos() as f64 / g.duration.as_nanos() as f64).min(1.0)
        };
        self.head = Transform::new(g.from.pos.lerp(g.to.pos, s), g.from.rot.slerp(g.to.rot, s), ROS);
        self.head_roll = g.from_roll + (g.to_roll - g.from_roll) * s;
        if s >= 1.0 {
            self.head = g.to;
            self.glide = None;
        }
    }

    fn sync_operator(&mut self) {
        let world_head = compose(&self.headset_from_physical, &self.head).expect("robot convention");
        self.operator.world_head = convert_transform(&world_head, UNITY);
        self.operator.head_roll = self.head_roll;
    }

    fn gaze_ray(&mut self) -> Option<Ray> {
        let (origin, dir) = match self.gaze {
            Gaze::None => return None,
            Gaze::Fixed(o, d) => (o, d),
            Gaze::LookAt(p) => (self.head.pos, p - self.head.pos),
            Gaze::Away => (self.head.pos, Vec3::new(0.0, 0.0, 1.0)),
        };
        let dir = self.perturb(dir.normalized()?);
        let origin = to_unity(&self.headset_from_physical, origin);
        let dir = convert_point(self.headset_from_physical.apply_vector(dir), ROS, UNITY);
        Ray::new(origin, dir).ok()
    }

    /// Small-angle Gaussian jitter of a unit direction.
    fn perturb(&mut self, dir: Vec3) -> Vec3 {
        let Some(noise) = self.noise else { return dir };
        let helper = if dir.z.abs() < 0.9 { Vec3::new(0.0, 0.0, 1.0) } else { Vec3::new(1.0, 0.0, 0.0) };
        let u = dir.cross(helper).normalized().expect("helper not parallel");
        let v = dir.cross(u);
        let (a, b) = (noise.sample(&mut self.rng), noise.sample(&mut self.rng));
        (dir + u.scale(a) + v.scale(b)).normalized().unwrap_or(dir)
    }

    fn update_cursor(&mut self) {
        self.operator.gaze_cursor = match self.gaze_ray() {
            Some(ray) => self.cursor.update(&mut self.mesh, &ray),
            None => {
                self.cursor.hit = None;
                None
            }
        };
    }

    /// Dispatches one voice command and returns what it asks to send.
    pub fn command(&mut self, text: &str) -> Vec<Outgoing> {
        self.command_count += 1;
        let effects = self.modes.dispatch_text(text, &self.operator);
        if effects.iter().any(Effect::is_rejection) {
            self.rejection_count += 1;
        }
        effects.into_iter().map(|fx| self.effect(fx)).collect()
    }

    fn effect(&mut self, fx: Effect) -> Outgoing {
        match fx {
            Effect::Command(msg) => Outgoing::Publish(json_envelope(msgs::HOLO_COMMAND, &msg)),
            Effect::GripperAngle(angle) => Outgoing::Call {
                name: msgs::SVC_GRIPPER_ANGLE_OPEN.into(),
                body: serde_json::to_vec(&GripperAngleRequest { angle }).expect("plain struct"),
            },
            Effect::Ui(ev) => {
                match &ev {
                    UiEvent::MarkerPlaced { pos } => self.place_marker(*pos),
                    UiEvent::MarkerRemoved => {
                        if let Some(id) = self.marker.take() {
                            self.mesh.move_object(id, Vec3::new(0.0, -1e6, 0.0)).expect("marker registered");
                        }
                    }
                    _ => {}
                }
                Outgoing::Publish(json_envelope(msgs::UI_EVENTS, &ev))
            }
        }
    }

    fn place_marker(&mut self, pos: Vec3) {
        match self.marker {
            Some(id) => self.mesh.move_object(id, pos).expect("marker registered"),
            None => self.marker = Some(self.mesh.add_box(Aabb::centered(pos, MARKER_HALF_SIZE), true)),
        }
    }

    /// One frame: due timeline events, head motion, gaze cursor, queued
    /// commands, then the mode machine's periodic publication.
    pub fn tick(&mut self, now: SimTime) -> Vec<Outgoing> {
        let mut commands = Vec::new();
        while let Some((t, ev)) = self.timeline.get(self.next_event).cloned() {
            if t > now {
                break;
            }
            self.apply_event(&ev, now, &mut commands);
            self.next_event += 1;
        }
        self.advance_glide(now);
        self.sync_operator();
        self.update_cursor();
        let mut out: Vec<Outgoing> = commands.iter().flat_map(|c| self.command(c)).collect();
        out.extend(self.modes.tick(&self.operator, now).into_iter().map(Outgoing::Publish));
        out
    }
}

fn to_unity(headset_from_physical: &Transform, p: Vec3) -> Vec3 {
    convert_point(headset_from_physical.apply_point(p), ROS, UNITY)
}

/// Axis-aligned bound of a physical box seen in the headset world. Exact
/// when the headset world is yawed by a multiple of 90°.
fn to_headset_box(headset_from_physical: &Transform, min: Vec3, max: Vec3) -> Aabb {
    let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = -lo;
    for i in 0..8 {
        let c = Vec3::new(
            if i & 1 == 0 { min.x } else { max.x },
            if i & 2 == 0 { min.y } else { max.y },
            if i & 4 == 0 { min.z } else { max.z },
        );
        let p = to_unity(headset_from_physical, c);
        lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
        hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
    }
    Aabb { min: lo, max: hi }
}

/// Robot state sampled once per simulated second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    /// x, y, yaw.
    pub body: [f64; 3],
    /// Hand position in the world.
    pub hand: [f64; 3],
    pub gripper_open: f64,
    pub posture: String,
}

#[derive(Debug, Default)]
pub struct RobotOutput {
    pub publish: Vec<Envelope>,
    pub replies: Vec<(ServiceRequest, Result<Vec<u8>, ServiceFault>)>,
    pub done: bool,
}

/// Robot side: the simulated robot plus the run's ground-truth metrics.
#[derive(Debug)]
pub struct RobotSim {
    robot: Robot,
    success: Success,
    dt: SimTime,
    hasher: Sha256,
    pub checkpoints: Vec<Checkpoint>,
    pub rejections: BTreeMap<String, u64>,
    pub completed_at: Option<SimTime>,
}

impl RobotSim {
    pub fn new(scenario: &Scenario, anchors: SharedRegistry) -> Self {
        let spec = &scenario.robot;
        let defaults = RobotConfig::default();
        let config = RobotConfig {
            v_max: spec.v_max.unwrap_or(defaults.v_max),
            omega_max: spec.omega_max.unwrap_or(defaults.omega_max),
            telemetry_hz: spec.telemetry_hz.unwrap_or(defaults.telemetry_hz),
            workspace_radius: spec.workspace_radius.unwrap_or(defaults.workspace_radius),
            dt: scenario.dt,
            initial_body: spec.pose.transform(),
            ..defaults
        };
        let mut robot = Robot::new(config, anchors);
        robot.set_anchor_error(scenario.anchor.error.map(|e| e.transform()));
        Self {
            robot,
            success: scenario.success,
            dt: SimTime::from_secs(scenario.dt),
            hasher: Sha256::new(),
            checkpoints: Vec::new(),
            rejections: BTreeMap::new(),
            completed_at: None,
        }
    }

    pub fn robot(&self) -> &Robot {
        &self.robot
    }

    pub fn robot_mut(&mut self) -> &mut Robot {
        &mut self.robot
    }

    pub fn succeeded(&self) -> bool {
        let st = self.robot.state();
        match self.success {
            Success::BodyWithin(r) => {
                let p = st.body.pos;
                (p.x - r.point[0]).hypot(p.y - r.point[1]) <= r.radius
            }
            Success::HandWithin(r) => st.hand_world().pos.distance(r.point.into()) <= r.radius,
        }
    }

    /// Handles the envelopes the headset sent for the tick starting at
    /// `now`, then advances the robot by one step.
    pub fn tick(&mut self, now: SimTime, inbound: Vec<Envelope>) -> RobotOutput {
        let mut out = RobotOutput::default();
        for env in inbound {
            match self.robot.handle_envelope(&env) {
                Handled::Reply { request, result } => {
                    if result.is_err() {
                        *self.rejections.entry(env.topic.clone()).or_default() += 1;
                    }
                    out.replies.push((request, result));
                }
                Handled::Rejected { topic, .. } => *self.rejections.entry(topic).or_default() += 1,
                Handled::Done | Handled::Ignored => {}
            }
        }
        out.publish = self.robot.publish_telemetry(now);
        self.robot.step(self.dt);
        let end = now + self.dt;

        let mut bytes = Vec::with_capacity(128);
        self.robot.digest_bytes(&mut bytes);
        self.hasher.update(&bytes);
        if end.as_nanos() % 1_000_000_000 == 0 {
            self.checkpoints.push(self.checkpoint(end));
        }
        if self.completed_at.is_none() && self.succeeded() {
            self.completed_at = Some(end);
        }
        out.done = self.completed_at.is_some();
        out
    }

    pub fn checkpoint(&self, at: SimTime) -> Checkpoint {
        let st = self.robot.state();
        let hand = st.hand_world().pos;
        Checkpoint {
            t: at.as_secs(),
            body: [st.body.pos.x, st.body.pos.y, st.body.rot.yaw()],
            hand: hand.to_array(),
            gripper_open: st.gripper_open,
            posture: st.posture.to_string(),
        }
    }

    pub fn trajectory_hash(&self) -> String {
        format!("{:x}", self.hasher.clone().finalize())
    }
}
