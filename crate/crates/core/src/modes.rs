//! Operator-side mode machine.
//!
//! One [`ModeContext`] holds the current operation mode (follow, select or
//! arm) and whether it is active. Voice commands go through
//! [`ModeContext::dispatch`]; [`ModeContext::tick`] runs once per frame and
//! publishes the current mode's pose when its rate gate opens.
//!
//! Gating table:
//!
//! | token                                   | accepted in          |
//! |-----------------------------------------|----------------------|
//! | robot basics, `come here`, mode switches, help | any mode      |
//! | `activate`, `terminate`                 | follow, select, arm  |
//! | `select item`, `delete selection`       | select               |
//! | `grasp`, `rotate hand`, `stop rotate hand`, `visualize on/off` | arm |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{Envelope, RateGate};
use crate::clock::SimTime;
use crate::frames::{to_anchor_local, AnchorRecord};
use crate::geometry::{
    compose, convert_point, convert_transform, head_to_hand, init_vrobot, invert, Convention, Quat, Transform, Vec3,
};
use crate::msgs::{self, ArmPoseMsg, CommandMsg, TargetMsg, UiEvent};

pub const GRIPPER_OPEN_ANGLE: f64 = 1.57;
pub const GRIPPER_CLOSED_ANGLE: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandToken {
    Sit,
    Stand,
    PowerOn,
    PowerOff,
    Claim,
    Release,
    SelfRight,
    RollOverLeft,
    RollOverRight,
    SpinLeft,
    SpinRight,
    ComeHere,
    FollowMode,
    SelectMode,
    ArmMode,
    Activate,
    Terminate,
    SelectItem,
    DeleteSelection,
    VisualizeOn,
    VisualizeOff,
    RotateHand,
    StopRotateHand,
    Grasp,
    ShowHelp,
    HideHelp,
}

impl CommandToken {
    pub const ALL: [CommandToken; 26] = [
        CommandToken::Sit,
        CommandToken::Stand,
        CommandToken::PowerOn,
        CommandToken::PowerOff,
        CommandToken::Claim,
        CommandToken::Release,
        CommandToken::SelfRight,
        CommandToken::RollOverLeft,
        CommandToken::RollOverRight,
        CommandToken::SpinLeft,
        CommandToken::SpinRight,
        CommandToken::ComeHere,
        CommandToken::FollowMode,
        CommandToken::SelectMode,
        CommandToken::ArmMode,
        CommandToken::Activate,
        CommandToken::Terminate,
        CommandToken::SelectItem,
        CommandToken::DeleteSelection,
        CommandToken::VisualizeOn,
        CommandToken::VisualizeOff,
        CommandToken::RotateHand,
        CommandToken::StopRotateHand,
        CommandToken::Grasp,
        CommandToken::ShowHelp,
        CommandToken::HideHelp,
    ];

    pub fn phrase(self) -> &'static str {
        use CommandToken::*;
        match self {
            Sit => "sit",
            Stand => "stand",
            PowerOn => "power on",
            PowerOff => "power off",
            Claim => "claim",
            Release => "release",
            SelfRight => "self right",
            RollOverLeft => "roll over left",
            RollOverRight => "roll over right",
            SpinLeft => "spin left",
            SpinRight => "spin right",
            ComeHere => "come here",
            FollowMode => "follow mode",
            SelectMode => "select mode",
            ArmMode => "arm mode",
            Activate => "activate",
            Terminate => "terminate",
            SelectItem => "select item",
            DeleteSelection => "delete selection",
            VisualizeOn => "visualize on",
            VisualizeOff => "visualize off",
            RotateHand => "rotate hand",
            StopRotateHand => "stop rotate hand",
            Grasp => "grasp",
            ShowHelp => "show help",
            HideHelp => "hide help",
        }
    }

    /// Commands forwarded to the robot as-is.
    pub fn is_robot_basic(self) -> bool {
        use CommandToken::*;
        matches!(
            self,
            Sit | Stand
                | PowerOn
                | PowerOff
                | Claim
                | Release
                | SelfRight
                | RollOverLeft
                | RollOverRight
                | SpinLeft
                | SpinRight
                | ComeHere
        )
    }

    /// Modes in which the token is accepted; `None` means any mode.
    pub fn allowed_in(self) -> Option<&'static [ModeId]> {
        use CommandToken::*;
        const OPERATING: &[ModeId] = &[ModeId::Follow, ModeId::Select, ModeId::Arm];
        match self {
            Activate | Terminate => Some(OPERATING),
            SelectItem | DeleteSelection => Some(&[ModeId::Select]),
            VisualizeOn | VisualizeOff | RotateHand | StopRotateHand | Grasp => Some(&[ModeId::Arm]),
            _ => None,
        }
    }
}

impl fmt::Display for CommandToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phrase())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unrecognized command '{0}'")]
pub struct UnknownCommand(pub String);

/// Exact match after lowercasing and collapsing whitespace.
impl FromStr for CommandToken {
    type Err = UnknownCommand;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        CommandToken::ALL
            .into_iter()
            .find(|t| t.phrase() == norm)
            .ok_or_else(|| UnknownCommand(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeId {
    None,
    Follow,
    Select,
    Arm,
}

impl ModeId {
    pub const ALL: [ModeId; 4] = [ModeId::None, ModeId::Follow, ModeId::Select, ModeId::Arm];

    pub fn name(self) -> &'static str {
        match self {
            ModeId::None => "none",
            ModeId::Follow => "follow",
            ModeId::Select => "select",
            ModeId::Arm => "arm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    UnknownCommand,
    NoModeSelected,
    WrongMode,
    NoCursor,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::UnknownCommand => "unknown_command",
            RejectReason::NoModeSelected => "no_mode_selected",
            RejectReason::WrongMode => "wrong_mode",
            RejectReason::NoCursor => "no_cursor",
        }
    }
}

/// Something a command asks the outside world to do.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    /// Publish on `/holo/command`.
    Command(CommandMsg),
    /// Call `/spot/gripper_angle_open`.
    GripperAngle(f64),
    /// Publish on `/ui/events`.
    Ui(UiEvent),
}

impl Effect {
    pub fn is_rejection(&self) -> bool {
        matches!(self, Effect::Ui(UiEvent::Rejected { .. }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModesConfig {
    /// Initial hand pose in the robot body frame (robot convention).
    pub hand_offset: Transform,
    pub follow_period: f64,
    pub select_period: f64,
    pub arm_period: f64,
    /// Gripper roll rate per radian of head tilt beyond the dead zone, 1/s.
    pub gripper_gain: f64,
    pub gripper_deadzone: f64,
}

impl Default for ModesConfig {
    fn default() -> Self {
        Self {
            hand_offset: Transform::from_translation(Vec3::new(0.9, 0.0, 0.2), Convention::RosRhZup),
            follow_period: 0.5,
            select_period: 0.5,
            arm_period: 0.5,
            gripper_gain: 1.0,
            gripper_deadzone: 5f64.to_radians(),
        }
    }
}

/// What the headset senses this frame.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorState {
    /// Head pose in the headset world.
    pub world_head: Transform,
    /// Gaze hit on the world mesh, headset world; `None` on a miss.
    pub gaze_cursor: Option<Vec3>,
    /// Head tilt in radians, positive to the right.
    pub head_roll: f64,
}

impl Default for OperatorState {
    fn default() -> Self {
        Self { world_head: Transform::identity(Convention::UnityLhYup), gaze_cursor: None, head_roll: 0.0 }
    }
}

/// Gripper roll rate from head tilt: zero inside the dead zone, linear outside.
pub fn gripper_rotation_rate(head_roll: f64, gain: f64, deadzone: f64) -> f64 {
    if head_roll.abs() > deadzone {
        gain * (head_roll - deadzone * head_roll.signum())
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeContext {
    config: ModesConfig,
    current: ModeId,
    active: bool,
    /// Selected point in the headset world.
    selection: Option<Vec3>,
    /// Virtual robot seen from the head, saved when arm control stops.
    stored_head_vrobot: Option<Transform>,
    world_vrobot: Option<Transform>,
    rotating_gripper: bool,
    grasp_open: bool,
    gripper_roll: f64,
    visualize: bool,
    help_visible: bool,
    follow_gate: RateGate,
    select_gate: RateGate,
    arm_gate: RateGate,
    last_tick: Option<SimTime>,
    anchor: Option<AnchorRecord>,
    warned_no_anchor: bool,
    last_hand: Option<Transform>,
}

impl ModeContext {
    pub fn new(config: ModesConfig) -> Result<Self, crate::bus::BusError> {
        Ok(Self {
            follow_gate: RateGate::new(config.follow_period)?,
            select_gate: RateGate::new(config.select_period)?,
            arm_gate: RateGate::new(config.arm_period)?,
            config,
            current: ModeId::None,
            active: false,
            selection: None,
            stored_head_vrobot: None,
            world_vrobot: None,
            rotating_gripper: false,
            grasp_open: false,
            gripper_roll: 0.0,
            visualize: false,
            help_visible: false,
            last_tick: None,
            anchor: None,
            warned_no_anchor: false,
            last_hand: None,
        })
    }

    pub fn config(&self) -> &ModesConfig {
        &self.config
    }

    pub fn current(&self) -> ModeId {
        self.current
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn selection(&self) -> Option<Vec3> {
        self.selection
    }

    pub fn stored_head_vrobot(&self) -> Option<&Transform> {
        self.stored_head_vrobot.as_ref()
    }

    pub fn world_vrobot(&self) -> Option<&Transform> {
        self.world_vrobot.as_ref()
    }

    pub fn rotating_gripper(&self) -> bool {
        self.rotating_gripper
    }

    pub fn grasp_open(&self) -> bool {
        self.grasp_open
    }

    pub fn gripper_roll(&self) -> f64 {
        self.gripper_roll
    }

    pub fn visualize(&self) -> bool {
        self.visualize
    }

    pub fn help_visible(&self) -> bool {
        self.help_visible
    }

    pub fn anchor(&self) -> Option<&AnchorRecord> {
        self.anchor.as_ref()
    }

    /// Last hand pose published in arm mode, robot convention.
    pub fn last_hand(&self) -> Option<&Transform> {
        self.last_hand.as_ref()
    }

    /// Sets the anchor that outbound positions are expressed against. Its
    /// pose is in the headset world, robot convention.
    pub fn set_anchor(&mut self, anchor: AnchorRecord) {
        self.anchor = Some(anchor);
        self.warned_no_anchor = false;
    }

    pub fn clear_anchor(&mut self) {
        self.anchor = None;
    }

    fn mode_event(&self) -> Effect {
        Effect::Ui(UiEvent::ModeChanged { mode: self.current.name().into(), active: self.active })
    }

    fn reject(text: &str, reason: RejectReason) -> Vec<Effect> {
        vec![Effect::Ui(UiEvent::Rejected { text: text.to_owned(), reason: reason.code().to_owned() })]
    }

    /// Parses free text and dispatches it; unknown text is rejected whole.
    pub fn dispatch_text(&mut self, text: &str, operator: &OperatorState) -> Vec<Effect> {
        match text.parse::<CommandToken>() {
            Ok(token) => self.dispatch(token, operator),
            Err(_) => Self::reject(text.trim(), RejectReason::UnknownCommand),
        }
    }

    pub fn dispatch(&mut self, token: CommandToken, operator: &OperatorState) -> Vec<Effect> {
        use CommandToken::*;
        if let Some(allowed) = token.allowed_in() {
            if !allowed.contains(&self.current) {
                let reason =
                    if self.current == ModeId::None { RejectReason::NoModeSelected } else { RejectReason::WrongMode };
                return Self::reject(token.phrase(), reason);
            }
        }
        if token == SelectItem && operator.gaze_cursor.is_none() {
            return Self::reject(token.phrase(), RejectReason::NoCursor);
        }

        let mut fx = vec![Effect::Ui(UiEvent::Tooltip { text: token.phrase().to_owned() })];
        match token {
            ComeHere => fx.extend(self.come_here(operator)),
            t if t.is_robot_basic() => fx.push(Effect::Command(CommandMsg::plain(t.phrase()))),
            FollowMode => fx.extend(self.change_mode(ModeId::Follow, operator)),
            SelectMode => fx.extend(self.change_mode(ModeId::Select, operator)),
            ArmMode => fx.extend(self.change_mode(ModeId::Arm, operator)),
            Activate => {
                if !self.active {
                    match self.current {
                        ModeId::Arm => self.arm_activate(operator),
                        ModeId::Follow => {
                            self.follow_gate.reset();
                            self.active = true;
                        }
                        ModeId::Select => {
                            self.select_gate.reset();
                            self.active = true;
                        }
                        ModeId::None => unreachable!("gated above"),
                    }
                }
                fx.push(self.mode_event());
            }
            Terminate => {
                fx.extend(self.deactivate(operator));
                fx.push(self.mode_event());
            }
            SelectItem => {
                let pos = operator.gaze_cursor.expect("checked above");
                self.selection = Some(pos);
                self.select_gate.reset();
                fx.push(Effect::Ui(UiEvent::MarkerPlaced { pos }));
            }
            DeleteSelection => {
                if self.selection.take().is_some() {
                    fx.push(Effect::Ui(UiEvent::MarkerRemoved));
                    if self.active {
                        fx.push(Effect::Command(CommandMsg::plain("stop")));
                    }
                }
            }
            Grasp => {
                self.grasp_open = !self.grasp_open;
                let angle = if self.grasp_open { GRIPPER_OPEN_ANGLE } else { GRIPPER_CLOSED_ANGLE };
                fx.push(Effect::GripperAngle(angle));
            }
            RotateHand => self.rotating_gripper = true,
            StopRotateHand => self.rotating_gripper = false,
            VisualizeOn | VisualizeOff => {
                self.visualize = token == VisualizeOn;
                fx.push(Effect::Ui(UiEvent::Visualize { visible: self.visualize }));
            }
            ShowHelp | HideHelp => {
                self.help_visible = token == ShowHelp;
                fx.push(Effect::Ui(UiEvent::Help { visible: self.help_visible }));
            }
            _ => unreachable!("all tokens handled"),
        }
        fx
    }

    fn come_here(&self, operator: &OperatorState) -> Vec<Effect> {
        match &self.anchor {
            Some(anchor) => {
                let head = convert_point(operator.world_head.pos, operator.world_head.convention, Convention::RosRhZup);
                vec![Effect::Command(CommandMsg {
                    cmd: CommandToken::ComeHere.phrase().into(),
                    pos: Some(to_anchor_local(anchor, head)),
                    anchor_id: Some(anchor.id.clone()),
                })]
            }
            None => vec![
                Effect::Command(CommandMsg::plain(CommandToken::ComeHere.phrase())),
                Effect::Ui(UiEvent::Warning { text: "no anchor: come here sent without a position".into() }),
            ],
        }
    }

    /// Switching modes ends the previous mode's activation first.
    fn change_mode(&mut self, to: ModeId, operator: &OperatorState) -> Vec<Effect> {
        if self.current == to {
            return vec![self.mode_event()];
        }
        let mut fx = self.deactivate(operator);
        if self.current == ModeId::Arm {
            self.rotating_gripper = false;
        }
        self.current = to;
        fx.push(self.mode_event());
        fx
    }

    fn deactivate(&mut self, operator: &OperatorState) -> Vec<Effect> {
        if !self.active {
            return Vec::new();
        }
        match self.current {
            ModeId::Arm => {
                self.arm_terminate(operator);
                Vec::new()
            }
            ModeId::Follow | ModeId::Select => {
                self.active = false;
                vec![Effect::Command(CommandMsg::plain("stop"))]
            }
            ModeId::None => Vec::new(),
        }
    }

    fn hand_offset_headset(&self, convention: Convention) -> Transform {
        convert_transform(&self.config.hand_offset, convention)
    }

    /// Places the virtual robot: at the configured hand offset the first
    /// time, otherwise where it sat relative to the head when arm control
    /// last stopped.
    pub fn arm_activate(&mut self, operator: &OperatorState) {
        let head = &operator.world_head;
        let vrobot = match &self.stored_head_vrobot {
            None => init_vrobot(head, &self.hand_offset_headset(head.convention)),
            Some(stored) => compose(head, &convert_transform(stored, head.convention)),
        }
        .expect("same convention by construction");
        self.world_vrobot = Some(vrobot);
        self.arm_gate.reset();
        self.active = true;
    }

    /// Freezes the arm and remembers the virtual robot relative to the head.
    pub fn arm_terminate(&mut self, operator: &OperatorState) {
        if let Some(vrobot) = &self.world_vrobot {
            let head = &operator.world_head;
            let vrobot = convert_transform(vrobot, head.convention);
            self.stored_head_vrobot = Some(compose(&invert(head), &vrobot).expect("same convention"));
        }
        self.active = false;
    }

    /// Commanded hand pose in the robot body frame, robot convention,
    /// including the accumulated gripper roll about the hand's forward axis.
    pub fn commanded_hand(&self, operator: &OperatorState) -> Option<Transform> {
        let vrobot = convert_transform(self.world_vrobot.as_ref()?, operator.world_head.convention);
        let hand = head_to_hand(&operator.world_head, &vrobot).ok()?;
        let mut hand = convert_transform(&hand, Convention::RosRhZup);
        hand.rot = hand.rot * Quat::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), self.gripper_roll);
        Some(hand)
    }

    /// Per-frame update: integrates gripper roll and publishes the active
    /// mode's pose when its rate gate opens.
    pub fn tick(&mut self, operator: &OperatorState, now: SimTime) -> Vec<Envelope> {
        let dt = self.last_tick.map(|t| now.saturating_sub(t).as_secs()).unwrap_or(0.0);
        self.last_tick = Some(now);
        if self.current == ModeId::Arm && self.active && self.rotating_gripper {
            let rate = gripper_rotation_rate(operator.head_roll, self.config.gripper_gain, self.config.gripper_deadzone);
            self.gripper_roll += rate * dt;
        }
        if !self.active {
            return Vec::new();
        }
        let Some(anchor) = self.anchor.clone() else {
            if self.warned_no_anchor {
                return Vec::new();
            }
            self.warned_no_anchor = true;
            let ev = UiEvent::Warning { text: "no anchor established; not publishing".into() };
            return vec![json_envelope(msgs::UI_EVENTS, &ev)];
        };
        let anchor_local = |world: Vec3| {
            to_anchor_local(&anchor, convert_point(world, operator.world_head.convention, Convention::RosRhZup))
        };
        match self.current {
            ModeId::Follow => {
                let Some(cursor) = operator.gaze_cursor else { return Vec::new() };
                if !self.follow_gate.allow(now) {
                    return Vec::new();
                }
                let msg = TargetMsg { anchor_id: anchor.id.clone(), pos: anchor_local(cursor) };
                vec![json_envelope(msgs::HOLO_FOLLOW_POSE, &msg)]
            }
            ModeId::Select => {
                let Some(sel) = self.selection else { return Vec::new() };
                if !self.select_gate.allow(now) {
                    return Vec::new();
                }
                let msg = TargetMsg { anchor_id: anchor.id.clone(), pos: anchor_local(sel) };
                vec![json_envelope(msgs::HOLO_SELECT_POSE, &msg)]
            }
            ModeId::Arm => {
                if !self.arm_gate.allow(now) {
                    return Vec::new();
                }
                let Some(hand) = self.commanded_hand(operator) else { return Vec::new() };
                self.last_hand = Some(hand);
                let msg = ArmPoseMsg { anchor_id: anchor.id.clone(), pos: hand.pos, quat: hand.rot };
                vec![json_envelope(msgs::HOLO_ARM_POSE, &msg)]
            }
            ModeId::None => Vec::new(),
        }
    }
}

pub(crate) fn json_envelope<T: Serialize>(topic: &str, msg: &T) -> Envelope {
    Envelope::new(topic, serde_json::to_vec(msg).expect("message types serialize"))
}
